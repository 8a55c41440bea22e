//! Experiment configuration, metrics and orchestration.
//!
//! An experiment is one TOML file: algorithm id, `[topology]`, `[dataset]`
//! and a flat `[params]` table of numeric hyperparameters. Every
//! repetition/fold runs independently from seeds derived with [`sub_seed`],
//! so results do not depend on scheduling or thread count.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{build_mixing, dac_run_tracked, DacConfig, MixingMatrix, MixingStrategy};
use crate::datagen::{self, Metadata, Sequence, Table, TabularDataset};
use crate::edm_ssl::{self, ExchangeConfig, SslPartition};
use crate::error::{invalid, Error, Result};
use crate::esn::{self, EsnConfig};
use crate::netgraph::{self, AgentNetwork};
use crate::rvfl::{self, AdmmConfig, AdmmTraceRow, FeatureShard, Penalty, RvflParams};
use crate::s3vm::{self, S3vmProblem, S3vmRun, S3vmShard};
use crate::saf::{self, DiffusionOrder, SafState};
use crate::{rng_from_seed, sub_seed, Mat, Vector};

/// `sqrt(Σ(p−t)² / (|T|·var(t)))` with the population variance.
pub fn nrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return invalid("prediction and truth lengths differ or are empty");
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Numeric("NRMSE undefined for constant targets".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / (n * var)).sqrt())
}

/// Shuffled `0..n` cut into `k` disjoint folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return invalid(format!("cannot cut {n} samples into {k} folds"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for s in datagen::split_sizes(n, k) {
        out.push(idx[start..start + s].to_vec());
        start += s;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Dac,
    Rvfl,
    Esn,
    Saf,
    LapKrr,
    S3vm,
}

/// `(id, family)` for every runnable algorithm.
pub const ALGORITHMS: &[(&str, Family)] = &[
    ("dac", Family::Dac),
    ("centralized_rvfl", Family::Rvfl),
    ("local_rvfl", Family::Rvfl),
    ("cons_rvfl", Family::Rvfl),
    ("admm_rvfl", Family::Rvfl),
    ("s_cons_rvfl", Family::Rvfl),
    ("vp_admm_rvfl", Family::Rvfl),
    ("esn_centralized", Family::Esn),
    ("local_esn", Family::Esn),
    ("admm_esn", Family::Esn),
    ("l1_esn", Family::Esn),
    ("dsaf", Family::Saf),
    ("nc_saf", Family::Saf),
    ("dlms", Family::Saf),
    ("nc_lms", Family::Saf),
    ("lapkrr_centralized", Family::LapKrr),
    ("distr_lapkrr", Family::LapKrr),
    ("local_lapkrr", Family::LapKrr),
    ("s3vm_centralized", Family::S3vm),
    ("s3vm_supervised", Family::S3vm),
    ("dgd_s3vm", Family::S3vm),
    ("next_s3vm", Family::S3vm),
];

pub const TOPOLOGIES: &[&str] = &["erdos_renyi", "complete", "linear", "small_world", "scale_free", "edge_list"];

/// `(id, families that accept it)`
pub const DATASETS: &[(&str, &[Family])] = &[
    ("random_vectors", &[Family::Dac]),
    ("two_gaussian", &[Family::Rvfl, Family::LapKrr, Family::S3vm]),
    ("two_gaussian_rotated", &[Family::Rvfl, Family::LapKrr, Family::S3vm]),
    ("two_moons", &[Family::Rvfl, Family::LapKrr, Family::S3vm]),
    ("csv", &[Family::Rvfl, Family::LapKrr, Family::S3vm]),
    ("narma10", &[Family::Esn]),
    ("mackey_glass", &[Family::Esn]),
    ("lorenz", &[Family::Esn]),
    ("extpoly", &[Family::Esn]),
    ("wiener", &[Family::Saf]),
    ("wiener_strong", &[Family::Saf]),
];

/// A documented hyperparameter: `(name, default, min, max)`, bounds inclusive.
type ParamSpec = (&'static str, f64, f64, f64);

const DAC_PARAMS: &[ParamSpec] = &[("max_iters", 300.0, 1.0, 1e6), ("delta", 1e-6, 0.0, 1.0)];

const RVFL_PARAMS: &[ParamSpec] = &[
    ("hidden", 500.0, 1.0, 1e5),
    ("lambda", 8.0, 1e-12, 1e12),
    ("weight_range", 1.0, 1e-6, 1e3),
    ("gamma", 1.0, 1e-9, 1e9),
    ("max_iters", 300.0, 1.0, 1e6),
    ("eps_abs", 1e-3, 0.0, 1.0),
    ("eps_rel", 1e-3, 0.0, 1.0),
    ("rho", 1.0, 1e-9, 1e9),
    ("chunks", 5.0, 1.0, 1e5),
    ("dac_iters", 300.0, 1.0, 1e6),
    ("dac_delta", 1e-12, 0.0, 1.0),
];

const ESN_PARAMS: &[ParamSpec] = &[
    ("reservoir", 300.0, 1.0, 1e4),
    ("spectral_radius", 0.9, 1e-6, 2.0),
    ("alpha_i", 0.5, 0.0, 10.0),
    ("alpha_t", 0.1, 0.0, 10.0),
    ("alpha_f", 0.3, 0.0, 10.0),
    ("density", 0.25, 1e-6, 1.0),
    ("noise", 1e-3, 0.0, 1.0),
    ("washout", 100.0, 0.0, 1e6),
    ("lambda", 0.125, 1e-12, 1e12),
    ("gamma", 0.01, 1e-9, 1e9),
    ("max_iters", 400.0, 1.0, 1e6),
    ("eps_abs", 1e-4, 0.0, 1.0),
    ("eps_rel", 1e-4, 0.0, 1.0),
];

const SAF_PARAMS: &[ParamSpec] = &[
    ("taps", 4.0, 1.0, 1e3),
    ("knots", 21.0, 5.0, 1e3),
    ("dx", 0.2, 1e-6, 1e3),
    ("mu_min", 0.05, 0.0, 10.0),
    ("mu_max", 0.2, 0.0, 10.0),
    ("steady_frac", 0.1, 1e-6, 1.0),
    ("stride", 250.0, 1.0, 1e9),
    ("atc", 0.0, 0.0, 1.0),
];

const LAPKRR_PARAMS: &[ParamSpec] = &[
    ("gamma_a", 0.03125, 1e-12, 1e12),
    ("gamma_i", 4.0, 0.0, 1e12),
    ("nn", 6.0, 1.0, 1e4),
    ("sigma_k", 0.2, 1e-9, 1e9),
    ("q", 1.0, 1.0, 10.0),
    ("eta", 3e-4, 1e-12, 1.0),
    ("rank", 2.0, 1.0, 1e3),
    ("completion_iters", 1500.0, 1.0, 1e6),
    ("p1", 0.035, 0.0, 1.0),
    ("n1", 100.0, 0.0, 1e6),
    ("p2", 0.035, 0.0, 1.0),
    ("n2", 100.0, 0.0, 1e6),
];

const S3VM_PARAMS: &[ParamSpec] = &[
    ("c1", 1.0, 0.0, 1e6),
    ("c2", 1.0, 0.0, 1e6),
    ("s", 5.0, 1e-6, 1e3),
    ("r", 0.5, 0.0, 1.0),
    ("alpha0", 1.0, 1e-9, 1e3),
    ("delta", 0.55, 0.0, 1.0),
    ("max_rounds", 500.0, 1.0, 1e6),
    ("grad_tol", 1e-5, 0.0, 1.0),
    ("report_tol", 1e-3, 0.0, 1.0),
    ("inner_iters", 50.0, 1.0, 1e5),
    ("inner_tol", 1e-5, 0.0, 1.0),
];

fn param_specs(f: Family) -> &'static [ParamSpec] {
    match f {
        Family::Dac => DAC_PARAMS,
        Family::Rvfl => RVFL_PARAMS,
        Family::Esn => ESN_PARAMS,
        Family::Saf => SAF_PARAMS,
        Family::LapKrr => LAPKRR_PARAMS,
        Family::S3vm => S3VM_PARAMS,
    }
}

pub fn algorithm_family(id: &str) -> Option<Family> {
    ALGORITHMS.iter().find(|(a, _)| *a == id).map(|(_, f)| *f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    #[default]
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: String,
    pub agents: usize,
    /// edge probability (Erdős–Rényi)
    pub p: f64,
    /// successors (linear) or ring neighbors (small world)
    pub k: usize,
    /// rewiring probability (small world)
    pub alpha: f64,
    /// attachments per new node (scale free)
    pub m: usize,
    pub mixing: MixingStrategy,
    /// edge-list file for `edge_list`
    pub path: Option<String>,
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec {
            kind: "erdos_renyi".into(),
            agents: 8,
            p: 0.5,
            k: 2,
            alpha: 0.1,
            m: 2,
            mixing: MixingStrategy::MetropolisHastings,
            path: None,
        }
    }
}

impl TopologySpec {
    pub fn validate(&self) -> Result<()> {
        if !TOPOLOGIES.contains(&self.kind.as_str()) {
            return cfg_err(format!("unknown topology '{}'; expected one of {TOPOLOGIES:?}", self.kind));
        }
        if self.agents == 0 || self.agents > 10_000 {
            return cfg_err("topology.agents must lie in 1..=10000");
        }
        if !(self.p > 0.0 && self.p <= 1.0) || !(0.0..=1.0).contains(&self.alpha) {
            return cfg_err("topology.p must lie in (0,1] and topology.alpha in [0,1]");
        }
        if self.kind == "edge_list" && self.path.is_none() {
            return cfg_err("edge_list topology needs a path");
        }
        Ok(())
    }

    /// Builds the graph. A single agent always gets the empty graph.
    pub fn build(&self, seed: u64) -> Result<AgentNetwork> {
        if self.agents == 1 && self.kind != "edge_list" {
            return Ok(AgentNetwork::empty(1));
        }
        let l = self.agents;
        match self.kind.as_str() {
            "erdos_renyi" => netgraph::gen_erdos_renyi(l, self.p, seed),
            "complete" => Ok(AgentNetwork::complete(l)),
            "linear" => netgraph::gen_linear(l, self.k),
            "small_world" => netgraph::gen_small_world(l, self.k, self.alpha, seed),
            "scale_free" => netgraph::gen_scale_free(l, self.m, seed),
            "edge_list" => {
                let net = AgentNetwork::load(Path::new(self.path.as_deref().unwrap_or_default()))?;
                if net.n_agents() != l {
                    return invalid(format!("edge list has {} agents, config says {l}", net.n_agents()));
                }
                Ok(net)
            }
            other => invalid(format!("unknown topology '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: String,
    /// samples (tabular) or vector dimension (`random_vectors` uses `d`)
    pub n: usize,
    pub d: usize,
    pub bayes_error: f64,
    /// two-moons jitter
    pub noise: f64,
    /// semi-supervised split; whatever remains of `n` is the test set
    pub labeled: usize,
    pub unlabeled: usize,
    /// separate test draw for S³VM
    pub test: usize,
    pub sequences: usize,
    /// steps per sequence, or samples per agent stream for the Wiener data
    pub length: usize,
    /// Mackey-Glass delay
    pub tau: f64,
    /// extended polynomial degree and lag
    pub degree: usize,
    pub lag: usize,
    /// held-out share when `folds = 1`
    pub test_fraction: f64,
    /// feature scaling fitted on the training split: "symmetric" ([−1,1]), "unit" ([0,1]) or "none"
    pub normalize: String,
    pub path: Option<String>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: "two_gaussian".into(),
            n: 550,
            d: 50,
            bayes_error: 0.05,
            noise: 0.1,
            labeled: 14,
            unlabeled: 186,
            test: 2000,
            sequences: 10,
            length: 500,
            tau: 30.0,
            degree: 3,
            lag: 1,
            test_fraction: 0.3,
            normalize: "symmetric".into(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub algorithm: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "one")]
    pub folds: usize,
    #[serde(default)]
    pub partition: PartitionMode,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn new(algorithm: &str, topology: TopologySpec, dataset: DatasetSpec) -> Self {
        ExperimentConfig {
            name: default_name(),
            algorithm: algorithm.into(),
            seed: 0,
            repetitions: 1,
            folds: 1,
            partition: PartitionMode::Horizontal,
            output: None,
            topology,
            dataset,
            params: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn family(&self) -> Result<Family> {
        algorithm_family(&self.algorithm).ok_or_else(|| {
            let ids: Vec<&str> = ALGORITHMS.iter().map(|(a, _)| *a).collect();
            Error::Config(format!("unknown algorithm '{}'; expected one of {ids:?}", self.algorithm))
        })
    }

    /// Configured value or documented default.
    pub fn param(&self, key: &str) -> f64 {
        if let Some(v) = self.params.get(key) {
            return *v;
        }
        let fam = self.family().expect("validated config");
        param_specs(fam).iter().find(|s| s.0 == key).map(|s| s.1).expect("documented parameter")
    }

    fn uparam(&self, key: &str) -> usize {
        self.param(key).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fam = self.family()?;
        let specs = param_specs(fam);
        for (k, v) in &self.params {
            let Some(&(_, _, lo, hi)) = specs.iter().find(|s| s.0 == k) else {
                let names: Vec<&str> = specs.iter().map(|s| s.0).collect();
                return cfg_err(format!("parameter '{k}' is not used by {}; expected one of {names:?}", self.algorithm));
            };
            if !v.is_finite() || *v < lo || *v > hi {
                return cfg_err(format!("parameter {k} = {v} outside [{lo}, {hi}]"));
            }
        }
        if self.repetitions == 0 || self.folds == 0 {
            return cfg_err("repetitions and folds must be at least 1");
        }
        self.topology.validate()?;
        let ds = &self.dataset;
        match DATASETS.iter().find(|(d, _)| *d == ds.kind) {
            None => {
                let ids: Vec<&str> = DATASETS.iter().map(|(d, _)| *d).collect();
                return cfg_err(format!("unknown dataset '{}'; expected one of {ids:?}", ds.kind));
            }
            Some((_, fams)) if !fams.contains(&fam) => {
                return cfg_err(format!("dataset '{}' cannot feed {}", ds.kind, self.algorithm));
            }
            _ => {}
        }
        if !["symmetric", "unit", "none"].contains(&ds.normalize.as_str()) {
            return cfg_err(format!("unknown normalization '{}'", ds.normalize));
        }
        if ds.kind == "csv" && ds.path.is_none() {
            return cfg_err("csv dataset needs a path");
        }
        if !(ds.test_fraction > 0.0 && ds.test_fraction < 1.0) {
            return cfg_err("dataset.test_fraction must lie in (0,1)");
        }
        if !(ds.bayes_error > 0.0 && ds.bayes_error < 0.5) {
            return cfg_err("dataset.bayes_error must lie in (0,0.5)");
        }
        let tabular_folds = matches!(fam, Family::Rvfl | Family::Esn);
        if self.folds > 1 && !tabular_folds {
            return cfg_err(format!("{} does not support cross-validation; set folds = 1", self.algorithm));
        }
        let vertical_ok = matches!(self.algorithm.as_str(), "vp_admm_rvfl" | "local_rvfl");
        if self.partition == PartitionMode::Vertical && !vertical_ok {
            return cfg_err(format!("{} only supports horizontal partitioning", self.algorithm));
        }
        if self.algorithm == "vp_admm_rvfl" && self.partition != PartitionMode::Vertical {
            return cfg_err("vp_admm_rvfl needs partition = \"vertical\"");
        }
        if fam == Family::Saf && self.param("mu_min") > self.param("mu_max") {
            return cfg_err("mu_min exceeds mu_max");
        }
        if matches!(fam, Family::LapKrr) && ds.labeled + ds.unlabeled >= ds.n && ds.kind != "csv" {
            return cfg_err("labeled + unlabeled must leave test samples out of n");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// records

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One repetition/fold. Wall-clock time lives in `time_s` but is written to a
/// separate file so the JSON-lines records stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub algorithm: String,
    pub repetition: usize,
    pub fold: usize,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip)]
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub algorithm: String,
    pub runs: usize,
    pub failed: usize,
    pub metrics: Vec<MetricSummary>,
}

impl Summary {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.get(metric).map(|m| m.mean)
    }

    /// `metric  mean ± std  (n)` lines.
    pub fn to_table(&self) -> String {
        let mut s = format!("{} [{}]: {} runs, {} failed\n", self.experiment, self.algorithm, self.runs, self.failed);
        for m in &self.metrics {
            s.push_str(&format!("  {:<22} {:>12.6} ± {:<10.6} (n={})\n", m.metric, m.mean, m.std, m.count));
        }
        s
    }
}

/// Mean and sample standard deviation of every metric over successful runs.
/// Non-finite values are skipped.
pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let mut acc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RunStatus::Ok) {
        for (k, v) in &r.metrics {
            if v.is_finite() {
                acc.entry(k.as_str()).or_default().push(*v);
            }
        }
    }
    let metrics = acc
        .into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            MetricSummary { metric: k.to_string(), mean, std, count: v.len() }
        })
        .collect();
    Ok(Summary {
        experiment: first.experiment.clone(),
        algorithm: first.algorithm.clone(),
        runs: records.len(),
        failed: records.iter().filter(|r| r.status == RunStatus::Failed).count(),
        metrics,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

// ---------------------------------------------------------------------------
// orchestration

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TRACE_DIR: &str = "traces";

/// A per-run trace, written as CSV.
pub type Trace = Table;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: BTreeMap<String, f64>,
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    pub out_dir: Option<PathBuf>,
}

/// Runs every repetition/fold in memory without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, Vec<Option<Trace>>)> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.repetitions).flat_map(|r| (0..cfg.folds).map(move |f| (r, f))).collect();
    let results: Vec<(RunRecord, Option<Trace>)> = jobs
        .par_iter()
        .map(|&(rep, fold)| {
            let seed = sub_seed(cfg.seed, rep as u64);
            let t0 = Instant::now();
            let res = execute(cfg, rep, fold);
            let time_s = t0.elapsed().as_secs_f64();
            let mut rec = RunRecord {
                experiment: cfg.name.clone(),
                algorithm: cfg.algorithm.clone(),
                repetition: rep,
                fold,
                seed,
                status: RunStatus::Ok,
                error: None,
                metrics: BTreeMap::new(),
                trace: None,
                time_s,
            };
            match res {
                Ok(out) => {
                    rec.metrics = out.metrics;
                    if out.trace.is_some() {
                        rec.trace = Some(format!("{TRACE_DIR}/rep{rep}_fold{fold}.csv"));
                    }
                    (rec, out.trace)
                }
                Err(e) => {
                    eprintln!("[{}] repetition {rep} fold {fold} failed: {e}", cfg.name);
                    rec.status = RunStatus::Failed;
                    rec.error = Some(e.to_string());
                    (rec, None)
                }
            }
        })
        .collect();
    Ok(results.into_iter().unzip())
}

/// Validates, runs, and writes the config echo, JSON-lines records, CSV
/// traces, timings and summary into `out_dir`. `threads` bounds the worker
/// pool; `None` uses rayon's global pool.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (records, traces) = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run_in_memory(cfg))?,
        None => run_in_memory(cfg)?,
    };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(CONFIG_ECHO), cfg.to_toml()?)?;
    if traces.iter().any(Option::is_some) {
        fs::create_dir_all(out_dir.join(TRACE_DIR))?;
    }
    let mut jl = fs::File::create(out_dir.join(RECORDS_FILE))?;
    let mut tf = fs::File::create(out_dir.join(TIMINGS_FILE))?;
    writeln!(tf, "repetition,fold,time_s")?;
    for (rec, tr) in records.iter().zip(&traces) {
        writeln!(jl, "{}", serde_json::to_string(rec)?)?;
        writeln!(tf, "{},{},{}", rec.repetition, rec.fold, rec.time_s)?;
        if let (Some(name), Some(t)) = (&rec.trace, tr) {
            datagen::save_csv(&out_dir.join(name), t)?;
        }
    }
    let summary = summarize(&records)?;
    fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(ExperimentResult { records, summary, out_dir: Some(out_dir.to_path_buf()) })
}

/// Seeds for one repetition.
struct Seeds {
    data: u64,
    topo: u64,
    model: u64,
    split: u64,
    noise: u64,
}

impl Seeds {
    fn new(base: u64, rep: usize) -> Self {
        let r = sub_seed(base, rep as u64);
        Seeds { data: sub_seed(r, 1), topo: sub_seed(r, 2), model: sub_seed(r, 3), split: sub_seed(r, 4), noise: sub_seed(r, 5) }
    }
}

/// One repetition/fold of the configured algorithm.
pub fn execute(cfg: &ExperimentConfig, rep: usize, fold: usize) -> Result<RunOutcome> {
    let seeds = Seeds::new(cfg.seed, rep);
    let net = cfg.topology.build(seeds.topo)?;
    let mix = build_mixing(&net, cfg.topology.mixing)?;
    match cfg.family()? {
        Family::Dac => run_dac(cfg, &mix, &seeds),
        Family::Rvfl => run_rvfl(cfg, &mix, &seeds, fold),
        Family::Esn => run_esn(cfg, &mix, &seeds, fold),
        Family::Saf => run_saf(cfg, &mix, &seeds),
        Family::LapKrr => run_lapkrr(cfg, &net, &mix, &seeds),
        Family::S3vm => run_s3vm(cfg, &mix, &seeds),
    }
}

fn metrics(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn table(header: &[&str], rows: Vec<Vec<f64>>) -> Trace {
    let w = header.len();
    let data = Mat::from_fn(rows.len(), w, |i, j| rows[i][j]);
    Table { header: header.iter().map(|s| s.to_string()).collect(), data }
}

fn admm_trace(rows: &[AdmmTraceRow]) -> Trace {
    table(
        &["iteration", "objective", "r_norm", "s_norm"],
        rows.iter().map(|r| vec![r.iteration as f64, r.objective, r.r_norm, r.s_norm]).collect(),
    )
}

fn run_dac(cfg: &ExperimentConfig, mix: &MixingMatrix, seeds: &Seeds) -> Result<RunOutcome> {
    let l = mix.n_agents();
    let d = cfg.dataset.d.max(1);
    let mut rng = rng_from_seed(seeds.data);
    let init: Vec<Vector> = (0..l).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
    let mean = crate::consensus::mean_of(&init);
    let res = dac_run_tracked(mix, &init, cfg.uparam("max_iters"), cfg.param("delta"), Some(&mean))?;
    let dev = res.final_states.iter().map(|s| (s - &mean).amax()).fold(0.0, f64::max);
    let trace = table(
        &["iteration", "max_update_norm", "rnd"],
        res.trace.iter().map(|r| vec![r.iteration as f64, r.max_update_norm, r.rnd.unwrap_or(f64::NAN)]).collect(),
    );
    Ok(RunOutcome {
        metrics: metrics(&[
            ("iterations", res.iterations as f64),
            ("converged", f64::from(u8::from(res.converged))),
            ("max_deviation", dev),
            ("spectral_radius", mix.essential_spectral_radius()),
        ]),
        trace: Some(trace),
    })
}

// ---------------------------------------------------------------------------
// tabular data

fn load_tabular(ds: &DatasetSpec, n: usize, seed: u64) -> Result<TabularDataset> {
    match ds.kind.as_str() {
        "two_gaussian" => datagen::gen_two_gaussian(n, ds.d, ds.bayes_error, seed),
        "two_gaussian_rotated" => datagen::gen_two_gaussian_rotated(n, ds.d, ds.bayes_error, seed),
        "two_moons" => datagen::gen_two_moons(n, ds.noise, seed),
        "csv" => {
            let path = ds.path.as_deref().unwrap_or_default();
            datagen::table_to_tabular(&datagen::load_csv(Path::new(path))?, Metadata::new("csv", seed).with("path", path))
        }
        other => invalid(format!("'{other}' is not a tabular dataset")),
    }
}

/// Targets `±1` become classes {0, 1}; anything else is read as a class index.
fn class_labels(y: &Vector) -> Result<(Vec<usize>, usize)> {
    if y.iter().all(|&v| v == 1.0 || v == -1.0) {
        return Ok((y.iter().map(|&v| usize::from(v > 0.0)).collect(), 2));
    }
    if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
        return invalid("class targets must be ±1 or non-negative integers");
    }
    let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    let k = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Ok((labels, k))
}

/// Fits the scaling on the training rows and applies it to both splits.
fn scale(mode: &str, tr: Mat, te: Mat) -> (Mat, Mat) {
    if mode == "none" {
        return (tr, te);
    }
    let norm = datagen::Normalization::fit(&tr);
    let (a, b) = (norm.apply(&tr), norm.apply(&te));
    if mode == "unit" {
        (a.map(|v| 0.5 * (v + 1.0)), b.map(|v| 0.5 * (v + 1.0)))
    } else {
        (a, b)
    }
}

/// Train/test index split for one fold.
fn holdout(n: usize, folds: usize, fold: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let parts = if folds > 1 {
        kfold_split(n, folds, seed)?
    } else {
        let n_test = ((n as f64) * frac).round().clamp(1.0, (n - 1) as f64) as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        vec![idx[..n_test].to_vec(), idx[n_test..].to_vec()]
    };
    let test = parts[fold].clone();
    let train: Vec<usize> = parts.iter().enumerate().filter(|(i, _)| *i != fold).flat_map(|(_, p)| p.clone()).collect();
    Ok((train, test))
}

fn run_rvfl(cfg: &ExperimentConfig, mix: &MixingMatrix, seeds: &Seeds, fold: usize) -> Result<RunOutcome> {
    let ds = load_tabular(&cfg.dataset, cfg.dataset.n, seeds.data)?;
    let n = ds.n_samples();
    if cfg.folds > n {
        return invalid(format!("{} folds for {n} samples", cfg.folds));
    }
    let (tr_idx, te_idx) = holdout(n, cfg.folds, fold, cfg.dataset.test_fraction, seeds.split)?;
    let (labels, n_classes) = class_labels(&ds.y)?;
    let (x_tr, x_te) = scale(&cfg.dataset.normalize, ds.x.select_rows(&tr_idx), ds.x.select_rows(&te_idx));
    let y_tr: Vec<usize> = tr_idx.iter().map(|&i| labels[i]).collect();
    let y_te: Vec<usize> = te_idx.iter().map(|&i| labels[i]).collect();
    let t_tr = rvfl::encode_labels(&y_tr, n_classes);
    let lambda = cfg.param("lambda");
    let wr = cfg.param("weight_range");
    let hidden = cfg.uparam("hidden");
    let l = mix.n_agents();
    let dac = DacConfig { max_iters: cfg.uparam("dac_iters"), delta: cfg.param("dac_delta") };
    let err_of = |params: &RvflParams, beta: &Mat| -> Result<f64> {
        let out = rvfl::predict(params, beta, &x_te)?;
        Ok(rvfl::misclassification(&rvfl::decode_outputs(&out), &y_te))
    };

    if cfg.partition == PartitionMode::Vertical {
        return run_vertical(cfg, mix, seeds, &x_tr, &t_tr, &x_te, &y_te, n_classes, dac);
    }

    let params = RvflParams::new(x_tr.ncols(), hidden, wr, seeds.model);
    let parts = datagen::partition_horizontal(x_tr.nrows(), l, sub_seed(seeds.split, 7))?;
    let shards: Vec<(Mat, Mat)> = parts.iter().map(|p| (x_tr.select_rows(p), t_tr.select_rows(p))).collect();

    match cfg.algorithm.as_str() {
        "centralized_rvfl" => {
            let beta = rvfl::train_centralized(&params, &x_tr, &t_tr, lambda)?;
            Ok(RunOutcome { metrics: metrics(&[("error", err_of(&params, &beta)?)]), trace: None })
        }
        "local_rvfl" => {
            let betas = rvfl::train_local(&params, &shards, lambda)?;
            let mut errs = Vec::with_capacity(l);
            let mut votes = Vec::with_capacity(l);
            for b in &betas {
                let pred = rvfl::decode_outputs(&rvfl::predict(&params, b, &x_te)?);
                errs.push(rvfl::misclassification(&pred, &y_te));
                votes.push(pred);
            }
            let vote = rvfl::misclassification(&rvfl::majority_vote(&votes, n_classes), &y_te);
            let mean = errs.iter().sum::<f64>() / l as f64;
            Ok(RunOutcome { metrics: metrics(&[("error", mean), ("vote_error", vote)]), trace: None })
        }
        "cons_rvfl" => {
            let out = rvfl::cons_rvfl(mix, &shards, &params, lambda, dac)?;
            let errs = out.betas.iter().map(|b| err_of(&params, b)).collect::<Result<Vec<_>>>()?;
            Ok(RunOutcome {
                metrics: metrics(&[
                    ("error", errs.iter().sum::<f64>() / l as f64),
                    ("dac_iterations", out.dac_iterations as f64),
                    ("converged", f64::from(u8::from(out.converged))),
                ]),
                trace: None,
            })
        }
        "admm_rvfl" => {
            let acfg = AdmmConfig {
                lambda,
                gamma: cfg.param("gamma"),
                max_iters: cfg.uparam("max_iters"),
                eps_abs: cfg.param("eps_abs"),
                eps_rel: cfg.param("eps_rel"),
                penalty: Penalty::Ridge,
                dac,
            };
            let out = rvfl::admm_rvfl(mix, &shards, &params, &acfg)?;
            let z = out.solution();
            let designs: Vec<(Mat, Mat)> =
                shards.iter().map(|(x, y)| Ok((params.hidden_matrix(x)?, y.clone()))).collect::<Result<_>>()?;
            let obj = rvfl::consensus_objective(&designs, z, lambda, Penalty::Ridge);
            let opt_beta = rvfl::train_centralized(&params, &x_tr, &t_tr, lambda)?;
            let opt = rvfl::consensus_objective(&designs, &opt_beta, lambda, Penalty::Ridge);
            Ok(RunOutcome {
                metrics: metrics(&[
                    ("error", err_of(&params, z)?),
                    ("iterations", out.iterations as f64),
                    ("converged", f64::from(u8::from(out.converged))),
                    ("objective", obj),
                    ("objective_gap", (obj - opt).abs() / opt.abs().max(f64::MIN_POSITIVE)),
                ]),
                trace: Some(admm_trace(&out.trace)),
            })
        }
        "s_cons_rvfl" => {
            let chunks = cfg.uparam("chunks");
            let streams: Vec<Vec<(Mat, Mat)>> = shards
                .iter()
                .map(|(x, y)| {
                    let sizes = datagen::split_sizes(x.nrows(), chunks.min(x.nrows()).max(1));
                    let mut start = 0;
                    sizes
                        .into_iter()
                        .map(|s| {
                            let c = (x.rows(start, s).into_owned(), y.rows(start, s).into_owned());
                            start += s;
                            c
                        })
                        .collect()
                })
                .collect();
            let rounds = streams.iter().map(Vec::len).min().unwrap_or(0);
            let streams: Vec<Vec<(Mat, Mat)>> = streams.into_iter().map(|mut s| {
                // fold any surplus chunks into the last common round
                while s.len() > rounds {
                    let (x, y) = s.pop().expect("non-empty");
                    let last = s.last_mut().expect("rounds >= 1");
                    last.0 = stack(&last.0, &x);
                    last.1 = stack(&last.1, &y);
                }
                s
            }).collect();
            let eval = |b: &Mat| err_of(&params, b).unwrap_or(f64::NAN);
            let out = rvfl::s_cons_rvfl(mix, &streams, &params, lambda, dac, Some(&eval))?;
            let trace = table(
                &["round", "error"],
                out.round_metric.iter().enumerate().map(|(i, e)| vec![(i + 1) as f64, *e]).collect(),
            );
            Ok(RunOutcome { metrics: metrics(&[("error", err_of(&params, &out.betas[0])?)]), trace: Some(trace) })
        }
        other => invalid(format!("{other} is not a horizontal RVFL algorithm")),
    }
}

fn stack(a: &Mat, b: &Mat) -> Mat {
    let mut m = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    m.rows_mut(0, a.nrows()).copy_from(a);
    m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    m
}

#[allow(clippy::too_many_arguments)]
fn run_vertical(
    cfg: &ExperimentConfig,
    mix: &MixingMatrix,
    seeds: &Seeds,
    x_tr: &Mat,
    t_tr: &Mat,
    x_te: &Mat,
    y_te: &[usize],
    n_classes: usize,
    dac: DacConfig,
) -> Result<RunOutcome> {
    let l = mix.n_agents();
    let cols = datagen::partition_vertical(x_tr.ncols(), l)?;
    let budget = datagen::vertical_hidden_budget(cfg.uparam("hidden"), l);
    let wr = cfg.param("weight_range");
    let lambda = cfg.param("lambda");
    let params: Vec<RvflParams> =
        cols.iter().enumerate().map(|(k, c)| RvflParams::new(c.len(), budget, wr, sub_seed(seeds.model, k as u64))).collect();
    let tr_cols: Vec<Mat> = cols.iter().map(|c| x_tr.select_columns(c)).collect();
    let te_cols: Vec<Mat> = cols.iter().map(|c| x_te.select_columns(c)).collect();
    match cfg.algorithm.as_str() {
        "vp_admm_rvfl" => {
            let shards: Vec<FeatureShard> =
                tr_cols.into_iter().zip(&params).map(|(x, p)| FeatureShard { x, params: p.clone() }).collect();
            let out = rvfl::vp_admm_rvfl(mix, &shards, t_tr, lambda, cfg.param("rho"), cfg.uparam("max_iters"), dac)?;
            let partials: Vec<Mat> =
                te_cols.iter().zip(&params).zip(&out.betas).map(|((x, p), b)| rvfl::predict(p, b, x)).collect::<Result<_>>()?;
            let sums = rvfl::vp_predict(mix, &partials, dac)?;
            let err = rvfl::misclassification(&rvfl::decode_outputs(&sums[0]), y_te);
            let trace = table(&["iteration", "r_norm"], out.trace.iter().map(|r| vec![r.iteration as f64, r.r_norm]).collect());
            Ok(RunOutcome { metrics: metrics(&[("error", err)]), trace: Some(trace) })
        }
        "local_rvfl" => {
            let mut votes = Vec::with_capacity(l);
            let mut errs = Vec::with_capacity(l);
            for k in 0..l {
                let beta = rvfl::train_centralized(&params[k], &tr_cols[k], t_tr, lambda)?;
                let pred = rvfl::decode_outputs(&rvfl::predict(&params[k], &beta, &te_cols[k])?);
                errs.push(rvfl::misclassification(&pred, y_te));
                votes.push(pred);
            }
            let vote = rvfl::misclassification(&rvfl::majority_vote(&votes, n_classes), y_te);
            Ok(RunOutcome {
                metrics: metrics(&[("error", errs.iter().sum::<f64>() / l as f64), ("vote_error", vote)]),
                trace: None,
            })
        }
        other => invalid(format!("{other} does not run on vertical partitions")),
    }
}

// ---------------------------------------------------------------------------
// sequences

fn load_sequences(ds: &DatasetSpec, seed: u64) -> Result<Vec<Sequence>> {
    let (s, t) = (ds.sequences, ds.length);
    if s == 0 || t == 0 {
        return invalid("need at least one non-empty sequence");
    }
    match ds.kind.as_str() {
        "narma10" => (0..s).map(|i| datagen::gen_narma10(t, sub_seed(seed, i as u64))).collect(),
        "extpoly" => (0..s).map(|i| datagen::gen_extpoly(t, ds.degree, ds.lag, sub_seed(seed, i as u64))).collect(),
        "mackey_glass" => Ok(datagen::gen_mackey_glass(s * t, ds.tau, seed)?.chunks(t)),
        "lorenz" => Ok(datagen::gen_lorenz(s * t, seed)?.chunks(t)),
        other => invalid(format!("'{other}' is not a sequence dataset")),
    }
}

fn run_esn(cfg: &ExperimentConfig, mix: &MixingMatrix, seeds: &Seeds, fold: usize) -> Result<RunOutcome> {
    let seqs = load_sequences(&cfg.dataset, seeds.data)?;
    let s = seqs.len();
    if cfg.folds > s {
        return invalid(format!("{} folds for {s} sequences", cfg.folds));
    }
    // chunks of one long series stay in time order when held out
    let (tr_idx, te_idx) = if cfg.folds > 1 {
        holdout(s, cfg.folds, fold, 0.5, seeds.split)?
    } else {
        let n_test = ((s as f64) * cfg.dataset.test_fraction).round().clamp(1.0, (s - 1).max(1) as f64) as usize;
        ((0..s - n_test).collect(), (s - n_test..s).collect())
    };
    let train: Vec<Sequence> = tr_idx.iter().map(|&i| seqs[i].clone()).collect();
    let test: Vec<Sequence> = te_idx.iter().map(|&i| seqs[i].clone()).collect();
    let l = mix.n_agents();
    if train.len() < l {
        return invalid(format!("{} training sequences for {l} agents", train.len()));
    }
    let ecfg = EsnConfig {
        reservoir_size: cfg.uparam("reservoir"),
        rho: cfg.param("spectral_radius"),
        alpha_i: cfg.param("alpha_i"),
        alpha_t: cfg.param("alpha_t"),
        alpha_f: cfg.param("alpha_f"),
        density: cfg.param("density"),
        noise: cfg.param("noise"),
        washout: cfg.uparam("washout"),
    };
    let params = esn::esn_init(train[0].inputs.ncols(), ecfg, seeds.model)?;
    let lambda = cfg.param("lambda");
    let test_noise = sub_seed(seeds.noise, 1 << 20);
    let mut per_agent = Vec::with_capacity(l);
    let mut start = 0;
    for sz in datagen::split_sizes(train.len(), l) {
        per_agent.push(train[start..start + sz].to_vec());
        start += sz;
    }
    let admm = |penalty| AdmmConfig {
        lambda,
        gamma: cfg.param("gamma"),
        max_iters: cfg.uparam("max_iters"),
        eps_abs: cfg.param("eps_abs"),
        eps_rel: cfg.param("eps_rel"),
        penalty,
        dac: DacConfig::default(),
    };
    match cfg.algorithm.as_str() {
        "esn_centralized" => {
            let w = esn::train_centralized_as_agent(&params, &train, lambda, seeds.noise)?;
            let e = esn::evaluate_nrmse(&params, &w, &test, test_noise)?;
            Ok(RunOutcome { metrics: metrics(&[("nrmse", e), ("sparsity", esn::sparsity(&w))]), trace: None })
        }
        "local_esn" => {
            let mut tot = 0.0;
            for (k, seqs) in per_agent.iter().enumerate() {
                let w = esn::train_centralized(&params, seqs, lambda, sub_seed(seeds.noise, k as u64))?;
                tot += esn::evaluate_nrmse(&params, &w, &test, test_noise)?;
            }
            Ok(RunOutcome { metrics: metrics(&[("nrmse", tot / l as f64)]), trace: None })
        }
        "admm_esn" | "l1_esn" => {
            let penalty = if cfg.algorithm == "l1_esn" { Penalty::L1 } else { Penalty::Ridge };
            let out = esn::admm_esn(mix, &per_agent, &params, &admm(penalty), seeds.noise)?;
            let e = esn::evaluate_nrmse(&params, &out.readout, &test, test_noise)?;
            Ok(RunOutcome {
                metrics: metrics(&[
                    ("nrmse", e),
                    ("sparsity", out.sparsity),
                    ("iterations", out.outcome.iterations as f64),
                    ("converged", f64::from(u8::from(out.outcome.converged))),
                ]),
                trace: Some(admm_trace(&out.outcome.trace)),
            })
        }
        other => invalid(format!("{other} is not an ESN algorithm")),
    }
}

// ---------------------------------------------------------------------------
// spline filters

/// Per-agent `(μ_w, μ_q)` drawn log-uniformly in `[mu_min, mu_max]`.
pub fn saf_step_sizes(l: usize, lo: f64, hi: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng_from_seed(seed);
    let (a, b) = (lo.max(1e-12).log10(), hi.max(1e-12).log10());
    let mut draw = || if b > a { 10f64.powf(rng.random_range(a..b)) } else { hi };
    (0..l).map(|_| (draw(), draw())).collect()
}

fn run_saf(cfg: &ExperimentConfig, mix: &MixingMatrix, seeds: &Seeds) -> Result<RunOutcome> {
    let l = mix.n_agents();
    let taps = cfg.uparam("taps");
    let f0: &[f64] = if cfg.dataset.kind == "wiener_strong" { &saf::F0_STRONG } else { &saf::F0_MILD };
    let streams = datagen::gen_saf_streams_with(l, cfg.dataset.length, taps, f0, seeds.data)?;
    let mus = saf_step_sizes(l, cfg.param("mu_min"), cfg.param("mu_max"), seeds.model);
    let (cooperative, spline) = match cfg.algorithm.as_str() {
        "dsaf" => (true, true),
        "nc_saf" => (false, true),
        "dlms" => (true, false),
        "nc_lms" => (false, false),
        other => return invalid(format!("{other} is not a spline-filter algorithm")),
    };
    let init: Vec<SafState> = mus
        .iter()
        .map(|&(mw, mq)| SafState::new(taps, cfg.uparam("knots"), cfg.param("dx"), mw, if spline { mq } else { 0.0 }))
        .collect::<Result<_>>()?;
    let ident = MixingMatrix::identity(l);
    let m = if cooperative { mix } else { &ident };
    let order = if cfg.param("atc") >= 0.5 { DiffusionOrder::Atc } else { DiffusionOrder::Cta };
    let q0: Vec<f64> = streams.truth.f0.control.clone();
    if q0.len() != cfg.uparam("knots") {
        return invalid("knot count must match the 21-point reference nonlinearity");
    }
    let stride = cfg.uparam("stride");
    let run = saf::run_dsaf(init, m, &streams.inputs, &streams.desired, order, Some((&streams.truth.w0, &q0)), stride)?;
    let frac = cfg.param("steady_frac");
    let lf = l as f64;
    let mse = run.errors.iter().map(|e| saf::steady_state_db(e, frac)).sum::<f64>() / lf;
    let msd_l = run.final_states.iter().map(|s| saf::msd_linear(&s.w, &streams.truth.w0)).sum::<f64>() / lf;
    let msd_q = run.final_states.iter().map(|s| saf::msd_nonlinear(&s.spline.control, &q0)).sum::<f64>() / lf;
    let rows = run
        .msd
        .iter()
        .map(|&(n, ml, mn)| {
            let win = run.errors.iter().map(|e| saf::to_db(e[n - stride.min(n)..n].iter().map(|v| v * v).sum::<f64>() / stride.min(n) as f64));
            vec![n as f64, win.sum::<f64>() / lf, ml, mn]
        })
        .collect();
    Ok(RunOutcome {
        metrics: metrics(&[("mse_db", mse), ("msd_linear_db", msd_l), ("msd_nonlinear_db", msd_q)]),
        trace: Some(table(&["sample", "mse_db", "msd_linear_db", "msd_nonlinear_db"], rows)),
    })
}

// ---------------------------------------------------------------------------
// semi-supervised

fn run_lapkrr(cfg: &ExperimentConfig, net: &AgentNetwork, mix: &MixingMatrix, seeds: &Seeds) -> Result<RunOutcome> {
    let ds = load_tabular(&cfg.dataset, cfg.dataset.n, seeds.data)?;
    let l = mix.n_agents();
    let (part, x_te, y_te) =
        SslPartition::split(&ds.x, &ds.y, cfg.dataset.labeled, cfg.dataset.unlabeled, l, seeds.split)?;
    let (ga, gi) = (cfg.param("gamma_a"), cfg.param("gamma_i"));
    let nn = cfg.uparam("nn");
    let sigma = cfg.param("sigma_k");
    let q = cfg.uparam("q") as u32;
    match cfg.algorithm.as_str() {
        "lapkrr_centralized" => {
            let xg = part.global_inputs();
            let gk = edm_ssl::build_graph_kernel(&edm_ssl::edm_from_points(&xg), nn, sigma, q)?;
            let (j, y) = part.label_vectors(None);
            let a = edm_ssl::lapkrr_centralized(&gk, &j, &y, ga, gi)?;
            let err = edm_ssl::sign_error(&edm_ssl::lapkrr_predict(&a, &xg, &x_te, sigma), &y_te);
            Ok(RunOutcome { metrics: metrics(&[("error", err)]), trace: None })
        }
        "local_lapkrr" => {
            let mut tot = 0.0;
            for s in &part.shards {
                let a = edm_ssl::local_lapkrr(s, nn, sigma, q, ga, gi)?;
                tot += edm_ssl::sign_error(&edm_ssl::lapkrr_predict(&a, &s.inputs(), &x_te, sigma), &y_te);
            }
            Ok(RunOutcome { metrics: metrics(&[("error", tot / l as f64)]), trace: None })
        }
        "distr_lapkrr" => {
            let ex = ExchangeConfig {
                p1: cfg.param("p1"),
                n1: cfg.uparam("n1"),
                p2: cfg.param("p2"),
                n2: cfg.uparam("n2"),
            };
            let rank = cfg.uparam("rank");
            let views = edm_ssl::simulate_exchange(net, &part, &ex, rank, seeds.noise, None)?;
            let comp = edm_ssl::dgd_edm_complete(&views, mix, rank, cfg.param("eta"), cfg.uparam("completion_iters"), seeds.model)?;
            let truth = edm_ssl::edm_from_points(&part.global_inputs());
            let cerr = comp.estimates.iter().map(|e| edm_ssl::completion_error(e, &truth)).sum::<f64>() / l as f64;
            let dac = DacConfig::default();
            let out = edm_ssl::distr_lapkrr(mix, &part, &comp.estimates, nn, sigma, q, ga, gi, dac)?;
            let pred = edm_ssl::distr_predict(mix, &part, &out.alpha, &x_te, sigma, dac)?;
            let err = pred.iter().map(|p| edm_ssl::sign_error(p, &y_te)).sum::<f64>() / l as f64;
            let sampled = views.iter().map(|v| v.sampled_fraction()).sum::<f64>() / l as f64;
            let trace = table(&["iteration", "cost"], comp.trace.iter().map(|r| vec![r.iteration as f64, r.cost]).collect());
            Ok(RunOutcome {
                metrics: metrics(&[
                    ("error", err),
                    ("completion_error", cerr),
                    ("completion_iterations", comp.iterations as f64),
                    ("diverged", f64::from(u8::from(comp.diverged))),
                    ("sampled_fraction", sampled),
                ]),
                trace: Some(trace),
            })
        }
        other => invalid(format!("{other} is not a LapKRR algorithm")),
    }
}

fn s3vm_trace(run: &S3vmRun) -> Trace {
    table(
        &["round", "objective", "grad_norm", "disagreement"],
        run.trace.iter().map(|r| vec![r.round as f64, r.objective, r.grad_norm, r.disagreement]).collect(),
    )
}

fn run_s3vm(cfg: &ExperimentConfig, mix: &MixingMatrix, seeds: &Seeds) -> Result<RunOutcome> {
    let ds_spec = &cfg.dataset;
    let (nl, nu) = (ds_spec.labeled, ds_spec.unlabeled);
    let l = mix.n_agents();
    if nl < l || nu < l {
        return invalid(format!("{nl} labeled / {nu} unlabeled samples cannot cover {l} agents"));
    }
    let train = load_tabular(ds_spec, nl + nu, seeds.data)?;
    let test = load_tabular(ds_spec, ds_spec.test.max(1), sub_seed(seeds.data, 1))?;
    if train.n_samples() < nl + nu {
        return invalid("dataset has fewer samples than labeled + unlabeled");
    }
    let rows = |x: &Mat, start: usize, len: usize| x.rows(start, len).into_owned();
    let (ls, us) = (datagen::split_sizes(nl, l), datagen::split_sizes(nu, l));
    let (mut lo, mut uo) = (0, nl);
    let mut shards = Vec::with_capacity(l);
    for k in 0..l {
        shards.push(S3vmShard {
            labeled_x: rows(&train.x, lo, ls[k]),
            labels: (lo..lo + ls[k]).map(|i| train.y[i]).collect(),
            unlabeled_x: rows(&train.x, uo, us[k]),
        });
        lo += ls[k];
        uo += us[k];
    }
    let r = cfg.param("r");
    let (means, b) = s3vm::fix_offset_and_center(mix, &mut shards, r, DacConfig::default())?;
    let mut x_te = test.x.clone();
    for mut row in x_te.row_iter_mut() {
        row -= means[0].transpose();
    }
    let y_te: Vec<f64> = test.y.iter().copied().collect();
    let p = S3vmProblem::with_weights(shards, cfg.param("c1"), cfg.param("c2"), cfg.param("s"), r)?;
    let (a0, delta, t) = (cfg.param("alpha0"), cfg.param("delta"), cfg.uparam("max_rounds"));
    let run = match cfg.algorithm.as_str() {
        "s3vm_centralized" => s3vm::grad_s3vm_centralized(&p.merged(), a0, delta, t, cfg.param("grad_tol"))?,
        "s3vm_supervised" => s3vm::grad_s3vm_centralized(&p.merged().supervised(), a0, delta, t, cfg.param("grad_tol"))?,
        "dgd_s3vm" => s3vm::dgd_s3vm(mix, &p, a0, delta, t)?,
        "next_s3vm" => s3vm::next_s3vm(mix, &p, a0, delta, t, cfg.uparam("inner_iters"), cfg.param("inner_tol"))?,
        other => return invalid(format!("{other} is not an S3VM algorithm")),
    };
    let w = run.mean_weight();
    let err = s3vm::predict_and_error(&w, b, &x_te, &y_te);
    let last = run.trace.last();
    let mut m = metrics(&[
        ("error", err),
        ("rounds", run.rounds as f64),
        ("objective", last.map_or(f64::NAN, |r| r.objective)),
        ("grad_norm", last.map_or(f64::NAN, |r| r.grad_norm)),
    ]);
    let tol = cfg.param("report_tol");
    m.insert("reached_tol".into(), f64::from(u8::from(run.rounds_to(tol).is_some())));
    if let Some(n) = run.rounds_to(tol) {
        m.insert("rounds_to_tol".into(), n as f64);
    }
    Ok(RunOutcome { metrics: m, trace: Some(s3vm_trace(&run)) })
}
