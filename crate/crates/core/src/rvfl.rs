//! Random-vector functional-link networks and their distributed trainers.
//!
//! Hidden weights are fixed at random; only the linear readout `β` (B×M) is
//! learned. Horizontal partitions use consensus averaging or consensus ADMM,
//! streaming data uses blockwise recursive least squares, and vertical
//! partitions use sharing-form ADMM.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{dac_mats, DacConfig, MixingMatrix};
use crate::error::{invalid, Error, Result};
use crate::solvers::{gram_inverse, ridge, soft_threshold_mat, spd_factor, RidgeProblem};
use crate::{rng_from_seed, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct RvflParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// B×d
    pub weights: Mat,
    pub biases: Vec<f64>,
    pub weight_range: f64,
}

impl RvflParams {
    /// Draws hidden weights and biases i.i.d. from `U[-range, range]`.
    pub fn new(input_dim: usize, hidden: usize, weight_range: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let weights = Mat::from_fn(hidden, input_dim, |_, _| rng.random_range(-weight_range..=weight_range));
        let biases = (0..hidden).map(|_| rng.random_range(-weight_range..=weight_range)).collect();
        RvflParams { input_dim, hidden, weights, biases, weight_range }
    }

    /// Sigmoid expansion `H_ij = σ(w_jᵀx_i + b_j)`.
    pub fn hidden_matrix(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.input_dim {
            return invalid(format!("input has {} columns, expected {}", x.ncols(), self.input_dim));
        }
        let mut h = x * self.weights.transpose();
        for (j, mut col) in h.column_iter_mut().enumerate() {
            let b = self.biases[j];
            col.apply(|v| *v = 1.0 / (1.0 + (-(*v + b)).exp()));
        }
        Ok(h)
    }
}

/// Ridge readout on the full dataset.
pub fn train_centralized(params: &RvflParams, x: &Mat, y: &Mat, lambda: f64) -> Result<Mat> {
    let h = params.hidden_matrix(x)?;
    ridge(&RidgeProblem::new(h, y.clone(), lambda)?)
}

pub fn predict(params: &RvflParams, beta: &Mat, x: &Mat) -> Result<Mat> {
    Ok(params.hidden_matrix(x)? * beta)
}

/// Targets for classification: one ±1 column for two classes, one-hot otherwise.
pub fn encode_labels(labels: &[usize], n_classes: usize) -> Mat {
    if n_classes <= 2 {
        Mat::from_fn(labels.len(), 1, |i, _| if labels[i] == 1 { 1.0 } else { -1.0 })
    } else {
        Mat::from_fn(labels.len(), n_classes, |i, j| if labels[i] == j { 1.0 } else { 0.0 })
    }
}

/// Sign for single outputs, argmax otherwise. Ties go to the lowest index.
pub fn decode_outputs(out: &Mat) -> Vec<usize> {
    out.row_iter()
        .map(|r| {
            if r.len() == 1 {
                usize::from(r[0] > 0.0)
            } else {
                let mut best = 0;
                for j in 1..r.len() {
                    if r[j] > r[best] {
                        best = j;
                    }
                }
                best
            }
        })
        .collect()
}

pub fn misclassification(pred: &[usize], truth: &[usize]) -> f64 {
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len().max(1) as f64
}

/// Per-agent readouts with no communication.
pub fn train_local(params: &RvflParams, shards: &[(Mat, Mat)], lambda: f64) -> Result<Vec<Mat>> {
    shards.par_iter().map(|(x, y)| train_centralized(params, x, y, lambda)).collect()
}

/// Majority vote over per-model class predictions; ties to the lowest class.
pub fn majority_vote(votes: &[Vec<usize>], n_classes: usize) -> Vec<usize> {
    let n = votes.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut counts = vec![0usize; n_classes.max(2)];
            for v in votes {
                counts[v[i]] += 1;
            }
            let mut best = 0;
            for c in 1..counts.len() {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub betas: Vec<Mat>,
    pub dac_iterations: usize,
    pub converged: bool,
}

impl ConsensusOutcome {
    pub fn beta(&self) -> &Mat {
        &self.betas[0]
    }
}

/// Local ridge solutions followed by one DAC average.
pub fn cons_rvfl(
    mix: &MixingMatrix,
    shards: &[(Mat, Mat)],
    params: &RvflParams,
    lambda: f64,
    dac: DacConfig,
) -> Result<ConsensusOutcome> {
    check_shards(mix, shards.len())?;
    let local = train_local(params, shards, lambda)?;
    let (betas, res) = dac_mats(mix, &local, dac)?;
    Ok(ConsensusOutcome { betas, dac_iterations: res.iterations, converged: res.converged })
}

fn check_shards(mix: &MixingMatrix, n: usize) -> Result<()> {
    if n != mix.n_agents() {
        return invalid(format!("{n} shards for {} agents", mix.n_agents()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `(λ/2)‖z‖²`
    Ridge,
    /// `λ‖z‖₁`
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub penalty: Penalty,
    pub dac: DacConfig,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            lambda: 1.0,
            gamma: 1.0,
            max_iters: 300,
            eps_abs: 1e-3,
            eps_rel: 1e-3,
            penalty: Penalty::Ridge,
            dac: DacConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmmTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub r_norm: f64,
    pub s_norm: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Per-agent copies of the consensus variable.
    pub z: Vec<Mat>,
    pub betas: Vec<Mat>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<AdmmTraceRow>,
}

impl AdmmOutcome {
    pub fn solution(&self) -> &Mat {
        &self.z[0]
    }
}

/// Global objective `Σ_k ½‖H_k z − y_k‖² + penalty(z)`.
pub fn consensus_objective(designs: &[(Mat, Mat)], z: &Mat, lambda: f64, penalty: Penalty) -> f64 {
    let fit: f64 = designs.iter().map(|(h, y)| 0.5 * (h * z - y).norm_squared()).sum();
    fit + match penalty {
        Penalty::Ridge => 0.5 * lambda * z.norm_squared(),
        Penalty::L1 => lambda * z.iter().map(|v| v.abs()).sum::<f64>(),
    }
}

/// Global-consensus ADMM over per-agent designs `(H_k, y_k)`.
pub fn admm_consensus(mix: &MixingMatrix, designs: &[(Mat, Mat)], cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    check_shards(mix, designs.len())?;
    if !(cfg.gamma > 0.0) {
        return invalid("ADMM penalty gamma must be positive");
    }
    let l = designs.len();
    let (b, m) = (designs[0].0.ncols(), designs[0].1.ncols());
    let g = cfg.gamma;
    let lf = l as f64;
    let factors: Vec<(Mat, Mat)> = designs
        .par_iter()
        .map(|(h, y)| Ok((gram_inverse(h, g)?, h.tr_mul(y))))
        .collect::<Result<_>>()?;
    let mut z = vec![Mat::zeros(b, m); l];
    let mut t = vec![Mat::zeros(b, m); l];
    let mut betas = vec![Mat::zeros(b, m); l];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let eps_sqrt = lf.sqrt() * cfg.eps_abs;
    for n in 1..=cfg.max_iters {
        iterations = n;
        betas = (0..l)
            .into_par_iter()
            .map(|k| {
                let (inv, hty) = &factors[k];
                inv * (hty - &t[k] + &z[k] * g)
            })
            .collect();
        // one DAC run over the stacked [β_k; t_k]
        let stacked: Vec<Mat> = (0..l)
            .map(|k| {
                let mut s = Mat::zeros(2 * b, m);
                s.rows_mut(0, b).copy_from(&betas[k]);
                s.rows_mut(b, b).copy_from(&t[k]);
                s
            })
            .collect();
        let (avg, _) = dac_mats(mix, &stacked, cfg.dac)?;
        let z_new: Vec<Mat> = avg
            .iter()
            .map(|s| {
                let bh = s.rows(0, b).into_owned();
                let th = s.rows(b, b).into_owned();
                match cfg.penalty {
                    Penalty::Ridge => (bh * g + th) / (cfg.lambda / lf + g),
                    Penalty::L1 => soft_threshold_mat(&(bh + th / g), cfg.lambda / (lf * g)),
                }
            })
            .collect();
        let mut r_max = 0.0_f64;
        let mut s_max = 0.0_f64;
        let mut all_ok = true;
        for k in 0..l {
            let r = &betas[k] - &z_new[k];
            t[k] += &r * g;
            let s = (&z_new[k] - &z[k]) * (-g);
            let (rn, sn) = (r.norm(), s.norm());
            let eps_pri = eps_sqrt + cfg.eps_rel * betas[k].norm().max(z_new[k].norm());
            let eps_dual = eps_sqrt + cfg.eps_rel * t[k].norm();
            all_ok &= rn < eps_pri && sn < eps_dual;
            r_max = r_max.max(rn);
            s_max = s_max.max(sn);
        }
        z = z_new;
        trace.push(AdmmTraceRow {
            iteration: n,
            objective: consensus_objective(designs, &z[0], cfg.lambda, cfg.penalty),
            r_norm: r_max,
            s_norm: s_max,
        });
        if all_ok {
            converged = true;
            break;
        }
    }
    Ok(AdmmOutcome { z, betas, iterations, converged, trace })
}

/// ADMM-RVFL on horizontally partitioned `(X_k, y_k)` shards.
pub fn admm_rvfl(
    mix: &MixingMatrix,
    shards: &[(Mat, Mat)],
    params: &RvflParams,
    cfg: &AdmmConfig,
) -> Result<AdmmOutcome> {
    let designs: Vec<(Mat, Mat)> = shards
        .par_iter()
        .map(|(x, y)| Ok((params.hidden_matrix(x)?, y.clone())))
        .collect::<Result<_>>()?;
    admm_consensus(mix, &designs, cfg)
}

/// Recursive least-squares state: inverse Gram `P` and readout `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrlsState {
    pub p: Mat,
    pub beta: Mat,
}

impl BrlsState {
    pub fn new(hidden: usize, outputs: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return invalid("BRLS lambda must be positive");
        }
        Ok(BrlsState { p: Mat::identity(hidden, hidden) / lambda, beta: Mat::zeros(hidden, outputs) })
    }
}

/// One block update; exact for any chunking of the data.
pub fn brls_update(state: &BrlsState, h: &Mat, y: &Mat) -> Result<BrlsState> {
    if h.nrows() == 0 {
        return invalid("empty chunk");
    }
    if h.ncols() != state.p.nrows() || y.nrows() != h.nrows() || y.ncols() != state.beta.ncols() {
        return invalid("chunk shape does not match the BRLS state");
    }
    let ph_t = &state.p * h.transpose();
    let m = h * &ph_t;
    let chol = spd_factor(m, 1.0)?;
    // P Hᵀ M⁻¹
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let mut p = &state.p - &gain * ph_t.transpose();
    p = (&p + p.transpose()) * 0.5;
    let resid = y - h * &state.beta;
    let beta = &state.beta + &p * h.transpose() * resid;
    Ok(BrlsState { p, beta })
}

#[derive(Debug, Clone)]
pub struct SequentialOutcome {
    pub betas: Vec<Mat>,
    /// Metric of agent 0's readout after each round, when an evaluator is supplied.
    pub round_metric: Vec<f64>,
}

/// Sequential consensus RVFL: BRLS on each new chunk, then DAC on `β`.
///
/// `streams[k][n]` is agent `k`'s chunk `(X, y)` at round `n`.
pub fn s_cons_rvfl(
    mix: &MixingMatrix,
    streams: &[Vec<(Mat, Mat)>],
    params: &RvflParams,
    lambda: f64,
    dac: DacConfig,
    eval: Option<&(dyn Fn(&Mat) -> f64 + Sync)>,
) -> Result<SequentialOutcome> {
    check_shards(mix, streams.len())?;
    let rounds = streams[0].len();
    if streams.iter().any(|s| s.len() != rounds) {
        return invalid("all agents must receive the same number of chunks");
    }
    let m = streams[0].first().map_or(1, |c| c.1.ncols());
    let mut states = vec![BrlsState::new(params.hidden, m, lambda)?; streams.len()];
    let mut round_metric = Vec::new();
    for n in 0..rounds {
        states = states
            .par_iter()
            .zip(streams.par_iter())
            .map(|(st, s)| {
                let (x, y) = &s[n];
                brls_update(st, &params.hidden_matrix(x)?, y)
            })
            .collect::<Result<_>>()?;
        let local: Vec<Mat> = states.iter().map(|s| s.beta.clone()).collect();
        let (avg, _) = dac_mats(mix, &local, dac)?;
        for (st, b) in states.iter_mut().zip(avg) {
            st.beta = b;
        }
        if let Some(f) = eval {
            round_metric.push(f(&states[0].beta));
        }
    }
    Ok(SequentialOutcome { betas: states.into_iter().map(|s| s.beta).collect(), round_metric })
}

/// One agent's slice of a vertically partitioned dataset.
#[derive(Debug, Clone)]
pub struct FeatureShard {
    /// N×d_k, the agent's columns of every pattern
    pub x: Mat,
    pub params: RvflParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct VpTraceRow {
    pub iteration: usize,
    pub r_norm: f64,
}

#[derive(Debug, Clone)]
pub struct VpOutcome {
    pub betas: Vec<Mat>,
    pub trace: Vec<VpTraceRow>,
}

/// Sharing-form ADMM for `½‖y − Σ_k H_kβ_k‖² + (λ/2)Σ_k‖β_k‖²`.
///
/// The two network means are realized with DAC; every agent keeps its own
/// copy of `z̄` and the scaled dual `t`.
pub fn vp_admm_rvfl(
    mix: &MixingMatrix,
    shards: &[FeatureShard],
    y: &Mat,
    lambda: f64,
    rho: f64,
    max_iters: usize,
    dac: DacConfig,
) -> Result<VpOutcome> {
    check_shards(mix, shards.len())?;
    if !(rho > 0.0 && lambda > 0.0) {
        return invalid("VP-ADMM needs positive lambda and rho");
    }
    let l = shards.len();
    let lf = l as f64;
    let (n, m) = y.shape();
    let hs: Vec<Mat> = shards.par_iter().map(|s| s.params.hidden_matrix(&s.x)).collect::<Result<_>>()?;
    if hs.iter().any(|h| h.nrows() != n) {
        return Err(Error::InvalidArgument("every agent must hold all N patterns".into()));
    }
    let chols = hs
        .iter()
        .map(|h| spd_factor(h.tr_mul(h), lambda / rho))
        .collect::<Result<Vec<_>>>()?;
    let mut betas: Vec<Mat> = hs.iter().map(|h| Mat::zeros(h.ncols(), m)).collect();
    let mut hb: Vec<Mat> = vec![Mat::zeros(n, m); l];
    let mut hbar = vec![Mat::zeros(n, m); l];
    let mut zbar = vec![Mat::zeros(n, m); l];
    let mut t = vec![Mat::zeros(n, m); l];
    let mut trace = Vec::new();
    for it in 1..=max_iters {
        betas = (0..l)
            .into_par_iter()
            .map(|k| {
                let rhs = &hb[k] + &zbar[k] - &hbar[k] - &t[k];
                chols[k].solve(&hs[k].tr_mul(&rhs))
            })
            .collect();
        hb = hs.iter().zip(&betas).map(|(h, b)| h * b).collect();
        let (avg, _) = dac_mats(mix, &hb, dac)?;
        hbar = avg;
        let mut r_max = 0.0_f64;
        for k in 0..l {
            zbar[k] = (y + (&hbar[k] + &t[k]) * rho) / (lf + rho);
            let r = &hbar[k] - &zbar[k];
            t[k] += &r;
            r_max = r_max.max(r.norm());
        }
        trace.push(VpTraceRow { iteration: it, r_norm: r_max });
    }
    Ok(VpOutcome { betas, trace })
}

/// Sum of per-agent partial outputs, realized as DAC average times `L`.
pub fn vp_predict(mix: &MixingMatrix, partials: &[Mat], dac: DacConfig) -> Result<Vec<Mat>> {
    crate::consensus::dac_sum_mats(mix, partials, dac)
}

/// Partial outputs `H_k(x_k) β_k` for every agent.
pub fn vp_partials(shards: &[FeatureShard], betas: &[Mat]) -> Result<Vec<Mat>> {
    shards.iter().zip(betas).map(|(s, b)| Ok(s.params.hidden_matrix(&s.x)? * b)).collect()
}
