//! Echo state networks with linear readouts trained centrally or by consensus ADMM.
//!
//! The input is extended with a constant unit, design rows are `[x, 1, h]`,
//! the output function is `y = α_t·s` and targets are stored as `d/α_t`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::MixingMatrix;
use crate::datagen::Sequence;
use crate::error::{invalid, Error, Result};
use crate::rvfl::{admm_consensus, AdmmConfig, AdmmOutcome};
use crate::solvers::{ridge, RidgeProblem};
use crate::{rng_from_seed, sub_seed, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsnConfig {
    pub reservoir_size: usize,
    pub rho: f64,
    pub alpha_i: f64,
    pub alpha_f: f64,
    pub alpha_t: f64,
    pub density: f64,
    pub noise: f64,
    pub washout: usize,
}

impl Default for EsnConfig {
    fn default() -> Self {
        EsnConfig {
            reservoir_size: 300,
            rho: 0.9,
            alpha_i: 0.5,
            alpha_f: 0.0,
            alpha_t: 0.1,
            density: 0.25,
            noise: 1e-3,
            washout: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnParams {
    pub n_inputs: usize,
    /// N_r×(N_i+1), last column drives the constant input
    pub w_in: Mat,
    pub w_res: Mat,
    /// N_r×1
    pub w_fb: Mat,
    pub cfg: EsnConfig,
}

const MAX_DRAWS: usize = 100;
const DENSE_EIG_LIMIT: usize = 500;

/// Largest eigenvalue modulus; dense Schur up to 500 units, power iteration above.
pub fn spectral_radius(w: &Mat) -> f64 {
    if w.nrows() <= DENSE_EIG_LIMIT {
        w.clone().complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
    } else {
        // growth rate of ‖W^k v‖ for a generic start
        let mut v = Vector::from_element(w.nrows(), 1.0 / (w.nrows() as f64).sqrt());
        let mut log_growth = 0.0;
        let iters = 2000;
        for k in 0..iters {
            v = w * v;
            let n = v.norm();
            if n == 0.0 {
                return 0.0;
            }
            v /= n;
            if k >= iters / 2 {
                log_growth += n.ln();
            }
        }
        (log_growth / (iters - iters / 2) as f64).exp()
    }
}

pub fn esn_init(n_inputs: usize, cfg: EsnConfig, seed: u64) -> Result<EsnParams> {
    if n_inputs == 0 || cfg.reservoir_size == 0 {
        return invalid("reservoir and input sizes must be positive");
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return invalid("reservoir density must lie in (0, 1]");
    }
    if cfg.rho < 0.0 || cfg.alpha_t <= 0.0 {
        return invalid("need rho >= 0 and alpha_t > 0");
    }
    let nr = cfg.reservoir_size;
    let mut rng = rng_from_seed(seed);
    let w_in = Mat::from_fn(nr, n_inputs + 1, |_, _| rng.random_range(-cfg.alpha_i..=cfg.alpha_i));
    let w_fb = if cfg.alpha_f > 0.0 {
        Mat::from_fn(nr, 1, |_, _| rng.random_range(-cfg.alpha_f..=cfg.alpha_f))
    } else {
        Mat::zeros(nr, 1)
    };
    for attempt in 0..MAX_DRAWS {
        let mut r = rng_from_seed(sub_seed(seed, 0xE5 + attempt as u64));
        let mut w = Mat::from_fn(nr, nr, |_, _| {
            if r.random_bool(cfg.density) {
                r.random_range(-1.0..=1.0)
            } else {
                0.0
            }
        });
        let rad = spectral_radius(&w);
        if rad > 0.0 {
            w *= cfg.rho / rad;
            return Ok(EsnParams { n_inputs, w_in, w_res: w, w_fb, cfg });
        }
    }
    Err(Error::RetriesExhausted(MAX_DRAWS))
}

#[derive(Debug, Clone, Copy)]
pub enum RunMode<'a> {
    /// Feedback uses the given targets.
    TeacherForced(&'a Vector),
    /// Feedback uses the readout's own previous output.
    FreeRun(&'a Mat),
}

#[derive(Debug, Clone)]
pub struct EsnRun {
    /// T×N_r
    pub states: Mat,
    /// Network outputs in the free-running case, the teacher otherwise.
    pub outputs: Vector,
}

impl EsnParams {
    pub fn design_width(&self) -> usize {
        self.n_inputs + 1 + self.cfg.reservoir_size
    }

    fn design_row(&self, x: nalgebra::DMatrixView<f64>, h: &Vector) -> Vector {
        let ni = self.n_inputs;
        let mut r = Vector::zeros(self.design_width());
        for j in 0..ni {
            r[j] = x[(0, j)];
        }
        r[ni] = 1.0;
        r.rows_mut(ni + 1, h.len()).copy_from(h);
        r
    }
}

pub fn reservoir_run(params: &EsnParams, inputs: &Mat, mode: RunMode, noise_seed: Option<u64>) -> Result<EsnRun> {
    reservoir_run_from(params, inputs, mode, noise_seed, &Vector::zeros(params.cfg.reservoir_size))
}

/// `h[n] = tanh(W_in [x;1] + W_res h[n−1] + W_fb y[n−1] + ν[n])`, `ν ~ U[0, noise]`.
pub fn reservoir_run_from(
    params: &EsnParams,
    inputs: &Mat,
    mode: RunMode,
    noise_seed: Option<u64>,
    h0: &Vector,
) -> Result<EsnRun> {
    if inputs.ncols() != params.n_inputs {
        return invalid(format!("inputs have {} columns, expected {}", inputs.ncols(), params.n_inputs));
    }
    let t = inputs.nrows();
    let nr = params.cfg.reservoir_size;
    if let RunMode::TeacherForced(d) = mode {
        if d.len() != t {
            return invalid("teacher length differs from the input length");
        }
    }
    if let RunMode::FreeRun(w) = mode {
        if w.nrows() != params.design_width() {
            return invalid("readout does not match the design width");
        }
    }
    let mut rng = noise_seed.filter(|_| params.cfg.noise > 0.0).map(rng_from_seed);
    let mut states = Mat::zeros(t, nr);
    let mut outputs = Vector::zeros(t);
    let mut h = h0.clone();
    let mut y_prev = 0.0;
    let bias = params.w_in.column(params.n_inputs);
    for n in 0..t {
        let x = inputs.row(n);
        let mut a = &params.w_res * &h + bias;
        a += params.w_in.columns(0, params.n_inputs) * x.transpose();
        if y_prev != 0.0 {
            a.axpy(y_prev, &params.w_fb.column(0), 1.0);
        }
        if let Some(r) = rng.as_mut() {
            let lvl = params.cfg.noise;
            a.apply(|v| *v += r.random_range(0.0..lvl));
        }
        a.apply(|v| *v = v.tanh());
        h = a;
        states.row_mut(n).copy_from(&h.transpose());
        match mode {
            RunMode::TeacherForced(d) => {
                outputs[n] = d[n];
                y_prev = d[n];
            }
            RunMode::FreeRun(w) => {
                let y = params.cfg.alpha_t * params.design_row(inputs.rows(n, 1), &h).dot(&w.column(0));
                outputs[n] = y;
                y_prev = y;
            }
        }
    }
    Ok(EsnRun { states, outputs })
}

/// Stacked post-washout rows `[x, 1, h]` and targets `d/α_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutDesign {
    pub h: Mat,
    pub d: Mat,
}

pub fn build_readout_design(params: &EsnParams, seqs: &[Sequence], noise_seed: u64) -> Result<ReadoutDesign> {
    let dw = params.cfg.washout;
    if seqs.iter().any(|s| s.len() <= dw) {
        return invalid(format!("every sequence must be longer than the washout ({dw})"));
    }
    let blocks: Vec<ReadoutDesign> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let run = reservoir_run(params, &s.inputs, RunMode::TeacherForced(&s.targets), Some(sub_seed(noise_seed, i as u64)))?;
            let rows = s.len() - dw;
            let mut h = Mat::zeros(rows, params.design_width());
            for r in 0..rows {
                let n = r + dw;
                let row = params.design_row(s.inputs.rows(n, 1), &run.states.row(n).transpose());
                h.row_mut(r).copy_from(&row.transpose());
            }
            let d = Mat::from_fn(rows, 1, |r, _| s.targets[r + dw] / params.cfg.alpha_t);
            Ok(ReadoutDesign { h, d })
        })
        .collect::<Result<_>>()?;
    let total: usize = blocks.iter().map(|b| b.h.nrows()).sum();
    let mut h = Mat::zeros(total, params.design_width());
    let mut d = Mat::zeros(total, 1);
    let mut at = 0;
    for b in blocks {
        let n = b.h.nrows();
        h.rows_mut(at, n).copy_from(&b.h);
        d.rows_mut(at, n).copy_from(&b.d);
        at += n;
    }
    Ok(ReadoutDesign { h, d })
}

pub fn train_centralized(params: &EsnParams, seqs: &[Sequence], lambda: f64, noise_seed: u64) -> Result<Mat> {
    let des = build_readout_design(params, seqs, noise_seed)?;
    ridge(&RidgeProblem::new(des.h, des.d, lambda)?)
}

/// Free-running outputs after the washout. The state noise is kept on, so that
/// its non-zero mean matches the conditions the readout was trained under.
pub fn predict(params: &EsnParams, readout: &Mat, seq: &Sequence, noise_seed: Option<u64>) -> Result<Vector> {
    let run = reservoir_run(params, &seq.inputs, RunMode::FreeRun(readout), noise_seed)?;
    let dw = params.cfg.washout.min(seq.len());
    Ok(run.outputs.rows(dw, seq.len() - dw).into_owned())
}

/// NRMSE over the concatenated post-washout predictions of all test sequences.
pub fn evaluate_nrmse(params: &EsnParams, readout: &Mat, test: &[Sequence], noise_seed: u64) -> Result<f64> {
    let dw = params.cfg.washout;
    let parts: Vec<(Vector, Vector)> = test
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = predict(params, readout, s, Some(sub_seed(noise_seed, i as u64)))?;
            Ok((p, s.targets.rows(dw.min(s.len()), s.len() - dw.min(s.len())).into_owned()))
        })
        .collect::<Result<_>>()?;
    let pred: Vec<f64> = parts.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let truth: Vec<f64> = parts.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    crate::harness::nrmse(&pred, &truth)
}

/// Fraction of readout coefficients that are exactly zero.
pub fn sparsity(w: &Mat) -> f64 {
    w.iter().filter(|&&v| v == 0.0).count() as f64 / w.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct EsnAdmmResult {
    pub readout: Mat,
    pub sparsity: f64,
    pub outcome: AdmmOutcome,
}

/// Consensus ADMM over per-agent readout designs; the penalty in `cfg` picks ridge or L1.
pub fn admm_esn(
    mix: &MixingMatrix,
    per_agent: &[Vec<Sequence>],
    params: &EsnParams,
    cfg: &AdmmConfig,
    noise_seed: u64,
) -> Result<EsnAdmmResult> {
    let designs: Vec<(Mat, Mat)> = per_agent
        .iter()
        .enumerate()
        .map(|(k, seqs)| {
            let des = build_readout_design(params, seqs, sub_seed(noise_seed, k as u64))?;
            Ok((des.h, des.d))
        })
        .collect::<Result<_>>()?;
    let outcome = admm_consensus(mix, &designs, cfg)?;
    let readout = outcome.solution().clone();
    Ok(EsnAdmmResult { sparsity: sparsity(&readout), readout, outcome })
}

/// Centralized training on agent 0's noise stream, matching `admm_esn` with one agent.
pub fn train_centralized_as_agent(params: &EsnParams, seqs: &[Sequence], lambda: f64, noise_seed: u64) -> Result<Mat> {
    train_centralized(params, seqs, lambda, sub_seed(noise_seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_narma10;
    use crate::rvfl::Penalty;

    fn small_cfg() -> EsnConfig {
        EsnConfig { reservoir_size: 30, washout: 20, ..Default::default() }
    }

    #[test]
    fn init_properties() {
        let p = esn_init(1, EsnConfig { reservoir_size: 100, alpha_f: 0.0, ..Default::default() }, 3).unwrap();
        assert!(p.w_fb.iter().all(|&v| v == 0.0));
        assert!((spectral_radius(&p.w_res) - 0.9).abs() < 1e-6);
        let nz = p.w_res.iter().filter(|&&v| v != 0.0).count() as f64 / 1e4;
        assert!((nz - 0.25).abs() < 0.03);
        assert_eq!(p, esn_init(1, EsnConfig { reservoir_size: 100, ..Default::default() }, 3).unwrap());
    }

    #[test]
    fn zero_input_zero_state() {
        let cfg = EsnConfig { noise: 0.0, alpha_f: 0.0, ..small_cfg() };
        let mut p = esn_init(1, cfg, 1).unwrap();
        p.w_in.column_mut(1).fill(0.0);
        let run = reservoir_run(&p, &Mat::zeros(50, 1), RunMode::TeacherForced(&Vector::zeros(50)), None).unwrap();
        assert!(run.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn memoryless_reservoir() {
        let cfg = EsnConfig { rho: 0.0, noise: 0.0, ..small_cfg() };
        let p = esn_init(1, cfg, 2).unwrap();
        let run =
            reservoir_run(&p, &Mat::from_element(20, 1, 0.4), RunMode::TeacherForced(&Vector::zeros(20)), None).unwrap();
        for n in 1..20 {
            assert_eq!(run.states.row(n), run.states.row(0));
        }
    }

    #[test]
    fn deterministic_runs_and_esp() {
        let cfg = EsnConfig { noise: 0.0, reservoir_size: 50, ..Default::default() };
        let p = esn_init(1, cfg, 3).unwrap();
        let seq = gen_narma10(600, 1).unwrap();
        let a = reservoir_run(&p, &seq.inputs, RunMode::TeacherForced(&seq.targets), Some(1)).unwrap();
        let b = reservoir_run(&p, &seq.inputs, RunMode::TeacherForced(&seq.targets), Some(1)).unwrap();
        assert_eq!(a.states, b.states);
        let h0 = Vector::from_fn(50, |i, _| if i % 2 == 0 { 0.8 } else { -0.8 });
        let c = reservoir_run_from(&p, &seq.inputs, RunMode::TeacherForced(&seq.targets), None, &h0).unwrap();
        let init_dist = h0.norm();
        let dist = (a.states.row(499) - c.states.row(499)).norm();
        assert!(dist < 1e-6 * init_dist, "{dist}");
    }

    #[test]
    fn design_shape_and_scaling() {
        let p = esn_init(1, EsnConfig { washout: 100, reservoir_size: 20, ..Default::default() }, 1).unwrap();
        let s1 = gen_narma10(150, 1).unwrap();
        let s2 = gen_narma10(180, 2).unwrap();
        let d = build_readout_design(&p, &[s1.clone()], 0).unwrap();
        assert_eq!(d.h.nrows(), 50);
        assert_eq!(d.h.ncols(), 22);
        assert!((d.d[(0, 0)] - s1.targets[100] * 10.0).abs() < 1e-12);
        assert_eq!(build_readout_design(&p, &[s1.clone(), s2], 0).unwrap().h.nrows(), 130);
        assert!(build_readout_design(&p, &[s1.slice(0, 100)], 0).is_err());
    }

    #[test]
    fn admm_single_agent_and_zero_teacher() {
        let p = esn_init(1, small_cfg(), 4).unwrap();
        let seqs: Vec<Sequence> = (0..3).map(|i| gen_narma10(120, i).unwrap()).collect();
        let lambda = 0.125;
        let c = train_centralized_as_agent(&p, &seqs, lambda, 7).unwrap();
        let cfg = AdmmConfig {
            lambda,
            gamma: lambda,
            eps_abs: 1e-12,
            eps_rel: 1e-12,
            max_iters: 2000,
            ..Default::default()
        };
        let r = admm_esn(&MixingMatrix::identity(1), &[seqs.clone()], &p, &cfg, 7).unwrap();
        assert!((&r.readout - &c).norm() < 1e-6 * c.norm().max(1.0));
        let zero: Vec<Sequence> =
            seqs.iter().map(|s| Sequence { inputs: s.inputs.clone(), targets: Vector::zeros(s.len()) }).collect();
        let z = admm_esn(&MixingMatrix::identity(1), &[zero], &p, &AdmmConfig::default(), 7).unwrap();
        assert!(z.readout.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l1_full_shrinkage() {
        let p = esn_init(1, small_cfg(), 5).unwrap();
        let seqs: Vec<Sequence> = (0..2).map(|i| gen_narma10(120, i).unwrap()).collect();
        let cfg = AdmmConfig { lambda: 1e3, penalty: Penalty::L1, ..Default::default() };
        let r = admm_esn(&MixingMatrix::identity(1), &[seqs], &p, &cfg, 1).unwrap();
        assert_eq!(r.sparsity, 1.0);
    }

    #[test]
    fn predictions_ignore_discarded_targets() {
        let p = esn_init(1, EsnConfig { alpha_f: 0.3, ..small_cfg() }, 6).unwrap();
        let s = gen_narma10(100, 3).unwrap();
        let w = Mat::from_fn(p.design_width(), 1, |i, _| 0.01 * (i as f64).sin());
        let mut t = s.clone();
        for n in 0..20 {
            t.targets[n] = 99.0;
        }
        assert_eq!(predict(&p, &w, &s, Some(2)).unwrap(), predict(&p, &w, &t, Some(2)).unwrap());
    }
}
