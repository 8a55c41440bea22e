//! Mixing matrices and decentralized average consensus (DAC).

use std::io::Write;
use std::path::Path;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::netgraph::{graph_matrices, laplacian_eigenvalues, AgentNetwork};
use crate::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingStrategy {
    MaxDegree,
    MetropolisHastings,
    LaplacianHeuristic,
    /// `C = I`: agents never talk. Used for non-cooperative baselines.
    Isolated,
}

#[derive(Debug, Clone)]
pub struct MixingMatrix {
    pub weights: Mat,
    pub strategy: MixingStrategy,
    /// Nonzero entries of each row as `(column, weight)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn new(weights: Mat, strategy: MixingStrategy) -> Self {
        let rows = (0..weights.nrows())
            .map(|i| {
                (0..weights.ncols())
                    .filter(|&j| weights[(i, j)] != 0.0)
                    .map(|j| (j, weights[(i, j)]))
                    .collect()
            })
            .collect();
        MixingMatrix { weights, strategy, rows }
    }

    pub fn identity(n_agents: usize) -> Self {
        Self::new(Mat::identity(n_agents, n_agents), MixingStrategy::Isolated)
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    /// `C_k · X` for per-agent matrices.
    pub fn mix_mats(&self, states: &[Mat]) -> Vec<Mat> {
        (0..self.n_agents())
            .map(|k| {
                let mut out = Mat::zeros(states[k].nrows(), states[k].ncols());
                for &(j, w) in &self.rows[k] {
                    out.zip_apply(&states[j], |o, s| *o += w * s);
                }
                out
            })
            .collect()
    }

    pub fn mix_vecs(&self, states: &[Vector]) -> Vec<Vector> {
        (0..self.n_agents())
            .map(|k| {
                let mut out = Vector::zeros(states[k].len());
                for &(j, w) in &self.rows[k] {
                    out.axpy(w, &states[j], 1.0);
                }
                out
            })
            .collect()
    }

    /// Spectral radius of `C - 11ᵀ/L`, the asymptotic DAC contraction factor.
    pub fn essential_spectral_radius(&self) -> f64 {
        let n = self.n_agents();
        let shifted = Mat::from_fn(n, n, |i, j| {
            0.5 * (self.weights[(i, j)] + self.weights[(j, i)]) - 1.0 / n as f64
        });
        SymmetricEigen::new(shifted).eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub fn mix_max_degree(net: &AgentNetwork) -> MixingMatrix {
    let n = net.n_agents();
    let dmax = net.degrees().into_iter().max().unwrap_or(0) as f64;
    let w = 1.0 / (dmax + 1.0);
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        for j in net.neighbors(i) {
            c[(i, j)] = w;
        }
        c[(i, i)] = 1.0 - net.degree(i) as f64 * w;
    }
    MixingMatrix::new(c, MixingStrategy::MaxDegree)
}

pub fn mix_metropolis(net: &AgentNetwork) -> MixingMatrix {
    let n = net.n_agents();
    let deg = net.degrees();
    let mut c = Mat::zeros(n, n);
    for i in 0..n {
        let mut row = 0.0;
        for j in net.neighbors(i) {
            let w = 1.0 / (deg[i].max(deg[j]) as f64 + 1.0);
            c[(i, j)] = w;
            row += w;
        }
        c[(i, i)] = 1.0 - row;
    }
    MixingMatrix::new(c, MixingStrategy::MetropolisHastings)
}

/// `C = I - α*·Lap` with `α* = 2 / (λ_max + λ_2)`.
pub fn mix_laplacian_heuristic(net: &AgentNetwork) -> Result<MixingMatrix> {
    let n = net.n_agents();
    if n == 1 {
        return Ok(MixingMatrix::new(Mat::identity(1, 1), MixingStrategy::LaplacianHeuristic));
    }
    let ev = laplacian_eigenvalues(net);
    let (l2, lmax) = (ev[1], ev[n - 1]);
    if !(l2 > 1e-12) || !lmax.is_finite() {
        return Err(Error::Numeric(format!("degenerate Laplacian spectrum (λ2={l2})")));
    }
    let alpha = 2.0 / (lmax + l2);
    let lap = graph_matrices(net).laplacian;
    let mut c = Mat::identity(n, n) - lap * alpha;
    // exact zeros off the edge set
    for i in 0..n {
        for j in 0..n {
            if i != j && !net.has_edge(i, j) {
                c[(i, j)] = 0.0;
            }
        }
    }
    Ok(MixingMatrix::new(c, MixingStrategy::LaplacianHeuristic))
}

pub fn build_mixing(net: &AgentNetwork, strategy: MixingStrategy) -> Result<MixingMatrix> {
    match strategy {
        MixingStrategy::MaxDegree => Ok(mix_max_degree(net)),
        MixingStrategy::MetropolisHastings => Ok(mix_metropolis(net)),
        MixingStrategy::LaplacianHeuristic => mix_laplacian_heuristic(net),
        MixingStrategy::Isolated => Ok(MixingMatrix::identity(net.n_agents())),
    }
}

/// Stopping parameters for an inner DAC run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacConfig {
    pub max_iters: usize,
    pub delta: f64,
}

impl Default for DacConfig {
    fn default() -> Self {
        DacConfig { max_iters: 300, delta: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DacTraceRow {
    pub iteration: usize,
    pub max_update_norm: f64,
    pub rnd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DacResult {
    pub final_states: Vec<Vector>,
    /// Rounds needed to reach `final_states`. The confirming round whose
    /// update fell below `delta` is not counted unless it was the only one.
    pub iterations: usize,
    pub rounds: usize,
    pub converged: bool,
    pub trace: Vec<DacTraceRow>,
}

impl DacResult {
    pub fn max_update_norms(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.max_update_norm).collect()
    }
}

pub fn dac_run(mix: &MixingMatrix, initial: &[Vector], max_iters: usize, delta: f64) -> Result<DacResult> {
    dac_run_tracked(mix, initial, max_iters, delta, None)
}

pub fn dac_run_tracked(
    mix: &MixingMatrix,
    initial: &[Vector],
    max_iters: usize,
    delta: f64,
    true_mean: Option<&Vector>,
) -> Result<DacResult> {
    if initial.len() != mix.n_agents() {
        return invalid(format!("{} states for {} agents", initial.len(), mix.n_agents()));
    }
    if !(delta > 0.0) {
        return invalid("DAC threshold must be positive");
    }
    let dim = initial.first().map_or(0, |v| v.len());
    if initial.iter().any(|v| v.len() != dim) {
        return invalid("DAC states must share one dimension");
    }
    let mut states = initial.to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < max_iters {
        let next = mix.mix_vecs(&states);
        let max_sq = next
            .iter()
            .zip(&states)
            .map(|(a, b)| (a - b).norm_squared())
            .fold(0.0_f64, f64::max);
        states = next;
        rounds += 1;
        let rnd = true_mean.map(|m| network_disagreement(&states, initial, m));
        trace.push(DacTraceRow { iteration: rounds, max_update_norm: max_sq.sqrt(), rnd });
        if max_sq < delta {
            converged = true;
            break;
        }
    }
    let iterations = if converged { (rounds - 1).max(1) } else { rounds };
    Ok(DacResult { final_states: states, iterations, rounds, converged, trace })
}

/// DAC over per-agent matrices, flattened column-major.
pub fn dac_mats(mix: &MixingMatrix, initial: &[Mat], cfg: DacConfig) -> Result<(Vec<Mat>, DacResult)> {
    let shape = initial.first().map_or((0, 0), |m| m.shape());
    let flat: Vec<Vector> = initial.iter().map(|m| Vector::from_column_slice(m.as_slice())).collect();
    let res = dac_run(mix, &flat, cfg.max_iters, cfg.delta)?;
    let mats = res
        .final_states
        .iter()
        .map(|v| Mat::from_column_slice(shape.0, shape.1, v.as_slice()))
        .collect();
    Ok((mats, res))
}

/// Network sums via DAC: the converged average times `L`.
pub fn dac_sum_mats(mix: &MixingMatrix, initial: &[Mat], cfg: DacConfig) -> Result<Vec<Mat>> {
    let l = mix.n_agents() as f64;
    let (mats, _) = dac_mats(mix, initial, cfg)?;
    Ok(mats.into_iter().map(|m| m * l).collect())
}

/// Relative network disagreement; agents starting exactly at the mean are skipped.
pub fn network_disagreement(states: &[Vector], initial: &[Vector], true_mean: &Vector) -> f64 {
    let l = states.len() as f64;
    let mut acc = 0.0;
    for (s, s0) in states.iter().zip(initial) {
        let den = (s0 - true_mean).norm_squared();
        if den > 0.0 {
            acc += (s - true_mean).norm_squared() / den;
        }
    }
    acc / l
}

pub fn write_dac_trace(path: &Path, res: &DacResult) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,max_update_norm,rnd")?;
    for r in &res.trace {
        let rnd = r.rnd.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(f, "{},{:e},{}", r.iteration, r.max_update_norm, rnd)?;
    }
    Ok(())
}

pub fn mean_of(states: &[Vector]) -> Vector {
    let mut m = Vector::zeros(states[0].len());
    for s in states {
        m += s;
    }
    m / states.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{gen_erdos_renyi, gen_linear};
    use rand::Rng as _;

    fn star4() -> AgentNetwork {
        AgentNetwork::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    fn random_states(l: usize, d: usize, seed: u64) -> Vec<Vector> {
        let mut rng = crate::rng_from_seed(seed);
        (0..l).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn max_degree_examples() {
        let c = mix_max_degree(&AgentNetwork::complete(4));
        assert!(c.weights.iter().all(|&w| (w - 0.25).abs() < 1e-15));
        let p = mix_max_degree(&gen_linear(3, 1).unwrap());
        for j in 0..3 {
            assert!((p.weights[(1, j)] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn metropolis_examples() {
        let k4 = AgentNetwork::complete(4);
        assert_eq!(mix_metropolis(&k4).weights, mix_max_degree(&k4).weights);
        let s = mix_metropolis(&star4());
        assert!((s.weights[(1, 0)] - 0.25).abs() < 1e-15);
        assert!((s.weights[(1, 1)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn heuristic_examples() {
        let c = mix_laplacian_heuristic(&AgentNetwork::complete(4)).unwrap();
        assert!(c.weights.iter().all(|&w| (w - 0.25).abs() < 1e-12));
        let p2 = mix_laplacian_heuristic(&gen_linear(2, 1).unwrap()).unwrap();
        assert!(p2.weights.iter().all(|&w| (w - 0.5).abs() < 1e-12));
    }

    #[test]
    fn row_sums_and_contraction() {
        for s in 0..10 {
            let net = gen_erdos_renyi(20, 0.5, s).unwrap();
            let md = mix_max_degree(&net);
            let lh = mix_laplacian_heuristic(&net).unwrap();
            for c in [&md, &mix_metropolis(&net), &lh] {
                for i in 0..20 {
                    let r: f64 = c.weights.row(i).sum();
                    assert!((r - 1.0).abs() < 1e-12);
                }
                assert!(c.essential_spectral_radius() < 1.0);
                assert_eq!(c.weights, c.weights.transpose());
            }
            assert!(lh.essential_spectral_radius() <= md.essential_spectral_radius() + 1e-12);
        }
    }

    #[test]
    fn dac_fixed_point_and_complete() {
        let net = gen_erdos_renyi(6, 0.5, 2).unwrap();
        let same = vec![Vector::from_vec(vec![1.0, -2.0]); 6];
        let r = dac_run(&mix_metropolis(&net), &same, 100, 1e-10).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_states, same);

        let init = random_states(5, 3, 1);
        let mean = mean_of(&init);
        let r = dac_run(&mix_max_degree(&AgentNetwork::complete(5)), &init, 100, 1e-12).unwrap();
        assert_eq!(r.iterations, 1);
        for s in &r.final_states {
            assert!((s - &mean).norm() < 1e-14);
        }
    }

    #[test]
    fn dac_reaches_mean() {
        let net = gen_erdos_renyi(8, 0.5, 9).unwrap();
        let init = random_states(8, 10, 4);
        let mean = mean_of(&init);
        let r = dac_run(&mix_metropolis(&net), &init, 300, 1e-12).unwrap();
        assert!(r.converged);
        for s in &r.final_states {
            assert!((s - &mean).amax() < 1e-4);
        }
    }

    #[test]
    fn disagreement_examples_and_monotone() {
        // equal initial deviation norms make RND proportional to the total deviation
        let raw = random_states(6, 4, 8);
        let m0 = mean_of(&raw);
        let init: Vec<Vector> = raw.iter().map(|v| {
            let d = v - &m0;
            &m0 + d.normalize()
        }).collect();
        let mean = mean_of(&init);
        assert!((network_disagreement(&init, &init, &mean) - 1.0).abs() < 1e-15);
        assert_eq!(network_disagreement(&vec![mean.clone(); 6], &init, &mean), 0.0);
        let net = gen_erdos_renyi(6, 0.5, 1).unwrap();
        let r = dac_run_tracked(&mix_metropolis(&net), &init, 50, 1e-30, Some(&mean)).unwrap();
        let rnd: Vec<f64> = r.trace.iter().map(|t| t.rnd.unwrap()).collect();
        for w in rnd.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }
}
