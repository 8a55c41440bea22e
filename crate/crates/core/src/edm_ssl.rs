//! Semi-supervised kernel ridge regression with a graph-Laplacian penalty,
//! trained over agents that each see only part of the data.
//!
//! Pipeline: agents exchange a few (optionally obfuscated) patterns and some
//! of the distances they can compute, every agent then completes its partial
//! view of the global Euclidean distance matrix, builds kernel and Laplacian
//! from it, and the readout coefficients are recovered with consensus sums.
//!
//! Patterns are globally ordered by agent: agent 0's labeled then unlabeled
//! points, then agent 1's, and so on.

use nalgebra::SVD;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::{dac_sum_mats, DacConfig, MixingMatrix};
use crate::error::{invalid, Error, Result};
use crate::netgraph::AgentNetwork;
use crate::{rng_from_seed, sub_seed, Mat, Vector};

/// Squared pairwise distances between the rows of `x`.
pub fn edm_from_points(x: &Mat) -> Mat {
    let n = x.nrows();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.row(i) - x.row(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// `diag(A)1ᵀ + 1diag(A)ᵀ − 2A`.
pub fn kappa(a: &Mat) -> Mat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| a[(i, i)] + a[(j, j)] - 2.0 * a[(i, j)])
}

/// Adjoint of [`kappa`] under the Frobenius product. For symmetric `A` this
/// is `2[diag(A1) − A]`; row and column sums enter separately otherwise.
pub fn kappa_adjoint(a: &Mat) -> Mat {
    let mut out = a * -2.0;
    for i in 0..a.nrows() {
        out[(i, i)] += a.row(i).sum() + a.column(i).sum();
    }
    out
}

/// `‖D̃ − D‖_F / ‖D‖_F`.
pub fn completion_error(estimate: &Mat, truth: &Mat) -> f64 {
    (estimate - truth).norm() / truth.norm()
}

/// One agent's partially sampled view of the global distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedEdm {
    pub estimate: Mat,
    /// 0/1 entries.
    pub mask: Mat,
    pub rank_hint: usize,
}

impl MaskedEdm {
    pub fn new(estimate: Mat, mask: Mat, rank_hint: usize) -> Result<Self> {
        if estimate.shape() != mask.shape() || !estimate.is_square() {
            return invalid("estimate and mask must be square and of equal size");
        }
        if rank_hint == 0 {
            return invalid("rank hint must be positive");
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return invalid("mask entries must be 0 or 1");
        }
        Ok(MaskedEdm { estimate, mask, rank_hint })
    }

    /// Keeps the entries of `truth` where `mask` is set.
    pub fn sample(truth: &Mat, mask: Mat, rank_hint: usize) -> Result<Self> {
        let estimate = truth.component_mul(&mask);
        Self::new(estimate, mask, rank_hint)
    }

    pub fn n(&self) -> usize {
        self.estimate.nrows()
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.mask.sum() / (self.n() * self.n()) as f64
    }

    /// Coordinate-list rows `(i, j, value)` for the sampled entries.
    pub fn to_coo(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.mask[(i, j)] != 0.0 {
                    out.push((i, j, self.estimate[(i, j)]));
                }
            }
        }
        out
    }

    pub fn from_coo(n: usize, entries: &[(usize, usize, f64)], rank_hint: usize) -> Result<Self> {
        let mut estimate = Mat::zeros(n, n);
        let mut mask = Mat::zeros(n, n);
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return invalid(format!("entry ({i}, {j}) outside a {n}×{n} matrix"));
            }
            estimate[(i, j)] = v;
            mask[(i, j)] = 1.0;
        }
        Self::new(estimate, mask, rank_hint)
    }
}

/// Uniform symmetric mask with the diagonal always sampled.
pub fn random_symmetric_mask(n: usize, fraction: f64, seed: u64) -> Mat {
    let mut rng = rng_from_seed(seed);
    let mut m = Mat::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < fraction {
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct SslShard {
    pub labeled_x: Mat,
    pub labels: Vec<f64>,
    pub unlabeled_x: Mat,
}

impl SslShard {
    pub fn n_labeled(&self) -> usize {
        self.labeled_x.nrows()
    }

    pub fn n_patterns(&self) -> usize {
        self.labeled_x.nrows() + self.unlabeled_x.nrows()
    }

    /// Labeled rows first.
    pub fn inputs(&self) -> Mat {
        stack_rows(&[&self.labeled_x, &self.unlabeled_x])
    }
}

/// Per-agent labeled and unlabeled shards.
#[derive(Debug, Clone)]
pub struct SslPartition {
    pub shards: Vec<SslShard>,
}

fn stack_rows(parts: &[&Mat]) -> Mat {
    let cols = parts.iter().map(|m| m.ncols()).max().unwrap_or(0);
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        if p.nrows() > 0 {
            out.rows_mut(r, p.nrows()).copy_from(p);
        }
        r += p.nrows();
    }
    out
}

fn rows_of(x: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

impl SslPartition {
    /// Shuffles, takes `n_labeled` labeled and `n_unlabeled` unlabeled
    /// points, spreads each group evenly over `n_agents`; the rest is returned
    /// as a test set.
    pub fn split(
        x: &Mat,
        y: &Vector,
        n_labeled: usize,
        n_unlabeled: usize,
        n_agents: usize,
        seed: u64,
    ) -> Result<(SslPartition, Mat, Vector)> {
        if n_agents == 0 {
            return invalid("need at least one agent");
        }
        if n_labeled + n_unlabeled > x.nrows() || x.nrows() != y.len() {
            return invalid("not enough points for the requested split");
        }
        let mut idx: Vec<usize> = (0..x.nrows()).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        let (lab, rest) = idx.split_at(n_labeled);
        let (unl, test) = rest.split_at(n_unlabeled);
        let lab_sizes = crate::datagen::split_sizes(n_labeled, n_agents);
        let unl_sizes = crate::datagen::split_sizes(n_unlabeled, n_agents);
        let (mut lo, mut uo) = (0, 0);
        let mut shards = Vec::with_capacity(n_agents);
        for k in 0..n_agents {
            let li = &lab[lo..lo + lab_sizes[k]];
            let ui = &unl[uo..uo + unl_sizes[k]];
            lo += lab_sizes[k];
            uo += unl_sizes[k];
            shards.push(SslShard {
                labeled_x: rows_of(x, li),
                labels: li.iter().map(|&i| y[i]).collect(),
                unlabeled_x: rows_of(x, ui),
            });
        }
        let test_y = Vector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        Ok((SslPartition { shards }, rows_of(x, test), test_y))
    }

    pub fn n_agents(&self) -> usize {
        self.shards.len()
    }

    pub fn n_total(&self) -> usize {
        self.shards.iter().map(SslShard::n_patterns).sum()
    }

    /// Global index ranges owned by each agent.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.shards
            .iter()
            .map(|s| {
                let r = start..start + s.n_patterns();
                start = r.end;
                r
            })
            .collect()
    }

    /// All inputs in the global order.
    pub fn global_inputs(&self) -> Mat {
        let parts: Vec<Mat> = self.shards.iter().map(SslShard::inputs).collect();
        stack_rows(&parts.iter().collect::<Vec<_>>())
    }

    /// Labeled indicator and zero-padded labels restricted to agent `k`
    /// (or every agent when `None`).
    pub fn label_vectors(&self, k: Option<usize>) -> (Vec<bool>, Vector) {
        let n = self.n_total();
        let mut j = vec![false; n];
        let mut y = Vector::zeros(n);
        for (a, (s, r)) in self.shards.iter().zip(self.ranges()).enumerate() {
            if k.is_some_and(|k| k != a) {
                continue;
            }
            for (i, &lab) in s.labels.iter().enumerate() {
                j[r.start + i] = true;
                y[r.start + i] = lab;
            }
        }
        (j, y)
    }
}

/// Random obfuscation applied to every shared pattern. One draw is shared by
/// all agents for the whole run.
#[derive(Debug, Clone)]
pub enum PrivacyTransform {
    /// `u = R x / (√m σ)`, `R_ij ~ N(0, σ²)`.
    Linear { r: Mat, scale: f64 },
    /// `v = b + Q tanh(a + Cx)`.
    Nonlinear { a: Vector, b: Vector, q: Mat, c: Mat },
}

fn normal_mat(rows: usize, cols: usize, sd: f64, rng: &mut crate::Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

impl PrivacyTransform {
    pub fn linear(d: usize, m: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0) || m == 0 {
            return invalid("linear privacy needs m ≥ 1 and σ > 0");
        }
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let r = Mat::from_fn(m, d, |_, _| normal.sample(&mut rng));
        Ok(PrivacyTransform::Linear { r, scale: 1.0 / ((m as f64).sqrt() * sigma) })
    }

    /// `sd = (σ_a, σ_b, σ_Q, σ_C)`; `t` is the hidden width.
    pub fn nonlinear(d: usize, m: usize, t: usize, sd: [f64; 4], seed: u64) -> Result<Self> {
        if m == 0 || t == 0 || sd.iter().any(|s| !(*s >= 0.0)) {
            return invalid("nonlinear privacy needs m, t ≥ 1 and non-negative spreads");
        }
        let mut rng = rng_from_seed(seed);
        let a = normal_mat(t, 1, sd[0], &mut rng).column(0).into_owned();
        let b = normal_mat(m, 1, sd[1], &mut rng).column(0).into_owned();
        let q = normal_mat(m, t, sd[2], &mut rng);
        let c = normal_mat(t, d, sd[3], &mut rng);
        Ok(PrivacyTransform::Nonlinear { a, b, q, c })
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            PrivacyTransform::Linear { r, scale } => (r * x) * *scale,
            PrivacyTransform::Nonlinear { a, b, q, c } => {
                let inner = (c * x + a).map(f64::tanh);
                b + q * inner
            }
        }
    }

    pub fn apply_rows(&self, x: &Mat) -> Mat {
        let rows: Vec<Vector> = x.row_iter().map(|r| self.apply(&r.transpose())).collect();
        let cols = rows.first().map_or(0, |v| v.len());
        Mat::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }
}

pub fn privacy_linear(x: &Vector, m: usize, sigma: f64, seed: u64) -> Result<Vector> {
    Ok(PrivacyTransform::linear(x.len(), m, sigma, seed)?.apply(x))
}

pub fn privacy_nonlinear(x: &Vector, m: usize, t: usize, sd: [f64; 4], seed: u64) -> Result<Vector> {
    Ok(PrivacyTransform::nonlinear(x.len(), m, t, sd, seed)?.apply(x))
}

/// Parameters of the two sharing phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ExchangeConfig {
    pub p1: f64,
    pub n1: usize,
    pub p2: f64,
    pub n2: usize,
}

/// Own items to send this round, then relayed ones.
fn share_counts(n: usize, n_max: usize, p: f64, base: usize) -> (usize, usize) {
    let own = ((n_max - n + 1) as f64 / n_max as f64 * p * base as f64).floor() as usize;
    let relay = ((n - 1) as f64 / n_max as f64 * p * base as f64).floor() as usize;
    (own.max(1), relay)
}

/// Draws up to `count` own items (without replacement over the whole run)
/// plus up to `relay` previously received ones.
fn pick<T: Copy>(own_left: &mut Vec<T>, received: &[T], count: usize, relay: usize, rng: &mut crate::Rng) -> Vec<T> {
    let take = count.min(own_left.len());
    let mut out: Vec<T> = own_left.drain(own_left.len() - take..).collect();
    let relay = relay.min(received.len());
    out.extend(received.choose_multiple(rng, relay).copied());
    out
}

/// Simulates pattern sharing, local distance computation and entry sharing.
/// Returns each agent's sampled view of the global distance matrix.
pub fn simulate_exchange(
    net: &AgentNetwork,
    partition: &SslPartition,
    cfg: &ExchangeConfig,
    rank_hint: usize,
    seed: u64,
    privacy: Option<&PrivacyTransform>,
) -> Result<Vec<MaskedEdm>> {
    let l = partition.n_agents();
    if net.n_agents() != l {
        return invalid(format!("network has {} agents, partition {}", net.n_agents(), l));
    }
    for p in [cfg.p1, cfg.p2] {
        if !(p > 0.0 && p <= 1.0) {
            return invalid(format!("exchange fraction {p} outside (0, 1]"));
        }
    }
    let n = partition.n_total();
    let ranges = partition.ranges();
    let owner: Vec<usize> = (0..n).map(|i| ranges.iter().position(|r| r.contains(&i)).unwrap()).collect();
    let x = partition.global_inputs();
    let shared: Mat = match privacy {
        Some(t) => t.apply_rows(&x),
        None => x.clone(),
    };
    let mut rngs: Vec<crate::Rng> = (0..l).map(|k| rng_from_seed(sub_seed(seed, k as u64))).collect();

    // pattern sharing
    let mut known: Vec<Vec<bool>> = (0..l).map(|k| (0..n).map(|i| owner[i] == k).collect()).collect();
    let mut received: Vec<Vec<usize>> = vec![Vec::new(); l];
    let mut own_left: Vec<Vec<usize>> = ranges
        .iter()
        .zip(rngs.iter_mut())
        .map(|(r, rng)| {
            let mut v: Vec<usize> = r.clone().collect();
            v.shuffle(rng);
            v
        })
        .collect();
    for round in 1..=cfg.n1 {
        let outgoing: Vec<Vec<usize>> = (0..l)
            .map(|k| {
                let (own, relay) = share_counts(round, cfg.n1, cfg.p1, ranges[k].len());
                pick(&mut own_left[k], &received[k], own, relay, &mut rngs[k])
            })
            .collect();
        for (k, items) in outgoing.iter().enumerate() {
            for nb in net.neighbors(k) {
                for &i in items {
                    if !known[nb][i] {
                        known[nb][i] = true;
                        received[nb].push(i);
                    }
                }
            }
        }
    }

    // local distances over everything each agent knows
    let mut views: Vec<MaskedEdm> = (0..l)
        .map(|k| {
            let idx: Vec<usize> = (0..n).filter(|&i| known[k][i]).collect();
            let mut est = Mat::zeros(n, n);
            let mut mask = Mat::zeros(n, n);
            for (a, &i) in idx.iter().enumerate() {
                mask[(i, i)] = 1.0;
                for &j in &idx[a + 1..] {
                    let both_own = owner[i] == k && owner[j] == k;
                    let v = if both_own {
                        (x.row(i) - x.row(j)).norm_squared()
                    } else {
                        (shared.row(i) - shared.row(j)).norm_squared()
                    };
                    est[(i, j)] = v;
                    est[(j, i)] = v;
                    mask[(i, j)] = 1.0;
                    mask[(j, i)] = 1.0;
                }
            }
            MaskedEdm { estimate: est, mask, rank_hint }
        })
        .collect();

    // entry sharing; entries are upper-triangular pairs
    if cfg.n2 > 0 {
        let mut own_entries: Vec<Vec<(usize, usize)>> = views
            .iter()
            .zip(rngs.iter_mut())
            .map(|(v, rng)| {
                let mut e = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if v.mask[(i, j)] != 0.0 {
                            e.push((i, j));
                        }
                    }
                }
                e.shuffle(rng);
                e
            })
            .collect();
        let base: Vec<usize> = own_entries.iter().map(Vec::len).collect();
        let mut recv_entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); l];
        for round in 1..=cfg.n2 {
            let outgoing: Vec<Vec<(usize, usize, f64)>> = (0..l)
                .map(|k| {
                    let (own, relay) = share_counts(round, cfg.n2, cfg.p2, base[k]);
                    pick(&mut own_entries[k], &recv_entries[k], own, relay, &mut rngs[k])
                        .into_iter()
                        .map(|(i, j)| (i, j, views[k].estimate[(i, j)]))
                        .collect()
                })
                .collect();
            for (k, items) in outgoing.iter().enumerate() {
                for nb in net.neighbors(k) {
                    let v = &mut views[nb];
                    for &(i, j, val) in items {
                        if v.mask[(i, j)] == 0.0 {
                            v.estimate[(i, j)] = val;
                            v.estimate[(j, i)] = val;
                            v.mask[(i, j)] = 1.0;
                            v.mask[(j, i)] = 1.0;
                            recv_entries[nb].push((i, j));
                        }
                    }
                }
            }
        }
    }
    Ok(views)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletionTraceRow {
    pub iteration: usize,
    /// Sum of the agents' masked costs.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct DgdCompletion {
    /// `κ(V_k V_kᵀ)` per agent.
    pub estimates: Vec<Mat>,
    pub factors: Vec<Mat>,
    pub iterations: usize,
    pub diverged: bool,
    pub trace: Vec<CompletionTraceRow>,
}

fn masked_residual(view: &MaskedEdm, v: &Mat) -> Mat {
    (kappa(&(v * v.transpose())) - &view.estimate).component_mul(&view.mask)
}

/// `‖Ω∘[D̂ − κ(VVᵀ)]‖²_F`.
pub fn local_completion_cost(view: &MaskedEdm, v: &Mat) -> f64 {
    masked_residual(view, v).norm_squared()
}

/// `κ*{Ω∘(κ(VVᵀ) − D̂)}V`.
pub fn local_completion_gradient(view: &MaskedEdm, v: &Mat) -> Mat {
    kappa_adjoint(&masked_residual(view, v)) * v
}

/// Common random start, scaled so `κ(VVᵀ)` has roughly the magnitude of the
/// agent's sampled entries.
fn initial_factor(view: &MaskedEdm, r: usize, seed: u64) -> Mat {
    let sampled = view.mask.sum() - view.mask.diagonal().sum();
    let mean = if sampled > 0.0 { view.estimate.sum() / sampled } else { 1.0 };
    let s = (mean.max(1e-12) / (2.0 * r as f64)).sqrt();
    let mut rng = rng_from_seed(seed);
    normal_mat(view.n(), r, s, &mut rng)
}

/// Diffusion gradient descent on the factor `V` (N×r) of the completed
/// matrix: local gradient step, then neighbor averaging. Stops early if the
/// total cost grows tenfold over its running minimum.
pub fn dgd_edm_complete(
    views: &[MaskedEdm],
    mix: &MixingMatrix,
    r: usize,
    eta: f64,
    max_iters: usize,
    seed: u64,
) -> Result<DgdCompletion> {
    if views.len() != mix.n_agents() || views.is_empty() {
        return invalid("one view per agent is required");
    }
    if r == 0 || !(eta > 0.0) {
        return invalid("rank must be positive and the step size positive");
    }
    let n = views[0].n();
    if views.iter().any(|v| v.n() != n) {
        return invalid("views must share one size");
    }
    let mut vs: Vec<Mat> = views.iter().map(|v| initial_factor(v, r, seed)).collect();
    let total_cost = |vs: &[Mat]| -> f64 { views.iter().zip(vs).map(|(w, v)| local_completion_cost(w, v)).sum() };
    let mut best = total_cost(&vs);
    let mut trace = vec![CompletionTraceRow { iteration: 0, cost: best }];
    let mut last_good = vs.clone();
    let mut diverged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let stepped: Vec<Mat> = views
            .par_iter()
            .zip(vs.par_iter())
            .map(|(w, v)| v - local_completion_gradient(w, v) * eta)
            .collect();
        vs = mix.mix_mats(&stepped);
        let cost = total_cost(&vs);
        trace.push(CompletionTraceRow { iteration: it, cost });
        if !cost.is_finite() || cost > 10.0 * best {
            diverged = true;
            vs = last_good;
            break;
        }
        iterations = it;
        best = best.min(cost);
        last_good.clone_from(&vs);
    }
    let estimates = vs.iter().map(|v| kappa(&(v * v.transpose()))).collect();
    Ok(DgdCompletion { estimates, factors: vs, iterations, diverged, trace })
}

#[derive(Debug, Clone)]
pub struct BlockCompletion {
    /// Gathered and symmetrized estimate, shared by all agents.
    pub estimate: Mat,
    pub iterations: usize,
    pub converged: bool,
}

fn pinv(a: &Mat) -> Result<Mat> {
    SVD::new(a.clone(), true, true)
        .pseudo_inverse(1e-12 * a.norm().max(1e-300))
        .map_err(|e| Error::Numeric(format!("pseudoinverse failed: {e}")))
}

/// Decentralized low-rank factorization over column blocks. Agent `k` owns
/// the columns `columns[k]` of its view. Each round: `B_k = A_k⁺D̃_k`, an
/// exact-consensus style update of the shared left factor `A_k`, then
/// `D̃_k = A_kB_k + P_Ω(D̂_k − A_kB_k)` clamped at zero. The blocks are
/// gathered and symmetrized at the end.
pub fn block_edm_complete(
    views: &[MaskedEdm],
    columns: &[Vec<usize>],
    mix: &MixingMatrix,
    r: usize,
    alpha: f64,
    max_iters: usize,
    seed: u64,
) -> Result<BlockCompletion> {
    let l = mix.n_agents();
    if views.len() != l || columns.len() != l || l == 0 {
        return invalid("one view and one column set per agent are required");
    }
    if r == 0 || !(alpha > 0.0) {
        return invalid("rank and step must be positive");
    }
    let n = views[0].n();
    let mut seen = vec![false; n];
    for c in columns.iter().flatten() {
        if *c >= n || seen[*c] {
            return invalid("column sets must partition the pattern indices");
        }
        seen[*c] = true;
    }
    if seen.iter().any(|s| !s) {
        return invalid("column sets must cover every pattern");
    }
    let pick_cols = |m: &Mat, cols: &[usize]| Mat::from_fn(n, cols.len(), |i, j| m[(i, cols[j])]);
    let dhat: Vec<Mat> = views.iter().zip(columns).map(|(v, c)| pick_cols(&v.estimate, c)).collect();
    let mask: Vec<Mat> = views.iter().zip(columns).map(|(v, c)| pick_cols(&v.mask, c)).collect();
    let project = |k: usize, ab: &Mat| -> Mat {
        let mut d = ab + (&dhat[k] - ab).component_mul(&mask[k]);
        d.apply(|x| *x = x.max(0.0));
        d
    };

    let a0 = normal_mat(n, r, 1.0, &mut rng_from_seed(seed));
    let mut a: Vec<Mat> = vec![a0; l];
    let mut d: Vec<Mat> = dhat.clone();
    let grad = |a: &Mat, d: &Mat| -> Result<(Mat, Mat)> {
        let b = pinv(a)? * d;
        Ok((a - d * b.transpose(), b))
    };
    let mut g_prev: Vec<Mat> = Vec::with_capacity(l);
    for k in 0..l {
        g_prev.push(grad(&a[k], &d[k])?.0);
    }
    let mut a_prev = a.clone();
    // first step: plain diffusion plus gradient
    let mixed = mix.mix_mats(&a);
    a = (0..l).map(|k| &mixed[k] - &g_prev[k] * alpha).collect();

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let mut g = Vec::with_capacity(l);
        let mut change = 0.0;
        let mut scale = 0.0;
        for k in 0..l {
            let (gk, b) = grad(&a[k], &d[k])?;
            let new_d = project(k, &(&a[k] * b));
            change += (&new_d - &d[k]).norm_squared();
            scale += new_d.norm_squared();
            d[k] = new_d;
            g.push(gk);
        }
        iterations = it;
        if change.sqrt() <= 1e-10 * scale.sqrt().max(1e-300) {
            converged = true;
            break;
        }
        // A[n+1] = A[n] + C A[n] − C̃ A[n−1] − α(g[n] − g[n−1]),  C̃ = (I + C)/2
        let ca = mix.mix_mats(&a);
        let ca_prev = mix.mix_mats(&a_prev);
        let next: Vec<Mat> = (0..l)
            .map(|k| &a[k] + &ca[k] - (&a_prev[k] + &ca_prev[k]) * 0.5 - (&g[k] - &g_prev[k]) * alpha)
            .collect();
        a_prev = std::mem::replace(&mut a, next);
        g_prev = g;
        if a.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("block completion diverged".into()));
        }
    }

    let mut full = Mat::zeros(n, n);
    for (k, cols) in columns.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            full.set_column(c, &d[k].column(j));
        }
    }
    let estimate = (&full + full.transpose()) * 0.5;
    Ok(BlockCompletion { estimate, iterations, converged })
}

/// Kernel matrix and (powered) normalized Laplacian.
#[derive(Debug, Clone)]
pub struct GraphKernel {
    pub kernel: Mat,
    pub laplacian: Mat,
}

pub fn gaussian_kernel(d: &Mat, sigma_k: f64) -> Mat {
    let s = 2.0 * sigma_k * sigma_k;
    d.map(|v| (-v / s).exp())
}

/// `nn`-nearest-neighbor graph weighted by the Gaussian kernel, made
/// symmetric by keeping the larger of the two directed weights.
pub fn knn_adjacency(d: &Mat, nn: usize, sigma_k: f64) -> Mat {
    let n = d.nrows();
    let s = 2.0 * sigma_k * sigma_k;
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
        for &j in order.iter().take(nn) {
            let v = (-d[(i, j)] / s).exp();
            w[(i, j)] = w[(i, j)].max(v);
            w[(j, i)] = w[(j, i)].max(v);
        }
    }
    w
}

pub fn build_graph_kernel(d: &Mat, nn: usize, sigma_k: f64, q: u32) -> Result<GraphKernel> {
    if !d.is_square() {
        return invalid("distance matrix must be square");
    }
    if !(sigma_k > 0.0) || q == 0 || nn == 0 {
        return invalid("need σ_K > 0, q ≥ 1 and nn ≥ 1");
    }
    let n = d.nrows();
    let w = knn_adjacency(d, nn, sigma_k);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let g = w.row(i).sum();
            if g > 0.0 { 1.0 / g.sqrt() } else { 0.0 }
        })
        .collect();
    let base = Mat::from_fn(n, n, |i, j| {
        let diag = if i == j && inv_sqrt[i] > 0.0 { 1.0 } else { 0.0 };
        diag - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    let mut laplacian = base.clone();
    for _ in 1..q {
        laplacian = &laplacian * &base;
    }
    Ok(GraphKernel { kernel: gaussian_kernel(d, sigma_k), laplacian })
}

#[derive(Debug, Clone, Serialize)]
pub struct LapKrrModel {
    pub alpha: Vec<f64>,
    pub gamma_a: f64,
    pub gamma_i: f64,
    pub sigma_k: f64,
    pub nn: usize,
    pub q: u32,
}

/// `JK + γ_A I + γ_I L K`.
pub fn lapkrr_system(gk: &GraphKernel, labeled: &[bool], gamma_a: f64, gamma_i: f64) -> Mat {
    let n = gk.kernel.nrows();
    let mut m = &gk.laplacian * &gk.kernel * gamma_i;
    for i in 0..n {
        m[(i, i)] += gamma_a;
        if labeled[i] {
            let row = gk.kernel.row(i);
            let mut dst = m.row_mut(i);
            dst += row;
        }
    }
    m
}

fn solve(m: Mat, rhs: &Vector) -> Result<Vector> {
    m.lu().solve(rhs).ok_or_else(|| Error::Numeric("LapKRR system is singular".into()))
}

/// `α = (JK + γ_A I + γ_I L K)⁻¹ ŷ`.
pub fn lapkrr_centralized(gk: &GraphKernel, labeled: &[bool], y_hat: &Vector, gamma_a: f64, gamma_i: f64) -> Result<Vector> {
    let n = gk.kernel.nrows();
    if labeled.len() != n || y_hat.len() != n {
        return invalid("label vectors must match the kernel size");
    }
    if !(gamma_a > 0.0) || gamma_i < 0.0 {
        return invalid("need γ_A > 0 and γ_I ≥ 0");
    }
    solve(lapkrr_system(gk, labeled, gamma_a, gamma_i), y_hat)
}

/// `K(x, x_i)` for test rows against training rows.
pub fn cross_kernel(x_test: &Mat, x_train: &Mat, sigma_k: f64) -> Mat {
    let s = 2.0 * sigma_k * sigma_k;
    Mat::from_fn(x_test.nrows(), x_train.nrows(), |i, j| {
        (-(x_test.row(i) - x_train.row(j)).norm_squared() / s).exp()
    })
}

pub fn lapkrr_predict(alpha: &Vector, x_train: &Mat, x_test: &Mat, sigma_k: f64) -> Vector {
    cross_kernel(x_test, x_train, sigma_k) * alpha
}

/// Fraction of sign disagreements.
pub fn sign_error(pred: &Vector, truth: &Vector) -> f64 {
    let wrong = pred.iter().zip(truth.iter()).filter(|(p, t)| (**p >= 0.0) != (**t >= 0.0)).count();
    wrong as f64 / truth.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct DistrLapKrr {
    /// `M_k⁻¹ Ĵ_kᵀŷ_k` before summation.
    pub local_alpha: Vec<Vector>,
    /// Each agent's copy of `Σ_k α_k`.
    pub alpha: Vec<Vector>,
}

/// Each agent builds its own system from its completed distance matrix,
/// solves for its labels only, and the solutions are summed by consensus.
pub fn distr_lapkrr(
    mix: &MixingMatrix,
    partition: &SslPartition,
    completed: &[Mat],
    nn: usize,
    sigma_k: f64,
    q: u32,
    gamma_a: f64,
    gamma_i: f64,
    dac: DacConfig,
) -> Result<DistrLapKrr> {
    let l = partition.n_agents();
    if completed.len() != l || mix.n_agents() != l {
        return invalid("one completed matrix per agent is required");
    }
    let n = partition.n_total();
    let locals: Vec<(Vec<bool>, Vector)> = (0..l).map(|k| partition.label_vectors(Some(k))).collect();
    let j_parts: Vec<Mat> = locals
        .iter()
        .map(|(j, _)| Mat::from_iterator(n, 1, j.iter().map(|&b| if b { 1.0 } else { 0.0 })))
        .collect();
    let j_tot = dac_sum_mats(mix, &j_parts, dac)?;
    let local_alpha: Vec<Vector> = (0..l)
        .into_par_iter()
        .map(|k| {
            // the indicator is binary by construction; strip the DAC residue
            let labeled: Vec<bool> = j_tot[k].iter().map(|&v| v > 0.5).collect();
            let gk = build_graph_kernel(&completed[k], nn, sigma_k, q)?;
            solve(lapkrr_system(&gk, &labeled, gamma_a, gamma_i), &locals[k].1)
        })
        .collect::<Result<_>>()?;
    let as_mats: Vec<Mat> = local_alpha.iter().map(|a| Mat::from_column_slice(n, 1, a.as_slice())).collect();
    let alpha = dac_sum_mats(mix, &as_mats, dac)?.into_iter().map(|m| m.column(0).into_owned()).collect();
    Ok(DistrLapKrr { local_alpha, alpha })
}

/// Agent `k` evaluates its own patterns' part of the expansion with its copy
/// of `α`; the partial outputs are summed by consensus.
pub fn distr_predict(
    mix: &MixingMatrix,
    partition: &SslPartition,
    alpha: &[Vector],
    x_test: &Mat,
    sigma_k: f64,
    dac: DacConfig,
) -> Result<Vec<Vector>> {
    let ranges = partition.ranges();
    let partials: Vec<Mat> = partition
        .shards
        .iter()
        .zip(&ranges)
        .zip(alpha)
        .map(|((s, r), a)| {
            let own = a.rows(r.start, r.len()).into_owned();
            let f = lapkrr_predict(&own, &s.inputs(), x_test, sigma_k);
            Mat::from_column_slice(f.len(), 1, f.as_slice())
        })
        .collect();
    Ok(dac_sum_mats(mix, &partials, dac)?.into_iter().map(|m| m.column(0).into_owned()).collect())
}

/// LapKRR trained on one agent's shard alone.
pub fn local_lapkrr(shard: &SslShard, nn: usize, sigma_k: f64, q: u32, gamma_a: f64, gamma_i: f64) -> Result<Vector> {
    let x = shard.inputs();
    let n = x.nrows();
    let gk = build_graph_kernel(&edm_from_points(&x), nn.min(n.saturating_sub(1)).max(1), sigma_k, q)?;
    let labeled: Vec<bool> = (0..n).map(|i| i < shard.n_labeled()).collect();
    let mut y = Vector::zeros(n);
    for (i, &v) in shard.labels.iter().enumerate() {
        y[i] = v;
    }
    lapkrr_centralized(&gk, &labeled, &y, gamma_a, gamma_i)
}
