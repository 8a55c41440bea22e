//! Linear semi-supervised SVM with a smooth unlabeled loss, solved by plain
//! gradient descent, by diffusion gradient descent over a network, or by the
//! NEXT scheme (local convex surrogates plus dynamic gradient tracking).
//!
//! Objective: `J(w) = Σ_k [l_k(w) + g_k(w)] + ½‖w‖²` with
//! `l_k = (C1/2L) Σ max(0, 1 − y(wᵀx + b))²` over agent `k`'s labeled points
//! and `g_k = (C2/2U) Σ exp(−s(wᵀx + b)²)` over its unlabeled ones. `L`, `U`
//! are network-wide counts and the offset `b` is fixed.

use rayon::prelude::*;
use serde::Serialize;

use crate::consensus::{dac_sum_mats, DacConfig, MixingMatrix};
use crate::error::{invalid, Result};
use crate::{Mat, Vector};

#[derive(Debug, Clone)]
pub struct S3vmShard {
    pub labeled_x: Mat,
    pub labels: Vec<f64>,
    pub unlabeled_x: Mat,
}

#[derive(Debug, Clone)]
pub struct S3vmProblem {
    pub shards: Vec<S3vmShard>,
    pub c1: f64,
    pub c2: f64,
    pub s: f64,
    /// Target share of positive labels; fixes `b = 2r − 1`.
    pub r: f64,
    pub b: f64,
}

/// Per-agent loss values and gradients at one point.
#[derive(Debug, Clone)]
pub struct LocalTerms {
    pub labeled: f64,
    pub unlabeled: f64,
    pub reg: f64,
    pub grad_labeled: Vector,
    pub grad_unlabeled: Vector,
    pub grad_reg: Vector,
}

impl S3vmProblem {
    /// Defaults `C1 = C2 = 1`, `s = 5`.
    pub fn new(shards: Vec<S3vmShard>, r: f64) -> Result<Self> {
        Self::with_weights(shards, 1.0, 1.0, 5.0, r)
    }

    pub fn with_weights(shards: Vec<S3vmShard>, c1: f64, c2: f64, s: f64, r: f64) -> Result<Self> {
        if shards.is_empty() {
            return invalid("need at least one shard");
        }
        if c1 < 0.0 || c2 < 0.0 || !(s > 0.0) || !(0.0..=1.0).contains(&r) {
            return invalid("need C1, C2 ≥ 0, s > 0 and r in [0, 1]");
        }
        let d = shards[0].labeled_x.ncols().max(shards[0].unlabeled_x.ncols());
        for sh in &shards {
            if (sh.labeled_x.nrows() > 0 && sh.labeled_x.ncols() != d)
                || (sh.unlabeled_x.nrows() > 0 && sh.unlabeled_x.ncols() != d)
                || sh.labels.len() != sh.labeled_x.nrows()
            {
                return invalid("shards disagree on dimensions");
            }
            if sh.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                return invalid("labels must be ±1");
            }
        }
        Ok(S3vmProblem { shards, c1, c2, s, r, b: 2.0 * r - 1.0 })
    }

    pub fn n_agents(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.shards.iter().map(|s| s.labeled_x.ncols().max(s.unlabeled_x.ncols())).max().unwrap_or(0)
    }

    pub fn n_labeled(&self) -> usize {
        self.shards.iter().map(|s| s.labels.len()).sum()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.shards.iter().map(|s| s.unlabeled_x.nrows()).sum()
    }

    /// The same data as one agent.
    pub fn merged(&self) -> S3vmProblem {
        let d = self.dim();
        let stack = |f: &dyn Fn(&S3vmShard) -> &Mat| {
            let rows: usize = self.shards.iter().map(|s| f(s).nrows()).sum();
            let mut m = Mat::zeros(rows, d);
            let mut r = 0;
            for s in &self.shards {
                let x = f(s);
                if x.nrows() > 0 {
                    m.rows_mut(r, x.nrows()).copy_from(x);
                }
                r += x.nrows();
            }
            m
        };
        let shard = S3vmShard {
            labeled_x: stack(&|s| &s.labeled_x),
            labels: self.shards.iter().flat_map(|s| s.labels.iter().copied()).collect(),
            unlabeled_x: stack(&|s| &s.unlabeled_x),
        };
        S3vmProblem { shards: vec![shard], ..self.clone() }
    }

    /// Labeled data only, no unlabeled term.
    pub fn supervised(&self) -> S3vmProblem {
        let shards = self
            .shards
            .iter()
            .map(|s| S3vmShard { unlabeled_x: Mat::zeros(0, s.unlabeled_x.ncols()), ..s.clone() })
            .collect();
        S3vmProblem { shards, c2: 0.0, ..self.clone() }
    }

    /// Smooth part `h_k = l_k + g_k` and its gradient.
    pub fn local_smooth(&self, w: &Vector, k: usize) -> (f64, Vector) {
        let t = losses_and_grads(w, self, k);
        (t.labeled + t.unlabeled, t.grad_labeled + t.grad_unlabeled)
    }

    pub fn objective(&self, w: &Vector) -> f64 {
        (0..self.n_agents()).map(|k| self.local_smooth(w, k).0).sum::<f64>() + 0.5 * w.norm_squared()
    }

    pub fn gradient(&self, w: &Vector) -> Vector {
        (0..self.n_agents()).fold(w.clone(), |acc, k| acc + self.local_smooth(w, k).1)
    }
}

/// Hinge indicator with the kink counted as active.
fn active(o: f64) -> bool {
    o >= 0.0
}

pub fn losses_and_grads(w: &Vector, p: &S3vmProblem, k: usize) -> LocalTerms {
    let sh = &p.shards[k];
    let d = w.len();
    let l_tot = p.n_labeled().max(1) as f64;
    let u_tot = p.n_unlabeled().max(1) as f64;
    let mut labeled = 0.0;
    let mut grad_labeled = Vector::zeros(d);
    for (i, &y) in sh.labels.iter().enumerate() {
        let x = sh.labeled_x.row(i);
        let o = 1.0 - y * ((x * w)[0] + p.b);
        if active(o) {
            let h = o.max(0.0);
            labeled += h * h;
            grad_labeled -= x.transpose() * (h * y);
        }
    }
    labeled *= p.c1 / (2.0 * l_tot);
    grad_labeled *= p.c1 / l_tot;
    let mut unlabeled = 0.0;
    let mut grad_unlabeled = Vector::zeros(d);
    if p.c2 != 0.0 {
        for x in sh.unlabeled_x.row_iter() {
            let f = (x * w)[0] + p.b;
            let e = (-p.s * f * f).exp();
            unlabeled += e;
            grad_unlabeled -= x.transpose() * (e * f);
        }
    }
    unlabeled *= p.c2 / (2.0 * u_tot);
    grad_unlabeled *= p.c2 * p.s / u_tot;
    LocalTerms { labeled, unlabeled, reg: 0.5 * w.norm_squared(), grad_labeled, grad_unlabeled, grad_reg: w.clone() }
}

/// Network-wide mean of the unlabeled points by consensus; every agent's
/// data (labeled and unlabeled) is shifted by it. Returns the mean agent 0
/// computed and `b = 2r − 1`.
pub fn fix_offset_and_center(mix: &MixingMatrix, shards: &mut [S3vmShard], r: f64, dac: DacConfig) -> Result<(Vec<Vector>, f64)> {
    if shards.len() != mix.n_agents() {
        return invalid("one shard per agent is required");
    }
    let d = shards.iter().map(|s| s.unlabeled_x.ncols().max(s.labeled_x.ncols())).max().unwrap_or(0);
    let parts: Vec<Mat> = shards
        .iter()
        .map(|s| {
            let mut v = Mat::zeros(d + 1, 1);
            for row in s.unlabeled_x.row_iter() {
                for j in 0..d {
                    v[j] += row[j];
                }
            }
            v[d] = s.unlabeled_x.nrows() as f64;
            v
        })
        .collect();
    let sums = dac_sum_mats(mix, &parts, dac)?;
    let mut means = Vec::with_capacity(shards.len());
    for (s, tot) in shards.iter_mut().zip(&sums) {
        if !(tot[d] > 0.5) {
            return invalid("no unlabeled points in the network");
        }
        let mean = Vector::from_iterator(d, (0..d).map(|j| tot[j] / tot[d]));
        for mut row in s.unlabeled_x.row_iter_mut() {
            row -= mean.transpose();
        }
        for mut row in s.labeled_x.row_iter_mut() {
            row -= mean.transpose();
        }
        means.push(mean);
    }
    Ok((means, 2.0 * r - 1.0))
}

/// `α0 / (n + 1)^δ`.
pub fn step_size(alpha0: f64, delta: f64, n: usize) -> f64 {
    alpha0 / ((n + 1) as f64).powf(delta)
}

#[derive(Debug, Clone, Serialize)]
pub struct S3vmTraceRow {
    pub round: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub disagreement: f64,
}

#[derive(Debug, Clone)]
pub struct S3vmRun {
    pub weights: Vec<Vector>,
    pub rounds: usize,
    pub trace: Vec<S3vmTraceRow>,
}

impl S3vmRun {
    pub fn mean_weight(&self) -> Vector {
        mean(&self.weights)
    }

    /// First traced round whose global gradient norm is at most `tol`.
    pub fn rounds_to(&self, tol: f64) -> Option<usize> {
        self.trace.iter().find(|r| r.grad_norm <= tol).map(|r| r.round)
    }
}

fn mean(ws: &[Vector]) -> Vector {
    let n = ws.len() as f64;
    ws.iter().skip(1).fold(ws[0].clone(), |a, w| a + w) / n
}

fn max_disagreement(ws: &[Vector]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..ws.len() {
        for j in (i + 1)..ws.len() {
            m = m.max((&ws[i] - &ws[j]).norm());
        }
    }
    m
}

/// Global quantities observed at the agents' mean; not available to agents.
fn observe(p: &S3vmProblem, ws: &[Vector], round: usize) -> S3vmTraceRow {
    let w = mean(ws);
    S3vmTraceRow { round, objective: p.objective(&w), grad_norm: p.gradient(&w).norm(), disagreement: max_disagreement(ws) }
}

/// Gradient descent on the whole objective, stopping once `‖∇J‖ < grad_tol`.
pub fn grad_s3vm_centralized(p: &S3vmProblem, alpha0: f64, delta: f64, t: usize, grad_tol: f64) -> Result<S3vmRun> {
    if !(alpha0 > 0.0) {
        return invalid("step must be positive");
    }
    let mut w = Vector::zeros(p.dim());
    let mut trace = vec![observe(p, std::slice::from_ref(&w), 0)];
    let mut rounds = 0;
    for n in 0..t {
        if trace.last().unwrap().grad_norm < grad_tol {
            break;
        }
        w -= p.gradient(&w) * step_size(alpha0, delta, n);
        rounds = n + 1;
        trace.push(observe(p, std::slice::from_ref(&w), rounds));
    }
    Ok(S3vmRun { weights: vec![w], rounds, trace })
}

fn check_network(mix: &MixingMatrix, p: &S3vmProblem, alpha0: f64, delta: f64) -> Result<()> {
    if mix.n_agents() != p.n_agents() {
        return invalid(format!("{} agents in the mixing matrix, {} shards", mix.n_agents(), p.n_agents()));
    }
    if !(alpha0 > 0.0) || !(delta > 0.0 && delta <= 1.0) {
        return invalid("need α0 > 0 and δ in (0, 1]");
    }
    Ok(())
}

/// Diffusion gradient descent: `ψ_k = w_k − α(∇l_k + ∇g_k + w_k/N)`, then
/// `w_k = Σ_t C_kt ψ_t`.
pub fn dgd_s3vm(mix: &MixingMatrix, p: &S3vmProblem, alpha0: f64, delta: f64, t: usize) -> Result<S3vmRun> {
    check_network(mix, p, alpha0, delta)?;
    let l = p.n_agents();
    let mut ws = vec![Vector::zeros(p.dim()); l];
    let mut trace = vec![observe(p, &ws, 0)];
    for n in 0..t {
        let a = step_size(alpha0, delta, n);
        let psi: Vec<Vector> = (0..l)
            .into_par_iter()
            .map(|k| {
                let g = p.local_smooth(&ws[k], k).1 + &ws[k] / l as f64;
                &ws[k] - g * a
            })
            .collect();
        ws = mix.mix_vecs(&psi);
        trace.push(observe(p, &ws, n + 1));
    }
    Ok(S3vmRun { weights: ws, rounds: t, trace })
}

/// Tracker state of one NEXT agent.
#[derive(Debug, Clone)]
pub struct NextState {
    pub w: Vector,
    /// Dynamic-consensus estimate of the average smooth gradient.
    pub v: Vector,
    /// Estimate of the other agents' gradient sum.
    pub pi: Vector,
    /// `∇h_k` at the current `w`.
    pub grad_h: Vector,
}

/// Minimizes `l_k(w) + ⟨∇g_k(anchor) + π̃, w⟩ + ½‖w‖²` by gradient descent
/// from the anchor with step `1/Lip`.
fn solve_surrogate(p: &S3vmProblem, k: usize, anchor: &Vector, lin: &Vector, inner_t: usize, inner_tol: f64) -> Vector {
    let sh = &p.shards[k];
    let lip = 1.0 + p.c1 / p.n_labeled().max(1) as f64 * sh.labeled_x.norm_squared();
    let mut w = anchor.clone();
    for _ in 0..inner_t {
        let g = losses_and_grads(&w, p, k).grad_labeled + lin + &w;
        if g.norm() < inner_tol {
            break;
        }
        w -= g / lip;
    }
    w
}

/// Gradient of agent `k`'s surrogate at `w`.
pub fn surrogate_gradient(p: &S3vmProblem, k: usize, state: &NextState, anchor: &Vector, w: &Vector) -> Vector {
    let at = losses_and_grads(anchor, p, k);
    losses_and_grads(w, p, k).grad_labeled + at.grad_unlabeled + &state.pi + w
}

pub fn next_init(p: &S3vmProblem) -> Vec<NextState> {
    let l = p.n_agents() as f64;
    let w = Vector::zeros(p.dim());
    (0..p.n_agents())
        .map(|k| {
            let g = p.local_smooth(&w, k).1;
            NextState { w: w.clone(), v: g.clone(), pi: &g * (l - 1.0), grad_h: g }
        })
        .collect()
}

/// One NEXT round: surrogate solve, convex step toward it, mixing, gradient
/// tracking, and recovery of `π̃`.
pub fn next_round(
    mix: &MixingMatrix,
    p: &S3vmProblem,
    states: &mut [NextState],
    alpha: f64,
    inner_t: usize,
    inner_tol: f64,
) {
    let l = p.n_agents() as f64;
    let z: Vec<Vector> = states
        .par_iter()
        .enumerate()
        .map(|(k, st)| {
            let lin = p.local_smooth(&st.w, k).1 - losses_and_grads(&st.w, p, k).grad_labeled + &st.pi;
            let target = solve_surrogate(p, k, &st.w, &lin, inner_t, inner_tol);
            &st.w + (target - &st.w) * alpha
        })
        .collect();
    let w_new = mix.mix_vecs(&z);
    let v_mixed = mix.mix_vecs(&states.iter().map(|s| s.v.clone()).collect::<Vec<_>>());
    let grads: Vec<Vector> = w_new.par_iter().enumerate().map(|(k, w)| p.local_smooth(w, k).1).collect();
    for (k, st) in states.iter_mut().enumerate() {
        st.v = &v_mixed[k] + &grads[k] - &st.grad_h;
        st.pi = &st.v * l - &grads[k];
        st.grad_h = grads[k].clone();
        st.w = w_new[k].clone();
    }
}

pub fn next_s3vm(
    mix: &MixingMatrix,
    p: &S3vmProblem,
    alpha0: f64,
    delta: f64,
    t: usize,
    inner_t: usize,
    inner_tol: f64,
) -> Result<S3vmRun> {
    check_network(mix, p, alpha0, delta)?;
    let mut states = next_init(p);
    let ws = |s: &[NextState]| s.iter().map(|x| x.w.clone()).collect::<Vec<_>>();
    let mut trace = vec![observe(p, &ws(&states), 0)];
    for n in 0..t {
        next_round(mix, p, &mut states, step_size(alpha0, delta, n).min(1.0), inner_t, inner_tol);
        trace.push(observe(p, &ws(&states), n + 1));
    }
    Ok(S3vmRun { weights: ws(&states), rounds: t, trace })
}

/// Misclassification rate of `sign(wᵀx + b)`; zero scores count as positive.
pub fn predict_and_error(w: &Vector, b: f64, x: &Mat, y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let scores = x * w;
    let wrong = scores.iter().zip(y).filter(|(s, t)| ((**s + b) >= 0.0) != (**t > 0.0)).count();
    wrong as f64 / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{mix_metropolis, MixingMatrix};
    use crate::netgraph::{gen_erdos_renyi, AgentNetwork};
    use crate::rng_from_seed;
    use rand::Rng as _;

    fn rand_mat(r: usize, c: usize, rng: &mut crate::Rng) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn toy(l: usize, seed: u64) -> S3vmProblem {
        let mut rng = rng_from_seed(seed);
        let shards = (0..l)
            .map(|_| {
                let lx = rand_mat(4, 3, &mut rng);
                let labels = (0..4).map(|i| if lx[(i, 0)] > 0.0 { 1.0 } else { -1.0 }).collect();
                S3vmShard { labeled_x: lx, labels, unlabeled_x: rand_mat(6, 3, &mut rng) }
            })
            .collect();
        S3vmProblem::with_weights(shards, 1.0, 1.0, 5.0, 0.5).unwrap()
    }

    #[test]
    fn zero_weight_losses() {
        let p = toy(2, 1);
        let t = losses_and_grads(&Vector::zeros(3), &p, 0);
        assert!((t.labeled - 4.0 / (2.0 * 8.0)).abs() < 1e-15);
        assert!((t.unlabeled - 6.0 / (2.0 * 12.0)).abs() < 1e-15);
        assert_eq!(t.reg, 0.0);
        let big = Vector::from_vec(vec![1e3, 1e3, 1e3]);
        assert!(losses_and_grads(&big, &p, 0).unlabeled < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = toy(1, 2);
        let mut rng = rng_from_seed(3);
        let h = 1e-6;
        for _ in 0..30 {
            let w = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let t = losses_and_grads(&w, &p, 0);
            for j in 0..3 {
                let mut a = w.clone();
                a[j] += h;
                let mut b = w.clone();
                b[j] -= h;
                let (ta, tb) = (losses_and_grads(&a, &p, 0), losses_and_grads(&b, &p, 0));
                let fd_l = (ta.labeled - tb.labeled) / (2.0 * h);
                let fd_g = (ta.unlabeled - tb.unlabeled) / (2.0 * h);
                let fd_r = (ta.reg - tb.reg) / (2.0 * h);
                assert!((fd_l - t.grad_labeled[j]).abs() < 1e-6 * (1.0 + fd_l.abs()));
                assert!((fd_g - t.grad_unlabeled[j]).abs() < 1e-6 * (1.0 + fd_g.abs()));
                assert!((fd_r - t.grad_reg[j]).abs() < 1e-6 * (1.0 + fd_r.abs()));
            }
        }
    }

    #[test]
    fn centering() {
        let mut p = toy(3, 4);
        let net = AgentNetwork::complete(3);
        let mix = mix_metropolis(&net);
        let direct = {
            let m = p.merged();
            Vector::from_iterator(3, m.shards[0].unlabeled_x.row_iter().fold(Vector::zeros(3).transpose(), |a, r| a + r).iter().map(|v| v / 18.0))
        };
        let (means, b) = fix_offset_and_center(&mix, &mut p.shards, 0.5, DacConfig::default()).unwrap();
        assert_eq!(b, 0.0);
        assert!((&means[1] - &direct).amax() < 1e-6);
        let (again, _) = fix_offset_and_center(&mix, &mut p.shards, 0.5, DacConfig::default()).unwrap();
        assert!(again[0].amax() < 1e-9);
    }

    #[test]
    fn zero_data_stays_zero() {
        let sh = S3vmShard { labeled_x: Mat::zeros(0, 2), labels: vec![], unlabeled_x: Mat::zeros(0, 2) };
        let p = S3vmProblem::new(vec![sh], 0.5).unwrap();
        let run = grad_s3vm_centralized(&p, 0.5, 0.5, 20, 0.0).unwrap();
        assert_eq!(run.weights[0], Vector::zeros(2));
    }

    #[test]
    fn supervised_matches_newton_oracle() {
        // separable toy, C2 = 0
        let mut rng = rng_from_seed(5);
        let x = rand_mat(30, 2, &mut rng);
        let y: Vec<f64> = x.row_iter().map(|r| if r[0] + 0.5 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        let sh = S3vmShard { labeled_x: x.clone() * 5.0, labels: y.clone(), unlabeled_x: Mat::zeros(0, 2) };
        let p = S3vmProblem::with_weights(vec![sh], 10.0, 0.0, 5.0, 0.5).unwrap();
        let run = grad_s3vm_centralized(&p, 0.05, 0.0, 20000, 1e-10).unwrap();
        // generalized Newton on the active set
        let xs = x * 5.0;
        let mut w = Vector::zeros(2);
        for _ in 0..50 {
            let mut hess = Mat::identity(2, 2);
            let mut g = w.clone();
            for (i, &yi) in y.iter().enumerate() {
                let r = xs.row(i).transpose();
                let o = 1.0 - yi * r.dot(&w);
                if o > 0.0 {
                    g -= &r * (10.0 / 30.0 * o * yi);
                    hess += &r * r.transpose() * (10.0 / 30.0);
                }
            }
            w -= hess.lu().solve(&g).unwrap();
        }
        let got = &run.weights[0];
        assert!(got.dot(&w) / (got.norm() * w.norm()) > 0.99);
    }

    #[test]
    fn single_agent_dgd_is_centralized() {
        let p = toy(1, 6);
        let a = dgd_s3vm(&MixingMatrix::identity(1), &p, 0.3, 0.55, 50).unwrap();
        let b = grad_s3vm_centralized(&p, 0.3, 0.55, 50, 0.0).unwrap();
        assert!((&a.weights[0] - &b.weights[0]).amax() < 1e-12);
    }

    #[test]
    fn identical_shards_never_disagree() {
        let one = toy(1, 7).shards[0].clone();
        let p = S3vmProblem::new(vec![one; 4], 0.5).unwrap();
        let net = gen_erdos_renyi(4, 0.7, 1).unwrap();
        let run = dgd_s3vm(&mix_metropolis(&net), &p, 0.3, 0.55, 30).unwrap();
        assert!(run.trace.iter().all(|r| r.disagreement < 1e-12));
    }

    #[test]
    fn tracking_conserves_gradient_sum() {
        let p = toy(5, 8);
        let net = gen_erdos_renyi(5, 0.6, 2).unwrap();
        let mix = mix_metropolis(&net);
        let mut st = next_init(&p);
        for n in 0..20 {
            next_round(&mix, &p, &mut st, step_size(0.5, 0.55, n), 50, 1e-5);
            let sv = st.iter().fold(Vector::zeros(3), |a, s| a + &s.v);
            let sg = st.iter().enumerate().fold(Vector::zeros(3), |a, (k, s)| a + p.local_smooth(&s.w, k).1);
            assert!((sv - sg).amax() < 1e-9);
        }
    }

    #[test]
    fn surrogate_gradient_coherent_at_anchor() {
        let p = toy(3, 9);
        let st = next_init(&p);
        let w = Vector::from_vec(vec![0.2, -0.1, 0.4]);
        let s = NextState { w: w.clone(), ..st[1].clone() };
        let full = p.local_smooth(&w, 1).1 + &w + &s.pi;
        assert!((surrogate_gradient(&p, 1, &s, &w, &w) - full).amax() < 1e-14);
    }

    #[test]
    fn single_agent_next_reaches_stationarity() {
        let p = toy(1, 10);
        let run = next_s3vm(&MixingMatrix::identity(1), &p, 1.0, 0.3, 200, 50, 1e-9).unwrap();
        assert!(run.trace.last().unwrap().grad_norm < 1e-4);
    }

    #[test]
    fn error_rates() {
        let x = Mat::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let y = [-1.0, -1.0, 1.0, 1.0];
        let w = Vector::from_vec(vec![1.0]);
        assert_eq!(predict_and_error(&w, 0.0, &x, &y), 0.0);
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(predict_and_error(&w, 0.0, &x, &flipped), 1.0);
    }
}
