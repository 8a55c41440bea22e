//! Spline adaptive filters: an FIR stage followed by a Catmull-Rom spline
//! whose control points adapt alongside the taps. The diffusion variant
//! combines neighbours' taps and active-span control points before adapting.

use serde::{Deserialize, Serialize};

use crate::consensus::MixingMatrix;
use crate::error::{invalid, Result};
use crate::Vector;

/// Control points of the "mild" reference nonlinearity, 21 knots on [-2, 2].
pub const F0_MILD: [f64; 21] = [
    -1.268, -1.251, -1.225, -1.186, -1.127, -1.041, -0.918, -0.752, -0.538, -0.281, 0.0, 0.281, 0.538, 0.752,
    0.918, 1.041, 1.127, 1.186, 1.225, 1.251, 1.268,
];

/// Control points of the "strong" reference nonlinearity with two overshoot lobes.
pub const F0_STRONG: [f64; 21] = [
    -1.361, -1.227, -1.122, -1.111, -1.231, -1.453, -1.663, -1.7, -1.429, -0.824, 0.0, 0.824, 1.429, 1.7, 1.663,
    1.453, 1.231, 1.111, 1.122, 1.227, 1.361,
];

pub type Basis = [[f64; 4]; 4];

/// Catmull-Rom basis.
pub fn cr_basis() -> Basis {
    [
        [-0.5, 1.5, -1.5, 0.5],
        [1.0, -2.5, 2.0, -0.5],
        [-0.5, 0.0, 0.5, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineNonlinearity {
    pub control: Vec<f64>,
    pub dx: f64,
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    /// Index of the control point reached at `u = 0`; the span is `i-1..=i+2`.
    pub i: usize,
    pub u: f64,
    pub clamped: bool,
}

impl Span {
    pub fn u_vec(&self) -> [f64; 4] {
        let u = self.u;
        [u * u * u, u * u, u, 1.0]
    }

    pub fn du_vec(&self) -> [f64; 4] {
        let u = self.u;
        [3.0 * u * u, 2.0 * u, 1.0, 0.0]
    }

    pub fn first(&self) -> usize {
        self.i - 1
    }
}

fn vec_basis(v: &[f64; 4], b: &Basis) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (r, row) in b.iter().enumerate() {
        for c in 0..4 {
            out[c] += v[r] * row[c];
        }
    }
    out
}

fn dot4(a: &[f64; 4], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

impl SplineNonlinearity {
    pub fn new(control: Vec<f64>, dx: f64) -> Result<Self> {
        if control.len() < 5 || control.len() % 2 == 0 {
            return invalid(format!("need an odd number of at least 5 control points, got {}", control.len()));
        }
        if !(dx > 0.0) {
            return invalid("knot spacing must be positive");
        }
        Ok(SplineNonlinearity { control, dx, basis: cr_basis() })
    }

    /// Control points on the identity line, so that `φ(s) = s` inside the range.
    pub fn identity(q: usize, dx: f64) -> Result<Self> {
        let half = (q as f64 - 1.0) / 2.0;
        Self::new((0..q).map(|j| (j as f64 - half) * dx).collect(), dx)
    }

    pub fn n_points(&self) -> usize {
        self.control.len()
    }

    pub fn knot(&self, j: usize) -> f64 {
        (j as f64 - (self.n_points() as f64 - 1.0) / 2.0) * self.dx
    }

    /// Abscissa interval over which no clamping occurs.
    pub fn valid_range(&self) -> (f64, f64) {
        (self.knot(1), self.knot(self.n_points() - 2))
    }

    pub fn span_lookup(&self, s: f64) -> Span {
        let q = self.n_points() as i64;
        let r = s / self.dx;
        let fl = r.floor();
        let i = fl as i64 + (q - 1) / 2;
        if i < 1 {
            Span { i: 1, u: 0.0, clamped: true }
        } else if i > q - 3 {
            Span { i: (q - 3) as usize, u: 1.0, clamped: true }
        } else {
            Span { i: i as usize, u: r - fl, clamped: false }
        }
    }

    pub fn span_points(&self, span: &Span) -> &[f64] {
        &self.control[span.first()..span.first() + 4]
    }

    pub fn eval_span(&self, span: &Span, points: &[f64]) -> f64 {
        dot4(&vec_basis(&span.u_vec(), &self.basis), points)
    }

    pub fn deriv_span(&self, span: &Span, points: &[f64]) -> f64 {
        dot4(&vec_basis(&span.du_vec(), &self.basis), points) / self.dx
    }

    pub fn eval(&self, s: f64) -> f64 {
        let sp = self.span_lookup(s);
        self.eval_span(&sp, self.span_points(&sp))
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let sp = self.span_lookup(s);
        self.deriv_span(&sp, self.span_points(&sp))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafState {
    pub w: Vector,
    pub spline: SplineNonlinearity,
    pub mu_w: f64,
    pub mu_q: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SafOutput {
    pub y: f64,
    pub s: f64,
    pub span: Span,
}

impl SafState {
    /// Unit-impulse taps and an identity spline.
    pub fn new(taps: usize, q: usize, dx: f64, mu_w: f64, mu_q: f64) -> Result<Self> {
        if taps == 0 {
            return invalid("filter needs at least one tap");
        }
        if mu_w < 0.0 || mu_q < 0.0 {
            return invalid("step sizes must be non-negative");
        }
        let mut w = Vector::zeros(taps);
        w[0] = 1.0;
        Ok(SafState { w, spline: SplineNonlinearity::identity(q, dx)?, mu_w, mu_q })
    }
}

pub fn saf_output(state: &SafState, x: &Vector) -> SafOutput {
    let s = state.w.dot(x);
    let span = state.spline.span_lookup(s);
    SafOutput { y: state.spline.eval_span(&span, state.spline.span_points(&span)), s, span }
}

/// One stochastic-gradient step on `e²/2`. Returns the a-priori error.
pub fn saf_adapt(state: &mut SafState, x: &Vector, d: f64) -> f64 {
    let out = saf_output(state, x);
    let e = d - out.y;
    let pts = state.spline.span_points(&out.span);
    let dphi = state.spline.deriv_span(&out.span, pts);
    let gq = vec_basis(&out.span.u_vec(), &state.spline.basis);
    state.w.axpy(state.mu_w * e * dphi, x, 1.0);
    let f = out.span.first();
    for c in 0..4 {
        state.spline.control[f + c] += state.mu_q * e * gq[c];
    }
    e
}

/// Gradients of `e²/2` with respect to the taps and the four active control points.
pub fn saf_gradients(state: &SafState, x: &Vector, d: f64) -> (Vector, [f64; 4], Span) {
    let out = saf_output(state, x);
    let e = d - out.y;
    let dphi = state.spline.deriv_span(&out.span, state.spline.span_points(&out.span));
    let gq = vec_basis(&out.span.u_vec(), &state.spline.basis).map(|v| -e * v);
    (x * (-e * dphi), gq, out.span)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionOrder {
    /// combine, then adapt
    #[default]
    Cta,
    /// adapt, then combine
    Atc,
}

/// One synchronous diffusion round. Returns each agent's a-priori error.
pub fn dsaf_round(
    states: &mut [SafState],
    mix: &MixingMatrix,
    x: &[Vector],
    d: &[f64],
    order: DiffusionOrder,
) -> Vec<f64> {
    match order {
        DiffusionOrder::Cta => cta_round(states, mix, x, d),
        DiffusionOrder::Atc => atc_round(states, mix, x, d),
    }
}

fn cta_round(states: &mut [SafState], mix: &MixingMatrix, x: &[Vector], d: &[f64]) -> Vec<f64> {
    let snapshot: Vec<(Vector, Vec<f64>)> =
        states.iter().map(|s| (s.w.clone(), s.spline.control.clone())).collect();
    let mut errs = Vec::with_capacity(states.len());
    for (k, st) in states.iter_mut().enumerate() {
        let mut psi = Vector::zeros(st.w.len());
        for &(l, c) in mix.row(k) {
            psi.axpy(c, &snapshot[l].0, 1.0);
        }
        let s = psi.dot(&x[k]);
        let span = st.spline.span_lookup(s);
        let f = span.first();
        let mut xi = [0.0; 4];
        for &(l, c) in mix.row(k) {
            for (j, v) in xi.iter_mut().enumerate() {
                *v += c * snapshot[l].1[f + j];
            }
        }
        let y = st.spline.eval_span(&span, &xi);
        let e = d[k] - y;
        let dphi = st.spline.deriv_span(&span, &xi);
        let gq = vec_basis(&span.u_vec(), &st.spline.basis);
        psi.axpy(st.mu_w * e * dphi, &x[k], 1.0);
        st.w = psi;
        for j in 0..4 {
            st.spline.control[f + j] = xi[j] + st.mu_q * e * gq[j];
        }
        errs.push(e);
    }
    errs
}

fn atc_round(states: &mut [SafState], mix: &MixingMatrix, x: &[Vector], d: &[f64]) -> Vec<f64> {
    let mut spans = Vec::with_capacity(states.len());
    let mut errs = Vec::with_capacity(states.len());
    for (k, st) in states.iter_mut().enumerate() {
        spans.push(saf_output(st, &x[k]).span.first());
        errs.push(saf_adapt(st, &x[k], d[k]));
    }
    let snapshot: Vec<(Vector, Vec<f64>)> =
        states.iter().map(|s| (s.w.clone(), s.spline.control.clone())).collect();
    for (k, st) in states.iter_mut().enumerate() {
        let mut w = Vector::zeros(st.w.len());
        let mut xi = [0.0; 4];
        let f = spans[k];
        for &(l, c) in mix.row(k) {
            w.axpy(c, &snapshot[l].0, 1.0);
            for (j, v) in xi.iter_mut().enumerate() {
                *v += c * snapshot[l].1[f + j];
            }
        }
        st.w = w;
        st.spline.control[f..f + 4].copy_from_slice(&xi);
    }
    errs
}

pub const DB_FLOOR: f64 = -300.0;

pub fn to_db(v: f64) -> f64 {
    if v > 0.0 {
        (10.0 * v.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// `10 log10 e²`
pub fn mse_db(e: f64) -> f64 {
    to_db(e * e)
}

/// `10 log10 ‖w0 − w‖`
pub fn msd_linear(w: &Vector, w0: &Vector) -> f64 {
    to_db((w0 - w).norm())
}

/// `10 log10 ‖q0 − q‖`, with `q0` the reference curve sampled at the knots.
pub fn msd_nonlinear(q: &[f64], q0: &[f64]) -> f64 {
    to_db(q.iter().zip(q0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// `10 log10` of the mean squared error over the trailing `frac` of the stream.
pub fn steady_state_db(errors: &[f64], frac: f64) -> f64 {
    let n = ((errors.len() as f64) * frac).ceil().max(1.0) as usize;
    let tail = &errors[errors.len().saturating_sub(n)..];
    to_db(tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64)
}

/// Tap-delay buffer `[x[n], x[n-1], …, x[n-M+1]]`, zero before the stream start.
pub fn regressor(x: &[f64], n: usize, taps: usize) -> Vector {
    Vector::from_fn(taps, |j, _| if n >= j { x[n - j] } else { 0.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct DsafRun {
    /// errors[k][n]
    pub errors: Vec<Vec<f64>>,
    pub final_states: Vec<SafState>,
    /// `(n, msd_linear, msd_nonlinear)` averaged over agents, every `stride` samples
    pub msd: Vec<(usize, f64, f64)>,
}

impl serde::Serialize for SafState {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("SafState", 4)?;
        st.serialize_field("w", self.w.as_slice())?;
        st.serialize_field("control", &self.spline.control)?;
        st.serialize_field("mu_w", &self.mu_w)?;
        st.serialize_field("mu_q", &self.mu_q)?;
        st.end()
    }
}

/// Runs every agent over its whole stream; `inputs[k]` and `desired[k]` have equal length.
pub fn run_dsaf(
    init: Vec<SafState>,
    mix: &MixingMatrix,
    inputs: &[Vec<f64>],
    desired: &[Vec<f64>],
    order: DiffusionOrder,
    truth: Option<(&Vector, &[f64])>,
    stride: usize,
) -> Result<DsafRun> {
    let l = init.len();
    if l != mix.n_agents() || inputs.len() != l || desired.len() != l {
        return invalid("agent count mismatch between states, mixing matrix and streams");
    }
    let t = inputs[0].len();
    if inputs.iter().chain(desired).any(|s| s.len() != t) {
        return invalid("all streams must have the same length");
    }
    let taps = init[0].w.len();
    let mut states = init;
    let mut errors = vec![Vec::with_capacity(t); l];
    let mut msd = Vec::new();
    for n in 0..t {
        let xs: Vec<Vector> = inputs.iter().map(|x| regressor(x, n, taps)).collect();
        let ds: Vec<f64> = desired.iter().map(|d| d[n]).collect();
        let e = dsaf_round(&mut states, mix, &xs, &ds, order);
        for (k, v) in e.into_iter().enumerate() {
            errors[k].push(v);
        }
        if let Some((w0, q0)) = truth {
            if stride > 0 && (n + 1) % stride == 0 {
                let ml = states.iter().map(|s| msd_linear(&s.w, w0)).sum::<f64>() / l as f64;
                let mn = states.iter().map(|s| msd_nonlinear(&s.spline.control, q0)).sum::<f64>() / l as f64;
                msd.push((n + 1, ml, mn));
            }
        }
    }
    Ok(DsafRun { errors, final_states: states, msd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::mix_metropolis;
    use crate::netgraph::gen_erdos_renyi;
    use rand::Rng as _;

    fn rand_spline(seed: u64) -> SplineNonlinearity {
        let mut rng = crate::rng_from_seed(seed);
        SplineNonlinearity::new((0..21).map(|_| rng.random_range(-2.0..2.0)).collect(), 0.2).unwrap()
    }

    #[test]
    fn basis_literal_and_row_sums() {
        let b = cr_basis();
        let lit = [[-1., 3., -3., 1.], [2., -5., 4., -1.], [-1., 0., 1., 0.], [0., 2., 0., 0.]];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(b[r][c], 0.5 * lit[r][c]);
            }
        }
        let sums: Vec<f64> = b.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(vec_basis(&[0.0, 0.0, 0.0, 1.0], &b), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn span_examples() {
        let sp = SplineNonlinearity::identity(21, 0.2).unwrap();
        let a = sp.span_lookup(0.0);
        assert_eq!((a.i, a.u, a.clamped), (10, 0.0, false));
        let b = sp.span_lookup(0.1);
        assert_eq!(b.i, 10);
        assert!((b.u - 0.5).abs() < 1e-12);
        assert!(sp.span_lookup(5.0).clamped && sp.span_lookup(-5.0).clamped);
        // saturates past the edge knots
        assert!((sp.eval(3.7) - 1.8).abs() < 1e-12 && (sp.eval(-5.0) + 1.8).abs() < 1e-12);
        let mut rng = crate::rng_from_seed(3);
        for _ in 0..1000 {
            let s = rng.random_range(-1.79..1.79);
            let p = sp.span_lookup(s);
            assert!(!p.clamped);
            assert!((sp.knot(p.i) + p.u * 0.2 - s).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_spline_and_output() {
        let sp = SplineNonlinearity::identity(21, 0.2).unwrap();
        for s in [-1.7, -0.33, 0.0, 0.41, 1.75] {
            assert!((sp.eval(s) - s).abs() < 1e-12);
            assert!((sp.deriv(s) - 1.0).abs() < 1e-12);
        }
        let st = SafState::new(4, 21, 0.2, 0.01, 0.01).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.2, 0.9, 0.1]);
        assert!((saf_output(&st, &x).y - 0.3).abs() < 1e-12);
    }

    #[test]
    fn horner_oracle_and_continuity() {
        let sp = rand_spline(4);
        let b = cr_basis();
        let mut rng = crate::rng_from_seed(5);
        for _ in 0..200 {
            let s = rng.random_range(-1.79..1.79);
            let p = sp.span_lookup(s);
            let q = sp.span_points(&p);
            // polynomial coefficients a_r = Σ_c B[r][c] q_c, then Horner in u
            let a: Vec<f64> = (0..4).map(|r| (0..4).map(|c| b[r][c] * q[c]).sum()).collect();
            let y = ((a[0] * p.u + a[1]) * p.u + a[2]) * p.u + a[3];
            assert!((sp.eval(s) - y).abs() < 1e-12);
        }
        for j in 2..18 {
            let k = sp.knot(j);
            assert!((sp.eval(k - 1e-10) - sp.eval(k + 1e-10)).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_error_keeps_state() {
        let mut st = SafState::new(3, 21, 0.2, 0.1, 0.1).unwrap();
        let x = Vector::from_vec(vec![0.5, 0.1, -0.2]);
        let before = st.clone();
        let e = saf_adapt(&mut st, &x, 0.5);
        assert_eq!(e, 0.0);
        assert_eq!(st, before);
    }

    #[test]
    fn lms_special_case() {
        let mut st = SafState::new(3, 21, 0.2, 0.05, 0.0).unwrap();
        let mut w = st.w.clone();
        let mut rng = crate::rng_from_seed(6);
        for _ in 0..500 {
            let x = Vector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
            let d = rng.random_range(-1.0..1.0);
            let e_lms = d - w.dot(&x);
            w += &x * (0.05 * e_lms);
            let e = saf_adapt(&mut st, &x, d);
            assert!((e - e_lms).abs() < 1e-12);
            assert!((&st.w - &w).amax() < 1e-12);
        }
    }

    #[test]
    fn only_four_points_move() {
        let mut st = SafState::new(3, 21, 0.2, 0.05, 0.1).unwrap();
        st.spline = rand_spline(7);
        let before = st.spline.control.clone();
        let x = Vector::from_vec(vec![0.3, 0.2, -0.1]);
        let span = saf_output(&st, &x).span;
        saf_adapt(&mut st, &x, 2.0);
        for j in 0..21 {
            if j < span.first() || j > span.first() + 3 {
                assert_eq!(st.spline.control[j].to_bits(), before[j].to_bits());
            }
        }
    }

    #[test]
    fn cta_with_identity_matrix_is_independent() {
        let mut rng = crate::rng_from_seed(8);
        let mut a: Vec<SafState> = (0..3).map(|_| SafState::new(2, 21, 0.2, 0.05, 0.05).unwrap()).collect();
        let mut b = a.clone();
        let mix = MixingMatrix::identity(3);
        for _ in 0..100 {
            let xs: Vec<Vector> = (0..3).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
            let ds: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e1 = dsaf_round(&mut a, &mix, &xs, &ds, DiffusionOrder::Cta);
            let e2: Vec<f64> = (0..3).map(|k| saf_adapt(&mut b[k], &xs[k], ds[k])).collect();
            assert_eq!(e1, e2);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn identical_agents_follow_single_trajectory() {
        let net = gen_erdos_renyi(4, 0.6, 2).unwrap();
        let mix = mix_metropolis(&net);
        let mut rng = crate::rng_from_seed(9);
        let mut single = SafState::new(2, 21, 0.2, 0.05, 0.05).unwrap();
        let mut many = vec![single.clone(); 4];
        for _ in 0..200 {
            let x = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let d: f64 = rng.random_range(-1.0..1.0);
            saf_adapt(&mut single, &x, d);
            dsaf_round(&mut many, &mix, &vec![x.clone(); 4], &[d; 4], DiffusionOrder::Cta);
        }
        for s in &many {
            assert!((&s.w - &single.w).amax() < 1e-12);
        }
    }

    #[test]
    fn metrics_floor_and_unit() {
        assert_eq!(mse_db(0.0), DB_FLOOR);
        let w0 = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(msd_linear(&Vector::zeros(2), &w0), 0.0);
        assert_eq!(msd_linear(&w0, &w0), DB_FLOOR);
        assert!((steady_state_db(&[10.0, 10.0, 0.1, 0.1], 0.5) - (-20.0)).abs() < 1e-12);
    }
}
