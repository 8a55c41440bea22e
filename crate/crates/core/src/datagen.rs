//! Synthetic benchmarks, partitioning, normalization and CSV plumbing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::saf::SplineNonlinearity;
use crate::{rng_from_seed, sub_seed, Mat, Rng, Vector};

/// Generator name, seed and parameters; stored next to data files as `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(generator: &str, seed: u64) -> Self {
        Metadata { generator: generator.into(), seed, params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = format!("generator={}\nseed={}\n", self.generator, self.seed);
        for (k, v) in &self.params {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut m = Metadata::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: n + 1, msg: "expected key=value".into() })?;
            match k.trim() {
                "generator" => m.generator = v.trim().into(),
                "seed" => {
                    m.seed = v.trim().parse().map_err(|_| Error::Parse { line: n + 1, msg: "bad seed".into() })?
                }
                key => {
                    m.params.insert(key.into(), v.trim().into());
                }
            }
        }
        Ok(m)
    }
}

/// One input/target time series; `inputs` is T×N_i.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Mat,
    pub targets: Vector,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Contiguous piece `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> Sequence {
        Sequence { inputs: self.inputs.rows(start, len).into_owned(), targets: self.targets.rows(start, len).into_owned() }
    }

    /// Splits into consecutive pieces of `len` steps, dropping the remainder.
    pub fn chunks(&self, len: usize) -> Vec<Sequence> {
        (0..self.len() / len).map(|c| self.slice(c * len, len)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<Sequence>,
    pub meta: Metadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub x: Mat,
    pub y: Vector,
    pub meta: Metadata,
}

impl TabularDataset {
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn select(&self, idx: &[usize]) -> TabularDataset {
        TabularDataset { x: self.x.select_rows(idx), y: self.y.select_rows(idx), meta: self.meta.clone() }
    }

    /// `y ∈ {−1,+1}` mapped to class 1 / class 0.
    pub fn binary_labels(&self) -> Vec<usize> {
        self.y.iter().map(|&v| usize::from(v > 0.0)).collect()
    }
}

/// Per-feature min/max used to map onto [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &Mat) -> Self {
        let min = x.column_iter().map(|c| c.min()).collect();
        let max = x.column_iter().map(|c| c.max()).collect();
        Normalization { min, max }
    }

    /// Constant features map to 0.
    pub fn apply(&self, x: &Mat) -> Mat {
        Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
            let (lo, hi) = (self.min[j], self.max[j]);
            if hi > lo {
                2.0 * (x[(i, j)] - lo) / (hi - lo) - 1.0
            } else {
                0.0
            }
        })
    }
}

pub fn normalize(x: &Mat) -> (Mat, Normalization) {
    let n = Normalization::fit(x);
    (n.apply(x), n)
}

/// `tanh(d − mean(d))`
pub fn squash(d: &[f64]) -> Vec<f64> {
    let m = d.iter().sum::<f64>() / d.len().max(1) as f64;
    d.iter().map(|v| (v - m).tanh()).collect()
}

const NARMA_WARMUP: usize = 50;
const MAX_REDRAWS: usize = 100;

/// Raw NARMA-10 recurrence driven by `x`, zero initial conditions.
pub fn narma10_raw(x: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; x.len()];
    for n in 10..x.len() {
        let prod: f64 = (1..=10).map(|i| d[n - i]).product();
        d[n] = 0.1 + 0.3 * d[n - 1] + 0.05 * d[n - 1] * prod + 1.5 * x[n] * x[n - 9];
    }
    d
}

fn column(v: &[f64]) -> Mat {
    Mat::from_column_slice(v.len(), 1, v)
}

/// Input U[0, 0.5], squashed NARMA-10 target. Diverging draws are redrawn.
pub fn gen_narma10(t: usize, seed: u64) -> Result<Sequence> {
    if t <= 10 {
        return invalid("NARMA-10 needs more than 10 steps");
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng_from_seed(sub_seed(seed, attempt as u64));
        let x: Vec<f64> = (0..t + NARMA_WARMUP).map(|_| rng.random_range(0.0..0.5)).collect();
        let d = narma10_raw(&x);
        if d.iter().all(|v| v.is_finite() && v.abs() < 10.0) {
            let x = &x[NARMA_WARMUP..];
            return Ok(Sequence { inputs: column(x), targets: Vector::from_vec(squash(&d[NARMA_WARMUP..])) });
        }
    }
    Err(Error::RetriesExhausted(MAX_REDRAWS))
}

/// Coefficients `a_ij` for `i + j ≤ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtPolyCoeffs {
    pub p: usize,
    pub terms: Vec<(usize, usize, f64)>,
}

impl ExtPolyCoeffs {
    pub fn random(p: usize, rng: &mut Rng) -> Self {
        let mut terms = Vec::new();
        for i in 0..=p {
            for j in 0..=p - i {
                terms.push((i, j, rng.random_range(-1.0..=1.0)));
            }
        }
        ExtPolyCoeffs { p, terms }
    }
}

/// `d[n] = Σ a_ij x[n]^i x[n−l]^j`, with `x[n−l] = 0` before the start.
pub fn extpoly_raw(x: &[f64], c: &ExtPolyCoeffs, l: usize) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let lagged = if n >= l { x[n - l] } else { 0.0 };
            c.terms.iter().map(|&(i, j, a)| a * x[n].powi(i as i32) * lagged.powi(j as i32)).sum()
        })
        .collect()
}

pub fn gen_extpoly(t: usize, p: usize, l: usize, seed: u64) -> Result<Sequence> {
    if t == 0 {
        return invalid("empty sequence requested");
    }
    let mut rng = rng_from_seed(seed);
    let c = ExtPolyCoeffs::random(p, &mut rng);
    let x: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let d = squash(&extpoly_raw(&x, &c, l));
    Ok(Sequence { inputs: column(&x), targets: Vector::from_vec(d) })
}

const MG_DT: f64 = 0.1;
const MG_SUBSAMPLE: usize = 10;

fn mg_rhs(x: f64, delayed: f64) -> f64 {
    -0.1 * x + 0.2 * delayed / (1.0 + delayed.powi(10))
}

/// Mackey-Glass samples with unit spacing: RK4 at `dt = 0.1`, one sample every 10 steps,
/// from a constant history `init`. Delayed values off the grid use cubic interpolation.
pub fn mackey_glass_series(n_samples: usize, tau: f64, init: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return invalid("delay must be positive");
    }
    let steps = n_samples * MG_SUBSAMPLE;
    let lag = tau / MG_DT;
    let mut h = Vec::with_capacity(steps + 1);
    h.push(init);
    let delayed = |h: &[f64], pos: f64| -> f64 {
        if pos <= 0.0 {
            return if pos < 0.0 { init } else { h[0] };
        }
        let last = h.len() as i64 - 1;
        let f = pos.floor() as i64;
        let frac = pos - f as f64;
        if frac == 0.0 && f <= last {
            return h[f as usize];
        }
        let at = |i: i64| if i < 0 { init } else { h[i.min(last) as usize] };
        let (p0, p1, p2, p3) = (at(f - 1), at(f), at(f + 1), at(f + 2));
        // cubic Lagrange through f-1..f+2
        let t = frac;
        -t * (t - 1.0) * (t - 2.0) / 6.0 * p0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * p1
            - (t + 1.0) * t * (t - 2.0) / 2.0 * p2
            + (t + 1.0) * t * (t - 1.0) / 6.0 * p3
    };
    let mut out = Vec::with_capacity(n_samples);
    for m in 0..steps {
        let x = h[m];
        let base = m as f64 - lag;
        let d0 = delayed(&h, base);
        let dh = delayed(&h, base + 0.5);
        let d1 = delayed(&h, base + 1.0);
        let k1 = mg_rhs(x, d0);
        let k2 = mg_rhs(x + 0.5 * MG_DT * k1, dh);
        let k3 = mg_rhs(x + 0.5 * MG_DT * k2, dh);
        let k4 = mg_rhs(x + MG_DT * k3, d1);
        h.push(x + MG_DT / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (m + 1) % MG_SUBSAMPLE == 0 {
            out.push(h[m + 1]);
        }
    }
    Ok(out)
}

const MG_WARMUP: usize = 100;
pub const MG_HORIZON: usize = 10;

/// Input `x[n]`, target `x[n+10]`.
pub fn gen_mackey_glass(t: usize, tau: f64, seed: u64) -> Result<Sequence> {
    let mut rng = rng_from_seed(seed);
    let init = 0.9 + rng.random_range(-0.1..0.1);
    let s = mackey_glass_series(t + MG_WARMUP + MG_HORIZON, tau, init)?;
    let s = &s[MG_WARMUP..];
    Ok(Sequence { inputs: column(&s[..t]), targets: Vector::from_vec(s[MG_HORIZON..MG_HORIZON + t].to_vec()) })
}

fn lorenz_rhs(s: [f64; 3]) -> [f64; 3] {
    [10.0 * (s[1] - s[0]), s[0] * (28.0 - s[2]) - s[1], s[0] * s[1] - 8.0 / 3.0 * s[2]]
}

fn axpy3(a: [f64; 3], terms: &[(f64, [f64; 3])]) -> [f64; 3] {
    let mut o = a;
    for (c, v) in terms {
        for i in 0..3 {
            o[i] += c * v[i];
        }
    }
    o
}

/// Dormand-Prince 5(4) integration of the Lorenz system over `[0, span]`.
fn dopri_lorenz(mut y: [f64; 3], span: f64, h: &mut f64) -> [f64; 3] {
    const RTOL: f64 = 1e-9;
    const ATOL: f64 = 1e-12;
    let mut t = 0.0;
    while t < span {
        let step = h.min(span - t);
        let k1 = lorenz_rhs(y);
        let k2 = lorenz_rhs(axpy3(y, &[(step * 0.2, k1)]));
        let k3 = lorenz_rhs(axpy3(y, &[(step * 3.0 / 40.0, k1), (step * 9.0 / 40.0, k2)]));
        let k4 =
            lorenz_rhs(axpy3(y, &[(step * 44.0 / 45.0, k1), (step * -56.0 / 15.0, k2), (step * 32.0 / 9.0, k3)]));
        let k5 = lorenz_rhs(axpy3(
            y,
            &[
                (step * 19372.0 / 6561.0, k1),
                (step * -25360.0 / 2187.0, k2),
                (step * 64448.0 / 6561.0, k3),
                (step * -212.0 / 729.0, k4),
            ],
        ));
        let k6 = lorenz_rhs(axpy3(
            y,
            &[
                (step * 9017.0 / 3168.0, k1),
                (step * -355.0 / 33.0, k2),
                (step * 46732.0 / 5247.0, k3),
                (step * 49.0 / 176.0, k4),
                (step * -5103.0 / 18656.0, k5),
            ],
        ));
        let y5 = axpy3(
            y,
            &[
                (step * 35.0 / 384.0, k1),
                (step * 500.0 / 1113.0, k3),
                (step * 125.0 / 192.0, k4),
                (step * -2187.0 / 6784.0, k5),
                (step * 11.0 / 84.0, k6),
            ],
        );
        let k7 = lorenz_rhs(y5);
        let e = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let ks = [k1, k2, k3, k4, k5, k6, k7];
        let mut err = 0.0_f64;
        for i in 0..3 {
            let ei: f64 = step * (0..7).map(|j| e[j] * ks[j][i]).sum::<f64>();
            let sc = ATOL + RTOL * y[i].abs().max(y5[i].abs());
            err = err.max((ei / sc).abs());
        }
        if err <= 1.0 {
            t += step;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        *h = (step * factor).max(1e-10);
    }
    y
}

/// Lorenz trajectory sampled every `sample_dt` time units.
pub fn lorenz_series(n: usize, init: [f64; 3], sample_dt: f64) -> Vec<[f64; 3]> {
    let mut h = 1e-3;
    let mut y = init;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(y);
        y = dopri_lorenz(y, sample_dt, &mut h);
    }
    out
}

const LORENZ_WARMUP: usize = 10;

/// Inputs `(x1, x2, x3)`, target next-sample `x1`.
pub fn gen_lorenz(t: usize, seed: u64) -> Result<Sequence> {
    let mut rng = rng_from_seed(seed);
    let init = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 20.0 + rng.random_range(-1.0..1.0)];
    let s = lorenz_series(t + 1 + LORENZ_WARMUP, init, 1.0);
    let s = &s[LORENZ_WARMUP..];
    let inputs = Mat::from_fn(t, 3, |i, j| s[i][j]);
    Ok(Sequence { inputs, targets: Vector::from_fn(t, |i, _| s[i + 1][0]) })
}

/// Mean offset `μ` giving Bayes error `rate` for unit-variance classes at `±μ`.
pub fn bayes_mean(rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate < 0.5) {
        return invalid(format!("Bayes error must lie in (0, 0.5), got {rate}"));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - rate))
}

/// Two spherical Gaussians with means `±μ e₁` and labels `±1` drawn with equal probability.
pub fn gen_two_gaussian(n: usize, d: usize, bayes_error: f64, seed: u64) -> Result<TabularDataset> {
    if d < 2 {
        return invalid("two-Gaussian generator needs d >= 2");
    }
    let mu = bayes_mean(bayes_error)?;
    let mut rng = rng_from_seed(seed);
    let mut x = Mat::zeros(n, d);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        y[i] = label;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = z + if j == 0 { label * mu } else { 0.0 };
        }
    }
    let meta = Metadata::new("two_gaussian", seed).with("n", n).with("d", d).with("bayes_error", bayes_error);
    Ok(TabularDataset { x, y, meta })
}

/// Random orthogonal matrix from the QR factorization of a Gaussian draw.
pub fn random_rotation(d: usize, rng: &mut Rng) -> Mat {
    let g = Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Two-Gaussian set after a random rotation, which spreads the class information over all features.
pub fn gen_two_gaussian_rotated(n: usize, d: usize, bayes_error: f64, seed: u64) -> Result<TabularDataset> {
    let mut ds = gen_two_gaussian(n, d, bayes_error, seed)?;
    let mut rng = rng_from_seed(sub_seed(seed, 0x5107));
    let q = random_rotation(d, &mut rng);
    ds.x = &ds.x * q.transpose();
    ds.meta.generator = "two_gaussian_rotated".into();
    Ok(ds)
}

/// Two interleaved half circles with Gaussian jitter; labels `±1`.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<TabularDataset> {
    if n < 2 {
        return invalid("need at least two points");
    }
    let mut rng = rng_from_seed(seed);
    let mut x = Mat::zeros(n, 2);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let upper = i % 2 == 0;
        let t = rng.random_range(0.0..PI);
        let (mut a, mut b) = if upper { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        let (na, nb): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        a += noise * na;
        b += noise * nb;
        x[(i, 0)] = a;
        x[(i, 1)] = b;
        y[i] = if upper { 1.0 } else { -1.0 };
    }
    Ok(TabularDataset { x, y, meta: Metadata::new("two_moons", seed).with("n", n).with("noise", noise) })
}

#[derive(Debug, Clone)]
pub struct WienerGroundTruth {
    pub w0: Vector,
    pub f0: SplineNonlinearity,
    pub a: Vec<f64>,
    pub sigma2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SafStreams {
    pub inputs: Vec<Vec<f64>>,
    pub desired: Vec<Vec<f64>>,
    pub truth: WienerGroundTruth,
}

/// AR(1) inputs with unit stationary variance, `a_k ∈ [0, 0.8]`, noise variance in [−25, −10] dB,
/// passed through a shared Wiener model with the mild reference nonlinearity.
pub fn gen_saf_streams(l: usize, t: usize, taps: usize, seed: u64) -> Result<SafStreams> {
    gen_saf_streams_with(l, t, taps, &crate::saf::F0_MILD, seed)
}

pub fn gen_saf_streams_with(l: usize, t: usize, taps: usize, f0: &[f64], seed: u64) -> Result<SafStreams> {
    if l == 0 || taps == 0 {
        return invalid("need at least one agent and one tap");
    }
    let f0 = SplineNonlinearity::new(f0.to_vec(), 0.2)?;
    let mut rng = rng_from_seed(seed);
    let mut w0 = Vector::from_fn(taps, |_, _| StandardNormal.sample(&mut rng));
    w0 /= w0.norm();
    let a: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..=0.8)).collect();
    let sigma2: Vec<f64> = (0..l).map(|_| 10f64.powf(rng.random_range(-25.0..=-10.0) / 10.0)).collect();
    let mut inputs = Vec::with_capacity(l);
    let mut desired = Vec::with_capacity(l);
    for k in 0..l {
        let mut r = rng_from_seed(sub_seed(seed, k as u64 + 1));
        let scale = (1.0 - a[k] * a[k]).sqrt();
        let first: f64 = StandardNormal.sample(&mut r);
        let mut x = vec![first; t];
        for n in 1..t {
            let xi: f64 = StandardNormal.sample(&mut r);
            x[n] = a[k] * x[n - 1] + scale * xi;
        }
        let sd = sigma2[k].sqrt();
        let d: Vec<f64> = (0..t)
            .map(|n| {
                let s = w0.dot(&crate::saf::regressor(&x, n, taps));
                let nu: f64 = StandardNormal.sample(&mut r);
                f0.eval(s) + sd * nu
            })
            .collect();
        inputs.push(x);
        desired.push(d);
    }
    Ok(SafStreams { inputs, desired, truth: WienerGroundTruth { w0, f0, a, sigma2 } })
}

/// Sizes of an even split with the remainder on the lowest indices.
pub fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| n / parts + usize::from(k < n % parts)).collect()
}

/// Shuffled horizontal partition of `0..n` into `l` disjoint shards.
pub fn partition_horizontal(n: usize, l: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if l == 0 || n < l {
        return invalid(format!("cannot split {n} samples over {l} agents"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut out = Vec::with_capacity(l);
    let mut start = 0;
    for s in split_sizes(n, l) {
        out.push(idx[start..start + s].to_vec());
        start += s;
    }
    Ok(out)
}

/// Contiguous feature blocks `0..d` for `l` agents.
pub fn partition_vertical(d: usize, l: usize) -> Result<Vec<Vec<usize>>> {
    if l == 0 || d < l {
        return invalid(format!("cannot split {d} features over {l} agents"));
    }
    let mut out = Vec::with_capacity(l);
    let mut start = 0;
    for s in split_sizes(d, l) {
        out.push((start..start + s).collect());
        start += s;
    }
    Ok(out)
}

/// Per-agent hidden budget `ceil(B / L)`.
pub fn vertical_hidden_budget(b: usize, l: usize) -> usize {
    b.div_ceil(l.max(1))
}

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub data: Mat,
}

pub fn save_csv(path: &Path, table: &Table) -> Result<()> {
    if table.header.len() != table.data.ncols() {
        return invalid("header width does not match the data");
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for r in table.data.row_iter() {
        w.write_record(r.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Table> {
    parse_csv(&std::fs::read_to_string(path)?)
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut recs = rdr.records();
    let header: Vec<String> = match recs.next() {
        None => return Err(Error::EmptyDataset),
        Some(r) => r?.iter().map(|s| s.trim().to_string()).collect(),
    };
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in recs.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != width {
            return Err(Error::Parse { line, msg: format!("expected {width} fields, found {}", rec.len()) });
        }
        for f in rec.iter() {
            values.push(
                f.trim().parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: {f:?}") })?,
            );
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Table { header, data: Mat::from_row_slice(rows, width, &values) })
}

/// Columns `x0..x{d-1}, y`.
pub fn tabular_to_table(ds: &TabularDataset) -> Table {
    let d = ds.x.ncols();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let mut data = Mat::zeros(ds.x.nrows(), d + 1);
    data.columns_mut(0, d).copy_from(&ds.x);
    data.set_column(d, &ds.y);
    Table { header, data }
}

/// Last column is the target.
pub fn table_to_tabular(t: &Table, meta: Metadata) -> Result<TabularDataset> {
    let w = t.data.ncols();
    if w < 2 {
        return invalid("a tabular file needs at least one feature and a target");
    }
    Ok(TabularDataset { x: t.data.columns(0, w - 1).into_owned(), y: t.data.column(w - 1).into_owned(), meta })
}

/// Columns `seq_id, x0..x{N_i-1}, y`.
pub fn sequences_to_table(seqs: &[Sequence]) -> Result<Table> {
    let ni = seqs.first().ok_or(Error::EmptyDataset)?.inputs.ncols();
    let total: usize = seqs.iter().map(Sequence::len).sum();
    let mut header = vec!["seq_id".to_string()];
    header.extend((0..ni).map(|j| format!("x{j}")));
    header.push("y".into());
    let mut data = Mat::zeros(total, ni + 2);
    let mut r = 0;
    for (s, seq) in seqs.iter().enumerate() {
        if seq.inputs.ncols() != ni {
            return invalid("sequences have different input widths");
        }
        for i in 0..seq.len() {
            data[(r, 0)] = s as f64;
            for j in 0..ni {
                data[(r, j + 1)] = seq.inputs[(i, j)];
            }
            data[(r, ni + 1)] = seq.targets[i];
            r += 1;
        }
    }
    Ok(Table { header, data })
}

pub fn table_to_sequences(t: &Table) -> Result<Vec<Sequence>> {
    if t.header.first().map(String::as_str) != Some("seq_id") || t.data.ncols() < 3 {
        return invalid("sequence files need a leading seq_id column, inputs and a target");
    }
    let ni = t.data.ncols() - 2;
    let mut out = Vec::new();
    let mut start = 0;
    let n = t.data.nrows();
    while start < n {
        let id = t.data[(start, 0)];
        let mut end = start;
        while end < n && t.data[(end, 0)] == id {
            end += 1;
        }
        out.push(Sequence {
            inputs: t.data.view((start, 1), (end - start, ni)).into_owned(),
            targets: t.data.view((start, ni + 1), (end - start, 1)).column(0).into_owned(),
        });
        start = end;
    }
    Ok(out)
}

/// Writes `<path>` plus `<path>.meta`.
pub fn save_with_meta(path: &Path, table: &Table, meta: &Metadata) -> Result<()> {
    save_csv(path, table)?;
    std::fs::write(meta_path(path), meta.to_sidecar())?;
    Ok(())
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narma_fixed_point_and_range() {
        let d = narma10_raw(&[0.0; 400]);
        // oracle: iterate the scalar map d = 0.1 + 0.3 d + 0.05 d^11
        let mut f = 0.0_f64;
        for _ in 0..1000 {
            f = 0.1 + 0.3 * f + 0.05 * f.powi(11);
        }
        assert!((d[399] - f).abs() < 1e-9);
        assert!((f - 0.142857).abs() < 1e-4);
        let s = gen_narma10(500, 3).unwrap();
        assert!(s.targets.iter().all(|v| v.abs() < 1.0));
        assert!(s.inputs.iter().all(|v| (0.0..0.5).contains(v)));
        assert_eq!(s, gen_narma10(500, 3).unwrap());
        assert!(gen_narma10(10, 1).is_err());
    }

    #[test]
    fn extpoly_cases() {
        let mut rng = rng_from_seed(1);
        let c = ExtPolyCoeffs::random(7, &mut rng);
        assert_eq!(c.terms.len(), 8 * 9 / 2);
        let c0 = ExtPolyCoeffs::random(0, &mut rng);
        let d = extpoly_raw(&[0.3, -0.5, 0.9], &c0, 1);
        assert!(d.iter().all(|&v| v == c0.terms[0].2));
        // p = 1, l = 0: a00 + a01 x + a10 x
        let c1 = ExtPolyCoeffs::random(1, &mut rng);
        let coef = |i, j| c1.terms.iter().find(|t| t.0 == i && t.1 == j).unwrap().2;
        let x = 0.37;
        let d = extpoly_raw(&[x], &c1, 0);
        assert!((d[0] - (coef(0, 0) + coef(0, 1) * x + coef(1, 0) * x)).abs() < 1e-15);
    }

    #[test]
    fn mackey_glass_cases() {
        let eq = mackey_glass_series(200, 30.0, 1.0).unwrap();
        assert!(eq.iter().all(|&v| v == 1.0));
        let s = mackey_glass_series(2000, 30.0, 0.9).unwrap();
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.5));
        // short delay: local maxima settle
        let r = mackey_glass_series(3000, 5.0, 0.9).unwrap();
        let maxima = |w: &[f64]| -> f64 {
            let m: Vec<f64> = (1..w.len() - 1).filter(|&i| w[i] > w[i - 1] && w[i] >= w[i + 1]).map(|i| w[i]).collect();
            if m.is_empty() {
                0.0
            } else {
                m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min)
            }
        };
        assert!(maxima(&r[2500..]) <= maxima(&r[..500]));
        let seq = gen_mackey_glass(300, 30.0, 4).unwrap();
        assert_eq!(seq.len(), 300);
        assert_eq!(seq.targets[0], seq.inputs[(MG_HORIZON, 0)]);
    }

    #[test]
    fn lorenz_cases() {
        let z = lorenz_series(50, [0.0; 3], 1.0);
        assert!(z.iter().all(|p| *p == [0.0; 3]));
        let s = lorenz_series(2000, [1.0, 1.0, 20.0], 1.0);
        let flips = s.windows(2).filter(|w| w[0][0].signum() != w[1][0].signum()).count();
        assert!(flips > 10, "{flips}");
        let g = gen_lorenz(100, 1).unwrap();
        assert_eq!(g.inputs.ncols(), 3);
        assert_eq!(g.targets[3], g.inputs[(4, 0)]);
    }

    #[test]
    fn two_gaussian_bayes_rate() {
        let ds = gen_two_gaussian(10_000, 3, 0.05, 11).unwrap();
        let err = ds.x.column(0).iter().zip(ds.y.iter()).filter(|(x, y)| x.signum() != y.signum()).count();
        let rate = err as f64 / 1e4;
        assert!((rate - 0.05).abs() < 0.007, "{rate}");
        let pos = ds.y.iter().filter(|&&v| v > 0.0).count() as f64;
        assert!((pos - 5000.0).abs() < 4.0 * 50.0);
        let far = gen_two_gaussian(2000, 2, 1e-12, 2).unwrap();
        assert!(far.x.column(0).iter().zip(far.y.iter()).all(|(x, y)| x.signum() == y.signum()));
        assert!(gen_two_gaussian(10, 1, 0.05, 1).is_err());
    }

    #[test]
    fn rotation_is_orthogonal() {
        let q = random_rotation(6, &mut rng_from_seed(3));
        assert!((q.transpose() * &q - Mat::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn saf_stream_properties() {
        let s = gen_saf_streams(6, 20_000, 5, 4).unwrap();
        for (k, x) in s.inputs.iter().enumerate() {
            let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            assert!((var - 1.0).abs() < 0.1, "agent {k}: {var}");
            assert!((0.0..=0.8).contains(&s.truth.a[k]));
            assert!(s.truth.sigma2[k] >= 10f64.powf(-2.5) - 1e-15 && s.truth.sigma2[k] <= 0.1 + 1e-15);
        }
        assert!((s.truth.w0.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partitions() {
        assert_eq!(split_sizes(10, 3), vec![4, 3, 3]);
        let p = partition_horizontal(10, 3, 5).unwrap();
        let mut all: Vec<usize> = p.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let v = partition_vertical(7, 3).unwrap();
        assert_eq!(v.concat(), (0..7).collect::<Vec<_>>());
        assert_eq!(vertical_hidden_budget(500, 8), 63);
        assert!(partition_horizontal(2, 3, 0).is_err());
    }

    #[test]
    fn normalization_bounds() {
        let x = Mat::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let (n, _) = normalize(&x);
        assert_eq!(n.column(0).iter().cloned().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(n.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_cases() {
        assert!(matches!(parse_csv(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse_csv("a,b\n"), Err(Error::EmptyDataset)));
        match parse_csv("a,b\n1,2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dir = std::env::temp_dir().join(format!("distlearn_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ds = gen_two_gaussian(40, 3, 0.05, 1).unwrap();
        let path = dir.join("t.csv");
        save_with_meta(&path, &tabular_to_table(&ds), &ds.meta).unwrap();
        let back = table_to_tabular(&load_csv(&path).unwrap(), ds.meta.clone()).unwrap();
        assert!((back.x - &ds.x).amax() < 1e-12);
        let meta = Metadata::from_sidecar(&std::fs::read_to_string(meta_path(&path)).unwrap()).unwrap();
        assert_eq!(meta, ds.meta);
        let seqs = vec![gen_narma10(30, 1).unwrap(), gen_narma10(20, 2).unwrap()];
        let t = sequences_to_table(&seqs).unwrap();
        let p2 = dir.join("s.csv");
        save_csv(&p2, &t).unwrap();
        assert_eq!(table_to_sequences(&load_csv(&p2).unwrap()).unwrap(), seqs);
        std::fs::remove_dir_all(&dir).ok();
    }
}
