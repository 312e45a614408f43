//! Neighborhood smoothing (a Nadaraya-Watson estimator over functional
//! predictors), bandwidth candidates and tuning, and the presmoothers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcore::{
    euclid_distance, partial_l2_distance, prod_distance, segment_l2, trapezoid, Curve,
    ObservationPattern, PartialCurve,
};
use crate::registration::{segment_amplitude, MoveSet};
use crate::srsf::segment_fr;

/// Distance used within a single observed segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMetric {
    L2,
    FisherRao,
    /// Registered SRSF distance on the segment rescaled to `[0, 1]`.
    Amplitude,
}

/// Distance between predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    FisherRao,
    Amplitude,
    /// Euclidean distance of the observed values (sparse designs).
    Euclid,
    /// Weighted sum over fragments of a base metric.
    Prod(BaseMetric),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::FisherRao => "fr",
            Metric::Amplitude => "amplitude",
            Metric::Euclid => "euclid",
            Metric::Prod(_) => "prod",
        }
    }

    /// The natural metric for `pattern` built on `self`: fragments get a
    /// product metric, sparse designs the Euclidean one.
    pub fn adapted_to(self, pattern: &ObservationPattern) -> Metric {
        let base = match self {
            Metric::L2 | Metric::Euclid => BaseMetric::L2,
            Metric::FisherRao => BaseMetric::FisherRao,
            Metric::Amplitude => BaseMetric::Amplitude,
            Metric::Prod(b) => b,
        };
        match pattern {
            ObservationPattern::Sparse { .. } => Metric::Euclid,
            ObservationPattern::Fragments { .. } => Metric::Prod(base),
            ObservationPattern::Interval { .. } => match base {
                BaseMetric::L2 => Metric::L2,
                BaseMetric::FisherRao => Metric::FisherRao,
                BaseMetric::Amplitude => Metric::Amplitude,
            },
        }
    }

    fn check(&self, pattern: &ObservationPattern) -> Result<()> {
        let ok = matches!(
            (self, pattern),
            (
                Metric::L2 | Metric::FisherRao | Metric::Amplitude,
                ObservationPattern::Interval { .. }
            ) | (Metric::Euclid, ObservationPattern::Sparse { .. })
                | (Metric::Prod(_), ObservationPattern::Fragments { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::MetricPatternMismatch {
                metric: self.name(),
                pattern: pattern.kind(),
            })
        }
    }
}

fn base_distance(base: BaseMetric, moves: &MoveSet) -> impl Fn(&[f64], &[f64], f64) -> f64 + '_ {
    move |a, b, step| match base {
        BaseMetric::L2 => segment_l2(a, b, step),
        BaseMetric::FisherRao => segment_fr(a, b, step),
        BaseMetric::Amplitude => segment_amplitude(a, b, moves),
    }
}

/// Distance between two predictors under `metric`.
pub fn predictor_distance(
    x: &PartialCurve,
    y: &PartialCurve,
    metric: Metric,
    moves: &MoveSet,
) -> Result<f64> {
    metric.check(x.pattern())?;
    match metric {
        Metric::L2 => partial_l2_distance(x, y),
        Metric::Euclid => euclid_distance(x, y),
        Metric::FisherRao | Metric::Amplitude => {
            if !x.same_support(y) {
                return Err(Error::SupportMismatch);
            }
            let base = if metric == Metric::FisherRao {
                BaseMetric::FisherRao
            } else {
                BaseMetric::Amplitude
            };
            Ok(base_distance(base, moves)(
                x.values(),
                y.values(),
                x.grid().step(),
            ))
        }
        Metric::Prod(base) => prod_distance(x, y, base_distance(base, moves)),
    }
}

/// Symmetric matrix of pairwise predictor distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// From a full row-major matrix; checks symmetry and the zero diagonal.
    pub fn from_full(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::InvalidConfig(
                    "distance diagonal must be zero".into(),
                ));
            }
            for j in 0..i {
                let d = entries[i * n + j];
                if d != entries[j * n + i] || !(d >= 0.0) {
                    return Err(Error::InvalidConfig(
                        "distances must be symmetric and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Strict upper-triangle entries.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n.saturating_sub(1)) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }
}

/// Pairwise distances between predictors sharing one observation pattern.
pub fn distance_matrix(
    predictors: &[PartialCurve],
    metric: Metric,
    moves: &MoveSet,
) -> Result<DistanceMatrix> {
    let n = predictors.len();
    if let Some(first) = predictors.first() {
        metric.check(first.pattern())?;
        if predictors.iter().any(|p| !p.same_support(first)) {
            return Err(Error::SupportMismatch);
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| predictor_distance(&predictors[i], &predictors[j], metric, moves))
        .collect::<Result<Vec<f64>>>()?;
    let mut entries = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        entries[i * n + j] = d;
        entries[j * n + i] = d;
    }
    Ok(DistanceMatrix { n, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Triangular,
}

impl KernelKind {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * u * u).exp(),
            KernelKind::Triangular => (1.0 - u.abs()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { kind, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, bandwidth)
    }
}

/// Kernel weights of row `d_row` against every other index (self gets 0).
///
/// Gaussian weights are rescaled so the nearest neighbor has weight 1, which
/// leaves the ratio in the smoother unchanged and avoids underflow for tiny
/// bandwidths. Returns `true` in the second slot when every weight vanished
/// and uniform weights were substituted.
pub fn kernel_weights(d_row: &[f64], self_index: usize, kernel: KernelSpec) -> (Vec<f64>, bool) {
    let h = kernel.bandwidth;
    let mut w = vec![0.0; d_row.len()];
    match kernel.kind {
        KernelKind::Gaussian => {
            let dmin = d_row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != self_index)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min);
            for (j, &d) in d_row.iter().enumerate() {
                if j != self_index {
                    w[j] = (-(d - dmin) * (d + dmin) / (2.0 * h * h)).exp();
                }
            }
        }
        KernelKind::Triangular => {
            for (j, &d) in d_row.iter().enumerate() {
                if j != self_index {
                    w[j] = KernelKind::Triangular.eval(d / h);
                }
            }
        }
    }
    let degenerate = w.iter().all(|&x| x == 0.0);
    if degenerate {
        for (j, x) in w.iter_mut().enumerate() {
            if j != self_index {
                *x = 1.0;
            }
        }
    }
    (w, degenerate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsPrediction {
    pub value: f64,
    /// All kernel weights were zero; `value` is the plain mean of the others.
    pub fallback: bool,
}

/// Leave-self-out neighborhood smoother for index `self_index`.
pub fn ns_predict(
    d_row: &[f64],
    responses: &[f64],
    self_index: usize,
    kernel: KernelSpec,
) -> Result<NsPrediction> {
    if d_row.len() != responses.len() {
        return Err(Error::LengthMismatch {
            expected: d_row.len(),
            found: responses.len(),
        });
    }
    if self_index >= d_row.len() || d_row.len() < 2 {
        return Err(Error::InvalidConfig(
            "self index out of range or fewer than two points".into(),
        ));
    }
    let (w, fallback) = kernel_weights(d_row, self_index, kernel);
    let num: f64 = w.iter().zip(responses).map(|(a, y)| a * y).sum();
    let den: f64 = w.iter().sum();
    Ok(NsPrediction {
        value: num / den,
        fallback,
    })
}

/// Lower `beta` quantiles of the strict upper-triangle distances, zeros
/// replaced by the smallest positive distance.
pub fn bandwidth_candidates(d: &DistanceMatrix, betas: &[f64]) -> Result<Vec<f64>> {
    if d.len() < 2 {
        return Err(Error::TooFewCurves {
            needed: 2,
            found: d.len(),
        });
    }
    if betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
        return Err(Error::InvalidConfig(
            "quantile levels must lie in (0, 1)".into(),
        ));
    }
    let mut upper = d.upper_triangle();
    upper.sort_by(f64::total_cmp);
    let smallest_positive = upper
        .iter()
        .copied()
        .find(|&x| x > 0.0)
        .ok_or(Error::DegenerateDistances)?;
    Ok(betas
        .iter()
        .map(|&b| {
            let v = upper[order_index(b, upper.len())];
            if v > 0.0 {
                v
            } else {
                smallest_positive
            }
        })
        .collect())
}

/// Zero-based index of the `ceil(beta * m)`-th smallest of `m` values.
pub(crate) fn order_index(beta: f64, m: usize) -> usize {
    let k = (beta * m as f64 - 1e-9).ceil() as usize;
    k.clamp(1, m) - 1
}

pub const DEFAULT_BETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMode {
    /// One bandwidth minimizing the time-averaged length.
    Global,
    /// A bandwidth per time point minimizing that point's length.
    Local,
}

/// Selected bandwidth(s) and the combined per-point lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen candidate index at each point (constant in global mode).
    pub chosen: Vec<usize>,
    pub bandwidths: Vec<f64>,
}

/// Anything `tune_bandwidth` can compare: a per-point length profile where
/// `None` marks an empty set at that point.
pub trait LengthProfile {
    fn point_lengths(&self) -> Vec<Option<f64>>;
}

/// Runs `run` for each candidate bandwidth and selects by length. Empty
/// points count as infinitely long; ties go to the smaller bandwidth.
pub fn tune_bandwidth<B, F>(
    run: F,
    candidates: &[f64],
    mode: TuneMode,
) -> Result<(Vec<B>, Selection)>
where
    B: LengthProfile + Send,
    F: Fn(f64) -> Result<B> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no bandwidth candidates".into()));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]));
    let results = candidates
        .par_iter()
        .map(|&h| run(h))
        .collect::<Result<Vec<B>>>()?;
    let lengths: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            r.point_lengths()
                .into_iter()
                .map(|l| l.unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect();
    let n_points = lengths[0].len();
    let argmin = |score: &dyn Fn(usize) -> f64| {
        let mut best = order[0];
        for &c in &order[1..] {
            if score(c) < score(best) {
                best = c;
            }
        }
        best
    };
    let chosen = match mode {
        TuneMode::Global => {
            let c = argmin(&|c| lengths[c].iter().sum::<f64>() / n_points as f64);
            vec![c; n_points]
        }
        TuneMode::Local => (0..n_points).map(|k| argmin(&|c| lengths[c][k])).collect(),
    };
    let bandwidths = chosen.iter().map(|&c| candidates[c]).collect();
    Ok((results, Selection { chosen, bandwidths }))
}

/// Which extra harmonic completes an even basis count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraHarmonic {
    #[default]
    Sine,
    Cosine,
}

fn fourier_basis(n_basis: usize, extra: ExtraHarmonic, t: f64) -> Vec<f64> {
    use std::f64::consts::{SQRT_2, TAU};
    let mut out = Vec::with_capacity(n_basis);
    out.push(1.0);
    let mut k = 1;
    while out.len() < n_basis {
        let arg = TAU * k as f64 * t;
        let (first, second) = match extra {
            ExtraHarmonic::Sine => (SQRT_2 * arg.sin(), SQRT_2 * arg.cos()),
            ExtraHarmonic::Cosine => (SQRT_2 * arg.cos(), SQRT_2 * arg.sin()),
        };
        out.push(first);
        if out.len() < n_basis {
            out.push(second);
        }
        k += 1;
    }
    out
}

/// Least-squares projection (trapezoid-weighted) onto the first `n_basis`
/// Fourier functions `1, sqrt2 sin(2 pi k t), sqrt2 cos(2 pi k t), ...`.
pub fn fourier_project(f: &Curve, n_basis: usize) -> Result<Curve> {
    fourier_project_with(f, n_basis, ExtraHarmonic::Sine)
}

pub fn fourier_project_with(f: &Curve, n_basis: usize, extra: ExtraHarmonic) -> Result<Curve> {
    if n_basis == 0 {
        return Err(Error::InvalidConfig(
            "need at least one basis function".into(),
        ));
    }
    let grid = f.grid();
    let n = grid.len();
    let h = grid.step();
    let quad: Vec<f64> = (0..n)
        .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| fourier_basis(n_basis, extra, grid.point(k)))
        .collect();
    let basis = DMatrix::from_fn(n, n_basis, |k, j| rows[k][j]);
    let weighted = DMatrix::from_fn(n, n_basis, |k, j| basis[(k, j)] * quad[k]);
    let gram = weighted.transpose() * &basis;
    let rhs = weighted.transpose() * DVector::from_column_slice(f.values());
    let coef = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{n_basis} Fourier functions exceed the grid resolution"
            ))
        })?;
    let fitted = basis * coef;
    Curve::new(grid, fitted.iter().copied().collect())
}

/// Centered moving average. Odd windows average `window` points; even
/// windows use `window + 1` points with half weight on the two ends. Near
/// the boundaries the window is truncated and renormalized.
pub fn moving_average(f: &Curve, window: usize) -> Result<Curve> {
    if window == 0 {
        return Err(Error::InvalidConfig(
            "moving-average window must be positive".into(),
        ));
    }
    let v = f.values();
    let n = v.len() as isize;
    let half = (window / 2) as isize;
    let even = window % 2 == 0;
    let values = (0..n)
        .map(|k| {
            let mut num = 0.0;
            let mut den = 0.0;
            for o in -half..=half {
                let idx = k + o;
                if idx < 0 || idx >= n {
                    continue;
                }
                let w = if even && o.abs() == half { 0.5 } else { 1.0 };
                num += w * v[idx as usize];
                den += w;
            }
            num / den
        })
        .collect();
    Curve::new(f.grid(), values)
}

/// L2 norm of a curve, trapezoid rule.
pub fn l2_norm(f: &Curve) -> f64 {
    let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
    trapezoid(&sq, f.grid().step()).sqrt()
}
