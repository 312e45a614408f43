//! Discretized functions on a uniform grid over `[0, 1]`, observation
//! patterns, and the non-elastic distances used between predictors.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k / (T - 1)`, `k = 0..T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TimeGrid {
    len: usize,
}

impl TimeGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::GridTooSmall(len));
        }
        Ok(Self { len })
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Spacing `1 / (T - 1)`.
    pub fn step(&self) -> f64 {
        1.0 / (self.len - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        k as f64 / (self.len - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.point(k)).collect()
    }

    /// Nearest grid index for `u`, ties resolved toward the lower index.
    fn snap_down(&self, u: f64) -> usize {
        let x = u * (self.len - 1) as f64;
        ((x - 0.5 - 1e-9).ceil().max(0.0) as usize).min(self.len - 1)
    }

    /// Nearest grid index for `u`, ties resolved toward the upper index.
    fn snap_up(&self, u: f64) -> usize {
        let x = u * (self.len - 1) as f64;
        ((x + 0.5 + 1e-9).floor().max(0.0) as usize).min(self.len - 1)
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.len != other.len {
            return Err(Error::GridMismatch(self.len, other.len));
        }
        Ok(())
    }
}

impl TryFrom<usize> for TimeGrid {
    type Error = Error;

    fn try_from(len: usize) -> Result<Self> {
        TimeGrid::new(len)
    }
}

impl From<TimeGrid> for usize {
    fn from(grid: TimeGrid) -> usize {
        grid.len
    }
}

/// A function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Which part of `[0, 1]` is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationPattern {
    Interval {
        start: f64,
        end: f64,
    },
    Fragments {
        intervals: Vec<(f64, f64)>,
        weights: Vec<f64>,
    },
    Sparse {
        points: Vec<f64>,
    },
}

impl ObservationPattern {
    pub fn interval(start: f64, end: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start >= end {
            return Err(Error::InvalidPattern(format!(
                "interval [{start}, {end}] must satisfy 0 <= start < end <= 1"
            )));
        }
        Ok(Self::Interval { start, end })
    }

    /// Observed on `[0, u]`.
    pub fn truncated(u: f64) -> Result<Self> {
        Self::interval(0.0, u)
    }

    /// Disjoint fragments; `weights = None` gives equal weights `1 / J`.
    pub fn fragments(intervals: Vec<(f64, f64)>, weights: Option<Vec<f64>>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidPattern("no fragments given".into()));
        }
        for &(a, b) in &intervals {
            Self::interval(a, b)?;
        }
        for pair in intervals.windows(2) {
            if pair[0].1 >= pair[1].0 {
                return Err(Error::InvalidPattern(
                    "fragments must be sorted and pairwise disjoint".into(),
                ));
            }
        }
        let j = intervals.len();
        let weights = weights.unwrap_or_else(|| vec![1.0 / j as f64; j]);
        if weights.len() != j {
            return Err(Error::InvalidPattern(format!(
                "{} weights for {j} fragments",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidPattern(
                "fragment weights must be positive".into(),
            ));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPattern(
                "fragment weights must sum to 1".into(),
            ));
        }
        Ok(Self::Fragments { intervals, weights })
    }

    pub fn sparse(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidPattern("no sparse points given".into()));
        }
        if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidPattern(
                "sparse points must lie in [0, 1]".into(),
            ));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPattern(
                "sparse points must be strictly increasing".into(),
            ));
        }
        Ok(Self::Sparse { points })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Interval { .. } => "interval",
            Self::Fragments { .. } => "fragmented",
            Self::Sparse { .. } => "sparse",
        }
    }

    /// Grid index ranges covered by the pattern. Interval endpoints snap to
    /// the nearest grid point with ties keeping more data; sparse points snap
    /// to the nearest grid point and collisions are merged.
    pub fn segments(&self, grid: TimeGrid) -> Result<Vec<Range<usize>>> {
        let segs = match self {
            Self::Interval { start, end } => {
                vec![grid.snap_down(*start)..grid.snap_up(*end) + 1]
            }
            Self::Fragments { intervals, .. } => {
                let segs: Vec<_> = intervals
                    .iter()
                    .map(|&(a, b)| grid.snap_down(a)..grid.snap_up(b) + 1)
                    .collect();
                if segs.windows(2).any(|w| w[0].end > w[1].start) {
                    return Err(Error::InvalidPattern(format!(
                        "fragments overlap after snapping to a {}-point grid",
                        grid.len()
                    )));
                }
                segs
            }
            Self::Sparse { points } => {
                let mut idx: Vec<usize> = points
                    .iter()
                    .map(|&p| ((p * (grid.len() - 1) as f64).round() as usize).min(grid.len() - 1))
                    .collect();
                idx.dedup();
                idx.into_iter().map(|k| k..k + 1).collect()
            }
        };
        if segs.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptySupport);
        }
        Ok(segs)
    }
}

/// The observed part of a curve: values on the pattern's grid support only.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCurve {
    grid: TimeGrid,
    pattern: ObservationPattern,
    segments: Vec<Range<usize>>,
    values: Vec<f64>,
}

impl PartialCurve {
    /// Builds a partial curve from the values observed on the support, in
    /// grid order (deployment mode, where the rest is unknown).
    pub fn from_observed(
        grid: TimeGrid,
        pattern: ObservationPattern,
        observed: Vec<f64>,
    ) -> Result<Self> {
        let segments = pattern.segments(grid)?;
        let expected: usize = segments.iter().map(|s| s.len()).sum();
        if observed.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: observed.len(),
            });
        }
        if let Some(k) = observed.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self {
            grid,
            pattern,
            segments,
            values: observed,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn pattern(&self) -> &ObservationPattern {
        &self.pattern
    }

    /// Observed values, concatenated across segments in grid order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grid indices of the support, in order.
    pub fn support(&self) -> Vec<usize> {
        self.segments.iter().flat_map(|s| s.clone()).collect()
    }

    pub fn segment_ranges(&self) -> &[Range<usize>] {
        &self.segments
    }

    /// Observed values on segment `j`.
    pub fn segment(&self, j: usize) -> &[f64] {
        let offset: usize = self.segments[..j].iter().map(|s| s.len()).sum();
        &self.values[offset..offset + self.segments[j].len()]
    }

    /// Value at grid index `k`; errors outside the support.
    pub fn value_at(&self, k: usize) -> Result<f64> {
        let mut offset = 0;
        for seg in &self.segments {
            if seg.contains(&k) {
                return Ok(self.values[offset + k - seg.start]);
            }
            offset += seg.len();
        }
        Err(Error::OutsideSupport(k))
    }

    pub fn same_support(&self, other: &PartialCurve) -> bool {
        self.grid == other.grid && self.segments == other.segments && self.pattern == other.pattern
    }

    fn ensure_same_support(&self, other: &PartialCurve) -> Result<()> {
        if self.same_support(other) {
            Ok(())
        } else {
            Err(Error::SupportMismatch)
        }
    }
}

/// Restricts `curve` to the grid points covered by `pattern`.
pub fn restrict(curve: &Curve, pattern: &ObservationPattern) -> Result<PartialCurve> {
    let segments = pattern.segments(curve.grid())?;
    let values = segments
        .iter()
        .flat_map(|s| curve.values()[s.clone()].iter().copied())
        .collect();
    Ok(PartialCurve {
        grid: curve.grid(),
        pattern: pattern.clone(),
        segments,
        values,
    })
}

/// Trapezoidal rule for samples spaced `step` apart.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, .., last] => step * (values.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

/// Trapezoidal squared L2 distance between equally spaced samples.
pub(crate) fn sq_l2_samples(a: &[f64], b: &[f64], step: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..n {
        let d = a[k] - b[k];
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    step * acc
}

/// L2 distance between two complete curves on the same grid.
pub fn l2_distance(f: &Curve, g: &Curve) -> Result<f64> {
    f.grid().ensure_same(&g.grid())?;
    Ok(sq_l2_samples(f.values(), g.values(), f.grid().step()).sqrt())
}

/// L2 distance over the common support of two interval or fragmented
/// partial curves (squared integrals summed across fragments).
pub fn partial_l2_distance(x: &PartialCurve, y: &PartialCurve) -> Result<f64> {
    x.ensure_same_support(y)?;
    if matches!(x.pattern, ObservationPattern::Sparse { .. }) {
        return Err(Error::MetricPatternMismatch {
            metric: "l2",
            pattern: "sparse",
        });
    }
    let step = x.grid.step();
    let sq: f64 = (0..x.segments.len())
        .map(|j| sq_l2_samples(x.segment(j), y.segment(j), step))
        .sum();
    Ok(sq.sqrt())
}

/// Euclidean distance between the observed values of two sparse curves.
pub fn euclid_distance(x: &PartialCurve, y: &PartialCurve) -> Result<f64> {
    x.ensure_same_support(y)?;
    if !matches!(x.pattern, ObservationPattern::Sparse { .. }) {
        return Err(Error::MetricPatternMismatch {
            metric: "euclid",
            pattern: x.pattern.kind(),
        });
    }
    Ok(x.values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Weighted sum over fragments of a per-fragment distance. The closure gets
/// the two fragments' samples and the grid step.
pub fn prod_distance(
    x: &PartialCurve,
    y: &PartialCurve,
    base: impl Fn(&[f64], &[f64], f64) -> f64,
) -> Result<f64> {
    x.ensure_same_support(y)?;
    let ObservationPattern::Fragments { weights, .. } = &x.pattern else {
        return Err(Error::MetricPatternMismatch {
            metric: "prod",
            pattern: x.pattern.kind(),
        });
    };
    let step = x.grid.step();
    Ok(weights
        .iter()
        .enumerate()
        .map(|(j, w)| w * base(x.segment(j), y.segment(j), step))
        .sum())
}

/// Per-fragment L2 distance, the usual base for [`prod_distance`].
pub fn segment_l2(a: &[f64], b: &[f64], step: f64) -> f64 {
    sq_l2_samples(a, b, step).sqrt()
}
