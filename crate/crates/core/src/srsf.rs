//! Square-root slope functions and the warping group action.
//!
//! `Q(f) = sign(f') sqrt(|f'|)` turns the Fisher-Rao metric into plain L2,
//! and warping `f -> f o gamma` acts on SRSFs as `q -> (q o gamma) sqrt(gamma')`.

use crate::error::{Error, Result};
use crate::funcore::{sq_l2_samples, Curve, TimeGrid};

/// Minimum gap between consecutive warp samples.
pub const WARP_MIN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Srsf {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Srsf {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        // same invariants as a curve
        let c = Curve::new(grid, values)?;
        Ok(Self {
            grid,
            values: c.into_values(),
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A sampled monotone bijection of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Warp {
    /// Validates endpoints and strict monotonicity (gap at least
    /// [`WARP_MIN_STEP`]).
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::InvalidWarp(
                "endpoints must be exactly 0 and 1".into(),
            ));
        }
        if let Some(k) = values
            .windows(2)
            .position(|w| !(w[1] - w[0] >= WARP_MIN_STEP * (1.0 - 1e-9)))
        {
            return Err(Error::InvalidWarp(format!(
                "not strictly increasing between samples {k} and {}",
                k + 1
            )));
        }
        Ok(Self { grid, values })
    }

    /// Repairs an almost-warp: clamps into `[0, 1]`, pins the endpoints and
    /// enforces the minimum slope guard.
    pub fn from_values_guarded(grid: TimeGrid, mut values: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWarp("non-finite sample".into()));
        }
        values[0] = 0.0;
        values[n - 1] = 1.0;
        for k in 1..n - 1 {
            values[k] = values[k].clamp(0.0, 1.0).max(values[k - 1] + WARP_MIN_STEP);
        }
        for k in (1..n - 1).rev() {
            values[k] = values[k].min(values[k + 1] - WARP_MIN_STEP);
        }
        Self::new(grid, values)
    }

    pub fn identity(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: grid.points(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identity(&self) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(k, &v)| v == self.grid.point(k))
    }

    /// `self o inner`, i.e. `t -> self(inner(t))`.
    pub fn compose(&self, inner: &Warp) -> Result<Warp> {
        self.grid.ensure_same(&inner.grid)?;
        let values = inner
            .values
            .iter()
            .map(|&t| interpolate(&self.values, t))
            .collect();
        Warp::from_values_guarded(self.grid, values)
    }

    /// Numerical inverse by swapping the axes and re-interpolating.
    pub fn inverse(&self) -> Warp {
        let n = self.grid.len();
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        for k in 0..n {
            let t = self.grid.point(k);
            while seg + 2 < n && self.values[seg + 1] < t {
                seg += 1;
            }
            let (y0, y1) = (self.values[seg], self.values[seg + 1]);
            let frac = ((t - y0) / (y1 - y0)).clamp(0.0, 1.0);
            out.push(self.grid.point(seg) + frac * self.grid.step());
        }
        Warp::from_values_guarded(self.grid, out).expect("inverse of a warp is a warp")
    }
}

/// Linear interpolation of uniformly spaced samples on `[0, 1]` at `x`
/// (clamped into the domain). Exact at grid points.
pub fn interpolate(values: &[f64], x: f64) -> f64 {
    let last = values.len() - 1;
    let pos = (x * last as f64).clamp(0.0, last as f64);
    let i = pos.floor() as usize;
    if i >= last {
        return values[last];
    }
    let frac = pos - i as f64;
    if frac == 0.0 {
        values[i]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}

/// Central differences inside, one-sided differences at the two ends.
pub fn derivative(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    d[0] = (values[1] - values[0]) / step;
    d[n - 1] = (values[n - 1] - values[n - 2]) / step;
    for k in 1..n - 1 {
        d[k] = (values[k + 1] - values[k - 1]) / (2.0 * step);
    }
    d
}

pub(crate) fn srsf_samples(values: &[f64], step: f64) -> Vec<f64> {
    derivative(values, step)
        .into_iter()
        .map(|d| d.signum() * d.abs().sqrt())
        .collect()
}

pub fn srsf_transform(f: &Curve) -> Srsf {
    Srsf {
        grid: f.grid(),
        values: srsf_samples(f.values(), f.grid().step()),
    }
}

/// `f0 + int_0^t q|q|`, integrated with the cumulative trapezoid rule.
pub fn srsf_inverse(q: &Srsf, f0: f64) -> Curve {
    let h = q.grid.step();
    let mut values = Vec::with_capacity(q.values.len());
    let mut acc = f0;
    values.push(acc);
    for w in q.values.windows(2) {
        acc += 0.5 * h * (w[0] * w[0].abs() + w[1] * w[1].abs());
        values.push(acc);
    }
    Curve::new(q.grid, values).expect("integral of finite samples is finite")
}

/// `f o gamma` by linear interpolation.
pub fn warp_curve(f: &Curve, gamma: &Warp) -> Result<Curve> {
    f.grid().ensure_same(&gamma.grid)?;
    if gamma.is_identity() {
        return Ok(f.clone());
    }
    let values = gamma
        .values
        .iter()
        .map(|&t| interpolate(f.values(), t))
        .collect();
    Curve::new(f.grid(), values)
}

pub(crate) fn warp_srsf_samples(q: &[f64], gamma: &[f64], step: f64) -> Vec<f64> {
    let slope = derivative(gamma, step);
    gamma
        .iter()
        .zip(slope)
        .map(|(&t, s)| interpolate(q, t) * s.max(0.0).sqrt())
        .collect()
}

/// `(q o gamma) sqrt(gamma')`, slope by finite differences.
pub fn warp_srsf(q: &Srsf, gamma: &Warp) -> Result<Srsf> {
    q.grid.ensure_same(&gamma.grid)?;
    if gamma.is_identity() {
        return Ok(q.clone());
    }
    Ok(Srsf {
        grid: q.grid,
        values: warp_srsf_samples(&q.values, &gamma.values, q.grid.step()),
    })
}

/// L2 distance between two SRSFs.
pub fn srsf_distance(q1: &Srsf, q2: &Srsf) -> Result<f64> {
    q1.grid.ensure_same(&q2.grid)?;
    Ok(sq_l2_samples(&q1.values, &q2.values, q1.grid.step()).sqrt())
}

/// Fisher-Rao distance: L2 distance between the SRSFs.
pub fn fr_distance(f: &Curve, g: &Curve) -> Result<f64> {
    srsf_distance(&srsf_transform(f), &srsf_transform(g))
}

/// Fisher-Rao distance between two equally spaced sample runs.
pub(crate) fn segment_fr(a: &[f64], b: &[f64], step: f64) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    sq_l2_samples(&srsf_samples(a, step), &srsf_samples(b, step), step).sqrt()
}
