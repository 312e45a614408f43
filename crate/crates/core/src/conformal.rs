//! Full and split conformal prediction bands for partially observed curves,
//! and split conformal prediction sets for the registering warp.
//!
//! All three procedures share one engine: a leave-self-out neighborhood
//! smoother on an augmented sample whose last member is the new partial curve.
//! For a trial response `y` only the new point's response changes, so the
//! weighted sums that do not involve it are computed once per time point and
//! each trial costs one pass over the calibration scores.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcore::{restrict, Curve, PartialCurve, TimeGrid};
use crate::registration::{
    karcher_mean, register_to_template, warp_distance_samples, KarcherOptions, MoveSet,
    RegistrationResult,
};
use crate::smoothing::{
    bandwidth_candidates, distance_matrix, kernel_weights, order_index, tune_bandwidth,
    DistanceMatrix, KernelKind, KernelSpec, LengthProfile, Metric, TuneMode, DEFAULT_BETAS,
};
use crate::srsf::{interpolate, Warp};

/// The `ceil(beta * m)`-th smallest value (lower quantile).
pub fn lower_quantile(values: &[f64], beta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("quantile of an empty sample".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile level {beta} outside (0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(beta, sorted.len())])
}

/// `score <= lower_quantile(others + [score], beta)`, by counting.
fn within_quantile(score: f64, others: impl Iterator<Item = f64>, m: usize, beta: f64) -> bool {
    let rank = order_index(beta, m) + 1;
    let below = others.filter(|&s| s < score).count();
    below < rank
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialGridSpec {
    pub n_trial: usize,
    /// Relative expansion `c` of the response range.
    pub expansion: f64,
}

impl Default for TrialGridSpec {
    fn default() -> Self {
        Self {
            n_trial: 200,
            expansion: 0.25,
        }
    }
}

impl TrialGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_trial < 2 || !(self.expansion >= 0.0) || !self.expansion.is_finite() {
            return Err(Error::InvalidConfig(
                "trial grid needs n_trial >= 2 and a nonnegative expansion".into(),
            ));
        }
        Ok(())
    }
}

/// Equally spaced trial values over `[min - c r, max + c r]`, `r` the
/// response range floored at `1e-6`.
pub fn trial_grid(responses_at_t: &[f64], spec: &TrialGridSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if responses_at_t.is_empty() {
        return Err(Error::InvalidConfig("trial grid needs responses".into()));
    }
    let lo = responses_at_t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = responses_at_t
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi - lo < 1e-6 {
        let mid = 0.5 * (lo + hi);
        (mid - 5e-7, mid + 5e-7)
    } else {
        (lo, hi)
    };
    let r = hi - lo;
    let (a, b) = (lo - spec.expansion * r, hi + spec.expansion * r);
    let last = (spec.n_trial - 1) as f64;
    Ok((0..spec.n_trial)
        .map(|i| {
            let s = i as f64 / last;
            (1.0 - s) * a + s * b
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandTarget {
    /// The raw value of the new curve.
    Raw,
    /// The registered amplitude of the new curve.
    Amplitude,
    /// The registering warp of the new curve (coarse grid).
    WarpEnvelope,
}

/// Pointwise prediction intervals. Points where nothing was accepted hold
/// NaN bounds and are listed in `empty_points`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionBand {
    pub grid: TimeGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub target: BandTarget,
    pub empty_points: Vec<usize>,
    /// Points whose accepted trial values were not contiguous on the grid;
    /// the reported interval is their hull.
    pub nonconvex_points: Vec<usize>,
    /// Bandwidth used at each point.
    pub bandwidths: Vec<f64>,
}

impl PredictionBand {
    pub fn is_empty_at(&self, k: usize) -> bool {
        self.empty_points.binary_search(&k).is_ok()
    }

    pub fn contains(&self, k: usize, value: f64) -> bool {
        !self.is_empty_at(k) && self.lower[k] <= value && value <= self.upper[k]
    }

    /// Interval length per point; empty points have length 0.
    pub fn lengths(&self) -> Vec<f64> {
        (0..self.lower.len())
            .map(|k| {
                if self.is_empty_at(k) {
                    0.0
                } else {
                    self.upper[k] - self.lower[k]
                }
            })
            .collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn mean_length(&self) -> f64 {
        let l = self.lengths();
        l.iter().sum::<f64>() / l.len() as f64
    }
}

impl LengthProfile for PredictionBand {
    fn point_lengths(&self) -> Vec<Option<f64>> {
        (0..self.lower.len())
            .map(|k| (!self.is_empty_at(k)).then(|| self.upper[k] - self.lower[k]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BandwidthChoice {
    Fixed {
        kernel: KernelSpec,
    },
    /// Candidates are lower quantiles of the pairwise predictor distances.
    Tuned {
        kind: KernelKind,
        betas: Vec<f64>,
        mode: TuneMode,
    },
}

impl Default for BandwidthChoice {
    fn default() -> Self {
        BandwidthChoice::Tuned {
            kind: KernelKind::Gaussian,
            betas: DEFAULT_BETAS.to_vec(),
            mode: TuneMode::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalConfig {
    pub alpha: f64,
    /// Training-split size for the split procedures.
    pub n_train: usize,
    pub metric: Metric,
    pub bandwidth: BandwidthChoice,
    pub trial: TrialGridSpec,
    pub seed: u64,
    pub karcher: KarcherOptions,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            n_train: 50,
            metric: Metric::L2,
            bandwidth: BandwidthChoice::default(),
            trial: TrialGridSpec::default(),
            seed: 0,
            karcher: KarcherOptions::default(),
        }
    }
}

impl ConformalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        self.trial.validate()?;
        if let BandwidthChoice::Fixed { kernel } = &self.bandwidth {
            KernelSpec::new(kernel.kind, kernel.bandwidth)?;
        }
        Ok(())
    }

    fn check_split(&self, n: usize) -> Result<()> {
        if self.n_train == 0 || self.n_train >= n {
            return Err(Error::InvalidConfig(format!(
                "training split {} must lie strictly between 0 and {n}",
                self.n_train
            )));
        }
        Ok(())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Indices ordering curves lexicographically by their values. Feeding the
/// engine a canonical order makes every floating-point sum independent of
/// the order in which calibration curves arrive.
fn canonical_order(curves: &[&Curve]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..curves.len()).collect();
    idx.sort_by(|&a, &b| lex_cmp(curves[a].values(), curves[b].values()));
    idx
}

/// Kernel weights of every augmented point against every other.
struct Weights {
    w: Vec<Vec<f64>>,
    sums: Vec<f64>,
}

impl Weights {
    fn new(d: &DistanceMatrix, kernel: KernelSpec) -> Self {
        let w: Vec<Vec<f64>> = (0..d.len())
            .map(|i| kernel_weights(d.row(i), i, kernel).0)
            .collect();
        let sums = w.iter().map(|r| r.iter().sum()).collect();
        Self { w, sums }
    }

    fn new_index(&self) -> usize {
        self.w.len() - 1
    }

    /// Weighted sum of calibration responses for row `i`, new point excluded.
    fn partial_sum(&self, i: usize, ys: &[f64]) -> f64 {
        self.w[i][..ys.len()]
            .iter()
            .zip(ys)
            .map(|(w, y)| w * y)
            .sum()
    }
}

/// Augmented sample: distances among calibration predictors plus the new
/// one (last), and calibration responses on the output grid.
struct Augmented {
    d: DistanceMatrix,
    /// `responses[i][k]` for calibration point `i` at output point `k`.
    responses: Vec<Vec<f64>>,
}

impl Augmented {
    fn build(
        predictors: Vec<PartialCurve>,
        new_partial: &PartialCurve,
        responses: Vec<Vec<f64>>,
        config: &ConformalConfig,
    ) -> Result<Self> {
        let mut all = predictors;
        all.push(new_partial.clone());
        let d = distance_matrix(&all, config.metric, &config.karcher.moves)?;
        Ok(Self { d, responses })
    }

    fn at(&self, k: usize) -> Vec<f64> {
        self.responses.iter().map(|r| r[k]).collect()
    }
}

/// Smoothed prediction for the new point, which does not depend on the
/// trial value. Sums run over offsets from the smallest response so that
/// identical responses are reproduced exactly.
fn new_point_prediction(weights: &Weights, ys: &[f64]) -> f64 {
    let base = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let dev: Vec<f64> = ys.iter().map(|y| y - base).collect();
    let new = weights.new_index();
    base + weights.partial_sum(new, &dev) / weights.sums[new]
}

/// Accepted trial values at one output point.
fn scalar_acceptance(weights: &Weights, ys: &[f64], beta: f64, trials: &[f64]) -> Vec<bool> {
    let n = ys.len();
    let new = weights.new_index();
    let base = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let dev: Vec<f64> = ys.iter().map(|y| y - base).collect();
    let partial: Vec<f64> = (0..n).map(|i| weights.partial_sum(i, &dev)).collect();
    let pred_new = new_point_prediction(weights, ys);
    trials
        .iter()
        .map(|&y| {
            let s_new = (y - pred_new).abs();
            let others = (0..n).map(|i| {
                let pred = (partial[i] + weights.w[i][new] * (y - base)) / weights.sums[i];
                (dev[i] - pred).abs()
            });
            within_quantile(s_new, others, n + 1, beta)
        })
        .collect()
}

/// Trial grid plus the new point's prediction, where its score is zero.
fn trial_values(weights: &Weights, ys: &[f64], spec: &TrialGridSpec) -> Result<Vec<f64>> {
    let mut trials = trial_grid(ys, spec)?;
    let center = new_point_prediction(weights, ys);
    let at = trials.partition_point(|&v| v < center);
    if trials.get(at) != Some(&center) {
        trials.insert(at, center);
    }
    Ok(trials)
}

fn hull(trials: &[f64], accepted: &[bool]) -> Option<(f64, f64, bool)> {
    let first = accepted.iter().position(|&a| a)?;
    let last = accepted.iter().rposition(|&a| a)?;
    let contiguous = accepted[first..=last].iter().all(|&a| a);
    Some((trials[first], trials[last], !contiguous))
}

fn scalar_band(
    aug: &Augmented,
    grid: TimeGrid,
    alpha: f64,
    kernel: KernelSpec,
    trial: &TrialGridSpec,
    target: BandTarget,
) -> Result<PredictionBand> {
    let weights = Weights::new(&aug.d, kernel);
    let beta = 1.0 - alpha;
    let points = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let ys = aug.at(k);
            let trials = trial_values(&weights, &ys, trial)?;
            let accepted = scalar_acceptance(&weights, &ys, beta, &trials);
            Ok(hull(&trials, &accepted))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut band = PredictionBand {
        grid,
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        alpha,
        target,
        empty_points: Vec::new(),
        nonconvex_points: Vec::new(),
        bandwidths: vec![kernel.bandwidth; grid.len()],
    };
    for (k, p) in points.into_iter().enumerate() {
        match p {
            Some((lo, hi, nonconvex)) => {
                band.lower.push(lo);
                band.upper.push(hi);
                if nonconvex {
                    band.nonconvex_points.push(k);
                }
            }
            None => {
                band.lower.push(f64::NAN);
                band.upper.push(f64::NAN);
                band.empty_points.push(k);
            }
        }
    }
    Ok(band)
}

/// Runs the scalar engine under the configured bandwidth choice.
fn tuned_scalar_band(
    aug: &Augmented,
    grid: TimeGrid,
    config: &ConformalConfig,
    target: BandTarget,
) -> Result<PredictionBand> {
    match &config.bandwidth {
        BandwidthChoice::Fixed { kernel } => {
            scalar_band(aug, grid, config.alpha, *kernel, &config.trial, target)
        }
        BandwidthChoice::Tuned { kind, betas, mode } => {
            let candidates = bandwidth_candidates(&aug.d, betas)?;
            let (bands, sel) = tune_bandwidth(
                |h| {
                    scalar_band(
                        aug,
                        grid,
                        config.alpha,
                        KernelSpec::new(*kind, h)?,
                        &config.trial,
                        target,
                    )
                },
                &candidates,
                *mode,
            )?;
            let mut out = bands[sel.chosen[0]].clone();
            out.empty_points.clear();
            out.nonconvex_points.clear();
            for (k, &c) in sel.chosen.iter().enumerate() {
                let b = &bands[c];
                out.lower[k] = b.lower[k];
                out.upper[k] = b.upper[k];
                out.bandwidths[k] = b.bandwidths[k];
                if b.is_empty_at(k) {
                    out.empty_points.push(k);
                }
                if b.nonconvex_points.binary_search(&k).is_ok() {
                    out.nonconvex_points.push(k);
                }
            }
            Ok(out)
        }
    }
}

fn check_inputs(curves: &[Curve], new_partial: &PartialCurve, needed: usize) -> Result<()> {
    if curves.len() < needed {
        return Err(Error::TooFewCurves {
            needed,
            found: curves.len(),
        });
    }
    for c in curves {
        new_partial.grid().ensure_same(&c.grid())?;
    }
    Ok(())
}

/// Full conformal band for the raw values of the curve behind `new_partial`.
pub fn ffcp(
    curves: &[Curve],
    new_partial: &PartialCurve,
    config: &ConformalConfig,
) -> Result<PredictionBand> {
    config.validate()?;
    check_inputs(curves, new_partial, 2)?;
    let refs: Vec<&Curve> = curves.iter().collect();
    let order = canonical_order(&refs);
    let pattern = new_partial.pattern();
    let predictors = order
        .iter()
        .map(|&i| restrict(&curves[i], pattern))
        .collect::<Result<Vec<_>>>()?;
    let responses = order.iter().map(|&i| curves[i].values().to_vec()).collect();
    let aug = Augmented::build(predictors, new_partial, responses, config)?;
    tuned_scalar_band(&aug, new_partial.grid(), config, BandTarget::Raw)
}

/// Training-split template and the registered calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFit {
    /// Karcher mean of the training curves.
    pub training: RegistrationResult,
    /// Calibration curves in canonical order.
    pub calibration: Vec<Curve>,
    /// Warps registering each calibration curve to the template.
    pub warps: Vec<Warp>,
    /// Registered amplitudes `f o warp`.
    pub aligned: Vec<Curve>,
    pub moves: MoveSet,
}

impl SplitFit {
    /// Registers a complete curve to the training template.
    pub fn register(&self, curve: &Curve) -> Result<(Warp, Curve)> {
        self.training.template.grid().ensure_same(&curve.grid())?;
        register_to_template(&self.training.template_srsf, curve, &self.moves)
    }
}

/// Karcher template from the first `n_train` curves; the remaining curves are
/// registered to it. The caller is responsible for shuffling.
pub fn fit_split(curves: &[Curve], config: &ConformalConfig) -> Result<SplitFit> {
    config.check_split(curves.len())?;
    let grid = curves[0].grid();
    for c in curves {
        grid.ensure_same(&c.grid())?;
    }
    let (train, cal) = curves.split_at(config.n_train);
    let training = karcher_mean(train, &config.karcher)?;
    let refs: Vec<&Curve> = cal.iter().collect();
    let calibration: Vec<Curve> = canonical_order(&refs)
        .into_iter()
        .map(|i| cal[i].clone())
        .collect();
    let moves = &config.karcher.moves;
    let pairs = calibration
        .par_iter()
        .map(|c| register_to_template(&training.template_srsf, c, moves))
        .collect::<Result<Vec<_>>>()?;
    let (warps, aligned) = pairs.into_iter().unzip();
    Ok(SplitFit {
        training,
        calibration,
        warps,
        aligned,
        moves: moves.clone(),
    })
}

fn split_predictors(fit: &SplitFit, new_partial: &PartialCurve) -> Result<Vec<PartialCurve>> {
    for c in &fit.calibration {
        new_partial.grid().ensure_same(&c.grid())?;
    }
    fit.calibration
        .iter()
        .map(|c| restrict(c, new_partial.pattern()))
        .collect()
}

/// Split conformal band for the registered amplitude, given a fitted split.
pub fn sfcp_with_fit(
    fit: &SplitFit,
    new_partial: &PartialCurve,
    config: &ConformalConfig,
) -> Result<PredictionBand> {
    config.validate()?;
    let predictors = split_predictors(fit, new_partial)?;
    let responses = fit.aligned.iter().map(|c| c.values().to_vec()).collect();
    let aug = Augmented::build(predictors, new_partial, responses, config)?;
    tuned_scalar_band(&aug, new_partial.grid(), config, BandTarget::Amplitude)
}

/// Split conformal band for the registered amplitude of the new curve.
/// Uses the first `config.n_train` curves as the training split.
pub fn sfcp(
    curves: &[Curve],
    new_partial: &PartialCurve,
    config: &ConformalConfig,
) -> Result<(PredictionBand, RegistrationResult)> {
    config.validate()?;
    check_inputs(curves, new_partial, 2)?;
    let fit = fit_split(curves, config)?;
    let band = sfcp_with_fit(&fit, new_partial, config)?;
    Ok((band, fit.training))
}

/// Conformal prediction set for the warp registering the new curve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPredictionSet {
    /// Smoothed prediction for the new warp.
    pub center: Warp,
    /// Largest conformal threshold among accepted vectors.
    pub radius: f64,
    pub accepted: Vec<Warp>,
    pub envelope: PredictionBand,
    /// Kernel used by the smoother, after tuning.
    pub kernel: KernelSpec,
}

/// Candidate values for the interior coordinates of the warp vector.
fn coordinate_candidates(values: &[f64], expansion: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let r = hi - lo;
    let mut out: Vec<f64> = (1..=9)
        .map(|d| sorted[order_index(d as f64 / 10.0, sorted.len())])
        .collect();
    out.extend([lo, hi, lo - expansion * r, hi + expansion * r]);
    const EPS: f64 = 1e-6;
    let mut out: Vec<f64> = out.into_iter().map(|v| v.clamp(EPS, 1.0 - EPS)).collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Strictly increasing vectors `(0, y_2, .., y_{T-1}, 1)` from the Cartesian
/// product of per-coordinate candidates.
fn trial_lattice(candidates: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0]];
    for cands in candidates {
        let mut next = Vec::new();
        for prefix in &out {
            let last = *prefix.last().unwrap();
            for &c in cands.iter().filter(|&&c| c > last) {
                let mut v = prefix.clone();
                v.push(c);
                next.push(v);
            }
        }
        out = next;
    }
    for v in &mut out {
        v.push(1.0);
    }
    out
}

struct WarpRun {
    center: Vec<f64>,
    accepted: Vec<(Vec<f64>, f64)>,
}

fn warp_acceptance(weights: &Weights, ys: &[Vec<f64>], beta: f64, lattice: &[Vec<f64>]) -> WarpRun {
    let n = ys.len();
    let t = ys[0].len();
    let new = weights.new_index();
    // smooth offsets from the identity so identity responses stay exact
    let id: Vec<f64> = (0..t).map(|k| k as f64 / (t - 1) as f64).collect();
    let offset = |v: &[f64]| -> Vec<f64> { v.iter().zip(&id).map(|(a, b)| a - b).collect() };
    let dev: Vec<Vec<f64>> = ys.iter().map(|y| offset(y)).collect();
    let weighted = |i: usize| -> Vec<f64> {
        let mut acc = vec![0.0; t];
        for (j, y) in dev.iter().enumerate() {
            let w = weights.w[i][j];
            for (a, v) in acc.iter_mut().zip(y) {
                *a += w * v;
            }
        }
        acc
    };
    let partial: Vec<Vec<f64>> = (0..n).map(weighted).collect();
    let center: Vec<f64> = weighted(new)
        .into_iter()
        .zip(&id)
        .map(|(v, b)| b + v / weights.sums[new])
        .collect();
    let rank = order_index(beta, n + 1);
    let accepted = lattice
        .par_iter()
        .filter_map(|y| {
            let s_new = warp_distance_samples(y, &center);
            let mut scores: Vec<f64> = (0..n)
                .map(|i| {
                    let wi = weights.w[i][new];
                    let pred: Vec<f64> = partial[i]
                        .iter()
                        .zip(y.iter().zip(&id))
                        .map(|(a, (v, b))| b + (a + wi * (v - b)) / weights.sums[i])
                        .collect();
                    warp_distance_samples(&ys[i], &pred)
                })
                .collect();
            scores.push(s_new);
            scores.sort_by(f64::total_cmp);
            let threshold = scores[rank];
            (s_new <= threshold).then(|| (y.clone(), threshold))
        })
        .collect();
    WarpRun { center, accepted }
}

fn envelope_band(coarse: TimeGrid, alpha: f64, h: f64, run: &WarpRun) -> PredictionBand {
    let t = coarse.len();
    let mut lower = vec![f64::NAN; t];
    let mut upper = vec![f64::NAN; t];
    let mut empty_points = Vec::new();
    if run.accepted.is_empty() {
        empty_points = (0..t).collect();
    } else {
        for k in 0..t {
            lower[k] = run
                .accepted
                .iter()
                .map(|(v, _)| v[k])
                .fold(f64::INFINITY, f64::min);
            upper[k] = run
                .accepted
                .iter()
                .map(|(v, _)| v[k])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    PredictionBand {
        grid: coarse,
        lower,
        upper,
        alpha,
        target: BandTarget::WarpEnvelope,
        empty_points,
        nonconvex_points: Vec::new(),
        bandwidths: vec![h; t],
    }
}

/// Samples of `warp` at the points of `coarse`.
pub fn coarsen_warp(warp: &Warp, coarse: TimeGrid) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = coarse
        .points()
        .iter()
        .map(|&t| interpolate(warp.values(), t))
        .collect();
    v[0] = 0.0;
    *v.last_mut().unwrap() = 1.0;
    Ok(v)
}

/// Calibration responses on the coarse grid, the augmented distances and the
/// score quantile level `1 - alpha / (T - 2)`.
fn warp_setup(
    fit: &SplitFit,
    new_partial: &PartialCurve,
    coarse: TimeGrid,
    config: &ConformalConfig,
) -> Result<(Augmented, Vec<Vec<f64>>, f64)> {
    config.validate()?;
    let t = coarse.len();
    if t < 3 {
        return Err(Error::InvalidConfig(
            "coarse grid needs an interior point".into(),
        ));
    }
    let beta = 1.0 - config.alpha / (t - 2) as f64;
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha / (T - 2) = {} must be below 1",
            config.alpha / (t - 2) as f64
        )));
    }
    let predictors = split_predictors(fit, new_partial)?;
    let ys = fit
        .warps
        .iter()
        .map(|w| coarsen_warp(w, coarse))
        .collect::<Result<Vec<_>>>()?;
    let aug = Augmented::build(predictors, new_partial, ys.clone(), config)?;
    Ok((aug, ys, beta))
}

/// Split conformal prediction set for the registering warp, given a fit.
pub fn sfcpp_with_fit(
    fit: &SplitFit,
    new_partial: &PartialCurve,
    coarse: TimeGrid,
    config: &ConformalConfig,
) -> Result<WarpPredictionSet> {
    let t = coarse.len();
    let (aug, ys, beta) = warp_setup(fit, new_partial, coarse, config)?;
    let candidates: Vec<Vec<f64>> = (1..t - 1)
        .map(|k| coordinate_candidates(&aug.at(k), config.trial.expansion))
        .collect();
    let lattice = trial_lattice(&candidates);

    let run_with = |kernel: KernelSpec| {
        let weights = Weights::new(&aug.d, kernel);
        let run = warp_acceptance(&weights, &ys, beta, &lattice);
        (run, kernel)
    };
    let (run, kernel) = match &config.bandwidth {
        BandwidthChoice::Fixed { kernel } => run_with(*kernel),
        BandwidthChoice::Tuned { kind, betas, .. } => {
            let hs = bandwidth_candidates(&aug.d, betas)?;
            let kernels = hs
                .iter()
                .map(|&h| KernelSpec::new(*kind, h))
                .collect::<Result<Vec<_>>>()?;
            let runs: Vec<(WarpRun, KernelSpec)> =
                kernels.par_iter().map(|&k| run_with(k)).collect();
            let score = |r: &WarpRun, h: f64| {
                if r.accepted.is_empty() {
                    f64::INFINITY
                } else {
                    envelope_band(coarse, config.alpha, h, r).mean_length()
                }
            };
            let mut order: Vec<usize> = (0..runs.len()).collect();
            order.sort_by(|&a, &b| runs[a].1.bandwidth.total_cmp(&runs[b].1.bandwidth));
            let mut best = order[0];
            for &c in &order[1..] {
                if score(&runs[c].0, runs[c].1.bandwidth)
                    < score(&runs[best].0, runs[best].1.bandwidth)
                {
                    best = c;
                }
            }
            runs.into_iter().nth(best).unwrap()
        }
    };
    if run.accepted.is_empty() {
        return Err(Error::EmptyWarpSet);
    }
    let envelope = envelope_band(coarse, config.alpha, kernel.bandwidth, &run);
    let radius = run.accepted.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let accepted = run
        .accepted
        .iter()
        .map(|(v, _)| Warp::new(coarse, v.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(WarpPredictionSet {
        center: Warp::from_values_guarded(coarse, run.center)?,
        radius,
        accepted,
        envelope,
        kernel,
    })
}

/// Whether the conformal test behind `set` accepts the coarse warp vector
/// `vector`, i.e. whether `vector` lies in the prediction set itself rather
/// than in its lattice envelope.
pub fn warp_set_contains(
    fit: &SplitFit,
    new_partial: &PartialCurve,
    set: &WarpPredictionSet,
    config: &ConformalConfig,
    vector: &[f64],
) -> Result<bool> {
    let coarse = set.envelope.grid;
    if vector.len() != coarse.len() {
        return Err(Error::LengthMismatch {
            expected: coarse.len(),
            found: vector.len(),
        });
    }
    let (aug, ys, beta) = warp_setup(fit, new_partial, coarse, config)?;
    let weights = Weights::new(&aug.d, set.kernel);
    let run = warp_acceptance(&weights, &ys, beta, &[vector.to_vec()]);
    Ok(!run.accepted.is_empty())
}

/// Split conformal prediction set for the warp registering the new curve to
/// the training template, on the coarse grid `coarse`.
pub fn sfcpp(
    curves: &[Curve],
    new_partial: &PartialCurve,
    coarse: TimeGrid,
    config: &ConformalConfig,
) -> Result<WarpPredictionSet> {
    config.validate()?;
    check_inputs(curves, new_partial, 2)?;
    let fit = fit_split(curves, config)?;
    sfcpp_with_fit(&fit, new_partial, coarse, config)
}
