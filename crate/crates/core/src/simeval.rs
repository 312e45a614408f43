//! Synthetic curve populations and the Monte Carlo coverage harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    coarsen_warp, ffcp, fit_split, sfcp_with_fit, sfcpp_with_fit, warp_set_contains,
    ConformalConfig, SplitFit,
};
use crate::error::{Error, Result};
use crate::funcore::{restrict, Curve, ObservationPattern, TimeGrid};
use crate::special::beta_reg;
use crate::srsf::Warp;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// `Z1 exp(-(t - 0.25)^2 / 0.072) + Z2 exp(-(t - c2)^2 / 0.072)`.
    HomogeneousTwoPeak,
    /// Mixture of the two-peak population and `Z exp(-(t - 0.5)^2 / 0.25)`.
    HeterogeneousMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub population: Population,
    /// Compose each curve with a Beta-CDF warp, `a, b ~ U(1, 3)`.
    pub phase_variation: bool,
    pub noise_sd: f64,
    pub n: usize,
    pub t_len: usize,
    pub seed: u64,
    /// Center of the second bump of the two-peak curves.
    pub second_center: f64,
    /// Share of two-peak curves in the heterogeneous mixture.
    pub two_peak_share: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            population: Population::HomogeneousTwoPeak,
            phase_variation: false,
            noise_sd: 0.0,
            n: 100,
            t_len: 100,
            seed: 0,
            second_center: 0.75,
            two_peak_share: 0.5,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewCurves {
                needed: 2,
                found: self.n,
            });
        }
        TimeGrid::new(self.t_len)?;
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidConfig("noise sd must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.two_peak_share) {
            return Err(Error::InvalidConfig(
                "mixture share must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_len)
    }
}

const BUMP_WIDTH: f64 = 0.072;
const PEAK_MEAN: f64 = 2.0;
const PEAK_VAR: f64 = 0.1;

pub fn two_peak(z1: f64, z2: f64, second_center: f64) -> impl Fn(f64) -> f64 {
    move |t| {
        z1 * (-(t - 0.25).powi(2) / BUMP_WIDTH).exp()
            + z2 * (-(t - second_center).powi(2) / BUMP_WIDTH).exp()
    }
}

pub fn one_peak(z: f64) -> impl Fn(f64) -> f64 {
    move |t| z * (-(t - 0.5).powi(2) / 0.25).exp()
}

/// Beta(a, b) CDF as a warp on `grid`.
pub fn gen_warp(a: f64, b: f64, grid: TimeGrid) -> Result<Warp> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidWarp(format!(
            "Beta parameters ({a}, {b}) must be positive"
        )));
    }
    let values = grid
        .points()
        .into_iter()
        .map(|t| beta_reg(a, b, t))
        .collect();
    Warp::from_values_guarded(grid, values)
}

/// Draws `count` curves from `spec`'s population using `rng`.
pub fn sample_curves(
    spec: &GeneratorSpec,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Curve>> {
    let grid = spec.grid()?;
    let z = Normal::new(PEAK_MEAN, PEAK_VAR.sqrt()).expect("valid normal");
    let ab = Uniform::new(1.0, 3.0).expect("valid range");
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
    (0..count)
        .map(|_| {
            let two = match spec.population {
                Population::HomogeneousTwoPeak => true,
                Population::HeterogeneousMix => rng.random::<f64>() < spec.two_peak_share,
            };
            let shape: Box<dyn Fn(f64) -> f64> = if two {
                let (z1, z2) = (z.sample(rng), z.sample(rng));
                Box::new(two_peak(z1, z2, spec.second_center))
            } else {
                Box::new(one_peak(z.sample(rng)))
            };
            let mut values: Vec<f64> = if spec.phase_variation {
                let (a, b) = (ab.sample(rng), ab.sample(rng));
                grid.points()
                    .into_iter()
                    .map(|t| shape(beta_reg(a, b, t)))
                    .collect()
            } else {
                grid.points().into_iter().map(&shape).collect()
            };
            if spec.noise_sd > 0.0 {
                for v in &mut values {
                    *v += noise.sample(rng);
                }
            }
            Curve::new(grid, values)
        })
        .collect()
}

/// `spec.n` curves drawn with `spec.seed`.
pub fn gen_curves(spec: &GeneratorSpec) -> Result<Vec<Curve>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_curves(spec, spec.n, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PatternSampler {
    Fixed {
        pattern: ObservationPattern,
    },
    /// Observed on `[0, U]` with `U ~ U(lo, hi)`.
    UniformTruncation {
        lo: f64,
        hi: f64,
    },
}

impl PatternSampler {
    pub fn truncated(u: f64) -> Result<Self> {
        Ok(PatternSampler::Fixed {
            pattern: ObservationPattern::truncated(u)?,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ObservationPattern> {
        match self {
            PatternSampler::Fixed { pattern } => Ok(pattern.clone()),
            PatternSampler::UniformTruncation { lo, hi } => {
                if !(0.0 < *lo && lo < hi && *hi <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "truncation range ({lo}, {hi}) must lie in (0, 1]"
                    )));
                }
                ObservationPattern::truncated(rng.random_range(*lo..*hi))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Procedure {
    Ffcp,
    Sfcp,
    Sfcpp { coarse_len: usize },
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Ffcp => "ffcp",
            Procedure::Sfcp => "sfcp",
            Procedure::Sfcpp { .. } => "sfcpp",
        }
    }
}

/// One procedure/pattern/config combination evaluated on shared replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub procedure: Procedure,
    pub pattern: PatternSampler,
    pub config: ConformalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub arm: String,
    pub procedure: String,
    pub alpha: f64,
    /// Replicates requested.
    pub b: usize,
    /// Replicates that produced a band.
    pub b_used: usize,
    pub t: Vec<f64>,
    pub p_k: Vec<f64>,
    pub ell_k: Vec<f64>,
    pub p_bar: f64,
    pub ell_bar: f64,
    /// Share of replicates covering the target at every point at once.
    pub p_overall: f64,
    /// Binomial 95% half-widths of `p_k`.
    pub ci_halfwidths: Vec<f64>,
    pub p_overall_ci_halfwidth: f64,
    pub errors: usize,
    pub error_messages: Vec<String>,
    /// Replicates whose training Karcher iteration did not converge.
    pub nonconverged: usize,
    /// Total number of empty band points over all replicates.
    pub empty_points: usize,
    /// Time-averaged band length of each used replicate, in replicate order.
    pub replicate_ell_bar: Vec<f64>,
    pub replicate_covered_all: Vec<bool>,
    /// Warp prediction sets only: share of replicates whose true coarse warp
    /// passes the conformal test (membership in the set, not its envelope).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_coverage: Option<f64>,
}

fn halfwidth(p: f64, b: usize) -> f64 {
    1.96 * (p * (1.0 - p) / b as f64).sqrt()
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("report: {msg}")));
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return bad("unknown schema version");
        }
        let t = self.t.len();
        if self.p_k.len() != t || self.ell_k.len() != t || self.ci_halfwidths.len() != t {
            return bad("per-point arrays disagree in length");
        }
        let rate = |p: f64| (0.0..=1.0).contains(&p);
        if !self.p_k.iter().all(|&p| rate(p)) || !rate(self.p_bar) || !rate(self.p_overall) {
            return bad("rates must lie in [0, 1]");
        }
        if !self.ell_k.iter().all(|&l| l >= 0.0) || !(self.ell_bar >= 0.0) {
            return bad("lengths must be nonnegative");
        }
        if self.b_used + self.errors != self.b
            || self.replicate_ell_bar.len() != self.b_used
            || self.replicate_covered_all.len() != self.b_used
        {
            return bad("replicate counts disagree");
        }
        Ok(())
    }
}

/// Per-replicate result of one arm.
#[derive(Debug, Clone, PartialEq)]
struct Outcome {
    covered: Vec<bool>,
    lengths: Vec<f64>,
    converged: bool,
    empty: usize,
    in_set: Option<bool>,
}

fn run_arm(
    arm: &Arm,
    curves: &[Curve],
    target: &Curve,
    pattern: &ObservationPattern,
    fits: &mut Vec<(usize, crate::registration::KarcherOptions, SplitFit)>,
) -> Result<Outcome> {
    let partial = restrict(target, pattern)?;
    let config = &arm.config;
    let mut fit_for = |config: &ConformalConfig| -> Result<SplitFit> {
        if let Some((_, _, f)) = fits
            .iter()
            .find(|(n, k, _)| *n == config.n_train && *k == config.karcher)
        {
            return Ok(f.clone());
        }
        let f = fit_split(curves, config)?;
        fits.push((config.n_train, config.karcher.clone(), f.clone()));
        Ok(f)
    };
    match arm.procedure {
        Procedure::Ffcp => {
            let band = ffcp(curves, &partial, config)?;
            let covered = target
                .values()
                .iter()
                .enumerate()
                .map(|(k, &v)| band.contains(k, v))
                .collect();
            Ok(Outcome {
                covered,
                lengths: band.lengths(),
                converged: true,
                empty: band.empty_points.len(),
                in_set: None,
            })
        }
        Procedure::Sfcp => {
            let fit = fit_for(config)?;
            let band = sfcp_with_fit(&fit, &partial, config)?;
            let (_, truth) = fit.register(target)?;
            let covered = truth
                .values()
                .iter()
                .enumerate()
                .map(|(k, &v)| band.contains(k, v))
                .collect();
            Ok(Outcome {
                covered,
                lengths: band.lengths(),
                converged: fit.training.converged,
                empty: band.empty_points.len(),
                in_set: None,
            })
        }
        Procedure::Sfcpp { coarse_len } => {
            let coarse = TimeGrid::new(coarse_len)?;
            let fit = fit_for(config)?;
            let set = sfcpp_with_fit(&fit, &partial, coarse, config)?;
            let (warp, _) = fit.register(target)?;
            let truth = coarsen_warp(&warp, coarse)?;
            let in_set = warp_set_contains(&fit, &partial, &set, config, &truth)?;
            let env = &set.envelope;
            let covered = truth
                .iter()
                .enumerate()
                .map(|(k, &v)| env.contains(k, v))
                .collect();
            Ok(Outcome {
                covered,
                lengths: env.lengths(),
                converged: fit.training.converged,
                empty: env.empty_points.len(),
                in_set: Some(in_set),
            })
        }
    }
}

/// Generator draws of one replicate: `spec.n` curves plus the target, then
/// one pattern per arm.
fn replicate_data(
    spec: &GeneratorSpec,
    arms: &[Arm],
    index: usize,
) -> Result<(Vec<Curve>, Curve, Vec<ObservationPattern>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let mut curves = sample_curves(spec, spec.n + 1, &mut rng)?;
    let target = curves.pop().expect("n + 1 curves");
    let patterns = arms
        .iter()
        .map(|a| a.pattern.sample(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((curves, target, patterns))
}

/// Evaluates every arm on the same `b` replicates. Each replicate uses its own
/// random stream, so the reports do not depend on scheduling.
pub fn monte_carlo_arms(spec: &GeneratorSpec, arms: &[Arm], b: usize) -> Result<Vec<EvalReport>> {
    spec.validate()?;
    if b == 0 {
        return Err(Error::InvalidConfig("need at least one replicate".into()));
    }
    for arm in arms {
        arm.config.validate()?;
    }
    let per_replicate: Vec<Vec<Result<Outcome>>> = (0..b)
        .into_par_iter()
        .map(|r| match replicate_data(spec, arms, r) {
            Ok((curves, target, patterns)) => {
                let mut fits = Vec::new();
                arms.iter()
                    .zip(&patterns)
                    .map(|(arm, pat)| run_arm(arm, &curves, &target, pat, &mut fits))
                    .collect()
            }
            Err(e) => arms.iter().map(|_| Err(e.clone())).collect(),
        })
        .collect();

    arms.iter()
        .enumerate()
        .map(|(a, arm)| {
            let outcomes: Vec<&Result<Outcome>> = per_replicate.iter().map(|r| &r[a]).collect();
            assemble(arm, spec, b, &outcomes)
        })
        .collect()
}

fn assemble(
    arm: &Arm,
    spec: &GeneratorSpec,
    b: usize,
    outcomes: &[&Result<Outcome>],
) -> Result<EvalReport> {
    let ok: Vec<&Outcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let mut error_messages: Vec<String> = Vec::new();
    for e in outcomes.iter().filter_map(|o| o.as_ref().err()) {
        let msg = e.to_string();
        if !error_messages.contains(&msg) && error_messages.len() < 8 {
            error_messages.push(msg);
        }
    }
    let first = ok.first().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "every replicate of arm {} failed: {}",
            arm.name,
            error_messages.first().cloned().unwrap_or_default()
        ))
    })?;
    let t_len = first.covered.len();
    let t = match arm.procedure {
        Procedure::Sfcpp { coarse_len } => TimeGrid::new(coarse_len)?.points(),
        _ => spec.grid()?.points(),
    };
    let used = ok.len();
    let mut p_k = vec![0.0; t_len];
    let mut ell_k = vec![0.0; t_len];
    let mut replicate_ell_bar = Vec::with_capacity(used);
    let mut replicate_covered_all = Vec::with_capacity(used);
    for o in &ok {
        for k in 0..t_len {
            if o.covered[k] {
                p_k[k] += 1.0;
            }
            ell_k[k] += o.lengths[k];
        }
        replicate_ell_bar.push(o.lengths.iter().sum::<f64>() / t_len as f64);
        replicate_covered_all.push(o.covered.iter().all(|&c| c));
    }
    for k in 0..t_len {
        p_k[k] /= used as f64;
        ell_k[k] /= used as f64;
    }
    let p_overall = replicate_covered_all.iter().filter(|&&c| c).count() as f64 / used as f64;
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        arm: arm.name.clone(),
        procedure: arm.procedure.name().to_string(),
        alpha: arm.config.alpha,
        b,
        b_used: used,
        t,
        ci_halfwidths: p_k.iter().map(|&p| halfwidth(p, used)).collect(),
        p_bar: p_k.iter().sum::<f64>() / t_len as f64,
        ell_bar: ell_k.iter().sum::<f64>() / t_len as f64,
        p_overall_ci_halfwidth: halfwidth(p_overall, used),
        p_k,
        ell_k,
        p_overall,
        errors: b - used,
        error_messages,
        nonconverged: ok.iter().filter(|o| !o.converged).count(),
        empty_points: ok.iter().map(|o| o.empty).sum(),
        replicate_ell_bar,
        replicate_covered_all,
        set_coverage: ok
            .iter()
            .map(|o| o.in_set)
            .collect::<Option<Vec<bool>>>()
            .map(|v| v.iter().filter(|&&c| c).count() as f64 / used as f64),
    };
    report.validate()?;
    Ok(report)
}

/// Single-procedure convenience wrapper around [`monte_carlo_arms`].
pub fn monte_carlo(
    procedure: Procedure,
    spec: &GeneratorSpec,
    pattern: &PatternSampler,
    config: &ConformalConfig,
    b: usize,
) -> Result<EvalReport> {
    let arm = Arm {
        name: procedure.name().to_string(),
        procedure,
        pattern: pattern.clone(),
        config: config.clone(),
    };
    Ok(monte_carlo_arms(spec, std::slice::from_ref(&arm), b)?.remove(0))
}
