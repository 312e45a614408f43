//! The four subcommands.

use std::path::Path;

use efcp_core::conformal::{
    coarsen_warp, ffcp, fit_split, sfcp_with_fit, sfcpp_with_fit, warp_set_contains, BandTarget,
    BandwidthChoice, ConformalConfig, PredictionBand, TrialGridSpec,
};
use efcp_core::funcore::restrict;
use efcp_core::registration::{karcher_mean, KarcherOptions, MoveSet};
use efcp_core::simeval::{
    gen_curves, monte_carlo, GeneratorSpec, PatternSampler, Population, Procedure,
};
use efcp_core::smoothing::{BaseMetric, KernelKind, KernelSpec, Metric, TuneMode, DEFAULT_BETAS};
use efcp_core::{Curve, ObservationPattern, PartialCurve, TimeGrid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{
    ConformalArgs, EvaluateArgs, GeneratorArgs, KarcherArgs, KernelArg, MetricArg, PatternArgs,
    PopulationArg, PredictArgs, ProcArg, RegisterArgs, SimulateArgs, TuneArg,
};
use crate::data::{
    fmt_num, read_curves, read_new_curve, write_columns, write_curves, write_json, Dataset,
};
use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;

fn fill<T>(slot: &mut Option<T>, default: T) {
    if slot.is_none() {
        *slot = Some(default);
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

impl GeneratorArgs {
    fn fill_defaults(&mut self) {
        let d = GeneratorSpec::default();
        fill(&mut self.population, PopulationArg::Homogeneous);
        fill(&mut self.phase, d.phase_variation);
        fill(&mut self.noise_sd, d.noise_sd);
        fill(&mut self.n, d.n);
        fill(&mut self.t_len, d.t_len);
        fill(&mut self.second_center, d.second_center);
        fill(&mut self.two_peak_share, d.two_peak_share);
    }

    fn spec(&self, seed: u64) -> CliResult<GeneratorSpec> {
        let spec = GeneratorSpec {
            population: match self.population.unwrap() {
                PopulationArg::Homogeneous => Population::HomogeneousTwoPeak,
                PopulationArg::Heterogeneous => Population::HeterogeneousMix,
            },
            phase_variation: self.phase.unwrap(),
            noise_sd: self.noise_sd.unwrap(),
            n: self.n.unwrap(),
            t_len: self.t_len.unwrap(),
            seed,
            second_center: self.second_center.unwrap(),
            two_peak_share: self.two_peak_share.unwrap(),
        };
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(spec)
    }
}

impl KarcherArgs {
    fn fill_defaults(&mut self) {
        let d = KarcherOptions::default();
        fill(&mut self.max_iter, d.max_iter);
        fill(&mut self.tol, d.tol);
        fill(&mut self.max_step, 3);
        fill(&mut self.recenter, d.recenter);
    }

    fn options(&self) -> CliResult<KarcherOptions> {
        let max_step = self.max_step.unwrap();
        if max_step == 0 {
            return Err(usage("--max-step must be at least 1"));
        }
        let tol = self.tol.unwrap();
        if !(tol >= 0.0) {
            return Err(usage("--tol must be nonnegative"));
        }
        Ok(KarcherOptions {
            tol,
            max_iter: self.max_iter.unwrap(),
            moves: MoveSet::up_to(max_step),
            recenter: self.recenter.unwrap(),
        })
    }
}

fn parse_list(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--{flag}: `{p}` is not a number")))
        })
        .collect()
}

fn parse_range(flag: &str, s: &str) -> CliResult<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("--{flag}: expected `a:b`, got `{s}`")))?;
    let parse = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("--{flag}: `{p}` is not a number")))
    };
    Ok((parse(a)?, parse(b)?))
}

impl PatternArgs {
    fn sampler(&self, allow_random: bool) -> CliResult<PatternSampler> {
        let given = [
            self.u.is_some(),
            self.interval.is_some(),
            self.fragments.is_some(),
            self.sparse.is_some(),
            self.u_range.is_some(),
        ]
        .iter()
        .filter(|&&g| g)
        .count();
        if given != 1 {
            return Err(usage(
                "give exactly one of --u, --interval, --fragments, --sparse, --u-range",
            ));
        }
        if self.fragment_weights.is_some() && self.fragments.is_none() {
            return Err(usage("--fragment-weights needs --fragments"));
        }
        let pattern = if let Some(u) = self.u {
            ObservationPattern::truncated(u)?
        } else if let Some(s) = &self.interval {
            let (a, b) = parse_range("interval", s)?;
            ObservationPattern::interval(a, b)?
        } else if let Some(s) = &self.fragments {
            let intervals = s
                .split(',')
                .map(|p| parse_range("fragments", p))
                .collect::<CliResult<Vec<_>>>()?;
            let weights = self
                .fragment_weights
                .as_deref()
                .map(|w| parse_list("fragment-weights", w))
                .transpose()?;
            ObservationPattern::fragments(intervals, weights)?
        } else if let Some(s) = &self.sparse {
            ObservationPattern::sparse(parse_list("sparse", s)?)?
        } else {
            let s = self.u_range.as_deref().unwrap();
            if !allow_random {
                return Err(usage("--u-range is only available to evaluate"));
            }
            let (lo, hi) = parse_range("u-range", s)?;
            let sampler = PatternSampler::UniformTruncation { lo, hi };
            // surface a bad range as a usage error before any work starts
            sampler.sample(&mut ChaCha8Rng::seed_from_u64(0))?;
            return Ok(sampler);
        };
        Ok(PatternSampler::Fixed { pattern })
    }
}

/// Any pattern the sampler can produce, for choosing the metric.
fn representative(sampler: &PatternSampler) -> CliResult<ObservationPattern> {
    Ok(match sampler {
        PatternSampler::Fixed { pattern } => pattern.clone(),
        PatternSampler::UniformTruncation { hi, .. } => ObservationPattern::truncated(*hi)?,
    })
}

impl ConformalArgs {
    fn fill_defaults(&mut self, n_curves: usize) {
        let d = ConformalConfig::default();
        fill(&mut self.alpha, d.alpha);
        fill(&mut self.n_train, n_curves / 2);
        fill(&mut self.metric, MetricArg::L2);
        fill(&mut self.tune, TuneArg::Local);
        fill(&mut self.kernel, KernelArg::Gaussian);
        fill(&mut self.n_trial, d.trial.n_trial);
        fill(&mut self.expansion, d.trial.expansion);
        fill(&mut self.coarse_t, 5);
        self.karcher.fill_defaults();
    }

    fn procedure(&self) -> CliResult<Procedure> {
        Ok(
            match self.procedure.ok_or_else(|| usage("--proc is required"))? {
                ProcArg::Ffcp => Procedure::Ffcp,
                ProcArg::Sfcp => Procedure::Sfcp,
                ProcArg::Sfcpp => Procedure::Sfcpp {
                    coarse_len: self.coarse_t.unwrap(),
                },
            },
        )
    }

    fn config(&self, pattern: &ObservationPattern, seed: u64) -> CliResult<ConformalConfig> {
        let metric = match self.metric.unwrap() {
            MetricArg::L2 => Metric::L2,
            MetricArg::Fr => Metric::FisherRao,
            MetricArg::Amplitude => Metric::Amplitude,
            MetricArg::Euclid => Metric::Euclid,
            MetricArg::ProdL2 => Metric::Prod(BaseMetric::L2),
            MetricArg::ProdFr => Metric::Prod(BaseMetric::FisherRao),
            MetricArg::ProdAmplitude => Metric::Prod(BaseMetric::Amplitude),
        };
        let kind = match self.kernel.unwrap() {
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Triangular => KernelKind::Triangular,
        };
        let bandwidth = match self.bandwidth {
            Some(h) => BandwidthChoice::Fixed {
                kernel: KernelSpec::new(kind, h)?,
            },
            None => BandwidthChoice::Tuned {
                kind,
                betas: DEFAULT_BETAS.to_vec(),
                mode: match self.tune.unwrap() {
                    TuneArg::Local => TuneMode::Local,
                    TuneArg::Global => TuneMode::Global,
                },
            },
        };
        let config = ConformalConfig {
            alpha: self.alpha.unwrap(),
            n_train: self.n_train.unwrap(),
            metric: metric.adapted_to(pattern),
            bandwidth,
            trial: TrialGridSpec {
                n_trial: self.n_trial.unwrap(),
                expansion: self.expansion.unwrap(),
            },
            seed,
            karcher: self.karcher.options()?,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Merges the config file (if any) under the command-line flags.
fn resolve<T>(args: &T, config: Option<&Path>, command: &str) -> CliResult<T>
where
    T: Serialize + serde::de::DeserializeOwned + Clone,
{
    match config {
        Some(path) => crate::args::merge(args, crate::args::load_config(path, command)?),
        None => Ok(args.clone()),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut a = resolve(args, args.io.config.as_deref(), "simulate")?;
    a.generator.fill_defaults();
    let seed = *a.seed.get_or_insert(0);
    let dir = args.io.out_dir()?;
    let spec = a.generator.spec(seed)?;
    let mut manifest = ManifestBuilder::new("simulate", &a, seed)?;
    let curves = gen_curves(&spec)?;
    let width = spec.n.to_string().len();
    let ids: Vec<String> = (1..=spec.n).map(|i| format!("c{i:0width$}")).collect();
    out_dir(dir)?;
    write_curves(
        &dir.join("curves.csv"),
        &spec.grid()?.points(),
        &ids,
        &curves,
    )?;
    manifest.output("curves.csv");
    manifest.write(dir, "ok")
}

#[derive(Debug, Serialize)]
struct PredictSummary {
    procedure: &'static str,
    alpha: f64,
    metric: Metric,
    n_train: Option<usize>,
    n_calibration: usize,
    new_id: String,
    observed_points: Vec<usize>,
    mean_length: f64,
    bandwidths: Vec<f64>,
    empty_points: Vec<usize>,
    nonconvex_points: Vec<usize>,
    karcher_converged: Option<bool>,
    karcher_iterations: Option<usize>,
    warp_center: Option<Vec<f64>>,
    warp_radius: Option<f64>,
    accepted_warps: Option<usize>,
    /// Whether the held-out curve's coarse warp passes the conformal test.
    target_in_set: Option<bool>,
}

/// The held-out or supplied new curve.
struct NewCurve {
    id: String,
    partial: PartialCurve,
    complete: Option<Curve>,
}

fn new_curve(
    a: &PredictArgs,
    data: &mut Dataset,
    pattern: &ObservationPattern,
) -> CliResult<NewCurve> {
    match (&a.target, &a.new) {
        (Some(id), None) => {
            let idx = data
                .ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| CliError::Data(format!("no curve with id `{id}`")))?;
            let curve = data.curves.remove(idx);
            data.ids.remove(idx);
            Ok(NewCurve {
                id: id.clone(),
                partial: restrict(&curve, pattern)?,
                complete: Some(curve),
            })
        }
        (None, Some(path)) => {
            if a.normalize == Some(true) {
                return Err(usage(
                    "--normalize needs complete curves; use --target instead of --new",
                ));
            }
            let (id, values) = read_new_curve(path, data)?;
            let support = pattern.segments(data.grid)?;
            let mut observed = Vec::new();
            for k in support.into_iter().flatten() {
                let v = values[k];
                if !v.is_finite() {
                    return Err(CliError::Data(format!(
                        "{}: no value at observed time {}",
                        path.display(),
                        fmt_num(data.times[k])
                    )));
                }
                observed.push(v);
            }
            Ok(NewCurve {
                id,
                partial: PartialCurve::from_observed(data.grid, pattern.clone(), observed)?,
                complete: None,
            })
        }
        _ => Err(usage("give exactly one of --target and --new")),
    }
}

fn band_columns(band: &PredictionBand, times: Vec<f64>, observed: &[usize]) -> Vec<Vec<String>> {
    let mid = band.midpoints();
    let flags = (0..band.lower.len()).map(|k| {
        let mut f = Vec::new();
        if band.target != BandTarget::WarpEnvelope && observed.binary_search(&k).is_ok() {
            f.push("observed");
        }
        if band.is_empty_at(k) {
            f.push("empty");
        }
        if band.nonconvex_points.binary_search(&k).is_ok() {
            f.push("nonconvex");
        }
        f.join("|")
    });
    vec![
        times.into_iter().map(fmt_num).collect(),
        band.lower.iter().map(|&v| fmt_num(v)).collect(),
        band.upper.iter().map(|&v| fmt_num(v)).collect(),
        mid.into_iter().map(fmt_num).collect(),
        flags.collect(),
    ]
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let mut a = resolve(args, args.io.config.as_deref(), "predict")?;
    let dir = args.io.out_dir()?;
    let input = a
        .input
        .clone()
        .ok_or_else(|| usage("--input is required"))?;
    let normalize = *a.normalize.get_or_insert(false);
    let seed = *a.seed.get_or_insert(0);
    let pattern = match a.pattern.sampler(false)? {
        PatternSampler::Fixed { pattern } => pattern,
        PatternSampler::UniformTruncation { .. } => unreachable!("rejected above"),
    };
    let procedure = a
        .conformal
        .procedure
        .ok_or_else(|| usage("--proc is required"))?;

    let mut data = read_curves(&input, normalize)?;
    let new = new_curve(&a, &mut data, &pattern)?;
    a.conformal.fill_defaults(data.curves.len());
    let config = a.conformal.config(&pattern, seed)?;
    let mut manifest = ManifestBuilder::new("predict", &a, seed)?;
    manifest.input(&input)?;
    if let Some(path) = &a.new {
        manifest.input(path)?;
    }
    manifest.manifest.domain = Some(data.domain);

    // the split procedures use the first n_train curves for training
    let mut order: Vec<usize> = (0..data.curves.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let curves: Vec<Curve> = order.iter().map(|&i| data.curves[i].clone()).collect();

    out_dir(dir)?;
    let observed = new.partial.support();
    let mut summary = PredictSummary {
        procedure: a.conformal.procedure().map(|p| p.name())?,
        alpha: config.alpha,
        metric: config.metric,
        n_train: None,
        n_calibration: curves.len(),
        new_id: new.id.clone(),
        observed_points: observed.clone(),
        mean_length: 0.0,
        bandwidths: Vec::new(),
        empty_points: Vec::new(),
        nonconvex_points: Vec::new(),
        karcher_converged: None,
        karcher_iterations: None,
        warp_center: None,
        warp_radius: None,
        accepted_warps: None,
        target_in_set: None,
    };
    let fine_times = data.times.clone();
    let (band, truth, times) = match procedure {
        ProcArg::Ffcp => {
            let band = ffcp(&curves, &new.partial, &config)?;
            let truth = new.complete.as_ref().map(|c| c.values().to_vec());
            (band, truth, fine_times)
        }
        ProcArg::Sfcp | ProcArg::Sfcpp => {
            let fit = fit_split(&curves, &config)?;
            summary.n_train = Some(config.n_train);
            summary.n_calibration = fit.calibration.len();
            summary.karcher_converged = Some(fit.training.converged);
            summary.karcher_iterations = Some(fit.training.objective_trace.len() - 1);
            write_columns(
                &dir.join("template.csv"),
                &["t", "value"],
                &[
                    data.times.iter().map(|&t| fmt_num(t)).collect(),
                    fit.training
                        .template
                        .values()
                        .iter()
                        .map(|&v| fmt_num(v))
                        .collect(),
                ],
            )?;
            manifest.output("template.csv");
            if procedure == ProcArg::Sfcp {
                let band = sfcp_with_fit(&fit, &new.partial, &config)?;
                let truth = match &new.complete {
                    Some(c) => Some(fit.register(c)?.1.values().to_vec()),
                    None => None,
                };
                (band, truth, fine_times)
            } else {
                let coarse = TimeGrid::new(a.conformal.coarse_t.unwrap())?;
                let set = sfcpp_with_fit(&fit, &new.partial, coarse, &config)?;
                summary.warp_center = Some(set.center.values().to_vec());
                summary.warp_radius = Some(set.radius);
                summary.accepted_warps = Some(set.accepted.len());
                let truth = match &new.complete {
                    Some(c) => Some(coarsen_warp(&fit.register(c)?.0, coarse)?),
                    None => None,
                };
                if let Some(t) = &truth {
                    summary.target_in_set =
                        Some(warp_set_contains(&fit, &new.partial, &set, &config, t)?);
                }
                let times = coarse
                    .points()
                    .iter()
                    .map(|&s| data.domain.to_original(s))
                    .collect();
                (set.envelope, truth, times)
            }
        }
    };
    summary.mean_length = band.mean_length();
    summary.bandwidths = band.bandwidths.clone();
    summary.empty_points = band.empty_points.clone();
    summary.nonconvex_points = band.nonconvex_points.clone();

    write_columns(
        &dir.join("band.csv"),
        &["t", "lower", "upper", "point", "flags"],
        &band_columns(&band, times.clone(), &observed),
    )?;
    manifest.output("band.csv");
    if let Some(truth) = truth {
        let covered = truth
            .iter()
            .enumerate()
            .map(|(k, &v)| band.contains(k, v).to_string())
            .collect();
        write_columns(
            &dir.join("truth.csv"),
            &["t", "truth", "covered"],
            &[
                times.iter().map(|&t| fmt_num(t)).collect(),
                truth.iter().map(|&v| fmt_num(v)).collect(),
                covered,
            ],
        )?;
        manifest.output("truth.csv");
    }
    write_json(&dir.join("summary.json"), &summary)?;
    manifest.output("summary.json");
    if summary.karcher_converged == Some(false) {
        manifest.write(dir, "nonconverged")?;
        return Err(CliError::NonConvergence(
            "Karcher iteration on the training split did not converge; outputs were written".into(),
        ));
    }
    manifest.write(dir, "ok")
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let mut a = resolve(args, args.io.config.as_deref(), "evaluate")?;
    let dir = args.io.out_dir()?;
    a.generator.fill_defaults();
    let seed = *a.seed.get_or_insert(0);
    let b = *a.b.get_or_insert(200);
    let spec = a.generator.spec(seed)?;
    let sampler = a.pattern.sampler(true)?;
    a.conformal.fill_defaults(spec.n);
    let procedure = a.conformal.procedure()?;
    let config = a.conformal.config(&representative(&sampler)?, seed)?;
    let manifest = ManifestBuilder::new("evaluate", &a, seed)?;
    let report = monte_carlo(procedure, &spec, &sampler, &config, b)?;
    out_dir(dir)?;
    write_json(&dir.join("report.json"), &report)?;
    let mut manifest = manifest;
    manifest.output("report.json");
    manifest.write(dir, "ok")
}

#[derive(Debug, Serialize)]
struct RegisterSummary {
    converged: bool,
    iterations: usize,
    initial_id: String,
    final_objective: f64,
}

pub fn register(args: &RegisterArgs) -> CliResult<()> {
    let mut a = resolve(args, args.io.config.as_deref(), "register")?;
    let dir = args.io.out_dir()?;
    let input = a
        .input
        .clone()
        .ok_or_else(|| usage("--input is required"))?;
    let normalize = *a.normalize.get_or_insert(false);
    a.karcher.fill_defaults();
    let opts = a.karcher.options()?;
    let data = read_curves(&input, normalize)?;
    let mut manifest = ManifestBuilder::new("register", &a, 0)?;
    manifest.input(&input)?;
    manifest.manifest.domain = Some(data.domain);
    let res = karcher_mean(&data.curves, &opts)?;

    out_dir(dir)?;
    let t: Vec<String> = data.times.iter().map(|&t| fmt_num(t)).collect();
    write_columns(
        &dir.join("template.csv"),
        &["t", "value"],
        &[
            t.clone(),
            res.template.values().iter().map(|&v| fmt_num(v)).collect(),
        ],
    )?;
    let mut header = vec!["t"];
    header.extend(data.ids.iter().map(String::as_str));
    let mut columns = vec![t];
    columns.extend(
        res.warps
            .iter()
            .map(|w| w.values().iter().map(|&v| fmt_num(v)).collect()),
    );
    write_columns(&dir.join("warps.csv"), &header, &columns)?;
    write_curves(
        &dir.join("aligned.csv"),
        &data.times,
        &data.ids,
        &res.aligned,
    )?;
    write_columns(
        &dir.join("objective.csv"),
        &["iteration", "objective"],
        &[
            (0..res.objective_trace.len())
                .map(|i| i.to_string())
                .collect(),
            res.objective_trace.iter().map(|&v| fmt_num(v)).collect(),
        ],
    )?;
    write_json(
        &dir.join("summary.json"),
        &RegisterSummary {
            converged: res.converged,
            iterations: res.objective_trace.len() - 1,
            initial_id: data.ids[res.initial_index].clone(),
            final_objective: *res.objective_trace.last().unwrap(),
        },
    )?;
    for name in [
        "template.csv",
        "warps.csv",
        "aligned.csv",
        "objective.csv",
        "summary.json",
    ] {
        manifest.output(name);
    }
    if !res.converged {
        manifest.write(dir, "nonconverged")?;
        return Err(CliError::NonConvergence(
            "Karcher iteration did not converge; outputs were written".into(),
        ));
    }
    manifest.write(dir, "ok")
}
