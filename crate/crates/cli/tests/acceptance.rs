//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Failing criteria do not fail `cargo test` unless `EFCP_ACCEPTANCE_STRICT=1`
//! is set; the printed lines and diagnostics are the record. Set
//! `EFCP_ACCEPTANCE_QUICK=1` to skip the Monte Carlo criteria 5-8.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use efcp_core::conformal::{ffcp, sfcp, BandwidthChoice, ConformalConfig, PredictionBand};
use efcp_core::funcore::restrict;
use efcp_core::registration::{lattice_edge_cost, pairwise_register_with, MoveSet};
use efcp_core::simeval::{
    gen_curves, gen_warp, monte_carlo_arms, Arm, EvalReport, GeneratorSpec, PatternSampler,
    Procedure,
};
use efcp_core::smoothing::{ns_predict, KernelKind, KernelSpec, TuneMode, DEFAULT_BETAS};
use efcp_core::srsf::{srsf_distance, srsf_inverse, srsf_transform, warp_curve, warp_srsf};
use efcp_core::{Curve, ObservationPattern, TimeGrid, Warp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const B: usize = 200;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            notes: Vec::new(),
        }
    }

    fn note(mut self, line: String) -> Self {
        self.notes.push(line);
        self
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn band_limited(grid: TimeGrid, rng: &mut ChaCha8Rng, terms: usize) -> Curve {
    let coef: Vec<(f64, f64)> = (1..=terms)
        .map(|j| {
            let s = 1.0 / j as f64;
            (rng.random_range(-s..s), rng.random_range(-s..s))
        })
        .collect();
    let offset = rng.random_range(-1.0..1.0);
    Curve::from_fn(grid, |t| {
        offset
            + coef
                .iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let w = 2.0 * PI * (j + 1) as f64 * t;
                    a * w.sin() + b * w.cos()
                })
                .sum::<f64>()
    })
    .unwrap()
}

fn round_trip_error(terms: usize) -> f64 {
    let grid = TimeGrid::new(100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = band_limited(grid, &mut rng, terms);
        let back = srsf_inverse(&srsf_transform(&f), f.values()[0]);
        worst = worst.max(linf(f.values(), back.values()));
    }
    worst
}

// Up to 3 cycles on [0, 1]: the simulated bumps have spectral sd ~0.84
// cycles, so this family covers the curves the procedures actually see.
fn c1_round_trip() -> Outcome {
    let start = Instant::now();
    let worst = round_trip_error(3);
    let took = start.elapsed();
    Outcome::new(
        worst < 1e-2 && took < Duration::from_secs(1),
        format!("SRSF round trip, 50 curves with up to 3 cycles at T=100: max L-inf {worst:.2e} (< 1e-2) in {took:.2?}"),
    )
    .note(format!(
        "central differences plus trapezoid integration damp a harmonic by cos^2(w h / 2); with up to 4 cycles the max error is {:.2e}, with up to 5 cycles {:.2e}",
        round_trip_error(4),
        round_trip_error(5)
    ))
}

/// Warp with slope `1 + a cos(2 pi k t)`, so slopes lie in `[1 - |a|, 1 + |a|]`.
fn cosine_warp(grid: TimeGrid, a: f64, k: usize) -> Warp {
    let w = 2.0 * PI * k as f64;
    let values = grid
        .points()
        .iter()
        .map(|&t| t + a * (w * t).sin() / w)
        .collect();
    Warp::from_values_guarded(grid, values).unwrap()
}

/// Warp `(e^{ct} - 1) / (e^c - 1)`; for `|c| <= 1.9` slopes lie in `[0.33, 2.3]`.
fn exp_warp(grid: TimeGrid, c: f64) -> Warp {
    let values = grid
        .points()
        .iter()
        .map(|&t| ((c * t).exp() - 1.0) / (c.exp() - 1.0))
        .collect();
    Warp::from_values_guarded(grid, values).unwrap()
}

fn c2_isometry() -> Outcome {
    let start = Instant::now();
    let grid = TimeGrid::new(500).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let q1 = srsf_transform(&band_limited(grid, &mut rng, 4));
        let q2 = srsf_transform(&band_limited(grid, &mut rng, 4));
        let gamma = if case % 2 == 0 {
            cosine_warp(grid, rng.random_range(-0.65..0.65), rng.random_range(1..=3))
        } else {
            let c: f64 = rng.random_range(0.2..1.9);
            exp_warp(grid, if rng.random_bool(0.5) { c } else { -c })
        };
        let before = srsf_distance(&q1, &q2).unwrap();
        let after = srsf_distance(
            &warp_srsf(&q1, &gamma).unwrap(),
            &warp_srsf(&q2, &gamma).unwrap(),
        )
        .unwrap();
        worst = worst.max((before - after).abs());
    }
    let took = start.elapsed();
    Outcome::new(
        worst < 5e-3 && took < Duration::from_secs(2),
        format!("warping isometry, 50 triples at T=500, slopes in [0.33, 2.3]: max gap {worst:.2e} (< 5e-3) in {took:.2?}"),
    )
}

/// Minimum path cost over every admissible lattice path, by depth-first
/// enumeration. Costs accumulate from the origin along the path.
fn enumerate_paths(q1: &[f64], q2: &[f64], moves: &[(usize, usize)]) -> (f64, usize) {
    fn walk(
        q1: &[f64],
        q2: &[f64],
        moves: &[(usize, usize)],
        node: (usize, usize),
        acc: f64,
        best: &mut f64,
        count: &mut usize,
    ) {
        let last = q1.len() - 1;
        if node == (last, last) {
            *count += 1;
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for &(a, b) in moves {
            let next = (node.0 + a, node.1 + b);
            if next.0 <= last && next.1 <= last {
                let c = acc + lattice_edge_cost(q1, q2, node, (a, b));
                walk(q1, q2, moves, next, c, best, count);
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut count = 0;
    walk(q1, q2, moves, (0, 0), 0.0, &mut best, &mut count);
    (best, count)
}

fn c3_dp_exact() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let moves = MoveSet::default();
    let mut mismatches = 0;
    let mut paths = 0;
    for case in 0..20 {
        let t_len = if case < 4 {
            15
        } else {
            rng.random_range(5..=15)
        };
        let grid = TimeGrid::new(t_len).unwrap();
        let q1 = srsf_transform(&band_limited(grid, &mut rng, 3));
        let q2 = srsf_transform(&band_limited(grid, &mut rng, 3));
        let reg = pairwise_register_with(&q1, &q2, &moves).unwrap();
        let (best, count) = enumerate_paths(q1.values(), q2.values(), moves.moves());
        paths += count;
        if reg.distance != best.sqrt() {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    Outcome::new(
        mismatches == 0 && took < Duration::from_secs(30),
        format!("DP vs exhaustive enumeration, 20 cases with T <= 15 ({paths} paths): {mismatches} mismatches in {took:.2?}"),
    )
}

fn warp_recovery_error(moves: &MoveSet, pairs: &[(f64, f64)]) -> (f64, (f64, f64)) {
    let grid = TimeGrid::new(100).unwrap();
    let f = Curve::from_fn(grid, |t| (4.0 * PI * t).sin() + 2.0 * t).unwrap();
    let mut worst = (0.0, (1.0, 1.0));
    for &(a, b) in pairs {
        let gamma = gen_warp(a, b, grid).unwrap();
        let warped = warp_curve(&f, &gamma).unwrap();
        // aligning f onto f o gamma: the optimal warp is gamma itself
        let reg =
            pairwise_register_with(&srsf_transform(&warped), &srsf_transform(&f), moves).unwrap();
        let err = linf(reg.warp.values(), gamma.values());
        if err > worst.0 {
            worst = (err, (a, b));
        }
    }
    worst
}

fn c4_warp_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut pairs: Vec<(f64, f64)> = (0..16)
        .map(|_| (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0)))
        .collect();
    pairs.extend([(1.0, 3.0), (3.0, 1.0), (3.0, 3.0), (1.0, 1.0)]);
    let (err, (a, b)) = warp_recovery_error(&MoveSet::default(), &pairs);
    let took = start.elapsed();
    let wide = Instant::now();
    let (err6, _) = warp_recovery_error(&MoveSet::up_to(6), &pairs);
    let wide = wide.elapsed();
    Outcome::new(
        err < 0.03 && took < Duration::from_secs(10),
        format!("Beta-CDF warp recovery, 20 warps at T=100, default 3x3 moves: max L-inf {err:.4} (< 0.03) at (a, b) = ({a:.2}, {b:.2}) in {took:.2?}"),
    )
    .note(format!(
        "slopes of 3x3 lattice paths lie in [1/3, 3]; Beta(a, b) CDFs with a or b near 3 need slopes near 0 and above 3 at the ends. With moves up to 6x6 the max error is {err6:.4} ({wide:.2?})"
    ))
}

fn brute_force_smoother(d: &[f64], y: &[f64], i: usize, kind: KernelKind, h: f64) -> f64 {
    let weight = |dist: f64| match kind {
        KernelKind::Gaussian => (-(dist * dist) / (2.0 * h * h)).exp(),
        KernelKind::Triangular => {
            if dist < h {
                1.0 - dist / h
            } else {
                0.0
            }
        }
    };
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..d.len() {
        if j != i {
            num += weight(d[j]) * y[j];
            den += weight(d[j]);
        }
    }
    if den == 0.0 {
        let others: Vec<f64> = (0..y.len()).filter(|&j| j != i).map(|j| y[j]).collect();
        return others.iter().sum::<f64>() / others.len() as f64;
    }
    num / den
}

fn c9_smoother_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(3..40);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let i = rng.random_range(0..n);
        let h = rng.random_range(0.3..2.0);
        let kind = if case % 2 == 0 {
            KernelKind::Gaussian
        } else {
            KernelKind::Triangular
        };
        let fast = ns_predict(&d, &y, i, KernelSpec::new(kind, h).unwrap())
            .unwrap()
            .value;
        worst = worst.max((fast - brute_force_smoother(&d, &y, i, kind, h)).abs());
    }
    Outcome::new(
        worst < 1e-12,
        format!(
            "smoother vs brute-force weighted sum, 100 instances: max gap {worst:.2e} (< 1e-12)"
        ),
    )
}

fn same_band(a: &PredictionBand, b: &PredictionBand) -> bool {
    a.lower == b.lower && a.upper == b.upper && a.empty_points == b.empty_points
}

fn c10_permutation() -> Outcome {
    let spec = GeneratorSpec {
        phase_variation: true,
        n: 41,
        t_len: 40,
        seed: SEED + 10,
        ..Default::default()
    };
    let mut curves = gen_curves(&spec).unwrap();
    let target = curves.pop().unwrap();
    let partial = restrict(&target, &ObservationPattern::truncated(0.5).unwrap()).unwrap();
    let config = ConformalConfig {
        n_train: 20,
        ..Default::default()
    };
    let (base_split, _) = sfcp(&curves, &partial, &config).unwrap();
    let base_full = ffcp(&curves, &partial, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let (mut split_diff, mut full_diff) = (0, 0);
    for _ in 0..20 {
        let mut shuffled = curves.clone();
        shuffled[config.n_train..].shuffle(&mut rng);
        if !same_band(&sfcp(&shuffled, &partial, &config).unwrap().0, &base_split) {
            split_diff += 1;
        }
        shuffled.shuffle(&mut rng);
        if !same_band(&ffcp(&shuffled, &partial, &config).unwrap(), &base_full) {
            full_diff += 1;
        }
    }
    Outcome::new(
        split_diff == 0 && full_diff == 0,
        format!(
            "calibration order, 20 shuffles: {split_diff} SFCP and {full_diff} FFCP bands differ"
        ),
    )
}

fn efcp(threads: usize, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_efcp"))
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .env_remove("EFCP_THREADS")
        .status()
        .map(|s| s.code() == Some(0))
        .unwrap_or(false)
}

fn run_cli_suite(root: &Path, threads: usize) -> bool {
    let dir = |name: &str| root.join(name).display().to_string();
    let curves = root.join("sim").join("curves.csv").display().to_string();
    efcp(
        threads,
        &[
            "simulate",
            "--n",
            "41",
            "--T",
            "40",
            "--phase",
            "--seed",
            "5",
            "--out",
            &dir("sim"),
        ],
    ) && efcp(
        threads,
        &[
            "predict",
            "--input",
            &curves,
            "--target",
            "c40",
            "--u",
            "0.5",
            "--proc",
            "sfcp",
            "--seed",
            "3",
            "--out",
            &dir("sfcp"),
        ],
    ) && efcp(
        threads,
        &[
            "predict",
            "--input",
            &curves,
            "--target",
            "c40",
            "--u",
            "0.5",
            "--proc",
            "ffcp",
            "--seed",
            "3",
            "--out",
            &dir("ffcp"),
        ],
    ) && efcp(
        threads,
        &[
            "predict",
            "--input",
            &curves,
            "--target",
            "c40",
            "--u",
            "0.5",
            "--proc",
            "sfcpp",
            "--seed",
            "3",
            "--out",
            &dir("sfcpp"),
        ],
    ) && efcp(
        threads,
        &["register", "--input", &curves, "--out", &dir("register")],
    ) && efcp(
        threads,
        &[
            "evaluate",
            "--B",
            "6",
            "--n",
            "30",
            "--T",
            "30",
            "--phase",
            "--u",
            "0.5",
            "--proc",
            "sfcp",
            "--seed",
            "9",
            "--out",
            &dir("evaluate"),
        ],
    )
}

/// Relative paths of every file below `root` except run manifests.
fn output_files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                out.push(p.strip_prefix(root).unwrap().display().to_string());
            }
        }
    }
    out.sort();
    out
}

fn c11_determinism() -> Outcome {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    if !run_cli_suite(one.path(), 1) || !run_cli_suite(many.path(), 4) {
        return Outcome::new(false, "CLI determinism: a command failed".into());
    }
    let files = output_files(one.path());
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| {
            std::fs::read(one.path().join(f)).ok() != std::fs::read(many.path().join(f)).ok()
        })
        .collect();
    let pass = differing.is_empty() && files == output_files(many.path());
    Outcome::new(
        pass,
        format!(
            "CLI outputs with 1 vs 4 threads: {} files compared, {} differ {:?}",
            files.len(),
            differing.len(),
            differing
        ),
    )
}

fn arm(name: &str, procedure: Procedure, u: f64, config: &ConformalConfig) -> Arm {
    Arm {
        name: name.into(),
        procedure,
        pattern: PatternSampler::truncated(u).unwrap(),
        config: config.clone(),
    }
}

fn spec(phase: bool) -> GeneratorSpec {
    GeneratorSpec {
        phase_variation: phase,
        n: 100,
        t_len: 100,
        seed: SEED,
        ..Default::default()
    }
}

fn c5_sandwich(sfcp: &EvalReport) -> Outcome {
    let b = sfcp.b_used as f64;
    let delta = 1.96 * (0.9 * 0.1 / b).sqrt();
    let (lo, hi) = (0.9 - delta, 0.9 + 1.0 / 50.0 + delta);
    let outside = sfcp.p_k.iter().filter(|&&p| p < lo || p > hi).count();
    let min = sfcp.p_k.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sfcp.p_k.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        outside == 0 && sfcp.errors == 0,
        format!(
            "SFCP pointwise coverage, B={}, n=100, n1=50: p_k in [{min:.3}, {max:.3}], mean {:.3}; {outside} of {} points outside [{lo:.3}, {hi:.3}]",
            sfcp.b_used,
            sfcp.p_bar,
            sfcp.p_k.len()
        ),
    )
}

fn c6_overall(phase: (&EvalReport, &EvalReport), flat: (&EvalReport, &EvalReport)) -> Outcome {
    let tol = 0.08;
    let (f, s) = (phase.0.p_overall, phase.1.p_overall);
    let (f0, s0) = (flat.0.p_overall, flat.1.p_overall);
    let near = |p: f64, lo: f64, hi: f64| p >= lo - tol && p <= hi + tol;
    let pass = near(f, 0.362, 0.362)
        && near(s, 0.674, 0.674)
        && f < s
        && near(f0, 0.68, 0.69)
        && near(s0, 0.68, 0.69);
    Outcome::new(
        pass,
        format!(
            "overall coverage, B={B}: with phase FFCP {f:.3} (0.362 +- {tol}) < SFCP {s:.3} (0.674 +- {tol}); without phase FFCP {f0:.3}, SFCP {s0:.3} (0.68-0.69 +- {tol})"
        ),
    )
}

fn c7_length_bootstrap(ffcp: &EvalReport, sfcp: &EvalReport) -> Outcome {
    let m = 100
        .min(ffcp.replicate_ell_bar.len())
        .min(sfcp.replicate_ell_bar.len());
    let aligned = ffcp.errors == 0 && sfcp.errors == 0;
    let diffs: Vec<f64> = (0..m)
        .map(|r| sfcp.replicate_ell_bar[r] - ffcp.replicate_ell_bar[r])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let resamples = 10_000;
    let wins = (0..resamples)
        .filter(|_| (0..m).map(|_| diffs[rng.random_range(0..m)]).sum::<f64>() < 0.0)
        .count();
    let share = wins as f64 / resamples as f64;
    let mean = |v: &[f64]| v[..m].iter().sum::<f64>() / m as f64;
    Outcome::new(
        aligned && share >= 0.95,
        format!(
            "mean band length with phase, first {m} replicates: SFCP {:.3} vs FFCP {:.3}; bootstrap share SFCP < FFCP {share:.4} (>= 0.95)",
            mean(&sfcp.replicate_ell_bar),
            mean(&ffcp.replicate_ell_bar)
        ),
    )
}

fn c8_phase_sets(reports: &[&EvalReport]) -> Outcome {
    let cover = [0.976, 0.980, 0.978];
    let length = [0.297, 0.270, 0.258];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        // coverage of the true warp: membership in the conformal set
        let set_cov = r.set_coverage.unwrap_or(f64::NAN);
        let ok_cov = (set_cov - cover[k]).abs() <= 0.03;
        let ok_len = (r.ell_bar - length[k]).abs() <= 0.05;
        pass &= ok_cov && ok_len && r.errors == 0;
        parts.push(format!(
            "U={}: coverage {:.3} vs {} {}, length {:.3} vs {} {}",
            [0.25, 0.5, 0.75][k],
            set_cov,
            cover[k],
            if ok_cov { "ok" } else { "off" },
            r.ell_bar,
            length[k],
            if ok_len { "ok" } else { "off" }
        ));
    }
    let decreasing = reports.windows(2).all(|w| w[1].ell_bar < w[0].ell_bar);
    pass &= decreasing;
    Outcome::new(
        pass,
        format!(
            "SFCPP on 5 coarse points, B={B}: {}; lengths strictly decreasing in U: {decreasing}",
            parts.join("; ")
        ),
    )
    .note(format!(
        "lattice envelope containment at all 5 points {:.3} / {:.3} / {:.3}, pointwise {:.3} / {:.3} / {:.3}",
        reports[0].p_overall,
        reports[1].p_overall,
        reports[2].p_overall,
        reports[0].p_bar,
        reports[1].p_bar,
        reports[2].p_bar
    ))
    .note(format!(
        "lengths average the envelope over all 5 coarse points, pinned endpoints included; Karcher non-convergence in {} of {} replicates",
        reports[0].nonconverged, reports[0].b_used
    ))
}

fn report(n: usize, o: &Outcome) {
    println!(
        "criterion {n:>2}: {}  {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    for note in &o.notes {
        println!("              note: {note}");
    }
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |n: usize, o: Outcome| {
        report(n, &o);
        results.push((n, o));
    };

    record(1, c1_round_trip());
    record(2, c2_isometry());
    record(3, c3_dp_exact());
    record(4, c4_warp_recovery());
    record(9, c9_smoother_oracle());
    record(10, c10_permutation());
    record(11, c11_determinism());

    if std::env::var("EFCP_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1") {
        println!("acceptance: Monte Carlo criteria 5-8 skipped (EFCP_ACCEPTANCE_QUICK=1)");
        return;
    }

    let local = ConformalConfig::default();
    let global = ConformalConfig {
        bandwidth: BandwidthChoice::Tuned {
            kind: KernelKind::Gaussian,
            betas: DEFAULT_BETAS.to_vec(),
            mode: TuneMode::Global,
        },
        ..Default::default()
    };
    let sfcpp = Procedure::Sfcpp { coarse_len: 5 };
    let with_phase = monte_carlo_arms(
        &spec(true),
        &[
            arm("ffcp", Procedure::Ffcp, 0.5, &local),
            arm("sfcp", Procedure::Sfcp, 0.5, &local),
            arm("sfcpp-0.25", sfcpp, 0.25, &global),
            arm("sfcpp-0.5", sfcpp, 0.5, &global),
            arm("sfcpp-0.75", sfcpp, 0.75, &global),
        ],
        B,
    )
    .expect("Monte Carlo run with phase variation");
    let without_phase = monte_carlo_arms(
        &spec(false),
        &[
            arm("ffcp", Procedure::Ffcp, 0.5, &local),
            arm("sfcp", Procedure::Sfcp, 0.5, &local),
        ],
        B,
    )
    .expect("Monte Carlo run without phase variation");

    record(5, c5_sandwich(&with_phase[1]));
    record(
        6,
        c6_overall(
            (&with_phase[0], &with_phase[1]),
            (&without_phase[0], &without_phase[1]),
        ),
    );
    record(7, c7_length_bootstrap(&with_phase[0], &with_phase[1]));
    record(
        8,
        c8_phase_sets(&[&with_phase[2], &with_phase[3], &with_phase[4]]),
    );

    results.sort_by_key(|(n, _)| *n);
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {} of {} criteria pass, failing {:?} ({:.0?})",
        results.len() - failed.len(),
        results.len(),
        failed,
        start.elapsed()
    );
    let strict = std::env::var("EFCP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
