//! End-to-end checks through the public API.

use efcp_core::conformal::{
    ffcp, fit_split, sfcp_with_fit, sfcpp_with_fit, BandwidthChoice, ConformalConfig, TrialGridSpec,
};
use efcp_core::funcore::restrict;
use efcp_core::registration::{karcher_mean, warp_distance, KarcherOptions};
use efcp_core::simeval::{gen_curves, gen_warp, GeneratorSpec};
use efcp_core::smoothing::{KernelSpec, Metric};
use efcp_core::srsf::{srsf_distance, srsf_transform, warp_srsf};
use efcp_core::{Curve, ObservationPattern, TimeGrid, Warp};
use proptest::prelude::*;

fn sample(n: usize, t_len: usize, phase: bool, seed: u64) -> Vec<Curve> {
    gen_curves(&GeneratorSpec {
        phase_variation: phase,
        n,
        t_len,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn quick_config(alpha: f64) -> ConformalConfig {
    ConformalConfig {
        alpha,
        n_train: 10,
        trial: TrialGridSpec {
            n_trial: 60,
            expansion: 0.25,
        },
        karcher: KarcherOptions {
            max_iter: 4,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn fixed_bandwidth_ffcp_covers_held_out_curves_at_the_nominal_rate() {
    let curves = sample(40, 30, false, 8);
    let pattern = ObservationPattern::truncated(0.5).unwrap();
    let config = ConformalConfig {
        bandwidth: BandwidthChoice::Fixed {
            kernel: KernelSpec::gaussian(0.3).unwrap(),
        },
        ..ConformalConfig::default()
    };
    let mut covered = 0;
    for i in 0..curves.len() {
        let mut rest = curves.clone();
        let target = rest.remove(i);
        let partial = restrict(&target, &pattern).unwrap();
        let band = ffcp(&rest, &partial, &config).unwrap();
        assert!(band.empty_points.is_empty());
        assert!(band.lower.iter().chain(&band.upper).all(|v| v.is_finite()));
        covered += (0..30)
            .filter(|&k| band.contains(k, target.values()[k]))
            .count();
    }
    let rate = covered as f64 / 1200.0;
    assert!(rate > 0.85, "{rate}");
}

#[test]
fn smaller_alpha_gives_wider_split_bands() {
    let mut curves = sample(31, 25, true, 2);
    let target = curves.pop().unwrap();
    let partial = restrict(&target, &ObservationPattern::truncated(0.5).unwrap()).unwrap();
    let fixed = |alpha| ConformalConfig {
        bandwidth: BandwidthChoice::Fixed {
            kernel: KernelSpec::gaussian(0.3).unwrap(),
        },
        ..quick_config(alpha)
    };
    let fit = fit_split(&curves, &fixed(0.1)).unwrap();
    let wide = sfcp_with_fit(&fit, &partial, &fixed(0.05)).unwrap();
    let narrow = sfcp_with_fit(&fit, &partial, &fixed(0.3)).unwrap();
    for k in 0..25 {
        assert!(wide.lower[k] <= narrow.lower[k] && narrow.upper[k] <= wide.upper[k]);
    }
}

#[test]
fn warp_set_envelope_brackets_its_center() {
    let mut curves = sample(31, 40, true, 5);
    let target = curves.pop().unwrap();
    let partial = restrict(&target, &ObservationPattern::truncated(0.75).unwrap()).unwrap();
    let config = quick_config(0.1);
    let fit = fit_split(&curves, &config).unwrap();
    let coarse = TimeGrid::new(5).unwrap();
    let set = sfcpp_with_fit(&fit, &partial, coarse, &config).unwrap();
    assert!(!set.accepted.is_empty());
    for w in &set.accepted {
        assert!(warp_distance(w, &set.center).unwrap() <= set.radius + 1e-12);
    }
    let env = &set.envelope;
    for k in 0..5 {
        assert!(env.lower[k] <= env.upper[k]);
    }
    assert_eq!((env.lower[0], env.upper[4]), (0.0, 1.0));
}

#[test]
fn karcher_template_of_identical_warped_copies_is_close_to_the_shape() {
    let g = TimeGrid::new(60).unwrap();
    let base = sample(2, 60, false, 3).remove(0);
    let curves: Vec<Curve> = [(1.0, 1.0), (1.5, 1.2), (1.2, 1.5), (2.0, 2.0)]
        .iter()
        .map(|&(a, b)| efcp_core::srsf::warp_curve(&base, &gen_warp(a, b, g).unwrap()).unwrap())
        .collect();
    let res = karcher_mean(&curves, &KarcherOptions::default()).unwrap();
    let before: f64 = curves
        .iter()
        .map(|c| {
            srsf_distance(&srsf_transform(c), &res.template_srsf)
                .unwrap()
                .powi(2)
        })
        .sum();
    // every curve registers to the template far better than it matches it raw
    assert!(*res.objective_trace.last().unwrap() < 0.2 * before);
    assert!(res.objective_trace.windows(2).all(|w| w[1] <= w[0]));
}

fn smooth_warp(grid: TimeGrid, c: f64) -> Warp {
    if c.abs() < 1e-9 {
        return Warp::identity(grid);
    }
    let values = grid
        .points()
        .iter()
        .map(|t| ((c * t).exp() - 1.0) / (c.exp() - 1.0))
        .collect();
    Warp::from_values_guarded(grid, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simultaneous_warping_preserves_srsf_distance(
        a in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 4),
        c in -1.0f64..1.0,
    ) {
        let g = TimeGrid::new(400).unwrap();
        let make = |coef: &[f64]| {
            Curve::from_fn(g, |t| {
                coef.iter()
                    .enumerate()
                    .map(|(j, w)| w * ((j + 1) as f64 * std::f64::consts::PI * t).sin())
                    .sum()
            })
            .unwrap()
        };
        let (q1, q2) = (srsf_transform(&make(&a)), srsf_transform(&make(&b)));
        let gamma = smooth_warp(g, c);
        let before = srsf_distance(&q1, &q2).unwrap();
        let after = srsf_distance(&warp_srsf(&q1, &gamma).unwrap(), &warp_srsf(&q2, &gamma).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 2e-2 * (1.0 + before), "{} vs {}", before, after);
    }

    #[test]
    fn metric_adaptation_matches_pattern_kind(u in 0.2f64..1.0) {
        let interval = ObservationPattern::truncated(u).unwrap();
        let sparse = ObservationPattern::sparse(vec![0.1, u * 0.9]).unwrap();
        prop_assert_eq!(Metric::FisherRao.adapted_to(&interval), Metric::FisherRao);
        prop_assert_eq!(Metric::FisherRao.adapted_to(&sparse), Metric::Euclid);
    }
}
