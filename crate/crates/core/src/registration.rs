//! Elastic registration: dynamic-programming pairwise alignment of SRSFs,
//! Karcher-mean templates, multiple registration and the warp distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcore::{sq_l2_samples, Curve, TimeGrid};
use crate::srsf::{
    srsf_inverse, srsf_samples, srsf_transform, warp_curve, warp_srsf_samples, Srsf, Warp,
};

/// Allowed DP steps `(a, b)`: `a` grid cells along the template axis, `b`
/// along the warped axis, so local slopes lie in `[1/max, max]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveSet {
    moves: Vec<(usize, usize)>,
}

impl MoveSet {
    pub fn new(moves: Vec<(usize, usize)>) -> Result<Self> {
        if moves.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::InvalidConfig("DP moves must be positive".into()));
        }
        if !moves.contains(&(1, 1)) {
            return Err(Error::InvalidConfig("DP moves must include (1, 1)".into()));
        }
        Ok(Self { moves })
    }

    /// Every `(a, b)` with `1 <= a, b <= max`.
    pub fn up_to(max: usize) -> Self {
        let mut moves = Vec::new();
        for a in 1..=max.max(1) {
            for b in 1..=max.max(1) {
                moves.push((a, b));
            }
        }
        Self { moves }
    }

    pub fn moves(&self) -> &[(usize, usize)] {
        &self.moves
    }

    fn max_step(&self) -> usize {
        self.moves.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(1)
    }
}

impl Default for MoveSet {
    fn default() -> Self {
        Self::up_to(3)
    }
}

#[inline]
fn sample_at(values: &[f64], pos: f64) -> f64 {
    let i = pos as usize;
    let frac = pos - i as f64;
    if frac == 0.0 || i + 1 >= values.len() {
        values[i.min(values.len() - 1)]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}

/// Cost of the lattice edge from node `from = (k, l)` by `step = (a, b)`:
/// the trapezoidal integral over `[t_k, t_{k+a}]` of
/// `(q1(t) - q2(gamma(t)) sqrt(b / a))^2` with `gamma` linear from `t_l` to
/// `t_{l+b}`, sampled at `max(a, b)` subintervals.
pub fn lattice_edge_cost(
    q1: &[f64],
    q2: &[f64],
    from: (usize, usize),
    step: (usize, usize),
) -> f64 {
    let (k, l) = from;
    let (a, b) = step;
    let h = 1.0 / (q1.len() - 1) as f64;
    let n_sub = a.max(b);
    let root = (b as f64 / a as f64).sqrt();
    let mut acc = 0.0;
    for s in 0..=n_sub {
        let p1 = k as f64 + (s * a) as f64 / n_sub as f64;
        let p2 = l as f64 + (s * b) as f64 / n_sub as f64;
        let d = sample_at(q1, p1) - root * sample_at(q2, p2);
        let w = if s == 0 || s == n_sub { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    acc * (a as f64 * h / n_sub as f64)
}

/// Outcome of aligning one SRSF to another.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub warp: Warp,
    /// Achieved (amplitude) distance: square root of the optimal path cost.
    pub distance: f64,
    /// Lattice nodes `(template index, warped index)` from `(0, 0)` to
    /// `(T - 1, T - 1)`.
    pub path: Vec<(usize, usize)>,
}

struct DpSolution {
    cost: f64,
    path: Vec<(usize, usize)>,
}

fn dp_solve(q1: &[f64], q2: &[f64], moves: &MoveSet) -> DpSolution {
    let n = q1.len();
    let last = n - 1;
    let max_step = moves.max_step();
    let mut cost = vec![f64::INFINITY; n * n];
    let mut back = vec![u16::MAX; n * n];
    cost[0] = 0.0;
    for i in 1..n {
        for j in 1..n {
            // prune nodes that cannot lie on any admissible path
            if j > max_step * i || i > max_step * j {
                continue;
            }
            if last - j > max_step * (last - i) || last - i > max_step * (last - j) {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = u16::MAX;
            for (m, &(a, b)) in moves.moves().iter().enumerate() {
                if a > i || b > j {
                    continue;
                }
                let prev = cost[(i - a) * n + (j - b)];
                if !prev.is_finite() {
                    continue;
                }
                let c = prev + lattice_edge_cost(q1, q2, (i - a, j - b), (a, b));
                if c < best {
                    best = c;
                    arg = m as u16;
                }
            }
            cost[i * n + j] = best;
            back[i * n + j] = arg;
        }
    }
    let mut path = vec![(last, last)];
    let (mut i, mut j) = (last, last);
    while (i, j) != (0, 0) {
        let (a, b) = moves.moves()[back[i * n + j] as usize];
        i -= a;
        j -= b;
        path.push((i, j));
    }
    path.reverse();
    DpSolution {
        cost: cost[n * n - 1],
        path,
    }
}

fn path_to_warp(grid: TimeGrid, path: &[(usize, usize)]) -> Warp {
    let last = grid.len() - 1;
    let mut values = vec![0.0; grid.len()];
    for w in path.windows(2) {
        let ((k, l), (k2, l2)) = (w[0], w[1]);
        let (a, b) = (k2 - k, l2 - l);
        for (i, v) in values.iter_mut().enumerate().take(k2 + 1).skip(k) {
            *v = (l * a + (i - k) * b) as f64 / (a * last) as f64;
        }
    }
    Warp::from_values_guarded(grid, values).expect("DP paths are strictly increasing")
}

/// Aligns `q2` to `q1`: finds the lattice warp minimizing
/// `|| q1 - (q2 o gamma) sqrt(gamma') ||`.
pub fn pairwise_register(q1: &Srsf, q2: &Srsf) -> Result<Registration> {
    pairwise_register_with(q1, q2, &MoveSet::default())
}

pub fn pairwise_register_with(q1: &Srsf, q2: &Srsf, moves: &MoveSet) -> Result<Registration> {
    q1.grid().ensure_same(&q2.grid())?;
    let sol = dp_solve(q1.values(), q2.values(), moves);
    Ok(Registration {
        warp: path_to_warp(q1.grid(), &sol.path),
        distance: sol.cost.sqrt(),
        path: sol.path,
    })
}

/// Amplitude distance: the registered SRSF distance.
pub fn amplitude_distance(f: &Curve, g: &Curve) -> Result<f64> {
    Ok(pairwise_register(&srsf_transform(f), &srsf_transform(g))?.distance)
}

/// Amplitude distance between two sample runs after rescaling their common
/// domain to `[0, 1]`.
pub(crate) fn segment_amplitude(a: &[f64], b: &[f64], moves: &MoveSet) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let step = 1.0 / (a.len() - 1) as f64;
    dp_solve(&srsf_samples(a, step), &srsf_samples(b, step), moves)
        .cost
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KarcherOptions {
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub moves: MoveSet,
    /// Re-center the template by the inverse mean warp after each update.
    pub recenter: bool,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 20,
            moves: MoveSet::default(),
            recenter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub template: Curve,
    pub template_srsf: Srsf,
    pub warps: Vec<Warp>,
    pub aligned: Vec<Curve>,
    /// Objective `sum_i d_a^2(template, q_i)` of each accepted iterate.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Index of the input curve used to initialize the template.
    pub initial_index: usize,
}

fn align_all(template: &[f64], qs: &[Vec<f64>], moves: &MoveSet) -> (Vec<DpSolution>, f64) {
    let sols: Vec<DpSolution> = qs
        .par_iter()
        .map(|q| dp_solve(template, q, moves))
        .collect();
    let objective = sols.iter().map(|s| s.cost).sum();
    (sols, objective)
}

/// Sample Karcher mean of the SRSFs under the elastic distance, with the
/// corresponding multiple registration.
pub fn karcher_mean(curves: &[Curve], opts: &KarcherOptions) -> Result<RegistrationResult> {
    let first = curves.first().ok_or(Error::TooFewCurves {
        needed: 1,
        found: 0,
    })?;
    let grid = first.grid();
    for c in curves {
        grid.ensure_same(&c.grid())?;
    }
    let n = curves.len();
    let step = grid.step();
    let qs: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| srsf_samples(c.values(), step))
        .collect();

    let mut mean = vec![0.0; grid.len()];
    for q in &qs {
        for (m, v) in mean.iter_mut().zip(q) {
            *m += v / n as f64;
        }
    }
    let initial_index = qs
        .iter()
        .map(|q| sq_l2_samples(q, &mean, step))
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, d)| if d < acc.1 { (i, d) } else { acc },
        )
        .0;

    let mut template = qs[initial_index].clone();
    let (mut sols, mut objective) = align_all(&template, &qs, &opts.moves);
    let mut trace = vec![objective];
    let mut converged = false;

    for _ in 0..opts.max_iter {
        if objective == 0.0 {
            converged = true;
            break;
        }
        let mut next = vec![0.0; grid.len()];
        for (q, sol) in qs.iter().zip(&sols) {
            let gamma = path_to_warp(grid, &sol.path);
            for (m, v) in next
                .iter_mut()
                .zip(warp_srsf_samples(q, gamma.values(), step))
            {
                *m += v / n as f64;
            }
        }
        if opts.recenter {
            next = recenter(grid, &next, &sols)?;
        }
        let (next_sols, next_objective) = align_all(&next, &qs, &opts.moves);
        let rel = (objective - next_objective) / objective;
        if next_objective <= objective {
            template = next;
            sols = next_sols;
            objective = next_objective;
            trace.push(objective);
        }
        if rel < opts.tol {
            // a tiny increase is discretization noise at the optimum
            converged = rel > -opts.tol.max(1e-3);
            break;
        }
    }

    let f0 = curves.iter().map(|c| c.values()[0]).sum::<f64>() / n as f64;
    let template_srsf = Srsf::new(grid, template)?;
    let warps: Vec<Warp> = sols.iter().map(|s| path_to_warp(grid, &s.path)).collect();
    let aligned = curves
        .iter()
        .zip(&warps)
        .map(|(c, w)| warp_curve(c, w))
        .collect::<Result<Vec<_>>>()?;
    // the mean of a single curve is the curve itself, not its reconstruction
    let template = if n == 1 {
        first.clone()
    } else {
        srsf_inverse(&template_srsf, f0)
    };
    Ok(RegistrationResult {
        template,
        template_srsf,
        warps,
        aligned,
        objective_trace: trace,
        converged,
        initial_index,
    })
}

fn recenter(grid: TimeGrid, template: &[f64], sols: &[DpSolution]) -> Result<Vec<f64>> {
    let n = sols.len() as f64;
    let mut mean = vec![0.0; grid.len()];
    for sol in sols {
        for (m, v) in mean.iter_mut().zip(path_to_warp(grid, &sol.path).values()) {
            *m += v / n;
        }
    }
    let inv = Warp::from_values_guarded(grid, mean)?.inverse();
    Ok(warp_srsf_samples(template, inv.values(), grid.step()))
}

/// Registers one curve to a template SRSF; returns the warp and `f o warp`.
pub fn register_to_template(
    template: &Srsf,
    curve: &Curve,
    moves: &MoveSet,
) -> Result<(Warp, Curve)> {
    let reg = pairwise_register_with(template, &srsf_transform(curve), moves)?;
    let aligned = warp_curve(curve, &reg.warp)?;
    Ok((reg.warp, aligned))
}

/// Registers every curve to `template`.
pub fn multiple_register(curves: &[Curve], template: &Curve) -> Result<(Vec<Warp>, Vec<Curve>)> {
    for c in curves {
        template.grid().ensure_same(&c.grid())?;
    }
    let tq = srsf_transform(template);
    let moves = MoveSet::default();
    let pairs = curves
        .par_iter()
        .map(|c| register_to_template(&tq, c, &moves))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Fisher-Rao distance between warps sampled on a common uniform grid,
/// treating each as piecewise linear: the angle `arccos(sum_k sqrt(da_k db_k))`
/// between the unit vectors `sqrt(da)` and `sqrt(db)`, evaluated through the
/// chord length `2 asin(|sqrt(da) - sqrt(db)| / 2)` to keep small distances
/// accurate.
pub fn warp_distance_samples(a: &[f64], b: &[f64]) -> f64 {
    let chord_sq: f64 = a
        .windows(2)
        .zip(b.windows(2))
        .map(|(x, y)| ((x[1] - x[0]).max(0.0).sqrt() - (y[1] - y[0]).max(0.0).sqrt()).powi(2))
        .sum();
    2.0 * (0.5 * chord_sq.sqrt()).min(1.0).asin()
}

pub fn warp_distance(g1: &Warp, g2: &Warp) -> Result<f64> {
    g1.grid().ensure_same(&g2.grid())?;
    Ok(warp_distance_samples(g1.values(), g2.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcore::l2_distance;
    use crate::srsf::{fr_distance, srsf_distance, warp_srsf};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    fn two_peak(z1: f64, z2: f64) -> impl Fn(f64) -> f64 {
        move |t| {
            z1 * (-(t - 0.25f64).powi(2) / 0.072).exp()
                + z2 * (-(t - 0.75f64).powi(2) / 0.072).exp()
        }
    }

    fn linf(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn self_registration_is_identity() {
        let g = grid(100);
        let f = Curve::from_fn(g, two_peak(2.0, 1.7)).unwrap();
        let q = srsf_transform(&f);
        let reg = pairwise_register(&q, &q).unwrap();
        assert!(linf(reg.warp.values(), &g.points()) < 2.0 / 100.0);
        assert!(reg.distance < 1e-3);
    }

    #[test]
    fn never_worse_than_identity() {
        let g = grid(60);
        for s in 0..5 {
            let f = Curve::from_fn(g, two_peak(2.0 + 0.1 * s as f64, 1.5)).unwrap();
            let h =
                Curve::from_fn(g, |t| two_peak(1.8, 2.2)((t + 0.05 * s as f64).min(1.0))).unwrap();
            let q1 = srsf_transform(&f);
            let q2 = srsf_transform(&h);
            let reg = pairwise_register(&q1, &q2).unwrap();
            assert!(reg.distance <= srsf_distance(&q1, &q2).unwrap() + 1e-9);
        }
    }

    #[test]
    fn recovers_smooth_warp() {
        let g = grid(100);
        let f = Curve::from_fn(g, two_peak(2.0, 1.6)).unwrap();
        let q1 = srsf_transform(&f);
        let c = 1.5f64;
        let gamma = Warp::new(
            g,
            g.points()
                .iter()
                .map(|t| ((c * t).exp() - 1.0) / (c.exp() - 1.0))
                .collect(),
        )
        .unwrap();
        // slopes run from c / (e^c - 1) ~ 0.43 to c e^c / (e^c - 1) ~ 1.93
        let q2 = warp_srsf(&q1, &gamma).unwrap();
        let reg = pairwise_register(&q1, &q2).unwrap();
        // q2 = (q1 o gamma) sqrt(gamma'), so the aligning warp is gamma^{-1}
        let target = gamma.inverse();
        assert!(linf(reg.warp.values(), target.values()) < 0.03);
        let before = srsf_distance(&q1, &q2).unwrap();
        assert!(reg.distance < 0.1 * before, "{} vs {before}", reg.distance);
    }

    #[test]
    fn shifted_two_peak_gets_closer() {
        let g = grid(100);
        let f = Curve::from_fn(g, two_peak(2.0, 2.0)).unwrap();
        let h = Curve::from_fn(g, |t| two_peak(2.0, 2.0)(t.powf(1.3))).unwrap();
        let da = amplitude_distance(&f, &h).unwrap();
        let dfr = fr_distance(&f, &h).unwrap();
        assert!(da < dfr);
        assert!(amplitude_distance(&f, &f).unwrap() < 1e-3);
    }

    #[test]
    fn move_set_validation() {
        assert!(MoveSet::new(vec![(1, 2), (2, 1)]).is_err());
        assert!(MoveSet::new(vec![(1, 1), (0, 1)]).is_err());
        assert_eq!(MoveSet::default().moves().len(), 9);
    }

    #[test]
    fn karcher_single_curve() {
        let g = grid(50);
        let f = Curve::from_fn(g, two_peak(2.0, 1.0)).unwrap();
        let res = karcher_mean(std::slice::from_ref(&f), &KarcherOptions::default()).unwrap();
        assert!(res.warps[0].is_identity());
        assert_eq!(res.template_srsf, srsf_transform(&f));
        assert_eq!(res.template, f);
        assert!(res.converged);
    }

    #[test]
    fn karcher_two_identical_curves() {
        let g = grid(50);
        let f = Curve::from_fn(g, two_peak(1.7, 2.1)).unwrap();
        let res = karcher_mean(&[f.clone(), f.clone()], &KarcherOptions::default()).unwrap();
        let q = srsf_transform(&f);
        assert!(linf(res.template_srsf.values(), q.values()) < 1e-6);
        assert_eq!(res.template, srsf_inverse(&q, f.values()[0]));
    }

    #[test]
    fn karcher_rejects_empty_and_mixed_grids() {
        assert!(karcher_mean(&[], &KarcherOptions::default()).is_err());
        let a = Curve::from_fn(grid(10), |t| t).unwrap();
        let b = Curve::from_fn(grid(11), |t| t).unwrap();
        assert!(karcher_mean(&[a, b], &KarcherOptions::default()).is_err());
    }

    #[test]
    fn multiple_register_identity_cases() {
        let g = grid(60);
        let f = Curve::from_fn(g, two_peak(2.0, 1.8)).unwrap();
        let h = Curve::from_fn(g, |t| two_peak(2.0, 1.8)(t * t)).unwrap();
        let (warps, aligned) = multiple_register(&[f.clone(), h, f.clone()], &f).unwrap();
        assert!(linf(warps[0].values(), &g.points()) < 2.0 / 60.0);
        assert!(linf(warps[2].values(), &g.points()) < 2.0 / 60.0);
        assert!(l2_distance(&aligned[1], &f).unwrap() < 0.2);
    }

    #[test]
    fn warp_distance_examples() {
        let g = grid(1001);
        let id = Warp::identity(g);
        let sq = Warp::new(g, g.points().iter().map(|t| t * t).collect()).unwrap();
        assert!(warp_distance(&sq, &sq).unwrap() < 1e-6);
        let expected = (2.0 * 2f64.sqrt() / 3.0).acos();
        assert!((warp_distance(&id, &sq).unwrap() - expected).abs() < 1e-3);
        assert_eq!(
            warp_distance(&id, &sq).unwrap(),
            warp_distance(&sq, &id).unwrap()
        );
    }

    #[test]
    fn edge_cost_of_diagonal_is_trapezoid() {
        let q1 = [0.3, -0.2, 0.8, 1.1];
        let q2 = [0.1, 0.4, -0.5, 0.9];
        let total: f64 = (0..3)
            .map(|k| lattice_edge_cost(&q1, &q2, (k, k), (1, 1)))
            .sum();
        assert!((total - sq_l2_samples(&q1, &q2, 1.0 / 3.0)).abs() < 1e-14);
    }
}
