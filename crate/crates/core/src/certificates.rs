//! Grid verification of Lyapunov-Foster conditions on an average system:
//!
//! - sandwich `c1 |z|²_A ≤ V(z) ≤ c2 |z|²_A` and `|∇V(z)| ≤ c3 |z|_A`
//!   on `R^n x (C ∪ D)`,
//! - flow decrease `⟨∇V, F_ave⟩ ≤ −c4 V` on `R^n x C`,
//! - expected jump contraction `E[V(G_ave(z, v))] ≤ c5 V(z)` on `R^n x D`,
//!
//! with `λ = (c2/c1) c5 < 1/2` required strictly. A pass is a statement
//! about the sampled grid only.

use std::sync::Arc;

use crate::averaging::{AverageSpec, FD_STEP};
use crate::noise::JumpNoise;
use crate::par::{self, Execution};
use crate::sets::linspace;
use crate::{Result, ShdsError};

/// Candidate Lyapunov-Foster function `V(x, r)`.
pub trait Lyapunov: Send + Sync {
    fn value(&self, x: &[f64], r: &[f64]) -> f64;

    /// Gradient over `(x, r)`; central differences unless overridden.
    fn gradient(&self, x: &[f64], r: &[f64]) -> Vec<f64> {
        central_gradient(|x, r| self.value(x, r), x, r, FD_STEP)
    }
}

/// Central-difference gradient over `(x, r)` with step `rel * max(1, |z_k|)`.
pub fn central_gradient(v: impl Fn(&[f64], &[f64]) -> f64, x: &[f64], r: &[f64], rel: f64) -> Vec<f64> {
    let n = x.len();
    let mut z: Vec<f64> = x.iter().chain(r).copied().collect();
    let mut grad = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        let orig = z[k];
        let h = rel * orig.abs().max(1.0);
        z[k] = orig + h;
        let plus = v(&z[..n], &z[n..]);
        z[k] = orig - h;
        let minus = v(&z[..n], &z[n..]);
        z[k] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// `V = scale · |x|²` with its exact gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub scale: f64,
}

impl Lyapunov for Quadratic {
    fn value(&self, x: &[f64], _r: &[f64]) -> f64 {
        self.scale * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], r: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|v| 2.0 * self.scale * v)
            .chain(r.iter().map(|_| 0.0))
            .collect()
    }
}

type ScalarMap = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Arbitrary `V` from a closure; gradient by central differences.
pub struct FnLyapunov {
    f: ScalarMap,
}

impl FnLyapunov {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnLyapunov { f: Arc::new(f) }
    }
}

impl Lyapunov for FnLyapunov {
    fn value(&self, x: &[f64], r: &[f64]) -> f64 {
        (self.f)(x, r)
    }
}

/// `alpha · V`.
pub struct Scaled<'a> {
    pub inner: &'a dyn Lyapunov,
    pub alpha: f64,
}

impl Lyapunov for Scaled<'_> {
    fn value(&self, x: &[f64], r: &[f64]) -> f64 {
        self.alpha * self.inner.value(x, r)
    }

    fn gradient(&self, x: &[f64], r: &[f64]) -> Vec<f64> {
        self.inner.gradient(x, r).into_iter().map(|g| self.alpha * g).collect()
    }
}

/// A grid point `z = (x, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
}

/// Sample points in `R^n x C` and `R^n x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertGrid {
    pub flow_points: Vec<Point>,
    pub jump_points: Vec<Point>,
    pub description: String,
}

impl CertGrid {
    /// Log-spaced radii in `[radius_min, radius_max]` along a fixed set of
    /// directions, crossed with a uniform grid over `C` and the points of `D`.
    pub fn log_radial(avg: &AverageSpec, radius_min: f64, radius_max: f64, n_radial: usize, n_r: usize) -> Result<Self> {
        if !(radius_min > 0.0 && radius_max >= radius_min) || n_radial == 0 {
            return Err(ShdsError::InvalidParameter(format!(
                "need 0 < radius_min <= radius_max and n_radial >= 1, got [{radius_min}, {radius_max}], {n_radial}"
            )));
        }
        let radii: Vec<f64> = linspace(radius_min.ln(), radius_max.ln(), n_radial)
            .into_iter()
            .enumerate()
            .map(|(i, l)| match i {
                0 => radius_min,
                _ if i + 1 == n_radial => radius_max,
                _ => l.exp(),
            })
            .collect();
        let dirs = directions(avg.n);
        let xs: Vec<Vec<f64>> = radii
            .iter()
            .flat_map(|&rad| dirs.iter().map(move |d| d.iter().map(|c| c * rad).collect()))
            .collect();
        let cross = |rs: Vec<Vec<f64>>| -> Vec<Point> {
            xs.iter()
                .flat_map(|x| rs.iter().map(move |r| Point { x: x.clone(), r: r.clone() }))
                .collect()
        };
        Ok(CertGrid {
            flow_points: cross(avg.flow_set.grid(n_r)),
            jump_points: cross(avg.jump_set.grid(n_r)),
            description: format!(
                "log-radial |x| in [{radius_min}, {radius_max}] ({n_radial} radii x {} directions), {n_r} points per r-axis",
                dirs.len()
            ),
        })
    }

    /// Explicit scalar `x` values crossed with the set grids.
    pub fn from_x_values(avg: &AverageSpec, xs: &[f64], n_r: usize) -> Self {
        let cross = |rs: Vec<Vec<f64>>| -> Vec<Point> {
            xs.iter()
                .flat_map(|&x| rs.iter().map(move |r| Point { x: vec![x], r: r.clone() }))
                .collect()
        };
        CertGrid {
            flow_points: cross(avg.flow_set.grid(n_r)),
            jump_points: cross(avg.jump_set.grid(n_r)),
            description: format!("{} explicit x values, {n_r} points per r-axis", xs.len()),
        }
    }

    /// Points of `R^n x (C ∪ D)`.
    pub fn all_points(&self) -> Vec<Point> {
        self.flow_points.iter().chain(&self.jump_points).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.flow_points.len() + self.jump_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = sign;
            dirs.push(d);
        }
    }
    if (2..=4).contains(&n) {
        let scale = 1.0 / (n as f64).sqrt();
        for mask in 0..(1usize << n) {
            dirs.push((0..n).map(|i| if mask >> i & 1 == 1 { -scale } else { scale }).collect());
        }
    }
    dirs
}

/// Worst point of one inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub value: f64,
}

impl Witness {
    fn at(p: &Point, value: f64) -> Self {
        Witness {
            x: p.x.clone(),
            r: p.r.clone(),
            value,
        }
    }
}

/// Index of the extremum in canonical order (first wins ties).
fn arg_extreme(values: &[f64], better: impl Fn(f64, f64) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| better(v, values[b])) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCheck {
    pub c1: f64,
    pub c2: f64,
    pub c1_witness: Option<Witness>,
    pub c2_witness: Option<Witness>,
    /// A point with `|z|_A > 0` and `V(z) ≤ 0`.
    pub violation: Option<Witness>,
}

impl SandwichCheck {
    pub fn passed(&self) -> bool {
        self.violation.is_none() && self.c1 > 0.0 && self.c2.is_finite() && self.c1 <= self.c2
    }
}

/// `c1 = min V/|z|²_A`, `c2 = max V/|z|²_A` over points with `|z|_A > 0`.
pub fn check_sandwich(v: &dyn Lyapunov, avg: &AverageSpec, points: &[Point]) -> SandwichCheck {
    let pts: Vec<&Point> = points
        .iter()
        .filter(|p| avg.target_distance(&p.x, &p.r) > 0.0)
        .collect();
    let evals = par::map_slice(Execution::default(), &pts, |p| {
        let d = avg.target_distance(&p.x, &p.r);
        let val = v.value(&p.x, &p.r);
        (val, val / (d * d))
    });
    let ratios: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let violation = evals
        .iter()
        .zip(&pts)
        .find(|(e, _)| !(e.0 > 0.0))
        .map(|(e, p)| Witness::at(p, e.0));
    let lo = arg_extreme(&ratios, |a, b| a < b);
    let hi = arg_extreme(&ratios, |a, b| a > b);
    SandwichCheck {
        c1: lo.map_or(f64::NAN, |i| ratios[i]),
        c2: hi.map_or(f64::NAN, |i| ratios[i]),
        c1_witness: lo.map(|i| Witness::at(pts[i], ratios[i])),
        c2_witness: hi.map(|i| Witness::at(pts[i], ratios[i])),
        violation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub c3: f64,
    pub witness: Option<Witness>,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.c3.is_finite() && self.c3 > 0.0
    }
}

/// `c3 = max |∇V| / |z|_A`.
pub fn check_gradient_bound(v: &dyn Lyapunov, avg: &AverageSpec, points: &[Point]) -> GradientCheck {
    let pts: Vec<&Point> = points
        .iter()
        .filter(|p| avg.target_distance(&p.x, &p.r) > 0.0)
        .collect();
    let ratios = par::map_slice(Execution::default(), &pts, |p| {
        let g = v.gradient(&p.x, &p.r);
        g.iter().map(|a| a * a).sum::<f64>().sqrt() / avg.target_distance(&p.x, &p.r)
    });
    let hi = arg_extreme(&ratios, |a, b| a > b);
    GradientCheck {
        c3: hi.map_or(f64::NAN, |i| ratios[i]),
        witness: hi.map(|i| Witness::at(pts[i], ratios[i])),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowCheck {
    /// `min −⟨∇V, F_ave⟩ / V`.
    pub c4: f64,
    pub witness: Option<Witness>,
    /// Point with the largest positive `⟨∇V, F_ave⟩`, if any.
    pub violation: Option<Witness>,
}

impl FlowCheck {
    pub fn passed(&self) -> bool {
        self.violation.is_none() && self.c4 > 0.0
    }
}

pub fn check_flow_decrease(v: &dyn Lyapunov, avg: &AverageSpec, points: &[Point]) -> FlowCheck {
    let pts: Vec<&Point> = points.iter().filter(|p| v.value(&p.x, &p.r) > 0.0).collect();
    let evals = par::map_slice(Execution::default(), &pts, |p| {
        let g = v.gradient(&p.x, &p.r);
        let f = avg.eval_flow(&p.x, &p.r);
        let dot: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        (dot, -dot / v.value(&p.x, &p.r))
    });
    let rates: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let dots: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let lo = arg_extreme(&rates, |a, b| a < b);
    let worst = arg_extreme(&dots, |a, b| a > b).filter(|&i| dots[i] > 0.0);
    FlowCheck {
        c4: lo.map_or(f64::NAN, |i| rates[i]),
        witness: lo.map(|i| Witness::at(pts[i], rates[i])),
        violation: worst.map(|i| Witness::at(pts[i], dots[i])),
    }
}

/// `E[V(G_ave(z, v))]`, exact for finite support, Monte Carlo otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpExpectation {
    pub mean: f64,
    /// Standard error of the Monte Carlo mean; `None` when exact.
    pub std_error: Option<f64>,
}

pub fn expected_jump_value(
    v: &dyn Lyapunov,
    avg: &AverageSpec,
    x: &[f64],
    r: &[f64],
    noise: &JumpNoise,
    mc_samples: usize,
) -> JumpExpectation {
    match noise {
        JumpNoise::FiniteSupport { values, probs } => {
            let mean = values
                .iter()
                .zip(probs)
                .map(|(val, &p)| {
                    let (gx, hr) = avg.eval_jump(x, r, val);
                    p * v.value(&gx, &hr)
                })
                .sum();
            JumpExpectation { mean, std_error: None }
        }
        JumpNoise::Sampler { .. } => {
            let n = mc_samples.max(2);
            let samples: Vec<f64> = (0..n as u64)
                .map(|k| {
                    let draw = noise.draw(0, k);
                    let (gx, hr) = avg.eval_jump(x, r, &draw);
                    v.value(&gx, &hr)
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
            JumpExpectation {
                mean,
                std_error: Some((var / n as f64).sqrt()),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpCheck {
    pub c5: f64,
    pub witness: Option<Witness>,
    /// Largest Monte Carlo standard error of the ratio, when sampled.
    pub std_error: Option<f64>,
}

impl JumpCheck {
    pub fn passed(&self) -> bool {
        self.c5.is_finite() && self.c5 >= 0.0
    }
}

/// `c5 = max E[V(G_ave(z, v))] / V(z)` over jump-set points with `V > 0`.
pub fn check_jump_condition(
    v: &dyn Lyapunov,
    avg: &AverageSpec,
    points: &[Point],
    noise: &JumpNoise,
    mc_samples: usize,
) -> JumpCheck {
    let pts: Vec<&Point> = points.iter().filter(|p| v.value(&p.x, &p.r) > 0.0).collect();
    let evals = par::map_slice(Execution::default(), &pts, |p| {
        let e = expected_jump_value(v, avg, &p.x, &p.r, noise, mc_samples);
        let vz = v.value(&p.x, &p.r);
        (e.mean / vz, e.std_error.map(|s| s / vz))
    });
    let ratios: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let hi = arg_extreme(&ratios, |a, b| a > b);
    let std_error = evals
        .iter()
        .filter_map(|e| e.1)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
    JumpCheck {
        c5: hi.map_or(f64::NAN, |i| ratios[i]),
        witness: hi.map(|i| Witness::at(pts[i], ratios[i])),
        std_error,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Tightens the gate to `λ < 1/2 − margin`; must be nonnegative.
    pub margin: f64,
    pub mc_samples: usize,
    /// Also sample the flow-decrease inequality on `R^n x D`.
    pub flow_on_jump_set: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            margin: 0.0,
            mc_samples: 100_000,
            flow_on_jump_set: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FosterCertificate {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub lambda: f64,
    pub verdict: Verdict,
    /// Reasons for a failed verdict.
    pub failures: Vec<String>,
    pub sandwich: SandwichCheck,
    pub gradient: GradientCheck,
    pub flow: FlowCheck,
    pub jump: JumpCheck,
    pub grid: String,
    pub grid_points: usize,
}

impl FosterCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

pub fn foster_certificate(
    v: &dyn Lyapunov,
    avg: &AverageSpec,
    grid: &CertGrid,
    opts: &CertifyOptions,
) -> Result<FosterCertificate> {
    if !(opts.margin >= 0.0) {
        return Err(ShdsError::InvalidParameter(format!(
            "safety margin must be nonnegative, got {}",
            opts.margin
        )));
    }
    let all = grid.all_points();
    let sandwich = check_sandwich(v, avg, &all);
    let gradient = check_gradient_bound(v, avg, &all);
    let flow_pts = if opts.flow_on_jump_set { all.clone() } else { grid.flow_points.clone() };
    let flow = check_flow_decrease(v, avg, &flow_pts);
    let jump = check_jump_condition(v, avg, &grid.jump_points, &avg.noise, opts.mc_samples);

    let lambda = (sandwich.c2 / sandwich.c1) * jump.c5;
    let mut failures = Vec::new();
    if !sandwich.passed() {
        failures.push(match &sandwich.violation {
            Some(w) => format!("V(z) = {} <= 0 at x={:?}, r={:?}", w.value, w.x, w.r),
            None => format!("sandwich constants invalid: c1={}, c2={}", sandwich.c1, sandwich.c2),
        });
    }
    if !gradient.passed() {
        failures.push(format!("gradient bound invalid: c3={}", gradient.c3));
    }
    if !flow.passed() {
        failures.push(match &flow.violation {
            Some(w) => format!("<grad V, F_ave> = {} > 0 at x={:?}, r={:?}", w.value, w.x, w.r),
            None => format!("flow decrease rate c4={} is not positive", flow.c4),
        });
    }
    if !jump.passed() {
        failures.push(format!("jump constant invalid: c5={}", jump.c5));
    }
    if !(lambda < 0.5 - opts.margin) {
        failures.push(format!("lambda = {lambda} is not below {}", 0.5 - opts.margin));
    }
    let verdict = if failures.is_empty() { Verdict::Pass } else { Verdict::Fail };
    Ok(FosterCertificate {
        c1: sandwich.c1,
        c2: sandwich.c2,
        c3: gradient.c3,
        c4: flow.c4,
        c5: jump.c5,
        lambda,
        verdict,
        failures,
        sandwich,
        gradient,
        flow,
        jump,
        grid: grid.description.clone(),
        grid_points: grid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::build_average_system;
    use crate::systems::{jammed_actuator, JamParams};

    fn avg(p: f64) -> AverageSpec {
        let spec = jammed_actuator(&JamParams::new(1.0, p, 0.01).unwrap()).unwrap();
        let f = spec.average.clone().unwrap();
        build_average_system(&spec, f)
    }

    fn grid(a: &AverageSpec) -> CertGrid {
        CertGrid::log_radial(a, 1e-3, 10.0, 41, 11).unwrap()
    }

    #[test]
    fn sandwich_constants() {
        let a = avg(0.1);
        let g = grid(&a).all_points();
        let s = check_sandwich(&Quadratic { scale: 1.0 }, &a, &g);
        assert!((s.c1 - 1.0).abs() < 1e-12 && (s.c2 - 1.0).abs() < 1e-12);
        let s = check_sandwich(&Quadratic { scale: 2.0 }, &a, &g);
        assert!((s.c1 - 2.0).abs() < 1e-12 && (s.c2 - 2.0).abs() < 1e-12);
        let g2 = CertGrid::log_radial(&a, 1e-3, 2.0, 61, 5).unwrap().all_points();
        let quartic = FnLyapunov::new(|x, _r| x[0] * x[0] + x[0].powi(4));
        let s = check_sandwich(&quartic, &a, &g2);
        assert!((s.c1 - 1.0).abs() < 1e-5, "{}", s.c1);
        assert!((s.c2 - 5.0).abs() < 1e-12);
        assert_eq!(s.c2_witness.unwrap().x[0].abs(), 2.0);
    }

    #[test]
    fn sandwich_flags_nonpositive_v() {
        let a = avg(0.1);
        let bad = FnLyapunov::new(|x, _r| x[0]);
        let s = check_sandwich(&bad, &a, &grid(&a).all_points());
        assert!(!s.passed());
        assert!(s.violation.unwrap().x[0] < 0.0);
    }

    #[test]
    fn gradient_constants() {
        let a = avg(0.1);
        let g = grid(&a).all_points();
        assert!((check_gradient_bound(&Quadratic { scale: 1.0 }, &a, &g).c3 - 2.0).abs() < 1e-12);
        assert!((check_gradient_bound(&Quadratic { scale: 3.0 }, &a, &g).c3 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_gradient_matches_exact() {
        let v = FnLyapunov::new(|x, _r| x[0] * x[0]);
        for i in 0..=60 {
            let x = -3.0 + 0.1 * i as f64;
            let g = v.gradient(&[x], &[0.5]);
            assert!((g[0] - 2.0 * x).abs() < 1e-8, "x={x}: {}", g[0]);
            assert!(g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn flow_decrease_rates() {
        let mut a = avg(0.1);
        let g = grid(&a);
        let f = check_flow_decrease(&Quadratic { scale: 1.0 }, &a, &g.flow_points);
        assert!((f.c4 - 2.0).abs() < 1e-12 && f.passed());

        a.f_ave = Arc::new(|x, _r, out| out[0] = -3.0 * x[0]);
        let f = check_flow_decrease(&Quadratic { scale: 1.0 }, &a, &g.flow_points);
        assert!((f.c4 - 6.0).abs() < 1e-12);

        a.f_ave = Arc::new(|x, _r, out| out[0] = x[0]);
        let f = check_flow_decrease(&Quadratic { scale: 1.0 }, &a, &g.flow_points);
        assert!(!f.passed());
        assert!(f.violation.is_some());
    }

    #[test]
    fn expected_jump_values() {
        let a = avg(0.25);
        let v = Quadratic { scale: 1.0 };
        let e = expected_jump_value(&v, &a, &[2.0], &[1.0], &a.noise, 0);
        assert_eq!(e.mean, 2.25);
        assert!(e.std_error.is_none());
        assert_eq!(expected_jump_value(&v, &a, &[0.0], &[1.0], &a.noise, 0).mean, 0.0);
        let a0 = avg(0.0);
        assert_eq!(expected_jump_value(&v, &a0, &[3.0], &[1.0], &a0.noise, 0).mean, 0.0);
    }

    #[test]
    fn monte_carlo_expectation_agrees_with_exact() {
        let a = avg(0.25);
        let v = Quadratic { scale: 1.0 };
        let exact = expected_jump_value(&v, &a, &[2.0], &[1.0], &a.noise, 0).mean;
        let base = a.noise.clone();
        let sampled = JumpNoise::sampler(1, Arc::new(move |rng| {
            let u: f64 = rand::Rng::gen(rng);
            if u < 0.25 { vec![0.75] } else { vec![-0.75] }
        }));
        let mc = expected_jump_value(&v, &a, &[2.0], &[1.0], &sampled, 100_000);
        let se = mc.std_error.unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * se, "{} vs {exact} (se {se})", mc.mean);
        drop(base);
    }

    #[test]
    fn jump_constant_is_state_independent() {
        for p in [0.0, 0.1, 0.3, 1.0] {
            let a = avg(p);
            let j = check_jump_condition(&Quadratic { scale: 1.0 }, &a, &grid(&a).jump_points, &a.noise, 0);
            assert!((j.c5 - 2.25 * p).abs() < 1e-12, "p={p}: {}", j.c5);
        }
        let mut a = avg(0.3);
        a.jump = Arc::new(|x, _r, _v, out| out[0] = x[0]);
        let j = check_jump_condition(&Quadratic { scale: 1.0 }, &a, &grid(&a).jump_points, &a.noise, 0);
        assert_eq!(j.c5, 1.0);
    }

    #[test]
    fn certificate_threshold() {
        let opts = CertifyOptions::default();
        let q = Quadratic { scale: 1.0 };
        let a = avg(0.1);
        let c = foster_certificate(&q, &a, &grid(&a), &opts).unwrap();
        assert!(c.passed(), "{:?}", c.failures);
        assert!((c.lambda - 0.225).abs() < 1e-12);
        let a = avg(0.3);
        let c = foster_certificate(&q, &a, &grid(&a), &opts).unwrap();
        assert!(!c.passed());
        assert!((c.lambda - 0.675).abs() < 1e-12);
        let a = avg(2.0 / 9.0);
        let c = foster_certificate(&q, &a, &grid(&a), &opts).unwrap();
        assert!((c.lambda - 0.5).abs() < 1e-12);
        assert!(!c.passed());
    }

    #[test]
    fn margin_only_tightens() {
        let a = avg(0.1);
        let q = Quadratic { scale: 1.0 };
        let bad = CertifyOptions { margin: -0.1, ..Default::default() };
        assert!(foster_certificate(&q, &a, &grid(&a), &bad).is_err());
        let tight = CertifyOptions { margin: 0.3, ..Default::default() };
        assert!(!foster_certificate(&q, &a, &grid(&a), &tight).unwrap().passed());
    }

    #[test]
    fn always_absorbing_jumps_pass() {
        let a = avg(0.0);
        let c = foster_certificate(&Quadratic { scale: 1.0 }, &a, &grid(&a), &CertifyOptions::default()).unwrap();
        assert_eq!(c.c5, 0.0);
        assert!(c.passed());
    }

    #[test]
    fn refinement_is_monotone() {
        let a = avg(0.1);
        let v = FnLyapunov::new(|x, _r| x[0] * x[0] + 0.1 * x[0].powi(4));
        let opts = CertifyOptions::default();
        let coarse = CertGrid::from_x_values(&a, &[-2.0, -0.5, 0.5, 2.0], 3);
        let fine = CertGrid::from_x_values(&a, &[-3.0, -2.0, -1.0, -0.5, 0.25, 0.5, 2.0, 3.0], 5);
        let c = foster_certificate(&v, &a, &coarse, &opts).unwrap();
        let f = foster_certificate(&v, &a, &fine, &opts).unwrap();
        assert!(f.c1 <= c.c1 && f.c4 <= c.c4);
        assert!(f.c2 >= c.c2 && f.c3 >= c.c3 && f.c5 >= c.c5);
        assert!(f.lambda >= c.lambda);
    }

    #[test]
    fn grid_directions_in_higher_dimensions() {
        assert_eq!(directions(1).len(), 2);
        assert_eq!(directions(2).len(), 8);
        for d in directions(3) {
            assert!((d.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
