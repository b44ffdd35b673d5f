//! Ensemble statistics: hitting times of inflated target sets, recurrence
//! estimates, exponential-in-the-mean envelope fits and ε-sweeps.

use std::collections::BTreeMap;

use crate::model::{HybridArc, HybridTime, StateVec, SystemSpec};
use crate::par::{self, Execution};
use crate::solver::{simulate_ensemble_with, Horizon, IntegratorConfig};
use crate::{Result, ShdsError};

/// Smallest ensemble accepted by [`recurrence_estimate`].
pub const MIN_ENSEMBLE: usize = 30;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// First recorded hybrid time (in `t + j` order) with `|z|_A < radius`,
/// scanning flow samples and jump post-states.
pub fn hitting_time(arc: &HybridArc, spec: &SystemSpec, radius: f64) -> Option<HybridTime> {
    for seg in &arc.segments {
        for i in 0..seg.len() {
            if spec.target_distance(seg.x(i), seg.r(i)) < radius {
                return Some(HybridTime::new(seg.t(i), seg.j));
            }
        }
    }
    None
}

/// Wilson score interval for `successes / n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let phat = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (phat + z2 / (2.0 * nf)) / denom;
    let half = z * (phat * (1.0 - phat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Nearest-rank `q`-quantile of `sorted` (ascending, nonempty).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = (q * sorted.len() as f64).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Per-path outcome against the inflated target set.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub seed: u64,
    pub hit: Option<HybridTime>,
    pub terminal: &'static str,
    pub final_time: HybridTime,
    /// Counted towards `hit_fraction`.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub target_radius: f64,
    pub rho: f64,
    pub ball: f64,
    pub horizon: f64,
    /// Present only when `hit_fraction ≥ 1 − rho`.
    pub tau_hat: Option<f64>,
    pub hit_fraction: f64,
    pub wilson: (f64, f64),
    pub hits: usize,
    /// Paths that stopped before `tau_hat` without hitting.
    pub stopped: usize,
    pub n_paths: usize,
    pub terminal_counts: BTreeMap<&'static str, usize>,
    pub paths: Vec<PathOutcome>,
}

impl RecurrenceReport {
    pub fn certified(&self) -> bool {
        self.tau_hat.is_some()
    }
}

/// Recurrence of the open ball of `radius` around the target set, for
/// paths started in the ball of radius `ball`, within time `horizon`.
pub fn recurrence_estimate(
    arcs: &[HybridArc],
    spec: &SystemSpec,
    radius: f64,
    rho: f64,
    ball: f64,
    horizon: f64,
) -> Result<RecurrenceReport> {
    if arcs.len() < MIN_ENSEMBLE {
        return Err(ShdsError::EnsembleTooSmall {
            got: arcs.len(),
            need: MIN_ENSEMBLE,
        });
    }
    if !(radius > 0.0) || !(rho > 0.0 && rho < 1.0) || !(horizon >= 0.0) {
        return Err(ShdsError::InvalidParameter(format!(
            "need radius > 0, rho in (0,1), horizon >= 0; got {radius}, {rho}, {horizon}"
        )));
    }
    for (i, arc) in arcs.iter().enumerate() {
        let z0 = arc.initial_state();
        let d0 = spec.target_distance(&z0.x, &z0.r);
        if d0 > ball {
            return Err(ShdsError::InvalidParameter(format!(
                "path {i} starts at distance {d0} outside the ball of radius {ball}"
            )));
        }
    }

    let hits: Vec<Option<HybridTime>> = arcs
        .iter()
        .map(|a| hitting_time(a, spec, radius).filter(|h| h.t <= horizon))
        .collect();
    let mut sums: Vec<f64> = hits.iter().flatten().map(HybridTime::sum).collect();
    sums.sort_by(f64::total_cmp);
    let budget = if sums.is_empty() { horizon } else { nearest_rank(&sums, 1.0 - rho) };

    let mut terminal_counts = BTreeMap::new();
    let paths: Vec<PathOutcome> = arcs
        .iter()
        .zip(&hits)
        .map(|(arc, hit)| {
            *terminal_counts.entry(arc.terminal.label()).or_insert(0) += 1;
            let final_time = arc.final_time();
            let stopped = arc.terminal.is_stop() && final_time.sum() <= budget && final_time.t <= horizon;
            PathOutcome {
                seed: arc.seed,
                hit: *hit,
                terminal: arc.terminal.label(),
                final_time,
                success: hit.is_some() || stopped,
            }
        })
        .collect();
    let n_hits = hits.iter().filter(|h| h.is_some()).count();
    let successes = paths.iter().filter(|p| p.success).count();
    let hit_fraction = successes as f64 / arcs.len() as f64;
    let certified = hit_fraction >= 1.0 - rho;
    Ok(RecurrenceReport {
        target_radius: radius,
        rho,
        ball,
        horizon,
        tau_hat: certified.then_some(budget),
        hit_fraction,
        wilson: wilson_interval(successes, arcs.len(), Z95),
        hits: n_hits,
        stopped: successes - n_hits,
        n_paths: arcs.len(),
        terminal_counts,
        paths,
    })
}

/// Hybrid times `(t, j)` at the given flow times along `arc`, taking the
/// largest `j` whose interval contains `t`.
pub fn eval_points(arc: &HybridArc, times: &[f64]) -> Vec<HybridTime> {
    times
        .iter()
        .filter_map(|&t| {
            arc.segments
                .iter()
                .rev()
                .find(|s| !s.is_empty() && s.t_start() <= t && t <= s.t_end())
                .map(|s| HybridTime::new(t, s.j))
        })
        .collect()
}

/// Ensemble mean of `|z|_A` at one hybrid time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    pub time: HybridTime,
    pub mean: f64,
    pub std_error: f64,
    /// Paths whose domain contains `time`.
    pub count: usize,
}

fn ensemble_means(arcs: &[&HybridArc], spec: &SystemSpec, grid: &[HybridTime]) -> Vec<EnvelopePoint> {
    par::map_slice(Execution::default(), grid, |&at| {
        let d: Vec<f64> = arcs
            .iter()
            .filter_map(|a| a.state_at(at))
            .map(|s: StateVec| spec.target_distance(&s.x, &s.r))
            .collect();
        let n = d.len();
        let mean = if n == 0 { f64::NAN } else { d.iter().sum::<f64>() / n as f64 };
        let std_error = if n < 2 {
            0.0
        } else {
            let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        EnvelopePoint {
            time: at,
            mean,
            std_error,
            count: n,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    pub k1: f64,
    pub k2: f64,
    pub initial_distance: f64,
    pub points: Vec<EnvelopePoint>,
    /// `k1 |z(0,0)|_A − mean · e^{k2 (t+j)}` per point.
    pub residuals: Vec<f64>,
    /// Paths dropped for starting on the target set.
    pub excluded: usize,
}

impl EnvelopeFit {
    pub fn bound(&self, at: HybridTime) -> f64 {
        self.k1 * self.initial_distance * (-self.k2 * at.sum()).exp()
    }
}

/// Exponential envelope `E|z(t,j)|_A ≤ k1 |z(0,0)|_A e^{−k2 (t+j)}` fitted at
/// deterministic grid points.
pub fn uges_m_fit(arcs: &[HybridArc], spec: &SystemSpec, grid: &[HybridTime]) -> Result<EnvelopeFit> {
    let (kept, d0) = common_initial_distance(arcs, spec)?;
    let points = ensemble_means(&kept, spec, grid);
    let usable: Vec<&EnvelopePoint> = points.iter().filter(|p| p.count > 0).collect();
    if usable.is_empty() {
        return Err(ShdsError::InvalidParameter("no path covers any evaluation point".into()));
    }
    let k1_0 = usable.iter().map(|p| p.mean / d0).fold(1.0, f64::max);
    let k2 = usable
        .iter()
        .filter(|p| p.time.sum() > 0.0 && p.mean > 0.0)
        .map(|p| -(p.mean / (k1_0 * d0)).ln() / p.time.sum())
        .fold(f64::INFINITY, f64::min);
    if !k2.is_finite() {
        return Err(ShdsError::InvalidParameter(
            "ensemble mean vanishes at every positive evaluation time".into(),
        ));
    }
    let k1 = usable
        .iter()
        .map(|p| p.mean * (k2 * p.time.sum()).exp() / d0)
        .fold(f64::NEG_INFINITY, f64::max);
    let residuals = points
        .iter()
        .map(|p| k1 * d0 - p.mean * (k2 * p.time.sum()).exp())
        .collect();
    Ok(EnvelopeFit {
        k1,
        k2,
        initial_distance: d0,
        points,
        residuals,
        excluded: arcs.len() - kept.len(),
    })
}

fn common_initial_distance<'a>(arcs: &'a [HybridArc], spec: &SystemSpec) -> Result<(Vec<&'a HybridArc>, f64)> {
    let mut kept = Vec::new();
    let mut d0: Option<f64> = None;
    for arc in arcs {
        let z = arc.initial_state();
        let d = spec.target_distance(&z.x, &z.r);
        if d == 0.0 {
            continue;
        }
        match d0 {
            None => d0 = Some(d),
            Some(c) if (c - d).abs() > 1e-12 * c => {
                return Err(ShdsError::InvalidParameter(format!(
                    "paths must share their initial distance, found {c} and {d}"
                )))
            }
            _ => {}
        }
        kept.push(arc);
    }
    match d0 {
        Some(d) => Ok((kept, d)),
        None => Err(ShdsError::InvalidParameter(
            "every path starts on the target set".into(),
        )),
    }
}

/// Check of a fitted envelope against an independent ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub points: Vec<EnvelopePoint>,
    /// `mean · e^{k2 s} − slack · se · e^{k2 s} − k1 |z0|`, nonpositive when the bound holds.
    pub excess: Vec<f64>,
    pub holds: bool,
}

pub fn check_envelope(
    fit: &EnvelopeFit,
    arcs: &[HybridArc],
    spec: &SystemSpec,
    grid: &[HybridTime],
    slack_se: f64,
) -> Result<EnvelopeCheck> {
    let (kept, d0) = common_initial_distance(arcs, spec)?;
    let points = ensemble_means(&kept, spec, grid);
    let excess: Vec<f64> = points
        .iter()
        .map(|p| {
            let g = (fit.k2 * p.time.sum()).exp();
            (p.mean - slack_se * p.std_error) * g - fit.k1 * d0
        })
        .collect();
    let holds = points.iter().zip(&excess).all(|(p, &e)| p.count == 0 || e <= 0.0);
    Ok(EnvelopeCheck { points, excess, holds })
}

/// Parameters shared by every ε in a sweep.
#[derive(Debug, Clone)]
pub struct SweepParams {
    pub inits: Vec<StateVec>,
    pub n_paths: usize,
    pub seed_base: u64,
    pub rho: f64,
    pub ball: f64,
    pub t_max: f64,
    pub radius_min: f64,
    /// Bisection stops when `hi/lo ≤ 1 + rel_precision`.
    pub rel_precision: f64,
    pub integrator: IntegratorConfig,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub epsilon: f64,
    /// Smallest certified radius; `None` when not certified at `ball`.
    pub radius: Option<f64>,
    /// Largest radius known to fail, or `radius_min` if that passed.
    pub lower: f64,
    pub hit_fraction: f64,
    pub tau_hat: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Index pairs `(i, i+1)` where the radius grew as ε decreased beyond
    /// one bisection step.
    pub monotonicity_violations: Vec<(usize, usize)>,
    pub largest_certified_eps: Option<f64>,
}

/// Smallest certified radius in `[radius_min, ball]` by log-space bisection.
pub fn certified_radius(arcs: &[HybridArc], spec: &SystemSpec, params: &SweepParams) -> Result<SweepEntry> {
    let est = |r: f64| recurrence_estimate(arcs, spec, r, params.rho, params.ball, params.t_max);
    let top = est(params.ball)?;
    let mut evaluations = 1;
    if !top.certified() {
        return Ok(SweepEntry {
            epsilon: spec.epsilon,
            radius: None,
            lower: params.ball,
            hit_fraction: top.hit_fraction,
            tau_hat: None,
            evaluations,
        });
    }
    let bottom = est(params.radius_min)?;
    evaluations += 1;
    if bottom.certified() {
        return Ok(SweepEntry {
            epsilon: spec.epsilon,
            radius: Some(params.radius_min),
            lower: params.radius_min,
            hit_fraction: bottom.hit_fraction,
            tau_hat: bottom.tau_hat,
            evaluations,
        });
    }
    let (mut lo, mut hi, mut best) = (params.radius_min, params.ball, top);
    while hi / lo > 1.0 + params.rel_precision {
        let mid = (lo * hi).sqrt();
        let r = est(mid)?;
        evaluations += 1;
        if r.certified() {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(SweepEntry {
        epsilon: spec.epsilon,
        radius: Some(hi),
        lower: lo,
        hit_fraction: best.hit_fraction,
        tau_hat: best.tau_hat,
        evaluations,
    })
}

/// For each ε (strictly decreasing) simulate one ensemble and bisect for the
/// smallest certified recurrence radius.
pub fn epsilon_sweep(
    family: &dyn Fn(f64) -> Result<SystemSpec>,
    eps_list: &[f64],
    params: &SweepParams,
) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(ShdsError::InvalidParameter("eps_list is empty".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ShdsError::InvalidParameter(format!(
            "eps_list must be strictly decreasing, got {eps_list:?}"
        )));
    }
    if !(params.radius_min > 0.0 && params.radius_min < params.ball) || !(params.rel_precision > 0.0) {
        return Err(ShdsError::InvalidParameter(format!(
            "need 0 < radius_min < ball and rel_precision > 0; got {}, {}, {}",
            params.radius_min, params.ball, params.rel_precision
        )));
    }
    let horizon = Horizon::time(params.t_max)?;
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let spec = family(eps)?;
        let arcs = simulate_ensemble_with(
            params.exec,
            &spec,
            &params.inits,
            params.n_paths,
            params.seed_base,
            horizon,
            &params.integrator,
        )?;
        entries.push(certified_radius(&arcs, &spec, params)?);
    }
    let monotonicity_violations = entries
        .windows(2)
        .enumerate()
        .filter(|(_, w)| match (w[0].radius, w[1].radius) {
            (Some(a), Some(b)) => b > a * (1.0 + params.rel_precision),
            (None, _) => false,
            (Some(_), None) => true,
        })
        .map(|(i, _)| (i, i + 1))
        .collect();
    let largest_certified_eps = entries.iter().find(|e| e.radius.is_some()).map(|e| e.epsilon);
    Ok(SweepReport {
        entries,
        monotonicity_violations,
        largest_certified_eps,
    })
}
