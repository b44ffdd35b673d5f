//! Hybrid time, states, system descriptions and sample paths.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::noise::JumpNoise;
use crate::sets::{union_distance, SetDescriptor};
use crate::{Result, ShdsError};

/// `f(x, r, tau, eps, out)`; writes `n` components.
pub type FlowMap = Arc<dyn Fn(&[f64], &[f64], f64, f64, &mut [f64]) + Send + Sync>;
/// `w(r, out)`; writes `p` components.
pub type AuxFlowMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `g(x, r, v, out)`; writes `n` components.
pub type JumpMap = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `h(r, v, out)`; writes `p` components.
pub type AuxJumpMap = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `f_ave(x, r, out)`; writes `n` components.
pub type AverageMap = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Tolerance for conditions that hold with equality (`f(0,..) = 0` etc.).
pub const VALIDATION_TOL: f64 = 1e-9;

/// A point `(t, j)` of a hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: u64,
}

impl HybridTime {
    pub const ZERO: HybridTime = HybridTime { t: 0.0, j: 0 };

    pub fn new(t: f64, j: u64) -> Self {
        debug_assert!(t >= 0.0);
        HybridTime { t, j }
    }

    pub fn sum(&self) -> f64 {
        hybrid_time_sum(*self)
    }
}

/// `t + j`, the quantity bounded by recurrence budgets and exponential rates.
pub fn hybrid_time_sum(ht: HybridTime) -> f64 {
    ht.t + ht.j as f64
}

impl Eq for HybridTime {}

impl PartialOrd for HybridTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HybridTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sum()
            .total_cmp(&other.sum())
            .then(self.t.total_cmp(&other.t))
    }
}

impl fmt::Display for HybridTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.t, self.j)
    }
}

/// Full state `(x, r, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub tau: f64,
}

impl StateVec {
    pub fn new(x: Vec<f64>, r: Vec<f64>, tau: f64) -> Self {
        StateVec { x, r, tau }
    }

    /// Scalar main state with a scalar timer starting at `tau = 0`.
    pub fn scalar(x: f64, r: f64) -> Self {
        StateVec::new(vec![x], vec![r], 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite() && self.x.iter().chain(&self.r).all(|v| v.is_finite())
    }
}

/// How the fast clock behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScale {
    /// `tau' = 1/eps`; the integrator resolves the oscillation.
    Fast,
    /// Averaged system: no `tau` dependence, `tau` stays frozen.
    Averaged,
}

/// Description of one stochastic hybrid system instance.
///
/// Flow set `R^n x C x R>=0`, jump set `R^n x D x R>=0`; `C` and `D`
/// constrain `r` only.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub flow: FlowMap,
    pub aux_flow: AuxFlowMap,
    pub jump: JumpMap,
    pub aux_jump: AuxJumpMap,
    pub flow_set: SetDescriptor,
    pub jump_set: SetDescriptor,
    pub noise: JumpNoise,
    pub epsilon: f64,
    pub time_scale: TimeScale,
    /// Closed-form average map, when known.
    pub average: Option<AverageMap>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("m", &self.m())
            .field("flow_set", &self.flow_set)
            .field("jump_set", &self.jump_set)
            .field("noise", &self.noise)
            .field("epsilon", &self.epsilon)
            .field("time_scale", &self.time_scale)
            .field("average", &self.average.is_some())
            .finish_non_exhaustive()
    }
}

impl SystemSpec {
    pub fn m(&self) -> usize {
        self.noise.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ShdsError::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        self.flow_set.validate()?;
        self.jump_set.validate()?;
        for (what, set) in [("flow set", &self.flow_set), ("jump set", &self.jump_set)] {
            if set.dim() != self.p {
                return Err(ShdsError::DimensionMismatch {
                    what: what.into(),
                    expected: self.p,
                    got: set.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        SystemSpec {
            epsilon,
            ..self.clone()
        }
    }

    pub fn check_dims(&self, s: &StateVec) -> Result<()> {
        if s.x.len() != self.n {
            return Err(ShdsError::DimensionMismatch {
                what: "x".into(),
                expected: self.n,
                got: s.x.len(),
            });
        }
        if s.r.len() != self.p {
            return Err(ShdsError::DimensionMismatch {
                what: "r".into(),
                expected: self.p,
                got: s.r.len(),
            });
        }
        Ok(())
    }

    pub fn in_flow_set(&self, r: &[f64]) -> bool {
        self.flow_set.contains(r)
    }

    pub fn in_jump_set(&self, r: &[f64]) -> bool {
        self.jump_set.contains(r)
    }

    pub fn eval_flow(&self, x: &[f64], r: &[f64], tau: f64, eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.flow)(x, r, tau, eps, &mut out);
        out
    }

    pub fn eval_jump(&self, x: &[f64], r: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.jump)(x, r, v, &mut out);
        out
    }

    pub fn eval_aux_jump(&self, r: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        (self.aux_jump)(r, v, &mut out);
        out
    }

    /// `(g(x,r,v), h(r,v), tau)`.
    pub fn jump_state(&self, s: &StateVec, v: &[f64]) -> StateVec {
        StateVec {
            x: self.eval_jump(&s.x, &s.r, v),
            r: self.eval_aux_jump(&s.r, v),
            tau: s.tau,
        }
    }

    /// Distance of `(x, r)` to `{0} x (C ∪ D)`.
    pub fn target_distance(&self, x: &[f64], r: &[f64]) -> f64 {
        let dr = union_distance(&self.flow_set, &self.jump_set, r);
        (x.iter().map(|v| v * v).sum::<f64>() + dr * dr).sqrt()
    }
}

/// Euclidean distance of `(x, r)` to `{0} x (C ∪ D)`.
pub fn dist_to_target(s: &StateVec, spec: &SystemSpec) -> Result<f64> {
    spec.check_dims(s)?;
    Ok(spec.target_distance(&s.x, &s.r))
}

/// Flow samples recorded while the jump counter equals `j`, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub j: u64,
    n: usize,
    p: usize,
    t: Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
    tau: Vec<f64>,
}

impl Segment {
    pub fn new(j: u64, n: usize, p: usize) -> Self {
        Segment {
            j,
            n,
            p,
            t: Vec::new(),
            x: Vec::new(),
            r: Vec::new(),
            tau: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, s: &StateVec) {
        self.t.push(t);
        self.x.extend_from_slice(&s.x);
        self.r.extend_from_slice(&s.r);
        self.tau.push(s.tau);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }

    pub fn r(&self, i: usize) -> &[f64] {
        &self.r[i * self.p..(i + 1) * self.p]
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.tau[i]
    }

    pub fn state(&self, i: usize) -> StateVec {
        StateVec::new(self.x(i).to_vec(), self.r(i).to_vec(), self.tau(i))
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Linear interpolation between recorded samples.
    pub fn interpolate(&self, t: f64) -> Option<StateVec> {
        if self.is_empty() {
            return None;
        }
        let slack = 1e-9 * t.abs().max(1.0);
        if t < self.t_start() - slack || t > self.t_end() + slack {
            return None;
        }
        let t = t.clamp(self.t_start(), self.t_end());
        let k = self.t.partition_point(|&s| s < t);
        if self.t[k] == t || k == 0 {
            return Some(self.state(k));
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let a = (t - t0) / (t1 - t0);
        let lerp = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter().zip(v).map(|(p, q)| p + a * (q - p)).collect()
        };
        Some(StateVec::new(
            lerp(self.x(k - 1), self.x(k)),
            lerp(self.r(k - 1), self.r(k)),
            self.tau(k - 1) + a * (self.tau(k) - self.tau(k - 1)),
        ))
    }
}

/// One jump: pre-state, recorded draw and post-state.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    /// Hybrid time of the pre-jump state.
    pub time: HybridTime,
    pub pre: StateVec,
    pub v: Vec<f64>,
    pub post: StateVec,
}

/// Why a path stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalReason {
    /// `t` reached `t_max`.
    Horizon,
    /// `j` reached `j_max`.
    JumpLimit,
    /// The state left the flow and jump sets; the solution stops.
    LeftSets { r: Vec<f64> },
}

impl TerminalReason {
    /// True when the solution itself ended rather than being truncated.
    pub fn is_stop(&self) -> bool {
        matches!(self, TerminalReason::LeftSets { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            TerminalReason::Horizon => "horizon",
            TerminalReason::JumpLimit => "jump_limit",
            TerminalReason::LeftSets { .. } => "left_sets",
        }
    }
}

/// One seeded sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridArc {
    pub seed: u64,
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRecord>,
    pub terminal: TerminalReason,
}

impl HybridArc {
    pub fn initial_state(&self) -> StateVec {
        self.segments[0].state(0)
    }

    pub fn final_state(&self) -> StateVec {
        let last = self.segments.last().expect("arc has at least one segment");
        last.state(last.len() - 1)
    }

    pub fn final_time(&self) -> HybridTime {
        let last = self.segments.last().expect("arc has at least one segment");
        HybridTime::new(last.t_end(), last.j)
    }

    pub fn jump_count(&self) -> u64 {
        self.jumps.len() as u64
    }

    /// Noise draws in jump order, suitable for replay.
    pub fn draws(&self) -> Vec<Vec<f64>> {
        self.jumps.iter().map(|jr| jr.v.clone()).collect()
    }

    /// State at `(t, j)` by interpolation within segment `j`.
    pub fn state_at(&self, at: HybridTime) -> Option<StateVec> {
        self.segments
            .get(at.j as usize)
            .and_then(|seg| seg.interpolate(at.t))
    }
}

/// Points at which [`validate_spec`] evaluates the maps.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    /// Points of `C ∪ D`.
    pub r_points: Vec<Vec<f64>>,
    /// Points of `D`.
    pub jump_points: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    /// Radius of a ball around the origin excluded from `x` sampling. When
    /// set, the `f(0, ..) = 0` item cannot be sampled and is skipped.
    pub exclude_radius: Option<f64>,
}

impl SamplingPlan {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        let mut r_points = spec.flow_set.grid(11);
        let jump_points = spec.jump_set.grid(11);
        r_points.extend(jump_points.iter().cloned());
        SamplingPlan {
            r_points,
            jump_points,
            tau: crate::sets::linspace(0.0, 4.0 * std::f64::consts::PI, 97),
            eps: vec![spec.epsilon, spec.epsilon / 2.0, 0.0],
            v: spec.noise.support_sample(32),
            exclude_radius: None,
        }
    }

    pub fn excluding_ball(mut self, radius: f64) -> Self {
        self.exclude_radius = Some(radius);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemStatus {
    Pass,
    Fail { witness: Vec<f64>, value: f64 },
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemCheck {
    pub item: &'static str,
    pub status: ItemStatus,
}

impl ItemCheck {
    pub fn passed(&self) -> bool {
        !matches!(self.status, ItemStatus::Fail { .. })
    }
}

/// Outcome of the structural checks on a [`SystemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `|f(0, r, tau, eps)| <= tol`.
    pub flow_vanishes: ItemCheck,
    /// `|g(0, r, v)| <= tol`.
    pub jump_vanishes: ItemCheck,
    /// `h(D x V) ⊂ C ∪ D`.
    pub jumps_close: ItemCheck,
    /// `sup |h|` over `D x V`.
    pub h_bound: f64,
    pub h_bound_check: ItemCheck,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        [
            &self.flow_vanishes,
            &self.jump_vanishes,
            &self.jumps_close,
            &self.h_bound_check,
        ]
        .iter()
        .all(|c| c.passed())
    }
}

/// Grid checks of the structural regularity conditions.
///
/// Failures are reported with a witness point; they are never errors.
pub fn validate_spec(spec: &SystemSpec, plan: &SamplingPlan) -> ValidationReport {
    let zero_x = vec![0.0; spec.n];
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();

    let flow_vanishes = if let Some(radius) = plan.exclude_radius {
        ItemCheck {
            item: "f(0,r,tau,eps) = 0",
            status: ItemStatus::Skipped(format!(
                "origin lies in the excluded ball of radius {radius}"
            )),
        }
    } else {
        let mut worst: Option<(Vec<f64>, f64)> = None;
        for r in &plan.r_points {
            for &tau in &plan.tau {
                for &eps in &plan.eps {
                    let val = norm(&spec.eval_flow(&zero_x, r, tau, eps));
                    if val > VALIDATION_TOL && worst.as_ref().is_none_or(|(_, w)| val > *w) {
                        let mut witness = zero_x.clone();
                        witness.extend_from_slice(r);
                        witness.push(tau);
                        witness.push(eps);
                        worst = Some((witness, val));
                    }
                }
            }
        }
        ItemCheck {
            item: "f(0,r,tau,eps) = 0",
            status: status_from(worst),
        }
    };

    let mut worst = None;
    for r in &plan.r_points {
        for v in &plan.v {
            let val = norm(&spec.eval_jump(&zero_x, r, v));
            if val > VALIDATION_TOL && worst.as_ref().is_none_or(|(_, w)| val > *w) {
                let mut witness = zero_x.clone();
                witness.extend_from_slice(r);
                witness.extend_from_slice(v);
                worst = Some((witness, val));
            }
        }
    }
    let jump_vanishes = ItemCheck {
        item: "g(0,r,v) = 0",
        status: status_from(worst),
    };

    let mut outside = None;
    let mut h_bound = 0.0_f64;
    let mut h_finite = true;
    for r in &plan.jump_points {
        for v in &plan.v {
            let h = spec.eval_aux_jump(r, v);
            let mag = norm(&h);
            h_finite &= mag.is_finite();
            h_bound = h_bound.max(mag);
            if outside.is_none() && !spec.in_flow_set(&h) && !spec.in_jump_set(&h) {
                let gap = union_distance(&spec.flow_set, &spec.jump_set, &h);
                let mut witness = r.clone();
                witness.extend_from_slice(v);
                outside = Some((witness, gap));
            }
        }
    }
    let jumps_close = ItemCheck {
        item: "h(r,v) in C ∪ D",
        status: status_from(outside),
    };
    let h_bound_check = ItemCheck {
        item: "|h(r,v)| <= H",
        status: if h_finite {
            ItemStatus::Pass
        } else {
            ItemStatus::Fail {
                witness: Vec::new(),
                value: f64::INFINITY,
            }
        },
    };

    ValidationReport {
        flow_vanishes,
        jump_vanishes,
        jumps_close,
        h_bound,
        h_bound_check,
    }
}

fn status_from(worst: Option<(Vec<f64>, f64)>) -> ItemStatus {
    match worst {
        None => ItemStatus::Pass,
        Some((witness, value)) => ItemStatus::Fail { witness, value },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{jammed_actuator, jammed_es, JamParams};

    fn actuator() -> SystemSpec {
        jammed_actuator(&JamParams::new(1.0, 0.1, 0.01).unwrap()).unwrap()
    }

    #[test]
    fn hybrid_time_sum_cases() {
        assert_eq!(hybrid_time_sum(HybridTime::new(0.0, 0)), 0.0);
        assert_eq!(hybrid_time_sum(HybridTime::new(2.5, 3)), 5.5);
        assert_eq!(hybrid_time_sum(HybridTime::new(1.0, 0)), 1.0);
    }

    #[test]
    fn hybrid_time_ordering() {
        let a = HybridTime::new(1.0, 0);
        let b = HybridTime::new(1.0, 1);
        let c = HybridTime::new(1.5, 0);
        assert!(a < b);
        assert!(c < b);
        // equal t + j: larger t comes later
        assert!(HybridTime::new(0.5, 1) < c);
    }

    #[test]
    fn distance_to_target_cases() {
        let spec = actuator();
        assert_eq!(dist_to_target(&StateVec::scalar(3.0, 0.5), &spec).unwrap(), 3.0);
        assert_eq!(dist_to_target(&StateVec::scalar(0.0, 0.2), &spec).unwrap(), 0.0);
        let d = dist_to_target(&StateVec::scalar(3.0, 2.0), &spec).unwrap();
        assert!((d - 10f64.sqrt()).abs() < 1e-15);
        let bad = StateVec::new(vec![1.0, 2.0], vec![0.0], 0.0);
        assert!(matches!(
            dist_to_target(&bad, &spec),
            Err(ShdsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn actuator_passes_validation() {
        let spec = actuator();
        let report = validate_spec(&spec, &SamplingPlan::for_spec(&spec));
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.h_bound, 0.0);
    }

    #[test]
    fn planted_jump_offset_is_caught() {
        let mut spec = actuator();
        spec.jump = Arc::new(|_x, _r, _v, out| out[0] = 1.0);
        let report = validate_spec(&spec, &SamplingPlan::for_spec(&spec));
        assert!(!report.all_pass());
        match &report.jump_vanishes.status {
            ItemStatus::Fail { witness, value } => {
                assert_eq!(witness[0], 0.0);
                assert_eq!(*value, 1.0);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn es_passes_on_shell() {
        let spec = jammed_es(&JamParams::new(1.0, 0.1, 0.01).unwrap(), 0.1).unwrap();
        let plan = SamplingPlan::for_spec(&spec).excluding_ball(0.1);
        let report = validate_spec(&spec, &plan);
        assert!(report.all_pass(), "{report:?}");
        assert!(matches!(report.flow_vanishes.status, ItemStatus::Skipped(_)));
        // without the exclusion the origin is not an equilibrium
        let full = validate_spec(&spec, &SamplingPlan::for_spec(&spec));
        assert!(!full.flow_vanishes.passed());
    }

    #[test]
    fn escaping_reset_is_caught() {
        let mut spec = actuator();
        spec.aux_jump = Arc::new(|_r, _v, out| out[0] = 5.0);
        let report = validate_spec(&spec, &SamplingPlan::for_spec(&spec));
        assert!(!report.jumps_close.passed());
        assert_eq!(report.h_bound, 5.0);
    }

    #[test]
    fn segment_interpolation() {
        let mut seg = Segment::new(0, 1, 1);
        seg.push(0.0, &StateVec::scalar(0.0, 0.0));
        seg.push(1.0, &StateVec::scalar(2.0, 1.0));
        let mid = seg.interpolate(0.25).unwrap();
        assert_eq!(mid.x, vec![0.5]);
        assert!(seg.interpolate(1.5).is_none());
    }
}
