//! Fixed-step execution of random hybrid solutions.
//!
//! Flows use the classical fourth-order Runge-Kutta scheme on `(x, r)`
//! while the fast clock `tau` is advanced in closed form. Entry into the
//! jump set is located exactly for affine auxiliary dynamics (timers) and
//! the step is clipped to land on it. Jumps take priority on `C ∩ D`.

use crate::model::{HybridArc, HybridTime, JumpRecord, Segment, StateVec, SystemSpec, TimeScale};
use crate::par::{self, Execution};
use crate::{Result, ShdsError};

/// Truncation of the (possibly unbounded) hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub t_max: f64,
    pub j_max: u64,
}

impl Horizon {
    pub fn new(t_max: f64, j_max: u64) -> Result<Self> {
        if !(t_max > 0.0) || j_max == 0 {
            return Err(ShdsError::InvalidParameter(format!(
                "horizon must be positive, got t_max={t_max}, j_max={j_max}"
            )));
        }
        Ok(Horizon { t_max, j_max })
    }

    /// Horizon limited by time only.
    pub fn time(t_max: f64) -> Result<Self> {
        Self::new(t_max, u64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub base_step: f64,
    /// Step cap as a fraction of `eps`.
    pub substep_per_epsilon: f64,
    /// Record every `record_stride`-th flow sample. Segment endpoints and
    /// event instants are always recorded.
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            base_step: 0.01,
            substep_per_epsilon: 0.1,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn with_step(base_step: f64) -> Self {
        IntegratorConfig {
            base_step,
            ..Default::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn effective_step(&self, spec: &SystemSpec) -> f64 {
        match spec.time_scale {
            TimeScale::Fast => self.base_step.min(spec.epsilon * self.substep_per_epsilon),
            TimeScale::Averaged => self.base_step,
        }
    }

    fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let h = self.effective_step(spec);
        if !(h > 0.0 && h.is_finite()) {
            return Err(ShdsError::InvalidParameter(format!(
                "effective step must be positive, got {h}"
            )));
        }
        Ok(())
    }
}

/// Supplies the jump input for the `k`-th jump of a path.
pub trait DrawSource {
    fn draw(&self, jump_index: u64) -> Option<Vec<f64>>;
}

struct SeededDraws<'a> {
    spec: &'a SystemSpec,
    seed: u64,
}

impl DrawSource for SeededDraws<'_> {
    fn draw(&self, jump_index: u64) -> Option<Vec<f64>> {
        Some(self.spec.noise.draw(self.seed, jump_index))
    }
}

/// Replays a fixed list of draws; the path stops when it runs out.
pub struct RecordedDraws<'a>(pub &'a [Vec<f64>]);

impl DrawSource for RecordedDraws<'_> {
    fn draw(&self, jump_index: u64) -> Option<Vec<f64>> {
        self.0.get(jump_index as usize).cloned()
    }
}

/// The same draw at every jump.
pub struct ConstantDraw(pub Vec<f64>);

impl DrawSource for ConstantDraw {
    fn draw(&self, _jump_index: u64) -> Option<Vec<f64>> {
        Some(self.0.clone())
    }
}

struct Scratch {
    kx: [Vec<f64>; 4],
    kr: [Vec<f64>; 4],
    xs: Vec<f64>,
    rs: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, p: usize) -> Self {
        Scratch {
            kx: std::array::from_fn(|_| vec![0.0; n]),
            kr: std::array::from_fn(|_| vec![0.0; p]),
            xs: vec![0.0; n],
            rs: vec![0.0; p],
        }
    }
}

fn tau_rate(spec: &SystemSpec) -> f64 {
    match spec.time_scale {
        TimeScale::Fast => 1.0 / spec.epsilon,
        TimeScale::Averaged => 0.0,
    }
}

/// One RK4 step of `(x, r)`; returns the name of a map that produced a
/// non-finite value.
fn rk4(
    spec: &SystemSpec,
    s: &StateVec,
    dt: f64,
    buf: &mut Scratch,
) -> std::result::Result<(Vec<f64>, Vec<f64>), &'static str> {
    let rate = tau_rate(spec);
    let eps = spec.epsilon;
    let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
    for (k, &(a, c)) in stages.iter().enumerate() {
        if k == 0 {
            buf.xs.copy_from_slice(&s.x);
            buf.rs.copy_from_slice(&s.r);
        } else {
            let (prev_x, prev_r) = (&buf.kx[k - 1], &buf.kr[k - 1]);
            for i in 0..s.x.len() {
                buf.xs[i] = s.x[i] + a * dt * prev_x[i];
            }
            for i in 0..s.r.len() {
                buf.rs[i] = s.r[i] + a * dt * prev_r[i];
            }
        }
        let tau = s.tau + c * dt * rate;
        (spec.flow)(&buf.xs, &buf.rs, tau, eps, &mut buf.kx[k]);
        if !buf.kx[k].iter().all(|v| v.is_finite()) {
            return Err("f");
        }
        (spec.aux_flow)(&buf.rs, &mut buf.kr[k]);
        if !buf.kr[k].iter().all(|v| v.is_finite()) {
            return Err("w");
        }
    }
    let combine = |y: &[f64], k: &[Vec<f64>; 4]| -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &yi)| yi + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect()
    };
    Ok((combine(&s.x, &buf.kx), combine(&s.r, &buf.kr)))
}

/// One fourth-order step of the flow; `tau` advances by exactly `dt / eps`.
pub fn flow_step(s: &StateVec, spec: &SystemSpec, dt: f64) -> Result<StateVec> {
    spec.check_dims(s)?;
    let mut buf = Scratch::new(spec.n, spec.p);
    let (x, r) = rk4(spec, s, dt, &mut buf).map_err(|map| ShdsError::NonFinite { map, t: f64::NAN })?;
    Ok(StateVec {
        x,
        r,
        tau: s.tau + dt * tau_rate(spec),
    })
}

/// Sub-step time at which `r` reaches the jump set during a step of length
/// `dt`, assuming `w(r)` is constant over the step.
pub fn detect_timer_crossing(s: &StateVec, spec: &SystemSpec, dt: f64) -> Option<f64> {
    let mut w = vec![0.0; spec.p];
    (spec.aux_flow)(&s.r, &mut w);
    spec.jump_set.entry_time(&s.r, &w, dt).map(|(t, _)| t)
}

pub fn simulate_path(
    spec: &SystemSpec,
    init: &StateVec,
    seed: u64,
    horizon: Horizon,
    cfg: &IntegratorConfig,
) -> Result<HybridArc> {
    run(spec, init, seed, &SeededDraws { spec, seed }, horizon, cfg)
}

/// Re-runs a path with the given draws in place of the seeded stream.
pub fn replay_path(
    spec: &SystemSpec,
    init: &StateVec,
    seed: u64,
    draws: &dyn DrawSource,
    horizon: Horizon,
    cfg: &IntegratorConfig,
) -> Result<HybridArc> {
    run(spec, init, seed, draws, horizon, cfg)
}

fn run(
    spec: &SystemSpec,
    init: &StateVec,
    seed: u64,
    draws: &dyn DrawSource,
    horizon: Horizon,
    cfg: &IntegratorConfig,
) -> Result<HybridArc> {
    spec.check_dims(init)?;
    cfg.validate(spec)?;
    if !spec.in_flow_set(&init.r) && !spec.in_jump_set(&init.r) {
        return Err(ShdsError::DeadInitialCondition(init.r.clone()));
    }
    let h = cfg.effective_step(spec);
    let t_max = horizon.t_max;
    let coincide = 1e-9 * t_max.max(1.0);
    let rate = tau_rate(spec);
    let stride = cfg.record_stride.max(1);

    let mut buf = Scratch::new(spec.n, spec.p);
    let mut w = vec![0.0; spec.p];
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    let mut state = init.clone();
    let mut t = 0.0_f64;
    let mut j = 0_u64;
    let mut seg = Segment::new(0, spec.n, spec.p);
    seg.push(t, &state);
    let mut recorded = true;
    let mut since_record = 0usize;
    let (mut t_seg0, mut tau_seg0) = (t, state.tau);

    let terminal = loop {
        if spec.in_jump_set(&state.r) {
            if j >= horizon.j_max {
                break crate::model::TerminalReason::JumpLimit;
            }
            let Some(v) = draws.draw(j) else {
                break crate::model::TerminalReason::JumpLimit;
            };
            if !recorded {
                seg.push(t, &state);
            }
            let post = spec.jump_state(&state, &v);
            if !post.x.iter().all(|a| a.is_finite()) {
                return Err(ShdsError::NonFinite { map: "g", t });
            }
            if !post.r.iter().all(|a| a.is_finite()) {
                return Err(ShdsError::NonFinite { map: "h", t });
            }
            jumps.push(JumpRecord {
                time: HybridTime::new(t, j),
                pre: state,
                v,
                post: post.clone(),
            });
            segments.push(std::mem::replace(&mut seg, Segment::new(j + 1, spec.n, spec.p)));
            j += 1;
            state = post;
            seg.push(t, &state);
            recorded = true;
            since_record = 0;
            t_seg0 = t;
            tau_seg0 = state.tau;
            if !spec.in_flow_set(&state.r) && !spec.in_jump_set(&state.r) {
                break crate::model::TerminalReason::LeftSets { r: state.r.clone() };
            }
            continue;
        }
        if !spec.in_flow_set(&state.r) {
            break crate::model::TerminalReason::LeftSets { r: state.r.clone() };
        }
        if t >= t_max {
            break crate::model::TerminalReason::Horizon;
        }

        let mut dt = h;
        let mut lands_on_horizon = false;
        if t + dt >= t_max {
            dt = t_max - t;
            lands_on_horizon = true;
        }
        (spec.aux_flow)(&state.r, &mut w);
        let mut event = None;
        if let Some((s, k)) = spec.jump_set.entry_time(&state.r, &w, dt + coincide) {
            if s <= dt || (lands_on_horizon && s - dt <= coincide) {
                event = Some(k);
                if s < dt {
                    dt = s;
                    lands_on_horizon = t_max - (t + dt) <= coincide;
                }
            }
        }

        let (x_new, mut r_new) = if dt > 0.0 {
            rk4(spec, &state, dt, &mut buf).map_err(|map| ShdsError::NonFinite { map, t })?
        } else {
            (state.x.clone(), state.r.clone())
        };
        if let Some(k) = event {
            spec.jump_set.clamp_into(k, &mut r_new);
        }
        if !spec.in_flow_set(&r_new) && !spec.in_jump_set(&r_new) {
            if !recorded {
                seg.push(t, &state);
            }
            break crate::model::TerminalReason::LeftSets { r: r_new };
        }
        let t_new = if lands_on_horizon { t_max } else { t + dt };
        state = StateVec {
            x: x_new,
            r: r_new,
            tau: tau_seg0 + (t_new - t_seg0) * rate,
        };
        t = t_new;
        since_record += 1;
        if since_record >= stride || event.is_some() || t >= t_max {
            seg.push(t, &state);
            recorded = true;
            since_record = 0;
        } else {
            recorded = false;
        }
    };
    if !recorded {
        seg.push(t, &state);
    }
    segments.push(seg);
    Ok(HybridArc {
        seed,
        segments,
        jumps,
        terminal,
    })
}

pub fn simulate_ensemble(
    spec: &SystemSpec,
    inits: &[StateVec],
    n_paths: usize,
    seed_base: u64,
    horizon: Horizon,
    cfg: &IntegratorConfig,
) -> Result<Vec<HybridArc>> {
    simulate_ensemble_with(Execution::default(), spec, inits, n_paths, seed_base, horizon, cfg)
}

/// Path `i` uses seed `seed_base + i` and initial condition
/// `inits[i % inits.len()]`; it is identical whether run alone or in the
/// ensemble, under either execution strategy.
pub fn simulate_ensemble_with(
    exec: Execution,
    spec: &SystemSpec,
    inits: &[StateVec],
    n_paths: usize,
    seed_base: u64,
    horizon: Horizon,
    cfg: &IntegratorConfig,
) -> Result<Vec<HybridArc>> {
    if n_paths == 0 {
        return Err(ShdsError::InvalidParameter("n_paths must be ≥ 1".into()));
    }
    if inits.is_empty() {
        return Err(ShdsError::InvalidParameter(
            "at least one initial condition is required".into(),
        ));
    }
    par::try_map_range(exec, n_paths, |i| {
        let seed = seed_base.wrapping_add(i as u64);
        simulate_path(spec, &inits[i % inits.len()], seed, horizon, cfg).map_err(|e| {
            ShdsError::Path {
                index: i,
                source: Box::new(e),
            }
        })
    })
}
