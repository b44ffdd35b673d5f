//! Window averages of the flow map, the convergence function, the
//! Jacobian-average check, Lipschitz estimates and the average system.
//!
//! All sup/max quantities here are maxima over finite grids ("grid
//! certified"); they are lower bounds for the corresponding global
//! constants.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::model::{AverageMap, AuxFlowMap, AuxJumpMap, JumpMap, StateVec, SystemSpec, TimeScale};
use crate::noise::JumpNoise;
use crate::par::{self, Execution};
use crate::sets::{cartesian, SetDescriptor};
use crate::{Result, ShdsError};

/// Minimum Simpson panel density, per `2π` of `tau`.
pub const PANELS_PER_PERIOD: f64 = 40.0;
const MIN_PANELS: usize = 32;

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Simpson panel count for a window of length `window`.
pub fn panels_for(window: f64) -> usize {
    ((PANELS_PER_PERIOD * window / (2.0 * PI)).ceil() as usize).max(MIN_PANELS)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `(1/T) ∫_{tau0}^{tau0+T} f(x, r, s, 0) ds` by composite Simpson with
/// `panels` panels (two sub-intervals each).
pub fn window_average(
    spec: &SystemSpec,
    x: &[f64],
    r: &[f64],
    tau0: f64,
    window: f64,
    panels: usize,
) -> Result<Vec<f64>> {
    if !(window > 0.0) {
        return Err(ShdsError::InvalidParameter(format!(
            "window length must be positive, got {window}"
        )));
    }
    if panels < 2 {
        return Err(ShdsError::InvalidParameter(format!(
            "need at least 2 quadrature panels, got {panels}"
        )));
    }
    let intervals = 2 * panels;
    let h = window / intervals as f64;
    let mut acc = vec![0.0; spec.n];
    let mut val = vec![0.0; spec.n];
    for i in 0..=intervals {
        let s = tau0 + i as f64 * h;
        (spec.flow)(x, r, s, 0.0, &mut val);
        if !val.iter().all(|v| v.is_finite()) {
            return Err(ShdsError::NonFinite { map: "f", t: s });
        }
        let weight = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        for (a, v) in acc.iter_mut().zip(&val) {
            *a += weight * v;
        }
    }
    Ok(acc.into_iter().map(|a| a * h / 3.0 / window).collect())
}

/// Average system: flow `(f_ave(x̂, r̂), w(r̂))`, jumps reused verbatim.
#[derive(Clone)]
pub struct AverageSpec {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub f_ave: AverageMap,
    pub aux_flow: AuxFlowMap,
    pub jump: JumpMap,
    pub aux_jump: AuxJumpMap,
    pub flow_set: SetDescriptor,
    pub jump_set: SetDescriptor,
    pub noise: JumpNoise,
}

impl std::fmt::Debug for AverageSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AverageSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("flow_set", &self.flow_set)
            .field("jump_set", &self.jump_set)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

impl AverageSpec {
    /// `F_ave(z)`, the full flow `(f_ave, w)`.
    pub fn eval_flow(&self, x: &[f64], r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n + self.p];
        let (fx, fr) = out.split_at_mut(self.n);
        (self.f_ave)(x, r, fx);
        (self.aux_flow)(r, fr);
        out
    }

    /// `G_ave(z, v)` as `(x̂⁺, r̂⁺)`.
    pub fn eval_jump(&self, x: &[f64], r: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.n];
        let mut hr = vec![0.0; self.p];
        (self.jump)(x, r, v, &mut gx);
        (self.aux_jump)(r, v, &mut hr);
        (gx, hr)
    }

    /// `|z|_A` with `A = {0} x (C ∪ D)`.
    pub fn target_distance(&self, x: &[f64], r: &[f64]) -> f64 {
        let dr = crate::sets::union_distance(&self.flow_set, &self.jump_set, r);
        (x.iter().map(|v| v * v).sum::<f64>() + dr * dr).sqrt()
    }

    /// The average system as a simulatable spec with a frozen clock.
    pub fn into_system(self) -> SystemSpec {
        let f_ave = self.f_ave.clone();
        SystemSpec {
            name: format!("{} (average)", self.name),
            n: self.n,
            p: self.p,
            flow: Arc::new(move |x, r, _tau, _eps, out| f_ave(x, r, out)),
            aux_flow: self.aux_flow,
            jump: self.jump,
            aux_jump: self.aux_jump,
            flow_set: self.flow_set,
            jump_set: self.jump_set,
            noise: self.noise,
            epsilon: 1.0,
            time_scale: TimeScale::Averaged,
            average: Some(self.f_ave),
        }
    }
}

/// Builds the average system from `spec` and an average map.
pub fn build_average_system(spec: &SystemSpec, f_ave: AverageMap) -> AverageSpec {
    AverageSpec {
        name: spec.name.clone(),
        n: spec.n,
        p: spec.p,
        f_ave,
        aux_flow: spec.aux_flow.clone(),
        jump: spec.jump.clone(),
        aux_jump: spec.aux_jump.clone(),
        flow_set: spec.flow_set.clone(),
        jump_set: spec.jump_set.clone(),
        noise: spec.noise.clone(),
    }
}

/// Nodal table with multilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub axes: Vec<Vec<f64>>,
    pub out_dim: usize,
    values: Vec<f64>,
}

impl GridTable {
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        cartesian(&self.axes)
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.out_dim..(node + 1) * self.out_dim]
    }

    /// Multilinear interpolation; linear extrapolation outside the grid.
    pub fn interpolate(&self, point: &[f64]) -> Vec<f64> {
        let d = self.axes.len();
        let mut lower = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for (axis, &p) in self.axes.iter().zip(point) {
            if axis.len() == 1 {
                lower.push(0);
                frac.push(0.0);
                continue;
            }
            let k = axis.partition_point(|&a| a <= p).saturating_sub(1).min(axis.len() - 2);
            lower.push(k);
            frac.push((p - axis[k]) / (axis[k + 1] - axis[k]));
        }
        let mut out = vec![0.0; self.out_dim];
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut index = 0;
            for a in 0..d {
                let upper = (corner >> a) & 1 == 1 && self.axes[a].len() > 1;
                if (corner >> a) & 1 == 1 && self.axes[a].len() == 1 {
                    weight = 0.0;
                    break;
                }
                weight *= if upper { frac[a] } else { 1.0 - frac[a] };
                index = index * self.axes[a].len() + lower[a] + usize::from(upper);
            }
            if weight != 0.0 {
                for (o, v) in out.iter_mut().zip(self.value(index)) {
                    *o += weight * v;
                }
            }
        }
        out
    }
}

/// Axes of the tabulation grid for [`estimate_average_map`].
#[derive(Debug, Clone)]
pub struct AverageGrid {
    /// One axis per component of `x`.
    pub x_axes: Vec<Vec<f64>>,
    /// One axis per component of `r`.
    pub r_axes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AverageMapEstimate {
    pub average: AverageSpec,
    pub table: GridTable,
    /// Max nodal deviation from the registered closed form, if any.
    pub closed_form_deviation: Option<f64>,
    /// Max change of the nodal averages under a shift of the window start.
    pub nodal_residual: f64,
    /// Max gap between interpolant and direct averages at cell midpoints.
    pub midpoint_residual: f64,
}

/// Tabulates window averages over `T_long` and wraps them as an average
/// system. A registered closed-form average takes precedence; the table is
/// then only used to check it.
pub fn estimate_average_map(
    spec: &SystemSpec,
    grid: &AverageGrid,
    t_long: f64,
) -> Result<AverageMapEstimate> {
    if grid.x_axes.len() != spec.n || grid.r_axes.len() != spec.p {
        return Err(ShdsError::DimensionMismatch {
            what: "average grid axes".into(),
            expected: spec.n + spec.p,
            got: grid.x_axes.len() + grid.r_axes.len(),
        });
    }
    let axes: Vec<Vec<f64>> = grid.x_axes.iter().chain(&grid.r_axes).cloned().collect();
    if axes.iter().any(|a| a.is_empty() || a.windows(2).any(|w| w[0] >= w[1])) {
        return Err(ShdsError::InvalidParameter(
            "grid axes must be non-empty and strictly increasing".into(),
        ));
    }
    let panels = panels_for(t_long);
    let nodes = cartesian(&axes);
    let split = |z: &[f64]| (z[..spec.n].to_vec(), z[spec.n..].to_vec());

    let tabulated = par::try_map_slice(&nodes, |z| {
        let (x, r) = split(z);
        let a = window_average(spec, &x, &r, 0.0, t_long, panels)?;
        let b = window_average(spec, &x, &r, 1.0, t_long, panels)?;
        let shift = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        Ok((a, shift))
    })?;
    let nodal_residual = tabulated.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    let table = GridTable {
        axes: axes.clone(),
        out_dim: spec.n,
        values: tabulated.iter().flat_map(|(a, _)| a.iter().copied()).collect(),
    };
    let scale = table.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mid_axes: Vec<Vec<f64>> = axes
        .iter()
        .map(|a| {
            if a.len() == 1 {
                a.clone()
            } else {
                a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            }
        })
        .collect();
    let mids = cartesian(&mid_axes);
    let gaps = par::try_map_slice(&mids, |z| {
        let (x, r) = split(z);
        let direct = window_average(spec, &x, &r, 0.0, t_long, panels)?;
        let interp = table.interpolate(z);
        Ok(direct.iter().zip(&interp).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
    })?;
    let midpoint_residual = gaps.into_iter().fold(0.0, f64::max);
    let floor = 1e-9 * (1.0 + scale);
    if midpoint_residual > 10.0 * nodal_residual.max(floor) {
        return Err(ShdsError::GridTooCoarse {
            midpoint: midpoint_residual,
            nodal: nodal_residual,
        });
    }

    let (f_ave, closed_form_deviation): (AverageMap, Option<f64>) = match &spec.average {
        Some(closed) => {
            let mut dev = 0.0_f64;
            let mut out = vec![0.0; spec.n];
            for (k, z) in nodes.iter().enumerate() {
                let (x, r) = split(z);
                closed(&x, &r, &mut out);
                for (o, t) in out.iter().zip(table.value(k)) {
                    dev = dev.max((o - t).abs());
                }
            }
            (closed.clone(), Some(dev))
        }
        None => {
            let interp = table.clone();
            let n = spec.n;
            let map: AverageMap = Arc::new(move |x, r, out| {
                let mut z = x.to_vec();
                z.extend_from_slice(r);
                out[..n].copy_from_slice(&interp.interpolate(&z));
            });
            (map, None)
        }
    };

    Ok(AverageMapEstimate {
        average: build_average_system(spec, f_ave),
        table,
        closed_form_deviation,
        nodal_residual,
        midpoint_residual,
    })
}

/// Sample points for convergence-function estimates.
#[derive(Debug, Clone)]
pub struct GammaGrid {
    pub x: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub windows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaWitness {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub tau0: f64,
}

/// Grid-certified convergence function.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurve {
    pub windows: Vec<f64>,
    /// Raw per-window maxima.
    pub values: Vec<f64>,
    pub witnesses: Vec<GammaWitness>,
}

impl GammaCurve {
    /// Least nonincreasing majorant of the raw values.
    pub fn envelope(&self) -> Vec<f64> {
        let mut env = self.values.clone();
        for k in (0..env.len().saturating_sub(1)).rev() {
            env[k] = env[k].max(env[k + 1]);
        }
        env
    }
}

/// Max over grid points in canonical order; the first maximiser wins ties.
fn reduce_max(values: &[f64], per_window: usize) -> Vec<(f64, usize)> {
    values
        .chunks(per_window)
        .map(|chunk| {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, &v) in chunk.iter().enumerate() {
                if v > best.0 {
                    best = (v, i);
                }
            }
            best
        })
        .collect()
}

struct PointIndex<'a> {
    grid: &'a GammaGrid,
}

impl<'a> PointIndex<'a> {
    fn per_window(&self) -> usize {
        self.grid.x.len() * self.grid.r.len() * self.grid.tau.len()
    }

    fn split(&self, k: usize) -> (usize, &'a [f64], &'a [f64], f64) {
        let per = self.per_window();
        let (w, rest) = (k / per, k % per);
        let nt = self.grid.tau.len();
        let nr = self.grid.r.len();
        let (xi, ri, ti) = (rest / (nr * nt), (rest / nt) % nr, rest % nt);
        (w, &self.grid.x[xi], &self.grid.r[ri], self.grid.tau[ti])
    }
}

fn check_gamma_grid(spec: &SystemSpec, grid: &GammaGrid) -> Result<()> {
    if grid.x.iter().any(|x| norm(x) == 0.0) {
        return Err(ShdsError::ZeroInGrid);
    }
    for x in &grid.x {
        if x.len() != spec.n {
            return Err(ShdsError::DimensionMismatch {
                what: "x grid point".into(),
                expected: spec.n,
                got: x.len(),
            });
        }
    }
    for r in &grid.r {
        if r.len() != spec.p {
            return Err(ShdsError::DimensionMismatch {
                what: "r grid point".into(),
                expected: spec.p,
                got: r.len(),
            });
        }
    }
    if grid.windows.iter().any(|&t| !(t > 0.0)) || grid.tau.is_empty() || grid.r.is_empty() || grid.x.is_empty() {
        return Err(ShdsError::InvalidParameter(
            "gamma grid needs positive windows and non-empty x, r, tau axes".into(),
        ));
    }
    Ok(())
}

fn assemble_curve(grid: &GammaGrid, values: &[f64]) -> GammaCurve {
    let index = PointIndex { grid };
    let per = index.per_window();
    let best = reduce_max(values, per);
    let witnesses = best
        .iter()
        .enumerate()
        .map(|(w, &(_, i))| {
            let (_, x, r, tau0) = index.split(w * per + i);
            GammaWitness {
                x: x.to_vec(),
                r: r.to_vec(),
                tau0,
            }
        })
        .collect();
    GammaCurve {
        windows: grid.windows.clone(),
        values: best.iter().map(|b| b.0).collect(),
        witnesses,
    }
}

/// `γ(T) = max |window_average − f_ave| / |x|` over the grid, per window.
pub fn estimate_gamma(spec: &SystemSpec, f_ave: &AverageMap, grid: &GammaGrid) -> Result<GammaCurve> {
    estimate_gamma_with(Execution::default(), spec, f_ave, grid)
}

pub fn estimate_gamma_with(
    exec: Execution,
    spec: &SystemSpec,
    f_ave: &AverageMap,
    grid: &GammaGrid,
) -> Result<GammaCurve> {
    check_gamma_grid(spec, grid)?;
    let index = PointIndex { grid };
    let total = index.per_window() * grid.windows.len();
    let values = par::try_map_range(exec, total, |k| {
        let (w, x, r, tau0) = index.split(k);
        let window = grid.windows[w];
        let avg = window_average(spec, x, r, tau0, window, panels_for(window))?;
        let mut fa = vec![0.0; spec.n];
        f_ave(x, r, &mut fa);
        let diff: Vec<f64> = avg.iter().zip(&fa).map(|(a, b)| a - b).collect();
        Ok(norm(&diff) / norm(x))
    })?;
    Ok(assemble_curve(grid, &values))
}

/// Jacobian-residual curve next to the state-residual envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCurve {
    /// Frobenius norm of the window-averaged Jacobian of `d`, unnormalized.
    pub curve: GammaCurve,
    /// The same maxima divided by `|x|` at the witness.
    pub normalized: Vec<f64>,
    /// Windows where the Jacobian residual exceeds the state-residual envelope.
    pub exceeds_state_envelope: Vec<bool>,
}

/// Window average of the `(x, r)`-Jacobian of `d = f(·,·,τ,0) − f_ave`, by
/// central differences with step `fd_step · max(1, |z_k|)`.
pub fn check_jacobian_average(
    spec: &SystemSpec,
    f_ave: &AverageMap,
    grid: &GammaGrid,
    fd_step: f64,
    state_gamma: Option<&GammaCurve>,
) -> Result<JacobianCurve> {
    check_gamma_grid(spec, grid)?;
    let index = PointIndex { grid };
    let total = index.per_window() * grid.windows.len();
    let (n, p) = (spec.n, spec.p);
    let values = par::try_map_range(Execution::default(), total, |k| {
        let (w, x, r, tau0) = index.split(k);
        let window = grid.windows[w];
        let panels = panels_for(window);
        let mut z: Vec<f64> = x.iter().chain(r).copied().collect();
        let mut frob = 0.0;
        let mut fa_plus = vec![0.0; n];
        let mut fa_minus = vec![0.0; n];
        for col in 0..n + p {
            let h = fd_step * z[col].abs().max(1.0);
            let orig = z[col];
            z[col] = orig + h;
            let plus = window_average(spec, &z[..n], &z[n..], tau0, window, panels)?;
            f_ave(&z[..n], &z[n..], &mut fa_plus);
            z[col] = orig - h;
            let minus = window_average(spec, &z[..n], &z[n..], tau0, window, panels)?;
            f_ave(&z[..n], &z[n..], &mut fa_minus);
            z[col] = orig;
            for i in 0..n {
                let entry = ((plus[i] - fa_plus[i]) - (minus[i] - fa_minus[i])) / (2.0 * h);
                frob += entry * entry;
            }
        }
        Ok(frob.sqrt())
    })?;
    let curve = assemble_curve(grid, &values);
    let normalized = curve
        .values
        .iter()
        .zip(&curve.witnesses)
        .map(|(v, w)| v / norm(&w.x))
        .collect();
    let exceeds_state_envelope = match state_gamma {
        Some(g) => {
            let env = g.envelope();
            curve
                .values
                .iter()
                .zip(&env)
                .map(|(v, e)| *v > *e + 1e-9)
                .collect()
        }
        None => vec![false; curve.values.len()],
    };
    Ok(JacobianCurve {
        curve,
        normalized,
        exceeds_state_envelope,
    })
}

/// Sample points for Lipschitz estimates.
#[derive(Debug, Clone)]
pub struct LipschitzGrid {
    pub x: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub samples: usize,
    /// The two arguments realising the max.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

impl LipschitzEstimate {
    fn offer(&mut self, q: f64, a: &[f64], b: &[f64]) {
        self.samples += 1;
        if (q > self.value || self.witness.is_none())
            && q >= self.value {
                self.value = q;
                self.witness = Some((a.to_vec(), b.to_vec()));
            }
    }

    fn merge(&mut self, other: LipschitzEstimate) {
        self.samples += other.samples;
        if other.value > self.value || (self.witness.is_none() && other.witness.is_some()) {
            self.value = other.value;
            self.witness = other.witness;
        }
    }
}

/// Max difference quotients; each is a lower bound on the true constant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LipschitzEstimates {
    pub l_x: LipschitzEstimate,
    pub l_eps: LipschitzEstimate,
    pub l_g: LipschitzEstimate,
    pub l_ave: LipschitzEstimate,
}

pub fn estimate_lipschitz(
    spec: &SystemSpec,
    f_ave: &AverageMap,
    grid: &LipschitzGrid,
) -> Result<LipschitzEstimates> {
    let distinct = {
        let mut xs = grid.x.clone();
        xs.dedup();
        xs.len()
    };
    if distinct < 2 {
        return Err(ShdsError::InvalidParameter(
            "Lipschitz estimates need at least two distinct x values".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..grid.x.len())
        .flat_map(|i| (i + 1..grid.x.len()).map(move |k| (i, k)))
        .filter(|&(i, k)| grid.x[i] != grid.x[k])
        .collect();
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };

    let per_r = par::map_slice(Execution::default(), &grid.r, |r| {
        let mut est = LipschitzEstimates::default();
        for &(i, k) in &pairs {
            let (x1, x2) = (&grid.x[i], &grid.x[k]);
            let dx = diff(x1, x2);
            for &tau in &grid.tau {
                for &eps in &grid.eps {
                    let q = diff(&spec.eval_flow(x1, r, tau, eps), &spec.eval_flow(x2, r, tau, eps)) / dx;
                    est.l_x.offer(q, x1, x2);
                }
            }
            for v in &grid.v {
                let q = diff(&spec.eval_jump(x1, r, v), &spec.eval_jump(x2, r, v)) / dx;
                est.l_g.offer(q, x1, x2);
            }
            let (mut a, mut b) = (vec![0.0; spec.n], vec![0.0; spec.n]);
            f_ave(x1, r, &mut a);
            f_ave(x2, r, &mut b);
            est.l_ave.offer(diff(&a, &b) / dx, x1, x2);
        }
        for x in grid.x.iter().filter(|x| norm(x) > 0.0) {
            for (a, &e1) in grid.eps.iter().enumerate() {
                for &e2 in &grid.eps[a + 1..] {
                    if e1 == e2 {
                        continue;
                    }
                    for &tau in &grid.tau {
                        let q = diff(&spec.eval_flow(x, r, tau, e1), &spec.eval_flow(x, r, tau, e2))
                            / (norm(x) * (e1 - e2).abs());
                        est.l_eps.offer(q, &[e1], &[e2]);
                    }
                }
            }
        }
        est
    });
    let mut total = LipschitzEstimates::default();
    for est in per_r {
        total.l_x.merge(est.l_x);
        total.l_eps.merge(est.l_eps);
        total.l_g.merge(est.l_g);
        total.l_ave.merge(est.l_ave);
    }
    Ok(total)
}

/// Evaluates the average flow along a state; convenience for tests and
/// reports.
pub fn average_flow_at(avg: &AverageSpec, s: &StateVec) -> Vec<f64> {
    avg.eval_flow(&s.x, &s.r)
}
