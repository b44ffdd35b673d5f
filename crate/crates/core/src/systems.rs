//! Built-in systems: a periodically jammed linear actuator and a
//! regularized extremum-seeking loop, both reset by a timer and jammed by
//! `x⁺ = (0.75 + v) x` with `v ∈ {−0.75, 0.75}`, `P(v = 0.75) = p`.

use std::sync::Arc;

use crate::config::Config;
use crate::model::{SystemSpec, TimeScale};
use crate::noise::JumpNoise;
use crate::sets::SetDescriptor;
use crate::{Result, ShdsError};

/// Jamming value taken with probability `p`.
pub const JAM_HIGH: f64 = 0.75;
pub const JAM_LOW: f64 = -0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JamParams {
    /// Reset period `T`.
    pub period: f64,
    /// Probability that the jam doubles as an amplification (`v = 0.75`).
    pub p: f64,
    pub epsilon: f64,
}

impl JamParams {
    pub fn new(period: f64, p: f64, epsilon: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(ShdsError::InvalidParameter(format!("period must be positive, got {period}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ShdsError::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
        }
        if !(epsilon > 0.0) {
            return Err(ShdsError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(JamParams { period, p, epsilon })
    }
}

fn jammed(name: &str, params: &JamParams, flow: crate::model::FlowMap) -> Result<SystemSpec> {
    let spec = SystemSpec {
        name: name.to_string(),
        n: 1,
        p: 1,
        flow,
        aux_flow: Arc::new(|_r, out| out[0] = 1.0),
        jump: Arc::new(|x, _r, v, out| out[0] = (0.75 + v[0]) * x[0]),
        aux_jump: Arc::new(|_r, _v, out| out[0] = 0.0),
        flow_set: SetDescriptor::interval(0.0, params.period),
        jump_set: SetDescriptor::point(params.period),
        noise: JumpNoise::bernoulli(params.p, JAM_HIGH, JAM_LOW)?,
        epsilon: params.epsilon,
        time_scale: TimeScale::Fast,
        average: Some(Arc::new(|x, _r, out| out[0] = -x[0])),
    };
    spec.validate()?;
    Ok(spec)
}

/// `ẋ = −x(1 + sin τ)`, average `−x`.
pub fn jammed_actuator(params: &JamParams) -> Result<SystemSpec> {
    jammed(
        "jammed-actuator",
        params,
        Arc::new(|x, _r, tau, _eps, out| out[0] = -x[0] * (1.0 + tau.sin())),
    )
}

/// `ẋ = −x(1 + sin τ) + u`. The origin is not an equilibrium for `u ≠ 0`,
/// so this variant is for simulation only.
pub fn jammed_actuator_with_input(params: &JamParams, u: f64) -> Result<SystemSpec> {
    let mut spec = jammed(
        "jammed-actuator-input",
        params,
        Arc::new(move |x, _r, tau, _eps, out| out[0] = -x[0] * (1.0 + tau.sin()) + u),
    )?;
    spec.average = Some(Arc::new(move |x, _r, out| out[0] = -x[0] + u));
    Ok(spec)
}

/// Extremum-seeking field for the cost `y²` with dither amplitude
/// `max(δ, |x|)`: outside `δ𝔹` the closed form
/// `−x sin τ − 2x sin²τ − |x| sin³τ`, inside `−(1/δ)(x + δ sin τ)² sin τ`.
pub fn es_field(x: f64, tau: f64, delta: f64) -> f64 {
    let s = tau.sin();
    if x.abs() >= delta {
        -x * s - 2.0 * x * s * s - x.abs() * s * s * s
    } else {
        let y = x + delta * s;
        -(1.0 / delta) * (y * y) * s
    }
}

pub fn jammed_es(params: &JamParams, delta: f64) -> Result<SystemSpec> {
    if !(delta > 0.0) {
        return Err(ShdsError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    jammed(
        "jammed-es",
        params,
        Arc::new(move |x, _r, tau, _eps, out| out[0] = es_field(x[0], tau, delta)),
    )
}

fn jam_config(name: &str, params: &JamParams, extra_params: &str, flow: &str) -> String {
    format!(
        r#"[system]
name = "{name}"
n = 1
p = 1
epsilon = {eps}
flow = ["{flow}"]
aux_flow = ["1"]
jump = ["(0.75 + v_1) * x_1"]
aux_jump = ["0"]
average = ["-x_1"]
flow_set = {{ kind = "box", bounds = [[0.0, {period}]] }}
jump_set = {{ kind = "singleton", point = [{period}] }}

[params]
T = {period}
{extra_params}
[noise]
kind = "finite"
support = [{{ value = [0.75], prob = {p} }}, {{ value = [-0.75], prob = {q} }}]
"#,
        eps = params.epsilon,
        period = params.period,
        p = params.p,
        q = 1.0 - params.p,
    )
}

/// Config document equivalent to [`jammed_actuator`].
pub fn actuator_config(params: &JamParams) -> String {
    jam_config("jammed-actuator", params, "", "-x_1 * (1 + sin(tau))")
}

/// Config document equivalent to [`jammed_es`].
pub fn es_config(params: &JamParams, delta: f64) -> String {
    jam_config(
        "jammed-es",
        params,
        &format!("delta = {delta}\n"),
        "if(abs(x_1) >= delta, -x_1 * sin(tau) - 2 * x_1 * sin(tau) * sin(tau) - abs(x_1) * sin(tau) * sin(tau) * sin(tau), -(1 / delta) * ((x_1 + delta * sin(tau)) * (x_1 + delta * sin(tau))) * sin(tau))",
    )
}

/// Builds a system from a config document.
pub fn load_system(text: &str) -> Result<SystemSpec> {
    Config::parse(text)?.system()
}
