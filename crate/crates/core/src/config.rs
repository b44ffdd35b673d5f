//! TOML configuration documents describing a system and analysis runs.
//!
//! ```toml
//! [system]
//! name = "jammed-actuator"
//! n = 1
//! p = 1
//! epsilon = 0.01
//! flow = ["-x_1 * (1 + sin(tau))"]
//! aux_flow = ["1"]
//! jump = ["(0.75 + v_1) * x_1"]
//! aux_jump = ["0"]
//! average = ["-x_1"]
//! flow_set = { kind = "box", bounds = [[0.0, 1.0]] }
//! jump_set = { kind = "singleton", point = [1.0] }
//!
//! [noise]
//! kind = "finite"
//! support = [{ value = [0.75], prob = 0.1 }, { value = [-0.75], prob = 0.9 }]
//! ```
//!
//! Optional sections: `[params]` (named constants usable in expressions),
//! `[simulate]`, `[average]`, `[certify]`, `[recur]`, `[sweep]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, Normal, Uniform};
use serde::Deserialize;
use toml::Spanned;

use crate::expr::{self, Env, Expr, Symbols};
use crate::model::{StateVec, SystemSpec, TimeScale};
use crate::noise::JumpNoise;
use crate::sets::{cartesian, linspace, SetDescriptor};
use crate::solver::{Horizon, IntegratorConfig};
use crate::{Result, ShdsError};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub noise: NoiseSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    pub average: Option<AverageSection>,
    pub certify: Option<CertifySection>,
    #[serde(default)]
    pub recur: RecurSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(skip)]
    source: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub epsilon: f64,
    pub flow: Vec<Spanned<String>>,
    pub aux_flow: Vec<Spanned<String>>,
    pub jump: Vec<Spanned<String>>,
    pub aux_jump: Vec<Spanned<String>>,
    pub average: Option<Vec<Spanned<String>>>,
    pub flow_set: SetDescriptor,
    pub jump_set: SetDescriptor,
}

fn default_name() -> String {
    "system".into()
}

#[derive(Debug, Clone, Deserialize)]
pub struct SupportPoint {
    pub value: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSection {
    Finite { support: Vec<SupportPoint> },
    Uniform { low: Vec<f64>, high: Vec<f64> },
    Normal { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitPoint {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_paths: usize,
    pub inits: Vec<InitPoint>,
    pub t_max: f64,
    pub j_max: Option<u64>,
    pub base_step: f64,
    pub substep_per_epsilon: f64,
    pub record_stride: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let cfg = IntegratorConfig::default();
        SimulateSection {
            n_paths: 10,
            inits: Vec::new(),
            t_max: 5.0,
            j_max: None,
            base_step: cfg.base_step,
            substep_per_epsilon: cfg.substep_per_epsilon,
            record_stride: cfg.record_stride,
        }
    }
}

impl SimulateSection {
    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            base_step: self.base_step,
            substep_per_epsilon: self.substep_per_epsilon,
            record_stride: self.record_stride.max(1),
        }
    }

    pub fn horizon(&self, t_max: f64) -> Result<Horizon> {
        Horizon::new(t_max, self.j_max.unwrap_or(u64::MAX))
    }

    pub fn initial_states(&self) -> Vec<StateVec> {
        self.inits
            .iter()
            .map(|p| StateVec::new(p.x.clone(), p.r.clone(), p.tau))
            .collect()
    }
}

/// Either an explicit list or `{ from, to, count }`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::List(v) => v.clone(),
            Axis::Range { from, to, count } => linspace(*from, *to, *count),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageSection {
    pub x_axes: Vec<Axis>,
    pub r_axes: Vec<Axis>,
    #[serde(default = "default_t_long")]
    pub t_long: f64,
    #[serde(default = "default_tau_axis")]
    pub tau: Axis,
    pub windows: Axis,
}

fn default_t_long() -> f64 {
    40.0 * PI
}

fn default_tau_axis() -> Axis {
    Axis::Range {
        from: 0.0,
        to: 2.0 * PI,
        count: 721,
    }
}

impl AverageSection {
    /// Nonzero `x` nodes and all `r` nodes of the tabulation grid.
    pub fn gamma_points(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs: Vec<Vec<f64>> = cartesian(&self.x_axes.iter().map(Axis::values).collect::<Vec<_>>())
            .into_iter()
            .filter(|x| x.iter().any(|&v| v != 0.0))
            .collect();
        let rs = cartesian(&self.r_axes.iter().map(Axis::values).collect::<Vec<_>>());
        (xs, rs)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    /// `"quadratic"` for `scale * |x|^2`, otherwise an expression in `x_i`, `r_i`.
    pub lyapunov: Spanned<String>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "default_r_min")]
    pub radius_min: f64,
    #[serde(default = "default_r_max")]
    pub radius_max: f64,
    #[serde(default = "default_n_radial")]
    pub n_radial: usize,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub flow_on_jump_set: bool,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

fn one() -> f64 {
    1.0
}
fn default_r_min() -> f64 {
    1e-3
}
fn default_r_max() -> f64 {
    10.0
}
fn default_n_radial() -> usize {
    41
}
fn default_n_r() -> usize {
    11
}
fn default_mc() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurSection {
    pub radius: f64,
    pub rho: f64,
    pub ball: f64,
    pub n_paths: usize,
    pub t_max: f64,
}

impl Default for RecurSection {
    fn default() -> Self {
        RecurSection {
            radius: 0.1,
            rho: 0.05,
            ball: 10.0,
            n_paths: 200,
            t_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub n_paths: usize,
    pub rho: f64,
    pub ball: f64,
    pub t_max: f64,
    pub radius_min: f64,
    pub rel_precision: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps: Vec::new(),
            n_paths: 200,
            rho: 0.05,
            ball: 10.0,
            t_max: 10.0,
            radius_min: 1e-4,
            rel_precision: 0.01,
        }
    }
}

/// 1-based line and column of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, col)
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            ShdsError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.source = text.to_string();
        Ok(cfg)
    }

    pub fn symbols(&self) -> Result<Symbols> {
        Ok(Symbols {
            n: self.system.n,
            p: self.system.p,
            m: self.noise()?.dim(),
            params: self.params.clone(),
        })
    }

    /// Compiles an expression list, mapping errors to document positions.
    pub fn compile(&self, what: &str, srcs: &[Spanned<String>], dim: usize, symbols: &Symbols) -> Result<Vec<Expr>> {
        if srcs.len() != dim {
            return Err(ShdsError::DimensionMismatch {
                what: what.into(),
                expected: dim,
                got: srcs.len(),
            });
        }
        srcs.iter()
            .map(|s| {
                expr::parse(s.get_ref(), symbols).map_err(|e| {
                    let start = s.span().start;
                    let quote = if self.source[start..].starts_with("\"\"\"")
                        || self.source[start..].starts_with("'''")
                    {
                        3
                    } else {
                        1
                    };
                    let (line, column) = line_col(&self.source, start + quote + e.offset);
                    match e.unknown {
                        Some(name) => ShdsError::UnknownSymbol { name, line, column },
                        None => ShdsError::Parse {
                            line,
                            column,
                            message: format!("{what}: {}", e.message),
                        },
                    }
                })
            })
            .collect()
    }

    pub fn noise(&self) -> Result<JumpNoise> {
        match &self.noise {
            NoiseSection::Finite { support } => JumpNoise::finite(
                support.iter().map(|s| (s.value.clone(), s.prob)).collect(),
            ),
            NoiseSection::Uniform { low, high } => {
                if low.len() != high.len() || low.iter().zip(high).any(|(a, b)| !(a < b)) {
                    return Err(ShdsError::Config("uniform noise needs low < high per component".into()));
                }
                let dists: Vec<Uniform<f64>> = low.iter().zip(high).map(|(&a, &b)| Uniform::new(a, b)).collect();
                Ok(JumpNoise::sampler(
                    low.len(),
                    Arc::new(move |rng| dists.iter().map(|d| d.sample(rng)).collect()),
                ))
            }
            NoiseSection::Normal { mean, std } => {
                if mean.len() != std.len() {
                    return Err(ShdsError::Config("normal noise needs matching mean/std".into()));
                }
                let dists = mean
                    .iter()
                    .zip(std)
                    .map(|(&m, &s)| Normal::new(m, s).map_err(|e| ShdsError::Config(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(JumpNoise::sampler(
                    mean.len(),
                    Arc::new(move |rng| dists.iter().map(|d| d.sample(rng)).collect()),
                ))
            }
        }
    }

    /// Builds the system with expression-defined maps.
    pub fn system(&self) -> Result<SystemSpec> {
        let sys = &self.system;
        let symbols = self.symbols()?;
        let (n, p) = (sys.n, sys.p);
        let f = Arc::new(self.compile("flow", &sys.flow, n, &symbols)?);
        let w = Arc::new(self.compile("aux_flow", &sys.aux_flow, p, &symbols)?);
        let g = Arc::new(self.compile("jump", &sys.jump, n, &symbols)?);
        let h = Arc::new(self.compile("aux_jump", &sys.aux_jump, p, &symbols)?);
        let average = match &sys.average {
            Some(srcs) => {
                let a = Arc::new(self.compile("average", srcs, n, &symbols)?);
                for e in a.iter() {
                    if e.uses(expr::Slot::Tau) || e.uses(expr::Slot::Eps) {
                        return Err(ShdsError::Config(
                            "the average map may not depend on tau or eps".into(),
                        ));
                    }
                }
                let map: crate::model::AverageMap = Arc::new(move |x, r, out| {
                    let env = Env { x, r, v: &[], tau: 0.0, eps: 0.0 };
                    for (o, e) in out.iter_mut().zip(a.iter()) {
                        *o = e.eval(&env);
                    }
                });
                Some(map)
            }
            None => None,
        };
        for (what, es) in [("aux_flow", &w), ("aux_jump", &h)] {
            if es.iter().any(|e| (0..n).any(|i| e.uses(expr::Slot::X(i)))) {
                return Err(ShdsError::Config(format!("{what} may not depend on x")));
            }
        }
        let spec = SystemSpec {
            name: sys.name.clone(),
            n,
            p,
            flow: Arc::new(move |x, r, tau, eps, out| {
                let env = Env { x, r, v: &[], tau, eps };
                for (o, e) in out.iter_mut().zip(f.iter()) {
                    *o = e.eval(&env);
                }
            }),
            aux_flow: Arc::new(move |r, out| {
                let env = Env { x: &[], r, v: &[], tau: 0.0, eps: 0.0 };
                for (o, e) in out.iter_mut().zip(w.iter()) {
                    *o = e.eval(&env);
                }
            }),
            jump: Arc::new(move |x, r, v, out| {
                let env = Env { x, r, v, tau: 0.0, eps: 0.0 };
                for (o, e) in out.iter_mut().zip(g.iter()) {
                    *o = e.eval(&env);
                }
            }),
            aux_jump: Arc::new(move |r, v, out| {
                let env = Env { x: &[], r, v, tau: 0.0, eps: 0.0 };
                for (o, e) in out.iter_mut().zip(h.iter()) {
                    *o = e.eval(&env);
                }
            }),
            flow_set: sys.flow_set.clone(),
            jump_set: sys.jump_set.clone(),
            noise: self.noise()?,
            epsilon: sys.epsilon,
            time_scale: TimeScale::Fast,
            average,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lyapunov candidate from `[certify]`.
    pub fn lyapunov(&self) -> Result<Box<dyn crate::certificates::Lyapunov>> {
        let cert = self
            .certify
            .as_ref()
            .ok_or_else(|| ShdsError::Config("missing [certify] section with a `lyapunov` entry".into()))?;
        if cert.lyapunov.get_ref().trim() == "quadratic" {
            return Ok(Box::new(crate::certificates::Quadratic { scale: cert.scale }));
        }
        let symbols = Symbols {
            m: 0,
            ..self.symbols()?
        };
        let e = self
            .compile("lyapunov", std::slice::from_ref(&cert.lyapunov), 1, &symbols)?
            .remove(0);
        let scale = cert.scale;
        Ok(Box::new(crate::certificates::FnLyapunov::new(move |x, r| {
            scale * e.eval(&Env { x, r, v: &[], tau: 0.0, eps: 0.0 })
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[system]
n = 1
p = 1
epsilon = 0.01
flow = ["-x_1 * (1 + sin(tau))"]
aux_flow = ["1"]
jump = ["(0.75 + v_1) * x_1"]
aux_jump = ["0"]
flow_set = { kind = "box", bounds = [[0.0, 1.0]] }
jump_set = { kind = "singleton", point = [1.0] }

[noise]
kind = "finite"
support = [{ value = [0.75], prob = 0.1 }, { value = [-0.75], prob = 0.9 }]
"#;

    #[test]
    fn parses_minimal_document() {
        let cfg = Config::parse(DOC).unwrap();
        let spec = cfg.system().unwrap();
        assert_eq!((spec.n, spec.p, spec.m()), (1, 1, 1));
        assert_eq!(spec.eval_flow(&[2.0], &[0.0], 0.0, 0.01), vec![-2.0]);
        assert_eq!(cfg.simulate.n_paths, 10);
        assert!(cfg.certify.is_none());
    }

    #[test]
    fn unknown_symbol_reports_position() {
        let doc = DOC.replace("-x_1 * (1 + sin(tau))", "-x_1 * y");
        let err = Config::parse(&doc).unwrap().system().unwrap_err();
        match err {
            ShdsError::UnknownSymbol { name, line, column } => {
                assert_eq!(name, "y");
                assert_eq!(line, 6);
                let text_line = doc.lines().nth(line - 1).unwrap();
                assert_eq!(&text_line[column - 1..column], "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_probabilities_are_rejected() {
        let doc = DOC.replace("prob = 0.1 }", "prob = 0.6 }").replace("prob = 0.9", "prob = 0.5");
        let err = Config::parse(&doc).unwrap().system().unwrap_err();
        assert_eq!(err.to_string(), "probabilities sum to 1.1");
    }

    #[test]
    fn toml_errors_have_line_and_column() {
        let err = Config::parse("[system]\nn = \n").unwrap_err();
        assert!(matches!(err, ShdsError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn dimension_mismatch_in_maps() {
        let doc = DOC.replace(r#"aux_flow = ["1"]"#, r#"aux_flow = ["1", "2"]"#);
        let err = Config::parse(&doc).unwrap().system().unwrap_err();
        assert!(matches!(err, ShdsError::DimensionMismatch { .. }));
    }

    #[test]
    fn missing_certify_section() {
        let cfg = Config::parse(DOC).unwrap();
        assert!(matches!(cfg.lyapunov(), Err(ShdsError::Config(_))));
    }

    #[test]
    fn axis_forms() {
        assert_eq!(Axis::Range { from: 0.0, to: 1.0, count: 3 }.values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(Axis::List(vec![2.0]).values(), vec![2.0]);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
