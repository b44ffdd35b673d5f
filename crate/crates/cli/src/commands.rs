//! One function per subcommand. Each returns its report and writes files
//! through [`RunWriter`].

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::Serialize;

use shds::averaging::{
    build_average_system, check_jacobian_average, estimate_average_map, estimate_gamma, AverageGrid, AverageSpec,
    GammaCurve, GammaGrid, JacobianCurve, FD_STEP,
};
use shds::certificates::{foster_certificate, CertGrid, CertifyOptions, FosterCertificate, Witness};
use shds::config::Config;
use shds::par::Execution;
use shds::solver::{replay_path, simulate_ensemble, ConstantDraw, Horizon, IntegratorConfig};
use shds::stats::{epsilon_sweep, recurrence_estimate, RecurrenceReport, SweepParams, SweepReport};
use shds::systems::{es_config, jammed_es, JamParams};
use shds::{HybridArc, StateVec, SystemSpec};

use crate::output::{num, opt_num, vec_cell, Csv, RunWriter};
use crate::svg::{fig1_svg, Fig1Style};
use crate::{Common, Outcome};

struct Loaded {
    bytes: Vec<u8>,
    config: Config,
}

fn load(common: &Common) -> anyhow::Result<Loaded> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config <path> is required for this command"))?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let config = Config::parse(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(Loaded { bytes, config })
}

fn system(cfg: &Config) -> anyhow::Result<SystemSpec> {
    cfg.system().context("building system from config")
}

fn inits(cfg: &Config) -> anyhow::Result<Vec<StateVec>> {
    let inits = cfg.simulate.initial_states();
    if inits.is_empty() {
        bail!("config has no initial conditions ([simulate] inits)");
    }
    Ok(inits)
}

fn state_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn write_paths(csv: &mut Csv, id: usize, extra: &[&str], arc: &HybridArc) {
    let row = |csv: &mut Csv, seg: &shds::Segment, i: usize, event: &str| {
        let mut cells: Vec<String> = vec![id.to_string()];
        cells.extend(extra.iter().map(|s| s.to_string()));
        cells.push(num(seg.t(i)));
        cells.push(seg.j.to_string());
        cells.extend(seg.x(i).iter().chain(seg.r(i)).map(|v| num(*v)));
        cells.push(num(seg.tau(i)));
        cells.push(event.to_string());
        csv.row(cells);
    };
    let last_seg = arc.segments.len() - 1;
    for (k, seg) in arc.segments.iter().enumerate() {
        for i in 0..seg.len() {
            let is_jump = k > 0 && i == 0;
            let is_last = k == last_seg && i + 1 == seg.len();
            match (is_jump, is_last) {
                (true, true) => {
                    row(csv, seg, i, "jump");
                    row(csv, seg, i, "terminal");
                }
                (true, false) => row(csv, seg, i, "jump"),
                (false, true) => row(csv, seg, i, "terminal"),
                (false, false) => row(csv, seg, i, "flow"),
            }
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateFlags {
    /// Overrides `[simulate] n_paths`.
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Overrides `[simulate] t_max`.
    #[arg(long)]
    pub t_max: Option<f64>,
}

pub struct SimulateReport {
    pub arcs: Vec<HybridArc>,
    pub outputs: Vec<PathBuf>,
}

pub fn cmd_simulate(common: &Common, flags: &SimulateFlags) -> anyhow::Result<SimulateReport> {
    let Loaded { bytes, config } = load(common)?;
    let spec = system(&config)?;
    let sim = &config.simulate;
    let horizon = sim.horizon(flags.t_max.unwrap_or(sim.t_max))?;
    let n_paths = flags.n_paths.unwrap_or(sim.n_paths);
    let arcs = simulate_ensemble(&spec, &inits(&config)?, n_paths, common.seed, horizon, &sim.integrator())?;

    let mut header = vec!["path_id".to_string(), "t".into(), "j".into()];
    header.extend(state_header("x", spec.n));
    header.extend(state_header("r", spec.p));
    header.extend(["tau".into(), "event".into()]);
    let mut csv = Csv::new(&header);
    for (id, arc) in arcs.iter().enumerate() {
        write_paths(&mut csv, id, &[], arc);
    }
    let mut w = RunWriter::new("simulate", &common.out, &bytes, common.seed);
    w.add("paths.csv", csv.into_string());
    Ok(SimulateReport {
        arcs,
        outputs: w.finish()?,
    })
}

#[derive(Debug, Clone, Default, Args)]
pub struct AverageFlags {
    /// Overrides `[average] t_long`.
    #[arg(long)]
    pub t_long: Option<f64>,
}

pub struct AverageReport {
    pub gamma: GammaCurve,
    pub jacobian: JacobianCurve,
    pub closed_form_deviation: Option<f64>,
    pub nodal_residual: f64,
    pub midpoint_residual: f64,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct AverageSummary {
    system: String,
    t_long: f64,
    closed_form_deviation: Option<f64>,
    nodal_residual: f64,
    midpoint_residual: f64,
    gamma_points: usize,
    jacobian_exceeds_state_envelope: Vec<f64>,
}

pub fn cmd_average(common: &Common, flags: &AverageFlags) -> anyhow::Result<AverageReport> {
    let Loaded { bytes, config } = load(common)?;
    let spec = system(&config)?;
    let section = config
        .average
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [average] section"))?;
    let t_long = flags.t_long.unwrap_or(section.t_long);
    let grid = AverageGrid {
        x_axes: section.x_axes.iter().map(|a| a.values()).collect(),
        r_axes: section.r_axes.iter().map(|a| a.values()).collect(),
    };
    let est = estimate_average_map(&spec, &grid, t_long)?;
    let f_ave = est.average.f_ave.clone();
    let (xs, rs) = section.gamma_points();
    let gamma_grid = GammaGrid {
        x: xs,
        r: rs,
        tau: section.tau.values(),
        windows: section.windows.values(),
    };
    let gamma = estimate_gamma(&spec, &f_ave, &gamma_grid)?;
    let jacobian = check_jacobian_average(&spec, &f_ave, &gamma_grid, FD_STEP, Some(&gamma))?;

    let mut csv = Csv::new(&[
        "T",
        "gamma_raw",
        "gamma_envelope",
        "jac_gamma_raw",
        "witness_x",
        "witness_r",
        "witness_tau",
    ]);
    let env = gamma.envelope();
    for k in 0..gamma.windows.len() {
        let w = &gamma.witnesses[k];
        csv.row([
            num(gamma.windows[k]),
            num(gamma.values[k]),
            num(env[k]),
            num(jacobian.curve.values[k]),
            vec_cell(&w.x),
            vec_cell(&w.r),
            num(w.tau0),
        ]);
    }
    let mut header = state_header("x", spec.n);
    header.extend(state_header("r", spec.p));
    header.extend(state_header("f_ave", spec.n));
    let mut table = Csv::new(&header);
    for (k, node) in est.table.nodes().iter().enumerate() {
        table.row(node.iter().chain(est.table.value(k)).map(|v| num(*v)));
    }
    let summary = AverageSummary {
        system: spec.name.clone(),
        t_long,
        closed_form_deviation: est.closed_form_deviation,
        nodal_residual: est.nodal_residual,
        midpoint_residual: est.midpoint_residual,
        gamma_points: gamma_grid.x.len() * gamma_grid.r.len() * gamma_grid.tau.len(),
        jacobian_exceeds_state_envelope: gamma
            .windows
            .iter()
            .zip(&jacobian.exceeds_state_envelope)
            .filter(|(_, &e)| e)
            .map(|(w, _)| *w)
            .collect(),
    };
    let mut w = RunWriter::new("average", &common.out, &bytes, common.seed);
    w.add("gamma.csv", csv.into_string());
    w.add("average_map.csv", table.into_string());
    w.add_json("average_report.json", &summary)?;
    Ok(AverageReport {
        gamma,
        jacobian,
        closed_form_deviation: est.closed_form_deviation,
        nodal_residual: est.nodal_residual,
        midpoint_residual: est.midpoint_residual,
        outputs: w.finish()?,
    })
}

#[derive(Debug, Clone, Default, Args)]
pub struct CertifyFlags {
    /// Tightens the gate to `λ < 1/2 − margin`.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Also check flow decrease on the jump set.
    #[arg(long)]
    pub flow_on_jump_set: bool,
}

pub struct CertifyReport {
    pub certificate: FosterCertificate,
    pub outcome: Outcome,
    pub text: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct WitnessOut {
    x: Vec<f64>,
    r: Vec<f64>,
    value: f64,
}

impl From<&Witness> for WitnessOut {
    fn from(w: &Witness) -> Self {
        WitnessOut {
            x: w.x.clone(),
            r: w.r.clone(),
            value: w.value,
        }
    }
}

#[derive(Serialize)]
struct CertificateOut {
    system: String,
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    lambda: f64,
    threshold: f64,
    verdict: &'static str,
    failures: Vec<String>,
    grid: String,
    grid_points: usize,
    witness_c1: Option<WitnessOut>,
    witness_c2: Option<WitnessOut>,
    witness_c3: Option<WitnessOut>,
    witness_c4: Option<WitnessOut>,
    witness_c5: Option<WitnessOut>,
    c5_std_error: Option<f64>,
}

fn average_system(spec: &SystemSpec, cfg: &Config) -> anyhow::Result<AverageSpec> {
    if let Some(f) = &spec.average {
        return Ok(build_average_system(spec, f.clone()));
    }
    let section = cfg
        .average
        .as_ref()
        .ok_or_else(|| anyhow!("no closed-form average map and no [average] section to estimate one"))?;
    let grid = AverageGrid {
        x_axes: section.x_axes.iter().map(|a| a.values()).collect(),
        r_axes: section.r_axes.iter().map(|a| a.values()).collect(),
    };
    Ok(estimate_average_map(spec, &grid, section.t_long)?.average)
}

pub fn cmd_certify(common: &Common, flags: &CertifyFlags) -> anyhow::Result<CertifyReport> {
    let Loaded { bytes, config } = load(common)?;
    let spec = system(&config)?;
    let v = config.lyapunov()?;
    let section = config.certify.clone().expect("lyapunov() checked the section");
    let avg = average_system(&spec, &config)?;
    let grid = CertGrid::log_radial(&avg, section.radius_min, section.radius_max, section.n_radial, section.n_r)?;
    let opts = CertifyOptions {
        margin: flags.margin.unwrap_or(section.margin),
        mc_samples: section.mc_samples,
        flow_on_jump_set: flags.flow_on_jump_set || section.flow_on_jump_set,
    };
    let cert = foster_certificate(v.as_ref(), &avg, &grid, &opts)?;
    let outcome = if cert.passed() { Outcome::Pass } else { Outcome::Fail };

    let mut text = String::new();
    writeln!(text, "system: {}", spec.name)?;
    writeln!(text, "grid: {} ({} points)", cert.grid, cert.grid_points)?;
    for (name, value) in [("c1", cert.c1), ("c2", cert.c2), ("c3", cert.c3), ("c4", cert.c4), ("c5", cert.c5)] {
        writeln!(text, "{name} = {value}")?;
    }
    writeln!(text, "lambda = {} (threshold {})", cert.lambda, 0.5 - opts.margin)?;
    for f in &cert.failures {
        writeln!(text, "failure: {f}")?;
    }
    let w = |o: &Option<Witness>| o.as_ref().map(WitnessOut::from);
    for (name, o) in [
        ("c1", &cert.sandwich.c1_witness),
        ("c2", &cert.sandwich.c2_witness),
        ("c4", &cert.flow.witness),
        ("c5", &cert.jump.witness),
    ] {
        if let Some(wt) = o {
            writeln!(text, "witness {name}: x={:?} r={:?} ratio={}", wt.x, wt.r, wt.value)?;
        }
    }
    writeln!(
        text,
        "verdict: {} (grid-certified, not a proof)",
        if cert.passed() { "pass" } else { "fail" }
    )?;

    let out = CertificateOut {
        system: spec.name.clone(),
        c1: cert.c1,
        c2: cert.c2,
        c3: cert.c3,
        c4: cert.c4,
        c5: cert.c5,
        lambda: cert.lambda,
        threshold: 0.5 - opts.margin,
        verdict: if cert.passed() { "pass" } else { "fail" },
        failures: cert.failures.clone(),
        grid: cert.grid.clone(),
        grid_points: cert.grid_points,
        witness_c1: w(&cert.sandwich.c1_witness),
        witness_c2: w(&cert.sandwich.c2_witness),
        witness_c3: w(&cert.gradient.witness),
        witness_c4: w(&cert.flow.witness),
        witness_c5: w(&cert.jump.witness),
        c5_std_error: cert.jump.std_error,
    };
    let mut writer = RunWriter::new("certify", &common.out, &bytes, common.seed);
    writer.add("certificate.txt", text.clone());
    writer.add_json("certificate.json", &out)?;
    Ok(CertifyReport {
        certificate: cert,
        outcome,
        text,
        outputs: writer.finish()?,
    })
}

#[derive(Debug, Clone, Default, Args)]
pub struct RecurFlags {
    /// Radius of the open ball around the target set.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Allowed failure probability.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Bound `R` on initial distances.
    #[arg(long = "ball", alias = "R")]
    pub ball: Option<f64>,
    /// Time horizon.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
}

pub struct RecurReport {
    pub report: RecurrenceReport,
    pub outcome: Outcome,
    pub text: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RecurSummary {
    radius: f64,
    rho: f64,
    ball: f64,
    horizon: f64,
    n_paths: usize,
    hits: usize,
    stopped: usize,
    hit_fraction: f64,
    wilson_low: f64,
    wilson_high: f64,
    tau_hat: Option<f64>,
    certified: bool,
    terminal_counts: std::collections::BTreeMap<&'static str, usize>,
}

pub fn cmd_recur(common: &Common, flags: &RecurFlags) -> anyhow::Result<RecurReport> {
    let Loaded { bytes, config } = load(common)?;
    let spec = system(&config)?;
    let s = &config.recur;
    let radius = flags.radius.unwrap_or(s.radius);
    let rho = flags.rho.unwrap_or(s.rho);
    let ball = flags.ball.unwrap_or(s.ball);
    let t_max = flags.t_max.unwrap_or(s.t_max);
    let n_paths = flags.n_paths.unwrap_or(s.n_paths);
    if !(t_max >= 0.0) {
        bail!("horizon must be nonnegative, got {t_max}");
    }
    let horizon = config.simulate.horizon(if t_max > 0.0 { t_max } else { 1e-12 })?;
    let arcs = simulate_ensemble(&spec, &inits(&config)?, n_paths, common.seed, horizon, &config.simulate.integrator())?;
    let report = recurrence_estimate(&arcs, &spec, radius, rho, ball, t_max)?;
    let outcome = if report.certified() { Outcome::Pass } else { Outcome::Fail };

    let mut csv = Csv::new(&[
        "path_id", "seed", "hit_t", "hit_j", "hit_sum", "terminal", "final_t", "final_j", "success",
    ]);
    for (id, p) in report.paths.iter().enumerate() {
        csv.row([
            id.to_string(),
            p.seed.to_string(),
            opt_num(p.hit.map(|h| h.t)),
            p.hit.map(|h| h.j.to_string()).unwrap_or_default(),
            opt_num(p.hit.map(|h| h.sum())),
            p.terminal.to_string(),
            num(p.final_time.t),
            p.final_time.j.to_string(),
            p.success.to_string(),
        ]);
    }
    let summary = RecurSummary {
        radius,
        rho,
        ball,
        horizon: t_max,
        n_paths: report.n_paths,
        hits: report.hits,
        stopped: report.stopped,
        hit_fraction: report.hit_fraction,
        wilson_low: report.wilson.0,
        wilson_high: report.wilson.1,
        tau_hat: report.tau_hat,
        certified: report.certified(),
        terminal_counts: report.terminal_counts.clone(),
    };
    let mut text = String::new();
    writeln!(text, "radius = {radius}, rho = {rho}, R = {ball}, horizon = {t_max}")?;
    writeln!(
        text,
        "hit_fraction = {} ({} hits, {} stopped, {} paths), 95% Wilson [{}, {}]",
        report.hit_fraction, report.hits, report.stopped, report.n_paths, report.wilson.0, report.wilson.1
    )?;
    match report.tau_hat {
        Some(t) => writeln!(text, "tau_hat = {t}")?,
        None => writeln!(text, "not certified: hit_fraction below {}", 1.0 - rho)?,
    }
    let mut w = RunWriter::new("recur", &common.out, &bytes, common.seed);
    w.add("recur_paths.csv", csv.into_string());
    w.add_json("recur_summary.json", &summary)?;
    Ok(RecurReport {
        report,
        outcome,
        text,
        outputs: w.finish()?,
    })
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepFlags {
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
}

pub struct SweepOutput {
    pub report: SweepReport,
    pub outcome: Outcome,
    pub text: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SweepSummary {
    eps: Vec<f64>,
    certified_radius: Vec<Option<f64>>,
    monotone: bool,
    monotonicity_violations: Vec<(usize, usize)>,
    largest_certified_eps: Option<f64>,
    rho: f64,
    ball: f64,
    t_max: f64,
    rel_precision: f64,
}

pub fn cmd_sweep(common: &Common, flags: &SweepFlags) -> anyhow::Result<SweepOutput> {
    let Loaded { bytes, config } = load(common)?;
    let spec = system(&config)?;
    let s = &config.sweep;
    let eps = flags.eps.clone().unwrap_or_else(|| s.eps.clone());
    let params = SweepParams {
        inits: inits(&config)?,
        n_paths: flags.n_paths.unwrap_or(s.n_paths),
        seed_base: common.seed,
        rho: s.rho,
        ball: s.ball,
        t_max: flags.t_max.unwrap_or(s.t_max),
        radius_min: s.radius_min,
        rel_precision: s.rel_precision,
        integrator: config.simulate.integrator(),
        exec: Execution::default(),
    };
    let family = |e: f64| -> shds::Result<SystemSpec> {
        let sys = spec.with_epsilon(e);
        sys.validate()?;
        Ok(sys)
    };
    let report = epsilon_sweep(&family, &eps, &params)?;
    let outcome = if report.monotonicity_violations.is_empty() { Outcome::Pass } else { Outcome::Fail };

    let mut csv = Csv::new(&["epsilon", "certified_radius", "hit_fraction", "n_paths", "status"]);
    let mut text = String::new();
    for e in &report.entries {
        let status = if e.radius.is_some() { "certified" } else { "not certified at horizon" };
        csv.row([
            num(e.epsilon),
            opt_num(e.radius),
            num(e.hit_fraction),
            params.n_paths.to_string(),
            status.to_string(),
        ]);
        writeln!(text, "eps = {}: radius = {} ({status})", e.epsilon, opt_num(e.radius))?;
    }
    writeln!(
        text,
        "monotone in eps: {}",
        if report.monotonicity_violations.is_empty() { "yes" } else { "no" }
    )?;
    let summary = SweepSummary {
        eps: eps.clone(),
        certified_radius: report.entries.iter().map(|e| e.radius).collect(),
        monotone: report.monotonicity_violations.is_empty(),
        monotonicity_violations: report.monotonicity_violations.clone(),
        largest_certified_eps: report.largest_certified_eps,
        rho: params.rho,
        ball: params.ball,
        t_max: params.t_max,
        rel_precision: params.rel_precision,
    };
    let mut w = RunWriter::new("sweep", &common.out, &bytes, common.seed);
    w.add("sweep.csv", csv.into_string());
    w.add_json("sweep_summary.json", &summary)?;
    Ok(SweepOutput {
        report,
        outcome,
        text,
        outputs: w.finish()?,
    })
}

#[derive(Debug, Clone, Args)]
pub struct Fig1Flags {
    #[arg(long, default_value_t = 100)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    /// Reset period `T`.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Probability of `v = 0.75`.
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Keep every `stride`-th flow sample.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Draw applied at every jump of the nominal path.
    #[arg(long, default_value_t = 0.25)]
    pub nominal_draw: f64,
}

impl Default for Fig1Flags {
    fn default() -> Self {
        Fig1Flags {
            n_paths: 100,
            t_max: 10.0,
            period: 1.0,
            p: 0.1,
            epsilon: 0.01,
            delta: 0.1,
            stride: 10,
            nominal_draw: 0.25,
        }
    }
}

pub struct Fig1Report {
    pub jammed: Vec<HybridArc>,
    pub nominal: HybridArc,
    pub outputs: Vec<PathBuf>,
}

pub fn cmd_fig1(common: &Common, flags: &Fig1Flags) -> anyhow::Result<Fig1Report> {
    let params = JamParams::new(flags.period, flags.p, flags.epsilon)?;
    let (bytes, spec) = match &common.config {
        Some(_) => {
            let Loaded { bytes, config } = load(common)?;
            (bytes, system(&config)?)
        }
        None => (es_config(&params, flags.delta).into_bytes(), jammed_es(&params, flags.delta)?),
    };
    if spec.n != 1 || spec.p != 1 {
        bail!("fig1 needs a scalar state and a scalar timer, got n={}, p={}", spec.n, spec.p);
    }
    let inits = [StateVec::scalar(-2.0, 0.0), StateVec::scalar(2.0, 0.0)];
    let horizon = Horizon::time(flags.t_max)?;
    let cfg = IntegratorConfig::default().with_stride(flags.stride.max(1));
    let jammed = simulate_ensemble(&spec, &inits, flags.n_paths, common.seed, horizon, &cfg)?;
    let nominal = replay_path(&spec, &inits[1], common.seed, &ConstantDraw(vec![flags.nominal_draw]), horizon, &cfg)?;

    let mut header = vec!["path_id".to_string(), "kind".into(), "t".into(), "j".into()];
    header.extend(state_header("x", 1));
    header.extend(state_header("r", 1));
    header.extend(["tau".into(), "event".into()]);
    let mut csv = Csv::new(&header);
    for (id, arc) in jammed.iter().enumerate() {
        write_paths(&mut csv, id, &["jammed"], arc);
    }
    write_paths(&mut csv, jammed.len(), &["nominal"], &nominal);
    let svg = fig1_svg(&jammed, &nominal, &Fig1Style { delta: flags.delta, t_max: flags.t_max });

    let mut w = RunWriter::new("fig1", &common.out, &bytes, common.seed);
    w.add("fig1_paths.csv", csv.into_string());
    w.add("fig1.svg", svg);
    Ok(Fig1Report {
        jammed,
        nominal,
        outputs: w.finish()?,
    })
}

