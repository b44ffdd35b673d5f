//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use shds::averaging::{build_average_system, estimate_average_map, estimate_gamma, AverageGrid, GammaGrid};
use shds::certificates::{foster_certificate, CertGrid, CertifyOptions, Lyapunov, Quadratic, Scaled};
use shds::par::Execution;
use shds::solver::{simulate_ensemble, simulate_path, Horizon, IntegratorConfig};
use shds::stats::{check_envelope, epsilon_sweep, uges_m_fit, SweepParams};
use shds::systems::{actuator_config, es_config, jammed_actuator, jammed_es, JamParams};
use shds::{HybridTime, JumpNoise, StateVec, SystemSpec};
use shds_cli::{
    cmd_average, cmd_certify, cmd_fig1, cmd_recur, cmd_simulate, cmd_sweep, AverageFlags, CertifyFlags, Common,
    Fig1Flags, RecurFlags, SimulateFlags, SweepFlags,
};

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(&Path) -> Check,
}

const SECTIONS: &str = r#"
[simulate]
n_paths = 10
t_max = 5.0
inits = [{ x = [-2.0], r = [0.0] }, { x = [2.0], r = [0.0] }]

[average]
x_axes = [{ from = -2.0, to = 2.0, count = 9 }]
r_axes = [{ from = 0.0, to = 1.0, count = 3 }]
t_long = 125.66370614359172
tau = { from = 0.0, to = 6.283185307179586, count = 91 }
windows = [1.0, 3.0, 6.283185307179586, 9.0]

[certify]
lyapunov = "quadratic"

[recur]
radius = 0.1
rho = 0.05
ball = 10.0
n_paths = 200
t_max = 10.0

[sweep]
eps = [0.1, 0.05, 0.01]
n_paths = 60
t_max = 6.0
"#;

fn write_config(dir: &Path, name: &str, base: String) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, base + SECTIONS).expect("write config");
    path
}

fn common(config: Option<PathBuf>, out: PathBuf, seed: u64) -> Common {
    Common { config, seed, out }
}

fn jam(p: f64, eps: f64) -> JamParams {
    JamParams::new(1.0, p, eps).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn certificate_exactness(dir: &Path) -> Check {
    let boundary = 2.0 / 9.0;
    let mut lines = Vec::new();
    for p in [0.0, 0.1, 0.2, boundary - 1e-9, boundary, 0.25, 0.3, 1.0] {
        let cfg = write_config(dir, &format!("act_{p}.cfg"), actuator_config(&jam(p, 0.01)));
        let r = cmd_certify(&common(Some(cfg), dir.join(format!("cert_{p}")), 0), &CertifyFlags::default())
            .map_err(|e| format!("{e:#}"))?;
        let c = &r.certificate;
        for (name, got, want) in [("c1", c.c1, 1.0), ("c2", c.c2, 1.0), ("c3", c.c3, 2.0), ("c4", c.c4, 2.0)] {
            ensure((got - want).abs() <= 1e-9, format!("p={p}: {name}={got}, expected {want}"))?;
        }
        ensure((c.c5 - 2.25 * p).abs() <= 1e-12, format!("p={p}: c5={}, expected {}", c.c5, 2.25 * p))?;
        ensure(c.passed() == (p < boundary), format!("p={p}: verdict {:?}, lambda {}", c.verdict, c.lambda))?;
        if p == 0.1 || p == boundary {
            lines.push(format!("p={p:.4}: lambda={:.6} {}", c.lambda, if c.passed() { "pass" } else { "fail" }));
        }
    }
    Ok(lines.join("; "))
}

fn average_map_recovery(_dir: &Path) -> Check {
    let p = jam(0.1, 0.01);
    let grid = AverageGrid {
        x_axes: vec![(0..=16).map(|k| -2.0 + 0.25 * k as f64).collect()],
        r_axes: vec![vec![0.0, 0.5, 1.0]],
    };
    let mut worst = 0.0_f64;
    for spec in [jammed_actuator(&p).unwrap(), jammed_es(&p, 0.1).unwrap()] {
        let est = estimate_average_map(&spec, &grid, 20.0 * TAU).map_err(|e| e.to_string())?;
        for (k, node) in est.table.nodes().iter().enumerate() {
            let err = (est.table.value(k)[0] + node[0]).abs();
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1e-6, format!("max nodal error {worst:e}"))?;
    Ok(format!("max |f_ave + x| = {worst:.2e} on both systems"))
}

fn gamma_oracle(_dir: &Path) -> Check {
    let spec = jammed_actuator(&jam(0.1, 0.01)).unwrap();
    let f_ave = spec.average.clone().unwrap();
    let windows: Vec<f64> = (1..=20).map(|k| 0.6 * k as f64).collect();
    let grid = GammaGrid {
        x: vec![vec![1.0], vec![-2.0]],
        r: vec![vec![0.0]],
        tau: (0..1440).map(|k| k as f64 * TAU / 1440.0).collect(),
        windows: windows.clone(),
    };
    let curve = estimate_gamma(&spec, &f_ave, &grid).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for (t, g) in windows.iter().zip(&curve.values) {
        let oracle = 2.0 * (t / 2.0).sin().abs() / t;
        worst = worst.max((g - oracle).abs());
    }
    ensure(worst <= 1e-4, format!("max deviation from 2|sin(T/2)|/T: {worst:e}"))?;
    let env = curve.envelope();
    ensure(env.windows(2).all(|w| w[1] <= w[0]), "envelope increases")?;
    let periods = GammaGrid {
        windows: vec![TAU, 2.0 * TAU, 3.0 * TAU],
        ..grid
    };
    let at_periods = estimate_gamma(&spec, &f_ave, &periods).map_err(|e| e.to_string())?;
    let top = at_periods.values.iter().fold(0.0_f64, |a, b| a.max(*b));
    ensure(top <= 1e-10, format!("gamma(2 pi k) = {top:e}"))?;
    Ok(format!("max oracle gap {worst:.2e}; max gamma(2 pi k) {top:.1e}"))
}

fn solver_order(_dir: &Path) -> Check {
    let spec = jammed_actuator(&jam(0.1, 0.01)).unwrap();
    let avg = build_average_system(&spec, spec.average.clone().unwrap()).into_system();
    let t_end = 0.9;
    let mut errors = Vec::new();
    for h in [0.1, 0.05, 0.025, 0.0125] {
        let arc = simulate_path(&avg, &StateVec::scalar(2.0, 0.0), 0, Horizon::time(t_end).unwrap(), &IntegratorConfig::with_step(h))
            .map_err(|e| e.to_string())?;
        ensure(arc.jump_count() == 0, "unexpected jump")?;
        errors.push((arc.final_state().x[0] - 2.0 * (-t_end).exp()).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    ensure(ratios.iter().all(|&r| r >= 8.0), format!("error ratios {ratios:?}"))?;

    let eps = 0.01;
    let arc = simulate_path(&spec, &StateVec::scalar(2.0, 0.0), 3, Horizon::time(5.0).unwrap(), &IntegratorConfig::default())
        .map_err(|e| e.to_string())?;
    let mut tau_gap = 0.0_f64;
    for seg in &arc.segments {
        for i in 0..seg.len() {
            tau_gap = tau_gap.max((seg.tau(i) - seg.t(i) / eps).abs());
        }
    }
    ensure(tau_gap <= 1e-10, format!("max |tau - t/eps| = {tau_gap:e}"))?;
    Ok(format!(
        "error ratios {:.1}, {:.1}, {:.1}; max |tau - t/eps| {tau_gap:.1e}",
        ratios[0], ratios[1], ratios[2]
    ))
}

fn trajectory_closeness(_dir: &Path) -> Check {
    let base = jammed_actuator(&jam(0.1, 0.01)).unwrap();
    let avg = build_average_system(&base, base.average.clone().unwrap()).into_system();
    let x0 = StateVec::scalar(2.0, 0.0);
    let horizon = Horizon::time(1.0).unwrap();
    let cfg = IntegratorConfig::default();
    let reference = simulate_path(&avg, &x0, 0, horizon, &cfg).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for eps in [0.1, 0.05, 0.01] {
        let started = Instant::now();
        let arc = simulate_path(&base.with_epsilon(eps), &x0, 0, horizon, &cfg).map_err(|e| e.to_string())?;
        ensure(started.elapsed() < Duration::from_secs(10), format!("eps={eps} took {:?}", started.elapsed()))?;
        let seg = &arc.segments[0];
        let gap = (0..seg.len())
            .map(|i| {
                let other = reference.segments[0].interpolate(seg.t(i)).expect("reference covers [0,1]");
                (seg.x(i)[0] - other.x[0]).abs()
            })
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    ensure(gaps[0] > gaps[1] && gaps[1] > gaps[2], format!("sup gaps {gaps:?}"))?;
    Ok(format!("sup gaps {:.4}, {:.4}, {:.5}", gaps[0], gaps[1], gaps[2]))
}

fn uges_m(_dir: &Path) -> Check {
    let spec = jammed_actuator(&jam(0.1, 0.01)).unwrap();
    let inits = [StateVec::scalar(2.0, 0.0)];
    let horizon = Horizon::time(10.0).unwrap();
    let cfg = IntegratorConfig::default().with_stride(10);
    let fit_arcs = simulate_ensemble(&spec, &inits, 500, 0, horizon, &cfg).map_err(|e| e.to_string())?;
    let check_arcs = simulate_ensemble(&spec, &inits, 500, 1_000_000, horizon, &cfg).map_err(|e| e.to_string())?;
    let grid: Vec<HybridTime> = (0..20)
        .map(|k| {
            let t = 0.25 + 0.5 * k as f64;
            HybridTime::new(t, t.floor() as u64)
        })
        .collect();
    let fit = uges_m_fit(&fit_arcs, &spec, &grid).map_err(|e| e.to_string())?;
    ensure(fit.k2 > 0.0, format!("k2 = {}", fit.k2))?;
    let own = check_envelope(&fit, &fit_arcs, &spec, &grid, 0.0).map_err(|e| e.to_string())?;
    ensure(own.holds, "fitted envelope does not dominate its own ensemble")?;
    let fresh = check_envelope(&fit, &check_arcs, &spec, &grid, 4.0).map_err(|e| e.to_string())?;
    let worst = fresh.excess.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    ensure(fresh.holds, format!("independent ensemble exceeds envelope by {worst}"))?;
    Ok(format!("k1={:.3}, k2={:.3}; independent ensemble max excess {worst:.3e}", fit.k1, fit.k2))
}

fn recurrence(dir: &Path) -> Check {
    let cfg = write_config(dir, "es_recur.cfg", es_config(&jam(0.1, 0.01), 0.1));
    let r = cmd_recur(&common(Some(cfg), dir.join("recur"), 0), &RecurFlags::default()).map_err(|e| format!("{e:#}"))?;
    let rep = &r.report;
    ensure(rep.n_paths == 200, format!("{} paths", rep.n_paths))?;
    ensure(rep.hit_fraction >= 0.95, format!("hit_fraction {}", rep.hit_fraction))?;
    Ok(format!(
        "hit_fraction {} (Wilson [{:.3}, {:.3}]), tau_hat {:?}",
        rep.hit_fraction, rep.wilson.0, rep.wilson.1, rep.tau_hat
    ))
}

fn sweep_params(seed: u64) -> SweepParams {
    SweepParams {
        inits: vec![StateVec::scalar(-2.0, 0.0), StateVec::scalar(2.0, 0.0)],
        n_paths: 200,
        seed_base: seed,
        rho: 0.05,
        ball: 10.0,
        t_max: 10.0,
        radius_min: 1e-4,
        rel_precision: 0.01,
        integrator: IntegratorConfig::default(),
        exec: Execution::default(),
    }
}

fn monotone_radii(label: &str, family: &dyn Fn(f64) -> shds::Result<SystemSpec>) -> Check {
    let params = sweep_params(0);
    let rep = epsilon_sweep(family, &[0.1, 0.05, 0.01], &params).map_err(|e| e.to_string())?;
    let radii: Vec<Option<f64>> = rep.entries.iter().map(|e| e.radius).collect();
    ensure(radii.iter().all(Option::is_some), format!("{label}: uncertified entries {radii:?}"))?;
    let step = 1.0 + params.rel_precision;
    let r: Vec<f64> = radii.into_iter().flatten().collect();
    ensure(
        r.windows(2).all(|w| w[1] <= w[0] * step),
        format!("{label}: radii {r:?} increase as eps decreases"),
    )?;
    Ok(format!("{label} radii {:.3e}, {:.3e}, {:.3e}", r[0], r[1], r[2]))
}

fn phi_monotonicity(_dir: &Path) -> Check {
    let jammed = |e: f64| jammed_es(&jam(0.1, e), 0.1);
    let nominal = |e: f64| -> shds::Result<SystemSpec> {
        let mut s = jammed_es(&jam(0.1, e), 0.1)?;
        s.noise = JumpNoise::finite(vec![(vec![0.25], 1.0)])?;
        Ok(s)
    };
    let a = monotone_radii("jammed", &jammed)?;
    let b = monotone_radii("unjammed", &nominal)?;
    Ok(format!("{a}; {b}"))
}

fn scaling_invariance(_dir: &Path) -> Check {
    let base = Quadratic { scale: 1.0 };
    for p in [0.1, 0.2, 0.3] {
        let spec = jammed_actuator(&jam(p, 0.01)).unwrap();
        let avg = build_average_system(&spec, spec.average.clone().unwrap());
        let grid = CertGrid::log_radial(&avg, 1e-3, 10.0, 41, 11).map_err(|e| e.to_string())?;
        let opts = CertifyOptions::default();
        let reference = foster_certificate(&base, &avg, &grid, &opts).map_err(|e| e.to_string())?;
        for alpha in [0.5, 3.0] {
            let scaled = Scaled { inner: &base as &dyn Lyapunov, alpha };
            let c = foster_certificate(&scaled, &avg, &grid, &opts).map_err(|e| e.to_string())?;
            ensure(
                (c.lambda - reference.lambda).abs() <= 1e-12 && c.verdict == reference.verdict,
                format!("p={p}, alpha={alpha}: lambda {} vs {}", c.lambda, reference.lambda),
            )?;
        }
    }
    Ok("lambda and verdict unchanged for alpha in {0.5, 3}, p in {0.1, 0.2, 0.3}".into())
}

fn read_outputs(paths: &[PathBuf]) -> Vec<(String, Vec<u8>)> {
    paths
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg" || e == "txt"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
        .collect()
}

fn determinism(dir: &Path) -> Check {
    let act = write_config(dir, "det_act.cfg", actuator_config(&jam(0.1, 0.01)));
    let es = write_config(dir, "det_es.cfg", es_config(&jam(0.1, 0.01), 0.1));
    let run = |tag: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = |name: &str| dir.join(format!("det_{tag}_{name}"));
        let mut files = Vec::new();
        let e = |e: anyhow::Error| format!("{e:#}");
        files.extend(read_outputs(&cmd_simulate(&common(Some(act.clone()), out("sim"), 7), &SimulateFlags::default()).map_err(e)?.outputs));
        files.extend(read_outputs(&cmd_average(&common(Some(es.clone()), out("avg"), 7), &AverageFlags::default()).map_err(e)?.outputs));
        files.extend(read_outputs(&cmd_certify(&common(Some(act.clone()), out("cert"), 7), &CertifyFlags::default()).map_err(e)?.outputs));
        let recur = RecurFlags { n_paths: Some(50), ..Default::default() };
        files.extend(read_outputs(&cmd_recur(&common(Some(es.clone()), out("recur"), 7), &recur).map_err(e)?.outputs));
        let sweep = SweepFlags { n_paths: Some(30), ..Default::default() };
        files.extend(read_outputs(&cmd_sweep(&common(Some(es.clone()), out("sweep"), 7), &sweep).map_err(e)?.outputs));
        files.extend(read_outputs(&cmd_fig1(&common(None, out("fig1"), 7), &Fig1Flags::default()).map_err(e)?.outputs));
        Ok(files)
    };
    let first = run("a")?;
    let second = run("b")?;
    ensure(first.len() == second.len() && first.len() >= 8, format!("{} vs {} files", first.len(), second.len()))?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure(a == b, format!("{name} differs between runs"))?;
    }
    Ok(format!("{} CSV/SVG/text outputs byte-identical across 6 commands", first.len()))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "certificate exactness", budget: Duration::from_secs(5), run: certificate_exactness },
        Criterion { id: 2, name: "average-map recovery", budget: Duration::from_secs(10), run: average_map_recovery },
        Criterion { id: 3, name: "gamma-curve oracle", budget: Duration::from_secs(60), run: gamma_oracle },
        Criterion { id: 4, name: "solver order and tau exactness", budget: Duration::from_secs(10), run: solver_order },
        Criterion { id: 5, name: "trajectory closeness", budget: Duration::from_secs(30), run: trajectory_closeness },
        Criterion { id: 6, name: "UGES-M envelope", budget: Duration::from_secs(60), run: uges_m },
        Criterion { id: 7, name: "recurrence to the delta-ball", budget: Duration::from_secs(60), run: recurrence },
        Criterion { id: 8, name: "phi(eps) monotonicity", budget: Duration::from_secs(300), run: phi_monotonicity },
        Criterion { id: 9, name: "certificate scaling invariance", budget: Duration::from_secs(30), run: scaling_invariance },
        Criterion { id: 10, name: "determinism", budget: Duration::from_secs(120), run: determinism },
    ];
    let dir = tempfile::tempdir().expect("tempdir");
    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let result = (c.run)(dir.path());
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over budget {:?}", c.budget)),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {} ({:.2}s): {detail}", c.id, c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {} ({:.2}s): {why}", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
