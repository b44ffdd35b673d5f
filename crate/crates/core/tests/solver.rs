use shds::averaging::build_average_system;
use shds::solver::{replay_path, simulate_path, Horizon, IntegratorConfig, RecordedDraws};
use shds::systems::{jammed_actuator, jammed_es, JamParams};
use shds::{HybridArc, StateVec, SystemSpec};

fn actuator(p: f64, eps: f64) -> SystemSpec {
    jammed_actuator(&JamParams::new(1.0, p, eps).unwrap()).unwrap()
}

fn jump_free(mut spec: SystemSpec) -> SystemSpec {
    spec.flow_set = shds::SetDescriptor::interval(0.0, 1e6);
    spec.jump_set = shds::SetDescriptor::point(1e6);
    spec
}

fn average_system() -> SystemSpec {
    let s = actuator(0.1, 0.01);
    build_average_system(&s, s.average.clone().unwrap()).into_system()
}

fn sup_gap(a: &HybridArc, b: &HybridArc) -> f64 {
    let seg = &a.segments[0];
    (0..seg.len())
        .map(|i| {
            let other = b.segments[0].interpolate(seg.t(i)).unwrap();
            (seg.x(i)[0] - other.x[0]).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn average_flow_converges_at_fourth_order() {
    let spec = jump_free(average_system());
    let mut errors = Vec::new();
    for h in [0.2, 0.1, 0.05, 0.025] {
        let arc = simulate_path(&spec, &StateVec::scalar(2.0, 0.0), 0, Horizon::time(2.0).unwrap(), &IntegratorConfig::with_step(h)).unwrap();
        let end = arc.final_state();
        assert!((arc.final_time().t - 2.0).abs() < 1e-12);
        errors.push((end.x[0] - 2.0 * (-2.0f64).exp()).abs());
    }
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 8.0, "{errors:?}");
    }
}

#[test]
fn tau_advances_as_t_over_eps() {
    for eps in [0.1, 0.01, 0.003] {
        let spec = jump_free(actuator(0.1, eps));
        let arc = simulate_path(&spec, &StateVec::scalar(1.0, 0.0), 0, Horizon::time(1.5).unwrap(), &IntegratorConfig::default()).unwrap();
        let seg = &arc.segments[0];
        for i in 0..seg.len() {
            assert!((seg.tau(i) - seg.t(i) / eps).abs() < 1e-10 * (1.0 + seg.t(i) / eps));
        }
    }
}

#[test]
fn trajectories_approach_average_as_eps_shrinks() {
    let avg = jump_free(average_system());
    let x0 = StateVec::scalar(2.0, 0.0);
    let h = Horizon::time(1.0).unwrap();
    let cfg = IntegratorConfig::default();
    let reference = simulate_path(&avg, &x0, 0, h, &cfg).unwrap();
    let gaps: Vec<f64> = [0.1, 0.05, 0.01]
        .iter()
        .map(|&eps| sup_gap(&simulate_path(&jump_free(actuator(0.1, eps)), &x0, 0, h, &cfg).unwrap(), &reference))
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn one_jump_per_period() {
    for k in 1..=6u64 {
        let spec = actuator(0.5, 0.05);
        let arc = simulate_path(&spec, &StateVec::scalar(1.0, 0.0), 11, Horizon::time(k as f64).unwrap(), &IntegratorConfig::default()).unwrap();
        assert_eq!(arc.jump_count(), k);
        for (i, jr) in arc.jumps.iter().enumerate() {
            assert!((jr.time.t - (i + 1) as f64).abs() < 1e-9);
            assert_eq!(jr.post.r, vec![0.0]);
        }
    }
}

#[test]
fn replay_of_recorded_draws_is_bit_exact() {
    let spec = jammed_es(&JamParams::new(1.0, 0.3, 0.01).unwrap(), 0.1).unwrap();
    let h = Horizon::time(5.0).unwrap();
    let cfg = IntegratorConfig::default();
    let init = StateVec::scalar(-2.0, 0.0);
    let arc = simulate_path(&spec, &init, 42, h, &cfg).unwrap();
    let draws = arc.draws();
    let again = replay_path(&spec, &init, 42, &RecordedDraws(&draws), h, &cfg).unwrap();
    assert_eq!(arc, again);
}
