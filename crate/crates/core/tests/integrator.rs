use ultradian::dde::{integrate, InitialHistory, IntegratorConfig, Trajectory};
use ultradian::forcing::InfusionProtocol;
use ultradian::model::ModelParams;
use ultradian::simulate::{check_invariants, simulate_default};

fn model_run(dt: f64, protocol: &InfusionProtocol) -> Trajectory<2> {
    simulate_default(&ModelParams::default(), protocol, &IntegratorConfig::new(dt, 1000.0)).unwrap()
}

/// Max glucose difference (mg/dl) on the nodes of the coarser run.
fn max_diff(coarse: &Trajectory<2>, fine: &Trajectory<2>) -> f64 {
    coarse
        .nodes()
        .map(|(t, x)| (x[0] - fine.sample(t).unwrap()[0]).abs() / 100.0)
        .fold(0.0, f64::max)
}

fn observed_order(protocol: &InfusionProtocol, dt: f64) -> (f64, f64, f64) {
    let a = model_run(dt, protocol);
    let b = model_run(dt / 2.0, protocol);
    let c = model_run(dt / 4.0, protocol);
    let e1 = max_diff(&a, &b);
    let e2 = max_diff(&b, &c);
    ((e1 / e2).log2(), e1, e2)
}

#[test]
fn self_convergence_order_fasting() {
    let (order, e1, e2) = observed_order(&InfusionProtocol::fasting(), 0.25);
    assert!(order >= 3.0, "order {order} ({e1:e}, {e2:e})");
}

#[test]
fn self_convergence_order_constant_infusion() {
    let (order, e1, e2) = observed_order(&InfusionProtocol::constant(1.35), 0.25);
    assert!(order >= 3.0, "order {order} ({e1:e}, {e2:e})");
}

#[test]
fn halving_step_shrinks_error_eightfold() {
    let p = InfusionProtocol::fasting();
    let reference = model_run(0.25 / 8.0, &p);
    let e_dt = max_diff(&model_run(0.25 / 2.0, &p), &reference);
    let e_half = max_diff(&model_run(0.25 / 4.0, &p), &reference);
    assert!(e_dt / e_half >= 8.0, "{e_dt:e} / {e_half:e}");
}

#[test]
fn model_runs_are_bit_identical() {
    let p = InfusionProtocol::on_off(1.35, 60.0, 30.0);
    let a = model_run(0.05, &p);
    let b = model_run(0.05, &p);
    assert!(a.nodes().zip(b.nodes()).all(|(x, y)| x.0.to_bits() == y.0.to_bits() && x.1 == y.1));
}

#[test]
fn segments_are_contiguous() {
    let traj = model_run(0.05, &InfusionProtocol::fasting());
    let segs = traj.segments();
    assert_eq!(segs[0].t_start(), 0.0);
    for w in segs.windows(2) {
        assert_eq!(w[0].t_end(), w[1].t_start());
    }
    assert!((segs.last().unwrap().t_end() - 1000.0).abs() < 1e-9);
    for k in 0..=10_000 {
        let t = 0.1 * k as f64;
        assert!(traj.sample(t).unwrap().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn rhs_is_evaluated_forward_in_time() {
    let delays = [0.7, 2.3];
    let cfg = IntegratorConfig::new(0.1, 50.0);
    let mut worst = f64::NEG_INFINITY;
    let mut clock = Vec::new();
    integrate(
        |t, x: &[f64; 1], d| {
            clock.push(t);
            [-0.5 * d[0][0] - 0.3 * d[1][0] + 0.1 * x[0]]
        },
        &delays,
        InitialHistory::Constant([1.0]),
        &cfg,
    )
    .unwrap();
    for w in clock.windows(2) {
        worst = worst.max(w[0] - w[1] - cfg.dt);
    }
    assert!(worst <= 1e-12, "rhs evaluated out of order by {worst}");
}

#[test]
fn invariants_hold_on_standard_protocols() {
    for p in [
        InfusionProtocol::fasting(),
        InfusionProtocol::constant(1.35),
        InfusionProtocol::on_off(1.35, 60.0, 30.0),
        InfusionProtocol::on_off(24.3, 180.0, 5.0),
    ] {
        let traj = simulate_default(&ModelParams::default(), &p, &IntegratorConfig::new(0.05, 5000.0)).unwrap();
        check_invariants(&traj, &ModelParams::default()).unwrap();
    }
}
