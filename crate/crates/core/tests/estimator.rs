use pileup::inversion::{estimate_density, synthesize, EstimatorConfig, Inverter, Kernel, YGrid};
use pileup::marks::{build_bimodal_model, build_mg_infinity_model, ServiceDist};
use pileup::simulator::{simulate_cycles, StopRule};
use pileup::transform::EmpiricalTransform;
use pileup::validation::{ise, run_mise_study, theorem1_check, true_characteristic, AxisValue, MiseAxis, MiseStudy};
use pileup::Error;
use num_complex::Complex64;

const LAMBDA: f64 = 0.04;

fn bimodal_grid(count: usize) -> YGrid {
    YGrid { min: 0.0, max: 200.0, count }
}

#[test]
fn oracle_inputs_match_smoothing_and_trade_bias_for_variance() {
    let model = build_bimodal_model();
    let reference = simulate_cycles(LAMBDA, &model, StopRule::NumCycles(1_000_000), 11).unwrap();
    let xf = EmpiricalTransform::new(&reference, 1e-4).unwrap();
    let grid = bimodal_grid(1024);
    let cfg = EstimatorConfig { h: 0.5, y_grid: Some(grid), ..EstimatorConfig::default() };
    let settings = cfg.resolve(LAMBDA, cfg.x_trunc, xf.max_duration(), grid.max).unwrap();
    let inv = Inverter::new(&xf, LAMBDA, cfg.x_trunc, settings).unwrap();

    // one ν grid on [0, 2] whose nodes include 1/h for every bandwidth below;
    // its synthesis period 2π·48 ≈ 301 exceeds the output range
    let nus: Vec<f64> = (0..=96).map(|k| k as f64 / 48.0).collect();
    let roots = inv.track_roots(&nus).unwrap();
    let points: Vec<_> = nus.iter().zip(roots).map(|(&nu, s0)| inv.evaluate(nu, s0).unwrap()).collect();
    assert!(points.iter().all(|p| p.min_denominator >= settings.denominator_floor));
    let phis: Vec<Complex64> = points.iter().map(|p| p.ratio()).collect();
    let truth = true_characteristic(&model, &nus).unwrap();
    let ys = grid.points();

    let hs = [0.5, 1.0, 2.0, 4.0, 8.0];
    let mut ises = Vec::new();
    for h in hs {
        let k = (48.0 / h) as usize;
        let est = synthesize(&nus[..=k], &phis[..=k], Kernel::Sinc, h, &ys).0;
        if h == 0.5 {
            let target = synthesize(&nus[..=k], &truth[..=k], Kernel::Sinc, h, &ys).0;
            let peak = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sup = est.iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(sup < 0.02 * peak, "sup error {sup} vs peak {peak}");
        }
        ises.push(ise(&ys, &est, &model).unwrap());
    }
    let best = (0..hs.len()).min_by(|&a, &b| ises[a].total_cmp(&ises[b])).unwrap();
    assert!(best > 0 && best + 1 < hs.len(), "ISE over h {hs:?}: {ises:?}");
}

#[test]
fn guard_holds_whenever_estimation_succeeds() {
    let model = build_bimodal_model();
    let cycles = simulate_cycles(LAMBDA, &model, StopRule::NumCycles(2000), 13).unwrap();
    for (x, floor) in [(30.0, None), (60.0, None), (60.0, Some(1e-3)), (60.0, Some(0.9)), (200.0, Some(0.5))] {
        let cfg = EstimatorConfig {
            x_trunc: x,
            h: 8.0,
            omega_max: Some(300.0),
            denominator_floor: floor,
            y_grid: Some(bimodal_grid(128)),
            ..EstimatorConfig::default()
        };
        match estimate_density(&cycles, &cfg) {
            Ok(est) => assert!(est.diagnostics.min_denominator >= est.diagnostics.denominator_floor),
            Err(e) => assert!(matches!(e, Error::DenominatorFloor { .. }), "x = {x}: {e}"),
        }
    }
    let cfg = EstimatorConfig { denominator_floor: Some(0.9), omega_max: Some(300.0), h: 8.0, ..EstimatorConfig::default() };
    assert!(estimate_density(&cycles, &cfg).is_err());
}

/// `∫₀ˣ K_h(y-u) e^{-u} du` with `K_h(t) = sin(t/h)/(πt)`, by composite Simpson.
fn smoothed_truncated_exponential(y: f64, h: f64, x: f64) -> f64 {
    let kernel = |t: f64| if t.abs() < 1e-12 { 1.0 / (std::f64::consts::PI * h) } else { (t / h).sin() / (std::f64::consts::PI * t) };
    let n = 20_000;
    let du = x / n as f64;
    (0..=n)
        .map(|k| {
            let u = k as f64 * du;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * kernel(y - u) * (-u).exp()
        })
        .sum::<f64>()
        * du
        / 3.0
}

#[test]
fn mg_infinity_recovers_the_truncated_service_density() {
    let model = build_mg_infinity_model(ServiceDist::Exponential { rate: 1.0 }).unwrap();
    let cycles = simulate_cycles(0.1, &model, StopRule::NumCycles(100_000), 14).unwrap();
    let (x, h) = (6.0, 0.3);
    let cfg = EstimatorConfig { x_trunc: x, h, y_grid: Some(YGrid { min: 0.0, max: x, count: 241 }), ..EstimatorConfig::default() };
    let est = estimate_density(&cycles, &cfg).unwrap();
    let sup = est.y.iter().zip(&est.m_hat).fold(0.0f64, |m, (&y, &v)| m.max((v - smoothed_truncated_exponential(y, h, x)).abs()));
    assert!(sup < 0.02, "sup error against the smoothed target {sup}");
}

#[test]
fn doubling_sample_sizes_shrinks_the_identity_budget() {
    let model = build_bimodal_model();
    let (s, p) = (Complex64::new(0.5, 0.3), Complex64::new(0.0, 0.02));
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let run = |n: usize| {
        let reports: Vec<_> = (0..10).map(|r| theorem1_check(&model, LAMBDA, s, p, n, n, 100 + r).unwrap()).collect();
        let within = reports.iter().filter(|r| r.discrepancy <= r.budget).count();
        (median(reports.iter().map(|r| r.budget).collect()), within)
    };
    let (b1, w1) = run(20_000);
    let (b2, w2) = run(40_000);
    let ratio = b2 / b1;
    // squared budget halves: ratio near 1/√2
    assert!((ratio - 0.5f64.sqrt()).abs() < 0.07, "budget ratio {ratio}");
    assert!(w1 >= 8 && w2 >= 8, "within budget: {w1}/10, {w2}/10");
}

#[test]
fn mise_study_is_bit_reproducible() {
    let model = build_bimodal_model();
    let study = MiseStudy {
        axis: MiseAxis::X,
        values: vec![AxisValue::Fixed(60.0), AxisValue::MAX_DURATION],
        lambda: LAMBDA,
        n: 500,
        base: EstimatorConfig { h: 8.0, omega_max: Some(300.0), y_grid: Some(bimodal_grid(128)), ..EstimatorConfig::default() },
        replicates: 2,
        seed: 5,
    };
    let a = run_mise_study(&model, &study).unwrap();
    let b = run_mise_study(&model, &study).unwrap();
    assert_eq!(a.mean_ises(), b.mean_ises());
    assert!(a.mean_ises().iter().all(|v| v.is_finite() && *v >= 0.0));
}
