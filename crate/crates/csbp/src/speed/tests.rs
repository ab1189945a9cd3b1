use super::*;
use crate::mechanism::LadderSpec;

fn stable() -> BranchingMechanism {
    BranchingMechanism::stable(0.5, 1.0).unwrap()
}

fn ladder(eps: &str, levels: u64) -> EsscherLadder {
    EsscherLadder::new(&stable(), &LadderSpec { eps: eps.into(), first: 1, levels }).unwrap()
}

fn seq(spec: &str, l: &EsscherLadder) -> SpeedSequence {
    SpeedSequence::parse(spec, l, None).unwrap()
}

/// ∫_h^θ du/(√(u+ε) − √ε) with w = √(u+ε), written with ln h.
fn stable_shifted_exact(eps: f64, ln_h: f64, theta: f64) -> f64 {
    let r = eps.sqrt();
    let h = ln_h.exp();
    let w1 = (h + eps).sqrt();
    let w2 = (theta + eps).sqrt();
    2.0 * (w2 - w1) + 2.0 * r * ((w2 - r).ln() - (ln_h - (w1 + r).ln()))
}

#[test]
fn shifted_integral_examples() {
    let l = ladder("list:0.01", 1);
    assert_eq!(shifted_integral(&l, 1, 0.5, 0.5).unwrap(), 0.0);
    let v = shifted_integral(&l, 1, 0.01, 0.5).unwrap();
    let (w1, w2) = (0.02f64.sqrt(), 0.51f64.sqrt());
    let exact = 2.0 * (w2 - w1) + 0.2 * ((w2 - 0.1) / (w1 - 0.1)).ln();
    assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    // concavity envelope
    let m = stable();
    let lower = (0.5f64.ln() - 0.01f64.ln()) / m.phi_prime(0.01);
    let upper = integrate(|u: f64| 1.0 / (u * m.phi_prime(u + 0.01)), 0.01, 0.5, 1e-14, 1e-12, 100).unwrap().value;
    assert!(lower <= v && v <= upper);
}

#[test]
fn shifted_integral_far_below_underflow() {
    let l = ladder("pow:2", 64);
    for &(n, ln_h) in &[(8u64, -3.0), (8, -64.0), (64, -4096.0), (32, -1e-3)] {
        let eps = l.eps(n).unwrap();
        let v = shifted_integral_ln(&l, n, ln_h, 0.5).unwrap();
        let exact = stable_shifted_exact(eps, ln_h, 0.5);
        assert!((v - exact).abs() <= 1e-9 * (1.0 + exact.abs()), "n={n} ln h={ln_h}: {v} vs {exact}");
    }
}

#[test]
fn rv_ratio_examples() {
    let l = ladder("pow:2", 64);
    for n in [2u64, 10, 64] {
        let nf = n as f64;
        let r = rv_ratio(&l, &seq("pow:1", &l), n).unwrap();
        assert!((r - 2.0 * nf.ln() / nf).abs() < 1e-12);
        let r = rv_ratio(&l, &seq("exp:-n/2", &l), n).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = rv_ratio(&l, &seq("exp:-n^2", &l), n).unwrap();
        assert!((r - 2.0 * nf).abs() < 1e-9);
    }
}

#[test]
fn classify_reference_speeds() {
    let l = ladder("pow:2", 64);
    let pol = NumericPolicy::default();
    let r = classify(&l, &seq("pow:1", &l), None, &pol).unwrap();
    assert_eq!(r.class, SpeedClass::Z0);
    assert_eq!(r.c_estimate, 0.0);
    assert_eq!(r.evidence.n.len(), 64);
    let r = classify(&l, &seq("exp:-0.5*n", &l), None, &pol).unwrap();
    assert_eq!(r.class, SpeedClass::Zc);
    assert!((r.c_estimate - 1.0).abs() < 0.05);
    let r = classify(&l, &seq("exp:-n^2", &l), None, &pol).unwrap();
    assert_eq!(r.class, SpeedClass::Zinf);
    assert!(r.c_estimate.is_infinite());
}

#[test]
fn construct_round_trip() {
    let l = ladder("pow:2", 200);
    let pol = NumericPolicy::default();
    let theta = stable().default_theta();
    let h0 = construct_speed_for_c(&l, 0.0, theta).unwrap();
    assert_eq!(classify(&l, &h0, None, &pol).unwrap().class, SpeedClass::Z0);
    let h1 = construct_speed_for_c(&l, 1.0, theta).unwrap();
    let r = classify(&l, &h1, None, &pol).unwrap();
    assert_eq!(r.class, SpeedClass::Zc);
    assert!((0.9..=1.1).contains(&r.c_estimate), "c = {}", r.c_estimate);
    // the construction reproduces its target level by level
    for n in [1u64, 50, 200] {
        let i = shifted_integral_ln(&l, n, h1.ln_h(n).unwrap(), theta).unwrap();
        assert!((i - reference_integral(&stable(), theta).unwrap() - 1.0).abs() < 1e-9);
    }
    let hi = construct_speed_for_c(&l, f64::INFINITY, theta).unwrap();
    assert_eq!(classify(&l, &hi, None, &pol).unwrap().class, SpeedClass::Zinf);
    assert!(hi.construction_n0().unwrap() <= 200);
    assert!(construct_speed_for_c(&l, -1.0, theta).is_err());
}

#[test]
fn flow_limit_examples() {
    let l = ladder("pow:2", 32);
    let pol = NumericPolicy::default();
    let h = seq("pow:1", &l);
    let z = flow_limit_l(&l, &h, 0.0, &pol).unwrap();
    assert!((z.tail - 1.0 / 32.0).abs() < 1e-15);
    // Z0: l_1(h) = u_1(0) = 0.25; the approach is slow (about n^{-1/2}), so probe far levels
    let far = EsscherLadder::new(&stable(), &LadderSpec { eps: "pow:2".into(), first: 9998, levels: 10000 }).unwrap();
    let one = flow_limit_l(&far, &seq("pow:1", &far), 1.0, &pol).unwrap();
    assert!((one.tail - 0.25).abs() < 0.02, "{}", one.tail);
    assert!(one.values.windows(2).all(|w| w[1] < w[0]));
    let near = flow_limit_l(&l, &h, 1.0, &pol).unwrap();
    assert!(near.tail > one.tail);
    // Zinf: u_t^{(n)}(h(n)) -> 0
    let hinf = seq("exp:-n^2", &l);
    for t in [1.0, 5.0] {
        assert!(flow_limit_l(&l, &hinf, t, &pol).unwrap().tail < 1e-100);
    }
}

#[test]
fn summability_examples() {
    let l = ladder("geom:2", 40);
    let r = summability_checks(&l, &seq("pow:1", &l)).unwrap();
    assert_eq!(r.tilt_series.verdict, Summability::Summable);
    let l = ladder("pow:2", 64);
    let r = summability_checks(&l, &seq("pow:1", &l)).unwrap();
    assert_eq!(r.tilt_series.verdict, Summability::Divergent);
    assert!((r.tilt_series.decay_exponent - 0.5).abs() < 0.05);
    let l = ladder("geom:4", 12);
    let r = summability_checks(&l, &seq("geom:2", &l)).unwrap();
    assert_eq!(r.killing_series.verdict, Summability::Divergent);
    assert_eq!(r.tilt_series.verdict, Summability::Summable);
}

#[test]
fn speed_file_round_trip() {
    let l = ladder("pow:2", 10);
    let h = seq("exp:-n^2", &l);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    std::fs::write(&p, speed_csv(&l, &h).unwrap()).unwrap();
    let back = seq(&format!("table:{}", p.display()), &l);
    assert!((back.ln_h(10).unwrap() + 100.0).abs() < 1e-12);
}
