use super::*;
use crate::mechanism::LevyMeasure;
use std::f64::consts::PI;

fn stable() -> BranchingMechanism {
    BranchingMechanism::stable(0.5, 1.0).unwrap()
}

fn quadratic() -> BranchingMechanism {
    BranchingMechanism::from_triplet(-1.0, 2.0, LevyMeasure::None).unwrap()
}

/// u^{1/2} = λ^{1/2} + t/2 for varphi = −√λ.
fn stable_flow(t: f64, lambda: f64) -> f64 {
    (lambda.sqrt() + 0.5 * t).powi(2)
}

#[test]
fn closed_form_values() {
    let f = Flow::new(&stable()).unwrap();
    assert!((f.ut(1.0, 1.0).unwrap().value - 2.25).abs() < 1e-10);
    assert!((f.ut(1.0, 0.0).unwrap().value - 0.25).abs() < 1e-10);
    assert_eq!(f.ut(0.0, 0.7).unwrap().value, 0.7);
    for &(t, l) in &[(0.01, 1e-6), (3.0, 0.2), (10.0, 50.0)] {
        let u = f.ut(t, l).unwrap().value;
        let e = stable_flow(t, l);
        assert!((u - e).abs() < 1e-10 * (1.0 + e), "t={t} λ={l}: {u} vs {e}");
    }
}

#[test]
fn semigroup_on_grid() {
    let f = Flow::new(&stable()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let t = 0.1 + 0.3 * i as f64;
                let s = 0.05 + 0.25 * j as f64;
                let l = 0.02 * (k * k) as f64;
                let lhs = f.ut(t + s, l).unwrap().value;
                let rhs = f.ut(t, f.ut(s, l).unwrap().value).unwrap().value;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    assert!(worst <= 1e-8, "worst residual {worst}");
}

#[test]
fn quadratic_both_sides() {
    let f = Flow::new(&quadratic()).unwrap();
    let exact = |t: f64, l: f64| l / (l + (1.0 - l) * (-t).exp());
    for &(t, l) in &[(0.5, 0.3), (2.0, 0.9), (1.0, 1.5), (3.0, 4.0), (0.2, 1.0001)] {
        let u = f.ut(t, l).unwrap().value;
        assert!((u - exact(t, l)).abs() < 1e-9, "t={t} λ={l}: {u} vs {}", exact(t, l));
    }
    // conservative: u_t(0) = 0 with a flag
    let v = f.ut(1.0, 0.0).unwrap();
    assert!(v.flagged && v.value == 0.0);
    assert_eq!(f.survival_probability(1.0, 3.0).unwrap(), 1.0);
}

#[test]
fn cumulative_rate_round_trip() {
    let f = Flow::new(&stable()).unwrap();
    let r = f.rate().unwrap();
    assert!(r.f(0.0) == 0.0);
    let mut prev = 0.0;
    for k in -30..30 {
        let y = 2f64.powi(k);
        let v = r.f(y);
        assert!((v - 2.0 * y.sqrt()).abs() < 1e-12 * (1.0 + v));
        assert!(v > prev);
        prev = v;
        assert!((r.f_inverse(v) - y).abs() < 1e-10 * y);
    }
}

#[test]
fn ode_residual() {
    let m = stable();
    let f = Flow::new(&m).unwrap();
    let h = 1e-4;
    for &(t, l) in &[(0.5, 0.1), (1.0, 1.0), (2.0, 3.0)] {
        let d = (f.ut(t + h, l).unwrap().value - f.ut(t - h, l).unwrap().value) / (2.0 * h);
        let u = f.ut(t, l).unwrap().value;
        assert!((d + m.varphi(u)).abs() < 1e-6);
    }
}

#[test]
fn survival_examples() {
    let f = Flow::new(&stable()).unwrap();
    assert_eq!(f.survival_probability(1.0, 0.0).unwrap(), 1.0);
    assert!((f.survival_probability(1.0, 1.0).unwrap() - (-0.25f64).exp()).abs() < 1e-10);
}

#[test]
fn zeta_moments_closed_form() {
    let f = Flow::new(&stable()).unwrap();
    assert!((f.zeta_moment(1.0, 0).unwrap().value - 1.0).abs() < 1e-9);
    assert!((f.zeta_moment(1.0, 1).unwrap().value - PI.sqrt()).abs() < 1e-7);
    assert!((f.zeta_moment(1.0, 2).unwrap().value - 4.0).abs() < 1e-7);
    // E_x ζ = √π/√x by self-similarity
    assert!((f.zeta_moment(4.0, 1).unwrap().value - PI.sqrt() / 2.0).abs() < 1e-7);
}

#[test]
fn zeta_laplace_values() {
    let f = Flow::new(&stable()).unwrap();
    assert!((f.zeta_laplace(1.0, 0.0).unwrap().value - 1.0).abs() < 1e-9);
    // independent oracle: y = v², ∫ 2v e^{-2 lam v} e^{-v²} dv
    for &lam in &[0.5, 1.0, 2.0] {
        let o = crate::quad::integrate(|v: f64| 2.0 * v * (-2.0 * lam * v - v * v).exp(), 0.0, 12.0, 1e-14, 1e-13, 100)
            .unwrap()
            .value;
        assert!((f.zeta_laplace(1.0, lam).unwrap().value - o).abs() < 1e-8);
    }
    assert!(f.zeta_laplace(1.0, 2.0).unwrap().value < f.zeta_laplace(1.0, 1.0).unwrap().value);
}

#[test]
fn conservative_moments_vanish() {
    let f = Flow::new(&quadratic()).unwrap();
    assert_eq!(f.zeta_moment(1.0, 1).unwrap().value, 0.0);
}

#[test]
fn truncated_integral_examples() {
    let m = stable();
    let small = expected_truncated_integral(&m, 1.0, 1e-6).unwrap();
    assert!((small - PI.sqrt()).abs() < 1e-2, "{small}");
    let o = crate::quad::integrate(|v: f64| 2.0 * v * (-v * v).exp() / (1.0 + v), 0.0, 12.0, 1e-14, 1e-13, 100)
        .unwrap()
        .value;
    assert!((expected_truncated_integral(&m, 1.0, 1.0).unwrap() - o).abs() < 1e-9);
    assert!(expected_truncated_integral(&m, 1.0, 1e8).unwrap() < 1e-3);
    assert!(matches!(expected_truncated_integral(&m, 1.0, 0.0), Err(Error::Domain(_))));
}

#[test]
fn truncated_integral_with_finite_root() {
    // quadratic level: ψ(h) finite, compare against direct quadrature in λ
    let m = quadratic();
    let h = 0.7;
    let psi = m.psi_inverse(h).unwrap();
    let o = crate::quad::integrate(|l: f64| ((-l).exp() - (-psi).exp()) / (h + m.phi(l)), 0.0, 1.0, 1e-14, 1e-13, 100)
        .unwrap()
        .value;
    assert!((expected_truncated_integral(&m, 1.0, h).unwrap() - o).abs() < 1e-9);
}

#[test]
fn ladder_flows_increase_to_limit() {
    let base = stable();
    let lim = Flow::new(&base).unwrap();
    let mut prev = 0.0;
    for &eps in &[1.0, 0.25, 0.01, 1e-4] {
        let fl = Flow::new(&base.esscher_shift(eps).unwrap()).unwrap();
        let u = fl.ut(1.0, 0.3).unwrap().value;
        assert!(u >= prev && u <= lim.ut(1.0, 0.3).unwrap().value + 1e-12);
        prev = u;
    }
    assert!((prev - lim.ut(1.0, 0.3).unwrap().value).abs() < 0.05);
}
