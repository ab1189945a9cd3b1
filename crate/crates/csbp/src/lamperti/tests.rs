use super::*;

fn line(x0: f64, slope: f64, end: f64) -> PathView {
    PathView { eps: 0.0, x0, points: vec![(0.0, x0), (end, x0 + slope * end)], horizon: end, gridded: false }
}

#[test]
fn piece_clock_branches_agree() {
    for &(xa, xb) in &[(1.0f64, 1.0f64), (1.0, 1.0 + 1e-7), (1.0, 1.0 + 2e-6), (2.0, 1.0), (1.0, 100.0)] {
        let exact = if xa == xb { 1.0 / xa } else { (xb / xa).ln() / (xb - xa) };
        assert!((piece_clock(xa, xb, 1.0) - exact).abs() <= 1e-12 * exact, "{xa} {xb}");
    }
}

#[test]
fn drift_path_gives_exponential_csbp() {
    let v = line(1.0, 1.0, 20.0);
    let z = lamperti_transform(&v, 3.0).unwrap();
    assert!((z.value_at(1.0) - std::f64::consts::E).abs() < 1e-12);
    assert!((z.value_at(2.5) - 2.5f64.exp()).abs() < 1e-10);
    assert!(!z.hit_zero);
    let p = first_passage(&v, 2f64.exp());
    assert_eq!(p.reason, ExitReason::Reached);
    assert!((p.sigma - 2.0).abs() < 1e-12);
    assert!((p.x_time - (2f64.exp() - 1.0)).abs() < 1e-12);
    // clock / inverse round trip: Z at clock σ_y is y
    assert!((z.value_at(p.sigma) - 2f64.exp()).abs() < 1e-10);
}

#[test]
fn constant_path_is_constant() {
    let v = line(3.0, 0.0, 5.0);
    let z = lamperti_transform(&v, 1.0).unwrap();
    for t in [0.0, 0.3, 1.0] {
        assert_eq!(z.value_at(t), 3.0);
    }
}

#[test]
fn passage_edge_cases() {
    let v = line(1.0, 1.0, 5.0);
    assert_eq!(first_passage(&v, 0.5).sigma, 0.0);
    assert_eq!(first_passage(&v, 1.0).sigma, 0.0);
    let p = first_passage(&v, 100.0);
    assert_eq!(p.reason, ExitReason::Horizon);
    assert!(p.sigma.is_infinite());
    let down = line(1.0, -1.0, 5.0);
    let p = first_passage(&down, 2.0);
    assert_eq!(p.reason, ExitReason::HitZeroFirst);
    assert_eq!(down.zero_time(), Some(1.0));
    let ys = [1.5, 2.0, 4.0, 5.5];
    let s: Vec<f64> = ys.iter().map(|&y| first_passage(&v, y).sigma).collect();
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn jumps_cross_at_the_pre_jump_clock() {
    let v = PathView {
        eps: 0.0,
        x0: 1.0,
        points: vec![(0.0, 1.0), (1.0, 2.0), (1.0, 10.0), (2.0, 11.0)],
        horizon: 2.0,
        gridded: false,
    };
    let p = first_passage(&v, 5.0);
    assert!((p.sigma - 2f64.ln()).abs() < 1e-14);
    assert_eq!(p.x_time, 1.0);
    assert_eq!(v.value_at(1.0), 10.0);
    let z = lamperti_transform(&v, 10.0).unwrap();
    assert!((z.value_at(2f64.ln()) - 10.0).abs() < 1e-12);
}

#[test]
fn killed_functional_on_drift_path() {
    let v = line(1.0, 1.0, 10.0);
    let k = killed_explosion_functional(&v, 0.0, 0.5).unwrap();
    assert_eq!(k.value, 0.0);
    let k = killed_explosion_functional(&v, 1.5, 0.5).unwrap();
    assert!((k.value - 4f64.ln()).abs() < 1e-12);
    assert!(killed_explosion_functional(&v, 100.0, 0.5).unwrap().censored);
    let down = line(1.0, -1.0, 5.0);
    let k = killed_explosion_functional(&down, 2.0, 1.0).unwrap();
    assert!(k.killed_by_zero && k.value == 0.0);
    assert!(killed_explosion_functional(&v, 1.0, 0.0).is_err());
}

#[test]
fn explosion_functional_cases() {
    let v = line(1.0, 1.0, 1e6);
    let e = explosion_functional(&v, 1e3, 0.0);
    assert!((e.zeta - 1e3f64.ln()).abs() < 1e-12 && !e.tau_finite);
    let e2 = explosion_functional(&v, 1e5, 0.0);
    assert!(e2.zeta > e.zeta);
    let down = line(1.0, -1.0, 5.0);
    let e = explosion_functional(&down, 10.0, 0.0);
    assert!(e.tau_finite && e.zeta == 0.0);
    assert!(explosion_functional(&line(1.0, 1.0, 5.0), 1e3, 0.0).censored);
}

#[test]
fn grid_zero_hit_uses_sqrt_profile() {
    let mut v = line(1.0, -1.0, 2.0);
    v.gridded = true;
    let z = lamperti_transform(&v, 1e9).unwrap();
    assert!(z.hit_zero);
    assert!((z.clock_end - 2.0).abs() < 1e-12);
    assert_eq!(z.value_at(5.0), 0.0);
    v.gridded = false;
    assert!(lamperti_transform(&v, 1e9).unwrap().clock_end.is_infinite());
}
