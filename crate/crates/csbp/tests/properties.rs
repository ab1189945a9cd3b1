use std::sync::OnceLock;

use csbp::flow::Flow;
use csbp::harness::{KmCdf, Obs};
use csbp::lamperti::{first_passage, lamperti_transform, piece_clock};
use csbp::quad::integrate;
use csbp::pathsim::{simulate_coupled, LevelSet, SimPolicy};
use csbp::speed::{classify, shifted_integral, SpeedClass, SpeedSequence};
use csbp::{BranchingMechanism, EsscherLadder, LadderSpec, LevyMeasure, NumericPolicy};
use proptest::prelude::*;

fn stable() -> BranchingMechanism {
    BranchingMechanism::stable(0.5, 1.0).unwrap()
}

fn quadratic() -> BranchingMechanism {
    BranchingMechanism::from_triplet(-1.0, 2.0, LevyMeasure::None).unwrap()
}

fn tempered() -> BranchingMechanism {
    BranchingMechanism::with_linear(0.3, 0.5, LevyMeasure::TemperedStable { alpha: 0.7, k: 1.0, tilt: 0.5 }).unwrap()
}

fn stable_flow() -> &'static Flow {
    static F: OnceLock<Flow> = OnceLock::new();
    F.get_or_init(|| Flow::new(&stable()).unwrap())
}

fn mechanisms() -> impl Strategy<Value = BranchingMechanism> {
    prop_oneof![Just(stable()), Just(quadratic()), Just(tempered())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn esscher_group_law(m in mechanisms(), e1 in 0.0..1.0f64, e2 in 0.0..1.0f64, lam in 0.0..10.0f64) {
        let direct = m.esscher_shift(e1 + e2).unwrap().varphi(lam);
        let nested = m.esscher_shift(e1).unwrap().esscher_shift(e2).unwrap().varphi(lam);
        prop_assert!((direct - nested).abs() <= 1e-10 * (1.0 + direct.abs()), "{direct} vs {nested}");
    }

    #[test]
    fn tilted_family_increases_to_phi(e_small in 1e-4..0.5f64, gap in 1e-3..0.5f64, u in 1e-3..5.0f64) {
        let m = stable();
        let lo = m.esscher_shift(e_small + gap).unwrap();
        let hi = m.esscher_shift(e_small).unwrap();
        prop_assert!(lo.phi(u) <= hi.phi(u) + 1e-14);
        prop_assert!(hi.phi(u) <= m.phi(u) + 1e-14);
    }

    #[test]
    fn concavity_envelope(eps in 1e-4..0.5f64, u in 1e-4..5.0f64) {
        let m = stable();
        let shifted = m.esscher_shift(eps).unwrap();
        let inv = 1.0 / shifted.phi(u);
        prop_assert!(1.0 / (u * m.phi_prime(eps)) <= inv * (1.0 + 1e-12));
        prop_assert!(inv <= 1.0 / (u * m.phi_prime(u + eps)) * (1.0 + 1e-12));
    }

    #[test]
    fn root_inverse_identity(lam in 1.0..20.0f64) {
        let m = quadratic();
        let rho = m.largest_root();
        prop_assert!(m.varphi(rho).abs() < 1e-12);
        prop_assert!(m.varphi(rho * 1.001) > 0.0);
        let back = m.psi_inverse(m.varphi(lam)).unwrap();
        prop_assert!((back - lam).abs() < 1e-8 * lam, "{back} vs {lam}");
    }

    #[test]
    fn flow_semigroup(t in 0.0..3.0f64, s in 0.0..3.0f64, lam in 0.0..5.0f64) {
        let f = stable_flow();
        let a = f.ut(t + s, lam).unwrap().value;
        let b = f.ut(t, f.ut(s, lam).unwrap().value).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a), "{a} vs {b}");
    }

    #[test]
    fn flow_increases_in_t_and_lambda(t in 0.01..3.0f64, dt in 0.01..1.0f64, lam in 0.01..5.0f64, dl in 0.01..1.0f64) {
        let f = stable_flow();
        let u = f.ut(t, lam).unwrap().value;
        prop_assert!(f.ut(t + dt, lam).unwrap().value > u);
        prop_assert!(f.ut(t, lam + dl).unwrap().value > u);
    }

    #[test]
    fn shifted_integral_inside_envelope(eps in 1e-4..0.2f64, h in 1e-6..0.4f64) {
        let l = EsscherLadder::new(&stable(), &LadderSpec { eps: format!("list:{eps}"), first: 1, levels: 1 }).unwrap();
        let theta = 0.5;
        let v = shifted_integral(&l, 1, h, theta).unwrap();
        let m = stable();
        // 1/(uφ'(ε)) ≤ 1/φ^(n)(u) ≤ 1/(uφ'(u+ε)), integrated over [h, θ]
        let lower = (theta / h).ln() / m.phi_prime(eps);
        let upper = integrate(|u: f64| 1.0 / (u * m.phi_prime(u + eps)), h, theta, 1e-14, 1e-12, 200).unwrap().value;
        prop_assert!(lower <= v * (1.0 + 1e-9), "{lower} <= {v}");
        prop_assert!(v <= upper * (1.0 + 1e-9), "{v} <= {upper}");
    }

    #[test]
    fn passage_times_increase_with_target(seed in 0u64..1000, y1 in 1.0..50.0f64, dy in 0.0..50.0f64) {
        let m = stable();
        let set = LevelSet::new(&m, vec![0.0], vec![-1]).unwrap();
        let pol = SimPolicy { horizon: 5.0, seed, ..SimPolicy::default() };
        let view = simulate_coupled(&set, 1.0, &pol, 0).unwrap().views(&set).unwrap().remove(0);
        let a = first_passage(&view, y1);
        let b = first_passage(&view, y1 + dy);
        prop_assert!(a.sigma <= b.sigma);
        prop_assert_eq!(first_passage(&view, 1.0).sigma, 0.0);
    }

    #[test]
    fn clock_is_additive_on_drift_paths(x0 in 0.1..10.0f64, b in 0.01..5.0f64, s1 in 0.0..5.0f64, s2 in 0.0..5.0f64) {
        let whole = piece_clock(x0, x0 + b * (s1 + s2), s1 + s2);
        let split = piece_clock(x0, x0 + b * s1, s1) + piece_clock(x0 + b * s1, x0 + b * (s1 + s2), s2);
        prop_assert!((whole - split).abs() <= 1e-12 * (1.0 + whole));
        // A(A⁻¹(t)) = t: the clock of X = x0 + b s is ln(1 + b s/x0)/b
        prop_assert!((whole - (b * (s1 + s2) / x0).ln_1p() / b).abs() <= 1e-10 * (1.0 + whole));
    }

    #[test]
    fn km_cdf_is_a_cdf(ts in proptest::collection::vec((0.0..10.0f64, 0u8..3), 1..60)) {
        let obs: Vec<Obs> = ts
            .iter()
            .map(|&(t, k)| match k {
                0 => Obs::Event(t),
                1 => Obs::Censored(t),
                _ => Obs::Infinite,
            })
            .collect();
        let km = KmCdf::new(&obs);
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = km.eval(i as f64 * 0.1);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= prev);
            prev = v;
        }
        let ks = km.ks(|t| 1.0 - (-t).exp(), 1.0);
        prop_assert!((0.0..=1.0).contains(&ks));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coupled_levels_are_ordered(seed in 0u64..10_000) {
        let m = stable();
        let ladder = EsscherLadder::new(&m, &LadderSpec { eps: "pow:2".into(), first: 1, levels: 8 }).unwrap();
        let set = LevelSet::from_ladder(&ladder, &[1, 2, 4, 8], true).unwrap();
        let pol = SimPolicy { horizon: 2.0, seed, ..SimPolicy::default() };
        let views = simulate_coupled(&set, 1.0, &pol, seed).unwrap().views(&set).unwrap();
        for i in 0..=200 {
            let s = i as f64 * 0.01;
            let xs: Vec<f64> = views.iter().map(|v| v.value_at(s)).collect();
            prop_assert!(xs.windows(2).all(|w| w[0] <= w[1]), "t={s}: {xs:?}");
        }
        // differences are nondecreasing in time
        for w in views.windows(2) {
            let mut prev = 0.0;
            for i in 0..=200 {
                let s = i as f64 * 0.01;
                let d = w[1].value_at(s) - w[0].value_at(s);
                prop_assert!(d >= prev - 1e-12);
                prev = d;
            }
        }
    }

    #[test]
    fn coupled_csbp_paths_are_ordered_in_level(seed in 0u64..10_000) {
        // Z^(n)_t ≤ Z_t at shared clock times, as long as both are defined
        let m = stable();
        let set = LevelSet::new(&m, vec![0.1, 0.0], vec![0, -1]).unwrap();
        let pol = SimPolicy { horizon: 3.0, seed, ..SimPolicy::default() };
        let views = simulate_coupled(&set, 1.0, &pol, 0).unwrap().views(&set).unwrap();
        let z: Vec<_> = views.iter().map(|v| lamperti_transform(v, 1.0).unwrap()).collect();
        let end = z[0].clock_end.min(z[1].clock_end).min(1.0);
        for i in 0..=50 {
            let t = end * i as f64 / 50.0;
            prop_assert!(z[0].value_at(t) <= z[1].value_at(t) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn speed_ordering_preserves_class(scale in 1.0..2.0f64) {
        // h̃ ≍ h keeps the class and c
        let l = EsscherLadder::new(&stable(), &LadderSpec { eps: "pow:2".into(), first: 1, levels: 64 }).unwrap();
        let pol = NumericPolicy::default();
        let shift = scale.ln();
        for (spec, class) in [("exp:-0.5*n", SpeedClass::Zc), ("exp:-n^2", SpeedClass::Zinf), ("pow:1", SpeedClass::Z0)] {
            let h = SpeedSequence::parse(spec, &l, None).unwrap();
            let rows: Vec<(u64, f64)> = h.rows(&l).unwrap().into_iter().map(|(n, v)| (n, v + shift)).collect();
            let scaled = SpeedSequence::from_ln_values("scaled", &rows);
            let a = classify(&l, &h, None, &pol).unwrap();
            let b = classify(&l, &scaled, None, &pol).unwrap();
            prop_assert_eq!(a.class, class);
            prop_assert_eq!(b.class, class);
            if class == SpeedClass::Zc {
                prop_assert!((a.c_estimate - b.c_estimate).abs() <= 2.0 * pol.stabilization_tol * (1.0 + a.c_estimate));
            }
        }
    }
}
