use super::*;
use crate::lamperti::{first_passage, killed_explosion_functional};
use crate::mechanism::{JumpLaw, LadderSpec};
use statrs::function::erf::erfc;

fn stable() -> BranchingMechanism {
    BranchingMechanism::stable(0.5, 1.0).unwrap()
}

fn pol(seed: u64) -> SimPolicy {
    SimPolicy { seed, ..SimPolicy::default() }
}

#[test]
fn brownian_ladder_differs_by_linear_drift() {
    let m = BranchingMechanism::from_triplet(-1.0, 2.0, LevyMeasure::None).unwrap();
    let set = LevelSet::new(&m, vec![0.5, 0.0], vec![1, -1]).unwrap();
    let p = SimPolicy { horizon: 3.0, ..pol(11) };
    let smp = simulate_coupled(&set, 1.0, &p, 0).unwrap();
    let v = smp.views(&set).unwrap();
    assert_eq!(v[0].points.len(), v[1].points.len());
    for (a, b) in v[0].points.iter().zip(&v[1].points) {
        assert_eq!(a.0, b.0);
        let d = b.1 - a.1;
        assert!((d - a.0).abs() <= 1e-12 * (1.0 + a.0), "t={} diff={d}", a.0);
    }
}

#[test]
fn zero_tilt_view_equals_the_limit() {
    let set = LevelSet::new(&stable(), vec![0.3, 0.0], vec![1, -1]).unwrap();
    let p = SimPolicy { horizon: 2.0, delta: 1e-4, delta_rel: 0.0, ..pol(5) };
    let smp = simulate_coupled(&set, 1.0, &p, 3).unwrap();
    let lim = &smp.views(&set).unwrap()[1];
    let alone = smp.view_at(&stable(), 0.0).unwrap();
    assert_eq!(lim.points, alone.points);
}

#[test]
fn thinning_frequency() {
    let mut rng = stream(1, 0, Role::Marks);
    let n = 100_000;
    let hits = (0..n).filter(|_| included(rng.random::<f64>(), 0.3, 2.0)).count() as f64 / n as f64;
    let p = (-0.6f64).exp();
    assert!((p - 0.548812).abs() < 1e-6);
    assert!((hits - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{hits}");
}

#[test]
fn coupled_paths_are_ordered() {
    let ladder = EsscherLadder::new(&stable(), &LadderSpec { eps: "pow:2".into(), first: 1, levels: 8 }).unwrap();
    let set = LevelSet::from_ladder(&ladder, &[1, 2, 4, 8], true).unwrap();
    let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.25).collect();
    for rep in 0..50 {
        let req = RunRequest { set: &set, x0: 1.0, tasks: &[], sample_times: &times, record: false };
        let r = simulate_replication(&req, &pol(2), rep).unwrap();
        for i in 0..times.len() {
            for j in 1..set.len() {
                assert!(r.levels[j - 1].samples[i] <= r.levels[j].samples[i]);
                if i > 0 {
                    let d0 = r.levels[j].samples[i - 1] - r.levels[j - 1].samples[i - 1];
                    let d1 = r.levels[j].samples[i] - r.levels[j - 1].samples[i];
                    assert!(d1 >= d0 - 1e-12 * r.levels[j].samples[i], "difference must not decrease");
                }
            }
        }
    }
}

#[test]
fn engine_agrees_with_recorded_views() {
    let ladder = EsscherLadder::new(&stable(), &LadderSpec { eps: "pow:2".into(), first: 1, levels: 4 }).unwrap();
    let set = LevelSet::from_ladder(&ladder, &[2, 4], true).unwrap();
    let p = SimPolicy { horizon: 40.0, ..pol(9) };
    let tasks: Vec<LevelTask> = (0..3)
        .map(|j| LevelTask { ln_targets: vec![2f64.ln(), 30f64.ln()], window: Some(3.0 + j as f64) })
        .collect();
    for rep in 0..20 {
        let req = RunRequest { set: &set, x0: 1.0, tasks: &tasks, sample_times: &[1.0], record: true };
        let r = simulate_replication(&req, &p, rep).unwrap();
        let views = r.sample.as_ref().unwrap().views(&set).unwrap();
        for j in 0..3 {
            for (k, &y) in [2.0, 30.0].iter().enumerate() {
                let a = r.levels[j].passages[k];
                let b = first_passage(&views[j], y);
                assert_eq!(a.reason, b.reason);
                if b.sigma.is_finite() {
                    assert!((a.sigma - b.sigma).abs() <= 1e-9 * b.sigma, "{} vs {}", a.sigma, b.sigma);
                }
            }
            let kv = killed_explosion_functional(&views[j], 3.0 + j as f64, 1.0).unwrap();
            assert!((r.levels[j].window.unwrap().value - kv.value).abs() <= 1e-9 * kv.value);
            assert_eq!(r.levels[j].samples[0], views[j].value_at(1.0));
        }
    }
}

#[test]
fn laplace_transform_of_the_limit() {
    let set = LevelSet::new(&stable(), vec![0.25, 0.0], vec![0, -1]).unwrap();
    let p = SimPolicy { horizon: 1.0, delta: 1e-4, delta_rel: 0.0, ..pol(21) };
    let reps = 20_000;
    let mut vals = vec![Vec::new(); 2];
    for rep in 0..reps {
        let req = RunRequest { set: &set, x0: 1.0, tasks: &[], sample_times: &[1.0], record: false };
        let r = simulate_replication(&req, &p, rep).unwrap();
        for j in 0..2 {
            vals[j].push(r.levels[j].samples[0]);
        }
    }
    for j in 0..2 {
        let m = set.mechanism(j);
        let est = laplace_from_values(&vals[j], 1.0, 1.0);
        let exact = m.varphi(1.0).exp();
        let gap = exponent_gap(m.measure(), 1e-4, 1.0, SmallJumps::CompensateMean);
        assert!((est.estimate - exact).abs() <= 3.0 * est.std_error + gap, "level {j}: {est:?} vs {exact}");
    }
    assert!((stable().varphi(1.0).exp() - (-1f64).exp()).abs() < 1e-15);
}

#[test]
fn deterministic_drift_laplace() {
    let m = BranchingMechanism::from_triplet(-1.0, 0.0, LevyMeasure::None).unwrap();
    let set = LevelSet::new(&m, vec![0.0], vec![-1]).unwrap();
    let req = RunRequest { set: &set, x0: 2.0, tasks: &[], sample_times: &[1.0], record: false };
    let r = simulate_replication(&req, &pol(0), 0).unwrap();
    let e = laplace_from_values(&r.levels[0].samples, 2.0, 1.0);
    assert!((e.estimate - (-1f64).exp()).abs() < 1e-15);
}

#[test]
fn stable_increments() {
    let mut rng = stream(3, 0, Role::Aux);
    let n = 200_000;
    let draws: Vec<f64> = (0..n).map(|_| exact_stable_increment(0.5, 1.0, 1.0, &mut rng).unwrap()).collect();
    let e = laplace_from_values(&draws, 0.0, 1.0);
    assert!((e.estimate - (-1f64).exp()).abs() < 3.0 * e.std_error);
    // α = 1/2 is the Lévy law with scale 1/2: P(S ≤ x) = erfc(1/(2√x))
    let mut sorted = draws[..20_000].to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = erfc(0.5 / x.sqrt());
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / m.sqrt(), "KS {ks}");
    let mut small: Vec<f64> = (0..1001).map(|_| exact_stable_increment(0.5, 1.0, 1e-6, &mut rng).unwrap()).collect();
    small.sort_by(f64::total_cmp);
    assert!(small[500] < 1e-3);
    assert!(exact_stable_increment(1.5, 1.0, 1.0, &mut rng).is_err());
}

#[test]
fn closure_matches_full_simulation() {
    let cp = LevyMeasure::CompoundPoisson { rate: 1.0, jumps: JumpLaw::Exponential { rate: 1.0 } };
    let m = BranchingMechanism::with_linear(-1.0, 0.0, cp).unwrap();
    let set = LevelSet::new(&m, vec![0.0], vec![-1]).unwrap();
    let tasks = vec![LevelTask { ln_targets: vec![50f64.ln(), 2000f64.ln()], window: None }];
    let run = |kappa: f64| {
        let p = SimPolicy { closure_kappa: kappa, ..pol(4) };
        let mut s = [Vec::new(), Vec::new()];
        let mut closed = 0;
        for rep in 0..4000 {
            let req = RunRequest { set: &set, x0: 1.0, tasks: &tasks, sample_times: &[], record: false };
            let r = simulate_replication(&req, &p, rep).unwrap();
            closed += r.levels[0].closure as usize;
            for k in 0..2 {
                s[k].push(r.levels[0].passages[k].sigma);
            }
        }
        (s, closed)
    };
    let (full, c0) = run(0.0);
    let (fast, c1) = run(5.0);
    assert_eq!(c0, 0);
    assert!(c1 > 3000);
    for k in 0..2 {
        let (m0, s0) = mean_se(&full[k]);
        let (m1, s1) = mean_se(&fast[k]);
        assert!((m0 - m1).abs() < 4.0 * (s0 * s0 + s1 * s1).sqrt(), "target {k}: {m0} vs {m1}");
        let (v0, v1) = (sd(&full[k]), sd(&fast[k]));
        assert!((v0 / v1 - 1.0).abs() < 0.1, "spread {v0} vs {v1}");
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, sd(v) / n.sqrt())
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn refuses_runaway_jump_counts() {
    let set = LevelSet::new(&stable(), vec![0.0], vec![-1]).unwrap();
    let p = SimPolicy { horizon: 1e6, delta: 1e-12, delta_rel: 0.0, ..pol(0) };
    assert!(simulate_coupled(&set, 1.0, &p, 0).is_err());
    let p = SimPolicy { delta: 0.0, delta_rel: 0.0, ..pol(0) };
    assert!(p.validate(set.field()).is_err());
}

#[test]
fn views_below_field_tilt_are_refused() {
    let set = LevelSet::new(&stable(), vec![0.5, 0.1], vec![1, 2]).unwrap();
    let p = SimPolicy { horizon: 1.0, ..pol(0) };
    let smp = simulate_coupled(&set, 1.0, &p, 0).unwrap();
    assert!(smp.view_at(&stable(), 0.05).is_err());
    // refinement between existing tilts needs no new marks
    let mid = smp.view_at(&stable(), 0.3).unwrap();
    let v = smp.views(&set).unwrap();
    let t = 0.9;
    assert!(v[0].value_at(t) <= mid.value_at(t) && mid.value_at(t) <= v[1].value_at(t));
}

#[test]
fn closure_moments_reduce_to_log_clock() {
    let (m, v) = closure_moments(2.0, 0.0, 0.0, 100f64.ln());
    assert!((m - 100f64.ln() / 2.0).abs() < 1e-15);
    assert_eq!(v, 0.0);
    let (_, v) = closure_moments(2.0, 3.0, 0.0, f64::INFINITY);
    assert!((v - 3.0 / 8.0).abs() < 1e-15);
}
