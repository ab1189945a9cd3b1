//! Censor-aware ECDFs and simple Monte Carlo summaries.

/// One observation of a possibly censored or infinite time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Obs {
    Event(f64),
    /// Right-censored at the given time.
    Censored(f64),
    /// Known to be +∞.
    Infinite,
}

/// Kaplan–Meier estimate of the CDF as a right-continuous step function.
#[derive(Clone, Debug)]
pub struct KmCdf {
    /// (t, F(t)) at event times, increasing in t.
    pub steps: Vec<(f64, f64)>,
    /// Largest observed finite time (event or censoring); the estimate is meaningful up to here.
    pub t_max: f64,
    pub any_censored: bool,
}

impl KmCdf {
    pub fn new(obs: &[Obs]) -> Self {
        let mut ev: Vec<(f64, bool)> = obs
            .iter()
            .filter_map(|o| match *o {
                Obs::Event(t) => Some((t, true)),
                Obs::Censored(t) => Some((t, false)),
                Obs::Infinite => None,
            })
            .collect();
        // events before censorings at equal times
        ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut at_risk = obs.len() as f64;
        let mut surv = 1.0;
        let mut steps = Vec::new();
        let mut i = 0;
        let any_censored = ev.iter().any(|e| !e.1);
        while i < ev.len() {
            let t = ev[i].0;
            let mut d = 0.0;
            let mut c = 0.0;
            while i < ev.len() && ev[i].0 == t {
                if ev[i].1 {
                    d += 1.0;
                } else {
                    c += 1.0;
                }
                i += 1;
            }
            if d > 0.0 {
                surv *= 1.0 - d / at_risk;
                steps.push((t, 1.0 - surv));
            }
            at_risk -= d + c;
        }
        let t_max = ev.last().map_or(0.0, |e| e.0);
        KmCdf { steps, t_max, any_censored }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.steps.partition_point(|s| s.0 <= t);
        if i == 0 {
            0.0
        } else {
            self.steps[i - 1].1
        }
    }

    /// sup_t |F̂(t) − F(t)| over [0, t_max] (and to +∞ when nothing is censored; `f_inf` = F(∞−)).
    pub fn ks<F: Fn(f64) -> f64>(&self, reference: F, f_inf: f64) -> f64 {
        let mut d: f64 = 0.0;
        let mut prev = 0.0;
        for &(t, f) in &self.steps {
            let r = reference(t);
            d = d.max((r - prev).abs()).max((r - f).abs());
            prev = f;
        }
        if !self.any_censored {
            d = d.max((f_inf - prev).abs());
        }
        d.min(1.0)
    }
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Binomial frequency and its standard error.
pub fn frequency(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn km_without_censoring_is_the_ecdf() {
        let obs: Vec<Obs> = [3.0, 1.0, 2.0, 2.0].iter().map(|&t| Obs::Event(t)).collect();
        let km = KmCdf::new(&obs);
        assert_eq!(km.eval(0.5), 0.0);
        assert_eq!(km.eval(1.0), 0.25);
        assert_eq!(km.eval(2.5), 0.75);
        assert_eq!(km.eval(3.0), 1.0);
        let ks = km.ks(|t| (t / 4.0).min(1.0), 1.0);
        assert!((ks - 0.25).abs() < 1e-15);
        assert_eq!(km.ks(|_| 0.0, 0.0), 1.0);
    }

    #[test]
    fn km_handles_censoring_and_infinite_mass() {
        let obs = vec![Obs::Event(1.0), Obs::Censored(1.5), Obs::Event(2.0), Obs::Infinite];
        let km = KmCdf::new(&obs);
        assert_eq!(km.eval(1.0), 0.25);
        // after the censoring two remain at risk
        assert!((km.eval(2.0) - (1.0 - 0.75 * 0.5)).abs() < 1e-15);
        assert!(km.any_censored);
        assert_eq!(km.t_max, 2.0);
    }

    #[test]
    fn summaries() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let (p, s) = frequency(25, 100);
        assert_eq!(p, 0.25);
        assert!((s - (0.1875f64 / 100.0).sqrt()).abs() < 1e-15);
    }
}
