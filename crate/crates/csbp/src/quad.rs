//! Adaptive Gauss–Kronrod (10/21) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525205938,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// One 21-point Kronrod panel with the embedded 10-point Gauss error estimate.
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    gk21_floor(f, a, b).0
}

fn gk21_floor<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (Quad, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut fv = [0.0; 21];
    fv[20] = f(c);
    let mut k = WGK[10] * fv[20];
    let mut g = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        fv[2 * j] = f(c - dx);
        fv[2 * j + 1] = f(c + dx);
        let s = fv[2 * j] + fv[2 * j + 1];
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    // QUADPACK-style error scaling with a roundoff floor
    let mean = 0.5 * k;
    let mut resabs = WGK[10] * fv[20].abs();
    let mut resasc = WGK[10] * (fv[20] - mean).abs();
    for j in 0..10 {
        resabs += WGK[j] * (fv[2 * j].abs() + fv[2 * j + 1].abs());
        resasc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let h = h.abs();
    resabs *= h;
    resasc *= h;
    let mut error = ((k - g) * h).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    error = error.max(floor);
    (Quad { value: k * (b - a) * 0.5, error }, floor)
}

fn roundoff(panels: &[Panel]) -> f64 {
    // every panel sitting at its own roundoff floor
    let floor: f64 = panels.iter().map(|p| p.floor).sum();
    floor * (1.0 + 1e-9)
}

struct Panel {
    floor: f64,
    a: f64,
    b: f64,
    q: Quad,
}

/// Globally adaptive integration on a finite interval.
///
/// Stops when the summed error estimate is below `max(abs, rel*|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs: f64,
    rel: f64,
    max_panels: usize,
) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration limits must be finite, got [{a}, {b}]")));
    }
    let (first, floor) = gk21_floor(&mut f, a, b);
    let mut panels = vec![Panel { a, b, q: first, floor }];
    let mut total = first.value;
    let mut err = first.error;
    loop {
        if !total.is_finite() {
            return Err(Error::numeric("non-finite integrand", f64::NAN));
        }
        if err <= abs.max(rel * total.abs()) || err <= roundoff(&panels) {
            return Ok(Quad { value: total, error: err });
        }
        if panels.len() >= max_panels {
            return Err(Error::numeric(
                format!("quadrature on [{a:e}, {b:e}] did not converge in {max_panels} panels"),
                err,
            ));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.q.error.total_cmp(&y.1.q.error))
            .unwrap();
        let p = panels.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval exhausted at machine precision
            return if err <= 1e3 * abs.max(rel * total.abs()) {
                Ok(Quad { value: total, error: err })
            } else {
                Err(Error::numeric("quadrature interval collapsed", err))
            };
        }
        let (l, fl) = gk21_floor(&mut f, p.a, m);
        let (r, fr) = gk21_floor(&mut f, m, p.b);
        total += l.value + r.value - p.q.value;
        err += l.error + r.error - p.q.error;
        panels.push(Panel { a: p.a, b: m, q: l, floor: fl });
        panels.push(Panel { a: m, b: p.b, q: r, floor: fr });
        if panels.len() % 64 == 0 {
            // refresh sums to keep cancellation from accumulating
            total = panels.iter().map(|p| p.q.value).sum();
            err = panels.iter().map(|p| p.q.error).sum();
        }
    }
}

/// Integrates over consecutive breakpoints, summing values and errors.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    abs: f64,
    rel: f64,
    max_panels: usize,
) -> Result<Quad> {
    let mut out = Quad { value: 0.0, error: 0.0 };
    let share = abs / (points.len().max(2) - 1) as f64;
    for w in points.windows(2) {
        let q = integrate(&mut f, w[0], w[1], share, rel, max_panels)?;
        out.value += q.value;
        out.error += q.error;
    }
    Ok(out)
}
