//! Adaptive Dormand–Prince 5(4) integration with scalar event location.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            atol: 1e-9,
            rtol: 1e-9,
            initial_step: 1e-2,
            max_steps: 200_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the fifth-order solution and the
/// scaled error norm.
fn step<F>(f: &F, s: f64, y: &[f64], h: f64, opts: &OdeOptions) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    let mut tmp = vec![0.0; n];
    for stage in 0..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (j, kj) in k.iter().enumerate() {
                acc += h * A[stage][j] * kj[i];
            }
            tmp[i] = acc;
        }
        k.push(f(s + C[stage] * h, &tmp)?);
    }
    let mut y5 = vec![0.0; n];
    let mut err = 0.0f64;
    for i in 0..n {
        let mut hi = 0.0;
        let mut lo = 0.0;
        for stage in 0..7 {
            hi += B5[stage] * k[stage][i];
            lo += B4[stage] * k[stage][i];
        }
        y5[i] = y[i] + h * hi;
        let scale = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
        err = err.max((h * (hi - lo)).abs() / scale);
    }
    if y5.iter().any(|v| !v.is_finite()) {
        return Err(Error::FlowDomainExceeded(s));
    }
    Ok((y5, err))
}

/// Integrates `y' = f(s, y)` from `s0` to `s_end`.
pub fn integrate_to<F>(
    f: &F,
    s0: f64,
    y0: &[f64],
    s_end: f64,
    opts: &OdeOptions,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut s = s0;
    let mut y = y0.to_vec();
    let mut h = opts.initial_step.min(s_end - s0);
    let mut steps = 0;
    while s < s_end {
        if steps >= opts.max_steps {
            return Err(Error::FlowDomainExceeded(s));
        }
        steps += 1;
        h = h.min(s_end - s);
        let (y_new, err) = step(f, s, &y, h, opts)?;
        if err <= 1.0 {
            s = if s_end - s <= h { s_end } else { s + h };
            y = y_new;
        }
        h *= step_factor(err);
    }
    Ok(y)
}

/// Integrates forward and records the state each time the monotone scalar
/// `g(y)` reaches the next value of `targets` (sorted ascending).
///
/// Stops with `FlowDomainExceeded` when `s` passes `s_max` first.
pub fn integrate_events<F, G>(
    f: &F,
    s0: f64,
    y0: &[f64],
    g: &G,
    targets: &[f64],
    s_max: f64,
    opts: &OdeOptions,
) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
    G: Fn(&[f64]) -> f64,
{
    let mut out = Vec::with_capacity(targets.len());
    let mut s = s0;
    let mut y = y0.to_vec();
    let mut h = opts.initial_step;
    let mut steps = 0;
    let mut next = 0;
    while next < targets.len() && g(&y) >= targets[next] {
        out.push((s, y.clone()));
        next += 1;
    }
    while next < targets.len() {
        if steps >= opts.max_steps || s >= s_max {
            return Err(Error::FlowDomainExceeded(s));
        }
        steps += 1;
        let (y_new, err) = step(f, s, &y, h, opts)?;
        if err > 1.0 {
            h *= step_factor(err);
            continue;
        }
        while next < targets.len() && g(&y_new) >= targets[next] {
            let (hs, ys) = locate(f, s, &y, h, g, targets[next], opts)?;
            out.push((s + hs, ys));
            next += 1;
        }
        s += h;
        y = y_new;
        h *= step_factor(err);
    }
    Ok(out)
}

/// Illinois regula falsi on the step length so that `g` hits `target`
/// inside `[s, s+h]`.
fn locate<F, G>(
    f: &F,
    s: f64,
    y: &[f64],
    h: f64,
    g: &G,
    target: f64,
    opts: &OdeOptions,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
    G: Fn(&[f64]) -> f64,
{
    let (mut lo, mut glo) = (0.0, g(y) - target);
    if glo >= 0.0 {
        return Ok((0.0, y.to_vec()));
    }
    let mut y_hi = step(f, s, y, h, opts)?.0;
    let (mut hi, mut ghi) = (h, g(&y_hi) - target);
    let mut residual = ghi;
    let tol = 1e-14 * (1.0 + target.abs());
    let mut side = 0;
    for _ in 0..100 {
        if residual <= tol || hi - lo <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
        let mid = (lo * ghi - hi * glo) / (ghi - glo);
        let mid = if mid > lo && mid < hi {
            mid
        } else {
            0.5 * (lo + hi)
        };
        let ym = step(f, s, y, mid, opts)?.0;
        let gm = g(&ym) - target;
        if gm >= 0.0 {
            (hi, ghi, y_hi, residual) = (mid, gm, ym, gm);
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        } else {
            (lo, glo) = (mid, gm);
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        }
    }
    Ok((hi, y_hi))
}

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let f = |_s: f64, y: &[f64]| Ok(vec![y[0]]);
        let y = integrate_to(&f, 0.0, &[1.0], 2.0, &OdeOptions::default()).unwrap();
        assert!((y[0] - 2f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn harmonic_oscillator_events() {
        // y = (sin, cos, s); event on the clock component
        let f = |_s: f64, y: &[f64]| Ok(vec![y[1], -y[0], 1.0]);
        let g = |y: &[f64]| y[2];
        let hits = integrate_events(
            &f,
            0.0,
            &[0.0, 1.0, 0.0],
            &g,
            &[0.5, 1.0, 3.0],
            10.0,
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(hits.len(), 3);
        for ((s, y), t) in hits.iter().zip([0.5, 1.0, 3.0]) {
            assert!((s - t).abs() < 1e-12);
            assert!((y[0] - t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn event_beyond_budget() {
        let f = |_s: f64, _y: &[f64]| Ok(vec![1.0]);
        let g = |y: &[f64]| y[0];
        let r = integrate_events(&f, 0.0, &[0.0], &g, &[5.0], 1.0, &OdeOptions::default());
        assert!(matches!(r, Err(Error::FlowDomainExceeded(_))));
    }
}
