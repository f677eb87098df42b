//! The Lagrangians `L1(v) = d tau(v) - |v|_g` and `L2 = L1^2` on the closed
//! future cone, their actions, action minimizers and the `L2`-exponential map.
//!
//! Minimizers of the `L2` action are maximizing geodesics reparametrized so
//! that `L1` of the velocity is constant. On models with affine minimizers
//! (Minkowski with a linear time function) they are straight segments; on
//! other models the geodesic equation is integrated and the parameter is
//! changed by inverting the cumulative `L1` integral.

use crate::cost::ExtendedCost;
use crate::error::{Error, Result};
use crate::ode::{integrate_events, integrate_to, OdeOptions};
use crate::spacetime::{
    dtau_apply, g_norm, h_norm, is_future_causal, CausalClass, Covector, Event, SpacetimeModel,
    TangentVector,
};

/// Default number of trapezoid intervals for sampled minimizers.
pub const DEFAULT_INTERVALS: usize = 256;

/// Gate for "strictly timelike": `|v|_g >= TIMELIKE_EPS * |v|_h`.
pub const TIMELIKE_EPS: f64 = 1e-8;

/// Which action functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    A1,
    A2,
}

/// One node of a sampled curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub point: Event,
    pub velocity: TangentVector,
}

/// An action minimizer from `base` sampled on a uniform grid of `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerCurve {
    pub base: Event,
    pub initial_velocity: TangentVector,
    pub duration: f64,
    pub samples: Vec<CurveSample>,
}

impl MinimizerCurve {
    pub fn end(&self) -> &Event {
        &self.samples.last().expect("non-empty curve").point
    }
}

fn l1_raw(model: &dyn SpacetimeModel, v: &TangentVector) -> Option<f64> {
    if v.is_zero() {
        return Some(0.0);
    }
    if !is_future_causal(model, v) {
        return None;
    }
    Some((dtau_apply(model, v) - g_norm(model, v)).max(0.0))
}

/// `L1(v)`; `+inf` outside the closed future cone.
pub fn l1(model: &dyn SpacetimeModel, v: &TangentVector) -> ExtendedCost {
    l1_raw(model, v).map_or(ExtendedCost::PlusInfinity, ExtendedCost::Finite)
}

/// `L2(v) = L1(v)^2`; `+inf` outside the closed future cone.
pub fn l2(model: &dyn SpacetimeModel, v: &TangentVector) -> ExtendedCost {
    l1_raw(model, v).map_or(ExtendedCost::PlusInfinity, |a| ExtendedCost::Finite(a * a))
}

/// True when `v` is future-directed and `|v|_g >= TIMELIKE_EPS |v|_h`.
pub fn is_strictly_timelike(model: &dyn SpacetimeModel, v: &TangentVector) -> bool {
    !v.is_zero()
        && is_future_causal(model, v)
        && g_norm(model, v) >= TIMELIKE_EPS * h_norm(model, v)
}

/// Fiber derivative `dL2/dv = 2 L1(v) (d tau + g(v, .)/|v|_g)`.
pub fn dl2_dv(model: &dyn SpacetimeModel, v: &TangentVector) -> Result<Covector> {
    if !is_strictly_timelike(model, v) {
        return Err(Error::NullOrSpacelikeVelocity);
    }
    let x = &v.base;
    let gv = g_norm(model, v);
    let l1 = dtau_apply(model, v) - gv;
    let dtau = model.dtau(x);
    let g = model.metric(x);
    let d = model.dimension();
    let components = (0..d)
        .map(|a| {
            let lowered: f64 = (0..d).map(|b| g[(a, b)] * v.components[b]).sum();
            2.0 * l1 * (dtau[a] + lowered / gv)
        })
        .collect();
    Ok(Covector {
        base: x.clone(),
        components,
    })
}

/// Fiber Hessian of `L2` at `v`, by central differences of [`dl2_dv`].
pub fn fiber_hessian(
    model: &dyn SpacetimeModel,
    v: &TangentVector,
) -> Result<nalgebra::DMatrix<f64>> {
    let d = v.components.len();
    let scale = h_norm(model, v).max(1e-12);
    let step = 1e-6 * scale;
    let mut hess = nalgebra::DMatrix::zeros(d, d);
    for b in 0..d {
        let mut plus = v.clone();
        let mut minus = v.clone();
        plus.components[b] += step;
        minus.components[b] -= step;
        let gp = dl2_dv(model, &plus)?;
        let gm = dl2_dv(model, &minus)?;
        for a in 0..d {
            hess[(a, b)] = (gp.components[a] - gm.components[a]) / (2.0 * step);
        }
    }
    Ok(0.5 * (&hess + hess.transpose()))
}

/// Composite-trapezoid action of a curve sampled on a uniform grid.
///
/// `+inf` as soon as one sampled velocity leaves the closed future cone.
pub fn action(
    model: &dyn SpacetimeModel,
    samples: &[CurveSample],
    which: ActionKind,
) -> ExtendedCost {
    if samples.len() < 2 {
        return ExtendedCost::Finite(0.0);
    }
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        match l1_raw(model, &s.velocity) {
            Some(a) => values.push(match which {
                ActionKind::A1 => a,
                ActionKind::A2 => a * a,
            }),
            None => return ExtendedCost::PlusInfinity,
        }
    }
    let mut total = 0.0;
    for (w, s) in values.windows(2).zip(samples.windows(2)) {
        total += 0.5 * (w[0] + w[1]) * (s[1].t - s[0].t);
    }
    ExtendedCost::Finite(total)
}

/// Minimizer on `[0, 1]` with [`DEFAULT_INTERVALS`] trapezoid intervals.
pub fn minimizer(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> Result<MinimizerCurve> {
    minimizer_with(model, x, y, DEFAULT_INTERVALS)
}

/// Minimizer from `x` to `y` sampled with `intervals` uniform steps.
pub fn minimizer_with(
    model: &dyn SpacetimeModel,
    x: &Event,
    y: &Event,
    intervals: usize,
) -> Result<MinimizerCurve> {
    match model.causal_classify(x, y) {
        CausalClass::Chronological | CausalClass::NullCausal => {}
        _ => return Err(Error::NotCausallyRelated),
    }
    let intervals = intervals.max(1);
    let ts: Vec<f64> = (0..=intervals)
        .map(|k| k as f64 / intervals as f64)
        .collect();
    if model.affine_minimizers() {
        let vel = x.delta_to(y);
        let samples = ts
            .iter()
            .map(|&t| {
                let p = x.offset(&vel, t);
                CurveSample {
                    t,
                    velocity: TangentVector {
                        base: p.clone(),
                        components: vel.clone(),
                    },
                    point: p,
                }
            })
            .collect();
        return Ok(MinimizerCurve {
            base: x.clone(),
            initial_velocity: TangentVector {
                base: x.clone(),
                components: vel,
            },
            duration: 1.0,
            samples,
        });
    }

    let w = shoot_geodesic(model, x, y)?;
    let opts = OdeOptions::default();
    let rhs = geodesic_rhs(model);
    let d = model.dimension();
    let mut y0 = x.coords().to_vec();
    y0.extend_from_slice(&w);
    y0.push(0.0);
    let total = integrate_to(&rhs, 0.0, &y0, 1.0, &opts)?[2 * d];
    if total <= 0.0 {
        return Err(Error::NotCausallyRelated);
    }
    let targets: Vec<f64> = ts.iter().map(|t| t * total).collect();
    let g = |state: &[f64]| state[2 * d];
    let hits = integrate_events(&rhs, 0.0, &y0, &g, &targets, 2.0, &opts)?;
    let mut samples = Vec::with_capacity(hits.len());
    for (&t, (_, state)) in ts.iter().zip(hits) {
        let point = Event::new(state[..d].to_vec())?;
        let geo_vel = TangentVector {
            base: point.clone(),
            components: state[d..2 * d].to_vec(),
        };
        let rate = l1_raw(model, &geo_vel).ok_or(Error::NotCausallyRelated)?;
        // d sigma / dt = total / L1(geodesic velocity)
        let velocity = geo_vel.scaled(total / rate);
        samples.push(CurveSample { t, point, velocity });
    }
    let initial_velocity = samples[0].velocity.clone();
    Ok(MinimizerCurve {
        base: x.clone(),
        initial_velocity,
        duration: 1.0,
        samples,
    })
}

/// `exp_L(x, t v)`: the `L2`-exponential map.
pub fn exp_l(model: &dyn SpacetimeModel, v: &TangentVector, t: f64) -> Result<Event> {
    if v.is_zero() || t == 0.0 {
        return Ok(v.base.clone());
    }
    if model.affine_minimizers() {
        if !is_future_causal(model, v) || t < 0.0 {
            return Err(Error::FlowDomainExceeded(0.0));
        }
        return Ok(v.base.offset(&v.components, t));
    }
    exp_l_ode(model, v, t)
}

/// `exp_L` through geodesic integration and reparametrization, regardless
/// of whether the model has a closed form.
pub fn exp_l_ode(model: &dyn SpacetimeModel, v: &TangentVector, t: f64) -> Result<Event> {
    if v.is_zero() || t == 0.0 {
        return Ok(v.base.clone());
    }
    if t < 0.0 || !is_future_causal(model, v) {
        return Err(Error::FlowDomainExceeded(0.0));
    }
    let rate0 = l1_raw(model, v).unwrap_or(0.0);
    if rate0 <= 0.0 {
        return Err(Error::FlowDomainExceeded(0.0));
    }
    let d = model.dimension();
    let mut y0 = v.base.coords().to_vec();
    y0.extend_from_slice(&v.components);
    y0.push(0.0);
    let rhs = geodesic_rhs(model);
    let g = |state: &[f64]| state[2 * d] / rate0;
    let s_max = 1e3 * (1.0 + t);
    let hits = integrate_events(&rhs, 0.0, &y0, &g, &[t], s_max, &OdeOptions::default())?;
    Event::new(hits[0].1[..d].to_vec())
}

/// Right-hand side of the geodesic equation, augmented with the running
/// `L1` integral. State layout: `[x (d), u (d), I]`.
fn geodesic_rhs(model: &dyn SpacetimeModel) -> impl Fn(f64, &[f64]) -> Result<Vec<f64>> + '_ {
    move |s: f64, state: &[f64]| {
        let d = model.dimension();
        let x = Event::new(state[..d].to_vec()).map_err(|_| Error::FlowDomainExceeded(s))?;
        let u = &state[d..2 * d];
        let gamma = model.christoffel(&x);
        let mut out = vec![0.0; 2 * d + 1];
        out[..d].copy_from_slice(u);
        for k in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += gamma[k * d * d + i * d + j] * u[i] * u[j];
                }
            }
            out[d + k] = -acc;
        }
        let vel = TangentVector {
            base: x,
            components: u.to_vec(),
        };
        out[2 * d] = l1_raw(model, &vel).ok_or(Error::FlowDomainExceeded(s))?;
        Ok(out)
    }
}

/// Endpoint at parameter 1 of the `g`-geodesic with initial velocity `w`.
fn geodesic_endpoint(model: &dyn SpacetimeModel, x: &Event, w: &[f64]) -> Result<Vec<f64>> {
    let d = model.dimension();
    let mut y0 = x.coords().to_vec();
    y0.extend_from_slice(w);
    y0.push(0.0);
    let state = integrate_to(&geodesic_rhs(model), 0.0, &y0, 1.0, &OdeOptions::default())?;
    Ok(state[..d].to_vec())
}

/// Newton shooting for the initial velocity of the geodesic from `x` to `y`.
fn shoot_geodesic(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> Result<Vec<f64>> {
    let d = model.dimension();
    let mut w = x.delta_to(y);
    let scale = 1.0 + w.iter().map(|c| c.abs()).fold(0.0, f64::max);
    for _ in 0..50 {
        let end = geodesic_endpoint(model, x, &w)?;
        let res: Vec<f64> = end.iter().zip(y.coords()).map(|(a, b)| a - b).collect();
        if res.iter().map(|r| r.abs()).fold(0.0, f64::max) <= 1e-11 * scale {
            return Ok(w);
        }
        let h = 1e-7 * scale;
        let mut jac = nalgebra::DMatrix::zeros(d, d);
        for b in 0..d {
            let mut wp = w.clone();
            wp[b] += h;
            let ep = geodesic_endpoint(model, x, &wp)?;
            for a in 0..d {
                jac[(a, b)] = (ep[a] - end[a]) / h;
            }
        }
        let rhs = nalgebra::DVector::from_vec(res);
        let step = jac.lu().solve(&rhs).ok_or(Error::NotCausallyRelated)?;
        for a in 0..d {
            w[a] -= step[a];
        }
    }
    Err(Error::FlowDomainExceeded(1.0))
}
