//! Events, tangent data and the causal structure of a spacetime model.
//!
//! Coordinates follow the product splitting `M = R x R^n`: coordinate 0 is
//! the time component, coordinates `1..=n` are spatial. The Minkowski model
//! with time function `tau(t, x) = 2t` is the reference backend; curved
//! backends implement [`SpacetimeModel`] and supply Christoffel symbols.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `dt^2 - |dx|^2` used to classify light-like pairs.
pub const CAUSAL_EPS: f64 = 1e-12;

/// A point of the spacetime in global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Event(Vec<f64>);

impl Event {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an event needs at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "event coordinates must be finite".into(),
            ));
        }
        Ok(Event(coords))
    }

    /// Builds an event from coordinates already known to be valid.
    ///
    /// Panics on invalid input; intended for literals in tests and generators.
    pub fn from_slice(coords: &[f64]) -> Self {
        Event::new(coords.to_vec()).expect("valid event coordinates")
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn time(&self) -> f64 {
        self.0[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.0[1..]
    }

    /// `self + t * v`, componentwise.
    pub fn offset(&self, v: &[f64], t: f64) -> Event {
        Event(self.0.iter().zip(v).map(|(a, b)| a + t * b).collect())
    }

    /// Componentwise difference `other - self`.
    pub fn delta_to(&self, other: &Event) -> Vec<f64> {
        other.0.iter().zip(&self.0).map(|(b, a)| b - a).collect()
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Event,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Event, components: Vec<f64>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "tangent components must be finite".into(),
            ));
        }
        Ok(TangentVector { base, components })
    }

    /// Tangent vector at the origin of `R^{1+n}`; convenient in tests.
    pub fn at_origin(components: &[f64]) -> Self {
        let base = Event(vec![0.0; components.len()]);
        TangentVector::new(base, components.to_vec()).expect("valid components")
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            components: self.components.iter().map(|c| c * s).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0.0)
    }
}

/// A linear functional on the tangent space at `base`; pairing is the
/// coordinate dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector {
    pub base: Event,
    pub components: Vec<f64>,
}

impl Covector {
    pub fn new(base: Event, components: Vec<f64>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: components.len(),
            });
        }
        Ok(Covector { base, components })
    }

    pub fn apply(&self, v: &[f64]) -> f64 {
        self.components.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm of the components.
    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.components)
    }
}

/// Causal relation of an ordered pair `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalClass {
    /// `y` lies in the open future cone of `x`.
    Chronological,
    /// `y` lies on the future light cone of `x`, `y != x`.
    NullCausal,
    Equal,
    Unrelated,
}

impl CausalClass {
    pub fn is_causal(self) -> bool {
        !matches!(self, CausalClass::Unrelated)
    }
}

/// A globally hyperbolic spacetime in global coordinates, together with a
/// time function satisfying the splitting bound
/// `d tau(v) >= max{2|v|_g, |v|_h}` on future causal vectors.
pub trait SpacetimeModel: Send + Sync {
    /// Total dimension `1 + n`.
    fn dimension(&self) -> usize;

    /// Metric coefficients `g_ab` at `x`.
    fn metric(&self, x: &Event) -> DMatrix<f64>;

    fn tau(&self, x: &Event) -> f64;

    /// Differential of the time function at `x`.
    fn dtau(&self, x: &Event) -> Vec<f64>;

    /// Lorentzian time separation; zero unless `y` is chronologically after `x`.
    fn lorentz_distance(&self, x: &Event, y: &Event) -> f64;

    fn causal_classify(&self, x: &Event, y: &Event) -> CausalClass;

    /// Norm of the auxiliary complete Riemannian metric.
    fn h_norm(&self, x: &Event, v: &[f64]) -> f64 {
        let _ = x;
        euclidean_norm(v)
    }

    /// Christoffel symbols `Gamma^k_ij` at `x`, flattened as `k*d*d + i*d + j`.
    fn christoffel(&self, x: &Event) -> Vec<f64> {
        let d = self.dimension();
        let _ = x;
        vec![0.0; d * d * d]
    }

    /// Whether affinely parametrized straight lines are action minimizers
    /// with constant `L1` (flat metric and affine time function).
    fn affine_minimizers(&self) -> bool {
        false
    }

    fn inner(&self, x: &Event, u: &[f64], v: &[f64]) -> f64 {
        let g = self.metric(x);
        let d = self.dimension();
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += g[(a, b)] * u[a] * v[b];
            }
        }
        s
    }
}

/// Minkowski space `R^{1+n}` with `tau(t, x) = 2t` and Euclidean `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Minkowski {
    spatial_dim: usize,
}

impl Minkowski {
    pub fn new(spatial_dim: usize) -> Result<Self> {
        if spatial_dim == 0 {
            return Err(Error::InvalidInput("spatial dimension must be >= 1".into()));
        }
        Ok(Minkowski { spatial_dim })
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }
}

/// Minkowski classification of a coordinate displacement.
pub fn classify_displacement(delta: &[f64]) -> CausalClass {
    if delta.iter().all(|&c| c == 0.0) {
        return CausalClass::Equal;
    }
    let dt = delta[0];
    if dt <= 0.0 {
        return CausalClass::Unrelated;
    }
    let space_sq: f64 = delta[1..].iter().map(|c| c * c).sum();
    let time_sq = dt * dt;
    let q = time_sq - space_sq;
    if q.abs() <= CAUSAL_EPS * (time_sq + space_sq) {
        CausalClass::NullCausal
    } else if q > 0.0 {
        CausalClass::Chronological
    } else {
        CausalClass::Unrelated
    }
}

impl SpacetimeModel for Minkowski {
    fn dimension(&self) -> usize {
        self.spatial_dim + 1
    }

    fn metric(&self, _x: &Event) -> DMatrix<f64> {
        let d = self.dimension();
        let mut g = DMatrix::identity(d, d);
        g[(0, 0)] = -1.0;
        g
    }

    fn tau(&self, x: &Event) -> f64 {
        2.0 * x.time()
    }

    fn dtau(&self, _x: &Event) -> Vec<f64> {
        let mut d = vec![0.0; self.dimension()];
        d[0] = 2.0;
        d
    }

    fn lorentz_distance(&self, x: &Event, y: &Event) -> f64 {
        let delta = x.delta_to(y);
        match classify_displacement(&delta) {
            CausalClass::Chronological => minkowski_interval(&delta).sqrt(),
            _ => 0.0,
        }
    }

    fn causal_classify(&self, x: &Event, y: &Event) -> CausalClass {
        classify_displacement(&x.delta_to(y))
    }

    fn affine_minimizers(&self) -> bool {
        true
    }

    fn inner(&self, _x: &Event, u: &[f64], v: &[f64]) -> f64 {
        -u[0] * v[0] + u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// `dt^2 - |dx|^2` for a displacement.
pub fn minkowski_interval(delta: &[f64]) -> f64 {
    delta[0] * delta[0] - delta[1..].iter().map(|c| c * c).sum::<f64>()
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn check_dim(model: &dyn SpacetimeModel, got: usize) -> Result<()> {
    if got != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            got,
        });
    }
    Ok(())
}

/// `g_x(u, v)`.
pub fn metric_inner(
    model: &dyn SpacetimeModel,
    u: &TangentVector,
    v: &TangentVector,
) -> Result<f64> {
    check_dim(model, u.components.len())?;
    check_dim(model, v.components.len())?;
    if u.base != v.base {
        return Err(Error::InvalidInput(
            "tangent vectors live at different events".into(),
        ));
    }
    Ok(model.inner(&u.base, &u.components, &v.components))
}

pub fn causal_classify(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> Result<CausalClass> {
    check_dim(model, x.dim())?;
    check_dim(model, y.dim())?;
    Ok(model.causal_classify(x, y))
}

pub fn lorentz_distance(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> f64 {
    model.lorentz_distance(x, y)
}

pub fn tau(model: &dyn SpacetimeModel, x: &Event) -> f64 {
    model.tau(x)
}

pub fn h_norm(model: &dyn SpacetimeModel, v: &TangentVector) -> f64 {
    model.h_norm(&v.base, &v.components)
}

/// `d_x tau(v)`.
pub fn dtau_apply(model: &dyn SpacetimeModel, v: &TangentVector) -> f64 {
    model
        .dtau(&v.base)
        .iter()
        .zip(&v.components)
        .map(|(a, b)| a * b)
        .sum()
}

/// `|v|_g = sqrt(|g(v, v)|)`.
pub fn g_norm(model: &dyn SpacetimeModel, v: &TangentVector) -> f64 {
    model
        .inner(&v.base, &v.components, &v.components)
        .abs()
        .sqrt()
}

/// Future-directed causal (closed cone, zero excluded), with the same
/// relative tolerance as the event classifier.
pub fn is_future_causal(model: &dyn SpacetimeModel, v: &TangentVector) -> bool {
    if v.is_zero() {
        return false;
    }
    let q = model.inner(&v.base, &v.components, &v.components);
    let h = model.h_norm(&v.base, &v.components);
    q <= CAUSAL_EPS * h * h && dtau_apply(model, v) > 0.0
}

/// Slack of the splitting inequality `d tau(v) - max{2|v|_g, |v|_h}`.
pub fn splitting_slack(model: &dyn SpacetimeModel, v: &TangentVector) -> f64 {
    let lhs = dtau_apply(model, v);
    lhs - (2.0 * g_norm(model, v)).max(h_norm(model, v))
}

/// A random future-directed causal vector in `R^{1+n}` (Minkowski cone):
/// spatial part uniform in direction, speed uniform in `[0, 1]`, with a
/// fraction of exactly null samples.
pub fn sample_future_causal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut dir: Vec<f64> = (1..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = euclidean_norm(&dir).max(1e-300);
    dir.iter_mut().for_each(|c| *c /= norm);
    let speed: f64 = if rng.random_bool(0.1) {
        1.0
    } else {
        rng.random_range(0.0..1.0)
    };
    let t: f64 = rng.random_range(0.01..10.0);
    let mut v = Vec::with_capacity(dim);
    v.push(t);
    v.extend(dir.iter().map(|c| c * speed * t));
    v
}
