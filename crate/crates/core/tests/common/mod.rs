//! Shared test oracles and models. Everything here is computed independently
//! of the library routines it is used to check.
#![allow(dead_code)]

use lorentz_ot::cost::{CostMatrix, ExtendedCost};
use lorentz_ot::spacetime::{CausalClass, Event, Minkowski, SpacetimeModel};
use nalgebra::DMatrix;

pub fn ev(c: &[f64]) -> Event {
    Event::from_slice(c)
}

/// `(2 dt - sqrt(dt^2 - |dx|^2))^2` on the closed future cone, `+inf` elsewhere.
pub fn closed_form_c2(x: &[f64], y: &[f64]) -> f64 {
    let dt = y[0] - x[0];
    let dx2: f64 = x[1..]
        .iter()
        .zip(&y[1..])
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    let interval = dt * dt - dx2;
    let scale = dt * dt + dx2;
    if dt == 0.0 && dx2 == 0.0 {
        return 0.0;
    }
    if dt < 0.0 || interval < -1e-12 * scale {
        return f64::INFINITY;
    }
    let d = if interval > 1e-12 * scale {
        interval.sqrt()
    } else {
        0.0
    };
    let c1 = 2.0 * dt - d;
    c1 * c1
}

/// Minkowski with `tau = 2t`, but reporting non-affine minimizers so that the
/// geodesic integrator is exercised.
pub struct FlatViaOde(pub Minkowski);

impl SpacetimeModel for FlatViaOde {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }
    fn metric(&self, x: &Event) -> DMatrix<f64> {
        self.0.metric(x)
    }
    fn tau(&self, x: &Event) -> f64 {
        self.0.tau(x)
    }
    fn dtau(&self, x: &Event) -> Vec<f64> {
        self.0.dtau(x)
    }
    fn lorentz_distance(&self, x: &Event, y: &Event) -> f64 {
        self.0.lorentz_distance(x, y)
    }
    fn causal_classify(&self, x: &Event, y: &Event) -> CausalClass {
        self.0.causal_classify(x, y)
    }
}

/// Flat metric with the time function `3t + sin(t)/2`. Geodesics are straight
/// but `L1` along them is not constant in the affine parameter.
pub struct WarpedTau(pub Minkowski);

impl SpacetimeModel for WarpedTau {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }
    fn metric(&self, x: &Event) -> DMatrix<f64> {
        self.0.metric(x)
    }
    fn tau(&self, x: &Event) -> f64 {
        3.0 * x.time() + 0.5 * x.time().sin()
    }
    fn dtau(&self, x: &Event) -> Vec<f64> {
        let mut d = vec![0.0; self.dimension()];
        d[0] = 3.0 + 0.5 * x.time().cos();
        d
    }
    fn lorentz_distance(&self, x: &Event, y: &Event) -> f64 {
        self.0.lorentz_distance(x, y)
    }
    fn causal_classify(&self, x: &Event, y: &Event) -> CausalClass {
        self.0.causal_classify(x, y)
    }
}

/// Cheapest assignment over all permutations, summed in row order with the
/// given row weights; `None` when every permutation hits an infinite cost.
pub fn brute_force_assignment(m: &CostMatrix, weights: &[f64]) -> Option<f64> {
    let k = m.rows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best: Option<f64> = None;
    permute(&mut perm, 0, &mut |p| {
        let mut total = 0.0;
        for (i, &j) in p.iter().enumerate() {
            match m.get(i, j) {
                ExtendedCost::Finite(c) => total += weights[i] * c,
                ExtendedCost::PlusInfinity => return,
            }
        }
        if best.is_none_or(|b| total < b) {
            best = Some(total);
        }
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Supply/demand feasibility by the subset condition: every set `S` of
/// sources needs `mu(S) <= nu(N(S))`, with `N(S)` the admissible targets.
pub fn hall_feasible(admissible: &dyn Fn(usize, usize) -> bool, mu: &[f64], nu: &[f64]) -> bool {
    let m = mu.len();
    for mask in 1u32..(1 << m) {
        let supply: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| mu[i]).sum();
        let demand: f64 = (0..nu.len())
            .filter(|&j| (0..m).any(|i| mask & (1 << i) != 0 && admissible(i, j)))
            .map(|j| nu[j])
            .sum();
        if supply > demand + 1e-12 {
            return false;
        }
    }
    true
}

/// Supremum over simple chains from `anchor` to each support pair of
/// `sum c(x_p, y_p) - c(x_next, y_p)`. Pairs with an infinite step are
/// skipped; unreachable pairs get `None`.
pub fn chain_labels(support: &[(usize, usize)], m: &CostMatrix, anchor: usize) -> Vec<Option<f64>> {
    let k = support.len();
    let mut best = vec![None; k];
    let mut used = vec![false; k];
    used[anchor] = true;
    walk(support, m, anchor, 0.0, &mut used, &mut best);
    best
}

fn walk(
    support: &[(usize, usize)],
    m: &CostMatrix,
    at: usize,
    value: f64,
    used: &mut Vec<bool>,
    best: &mut Vec<Option<f64>>,
) {
    if best[at].is_none_or(|b: f64| value > b) {
        best[at] = Some(value);
    }
    let (i, j) = support[at];
    let own = m.get(i, j).to_f64();
    for next in 0..support.len() {
        if used[next] {
            continue;
        }
        let ExtendedCost::Finite(cross) = m.get(support[next].0, j) else {
            continue;
        };
        used[next] = true;
        walk(support, m, next, value + own - cross, used, best);
        used[next] = false;
    }
}

/// Central difference of a scalar function along coordinate `k`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, at: &[f64], k: usize, h: f64) -> f64 {
    let mut p = at.to_vec();
    let mut q = at.to_vec();
    p[k] += h;
    q[k] -= h;
    (f(&p) - f(&q)) / (2.0 * h)
}
