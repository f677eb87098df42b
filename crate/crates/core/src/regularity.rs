//! Grid probes of the extended potential `phi_hat(x) = max_j psi_j - c2(x, y_j)`:
//! local boundedness, semiconvexity with a quadratic modulus, timelike
//! separation of the plan, compactness of near-optimal targets and the gap
//! between `phi_hat` and targets close to the light cone.
//!
//! The rectifiability of the non-differentiability set is not probed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_c2, CostMatrix};
use crate::error::{Error, Result};
use crate::io::{f17, f17_opt, f17_vec};
use crate::kantorovich::{feasible_with, SolveResult};
use crate::measures::{marginals, DiscreteMeasure};
use crate::potentials::{extend_potential, inf_plus, sup_minus, ExtReal, PotentialPair};
use crate::spacetime::{euclidean_norm, CausalClass, Event, SpacetimeModel};

/// Default nodes per scanned axis.
pub const DEFAULT_NODES: usize = 33;
/// Half-width given to box axes along which the sources do not spread.
pub const DEGENERATE_PAD: f64 = 0.1;

/// Axis-aligned box in coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    #[serde(with = "f17_vec")]
    pub lo: Vec<f64>,
    #[serde(with = "f17_vec")]
    pub hi: Vec<f64>,
}

impl RegionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: lo.len().max(2),
                got: hi.len(),
            });
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(Error::InvalidInput(
                "box bounds must be finite with lo <= hi".into(),
            ));
        }
        Ok(RegionBox { lo, hi })
    }

    /// Bounding box of `points`, shrunk about its center by `factor`;
    /// flat axes get half-width [`DEGENERATE_PAD`].
    pub fn around(points: &[Event], factor: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("no points to bound".into()))?;
        let d = first.dim();
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for p in points {
            for k in 0..d {
                lo[k] = lo[k].min(p.coords()[k]);
                hi[k] = hi[k].max(p.coords()[k]);
            }
        }
        for k in 0..d {
            let c = 0.5 * (lo[k] + hi[k]);
            let mut half = 0.5 * (hi[k] - lo[k]) * factor;
            if half < 1e-12 {
                half = DEGENERATE_PAD;
            }
            lo[k] = c - half;
            hi[k] = c + half;
        }
        RegionBox::new(lo, hi)
    }

    /// The default region: the 0.5-shrunk box of the mass-carrying sources.
    pub fn auto(mu: &DiscreteMeasure) -> Result<Self> {
        let pts: Vec<Event> = mu
            .points()
            .iter()
            .zip(mu.weights())
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, _)| p.clone())
            .collect();
        Self::around(&pts, 0.5)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// The same box scaled about its center.
    pub fn shrunk(&self, factor: f64) -> Self {
        let c = self.center();
        let half = |k: usize| 0.5 * (self.hi[k] - self.lo[k]) * factor;
        RegionBox {
            lo: (0..self.dim()).map(|k| c[k] - half(k)).collect(),
            hi: (0..self.dim()).map(|k| c[k] + half(k)).collect(),
        }
    }
}

/// A planar grid over two coordinate axes of a box; the other coordinates
/// sit at the box center.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub region: RegionBox,
    pub axes: (usize, usize),
    pub nodes: usize,
}

impl Grid {
    pub fn new(region: RegionBox, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidInput(
                "a grid needs at least 3 nodes per axis".into(),
            ));
        }
        Ok(Grid {
            region,
            axes: (0, 1),
            nodes,
        })
    }

    /// Same region with the step halved.
    pub fn refined(&self) -> Self {
        Grid {
            region: self.region.clone(),
            axes: self.axes,
            nodes: 2 * (self.nodes - 1) + 1,
        }
    }

    pub fn steps(&self) -> (f64, f64) {
        let (a, b) = self.axes;
        let n = (self.nodes - 1) as f64;
        (
            (self.region.hi[a] - self.region.lo[a]) / n,
            (self.region.hi[b] - self.region.lo[b]) / n,
        )
    }

    pub fn step(&self) -> f64 {
        let (ha, hb) = self.steps();
        ha.max(hb)
    }

    pub fn len(&self) -> usize {
        self.nodes * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node `(r, s)` at flat index `r * nodes + s`.
    pub fn point(&self, r: usize, s: usize) -> Event {
        let (a, b) = self.axes;
        let (ha, hb) = self.steps();
        let mut c = self.region.center();
        c[a] = self.region.lo[a] + r as f64 * ha;
        c[b] = self.region.lo[b] + s as f64 * hb;
        Event::from_slice(&c)
    }

    pub fn points(&self) -> Vec<Event> {
        (0..self.nodes)
            .flat_map(|r| (0..self.nodes).map(move |s| (r, s)))
            .map(|(r, s)| self.point(r, s))
            .collect()
    }
}

/// Values of `f` on every grid node, in flat order.
pub fn scan<F>(f: &F, grid: &Grid) -> Vec<ExtReal>
where
    F: Fn(&Event) -> ExtReal + Sync,
{
    grid.points().par_iter().map(f).collect()
}

/// Extrema of `f` over the grid; fails at the first non-finite node.
pub fn local_bounds_of<F>(f: &F, grid: &Grid) -> Result<(f64, f64)>
where
    F: Fn(&Event) -> ExtReal + Sync,
{
    let values = finite_scan(f, grid)?;
    Ok(values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        }))
}

fn finite_scan<F>(f: &F, grid: &Grid) -> Result<Vec<f64>>
where
    F: Fn(&Event) -> ExtReal + Sync,
{
    scan(f, grid)
        .into_iter()
        .enumerate()
        .map(|(k, v)| v.finite().ok_or(Error::RegionLeavesDomain(k)))
        .collect()
}

/// Smallest `C >= 0` with `f(x+d) + f(x-d) - 2 f(x) >= -C |d|^2` over grid
/// nodes `x` and axis/diagonal offsets `d` of one and two steps.
pub fn semiconvexity_of<F>(f: &F, grid: &Grid) -> Result<f64>
where
    F: Fn(&Event) -> ExtReal + Sync,
{
    let v = finite_scan(f, grid)?;
    let n = grid.nodes as isize;
    let (ha, hb) = grid.steps();
    let at = |r: isize, s: isize| v[(r * n + s) as usize];
    let mut offsets = Vec::new();
    for m in [1isize, 2] {
        offsets.extend([(m, 0), (0, m), (m, m), (m, -m)]);
    }
    let mut c: f64 = 0.0;
    for r in 0..n {
        for s in 0..n {
            for &(dr, ds) in &offsets {
                let (r1, s1, r2, s2) = (r + dr, s + ds, r - dr, s - ds);
                if r1 < 0 || r1 >= n || r2 < 0 || r2 >= n || s1 < 0 || s1 >= n || s2 < 0 || s2 >= n
                {
                    continue;
                }
                let second = at(r1, s1) + at(r2, s2) - 2.0 * at(r, s);
                let norm2 = (dr as f64 * ha).powi(2) + (ds as f64 * hb).powi(2);
                c = c.max(-second / norm2);
            }
        }
    }
    Ok(c)
}

/// Extrema of `phi_hat` on the grid.
pub fn check_local_boundedness(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    targets: &[Event],
    grid: &Grid,
) -> Result<(f64, f64)> {
    local_bounds_of(&|x: &Event| extend_potential(model, pp, targets, x), grid)
}

/// Semiconvexity constant of `phi_hat` on the grid.
pub fn check_semiconvexity(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    targets: &[Event],
    grid: &Grid,
) -> Result<f64> {
    semiconvexity_of(&|x: &Event| extend_potential(model, pp, targets, x), grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Smallest Lorentzian distance over mass-carrying plan entries.
    #[serde(with = "f17")]
    pub delta: f64,
    /// The entry attaining it.
    pub pair: Option<(usize, usize)>,
}

/// `min d(x_i, y_j)` over the plan entries carrying mass.
pub fn check_timelike_separation(result: &SolveResult, model: &dyn SpacetimeModel) -> Separation {
    let c = &result.coupling;
    let mut best = Separation {
        delta: f64::INFINITY,
        pair: None,
    };
    for e in c.plan().iter().filter(|e| e.mass > 0.0) {
        let d = model.lorentz_distance(&c.source.points()[e.i], &c.target.points()[e.j]);
        if d < best.delta {
            best = Separation {
                delta: d,
                pair: Some((e.i, e.j)),
            };
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearOptimal {
    /// Euclidean diameter of the collected targets.
    #[serde(with = "f17")]
    pub diameter: f64,
    /// Collected target support indices.
    pub targets: Vec<usize>,
    /// Collected lattice points, by index into the supplied lattice.
    pub lattice: Vec<usize>,
}

/// Targets `y` with `psi(y) - c2(x, y) >= phi_hat(x) - 1` for some grid node
/// `x` of `k`. Lattice points are scored with `psi_hat(y) = min_i c2(x_i, y) + phi_i`.
pub fn check_near_optimal_compactness(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    matrix: &CostMatrix,
    k: &Grid,
    lattice: &[Event],
) -> Result<NearOptimal> {
    let nodes = k.points();
    let phis: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(n, x)| {
            extend_potential(model, pp, &matrix.targets, x)
                .finite()
                .ok_or(Error::RegionLeavesDomain(n))
        })
        .collect::<Result<_>>()?;
    let near = |y: &Event, psi: ExtReal| {
        nodes.iter().zip(&phis).any(|(x, &phi)| {
            sup_minus(psi, cost_c2(model, x, y))
                .finite()
                .is_some_and(|v| v >= phi - 1.0)
        })
    };
    let targets: Vec<usize> = (0..matrix.cols())
        .filter(|&j| near(&matrix.targets[j], pp.psi[j]))
        .collect();
    let lattice_hits: Vec<usize> = (0..lattice.len())
        .filter(|&l| {
            let y = &lattice[l];
            let psi_hat = (0..matrix.rows()).fold(ExtReal::PlusInf, |acc, i| {
                acc.min(inf_plus(cost_c2(model, &matrix.sources[i], y), pp.phi[i]))
            });
            near(y, psi_hat)
        })
        .collect();
    let mut pts: Vec<&Event> = targets.iter().map(|&j| &matrix.targets[j]).collect();
    pts.extend(lattice_hits.iter().map(|&l| &lattice[l]));
    let mut diameter: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            diameter = diameter.max(euclidean_norm(&pts[a].delta_to(pts[b])));
        }
    }
    Ok(NearOptimal {
        diameter,
        targets,
        lattice: lattice_hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightConeGap {
    /// Probe radius in Lorentzian distance.
    #[serde(with = "f17")]
    pub probe: f64,
    /// `(source index, margin)` per mass-carrying source; `+inf` when no
    /// target lies within the probe.
    pub margins: Vec<(usize, ExtReal)>,
}

impl LightConeGap {
    pub fn min_margin(&self) -> ExtReal {
        self.margins
            .iter()
            .fold(ExtReal::PlusInf, |acc, &(_, m)| acc.min(m))
    }

    pub fn failing(&self) -> Vec<usize> {
        self.margins
            .iter()
            .filter(|(_, m)| *m <= ExtReal::Finite(0.0))
            .map(|&(i, _)| i)
            .collect()
    }
}

/// `phi_hat(x) - max {psi(y) - c2(x, y) : d(x, y) <= delta / 2}` at each
/// mass-carrying source.
pub fn check_light_cone_gap(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    result: &SolveResult,
    delta: f64,
) -> LightConeGap {
    let c = &result.coupling;
    let targets = c.target.points();
    let probe = 0.5 * delta;
    let (rows, _) = marginals(c);
    let margins = (0..rows.len())
        .filter(|&i| rows[i] > 0.0)
        .map(|i| {
            let x = &c.source.points()[i];
            let phi = extend_potential(model, pp, targets, x);
            let close = targets
                .iter()
                .zip(&pp.psi)
                .filter(|(y, _)| model.lorentz_distance(x, y) <= probe)
                .fold(ExtReal::MinusInf, |acc, (y, &psi)| {
                    acc.max(sup_minus(psi, cost_c2(model, x, y)))
                });
            let margin = match (phi, close) {
                (_, ExtReal::MinusInf) => ExtReal::PlusInf,
                (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a - b),
                _ => ExtReal::MinusInf,
            };
            (i, margin)
        })
        .collect();
    LightConeGap { probe, margins }
}

/// Preconditions of the regularity statements that an instance may miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// The supports share a point.
    pub supports_overlap: bool,
    /// No coupling lives on chronologically related pairs only.
    pub not_strictly_timelike: bool,
}

impl HypothesisFlags {
    pub fn any(&self) -> bool {
        self.supports_overlap || self.not_strictly_timelike
    }
}

pub fn hypothesis_flags(
    model: &dyn SpacetimeModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> HypothesisFlags {
    let strictly = feasible_with(mu.weights(), nu.weights(), |i, j| {
        model.causal_classify(&mu.points()[i], &nu.points()[j]) == CausalClass::Chronological
    });
    HypothesisFlags {
        supports_overlap: !mu.disjoint_from(nu),
        not_strictly_timelike: !strictly,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub region: RegionBox,
    pub grid_nodes: usize,
    #[serde(with = "f17")]
    pub grid_step: f64,
    pub flags: HypothesisFlags,
    #[serde(with = "f17_opt")]
    pub bound_min: Option<f64>,
    #[serde(with = "f17_opt")]
    pub bound_max: Option<f64>,
    #[serde(with = "f17_opt")]
    pub semiconvexity_c: Option<f64>,
    /// The constant again with the step halved.
    #[serde(with = "f17_opt")]
    pub semiconvexity_c_refined: Option<f64>,
    #[serde(with = "f17")]
    pub min_delta: f64,
    pub delta_pair: Option<(usize, usize)>,
    #[serde(with = "f17_opt")]
    pub near_optimal_diameter: Option<f64>,
    #[serde(with = "f17_opt")]
    pub light_cone_min_margin: Option<f64>,
    /// One line per failed check, naming the check and the indices involved.
    pub failures: Vec<String>,
    /// Checks not run because a precondition is missing.
    pub skipped: Vec<String>,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Two constants agree within a factor two, or are both negligible.
pub fn stable_under_refinement(coarse: f64, fine: f64) -> bool {
    let floor = 1e-6;
    (coarse <= floor && fine <= floor)
        || (fine <= 2.0 * coarse + floor && coarse <= 2.0 * fine + floor)
}

/// Runs every check with the default region and grid.
pub fn run_checks(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    result: &SolveResult,
    matrix: &CostMatrix,
    nodes: usize,
) -> Result<RegularityReport> {
    let mu = &result.coupling.source;
    let nu = &result.coupling.target;
    let region = RegionBox::auto(mu)?;
    let grid = Grid::new(region.clone(), nodes)?;
    let flags = hypothesis_flags(model, mu, nu);
    let mut rep = RegularityReport {
        region,
        grid_nodes: nodes,
        grid_step: grid.step(),
        flags,
        bound_min: None,
        bound_max: None,
        semiconvexity_c: None,
        semiconvexity_c_refined: None,
        min_delta: 0.0,
        delta_pair: None,
        near_optimal_diameter: None,
        light_cone_min_margin: None,
        failures: Vec::new(),
        skipped: Vec::new(),
    };
    let targets = &matrix.targets;

    match check_local_boundedness(model, pp, targets, &grid) {
        Ok((lo, hi)) => {
            rep.bound_min = Some(lo);
            rep.bound_max = Some(hi);
        }
        Err(e) => rep
            .failures
            .push(format!("regularity/local_boundedness: {e}")),
    }

    match (
        check_semiconvexity(model, pp, targets, &grid),
        check_semiconvexity(model, pp, targets, &grid.refined()),
    ) {
        (Ok(c), Ok(cf)) => {
            rep.semiconvexity_c = Some(c);
            rep.semiconvexity_c_refined = Some(cf);
            if !stable_under_refinement(c, cf) {
                rep.failures.push(format!(
                    "regularity/semiconvexity: constant {c} changes to {cf} when the step is halved"
                ));
            }
        }
        (Err(e), _) | (_, Err(e)) => rep.failures.push(format!("regularity/semiconvexity: {e}")),
    }

    let sep = check_timelike_separation(result, model);
    rep.min_delta = sep.delta;
    rep.delta_pair = sep.pair;
    if !(sep.delta > 0.0) && !flags.not_strictly_timelike {
        let (i, j) = sep.pair.unwrap_or((0, 0));
        rep.failures.push(format!(
            "regularity/timelike_separation: plan entry ({i}, {j}) has zero Lorentzian distance"
        ));
    }

    match check_near_optimal_compactness(model, pp, matrix, &grid, &[]) {
        Ok(n) if n.diameter.is_finite() => rep.near_optimal_diameter = Some(n.diameter),
        Ok(_) => rep
            .failures
            .push("regularity/near_optimal_compactness: unbounded candidate set".into()),
        Err(e) => rep
            .failures
            .push(format!("regularity/near_optimal_compactness: {e}")),
    }

    if flags.supports_overlap {
        rep.skipped
            .push("regularity/light_cone_gap: supports of source and target intersect".into());
    } else {
        let gap = check_light_cone_gap(model, pp, result, sep.delta.max(0.0));
        rep.light_cone_min_margin = Some(gap.min_margin().to_f64());
        let failing = gap.failing();
        if !failing.is_empty() {
            let line =
                format!("regularity/light_cone_gap: non-positive margin at sources {failing:?}");
            if flags.not_strictly_timelike {
                rep.skipped.push(line);
            } else {
                rep.failures.push(line);
            }
        }
    }
    Ok(rep)
}
