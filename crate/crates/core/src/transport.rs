//! Transport map recovery from a potential: `d_x phi = dL2/dv(x, v)` is
//! inverted for `v` and the target is `exp_L(x, v)`. The discrete argmax
//! of `psi(y) - c2(x, y)` is computed alongside as an oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{dc2_dx, CostMatrix};
use crate::error::{Error, Result};
use crate::kantorovich::SolveResult;
use crate::lagrangian::{dl2_dv, exp_l, fiber_hessian, is_strictly_timelike, l2, minimizer};
use crate::measures::{marginals, pushforward, MARGINAL_TOL};
use crate::potentials::{extend_potential, sup_minus, ExtReal, PotentialPair};
use crate::spacetime::{euclidean_norm, Covector, Event, SpacetimeModel, TangentVector};

/// Required `|dL2/dv(v) - p|` for a twist solution.
pub const TWIST_TOL: f64 = 1e-9;
/// Targets whose oracle value is within this of the best are ties.
pub const TIE_TOL: f64 = 1e-8;
/// Twist and oracle targets closer than this are the same point.
pub const SNAP_TOL: f64 = 1e-4;

const NEWTON_MAX_ITER: usize = 100;

/// Central-difference gradient of the extended potential with one
/// Richardson step, `step` being the coarse spacing.
pub fn numeric_gradient_phi(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    targets: &[Event],
    x: &Event,
    step: f64,
) -> Result<Covector> {
    let eval = |p: &Event| {
        extend_potential(model, pp, targets, p)
            .finite()
            .ok_or(Error::NonFiniteNeighborhood)
    };
    eval(x)?;
    let d = x.dim();
    let mut components = Vec::with_capacity(d);
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let diff = |h: f64| -> Result<f64> {
            Ok((eval(&x.offset(&e, h))? - eval(&x.offset(&e, -h))?) / (2.0 * h))
        };
        let coarse = diff(step)?;
        let fine = diff(0.5 * step)?;
        components.push((4.0 * fine - coarse) / 3.0);
    }
    Covector::new(x.clone(), components)
}

/// Default gradient spacing at `x`.
pub fn default_step(x: &Event) -> f64 {
    1e-5 * (1.0 + euclidean_norm(x.coords()))
}

/// Solves `dL2/dv(x, v) = p` for strictly timelike `v` by damped Newton on
/// `L2(v) - <p, v>`, then returns `(v, exp_L(x, v))`.
pub fn invert_twist(
    model: &dyn SpacetimeModel,
    x: &Event,
    p: &Covector,
    warm_start: Option<&TangentVector>,
) -> Result<(TangentVector, Event)> {
    let d = x.dim();
    if p.components.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.components.len(),
        });
    }
    let pnorm = p.norm();
    let mut v = match warm_start {
        Some(w) if is_strictly_timelike(model, w) => {
            TangentVector::new(x.clone(), w.components.clone())?
        }
        _ => {
            let mut e0 = vec![0.0; d];
            e0[0] = 1.0;
            let unit = TangentVector::new(x.clone(), e0)?;
            let q = dl2_dv(model, &unit)?;
            unit.scaled(pnorm.max(1e-300) / q.norm())
        }
    };
    let objective = |v: &TangentVector| -> f64 { l2(model, v).to_f64() - p.apply(&v.components) };
    let residual_of = |v: &TangentVector| -> Result<(Vec<f64>, f64)> {
        let g = dl2_dv(model, v)?;
        let r: Vec<f64> = g
            .components
            .iter()
            .zip(&p.components)
            .map(|(a, b)| a - b)
            .collect();
        let n = euclidean_norm(&r);
        Ok((r, n))
    };

    let (mut r, mut rn) = residual_of(&v)?;
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= TWIST_TOL {
            let y = exp_l(model, &v, 1.0)?;
            return Ok((v, y));
        }
        let hess = fiber_hessian(model, &v).map_err(|_| Error::NoTimelikeSolution)?;
        let step = hess
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&r))
            .ok_or(Error::NoTimelikeSolution)?;
        let f0 = objective(&v);
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = TangentVector {
                base: x.clone(),
                components: v
                    .components
                    .iter()
                    .zip(step.iter())
                    .map(|(a, s)| a - alpha * s)
                    .collect(),
            };
            if is_strictly_timelike(model, &trial) {
                let (tr, tn) = residual_of(&trial)?;
                if objective(&trial) <= f0 + 1e-12 * (1.0 + f0.abs()) || tn < rn {
                    break Some((trial, tr, tn));
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break None;
            }
        };
        let Some((nv, nr, nn)) = accepted else {
            return Err(Error::NoTimelikeSolution);
        };
        v = nv;
        r = nr;
        rn = nn;
    }
    Err(Error::NoTimelikeSolution)
}

/// How the gradient route compared to the oracle at one source point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStatus {
    /// Twist target within the snap distance of the oracle target.
    Agreed,
    Disagreed,
    /// The potential is not smooth around the point, or the twist equation
    /// could not be solved there; the oracle target stands alone.
    Skipped,
    /// The oracle had several maximizers and the lowest index was kept.
    Tied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub source_index: usize,
    pub target_index: usize,
    pub target: Event,
    pub velocity: Option<TangentVector>,
    pub gradient: Option<Covector>,
    /// `|dc2/dx(x, T(x)) + d_x phi| / (1 + |d_x phi|)`, infinite when unavailable.
    pub residual: f64,
    /// Lorentzian distance from the source to its image.
    pub distance: f64,
    pub status: MapStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub entries: Vec<MapEntry>,
}

impl TransportMap {
    /// Fraction of entries whose gradient route reproduced the oracle.
    pub fn agreement_rate(&self) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        let agreed = self
            .entries
            .iter()
            .filter(|e| e.status == MapStatus::Agreed)
            .count();
        agreed as f64 / self.entries.len() as f64
    }

    pub fn count(&self, status: MapStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.residual.is_finite())
            .map(|e| e.residual)
            .fold(0.0, f64::max)
    }

    /// Image of each source point, `None` where no entry exists.
    pub fn images(&self, sources: usize) -> Vec<Option<Event>> {
        let mut out = vec![None; sources];
        for e in &self.entries {
            out[e.source_index] = Some(e.target.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverOptions {
    pub tie_tol: f64,
    pub snap_tol: f64,
    /// Keep going on ties instead of failing with `AmbiguousArgmax`.
    pub allow_ties: bool,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            tie_tol: TIE_TOL,
            snap_tol: SNAP_TOL,
            allow_ties: false,
        }
    }
}

/// Maximizers of `psi(y_j) - c2(x_i, y_j)` within `tie_tol` of the best.
pub fn argmax_targets(
    pp: &PotentialPair,
    matrix: &CostMatrix,
    i: usize,
    tie_tol: f64,
) -> Vec<usize> {
    let values: Vec<ExtReal> = (0..matrix.cols())
        .map(|j| sup_minus(pp.psi[j], matrix.get(i, j)))
        .collect();
    let best = values.iter().copied().fold(ExtReal::MinusInf, ExtReal::max);
    match best {
        ExtReal::Finite(b) => (0..values.len())
            .filter(|&j| values[j].finite().is_some_and(|v| v >= b - tie_tol))
            .collect(),
        ExtReal::PlusInf => (0..values.len())
            .filter(|&j| values[j] == ExtReal::PlusInf)
            .collect(),
        ExtReal::MinusInf => Vec::new(),
    }
}

/// Recovers `T` at every mass-carrying source point with default options.
pub fn recover_map(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    result: &SolveResult,
    matrix: &CostMatrix,
) -> Result<TransportMap> {
    recover_map_with(model, pp, result, matrix, &RecoverOptions::default())
}

pub fn recover_map_with(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    result: &SolveResult,
    matrix: &CostMatrix,
    opts: &RecoverOptions,
) -> Result<TransportMap> {
    let (rows, _) = marginals(&result.coupling);
    let carrying: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] > 0.0).collect();
    let entries: Vec<Result<MapEntry>> = carrying
        .par_iter()
        .map(|&i| recover_one(model, pp, matrix, i, opts))
        .collect();
    Ok(TransportMap {
        entries: entries.into_iter().collect::<Result<_>>()?,
    })
}

fn recover_one(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    matrix: &CostMatrix,
    i: usize,
    opts: &RecoverOptions,
) -> Result<MapEntry> {
    let x = &matrix.sources[i];
    let candidates = argmax_targets(pp, matrix, i, opts.tie_tol);
    let tied = candidates.len() > 1;
    if tied && !opts.allow_ties {
        return Err(Error::AmbiguousArgmax {
            source_index: i,
            candidates,
        });
    }
    let j = *candidates.first().ok_or(Error::NonFiniteNeighborhood)?;
    let oracle = matrix.targets[j].clone();
    let distance = model.lorentz_distance(x, &oracle);

    let mut entry = MapEntry {
        source_index: i,
        target_index: j,
        target: oracle.clone(),
        velocity: None,
        gradient: None,
        residual: f64::INFINITY,
        distance,
        status: if tied {
            MapStatus::Tied
        } else {
            MapStatus::Skipped
        },
    };

    // shrink the stencil until it stays inside the cell of `j`
    let Some(step) = (0..4)
        .map(|k| default_step(x) * 10f64.powi(-k))
        .find(|&h| smooth_around(pp, matrix, model, x, j, h))
    else {
        return Ok(entry);
    };
    let Ok(p) = numeric_gradient_phi(model, pp, &matrix.targets, x, step) else {
        return Ok(entry);
    };
    if let Ok(g) = dc2_dx(model, x, &oracle) {
        let r: Vec<f64> = g
            .components
            .iter()
            .zip(&p.components)
            .map(|(a, b)| a + b)
            .collect();
        entry.residual = euclidean_norm(&r) / (1.0 + p.norm());
    }
    let warm = minimizer(model, x, &oracle)
        .ok()
        .map(|c| c.initial_velocity);
    entry.gradient = Some(p.clone());
    if let Ok((v, y)) = invert_twist(model, x, &p, warm.as_ref()) {
        entry.velocity = Some(v);
        let gap = euclidean_norm(&y.delta_to(&oracle));
        if !tied {
            entry.status = if gap <= opts.snap_tol {
                MapStatus::Agreed
            } else {
                MapStatus::Disagreed
            };
        }
    }
    Ok(entry)
}

/// True when the oracle maximizer `j` stays the unique best target on the
/// whole difference stencil around `x`.
fn smooth_around(
    pp: &PotentialPair,
    matrix: &CostMatrix,
    model: &dyn SpacetimeModel,
    x: &Event,
    j: usize,
    step: f64,
) -> bool {
    let d = x.dim();
    for k in 0..d {
        for h in [step, -step, 0.5 * step, -0.5 * step] {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            let p = x.offset(&e, h);
            let best = (0..matrix.cols())
                .map(|q| {
                    (
                        q,
                        sup_minus(
                            pp.psi[q],
                            crate::cost::cost_c2(model, &p, &matrix.targets[q]),
                        ),
                    )
                })
                .fold((usize::MAX, ExtReal::MinusInf), |acc, (q, v)| {
                    if v > acc.1 {
                        (q, v)
                    } else {
                        acc
                    }
                });
            if best.0 != j || !best.1.is_finite() {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapCouplingReport {
    /// Rows whose plan mass is spread over more than one column.
    pub split_rows: Vec<usize>,
    /// Rows whose plan mass does not sit on the column chosen by the map.
    pub mismatched_rows: Vec<usize>,
    /// Sources without a map entry.
    pub unmapped_rows: Vec<usize>,
    /// Largest weight difference between `T_# mu` and `nu`.
    pub pushforward_error: f64,
}

impl MapCouplingReport {
    pub fn passed(&self) -> bool {
        self.split_rows.is_empty()
            && self.mismatched_rows.is_empty()
            && self.unmapped_rows.is_empty()
            && self.pushforward_error <= MARGINAL_TOL
    }
}

/// Checks that the plan is `(id, T)_# mu`: one column per row, the column
/// chosen by `T`, and `T_# mu = nu`.
pub fn verify_map_induces_coupling(tm: &TransportMap, result: &SolveResult) -> MapCouplingReport {
    let coupling = &result.coupling;
    let m = coupling.source.len();
    let mut rep = MapCouplingReport::default();
    let mut column = vec![None; m];
    for e in &tm.entries {
        column[e.source_index] = Some(e.target_index);
    }
    for i in 0..m {
        let cols: Vec<usize> = coupling
            .plan()
            .iter()
            .filter(|e| e.i == i && e.mass > MARGINAL_TOL)
            .map(|e| e.j)
            .collect();
        if cols.len() > 1 {
            rep.split_rows.push(i);
        }
        match column[i] {
            None => rep.unmapped_rows.push(i),
            Some(j) => {
                if cols.iter().any(|&c| c != j) {
                    rep.mismatched_rows.push(i);
                }
            }
        }
    }
    let images = tm.images(m);
    rep.pushforward_error = match pushforward(&coupling.source, &images) {
        Ok(push) => {
            let target = &coupling.target;
            let mut err: f64 = 0.0;
            for (y, w) in target.points().iter().zip(target.weights()) {
                let got = push
                    .points()
                    .iter()
                    .position(|q| q == y)
                    .map_or(0.0, |k| push.weights()[k]);
                err = err.max((got - w).abs());
            }
            for (q, w) in push.points().iter().zip(push.weights()) {
                if !target.points().contains(q) {
                    err = err.max(*w);
                }
            }
            err
        }
        Err(_) => f64::INFINITY,
    };
    rep
}
