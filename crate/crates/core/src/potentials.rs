//! Extended-real potentials for `c2`: transform, convexification, the chain
//! construction of a potential from an optimal support, and duality checks.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{cost_c2, CostMatrix, ExtendedCost};
use crate::error::{Error, Result, Side};
use crate::kantorovich::SolveResult;
use crate::measures::{Coupling, DiscreteMeasure};
use crate::spacetime::{Event, SpacetimeModel};

/// Absolute tolerance for equality of `psi - phi` and `c2` on the support.
pub const SUPPORT_EQ_TOL: f64 = 1e-8;

/// A value in `[-inf, +inf]`. Serializes as a number or `"+inf"`/`"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PlusInf,
    MinusInf,
}

use ExtReal::{Finite, MinusInf, PlusInf};

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Finite(v) => v,
            PlusInf => f64::INFINITY,
            MinusInf => f64::NEG_INFINITY,
        }
    }

    /// Maps IEEE infinities to the infinite variants. NaN is rejected.
    pub fn from_f64(v: f64) -> Result<Self> {
        if v.is_nan() {
            Err(Error::InvalidInput("NaN is not an extended real".into()))
        } else if v == f64::INFINITY {
            Ok(PlusInf)
        } else if v == f64::NEG_INFINITY {
            Ok(MinusInf)
        } else {
            Ok(Finite(v))
        }
    }

    /// Adds a finite constant; infinities are unchanged.
    pub fn shift(self, k: f64) -> Self {
        match self {
            Finite(v) => Finite(v + k),
            other => other,
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `"+inf"`, `"-inf"` or the value with 17 significant digits.
    pub fn to_csv_field(self) -> String {
        match self {
            Finite(v) => crate::io::fmt17(v),
            PlusInf => "+inf".into(),
            MinusInf => "-inf".into(),
        }
    }

    pub fn parse_csv_field(s: &str) -> Result<Self> {
        match s.trim() {
            "+inf" | "inf" => Ok(PlusInf),
            "-inf" => Ok(MinusInf),
            t => t
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad potential field {t:?}: {e}")))
                .and_then(Self::from_f64),
        }
    }
}

impl From<ExtendedCost> for ExtReal {
    fn from(c: ExtendedCost) -> Self {
        match c {
            ExtendedCost::Finite(v) => Finite(v),
            ExtendedCost::PlusInfinity => PlusInf,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        crate::io::F17(self.to_f64()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = crate::io::F17::deserialize(d)?.0;
        ExtReal::from_f64(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv_field())
    }
}

/// `psi(y) - c(x, y)` inside a supremum: any difference of two infinities,
/// and any term with `c = +inf`, is `-inf`.
pub fn sup_minus(psi: ExtReal, c: ExtendedCost) -> ExtReal {
    match (psi, c) {
        (_, ExtendedCost::PlusInfinity) => MinusInf,
        (Finite(a), ExtendedCost::Finite(b)) => Finite(a - b),
        (inf, ExtendedCost::Finite(_)) => inf,
    }
}

/// `c(x, y) + phi(x)` inside an infimum: `+inf + (-inf) = +inf`.
pub fn inf_plus(c: ExtendedCost, phi: ExtReal) -> ExtReal {
    match (c, phi) {
        (ExtendedCost::PlusInfinity, _) => PlusInf,
        (ExtendedCost::Finite(a), Finite(b)) => Finite(a + b),
        (ExtendedCost::Finite(_), inf) => inf,
    }
}

/// `psi(y) - phi(x)`; when both are infinite the difference is `-inf`.
pub fn psi_minus_phi(psi: ExtReal, phi: ExtReal) -> ExtReal {
    match (psi, phi) {
        (Finite(a), Finite(b)) => Finite(a - b),
        (Finite(_), PlusInf) => MinusInf,
        (Finite(_), MinusInf) => PlusInf,
        (inf, Finite(_)) => inf,
        _ => MinusInf,
    }
}

/// `psi(y) - c(x, y)` outside a supremum; `+inf - +inf` is `-inf`.
pub fn psi_minus_cost(psi: ExtReal, c: ExtendedCost) -> ExtReal {
    sup_minus(psi, c)
}

/// `c(x, y) - phi(x)`; `+inf - +inf` is `+inf`.
pub fn cost_minus_phi(c: ExtendedCost, phi: ExtReal) -> ExtReal {
    match (c, phi) {
        (ExtendedCost::PlusInfinity, _) => PlusInf,
        (ExtendedCost::Finite(a), Finite(b)) => Finite(a - b),
        (ExtendedCost::Finite(_), PlusInf) => MinusInf,
        (ExtendedCost::Finite(_), MinusInf) => PlusInf,
    }
}

/// `psi(y_j) = min_i (c2(x_i, y_j) + phi(x_i))`.
pub fn c2_transform(phi: &[ExtReal], matrix: &CostMatrix) -> Result<Vec<ExtReal>> {
    if phi.len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            got: phi.len(),
        });
    }
    Ok((0..matrix.cols())
        .map(|j| {
            (0..matrix.rows()).fold(PlusInf, |acc, i| {
                acc.min(inf_plus(matrix.get(i, j), phi[i]))
            })
        })
        .collect())
}

/// `phi(x_i) = max_j (psi(y_j) - c2(x_i, y_j))`.
pub fn c2_convexify(psi: &[ExtReal], matrix: &CostMatrix) -> Result<Vec<ExtReal>> {
    if psi.len() != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            got: psi.len(),
        });
    }
    Ok((0..matrix.rows())
        .map(|i| {
            (0..matrix.cols()).fold(MinusInf, |acc, j| {
                acc.max(sup_minus(psi[j], matrix.get(i, j)))
            })
        })
        .collect())
}

/// Bookkeeping from [`build_pi_solution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionLog {
    pub support_size: usize,
    /// Relaxation rounds until no label changed.
    pub rounds: usize,
    /// Support pairs not reachable from the anchor by finite chains.
    pub unreachable: Vec<usize>,
    /// Raw value at the anchor source before normalization.
    pub anchor_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPair {
    /// One value per source point (matrix row).
    pub phi: Vec<ExtReal>,
    /// One value per target point (matrix column).
    pub psi: Vec<ExtReal>,
    /// Anchor support pair `(i, j)`.
    pub anchor: (usize, usize),
    pub log: ConstructionLog,
}

impl PotentialPair {
    /// Recomputes `psi` as the transform of `phi`.
    pub fn from_phi(
        phi: Vec<ExtReal>,
        matrix: &CostMatrix,
        anchor: (usize, usize),
    ) -> Result<Self> {
        let psi = c2_transform(&phi, matrix)?;
        Ok(PotentialPair {
            phi,
            psi,
            anchor,
            log: ConstructionLog {
                support_size: 0,
                rounds: 0,
                unreachable: Vec::new(),
                anchor_offset: 0.0,
            },
        })
    }
}

/// Potential from the supremum over chains of support pairs starting at the
/// anchor:
///
/// `phi(x) = sup sum_{k=0..K} c2(x_k, y_k) - c2(x_{k+1}, y_k)`, `x_{K+1} = x`.
///
/// Computed as a longest-path problem on the support pairs, where the edge
/// `p -> q` weighs `c2(x_p, y_p) - c2(x_q, y_p)` and is absent when that cost
/// is infinite. A positive cycle means the support is not monotone.
pub fn build_pi_solution(
    support: &[(usize, usize)],
    matrix: &CostMatrix,
    anchor: (usize, usize),
) -> Result<PotentialPair> {
    let g = SupportGraph::new(support, matrix, anchor)?;
    let (label, rounds) = g.longest_paths(g.anchor_node)?;
    g.finish(&label, rounds)
}

/// The mean of the chain potentials over every anchor pair that reaches
/// the whole support, which is again a `pi`-solution.
///
/// A single chain potential is tight along its longest-path tree, so every
/// source also attains the maximum of `psi(y) - c2(x, y)` at the target of
/// its predecessor. With anchor `q` the edge `p -> q` is slack unless the
/// cycle `q -> p -> q` has zero weight, so the mean is tight off the support
/// only where optimal plans stop being unique. Falls back to the chain
/// potential of `anchor` when no pair reaches all others.
pub fn build_centered_pi_solution(
    support: &[(usize, usize)],
    matrix: &CostMatrix,
    anchor: (usize, usize),
) -> Result<PotentialPair> {
    let g = SupportGraph::new(support, matrix, anchor)?;
    let k = support.len();
    let mut sum = vec![0.0; k];
    let mut used = 0;
    let mut rounds = 0;
    for start in 0..k {
        let (label, r) = g.longest_paths(start)?;
        rounds = rounds.max(r);
        if label.iter().all(Option::is_some) {
            used += 1;
            for (s, l) in sum.iter_mut().zip(&label) {
                *s += l.unwrap_or(0.0);
            }
        }
    }
    if used == 0 {
        let (label, r) = g.longest_paths(g.anchor_node)?;
        return g.finish(&label, r);
    }
    let mean: Vec<Option<f64>> = sum.iter().map(|s| Some(s / used as f64)).collect();
    g.finish(&mean, rounds)
}

/// Support pairs as nodes; the edge `p -> q` weighs
/// `c2(x_p, y_p) - c2(x_q, y_p)` and exists when that cost is finite.
struct SupportGraph<'a> {
    support: &'a [(usize, usize)],
    matrix: &'a CostMatrix,
    anchor: (usize, usize),
    anchor_node: usize,
    own: Vec<f64>,
    tol: f64,
}

impl<'a> SupportGraph<'a> {
    fn new(
        support: &'a [(usize, usize)],
        matrix: &'a CostMatrix,
        anchor: (usize, usize),
    ) -> Result<Self> {
        let anchor_node = support
            .iter()
            .position(|&p| p == anchor)
            .ok_or(Error::AnchorNotInSupport(anchor.0, anchor.1))?;
        let own = support
            .iter()
            .map(|&(i, j)| {
                matrix.get(i, j).finite().ok_or_else(|| {
                    Error::InvalidInput(format!("support pair ({i}, {j}) has infinite cost"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(SupportGraph {
            support,
            matrix,
            anchor,
            anchor_node,
            own,
            tol: 1e-9 * (1.0 + matrix.max_finite()),
        })
    }

    fn weight(&self, p: usize, q: usize) -> Option<f64> {
        let (_, jp) = self.support[p];
        let (iq, _) = self.support[q];
        self.matrix.get(iq, jp).finite().map(|c| self.own[p] - c)
    }

    /// Longest path lengths from node `a`, with the number of relaxation
    /// rounds that changed something.
    fn longest_paths(&self, a: usize) -> Result<(Vec<Option<f64>>, usize)> {
        let k = self.support.len();
        let mut label: Vec<Option<f64>> = vec![None; k];
        label[a] = Some(0.0);
        let mut rounds = 0;
        loop {
            let mut changed = None;
            for p in 0..k {
                let Some(dp) = label[p] else { continue };
                for q in 0..k {
                    if let Some(w) = self.weight(p, q) {
                        let cand = dp + w;
                        if label[q].is_none_or(|dq| cand > dq + self.tol) {
                            label[q] = Some(cand);
                            changed = Some(q);
                        }
                    }
                }
            }
            match changed {
                None => break,
                Some(q) => {
                    rounds += 1;
                    if rounds > k {
                        return Err(Error::MonotonicityViolated(q));
                    }
                }
            }
        }
        // the start may only gain through a cycle, which must be non-positive
        if label[a].is_some_and(|d| d > self.tol) {
            return Err(Error::MonotonicityViolated(a));
        }
        Ok((label, rounds))
    }

    /// `phi(x) = max_p (value_p + c2(x_p, y_p) - c2(x, y_p))`, normalized to
    /// vanish at the anchor, and `psi` as its transform.
    fn finish(&self, value: &[Option<f64>], rounds: usize) -> Result<PotentialPair> {
        let matrix = self.matrix;
        let phi_raw: Vec<ExtReal> = (0..matrix.rows())
            .map(|i| {
                self.support.iter().zip(value).zip(&self.own).fold(
                    MinusInf,
                    |acc, ((&(_, j), v), own)| match v {
                        Some(v) => acc.max(sup_minus(Finite(v + own), matrix.get(i, j))),
                        None => acc,
                    },
                )
            })
            .collect();
        let offset = phi_raw[self.anchor.0].finite().unwrap_or(0.0);
        let phi: Vec<ExtReal> = phi_raw.into_iter().map(|v| v.shift(-offset)).collect();
        let psi = c2_transform(&phi, matrix)?;
        Ok(PotentialPair {
            phi,
            psi,
            anchor: self.anchor,
            log: ConstructionLog {
                support_size: self.support.len(),
                rounds,
                unreachable: (0..value.len()).filter(|&p| value[p].is_none()).collect(),
                anchor_offset: offset,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PiSolutionReport {
    /// Pairs with `psi - phi > c2`.
    pub inequality_violations: Vec<(usize, usize)>,
    /// Support pairs where `psi - phi` differs from `c2` by more than the tolerance.
    pub equality_violations: Vec<(usize, usize)>,
    pub max_equality_residual: f64,
    /// Mass-carrying sources with infinite `phi`.
    pub infinite_phi: Vec<usize>,
    /// Mass-carrying targets with infinite `psi`.
    pub infinite_psi: Vec<usize>,
}

impl PiSolutionReport {
    pub fn inequality_ok(&self) -> bool {
        self.inequality_violations.is_empty()
    }

    pub fn equality_ok(&self) -> bool {
        self.equality_violations.is_empty()
    }

    pub fn finiteness_ok(&self) -> bool {
        self.infinite_phi.is_empty() && self.infinite_psi.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.inequality_ok() && self.equality_ok() && self.finiteness_ok()
    }
}

/// Checks the global inequality, equality on the support of `coupling`, and
/// finiteness at every point carrying mass.
pub fn verify_pi_solution(
    pp: &PotentialPair,
    coupling: &Coupling,
    matrix: &CostMatrix,
) -> PiSolutionReport {
    let mut rep = PiSolutionReport::default();
    for i in 0..matrix.rows().min(pp.phi.len()) {
        for j in 0..matrix.cols().min(pp.psi.len()) {
            let lhs = psi_minus_phi(pp.psi[j], pp.phi[i]);
            let ok = match (lhs, matrix.get(i, j)) {
                (MinusInf, _) | (_, ExtendedCost::PlusInfinity) => true,
                (PlusInf, _) => false,
                (Finite(l), ExtendedCost::Finite(c)) => l <= c + SUPPORT_EQ_TOL,
            };
            if !ok {
                rep.inequality_violations.push((i, j));
            }
        }
    }
    for e in coupling.plan() {
        let lhs = psi_minus_phi(pp.psi[e.j], pp.phi[e.i]);
        let residual = match (lhs, matrix.get(e.i, e.j)) {
            (Finite(l), ExtendedCost::Finite(c)) => (l - c).abs(),
            _ => f64::INFINITY,
        };
        rep.max_equality_residual = rep.max_equality_residual.max(residual);
        if residual > SUPPORT_EQ_TOL {
            rep.equality_violations.push((e.i, e.j));
        }
    }
    let (row_mass, col_mass) = crate::measures::marginals(coupling);
    rep.infinite_phi = (0..row_mass.len())
        .filter(|&i| row_mass[i] > 0.0 && !pp.phi[i].is_finite())
        .collect();
    rep.infinite_psi = (0..col_mass.len())
        .filter(|&j| col_mass[j] > 0.0 && !pp.psi[j].is_finite())
        .collect();
    rep
}

/// Dual objective minus the primal cost:
/// `sum_j psi_j nu_j - sum_i phi_i mu_i - total_cost`.
pub fn duality_gap(
    pp: &PotentialPair,
    result: &SolveResult,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    let total = result
        .total_cost
        .finite()
        .ok_or_else(|| Error::InvalidInput("total cost is infinite".into()))?;
    let mut dual = 0.0;
    for (j, &w) in nu.weights().iter().enumerate() {
        let v = pp.psi[j].finite().ok_or(Error::NonIntegrablePotential {
            side: Side::Target,
            index: j,
        })?;
        dual += v * w;
    }
    for (i, &w) in mu.weights().iter().enumerate() {
        let v = pp.phi[i].finite().ok_or(Error::NonIntegrablePotential {
            side: Side::Source,
            index: i,
        })?;
        dual -= v * w;
    }
    Ok(dual - total)
}

/// `max_j (psi(y_j) - c2(x, y_j))` at an arbitrary event `x`.
pub fn extend_potential(
    model: &dyn SpacetimeModel,
    pp: &PotentialPair,
    targets: &[Event],
    x: &Event,
) -> ExtReal {
    targets
        .iter()
        .zip(&pp.psi)
        .fold(MinusInf, |acc, (y, &psi)| {
            acc.max(sup_minus(psi, cost_c2(model, x, y)))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::assemble_cost_matrix;
    use crate::kantorovich::solve;
    use crate::measures::{generate_instance, Profile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: ExtendedCost = ExtendedCost::PlusInfinity;

    fn f(v: f64) -> ExtendedCost {
        ExtendedCost::Finite(v)
    }

    fn table(rows: &[&[ExtendedCost]]) -> CostMatrix {
        CostMatrix::from_table(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rule_i_infinite_differences() {
        for a in [PlusInf, MinusInf] {
            for b in [PlusInf, MinusInf] {
                assert_eq!(psi_minus_phi(a, b), MinusInf);
            }
        }
        assert_eq!(psi_minus_phi(Finite(1.0), Finite(3.0)), Finite(-2.0));
        assert_eq!(psi_minus_phi(Finite(1.0), MinusInf), PlusInf);
    }

    #[test]
    fn rule_ii_psi_minus_infinite_cost() {
        assert_eq!(psi_minus_cost(PlusInf, INF), MinusInf);
        assert_eq!(psi_minus_cost(Finite(5.0), INF), MinusInf);
        assert_eq!(psi_minus_cost(PlusInf, f(1.0)), PlusInf);
    }

    #[test]
    fn rule_iii_cost_minus_infinite_phi() {
        assert_eq!(cost_minus_phi(INF, PlusInf), PlusInf);
        assert_eq!(cost_minus_phi(f(2.0), PlusInf), MinusInf);
        assert_eq!(cost_minus_phi(f(2.0), Finite(0.5)), Finite(1.5));
    }

    #[test]
    fn infimum_convention() {
        assert_eq!(inf_plus(INF, MinusInf), PlusInf);
        assert_eq!(inf_plus(f(1.0), MinusInf), MinusInf);
    }

    #[test]
    fn ordering_of_extended_reals() {
        assert!(MinusInf < Finite(-1e300));
        assert!(Finite(1e300) < PlusInf);
        assert_eq!(Finite(2.0).max(MinusInf), Finite(2.0));
    }

    #[test]
    fn csv_fields_round_trip() {
        for v in [PlusInf, MinusInf, Finite(0.1), Finite(-3.5e-7)] {
            assert_eq!(ExtReal::parse_csv_field(&v.to_csv_field()).unwrap(), v);
        }
    }

    #[test]
    fn transform_examples() {
        let m = table(&[&[f(4.0), f(7.0)]]);
        assert_eq!(
            c2_transform(&[Finite(0.0)], &m).unwrap(),
            vec![Finite(4.0), Finite(7.0)]
        );
        assert_eq!(
            c2_transform(&[PlusInf], &m).unwrap(),
            vec![PlusInf, PlusInf]
        );
        let col = table(&[&[f(4.0)], &[f(2.0)]]);
        assert_eq!(
            c2_transform(&[Finite(0.0), Finite(1.0)], &col).unwrap(),
            vec![Finite(3.0)]
        );
    }

    #[test]
    fn convexify_examples() {
        let m = table(&[&[f(4.0), f(7.0)]]);
        let psi = c2_transform(&[Finite(0.0)], &m).unwrap();
        assert_eq!(c2_convexify(&psi, &m).unwrap(), vec![Finite(0.0)]);
        assert_eq!(
            c2_convexify(&[MinusInf, MinusInf], &m).unwrap(),
            vec![MinusInf]
        );
        let blocked = table(&[&[INF, INF], &[f(1.0), f(1.0)]]);
        let phi = c2_convexify(&[Finite(3.0), Finite(2.0)], &blocked).unwrap();
        assert_eq!(phi[0], MinusInf);
        assert_eq!(phi[1], Finite(2.0));
    }

    /// Longest chain value by explicit enumeration of every chain of
    /// length `<= len` starting at the anchor.
    fn chain_oracle(
        support: &[(usize, usize)],
        m: &CostMatrix,
        anchor: usize,
        len: usize,
    ) -> Vec<ExtReal> {
        let c = |i: usize, j: usize| m.get(i, j);
        let mut best = vec![MinusInf; m.rows()];
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(vec![anchor], 0.0)];
        while let Some((chain, acc)) = stack.pop() {
            let last = *chain.last().unwrap();
            let (il, jl) = support[last];
            let own = c(il, jl).finite().unwrap();
            for (x, b) in best.iter_mut().enumerate() {
                *b = b.max(sup_minus(Finite(acc + own), c(x, jl)));
            }
            if chain.len() < len {
                for q in 0..support.len() {
                    if let Some(cq) = c(support[q].0, jl).finite() {
                        let mut next = chain.clone();
                        next.push(q);
                        stack.push((next, acc + own - cq));
                    }
                }
            }
        }
        let off = best[support[anchor].0].finite().unwrap();
        best.into_iter().map(|v| v.shift(-off)).collect()
    }

    fn close(a: &[ExtReal], b: &[ExtReal]) -> bool {
        a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Finite(p), Finite(q)) => (p - q).abs() < 1e-9,
            _ => x == y,
        })
    }

    #[test]
    fn singleton_support_anchor_is_zero() {
        let m = table(&[&[f(4.0)]]);
        let pp = build_pi_solution(&[(0, 0)], &m, (0, 0)).unwrap();
        assert_eq!(pp.phi, vec![Finite(0.0)]);
        assert_eq!(pp.psi, vec![Finite(4.0)]);
    }

    #[test]
    fn two_by_two_matches_chain_enumeration() {
        let m = table(&[&[f(1.0), f(2.0)], &[f(3.0), f(1.0)]]);
        let sup = [(0, 0), (1, 1)];
        let pp = build_pi_solution(&sup, &m, (0, 0)).unwrap();
        assert!(close(&pp.phi, &chain_oracle(&sup, &m, 0, 2)));
        assert_eq!(pp.phi[0], Finite(0.0));
    }

    #[test]
    fn seeded_instances_match_chain_enumeration() {
        for seed in 0..8 {
            let (model, mu, nu) = generate_instance(seed, 2, (5, 5), Profile::Slices).unwrap();
            let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
            let sol = solve(&m, &mu, &nu).unwrap();
            let sup = sol.coupling.support();
            let pp = build_pi_solution(&sup, &m, sup[0]).unwrap();
            assert!(
                close(&pp.phi, &chain_oracle(&sup, &m, 0, sup.len())),
                "seed {seed}"
            );
            assert!(pp.log.rounds <= sup.len());
            let rep = verify_pi_solution(&pp, &sol.coupling, &m);
            assert!(rep.passed(), "seed {seed}: {rep:?}");
            assert!(duality_gap(&pp, &sol, &mu, &nu).unwrap().abs() <= 1e-8);
        }
    }

    #[test]
    fn centered_potential_is_tight_only_on_support() {
        for seed in 0..6 {
            let (model, mu, nu) = generate_instance(seed, 2, (6, 6), Profile::Slices).unwrap();
            let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
            let sol = solve(&m, &mu, &nu).unwrap();
            let sup = sol.coupling.support();
            let pp = build_centered_pi_solution(&sup, &m, sup[0]).unwrap();
            assert!(verify_pi_solution(&pp, &sol.coupling, &m).passed());
            assert_eq!(pp.phi[sup[0].0], Finite(0.0));
            let mut tight = Vec::new();
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    let slack = m.get(i, j).finite().unwrap()
                        - (pp.psi[j].finite().unwrap() - pp.phi[i].finite().unwrap());
                    if slack < 1e-8 {
                        tight.push((i, j));
                    }
                }
            }
            assert_eq!(tight, sup, "seed {seed}");
            // the chain potential is tight on more pairs
            let low = build_pi_solution(&sup, &m, sup[0]).unwrap();
            let low_tight = (0..m.rows())
                .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| {
                    m.get(i, j).finite().unwrap()
                        - (low.psi[j].finite().unwrap() - low.phi[i].finite().unwrap())
                        < 1e-8
                })
                .count();
            assert!(low_tight >= 2 * sup.len() - 1);
        }
    }

    #[test]
    fn anchor_must_be_in_support() {
        let m = table(&[&[f(1.0), f(2.0)], &[f(3.0), f(1.0)]]);
        assert_eq!(
            build_pi_solution(&[(0, 0)], &m, (1, 1)).unwrap_err(),
            Error::AnchorNotInSupport(1, 1)
        );
    }

    #[test]
    fn non_monotone_support_rejected() {
        let m = table(&[&[f(1.0), f(2.0)], &[f(3.0), f(1.0)]]);
        assert!(matches!(
            build_pi_solution(&[(0, 1), (1, 0)], &m, (0, 1)),
            Err(Error::MonotonicityViolated(_))
        ));
    }

    #[test]
    fn perturbation_breaks_support_equality() {
        let (model, mu, nu) = generate_instance(3, 1, (4, 4), Profile::Slices).unwrap();
        let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
        let sol = solve(&m, &mu, &nu).unwrap();
        let sup = sol.coupling.support();
        let mut pp = build_pi_solution(&sup, &m, sup[0]).unwrap();
        let i = sup[1].0;
        pp.phi[i] = pp.phi[i].shift(1.0);
        let rep = verify_pi_solution(&pp, &sol.coupling, &m);
        assert!(rep.equality_violations.iter().any(|&(a, _)| a == i));
    }

    #[test]
    fn gap_is_shift_invariant_and_weakly_negative() {
        let (model, mu, nu) = generate_instance(11, 2, (6, 6), Profile::Slices).unwrap();
        let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
        let sol = solve(&m, &mu, &nu).unwrap();
        let sup = sol.coupling.support();
        let pp = build_pi_solution(&sup, &m, sup[0]).unwrap();
        let g0 = duality_gap(&pp, &sol, &mu, &nu).unwrap();
        let mut shifted = pp.clone();
        shifted.phi.iter_mut().for_each(|v| *v = v.shift(2.5));
        shifted.psi.iter_mut().for_each(|v| *v = v.shift(2.5));
        assert!((duality_gap(&shifted, &sol, &mu, &nu).unwrap() - g0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi: Vec<ExtReal> = (0..m.rows())
            .map(|_| Finite(rng.random_range(-5.0..5.0)))
            .collect();
        let random = PotentialPair::from_phi(phi, &m, (0, 0)).unwrap();
        assert!(duality_gap(&random, &sol, &mu, &nu).unwrap() < -1e-9);
    }

    #[test]
    fn extension_examples() {
        let (model, mu, nu) = generate_instance(5, 1, (4, 4), Profile::Slices).unwrap();
        let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
        let sol = solve(&m, &mu, &nu).unwrap();
        let sup = sol.coupling.support();
        let pp = build_pi_solution(&sup, &m, sup[0]).unwrap();
        for (i, x) in mu.points().iter().enumerate() {
            let ext = extend_potential(&model, &pp, nu.points(), x)
                .finite()
                .unwrap();
            assert!((ext - pp.phi[i].finite().unwrap()).abs() < 1e-9);
        }
        let far = Event::from_slice(&[0.0, 100.0]);
        assert_eq!(extend_potential(&model, &pp, nu.points(), &far), MinusInf);
        let x0 = &mu.points()[0];
        let a = extend_potential(&model, &pp, nu.points(), x0)
            .finite()
            .unwrap();
        let b = extend_potential(&model, &pp, nu.points(), &x0.offset(&[0.0, 1.0], 1e-7))
            .finite()
            .unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn convexify_transform_idempotent() {
        let (model, mu, nu) = generate_instance(2, 2, (6, 6), Profile::Slices).unwrap();
        let m = assemble_cost_matrix(&model, mu.points(), nu.points()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi: Vec<ExtReal> = (0..m.cols())
            .map(|_| Finite(rng.random_range(0.0..20.0)))
            .collect();
        let phi = c2_convexify(&psi, &m).unwrap();
        let again = c2_convexify(&c2_transform(&phi, &m).unwrap(), &m).unwrap();
        assert!(close(&phi, &again));
    }
}
