//! Discrete Kantorovich problem for `c2` with forbidden (`+inf`) arcs:
//! feasibility, exact solving, and `c2`-cyclical monotonicity checks.

mod maxflow;
mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use simplex::PivotStats;

use crate::cost::{CostMatrix, ExtendedCost};
use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure, PlanEntry, MARGINAL_TOL};

/// Mass below which solver flows are treated as zero.
pub const FLOW_FLOOR: f64 = 1e-15;

/// Largest number of cycles enumerated before switching to sampling.
pub const EXHAUSTIVE_CYCLE_BUDGET: usize = 2_000_000;
/// Cycles drawn when enumeration is out of budget.
pub const SAMPLED_CYCLES: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub coupling: Coupling,
    pub total_cost: ExtendedCost,
    pub source_duals: Vec<f64>,
    pub target_duals: Vec<f64>,
    pub stats: PivotStats,
}

fn check_shapes(matrix: &CostMatrix, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if matrix.rows() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: matrix.rows(),
        });
    }
    if matrix.cols() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: nu.len(),
            got: matrix.cols(),
        });
    }
    Ok(())
}

/// Whether the weights can be coupled using only arcs for which
/// `admissible(i, j)` holds (max-flow value equal to one).
pub fn feasible_with(mu: &[f64], nu: &[f64], admissible: impl Fn(usize, usize) -> bool) -> bool {
    let total: f64 = mu.iter().sum();
    maxflow::bipartite_max_flow(mu, nu, admissible) >= total - MARGINAL_TOL
}

/// True iff some coupling of `mu` and `nu` uses only finite-cost arcs.
pub fn check_causally_related(
    matrix: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> bool {
    if check_shapes(matrix, mu, nu).is_err() {
        return false;
    }
    feasible_with(mu.weights(), nu.weights(), |i, j| {
        matrix.get(i, j).is_finite()
    })
}

/// Optimal coupling for the cost matrix, with LP duals.
pub fn solve(
    matrix: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<SolveResult> {
    check_shapes(matrix, mu, nu)?;
    if !check_causally_related(matrix, mu, nu) {
        return Err(Error::NotCausallyRelated);
    }
    let mut arcs = Vec::new();
    for i in 0..matrix.rows() {
        for j in 0..matrix.cols() {
            if let ExtendedCost::Finite(c) = matrix.get(i, j) {
                arcs.push((i, j, c));
            }
        }
    }
    let out = simplex::transport_simplex(mu.weights(), nu.weights(), &arcs)?;
    let mut plan = Vec::new();
    let mut total = 0.0;
    for (&(i, j, c), &f) in arcs.iter().zip(&out.flows) {
        if f > FLOW_FLOOR {
            plan.push(PlanEntry { i, j, mass: f });
            total += f * c;
        }
    }
    let coupling = Coupling::new(mu.clone(), nu.clone(), plan)?;
    Ok(SolveResult {
        coupling,
        total_cost: ExtendedCost::Finite(total),
        source_duals: out.source_duals,
        target_duals: out.target_duals,
        stats: out.stats,
    })
}

/// Cost of an arbitrary coupling; `+inf` if it charges a forbidden arc.
pub fn coupling_cost(matrix: &CostMatrix, coupling: &Coupling) -> ExtendedCost {
    coupling
        .plan()
        .iter()
        .fold(ExtendedCost::Finite(0.0), |acc, e| {
            acc.add(matrix.get(e.i, e.j).scale(e.mass))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub passed: bool,
    /// Every cycle up to the length bound was examined.
    pub exhaustive: bool,
    pub cycles_checked: usize,
    /// A violating cycle, listed as support pairs `(i, j)` in cycle order.
    pub witness: Option<Vec<(usize, usize)>>,
}

/// Checks `sum c(x_k, y_k) <= sum c(x_{k+1}, y_k)` over cycles of distinct
/// support pairs of length `2..=max_cycle_len`. Right-hand sides with an
/// infinite term always hold.
pub fn check_c2_monotone(
    support: &[(usize, usize)],
    matrix: &CostMatrix,
    max_cycle_len: usize,
) -> MonotonicityReport {
    let len_bound = max_cycle_len.min(support.len());
    let scale = 1.0 + matrix.max_finite();
    let violates = |cycle: &[usize]| -> bool {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (k, &p) in cycle.iter().enumerate() {
            let (i, j) = support[p];
            let (i_next, _) = support[cycle[(k + 1) % cycle.len()]];
            match (matrix.get(i, j), matrix.get(i_next, j)) {
                (ExtendedCost::Finite(a), ExtendedCost::Finite(b)) => {
                    lhs += a;
                    rhs += b;
                }
                (_, ExtendedCost::PlusInfinity) => return false,
                (ExtendedCost::PlusInfinity, _) => return true,
            }
        }
        lhs > rhs + 1e-9 * scale
    };
    let witness_of = |cycle: &[usize]| cycle.iter().map(|&p| support[p]).collect::<Vec<_>>();

    let count: usize = (2..=len_bound)
        .map(|k| {
            let mut c: usize = 1;
            for r in 0..k {
                c = c.saturating_mul(support.len() - r);
            }
            c / k
        })
        .fold(0usize, |a, b| a.saturating_add(b));

    if count <= EXHAUSTIVE_CYCLE_BUDGET {
        let mut checked = 0;
        for k in 2..=len_bound {
            let mut cycle = Vec::with_capacity(k);
            if let Some(w) = enumerate_cycles(support.len(), k, &mut cycle, &mut checked, &violates)
            {
                return MonotonicityReport {
                    passed: false,
                    exhaustive: true,
                    cycles_checked: checked,
                    witness: Some(witness_of(&w)),
                };
            }
        }
        return MonotonicityReport {
            passed: true,
            exhaustive: true,
            cycles_checked: checked,
            witness: None,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for s in 0..SAMPLED_CYCLES {
        let k = rng.random_range(2..=len_bound);
        let mut cycle: Vec<usize> = Vec::with_capacity(k);
        while cycle.len() < k {
            let p = rng.random_range(0..support.len());
            if !cycle.contains(&p) {
                cycle.push(p);
            }
        }
        if violates(&cycle) {
            return MonotonicityReport {
                passed: false,
                exhaustive: false,
                cycles_checked: s + 1,
                witness: Some(witness_of(&cycle)),
            };
        }
    }
    MonotonicityReport {
        passed: true,
        exhaustive: false,
        cycles_checked: SAMPLED_CYCLES,
        witness: None,
    }
}

/// Depth-first enumeration of cycles of length `k` whose first element is
/// their smallest index (one representative per rotation class).
fn enumerate_cycles(
    n: usize,
    k: usize,
    cycle: &mut Vec<usize>,
    checked: &mut usize,
    violates: &impl Fn(&[usize]) -> bool,
) -> Option<Vec<usize>> {
    if cycle.len() == k {
        *checked += 1;
        return violates(cycle).then(|| cycle.clone());
    }
    for p in 0..n {
        if let Some(&first) = cycle.first() {
            if p <= first || cycle.contains(&p) {
                continue;
            }
        }
        cycle.push(p);
        let found = enumerate_cycles(n, k, cycle, checked, violates);
        cycle.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}
