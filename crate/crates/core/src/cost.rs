//! The costs `c1`, `c2` on pairs of events, their extended-real values and
//! the gradient of `c2` in the source point.
//!
//! `c1(x, y) = tau(y) - tau(x) - d(x, y)` on the causal future of `x`,
//! `c2 = c1^2`, and both are `+inf` off it. Alternative Lorentzian costs
//! (`-d`, `-d^q/q`) are not provided.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{dl2_dv, minimizer};
use crate::spacetime::{CausalClass, Covector, Event, SpacetimeModel};

/// A cost value in `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtendedCost {
    Finite(f64),
    PlusInfinity,
}

impl ExtendedCost {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedCost::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedCost::Finite(v) => Some(v),
            ExtendedCost::PlusInfinity => None,
        }
    }

    /// IEEE view, `+inf` for the infinite variant. Only for reporting.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn add(self, other: ExtendedCost) -> ExtendedCost {
        match (self, other) {
            (ExtendedCost::Finite(a), ExtendedCost::Finite(b)) => ExtendedCost::Finite(a + b),
            _ => ExtendedCost::PlusInfinity,
        }
    }

    pub fn scale(self, w: f64) -> ExtendedCost {
        match self {
            ExtendedCost::Finite(a) => ExtendedCost::Finite(a * w),
            ExtendedCost::PlusInfinity if w == 0.0 => ExtendedCost::Finite(0.0),
            ExtendedCost::PlusInfinity => ExtendedCost::PlusInfinity,
        }
    }

    /// `"inf"` for the infinite value, 17 significant digits otherwise.
    pub fn to_csv_field(self) -> String {
        match self {
            ExtendedCost::Finite(v) => crate::io::fmt17(v),
            ExtendedCost::PlusInfinity => "inf".to_string(),
        }
    }

    pub fn parse_csv_field(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" => Ok(ExtendedCost::PlusInfinity),
            t => t
                .parse::<f64>()
                .map(ExtendedCost::Finite)
                .map_err(|e| Error::Parse(format!("bad cost field {t:?}: {e}"))),
        }
    }
}

impl PartialOrd for ExtendedCost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtendedCost::Finite(a), ExtendedCost::Finite(b)) => a.partial_cmp(b),
            (ExtendedCost::Finite(_), ExtendedCost::PlusInfinity) => Some(Ordering::Less),
            (ExtendedCost::PlusInfinity, ExtendedCost::Finite(_)) => Some(Ordering::Greater),
            (ExtendedCost::PlusInfinity, ExtendedCost::PlusInfinity) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtendedCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedCost::Finite(v) => write!(f, "{v}"),
            ExtendedCost::PlusInfinity => write!(f, "inf"),
        }
    }
}

/// `c1(x, y)`.
pub fn cost_c1(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> ExtendedCost {
    match model.causal_classify(x, y) {
        CausalClass::Equal => ExtendedCost::Finite(0.0),
        CausalClass::Unrelated => ExtendedCost::PlusInfinity,
        CausalClass::Chronological | CausalClass::NullCausal => {
            let v = model.tau(y) - model.tau(x) - model.lorentz_distance(x, y);
            ExtendedCost::Finite(v.max(0.0))
        }
    }
}

/// `c2(x, y) = c1(x, y)^2`.
pub fn cost_c2(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> ExtendedCost {
    match cost_c1(model, x, y) {
        ExtendedCost::Finite(v) => ExtendedCost::Finite(v * v),
        inf => inf,
    }
}

/// Gradient of `c2(., y)` at `x`, i.e. `-dL2/dv` at the initial velocity of
/// the minimizer from `x` to `y`. Defined on chronological pairs only.
pub fn dc2_dx(model: &dyn SpacetimeModel, x: &Event, y: &Event) -> Result<Covector> {
    if model.causal_classify(x, y) != CausalClass::Chronological {
        return Err(Error::NotChronological);
    }
    let curve = minimizer(model, x, y)?;
    let p = dl2_dv(model, &curve.initial_velocity)?;
    Ok(Covector {
        base: x.clone(),
        components: p.components.iter().map(|c| -c).collect(),
    })
}

/// Costs `c2(x_i, y_j)` between two point lists.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub sources: Vec<Event>,
    pub targets: Vec<Event>,
    entries: Vec<ExtendedCost>,
    infinite_count: usize,
}

impl CostMatrix {
    /// Builds a matrix from explicit entries (row-major).
    pub fn from_entries(
        sources: Vec<Event>,
        targets: Vec<Event>,
        entries: Vec<ExtendedCost>,
    ) -> Result<Self> {
        if entries.len() != sources.len() * targets.len() {
            return Err(Error::DimensionMismatch {
                expected: sources.len() * targets.len(),
                got: entries.len(),
            });
        }
        let infinite_count = entries.iter().filter(|c| !c.is_finite()).count();
        Ok(CostMatrix {
            sources,
            targets,
            entries,
            infinite_count,
        })
    }

    /// Matrix of plain finite costs; point lists are placeholders on a line.
    /// Useful when only the combinatorics of a cost table matter.
    pub fn from_table(rows: &[Vec<ExtendedCost>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged cost table".into()));
        }
        let sources = (0..m)
            .map(|i| Event::from_slice(&[0.0, i as f64]))
            .collect();
        let targets = (0..n)
            .map(|j| Event::from_slice(&[1.0, j as f64]))
            .collect();
        Self::from_entries(sources, targets, rows.iter().flatten().copied().collect())
    }

    pub fn rows(&self) -> usize {
        self.sources.len()
    }

    pub fn cols(&self) -> usize {
        self.targets.len()
    }

    pub fn get(&self, i: usize, j: usize) -> ExtendedCost {
        self.entries[i * self.cols() + j]
    }

    pub fn infinite_count(&self) -> usize {
        self.infinite_count
    }

    /// True when every entry is `+inf`.
    pub fn all_infinite(&self) -> bool {
        self.infinite_count == self.entries.len()
    }

    /// Largest finite entry, 0 if none.
    pub fn max_finite(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|c| c.finite())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|j| self.get(i, j).to_csv_field())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Entry-wise `c2` between `xs` and `ys`, rows assembled in parallel.
pub fn assemble_cost_matrix(
    model: &dyn SpacetimeModel,
    xs: &[Event],
    ys: &[Event],
) -> Result<CostMatrix> {
    use rayon::prelude::*;
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput(
            "cost matrix needs non-empty point lists".into(),
        ));
    }
    let entries: Vec<ExtendedCost> = xs
        .par_iter()
        .flat_map_iter(|x| ys.iter().map(move |y| cost_c2(model, x, y)))
        .collect();
    CostMatrix::from_entries(xs.to_vec(), ys.to_vec(), entries)
}
