//! Finitely supported probability measures, couplings between them, and
//! seeded instance generators.
//!
//! Finite supports are automatically causally compact, so generators do
//! not check that property. Absolutely continuous measures can only be
//! emulated by fine sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spacetime::{Event, Minkowski};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on the marginals of a coupling.
pub const MARGINAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Event>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates weights and merges exactly coincident points.
    pub fn new(points: Vec<Event>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "measure needs at least one point".into(),
            ));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(
                "weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut merged_points: Vec<Event> = Vec::with_capacity(points.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(points.len());
        for (p, w) in points.into_iter().zip(weights) {
            match merged_points.iter().position(|q| *q == p) {
                Some(k) => merged_weights[k] += w,
                None => {
                    merged_points.push(p);
                    merged_weights.push(w);
                }
            }
        }
        Ok(DiscreteMeasure {
            points: merged_points,
            weights: merged_weights,
        })
    }

    pub fn dirac(point: Event) -> Self {
        DiscreteMeasure {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn uniform(points: Vec<Event>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let n = points.len();
        Self::new(points, vec![w; n])
    }

    pub fn points(&self) -> &[Event] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// True when no point is shared with `other`.
    pub fn disjoint_from(&self, other: &DiscreteMeasure) -> bool {
        !self.points.iter().any(|p| other.points.contains(p))
    }
}

/// One nonzero entry of a transport plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// A transport plan with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    plan: Vec<PlanEntry>,
}

impl Coupling {
    /// Validates indices, non-negativity and both marginals (within
    /// [`MARGINAL_TOL`]). Entries are stored sorted row-major, duplicates summed.
    pub fn new(
        source: DiscreteMeasure,
        target: DiscreteMeasure,
        mut plan: Vec<PlanEntry>,
    ) -> Result<Self> {
        for e in &plan {
            if e.i >= source.len() || e.j >= target.len() {
                return Err(Error::InvalidInput(format!(
                    "plan entry ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            if !(e.mass.is_finite() && e.mass >= 0.0) {
                return Err(Error::InvalidInput(
                    "plan masses must be non-negative".into(),
                ));
            }
        }
        plan.sort_by_key(|e| (e.i, e.j));
        let mut merged: Vec<PlanEntry> = Vec::with_capacity(plan.len());
        for e in plan {
            match merged.last_mut() {
                Some(last) if last.i == e.i && last.j == e.j => last.mass += e.mass,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.mass > 0.0);
        let c = Coupling {
            source,
            target,
            plan: merged,
        };
        let (rows, cols) = marginals(&c);
        for (k, (a, b)) in rows.iter().zip(c.source.weights()).enumerate() {
            if (a - b).abs() > MARGINAL_TOL {
                return Err(Error::InvalidInput(format!(
                    "row {k} sums to {a}, expected {b}"
                )));
            }
        }
        for (k, (a, b)) in cols.iter().zip(c.target.weights()).enumerate() {
            if (a - b).abs() > MARGINAL_TOL {
                return Err(Error::InvalidInput(format!(
                    "column {k} sums to {a}, expected {b}"
                )));
            }
        }
        Ok(c)
    }

    pub fn product(source: DiscreteMeasure, target: DiscreteMeasure) -> Self {
        let mut plan = Vec::with_capacity(source.len() * target.len());
        for (i, a) in source.weights().iter().enumerate() {
            for (j, b) in target.weights().iter().enumerate() {
                plan.push(PlanEntry { i, j, mass: a * b });
            }
        }
        Coupling {
            source,
            target,
            plan,
        }
    }

    pub fn plan(&self) -> &[PlanEntry] {
        &self.plan
    }

    /// Support pairs `(i, j)` carrying positive mass.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.plan.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan
            .iter()
            .find(|e| e.i == i && e.j == j)
            .map_or(0.0, |e| e.mass)
    }
}

/// Row and column sums of the plan.
pub fn marginals(c: &Coupling) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; c.source.len()];
    let mut cols = vec![0.0; c.target.len()];
    for e in &c.plan {
        rows[e.i] += e.mass;
        cols[e.j] += e.mass;
    }
    (rows, cols)
}

/// `T_# mu` for an assignment given per support point.
pub fn pushforward(mu: &DiscreteMeasure, map: &[Option<Event>]) -> Result<DiscreteMeasure> {
    if map.len() != mu.len() {
        return Err(Error::PartialMap(map.len().min(mu.len())));
    }
    let mut points = Vec::with_capacity(mu.len());
    let mut weights = Vec::with_capacity(mu.len());
    for (k, (image, w)) in map.iter().zip(mu.weights()).enumerate() {
        let y = image.as_ref().ok_or(Error::PartialMap(k))?;
        match points.iter().position(|q: &Event| q == y) {
            Some(p) => weights[p] += w,
            None => {
                points.push(y.clone());
                weights.push(*w);
            }
        }
    }
    Ok(DiscreteMeasure { points, weights })
}

/// Instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Source on `{t = 0, |x| < R}`, target on `{t = T, |x| < R}`, `T > 2R`:
    /// every pair is chronological.
    Slices,
    /// Causally related, some pairs spacelike, and one forced light-like pairing.
    Marginal,
    /// Target entirely spacelike to the source.
    Infeasible,
    /// Loaded from a file.
    CustomFile,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Slices => "slices",
            Profile::Marginal => "marginal",
            Profile::Infeasible => "infeasible",
            Profile::CustomFile => "custom-file",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "slices" => Ok(Profile::Slices),
            "marginal" => Ok(Profile::Marginal),
            "infeasible" => Ok(Profile::Infeasible),
            "custom-file" => Ok(Profile::CustomFile),
            other => Err(Error::Parse(format!("unknown profile {other:?}"))),
        }
    }
}

/// How generated weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Uniform when both sizes agree, dyadic otherwise.
    Auto,
    Uniform,
    /// Random dyadic rationals summing exactly to one.
    Dyadic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub spatial_dim: usize,
    pub mu_size: usize,
    pub nu_size: usize,
    pub profile: Profile,
    /// Time gap `T` between the slices.
    pub gap: f64,
    /// Spatial radius `R` of the slices.
    pub radius: f64,
    pub weights: WeightScheme,
}

impl GeneratorConfig {
    pub fn new(
        seed: u64,
        spatial_dim: usize,
        mu_size: usize,
        nu_size: usize,
        profile: Profile,
    ) -> Self {
        GeneratorConfig {
            seed,
            spatial_dim,
            mu_size,
            nu_size,
            profile,
            gap: 3.0,
            radius: 1.0,
            weights: WeightScheme::Auto,
        }
    }
}

/// A source/target pair on Minkowski space with `tau = 2t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub spatial_dim: usize,
    pub seed: u64,
    pub profile: Profile,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

impl Instance {
    pub fn model(&self) -> Minkowski {
        Minkowski::new(self.spatial_dim).expect("validated dimension")
    }
}

/// Deterministic instance for `(seed, n, sizes, profile)` with default
/// slice geometry `T = 3`, `R = 1`.
pub fn generate_instance(
    seed: u64,
    spatial_dim: usize,
    sizes: (usize, usize),
    profile: Profile,
) -> Result<(Minkowski, DiscreteMeasure, DiscreteMeasure)> {
    let inst = generate(&GeneratorConfig::new(
        seed,
        spatial_dim,
        sizes.0,
        sizes.1,
        profile,
    ))?;
    Ok((inst.model(), inst.mu, inst.nu))
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Instance> {
    if cfg.mu_size == 0 || cfg.nu_size == 0 {
        return Err(Error::InvalidInput("instance sizes must be >= 1".into()));
    }
    if cfg.spatial_dim == 0 {
        return Err(Error::InvalidInput("spatial dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mu, nu) = match cfg.profile {
        Profile::Slices => {
            if !(cfg.gap > 2.0 * cfg.radius && cfg.radius > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "slices need T > 2R > 0, got T = {}, R = {}",
                    cfg.gap, cfg.radius
                )));
            }
            let xs = slice_points(&mut rng, cfg.mu_size, cfg.spatial_dim, 0.0, cfg.radius, 0.0);
            let ys = slice_points(
                &mut rng,
                cfg.nu_size,
                cfg.spatial_dim,
                cfg.gap,
                cfg.radius,
                0.0,
            );
            let (wx, wy) = weights_for(&mut rng, cfg);
            (DiscreteMeasure::new(xs, wx)?, DiscreteMeasure::new(ys, wy)?)
        }
        Profile::Infeasible => {
            let shift = 10.0 * cfg.radius.max(1.0);
            let xs = slice_points(&mut rng, cfg.mu_size, cfg.spatial_dim, 0.0, cfg.radius, 0.0);
            let ys = slice_points(
                &mut rng,
                cfg.nu_size,
                cfg.spatial_dim,
                0.1,
                cfg.radius,
                shift,
            );
            let (wx, wy) = weights_for(&mut rng, cfg);
            (DiscreteMeasure::new(xs, wx)?, DiscreteMeasure::new(ys, wy)?)
        }
        Profile::Marginal => marginal_instance(&mut rng, cfg)?,
        Profile::CustomFile => {
            return Err(Error::InvalidInput(
                "custom-file instances are loaded, not generated".into(),
            ))
        }
    };
    Ok(Instance {
        spatial_dim: cfg.spatial_dim,
        seed: cfg.seed,
        profile: cfg.profile,
        mu,
        nu,
    })
}

/// Points `(t, c e1 + u)` with `u` uniform in the ball of radius `r`.
fn slice_points(
    rng: &mut ChaCha8Rng,
    count: usize,
    n: usize,
    t: f64,
    r: f64,
    shift: f64,
) -> Vec<Event> {
    (0..count)
        .map(|_| {
            let u = loop {
                let cand: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm_sq: f64 = cand.iter().map(|c| c * c).sum();
                if norm_sq < 1.0 {
                    break cand;
                }
            };
            let mut c = Vec::with_capacity(n + 1);
            c.push(t);
            c.extend(u.iter().map(|v| v * r));
            c[1] += shift;
            Event::from_slice(&c)
        })
        .collect()
}

fn weights_for(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> (Vec<f64>, Vec<f64>) {
    let uniform = match cfg.weights {
        WeightScheme::Uniform => true,
        WeightScheme::Dyadic => false,
        WeightScheme::Auto => cfg.mu_size == cfg.nu_size,
    };
    if uniform {
        (
            vec![1.0 / cfg.mu_size as f64; cfg.mu_size],
            vec![1.0 / cfg.nu_size as f64; cfg.nu_size],
        )
    } else {
        (
            dyadic_weights(rng, cfg.mu_size),
            dyadic_weights(rng, cfg.nu_size),
        )
    }
}

/// Positive weights `k_i / 2^p` with `sum k_i = 2^p` exactly.
pub fn dyadic_weights<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
    let bits = (usize::BITS - (count.max(1) - 1).leading_zeros()) + 3;
    let total = 1usize << bits;
    let mut units = vec![1usize; count];
    for _ in count..total {
        units[rng.random_range(0..count)] += 1;
    }
    units.iter().map(|&u| u as f64 / total as f64).collect()
}

/// Families of sources and children on a spatial lattice of spacing 0.5.
/// Cross-family pairs are spacelike; within a family sources are stacked
/// below the family base point and children sit above it. Family 0 owns
/// the child on the light cone of its first source, and that source has no
/// other option, so every coupling uses a null pair.
fn marginal_instance(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let (m, n, dim) = (cfg.mu_size, cfg.nu_size, cfg.spatial_dim);
    let families = m.min(n);
    let assign = |count: usize| -> Vec<usize> {
        // first `families` members seed one family each, extras round-robin
        // over families 1.. (family 0 keeps a single member unless alone)
        (0..count)
            .map(|k| {
                if k < families {
                    k
                } else if families == 1 {
                    0
                } else {
                    1 + (k - families) % (families - 1)
                }
            })
            .collect()
    };
    let src_family = assign(m);
    let dst_family = assign(n);
    let mut src_count = vec![0usize; families];
    let mut dst_count = vec![0usize; families];
    src_family.iter().for_each(|&f| src_count[f] += 1);
    dst_family.iter().for_each(|&f| dst_count[f] += 1);

    let base = |f: usize| -> Vec<f64> {
        let mut c = vec![0.0; dim + 1];
        c[1] = 0.5 * f as f64;
        c
    };

    let mut src_rank = vec![0usize; families];
    let mut xs = Vec::with_capacity(m);
    for &f in &src_family {
        let k = src_rank[f];
        src_rank[f] += 1;
        let mut c = base(f);
        c[0] = -0.05 * k as f64 / src_count[f] as f64;
        xs.push(Event::from_slice(&c));
    }
    let mut dst_rank = vec![0usize; families];
    let mut ys = Vec::with_capacity(n);
    for &f in &dst_family {
        let l = dst_rank[f];
        dst_rank[f] += 1;
        let mut c = base(f);
        if f == 0 && l == 0 {
            c[0] = 0.1;
            c[1] += 0.1;
        } else {
            c[0] = 0.1 + 0.05 * l as f64 / dst_count[f] as f64;
            for s in c.iter_mut().skip(1) {
                *s += rng.random_range(-0.01..0.01);
            }
        }
        ys.push(Event::from_slice(&c));
    }

    let wx = dyadic_weights(rng, m);
    let mut family_mass = vec![0.0; families];
    for (f, w) in src_family.iter().zip(&wx) {
        family_mass[*f] += w;
    }
    let wy: Vec<f64> = dst_family
        .iter()
        .map(|&f| family_mass[f] / dst_count[f] as f64)
        .collect();
    // renormalize the rounding of the family splits onto the last child
    let mut wy = wy;
    let drift: f64 = 1.0 - wy.iter().sum::<f64>();
    if let Some(last) = wy.last_mut() {
        *last += drift;
    }
    Ok((DiscreteMeasure::new(xs, wx)?, DiscreteMeasure::new(ys, wy)?))
}
