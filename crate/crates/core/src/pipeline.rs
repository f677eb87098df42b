//! End-to-end runs: instance, solve, potentials, map, regularity; artifact
//! emission, exit-status triage, independent re-verification and sweeps.
//!
//! Exit status 2 means a precondition of the theory is not met by the
//! instance (infeasible pair, no strictly timelike coupling, shared support
//! points, non-unique maximizers); 1 means a check failed on an instance
//! that meets them, or an internal error.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{assemble_cost_matrix, CostMatrix};
use crate::error::{Error, Result};
use crate::io::{self, f17, f17_opt, PlanFile};
use crate::kantorovich::{check_c2_monotone, check_causally_related, solve, SolveResult};
use crate::measures::{generate, GeneratorConfig, Instance, Profile};
use crate::potentials::{
    build_centered_pi_solution, build_pi_solution, duality_gap, verify_pi_solution, PotentialPair,
};
use crate::regularity::{hypothesis_flags, run_checks, RegularityReport, DEFAULT_NODES};
use crate::transport::{
    recover_map_with, verify_map_induces_coupling, MapStatus, RecoverOptions, TransportMap,
};

pub const INSTANCE_FILE: &str = "instance.json";
pub const PLAN_FILE: &str = "plan.json";
pub const POTENTIALS_FILE: &str = "potentials.csv";
pub const MAP_FILE: &str = "map.csv";
pub const REGULARITY_FILE: &str = "regularity.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Longest cycles examined by the monotonicity check.
pub const MONOTONE_CYCLE_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Marginal and mass agreement.
    pub marginal: f64,
    /// `|psi - phi - c2|` on the support.
    pub support_eq: f64,
    /// Absolute duality gap.
    pub gap: f64,
    /// Ties in the argmax oracle.
    pub tie: f64,
    /// Distance at which the twist target snaps to a support point.
    pub snap: f64,
    /// Relative residual of the first-order condition at recovered targets.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            marginal: crate::measures::MARGINAL_TOL,
            support_eq: crate::potentials::SUPPORT_EQ_TOL,
            gap: 1e-8,
            tie: crate::transport::TIE_TOL,
            snap: crate::transport::SNAP_TOL,
            residual: 1e-4,
        }
    }
}

impl Tolerances {
    /// Sets a tolerance by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance {name} must be positive, got {value}"
            )));
        }
        let slot = match name {
            "marginal" => &mut self.marginal,
            "support-eq" | "support_eq" => &mut self.support_eq,
            "gap" => &mut self.gap,
            "tie" => &mut self.tie,
            "snap" => &mut self.snap,
            "residual" => &mut self.residual,
            other => return Err(Error::InvalidInput(format!("unknown tolerance {other:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Which check groups run after the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub monotone: bool,
    pub potential: bool,
    pub map: bool,
    pub regularity: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            monotone: true,
            potential: true,
            map: true,
            regularity: true,
        }
    }
}

impl Checks {
    pub const NAMES: [&'static str; 4] = ["monotone", "potential", "map", "regularity"];

    pub fn none() -> Self {
        Checks {
            monotone: false,
            potential: false,
            map: false,
            regularity: false,
        }
    }

    /// Comma-separated names, or `all` / `none`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(Checks::default()),
            "none" | "" => return Ok(Checks::none()),
            _ => {}
        }
        let mut c = Checks::none();
        for name in s.split(',').map(str::trim) {
            match name {
                "monotone" => c.monotone = true,
                "potential" => c.potential = true,
                "map" => c.map = true,
                "regularity" => c.regularity = true,
                other => return Err(Error::Parse(format!("unknown check {other:?}"))),
            }
        }
        Ok(c)
    }
}

/// Last stage a run goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solve,
    Potential,
    Map,
    Regularity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub spatial_dim: usize,
    pub mu_size: usize,
    pub nu_size: usize,
    pub profile: Profile,
    /// Instance to load instead of generating one.
    pub instance_path: Option<PathBuf>,
    /// Plan to use instead of solving.
    pub plan_path: Option<PathBuf>,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub checks: Checks,
    pub until: Stage,
    pub grid_nodes: usize,
}

impl RunConfig {
    pub fn new(seed: u64, spatial_dim: usize, sizes: (usize, usize), profile: Profile) -> Self {
        RunConfig {
            seed,
            spatial_dim,
            mu_size: sizes.0,
            nu_size: sizes.1,
            profile,
            instance_path: None,
            plan_path: None,
            tolerances: Tolerances::default(),
            out_dir: PathBuf::from("."),
            checks: Checks::default(),
            until: Stage::Regularity,
            grid_nodes: DEFAULT_NODES,
        }
    }

    pub fn instance(&self) -> Result<Instance> {
        match (&self.instance_path, self.profile) {
            (Some(p), _) => io::read_instance(p),
            (None, Profile::CustomFile) => Err(Error::InvalidInput(
                "profile custom-file needs an instance file".into(),
            )),
            (None, profile) => generate(&GeneratorConfig::new(
                self.seed,
                self.spatial_dim,
                self.mu_size,
                self.nu_size,
                profile,
            )),
        }
    }
}

/// What a run found, as written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub profile: Profile,
    pub dimension: usize,
    pub mu_size: usize,
    pub nu_size: usize,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Preconditions the instance does not meet.
    pub hypotheses: Vec<String>,
    /// Failed checks, each naming the module, the check and the indices.
    pub failures: Vec<String>,
    #[serde(with = "f17_opt")]
    pub total_cost: Option<f64>,
    pub support_size: Option<usize>,
    pub monotone: Option<bool>,
    pub monotone_exhaustive: Option<bool>,
    pub pi_solution: Option<bool>,
    #[serde(with = "f17_opt")]
    pub duality_gap: Option<f64>,
    #[serde(with = "f17_opt")]
    pub map_agreement: Option<f64>,
    pub map_skipped: Option<usize>,
    #[serde(with = "f17_opt")]
    pub map_max_residual: Option<f64>,
    #[serde(with = "f17_opt")]
    pub min_delta: Option<f64>,
    #[serde(with = "f17_opt")]
    pub semiconvexity_c: Option<f64>,
    pub artifacts: Vec<String>,
}

impl Summary {
    fn new(inst: &Instance) -> Self {
        Summary {
            seed: inst.seed,
            profile: inst.profile,
            dimension: inst.spatial_dim,
            mu_size: inst.mu.len(),
            nu_size: inst.nu.len(),
            exit_code: 0,
            error: None,
            hypotheses: Vec::new(),
            failures: Vec::new(),
            total_cost: None,
            support_size: None,
            monotone: None,
            monotone_exhaustive: None,
            pi_solution: None,
            duality_gap: None,
            map_agreement: None,
            map_skipped: None,
            map_max_residual: None,
            min_delta: None,
            semiconvexity_c: None,
            artifacts: Vec::new(),
        }
    }

    fn triage(&mut self) {
        self.exit_code = if self.error.is_some() {
            1
        } else if !self.hypotheses.is_empty() {
            2
        } else if !self.failures.is_empty() {
            1
        } else {
            0
        };
    }
}

/// Everything a run produced, kept in memory.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub instance: Instance,
    pub summary: Summary,
    pub solve: Option<SolveResult>,
    pub potentials: Option<PotentialPair>,
    pub map: Option<TransportMap>,
    pub regularity: Option<RegularityReport>,
}

/// Runs the pipeline without touching the filesystem, except for reading
/// configured input files.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let instance = cfg.instance()?;
    let mut out = Outcome {
        summary: Summary::new(&instance),
        instance,
        solve: None,
        potentials: None,
        map: None,
        regularity: None,
    };
    match stages(cfg, &mut out) {
        Ok(()) => {}
        // numerical breakdowns on an instance outside the theory are expected
        Err(e) if !out.summary.hypotheses.is_empty() && !is_internal(&e) => {
            out.summary
                .hypotheses
                .push(format!("pipeline: stopped early: {e}"));
        }
        Err(e) => out.summary.error = Some(e.to_string()),
    }
    out.summary.triage();
    Ok(out)
}

fn is_internal(e: &Error) -> bool {
    matches!(
        e,
        Error::Io(_) | Error::Parse(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. }
    )
}

fn stages(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let tol = cfg.tolerances;
    let model = out.instance.model();
    let (mu, nu) = (out.instance.mu.clone(), out.instance.nu.clone());
    let matrix = assemble_cost_matrix(&model, mu.points(), nu.points())?;
    let s = &mut out.summary;

    let flags = hypothesis_flags(&model, &mu, &nu);
    if flags.supports_overlap {
        s.hypotheses
            .push("measures: source and target supports intersect".into());
    }

    // solve
    let result = match &cfg.plan_path {
        Some(p) => io::read_plan(p)?.to_result(&mu, &nu)?,
        None => {
            if !check_causally_related(&matrix, &mu, &nu) {
                s.hypotheses
                    .push(format!("kantorovich: {}", Error::NotCausallyRelated));
                return Ok(());
            }
            solve(&matrix, &mu, &nu)?
        }
    };
    if flags.not_strictly_timelike {
        s.hypotheses
            .push("measures: no coupling is supported on chronologically related pairs".into());
    }
    s.total_cost = result.total_cost.finite();
    let support = result.coupling.support();
    s.support_size = Some(support.len());
    if cfg.checks.monotone {
        let rep = check_c2_monotone(&support, &matrix, MONOTONE_CYCLE_LEN);
        s.monotone = Some(rep.passed);
        s.monotone_exhaustive = Some(rep.exhaustive);
        if let Some(w) = rep.witness {
            s.failures.push(format!(
                "kantorovich/c2_monotone: violating cycle through support pairs {w:?}"
            ));
        }
    }
    let solved = out.solve.insert(result);
    if cfg.until < Stage::Potential {
        return Ok(());
    }

    // potentials
    let anchor = support[0];
    let pp = match build_pi_solution(&support, &matrix, anchor) {
        Ok(pp) => pp,
        Err(e @ Error::MonotonicityViolated(_)) => {
            s.failures
                .push(format!("potentials/build_pi_solution: {e}"));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    if cfg.checks.potential {
        let rep = verify_pi_solution(&pp, &solved.coupling, &matrix);
        let mut problems = Vec::new();
        if !rep.inequality_ok() {
            problems.push(format!(
                "potentials/pi_solution: psi - phi > c2 at pairs {:?}",
                rep.inequality_violations
            ));
        }
        if rep.max_equality_residual > tol.support_eq {
            problems.push(format!(
                "potentials/pi_solution: psi - phi != c2 on support pairs {:?} (max residual {:e})",
                rep.equality_violations, rep.max_equality_residual
            ));
        }
        if !rep.finiteness_ok() {
            problems.push(format!(
                "potentials/pi_solution: infinite values at mass-carrying sources {:?} and targets {:?}",
                rep.infinite_phi, rep.infinite_psi
            ));
        }
        s.pi_solution = Some(problems.is_empty());
        match duality_gap(&pp, solved, &mu, &nu) {
            Ok(g) => {
                s.duality_gap = Some(g);
                if g.abs() > tol.gap {
                    problems.push(format!(
                        "potentials/duality_gap: gap {g:e} exceeds {:e}",
                        tol.gap
                    ));
                }
            }
            Err(e) => problems.push(format!("potentials/duality_gap: {e}")),
        }
        // existence of potentials is only claimed for strictly timelike pairs
        if flags.not_strictly_timelike {
            s.hypotheses.extend(problems);
        } else {
            s.failures.extend(problems);
        }
    }
    out.potentials = Some(pp);
    if cfg.until < Stage::Map {
        return Ok(());
    }

    // map
    if cfg.checks.map {
        let centered = build_centered_pi_solution(&support, &matrix, anchor)?;
        let opts = RecoverOptions {
            tie_tol: tol.tie,
            snap_tol: tol.snap,
            allow_ties: false,
        };
        match recover_map_with(&model, &centered, solved, &matrix, &opts) {
            Ok(tm) => {
                record_map(s, &tm, solved, &tol, flags.any());
                out.map = Some(tm);
            }
            Err(e @ Error::AmbiguousArgmax { .. }) => {
                s.hypotheses.push(format!("transport/recover_map: {e}"));
                let tm = recover_map_with(
                    &model,
                    &centered,
                    solved,
                    &matrix,
                    &RecoverOptions {
                        allow_ties: true,
                        ..opts
                    },
                )?;
                record_map(s, &tm, solved, &tol, true);
                out.map = Some(tm);
            }
            Err(e) => return Err(e),
        }
    }
    if cfg.until < Stage::Regularity {
        return Ok(());
    }

    // regularity
    if cfg.checks.regularity {
        let pp = out.potentials.as_ref().expect("potentials computed");
        let rep = run_checks(&model, pp, solved, &matrix, cfg.grid_nodes)?;
        s.min_delta = Some(rep.min_delta);
        s.semiconvexity_c = rep.semiconvexity_c;
        if flags.any() {
            s.hypotheses.extend(rep.failures.iter().cloned());
        } else {
            s.failures.extend(rep.failures.iter().cloned());
        }
        out.regularity = Some(rep);
    }
    Ok(())
}

fn record_map(
    s: &mut Summary,
    tm: &TransportMap,
    solved: &SolveResult,
    tol: &Tolerances,
    excused: bool,
) {
    s.map_agreement = Some(tm.agreement_rate());
    s.map_skipped = Some(tm.count(MapStatus::Skipped));
    s.map_max_residual = Some(tm.max_residual());
    let mut problems = Vec::new();
    let disagreed: Vec<usize> = tm
        .entries
        .iter()
        .filter(|e| e.status == MapStatus::Disagreed)
        .map(|e| e.source_index)
        .collect();
    if !disagreed.is_empty() {
        problems.push(format!(
            "transport/recover_map: twist and argmax targets differ at sources {disagreed:?}"
        ));
    }
    let skipped: Vec<usize> = tm
        .entries
        .iter()
        .filter(|e| e.status == MapStatus::Skipped)
        .map(|e| e.source_index)
        .collect();
    if !skipped.is_empty() {
        problems.push(format!(
            "transport/recover_map: gradient route unavailable at sources {skipped:?}"
        ));
    }
    let high: Vec<usize> = tm
        .entries
        .iter()
        .filter(|e| e.residual.is_finite() && e.residual > tol.residual)
        .map(|e| e.source_index)
        .collect();
    if !high.is_empty() {
        problems.push(format!(
            "transport/twist_residual: residual above {:e} at sources {high:?}",
            tol.residual
        ));
    }
    let rep = verify_map_induces_coupling(tm, solved);
    if !rep.split_rows.is_empty() {
        s.hypotheses.push(format!(
            "transport/map_induces_coupling: plan splits the mass of sources {:?}",
            rep.split_rows
        ));
    }
    if !rep.mismatched_rows.is_empty() || !rep.unmapped_rows.is_empty() {
        problems.push(format!(
            "transport/map_induces_coupling: plan rows {:?} not concentrated on the map target, rows {:?} unmapped",
            rep.mismatched_rows, rep.unmapped_rows
        ));
    }
    if rep.split_rows.is_empty() && rep.pushforward_error > tol.marginal {
        problems.push(format!(
            "transport/pushforward: |T_# mu - nu| = {:e}",
            rep.pushforward_error
        ));
    }
    if excused {
        s.hypotheses.extend(problems);
    } else {
        s.failures.extend(problems);
    }
}

/// Runs the pipeline and writes its artifacts to `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = execute(cfg)?;
    write_artifacts(&cfg.out_dir, &mut out)?;
    Ok(out)
}

/// Writes every artifact the run produced, then `summary.json`.
pub fn write_artifacts(dir: &Path, out: &mut Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut written = vec![INSTANCE_FILE.to_string()];
    io::write_instance(&dir.join(INSTANCE_FILE), &out.instance)?;
    if let Some(r) = &out.solve {
        io::write_json(&dir.join(PLAN_FILE), &PlanFile::from_result(r))?;
        written.push(PLAN_FILE.into());
    }
    if let Some(pp) = &out.potentials {
        io::write_text(&dir.join(POTENTIALS_FILE), &io::potentials_csv(pp))?;
        written.push(POTENTIALS_FILE.into());
    }
    if let Some(tm) = &out.map {
        io::write_text(&dir.join(MAP_FILE), &io::map_csv(tm))?;
        written.push(MAP_FILE.into());
    }
    if let Some(rep) = &out.regularity {
        io::write_json(&dir.join(REGULARITY_FILE), rep)?;
        written.push(REGULARITY_FILE.into());
    }
    written.push(SUMMARY_FILE.into());
    out.summary.artifacts = written;
    io::write_json(&dir.join(SUMMARY_FILE), &out.summary)
}

/// Result of re-checking a stored plan against its instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub exit_code: i32,
    pub failures: Vec<String>,
    pub hypotheses: Vec<String>,
    #[serde(with = "f17")]
    pub recomputed_cost: f64,
    /// `sum u mu + sum v nu - cost` from the stored duals.
    #[serde(with = "f17")]
    pub dual_gap: f64,
    /// Largest violation of `u_i + v_j <= c_ij` over admissible arcs.
    #[serde(with = "f17")]
    pub dual_infeasibility: f64,
    pub monotone: bool,
    pub pi_solution: bool,
}

/// Re-checks a stored plan from scratch: marginals, finite cost, the stored
/// duals as an optimality certificate, monotonicity, and a fresh potential.
pub fn verify(instance: &Instance, plan: &PlanFile, tol: &Tolerances) -> Result<VerifyReport> {
    let model = instance.model();
    let (mu, nu) = (&instance.mu, &instance.nu);
    let matrix = assemble_cost_matrix(&model, mu.points(), nu.points())?;
    let result = plan.to_result(mu, nu)?;
    let mut failures = Vec::new();
    let mut hypotheses = Vec::new();

    let mut cost = 0.0;
    for e in result.coupling.plan() {
        match matrix.get(e.i, e.j).finite() {
            Some(c) => cost += e.mass * c,
            None => failures.push(format!(
                "verify/plan: mass on forbidden pair ({}, {})",
                e.i, e.j
            )),
        }
    }
    if (cost - plan.total_cost).abs() > tol.gap * (1.0 + cost.abs()) {
        failures.push(format!(
            "verify/plan: stored cost {:e} but entries give {cost:e}",
            plan.total_cost
        ));
    }

    let (dual_gap, infeas) = dual_certificate(&matrix, &result, mu.weights(), nu.weights(), cost);
    if dual_gap.abs() > tol.gap {
        failures.push(format!(
            "verify/duals: objective differs from cost by {dual_gap:e}"
        ));
    }
    if infeas > tol.gap {
        failures.push(format!(
            "verify/duals: u_i + v_j exceeds c_ij by {infeas:e}"
        ));
    }

    let support = result.coupling.support();
    let mono = check_c2_monotone(&support, &matrix, MONOTONE_CYCLE_LEN);
    if let Some(w) = &mono.witness {
        failures.push(format!(
            "kantorovich/c2_monotone: violating cycle through support pairs {w:?}"
        ));
    }

    let flags = hypothesis_flags(&model, mu, nu);
    let pi_ok = match build_pi_solution(&support, &matrix, support[0]) {
        Ok(pp) => {
            let rep = verify_pi_solution(&pp, &result.coupling, &matrix);
            if !rep.passed() {
                let line = format!(
                    "potentials/pi_solution: inequality at {:?}, equality at {:?}, infinite at {:?}/{:?}",
                    rep.inequality_violations, rep.equality_violations, rep.infinite_phi, rep.infinite_psi
                );
                if flags.not_strictly_timelike {
                    hypotheses.push(line);
                } else {
                    failures.push(line);
                }
            }
            rep.passed()
        }
        Err(e) => {
            failures.push(format!("potentials/build_pi_solution: {e}"));
            false
        }
    };
    if flags.any() {
        hypotheses.push(format!("measures: hypothesis flags {flags:?}"));
    }
    let exit_code = if !failures.is_empty() {
        1
    } else if !hypotheses.is_empty() {
        2
    } else {
        0
    };
    Ok(VerifyReport {
        exit_code,
        failures,
        hypotheses,
        recomputed_cost: cost,
        dual_gap,
        dual_infeasibility: infeas,
        monotone: mono.passed,
        pi_solution: pi_ok,
    })
}

fn dual_certificate(
    matrix: &CostMatrix,
    r: &SolveResult,
    mu: &[f64],
    nu: &[f64],
    cost: f64,
) -> (f64, f64) {
    if r.source_duals.len() != mu.len() || r.target_duals.len() != nu.len() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let obj: f64 = r
        .source_duals
        .iter()
        .zip(mu)
        .map(|(u, w)| u * w)
        .sum::<f64>()
        + r.target_duals
            .iter()
            .zip(nu)
            .map(|(v, w)| v * w)
            .sum::<f64>();
    let mut infeas: f64 = 0.0;
    for i in 0..matrix.rows() {
        for j in 0..matrix.cols() {
            if let Some(c) = matrix.get(i, j).finite() {
                infeas = infeas.max(r.source_duals[i] + r.target_duals[j] - c);
            }
        }
    }
    (obj - cost, infeas)
}

pub const SWEEP_HEADER: &str =
    "seed,profile,total_cost,duality_gap,min_delta,semiconvexity_c,map_agreement,exit_code";

/// One CSV row per `(profile, seed)`, profiles outermost, seeds ascending.
/// Seeds run in parallel; the output does not depend on scheduling.
pub fn sweep(
    template: &RunConfig,
    profiles: &[Profile],
    seeds: std::ops::Range<u64>,
) -> Result<String> {
    let jobs: Vec<(Profile, u64)> = profiles
        .iter()
        .flat_map(|&p| seeds.clone().map(move |s| (p, s)))
        .collect();
    let rows: Vec<Result<String>> = jobs
        .par_iter()
        .map(|&(profile, seed)| {
            let cfg = RunConfig {
                seed,
                profile,
                ..template.clone()
            };
            let s = execute(&cfg)?.summary;
            let f = |v: Option<f64>| v.map(io::fmt17).unwrap_or_default();
            Ok(format!(
                "{},{},{},{},{},{},{},{}",
                seed,
                profile.name(),
                f(s.total_cost),
                f(s.duality_gap),
                f(s.min_delta),
                f(s.semiconvexity_c),
                f(s.map_agreement),
                s.exit_code
            ))
        })
        .collect();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r?);
        out.push('\n');
    }
    Ok(out)
}
