use std::fs;

use lorentz_ot::io::{self, PlanFile};
use lorentz_ot::kantorovich::SolveResult;
use lorentz_ot::measures::{Coupling, PlanEntry, Profile};
use lorentz_ot::pipeline::{self, run_pipeline, verify, Checks, RunConfig, Stage, Tolerances};

fn config(dir: &std::path::Path, seed: u64, profile: Profile) -> RunConfig {
    let mut cfg = RunConfig::new(seed, 2, (12, 12), profile);
    cfg.out_dir = dir.to_path_buf();
    cfg
}

#[test]
fn summary_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(&config(a.path(), 7, Profile::Slices)).unwrap();
    run_pipeline(&config(b.path(), 7, Profile::Slices)).unwrap();
    assert_eq!(ra.summary.exit_code, 0, "{:?}", ra.summary);
    for name in [
        pipeline::INSTANCE_FILE,
        pipeline::PLAN_FILE,
        pipeline::POTENTIALS_FILE,
        pipeline::MAP_FILE,
        pipeline::REGULARITY_FILE,
        pipeline::SUMMARY_FILE,
    ] {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn stored_artifacts_verify_independently() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&config(dir.path(), 3, Profile::Slices)).unwrap();
    let inst = io::read_instance(&dir.path().join(pipeline::INSTANCE_FILE)).unwrap();
    let plan = io::read_plan(&dir.path().join(pipeline::PLAN_FILE)).unwrap();
    let rep = verify(&inst, &plan, &Tolerances::default()).unwrap();
    assert_eq!(rep.exit_code, 0, "{rep:?}");
    let (phi, psi) = io::parse_potentials_csv(
        &io::read_text(&dir.path().join(pipeline::POTENTIALS_FILE)).unwrap(),
    )
    .unwrap();
    assert_eq!((phi.len(), psi.len()), (12, 12));
}

/// The solver's plan with the targets of rows 0 and 1 exchanged.
fn tampered(out: &pipeline::Outcome) -> PlanFile {
    let s = out.solve.as_ref().unwrap();
    let mut plan: Vec<PlanEntry> = s.coupling.plan().to_vec();
    let (a, b) = (plan[0].j, plan[1].j);
    plan[0].j = b;
    plan[1].j = a;
    PlanFile::from_result(&SolveResult {
        coupling: Coupling::new(s.coupling.source.clone(), s.coupling.target.clone(), plan)
            .unwrap(),
        ..s.clone()
    })
}

#[test]
fn suboptimal_plan_fails_with_named_indices() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipeline::execute(&config(dir.path(), 5, Profile::Slices)).unwrap();
    let plan = tampered(&out);
    let path = dir.path().join("bad_plan.json");
    io::write_json(&path, &plan).unwrap();

    let mut cfg = config(dir.path(), 5, Profile::Slices);
    cfg.plan_path = Some(path);
    cfg.until = Stage::Potential;
    let bad = pipeline::execute(&cfg).unwrap();
    assert_eq!(bad.summary.exit_code, 1);
    assert!(
        bad.summary
            .failures
            .iter()
            .any(|f| f.starts_with("kantorovich/c2_monotone") && f.contains("[(")),
        "{:?}",
        bad.summary.failures
    );

    let rep = verify(&out.instance, &plan, &Tolerances::default()).unwrap();
    assert_eq!(rep.exit_code, 1);
}

#[test]
fn infeasible_and_marginal_profiles_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(dir.path(), 1, Profile::Infeasible)).unwrap();
    assert_eq!(out.summary.exit_code, 2);
    assert!(out
        .summary
        .hypotheses
        .iter()
        .any(|h| h.contains("not causally related")));
    assert!(dir.path().join(pipeline::SUMMARY_FILE).exists());

    for seed in 0..5 {
        let mut cfg = config(dir.path(), seed, Profile::Marginal);
        cfg.mu_size = 6;
        cfg.nu_size = 8;
        let out = pipeline::execute(&cfg).unwrap();
        assert_eq!(out.summary.exit_code, 2, "{:?}", out.summary);
    }
}

#[test]
fn disabled_checks_are_not_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2, Profile::Slices);
    cfg.checks = Checks::parse("potential").unwrap();
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.summary.exit_code, 0);
    assert!(out.summary.monotone.is_none() && out.summary.map_agreement.is_none());
    assert!(!dir.path().join(pipeline::MAP_FILE).exists());
}

#[test]
fn sweep_tags_rows_by_profile() {
    let template = RunConfig::new(0, 1, (5, 5), Profile::Slices);
    let csv = pipeline::sweep(&template, &[Profile::Slices, Profile::Infeasible], 0..3).unwrap();
    let profiles: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        profiles,
        [
            "slices",
            "slices",
            "slices",
            "infeasible",
            "infeasible",
            "infeasible"
        ]
    );
    assert!(csv.lines().skip(4).all(|l| l.ends_with(",2")));
}
