use lorentz_ot::cost::assemble_cost_matrix;
use lorentz_ot::kantorovich::{solve, SolveResult};
use lorentz_ot::measures::{generate, Coupling, GeneratorConfig, PlanEntry, Profile};
use lorentz_ot::potentials::{build_pi_solution, verify_pi_solution, ExtReal};
use lorentz_ot::regularity::{
    check_semiconvexity, check_timelike_separation, hypothesis_flags, run_checks, semiconvexity_of,
    stable_under_refinement, Grid, RegionBox, DEFAULT_NODES,
};
use lorentz_ot::spacetime::Event;
use proptest::prelude::*;

fn slices(
    seed: u64,
    n: usize,
    k: usize,
) -> (
    lorentz_ot::measures::Instance,
    lorentz_ot::cost::CostMatrix,
    SolveResult,
) {
    let inst = generate(&GeneratorConfig::new(seed, n, k, k, Profile::Slices)).unwrap();
    let cm = assemble_cost_matrix(&inst.model(), inst.mu.points(), inst.nu.points()).unwrap();
    let s = solve(&cm, &inst.mu, &inst.nu).unwrap();
    (inst, cm, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slices_pass_every_check(seed in 0u64..100_000, n in 1usize..4, k in 2usize..12) {
        let (inst, cm, s) = slices(seed, n, k);
        let support = s.coupling.support();
        let pp = build_pi_solution(&support, &cm, support[0]).unwrap();
        prop_assume!(verify_pi_solution(&pp, &s.coupling, &cm).passed());
        let rep = run_checks(&inst.model(), &pp, &s, &cm, DEFAULT_NODES).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.failures);
        prop_assert!(!rep.flags.any());
    }

    #[test]
    fn semiconvexity_shrinks_with_the_box(seed in 0u64..100_000, n in 1usize..4, k in 2usize..10) {
        let (inst, cm, s) = slices(seed, n, k);
        let support = s.coupling.support();
        let pp = build_pi_solution(&support, &cm, support[0]).unwrap();
        let model = inst.model();
        let outer = RegionBox::auto(&inst.mu).unwrap();
        // the inner grid is a sub-grid of the outer one with the same step
        let inner = outer.shrunk(0.5);
        let c_outer = check_semiconvexity(&model, &pp, inst.nu.points(), &Grid::new(outer, 33).unwrap()).unwrap();
        let c_inner = check_semiconvexity(&model, &pp, inst.nu.points(), &Grid::new(inner, 17).unwrap()).unwrap();
        // node coordinates agree up to rounding
        prop_assert!(c_inner <= c_outer + 1e-9 * (1.0 + c_outer), "{} > {}", c_inner, c_outer);
    }

    #[test]
    fn separation_ignores_zero_mass_entries(seed in 0u64..100_000, n in 1usize..4, k in 2usize..10) {
        let (inst, _, s) = slices(seed, n, k);
        let mut plan = s.coupling.plan().to_vec();
        for i in 0..k {
            for j in 0..k {
                plan.push(PlanEntry { i, j, mass: 0.0 });
            }
        }
        let padded = SolveResult {
            coupling: Coupling::new(inst.mu.clone(), inst.nu.clone(), plan).unwrap(),
            ..s.clone()
        };
        let model = inst.model();
        prop_assert_eq!(check_timelike_separation(&s, &model), check_timelike_separation(&padded, &model));
    }
}

#[test]
fn marginal_instances_raise_a_flag() {
    for seed in 0..20 {
        let inst = generate(&GeneratorConfig::new(
            seed,
            1 + seed as usize % 3,
            6,
            8,
            Profile::Marginal,
        ))
        .unwrap();
        assert!(
            hypothesis_flags(&inst.model(), &inst.mu, &inst.nu).any(),
            "seed {seed}"
        );
    }
}

#[test]
fn smooth_stubs_are_stable_under_refinement() {
    let region = RegionBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let grid = Grid::new(region, DEFAULT_NODES).unwrap();
    let stubs: [(&str, Box<dyn Fn(&Event) -> ExtReal + Sync>); 3] = [
        (
            "concave quadratic",
            Box::new(|x: &Event| ExtReal::Finite(-x.coords().iter().map(|c| c * c).sum::<f64>())),
        ),
        (
            "cosine",
            Box::new(|x: &Event| {
                ExtReal::Finite(x.coords()[0].cos() + (2.0 * x.coords()[1]).cos())
            }),
        ),
        (
            "saddle",
            Box::new(|x: &Event| ExtReal::Finite(x.coords()[0] * x.coords()[1])),
        ),
    ];
    for (name, f) in &stubs {
        let coarse = semiconvexity_of(f, &grid).unwrap();
        let fine = semiconvexity_of(f, &grid.refined()).unwrap();
        assert!(
            stable_under_refinement(coarse, fine),
            "{name}: {coarse} vs {fine}"
        );
    }
}
