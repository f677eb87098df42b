mod common;

use common::*;
use lorentz_ot::cost::{assemble_cost_matrix, CostMatrix, ExtendedCost};
use lorentz_ot::kantorovich::{coupling_cost, solve, SolveResult};
use lorentz_ot::measures::{generate, Coupling, GeneratorConfig, Instance, PlanEntry, Profile};
use lorentz_ot::potentials::{
    build_centered_pi_solution, build_pi_solution, c2_convexify, c2_transform, ExtReal,
    PotentialPair,
};
use lorentz_ot::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, n: usize, k: usize) -> (Instance, CostMatrix, SolveResult) {
    let inst = generate(&GeneratorConfig::new(seed, n, k, k, Profile::Slices)).unwrap();
    let cm = assemble_cost_matrix(&inst.model(), inst.mu.points(), inst.nu.points()).unwrap();
    let s = solve(&cm, &inst.mu, &inst.nu).unwrap();
    (inst, cm, s)
}

/// `sum psi nu - sum phi mu`; `None` when an infinite value carries mass.
fn dual_value(pp: &PotentialPair, inst: &Instance) -> Option<f64> {
    let a: Option<f64> = pp
        .psi
        .iter()
        .zip(inst.nu.weights())
        .map(|(p, w)| p.finite().map(|p| p * w))
        .sum();
    let b: Option<f64> = pp
        .phi
        .iter()
        .zip(inst.mu.weights())
        .map(|(p, w)| p.finite().map(|p| p * w))
        .sum();
    Some(a? - b?)
}

/// Permutation couplings and their midpoint blends.
fn random_couplings(inst: &Instance, count: usize, seed: u64) -> Vec<Coupling> {
    let k = inst.mu.len();
    let w = 1.0 / k as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = || {
        let mut p: Vec<usize> = (0..k).collect();
        p.shuffle(&mut rng);
        p
    };
    (0..count)
        .map(|c| {
            let (p, q) = (perm(), perm());
            let plan: Vec<PlanEntry> = if c % 2 == 0 {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| PlanEntry { i, j, mass: w })
                    .collect()
            } else {
                p.iter()
                    .zip(&q)
                    .enumerate()
                    .flat_map(|(i, (&a, &b))| {
                        [
                            PlanEntry {
                                i,
                                j: a,
                                mass: 0.5 * w,
                            },
                            PlanEntry {
                                i,
                                j: b,
                                mass: 0.5 * w,
                            },
                        ]
                    })
                    .collect()
            };
            Coupling::new(inst.mu.clone(), inst.nu.clone(), plan).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_potential_matches_enumeration(seed in 0u64..100_000, n in 1usize..4, k in 1usize..=6) {
        let (_, cm, s) = setup(seed, n, k);
        let support = s.coupling.support();
        for anchor in 0..support.len() {
            let pp = build_pi_solution(&support, &cm, support[anchor]).unwrap();
            prop_assert_eq!(pp.phi[support[anchor].0], ExtReal::Finite(0.0));
            prop_assert!(pp.log.rounds <= support.len());
            let labels = chain_labels(&support, &cm, anchor);
            for (q, &(i, _)) in support.iter().enumerate() {
                let want = labels[q].unwrap();
                let got = pp.phi[i].to_f64();
                prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn convexification_is_idempotent(seed in 0u64..100_000, n in 1usize..4, k in 1usize..10, raw in prop::collection::vec(-5.0..5.0f64, 10)) {
        let (_, cm, _) = setup(seed, n, k);
        let psi: Vec<ExtReal> = raw[..k].iter().map(|&v| ExtReal::Finite(v)).collect();
        let once = c2_convexify(&psi, &cm).unwrap();
        let again = c2_convexify(&c2_transform(&once, &cm).unwrap(), &cm).unwrap();
        // infinities agree exactly; finite values up to rounding of (a - c) + c
        for (a, b) in once.iter().zip(&again) {
            match (a, b) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs())),
                _ => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn weak_duality_against_random_couplings(seed in 0u64..100_000, n in 1usize..4, k in 2usize..10) {
        let (inst, cm, s) = setup(seed, n, k);
        let support = s.coupling.support();
        let pairs = [
            build_pi_solution(&support, &cm, support[0]).unwrap(),
            build_centered_pi_solution(&support, &cm, support[0]).unwrap(),
        ];
        for pp in &pairs {
            let dual = dual_value(pp, &inst).unwrap();
            for c in random_couplings(&inst, 10, seed) {
                let ExtendedCost::Finite(cost) = coupling_cost(&cm, &c) else { continue };
                prop_assert!(dual <= cost + 1e-9 * (1.0 + cost.abs()), "{} > {}", dual, cost);
            }
        }
    }
}

#[test]
fn non_monotone_support_is_rejected() {
    let mut rejected = 0;
    for seed in 0..20 {
        let (_, cm, s) = setup(seed, 1, 6);
        let mut support = s.coupling.support();
        // swap two targets; the reverse swap is then a profitable 2-cycle
        let j0 = support[0].1;
        support[0].1 = support[1].1;
        support[1].1 = j0;
        let worse = cm.get(support[0].0, support[0].1).to_f64()
            + cm.get(support[1].0, support[1].1).to_f64()
            - cm.get(support[0].0, j0).to_f64()
            - cm.get(support[1].0, support[0].1).to_f64();
        if worse <= 1e-6 {
            continue;
        }
        assert!(matches!(
            build_pi_solution(&support, &cm, support[0]),
            Err(Error::MonotonicityViolated(_))
        ));
        rejected += 1;
    }
    assert!(rejected > 0);
}
