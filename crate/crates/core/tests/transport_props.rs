mod common;

use common::*;
use lorentz_ot::cost::{assemble_cost_matrix, dc2_dx};
use lorentz_ot::kantorovich::solve;
use lorentz_ot::lagrangian::dl2_dv;
use lorentz_ot::measures::{generate, GeneratorConfig, Profile};
use lorentz_ot::potentials::build_centered_pi_solution;
use lorentz_ot::spacetime::{Minkowski, SpacetimeModel, TangentVector};
use lorentz_ot::transport::{invert_twist, recover_map, verify_map_induces_coupling, MapStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn twist_inverts_fiber_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..1000 {
        let n = 1 + k % 3;
        let m = Minkowski::new(n).unwrap();
        let x: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: f64 = rng.random_range(0.1..4.0);
        let speed: f64 = rng.random_range(0.0..0.95);
        let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-9);
        let mut v = vec![t];
        v.extend(dir.iter().map(|c| c / norm * speed * t));
        let v = TangentVector::new(ev(&x), v).unwrap();
        let p = dl2_dv(&m, &v).unwrap();
        let (back, end) = invert_twist(&m, &v.base, &p, None).unwrap();
        for (a, b) in back.components.iter().zip(&v.components) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{back:?} vs {v:?}");
        }
        let y = v.base.offset(&v.components, 1.0);
        assert!(y.delta_to(&end).iter().all(|c| c.abs() <= 1e-8));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn recovered_map_reproduces_the_plan(seed in 0u64..100_000, n in 1usize..4, k in 2usize..12) {
        let inst = generate(&GeneratorConfig::new(seed, n, k, k, Profile::Slices)).unwrap();
        let model = inst.model();
        let cm = assemble_cost_matrix(&model, inst.mu.points(), inst.nu.points()).unwrap();
        let s = solve(&cm, &inst.mu, &inst.nu).unwrap();
        let support = s.coupling.support();
        let pp = build_centered_pi_solution(&support, &cm, support[0]).unwrap();
        let tm = recover_map(&model, &pp, &s, &cm).unwrap();
        for e in &tm.entries {
            prop_assert_eq!(e.status, MapStatus::Agreed);
            let x = &inst.mu.points()[e.source_index];
            prop_assert!(model.lorentz_distance(x, &e.target) > 0.0);
            // first-order condition, recomputed here
            let g = dc2_dx(&model, x, &e.target).unwrap();
            let p = e.gradient.as_ref().unwrap();
            let r: f64 = g.components.iter().zip(&p.components).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(r <= 1e-4 * (1.0 + p.norm()));
        }
        let rep = verify_map_induces_coupling(&tm, &s);
        prop_assert!(rep.passed(), "{:?}", rep);
        prop_assert!(rep.pushforward_error <= 1e-10);
    }
}
