use proptest::prelude::*;
use spanvi::analysis::{
    theorem1_constants, theorem2_constants, verify_lemma2, verify_lock_in, verify_sandwich,
    verify_theorem1, verify_theorem2,
};
use spanvi::generators::{random_ergodic_instance, round_robin_schedule, GeneratorSpec};
use spanvi::io::{mdp_from_json, mdp_to_json};
use spanvi::{
    bellman_backup, exact_optimal, policy_evaluation_discounted, vi_async_lr, vi_sync, vi_sync_lr,
    DiscountSpec, SolverConfig,
};

fn criterion(avg: bool, gamma: f64) -> DiscountSpec {
    if avg {
        DiscountSpec::Average
    } else {
        DiscountSpec::discounted(gamma).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identical_inputs_give_identical_traces(seed in 0u64..1000, alpha in 0.1f64..0.9) {
        let inst = random_ergodic_instance(&GeneratorSpec::new(5, 3, seed), criterion(false, 0.9)).unwrap();
        let cfg = SolverConfig::sync_lr(inst.mdp.discount(), alpha, 1e-9).unwrap();
        prop_assert_eq!(vi_sync_lr(&inst.mdp, &cfg).unwrap(), vi_sync_lr(&inst.mdp, &cfg).unwrap());
    }

    #[test]
    fn synchronous_traces_pass_hard_checks(
        seed in 0u64..1000,
        n in 2usize..7,
        m in 1usize..4,
        gamma in 0.5f64..0.99,
        avg in any::<bool>(),
    ) {
        let spec = criterion(avg, gamma);
        let inst = random_ergodic_instance(&GeneratorSpec::new(n, m, seed), spec).unwrap();
        let cfg = SolverConfig::sync(spec, 1e-10)
            .unwrap()
            .with_reference(inst.optimum.values.clone());
        let trace = vi_sync(&inst.mdp, &cfg).unwrap();
        prop_assert!(trace.converged());
        prop_assert!(verify_lemma2(&trace).ok());
        prop_assert!(verify_sandwich(&inst.mdp, &trace, &inst.optimum).ok());
        if let Ok(c) = theorem1_constants(&inst.mdp, spec, &inst.optimum) {
            for r in verify_theorem1(&trace, &c) {
                prop_assert!(r.ok(), "{:?}", r);
            }
            prop_assert!(verify_lock_in(&trace, &c, &inst.optimum).ok());
        }
    }

    #[test]
    fn damped_traces_pass_hard_checks(seed in 0u64..1000, alpha in 0.1f64..0.9, gamma in 0.5f64..0.99) {
        let spec = criterion(false, gamma);
        let inst = random_ergodic_instance(&GeneratorSpec::new(5, 3, seed), spec).unwrap();
        let cfg = SolverConfig::sync_lr(spec, alpha, 1e-10)
            .unwrap()
            .with_reference(inst.optimum.values.clone());
        let trace = vi_sync_lr(&inst.mdp, &cfg).unwrap();
        prop_assert!(verify_lemma2(&trace).ok());
        prop_assert!(verify_sandwich(&inst.mdp, &trace, &inst.optimum).ok());
        let c = theorem2_constants(alpha, &theorem1_constants(&inst.mdp, spec, &inst.optimum).unwrap()).unwrap();
        prop_assert!(verify_theorem2(&trace, &c).ok());
    }

    #[test]
    fn async_discounted_reaches_the_optimal_policy(seed in 0u64..1000, alpha in 0.2f64..0.9) {
        let spec = criterion(false, 0.9);
        let inst = random_ergodic_instance(&GeneratorSpec::new(4, 2, seed), spec).unwrap();
        let cfg = SolverConfig::async_lr(spec, alpha, 1e-10).unwrap();
        let trace = vi_async_lr(&inst.mdp, &cfg, &round_robin_schedule(4, 4).unwrap()).unwrap();
        prop_assert!(trace.converged());
        prop_assert_eq!(&trace.policy, &inst.optimum.policy);
    }

    #[test]
    fn oracle_is_a_fixed_point(seed in 0u64..1000, gamma in 0.0f64..0.999) {
        let spec = criterion(false, gamma);
        let inst = random_ergodic_instance(&GeneratorSpec::new(6, 3, seed), spec).unwrap();
        let (tv, pi) = bellman_backup(&inst.mdp, &inst.optimum.values, spec).unwrap();
        let scale = 1.0 + inst.optimum.values.sup_norm();
        prop_assert!(tv.sub(&inst.optimum.values).sup_norm() <= 1e-9 * scale);
        prop_assert_eq!(&pi, &inst.optimum.policy);
        let v = policy_evaluation_discounted(&inst.mdp, &pi, gamma).unwrap();
        prop_assert!(v.sub(&inst.optimum.values).sup_norm() <= 1e-9 * scale);
    }

    #[test]
    fn fixture_round_trip_preserves_the_solution(seed in 0u64..1000) {
        let spec = criterion(false, 0.95);
        let inst = random_ergodic_instance(&GeneratorSpec::new(5, 2, seed), spec).unwrap();
        let back = mdp_from_json(&mdp_to_json(&inst.mdp)).unwrap();
        prop_assert_eq!(&back, &inst.mdp);
        prop_assert_eq!(exact_optimal(&back, spec).unwrap(), inst.optimum);
    }
}
