mod common;

use common::*;
use nlpflow::dynamics::{
    direction, rhs_feasible, rhs_general, DynamicsConfig, DynamicsError, GainSet, PtsState, WorkingSet,
};
use nlpflow::linalg::{self, Matrix, Vector};
use nlpflow::problem::builtin;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn redundant_equality_rows_leave_the_flow_unchanged_on_example1(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let problem = builtin("example1", None).unwrap();
        let theta = Vector::from_fn(3, |_, _| rng.random_range(-10.0..10.0));
        let eval = problem.evaluate(&theta).unwrap();
        let gains = GainSet::scalar(problem.dims(), 0.1, 0.1, 0.1).unwrap();
        // the priority grouping the flow uses on this problem
        let pts = PtsState::new(vec![vec![0, 1, 2], vec![3, 4]], 5).unwrap().update(&eval.g, 1e-6);
        let defect = redundancy_defect(&mut rng, &eval, &gains, &pts).unwrap();
        prop_assert!(defect <= 1e-8, "{defect:e}");
    }

    #[test]
    fn redundant_equality_rows_leave_the_flow_unchanged_on_random_problems(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(2..=5);
        let s = rng.random_range(1..n);
        let r = rng.random_range(0..=3);
        let eval = random_instance(&mut rng, n, r, s);
        let gains = random_gains(&mut rng, eval.dims());
        let gains = resized(&gains, s);
        if let Some(defect) = redundancy_defect(&mut rng, &eval, &gains, &PtsState::single(r)) {
            prop_assert!(defect <= 1e-8, "{defect:e}");
        }
    }

    #[test]
    fn working_set_matches_brute_force(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=3);
        let r = rng.random_range(0..=3);
        let s = rng.random_range(0..=1.min(n - 1));
        let eval = random_instance(&mut rng, n, r, s);
        let gains = random_gains(&mut rng, eval.dims());
        let cfg = DynamicsConfig::default();
        let activated: Vec<usize> = (0..r).filter(|&i| eval.g[i] >= -cfg.eps_act).collect();
        let warm: Vec<usize> = activated.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let oracle = consistent_working_sets(&eval, &gains, &activated);
        let got = direction(&eval, &gains, &PtsState::single(r), &warm, &cfg);
        match oracle.first() {
            Some(expected) => {
                for other in &oracle {
                    prop_assert!((&other.dtheta - &expected.dtheta).amax() <= 1e-8);
                }
                let got = got.unwrap();
                let diff = (&got.dtheta - &expected.dtheta).amax();
                prop_assert!(diff <= 1e-8, "{diff:e}, oracle {:?} got {:?}", expected.working_set.working, got.working_set.working);
                prop_assert!(got.pi_i.iter().all(|&p| p >= -1e-9));
            }
            None => {
                let infeasible = matches!(got, Err(DynamicsError::InfeasibleSubproblem { .. }));
                prop_assert!(infeasible, "{got:?}");
            }
        }
    }

    #[test]
    fn feasible_flow_descends_and_stays_tangent(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(2..=5);
        let s = rng.random_range(0..n);
        let r = rng.random_range(0..=4);
        let mut eval = random_instance(&mut rng, n, r, s);
        eval.h.fill(0.0);
        eval.g.iter_mut().for_each(|g| *g = g.min(0.0));
        let gains = random_gains(&mut rng, eval.dims());
        let cfg = DynamicsConfig::default();
        let working: Vec<usize> = (0..r).filter(|&i| eval.g[i] == 0.0).collect();
        let rows: Vec<_> = eval.h_jac.row_iter().chain(working.iter().map(|&i| eval.g_jac.row(i))).collect();
        let stacked = if rows.is_empty() { Matrix::zeros(0, n) } else { Matrix::from_rows(&rows) };
        prop_assume!(condition_number(&stacked) <= WELL_CONDITIONED);
        let ws = WorkingSet { activated: working.clone(), working: working.clone(), pts_active_groups: vec![0] };
        let res = rhs_feasible(&eval, &gains, &ws, &cfg).unwrap();
        let scale = eval.f_grad.norm() * res.dtheta.norm() + 1.0;
        prop_assert!(eval.f_grad.dot(&res.dtheta) <= 1e-10 * scale);
        prop_assert!((&eval.h_jac * &res.dtheta).amax() <= 1e-9 * scale);
        for &i in &working {
            prop_assert!(eval.g_jac.row(i).transpose().dot(&res.dtheta).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn equality_violation_decays(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=5);
        let s = rng.random_range(1..=5);
        let mut eval = random_instance(&mut rng, n, 0, s);
        if rng.random_bool(0.5) && n > 1 {
            eval.h_jac = low_rank_matrix(&mut rng, s, n, 1);
        }
        let gains = random_gains(&mut rng, eval.dims());
        let ws = WorkingSet::default();
        let res = rhs_general(&eval, &gains, &ws, &DynamicsConfig::default()).unwrap();
        let kh = gains.k_h() * &eval.h;
        // d/dtau (h^T K_h h) along the flow
        let rate = 2.0 * kh.dot(&(&eval.h_jac * &res.dtheta));
        let p = linalg::projector_col(&eval.h_jac).unwrap();
        let predicted = -2.0 * kh.dot(&(&p * &kh));
        prop_assert!((rate - predicted).abs() <= 1e-8 * (1.0 + kh.norm_squared()));
        prop_assert!(rate <= 1e-12);
    }

    #[test]
    fn full_column_rank_gives_the_least_squares_direction(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=4);
        let s = n + rng.random_range(0..=2);
        let eval = random_instance(&mut rng, n, 0, s);
        let gains = random_gains(&mut rng, eval.dims());
        let res = rhs_general(&eval, &gains, &WorkingSet::default(), &DynamicsConfig::default()).unwrap();
        let a = &eval.h_jac;
        prop_assume!(condition_number(a) <= WELL_CONDITIONED);
        let Some(inv) = (a.transpose() * a).try_inverse() else { return Ok(()) };
        let expected = -(inv * a.transpose() * (gains.k_h() * &eval.h));
        prop_assert!((&res.dtheta - &expected).amax() <= 1e-8 * (1.0 + expected.amax()));
    }

    #[test]
    fn working_multipliers_are_non_negative(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=5);
        let r = rng.random_range(1..=6);
        let s = rng.random_range(0..n);
        let eval = random_instance(&mut rng, n, r, s);
        let gains = random_gains(&mut rng, eval.dims());
        if let Ok(res) = direction(&eval, &gains, &PtsState::single(r), &[], &DynamicsConfig::default()) {
            for &i in &res.working_set.working {
                prop_assert!(res.pi_i[i] >= -1e-9, "pi_{} = {}", i + 1, res.pi_i[i]);
            }
            for i in (0..r).filter(|i| !res.working_set.working.contains(i)) {
                prop_assert_eq!(res.pi_i[i], 0.0);
            }
        }
    }
}
