use proptest::prelude::*;

use zeitgeist_core::catalog::centipede::CentipedeSpec;
use zeitgeist_core::catalog::cournot::{cournot_closed_form, entrant_fitness_at, CournotSpec};
use zeitgeist_core::catalog::example1::build_example1;
use zeitgeist_core::catalog::investment::{build_investment_game, InvestmentOptions, InvestmentSpec};
use zeitgeist_core::config;
use zeitgeist_core::ez::{enumerate_ez, fitness, situation_fitness, verify_ez};
use zeitgeist_core::inference::kl_divergence;
use zeitgeist_core::learning::{run_learning, SimConfig};
use zeitgeist_core::model::{illusion_of_control_model, minimal_correct_model};
use zeitgeist_core::{FitnessWeights, Quad, SituationPlay, StageEnv, Zeitgeist};

fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
        let v: Vec<f64> = v.into_iter().map(|x| x + 1e-3).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Direct sum over consequences, independent of the library's payoff helpers.
fn payoff_oracle(env: &StageEnv, sit: usize, a: usize, b: usize) -> f64 {
    let row = env.kernels[sit].row(a, b);
    row.mass
        .iter()
        .enumerate()
        .map(|(j, m)| m * env.utility[row.offset + j])
        .sum()
}

fn quad3() -> impl Strategy<Value = Quad> {
    (0usize..3, 0usize..3, 0usize..3, 0usize..3).prop_map(|(a, b, c, d)| Quad::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_identity((p, q) in (2usize..8).prop_flat_map(|n| (dist(n), dist(n)))) {
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(!d.is_infinite());
        prop_assert!(d.value() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().value().abs() <= 1e-15);
    }

    #[test]
    fn kl_infinite_when_support_missing(p in dist(4), k in 0usize..4) {
        let mut q = p.clone();
        q[k] = 0.0;
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        prop_assert!(kl_divergence(&p, &q).unwrap().is_infinite());
    }

    #[test]
    fn fitness_decomposes_over_situations_and_matches(qa in quad3(), qb in quad3(), pa in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let env = build_example1();
        let shares = [pa, 1.0 - pa];
        let z = Zeitgeist {
            shares,
            plays: [qa, qb]
                .into_iter()
                .map(|quad| SituationPlay { quad, beliefs: [vec![], vec![]], mixture_supported: [false; 2] })
                .collect(),
        };
        let q = FitnessWeights::new(vec![w, 1.0 - w]).unwrap();
        let (fa, fb) = fitness(&z, &env, &q);
        let mut want = [0.0; 2];
        for (s, quad) in [qa, qb].into_iter().enumerate() {
            for g in 0..2 {
                let h = 1 - g;
                let own = payoff_oracle(&env, s, quad.play(g, g), quad.play(g, g));
                let cross = payoff_oracle(&env, s, quad.play(g, h), quad.play(h, g));
                want[g] += q.q()[s] * (shares[g] * own + shares[h] * cross);
            }
            let sf = situation_fitness(&env, s, quad, shares);
            prop_assert!(sf.iter().all(|x| x.is_finite()));
        }
        prop_assert!((fa - want[0]).abs() <= 1e-12);
        prop_assert!((fb - want[1]).abs() <= 1e-12);
    }

    #[test]
    fn centipede_gap_is_affine_and_vanishes_at_stable_share(k in 3usize..10, g in 0.5f64..3.0, l in 0.1f64..1.5, p in 0.0f64..=1.0) {
        let spec = CentipedeSpec { k: 2 * k, g, l };
        let gap = spec.fitness_gap(p);
        prop_assert!((gap - (spec.fitness_correct(p) - spec.fitness_analogy(p))).abs() <= 1e-12);
        let affine = spec.fitness_gap(0.0) + p * (spec.fitness_gap(1.0) - spec.fitness_gap(0.0));
        prop_assert!((gap - affine).abs() <= 1e-12);
        if spec.condition() {
            let root = 1.0 - spec.p_star_b();
            prop_assert!(spec.fitness_gap(root).abs() <= 1e-12);
        }
    }

    #[test]
    fn cournot_entrant_fitness_is_unimodal(beta in 5.0f64..20.0, c in 0.0f64..4.0, r in 0.5f64..2.0) {
        let spec = CournotSpec { beta, c, r, r_hat: r / 2.0 };
        let peak = (beta - c) / (2.0 * r);
        let grid: Vec<f64> = (0..=400).map(|i| 2.0 * peak * i as f64 / 400.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&a| entrant_fitness_at(&spec, a)).collect();
        let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let i_top = vals.iter().position(|&v| v == top).unwrap();
        prop_assert!(vals[..=i_top].windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(vals[i_top..].windows(2).all(|w| w[1] <= w[0]));
        let cf = cournot_closed_form(&spec).unwrap();
        prop_assert!((cf.a_ba - peak).abs() <= 1e-12);
        prop_assert!((cf.entrant_fitness - entrant_fitness_at(&spec, peak)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enumerated_ez_pass_verification_example1(pa in 0.0f64..=1.0, eps in 1e-4f64..0.1) {
        let env = build_example1();
        let a = minimal_correct_model(&env);
        let b = illusion_of_control_model(&env, eps).unwrap();
        for z in enumerate_ez(&env, &a, &b, [pa, 1.0 - pa]).unwrap() {
            let (ok, _) = verify_ez(&z, &env, &a, &b).unwrap();
            prop_assert!(ok);
        }
    }

    #[test]
    fn enumerated_ez_pass_verification_investment(pa in 0.0f64..=1.0) {
        let spec = InvestmentSpec { b: 1.0, c: 5.5, m: 12.0 };
        let game = build_investment_game(&spec, &InvestmentOptions::default()).unwrap();
        let zs = enumerate_ez(&game.env, &game.model_a, &game.model_b, [pa, 1.0 - pa]).unwrap();
        for z in &zs {
            let (ok, _) = verify_ez(z, &game.env, &game.model_a, &game.model_b).unwrap();
            prop_assert!(ok);
            let total: f64 = z.plays[0].beliefs[1].iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
        for near in [pa - 1e-6, pa + 1e-6] {
            if (0.0..=1.0).contains(&near) {
                for z in enumerate_ez(&game.env, &game.model_a, &game.model_b, [near, 1.0 - near]).unwrap() {
                    prop_assert!(zs.iter().any(|y| y.plays[0].quad == z.plays[0].quad));
                }
            }
        }
    }

    #[test]
    fn posteriors_stay_normalized(seed in any::<u64>(), pa in 0.2f64..0.8, tau in 0.0f64..0.99) {
        let env = build_example1();
        let a = minimal_correct_model(&env);
        let b = illusion_of_control_model(&env, 1e-2).unwrap();
        let mut cfg = SimConfig::new(20, [pa, 1.0 - pa], 15, seed);
        cfg.tau = Some(tau);
        cfg.situation = Some(0);
        let traj = run_learning(&env, &a, &b, &cfg).unwrap();
        for r in &traj.periods {
            for g in 0..2 {
                let s: f64 = r.belief[g].iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!(r.belief[g].iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn illusion_model_round_trips_through_config(eps in 1e-4f64..0.1) {
        let env = build_example1();
        let m = illusion_of_control_model(&env, eps).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        config::save_model(&m, &path).unwrap();
        let back = config::load_model(&path, &env).unwrap();
        prop_assert_eq!(back.len(), m.len());
        for gamma in 0..m.len() {
            prop_assert_eq!(back.param(gamma), m.param(gamma));
            for a in 0..3 {
                for c in 0..3 {
                    prop_assert_eq!(back.kernel_of(gamma).row(a, c).mass, m.kernel_of(gamma).row(a, c).mass);
                }
            }
        }
    }
}
