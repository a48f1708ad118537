//! Benchmark mechanisms vs independent oracles: exhaustive enumeration of
//! the welfare optimum on small markets, the water-filling optimality
//! conditions, the cross-mechanism welfare ordering, and noise behavior.

use rand::Rng;
use redemption_market::benchmarks::{bsp_solve, opp_noisy, opp_solve, planner_welfare, NoiseSpec};
use redemption_market::experiments::{
    assign_informed, evaluate, sample_population, ExperimentConfig,
};
use redemption_market::{rng, Mechanism, ServerCostModel, UserProfile};

/// Every feasible integer retention vector, checked against the solver.
#[test]
fn opp_beats_exhaustive_enumeration_on_small_markets() {
    let mut stream = rng::stream(55, 0, "opp-oracle");
    for instance in 0..60 {
        let n = 1 + stream.gen_range(0..3usize);
        let users: Vec<UserProfile> = (0..n)
            .map(|_| {
                UserProfile::new(
                    stream.gen_range(5..=50) as f64,
                    stream.gen::<f64>() * 3.0,
                    1.0,
                    stream.gen::<f64>() * 2.0,
                    true,
                )
                .unwrap()
            })
            .collect();
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = ServerCostModel::new(
            std::f64::consts::E,
            0.1,
            0.01,
            0.0,
            2e-3,
            50.0,
            1.0,
            total,
        )
        .unwrap();
        let solved = opp_solve(&users, &model).unwrap();
        let solved_welfare = planner_welfare(&users, &model, &solved.retention);

        // Walk the whole integer lattice.
        let dims: Vec<i64> = users.iter().map(|u| u.data as i64).collect();
        let mut idx = vec![0i64; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            let retention: Vec<f64> = idx.iter().map(|v| *v as f64).collect();
            let w = planner_welfare(&users, &model, &retention);
            if w > best {
                best = w;
            }
            let mut carry = 0;
            loop {
                idx[carry] += 1;
                if idx[carry] <= dims[carry] {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
                if carry == n {
                    break;
                }
            }
            if carry == n {
                break;
            }
        }
        assert!(
            solved_welfare >= best - 1e-6 - 1e-9 * best.abs(),
            "instance {instance}: solver {solved_welfare} below lattice best {best}"
        );
    }
}

#[test]
fn water_filling_equalizes_interior_marginals_tightly() {
    let cfg = ExperimentConfig::default();
    for rep in 0..20u64 {
        let mut users = sample_population(&cfg, rep);
        assign_informed(&mut users, 1.0, cfg.seed, rep);
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = cfg.model_for(total).unwrap();
        let out = opp_solve(&users, &model).unwrap();
        let marginals: Vec<f64> = users
            .iter()
            .zip(&out.retention)
            .filter(|(u, r)| **r > 1.0 && **r < u.data - 1.0)
            .map(|(u, r)| u.privacy_marginal(u.data - *r))
            .collect();
        if marginals.len() < 2 {
            continue;
        }
        let m0 = marginals[0];
        for m in &marginals {
            assert!(
                ((m - m0) / m0).abs() < 1e-9,
                "rep {rep}: interior marginals differ: {m} vs {m0}"
            );
        }
    }
}

#[test]
fn welfare_ordering_holds_per_seed() {
    let cfg = ExperimentConfig::default();
    for rep in 0..60u64 {
        let mut users = sample_population(&cfg, rep);
        assign_informed(&mut users, 1.0, cfg.seed, rep);
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = cfg.model_for(total).unwrap();
        let slack = {
            let max_marginal =
                users.iter().map(|u| u.privacy_value).fold(0.0f64, f64::max);
            1e-6 * 2000.0 + users.len() as f64 * cfg.trade_unit * max_marginal
        };
        let (_, opp) = evaluate(Mechanism::Opp, &users, &model, &cfg, rep, 0.0).unwrap();
        let (_, iiq) = evaluate(Mechanism::Iiq, &users, &model, &cfg, rep, 0.0).unwrap();
        let (_, ciq) = evaluate(Mechanism::Ciq, &users, &model, &cfg, rep, 0.0).unwrap();
        assert!(opp.welfare >= iiq.welfare - slack);
        assert!(opp.welfare >= ciq.welfare - slack);
        // In practice the gap is far inside the discretization slack.
        assert!(opp.welfare >= iiq.welfare - 20.0, "rep {rep}");
    }
}

#[test]
fn zero_noise_bit_equality_and_noise_monotonicity() {
    let cfg = ExperimentConfig::default();
    let mut means = vec![0.0f64; 3];
    let sigmas = [0.0, 0.5, 5.0];
    let n = 120u64;
    for rep in 0..n {
        let mut users = sample_population(&cfg, rep);
        assign_informed(&mut users, 1.0, cfg.seed, rep);
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = cfg.model_for(total).unwrap();
        let exact = opp_solve(&users, &model).unwrap();
        for (i, sigma) in sigmas.iter().enumerate() {
            let noisy = opp_noisy(
                &users,
                &model,
                &NoiseSpec::new(*sigma, rng::derive(cfg.seed, rep, "noise-test")).unwrap(),
            )
            .unwrap();
            if *sigma == 0.0 {
                assert_eq!(noisy.retention, exact.retention, "rep {rep}: retention drifted");
                assert_eq!(noisy.payments, exact.payments, "rep {rep}: payments drifted");
            }
            means[i] += planner_welfare(&users, &model, &noisy.retention);
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    assert!(means[0] >= means[1] && means[1] >= means[2], "welfare not decreasing: {means:?}");
}

#[test]
fn single_distorted_user_undersells_and_loses_welfare() {
    // One user, no accuracy channel, privacy estimate doubled: the quoted
    // price is too high a marginal, the user sells more than optimal, and
    // welfare strictly drops.
    let users = vec![UserProfile::new(6000.0, 10.0, 1.0, 0.0, true).unwrap()];
    let model = ServerCostModel::standard(6000.0);
    let clean = opp_solve(&users, &model).unwrap();
    let w_clean = planner_welfare(&users, &model, &clean.retention);

    let inflated = vec![UserProfile::new(6000.0, 20.0, 1.0, 0.0, true).unwrap()];
    let price_hat = {
        let o = opp_solve(&inflated, &model).unwrap();
        o.payments[0] / o.retention[0]
    };
    let response = users[0].supply(0.0, price_hat).unwrap();
    let w_resp = planner_welfare(&users, &model, &[response]);
    assert!(response > clean.retention[0]);
    assert!(w_resp < w_clean);
}

#[test]
fn bsp_refinement_consistency() {
    let cfg = ExperimentConfig::default();
    let mut users = sample_population(&cfg, 5);
    assign_informed(&mut users, 1.0, cfg.seed, 5);
    let total: f64 = users.iter().map(|u| u.data).sum();
    let model = cfg.model_for(total).unwrap();
    let coarse: Vec<f64> = (1..=40).map(|i| i as f64 * 0.001).collect();
    let fine: Vec<f64> = (1..=400).map(|i| i as f64 * 0.0001).collect();
    let payoff = |o: &redemption_market::MechanismOutcome| {
        model.cost(0.0).unwrap() - model.cost(o.total_retained().min(model.total_data)).unwrap()
            - o.total_payments()
    };
    let a = bsp_solve(&users, &model, &coarse).unwrap();
    let b = bsp_solve(&users, &model, &fine).unwrap();
    assert!(payoff(&b) >= payoff(&a) - 1e-9);
}

#[test]
fn baselines_coincide_at_rho_zero() {
    let cfg = ExperimentConfig::default();
    let mut users = sample_population(&cfg, 9);
    assign_informed(&mut users, 0.0, cfg.seed, 9);
    let total: f64 = users.iter().map(|u| u.data).sum();
    let model = cfg.model_for(total).unwrap();
    let dnr = evaluate(Mechanism::Dnr, &users, &model, &cfg, 9, 0.0).unwrap().0;
    let gdpr = evaluate(Mechanism::Gdpr, &users, &model, &cfg, 9, 0.0).unwrap().0;
    let full = evaluate(Mechanism::Full, &users, &model, &cfg, 9, 0.0).unwrap().0;
    assert_eq!(dnr.retention, gdpr.retention);
    assert_eq!(dnr.retention, full.retention);
    assert_eq!(full.total_payments(), 0.0);
    // The quotation with nobody informed is no-redemption too.
    let iiq = evaluate(Mechanism::Iiq, &users, &model, &cfg, 9, 0.0).unwrap().0;
    assert_eq!(iiq.retention, dnr.retention);
    assert_eq!(iiq.total_payments(), 0.0);
}

#[test]
fn gdpr_outranks_full_compensation_in_welfare() {
    // Privacy-only reference setting; checked ordinally.
    let mut cfg = ExperimentConfig::default();
    cfg.accuracy_sense = "0".parse().unwrap();
    let (mut wg, mut wf) = (0.0, 0.0);
    for rep in 0..100u64 {
        let mut users = sample_population(&cfg, rep);
        assign_informed(&mut users, 1.0, cfg.seed, rep);
        let total: f64 = users.iter().map(|u| u.data).sum();
        let model = cfg.model_for(total).unwrap();
        wg += evaluate(Mechanism::Gdpr, &users, &model, &cfg, rep, 0.0).unwrap().1.welfare;
        wf += evaluate(Mechanism::Full, &users, &model, &cfg, rep, 0.0).unwrap().1.welfare;
    }
    assert!(wg > wf, "GDPR {wg} vs FULL {wf}");
}
