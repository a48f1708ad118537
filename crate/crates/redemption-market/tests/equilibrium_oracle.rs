//! Equilibrium solver vs independent oracles: single-period dominance on
//! random splits, exhaustive enumeration of the sequential optimum on
//! small integer markets, concavity certificates, and grid-refinement
//! consistency.

use std::collections::HashMap;

use rand::Rng;
use redemption_market::equilibrium::{
    backward_induction, best_response, ciq_outcome, ciq_outcome_with_step, dominance_check,
    marginal_payoff, terminal_response,
};
use redemption_market::{rng, PriceSchedule, ServerCostModel, UserProfile};

#[test]
fn dominance_holds_on_a_thousand_random_splits() {
    let mut stream = rng::stream(77, 0, "dominance");
    let schedule = PriceSchedule::new(0.001, 0.001).unwrap();
    let model = ServerCostModel::standard(60_000.0);
    let mut violations = 0;
    for _ in 0..1000 {
        let lam = stream.gen::<f64>() * 30.0;
        let theta = stream.gen::<f64>() * 5.0;
        let user = UserProfile::new(6000.0, lam, 1.0, theta, true).unwrap();
        let early = stream.gen_range(0..40usize);
        let late = early + 1 + stream.gen_range(0..40usize);
        let a = 1.0 + stream.gen::<f64>() * 2999.0;
        let b = 1.0 + stream.gen::<f64>() * 2999.0;
        let others = stream.gen::<f64>() * 50_000.0;
        let cert =
            dominance_check(&user, others, &model, &schedule, early, a, late, b).unwrap();
        if !cert.strict || cert.concentrated_payoff <= cert.split_payoff {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "single-period dominance must never fail");
}

#[test]
fn dominance_under_the_reference_schedule_rounds_3_and_7() {
    let mut stream = rng::stream(77, 1, "dominance-3-7");
    let schedule = PriceSchedule::new(0.001, 0.001).unwrap();
    let model = ServerCostModel::standard(60_000.0);
    for _ in 0..100 {
        let user =
            UserProfile::new(6000.0, stream.gen::<f64>() * 30.0, 1.0, 0.0, true).unwrap();
        let a = 1.0 + stream.gen::<f64>() * 2000.0;
        let b = 1.0 + stream.gen::<f64>() * 2000.0;
        let cert = dominance_check(&user, 0.0, &model, &schedule, 3, a, 7, b).unwrap();
        assert!(cert.strict);
        // The timing-free part cancels: the gap is exactly the price gap.
        let gap = a * (schedule.price_at(7) - schedule.price_at(3));
        assert!((cert.concentrated_payoff - cert.split_payoff - gap).abs() < 1e-9);
    }
}

/// Small integer market for exhaustive enumeration.
struct SmallMarket {
    users: Vec<UserProfile>,
    prices: Vec<f64>,
    model: ServerCostModel,
}

/// Exhaustive sequential optimum at integer resolution: each position
/// maximizes its payoff given the recursively enumerated responses of
/// everyone after it.
fn enumerate_sequential(m: &SmallMarket) -> Vec<f64> {
    fn payoff(
        m: &SmallMarket,
        pos: usize,
        own: f64,
        predecessors: f64,
        followers: f64,
    ) -> f64 {
        let u = &m.users[pos];
        let redeemed = (m.model.total_data - predecessors - own - followers).max(0.0);
        u.privacy_utility(u.data - own).unwrap() + own * m.prices[pos]
            - u.accuracy_sense * m.model.accuracy_degradation(redeemed).unwrap()
    }

    /// Best own amount and induced tail total from `pos` on, given integer
    /// predecessor supply.
    fn solve(
        m: &SmallMarket,
        pos: usize,
        predecessors: i64,
        memo: &mut HashMap<(usize, i64), (f64, f64)>,
    ) -> (f64, f64) {
        if pos == m.users.len() {
            return (0.0, 0.0);
        }
        if let Some(v) = memo.get(&(pos, predecessors)) {
            return *v;
        }
        let d = m.users[pos].data as i64;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for own in 0..=d {
            let (_, tail) = solve(m, pos + 1, predecessors + own, memo);
            let v = payoff(m, pos, own as f64, predecessors as f64, tail);
            if v > best.0 {
                best = (v, own as f64, own as f64 + tail);
            }
        }
        memo.insert((pos, predecessors), (best.1, best.2));
        (best.1, best.2)
    }

    let mut memo = HashMap::new();
    let mut out = Vec::new();
    let mut s = 0i64;
    for pos in 0..m.users.len() {
        let (own, _) = solve(m, pos, s, &mut memo);
        out.push(own);
        s += own as i64;
    }
    out
}

#[test]
fn induction_matches_exhaustive_enumeration_on_small_markets() {
    let mut stream = rng::stream(88, 0, "spne-oracle");
    for instance in 0..100 {
        let n = 1 + stream.gen_range(0..3usize);
        let users: Vec<UserProfile> = (0..n)
            .map(|_| {
                UserProfile::new(
                    stream.gen_range(5..=50) as f64,
                    0.1 + stream.gen::<f64>() * 4.9,
                    1.0,
                    stream.gen::<f64>() * 2.0,
                    true,
                )
                .unwrap()
            })
            .collect();
        let total: f64 = users.iter().map(|u| u.data).sum();
        // A steeper accuracy curve keeps the externality visible at this
        // scale.
        let model = ServerCostModel::new(
            std::f64::consts::E,
            0.1,
            0.01,
            0.0,
            1e-4,
            50.0,
            1.0,
            total,
        )
        .unwrap();
        let prices: Vec<f64> = {
            let mut t = 0usize;
            (0..n)
                .map(|_| {
                    t += stream.gen_range(1..5usize);
                    0.01 + 0.01 * t as f64
                })
                .collect()
        };
        let market = SmallMarket { users: users.clone(), prices: prices.clone(), model };
        let expected = enumerate_sequential(&market);

        let ordered: Vec<(usize, UserProfile)> = users.iter().cloned().enumerate().collect();
        let (profile, _) =
            backward_induction(&ordered, &prices, &market.model, 0.0, 1.0).unwrap();
        for (pos, (got, want)) in profile.amounts.iter().zip(&expected).enumerate() {
            assert!(
                (got - want).abs() <= 2.0,
                "instance {instance} position {pos}: induction {got} vs enumeration {want} \
                 (amounts {:?} vs {:?})",
                profile.amounts,
                expected
            );
        }
    }
}

#[test]
fn stage_payoff_concavity_certificate() {
    let mut stream = rng::stream(88, 1, "concavity");
    let model = ServerCostModel::standard(60_000.0);
    for _ in 0..1000 {
        let lam = stream.gen::<f64>() * 30.0;
        let k = stream.gen::<f64>();
        let theta = stream.gen::<f64>() * 5.0;
        let user = UserProfile::new(6000.0, lam, k, theta, true).unwrap();
        let others = stream.gen::<f64>() * 50_000.0;
        let price = stream.gen::<f64>() * 0.02;
        // Marginal payoff must be nonincreasing in own sales; strictly
        // decreasing on the interior when anything prices privacy.
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let own = step as f64 * 300.0;
            let m = marginal_payoff(&user, own, others, price, &model);
            assert!(m <= prev + 1e-12, "marginal payoff increased");
            if lam > 1e-9 && own > 0.0 && own < 6000.0 {
                assert!(m < prev, "not strictly decreasing in the interior");
            }
            prev = m;
        }
    }
}

#[test]
fn best_response_brute_force_plateau() {
    // The payoff maximum over a fine grid is a single plateau around the
    // solver's answer.
    let mut stream = rng::stream(88, 2, "plateau");
    let model = ServerCostModel::standard(6000.0);
    for _ in 0..50 {
        let lam = 0.5 + stream.gen::<f64>() * 29.5;
        let theta = stream.gen::<f64>() * 5.0;
        let user = UserProfile::new(6000.0, lam, 1.0, theta, true).unwrap();
        let price = 0.002 + stream.gen::<f64>() * 0.01;
        let solved = terminal_response(&user, 0.0, price, &model).unwrap();
        let payoff = |own: f64| {
            user.privacy_raw_test(user.data - own) + own * price
                - user.accuracy_sense
                    * 0.1 * ((model.total_data - own) * model.exp_rate()).exp()
        };
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut arg = Vec::new();
        for step in 0..=6000 {
            let own = step as f64;
            let v = payoff(own);
            if v > best.0 + 1e-12 {
                best = (v, own);
                arg = vec![own];
            } else if (v - best.0).abs() <= 1e-12 {
                arg.push(own);
            }
        }
        assert!(arg.len() <= 2, "plateau wider than two grid steps: {arg:?}");
        assert!((solved - best.1).abs() <= 1.0, "solver {solved} vs grid {}", best.1);
    }
}

trait PrivacyRaw {
    fn privacy_raw_test(&self, redeemed: f64) -> f64;
}
impl PrivacyRaw for UserProfile {
    fn privacy_raw_test(&self, redeemed: f64) -> f64 {
        self.privacy_value * (redeemed + 1.0).ln()
    }
}

#[test]
fn refinement_is_cauchy() {
    // Shrinking the induction grid four-fold moves no amount by more than
    // a data unit.
    let mut stream = rng::stream(88, 3, "cauchy");
    let users: Vec<UserProfile> = (0..6)
        .map(|_| {
            UserProfile::new(
                6000.0,
                0.5 + stream.gen::<f64>() * 29.5,
                1.0,
                stream.gen::<f64>() * 5.0,
                true,
            )
            .unwrap()
        })
        .collect();
    let model = ServerCostModel::standard(36_000.0);
    let schedule = PriceSchedule::new(0.001, 0.001).unwrap();
    let (coarse, _) = ciq_outcome_with_step(&users, &schedule, &model, 40.0).unwrap();
    let (fine, _) = ciq_outcome_with_step(&users, &schedule, &model, 10.0).unwrap();
    assert_eq!(coarse.order, fine.order);
    for (a, b) in coarse.amounts.iter().zip(&fine.amounts) {
        assert!((a - b).abs() < 1.0, "refinement moved an amount: {a} vs {b}");
    }
}

#[test]
fn theta_zero_outcome_reduces_to_closed_forms() {
    let mut stream = rng::stream(88, 4, "reduction");
    let users: Vec<UserProfile> = (0..8)
        .map(|_| {
            UserProfile::new(6000.0, 0.5 + stream.gen::<f64>() * 29.5, 1.0, 0.0, true).unwrap()
        })
        .collect();
    let model = ServerCostModel::standard(48_000.0);
    let schedule = PriceSchedule::new(0.001, 0.001).unwrap();
    let (profile, _) = ciq_outcome(&users, &schedule, &model).unwrap();
    for (pos, &orig) in profile.order.iter().enumerate() {
        let u = &users[orig];
        let price = schedule.price_at(profile.periods[pos]);
        let closed = u.supply(0.0, price).unwrap();
        assert!(
            (profile.amounts[pos] - closed).abs() < 1e-3,
            "user {orig}: {} vs closed form {closed}",
            profile.amounts[pos]
        );
    }
}

#[test]
fn best_response_chains_through_a_table() {
    // Two users, strong coupling: the leader's response must anticipate
    // the follower, matching a brute-force nested search.
    let leader = UserProfile::new(50.0, 1.0, 1.0, 2.0, true).unwrap();
    let follower = UserProfile::new(50.0, 1.5, 1.0, 1.0, true).unwrap();
    let model =
        ServerCostModel::new(std::f64::consts::E, 0.1, 0.01, 0.0, 1e-4, 50.0, 1.0, 100.0)
            .unwrap();
    let prices = [0.05, 0.06];
    let ordered = vec![(0usize, leader), (1usize, follower)];
    let (profile, tables) = backward_induction(&ordered, &prices, &model, 0.0, 1.0).unwrap();

    // Brute force the leader over a fine grid with the follower exact.
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 0..=5000 {
        let own = step as f64 * 0.01;
        let tail = terminal_response(&follower, own, prices[1], &model).unwrap();
        let redeemed = (100.0 - own - tail).max(0.0);
        let v = leader.privacy_utility(50.0 - own).unwrap() + own * prices[0]
            - leader.accuracy_sense * model.accuracy_degradation(redeemed).unwrap();
        if v > best.0 {
            best = (v, own);
        }
    }
    assert!(
        (profile.amounts[0] - best.1).abs() <= 0.5,
        "leader {} vs brute {}",
        profile.amounts[0],
        best.1
    );
    // The leader's table anticipates the follower's actual play.
    let anticipated = tables[1].response_at(profile.amounts[0]);
    assert!((anticipated - profile.amounts[1]).abs() <= 1.0);
    let _ = best_response(&follower, profile.amounts[0], prices[1], &model, 0.0, None).unwrap();
}
