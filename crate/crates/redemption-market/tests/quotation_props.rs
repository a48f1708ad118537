//! Protocol-level invariants of the quotation engine: ledger conservation,
//! monotone prices, demand caps, strategy invariance of the server's
//! position, greedy persistence, determinism, and the post-quotation
//! endgame cases.

use proptest::prelude::*;
use rand::Rng;
use redemption_market::{
    rng, run_quotation, MarketState, OversupplyStrategy, Phase, PriceSchedule, QuotationConfig,
    ServerCostModel, UserProfile,
};

fn config(strategy: OversupplyStrategy, seed: u64) -> QuotationConfig {
    QuotationConfig::new(PriceSchedule::new(0.001, 0.001).unwrap(), 1.0, strategy, seed).unwrap()
}

fn population(seed: u64, n: usize) -> (Vec<UserProfile>, ServerCostModel) {
    let mut stream = rng::stream(seed, 0, "quotation-prop");
    let users: Vec<UserProfile> = (0..n)
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
    let total: f64 = users.iter().map(|u| u.data).sum();
    (users, ServerCostModel::standard(total))
}

fn assert_ledger_conserved(state: &MarketState, users: &[UserProfile]) {
    let mut per_user = vec![0.0; users.len()];
    for t in &state.ledger {
        assert!(t.quantity > 0.0);
        per_user[t.user] += t.quantity;
    }
    for (i, (a, b)) in per_user.iter().zip(&state.sold).enumerate() {
        assert_eq!(a, b, "user {i} ledger sum != sold");
        assert!(*b <= users[i].data + 1e-9);
    }
    let total: f64 = state.sold.iter().sum();
    assert!((total - state.total_sold).abs() < 1e-9);
}

#[test]
fn ledger_conservation_and_monotone_prices() {
    for seed in 0..25u64 {
        let (users, model) = population(seed, 10);
        let state = run_quotation(&model, &users, &config(OversupplyStrategy::MinorFirst, seed))
            .unwrap();
        assert_ledger_conserved(&state, &users);
        assert_eq!(state.phase, Phase::Terminated);
        // Prices strictly increase across rounds in the ledger.
        for pair in state.ledger.windows(2) {
            assert!(pair[0].round <= pair[1].round);
            if pair[0].round < pair[1].round {
                assert!(pair[0].unit_price < pair[1].unit_price);
            } else {
                assert_eq!(pair[0].unit_price, pair[1].unit_price);
            }
        }
    }
}

#[test]
fn purchases_never_exceed_demand() {
    for seed in 0..25u64 {
        let (users, model) = population(seed, 10);
        let state =
            run_quotation(&model, &users, &config(OversupplyStrategy::Proportional, seed)).unwrap();
        let target = model.optimal_retention().target;
        let schedule = PriceSchedule::new(0.001, 0.001).unwrap();
        // Replay the rounds: the amount bought each round must fit the
        // demand at that round's opening state.
        let mut sold = 0.0;
        let mut round = 0;
        let mut bought_this_round = 0.0;
        for t in &state.ledger {
            if t.round != round {
                sold += bought_this_round;
                bought_this_round = 0.0;
                round = t.round;
            }
            bought_this_round += t.quantity;
            let eta = if sold >= target {
                0.0
            } else {
                model.demand(sold, schedule.price_at(t.round)).unwrap()
            };
            assert!(
                bought_this_round <= eta + 1.0 + 1e-9,
                "seed {seed}: round {round} bought {bought_this_round} vs demand {eta}"
            );
        }
    }
}

#[test]
fn server_position_is_strategy_invariant() {
    for seed in 0..40u64 {
        let (users, model) = population(seed, 10);
        let runs: Vec<MarketState> = OversupplyStrategy::ALL
            .iter()
            .map(|s| run_quotation(&model, &users, &config(*s, seed)).unwrap())
            .collect();
        let reference = &runs[0];
        let ref_payment: f64 =
            reference.ledger.iter().map(|t| t.quantity * t.unit_price).sum();
        for run in &runs[1..] {
            assert_eq!(run.total_sold, reference.total_sold, "seed {seed}: total differs");
            assert_eq!(run.round, reference.round, "seed {seed}: round count differs");
            let payment: f64 = run.ledger.iter().map(|t| t.quantity * t.unit_price).sum();
            assert!(
                (payment - ref_payment).abs() < 1e-6,
                "seed {seed}: payments differ across strategies"
            );
        }
    }
}

#[test]
fn greedy_persistence_contiguous_trading_blocks() {
    // Once a user starts selling it keeps selling every round until the
    // protocol ends, save for a final-round rationing cut.
    for seed in 0..25u64 {
        let (users, model) = population(seed, 10);
        let state =
            run_quotation(&model, &users, &config(OversupplyStrategy::MajorFirst, seed)).unwrap();
        let last_round = state.ledger.iter().map(|t| t.round).max().unwrap_or(0);
        for i in 0..users.len() {
            let rounds: Vec<usize> =
                state.ledger.iter().filter(|t| t.user == i).map(|t| t.round).collect();
            if rounds.is_empty() {
                continue;
            }
            for w in rounds.windows(2) {
                assert_eq!(w[1], w[0] + 1, "seed {seed}: user {i} paused between sales");
            }
            let end = *rounds.last().unwrap();
            assert!(
                end == last_round || end + 1 == last_round || end == state.round - 1,
                "seed {seed}: user {i} stopped at {end} before the end {last_round}"
            );
        }
    }
}

#[test]
fn identical_seeds_reproduce_bitwise_ledgers() {
    let (users, model) = population(7, 10);
    let a = run_quotation(&model, &users, &config(OversupplyStrategy::RandomOrder, 99)).unwrap();
    let b = run_quotation(&model, &users, &config(OversupplyStrategy::RandomOrder, 99)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.ledger_csv(), b.ledger_csv());
    // A different seed may reorder the random fills.
    let c = run_quotation(&model, &users, &config(OversupplyStrategy::RandomOrder, 100)).unwrap();
    assert_eq!(a.total_sold, c.total_sold);
}

#[test]
fn ledger_csv_schema() {
    let (users, model) = population(3, 5);
    let state =
        run_quotation(&model, &users, &config(OversupplyStrategy::MinorFirst, 3)).unwrap();
    let csv = state.ledger_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "round,user,quantity,unit_price");
    let first = lines.next().expect("at least one trade");
    assert_eq!(first.split(',').count(), 4);
    assert!(!csv.contains(' '));
    assert!(csv.ends_with('\n'));
}

/// Post-quotation endgame: a cheap single seller and a retention target
/// below the endowment let the probe buy out the remainder at the price
/// that makes parting with the last unit worthwhile.
#[test]
fn post_quotation_buys_out_a_cheap_seller() {
    // Interior retention target around 4800 of 6000.
    let model = ServerCostModel::new(
        std::f64::consts::E,
        0.1,
        1e-3,
        0.0,
        0.332,
        1000.0,
        1.0,
        6000.0,
    )
    .unwrap();
    let target = model.optimal_retention().target;
    assert!(target < 6000.0 && target > 4000.0, "target {target}");

    let users = vec![UserProfile::new(6000.0, 1.0, 1.0, 0.0, true).unwrap()];
    let state =
        run_quotation(&model, &users, &config(OversupplyStrategy::MinorFirst, 1)).unwrap();
    // Everything sold: the quotation reached the target, then the probe
    // bought the remainder in one stroke.
    assert_eq!(state.total_sold, 6000.0);
    let last = state.ledger.last().unwrap();
    // The last-unit valuation is the privacy value, so the closing trade
    // sits at the first quote at or above it.
    assert!(last.unit_price >= 1.0 && last.unit_price < 1.01, "price {}", last.unit_price);
    assert!(last.quantity >= 6000.0 - target - 1.0);
    assert_eq!(state.phase, Phase::Terminated);
}

#[test]
fn post_quotation_expires_at_the_cost_cap_for_pricey_sellers() {
    let model = ServerCostModel::new(
        std::f64::consts::E,
        0.1,
        1e-3,
        0.0,
        0.332,
        1000.0,
        1.0,
        6000.0,
    )
    .unwrap();
    // Same market, but the seller values privacy far above the cap.
    let users = vec![UserProfile::new(6000.0, 2000.0, 1.0, 0.0, true).unwrap()];
    let state =
        run_quotation(&model, &users, &config(OversupplyStrategy::MinorFirst, 1)).unwrap();
    assert!(state.total_sold < 6000.0);
    assert_eq!(state.phase, Phase::Terminated);
}

#[test]
fn post_quotation_skipped_when_keep_all() {
    // Default parameters: the retention target is the full endowment, so
    // the probe has nothing to do and the loop body never runs.
    let (users, model) = population(11, 10);
    assert_eq!(model.optimal_retention().target, model.total_data);
    let state =
        run_quotation(&model, &users, &config(OversupplyStrategy::MinorFirst, 11)).unwrap();
    assert!(state.total_sold < model.total_data);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_populations_conserve_and_terminate(seed in 0u64..10_000) {
        let (users, model) = population(seed, 8);
        let state = run_quotation(&model, &users, &config(OversupplyStrategy::Proportional, seed)).unwrap();
        assert_ledger_conserved(&state, &users);
        prop_assert!(state.total_sold <= model.optimal_retention().target + 1e-9);
    }
}
