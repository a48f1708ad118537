//! The iterative price-discovery protocol.
//!
//! Each round the server quotes a unit price, every informed user responds
//! with the supply that maximizes its own payoff at that price, and the
//! server buys up to its remaining demand. The price then rises by a fixed
//! step and the loop repeats until demand is exhausted. A post-quotation
//! phase afterwards probes whether buying *all* remaining data (skipping
//! the retraining run entirely) beats paying the cost jump; it announces
//! prices without purchasing until either every user would part with their
//! full remainder or the price cap is breached.
//!
//! Trades are quantized to `unit` and the whole run is a pure function of
//! `(model, users, config)` including the oversupply tie-breaking, which
//! draws from a stream keyed by `(seed, round)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::{Mechanism, MechanismOutcome};
use crate::rng;
use crate::schedule::PriceSchedule;
use crate::user::UserProfile;
use crate::ServerCostModel;

/// How the server splits its demand when users collectively offer more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OversupplyStrategy {
    /// Fill the biggest offers first.
    MajorFirst,
    /// Fill the smallest offers first.
    MinorFirst,
    /// Split demand proportionally to offers (largest-remainder rounding).
    Proportional,
    /// Fill offers in a uniformly random order.
    RandomOrder,
}

impl OversupplyStrategy {
    pub const ALL: [OversupplyStrategy; 4] = [
        OversupplyStrategy::MajorFirst,
        OversupplyStrategy::MinorFirst,
        OversupplyStrategy::Proportional,
        OversupplyStrategy::RandomOrder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OversupplyStrategy::MajorFirst => "major",
            OversupplyStrategy::MinorFirst => "minor",
            OversupplyStrategy::Proportional => "prop",
            OversupplyStrategy::RandomOrder => "random",
        }
    }
}

impl std::str::FromStr for OversupplyStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "major" | "major-first" => Ok(OversupplyStrategy::MajorFirst),
            "minor" | "minor-first" => Ok(OversupplyStrategy::MinorFirst),
            "prop" | "proportional" => Ok(OversupplyStrategy::Proportional),
            "random" | "random-order" => Ok(OversupplyStrategy::RandomOrder),
            other => Err(Error::Config(format!("unknown oversupply strategy '{other}'"))),
        }
    }
}

/// Protocol inputs beyond the economic primitives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotationConfig {
    pub schedule: PriceSchedule,
    /// Trade quantum: every executed quantity is a multiple of this.
    pub unit: f64,
    pub strategy: OversupplyStrategy,
    /// Seed for the random-order strategy; everything else is deterministic.
    pub seed: u64,
}

impl QuotationConfig {
    pub fn new(schedule: PriceSchedule, unit: f64, strategy: OversupplyStrategy, seed: u64) -> Result<Self> {
        if !(unit > 0.0) || !unit.is_finite() {
            return Err(Error::domain(format!("trade unit must be > 0, got {unit}")));
        }
        Ok(QuotationConfig { schedule, unit, strategy, seed })
    }
}

/// One executed purchase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub round: usize,
    pub user: usize,
    pub quantity: f64,
    pub unit_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Quotation,
    PostQuotation,
    Terminated,
}

/// Full protocol state; after `run_quotation` returns it is terminal and
/// the ledger is the ground truth for every downstream metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Price increments executed so far (= index of the next round).
    pub round: usize,
    /// Current quote.
    pub price: f64,
    /// Per-user cumulative amounts sold through the mechanism.
    pub sold: Vec<f64>,
    pub total_sold: f64,
    /// Data retained outside the mechanism: endowments of uninformed users.
    pub base_retained: f64,
    /// Server demand at the opening quote, before any trade.
    pub initial_demand: f64,
    /// Price of the last round that actually executed, if any.
    pub last_executed_price: Option<f64>,
    pub phase: Phase,
    pub ledger: Vec<Trade>,
}

impl MarketState {
    /// On-server total: mechanism sales plus never-redeemed endowments.
    pub fn retained(&self) -> f64 {
        self.base_retained + self.total_sold
    }

    /// Fraction of the opening demand the protocol ended up filling.
    pub fn fulfillment(&self) -> f64 {
        if self.initial_demand > 0.0 {
            self.total_sold / self.initial_demand
        } else {
            1.0
        }
    }

    /// CSV ledger: `round,user,quantity,unit_price`, decimal point, LF.
    pub fn ledger_csv(&self) -> String {
        let mut out = String::from("round,user,quantity,unit_price\n");
        for t in &self.ledger {
            out.push_str(&format!("{},{},{},{}\n", t.round, t.user, t.quantity, t.unit_price));
        }
        out
    }

    /// Repackage as the mechanism-neutral outcome shape.
    pub fn to_outcome(&self, users: &[UserProfile]) -> MechanismOutcome {
        let retention = users
            .iter()
            .enumerate()
            .map(|(i, u)| if u.informed { self.sold[i] } else { u.data })
            .collect();
        let mut payments = vec![0.0; users.len()];
        for t in &self.ledger {
            payments[t.user] += t.quantity * t.unit_price;
        }
        MechanismOutcome {
            mechanism: Mechanism::Iiq,
            retention,
            payments,
            rounds: self.round,
            terminal_price: self.last_executed_price,
            note: None,
        }
    }
}

fn floor_to_unit(v: f64, unit: f64) -> f64 {
    (v / unit).floor().max(0.0) * unit
}

/// Run the full protocol (quotation phase plus post-quotation probe).
pub fn run_quotation(
    model: &ServerCostModel,
    users: &[UserProfile],
    config: &QuotationConfig,
) -> Result<MarketState> {
    let endowment: f64 = users.iter().map(|u| u.data).sum();
    if (endowment - model.total_data).abs() > 1e-6 * model.total_data.max(1.0) {
        return Err(Error::Mismatch(format!(
            "population endowment {endowment} != model total {}",
            model.total_data
        )));
    }
    let target = model.optimal_retention().target;
    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();

    let mut state = MarketState {
        round: 0,
        price: config.schedule.price_at(0),
        sold: vec![0.0; users.len()],
        total_sold: 0.0,
        base_retained,
        initial_demand: 0.0,
        last_executed_price: None,
        phase: Phase::Quotation,
        ledger: Vec::new(),
    };

    let demand_at = |retained: f64, price: f64| -> f64 {
        if retained >= target {
            0.0
        } else {
            model.demand_raw(retained, price, target)
        }
    };

    // No demand at any price above the marginal saving from empty hands;
    // the protocol must die before that quote.
    let price_ceiling = model.accuracy_weight
        * model.accuracy_marginal(model.total_data - base_retained.min(model.total_data))
        - model.time_weight * model.retrain_time;
    let round_cap = config.schedule.first_round_above(price_ceiling.max(0.0)) + 8;

    state.initial_demand = demand_at(state.retained(), state.price);
    let mut eta = state.initial_demand;

    while eta > 0.0 {
        if state.round > round_cap {
            return Err(Error::NonConvergence(format!(
                "quotation still live after {} rounds (cap {round_cap})",
                state.round
            )));
        }
        let eta_units = floor_to_unit(eta, config.unit);
        let supplies: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                if u.informed {
                    floor_to_unit(u.supply_raw(state.sold[i], state.price), config.unit)
                } else {
                    0.0
                }
            })
            .collect();
        let offered: f64 = supplies.iter().sum();

        let purchases = if offered <= eta_units {
            supplies
        } else {
            let mut round_rng = rng::stream(config.seed, state.round as u64, "oversupply");
            allocate_oversupply(&supplies, eta_units, config.strategy, config.unit, &mut round_rng)?
        };

        let mut executed = false;
        for (i, q) in purchases.iter().enumerate() {
            if *q > 0.0 {
                state.sold[i] += q;
                state.total_sold += q;
                state.ledger.push(Trade {
                    round: state.round,
                    user: i,
                    quantity: *q,
                    unit_price: state.price,
                });
                executed = true;
            }
        }
        if executed {
            state.last_executed_price = Some(state.price);
        }

        state.round += 1;
        state.price = config.schedule.price_at(state.round);
        eta = demand_at(state.retained(), state.price);
    }

    post_quotation(&mut state, model, users, config)?;
    state.phase = Phase::Terminated;
    Ok(state)
}

/// Post-quotation probe for the full-retention cost jump. Runs only when
/// the retention target stops short of the whole endowment; announces
/// prices and buys all remaining data in one stroke if every informed user
/// would part with its full remainder at the quote.
fn post_quotation(
    state: &mut MarketState,
    model: &ServerCostModel,
    users: &[UserProfile],
    config: &QuotationConfig,
) -> Result<()> {
    let target = model.optimal_retention().target;
    let full = model.total_data;
    if target >= full || state.retained() >= full {
        return Ok(());
    }
    state.phase = Phase::PostQuotation;
    let cost_full = model.cost_raw(full);
    let round_cap = state.round + 4_000_000;

    loop {
        let retained = state.retained();
        let remaining = full - retained;
        if remaining <= 0.0 {
            break;
        }
        // Buying everything must beat the saved jump; otherwise stop.
        if state.price * remaining > model.cost_raw(retained) - cost_full {
            break;
        }
        if state.round > round_cap {
            return Err(Error::NonConvergence("post-quotation probe ran away".to_string()));
        }

        // Literal all-sold test: each user's optimal supply at the quote
        // must equal its full remainder. With concave privacy this needs a
        // quote at or above the user's last-unit valuation, so the probe
        // usually expires at the cost cap instead.
        let all_in = users.iter().enumerate().all(|(i, u)| {
            if !u.informed {
                return true;
            }
            let rem = u.data - state.sold[i];
            if rem <= 0.0 {
                return true;
            }
            let offer = floor_to_unit(u.supply_raw(state.sold[i], state.price), config.unit);
            offer >= rem
        });

        if all_in {
            for (i, u) in users.iter().enumerate() {
                if !u.informed {
                    continue;
                }
                let rem = u.data - state.sold[i];
                if rem > 0.0 {
                    state.sold[i] = u.data;
                    state.total_sold += rem;
                    state.ledger.push(Trade {
                        round: state.round,
                        user: i,
                        quantity: rem,
                        unit_price: state.price,
                    });
                }
            }
            state.last_executed_price = Some(state.price);
            state.round += 1;
            state.price = config.schedule.price_at(state.round);
            break;
        }

        state.round += 1;
        state.price = config.schedule.price_at(state.round);
    }
    Ok(())
}

/// Split `demand` (a multiple of `unit`, strictly below the total offer)
/// across the offers according to the strategy. Ties in sorted orders break
/// by user index.
pub fn allocate_oversupply(
    supplies: &[f64],
    demand: f64,
    strategy: OversupplyStrategy,
    unit: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let offered: f64 = supplies.iter().sum();
    if !(demand >= 0.0) || offered <= demand {
        return Err(Error::domain(format!(
            "oversupply allocation needs total offer {offered} > demand {demand} >= 0"
        )));
    }
    let n = supplies.len();
    let mut alloc = vec![0.0; n];

    let greedy = |order: &[usize], alloc: &mut [f64]| {
        let mut left = demand;
        for &i in order {
            if left <= 0.0 {
                break;
            }
            let take = supplies[i].min(left);
            alloc[i] = take;
            left -= take;
        }
    };

    match strategy {
        OversupplyStrategy::MajorFirst => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                supplies[b].partial_cmp(&supplies[a]).unwrap().then(a.cmp(&b))
            });
            greedy(&order, &mut alloc);
        }
        OversupplyStrategy::MinorFirst => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                supplies[a].partial_cmp(&supplies[b]).unwrap().then(a.cmp(&b))
            });
            greedy(&order, &mut alloc);
        }
        OversupplyStrategy::RandomOrder => {
            let mut order: Vec<usize> = (0..n).collect();
            // Fisher-Yates, hand-rolled so the draw sequence stays stable.
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            greedy(&order, &mut alloc);
        }
        OversupplyStrategy::Proportional => {
            // Work in unit counts; inputs are unit multiples by contract.
            let demand_units = (demand / unit).round() as u64;
            let supply_units: Vec<u64> =
                supplies.iter().map(|q| (q / unit).round() as u64).collect();
            let mut floors: Vec<u64> = Vec::with_capacity(n);
            let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(n);
            for (i, &qu) in supply_units.iter().enumerate() {
                let raw = demand_units as f64 * qu as f64 / (offered / unit);
                let fl = raw.floor().min(qu as f64) as u64;
                floors.push(fl);
                fracs.push((raw - fl as f64, i));
            }
            let mut residue = demand_units - floors.iter().sum::<u64>();
            fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut cursor = 0;
            while residue > 0 {
                let (_, i) = fracs[cursor % n];
                if floors[i] < supply_units[i] {
                    floors[i] += 1;
                    residue -= 1;
                }
                cursor += 1;
            }
            for (i, fl) in floors.into_iter().enumerate() {
                alloc[i] = fl as f64 * unit;
            }
        }
    }
    Ok(alloc)
}
