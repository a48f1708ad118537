//! Welfare decomposition, fairness indices, ex-post regret, and the
//! free-rider diagnostic.
//!
//! Accounting convention, applied uniformly to every mechanism:
//!
//! - the server's payoff is the unlearning cost avoided relative to full
//!   redemption, minus what it paid out;
//! - a user's payoff is compensation received, plus the privacy utility of
//!   the data it holds redeemed at the end, plus the accuracy relief of
//!   whatever the population kept in place;
//! - welfare is their sum, in which transfers cancel by construction.
//!
//! Regret is an upper bound: the best single (round, amount) response
//! against realized prices and everyone else's realized trades, ignoring
//! rationing feasibility.

use serde::{Deserialize, Serialize};

use crate::benchmarks::planner_welfare;
use crate::equilibrium::terminal_response;
use crate::error::{Error, Result};
use crate::outcome::MechanismOutcome;
use crate::schedule::PriceSchedule;
use crate::user::UserProfile;
use crate::ServerCostModel;

/// Per-run metric bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub server_payoff: f64,
    pub users_payoff: f64,
    /// Users' aggregate gross utility: privacy kept plus accuracy relief,
    /// compensation excluded (`users_payoff` minus total payments).
    pub users_gross: f64,
    /// `server_payoff + users_payoff`, exactly.
    pub welfare: f64,
    /// The same welfare computed without any transfer terms; the identity
    /// check for the decomposition.
    pub transfer_free_welfare: f64,
    /// Jain index over per-user gross utilities; NaN when all are zero.
    /// Gross utility makes the index comparable across mechanisms whose
    /// transfer conventions differ.
    pub jain: f64,
    pub cv: f64,
    pub min_max_ratio: f64,
    /// Per-user ex-post regret upper bounds (zeros for one-shot mechanisms).
    pub regret: Vec<f64>,
    /// Mechanism sales over the server's demand at the opening quote.
    pub fulfillment: f64,
    pub rounds: usize,
}

/// Per-user gross utilities (privacy of redeemed data plus accuracy
/// relief, no transfers).
pub fn user_gross_utilities(
    outcome: &MechanismOutcome,
    users: &[UserProfile],
    model: &ServerCostModel,
) -> Result<Vec<f64>> {
    if outcome.retention.len() != users.len() || outcome.payments.len() != users.len() {
        return Err(Error::Mismatch(format!(
            "outcome covers {} users, population has {}",
            outcome.retention.len(),
            users.len()
        )));
    }
    let total_retained: f64 = outcome.retention.iter().sum();
    let redeemed_total = (model.total_data - total_retained).max(0.0);
    let relief_per_sense =
        model.accuracy_raw(model.total_data) - model.accuracy_raw(redeemed_total);
    Ok(users
        .iter()
        .zip(&outcome.retention)
        .map(|(u, r)| {
            let redeemed = (u.data - r).max(0.0);
            u.privacy_gain(redeemed) + u.accuracy_sense * relief_per_sense
        })
        .collect())
}

/// Per-user payoffs under the common accounting convention: gross utility
/// plus compensation received.
pub fn user_payoffs(
    outcome: &MechanismOutcome,
    users: &[UserProfile],
    model: &ServerCostModel,
) -> Result<Vec<f64>> {
    let gross = user_gross_utilities(outcome, users, model)?;
    Ok(gross.iter().zip(&outcome.payments).map(|(g, p)| g + p).collect())
}

/// Full metric bundle for one run. Regret starts at zero; fill it with
/// [`regret_upper_bounds`] for ledger-producing mechanisms.
pub fn run_metrics(
    outcome: &MechanismOutcome,
    users: &[UserProfile],
    model: &ServerCostModel,
    schedule: &PriceSchedule,
) -> Result<RunMetrics> {
    let endowment: f64 = users.iter().map(|u| u.data).sum();
    if (endowment - model.total_data).abs() > 1e-6 * model.total_data.max(1.0) {
        return Err(Error::Mismatch(format!(
            "population endowment {endowment} != model total {}",
            model.total_data
        )));
    }
    let gross = user_gross_utilities(outcome, users, model)?;
    let total_retained: f64 = outcome.retention.iter().sum();
    let payments = outcome.total_payments();
    let server_payoff =
        model.cost_raw(0.0) - model.cost_raw(total_retained.min(model.total_data)) - payments;
    let users_gross: f64 = gross.iter().sum();
    let users_payoff = users_gross + payments;
    let welfare = server_payoff + users_payoff;
    let transfer_free_welfare = planner_welfare(users, model, &outcome.retention);

    let (jain, cv, min_max_ratio) = match fairness(&gross) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => (f64::NAN, f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };

    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();
    let target = model.optimal_retention().target;
    let opening_demand = if base_retained >= target {
        0.0
    } else {
        model.demand_raw(base_retained, schedule.price_at(0), target)
    };
    let fulfillment = if opening_demand > 0.0 {
        outcome.mechanism_sold(users) / opening_demand
    } else {
        1.0
    };

    Ok(RunMetrics {
        server_payoff,
        users_payoff,
        users_gross,
        welfare,
        transfer_free_welfare,
        jain,
        cv,
        min_max_ratio,
        regret: vec![0.0; users.len()],
        fulfillment,
        rounds: outcome.rounds,
    })
}

/// Jain index, coefficient of variation, and min/max ratio of a
/// nonnegative payoff vector.
pub fn fairness(payoffs: &[f64]) -> Result<(f64, f64, f64)> {
    if payoffs.is_empty() {
        return Err(Error::domain("fairness needs at least one payoff".to_string()));
    }
    if payoffs.iter().any(|w| *w < 0.0) {
        return Err(Error::domain("fairness indices need nonnegative payoffs".to_string()));
    }
    let n = payoffs.len() as f64;
    let sum: f64 = payoffs.iter().sum();
    let sq: f64 = payoffs.iter().map(|w| w * w).sum();
    if sum == 0.0 {
        return Err(Error::Degenerate("all-zero payoffs: Jain index undefined".to_string()));
    }
    let jain = sum * sum / (n * sq);
    let mean = sum / n;
    let var = payoffs.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
    let cv = var.sqrt() / mean;
    let max = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = payoffs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((jain, cv, min / max))
}

/// Ex-post regret upper bound per user: the gap to the best single-round
/// response at the highest executed quote, holding everyone else's realized
/// trades fixed and ignoring rationing. Nonnegative up to solver tolerance.
pub fn regret_upper_bounds(
    outcome: &MechanismOutcome,
    users: &[UserProfile],
    model: &ServerCostModel,
    schedule: &PriceSchedule,
) -> Result<Vec<f64>> {
    if outcome.rounds == 0 {
        return Ok(vec![0.0; users.len()]);
    }
    // Any executed round was available; ascending prices make the last one
    // the only candidate for the counterfactual.
    let best_price = schedule.price_at(outcome.rounds - 1);
    let total_retained: f64 = outcome.retention.iter().sum();
    let payoffs = user_payoffs(outcome, users, model)?;

    users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if !u.informed {
                return Ok(0.0);
            }
            let others = total_retained - outcome.retention[i];
            let best_amount = terminal_response(u, others, best_price, model)?;
            let redeemed = (u.data - best_amount).max(0.0);
            let redeemed_total = (model.total_data - others - best_amount).max(0.0);
            let best = best_amount * best_price
                + u.privacy_gain(redeemed)
                + u.accuracy_sense
                    * (model.accuracy_raw(model.total_data) - model.accuracy_raw(redeemed_total));
            Ok(best - payoffs[i])
        })
        .collect()
}

/// Mean supply fraction of informed users, binned by accuracy sensitivity.
/// Quantile bins with ties broken by index; identical sensitivities fall
/// back to one population-wide mean repeated per bin.
pub fn freerider_bins(
    users: &[UserProfile],
    outcome: &MechanismOutcome,
    n_bins: usize,
) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::domain("need at least one bin".to_string()));
    }
    let mut informed: Vec<usize> = users
        .iter()
        .enumerate()
        .filter(|(_, u)| u.informed && u.data > 0.0)
        .map(|(i, _)| i)
        .collect();
    if informed.len() < n_bins {
        return Err(Error::domain(format!(
            "{} informed users cannot fill {n_bins} bins",
            informed.len()
        )));
    }
    let fraction = |i: usize| outcome.retention[i] / users[i].data;

    let lo = informed.iter().map(|&i| users[i].accuracy_sense).fold(f64::INFINITY, f64::min);
    let hi = informed.iter().map(|&i| users[i].accuracy_sense).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Degenerate quantiles: every bin reports the common mean.
        let mean = informed.iter().map(|&i| fraction(i)).sum::<f64>() / informed.len() as f64;
        return Ok(vec![mean; n_bins]);
    }

    informed.sort_by(|&a, &b| {
        users[a]
            .accuracy_sense
            .partial_cmp(&users[b].accuracy_sense)
            .unwrap()
            .then(a.cmp(&b))
    });
    let n = informed.len();
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let start = b * n / n_bins;
        let end = ((b + 1) * n / n_bins).max(start + 1);
        let chunk = &informed[start..end.min(n)];
        bins.push(chunk.iter().map(|&i| fraction(i)).sum::<f64>() / chunk.len() as f64);
    }
    Ok(bins)
}
