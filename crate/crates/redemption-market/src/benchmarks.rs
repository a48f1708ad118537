//! Comparison mechanisms: personalized pricing, its noise-distorted
//! variant, the best single uniform price, and the boundary baselines.
//!
//! Personalized pricing is the welfare upper bound. Transfers cancel in
//! welfare, so it maximizes cost saving plus aggregate privacy (plus the
//! accuracy relief of keeping data in place) directly: an outer
//! golden-section over the total amount sold, an inner water-filling that
//! equalizes marginal privacy across sellers, and an explicit check of the
//! everything-sold corner where the retraining bill disappears entirely.
//! Supporting prices are set so that each user's own first-order condition
//! holds exactly at the assigned allocation.
//!
//! Uninformed users never exercise their rights: their data stays on the
//! server with no payment, under every mechanism here.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::terminal_response;
use crate::error::{Error, Result};
use crate::outcome::{Mechanism, MechanismOutcome};
use crate::rng;
use crate::user::UserProfile;
use crate::ServerCostModel;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Multiplicative estimation noise on privacy and accuracy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of the relative error (>= 0).
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::domain(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseSpec { sigma, seed })
    }
}

/// Welfare value the personalized-pricing solver maximizes: cost saving
/// relative to full unlearning, plus privacy of redeemed data, plus the
/// accuracy relief of total retention. Transfers are absent by design.
pub fn planner_welfare(
    users: &[UserProfile],
    model: &ServerCostModel,
    retention: &[f64],
) -> f64 {
    let total_retained: f64 = retention.iter().sum();
    let redeemed_total = (model.total_data - total_retained).max(0.0);
    let saving = model.cost_raw(0.0) - model.cost_raw(total_retained.min(model.total_data));
    let privacy: f64 = users
        .iter()
        .zip(retention)
        .map(|(u, r)| u.privacy_gain((u.data - r).max(0.0)))
        .sum();
    let relief: f64 = users
        .iter()
        .map(|u| {
            u.accuracy_sense
                * (model.accuracy_raw(model.total_data) - model.accuracy_raw(redeemed_total))
        })
        .sum();
    saving + privacy + relief
}

/// Water-filling: per-user redeemed amounts with a common marginal privacy
/// value `mu`, caps at `[0, data]`.
fn redeemed_at_marginal(users: &[UserProfile], informed: &[usize], mu: f64) -> Vec<f64> {
    informed
        .iter()
        .map(|&i| {
            let u = &users[i];
            if u.privacy_value == 0.0 {
                return 0.0;
            }
            if u.privacy_elasticity == 0.0 {
                // Linear privacy: keep everything redeemed iff it beats mu.
                return if u.privacy_value >= mu { u.data } else { 0.0 };
            }
            if mu <= 0.0 {
                return u.data;
            }
            ((u.privacy_value / mu).powf(1.0 / u.privacy_elasticity) - 1.0).clamp(0.0, u.data)
        })
        .collect()
}

/// Allocate `target` units of total sale across the informed users so that
/// marginal privacy is equalized (KKT of the welfare problem at fixed
/// total). Returns per-informed sales.
fn allocate_sales(users: &[UserProfile], informed: &[usize], target: f64) -> Vec<f64> {
    let endow: f64 = informed.iter().map(|&i| users[i].data).sum();
    if informed.is_empty() || target <= 0.0 {
        return informed
            .iter()
            .map(|&i| if users[i].privacy_value == 0.0 { users[i].data } else { 0.0 })
            .collect();
    }
    if target >= endow {
        return informed.iter().map(|&i| users[i].data).collect();
    }
    let mut lo = 0.0;
    let mut hi = informed.iter().map(|&i| users[i].privacy_value).fold(0.0f64, f64::max) + 1.0;
    for _ in 0..128 {
        let mu = 0.5 * (lo + hi);
        let redeemed = redeemed_at_marginal(users, informed, mu);
        let sale: f64 = informed
            .iter()
            .zip(&redeemed)
            .map(|(&i, x)| users[i].data - x)
            .sum();
        if sale < target {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let mu = 0.5 * (lo + hi);
    redeemed_at_marginal(users, informed, mu)
        .iter()
        .zip(informed)
        .map(|(x, &i)| users[i].data - x)
        .collect()
}

/// Personalized pricing: welfare-optimal retention with supporting prices.
pub fn opp_solve(users: &[UserProfile], model: &ServerCostModel) -> Result<MechanismOutcome> {
    let (retention, payments) = opp_allocate(users, model)?;
    Ok(MechanismOutcome {
        mechanism: Mechanism::Opp,
        retention,
        payments,
        rounds: 0,
        terminal_price: None,
        note: Some("water-filling allocation with supporting prices".to_string()),
    })
}

/// Shared solver core: returns per-user retention and payments.
fn opp_allocate(users: &[UserProfile], model: &ServerCostModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let endowment: f64 = users.iter().map(|u| u.data).sum();
    if (endowment - model.total_data).abs() > 1e-6 * model.total_data.max(1.0) {
        return Err(Error::Mismatch(format!(
            "population endowment {endowment} != model total {}",
            model.total_data
        )));
    }
    let informed: Vec<usize> =
        users.iter().enumerate().filter(|(_, u)| u.informed).map(|(i, _)| i).collect();

    let build = |sales: &[f64]| -> Vec<f64> {
        let mut retention: Vec<f64> =
            users.iter().map(|u| if u.informed { 0.0 } else { u.data }).collect();
        for (&i, s) in informed.iter().zip(sales) {
            retention[i] = *s;
        }
        retention
    };

    let value_at = |target: f64| -> (f64, Vec<f64>) {
        let sales = allocate_sales(users, &informed, target);
        let retention = build(&sales);
        (planner_welfare(users, model, &retention), retention)
    };

    // Outer search over the total sold by informed users.
    let cap: f64 = informed.iter().map(|&i| users[i].data).sum();
    let (mut lo, mut hi) = (0.0, cap);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = value_at(x1).0;
    let mut f2 = value_at(x2).0;
    while hi - lo > 1e-6 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = value_at(x2).0;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = value_at(x1).0;
        }
    }
    let (mut best_value, mut retention) = value_at(0.5 * (lo + hi));
    // Corner candidates: selling nothing, and the full-retention jump.
    for corner in [0.0, cap] {
        let (v, r) = value_at(corner);
        if v > best_value {
            best_value = v;
            retention = r;
        }
    }
    let _ = best_value;

    // Supporting prices: each user's own first-order condition holds at the
    // assigned point, so best-responding to these prices reproduces it.
    let total_retained: f64 = retention.iter().sum();
    let redeemed_total = (model.total_data - total_retained).max(0.0);
    let externality = model.accuracy_marginal(redeemed_total);
    let payments: Vec<f64> = users
        .iter()
        .zip(&retention)
        .map(|(u, r)| {
            if !u.informed || *r <= 0.0 {
                return 0.0;
            }
            let price =
                (u.privacy_marginal(u.data - r) - u.accuracy_sense * externality).max(0.0);
            price * r
        })
        .collect();
    Ok((retention, payments))
}

/// Personalized pricing computed from noisy parameter estimates; users then
/// respond to the distorted prices with their true parameters.
pub fn opp_noisy(
    users: &[UserProfile],
    model: &ServerCostModel,
    noise: &NoiseSpec,
) -> Result<MechanismOutcome> {
    if noise.sigma == 0.0 {
        // Estimates equal truth exactly; the response to supporting prices
        // reproduces the allocation by construction.
        let exact = opp_solve(users, model)?;
        return Ok(MechanismOutcome {
            mechanism: Mechanism::OppNoisy,
            note: Some("sigma=0: estimates exact".to_string()),
            ..exact
        });
    }

    let mut stream = rng::stream(noise.seed, 0, "estimate-noise");
    let mut gauss = || -> f64 {
        let u1: f64 = stream.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = stream.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let estimated: Vec<UserProfile> = users
        .iter()
        .map(|u| {
            let mut e = *u;
            e.privacy_value = (u.privacy_value * (1.0 + noise.sigma * gauss())).max(0.0);
            e.accuracy_sense = (u.accuracy_sense * (1.0 + noise.sigma * gauss())).max(0.0);
            e
        })
        .collect();

    let (est_retention, _) = opp_allocate(&estimated, model)?;
    let total_est: f64 = est_retention.iter().sum();
    let externality = model.accuracy_marginal((model.total_data - total_est).max(0.0));
    let prices: Vec<f64> = estimated
        .iter()
        .zip(&est_retention)
        .map(|(e, r)| {
            if !e.informed {
                return 0.0;
            }
            (e.privacy_marginal((e.data - r).max(0.0)) - e.accuracy_sense * externality).max(0.0)
        })
        .collect();

    // True-parameter simultaneous response to the distorted price vector,
    // seeded at the server's intended allocation.
    let mut retention: Vec<f64> = users
        .iter()
        .enumerate()
        .map(|(i, u)| if u.informed { est_retention[i] } else { u.data })
        .collect();
    let mut converged = false;
    for _ in 0..500 {
        let mut shift = 0.0f64;
        for (i, u) in users.iter().enumerate() {
            if !u.informed {
                continue;
            }
            let others: f64 =
                retention.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).sum();
            let fresh = terminal_response(u, others, prices[i], model)?;
            shift += (fresh - retention[i]).abs();
            retention[i] = fresh;
        }
        if shift < 1e-6 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(
            "noisy-price response fixed point still moving after 500 sweeps".to_string(),
        ));
    }

    let payments: Vec<f64> =
        retention.iter().zip(&prices).map(|(r, p)| r * p).collect();
    Ok(MechanismOutcome {
        mechanism: Mechanism::OppNoisy,
        retention: users
            .iter()
            .enumerate()
            .map(|(i, u)| if u.informed { retention[i] } else { u.data })
            .collect(),
        payments: users
            .iter()
            .enumerate()
            .map(|(i, u)| if u.informed { payments[i] } else { 0.0 })
            .collect(),
        rounds: 0,
        terminal_price: None,
        note: Some(format!("sigma={}", noise.sigma)),
    })
}

/// Best single uniform price over a finite grid; supplies are the
/// accuracy-aware simultaneous responses, purchases rationed
/// proportionally, and the server keeps the payoff-maximizing grid point
/// (ties go to the smallest price).
pub fn bsp_solve(
    users: &[UserProfile],
    model: &ServerCostModel,
    price_grid: &[f64],
) -> Result<MechanismOutcome> {
    if price_grid.is_empty() {
        return Err(Error::domain("price grid must be nonempty".to_string()));
    }
    let mut grid: Vec<f64> = price_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();
    let target = model.optimal_retention().target;

    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &price in &grid {
        let sales = crate::equilibrium::simultaneous_response(users, price, model, 1e-6)?;
        let offered: f64 = users
            .iter()
            .zip(&sales)
            .filter(|(u, _)| u.informed)
            .map(|(_, s)| *s)
            .sum();
        let eta = if base_retained >= target {
            0.0
        } else {
            model.demand_raw(base_retained, price, target)
        };
        let bought = offered.min(eta);
        let scale = if offered > 0.0 { bought / offered } else { 0.0 };
        let retention: Vec<f64> = users
            .iter()
            .zip(&sales)
            .map(|(u, s)| if u.informed { s * scale } else { u.data })
            .collect();
        let total: f64 = retention.iter().sum();
        let payoff = model.cost_raw(0.0) - model.cost_raw(total.min(model.total_data))
            - price * bought;
        let better = match &best {
            None => true,
            Some((b, _, _)) => payoff > *b,
        };
        if better {
            best = Some((payoff, price, retention));
        }
    }
    let (_, price, retention) = best.unwrap();
    let payments: Vec<f64> = users
        .iter()
        .zip(&retention)
        .map(|(u, r)| if u.informed { r * price } else { 0.0 })
        .collect();
    Ok(MechanismOutcome {
        mechanism: Mechanism::Bsp,
        retention,
        payments,
        rounds: 0,
        terminal_price: Some(price),
        note: Some(format!("uniform price {price}, proportional rationing")),
    })
}

/// Deterministic price grid for the single-price benchmark: the quotation
/// schedule's own quotes up to the price at which demand from the opening
/// state dies, thinned to at most 400 points.
pub fn default_price_grid(
    users: &[UserProfile],
    model: &ServerCostModel,
    schedule: &crate::PriceSchedule,
) -> Vec<f64> {
    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();
    let ceiling = model.accuracy_weight
        * model.accuracy_marginal((model.total_data - base_retained).max(0.0))
        - model.time_weight * model.retrain_time;
    let rounds = schedule.first_round_above(ceiling.max(schedule.start)) + 1;
    let stride = (rounds / 400).max(1);
    (0..rounds).step_by(stride).map(|t| schedule.price_at(t)).collect()
}

/// Boundary baselines: no redemption, full redemption by the informed, and
/// full retention with full privacy compensation for the informed.
pub fn baseline(kind: Mechanism, users: &[UserProfile]) -> Result<MechanismOutcome> {
    let (retention, payments): (Vec<f64>, Vec<f64>) = match kind {
        Mechanism::Dnr => {
            (users.iter().map(|u| u.data).collect(), vec![0.0; users.len()])
        }
        Mechanism::Gdpr => (
            users.iter().map(|u| if u.informed { 0.0 } else { u.data }).collect(),
            vec![0.0; users.len()],
        ),
        Mechanism::Full => (
            users.iter().map(|u| u.data).collect(),
            users
                .iter()
                .map(|u| if u.informed { u.privacy_gain(u.data) } else { 0.0 })
                .collect(),
        ),
        other => {
            return Err(Error::domain(format!("{other} is not a boundary baseline")));
        }
    };
    Ok(MechanismOutcome {
        mechanism: kind,
        retention,
        payments,
        rounds: 0,
        terminal_price: None,
        note: None,
    })
}
