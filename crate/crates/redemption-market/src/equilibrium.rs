//! Strategic benchmark: the sequential game under complete information.
//!
//! When every user can observe all preceding transactions, single-period
//! selling is dominant under ascending prices, so a user's strategy
//! collapses to a selling round and an amount. The subgame-perfect outcome
//! is computed by backward induction: for each user we tabulate the optimal
//! amount against the cumulative supply of its predecessors, anticipating
//! the aggregate response of everyone behind it, then roll the chain
//! forward from zero. Strict concavity of the stage payoff (concave privacy
//! plus convex accuracy loss) makes every best response unique.
//!
//! The selling order itself is endogenous and no closed construction pins
//! it down, so `ciq_outcome` uses a declared approximation: each user is
//! assigned the earliest round at which its marginal payoff at zero sales
//! turns positive, and the (order, periods) pair is iterated to a fixed
//! point. With no accuracy coupling this reduces exactly to the closed-form
//! supplies at the first profitable quote.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::{Mechanism, MechanismOutcome};
use crate::schedule::PriceSchedule;
use crate::user::UserProfile;
use crate::ServerCostModel;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Amount tolerance for one-dimensional searches (data units).
const AMOUNT_TOL: f64 = 1e-6;

/// Derivative of a user's stage payoff with respect to its own total sale
/// `own`, given `others` units already retained by everyone else (mechanism
/// sales plus never-redeemed endowments) and unit price `price`.
pub fn marginal_payoff(
    user: &UserProfile,
    own: f64,
    others: f64,
    price: f64,
    model: &ServerCostModel,
) -> f64 {
    let redeemed_total = (model.total_data - own - others).max(0.0);
    -user.privacy_marginal(user.data - own)
        + user.accuracy_sense * model.accuracy_marginal(redeemed_total)
        + price
}

fn check_concavity(user: &UserProfile) -> Result<()> {
    if !(0.0..=1.0).contains(&user.privacy_elasticity) || user.accuracy_sense < 0.0 {
        return Err(Error::domain(
            "stage payoff concavity needs elasticity in [0,1] and nonnegative accuracy sense"
                .to_string(),
        ));
    }
    Ok(())
}

/// Unique root of the first-order condition on `[0, data]`, by bisection.
/// This is the exact best response for a user nobody follows.
pub fn terminal_response(
    user: &UserProfile,
    others: f64,
    price: f64,
    model: &ServerCostModel,
) -> Result<f64> {
    check_concavity(user)?;
    if user.data == 0.0 {
        return Ok(0.0);
    }
    let residual_tol = 1e-9 * price.max(1.0);
    let mut lo = 0.0;
    let mut hi = user.data;
    if marginal_payoff(user, lo, others, price, model) <= 0.0 {
        return Ok(0.0);
    }
    if marginal_payoff(user, hi, others, price, model) >= 0.0 {
        return Ok(user.data);
    }
    while hi - lo > AMOUNT_TOL {
        let mid = 0.5 * (lo + hi);
        let m = marginal_payoff(user, mid, others, price, model);
        if m.abs() < residual_tol {
            return Ok(mid);
        }
        if m > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tabulated best response of one user against predecessor supply, plus the
/// induced total of this user and everyone after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    /// Original index of the user this table belongs to.
    pub user: usize,
    /// Predecessor-supply grid, strictly increasing from 0.
    pub grid: Vec<f64>,
    /// Optimal own amount at each grid point.
    pub response: Vec<f64>,
    /// Own amount plus the aggregate of all subsequent users.
    pub downstream_total: Vec<f64>,
}

impl ResponseTable {
    fn interp(values: &[f64], grid: &[f64], s: f64) -> f64 {
        debug_assert!(!grid.is_empty());
        if grid.len() == 1 || s <= grid[0] {
            return values[0];
        }
        let last = grid.len() - 1;
        if s >= grid[last] {
            return values[last];
        }
        let idx = match grid.binary_search_by(|g| g.partial_cmp(&s).unwrap()) {
            Ok(i) => return values[i],
            Err(i) => i,
        };
        let (g0, g1) = (grid[idx - 1], grid[idx]);
        let w = (s - g0) / (g1 - g0);
        values[idx - 1] * (1.0 - w) + values[idx] * w
    }

    /// Interpolated own response at predecessor supply `s`.
    pub fn response_at(&self, s: f64) -> f64 {
        Self::interp(&self.response, &self.grid, s)
    }

    /// Interpolated total supplied by this user and everyone after it.
    pub fn total_at(&self, s: f64) -> f64 {
        Self::interp(&self.downstream_total, &self.grid, s)
    }
}

/// Maximize over `[lo, hi]`: coarse scan to bracket the global maximum,
/// then golden-section inside the winning bracket. The scan guards against
/// the mild multimodality the interpolated follower response can introduce.
fn scan_maximize(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const SCAN: usize = 32;
    if hi - lo <= AMOUNT_TOL {
        return 0.5 * (lo + hi);
    }
    let step = (hi - lo) / SCAN as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=SCAN {
        let v = f(lo + i as f64 * step);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo + best_i.saturating_sub(1) as f64 * step;
    let mut b = (lo + (best_i + 1) as f64 * step).min(hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > AMOUNT_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    // Corners stay explicit candidates.
    [lo, mid, hi]
        .into_iter()
        .max_by(|p, q| f(*p).partial_cmp(&f(*q)).unwrap())
        .unwrap()
}

/// Best response of a user who anticipates the downstream aggregate given
/// by `downstream` (the next user's table), or plays last when `None`.
pub fn best_response(
    user: &UserProfile,
    predecessors: f64,
    price: f64,
    model: &ServerCostModel,
    base_retained: f64,
    downstream: Option<&ResponseTable>,
) -> Result<f64> {
    let Some(next) = downstream else {
        return terminal_response(user, predecessors + base_retained, price, model);
    };
    check_concavity(user)?;
    if user.data == 0.0 {
        return Ok(0.0);
    }
    let objective = |own: f64| -> f64 {
        let followers = next.total_at(predecessors + own);
        let redeemed =
            (model.total_data - base_retained - predecessors - own - followers).max(0.0);
        user.privacy_raw(user.data - own) + own * price
            - user.accuracy_sense * model.accuracy_raw(redeemed)
    };
    Ok(scan_maximize(&objective, 0.0, user.data))
}

/// The subgame-perfect outcome of one ordered market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpneProfile {
    /// Original user indices in selling order.
    pub order: Vec<usize>,
    /// Selling round per position.
    pub periods: Vec<usize>,
    /// Amount sold per position.
    pub amounts: Vec<f64>,
    /// Cumulative supply after each position.
    pub cumulative: Vec<f64>,
    pub terminal_round: usize,
}

impl SpneProfile {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Backward induction over an explicitly ordered set of sellers with fixed
/// per-position prices. Returns the rolled-forward profile and the response
/// tables (position i's table at index i).
///
/// `base_retained` is data retained outside the game (uninformed users).
pub fn backward_induction(
    users: &[(usize, UserProfile)],
    prices: &[f64],
    model: &ServerCostModel,
    base_retained: f64,
    grid_step: f64,
) -> Result<(SpneProfile, Vec<ResponseTable>)> {
    if users.len() != prices.len() {
        return Err(Error::Mismatch(format!(
            "{} sellers but {} prices",
            users.len(),
            prices.len()
        )));
    }
    if !(grid_step > 0.0) {
        return Err(Error::domain(format!("grid step must be > 0, got {grid_step}")));
    }
    let n = users.len();
    if n == 0 {
        return Ok((
            SpneProfile {
                order: vec![],
                periods: vec![],
                amounts: vec![],
                cumulative: vec![],
                terminal_round: 0,
            },
            vec![],
        ));
    }

    // Capacity of predecessors bounds each table's grid.
    let mut capacity = vec![0.0; n];
    for i in 1..n {
        capacity[i] = capacity[i - 1] + users[i - 1].1.data;
    }

    let mut tables: Vec<ResponseTable> = Vec::with_capacity(n);
    for pos in (0..n).rev() {
        let (orig, user) = &users[pos];
        let price = prices[pos];
        let next = if pos == n - 1 { None } else { Some(&tables[0]) };

        let (grid, response) = if user.accuracy_sense == 0.0 || capacity[pos] == 0.0 {
            // No coupling (or no predecessors): the response is flat in s.
            let own = if user.accuracy_sense == 0.0 {
                user.supply_raw(0.0, price)
            } else {
                best_response(user, 0.0, price, model, base_retained, next)?
            };
            if capacity[pos] == 0.0 {
                (vec![0.0], vec![own])
            } else {
                (vec![0.0, capacity[pos]], vec![own, own])
            }
        } else {
            // Adaptive grid: the response moves slowly in predecessor
            // supply, so refine only where linear interpolation misses,
            // down to the grid_step floor.
            let mut pts: Vec<(f64, f64)> = Vec::new();
            let eval = |s: f64| best_response(user, s, price, model, base_retained, next);
            let lo_v = eval(0.0)?;
            let hi_v = eval(capacity[pos])?;
            pts.push((0.0, lo_v));
            pts.push((capacity[pos], hi_v));
            let mut stack = vec![(0.0, lo_v, capacity[pos], hi_v)];
            while let Some((a, fa, b, fb)) = stack.pop() {
                if b - a <= grid_step.max(AMOUNT_TOL) {
                    continue;
                }
                let m = 0.5 * (a + b);
                let fm = eval(m)?;
                pts.push((m, fm));
                // Half-unit interpolation accuracy is far below the data
                // quantum and the search tolerance elsewhere.
                if (fm - 0.5 * (fa + fb)).abs() > 0.5 {
                    stack.push((a, fa, m, fm));
                    stack.push((m, fm, b, fb));
                }
            }
            pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            pts.dedup_by(|x, y| x.0 == y.0);
            let (grid, response): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            (grid, response)
        };

        let downstream_total: Vec<f64> = grid
            .iter()
            .zip(&response)
            .map(|(&s, &own)| own + next.map_or(0.0, |t| t.total_at(s + own)))
            .collect();
        tables.insert(0, ResponseTable { user: *orig, grid, response, downstream_total });
    }

    // Forward roll with exact responses; tables only steer anticipation.
    let mut order = Vec::with_capacity(n);
    let mut amounts = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n);
    let mut s = 0.0;
    for pos in 0..n {
        let (orig, user) = &users[pos];
        let next = tables.get(pos + 1);
        let own = best_response(user, s, prices[pos], model, base_retained, next)?;
        // Residual check, by value: near a best-response indifference the
        // argmax may jump while the payoff barely moves, which is fine; a
        // genuinely misleading table is not.
        let tabulated = tables[pos].response_at(s);
        if (own - tabulated).abs() > 2.0 * grid_step + 1e-6 {
            let payoff = |amount: f64| -> f64 {
                let followers = next.map_or(0.0, |t| t.total_at(s + amount));
                let redeemed =
                    (model.total_data - base_retained - s - amount - followers).max(0.0);
                user.privacy_raw(user.data - amount) + amount * prices[pos]
                    - user.accuracy_sense * model.accuracy_raw(redeemed)
            };
            let (at_own, at_tab) = (payoff(own), payoff(tabulated.clamp(0.0, user.data)));
            if (at_own - at_tab).abs() > 1e-6 * (1.0 + at_own.abs()) {
                return Err(Error::NonConvergence(format!(
                    "response table residual {:.3} units ({:.3e} payoff); use a smaller grid_step",
                    (own - tabulated).abs(),
                    (at_own - at_tab).abs()
                )));
            }
        }
        s += own;
        order.push(*orig);
        amounts.push(own);
        cumulative.push(s);
    }

    Ok((
        SpneProfile { order, periods: vec![0; n], amounts, cumulative, terminal_round: 0 },
        tables,
    ))
}

/// Payoffs of splitting a fixed total across two rounds versus
/// concentrating it at the later round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub split_payoff: f64,
    pub concentrated_payoff: f64,
    /// Whether concentration wins strictly (always, unless the early leg is
    /// empty, in which case the payoffs tie).
    pub strict: bool,
}

/// Check single-period dominance for one user against a fixed environment:
/// selling `(early_amount, late_amount)` in rounds `early < late` is never
/// better than selling the sum in the later round.
#[allow(clippy::too_many_arguments)]
pub fn dominance_check(
    user: &UserProfile,
    others_retained: f64,
    model: &ServerCostModel,
    schedule: &PriceSchedule,
    early_round: usize,
    early_amount: f64,
    late_round: usize,
    late_amount: f64,
) -> Result<DominanceCertificate> {
    if early_round >= late_round {
        return Err(Error::domain("rounds must satisfy early < late".to_string()));
    }
    if early_amount < 0.0 || late_amount < 0.0 || early_amount + late_amount > user.data {
        return Err(Error::domain("amounts must be nonnegative and feasible".to_string()));
    }
    let total = early_amount + late_amount;
    // Privacy and accuracy depend on the total only; they cancel in the
    // comparison but are part of both reported payoffs.
    let timing_free = user.privacy_raw(user.data - total)
        - user.accuracy_sense
            * model.accuracy_raw((model.total_data - others_retained - total).max(0.0));
    let split_payoff = timing_free
        + early_amount * schedule.price_at(early_round)
        + late_amount * schedule.price_at(late_round);
    let concentrated_payoff = timing_free + total * schedule.price_at(late_round);
    Ok(DominanceCertificate {
        split_payoff,
        concentrated_payoff,
        strict: concentrated_payoff > split_payoff,
    })
}

/// Complete-information outcome on a price schedule, periods endogenous.
pub fn ciq_outcome(
    users: &[UserProfile],
    schedule: &PriceSchedule,
    model: &ServerCostModel,
) -> Result<(SpneProfile, MechanismOutcome)> {
    ciq_outcome_with_step(users, schedule, model, 10.0)
}

/// As [`ciq_outcome`] with an explicit induction grid step.
pub fn ciq_outcome_with_step(
    users: &[UserProfile],
    schedule: &PriceSchedule,
    model: &ServerCostModel,
    grid_step: f64,
) -> Result<(SpneProfile, MechanismOutcome)> {
    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();
    let active: Vec<usize> = users
        .iter()
        .enumerate()
        .filter(|(_, u)| u.informed && u.data > 0.0)
        .map(|(i, _)| i)
        .collect();

    // Opening reservation guesses: marginal payoff at zero sales, everyone
    // else still fully redeeming.
    let x_open = model.total_data - base_retained;
    let mut periods: Vec<usize> = active
        .iter()
        .map(|&i| {
            let u = &users[i];
            let r =
                u.privacy_marginal(u.data) - u.accuracy_sense * model.accuracy_marginal(x_open);
            schedule.first_round_above(r.max(0.0))
        })
        .collect();

    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut last_profiles: Vec<SpneProfile> = Vec::new();

    for _ in 0..50 {
        // Order by assigned period, ties by user index.
        let mut perm: Vec<usize> = (0..active.len()).collect();
        perm.sort_by_key(|&j| (periods[j], active[j]));
        let ordered: Vec<(usize, UserProfile)> =
            perm.iter().map(|&j| (active[j], users[active[j]])).collect();
        let prices: Vec<f64> = perm.iter().map(|&j| schedule.price_at(periods[j])).collect();

        let (mut profile, tables) =
            backward_induction(&ordered, &prices, model, base_retained, grid_step)?;
        profile.periods = perm.iter().map(|&j| periods[j]).collect();
        profile.terminal_round = profile.periods.iter().copied().max().unwrap_or(0);

        // Demand-side cap: nobody can sell after the server's demand at the
        // realized total is gone.
        let y_total = base_retained + profile.total();
        let cap_price = model.accuracy_weight
            * model.accuracy_marginal((model.total_data - y_total).max(0.0))
            - model.time_weight * model.retrain_time;
        let round_cap = schedule.first_round_above(cap_price.max(0.0));

        // Reassign periods: earliest round whose price makes the own
        // marginal payoff at zero positive, in the current environment.
        let mut next_periods = vec![0usize; active.len()];
        let mut s_before = 0.0;
        for (pos, &j) in perm.iter().enumerate() {
            let u = &users[active[j]];
            let followers =
                tables.get(pos + 1).map_or(0.0, |t: &ResponseTable| t.total_at(s_before));
            let x_arg = (model.total_data - base_retained - s_before - followers).max(0.0);
            let r = u.privacy_marginal(u.data) - u.accuracy_sense * model.accuracy_marginal(x_arg);
            let t = schedule.first_round_above(r.max(0.0));
            next_periods[j] = t.min(round_cap);
            s_before += profile.amounts[pos];
        }

        last_profiles.push(profile.clone());
        if last_profiles.len() > 2 {
            last_profiles.remove(0);
        }

        let converged = periods == next_periods;
        let cycling = seen.contains(&next_periods);
        seen.push(next_periods.clone());
        periods = next_periods;
        if converged || cycling {
            // On a cycle, settle on the current member deterministically
            // rather than failing the replication.
            let outcome = profile_to_outcome(users, schedule, &profile);
            return Ok((profile, outcome));
        }
    }

    Err(Error::NonConvergence(format!(
        "period fixed point open after 50 iterations; last profiles: {:?}",
        last_profiles
            .iter()
            .map(|p| (p.periods.clone(), p.amounts.iter().map(|a| a.round()).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    )))
}

fn profile_to_outcome(
    users: &[UserProfile],
    schedule: &PriceSchedule,
    profile: &SpneProfile,
) -> MechanismOutcome {
    let mut retention: Vec<f64> =
        users.iter().map(|u| if u.informed { 0.0 } else { u.data }).collect();
    let mut payments = vec![0.0; users.len()];
    for (pos, &orig) in profile.order.iter().enumerate() {
        retention[orig] = profile.amounts[pos];
        payments[orig] = profile.amounts[pos] * schedule.price_at(profile.periods[pos]);
    }
    let terminal_price = profile
        .periods
        .iter()
        .zip(&profile.amounts)
        .filter(|(_, a)| **a > 0.0)
        .map(|(t, _)| schedule.price_at(*t))
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a: f64| a.max(p))));
    MechanismOutcome {
        mechanism: Mechanism::Ciq,
        retention,
        payments,
        rounds: profile.terminal_round + 1,
        terminal_price,
        note: Some("periods from earliest-profitable-round fixed point".to_string()),
    }
}

/// Result of a schedule grid search.
#[derive(Debug, Clone)]
pub struct ScheduleChoice {
    pub schedule: PriceSchedule,
    pub objective: f64,
    /// Grid points whose equilibrium computation failed, with the reason.
    pub skipped: Vec<(f64, f64, String)>,
}

/// Evaluate the server's total bill (payments plus residual unlearning
/// cost) under the equilibrium outcome on a `(start, step)` grid and return
/// the minimizer; ties resolve toward the smaller start, then step.
pub fn optimize_schedule(
    users: &[UserProfile],
    model: &ServerCostModel,
    start_grid: &[f64],
    step_grid: &[f64],
) -> Result<ScheduleChoice> {
    if start_grid.is_empty() || step_grid.is_empty() {
        return Err(Error::domain("schedule grids must be nonempty".to_string()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    let mut skipped = Vec::new();
    for &b0 in start_grid {
        for &db in step_grid {
            let schedule = PriceSchedule::new(b0, db)?;
            match ciq_outcome(users, &schedule, model) {
                Ok((_, outcome)) => {
                    let objective =
                        outcome.total_payments() + model.cost_raw(outcome.total_retained());
                    let better = match best {
                        None => true,
                        Some((obj, bb0, bdb)) => {
                            objective < obj || (objective == obj && (b0, db) < (bb0, bdb))
                        }
                    };
                    if better {
                        best = Some((objective, b0, db));
                    }
                }
                Err(e) => skipped.push((b0, db, e.to_string())),
            }
        }
    }
    let (objective, b0, db) =
        best.ok_or_else(|| Error::NonConvergence("every schedule grid point failed".to_string()))?;
    Ok(ScheduleChoice { schedule: PriceSchedule::new(b0, db)?, objective, skipped })
}

/// Simultaneous best-response fixed point at a single uniform price: every
/// informed user repeatedly best-responds to the aggregate of the others
/// until total retention moves less than `tol`.
pub fn simultaneous_response(
    users: &[UserProfile],
    price: f64,
    model: &ServerCostModel,
    tol: f64,
) -> Result<Vec<f64>> {
    let base_retained: f64 = users.iter().filter(|u| !u.informed).map(|u| u.data).sum();
    let mut sold: Vec<f64> = users.iter().map(|u| if u.informed { 0.0 } else { u.data }).collect();
    for _ in 0..500 {
        let mut shift = 0.0f64;
        for (i, u) in users.iter().enumerate() {
            if !u.informed {
                continue;
            }
            let others: f64 = base_retained
                + sold
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i && users[*j].informed)
                    .map(|(_, v)| *v)
                    .sum::<f64>();
            let fresh = terminal_response(u, others, price, model)?;
            shift += (fresh - sold[i]).abs();
            sold[i] = fresh;
        }
        if shift < tol {
            return Ok(sold);
        }
    }
    Err(Error::NonConvergence(format!(
        "simultaneous response at price {price} still moving after 500 sweeps"
    )))
}
