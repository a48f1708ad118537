//! Server-side economics: unlearning cost, retention target, and demand.
//!
//! The server holds a model trained on `total_data` units of user data.
//! Unlearning a redeemed amount `x` degrades accuracy exponentially and
//! retraining charges time proportional to the amount kept, so the cost of
//! ending up with `y` retained units is
//!
//! ```text
//! cost(y) = accuracy_weight * (accuracy_scale * base^(accuracy_rate*(d - y)) - accuracy_offset)
//!         + time_weight * retrain_time * y          for y in [0, d)
//! cost(d) = accuracy_weight * (accuracy_scale - accuracy_offset)
//! ```
//!
//! The jump at `y = d` reflects that keeping everything requires no
//! unlearning run at all. All quantities are continuous data units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Server cost parameters plus the total endowment of the user base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerCostModel {
    /// Exponential base of the accuracy curve (> 1).
    pub accuracy_base: f64,
    /// Accuracy degradation scale (> 0).
    pub accuracy_scale: f64,
    /// Accuracy degradation rate per redeemed unit (> 0).
    pub accuracy_rate: f64,
    /// Constant accuracy offset (>= 0).
    pub accuracy_offset: f64,
    /// Retraining time per retained unit (>= 0).
    pub retrain_time: f64,
    /// Cost weight on accuracy loss (>= 0).
    pub accuracy_weight: f64,
    /// Cost weight on retraining time (>= 0).
    pub time_weight: f64,
    /// Total user data endowment (> 0).
    pub total_data: f64,
}

/// Monotonicity class of the continuous cost branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetentionCase {
    /// Cost increases in retention everywhere: the server keeps nothing.
    KeepNone,
    /// Cost decreases in retention everywhere: the server keeps everything.
    KeepAll,
    /// Interior stationary point of the cost curve.
    Interior,
}

/// Cost-minimizing retention target over the continuous branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub target: f64,
    pub case: RetentionCase,
}

impl ServerCostModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        accuracy_base: f64,
        accuracy_scale: f64,
        accuracy_rate: f64,
        accuracy_offset: f64,
        retrain_time: f64,
        accuracy_weight: f64,
        time_weight: f64,
        total_data: f64,
    ) -> Result<Self> {
        if !(accuracy_base > 1.0) {
            return Err(Error::domain(format!("accuracy base must be > 1, got {accuracy_base}")));
        }
        if !(accuracy_scale > 0.0) || !(accuracy_rate > 0.0) {
            return Err(Error::domain(
                "accuracy scale and rate must be > 0 for a convex cost curve".to_string(),
            ));
        }
        if accuracy_offset < 0.0 || retrain_time < 0.0 || accuracy_weight < 0.0 || time_weight < 0.0
        {
            return Err(Error::domain("cost weights must be nonnegative".to_string()));
        }
        if !(total_data > 0.0) {
            return Err(Error::domain(format!("total data must be > 0, got {total_data}")));
        }
        Ok(ServerCostModel {
            accuracy_base,
            accuracy_scale,
            accuracy_rate,
            accuracy_offset,
            retrain_time,
            accuracy_weight,
            time_weight,
            total_data,
        })
    }

    /// The parameterization used throughout the bundled experiments:
    /// base e, scale 0.1, rate 3.33e-5, no offset, retrain time 2.85e-4,
    /// weights (1500, 1).
    pub fn standard(total_data: f64) -> Self {
        ServerCostModel::new(
            std::f64::consts::E,
            0.1,
            3.33e-5,
            0.0,
            2.85e-4,
            1500.0,
            1.0,
            total_data,
        )
        .expect("standard parameters are valid")
    }

    /// Effective natural-log exponent rate: `accuracy_rate * ln(accuracy_base)`.
    #[inline]
    pub fn exp_rate(&self) -> f64 {
        self.accuracy_rate * self.accuracy_base.ln()
    }

    /// Accuracy degradation after unlearning `redeemed` units.
    pub fn accuracy_degradation(&self, redeemed: f64) -> Result<f64> {
        self.check_range(redeemed, "redeemed amount")?;
        Ok(self.accuracy_raw(redeemed))
    }

    /// Unchecked accuracy curve; callers guarantee the range themselves.
    #[inline]
    pub(crate) fn accuracy_raw(&self, redeemed: f64) -> f64 {
        self.accuracy_scale * (self.exp_rate() * redeemed).exp() - self.accuracy_offset
    }

    /// Marginal accuracy degradation per redeemed unit.
    #[inline]
    pub fn accuracy_marginal(&self, redeemed: f64) -> f64 {
        self.accuracy_scale * self.exp_rate() * (self.exp_rate() * redeemed).exp()
    }

    /// Second derivative of the accuracy curve (always >= 0).
    #[inline]
    pub fn accuracy_curvature(&self, redeemed: f64) -> f64 {
        let r = self.exp_rate();
        self.accuracy_scale * r * r * (r * redeemed).exp()
    }

    /// Retraining time when `retained` units are kept. Keeping everything
    /// skips the retraining run entirely, hence the jump at the endpoint.
    pub fn retraining_time(&self, retained: f64) -> Result<f64> {
        self.check_range(retained, "retained amount")?;
        if retained == self.total_data {
            Ok(0.0)
        } else {
            Ok(self.retrain_time * retained)
        }
    }

    /// Total unlearning cost of ending at `retained` units, jump included.
    pub fn cost(&self, retained: f64) -> Result<f64> {
        self.check_range(retained, "retained amount")?;
        Ok(self.cost_raw(retained))
    }

    #[inline]
    pub(crate) fn cost_raw(&self, retained: f64) -> f64 {
        let time = if retained == self.total_data { 0.0 } else { self.retrain_time * retained };
        self.accuracy_weight * self.accuracy_raw(self.total_data - retained)
            + self.time_weight * time
    }

    /// Continuous cost branch (time term kept at the endpoint).
    #[inline]
    pub fn cost_continuous(&self, retained: f64) -> f64 {
        self.accuracy_weight * self.accuracy_raw(self.total_data - retained)
            + self.time_weight * self.retrain_time * retained
    }

    /// Cost-minimizing retention over the continuous branch, clamped to
    /// `[0, total_data]` with its monotonicity case label.
    pub fn optimal_retention(&self) -> Retention {
        let time_slope = self.time_weight * self.retrain_time;
        if time_slope == 0.0 {
            // No time cost: accuracy alone is minimized by keeping everything.
            return Retention { target: self.total_data, case: RetentionCase::KeepAll };
        }
        let r = self.exp_rate();
        // Stationary point of cost_continuous, computed in log space.
        let num = self.accuracy_weight * self.accuracy_scale * r;
        let interior = self.total_data + (num.ln() - time_slope.ln()) / r;
        if interior <= 0.0 {
            Retention { target: 0.0, case: RetentionCase::KeepNone }
        } else if interior >= self.total_data {
            Retention { target: self.total_data, case: RetentionCase::KeepAll }
        } else {
            Retention { target: interior, case: RetentionCase::Interior }
        }
    }

    /// Additional amount the server wants to buy at unit price `price`,
    /// holding `retained` units already. Zero once the marginal saving falls
    /// below `time_weight * retrain_time + price`.
    pub fn demand(&self, retained: f64, price: f64) -> Result<f64> {
        let target = self.optimal_retention().target;
        if !(0.0..=target).contains(&retained) {
            return Err(Error::domain(format!(
                "retained {retained} outside [0, retention target {target}]"
            )));
        }
        if !(price >= 0.0) {
            return Err(Error::domain(format!("price must be >= 0, got {price}")));
        }
        Ok(self.demand_raw(retained, price, target))
    }

    pub(crate) fn demand_raw(&self, retained: f64, price: f64, target: f64) -> f64 {
        let room = (target - retained).max(0.0);
        if room == 0.0 {
            return 0.0;
        }
        let r = self.exp_rate();
        let marginal_floor = self.time_weight * self.retrain_time + price;
        if marginal_floor <= 0.0 {
            // Free data and no time cost: buy up to the target.
            return room;
        }
        // Interior maximizer of cost(y) - cost(y+delta) - price*delta in log
        // space, so large exponents cannot overflow.
        let num = self.accuracy_weight * self.accuracy_scale * r;
        let interior =
            (num.ln() + r * (self.total_data - retained) - marginal_floor.ln()) / r;
        interior.clamp(0.0, room)
    }

    /// Average cost change per unit of moving from `retained` all the way to
    /// the retention target, time term included: the difference quotient
    /// `(cost(target) - cost(retained)) / (target - retained)` on the
    /// continuous branch. Negative whenever retention lowers cost, i.e. any
    /// price below its magnitude supports buying out the whole gap.
    pub fn buy_all_price(&self, retained: f64) -> Result<f64> {
        let target = self.optimal_retention().target;
        if !(retained >= 0.0) || retained >= target {
            return Err(Error::domain(format!(
                "buy-all price needs retained in [0, target {target}), got {retained}"
            )));
        }
        // Limit branch at the target: the quotation phase never reaches the
        // full-retention jump, which is the post-quotation phase's concern.
        Ok((self.cost_continuous(target) - self.cost_continuous(retained)) / (target - retained))
    }

    fn check_range(&self, v: f64, what: &str) -> Result<()> {
        if !(0.0..=self.total_data).contains(&v) {
            return Err(Error::domain(format!(
                "{what} {v} outside [0, {}]",
                self.total_data
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> ServerCostModel {
        ServerCostModel::standard(60_000.0)
    }

    #[test]
    fn accuracy_at_zero_is_scale_minus_offset() {
        let m = model();
        assert_relative_eq!(m.accuracy_degradation(0.0).unwrap(), 0.1, max_relative = 1e-12);

        let mut off = m;
        off.accuracy_offset = 0.1;
        assert_relative_eq!(off.accuracy_degradation(0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_at_full_redemption() {
        // 0.1 * e^(3.33e-5 * 60000) = 0.1 * e^1.998
        let m = model();
        let a = m.accuracy_degradation(60_000.0).unwrap();
        assert_relative_eq!(a, 0.1 * (1.998f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(a, 0.737_434, max_relative = 1e-5);
    }

    #[test]
    fn accuracy_rejects_out_of_range() {
        let m = model();
        assert!(m.accuracy_degradation(-1.0).is_err());
        assert!(m.accuracy_degradation(60_001.0).is_err());
    }

    #[test]
    fn retraining_time_jump() {
        let m = model();
        assert_eq!(m.retraining_time(0.0).unwrap(), 0.0);
        assert_relative_eq!(m.retraining_time(10_000.0).unwrap(), 2.85, max_relative = 1e-12);
        // Keeping everything skips the retraining run.
        assert_eq!(m.retraining_time(60_000.0).unwrap(), 0.0);
    }

    #[test]
    fn cost_endpoints_and_jump() {
        let m = model();
        assert_relative_eq!(m.cost(60_000.0).unwrap(), 150.0, max_relative = 1e-12);
        assert_relative_eq!(m.cost(0.0).unwrap(), 1106.15, max_relative = 1e-3);
        // Jump magnitude equals the skipped retraining bill.
        let jump = m.cost_continuous(60_000.0) - m.cost(60_000.0).unwrap();
        assert_relative_eq!(jump, 17.1, max_relative = 1e-10);
    }

    #[test]
    fn retention_cases() {
        let m = model();
        let r = m.optimal_retention();
        assert_eq!(r.case, RetentionCase::KeepAll);
        assert_eq!(r.target, 60_000.0);

        let mut slow = m;
        slow.retrain_time = 0.05;
        let r = slow.optimal_retention();
        assert_eq!(r.case, RetentionCase::KeepNone);
        assert_eq!(r.target, 0.0);

        let mut free = m;
        free.retrain_time = 0.0;
        assert_eq!(free.optimal_retention().case, RetentionCase::KeepAll);

        // The keep-none interior point sits near -9177 before clamping.
        let interior = slow.total_data
            + ((slow.accuracy_weight * slow.accuracy_scale * slow.exp_rate()).ln()
                - (slow.time_weight * slow.retrain_time).ln())
                / slow.exp_rate();
        assert_relative_eq!(interior, -9177.0, max_relative = 1e-3);
    }

    #[test]
    fn demand_matches_known_points() {
        let m = model();
        // Price low enough that the interior optimum exceeds the room.
        assert_relative_eq!(m.demand(0.0, 0.001).unwrap(), 60_000.0, max_relative = 1e-12);
        // Above the marginal saving at zero retention, demand dies.
        assert_eq!(m.demand(0.0, 0.037).unwrap(), 0.0);
        assert_eq!(m.demand(0.0, 1e9).unwrap(), 0.0);
        // Unreachable retention is a caller bug.
        assert!(m.demand(60_000.1, 0.001).is_err());
    }

    #[test]
    fn demand_threshold_price() {
        let m = model();
        // Marginal saving at delta = 0 from empty retention.
        let threshold = m.accuracy_weight * m.accuracy_marginal(m.total_data)
            - m.time_weight * m.retrain_time;
        assert_relative_eq!(threshold, 0.03655, max_relative = 1e-3);
        assert!(m.demand(0.0, threshold + 1e-6).unwrap() == 0.0);
        assert!(m.demand(0.0, threshold - 1e-6).unwrap() > 0.0);
    }

    #[test]
    fn buy_all_price_uses_limit_branch() {
        let m = model();
        let b = m.buy_all_price(0.0).unwrap();
        // (cost_cont(60000) - cost(0)) / 60000 = (167.1 - 1106.15) / 60000
        assert_relative_eq!(b, -0.015650, max_relative = 1e-3);
        // Near the target the quotient converges to the cost slope.
        let y = 59_999.0;
        let slope = (m.cost_continuous(60_000.0) - m.cost_continuous(59_998.0)) / 2.0;
        assert_relative_eq!(m.buy_all_price(y).unwrap(), slope, max_relative = 1e-4);
        assert!(m.buy_all_price(60_000.0).is_err());

        let mut slow = m;
        slow.retrain_time = 0.05;
        // Keep-none: no valid retention below the target at all.
        assert!(slow.buy_all_price(0.0).is_err());
    }
}
