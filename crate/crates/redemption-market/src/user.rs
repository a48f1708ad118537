//! User-side economics: privacy utility, reservation prices, and supply.
//!
//! A user who keeps `x` units redeemed (off the server) enjoys privacy
//! utility
//!
//! ```text
//! privacy(x) = privacy_value * (x + 1)^(1 - elasticity) / (1 - elasticity)   (elasticity < 1)
//! privacy(x) = privacy_value * ln(x + 1)                                     (elasticity = 1)
//! ```
//!
//! concave and increasing in `x`. Selling moves units from the redeemed
//! stock onto the server, so every price query below reduces to comparing
//! compensation against the marginal privacy given up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One user's private parameters plus the informed flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    /// Data endowment (units, >= 0).
    pub data: f64,
    /// Privacy valuation (utility units, >= 0).
    pub privacy_value: f64,
    /// Privacy elasticity in [0, 1]; 1 is the logarithmic case.
    pub privacy_elasticity: f64,
    /// Sensitivity to model accuracy degradation (>= 0).
    pub accuracy_sense: f64,
    /// Whether the user is aware of its redemption rights.
    pub informed: bool,
}

impl UserProfile {
    pub fn new(
        data: f64,
        privacy_value: f64,
        privacy_elasticity: f64,
        accuracy_sense: f64,
        informed: bool,
    ) -> Result<Self> {
        if !(data >= 0.0) || !(privacy_value >= 0.0) || !(accuracy_sense >= 0.0) {
            return Err(Error::domain(
                "data, privacy value and accuracy sensitivity must be >= 0".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&privacy_elasticity) {
            return Err(Error::domain(format!(
                "privacy elasticity must lie in [0, 1], got {privacy_elasticity}"
            )));
        }
        Ok(UserProfile { data, privacy_value, privacy_elasticity, accuracy_sense, informed })
    }

    /// Privacy utility of holding `redeemed` units off the server.
    pub fn privacy_utility(&self, redeemed: f64) -> Result<f64> {
        if !(0.0..=self.data).contains(&redeemed) {
            return Err(Error::domain(format!(
                "redeemed {redeemed} outside [0, {}]",
                self.data
            )));
        }
        Ok(self.privacy_raw(redeemed))
    }

    #[inline]
    pub(crate) fn privacy_raw(&self, redeemed: f64) -> f64 {
        let k = self.privacy_elasticity;
        if k == 1.0 {
            self.privacy_value * (redeemed + 1.0).ln()
        } else {
            self.privacy_value * (redeemed + 1.0).powf(1.0 - k) / (1.0 - k)
        }
    }

    /// Privacy utility gained by the first `redeemed` units, i.e.
    /// `privacy(redeemed) - privacy(0)`. Zero at zero for every elasticity.
    #[inline]
    pub fn privacy_gain(&self, redeemed: f64) -> f64 {
        let k = self.privacy_elasticity;
        if k == 1.0 {
            self.privacy_value * (redeemed + 1.0).ln()
        } else {
            self.privacy_value * ((redeemed + 1.0).powf(1.0 - k) - 1.0) / (1.0 - k)
        }
    }

    /// Marginal privacy value at `redeemed` units.
    #[inline]
    pub fn privacy_marginal(&self, redeemed: f64) -> f64 {
        self.privacy_value * (redeemed + 1.0).powf(-self.privacy_elasticity)
    }

    /// Minimal unit price at which the user sells any further amount, having
    /// already sold `sold` units.
    pub fn reservation_price(&self, sold: f64) -> Result<f64> {
        if !(0.0..self.data).contains(&sold) {
            return Err(Error::domain(format!(
                "reservation price needs sold in [0, {}), got {sold}",
                self.data
            )));
        }
        Ok(self.privacy_marginal(self.data - sold))
    }

    /// Minimal unit price compensating the privacy lost by selling `delta`
    /// more units on top of `sold`.
    pub fn min_price_for(&self, sold: f64, delta: f64) -> Result<f64> {
        if !(0.0..self.data).contains(&sold) {
            return Err(Error::domain(format!("sold {sold} outside [0, {})", self.data)));
        }
        let remaining = self.data - sold;
        if !(delta > 0.0) || delta > remaining {
            return Err(Error::domain(format!(
                "delta must lie in (0, remaining {remaining}], got {delta}"
            )));
        }
        // Stable difference of the concave privacy curve: small deltas would
        // otherwise cancel to noise.
        let k = self.privacy_elasticity;
        let keep = remaining + 1.0 - delta;
        let ratio = delta / keep;
        let diff = if k == 1.0 {
            self.privacy_value * ratio.ln_1p()
        } else {
            self.privacy_value * keep.powf(1.0 - k) * ((1.0 - k) * ratio.ln_1p()).exp_m1()
                / (1.0 - k)
        };
        Ok(diff / delta)
    }

    /// Optimal additional amount to sell at unit price `price` given `sold`
    /// already gone: the maximizer of `price*delta - privacy lost`.
    ///
    /// Linear users (elasticity 0) are bang-bang and keep their data on a
    /// tie. A zero price never buys anything.
    pub fn supply(&self, sold: f64, price: f64) -> Result<f64> {
        if !(0.0..=self.data).contains(&sold) {
            return Err(Error::domain(format!("sold {sold} outside [0, {}]", self.data)));
        }
        if !(price >= 0.0) {
            return Err(Error::domain(format!("price must be >= 0, got {price}")));
        }
        Ok(self.supply_raw(sold, price))
    }

    pub(crate) fn supply_raw(&self, sold: f64, price: f64) -> f64 {
        let remaining = self.data - sold;
        if remaining <= 0.0 || price == 0.0 {
            return 0.0;
        }
        let lam = self.privacy_value;
        if lam == 0.0 {
            return remaining;
        }
        let k = self.privacy_elasticity;
        if k == 0.0 {
            return if price > lam { remaining } else { 0.0 };
        }
        let keep = (lam / price).powf(1.0 / k);
        (remaining + 1.0 - keep).clamp(0.0, remaining)
    }
}
