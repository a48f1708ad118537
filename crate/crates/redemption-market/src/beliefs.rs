//! Termination-price beliefs.
//!
//! A seller in the ascending quotation only ever learns one thing per
//! round: the protocol is still alive, so the final price exceeds the
//! current quote. Conditioning a prior over the termination price on that
//! event is plain left-truncation, and the one-round-ahead termination
//! probability is governed by the prior's hazard rate. Decreasing-hazard
//! priors make waiting look ever less attractive, which is what rationalizes
//! greedy selling; this module provides the distributions, the truncation
//! arithmetic and the sell-now test, plus moment fitting across repeated
//! redemption events.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Prior over the termination price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminationPrior {
    Uniform { lo: f64, hi: f64 },
    /// Exponential with the given rate, shifted to start at `origin`.
    Exponential { rate: f64, origin: f64 },
    Gamma { shape: f64, rate: f64 },
    Pareto { shape: f64, scale: f64 },
}

impl TerminationPrior {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(Error::domain(format!("uniform prior needs 0 <= lo < hi, got [{lo}, {hi}]")));
        }
        Ok(TerminationPrior::Uniform { lo, hi })
    }

    pub fn exponential(rate: f64, origin: f64) -> Result<Self> {
        if !(rate > 0.0) || !(origin >= 0.0) {
            return Err(Error::domain("exponential prior needs rate > 0, origin >= 0".to_string()));
        }
        Ok(TerminationPrior::Exponential { rate, origin })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::domain("gamma prior needs shape > 0 and rate > 0".to_string()));
        }
        Ok(TerminationPrior::Gamma { shape, rate })
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::domain("pareto prior needs shape > 0 and scale > 0".to_string()));
        }
        Ok(TerminationPrior::Pareto { shape, scale })
    }

    /// Lower end of the support.
    pub fn support_start(&self) -> f64 {
        match *self {
            TerminationPrior::Uniform { lo, .. } => lo,
            TerminationPrior::Exponential { origin, .. } => origin,
            TerminationPrior::Gamma { .. } => 0.0,
            TerminationPrior::Pareto { scale, .. } => scale,
        }
    }

    pub fn cdf(&self, b: f64) -> f64 {
        match *self {
            TerminationPrior::Uniform { lo, hi } => ((b - lo) / (hi - lo)).clamp(0.0, 1.0),
            TerminationPrior::Exponential { rate, origin } => {
                if b <= origin {
                    0.0
                } else {
                    1.0 - (-rate * (b - origin)).exp()
                }
            }
            TerminationPrior::Gamma { shape, rate } => {
                if b <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, rate * b)
                }
            }
            TerminationPrior::Pareto { shape, scale } => {
                if b <= scale {
                    0.0
                } else {
                    1.0 - (scale / b).powf(shape)
                }
            }
        }
    }

    pub fn pdf(&self, b: f64) -> f64 {
        match *self {
            TerminationPrior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&b) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            TerminationPrior::Exponential { rate, origin } => {
                if b < origin {
                    0.0
                } else {
                    rate * (-rate * (b - origin)).exp()
                }
            }
            TerminationPrior::Gamma { shape, rate } => {
                if b <= 0.0 {
                    0.0
                } else {
                    (shape * rate.ln() + (shape - 1.0) * b.ln() - rate * b - ln_gamma(shape)).exp()
                }
            }
            TerminationPrior::Pareto { shape, scale } => {
                if b < scale {
                    0.0
                } else {
                    shape * scale.powf(shape) / b.powf(shape + 1.0)
                }
            }
        }
    }

    /// Survival `1 - cdf(b)`, computed directly per family so deep tails do
    /// not cancel to zero.
    pub fn survival(&self, b: f64) -> f64 {
        match *self {
            TerminationPrior::Uniform { lo, hi } => ((hi - b) / (hi - lo)).clamp(0.0, 1.0),
            TerminationPrior::Exponential { rate, origin } => {
                if b <= origin {
                    1.0
                } else {
                    (-rate * (b - origin)).exp()
                }
            }
            TerminationPrior::Gamma { shape, rate } => {
                if b <= 0.0 {
                    1.0
                } else {
                    gamma_ur(shape, rate * b)
                }
            }
            TerminationPrior::Pareto { shape, scale } => {
                if b <= scale {
                    1.0
                } else {
                    (scale / b).powf(shape)
                }
            }
        }
    }
}

/// Hazard rate of the prior at price `b`: density over survival.
pub fn hazard_rate(prior: &TerminationPrior, b: f64) -> Result<f64> {
    let s = prior.survival(b);
    if s <= 0.0 {
        return Err(Error::Degenerate(format!("no belief mass above price {b}")));
    }
    Ok(prior.pdf(b) / s)
}

/// A prior together with the price the quotation has already survived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub prior: TerminationPrior,
    pub current_price: f64,
}

impl BeliefState {
    pub fn new(prior: TerminationPrior, current_price: f64) -> Self {
        BeliefState { prior, current_price }
    }

    /// Left-truncated posterior CDF at `b > current_price`.
    pub fn posterior_cdf(&self, b: f64) -> Result<f64> {
        if b <= self.current_price {
            return Err(Error::domain(format!(
                "posterior is defined above the current price {}, got {b}",
                self.current_price
            )));
        }
        let s = self.prior.survival(self.current_price);
        if s <= 0.0 {
            return Err(Error::Degenerate("belief exhausted: zero survival mass".to_string()));
        }
        Ok((self.prior.cdf(b) - self.prior.cdf(self.current_price)) / s)
    }

    /// Exact subjective probability that the quotation terminates within the
    /// next price increment. The hazard-rate form `h(B) * step` is its
    /// first-order approximation.
    pub fn termination_probability(&self, step: f64) -> Result<f64> {
        if !(step >= 0.0) {
            return Err(Error::domain(format!("price step must be >= 0, got {step}")));
        }
        let s = self.prior.survival(self.current_price);
        if s <= 0.0 {
            return Err(Error::Degenerate("belief exhausted: zero survival mass".to_string()));
        }
        if step == 0.0 {
            return Ok(0.0);
        }
        Ok(((self.prior.cdf(self.current_price + step) - self.prior.cdf(self.current_price)) / s)
            .clamp(0.0, 1.0))
    }

    /// Sell-now test: hazard-weighted value of selling at the current quote
    /// against the survival-weighted value of waiting one round.
    pub fn sell_condition(&self, step: f64, value_now: f64, value_next: f64) -> Result<bool> {
        if !(value_now >= 0.0) || !(value_next >= 0.0) {
            return Err(Error::domain("benefits must be nonnegative".to_string()));
        }
        let h = hazard_rate(&self.prior, self.current_price)?;
        Ok(h * value_now >= value_next * (1.0 - h * step))
    }
}

/// Endowment carried into the next redemption event: whatever stayed on the
/// server plus the data generated since.
pub fn update_endowment(retained: f64, generated: f64) -> Result<f64> {
    if !(retained >= 0.0) || !(generated >= 0.0) {
        return Err(Error::domain("endowment pieces must be nonnegative".to_string()));
    }
    Ok(retained + generated)
}

/// Fit a gamma prior to observed termination prices by matching moments
/// (population variance). Needs at least two distinct observations.
pub fn fit_prior(history: &[f64]) -> Result<TerminationPrior> {
    if history.len() < 2 {
        return Err(Error::domain(format!(
            "prior fitting needs at least 2 observations, got {}",
            history.len()
        )));
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Degenerate("zero-variance history, gamma fit undefined".to_string()));
    }
    if !(mean > 0.0) {
        return Err(Error::domain("termination prices must be positive".to_string()));
    }
    TerminationPrior::gamma(mean * mean / var, mean / var)
}
