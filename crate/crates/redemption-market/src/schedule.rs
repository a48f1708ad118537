use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic ascending quote sequence: `price_at(t) = start + t * step`.
///
/// The schedule is public knowledge; every participant can reconstruct the
/// full price path from these two numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    /// Initial unit price (currency per data unit, >= 0).
    pub start: f64,
    /// Price increment per round (currency per data unit, > 0).
    pub step: f64,
}

impl PriceSchedule {
    pub fn new(start: f64, step: f64) -> Result<Self> {
        if !start.is_finite() || start < 0.0 {
            return Err(Error::domain(format!("start price must be >= 0, got {start}")));
        }
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::domain(format!("price step must be > 0, got {step}")));
        }
        Ok(PriceSchedule { start, step })
    }

    /// Quoted unit price in round `t`.
    pub fn price_at(&self, round: usize) -> f64 {
        self.start + round as f64 * self.step
    }

    /// First round whose quote strictly exceeds `price`, i.e. the earliest
    /// round at which a seller with that reservation level becomes active.
    pub fn first_round_above(&self, price: f64) -> usize {
        if self.start > price {
            return 0;
        }
        // Smallest t with start + t*step > price.
        let t = ((price - self.start) / self.step).floor() as usize;
        let mut t = t;
        while self.price_at(t) <= price {
            t += 1;
        }
        t
    }
}
