use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::user::UserProfile;

/// The pricing mechanisms the simulator can evaluate side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    /// Information-free ascending quotation (myopic users).
    Iiq,
    /// Complete-information quotation: strategic users on the same schedule.
    Ciq,
    /// Optimal personalized pricing, the welfare upper bound.
    Opp,
    /// Personalized pricing computed from noisy parameter estimates.
    OppNoisy,
    /// Best single uniform price.
    Bsp,
    /// No redemption at all.
    Dnr,
    /// Every informed user redeems everything.
    Gdpr,
    /// Keep everything, compensate informed users for the full privacy loss.
    Full,
}

impl Mechanism {
    pub const ALL: [Mechanism; 8] = [
        Mechanism::Iiq,
        Mechanism::Ciq,
        Mechanism::Opp,
        Mechanism::OppNoisy,
        Mechanism::Bsp,
        Mechanism::Dnr,
        Mechanism::Gdpr,
        Mechanism::Full,
    ];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mechanism::Iiq => "IIQ",
            Mechanism::Ciq => "CIQ",
            Mechanism::Opp => "OPP",
            Mechanism::OppNoisy => "OPP_NOISY",
            Mechanism::Bsp => "BSP",
            Mechanism::Dnr => "DNR",
            Mechanism::Gdpr => "GDPR",
            Mechanism::Full => "FULL",
        };
        f.write_str(s)
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IIQ" => Ok(Mechanism::Iiq),
            "CIQ" => Ok(Mechanism::Ciq),
            "OPP" => Ok(Mechanism::Opp),
            "OPP_NOISY" | "OPP-NOISY" | "NOISY_OPP" => Ok(Mechanism::OppNoisy),
            "BSP" => Ok(Mechanism::Bsp),
            "DNR" => Ok(Mechanism::Dnr),
            "GDPR" => Ok(Mechanism::Gdpr),
            "FULL" => Ok(Mechanism::Full),
            other => Err(Error::Config(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Uniform result shape all mechanisms produce: who ends up with how much
/// data on the server, and who got paid what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub mechanism: Mechanism,
    /// Per-user amount retained on the server, uninformed users included at
    /// their full endowment (they never redeem).
    pub retention: Vec<f64>,
    /// Per-user currency transfers from the server (>= 0).
    pub payments: Vec<f64>,
    /// Price increments executed (0 for one-shot mechanisms).
    pub rounds: usize,
    /// Price of the last executed trade round, if any round ran.
    pub terminal_price: Option<f64>,
    /// Free-form note on parameters actually used (noise draws, rationing).
    pub note: Option<String>,
}

impl MechanismOutcome {
    /// Amount the mechanism itself moved onto the server: retention of
    /// informed users. Uninformed endowments sit there regardless.
    pub fn mechanism_sold(&self, users: &[UserProfile]) -> f64 {
        self.retention
            .iter()
            .zip(users)
            .filter(|(_, u)| u.informed)
            .map(|(r, _)| *r)
            .sum()
    }

    pub fn total_retained(&self) -> f64 {
        self.retention.iter().sum()
    }

    pub fn total_payments(&self) -> f64 {
        self.payments.iter().sum()
    }

    /// CSV export, one row per user: `user,retained,payment,mechanism`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,retained,payment,mechanism\n");
        for (i, (r, p)) in self.retention.iter().zip(&self.payments).enumerate() {
            out.push_str(&format!("{i},{r},{p},{}\n", self.mechanism));
        }
        out
    }
}
