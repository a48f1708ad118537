//! Market simulator for pricing data retention under deletion rights.
//!
//! When users hold the right to have their data unlearned from a trained
//! model, the operator can offer compensation for leaving data in place.
//! This crate implements that market end to end:
//!
//! - [`cost`]: the server's unlearning cost curve, retention target and
//!   price-dependent demand;
//! - [`user`]: privacy utility, reservation prices and supply;
//! - [`quotation`]: the ascending-quotation protocol with oversupply
//!   handling and the post-quotation probe of the full-retention jump;
//! - [`beliefs`]: the termination-price belief model behind greedy selling;
//! - [`equilibrium`]: strategic benchmark — backward-induction equilibria
//!   of the complete-information game, plus schedule optimization;
//! - [`benchmarks`]: personalized pricing (exact and noise-distorted),
//!   best single price, and the boundary baselines;
//! - [`metrics`]: welfare decomposition, fairness indices, per-user regret
//!   and free-rider diagnostics;
//! - [`experiments`]: seeded Monte Carlo driver with CSV/JSON reports.
//!
//! The `examples/` directory walks through each capability; the
//! `redemption-market` binary exposes the experiment driver as a CLI.

pub mod beliefs;
pub mod benchmarks;
pub mod cost;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod outcome;
pub mod quotation;
pub mod rng;
pub mod schedule;
pub mod user;

pub use cost::{Retention, RetentionCase, ServerCostModel};
pub use error::{Error, Result};
pub use outcome::{Mechanism, MechanismOutcome};
pub use quotation::{
    allocate_oversupply, run_quotation, MarketState, OversupplyStrategy, Phase, QuotationConfig,
    Trade,
};
pub use schedule::PriceSchedule;
pub use user::UserProfile;
