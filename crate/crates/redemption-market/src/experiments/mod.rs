//! Seeded Monte Carlo experiment driver: configuration, population
//! sampling, the per-family runners, and report files.

pub mod config;
pub mod report;
pub mod runner;
pub mod sampling;

pub use config::{DistSpec, ExperimentConfig, SweepAxis};
pub use report::{ExperimentReport, RawRow};
pub use runner::{
    evaluate, run_comparison, run_convergence, run_mechanism, run_oversupply, run_robustness,
    run_sweep, single_ledger,
};
pub use sampling::{assign_informed, sample_population};
