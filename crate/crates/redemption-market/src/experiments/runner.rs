//! Monte Carlo drivers for the experiment families.
//!
//! Replicates run in parallel; results are collected in replicate order, so
//! output bytes do not depend on the worker count. Per-replicate failures
//! are recorded in their row and the run continues.

use rayon::prelude::*;

use crate::benchmarks::{baseline, bsp_solve, default_price_grid, opp_noisy, opp_solve, NoiseSpec};
use crate::equilibrium::ciq_outcome;
use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, SweepAxis};
use crate::experiments::report::{ExperimentReport, RawRow};
use crate::experiments::sampling::{assign_informed, sample_population};
use crate::metrics::{regret_upper_bounds, run_metrics, RunMetrics};
use crate::outcome::{Mechanism, MechanismOutcome};
use crate::quotation::{run_quotation, QuotationConfig};
use crate::rng;
use crate::schedule::PriceSchedule;
use crate::user::UserProfile;
use crate::ServerCostModel;

const DEFAULT_RUNS: usize = 5000;
const DEFAULT_SWEEP_RUNS: usize = 500;

/// Run a single mechanism on a fixed population. `sigma` only matters for
/// the noisy personalized-pricing mechanism.
pub fn run_mechanism(
    mechanism: Mechanism,
    users: &[UserProfile],
    model: &ServerCostModel,
    cfg: &ExperimentConfig,
    replicate: u64,
    sigma: f64,
) -> Result<MechanismOutcome> {
    let schedule = PriceSchedule::new(cfg.start_price, cfg.price_step)?;
    match mechanism {
        Mechanism::Iiq => {
            let qc = QuotationConfig::new(
                schedule,
                cfg.trade_unit,
                cfg.strategy,
                rng::derive(cfg.seed, replicate, "quotation"),
            )?;
            Ok(run_quotation(model, users, &qc)?.to_outcome(users))
        }
        Mechanism::Ciq => Ok(ciq_outcome(users, &schedule, model)?.1),
        Mechanism::Opp => opp_solve(users, model),
        Mechanism::OppNoisy => {
            let label = format!("noise-{:x}", sigma.to_bits());
            let noise = NoiseSpec::new(sigma, rng::derive(cfg.seed, replicate, &label))?;
            opp_noisy(users, model, &noise)
        }
        Mechanism::Bsp => bsp_solve(users, model, &default_price_grid(users, model, &schedule)),
        Mechanism::Dnr | Mechanism::Gdpr | Mechanism::Full => baseline(mechanism, users),
    }
}

/// Outcome plus metrics; the quotation mechanism also gets its regret
/// vector filled in.
pub fn evaluate(
    mechanism: Mechanism,
    users: &[UserProfile],
    model: &ServerCostModel,
    cfg: &ExperimentConfig,
    replicate: u64,
    sigma: f64,
) -> Result<(MechanismOutcome, RunMetrics)> {
    let schedule = PriceSchedule::new(cfg.start_price, cfg.price_step)?;
    let outcome = run_mechanism(mechanism, users, model, cfg, replicate, sigma)?;
    let mut metrics = run_metrics(&outcome, users, model, &schedule)?;
    if mechanism == Mechanism::Iiq {
        metrics.regret = regret_upper_bounds(&outcome, users, model, &schedule)?;
    }
    Ok((outcome, metrics))
}

fn population_for(cfg: &ExperimentConfig, replicate: u64, rho: f64) -> (Vec<UserProfile>, f64) {
    let mut users = sample_population(cfg, replicate);
    assign_informed(&mut users, rho, cfg.seed, replicate);
    let total: f64 = users.iter().map(|u| u.data).sum();
    (users, total)
}

#[allow(clippy::too_many_arguments)]
fn cell_row(
    mechanism: Mechanism,
    users: &[UserProfile],
    model: &ServerCostModel,
    cfg: &ExperimentConfig,
    replicate: u64,
    rho: Option<f64>,
    sigma: Option<f64>,
    strategy: Option<String>,
) -> RawRow {
    let result = evaluate(mechanism, users, model, cfg, replicate, sigma.unwrap_or(0.0));
    let (metrics, error) = match result {
        Ok((_, m)) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RawRow {
        mechanism,
        rho,
        sigma,
        strategy,
        axis: None,
        value: None,
        replicate,
        metrics,
        error,
    }
}

fn report(cfg: &ExperimentConfig, command: &str, rows: Vec<RawRow>) -> ExperimentReport {
    ExperimentReport {
        command: command.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        effective_config: cfg.emit(),
        rows,
    }
}

/// Welfare comparison across mechanisms and informed ratios.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    cfg.model_for(1.0)?;
    let n = cfg.runs.unwrap_or(DEFAULT_RUNS);
    let sigma0 = cfg.sigma.first().copied().unwrap_or(0.0);
    let rows: Vec<RawRow> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::new();
            for &rho in &cfg.rho {
                let (users, total) = population_for(cfg, r, rho);
                match cfg.model_for(total) {
                    Ok(model) => {
                        for &mech in &cfg.mechanisms {
                            let sigma =
                                if mech == Mechanism::OppNoisy { Some(sigma0) } else { None };
                            out.push(cell_row(
                                mech,
                                &users,
                                &model,
                                cfg,
                                r,
                                Some(rho),
                                sigma,
                                None,
                            ));
                        }
                    }
                    Err(e) => {
                        for &mech in &cfg.mechanisms {
                            out.push(RawRow {
                                mechanism: mech,
                                rho: Some(rho),
                                sigma: None,
                                strategy: None,
                                axis: None,
                                value: None,
                                replicate: r,
                                metrics: None,
                                error: Some(e.to_string()),
                            });
                        }
                    }
                }
            }
            out
        })
        .flatten_iter()
        .collect();
    Ok(report(cfg, "compare", rows))
}

/// Noise robustness: noisy personalized pricing across the sigma grid, with
/// exact personalized pricing and the (sigma-free) quotation alongside.
pub fn run_robustness(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.runs.unwrap_or(DEFAULT_RUNS);
    let rho = cfg.rho.first().copied().unwrap_or(1.0);
    let rows: Vec<RawRow> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::new();
            let (users, total) = population_for(cfg, r, rho);
            let model = match cfg.model_for(total) {
                Ok(m) => m,
                Err(e) => {
                    out.push(RawRow {
                        mechanism: Mechanism::Opp,
                        rho: Some(rho),
                        sigma: None,
                        strategy: None,
                        axis: None,
                        value: None,
                        replicate: r,
                        metrics: None,
                        error: Some(e.to_string()),
                    });
                    return out;
                }
            };
            out.push(cell_row(Mechanism::Opp, &users, &model, cfg, r, Some(rho), None, None));
            // The quotation has no sigma input path: one run, repeated
            // verbatim across the grid.
            let iiq = cell_row(Mechanism::Iiq, &users, &model, cfg, r, Some(rho), None, None);
            for &sigma in &cfg.sigma {
                out.push(cell_row(
                    Mechanism::OppNoisy,
                    &users,
                    &model,
                    cfg,
                    r,
                    Some(rho),
                    Some(sigma),
                    None,
                ));
                let mut dup = iiq.clone();
                dup.sigma = Some(sigma);
                out.push(dup);
            }
            out
        })
        .flatten_iter()
        .collect();
    Ok(report(cfg, "robustness", rows))
}

/// Oversupply handling: the quotation under all four strategies on matched
/// populations.
pub fn run_oversupply(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.runs.unwrap_or(DEFAULT_RUNS);
    let rho = cfg.rho.first().copied().unwrap_or(1.0);
    let rows: Vec<RawRow> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let (users, total) = population_for(cfg, r, rho);
            let mut out = Vec::new();
            for strategy in crate::quotation::OversupplyStrategy::ALL {
                let mut cell_cfg = cfg.clone();
                cell_cfg.strategy = strategy;
                match cfg.model_for(total) {
                    Ok(model) => {
                        let mut row = cell_row(
                            Mechanism::Iiq,
                            &users,
                            &model,
                            &cell_cfg,
                            r,
                            Some(rho),
                            None,
                            Some(strategy.name().to_string()),
                        );
                        row.strategy = Some(strategy.name().to_string());
                        out.push(row);
                    }
                    Err(e) => out.push(RawRow {
                        mechanism: Mechanism::Iiq,
                        rho: Some(rho),
                        sigma: None,
                        strategy: Some(strategy.name().to_string()),
                        axis: None,
                        value: None,
                        replicate: r,
                        metrics: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
            out
        })
        .flatten_iter()
        .collect();
    Ok(report(cfg, "oversupply", rows))
}

/// Convergence scaling: quotation round counts across the price-step grid
/// and the population-size grid.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n = cfg.runs.unwrap_or(DEFAULT_SWEEP_RUNS);
    let rho = cfg.rho.first().copied().unwrap_or(1.0);
    let mut rows: Vec<RawRow> = Vec::new();

    for &step in &cfg.step_grid {
        let mut cell_cfg = cfg.clone();
        cell_cfg.price_step = step;
        let cell: Vec<RawRow> = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let (users, total) = population_for(&cell_cfg, r, rho);
                let model = cell_cfg.model_for(total).expect("validated");
                let mut row = cell_row(
                    Mechanism::Iiq,
                    &users,
                    &model,
                    &cell_cfg,
                    r,
                    Some(rho),
                    None,
                    None,
                );
                row.axis = Some("price_step".to_string());
                row.value = Some(step.to_string());
                row
            })
            .collect();
        rows.extend(cell);
    }

    for &count in &cfg.users_grid {
        let cell_cfg = cfg.with_users(count);
        let cell: Vec<RawRow> = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let (users, total) = population_for(&cell_cfg, r, rho);
                let model = cell_cfg.model_for(total).expect("validated");
                let mut row = cell_row(
                    Mechanism::Iiq,
                    &users,
                    &model,
                    &cell_cfg,
                    r,
                    Some(rho),
                    None,
                    None,
                );
                row.axis = Some("users".to_string());
                row.value = Some(count.to_string());
                row
            })
            .collect();
        rows.extend(cell);
    }

    Ok(report(cfg, "convergence", rows))
}

fn apply_sweep_value(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    value: &str,
) -> Result<ExperimentConfig> {
    let mut next = cfg.clone();
    match axis {
        SweepAxis::PriceStep => {
            next.price_step = value
                .parse()
                .map_err(|_| Error::Config(format!("sweep value '{value}' is not a number")))?;
        }
        SweepAxis::Users => {
            next.users = value
                .parse()
                .map_err(|_| Error::Config(format!("sweep value '{value}' is not an integer")))?;
        }
        SweepAxis::PrivacyValue => next.privacy_value = value.parse()?,
        SweepAxis::AccuracySense => next.accuracy_sense = value.parse()?,
        SweepAxis::PrivacyElasticity => {
            next.privacy_elasticity = value
                .parse()
                .map_err(|_| Error::Config(format!("sweep value '{value}' is not a number")))?;
        }
        SweepAxis::AccuracyWeight => {
            next.accuracy_weight = value
                .parse()
                .map_err(|_| Error::Config(format!("sweep value '{value}' is not a number")))?;
        }
    }
    next.validate()?;
    Ok(next)
}

/// One-at-a-time parameter sweep over the configured axis.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let axis = cfg
        .sweep_axis
        .ok_or_else(|| Error::Config("sweep needs sweep_axis set".to_string()))?;
    if cfg.sweep_values.is_empty() {
        return Err(Error::Config("sweep needs nonempty sweep_values".to_string()));
    }
    let n = cfg.runs.unwrap_or(DEFAULT_SWEEP_RUNS);
    let rho = cfg.rho.first().copied().unwrap_or(1.0);
    let mut rows: Vec<RawRow> = Vec::new();

    for value in &cfg.sweep_values {
        let cell_cfg = apply_sweep_value(cfg, axis, value)?;
        let cell: Vec<RawRow> = (0..n as u64)
            .into_par_iter()
            .map(|r| {
                let (users, total) = population_for(&cell_cfg, r, rho);
                let mut out = Vec::new();
                match cell_cfg.model_for(total) {
                    Ok(model) => {
                        for &mech in &cell_cfg.mechanisms {
                            let mut row = cell_row(
                                mech,
                                &users,
                                &model,
                                &cell_cfg,
                                r,
                                Some(rho),
                                None,
                                None,
                            );
                            row.axis = Some(axis.name().to_string());
                            row.value = Some(value.clone());
                            out.push(row);
                        }
                    }
                    Err(e) => {
                        for &mech in &cell_cfg.mechanisms {
                            out.push(RawRow {
                                mechanism: mech,
                                rho: Some(rho),
                                sigma: None,
                                strategy: None,
                                axis: Some(axis.name().to_string()),
                                value: Some(value.clone()),
                                replicate: r,
                                metrics: None,
                                error: Some(e.to_string()),
                            });
                        }
                    }
                }
                out
            })
            .flatten_iter()
            .collect();
        rows.extend(cell);
    }

    Ok(report(cfg, "sweep", rows))
}

/// One full quotation run (replicate 0) for ledger inspection.
pub fn single_ledger(cfg: &ExperimentConfig) -> Result<(Vec<UserProfile>, crate::MarketState)> {
    cfg.validate()?;
    let rho = cfg.rho.first().copied().unwrap_or(1.0);
    let (users, total) = population_for(cfg, 0, rho);
    let model = cfg.model_for(total)?;
    let schedule = PriceSchedule::new(cfg.start_price, cfg.price_step)?;
    let qc = QuotationConfig::new(
        schedule,
        cfg.trade_unit,
        cfg.strategy,
        rng::derive(cfg.seed, 0, "quotation"),
    )?;
    let state = run_quotation(&model, &users, &qc)?;
    Ok((users, state))
}
