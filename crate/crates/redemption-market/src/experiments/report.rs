//! Raw rows, aggregation, and file emission.
//!
//! Every experiment produces one `RawRow` per (cell, replicate). The same
//! CSV schema serves all experiment families; columns that do not apply
//! stay empty. Aggregation groups rows by cell and reports mean, sample
//! standard deviation and a 95% normal-approximation half width per
//! metric. Reruns with the same configuration are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::metrics::RunMetrics;
use crate::outcome::Mechanism;

/// One replicate of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub mechanism: Mechanism,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub strategy: Option<String>,
    pub axis: Option<String>,
    pub value: Option<String>,
    pub replicate: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

impl RawRow {
    /// Cell identity: everything but the replicate and the results.
    pub fn cell_key(&self) -> String {
        format!(
            "mech={}|rho={}|sigma={}|strategy={}|axis={}|value={}",
            self.mechanism,
            self.rho.map_or(String::new(), |v| v.to_string()),
            self.sigma.map_or(String::new(), |v| v.to_string()),
            self.strategy.clone().unwrap_or_default(),
            self.axis.clone().unwrap_or_default(),
            self.value.clone().unwrap_or_default(),
        )
    }
}

const METRIC_COLUMNS: &[&str] = &[
    "server_payoff",
    "users_payoff",
    "users_gross",
    "welfare",
    "transfer_free_welfare",
    "jain",
    "cv",
    "min_max_ratio",
    "regret_total",
    "regret_max",
    "fulfillment",
    "rounds",
];

fn metric_values(m: &RunMetrics) -> Vec<f64> {
    let regret_total: f64 = m.regret.iter().sum();
    let regret_max = m.regret.iter().cloned().fold(0.0f64, f64::max);
    vec![
        m.server_payoff,
        m.users_payoff,
        m.users_gross,
        m.welfare,
        m.transfer_free_welfare,
        m.jain,
        m.cv,
        m.min_max_ratio,
        regret_total,
        regret_max,
        m.fulfillment,
        m.rounds as f64,
    ]
}

/// Full result of one experiment command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub effective_config: String,
    pub rows: Vec<RawRow>,
}

impl ExperimentReport {
    /// CSV with one row per replicate, stable column order, LF endings.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from(
            "mechanism,rho,sigma,strategy,axis,value,replicate,server_payoff,users_payoff,\
             users_gross,welfare,transfer_free_welfare,jain,cv,min_max_ratio,regret_total,\
             regret_max,fulfillment,rounds,error\n",
        );
        for r in &self.rows {
            let opt = |v: &Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let opta = |v: &Option<String>| v.clone().unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.mechanism,
                opt(&r.rho),
                opt(&r.sigma),
                opta(&r.strategy),
                opta(&r.axis),
                opta(&r.value),
                r.replicate
            ));
            match &r.metrics {
                Some(m) => {
                    for v in metric_values(m) {
                        out.push_str(&format!(",{v}"));
                    }
                }
                None => out.push_str(&",".repeat(METRIC_COLUMNS.len())),
            }
            out.push(',');
            if let Some(e) = &r.error {
                out.push_str(&e.replace([',', '\n'], ";"));
            }
            out.push('\n');
        }
        out
    }

    /// Per-cell aggregates as JSON.
    pub fn summary_json(&self) -> Value {
        let mut cells: BTreeMap<String, Vec<&RawRow>> = BTreeMap::new();
        for r in &self.rows {
            cells.entry(r.cell_key()).or_default().push(r);
        }
        let cell_values: Vec<Value> = cells
            .iter()
            .map(|(key, rows)| {
                let ok: Vec<&&RawRow> = rows.iter().filter(|r| r.metrics.is_some()).collect();
                let n = ok.len();
                let mut metrics = serde_json::Map::new();
                for (ci, name) in METRIC_COLUMNS.iter().enumerate() {
                    let xs: Vec<f64> = ok
                        .iter()
                        .map(|r| metric_values(r.metrics.as_ref().unwrap())[ci])
                        .collect();
                    let mean = if n > 0 { xs.iter().sum::<f64>() / n as f64 } else { f64::NAN };
                    let sd = if n > 1 {
                        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                            / (n as f64 - 1.0))
                            .sqrt()
                    } else {
                        0.0
                    };
                    let ci95 =
                        if n > 0 { 1.96 * sd / (n as f64).sqrt() } else { f64::NAN };
                    metrics.insert(
                        name.to_string(),
                        json!({
                            "mean": Value::from(mean),
                            "sd": Value::from(sd),
                            "ci95": Value::from(ci95),
                        }),
                    );
                }
                let first = rows[0];
                json!({
                    "cell": key,
                    "mechanism": first.mechanism.to_string(),
                    "rho": first.rho,
                    "sigma": first.sigma,
                    "strategy": first.strategy,
                    "axis": first.axis,
                    "value": first.value,
                    "n": n,
                    "errors": rows.len() - n,
                    "metrics": Value::Object(metrics),
                })
            })
            .collect();
        json!({
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "cells": cell_values,
        })
    }

    pub fn provenance_json(&self) -> Value {
        json!({
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "version": env!("CARGO_PKG_VERSION"),
            "rows": self.rows.len(),
        })
    }

    /// Write `raw.csv`, `summary.json`, `provenance.json` and the effective
    /// config echo into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            ("raw.csv", self.raw_csv()),
            ("summary.json", format!("{:#}\n", self.summary_json())),
            ("provenance.json", format!("{:#}\n", self.provenance_json())),
            ("effective.cfg", self.effective_config.clone()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Mean of a metric over the rows a filter selects; NaN when empty.
    pub fn mean_where<F>(&self, metric: &str, filter: F) -> f64
    where
        F: Fn(&RawRow) -> bool,
    {
        let ci = METRIC_COLUMNS.iter().position(|c| *c == metric).expect("known metric");
        let xs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.metrics.is_some() && filter(r))
            .map(|r| metric_values(r.metrics.as_ref().unwrap())[ci])
            .collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    }
}
