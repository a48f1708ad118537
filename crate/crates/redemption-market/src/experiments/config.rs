//! Experiment configuration: a strict line-oriented `key = value` format.
//!
//! Unknown keys are errors; missing keys fall back to the reference setup
//! (ten users with 6000 units each, privacy valuations uniform on
//! [0.5, 30], accuracy sensitivities uniform on [0, 5], logarithmic
//! privacy, opening quote 0.001 with step 0.001, unit trades, seed 42) and
//! are reported back as warnings. `emit` reproduces an equivalent file,
//! byte-stable, so effective configurations can be archived and re-run.
//!
//! Lists of numbers split on commas; sweep values split on semicolons so
//! that distribution specs like `uniform(0.5,30)` survive intact.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::Mechanism;
use crate::quotation::OversupplyStrategy;
use crate::ServerCostModel;

/// Scalar distribution family for population parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    Constant(f64),
    Uniform(f64, f64),
    /// Equal-weight mixture of two uniform components.
    Bimodal(f64, f64, f64, f64),
    Pareto { shape: f64, scale: f64 },
}

impl DistSpec {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DistSpec::Constant(v) => v,
            DistSpec::Uniform(lo, hi) => lo + rng.gen::<f64>() * (hi - lo),
            DistSpec::Bimodal(lo1, hi1, lo2, hi2) => {
                let pick: f64 = rng.gen();
                let v: f64 = rng.gen();
                if pick < 0.5 {
                    lo1 + v * (hi1 - lo1)
                } else {
                    lo2 + v * (hi2 - lo2)
                }
            }
            DistSpec::Pareto { shape, scale } => {
                let u: f64 = rng.gen();
                scale * (1.0 - u).max(f64::MIN_POSITIVE).powf(-1.0 / shape)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Constant(v) => v,
            DistSpec::Uniform(lo, hi) => 0.5 * (lo + hi),
            DistSpec::Bimodal(lo1, hi1, lo2, hi2) => 0.25 * (lo1 + hi1 + lo2 + hi2),
            DistSpec::Pareto { shape, scale } => {
                if shape > 1.0 {
                    shape * scale / (shape - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistSpec::Constant(v) => write!(f, "constant({v})"),
            DistSpec::Uniform(lo, hi) => write!(f, "uniform({lo},{hi})"),
            DistSpec::Bimodal(a, b, c, d) => write!(f, "bimodal({a},{b},{c},{d})"),
            DistSpec::Pareto { shape, scale } => write!(f, "pareto({shape},{scale})"),
        }
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(DistSpec::Constant(v));
        }
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => {
                let name = s[..i].trim().to_ascii_lowercase();
                let inner = &s[i + 1..s.len() - 1];
                let args: Vec<f64> = if inner.trim().is_empty() {
                    vec![]
                } else {
                    inner
                        .split(',')
                        .map(|p| {
                            p.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::Config(format!("bad number '{p}' in '{s}'")))
                        })
                        .collect::<Result<_>>()?
                };
                (name, args)
            }
            _ => (s.to_ascii_lowercase(), vec![]),
        };
        match (name.as_str(), args.as_slice()) {
            ("constant", [v]) => Ok(DistSpec::Constant(*v)),
            ("uniform", [lo, hi]) if hi > lo => Ok(DistSpec::Uniform(*lo, *hi)),
            // Default bimodal: equal-weight mixture of the low and high
            // ends of the reference privacy range.
            ("bimodal", []) => Ok(DistSpec::Bimodal(0.5, 5.0, 25.0, 30.0)),
            ("bimodal", [a, b, c, d]) => Ok(DistSpec::Bimodal(*a, *b, *c, *d)),
            ("pareto", [shape, scale]) if *shape > 0.0 && *scale > 0.0 => {
                Ok(DistSpec::Pareto { shape: *shape, scale: *scale })
            }
            _ => Err(Error::Config(format!("unrecognized distribution '{s}'"))),
        }
    }
}

/// Parameter axes the one-at-a-time sweep can walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    PriceStep,
    Users,
    PrivacyValue,
    AccuracySense,
    PrivacyElasticity,
    AccuracyWeight,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PriceStep => "price_step",
            SweepAxis::Users => "users",
            SweepAxis::PrivacyValue => "privacy_value",
            SweepAxis::AccuracySense => "accuracy_sense",
            SweepAxis::PrivacyElasticity => "privacy_elasticity",
            SweepAxis::AccuracyWeight => "accuracy_weight",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "price_step" => Ok(SweepAxis::PriceStep),
            "users" => Ok(SweepAxis::Users),
            "privacy_value" => Ok(SweepAxis::PrivacyValue),
            "accuracy_sense" => Ok(SweepAxis::AccuracySense),
            "privacy_elasticity" => Ok(SweepAxis::PrivacyElasticity),
            "accuracy_weight" => Ok(SweepAxis::AccuracyWeight),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Everything a Monte Carlo experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub users: usize,
    pub data_per_user: DistSpec,
    pub privacy_value: DistSpec,
    pub accuracy_sense: DistSpec,
    pub privacy_elasticity: f64,
    pub mechanisms: Vec<Mechanism>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Replications; `None` uses the per-command default.
    pub runs: Option<usize>,
    pub seed: u64,
    pub strategy: OversupplyStrategy,
    pub start_price: f64,
    pub price_step: f64,
    pub trade_unit: f64,
    pub accuracy_base: f64,
    pub accuracy_scale: f64,
    pub accuracy_rate: f64,
    pub accuracy_offset: f64,
    pub retrain_time: f64,
    pub accuracy_weight: f64,
    pub time_weight: f64,
    pub sweep_axis: Option<SweepAxis>,
    /// Raw sweep values; parsed against the axis when the sweep runs.
    pub sweep_values: Vec<String>,
    /// Price-step grid for the convergence experiment.
    pub step_grid: Vec<f64>,
    /// Population-size grid for the convergence experiment.
    pub users_grid: Vec<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            users: 10,
            data_per_user: DistSpec::Constant(6000.0),
            privacy_value: DistSpec::Uniform(0.5, 30.0),
            accuracy_sense: DistSpec::Uniform(0.0, 5.0),
            privacy_elasticity: 1.0,
            mechanisms: vec![
                Mechanism::Iiq,
                Mechanism::Ciq,
                Mechanism::Opp,
                Mechanism::Bsp,
                Mechanism::Dnr,
                Mechanism::Gdpr,
                Mechanism::Full,
            ],
            rho: vec![1.0],
            sigma: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
            runs: None,
            seed: 42,
            strategy: OversupplyStrategy::Proportional,
            start_price: 0.001,
            price_step: 0.001,
            trade_unit: 1.0,
            accuracy_base: std::f64::consts::E,
            accuracy_scale: 0.1,
            accuracy_rate: 3.33e-5,
            accuracy_offset: 0.0,
            retrain_time: 2.85e-4,
            accuracy_weight: 1500.0,
            time_weight: 1.0,
            sweep_axis: None,
            sweep_values: vec![],
            step_grid: vec![0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 0.0005, 0.0002, 0.0001],
            users_grid: vec![5, 10, 20, 50, 100],
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "users",
    "data_per_user",
    "privacy_value",
    "accuracy_sense",
    "privacy_elasticity",
    "mechanisms",
    "rho",
    "sigma",
    "runs",
    "seed",
    "strategy",
    "start_price",
    "price_step",
    "trade_unit",
    "accuracy_base",
    "accuracy_scale",
    "accuracy_rate",
    "accuracy_offset",
    "retrain_time",
    "accuracy_weight",
    "time_weight",
    "sweep_axis",
    "sweep_values",
    "step_grid",
    "users_grid",
    "out",
];

fn parse_num(key: &str, line: usize, v: &str) -> Result<f64> {
    if v.trim().eq_ignore_ascii_case("e") {
        return Ok(std::f64::consts::E);
    }
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("line {line}: key '{key}': bad number '{v}'")))
}

fn parse_num_list(key: &str, line: usize, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_num(key, line, p)).collect()
}

impl ExperimentConfig {
    /// Parse a config file body. Returns the config plus one warning per
    /// key that fell back to its default.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>)> {
        let mut cfg = ExperimentConfig::default();
        let mut present: Vec<&str> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected 'key = value'")));
            };
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line}: unknown key '{key}'")));
            }
            present.push(KEYS.iter().find(|k| **k == key).unwrap());
            match key {
                "users" => {
                    cfg.users = value.parse().map_err(|_| {
                        Error::Config(format!("line {line}: key 'users': bad integer '{value}'"))
                    })?;
                }
                "data_per_user" => cfg.data_per_user = value.parse()?,
                "privacy_value" => cfg.privacy_value = value.parse()?,
                "accuracy_sense" => cfg.accuracy_sense = value.parse()?,
                "privacy_elasticity" => {
                    cfg.privacy_elasticity = parse_num(key, line, value)?;
                }
                "mechanisms" => {
                    cfg.mechanisms = value
                        .split(',')
                        .map(|m| m.parse::<Mechanism>())
                        .collect::<Result<_>>()?;
                }
                "rho" => cfg.rho = parse_num_list(key, line, value)?,
                "sigma" => cfg.sigma = parse_num_list(key, line, value)?,
                "runs" => {
                    cfg.runs = Some(value.parse().map_err(|_| {
                        Error::Config(format!("line {line}: key 'runs': bad integer '{value}'"))
                    })?);
                }
                "seed" => {
                    cfg.seed = value.parse().map_err(|_| {
                        Error::Config(format!("line {line}: key 'seed': bad integer '{value}'"))
                    })?;
                }
                "strategy" => cfg.strategy = value.parse()?,
                "start_price" => cfg.start_price = parse_num(key, line, value)?,
                "price_step" => cfg.price_step = parse_num(key, line, value)?,
                "trade_unit" => cfg.trade_unit = parse_num(key, line, value)?,
                "accuracy_base" => cfg.accuracy_base = parse_num(key, line, value)?,
                "accuracy_scale" => cfg.accuracy_scale = parse_num(key, line, value)?,
                "accuracy_rate" => cfg.accuracy_rate = parse_num(key, line, value)?,
                "accuracy_offset" => cfg.accuracy_offset = parse_num(key, line, value)?,
                "retrain_time" => cfg.retrain_time = parse_num(key, line, value)?,
                "accuracy_weight" => cfg.accuracy_weight = parse_num(key, line, value)?,
                "time_weight" => cfg.time_weight = parse_num(key, line, value)?,
                "sweep_axis" => cfg.sweep_axis = Some(value.parse()?),
                "sweep_values" => {
                    cfg.sweep_values =
                        value.split(';').map(|v| v.trim().to_string()).collect();
                }
                "step_grid" => cfg.step_grid = parse_num_list(key, line, value)?,
                "users_grid" => {
                    cfg.users_grid = value
                        .split(',')
                        .map(|p| {
                            p.trim().parse::<usize>().map_err(|_| {
                                Error::Config(format!(
                                    "line {line}: key 'users_grid': bad integer '{p}'"
                                ))
                            })
                        })
                        .collect::<Result<_>>()?;
                }
                "out" => cfg.out = PathBuf::from(value),
                _ => unreachable!(),
            }
        }

        cfg.validate()?;
        let warnings: Vec<String> = KEYS
            .iter()
            .filter(|k| !present.contains(k))
            .map(|k| format!("key '{k}' not set, using default"))
            .collect();
        Ok((cfg, warnings))
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::Config("users must be >= 1".to_string()));
        }
        if self.rho.is_empty() || self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("rho grid must be nonempty within [0, 1]".to_string()));
        }
        if self.sigma.is_empty() || self.sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::Config("sigma grid must be nonempty and >= 0".to_string()));
        }
        if self.runs == Some(0) {
            return Err(Error::Config("runs must be >= 1".to_string()));
        }
        if !(self.start_price >= 0.0) || !(self.price_step > 0.0) || !(self.trade_unit > 0.0) {
            return Err(Error::Config(
                "start_price >= 0, price_step > 0 and trade_unit > 0 required".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.privacy_elasticity) {
            return Err(Error::Config("privacy_elasticity must lie in [0, 1]".to_string()));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::Config("mechanisms list must be nonempty".to_string()));
        }
        if self.step_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("step_grid entries must be > 0".to_string()));
        }
        if self.users_grid.iter().any(|u| *u == 0) {
            return Err(Error::Config("users_grid entries must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Canonical echo of the effective configuration; reparsing it yields
    /// an identical config.
    pub fn emit(&self) -> String {
        let mechanisms =
            self.mechanisms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",");
        let fmt_list = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        out.push_str(&format!("users = {}\n", self.users));
        out.push_str(&format!("data_per_user = {}\n", self.data_per_user));
        out.push_str(&format!("privacy_value = {}\n", self.privacy_value));
        out.push_str(&format!("accuracy_sense = {}\n", self.accuracy_sense));
        out.push_str(&format!("privacy_elasticity = {}\n", self.privacy_elasticity));
        out.push_str(&format!("mechanisms = {mechanisms}\n"));
        out.push_str(&format!("rho = {}\n", fmt_list(&self.rho)));
        out.push_str(&format!("sigma = {}\n", fmt_list(&self.sigma)));
        if let Some(runs) = self.runs {
            out.push_str(&format!("runs = {runs}\n"));
        }
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("strategy = {}\n", self.strategy.name()));
        out.push_str(&format!("start_price = {}\n", self.start_price));
        out.push_str(&format!("price_step = {}\n", self.price_step));
        out.push_str(&format!("trade_unit = {}\n", self.trade_unit));
        out.push_str(&format!("accuracy_base = {}\n", self.accuracy_base));
        out.push_str(&format!("accuracy_scale = {}\n", self.accuracy_scale));
        out.push_str(&format!("accuracy_rate = {}\n", self.accuracy_rate));
        out.push_str(&format!("accuracy_offset = {}\n", self.accuracy_offset));
        out.push_str(&format!("retrain_time = {}\n", self.retrain_time));
        out.push_str(&format!("accuracy_weight = {}\n", self.accuracy_weight));
        out.push_str(&format!("time_weight = {}\n", self.time_weight));
        if let Some(axis) = self.sweep_axis {
            out.push_str(&format!("sweep_axis = {}\n", axis.name()));
        }
        if !self.sweep_values.is_empty() {
            out.push_str(&format!("sweep_values = {}\n", self.sweep_values.join("; ")));
        }
        out.push_str(&format!("step_grid = {}\n", fmt_list(&self.step_grid)));
        out.push_str(&format!(
            "users_grid = {}\n",
            self.users_grid.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
        ));
        out.push_str(&format!("out = {}\n", self.out.display()));
        out
    }

    /// FNV-1a hash of the canonical echo, for provenance records.
    pub fn hash(&self) -> String {
        format!("{:016x}", crate::rng::label_hash(&self.emit()))
    }

    /// Cost model for a population holding `total_data` units overall.
    pub fn model_for(&self, total_data: f64) -> Result<ServerCostModel> {
        ServerCostModel::new(
            self.accuracy_base,
            self.accuracy_scale,
            self.accuracy_rate,
            self.accuracy_offset,
            self.retrain_time,
            self.accuracy_weight,
            self.time_weight,
            total_data,
        )
    }

    /// Clone with a different population size (convergence scaling).
    pub fn with_users(&self, users: usize) -> Self {
        let mut next = self.clone();
        next.users = users;
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_defaults_with_warnings() {
        let (cfg, warnings) = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(warnings.len(), KEYS.len());
        assert!(warnings.iter().any(|w| w.contains("'seed'")));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = ExperimentConfig::parse("users = 10\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn malformed_number_names_key_and_line() {
        let err = ExperimentConfig::parse("start_price = abc\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("start_price"), "{msg}");
    }

    #[test]
    fn emit_roundtrips() {
        let mut cfg = ExperimentConfig::default();
        cfg.runs = Some(77);
        cfg.sweep_axis = Some(SweepAxis::PrivacyValue);
        cfg.sweep_values = vec!["uniform(0.5,30)".to_string(), "bimodal".to_string()];
        cfg.rho = vec![0.0, 0.5, 1.0];
        let echo = cfg.emit();
        let (back, warnings) = ExperimentConfig::parse(&echo).unwrap();
        assert_eq!(cfg, back);
        assert!(warnings.is_empty());
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn dist_spec_parsing() {
        assert_eq!("5".parse::<DistSpec>().unwrap(), DistSpec::Constant(5.0));
        assert_eq!(
            "uniform(0.5, 30)".parse::<DistSpec>().unwrap(),
            DistSpec::Uniform(0.5, 30.0)
        );
        assert_eq!(
            "bimodal".parse::<DistSpec>().unwrap(),
            DistSpec::Bimodal(0.5, 5.0, 25.0, 30.0)
        );
        assert!(matches!(
            "pareto(2.5,4)".parse::<DistSpec>().unwrap(),
            DistSpec::Pareto { .. }
        ));
        assert!("uniform(3,1)".parse::<DistSpec>().is_err());
        assert!("gauss(0,1)".parse::<DistSpec>().is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# reference setup\n\nusers = 4 # small\n";
        let (cfg, _) = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.users, 4);
    }

    #[test]
    fn accuracy_base_accepts_e() {
        let (cfg, _) = ExperimentConfig::parse("accuracy_base = e\n").unwrap();
        assert_eq!(cfg.accuracy_base, std::f64::consts::E);
    }
}
