//! Run configuration. Flags override config-file values, which override
//! defaults; `MPCFOREST_SEED` is consulted only when neither sets a seed.

use std::path::{Path, PathBuf};

use mpcforest_core::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "MPCFOREST_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mm,
    Mis,
    Color4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Tree,
    ForestUnion,
    /// Forest union with preferential attachment, so it has hubs.
    HubUnion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Edge-list file; when absent the graph is generated from `kind`, `n`
    /// and `alpha` with the run seed.
    pub input: Option<PathBuf>,
    pub kind: GraphKind,
    pub n: usize,
    pub alpha: u32,
    pub density: f64,
    pub out: PathBuf,
    pub delta: f64,
    pub seed: u64,
    pub lag_t: u32,
    pub s_param: Option<u32>,
    pub low_degree_threshold: Option<u64>,
    pub round_charge_sort: u32,
    pub round_charge_broadcast: u32,
    /// Record snapshots and run the invariant audits.
    pub audit: bool,
    pub retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Mm,
            input: None,
            kind: GraphKind::Tree,
            n: 1024,
            alpha: 2,
            density: 1.0,
            out: PathBuf::from("out"),
            delta: 0.5,
            seed: 0,
            lag_t: 4,
            s_param: None,
            low_degree_threshold: None,
            round_charge_sort: 2,
            round_charge_broadcast: 2,
            audit: false,
            retries: 3,
        }
    }
}

/// Every field optional; used for both the config file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartialConfig {
    pub algorithm: Option<Algorithm>,
    pub input: Option<PathBuf>,
    pub kind: Option<GraphKind>,
    pub n: Option<usize>,
    pub alpha: Option<u32>,
    pub density: Option<f64>,
    pub out: Option<PathBuf>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub lag_t: Option<u32>,
    pub s_param: Option<u32>,
    pub low_degree_threshold: Option<u64>,
    pub round_charge_sort: Option<u32>,
    pub round_charge_broadcast: Option<u32>,
    pub audit: Option<bool>,
    pub retries: Option<u32>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input { path: path.into(), message: e.to_string() })
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: PartialConfig) -> PartialConfig {
        PartialConfig {
            algorithm: self.algorithm.or(lower.algorithm),
            input: self.input.or(lower.input),
            kind: self.kind.or(lower.kind),
            n: self.n.or(lower.n),
            alpha: self.alpha.or(lower.alpha),
            density: self.density.or(lower.density),
            out: self.out.or(lower.out),
            delta: self.delta.or(lower.delta),
            seed: self.seed.or(lower.seed),
            lag_t: self.lag_t.or(lower.lag_t),
            s_param: self.s_param.or(lower.s_param),
            low_degree_threshold: self.low_degree_threshold.or(lower.low_degree_threshold),
            round_charge_sort: self.round_charge_sort.or(lower.round_charge_sort),
            round_charge_broadcast: self.round_charge_broadcast.or(lower.round_charge_broadcast),
            audit: self.audit.or(lower.audit),
            retries: self.retries.or(lower.retries),
        }
    }

    /// Fills the gaps from `env_seed` (seed only) and the defaults.
    pub fn resolve(self, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
        let d = RunConfig::default();
        let seed = match (self.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(text)) => text
                .trim()
                .parse()
                .map_err(|_| CliError::Invalid(format!("{SEED_ENV}={text:?} is not a 64-bit seed")))?,
            (None, None) => d.seed,
        };
        let cfg = RunConfig {
            algorithm: self.algorithm.unwrap_or(d.algorithm),
            input: self.input.or(d.input),
            kind: self.kind.unwrap_or(d.kind),
            n: self.n.unwrap_or(d.n),
            alpha: self.alpha.unwrap_or(d.alpha),
            density: self.density.unwrap_or(d.density),
            out: self.out.unwrap_or(d.out),
            delta: self.delta.unwrap_or(d.delta),
            seed,
            lag_t: self.lag_t.unwrap_or(d.lag_t),
            s_param: self.s_param.or(d.s_param),
            low_degree_threshold: self.low_degree_threshold.or(d.low_degree_threshold),
            round_charge_sort: self.round_charge_sort.unwrap_or(d.round_charge_sort),
            round_charge_broadcast: self.round_charge_broadcast.unwrap_or(d.round_charge_broadcast),
            audit: self.audit.unwrap_or(d.audit),
            retries: self.retries.unwrap_or(d.retries),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Invalid(m.into()));
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("--delta must lie in (0, 1)");
        }
        if self.input.is_none() && self.n == 0 {
            return bad("--n must be positive");
        }
        if self.alpha == 0 {
            return bad("--alpha must be positive");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density must lie in (0, 1]");
        }
        if self.lag_t == 0 {
            return bad("--lag-t must be positive");
        }
        if self.s_param == Some(0) {
            return bad("s must be positive");
        }
        Ok(())
    }

    /// The simulator configuration for a graph with `n` vertices and `m` edges.
    pub fn sim_config(&self, n: usize, m: usize) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::new(n as u64, m as u64, self.delta, self.seed)?.with_lag(self.lag_t)?;
        if let Some(s) = self.s_param {
            cfg = cfg.with_s_param(s)?;
        }
        cfg.round_charge_sort = self.round_charge_sort;
        cfg.round_charge_broadcast = self.round_charge_broadcast;
        cfg.validate()?;
        Ok(cfg.with_low_degree_threshold(self.low_degree_threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file: PartialConfig = serde_json::from_str(r#"{"seed": 7, "delta": 0.6, "algorithm": "mis"}"#).unwrap();
        let flags = PartialConfig { seed: Some(9), ..Default::default() };
        let cfg = flags.over(file.clone()).resolve(Some("11")).unwrap();
        assert_eq!((cfg.seed, cfg.delta, cfg.algorithm), (9, 0.6, Algorithm::Mis));
        let cfg = PartialConfig::default().over(file).resolve(Some("11")).unwrap();
        assert_eq!(cfg.seed, 7);
        let cfg = PartialConfig::default().resolve(Some("11")).unwrap();
        assert_eq!((cfg.seed, cfg.lag_t, cfg.retries), (11, 4, 3));
        assert_eq!(PartialConfig::default().resolve(None).unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PartialConfig::default().resolve(Some("x")).is_err());
        let bad = PartialConfig { delta: Some(1.0), ..Default::default() };
        assert_eq!(bad.resolve(None).unwrap_err().exit_code(), 2);
        assert!(serde_json::from_str::<PartialConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn kinds_use_cli_spelling() {
        let p: PartialConfig = serde_json::from_str(r#"{"kind": "forest-union", "algorithm": "color4"}"#).unwrap();
        assert_eq!((p.kind, p.algorithm), (Some(GraphKind::ForestUnion), Some(Algorithm::Color4)));
    }
}
