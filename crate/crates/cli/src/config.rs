//! Versioned JSON experiment configs.
//!
//! A config fully determines a run together with its seed: sweeps derive
//! per-point seeds with the counter scheme in `flab_core::seed`, so report
//! bytes are independent of execution order and thread count.

use flab_core::generators::{
    BushParams, HairbrushParams, RandomTwoEndsParams, WellSpacedParams,
};
use flab_core::report::Mode;
use flab_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Config {
    pub version: u32,
    pub experiment: String,
    #[serde(default = "default_mode")]
    pub mode: ModeArg,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default)]
    pub params: serde_json::Value,
    /// Parameter grids: key -> list of JSON values substituted into params.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<serde_json::Value>>,
}

fn default_mode() -> ModeArg {
    ModeArg::Measure
}

fn default_slack() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Assert,
    Search,
    Measure,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Assert => Mode::Assert,
            ModeArg::Search => Mode::Search,
            ModeArg::Measure => Mode::Measure,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let body = std::fs::read_to_string(path)?;
        let cfg: Config = serde_json::from_str(&body)?;
        if cfg.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Cartesian product of the sweep grids applied to `params`, in the
    /// deterministic order of the sorted keys.
    pub fn sweep_points(&self) -> Result<Vec<serde_json::Value>> {
        let mut points = vec![self.params.clone()];
        for (key, values) in &self.sweep {
            if values.is_empty() {
                return Err(Error::Config(format!("empty sweep list for {key}")));
            }
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in values {
                    let mut q = p.clone();
                    set_path(&mut q, key, v.clone())?;
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// Set a dotted path like `family.k` inside a JSON object.
fn set_path(obj: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = obj;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("sweep path {path} does not address an object")))?;
        if i == parts.len() - 1 {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Family constructions available from configs. Densities are given as
/// exponents: `lambda = delta^{lambda_exp}`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Bush {
        n: u8,
        k: u32,
        count: usize,
        lambda_exp: f64,
        eps1: f64,
        eps2: f64,
    },
    Hairbrush {
        k: u32,
        bristles: usize,
        lambda_exp: f64,
        eps1: f64,
        eps2: f64,
    },
    RandomTwoEnds {
        n: u8,
        k: u32,
        count: usize,
        lambda_exp: f64,
        eps1: f64,
        eps2: f64,
        #[serde(default)]
        height_aligned: bool,
    },
    WellSpaced {
        k: u32,
        dirs: u32,
        positions: u32,
    },
}

pub fn lambda_of(k: u32, lambda_exp: f64) -> f64 {
    (-(k as f64) * lambda_exp).exp2()
}

impl FamilySpec {
    pub fn k(&self) -> u32 {
        match self {
            FamilySpec::Bush { k, .. }
            | FamilySpec::Hairbrush { k, .. }
            | FamilySpec::RandomTwoEnds { k, .. }
            | FamilySpec::WellSpaced { k, .. } => *k,
        }
    }

    pub fn build(&self, seed: u64) -> Result<flab_core::tubes::ShadedFamily> {
        match self {
            FamilySpec::Bush {
                n,
                k,
                count,
                lambda_exp,
                eps1,
                eps2,
            } => flab_core::generators::gen_bush(
                &BushParams {
                    n: *n,
                    k: *k,
                    count: *count,
                    lambda: lambda_of(*k, *lambda_exp),
                    eps1: *eps1,
                    eps2: *eps2,
                },
                seed,
            ),
            FamilySpec::Hairbrush {
                k,
                bristles,
                lambda_exp,
                eps1,
                eps2,
            } => flab_core::generators::gen_hairbrush(
                &HairbrushParams {
                    k: *k,
                    bristles: *bristles,
                    lambda: lambda_of(*k, *lambda_exp),
                    eps1: *eps1,
                    eps2: *eps2,
                },
                seed,
            ),
            FamilySpec::RandomTwoEnds {
                n,
                k,
                count,
                lambda_exp,
                eps1,
                eps2,
                height_aligned,
            } => flab_core::generators::gen_random_two_ends(
                &RandomTwoEndsParams {
                    n: *n,
                    k: *k,
                    count: *count,
                    lambda: lambda_of(*k, *lambda_exp),
                    eps1: *eps1,
                    eps2: *eps2,
                    height_aligned: *height_aligned,
                },
                seed,
            ),
            FamilySpec::WellSpaced { .. } => Err(Error::Config(
                "well-spaced families are line sets; use the well_spaced_census experiment".into(),
            )),
        }
    }

    pub fn parse(v: &serde_json::Value) -> Result<FamilySpec> {
        Ok(serde_json::from_value(v.clone())?)
    }
}
