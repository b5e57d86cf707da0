//! Run configuration: one JSON file per invocation.

use std::path::Path;

use resonance_core::mapmodel::ParamName;
use resonance_core::symbolic::gcd;
use resonance_core::{
    Error, ExampleParams, GridSpec, MapSpec, ParamPlane, ScanSettings, SearchBox, ShrinkSettings, SymbolWord, UnfoldSettings,
    VerifySettings,
};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub map: Option<serde_json::Value>,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub cycle: Option<CycleBlock>,
    #[serde(default)]
    pub shrink: Option<ShrinkBlock>,
    #[serde(default)]
    pub unfold: Option<UnfoldBlock>,
    #[serde(default)]
    pub verify: Option<VerifySettings>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub grid: GridSpec,
    #[serde(default)]
    pub settings: ScanSettings,
}

/// A word as a string of `L`/`R`, or by its rotational parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WordSpec {
    Rotational { l: usize, m: usize, n: usize },
    Symbols(String),
}

impl WordSpec {
    pub fn word(&self) -> Result<SymbolWord, Failure> {
        match self {
            WordSpec::Rotational { l, m, n } => Ok(SymbolWord::rotational(*l, *m, *n)?),
            WordSpec::Symbols(s) => Ok(s.parse::<SymbolWord>()?),
        }
    }

    /// The word with rotational parameters attached, recovered from its
    /// symbols when given as a string.
    pub fn rotational_word(&self) -> Result<SymbolWord, Failure> {
        let w = self.word()?;
        if w.rotational_params().is_some() {
            return Ok(w);
        }
        let n = w.len();
        let l = w.count(resonance_core::Symbol::L);
        for m in 1..n {
            if gcd(m as u64, n as u64) != 1 || l == 0 || l == n {
                continue;
            }
            let r = SymbolWord::rotational(l, m, n)?;
            if r == w {
                return Ok(r);
            }
        }
        Err(Failure::config(format!("word {w} is not a rotational word")))
    }
}

fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    50
}
fn default_tol_zero() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleBlock {
    pub word: WordSpec,
    /// Newton seed; defaults to the cycle of the linear part
    #[serde(default)]
    pub guess: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_zero")]
    pub tol_zero: f64,
}

fn default_x() -> ParamName {
    ParamName::Omega
}
fn default_y() -> ParamName {
    ParamName::SR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkBlock {
    pub word: WordSpec,
    #[serde(default = "default_x")]
    pub x: ParamName,
    #[serde(default = "default_y")]
    pub y: ParamName,
    #[serde(rename = "box")]
    pub search_box: SearchBox,
    #[serde(default)]
    pub settings: ShrinkSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnfoldBlock {
    pub mu: f64,
    /// known shrinking-point location; skips the search when given
    #[serde(default)]
    pub location: Option<[f64; 2]>,
    #[serde(default)]
    pub settings: UnfoldSettings,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<(Self, serde_json::Value), Failure> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))?;
        let cfg: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| Failure::config(format!("config: {e}")))?;
        Ok((cfg, raw))
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn map_spec(&self) -> Result<MapSpec, Failure> {
        let v = self.map.as_ref().ok_or_else(|| Failure::config("config: missing `map` block"))?;
        MapSpec::from_value(v).map_err(|e| Failure::config(format!("config: map: {e}")))
    }

    pub fn family_params(&self) -> Result<ExampleParams, Failure> {
        self.map_spec()?.example_params().ok_or_else(|| Failure::config("config: this command needs a `family` map"))
    }

    pub fn plane(&self, block: &ShrinkBlock) -> Result<ParamPlane, Failure> {
        Ok(ParamPlane::new(self.family_params()?, block.x, block.y))
    }

    pub fn block<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
        field.as_ref().ok_or_else(|| Failure::config(format!("config: missing `{name}` block")))
    }
}

impl CycleBlock {
    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.tol > 0.0) || !(self.tol_zero > 0.0) || self.max_iter == 0 {
            return Err(Failure::config("config: cycle tolerances must be positive and max_iter nonzero"));
        }
        Ok(())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from_core(e)
    }
}
