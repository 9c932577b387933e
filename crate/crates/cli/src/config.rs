//! Run configuration: one TOML file per run, with `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use biphoton::wavepacket::SpectralWindow;
use biphoton::{
    dressed_modes, DetectionConfig, EtalonFilter, EtalonSpec, FitModel, LossBudget, ModulationMask, SystemParams,
    TimeGridConfig,
};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemParams,
    pub grid: TimeGridConfig,
    pub spectrum: SpectralWindow,
    /// Etalons in the anti-Stokes path, applied in order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub filter: Vec<EtalonSpec>,
    pub detection: Option<DetectionConfig>,
    pub fit: Option<FitModel>,
    pub mask: Option<ModulationMask>,
    pub modulate: ModulateSettings,
    pub budget: BudgetSettings,
    pub sweep: SweepSettings,
    pub output: OutputSettings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulateSettings {
    /// Trigger delay in ns; overridden by `fiber_length_m` when that is set.
    pub delay_ns: f64,
    pub fiber_length_m: Option<f64>,
    pub group_index: Option<f64>,
    /// Two-column CSV (`t_ns,value`) of custom mask samples on a uniform grid.
    pub mask_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSettings {
    /// Detected coincidence rate, s⁻¹.
    pub detected_rate: f64,
    /// Efficiency chain; the narrowband setup's chain when empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<biphoton::photostatistics::LossFactor>,
}

impl Default for BudgetSettings {
    fn default() -> Self {
        Self {
            detected_rate: 2.18,
            factors: Vec::new(),
        }
    }
}

impl BudgetSettings {
    pub fn chain(&self) -> LossBudget {
        if self.factors.is_empty() {
            LossBudget::narrowband_setup()
        } else {
            LossBudget {
                factors: self.factors.clone(),
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    #[default]
    DeltaC,
    OmegaC,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub parameter: SweepParameter,
    /// Explicit values; when empty, `steps` evenly spaced values over [start, stop].
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::DeltaC,
            values: Vec::new(),
            start: 0.0,
            stop: 60.0,
            steps: 61,
        }
    }
}

impl SweepSettings {
    pub fn points(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    StructuredText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Format of reports (dressed, fit, budget); series are always CSV.
    pub format: OutputFormat,
    /// Adds a wall-clock line to file headers, which breaks byte-identical reruns.
    pub timestamps: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            timestamps: false,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Invalid(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section before anything is computed.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.system.validate()?;
        self.grid.validate()?;
        self.filters()?;
        if let Some(d) = &self.detection {
            d.validate()?;
        }
        if let Some(m) = &self.mask {
            m.validate()?;
        }
        if let Some(f) = &self.fit {
            if f.max_iterations == 0 {
                bail!(Invalid("fit.max_iterations must be positive".into()));
            }
        }
        self.budget.chain().validate()?;
        if self.sweep.values.is_empty() && self.sweep.steps == 0 {
            bail!(Invalid("sweep.steps must be positive".into()));
        }
        if let (Some(l), g) = (self.modulate.fiber_length_m, self.modulate.group_index.unwrap_or(1.468)) {
            if !(l >= 0.0) || !(g >= 1.0) {
                bail!(Invalid(
                    "fiber length must be non-negative and group index at least 1".into()
                ));
            }
        }
        Ok(())
    }

    pub fn filters(&self) -> anyhow::Result<Vec<EtalonFilter>> {
        if self.filter.is_empty() {
            return Ok(Vec::new());
        }
        let modes = dressed_modes(&self.system)?;
        Ok(self
            .filter
            .iter()
            .map(|f| f.resolve(&modes, self.system.si_gamma13))
            .collect::<biphoton::Result<_>>()?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

/// `section.key=value`; the value is parsed as a TOML literal, falling back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Invalid(format!("override `{spec}` is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut node = table;
    for k in parents {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Invalid(format!("override `{spec}`: `{k}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
