//! Experiment configuration.
//!
//! A config is a TOML document with the sections `[model]`, `[protocol]`,
//! `[integrator]`, `[analysis]`, `[hopf]`, `[sweep]` and `[output]`. Every
//! section is optional and every key has a default; unknown keys are errors.
//!
//! Layers are merged key by key in this order, later wins:
//!
//! 1. built-in defaults,
//! 2. a named preset,
//! 3. the config file,
//! 4. a flat model-parameter file,
//! 5. `--set section.key=value` overrides,
//! 6. dedicated command-line flags (`--out`, `--workers`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::analysis::AnalysisConfig;
use crate::dde::IntegratorConfig;
use crate::error::{Error, Result};
use crate::forcing::InfusionProtocol;
use crate::linear::CurveOptions;
use crate::model::ModelParams;
use crate::simulate::DEFAULT_INITIAL;
use crate::sweep::{GridSpec, SweepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub dt: f64,
    /// Total span (min); derived from the analysis window when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
    /// Constant initial glucose (mg/dl).
    pub initial_glucose: f64,
    /// Constant initial insulin (uU/ml).
    pub initial_insulin: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            dt: IntegratorConfig::DEFAULT_DT,
            span: None,
            initial_glucose: DEFAULT_INITIAL.0,
            initial_insulin: DEFAULT_INITIAL.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfSection {
    /// Constant infusion rates for which curves are computed.
    pub g_in: Vec<f64>,
    pub samples: usize,
    pub k: i32,
    pub l: i32,
    pub max_total_delay: f64,
    /// Add the perturbation approximation as an extra column.
    pub approx: bool,
}

impl Default for HopfSection {
    fn default() -> Self {
        let c = CurveOptions::default();
        HopfSection {
            g_in: vec![0.0],
            samples: c.samples,
            k: c.branch.0,
            l: c.branch.1,
            max_total_delay: c.max_total_delay,
            approx: false,
        }
    }
}

impl HopfSection {
    pub fn curve_options(&self) -> CurveOptions {
        CurveOptions {
            samples: self.samples,
            branch: (self.k, self.l),
            max_total_delay: self.max_total_delay,
            ..CurveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write an SVG heatmap next to sweep CSVs.
    pub svg: bool,
    /// Keep every n-th grid node in time series output.
    pub stride: usize,
    /// Sweep worker threads; 0 picks the number of cores.
    pub workers: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            svg: true,
            stride: 20,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default = "InfusionProtocol::fasting")]
    pub protocol: InfusionProtocol,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub hopf: HopfSection,
    #[serde(default = "GridSpec::resonance_default")]
    pub sweep: GridSpec,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelParams::default(),
            protocol: InfusionProtocol::fasting(),
            integrator: IntegratorSection::default(),
            analysis: AnalysisConfig::default(),
            hopf: HopfSection::default(),
            sweep: GridSpec::resonance_default(),
            output: OutputSection::default(),
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = ["fig1b", "fig1c", "fig1d", "fig1e", "fig2", "fig3", "fig4", "fig5"];

/// Overrides of a named preset, as a TOML table.
pub fn preset(name: &str) -> Result<Table> {
    let text = match name {
        "fig1b" => "[protocol]\nkind = \"constant\"\ng_max = 0.0\n",
        "fig1c" => "[protocol]\nkind = \"constant\"\ng_max = 1.35\n",
        "fig1d" => "[protocol]\nkind = \"on-off\"\ng_max = 1.35\nt_period = 60.0\nt_on = 30.0\n",
        "fig1e" => "[protocol]\nkind = \"on-off\"\ng_max = 24.3\nt_period = 180.0\nt_on = 5.0\n",
        "fig2" => {
            "[sweep]\nkind = \"fasting\"\nx = { min = 0.5, max = 20.0, count = 40 }\ny = { min = 0.5, max = 60.0, count = 40 }\n"
        }
        "fig3" => "[hopf]\ng_in = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6]\napprox = true\n",
        "fig4" => {
            "[sweep]\nkind = \"resonance\"\nx = { min = 30.0, max = 420.0, count = 64 }\ny = { min = 0.0, max = 2.5, count = 64 }\n"
        }
        "fig5" => {
            "[sweep]\nkind = \"duration\"\nperiod = 180.0\nx = { min = 5.0, max = 90.0, count = 64 }\ny = { min = 0.05, max = 1.0, count = 64 }\n"
        }
        _ => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{name}`; expected one of {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(text.parse::<Table>().expect("preset tables are valid TOML"))
}

/// Recursively merges `over` into `base`; tables merge, other values replace.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses a `path.to.key=value` override. The value is read as TOML and
/// falls back to a plain string.
pub fn parse_set(expr: &str) -> Result<Table> {
    let (path, raw) = expr
        .split_once('=')
        .ok_or_else(|| Error::config(expr, "expected key=value"))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::config(path, "empty key segment"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut out = Table::new();
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = &mut out;
    for k in &keys[..keys.len() - 1] {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("fresh table");
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(out)
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    text.parse::<Table>()
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

/// Reads a flat parameter file (one key per model symbol).
pub fn read_param_file(path: &Path) -> Result<ModelParams> {
    let table = read_table(path)?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(Error::config(format!("{}:{k}", path.display()), "parameter files are flat"));
    }
    ModelParams::deserialize(Value::Table(table))
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

/// Inputs of [`resolve`], lowest precedence first.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    pub params_file: Option<PathBuf>,
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Builds and validates the effective configuration.
pub fn resolve(layers: &Layers) -> Result<ExperimentConfig> {
    let mut table = Table::new();
    if let Some(name) = &layers.preset {
        merge(&mut table, preset(name)?);
    }
    if let Some(path) = &layers.file {
        merge(&mut table, read_table(path)?);
    }
    if let Some(path) = &layers.params_file {
        let params = read_param_file(path)?;
        let mut model = Table::new();
        let flat = Value::try_from(params).map_err(|e| Error::config("model", e.to_string()))?;
        // only keys present in the file override
        let given = read_table(path)?;
        if let Value::Table(all) = flat {
            for (k, v) in all {
                if given.contains_key(&k) {
                    model.insert(k, v);
                }
            }
        }
        let mut wrap = Table::new();
        wrap.insert("model".into(), Value::Table(model));
        merge(&mut table, wrap);
    }
    for s in &layers.sets {
        merge(&mut table, parse_set(s)?);
    }
    let mut cfg = from_table(table)?;
    if let Some(out) = &layers.out {
        cfg.output.dir = out.clone();
    }
    if let Some(w) = layers.workers {
        cfg.output.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Deserializes a merged table, reporting the offending key path.
pub fn from_table(table: Table) -> Result<ExperimentConfig> {
    let text = toml::to_string(&table).map_err(|e| Error::config("<merged>", e.to_string()))?;
    toml::from_str::<ExperimentConfig>(&text).map_err(|e| {
        let msg = e.message().to_string();
        let path = e
            .span()
            .and_then(|sp| key_path_at(&text, sp.start))
            .unwrap_or_else(|| "<config>".to_string());
        Error::config(path, msg)
    })
}

// Best-effort key path for an error offset in serialized TOML.
fn key_path_at(text: &str, offset: usize) -> Option<String> {
    let mut section = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let end = pos + line.len();
        let trimmed = line.trim();
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            section = trimmed.trim_matches(|c| c == '[' || c == ']').to_string();
        }
        if offset >= pos && offset <= end {
            let key = trimmed.split('=').next().map(str::trim).filter(|k| !k.starts_with('['));
            return Some(match (section.is_empty(), key) {
                (true, Some(k)) => k.to_string(),
                (false, Some(k)) => format!("{section}.{k}"),
                (false, None) => section,
                (true, None) => return None,
            });
        }
        pos = end + 1;
    }
    None
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("{path}.{name}"), reason),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(at("model"))?;
        self.protocol.validate().map_err(at("protocol"))?;
        self.analysis.validate().map_err(at("analysis"))?;
        self.sweep.validate().map_err(at("sweep"))?;
        let ig = &self.integrator;
        IntegratorConfig::new(ig.dt, ig.span.unwrap_or(1.0))
            .validate(&self.model.delays())
            .map_err(at("integrator"))?;
        if !(ig.initial_glucose >= 0.0 && ig.initial_insulin >= 0.0) {
            return Err(Error::config("integrator.initial_*", "initial history must be nonnegative"));
        }
        if self.hopf.g_in.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::config("hopf.g_in", "rates must be >= 0"));
        }
        if self.hopf.samples < 2 {
            return Err(Error::config("hopf.samples", "need at least 2"));
        }
        if self.output.stride == 0 {
            return Err(Error::config("output.stride", "must be >= 1"));
        }
        Ok(())
    }

    /// Span used for simulations: explicit, or transient plus analysis window.
    pub fn span(&self) -> f64 {
        self.integrator
            .span
            .unwrap_or_else(|| self.analysis.required_span(&self.protocol, self.model.delays()))
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig::new(self.integrator.dt, self.span())
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            dt: self.integrator.dt,
            analysis: self.analysis,
            workers: self.output.workers,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
