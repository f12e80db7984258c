//! On-disk formats written by the CLI. Every file starts with a schema line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use thzrefl_core::data::MeasurementSample;
use thzrefl_core::physics::{FreqUnit, LogLinear, MaterialClass, TrendParams};
use thzrefl_core::wftrend::{BandModel, EmpiricalModel, ModelTrend, TrendRun};
use thzrefl_core::Result as CoreResult;

use crate::Failure;

pub const TREND_SCHEMA: &str = "# thzrefl-trend v1";
pub const BANDS_SCHEMA: &str = "# thzrefl-bands v1";
pub const RT_SCHEMA: &str = "# thzrefl-rt-table v1";
pub const MANIFEST_SCHEMA: &str = "thzrefl-manifest v1";

pub const EPLD: &str = "sli-epld";
pub const EMPIRICAL: &str = "sli-empirical";

/// Fitted (or tabulated) log-linear trends plus what is needed to evaluate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFile {
    pub model: String,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<MaterialClass>,
    pub unit: FreqUnit,
    pub thickness_m: f64,
    pub train_rmse: Option<f64>,
    pub lines: Vec<LogLinear>,
}

pub enum Predictor {
    Epld { params: TrendParams, thickness_m: f64 },
    Empirical { model: EmpiricalModel, trend: ModelTrend },
}

impl Predictor {
    pub fn predict(&self, samples: &[MeasurementSample]) -> CoreResult<Vec<f64>> {
        match self {
            Predictor::Epld { params, thickness_m } => samples
                .iter()
                .map(|s| params.reflection(&s.incidence(*thickness_m)?))
                .collect(),
            Predictor::Empirical { model, trend } => trend.predict(model, samples),
        }
    }
}

impl TrendFile {
    pub fn from_epld(name: &str, params: &TrendParams, thickness_m: f64, train_rmse: Option<f64>) -> Self {
        Self {
            model: EPLD.into(),
            name: name.into(),
            class: Some(params.class),
            unit: params.unit,
            thickness_m,
            train_rmse,
            lines: params.components(),
        }
    }

    pub fn from_empirical(name: &str, run: &TrendRun, thickness_m: f64) -> Self {
        Self {
            model: EMPIRICAL.into(),
            name: name.into(),
            class: None,
            unit: run.trend.unit,
            thickness_m,
            train_rmse: Some(run.train_rmse),
            lines: run.trend.lines.clone(),
        }
    }

    pub fn to_text(&self) -> Result<String, Failure> {
        let body = toml::to_string(self).map_err(|e| Failure::Internal(e.into()))?;
        Ok(format!("{TREND_SCHEMA}\n{body}"))
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Ingestion)?;
        if text.lines().next() != Some(TREND_SCHEMA) {
            return Err(Failure::Ingestion(anyhow::anyhow!(
                "{}: not a trend file (expected first line '{TREND_SCHEMA}')",
                path.display()
            )));
        }
        toml::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(Failure::Ingestion)
    }

    pub fn predictor(&self, thickness_override: Option<f64>) -> Result<Predictor, Failure> {
        let thickness_m = thickness_override.unwrap_or(self.thickness_m);
        let bad = |msg: String| Failure::Ingestion(anyhow::anyhow!(msg));
        match self.model.as_str() {
            EPLD => {
                let class = self
                    .class
                    .ok_or_else(|| bad("sli-epld trend file without class".into()))?;
                let params =
                    TrendParams::from_components(class, self.unit, &self.lines).map_err(|e| bad(e.to_string()))?;
                Ok(Predictor::Epld { params, thickness_m })
            }
            EMPIRICAL => {
                let model = EmpiricalModel {
                    unit: self.unit,
                    thickness_m,
                };
                if self.lines.len() != model.param_count() {
                    return Err(bad(format!(
                        "sli-empirical trend needs 2 lines, found {}",
                        self.lines.len()
                    )));
                }
                Ok(Predictor::Empirical {
                    model,
                    trend: ModelTrend {
                        unit: self.unit,
                        lines: self.lines.clone(),
                    },
                })
            }
            other => Err(bad(format!("unknown model '{other}'"))),
        }
    }
}

/// One row per band: edges, solver outcome and fitted parameters (log10 and linear).
pub fn bands_table(run: &TrendRun, param_names: &[&str]) -> String {
    let mut out = format!(
        "{BANDS_SCHEMA}\nband,f_lo_ghz,f_hi_ghz,f_center_ghz,samples,converged,used,iterations,termination,rmse"
    );
    for n in param_names {
        let _ = write!(out, ",lg_{n}");
    }
    for n in param_names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for b in &run.bands {
        let term = b
            .termination
            .map(|t| format!("{t:?}").to_lowercase())
            .unwrap_or_else(|| "singular".into());
        let used = !run.excluded_bands.contains(&b.band.index);
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{:e}",
            b.band.index,
            b.band.f_lo,
            b.band.f_hi,
            b.band.f_center,
            b.samples,
            b.converged,
            used,
            b.iterations,
            term,
            b.rmse
        );
        for v in &b.log_params {
            let _ = write!(out, ",{v}");
        }
        for v in &b.log_params {
            let _ = write!(out, ",{:e}", 10f64.powf(*v));
        }
        out.push('\n');
    }
    out
}

/// Gamma over frequency (rows) x angle (columns).
pub fn rt_table(name: &str, thickness_m: f64, freqs: &[f64], angles: &[f64], gamma: &[f64]) -> String {
    let mut out =
        format!("{RT_SCHEMA}\n# material: {name}\n# thickness_m: {thickness_m}\n# polarization: TE\nfreq_ghz");
    for a in angles {
        let _ = write!(out, ",{a}");
    }
    out.push('\n');
    for (i, f) in freqs.iter().enumerate() {
        let _ = write!(out, "{f}");
        for j in 0..angles.len() {
            // gamma is angle-major
            let _ = write!(out, ",{}", gamma[j * freqs.len() + i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    pub bytes: usize,
}

/// Collects outputs of one run and writes them plus the manifest.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<OutputEntry>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Internal)?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn resolve(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        explicit
            .map(Path::to_owned)
            .unwrap_or_else(|| self.dir.join(default_name))
    }

    pub fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), Failure> {
        std::fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Internal)?;
        self.written.push(OutputEntry {
            path,
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_named(&mut self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        self.write(path.clone(), contents)?;
        Ok(path)
    }

    /// `manifest-<command>.json` with the resolved options and every file written.
    pub fn finish(self, command: &str, config: &impl Serialize, extra: serde_json::Value) -> Result<(), Failure> {
        let manifest = serde_json::json!({
            "schema": MANIFEST_SCHEMA,
            "tool": concat!("thzrefl ", env!("CARGO_PKG_VERSION")),
            "command": command,
            "config": config,
            "outputs": self.written,
            "details": extra,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Internal(e.into()))? + "\n";
        let path = self.dir.join(format!("manifest-{command}.json"));
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Internal)
    }
}
