//! Error metrics and model comparison reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::MeasurementSample;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "# thzrefl-report v1";
pub const CDF_SCHEMA: &str = "# thzrefl-cdf v1";

pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Err(Error::Empty("rmse of empty set"));
    }
    let sse: f64 = predicted.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Empirical CDF of absolute errors, plotted at `(i - 0.5) / m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    pub errors: Vec<f64>,
    pub probabilities: Vec<f64>,
}

pub fn abs_error_cdf(predicted: &[f64], observed: &[f64]) -> Result<ErrorCdf> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Err(Error::Empty("cdf of empty set"));
    }
    let mut errors: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| (p - o).abs()).collect();
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::Evaluation("NaN error value".into()));
    }
    errors.sort_by(f64::total_cmp);
    let m = errors.len() as f64;
    let probabilities = (1..=errors.len()).map(|i| (i as f64 - 0.5) / m).collect();
    Ok(ErrorCdf { errors, probabilities })
}

impl ErrorCdf {
    /// Smallest error `e_(k)` with `k = ceil(level * m)`.
    pub fn bound(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::Domain(format!(
                "confidence level must be in (0, 1], got {level}"
            )));
        }
        let m = self.errors.len();
        let k = ((level * m as f64) - 1e-9).ceil().max(1.0) as usize;
        Ok(self.errors[k.min(m) - 1])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::Io {
            path: "<cdf>".into(),
            err: e,
        };
        writeln!(w, "{CDF_SCHEMA}").map_err(io)?;
        writeln!(w, "abs_error,probability").map_err(io)?;
        for (e, p) in self.errors.iter().zip(&self.probabilities) {
            writeln!(w, "{e:.12e},{p:.12}").map_err(io)?;
        }
        Ok(())
    }
}

pub fn confidence_bound(predicted: &[f64], observed: &[f64], level: f64) -> Result<f64> {
    abs_error_cdf(predicted, observed)?.bound(level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleScore {
    pub theta_deg: f64,
    pub samples: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    /// `None` when the predictor failed; see `error`.
    pub rmse: Option<f64>,
    pub bound: Option<f64>,
    pub per_angle: Vec<AngleScore>,
    pub error: Option<String>,
    #[serde(skip)]
    pub predictions: Vec<f64>,
    #[serde(skip)]
    pub cdf: Option<ErrorCdf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset: String,
    pub samples: usize,
    /// Confidence level of `bound`, taken as the ceiling order statistic.
    pub level: f64,
    pub models: Vec<ModelScore>,
}

pub type Predictor<'a> = &'a dyn Fn(&[MeasurementSample]) -> Result<Vec<f64>>;

fn score(name: &str, test: &[MeasurementSample], observed: &[f64], pred: Vec<f64>, level: f64) -> Result<ModelScore> {
    if pred.len() != observed.len() {
        return Err(Error::LengthMismatch(pred.len(), observed.len()));
    }
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(Error::Evaluation("non-finite prediction".into()));
    }
    let cdf = abs_error_cdf(&pred, observed)?;
    let mut by_angle: BTreeMap<i64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((s, p), o) in test.iter().zip(&pred).zip(observed) {
        let e = by_angle
            .entry((s.theta_deg * 1e6).round() as i64)
            .or_insert_with(|| (s.theta_deg, Vec::new(), Vec::new()));
        e.1.push(*p);
        e.2.push(*o);
    }
    let per_angle = by_angle
        .into_values()
        .map(|(theta_deg, p, o)| {
            Ok(AngleScore {
                theta_deg,
                samples: p.len(),
                rmse: rmse(&p, &o)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ModelScore {
        model: name.to_owned(),
        rmse: Some(rmse(&pred, observed)?),
        bound: Some(cdf.bound(level)?),
        per_angle,
        error: None,
        predictions: pred,
        cdf: Some(cdf),
    })
}

/// Scores each predictor on the same `test` samples, in input order. A
/// predictor that fails is reported with its error and no metrics.
pub fn compare_models<'a>(
    dataset: &str,
    test: &[MeasurementSample],
    entries: impl IntoIterator<Item = (&'a str, Predictor<'a>)>,
    level: f64,
) -> Result<ComparisonReport> {
    if test.is_empty() {
        return Err(Error::Empty("no test samples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let observed: Vec<f64> = test.iter().map(|s| s.gamma).collect();
    let mut models = Vec::new();
    for (name, predict) in entries {
        let scored = predict(test).and_then(|pred| score(name, test, &observed, pred, level));
        models.push(scored.unwrap_or_else(|e| ModelScore {
            model: name.to_owned(),
            rmse: None,
            bound: None,
            per_angle: Vec::new(),
            error: Some(e.to_string()),
            predictions: Vec::new(),
            cdf: None,
        }));
    }
    if models.is_empty() {
        return Err(Error::Empty("no models to compare"));
    }
    Ok(ComparisonReport {
        dataset: dataset.to_owned(),
        samples: test.len(),
        level,
        models,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width table, one row per model, preceded by the schema line.
    pub fn to_text(&self) -> String {
        let width = self.models.iter().map(|m| m.model.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{REPORT_SCHEMA}\n");
        out.push_str(&format!("dataset: {} ({} test samples)\n", self.dataset, self.samples));
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>12}\n",
            "model",
            "rmse",
            format!("bound{:.0}", self.level * 100.0)
        ));
        for m in &self.models {
            match (m.rmse, m.bound) {
                (Some(r), Some(b)) => out.push_str(&format!("{:<width$}  {:>12.6e}  {:>12.6e}\n", m.model, r, b)),
                _ => out.push_str(&format!(
                    "{:<width$}  failed: {}\n",
                    m.model,
                    m.error.as_deref().unwrap_or("unknown")
                )),
            }
        }
        out
    }
}
