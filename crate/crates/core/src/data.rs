//! Measurement ingestion, dataset handling, synthetic data and the built-in
//! material table.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{IncidenceInput, LogLinear, MaterialClass, TrendParams};

/// First line of every CSV this crate writes.
pub const SAMPLES_SCHEMA: &str = "# thzrefl-samples v1";

/// Ratios above this are treated as outliers on ingestion.
pub const OUTLIER_GAMMA: f64 = 1.5;
/// Default reference-magnitude floor for the ratio method.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-7;

const GRID_TOL_GHZ: f64 = 1e-6;

/// One point of a swept `|S21|` measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub f_ghz: f64,
    pub s21_mag: f64,
}

/// Frequency sweep at one incidence angle.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSweep {
    pub theta_deg: f64,
    pub records: Vec<SweepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    pub f_ghz: f64,
    pub theta_deg: f64,
    pub gamma: f64,
}

impl MeasurementSample {
    pub fn new(f_ghz: f64, theta_deg: f64, gamma: f64) -> Self {
        Self {
            f_ghz,
            theta_deg,
            gamma,
        }
    }

    pub fn incidence(&self, d_m: f64) -> Result<IncidenceInput> {
        IncidenceInput::new(self.f_ghz, self.theta_deg, d_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub class: MaterialClass,
    pub thickness_m: f64,
    pub samples: Vec<MeasurementSample>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        class: MaterialClass,
        thickness_m: f64,
        samples: Vec<MeasurementSample>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("dataset has no samples"));
        }
        if !(thickness_m > 0.0 && thickness_m.is_finite()) {
            return Err(Error::InvalidData(format!(
                "thickness must be > 0 m, got {thickness_m}"
            )));
        }
        for s in &samples {
            if !(s.gamma >= 0.0 && s.gamma.is_finite() && s.f_ghz > 0.0 && s.theta_deg.is_finite()) {
                return Err(Error::InvalidData(format!("invalid sample {s:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            class,
            thickness_m,
            samples,
            provenance: provenance.into(),
        })
    }

    fn with_samples(&self, samples: Vec<MeasurementSample>, note: &str) -> Self {
        Self {
            name: self.name.clone(),
            class: self.class,
            thickness_m: self.thickness_m,
            samples,
            provenance: format!("{}; {note}", self.provenance),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Smallest and largest frequency in the dataset.
    pub fn freq_span(&self) -> (f64, f64) {
        freq_span(&self.samples)
    }
}

pub(crate) fn freq_span(samples: &[MeasurementSample]) -> (f64, f64) {
    samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.f_ghz), hi.max(s.f_ghz))
    })
}

/// Result of the metal-reference ratio method.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioOutput {
    pub samples: Vec<MeasurementSample>,
    /// Points whose reference magnitude fell below the noise floor.
    pub dropped_below_floor: usize,
    /// Points whose ratio exceeded [`OUTLIER_GAMMA`].
    pub dropped_outliers: usize,
}

/// Reflection magnitude as `|S21_material| / |S21_reference|`, pointwise per angle.
pub fn ratio_reflection(material: &[AngleSweep], reference: &[AngleSweep], noise_floor: f64) -> Result<RatioOutput> {
    let mut out = RatioOutput {
        samples: Vec::new(),
        dropped_below_floor: 0,
        dropped_outliers: 0,
    };
    for sweep in material {
        let reference = reference
            .iter()
            .find(|r| (r.theta_deg - sweep.theta_deg).abs() < 1e-9)
            .ok_or_else(|| Error::InvalidData(format!("no reference sweep at {} deg", sweep.theta_deg)))?;
        if reference.records.len() != sweep.records.len() {
            let index = reference.records.len().min(sweep.records.len());
            return Err(Error::GridMismatch {
                angle_deg: sweep.theta_deg,
                index,
            });
        }
        for (index, (m, r)) in sweep.records.iter().zip(&reference.records).enumerate() {
            if (m.f_ghz - r.f_ghz).abs() > GRID_TOL_GHZ {
                return Err(Error::GridMismatch {
                    angle_deg: sweep.theta_deg,
                    index,
                });
            }
            if !(r.s21_mag >= noise_floor) {
                out.dropped_below_floor += 1;
                continue;
            }
            let gamma = m.s21_mag / r.s21_mag;
            if gamma > OUTLIER_GAMMA {
                out.dropped_outliers += 1;
                continue;
            }
            out.samples
                .push(MeasurementSample::new(m.f_ghz, sweep.theta_deg, gamma));
        }
    }
    if out.samples.is_empty() {
        return Err(Error::AllDropped);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|err| Error::Io {
        path: path.to_owned(),
        err,
    })
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        Error::InvalidData(format!(
            "missing column '{name}' (found: {})",
            headers.iter().collect::<Vec<_>>().join(",")
        ))
    })
}

fn parse_field(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse::<f64>()
        .map_err(|_| Error::InvalidData(format!("row {line}: cannot parse '{raw}' as a number")))
}

/// Reads `freq_ghz,angle_deg,gamma` rows. Other columns are ignored and rows
/// with `gamma > 1.5` are dropped; the drop count is returned.
pub fn read_samples<R: Read>(r: R) -> Result<(Vec<MeasurementSample>, usize)> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    let (fi, ai, gi) = (
        column(&headers, "freq_ghz")?,
        column(&headers, "angle_deg")?,
        column(&headers, "gamma")?,
    );
    let mut samples = Vec::new();
    let mut outliers = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let s = MeasurementSample::new(
            parse_field(&rec, fi, line + 1)?,
            parse_field(&rec, ai, line + 1)?,
            parse_field(&rec, gi, line + 1)?,
        );
        if !(s.gamma >= 0.0) {
            return Err(Error::InvalidData(format!("row {}: negative gamma", line + 1)));
        }
        if s.gamma > OUTLIER_GAMMA {
            outliers += 1;
            continue;
        }
        samples.push(s);
    }
    Ok((samples, outliers))
}

pub fn read_samples_file(path: &Path) -> Result<(Vec<MeasurementSample>, usize)> {
    read_samples(open(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::InvalidData(msg) => Error::InvalidData(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Reads `freq_ghz,angle_deg,s21_mag` rows grouped into per-angle sweeps in
/// order of first appearance. Phase columns are ignored.
pub fn read_sweeps<R: Read>(r: R) -> Result<Vec<AngleSweep>> {
    let mut rdr = csv_reader(r);
    let headers = rdr.headers()?.clone();
    let (fi, ai, si) = (
        column(&headers, "freq_ghz")?,
        column(&headers, "angle_deg")?,
        column(&headers, "s21_mag")?,
    );
    let mut sweeps: Vec<AngleSweep> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f_ghz = parse_field(&rec, fi, line + 1)?;
        let theta = parse_field(&rec, ai, line + 1)?;
        let s21_mag = parse_field(&rec, si, line + 1)?;
        if !(s21_mag >= 0.0) {
            return Err(Error::InvalidData(format!("row {}: negative |S21|", line + 1)));
        }
        let sweep = match sweeps.iter_mut().position(|s| s.theta_deg == theta) {
            Some(i) => &mut sweeps[i],
            None => {
                sweeps.push(AngleSweep {
                    theta_deg: theta,
                    records: Vec::new(),
                });
                sweeps.last_mut().expect("just pushed")
            }
        };
        if sweep.records.last().is_some_and(|last| last.f_ghz >= f_ghz) {
            return Err(Error::InvalidData(format!(
                "row {}: frequencies must increase within the {theta} deg sweep",
                line + 1
            )));
        }
        sweep.records.push(SweepRecord { f_ghz, s21_mag });
    }
    if sweeps.is_empty() {
        return Err(Error::Empty("sweep file has no rows"));
    }
    Ok(sweeps)
}

pub fn read_sweeps_file(path: &Path) -> Result<Vec<AngleSweep>> {
    read_sweeps(open(path)?).map_err(|e| with_path(e, path))
}

pub fn write_samples<W: Write>(mut w: W, samples: &[MeasurementSample]) -> Result<()> {
    let io = |err| Error::Io {
        path: "<output>".into(),
        err,
    };
    writeln!(w, "{SAMPLES_SCHEMA}").map_err(io)?;
    writeln!(w, "freq_ghz,angle_deg,gamma").map_err(io)?;
    for s in samples {
        writeln!(w, "{},{},{}", s.f_ghz, s.theta_deg, s.gamma).map_err(io)?;
    }
    Ok(())
}

/// Parses `start:step:end` (Table-style `10:10:80`).
///
/// When the step divides the span to within 1e-6 the points are spaced
/// exactly and the last one equals `end`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidData(format!("bad grid '{spec}', expected start:step:end")))?;
    match nums.as_slice() {
        [single] => Ok(vec![*single]),
        [start, step, end] => grid(*start, *step, *end),
        _ => Err(Error::InvalidData(format!(
            "bad grid '{spec}', expected start:step:end"
        ))),
    }
}

pub fn grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidData(format!("bad grid {start}:{step}:{end}")));
    }
    let span = end - start;
    let intervals = (span / step).round();
    if intervals > 1e8 {
        return Err(Error::InvalidData("grid too large".into()));
    }
    if span == 0.0 {
        return Ok(vec![start]);
    }
    if (intervals * step - span).abs() <= 1e-6 * span {
        let n = intervals as usize;
        return Ok((0..=n)
            .map(|i| {
                if i == n {
                    end
                } else {
                    start + span * i as f64 / n as f64
                }
            })
            .collect());
    }
    let n = (span / step).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

/// Default sweep: 1201 points over 300-400 GHz.
pub fn default_freq_grid() -> Vec<f64> {
    grid(300.0, 100.0 / 1200.0, 400.0).expect("static grid")
}

/// Default angles: 10 to 80 degrees in 10 degree steps.
pub fn default_angle_grid() -> Vec<f64> {
    grid(10.0, 10.0, 80.0).expect("static grid")
}

/// Train/test partition with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub cells: usize,
    pub warnings: Vec<String>,
}

/// Number of sub-bands of width `delta` needed to tile `[lo, hi]`.
pub(crate) fn band_count(lo: f64, hi: f64, delta: f64) -> usize {
    ((hi - lo) / delta - 1e-9).ceil().max(1.0) as usize
}

/// Zero-based sub-band of `f`; the upper edge belongs to the last band.
pub(crate) fn band_index(f: f64, lo: f64, delta: f64, count: usize) -> usize {
    (((f - lo) / delta).floor().max(0.0) as usize).min(count - 1)
}

fn angle_key(theta_deg: f64) -> i64 {
    (theta_deg * 1e6).round() as i64
}

/// Seeded split stratified over (sub-band x angle) cells.
///
/// Each cell contributes `round(fraction * count)` samples to the training
/// set, drawn without replacement. Cells with fewer than two samples go
/// entirely to training. Sample order is preserved in both halves.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64, band_width_ghz: f64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if !(band_width_ghz > 0.0) {
        return Err(Error::Domain("band width must be > 0".into()));
    }
    let (lo, hi) = ds.freq_span();
    let bands = band_count(lo, hi, band_width_ghz);
    let mut cells: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        let band = band_index(s.f_ghz, lo, band_width_ghz, bands);
        cells.entry((band, angle_key(s.theta_deg))).or_default().push(i);
    }

    let mut in_train = vec![false; ds.samples.len()];
    let mut warnings = Vec::new();
    for (stream, ((band, angle), idx)) in cells.iter().enumerate() {
        if idx.len() < 2 {
            warnings.push(format!(
                "cell (band {}, {} deg) has {} sample(s); assigned to training",
                band + 1,
                *angle as f64 * 1e-6,
                idx.len()
            ));
            idx.iter().for_each(|&i| in_train[i] = true);
            continue;
        }
        let take = (train_fraction * idx.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        for pick in rand::seq::index::sample(&mut rng, idx.len(), take) {
            in_train[idx[pick]] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = ds.samples.iter().zip(&in_train).partition(|(_, t)| **t);
    let train: Vec<_> = train.into_iter().map(|(s, _)| *s).collect();
    let test: Vec<_> = test.into_iter().map(|(s, _)| *s).collect();
    let note = format!("seed {seed}, fraction {train_fraction}");
    Ok(Split {
        train: ds.with_samples(train, &format!("train split ({note})")),
        test: ds.with_samples(test, &format!("test split ({note})")),
        cells: cells.len(),
        warnings,
    })
}

/// A row of the built-in material table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRecord {
    pub name: String,
    pub aliases: Vec<String>,
    pub trend: TrendParams,
    /// Reported model RMSE.
    pub reference_rmse: f64,
    /// Reported 90% absolute-error bound.
    pub reference_bound90: f64,
    pub nominal_thickness_m: f64,
}

impl MaterialRecord {
    pub fn class(&self) -> MaterialClass {
        self.trend.class
    }

    pub fn matches(&self, name: &str) -> bool {
        let norm = |s: &str| s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        let n = norm(name);
        norm(&self.name) == n || self.aliases.iter().any(|a| norm(a) == n)
    }
}

#[derive(Deserialize)]
struct RawTable {
    material: Vec<RawMaterial>,
}

#[derive(Deserialize)]
struct RawMaterial {
    name: String,
    #[serde(default)]
    aliases: Vec<String>,
    class: MaterialClass,
    b1: f64,
    #[serde(default)]
    k2: f64,
    b2: f64,
    k3: Option<f64>,
    b3: Option<f64>,
    #[serde(default)]
    k4: f64,
    b4: f64,
    rmse: f64,
    bound90: f64,
    thickness_m: f64,
}

const MATERIAL_TABLE: &str = include_str!("../resources/materials.toml");

/// Embedded material table in its source form.
pub fn material_table_source() -> &'static str {
    MATERIAL_TABLE
}

/// All built-in materials in table order.
pub fn builtin_materials() -> &'static [MaterialRecord] {
    static TABLE: OnceLock<Vec<MaterialRecord>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw: RawTable = toml::from_str(MATERIAL_TABLE).expect("embedded material table parses");
        raw.material
            .into_iter()
            .map(|m| {
                let trend = match m.class {
                    MaterialClass::NonMetal => TrendParams::non_metal(
                        m.b1,
                        LogLinear { k: m.k2, b: m.b2 },
                        LogLinear {
                            k: m.k3.expect("non-metal k3"),
                            b: m.b3.expect("non-metal b3"),
                        },
                        LogLinear { k: m.k4, b: m.b4 },
                    ),
                    MaterialClass::Metal => TrendParams::metal(m.b1, m.b2, m.b4),
                };
                trend.validate().expect("embedded trend is valid");
                MaterialRecord {
                    name: m.name,
                    aliases: m.aliases,
                    trend,
                    reference_rmse: m.rmse,
                    reference_bound90: m.bound90,
                    nominal_thickness_m: m.thickness_m,
                }
            })
            .collect()
    })
}

/// Looks up a built-in material by name or alias, case-insensitively.
pub fn builtin_material(name: &str) -> Result<&'static MaterialRecord> {
    let table = builtin_materials();
    table
        .iter()
        .find(|m| m.matches(name))
        .ok_or_else(|| Error::UnknownMaterial {
            name: name.to_owned(),
            valid: table.iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join(", "),
        })
}

/// Forward-model dataset on a frequency x angle grid with optional Gaussian
/// noise. Samples are angle-major; noisy values are clamped at zero.
pub fn synthesize_dataset(
    name: &str,
    trend: &TrendParams,
    d_m: f64,
    f_grid: &[f64],
    theta_grid: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(f_grid.len() * theta_grid.len());
    for &theta in theta_grid {
        for &f in f_grid {
            let clean = trend.reflection(&IncidenceInput::new(f, theta, d_m)?)?;
            let gamma = if noise_sigma > 0.0 {
                (clean + noise.sample(&mut rng)).max(0.0)
            } else {
                clean
            };
            samples.push(MeasurementSample::new(f, theta, gamma));
        }
    }
    let provenance = format!("synthetic: noise sigma {noise_sigma}, seed {seed}");
    Dataset::new(name, trend.class, d_m, samples, provenance)
}
