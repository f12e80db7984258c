//! Weighted sub-band fitting with trend regression.
//!
//! The measured band is cut into sub-bands of width `delta_f`. Each sub-band
//! is fitted with Levenberg-Marquardt in `log10` parameter space, starting
//! from an inverse-error weighted blend of the previous `window` fits. The
//! per-band parameters are then regressed as `log10 p_l = k_l f + b_l`.

use serde::{Deserialize, Serialize};

use crate::data::{band_count, band_index, freq_span, MeasurementSample};
use crate::error::{Error, Result};
use crate::fitting::{levenberg_marquardt, FnProblem, LmConfig, Termination};
use crate::physics::{
    sli_baseline, sli_epld, FreqUnit, IncidenceInput, LogLinear, MaterialClass, SubBandParams, TrendParams,
};

/// Default log10 start point for non-metals: `(p1, p2, p3, p4)`.
pub const NON_METAL_GLOBAL_INIT: [f64; 4] = [-14.5, 2.9, 3.0, -2.6];
/// Default log10 start point for metals: `(p1, p2, p4)`.
pub const METAL_GLOBAL_INIT: [f64; 3] = [-15.0, 4.45, -1.0];
/// Default log10 start point for the empirical baseline: `(eps_r, sigma)`.
pub const EMPIRICAL_GLOBAL_INIT: [f64; 2] = [0.4, -1.0];

/// A model whose parameters are fitted per sub-band in `log10` space.
pub trait BandModel {
    fn name(&self) -> &str;
    fn param_count(&self) -> usize;
    /// Which parameters get a frequency slope in the trend regression.
    fn sloped(&self) -> Vec<bool>;
    /// Regression abscissa for a frequency in GHz.
    fn trend_axis(&self, f_ghz: f64) -> f64;
    fn global_init(&self) -> Vec<f64>;
    fn predict_into(&self, log_params: &[f64], samples: &[MeasurementSample], out: &mut [f64]) -> Result<()>;

    /// Parameter that mostly sets the refractive level, scanned when the
    /// first band has no previous fits to start from.
    fn scan_index(&self) -> Option<usize> {
        None
    }

    fn predict(&self, log_params: &[f64], samples: &[MeasurementSample]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; samples.len()];
        self.predict_into(log_params, samples, &mut out)?;
        Ok(out)
    }

    /// Sum of squared prediction errors over `samples`.
    fn sse(&self, log_params: &[f64], samples: &[MeasurementSample]) -> Result<f64> {
        let pred = self.predict(log_params, samples)?;
        Ok(pred.iter().zip(samples).map(|(p, s)| (p - s.gamma).powi(2)).sum())
    }
}

/// Roughness + slab + Lorentz/Drude model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpldModel {
    pub class: MaterialClass,
    pub unit: FreqUnit,
    pub thickness_m: f64,
}

impl EpldModel {
    pub fn new(class: MaterialClass, thickness_m: f64) -> Self {
        Self {
            class,
            unit: FreqUnit::default(),
            thickness_m,
        }
    }
}

impl BandModel for EpldModel {
    fn name(&self) -> &str {
        "sli-epld"
    }

    fn param_count(&self) -> usize {
        self.class.param_count()
    }

    fn sloped(&self) -> Vec<bool> {
        match self.class {
            MaterialClass::NonMetal => vec![false, true, true, true],
            MaterialClass::Metal => vec![false; 3],
        }
    }

    fn trend_axis(&self, f_ghz: f64) -> f64 {
        self.unit.from_ghz(f_ghz)
    }

    fn global_init(&self) -> Vec<f64> {
        match self.class {
            MaterialClass::NonMetal => NON_METAL_GLOBAL_INIT.to_vec(),
            MaterialClass::Metal => METAL_GLOBAL_INIT.to_vec(),
        }
    }

    fn scan_index(&self) -> Option<usize> {
        Some(1)
    }

    fn predict_into(&self, log_params: &[f64], samples: &[MeasurementSample], out: &mut [f64]) -> Result<()> {
        let p = SubBandParams::from_log10(self.class, self.unit, log_params)?;
        for (o, s) in out.iter_mut().zip(samples) {
            *o = sli_epld(&IncidenceInput::new(s.f_ghz, s.theta_deg, self.thickness_m)?, &p)?;
        }
        Ok(())
    }
}

/// Slab model with the empirical conductivity permittivity, parameterized
/// as `(log10 eps_r, log10 sigma)` with sigma in S/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalModel {
    pub unit: FreqUnit,
    pub thickness_m: f64,
}

impl EmpiricalModel {
    pub fn new(thickness_m: f64) -> Self {
        Self {
            unit: FreqUnit::default(),
            thickness_m,
        }
    }
}

impl BandModel for EmpiricalModel {
    fn name(&self) -> &str {
        "sli-empirical"
    }

    fn param_count(&self) -> usize {
        2
    }

    fn sloped(&self) -> Vec<bool> {
        vec![true, true]
    }

    fn trend_axis(&self, f_ghz: f64) -> f64 {
        self.unit.from_ghz(f_ghz)
    }

    fn global_init(&self) -> Vec<f64> {
        EMPIRICAL_GLOBAL_INIT.to_vec()
    }

    fn scan_index(&self) -> Option<usize> {
        Some(0)
    }

    fn predict_into(&self, log_params: &[f64], samples: &[MeasurementSample], out: &mut [f64]) -> Result<()> {
        if log_params.len() != 2 {
            return Err(Error::LengthMismatch(log_params.len(), 2));
        }
        if log_params.iter().any(|v| !v.is_finite() || v.abs() > 300.0) {
            return Err(Error::Overflow {
                index: 1,
                exponent: log_params[0],
            });
        }
        let eps_r = 10f64.powf(log_params[0]);
        let sigma = 10f64.powf(log_params[1]);
        for (o, s) in out.iter_mut().zip(samples) {
            *o = sli_baseline(
                &IncidenceInput::new(s.f_ghz, s.theta_deg, self.thickness_m)?,
                eps_r,
                sigma,
            )?;
        }
        Ok(())
    }
}

/// Log-linear trend of an arbitrary [`BandModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrend {
    pub unit: FreqUnit,
    pub lines: Vec<LogLinear>,
}

impl ModelTrend {
    pub fn log_params_at<M: BandModel + ?Sized>(&self, model: &M, f_ghz: f64) -> Vec<f64> {
        let x = model.trend_axis(f_ghz);
        self.lines.iter().map(|l| l.exponent(x)).collect()
    }

    /// Predicts every sample with parameters taken from the trend at its own frequency.
    pub fn predict<M: BandModel + ?Sized>(&self, model: &M, samples: &[MeasurementSample]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; samples.len()];
        for (o, s) in out.iter_mut().zip(samples) {
            let mut one = [0.0];
            model.predict_into(&self.log_params_at(model, s.f_ghz), std::slice::from_ref(s), &mut one)?;
            *o = one[0];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBand {
    /// 1-based position in ascending frequency.
    pub index: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub f_center: f64,
}

/// Tiles `[f_start, f_end]` with `ceil((f_end - f_start) / delta_f)` bands; the
/// last one is truncated at `f_end`.
pub fn partition_bands(f_start: f64, f_end: f64, delta_f: f64) -> Result<Vec<SubBand>> {
    if !(f_end > f_start) || !f_start.is_finite() || !f_end.is_finite() {
        return Err(Error::EmptyRange {
            start: f_start,
            end: f_end,
        });
    }
    if !(delta_f > 0.0) {
        return Err(Error::Domain(format!("sub-band width must be > 0, got {delta_f}")));
    }
    let count = band_count(f_start, f_end, delta_f);
    Ok((0..count)
        .map(|i| {
            let f_lo = f_start + delta_f * i as f64;
            let f_hi = if i + 1 == count {
                f_end
            } else {
                f_start + delta_f * (i + 1) as f64
            };
            SubBand {
                index: i + 1,
                f_lo,
                f_hi,
                f_center: 0.5 * (f_lo + f_hi),
            }
        })
        .collect())
}

/// Which samples score a previous band's parameters during initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScoring {
    /// The band about to be fitted.
    #[default]
    CurrentBand,
    /// The previous band's own training samples.
    OwnBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionWeighting {
    #[default]
    Unweighted,
    InverseRmse,
}

/// Grid scan around the global start point for the first band.
///
/// Thick, low-loss slabs produce many interference fringes per band, and a
/// single start point only converges when it is within a fraction of a fringe
/// of the truth. The scan shifts the model's level parameter over
/// `[-half_width, half_width]` (log10) and runs the solver from the `starts`
/// lowest-error grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScan {
    pub half_width: f64,
    pub step: f64,
    pub starts: usize,
}

impl Default for InitScan {
    fn default() -> Self {
        Self {
            half_width: 0.6,
            step: 0.002,
            starts: 3,
        }
    }
}

impl InitScan {
    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.half_width / self.step).round() as i64;
        (-n..=n).map(|i| i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfTrendConfig {
    pub delta_f_ghz: f64,
    pub window: usize,
    pub lm: LmConfig,
    /// Overrides the model's default log10 start point.
    pub global_init: Option<Vec<f64>>,
    pub init_scoring: InitScoring,
    pub weighting: RegressionWeighting,
    /// `None` starts the first band from the global point only.
    pub init_scan: Option<InitScan>,
}

impl Default for WfTrendConfig {
    fn default() -> Self {
        Self {
            delta_f_ghz: 10.0,
            window: 3,
            lm: LmConfig::default(),
            global_init: None,
            init_scoring: InitScoring::default(),
            weighting: RegressionWeighting::default(),
            init_scan: Some(InitScan::default()),
        }
    }
}

impl WfTrendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f_ghz > 0.0) {
            return Err(Error::Domain(format!("delta_f must be > 0, got {}", self.delta_f_ghz)));
        }
        if self.window == 0 {
            return Err(Error::Domain("window must be >= 1".into()));
        }
        if let Some(scan) = &self.init_scan {
            if !(scan.step > 0.0 && scan.half_width >= 0.0) || scan.starts == 0 {
                return Err(Error::Domain(format!("invalid init scan {scan:?}")));
            }
        }
        self.lm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub band: SubBand,
    pub log_params: Vec<f64>,
    pub rmse: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub samples: usize,
    /// Start point handed to the solver.
    pub init: Vec<f64>,
}

impl BandFit {
    pub fn subband_params(&self, class: MaterialClass, unit: FreqUnit) -> Result<SubBandParams> {
        SubBandParams::from_log10(class, unit, &self.log_params)
    }
}

/// Weighted start point for a band and the weights given to each previous fit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInit {
    pub log_params: Vec<f64>,
    pub weights: Vec<f64>,
    pub errors: Vec<f64>,
}

const EXACT_FIT: f64 = 1e-12;

/// Blends the previous fits in the window with weights proportional to the
/// inverse of their squared error. Fits scoring below 1e-12 share all the
/// weight. An empty window yields `global_init`.
pub fn weighted_init<M: BandModel + ?Sized>(
    model: &M,
    window_fits: &[(&BandFit, &[MeasurementSample])],
    band_samples: &[MeasurementSample],
    scoring: InitScoring,
    global_init: &[f64],
) -> WeightedInit {
    if window_fits.is_empty() {
        return WeightedInit {
            log_params: global_init.to_vec(),
            weights: Vec::new(),
            errors: Vec::new(),
        };
    }
    let errors: Vec<f64> = window_fits
        .iter()
        .map(|(fit, own)| {
            let data = match scoring {
                InitScoring::CurrentBand => band_samples,
                InitScoring::OwnBand => own,
            };
            model
                .sse(&fit.log_params, data)
                .ok()
                .filter(|e| e.is_finite())
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let exact = errors.iter().filter(|&&e| e < EXACT_FIT).count();
    let mut weights: Vec<f64> = if exact > 0 {
        errors.iter().map(|&e| if e < EXACT_FIT { 1.0 } else { 0.0 }).collect()
    } else {
        errors.iter().map(|&e| 1.0 / e).collect()
    };
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        // nothing evaluable: fall back on the most recent fit
        weights.iter_mut().for_each(|w| *w = 0.0);
        *weights.last_mut().expect("non-empty window") = 1.0;
    }
    let n = window_fits[0].0.log_params.len();
    let mut log_params = vec![0.0; n];
    for ((fit, _), w) in window_fits.iter().zip(&weights) {
        for (acc, v) in log_params.iter_mut().zip(&fit.log_params) {
            *acc += w * v;
        }
    }
    WeightedInit {
        log_params,
        weights,
        errors,
    }
}

/// Fits one sub-band from `init` (log10 space).
pub fn fit_band<M: BandModel + ?Sized>(
    model: &M,
    band: SubBand,
    samples: &[MeasurementSample],
    init: &[f64],
    lm: &LmConfig,
) -> Result<BandFit> {
    let n = model.param_count();
    if samples.len() < n {
        return Err(Error::UnderDetermined {
            band: band.index,
            samples: samples.len(),
            params: n,
        });
    }
    let problem = FnProblem::new(samples.len(), n, |p: &[f64], r: &mut [f64]| {
        model.predict_into(p, samples, r)?;
        for (ri, s) in r.iter_mut().zip(samples) {
            *ri -= s.gamma;
        }
        Ok(())
    });
    match levenberg_marquardt(&problem, init, lm) {
        Ok(fit) => Ok(BandFit {
            band,
            log_params: fit.params,
            rmse: fit.rmse,
            converged: fit.converged,
            iterations: fit.iterations,
            termination: Some(fit.termination),
            samples: samples.len(),
            init: init.to_vec(),
        }),
        Err(Error::Singular) => {
            let rmse = model
                .sse(init, samples)
                .map(|e| (e / samples.len() as f64).sqrt())
                .unwrap_or(f64::INFINITY);
            Ok(BandFit {
                band,
                log_params: init.to_vec(),
                rmse,
                converged: false,
                iterations: 0,
                termination: None,
                samples: samples.len(),
                init: init.to_vec(),
            })
        }
        Err(e) => Err(e),
    }
}

/// Fits a band from the best few points of an [`InitScan`] around `init` and
/// keeps the lowest-error converged result. Ties go to the earlier start.
pub fn fit_band_scanned<M: BandModel + ?Sized>(
    model: &M,
    band: SubBand,
    samples: &[MeasurementSample],
    init: &[f64],
    scan: &InitScan,
    lm: &LmConfig,
) -> Result<BandFit> {
    let Some(index) = model.scan_index() else {
        return fit_band(model, band, samples, init, lm);
    };
    let mut scored: Vec<(f64, Vec<f64>)> = scan
        .offsets()
        .into_iter()
        .map(|off| {
            let mut p = init.to_vec();
            p[index] += off;
            let sse = model
                .sse(&p, samples)
                .ok()
                .filter(|v| v.is_finite())
                .unwrap_or(f64::INFINITY);
            (sse, p)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<BandFit> = None;
    for (_, start) in scored.into_iter().take(scan.starts) {
        let fit = fit_band(model, band, samples, &start, lm)?;
        let better = match &best {
            None => true,
            Some(b) => (fit.converged, -fit.rmse) > (b.converged, -b.rmse),
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Per-parameter least-squares lines through the band fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub lines: Vec<LogLinear>,
    /// RMS deviation of the band values from each line, in decades.
    pub residual_rms: Vec<f64>,
}

/// Regresses `log10 p_l` on the band-center abscissa. Parameters not marked
/// as sloped, and every parameter when only one fit is available, get a
/// (weighted) mean intercept with zero slope.
pub fn trend_regression(
    fits: &[&BandFit],
    axis: impl Fn(f64) -> f64,
    sloped: &[bool],
    weighting: RegressionWeighting,
) -> Result<Regression> {
    if fits.is_empty() {
        return Err(Error::InsufficientBands {
            converged: 0,
            required: 1,
        });
    }
    let xs: Vec<f64> = fits.iter().map(|f| axis(f.band.f_center)).collect();
    let ws: Vec<f64> = fits
        .iter()
        .map(|f| match weighting {
            RegressionWeighting::Unweighted => 1.0,
            RegressionWeighting::InverseRmse => 1.0 / f.rmse.max(1e-12),
        })
        .collect();
    let wsum: f64 = ws.iter().sum();
    let mut lines = Vec::with_capacity(sloped.len());
    let mut residual_rms = Vec::with_capacity(sloped.len());
    for (l, &has_slope) in sloped.iter().enumerate() {
        let ys: Vec<f64> = fits.iter().map(|f| f.log_params[l]).collect();
        let y_mean = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
        let line = if has_slope && fits.len() >= 2 {
            let x_mean = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for ((x, y), w) in xs.iter().zip(&ys).zip(&ws) {
                sxy += w * (x - x_mean) * (y - y_mean);
                sxx += w * (x - x_mean) * (x - x_mean);
            }
            if sxx == 0.0 {
                return Err(Error::InsufficientBands {
                    converged: fits.len(),
                    required: 2,
                });
            }
            let k = sxy / sxx;
            LogLinear {
                k,
                b: y_mean - k * x_mean,
            }
        } else {
            LogLinear::constant(y_mean)
        };
        let rms = (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (line.exponent(*x) - y).powi(2))
            .sum::<f64>()
            / fits.len() as f64)
            .sqrt();
        lines.push(line);
        residual_rms.push(rms);
    }
    Ok(Regression { lines, residual_rms })
}

/// Everything a trend run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRun {
    pub model: String,
    pub trend: ModelTrend,
    pub bands: Vec<BandFit>,
    pub regression: Regression,
    /// Indices (1-based) of bands left out of the regression.
    pub excluded_bands: Vec<usize>,
    /// RMSE of the final trend model on the training samples.
    pub train_rmse: f64,
    /// Weights used for each band's initialization, oldest fit first.
    pub init_weights: Vec<Vec<f64>>,
}

/// Runs the full sub-band fit and trend regression for any [`BandModel`].
pub fn fit_trend<M: BandModel + ?Sized>(
    model: &M,
    unit: FreqUnit,
    train: &[MeasurementSample],
    config: &WfTrendConfig,
) -> Result<TrendRun> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("no training samples"));
    }
    let (lo, hi) = freq_span(train);
    let bands = partition_bands(lo, hi, config.delta_f_ghz)?;
    let mut per_band: Vec<Vec<MeasurementSample>> = vec![Vec::new(); bands.len()];
    for s in train {
        per_band[band_index(s.f_ghz, lo, config.delta_f_ghz, bands.len())].push(*s);
    }
    let global_init = config.global_init.clone().unwrap_or_else(|| model.global_init());
    if global_init.len() != model.param_count() {
        return Err(Error::LengthMismatch(global_init.len(), model.param_count()));
    }

    let mut fits: Vec<BandFit> = Vec::with_capacity(bands.len());
    let mut init_weights = Vec::with_capacity(bands.len());
    for (i, band) in bands.iter().enumerate() {
        let start = i.saturating_sub(config.window);
        let window: Vec<(&BandFit, &[MeasurementSample])> =
            (start..i).map(|j| (&fits[j], per_band[j].as_slice())).collect();
        let init = weighted_init(model, &window, &per_band[i], config.init_scoring, &global_init);
        let fit = match (&config.init_scan, window.is_empty()) {
            (Some(scan), true) => fit_band_scanned(model, *band, &per_band[i], &init.log_params, scan, &config.lm)?,
            _ => fit_band(model, *band, &per_band[i], &init.log_params, &config.lm)?,
        };
        init_weights.push(init.weights);
        fits.push(fit);
    }

    let usable: Vec<&BandFit> = fits.iter().filter(|f| f.converged).collect();
    let required = if bands.len() >= 2 { 2 } else { 1 };
    if usable.len() < required {
        return Err(Error::InsufficientBands {
            converged: usable.len(),
            required,
        });
    }
    let excluded_bands = fits.iter().filter(|f| !f.converged).map(|f| f.band.index).collect();
    let regression = trend_regression(&usable, |f| model.trend_axis(f), &model.sloped(), config.weighting)?;
    let trend = ModelTrend {
        unit,
        lines: regression.lines.clone(),
    };
    let pred = trend.predict(model, train)?;
    let train_rmse =
        (pred.iter().zip(train).map(|(p, s)| (p - s.gamma).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
    Ok(TrendRun {
        model: model.name().to_owned(),
        trend,
        bands: fits,
        regression,
        excluded_bands,
        train_rmse,
        init_weights,
    })
}

/// Trend parameters of the roughness/slab/Lorentz-Drude model with the run
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub params: TrendParams,
    pub run: TrendRun,
}

/// Fits [`TrendParams`] to training samples of a slab of thickness `d_m`.
pub fn wf_trend(
    train: &[MeasurementSample],
    d_m: f64,
    class: MaterialClass,
    unit: FreqUnit,
    config: &WfTrendConfig,
) -> Result<TrendFit> {
    if !(d_m > 0.0) {
        return Err(Error::Domain(format!("thickness must be > 0 m, got {d_m}")));
    }
    let model = EpldModel {
        class,
        unit,
        thickness_m: d_m,
    };
    let run = fit_trend(&model, unit, train, config)?;
    let params = TrendParams::from_components(class, unit, &run.trend.lines)?;
    Ok(TrendFit { params, run })
}

/// Regression of band fits into [`TrendParams`] for the given class.
pub fn epld_trend_regression(
    fits: &[&BandFit],
    class: MaterialClass,
    unit: FreqUnit,
    weighting: RegressionWeighting,
) -> Result<TrendParams> {
    let model = EpldModel {
        class,
        unit,
        thickness_m: 1.0,
    };
    let reg = trend_regression(fits, |f| unit.from_ghz(f), &model.sloped(), weighting)?;
    TrendParams::from_components(class, unit, &reg.lines)
}
