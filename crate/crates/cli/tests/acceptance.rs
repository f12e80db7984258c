//! Acceptance suite. Prints one PASS/FAIL line per criterion. With
//! `THZREFL_ACCEPTANCE_STRICT=1` the process also exits nonzero on any FAIL.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use thzrefl_core::data::{
    builtin_material, builtin_materials, default_angle_grid, default_freq_grid, grid, stratified_split,
    synthesize_dataset, MeasurementSample,
};
use thzrefl_core::evalcmp::{compare_models, rmse, Predictor};
use thzrefl_core::fitting::{levenberg_marquardt, FnProblem, LmConfig};
use thzrefl_core::physics::{
    fresnel_te, roughness_factor, sli_epld, sli_magnitude, FreqUnit, IncidenceInput, MaterialClass, SubBandParams,
    TrendParams,
};
use thzrefl_core::specfun::bessel_i0_scaled;
use thzrefl_core::wftrend::{
    epld_trend_regression, fit_trend, wf_trend, BandFit, EmpiricalModel, RegressionWeighting, SubBand, WfTrendConfig,
};
use thzrefl_core::Complex64;

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn read_rows(name: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(fixtures().join(name)).expect("fixture");
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn dense(trend: &TrendParams, d: f64) -> Vec<MeasurementSample> {
    let freqs = grid(300.0, 0.05, 400.0).unwrap();
    let angles = grid(12.5, 5.0, 77.5).unwrap();
    synthesize_dataset("dense", trend, d, &freqs, &angles, 0.0, 0)
        .unwrap()
        .samples
}

fn predict_all(trend: &TrendParams, d: f64, samples: &[MeasurementSample]) -> thzrefl_core::Result<Vec<f64>> {
    samples.iter().map(|s| trend.reflection(&s.incidence(d)?)).collect()
}

fn gammas(samples: &[MeasurementSample]) -> Vec<f64> {
    samples.iter().map(|s| s.gamma).collect()
}

fn forward_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let rows = read_rows("forward.csv");
    for r in &rows {
        let v: Vec<f64> = r[2..]
            .iter()
            .map(|s| if s.is_empty() { 0.0 } else { s.parse().unwrap() })
            .collect();
        let unit = if r[1] == "ghz" { FreqUnit::Ghz } else { FreqUnit::Thz };
        let p = if r[0] == "metal" {
            SubBandParams::metal(v[0], v[1], v[3])
        } else {
            SubBandParams::non_metal(v[0], v[1], v[2], v[3])
        }
        .with_unit(unit);
        let inc = IncidenceInput::new(v[4], v[5], v[6]).unwrap();
        worst = worst.max(rel(sli_epld(&inc, &p).unwrap(), v[7]));
    }
    outcome(
        rows.len() == 100 && worst < 1e-10,
        format!("{} tuples, worst relative error {worst:.2e}", rows.len()),
    )
}

fn physical_range() -> Outcome {
    let freqs = grid(300.0, 1.0, 400.0).unwrap();
    let angles = grid(10.0, 10.0, 80.0).unwrap();
    let (mut lo, mut hi, mut metal_min, mut points) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, 0);
    for m in builtin_materials() {
        for &t in &angles {
            for &f in &freqs {
                let g = m
                    .trend
                    .reflection(&IncidenceInput::new(f, t, m.nominal_thickness_m).unwrap())
                    .unwrap();
                lo = lo.min(g);
                hi = hi.max(g);
                if m.class() == MaterialClass::Metal {
                    metal_min = metal_min.min(g);
                }
                points += 1;
            }
        }
    }
    outcome(
        lo >= 0.0 && hi <= 1.0 && metal_min > 0.9,
        format!("{points} points, gamma in [{lo:.4}, {hi:.4}], metal min {metal_min:.4}"),
    )
}

fn glass_round_trip() -> Outcome {
    let m = builtin_material("Glass").unwrap();
    let d = m.nominal_thickness_m;
    let ds = synthesize_dataset(
        "glass",
        &m.trend,
        d,
        &default_freq_grid(),
        &default_angle_grid(),
        0.0,
        1,
    )
    .unwrap();
    let fit = wf_trend(&ds.samples, d, m.class(), FreqUnit::Thz, &WfTrendConfig::default()).unwrap();
    let held = dense(&m.trend, d);
    let e = rmse(&predict_all(&fit.params, d, &held).unwrap(), &gammas(&held)).unwrap();
    outcome(
        e < 1e-3,
        format!(
            "{} samples, d = {d} m, dense held-out rmse {e:.3e} (< 1e-3), train rmse {:.3e}",
            ds.len(),
            fit.run.train_rmse
        ),
    )
}

fn glass_noise_floor() -> Outcome {
    let m = builtin_material("Glass").unwrap();
    let d = m.nominal_thickness_m;
    let ds = synthesize_dataset(
        "glass",
        &m.trend,
        d,
        &default_freq_grid(),
        &default_angle_grid(),
        0.01,
        42,
    )
    .unwrap();
    let split = stratified_split(&ds, 0.6, 42, 10.0).unwrap();
    let fit = wf_trend(
        &split.train.samples,
        d,
        m.class(),
        FreqUnit::Thz,
        &WfTrendConfig::default(),
    )
    .unwrap();
    let pred = |s: &[MeasurementSample]| predict_all(&fit.params, d, s);
    let report = compare_models("glass", &split.test.samples, [("sli-epld", &pred as Predictor)], 0.9).unwrap();
    let (e, b) = (report.models[0].rmse.unwrap(), report.models[0].bound.unwrap());
    outcome(
        e <= 0.015 && b <= 0.020,
        format!("test rmse {e:.5} (<= 0.015), bound90 {b:.5} (<= 0.020)"),
    )
}

fn regression_exactness() -> Outcome {
    let m = builtin_material("Glass").unwrap();
    let fits: Vec<BandFit> = (0..10)
        .map(|i| {
            let c = 305.0 + 10.0 * i as f64;
            BandFit {
                band: SubBand {
                    index: i + 1,
                    f_lo: c - 5.0,
                    f_hi: c + 5.0,
                    f_center: c,
                },
                log_params: m.trend.at(c).unwrap().to_log10(),
                rmse: 0.0,
                converged: true,
                iterations: 0,
                termination: None,
                samples: 0,
                init: Vec::new(),
            }
        })
        .collect();
    let refs: Vec<&BandFit> = fits.iter().collect();
    let got = epld_trend_regression(&refs, m.class(), m.trend.unit, RegressionWeighting::Unweighted).unwrap();
    let worst = got
        .components()
        .iter()
        .zip(m.trend.components())
        .map(|(a, e)| (a.k - e.k).abs().max((a.b - e.b).abs()))
        .fold(0.0, f64::max);
    let c = got.components();
    outcome(
        worst < 1e-10,
        format!(
            "(k2, b2) = ({:.4}, {:.4}), worst |dk|,|db| = {worst:.2e}",
            c[1].k, c[1].b
        ),
    )
}

fn bessel_accuracy() -> Outcome {
    let (mut series, mut asym, mut n) = (0.0f64, 0.0f64, 0);
    for r in read_rows("bessel.csv") {
        let x: f64 = r[0].parse().unwrap();
        let e = rel(bessel_i0_scaled(x).unwrap(), r[1].parse().unwrap());
        if x <= 15.0 {
            series = series.max(e);
        } else {
            asym = asym.max(e);
        }
        n += 1;
    }
    let below = bessel_i0_scaled(15.0).unwrap();
    let above = bessel_i0_scaled(f64::from_bits(15f64.to_bits() + 1)).unwrap();
    let seam = (below - above).abs();
    outcome(
        series < 1e-12 && asym < 1e-10 && seam < 1e-10,
        format!("{n} points, series {series:.2e}, asymptotic {asym:.2e}, seam jump {seam:.2e}"),
    )
}

fn lm_rosenbrock() -> Outcome {
    let problem = FnProblem::new(2, 2, |p: &[f64], r: &mut [f64]| {
        r[0] = 10.0 * (p[1] - p[0] * p[0]);
        r[1] = 1.0 - p[0];
        Ok(())
    });
    let fit = levenberg_marquardt(&problem, &[-1.2, 1.0], &LmConfig::default()).unwrap();
    let dist = ((fit.params[0] - 1.0).powi(2) + (fit.params[1] - 1.0).powi(2)).sqrt();
    outcome(
        fit.cost < 1e-16 && fit.iterations <= 200 && dist < 1e-6,
        format!(
            "cost {:.2e}, {} iterations, |p - (1,1)| = {dist:.2e}",
            fit.cost, fit.iterations
        ),
    )
}

fn physics_identities() -> Outcome {
    let mut worst = [0.0f64; 4];
    for t in [0.0, 20.0, 45.0, 70.0, 85.0] {
        let r = fresnel_te(Complex64::new(1.0, 0.0), t).unwrap();
        let q = Complex64::new(1.3, -0.2);
        worst[0] = worst[0].max(sli_magnitude(r, q).unwrap());
        for f in [300.0, 350.0, 400.0] {
            worst[1] = worst[1].max((roughness_factor(0.0, f, t).unwrap() - 1.0).abs());
        }
        let r = fresnel_te(Complex64::new(4.0, -0.3), t).unwrap();
        worst[2] = worst[2].max(sli_magnitude(r, Complex64::new(std::f64::consts::PI, 0.0)).unwrap());
        let rho = roughness_factor(1e-6, 350.0, t).unwrap();
        for im in [-20.5, -30.0, -60.0] {
            let g = rho * sli_magnitude(r, Complex64::new(7.1, im)).unwrap();
            worst[3] = worst[3].max((g - rho * r.norm()).abs());
        }
    }
    outcome(
        worst[0] < 1e-12 && worst[1] == 0.0 && worst[2] < 1e-12 && worst[3] < 1e-6,
        format!(
            "eta=1 {:.1e}, p1=0 {:.1e}, null {:.1e}, thick limit {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn baseline_direction() -> Outcome {
    let m = builtin_material("Concrete").unwrap();
    let d = m.nominal_thickness_m;
    let ds = synthesize_dataset(
        "concrete",
        &m.trend,
        d,
        &default_freq_grid(),
        &default_angle_grid(),
        0.0,
        7,
    )
    .unwrap();
    let split = stratified_split(&ds, 0.6, 7, 10.0).unwrap();
    let cfg = WfTrendConfig::default();
    let epld = wf_trend(&split.train.samples, d, m.class(), FreqUnit::Thz, &cfg).unwrap();
    let model = EmpiricalModel::new(d);
    let base = fit_trend(&model, FreqUnit::Thz, &split.train.samples, &cfg).unwrap();
    let p_epld = |s: &[MeasurementSample]| predict_all(&epld.params, d, s);
    let p_base = |s: &[MeasurementSample]| base.trend.predict(&model, s);
    let report = compare_models(
        "concrete",
        &split.test.samples,
        [
            ("sli-epld", &p_epld as Predictor),
            ("sli-empirical", &p_base as Predictor),
        ],
        0.9,
    )
    .unwrap();
    let (a, b) = (report.models[0].rmse.unwrap(), report.models[1].rmse.unwrap());
    outcome(a < b, format!("sli-epld rmse {a:.4} vs sli-empirical {b:.4}"))
}

fn fit_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_thzrefl");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let st = Command::new(bin)
            .args(args)
            .env_remove("THZREFL_CONFIG")
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    };
    let root = dir.path().to_str().unwrap();
    run(&["--out-dir", root, "synth", "--material", "Glass", "--noise", "0.01"]);
    let input = dir.path().join("synth.csv");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        run(&[
            "--out-dir",
            out.to_str().unwrap(),
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--material-class",
            "non-metal",
            "--thickness-m",
            "0.005",
        ]);
        outputs.push(std::fs::read(out.join("trend.toml")).unwrap());
    }
    outcome(
        outputs[0] == outputs[1] && !outputs[0].is_empty(),
        format!(
            "trend.toml {} bytes, identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "forward model oracle equivalence",
            forward_oracle,
            Some(Duration::from_secs(5)),
        ),
        (
            "physical range of the material table",
            physical_range,
            Some(Duration::from_secs(5)),
        ),
        (
            "noiseless glass round trip",
            glass_round_trip,
            Some(Duration::from_secs(60)),
        ),
        (
            "glass noise floor fit",
            glass_noise_floor,
            Some(Duration::from_secs(60)),
        ),
        ("trend regression exactness", regression_exactness, None),
        ("scaled Bessel accuracy", bessel_accuracy, None),
        ("LM on Rosenbrock", lm_rosenbrock, None),
        ("physics identities", physics_identities, None),
        ("baseline comparison direction", baseline_direction, None),
        ("fit determinism", fit_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = check();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > *limit {
                o.pass = false;
                o.detail += &format!("; over the {}s limit", limit.as_secs());
            }
        }
        println!(
            "{} {:>2} {name}: {} [{:.2}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            took.as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    let strict = std::env::var("THZREFL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
