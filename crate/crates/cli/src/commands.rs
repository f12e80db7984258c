use anyhow::anyhow;
use thzrefl_core::data::{
    builtin_material, builtin_materials, material_table_source, parse_grid, ratio_reflection, read_samples_file,
    read_sweeps_file, stratified_split, synthesize_dataset, write_samples, Dataset, MeasurementSample,
};
use thzrefl_core::evalcmp::{compare_models, Predictor as PredictFn};
use thzrefl_core::physics::{FreqUnit, MaterialClass};
use thzrefl_core::wftrend::{fit_trend, wf_trend, EmpiricalModel, WfTrendConfig};

use crate::files::{bands_table, rt_table, Outputs, TrendFile};
use crate::{
    Cli, Command, EvalArgs, ExportArgs, Failure, FitArgs, ListFormat, MaterialsArgs, ModelSource, PredictArgs,
    SynthArgs,
};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fit(a) => fit(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::Export(a) => export(cli, a),
        Command::Materials(a) => materials(cli, a),
    }
}

fn samples_csv(samples: &[MeasurementSample]) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write_samples(&mut buf, samples)?;
    String::from_utf8(buf).map_err(|e| Failure::Internal(e.into()))
}

fn grid_arg(spec: &str, what: &str) -> Result<Vec<f64>, Failure> {
    parse_grid(spec).map_err(|e| Failure::Usage(format!("--{what}: {e}")))
}

fn load_input(a: &FitArgs) -> Result<(Vec<MeasurementSample>, serde_json::Value), Failure> {
    if let Some(path) = &a.input {
        let (samples, outliers) = read_samples_file(path)?;
        if outliers > 0 {
            eprintln!("warning: dropped {outliers} sample(s) with gamma > 1.5");
        }
        return Ok((samples, serde_json::json!({ "outliers_dropped": outliers })));
    }
    let (Some(sweeps), Some(reference)) = (&a.sweeps, &a.reference) else {
        return Err(Failure::Usage("give --input, or --sweeps with --reference".into()));
    };
    let ratio = ratio_reflection(&read_sweeps_file(sweeps)?, &read_sweeps_file(reference)?, a.noise_floor)?;
    if ratio.dropped_below_floor > 0 {
        eprintln!(
            "warning: dropped {} point(s) below the reference noise floor",
            ratio.dropped_below_floor
        );
    }
    if ratio.dropped_outliers > 0 {
        eprintln!("warning: dropped {} point(s) with gamma > 1.5", ratio.dropped_outliers);
    }
    let details = serde_json::json!({
        "below_noise_floor": ratio.dropped_below_floor,
        "outliers_dropped": ratio.dropped_outliers,
    });
    Ok((ratio.samples, details))
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<(), Failure> {
    let class: MaterialClass = a.material_class.into();
    let unit: FreqUnit = a.unit.into();
    let (samples, ingest) = load_input(a)?;
    let ds = Dataset::new(a.name.clone(), class, a.thickness_m, samples, "cli input").map_err(|e| match e {
        thzrefl_core::Error::InvalidData(msg) if msg.contains("thickness") => Failure::Usage(msg),
        e => e.into(),
    })?;
    let split = stratified_split(&ds, a.train_frac, cli.seed, a.delta_f)?;
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    let (lo, hi) = ds.freq_span();
    if a.delta_f >= hi - lo {
        eprintln!(
            "warning: delta-f {} GHz covers the whole {}-{} GHz span; fitting a single band (no frequency trend)",
            a.delta_f, lo, hi
        );
    }
    let config = WfTrendConfig {
        delta_f_ghz: a.delta_f,
        window: a.window,
        init_scoring: a.init_scoring.into(),
        weighting: a.weighting.into(),
        ..WfTrendConfig::default()
    };
    let fit = wf_trend(&split.train.samples, a.thickness_m, class, unit, &config)?;
    for b in &fit.run.excluded_bands {
        eprintln!("warning: band {b} did not converge and was left out of the regression");
    }

    let mut out = Outputs::new(&cli.out_dir)?;
    let trend = TrendFile::from_epld(&a.name, &fit.params, a.thickness_m, Some(fit.run.train_rmse));
    out.write_named("trend.toml", &trend.to_text()?)?;
    let names: &[&str] = match class {
        MaterialClass::NonMetal => &["p1", "p2", "p3", "p4"],
        MaterialClass::Metal => &["p1", "p2", "p4"],
    };
    out.write_named("bands.csv", &bands_table(&fit.run, names))?;
    out.write_named("train.csv", &samples_csv(&split.train.samples)?)?;
    out.write_named("test.csv", &samples_csv(&split.test.samples)?)?;

    let mut baseline_rmse = None;
    if a.baseline {
        let model = EmpiricalModel {
            unit,
            thickness_m: a.thickness_m,
        };
        let run = fit_trend(&model, unit, &split.train.samples, &config)?;
        baseline_rmse = Some(run.train_rmse);
        out.write_named(
            "baseline.toml",
            &TrendFile::from_empirical(&a.name, &run, a.thickness_m).to_text()?,
        )?;
        out.write_named("baseline_bands.csv", &bands_table(&run, &["eps_r", "sigma"]))?;
    }

    println!(
        "train samples: {}, test samples: {}",
        split.train.len(),
        split.test.len()
    );
    println!("bands: {}, excluded: {:?}", fit.run.bands.len(), fit.run.excluded_bands);
    println!("train rmse (sli-epld): {:.6e}", fit.run.train_rmse);
    if let Some(r) = baseline_rmse {
        println!("train rmse (sli-empirical): {r:.6e}");
    }
    let details = serde_json::json!({
        "input": ingest,
        "samples": ds.len(),
        "train_samples": split.train.len(),
        "test_samples": split.test.len(),
        "strata": split.cells,
        "split_warnings": split.warnings,
        "excluded_bands": fit.run.excluded_bands,
        "train_rmse": fit.run.train_rmse,
        "baseline_train_rmse": baseline_rmse,
    });
    out.finish("fit", cli, details)
}

fn model_source(m: &ModelSource) -> Result<(String, TrendFile), Failure> {
    match (&m.material, &m.params) {
        (Some(name), None) => {
            let rec = builtin_material(name)?;
            Ok((
                rec.name.clone(),
                TrendFile::from_epld(&rec.name, &rec.trend, rec.nominal_thickness_m, None),
            ))
        }
        (None, Some(path)) => {
            let t = TrendFile::read(path)?;
            Ok((t.name.clone(), t))
        }
        _ => Err(Failure::Usage("give exactly one of --material or --params".into())),
    }
}

fn grid_samples(freqs: &[f64], angles: &[f64]) -> Vec<MeasurementSample> {
    angles
        .iter()
        .flat_map(|&t| freqs.iter().map(move |&f| MeasurementSample::new(f, t, 0.0)))
        .collect()
}

fn predict(cli: &Cli, a: &PredictArgs) -> Result<(), Failure> {
    let (name, trend) = model_source(&a.model)?;
    let predictor = trend.predictor(a.model.thickness_m)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    let mut details = serde_json::json!({ "material": name });
    if let (Some(f), Some(t)) = (a.freq_ghz, a.angle_deg) {
        let g = predictor.predict(&[MeasurementSample::new(f, t, 0.0)])?[0];
        println!("{g}");
        details["gamma"] = g.into();
    } else {
        let (Some(fs), Some(ts)) = (&a.freqs, &a.angles) else {
            return Err(Failure::Usage(
                "give --freq-ghz and --angle-deg, or --freqs and --angles".into(),
            ));
        };
        let mut samples = grid_samples(&grid_arg(fs, "freqs")?, &grid_arg(ts, "angles")?);
        let gamma = predictor.predict(&samples)?;
        samples.iter_mut().zip(gamma).for_each(|(s, g)| s.gamma = g);
        let text = samples_csv(&samples)?;
        match &a.output {
            Some(p) => out.write(p.clone(), &text)?,
            None => print!("{text}"),
        }
        details["points"] = samples.len().into();
    }
    out.finish("predict", cli, details)
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<(), Failure> {
    let (test, outliers) = read_samples_file(&a.test)?;
    if test.is_empty() {
        return Err(Failure::Ingestion(anyhow!("{}: no samples", a.test.display())));
    }
    let mut models = Vec::new();
    for p in &a.params {
        let t = TrendFile::read(p)?;
        let predictor = t.predictor(a.thickness_m)?;
        models.push((t.model.clone(), predictor));
    }
    let closures: Vec<_> = models
        .iter()
        .map(|(n, p)| (n.as_str(), move |s: &[MeasurementSample]| p.predict(s)))
        .collect();
    let entries = closures.iter().map(|(n, f)| (*n, f as PredictFn));
    let name = a.test.file_stem().and_then(|s| s.to_str()).unwrap_or("test");
    let report = compare_models(name, &test, entries, a.level)?;

    let mut out = Outputs::new(&cli.out_dir)?;
    let text = report.to_text();
    print!("{text}");
    out.write_named("report.txt", &text)?;
    out.write_named("report.json", &(report.to_json()? + "\n"))?;
    for (i, m) in report.models.iter().enumerate() {
        if let Some(cdf) = &m.cdf {
            let mut buf = Vec::new();
            cdf.write_csv(&mut buf)?;
            let file = format!("cdf_{}_{}.csv", i + 1, m.model);
            out.write_named(&file, &String::from_utf8(buf).map_err(|e| Failure::Internal(e.into()))?)?;
        }
    }
    let failed: Vec<_> = report
        .models
        .iter()
        .filter_map(|m| m.error.as_ref().map(|e| format!("{}: {e}", m.model)))
        .collect();
    let details = serde_json::json!({ "test_samples": test.len(), "outliers_dropped": outliers, "failed": failed });
    out.finish("eval", cli, details)?;
    if !failed.is_empty() {
        return Err(Failure::Fit(anyhow!("prediction failed for {}", failed.join("; "))));
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<(), Failure> {
    let rec = builtin_material(&a.material)?;
    let d = a.thickness_m.unwrap_or(rec.nominal_thickness_m);
    let freqs = grid_arg(&a.freqs, "freqs")?;
    let angles = grid_arg(&a.angles, "angles")?;
    let ds = synthesize_dataset(&rec.name, &rec.trend, d, &freqs, &angles, a.noise, cli.seed)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    let path = out.resolve(a.output.as_deref(), "synth.csv");
    out.write(path.clone(), &samples_csv(&ds.samples)?)?;
    eprintln!("wrote {} samples to {}", ds.len(), path.display());
    let details = serde_json::json!({ "material": rec.name, "thickness_m": d, "samples": ds.len() });
    out.finish("synth", cli, details)
}

fn export(cli: &Cli, a: &ExportArgs) -> Result<(), Failure> {
    let (name, trend) = model_source(&a.model)?;
    let d = a.model.thickness_m.unwrap_or(trend.thickness_m);
    let predictor = trend.predictor(Some(d))?;
    let freqs = grid_arg(&a.freqs, "freqs")?;
    let angles = grid_arg(&a.angles, "angles")?;
    let gamma = predictor.predict(&grid_samples(&freqs, &angles))?;
    let mut out = Outputs::new(&cli.out_dir)?;
    let path = out.resolve(a.output.as_deref(), "rt_table.csv");
    out.write(path, &rt_table(&name, d, &freqs, &angles, &gamma))?;
    let details =
        serde_json::json!({ "material": name, "thickness_m": d, "freqs": freqs.len(), "angles": angles.len() });
    out.finish("export", cli, details)
}

fn materials(cli: &Cli, a: &MaterialsArgs) -> Result<(), Failure> {
    let table = builtin_materials();
    match a.format {
        ListFormat::Toml => print!("{}", material_table_source()),
        ListFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(table).map_err(|e| Failure::Internal(e.into()))?
            )
        }
        ListFormat::Text => {
            println!(
                "{:<16} {:<9} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7}",
                "material", "class", "b1", "k2", "b2", "k3", "b3", "k4", "b4", "rmse", "bound90"
            );
            for m in table {
                let c = m.trend.components();
                let (p2, p4) = (c[1], *c.last().expect("p4"));
                let (k3, b3) = match m.class() {
                    MaterialClass::NonMetal => (format!("{:.4}", c[2].k), format!("{:.4}", c[2].b)),
                    MaterialClass::Metal => ("-".into(), "-".into()),
                };
                println!(
                    "{:<16} {:<9} {:>9.4} {:>8.4} {:>8.4} {:>8} {:>8} {:>8.4} {:>8.4} {:>7.4} {:>7.4}",
                    m.name,
                    m.class().to_string(),
                    c[0].b,
                    p2.k,
                    p2.b,
                    k3,
                    b3,
                    p4.k,
                    p4.b,
                    m.reference_rmse,
                    m.reference_bound90
                );
            }
        }
    }
    let out = Outputs::new(&cli.out_dir)?;
    out.finish("materials", cli, serde_json::json!({ "rows": table.len() }))
}
