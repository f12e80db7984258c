use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn thzrefl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thzrefl"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .expect("spawn thzrefl")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("freq_ghz"))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn synth_default_grid_has_9608_rows_and_is_seeded() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for p in [&a, &b, &c] {
        std::fs::create_dir(p).unwrap();
    }
    ok(&thzrefl(&a, &["synth", "--material", "Glass", "--noise", "0.01"]));
    ok(&thzrefl(&b, &["synth", "--material", "Glass", "--noise", "0.01"]));
    ok(&thzrefl(
        &c,
        &["--seed", "7", "synth", "--material", "Glass", "--noise", "0.01"],
    ));
    let first = read(&a, "synth.csv");
    assert!(first.starts_with("# thzrefl-samples v1\n"));
    assert_eq!(data_rows(&first).len(), 9608);
    assert_eq!(first, read(&b, "synth.csv"));
    assert_ne!(first, read(&c, "synth.csv"));
    assert!(a.join("manifest-synth.json").exists());
}

#[test]
fn predict_export_and_noiseless_synth_agree() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let grids = ["--freqs", "300:12.5:400", "--angles", "10:35:80"];
    let mut args = vec!["synth", "--material", "Tile", "--noise", "0"];
    args.extend(grids);
    ok(&thzrefl(d, &args));
    let mut args = vec!["predict", "--material", "Tile", "--output", "pred.csv"];
    args.extend(grids);
    ok(&thzrefl(d, &args));
    let mut args = vec!["export", "--material", "Tile", "--format", "rt-table"];
    args.extend(grids);
    ok(&thzrefl(d, &args));

    let synth = data_rows(&read(d, "synth.csv"));
    let pred = data_rows(&read(d, "pred.csv"));
    assert_eq!(pred.len(), 9 * 3);
    assert_eq!(synth, pred);

    let table = read(d, "rt_table.csv");
    assert!(table.starts_with("# thzrefl-rt-table v1\n"));
    assert!(table.lines().any(|l| l == "freq_ghz,10,45,80"));
    let rows = data_rows(&table);
    assert_eq!((rows.len(), rows[0].len()), (9, 4));
    for p in &pred {
        let row = rows.iter().find(|r| r[0] == p[0]).unwrap();
        let col = [10.0, 45.0, 80.0].iter().position(|&a| a == p[1]).unwrap() + 1;
        assert_eq!(row[col], p[2]);
    }
}

#[test]
fn predict_single_point() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&thzrefl(
        tmp.path(),
        &[
            "predict",
            "--material",
            "glass",
            "--freq-ghz",
            "350",
            "--angle-deg",
            "30",
        ],
    ));
    let g: f64 = out.trim().parse().unwrap();
    assert!((g - 0.0017290540327902).abs() < 1e-12, "{g}");
    let out = ok(&thzrefl(
        tmp.path(),
        &[
            "predict",
            "--material",
            "Aluminum",
            "--freq-ghz",
            "350",
            "--angle-deg",
            "30",
        ],
    ));
    let g: f64 = out.trim().parse().unwrap();
    assert!(g > 0.99 && g <= 1.0, "{g}");
}

#[test]
fn fit_then_eval() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&thzrefl(d, &["synth", "--material", "Glass", "--noise", "0.01"]));
    let out = ok(&thzrefl(
        d,
        &[
            "fit",
            "--input",
            "synth.csv",
            "--material-class",
            "non-metal",
            "--thickness-m",
            "0.005",
            "--baseline",
        ],
    ));
    assert!(out.contains("train rmse (sli-epld)"));
    let bands = read(d, "bands.csv");
    assert_eq!(bands.lines().filter(|l| !l.starts_with('#')).count(), 11);
    let manifest: serde_json::Value = serde_json::from_str(&read(d, "manifest-fit.json")).unwrap();
    assert_eq!(manifest["config"]["command"]["fit"]["delta_f"], 10.0);
    assert_eq!(manifest["config"]["seed"], 42);

    let out = ok(&thzrefl(
        d,
        &["eval", "--test", "test.csv", "--params", "trend.toml,baseline.toml"],
    ));
    assert!(out.starts_with("# thzrefl-report v1\n"));
    let report: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    let rmse = report["models"][0]["rmse"].as_f64().unwrap();
    assert!((0.008..0.012).contains(&rmse), "{rmse}");
    assert!(d.join("cdf_1_sli-epld.csv").exists() && d.join("cdf_2_sli-empirical.csv").exists());
}

#[test]
fn eval_of_generating_params_on_noiseless_data_is_zero() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&thzrefl(
        d,
        &["synth", "--material", "PVC", "--noise", "0", "--freqs", "300:5:400"],
    ));
    std::fs::write(
        d.join("pvc.toml"),
        "# thzrefl-trend v1\nmodel = \"sli-epld\"\nname = \"PVC\"\nclass = \"non-metal\"\nunit = \"thz\"\n\
         thickness_m = 0.003\nlines = [\n  { k = 0.0, b = -14.5305 },\n  { k = -0.1218, b = 2.8488 },\n  \
         { k = 0.1210, b = 2.9848 },\n  { k = 0.1042, b = -2.5683 },\n]\n",
    )
    .unwrap();
    ok(&thzrefl(d, &["eval", "--test", "synth.csv", "--params", "pvc.toml"]));
    let report: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    assert!(report["models"][0]["rmse"].as_f64().unwrap() < 1e-15);
}

#[test]
fn missing_thickness_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = thzrefl(
        tmp.path(),
        &["fit", "--input", "x.csv", "--material-class", "non-metal"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = thzrefl(
        d,
        &[
            "predict",
            "--material",
            "Copper",
            "--freq-ghz",
            "350",
            "--angle-deg",
            "30",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Glass"));

    std::fs::write(
        d.join("bad.csv"),
        "# thzrefl-samples v1\nfreq,angle,gamma\n300,10,0.1\n",
    )
    .unwrap();
    let out = thzrefl(d, &["eval", "--test", "bad.csv", "--params", "none.toml"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("few.csv"), "freq_ghz,angle_deg,gamma\n300,10,0.1\n301,10,0.2\n").unwrap();
    let out = thzrefl(
        d,
        &[
            "fit",
            "--input",
            "few.csv",
            "--material-class",
            "non-metal",
            "--thickness-m",
            "0.005",
            "--train-frac",
            "0.9",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = thzrefl(d, &["synth", "--material", "Glass", "--freqs", "400:1:300"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wide_delta_f_warns_about_a_single_band() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&thzrefl(
        d,
        &[
            "synth",
            "--material",
            "Aluminum",
            "--noise",
            "0.001",
            "--freqs",
            "300:1:400",
            "--angles",
            "20:20:60",
        ],
    ));
    let out = thzrefl(
        d,
        &[
            "fit",
            "--input",
            "synth.csv",
            "--material-class",
            "metal",
            "--thickness-m",
            "0.002",
            "--delta-f",
            "200",
        ],
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("single band"));
}

#[test]
fn config_file_and_environment_precedence() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("run.conf"),
        "# synth defaults\nnoise = 0.02\nfreqs = \"300:50:400\"\nangles = 10:10:30\n",
    )
    .unwrap();
    let run = |env: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_thzrefl"));
        cmd.env_clear()
            .arg("--out-dir")
            .arg(d)
            .arg("--config")
            .arg(d.join("run.conf"));
        cmd.args(["synth", "--material", "Glass"]).args(extra);
        for (k, v) in env {
            cmd.env(k, v);
        }
        ok(&cmd.output().unwrap());
        let m: serde_json::Value = serde_json::from_str(&read(d, "manifest-synth.json")).unwrap();
        m["config"]["command"]["synth"].clone()
    };
    let c = run(&[], &[]);
    assert_eq!(
        (c["noise"].as_f64(), c["freqs"].as_str()),
        (Some(0.02), Some("300:50:400"))
    );
    assert_eq!(data_rows(&read(d, "synth.csv")).len(), 9);
    let c = run(&[("THZREFL_NOISE", "0.03")], &[]);
    assert_eq!(c["noise"].as_f64(), Some(0.03));
    let c = run(&[("THZREFL_NOISE", "0.03")], &["--noise", "0.04"]);
    assert_eq!(c["noise"].as_f64(), Some(0.04));

    std::fs::write(d.join("bad.conf"), "no_such_option = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_thzrefl"))
        .env_clear()
        .args(["--config"])
        .arg(d.join("bad.conf"))
        .args(["materials"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn materials_lists_nine_rows_in_table_order() {
    let tmp = TempDir::new().unwrap();
    let text = ok(&thzrefl(tmp.path(), &["materials"]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("Glass") && rows[8].starts_with("Stainless steel"));
    assert!(rows[0].contains("-14.7072") && rows[0].contains("-0.1444") && rows[0].contains("2.9835"));

    let json: serde_json::Value =
        serde_json::from_str(&ok(&thzrefl(tmp.path(), &["materials", "--format", "json"]))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 9);
    let toml_text = ok(&thzrefl(tmp.path(), &["materials", "--format", "toml"]));
    assert!(toml_text.contains("Stainless steel"));
}
