//! Forward model and I0 against arbitrary-precision reference values
//! generated by tests/oracle/gen_fixtures.py.

use thzrefl_core::physics::*;
use thzrefl_core::specfun::bessel_i0_scaled;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn rows(name: &str) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(format!("{FIXTURES}/{name}")).unwrap();
    rdr.records().map(|r| r.unwrap()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn scalar(name: &str) -> f64 {
    rows("scalars.csv")
        .iter()
        .find(|r| &r[0] == name)
        .map(|r| num(&r[1]))
        .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn forward_model_matches_reference() {
    let cases = rows("forward.csv");
    assert_eq!(cases.len(), 100);
    let mut worst = 0.0f64;
    for r in &cases {
        let class: MaterialClass = r[0].parse().unwrap();
        let unit: FreqUnit = r[1].parse().unwrap();
        let p = match class {
            MaterialClass::NonMetal => SubBandParams::non_metal(num(&r[2]), num(&r[3]), num(&r[4]), num(&r[5])),
            MaterialClass::Metal => SubBandParams::metal(num(&r[2]), num(&r[3]), num(&r[5])),
        }
        .with_unit(unit);
        let inc = IncidenceInput::new(num(&r[6]), num(&r[7]), num(&r[8])).unwrap();
        let g = sli_epld(&inc, &p).unwrap();
        let e = rel(g, num(&r[9]));
        worst = worst.max(e);
        assert!(e < 1e-10, "{r:?}: {g} rel {e:e}");
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn bessel_matches_reference() {
    for r in rows("bessel.csv") {
        let x = num(&r[0]);
        let v = bessel_i0_scaled(x).unwrap();
        let tol = if x <= 15.0 { 1e-12 } else { 1e-10 };
        assert!(rel(v, num(&r[1])) < tol, "x = {x}: {v} vs {}", &r[1]);
    }
}

#[test]
fn scalar_examples() {
    let eta = ComplexValue::new(2.9, -0.05);
    let q = phase_thickness(eta, &IncidenceInput::new(350.0, 30.0, 3e-3).unwrap());
    assert!(rel(q.re, scalar("phase_thickness_re")) < 1e-12);
    assert!(rel(q.im, scalar("phase_thickness_im")) < 1e-12);

    let inc = IncidenceInput::new(350.0, 30.0, 5e-3).unwrap();
    assert!(rel(sli_baseline(&inc, 6.31, 0.3).unwrap(), scalar("baseline_6.31_0.3")) < 1e-11);

    let glass = thzrefl_core::data::builtin_material("Glass").unwrap();
    let g = glass.trend.reflection(&inc).unwrap();
    assert!(rel(g, scalar("glass_350_30_5mm")) < 1e-10, "{g}");

    let eta = permittivity_empirical(6.31, 0.42, 350.0).unwrap();
    assert!(rel(eta.im, scalar("empirical_im_6.31_0.42_350")) < 1e-13);
}
