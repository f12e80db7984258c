use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use thzrefl_bench::{glass, glass_band};
use thzrefl_core::physics::{sli_epld, FreqUnit, IncidenceInput};
use thzrefl_core::specfun::bessel_i0_scaled;
use thzrefl_core::wftrend::{fit_band, partition_bands, EpldModel};
use thzrefl_core::LmConfig;

fn forward(c: &mut Criterion) {
    let m = glass();
    let p = m.trend.at(350.0).unwrap();
    let inc = IncidenceInput::new(350.0, 30.0, m.nominal_thickness_m).unwrap();
    c.bench_function("sli_epld", |b| b.iter(|| sli_epld(black_box(&inc), black_box(&p))));
}

fn bessel(c: &mut Criterion) {
    let mut g = c.benchmark_group("bessel_i0_scaled");
    for x in [0.5, 14.0, 40.0] {
        g.bench_function(format!("x={x}"), |b| b.iter(|| bessel_i0_scaled(black_box(x))));
    }
    g.finish();
}

fn band_fit(c: &mut Criterion) {
    let m = glass();
    let samples = glass_band();
    let band = partition_bands(340.0, 350.0, 10.0).unwrap().remove(0);
    let model = EpldModel::new(m.class(), m.nominal_thickness_m);
    let init = m.trend.with_unit(FreqUnit::Thz).at(345.0).unwrap().to_log10();
    let lm = LmConfig::default();
    c.bench_function("fit_band/glass", |b| {
        b.iter(|| fit_band(&model, band, black_box(&samples), &init, &lm))
    });
}

criterion_group!(benches, forward, bessel, band_fit);
criterion_main!(benches);
