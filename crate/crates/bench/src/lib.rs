//! Shared inputs for the benchmarks.

use thzrefl_core::data::{builtin_material, default_angle_grid, grid, synthesize_dataset};
use thzrefl_core::{MaterialRecord, MeasurementSample};

pub fn glass() -> &'static MaterialRecord {
    builtin_material("Glass").expect("glass row")
}

/// Noiseless glass samples covering one 10 GHz band at all eight angles.
pub fn glass_band() -> Vec<MeasurementSample> {
    let m = glass();
    let freqs = grid(340.0, 1.0 / 12.0, 350.0).expect("grid");
    synthesize_dataset(
        "glass",
        &m.trend,
        m.nominal_thickness_m,
        &freqs,
        &default_angle_grid(),
        0.0,
        0,
    )
    .expect("synth")
    .samples
}
