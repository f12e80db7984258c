//! Special functions needed by the reflection model.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Crossover between the power series and the asymptotic expansion.
pub const I0_SERIES_LIMIT: f64 = 15.0;

const MAX_SERIES_TERMS: usize = 200;
const MAX_ASYMPTOTIC_TERMS: usize = 40;

/// Exponentially scaled modified Bessel function `exp(-x) * I0(x)` for `x >= 0`.
///
/// Uses the power series `sum (x/2)^(2m) / (m!)^2` up to `x = 15` and the
/// Hankel asymptotic expansion above it. The asymptotic series is summed until
/// the terms stop shrinking, which always takes at least eight terms at the seam.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_i0_scaled needs finite x >= 0, got {x}")));
    }
    if x <= I0_SERIES_LIMIT {
        Ok(series(x) * (-x).exp())
    } else {
        Ok(asymptotic(x))
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..MAX_SERIES_TERMS {
        let m = m as f64;
        term *= q / (m * m);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=MAX_ASYMPTOTIC_TERMS {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (8.0 * k as f64 * x);
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Square root on the branch with a non-positive imaginary part.
///
/// Takes the principal root and negates it when its imaginary part is
/// positive, so a transmitted wave `exp(-j k z sqrt(z))` decays into the slab.
pub fn complex_sqrt_lossy(z: Complex64) -> Complex64 {
    let s = z.sqrt();
    if s.im > 0.0 {
        -s
    } else {
        s
    }
}
