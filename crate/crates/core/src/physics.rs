//! Closed-form reflection physics.
//!
//! Everything here is a pure function. Public entry points take frequency in
//! GHz, angles in degrees from the surface normal and thickness in meters;
//! only the free-space wavelength is formed in SI units.
//!
//! Permittivities follow the `exp(+jwt)` convention of the empirical
//! conductivity model, so passive media have `Im(eta) <= 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{bessel_i0_scaled, complex_sqrt_lossy};

pub type ComplexValue = Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

const DEGENERATE_FLOOR: f64 = 1e-300;
/// Largest accepted magnitude above one, covering rounding only.
const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialClass {
    Metal,
    NonMetal,
}

impl MaterialClass {
    /// Number of macroscopic parameters the class carries.
    pub fn param_count(self) -> usize {
        match self {
            MaterialClass::Metal => 3,
            MaterialClass::NonMetal => 4,
        }
    }
}

impl std::str::FromStr for MaterialClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "metal" => Ok(MaterialClass::Metal),
            "non-metal" | "nonmetal" => Ok(MaterialClass::NonMetal),
            other => Err(Error::InvalidData(format!("unknown material class '{other}'"))),
        }
    }
}

impl std::fmt::Display for MaterialClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaterialClass::Metal => "metal",
            MaterialClass::NonMetal => "non-metal",
        })
    }
}

/// Frequency unit in which the dispersion parameters `p2..p4` and the trend
/// slopes are expressed. The roughness parameter `p1` is always per GHz^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqUnit {
    Ghz,
    #[default]
    Thz,
}

impl FreqUnit {
    /// Converts a frequency in GHz into this unit.
    pub fn from_ghz(self, f_ghz: f64) -> f64 {
        match self {
            FreqUnit::Ghz => f_ghz,
            FreqUnit::Thz => f_ghz * 1e-3,
        }
    }
}

impl std::str::FromStr for FreqUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ghz" => Ok(FreqUnit::Ghz),
            "thz" => Ok(FreqUnit::Thz),
            other => Err(Error::InvalidData(format!("unknown frequency unit '{other}'"))),
        }
    }
}

/// Macroscopic parameter vector of one sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBandParams {
    pub class: MaterialClass,
    pub unit: FreqUnit,
    /// Roughness scale, GHz^-2.
    pub p1: f64,
    pub p2: f64,
    /// Resonance term, non-metals only.
    pub p3: Option<f64>,
    pub p4: f64,
}

impl SubBandParams {
    pub fn non_metal(p1: f64, p2: f64, p3: f64, p4: f64) -> Self {
        Self {
            class: MaterialClass::NonMetal,
            unit: FreqUnit::default(),
            p1,
            p2,
            p3: Some(p3),
            p4,
        }
    }

    pub fn metal(p1: f64, p2: f64, p4: f64) -> Self {
        Self {
            class: MaterialClass::Metal,
            unit: FreqUnit::default(),
            p1,
            p2,
            p3: None,
            p4,
        }
    }

    pub fn with_unit(mut self, unit: FreqUnit) -> Self {
        self.unit = unit;
        self
    }

    /// Checks positivity and the class/`p3` pairing.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        // p1 = 0 is a perfectly smooth surface.
        if !(self.p1 >= 0.0 && self.p1.is_finite()) {
            return Err(Error::Domain(format!("p1 must be finite and >= 0, got {}", self.p1)));
        }
        positive("p2", self.p2)?;
        positive("p4", self.p4)?;
        match (self.class, self.p3) {
            (MaterialClass::NonMetal, Some(p3)) => positive("p3", p3),
            (MaterialClass::Metal, None) => Ok(()),
            (MaterialClass::NonMetal, None) => Err(Error::Domain("non-metal params need p3".into())),
            (MaterialClass::Metal, Some(_)) => Err(Error::Domain("metal params carry no p3".into())),
        }
    }

    /// The parameters as `log10` values in solver order: `[p1, p2, p3, p4]`
    /// for non-metals and `[p1, p2, p4]` for metals.
    pub fn to_log10(&self) -> Vec<f64> {
        let mut v = vec![self.p1.log10(), self.p2.log10()];
        if let Some(p3) = self.p3 {
            v.push(p3.log10());
        }
        v.push(self.p4.log10());
        v
    }

    /// Inverse of [`SubBandParams::to_log10`].
    pub fn from_log10(class: MaterialClass, unit: FreqUnit, logs: &[f64]) -> Result<Self> {
        if logs.len() != class.param_count() {
            return Err(Error::LengthMismatch(logs.len(), class.param_count()));
        }
        let mut pow = Vec::with_capacity(logs.len());
        for (i, &e) in logs.iter().enumerate() {
            pow.push(pow10(i + 1, e)?);
        }
        let p = match class {
            MaterialClass::NonMetal => SubBandParams::non_metal(pow[0], pow[1], pow[2], pow[3]),
            MaterialClass::Metal => SubBandParams::metal(pow[0], pow[1], pow[2]),
        };
        Ok(p.with_unit(unit))
    }
}

fn pow10(index: usize, exponent: f64) -> Result<f64> {
    if !exponent.is_finite() || exponent.abs() > 300.0 {
        return Err(Error::Overflow { index, exponent });
    }
    Ok(10f64.powf(exponent))
}

/// Geometry of one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidenceInput {
    pub f_ghz: f64,
    pub theta_deg: f64,
    pub d_m: f64,
}

impl IncidenceInput {
    pub fn new(f_ghz: f64, theta_deg: f64, d_m: f64) -> Result<Self> {
        if !(f_ghz > 0.0 && f_ghz.is_finite()) {
            return Err(Error::Domain(format!("frequency must be > 0 GHz, got {f_ghz}")));
        }
        check_angle(theta_deg)?;
        if !(d_m > 0.0 && d_m.is_finite()) {
            return Err(Error::Domain(format!("thickness must be > 0 m, got {d_m}")));
        }
        Ok(Self { f_ghz, theta_deg, d_m })
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.f_ghz * 1e9)
    }
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if (0.0..90.0).contains(&theta_deg) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "incidence angle must be in [0, 90) deg, got {theta_deg}"
        )))
    }
}

/// Slope/intercept pair of `log10 p = k f + b`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogLinear {
    pub k: f64,
    pub b: f64,
}

impl LogLinear {
    pub fn constant(b: f64) -> Self {
        Self { k: 0.0, b }
    }

    pub fn exponent(&self, f: f64) -> f64 {
        self.k * f + self.b
    }
}

/// Log-linear frequency map of the sub-band parameters.
///
/// `p1` never has a slope. Metals have no `p3` and constant `p2`, `p4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendParams {
    pub class: MaterialClass,
    #[serde(default)]
    pub unit: FreqUnit,
    pub p1: LogLinear,
    pub p2: LogLinear,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<LogLinear>,
    pub p4: LogLinear,
}

impl TrendParams {
    pub fn non_metal(b1: f64, p2: LogLinear, p3: LogLinear, p4: LogLinear) -> Self {
        Self {
            class: MaterialClass::NonMetal,
            unit: FreqUnit::default(),
            p1: LogLinear::constant(b1),
            p2,
            p3: Some(p3),
            p4,
        }
    }

    pub fn metal(b1: f64, b2: f64, b4: f64) -> Self {
        Self {
            class: MaterialClass::Metal,
            unit: FreqUnit::default(),
            p1: LogLinear::constant(b1),
            p2: LogLinear::constant(b2),
            p3: None,
            p4: LogLinear::constant(b4),
        }
    }

    pub fn with_unit(mut self, unit: FreqUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.p1, self.p2, self.p4]
            .iter()
            .chain(self.p3.iter())
            .all(|t| t.k.is_finite() && t.b.is_finite());
        if !finite {
            return Err(Error::InvalidData("trend parameters must be finite".into()));
        }
        if self.p1.k != 0.0 {
            return Err(Error::InvalidData("p1 trend slope must be zero".into()));
        }
        match self.class {
            MaterialClass::NonMetal if self.p3.is_none() => Err(Error::InvalidData("non-metal trend needs p3".into())),
            MaterialClass::Metal if self.p3.is_some() => Err(Error::InvalidData("metal trend carries no p3".into())),
            MaterialClass::Metal if self.p2.k != 0.0 || self.p4.k != 0.0 => {
                Err(Error::InvalidData("metal trend slopes must be zero".into()))
            }
            _ => Ok(()),
        }
    }

    /// Trends in solver order (see [`SubBandParams::to_log10`]).
    pub fn components(&self) -> Vec<LogLinear> {
        let mut v = vec![self.p1, self.p2];
        v.extend(self.p3);
        v.push(self.p4);
        v
    }

    /// Builds trend params from per-component lines in solver order.
    pub fn from_components(class: MaterialClass, unit: FreqUnit, c: &[LogLinear]) -> Result<Self> {
        if c.len() != class.param_count() {
            return Err(Error::LengthMismatch(c.len(), class.param_count()));
        }
        let t = match class {
            MaterialClass::NonMetal => Self {
                class,
                unit,
                p1: c[0],
                p2: c[1],
                p3: Some(c[2]),
                p4: c[3],
            },
            MaterialClass::Metal => Self {
                class,
                unit,
                p1: c[0],
                p2: c[1],
                p3: None,
                p4: c[2],
            },
        };
        t.validate()?;
        Ok(t)
    }

    /// Sub-band parameters at `f_ghz`: `p_l = 10^(k_l f + b_l)`.
    pub fn at(&self, f_ghz: f64) -> Result<SubBandParams> {
        trend_to_subband(self, f_ghz)
    }

    /// Forward model at one geometry.
    pub fn reflection(&self, inc: &IncidenceInput) -> Result<f64> {
        sli_epld(inc, &self.at(inc.f_ghz)?)
    }
}

/// `p_l = 10^(k_l f + b_l)` with `f` in the trend's dispersion unit.
pub fn trend_to_subband(trend: &TrendParams, f_ghz: f64) -> Result<SubBandParams> {
    if !(f_ghz > 0.0 && f_ghz.is_finite()) {
        return Err(Error::Domain(format!("frequency must be > 0 GHz, got {f_ghz}")));
    }
    trend.validate()?;
    let f = trend.unit.from_ghz(f_ghz);
    let logs: Vec<f64> = trend.components().iter().map(|c| c.exponent(f)).collect();
    SubBandParams::from_log10(trend.class, trend.unit, &logs)
}

/// Empirical conductivity permittivity `eps_r - j sigma / (2 pi f eps0)`.
pub fn permittivity_empirical(eps_r: f64, sigma: f64, f_ghz: f64) -> Result<Complex64> {
    if !(f_ghz > 0.0 && f_ghz.is_finite()) {
        return Err(Error::Domain(format!("frequency must be > 0 GHz, got {f_ghz}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite() && eps_r.is_finite()) {
        return Err(Error::Domain(format!("invalid eps_r={eps_r}, sigma={sigma}")));
    }
    let omega = 2.0 * PI * f_ghz * 1e9;
    Ok(Complex64::new(eps_r, -sigma / (omega * VACUUM_PERMITTIVITY)))
}

/// Parameterized Lorentz permittivity `1 + p2 / (p3 - p4 f^2 + j f)`.
pub fn permittivity_lorentz(p: &SubBandParams, f_ghz: f64) -> Result<Complex64> {
    let p3 = match (p.class, p.p3) {
        (MaterialClass::NonMetal, Some(p3)) => p3,
        _ => return Err(Error::Domain("Lorentz permittivity needs non-metal params".into())),
    };
    let f = p.unit.from_ghz(f_ghz);
    let den = Complex64::new(p3 - p.p4 * f * f, f);
    Ok(1.0 + p.p2 / den)
}

/// Parameterized Drude permittivity `1 - p2 / (p4 - j f)`.
pub fn permittivity_drude(p: &SubBandParams, f_ghz: f64) -> Result<Complex64> {
    if p.class != MaterialClass::Metal {
        return Err(Error::Domain("Drude permittivity needs metal params".into()));
    }
    let f = p.unit.from_ghz(f_ghz);
    let den = Complex64::new(p.p4, -f);
    Ok(1.0 - p.p2 / den)
}

/// Class-dispatched permittivity.
pub fn permittivity(p: &SubBandParams, f_ghz: f64) -> Result<Complex64> {
    match p.class {
        MaterialClass::NonMetal => permittivity_lorentz(p, f_ghz),
        MaterialClass::Metal => permittivity_drude(p, f_ghz),
    }
}

fn normal_component(eta: Complex64, theta_deg: f64) -> Complex64 {
    let s = theta_deg.to_radians().sin();
    complex_sqrt_lossy(eta - s * s)
}

/// TE Fresnel reflection `(cos t - sqrt(eta - sin^2 t)) / (cos t + sqrt(eta - sin^2 t))`.
pub fn fresnel_te(eta: Complex64, theta_deg: f64) -> Result<Complex64> {
    check_angle(theta_deg)?;
    let c = theta_deg.to_radians().cos();
    let root = normal_component(eta, theta_deg);
    let den = c + root;
    if den.norm() < DEGENERATE_FLOOR {
        return Err(Error::Degenerate("Fresnel denominator vanishes"));
    }
    Ok((c - root) / den)
}

/// Slab phase thickness `q = (2 pi d / lambda) sqrt(eta - sin^2 t)`.
pub fn phase_thickness(eta: Complex64, inc: &IncidenceInput) -> Complex64 {
    2.0 * PI * inc.d_m / inc.wavelength_m() * normal_component(eta, inc.theta_deg)
}

/// Single-layer interference magnitude `|R (1 - e^{-j2q}) / (1 - R^2 e^{-j2q})|`.
pub fn sli_magnitude(r: Complex64, q: Complex64) -> Result<f64> {
    if !(r.re.is_finite() && r.im.is_finite() && q.re.is_finite() && q.im.is_finite()) {
        return Err(Error::Domain("non-finite Fresnel or phase term".into()));
    }
    let round_trip = (Complex64::new(0.0, -2.0) * q).exp();
    let den = 1.0 - r * r * round_trip;
    if den.norm() < DEGENERATE_FLOOR {
        return Err(Error::Degenerate("interference denominator vanishes"));
    }
    Ok((r * (1.0 - round_trip) / den).norm())
}

/// Specular roughness loss `exp(-x) I0(x)`, `x = p1 f^2 cos^2 t` with `f` in GHz.
pub fn roughness_factor(p1: f64, f_ghz: f64, theta_deg: f64) -> Result<f64> {
    if !(p1 >= 0.0) {
        return Err(Error::Domain(format!("p1 must be >= 0, got {p1}")));
    }
    let c = theta_deg.to_radians().cos();
    bessel_i0_scaled(p1 * f_ghz * f_ghz * c * c)
}

fn checked_magnitude(g: f64) -> Result<f64> {
    if g.is_finite() && (0.0..=1.0 + UNIT_SLACK).contains(&g) {
        Ok(g)
    } else {
        Err(Error::NonPhysical(g))
    }
}

/// Full sub-band reflection model: roughness times slab interference with the
/// class-dispatched Lorentz/Drude permittivity.
pub fn sli_epld(inc: &IncidenceInput, p: &SubBandParams) -> Result<f64> {
    p.validate()?;
    let eta = permittivity(p, inc.f_ghz)?;
    let r = fresnel_te(eta, inc.theta_deg)?;
    let q = phase_thickness(eta, inc);
    let rho = roughness_factor(p.p1, inc.f_ghz, inc.theta_deg)?;
    checked_magnitude(rho * sli_magnitude(r, q)?)
}

/// Classic slab model with the empirical conductivity permittivity and no roughness.
pub fn sli_baseline(inc: &IncidenceInput, eps_r: f64, sigma: f64) -> Result<f64> {
    let eta = permittivity_empirical(eps_r, sigma, inc.f_ghz)?;
    let r = fresnel_te(eta, inc.theta_deg)?;
    let q = phase_thickness(eta, inc);
    checked_magnitude(sli_magnitude(r, q)?)
}
