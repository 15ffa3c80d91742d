//! Auditory frequency scales and their kernel-size-driven linearization.
//!
//! An [`AuditoryScale`] warps `[0, fs/2]` (Hz) onto auditory units. Each scale
//! has a forward map, an inverse and a bandwidth function. Only the ERB scale
//! carries a native bandwidth formula; every other scale gets its bandwidth
//! from the derivative of the inverse map, `B(f) = (F⁻¹)'(F(f))`.
//!
//! A [`LinearizedScale`] replaces the scale below a transition frequency `f*`
//! by its tangent line at `f*`, which is what keeps low-frequency kernels at a
//! fixed maximal size.

use std::f64::consts::LN_10;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative slack when checking that a frequency lies in `[0, fs/2]`.
const DOMAIN_SLACK: f64 = 1e-9;

/// A frequency warp. Implement this to register a custom scale.
///
/// Only [`ScaleMap::name`] and [`ScaleMap::to_units`] are required; the
/// remaining hooks fall back to bisection and numerical differentiation.
pub trait ScaleMap: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    /// `F_S(f)`; must be strictly increasing on `[0, fs/2]`.
    fn to_units(&self, hz: f64) -> f64;

    /// Closed-form inverse, when available.
    fn to_hz(&self, _units: f64) -> Option<f64> {
        None
    }

    /// Closed-form derivative `F_S'(f)`, when available.
    fn slope(&self, _hz: f64) -> Option<f64> {
        None
    }

    /// Bandwidth function belonging to the scale itself, if it has one.
    fn native_bandwidth(&self, _hz: f64) -> Option<f64> {
        None
    }

    /// Frequency at which the native bandwidth equals `bw`, in closed form.
    fn native_bandwidth_inverse(&self, _bw: f64) -> Option<f64> {
        None
    }
}

/// Equivalent rectangular bandwidth scale.
#[derive(Debug, Clone, Copy, Default)]
pub struct Erb;

impl Erb {
    const GAIN: f64 = 9.265;
    const CORNER: f64 = 228.8455;
    const MIN_BANDWIDTH: f64 = 24.7;
}

impl ScaleMap for Erb {
    fn name(&self) -> &str {
        "erb"
    }

    fn to_units(&self, hz: f64) -> f64 {
        Self::GAIN * (hz / Self::CORNER).ln_1p()
    }

    fn to_hz(&self, units: f64) -> Option<f64> {
        Some(Self::CORNER * (units / Self::GAIN).exp_m1())
    }

    fn slope(&self, hz: f64) -> Option<f64> {
        Some(Self::GAIN / (Self::CORNER + hz))
    }

    fn native_bandwidth(&self, hz: f64) -> Option<f64> {
        Some(Self::MIN_BANDWIDTH + hz / Self::GAIN)
    }

    fn native_bandwidth_inverse(&self, bw: f64) -> Option<f64> {
        Some(Self::GAIN * (bw - Self::MIN_BANDWIDTH))
    }
}

/// Mel scale measured in hundreds of mels, so that one unit is roughly one
/// critical band and the derivative bandwidth is of ERB magnitude.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mel;

impl Mel {
    const GAIN: f64 = 25.95;
    const CORNER: f64 = 700.0;
}

impl ScaleMap for Mel {
    fn name(&self) -> &str {
        "mel"
    }

    fn to_units(&self, hz: f64) -> f64 {
        Self::GAIN * (1.0 + hz / Self::CORNER).log10()
    }

    fn to_hz(&self, units: f64) -> Option<f64> {
        Some(Self::CORNER * (10f64.powf(units / Self::GAIN) - 1.0))
    }

    fn slope(&self, hz: f64) -> Option<f64> {
        Some(Self::GAIN / ((Self::CORNER + hz) * LN_10))
    }
}

/// Logarithmic scale with a 100 Hz corner.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logarithmic;

impl Logarithmic {
    const GAIN: f64 = 9.265;
    const CORNER: f64 = 100.0;
}

impl ScaleMap for Logarithmic {
    fn name(&self) -> &str {
        "log"
    }

    fn to_units(&self, hz: f64) -> f64 {
        Self::GAIN * (hz / Self::CORNER).ln_1p()
    }

    fn to_hz(&self, units: f64) -> Option<f64> {
        Some(Self::CORNER * (units / Self::GAIN).exp_m1())
    }

    fn slope(&self, hz: f64) -> Option<f64> {
        Some(Self::GAIN / (Self::CORNER + hz))
    }
}

/// Linear scale, one unit per 100 Hz.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

impl ScaleMap for Linear {
    fn name(&self) -> &str {
        "linear"
    }

    fn to_units(&self, hz: f64) -> f64 {
        hz / 100.0
    }

    fn to_hz(&self, units: f64) -> Option<f64> {
        Some(units * 100.0)
    }

    fn slope(&self, _hz: f64) -> Option<f64> {
        Some(0.01)
    }
}

/// A scale bound to the frequency range `[0, fs/2]` of a sample rate.
#[derive(Clone)]
pub struct AuditoryScale {
    map: Arc<dyn ScaleMap>,
    nyquist: f64,
}

impl fmt::Debug for AuditoryScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditoryScale")
            .field("name", &self.name())
            .field("nyquist", &self.nyquist)
            .finish()
    }
}

impl AuditoryScale {
    pub fn new(map: Arc<dyn ScaleMap>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {fs}")));
        }
        Ok(Self { map, nyquist: fs / 2.0 })
    }

    pub fn erb(fs: f64) -> Result<Self> {
        Self::new(Arc::new(Erb), fs)
    }

    /// Looks up a built-in scale: `"erb"`, `"mel"`, `"log"` or `"linear"`.
    pub fn from_name(name: &str, fs: f64) -> Result<Self> {
        let map: Arc<dyn ScaleMap> = match name.to_ascii_lowercase().as_str() {
            "erb" => Arc::new(Erb),
            "mel" => Arc::new(Mel),
            "log" => Arc::new(Logarithmic),
            "linear" => Arc::new(Linear),
            other => return Err(Error::Config(format!("unknown scale '{other}'"))),
        };
        Self::new(map, fs)
    }

    pub fn name(&self) -> &str {
        self.map.name()
    }

    pub fn nyquist(&self) -> f64 {
        self.nyquist
    }

    pub fn has_native_bandwidth(&self) -> bool {
        self.map.native_bandwidth(0.0).is_some()
    }

    pub(crate) fn native_bandwidth_inverse(&self, bw: f64) -> Option<f64> {
        self.map.native_bandwidth_inverse(bw)
    }

    fn check_hz(&self, hz: f64) -> Result<f64> {
        let slack = DOMAIN_SLACK * self.nyquist;
        if hz.is_nan() || hz < -slack || hz > self.nyquist + slack {
            return Err(Error::Domain(format!(
                "frequency {hz} Hz outside [0, {}]",
                self.nyquist
            )));
        }
        Ok(hz.clamp(0.0, self.nyquist))
    }

    /// Image of `[0, fs/2]` in auditory units.
    pub fn range(&self) -> (f64, f64) {
        (self.map.to_units(0.0), self.map.to_units(self.nyquist))
    }

    /// `F_S(f)`.
    pub fn forward(&self, hz: f64) -> Result<f64> {
        let hz = self.check_hz(hz)?;
        Ok(self.map.to_units(hz))
    }

    /// `F_S⁻¹(s)`; bisection to 1e-9 Hz when the scale has no closed form.
    pub fn inverse(&self, units: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        let slack = DOMAIN_SLACK * (hi - lo).abs().max(1.0);
        if units.is_nan() || units < lo - slack || units > hi + slack {
            return Err(Error::Domain(format!(
                "scale value {units} outside [{lo}, {hi}]"
            )));
        }
        let units = units.clamp(lo, hi);
        Ok(self.inverse_in_range(units))
    }

    fn inverse_in_range(&self, units: f64) -> f64 {
        if let Some(hz) = self.map.to_hz(units) {
            return hz.clamp(0.0, self.nyquist);
        }
        let (mut lo, mut hi) = (0.0, self.nyquist);
        for _ in 0..200 {
            if hi - lo <= 1e-9 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.map.to_units(mid) < units {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `F_S'(f)`.
    pub fn derivative(&self, hz: f64) -> Result<f64> {
        let hz = self.check_hz(hz)?;
        Ok(match self.map.slope(hz) {
            Some(s) => s,
            None => bounded_derivative(|f| self.map.to_units(f), hz, 0.0, self.nyquist),
        })
    }

    /// `B_S(f)`: the native bandwidth when the scale has one, otherwise
    /// [`AuditoryScale::derivative_bandwidth`].
    pub fn bandwidth(&self, hz: f64) -> Result<f64> {
        let hz = self.check_hz(hz)?;
        match self.map.native_bandwidth(hz) {
            Some(bw) => Ok(bw),
            None => self.derivative_bandwidth(hz),
        }
    }

    /// `(F_S⁻¹)'(F_S(f))`, differentiating the inverse map numerically.
    pub fn derivative_bandwidth(&self, hz: f64) -> Result<f64> {
        let hz = self.check_hz(hz)?;
        let (lo, hi) = self.range();
        let s = self.map.to_units(hz);
        let bw = bounded_derivative(|u| self.inverse_in_range(u), s, lo, hi);
        if !(bw.is_finite() && bw > 0.0) {
            return Err(Error::Computation(format!(
                "derivative bandwidth at {hz} Hz is {bw}"
            )));
        }
        Ok(bw)
    }
}

/// Second-order finite difference that never samples outside `[lo, hi]`.
fn bounded_derivative(f: impl Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let h = 1e-6 * (hi - lo).abs().max(1e-12);
    if x - h < lo {
        (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
    } else if x + h > hi {
        (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (2.0 * h)
    } else {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }
}

/// An auditory scale made affine below `f*`, tangent to the base scale there.
#[derive(Debug, Clone)]
pub struct LinearizedScale {
    base: AuditoryScale,
    f_star: f64,
    slope: f64,
    offset: f64,
}

/// Builds `F̃_S(f*; ·)`. `f_star = 0` returns the base scale unchanged.
///
/// `f_star = fs/2` is accepted and linearizes the whole range.
pub fn linearize(base: &AuditoryScale, f_star: f64) -> Result<LinearizedScale> {
    if f_star == 0.0 {
        return Ok(LinearizedScale {
            base: base.clone(),
            f_star: 0.0,
            slope: 0.0,
            offset: 0.0,
        });
    }
    if !(f_star > 0.0 && f_star <= base.nyquist()) {
        return Err(Error::Domain(format!(
            "transition frequency {f_star} Hz outside (0, {}]",
            base.nyquist()
        )));
    }
    let slope = base.derivative(f_star)?;
    let offset = base.forward(f_star)? - slope * f_star;
    Ok(LinearizedScale {
        base: base.clone(),
        f_star,
        slope,
        offset,
    })
}

impl LinearizedScale {
    pub fn base(&self) -> &AuditoryScale {
        &self.base
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Slope of the linear branch, in auditory units per Hz.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_linearized(&self) -> bool {
        self.f_star > 0.0
    }

    pub fn forward(&self, hz: f64) -> Result<f64> {
        if self.is_linearized() && hz <= self.f_star {
            let hz = self.base.check_hz(hz)?;
            Ok(self.offset + self.slope * hz)
        } else {
            self.base.forward(hz)
        }
    }

    pub fn inverse(&self, units: f64) -> Result<f64> {
        if self.is_linearized() {
            let knee = self.offset + self.slope * self.f_star;
            if units <= knee {
                let hz = (units - self.offset) / self.slope;
                return self.base.check_hz(hz);
            }
        }
        self.base.inverse(units)
    }

    pub fn derivative(&self, hz: f64) -> Result<f64> {
        if self.is_linearized() && hz <= self.f_star {
            self.base.check_hz(hz)?;
            Ok(self.slope)
        } else {
            self.base.derivative(hz)
        }
    }

    pub fn range(&self) -> Result<(f64, f64)> {
        Ok((self.forward(0.0)?, self.forward(self.base.nyquist())?))
    }
}
