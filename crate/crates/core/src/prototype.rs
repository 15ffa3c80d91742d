//! Prototype windows, the filter bank configuration, and the map from
//! bandwidth to kernel size.
//!
//! A prototype `g` lives on `[0, 1]`. Dilating it to `T` samples at rate `fs`
//! gives a kernel whose −3 dB width is `bw_R(g)·fs/T` Hz. The bandwidth a
//! channel asks for is `γ·B_S(f)·bw_R(g)/‖g‖²`, where `‖g‖²` is the energy of
//! the prototype normalized to a unit peak frequency response (`∫g = 1`).
//! Solving for `T` makes `bw_R` cancel: `T = fs·‖g‖²/(γ·B_S(f))`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::scales::AuditoryScale;

/// Smallest kernel the size map will produce.
pub const MIN_KERNEL_SIZE: usize = 4;

const BANDWIDTH_SAMPLES: usize = 1024;
const BANDWIDTH_FFT_LEN: usize = 1 << 16;
const SIMPSON_INTERVALS: usize = 4096;

/// A continuous window supported on `[0, 1]`.
pub trait Window: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    /// Value at `t ∈ [0, 1]`.
    fn eval(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hann;

impl Window for Hann {
    fn name(&self) -> &str {
        "hann"
    }

    fn eval(&self, t: f64) -> f64 {
        0.5 - 0.5 * (2.0 * PI * t).cos()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rectangular;

impl Window for Rectangular {
    fn name(&self) -> &str {
        "rect"
    }

    fn eval(&self, _t: f64) -> f64 {
        1.0
    }
}

/// Named windows available to configuration files and the command line.
#[derive(Debug, Clone)]
pub struct WindowRegistry {
    windows: BTreeMap<String, Arc<dyn Window>>,
}

impl Default for WindowRegistry {
    fn default() -> Self {
        let mut reg = Self {
            windows: BTreeMap::new(),
        };
        reg.register(Arc::new(Hann));
        reg.register(Arc::new(Rectangular));
        reg
    }
}

impl WindowRegistry {
    /// Adds (or replaces) a window under its own name.
    pub fn register(&mut self, window: Arc<dyn Window>) {
        self.windows.insert(window.name().to_ascii_lowercase(), window);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.windows.keys().map(String::as_str)
    }

    pub fn prototype(&self, name: &str) -> Result<PrototypeKernel> {
        let window = self
            .windows
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown prototype '{name}'")))?;
        PrototypeKernel::new(window.clone())
    }
}

/// A window together with its measured energy, mean and reference bandwidth.
#[derive(Clone)]
pub struct PrototypeKernel {
    window: Arc<dyn Window>,
    energy: f64,
    mean: f64,
    ref_bandwidth: f64,
}

impl fmt::Debug for PrototypeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrototypeKernel")
            .field("name", &self.name())
            .field("energy", &self.energy)
            .field("mean", &self.mean)
            .field("ref_bandwidth", &self.ref_bandwidth)
            .finish()
    }
}

impl PrototypeKernel {
    pub fn new(window: Arc<dyn Window>) -> Result<Self> {
        let energy = prototype_energy(window.as_ref());
        let mean = simpson(|t| window.eval(t));
        if !(energy > 0.0) || !(mean > 0.0) {
            return Err(Error::Config(format!(
                "prototype '{}' must have positive energy and mean (got {energy}, {mean})",
                window.name()
            )));
        }
        let ref_bandwidth = measure_reference_bandwidth(window.as_ref())?;
        Ok(Self {
            window,
            energy,
            mean,
            ref_bandwidth,
        })
    }

    pub fn hann() -> Self {
        Self::new(Arc::new(Hann)).expect("hann window is valid")
    }

    pub fn rect() -> Self {
        Self::new(Arc::new(Rectangular)).expect("rectangular window is valid")
    }

    pub fn from_name(name: &str) -> Result<Self> {
        WindowRegistry::default().prototype(name)
    }

    pub fn name(&self) -> &str {
        self.window.name()
    }

    /// Window value, zero outside `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            self.window.eval(t)
        } else {
            0.0
        }
    }

    /// `∫₀¹ g(t)² dt` of the window as given.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `∫₀¹ g(t) dt`, the DC gain used for peak normalization.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Energy of `g/∫g`, the prototype with a unit peak frequency response.
    pub fn normalized_energy(&self) -> f64 {
        self.energy / (self.mean * self.mean)
    }

    /// −3 dB width of `ĝ` in cycles per support length.
    pub fn ref_bandwidth(&self) -> f64 {
        self.ref_bandwidth
    }
}

fn simpson(f: impl Fn(f64) -> f64) -> f64 {
    let n = SIMPSON_INTERVALS;
    let h = 1.0 / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(i as f64 * h)
        })
        .sum();
    (f(0.0) + f(1.0) + inner) * h / 3.0
}

/// `‖g‖² = ∫₀¹ g(t)² dt` by composite Simpson on 4097 points.
pub fn prototype_energy(window: &dyn Window) -> f64 {
    simpson(|t| {
        let v = window.eval(t);
        v * v
    })
}

/// Reference bandwidth `bw_R(g)`: full −3 dB width of `ĝ`, measured on a
/// 2^16-point zero-padded spectrum of 1024 midpoint samples of `g`.
pub fn measure_reference_bandwidth(window: &dyn Window) -> Result<f64> {
    let n = BANDWIDTH_SAMPLES;
    let samples: Vec<f64> = (0..n)
        .map(|j| window.eval((j as f64 + 0.5) / n as f64))
        .collect();
    half_power_width(&samples, n as f64, BANDWIDTH_FFT_LEN)
}

/// Full width (in cycles per unit time) of the region around the spectral
/// peak where the power stays above half its maximum.
///
/// `rate` is the number of samples per unit time; crossings are located by
/// linear interpolation of the power spectrum.
pub fn half_power_width(samples: &[f64], rate: f64, fft_len: usize) -> Result<f64> {
    if samples.is_empty() || samples.len() > fft_len {
        return Err(Error::Computation(format!(
            "cannot measure bandwidth of {} samples with a {fft_len}-point FFT",
            samples.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    for (b, &s) in buf.iter_mut().zip(samples) {
        b.re = s;
    }
    fft::forward(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let (peak, &max) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    if !(max > 0.0) {
        return Err(Error::Computation("window has an all-zero spectrum".into()));
    }
    let half = 0.5 * max;
    let at = |i: isize| power[i.rem_euclid(fft_len as isize) as usize];
    let crossing = |dir: isize| -> Option<f64> {
        let mut prev = max;
        for step in 1..=(fft_len as isize / 2) {
            let cur = at(peak as isize + dir * step);
            if cur < half {
                let frac = (prev - half) / (prev - cur);
                return Some((step - 1) as f64 + frac);
            }
            prev = cur;
        }
        None
    };
    match (crossing(1), crossing(-1)) {
        (Some(right), Some(left)) => Ok((right + left) * rate / fft_len as f64),
        _ => Err(Error::Computation(
            "spectrum has no -3 dB crossing".into(),
        )),
    }
}

/// User configuration of an ISAC filter bank.
#[derive(Debug, Clone)]
pub struct FilterBankSpec {
    /// Sample rate in Hz.
    pub fs: f64,
    /// Number of channels `K`, including the 0 Hz and `fs/2` channels.
    pub channels: usize,
    /// Maximal kernel size in samples.
    pub t_max: usize,
    /// Bandwidth factor; larger values mean wider bands and shorter kernels.
    pub gamma: f64,
    pub scale: AuditoryScale,
    pub prototype: PrototypeKernel,
    /// Uniform decimation factor.
    pub decimation: usize,
    /// Signal length `L` the bank operates on.
    pub signal_len: usize,
}

impl FilterBankSpec {
    /// ERB scale, Hann prototype, `γ = 1`, no decimation, `L = max(16384, T_max)`.
    pub fn new(fs: f64, channels: usize, t_max: usize) -> Result<Self> {
        Ok(Self {
            fs,
            channels,
            t_max,
            gamma: 1.0,
            scale: AuditoryScale::erb(fs)?,
            prototype: PrototypeKernel::hann(),
            decimation: 1,
            signal_len: t_max.max(16384),
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_scale(mut self, scale: AuditoryScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_scale_name(self, name: &str) -> Result<Self> {
        let scale = AuditoryScale::from_name(name, self.fs)?;
        Ok(self.with_scale(scale))
    }

    pub fn with_prototype(mut self, prototype: PrototypeKernel) -> Self {
        self.prototype = prototype;
        self
    }

    pub fn with_decimation(mut self, d: usize) -> Self {
        self.decimation = d;
        self
    }

    pub fn with_signal_len(mut self, len: usize) -> Self {
        self.signal_len = len;
        self
    }

    pub fn nyquist(&self) -> f64 {
        self.fs / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {}", self.fs)));
        }
        if (self.scale.nyquist() - self.nyquist()).abs() > 1e-9 * self.nyquist() {
            return Err(Error::Config(format!(
                "scale is bound to fs={} but the bank uses fs={}",
                2.0 * self.scale.nyquist(),
                self.fs
            )));
        }
        if self.channels < 2 {
            return Err(Error::Config(format!("K must be ≥ 2, got {}", self.channels)));
        }
        if self.t_max < MIN_KERNEL_SIZE {
            return Err(Error::Config(format!(
                "T_max must be ≥ {MIN_KERNEL_SIZE}, got {}",
                self.t_max
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.decimation < 1 {
            return Err(Error::Config("decimation must be ≥ 1".into()));
        }
        if self.t_max > self.signal_len {
            return Err(Error::Config(format!(
                "T_max={} exceeds the signal length L={}",
                self.t_max, self.signal_len
            )));
        }
        if !self.signal_len.is_multiple_of(self.decimation) {
            return Err(Error::Config(format!(
                "decimation d={} does not divide L={}",
                self.decimation, self.signal_len
            )));
        }
        Ok(())
    }

    /// Real-valued kernel size before rounding, clamping and linearization.
    pub fn unconstrained_kernel_size(&self, hz: f64) -> Result<f64> {
        let bw = self.scale.bandwidth(hz)?;
        Ok(self.fs * self.prototype.normalized_energy() / (self.gamma * bw))
    }

    /// `B̃_{S,g}(f*; f)` in Hz, including the factor `γ`.
    pub fn modified_bandwidth(&self, f_star: f64, hz: f64) -> Result<f64> {
        let bw = self.scale.bandwidth(hz)?;
        let bw = if hz <= f_star {
            self.scale.bandwidth(f_star)?
        } else {
            bw
        };
        Ok(self.gamma * bw * self.prototype.ref_bandwidth() / self.prototype.normalized_energy())
    }

    /// `T_{S,g}(f)`: size of the dilated prototype whose −3 dB width equals
    /// the modified bandwidth, rounded half-to-even and clamped to
    /// `[4, T_max]`. Exactly `T_max` on `[0, f*]`.
    pub fn kernel_size(&self, f_star: f64, hz: f64) -> Result<usize> {
        let bw = self.modified_bandwidth(f_star, hz)?;
        if hz <= f_star {
            return Ok(self.t_max);
        }
        Ok(self.clamp_size(self.fs * self.prototype.ref_bandwidth() / bw))
    }

    /// Same as [`FilterBankSpec::kernel_size`] with `bw_R` cancelled
    /// analytically: `round(fs·‖g‖²/(γ·B_S(max(f, f*))))`.
    pub fn kernel_size_composed(&self, f_star: f64, hz: f64) -> Result<usize> {
        let size = self.unconstrained_kernel_size(hz.max(f_star))?;
        if hz <= f_star {
            self.scale.bandwidth(hz)?;
            return Ok(self.t_max);
        }
        Ok(self.clamp_size(size))
    }

    fn clamp_size(&self, size: f64) -> usize {
        let rounded = size.round_ties_even();
        if rounded >= self.t_max as f64 {
            self.t_max
        } else {
            (rounded as usize).max(MIN_KERNEL_SIZE).min(self.t_max)
        }
    }

    /// Transition frequency `f*`, where the unconstrained kernel size equals
    /// `T_max`.
    ///
    /// Returns 0 when `T_max` never binds and `fs/2` when it binds over the
    /// whole range, in which case every channel uses `T_max` on a linear
    /// scale.
    pub fn transition_frequency(&self) -> Result<f64> {
        if self.t_max < MIN_KERNEL_SIZE {
            return Err(Error::Config(format!(
                "T_max must be ≥ {MIN_KERNEL_SIZE}, got {}",
                self.t_max
            )));
        }
        let t_max = self.t_max as f64;
        let nyquist = self.nyquist();
        if self.unconstrained_kernel_size(0.0)? <= t_max {
            return Ok(0.0);
        }
        if self.unconstrained_kernel_size(nyquist)? >= t_max {
            return Ok(nyquist);
        }
        let target_bw = self.fs * self.prototype.normalized_energy() / (self.gamma * t_max);
        if self.scale.has_native_bandwidth() {
            if let Some(f) = self.scale.native_bandwidth_inverse(target_bw) {
                return Ok(f.clamp(0.0, nyquist));
            }
        }
        let (mut lo, mut hi) = (0.0, nyquist);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if self.unconstrained_kernel_size(mid)? > t_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Zero;

    impl Window for Zero {
        fn name(&self) -> &str {
            "zero"
        }
        fn eval(&self, _t: f64) -> f64 {
            0.0
        }
    }

    /// Oracle: exact DTFT power of 1024 midpoint samples, half-power points
    /// found by bisection instead of FFT-grid interpolation.
    fn dtft_half_power_width(window: &dyn Window) -> f64 {
        let n = 1024;
        let samples: Vec<f64> = (0..n).map(|j| window.eval((j as f64 + 0.5) / n as f64)).collect();
        let power = |nu: f64| {
            let c: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(j, &s)| s * Complex64::from_polar(1.0, -2.0 * PI * nu * j as f64 / n as f64))
                .sum();
            c.norm_sqr()
        };
        let peak = power(0.0);
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if power(mid) >= 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * lo
    }

    #[test]
    fn hann_reference_bandwidth() {
        let bw = measure_reference_bandwidth(&Hann).unwrap();
        let oracle = dtft_half_power_width(&Hann);
        assert!((bw - oracle).abs() < 1e-3, "{bw} vs {oracle}");
        assert!((bw - 1.44).abs() < 0.01, "{bw}");
    }

    #[test]
    fn rect_reference_bandwidth() {
        let bw = measure_reference_bandwidth(&Rectangular).unwrap();
        let oracle = dtft_half_power_width(&Rectangular);
        assert!((bw - oracle).abs() < 1e-3, "{bw} vs {oracle}");
        assert!((bw - 0.886).abs() < 0.005, "{bw}");
    }

    #[test]
    fn dilation_halves_bandwidth() {
        let n = 1024;
        let dilated: Vec<f64> = (0..2 * n)
            .map(|j| Hann.eval((j as f64 + 0.5) / (2 * n) as f64))
            .collect();
        let wide = half_power_width(&dilated, n as f64, 1 << 16).unwrap();
        let unit = measure_reference_bandwidth(&Hann).unwrap();
        assert!((wide - unit / 2.0).abs() < 1e-3 * unit, "{wide} vs {unit}");
    }

    #[test]
    fn energies() {
        assert!((prototype_energy(&Hann) - 0.375).abs() < 1e-10);
        assert!((prototype_energy(&Rectangular) - 1.0).abs() < 1e-12);
        assert_eq!(prototype_energy(&Zero), 0.0);
        let hann = PrototypeKernel::hann();
        assert!((hann.mean() - 0.5).abs() < 1e-12);
        assert!((hann.normalized_energy() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(measure_reference_bandwidth(&Zero).is_err());
        assert!(PrototypeKernel::new(Arc::new(Zero)).is_err());
    }

    #[test]
    fn hann_is_symmetric_and_nonnegative() {
        let g = PrototypeKernel::hann();
        for i in 0..=1024 {
            let t = i as f64 / 1024.0;
            assert!((g.eval(t) - g.eval(1.0 - t)).abs() < 1e-12);
            assert!(g.eval(t) >= 0.0);
        }
        assert_eq!(g.eval(-0.1), 0.0);
        assert_eq!(g.eval(1.1), 0.0);
    }

    #[test]
    fn registry_lookup_and_registration() {
        let mut reg = WindowRegistry::default();
        assert!(reg.prototype("HANN").is_ok());
        assert!(reg.prototype("triangle").is_err());

        #[derive(Debug)]
        struct Triangle;
        impl Window for Triangle {
            fn name(&self) -> &str {
                "triangle"
            }
            fn eval(&self, t: f64) -> f64 {
                1.0 - (2.0 * t - 1.0).abs()
            }
        }
        reg.register(Arc::new(Triangle));
        let tri = reg.prototype("triangle").unwrap();
        assert!((tri.energy() - 1.0 / 3.0).abs() < 1e-8);
        assert!(reg.names().any(|n| n == "triangle"));
    }

    fn default_spec() -> FilterBankSpec {
        FilterBankSpec::new(16000.0, 40, 128).unwrap()
    }

    #[test]
    fn modified_bandwidth_examples() {
        let spec = default_spec();
        let f_star = spec.transition_frequency().unwrap();
        assert!(f_star < 2000.0);
        let bw_r = spec.prototype.ref_bandwidth();
        let got = spec.modified_bandwidth(f_star, 2000.0).unwrap();
        let want = (24.7 + 2000.0 / 9.265) * bw_r / 1.5;
        assert!((got - want).abs() / want < 1e-9);

        // constant below f*
        let at0 = spec.modified_bandwidth(500.0, 0.0).unwrap();
        let at500 = spec.modified_bandwidth(500.0, 500.0).unwrap();
        assert_eq!(at0, at500);
        assert!(spec.modified_bandwidth(500.0, 9000.0).is_err());
    }

    #[test]
    fn kernel_size_at_nyquist() {
        let spec = default_spec();
        let f_star = spec.transition_frequency().unwrap();
        let size = spec.kernel_size(f_star, 8000.0).unwrap();
        let want = (16000.0f64 * 1.5 / (24.7 + 8000.0 / 9.265)).round() as usize;
        assert_eq!(want, 27);
        assert_eq!(size, want);
        assert_eq!(spec.kernel_size_composed(f_star, 8000.0).unwrap(), want);
    }

    #[test]
    fn transition_frequency_closed_form() {
        let spec = default_spec();
        let f_star = spec.transition_frequency().unwrap();
        let want = 9.265 * (16000.0 * 1.5 / 128.0 - 24.7);
        assert!((f_star - want).abs() < 1e-6 * want, "{f_star} vs {want}");
        assert_eq!(spec.kernel_size(f_star, f_star).unwrap(), 128);
        let just_above = spec.unconstrained_kernel_size(f_star * (1.0 + 1e-9)).unwrap();
        assert!((just_above - 128.0).abs() < 1e-5);
    }

    #[test]
    fn transition_frequency_extremes() {
        let huge = FilterBankSpec::new(16000.0, 40, 4096).unwrap();
        assert_eq!(huge.transition_frequency().unwrap(), 0.0);
        let tiny = FilterBankSpec::new(16000.0, 16, 8).unwrap().with_gamma(3.0);
        assert_eq!(tiny.transition_frequency().unwrap(), 8000.0);
        let too_small = FilterBankSpec::new(16000.0, 16, 3).unwrap();
        assert!(too_small.transition_frequency().is_err());
    }

    #[test]
    fn transition_frequency_decreases_with_tmax() {
        let mut prev = f64::INFINITY;
        for t in [32, 64, 128, 256] {
            let f = FilterBankSpec::new(16000.0, 40, t).unwrap().transition_frequency().unwrap();
            assert!(f < prev, "T_max={t}: {f} !< {prev}");
            prev = f;
        }
    }

    #[test]
    fn bisection_transition_for_fallback_scale() {
        let spec = default_spec().with_scale_name("mel").unwrap();
        let f_star = spec.transition_frequency().unwrap();
        assert!(f_star > 0.0 && f_star < 8000.0);
        let size = spec.unconstrained_kernel_size(f_star).unwrap();
        assert!((size - 128.0).abs() < 1e-3, "{size}");
    }

    #[test]
    fn validate_catches_bad_configs() {
        assert!(FilterBankSpec::new(16000.0, 1, 128).unwrap().validate().is_err());
        assert!(FilterBankSpec::new(16000.0, 40, 128)
            .unwrap()
            .with_decimation(6)
            .with_signal_len(16384)
            .validate()
            .is_err());
        assert!(FilterBankSpec::new(16000.0, 40, 128)
            .unwrap()
            .with_signal_len(64)
            .validate()
            .is_err());
        assert!(FilterBankSpec::new(16000.0, 40, 128)
            .unwrap()
            .with_gamma(0.0)
            .validate()
            .is_err());
        let wrong_fs = FilterBankSpec::new(16000.0, 40, 128)
            .unwrap()
            .with_scale(AuditoryScale::erb(44100.0).unwrap());
        assert!(wrong_fs.validate().is_err());
        assert!(default_spec().validate().is_ok());
    }
}
