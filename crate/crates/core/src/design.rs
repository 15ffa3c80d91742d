//! Center frequencies and discrete ISAC kernels.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbops;
use crate::prototype::{FilterBankSpec, PrototypeKernel};
use crate::scales::linearize;

/// Whether a bank is used for analysis or holds learned synthesis kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BankRole {
    #[default]
    Encoder,
    Decoder,
}

/// `K` complex kernels, each zero-padded and centered in a length-`T_max`
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub kernels: Vec<Vec<Complex64>>,
    /// Nonzero support length of each kernel.
    pub true_sizes: Vec<usize>,
    /// Center frequencies in Hz; the first is 0 and the last is `fs/2`.
    pub center_freqs: Vec<f64>,
    pub decimation: usize,
    pub fs: f64,
    pub f_star: f64,
    pub t_max: usize,
    pub gamma: f64,
    pub scale_name: String,
    pub prototype_name: String,
    pub role: BankRole,
}

impl KernelSet {
    pub fn channels(&self) -> usize {
        self.kernels.len()
    }

    /// Frame position that lines up with signal time `d·n` for coefficient `n`.
    pub fn align_offset(&self) -> usize {
        self.t_max / 2
    }

    /// 1 for the 0 Hz and `fs/2` channels, 2 for the rest, which stand in
    /// for themselves and their complex conjugates.
    pub fn channel_weight(&self, k: usize) -> f64 {
        let f = self.center_freqs[k];
        if f == 0.0 || f == self.fs / 2.0 {
            1.0
        } else {
            2.0
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.channels()).map(|k| self.channel_weight(k)).collect()
    }

    pub fn min_size(&self) -> usize {
        self.true_sizes.iter().copied().min().unwrap_or(self.t_max)
    }

    /// Short identifier used to tie coefficients to the bank that made them.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-K{}-T{}-g{}-d{}-fs{}",
            self.scale_name,
            self.prototype_name,
            self.channels(),
            self.t_max,
            self.gamma,
            self.decimation,
            self.fs
        )
    }

    /// Copy with every kernel multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for k in out.kernels.iter_mut() {
            for v in k.iter_mut() {
                *v *= alpha;
            }
        }
        out
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        let k = self.channels();
        if k == 0 || self.true_sizes.len() != k || self.center_freqs.len() != k {
            return Err(Error::Shape(format!(
                "bank has {k} kernels, {} sizes and {} center frequencies",
                self.true_sizes.len(),
                self.center_freqs.len()
            )));
        }
        if let Some(bad) = self.kernels.iter().find(|g| g.len() != self.t_max) {
            return Err(Error::Shape(format!(
                "kernel of length {} in a bank with T_max={}",
                bad.len(),
                self.t_max
            )));
        }
        Ok(())
    }
}

/// `K` center frequencies equidistant on the image of `[0, fs/2]` under the
/// linearized scale, with the endpoints snapped to exactly 0 and `fs/2`.
pub fn center_frequencies(spec: &FilterBankSpec, f_star: f64) -> Result<Vec<f64>> {
    let k = spec.channels;
    if k < 2 {
        return Err(Error::Config(format!("K must be ≥ 2, got {k}")));
    }
    let scale = linearize(&spec.scale, f_star)?;
    let (s_min, s_max) = scale.range()?;
    let step = (s_max - s_min) / (k - 1) as f64;
    let mut freqs = (0..k)
        .map(|i| scale.inverse(s_min + i as f64 * step))
        .collect::<Result<Vec<_>>>()?;
    freqs[0] = 0.0;
    freqs[k - 1] = spec.nyquist();
    Ok(freqs)
}

/// `e^{2πi·cycles}`, exact at multiples of a quarter turn.
fn unit_phasor(cycles: f64) -> Complex64 {
    let frac = cycles.rem_euclid(1.0);
    let quarter = frac * 4.0;
    if quarter == quarter.round() {
        return match quarter as u8 % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, TAU * frac)
}

/// One ISAC kernel in a `T_max` frame:
/// `√d/(T·∫g) · g((ℓ+½)/T) · exp(∓2πi f (p − Δ)/fs)` at frame position
/// `p = ⌊(T_max − T)/2⌋ + ℓ`, with the phase referenced to `Δ = ⌊T_max/2⌋`.
///
/// `conjugate` flips the modulation sign, which yields the complex conjugate
/// kernel.
pub fn modulated_kernel(
    prototype: &PrototypeKernel,
    center_hz: f64,
    size: usize,
    t_max: usize,
    fs: f64,
    decimation: usize,
    conjugate: bool,
) -> Vec<Complex64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); t_max];
    let offset = (t_max - size) / 2;
    let delta = (t_max / 2) as f64;
    let gain = (decimation as f64).sqrt() / (size as f64 * prototype.mean());
    let sign = if conjugate { 1.0 } else { -1.0 };
    for l in 0..size {
        let p = offset + l;
        let envelope = gain * prototype.eval((l as f64 + 0.5) / size as f64);
        let cycles = sign * center_hz * (p as f64 - delta) / fs;
        kernel[p] = unit_phasor(cycles) * envelope;
    }
    kernel
}

/// Builds the discrete ISAC kernels for a configuration.
pub fn build_kernels(spec: &FilterBankSpec) -> Result<KernelSet> {
    spec.validate()?;
    let f_star = spec.transition_frequency()?;
    let center_freqs = center_frequencies(spec, f_star)?;
    let true_sizes = center_freqs
        .iter()
        .map(|&f| spec.kernel_size(f_star, f))
        .collect::<Result<Vec<_>>>()?;
    let kernels = center_freqs
        .iter()
        .zip(&true_sizes)
        .map(|(&f, &size)| {
            modulated_kernel(
                &spec.prototype,
                f,
                size,
                spec.t_max,
                spec.fs,
                spec.decimation,
                false,
            )
        })
        .collect();
    Ok(KernelSet {
        kernels,
        true_sizes,
        center_freqs,
        decimation: spec.decimation,
        fs: spec.fs,
        f_star,
        t_max: spec.t_max,
        gamma: spec.gamma,
        scale_name: spec.scale.name().to_string(),
        prototype_name: spec.prototype.name().to_string(),
        role: BankRole::Encoder,
    })
}

/// Largest divisor `d` of `L` with `d ≤ T_min` whose condition number stays
/// within `kappa_budget`; 1 when none qualifies.
pub fn choose_decimation(spec: &FilterBankSpec, kappa_budget: f64) -> Result<usize> {
    if !(kappa_budget > 1.0) {
        return Err(Error::Config(format!(
            "kappa budget must exceed 1, got {kappa_budget}"
        )));
    }
    let base = build_kernels(&spec.clone().with_decimation(1))?;
    let len = spec.signal_len;
    let limit = base.min_size().min(len);
    for d in (2..=limit).rev().filter(|d| len.is_multiple_of(*d)) {
        match fbops::frame_bounds_polyphase(&base, d, len) {
            Ok(diag) if diag.kappa <= kappa_budget => return Ok(d),
            Ok(_) | Err(Error::NotAFrame { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(1)
}
