//! Mel-type spectrograms: squared coefficient magnitudes averaged over time
//! with a per-channel window as long as the kernel, on a common frame grid.

use serde::{Deserialize, Serialize};

use crate::design::{build_kernels, KernelSet};
use crate::error::{Error, Result};
use crate::fbops::{BankOperator, Coefficients};
use crate::prototype::FilterBankSpec;

/// Added before taking `log10` so silence maps to a finite floor.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// `K × M`, one row per channel.
    pub data: Vec<Vec<f64>>,
    /// Frame hop in coefficient samples.
    pub hop: usize,
    /// Frame hop in signal samples, `hop · d`.
    pub hop_samples: usize,
    pub channel_freqs: Vec<f64>,
    /// Averaging window length of each channel in coefficient samples.
    pub windows: Vec<usize>,
}

impl Spectrogram {
    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn frames(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    /// `log10(v + 1e-10)` for every entry.
    pub fn log10(&self) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut().flatten() {
            *v = (*v + LOG_FLOOR).log10();
        }
        out
    }
}

/// Rectangular averaging windows, `w_k = max(1, round(T_k/d))` taps of
/// weight `1/w_k`.
pub fn rectangular_windows(bank: &KernelSet) -> Vec<Vec<f64>> {
    bank.true_sizes
        .iter()
        .map(|&t| {
            let w = ((t as f64 / bank.decimation as f64).round() as usize).max(1);
            vec![1.0 / w as f64; w]
        })
        .collect()
}

pub fn compress(bank: &KernelSet, c: &Coefficients) -> Result<Spectrogram> {
    compress_with(bank, c, &rectangular_windows(bank))
}

/// Averages `|c_k|²` with the weights `phi[k]`.
///
/// The hop is half the longest window. Every channel is evaluated on that
/// grid, with its window centred inside the longest one, and wraps around
/// circularly at the end of the signal.
pub fn compress_with(bank: &KernelSet, c: &Coefficients, phi: &[Vec<f64>]) -> Result<Spectrogram> {
    let k = bank.channels();
    if c.channels.len() != k || phi.len() != k {
        return Err(Error::Shape(format!(
            "{} coefficient rows and {} windows for a {k}-channel bank",
            c.channels.len(),
            phi.len()
        )));
    }
    if phi.iter().any(Vec::is_empty) {
        return Err(Error::Config("averaging windows must be nonempty".into()));
    }
    let n = c.frames();
    if n == 0 {
        return Err(Error::Shape("no coefficients to compress".into()));
    }
    let widest = phi.iter().map(Vec::len).max().unwrap_or(1);
    let hop = (widest / 2).max(1);
    let frames = n.div_ceil(hop);
    let data = c
        .channels
        .iter()
        .zip(phi)
        .map(|(row, weights)| {
            let power: Vec<f64> = row.iter().map(|z| z.norm_sqr()).collect();
            let lead = (widest - weights.len()) / 2;
            (0..frames)
                .map(|m| {
                    let start = m * hop + lead;
                    weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| w * power[(start + i) % n])
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(Spectrogram {
        data,
        hop,
        hop_samples: hop * c.decimation,
        channel_freqs: bank.center_freqs.clone(),
        windows: phi.iter().map(Vec::len).collect(),
    })
}

/// Builds the bank for `spec`, analyzes `x` and compresses.
pub fn mel_spectrogram(spec: &FilterBankSpec, x: &[f64]) -> Result<Spectrogram> {
    let bank = build_kernels(&spec.clone().with_signal_len(x.len()))?;
    let c = BankOperator::new(&bank, x.len())?.analyze(x)?;
    compress(&bank, &c)
}
