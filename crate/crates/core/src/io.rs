//! File formats: kernel sets, coefficients, PSD curves, spectrograms and WAV.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{BankRole, KernelSet};
use crate::error::{Error, Result};
use crate::fbops::Coefficients;
use crate::melcompress::{Spectrogram, LOG_FLOOR};

pub const FORMAT_VERSION: u32 = 1;
const COEF_MAGIC: &[u8; 8] = b"ISACCOEF";

/// On-disk form of a [`KernelSet`]. Kernels are stored as interleaved
/// `re, im` pairs, either inline or in a little-endian `f64` sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub format_version: u32,
    pub role: BankRole,
    pub fs: f64,
    pub channels: usize,
    pub t_max: usize,
    pub decimation: usize,
    pub gamma: f64,
    pub f_star: f64,
    pub scale: String,
    pub prototype: String,
    pub center_freqs: Vec<f64>,
    pub true_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<f64>>>,
    /// Sidecar path relative to the JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
}

fn interleave(row: &[Complex64]) -> Vec<f64> {
    row.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn deinterleave(values: &[f64]) -> Result<Vec<Complex64>> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::Format("odd number of interleaved values".into()));
    }
    Ok(values
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect())
}

fn sidecar_path(json: &Path) -> PathBuf {
    json.with_extension("bin")
}

/// Writes `bank` as JSON; with `sidecar` the kernel values go to a `.bin`
/// file next to it.
pub fn save_kernels(path: &Path, bank: &KernelSet, sidecar: bool) -> Result<()> {
    let mut file = KernelFile {
        format_version: FORMAT_VERSION,
        role: bank.role,
        fs: bank.fs,
        channels: bank.channels(),
        t_max: bank.t_max,
        decimation: bank.decimation,
        gamma: bank.gamma,
        f_star: bank.f_star,
        scale: bank.scale_name.clone(),
        prototype: bank.prototype_name.clone(),
        center_freqs: bank.center_freqs.clone(),
        true_sizes: bank.true_sizes.clone(),
        kernels: None,
        data_file: None,
    };
    if sidecar {
        let bin = sidecar_path(path);
        let mut bytes = Vec::with_capacity(bank.channels() * bank.t_max * 16);
        for v in bank.kernels.iter().flat_map(|row| interleave(row)) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes)?;
        file.data_file = bin.file_name().map(|n| n.to_string_lossy().into_owned());
    } else {
        file.kernels = Some(bank.kernels.iter().map(|row| interleave(row)).collect());
    }
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_kernels(path: &Path) -> Result<KernelSet> {
    let file: KernelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported kernel file version {}",
            file.format_version
        )));
    }
    let rows: Vec<Vec<f64>> = match (file.kernels, &file.data_file) {
        (Some(rows), _) => rows,
        (None, Some(name)) => {
            let bin = path.parent().unwrap_or(Path::new(".")).join(name);
            let bytes = fs::read(&bin)?;
            let per_row = 2 * file.t_max;
            if bytes.len() != 8 * per_row * file.channels {
                return Err(Error::Format(format!(
                    "{} holds {} bytes, expected {}",
                    bin.display(),
                    bytes.len(),
                    8 * per_row * file.channels
                )));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            values.chunks(per_row).map(<[f64]>::to_vec).collect()
        }
        (None, None) => return Err(Error::Format("kernel file has no kernel data".into())),
    };
    let kernels = rows
        .iter()
        .map(|r| deinterleave(r))
        .collect::<Result<Vec<_>>>()?;
    let bank = KernelSet {
        kernels,
        true_sizes: file.true_sizes,
        center_freqs: file.center_freqs,
        decimation: file.decimation,
        fs: file.fs,
        f_star: file.f_star,
        t_max: file.t_max,
        gamma: file.gamma,
        scale_name: file.scale,
        prototype_name: file.prototype,
        role: file.role,
    };
    if bank.channels() != file.channels {
        return Err(Error::Format(format!(
            "header lists {} channels, data has {}",
            file.channels,
            bank.channels()
        )));
    }
    bank.check_shape().map_err(|e| Error::Format(e.to_string()))?;
    Ok(bank)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// CSV (one row per channel, interleaved `re,im`, metadata in a leading
/// `#` line) when the extension is `.csv`, binary otherwise.
pub fn save_coefficients(path: &Path, c: &Coefficients) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if is_csv(path) {
        writeln!(
            w,
            "# isac-coefficients format_version={FORMAT_VERSION} decimation={} signal_len={} bank={}",
            c.decimation, c.signal_len, c.bank_id
        )?;
        for row in &c.channels {
            let line: Vec<String> = interleave(row).iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
    } else {
        w.write_all(COEF_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [c.channels.len(), c.frames(), c.decimation, c.signal_len] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&(c.bank_id.len() as u64).to_le_bytes())?;
        w.write_all(c.bank_id.as_bytes())?;
        for z in c.channels.iter().flatten() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header_field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .ok_or_else(|| Error::Format(format!("coefficient header lacks {key}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("not an integer: {s:?}")))
}

pub fn load_coefficients(path: &Path) -> Result<Coefficients> {
    let c = if is_csv(path) {
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty coefficient file".into()))??;
        if !header.starts_with("# isac-coefficients") {
            return Err(Error::Format("missing coefficient header".into()));
        }
        let version = parse_usize(header_field(&header, "format_version")?)?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported coefficient version {version}")));
        }
        let decimation = parse_usize(header_field(&header, "decimation")?)?;
        let signal_len = parse_usize(header_field(&header, "signal_len")?)?;
        let bank_id = header_field(&header, "bank")?.to_string();
        let mut channels = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("not a number: {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            channels.push(deinterleave(&values)?);
        }
        Coefficients {
            channels,
            decimation,
            signal_len,
            bank_id,
        }
    } else {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let out = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::Format("truncated coefficient file".into()))?;
            pos += n;
            Ok(out)
        };
        if take(8)? != COEF_MAGIC {
            return Err(Error::Format("not an isac coefficient file".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported coefficient version {version}")));
        }
        let mut next_u64 = || -> Result<usize> {
            Ok(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize)
        };
        let (k, m, decimation, signal_len, id_len) =
            (next_u64()?, next_u64()?, next_u64()?, next_u64()?, next_u64()?);
        let bank_id = String::from_utf8(take(id_len)?.to_vec())
            .map_err(|_| Error::Format("bank id is not UTF-8".into()))?;
        let mut channels = Vec::with_capacity(k);
        for _ in 0..k {
            let raw = take(16 * m)?;
            let row = raw
                .chunks_exact(16)
                .map(|b| {
                    Complex64::new(
                        f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
                        f64::from_le_bytes(b[8..].try_into().expect("8 bytes")),
                    )
                })
                .collect();
            channels.push(row);
        }
        Coefficients {
            channels,
            decimation,
            signal_len,
            bank_id,
        }
    };
    if c.decimation == 0 || c.channels.iter().any(|r| r.len() * c.decimation != c.signal_len) {
        return Err(Error::Format(format!(
            "coefficient rows do not match L={} and d={}",
            c.signal_len, c.decimation
        )));
    }
    Ok(c)
}

/// Two columns, frequency in Hz and total PSD, for `0 ≤ f ≤ fs/2`.
pub fn write_psd(w: &mut impl Write, fs_hz: f64, psd: &[f64]) -> Result<()> {
    writeln!(w, "frequency_hz,psd")?;
    let n = psd.len();
    for (m, p) in psd.iter().enumerate().take(n / 2 + 1) {
        writeln!(w, "{},{}", m as f64 * fs_hz / n as f64, p)?;
    }
    Ok(())
}

pub fn write_psd_csv(path: &Path, fs_hz: f64, psd: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_psd(&mut w, fs_hz, psd)?;
    w.flush()?;
    Ok(())
}

pub fn write_spectrogram_csv(path: &Path, s: &Spectrogram) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in &s.data {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// 8-bit binary PGM, one image row per channel, dB-scaled and stretched to
/// the full gray range.
pub fn write_spectrogram_pgm(path: &Path, s: &Spectrogram) -> Result<()> {
    let (rows, cols) = (s.channels(), s.frames());
    let db: Vec<f64> = s
        .data
        .iter()
        .flatten()
        .map(|v| 10.0 * (v + LOG_FLOOR).log10())
        .collect();
    let lo = db.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let pixels: Vec<u8> = db
        .iter()
        .map(|v| (255.0 * (v - lo) / span).round() as u8)
        .collect();
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}

/// Mono WAV as samples in `[-1, 1]` plus the sample rate. Accepts 16-bit
/// PCM and 32-bit float.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{} has {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "unsupported WAV encoding {fmt:?} with {bits} bits"
            )))
        }
    };
    Ok((samples, spec.sample_rate))
}

/// Writes mono 32-bit float WAV.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &v in samples {
        w.write_sample(v as f32)?;
    }
    w.finalize()?;
    Ok(())
}
