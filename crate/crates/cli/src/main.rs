mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use isac::duallearn::{self, relative_error, TrainConfig};
use isac::io;
use isac::melcompress::compress;
use isac::{
    build_kernels, choose_decimation, BankOperator, Coefficients, Error, FilterBankSpec, KernelSet,
    PrototypeKernel,
};

use config::{RunConfig, Settings};

#[derive(Parser, Debug)]
#[command(name = "isac", version, about = "Invertible auditory filter banks with capped kernel sizes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a kernel set and report f*, kernel sizes and the condition number
    Design(DesignArgs),
    /// Write the coefficients of a WAV file
    Analyze(AnalyzeArgs),
    /// Turn coefficients back into a WAV file
    Synth(SynthArgs),
    /// Analyze and resynthesize a WAV file and print the relative error
    Recon(ReconArgs),
    /// Sweep channel counts and kernel sizes and write a condition-number table
    Cond(CondArgs),
    /// Write the total power spectral density of a bank
    Psd(PsdArgs),
    /// Learn synthesis kernels with the encoder's kernel size
    LearnDual(LearnArgs),
    /// Write a mel-type spectrogram
    Melspec(MelArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct BankArgs {
    /// Sample rate in Hz [default: 16000]
    #[arg(long)]
    fs: Option<f64>,
    /// Number of channels K [default: 40]
    #[arg(long)]
    channels: Option<usize>,
    /// Maximal kernel size in samples [default: 128]
    #[arg(long)]
    tmax: Option<usize>,
    /// Bandwidth factor [default: 1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Frequency scale: erb, mel, log or linear [default: erb]
    #[arg(long)]
    scale: Option<String>,
    /// Prototype window: hann or rect [default: hann]
    #[arg(long)]
    proto: Option<String>,
    /// Decimation factor [default: 1]
    #[arg(long = "d", conflicts_with = "d_auto")]
    d: Option<usize>,
    /// Pick the largest decimation within the condition-number budget
    #[arg(long)]
    d_auto: bool,
    /// Largest condition number accepted by --d-auto [default: 1.1]
    #[arg(long)]
    kappa_budget: Option<f64>,
    /// Signal length in samples
    #[arg(long)]
    len: Option<usize>,
    /// Seed for every random draw [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with defaults for any of these flags
    #[arg(long)]
    config: Option<PathBuf>,
}

impl BankArgs {
    fn settings(&self, train: config::TrainSection) -> Result<Settings> {
        let flags = RunConfig {
            fs: self.fs,
            channels: self.channels,
            tmax: self.tmax,
            gamma: self.gamma,
            scale: self.scale.clone(),
            proto: self.proto.clone(),
            d: self.d,
            d_auto: self.d_auto.then_some(true),
            kappa_budget: self.kappa_budget,
            len: self.len,
            seed: self.seed,
            train,
        };
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(flags).resolve())
    }
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Kernel file to write (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Store kernel values in a binary file next to the JSON
    #[arg(long)]
    sidecar: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Mono WAV input
    #[arg(long)]
    input: PathBuf,
    /// Kernel file; built from the flags when absent
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    /// Coefficient file, CSV when it ends in .csv and binary otherwise
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Coefficient file written by `analyze`
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    /// Learned decoder file, or `none` with --tight-approx; the canonical
    /// dual is used when absent
    #[arg(long)]
    decoder: Option<String>,
    /// Synthesize with the encoder scaled by 2/(A+B)
    #[arg(long)]
    tight_approx: bool,
    /// Keep only the first N samples of the output
    #[arg(long)]
    trim: Option<usize>,
    /// WAV output (32-bit float)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconArgs {
    #[command(flatten)]
    bank: BankArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    tight_approx: bool,
    /// Optional WAV output of the reconstruction
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CondArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Channel counts, one table row each
    #[arg(long, value_delimiter = ',', default_value = "16,40,96,512")]
    ks: Vec<usize>,
    /// Maximal kernel sizes, one table column each
    #[arg(long, value_delimiter = ',', default_value = "8,32,128,512")]
    ts: Vec<usize>,
    /// Largest decimation tried per cell
    #[arg(long, default_value_t = 6)]
    d_max: usize,
    /// Rows (channel counts) designed with --marked-gamma
    #[arg(long, value_delimiter = ',', default_value = "16")]
    marked_ks: Vec<usize>,
    /// Columns (kernel sizes) designed with --marked-gamma
    #[arg(long, value_delimiter = ',', default_value = "8")]
    marked_ts: Vec<usize>,
    #[arg(long, default_value_t = 3.0)]
    marked_gamma: f64,
    /// CSV output; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PsdArgs {
    #[command(flatten)]
    bank: BankArgs,
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    /// CSV output; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[command(flatten)]
    bank: BankArgs,
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    /// Flatness regularization weight [default: 1e-3]
    #[arg(long)]
    beta: Option<f64>,
    /// Gradient step [default: 1]
    #[arg(long)]
    step_size: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Target RMS relative training error [default: 1e-5]
    #[arg(long)]
    tol: Option<f64>,
    /// Number of Gaussian training signals [default: 8]
    #[arg(long)]
    signals: Option<usize>,
    /// Decoder kernel file (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Training report (JSON) [default: next to --out]
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    sidecar: bool,
}

#[derive(Args, Debug)]
struct MelArgs {
    #[command(flatten)]
    bank: BankArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "bank")]
    bank_file: Option<PathBuf>,
    /// PGM image when it ends in .pgm, CSV matrix otherwise
    #[arg(long)]
    out: PathBuf,
    /// Write log10(value + 1e-10) to the CSV
    #[arg(long)]
    db: bool,
}

/// `n` raised to at least `t_max` and rounded up to a multiple of `d`.
fn padded_len(n: usize, d: usize, t_max: usize) -> usize {
    n.max(t_max).div_ceil(d) * d
}

fn bank_spec(s: &Settings) -> Result<FilterBankSpec> {
    let spec = FilterBankSpec::new(s.fs, s.channels, s.tmax)?
        .with_gamma(s.gamma)
        .with_scale_name(&s.scale)?
        .with_prototype(PrototypeKernel::from_name(&s.proto)?);
    Ok(spec)
}

/// Designs the bank described by the settings for signals of about
/// `len_hint` samples. Returns the bank and the padded signal length.
fn design_bank(s: &Settings, len_hint: usize) -> Result<(KernelSet, usize)> {
    let spec = bank_spec(s)?;
    let (d, len) = if s.d_auto {
        let len = padded_len(len_hint, 1, s.tmax);
        let probe = spec.clone().with_signal_len(len);
        probe.validate()?;
        (choose_decimation(&probe, s.kappa_budget)?, len)
    } else {
        let d = s.d.unwrap_or(1);
        if d == 0 {
            bail!(Error::Config("decimation must be ≥ 1".into()));
        }
        (d, padded_len(len_hint, d, s.tmax))
    };
    let bank = build_kernels(&spec.with_decimation(d).with_signal_len(len))?;
    if bank.f_star >= bank.fs / 2.0 && !s.gamma_explicit {
        bail!(Error::Config(format!(
            "with K={} and T_max={} every kernel is capped at T_max, so the bank is linear \
             over the whole band; pass --gamma (e.g. --gamma 3) to accept it",
            s.channels, s.tmax
        )));
    }
    Ok((bank, len))
}

fn load_or_design(file: Option<&Path>, s: &Settings, len_hint: usize) -> Result<(KernelSet, usize)> {
    match file {
        Some(path) => {
            let bank = io::load_kernels(path)
                .with_context(|| format!("cannot load kernels from {}", path.display()))?;
            let len = padded_len(len_hint, bank.decimation, bank.t_max);
            Ok((bank, len))
        }
        None => design_bank(s, len_hint),
    }
}

fn read_input(path: &Path, fs: f64) -> Result<Vec<f64>> {
    let (x, rate) =
        io::read_wav(path).with_context(|| format!("cannot read {}", path.display()))?;
    if (rate as f64 - fs).abs() > 1e-9 {
        bail!(Error::Config(format!(
            "{} is sampled at {rate} Hz but the bank expects {fs} Hz; resample it first",
            path.display()
        )));
    }
    if x.is_empty() {
        bail!(Error::Shape(format!("{} has no samples", path.display())));
    }
    Ok(x)
}

fn pad(mut x: Vec<f64>, len: usize) -> Vec<f64> {
    x.resize(len, 0.0);
    x
}

fn wav_rate(fs: f64) -> Result<u32> {
    if fs.fract() != 0.0 || fs <= 0.0 || fs > u32::MAX as f64 {
        bail!(Error::Config(format!("sample rate {fs} cannot be written to WAV")));
    }
    Ok(fs as u32)
}

fn kappa_line(bank: &KernelSet, len: usize) -> String {
    match BankOperator::new(bank, len).and_then(|op| op.frame_bounds()) {
        Ok(diag) => format!(
            "kappa: {:.6} (A = {:.6}, B = {:.6})",
            diag.kappa, diag.lower, diag.upper
        ),
        Err(e) => format!("kappa: unavailable ({e})"),
    }
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let (bank, len) = design_bank(&s, s.len.unwrap_or(16384))?;
    let op = BankOperator::new(&bank, len)?;
    let diag = op.frame_bounds()?;
    println!("bank: {}", bank.id());
    println!("f*: {:.6} Hz", bank.f_star);
    println!(
        "channels: {}, T_max: {}, d: {}, L: {}",
        bank.channels(),
        bank.t_max,
        bank.decimation,
        len
    );
    let sizes: Vec<String> = bank.true_sizes.iter().map(usize::to_string).collect();
    println!("kernel sizes: {}", sizes.join(","));
    println!(
        "kappa: {:.6} (A = {:.6}, B = {:.6})",
        diag.kappa, diag.lower, diag.upper
    );
    if let Some(out) = &args.out {
        io::save_kernels(out, &bank, args.sidecar)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let probe_fs = match &args.bank_file {
        Some(p) => io::load_kernels(p)?.fs,
        None => s.fs,
    };
    let x = read_input(&args.input, probe_fs)?;
    let (bank, len) = load_or_design(args.bank_file.as_deref(), &s, x.len())?;
    let x = pad(x, len);
    let c = BankOperator::new(&bank, len)?.analyze(&x)?;
    io::save_coefficients(&args.out, &c)?;
    println!(
        "wrote {} x {} coefficients (L = {len}, d = {}) to {}",
        c.channels.len(),
        c.frames(),
        c.decimation,
        args.out.display()
    );
    Ok(())
}

/// Synthesis with a decoder file, the tight-frame approximation, or the
/// canonical dual.
fn resynthesize(
    bank: &KernelSet,
    c: &Coefficients,
    decoder: Option<&str>,
    tight_approx: bool,
) -> Result<Vec<f64>> {
    if c.bank_id != bank.id() {
        bail!(Error::Shape(format!(
            "coefficients come from bank {} but the bank is {}",
            c.bank_id,
            bank.id()
        )));
    }
    let op = BankOperator::new(bank, c.signal_len)?;
    match (decoder, tight_approx) {
        (Some("none"), true) => {
            let diag = op.frame_bounds()?;
            let y = op.synthesize(c)?;
            let scale = 2.0 / (diag.lower + diag.upper);
            Ok(y.into_iter().map(|v| v * scale).collect())
        }
        (Some("none"), false) => bail!(Error::Config(
            "--decoder none needs --tight-approx".into()
        )),
        (_, true) => bail!(Error::Config(
            "--tight-approx is only valid with --decoder none".into()
        )),
        (Some(path), false) => {
            let dec = io::load_kernels(Path::new(path))
                .with_context(|| format!("cannot load decoder {path}"))?;
            if dec.channels() != bank.channels() || dec.t_max != bank.t_max {
                bail!(Error::Shape(format!(
                    "decoder is {}x{}, encoder {}x{}",
                    dec.channels(),
                    dec.t_max,
                    bank.channels(),
                    bank.t_max
                )));
            }
            Ok(duallearn::reconstruct(&dec, c)?)
        }
        (None, false) => Ok(op.canonical_dual_reconstruct(c)?),
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let c = io::load_coefficients(&args.coeffs)
        .with_context(|| format!("cannot load {}", args.coeffs.display()))?;
    let (bank, _) = load_or_design(args.bank_file.as_deref(), &s, c.signal_len)?;
    let mut y = resynthesize(&bank, &c, args.decoder.as_deref(), args.tight_approx)?;
    if let Some(n) = args.trim {
        y.truncate(n);
    }
    io::write_wav(&args.out, &y, wav_rate(bank.fs)?)?;
    println!("wrote {} samples to {}", y.len(), args.out.display());
    Ok(())
}

fn cmd_recon(args: &ReconArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let probe_fs = match &args.bank_file {
        Some(p) => io::load_kernels(p)?.fs,
        None => s.fs,
    };
    let x = read_input(&args.input, probe_fs)?;
    let original = x.len();
    let (bank, len) = load_or_design(args.bank_file.as_deref(), &s, original)?;
    let x = pad(x, len);
    let c = BankOperator::new(&bank, len)?.analyze(&x)?;
    let y = resynthesize(&bank, &c, args.decoder.as_deref(), args.tight_approx)?;
    println!("relative error: {:.6e}", relative_error(&x, &y));
    if let Some(out) = &args.out {
        io::write_wav(out, &y[..original], wav_rate(bank.fs)?)?;
    }
    Ok(())
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn cmd_cond(args: &CondArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    if args.d_max == 0 || args.ks.is_empty() || args.ts.is_empty() {
        bail!(Error::Config("cond needs --d-max ≥ 1 and nonempty --ks and --ts".into()));
    }
    // Default length: a multiple of every d ≤ d_max close to 16384.
    let len = s.len.unwrap_or_else(|| {
        let step = (1..=args.d_max).fold(1, lcm);
        ((16384 + step / 2) / step).max(1) * step
    });
    let mut csv = String::from("K");
    for t in &args.ts {
        write!(csv, ",T={t}")?;
    }
    csv.push('\n');
    let mut best_d = Vec::new();
    for &k in &args.ks {
        write!(csv, "{k}")?;
        for &t in &args.ts {
            let marked = args.marked_ks.contains(&k) || args.marked_ts.contains(&t);
            let cell = Settings {
                channels: k,
                tmax: t,
                gamma: if marked { args.marked_gamma } else { s.gamma },
                ..s.clone()
            };
            let spec = bank_spec(&cell)?.with_signal_len(len.max(t));
            let bank = build_kernels(&spec)?;
            let mut best: Option<(f64, usize)> = None;
            for d in (1..=args.d_max).filter(|d| len % d == 0) {
                match isac::fbops::frame_bounds_polyphase(&bank, d, len.max(t)) {
                    Ok(diag) if best.is_none_or(|(b, _)| diag.kappa < b) => {
                        best = Some((diag.kappa, d))
                    }
                    Ok(_) | Err(Error::NotAFrame { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let (kappa, d) = best.ok_or_else(|| {
                anyhow!(Error::NotAFrame {
                    len,
                    decimation: 1,
                    lower: 0.0,
                    upper: 0.0
                })
            })?;
            write!(csv, ",{kappa:.6}")?;
            best_d.push(format!("K={k} T={t}: d={d}"));
        }
        csv.push('\n');
    }
    match &args.out {
        Some(out) => {
            std::fs::write(out, &csv)?;
            println!("L = {len}; best decimation per cell: {}", best_d.join(", "));
            println!("wrote {}", out.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_psd(args: &PsdArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let (bank, len) = load_or_design(args.bank_file.as_deref(), &s, s.len.unwrap_or(16384))?;
    let psd = isac::fbops::total_psd(&bank, len)?;
    let hi = psd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = psd.iter().copied().fold(f64::INFINITY, f64::min);
    let line = format!("max/min ratio: {:.6}", hi / lo);
    match &args.out {
        Some(out) => {
            io::write_psd_csv(out, bank.fs, &psd)?;
            println!("{line}");
        }
        None => {
            io::write_psd(&mut std::io::stdout().lock(), bank.fs, &psd)?;
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let train = config::TrainSection {
        beta: args.beta,
        step_size: args.step_size,
        max_iters: args.max_iters,
        tol: args.tol,
        signals: args.signals,
    };
    let s = args.bank.settings(train)?;
    let (encoder, len) = load_or_design(args.bank_file.as_deref(), &s, s.len.unwrap_or(4096))?;
    let cfg = TrainConfig {
        max_iters: s.max_iters,
        tol: s.tol,
        step_size: s.step_size,
        beta: s.beta,
        signals: s.signals,
        signal_len: len,
        seed: s.seed,
    };
    let (decoder, report) = duallearn::train(&encoder, &cfg)?;
    io::save_kernels(&args.out, &decoder, args.sidecar)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "iterations: {} (converged: {}), training error: {:.6e}, held-out error: {:.6e}",
        report.iterations,
        report.converged,
        report.last.rms_relative_error(),
        report.held_out_error
    );
    println!("decoder {}", match report.decoder_kappa {
        Some(k) => format!("kappa: {k:.6}"),
        None => "is not a frame".into(),
    });
    println!("encoder {}", kappa_line(&encoder, len));
    println!("wrote {} and {}", args.out.display(), report_path.display());
    Ok(())
}

fn cmd_melspec(args: &MelArgs) -> Result<()> {
    let s = args.bank.settings(Default::default())?;
    let probe_fs = match &args.bank_file {
        Some(p) => io::load_kernels(p)?.fs,
        None => s.fs,
    };
    let x = read_input(&args.input, probe_fs)?;
    let (bank, len) = load_or_design(args.bank_file.as_deref(), &s, x.len())?;
    let x = pad(x, len);
    let c = BankOperator::new(&bank, len)?.analyze(&x)?;
    let spec = compress(&bank, &c)?;
    let is_pgm = args
        .out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        io::write_spectrogram_pgm(&args.out, &spec)?;
    } else if args.db {
        io::write_spectrogram_csv(&args.out, &spec.log10())?;
    } else {
        io::write_spectrogram_csv(&args.out, &spec)?;
    }
    println!(
        "{} x {} spectrogram, hop {} samples, written to {}",
        spec.channels(),
        spec.frames(),
        spec.hop_samples,
        args.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Recon(a) => cmd_recon(a),
        Command::Cond(a) => cmd_cond(a),
        Command::Psd(a) => cmd_psd(a),
        Command::LearnDual(a) => cmd_learn(a),
        Command::Melspec(a) => cmd_melspec(a),
    }
}

/// 3 for numerical failures, 2 for everything the user can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
