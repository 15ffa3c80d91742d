//! ISAC: an invertible, perceptually scaled filter bank with complex kernels.
//!
//! [`build_kernels`] turns a [`FilterBankSpec`] into a [`KernelSet`];
//! [`BankOperator`] applies it to signals and computes exact frame bounds;
//! [`duallearn`] fits same-size synthesis kernels and [`melcompress`] turns
//! coefficients into mel-type spectrograms.

// `!(x > 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod duallearn;
pub mod eigen;
pub mod error;
pub mod fbops;
pub mod fft;
pub mod io;
pub mod melcompress;
pub mod prototype;
pub mod scales;

pub use design::{build_kernels, center_frequencies, choose_decimation, BankRole, KernelSet};
pub use duallearn::{train, TrainConfig, TrainReport};
pub use error::{Error, Result};
pub use fbops::{BankOperator, Coefficients, FrameDiagnostics};
pub use melcompress::{compress, mel_spectrogram, Spectrogram};
pub use prototype::{FilterBankSpec, PrototypeKernel};
pub use scales::{AuditoryScale, LinearizedScale};
