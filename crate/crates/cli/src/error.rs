use std::fmt;
use std::path::Path;

use vibroline::ifcfit::FitError;
use vibroline::{ModelError, PhononError, ThermalError, VibronicError};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_WINDOW: i32 = 5;
pub const EXIT_FIT: i32 = 6;
pub const EXIT_THERMAL: i32 = 7;
pub const EXIT_COMMENSURATE: i32 = 8;

/// Failure reported as `ERROR:<code>:<module>:<name>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub module: &'static str,
    pub name: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, module: &'static str, name: &'static str, message: impl Into<String>) -> Self {
        Self { code, module, name, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, "cli", "UsageError", message)
    }

    pub fn parse(path: &Path, line: usize, column: usize, message: impl fmt::Display) -> Self {
        Self::new(EXIT_INPUT, "cli", "ParseError", format!("{}:{line}:{column}: {message}", path.display()))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(EXIT_INPUT, "cli", "IoError", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self.message.replace('\n', " ");
        write!(f, "ERROR:{}:{}:{}: {}", self.code, self.module, self.name, message)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let (code, name) = match &e {
            ModelError::MismatchedStructures(_) => (EXIT_MISMATCH, "MismatchedStructures"),
            ModelError::WrapAmbiguity { .. } => (EXIT_PHYSICS, "WrapAmbiguity"),
            ModelError::InvalidSite { .. } => (EXIT_INPUT, "InvalidSite"),
            ModelError::InvalidLattice(_) => (EXIT_INPUT, "InvalidLattice"),
            ModelError::EmptyStructure => (EXIT_INPUT, "EmptyStructure"),
            ModelError::InvalidForceConstants(_) => (EXIT_INPUT, "InvalidForceConstants"),
            ModelError::InvalidSpectrum(_) => (EXIT_PHYSICS, "InvalidSpectrum"),
        };
        Self::new(code, "model", name, e.to_string())
    }
}

impl From<PhononError> for CliError {
    fn from(e: PhononError) -> Self {
        let (code, name) = match &e {
            PhononError::NotCommensurate { .. } => (EXIT_COMMENSURATE, "NotCommensurate"),
            PhononError::InconsistentIndices(_) => (EXIT_PHYSICS, "InconsistentIndices"),
            PhononError::NotHermitian { .. } => (EXIT_PHYSICS, "NotHermitian"),
            PhononError::NoMatchingQpoint { .. } => (EXIT_PHYSICS, "NoMatchingQpoint"),
            PhononError::InvalidBasis(_) => (EXIT_PHYSICS, "InvalidBasis"),
        };
        Self::new(code, "phonons", name, e.to_string())
    }
}

impl From<VibronicError> for CliError {
    fn from(e: VibronicError) -> Self {
        let (code, name) = match &e {
            VibronicError::Model(inner) => return inner.clone().into(),
            VibronicError::WindowTooNarrow { .. } => (EXIT_WINDOW, "WindowTooNarrow"),
            VibronicError::DimensionMismatch { .. } => (EXIT_PHYSICS, "DimensionMismatch"),
            VibronicError::NoPeaks => (EXIT_PHYSICS, "NoPeaks"),
            VibronicError::GridTooCoarse { .. } => (EXIT_INPUT, "GridTooCoarse"),
            VibronicError::InvalidConfig(_) => (EXIT_INPUT, "InvalidConfig"),
        };
        Self::new(code, "vibronic", name, e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        let (code, name) = match &e {
            FitError::SingularFit { .. } => (EXIT_FIT, "SingularFit"),
            FitError::InsufficientData(_) => (EXIT_FIT, "InsufficientData"),
            FitError::InvalidInput(_) => (EXIT_INPUT, "InvalidInput"),
        };
        Self::new(code, "ifcfit", name, e.to_string())
    }
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        let (code, name) = match &e {
            ThermalError::DegenerateData => (EXIT_THERMAL, "DegenerateData"),
            ThermalError::NonConvergence { .. } => (EXIT_THERMAL, "NonConvergence"),
            ThermalError::TooFewPoints { .. } => (EXIT_INPUT, "TooFewPoints"),
            ThermalError::InvalidSeries(_) => (EXIT_INPUT, "InvalidSeries"),
        };
        Self::new(code, "thermal", name, e.to_string())
    }
}
