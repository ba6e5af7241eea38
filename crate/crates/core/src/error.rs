use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report. `exit_code` maps each variant onto
/// the process exit status of the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    /// `--help` / `--version` output; not a failure.
    #[error("{0}")]
    Help(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{name} out of range: {detail}")]
    Range { name: &'static str, detail: String },

    #[error("invalid slice pattern {pattern:?}: {detail}")]
    Pattern { pattern: String, detail: String },

    #[error("missing slice files for z = {}", format_z_list(.0))]
    MissingSlices(Vec<u32>),

    #[error("settings file {path}: parse error at line {line}: {detail}")]
    SettingsParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("settings: unknown key {0:?}")]
    UnknownSettingsKey(String),

    #[error("settings: {0}")]
    InvalidSettings(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("region of interest error: {0}")]
    Roi(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format at {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("cannot decode image {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("cannot encode image {path}: {detail}")]
    Encode { path: PathBuf, detail: String },

    #[error("degenerate region of interest {width}x{height}: input appears to carry no content")]
    DegenerateRoi { width: usize, height: usize },

    #[error("resampled size {width}x{height} is below the 8 px minimum")]
    Resolution { width: usize, height: usize },

    #[error("corrupt intermediate file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("missing intermediate files from an earlier phase: {}", .missing.join(", "))]
    Dependency { missing: Vec<String> },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn range(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Range {
            name,
            detail: detail.into(),
        }
    }

    /// Process exit status: 0 success, 1 usage, 2 I/O, 3 dependency, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Help(_) => 0,
            Error::Usage(_)
            | Error::Range { .. }
            | Error::Pattern { .. }
            | Error::SettingsParse { .. }
            | Error::UnknownSettingsKey(_)
            | Error::InvalidSettings(_)
            | Error::Config(_)
            | Error::Roi(_) => 1,
            Error::MissingSlices(_)
            | Error::Io { .. }
            | Error::Format { .. }
            | Error::Decode { .. }
            | Error::Encode { .. }
            | Error::DegenerateRoi { .. }
            | Error::Resolution { .. }
            | Error::Corrupt { .. } => 2,
            Error::Dependency { .. } => 3,
            Error::Internal(_) => 4,
        }
    }
}

fn format_z_list(zs: &[u32]) -> String {
    zs.iter()
        .map(|z| z.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
