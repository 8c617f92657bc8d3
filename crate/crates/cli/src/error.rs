use thiserror::Error;

/// Failure of a CLI command; maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tgc_core::Error),
    /// Bad user input with a stable code and a human-readable location.
    #[error("{msg}")]
    Input { code: &'static str, msg: String },
    #[error("{0}")]
    GradcheckFailed(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(tgc_core::Error::Io(e))
    }
}

impl CliError {
    pub fn input(code: &'static str, msg: impl Into<String>) -> Self {
        CliError::Input { code, msg: msg.into() }
    }

    /// Wraps a core error with the record it came from, keeping its code.
    pub fn in_record(e: tgc_core::Error, line: usize, id: &str) -> Self {
        if e.is_numerical() {
            return CliError::Core(e);
        }
        CliError::Input {
            code: e.code(),
            msg: format!("line {line}, record {id:?}: {e}"),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Input { code, .. } => code,
            CliError::GradcheckFailed(_) => "GradcheckFailed",
        }
    }

    /// 1 gradcheck failure, 2 input or config error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradcheckFailed(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// The single-line diagnostic printed on stderr.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error: {}: {msg}", self.code())
    }
}
