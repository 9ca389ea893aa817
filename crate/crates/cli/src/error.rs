use rdpg::RdpgError;
use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: &'a str,
    exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: "Usage".into(),
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError {
            kind: "Io".into(),
            message: format!("{}: {err}", path.display()),
            exit_code: EXIT_DATA,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport {
            error: &self.kind,
            message: &self.message,
            exit_code: self.exit_code,
        })
        .expect("error report serializes")
    }
}

impl From<RdpgError> for CliError {
    fn from(e: RdpgError) -> Self {
        let exit_code = if e.is_numeric() {
            EXIT_NUMERIC
        } else if matches!(e, RdpgError::InvalidArgument(_)) {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        CliError {
            kind: e.kind().into(),
            message: e.to_string(),
            exit_code,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            kind: "Parse".into(),
            message: e.to_string(),
            exit_code: EXIT_DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
