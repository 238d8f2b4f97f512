use std::fmt;
use std::path::Path;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn internal(message: String) -> Self {
        Failure { code: EXIT_IO, message }
    }

    /// Core error while working on `context`.
    pub fn core(context: &str, err: funcmed::Error) -> Self {
        let code = if err.is_numerical() {
            EXIT_NUMERICAL
        } else if matches!(err, funcmed::Error::Io(_)) {
            EXIT_IO
        } else {
            EXIT_USAGE
        };
        Failure {
            code,
            message: format!("{context}: {err}"),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
