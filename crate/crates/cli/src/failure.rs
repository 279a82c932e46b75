use std::fmt;

use capgen::Error;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Bad flags, values outside a domain, or unusable configuration.
pub const USAGE: i32 = 2;
/// Unreadable, malformed or mismatched data.
pub const DATA: i32 = 3;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Config(_) => USAGE,
            Error::Dimension { .. }
            | Error::Contract(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::DegenerateGeometry(_)
            | Error::Io { .. } => DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}
