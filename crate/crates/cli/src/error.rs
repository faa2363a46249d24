use std::fmt;

/// Failure of a command together with its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_FAILED_CHECKS: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_LIBRARY: u8 = 3;

impl CliError {
    /// Bad flags, unreadable or unparseable input.
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    /// An error raised by the library while processing valid input.
    pub fn library(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_LIBRARY,
            message: message.into(),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: format!("{context}: {err}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

macro_rules! library_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::library(e.to_string())
            }
        }
    )*};
}

library_error!(
    rigid_frames::backbone::BackboneError,
    rigid_frames::canonicalize::CanonicalizeError,
    rigid_frames::views::ViewsError,
    rigid_frames::flowmatch::FlowError,
    rigid_frames::igso3::Igso3Error
);
