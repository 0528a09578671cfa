//! Process exit statuses. These numbers are part of the public interface.

use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ANNOTATION_FAILURES: u8 = 3;
pub const EXIT_EMPTY_JOIN: u8 = 4;
pub const EXIT_DESIGN: u8 = 5;

/// An error that carries the status the process should exit with.
#[derive(Debug)]
pub struct Exit {
    pub status: u8,
    pub message: String,
}

impl Exit {
    pub fn new(status: u8, message: impl Into<String>) -> Self {
        Exit { status, message: message.into() }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

/// The status carried anywhere in the error chain, or 1.
pub fn status_of(err: &anyhow::Error) -> u8 {
    err.chain().find_map(|e| e.downcast_ref::<Exit>()).map_or(EXIT_OTHER, |e| e.status)
}
