//! Error taxonomy shared across the crate.
//!
//! Four classes map onto distinct CLI exit codes: contract violations
//! (caller passed something the operation's precondition rejects), I/O
//! failures (always carrying the offending path), corrupt on-disk data,
//! and non-finite losses during training.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("non-finite loss: {component} is not finite at step {step}")]
    NonFinite { component: String, step: u64 },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI. 0 is success, 2 is reserved for
    /// argument parsing (clap's convention).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Contract(_) => 4,
            Error::Corrupt(_) => 5,
            Error::NonFinite { .. } => 6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let errs = [
            Error::io("/tmp/x", std::io::Error::from(std::io::ErrorKind::NotFound)),
            Error::contract("bad shape"),
            Error::corrupt("truncated file"),
            Error::NonFinite {
                component: "kl_image".into(),
                step: 3,
            },
        ];
        let mut codes: Vec<i32> = errs.iter().map(|e| e.exit_code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), 4);
        assert!(!codes.contains(&0) && !codes.contains(&2));
    }
}
