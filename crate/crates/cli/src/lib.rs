//! Command-line front end and file formats for the `mobilevig-core` model.

pub mod bench;
pub mod describe;
pub mod error;
pub mod forward;
pub mod verify;
pub mod weights_file;

pub use error::{CliError, Result};

pub const SEED_ENV: &str = "MVIG_SEED";

/// `--seed` if given, else `MVIG_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
