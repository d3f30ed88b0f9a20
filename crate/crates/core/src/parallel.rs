//! Thread-count control through the `ASN_THREADS` environment variable.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "ASN_THREADS";

/// Parses an `ASN_THREADS` value; `0` or empty means one thread per core.
pub fn parse_threads(value: Option<&str>) -> Result<usize> {
    match value.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v.parse().map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        }),
    }
}

/// Configures the global rayon pool from the environment. Call once, early.
pub fn init_from_env() -> Result<()> {
    let threads = parse_threads(std::env::var(THREADS_ENV).ok().as_deref())?;
    // A pool may already exist (e.g. in tests); its size is then kept.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_thread_counts() {
        assert_eq!(parse_threads(None).unwrap(), 0);
        assert_eq!(parse_threads(Some("4")).unwrap(), 4);
        assert!(parse_threads(Some("-1")).is_err());
    }
}
