//! Errors and their exit codes.

use capflow_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Wrap a core error with the module that raised it.
    pub fn core(module: &'static str) -> impl FnOnce(CoreError) -> CliError {
        move |source| CliError::Core { module, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Core { source, .. } => match source {
                CoreError::Domain(_)
                | CoreError::Degenerate(_)
                | CoreError::Refused(_)
                | CoreError::UnknownSurface(_) => EXIT_USAGE,
                CoreError::Numeric(_)
                | CoreError::Inconsistent(_)
                | CoreError::NotPositiveDefinite { .. }
                | CoreError::Singular { .. }
                | CoreError::NoConvergence { .. } => EXIT_NUMERIC,
            },
            CliError::Io { .. } => EXIT_NUMERIC,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let wrap = |e| CliError::core("spectral_forms")(e);
        assert_eq!(wrap(CoreError::NoConvergence { iterations: 3, residual: 1.0 }).exit_code(), EXIT_NUMERIC);
        assert_eq!(wrap(CoreError::Singular { kernel_dim: 1, detail: String::new() }).exit_code(), EXIT_NUMERIC);
        assert_eq!(wrap(CoreError::Refused("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_USAGE);
        let e = wrap(CoreError::Numeric("breakdown".into()));
        assert_eq!(e.to_string(), "spectral_forms: numeric failure: breakdown");
    }
}
