use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad options, unknown preset, invalid or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Simulation failures, malformed input files, replay mismatches.
    #[error("{0}")]
    Runtime(String),
    #[error("fit did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<hom_core::montecarlo::SimError> for CliError {
    fn from(e: hom_core::montecarlo::SimError) -> Self {
        use hom_core::montecarlo::SimError;
        match e {
            SimError::Config { .. } | SimError::DegenerateBinning { .. } => CliError::Config(e.to_string()),
            SimError::AtDelay { ref source, .. } if matches!(**source, SimError::Config { .. }) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<hom_core::estimation::EstimationError> for CliError {
    fn from(e: hom_core::estimation::EstimationError) -> Self {
        use hom_core::estimation::EstimationError as E;
        match e {
            E::NotConverged { .. } | E::Singular => CliError::NotConverged(e.to_string()),
            E::MissingEnvelopeScale | E::InvalidInterval { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hom_core::estimation::EstimationError;
    use hom_core::montecarlo::SimError;

    #[test]
    fn exit_codes_by_failure_class() {
        assert_eq!(
            CliError::from(EstimationError::NotConverged { iterations: 200 }).exit_code(),
            EXIT_NOT_CONVERGED
        );
        assert_eq!(
            CliError::from(EstimationError::Singular).exit_code(),
            EXIT_NOT_CONVERGED
        );
        assert_eq!(
            CliError::from(EstimationError::MissingEnvelopeScale).exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(CliError::from(EstimationError::NoData).exit_code(), EXIT_RUNTIME);
        let bad = SimError::Config {
            field: "duration_s",
            value: -1.0,
        };
        assert_eq!(CliError::from(bad).exit_code(), EXIT_CONFIG);
        assert_eq!(
            CliError::from(SimError::Unsorted { index: 3 }).exit_code(),
            EXIT_RUNTIME
        );
    }
}
