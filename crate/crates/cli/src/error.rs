use std::fmt;
use std::process::ExitCode;

use asis_core::Error;

use crate::config::ConfigIssue;

/// Failure of a command, carrying its exit-code class.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<ConfigIssue>),
    /// Bad input that is not tied to a config key, e.g. a malformed graph file.
    Validation(String),
    Infeasible(String),
    Numerical(String),
    /// Writing outputs failed.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) | Self::Validation(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Numerical(_) => 4,
            Self::Output(_) => 1,
        })
    }
}

impl From<ConfigIssue> for CliError {
    fn from(i: ConfigIssue) -> Self {
        Self::Config(vec![i])
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Disconnected => Self::Validation(
                "standing assumption violated: the contact graph must be connected".into(),
            ),
            Error::Infeasible { .. } => Self::Infeasible(e.to_string()),
            Error::Numerical(_) | Error::NoConvergence { .. } => Self::Numerical(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(issues) => {
                for (k, i) in issues.iter().enumerate() {
                    if k > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{i}")?;
                }
                Ok(())
            }
            Self::Validation(m) | Self::Infeasible(m) | Self::Numerical(m) | Self::Output(m) => {
                f.write_str(m)
            }
        }
    }
}
