use std::fmt;

use thiserror::Error;

/// Pipeline stage a failure is attributed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Set,
    Hypotheses,
    Certification,
    Eigensum,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Set => "set",
            Stage::Hypotheses => "hypotheses",
            Stage::Certification => "certification",
            Stage::Eigensum => "eigensum",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: obscert::Error,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("output: {0}")]
    Output(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const HYPOTHESIS: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const UNSOUND: i32 = 5;
}

/// Exit code for a library error.
pub fn code_for(e: &obscert::Error) -> i32 {
    use obscert::Error as E;
    match e {
        E::InvalidArgument(_) | E::Raster(_) => exit::CONFIG,
        E::Hypothesis(_) => exit::HYPOTHESIS,
        E::EmptyRegion(_) | E::Resolution(_) | E::Infeasible(_) => exit::INFEASIBLE,
        E::Internal(_) | E::Io(_) => exit::INTERNAL,
    }
}

impl CliError {
    pub fn stage(stage: Stage, source: obscert::Error) -> Self {
        CliError::Stage { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Stage { source, .. } => code_for(source),
            CliError::Io(_) | CliError::Output(_) => exit::INTERNAL,
        }
    }
}
