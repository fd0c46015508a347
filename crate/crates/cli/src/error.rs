use std::io;
use std::path::PathBuf;

use crate::pnm::PnmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{stage} {}: {source}", path.display())]
    Io {
        stage: &'static str,
        path: PathBuf,
        source: io::Error,
    },
    #[error("{stage} {}: {source}", path.display())]
    Image {
        stage: &'static str,
        path: PathBuf,
        source: PnmError,
    },
    #[error("{stage}: {source}")]
    Engine {
        stage: &'static str,
        source: aniso_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use aniso_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Image { .. } => 3,
            CliError::Engine { source, .. } => match source {
                E::Solver { .. } | E::Numerical(_) | E::Fit(_) => 4,
                E::Invariant { .. } => 5,
                E::Parameter(_)
                | E::Dimension(_)
                | E::Range { .. }
                | E::DegenerateDirection { .. }
                | E::Symmetry { .. } => 2,
            },
        }
    }

    pub(crate) fn engine(stage: &'static str) -> impl FnOnce(aniso_core::Error) -> Self {
        move |source| CliError::Engine { stage, source }
    }
}
