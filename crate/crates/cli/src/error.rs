use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    /// A stage ran before the stage that produces its input.
    #[error("missing dependency: {artifact} not found in {dir}; run `crowdcast {stage}` first")]
    Dependency {
        artifact: String,
        dir: String,
        stage: String,
    },

    /// A predecessor artifact was produced under a different configuration.
    #[error("{artifact} was written under config {found} but the current config is {expected}; rerun `crowdcast {stage}`")]
    Stale {
        artifact: String,
        stage: String,
        found: String,
        expected: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Dependency { .. } | CliError::Stale { .. } => 3,
            CliError::Constraint(_) => 4,
        }
    }
}

impl From<crowdcast::Error> for CliError {
    fn from(e: crowdcast::Error) -> Self {
        use crowdcast::Error as E;
        match e {
            E::Config(_) | E::Lookup { .. } | E::UnresolvedEdge(..) => {
                CliError::Config(e.to_string())
            }
            E::Constraint(_) | E::Cycle(_) => CliError::Constraint(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
