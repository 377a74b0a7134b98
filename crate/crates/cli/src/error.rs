use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource refusal: {0}")]
    Resource(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<z2sim_core::Error> for CliError {
    fn from(e: z2sim_core::Error) -> Self {
        use z2sim_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::QubitOutOfRange { .. } | E::DuplicateTargets(_) => CliError::Config(msg),
            E::SizeLimit { .. } => CliError::Resource(msg),
            E::MemoryLimit { required, limit } => CliError::Resource(format!(
                "memory estimate {required} bytes exceeds limit {limit} bytes (state vectors alone: {} bytes)",
                required - z2sim_core::trajectory::BASE_MEMORY_BYTES
            )),
            E::SeriesTooShort { .. } | E::NoSignal | E::ZeroReference | E::NoRoot { .. } => CliError::Numeric(msg),
            _ => CliError::Failure(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("json error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
