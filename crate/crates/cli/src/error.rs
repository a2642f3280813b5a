use thiserror::Error;

/// Failures grouped by the exit code a script sees.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Network(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<kw_core::audio::AudioError> for CliError {
    fn from(e: kw_core::audio::AudioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<kw_core::nn::NnError> for CliError {
    fn from(e: kw_core::nn::NnError) -> Self {
        use kw_core::nn::NnError;
        match e {
            NnError::Config(m) => CliError::Usage(m),
            NnError::Numeric(m) => CliError::Internal(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<kw_core::detector::DetectorError> for CliError {
    fn from(e: kw_core::detector::DetectorError) -> Self {
        use kw_core::detector::DetectorError;
        match e {
            DetectorError::Config(m) => CliError::Usage(m),
            DetectorError::Nn(e) => e.into(),
            DetectorError::Link(e) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<kw_gateway::GatewayError> for CliError {
    fn from(e: kw_gateway::GatewayError) -> Self {
        use kw_gateway::GatewayError;
        match e {
            GatewayError::Upload(e) => e.into(),
            GatewayError::Detector(e) => e.into(),
            GatewayError::Link(e) => CliError::Usage(e.to_string()),
            GatewayError::Spool(e) => CliError::Data(format!("spool: {e}")),
            GatewayError::Panic(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<kw_gateway::UploadError> for CliError {
    fn from(e: kw_gateway::UploadError) -> Self {
        use kw_gateway::UploadError;
        match e {
            UploadError::Spool(e) => CliError::Data(format!("spool: {e}")),
            UploadError::Config(m) => CliError::Usage(m),
            other => CliError::Network(other.to_string()),
        }
    }
}

impl From<kw_cloud::ServeError> for CliError {
    fn from(e: kw_cloud::ServeError) -> Self {
        use kw_cloud::ServeError;
        match e {
            ServeError::Bind { .. } | ServeError::Io(_) => CliError::Network(e.to_string()),
            ServeError::Store(_) => CliError::Data(e.to_string()),
            ServeError::Config(m) => CliError::Usage(m),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
