use tipguard_core::autoencoder::ModelError;
use tipguard_core::bohb::BohbError;
use tipguard_core::detector::DetectorError;
use tipguard_core::nn::NnError;
use tipguard_core::synth::SynthError;
use tipguard_core::timeseries::TimeseriesError;

/// Failure classes with stable process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
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
        CliError::Data(format!("json: {e}"))
    }
}

impl From<TimeseriesError> for CliError {
    fn from(e: TimeseriesError) -> Self {
        match e {
            TimeseriesError::BadFraction(_) | TimeseriesError::BadWindowSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } | ModelError::ZeroVariance => CliError::Numeric(e.to_string()),
            ModelError::Nn(NnError::NonFiniteGradient) | ModelError::Nn(NnError::NonFiniteInput) => {
                CliError::Numeric(e.to_string())
            }
            ModelError::InvalidSpec(_) | ModelError::ZeroBudget => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Model(m) => m.into(),
            DetectorError::BadQuantile(_) => CliError::Usage(e.to_string()),
            DetectorError::AllZero(_) | DetectorError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BohbError> for CliError {
    fn from(e: BohbError) -> Self {
        match e {
            BohbError::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ModelError::ZeroVariance).exit_code(), 4);
        assert_eq!(CliError::from(ModelError::EmptyDataset).exit_code(), 3);
        assert_eq!(CliError::from(ModelError::InvalidSpec("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(TimeseriesError::Empty).exit_code(), 3);
        assert_eq!(CliError::from(DetectorError::BadQuantile(2.0)).exit_code(), 2);
        assert_eq!(CliError::from(DetectorError::AllZero(1)).exit_code(), 4);
        assert_eq!(CliError::from(SynthError::UnknownPreset("x".into())).exit_code(), 2);
    }
}
