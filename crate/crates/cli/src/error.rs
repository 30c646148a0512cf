//! CLI failure type: every error leaves the process through one
//! machine-parsable stderr line, `error[<category>]: <message>`.

use std::fmt;

use notedx_core::corpus::CorpusError;
use notedx_core::dxextract::DxError;
use notedx_core::features::FeatureError;
use notedx_core::models::ModelError;
use notedx_core::preprocess::PreprocessError;
use notedx_core::resample::ResampleError;
use notedx_core::surrogate::SurrogateError;
use notedx_core::tune::TuneError;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> CliError {
        CliError { category, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> CliError {
        CliError::new("config", message)
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError::new("data", message)
    }

    pub fn model(message: impl Into<String>) -> CliError {
        CliError::new("model", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message: String = self
            .message
            .split(['\n', '\r'])
            .map(str::trim)
            .filter(|part| !part.is_empty())
            .collect::<Vec<_>>()
            .join("; ");
        write!(f, "error[{}]: {}", self.category, message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::new("io", e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> CliError {
        CliError::new("data", e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> CliError {
        CliError::new("data", e.to_string())
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> CliError {
        CliError::new("data", e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> CliError {
        CliError::new("features", e.to_string())
    }
}

impl From<ResampleError> for CliError {
    fn from(e: ResampleError) -> CliError {
        CliError::new("resample", e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        CliError::new("model", e.to_string())
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> CliError {
        CliError::new("tune", e.to_string())
    }
}

impl From<DxError> for CliError {
    fn from(e: DxError) -> CliError {
        CliError::new("dxextract", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_single_line_and_tagged() {
        let err = CliError::config("bad seed:\n  not a number\n");
        let text = err.to_string();
        assert_eq!(text, "error[config]: bad seed:; not a number");
        assert!(!text.contains('\n'));
    }

    #[test]
    fn core_errors_map_to_categories() {
        let err: CliError = CorpusError::EmptyCorpus.into();
        assert_eq!(err.category, "data");
        let err: CliError = ModelError::EmptyInput.into();
        assert_eq!(err.category, "model");
    }
}
