use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ifaad_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    /// Malformed forest or session file.
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable code used by the CLI and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(ifaad_core::Error::EmptyDataset) => "empty_dataset",
            Error::Core(ifaad_core::Error::BudgetExhausted | ifaad_core::Error::AllLabeled) => {
                "budget_exhausted"
            }
            Error::Core(ifaad_core::Error::InvalidParameter(_)) | Error::Config(_) => "invalid_config",
            Error::Core(_) => "model_error",
            Error::Io(_) => "io_error",
            Error::Csv(_) | Error::Parse { .. } => "parse_error",
            Error::Json(_) => "json_error",
            Error::Schema(_) => "schema_error",
            Error::Format(_) => "format_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
