use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer dimensions do not line up.
    #[error("shape error{}: {msg}", layer_suffix(.layer))]
    Shape { layer: Option<usize>, msg: String },

    /// A caller broke an API contract (stale trace, missing cached noise, ...).
    #[error("contract violated: {0}")]
    Contract(String),

    /// An argument is outside its valid domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training or inference produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn layer_suffix(layer: &Option<usize>) -> String {
    match layer {
        Some(l) => format!(" at layer {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape {
            layer: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape_at(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer: Some(layer),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the `mcni` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            _ => 4,
        }
    }
}
