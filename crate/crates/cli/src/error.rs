use serde::Serialize;

/// Error surfaced to the user as `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn file(message: impl Into<String>) -> Self {
        Self::new("file", message)
    }

    pub fn stage(message: impl Into<String>) -> Self {
        Self::new("stage", message)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<decum_core::Error> for CliError {
    fn from(e: decum_core::Error) -> Self {
        use decum_core::Error as E;
        let kind = match &e {
            E::Parse { .. } => "parse",
            E::Gap { .. } => "gap",
            E::Validation(_) => "validation",
            E::Range { .. } => "range",
            E::Calibration(_) => "calibration",
            E::Domain(_) => "domain",
            E::Contract(_) => "contract",
            E::Simulation { .. } => "simulation",
            E::Dimension(_) => "dimension",
            E::Spec(_) => "network",
            E::NonFiniteGradient { .. } => "non_finite_gradient",
            E::Training { .. } => "training",
            E::Pool(_) => "pool",
            E::Io(_) => "io",
            E::Json(_) => "json",
            E::Csv(_) => "csv",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}
