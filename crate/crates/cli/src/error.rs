use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid config{}: {message}", field.as_deref().map(|f| format!(" field `{f}`")).unwrap_or_default())]
    Config { field: Option<String>, message: String },

    #[error("{command}: {source}")]
    Numerical { command: String, source: gfstop_core::Error },

    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(field: Option<&str>, message: impl Into<String>) -> Self {
        CliError::Config { field: field.map(str::to_owned), message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    /// One-line JSON record written to stderr on failure.
    pub fn record(&self) -> Value {
        let (kind, detail) = match self {
            CliError::Usage(_) => ("usage", json!({})),
            CliError::Config { field, .. } => ("config", json!({ "field": field })),
            CliError::Numerical { command, source } => {
                ("numerical", json!({ "command": command, "cause": core_kind(source) }))
            }
            CliError::Io(_) => ("io", json!({})),
        };
        let mut rec = json!({ "kind": kind, "message": self.to_string() });
        if let (Value::Object(r), Value::Object(d)) = (&mut rec, detail) {
            r.extend(d);
        }
        json!({ "error": rec })
    }
}

fn core_kind(e: &gfstop_core::Error) -> &'static str {
    use gfstop_core::Error::*;
    match e {
        Domain(_) => "domain",
        Evaluation { .. } => "evaluation",
        NoRoot { .. } => "no_root",
        AssumptionViolated(_) => "assumption_violated",
        NoIdentification(_) => "no_identification",
        OutOfHypothesis(_) => "out_of_hypothesis",
        NonContraction { .. } => "non_contraction",
        NonConvergence { .. } => "non_convergence",
        NoSolution(_) => "no_solution",
        Unsupported(_) => "unsupported",
        InvalidInput(_) => "invalid_input",
    }
}
