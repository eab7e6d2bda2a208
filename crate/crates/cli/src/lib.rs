//! Batch command-line pipeline around the `lstmica` library:
//! `simulate` → `train` → `clean` → `evaluate`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;

/// Progress lines on stderr, silenced by `--quiet`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Short machine-readable category of an error chain.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lstmica::Error>() {
            return e.kind();
        }
        if cause.is::<config::ConfigError>() {
            return "config";
        }
        if cause.is::<io::MissingInput>() {
            return "missing_input";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return "parse";
        }
    }
    "error"
}

/// One-line JSON error record: `{"error":kind,"message":text}`.
pub fn error_line(err: &anyhow::Error) -> String {
    let message = err
        .chain()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(": ")
        .replace('\n', " ");
    serde_json::json!({ "error": error_kind(err), "message": message }).to_string()
}
