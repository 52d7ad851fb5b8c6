use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] censpde_core::error::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Self::Parse { path: path.into(), line, message: message.into() }
    }

    pub fn from_csv(path: impl Into<PathBuf>, e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Self::io(path, source),
            _ => Self::parse(path, line, message),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Config(_) => "config",
            Self::Model(_) => "model",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 3,
            Self::Parse { .. } => 4,
            Self::Config(_) => 5,
            Self::Model(_) => 6,
        }
    }

    /// Single-line report: `error kind=<kind> [path=<p> line=<n>] message="<text>"`.
    pub fn error_line(&self) -> String {
        let mut out = format!("error kind={}", self.kind());
        match self {
            Self::Io { path, .. } => out.push_str(&format!(" path={}", quote(&path.display().to_string()))),
            Self::Parse { path, line, .. } => {
                out.push_str(&format!(" path={} line={line}", quote(&path.display().to_string())))
            }
            _ => {}
        }
        let message = match self {
            Self::Io { source, .. } => source.to_string(),
            Self::Parse { message, .. } => message.clone(),
            other => other.to_string(),
        };
        out.push_str(&format!(" message={}", quote(&message)));
        out
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
