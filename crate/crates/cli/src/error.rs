use std::fmt;

/// Failure categories, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    ConfigParse,
    MissingFile,
    DimensionMismatch,
    NumericalBlowup,
    Checkpoint,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::ConfigParse => 3,
            Kind::MissingFile => 4,
            Kind::DimensionMismatch => 5,
            Kind::NumericalBlowup => 6,
            Kind::Checkpoint => 7,
            Kind::Runtime => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::ConfigParse => "config-parse",
            Kind::MissingFile => "missing-file",
            Kind::DimensionMismatch => "dimension-mismatch",
            Kind::NumericalBlowup => "numerical-blowup",
            Kind::Checkpoint => "checkpoint",
            Kind::Runtime => "runtime",
        }
    }
}

/// Exit status table shown in `--help`.
pub const EXIT_CODES: &str = "Exit status:
  0  success
  1  runtime error
  2  usage error
  3  config-parse error (unknown key, type mismatch, out-of-range value)
  4  missing file
  5  dimension mismatch
  6  numerical blow-up
  7  malformed checkpoint

Errors are printed to stderr as a single line:
  error kind=<kind> code=<status> message=\"...\"";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    /// The single-line machine-readable form.
    pub fn line(&self) -> String {
        let escaped = self.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!(
            "error kind={} code={} message=\"{escaped}\"",
            self.kind.name(),
            self.kind.exit_code()
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.line())
    }
}

impl std::error::Error for CliError {}

impl From<hesn_core::Error> for CliError {
    fn from(e: hesn_core::Error) -> Self {
        use hesn_core::Error as E;
        let kind = match &e {
            E::DimensionMismatch { .. } => Kind::DimensionMismatch,
            E::NumericalBlowup { .. } => Kind::NumericalBlowup,
            E::Checkpoint { .. } => Kind::Checkpoint,
            E::Io(m) if m.contains("No such file") => Kind::MissingFile,
            _ => Kind::Runtime,
        };
        Self::new(kind, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
