use std::fmt;

/// Failure of a command, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input file or invalid argument values.
    Data(String),
    /// The analysis itself failed.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

/// Renders as a single line: `error[kind]: message`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: String = self
            .message()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        write!(f, "error[{}]: {flat}", self.kind())
    }
}

impl From<copas_core::Error> for CliError {
    fn from(e: copas_core::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
