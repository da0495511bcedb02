use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Wraps any displayable error as a validation failure, prefixed by `what`.
pub fn invalid<E: Display>(what: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Validation(format!("{what}: {e}"))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Non-empty lines with trailing whitespace removed.
pub fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.trim_end().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Buffered output to `path`, or standard output when `None`.
pub struct Output {
    path: Option<PathBuf>,
    inner: Box<dyn Write>,
}

impl Output {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Output { path: path.map(Path::to_path_buf), inner })
    }

    pub fn err(&self, e: io::Error) -> CliError {
        CliError::Io { path: self.path.clone().unwrap_or_else(|| PathBuf::from("<stdout>")), source: e }
    }

    pub fn write_str(&mut self, s: &str) -> Result<(), CliError> {
        self.inner.write_all(s.as_bytes()).map_err(|e| self.err(e))
    }

    /// Runs a writer over the sink, mapping I/O failures to this path.
    pub fn with<T>(&mut self, f: impl FnOnce(&mut dyn Write) -> io::Result<T>) -> Result<T, CliError> {
        f(&mut self.inner).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| self.err(e))
    }
}

/// Refuses to write over an input file.
pub fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let out = canon(output);
    if inputs.iter().any(|i| canon(i) == out) {
        return Err(CliError::Validation(format!("{} is also an input file", output.display())));
    }
    Ok(())
}
