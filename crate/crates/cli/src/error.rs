use std::fmt;

/// Failure category; each maps to a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Validation,
    Io,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Validation => 3,
            Category::Io => 4,
            Category::Numerical => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Validation => "validation",
            Category::Io => "io",
            Category::Numerical => "numerical",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, so callers can grep for the category
        write!(f, "error[{}]: {}", self.category.name(), self.message.replace('\n', " "))
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { category: Category::Usage, message: msg.into() }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Self { category: Category::Validation, message: msg.into() }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self { category: Category::Io, message: format!("{}: {e}", path.display()) }
    }
}

impl From<ldk::Error> for CliError {
    fn from(e: ldk::Error) -> Self {
        let category = match &e {
            ldk::Error::Io(_) => Category::Io,
            ldk::Error::Diverged { .. } => Category::Numerical,
            _ => Category::Validation,
        };
        Self { category, message: e.to_string() }
    }
}

/// Attaches the offending path to library errors.
pub trait Context<T> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, ldk::Error> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError> {
        self.map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
