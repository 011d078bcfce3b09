use std::fmt;

/// A command failure tagged with its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        };
        // One line: the context chain joined by ": ".
        write!(f, "{e:#}")
    }
}

pub trait Tag<T> {
    fn usage(self, context: impl fmt::Display) -> Result<T, Failure>;
    fn data(self, context: impl fmt::Display) -> Result<T, Failure>;
    fn internal(self, context: impl fmt::Display) -> Result<T, Failure>;
}

impl<T, E> Tag<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn usage(self, context: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into().context(context.to_string())))
    }

    fn data(self, context: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into().context(context.to_string())))
    }

    fn internal(self, context: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into().context(context.to_string())))
    }
}
