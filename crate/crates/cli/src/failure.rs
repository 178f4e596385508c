use std::fmt::Display;

/// Command failure with its exit code: 1 for usage errors, 2 for runtime ones.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }

    pub fn usage(msg: impl Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

/// Config problems are the user's to fix; everything else is a runtime failure.
impl From<dynloss::Error> for Failure {
    fn from(e: dynloss::Error) -> Self {
        match e {
            dynloss::Error::Config(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub type CmdResult = Result<(), Failure>;

pub trait Context<T> {
    /// Attaches `msg` and classifies the error as a runtime failure.
    fn runtime(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure>;
    /// Attaches `msg` and classifies the error as a usage failure.
    fn usage(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Context<T> for Result<T, E> {
    fn runtime(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into().context(msg)))
    }

    fn usage(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into().context(msg)))
    }
}
