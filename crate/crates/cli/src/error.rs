use std::fmt;

use cfgrank_core::learn::LearnError;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Input = 2,
    Data = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn fail(kind: ExitKind, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        kind,
        error: error.into(),
    }
}

pub trait Classify<T> {
    fn or_exit(self, kind: ExitKind, context: impl FnOnce() -> String) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_exit(self, kind: ExitKind, context: impl FnOnce() -> String) -> CmdResult<T> {
        self.map_err(|e| fail(kind, e.into().context(context())))
    }
}

/// Learning errors split into bad input files, bad flags, and data that
/// cannot support the requested experiment.
pub fn learn_kind(e: &LearnError) -> ExitKind {
    match e {
        LearnError::InvalidHyper(_) => ExitKind::Usage,
        LearnError::EmptyDataset
        | LearnError::SingleClass(_)
        | LearnError::ClassTooSmall { .. }
        | LearnError::AllZeroMatrix => ExitKind::Data,
        LearnError::Unlabeled { .. }
        | LearnError::DimensionMismatch { .. }
        | LearnError::NonFinite { .. }
        | LearnError::SchemaMismatch { .. }
        | LearnError::InvalidCount { .. }
        | LearnError::UnsupportedVersion(_)
        | LearnError::ModelFile(_) => ExitKind::Input,
    }
}

pub fn learn(e: LearnError) -> Failure {
    fail(learn_kind(&e), e)
}
