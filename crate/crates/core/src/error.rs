use std::path::PathBuf;

use crate::trials::GroupKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyFile,
    #[error("missing or malformed header: expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("duplicate speaker id `{0}`")]
    DuplicateSpeaker(String),
    #[error("empty speaker id on line {line}")]
    EmptySpeakerId { line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: label must be `target` or `nontarget`, got `{value}`")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: score `{value}` is not a finite number")]
    NonFiniteScore { line: usize, value: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("no grouping attributes given")]
    NoAttributes,
    #[error("empty {0} population")]
    EmptyPopulation(&'static str),
    #[error("score {0} is not finite")]
    NonFiniteInput(f64),
    #[error("group {group} lacks {missing} trials")]
    DegenerateGroup {
        group: GroupKey,
        missing: &'static str,
    },
    #[error("aggregate metric is zero; ratio measures are undefined")]
    ZeroAggregate,
    #[error("group {0} has a zero metric value; log ratio is undefined")]
    ZeroGroupValue(GroupKey),
    #[error("metric vectors cover different group sets")]
    GroupSetMismatch,
    #[error("metric vector has no groups")]
    NoGroups,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    WithPath {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::WithPath {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping path context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::WithPath { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_degenerate_group(&self) -> bool {
        matches!(self.root(), Error::DegenerateGroup { .. })
    }

    /// True for errors caused by bad input data, as opposed to bad
    /// parameters. Naming an attribute the metadata lacks counts as a
    /// parameter error.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self.root(),
            Error::InvalidParameter(_) | Error::NoAttributes | Error::UnknownAttribute(_)
        )
    }
}
