use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix not positive definite{}: {what}", node.map(|z| format!(" at node {z}")).unwrap_or_default())]
    NotSpd { node: Option<NodeId>, what: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("inconsistent state: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("variational fit diverged at cycle {cycle}")]
    Diverged {
        cycle: usize,
        last_good: Box<crate::vi::ViFit>,
    },
}

impl Error {
    /// True for failures that come from floating point trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSpd { .. } | Error::Numerical(_) | Error::Diverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
