use crate::id::NodeId;
use crate::instance::InstanceId;
use crate::wire::WireError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid fault budget: n = {n} < 3f + 1 with f = {f}")]
    InvalidBudget { n: usize, f: usize },
    #[error("instance {0} is already registered")]
    DuplicateInstance(InstanceId),
    #[error("node {0} is not a member of the consensus group")]
    NotInGroup(NodeId),
    #[error("no consensus group is available yet")]
    NoGroup,
    #[error("proposal of {len} bytes exceeds the {max} byte cap")]
    ProposalTooLarge { len: usize, max: usize },
    #[error("binary proposals must be 0 or 1")]
    NotABit,
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}
