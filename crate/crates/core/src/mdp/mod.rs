//! MDP vocabulary and exact planning oracles.

mod knowledge;
mod tabular;
mod types;

pub use knowledge::{
    bellman_apply, enumerate_states, policy_evaluation, value_iteration, KnowledgeMdp,
    DEFAULT_STATE_CAP,
};
pub use tabular::{Outcome, Solution, TabularMdp, DEFAULT_TOL, MAX_SWEEPS};
pub use types::{
    AgentAction, DiscountedMdpSpec, DisplayTail, EntityId, Fact, InformationState, Question,
    RelationId, Slot, StateKey, Tail,
};

pub(crate) use types::frontier_of;

/// Generic tabular oracles, for MDPs built by hand.
pub mod table {
    pub use super::tabular::{bellman_apply, policy_evaluation, value_iteration};
}
