//! The reasoning agent: memory, exact posterior, planner and paradigm presets.

mod agents;
mod buffer;
mod planner;
mod posterior;

pub use agents::{chain_rule, make_agent, Agent, AgentConfig, DecisionRule, Paradigm};
pub use buffer::{MemoryBuffer, TransitionRecord};
pub use planner::{plan_tree_search, plan_with_model, propose_actions, BeamTrajectory, PlannerConfig};
pub use posterior::{information_gain, posterior_entropy, update_posterior, ModelMode, Posterior};
