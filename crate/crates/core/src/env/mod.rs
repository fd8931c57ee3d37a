//! The knowledge environment: synthetic knowledge graphs, their prior, noisy
//! retrieval, the judge and the feedback channel.

mod dynamics;
mod format;
mod params;

pub use dynamics::{
    apply_select_and_query, correct_prefix, judge, judge_path, legal_actions,
    successor_distribution, transition_reward,
};
pub use params::{
    all_slots, apply_feedback, chain_questions, query, sample_env, EnvParams, EnvPrior,
    FeedbackEdit, ObservationModel, SlotSupport,
};

/// What the agent queries (`kb`) and what the judge scores against (`truth`).
///
/// They coincide except in the outer feedback loop, where edits land on the
/// knowledge base copy and the truth stays fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeEnv {
    pub kb: EnvParams,
    pub truth: EnvParams,
}

impl KnowledgeEnv {
    pub fn new(env: EnvParams) -> Self {
        KnowledgeEnv {
            kb: env.clone(),
            truth: env,
        }
    }

    pub fn with_kb(truth: EnvParams, kb: EnvParams) -> Self {
        KnowledgeEnv { kb, truth }
    }
}
