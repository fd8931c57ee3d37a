//! Model-based beam search: an actor proposes actions, a model realized from
//! the posterior executes them, and a critic keeps the best `W` trajectories.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use super::buffer::MemoryBuffer;
use super::posterior::{ModelMode, Posterior};
use crate::env::{apply_select_and_query, legal_actions, transition_reward, EnvParams, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{frontier_of, AgentAction, Fact, InformationState, Question, StateKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    /// U: lookahead depth.
    pub lookahead: usize,
    /// W: trajectories kept per level.
    pub beam_width: usize,
    /// N: actions proposed per trajectory.
    pub proposals: usize,
    pub gamma: f64,
    pub model_mode: ModelMode,
}

impl PlannerConfig {
    pub fn new(lookahead: usize, beam_width: usize, proposals: usize, gamma: f64, model_mode: ModelMode) -> Result<Self> {
        let c = PlannerConfig {
            lookahead,
            beam_width,
            proposals,
            gamma,
            model_mode,
        };
        c.validate()?;
        Ok(c)
    }

    /// No truncation: every legal action is proposed and every distinct state kept.
    pub fn exhaustive(lookahead: usize, gamma: f64) -> Result<Self> {
        Self::new(lookahead, usize::MAX, usize::MAX, gamma, ModelMode::PosteriorSample)
    }

    pub fn with_model_mode(mut self, mode: ModelMode) -> Self {
        self.model_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookahead < 1 {
            return Err(Error::InvalidArgument("lookahead U must be at least 1".into()));
        }
        if self.beam_width < 1 {
            return Err(Error::InvalidArgument("beam width W must be at least 1".into()));
        }
        if self.proposals < self.beam_width {
            return Err(Error::InvalidArgument(format!(
                "proposals N ({}) must satisfy N >= W ({})",
                self.proposals, self.beam_width
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "planner gamma must lie strictly inside (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// A planned trajectory and its discounted model return.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamTrajectory {
    pub states: Vec<StateKey>,
    pub actions: Vec<AgentAction>,
    pub cumulative_discounted_value: f64,
}

struct Beam {
    states: Vec<StateKey>,
    actions: Vec<AgentAction>,
    value: f64,
    discount: f64,
}

impl Beam {
    fn last(&self) -> &StateKey {
        self.states.last().expect("beams start from the root")
    }
}

fn post_selection_path(key: &StateKey, action: &AgentAction) -> Vec<Fact> {
    let mut path = key.path.clone();
    path.extend(action.select.iter().filter_map(|&i| key.fresh.get(i)).copied());
    path
}

/// Actor: all legal actions if there are at most `n`, otherwise the `n` most
/// relevant ones.
///
/// Relevance is the belief that the committed path is correct, times whether
/// the query follows the question's next relation (answering counts as
/// following). Ties go to the longer committed path, then action order.
pub fn propose_actions(
    question: &Question,
    key: &StateKey,
    beliefs: &Posterior,
    n_relations: usize,
    n: usize,
) -> Vec<AgentAction> {
    let mut actions = legal_actions(question, key, n_relations);
    if actions.len() <= n {
        return actions;
    }
    let mut scored: Vec<(f64, usize, AgentAction)> = actions
        .drain(..)
        .map(|a| {
            let path = post_selection_path(key, &a);
            let follows = match a.query {
                None => true,
                Some(slot) => {
                    question.relations().get(path.len()) == Some(&slot.relation)
                        && frontier_of(question, &path) == Some(slot.entity)
                }
            };
            let score = if follows { beliefs.path_probability(&path) } else { 0.0 };
            (score, path.len(), a)
        })
        .collect();
    scored.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then_with(|| y.1.cmp(&x.1))
            .then_with(|| x.2.cmp(&y.2))
    });
    scored.into_iter().take(n).map(|(_, _, a)| a).collect()
}

fn model_step(question: &Arc<Question>, key: &StateKey, action: &AgentAction, model: &EnvParams) -> Result<StateKey> {
    let state = InformationState::from_key(question.clone(), key, 0);
    Ok(apply_select_and_query(&state, action, model, &ObservationModel::noiseless(), 0)?.key())
}

/// Beam search from `key` against a fixed model environment.
///
/// The model answers queries without noise and doubles as the judge, so the
/// critic's score is the discounted sum of judge increments over `U` steps.
pub fn plan_with_model(
    question: &Arc<Question>,
    key: &StateKey,
    model: &EnvParams,
    beliefs: &Posterior,
    config: &PlannerConfig,
) -> Result<BeamTrajectory> {
    config.validate()?;
    let mut beams = vec![Beam {
        states: vec![key.clone()],
        actions: Vec::new(),
        value: 0.0,
        discount: 1.0,
    }];
    for _ in 0..config.lookahead {
        let mut next = Vec::new();
        for beam in &beams {
            let from = beam.last();
            let actions = propose_actions(question, from, beliefs, model.n_relations(), config.proposals);
            if actions.is_empty() {
                return Err(Error::NoLegalAction(from.to_string()));
            }
            for a in actions {
                let to = model_step(question, from, &a, model)?;
                let r = transition_reward(question, from, &to, model);
                let mut states = beam.states.clone();
                states.push(to);
                let mut acts = beam.actions.clone();
                acts.push(a);
                next.push(Beam {
                    states,
                    actions: acts,
                    value: beam.value + beam.discount * r,
                    discount: beam.discount * config.gamma,
                });
            }
        }
        next.sort_by(|x, y| match y.value.total_cmp(&x.value) {
            Ordering::Equal => x.actions.cmp(&y.actions),
            o => o,
        });
        // equal depth and equal end state: the best-scoring prefix dominates
        let mut seen = HashSet::new();
        next.retain(|b| seen.insert(b.last().clone()));
        next.truncate(config.beam_width);
        beams = next;
    }
    let best = beams.swap_remove(0);
    Ok(BeamTrajectory {
        states: best.states,
        actions: best.actions,
        cumulative_discounted_value: best.value,
    })
}

/// One planning decision for the buffer's latest state, with the model
/// realized from `posterior` by `seed`.
pub fn plan_tree_search(
    buffer: &MemoryBuffer,
    posterior: &Posterior,
    config: &PlannerConfig,
    seed: u64,
) -> Result<AgentAction> {
    let model = posterior.realize(config.model_mode, seed);
    let state = buffer.latest_state();
    let traj = plan_with_model(buffer.question(), &state.key(), &model, posterior, config)?;
    Ok(traj.actions.into_iter().next().expect("lookahead is at least one"))
}
