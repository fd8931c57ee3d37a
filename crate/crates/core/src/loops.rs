//! Inner reasoning loop, the checkpointed adapted loop, and the outer
//! feedback loop.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::agent::{Agent, MemoryBuffer, TransitionRecord};
use crate::env::{apply_feedback, apply_select_and_query, judge, EnvParams, FeedbackEdit, KnowledgeEnv, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{DisplayTail, InformationState, Question, Tail};
use crate::seed::{self, stream};

/// Slack for comparing entropy drops against the refresh threshold.
pub const NEWINFO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    /// T: step cap.
    pub max_steps: usize,
    /// R: reward that ends the episode.
    pub reward_threshold: f64,
    /// Entropy drop (nats) that triggers a checkpoint refresh; zero refreshes every step.
    pub newinfo_threshold: f64,
}

impl LoopConfig {
    pub fn new(max_steps: usize, reward_threshold: f64, newinfo_threshold: f64) -> Result<Self> {
        let c = LoopConfig {
            max_steps,
            reward_threshold,
            newinfo_threshold,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::InvalidArgument("max_steps T must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.reward_threshold) {
            return Err(Error::InvalidArgument(format!(
                "reward threshold R must lie in [0, 1], got {}",
                self.reward_threshold
            )));
        }
        if !(self.newinfo_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "newinfo threshold must be non-negative, got {}",
                self.newinfo_threshold
            )));
        }
        Ok(())
    }
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_steps: 20,
            reward_threshold: 1.0,
            newinfo_threshold: std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopKind {
    /// Refresh the agent's context every step.
    Inner,
    /// Refresh only once enough new information has arrived.
    Adapted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Reward,
    StepCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub buffer: MemoryBuffer,
    pub rewards: Vec<f64>,
    /// H_0, H_1, ..., H_T: one more entry than there are steps.
    pub entropies: Vec<f64>,
    /// Steps after which the checkpoint advanced.
    pub context_update_steps: Vec<usize>,
    pub answer: Tail,
    pub terminated_by: Termination,
}

impl EpisodeRecord {
    pub fn steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn final_reward(&self) -> f64 {
        self.rewards.last().copied().unwrap_or(0.0)
    }

    /// One `t=.. a=(..) r=.. H=.. refresh=0|1` line per step.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for (t, rec) in self.buffer.records().iter().enumerate() {
            let refresh = u8::from(self.context_update_steps.contains(&t));
            let _ = writeln!(
                out,
                "t={t} a={} r={} H={} refresh={refresh}",
                rec.action,
                self.rewards[t],
                self.entropies[t + 1]
            );
        }
        out
    }

    pub fn answer_text(&self) -> String {
        DisplayTail(self.answer).to_string()
    }
}

/// At least `threshold` nats gone since the checkpoint (up to rounding).
pub fn enough_new_info(h_checkpoint: f64, h_now: f64, threshold: f64) -> bool {
    h_checkpoint - h_now >= threshold - NEWINFO_TOL
}

/// The endpoint of the committed path if it spans the question, else none.
pub fn summarize(buffer: &MemoryBuffer) -> Tail {
    let state = buffer.latest_state();
    if state.path_complete() {
        state.path.last().and_then(|f| f.tail)
    } else {
        None
    }
}

/// What a step observer sees after each transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub entropy_before: f64,
    pub entropy_after: f64,
    /// Entropy removed since the checkpoint the decision was made under.
    pub drop_since_checkpoint: f64,
}

/// Called after every transition, before any checkpoint refresh, so the
/// agent's decision rule is still the one that chose the action.
pub trait StepObserver {
    fn after_step(&mut self, agent: &mut Agent, record: &TransitionRecord, info: &StepInfo) -> Result<()>;
}

impl StepObserver for () {
    fn after_step(&mut self, _: &mut Agent, _: &TransitionRecord, _: &StepInfo) -> Result<()> {
        Ok(())
    }
}

/// One episode of either loop.
///
/// `step_cap` further limits the episode (the agent's own step budget and
/// the loop's T also apply).
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env: &KnowledgeEnv,
    obs: &ObservationModel,
    agent: &mut Agent,
    question: Arc<Question>,
    kind: LoopKind,
    config: &LoopConfig,
    seed: u64,
    step_cap: Option<usize>,
    observer: &mut dyn StepObserver,
) -> Result<EpisodeRecord> {
    config.validate()?;
    question.check_vocabulary(env.kb.n_entities(), env.kb.n_relations())?;
    let cap = [Some(config.max_steps), agent.step_budget(), step_cap]
        .into_iter()
        .flatten()
        .min()
        .expect("max_steps is always present");
    agent.begin_episode(question.clone());
    let mut state = InformationState::initial(question);
    let mut rewards = Vec::new();
    let mut entropies = vec![agent.entropy()];
    let mut updates = Vec::new();
    let mut t = 0;
    let terminated_by = loop {
        let mut step = || -> Result<(TransitionRecord, StepInfo)> {
            let action = agent.act(&state)?;
            let next = apply_select_and_query(&state, &action, &env.kb, obs, seed::derive(seed, stream::STEP, t as u64))?;
            let reward = judge(&next, &env.truth);
            let record = TransitionRecord {
                state: state.clone(),
                action,
                reward,
                next_state: next,
            };
            let before = agent.entropy();
            agent.observe(record.clone())?;
            let info = StepInfo {
                step: t,
                entropy_before: before,
                entropy_after: agent.entropy(),
                drop_since_checkpoint: agent.entropy_drop_since_checkpoint()?,
            };
            Ok((record, info))
        };
        let (record, info) = step().map_err(|e| e.at_step(t))?;
        observer.after_step(agent, &record, &info).map_err(|e| e.at_step(t))?;
        let refresh = match kind {
            LoopKind::Inner => true,
            LoopKind::Adapted => {
                config.newinfo_threshold == 0.0
                    || enough_new_info(info.drop_since_checkpoint, 0.0, config.newinfo_threshold)
            }
        };
        if refresh && agent.posterior().is_some() {
            agent.refresh_checkpoint();
            updates.push(t);
        }
        rewards.push(record.reward);
        entropies.push(info.entropy_after);
        state = record.next_state;
        t += 1;
        if rewards[t - 1] >= config.reward_threshold {
            break Termination::Reward;
        }
        if t >= cap {
            break Termination::StepCap;
        }
    };
    let buffer = agent
        .buffer()
        .cloned()
        .expect("begin_episode installed a buffer");
    Ok(EpisodeRecord {
        answer: summarize(&buffer),
        buffer,
        rewards,
        entropies,
        context_update_steps: updates,
        terminated_by,
    })
}

/// Reason, select-and-query, judge, remember; until r_t >= R or t >= T.
pub fn run_inner_loop(
    env: &KnowledgeEnv,
    obs: &ObservationModel,
    agent: &mut Agent,
    question: Arc<Question>,
    config: &LoopConfig,
    seed: u64,
) -> Result<EpisodeRecord> {
    run_episode(env, obs, agent, question, LoopKind::Inner, config, seed, None, &mut ())
}

/// As [`run_inner_loop`], but the agent keeps planning against its
/// checkpoint until the posterior has lost `newinfo_threshold` nats.
pub fn run_adapted_inner_loop(
    env: &KnowledgeEnv,
    obs: &ObservationModel,
    agent: &mut Agent,
    question: Arc<Question>,
    config: &LoopConfig,
    seed: u64,
) -> Result<EpisodeRecord> {
    run_episode(env, obs, agent, question, LoopKind::Adapted, config, seed, None, &mut ())
}

/// Default feedback: if the answer is wrong, correct the first slot on the
/// true answer chain where the knowledge base disagrees with the truth.
pub fn correct_first_wrong_slot(
    question: &Question,
    record: &EpisodeRecord,
    kb: &EnvParams,
    truth: &EnvParams,
) -> Vec<FeedbackEdit> {
    let chain = truth.answer_chain(question);
    let expected = chain.last().and_then(|f| f.tail);
    if record.answer.is_some() && record.answer == expected {
        return Vec::new();
    }
    chain
        .iter()
        .find(|f| kb.tail(f.slot()).ok() != Some(f.tail))
        .map(|f| {
            vec![FeedbackEdit {
                slot: f.slot(),
                new_tail: f.tail,
            }]
        })
        .unwrap_or_default()
}

/// One round of the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRound {
    pub record: EpisodeRecord,
    pub edits: Vec<FeedbackEdit>,
}

/// Repeated QA rounds on one question. After each round the feedback edits
/// are applied to the knowledge base copy; the judge's truth never changes.
#[allow(clippy::too_many_arguments)]
pub fn run_outer_loop<F, R>(
    mut agent_factory: F,
    env: &KnowledgeEnv,
    obs: &ObservationModel,
    question: Arc<Question>,
    mut feedback_rule: R,
    rounds: usize,
    kind: LoopKind,
    config: &LoopConfig,
    seed: u64,
) -> Result<Vec<OuterRound>>
where
    F: FnMut(usize) -> Result<Agent>,
    R: FnMut(&Question, &EpisodeRecord, &EnvParams, &EnvParams) -> Vec<FeedbackEdit>,
{
    let mut kb = env.kb.clone();
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut agent = agent_factory(round)?;
        let live = KnowledgeEnv::with_kb(env.truth.clone(), kb.clone());
        let record = run_episode(
            &live,
            obs,
            &mut agent,
            question.clone(),
            kind,
            config,
            seed::derive(seed, stream::ROUND, round as u64),
            None,
            &mut (),
        )?;
        let edits = feedback_rule(&question, &record, &kb, &env.truth);
        kb = apply_feedback(&kb, &edits)?;
        out.push(OuterRound { record, edits });
    }
    Ok(out)
}
