use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::buffer::{MemoryBuffer, TransitionRecord};
use super::planner::{plan_with_model, PlannerConfig};
use super::posterior::Posterior;
use crate::env::{EnvParams, EnvPrior};
use crate::error::{Error, Result};
use crate::mdp::{frontier_of, AgentAction, InformationState, Question, Slot, StateKey};
use crate::seed::{self, stream};

/// Knowledge-base / reasoner pairings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Paradigm {
    /// Rule-based chain following over a noiseless graph.
    KgOnly,
    /// Iterative planner over a noisy knowledge source.
    LlmOnly,
    /// Planner that gets one retrieval round, then must answer.
    LlmOplusKg,
    /// Iterative planner with checkpointed context updates.
    LlmOtimesKg,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [
        Paradigm::KgOnly,
        Paradigm::LlmOnly,
        Paradigm::LlmOplusKg,
        Paradigm::LlmOtimesKg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::KgOnly => "kg-only",
            Paradigm::LlmOnly => "llm-only",
            Paradigm::LlmOplusKg => "llm-oplus-kg",
            Paradigm::LlmOtimesKg => "llm-otimes-kg",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownParadigm(name.to_string()))
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Commit a chaining fresh fact if there is one, then query the next hop.
pub fn chain_rule(question: &Question, key: &StateKey) -> AgentAction {
    let mut path = key.path.clone();
    let mut select = Vec::new();
    if path.len() < question.hops() {
        let frontier = frontier_of(question, &path);
        let next = question.relations()[path.len()];
        if let Some(i) = key
            .fresh
            .iter()
            .position(|f| f.tail.is_some() && Some(f.head) == frontier && f.relation == next)
        {
            select.push(i);
            path.push(key.fresh[i]);
        }
    }
    let query = match (question.relations().get(path.len()), frontier_of(question, &path)) {
        (Some(&relation), Some(entity)) => Some(Slot { entity, relation }),
        _ => None,
    };
    AgentAction { select, query }
}

/// A frozen decision rule: the policy the agent follows until its next
/// checkpoint refresh, total over all states.
#[derive(Debug, Clone)]
pub enum DecisionRule {
    Chain,
    Planner {
        config: PlannerConfig,
        model: Arc<EnvParams>,
        beliefs: Arc<Posterior>,
        memo: HashMap<(Arc<Question>, StateKey), AgentAction>,
    },
}

impl DecisionRule {
    pub fn decide(&mut self, question: &Arc<Question>, key: &StateKey) -> Result<AgentAction> {
        match self {
            DecisionRule::Chain => Ok(chain_rule(question, key)),
            DecisionRule::Planner {
                config,
                model,
                beliefs,
                memo,
            } => {
                let memo_key = (question.clone(), key.clone());
                if let Some(a) = memo.get(&memo_key) {
                    return Ok(a.clone());
                }
                let traj = plan_with_model(question, key, model, beliefs, config)?;
                let a = traj.actions.into_iter().next().expect("lookahead is at least one");
                memo.insert(memo_key, a.clone());
                Ok(a)
            }
        }
    }

    /// The realized model this rule plans against, if any.
    pub fn model(&self) -> Option<&Arc<EnvParams>> {
        match self {
            DecisionRule::Chain => None,
            DecisionRule::Planner { model, .. } => Some(model),
        }
    }
}

#[derive(Debug, Clone)]
struct Checkpoint {
    id: u64,
    posterior: Option<Posterior>,
    rule: DecisionRule,
}

/// Settings shared by every planning paradigm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub planner: PlannerConfig,
    /// When false the posterior stays at the prior forever.
    pub learning: bool,
    pub seed: u64,
}

/// A reasoning agent: memory buffer, posterior, and a checkpointed decision rule.
///
/// `act` always consults the checkpoint (B_k and its realized model); the
/// loops decide when to refresh it.
#[derive(Debug, Clone)]
pub struct Agent {
    planner: Option<PlannerConfig>,
    learning: bool,
    posterior: Option<Posterior>,
    checkpoint: Checkpoint,
    seed: u64,
    refreshes: u64,
    buffer: Option<MemoryBuffer>,
    step_budget: Option<usize>,
}

impl Agent {
    /// Rule-based agent with no beliefs.
    pub fn chain_follower() -> Self {
        Agent {
            planner: None,
            learning: false,
            posterior: None,
            checkpoint: Checkpoint {
                id: 0,
                posterior: None,
                rule: DecisionRule::Chain,
            },
            seed: 0,
            refreshes: 0,
            buffer: None,
            step_budget: None,
        }
    }

    pub fn planning(posterior: Posterior, config: AgentConfig) -> Result<Self> {
        config.planner.validate()?;
        let mut agent = Agent {
            planner: Some(config.planner),
            learning: config.learning,
            posterior: Some(posterior),
            checkpoint: Checkpoint {
                id: 0,
                posterior: None,
                rule: DecisionRule::Chain,
            },
            seed: config.seed,
            refreshes: 0,
            buffer: None,
            step_budget: None,
        };
        agent.install_checkpoint();
        Ok(agent)
    }

    pub fn with_step_budget(mut self, budget: usize) -> Self {
        self.step_budget = Some(budget);
        self
    }

    fn install_checkpoint(&mut self) {
        let (Some(config), Some(posterior)) = (self.planner, &self.posterior) else {
            return;
        };
        let model_seed = seed::derive(self.seed, stream::CHECKPOINT, self.refreshes);
        let model = posterior.realize(config.model_mode, model_seed);
        self.checkpoint = Checkpoint {
            id: self.refreshes,
            posterior: Some(posterior.clone()),
            rule: DecisionRule::Planner {
                config,
                model: Arc::new(model),
                beliefs: Arc::new(posterior.clone()),
                memo: HashMap::new(),
            },
        };
    }

    /// Starts a new episode. The posterior carries over; a stale checkpoint
    /// is brought up to date without counting as a context update.
    pub fn begin_episode(&mut self, question: Arc<Question>) {
        self.buffer = Some(MemoryBuffer::new(question));
        if self.posterior.is_some() && self.posterior != self.checkpoint.posterior {
            self.refresh_checkpoint();
        }
    }

    /// k <- k + 1: snapshot the posterior and realize a fresh model from it.
    pub fn refresh_checkpoint(&mut self) {
        if self.planner.is_none() {
            return;
        }
        self.refreshes += 1;
        self.install_checkpoint();
    }

    pub fn act(&mut self, state: &InformationState) -> Result<AgentAction> {
        self.checkpoint.rule.decide(&state.question, &state.key())
    }

    /// Appends the transition to D_t and updates the posterior.
    pub fn observe(&mut self, record: TransitionRecord) -> Result<()> {
        if self.learning {
            if let (Some(p), Some(fact)) = (self.posterior.as_mut(), record.observation()) {
                p.observe(&fact)?;
            }
        }
        match self.buffer.as_mut() {
            Some(b) => b.push(record),
            None => Err(Error::InvalidArgument("observe called before begin_episode".into())),
        }
    }

    pub fn posterior(&self) -> Option<&Posterior> {
        self.posterior.as_ref()
    }

    pub fn checkpoint_posterior(&self) -> Option<&Posterior> {
        self.checkpoint.posterior.as_ref()
    }

    pub fn checkpoint_id(&self) -> u64 {
        self.checkpoint.id
    }

    /// pi^k: the frozen policy of the current checkpoint.
    pub fn decision_rule(&mut self) -> &mut DecisionRule {
        &mut self.checkpoint.rule
    }

    pub fn step_budget(&self) -> Option<usize> {
        self.step_budget
    }

    pub fn is_learning(&self) -> bool {
        self.learning
    }

    pub fn buffer(&self) -> Option<&MemoryBuffer> {
        self.buffer.as_ref()
    }

    /// Posterior entropy, zero for belief-free agents.
    pub fn entropy(&self) -> f64 {
        self.posterior.as_ref().map_or(0.0, Posterior::entropy)
    }

    /// Entropy removed since the checkpoint, slot by slot.
    pub fn entropy_drop_since_checkpoint(&self) -> Result<f64> {
        match (&self.checkpoint.posterior, &self.posterior) {
            (Some(k), Some(now)) => k.entropy_drop(now),
            _ => Ok(0.0),
        }
    }
}

/// Builds an agent for a paradigm. Belief-based agents start from `prior`
/// with the noise level `eta` they will be run against.
pub fn make_agent(paradigm: &str, prior: &EnvPrior, eta: f64, config: &AgentConfig) -> Result<Agent> {
    let paradigm = Paradigm::parse(paradigm)?;
    if paradigm == Paradigm::KgOnly {
        return Ok(Agent::chain_follower());
    }
    let posterior = Posterior::from_prior(prior, prior.observation_model(eta)?);
    let agent = Agent::planning(posterior, *config)?;
    Ok(match paradigm {
        Paradigm::LlmOplusKg => agent.with_step_budget(1),
        _ => agent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ModelMode;
    use crate::mdp::{EntityId, Fact, RelationId};

    #[test]
    fn paradigm_names_round_trip() {
        for p in Paradigm::ALL {
            assert_eq!(Paradigm::parse(p.name()).unwrap(), p);
        }
        assert!(matches!(Paradigm::parse("rag"), Err(Error::UnknownParadigm(n)) if n == "rag"));
    }

    #[test]
    fn chain_rule_commits_then_queries() {
        let q = Question::new(EntityId(0), vec![RelationId(1), RelationId(2)]).unwrap();
        let s0 = StateKey { path: vec![], fresh: vec![] };
        assert_eq!(chain_rule(&q, &s0), AgentAction::query(Slot::new(0, 1)));
        let f = Fact::new(Slot::new(0, 1), Some(EntityId(3)));
        let s1 = StateKey { path: vec![], fresh: vec![f] };
        assert_eq!(chain_rule(&q, &s1), AgentAction::commit_and_query(0, Some(Slot::new(3, 2))));
        let g = Fact::new(Slot::new(3, 2), Some(EntityId(5)));
        let s2 = StateKey { path: vec![f], fresh: vec![g] };
        assert_eq!(chain_rule(&q, &s2), AgentAction::commit_and_query(0, None));
        let dead = StateKey { path: vec![], fresh: vec![Fact::new(Slot::new(0, 1), None)] };
        assert_eq!(chain_rule(&q, &dead), AgentAction::query(Slot::new(0, 1)));
    }

    #[test]
    fn checkpoint_refresh_reseeds_the_model() {
        let prior = EnvPrior::uniform_chain(6, 3, 2, 2, false, 3).unwrap();
        let config = AgentConfig {
            planner: PlannerConfig::exhaustive(2, 0.9).unwrap().with_model_mode(ModelMode::PosteriorSample),
            learning: true,
            seed: 11,
        };
        let mut a = make_agent("llm-otimes-kg", &prior, 0.0, &config).unwrap();
        let mut b = a.clone();
        assert_eq!(a.checkpoint_id(), 0);
        a.refresh_checkpoint();
        b.refresh_checkpoint();
        assert_eq!(a.checkpoint_id(), 1);
        assert_eq!(a.decision_rule().model(), b.decision_rule().model());
        assert_eq!(make_agent("llm-oplus-kg", &prior, 0.0, &config).unwrap().step_budget(), Some(1));
        assert!(make_agent("kg-only", &prior, 0.0, &config).unwrap().posterior().is_none());
    }
}
