//! Exact tabular form of the reasoning MDP for one question and one environment.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use super::tabular::{self, Solution, TabularMdp};
use super::types::{AgentAction, DiscountedMdpSpec, InformationState, Question, StateKey};
use crate::env::{legal_actions, successor_distribution, transition_reward, EnvParams, ObservationModel};
use crate::error::{Error, Result};

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// All states reachable from a set of roots, with their exact dynamics.
///
/// States are indexed in ascending (path, fresh) order. The environment plays
/// both the knowledge base and the judge: rewards are judge increments
/// against `env`.
#[derive(Debug, Clone)]
pub struct KnowledgeMdp {
    question: Arc<Question>,
    table: TabularMdp<StateKey, AgentAction>,
}

impl KnowledgeMdp {
    /// Enumerates everything reachable from the initial state of `question`.
    pub fn build(env: &EnvParams, obs: &ObservationModel, question: Arc<Question>, cap: usize) -> Result<Self> {
        let root = InformationState::initial(question.clone()).key();
        Self::build_from(env, obs, question, &[root], cap)
    }

    pub fn build_from(
        env: &EnvParams,
        obs: &ObservationModel,
        question: Arc<Question>,
        roots: &[StateKey],
        cap: usize,
    ) -> Result<Self> {
        question.check_vocabulary(env.n_entities(), env.n_relations())?;
        let exceeded = || Error::CapExceeded {
            cap,
            context: format!(
                "question `{question}` over {} entities x {} relations, eta {}",
                env.n_entities(),
                env.n_relations(),
                obs.eta()
            ),
        };
        type Edges = Vec<(AgentAction, Vec<(StateKey, f64)>)>;
        let mut seen: HashMap<StateKey, Edges> = HashMap::new();
        let mut queue: VecDeque<StateKey> = VecDeque::new();
        for r in roots {
            if !seen.contains_key(r) {
                seen.insert(r.clone(), Vec::new());
                queue.push_back(r.clone());
            }
        }
        if seen.len() > cap {
            return Err(exceeded());
        }
        while let Some(key) = queue.pop_front() {
            let mut edges = Vec::new();
            for action in legal_actions(&question, &key, env.n_relations()) {
                let succ = successor_distribution(&question, &key, &action, env, obs)?;
                for (s, _) in &succ {
                    if !seen.contains_key(s) {
                        seen.insert(s.clone(), Vec::new());
                        queue.push_back(s.clone());
                        if seen.len() > cap {
                            return Err(exceeded());
                        }
                    }
                }
                edges.push((action, succ));
            }
            seen.insert(key, edges);
        }

        let mut states: Vec<StateKey> = seen.keys().cloned().collect();
        states.sort();
        let mut table = TabularMdp::new(states);
        for idx in 0..table.len() {
            let key = table.state(idx).clone();
            let edges = seen.remove(&key).expect("every enumerated state was expanded");
            for (action, succ) in edges {
                let reward: f64 = succ
                    .iter()
                    .map(|(s, p)| p * transition_reward(&question, &key, s, env))
                    .sum();
                let succ = succ
                    .into_iter()
                    .map(|(s, p)| (table.index_of(&s).expect("enumerated"), p))
                    .collect();
                table.add_action(idx, action, reward, succ)?;
            }
        }
        Ok(KnowledgeMdp { question, table })
    }

    pub fn question(&self) -> &Arc<Question> {
        &self.question
    }

    pub fn table(&self) -> &TabularMdp<StateKey, AgentAction> {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn index_of(&self, key: &StateKey) -> Option<usize> {
        self.table.index_of(key)
    }

    pub fn contains(&self, key: &StateKey) -> bool {
        self.table.index_of(key).is_some()
    }

    pub fn states(&self) -> impl Iterator<Item = InformationState> + '_ {
        self.table
            .states()
            .iter()
            .map(|k| InformationState::from_key(self.question.clone(), k, 0))
    }

    pub fn value_iteration(&self, spec: &DiscountedMdpSpec, tol: f64) -> Result<Solution<AgentAction>> {
        tabular::value_iteration(&self.table, spec, tol)
    }

    pub fn policy_evaluation<P>(&self, mut policy: P, spec: &DiscountedMdpSpec, tol: f64) -> Result<Vec<f64>>
    where
        P: FnMut(&StateKey) -> Option<AgentAction>,
    {
        tabular::policy_evaluation(&self.table, |_, s| policy(s), spec, tol)
    }

    /// Fallible variant: the policy may fail (e.g. a planner error).
    pub fn try_policy_evaluation<P>(&self, mut policy: P, spec: &DiscountedMdpSpec, tol: f64) -> Result<Vec<f64>>
    where
        P: FnMut(&StateKey) -> Result<AgentAction>,
    {
        let mut actions = Vec::with_capacity(self.len());
        for key in self.table.states() {
            actions.push(policy(key)?);
        }
        tabular::policy_evaluation(&self.table, |i, _| Some(actions[i].clone()), spec, tol)
    }

    /// r(s, a) + gamma * E[V(s')] under this MDP's dynamics.
    pub fn bellman_apply<V>(&self, values: V, key: &StateKey, action: &AgentAction, spec: &DiscountedMdpSpec) -> Result<f64>
    where
        V: Fn(&StateKey) -> Option<f64>,
    {
        let idx = self
            .index_of(key)
            .ok_or_else(|| Error::InvalidArgument(format!("state {key} not in table")))?;
        tabular::bellman_apply(|s| values(self.table.state(s)), &self.table, idx, action, spec)
    }
}

/// Every state reachable from the initial state, in (path, fresh) order.
pub fn enumerate_states(
    env: &EnvParams,
    obs: &ObservationModel,
    question: Arc<Question>,
    cap: usize,
) -> Result<Vec<InformationState>> {
    Ok(KnowledgeMdp::build(env, obs, question, cap)?.states().collect())
}

/// Optimal values and greedy policy for `question` under `env`.
pub fn value_iteration(
    env: &EnvParams,
    obs: &ObservationModel,
    question: Arc<Question>,
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<(KnowledgeMdp, Solution<AgentAction>)> {
    let mdp = KnowledgeMdp::build(env, obs, question, DEFAULT_STATE_CAP)?;
    let sol = mdp.value_iteration(spec, tol)?;
    Ok((mdp, sol))
}

/// Values of a deterministic policy on every reachable state of `question`.
pub fn policy_evaluation<P>(
    policy: P,
    env: &EnvParams,
    obs: &ObservationModel,
    question: Arc<Question>,
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<(KnowledgeMdp, Vec<f64>)>
where
    P: FnMut(&StateKey) -> Option<AgentAction>,
{
    let mdp = KnowledgeMdp::build(env, obs, question, DEFAULT_STATE_CAP)?;
    let values = mdp.policy_evaluation(policy, spec, tol)?;
    Ok((mdp, values))
}

/// Bellman backup of an arbitrary value function at (state, action) under `env`.
pub fn bellman_apply<V>(
    values: V,
    env: &EnvParams,
    obs: &ObservationModel,
    state: &InformationState,
    action: &AgentAction,
    spec: &DiscountedMdpSpec,
) -> Result<f64>
where
    V: Fn(&StateKey) -> Option<f64>,
{
    let key = state.key();
    let succ = successor_distribution(&state.question, &key, action, env, obs)?;
    let mut total = 0.0;
    for (s, p) in succ {
        let v = values(&s).ok_or_else(|| Error::MissingSuccessorValue(s.to_string()))?;
        total += p * (transition_reward(&state.question, &key, &s, env) + spec.gamma() * v);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvPrior, SlotSupport};
    use crate::mdp::{EntityId, Fact, RelationId, Slot};
    use crate::mdp::tabular::DEFAULT_TOL;

    fn one_hop_question() -> Arc<Question> {
        Arc::new(Question::new(EntityId(0), vec![RelationId(0)]).unwrap())
    }

    #[test]
    fn one_hop_two_candidates_has_five_states() {
        let q = one_hop_question();
        let supports = vec![
            SlotSupport::uniform(vec![Some(EntityId(1)), Some(EntityId(2))]),
            SlotSupport::point(None),
            SlotSupport::point(None),
        ];
        let prior = EnvPrior::new(3, 1, supports, vec![((*q).clone(), 1.0)]).unwrap();
        let env = EnvParams::empty(3, 1)
            .unwrap()
            .with_edge(Slot::new(0, 0), Some(EntityId(1)))
            .unwrap();
        let obs = prior.observation_model(0.2).unwrap();
        let states = enumerate_states(&env, &obs, q, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(states.len(), 5);
        assert!(states[0].path.is_empty() && states[0].fresh.is_empty());
        let keys: Vec<StateKey> = states.iter().map(InformationState::key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn dead_question_has_two_states() {
        let env = EnvParams::empty(1, 1).unwrap();
        let states =
            enumerate_states(&env, &ObservationModel::noiseless(), one_hop_question(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(states[1].fresh, vec![Fact::new(Slot::new(0, 0), None)]);
    }

    #[test]
    fn cap_is_enforced() {
        let prior = EnvPrior::uniform_chain(6, 3, 3, 2, false, 1).unwrap();
        let env = crate::env::sample_env(&prior, 1);
        let q = Arc::new(prior.questions()[0].0.clone());
        let err = enumerate_states(&env, &ObservationModel::noiseless(), q, 3).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { cap: 3, .. }));
    }

    /// 1-hop chain with a live relation r0 and a dead relation r1.
    fn chain_with_dead_relation() -> (EnvParams, Arc<Question>) {
        let env = EnvParams::empty(2, 2)
            .unwrap()
            .with_edge(Slot::new(0, 0), Some(EntityId(1)))
            .unwrap();
        (env, one_hop_question())
    }

    #[test]
    fn chain_values_by_hand() {
        let (env, q) = chain_with_dead_relation();
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let (mdp, sol) = value_iteration(&env, &ObservationModel::noiseless(), q, &spec, DEFAULT_TOL).unwrap();
        let answer_ready = StateKey {
            path: vec![],
            fresh: vec![Fact::new(Slot::new(0, 0), Some(EntityId(1)))],
        };
        let i = mdp.index_of(&answer_ready).unwrap();
        assert_eq!(sol.values[i], 1.0);
        assert_eq!(sol.policy[i], AgentAction::commit_and_query(0, None));
        let s0 = mdp.index_of(&StateKey { path: vec![], fresh: vec![] }).unwrap();
        assert!((sol.values[s0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn dead_relation_policy_is_worthless() {
        let (env, q) = chain_with_dead_relation();
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let dead = |k: &StateKey| {
            Some(if k.path.is_empty() {
                AgentAction::query(Slot::new(0, 1))
            } else {
                AgentAction { select: vec![], query: None }
            })
        };
        let (_, v) = policy_evaluation(dead, &env, &ObservationModel::noiseless(), q, &spec, DEFAULT_TOL).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bellman_apply_with_zero_values_is_reward() {
        let (env, q) = chain_with_dead_relation();
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let mut s = InformationState::initial(q);
        s.fresh.push(Fact::new(Slot::new(0, 0), Some(EntityId(1))));
        let v = bellman_apply(
            |_| Some(0.0),
            &env,
            &ObservationModel::noiseless(),
            &s,
            &AgentAction::commit_and_query(0, None),
            &spec,
        )
        .unwrap();
        assert_eq!(v, 1.0);
    }
}
