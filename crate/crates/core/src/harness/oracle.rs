//! Memoized exact values for the regret measurements.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use crate::agent::DecisionRule;
use crate::env::{successor_distribution, transition_reward, EnvParams, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{table, AgentAction, DiscountedMdpSpec, KnowledgeMdp, Question, StateKey, TabularMdp};

fn infeasible(e: Error) -> Error {
    match e {
        Error::CapExceeded { cap, context } => Error::OracleInfeasible(format!("state cap {cap} exceeded for {context}")),
        other => other,
    }
}

/// State values for one environment, filled lazily per question.
///
/// A state's value does not depend on which roots the table was grown from,
/// so entries from different enumerations can share one map.
#[derive(Debug, Default)]
pub struct ValueCache {
    values: HashMap<Arc<Question>, HashMap<StateKey, f64>>,
}

impl ValueCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    fn get(&self, question: &Arc<Question>, key: &StateKey) -> Option<f64> {
        self.values.get(question).and_then(|m| m.get(key)).copied()
    }

    /// V*(key) under `env`.
    pub fn optimal(
        &mut self,
        env: &EnvParams,
        obs: &ObservationModel,
        question: &Arc<Question>,
        key: &StateKey,
        spec: &DiscountedMdpSpec,
        tol: f64,
        cap: usize,
    ) -> Result<f64> {
        if let Some(v) = self.get(question, key) {
            return Ok(v);
        }
        let mdp = KnowledgeMdp::build_from(env, obs, question.clone(), std::slice::from_ref(key), cap).map_err(infeasible)?;
        let sol = mdp.value_iteration(spec, tol)?;
        let entry = self.values.entry(question.clone()).or_default();
        for (k, v) in mdp.table().states().iter().zip(sol.values) {
            entry.insert(k.clone(), v);
        }
        Ok(entry[key])
    }

    /// V^pi(key) under `env`, evaluating `rule` on the states it reaches from `key`.
    #[allow(clippy::too_many_arguments)]
    pub fn policy(
        &mut self,
        rule: &mut DecisionRule,
        env: &EnvParams,
        obs: &ObservationModel,
        question: &Arc<Question>,
        key: &StateKey,
        spec: &DiscountedMdpSpec,
        tol: f64,
        cap: usize,
    ) -> Result<f64> {
        if let Some(v) = self.get(question, key) {
            return Ok(v);
        }
        let mut order: Vec<StateKey> = vec![key.clone()];
        let mut seen: HashSet<StateKey> = HashSet::from([key.clone()]);
        let mut edges: HashMap<StateKey, (AgentAction, Vec<(StateKey, f64)>)> = HashMap::new();
        let mut queue = VecDeque::from([key.clone()]);
        while let Some(s) = queue.pop_front() {
            let action = rule.decide(question, &s)?;
            let succ = successor_distribution(question, &s, &action, env, obs)?;
            for (n, _) in &succ {
                if seen.insert(n.clone()) {
                    order.push(n.clone());
                    if order.len() > cap {
                        return Err(Error::OracleInfeasible(format!(
                            "policy closure of `{question}` exceeds {cap} states"
                        )));
                    }
                    queue.push_back(n.clone());
                }
            }
            edges.insert(s, (action, succ));
        }
        order.sort();
        let mut mdp = TabularMdp::new(order);
        for i in 0..mdp.len() {
            let s = mdp.state(i).clone();
            let (action, succ) = edges.remove(&s).expect("closure states are expanded");
            let reward = succ.iter().map(|(n, p)| p * transition_reward(question, &s, n, env)).sum();
            let succ = succ
                .into_iter()
                .map(|(n, p)| (mdp.index_of(&n).expect("in closure"), p))
                .collect();
            mdp.add_action(i, action, reward, succ)?;
        }
        let values = table::policy_evaluation(&mdp, |i, _| Some(mdp.outcomes(i)[0].action.clone()), spec, tol)?;
        let entry = self.values.entry(question.clone()).or_default();
        for (k, v) in mdp.states().iter().zip(values) {
            entry.insert(k.clone(), v);
        }
        Ok(entry[key])
    }
}
