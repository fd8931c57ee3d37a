//! Finite MDPs stored as lookup tables, and the exact planning oracles on them.

use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::hash::Hash;

use super::types::DiscountedMdpSpec;
use crate::error::{Error, Result};

/// Sweeps before value iteration or policy evaluation gives up.
pub const MAX_SWEEPS: usize = 10_000;

/// Default convergence tolerance for the oracles.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<A> {
    pub action: A,
    /// Expected immediate reward r(s, a).
    pub reward: f64,
    /// (successor index, probability) pairs.
    pub successors: Vec<(usize, f64)>,
}

/// States with per-state action lists kept in ascending action order.
#[derive(Debug, Clone)]
pub struct TabularMdp<S, A> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    actions: Vec<Vec<Outcome<A>>>,
}

impl<S, A> TabularMdp<S, A>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display,
{
    pub fn new(states: Vec<S>) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let actions = vec![Vec::new(); states.len()];
        TabularMdp {
            states,
            index,
            actions,
        }
    }

    /// Registers action `action` at `state`. Successor probabilities must sum to 1.
    pub fn add_action(
        &mut self,
        state: usize,
        action: A,
        reward: f64,
        successors: Vec<(usize, f64)>,
    ) -> Result<()> {
        if state >= self.states.len() || successors.iter().any(|&(s, _)| s >= self.states.len()) {
            return Err(Error::InvalidArgument("state index out of range".into()));
        }
        let mass: f64 = successors.iter().map(|&(_, p)| p).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "successor probabilities of {} / {} sum to {mass}",
                self.states[state], action
            )));
        }
        let list = &mut self.actions[state];
        let pos = match list.binary_search_by(|o| o.action.cmp(&action)) {
            Ok(_) => {
                return Err(Error::InvalidArgument(format!(
                    "duplicate action {action} in state {}",
                    self.states[state]
                )))
            }
            Err(pos) => pos,
        };
        list.insert(
            pos,
            Outcome {
                action,
                reward,
                successors,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &S {
        &self.states[idx]
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn outcomes(&self, state: usize) -> &[Outcome<A>] {
        &self.actions[state]
    }

    pub fn outcome(&self, state: usize, action: &A) -> Option<&Outcome<A>> {
        let list = &self.actions[state];
        list.binary_search_by(|o| o.action.cmp(action))
            .ok()
            .map(|i| &list[i])
    }

    fn check_actions(&self) -> Result<()> {
        match self.actions.iter().position(Vec::is_empty) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "state {} has no actions",
                self.states[i]
            ))),
            None => Ok(()),
        }
    }
}

fn backup<A>(outcome: &Outcome<A>, values: &[f64], gamma: f64) -> f64 {
    let next: f64 = outcome
        .successors
        .iter()
        .map(|&(s, p)| p * values[s])
        .sum();
    outcome.reward + gamma * next
}

fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Result of [`value_iteration`]: optimal values and the greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<A> {
    pub values: Vec<f64>,
    pub policy: Vec<A>,
    pub sweeps: usize,
}

/// Synchronous value iteration from V = 0.
///
/// Stops once a sweep moves no value by more than `tol`, which bounds the
/// Bellman residual of the returned table by `gamma * tol`. The greedy policy
/// picks, among actions whose Q-value is within `tol` of the best, the lowest
/// one in action order.
pub fn value_iteration<S, A>(
    mdp: &TabularMdp<S, A>,
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<Solution<A>>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    mdp.check_actions()?;
    let gamma = spec.gamma();
    let mut values = vec![0.0; mdp.len()];
    let mut next = vec![0.0; mdp.len()];
    let mut residual = f64::INFINITY;
    for sweep in 1..=MAX_SWEEPS {
        for (s, v) in next.iter_mut().enumerate() {
            *v = mdp.actions[s]
                .iter()
                .map(|o| backup(o, &values, gamma))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        residual = sup_norm_diff(&next, &values);
        std::mem::swap(&mut values, &mut next);
        if residual <= tol {
            let policy = greedy_policy(mdp, &values, gamma, tol);
            return Ok(Solution {
                values,
                policy,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

fn greedy_policy<S, A: Clone>(
    mdp: &TabularMdp<S, A>,
    values: &[f64],
    gamma: f64,
    tie_tol: f64,
) -> Vec<A> {
    mdp.actions
        .iter()
        .map(|outcomes| {
            let q: Vec<f64> = outcomes.iter().map(|o| backup(o, values, gamma)).collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pick = q.iter().position(|&x| x >= best - tie_tol).unwrap_or(0);
            outcomes[pick].action.clone()
        })
        .collect()
}

/// Evaluates a deterministic policy on every state of `mdp`.
///
/// `policy` returns `None` for states it does not cover, which is an error:
/// the evaluation needs the policy on the whole table.
pub fn policy_evaluation<S, A, P>(
    mdp: &TabularMdp<S, A>,
    policy: P,
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<Vec<f64>>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display,
    P: FnMut(usize, &S) -> Option<A>,
{
    let chosen = resolve_policy(mdp, policy)?;
    evaluate_chosen(mdp, &chosen, spec, tol)
}

/// Maps each state's policy action to its outcome index.
pub(crate) fn resolve_policy<S, A, P>(mdp: &TabularMdp<S, A>, mut policy: P) -> Result<Vec<usize>>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display,
    P: FnMut(usize, &S) -> Option<A>,
{
    (0..mdp.len())
        .map(|s| {
            let state = &mdp.states[s];
            let action =
                policy(s, state).ok_or_else(|| Error::UndefinedPolicyState(state.to_string()))?;
            mdp.actions[s]
                .binary_search_by(|o| o.action.cmp(&action))
                .map_err(|_| Error::IllegalPolicyAction {
                    state: state.to_string(),
                    action: action.to_string(),
                })
        })
        .collect()
}

pub(crate) fn evaluate_chosen<S, A>(
    mdp: &TabularMdp<S, A>,
    chosen: &[usize],
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<Vec<f64>>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let gamma = spec.gamma();
    let mut values = vec![0.0; mdp.len()];
    let mut next = vec![0.0; mdp.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for (s, v) in next.iter_mut().enumerate() {
            *v = backup(&mdp.actions[s][chosen[s]], &values, gamma);
        }
        residual = sup_norm_diff(&next, &values);
        std::mem::swap(&mut values, &mut next);
        if residual <= tol {
            return Ok(values);
        }
    }
    Err(Error::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// Bellman backup r(s, a) + gamma * E[V(s')] for one state-action pair.
///
/// `values` is looked up per successor; a successor without a value is an error.
pub fn bellman_apply<S, A, V>(
    values: V,
    mdp: &TabularMdp<S, A>,
    state: usize,
    action: &A,
    spec: &DiscountedMdpSpec,
) -> Result<f64>
where
    S: Clone + Eq + Hash + Display,
    A: Clone + Ord + Display + Debug,
    V: Fn(usize) -> Option<f64>,
{
    let outcome = mdp.outcome(state, action).ok_or_else(|| Error::IllegalPolicyAction {
        state: mdp.states[state].to_string(),
        action: action.to_string(),
    })?;
    let mut next = 0.0;
    for &(s, p) in &outcome.successors {
        let v = values(s).ok_or_else(|| Error::MissingSuccessorValue(mdp.states[s].to_string()))?;
        next += p * v;
    }
    Ok(outcome.reward + spec.gamma() * next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(g: f64) -> DiscountedMdpSpec {
        DiscountedMdpSpec::new(g).unwrap()
    }

    /// pre-terminal --(a0, r=1)--> terminal --(a0, r=0)--> terminal
    fn two_state_chain() -> TabularMdp<&'static str, u8> {
        let mut m = TabularMdp::new(vec!["pre", "done"]);
        m.add_action(0, 0, 1.0, vec![(1, 1.0)]).unwrap();
        m.add_action(1, 0, 0.0, vec![(1, 1.0)]).unwrap();
        m
    }

    #[test]
    fn two_state_chain_values() {
        let sol = value_iteration(&two_state_chain(), &spec(0.9), DEFAULT_TOL).unwrap();
        assert_eq!(sol.values, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_reward_fixpoint() {
        let mut m = TabularMdp::new(vec!["a", "b"]);
        m.add_action(0, 0u8, 0.0, vec![(1, 1.0)]).unwrap();
        m.add_action(0, 1u8, 0.0, vec![(0, 0.5), (1, 0.5)]).unwrap();
        m.add_action(1, 0u8, 0.0, vec![(0, 1.0)]).unwrap();
        let sol = value_iteration(&m, &spec(0.9), DEFAULT_TOL).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn self_loop_geometric_series() {
        let mut m = TabularMdp::new(vec!["loop"]);
        m.add_action(0, 0u8, 1.0, vec![(0, 1.0)]).unwrap();
        let sol = value_iteration(&m, &spec(0.5), DEFAULT_TOL).unwrap();
        assert!((sol.values[0] - 2.0).abs() <= DEFAULT_TOL);
    }

    #[test]
    fn greedy_ties_pick_lowest_action() {
        let mut m = TabularMdp::new(vec!["s", "t"]);
        m.add_action(0, 2u8, 1.0, vec![(1, 1.0)]).unwrap();
        m.add_action(0, 1u8, 1.0, vec![(1, 1.0)]).unwrap();
        m.add_action(1, 0u8, 0.0, vec![(1, 1.0)]).unwrap();
        let sol = value_iteration(&m, &spec(0.9), DEFAULT_TOL).unwrap();
        assert_eq!(sol.policy[0], 1);
    }

    #[test]
    fn policy_evaluation_matches_value_iteration() {
        let m = two_state_chain();
        let sol = value_iteration(&m, &spec(0.9), DEFAULT_TOL).unwrap();
        let v = policy_evaluation(&m, |s, _| Some(sol.policy[s]), &spec(0.9), DEFAULT_TOL).unwrap();
        for (a, b) in v.iter().zip(&sol.values) {
            assert!((a - b).abs() <= 2.0 * DEFAULT_TOL);
        }
    }

    #[test]
    fn policy_missing_state_is_reported() {
        let m = two_state_chain();
        let err = policy_evaluation(&m, |s, _| (s == 0).then_some(0), &spec(0.9), DEFAULT_TOL)
            .unwrap_err();
        assert_eq!(err, Error::UndefinedPolicyState("done".into()));
    }

    #[test]
    fn bellman_apply_cases() {
        let g = spec(0.9);
        let m = two_state_chain();
        assert_eq!(bellman_apply(|_| Some(0.0), &m, 0, &0, &g).unwrap(), 1.0);

        let mut det = TabularMdp::new(vec!["s", "t"]);
        det.add_action(0, 0u8, 0.0, vec![(1, 1.0)]).unwrap();
        det.add_action(1, 0u8, 0.0, vec![(1, 1.0)]).unwrap();
        let v = bellman_apply(|s| Some(if s == 1 { 1.0 } else { 0.0 }), &det, 0, &0, &g).unwrap();
        assert!((v - 0.9).abs() < 1e-15);

        let mut noisy = TabularMdp::new(vec!["s", "hi", "lo"]);
        noisy.add_action(0, 0u8, 0.0, vec![(1, 0.5), (2, 0.5)]).unwrap();
        for s in 1..3 {
            noisy.add_action(s, 0u8, 0.0, vec![(s, 1.0)]).unwrap();
        }
        let vals = [0.0, 1.0, 0.0];
        let v = bellman_apply(|s| Some(vals[s]), &noisy, 0, &0, &g).unwrap();
        assert!((v - 0.45).abs() < 1e-15);

        let err = bellman_apply(|s| (s != 1).then_some(0.0), &noisy, 0, &0, &g).unwrap_err();
        assert_eq!(err, Error::MissingSuccessorValue("hi".into()));
    }

    #[test]
    fn non_positive_tol_rejected() {
        assert!(value_iteration(&two_state_chain(), &spec(0.9), 0.0).is_err());
    }
}
