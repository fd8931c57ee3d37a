use std::sync::Arc;

use crate::agent::{plan_with_model, PlannerConfig, Posterior};
use crate::env::{EnvParams, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{DiscountedMdpSpec, EntityId, KnowledgeMdp, Question, RelationId, Slot, StateKey, DEFAULT_STATE_CAP};

/// Planner value gap against value iteration on every reachable state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityGapReport {
    /// V*(s) - V^planner(s), in state order.
    pub gaps: Vec<(StateKey, f64)>,
    pub max_gap: f64,
    pub lookahead: usize,
}

/// Runs the planner with a point-mass posterior on `env`, so only planning
/// error (not estimation error) shows up in the gap.
pub fn planner_optimality_gap(
    env: &EnvParams,
    obs: &ObservationModel,
    question: Arc<Question>,
    config: &PlannerConfig,
    spec: &DiscountedMdpSpec,
    tol: f64,
) -> Result<OptimalityGapReport> {
    let mdp = KnowledgeMdp::build(env, obs, question.clone(), DEFAULT_STATE_CAP).map_err(|e| match e {
        Error::CapExceeded { cap, context } => Error::OracleInfeasible(format!("state cap {cap} exceeded for {context}")),
        other => other,
    })?;
    let optimal = mdp.value_iteration(spec, tol)?;
    let beliefs = Posterior::point_mass(env);
    let planned = mdp.try_policy_evaluation(
        |key| {
            let traj = plan_with_model(&question, key, env, &beliefs, config)?;
            Ok(traj.actions.into_iter().next().expect("lookahead is at least one"))
        },
        spec,
        tol,
    )?;
    let gaps: Vec<(StateKey, f64)> = mdp
        .table()
        .states()
        .iter()
        .cloned()
        .zip(optimal.values.iter().zip(&planned).map(|(v, p)| v - p))
        .collect();
    let max_gap = gaps.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
    Ok(OptimalityGapReport {
        gaps,
        max_gap,
        lookahead: config.lookahead,
    })
}

/// A 1-hop question (e0, r1) on a two-entity graph whose only edge is e0 -r1-> e1.
///
/// Every first action earns nothing, and the lowest one in action order
/// queries the dead relation r0, so a one-step lookahead has nothing to tell
/// the actions apart and loses a step.
pub fn deceptive_instance() -> (EnvParams, Arc<Question>) {
    let env = EnvParams::empty(2, 2)
        .and_then(|e| e.with_edge(Slot::new(0, 1), Some(EntityId(1))))
        .expect("static instance");
    let q = Question::new(EntityId(0), vec![RelationId(1)]).expect("static instance");
    (env, Arc::new(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{EntityId, RelationId, DEFAULT_TOL};

    #[test]
    fn deceptive_instance_needs_two_steps_of_lookahead() {
        let (env, q) = deceptive_instance();
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let obs = ObservationModel::noiseless();
        let gap = |u| {
            let config = PlannerConfig::exhaustive(u, 0.9).unwrap();
            planner_optimality_gap(&env, &obs, q.clone(), &config, &spec, DEFAULT_TOL).unwrap()
        };
        let g1 = gap(1);
        assert!((g1.max_gap - 0.9).abs() < 1e-6, "{}", g1.max_gap);
        assert!(g1.max_gap <= 0.9 * spec.reward_upper_bound());
        assert!(gap(2).max_gap.abs() <= 1e-6);
        assert!(gap(3).max_gap.abs() <= 1e-6);
    }

    #[test]
    fn single_action_environment_has_no_gap() {
        let env = EnvParams::empty(1, 1).unwrap();
        let q = Arc::new(Question::new(EntityId(0), vec![RelationId(0)]).unwrap());
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let config = PlannerConfig::new(1, 1, 1, 0.9, crate::agent::ModelMode::PosteriorMean).unwrap();
        let r = planner_optimality_gap(&env, &ObservationModel::noiseless(), q, &config, &spec, DEFAULT_TOL).unwrap();
        assert_eq!(r.max_gap, 0.0);
        assert_eq!(r.gaps.len(), 2);
    }
}
