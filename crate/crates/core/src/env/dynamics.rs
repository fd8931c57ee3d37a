//! Transition and reward side of the knowledge environment.

use super::params::{query, EnvParams, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{frontier_of, AgentAction, Fact, InformationState, Question, Slot, StateKey};

/// Commits the selected fresh facts that chain onto the path, in selection order.
fn commit(question: &Question, path: &[Fact], fresh: &[Fact], select: &[usize]) -> Result<Vec<Fact>> {
    let mut out = path.to_vec();
    for &i in select {
        let fact = fresh.get(i).ok_or_else(|| {
            Error::MalformedAction(format!(
                "select index {i} out of range for {} fresh facts",
                fresh.len()
            ))
        })?;
        let chains = fact.tail.is_some()
            && Some(fact.head) == frontier_of(question, &out)
            && question.relations().get(out.len()) == Some(&fact.relation);
        if chains {
            out.push(*fact);
        }
    }
    Ok(out)
}

fn check_query(action: &AgentAction, n_entities: usize, n_relations: usize) -> Result<()> {
    if let Some(slot) = action.query {
        if usize::from(slot.entity.0) >= n_entities || usize::from(slot.relation.0) >= n_relations {
            return Err(Error::MalformedAction(format!("query slot {slot} outside vocabulary")));
        }
    }
    Ok(())
}

/// Select-and-query: commits the selected chaining facts, then runs the query.
///
/// The input state is left untouched; the returned state has `step + 1`.
pub fn apply_select_and_query(
    state: &InformationState,
    action: &AgentAction,
    env: &EnvParams,
    obs: &ObservationModel,
    seed: u64,
) -> Result<InformationState> {
    check_query(action, env.n_entities(), env.n_relations())?;
    let path = commit(&state.question, &state.path, &state.fresh, &action.select)?;
    let fresh = match action.query {
        Some(slot) => vec![query(env, obs, slot, seed)?],
        None => Vec::new(),
    };
    Ok(InformationState {
        question: state.question.clone(),
        path,
        fresh,
        step: state.step + 1,
    })
}

/// Number of consecutive committed hops, from the start, that agree with `truth`.
pub fn correct_prefix(question: &Question, path: &[Fact], truth: &EnvParams) -> usize {
    let mut at = question.start();
    let mut n = 0;
    for (fact, &rel) in path.iter().zip(question.relations()) {
        let slot = Slot {
            entity: at,
            relation: rel,
        };
        let ok = fact.head == at
            && fact.relation == rel
            && fact.tail.is_some()
            && truth.tail(slot).ok() == Some(fact.tail);
        if !ok {
            break;
        }
        n += 1;
        at = fact.tail.expect("checked above");
    }
    n
}

/// Judge: fraction of the question's hops correctly committed, in [0, 1].
///
/// Only the committed path and the ground truth are consulted.
pub fn judge(state: &InformationState, truth: &EnvParams) -> f64 {
    judge_path(&state.question, &state.path, truth)
}

pub fn judge_path(question: &Question, path: &[Fact], truth: &EnvParams) -> f64 {
    correct_prefix(question, path, truth) as f64 / question.hops() as f64
}

/// Legal actions in ascending action order.
///
/// Selections are "nothing" or one fresh fact that chains onto the path.
/// Queries go to the entity at the end of the (post-selection) path with any
/// relation; once the path spans the question the only option is to answer
/// (no query). A complete path therefore only has the absorbing no-op.
pub fn legal_actions(question: &Question, key: &StateKey, n_relations: usize) -> Vec<AgentAction> {
    let mut selections: Vec<Vec<usize>> = vec![Vec::new()];
    if key.path.len() < question.hops() {
        let frontier = frontier_of(question, &key.path);
        let next = question.relations()[key.path.len()];
        for (i, f) in key.fresh.iter().enumerate() {
            if f.tail.is_some() && Some(f.head) == frontier && f.relation == next {
                selections.push(vec![i]);
            }
        }
    }
    let mut out = Vec::new();
    for select in selections {
        let committed = key.path.len() + select.len();
        if committed >= question.hops() {
            out.push(AgentAction { select, query: None });
            continue;
        }
        let frontier = if select.is_empty() {
            frontier_of(question, &key.path)
        } else {
            key.fresh[select[0]].tail
        };
        let entity = frontier.expect("committed facts always have a tail");
        for r in 0..n_relations {
            out.push(AgentAction {
                select: select.clone(),
                query: Some(Slot::new(entity.0, r as u16)),
            });
        }
    }
    out.sort();
    out
}

/// Exact successor distribution of `action` from `key`, merged per successor
/// and sorted by state.
pub fn successor_distribution(
    question: &Question,
    key: &StateKey,
    action: &AgentAction,
    env: &EnvParams,
    obs: &ObservationModel,
) -> Result<Vec<(StateKey, f64)>> {
    check_query(action, env.n_entities(), env.n_relations())?;
    let path = commit(question, &key.path, &key.fresh, &action.select)?;
    let Some(slot) = action.query else {
        return Ok(vec![(
            StateKey {
                path,
                fresh: Vec::new(),
            },
            1.0,
        )]);
    };
    let mut out: Vec<(StateKey, f64)> = obs
        .outcomes(env, slot)?
        .into_iter()
        .map(|(tail, p)| {
            (
                StateKey {
                    path: path.clone(),
                    fresh: vec![Fact::new(slot, tail)],
                },
                p,
            )
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Reward of a transition: the increase of the judge score it causes.
///
/// Paths never shrink, so this is in [0, 1], and along any trajectory the
/// rewards sum to the final judge score.
pub fn transition_reward(question: &Question, from: &StateKey, to: &StateKey, truth: &EnvParams) -> f64 {
    judge_path(question, &to.path, truth) - judge_path(question, &from.path, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{EntityId, RelationId};
    use std::sync::Arc;

    fn two_hop() -> (EnvParams, Arc<Question>) {
        let env = EnvParams::empty(6, 3)
            .unwrap()
            .with_edge(Slot::new(0, 1), Some(EntityId(3)))
            .unwrap()
            .with_edge(Slot::new(3, 2), Some(EntityId(5)))
            .unwrap();
        let q = Question::new(EntityId(0), vec![RelationId(1), RelationId(2)]).unwrap();
        (env, Arc::new(q))
    }

    #[test]
    fn first_query_fills_fresh() {
        let (env, q) = two_hop();
        let s0 = InformationState::initial(q);
        let obs = ObservationModel::noiseless();
        let s1 = apply_select_and_query(&s0, &AgentAction::query(Slot::new(0, 1)), &env, &obs, 0).unwrap();
        assert_eq!(s1.fresh, vec![Fact::new(Slot::new(0, 1), Some(EntityId(3)))]);
        assert!(s1.path.is_empty());
        assert_eq!(s1.step, 1);
        assert!(s0.fresh.is_empty());

        let s2 = apply_select_and_query(
            &s1,
            &AgentAction::commit_and_query(0, Some(Slot::new(3, 2))),
            &env,
            &obs,
            0,
        )
        .unwrap();
        assert_eq!(s2.path, vec![Fact::new(Slot::new(0, 1), Some(EntityId(3)))]);
        assert_eq!(s2.fresh, vec![Fact::new(Slot::new(3, 2), Some(EntityId(5)))]);
        assert_eq!(judge(&s2, &env), 0.5);
    }

    #[test]
    fn out_of_range_select_is_malformed() {
        let (env, q) = two_hop();
        let mut s = InformationState::initial(q);
        s.fresh.push(Fact::new(Slot::new(0, 1), Some(EntityId(3))));
        let err = apply_select_and_query(
            &s,
            &AgentAction { select: vec![5], query: None },
            &env,
            &ObservationModel::noiseless(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedAction(_)));
    }

    #[test]
    fn non_chaining_selection_is_ignored() {
        let (env, q) = two_hop();
        let mut s = InformationState::initial(q);
        s.fresh.push(Fact::new(Slot::new(0, 0), None));
        let next = apply_select_and_query(
            &s,
            &AgentAction::commit_and_query(0, Some(Slot::new(0, 1))),
            &env,
            &ObservationModel::noiseless(),
            0,
        )
        .unwrap();
        assert!(next.path.is_empty());
    }

    #[test]
    fn judge_scores_correct_prefix() {
        let env = EnvParams::empty(8, 3)
            .unwrap()
            .with_edge(Slot::new(0, 0), Some(EntityId(1)))
            .unwrap()
            .with_edge(Slot::new(1, 1), Some(EntityId(4)))
            .unwrap()
            .with_edge(Slot::new(4, 2), Some(EntityId(7)))
            .unwrap()
            .with_edge(Slot::new(2, 1), Some(EntityId(4)))
            .unwrap();
        let q = Arc::new(Question::new(EntityId(0), vec![RelationId(0), RelationId(1), RelationId(2)]).unwrap());
        let mut s = InformationState::initial(q);
        s.path = env.answer_chain(&s.question);
        assert_eq!(judge(&s, &env), 1.0);
        // corrupted first hop spoils everything after it
        s.path = vec![
            Fact::new(Slot::new(0, 0), Some(EntityId(2))),
            Fact::new(Slot::new(2, 1), Some(EntityId(4))),
            Fact::new(Slot::new(4, 2), Some(EntityId(7))),
        ];
        assert_eq!(judge(&s, &env), 0.0);
    }

    #[test]
    fn legal_actions_shapes() {
        let (_, q) = two_hop();
        let s0 = StateKey { path: vec![], fresh: vec![] };
        let acts = legal_actions(&q, &s0, 3);
        assert_eq!(acts.len(), 3);
        assert!(acts.iter().all(|a| a.select.is_empty() && a.query.unwrap().entity == EntityId(0)));

        let last = StateKey {
            path: vec![Fact::new(Slot::new(0, 1), Some(EntityId(3)))],
            fresh: vec![Fact::new(Slot::new(3, 2), Some(EntityId(5)))],
        };
        let acts = legal_actions(&q, &last, 3);
        assert_eq!(acts.len(), 4);
        assert_eq!(acts[3], AgentAction::commit_and_query(0, None));

        let done = StateKey { path: vec![last.path[0], last.fresh[0]], fresh: vec![] };
        assert_eq!(legal_actions(&q, &done, 3), vec![AgentAction { select: vec![], query: None }]);
    }
}
