//! Vocabulary of the reasoning MDP: questions, facts, information states and
//! agent actions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u16);

/// Tail of a knowledge-graph slot; `None` means "no such edge".
pub type Tail = Option<EntityId>;

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

pub struct DisplayTail(pub Tail);

impl fmt::Display for DisplayTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(e) => write!(f, "{e}"),
            None => f.write_str("none"),
        }
    }
}

/// An (entity, relation) key of the knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub entity: EntityId,
    pub relation: RelationId,
}

impl Slot {
    pub fn new(entity: u16, relation: u16) -> Self {
        Slot {
            entity: EntityId(entity),
            relation: RelationId(relation),
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.entity, self.relation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: Tail,
}

impl Fact {
    pub fn new(slot: Slot, tail: Tail) -> Self {
        Fact {
            head: slot.entity,
            relation: slot.relation,
            tail,
        }
    }

    pub fn slot(&self) -> Slot {
        Slot {
            entity: self.head,
            relation: self.relation,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, DisplayTail(self.tail))
    }
}

/// A multi-hop chain question: start at `start` and follow `relations` in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Question {
    start: EntityId,
    relations: Vec<RelationId>,
}

impl Question {
    pub fn new(start: EntityId, relations: Vec<RelationId>) -> Result<Self> {
        if relations.is_empty() {
            return Err(Error::InvalidArgument(
                "a question needs at least one relation".into(),
            ));
        }
        Ok(Question { start, relations })
    }

    pub fn start(&self) -> EntityId {
        self.start
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    /// Number of hops L.
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn check_vocabulary(&self, n_entities: usize, n_relations: usize) -> Result<()> {
        if usize::from(self.start.0) >= n_entities {
            return Err(Error::InvalidArgument(format!(
                "question start {} outside {n_entities} entities",
                self.start
            )));
        }
        if let Some(r) = self.relations.iter().find(|r| usize::from(r.0) >= n_relations) {
            return Err(Error::InvalidArgument(format!(
                "question relation {r} outside {n_relations} relations"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for r in &self.relations {
            write!(f, " {r}")?;
        }
        Ok(())
    }
}

/// The Markov part of an information state: committed path and fresh facts.
///
/// Two information states with equal keys (and the same question) have the
/// same future under any environment, so the exact oracles index by this.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub path: Vec<Fact>,
    pub fresh: Vec<Fact>,
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("path=[")?;
        for (i, fact) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{fact}")?;
        }
        f.write_str("] fresh={")?;
        for (i, fact) in self.fresh.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{fact}")?;
        }
        f.write_str("}")
    }
}

/// Information state s_t = (q, committed path, fresh observations) at step t.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InformationState {
    pub question: Arc<Question>,
    pub path: Vec<Fact>,
    pub fresh: Vec<Fact>,
    pub step: usize,
}

impl InformationState {
    pub fn initial(question: Arc<Question>) -> Self {
        InformationState {
            question,
            path: Vec::new(),
            fresh: Vec::new(),
            step: 0,
        }
    }

    pub fn from_key(question: Arc<Question>, key: &StateKey, step: usize) -> Self {
        InformationState {
            question,
            path: key.path.clone(),
            fresh: key.fresh.clone(),
            step,
        }
    }

    pub fn key(&self) -> StateKey {
        StateKey {
            path: self.path.clone(),
            fresh: self.fresh.clone(),
        }
    }

    /// Entity the next committed hop must start from.
    pub fn frontier(&self) -> Tail {
        frontier_of(&self.question, &self.path)
    }

    /// Relation of the next hop, or `None` once the path spans the question.
    pub fn next_relation(&self) -> Option<RelationId> {
        self.question.relations().get(self.path.len()).copied()
    }

    pub fn path_complete(&self) -> bool {
        self.path.len() >= self.question.hops()
    }

    /// Whether `fact` can be appended to the committed path.
    pub fn chains(&self, fact: &Fact) -> bool {
        fact.tail.is_some()
            && Some(fact.head) == self.frontier()
            && Some(fact.relation) == self.next_relation()
    }
}

pub(crate) fn frontier_of(question: &Question, path: &[Fact]) -> Tail {
    match path.last() {
        Some(f) => f.tail,
        None => Some(question.start()),
    }
}

/// a_t = (a^s, a^q): indices into the fresh set to commit, then an optional query.
///
/// The derived ordering (select first, then query with `None` lowest) is the
/// lexicographic action order used for every tie-break.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentAction {
    pub select: Vec<usize>,
    pub query: Option<Slot>,
}

impl AgentAction {
    pub fn query(slot: Slot) -> Self {
        AgentAction {
            select: Vec::new(),
            query: Some(slot),
        }
    }

    pub fn commit_and_query(index: usize, slot: Option<Slot>) -> Self {
        AgentAction {
            select: vec![index],
            query: slot,
        }
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, idx) in self.select.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{idx}")?;
        }
        f.write_str(";")?;
        match self.query {
            Some(slot) => write!(f, "{}:{}", slot.entity, slot.relation)?,
            None => f.write_str("-")?,
        }
        f.write_str(")")
    }
}

/// Discount factor together with the value bound it implies for rewards in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedMdpSpec {
    gamma: f64,
}

impl DiscountedMdpSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie strictly inside (0, 1), got {gamma}"
            )));
        }
        Ok(DiscountedMdpSpec { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// L = 1 / (1 - gamma).
    pub fn reward_upper_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_must_be_strictly_inside_unit_interval() {
        assert!(DiscountedMdpSpec::new(0.0).is_err());
        assert!(DiscountedMdpSpec::new(1.0).is_err());
        assert!(DiscountedMdpSpec::new(f64::NAN).is_err());
        let spec = DiscountedMdpSpec::new(0.5).unwrap();
        assert_eq!(spec.reward_upper_bound(), 2.0);
    }

    #[test]
    fn empty_question_rejected() {
        assert!(Question::new(EntityId(0), vec![]).is_err());
    }

    #[test]
    fn action_order_puts_bare_queries_first() {
        let a = AgentAction::query(Slot::new(0, 2));
        let b = AgentAction::commit_and_query(0, None);
        let c = AgentAction::commit_and_query(0, Some(Slot::new(0, 0)));
        assert!(a < b && b < c);
        assert_eq!(a.to_string(), "(;e0:r2)");
        assert_eq!(b.to_string(), "(0;-)");
    }

    #[test]
    fn initial_state_is_empty() {
        let q = Arc::new(Question::new(EntityId(1), vec![RelationId(0), RelationId(2)]).unwrap());
        let s = InformationState::initial(q);
        assert!(s.path.is_empty() && s.fresh.is_empty());
        assert_eq!(s.step, 0);
        assert_eq!(s.frontier(), Some(EntityId(1)));
        assert_eq!(s.next_relation(), Some(RelationId(0)));
    }
}
