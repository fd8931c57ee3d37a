use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{AgentAction, Fact, InformationState, Question};

/// One (s_t, a_t, r_t, s_{t+1}) transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub state: InformationState,
    pub action: AgentAction,
    pub reward: f64,
    pub next_state: InformationState,
}

impl TransitionRecord {
    /// The query response, if the action queried anything.
    pub fn observation(&self) -> Option<Fact> {
        let slot = self.action.query?;
        self.next_state.fresh.iter().find(|f| f.slot() == slot).copied()
    }
}

/// D_t: the transitions of one episode, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    question: Arc<Question>,
    records: Vec<TransitionRecord>,
}

impl MemoryBuffer {
    pub fn new(question: Arc<Question>) -> Self {
        MemoryBuffer {
            question,
            records: Vec::new(),
        }
    }

    pub fn question(&self) -> &Arc<Question> {
        &self.question
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The state the next decision is made in.
    pub fn latest_state(&self) -> InformationState {
        match self.records.last() {
            Some(r) => r.next_state.clone(),
            None => InformationState::initial(self.question.clone()),
        }
    }

    /// Appends a record, rejecting anything that breaks step contiguity.
    pub fn push(&mut self, record: TransitionRecord) -> Result<()> {
        let expected = self.records.len();
        if record.state.step != expected || record.next_state.step != expected + 1 {
            return Err(Error::InvalidArgument(format!(
                "record for step {} -> {} does not extend a buffer of length {expected}",
                record.state.step, record.next_state.step
            )));
        }
        if !(0.0..=1.0).contains(&record.reward) {
            return Err(Error::InvalidArgument(format!(
                "reward {} outside [0, 1]",
                record.reward
            )));
        }
        if *record.state.question != *self.question {
            return Err(Error::InvalidArgument("record belongs to another question".into()));
        }
        self.records.push(record);
        Ok(())
    }
}
