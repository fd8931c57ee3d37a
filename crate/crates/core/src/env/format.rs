//! Line-oriented `kbenv v1` text format.
//!
//! ```text
//! kbenv v1 <n_entities> <n_relations>
//! e0 r1 -> e3            # environment: one line per slot
//! e0 r1 -> e3 0.5        # prior: one line per candidate, with probability
//! e0 r1 -> none 0.5
//! q e0 r1 r2 0.25        # prior only: question with weight
//! ```
//!
//! Probabilities are written with the shortest representation that parses
//! back to the same `f64`, so write-then-read is bit-exact.

use std::fmt::Write as _;

use super::params::{all_slots, EnvParams, EnvPrior, SlotSupport};
use crate::error::{Error, Result};
use crate::mdp::{DisplayTail, EntityId, Question, RelationId, Slot, Tail};

const MAGIC: &str = "kbenv";
const VERSION: &str = "v1";

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_entity(tok: &str, line: usize) -> Result<EntityId> {
    tok.strip_prefix('e')
        .and_then(|n| n.parse().ok())
        .map(EntityId)
        .ok_or_else(|| perr(line, format!("expected entity like `e3`, got `{tok}`")))
}

fn parse_relation(tok: &str, line: usize) -> Result<RelationId> {
    tok.strip_prefix('r')
        .and_then(|n| n.parse().ok())
        .map(RelationId)
        .ok_or_else(|| perr(line, format!("expected relation like `r1`, got `{tok}`")))
}

fn parse_tail(tok: &str, line: usize) -> Result<Tail> {
    if tok == "none" {
        Ok(None)
    } else {
        parse_entity(tok, line).map(Some)
    }
}

fn parse_prob(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| perr(line, format!("expected probability, got `{tok}`")))
}

struct Header {
    n_entities: usize,
    n_relations: usize,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<Header> {
    let (line, text) = lines.next().ok_or_else(|| perr(1, "missing `kbenv v1` header"))?;
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != MAGIC || toks[1] != VERSION {
        return Err(perr(line, "header must be `kbenv v1 <n_entities> <n_relations>`"));
    }
    let n_entities = toks[2]
        .parse()
        .map_err(|_| perr(line, "bad entity count"))?;
    let n_relations = toks[3]
        .parse()
        .map_err(|_| perr(line, "bad relation count"))?;
    Ok(Header {
        n_entities,
        n_relations,
    })
}

struct SlotLine {
    slot: Slot,
    tail: Tail,
    prob: Option<f64>,
}

fn parse_slot_line(toks: &[&str], line: usize) -> Result<SlotLine> {
    if !(toks.len() == 4 || toks.len() == 5) || toks[2] != "->" {
        return Err(perr(line, "slot line must be `h r -> t|none [p]`"));
    }
    Ok(SlotLine {
        slot: Slot {
            entity: parse_entity(toks[0], line)?,
            relation: parse_relation(toks[1], line)?,
        },
        tail: parse_tail(toks[3], line)?,
        prob: toks.get(4).map(|t| parse_prob(t, line)).transpose()?,
    })
}

impl EnvParams {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {} {}\n", self.n_entities(), self.n_relations());
        for (slot, tail) in self.slots() {
            let _ = writeln!(out, "{slot} -> {}", DisplayTail(tail));
        }
        out
    }

    /// Parses an environment. Slots not listed have no edge.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let h = parse_header(&mut lines)?;
        let mut env = EnvParams::empty(h.n_entities, h.n_relations).map_err(|e| perr(1, e.to_string()))?;
        let mut seen = vec![false; h.n_entities * h.n_relations];
        for (line, text) in lines {
            let toks: Vec<&str> = text.split_whitespace().collect();
            let sl = parse_slot_line(&toks, line)?;
            if sl.prob.is_some() {
                return Err(perr(line, "environment lines carry no probability"));
            }
            let idx = usize::from(sl.slot.entity.0) * h.n_relations + usize::from(sl.slot.relation.0);
            env = env
                .with_edge(sl.slot, sl.tail)
                .map_err(|e| perr(line, e.to_string()))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(perr(line, format!("slot {} listed twice", sl.slot)));
            }
        }
        Ok(env)
    }
}

impl EnvPrior {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {} {}\n", self.n_entities(), self.n_relations());
        for (slot, support) in self.supports() {
            for &(tail, p) in &support.candidates {
                let _ = writeln!(out, "{slot} -> {} {p:?}", DisplayTail(tail));
            }
        }
        for (q, w) in self.questions() {
            let _ = writeln!(out, "q {q} {w:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let h = parse_header(&mut lines)?;
        let n_slots = h.n_entities * h.n_relations;
        let mut supports: Vec<Vec<(Tail, f64)>> = vec![Vec::new(); n_slots];
        let mut questions = Vec::new();
        let mut last_line = 1;
        for (line, text) in lines {
            last_line = line;
            let toks: Vec<&str> = text.split_whitespace().collect();
            if toks[0] == "q" {
                if toks.len() < 4 {
                    return Err(perr(line, "question line must be `q <start> <r>... <weight>`"));
                }
                let start = parse_entity(toks[1], line)?;
                let rels = toks[2..toks.len() - 1]
                    .iter()
                    .map(|t| parse_relation(t, line))
                    .collect::<Result<Vec<_>>>()?;
                let w = parse_prob(toks[toks.len() - 1], line)?;
                let q = Question::new(start, rels).map_err(|e| perr(line, e.to_string()))?;
                questions.push((q, w));
                continue;
            }
            let sl = parse_slot_line(&toks, line)?;
            let p = sl
                .prob
                .ok_or_else(|| perr(line, "prior lines need a probability"))?;
            let (e, r) = (usize::from(sl.slot.entity.0), usize::from(sl.slot.relation.0));
            if e >= h.n_entities || r >= h.n_relations {
                return Err(perr(line, format!("slot {} outside vocabulary", sl.slot)));
            }
            supports[e * h.n_relations + r].push((sl.tail, p));
        }
        if let Some((slot, _)) = all_slots(h.n_entities, h.n_relations)
            .zip(&supports)
            .find(|(_, s)| s.is_empty())
        {
            return Err(perr(last_line, format!("slot {slot} has no candidates")));
        }
        let supports = supports
            .into_iter()
            .map(|candidates| SlotSupport { candidates })
            .collect();
        EnvPrior::new(h.n_entities, h.n_relations, supports, questions)
            .map_err(|e| perr(last_line, e.to_string()))
    }
}
