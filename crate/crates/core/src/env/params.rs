use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{DisplayTail, EntityId, Fact, Question, RelationId, Slot, Tail};
use crate::seed;

/// A complete knowledge graph: one tail (or "no edge") for every slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvParams {
    n_entities: usize,
    n_relations: usize,
    tails: Vec<Tail>,
}

fn check_vocab(n_entities: usize, n_relations: usize) -> Result<()> {
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::InvalidArgument(
            "vocabulary needs at least one entity and one relation".into(),
        ));
    }
    if n_entities > usize::from(u16::MAX) || n_relations > usize::from(u16::MAX) {
        return Err(Error::InvalidArgument("vocabulary too large".into()));
    }
    Ok(())
}

fn slot_index(n_entities: usize, n_relations: usize, slot: Slot) -> Result<usize> {
    let (e, r) = (usize::from(slot.entity.0), usize::from(slot.relation.0));
    if e >= n_entities || r >= n_relations {
        return Err(Error::InvalidSlot(slot.to_string()));
    }
    Ok(e * n_relations + r)
}

fn check_tail(n_entities: usize, tail: Tail) -> Result<()> {
    match tail {
        Some(e) if usize::from(e.0) >= n_entities => Err(Error::InvalidArgument(format!(
            "tail {e} outside {n_entities} entities"
        ))),
        _ => Ok(()),
    }
}

/// All slots in (entity, relation) order.
pub fn all_slots(n_entities: usize, n_relations: usize) -> impl Iterator<Item = Slot> {
    (0..n_entities).flat_map(move |e| (0..n_relations).map(move |r| Slot::new(e as u16, r as u16)))
}

impl EnvParams {
    /// Builds from tails listed in slot order.
    pub fn new(n_entities: usize, n_relations: usize, tails: Vec<Tail>) -> Result<Self> {
        check_vocab(n_entities, n_relations)?;
        if tails.len() != n_entities * n_relations {
            return Err(Error::InvalidArgument(format!(
                "expected {} slot tails, got {}",
                n_entities * n_relations,
                tails.len()
            )));
        }
        for &t in &tails {
            check_tail(n_entities, t)?;
        }
        Ok(EnvParams {
            n_entities,
            n_relations,
            tails,
        })
    }

    /// A graph with no edges at all.
    pub fn empty(n_entities: usize, n_relations: usize) -> Result<Self> {
        Self::new(n_entities, n_relations, vec![None; n_entities * n_relations])
    }

    pub fn with_edge(mut self, slot: Slot, tail: Tail) -> Result<Self> {
        check_tail(self.n_entities, tail)?;
        let i = slot_index(self.n_entities, self.n_relations, slot)?;
        self.tails[i] = tail;
        Ok(self)
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn tail(&self, slot: Slot) -> Result<Tail> {
        Ok(self.tails[slot_index(self.n_entities, self.n_relations, slot)?])
    }

    pub fn slots(&self) -> impl Iterator<Item = (Slot, Tail)> + '_ {
        all_slots(self.n_entities, self.n_relations).zip(self.tails.iter().copied())
    }

    pub fn check_slot(&self, slot: Slot) -> Result<()> {
        slot_index(self.n_entities, self.n_relations, slot).map(|_| ())
    }

    /// The true hop-by-hop answer chain of `question`, stopping at the first missing edge.
    pub fn answer_chain(&self, question: &Question) -> Vec<Fact> {
        let mut chain = Vec::with_capacity(question.hops());
        let mut at = question.start();
        for &r in question.relations() {
            let slot = Slot {
                entity: at,
                relation: r,
            };
            match self.tail(slot) {
                Ok(Some(next)) => {
                    chain.push(Fact::new(slot, Some(next)));
                    at = next;
                }
                _ => break,
            }
        }
        chain
    }

    pub fn answers(&self, question: &Question) -> bool {
        self.answer_chain(question).len() == question.hops()
    }
}

/// A point update of the agent-facing knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackEdit {
    pub slot: Slot,
    pub new_tail: Tail,
}

/// Applies `edits` in order to a copy of `env`; the last edit to a slot wins.
pub fn apply_feedback(env: &EnvParams, edits: &[FeedbackEdit]) -> Result<EnvParams> {
    let mut out = env.clone();
    for edit in edits {
        out = out.with_edge(edit.slot, edit.new_tail)?;
    }
    Ok(out)
}

/// Prior support of one slot: candidate tails with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSupport {
    pub candidates: Vec<(Tail, f64)>,
}

impl SlotSupport {
    pub fn uniform(tails: Vec<Tail>) -> Self {
        let p = 1.0 / tails.len() as f64;
        SlotSupport {
            candidates: tails.into_iter().map(|t| (t, p)).collect(),
        }
    }

    pub fn point(tail: Tail) -> Self {
        SlotSupport {
            candidates: vec![(tail, 1.0)],
        }
    }

    pub fn tails(&self) -> impl Iterator<Item = Tail> + '_ {
        self.candidates.iter().map(|&(t, _)| t)
    }
}

/// p(theta): independent per-slot categorical beliefs plus a question distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPrior {
    n_entities: usize,
    n_relations: usize,
    supports: Vec<SlotSupport>,
    questions: Vec<(Question, f64)>,
}

impl EnvPrior {
    pub fn new(
        n_entities: usize,
        n_relations: usize,
        supports: Vec<SlotSupport>,
        questions: Vec<(Question, f64)>,
    ) -> Result<Self> {
        check_vocab(n_entities, n_relations)?;
        if supports.len() != n_entities * n_relations {
            return Err(Error::InvalidArgument(format!(
                "expected {} slot supports, got {}",
                n_entities * n_relations,
                supports.len()
            )));
        }
        for (slot, support) in all_slots(n_entities, n_relations).zip(&supports) {
            if support.candidates.is_empty() {
                return Err(Error::InvalidArgument(format!("slot {slot} has an empty support")));
            }
            let mut sum = 0.0;
            for (i, &(t, p)) in support.candidates.iter().enumerate() {
                check_tail(n_entities, t)?;
                if !(p >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "slot {slot} has negative probability {p}"
                    )));
                }
                if support.candidates[..i].iter().any(|&(u, _)| u == t) {
                    return Err(Error::InvalidArgument(format!(
                        "slot {slot} lists candidate {} twice",
                        DisplayTail(t)
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "slot {slot} probabilities sum to {sum}"
                )));
            }
        }
        if questions.is_empty() {
            return Err(Error::InvalidArgument("question distribution is empty".into()));
        }
        let total: f64 = questions.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) || questions.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "question weights must be non-negative with positive total".into(),
            ));
        }
        let prior = EnvPrior {
            n_entities,
            n_relations,
            supports,
            questions,
        };
        for (q, w) in &prior.questions {
            q.check_vocabulary(n_entities, n_relations)?;
            if *w > 0.0 && !prior.answerable(q) {
                return Err(Error::InvalidArgument(format!(
                    "question {q} has no answer chain under any parameter in the support"
                )));
            }
        }
        Ok(prior)
    }

    /// Uniform-over-`support_size` prior: each slot gets that many distinct
    /// candidate entities (plus "no edge" when `include_none`), chosen by
    /// `seed`, and questions are every (start, relation chain) of length `hops`.
    pub fn uniform_chain(
        n_entities: usize,
        n_relations: usize,
        hops: usize,
        support_size: usize,
        include_none: bool,
        seed: u64,
    ) -> Result<Self> {
        check_vocab(n_entities, n_relations)?;
        if support_size == 0 || support_size > n_entities {
            return Err(Error::InvalidArgument(format!(
                "support size {support_size} must lie in 1..={n_entities}"
            )));
        }
        if hops == 0 {
            return Err(Error::InvalidArgument("hops must be positive".into()));
        }
        let mut rng = seed::rng(seed::derive(seed, seed::stream::PRIOR, 0));
        let supports = all_slots(n_entities, n_relations)
            .map(|_| {
                let picked = rand::seq::index::sample(&mut rng, n_entities, support_size);
                let mut tails: Vec<Tail> = picked
                    .into_iter()
                    .map(|e| Some(EntityId(e as u16)))
                    .collect();
                tails.sort();
                if include_none {
                    tails.push(None);
                }
                SlotSupport::uniform(tails)
            })
            .collect();
        let questions = chain_questions(n_entities, n_relations, hops)?;
        let w = 1.0 / questions.len() as f64;
        Self::new(
            n_entities,
            n_relations,
            supports,
            questions.into_iter().map(|q| (q, w)).collect(),
        )
    }

    /// The degenerate prior putting all mass on `env`.
    pub fn point_mass(env: &EnvParams, questions: Vec<(Question, f64)>) -> Result<Self> {
        let supports = env.slots().map(|(_, t)| SlotSupport::point(t)).collect();
        Self::new(env.n_entities(), env.n_relations(), supports, questions)
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn support(&self, slot: Slot) -> Result<&SlotSupport> {
        Ok(&self.supports[slot_index(self.n_entities, self.n_relations, slot)?])
    }

    pub fn supports(&self) -> impl Iterator<Item = (Slot, &SlotSupport)> + '_ {
        all_slots(self.n_entities, self.n_relations).zip(self.supports.iter())
    }

    pub fn questions(&self) -> &[(Question, f64)] {
        &self.questions
    }

    pub fn with_questions(&self, questions: Vec<(Question, f64)>) -> Result<Self> {
        Self::new(self.n_entities, self.n_relations, self.supports.clone(), questions)
    }

    /// Reweights the current questions by a Zipf law: after a seeded shuffle
    /// the k-th question (from 1) gets weight proportional to k^-exponent.
    /// Exponent 0 gives the uniform distribution.
    pub fn with_zipf_questions(&self, exponent: f64, seed: u64) -> Result<Self> {
        if !(exponent.is_finite() && exponent >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "zipf exponent must be finite and non-negative, got {exponent}"
            )));
        }
        let mut qs: Vec<Question> = self.questions.iter().map(|(q, _)| q.clone()).collect();
        qs.shuffle(&mut seed::rng(seed::derive(seed, seed::stream::PRIOR, 1)));
        let weights: Vec<f64> = (1..=qs.len()).map(|k| (k as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        self.with_questions(qs.into_iter().zip(weights).map(|(q, w)| (q, w / total)).collect())
    }

    /// Number of parameter vectors with positive prior probability.
    pub fn support_size(&self) -> f64 {
        self.supports
            .iter()
            .map(|s| s.candidates.iter().filter(|&&(_, p)| p > 0.0).count() as f64)
            .product()
    }

    fn answerable(&self, q: &Question) -> bool {
        let mut frontier = vec![q.start()];
        for &r in q.relations() {
            let mut next = Vec::new();
            for &e in &frontier {
                let s = &self.supports[usize::from(e.0) * self.n_relations + usize::from(r.0)];
                for &(t, p) in &s.candidates {
                    if let (Some(t), true) = (t, p > 0.0) {
                        if !next.contains(&t) {
                            next.push(t);
                        }
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            frontier = next;
        }
        true
    }

    /// Corruption domain matching this prior: wrong observations stay inside each slot's support.
    pub fn observation_model(&self, eta: f64) -> Result<ObservationModel> {
        let domains = self.supports.iter().map(|s| s.tails().collect()).collect();
        ObservationModel::with_domains(eta, Arc::new(domains))
    }

    /// Draws a question from the question distribution.
    pub fn sample_question(&self, seed: u64) -> Question {
        let total: f64 = self.questions.iter().map(|(_, w)| *w).sum();
        let mut u = seed::rng(seed).gen::<f64>() * total;
        for (q, w) in &self.questions {
            if u < *w {
                return q.clone();
            }
            u -= *w;
        }
        // rounding fallthrough
        self.questions
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(q, _)| q.clone())
            .expect("validated non-empty positive question distribution")
    }
}

/// Every (start, relation chain) question of the given length.
pub fn chain_questions(n_entities: usize, n_relations: usize, hops: usize) -> Result<Vec<Question>> {
    let count = n_entities as f64 * (n_relations as f64).powi(hops as i32);
    if count > 1e6 {
        return Err(Error::InvalidArgument(format!(
            "{count} chain questions is too many to enumerate"
        )));
    }
    let per_start = n_relations.pow(hops as u32);
    let mut out = Vec::with_capacity(n_entities * per_start);
    for e in 0..n_entities {
        for code in 0..per_start {
            // base-n_relations digits, last relation varying fastest
            let mut rest = code;
            let mut chain = vec![RelationId(0); hops];
            for slot in chain.iter_mut().rev() {
                *slot = RelationId((rest % n_relations) as u16);
                rest /= n_relations;
            }
            out.push(Question::new(EntityId(e as u16), chain)?);
        }
    }
    Ok(out)
}

/// Draws each slot's tail independently from its support.
pub fn sample_env(prior: &EnvPrior, seed: u64) -> EnvParams {
    let mut rng = seed::rng(seed);
    let tails = prior
        .supports
        .iter()
        .map(|s| {
            let mut u = rng.gen::<f64>();
            let mut pick = None;
            for &(t, p) in &s.candidates {
                if p <= 0.0 {
                    continue;
                }
                pick = Some(t);
                if u < p {
                    break;
                }
                u -= p;
            }
            pick.expect("validated support has positive mass")
        })
        .collect();
    EnvParams {
        n_entities: prior.n_entities,
        n_relations: prior.n_relations,
        tails,
    }
}

/// Query noise: with probability `eta` the response tail is replaced by a wrong one.
///
/// Wrong tails are drawn uniformly from the slot's corruption domain minus the
/// true tail. The domain is either every entity plus "no edge", or per-slot
/// candidate lists (normally the prior supports).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    eta: f64,
    domains: Option<Arc<Vec<Vec<Tail>>>>,
}

impl ObservationModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!(
                "eta must lie in [0, 1), got {eta}"
            )));
        }
        Ok(ObservationModel { eta, domains: None })
    }

    pub fn noiseless() -> Self {
        ObservationModel {
            eta: 0.0,
            domains: None,
        }
    }

    pub fn with_domains(eta: f64, domains: Arc<Vec<Vec<Tail>>>) -> Result<Self> {
        let mut m = Self::new(eta)?;
        m.domains = Some(domains);
        Ok(m)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The corruption candidates for `slot` when its true tail is `truth`.
    pub fn wrong_tails(&self, n_entities: usize, n_relations: usize, slot: Slot, truth: Tail) -> Vec<Tail> {
        let domain: Vec<Tail> = match &self.domains {
            Some(d) => {
                let i = usize::from(slot.entity.0) * n_relations + usize::from(slot.relation.0);
                d.get(i).cloned().unwrap_or_default()
            }
            None => (0..n_entities)
                .map(|e| Some(EntityId(e as u16)))
                .chain(std::iter::once(None))
                .collect(),
        };
        domain.into_iter().filter(|&t| t != truth).collect()
    }

    /// Likelihood of observing `observed` for `slot` when the true tail is `truth`.
    pub fn likelihood(&self, n_entities: usize, n_relations: usize, slot: Slot, truth: Tail, observed: Tail) -> f64 {
        let wrong = self.wrong_tails(n_entities, n_relations, slot, truth);
        if wrong.is_empty() {
            return if observed == truth { 1.0 } else { 0.0 };
        }
        if observed == truth {
            1.0 - self.eta
        } else if wrong.contains(&observed) {
            self.eta / wrong.len() as f64
        } else {
            0.0
        }
    }

    /// Response distribution of a query on `slot` of `env`.
    pub fn outcomes(&self, env: &EnvParams, slot: Slot) -> Result<Vec<(Tail, f64)>> {
        let truth = env.tail(slot)?;
        let wrong = self.wrong_tails(env.n_entities(), env.n_relations(), slot, truth);
        if self.eta == 0.0 || wrong.is_empty() {
            return Ok(vec![(truth, 1.0)]);
        }
        let p = self.eta / wrong.len() as f64;
        let mut out = vec![(truth, 1.0 - self.eta)];
        out.extend(wrong.into_iter().map(|t| (t, p)));
        Ok(out)
    }
}

/// Executes one knowledge-base query; deterministic given `seed`.
pub fn query(env: &EnvParams, obs: &ObservationModel, slot: Slot, seed: u64) -> Result<Fact> {
    let truth = env.tail(slot)?;
    if obs.eta == 0.0 {
        return Ok(Fact::new(slot, truth));
    }
    let mut rng = seed::rng(seed);
    let corrupt = rng.gen::<f64>() < obs.eta;
    if !corrupt {
        return Ok(Fact::new(slot, truth));
    }
    let wrong = obs.wrong_tails(env.n_entities(), env.n_relations(), slot, truth);
    if wrong.is_empty() {
        return Ok(Fact::new(slot, truth));
    }
    let pick = wrong[rng.gen_range(0..wrong.len())];
    Ok(Fact::new(slot, pick))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_candidate_prior() -> EnvPrior {
        let q = Question::new(EntityId(0), vec![RelationId(0)]).unwrap();
        let supports = vec![
            SlotSupport::uniform(vec![Some(EntityId(1)), Some(EntityId(2))]),
            SlotSupport::point(None),
            SlotSupport::point(None),
        ];
        EnvPrior::new(3, 1, supports, vec![(q, 1.0)]).unwrap()
    }

    #[test]
    fn degenerate_prior_samples_unique_env() {
        let env = EnvParams::empty(2, 2)
            .unwrap()
            .with_edge(Slot::new(0, 1), Some(EntityId(1)))
            .unwrap();
        let q = Question::new(EntityId(0), vec![RelationId(1)]).unwrap();
        let prior = EnvPrior::point_mass(&env, vec![(q, 1.0)]).unwrap();
        for s in 0..20 {
            assert_eq!(sample_env(&prior, s), env);
        }
    }

    #[test]
    fn sampling_frequencies_match_prior() {
        let prior = two_candidate_prior();
        let hits = (0..10_000u64)
            .filter(|&s| sample_env(&prior, seed::derive(1, 0, s)).tail(Slot::new(0, 0)).unwrap() == Some(EntityId(1)))
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((0.49..=0.51).contains(&freq), "freq {freq}");
    }

    #[test]
    fn sampling_is_seeded() {
        let prior = EnvPrior::uniform_chain(6, 3, 3, 2, false, 9).unwrap();
        assert_eq!(sample_env(&prior, 5), sample_env(&prior, 5));
    }

    #[test]
    fn noiseless_query_returns_truth() {
        let env = EnvParams::empty(2, 1)
            .unwrap()
            .with_edge(Slot::new(0, 0), Some(EntityId(1)))
            .unwrap();
        let obs = ObservationModel::noiseless();
        for s in 0..50 {
            assert_eq!(query(&env, &obs, Slot::new(0, 0), s).unwrap().tail, Some(EntityId(1)));
            assert_eq!(query(&env, &obs, Slot::new(1, 0), s).unwrap().tail, None);
        }
    }

    #[test]
    fn corruption_frequency_tracks_eta() {
        let env = EnvParams::empty(4, 1)
            .unwrap()
            .with_edge(Slot::new(0, 0), Some(EntityId(2)))
            .unwrap();
        let obs = ObservationModel::new(0.2).unwrap();
        let wrong = (0..10_000u64)
            .filter(|&s| query(&env, &obs, Slot::new(0, 0), seed::derive(3, 0, s)).unwrap().tail != Some(EntityId(2)))
            .count();
        let frac = wrong as f64 / 10_000.0;
        assert!((0.18..=0.22).contains(&frac), "frac {frac}");
    }

    #[test]
    fn outcome_distribution_sums_to_one() {
        let prior = two_candidate_prior();
        let env = sample_env(&prior, 1);
        let obs = prior.observation_model(0.3).unwrap();
        let out = obs.outcomes(&env, Slot::new(0, 0)).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.iter().map(|o| o.1).sum::<f64>() - 1.0).abs() < 1e-15);
        // point-mass support has nothing to corrupt into
        assert_eq!(obs.outcomes(&env, Slot::new(1, 0)).unwrap(), vec![(None, 1.0)]);
    }

    #[test]
    fn feedback_edits_apply_in_order() {
        let env = EnvParams::empty(3, 1).unwrap();
        assert_eq!(apply_feedback(&env, &[]).unwrap(), env);
        let one = apply_feedback(
            &env,
            &[FeedbackEdit { slot: Slot::new(1, 0), new_tail: Some(EntityId(2)) }],
        )
        .unwrap();
        assert_eq!(one.slots().filter(|(s, t)| env.tail(*s).unwrap() != *t).count(), 1);
        let two = apply_feedback(
            &env,
            &[
                FeedbackEdit { slot: Slot::new(1, 0), new_tail: Some(EntityId(2)) },
                FeedbackEdit { slot: Slot::new(1, 0), new_tail: Some(EntityId(0)) },
            ],
        )
        .unwrap();
        assert_eq!(two.tail(Slot::new(1, 0)).unwrap(), Some(EntityId(0)));
        assert_eq!(env.tail(Slot::new(1, 0)).unwrap(), None);
        let bad = apply_feedback(&env, &[FeedbackEdit { slot: Slot::new(5, 0), new_tail: None }]);
        assert!(matches!(bad, Err(Error::InvalidSlot(_))));
    }

    #[test]
    fn prior_validation() {
        let q = Question::new(EntityId(0), vec![RelationId(0)]).unwrap();
        let bad_sum = vec![SlotSupport { candidates: vec![(None, 0.4), (Some(EntityId(0)), 0.5)] }];
        assert!(EnvPrior::new(1, 1, bad_sum, vec![(q.clone(), 1.0)]).is_err());
        let dead = vec![SlotSupport::point(None)];
        assert!(EnvPrior::new(1, 1, dead, vec![(q, 1.0)]).is_err());
    }

    #[test]
    fn chain_question_count() {
        let qs = chain_questions(6, 3, 3).unwrap();
        assert_eq!(qs.len(), 6 * 27);
        assert_eq!(qs[1].relations(), &[RelationId(0), RelationId(0), RelationId(1)]);
        let mut sorted = qs.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), qs.len());
    }

    #[test]
    fn zipf_questions() {
        let prior = EnvPrior::uniform_chain(6, 3, 3, 2, false, 1).unwrap();
        let flat = prior.with_zipf_questions(0.0, 9).unwrap();
        assert!(flat.questions().iter().all(|(_, w)| (w - 1.0 / 162.0).abs() < 1e-15));
        let z = prior.with_zipf_questions(2.0, 9).unwrap();
        assert_eq!(z, prior.with_zipf_questions(2.0, 9).unwrap());
        let total: f64 = z.questions().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let w: Vec<f64> = z.questions().iter().map(|(_, w)| *w).collect();
        assert!((w[0] / w[1] - 4.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        assert!(prior.with_zipf_questions(-1.0, 9).is_err());
    }
}
