//! Exact factored posterior over knowledge-graph parameters.

use std::fmt::Write as _;

use rand::Rng;

use super::buffer::TransitionRecord;
use crate::env::{all_slots, EnvParams, EnvPrior, ObservationModel};
use crate::error::{Error, Result};
use crate::mdp::{DisplayTail, Fact, Slot, Tail};
use crate::seed;

/// How a planning model is read off a posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelMode {
    /// One joint draw (Thompson style).
    PosteriorSample,
    /// Per-slot argmax, lowest tail on ties.
    PosteriorMean,
}

impl ModelMode {
    pub fn name(self) -> &'static str {
        match self {
            ModelMode::PosteriorSample => "posterior-sample",
            ModelMode::PosteriorMean => "posterior-mean",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "posterior-sample" => Ok(ModelMode::PosteriorSample),
            "posterior-mean" => Ok(ModelMode::PosteriorMean),
            other => Err(Error::InvalidArgument(format!(
                "unknown model mode `{other}` (expected posterior-sample or posterior-mean)"
            ))),
        }
    }
}

/// Independent categorical belief per slot, with the query noise level it
/// conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    n_entities: usize,
    n_relations: usize,
    obs: ObservationModel,
    slots: Vec<Vec<(Tail, f64)>>,
}

fn slot_entropy(candidates: &[(Tail, f64)]) -> f64 {
    candidates
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .fold(0.0, |h, &(_, p)| h - p * p.ln())
}

impl Posterior {
    /// p_0: the prior itself, under the given observation model.
    pub fn from_prior(prior: &EnvPrior, obs: ObservationModel) -> Self {
        Posterior {
            n_entities: prior.n_entities(),
            n_relations: prior.n_relations(),
            obs,
            slots: prior.supports().map(|(_, s)| s.candidates.clone()).collect(),
        }
    }

    /// Certainty on `env`.
    pub fn point_mass(env: &EnvParams) -> Self {
        Posterior {
            n_entities: env.n_entities(),
            n_relations: env.n_relations(),
            obs: ObservationModel::noiseless(),
            slots: env.slots().map(|(_, t)| vec![(t, 1.0)]).collect(),
        }
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn eta(&self) -> f64 {
        self.obs.eta()
    }

    pub fn observation_model(&self) -> &ObservationModel {
        &self.obs
    }

    fn index(&self, slot: Slot) -> Result<usize> {
        let (e, r) = (usize::from(slot.entity.0), usize::from(slot.relation.0));
        if e >= self.n_entities || r >= self.n_relations {
            return Err(Error::InvalidSlot(slot.to_string()));
        }
        Ok(e * self.n_relations + r)
    }

    pub fn slot(&self, slot: Slot) -> Result<&[(Tail, f64)]> {
        Ok(&self.slots[self.index(slot)?])
    }

    /// P(tail of `slot` = `tail`); zero outside the support.
    pub fn prob(&self, slot: Slot, tail: Tail) -> f64 {
        self.index(slot)
            .map(|i| {
                self.slots[i]
                    .iter()
                    .find(|&&(t, _)| t == tail)
                    .map_or(0.0, |&(_, p)| p)
            })
            .unwrap_or(0.0)
    }

    /// Probability that every fact of `path` is true.
    pub fn path_probability(&self, path: &[Fact]) -> f64 {
        path.iter().map(|f| self.prob(f.slot(), f.tail)).product()
    }

    pub fn entropy(&self) -> f64 {
        self.slots.iter().fold(0.0, |h, c| h + slot_entropy(c))
    }

    /// H(self) - H(later), summed only over slots that differ, so untouched
    /// slots contribute exactly zero.
    pub fn entropy_drop(&self, later: &Posterior) -> Result<f64> {
        self.check_same_support(later)?;
        Ok(self
            .slots
            .iter()
            .zip(&later.slots)
            .filter(|(a, b)| a != b)
            .fold(0.0, |d, (a, b)| d + (slot_entropy(a) - slot_entropy(b))))
    }

    fn check_same_support(&self, other: &Posterior) -> Result<()> {
        if self.n_entities != other.n_entities || self.n_relations != other.n_relations {
            return Err(Error::SupportMismatch("vocabulary".into()));
        }
        for (slot, (a, b)) in all_slots(self.n_entities, self.n_relations).zip(self.slots.iter().zip(&other.slots)) {
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
                return Err(Error::SupportMismatch(slot.to_string()));
            }
        }
        Ok(())
    }

    /// Bayes rule for one observed fact; other slots are untouched.
    pub fn observe(&mut self, fact: &Fact) -> Result<()> {
        let slot = fact.slot();
        let i = self.index(slot)?;
        let (ne, nr) = (self.n_entities, self.n_relations);
        let weights: Vec<f64> = self.slots[i]
            .iter()
            .map(|&(c, p)| p * self.obs.likelihood(ne, nr, slot, c, fact.tail))
            .collect();
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ZeroProbabilityObservation {
                slot: slot.to_string(),
                observed: DisplayTail(fact.tail).to_string(),
            });
        }
        for ((_, p), w) in self.slots[i].iter_mut().zip(weights) {
            *p = w / z;
        }
        Ok(())
    }

    /// A full parameter vector drawn slot by slot.
    pub fn sample_env(&self, seed: u64) -> EnvParams {
        let mut rng = seed::rng(seed);
        let tails = self
            .slots
            .iter()
            .map(|c| {
                let mut u = rng.gen::<f64>();
                let mut pick = None;
                for &(t, p) in c {
                    if p <= 0.0 {
                        continue;
                    }
                    pick = Some(t);
                    if u < p {
                        break;
                    }
                    u -= p;
                }
                pick.expect("posterior slots keep positive mass")
            })
            .collect();
        EnvParams::new(self.n_entities, self.n_relations, tails).expect("posterior vocabulary is valid")
    }

    /// Per-slot most probable tail, lowest tail on ties.
    pub fn mean_env(&self) -> EnvParams {
        let tails = self
            .slots
            .iter()
            .map(|c| {
                let mut best: Option<(Tail, f64)> = None;
                for &(t, p) in c {
                    best = match best {
                        Some((bt, bp)) if bp > p || (bp == p && bt < t) => Some((bt, bp)),
                        _ => Some((t, p)),
                    };
                }
                best.expect("non-empty support").0
            })
            .collect();
        EnvParams::new(self.n_entities, self.n_relations, tails).expect("posterior vocabulary is valid")
    }

    pub fn realize(&self, mode: ModelMode, seed: u64) -> EnvParams {
        match mode {
            ModelMode::PosteriorSample => self.sample_env(seed),
            ModelMode::PosteriorMean => self.mean_env(),
        }
    }

    /// Text dump, one `slot h r : tail=p, ...` line per slot in slot order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (slot, c) in all_slots(self.n_entities, self.n_relations).zip(&self.slots) {
            let _ = write!(out, "slot {slot} :");
            for (i, &(t, p)) in c.iter().enumerate() {
                let sep = if i == 0 { " " } else { ", " };
                let _ = write!(out, "{sep}{}={p}", DisplayTail(t));
            }
            out.push('\n');
        }
        out
    }
}

/// Posterior after the record's query response; unchanged if nothing was queried.
pub fn update_posterior(posterior: &Posterior, record: &TransitionRecord) -> Result<Posterior> {
    let mut next = posterior.clone();
    if let Some(fact) = record.observation() {
        next.observe(&fact)?;
    }
    Ok(next)
}

/// H(p) = sum over slots of the categorical entropy, in nats.
pub fn posterior_entropy(posterior: &Posterior) -> f64 {
    posterior.entropy()
}

/// Entropy reduction from `before` to `after`, clipped at zero.
pub fn information_gain(before: &Posterior, after: &Posterior) -> Result<f64> {
    Ok(before.entropy_drop(after)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SlotSupport;
    use crate::mdp::{EntityId, Question, RelationId};
    use std::f64::consts::LN_2;

    fn two_candidate_prior(eta: f64) -> (EnvPrior, Posterior) {
        let q = Question::new(EntityId(0), vec![RelationId(0)]).unwrap();
        let supports = vec![
            SlotSupport::uniform(vec![Some(EntityId(1)), Some(EntityId(2))]),
            SlotSupport::point(None),
            SlotSupport::point(None),
        ];
        let prior = EnvPrior::new(3, 1, supports, vec![(q, 1.0)]).unwrap();
        let post = Posterior::from_prior(&prior, prior.observation_model(eta).unwrap());
        (prior, post)
    }

    fn seen(tail: u16) -> Fact {
        Fact::new(Slot::new(0, 0), Some(EntityId(tail)))
    }

    #[test]
    fn noiseless_observation_eliminates() {
        let (_, mut p) = two_candidate_prior(0.0);
        p.observe(&seen(1)).unwrap();
        assert_eq!(p.slot(Slot::new(0, 0)).unwrap(), &[(Some(EntityId(1)), 1.0), (Some(EntityId(2)), 0.0)]);
    }

    #[test]
    fn noisy_observation_is_bayes_rule() {
        let (_, mut p) = two_candidate_prior(0.2);
        p.observe(&seen(1)).unwrap();
        assert!((p.prob(Slot::new(0, 0), Some(EntityId(1))) - 0.8).abs() < 1e-15);
        assert!((p.prob(Slot::new(0, 0), Some(EntityId(2))) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn observation_outside_support_is_rejected() {
        let (_, mut p) = two_candidate_prior(0.0);
        let err = p.observe(&Fact::new(Slot::new(0, 0), Some(EntityId(0)))).unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityObservation { .. }));
    }

    #[test]
    fn entropy_examples() {
        let (_, p) = two_candidate_prior(0.0);
        assert_eq!(p.entropy(), LN_2);
        let env = EnvParams::empty(2, 2).unwrap();
        assert_eq!(Posterior::point_mass(&env).entropy(), 0.0);
    }

    #[test]
    fn gain_examples() {
        let (_, p) = two_candidate_prior(0.0);
        let mut q = p.clone();
        q.observe(&seen(2)).unwrap();
        assert_eq!(information_gain(&p, &q).unwrap(), LN_2);
        assert_eq!(information_gain(&p, &p).unwrap(), 0.0);

        let (_, p) = two_candidate_prior(0.2);
        let mut q = p.clone();
        q.observe(&seen(1)).unwrap();
        let h = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert!((information_gain(&p, &q).unwrap() - (LN_2 - h)).abs() < 1e-12);
        assert!((information_gain(&p, &q).unwrap() - 0.1927).abs() < 1e-4);
    }

    #[test]
    fn gain_needs_matching_supports() {
        let (_, p) = two_candidate_prior(0.0);
        let other = Posterior::point_mass(&EnvParams::empty(3, 1).unwrap());
        assert!(matches!(information_gain(&p, &other), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn mean_breaks_ties_low() {
        let (_, p) = two_candidate_prior(0.0);
        assert_eq!(p.mean_env().tail(Slot::new(0, 0)).unwrap(), Some(EntityId(1)));
    }

    #[test]
    fn dump_format() {
        let (_, p) = two_candidate_prior(0.0);
        assert_eq!(
            p.dump(),
            "slot e0 r0 : e1=0.5, e2=0.5\nslot e1 r0 : none=1\nslot e2 r0 : none=1\n"
        );
    }
}
