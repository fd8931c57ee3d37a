//! The factored posterior against brute-force enumeration of every candidate
//! graph, on instances small enough to list.

use kbreason::agent::Posterior;
use kbreason::env::{all_slots, query, sample_env, EnvParams, EnvPrior, SlotSupport};
use kbreason::mdp::{EntityId, Fact, Question, RelationId, Slot, Tail};
use kbreason::seed;
use rand::seq::SliceRandom;
use rand::Rng;

const N_E: usize = 3;
const N_R: usize = 2;

/// Six slots whose support sizes multiply to 64, with random tails and weights.
fn random_prior(rng: &mut impl Rng) -> EnvPrior {
    let mut sizes = [4usize, 4, 2, 2, 1, 1];
    sizes.shuffle(rng);
    let pool: Vec<Tail> = (0..N_E as u16).map(|e| Some(EntityId(e))).chain([None]).collect();
    let supports = sizes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut tails: Vec<Tail> = pool.choose_multiple(rng, k).copied().collect();
            if i == 0 && !tails.iter().any(Option::is_some) {
                tails[0] = Some(EntityId(1));
            }
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            SlotSupport {
                candidates: tails.into_iter().zip(w).map(|(t, p)| (t, p / total)).collect(),
            }
        })
        .collect();
    let q = Question::new(EntityId(0), vec![RelationId(0)]).unwrap();
    EnvPrior::new(N_E, N_R, supports, vec![(q, 1.0)]).unwrap()
}

/// Response likelihood written out directly: right with 1 - eta, otherwise
/// uniform over the other tails in the slot's support.
fn likelihood(support: &SlotSupport, eta: f64, truth: Tail, observed: Tail) -> f64 {
    let others = support.candidates.iter().filter(|(t, _)| *t != truth).count();
    if others == 0 {
        return f64::from(u8::from(observed == truth));
    }
    if observed == truth {
        1.0 - eta
    } else if support.candidates.iter().any(|(t, _)| *t == observed) {
        eta / others as f64
    } else {
        0.0
    }
}

/// Every graph in the support with its prior mass.
fn enumerate(prior: &EnvPrior) -> Vec<(Vec<Tail>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for (_, support) in prior.supports() {
        out = out
            .into_iter()
            .flat_map(|(tails, p)| {
                support.candidates.iter().map(move |&(t, q)| {
                    let mut next = tails.clone();
                    next.push(t);
                    (next, p * q)
                })
            })
            .collect();
    }
    out
}

fn check(eta: f64, case: u64) {
    let mut rng = seed::rng(seed::derive(0xfeed, case, (eta * 10.0) as u64));
    let prior = random_prior(&mut rng);
    let obs = prior.observation_model(eta).unwrap();
    let truth = sample_env(&prior, rng.gen());
    let slots: Vec<Slot> = all_slots(N_E, N_R).collect();
    let facts: Vec<Fact> = (0..rng.gen_range(1..=15))
        .map(|_| query(&truth, &obs, *slots.choose(&mut rng).unwrap(), rng.gen()).unwrap())
        .collect();

    let mut factored = Posterior::from_prior(&prior, obs.clone());
    for f in &facts {
        factored.observe(f).unwrap();
    }

    let thetas = enumerate(&prior);
    assert!(thetas.len() <= 64);
    let weights: Vec<f64> = thetas
        .iter()
        .map(|(tails, p)| {
            let env = EnvParams::new(N_E, N_R, tails.clone()).unwrap();
            facts.iter().fold(*p, |acc, f| {
                let support = prior.support(f.slot()).unwrap();
                acc * likelihood(support, eta, env.tail(f.slot()).unwrap(), f.tail)
            })
        })
        .collect();
    let z: f64 = weights.iter().sum();
    assert!(z > 0.0);

    for (i, slot) in slots.iter().enumerate() {
        for &(tail, p) in factored.slot(*slot).unwrap() {
            let brute: f64 = thetas
                .iter()
                .zip(&weights)
                .filter(|((tails, _), _)| tails[i] == tail)
                .map(|(_, w)| w / z)
                .sum();
            assert!((p - brute).abs() <= 1e-10, "case {case} eta {eta} slot {slot}: {p} vs {brute}");
        }
    }
    for ((tails, _), w) in thetas.iter().zip(&weights) {
        let product: f64 = slots.iter().zip(tails).map(|(s, &t)| factored.prob(*s, t)).product();
        assert!((product - w / z).abs() <= 1e-10, "case {case} eta {eta}: joint mismatch");
    }
}

#[test]
fn factored_posterior_matches_enumeration_noiseless() {
    for case in 0..100 {
        check(0.0, case);
    }
}

#[test]
fn factored_posterior_matches_enumeration_noisy() {
    for case in 0..100 {
        check(0.2, case);
    }
}
