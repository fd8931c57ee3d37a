use std::f64::consts::LN_2;
use std::sync::Arc;

use kbreason::agent::{
    information_gain, plan_with_model, posterior_entropy, update_posterior, Agent, AgentConfig, ModelMode,
    PlannerConfig, Posterior,
};
use kbreason::env::{
    judge_path, legal_actions, sample_env, successor_distribution, transition_reward, EnvParams, EnvPrior,
    KnowledgeEnv, ObservationModel,
};
use kbreason::loops::{run_episode, LoopConfig, LoopKind, Termination};
use kbreason::mdp::{DiscountedMdpSpec, EntityId, KnowledgeMdp, Question, RelationId, Slot, StateKey, Tail};
use proptest::prelude::*;

const N_E: usize = 3;
const N_R: usize = 2;
const TOL: f64 = 1e-10;

fn env_strategy() -> impl Strategy<Value = EnvParams> {
    prop::collection::vec(0u16..=N_E as u16, N_E * N_R).prop_map(|codes| {
        let tails = codes
            .into_iter()
            .map(|c| (usize::from(c) < N_E).then_some(EntityId(c)))
            .collect();
        EnvParams::new(N_E, N_R, tails).unwrap()
    })
}

fn question_strategy() -> impl Strategy<Value = Arc<Question>> {
    (0..N_E as u16, prop::collection::vec(0..N_R as u16, 1..=2)).prop_map(|(s, rs)| {
        Arc::new(Question::new(EntityId(s), rs.into_iter().map(RelationId).collect()).unwrap())
    })
}

fn eta_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.1), Just(0.3)]
}

fn optimal_q(mdp: &KnowledgeMdp, values: &[f64], key: &StateKey, a: &kbreason::mdp::AgentAction, spec: &DiscountedMdpSpec) -> f64 {
    mdp.bellman_apply(|k| mdp.index_of(k).map(|i| values[i]), key, a, spec).unwrap()
}

fn bellman_max(mdp: &KnowledgeMdp, values: &[f64], spec: &DiscountedMdpSpec) -> Vec<f64> {
    mdp.table()
        .states()
        .iter()
        .map(|key| {
            legal_actions(mdp.question(), key, N_R)
                .iter()
                .map(|a| optimal_q(mdp, values, key, a, spec))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_is_a_bounded_fixpoint(env in env_strategy(), q in question_strategy(), eta in eta_strategy(), gamma in 0.5f64..0.99) {
        let spec = DiscountedMdpSpec::new(gamma).unwrap();
        let obs = ObservationModel::new(eta).unwrap();
        let mdp = KnowledgeMdp::build(&env, &obs, q, 100_000).unwrap();
        let sol = mdp.value_iteration(&spec, TOL).unwrap();
        for &v in &sol.values {
            prop_assert!(v >= -TOL && v <= 1.0 + TOL, "value {v} outside [0, 1]");
        }
        let backed = bellman_max(&mdp, &sol.values, &spec);
        prop_assert!(sup(&backed, &sol.values) <= 1e-8);
        let greedy = mdp.policy_evaluation(|k| mdp.index_of(k).map(|i| sol.policy[i].clone()), &spec, TOL).unwrap();
        prop_assert!(sup(&greedy, &sol.values) <= 1e-8);
        let again = mdp.value_iteration(&spec, TOL).unwrap();
        prop_assert_eq!(again, sol);
    }

    #[test]
    fn bellman_operator_contracts(env in env_strategy(), q in question_strategy(), eta in eta_strategy(), seed in any::<u64>()) {
        use rand::Rng;
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let mdp = KnowledgeMdp::build(&env, &ObservationModel::new(eta).unwrap(), q, 100_000).unwrap();
        let mut rng = kbreason::seed::rng(seed);
        let u: Vec<f64> = (0..mdp.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..mdp.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (tu, tw) = (bellman_max(&mdp, &u, &spec), bellman_max(&mdp, &w, &spec));
        prop_assert!(sup(&tu, &tw) <= 0.9 * sup(&u, &w) + 1e-12);
    }

    #[test]
    fn rewards_are_judge_increments(env in env_strategy(), q in question_strategy(), eta in eta_strategy()) {
        let obs = ObservationModel::new(eta).unwrap();
        let mdp = KnowledgeMdp::build(&env, &obs, q.clone(), 100_000).unwrap();
        for key in mdp.table().states() {
            let level = judge_path(&q, &key.path, &env);
            prop_assert!((0.0..=1.0).contains(&level));
            for a in legal_actions(&q, key, N_R) {
                let succ = successor_distribution(&q, key, &a, &env, &obs).unwrap();
                let mass: f64 = succ.iter().map(|(_, p)| p).sum();
                prop_assert!((mass - 1.0).abs() <= 1e-12);
                for (next, _) in succ {
                    let r = transition_reward(&q, key, &next, &env);
                    prop_assert!(r >= 0.0 && level + r <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deep_enough_planner_picks_an_optimal_action(env in env_strategy(), q in question_strategy()) {
        let spec = DiscountedMdpSpec::new(0.9).unwrap();
        let obs = ObservationModel::noiseless();
        let mdp = KnowledgeMdp::build(&env, &obs, q.clone(), 100_000).unwrap();
        let sol = mdp.value_iteration(&spec, TOL).unwrap();
        let beliefs = Posterior::point_mass(&env);
        let config = PlannerConfig::exhaustive(q.hops() + 1, 0.9).unwrap();
        for (i, key) in mdp.table().states().iter().enumerate() {
            let a = plan_with_model(&q, key, &env, &beliefs, &config).unwrap().actions[0].clone();
            let qa = optimal_q(&mdp, &sol.values, key, &a, &spec);
            prop_assert!(qa >= sol.values[i] - 1e-6, "state {key}: Q(a) = {qa}, V* = {}", sol.values[i]);
        }
    }

    #[test]
    fn noisy_observation_never_raises_expected_entropy(prior_seed in any::<u64>(), eta in prop_oneof![Just(0.1), Just(0.3)], e in 0u16..4, r in 0u16..2, include_none in any::<bool>()) {
        let prior = EnvPrior::uniform_chain(4, 2, 2, 3, include_none, prior_seed).unwrap();
        let post = Posterior::from_prior(&prior, prior.observation_model(eta).unwrap());
        let slot = Slot::new(e, r);
        let obs = post.observation_model();
        let beliefs = post.slot(slot).unwrap().to_vec();
        let outcomes: Vec<Tail> = beliefs.iter().map(|(t, _)| *t).collect();
        let mut expected = 0.0;
        for &o in &outcomes {
            let p_o: f64 = beliefs.iter().map(|&(t, p)| p * obs.likelihood(4, 2, slot, t, o)).sum();
            if p_o > 0.0 {
                let mut next = post.clone();
                next.observe(&kbreason::mdp::Fact::new(slot, o)).unwrap();
                expected += p_o * next.entropy();
            }
        }
        prop_assert!(expected <= post.entropy() + 1e-12);
    }
}

fn learning_agent(prior: &EnvPrior, eta: f64, seed: u64) -> Agent {
    let config = AgentConfig {
        planner: PlannerConfig::exhaustive(3, 0.9).unwrap().with_model_mode(ModelMode::PosteriorSample),
        learning: true,
        seed,
    };
    Agent::planning(Posterior::from_prior(prior, prior.observation_model(eta).unwrap()), config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noiseless_episode_streams_keep_their_books(prior_seed in any::<u64>(), seed in any::<u64>(), include_none in any::<bool>()) {
        let prior = EnvPrior::uniform_chain(4, 2, 2, 2, include_none, prior_seed).unwrap();
        let env = KnowledgeEnv::new(sample_env(&prior, seed));
        let obs = prior.observation_model(0.0).unwrap();
        let config = LoopConfig::new(6, 1.0, LN_2).unwrap();
        let mut agent = learning_agent(&prior, 0.0, seed);
        let mut replay = agent.posterior().unwrap().clone();
        let h0 = replay.entropy();
        let mut gains = 0.0;
        let mut updates = 0;
        for e in 0..8u64 {
            let q = Arc::new(prior.sample_question(seed ^ e));
            let rec = run_episode(&env, &obs, &mut agent, q, LoopKind::Adapted, &config, seed.wrapping_add(e), None, &mut ()).unwrap();
            prop_assert!(rec.entropies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            for r in rec.buffer.records() {
                let next = update_posterior(&replay, r).unwrap();
                gains += information_gain(&replay, &next).unwrap();
                replay = next;
            }
            updates += rec.context_update_steps.len();
        }
        prop_assert_eq!(&replay, agent.posterior().unwrap());
        let ht = posterior_entropy(&replay);
        prop_assert!((gains - (h0 - ht)).abs() <= 1e-10, "gains {gains} vs drop {}", h0 - ht);
        prop_assert!(updates as f64 <= (h0 - ht) / LN_2 + 1.0 + 1e-9, "K = {updates}, drop = {}", h0 - ht);
    }

    #[test]
    fn zero_threshold_adapted_loop_is_the_inner_loop(prior_seed in any::<u64>(), seed in any::<u64>(), eta in eta_strategy()) {
        let prior = EnvPrior::uniform_chain(4, 2, 2, 2, true, prior_seed).unwrap();
        let env = KnowledgeEnv::new(sample_env(&prior, seed));
        let obs = prior.observation_model(eta).unwrap();
        let config = LoopConfig::new(6, 1.0, 0.0).unwrap();
        let q = Arc::new(prior.sample_question(seed));
        let mut a = learning_agent(&prior, eta, seed);
        let mut b = a.clone();
        let inner = run_episode(&env, &obs, &mut a, q.clone(), LoopKind::Inner, &config, seed, None, &mut ()).unwrap();
        let adapted = run_episode(&env, &obs, &mut b, q, LoopKind::Adapted, &config, seed, None, &mut ()).unwrap();
        prop_assert_eq!(inner, adapted);
    }

    #[test]
    fn episodes_stop_for_a_reason(prior_seed in any::<u64>(), seed in any::<u64>(), eta in eta_strategy(), max_steps in 1usize..8, r in prop_oneof![Just(0.0), Just(0.5), Just(1.0)]) {
        let prior = EnvPrior::uniform_chain(4, 2, 2, 2, true, prior_seed).unwrap();
        let env = KnowledgeEnv::new(sample_env(&prior, seed));
        let obs = prior.observation_model(eta).unwrap();
        let config = LoopConfig::new(max_steps, r, LN_2).unwrap();
        let mut agent = learning_agent(&prior, eta, seed);
        let rec = run_episode(&env, &obs, &mut agent, Arc::new(prior.sample_question(seed)), LoopKind::Adapted, &config, seed, None, &mut ()).unwrap();
        prop_assert!(rec.steps() >= 1 && rec.steps() <= max_steps);
        prop_assert_eq!(rec.entropies.len(), rec.steps() + 1);
        prop_assert!(rec.rewards.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(rec.rewards.windows(2).all(|w| w[1] >= w[0]));
        let hit = rec.final_reward() >= r;
        prop_assert!(rec.rewards[..rec.steps() - 1].iter().all(|x| *x < r));
        match rec.terminated_by {
            Termination::Reward => prop_assert!(hit),
            Termination::StepCap => prop_assert!(!hit && rec.steps() == max_steps),
        }
    }
}
