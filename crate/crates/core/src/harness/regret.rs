//! Bayesian regret of an agent over a stream of episodes, with its
//! policy-suboptimality / model-estimation split.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::fit::ModelErrorSample;
use super::oracle::ValueCache;
use crate::agent::{Agent, TransitionRecord};
use crate::env::{sample_env, successor_distribution, EnvParams, EnvPrior, KnowledgeEnv, ObservationModel};
use crate::error::{Error, Result};
use crate::loops::{run_episode, LoopConfig, LoopKind, StepInfo, StepObserver, Termination};
use crate::mdp::{bellman_apply, DiscountedMdpSpec, Question, DEFAULT_STATE_CAP, DEFAULT_TOL};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct RegretSettings {
    /// Horizons T at which the cumulative regret is reported.
    pub horizons: Vec<usize>,
    pub n_samples: usize,
    pub spec: DiscountedMdpSpec,
    pub loop_kind: LoopKind,
    pub loop_config: LoopConfig,
    /// Query noise of the environment (and of the agent's likelihood).
    pub eta: f64,
    pub seed: u64,
    pub tol: f64,
    pub state_cap: usize,
}

impl RegretSettings {
    pub fn new(horizons: Vec<usize>, n_samples: usize, spec: DiscountedMdpSpec, seed: u64) -> Self {
        RegretSettings {
            horizons,
            n_samples,
            spec,
            loop_kind: LoopKind::Adapted,
            loop_config: LoopConfig::default(),
            eta: 0.0,
            seed,
            tol: DEFAULT_TOL,
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "bayesian regret needs at least {MIN_SAMPLES} prior samples, got {}",
                self.n_samples
            )));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidArgument("horizons must be a non-empty list of positive integers".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
        }
        self.loop_config.validate()
    }
}

pub const MIN_SAMPLES: usize = 30;

/// R(T): mean cumulative regret over prior samples, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub horizons: Vec<usize>,
    pub cumulative_regret: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_prior_samples: usize,
}

/// Everything measured at one step of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    /// V*_theta(s_t) - V^{pi^t}_theta(s_t).
    pub regret: f64,
    /// V*_{theta^k}(s_t) - V^{pi^k}_{theta^k}(s_t).
    pub term_a: f64,
    /// V^{pi^t}_{theta^k}(s_t) - V^{pi^t}_theta(s_t).
    pub term_b: f64,
    /// |(B_theta - B_{theta^k}) V|(s_t, a_t) with V the agent's own value estimate.
    pub model_error: f64,
    /// H_t - H_{t+1}, clipped at zero.
    pub gain: f64,
    /// H at the checkpoint minus H_t, at decision time.
    pub drop_since_checkpoint: f64,
    /// H_{t+1}.
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub steps: usize,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub context_updates: usize,
    pub final_reward: f64,
    pub terminated_by: Termination,
}

/// One prior sample's episode stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub h0: f64,
    pub steps: Vec<StepTrace>,
    pub episodes: Vec<EpisodeStats>,
    /// Log lines of the first episodes, as written by [`crate::loops::EpisodeRecord::log`].
    pub episode_logs: Vec<String>,
}

impl SampleRun {
    pub fn context_updates(&self) -> usize {
        self.episodes.iter().map(|e| e.context_updates).sum()
    }

    pub fn model_errors(&self) -> impl Iterator<Item = ModelErrorSample> + '_ {
        self.steps.iter().map(|s| ModelErrorSample {
            error: s.model_error,
            gain: s.gain,
            drop_since_checkpoint: s.drop_since_checkpoint,
        })
    }

    fn cumulative(&self, t: usize, f: impl Fn(&StepTrace) -> f64) -> f64 {
        self.steps[..t].iter().map(f).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRun {
    pub curve: RegretCurve,
    pub term_a: Vec<f64>,
    pub term_b: Vec<f64>,
    /// Mean H_0 - H_T at each horizon.
    pub entropy_drop: Vec<f64>,
    pub samples: Vec<SampleRun>,
}

struct Evaluator<'a> {
    theta: &'a EnvParams,
    obs: &'a ObservationModel,
    settings: &'a RegretSettings,
    checkpoint: Option<u64>,
    model: Option<Arc<EnvParams>>,
    v_star: ValueCache,
    v_star_k: ValueCache,
    v_pi: ValueCache,
    v_pi_k: ValueCache,
    steps: Vec<StepTrace>,
}

impl Evaluator<'_> {
    fn sync(&mut self, agent: &mut Agent) {
        let id = agent.checkpoint_id();
        if self.checkpoint != Some(id) {
            self.checkpoint = Some(id);
            self.model = agent.decision_rule().model().cloned();
            self.v_star_k.clear();
            self.v_pi.clear();
            self.v_pi_k.clear();
        }
    }
}

impl StepObserver for Evaluator<'_> {
    fn after_step(&mut self, agent: &mut Agent, record: &TransitionRecord, info: &StepInfo) -> Result<()> {
        self.sync(agent);
        let (spec, tol, cap) = (&self.settings.spec, self.settings.tol, self.settings.state_cap);
        let q: &Arc<Question> = &record.state.question;
        let s = record.state.key();
        let theta = self.theta;
        let model: &EnvParams = self.model.as_deref().unwrap_or(theta);
        let rule = agent.decision_rule();

        let v_star = self.v_star.optimal(theta, self.obs, q, &s, spec, tol, cap)?;
        let v_pi = self.v_pi.policy(rule, theta, self.obs, q, &s, spec, tol, cap)?;
        let v_star_k = self.v_star_k.optimal(model, self.obs, q, &s, spec, tol, cap)?;
        let v_pi_k = self.v_pi_k.policy(rule, model, self.obs, q, &s, spec, tol, cap)?;

        let bound = spec.reward_upper_bound();
        let mut estimate = HashMap::new();
        for env in [theta, model] {
            for (n, _) in successor_distribution(q, &s, &record.action, env, self.obs)? {
                if !estimate.contains_key(&n) {
                    let v = self.v_pi_k.policy(rule, model, self.obs, q, &n, spec, tol, cap)?;
                    estimate.insert(n, v.clamp(0.0, bound));
                }
            }
        }
        let lookup = |k: &_| estimate.get(k).copied();
        let backup_true = bellman_apply(lookup, theta, self.obs, &record.state, &record.action, spec)?;
        let backup_model = bellman_apply(lookup, model, self.obs, &record.state, &record.action, spec)?;

        let gain = (info.entropy_before - info.entropy_after).max(0.0);
        self.steps.push(StepTrace {
            regret: v_star - v_pi,
            term_a: v_star_k - v_pi_k,
            term_b: v_pi_k - v_pi,
            model_error: (backup_true - backup_model).abs(),
            gain,
            drop_since_checkpoint: (info.drop_since_checkpoint - gain).max(0.0),
            entropy: info.entropy_after,
        });
        Ok(())
    }
}

/// How many leading episodes of each sample keep their full step log.
pub const LOGGED_EPISODES: usize = 3;

fn run_sample<F>(prior: &EnvPrior, factory: &F, settings: &RegretSettings, index: usize) -> Result<SampleRun>
where
    F: Fn(u64) -> Result<Agent>,
{
    let sample_seed = seed::derive(settings.seed, stream::SAMPLE, index as u64);
    let theta = sample_env(prior, seed::derive(sample_seed, stream::ENVIRONMENT, 0));
    let obs = prior.observation_model(settings.eta)?;
    let env = KnowledgeEnv::new(theta.clone());
    let mut agent = factory(seed::derive(sample_seed, stream::AGENT, 0))?;
    let horizon = *settings.horizons.last().expect("validated non-empty");
    let h0 = agent.entropy();
    let mut ev = Evaluator {
        theta: &theta,
        obs: &obs,
        settings,
        checkpoint: None,
        model: None,
        v_star: ValueCache::new(),
        v_star_k: ValueCache::new(),
        v_pi: ValueCache::new(),
        v_pi_k: ValueCache::new(),
        steps: Vec::with_capacity(horizon),
    };
    let mut episodes = Vec::new();
    let mut logs = Vec::new();
    while ev.steps.len() < horizon {
        let e = episodes.len() as u64;
        let question = Arc::new(prior.sample_question(seed::derive(sample_seed, stream::QUESTION, e)));
        let remaining = horizon - ev.steps.len();
        let entropy_start = agent.entropy();
        let rec = run_episode(
            &env,
            &obs,
            &mut agent,
            question,
            settings.loop_kind,
            &settings.loop_config,
            seed::derive(sample_seed, stream::EPISODE, e),
            Some(remaining),
            &mut ev,
        )?;
        if logs.len() < LOGGED_EPISODES {
            logs.push(rec.log());
        }
        episodes.push(EpisodeStats {
            steps: rec.steps(),
            entropy_start,
            entropy_end: agent.entropy(),
            context_updates: rec.context_update_steps.len(),
            final_reward: rec.final_reward(),
            terminated_by: rec.terminated_by,
        });
    }
    Ok(SampleRun {
        h0,
        steps: ev.steps,
        episodes,
        episode_logs: logs,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every prior sample and aggregates regret, its two terms and the
/// entropy drop at each horizon.
///
/// Sample `i` draws its environment, agent, questions and query noise from
/// seeds derived from `(settings.seed, i)` alone, and results are reduced in
/// sample order, so the output does not depend on thread scheduling.
pub fn run_regret<F>(prior: &EnvPrior, agent_factory: F, settings: &RegretSettings) -> Result<RegretRun>
where
    F: Fn(u64) -> Result<Agent> + Sync,
{
    settings.validate()?;
    let samples = (0..settings.n_samples)
        .into_par_iter()
        .map(|i| run_sample(prior, &agent_factory, settings, i))
        .collect::<Result<Vec<_>>>()?;

    let mut curve = RegretCurve {
        horizons: settings.horizons.clone(),
        cumulative_regret: Vec::new(),
        stderr: Vec::new(),
        n_prior_samples: samples.len(),
    };
    let (mut term_a, mut term_b, mut entropy_drop) = (Vec::new(), Vec::new(), Vec::new());
    for &t in &settings.horizons {
        let per: Vec<f64> = samples.iter().map(|s| s.cumulative(t, |x| x.regret)).collect();
        let (mean, se) = mean_and_stderr(&per);
        curve.cumulative_regret.push(mean);
        curve.stderr.push(se);
        let a: Vec<f64> = samples.iter().map(|s| s.cumulative(t, |x| x.term_a)).collect();
        let b: Vec<f64> = samples.iter().map(|s| s.cumulative(t, |x| x.term_b)).collect();
        let d: Vec<f64> = samples.iter().map(|s| s.h0 - s.steps[t - 1].entropy).collect();
        term_a.push(mean_and_stderr(&a).0);
        term_b.push(mean_and_stderr(&b).0);
        entropy_drop.push(mean_and_stderr(&d).0);
    }
    Ok(RegretRun {
        curve,
        term_a,
        term_b,
        entropy_drop,
        samples,
    })
}

/// R(T) at each horizon.
pub fn bayesian_regret<F>(prior: &EnvPrior, agent_factory: F, settings: &RegretSettings) -> Result<RegretCurve>
where
    F: Fn(u64) -> Result<Agent> + Sync,
{
    Ok(run_regret(prior, agent_factory, settings)?.curve)
}

/// Cumulative (term A, term B) at each horizon.
pub fn decompose_regret<F>(prior: &EnvPrior, agent_factory: F, settings: &RegretSettings) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(u64) -> Result<Agent> + Sync,
{
    let run = run_regret(prior, agent_factory, settings)?;
    Ok((run.term_a, run.term_b))
}
