//! Experiment drivers and their on-disk artifacts.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kbreason::agent::{make_agent, AgentConfig, Paradigm, Posterior};
use kbreason::env::{all_slots, query, sample_env, EnvPrior, KnowledgeEnv, ObservationModel, SlotSupport};
use kbreason::harness::{
    deceptive_instance, fit_regret_exponent, information_coefficient, planner_optimality_gap, regret_table,
    run_regret, FitReport, RegretRun, SampleRun, GAIN_FLOOR, REGRET_TABLE_HEADER,
};
use kbreason::loops::{correct_first_wrong_slot, run_outer_loop, OuterRound, NEWINFO_TOL};
use kbreason::mdp::{Fact, Question, Slot, Tail};
use kbreason::seed::{self, stream};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::CliError;

pub const REGRET_FILE_PREFIX: &str = "regret";
pub const FIT_FILE: &str = "fit.txt";
pub const GAP_FILE: &str = "gap.txt";
pub const EPISODES_FILE: &str = "episodes.log";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ORACLE_FILE: &str = "oracle.tsv";

/// Samples whose first episodes go to the episode log.
const LOGGED_SAMPLES: usize = 2;

/// One agent/noise combination of a regret experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub paradigm: Paradigm,
    pub learning: bool,
    pub eta: f64,
}

/// Per-step bookkeeping checks over every sample of a regret run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretChecks {
    /// max |termA + termB - regret| over all steps.
    pub max_identity_residual: f64,
    pub max_abs_term_a: f64,
    pub max_abs_term_b: f64,
    /// Most negative per-step regret; cumulative curves are monotone iff this is >= -tol.
    pub min_step_regret: f64,
    /// H_t never rose along any sample.
    pub entropy_monotone: bool,
    /// max |sum of gains - (H_0 - H_T)| over samples.
    pub max_gain_sum_error: f64,
    /// max over samples of K - ((H_0 - H_T)/ln 2 + 1); non-positive when the bound holds.
    pub max_checkpoint_excess: f64,
    /// Pooled estimate at the configured delta, if any step was eligible.
    pub information_coefficient: Option<f64>,
    /// Covered model error never exceeds coefficient * sqrt(T (H_0 - H_T)) in any sample.
    pub coefficient_consistent: bool,
    /// Fraction of episodes that ended with the judge at 1.
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub run: RegretRun,
    pub fit: Result<FitReport, String>,
    pub checks: RegretChecks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub lookaheads: Vec<usize>,
    /// Max gap over every (environment, question) pair, per lookahead.
    pub suite_max_gap: Vec<f64>,
    pub suite_cases: usize,
    /// Max gap on the deceptive instance, per lookahead.
    pub deceptive_max_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub seeds: usize,
    /// Success rate over seeds, per round.
    pub success_by_round: Vec<f64>,
}

impl OuterResult {
    /// First round (from 1) at which every seed succeeded.
    pub fn first_full_round(&self) -> Option<usize> {
        self.success_by_round.iter().position(|&r| r >= 1.0).map(|i| i + 1)
    }

    /// Once every seed succeeds, every later round does too.
    pub fn never_degrades(&self) -> bool {
        match self.first_full_round() {
            Some(k) => self.success_by_round[k - 1..].iter().all(|&r| r >= 1.0),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub eta: f64,
    pub case: usize,
    pub observations: usize,
    pub candidates: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cases: Vec<OracleCase>,
}

impl OracleResult {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentResult {
    Regret(Vec<VariantResult>),
    Gap(GapResult),
    Outer(OuterResult),
    Oracle(OracleResult),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub result: ExperimentResult,
    /// File name to contents.
    pub artifacts: BTreeMap<String, String>,
}

impl ExperimentOutput {
    /// `<name>-<seed>-<first 12 hex digits of the canonical config's SHA-256>`.
    pub fn dir_name(&self) -> String {
        dir_name(&self.config)
    }
}

pub fn dir_name(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.canonical().as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{}-{}-{hex}", config.experiment.name, config.experiment.seed)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let diags = crate::config::validate(config);
    if !diags.is_empty() {
        return Err(CliError::Validation(diags));
    }
    let (result, artifacts) = match config.kind() {
        ExperimentKind::Regret => {
            let r = regret_experiment(config)?;
            let a = regret_artifacts(config, &r);
            (ExperimentResult::Regret(r), a)
        }
        ExperimentKind::PlannerGap => {
            let r = gap_experiment(config)?;
            let a = gap_artifacts(config, &r);
            (ExperimentResult::Gap(r), a)
        }
        ExperimentKind::OuterLoop => {
            let (r, rounds) = outer_experiment(config)?;
            let a = outer_artifacts(config, &r, &rounds);
            (ExperimentResult::Outer(r), a)
        }
        ExperimentKind::PosteriorOracle => {
            let r = oracle_experiment(config)?;
            let a = oracle_artifacts(config, &r);
            (ExperimentResult::Oracle(r), a)
        }
    };
    Ok(ExperimentOutput {
        config: config.clone(),
        result,
        artifacts,
    })
}

/// Writes the artifacts plus the canonical config under `root/<dir_name>`.
pub fn write_artifacts(output: &ExperimentOutput, root: &Path) -> Result<PathBuf, CliError> {
    let dir = root.join(output.dir_name());
    if dir.exists() {
        return Err(CliError::OutputExists(dir));
    }
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(&dir).map_err(|e| io(e, &dir))?;
    let config_path = dir.join("config.cfg");
    std::fs::write(&config_path, output.config.canonical()).map_err(|e| io(e, &config_path))?;
    for (name, body) in &output.artifacts {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io(e, &path))?;
    }
    Ok(dir)
}

fn not_measured(kind: ExperimentKind) -> String {
    format!("# not measured by {} experiments\n", kind.name())
}

fn experiment_prior(config: &ExperimentConfig) -> kbreason::Result<EnvPrior> {
    let base = config.base_prior()?;
    if !config.prior.point_mass {
        return Ok(base);
    }
    let theta = sample_env(&base, seed::derive(config.experiment.seed, stream::ENVIRONMENT, u64::MAX));
    EnvPrior::point_mass(&theta, base.questions().to_vec())
}

fn fmt_eta(eta: f64) -> String {
    format!("eta{eta}")
}

pub fn variants(config: &ExperimentConfig) -> Vec<Variant> {
    let mut out = Vec::new();
    for name in &config.agent.paradigms {
        let paradigm = Paradigm::parse(name).expect("validated paradigm");
        let etas = match paradigm {
            Paradigm::KgOnly => vec![0.0],
            Paradigm::LlmOnly => vec![config.observation.llm_only_eta],
            _ => config.observation.eta.clone(),
        };
        let learning = match paradigm {
            Paradigm::KgOnly => vec![false],
            _ => config.agent.learning.clone(),
        };
        for &l in &learning {
            for &eta in &etas {
                let agent = match (paradigm, l) {
                    (Paradigm::KgOnly, _) => "rule",
                    (_, true) => "bayes",
                    (_, false) => "frozen",
                };
                out.push(Variant {
                    label: format!("{}-{agent}-{}", paradigm.name(), fmt_eta(eta)),
                    paradigm,
                    learning: l,
                    eta,
                });
            }
        }
    }
    out
}

fn regret_experiment(config: &ExperimentConfig) -> Result<Vec<VariantResult>, CliError> {
    let prior = experiment_prior(config)?;
    let planner = config.planner()?;
    let h = &config.harness;
    let mut out = Vec::new();
    for variant in variants(config) {
        let settings = config.regret_settings(variant.eta)?;
        let factory = |seed: u64| {
            let agent = AgentConfig {
                planner,
                learning: variant.learning,
                seed,
            };
            make_agent(variant.paradigm.name(), &prior, variant.eta, &agent)
        };
        let run = run_regret(&prior, factory, &settings)?;
        let fit = fit_regret_exponent(&run.curve, (h.fit_min, h.fit_max)).map_err(|e| e.to_string());
        let checks = regret_checks(&run, h.delta);
        out.push(VariantResult {
            variant,
            run,
            fit,
            checks,
        });
    }
    Ok(out)
}

fn regret_checks(run: &RegretRun, delta: f64) -> RegretChecks {
    let mut c = RegretChecks {
        max_identity_residual: 0.0,
        max_abs_term_a: 0.0,
        max_abs_term_b: 0.0,
        min_step_regret: f64::INFINITY,
        entropy_monotone: true,
        max_gain_sum_error: 0.0,
        max_checkpoint_excess: f64::NEG_INFINITY,
        information_coefficient: None,
        coefficient_consistent: true,
        success_rate: 0.0,
    };
    let (mut episodes, mut successes) = (0usize, 0usize);
    for s in &run.samples {
        let mut h_prev = s.h0;
        let mut gains = 0.0;
        for st in &s.steps {
            c.max_identity_residual = c.max_identity_residual.max((st.term_a + st.term_b - st.regret).abs());
            c.max_abs_term_a = c.max_abs_term_a.max(st.term_a.abs());
            c.max_abs_term_b = c.max_abs_term_b.max(st.term_b.abs());
            c.min_step_regret = c.min_step_regret.min(st.regret);
            if st.entropy > h_prev + NEWINFO_TOL {
                c.entropy_monotone = false;
            }
            h_prev = st.entropy;
            gains += st.gain;
        }
        let drop = s.h0 - h_prev;
        c.max_gain_sum_error = c.max_gain_sum_error.max((gains - drop).abs());
        let k = s.context_updates() as f64;
        c.max_checkpoint_excess = c.max_checkpoint_excess.max(k - (drop / LN_2 + 1.0));
        episodes += s.episodes.len();
        successes += s.episodes.iter().filter(|e| e.final_reward >= 1.0).count();
    }
    c.success_rate = successes as f64 / episodes.max(1) as f64;
    let pooled: Vec<_> = run.samples.iter().flat_map(SampleRun::model_errors).collect();
    if let Ok(gamma) = information_coefficient(&pooled, delta) {
        c.information_coefficient = Some(gamma);
        c.coefficient_consistent = run.samples.iter().all(|s| coefficient_holds(s, gamma));
    }
    c
}

/// Sum of the model errors the coefficient covers, against its bound.
fn coefficient_holds(sample: &SampleRun, gamma: f64) -> bool {
    let covered: f64 = sample
        .model_errors()
        .filter(|m| m.gain > GAIN_FLOOR && m.drop_since_checkpoint <= LN_2 + NEWINFO_TOL)
        .filter(|m| m.error.abs() <= gamma * m.gain.sqrt())
        .map(|m| m.error.abs())
        .sum();
    let t = sample.steps.len() as f64;
    let drop = sample.h0 - sample.steps.last().map_or(sample.h0, |s| s.entropy);
    covered <= gamma * (t * drop.max(0.0)).sqrt() + 1e-9
}

fn regret_artifacts(config: &ExperimentConfig, results: &[VariantResult]) -> BTreeMap<String, String> {
    let mut a = BTreeMap::new();
    let mut fit = String::new();
    let mut log = String::new();
    let mut summary = header(config);
    for r in results {
        let label = &r.variant.label;
        a.insert(format!("{REGRET_FILE_PREFIX}-{label}.tsv"), regret_table(&r.run));
        match &r.fit {
            Ok(f) => {
                let _ = writeln!(
                    fit,
                    "{label}\texponent={}\tintercept={}\tr_squared={}\tfit_range={}..{}",
                    f.exponent, f.intercept, f.r_squared, f.fit_range.0, f.fit_range.1
                );
            }
            Err(e) => {
                let _ = writeln!(fit, "{label}\terror={e}");
            }
        }
        for (i, s) in r.run.samples.iter().take(LOGGED_SAMPLES).enumerate() {
            for (k, lines) in s.episode_logs.iter().enumerate() {
                let _ = writeln!(log, "# {label} sample {i} episode {k}");
                log.push_str(lines);
            }
        }
        let c = &r.checks;
        let curve = &r.run.curve;
        let last = curve.horizons.len() - 1;
        let _ = writeln!(summary, "\n[{label}]");
        let _ = writeln!(summary, "paradigm: {}", r.variant.paradigm.name());
        let _ = writeln!(summary, "learning: {}", r.variant.learning);
        let _ = writeln!(summary, "eta: {}", r.variant.eta);
        let _ = writeln!(summary, "samples: {}", curve.n_prior_samples);
        let _ = writeln!(
            summary,
            "regret at T={}: {} +- {}",
            curve.horizons[last], curve.cumulative_regret[last], curve.stderr[last]
        );
        match &r.fit {
            Ok(f) => {
                let _ = writeln!(summary, "fit exponent: {} (r^2 {})", f.exponent, f.r_squared);
            }
            Err(e) => {
                let _ = writeln!(summary, "fit: {e}");
            }
        }
        let _ = writeln!(summary, "termA at T max: {}", r.run.term_a[last]);
        let _ = writeln!(summary, "termB at T max: {}", r.run.term_b[last]);
        let _ = writeln!(summary, "max per-step |termA + termB - regret|: {}", c.max_identity_residual);
        let _ = writeln!(summary, "max per-step |termA|: {}", c.max_abs_term_a);
        let _ = writeln!(summary, "max per-step |termB|: {}", c.max_abs_term_b);
        let _ = writeln!(summary, "min per-step regret: {}", c.min_step_regret);
        let _ = writeln!(summary, "entropy non-increasing: {}", c.entropy_monotone);
        let _ = writeln!(summary, "max |sum gains - (H0 - HT)|: {}", c.max_gain_sum_error);
        let _ = writeln!(summary, "max K - ((H0 - HT)/ln2 + 1): {}", c.max_checkpoint_excess);
        match c.information_coefficient {
            Some(g) => {
                let _ = writeln!(summary, "information coefficient (delta {}): {g}", config.harness.delta);
            }
            None => {
                let _ = writeln!(summary, "information coefficient: no eligible steps");
            }
        }
        let _ = writeln!(summary, "coefficient self-consistent: {}", c.coefficient_consistent);
        let _ = writeln!(summary, "episode success rate: {}", c.success_rate);
    }
    let kind = config.kind();
    a.insert(FIT_FILE.into(), fit);
    a.insert(GAP_FILE.into(), not_measured(kind));
    a.insert(EPISODES_FILE.into(), log);
    a.insert(SUMMARY_FILE.into(), summary);
    a
}

fn header(config: &ExperimentConfig) -> String {
    format!(
        "experiment: {}\nkind: {}\nseed: {}\ndescription: {}\n",
        config.experiment.name,
        config.experiment.kind,
        config.experiment.seed,
        config.experiment.description
    )
}

fn gap_experiment(config: &ExperimentConfig) -> Result<GapResult, CliError> {
    let prior = experiment_prior(config)?;
    let eta = config.observation.eta[0];
    let obs = prior.observation_model(eta)?;
    let spec = config.spec();
    let tol = config.harness.tol;
    let lookaheads = config.harness.lookaheads.clone();
    let planners = lookaheads
        .iter()
        .map(|&u| {
            let mut c = config.planner()?;
            c.lookahead = u;
            c.validate()?;
            Ok(c)
        })
        .collect::<kbreason::Result<Vec<_>>>()?;
    let questions: Vec<Arc<Question>> = prior
        .questions()
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(q, _)| Arc::new(q.clone()))
        .collect();
    let per_env = (0..config.harness.gap_environments)
        .into_par_iter()
        .map(|i| {
            let theta = sample_env(&prior, seed::derive(config.experiment.seed, stream::ENVIRONMENT, i as u64));
            let mut worst = vec![f64::NEG_INFINITY; planners.len()];
            for q in &questions {
                for (w, p) in worst.iter_mut().zip(&planners) {
                    let g = planner_optimality_gap(&theta, &obs, q.clone(), p, &spec, tol)?;
                    *w = w.max(g.max_gap);
                }
            }
            Ok(worst)
        })
        .collect::<kbreason::Result<Vec<_>>>()?;
    let suite_max_gap = (0..planners.len())
        .map(|j| per_env.iter().map(|w| w[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (env, q) = deceptive_instance();
    let noiseless = ObservationModel::noiseless();
    let deceptive_max_gap = planners
        .iter()
        .map(|p| Ok(planner_optimality_gap(&env, &noiseless, q.clone(), p, &spec, tol)?.max_gap))
        .collect::<kbreason::Result<Vec<_>>>()?;
    Ok(GapResult {
        lookaheads,
        suite_max_gap,
        suite_cases: per_env.len() * questions.len(),
        deceptive_max_gap,
    })
}

fn gap_artifacts(config: &ExperimentConfig, r: &GapResult) -> BTreeMap<String, String> {
    let kind = config.kind();
    let mut gap = String::from("# kbreason planner gap v1\nU\tsuite_max_gap\tdeceptive_max_gap\n");
    for i in 0..r.lookaheads.len() {
        let _ = writeln!(gap, "{}\t{}\t{}", r.lookaheads[i], r.suite_max_gap[i], r.deceptive_max_gap[i]);
    }
    let mut summary = header(config);
    let _ = writeln!(summary, "environment/question pairs: {}", r.suite_cases);
    for i in 0..r.lookaheads.len() {
        let _ = writeln!(
            summary,
            "U={}: suite max gap {}, deceptive max gap {}",
            r.lookaheads[i], r.suite_max_gap[i], r.deceptive_max_gap[i]
        );
    }
    BTreeMap::from([
        (format!("{REGRET_FILE_PREFIX}.tsv"), format!("{REGRET_TABLE_HEADER}\n{}", not_measured(kind))),
        (FIT_FILE.into(), not_measured(kind)),
        (GAP_FILE.into(), gap),
        (EPISODES_FILE.into(), not_measured(kind)),
        (SUMMARY_FILE.into(), summary),
    ])
}

/// How many draws to try for a question the sampled graph can answer.
const QUESTION_TRIES: u64 = 10_000;

fn outer_experiment(config: &ExperimentConfig) -> Result<(OuterResult, Vec<Vec<OuterRound>>), CliError> {
    let prior = experiment_prior(config)?;
    let planner = config.planner()?;
    let loop_config = config.loop_config()?;
    let eta = config.observation.eta[0];
    let obs = prior.observation_model(eta)?;
    let paradigm = config.agent.paradigms[0].clone();
    let learning = config.agent.learning[0];
    let rounds = config.harness.rounds;
    let runs = (0..config.harness.seeds)
        .into_par_iter()
        .map(|s| {
            let seed_s = seed::derive(config.experiment.seed, stream::SAMPLE, s as u64);
            let truth = sample_env(&prior, seed::derive(seed_s, stream::ENVIRONMENT, 0));
            let question = (0..QUESTION_TRIES)
                .map(|j| prior.sample_question(seed::derive(seed_s, stream::QUESTION, j)))
                .find(|q| truth.answers(q))
                .ok_or_else(|| kbreason::Error::InvalidArgument("no answerable question for the sampled graph".into()))?;
            let chain = truth.answer_chain(&question);
            let cut = chain[(seed::derive(seed_s, stream::STEP, 0) % chain.len() as u64) as usize];
            let kb = truth.clone().with_edge(cut.slot(), None)?;
            let env = KnowledgeEnv::with_kb(truth, kb);
            let factory = |round: usize| {
                let agent = AgentConfig {
                    planner,
                    learning,
                    seed: seed::derive(seed_s, stream::AGENT, round as u64),
                };
                make_agent(&paradigm, &prior, eta, &agent)
            };
            run_outer_loop(
                factory,
                &env,
                &obs,
                Arc::new(question),
                correct_first_wrong_slot,
                rounds,
                config.loop_kind(),
                &loop_config,
                seed_s,
            )
        })
        .collect::<kbreason::Result<Vec<_>>>()?;
    let success_by_round = (0..rounds)
        .map(|r| runs.iter().filter(|rs| rs[r].record.final_reward() >= 1.0).count() as f64 / runs.len() as f64)
        .collect();
    Ok((
        OuterResult {
            seeds: runs.len(),
            success_by_round,
        },
        runs,
    ))
}

fn outer_artifacts(config: &ExperimentConfig, r: &OuterResult, runs: &[Vec<OuterRound>]) -> BTreeMap<String, String> {
    let kind = config.kind();
    let mut log = String::new();
    for (s, rounds) in runs.iter().take(LOGGED_SAMPLES).enumerate() {
        for (k, round) in rounds.iter().enumerate() {
            let edits: Vec<String> = round
                .edits
                .iter()
                .map(|e| format!("{}->{}", e.slot, kbreason::mdp::DisplayTail(e.new_tail)))
                .collect();
            let _ = writeln!(log, "# seed {s} round {} answer={} edits=[{}]", k + 1, round.record.answer_text(), edits.join(" "));
            log.push_str(&round.record.log());
        }
    }
    let mut summary = header(config);
    let _ = writeln!(summary, "seeds: {}", r.seeds);
    for (k, rate) in r.success_by_round.iter().enumerate() {
        let _ = writeln!(summary, "round {}: success rate {rate}", k + 1);
    }
    match r.first_full_round() {
        Some(k) => {
            let _ = writeln!(summary, "all seeds succeed from round {k}");
        }
        None => {
            let _ = writeln!(summary, "no round where all seeds succeed");
        }
    }
    let _ = writeln!(summary, "never degrades: {}", r.never_degrades());
    BTreeMap::from([
        (format!("{REGRET_FILE_PREFIX}.tsv"), format!("{REGRET_TABLE_HEADER}\n{}", not_measured(kind))),
        (FIT_FILE.into(), not_measured(kind)),
        (GAP_FILE.into(), not_measured(kind)),
        (EPISODES_FILE.into(), log),
        (SUMMARY_FILE.into(), summary),
    ])
}

/// Longest random observation sequence per oracle case.
const ORACLE_MAX_OBSERVATIONS: usize = 15;

/// Response likelihood straight from the noise definition: right with
/// 1 - eta, otherwise uniform over the other tails in the slot's support.
fn support_likelihood(support: &SlotSupport, eta: f64, truth: Tail, observed: Tail) -> f64 {
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

/// Max deviation between the factored posterior and the enumerated joint
/// posterior, over every candidate graph and every slot marginal.
fn oracle_case(config: &ExperimentConfig, eta: f64, case: usize) -> kbreason::Result<OracleCase> {
    let p = &config.prior;
    let case_seed = seed::derive(config.experiment.seed, stream::SAMPLE, case as u64);
    let prior = EnvPrior::uniform_chain(p.entities, p.relations, p.hops, p.support_size, p.include_none, case_seed)?;
    let obs = prior.observation_model(eta)?;
    let mut rng = seed::rng(seed::derive(case_seed, stream::EPISODE, eta.to_bits()));
    let truth = sample_env(&prior, rng.gen());
    let slots: Vec<Slot> = all_slots(p.entities, p.relations).collect();
    let n_obs = rng.gen_range(1..=ORACLE_MAX_OBSERVATIONS);
    let facts = (0..n_obs)
        .map(|_| {
            let slot = *slots.choose(&mut rng).expect("at least one slot");
            query(&truth, &obs, slot, rng.gen())
        })
        .collect::<kbreason::Result<Vec<Fact>>>()?;
    let mut factored = Posterior::from_prior(&prior, obs);
    for f in &facts {
        factored.observe(f)?;
    }

    let supports: Vec<&SlotSupport> = prior.supports().map(|(_, s)| s).collect();
    let mut joint: Vec<(Vec<Tail>, f64)> = vec![(Vec::new(), 1.0)];
    for s in &supports {
        joint = joint
            .into_iter()
            .flat_map(|(tails, w)| {
                s.candidates.iter().map(move |&(t, q)| {
                    let mut next = tails.clone();
                    next.push(t);
                    (next, w * q)
                })
            })
            .collect();
    }
    for (tails, w) in joint.iter_mut() {
        for f in &facts {
            let i = slots.iter().position(|s| *s == f.slot()).expect("fact slot in vocabulary");
            *w *= support_likelihood(supports[i], eta, tails[i], f.tail);
        }
    }
    let z: f64 = joint.iter().map(|(_, w)| w).sum();
    let mut max_error: f64 = 0.0;
    for (tails, w) in &joint {
        let product: f64 = slots.iter().zip(tails).map(|(s, &t)| factored.prob(*s, t)).product();
        max_error = max_error.max((product - w / z).abs());
    }
    for (i, slot) in slots.iter().enumerate() {
        for &(tail, p) in factored.slot(*slot)? {
            let brute: f64 = joint.iter().filter(|(t, _)| t[i] == tail).map(|(_, w)| w / z).sum();
            max_error = max_error.max((p - brute).abs());
        }
    }
    Ok(OracleCase {
        eta,
        case,
        observations: facts.len(),
        candidates: joint.len(),
        max_error,
    })
}

fn oracle_experiment(config: &ExperimentConfig) -> Result<OracleResult, CliError> {
    let jobs: Vec<(f64, usize)> = config
        .observation
        .eta
        .iter()
        .flat_map(|&eta| (0..config.harness.oracle_cases).map(move |c| (eta, c)))
        .collect();
    let cases = jobs
        .into_par_iter()
        .map(|(eta, c)| oracle_case(config, eta, c))
        .collect::<kbreason::Result<Vec<_>>>()?;
    Ok(OracleResult { cases })
}

fn oracle_artifacts(config: &ExperimentConfig, r: &OracleResult) -> BTreeMap<String, String> {
    let kind = config.kind();
    let mut table = String::from("# kbreason posterior oracle v1\neta\tcase\tobservations\tcandidates\tmax_error\n");
    for c in &r.cases {
        let _ = writeln!(table, "{}\t{}\t{}\t{}\t{}", c.eta, c.case, c.observations, c.candidates, c.max_error);
    }
    let mut summary = header(config);
    for &eta in &config.observation.eta {
        let worst = r.cases.iter().filter(|c| c.eta == eta).map(|c| c.max_error).fold(0.0, f64::max);
        let n = r.cases.iter().filter(|c| c.eta == eta).count();
        let _ = writeln!(summary, "eta {eta}: {n} cases, max deviation {worst}");
    }
    let _ = writeln!(summary, "max deviation overall: {}", r.max_error());
    BTreeMap::from([
        (format!("{REGRET_FILE_PREFIX}.tsv"), format!("{REGRET_TABLE_HEADER}\n{}", not_measured(kind))),
        (FIT_FILE.into(), not_measured(kind)),
        (GAP_FILE.into(), not_measured(kind)),
        (EPISODES_FILE.into(), not_measured(kind)),
        (ORACLE_FILE.into(), table),
        (SUMMARY_FILE.into(), summary),
    ])
}

/// Human-readable outcome for `run --format text`.
pub fn render_text(output: &ExperimentOutput) -> String {
    output.artifacts.get(SUMMARY_FILE).cloned().unwrap_or_default()
}

/// The experiment's main table for `run --format table`.
pub fn render_table(output: &ExperimentOutput) -> String {
    match &output.result {
        ExperimentResult::Regret(results) => results
            .iter()
            .map(|r| format!("# variant {}\n{}", r.variant.label, regret_table(&r.run)))
            .collect(),
        ExperimentResult::Gap(_) => output.artifacts[GAP_FILE].clone(),
        ExperimentResult::Outer(r) => {
            let mut t = String::from("round\tsuccess_rate\n");
            for (k, rate) in r.success_by_round.iter().enumerate() {
                let _ = writeln!(t, "{}\t{rate}", k + 1);
            }
            t
        }
        ExperimentResult::Oracle(_) => output.artifacts[ORACLE_FILE].clone(),
    }
}

