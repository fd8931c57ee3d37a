//! Experiment configuration files.
//!
//! A config is TOML restricted to flat `key = value` pairs under the section
//! headers `[experiment]`, `[prior]`, `[agent]`, `[planner]`, `[loop]`,
//! `[observation]` and `[harness]`. Every key except `experiment.name`,
//! `experiment.kind` and `experiment.seed` has a default. Parsing keeps every
//! field optional so validation can report all problems at once.

use std::f64::consts::LN_2;
use std::fmt;
use std::path::Path;

use kbreason::agent::{ModelMode, Paradigm, PlannerConfig};
use kbreason::env::{chain_questions, EnvPrior};
use kbreason::harness::{RegretSettings, BURN_IN, MIN_FIT_POINTS, MIN_SAMPLES};
use kbreason::loops::{LoopConfig, LoopKind};
use kbreason::mdp::DiscountedMdpSpec;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// What an experiment measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Regret curves, fits and decomposition for every agent variant.
    Regret,
    /// Planner value gap against value iteration, per lookahead.
    PlannerGap,
    /// Outer feedback loop on a knowledge base with a missing edge.
    OuterLoop,
    /// Factored posterior against brute-force enumeration.
    PosteriorOracle,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Regret,
        ExperimentKind::PlannerGap,
        ExperimentKind::OuterLoop,
        ExperimentKind::PosteriorOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Regret => "regret",
            ExperimentKind::PlannerGap => "planner-gap",
            ExperimentKind::OuterLoop => "outer-loop",
            ExperimentKind::PosteriorOracle => "posterior-oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A proposal or beam limit: a count, or `"all"` for exhaustive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    All,
    Count(usize),
}

impl Limit {
    pub fn get(self) -> usize {
        match self {
            Limit::All => usize::MAX,
            Limit::Count(n) => n,
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::All => f.write_str("all"),
            Limit::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Limit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Limit::All => s.serialize_str("all"),
            Limit::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Limit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) if n >= 0 => Ok(Limit::Count(n as usize)),
            Raw::Count(n) => Err(serde::de::Error::custom(format!("expected a count or \"all\", got {n}"))),
            Raw::Word(w) if w == "all" => Ok(Limit::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected a count or \"all\", got {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<RawExperiment>,
    prior: Option<RawPrior>,
    agent: Option<RawAgent>,
    planner: Option<RawPlanner>,
    #[serde(rename = "loop")]
    loop_: Option<RawLoop>,
    observation: Option<RawObservation>,
    harness: Option<RawHarness>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    kind: Option<String>,
    seed: Option<u64>,
    description: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    entities: Option<usize>,
    relations: Option<usize>,
    hops: Option<usize>,
    support_size: Option<usize>,
    include_none: Option<bool>,
    question_zipf: Option<f64>,
    point_mass: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    paradigms: Option<Vec<String>>,
    learning: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    lookahead: Option<usize>,
    beam_width: Option<Limit>,
    proposals: Option<Limit>,
    model_mode: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoop {
    kind: Option<String>,
    max_steps: Option<usize>,
    reward_threshold: Option<f64>,
    newinfo_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservation {
    eta: Option<Vec<f64>>,
    llm_only_eta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    horizons: Option<Vec<usize>>,
    n_samples: Option<usize>,
    gamma: Option<f64>,
    tol: Option<f64>,
    delta: Option<f64>,
    fit_min: Option<usize>,
    fit_max: Option<usize>,
    lookaheads: Option<Vec<usize>>,
    gap_environments: Option<usize>,
    rounds: Option<usize>,
    seeds: Option<usize>,
    oracle_cases: Option<usize>,
}

/// A fully resolved experiment. Serializing it gives the canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub prior: PriorSection,
    pub agent: AgentSection,
    pub planner: PlannerSection,
    #[serde(rename = "loop")]
    pub loop_: LoopSection,
    pub observation: ObservationSection,
    pub harness: HarnessSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub description: String,
}

/// Generator recipe for a uniform chain prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub entities: usize,
    pub relations: usize,
    pub hops: usize,
    pub support_size: usize,
    pub include_none: bool,
    /// Zipf exponent of the question distribution; 0 is uniform.
    pub question_zipf: f64,
    /// Collapse the prior onto one graph drawn from it.
    pub point_mass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub paradigms: Vec<String>,
    /// One variant per entry; false freezes the posterior at the prior.
    pub learning: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub lookahead: usize,
    pub beam_width: Limit,
    pub proposals: Limit,
    pub model_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSection {
    pub kind: String,
    pub max_steps: usize,
    pub reward_threshold: f64,
    pub newinfo_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub eta: Vec<f64>,
    /// Noise the llm-only paradigm runs against.
    pub llm_only_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    pub horizons: Vec<usize>,
    pub n_samples: usize,
    pub gamma: f64,
    pub tol: f64,
    pub delta: f64,
    pub fit_min: usize,
    pub fit_max: usize,
    pub lookaheads: Vec<usize>,
    pub gap_environments: usize,
    pub rounds: usize,
    pub seeds: usize,
    pub oracle_cases: usize,
}

/// One problem found in a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// `section.key`, or `config` for syntax errors.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn require<T>(&mut self, field: &str, value: Option<T>, fallback: T) -> T {
        match value {
            Some(v) => v,
            None => {
                self.push(field, "missing required key");
                fallback
            }
        }
    }
}

/// Parses and validates config text, returning every diagnostic on failure.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| vec![syntax_diagnostic(text, &e)])?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<Result<ExperimentConfig, Vec<Diagnostic>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text))
}

fn syntax_diagnostic(text: &str, e: &toml::de::Error) -> Diagnostic {
    let location = e.span().map(|span| {
        let before = &text[..span.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        format!("line {line}, column {column}: ")
    });
    Diagnostic {
        field: "config".into(),
        message: format!("{}{}", location.unwrap_or_default(), e.message()),
    }
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut d = Collector(Vec::new());
    let e = raw.experiment.unwrap_or_default();
    let p = raw.prior.unwrap_or_default();
    let a = raw.agent.unwrap_or_default();
    let pl = raw.planner.unwrap_or_default();
    let l = raw.loop_.unwrap_or_default();
    let o = raw.observation.unwrap_or_default();
    let h = raw.harness.unwrap_or_default();

    let horizons = h.horizons.unwrap_or_else(|| vec![125, 250, 500, 1000, 2000]);
    let config = ExperimentConfig {
        experiment: ExperimentSection {
            name: d.require("experiment.name", e.name, String::new()),
            kind: d.require("experiment.kind", e.kind, ExperimentKind::Regret.name().into()),
            seed: match e.seed {
                Some(s) => s,
                None => {
                    d.push("experiment.seed", "missing; `seed` is mandatory (no wall-clock entropy)");
                    0
                }
            },
            description: e.description.unwrap_or_default(),
        },
        prior: PriorSection {
            entities: p.entities.unwrap_or(6),
            relations: p.relations.unwrap_or(3),
            hops: p.hops.unwrap_or(3),
            support_size: p.support_size.unwrap_or(2),
            include_none: p.include_none.unwrap_or(false),
            question_zipf: p.question_zipf.unwrap_or(0.0),
            point_mass: p.point_mass.unwrap_or(false),
        },
        agent: AgentSection {
            paradigms: a.paradigms.unwrap_or_else(|| vec![Paradigm::LlmOtimesKg.name().into()]),
            learning: a.learning.unwrap_or_else(|| vec![true]),
        },
        planner: PlannerSection {
            lookahead: pl.lookahead.unwrap_or(3),
            beam_width: pl.beam_width.unwrap_or(Limit::All),
            proposals: pl.proposals.unwrap_or(Limit::All),
            model_mode: pl.model_mode.unwrap_or_else(|| ModelMode::PosteriorSample.name().into()),
        },
        loop_: LoopSection {
            kind: l.kind.unwrap_or_else(|| "adapted".into()),
            max_steps: l.max_steps.unwrap_or(12),
            reward_threshold: l.reward_threshold.unwrap_or(1.0),
            newinfo_threshold: l.newinfo_threshold.unwrap_or(LN_2),
        },
        observation: ObservationSection {
            eta: o.eta.unwrap_or_else(|| vec![0.0]),
            llm_only_eta: o.llm_only_eta.unwrap_or(0.3),
        },
        harness: HarnessSection {
            fit_min: h.fit_min.unwrap_or(BURN_IN),
            fit_max: h.fit_max.unwrap_or_else(|| horizons.last().copied().unwrap_or(0)),
            horizons,
            n_samples: h.n_samples.unwrap_or(200),
            gamma: h.gamma.unwrap_or(0.95),
            tol: h.tol.unwrap_or(1e-9),
            delta: h.delta.unwrap_or(0.1),
            lookaheads: h.lookaheads.unwrap_or_else(|| vec![1, 2, 3, 4]),
            gap_environments: h.gap_environments.unwrap_or(20),
            rounds: h.rounds.unwrap_or(5),
            seeds: h.seeds.unwrap_or(50),
            oracle_cases: h.oracle_cases.unwrap_or(100),
        },
    };
    d.0.extend(validate(&config));
    if d.0.is_empty() {
        Ok(config)
    } else {
        Err(d.0)
    }
}

/// Every invariant violation of a resolved config.
pub fn validate(c: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut d = Collector(Vec::new());
    let name = &c.experiment.name;
    if !name.is_empty() && !name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
        d.push("experiment.name", format!("{name:?} may only use letters, digits, '-' and '_'"));
    }
    let kind = ExperimentKind::parse(&c.experiment.kind);
    if kind.is_none() {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        d.push("experiment.kind", format!("unknown kind {:?}; expected one of {}", c.experiment.kind, names.join(", ")));
    }

    let p = &c.prior;
    if p.entities == 0 || p.entities > usize::from(u16::MAX) {
        d.push("prior.entities", format!("must lie in 1..=65535, got {}", p.entities));
    }
    if p.relations == 0 || p.relations > usize::from(u16::MAX) {
        d.push("prior.relations", format!("must lie in 1..=65535, got {}", p.relations));
    }
    if p.hops == 0 {
        d.push("prior.hops", "must be at least 1");
    }
    if p.support_size == 0 || p.support_size > p.entities {
        d.push("prior.support_size", format!("must lie in 1..=entities ({}), got {}", p.entities, p.support_size));
    }
    if !(p.question_zipf.is_finite() && p.question_zipf >= 0.0) {
        d.push("prior.question_zipf", format!("must be finite and non-negative, got {}", p.question_zipf));
    }
    if p.entities > 0 && p.relations > 0 && p.hops > 0 && chain_questions(p.entities, p.relations, p.hops).is_err() {
        d.push("prior.hops", "too many chain questions to enumerate");
    }

    if c.agent.paradigms.is_empty() {
        d.push("agent.paradigms", "needs at least one paradigm");
    }
    for name in &c.agent.paradigms {
        if Paradigm::parse(name).is_err() {
            d.push("agent.paradigms", format!("unknown paradigm {name:?}"));
        }
    }
    if c.agent.learning.is_empty() {
        d.push("agent.learning", "needs at least one entry");
    }

    let pl = &c.planner;
    if pl.lookahead == 0 {
        d.push("planner.lookahead", "PlannerConfig invariant \"U >= 1\" violated");
    }
    if pl.beam_width == Limit::Count(0) {
        d.push("planner.beam_width", "PlannerConfig invariant \"W >= 1\" violated");
    }
    if pl.proposals == Limit::Count(0) {
        d.push("planner.proposals", "PlannerConfig invariant \"N >= 1\" violated");
    }
    if pl.beam_width.get() > pl.proposals.get() {
        d.push(
            "planner.beam_width",
            format!(
                "W = {} exceeds N = {}; PlannerConfig invariant \"N ≥ W\" violated",
                pl.beam_width, pl.proposals
            ),
        );
    }
    if ModelMode::parse(&pl.model_mode).is_err() {
        d.push("planner.model_mode", format!("unknown model mode {:?}", pl.model_mode));
    }

    let l = &c.loop_;
    if parse_loop_kind(&l.kind).is_none() {
        d.push("loop.kind", format!("unknown loop kind {:?}; expected inner or adapted", l.kind));
    }
    if l.max_steps == 0 {
        d.push("loop.max_steps", "LoopConfig invariant \"T >= 1\" violated");
    }
    if !(0.0..=1.0).contains(&l.reward_threshold) {
        d.push("loop.reward_threshold", format!("LoopConfig invariant \"0 <= R <= 1\" violated by {}", l.reward_threshold));
    }
    if !(l.newinfo_threshold >= 0.0 && l.newinfo_threshold.is_finite()) {
        d.push("loop.newinfo_threshold", format!("must be finite and non-negative, got {}", l.newinfo_threshold));
    }

    if c.observation.eta.is_empty() {
        d.push("observation.eta", "needs at least one noise level");
    }
    for &eta in &c.observation.eta {
        if !(0.0..1.0).contains(&eta) {
            d.push("observation.eta", format!("eta = {eta} violates ObservationModel invariant \"0 <= eta < 1\""));
        }
    }
    let llm = c.observation.llm_only_eta;
    if !(llm > 0.0 && llm < 1.0) {
        d.push(
            "observation.llm_only_eta",
            format!("eta = {llm} violates ObservationModel invariant \"0 <= eta < 1\" or is not positive"),
        );
    }

    let h = &c.harness;
    if h.horizons.is_empty() || h.horizons.contains(&0) {
        d.push("harness.horizons", "must be a non-empty list of positive integers");
    }
    if h.horizons.windows(2).any(|w| w[0] >= w[1]) {
        d.push("harness.horizons", "must be strictly increasing");
    }
    if !(h.gamma > 0.0 && h.gamma < 1.0) {
        d.push("harness.gamma", format!("must lie strictly inside (0, 1), got {}", h.gamma));
    }
    if !(h.tol > 0.0) {
        d.push("harness.tol", format!("must be positive, got {}", h.tol));
    }
    if !(h.delta > 0.0 && h.delta <= 1.0) {
        d.push("harness.delta", format!("must lie in (0, 1], got {}", h.delta));
    }
    if h.lookaheads.is_empty() || h.lookaheads.contains(&0) {
        d.push("harness.lookaheads", "must be a non-empty list of positive integers");
    }
    for (field, v) in [
        ("harness.gap_environments", h.gap_environments),
        ("harness.rounds", h.rounds),
        ("harness.seeds", h.seeds),
        ("harness.oracle_cases", h.oracle_cases),
    ] {
        if v == 0 {
            d.push(field, "must be at least 1");
        }
    }

    match kind {
        Some(ExperimentKind::Regret) => {
            if h.n_samples < MIN_SAMPLES {
                d.push("harness.n_samples", format!("bayesian regret needs at least {MIN_SAMPLES} prior samples, got {}", h.n_samples));
            }
            let in_range = h.horizons.iter().filter(|&&t| t >= h.fit_min && t <= h.fit_max).count();
            if in_range < MIN_FIT_POINTS {
                d.push(
                    "harness.fit_min",
                    format!("fit range {}..={} holds {in_range} horizons; FitReport needs at least {MIN_FIT_POINTS}", h.fit_min, h.fit_max),
                );
            }
        }
        Some(ExperimentKind::OuterLoop) if !p.include_none => {
            d.push("prior.include_none", "outer-loop experiments need \"no edge\" in the prior support");
        }
        Some(ExperimentKind::PosteriorOracle) => {
            if p.point_mass {
                d.push("prior.point_mass", "posterior-oracle experiments need an uncertain prior");
            }
            let candidates = (p.support_size + usize::from(p.include_none)) as f64;
            let count = candidates.powi((p.entities * p.relations) as i32);
            if count > 4096.0 {
                d.push("prior.support_size", format!("{count} candidate graphs is too many to enumerate (limit 4096)"));
            }
        }
        _ => {}
    }
    d.0
}

pub fn parse_loop_kind(s: &str) -> Option<LoopKind> {
    match s {
        "inner" => Some(LoopKind::Inner),
        "adapted" => Some(LoopKind::Adapted),
        _ => None,
    }
}

impl ExperimentConfig {
    /// The canonical text form; parsing it gives back `self`.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> ExperimentKind {
        ExperimentKind::parse(&self.experiment.kind).expect("validated kind")
    }

    /// The generated prior (before any point-mass collapse).
    pub fn base_prior(&self) -> kbreason::Result<EnvPrior> {
        let p = &self.prior;
        EnvPrior::uniform_chain(p.entities, p.relations, p.hops, p.support_size, p.include_none, self.experiment.seed)?
            .with_zipf_questions(p.question_zipf, self.experiment.seed)
    }

    pub fn spec(&self) -> DiscountedMdpSpec {
        DiscountedMdpSpec::new(self.harness.gamma).expect("validated gamma")
    }

    pub fn planner(&self) -> kbreason::Result<PlannerConfig> {
        let pl = &self.planner;
        PlannerConfig::new(
            pl.lookahead,
            pl.beam_width.get(),
            pl.proposals.get(),
            self.harness.gamma,
            ModelMode::parse(&pl.model_mode)?,
        )
    }

    pub fn loop_kind(&self) -> LoopKind {
        parse_loop_kind(&self.loop_.kind).expect("validated loop kind")
    }

    pub fn loop_config(&self) -> kbreason::Result<LoopConfig> {
        let l = &self.loop_;
        LoopConfig::new(l.max_steps, l.reward_threshold, l.newinfo_threshold)
    }

    pub fn regret_settings(&self, eta: f64) -> kbreason::Result<RegretSettings> {
        let h = &self.harness;
        let mut s = RegretSettings::new(h.horizons.clone(), h.n_samples, self.spec(), self.experiment.seed);
        s.loop_kind = self.loop_kind();
        s.loop_config = self.loop_config()?;
        s.eta = eta;
        s.tol = h.tol;
        Ok(s)
    }
}
