//! Regret, optimality-gap and information-coefficient measurements.

mod fit;
mod gap;
mod oracle;
mod regret;

use std::fmt::Write as _;

pub use fit::{
    fit_after_burn_in, fit_regret_exponent, information_coefficient, quantile, FitReport, ModelErrorSample, BURN_IN,
    GAIN_FLOOR, MIN_FIT_POINTS,
};
pub use gap::{deceptive_instance, planner_optimality_gap, OptimalityGapReport};
pub use oracle::ValueCache;
pub use regret::{
    bayesian_regret, decompose_regret, run_regret, EpisodeStats, RegretCurve, RegretRun, RegretSettings, SampleRun,
    StepTrace, LOGGED_EPISODES, MIN_SAMPLES,
};

pub const REGRET_TABLE_HEADER: &str = "# kbreason regret v1";

/// Tab-separated regret table: header line, column names, one row per horizon.
pub fn regret_table(run: &RegretRun) -> String {
    let mut out = format!("{REGRET_TABLE_HEADER}\nT\tregret_mean\tregret_stderr\ttermA\ttermB\tH0_minus_HT\n");
    let c = &run.curve;
    for i in 0..c.horizons.len() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.horizons[i], c.cumulative_regret[i], c.stderr[i], run.term_a[i], run.term_b[i], run.entropy_drop[i]
        );
    }
    out
}
