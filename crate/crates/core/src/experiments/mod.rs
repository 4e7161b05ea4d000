//! Reproducible desk-scale experiments.
//!
//! Every experiment writes rows `quantity,sample,x,value` to `report.csv`
//! and its resolved parameters to `manifest.txt`; the verdict is a pure
//! function of those two files, so [`verify`] recomputes it without
//! re-simulating.

mod config;
mod lifts;
mod report;
mod solutions;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use config::Config;
pub use lifts::{
    EnhancedConvergenceParams, MixedConvergenceParams, PureAreaParams, StrictEmbeddingParams, ZeroTranslationParams,
};
pub use report::{medians, read_rows, Check, Report, Row, Verdict, VerifyOutcome};
pub use solutions::{LogPositivityParams, RenormGroupParams, SupportApproxParams};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    PureArea,
    EnhancedConvergence,
    MixedConvergence,
    ZeroTranslation,
    SupportApprox,
    RenormGroup,
    LogPositivity,
    StrictEmbedding,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::PureArea,
        ExperimentKind::EnhancedConvergence,
        ExperimentKind::MixedConvergence,
        ExperimentKind::ZeroTranslation,
        ExperimentKind::SupportApprox,
        ExperimentKind::RenormGroup,
        ExperimentKind::LogPositivity,
        ExperimentKind::StrictEmbedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PureArea => "pure-area",
            ExperimentKind::EnhancedConvergence => "enhanced-convergence",
            ExperimentKind::MixedConvergence => "mixed-convergence",
            ExperimentKind::ZeroTranslation => "zero-translation",
            ExperimentKind::SupportApprox => "support-approx",
            ExperimentKind::RenormGroup => "renorm-group",
            ExperimentKind::LogPositivity => "log-positivity",
            ExperimentKind::StrictEmbedding => "strict-embedding",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Runs `kind` with parameters read from `cfg` (defaults for missing keys).
pub fn run(kind: ExperimentKind, cfg: &Config) -> Result<Report> {
    match kind {
        ExperimentKind::PureArea => lifts::exp_pure_area(&PureAreaParams::from_config(cfg)?),
        ExperimentKind::EnhancedConvergence => lifts::exp_enhanced_convergence(&EnhancedConvergenceParams::from_config(cfg)?),
        ExperimentKind::MixedConvergence => lifts::exp_mixed_convergence(&MixedConvergenceParams::from_config(cfg)?),
        ExperimentKind::ZeroTranslation => lifts::exp_zero_translation(&ZeroTranslationParams::from_config(cfg)?),
        ExperimentKind::StrictEmbedding => lifts::exp_strict_embedding(&StrictEmbeddingParams::from_config(cfg)?),
        ExperimentKind::SupportApprox => solutions::exp_support_approx(&SupportApproxParams::from_config(cfg)?),
        ExperimentKind::RenormGroup => solutions::exp_renorm_group(&RenormGroupParams::from_config(cfg)?),
        ExperimentKind::LogPositivity => solutions::exp_log_positivity(&LogPositivityParams::from_config(cfg)?),
    }
}

/// Verdict of `kind` from its resolved parameters and measured rows.
pub fn judge(kind: ExperimentKind, cfg: &Config, rows: &[Row]) -> Result<Verdict> {
    Ok(match kind {
        ExperimentKind::PureArea => lifts::judge_pure_area(&PureAreaParams::from_config(cfg)?, rows),
        ExperimentKind::EnhancedConvergence => lifts::judge_enhanced_convergence(&EnhancedConvergenceParams::from_config(cfg)?, rows),
        ExperimentKind::MixedConvergence => lifts::judge_mixed_convergence(&MixedConvergenceParams::from_config(cfg)?, rows),
        ExperimentKind::ZeroTranslation => lifts::judge_zero_translation(&ZeroTranslationParams::from_config(cfg)?, rows),
        ExperimentKind::StrictEmbedding => lifts::judge_strict_embedding(&StrictEmbeddingParams::from_config(cfg)?, rows),
        ExperimentKind::SupportApprox => solutions::judge_support_approx(&SupportApproxParams::from_config(cfg)?, rows),
        ExperimentKind::RenormGroup => solutions::judge_renorm_group(&RenormGroupParams::from_config(cfg)?, rows),
        ExperimentKind::LogPositivity => solutions::judge_log_positivity(&LogPositivityParams::from_config(cfg)?, rows),
    })
}

/// Recomputes the verdict stored in `dir` from its manifest and CSV.
pub fn verify(dir: impl AsRef<Path>) -> Result<VerifyOutcome> {
    report::verify_dir(dir.as_ref())
}

/// Runs `f` for every sample in parallel and concatenates the rows in
/// sample order, so output is independent of the worker count.
pub(crate) fn par_samples<F>(samples: u64, f: F) -> Result<Vec<Row>>
where
    F: Fn(u64) -> Result<Vec<Row>> + Sync + Send,
{
    use rayon::prelude::*;
    let parts: Vec<Vec<Row>> = (0..samples).into_par_iter().map(&f).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
