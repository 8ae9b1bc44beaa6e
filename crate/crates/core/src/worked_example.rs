//! Two bundled cohorts (stage 1 of 120 and stage 2 of 80 subjects) that
//! illustrate the full interim and final analysis.

use std::fmt;
use std::str::FromStr;

use crate::datagen::read_cohort_csv;
use crate::error::{Error, Result};
use crate::model::{DesignConfig, ReallocMode, SubjectRecord};
use crate::pipeline::{final_analysis, split_stages, FinalReport};

pub const CONFIG_JSON: &str = include_str!("../data/worked_example.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkedExample {
    /// Only the medium dose continues; the high dose is started.
    Trend,
    /// Low and medium doses continue.
    AllEffective,
}

impl WorkedExample {
    pub const ALL: [WorkedExample; 2] = [WorkedExample::Trend, WorkedExample::AllEffective];

    pub fn name(self) -> &'static str {
        match self {
            WorkedExample::Trend => "trend",
            WorkedExample::AllEffective => "all-effective",
        }
    }

    /// The cohort in the dump format read by [`read_cohort_csv`].
    pub fn csv(self) -> &'static str {
        match self {
            WorkedExample::Trend => include_str!("../data/trend.csv"),
            WorkedExample::AllEffective => include_str!("../data/all_effective.csv"),
        }
    }

    pub fn records(self) -> Result<Vec<SubjectRecord>> {
        read_cohort_csv(self.csv().as_bytes())
    }

    /// Final analysis of the bundled cohort under `mode`.
    pub fn analyze(self, mode: ReallocMode) -> Result<FinalReport> {
        let cfg = DesignConfig {
            realloc_mode: mode,
            ..config()?
        };
        let (s1, s2) = split_stages(self.records()?)?;
        final_analysis(&s1, &s2, &cfg)
    }
}

/// Design used for both cohorts: N = 200, N1 = 120, alpha = 0.025, alpha1 = 0.3, wilcox_c.
pub fn config() -> Result<DesignConfig> {
    let cfg: DesignConfig = serde_json::from_str(CONFIG_JSON).map_err(|e| Error::Input(e.to_string()))?;
    cfg.validate()
}

impl fmt::Display for WorkedExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkedExample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "trend" => Ok(WorkedExample::Trend),
            "all-effective" | "all-doses-effective" => Ok(WorkedExample::AllEffective),
            other => Err(Error::Input(format!("unknown example '{other}' (trend, all-effective)"))),
        }
    }
}
