use serde::{Deserialize, Serialize};

use super::rng::{Stream, StreamKey};
use crate::comparators::{run_ma1, run_ma2, FixedDesign, FixedTrialResult};
use crate::datagen::CohortSampler;
use crate::error::{Error, Result};
use crate::model::{DesignConfig, DoseId, DoseSet, SelectionOutcome, SubjectRecord};
use crate::pipeline::{final_from_interim, interim_analysis, EstimateGrid};

/// What one simulated two-stage trial produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: u64,
    pub selection: SelectionOutcome,
    pub rejected: DoseSet,
    pub estimates: EstimateGrid,
}

/// Arm sizes of the stage-1 cohort: `N1` over placebo, low and medium, the
/// remainder one per arm starting at placebo.
pub fn stage1_allocation(n1: usize) -> Result<[usize; 4]> {
    let base = n1 / 3;
    if base == 0 {
        return Err(Error::Input(format!("N1 = {n1} cannot fill three stage-1 arms")));
    }
    let rem = n1 % 3;
    Ok([base + usize::from(rem > 0), base + usize::from(rem > 1), base, 0])
}

/// Simulates and analyses replicate `index` of a cell.
pub fn run_replicate(
    cfg: &DesignConfig,
    sampler: &CohortSampler,
    key: &StreamKey,
    index: u64,
) -> Result<ReplicateRecord> {
    replicate_inner(cfg, sampler, key, index).map_err(|e| Error::Replicate {
        index,
        source: Box::new(e),
    })
}

fn replicate_inner(
    cfg: &DesignConfig,
    sampler: &CohortSampler,
    key: &StreamKey,
    index: u64,
) -> Result<ReplicateRecord> {
    let n1 = stage1_allocation(cfg.n1)?;
    let mut stage1: Vec<SubjectRecord> = Vec::with_capacity(cfg.n1);
    sampler.sample_into(&n1, 1, 1, &mut key.rng(index, Stream::Stage1), &mut stage1);
    let interim = interim_analysis(&stage1, cfg)?;
    let sel = interim.selection;
    let mut stage2: Vec<SubjectRecord> = Vec::with_capacity(cfg.n2());
    let first_id = stage1.len() as u64 + 1;
    sampler.sample_into(&sel.n2_per_arm, 2, first_id, &mut key.rng(index, Stream::Stage2), &mut stage2);
    let report = final_from_interim(interim, &stage1, &stage2, cfg)?;
    debug_assert_eq!(report.k, sel.k);
    Ok(ReplicateRecord {
        index,
        selection: sel,
        rejected: report.closed_test.rejected,
        estimates: report.estimates,
    })
}

/// One replicate of a single-stage comparator design.
pub fn run_fixed_replicate(
    design: FixedDesign,
    cfg: &DesignConfig,
    sampler: &CohortSampler,
    key: &StreamKey,
    index: u64,
) -> Result<FixedTrialResult> {
    let mut rng = key.rng(index, Stream::Comparator);
    let r = match design {
        FixedDesign::Ma1 => run_ma1(sampler, cfg.n, cfg.alpha, cfg.method, cfg.rank_method, &mut rng),
        FixedDesign::Ma2 => run_ma2(sampler, cfg.n, cfg.alpha, cfg.method, cfg.rank_method, &mut rng),
    };
    r.map_err(|e| Error::Replicate {
        index,
        source: Box::new(e),
    })
}

/// Doses of `scn` without any effect (same responder rate and no reduction as placebo).
pub fn true_nulls(scn: &crate::model::ScenarioSpec) -> DoseSet {
    DoseId::ACTIVE
        .into_iter()
        .filter(|d| {
            let i = d.index();
            scn.r[i] == [0.0, 0.0] && scn.pi[i] == scn.pi[0]
        })
        .fold(DoseSet::EMPTY, DoseSet::with)
}
