//! Simulation campaigns: grids of design parameters × scenarios × methods,
//! each cell summarised over many replicates.

mod aggregate;
mod output;
mod replicate;
pub mod rng;

pub use aggregate::{aggregate, Accumulator, EstimatorSummary, McValue, OperatingCharacteristics};
pub use output::{write_campaign_csv, write_plotdata, CSV_HEADER};
pub use replicate::{run_fixed_replicate, run_replicate, stage1_allocation, true_nulls, ReplicateRecord};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::FixedDesign;
use crate::datagen::CohortSampler;
use crate::error::{Error, Result};
use crate::estimation::oracle_true_concordance;
use crate::kernel::RankSumMethod;
use crate::model::{
    builtin_scenarios, AnalysisMethod, DesignConfig, Disease, DoseId, Endpoint, Outcome, ReallocMode, ScenarioSpec,
    Variant,
};
use rng::{label_word, mix_words, StreamKey};

/// Grid values of the varied design parameters.
pub const ALPHA1_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const N1_GRID: [usize; 3] = [80, 100, 120];
pub const RHO_GRID: [f64; 3] = [0.4, 0.5, 0.6];

/// Replicates per work item.
const CHUNK: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimId {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl SimId {
    pub const ALL: [SimId; 5] = [SimId::S1, SimId::S2, SimId::S3, SimId::S4, SimId::S5];

    pub fn variant(self) -> Variant {
        match self {
            SimId::S2 => Variant::ModifiedRates,
            SimId::S3 => Variant::ModifiedBaseline,
            _ => Variant::Standard,
        }
    }

    pub fn axis(self) -> GridAxis {
        match self {
            SimId::S1 | SimId::S2 | SimId::S3 => GridAxis::Alpha1,
            SimId::S4 => GridAxis::Rho,
            SimId::S5 => GridAxis::N1,
        }
    }
}

impl fmt::Display for SimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SimId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation("sim", format!("expected S1..S5, got {s:?}")))
    }
}

/// The design parameter a campaign varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAxis {
    Alpha1,
    N1,
    Rho,
}

impl GridAxis {
    pub fn name(self) -> &'static str {
        match self {
            GridAxis::Alpha1 => "alpha1",
            GridAxis::N1 => "n1",
            GridAxis::Rho => "rho",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub disease: Disease,
    pub sim_id: SimId,
    pub runs: u64,
    pub master_seed: u64,
    /// `N`, `alpha`, reallocation and rank settings; `alpha1` and `N1` are
    /// taken from the grids.
    pub design: DesignConfig,
    pub methods: Vec<AnalysisMethod>,
    pub alpha1_grid: Vec<f64>,
    pub n1_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    /// Scenario keys to run; empty runs all five.
    pub scenarios: Vec<String>,
    /// Also run the MA1 and MA2 comparators.
    pub comparators: bool,
    /// Scale factor of the reference concordance run.
    pub oracle_scale: usize,
}

impl SimulationSpec {
    /// The campaign `sim_id` with its default grid, all methods and all scenarios.
    pub fn new(disease: Disease, sim_id: SimId, runs: u64, master_seed: u64) -> Self {
        let base = DesignConfig::default();
        let (alpha1_grid, n1_grid, rho_grid) = match sim_id.axis() {
            GridAxis::Alpha1 => (ALPHA1_GRID.to_vec(), vec![base.n1], vec![0.5]),
            GridAxis::Rho => (vec![base.alpha1], vec![base.n1], RHO_GRID.to_vec()),
            GridAxis::N1 => (vec![base.alpha1], N1_GRID.to_vec(), vec![0.5]),
        };
        SimulationSpec {
            disease,
            sim_id,
            runs,
            master_seed,
            design: base,
            methods: vec![AnalysisMethod::Lm, AnalysisMethod::WilcoxC, AnalysisMethod::WilcoxCc],
            alpha1_grid,
            n1_grid,
            rho_grid,
            scenarios: Vec::new(),
            comparators: true,
            oracle_scale: 5000,
        }
    }

    pub fn with_realloc(mut self, mode: ReallocMode) -> Self {
        self.design.realloc_mode = mode;
        self
    }

    pub fn with_rank_method(mut self, m: RankSumMethod) -> Self {
        self.design.rank_method = m;
        self
    }

    /// Rejects empty grids, invalid designs and, unless `allow_offgrid`,
    /// values outside the standard grids.
    pub fn validate(&self, allow_offgrid: bool) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::validation("runs", "must be at least 1"));
        }
        if self.oracle_scale == 0 {
            return Err(Error::validation("oracle_scale", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("method", "no analysis method selected"));
        }
        for (name, empty) in [
            ("alpha1", self.alpha1_grid.is_empty()),
            ("n1", self.n1_grid.is_empty()),
            ("rho", self.rho_grid.is_empty()),
        ] {
            if empty {
                return Err(Error::validation(name, "grid is empty"));
            }
        }
        for &a in &self.alpha1_grid {
            if !allow_offgrid && !ALPHA1_GRID.iter().any(|&g| (g - a).abs() < 1e-12) {
                return Err(Error::validation("alpha1", format!("{a} is not on the grid {ALPHA1_GRID:?}")));
            }
            DesignConfig { alpha1: a, ..self.design }.validate()?;
        }
        for &n1 in &self.n1_grid {
            if !allow_offgrid && !N1_GRID.contains(&n1) {
                return Err(Error::validation("n1", format!("{n1} is not on the grid {N1_GRID:?}")));
            }
            DesignConfig { n1, ..self.design }.validate()?;
            stage1_allocation(n1)?;
        }
        for &rho in &self.rho_grid {
            if !allow_offgrid && !RHO_GRID.iter().any(|&g| (g - rho).abs() < 1e-12) {
                return Err(Error::validation("rho", format!("{rho} is not on the grid {RHO_GRID:?}")));
            }
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::validation("rho", format!("must lie in (-1, 1), got {rho}")));
            }
        }
        self.scenario_list()?;
        Ok(())
    }

    /// Selected scenarios in their standard order.
    pub fn scenario_list(&self) -> Result<Vec<ScenarioSpec>> {
        let all = builtin_scenarios(self.disease, self.sim_id.variant());
        for key in &self.scenarios {
            if !all.iter().any(|s| &s.key == key) {
                let known: Vec<&str> = all.iter().map(|s| s.key.as_str()).collect();
                return Err(Error::validation("scenario", format!("unknown key {key:?}; known: {known:?}")));
            }
        }
        Ok(all
            .into_iter()
            .filter(|s| self.scenarios.is_empty() || self.scenarios.contains(&s.key))
            .collect())
    }

    /// The campaign's cells in output order: scenario, ρ, N1, α1, method,
    /// then the comparators per scenario, ρ and method.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        for scn in self.scenario_list()? {
            for &rho in &self.rho_grid {
                let scn = scn.clone().with_rho(rho);
                for &n1 in &self.n1_grid {
                    for &alpha1 in &self.alpha1_grid {
                        for &method in &self.methods {
                            out.push(Cell {
                                design: CellDesign::Adaptive,
                                scenario: scn.clone(),
                                config: DesignConfig {
                                    n1,
                                    alpha1,
                                    method,
                                    ..self.design
                                },
                            });
                        }
                    }
                }
                if self.comparators {
                    for &method in &self.methods {
                        for d in [FixedDesign::Ma1, FixedDesign::Ma2] {
                            out.push(Cell {
                                design: CellDesign::Fixed(d),
                                scenario: scn.clone(),
                                config: DesignConfig { method, ..self.design },
                            });
                        }
                    }
                }
            }
        }
        for c in &mut out {
            c.config = c.config.validate()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellDesign {
    Adaptive,
    Fixed(FixedDesign),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub design: CellDesign,
    pub scenario: ScenarioSpec,
    pub config: DesignConfig,
}

impl Cell {
    /// Key of the simulated data. Method and α1 are left out so that every
    /// method and interim level sees the same patients.
    fn data_key(&self, disease: Disease, variant: Variant) -> u64 {
        let n1 = match self.design {
            CellDesign::Adaptive => self.config.n1 as u64,
            CellDesign::Fixed(_) => 0,
        };
        mix_words(&[
            label_word(disease.name()),
            variant as u64,
            label_word(&self.scenario.key),
            self.scenario.rho.to_bits(),
            self.config.n as u64,
            n1,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub oc: Option<OperatingCharacteristics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub spec: SimulationSpec,
    pub cells: Vec<CellResult>,
}

impl Campaign {
    /// The adaptive cell for `scenario`, `method` and `alpha1` (other axes at their first grid value).
    pub fn find(&self, scenario: &str, method: AnalysisMethod, alpha1: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.cell.design == CellDesign::Adaptive
                && c.cell.scenario.key == scenario
                && c.cell.config.method == method
                && (c.cell.config.alpha1 - alpha1).abs() < 1e-12
        })
    }

    pub fn find_fixed(&self, scenario: &str, method: AnalysisMethod, design: FixedDesign) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.cell.design == CellDesign::Fixed(design)
                && c.cell.scenario.key == scenario
                && c.cell.config.method == method
        })
    }
}

type TruthKey = (String, u64, Outcome);

fn reference_values(spec: &SimulationSpec, cells: &[Cell]) -> Result<HashMap<TruthKey, [Option<f64>; 4]>> {
    let mut keys: Vec<(TruthKey, ScenarioSpec)> = Vec::new();
    for c in cells {
        if c.design != CellDesign::Adaptive {
            continue;
        }
        let k = (c.scenario.key.clone(), c.scenario.rho.to_bits(), c.config.method.outcome());
        if !keys.iter().any(|(x, _)| *x == k) {
            keys.push((k, c.scenario.clone()));
        }
    }
    let jobs: Vec<(usize, DoseId)> = (0..keys.len())
        .flat_map(|i| DoseId::ACTIVE.into_iter().map(move |d| (i, d)))
        .collect();
    let values: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(i, d)| {
            let ((key, rho, kind), scn) = &keys[i];
            let seed = mix_words(&[
                spec.master_seed,
                label_word("oracle"),
                label_word(key),
                *rho,
                *kind as u64,
                d as u64,
            ]);
            oracle_true_concordance(scn, d, Endpoint::Month12, *kind, spec.oracle_scale, seed)
        })
        .collect();
    let mut out = HashMap::new();
    for (&(i, d), v) in jobs.iter().zip(values) {
        let entry = out.entry(keys[i].0.clone()).or_insert([None; 4]);
        entry[d.index()] = Some(v?);
    }
    Ok(out)
}

/// Runs every cell of `spec`. See [`run_campaign_with_progress`].
pub fn run_campaign(spec: &SimulationSpec) -> Result<Campaign> {
    run_campaign_with_progress(spec, &|_, _| {})
}

/// Runs every cell on the current rayon pool. `progress(done, total)` is
/// called as work items finish. Results do not depend on the pool size.
pub fn run_campaign_with_progress(
    spec: &SimulationSpec,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<Campaign> {
    spec.validate(true)?;
    let cells = spec.cells()?;
    let truths = reference_values(spec, &cells)?;
    let variant = spec.sim_id.variant();

    struct Prepared {
        sampler: std::result::Result<CohortSampler, String>,
        key: StreamKey,
        nulls: crate::model::DoseSet,
        truth: [Option<f64>; 4],
    }
    let prepared: Vec<Prepared> = cells
        .iter()
        .map(|c| Prepared {
            sampler: CohortSampler::new(&c.scenario).map_err(|e| e.to_string()),
            key: StreamKey::new(spec.master_seed, c.data_key(spec.disease, variant)),
            nulls: true_nulls(&c.scenario),
            truth: truths
                .get(&(c.scenario.key.clone(), c.scenario.rho.to_bits(), c.config.method.outcome()))
                .copied()
                .unwrap_or([None; 4]),
        })
        .collect();

    let chunks_per_cell = spec.runs.div_ceil(CHUNK);
    let items: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..chunks_per_cell).map(move |k| (c, k)))
        .collect();
    let total = items.len();
    let done = AtomicUsize::new(0);
    let partials: Vec<Accumulator> = items
        .par_iter()
        .map(|&(ci, chunk)| {
            let cell = &cells[ci];
            let p = &prepared[ci];
            let mut acc = Accumulator::new();
            if let Ok(sampler) = &p.sampler {
                let lo = chunk * CHUNK;
                let hi = (lo + CHUNK).min(spec.runs);
                for i in lo..hi {
                    match cell.design {
                        CellDesign::Adaptive => match run_replicate(&cell.config, sampler, &p.key, i) {
                            Ok(r) => acc.push(&r, p.nulls, &p.truth),
                            Err(e) => acc.push_error(i, &e),
                        },
                        CellDesign::Fixed(d) => match run_fixed_replicate(d, &cell.config, sampler, &p.key, i) {
                            Ok(r) => acc.push_fixed(&r, p.nulls),
                            Err(e) => acc.push_error(i, &e),
                        },
                    }
                }
            }
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            acc
        })
        .collect();

    let mut results = Vec::with_capacity(cells.len());
    let per_cell = chunks_per_cell as usize;
    for (ci, cell) in cells.into_iter().enumerate() {
        let p = &prepared[ci];
        let result = match &p.sampler {
            Err(msg) => CellResult {
                cell,
                oc: None,
                error: Some(msg.clone()),
            },
            Ok(_) => {
                let mut acc = Accumulator::new();
                for part in &partials[ci * per_cell..(ci + 1) * per_cell] {
                    acc.merge(part);
                }
                match acc.finish(&p.truth) {
                    Ok(oc) => CellResult {
                        error: oc.first_error.clone(),
                        cell,
                        oc: Some(oc),
                    },
                    Err(e) => CellResult {
                        cell,
                        oc: None,
                        error: Some(e.to_string()),
                    },
                }
            }
        };
        results.push(result);
    }
    Ok(Campaign {
        spec: spec.clone(),
        cells: results,
    })
}
