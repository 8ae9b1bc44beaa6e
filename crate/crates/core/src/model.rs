//! Domain types shared by every module: doses, design and scenario
//! configuration, subject records and the interim selection outcome.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RankSumMethod;

/// Trial arm. Placebo is the shared control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoseId {
    Placebo = 0,
    Low = 1,
    Medium = 2,
    High = 3,
}

impl DoseId {
    pub const ALL: [DoseId; 4] = [DoseId::Placebo, DoseId::Low, DoseId::Medium, DoseId::High];
    pub const ACTIVE: [DoseId; 3] = [DoseId::Low, DoseId::Medium, DoseId::High];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        DoseId::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Input(format!("dose index {i} is not in 0..=3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            DoseId::Placebo => "placebo",
            DoseId::Low => "low",
            DoseId::Medium => "medium",
            DoseId::High => "high",
        }
    }

    pub fn is_active(self) -> bool {
        self != DoseId::Placebo
    }
}

impl fmt::Display for DoseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DoseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "placebo" | "control" => Ok(DoseId::Placebo),
            "1" | "low" => Ok(DoseId::Low),
            "2" | "medium" | "med" => Ok(DoseId::Medium),
            "3" | "high" => Ok(DoseId::High),
            other => Err(Error::Input(format!("unknown dose '{other}'"))),
        }
    }
}

/// Subset of the active doses {1, 2, 3}, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DoseSet(u8);

impl DoseSet {
    pub const EMPTY: DoseSet = DoseSet(0);
    pub const FULL: DoseSet = DoseSet(0b1110);

    pub fn of(doses: &[DoseId]) -> Self {
        doses.iter().fold(DoseSet::EMPTY, |s, &d| s.with(d))
    }

    /// Placebo is ignored.
    #[must_use]
    pub fn with(self, d: DoseId) -> Self {
        if d.is_active() {
            DoseSet(self.0 | (1 << d.index()))
        } else {
            self
        }
    }

    #[inline]
    pub fn contains(self, d: DoseId) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn intersection(self, other: DoseSet) -> DoseSet {
        DoseSet(self.0 & other.0)
    }

    #[inline]
    pub fn is_subset(self, other: DoseSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in ascending dose order.
    pub fn iter(self) -> impl Iterator<Item = DoseId> {
        DoseId::ACTIVE.into_iter().filter(move |&d| self.contains(d))
    }

    /// The seven nonempty intersections of {H1, H2, H3}, largest first.
    pub fn intersections() -> [DoseSet; 7] {
        [
            DoseSet(0b1110),
            DoseSet(0b0110),
            DoseSet(0b1010),
            DoseSet(0b1100),
            DoseSet(0b0010),
            DoseSet(0b0100),
            DoseSet(0b1000),
        ]
    }

    /// Compact label such as `123` or `2`.
    pub fn label(self) -> String {
        self.iter().map(|d| char::from(b'0' + d.index() as u8)).collect()
    }
}

impl fmt::Display for DoseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, d) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", d.index())?;
        }
        write!(f, "}}")
    }
}

impl Serialize for DoseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<usize> = self.iter().map(DoseId::index).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DoseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        let mut set = DoseSet::EMPTY;
        for i in v {
            if !(1..=3).contains(&i) {
                return Err(serde::de::Error::custom(format!("active dose {i} not in 1..=3")));
            }
            set = set.with(DoseId::ALL[i]);
        }
        Ok(set)
    }
}

/// Stage-wise analysis of each active dose against placebo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AnalysisMethod {
    /// Linear model on `ln(1 + x_t)` adjusted for `ln(1 + x_0)`.
    #[serde(rename = "lm")]
    Lm,
    /// Rank-sum test on the follow-up load.
    #[default]
    #[serde(rename = "wilcox_c")]
    WilcoxC,
    /// Rank-sum test on the change from baseline.
    #[serde(rename = "wilcox_cc")]
    WilcoxCc,
}

impl AnalysisMethod {
    pub const ALL: [AnalysisMethod; 3] = [AnalysisMethod::Lm, AnalysisMethod::WilcoxC, AnalysisMethod::WilcoxCc];

    pub fn name(self) -> &'static str {
        match self {
            AnalysisMethod::Lm => "lm",
            AnalysisMethod::WilcoxC => "wilcox_c",
            AnalysisMethod::WilcoxCc => "wilcox_cc",
        }
    }

    /// Outcome on which concordance is estimated for this method.
    pub fn outcome(self) -> Outcome {
        match self {
            AnalysisMethod::WilcoxCc => Outcome::Change,
            AnalysisMethod::Lm | AnalysisMethod::WilcoxC => Outcome::Level,
        }
    }
}

impl fmt::Display for AnalysisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnalysisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "lm" => Ok(AnalysisMethod::Lm),
            "wilcox_c" | "wilcoxc" => Ok(AnalysisMethod::WilcoxC),
            "wilcox_cc" | "wilcoxcc" => Ok(AnalysisMethod::WilcoxCc),
            other => Err(Error::Input(format!("unknown analysis method '{other}'"))),
        }
    }
}

/// Which subject-level quantity a concordance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// Follow-up load `x_t`.
    Level,
    /// Change from baseline `x_t − x_0`.
    Change,
}

/// How conditional error of doses without stage-2 data is reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReallocMode {
    /// Budget is the sum over `J ∩ K`; the only transfer is dose 1 to dose 3
    /// when `K = {2,3}` and `J ⊇ {1,2,3}`.
    #[default]
    Strict,
    /// Budget is the sum over all of `J`, split among the doses of `J ∩ K`.
    Pooled,
}

impl FromStr for ReallocMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(ReallocMode::Strict),
            "pooled" => Ok(ReallocMode::Pooled),
            other => Err(Error::Input(format!("unknown reallocation mode '{other}'"))),
        }
    }
}

impl fmt::Display for ReallocMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReallocMode::Strict => "strict",
            ReallocMode::Pooled => "pooled",
        })
    }
}

/// Trial-level design constants. `w1` and `w2` are filled in by
/// [`DesignConfig::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    #[serde(rename = "N1", alias = "n1")]
    pub n1: usize,
    pub alpha: f64,
    pub alpha1: f64,
    #[serde(default)]
    pub method: AnalysisMethod,
    #[serde(default)]
    pub realloc_mode: ReallocMode,
    /// Null distribution used by the rank-sum methods.
    #[serde(default = "default_rank_method", with = "rank_method_serde")]
    pub rank_method: RankSumMethod,
    #[serde(default)]
    pub w1: f64,
    #[serde(default)]
    pub w2: f64,
}

fn default_rank_method() -> RankSumMethod {
    RankSumMethod::Asymptotic
}

mod rank_method_serde {
    use super::RankSumMethod;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &RankSumMethod, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match m {
            RankSumMethod::Auto => "auto",
            RankSumMethod::Exact => "exact",
            RankSumMethod::Asymptotic => "asymptotic",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RankSumMethod, D::Error> {
        match String::deserialize(d)?.as_str() {
            "auto" => Ok(RankSumMethod::Auto),
            "exact" => Ok(RankSumMethod::Exact),
            "asymptotic" => Ok(RankSumMethod::Asymptotic),
            other => Err(serde::de::Error::custom(format!("unknown rank_method '{other}'"))),
        }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            n: 200,
            n1: 120,
            alpha: 0.025,
            alpha1: 0.3,
            method: AnalysisMethod::WilcoxC,
            realloc_mode: ReallocMode::Strict,
            rank_method: RankSumMethod::Asymptotic,
            w1: 0.0,
            w2: 0.0,
        }
        .validate()
        .expect("default design is valid")
    }
}

impl DesignConfig {
    pub fn new(n: usize, n1: usize, alpha: f64, alpha1: f64, method: AnalysisMethod) -> Result<Self> {
        DesignConfig {
            n,
            n1,
            alpha,
            alpha1,
            method,
            ..DesignConfig::default()
        }
        .validate()
    }

    /// Checks every invariant and derives the combination weights.
    pub fn validate(mut self) -> Result<Self> {
        if self.n1 == 0 || self.n1 >= self.n {
            return Err(Error::validation(
                "N1",
                format!("need 0 < N1 < N, got N1 = {} and N = {}", self.n1, self.n),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::validation("alpha", format!("need 0 < alpha < 0.5, got {}", self.alpha)));
        }
        if !(self.alpha1 > 0.0 && self.alpha1 < 1.0) {
            return Err(Error::validation("alpha1", format!("need 0 < alpha1 < 1, got {}", self.alpha1)));
        }
        self.w1 = (self.n1 as f64 / self.n as f64).sqrt();
        self.w2 = ((self.n - self.n1) as f64 / self.n as f64).sqrt();
        Ok(self)
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n - self.n1
    }
}

/// Disease substudy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disease {
    Mansonellosis,
    Onchocerciasis,
    Loiasis,
}

impl Disease {
    pub const ALL: [Disease; 3] = [Disease::Mansonellosis, Disease::Onchocerciasis, Disease::Loiasis];

    pub fn name(self) -> &'static str {
        match self {
            Disease::Mansonellosis => "mansonellosis",
            Disease::Onchocerciasis => "onchocerciasis",
            Disease::Loiasis => "loiasis",
        }
    }

    /// Baseline (mean, SD) on the original scale.
    pub fn baseline(self, variant: Variant) -> (f64, f64) {
        let modified = variant == Variant::ModifiedBaseline;
        match (self, modified) {
            (Disease::Mansonellosis, false) => (1838.0, 2565.0),
            (Disease::Mansonellosis, true) => (1000.0, 3500.0),
            (Disease::Onchocerciasis, false) => (19.0, 30.0),
            (Disease::Onchocerciasis, true) => (15.0, 40.0),
            (Disease::Loiasis, false) => (5000.0, 4000.0),
            (Disease::Loiasis, true) => (4000.0, 5000.0),
        }
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Disease {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mans" | "mansonellosis" => Ok(Disease::Mansonellosis),
            "oncho" | "onchocerciasis" => Ok(Disease::Onchocerciasis),
            "loa" | "loiasis" => Ok(Disease::Loiasis),
            other => Err(Error::Input(format!("unknown disease '{other}'"))),
        }
    }
}

/// Assumption set for the scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    ModifiedRates,
    ModifiedBaseline,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(Variant::Standard),
            "modified_rates" => Ok(Variant::ModifiedRates),
            "modified_baseline" => Ok(Variant::ModifiedBaseline),
            other => Err(Error::Input(format!("unknown scenario variant '{other}'"))),
        }
    }
}

/// Data-generating assumptions for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Short identifier used in output files.
    pub key: String,
    pub label: String,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub rho: f64,
    /// Reduction fraction per dose (placebo first) at Month 6 and Month 12.
    pub r: [[f64; 2]; 4],
    /// Total-responder probability per dose.
    pub pi: [f64; 4],
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_mean > 0.0 && self.baseline_mean.is_finite()) {
            return Err(Error::validation("baseline_mean", format!("must be positive, got {}", self.baseline_mean)));
        }
        if !(self.baseline_sd >= 0.0 && self.baseline_sd.is_finite()) {
            return Err(Error::validation("baseline_sd", format!("must be nonnegative, got {}", self.baseline_sd)));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::validation("rho", format!("need 0 <= rho < 1, got {}", self.rho)));
        }
        for row in &self.r {
            for &x in row {
                if !(0.0..1.0).contains(&x) {
                    return Err(Error::validation("r", format!("reduction rates must lie in [0, 1), got {x}")));
                }
            }
        }
        for &p in &self.pi {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation("pi", format!("responder rates must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }
}

/// Placebo total-responder rate.
pub const PLACEBO_RESPONDER_RATE: f64 = 0.10;

/// Responder rate of an active dose: 20 points below its Month-12 reduction,
/// never below the placebo rate.
pub fn responder_rate(r_month12: f64) -> f64 {
    (r_month12 - 0.20).max(PLACEBO_RESPONDER_RATE)
}

/// The five scenarios of the reduction-rate table, in table order.
/// `rho` is set to the standard value 0.5.
pub fn builtin_scenarios(disease: Disease, variant: Variant) -> Vec<ScenarioSpec> {
    // (key, label, month-6 standard, month-6 modified, month-12), low/medium/high in percent
    type Row = (&'static str, &'static str, [f64; 3], [f64; 3], [f64; 3]);
    const TABLE: [Row; 5] = [
        ("no_effect", "No effect", [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ("high_only", "Efficacy only in high dose", [0.0, 0.0, 50.0], [0.0, 0.0, 40.0], [0.0, 0.0, 60.0]),
        ("trend_a", "Trend (a)", [0.0, 30.0, 50.0], [0.0, 20.0, 40.0], [0.0, 40.0, 60.0]),
        ("trend_b", "Trend (b)", [0.0, 40.0, 50.0], [0.0, 30.0, 40.0], [0.0, 50.0, 60.0]),
        ("all_effective", "All doses effective", [40.0, 40.0, 40.0], [30.0, 30.0, 30.0], [50.0, 50.0, 50.0]),
    ];
    let (mean, sd) = disease.baseline(variant);
    TABLE
        .iter()
        .map(|&(key, label, m6, m6_mod, m12)| {
            let m6 = if variant == Variant::ModifiedRates { m6_mod } else { m6 };
            let mut r = [[0.0; 2]; 4];
            let mut pi = [PLACEBO_RESPONDER_RATE; 4];
            for j in 0..3 {
                r[j + 1] = [m6[j] / 100.0, m12[j] / 100.0];
                pi[j + 1] = ((m12[j] - 20.0) / 100.0).max(PLACEBO_RESPONDER_RATE);
            }
            ScenarioSpec {
                key: key.to_string(),
                label: label.to_string(),
                baseline_mean: mean,
                baseline_sd: sd,
                rho: 0.5,
                r,
                pi,
            }
        })
        .collect()
}

/// One patient, simulated or ingested. Loads are on the original (mf) scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: u64,
    pub stage: u8,
    pub dose: DoseId,
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub responder: bool,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if self.stage != 1 && self.stage != 2 {
            return Err(Error::Input(format!("subject {}: stage must be 1 or 2", self.subject_id)));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::Input(format!("subject {}: baseline load must be positive", self.subject_id)));
        }
        for x in [self.x1, self.x2] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::Input(format!("subject {}: follow-up loads must be >= 0", self.subject_id)));
            }
        }
        if self.responder && (self.x1 != 0.0 || self.x2 != 0.0) {
            return Err(Error::Input(format!(
                "subject {}: total responder with nonzero follow-up load",
                self.subject_id
            )));
        }
        Ok(())
    }

    /// Follow-up load at Month 6 (`t = 1`) or Month 12 (`t = 2`).
    #[inline]
    pub fn at(&self, t: Endpoint) -> f64 {
        match t {
            Endpoint::Month6 => self.x1,
            Endpoint::Month12 => self.x2,
        }
    }

    #[inline]
    pub fn outcome(&self, t: Endpoint, kind: Outcome) -> f64 {
        match kind {
            Outcome::Level => self.at(t),
            Outcome::Change => self.at(t) - self.x0,
        }
    }
}

/// Follow-up visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    /// Surrogate used for the interim selection.
    #[serde(rename = "month6")]
    Month6,
    /// Primary endpoint.
    #[serde(rename = "month12")]
    Month12,
}

impl Endpoint {
    pub fn index(self) -> usize {
        match self {
            Endpoint::Month6 => 1,
            Endpoint::Month12 => 2,
        }
    }
}

/// Interim decision label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Low and medium both promising: continue both.
    I,
    /// Only low promising: continue low and medium.
    Ii,
    /// Only medium promising: drop low, start high.
    Iii,
    /// Neither promising: start high only.
    Iv,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::I, Case::Ii, Case::Iii, Case::Iv];

    pub fn name(self) -> &'static str {
        match self {
            Case::I => "i",
            Case::Ii => "ii",
            Case::Iii => "iii",
            Case::Iv => "iv",
        }
    }

    /// Doses carried into stage 2.
    pub fn selected(self) -> DoseSet {
        match self {
            Case::I | Case::Ii => DoseSet::of(&[DoseId::Low, DoseId::Medium]),
            Case::Iii => DoseSet::of(&[DoseId::Medium, DoseId::High]),
            Case::Iv => DoseSet::of(&[DoseId::High]),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Interim decision and the resulting stage-2 allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub k: DoseSet,
    pub case: Case,
    /// Stage-2 arm sizes indexed by dose; zero for arms not continued.
    pub n2_per_arm: [usize; 4],
}
