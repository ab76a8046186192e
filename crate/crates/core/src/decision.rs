//! Multi-criteria mode scoring, constrained-choice detection and
//! rational-choice classification.
//!
//! A respondent scores each mode as the priority-weighted average of their
//! evaluations. The displayed raw weighted sum and this normalized average
//! share a mode-independent denominator, so both rank modes identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::CrowdMedians;
use crate::domain::{
    Criterion, CriterionSet, CriterionTable, EvalGrid, Mode, ModeSet, ModeTable, Population, Rating, Respondent,
};

/// Scores within this distance of the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecisionError {
    #[error("all unmasked priorities are zero")]
    DegeneratePriorities,
    #[error("a criterion mask may not cover all six criteria")]
    FullMask,
    #[error("empty group: {0}")]
    EmptyGroup(String),
}

/// One uniform replacement of an evaluation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Override {
    pub mode: Mode,
    pub criterion: Criterion,
    pub value: Rating,
}

/// Where a respondent's evaluations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    SelfEvals,
    Crowd(CrowdMedians),
    Overlay { base: Box<EvalSource>, overrides: Vec<Override> },
}

impl EvalSource {
    pub fn overlay(self, overrides: Vec<Override>) -> Self {
        EvalSource::Overlay { base: Box::new(self), overrides }
    }

    pub fn grid_for(&self, r: &Respondent) -> EvalGrid {
        match self {
            EvalSource::SelfEvals => r.evaluations.to_grid(),
            EvalSource::Crowd(medians) => *medians.grid(),
            EvalSource::Overlay { base, overrides } => {
                let mut grid = base.grid_for(r);
                apply_overrides(&mut grid, overrides);
                grid
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EvalSource::SelfEvals => "self",
            EvalSource::Crowd(_) => "crowd",
            EvalSource::Overlay { .. } => "overlay",
        }
    }
}

pub fn apply_overrides(grid: &mut EvalGrid, overrides: &[Override]) {
    for o in overrides {
        grid[o.mode][o.criterion] = o.value.as_f64();
    }
}

/// Criteria whose priority is treated as zero. Never covers all six.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct CriterionMask(CriterionSet);

impl CriterionMask {
    pub const NONE: CriterionMask = CriterionMask(CriterionSet::EMPTY);

    pub fn new(set: CriterionSet) -> Result<Self, DecisionError> {
        if set == CriterionSet::ALL {
            Err(DecisionError::FullMask)
        } else {
            Ok(CriterionMask(set))
        }
    }

    pub fn single(c: Criterion) -> Self {
        CriterionMask([c].into_iter().collect())
    }

    pub fn contains(self, c: Criterion) -> bool {
        self.0.contains(c)
    }

    pub fn set(self) -> CriterionSet {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Constrained,
    Rational,
    Irrational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionOutcome {
    pub scores: ModeTable<f64>,
    pub best_overall: ModeSet,
    pub best_available: ModeSet,
    pub classification: Classification,
}

/// Normalized weighted average of `values` under `weights`, ignoring masked criteria.
pub fn weighted_score(
    weights: &CriterionTable<f64>,
    values: &CriterionTable<f64>,
    mask: CriterionMask,
) -> Result<f64, DecisionError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in Criterion::ALL {
        if mask.contains(c) {
            continue;
        }
        num += values[c] * weights[c];
        den += weights[c];
    }
    if den <= 0.0 {
        return Err(DecisionError::DegeneratePriorities);
    }
    Ok(num / den)
}

pub fn mode_scores(
    weights: &CriterionTable<f64>,
    grid: &EvalGrid,
    mask: CriterionMask,
) -> Result<ModeTable<f64>, DecisionError> {
    let mut scores = ModeTable::default();
    for m in Mode::ALL {
        scores[m] = weighted_score(weights, &grid[m], mask)?;
    }
    Ok(scores)
}

/// Modes whose score is within [`TIE_TOLERANCE`] of the best score in `among`.
pub fn argmax(scores: &ModeTable<f64>, among: ModeSet) -> ModeSet {
    let best = among.iter().map(|m| scores[m]).fold(f64::NEG_INFINITY, f64::max);
    among.iter().filter(|&m| scores[m] >= best - TIE_TOLERANCE).collect()
}

/// Full decision for arbitrary (possibly real-valued) weights and evaluations.
pub fn decide_with(
    weights: &CriterionTable<f64>,
    grid: &EvalGrid,
    mask: CriterionMask,
    unavailable: ModeSet,
    chosen: Mode,
) -> Result<DecisionOutcome, DecisionError> {
    let scores = mode_scores(weights, grid, mask)?;
    let best_overall = argmax(&scores, ModeSet::ALL);
    let best_available = argmax(&scores, unavailable.complement());
    let classification = if best_overall.is_subset(unavailable) {
        Classification::Constrained
    } else if best_available.contains(chosen) {
        Classification::Rational
    } else {
        Classification::Irrational
    };
    Ok(DecisionOutcome { scores, best_overall, best_available, classification })
}

pub fn decide(r: &Respondent, src: &EvalSource, mask: CriterionMask) -> Result<DecisionOutcome, DecisionError> {
    decide_with(&r.priorities.weights(), &src.grid_for(r), mask, r.unavailable, r.usual_mode)
}

pub fn score(r: &Respondent, m: Mode, src: &EvalSource, mask: CriterionMask) -> Result<f64, DecisionError> {
    weighted_score(&r.priorities.weights(), &src.grid_for(r)[m], mask)
}

pub fn argmax_modes(
    r: &Respondent,
    src: &EvalSource,
    mask: CriterionMask,
    restrict_to_available: bool,
) -> Result<ModeSet, DecisionError> {
    let scores = mode_scores(&r.priorities.weights(), &src.grid_for(r), mask)?;
    let among = if restrict_to_available { r.available() } else { ModeSet::ALL };
    Ok(argmax(&scores, among))
}

pub fn classify(r: &Respondent, src: &EvalSource, mask: CriterionMask) -> Result<Classification, DecisionError> {
    decide(r, src, mask).map(|o| o.classification)
}

/// Classification counts for one usual-mode group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupRationality {
    pub n: usize,
    pub rational: usize,
    pub irrational: usize,
    pub constrained: usize,
    pub rational_pct: Option<f64>,
    pub irrational_pct: Option<f64>,
    pub constrained_pct: Option<f64>,
}

impl GroupRationality {
    pub fn record(&mut self, c: Classification) {
        self.n += 1;
        match c {
            Classification::Rational => self.rational += 1,
            Classification::Irrational => self.irrational += 1,
            Classification::Constrained => self.constrained += 1,
        }
    }

    pub fn merge(&mut self, other: &GroupRationality) {
        self.n += other.n;
        self.rational += other.rational;
        self.irrational += other.irrational;
        self.constrained += other.constrained;
    }

    pub fn finish(mut self) -> Self {
        let pct = |k: usize| (self.n > 0).then(|| 100.0 * k as f64 / self.n as f64);
        self.rational_pct = pct(self.rational);
        self.irrational_pct = pct(self.irrational);
        self.constrained_pct = pct(self.constrained);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalityReport {
    pub by_mode: ModeTable<GroupRationality>,
    pub eval_source: String,
    /// Criteria masked for every respondent.
    pub mask: CriterionSet,
    /// Whether each respondent's halo mask was applied.
    pub halo: bool,
    /// Respondents left out because all their unmasked priorities are zero.
    pub skipped: Vec<String>,
}

/// Per usual-mode shares of rational, irrational and constrained choices.
pub fn rationality_report(
    pop: &Population,
    src: &EvalSource,
    mask_provider: impl Fn(&Respondent) -> CriterionMask,
) -> Result<RationalityReport, DecisionError> {
    if pop.is_empty() {
        return Err(DecisionError::EmptyGroup("population".into()));
    }
    let mut by_mode = ModeTable::<GroupRationality>::default();
    let mut skipped = Vec::new();
    for r in pop.iter() {
        match classify(r, src, mask_provider(r)) {
            Ok(c) => by_mode[r.usual_mode].record(c),
            Err(_) => skipped.push(r.id.clone()),
        }
    }
    Ok(RationalityReport {
        by_mode: by_mode.map(|_, g| g.finish()),
        eval_source: src.kind().to_string(),
        mask: CriterionSet::EMPTY,
        halo: false,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedReport {
    pub total: usize,
    pub men: usize,
    pub women: usize,
    pub men_pct: Option<f64>,
    pub women_pct: Option<f64>,
    /// Constrained respondents by their declared usual mode.
    pub by_usual_mode: ModeTable<usize>,
}

/// Constrained choices under self evaluations with no mask.
pub fn constrained_report(pop: &Population) -> ConstrainedReport {
    use crate::domain::Gender;
    let (mut total, mut men, mut women, mut n_men, mut n_women) = (0, 0, 0, 0usize, 0usize);
    let mut by_usual_mode = ModeTable::default();
    for r in pop.iter() {
        match r.gender {
            Gender::Man => n_men += 1,
            Gender::Woman => n_women += 1,
            _ => {}
        }
        if classify(r, &EvalSource::SelfEvals, CriterionMask::NONE) == Ok(Classification::Constrained) {
            total += 1;
            by_usual_mode[r.usual_mode] += 1;
            match r.gender {
                Gender::Man => men += 1,
                Gender::Woman => women += 1,
                _ => {}
            }
        }
    }
    let pct = |k: usize, n: usize| (n > 0).then(|| 100.0 * k as f64 / n as f64);
    ConstrainedReport { total, men, women, men_pct: pct(men, n_men), women_pct: pct(women, n_women), by_usual_mode }
}
