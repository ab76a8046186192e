//! Cognitive bias operators.
//!
//! * Choice-supportive bias: contrast self evaluations with crowd medians.
//! * Halo: ignore the criteria on which the chosen mode is strictly the worst
//!   of the accessible modes.
//! * Reactance: non-users down-rate a mode whose promotion they resent.

use serde::{Deserialize, Serialize};

use crate::decision::{
    classify, decide_with, Classification, CriterionMask, DecisionError, DecisionOutcome, EvalSource,
    GroupRationality, RationalityReport,
};
use crate::domain::{
    Criterion, CriterionSet, CriterionTable, EvalGrid, Mode, ModeSet, ModeTable, Population, Respondent,
};
use crate::stats::median;

/// Per-cell median of self evaluations over a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CrowdMedians(EvalGrid);

impl CrowdMedians {
    pub fn grid(&self) -> &EvalGrid {
        &self.0
    }

    pub fn get(&self, m: Mode, c: Criterion) -> f64 {
        self.0[m][c]
    }
}

pub fn crowd_medians(pop: &Population) -> Result<CrowdMedians, DecisionError> {
    if pop.is_empty() {
        return Err(DecisionError::EmptyGroup("population".into()));
    }
    let mut column = Vec::with_capacity(pop.len());
    let grid = ModeTable::from_fn(|m| {
        CriterionTable::from_fn(|c| {
            column.clear();
            column.extend(pop.iter().map(|r| r.evaluations.get(m, c).as_f64()));
            median(&mut column).expect("population is non-empty")
        })
    });
    Ok(CrowdMedians(grid))
}

/// Which rivals the chosen mode is compared against when looking for its
/// worst criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HaloComparison {
    #[default]
    AvailableModes,
    AllModes,
}

/// Halo mask on an already resolved grid.
///
/// Masks every criterion where `chosen` is rated strictly below each rival.
/// With no rival the mask is empty. If the mask would cover every criterion,
/// or every criterion with a positive weight, the best-rated such criterion of
/// `chosen` is kept.
pub fn halo_mask_on_grid(
    grid: &EvalGrid,
    weights: &CriterionTable<f64>,
    chosen: Mode,
    unavailable: ModeSet,
    comparison: HaloComparison,
) -> CriterionMask {
    let mut rivals = match comparison {
        HaloComparison::AvailableModes => unavailable.complement(),
        HaloComparison::AllModes => ModeSet::ALL,
    };
    rivals.remove(chosen);
    if rivals.is_empty() {
        return CriterionMask::NONE;
    }
    let mut set: CriterionSet = Criterion::ALL
        .into_iter()
        .filter(|&c| rivals.iter().all(|m| grid[chosen][c] < grid[m][c]))
        .collect();
    // Never hide everything the respondent cares about.
    let weighted = Criterion::ALL.into_iter().any(|c| weights[c] > 0.0);
    let covers_weight = Criterion::ALL.into_iter().all(|c| set.contains(c) || weights[c] <= 0.0);
    if set == CriterionSet::ALL || (weighted && covers_weight) {
        let best_rated = |cands: &mut dyn Iterator<Item = Criterion>| {
            cands.reduce(|b, c| if grid[chosen][c] > grid[chosen][b] { c } else { b })
        };
        let keep = best_rated(&mut Criterion::ALL.into_iter().filter(|&c| weights[c] > 0.0))
            .or_else(|| best_rated(&mut Criterion::ALL.into_iter()))
            .expect("six criteria");
        set.remove(keep);
    }
    CriterionMask::new(set).expect("at least one criterion is kept")
}

pub fn halo_mask(r: &Respondent, src: &EvalSource) -> CriterionMask {
    halo_mask_with(r, src, HaloComparison::AvailableModes)
}

pub fn halo_mask_with(r: &Respondent, src: &EvalSource, comparison: HaloComparison) -> CriterionMask {
    halo_mask_on_grid(&src.grid_for(r), &r.priorities.weights(), r.usual_mode, r.unavailable, comparison)
}

/// Decision with a halo mask applied. Whether the respondent is constrained is
/// judged on the unmasked scores: the halo narrows attention when justifying a
/// choice among accessible modes, it does not move the preferred mode out of
/// reach. Rational respondents therefore stay rational under any halo mask.
pub fn decide_under_halo(
    weights: &CriterionTable<f64>,
    grid: &EvalGrid,
    mask: CriterionMask,
    unavailable: ModeSet,
    chosen: Mode,
) -> Result<DecisionOutcome, DecisionError> {
    let base = decide_with(weights, grid, CriterionMask::NONE, unavailable, chosen)?;
    let mut out = decide_with(weights, grid, mask, unavailable, chosen)?;
    out.classification = if base.classification == Classification::Constrained {
        Classification::Constrained
    } else if out.best_available.contains(chosen) {
        Classification::Rational
    } else {
        Classification::Irrational
    };
    Ok(out)
}

pub fn classify_under_halo(r: &Respondent, src: &EvalSource, mask: CriterionMask) -> Result<Classification, DecisionError> {
    decide_under_halo(&r.priorities.weights(), &src.grid_for(r), mask, r.unavailable, r.usual_mode)
        .map(|o| o.classification)
}

/// Rationality under self evaluations with each respondent's halo mask applied.
pub fn halo_rationality_report(pop: &Population) -> Result<RationalityReport, DecisionError> {
    halo_rationality_report_with(pop, &EvalSource::SelfEvals, HaloComparison::AvailableModes)
}

/// Rationality with each respondent's halo mask, computed on `src`.
pub fn halo_rationality_report_with(
    pop: &Population,
    src: &EvalSource,
    comparison: HaloComparison,
) -> Result<RationalityReport, DecisionError> {
    if pop.is_empty() {
        return Err(DecisionError::EmptyGroup("population".into()));
    }
    let mut by_mode = ModeTable::<GroupRationality>::default();
    let mut skipped = Vec::new();
    for r in pop.iter() {
        match classify_under_halo(r, src, halo_mask_with(r, src, comparison)) {
            Ok(c) => by_mode[r.usual_mode].record(c),
            Err(_) => skipped.push(r.id.clone()),
        }
    }
    Ok(RationalityReport {
        by_mode: by_mode.map(|_, g| g.finish()),
        eval_source: src.kind().to_string(),
        mask: CriterionSet::EMPTY,
        halo: true,
        skipped,
    })
}

/// `[usual mode][criterion]` = irrational respondents made rational by
/// ignoring that single criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HaloRescueTable(pub ModeTable<CriterionTable<usize>>);

impl HaloRescueTable {
    pub fn get(&self, m: Mode, c: Criterion) -> usize {
        self.0[m][c]
    }

    pub fn total(&self) -> usize {
        self.0.values().flat_map(|row| row.values()).sum()
    }
}

pub fn halo_rescue_table(pop: &Population) -> HaloRescueTable {
    let src = EvalSource::SelfEvals;
    let mut table = HaloRescueTable::default();
    for r in pop.iter() {
        if classify(r, &src, CriterionMask::NONE) != Ok(Classification::Irrational) {
            continue;
        }
        for c in Criterion::ALL {
            if classify_under_halo(r, &src, CriterionMask::single(c)) == Ok(Classification::Rational) {
                table.0[r.usual_mode][c] += 1;
            }
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReactanceScope {
    #[default]
    PromotedCriterionOnly,
    AllCriteria,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactanceParams {
    /// Rating points subtracted from a promoted cell.
    pub penalty: f64,
    pub scope: ReactanceScope,
}

impl Default for ReactanceParams {
    fn default() -> Self {
        Self { penalty: 1.0, scope: ReactanceScope::PromotedCriterionOnly }
    }
}

impl ReactanceParams {
    pub fn is_valid(&self) -> bool {
        self.penalty.is_finite() && self.penalty >= 0.0
    }
}

/// Penalize promoted cells of modes other than `chosen`, clipping to [0, 10].
pub fn apply_reactance_to_grid(
    grid: &mut EvalGrid,
    chosen: Mode,
    promoted: &[(Mode, Criterion)],
    p: &ReactanceParams,
) {
    let mut hit = ModeTable::<CriterionSet>::default();
    for &(m, c) in promoted {
        if m == chosen {
            continue;
        }
        match p.scope {
            ReactanceScope::PromotedCriterionOnly => hit[m].insert(c),
            ReactanceScope::AllCriteria => hit[m] = CriterionSet::ALL,
        }
    }
    for m in Mode::ALL {
        for c in hit[m].iter() {
            grid[m][c] = (grid[m][c] - p.penalty).clamp(0.0, 10.0);
        }
    }
}

/// The respondent's self evaluations after reactance against `promoted`.
pub fn apply_reactance(r: &Respondent, promoted: &[(Mode, Criterion)], p: &ReactanceParams) -> EvalGrid {
    let mut grid = r.evaluations.to_grid();
    apply_reactance_to_grid(&mut grid, r.usual_mode, promoted, p);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;

    #[test]
    fn medians_of_identical_respondents() {
        let evals = [[1, 2, 3, 4, 5, 6], [7, 8, 9, 10, 0, 1], [2, 2, 2, 2, 2, 2], [9, 9, 9, 9, 9, 9]];
        let pop = population((0..3).map(|i| respondent(&i.to_string(), Mode::Car, [5; 6], evals)).collect());
        let med = crowd_medians(&pop).unwrap();
        assert_eq!(med.grid(), &pop.respondents()[0].evaluations.to_grid());
    }

    #[test]
    fn even_count_median_is_midpoint() {
        let mut a = [[5; 6]; 4];
        a[Mode::Car.index()][Criterion::Time.index()] = 4;
        let mut b = [[5; 6]; 4];
        b[Mode::Car.index()][Criterion::Time.index()] = 7;
        let pop = population(vec![respondent("a", Mode::Car, [5; 6], a), respondent("b", Mode::Bus, [5; 6], b)]);
        assert_eq!(crowd_medians(&pop).unwrap().get(Mode::Car, Criterion::Time), 5.5);
        assert!(crowd_medians(&population(vec![])).is_err());
    }

    #[test]
    fn dominant_usual_mode_gets_empty_mask() {
        let mut evals = [[3; 6]; 4];
        evals[Mode::Car.index()] = [9; 6];
        let r = respondent("a", Mode::Car, [5; 6], evals);
        assert!(halo_mask(&r, &EvalSource::SelfEvals).is_empty());
    }

    #[test]
    fn cyclist_masks_safety() {
        let mut evals = [[5; 6]; 4];
        evals[Mode::Bicycle.index()] = [9, 7, 9, 8, 8, 3];
        evals[Mode::Car.index()][Criterion::Safety.index()] = 8;
        evals[Mode::Bus.index()][Criterion::Safety.index()] = 7;
        evals[Mode::Walk.index()][Criterion::Safety.index()] = 6;
        let r = respondent("a", Mode::Bicycle, [5; 6], evals);
        let mask = halo_mask(&r, &EvalSource::SelfEvals);
        assert!(mask.contains(Criterion::Safety));
        assert_eq!(mask.set().len(), 1);
    }

    #[test]
    fn tied_minimum_is_not_masked() {
        let mut evals = [[5; 6]; 4];
        evals[Mode::Bicycle.index()][Criterion::Safety.index()] = 3;
        evals[Mode::Walk.index()][Criterion::Safety.index()] = 3;
        let r = respondent("a", Mode::Bicycle, [5; 6], evals);
        assert!(!halo_mask(&r, &EvalSource::SelfEvals).contains(Criterion::Safety));
    }

    #[test]
    fn unavailable_rivals_are_ignored_unless_configured() {
        let mut evals = [[5; 6]; 4];
        evals[Mode::Bicycle.index()][Criterion::Safety.index()] = 3;
        evals[Mode::Walk.index()][Criterion::Safety.index()] = 2;
        let mut r = respondent("a", Mode::Bicycle, [5; 6], evals);
        r.unavailable = ModeSet::EMPTY.with(Mode::Walk);
        assert!(halo_mask(&r, &EvalSource::SelfEvals).contains(Criterion::Safety));
        assert!(!halo_mask_with(&r, &EvalSource::SelfEvals, HaloComparison::AllModes).contains(Criterion::Safety));
    }

    #[test]
    fn worst_everywhere_keeps_best_weighted_criterion() {
        let mut evals = [[9; 6]; 4];
        evals[Mode::Car.index()] = [1, 2, 8, 3, 4, 5];
        let r = respondent("a", Mode::Car, [5; 6], evals);
        let mask = halo_mask(&r, &EvalSource::SelfEvals);
        assert_eq!(mask.set().len(), 5);
        assert!(!mask.contains(Criterion::Finance));

        let r = respondent("b", Mode::Car, [5, 5, 0, 5, 5, 5], evals);
        let mask = halo_mask(&r, &EvalSource::SelfEvals);
        assert_eq!(mask.set().len(), 5);
        assert!(!mask.contains(Criterion::Safety));
    }

    #[test]
    fn only_mode_available_gets_empty_mask() {
        let mut r = respondent("a", Mode::Car, [5; 6], [[9; 6], [1; 6], [9; 6], [9; 6]]);
        r.unavailable = [Mode::Bicycle, Mode::Bus, Mode::Walk].into_iter().collect();
        assert!(halo_mask(&r, &EvalSource::SelfEvals).is_empty());
    }

    #[test]
    fn rescue_table_counts_single_irrational_driver() {
        // The driver loses only because of Finance; ignoring it makes Car best.
        let mut evals = [[4; 6]; 4];
        evals[Mode::Car.index()] = [6, 6, 0, 6, 6, 6];
        evals[Mode::Bus.index()] = [5, 5, 10, 5, 5, 5];
        let driver = respondent("d", Mode::Car, [5; 6], evals);
        let mut dominant = [[2; 6]; 4];
        dominant[Mode::Walk.index()] = [9; 6];
        let walker = respondent("w", Mode::Walk, [5; 6], dominant);
        let table = halo_rescue_table(&population(vec![driver, walker]));
        assert_eq!(table.get(Mode::Car, Criterion::Finance), 1);
        assert_eq!(table.total(), 1);
    }

    #[test]
    fn all_rational_population_has_empty_rescue_table() {
        let pop = population(
            Mode::ALL
                .iter()
                .map(|&m| {
                    let mut evals = [[2; 6]; 4];
                    evals[m.index()] = [9; 6];
                    respondent(m.slug(), m, [5; 6], evals)
                })
                .collect(),
        );
        assert_eq!(halo_rescue_table(&pop).total(), 0);
    }

    #[test]
    fn reactance_cases() {
        let mut evals = [[5; 6]; 4];
        evals[Mode::Bicycle.index()][Criterion::Safety.index()] = 1;
        let driver = respondent("d", Mode::Car, [5; 6], evals);
        let promoted = [(Mode::Bicycle, Criterion::Safety)];

        let zero = ReactanceParams { penalty: 0.0, ..Default::default() };
        assert_eq!(apply_reactance(&driver, &promoted, &zero), driver.evaluations.to_grid());

        let two = ReactanceParams { penalty: 2.0, ..Default::default() };
        let g = apply_reactance(&driver, &promoted, &two);
        assert_eq!(g[Mode::Bicycle][Criterion::Safety], 0.0);
        assert_eq!(g[Mode::Bicycle][Criterion::Time], 5.0);

        let all = ReactanceParams { penalty: 2.0, scope: ReactanceScope::AllCriteria };
        let g = apply_reactance(&driver, &promoted, &all);
        assert_eq!(g[Mode::Bicycle][Criterion::Time], 3.0);
        assert_eq!(g[Mode::Car][Criterion::Time], 5.0);

        let cyclist = respondent("c", Mode::Bicycle, [5; 6], evals);
        assert_eq!(apply_reactance(&cyclist, &promoted, &two), cyclist.evaluations.to_grid());
    }

    #[test]
    fn halo_keeps_rational_driver_rational() {
        // Masking Ecology lifts the unavailable Bus above Car; the driver was
        // not constrained before and must not become so through the halo.
        let mut r = respondent(
            "d",
            Mode::Car,
            [5, 5, 0, 0, 0, 0],
            [[5, 3, 5, 5, 5, 5], [2, 8, 5, 5, 5, 5], [0, 9, 5, 5, 5, 5], [0; 6]],
        );
        r.unavailable = [Mode::Bus, Mode::Walk].into_iter().collect();
        let src = EvalSource::SelfEvals;
        let mask = halo_mask(&r, &src);
        assert_eq!(mask.set(), CriterionSet::from_iter([Criterion::Ecology]));
        assert_eq!(classify(&r, &src, CriterionMask::NONE), Ok(Classification::Rational));
        assert_eq!(classify(&r, &src, mask), Ok(Classification::Constrained));
        assert_eq!(classify_under_halo(&r, &src, mask), Ok(Classification::Rational));
    }

    #[test]
    fn halo_never_hides_every_weighted_criterion() {
        // Car is worst on the two weighted criteria only.
        let r = respondent(
            "d",
            Mode::Car,
            [5, 3, 0, 0, 0, 0],
            [[5, 5, 1, 1, 1, 1], [2, 4, 9, 9, 9, 9], [6, 6, 1, 1, 1, 1], [7, 7, 1, 1, 1, 1]],
        );
        let mask = halo_mask(&r, &EvalSource::SelfEvals);
        assert_eq!(mask.set(), CriterionSet::from_iter([Criterion::Ecology]));
    }
}
