//! Descriptive statistics over populations: mean priorities and evaluations
//! per group, score summaries, modal split, accessibility, user/non-user and
//! observer-group deviations, and gender breakdowns.
//!
//! All aggregates are computed unrounded; rounding to two decimals happens
//! only when reports are rendered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::DecisionError;
use crate::domain::{Criterion, CriterionTable, Gender, Mode, ModeTable, Population, Respondent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("empty group: {0}")]
    EmptyGroup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Usage {
    Users,
    NonUsers,
}

/// Conjunctive respondent filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupFilter {
    pub usual_mode: Option<Mode>,
    pub users_of: Option<(Mode, Usage)>,
    pub gender: Option<Gender>,
}

impl GroupFilter {
    pub const ALL: GroupFilter = GroupFilter { usual_mode: None, users_of: None, gender: None };

    pub fn usual_mode(m: Mode) -> Self {
        GroupFilter { usual_mode: Some(m), ..Self::ALL }
    }

    pub fn users(m: Mode) -> Self {
        GroupFilter { users_of: Some((m, Usage::Users)), ..Self::ALL }
    }

    pub fn non_users(m: Mode) -> Self {
        GroupFilter { users_of: Some((m, Usage::NonUsers)), ..Self::ALL }
    }

    pub fn gender(g: Gender) -> Self {
        GroupFilter { gender: Some(g), ..Self::ALL }
    }

    pub fn matches(&self, r: &Respondent) -> bool {
        self.usual_mode.is_none_or(|m| r.usual_mode == m)
            && self.users_of.is_none_or(|(m, u)| match u {
                Usage::Users => r.usual_mode == m,
                Usage::NonUsers => r.usual_mode != m,
            })
            && self.gender.is_none_or(|g| r.gender == g)
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StdevConvention {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

/// Count plus optional aggregates; aggregates are absent when `count` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsReport {
    pub count: usize,
    pub mean: Option<f64>,
    pub stdev: Option<f64>,
    pub median: Option<f64>,
}

impl StatsReport {
    pub fn of(values: &[f64], convention: StdevConvention) -> Self {
        let count = values.len();
        if count == 0 {
            return StatsReport::default();
        }
        let m = mean(values);
        let stdev = match convention {
            StdevConvention::Population => Some(variance(values, m, count as f64).sqrt()),
            StdevConvention::Sample if count > 1 => Some(variance(values, m, (count - 1) as f64).sqrt()),
            StdevConvention::Sample => None,
        };
        let mut sorted = values.to_vec();
        StatsReport { count, mean: Some(m), stdev, median: median(&mut sorted) }
    }
}

fn variance(values: &[f64], mean: f64, denom: f64) -> f64 {
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / denom
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with the midpoint convention for even counts. Sorts `values` in place.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

fn mean_table<'a>(
    group: impl Iterator<Item = &'a Respondent>,
    cell: impl Fn(&Respondent, Criterion) -> f64,
) -> Option<CriterionTable<f64>> {
    let mut sums = CriterionTable::<f64>::default();
    let mut n = 0usize;
    for r in group {
        n += 1;
        for c in Criterion::ALL {
            sums[c] += cell(r, c);
        }
    }
    (n > 0).then(|| sums.map(|_, s| s / n as f64))
}

/// Mean priority rating per criterion over the filtered group.
pub fn mean_priorities(pop: &Population, f: &GroupFilter) -> Result<CriterionTable<f64>, StatsError> {
    mean_table(pop.iter().filter(|r| f.matches(r)), |r, c| r.priorities[c].as_f64())
        .ok_or_else(|| StatsError::EmptyGroup(f.describe()))
}

/// Mean evaluation of mode `m` per criterion over the filtered group.
pub fn mean_evaluations(pop: &Population, m: Mode, f: &GroupFilter) -> Result<CriterionTable<f64>, StatsError> {
    mean_table(pop.iter().filter(|r| f.matches(r)), |r, c| r.evaluations.get(m, c).as_f64())
        .ok_or_else(|| StatsError::EmptyGroup(f.describe()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub stdev: f64,
    pub median: f64,
    pub users_mean: Option<f64>,
    pub nonusers_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub by_mode: ModeTable<ScoreSummary>,
    pub convention: StdevConvention,
    /// Respondents the scorer could not score (all priorities zero).
    pub skipped: Vec<String>,
}

/// Summary statistics of per-respondent mode scores.
pub fn score_stats(
    pop: &Population,
    convention: StdevConvention,
    scorer: impl Fn(&Respondent, Mode) -> Result<f64, DecisionError>,
) -> Result<ScoreStats, StatsError> {
    let mut all: ModeTable<Vec<f64>> = ModeTable::default();
    let mut users: ModeTable<Vec<f64>> = ModeTable::default();
    let mut others: ModeTable<Vec<f64>> = ModeTable::default();
    let mut skipped = Vec::new();
    'respondents: for r in pop.iter() {
        let mut scores = ModeTable::<f64>::default();
        for m in Mode::ALL {
            match scorer(r, m) {
                Ok(s) => scores[m] = s,
                Err(_) => {
                    skipped.push(r.id.clone());
                    continue 'respondents;
                }
            }
        }
        for m in Mode::ALL {
            all[m].push(scores[m]);
            if r.usual_mode == m { &mut users[m] } else { &mut others[m] }.push(scores[m]);
        }
    }
    if all[Mode::Bicycle].is_empty() {
        return Err(StatsError::EmptyGroup("no scorable respondents".into()));
    }
    let by_mode = ModeTable::from_fn(|m| {
        let rep = StatsReport::of(&all[m], convention);
        ScoreSummary {
            mean: rep.mean.unwrap_or_default(),
            stdev: rep.stdev.unwrap_or(0.0),
            median: rep.median.unwrap_or_default(),
            users_mean: StatsReport::of(&users[m], convention).mean,
            nonusers_mean: StatsReport::of(&others[m], convention).mean,
        }
    });
    Ok(ScoreStats { by_mode, convention, skipped })
}

/// Share of respondents per usual mode. Fractions sum to 1.
pub fn modal_split(pop: &Population) -> Result<ModeTable<f64>, StatsError> {
    if pop.is_empty() {
        return Err(StatsError::EmptyGroup("population".into()));
    }
    let counts = mode_counts(pop);
    Ok(counts.map(|_, &k| k as f64 / pop.len() as f64))
}

pub fn mode_counts(pop: &Population) -> ModeTable<usize> {
    let mut counts = ModeTable::<usize>::default();
    for r in pop.iter() {
        counts[r.usual_mode] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessibilityStats {
    /// Respondents who cannot access each mode.
    pub inaccessible: ModeTable<usize>,
    /// `histogram[k]` = respondents lacking access to exactly `k` modes (k = 0..=3).
    pub histogram: [usize; 4],
}

pub fn accessibility_stats(pop: &Population) -> AccessibilityStats {
    let mut inaccessible = ModeTable::<usize>::default();
    let mut histogram = [0usize; 4];
    for r in pop.iter() {
        for m in r.unavailable.iter() {
            inaccessible[m] += 1;
        }
        histogram[r.unavailable.len()] += 1;
    }
    AccessibilityStats { inaccessible, histogram }
}

/// Mean evaluation by users minus mean evaluation by non-users, per cell.
pub fn deviation_users_vs_nonusers(pop: &Population) -> Result<ModeTable<CriterionTable<f64>>, StatsError> {
    let mut out = ModeTable::<CriterionTable<f64>>::default();
    for m in Mode::ALL {
        let users = mean_evaluations(pop, m, &GroupFilter::users(m))
            .map_err(|_| StatsError::EmptyGroup(format!("no users of {m}")))?;
        let others = mean_evaluations(pop, m, &GroupFilter::non_users(m))
            .map_err(|_| StatsError::EmptyGroup(format!("no non-users of {m}")))?;
        out[m] = CriterionTable::from_fn(|c| users[c] - others[c]);
    }
    Ok(out)
}

/// How each observer group (by usual mode) rates each target mode, relative
/// to the whole population. Indexed `[observer][target]`.
///
/// With `criterion` set, only that criterion is compared; otherwise each
/// respondent's evaluation is first averaged over the six criteria.
pub fn pairwise_mode_deviation(
    pop: &Population,
    criterion: Option<Criterion>,
) -> Result<ModeTable<ModeTable<f64>>, StatsError> {
    let value = |r: &Respondent, target: Mode| match criterion {
        Some(c) => r.evaluations.get(target, c).as_f64(),
        None => Criterion::ALL.iter().map(|&c| r.evaluations.get(target, c).as_f64()).sum::<f64>() / 6.0,
    };
    let mut sums = ModeTable::<ModeTable<f64>>::default();
    let mut counts = ModeTable::<usize>::default();
    let mut grand = ModeTable::<f64>::default();
    for r in pop.iter() {
        counts[r.usual_mode] += 1;
        for t in Mode::ALL {
            let v = value(r, t);
            sums[r.usual_mode][t] += v;
            grand[t] += v;
        }
    }
    if let Some(m) = Mode::ALL.into_iter().find(|&m| counts[m] == 0) {
        return Err(StatsError::EmptyGroup(format!("no users of {m}")));
    }
    let n = pop.len() as f64;
    Ok(ModeTable::from_fn(|obs| {
        ModeTable::from_fn(|t| sums[obs][t] / counts[obs] as f64 - grand[t] / n)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderReport {
    pub total: usize,
    pub men: usize,
    pub women: usize,
    pub priorities_all: CriterionTable<f64>,
    pub priorities_men: CriterionTable<f64>,
    pub priorities_women: CriterionTable<f64>,
    pub evaluations_men: ModeTable<CriterionTable<f64>>,
    pub evaluations_women: ModeTable<CriterionTable<f64>>,
}

/// Men vs women breakdown. Other/NoAnswer respondents only count towards `total`.
pub fn gender_report(pop: &Population) -> Result<GenderReport, StatsError> {
    let men_f = GroupFilter::gender(Gender::Man);
    let women_f = GroupFilter::gender(Gender::Woman);
    let count = |f: &GroupFilter| pop.iter().filter(|r| f.matches(r)).count();
    let priorities_men = mean_priorities(pop, &men_f)?;
    let priorities_women = mean_priorities(pop, &women_f)?;
    let mut evaluations_men = ModeTable::default();
    let mut evaluations_women = ModeTable::default();
    for m in Mode::ALL {
        evaluations_men[m] = mean_evaluations(pop, m, &men_f)?;
        evaluations_women[m] = mean_evaluations(pop, m, &women_f)?;
    }
    Ok(GenderReport {
        total: pop.len(),
        men: count(&men_f),
        women: count(&women_f),
        priorities_all: mean_priorities(pop, &GroupFilter::ALL)?,
        priorities_men,
        priorities_women,
        evaluations_men,
        evaluations_women,
    })
}
