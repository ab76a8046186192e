//! Random respondents and an exact-arithmetic reference classifier shared by
//! the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::Rng;

use modalsim_core::decision::{Classification, Override};
use modalsim_core::{
    Criterion, CriterionSet, CriterionTable, EvaluationMatrix, Gender, Mode, ModeSet, ModeTable, PriorityProfile,
    Rating, Respondent,
};

fn rating(v: u8) -> Rating {
    Rating::new(i64::from(v)).unwrap()
}

/// Ratings are drawn from one of three styles so that exact ties are common.
pub fn random_respondent(rng: &mut impl Rng, id: usize) -> Respondent {
    let style = rng.random_range(0..3);
    let draw = |rng: &mut dyn rand::RngCore| -> u8 {
        match style {
            0 => rng.random_range(0..=10),
            1 => rng.random_range(4..=6),
            _ => {
                if rng.random_bool(0.5) {
                    0
                } else {
                    10
                }
            }
        }
    };
    let evaluations = EvaluationMatrix(ModeTable::from_fn(|_| CriterionTable::from_fn(|_| rating(draw(rng)))));
    let zero = rng.random_bool(0.03);
    let priorities = PriorityProfile(CriterionTable::from_fn(|_| {
        if zero || rng.random_bool(0.15) {
            rating(0)
        } else {
            rating(rng.random_range(1..=10))
        }
    }));
    let usual_mode = Mode::ALL[rng.random_range(0..4)];
    let mut unavailable = ModeSet::EMPTY;
    for m in Mode::ALL {
        if m != usual_mode && rng.random_bool(0.25) {
            unavailable.insert(m);
        }
    }
    Respondent {
        id: format!("r{id}"),
        gender: if rng.random_bool(0.5) { Gender::Man } else { Gender::Woman },
        usual_mode,
        distance_km: 0.0,
        trips_per_week: 0.0,
        unavailable,
        priorities,
        evaluations,
        outlier_flags: BTreeSet::new(),
    }
}

pub fn random_mask(rng: &mut impl Rng) -> CriterionSet {
    if rng.random_bool(0.5) {
        return CriterionSet::EMPTY;
    }
    loop {
        let set: CriterionSet = Criterion::ALL.into_iter().filter(|_| rng.random_bool(0.3)).collect();
        if set != CriterionSet::ALL {
            return set;
        }
    }
}

pub fn random_overrides(rng: &mut impl Rng, max: usize) -> Vec<Override> {
    let mut out: Vec<Override> = Vec::new();
    for _ in 0..rng.random_range(1..=max) {
        let mode = Mode::ALL[rng.random_range(0..4)];
        let criterion = Criterion::ALL[rng.random_range(0..6)];
        if out.iter().any(|o| (o.mode, o.criterion) == (mode, criterion)) {
            continue;
        }
        out.push(Override { mode, criterion, value: rating(rng.random_range(0..=10)) });
    }
    out
}

/// Reference classifier: explicit loops, scores as exact fractions.
pub fn oracle_classify(r: &Respondent, overrides: &[Override], mask: CriterionSet) -> Option<Classification> {
    let val = |m: Mode, c: Criterion| -> i64 {
        overrides
            .iter()
            .find(|o| o.mode == m && o.criterion == c)
            .map(|o| i64::from(o.value.get()))
            .unwrap_or_else(|| i64::from(r.evaluations.get(m, c).get()))
    };
    let mut denom = 0i64;
    for c in Criterion::ALL {
        if !mask.contains(c) {
            denom += i64::from(r.priorities[c].get());
        }
    }
    if denom == 0 {
        return None;
    }
    let mut scores = [Ratio::from_integer(0i64); 4];
    for (i, m) in Mode::ALL.into_iter().enumerate() {
        let mut num = 0i64;
        for c in Criterion::ALL {
            if !mask.contains(c) {
                num += i64::from(r.priorities[c].get()) * val(m, c);
            }
        }
        scores[i] = Ratio::new(num, denom);
    }
    let best = *scores.iter().max().unwrap();
    let mut every_best_unavailable = true;
    for (i, m) in Mode::ALL.into_iter().enumerate() {
        if scores[i] == best && !r.unavailable.contains(m) {
            every_best_unavailable = false;
        }
    }
    if every_best_unavailable {
        return Some(Classification::Constrained);
    }
    let mut best_available = None;
    for (i, m) in Mode::ALL.into_iter().enumerate() {
        if !r.unavailable.contains(m) && best_available.is_none_or(|b| scores[i] > b) {
            best_available = Some(scores[i]);
        }
    }
    if Some(scores[r.usual_mode.index()]) == best_available {
        Some(Classification::Rational)
    } else {
        Some(Classification::Irrational)
    }
}
