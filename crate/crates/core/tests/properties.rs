mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use modalsim_core::bias::{apply_reactance, crowd_medians, ReactanceParams, ReactanceScope};
use modalsim_core::decision::{
    argmax, classify, decide, mode_scores, score, Classification, CriterionMask, EvalSource,
};
use modalsim_core::snapshot::{read_canonical_json, write_canonical_json};
use modalsim_core::stats::{
    deviation_users_vs_nonusers, mean_evaluations, mean_priorities, modal_split, pairwise_mode_deviation,
    GroupFilter,
};
use modalsim_core::survey::{parse_survey_csv, write_survey_csv, SchemaMap};
use modalsim_core::{Criterion, Mode, ModeSet, ModeTable, Population, Provenance, Rating, Respondent};

use common::random_respondent;

fn population(seed: u64, n: usize) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rs = (0..n).map(|i| random_respondent(&mut rng, i)).collect();
    Population::new(rs, Provenance::Synthetic { seed, config_digest: "test".into() }).unwrap()
}

fn shuffled(pop: &Population, seed: u64) -> Population {
    let mut rs = pop.respondents().to_vec();
    rs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Population::new(rs, pop.provenance().clone()).unwrap()
}

const CELL_NOISE: &[&str] = &["", " ", "11", "-1", "7.5", "abc", "car", "velo", "Bus;Car", "1e3", "\u{e9}", "10", "0"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fuzzed_csv_parses_or_fails_typed(
        seed in any::<u64>(),
        n in 1usize..8,
        edits in prop::collection::vec((0usize..8, 0usize..64, 0usize..CELL_NOISE.len()), 0..6),
    ) {
        let schema = SchemaMap::default();
        let csv = String::from_utf8(write_survey_csv(&population(seed, n), &schema).unwrap()).unwrap();
        let mut rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
        for (row, col, noise) in edits {
            let row = 1 + row % n;
            let col = col % rows[row].len();
            rows[row][col] = CELL_NOISE[noise].to_string();
        }
        let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
        match parse_survey_csv(text.as_bytes(), &schema, "fuzz") {
            Ok(pop) => {
                prop_assert_eq!(pop.len(), n);
                for r in pop.iter() {
                    prop_assert!(r.validate().is_ok());
                    prop_assert!(r.is_available(r.usual_mode));
                }
            }
            Err(e) => prop_assert!(!e.kind().is_empty()),
        }
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..20) {
        let pop = population(seed, n);
        let schema = SchemaMap::default();
        let bytes = write_survey_csv(&pop, &schema).unwrap();
        let back = parse_survey_csv(bytes.as_slice(), &schema, "rt").unwrap();
        for (a, b) in pop.iter().zip(back.iter()) {
            prop_assert_eq!(&a.priorities, &b.priorities);
            prop_assert_eq!(&a.evaluations, &b.evaluations);
            prop_assert_eq!(a.usual_mode, b.usual_mode);
            prop_assert_eq!(a.unavailable, b.unavailable);
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 0usize..20) {
        let pop = population(seed, n);
        let bytes = write_canonical_json(&pop);
        let back = read_canonical_json(&bytes).unwrap();
        prop_assert_eq!(&back, &pop);
        prop_assert_eq!(write_canonical_json(&back), bytes);
    }

    #[test]
    fn group_means_lie_within_bounds(seed in any::<u64>(), n in 1usize..60) {
        let pop = population(seed, n);
        let pri = mean_priorities(&pop, &GroupFilter::ALL).unwrap();
        for c in Criterion::ALL {
            let vals: Vec<f64> = pop.iter().map(|r| r.priorities[c].as_f64()).collect();
            let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            prop_assert!(lo - 1e-12 <= pri[c] && pri[c] <= hi + 1e-12);
        }
        let med = crowd_medians(&pop).unwrap();
        for m in Mode::ALL {
            let ev = mean_evaluations(&pop, m, &GroupFilter::ALL).unwrap();
            for c in Criterion::ALL {
                let vals: Vec<f64> = pop.iter().map(|r| r.evaluations.get(m, c).as_f64()).collect();
                let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
                prop_assert!(lo - 1e-12 <= ev[c] && ev[c] <= hi + 1e-12);
                prop_assert!(lo <= med.get(m, c) && med.get(m, c) <= hi);
            }
        }
        let split = modal_split(&pop).unwrap();
        prop_assert!((split.values().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn statistics_ignore_respondent_order(seed in any::<u64>(), n in 8usize..60, shuffle in any::<u64>()) {
        let pop = population(seed, n);
        let other = shuffled(&pop, shuffle);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        let (a, b) = (mean_priorities(&pop, &GroupFilter::ALL).unwrap(), mean_priorities(&other, &GroupFilter::ALL).unwrap());
        prop_assert!(Criterion::ALL.iter().all(|&c| close(a[c], b[c])));
        prop_assert_eq!(crowd_medians(&pop).unwrap(), crowd_medians(&other).unwrap());
        if let (Ok(a), Ok(b)) = (deviation_users_vs_nonusers(&pop), deviation_users_vs_nonusers(&other)) {
            prop_assert!(Mode::ALL.iter().all(|&m| Criterion::ALL.iter().all(|&c| close(a[m][c], b[m][c]))));
        }
        if let (Ok(a), Ok(b)) = (pairwise_mode_deviation(&pop, None), pairwise_mode_deviation(&other, None)) {
            prop_assert!(Mode::ALL.iter().all(|&o| Mode::ALL.iter().all(|&t| close(a[o][t], b[o][t]))));
        }
    }

    #[test]
    fn deviation_is_users_minus_non_users(seed in any::<u64>(), n in 8usize..60) {
        let pop = population(seed, n);
        if let Ok(dev) = deviation_users_vs_nonusers(&pop) {
            for m in Mode::ALL {
                let u = mean_evaluations(&pop, m, &GroupFilter::users(m)).unwrap();
                let o = mean_evaluations(&pop, m, &GroupFilter::non_users(m)).unwrap();
                for c in Criterion::ALL {
                    prop_assert_eq!(dev[m][c], u[c] - o[c]);
                }
            }
        }
    }

    #[test]
    fn scores_stay_on_the_rating_scale(seed in any::<u64>()) {
        let pop = population(seed, 16);
        for r in pop.iter().filter(|r| !r.priorities.is_all_zero()) {
            for m in Mode::ALL {
                let s = score(r, m, &EvalSource::SelfEvals, CriterionMask::NONE).unwrap();
                prop_assert!((0.0..=10.0).contains(&s));
                let perfect = Criterion::ALL
                    .iter()
                    .all(|&c| r.priorities[c].get() == 0 || r.evaluations.get(m, c).get() == 10);
                prop_assert_eq!(s == 10.0, perfect);
            }
        }
    }

    #[test]
    fn raw_sum_and_average_rank_alike(seed in any::<u64>()) {
        let pop = population(seed, 16);
        for r in pop.iter().filter(|r| !r.priorities.is_all_zero()) {
            let w = r.priorities.weights();
            let grid = r.evaluations.to_grid();
            let avg = mode_scores(&w, &grid, CriterionMask::NONE).unwrap();
            let raw: ModeTable<f64> = ModeTable::from_fn(|m| {
                Criterion::ALL.iter().map(|&c| w[c] * grid[m][c]).sum()
            });
            let raw_best = {
                let best = raw.values().cloned().fold(f64::MIN, f64::max);
                Mode::ALL.into_iter().filter(|&m| raw[m] == best).collect::<ModeSet>()
            };
            prop_assert_eq!(argmax(&avg, ModeSet::ALL), raw_best);
        }
    }

    #[test]
    fn raising_own_mode_never_makes_rational_irrational(seed in any::<u64>(), c in 0usize..6, bump in 1u8..=10) {
        let pop = population(seed, 16);
        let c = Criterion::ALL[c];
        for r in pop.iter() {
            if classify(r, &EvalSource::SelfEvals, CriterionMask::NONE) != Ok(Classification::Rational) {
                continue;
            }
            let mut better: Respondent = r.clone();
            let v = (r.evaluations.get(r.usual_mode, c).get() + bump).min(10);
            better.evaluations.set(r.usual_mode, c, Rating::new(i64::from(v)).unwrap());
            prop_assert_eq!(classify(&better, &EvalSource::SelfEvals, CriterionMask::NONE), Ok(Classification::Rational));
        }
    }

    #[test]
    fn reactance_is_bounded_and_zero_is_identity(seed in any::<u64>(), penalty in 0.0f64..12.0, all in any::<bool>()) {
        let pop = population(seed, 8);
        let promoted = [(Mode::Bicycle, Criterion::Safety), (Mode::Bus, Criterion::Finance)];
        let scope = if all { ReactanceScope::AllCriteria } else { ReactanceScope::PromotedCriterionOnly };
        for r in pop.iter() {
            let g = apply_reactance(r, &promoted, &ReactanceParams { penalty, scope });
            prop_assert!(Mode::ALL.iter().all(|&m| g[m].values().all(|v| (0.0..=10.0).contains(v))));
            let same = apply_reactance(r, &promoted, &ReactanceParams { penalty: 0.0, scope });
            prop_assert_eq!(same, r.evaluations.to_grid());
            prop_assert_eq!(g[r.usual_mode], r.evaluations.to_grid()[r.usual_mode]);
        }
    }
}

#[test]
fn decide_reports_accessible_best_only() {
    let pop = population(5, 500);
    for r in pop.iter().filter(|r| !r.priorities.is_all_zero()) {
        let out = decide(r, &EvalSource::SelfEvals, CriterionMask::NONE).unwrap();
        assert!(out.best_available.is_subset(r.available()));
        assert!(!out.best_available.is_empty());
    }
}
