//! Synthetic populations calibrated to published group means.
//!
//! Every rating is drawn independently from a normal distribution, rounded to
//! the nearest integer and clipped to 0..=10. Clipping pulls the mean of
//! high-valued cells down, so the normal's location is solved per cell such
//! that the expected rounded-and-clipped rating equals the configured mean.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};
use thiserror::Error;

use crate::domain::{
    flags, Criterion, CriterionTable, EvaluationMatrix, Gender, Mode, ModeSet, ModeTable, Population,
    PriorityProfile, Provenance, Rating, Respondent,
};

const OUR_SAMPLE: &str = include_str!("../data/our_sample.json");
const FRANCE: &str = include_str!("../data/france.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("bad synthesis config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Modal split of the surveyed sample.
    OurSample,
    /// National French modal split.
    France,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMeans {
    /// Mean rating of each mode by its own users.
    pub users: ModeTable<CriterionTable<f64>>,
    /// Mean rating of each mode by users of the other modes.
    pub non_users: ModeTable<CriterionTable<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderSplit {
    pub man: f64,
    pub woman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub n: usize,
    pub seed: u64,
    pub modal_distribution: ModeTable<f64>,
    /// Mean priorities of each usual-mode group.
    pub priority_means: ModeTable<CriterionTable<f64>>,
    pub evaluation_means: EvaluationMeans,
    pub sigma: f64,
    pub unavailability_prob: ModeTable<f64>,
    pub gender_split: GenderSplit,
}

pub fn default_config(profile: Profile) -> SynthesisConfig {
    let raw = match profile {
        Profile::OurSample => OUR_SAMPLE,
        Profile::France => FRANCE,
    };
    serde_json::from_str(raw).expect("embedded profile is valid")
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::BadConfig(msg));
        let total: f64 = self.modal_distribution.values().sum();
        if self.modal_distribution.values().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("modal_distribution must be fractions summing to 1 (got {total})"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive (got {})", self.sigma));
        }
        let tables = [
            ("priority_means", &self.priority_means),
            ("evaluation_means.users", &self.evaluation_means.users),
            ("evaluation_means.non_users", &self.evaluation_means.non_users),
        ];
        for (name, table) in tables {
            for (m, row) in table.iter() {
                for (c, v) in row.iter() {
                    if !(0.0..=10.0).contains(v) {
                        return bad(format!("{name}[{m}][{c}] = {v} outside [0, 10]"));
                    }
                }
            }
        }
        if self.unavailability_prob.values().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("unavailability_prob entries must lie in [0, 1]".into());
        }
        let GenderSplit { man, woman } = self.gender_split;
        if man < 0.0 || woman < 0.0 || ((man + woman) - 1.0).abs() > 1e-9 {
            return bad("gender_split must be non-negative and sum to 1".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is serializable");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Expected value of `clip(round(N(location, sigma)), 0, 10)`.
pub fn expected_rounded_clipped(location: f64, sigma: f64) -> f64 {
    let z = NormalCdf::new(location, sigma).expect("sigma > 0");
    // P(X >= k - 0.5) summed over k = 1..=10 gives E[clip(round(X))].
    (1..=10).map(|k| 1.0 - z.cdf(f64::from(k) - 0.5)).sum()
}

/// Location whose rounded-and-clipped normal has mean `target`.
pub fn latent_location(target: f64, sigma: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0 - 8.0 * sigma, 20.0 + 8.0 * sigma);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected_rounded_clipped(mid, sigma) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Samplers {
    priorities: ModeTable<CriterionTable<Normal<f64>>>,
    users: ModeTable<CriterionTable<Normal<f64>>>,
    non_users: ModeTable<CriterionTable<Normal<f64>>>,
}

impl Samplers {
    fn new(cfg: &SynthesisConfig) -> Self {
        let make = |t: &ModeTable<CriterionTable<f64>>| {
            t.map(|_, row| {
                row.map(|_, &mean| Normal::new(latent_location(mean, cfg.sigma), cfg.sigma).expect("sigma > 0"))
            })
        };
        Samplers {
            priorities: make(&cfg.priority_means),
            users: make(&cfg.evaluation_means.users),
            non_users: make(&cfg.evaluation_means.non_users),
        }
    }
}

fn draw_rating(dist: &Normal<f64>, rng: &mut impl Rng) -> Rating {
    let v = dist.sample(rng).round().clamp(0.0, 10.0);
    Rating::new(v as i64).expect("clamped")
}

/// Generate `cfg.n` respondents; the same config always yields the same population.
pub fn synthesize(cfg: &SynthesisConfig) -> Result<Population, SynthError> {
    cfg.validate()?;
    let samplers = Samplers::new(cfg);
    let modes = WeightedIndex::new(cfg.modal_distribution.0).map_err(|e| SynthError::BadConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p_man = cfg.gender_split.man;
    let width = cfg.n.to_string().len().max(4);

    let mut respondents = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let usual_mode = Mode::ALL[modes.sample(&mut rng)];
        let gender = if rng.random_bool(p_man) { Gender::Man } else { Gender::Woman };

        let mut unavailable = ModeSet::EMPTY;
        for m in Mode::ALL {
            let blocked = rng.random_bool(cfg.unavailability_prob[m]);
            if blocked && m != usual_mode {
                unavailable.insert(m);
            }
        }

        let priorities =
            PriorityProfile(CriterionTable::from_fn(|c| draw_rating(&samplers.priorities[usual_mode][c], &mut rng)));
        let evaluations = EvaluationMatrix(ModeTable::from_fn(|m| {
            let table = if m == usual_mode { &samplers.users } else { &samplers.non_users };
            CriterionTable::from_fn(|c: Criterion| draw_rating(&table[m][c], &mut rng))
        }));

        let mut outlier_flags = BTreeSet::from([flags::SYNTHETIC.to_string()]);
        if priorities.is_all_zero() {
            outlier_flags.insert(flags::ZERO_PRIORITIES.to_string());
        }
        respondents.push(Respondent {
            id: format!("s{i:0width$}"),
            gender,
            usual_mode,
            distance_km: 0.0,
            trips_per_week: 0.0,
            unavailable,
            priorities,
            evaluations,
            outlier_flags,
        });
    }
    Population::new(respondents, Provenance::Synthetic { seed: cfg.seed, config_digest: cfg.digest() })
        .map_err(|e| SynthError::BadConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::write_canonical_json;

    fn small(n: usize, seed: u64) -> SynthesisConfig {
        SynthesisConfig { n, seed, ..default_config(Profile::OurSample) }
    }

    #[test]
    fn profiles_embed_published_values() {
        let ours = default_config(Profile::OurSample);
        assert_eq!(ours.modal_distribution.0, [0.314, 0.206, 0.351, 0.129]);
        let fr = default_config(Profile::France);
        assert_eq!(fr.modal_distribution.0, [0.02, 0.76, 0.06, 0.16]);
        for cfg in [&ours, &fr] {
            assert_eq!(cfg.priority_means[Mode::Car][Criterion::Ecology], 5.65);
            assert_eq!(cfg.evaluation_means.users[Mode::Bus][Criterion::Time], 6.81);
            assert!(cfg.validate().is_ok());
        }
    }

    #[test]
    fn empty_population_for_zero_n() {
        let pop = synthesize(&small(0, 1)).unwrap();
        assert!(pop.is_empty());
    }

    #[test]
    fn seeded_determinism() {
        let a = synthesize(&small(200, 9)).unwrap();
        let b = synthesize(&small(200, 9)).unwrap();
        assert_eq!(write_canonical_json(&a), write_canonical_json(&b));
        let c = synthesize(&small(200, 10)).unwrap();
        assert_ne!(write_canonical_json(&a), write_canonical_json(&c));
    }

    #[test]
    fn respondents_satisfy_invariants() {
        let pop = synthesize(&small(2000, 3)).unwrap();
        for r in pop.iter() {
            assert!(r.is_available(r.usual_mode));
            assert!(r.validate().is_ok());
        }
    }

    #[test]
    fn calibration_inverts_clipping() {
        for target in [0.5, 2.69, 5.0, 8.57, 9.83] {
            let loc = latent_location(target, 1.8);
            assert!((expected_rounded_clipped(loc, 1.8) - target).abs() < 1e-9, "{target}");
        }
        assert!(latent_location(9.83, 1.8) > 10.0);
    }

    #[test]
    fn expected_value_matches_summation_oracle() {
        // Independent route: integrate the rounded, clipped value bin by bin.
        let (loc, sigma) = (8.2, 1.8);
        let z = NormalCdf::new(loc, sigma).unwrap();
        let mut direct = 10.0 * (1.0 - z.cdf(9.5));
        for k in 1..10 {
            direct += f64::from(k) * (z.cdf(f64::from(k) + 0.5) - z.cdf(f64::from(k) - 0.5));
        }
        assert!((expected_rounded_clipped(loc, sigma) - direct).abs() < 1e-12);
    }

    #[test]
    fn bad_configs() {
        let mut cfg = small(10, 1);
        cfg.modal_distribution[Mode::Car] += 0.1;
        assert!(synthesize(&cfg).is_err());
        let mut cfg = small(10, 1);
        cfg.sigma = 0.0;
        assert!(synthesize(&cfg).is_err());
        let mut cfg = small(10, 1);
        cfg.priority_means[Mode::Walk][Criterion::Time] = 11.0;
        assert!(synthesize(&cfg).is_err());
        let mut cfg = small(10, 1);
        cfg.gender_split.man = 0.9;
        assert!(synthesize(&cfg).is_err());
    }
}
