//! Core domain types: modes, criteria, ratings, respondents and populations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A decision criterion, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Ecology,
    Comfort,
    Finance,
    Practicality,
    Time,
    Safety,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Ecology,
        Criterion::Comfort,
        Criterion::Finance,
        Criterion::Practicality,
        Criterion::Time,
        Criterion::Safety,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Criterion::Ecology => "Ecology",
            Criterion::Comfort => "Comfort",
            Criterion::Finance => "Finance",
            Criterion::Practicality => "Practicality",
            Criterion::Time => "Time",
            Criterion::Safety => "Safety",
        }
    }

    /// Lower-case token used in column names and CLI flags.
    pub const fn slug(self) -> &'static str {
        match self {
            Criterion::Ecology => "ecology",
            Criterion::Comfort => "comfort",
            Criterion::Finance => "finance",
            Criterion::Practicality => "practicality",
            Criterion::Time => "time",
            Criterion::Safety => "safety",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.slug().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A mobility mode, in canonical order (Bicycle, Car, Bus, Walk).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    Bicycle,
    Car,
    Bus,
    Walk,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Bicycle, Mode::Car, Mode::Bus, Mode::Walk];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Mode::Bicycle => "Bicycle",
            Mode::Car => "Car",
            Mode::Bus => "Bus",
            Mode::Walk => "Walk",
        }
    }

    pub const fn slug(self) -> &'static str {
        match self {
            Mode::Bicycle => "bicycle",
            Mode::Car => "car",
            Mode::Bus => "bus",
            Mode::Walk => "walk",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.slug().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Woman,
    Man,
    Other,
    NoAnswer,
}

impl Gender {
    pub const ALL: [Gender; 4] = [Gender::Woman, Gender::Man, Gender::Other, Gender::NoAnswer];
}

macro_rules! keyed_table {
    ($(#[$meta:meta])* $name:ident, $key:ident, $n:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
        pub struct $name<T>(pub [T; $n]);

        impl<T> $name<T> {
            pub fn from_fn(mut f: impl FnMut($key) -> T) -> Self {
                Self(std::array::from_fn(|i| f($key::ALL[i])))
            }

            pub fn iter(&self) -> impl Iterator<Item = ($key, &T)> + '_ {
                $key::ALL.into_iter().zip(self.0.iter())
            }

            pub fn values(&self) -> impl Iterator<Item = &T> + '_ {
                self.0.iter()
            }

            pub fn map<U>(&self, mut f: impl FnMut($key, &T) -> U) -> $name<U> {
                $name::from_fn(|k| f(k, &self[k]))
            }
        }

        impl<T> std::ops::Index<$key> for $name<T> {
            type Output = T;
            fn index(&self, k: $key) -> &T {
                &self.0[k.index()]
            }
        }

        impl<T> std::ops::IndexMut<$key> for $name<T> {
            fn index_mut(&mut self, k: $key) -> &mut T {
                &mut self.0[k.index()]
            }
        }

        impl<T: Serialize> Serialize for $name<T> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some($n))?;
                for (k, v) in self.iter() {
                    map.serialize_entry(k.name(), v)?;
                }
                map.end()
            }
        }

        impl<'de, T: Deserialize<'de>> Deserialize<'de> for $name<T> {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let mut raw: BTreeMap<$key, T> = BTreeMap::deserialize(d)?;
                if let Some(missing) = $key::ALL.into_iter().find(|k| !raw.contains_key(k)) {
                    return Err(de::Error::custom(format!("missing key {}", missing.name())));
                }
                Ok(Self::from_fn(|k| raw.remove(&k).expect("checked above")))
            }
        }
    };
}

keyed_table!(
    /// One value per criterion, stored in canonical criterion order.
    CriterionTable,
    Criterion,
    6
);
keyed_table!(
    /// One value per mode, stored in canonical mode order.
    ModeTable,
    Mode,
    4
);

/// Real-valued 4x6 evaluation grid, indexed `[mode][criterion]`.
pub type EvalGrid = ModeTable<CriterionTable<f64>>;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("rating {0} outside 0..=10")]
pub struct RatingOutOfRange(pub i64);

/// A Likert point on the 0..=10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Rating(u8);

impl Rating {
    pub const MAX: Rating = Rating(10);
    pub const MIN: Rating = Rating(0);

    pub fn new(v: i64) -> Result<Self, RatingOutOfRange> {
        if (0..=10).contains(&v) {
            Ok(Rating(v as u8))
        } else {
            Err(RatingOutOfRange(v))
        }
    }

    pub const fn get(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<i64> for Rating {
    type Error = RatingOutOfRange;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Rating::new(v)
    }
}

impl From<Rating> for u8 {
    fn from(r: Rating) -> u8 {
        r.0
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Personal importance of each criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityProfile(pub CriterionTable<Rating>);

impl PriorityProfile {
    pub fn weights(&self) -> CriterionTable<f64> {
        self.0.map(|_, r| r.as_f64())
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.values().all(|r| r.get() == 0)
    }
}

impl std::ops::Index<Criterion> for PriorityProfile {
    type Output = Rating;
    fn index(&self, c: Criterion) -> &Rating {
        &self.0[c]
    }
}

/// Personal rating of every mode on every criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvaluationMatrix(pub ModeTable<CriterionTable<Rating>>);

impl EvaluationMatrix {
    pub fn get(&self, m: Mode, c: Criterion) -> Rating {
        self.0[m][c]
    }

    pub fn set(&mut self, m: Mode, c: Criterion, r: Rating) {
        self.0[m][c] = r;
    }

    pub fn to_grid(&self) -> EvalGrid {
        self.0.map(|_, row| row.map(|_, r| r.as_f64()))
    }
}

/// Compact set of modes. Serializes as a list in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const EMPTY: ModeSet = ModeSet(0);
    pub const ALL: ModeSet = ModeSet(0b1111);

    pub fn contains(self, m: Mode) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn insert(&mut self, m: Mode) {
        self.0 |= 1 << m.index();
    }

    pub fn remove(&mut self, m: Mode) {
        self.0 &= !(1 << m.index());
    }

    pub fn with(mut self, m: Mode) -> Self {
        self.insert(m);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self) -> Self {
        ModeSet(!self.0 & Self::ALL.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ModeSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Mode> {
        Mode::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    pub fn first(self) -> Option<Mode> {
        self.iter().next()
    }
}

impl FromIterator<Mode> for ModeSet {
    fn from_iter<I: IntoIterator<Item = Mode>>(iter: I) -> Self {
        let mut s = ModeSet::EMPTY;
        for m in iter {
            s.insert(m);
        }
        s
    }
}

impl Serialize for ModeSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for m in self.iter() {
            seq.serialize_element(&m)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ModeSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<Mode>::deserialize(d)?.into_iter().collect())
    }
}

/// Compact set of criteria. Serializes as a list in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CriterionSet(u8);

impl CriterionSet {
    pub const EMPTY: CriterionSet = CriterionSet(0);
    pub const ALL: CriterionSet = CriterionSet(0b11_1111);

    pub fn contains(self, c: Criterion) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn insert(&mut self, c: Criterion) {
        self.0 |= 1 << c.index();
    }

    pub fn remove(&mut self, c: Criterion) {
        self.0 &= !(1 << c.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<Criterion> for CriterionSet {
    fn from_iter<I: IntoIterator<Item = Criterion>>(iter: I) -> Self {
        let mut s = CriterionSet::EMPTY;
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl Serialize for CriterionSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for c in self.iter() {
            seq.serialize_element(&c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CriterionSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<Criterion>::deserialize(d)?.into_iter().collect())
    }
}

/// Flags attached to respondents whose raw answers looked abnormal.
pub mod flags {
    pub const DISTANCE_OUTLIER: &str = "distance_outlier";
    pub const TRIPS_OUTLIER: &str = "trips_outlier";
    pub const ZERO_PRIORITIES: &str = "zero_priorities";
    pub const USUAL_MODE_MARKED_UNAVAILABLE: &str = "usual_mode_marked_unavailable";
    pub const SYNTHETIC: &str = "synthetic";
}

/// One survey answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub gender: Gender,
    pub usual_mode: Mode,
    pub distance_km: f64,
    pub trips_per_week: f64,
    pub unavailable: ModeSet,
    pub priorities: PriorityProfile,
    pub evaluations: EvaluationMatrix,
    #[serde(default)]
    pub outlier_flags: BTreeSet<String>,
}

impl Respondent {
    pub fn available(&self) -> ModeSet {
        self.unavailable.complement()
    }

    pub fn is_available(&self, m: Mode) -> bool {
        !self.unavailable.contains(m)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.unavailable == ModeSet::ALL {
            return Err(PopulationError::AllModesUnavailable { id: self.id.clone() });
        }
        if self.unavailable.contains(self.usual_mode) {
            return Err(PopulationError::UsualModeUnavailable { id: self.id.clone() });
        }
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite())
            || !(self.trips_per_week >= 0.0 && self.trips_per_week.is_finite())
        {
            return Err(PopulationError::NegativeQuantity { id: self.id.clone() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Survey { source: String, row_count: usize },
    Synthetic { seed: u64, config_digest: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PopulationError {
    #[error("duplicate respondent id {0:?}")]
    DuplicateId(String),
    #[error("respondent {id:?} has no accessible mode")]
    AllModesUnavailable { id: String },
    #[error("respondent {id:?} lists their usual mode as unavailable")]
    UsualModeUnavailable { id: String },
    #[error("respondent {id:?} has a negative or non-finite distance/trip count")]
    NegativeQuantity { id: String },
}

/// An immutable, validated collection of respondents.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    respondents: Arc<[Respondent]>,
    provenance: Provenance,
}

impl Population {
    pub fn new(respondents: Vec<Respondent>, provenance: Provenance) -> Result<Self, PopulationError> {
        let mut seen = HashSet::with_capacity(respondents.len());
        for r in &respondents {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(PopulationError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { respondents: respondents.into(), provenance })
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Respondent> {
        self.respondents.iter()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn ratings(v: [u8; 6]) -> CriterionTable<Rating> {
        CriterionTable::from_fn(|c| Rating::new(i64::from(v[c.index()])).unwrap())
    }

    pub fn respondent(id: &str, usual: Mode, prio: [u8; 6], evals: [[u8; 6]; 4]) -> Respondent {
        Respondent {
            id: id.to_string(),
            gender: Gender::Woman,
            usual_mode: usual,
            distance_km: 5.0,
            trips_per_week: 5.0,
            unavailable: ModeSet::EMPTY,
            priorities: PriorityProfile(ratings(prio)),
            evaluations: EvaluationMatrix(ModeTable::from_fn(|m| ratings(evals[m.index()]))),
            outlier_flags: BTreeSet::new(),
        }
    }

    pub fn population(rs: Vec<Respondent>) -> Population {
        Population::new(rs, Provenance::Survey { source: "fixture".into(), row_count: 0 }).unwrap()
    }
}
