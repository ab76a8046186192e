//! Survey CSV ingestion.
//!
//! Column names are never hard-coded: a [`SchemaMap`] binds every logical
//! field to a header name. The defaults are the logical names themselves
//! (`gender`, `usual_mode`, `prio_ecology`, `eval_bicycle_ecology`, ...), and a
//! JSON schema file can override any subset of them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    flags, Criterion, CriterionTable, EvaluationMatrix, Gender, Mode, ModeSet, ModeTable, Population,
    PopulationError, PriorityProfile, Provenance, Rating, Respondent,
};

pub const DISTANCE_OUTLIER_KM: f64 = 200.0;
pub const TRIPS_OUTLIER_PER_WEEK: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },
    #[error("row {row}, column {column:?}: bad rating {value:?}")]
    BadRating { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: unrecognized mode {value:?}")]
    BadMode { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: unrecognized gender {value:?}")]
    BadGender { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: bad non-negative number {value:?}")]
    BadNumber { row: usize, column: String, value: String },
    #[error("row {row}: all four modes are unavailable")]
    AllModesUnavailable { row: usize },
    #[error("row {row}: {source}")]
    Invalid { row: usize, source: PopulationError },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("bad schema map: {0}")]
    Schema(String),
}

impl ParseError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MissingColumn { .. } => "MissingColumn",
            ParseError::BadRating { .. } => "BadRating",
            ParseError::BadMode { .. } => "BadMode",
            ParseError::BadGender { .. } => "BadGender",
            ParseError::BadNumber { .. } => "BadNumber",
            ParseError::AllModesUnavailable { .. } => "AllModesUnavailable",
            ParseError::Invalid { .. } => "InvalidRespondent",
            ParseError::Csv(_) => "MalformedCsv",
            ParseError::Schema(_) => "BadSchema",
        }
    }

    pub fn row(&self) -> Option<usize> {
        match self {
            ParseError::BadRating { row, .. }
            | ParseError::BadMode { row, .. }
            | ParseError::BadGender { row, .. }
            | ParseError::BadNumber { row, .. }
            | ParseError::AllModesUnavailable { row }
            | ParseError::Invalid { row, .. } => Some(*row),
            _ => None,
        }
    }

    pub fn column(&self) -> Option<&str> {
        match self {
            ParseError::MissingColumn { column }
            | ParseError::BadRating { column, .. }
            | ParseError::BadMode { column, .. }
            | ParseError::BadGender { column, .. }
            | ParseError::BadNumber { column, .. } => Some(column),
            _ => None,
        }
    }
}

/// Binding from logical survey fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaMap {
    /// Optional respondent id column; rows get `row-<n>` ids when absent.
    pub id: String,
    pub gender: String,
    pub usual_mode: String,
    pub distance_km: String,
    pub trips_per_week: String,
    pub unavailable_modes: String,
    /// Separator between tokens of the unavailable-modes cell.
    pub unavailable_separator: String,
    /// Overrides for `prio_<criterion>` columns, keyed by criterion slug.
    pub priorities: BTreeMap<String, String>,
    /// Overrides for `eval_<mode>_<criterion>` columns, keyed by `<mode>_<criterion>`.
    pub evaluations: BTreeMap<String, String>,
    /// Extra case-insensitive tokens recognized as modes.
    pub mode_tokens: BTreeMap<String, Mode>,
    /// Extra case-insensitive tokens recognized as genders.
    pub gender_tokens: BTreeMap<String, Gender>,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            gender: "gender".into(),
            usual_mode: "usual_mode".into(),
            distance_km: "distance_km".into(),
            trips_per_week: "trips_per_week".into(),
            unavailable_modes: "unavailable_modes".into(),
            unavailable_separator: ";".into(),
            priorities: BTreeMap::new(),
            evaluations: BTreeMap::new(),
            mode_tokens: BTreeMap::new(),
            gender_tokens: BTreeMap::new(),
        }
    }
}

impl SchemaMap {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ParseError> {
        let map: SchemaMap = serde_json::from_slice(bytes).map_err(|e| ParseError::Schema(e.to_string()))?;
        for key in map.priorities.keys() {
            if Criterion::from_slug(key).is_none() {
                return Err(ParseError::Schema(format!("unknown priority key {key:?}")));
            }
        }
        for key in map.evaluations.keys() {
            if parse_eval_key(key).is_none() {
                return Err(ParseError::Schema(format!("unknown evaluation key {key:?}")));
            }
        }
        if map.unavailable_separator.is_empty() {
            return Err(ParseError::Schema("empty unavailable_separator".into()));
        }
        Ok(map)
    }

    pub fn priority_column(&self, c: Criterion) -> String {
        self.priorities
            .iter()
            .find(|(k, _)| Criterion::from_slug(k) == Some(c))
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| format!("prio_{}", c.slug()))
    }

    pub fn evaluation_column(&self, m: Mode, c: Criterion) -> String {
        self.evaluations
            .iter()
            .find(|(k, _)| parse_eval_key(k) == Some((m, c)))
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| format!("eval_{}_{}", m.slug(), c.slug()))
    }

    /// The header row a CSV must carry to parse with this map (id excluded).
    pub fn required_columns(&self) -> Vec<String> {
        let mut cols = vec![
            self.gender.clone(),
            self.usual_mode.clone(),
            self.distance_km.clone(),
            self.trips_per_week.clone(),
            self.unavailable_modes.clone(),
        ];
        cols.extend(Criterion::ALL.iter().map(|&c| self.priority_column(c)));
        for m in Mode::ALL {
            cols.extend(Criterion::ALL.iter().map(|&c| self.evaluation_column(m, c)));
        }
        cols
    }

    fn mode_token(&self, raw: &str) -> Option<Mode> {
        let t = normalize(raw);
        if let Some((_, m)) = self.mode_tokens.iter().find(|(k, _)| normalize(k) == t) {
            return Some(*m);
        }
        match t.as_str() {
            "bicycle" | "bike" | "cycling" | "velo" | "vélo" => Some(Mode::Bicycle),
            "car" | "voiture" | "automobile" => Some(Mode::Car),
            "bus" | "public transport" | "public transports" | "transports en commun" | "transport en commun"
            | "pt" | "tc" => Some(Mode::Bus),
            "walk" | "walking" | "foot" | "marche" | "à pied" | "a pied" => Some(Mode::Walk),
            _ => None,
        }
    }

    fn gender_token(&self, raw: &str) -> Option<Gender> {
        let t = normalize(raw);
        if let Some((_, g)) = self.gender_tokens.iter().find(|(k, _)| normalize(k) == t) {
            return Some(*g);
        }
        match t.as_str() {
            "woman" | "female" | "f" | "w" | "femme" => Some(Gender::Woman),
            "man" | "male" | "m" | "h" | "homme" => Some(Gender::Man),
            "other" | "autre" => Some(Gender::Other),
            "" | "noanswer" | "no answer" | "do not wish to answer" | "prefer not to say" | "na"
            | "ne souhaite pas répondre" => Some(Gender::NoAnswer),
            _ => None,
        }
    }
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

fn parse_eval_key(key: &str) -> Option<(Mode, Criterion)> {
    let (m, c) = key.split_once('_')?;
    Some((Mode::from_slug(m)?, Criterion::from_slug(c)?))
}

struct Columns {
    id: Option<usize>,
    gender: usize,
    usual_mode: usize,
    distance_km: usize,
    trips_per_week: usize,
    unavailable: usize,
    priorities: CriterionTable<usize>,
    evaluations: ModeTable<CriterionTable<usize>>,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, schema: &SchemaMap) -> Result<Self, ParseError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ParseError::MissingColumn { column: name.to_string() })
        };
        let mut err = None;
        let mut get = |name: String| match find(&name) {
            Ok(i) => i,
            Err(e) => {
                err.get_or_insert(e);
                0
            }
        };
        let cols = Columns {
            id: header.iter().position(|h| h.trim() == schema.id),
            gender: get(schema.gender.clone()),
            usual_mode: get(schema.usual_mode.clone()),
            distance_km: get(schema.distance_km.clone()),
            trips_per_week: get(schema.trips_per_week.clone()),
            unavailable: get(schema.unavailable_modes.clone()),
            priorities: CriterionTable::from_fn(|c| get(schema.priority_column(c))),
            evaluations: ModeTable::from_fn(|m| CriterionTable::from_fn(|c| get(schema.evaluation_column(m, c)))),
        };
        match err {
            Some(e) => Err(e),
            None => Ok(cols),
        }
    }
}

struct RowCtx<'a> {
    row: usize,
    record: &'a csv::StringRecord,
    header: &'a csv::StringRecord,
}

impl RowCtx<'_> {
    fn cell(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("").trim()
    }

    fn column(&self, idx: usize) -> String {
        self.header.get(idx).unwrap_or("").trim().to_string()
    }

    fn rating(&self, idx: usize) -> Result<Rating, ParseError> {
        let raw = self.cell(idx);
        let bad = || ParseError::BadRating { row: self.row, column: self.column(idx), value: raw.to_string() };
        let v = match raw.parse::<i64>() {
            Ok(v) => v,
            Err(_) => {
                let f: f64 = raw.parse().map_err(|_| bad())?;
                if f.fract() != 0.0 || !f.is_finite() {
                    return Err(bad());
                }
                f as i64
            }
        };
        Rating::new(v).map_err(|_| bad())
    }

    fn quantity(&self, idx: usize) -> Result<f64, ParseError> {
        let raw = self.cell(idx);
        let v: f64 = raw.replace(',', ".").parse().map_err(|_| ParseError::BadNumber {
            row: self.row,
            column: self.column(idx),
            value: raw.to_string(),
        })?;
        if v < 0.0 || !v.is_finite() {
            return Err(ParseError::BadNumber { row: self.row, column: self.column(idx), value: raw.to_string() });
        }
        Ok(v)
    }
}

/// Parse survey answers into a [`Population`], one respondent per data row.
///
/// Rows are numbered from 1 (the first data row after the header). Abnormal
/// distances and trip counts are kept and tagged, never dropped.
pub fn parse_survey_csv<R: Read>(input: R, schema: &SchemaMap, source: &str) -> Result<Population, ParseError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = reader.headers().map_err(|e| ParseError::Csv(e.to_string()))?.clone();
    let cols = Columns::resolve(&header, schema)?;

    let mut respondents = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ParseError::Csv(e.to_string()))?;
        let ctx = RowCtx { row: i + 1, record: &record, header: &header };
        respondents.push(parse_row(&ctx, &cols, schema)?);
    }

    let row_count = respondents.len();
    Population::new(respondents, Provenance::Survey { source: source.to_string(), row_count }).map_err(|e| {
        let row = match &e {
            PopulationError::DuplicateId(id)
            | PopulationError::AllModesUnavailable { id }
            | PopulationError::UsualModeUnavailable { id }
            | PopulationError::NegativeQuantity { id } => id.strip_prefix("row-").and_then(|n| n.parse().ok()),
        };
        ParseError::Invalid { row: row.unwrap_or(0), source: e }
    })
}

fn parse_row(ctx: &RowCtx<'_>, cols: &Columns, schema: &SchemaMap) -> Result<Respondent, ParseError> {
    let row = ctx.row;
    let id = cols
        .id
        .map(|i| ctx.cell(i).to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("row-{row}"));

    let gender_raw = ctx.cell(cols.gender);
    let gender = schema.gender_token(gender_raw).ok_or_else(|| ParseError::BadGender {
        row,
        column: ctx.column(cols.gender),
        value: gender_raw.to_string(),
    })?;

    let mode_raw = ctx.cell(cols.usual_mode);
    let usual_mode = schema.mode_token(mode_raw).ok_or_else(|| ParseError::BadMode {
        row,
        column: ctx.column(cols.usual_mode),
        value: mode_raw.to_string(),
    })?;

    let distance_km = ctx.quantity(cols.distance_km)?;
    let trips_per_week = ctx.quantity(cols.trips_per_week)?;

    let mut unavailable = ModeSet::EMPTY;
    let unavail_raw = ctx.cell(cols.unavailable);
    for token in unavail_raw.split(schema.unavailable_separator.as_str()) {
        let t = normalize(token);
        if t.is_empty() || t == "none" || t == "aucun" || t == "aucune" {
            continue;
        }
        let m = schema.mode_token(&t).ok_or_else(|| ParseError::BadMode {
            row,
            column: ctx.column(cols.unavailable),
            value: token.trim().to_string(),
        })?;
        unavailable.insert(m);
    }
    if unavailable == ModeSet::ALL {
        return Err(ParseError::AllModesUnavailable { row });
    }

    let mut outlier_flags = BTreeSet::new();
    if unavailable.contains(usual_mode) {
        unavailable.remove(usual_mode);
        outlier_flags.insert(flags::USUAL_MODE_MARKED_UNAVAILABLE.to_string());
    }
    if distance_km > DISTANCE_OUTLIER_KM {
        outlier_flags.insert(flags::DISTANCE_OUTLIER.to_string());
    }
    if trips_per_week > TRIPS_OUTLIER_PER_WEEK {
        outlier_flags.insert(flags::TRIPS_OUTLIER.to_string());
    }

    let mut prio = CriterionTable::<Rating>::default();
    for c in Criterion::ALL {
        prio[c] = ctx.rating(cols.priorities[c])?;
    }
    let priorities = PriorityProfile(prio);
    if priorities.is_all_zero() {
        outlier_flags.insert(flags::ZERO_PRIORITIES.to_string());
    }

    let mut evals = ModeTable::<CriterionTable<Rating>>::default();
    for m in Mode::ALL {
        for c in Criterion::ALL {
            evals[m][c] = ctx.rating(cols.evaluations[m][c])?;
        }
    }

    Ok(Respondent {
        id,
        gender,
        usual_mode,
        distance_km,
        trips_per_week,
        unavailable,
        priorities,
        evaluations: EvaluationMatrix(evals),
        outlier_flags,
    })
}

/// Render a population back to CSV under `schema` (used for fixtures and exports).
pub fn write_survey_csv(pop: &Population, schema: &SchemaMap) -> Result<Vec<u8>, ParseError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![schema.id.clone()];
    header.extend(schema.required_columns());
    w.write_record(&header).map_err(|e| ParseError::Csv(e.to_string()))?;
    for r in pop.iter() {
        let gender = match r.gender {
            Gender::Woman => "woman",
            Gender::Man => "man",
            Gender::Other => "other",
            Gender::NoAnswer => "noanswer",
        };
        let unavailable: Vec<&str> = r.unavailable.iter().map(Mode::slug).collect();
        let mut rec = vec![
            r.id.clone(),
            gender.to_string(),
            r.usual_mode.slug().to_string(),
            r.distance_km.to_string(),
            r.trips_per_week.to_string(),
            unavailable.join(&schema.unavailable_separator),
        ];
        rec.extend(Criterion::ALL.iter().map(|&c| r.priorities[c].to_string()));
        for m in Mode::ALL {
            rec.extend(Criterion::ALL.iter().map(|&c| r.evaluations.get(m, c).to_string()));
        }
        w.write_record(&rec).map_err(|e| ParseError::Csv(e.to_string()))?;
    }
    w.into_inner().map_err(|e| ParseError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols = vec!["id".to_string()];
        cols.extend(SchemaMap::default().required_columns());
        cols.join(",")
    }

    fn row(id: &str, gender: &str, mode: &str, unavail: &str, prio: &str) -> String {
        let evals = vec!["5"; 24].join(",");
        format!("{id},{gender},{mode},10,5,{unavail},{prio},{evals}")
    }

    fn parse(body: &str) -> Result<Population, ParseError> {
        parse_survey_csv(body.as_bytes(), &SchemaMap::default(), "test.csv")
    }

    #[test]
    fn header_only_gives_empty_population() {
        let pop = parse(&format!("{}\n", header())).unwrap();
        assert!(pop.is_empty());
        assert_eq!(pop.provenance(), &Provenance::Survey { source: "test.csv".into(), row_count: 0 });
    }

    #[test]
    fn empty_input_is_missing_column() {
        let err = parse("").unwrap_err();
        assert_eq!(err.kind(), "MissingColumn");
    }

    #[test]
    fn parses_rows_in_order() {
        let body = format!(
            "{}\n{}\n{}\n",
            header(),
            row("a", "woman", "bike", "car;bus", "8,7,7,8,7,6"),
            row("b", "Homme", "public transport", "none", "1,2,3,4,5,6")
        );
        let pop = parse(&body).unwrap();
        assert_eq!(pop.len(), 2);
        let a = &pop.respondents()[0];
        assert_eq!(a.usual_mode, Mode::Bicycle);
        assert_eq!(a.unavailable.iter().collect::<Vec<_>>(), vec![Mode::Car, Mode::Bus]);
        assert_eq!(a.priorities[Criterion::Ecology].get(), 8);
        let b = &pop.respondents()[1];
        assert_eq!(b.gender, Gender::Man);
        assert_eq!(b.usual_mode, Mode::Bus);
        assert!(b.unavailable.is_empty());
    }

    #[test]
    fn rating_eleven_is_rejected_with_row_and_column() {
        let body = format!("{}\n{}\n", header(), row("a", "man", "car", "", "11,7,7,8,7,6"));
        let err = parse(&body).unwrap_err();
        assert_eq!(
            err,
            ParseError::BadRating { row: 1, column: "prio_ecology".into(), value: "11".into() }
        );
    }

    #[test]
    fn fractional_rating_is_rejected() {
        let body = format!("{}\n{}\n", header(), row("a", "man", "car", "", "7.5,7,7,8,7,6"));
        assert_eq!(parse(&body).unwrap_err().kind(), "BadRating");
        let body = format!("{}\n{}\n", header(), row("a", "man", "car", "", "7.0,7,7,8,7,6"));
        assert!(parse(&body).is_ok());
    }

    #[test]
    fn all_modes_unavailable_rejected() {
        let body = format!(
            "{}\n{}\n{}\n",
            header(),
            row("a", "man", "car", "", "5,5,5,5,5,5"),
            row("b", "man", "car", "bike;car;bus;walk", "5,5,5,5,5,5")
        );
        assert_eq!(parse(&body).unwrap_err(), ParseError::AllModesUnavailable { row: 2 });
    }

    #[test]
    fn bad_tokens() {
        let body = format!("{}\n{}\n", header(), row("a", "man", "rocket", "", "5,5,5,5,5,5"));
        assert_eq!(parse(&body).unwrap_err().kind(), "BadMode");
        let body = format!("{}\n{}\n", header(), row("a", "robot", "car", "", "5,5,5,5,5,5"));
        assert_eq!(parse(&body).unwrap_err().kind(), "BadGender");
        let body = format!("{}\n{}\n", header(), row("a", "man", "car", "train", "5,5,5,5,5,5"));
        assert_eq!(parse(&body).unwrap_err().kind(), "BadMode");
    }

    #[test]
    fn outliers_are_flagged_not_dropped() {
        let evals = vec!["5"; 24].join(",");
        let body = format!("{}\na,man,car,2000,40,,5,5,5,5,5,5,{evals}\n", header());
        let pop = parse(&body).unwrap();
        let r = &pop.respondents()[0];
        assert!(r.outlier_flags.contains(flags::DISTANCE_OUTLIER));
        assert!(r.outlier_flags.contains(flags::TRIPS_OUTLIER));
    }

    #[test]
    fn usual_mode_listed_unavailable_is_repaired_and_flagged() {
        let body = format!("{}\n{}\n", header(), row("a", "man", "car", "car;bus", "5,5,5,5,5,5"));
        let pop = parse(&body).unwrap();
        let r = &pop.respondents()[0];
        assert!(r.is_available(Mode::Car));
        assert!(!r.is_available(Mode::Bus));
        assert!(r.outlier_flags.contains(flags::USUAL_MODE_MARKED_UNAVAILABLE));
    }

    #[test]
    fn schema_map_renames_columns() {
        let schema = SchemaMap::from_json(
            r#"{"gender": "Genre", "priorities": {"ecology": "P_eco"}, "evaluations": {"car_time": "Car time"},
                "mode_tokens": {"Vélo électrique": "Bicycle"}}"#
                .as_bytes(),
        )
        .unwrap();
        let mut cols = vec!["id".to_string()];
        cols.extend(schema.required_columns());
        assert!(cols.contains(&"Genre".to_string()));
        assert!(cols.contains(&"P_eco".to_string()));
        assert!(cols.contains(&"Car time".to_string()));
        let evals = vec!["5"; 24].join(",");
        let body = format!("{}\nx,f,vélo électrique,3,10,,5,5,5,5,5,5,{evals}\n", cols.join(","));
        let pop = parse_survey_csv(body.as_bytes(), &schema, "s").unwrap();
        assert_eq!(pop.respondents()[0].usual_mode, Mode::Bicycle);
        assert!(SchemaMap::from_json(br#"{"priorities": {"speed": "x"}}"#).is_err());
        assert!(SchemaMap::from_json(br#"{"colour": "x"}"#).is_err());
    }

    #[test]
    fn write_then_parse_is_identity() {
        let body = format!(
            "{}\n{}\n{}\n",
            header(),
            row("a", "woman", "bicycle", "car", "8,7,7,8,7,6"),
            row("b", "other", "walk", "", "0,0,0,0,0,1")
        );
        let pop = parse(&body).unwrap();
        let out = write_survey_csv(&pop, &SchemaMap::default()).unwrap();
        assert_eq!(parse_survey_csv(out.as_slice(), &SchemaMap::default(), "test.csv").unwrap(), pop);
    }
}
