use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use modalsim_core::bias::{
    crowd_medians, halo_rationality_report_with, halo_rescue_table, HaloComparison, HaloRescueTable,
};
use modalsim_core::decision::{constrained_report, rationality_report, CriterionMask, EvalSource};
use modalsim_core::policy::{builtin_scenario, run_scenario, BiasConfig, GameState, PolicyScenario, ScenarioResult};
use modalsim_core::report::self_score_stats;
use modalsim_core::stats::{
    accessibility_stats, deviation_users_vs_nonusers, gender_report, mean_evaluations, mean_priorities,
    modal_split, mode_counts, pairwise_mode_deviation, GroupFilter, StdevConvention,
};
use modalsim_core::survey::{parse_survey_csv, SchemaMap};
use modalsim_core::synth::{default_config, synthesize, Profile, SynthesisConfig};
use modalsim_core::{Criterion, CriterionTable, Mode, ModeTable, Population, Provenance};

use crate::error::ApiError;
use crate::AppState;

/// Query-string extractor whose rejections use the API error format.
pub struct Query<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for Query<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| Query(q.0))
            .map_err(|e| ApiError::BadRequest(e.body_text()))
    }
}

const IDEMPOTENCY_KEY: &str = "idempotency-key";

fn json_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

fn to_value(v: impl Serialize) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::Internal(e.to_string()))
}

/// Run model code off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

fn idempotency_key(headers: &HeaderMap, scope: &str) -> Option<String> {
    let key = headers.get(IDEMPOTENCY_KEY)?.to_str().ok()?;
    Some(format!("{scope}\n{key}"))
}

/// Replay the stored response for a repeated `Idempotency-Key`, or run `f`
/// and store its successful response.
async fn idempotent<F, Fut>(state: &AppState, key: Option<String>, f: F) -> Result<Response, ApiError>
where
    F: FnOnce() -> Fut,
    Fut: Future<Output = Result<(StatusCode, Value), ApiError>>,
{
    let Some(key) = key else {
        let (status, body) = f().await?;
        return Ok((status, Json(body)).into_response());
    };
    let _gate = state.idempotency_gate.lock().await;
    if let Some((status, body)) = state.store.replay(&key) {
        return Ok((status, Json(body)).into_response());
    }
    let (status, body) = f().await?;
    state.store.remember(key, (status, body.clone()));
    Ok((status, Json(body)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum CreatePopulation {
    Upload {
        csv: String,
        #[serde(default)]
        schema: Option<Box<SchemaMap>>,
    },
    Synth {
        #[serde(default)]
        profile: Option<Profile>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        /// Full configuration; `n` and `seed` still override it when given.
        #[serde(default)]
        config: Option<Box<SynthesisConfig>>,
    },
}

#[derive(Debug, Serialize)]
pub struct PopulationSummary {
    pub n: usize,
    pub provenance: Provenance,
    pub mode_counts: ModeTable<usize>,
    pub modal_split: Option<ModeTable<f64>>,
    /// Respondents carrying each outlier flag.
    pub flagged: BTreeMap<String, usize>,
}

pub fn summarize(pop: &Population) -> PopulationSummary {
    let mut flagged = BTreeMap::new();
    for r in pop.iter() {
        for f in &r.outlier_flags {
            *flagged.entry(f.clone()).or_insert(0) += 1;
        }
    }
    PopulationSummary {
        n: pop.len(),
        provenance: pop.provenance().clone(),
        mode_counts: mode_counts(pop),
        modal_split: modal_split(pop).ok(),
        flagged,
    }
}

fn build_population(headers: &HeaderMap, body: &[u8], max_synth: usize) -> Result<Population, ApiError> {
    let is_csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"));
    if is_csv {
        return Ok(parse_survey_csv(body, &SchemaMap::default(), "upload")?);
    }
    match json_body::<CreatePopulation>(body)? {
        CreatePopulation::Upload { csv, schema } => {
            Ok(parse_survey_csv(csv.as_bytes(), &schema.map(|s| *s).unwrap_or_default(), "upload")?)
        }
        CreatePopulation::Synth { profile, n, seed, config } => {
            let mut cfg = config.map(|c| *c).unwrap_or_else(|| default_config(profile.unwrap_or(Profile::OurSample)));
            cfg.n = n.unwrap_or(cfg.n);
            cfg.seed = seed.unwrap_or(cfg.seed);
            if cfg.n > max_synth {
                return Err(ApiError::BadRequest(format!("n = {} exceeds the limit of {max_synth}", cfg.n)));
            }
            Ok(synthesize(&cfg)?)
        }
    }
}

pub async fn create_population(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers, "POST /populations");
    let st = state.clone();
    idempotent(&state, key, || async move {
        let max_synth = st.config.max_synth;
        let pop = blocking(move || build_population(&headers, &body, max_synth)).await?;
        let (id, pop) = st.store.insert_population(pop);
        log::info!("created population {id} with {} respondents", pop.len());
        Ok((StatusCode::CREATED, json!({ "population_id": id, "summary": summarize(&pop) })))
    })
    .await
}

pub async fn get_population(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    Ok(Json(json!({ "population_id": id, "summary": summarize(&pop) })))
}

pub async fn delete_population(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.store.remove_population(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdevParam {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    #[serde(default)]
    stdev: StdevParam,
}

#[derive(Serialize)]
struct EvaluationColumns {
    all: CriterionTable<f64>,
    users: Option<CriterionTable<f64>>,
    non_users: Option<CriterionTable<f64>>,
}

fn stats_report(pop: &Population, kind: &str, q: &StatsQuery) -> Result<Value, ApiError> {
    match kind {
        "table1" => {
            let by_usual_mode: BTreeMap<&str, Option<CriterionTable<f64>>> =
                Mode::ALL.iter().map(|&m| (m.name(), mean_priorities(pop, &GroupFilter::usual_mode(m)).ok())).collect();
            to_value(json!({
                "n": pop.len(),
                "counts": mode_counts(pop),
                "all": mean_priorities(pop, &GroupFilter::ALL)?,
                "by_usual_mode": by_usual_mode,
            }))
        }
        "table2" => {
            let mut by_mode = BTreeMap::new();
            for m in Mode::ALL {
                let cols = EvaluationColumns {
                    all: mean_evaluations(pop, m, &GroupFilter::ALL)?,
                    users: mean_evaluations(pop, m, &GroupFilter::users(m)).ok(),
                    non_users: mean_evaluations(pop, m, &GroupFilter::non_users(m)).ok(),
                };
                by_mode.insert(m.name(), cols);
            }
            to_value(json!({ "by_mode": by_mode }))
        }
        "table3" => {
            let convention = match q.stdev {
                StdevParam::Population => StdevConvention::Population,
                StdevParam::Sample => StdevConvention::Sample,
            };
            to_value(self_score_stats(pop, convention)?)
        }
        "split" => to_value(json!({ "counts": mode_counts(pop), "shares": modal_split(pop)? })),
        "accessibility" => to_value(accessibility_stats(pop)),
        "gender" => to_value(json!({
            "report": gender_report(pop).ok(),
            "constrained": constrained_report(pop),
        })),
        "deviations" => {
            let by_criterion: BTreeMap<&str, Option<ModeTable<ModeTable<f64>>>> = Criterion::ALL
                .iter()
                .map(|&c| (c.name(), pairwise_mode_deviation(pop, Some(c)).ok()))
                .collect();
            to_value(json!({
                "users_vs_non_users": deviation_users_vs_nonusers(pop).ok(),
                "pairwise": pairwise_mode_deviation(pop, None).ok(),
                "pairwise_by_criterion": by_criterion,
            }))
        }
        other => Err(ApiError::NotFound { what: "report", id: other.to_string() }),
    }
}

pub async fn get_stats(
    State(state): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
    Query(q): Query<StatsQuery>,
) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    Ok(Json(blocking(move || stats_report(&pop, &kind, &q)).await?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalsParam {
    #[default]
    #[serde(rename = "self")]
    Own,
    Crowd,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    #[default]
    Off,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonParam {
    #[default]
    Available,
    All,
}

#[derive(Debug, Deserialize)]
pub struct RationalityQuery {
    #[serde(default)]
    evals: EvalsParam,
    #[serde(default)]
    halo: Toggle,
    #[serde(default)]
    comparison: ComparisonParam,
}

pub async fn get_rationality(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RationalityQuery>,
) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    let report = blocking(move || {
        let src = match q.evals {
            EvalsParam::Own => EvalSource::SelfEvals,
            EvalsParam::Crowd => EvalSource::Crowd(crowd_medians(&pop)?),
        };
        let comparison = match q.comparison {
            ComparisonParam::Available => HaloComparison::AvailableModes,
            ComparisonParam::All => HaloComparison::AllModes,
        };
        Ok(match q.halo {
            Toggle::On => halo_rationality_report_with(&pop, &src, comparison)?,
            Toggle::Off => rationality_report(&pop, &src, |_| CriterionMask::NONE)?,
        })
    })
    .await?;
    Ok(Json(to_value(report)?))
}

pub async fn get_halo_rescue(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    let table: HaloRescueTable = blocking(move || Ok(halo_rescue_table(&pop))).await?;
    Ok(Json(json!({ "table": table, "total": table.total() })))
}

pub async fn get_crowd_medians(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    let medians = blocking(move || Ok(crowd_medians(&pop)?)).await?;
    Ok(Json(to_value(medians)?))
}

/// Either a built-in policy key or an explicit list of overrides.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Builtin(String),
    Custom(PolicyScenario),
}

impl ScenarioRef {
    fn resolve(self) -> Result<PolicyScenario, ApiError> {
        let s = match self {
            ScenarioRef::Builtin(key) => builtin_scenario(&key)
                .ok_or_else(|| ApiError::Unprocessable(format!("unknown built-in scenario {key:?}")))?,
            ScenarioRef::Custom(s) => s,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    scenario: ScenarioRef,
    #[serde(default)]
    bias_config: BiasConfig,
}

#[derive(Debug, Default, Deserialize)]
pub struct DetailQuery {
    /// Include per-respondent decisions.
    #[serde(default)]
    decisions: bool,
}

fn trimmed(mut r: ScenarioResult, decisions: bool) -> ScenarioResult {
    if !decisions {
        r.decisions.clear();
    }
    r
}

pub async fn post_scenario(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let pop = state.store.population(&id)?;
    let req: ScenarioRequest = json_body(&body)?;
    let scenario = req.scenario.resolve()?;
    req.bias_config.validate()?;
    let result = blocking(move || Ok(run_scenario(&pop, &scenario, &req.bias_config)?)).await?;
    Ok(Json(to_value(trimmed(result, q.decisions))?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateGame {
    population_id: String,
}

fn game_view(game_id: &str, population_id: &str, g: &GameState, decisions: bool) -> Result<Value, ApiError> {
    let history: Vec<Value> = g
        .history()
        .iter()
        .map(|t| Ok(json!({ "turn": t.turn, "result": to_value(trimmed(t.result.clone(), decisions))? })))
        .collect::<Result<_, ApiError>>()?;
    Ok(json!({
        "game_id": game_id,
        "population_id": population_id,
        "turn": g.turn(),
        "current_split": g.current_split(),
        "history": history,
    }))
}

pub async fn create_game(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers, "POST /games");
    let st = state.clone();
    idempotent(&state, key, || async move {
        let req: CreateGame = json_body(&body)?;
        let pop = st.store.population(&req.population_id)?;
        let game = GameState::new(pop);
        let game_id = st.store.insert_game(req.population_id.clone(), game.clone())?;
        let view = game_view(&game_id, &req.population_id, &game, false)?;
        Ok((StatusCode::CREATED, view))
    })
    .await
}

pub async fn get_game(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
) -> Result<Json<Value>, ApiError> {
    let slot = state.store.game(&id)?;
    let g = slot.state.lock().await;
    Ok(Json(game_view(&id, &slot.population_id, &g, q.decisions)?))
}

pub async fn delete_game(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.store.remove_game(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn post_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let slot = state.store.game(&id)?;
    // Holding the game lock serializes turns and makes the replay check atomic.
    let mut game = slot.state.clone().lock_owned().await;
    let key = idempotency_key(&headers, &format!("POST /games/{id}/turns"));
    if let Some((status, body)) = key.as_ref().and_then(|k| state.store.replay(k)) {
        return Ok((status, Json(body)).into_response());
    }
    let req: ScenarioRequest = json_body(&body)?;
    let scenario = req.scenario.resolve()?;
    req.bias_config.validate()?;
    let bias = req.bias_config;
    let current: Arc<GameState> = Arc::new(game.clone());
    let next = blocking(move || Ok(current.advance_turn(&scenario, &bias)?)).await?;
    *game = next;
    let last = game.history().last().expect("a turn was just played");
    let body = json!({
        "turn": last.turn,
        "result": to_value(trimmed(last.result.clone(), q.decisions))?,
        "current_split": game.current_split(),
    });
    if let Some(k) = key {
        state.store.remember(k, (StatusCode::OK, body.clone()));
    }
    Ok((StatusCode::OK, Json(body)).into_response())
}

pub async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}
