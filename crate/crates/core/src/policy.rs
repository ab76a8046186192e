//! Policy what-if engine: apply uniform evaluation overrides, re-decide every
//! respondent under a bias configuration, and report the modal transfer.
//!
//! A [`GameState`] chains scenarios as turns. Each turn starts from the modes
//! chosen at the previous turn; overrides do not persist between turns.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::{
    apply_reactance_to_grid, crowd_medians, decide_under_halo, halo_mask_on_grid, CrowdMedians, HaloComparison,
    ReactanceParams,
};
use crate::decision::{apply_overrides, decide_with, Classification, CriterionMask, DecisionError, GroupRationality, Override};
use crate::domain::{Criterion, Mode, ModeSet, ModeTable, Population, Rating};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("before and after assignments differ in length ({before} vs {after})")]
    LengthMismatch { before: usize, after: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid bias config: {0}")]
    InvalidBias(String),
    #[error("split must hold fractions summing to 1 (sum {0})")]
    BadSplit(f64),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("game state does not match its population")]
    StateMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyScenario {
    pub name: String,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl PolicyScenario {
    pub fn new(name: impl Into<String>, overrides: Vec<Override>) -> Result<Self, PolicyError> {
        let s = PolicyScenario { name: name.into(), overrides };
        s.validate()?;
        Ok(s)
    }

    pub fn empty() -> Self {
        PolicyScenario { name: "status quo".into(), overrides: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for (i, a) in self.overrides.iter().enumerate() {
            if self.overrides[..i].iter().any(|b| (b.mode, b.criterion) == (a.mode, a.criterion)) {
                return Err(PolicyError::InvalidScenario(format!(
                    "more than one override for ({}, {})",
                    a.mode, a.criterion
                )));
            }
        }
        Ok(())
    }

    /// Overridden cells whose new value lies strictly above the crowd median.
    pub fn promoted(&self, medians: &CrowdMedians) -> Vec<(Mode, Criterion)> {
        self.overrides
            .iter()
            .filter(|o| o.value.as_f64() > medians.get(o.mode, o.criterion))
            .map(|o| (o.mode, o.criterion))
            .collect()
    }
}

/// The three built-in policies, keyed `free-pt`, `safe-lanes`, `city-15`.
pub fn builtin_scenarios() -> Vec<(&'static str, PolicyScenario)> {
    let one = |name: &str, mode, criterion| PolicyScenario {
        name: name.to_string(),
        overrides: vec![Override { mode, criterion, value: Rating::MAX }],
    };
    vec![
        ("free-pt", one("Free public transport", Mode::Bus, Criterion::Finance)),
        ("safe-lanes", one("Safe cycling lanes", Mode::Bicycle, Criterion::Safety)),
        ("city-15", one("15-minute city", Mode::Walk, Criterion::Time)),
    ]
}

pub fn builtin_scenario(key: &str) -> Option<PolicyScenario> {
    builtin_scenarios().into_iter().find(|(k, _)| *k == key).map(|(_, s)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactanceToggle {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: ReactanceParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    /// On: decide with self evaluations. Off: decide with crowd medians.
    pub choice_supportive: bool,
    pub halo: bool,
    pub halo_comparison: HaloComparison,
    pub reactance: ReactanceToggle,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            choice_supportive: true,
            halo: false,
            halo_comparison: HaloComparison::AvailableModes,
            reactance: ReactanceToggle::default(),
        }
    }
}

impl BiasConfig {
    /// Crowd medians, no halo, no reactance.
    pub fn unbiased() -> Self {
        BiasConfig { choice_supportive: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !self.reactance.params.is_valid() {
            return Err(PolicyError::InvalidBias("reactance penalty must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// Counts of respondents moving from a mode (row) to a mode (column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransferMatrix(pub ModeTable<ModeTable<usize>>);

impl TransferMatrix {
    pub fn get(&self, from: Mode, to: Mode) -> usize {
        self.0[from][to]
    }

    pub fn row_sum(&self, from: Mode) -> usize {
        self.0[from].values().sum()
    }

    pub fn col_sum(&self, to: Mode) -> usize {
        Mode::ALL.iter().map(|&f| self.0[f][to]).sum()
    }

    pub fn total(&self) -> usize {
        Mode::ALL.iter().map(|&f| self.row_sum(f)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        Mode::ALL.iter().all(|&f| Mode::ALL.iter().all(|&t| f == t || self.0[f][t] == 0))
    }

    /// Respondents leaving `from` for any other mode.
    pub fn outflow(&self, from: Mode) -> usize {
        self.row_sum(from) - self.0[from][from]
    }
}

pub fn transfer_matrix(before: &[Mode], after: &[Mode]) -> Result<TransferMatrix, PolicyError> {
    if before.len() != after.len() {
        return Err(PolicyError::LengthMismatch { before: before.len(), after: after.len() });
    }
    let mut t = TransferMatrix::default();
    for (&b, &a) in before.iter().zip(after) {
        t.0[b][a] += 1;
    }
    Ok(t)
}

/// Illustrative emissions index: 1.0 per car share, 0.3 per bus share.
pub fn emissions_index(split: &ModeTable<f64>) -> Result<f64, PolicyError> {
    let total: f64 = split.values().sum();
    if split.values().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-6 {
        return Err(PolicyError::BadSplit(total));
    }
    Ok(split[Mode::Car] + 0.3 * split[Mode::Bus])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentDecision {
    pub id: String,
    pub from: Mode,
    pub to: Mode,
    /// Classification of `from` under the scenario's evaluations.
    pub classification: Option<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: PolicyScenario,
    pub bias: BiasConfig,
    pub eval_source: String,
    pub n: usize,
    pub before_split: ModeTable<f64>,
    pub after_split: ModeTable<f64>,
    pub transfer: TransferMatrix,
    /// Rationality of each starting-mode group under the scenario.
    pub rationality: ModeTable<GroupRationality>,
    pub emissions_before: f64,
    pub emissions_index: f64,
    pub promoted: Vec<PromotedCell>,
    /// Respondents kept on their mode because all unmasked priorities are zero.
    pub skipped: Vec<String>,
    pub decisions: Vec<RespondentDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromotedCell {
    pub mode: Mode,
    pub criterion: Criterion,
}

impl ScenarioResult {
    pub fn after_modes(&self) -> Vec<Mode> {
        self.decisions.iter().map(|d| d.to).collect()
    }
}

fn split_of(counts: impl Fn(Mode) -> usize, n: usize) -> ModeTable<f64> {
    ModeTable::from_fn(|m| counts(m) as f64 / n as f64)
}

/// Pick the best accessible mode, keeping `current` when it is among the best.
fn choose(best_available: ModeSet, current: Mode) -> Mode {
    if best_available.contains(current) {
        current
    } else {
        best_available.first().expect("at least one mode is accessible")
    }
}

/// Re-decide every respondent starting from `current` modes.
pub fn run_from(
    pop: &Population,
    current: &[Mode],
    scenario: &PolicyScenario,
    bias: &BiasConfig,
) -> Result<ScenarioResult, PolicyError> {
    if pop.is_empty() {
        return Err(PolicyError::EmptyPopulation);
    }
    if current.len() != pop.len() {
        return Err(PolicyError::LengthMismatch { before: current.len(), after: pop.len() });
    }
    scenario.validate()?;
    bias.validate()?;

    let medians = crowd_medians(pop).map_err(|_| PolicyError::EmptyPopulation)?;
    let promoted = scenario.promoted(&medians);

    let mut after = Vec::with_capacity(pop.len());
    let mut decisions = Vec::with_capacity(pop.len());
    let mut rationality = ModeTable::<GroupRationality>::default();
    let mut skipped = Vec::new();
    for (r, &from) in pop.iter().zip(current) {
        let mut grid = if bias.choice_supportive { r.evaluations.to_grid() } else { *medians.grid() };
        apply_overrides(&mut grid, &scenario.overrides);
        if bias.reactance.enabled {
            apply_reactance_to_grid(&mut grid, from, &promoted, &bias.reactance.params);
        }
        let weights = r.priorities.weights();
        let decision = if bias.halo {
            let mask = halo_mask_on_grid(&grid, &weights, from, r.unavailable, bias.halo_comparison);
            decide_under_halo(&weights, &grid, mask, r.unavailable, from)
        } else {
            decide_with(&weights, &grid, CriterionMask::NONE, r.unavailable, from)
        };
        let (to, classification) = match decision {
            Ok(out) => {
                rationality[from].record(out.classification);
                (choose(out.best_available, from), Some(out.classification))
            }
            Err(DecisionError::DegeneratePriorities) => {
                skipped.push(r.id.clone());
                (from, None)
            }
            Err(e) => return Err(PolicyError::InvalidScenario(e.to_string())),
        };
        after.push(to);
        decisions.push(RespondentDecision { id: r.id.clone(), from, to, classification });
    }

    let transfer = transfer_matrix(current, &after)?;
    let n = pop.len();
    let before_split = split_of(|m| transfer.row_sum(m), n);
    let after_split = split_of(|m| transfer.col_sum(m), n);
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        bias: *bias,
        eval_source: if bias.choice_supportive { "self" } else { "crowd" }.to_string(),
        n,
        emissions_before: emissions_index(&before_split)?,
        emissions_index: emissions_index(&after_split)?,
        before_split,
        after_split,
        transfer,
        rationality: rationality.map(|_, g| g.finish()),
        promoted: promoted.into_iter().map(|(mode, criterion)| PromotedCell { mode, criterion }).collect(),
        skipped,
        decisions,
    })
}

/// Re-decide the population from its declared usual modes.
pub fn run_scenario(pop: &Population, scenario: &PolicyScenario, bias: &BiasConfig) -> Result<ScenarioResult, PolicyError> {
    let current: Vec<Mode> = pop.iter().map(|r| r.usual_mode).collect();
    run_from(pop, &current, scenario, bias)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub result: ScenarioResult,
}

/// Turn-based policy game over a fixed population.
#[derive(Debug, Clone)]
pub struct GameState {
    population: Arc<Population>,
    current: Vec<Mode>,
    turn: u32,
    history: Vec<TurnRecord>,
}

impl GameState {
    pub fn new(population: Arc<Population>) -> Self {
        let current = population.iter().map(|r| r.usual_mode).collect();
        GameState { population, current, turn: 0, history: Vec::new() }
    }

    pub fn population(&self) -> &Arc<Population> {
        &self.population
    }

    pub fn current_modes(&self) -> &[Mode] {
        &self.current
    }

    pub fn turn(&self) -> u32 {
        self.turn
    }

    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }

    pub fn current_split(&self) -> ModeTable<f64> {
        let mut counts = ModeTable::<usize>::default();
        for &m in &self.current {
            counts[m] += 1;
        }
        split_of(|m| counts[m], self.current.len().max(1))
    }

    /// Play one turn and return the next state.
    pub fn advance_turn(&self, scenario: &PolicyScenario, bias: &BiasConfig) -> Result<GameState, PolicyError> {
        let mut next = self.clone();
        next.apply_turn(scenario, bias)?;
        Ok(next)
    }

    /// Play one turn in place.
    pub fn apply_turn(&mut self, scenario: &PolicyScenario, bias: &BiasConfig) -> Result<&TurnRecord, PolicyError> {
        let result = run_from(&self.population, &self.current, scenario, bias)?;
        let current = result.after_modes();
        if current.iter().zip(self.population.iter()).any(|(&m, r)| !r.is_available(m)) {
            return Err(PolicyError::StateMismatch);
        }
        self.current = current;
        self.turn += 1;
        self.history.push(TurnRecord { turn: self.turn, result });
        Ok(self.history.last().expect("just pushed"))
    }
}
