//! Multi-criteria modal choice model with cognitive bias operators and a
//! policy what-if engine.
//!
//! Respondents rate how important six criteria are to them and how well four
//! mobility modes satisfy each criterion. A mode's score is the
//! priority-weighted average of its ratings; the best accessible mode is the
//! rational choice. The bias operators (crowd medians, halo masks, reactance
//! penalties) and the scenario engine build on that scoring.

pub mod bias;
pub mod decision;
pub mod domain;
pub mod policy;
pub mod report;
pub mod snapshot;
pub mod stats;
pub mod survey;
pub mod synth;

pub use domain::{
    Criterion, CriterionSet, CriterionTable, EvalGrid, EvaluationMatrix, Gender, Mode, ModeSet, ModeTable, Population,
    PopulationError, PriorityProfile, Provenance, Rating, Respondent,
};
