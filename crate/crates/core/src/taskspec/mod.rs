//! BDDL-style task specifications.
//!
//! A task file is an s-expression of the form
//!
//! ```text
//! (define (problem put_bowl_on_plate)
//!   (:domain robosuite)
//!   (:language put the black bowl on the plate)
//!   (:regions
//!     (bowl_region
//!       (:target main_table)
//!       (:ranges (
//!         (-0.05 -0.05 0.05 0.05)
//!       ))
//!       (:yaw_rotation (
//!         (0.0 0.0)
//!       ))
//!     )
//!   )
//!   (:fixtures
//!     main_table - table
//!   )
//!   (:objects
//!     bowl_1 - akita_black_bowl
//!   )
//!   (:obj_of_interest
//!     bowl_1
//!   )
//!   (:init
//!     (On bowl_1 main_table_bowl_region)
//!   )
//!   (:goal
//!     (And (On bowl_1 plate_1))
//!   )
//! )
//! ```
//!
//! Regions may be referenced either by their bare name or qualified with
//! their parent, `<parent>_<name>`.

mod edit;
mod lexer;
mod parser;
mod random;
mod render;
mod sample;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use edit::{add_distractor, remove_distractor, EditError};
pub use parser::parse_task_spec;
pub use random::random_spec;
pub use render::render_task_spec;
pub use sample::{
    sample_scene, PlacementError, ScenePlacement, DEFAULT_CLEARANCE, DEFAULT_MAX_ATTEMPTS,
};
pub use validate::{validate, validate_source};

/// A parsed task definition. Every list keeps source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub problem_name: String,
    pub domain_name: String,
    pub language_instruction: String,
    pub objects: Vec<Instance>,
    pub fixtures: Vec<Instance>,
    pub regions: Vec<Region>,
    pub init_conditions: Vec<Predicate>,
    pub goal_conditions: Vec<Predicate>,
    pub objects_of_interest: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub class: String,
}

impl Instance {
    pub fn new(name: impl Into<String>, class: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            class: class.into(),
        }
    }
}

/// Axis-aligned placement rectangle in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Ranges {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// Closed-rectangle intersection; shared edges count.
    pub fn overlaps(&self, other: &Ranges) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    /// Instance the region is attached to (usually a fixture).
    pub parent: String,
    pub ranges: Ranges,
    /// (yaw_min, yaw_max) in radians.
    pub yaw_rotation: (f64, f64),
}

impl Region {
    /// The `<parent>_<name>` form used by predicates.
    pub fn qualified_name(&self) -> String {
        format!("{}_{}", self.parent, self.name)
    }

    pub fn answers_to(&self, reference: &str) -> bool {
        reference == self.name
            || (reference.len() == self.parent.len() + 1 + self.name.len()
                && reference.starts_with(self.parent.as_str())
                && reference[self.parent.len()..].starts_with('_')
                && reference.ends_with(self.name.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    On,
    In,
    Open,
    Close,
    TurnedOn,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::On,
        Relation::In,
        Relation::Open,
        Relation::Close,
        Relation::TurnedOn,
    ];

    pub fn arity(self) -> usize {
        match self {
            Relation::On | Relation::In => 2,
            Relation::Open | Relation::Close | Relation::TurnedOn => 1,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Relation::On => "On",
            Relation::In => "In",
            Relation::Open => "Open",
            Relation::Close => "Close",
            Relation::TurnedOn => "TurnedOn",
        }
    }

    /// Relation keywords are matched case-insensitively.
    pub fn from_keyword(word: &str) -> Option<Relation> {
        Relation::ALL
            .into_iter()
            .find(|r| r.keyword().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub relation: Relation,
    pub args: Vec<String>,
}

impl Predicate {
    pub fn new(relation: Relation, args: &[&str]) -> Self {
        Self {
            relation,
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn on(subject: &str, target: &str) -> Self {
        Self::new(Relation::On, &[subject, target])
    }

    pub fn subject(&self) -> &str {
        &self.args[0]
    }

    pub fn target(&self) -> Option<&str> {
        self.args.get(1).map(String::as_str)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.relation.keyword())?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

/// What a predicate argument resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Referent<'a> {
    Object(&'a Instance),
    Fixture(&'a Instance),
    Region(&'a Region),
}

impl TaskSpec {
    pub fn object(&self, name: &str) -> Option<&Instance> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn fixture(&self, name: &str) -> Option<&Instance> {
        self.fixtures.iter().find(|o| o.name == name)
    }

    pub fn region(&self, reference: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.answers_to(reference))
    }

    /// Instances shadow regions when a name is ambiguous.
    pub fn resolve(&self, reference: &str) -> Option<Referent<'_>> {
        if let Some(o) = self.object(reference) {
            return Some(Referent::Object(o));
        }
        if let Some(f) = self.fixture(reference) {
            return Some(Referent::Fixture(f));
        }
        self.region(reference).map(Referent::Region)
    }

    pub fn is_instance(&self, name: &str) -> bool {
        self.object(name).is_some() || self.fixture(name).is_some()
    }

    /// The init predicate that places `object`, if any (the first On/In
    /// naming it as subject).
    pub fn init_placement(&self, object: &str) -> Option<&Predicate> {
        self.init_conditions
            .iter()
            .find(|p| matches!(p.relation, Relation::On | Relation::In) && p.subject() == object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Stable diagnostic codes. The string form is what tools print.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagCode {
    UnbalancedParens,
    SyntaxError,
    UnknownSection,
    DuplicateSection,
    MissingSection,
    BadNumber,
    InvalidRange,
    UnknownPredicate,
    ArityMismatch,
    DuplicateInstance,
    DuplicateRegion,
    UndeclaredObject,
    UndeclaredRegion,
    OverlappingRegions,
    GoalOnFixture,
    InterestNotObject,
    MissingInitPlacement,
    ConflictingPlacement,
    InvalidPlacementTarget,
    CyclicPlacement,
    UnknownClass,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UnbalancedParens => "UNBALANCED_PARENS",
            DiagCode::SyntaxError => "SYNTAX_ERROR",
            DiagCode::UnknownSection => "UNKNOWN_SECTION",
            DiagCode::DuplicateSection => "DUPLICATE_SECTION",
            DiagCode::MissingSection => "MISSING_SECTION",
            DiagCode::BadNumber => "BAD_NUMBER",
            DiagCode::InvalidRange => "INVALID_RANGE",
            DiagCode::UnknownPredicate => "UNKNOWN_PREDICATE",
            DiagCode::ArityMismatch => "ARITY_MISMATCH",
            DiagCode::DuplicateInstance => "DUPLICATE_INSTANCE",
            DiagCode::DuplicateRegion => "DUPLICATE_REGION",
            DiagCode::UndeclaredObject => "UNDECLARED_OBJECT",
            DiagCode::UndeclaredRegion => "UNDECLARED_REGION",
            DiagCode::OverlappingRegions => "OVERLAPPING_REGIONS",
            DiagCode::GoalOnFixture => "GOAL_ON_FIXTURE",
            DiagCode::InterestNotObject => "INTEREST_NOT_OBJECT",
            DiagCode::MissingInitPlacement => "MISSING_INIT_PLACEMENT",
            DiagCode::ConflictingPlacement => "CONFLICTING_PLACEMENT",
            DiagCode::InvalidPlacementTarget => "INVALID_PLACEMENT_TARGET",
            DiagCode::CyclicPlacement => "CYCLIC_PLACEMENT",
            DiagCode::UnknownClass => "UNKNOWN_CLASS",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub location: Location,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, location: Location, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code,
            location,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagCode, location: Location, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code,
            location,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}[{}]: {}",
            self.location.line, self.location.column, self.code, self.message
        )
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qualified_region_reference() {
        let r = Region {
            name: "other_object_region_5".into(),
            parent: "floor".into(),
            ranges: Ranges {
                x_min: 0.125,
                y_min: -0.105,
                x_max: 0.175,
                y_max: -0.055,
            },
            yaw_rotation: (0.0, 0.0),
        };
        assert!(r.answers_to("floor_other_object_region_5"));
        assert!(r.answers_to("other_object_region_5"));
        assert!(!r.answers_to("floorother_object_region_5"));
        assert!(!r.answers_to("table_other_object_region_5"));
        assert_eq!(r.qualified_name(), "floor_other_object_region_5");
    }

    #[test]
    fn relation_keywords_are_case_insensitive() {
        assert_eq!(Relation::from_keyword("on"), Some(Relation::On));
        assert_eq!(Relation::from_keyword("TURNEDON"), Some(Relation::TurnedOn));
        assert_eq!(Relation::from_keyword("Above"), None);
    }
}
