//! The four built-in manipulation tasks and their task files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taskspec::{parse_task_spec, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    BlockInsertion,
    PlaceRedInGreen,
    TowersOfHanoi,
    StackBlockPyramid,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::BlockInsertion,
        TaskKind::PlaceRedInGreen,
        TaskKind::TowersOfHanoi,
        TaskKind::StackBlockPyramid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::BlockInsertion => "block-insertion",
            TaskKind::PlaceRedInGreen => "place-red-in-green",
            TaskKind::TowersOfHanoi => "towers-of-hanoi",
            TaskKind::StackBlockPyramid => "stack-block-pyramid",
        }
    }

    /// Position in [`TaskKind::ALL`]; feeds per-episode seed derivation.
    pub fn index(self) -> u64 {
        TaskKind::ALL.iter().position(|&t| t == self).unwrap() as u64
    }

    pub fn source(self) -> &'static str {
        match self {
            TaskKind::BlockInsertion => include_str!("../assets/tasks/block-insertion.bddl"),
            TaskKind::PlaceRedInGreen => include_str!("../assets/tasks/place-red-in-green.bddl"),
            TaskKind::TowersOfHanoi => include_str!("../assets/tasks/towers-of-hanoi.bddl"),
            TaskKind::StackBlockPyramid => include_str!("../assets/tasks/stack-block-pyramid.bddl"),
        }
    }

    pub fn spec(self) -> TaskSpec {
        parse_task_spec(self.source()).expect("built-in task files parse")
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('_', "-").to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = TaskKind::ALL.iter().map(|t| t.name()).collect();
                format!("unknown task '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;
    use crate::taskspec::validate;

    #[test]
    fn builtin_specs_are_clean() {
        let reg = Registry::builtin();
        for task in TaskKind::ALL {
            let spec = task.spec();
            let diags = validate(&spec);
            assert!(diags.is_empty(), "{task}: {diags:?}");
            for o in spec.objects.iter().chain(&spec.fixtures) {
                assert!(
                    spec.fixtures.contains(o) || reg.contains(&o.class),
                    "{task}: {}",
                    o.class
                );
            }
            assert!(!spec.goal_conditions.is_empty());
        }
    }

    #[test]
    fn names_round_trip() {
        for task in TaskKind::ALL {
            assert_eq!(task.name().parse::<TaskKind>().unwrap(), task);
        }
        assert_eq!(
            "towers_of_hanoi".parse::<TaskKind>().unwrap(),
            TaskKind::TowersOfHanoi
        );
        assert!("rope".parse::<TaskKind>().is_err());
    }
}
