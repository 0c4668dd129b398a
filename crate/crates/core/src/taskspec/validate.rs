use std::collections::{HashMap, HashSet};

use super::{render_task_spec, DiagCode, Diagnostic, Location, Referent, Relation, TaskSpec};

/// Semantic checks over a parsed spec. Locations refer to the canonical
/// rendering of `spec`; use [`validate_source`] to point into an original
/// file instead.
pub fn validate(spec: &TaskSpec) -> Vec<Diagnostic> {
    validate_source(spec, &render_task_spec(spec))
}

/// Same rules as [`validate`], with locations searched for in `source`.
pub fn validate_source(spec: &TaskSpec, source: &str) -> Vec<Diagnostic> {
    let locate = |needles: &[&str]| locate(source, needles);
    let mut out = Vec::new();

    for (i, a) in spec.regions.iter().enumerate() {
        for b in &spec.regions[i + 1..] {
            if a.ranges.overlaps(&b.ranges) {
                out.push(Diagnostic::warning(
                    DiagCode::OverlappingRegions,
                    locate(&[&format!("({}", b.name), &b.name]),
                    format!("regions '{}' and '{}' overlap", a.name, b.name),
                ));
            }
        }
    }

    for name in &spec.objects_of_interest {
        if spec.object(name).is_none() {
            out.push(Diagnostic::error(
                DiagCode::InterestNotObject,
                locate(&[&format!("    {name}\n"), name]),
                format!("object of interest '{name}' is not listed under :objects"),
            ));
        }
    }

    for pred in &spec.goal_conditions {
        if spec.fixture(pred.subject()).is_some() {
            let text = pred.to_string();
            out.push(Diagnostic::error(
                DiagCode::GoalOnFixture,
                locate(&[&text, pred.subject()]),
                format!("goal {text} constrains fixture '{}'", pred.subject()),
            ));
        }
    }

    // Placement: every object needs exactly one On/In init predicate whose
    // target is a region or another object, with no stacking cycles.
    let mut support: HashMap<&str, &str> = HashMap::new();
    for obj in &spec.objects {
        let placements: Vec<_> = spec
            .init_conditions
            .iter()
            .filter(|p| {
                matches!(p.relation, Relation::On | Relation::In) && p.subject() == obj.name
            })
            .collect();
        match placements.as_slice() {
            [] => out.push(Diagnostic::error(
                DiagCode::MissingInitPlacement,
                locate(&[&format!("{} - ", obj.name), &obj.name]),
                format!("object '{}' has no On/In init placement", obj.name),
            )),
            [p] => {
                let target = p.target().unwrap_or_default();
                match spec.resolve(target) {
                    Some(Referent::Region(_)) => {}
                    Some(Referent::Object(o)) => {
                        support.insert(obj.name.as_str(), o.name.as_str());
                    }
                    _ => {
                        let text = p.to_string();
                        out.push(Diagnostic::error(
                            DiagCode::InvalidPlacementTarget,
                            locate(&[&text, target]),
                            format!(
                                "{text}: objects must be placed in a region or on another object"
                            ),
                        ));
                    }
                }
            }
            [_, second, ..] => {
                let text = second.to_string();
                out.push(Diagnostic::error(
                    DiagCode::ConflictingPlacement,
                    locate(&[&text, &obj.name]),
                    format!("object '{}' is placed more than once in :init", obj.name),
                ));
            }
        }
    }

    let mut reported: HashSet<&str> = HashSet::new();
    for start in spec.objects.iter().map(|o| o.name.as_str()) {
        let mut seen = HashSet::new();
        let mut cur = start;
        while let Some(&next) = support.get(cur) {
            if !seen.insert(cur) {
                break;
            }
            if next == start {
                if seen.iter().all(|n| !reported.contains(n)) {
                    out.push(Diagnostic::error(
                        DiagCode::CyclicPlacement,
                        locate(&[&format!("(On {start} "), start]),
                        format!("init placement of '{start}' rests on itself through a cycle"),
                    ));
                }
                reported.extend(seen.iter().copied());
                break;
            }
            cur = next;
        }
    }

    out
}

fn locate(source: &str, needles: &[&str]) -> Location {
    for needle in needles {
        if needle.is_empty() {
            continue;
        }
        if let Some(idx) = source.find(needle) {
            let offset = idx + needle.len() - needle.trim_start().len();
            let before = &source[..offset];
            let line = before.matches('\n').count() + 1;
            let column = before[before.rfind('\n').map_or(0, |i| i + 1)..]
                .chars()
                .count()
                + 1;
            return Location { line, column };
        }
    }
    Location { line: 1, column: 1 }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_task_spec, Severity};
    use super::*;

    const SCENE: &str = "\
(define (problem scene)
  (:domain tabletop)
  (:language put the bowl on the plate)
  (:regions
    (bowl_region (:target table) (:ranges ((-0.2 -0.2 -0.1 -0.1))))
    (plate_region (:target table) (:ranges ((0.1 0.1 0.2 0.2))))
    (cookie_region (:target table) (:ranges ((0.125 -0.105 0.175 -0.055))))
  )
  (:fixtures table - table)
  (:objects
    bowl_1 - akita_black_bowl
    plate_1 - plate
    cookies_1 - cookies
  )
  (:obj_of_interest bowl_1 plate_1)
  (:init
    (On bowl_1 table_bowl_region)
    (On plate_1 table_plate_region)
    (On cookies_1 table_cookie_region)
  )
  (:goal (And (On bowl_1 plate_1)))
)";

    fn spec_with(from: &str, to: &str) -> TaskSpec {
        parse_task_spec(&SCENE.replace(from, to)).unwrap()
    }

    fn codes(spec: &TaskSpec) -> Vec<DiagCode> {
        validate(spec).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn passive_distractor_is_legal() {
        let spec = parse_task_spec(SCENE).unwrap();
        assert!(validate(&spec).is_empty());
    }

    #[test]
    fn identical_regions_overlap_once() {
        let spec = spec_with("(0.1 0.1 0.2 0.2)", "(-0.2 -0.2 -0.1 -0.1)");
        let diags = validate(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::OverlappingRegions);
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn goal_on_fixture() {
        let spec = spec_with("(On bowl_1 plate_1)", "(Open table)");
        assert_eq!(codes(&spec), vec![DiagCode::GoalOnFixture]);
    }

    #[test]
    fn interest_must_be_an_object() {
        let spec = spec_with(
            "(:obj_of_interest bowl_1 plate_1)",
            "(:obj_of_interest bowl_1 table)",
        );
        assert_eq!(codes(&spec), vec![DiagCode::InterestNotObject]);
    }

    #[test]
    fn placement_rules() {
        let spec = spec_with("    (On cookies_1 table_cookie_region)\n", "");
        assert_eq!(codes(&spec), vec![DiagCode::MissingInitPlacement]);

        let spec = spec_with(
            "(On cookies_1 table_cookie_region)",
            "(On cookies_1 table_cookie_region) (In cookies_1 table_bowl_region)",
        );
        assert_eq!(codes(&spec), vec![DiagCode::ConflictingPlacement]);

        let spec = spec_with("(On cookies_1 table_cookie_region)", "(On cookies_1 table)");
        assert_eq!(codes(&spec), vec![DiagCode::InvalidPlacementTarget]);

        let spec = spec_with(
            "(On bowl_1 table_bowl_region)\n    (On plate_1 table_plate_region)",
            "(On bowl_1 plate_1)\n    (On plate_1 bowl_1)",
        );
        assert_eq!(codes(&spec), vec![DiagCode::CyclicPlacement]);

        let spec = spec_with(
            "(On cookies_1 table_cookie_region)",
            "(On cookies_1 plate_1)",
        );
        assert!(validate(&spec).is_empty());
    }

    #[test]
    fn locations_point_into_source() {
        let src = SCENE.replace("(On bowl_1 plate_1)", "(Open table)");
        let spec = parse_task_spec(&src).unwrap();
        let diags = validate_source(&spec, &src);
        let loc = diags[0].location;
        let line = src.lines().nth(loc.line - 1).unwrap();
        assert!(line[loc.column - 1..].starts_with("(Open table)"));
    }
}
