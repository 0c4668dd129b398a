use std::fmt::Write;

use super::{Instance, Predicate, TaskSpec};

/// Canonical text form: 2-space indentation, one declaration or predicate
/// per line. Numbers use the shortest representation that parses back to
/// the same `f64`.
pub fn render_task_spec(spec: &TaskSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", spec.problem_name);
    let _ = writeln!(out, "  (:domain {})", spec.domain_name);
    if spec.language_instruction.is_empty() {
        out.push_str("  (:language)\n");
    } else {
        let _ = writeln!(out, "  (:language {})", spec.language_instruction);
    }

    out.push_str("  (:regions\n");
    for r in &spec.regions {
        let _ = writeln!(out, "    ({}", r.name);
        let _ = writeln!(out, "      (:target {})", r.parent);
        let _ = writeln!(
            out,
            "      (:ranges (({:?} {:?} {:?} {:?})))",
            r.ranges.x_min, r.ranges.y_min, r.ranges.x_max, r.ranges.y_max
        );
        let _ = writeln!(
            out,
            "      (:yaw_rotation (({:?} {:?})))",
            r.yaw_rotation.0, r.yaw_rotation.1
        );
        out.push_str("    )\n");
    }
    out.push_str("  )\n");

    typed_section(&mut out, ":fixtures", &spec.fixtures);
    typed_section(&mut out, ":objects", &spec.objects);

    out.push_str("  (:obj_of_interest\n");
    for name in &spec.objects_of_interest {
        let _ = writeln!(out, "    {name}");
    }
    out.push_str("  )\n");

    predicate_section(&mut out, "  (:init\n", "    ", &spec.init_conditions);
    out.push_str("  )\n");

    out.push_str("  (:goal\n    (And\n");
    predicate_section(&mut out, "", "      ", &spec.goal_conditions);
    out.push_str("    )\n  )\n");

    out.push_str(")\n");
    out
}

fn typed_section(out: &mut String, keyword: &str, items: &[Instance]) {
    let _ = writeln!(out, "  ({keyword}");
    for inst in items {
        let _ = writeln!(out, "    {} - {}", inst.name, inst.class);
    }
    out.push_str("  )\n");
}

fn predicate_section(out: &mut String, header: &str, indent: &str, preds: &[Predicate]) {
    out.push_str(header);
    for p in preds {
        let _ = writeln!(out, "{indent}{p}");
    }
}
