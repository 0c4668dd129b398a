use std::collections::{HashMap, HashSet};

use super::lexer::{read, SExpr};
use super::{
    DiagCode, Diagnostic, Instance, Location, Predicate, Ranges, Region, Relation, TaskSpec,
};

const SECTIONS: [&str; 8] = [
    ":domain",
    ":language",
    ":regions",
    ":fixtures",
    ":objects",
    ":obj_of_interest",
    ":init",
    ":goal",
];

const START: Location = Location { line: 1, column: 1 };

/// Source positions kept alongside the spec for reference checking.
#[derive(Default)]
struct Locs {
    objects: Vec<Location>,
    fixtures: Vec<Location>,
    regions: Vec<Location>,
    region_parents: Vec<Location>,
    init: Vec<Vec<Location>>,
    goal: Vec<Vec<Location>>,
    interest: Vec<Location>,
}

struct Parser {
    diags: Vec<Diagnostic>,
    locs: Locs,
    /// Regions that failed to parse; references to them are not reported again.
    broken_regions: Vec<String>,
}

/// Parses a task file. Either a spec or at least one error diagnostic is
/// returned; warnings never cause rejection here.
pub fn parse_task_spec(source: &str) -> Result<TaskSpec, Vec<Diagnostic>> {
    let forms = read(source).map_err(|d| vec![d])?;
    let mut p = Parser {
        diags: Vec::new(),
        locs: Locs::default(),
        broken_regions: Vec::new(),
    };
    let spec = p.top(&forms);
    if let Some(spec) = &spec {
        p.resolve(spec);
    }
    match spec {
        Some(spec) if p.diags.iter().all(|d| !d.is_error()) => Ok(spec),
        _ => {
            if p.diags.is_empty() {
                p.diags.push(Diagnostic::error(
                    DiagCode::SyntaxError,
                    START,
                    "not a task definition",
                ));
            }
            Err(p.diags)
        }
    }
}

impl Parser {
    fn error(&mut self, code: DiagCode, loc: Location, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, loc, msg));
    }

    fn top(&mut self, forms: &[SExpr]) -> Option<TaskSpec> {
        let Some(first) = forms.first() else {
            self.error(DiagCode::MissingSection, START, "empty task file");
            return None;
        };
        if let Some(extra) = forms.get(1) {
            self.error(
                DiagCode::SyntaxError,
                extra.loc(),
                "unexpected form after the task definition",
            );
        }
        let SExpr::List(items, loc) = first else {
            self.error(
                DiagCode::SyntaxError,
                first.loc(),
                "expected '(define ...)'",
            );
            return None;
        };
        if items.first().and_then(SExpr::as_atom) != Some("define") {
            self.error(DiagCode::SyntaxError, *loc, "expected '(define ...)'");
            return None;
        }

        let problem_name = match items.get(1) {
            Some(SExpr::List(head, hloc)) => match head.as_slice() {
                [SExpr::Atom(kw, _), SExpr::Atom(name, _)] if kw == "problem" => name.clone(),
                _ => {
                    self.error(DiagCode::SyntaxError, *hloc, "expected '(problem NAME)'");
                    return None;
                }
            },
            _ => {
                self.error(DiagCode::MissingSection, *loc, "missing '(problem NAME)'");
                return None;
            }
        };

        let mut spec = TaskSpec {
            problem_name,
            domain_name: String::new(),
            language_instruction: String::new(),
            objects: Vec::new(),
            fixtures: Vec::new(),
            regions: Vec::new(),
            init_conditions: Vec::new(),
            goal_conditions: Vec::new(),
            objects_of_interest: Vec::new(),
        };
        let mut seen: HashSet<String> = HashSet::new();

        for section in &items[2..] {
            let SExpr::List(parts, sloc) = section else {
                self.error(DiagCode::SyntaxError, section.loc(), "expected a section");
                continue;
            };
            let Some(SExpr::Atom(keyword, kloc)) = parts.first() else {
                self.error(DiagCode::SyntaxError, *sloc, "section without keyword");
                continue;
            };
            if !SECTIONS.contains(&keyword.as_str()) {
                self.error(
                    DiagCode::UnknownSection,
                    *kloc,
                    format!("unknown section keyword '{keyword}'"),
                );
                continue;
            }
            if !seen.insert(keyword.clone()) {
                self.error(
                    DiagCode::DuplicateSection,
                    *kloc,
                    format!("section '{keyword}' appears more than once"),
                );
                continue;
            }
            let body = &parts[1..];
            match keyword.as_str() {
                ":domain" => match body {
                    [SExpr::Atom(name, _)] => spec.domain_name = name.clone(),
                    _ => self.error(DiagCode::SyntaxError, *sloc, "expected '(:domain NAME)'"),
                },
                ":language" => spec.language_instruction = self.language(body),
                ":regions" => {
                    for r in body {
                        if let Some(region) = self.region(r) {
                            spec.regions.push(region);
                        }
                    }
                }
                ":fixtures" => {
                    let (inst, locs) = self.typed_list(body);
                    spec.fixtures = inst;
                    self.locs.fixtures = locs;
                }
                ":objects" => {
                    let (inst, locs) = self.typed_list(body);
                    spec.objects = inst;
                    self.locs.objects = locs;
                }
                ":obj_of_interest" => {
                    for item in body {
                        match item {
                            SExpr::Atom(name, loc) => {
                                spec.objects_of_interest.push(name.clone());
                                self.locs.interest.push(*loc);
                            }
                            SExpr::List(_, loc) => {
                                self.error(DiagCode::SyntaxError, *loc, "expected an instance name")
                            }
                        }
                    }
                }
                ":init" => {
                    for item in body {
                        if let Some((p, l)) = self.predicate(item) {
                            spec.init_conditions.push(p);
                            self.locs.init.push(l);
                        }
                    }
                }
                ":goal" => {
                    let preds: &[SExpr] = match body {
                        [SExpr::List(inner, _)]
                            if inner
                                .first()
                                .and_then(SExpr::as_atom)
                                .is_some_and(|a| a.eq_ignore_ascii_case("and")) =>
                        {
                            &inner[1..]
                        }
                        _ => body,
                    };
                    for item in preds {
                        if let Some((p, l)) = self.predicate(item) {
                            spec.goal_conditions.push(p);
                            self.locs.goal.push(l);
                        }
                    }
                }
                _ => unreachable!(),
            }
        }

        if !seen.contains(":domain") {
            self.error(DiagCode::MissingSection, *loc, "missing '(:domain NAME)'");
        }
        Some(spec)
    }

    fn language(&mut self, body: &[SExpr]) -> String {
        let mut words = Vec::with_capacity(body.len());
        for item in body {
            match item {
                SExpr::Atom(w, _) => words.push(w.as_str()),
                SExpr::List(_, loc) => {
                    self.error(
                        DiagCode::SyntaxError,
                        *loc,
                        "language text may not contain parentheses",
                    );
                }
            }
        }
        words.join(" ")
    }

    /// `a b - class c - other` style declarations.
    fn typed_list(&mut self, body: &[SExpr]) -> (Vec<Instance>, Vec<Location>) {
        let mut out = Vec::new();
        let mut locs = Vec::new();
        let mut pending: Vec<(String, Location)> = Vec::new();
        let mut iter = body.iter();
        while let Some(item) = iter.next() {
            match item {
                SExpr::Atom(a, _) if a == "-" => {
                    let class = match iter.next() {
                        Some(SExpr::Atom(c, _)) if c != "-" => c.clone(),
                        other => {
                            let loc = other.map_or(item.loc(), SExpr::loc);
                            self.error(
                                DiagCode::SyntaxError,
                                loc,
                                "expected a class name after '-'",
                            );
                            pending.clear();
                            continue;
                        }
                    };
                    if pending.is_empty() {
                        self.error(
                            DiagCode::SyntaxError,
                            item.loc(),
                            "class without instance names",
                        );
                    }
                    for (name, loc) in pending.drain(..) {
                        out.push(Instance::new(name, class.clone()));
                        locs.push(loc);
                    }
                }
                SExpr::Atom(a, loc) => pending.push((a.clone(), *loc)),
                SExpr::List(_, loc) => {
                    self.error(DiagCode::SyntaxError, *loc, "expected 'name - class'");
                }
            }
        }
        for (name, loc) in pending {
            self.error(
                DiagCode::SyntaxError,
                loc,
                format!("instance '{name}' has no class (expected 'name - class')"),
            );
        }
        (out, locs)
    }

    fn number(&mut self, item: &SExpr) -> Option<f64> {
        match item {
            SExpr::Atom(text, loc) => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    self.error(
                        DiagCode::BadNumber,
                        *loc,
                        format!("'{text}' is not a finite number"),
                    );
                    None
                }
            },
            SExpr::List(_, loc) => {
                self.error(DiagCode::BadNumber, *loc, "expected a number");
                None
            }
        }
    }

    /// Unwraps `((a b ...))` into its numbers, the form used by ranges and yaw.
    fn tuple(&mut self, body: &[SExpr], n: usize, loc: Location, what: &str) -> Option<Vec<f64>> {
        let inner = match body {
            [SExpr::List(outer, _)] => match outer.as_slice() {
                [SExpr::List(inner, _)] => inner,
                _ => outer,
            },
            _ => {
                self.error(
                    DiagCode::SyntaxError,
                    loc,
                    format!("expected '({what} ((...)))'"),
                );
                return None;
            }
        };
        if inner.len() != n {
            self.error(
                DiagCode::SyntaxError,
                loc,
                format!("{what} needs exactly {n} numbers, found {}", inner.len()),
            );
            return None;
        }
        let mut values = Vec::with_capacity(n);
        for item in inner {
            values.push(self.number(item)?);
        }
        Some(values)
    }

    fn region(&mut self, item: &SExpr) -> Option<Region> {
        let SExpr::List(parts, loc) = item else {
            self.error(
                DiagCode::SyntaxError,
                item.loc(),
                "expected a region definition",
            );
            return None;
        };
        let Some(SExpr::Atom(name, _)) = parts.first() else {
            self.error(DiagCode::SyntaxError, *loc, "region without a name");
            return None;
        };
        let mut parent = None;
        let mut ranges = None;
        let mut yaw = None;
        let mut ok = true;
        for attr in &parts[1..] {
            let SExpr::List(a, aloc) = attr else {
                self.error(
                    DiagCode::SyntaxError,
                    attr.loc(),
                    "expected a region attribute",
                );
                ok = false;
                continue;
            };
            let key = a.first().and_then(SExpr::as_atom).unwrap_or("");
            match key {
                ":target" => match &a[1..] {
                    [SExpr::Atom(t, tloc)] => parent = Some((t.clone(), *tloc)),
                    _ => {
                        self.error(DiagCode::SyntaxError, *aloc, "expected '(:target NAME)'");
                        ok = false;
                    }
                },
                ":ranges" => match self.tuple(&a[1..], 4, *aloc, ":ranges") {
                    Some(v) => {
                        let r = Ranges {
                            x_min: v[0],
                            y_min: v[1],
                            x_max: v[2],
                            y_max: v[3],
                        };
                        if r.x_min > r.x_max || r.y_min > r.y_max {
                            self.error(
                                DiagCode::InvalidRange,
                                *aloc,
                                format!("ranges of '{name}' must satisfy x_min <= x_max and y_min <= y_max"),
                            );
                        }
                        ranges = Some(r);
                    }
                    None => ok = false,
                },
                ":yaw_rotation" => match self.tuple(&a[1..], 2, *aloc, ":yaw_rotation") {
                    Some(v) => {
                        if v[0] > v[1] {
                            self.error(
                                DiagCode::InvalidRange,
                                *aloc,
                                format!("yaw_rotation of '{name}' must satisfy yaw_min <= yaw_max"),
                            );
                        }
                        yaw = Some((v[0], v[1]));
                    }
                    None => ok = false,
                },
                _ => {
                    self.error(
                        DiagCode::UnknownSection,
                        *aloc,
                        format!("unknown region attribute '{key}'"),
                    );
                    ok = false;
                }
            }
        }
        let Some((parent, ploc)) = parent else {
            self.error(
                DiagCode::SyntaxError,
                *loc,
                format!("region '{name}' has no :target"),
            );
            self.broken_regions.push(name.clone());
            return None;
        };
        let Some(ranges) = ranges else {
            if ok {
                self.error(
                    DiagCode::SyntaxError,
                    *loc,
                    format!("region '{name}' has no :ranges"),
                );
            }
            self.broken_regions.push(name.clone());
            return None;
        };
        if !ok {
            self.broken_regions.push(name.clone());
            return None;
        }
        self.locs.regions.push(*loc);
        self.locs.region_parents.push(ploc);
        Some(Region {
            name: name.clone(),
            parent,
            ranges,
            yaw_rotation: yaw.unwrap_or((0.0, 0.0)),
        })
    }

    fn predicate(&mut self, item: &SExpr) -> Option<(Predicate, Vec<Location>)> {
        let SExpr::List(parts, loc) = item else {
            self.error(DiagCode::SyntaxError, item.loc(), "expected a predicate");
            return None;
        };
        let Some(SExpr::Atom(word, wloc)) = parts.first() else {
            self.error(DiagCode::SyntaxError, *loc, "predicate without relation");
            return None;
        };
        let Some(relation) = Relation::from_keyword(word) else {
            self.error(
                DiagCode::UnknownPredicate,
                *wloc,
                format!("unknown relation '{word}'"),
            );
            return None;
        };
        let mut args = Vec::new();
        let mut locs = Vec::new();
        for a in &parts[1..] {
            match a {
                SExpr::Atom(s, l) => {
                    args.push(s.clone());
                    locs.push(*l);
                }
                SExpr::List(_, l) => {
                    self.error(
                        DiagCode::SyntaxError,
                        *l,
                        "nested predicates are not supported",
                    );
                    return None;
                }
            }
        }
        if args.len() != relation.arity() {
            self.error(
                DiagCode::ArityMismatch,
                *loc,
                format!(
                    "{} takes {} argument(s), found {}",
                    relation.keyword(),
                    relation.arity(),
                    args.len()
                ),
            );
            return None;
        }
        Some((Predicate { relation, args }, locs))
    }

    /// Name uniqueness and reference checks.
    fn resolve(&mut self, spec: &TaskSpec) {
        let mut first_seen: HashMap<&str, ()> = HashMap::new();
        let instances = spec
            .objects
            .iter()
            .zip(&self.locs.objects)
            .chain(spec.fixtures.iter().zip(&self.locs.fixtures));
        let mut dups = Vec::new();
        for (inst, loc) in instances {
            if first_seen.insert(inst.name.as_str(), ()).is_some() {
                dups.push((inst.name.clone(), *loc));
            }
        }
        for (name, loc) in dups {
            self.error(
                DiagCode::DuplicateInstance,
                loc,
                format!("instance '{name}' is declared more than once"),
            );
        }

        let mut region_names = HashSet::new();
        let mut errs = Vec::new();
        for (i, region) in spec.regions.iter().enumerate() {
            if !region_names.insert(region.name.as_str()) {
                errs.push((
                    DiagCode::DuplicateRegion,
                    self.locs.regions[i],
                    format!("region '{}' is defined more than once", region.name),
                ));
            }
            if !spec.is_instance(&region.parent) {
                errs.push((
                    DiagCode::UndeclaredObject,
                    self.locs.region_parents[i],
                    format!(
                        "region target '{}' is not a declared instance",
                        region.parent
                    ),
                ));
            }
        }

        let sections = [
            (&spec.init_conditions, &self.locs.init),
            (&spec.goal_conditions, &self.locs.goal),
        ];
        for (preds, locs) in sections {
            for (pred, arg_locs) in preds.iter().zip(locs.iter()) {
                for (i, (arg, loc)) in pred.args.iter().zip(arg_locs).enumerate() {
                    let known = if pred.relation.arity() == 1 {
                        spec.resolve(arg).is_some()
                    } else if i == 0 {
                        spec.is_instance(arg)
                    } else {
                        spec.resolve(arg).is_some()
                    };
                    let broken = self
                        .broken_regions
                        .iter()
                        .any(|r| arg == r || arg.ends_with(&format!("_{r}")));
                    if known || broken {
                        continue;
                    }
                    let code = if pred.relation.arity() == 2 && i == 1 {
                        DiagCode::UndeclaredRegion
                    } else {
                        DiagCode::UndeclaredObject
                    };
                    let what = if code == DiagCode::UndeclaredRegion {
                        "is not a declared region or instance"
                    } else {
                        "is not a declared instance"
                    };
                    errs.push((code, *loc, format!("'{arg}' in {pred} {what}")));
                }
            }
        }

        for (name, loc) in spec.objects_of_interest.iter().zip(&self.locs.interest) {
            if !spec.is_instance(name) {
                errs.push((
                    DiagCode::UndeclaredObject,
                    *loc,
                    format!("object of interest '{name}' is not declared"),
                ));
            }
        }
        for (code, loc, msg) in errs {
            self.error(code, loc, msg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
(define (problem KITCHEN_SCENE3_turn_on_the_stove)
  (:domain robosuite)
  (:language turn on the stove and put the frying pan on it)
  (:regions
    (flat_stove_init_region
      (:target kitchen_table)
      (:ranges ((-0.21 0.19 -0.19 0.21)))
      (:yaw_rotation ((0.0 0.0)))
    )
    (other_object_region_5
      (:target kitchen_table)
      (:ranges (
          (0.125 -0.105 0.175 -0.055)
        )
      )
      (:yaw_rotation (
          (0.0 0.0)
        )
      )
    )
  )
  (:fixtures
    kitchen_table - kitchen_table
    flat_stove_1 - flat_stove
  )
  (:objects
    chefmate_8_frypan_1 - chefmate_8_frypan
    cookies_1 - cookies
  )
  (:obj_of_interest
    chefmate_8_frypan_1
    flat_stove_1
  )
  (:init
    (On flat_stove_1 kitchen_table_flat_stove_init_region)
    (On chefmate_8_frypan_1 kitchen_table_flat_stove_init_region)
    (On cookies_1 kitchen_table_other_object_region_5)
  )
  (:goal
    (And (TurnedOn flat_stove_1) (On chefmate_8_frypan_1 flat_stove_1))
  )
)
";

    fn codes(src: &str) -> Vec<DiagCode> {
        parse_task_spec(src)
            .unwrap_err()
            .into_iter()
            .map(|d| d.code)
            .collect()
    }

    #[test]
    fn parses_libero_style_file() {
        let spec = parse_task_spec(BASE).unwrap();
        assert_eq!(spec.problem_name, "KITCHEN_SCENE3_turn_on_the_stove");
        assert_eq!(spec.domain_name, "robosuite");
        assert_eq!(
            spec.language_instruction,
            "turn on the stove and put the frying pan on it"
        );
        assert_eq!(spec.objects[1], Instance::new("cookies_1", "cookies"));
        assert_eq!(spec.fixtures.len(), 2);
        let r = &spec.regions[1];
        assert_eq!(r.name, "other_object_region_5");
        assert_eq!(
            (
                r.ranges.x_min,
                r.ranges.y_min,
                r.ranges.x_max,
                r.ranges.y_max
            ),
            (0.125, -0.105, 0.175, -0.055)
        );
        assert_eq!(r.yaw_rotation, (0.0, 0.0));
        assert_eq!(
            spec.init_conditions[2],
            Predicate::on("cookies_1", "kitchen_table_other_object_region_5")
        );
        assert_eq!(spec.goal_conditions.len(), 2);
        assert_eq!(spec.goal_conditions[0].relation, Relation::TurnedOn);
        assert_eq!(
            spec.objects_of_interest,
            vec!["chefmate_8_frypan_1", "flat_stove_1"]
        );
    }

    #[test]
    fn empty_goal_section() {
        let src = BASE.replace(
            "(And (TurnedOn flat_stove_1) (On chefmate_8_frypan_1 flat_stove_1))",
            "",
        );
        assert!(parse_task_spec(&src).unwrap().goal_conditions.is_empty());
        let src = BASE.replace(
            "(And (TurnedOn flat_stove_1) (On chefmate_8_frypan_1 flat_stove_1))",
            "(And)",
        );
        assert!(parse_task_spec(&src).unwrap().goal_conditions.is_empty());
    }

    #[test]
    fn deleting_a_region_block_is_rejected() {
        let start = BASE.find("    (other_object_region_5").unwrap();
        let end = BASE.find("  (:fixtures").unwrap() - "  )\n".len();
        let src = format!("{}{}", &BASE[..start], &BASE[end..]);
        let diags = parse_task_spec(&src).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::UndeclaredRegion);
        assert!(diags[0]
            .message
            .contains("kitchen_table_other_object_region_5"));
        let line = src.lines().nth(diags[0].location.line - 1).unwrap();
        assert!(line.contains("(On cookies_1"));
    }

    #[test]
    fn distinct_codes_per_failure() {
        assert_eq!(
            codes("(define (problem p) (:domain d)"),
            vec![DiagCode::UnbalancedParens]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:bogus))"),
            vec![DiagCode::UnknownSection]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:objects a - x a - y))"),
            vec![DiagCode::DuplicateInstance]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:objects a - x) (:init (On b a)))"),
            vec![DiagCode::UndeclaredObject]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:objects a - x) (:init (Above a a)))"),
            vec![DiagCode::UnknownPredicate]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:objects a - x) (:init (On a)))"),
            vec![DiagCode::ArityMismatch]
        );
        assert_eq!(
            codes("(define (problem p))"),
            vec![DiagCode::MissingSection]
        );
        assert_eq!(
            codes("(define (problem p) (:domain d) (:domain e))"),
            vec![DiagCode::DuplicateSection]
        );
    }

    #[test]
    fn bad_ranges() {
        let src = BASE.replace("(0.125 -0.105 0.175 -0.055)", "(0.175 -0.105 0.125 -0.055)");
        assert_eq!(codes(&src), vec![DiagCode::InvalidRange]);
        let src = BASE.replace("(0.125 -0.105 0.175 -0.055)", "(0.125 -0.105 0.175 nan)");
        assert_eq!(codes(&src), vec![DiagCode::BadNumber]);
    }

    #[test]
    fn totality_on_garbage() {
        for src in [
            "",
            ")",
            "(",
            "define",
            "(define)",
            "((()))",
            "(define (problem) x)",
            "\u{0}",
        ] {
            let diags = parse_task_spec(src).unwrap_err();
            assert!(!diags.is_empty(), "{src:?}");
            assert!(diags.iter().any(Diagnostic::is_error));
        }
    }

    #[test]
    fn shared_class_declarations() {
        let spec =
            parse_task_spec("(define (problem p) (:domain d) (:objects a b - block c - bowl))")
                .unwrap();
        assert_eq!(
            spec.objects,
            vec![
                Instance::new("a", "block"),
                Instance::new("b", "block"),
                Instance::new("c", "bowl")
            ]
        );
    }
}
