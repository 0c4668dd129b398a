use super::{Instance, Predicate, Region, TaskSpec};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditError {
    #[error("UNKNOWN_CLASS: '{0}' is not in the object registry")]
    UnknownClass(String),
    #[error("DUPLICATE_REGION: region '{0}' is already defined")]
    DuplicateRegion(String),
    #[error("UNDECLARED_OBJECT: region target '{0}' is not a declared instance")]
    UndeclaredParent(String),
    #[error("INVALID_RANGE: region '{0}' has min > max")]
    InvalidRange(String),
    #[error("UNDECLARED_OBJECT: '{0}' is not an object of this spec")]
    UnknownInstance(String),
}

/// Adds a passive object of `class` placed in the new `region`.
///
/// The instance is named `<class>_<n>` with the smallest unused `n >= 1`
/// and placed with `(On <instance> <parent>_<region>)`. Goals and objects
/// of interest are left untouched.
pub fn add_distractor(
    spec: &TaskSpec,
    registry: &Registry,
    class: &str,
    region: Region,
) -> Result<TaskSpec, EditError> {
    if !registry.contains(class) {
        return Err(EditError::UnknownClass(class.to_string()));
    }
    if spec.regions.iter().any(|r| r.name == region.name) {
        return Err(EditError::DuplicateRegion(region.name));
    }
    if !spec.is_instance(&region.parent) {
        return Err(EditError::UndeclaredParent(region.parent));
    }
    let r = &region.ranges;
    if r.x_min > r.x_max || r.y_min > r.y_max || region.yaw_rotation.0 > region.yaw_rotation.1 {
        return Err(EditError::InvalidRange(region.name));
    }

    let name = (1..)
        .map(|n| format!("{class}_{n}"))
        .find(|candidate| !spec.is_instance(candidate))
        .expect("unbounded search");

    let mut out = spec.clone();
    out.init_conditions
        .push(Predicate::on(&name, &region.qualified_name()));
    out.objects.push(Instance::new(name, class));
    out.regions.push(region);
    Ok(out)
}

/// Inverse of [`add_distractor`]: drops the instance, every init predicate
/// mentioning it, and any region that only it referenced.
pub fn remove_distractor(spec: &TaskSpec, instance: &str) -> Result<TaskSpec, EditError> {
    if spec.object(instance).is_none() {
        return Err(EditError::UnknownInstance(instance.to_string()));
    }
    let mut out = spec.clone();
    out.objects.retain(|o| o.name != instance);

    let (dropped, kept): (Vec<_>, Vec<_>) = out
        .init_conditions
        .into_iter()
        .partition(|p| p.args.iter().any(|a| a == instance));
    out.init_conditions = kept;

    let still_used = |region: &Region, spec: &TaskSpec| {
        spec.init_conditions
            .iter()
            .chain(&spec.goal_conditions)
            .any(|p| p.args.iter().any(|a| region.answers_to(a)))
    };
    let orphaned: Vec<String> = out
        .regions
        .iter()
        .filter(|r| {
            dropped
                .iter()
                .any(|p| p.args.iter().any(|a| r.answers_to(a)))
        })
        .filter(|r| !still_used(r, &out))
        .map(|r| r.name.clone())
        .collect();
    out.regions.retain(|r| !orphaned.contains(&r.name));
    Ok(out)
}
