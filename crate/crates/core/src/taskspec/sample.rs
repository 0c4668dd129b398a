use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Referent, TaskSpec};
use crate::seed;

/// Minimum center distance between sampled objects, meters.
pub const DEFAULT_CLEARANCE: f64 = 0.03;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Poses for every object whose init placement targets a region. Objects
/// stacked on other objects are not listed; they take their support's pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlacement {
    pub placements: Vec<Placement>,
    pub seed: u64,
}

impl ScenePlacement {
    pub fn get(&self, name: &str) -> Option<&Placement> {
        self.placements.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlacementError {
    #[error("PLACEMENT_INFEASIBLE: could not place '{object}' after {attempts} attempts")]
    Infeasible { object: String, attempts: usize },
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo + rng.random::<f64>() * (hi - lo)).clamp(lo, hi)
}

/// Samples object poses uniformly inside their init regions, rejecting
/// candidates closer than `clearance` to an already placed object.
pub fn sample_scene(
    spec: &TaskSpec,
    seed: u64,
    clearance: f64,
) -> Result<ScenePlacement, PlacementError> {
    sample_scene_with_attempts(spec, seed, clearance, DEFAULT_MAX_ATTEMPTS)
}

pub fn sample_scene_with_attempts(
    spec: &TaskSpec,
    seed: u64,
    clearance: f64,
    max_attempts: usize,
) -> Result<ScenePlacement, PlacementError> {
    let mut rng = seed::rng(seed);
    let mut placements: Vec<Placement> = Vec::new();
    let min_d2 = clearance * clearance;

    for obj in &spec.objects {
        let Some(pred) = spec.init_placement(&obj.name) else {
            continue;
        };
        let Some(Referent::Region(region)) = pred.target().and_then(|t| spec.resolve(t)) else {
            continue;
        };
        let r = region.ranges;
        let (yaw_lo, yaw_hi) = region.yaw_rotation;
        let mut placed = None;
        for _ in 0..max_attempts {
            let x = uniform(&mut rng, r.x_min, r.x_max);
            let y = uniform(&mut rng, r.y_min, r.y_max);
            let yaw = uniform(&mut rng, yaw_lo, yaw_hi);
            let clear = placements.iter().all(|p| {
                let (dx, dy) = (p.x - x, p.y - y);
                dx * dx + dy * dy >= min_d2
            });
            if clear {
                placed = Some(Placement {
                    name: obj.name.clone(),
                    x,
                    y,
                    yaw,
                });
                break;
            }
        }
        match placed {
            Some(p) => placements.push(p),
            None => {
                return Err(PlacementError::Infeasible {
                    object: obj.name.clone(),
                    attempts: max_attempts,
                })
            }
        }
    }
    Ok(ScenePlacement { placements, seed })
}
