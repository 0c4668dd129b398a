//! Cross-embodiment action normalization.
//!
//! Joint trajectories from planar revolute chains are mapped through forward
//! kinematics to end-effector poses and differenced into the unified action
//! `[dx, dy, dz, droll, dpitch, dyaw, gripper]`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregator::{AggregateError, ContainerReader};
use crate::seed;
use crate::simworld::wrap_angle;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum XembodyError {
    #[error("DIMENSION_MISMATCH: expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("LENGTH_MISMATCH: {joints} joint rows but {gripper} gripper values")]
    LengthMismatch { joints: usize, gripper: usize },
    #[error("trajectory needs at least 2 steps, got {0}")]
    TooShort(usize),
    #[error("EMPTY_SOURCE: source '{0}' has no episodes")]
    EmptySource(String),
    #[error("INVALID_WEIGHTS: {0}")]
    InvalidWeights(String),
    #[error("INVALID_EMBODIMENT: {0}")]
    InvalidEmbodiment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperChannel {
    #[default]
    Binary,
}

/// A planar chain of revolute joints mounted at `base` = (x, y, z, yaw).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentSpec {
    pub name: String,
    pub links: Vec<f64>,
    #[serde(default)]
    pub base: [f64; 4],
    #[serde(default)]
    pub gripper_channel: GripperChannel,
}

impl EmbodimentSpec {
    pub fn new(name: impl Into<String>, links: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            links,
            base: [0.0; 4],
            gripper_channel: GripperChannel::Binary,
        }
    }

    pub fn validate(&self) -> Result<(), XembodyError> {
        if self.links.is_empty() {
            return Err(XembodyError::InvalidEmbodiment("chain has no links".into()));
        }
        if let Some(l) = self.links.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(XembodyError::InvalidEmbodiment(format!(
                "link length {l} is not positive"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, XembodyError> {
        let e: Self = serde_json::from_str(text)
            .map_err(|err| XembodyError::InvalidEmbodiment(err.to_string()))?;
        e.validate()?;
        Ok(e)
    }
}

/// (x, y, z, roll, pitch, yaw).
pub type EePose = [f64; 6];
pub type UnifiedAction = [f64; 7];

pub fn forward_kinematics(emb: &EmbodimentSpec, joints: &[f64]) -> Result<EePose, XembodyError> {
    if joints.len() != emb.links.len() {
        return Err(XembodyError::DimensionMismatch {
            expected: emb.links.len(),
            actual: joints.len(),
        });
    }
    let (mut x, mut y, mut angle) = (0.0, 0.0, 0.0);
    for (l, theta) in emb.links.iter().zip(joints) {
        angle += theta;
        x += l * angle.cos();
        y += l * angle.sin();
    }
    let [bx, by, bz, byaw] = emb.base;
    let (s, c) = byaw.sin_cos();
    Ok([
        bx + c * x - s * y,
        by + s * x + c * y,
        bz,
        0.0,
        0.0,
        wrap_angle(byaw + angle),
    ])
}

/// Consecutive pose differences with the yaw delta wrapped; the gripper
/// value is taken from the later step and binarized at 0.5.
pub fn normalize_trajectory(
    emb: &EmbodimentSpec,
    joint_traj: &[Vec<f64>],
    gripper_traj: &[f64],
) -> Result<Vec<UnifiedAction>, XembodyError> {
    if joint_traj.len() != gripper_traj.len() {
        return Err(XembodyError::LengthMismatch {
            joints: joint_traj.len(),
            gripper: gripper_traj.len(),
        });
    }
    if joint_traj.len() < 2 {
        return Err(XembodyError::TooShort(joint_traj.len()));
    }
    let poses = joint_traj
        .iter()
        .map(|q| forward_kinematics(emb, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(poses
        .windows(2)
        .zip(&gripper_traj[1..])
        .map(|(w, &g)| {
            let (a, b) = (w[0], w[1]);
            [
                b[0] - a[0],
                b[1] - a[1],
                b[2] - a[2],
                b[3] - a[3],
                b[4] - a[4],
                wrap_angle(b[5] - a[5]),
                if g > 0.5 { 1.0 } else { 0.0 },
            ]
        })
        .collect())
}

/// Applies delta actions to a start pose; yaw is re-wrapped at the end.
pub fn integrate(start: EePose, actions: &[UnifiedAction]) -> EePose {
    let mut p = start;
    for a in actions {
        for i in 0..6 {
            p[i] += a[i];
        }
    }
    p[5] = wrap_angle(p[5]);
    p
}

/// Draws `n` (source, episode) pairs: sources i.i.d. by weight, episodes
/// uniformly within the chosen source.
pub fn sample_mixture(
    sources: &[(String, usize)],
    weights: &[(String, f64)],
    n: usize,
    seed: u64,
) -> Result<Vec<(String, usize)>, XembodyError> {
    if weights.is_empty() {
        return Err(XembodyError::InvalidWeights("no weights given".into()));
    }
    if let Some((name, w)) = weights.iter().find(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(XembodyError::InvalidWeights(format!(
            "weight {w} for '{name}' is negative"
        )));
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(XembodyError::InvalidWeights(format!(
            "weights sum to {total}, not 1"
        )));
    }
    let counts: BTreeMap<&str, usize> = sources.iter().map(|(s, c)| (s.as_str(), *c)).collect();
    for (name, w) in weights {
        if *w > 0.0 && counts.get(name.as_str()).copied().unwrap_or(0) == 0 {
            return Err(XembodyError::EmptySource(name.clone()));
        }
    }
    let dist = WeightedIndex::new(weights.iter().map(|(_, w)| *w))
        .map_err(|e| XembodyError::InvalidWeights(e.to_string()))?;
    let mut rng = seed::rng(seed);
    Ok((0..n)
        .map(|_| {
            let (name, _) = &weights[dist.sample(&mut rng)];
            let episode = rng.random_range(0..counts[name.as_str()]);
            (name.clone(), episode)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub total_steps: usize,
    pub lengths: Vec<usize>,
    pub completion_rate: f64,
}

pub fn dataset_stats(path: &Path) -> Result<DatasetStats, AggregateError> {
    let mut reader = ContainerReader::open(path)?;
    let mut lengths = Vec::new();
    let mut completed = 0;
    for demo in reader.demos() {
        let rewards = reader.read(&format!("data/{demo}/rewards"))?;
        let rewards = rewards
            .to_f32()
            .map_err(|e| AggregateError::CorruptIndex(format!("{demo}/rewards: {e}")))?;
        let total: f64 = rewards.iter().map(|&r| r as f64).sum();
        if total >= 1.0 - 1e-6 {
            completed += 1;
        }
        lengths.push(rewards.len());
    }
    let episodes = lengths.len();
    Ok(DatasetStats {
        episodes,
        total_steps: lengths.iter().sum(),
        completion_rate: if episodes == 0 {
            0.0
        } else {
            completed as f64 / episodes as f64
        },
        lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, Strategy};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn two_link() -> EmbodimentSpec {
        EmbodimentSpec::new("two", vec![1.0, 1.0])
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn analytic_cases() {
        let e = two_link();
        assert!(close(
            &forward_kinematics(&e, &[0.0, 0.0]).unwrap(),
            &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            1e-12
        ));
        assert!(close(
            &forward_kinematics(&e, &[FRAC_PI_2, -FRAC_PI_2]).unwrap(),
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            1e-12
        ));
        assert_eq!(
            forward_kinematics(&e, &[0.0]),
            Err(XembodyError::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        );
    }

    #[test]
    fn two_step_difference() {
        let a = normalize_trajectory(
            &two_link(),
            &[vec![0.0, 0.0], vec![FRAC_PI_2, -FRAC_PI_2]],
            &[0.0, 1.0],
        )
        .unwrap();
        assert_eq!(a.len(), 1);
        assert!(close(&a[0], &[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn constant_trajectory_is_still() {
        let q = vec![vec![0.3, -0.2, 0.1]; 5];
        let e = EmbodimentSpec::new("three", vec![0.5, 0.4, 0.1]);
        for a in normalize_trajectory(&e, &q, &[0.0, 0.2, 0.7, 0.9, 0.4]).unwrap() {
            assert_eq!(&a[..6], &[0.0; 6]);
        }
    }

    #[test]
    fn trajectory_errors() {
        let e = two_link();
        assert!(matches!(
            normalize_trajectory(&e, &vec![vec![0.0, 0.0]; 3], &[0.0; 2]),
            Err(XembodyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            normalize_trajectory(&e, &[vec![0.0, 0.0]], &[0.0]),
            Err(XembodyError::TooShort(1))
        ));
        assert!(matches!(
            normalize_trajectory(&e, &[vec![0.0, 0.0], vec![0.0]], &[0.0; 2]),
            Err(XembodyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embodiment_json() {
        let e = EmbodimentSpec::from_json(
            r#"{"name":"widow","links":[0.2,0.15],"base":[0.1,0.0,0.05,1.0]}"#,
        )
        .unwrap();
        assert_eq!(e.base, [0.1, 0.0, 0.05, 1.0]);
        assert_eq!(forward_kinematics(&e, &[0.0, 0.0]).unwrap()[2], 0.05);
        assert!(EmbodimentSpec::from_json(r#"{"name":"bad","links":[0.2,0.0]}"#).is_err());
        assert!(EmbodimentSpec::from_json(r#"{"name":"none","links":[]}"#).is_err());
    }

    #[test]
    fn mixture_frequencies() {
        let sources = vec![
            ("franka".to_string(), 40),
            ("widowx".to_string(), 25),
            ("other".to_string(), 35),
        ];
        let weights = vec![
            ("franka".to_string(), 0.40),
            ("widowx".to_string(), 0.25),
            ("other".to_string(), 0.35),
        ];
        let draws = sample_mixture(&sources, &weights, 10_000, 7).unwrap();
        for (name, w) in &weights {
            let f = draws.iter().filter(|(s, _)| s == name).count() as f64 / 10_000.0;
            assert!((f - w).abs() < 0.02, "{name}: {f}");
        }
        assert!(draws
            .iter()
            .all(|(s, e)| *e < sources.iter().find(|x| &x.0 == s).unwrap().1));
        assert_eq!(
            draws,
            sample_mixture(&sources, &weights, 10_000, 7).unwrap()
        );
    }

    #[test]
    fn mixture_edge_cases() {
        let one = vec![("solo".to_string(), 3)];
        let w = vec![("solo".to_string(), 1.0)];
        assert!(sample_mixture(&one, &w, 100, 1)
            .unwrap()
            .iter()
            .all(|(s, _)| s == "solo"));
        let empty = vec![("solo".to_string(), 0)];
        assert_eq!(
            sample_mixture(&empty, &w, 1, 1),
            Err(XembodyError::EmptySource("solo".into()))
        );
        let bad = vec![("solo".to_string(), 0.9)];
        assert!(matches!(
            sample_mixture(&one, &bad, 1, 1),
            Err(XembodyError::InvalidWeights(_))
        ));
    }

    fn arb_chain() -> impl Strategy<Value = (Vec<f64>, [f64; 4])> {
        (
            proptest::collection::vec(0.05f64..1.0, 1..6),
            (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..0.5, -PI..PI),
        )
            .prop_map(|(links, (x, y, z, yaw))| (links, [x, y, z, yaw]))
    }

    proptest! {
        #[test]
        fn base_rotation_rotates_the_pose((links, _) in arb_chain(), phi in -PI..PI, seed: u64) {
            let mut rng = seed::rng(seed);
            let q: Vec<f64> = links.iter().map(|_| rng.random_range(-PI..PI)).collect();
            let plain = EmbodimentSpec::new("a", links.clone());
            let mut turned = plain.clone();
            turned.base[3] = phi;
            let p = forward_kinematics(&plain, &q).unwrap();
            let r = forward_kinematics(&turned, &q).unwrap();
            let (s, c) = phi.sin_cos();
            prop_assert!((r[0] - (c * p[0] - s * p[1])).abs() < 1e-12);
            prop_assert!((r[1] - (s * p[0] + c * p[1])).abs() < 1e-12);
            prop_assert!(wrap_angle(r[5] - p[5] - phi).abs() < 1e-12);
        }

        #[test]
        fn zero_length_link_changes_nothing((links, base) in arb_chain(), seed: u64) {
            let mut rng = seed::rng(seed);
            let q: Vec<f64> = links.iter().map(|_| rng.random_range(-PI..PI)).collect();
            let mut e = EmbodimentSpec::new("a", links.clone());
            e.base = base;
            let p = forward_kinematics(&e, &q).unwrap();
            // FK itself accepts the extra link; only validate() forbids it.
            let mut longer = e.clone();
            longer.links.push(0.0);
            let mut q2 = q.clone();
            q2.push(rng.random_range(-PI..PI));
            let p2 = forward_kinematics(&longer, &q2).unwrap();
            prop_assert!(close(&p[..5], &p2[..5], 1e-12));
        }

        #[test]
        fn reconstruction((links, base) in arb_chain(), seed: u64) {
            let mut rng = seed::rng(seed);
            let mut e = EmbodimentSpec::new("a", links.clone());
            e.base = base;
            let traj: Vec<Vec<f64>> = (0..50)
                .map(|_| links.iter().map(|_| rng.random_range(-PI..PI)).collect())
                .collect();
            let grip: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            let actions = normalize_trajectory(&e, &traj, &grip).unwrap();
            prop_assert_eq!(actions.len(), 49);
            for a in &actions {
                prop_assert!(a[5] > -PI && a[5] <= PI);
                prop_assert!(a[6] == 0.0 || a[6] == 1.0);
            }
            let start = forward_kinematics(&e, &traj[0]).unwrap();
            let end = forward_kinematics(&e, &traj[49]).unwrap();
            let got = integrate(start, &actions);
            prop_assert!(close(&got[..5], &end[..5], 1e-9));
            prop_assert!(wrap_angle(got[5] - end[5]).abs() < 1e-9);
        }
    }
}
