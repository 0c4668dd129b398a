use demoforge_core::aggregator::{gather, validate_recorded, GatherConfig, Verdict};
use demoforge_core::recorder::{load_episode, verify_sync};
use demoforge_core::teleop::{
    ControlCmd, Phase, ScriptedOperator, ServerMessage, TeleopConfig, TeleopSession,
};
use demoforge_core::{CameraConfig, TaskKind};

fn drive(session: &mut TeleopSession, limit: usize) -> Vec<bool> {
    let op = ScriptedOperator::new(&session.config);
    let mut flags = Vec::new();
    for _ in 0..limit {
        let ServerMessage::Frame(frame) = session.frame() else {
            unreachable!()
        };
        if frame.phase == Phase::Saved {
            break;
        }
        session.tick(&op.next_input(&frame)).unwrap();
        flags.push(session.world.check_success());
    }
    flags
}

#[test]
fn scripted_operator_saves_a_valid_episode() {
    let dir = tempfile::tempdir().unwrap();
    let config = TeleopConfig::default();
    let mut s = TeleopSession::new(
        TaskKind::PlaceRedInGreen.spec(),
        config.clone(),
        CameraConfig::with_size(40, 30),
        dir.path(),
        17,
    )
    .unwrap();
    s.control(ControlCmd::Reset).unwrap();
    let flags = drive(&mut s, 2000);
    assert_eq!(s.state.phase, Phase::Saved);

    // Saved exactly when the trailing ten flags are all true.
    let n = flags.len();
    assert!(flags[n - 10..].iter().all(|&f| f));
    assert!(n == 10 || !flags[n - 11]);

    let tmp = s.tmp_dir();
    let episode = s.last_saved_episode().unwrap();
    let records = load_episode(&tmp, episode).unwrap();
    assert_eq!(records.len(), n + 1);
    assert!(verify_sync(&tmp, episode).unwrap().ok);
    assert_eq!(validate_recorded(&tmp, episode).0, Verdict::Accepted);

    // Simulated time advances by exactly one control period per tick.
    for (t, r) in records.iter().enumerate() {
        assert_eq!(r.info["sim_time"].as_f64().unwrap(), t as f64 / 20.0);
    }
    let save_tick = n as f64;
    let streak_start = (n - 10) as f64;
    assert_eq!((save_tick - streak_start) / config.control_freq, 0.5);

    assert_eq!(s.control(ControlCmd::SaveRequest).unwrap(), Phase::Saved);
    let out = dir.path().join("teleop.dfar");
    let (summary, report) = gather(&[tmp], "spec", &GatherConfig::new("t"), &out).unwrap();
    assert_eq!((summary.demos, report.accepted), (1, 1));
}

#[test]
fn reset_starts_a_new_episode_with_a_new_scene() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = TeleopSession::new(
        TaskKind::PlaceRedInGreen.spec(),
        TeleopConfig::default(),
        CameraConfig::with_size(40, 30),
        dir.path(),
        3,
    )
    .unwrap();
    s.control(ControlCmd::Reset).unwrap();
    let first = s.observation.object_poses.clone();
    drive(&mut s, 2000);
    assert_eq!(s.last_saved_episode(), Some(0));
    s.control(ControlCmd::Reset).unwrap();
    assert_eq!((s.state.phase, s.state.tick), (Phase::Running, 0));
    assert_ne!(s.observation.object_poses, first);
    drive(&mut s, 2000);
    assert_eq!(s.last_saved_episode(), Some(1));
    assert_eq!(load_episode(&s.tmp_dir(), 0).unwrap()[0].episode_id, 0);
}
