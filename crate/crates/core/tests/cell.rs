use std::collections::BTreeMap;

use serde_json::json;
use tokio::sync::mpsc::unbounded_channel;

use reconcell::assembler::{END_FAILURE, END_SUCCESS};
use reconcell::cell::{Cell, CellConfig, CellError, ModuleSpec};
use reconcell::model::{EventKind, Pose, Trajectory};
use reconcell::periphery::Brake;
use reconcell::registry::protocol::Frame;
use reconcell::registry::{Capability, ModuleDescriptor, ModuleKind, ModuleState, ParamsSchema, FAILED, SUCCEEDED};
use reconcell::robot::RobotMode;
use reconcell::scenario::Scenario;
use reconcell::skills::{SkillMeta, SkillPayload, SkillStore};
use reconcell::teach::{StickVector, Tape, TapeEntry};

fn demo_cell() -> Cell {
    Scenario::demo().bring_up(SkillStore::in_memory()).unwrap()
}

fn kinds(cell: &Cell, kind: EventKind) -> Vec<serde_json::Value> {
    cell.events().iter().filter(|e| e.kind == kind).map(|e| e.payload.clone()).collect()
}

fn wait_cmd(cell: &mut Cell, cmd: u64, seconds: f64) -> String {
    assert!(cell.step_until(seconds, |c| c.command_result(cmd).is_some()), "command {cmd} did not finish");
    cell.command_result(cmd).unwrap().outcome.clone()
}

fn run(cell: &mut Cell, name: &str) -> String {
    let id = cell.start_run(name).unwrap();
    assert!(cell.step_until(120.0, |c| c.run_finished(id)));
    cell.run_report(id).unwrap().final_outcome.clone().unwrap()
}

#[test]
fn bring_up_puts_modules_online() {
    let cell = demo_cell();
    let snap = cell.snapshot();
    assert_eq!(snap.len(), 4);
    assert!(snap.iter().all(|r| r.state == ModuleState::Online));
    let view = cell.module_view("r1").unwrap();
    assert_eq!(view["record"]["descriptor"]["name"], "r1");
    assert_eq!(view["state"]["mode"], "IDLE");
    assert!(matches!(cell.module_view("nope"), Err(CellError::Registry(_))));
}

#[test]
fn local_modules_keep_heartbeating() {
    let mut cell = demo_cell();
    cell.advance(10.0);
    assert!(cell.snapshot().iter().all(|r| r.state == ModuleState::Online));
    assert!(kinds(&cell, EventKind::Offline).is_empty());
}

#[test]
fn bad_commands_are_rejected_up_front() {
    let mut cell = demo_cell();
    let e = cell.command("r1", "fly", json!({})).unwrap_err();
    assert_eq!(e.code(), "UnknownVerb");
    let e = cell.command("r1", "equip_tool", json!({"tool_id": 3})).unwrap_err();
    assert_eq!(e.code(), "SchemaViolation");
    let e = cell.command("ghost", "get_state", json!({})).unwrap_err();
    assert_eq!(e.code(), "UnknownModule");
}

#[test]
fn equip_away_from_rack_fails_and_keeps_tool() {
    let mut cell = demo_cell();
    let cmd = cell.command("r1", "equip_tool", json!({"tool_id": "driver"})).unwrap();
    let res = cell.command_result(cmd).unwrap();
    assert_eq!(res.outcome, FAILED);
    assert_eq!(res.result["error"], "NotAtRack");
    assert_eq!(cell.rack("rack").unwrap().tool_count(), 1);
    assert_eq!(cell.tool_count(), 1);
}

#[test]
fn equip_and_unequip_at_rack() {
    let mut cell = demo_cell();
    let cmd = cell.command("r1", "run_skill", json!({"skill": "to_rack"})).unwrap();
    assert!(cell.command_result(cmd).is_none());
    assert_eq!(wait_cmd(&mut cell, cmd, 10.0), SUCCEEDED);
    let cmd = cell.command("r1", "equip_tool", json!({"tool_id": "driver"})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, SUCCEEDED);
    assert_eq!(cell.robot("r1").unwrap().tool().unwrap().tool_id, "driver");
    assert_eq!(cell.rack("rack").unwrap().tool_count(), 0);
    assert_eq!(cell.tool_count(), 1);
    assert_eq!(kinds(&cell, EventKind::ToolChanged).len(), 1);

    let again = cell.command("r1", "equip_tool", json!({"tool_id": "driver"})).unwrap();
    assert_eq!(cell.command_result(again).unwrap().outcome, FAILED);

    let cmd = cell.command("r1", "unequip_tool", json!({})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, SUCCEEDED);
    assert!(cell.robot("r1").unwrap().tool().is_none());
    assert_eq!(cell.rack("rack").unwrap().tool_count(), 1);
    assert_eq!(cell.tool_count(), 1);
}

#[test]
fn rack_take_and_put_conserve_tools() {
    let mut cell = demo_cell();
    let cmd = cell.command("rack", "take", json!({"tool_id": "driver"})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, SUCCEEDED);
    assert_eq!(cell.loose_tools().count(), 1);
    assert_eq!(cell.tool_count(), 1);
    let cmd = cell.command("rack", "put", json!({"tool_id": "driver", "slot": 0})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, SUCCEEDED);
    assert_eq!(cell.loose_tools().count(), 0);
    let cmd = cell.command("rack", "put", json!({"tool_id": "driver", "slot": 0})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, FAILED);
    assert_eq!(cell.tool_count(), 1);
}

#[test]
fn commands_queue_behind_motion() {
    let mut cell = demo_cell();
    let q = cell.robot("r1").unwrap().joints().to_vec();
    let mut q2 = q.clone();
    q2[0] += 0.3;
    let traj = Trajectory::joint(vec![(0.0, q.clone()), (1.0, q2.clone())]).unwrap();
    let a = cell.command("r1", "execute_trajectory", json!({"trajectory": traj})).unwrap();
    let b = cell.command("r1", "get_state", json!({})).unwrap();
    assert!(cell.command_result(a).is_none());
    assert!(cell.command_result(b).is_none());
    assert_eq!(wait_cmd(&mut cell, b, 5.0), SUCCEEDED);
    let done_a = cell.command_result(a).unwrap().finished_at;
    assert!((done_a - 1.0).abs() < 0.02, "{done_a}");
    assert_eq!(cell.robot("r1").unwrap().joints(), &q2[..]);
}

#[test]
fn jog_is_latest_wins() {
    let mut cell = demo_cell();
    let start = cell.robot("r1").unwrap().tcp_pose().position();
    let slow = StickVector { lin: [0.55, 0.0, 0.0], ang: [0.0; 3] };
    let fast = StickVector { lin: [0.0, 1.0, 0.0], ang: [0.0; 3] };
    cell.jog("r1", &slow).unwrap();
    let twist = cell.jog("r1", &fast).unwrap();
    assert_eq!(twist.linear, [0.0, 0.25, 0.0]);
    cell.step();
    assert_eq!(cell.robot("r1").unwrap().mode(), RobotMode::Velocity);
    for _ in 0..9 {
        cell.jog("r1", &fast).unwrap();
        cell.step();
    }
    let moved = cell.robot("r1").unwrap().tcp_pose().position() - start;
    assert!(moved.x.abs() < 1e-3, "{moved:?}");
    assert!((moved.y - 0.025).abs() < 2e-3, "{moved:?}");
    // zero input lets the controller idle out
    cell.jog("r1", &StickVector::default()).unwrap();
    cell.advance(1.0);
    assert_eq!(cell.robot("r1").unwrap().mode(), RobotMode::Idle);
}

#[test]
fn jog_rejected_during_trajectory_warns_once() {
    let mut cell = demo_cell();
    let cmd = cell.command("r1", "run_skill", json!({"skill": "to_rack"})).unwrap();
    let stick = StickVector { lin: [1.0, 0.0, 0.0], ang: [0.0; 3] };
    for _ in 0..5 {
        cell.jog("r1", &stick).unwrap();
        cell.step();
    }
    assert_eq!(kinds(&cell, EventKind::Warning).len(), 1);
    assert_eq!(wait_cmd(&mut cell, cmd, 10.0), SUCCEEDED);
}

#[test]
fn tape_records_both_guidance_modes() {
    let mut cell = demo_cell();
    let tape = Tape(vec![
        TapeEntry { t_s: 0.0, lin: [0.0, 0.0, 0.55], ..Default::default() },
        TapeEntry { t_s: 0.5, ..Default::default() },
        TapeEntry { t_s: 1.2, free_drag: Some(true), ..Default::default() },
        TapeEntry { t_s: 1.3, drag: Some(Pose::from_translation(0.01, 0.0, 0.0)), ..Default::default() },
        TapeEntry { t_s: 1.4, lin: [0.5, 0.0, 0.0], ..Default::default() },
        TapeEntry { t_s: 1.5, free_drag: Some(false), ..Default::default() },
        TapeEntry { t_s: 2.0, ..Default::default() },
    ]);
    let start = cell.robot("r1").unwrap().tcp_pose();
    let dragged = start.rotation_matrix() * nalgebra::Vector3::new(0.01, 0.0, 0.0);
    let session = cell.play_tape("r1", tape.clone(), Some(50.0)).unwrap().unwrap();
    assert!(cell.play_tape("r1", tape, None).is_err());
    assert!(cell.step_until(5.0, |c| !c.tape_active("r1")));
    let rec = cell.session(session).unwrap();
    assert_eq!(rec.sample_count(), 101);
    let moved = cell.robot("r1").unwrap().tcp_pose().position() - start.position();
    let expected = nalgebra::Vector3::new(0.0, 0.0, 0.0625) + dragged;
    assert!((moved - expected).norm() < 1e-3, "moved {moved:?}");
    // stick input while dragging is refused
    let warnings = kinds(&cell, EventKind::Warning);
    assert_eq!(warnings.len(), 1);
    assert_eq!(warnings[0]["t_s"], 1.4);
    let v = cell.teach_save(session, "lift").unwrap();
    assert_eq!(v, 1);
    assert_eq!(cell.skill("lift", None).unwrap().payload.as_trajectory().unwrap().len(), 101);
    assert_eq!(kinds(&cell, EventKind::SkillPut).last().unwrap()["name"], "lift");
}

#[test]
fn braked_table_ignores_the_robot() {
    let mut cell = demo_cell();
    assert_eq!(run(&mut cell, "teach_prep"), END_SUCCESS);
    // robot sits on the second handle; with the brake on nothing moves
    let angle = cell.table("table").unwrap().angle;
    let cmd = cell.command("r1", "run_skill", json!({"skill": "park"})).unwrap();
    wait_cmd(&mut cell, cmd, 10.0);
    assert_eq!(cell.table("table").unwrap().angle, angle);

    let rel = cell.command("table", "release_brake", json!({})).unwrap();
    assert_eq!(cell.command_result(rel).unwrap().outcome, SUCCEEDED);
    let again = cell.command("table", "release_brake", json!({})).unwrap();
    assert_eq!(cell.command_result(again).unwrap().result["error"], "AlreadyReleased");
    assert_eq!(cell.table("table").unwrap().brake, Brake::Released);
    let events = kinds(&cell, EventKind::BrakeChanged);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["brake"], "RELEASED");
}

#[test]
fn fixture_rides_on_table() {
    let mut cell = demo_cell();
    let cmd = cell.command("fixture", "clamp", json!({"part_id": "housing"})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().outcome, SUCCEEDED);
    let f = cell.fixture("fixture").unwrap();
    assert_eq!(f.held_part.as_deref(), Some("housing"));
    let p = f.part_pose().unwrap().position();
    assert!((p - nalgebra::Vector3::new(0.4, 0.0, 0.02)).norm() < 1e-12);
    let cmd = cell.command("fixture", "clamp", json!({})).unwrap();
    assert_eq!(cell.command_result(cmd).unwrap().result["error"], "AlreadyClamped");
}

#[test]
fn runs_need_a_valid_sequence_and_a_free_robot() {
    let mut cell = demo_cell();
    let src = r#"sequence lonely { state a: skill "nowhere" on r1; }"#;
    cell.compile_sequence(src, &BTreeMap::new()).unwrap();
    match cell.start_run("lonely") {
        Err(CellError::ValidationFailed { report, .. }) => assert!(!report.is_runnable()),
        other => panic!("{:?}", other.map(|_| ())),
    }
    let a = cell.start_run("teach_prep").unwrap();
    assert!(matches!(cell.start_run("teach_finish"), Err(CellError::RunConflict { run_id, .. }) if run_id == a));
    assert!(cell.step_until(60.0, |c| c.run_finished(a)));
    assert_eq!(cell.run_report(a).unwrap().final_outcome.as_deref(), Some(END_SUCCESS));
    assert_eq!(run(&mut cell, "teach_finish"), END_SUCCESS);
    assert!(matches!(cell.start_run("missing"), Err(CellError::UnknownSequence(_))));
}

#[test]
fn failing_state_takes_failure_branch() {
    let mut cell = demo_cell();
    let src = r#"sequence bad {
      state equip: cmd r1.equip_tool {"tool_id": "driver"};
      state after: wait 0.1;
    }"#;
    cell.compile_sequence(src, &BTreeMap::new()).unwrap();
    assert_eq!(run(&mut cell, "bad"), END_FAILURE);
    let report = cell.runs().next().unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].outcome.as_deref(), Some(FAILED));
}

#[test]
fn loaded_sequences_pin_their_skills() {
    let mut cell = demo_cell();
    let e = cell.delete_skill("to_rack").unwrap_err();
    assert_eq!(e.code(), "SkillInUse");
    cell.remove_sequence("teach_prep").unwrap();
    cell.remove_sequence("teach_finish").unwrap();
    cell.delete_skill("to_rack").unwrap();
    assert_eq!(kinds(&cell, EventKind::SkillDeleted).len(), 1);
}

#[test]
fn late_binding_uses_latest_version() {
    let mut cell = demo_cell();
    let q = cell.robot("r1").unwrap().joints().to_vec();
    let mut q2 = q.clone();
    q2[0] -= 0.2;
    let src = r#"sequence wiggle { state go: skill "wiggle" on r1; }"#;
    let put = |cell: &mut Cell, q2: &[f64]| {
        let t = Trajectory::joint(vec![(0.0, q.clone()), (0.5, q2.to_vec())]).unwrap();
        cell.put_skill("wiggle", SkillPayload::Trajectory(t), SkillMeta::default()).unwrap()
    };
    put(&mut cell, &q2);
    let hash = cell.compile_sequence(src, &BTreeMap::new()).unwrap().metadata.source_hash.clone();
    q2[0] -= 0.2;
    assert_eq!(put(&mut cell, &q2), 2);
    assert_eq!(cell.sequence("wiggle").unwrap().metadata.source_hash, hash);
    assert_eq!(run(&mut cell, "wiggle"), END_SUCCESS);
    let report = cell.runs().last().unwrap();
    assert_eq!(report.records[0].skill_version, Some(2));
    assert!((cell.robot("r1").unwrap().joints()[0] - q2[0]).abs() < 1e-12);
}

#[test]
fn remote_module_round_trip() {
    let mut cell = Cell::new(CellConfig::default(), SkillStore::in_memory()).unwrap();
    let (tx, mut rx) = unbounded_channel();
    let descriptor = ModuleDescriptor {
        name: "gripper".into(),
        kind: ModuleKind::Other,
        capabilities: vec![Capability::new("close", ParamsSchema::empty())],
        resources_required: Default::default(),
        mount_pose: Pose::identity(),
    };
    let id = cell.attach_remote(descriptor, tx).unwrap();
    assert_eq!(cell.registry().record(&id).unwrap().state, ModuleState::Attached);
    assert!(cell.command("gripper", "close", json!({})).is_err());
    assert!(cell.remote_frame(&id, Frame::Heartbeat { seq: 1 }).is_none());
    assert_eq!(cell.registry().record(&id).unwrap().state, ModuleState::Online);
    let a = cell.command("gripper", "close", json!({})).unwrap();
    let b = cell.command("gripper", "close", json!({})).unwrap();
    let Frame::Command { id: got, .. } = rx.try_recv().unwrap() else { panic!() };
    assert_eq!(got, a);
    assert!(rx.try_recv().is_err(), "second command waits for the first");
    let reply = cell.remote_frame(&id, Frame::Result { id: a, outcome: SUCCEEDED.into(), result: json!({}) });
    assert!(reply.is_none());
    let Frame::Command { id: got, .. } = rx.try_recv().unwrap() else { panic!() };
    assert_eq!(got, b);
    let stale = cell.remote_frame(&id, Frame::Heartbeat { seq: 1 });
    assert!(matches!(stale, Some(Frame::Error { .. })));

    // silence takes it offline after miss_limit periods
    cell.advance(1.6);
    assert_eq!(cell.registry().record(&id).unwrap().state, ModuleState::Offline);
    let offline = cell.events().iter().find(|e| e.kind == EventKind::Offline).unwrap();
    assert!((offline.sim_time - 1.5).abs() < 1e-9);
    cell.remote_gone(&id);
    assert!(cell.resolve("gripper").is_err());
}

#[test]
fn attaching_a_duplicate_name_fails() {
    let mut cell = demo_cell();
    let spec = ModuleSpec::Fixture { name: "fixture".into(), pose: Pose::identity(), on_table: None };
    assert_eq!(cell.attach_module(&spec, None).unwrap_err().code(), "NameConflict");
}

#[test]
fn same_calls_same_log() {
    let go = || {
        let mut cell = demo_cell();
        run(&mut cell, "teach_prep");
        cell.jog("r1", &StickVector { lin: [0.3, 0.0, 0.0], ang: [0.0; 3] }).unwrap();
        cell.advance(2.0);
        serde_json::to_string(cell.events()).unwrap()
    };
    assert_eq!(go(), go());
}
