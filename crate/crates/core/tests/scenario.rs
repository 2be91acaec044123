use std::path::PathBuf;

use reconcell::assembler::END_SUCCESS;
use reconcell::periphery::wrap_angle;
use reconcell::scenario::{run_headless, Scenario, ScenarioError};
use reconcell::skills::SkillStore;

fn demo_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.json")
}

/// Set RECONCELL_BLESS=1 to rewrite the checked-in file after changing the
/// generator.
#[test]
fn checked_in_demo_matches_generator() {
    let generated = Scenario::demo();
    let path = demo_path();
    if std::env::var_os("RECONCELL_BLESS").is_some() {
        std::fs::write(&path, generated.to_json() + "\n").unwrap();
    }
    let on_disk = Scenario::load(&path).unwrap();
    assert_eq!(on_disk.file, generated.file, "scenarios/demo.json is stale; rerun with RECONCELL_BLESS=1");
}

#[test]
fn demo_runs_to_success_and_repeats() {
    let scenario = Scenario::load(&demo_path()).unwrap();
    let (cell, a) = run_headless(&scenario, SkillStore::in_memory(), &mut |_| {}).unwrap();
    assert!(a.succeeded());
    assert_eq!(a.run.as_ref().unwrap().final_outcome.as_deref(), Some(END_SUCCESS));
    assert_eq!(a.taught, vec![("fasten".to_string(), 1)]);
    assert!(a.validation.as_ref().unwrap().is_runnable());
    let angle = cell.table("table").unwrap().angle;
    assert!(wrap_angle(angle).abs() < 1e-3, "table ended at {angle}");
    assert_eq!(cell.tool_count(), 1);
    assert!(cell.robot("r1").unwrap().tool().is_none());

    let (_, b) = run_headless(&scenario, SkillStore::in_memory(), &mut |_| {}).unwrap();
    assert_eq!(a.event_digest, b.event_digest);
    assert_eq!(a.event_count, b.event_count);
}

#[test]
fn persistent_store_keeps_taught_skill() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario::demo();
    run_headless(&scenario, SkillStore::open(dir.path()).unwrap(), &mut |_| {}).unwrap();
    let store = SkillStore::open(dir.path()).unwrap();
    assert_eq!(store.latest_version("fasten"), Some(1));
    assert_eq!(store.latest_version("turn_table"), Some(1));
}

#[test]
fn static_checks() {
    let mut s = Scenario::demo();
    s.file.modules.push(s.file.modules[0].clone());
    assert!(matches!(s.check(), Err(ScenarioError::Invalid(_))));

    let mut s = Scenario::demo();
    s.file.teach[0].robot = "r9".into();
    assert!(matches!(s.check(), Err(ScenarioError::Invalid(_))));

    let mut s = Scenario::demo();
    s.file.sequences[0].file = Some("x.seq".into());
    assert!(matches!(s.check(), Err(ScenarioError::Invalid(_))));

    let bad = r#"{"name":"x","modules":[],"extra":1}"#;
    assert!(matches!(Scenario::from_json(bad, None), Err(ScenarioError::Load { .. })));
}

#[test]
fn sequence_file_resolves_next_to_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::demo();
    let mut run = s.file.run.take().unwrap();
    std::fs::write(dir.path().join("main.seq"), run.sequence.source.take().unwrap()).unwrap();
    run.sequence.file = Some("main.seq".into());
    s.file.sequences.push(run.sequence);
    s.file.teach.clear();
    let path = dir.path().join("s.json");
    std::fs::write(&path, s.to_json()).unwrap();
    let loaded = Scenario::load(&path).unwrap();
    let cell = loaded.bring_up(SkillStore::in_memory()).unwrap();
    assert_eq!(cell.sequence_names().collect::<Vec<_>>(), vec!["demo_screw", "teach_finish", "teach_prep"]);
}

#[test]
fn failing_step_is_reported() {
    let mut s = Scenario::demo();
    s.file.sequences[0].source = Some(
        r#"sequence teach_prep {
  state to_rack: skill "to_rack" on r1;
  state equip: cmd r1.equip_tool {"tool_id": "missing"};
}"#
        .into(),
    );
    let Err(err) = run_headless(&s, SkillStore::in_memory(), &mut |_| {}) else { panic!("expected failure") };
    assert!(matches!(err, ScenarioError::RunFailed { ref outcome, .. } if outcome == "END_FAILURE"), "{err}");
}
