//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.
//!
//! Each check computes its expectation independently of the code under
//! test: finite differences for Jacobians, a fold over the event log for
//! the registry, hand-evaluated formula values for jog mapping and so on.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use reconcell::assembler::{build, render, Args, SequenceIr, END_FAILURE, END_SUCCESS};
use reconcell::cell::Cell;
use reconcell::model::{CellEvent, EventKind, Pose, Trajectory};
use reconcell::periphery::Brake;
use reconcell::registry::{
    Capability, HeartbeatPolicy, ModuleDescriptor, ModuleKind, ModuleState, ParamsSchema, Registry,
};
use reconcell::robot::{forward_kinematics, jacobian, solve_ik, ArmModel, ControlLimits, RobotSim};
use reconcell::scenario::{demo::MAIN_SEQUENCE, prepare, run_headless, run_to_end, Scenario};
use reconcell::skills::{SkillMeta, SkillPayload, SkillStore};
use reconcell::teach::{map_jog, JogConfig, StickVector, Tape, TapeEntry};

type Check = (&'static str, fn() -> Verdict);
/// Joint rows per visited state, in visit order.
type Segments = Vec<(String, Vec<Vec<f64>>)>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn main() {
    let checks: [Check; 8] = [
        ("kinematics", kinematics),
        ("registry fold oracle", registry_fold),
        ("pbd round trip", pbd_round_trip),
        ("jog mapping", jog_mapping),
        ("overwrite without recompile", overwrite_without_recompile),
        ("assembler", assembler_suite),
        ("rotary table trace", rotary_table_trace),
        ("headless demo", headless_demo),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let v = match std::panic::catch_unwind(check) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            }
        };
        if !v.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}

// ---- kinematics -----------------------------------------------------------

fn random_q(model: &ArmModel, rng: &mut impl Rng, margin: f64) -> Vec<f64> {
    model
        .joint_limits
        .iter()
        .map(|l| rng.random_range(l.min + margin..l.max - margin))
        .collect()
}

/// Rotation vector taking `b` to `a`, expressed in the base frame.
fn rotvec(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> Vector3<f64> {
    (a * b.inverse()).scaled_axis()
}

fn fd_error(model: &ArmModel, q: &[f64]) -> f64 {
    const H: f64 = 1e-6;
    let j = jacobian(model, q).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..q.len() {
        let (mut qp, mut qm) = (q.to_vec(), q.to_vec());
        qp[i] += H;
        qm[i] -= H;
        let (p, m) = (forward_kinematics(model, &qp).unwrap(), forward_kinematics(model, &qm).unwrap());
        let lin = (p.position() - m.position()) / (2.0 * H);
        let ang = rotvec(&p.orientation(), &m.orientation()) / (2.0 * H);
        for r in 0..3 {
            worst = worst.max((j[(r, i)] - lin[r]).abs()).max((j[(r + 3, i)] - ang[r]).abs());
        }
    }
    worst
}

fn kinematics() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let limits = ControlLimits::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for model in [ArmModel::desk6(), ArmModel::desk7()] {
        let mut worst_fd: f64 = 0.0;
        for _ in 0..1000 {
            // keep the finite-difference stencil inside the limits
            let q = random_q(&model, &mut rng, 1e-3);
            worst_fd = worst_fd.max(fd_error(&model, &q));
        }
        let (mut converged, mut worst_pose): (usize, f64) = (0, 0.0);
        for _ in 0..1000 {
            let q = random_q(&model, &mut rng, 0.2);
            let delta: Vec<f64> = (0..q.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
            let goal: Vec<f64> = q.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let target = forward_kinematics(&model, &goal).unwrap();
            let Ok(sol) = solve_ik(&model, &target, &q, &limits) else { continue };
            let reached = forward_kinematics(&model, &sol.q).unwrap();
            let dp = (reached.position() - target.position()).norm();
            let da = reached.orientation().angle_to(&target.orientation());
            let err = dp.max(da);
            if err < 1e-6 {
                converged += 1;
            }
            worst_pose = worst_pose.max(err);
        }
        let rate = converged as f64 / 1000.0;
        pass &= worst_fd < 1e-5 && rate >= 0.99;
        parts.push(format!(
            "{} jacobian max err {worst_fd:.2e}, ik converged {:.1}% (worst {worst_pose:.1e})",
            model.name,
            rate * 100.0
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    verdict(pass, format!("{}; {:.2} s", parts.join("; "), elapsed.as_secs_f64()))
}

// ---- registry -------------------------------------------------------------

fn descriptor(name: &str) -> ModuleDescriptor {
    ModuleDescriptor {
        name: name.into(),
        kind: ModuleKind::Other,
        capabilities: vec![Capability::new("noop", ParamsSchema::empty())],
        resources_required: Default::default(),
        mount_pose: Pose::identity(),
    }
}

/// Module table rebuilt purely from the event log.
#[derive(Default)]
struct Fold {
    records: BTreeMap<String, Value>,
    last_beat: BTreeMap<String, f64>,
    offline_errors: usize,
}

impl Fold {
    fn apply(&mut self, e: &CellEvent, timeout: f64) {
        let id = e.payload["module_id"].as_str().unwrap_or_default().to_string();
        match e.kind {
            EventKind::Attached => {
                self.records.insert(
                    id.clone(),
                    json!({
                        "module_id": id,
                        "descriptor": e.payload["descriptor"],
                        "state": "ATTACHED",
                        "last_heartbeat_seq": 0,
                        "attach_time": e.payload["attach_time"],
                    }),
                );
                self.last_beat.insert(id, e.sim_time);
            }
            EventKind::Online | EventKind::Heartbeat => {
                let r = self.records.get_mut(&id).expect("beat for a known module");
                r["state"] = json!("ONLINE");
                r["last_heartbeat_seq"] = e.payload["seq"].clone();
                self.last_beat.insert(id, e.sim_time);
            }
            EventKind::Offline => {
                self.records.get_mut(&id).expect("known module")["state"] = json!("OFFLINE");
                if e.sim_time != self.last_beat[&id] + timeout {
                    self.offline_errors += 1;
                }
            }
            EventKind::Detached => {
                self.records.remove(&id);
                self.last_beat.remove(&id);
            }
            _ => {}
        }
    }
}

enum Step {
    Attach(usize),
    Beat(usize, bool),
    Detach(usize),
    Advance(f64),
}

fn random_step(rng: &mut impl Rng) -> Step {
    match rng.random_range(0..10) {
        0..=1 => Step::Attach(rng.random_range(0..4)),
        2..=5 => Step::Beat(rng.random_range(0..4), rng.random_bool(0.1)),
        6 => Step::Detach(rng.random_range(0..4)),
        _ => Step::Advance(rng.random_range(1..40) as f64 * 0.05),
    }
}

const NAMES: [&str; 4] = ["gripper", "camera", "feeder", "press"];

fn registry_fold() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut steps, mut mismatches, mut offline_events, mut offline_errors) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..10_000 {
        let policy = HeartbeatPolicy {
            period: [0.1, 0.25, 0.5, 1.0][rng.random_range(0..4)],
            miss_limit: rng.random_range(1..=5),
        };
        let timeout = policy.period * policy.miss_limit as f64;
        let mut reg = Registry::new(policy).unwrap();
        let mut fold = Fold::default();
        let mut seqs: BTreeMap<String, u64> = BTreeMap::new();
        let mut folded = 0;
        let mut t = 0.0;
        for _ in 0..rng.random_range(5..30) {
            let id_of = |reg: &Registry, k: usize| reg.lookup(NAMES[k]).map(|r| r.module_id.clone());
            match random_step(&mut rng) {
                Step::Attach(k) => {
                    let _ = reg.attach(descriptor(NAMES[k]));
                }
                Step::Beat(k, stale) => {
                    if let Some(id) = id_of(&reg, k) {
                        let last = seqs.entry(id.0.clone()).or_insert(0);
                        let seq = if stale && *last > 0 { *last } else { *last + 1 };
                        if reg.heartbeat(&id, seq).is_ok() {
                            *last = seq;
                        }
                    }
                }
                Step::Detach(k) => {
                    if let Some(id) = id_of(&reg, k) {
                        reg.detach(&id).unwrap();
                        seqs.remove(&id.0);
                    }
                }
                Step::Advance(dt) => {
                    t += dt;
                    reg.advance_to(t);
                }
            }
            for e in &reg.events()[folded..] {
                if e.kind == EventKind::Offline {
                    offline_events += 1;
                }
                fold.apply(e, timeout);
            }
            folded = reg.events().len();
            steps += 1;
            let snapshot: Vec<Value> = reg.snapshot().iter().map(|r| serde_json::to_value(r).unwrap()).collect();
            let expected: Vec<Value> = fold.records.values().cloned().collect();
            if snapshot != expected {
                mismatches += 1;
            }
        }
        offline_errors += fold.offline_errors;
    }

    // fine clock: the tick at which OFFLINE is first observed
    let mut timing_errors = Vec::new();
    let dt = 0.01;
    for (period, miss_limit) in [(0.5, 3), (0.1, 1), (0.25, 4), (1.0, 2), (0.2, 5)] {
        let policy = HeartbeatPolicy { period, miss_limit };
        let mut reg = Registry::new(policy).unwrap();
        let id = reg.attach(descriptor("probe")).unwrap();
        let beat_tick = 37u64;
        let mut tick = 0u64;
        let mut seen = None;
        while tick < 2000 && seen.is_none() {
            tick += 1;
            reg.advance_to(tick as f64 * dt);
            if tick == beat_tick {
                reg.heartbeat(&id, 1).unwrap();
            }
            if reg.record(&id).unwrap().state == ModuleState::Offline {
                seen = Some(tick);
            }
        }
        let expected = beat_tick + (period * miss_limit as f64 / dt).round() as u64;
        let stamp = reg.events().iter().find(|e| e.kind == EventKind::Offline).map(|e| e.sim_time);
        let want_stamp = beat_tick as f64 * dt + period * miss_limit as f64;
        if seen != Some(expected) || stamp.is_none_or(|s| (s - want_stamp).abs() > 1e-9) {
            timing_errors.push(format!("{period}x{miss_limit}: seen {seen:?} want {expected}"));
        }
    }

    let pass = mismatches == 0 && offline_errors == 0 && offline_events > 0 && timing_errors.is_empty();
    verdict(
        pass,
        format!(
            "10000 scripts, {steps} steps, {mismatches} snapshot mismatches, {offline_events} OFFLINE events ({offline_errors} off deadline), fine-clock timing {}",
            if timing_errors.is_empty() { "exact".to_string() } else { timing_errors.join(", ") }
        ),
    )
}

// ---- programming by demonstration ----------------------------------------

fn pbd_round_trip() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario::demo();
    let mut cell = scenario.bring_up(SkillStore::open(dir.path()).unwrap()).unwrap();
    let entry = |t_s: f64, lin: [f64; 3], ang: [f64; 3]| TapeEntry { t_s, lin, ang, ..Default::default() };
    let tape = Tape(vec![
        entry(0.0, [0.0, 0.0, 0.55], [0.0; 3]),
        entry(0.8, [0.6, -0.3, 0.0], [0.0; 3]),
        entry(1.5, [0.0, 0.0, 0.0], [0.0, 0.0, 0.7]),
        entry(2.1, [-0.4, 0.0, -0.5], [0.0; 3]),
        entry(3.0, [0.0; 3], [0.0; 3]),
    ]);
    let session = cell.play_tape("r1", tape, Some(50.0)).unwrap().unwrap();
    let mut budget = 1000;
    while cell.tape_active("r1") && budget > 0 {
        cell.step();
        budget -= 1;
    }
    let recorded = cell.session(session).unwrap();
    let original = recorded.trajectory().unwrap();
    let tcp_trace = recorded.tcp_trace().to_vec();
    let version = cell.teach_save(session, "pbd_probe").unwrap();
    let model = cell.robot("r1").unwrap().model().clone();
    let limits = *cell.robot("r1").unwrap().limits();
    let dt = cell.config().dt;
    drop(cell);

    // a fresh store instance reads the skill back from disk
    let store = SkillStore::open(dir.path()).unwrap();
    let stored = store.get("pbd_probe", Some(version)).unwrap();
    let traj = stored.payload.as_trajectory().unwrap().clone();
    let bits = |t: &Trajectory| -> Vec<u64> {
        t.joint_rows()
            .unwrap()
            .iter()
            .flat_map(|(time, q)| std::iter::once(time.to_bits()).chain(q.iter().map(|x| x.to_bits())))
            .collect()
    };
    let bitwise = bits(&traj) == bits(&original);
    let samples = traj.len();

    let rows = traj.joint_rows().unwrap();
    let mut sim = RobotSim::new(model, limits, rows[0].1.to_vec()).unwrap();
    sim.execute_trajectory(&traj, &Pose::identity()).unwrap();
    let per_sample = (1.0 / (50.0 * dt)).round() as usize;
    let mut worst: f64 = 0.0;
    for (k, want) in tcp_trace.iter().enumerate() {
        if k > 0 {
            for _ in 0..per_sample {
                sim.step(dt);
            }
        }
        let (dp, da) = sim.tcp_pose().distance(want);
        worst = worst.max(dp).max(da);
    }
    let pass = bitwise && samples == tcp_trace.len() && samples > 100 && worst < 1e-6;
    verdict(
        pass,
        format!(
            "{samples} samples at 50 Hz, joints bitwise equal through the store: {bitwise}, replay tcp max err {worst:.2e}"
        ),
    )
}

// ---- jog mapping ----------------------------------------------------------

fn jog_mapping() -> Verdict {
    // (deadband, gamma, expected normalized magnitude at |s| = 0.55)
    let configs: [(f64, f64, f64); 3] = [(0.10, 1.0, 0.5), (0.0, 2.0, 0.3025), (0.25, 3.0, 0.064)];
    let mut errors = Vec::new();
    let mut checked = 0;
    for (deadband, gamma, at_055) in configs {
        let cfg = JogConfig {
            deadband,
            gamma,
            ..JogConfig::default()
        };
        let expect = |s: f64| -> f64 {
            match s {
                s if s == 0.0 || s.abs() == deadband => 0.0,
                s if s.abs() == 0.55 => at_055.copysign(s),
                s if s.abs() == 1.0 => s,
                _ => unreachable!(),
            }
        };
        for s in [0.0, deadband, -deadband, 0.55, -0.55, 1.0, -1.0] {
            let stick = StickVector {
                lin: [s, 0.0, 0.0],
                ang: [0.0, 0.0, s],
            };
            let twist = map_jog(&stick, &cfg).unwrap();
            let (lin, ang) = (twist.linear[0], twist.angular[2]);
            let (want_lin, want_ang) = (expect(s) * cfg.v_max_linear, expect(s) * cfg.v_max_angular);
            if (lin - want_lin).abs() > 1e-12 || (ang - want_ang).abs() > 1e-12 {
                errors.push(format!("d={deadband} g={gamma} s={s}: {lin} vs {want_lin}"));
            }
            checked += 1;
        }
        // (i - 500) / 500 negates exactly, so the grid is symmetric bit for bit
        let grid: Vec<f64> = (0..=1000).map(|i| (i as f64 - 500.0) / 500.0).collect();
        let v: Vec<f64> = grid
            .iter()
            .map(|&s| map_jog(&StickVector { lin: [s, 0.0, 0.0], ang: [0.0; 3] }, &cfg).unwrap().linear[0])
            .collect();
        for (i, &s) in grid.iter().enumerate() {
            let neg = v[1000 - i];
            if v[i] != -neg {
                errors.push(format!("d={deadband} g={gamma}: not odd at s={s}"));
            }
        }
        if v.windows(2).any(|w| w[1] < w[0]) {
            errors.push(format!("d={deadband} g={gamma}: not monotone"));
        }
    }
    if (JogConfig::default().axis(0.55, 0.25) - 0.125).abs() > 1e-12 {
        errors.push("default config at s=0.55 is not 0.125".into());
    }
    verdict(
        errors.is_empty(),
        if errors.is_empty() {
            format!("{checked} pointwise values, odd and monotone on 1001-point grids for 3 configs")
        } else {
            errors.join("; ")
        },
    )
}

// ---- overwrite without recompile -------------------------------------------

fn out_and_back(q: &[f64], joint: usize, by: f64) -> SkillPayload {
    let mut mid = q.to_vec();
    mid[joint] += by;
    SkillPayload::Trajectory(Trajectory::joint(vec![(0.0, q.to_vec()), (0.6, mid), (1.2, q.to_vec())]).unwrap())
}

fn traced_run(cell: &mut Cell, name: &str) -> (Segments, Option<String>) {
    let run = cell.start_run(name).unwrap();
    let mut segments: Segments = Vec::new();
    let mut budget = 2000;
    while !cell.run_finished(run) && budget > 0 {
        budget -= 1;
        cell.step();
        let report = cell.run_report(run).unwrap();
        let Some(current) = report.records.last() else { continue };
        let q = cell.robot("r1").unwrap().joints().to_vec();
        match segments.last_mut() {
            Some((id, rows)) if *id == current.state => rows.push(q),
            _ => segments.push((current.state.clone(), vec![q])),
        }
    }
    (segments, cell.run_report(run).unwrap().final_outcome.clone())
}

fn overwrite_without_recompile() -> Verdict {
    let mut cell = Scenario::demo().bring_up(SkillStore::in_memory()).unwrap();
    let q = cell.robot("r1").unwrap().joints().to_vec();
    cell.put_skill("steady", out_and_back(&q, 2, 0.15), SkillMeta::default()).unwrap();
    cell.put_skill("wiggle", out_and_back(&q, 0, 0.2), SkillMeta::default()).unwrap();
    let src = r#"sequence overwrite {
      state before: skill "steady" on r1;
      state changed: skill "wiggle" on r1;
      state after: skill "steady" on r1;
    }"#;
    let hash = cell.compile_sequence(src, &BTreeMap::new()).unwrap().metadata.source_hash.clone();
    let (first, end1) = traced_run(&mut cell, "overwrite");
    // same name, joint 0 swings the other way
    cell.put_skill("wiggle", out_and_back(&q, 0, -0.3), SkillMeta::default()).unwrap();
    let (second, end2) = traced_run(&mut cell, "overwrite");
    let hash_after = cell.sequence("overwrite").unwrap().metadata.source_hash.clone();

    let mut problems = Vec::new();
    if end1.as_deref() != Some(END_SUCCESS) || end2.as_deref() != Some(END_SUCCESS) {
        problems.push(format!("runs ended {end1:?} / {end2:?}"));
    }
    if hash != hash_after {
        problems.push("source hash changed".into());
    }
    let ids = |s: &[(String, Vec<Vec<f64>>)]| s.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    if ids(&first) != ids(&second) {
        problems.push(format!("state order {:?} vs {:?}", ids(&first), ids(&second)));
    }
    let mut differing_rows = 0;
    for ((id, a), (_, b)) in first.iter().zip(&second) {
        let bits = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j].to_bits()).collect::<Vec<_>>();
        if a.len() != b.len() {
            problems.push(format!("{id}: {} vs {} ticks", a.len(), b.len()));
            continue;
        }
        for j in 0..q.len() {
            let differs = bits(a, j) != bits(b, j);
            let should = id == "changed" && j == 0;
            if differs != should {
                problems.push(format!("{id} joint {j}: differs={differs}"));
            }
        }
        if id == "changed" {
            differing_rows = a.iter().zip(b).filter(|(x, y)| x[0] != y[0]).count();
        }
    }
    let pass = problems.is_empty() && differing_rows > 0;
    verdict(
        pass,
        if problems.is_empty() {
            format!("traces differ only in the overwritten skill's state ({differing_rows} ticks, joint 0), source hash unchanged")
        } else {
            problems.join("; ")
        },
    )
}

// ---- assembler --------------------------------------------------------------

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "seq"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

/// Every state covers SUCCEEDED and FAILED with a known target and every
/// state is reachable from the entry.
fn total_and_reachable(ir: &SequenceIr) -> bool {
    let ids: BTreeSet<&str> = ir.states.iter().map(|s| s.id.as_str()).collect();
    let known = |t: &str| t == END_SUCCESS || t == END_FAILURE || ids.contains(t);
    let total = ir.states.iter().all(|s| {
        ["SUCCEEDED", "FAILED"].iter().all(|o| s.transitions.contains_key(*o)) && s.transitions.values().all(|t| known(t))
    });
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([ir.entry.clone()]);
    while let Some(id) = queue.pop_front() {
        if !ids.contains(id.as_str()) || !seen.insert(id.clone()) {
            continue;
        }
        queue.extend(ir.states.iter().find(|s| s.id == id).unwrap().transitions.values().cloned());
    }
    total && seen.len() == ids.len()
}

fn demo_expansion_ok() -> bool {
    let ir = build(MAIN_SEQUENCE, &Args::new()).unwrap();
    let mut want: Vec<String> = ["clamp", "to_rack", "equip", "to_handle"].map(String::from).to_vec();
    for i in 1..=3 {
        want.extend(["release", "turn", "engage", "fasten"].map(|s| format!("{s}_{i}")));
    }
    want.extend(["park", "unequip", "home", "unclamp"].map(String::from));
    let got: Vec<String> = ir.states.iter().map(|s| s.id.clone()).collect();
    let chained = ir.states.windows(2).all(|w| w[0].transitions["SUCCEEDED"] == w[1].id)
        && ir.states.last().unwrap().transitions["SUCCEEDED"] == END_SUCCESS
        && ir.states.iter().all(|s| s.transitions["FAILED"] == END_FAILURE);
    let turns = got.iter().filter(|id| id.starts_with("turn_")).count();
    got == want && chained && turns == 3 && ir.entry == "clamp"
}

fn assembler_suite() -> Verdict {
    let files = corpus();
    let mut problems = Vec::new();
    for (name, src) in &files {
        let ir = match build(src, &Args::new()) {
            Ok(ir) => ir,
            Err(e) => {
                problems.push(format!("{name}: {e}"));
                continue;
            }
        };
        let listing = render(&ir, "listing").unwrap();
        match build(&listing, &Args::new()) {
            Ok(back) if back.same_structure(&ir) => {}
            Ok(_) => problems.push(format!("{name}: listing compiles to a different machine")),
            Err(e) => problems.push(format!("{name}: listing does not parse: {e}")),
        }
        if ir.check().is_err() || !total_and_reachable(&ir) {
            problems.push(format!("{name}: totality or reachability"));
        }
    }
    let expansion = demo_expansion_ok();
    if !expansion {
        problems.push("fastening loop expansion".into());
    }

    // the corpus copy of the demo run twice from the same starting point
    let demo_src = &files.iter().find(|(n, _)| n.contains("demo_shape")).expect("demo in corpus").1;
    let logs: Vec<Vec<CellEvent>> = (0..2)
        .map(|_| {
            let scenario = Scenario::demo();
            let mut p = prepare(&scenario, SkillStore::in_memory(), &mut |_| {}).unwrap();
            let ir = build(demo_src, &Args::new()).unwrap();
            p.cell.load_ir(ir).unwrap();
            let from = p.cell.events().len();
            let report = run_to_end(&mut p.cell, "demo_screw", 600.0, &mut |_| {}).unwrap();
            assert_eq!(report.final_outcome.as_deref(), Some(END_SUCCESS));
            p.cell.events()[from..].to_vec()
        })
        .collect();
    let deterministic = logs[0] == logs[1];
    if !deterministic {
        problems.push("re-execution logs differ".into());
    }
    let pass = problems.is_empty() && files.len() >= 20;
    verdict(
        pass,
        if problems.is_empty() {
            format!(
                "{} corpus sequences round trip through the listing, all total and reachable, 3-sided expansion ok, re-execution identical ({} events)",
                files.len(),
                logs[0].len()
            )
        } else {
            problems.join("; ")
        },
    )
}

// ---- rotary table -----------------------------------------------------------

fn wrapped(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > std::f64::consts::PI {
        y - TAU
    } else {
        y
    }
}

fn rotary_table_trace() -> Verdict {
    let scenario = Scenario::demo();
    let mut p = prepare(&scenario, SkillStore::in_memory(), &mut |_| {}).unwrap();
    let name = p.run_sequence.clone().expect("demo has a run sequence");
    let t0 = p.cell.table("table").unwrap().clone();
    let from = p.cell.events().len();
    let mut prev = t0.clone();
    let (mut moved_while_braked, mut transitions, mut stored_mismatch) = (0, 0, 0);
    let mut travelled = 0.0;
    let report = run_to_end(&mut p.cell, &name, 600.0, &mut |cell: &Cell| {
        let t = cell.table("table").unwrap();
        // coupling runs before commands within a tick, so a move in this
        // tick is governed by the brake as it was at the end of the last
        if t.angle != prev.angle {
            travelled += wrapped(t.angle - prev.angle);
            if prev.brake != Brake::Released {
                moved_while_braked += 1;
            }
        }
        if t.brake != prev.brake {
            transitions += 1;
            if t.stored_angle != t.angle {
                stored_mismatch += 1;
            }
        }
        prev = t.clone();
    })
    .unwrap();
    let events: Vec<&CellEvent> = p.cell.events()[from..].iter().filter(|e| e.kind == EventKind::BrakeChanged).collect();
    let event_mismatch = events.iter().filter(|e| e.payload["stored_angle"] != e.payload["angle"]).count();
    let end = p.cell.table("table").unwrap();
    let want = wrapped(t0.angle + 3.0 * (TAU / 3.0));
    let final_err = wrapped(end.angle - want).abs();
    let pass = report.final_outcome.as_deref() == Some(END_SUCCESS)
        && moved_while_braked == 0
        && transitions == 6
        && events.len() == 6
        && stored_mismatch == 0
        && event_mismatch == 0
        && final_err < 1e-3
        && (travelled - TAU).abs() < 1e-2;
    verdict(
        pass,
        format!(
            "{transitions} brake transitions, {moved_while_braked} moves while engaged, {} stored_angle mismatches, turned {travelled:.4} rad, final error {final_err:.2e} rad",
            stored_mismatch + event_mismatch
        ),
    )
}

// ---- headless demo ----------------------------------------------------------

fn headless_demo() -> Verdict {
    let scenario = Scenario::demo();
    let start = Instant::now();
    let mut digests = Vec::new();
    let mut detail = String::new();
    let mut ok = true;
    for _ in 0..2 {
        let begun = Instant::now();
        let (_, report) = run_headless(&scenario, SkillStore::in_memory(), &mut |_| {}).unwrap();
        let wall = begun.elapsed();
        let runnable = report.validation.as_ref().is_some_and(|v| v.is_runnable());
        ok &= report.succeeded() && runnable && !report.taught.is_empty() && wall < Duration::from_secs(30);
        detail = format!(
            "taught {:?}, validated, {} at sim {:.2} s, {} events, {:.2} s wall",
            report.taught.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
            report.run.as_ref().and_then(|r| r.final_outcome.clone()).unwrap_or_default(),
            report.sim_time,
            report.event_count,
            wall.as_secs_f64()
        );
        digests.push(report.event_digest);
    }
    let same = digests[0] == digests[1];
    verdict(
        ok && same,
        format!("{detail}; logs identical across runs: {same} ({:.2} s for both)", start.elapsed().as_secs_f64()),
    )
}
