//! Verb handlers for the simulated modules.

use serde_json::{json, Value};

use super::{Cell, Device, Member};
use crate::model::{EventKind, Pose, Trajectory, Twist};
use crate::periphery::PeripheryError;
use crate::registry::{Command, ModuleId, FAILED, SUCCEEDED};
use crate::robot::RobotError;

pub(super) enum Exec {
    Done(String, Value),
    /// Finishes on a later tick.
    Started,
}

fn ok(result: Value) -> Exec {
    Exec::Done(SUCCEEDED.to_string(), result)
}

fn fail(code: &str, detail: impl ToString) -> Exec {
    Exec::Done(FAILED.to_string(), json!({"error": code, "detail": detail.to_string()}))
}

fn robot_fail(e: RobotError) -> Exec {
    fail(e.code(), e)
}

fn periphery_fail(e: PeripheryError) -> Exec {
    fail(e.code(), e)
}

fn str_param<'a>(params: &'a Value, key: &str) -> Option<&'a str> {
    params.get(key).and_then(Value::as_str)
}

fn vec3(v: Option<&Value>) -> Option<[f64; 3]> {
    let a = v?.as_array()?;
    if a.len() != 3 {
        return None;
    }
    Some([a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?])
}

enum Kind {
    Robot,
    Table,
    Rack,
    Fixture,
}

impl Cell {
    pub(super) fn execute(&mut self, id: &ModuleId, cmd: &Command) -> Exec {
        let kind = match self.members.get(id).map(|m| &m.device) {
            Some(Device::Robot(_)) => Kind::Robot,
            Some(Device::Table(_)) => Kind::Table,
            Some(Device::Rack(_)) => Kind::Rack,
            Some(Device::Fixture(_)) => Kind::Fixture,
            _ => return fail("UnknownModule", format!("{id} is not simulated here")),
        };
        match kind {
            Kind::Robot => self.exec_robot(id, cmd),
            Kind::Table => self.exec_table(id, cmd),
            Kind::Rack => self.exec_rack(id, cmd),
            Kind::Fixture => self.exec_fixture(id, cmd),
        }
    }

    fn frame_pose(&self, id: &ModuleId, frame: Option<&str>) -> Result<Pose, String> {
        match frame {
            None | Some("world") | Some("cell") | Some("cell_root") => Ok(Pose::identity()),
            Some("base") => Ok(self.robot(&id.0).map(|r| r.model().base_pose).unwrap_or_default()),
            Some(name) => self
                .registry
                .lookup(name)
                .map(|r| r.descriptor.mount_pose)
                .ok_or_else(|| format!("unknown frame '{name}'")),
        }
    }

    fn start_motion(&mut self, id: &ModuleId, cmd: &Command, traj: &Trajectory) -> Exec {
        let frame = match self.frame_pose(id, traj.frame()) {
            Ok(f) => f,
            Err(e) => return fail("UnknownFrame", e),
        };
        let robot = self.robot_mut(id).expect("dispatched to a robot");
        match robot.sim.execute_trajectory(traj, &frame) {
            Ok(()) => {
                robot.motion = Some(cmd.id);
                Exec::Started
            }
            Err(e) => robot_fail(e),
        }
    }

    fn exec_robot(&mut self, id: &ModuleId, cmd: &Command) -> Exec {
        let p = &cmd.params;
        match cmd.verb.as_str() {
            super::VERB_RUN_SKILL => {
                let name = str_param(p, "skill").unwrap_or_default();
                let version = p.get("version").and_then(Value::as_u64).map(|v| v as u32);
                let traj = match self.store.get(name, version) {
                    Ok(entry) => match entry.payload.as_trajectory() {
                        Some(t) => t.clone(),
                        None => return fail("KindMismatch", format!("skill '{name}' is not a trajectory")),
                    },
                    Err(e) => return fail(e.code(), e),
                };
                self.start_motion(id, cmd, &traj)
            }
            "execute_trajectory" => match serde_json::from_value::<Trajectory>(p["trajectory"].clone()) {
                Ok(traj) => self.start_motion(id, cmd, &traj),
                Err(e) => fail("InvalidTrajectory", e),
            },
            "set_velocity" => {
                let twist = match (vec3(p.get("lin")), vec3(p.get("ang"))) {
                    (Some(l), Some(a)) => Twist::new(l, a),
                    _ => return fail("InvalidRequest", "lin and ang must be 3-vectors"),
                };
                let Ok(twist) = twist else {
                    return fail("InvalidRequest", "twist components must be finite");
                };
                let robot = self.robot_mut(id).expect("dispatched to a robot");
                match robot.sim.set_cartesian_velocity(twist) {
                    Ok(()) => ok(json!({})),
                    Err(e) => robot_fail(e),
                }
            }
            "free_drag_enter" | "free_drag_exit" => {
                let robot = self.robot_mut(id).expect("dispatched to a robot");
                let r = if cmd.verb == "free_drag_enter" {
                    robot.sim.enter_free_drag()
                } else {
                    robot.sim.exit_free_drag()
                };
                match r {
                    Ok(()) => ok(json!({"mode": robot.sim.mode()})),
                    Err(e) => robot_fail(e),
                }
            }
            "apply_drag" => {
                let delta: Pose = match serde_json::from_value(p["delta"].clone()) {
                    Ok(d) => d,
                    Err(e) => return fail("InvalidPose", e),
                };
                let robot = self.robot_mut(id).expect("dispatched to a robot");
                match robot.sim.apply_drag(&delta) {
                    Ok(()) => ok(json!({"tcp_pose": robot.sim.tcp_pose()})),
                    Err(e) => robot_fail(e),
                }
            }
            "equip_tool" => self.equip(id, str_param(p, "tool_id").unwrap_or_default(), str_param(p, "rack")),
            "unequip_tool" => {
                let slot = p.get("slot").and_then(Value::as_u64).map(|s| s as usize);
                self.unequip(id, str_param(p, "rack"), slot)
            }
            "get_state" => ok(serde_json::to_value(self.robot(&id.0).expect("robot").state()).expect("serializes")),
            other => fail("UnknownVerb", other),
        }
    }

    /// Racks to search: the named one, or every simulated rack.
    fn racks(&self, rack: Option<&str>) -> Result<Vec<ModuleId>, Exec> {
        match rack {
            Some(name) => {
                let Some(rid) = self.registry.resolve(name) else {
                    return Err(fail("UnknownModule", format!("no rack '{name}'")));
                };
                match self.members.get(&rid).map(|m| &m.device) {
                    Some(Device::Rack(_)) => Ok(vec![rid]),
                    _ => Err(fail("KindMismatch", format!("'{name}' is not a tool rack"))),
                }
            }
            None => Ok(self
                .members
                .iter()
                .filter(|(_, m)| matches!(m.device, Device::Rack(_)))
                .map(|(id, _)| id.clone())
                .collect()),
        }
    }

    fn rack_at(&mut self, id: &ModuleId) -> &mut crate::periphery::ToolRack {
        match self.members.get_mut(id).map(|m| &mut m.device) {
            Some(Device::Rack(r)) => r,
            _ => unreachable!("rack ids come from Cell::racks"),
        }
    }

    fn equip(&mut self, id: &ModuleId, tool_id: &str, rack: Option<&str>) -> Exec {
        let racks = match self.racks(rack) {
            Ok(r) => r,
            Err(e) => return e,
        };
        let found = racks.iter().find_map(|rid| {
            let Some(Member {
                device: Device::Rack(r),
                ..
            }) = self.members.get(rid)
            else {
                return None;
            };
            let slot = r.find(tool_id)?;
            Some((rid.clone(), slot, r.slots[slot].clone()))
        });
        let Some((rid, slot, rack_slot)) = found else {
            return periphery_fail(PeripheryError::UnknownTool(tool_id.to_string()));
        };
        let tool = rack_slot.occupant.expect("found by tool id");
        let robot = self.robot_mut(id).expect("dispatched to a robot");
        if let Err(e) = robot.sim.equip_tool(tool.clone(), &rack_slot.slot_pose) {
            return robot_fail(e);
        }
        self.rack_at(&rid).take_slot(slot).expect("slot checked above");
        self.registry.emit(
            id.0.clone(),
            EventKind::ToolChanged,
            json!({"module_id": id, "tool_id": tool_id, "equipped": true, "rack": rid, "slot": slot}),
        );
        self.registry.emit(
            rid.0.clone(),
            EventKind::RackChanged,
            json!({"module_id": rid, "slot": slot, "occupant": null}),
        );
        ok(json!({"tool_id": tool_id, "rack": rid, "slot": slot}))
    }

    fn unequip(&mut self, id: &ModuleId, rack: Option<&str>, slot: Option<usize>) -> Exec {
        let racks = match self.racks(rack) {
            Ok(r) => r,
            Err(e) => return e,
        };
        let sim = self.robot(&id.0).expect("dispatched to a robot");
        let Some(tool_id) = sim.tool().map(|t| t.tool_id.clone()) else {
            return robot_fail(RobotError::NoToolEquipped);
        };
        let mut first_err = None;
        let mut target = None;
        'search: for rid in &racks {
            let Some(Device::Rack(r)) = self.members.get(rid).map(|m| &m.device) else { continue };
            let candidates: Vec<usize> = match slot {
                Some(s) => vec![s],
                None => (0..r.slots.len()).filter(|i| r.slots[*i].occupant.is_none()).collect(),
            };
            for s in candidates {
                let check = r
                    .check_put(&tool_id, s)
                    .map_err(periphery_fail)
                    .and_then(|_| sim.check_unequip(&r.slots[s].slot_pose).map_err(robot_fail));
                match check {
                    Ok(()) => {
                        target = Some((rid.clone(), s, r.slots[s].slot_pose));
                        break 'search;
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
        }
        let Some((rid, s, pose)) = target else {
            return first_err.unwrap_or_else(|| fail("NotAtRack", "no free rack slot at the flange"));
        };
        let robot = self.robot_mut(id).expect("dispatched to a robot");
        let tool = robot.sim.unequip_tool(&pose).expect("checked above");
        self.rack_at(&rid).put(tool, s).expect("checked above");
        self.registry.emit(
            id.0.clone(),
            EventKind::ToolChanged,
            json!({"module_id": id, "tool_id": tool_id, "equipped": false, "rack": rid, "slot": s}),
        );
        self.registry.emit(
            rid.0.clone(),
            EventKind::RackChanged,
            json!({"module_id": rid, "slot": s, "occupant": tool_id}),
        );
        ok(json!({"tool_id": tool_id, "rack": rid, "slot": s}))
    }

    fn exec_table(&mut self, id: &ModuleId, cmd: &Command) -> Exec {
        let Some(Device::Table(t)) = self.members.get_mut(id).map(|m| &mut m.device) else {
            unreachable!("dispatched to a table")
        };
        let r = match cmd.verb.as_str() {
            "release_brake" => t.release_brake(),
            "engage_brake" => t.engage_brake(),
            "get_state" => return ok(serde_json::to_value(&*t).expect("serializes")),
            other => return fail("UnknownVerb", other),
        };
        if let Err(e) = r {
            return periphery_fail(e);
        }
        let state = json!({"module_id": id, "brake": t.brake, "angle": t.angle, "stored_angle": t.stored_angle});
        self.registry.emit(id.0.clone(), EventKind::BrakeChanged, state.clone());
        ok(state)
    }

    fn exec_rack(&mut self, id: &ModuleId, cmd: &Command) -> Exec {
        let p = &cmd.params;
        match cmd.verb.as_str() {
            "take" => {
                let tool_id = str_param(p, "tool_id").unwrap_or_default();
                match self.rack_at(id).take(tool_id) {
                    Ok((slot, tool)) => {
                        self.loose_tools.insert(tool.tool_id.clone(), tool);
                        self.registry.emit(
                            id.0.clone(),
                            EventKind::RackChanged,
                            json!({"module_id": id, "slot": slot, "occupant": null}),
                        );
                        ok(json!({"tool_id": tool_id, "slot": slot}))
                    }
                    Err(e) => periphery_fail(e),
                }
            }
            "put" => {
                let tool_id = str_param(p, "tool_id").unwrap_or_default().to_string();
                let slot = p.get("slot").and_then(Value::as_u64).unwrap_or(u64::MAX) as usize;
                if !self.loose_tools.contains_key(&tool_id) {
                    return periphery_fail(PeripheryError::UnknownTool(tool_id));
                }
                if let Err(e) = self.rack_at(id).check_put(&tool_id, slot) {
                    return periphery_fail(e);
                }
                let tool = self.loose_tools.remove(&tool_id).expect("checked");
                self.rack_at(id).put(tool, slot).expect("checked");
                self.registry.emit(
                    id.0.clone(),
                    EventKind::RackChanged,
                    json!({"module_id": id, "slot": slot, "occupant": tool_id}),
                );
                ok(json!({"tool_id": tool_id, "slot": slot}))
            }
            "list_slots" => ok(json!({"slots": self.rack_at(id).slots.clone()})),
            other => fail("UnknownVerb", other),
        }
    }

    fn exec_fixture(&mut self, id: &ModuleId, cmd: &Command) -> Exec {
        let Some(Device::Fixture(f)) = self.members.get_mut(id).map(|m| &mut m.device) else {
            unreachable!("dispatched to a fixture")
        };
        let r = match cmd.verb.as_str() {
            "clamp" => f.fixture.clamp(str_param(&cmd.params, "part_id").map(str::to_string)),
            "unclamp" => f.fixture.unclamp(),
            other => return fail("UnknownVerb", other),
        };
        if let Err(e) = r {
            return periphery_fail(e);
        }
        let state = json!({
            "module_id": id, "clamped": f.fixture.clamped, "held_part": f.fixture.held_part,
            "pose": f.fixture.fixture_pose,
        });
        self.registry.emit(id.0.clone(), EventKind::FixtureChanged, state.clone());
        ok(state)
    }
}
