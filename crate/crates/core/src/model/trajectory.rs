use serde::{Deserialize, Serialize};

use super::{ModelError, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointState {
    pub positions: Vec<f64>,
    #[serde(default)]
    pub velocities: Vec<f64>,
    #[serde(default)]
    pub timestamp: f64,
}

impl JointState {
    pub fn at_rest(positions: Vec<f64>, timestamp: f64) -> Self {
        let velocities = vec![0.0; positions.len()];
        Self {
            positions,
            velocities,
            timestamp,
        }
    }

    pub fn dof(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrajectoryKind {
    Joint,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleWire", into = "SampleWire")]
pub struct Sample {
    pub t: f64,
    pub point: SampleDoc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleDoc {
    Joint(Vec<f64>),
    Cartesian(Pose),
}

/// Wire shape of a sample: `{"t":..,"q":[..]}` or `{"t":..,"pose":{..}}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleWire {
    t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose: Option<Pose>,
}

impl TryFrom<SampleWire> for Sample {
    type Error = String;

    fn try_from(w: SampleWire) -> Result<Self, String> {
        let point = match (w.q, w.pose) {
            (Some(q), None) => SampleDoc::Joint(q),
            (None, Some(p)) => SampleDoc::Cartesian(p),
            _ => return Err("sample needs exactly one of \"q\" or \"pose\"".into()),
        };
        Ok(Sample { t: w.t, point })
    }
}

impl From<Sample> for SampleWire {
    fn from(s: Sample) -> Self {
        match s.point {
            SampleDoc::Joint(q) => SampleWire { t: s.t, q: Some(q), pose: None },
            SampleDoc::Cartesian(p) => SampleWire { t: s.t, q: None, pose: Some(p) },
        }
    }
}

/// A validated, time-parameterized path. Construct through
/// [`Trajectory::joint`], [`Trajectory::cartesian`] or deserialization,
/// all of which check the invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    kind: TrajectoryKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<String>,
    samples: Vec<Sample>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    kind: TrajectoryKind,
    #[serde(default)]
    frame: Option<String>,
    samples: Vec<Sample>,
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = TrajectoryDoc::deserialize(d)?;
        Trajectory::from_samples(doc.kind, doc.frame, doc.samples).map_err(serde::de::Error::custom)
    }
}

/// Result of interpolating a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Waypoint {
    Joint(Vec<f64>),
    Cartesian(Pose),
}

impl Trajectory {
    pub fn joint(samples: Vec<(f64, Vec<f64>)>) -> Result<Self, ModelError> {
        let samples = samples
            .into_iter()
            .map(|(t, q)| Sample {
                t,
                point: SampleDoc::Joint(q),
            })
            .collect();
        Self::from_samples(TrajectoryKind::Joint, None, samples)
    }

    pub fn cartesian(frame: impl Into<String>, samples: Vec<(f64, Pose)>) -> Result<Self, ModelError> {
        let samples = samples
            .into_iter()
            .map(|(t, p)| Sample {
                t,
                point: SampleDoc::Cartesian(p),
            })
            .collect();
        Self::from_samples(TrajectoryKind::Cartesian, Some(frame.into()), samples)
    }

    pub fn from_samples(
        kind: TrajectoryKind,
        frame: Option<String>,
        samples: Vec<Sample>,
    ) -> Result<Self, ModelError> {
        if samples.len() < 2 {
            return Err(ModelError::InvalidTrajectory("fewer than 2 samples".into()));
        }
        if samples[0].t != 0.0 {
            return Err(ModelError::InvalidTrajectory("first sample time must be 0".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) || !w[1].t.is_finite() {
                return Err(ModelError::InvalidTrajectory(format!(
                    "sample times not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        match kind {
            TrajectoryKind::Joint => {
                if frame.is_some() {
                    return Err(ModelError::InvalidTrajectory("joint trajectory with a frame".into()));
                }
                let mut dof = None;
                for s in &samples {
                    let SampleDoc::Joint(q) = &s.point else {
                        return Err(ModelError::InvalidTrajectory("pose sample in joint trajectory".into()));
                    };
                    if q.is_empty() || q.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::InvalidTrajectory("empty or non-finite joint sample".into()));
                    }
                    if *dof.get_or_insert(q.len()) != q.len() {
                        return Err(ModelError::InvalidTrajectory("inconsistent joint count".into()));
                    }
                }
            }
            TrajectoryKind::Cartesian => {
                if samples.iter().any(|s| !matches!(s.point, SampleDoc::Cartesian(_))) {
                    return Err(ModelError::InvalidTrajectory("joint sample in cartesian trajectory".into()));
                }
            }
        }
        let frame = match kind {
            TrajectoryKind::Cartesian => Some(frame.unwrap_or_else(|| "world".to_string())),
            TrajectoryKind::Joint => None,
        };
        Ok(Self {
            kind,
            frame,
            samples,
        })
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn frame(&self) -> Option<&str> {
        self.frame.as_deref()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    pub fn dof(&self) -> Option<usize> {
        match &self.samples[0].point {
            SampleDoc::Joint(q) => Some(q.len()),
            SampleDoc::Cartesian(_) => None,
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn waypoint(&self, i: usize) -> Waypoint {
        match &self.samples[i].point {
            SampleDoc::Joint(q) => Waypoint::Joint(q.clone()),
            SampleDoc::Cartesian(p) => Waypoint::Cartesian(*p),
        }
    }

    /// Piecewise-linear in joint space, lerp + slerp in Cartesian space.
    /// Returns the stored sample unchanged when `t` hits a sample time.
    pub fn interpolate(&self, t: f64) -> Result<Waypoint, ModelError> {
        let duration = self.duration();
        if !(0.0..=duration).contains(&t) {
            return Err(ModelError::OutOfRange { t, duration });
        }
        // first index with sample time >= t
        let hi = self.samples.partition_point(|s| s.t < t);
        if self.samples[hi].t == t {
            return Ok(self.waypoint(hi));
        }
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        let s = (t - a.t) / (b.t - a.t);
        Ok(match (&a.point, &b.point) {
            (SampleDoc::Joint(qa), SampleDoc::Joint(qb)) => {
                Waypoint::Joint(qa.iter().zip(qb).map(|(x, y)| x + (y - x) * s).collect())
            }
            (SampleDoc::Cartesian(pa), SampleDoc::Cartesian(pb)) => Waypoint::Cartesian(pa.interpolate(pb, s)),
            _ => unreachable!("sample kinds validated at construction"),
        })
    }

    /// Joint rows, for joint trajectories.
    pub fn joint_rows(&self) -> Option<Vec<(f64, &[f64])>> {
        self.samples
            .iter()
            .map(|s| match &s.point {
                SampleDoc::Joint(q) => Some((s.t, q.as_slice())),
                SampleDoc::Cartesian(_) => None,
            })
            .collect()
    }

    pub fn poses(&self) -> Option<Vec<(f64, Pose)>> {
        self.samples
            .iter()
            .map(|s| match &s.point {
                SampleDoc::Cartesian(p) => Some((s.t, *p)),
                SampleDoc::Joint(_) => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn ramp() -> Trajectory {
        Trajectory::joint(vec![(0.0, vec![0.0, 1.0]), (1.0, vec![1.0, -1.0])]).unwrap()
    }

    #[test]
    fn endpoints_and_linear() {
        let tr = ramp();
        assert_eq!(tr.interpolate(0.0).unwrap(), Waypoint::Joint(vec![0.0, 1.0]));
        assert_eq!(tr.interpolate(1.0).unwrap(), Waypoint::Joint(vec![1.0, -1.0]));
        assert_eq!(tr.interpolate(0.25).unwrap(), Waypoint::Joint(vec![0.25, 0.5]));
    }

    #[test]
    fn out_of_range() {
        let tr = ramp();
        assert!(matches!(tr.interpolate(-1e-9), Err(ModelError::OutOfRange { .. })));
        assert!(matches!(tr.interpolate(1.0 + 1e-9), Err(ModelError::OutOfRange { .. })));
    }

    #[test]
    fn invariants_enforced() {
        assert!(Trajectory::joint(vec![(0.0, vec![0.0])]).is_err());
        assert!(Trajectory::joint(vec![(0.1, vec![0.0]), (1.0, vec![0.0])]).is_err());
        assert!(Trajectory::joint(vec![(0.0, vec![0.0]), (0.0, vec![0.0])]).is_err());
        assert!(Trajectory::joint(vec![(0.0, vec![0.0]), (1.0, vec![0.0, 1.0])]).is_err());
        let bad = serde_json::json!({"kind": "JOINT", "samples": [{"t": 0.0, "q": [0.0]}, {"t": -1.0, "q": [1.0]}]});
        assert!(serde_json::from_value::<Trajectory>(bad).is_err());
    }

    #[test]
    fn sample_times_are_exact() {
        let tr = Trajectory::joint(
            (0..=10).map(|i| (i as f64 * 0.1, vec![(i as f64).sin(), 0.3 * i as f64])).collect(),
        )
        .unwrap();
        for (i, s) in tr.samples().iter().enumerate() {
            let Waypoint::Joint(q) = tr.interpolate(s.t).unwrap() else { panic!() };
            let SampleDoc::Joint(expect) = &s.point else { panic!() };
            assert_eq!(q.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                       expect.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), "sample {i}");
        }
    }

    #[test]
    fn cartesian_roundtrip_and_midpoint() {
        let a = Pose::from_translation(0.0, 0.0, 0.0);
        let b = Pose::from_translation(1.0, 0.0, 0.0).compose(&Pose::rot_z(1.0));
        let tr = Trajectory::cartesian("world", vec![(0.0, a), (2.0, b)]).unwrap();
        let Waypoint::Cartesian(m) = tr.interpolate(1.0).unwrap() else { panic!() };
        assert!((m.position() - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        assert!((m.orientation().angle() - 0.5).abs() < 1e-12);
        let json = serde_json::to_string(&tr).unwrap();
        let back: Trajectory = serde_json::from_str(&json).unwrap();
        assert_eq!(back.frame(), Some("world"));
        assert_eq!(back.len(), 2);
    }
}
