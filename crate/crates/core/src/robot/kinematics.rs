use nalgebra::{DMatrix, DVector, Isometry3, Matrix6, Translation3, UnitQuaternion, Vector3, Vector6};

use super::{ArmModel, ControlLimits, DhRow, RobotError};
use crate::model::Pose;

fn link_transform(row: &DhRow, theta: f64) -> Isometry3<f64> {
    let rz = Isometry3::from_parts(
        Translation3::new(0.0, 0.0, row.d),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta + row.theta_offset),
    );
    let rx = Isometry3::from_parts(
        Translation3::new(row.a, 0.0, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), row.alpha),
    );
    rz * rx
}

/// Base frame followed by the frame after each joint, all in cell-root.
fn chain(model: &ArmModel, q: &[f64]) -> Vec<Isometry3<f64>> {
    let mut frames = Vec::with_capacity(q.len() + 1);
    let mut t = model.base_pose.to_isometry();
    frames.push(t);
    for (row, theta) in model.dh_rows.iter().zip(q) {
        t *= link_transform(row, *theta);
        frames.push(t);
    }
    frames
}

/// Flange pose in the cell-root frame.
pub fn forward_kinematics(model: &ArmModel, q: &[f64]) -> Result<Pose, RobotError> {
    model.check_limits(q)?;
    Ok(flange_unchecked(model, q))
}

pub(crate) fn flange_unchecked(model: &ArmModel, q: &[f64]) -> Pose {
    Pose::from_isometry(chain(model, q).last().expect("chain has a base frame"))
}

/// Geometric Jacobian of the flange, cell-root frame, linear rows first.
pub fn jacobian(model: &ArmModel, q: &[f64]) -> Result<DMatrix<f64>, RobotError> {
    model.check_limits(q)?;
    Ok(jacobian_unchecked(model, q, &Pose::identity()))
}

/// Jacobian of a point rigidly attached to the flange at `tcp_offset`.
pub(crate) fn jacobian_unchecked(model: &ArmModel, q: &[f64], tcp_offset: &Pose) -> DMatrix<f64> {
    let frames = chain(model, q);
    let end = frames.last().expect("chain has a base frame") * tcp_offset.to_isometry();
    let pe = end.translation.vector;
    let mut j = DMatrix::zeros(6, q.len());
    for (i, f) in frames.iter().enumerate().take(q.len()) {
        let z = f.rotation * Vector3::z();
        let lin = z.cross(&(pe - f.translation.vector));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

/// One damped least-squares step: `Jᵀ (J Jᵀ + λ² I)⁻¹ e`.
pub fn dls_step(j: &DMatrix<f64>, e: &Vector6<f64>, damping: f64) -> DVector<f64> {
    let jjt: Matrix6<f64> = (j * j.transpose()).fixed_view::<6, 6>(0, 0).into_owned()
        + Matrix6::identity() * (damping * damping);
    let y = match jjt.cholesky() {
        Some(ch) => ch.solve(e),
        None => jjt.lu().solve(e).unwrap_or_else(Vector6::zeros),
    };
    j.transpose() * y
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub iterations: usize,
    pub position_error: f64,
    pub angle_error: f64,
}

/// Solves for joint angles placing the flange at `target`.
pub fn solve_ik(
    model: &ArmModel,
    target: &Pose,
    seed: &[f64],
    limits: &ControlLimits,
) -> Result<IkSolution, RobotError> {
    solve_ik_tcp(model, target, seed, &Pose::identity(), limits)
}

/// Like [`solve_ik`] but for a tool point at `tcp_offset` from the flange.
///
/// Damped least squares with adaptive damping: a step is kept only if it
/// lowers the error, after which the damping relaxes; a rejected step
/// raises it. `ik_damping` is the starting value. Every attempted step
/// counts as an iteration.
pub fn solve_ik_tcp(
    model: &ArmModel,
    target: &Pose,
    seed: &[f64],
    tcp_offset: &Pose,
    limits: &ControlLimits,
) -> Result<IkSolution, RobotError> {
    model.check_limits(seed)?;
    let pose_at = |q: &[f64]| flange_unchecked(model, q).compose(tcp_offset);
    let mut q = seed.to_vec();
    let mut current = pose_at(&q);
    let mut e = Vector6::from(current.error_to(target));
    let mut damping = limits.ik_damping;
    let mut iterations = 0;
    loop {
        let (dp, da) = current.distance(target);
        if dp < limits.ik_tol_linear && da < limits.ik_tol_angular {
            return Ok(IkSolution {
                q,
                iterations,
                position_error: dp,
                angle_error: da,
            });
        }
        if iterations >= limits.ik_max_iters {
            return Err(RobotError::NoConvergence {
                iterations,
                position_error: dp,
                angle_error: da,
            });
        }
        iterations += 1;
        let j = jacobian_unchecked(model, &q, tcp_offset);
        let dq = dls_step(&j, &e, damping);
        let mut trial: Vec<f64> = q.iter().zip(dq.iter()).map(|(v, d)| v + d).collect();
        model.clamp(&mut trial);
        let trial_pose = pose_at(&trial);
        let trial_e = Vector6::from(trial_pose.error_to(target));
        if trial_e.norm() < e.norm() {
            q = trial;
            current = trial_pose;
            e = trial_e;
            damping = (damping * 0.5).max(MIN_DAMPING);
        } else {
            damping = (damping * 4.0).min(MAX_DAMPING);
        }
    }
}

/// Bounds for the adaptive damping in [`solve_ik_tcp`].
const MIN_DAMPING: f64 = 1e-6;
const MAX_DAMPING: f64 = 10.0;
