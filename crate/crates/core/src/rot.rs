//! Rotation conversions: Euler channels (degrees), unit quaternions, and the
//! 6D rotation parameterization (first two rotation-matrix columns).

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};

pub type Quat = UnitQuaternion<f64>;

/// One rotation axis of a Euler channel triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Unit<Vector3<f64>> {
        match self {
            Axis::X => Vector3::x_axis(),
            Axis::Y => Vector3::y_axis(),
            Axis::Z => Vector3::z_axis(),
        }
    }
}

/// Intrinsic rotation order, e.g. `[Z, X, Y]` for BVH `Zrotation Xrotation
/// Yrotation` channels. Rotations compose in listed order: R = R0 * R1 * R2.
pub type EulerOrder = [Axis; 3];

pub fn quat_about(axis: Axis, deg: f64) -> Quat {
    UnitQuaternion::from_axis_angle(&axis.unit(), deg.to_radians())
}

/// Euler angles in degrees, applied intrinsically in `order`, to a quaternion.
pub fn quat_from_euler_deg(order: EulerOrder, angles_deg: [f64; 3]) -> Quat {
    quat_about(order[0], angles_deg[0])
        * quat_about(order[1], angles_deg[1])
        * quat_about(order[2], angles_deg[2])
}

fn parity(order: EulerOrder) -> f64 {
    // even permutations of (X, Y, Z)
    match (order[0], order[1], order[2]) {
        (Axis::X, Axis::Y, Axis::Z) | (Axis::Y, Axis::Z, Axis::X) | (Axis::Z, Axis::X, Axis::Y) => {
            1.0
        }
        _ => -1.0,
    }
}

/// Extract Euler angles (degrees) matching `quat_from_euler_deg(order, ..)`.
///
/// All six Tait-Bryan orders are supported. Near gimbal lock the middle angle
/// saturates and the third angle is folded into the first; the returned triple
/// still recomposes to the same rotation.
pub fn euler_deg_from_quat(order: EulerOrder, q: &Quat) -> [f64; 3] {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    let (i, j, k) = (
        order[0].index(),
        order[1].index(),
        order[2].index(),
    );
    let eps = parity(order);
    let s = (eps * m[(i, k)]).clamp(-1.0, 1.0);
    let a1 = s.asin();
    let (a0, a2) = if s.abs() < 1.0 - 1e-9 {
        (
            f64::atan2(-eps * m[(j, k)], m[(k, k)]),
            f64::atan2(-eps * m[(i, j)], m[(i, i)]),
        )
    } else {
        // gimbal lock: only a0 -/+ a2 is determined; pick a2 = 0
        (f64::atan2(s.signum() * m[(j, i)], m[(j, j)]), 0.0)
    };
    [a0.to_degrees(), a1.to_degrees(), a2.to_degrees()]
}

/// Shortest-arc spherical interpolation; antipodal pairs are sign-flipped
/// before interpolating so the path never exceeds a half turn.
pub fn slerp_shortest(a: &Quat, b: &Quat, t: f64) -> Quat {
    let qa = a.into_inner();
    let mut qb = b.into_inner();
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    let dot = qa.dot(&qb).clamp(-1.0, 1.0);
    let theta = dot.acos();
    let raw = if theta < 1e-9 {
        qa.lerp(&qb, t)
    } else {
        let sin_theta = theta.sin();
        qa * (((1.0 - t) * theta).sin() / sin_theta) + qb * ((t * theta).sin() / sin_theta)
    };
    UnitQuaternion::from_quaternion(raw)
}

/// First two columns of the rotation matrix, flattened column-major.
pub fn quat_to_rot6d(q: &Quat) -> [f64; 6] {
    let m = q.to_rotation_matrix();
    let m = m.matrix();
    [
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ]
}

/// Gram-Schmidt the two 6D columns back into a rotation, then a quaternion.
/// Always yields a finite unit quaternion, even for degenerate inputs.
pub fn rot6d_to_quat(v: [f64; 6]) -> Quat {
    let a1 = Vector3::new(v[0], v[1], v[2]);
    let a2 = Vector3::new(v[3], v[4], v[5]);
    let b1 = if a1.norm() > 1e-12 {
        a1.normalize()
    } else {
        Vector3::x()
    };
    let mut b2 = a2 - b1 * b1.dot(&a2);
    b2 = if b2.norm() > 1e-12 {
        b2.normalize()
    } else {
        // pick any direction orthogonal to b1
        let alt = if b1.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        (alt - b1 * b1.dot(&alt)).normalize()
    };
    let b3 = b1.cross(&b2);
    let m = Matrix3::from_columns(&[b1, b2, b3]);
    UnitQuaternion::from_matrix(&m)
}
