//! Problem definitions with known solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coupling::{ExactSolution, TransmissionData};
use crate::fem::Coefficient;
use crate::mesh::{create_z_shape_initial, Point, VolumeMesh};

/// Singularity exponent `pi / (7 pi / 4)` of the reentrant corner.
pub const ALPHA: f64 = 4.0 / 7.0;

/// Polar angle in `[-pi/8, 15 pi / 8)`, continuous inside the Z-shape.
fn angle(x: Point) -> f64 {
    let phi = x[1].atan2(x[0]);
    if phi < -PI / 8.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

/// `u^int = r^(4/7) sin(4 phi / 7)`.
pub fn u_interior(x: Point) -> f64 {
    let r = x[0].hypot(x[1]);
    r.powf(ALPHA) * (ALPHA * angle(x)).sin()
}

pub fn grad_u_interior(x: Point) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [f64::NAN, f64::NAN];
    }
    let phi = angle(x);
    let s = ALPHA * r.powf(ALPHA - 1.0);
    [s * ((ALPHA - 1.0) * phi).sin(), s * ((ALPHA - 1.0) * phi).cos()]
}

/// `u^ext = (x + y + 1/4) / (|x + 1/8|^2 + |y + 1/8|^2)`.
pub fn u_exterior(x: Point) -> f64 {
    let (a, b) = (x[0] + 0.125, x[1] + 0.125);
    (a + b) / (a * a + b * b)
}

pub fn grad_u_exterior(x: Point) -> [f64; 2] {
    let (a, b) = (x[0] + 0.125, x[1] + 0.125);
    let r2 = a * a + b * b;
    let s = a + b;
    [1.0 / r2 - 2.0 * a * s / (r2 * r2), 1.0 / r2 - 2.0 * b * s / (r2 * r2)]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// The Z-shape benchmark with `A = Id` and `f = 0`.
pub fn benchmark_zshape() -> (VolumeMesh, TransmissionData) {
    let data = TransmissionData {
        f: Arc::new(|_| 0.0),
        u0: Arc::new(|x| u_interior(x) - u_exterior(x)),
        u0_grad: Arc::new(|x| {
            let (gi, ge) = (grad_u_interior(x), grad_u_exterior(x));
            [gi[0] - ge[0], gi[1] - ge[1]]
        }),
        u0_continuous: true,
        phi0: Arc::new(|x, n| dot(grad_u_interior(x), n) - dot(grad_u_exterior(x), n)),
        coefficient: Coefficient::identity(),
        exact: Some(ExactSolution {
            u_int: Arc::new(u_interior),
            grad_u_int: Arc::new(grad_u_interior),
            u_ext: Arc::new(u_exterior),
            phi: Arc::new(|x, n| dot(grad_u_exterior(x), n)),
            singular_points: vec![[0.0, 0.0]],
        }),
    };
    (create_z_shape_initial(), data)
}

/// `u^int = x_1`, `u^ext = 0`: the discrete spaces contain the exact solution.
pub fn linear_reproduction() -> (VolumeMesh, TransmissionData) {
    let data = TransmissionData {
        f: Arc::new(|_| 0.0),
        u0: Arc::new(|x| x[0]),
        u0_grad: Arc::new(|_| [1.0, 0.0]),
        u0_continuous: true,
        phi0: Arc::new(|_, n| n[0]),
        coefficient: Coefficient::identity(),
        exact: Some(ExactSolution {
            u_int: Arc::new(|x| x[0]),
            grad_u_int: Arc::new(|_| [1.0, 0.0]),
            u_ext: Arc::new(|_| 0.0),
            phi: Arc::new(|_, _| 0.0),
            singular_points: Vec::new(),
        }),
    };
    (create_z_shape_initial(), data)
}

/// Homogeneous data; the solution is zero.
pub fn zero_data() -> TransmissionData {
    TransmissionData {
        f: Arc::new(|_| 0.0),
        u0: Arc::new(|_| 0.0),
        u0_grad: Arc::new(|_| [0.0, 0.0]),
        u0_continuous: true,
        phi0: Arc::new(|_, _| 0.0),
        coefficient: Coefficient::identity(),
        exact: Some(ExactSolution {
            u_int: Arc::new(|_| 0.0),
            grad_u_int: Arc::new(|_| [0.0, 0.0]),
            u_ext: Arc::new(|_| 0.0),
            phi: Arc::new(|_, _| 0.0),
            singular_points: Vec::new(),
        }),
    }
}
