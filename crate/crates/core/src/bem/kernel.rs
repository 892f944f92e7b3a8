//! Panel integrals of the Laplace fundamental solution and its derivatives.
//!
//! For a straight panel `y(tau) = a + tau * h * t`, `tau` in `[0, 1]`, and a point
//! `x`, the moments
//!
//! ```text
//! g[k]    = int G(x, y) tau^k ds_y
//! grad[k] = int grad_x G(x, y) tau^k ds_y
//! d[k]    = int d_{nu(y)} G(x, y) tau^k ds_y
//! ```
//!
//! are computed in closed form near the panel and by Gauss quadrature away from it.
//! With `G(x, y) = -log|x - y| / (2 pi)` the double-layer kernel is
//! `(x - y) . nu(y) / (2 pi |x - y|^2)`.

use std::f64::consts::PI;

use crate::mesh::{Point, Segment};
use crate::quadrature::gauss;

/// Relative distance (in panel lengths) below which closed-form integration is used.
pub const ANALYTIC_RADIUS: f64 = 3.0;

/// Tolerance (relative to the panel length) for treating a point as collinear.
const COLLINEAR_TOL: f64 = 1e-12;

pub fn fundamental_solution(x: Point, y: Point) -> f64 {
    -(x[0] - y[0]).hypot(x[1] - y[1]).ln() / (2.0 * PI)
}

/// `grad_x G(x, y)`.
pub fn grad_fundamental_solution(x: Point, y: Point) -> [f64; 2] {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r2 = d[0] * d[0] + d[1] * d[1];
    [-d[0] / (2.0 * PI * r2), -d[1] / (2.0 * PI * r2)]
}

/// `d_{nu(y)} G(x, y)`.
pub fn double_layer_kernel(x: Point, y: Point, normal_y: Point) -> f64 {
    let d = [x[0] - y[0], x[1] - y[1]];
    (d[0] * normal_y[0] + d[1] * normal_y[1]) / (2.0 * PI * (d[0] * d[0] + d[1] * d[1]))
}

/// Moments of one panel against `1, tau, tau^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub g: [f64; 3],
    pub grad: [[f64; 2]; 3],
    pub d: [f64; 3],
}

/// Distance from `x` to the closed segment.
pub fn distance_to_segment(x: Point, seg: &Segment) -> f64 {
    let d = [x[0] - seg.a[0], x[1] - seg.a[1]];
    let s = (d[0] * seg.tangent[0] + d[1] * seg.tangent[1]).clamp(0.0, seg.length);
    (d[0] - s * seg.tangent[0]).hypot(d[1] - s * seg.tangent[1])
}

/// Panel moments with `inner` Gauss points used in the far field.
pub fn moments(x: Point, seg: &Segment, inner: usize) -> Moments {
    if distance_to_segment(x, seg) < ANALYTIC_RADIUS * seg.length {
        analytic_moments(x, seg)
    } else {
        gauss_moments(x, seg, inner)
    }
}

pub fn gauss_moments(x: Point, seg: &Segment, n: usize) -> Moments {
    let mut m = Moments::default();
    for (tau, w) in gauss(n).iter() {
        let y = seg.point(tau);
        let ws = w * seg.length;
        let g = fundamental_solution(x, y);
        let gr = grad_fundamental_solution(x, y);
        let dl = double_layer_kernel(x, y, seg.normal);
        let mut pw = ws;
        for k in 0..3 {
            m.g[k] += pw * g;
            m.grad[k][0] += pw * gr[0];
            m.grad[k][1] += pw * gr[1];
            m.d[k] += pw * dl;
            pw *= tau;
        }
    }
    m
}

/// `u^(m+1) log(u^2 + eta^2)` with the convention `0 log 0 = 0`.
fn power_log(u: f64, m: i32, eta2: f64) -> f64 {
    let r2 = u * u + eta2;
    if r2 == 0.0 {
        0.0
    } else {
        u.powi(m + 1) * r2.ln()
    }
}

pub fn analytic_moments(x: Point, seg: &Segment) -> Moments {
    let (t, n, h) = (seg.tangent, seg.normal, seg.length);
    let dx = [x[0] - seg.a[0], x[1] - seg.a[1]];
    let xi = dx[0] * t[0] + dx[1] * t[1];
    let mut eta = dx[0] * n[0] + dx[1] * n[1];
    if eta.abs() <= COLLINEAR_TOL * h {
        eta = 0.0;
    }
    // substitution u = s - xi, so x - y = -u t + eta n
    let (u0, u1) = (-xi, h - xi);
    let eta2 = eta * eta;
    let p = |j: i32| (u1.powi(j + 1) - u0.powi(j + 1)) / f64::from(j + 1);
    let theta = if eta == 0.0 { 0.0 } else { (eta * (u1 - u0)).atan2(eta2 + u0 * u1) };
    let r0 = u0 * u0 + eta2;
    let r1 = u1 * u1 + eta2;
    // i_j = int u^j / (u^2 + eta^2) du, principal value on the panel line
    let i1 = if r0 == 0.0 || r1 == 0.0 { 0.0 } else { 0.5 * (r1 / r0).ln() };
    let i2 = p(0) - eta * theta;
    let i3 = p(1) - eta2 * i1;
    let i4 = p(2) - eta2 * i2;
    let i = [f64::NAN, i1, i2, i3, i4];
    // eta * i_j for j = 0, 1, 2
    let ei = [theta, eta * i1, eta * i2];
    // j_m = int u^m log(u^2 + eta^2) du
    let jm = |m: usize| {
        let mi = m as i32;
        (power_log(u1, mi, eta2) - power_log(u0, mi, eta2)) / f64::from(mi + 1) - 2.0 / f64::from(mi + 1) * i[m + 2]
    };
    let j = [jm(0), jm(1), jm(2)];
    const BINOM: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]];
    let mut m = Moments::default();
    let mut hk = 1.0;
    for k in 0..3 {
        let (mut a, mut b, mut l) = (0.0, 0.0, 0.0);
        for q in 0..=k {
            let c = BINOM[k][q] * xi.powi((k - q) as i32);
            a += c * i[q + 1];
            b += c * ei[q];
            l += c * j[q];
        }
        m.g[k] = -l / (4.0 * PI * hk);
        m.grad[k] = [-(-t[0] * a + n[0] * b) / (2.0 * PI * hk), -(-t[1] * a + n[1] * b) / (2.0 * PI * hk)];
        m.d[k] = b / (2.0 * PI * hk);
        hk *= h;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryMesh;
    use crate::quadrature::graded_both;

    fn panel(a: Point, b: Point) -> Segment {
        BoundaryMesh::from_polygon(&[a, b, [b[0] + 7.0, b[1] + 3.0]]).segments[0]
    }

    // Brute-force oracle with a fine composite rule; only valid off the panel.
    fn oracle(x: Point, seg: &Segment) -> Moments {
        let mut m = Moments::default();
        let rule = gauss(20);
        let pieces = 64;
        for piece in 0..pieces {
            for (s, w) in rule.iter() {
                let tau = (piece as f64 + s) / pieces as f64;
                let w = w * seg.length / pieces as f64;
                let y = seg.point(tau);
                let gr = grad_fundamental_solution(x, y);
                for k in 0..3 {
                    let pw = w * tau.powi(k as i32);
                    m.g[k] += pw * fundamental_solution(x, y);
                    m.grad[k][0] += pw * gr[0];
                    m.grad[k][1] += pw * gr[1];
                    m.d[k] += pw * double_layer_kernel(x, y, seg.normal);
                }
            }
        }
        m
    }

    fn close(a: &Moments, b: &Moments, tol: f64) -> bool {
        (0..3).all(|k| {
            (a.g[k] - b.g[k]).abs() < tol
                && (a.d[k] - b.d[k]).abs() < tol
                && (a.grad[k][0] - b.grad[k][0]).abs() < tol
                && (a.grad[k][1] - b.grad[k][1]).abs() < tol
        })
    }

    #[test]
    fn analytic_moments_match_quadrature_off_the_panel() {
        let seg = panel([0.1, -0.2], [0.4, 0.2]);
        for x in [[0.3, 0.3], [-0.1, 0.0], [0.6, 0.1], [0.25, -0.05], [1.5, 2.0]] {
            let m = analytic_moments(x, &seg);
            assert!(close(&m, &oracle(x, &seg), 1e-11), "{x:?}");
        }
    }

    #[test]
    fn far_field_gauss_agrees_with_closed_form() {
        let seg = panel([0.0, 0.0], [0.1, 0.0]);
        let x = [0.2, 0.25];
        assert!(close(&gauss_moments(x, &seg, 8), &analytic_moments(x, &seg), 1e-10));
    }

    #[test]
    fn self_panel_log_integral() {
        // int_0^1 int_0^1 -log|s - t| ds dt = 3/2
        let seg = panel([0.0, 0.0], [1.0, 0.0]);
        let val: f64 = graded_both(16, 6, 0.15).iter().map(|(t, w)| w * analytic_moments(seg.point(t), &seg).g[0]).sum();
        assert!((val - 3.0 / (4.0 * PI)).abs() < 1e-13);
    }

    #[test]
    fn collinear_double_layer_vanishes() {
        let seg = panel([0.0, 0.0], [1.0, 1.0]);
        for x in [[0.3, 0.3], [1.5, 1.5], [-0.2, -0.2]] {
            assert_eq!(analytic_moments(x, &seg).d, [0.0; 3]);
        }
    }

    #[test]
    fn collinear_gradient_is_a_log_difference() {
        // tangential derivative of V1 at x on the panel line: -(1/2pi) [log|x-a| - log|x-b|]
        let seg = panel([0.0, 0.0], [1.0, 0.0]);
        let x = [0.3, 0.0];
        let m = analytic_moments(x, &seg);
        let expected = -((0.3f64).ln() - (0.7f64).ln()) / (2.0 * PI);
        assert!((m.grad[0][0] - expected).abs() < 1e-15);
    }
}
