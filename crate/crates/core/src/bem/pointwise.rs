//! Pointwise evaluation of boundary integral operators at points of `Gamma`.
//!
//! Points are addressed by a segment index and a local parameter strictly
//! inside `(0, 1)`. Tangential derivatives use the panel-analytic gradient of
//! the single-layer potential; `W` and `d/ds K` are reduced to it through the
//! arclength derivative of the density.

use super::kernel::{distance_to_segment, moments};
use super::{BemDensity, PanelPolynomial};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryMesh, Point};

/// Gauss points for far-field panels.
pub const FAR_GAUSS: usize = 8;

const VERTEX_TOL: f64 = 1e-12;

/// Layer potentials of one panelwise-polynomial density at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Potentials {
    /// `V psi (x)`.
    pub single: f64,
    /// `grad_x V psi (x)`, principal value on the panel line.
    pub grad_single: [f64; 2],
    /// `K psi (x)`, direct value on `Gamma`.
    pub double: f64,
}

/// Sums the layer potentials of the panel polynomials `polys` at `x`.
pub fn potentials(bnd: &BoundaryMesh, polys: &[PanelPolynomial], x: Point) -> Potentials {
    potentials_many(bnd, &[polys], x)[0]
}

/// Layer potentials of several densities, sharing the panel moments.
pub fn potentials_many(bnd: &BoundaryMesh, densities: &[&[PanelPolynomial]], x: Point) -> Vec<Potentials> {
    let mut out = vec![Potentials::default(); densities.len()];
    for (j, seg) in bnd.segments.iter().enumerate() {
        if densities.iter().all(|d| d[j].iter().all(|&v| v == 0.0)) {
            continue;
        }
        let m = moments(x, seg, FAR_GAUSS);
        for (o, d) in out.iter_mut().zip(densities) {
            let c = &d[j];
            for k in 0..3 {
                o.single += c[k] * m.g[k];
                o.grad_single[0] += c[k] * m.grad[k][0];
                o.grad_single[1] += c[k] * m.grad[k][1];
                o.double += c[k] * m.d[k];
            }
        }
    }
    out
}

/// Point of segment `seg` at local parameter `tau`, rejecting the endpoints.
pub fn boundary_point(bnd: &BoundaryMesh, seg: usize, tau: f64) -> Result<Point> {
    let s = bnd.segments.get(seg).ok_or(Error::UnknownEntity { kind: "boundary segment", id: seg })?;
    let x = s.point(tau);
    if tau <= VERTEX_TOL || tau >= 1.0 - VERTEX_TOL {
        return Err(Error::VertexPoint(x));
    }
    Ok(x)
}

fn tangent_dot(bnd: &BoundaryMesh, seg: usize, g: [f64; 2]) -> f64 {
    let t = bnd.segments[seg].tangent;
    t[0] * g[0] + t[1] * g[1]
}

fn normal_dot(bnd: &BoundaryMesh, seg: usize, g: [f64; 2]) -> f64 {
    let n = bnd.segments[seg].normal;
    n[0] * g[0] + n[1] * g[1]
}

/// `V psi` at a boundary point.
pub fn eval_v(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(potentials(bnd, &density.panel_polynomials(), x).single)
}

/// `d/ds (V psi)` at a boundary point.
pub fn eval_grad_v(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(tangent_dot(bnd, seg, potentials(bnd, &density.panel_polynomials(), x).grad_single))
}

/// `K' psi` at a boundary point.
pub fn eval_kadj(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(normal_dot(bnd, seg, potentials(bnd, &density.panel_polynomials(), x).grad_single))
}

/// `K v` (direct value) at a boundary point.
pub fn eval_k(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(potentials(bnd, &density.panel_polynomials(), x).double)
}

/// `W v = -d/ds V(v')` at a boundary point.
pub fn eval_w(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(-tangent_dot(bnd, seg, potentials(bnd, &density.derivative_polynomials(bnd), x).grad_single))
}

/// `d/ds (K v) = -K'(v')` at a boundary point.
pub fn eval_grad_k(bnd: &BoundaryMesh, density: &BemDensity, seg: usize, tau: f64) -> Result<f64> {
    let x = boundary_point(bnd, seg, tau)?;
    Ok(-normal_dot(bnd, seg, potentials(bnd, &density.derivative_polynomials(bnd), x).grad_single))
}

/// Value of the exterior representation formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorValue {
    pub value: f64,
    /// Set when the point is within one local mesh size of `Gamma`.
    pub near_boundary: bool,
}

/// `u^ext(x) = K~(u - u0)(x) - V~ phi(x)` for `x` outside the domain.
pub fn eval_exterior(
    bnd: &BoundaryMesh,
    u_trace: &BemDensity,
    u0_trace: &BemDensity,
    phi: &BemDensity,
    x: Point,
) -> Result<ExteriorValue> {
    if u_trace.space != u0_trace.space {
        return Err(Error::Dimension("traces of u and u0 live in different spaces".into()));
    }
    let jump: Vec<PanelPolynomial> = u_trace
        .panel_polynomials()
        .iter()
        .zip(u0_trace.panel_polynomials())
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
        .collect();
    let value = potentials(bnd, &jump, x).double - potentials(bnd, &phi.panel_polynomials(), x).single;
    let near_boundary = bnd.segments.iter().any(|s| distance_to_segment(x, s) <= s.length);
    Ok(ExteriorValue { value, near_boundary })
}
