//! Weighted-residual error estimator with data oscillation.
//!
//! All indicators are stored squared. Boundary residual norms are evaluated with
//! Gauss nodes strictly inside each segment, so the pointwise operators never see
//! a vertex.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::bem::pointwise::potentials_many;
use crate::bem::{derivative, polyval, BemDensity, PanelPolynomial};
use crate::coupling::{CoupledSolution, Discretization, TransmissionData};
use crate::error::Result;
use crate::fem::{discrete_divergence, Coefficient, ElementGeometry, FemSpace};
use crate::mesh::{BoundaryMesh, VolumeMesh};
use crate::quadrature::{gauss, power_graded_both, LineRule, TriangleRule};

/// Gauss nodes per segment half for the boundary residuals.
pub const BOUNDARY_NODES: usize = 8;
/// Power of the endpoint substitution for the boundary residuals.
pub const BOUNDARY_GRADING: u32 = 6;

/// Segment rule for the boundary residual norms. The integrands carry
/// logarithmic singularities at every vertex and the data may blow up like
/// `r^(-3/7)` at a reentrant corner.
pub fn boundary_rule(nodes: usize) -> LineRule {
    power_graded_both(nodes, BOUNDARY_GRADING)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Triangle,
    Facet,
    Segment,
}

impl EntityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Triangle => "triangle",
            Self::Facet => "facet",
            Self::Segment => "segment",
        }
    }
}

/// Mesh entity carrying an indicator; ordered by kind, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: usize,
}

/// Squared indicators of one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorReport {
    /// `eta(T)^2` per triangle.
    pub volume: Vec<f64>,
    /// `eta(E)^2` per interior facet.
    pub jumps: Vec<f64>,
    /// First boundary residual per segment.
    pub boundary1: Vec<f64>,
    /// Second boundary residual per segment.
    pub boundary2: Vec<f64>,
    /// `osc(E)^2` per segment.
    pub oscillation: Vec<f64>,
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

impl EstimatorReport {
    /// Combines precomputed parts.
    pub fn total(volume: Vec<f64>, jumps: Vec<f64>, boundary1: Vec<f64>, boundary2: Vec<f64>, oscillation: Vec<f64>) -> Self {
        Self { volume, jumps, boundary1, boundary2, oscillation }
    }

    /// `rho(Omega)^2`: volume residuals and jumps.
    pub fn rho_omega2(&self) -> f64 {
        sum(&self.volume) + sum(&self.jumps)
    }

    /// `rho(Gamma)^2`: both boundary residuals and the oscillation.
    pub fn rho_gamma2(&self) -> f64 {
        sum(&self.boundary1) + sum(&self.boundary2) + sum(&self.oscillation)
    }

    pub fn oscillation2(&self) -> f64 {
        sum(&self.oscillation)
    }

    pub fn rho2(&self) -> f64 {
        self.rho_omega2() + self.rho_gamma2()
    }

    pub fn rho(&self) -> f64 {
        self.rho2().sqrt()
    }

    /// `rho(tau)^2` for every entity, in entity order.
    pub fn indicators(&self) -> Vec<(EntityId, f64)> {
        let tri = self.volume.iter().enumerate().map(|(i, &v)| (EntityId { kind: EntityKind::Triangle, index: i }, v));
        let fac = self.jumps.iter().enumerate().map(|(i, &v)| (EntityId { kind: EntityKind::Facet, index: i }, v));
        let seg = (0..self.boundary1.len()).map(|i| {
            (EntityId { kind: EntityKind::Segment, index: i }, self.boundary1[i] + self.boundary2[i] + self.oscillation[i])
        });
        tri.chain(fac).chain(seg).collect()
    }

    /// CSV with columns `kind,id,value2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,id,value2\n");
        for (id, v) in self.indicators() {
            let _ = writeln!(out, "{},{},{:e}", id.kind.as_str(), id.index, v);
        }
        out
    }
}

/// `|T| * ||f + div(A grad U)||^2_{L^2(T)}`.
pub fn volume_residual(mesh: &VolumeMesh, space: &FemSpace, u: &[f64], data: &TransmissionData) -> Vec<f64> {
    let trivial = space.degree() == 1 && data.coefficient.is_identity;
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let geo = ElementGeometry::new(mesh.triangle_points(t));
            let norm2: f64 = TriangleRule::degree5()
                .iter()
                .map(|(l, w)| {
                    let div = if trivial { 0.0 } else { discrete_divergence(mesh, space, u, &data.coefficient, t, l) };
                    w * ((data.f)(geo.point(l)) + div).powi(2)
                })
                .sum::<f64>()
                * geo.area;
            geo.area * norm2
        })
        .collect()
}

/// `|E| * ||[A grad U . n]||^2_{L^2(E)}` per interior facet.
pub fn interior_jumps(mesh: &VolumeMesh, space: &FemSpace, u: &[f64], coefficient: &Coefficient) -> Vec<f64> {
    let topo = mesh.topology();
    topo.interior_edges
        .par_iter()
        .map(|&e| {
            let [a, b] = topo.edges[e];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
            let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            let [t1, t2] = topo.edge_tris[e];
            let (t1, t2) = (t1.expect("interior facet"), t2.expect("interior facet"));
            let (g1, g2) = (ElementGeometry::new(mesh.triangle_points(t1)), ElementGeometry::new(mesh.triangle_points(t2)));
            let norm2: f64 = gauss(3)
                .iter()
                .map(|(s, w)| {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    let (_, d1) = space.evaluate(mesh, u, t1, g1.barycentric(x));
                    let (_, d2) = space.evaluate(mesh, u, t2, g2.barycentric(x));
                    let (f1, f2) = (coefficient.apply(x, d1), coefficient.apply(x, d2));
                    let jump = (f1[0] - f2[0]) * n[0] + (f1[1] - f2[1]) * n[1];
                    w * jump * jump
                })
                .sum::<f64>()
                * len;
            len * norm2
        })
        .collect()
}

/// Both boundary residuals per segment, with `nodes` Gauss points each.
pub fn boundary_residuals(
    mesh: &VolumeMesh,
    disc: &Discretization,
    solution: &CoupledSolution,
    data: &TransmissionData,
    rule: &LineRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let bnd = &disc.bnd;
    let phi = BemDensity::piecewise(disc.density_space, solution.phi.clone())?;
    let defect = BemDensity::trace(disc.trace_space, solution.dirichlet_defect(disc.space.boundary_dofs()))?;
    let phi_polys = phi.panel_polynomials();
    let w_deriv = defect.derivative_polynomials(bnd);
    let parts: Vec<(f64, f64)> = (0..bnd.len())
        .into_par_iter()
        .map(|j| {
            let seg = &bnd.segments[j];
            let geo = ElementGeometry::new(mesh.triangle_points(seg.triangle));
            let (t, n) = (seg.tangent, seg.normal);
            let (mut r1, mut r2) = (0.0, 0.0);
            for (tau, w) in rule.iter() {
                let x = seg.point(tau);
                let pot = potentials_many(bnd, &[&phi_polys, &w_deriv], x);
                let (p_phi, p_wd) = (pot[0], pot[1]);
                let (_, grad_u) = disc.space.evaluate(mesh, &solution.u, seg.triangle, geo.barycentric(x));
                let flux = data.coefficient.apply(x, grad_u);
                let flux_n = flux[0] * n[0] + flux[1] * n[1];
                let w_op = -(t[0] * p_wd.grad_single[0] + t[1] * p_wd.grad_single[1]);
                let kadj_phi = n[0] * p_phi.grad_single[0] + n[1] * p_phi.grad_single[1];
                let grad_v_phi = t[0] * p_phi.grad_single[0] + t[1] * p_phi.grad_single[1];
                let kadj_wd = n[0] * p_wd.grad_single[0] + n[1] * p_wd.grad_single[1];
                let phi_x = polyval(&phi_polys[j], tau);
                let wd_x = polyval(&w_deriv[j], tau);
                let res1 = (data.phi0)(x, n) - flux_n + w_op + 0.5 * phi_x - kadj_phi;
                let res2 = grad_v_phi - 0.5 * wd_x - kadj_wd;
                r1 += w * res1 * res1;
                r2 += w * res2 * res2;
            }
            let h = seg.length;
            (h * h * r1, h * h * r2)
        })
        .collect();
    Ok(parts.into_iter().unzip())
}

/// `|E| * ||d_s(u0 - U0)||^2_{L^2(E)}` per segment.
pub fn oscillation(bnd: &BoundaryMesh, data: &TransmissionData, u0: &BemDensity) -> Vec<f64> {
    let p = match u0.space {
        crate::bem::DensitySpace::Trace(s) => s.degree,
        crate::bem::DensitySpace::Piecewise(s) => s.degree,
    };
    let rule = gauss(p + 3);
    bnd.segments
        .par_iter()
        .enumerate()
        .map(|(j, seg)| {
            let du: PanelPolynomial = derivative(&u0.panel_polynomial(j), seg.length);
            let norm2: f64 = rule
                .iter()
                .map(|(tau, w)| {
                    let g = (data.u0_grad)(seg.point(tau));
                    let ds = g[0] * seg.tangent[0] + g[1] * seg.tangent[1];
                    w * (ds - polyval(&du, tau)).powi(2)
                })
                .sum::<f64>()
                * seg.length;
            seg.length * norm2
        })
        .collect()
}

/// Full estimator with the default boundary node count.
pub fn estimate(mesh: &VolumeMesh, disc: &Discretization, solution: &CoupledSolution, data: &TransmissionData) -> Result<EstimatorReport> {
    estimate_with_rule(mesh, disc, solution, data, &boundary_rule(BOUNDARY_NODES))
}

pub fn estimate_with_rule(
    mesh: &VolumeMesh,
    disc: &Discretization,
    solution: &CoupledSolution,
    data: &TransmissionData,
    rule: &LineRule,
) -> Result<EstimatorReport> {
    let volume = volume_residual(mesh, &disc.space, &solution.u, data);
    let jumps = interior_jumps(mesh, &disc.space, &solution.u, &data.coefficient);
    let (b1, b2) = boundary_residuals(mesh, disc, solution, data, rule)?;
    let u0 = BemDensity::trace(disc.trace_space, solution.u0.clone())?;
    let osc = oscillation(&disc.bnd, data, &u0);
    Ok(EstimatorReport::total(volume, jumps, b1, b2, osc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::{BemQuadrature, TraceSpace};
    use crate::benchmark::{benchmark_zshape, linear_reproduction, zero_data};
    use crate::coupling::{solve_level, DataMethod};
    use crate::fem::Coefficient;
    use crate::mesh::create_z_shape_initial;
    use std::sync::Arc;

    fn solve(mesh: &VolumeMesh, data: &TransmissionData, p: usize, q: usize) -> (Discretization, CoupledSolution) {
        let disc = Discretization::new(mesh, p, q);
        let (_, sol) = solve_level(mesh, &disc, data, DataMethod::Nodal, &BemQuadrature::default()).unwrap();
        (disc, sol)
    }

    #[test]
    fn p1_volume_residual_vanishes_for_harmonic_problems() {
        let (mesh, data) = benchmark_zshape();
        let (disc, sol) = solve(&mesh, &data, 1, 0);
        assert!(volume_residual(&mesh, &disc.space, &sol.u, &data).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_on_unit_triangle() {
        let mesh = VolumeMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![[0, 1], [1, 2], [2, 0]]).unwrap();
        let space = FemSpace::new(&mesh, 2);
        let u = space.interpolate(|x| x[0] * x[0]);
        let vals = volume_residual(&mesh, &space, &u, &zero_data());
        assert!((vals[0] - 1.0).abs() < 1e-12);
        // a manufactured source cancels the residual
        let mut data = zero_data();
        data.f = Arc::new(|_| -2.0);
        assert!(volume_residual(&mesh, &space, &u, &data)[0].abs() < 1e-20);
    }

    #[test]
    fn jump_across_a_unit_edge() {
        // two triangles sharing the edge x = 0 of length 1
        let mesh = VolumeMesh::new(
            vec![[0.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]],
            vec![[0, 1, 2], [1, 0, 3]],
            vec![[2, 0], [0, 3], [3, 1], [1, 2]],
        )
        .unwrap();
        let space = FemSpace::new(&mesh, 1);
        // U = max(x, 0): gradient (1, 0) on the right, (0, 0) on the left
        let u = space.interpolate(|x| x[0].max(0.0));
        let j = interior_jumps(&mesh, &space, &u, &Coefficient::identity());
        assert_eq!(j.len(), 1);
        assert!((j[0] - 1.0).abs() < 1e-14);
        let j2 = interior_jumps(&mesh, &space, &u, &Coefficient::constant([[2.0, 0.0], [0.0, 2.0]]));
        assert!((j2[0] - 4.0).abs() < 1e-13);
        let lin = space.interpolate(|x| 3.0 * x[0] - x[1]);
        assert!(interior_jumps(&mesh, &space, &lin, &Coefficient::identity())[0] < 1e-28);
    }

    #[test]
    fn reproduced_solution_has_no_boundary_residual() {
        let (mesh, data) = linear_reproduction();
        let mesh = mesh.refine_uniform().unwrap();
        for (p, q) in [(1, 0), (2, 1)] {
            let (disc, sol) = solve(&mesh, &data, p, q);
            let (b1, b2) = boundary_residuals(&mesh, &disc, &sol, &data, &boundary_rule(BOUNDARY_NODES)).unwrap();
            assert!(b1.iter().chain(&b2).all(|v| v.sqrt() < 1e-8), "{:?}", b1.iter().cloned().fold(0.0, f64::max));
        }
    }

    #[test]
    fn zero_problem_has_zero_estimator() {
        let mesh = create_z_shape_initial();
        let (disc, sol) = solve(&mesh, &zero_data(), 1, 0);
        let rep = estimate(&mesh, &disc, &sol, &zero_data()).unwrap();
        assert_eq!(rep.rho(), 0.0);
    }

    #[test]
    fn oscillation_of_quadratic_data() {
        // u0 = x^2 on the segment [0, h] x {0}: osc^2 = h^4 / 3
        let h = 0.2;
        let bnd = BoundaryMesh::from_polygon(&[[0.0, 0.0], [h, 0.0], [0.0, h]]);
        let mut data = zero_data();
        data.u0 = Arc::new(|x| x[0] * x[0]);
        data.u0_grad = Arc::new(|x| [2.0 * x[0], 0.0]);
        let u0 = crate::coupling::approximate_dirichlet(&data.u0, true, &bnd, 1, DataMethod::Nodal).unwrap();
        let osc = oscillation(&bnd, &data, &BemDensity::trace(TraceSpace::new(1, &bnd), u0).unwrap());
        assert!((osc[0] - h.powi(4) / 3.0).abs() < 1e-15);
        // discrete data are reproduced exactly
        data.u0 = Arc::new(|x| x[0] - 2.0 * x[1]);
        data.u0_grad = Arc::new(|_| [1.0, -2.0]);
        let u0 = crate::coupling::approximate_dirichlet(&data.u0, true, &bnd, 1, DataMethod::Nodal).unwrap();
        let osc = oscillation(&bnd, &data, &BemDensity::trace(TraceSpace::new(1, &bnd), u0).unwrap());
        assert!(osc.iter().all(|&v| v < 1e-28));
    }

    #[test]
    fn totals_are_additive() {
        let rep = EstimatorReport::total(vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]);
        assert_eq!(rep.rho2(), 15.0);
        let ids: Vec<f64> = rep.indicators().iter().map(|x| x.1).collect();
        assert_eq!(ids, vec![1.0, 2.0, 12.0]);
        assert_eq!(EstimatorReport::total(vec![0.0], vec![], vec![0.0], vec![0.0], vec![0.0]).rho(), 0.0);
    }

    #[test]
    fn benchmark_estimator_decreases_under_uniform_refinement() {
        let (mesh, data) = benchmark_zshape();
        let fine = mesh.refine_uniform().unwrap();
        let (d0, s0) = solve(&mesh, &data, 1, 0);
        let (d1, s1) = solve(&fine, &data, 1, 0);
        let r0 = estimate(&mesh, &d0, &s0, &data).unwrap();
        let r1 = estimate(&fine, &d1, &s1, &data).unwrap();
        assert!(r0.rho_gamma2() > 0.0 && r0.rho_omega2() > 0.0);
        assert!(r1.rho() < r0.rho());
        let total: f64 = r1.indicators().iter().map(|x| x.1).sum();
        assert!((total - r1.rho2()).abs() <= 1e-12 * r1.rho2());
    }

    #[test]
    fn indicators_scale_with_the_data() {
        let (mesh, data) = benchmark_zshape();
        let t = -2.5;
        let scaled = data.scaled(t);
        let (d, s) = solve(&mesh, &data, 2, 1);
        let (_, st) = solve(&mesh, &scaled, 2, 1);
        let a = estimate(&mesh, &d, &s, &data).unwrap().indicators();
        let b = estimate(&mesh, &d, &st, &scaled).unwrap().indicators();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert!((y.sqrt() - t.abs() * x.sqrt()).abs() <= 1e-12 * x.sqrt().max(1e-300) + 1e-15, "{x} {y}");
        }
    }

    #[test]
    fn boundary_quadrature_is_stable_under_node_doubling() {
        let (mut mesh, data) = benchmark_zshape();
        for _ in 0..2 {
            for (p, q) in [(1, 0), (2, 1)] {
                let (d, s) = solve(&mesh, &data, p, q);
                let a = estimate_with_rule(&mesh, &d, &s, &data, &boundary_rule(BOUNDARY_NODES)).unwrap();
                let b = estimate_with_rule(&mesh, &d, &s, &data, &boundary_rule(2 * BOUNDARY_NODES)).unwrap();
                let (ga, gb) = (a.rho_gamma2().sqrt(), b.rho_gamma2().sqrt());
                assert!((ga - gb).abs() < 0.01 * gb, "{ga} vs {gb}");
            }
            mesh = mesh.refine_uniform().unwrap();
        }
    }
}
