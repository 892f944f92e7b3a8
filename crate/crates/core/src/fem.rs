//! Continuous Lagrange elements of degree 1 and 2 on triangles.

use std::sync::Arc;

use rayon::prelude::*;

use crate::mesh::{dist, Point, VolumeMesh};
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Symmetric diffusion coefficient with eigenvalue bounds.
#[derive(Clone)]
pub struct Coefficient {
    value: MatrixField,
    /// Column divergence `d_j = sum_i d a_ij / d x_i`; absent means zero.
    divergence: Option<VectorField>,
    pub c_min: f64,
    pub c_max: f64,
    pub lipschitz: f64,
    pub is_identity: bool,
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coefficient")
            .field("c_min", &self.c_min)
            .field("c_max", &self.c_max)
            .field("is_identity", &self.is_identity)
            .finish()
    }
}

fn sym_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let rad = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).sqrt();
    (mean - rad, mean + rad)
}

impl Coefficient {
    pub fn identity() -> Self {
        Self {
            value: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
            divergence: None,
            c_min: 1.0,
            c_max: 1.0,
            lipschitz: 1.0,
            is_identity: true,
        }
    }

    pub fn constant(m: [[f64; 2]; 2]) -> Self {
        let (lo, hi) = sym_eigenvalues(m);
        Self { value: Arc::new(move |_| m), divergence: None, c_min: lo, c_max: hi, lipschitz: hi.sqrt(), is_identity: false }
    }

    /// Variable coefficient. `divergence` returns `sum_i d a_ij / d x_i` for `j = 0, 1`.
    pub fn field(value: MatrixField, divergence: VectorField, c_min: f64, c_max: f64) -> Self {
        Self { value, divergence: Some(divergence), c_min, c_max, lipschitz: c_max.sqrt(), is_identity: false }
    }

    pub fn at(&self, x: Point) -> [[f64; 2]; 2] {
        (self.value)(x)
    }

    pub fn divergence_at(&self, x: Point) -> [f64; 2] {
        self.divergence.as_ref().map_or([0.0, 0.0], |d| d(x))
    }

    pub fn apply(&self, x: Point, g: [f64; 2]) -> [f64; 2] {
        let a = self.at(x);
        [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let value = self.value.clone();
        let divergence = self.divergence.clone();
        Self {
            value: Arc::new(move |x| value(x).map(|r| r.map(|v| factor * v))),
            divergence: divergence.map(|d| -> VectorField { Arc::new(move |x| d(x).map(|v| factor * v)) }),
            c_min: factor * self.c_min,
            c_max: factor * self.c_max,
            lipschitz: factor.sqrt() * self.lipschitz,
            is_identity: self.is_identity && factor == 1.0,
        }
    }

    /// Checks symmetry and the eigenvalue bounds at the triangle centroids.
    pub fn validate(&self, mesh: &VolumeMesh) -> bool {
        (0..mesh.num_triangles()).all(|t| {
            let p = mesh.triangle_points(t);
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let a = self.at(c);
            let (lo, hi) = sym_eigenvalues(a);
            (a[0][1] - a[1][0]).abs() <= 1e-14 * hi.abs().max(1.0)
                && lo >= self.c_min * (1.0 - 1e-12)
                && hi <= self.c_max * (1.0 + 1e-12)
                && self.c_min > 0.0
        })
    }
}

/// Affine data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub points: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(points: [Point; 3]) -> Self {
        let [a, b, c] = points;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
        let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self { points, area: 0.5 * det, grad_lambda: [g0, g1, g2] }
    }

    pub fn point(&self, l: [f64; 3]) -> Point {
        let p = &self.points;
        [l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]]
    }

    /// Barycentric coordinates of `x`.
    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let a = self.points[0];
        let d = [x[0] - a[0], x[1] - a[1]];
        let l1 = self.grad_lambda[1][0] * d[0] + self.grad_lambda[1][1] * d[1];
        let l2 = self.grad_lambda[2][0] * d[0] + self.grad_lambda[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Local shape functions. P2 order: three vertices, then the midpoints of edges
/// `(0,1)`, `(1,2)`, `(2,0)`.
pub fn shape_values(degree: usize, l: [f64; 3]) -> Vec<f64> {
    match degree {
        1 => l.to_vec(),
        2 => vec![
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
        _ => unreachable!("unsupported degree {degree}"),
    }
}

pub fn shape_gradients(degree: usize, geo: &ElementGeometry, l: [f64; 3]) -> Vec<[f64; 2]> {
    let g = &geo.grad_lambda;
    match degree {
        1 => g.to_vec(),
        2 => {
            let mut out = Vec::with_capacity(6);
            for i in 0..3 {
                let s = 4.0 * l[i] - 1.0;
                out.push([s * g[i][0], s * g[i][1]]);
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                out.push([4.0 * (l[j] * g[i][0] + l[i] * g[j][0]), 4.0 * (l[j] * g[i][1] + l[i] * g[j][1])]);
            }
            out
        }
        _ => unreachable!("unsupported degree {degree}"),
    }
}

/// Hessians of the local shape functions (constant per element).
pub fn shape_hessians(degree: usize, geo: &ElementGeometry) -> Vec<[[f64; 2]; 2]> {
    let g = &geo.grad_lambda;
    let outer = |a: [f64; 2], b: [f64; 2], s: f64| {
        [[s * (a[0] * b[0] + b[0] * a[0]), s * (a[0] * b[1] + b[0] * a[1])], [s * (a[1] * b[0] + b[1] * a[0]), s * (a[1] * b[1] + b[1] * a[1])]]
    };
    match degree {
        1 => vec![[[0.0; 2]; 2]; 3],
        2 => {
            let mut out = Vec::with_capacity(6);
            for i in 0..3 {
                out.push(outer(g[i], g[i], 2.0));
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                out.push(outer(g[i], g[j], 4.0));
            }
            out
        }
        _ => unreachable!("unsupported degree {degree}"),
    }
}

/// Global Lagrange space `S^p` on a volume mesh.
#[derive(Debug, Clone)]
pub struct FemSpace {
    degree: usize,
    num_dofs: usize,
    element_dofs: Vec<Vec<usize>>,
    dof_points: Vec<Point>,
    /// Trace DOFs in boundary order: segment start vertices, then (p = 2) segment midpoints.
    boundary_dofs: Vec<usize>,
}

impl FemSpace {
    pub fn new(mesh: &VolumeMesh, degree: usize) -> Self {
        assert!(degree == 1 || degree == 2, "only p = 1, 2 are supported");
        let nv = mesh.num_vertices();
        let topo = mesh.topology();
        let mut dof_points = mesh.vertices().to_vec();
        let mut element_dofs = Vec::with_capacity(mesh.num_triangles());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut dofs = tri.to_vec();
            if degree == 2 {
                dofs.extend(topo.tri_edges[t].iter().map(|&e| nv + e));
            }
            element_dofs.push(dofs);
        }
        let mut boundary_dofs: Vec<usize> = mesh.boundary().iter().map(|s| s[0]).collect();
        if degree == 2 {
            for e in &topo.edges {
                dof_points.push(crate::mesh::midpoint(mesh.vertices()[e[0]], mesh.vertices()[e[1]]));
            }
            boundary_dofs.extend(topo.segment_edges.iter().map(|&e| nv + e));
        }
        let num_dofs = if degree == 1 { nv } else { nv + mesh.num_edges() };
        Self { degree, num_dofs, element_dofs, dof_points, boundary_dofs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.element_dofs[t]
    }

    pub fn dof_points(&self) -> &[Point] {
        &self.dof_points
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_points.iter().map(|&x| f(x)).collect()
    }

    /// Restriction of a coefficient vector to the trace DOFs.
    pub fn trace(&self, coeffs: &[f64]) -> Vec<f64> {
        self.boundary_dofs.iter().map(|&d| coeffs[d]).collect()
    }

    /// Value and gradient of the discrete function at barycentric point `l` of triangle `t`.
    pub fn evaluate(&self, mesh: &VolumeMesh, coeffs: &[f64], t: usize, l: [f64; 3]) -> (f64, [f64; 2]) {
        let geo = ElementGeometry::new(mesh.triangle_points(t));
        let dofs = self.element_dofs(t);
        let vals = shape_values(self.degree, l);
        let grads = shape_gradients(self.degree, &geo, l);
        let mut u = 0.0;
        let mut g = [0.0; 2];
        for (k, &d) in dofs.iter().enumerate() {
            u += coeffs[d] * vals[k];
            g[0] += coeffs[d] * grads[k][0];
            g[1] += coeffs[d] * grads[k][1];
        }
        (u, g)
    }
}

fn assembly_rule(degree: usize) -> &'static TriangleRule {
    if degree == 1 {
        TriangleRule::degree2()
    } else {
        TriangleRule::degree5()
    }
}

/// Local stiffness matrix of one element with the coefficient sampled at quadrature points.
pub fn local_stiffness(degree: usize, geo: &ElementGeometry, coefficient: &Coefficient) -> Vec<Vec<f64>> {
    let n = if degree == 1 { 3 } else { 6 };
    let mut k = vec![vec![0.0; n]; n];
    for (l, w) in assembly_rule(degree).iter() {
        let x = geo.point(l);
        let grads = shape_gradients(degree, geo, l);
        let scale = w * geo.area;
        for j in 0..n {
            let ag = coefficient.apply(x, grads[j]);
            for i in 0..n {
                k[i][j] += scale * (ag[0] * grads[i][0] + ag[1] * grads[i][1]);
            }
        }
    }
    k
}

/// Stiffness matrix `<A grad phi_j, grad phi_i>`.
pub fn assemble_stiffness(mesh: &VolumeMesh, space: &FemSpace, coefficient: &Coefficient) -> CsrMatrix {
    let locals: Vec<Vec<Vec<f64>>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| local_stiffness(space.degree(), &ElementGeometry::new(mesh.triangle_points(t)), coefficient))
        .collect();
    let mut triplets = Vec::with_capacity(locals.len() * locals.first().map_or(0, |k| k.len().pow(2)));
    for (t, k) in locals.iter().enumerate() {
        let dofs = space.element_dofs(t);
        for (i, row) in k.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                triplets.push((dofs[i], dofs[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(space.num_dofs(), space.num_dofs(), triplets)
}

/// Load vector `<f, phi_i>` with the degree-5 rule.
pub fn assemble_load(mesh: &VolumeMesh, space: &FemSpace, f: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let locals: Vec<Vec<f64>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let geo = ElementGeometry::new(mesh.triangle_points(t));
            let mut local = vec![0.0; space.element_dofs(t).len()];
            for (l, w) in TriangleRule::degree5().iter() {
                let fx = f(geo.point(l)) * w * geo.area;
                for (k, v) in shape_values(space.degree(), l).into_iter().enumerate() {
                    local[k] += fx * v;
                }
            }
            local
        })
        .collect();
    let mut out = vec![0.0; space.num_dofs()];
    for (t, local) in locals.iter().enumerate() {
        for (k, &d) in space.element_dofs(t).iter().enumerate() {
            out[d] += local[k];
        }
    }
    out
}

/// Squared `L^2` and `H^1`-seminorm errors split per element.
pub fn h1_error_parts(
    mesh: &VolumeMesh,
    space: &FemSpace,
    coeffs: &[f64],
    exact: &(dyn Fn(Point) -> f64 + Sync),
    exact_grad: &(dyn Fn(Point) -> [f64; 2] + Sync),
    singular_points: &[Point],
) -> Vec<(f64, f64)> {
    let duffy: Vec<TriangleRule> = (0..3).map(|apex| TriangleRule::duffy(12, apex)).collect();
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let geo = ElementGeometry::new(mesh.triangle_points(t));
            let tol = 1e-12 * mesh.diameter(t);
            let apex = (0..3).find(|&k| singular_points.iter().any(|&s| dist(s, geo.points[k]) <= tol));
            let rule = match apex {
                Some(k) => &duffy[k],
                None => TriangleRule::degree8(),
            };
            let dofs = space.element_dofs(t);
            let (mut l2, mut semi) = (0.0, 0.0);
            for (l, w) in rule.iter() {
                let x = geo.point(l);
                let vals = shape_values(space.degree(), l);
                let grads = shape_gradients(space.degree(), &geo, l);
                let mut u = 0.0;
                let mut g = [0.0; 2];
                for (k, &d) in dofs.iter().enumerate() {
                    u += coeffs[d] * vals[k];
                    g[0] += coeffs[d] * grads[k][0];
                    g[1] += coeffs[d] * grads[k][1];
                }
                let eg = exact_grad(x);
                l2 += w * (exact(x) - u).powi(2);
                semi += w * ((eg[0] - g[0]).powi(2) + (eg[1] - g[1]).powi(2));
            }
            (l2 * geo.area, semi * geo.area)
        })
        .collect()
}

/// `(||u - U||_{L^2}^2 + ||grad u - grad U||_{L^2}^2)^{1/2}`.
///
/// Triangles with a vertex in `singular_points` are integrated with a collapsed
/// rule centred at that vertex.
pub fn h1_error(
    mesh: &VolumeMesh,
    space: &FemSpace,
    coeffs: &[f64],
    exact: &(dyn Fn(Point) -> f64 + Sync),
    exact_grad: &(dyn Fn(Point) -> [f64; 2] + Sync),
    singular_points: &[Point],
) -> f64 {
    h1_error_parts(mesh, space, coeffs, exact, exact_grad, singular_points)
        .iter()
        .map(|(a, b)| a + b)
        .sum::<f64>()
        .sqrt()
}

/// `div(A grad U)` at barycentric point `l` of triangle `t`.
pub fn discrete_divergence(
    mesh: &VolumeMesh,
    space: &FemSpace,
    coeffs: &[f64],
    coefficient: &Coefficient,
    t: usize,
    l: [f64; 3],
) -> f64 {
    if space.degree() == 1 && coefficient.divergence.is_none() {
        return 0.0;
    }
    let geo = ElementGeometry::new(mesh.triangle_points(t));
    let x = geo.point(l);
    let dofs = space.element_dofs(t);
    let hess = shape_hessians(space.degree(), &geo);
    let grads = shape_gradients(space.degree(), &geo, l);
    let a = coefficient.at(x);
    let d = coefficient.divergence_at(x);
    let mut out = 0.0;
    for (k, &dof) in dofs.iter().enumerate() {
        let h = hess[k];
        let second = a[0][0] * h[0][0] + a[0][1] * h[0][1] + a[1][0] * h[1][0] + a[1][1] * h[1][1];
        out += coeffs[dof] * (second + d[0] * grads[k][0] + d[1] * grads[k][1]);
    }
    out
}
