//! Symmetric FEM-BEM coupling with discrete Dirichlet data.
//!
//! With `E` the trace map from volume DOFs to boundary DOFs and
//! `B = K - M/2` the Galerkin matrix of `K - 1/2`, the discrete system reads
//!
//! ```text
//! [ A + E^T W E   E^T B^T ] [U  ]   [ F + E^T (g + W U0) ]
//! [ -B E          V       ] [Phi] = [ -B U0              ]
//! ```
//!
//! and is solved through the Schur complement `S = W + B^T V^-1 B` of the boundary block.

use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::bem::{self, BemMatrices, BemQuadrature, BemSpaceP, TraceSpace};
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, Coefficient, FemSpace, ScalarField, VectorField};
use crate::mesh::{BoundaryMesh, Point, VolumeMesh};
use crate::quadrature::{gauss, graded, graded_both, LineRule};
use crate::sparse::{CsrMatrix, SparseCholesky};

/// Field on `Gamma` depending on the point and the outward unit normal there.
pub type BoundaryField = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// Exact solution pair used for error reporting.
#[derive(Clone)]
pub struct ExactSolution {
    pub u_int: ScalarField,
    pub grad_u_int: VectorField,
    pub u_ext: ScalarField,
    /// `phi = d_nu u^ext` on `Gamma`.
    pub phi: BoundaryField,
    /// Points where `grad u^int` is singular.
    pub singular_points: Vec<Point>,
}

/// Data of the transmission problem.
#[derive(Clone)]
pub struct TransmissionData {
    pub f: ScalarField,
    /// Dirichlet jump `u0`, evaluated on `Gamma`.
    pub u0: ScalarField,
    /// Gradient of an extension of `u0`; its tangential part is `d_s u0`.
    pub u0_grad: VectorField,
    /// Whether `u0` is continuous along `Gamma` (required for nodal interpolation).
    pub u0_continuous: bool,
    /// Neumann jump `phi0`.
    pub phi0: BoundaryField,
    pub coefficient: Coefficient,
    pub exact: Option<ExactSolution>,
}

impl TransmissionData {
    /// The same problem with `f`, `u0` and `phi0` multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let (f, u0, g, phi0) = (self.f.clone(), self.u0.clone(), self.u0_grad.clone(), self.phi0.clone());
        Self {
            f: Arc::new(move |x| t * f(x)),
            u0: Arc::new(move |x| t * u0(x)),
            u0_grad: Arc::new(move |x| g(x).map(|v| t * v)),
            u0_continuous: self.u0_continuous,
            phi0: Arc::new(move |x, n| t * phi0(x, n)),
            coefficient: self.coefficient.clone(),
            exact: None,
        }
    }

    /// `int_Omega f + int_Gamma phi0`, which vanishes for compatible data.
    pub fn compatibility(&self, mesh: &VolumeMesh) -> f64 {
        let vol: f64 = (0..mesh.num_triangles())
            .map(|t| {
                let geo = crate::fem::ElementGeometry::new(mesh.triangle_points(t));
                crate::quadrature::TriangleRule::degree8().iter().map(|(l, w)| w * (self.f)(geo.point(l))).sum::<f64>() * geo.area
            })
            .sum();
        let bnd = BoundaryMesh::from_volume(mesh);
        let surf: f64 = bnd
            .segments
            .iter()
            .map(|s| {
                // two halves, each graded towards its own endpoint without rounding the node
                let rule = graded(16, 25, 0.15);
                let half = |from: Point, to: Point| {
                    rule.iter()
                        .map(|(t, w)| w * (self.phi0)([from[0] + 0.5 * t * (to[0] - from[0]), from[1] + 0.5 * t * (to[1] - from[1])], s.normal))
                        .sum::<f64>()
                };
                0.5 * s.length * (half(s.a, s.b) + half(s.b, s.a))
            })
            .sum();
        vol + surf
    }
}

/// Operator producing the discrete Dirichlet data `U0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataMethod {
    #[default]
    Nodal,
    ScottZhang,
    L2Projection,
}

impl DataMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Nodal => "nodal",
            Self::ScottZhang => "scott_zhang",
            Self::L2Projection => "l2_projection",
        }
    }
}

impl FromStr for DataMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodal" => Ok(Self::Nodal),
            "scott_zhang" => Ok(Self::ScottZhang),
            "l2_projection" => Ok(Self::L2Projection),
            other => Err(Error::Config(format!("unknown data method '{other}'"))),
        }
    }
}

impl std::fmt::Display for DataMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rule for boundary data integrals, graded towards both endpoints because data
/// may be singular at corners.
fn data_rule() -> &'static LineRule {
    static RULE: OnceLock<LineRule> = OnceLock::new();
    RULE.get_or_init(|| graded_both(8, 12, 0.15))
}

fn local_mass(space: &TraceSpace) -> DMatrix<f64> {
    let basis = space.local_basis();
    let n = basis.len();
    DMatrix::from_fn(n, n, |a, b| gauss(4).iter().map(|(t, w)| w * bem::polyval(&basis[a], t) * bem::polyval(&basis[b], t)).sum())
}

/// `int_E u0 v_b ds` for the local basis functions of segment `j`.
fn local_moments(u0: &ScalarField, bnd: &BoundaryMesh, space: &TraceSpace, j: usize) -> Vec<f64> {
    let seg = &bnd.segments[j];
    space
        .local_basis()
        .iter()
        .map(|b| data_rule().iter().map(|(t, w)| w * u0(seg.point(t)) * bem::polyval(b, t)).sum::<f64>() * seg.length)
        .collect()
}

/// Coefficients of `U0` in `S^p` on the boundary mesh.
pub fn approximate_dirichlet(
    u0: &ScalarField,
    continuous: bool,
    bnd: &BoundaryMesh,
    p: usize,
    method: DataMethod,
) -> Result<Vec<f64>> {
    let space = TraceSpace::new(p, bnd);
    let m = bnd.len();
    let mut out = vec![0.0; space.dim()];
    match method {
        DataMethod::Nodal => {
            if !continuous {
                return Err(Error::Config("nodal interpolation requires continuous Dirichlet data".into()));
            }
            for (j, seg) in bnd.segments.iter().enumerate() {
                out[j] = u0(seg.a);
                if p == 2 {
                    out[m + j] = u0(seg.point(0.5));
                }
            }
        }
        DataMethod::ScottZhang => {
            // each node takes its dual functional from the segment starting at it
            // (vertices) or containing it (midpoints)
            let inv = local_mass(&space).try_inverse().expect("local mass matrix is invertible");
            for (j, seg) in bnd.segments.iter().enumerate() {
                let mom = local_moments(u0, bnd, &space, j);
                let coef = |a: usize| (0..mom.len()).map(|b| inv[(a, b)] * mom[b]).sum::<f64>() / seg.length;
                out[j] = coef(0);
                if p == 2 {
                    out[m + j] = coef(2);
                }
            }
        }
        DataMethod::L2Projection => {
            let local = local_mass(&space);
            let mut triplets = Vec::new();
            let mut rhs = vec![0.0; space.dim()];
            for (j, seg) in bnd.segments.iter().enumerate() {
                let dofs = space.segment_dofs(j);
                for (a, &da) in dofs.iter().enumerate() {
                    for (b, &db) in dofs.iter().enumerate() {
                        triplets.push((da, db, seg.length * local[(a, b)]));
                    }
                }
                for (a, v) in local_moments(u0, bnd, &space, j).into_iter().enumerate() {
                    rhs[dofs[a]] += v;
                }
            }
            out = SparseCholesky::factor(space.dim(), &triplets)?.solve(&rhs);
        }
    }
    Ok(out)
}

/// `<phi0, v_i>` over the trace basis.
fn neumann_load(data: &TransmissionData, bnd: &BoundaryMesh, space: &TraceSpace) -> Vec<f64> {
    let mut out = vec![0.0; space.dim()];
    for (j, seg) in bnd.segments.iter().enumerate() {
        for (dof, b) in space.segment_dofs(j).into_iter().zip(space.local_basis()) {
            out[dof] += data_rule().iter().map(|(t, w)| w * (data.phi0)(seg.point(t), seg.normal) * bem::polyval(&b, t)).sum::<f64>()
                * seg.length;
        }
    }
    out
}

/// Assembled block system.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub stiffness: CsrMatrix,
    pub bem: BemMatrices,
    /// `B = K - M / 2`.
    pub b: DMatrix<f64>,
    /// Volume DOF of each trace DOF.
    pub trace_dofs: Vec<usize>,
    pub rhs_volume: Vec<f64>,
    pub rhs_boundary: Vec<f64>,
    pub u0: Vec<f64>,
    pub num_fem: usize,
}

/// Discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub u0: Vec<f64>,
    /// `||M x - rhs|| / ||rhs||` of the block system (absolute if `rhs = 0`).
    pub residual: f64,
}

impl CoupledSolution {
    /// Boundary values `U0 - U|_Gamma` in trace coordinates.
    pub fn dirichlet_defect(&self, trace_dofs: &[usize]) -> Vec<f64> {
        trace_dofs.iter().zip(&self.u0).map(|(&d, &g)| g - self.u[d]).collect()
    }
}

/// Diameter of the domain bounded by `bnd`.
pub fn boundary_diameter(bnd: &BoundaryMesh) -> f64 {
    let pts: Vec<Point> = bnd.segments.iter().map(|s| s.a).collect();
    let mut d: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            d = d.max(crate::mesh::dist(*a, *b));
        }
    }
    d
}

/// Assembles the coupled system for given discrete Dirichlet data `u0`.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    mesh: &VolumeMesh,
    bnd: &BoundaryMesh,
    space: &FemSpace,
    q: usize,
    data: &TransmissionData,
    u0: &[f64],
    quad: &BemQuadrature,
) -> Result<CoupledSystem> {
    let p = space.degree();
    let trace = TraceSpace::new(p, bnd);
    if u0.len() != trace.dim() {
        return Err(Error::Dimension(format!("U0 has {} coefficients, trace space has {}", u0.len(), trace.dim())));
    }
    if bnd.len() != mesh.num_boundary_segments() {
        return Err(Error::Dimension("boundary mesh does not belong to the volume mesh".into()));
    }
    let diam = boundary_diameter(bnd);
    if diam >= 1.0 {
        return Err(Error::Config(format!("domain diameter {diam} must be below 1 for an elliptic single-layer operator")));
    }
    let stiffness = assemble_stiffness(mesh, space, &data.coefficient);
    let load = assemble_load(mesh, space, &*data.f);
    let mats = bem::assemble(bnd, q, p, quad);
    let b = &mats.k - &mats.mass * 0.5;
    let trace_dofs = space.boundary_dofs().to_vec();

    let u0v = DVector::from_column_slice(u0);
    let g = DVector::from_vec(neumann_load(data, bnd, &trace)) + &mats.w * &u0v;
    let mut rhs_volume = load;
    for (k, &d) in trace_dofs.iter().enumerate() {
        rhs_volume[d] += g[k];
    }
    let rhs_boundary = -(&b * &u0v);
    Ok(CoupledSystem {
        stiffness,
        bem: mats,
        b,
        trace_dofs,
        rhs_volume,
        rhs_boundary: rhs_boundary.as_slice().to_vec(),
        u0: u0.to_vec(),
        num_fem: space.num_dofs(),
    })
}

impl CoupledSystem {
    pub fn num_boundary(&self) -> usize {
        self.bem.v.nrows()
    }

    /// Applies the block matrix to `(u, phi)`.
    pub fn apply(&self, u: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eu = DVector::from_iterator(self.trace_dofs.len(), self.trace_dofs.iter().map(|&d| u[d]));
        let phiv = DVector::from_column_slice(phi);
        let mut top = self.stiffness.mul_vec(u);
        let bnd_part = &self.bem.w * &eu + self.b.transpose() * &phiv;
        for (k, &d) in self.trace_dofs.iter().enumerate() {
            top[d] += bnd_part[k];
        }
        let bottom = &self.bem.v * &phiv - &self.b * &eu;
        (top, bottom.as_slice().to_vec())
    }

    /// Dense copy of the full block matrix (for debugging and small tests).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, m) = (self.num_fem, self.num_boundary());
        let mut out = DMatrix::zeros(n + m, n + m);
        for c in 0..n + m {
            let mut x = vec![0.0; n + m];
            x[c] = 1.0;
            let (top, bottom) = self.apply(&x[..n], &x[n..]);
            for (r, v) in top.into_iter().chain(bottom).enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn solve(&self) -> Result<CoupledSolution> {
        let v_chol = self.bem.v.clone().cholesky().ok_or_else(|| Error::Singular("single-layer matrix is not positive definite".into()))?;
        let vinv_b = v_chol.solve(&self.b);
        let schur = &self.bem.w + self.b.transpose() * &vinv_b;
        let schur = (&schur + schur.transpose()) * 0.5;

        let mut triplets: Vec<(usize, usize, f64)> = self.stiffness.triplets().collect();
        for (a, &da) in self.trace_dofs.iter().enumerate() {
            for (b, &db) in self.trace_dofs.iter().enumerate() {
                triplets.push((da, db, schur[(a, b)]));
            }
        }
        let u0v = DVector::from_column_slice(&self.u0);
        let su0 = &schur * &u0v - &self.bem.w * &u0v;
        let mut rhs = self.rhs_volume.clone();
        for (k, &d) in self.trace_dofs.iter().enumerate() {
            rhs[d] += su0[k];
        }
        let u = SparseCholesky::factor(self.num_fem, &triplets)?.solve(&rhs);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite volume solution".into()));
        }
        let eu = DVector::from_iterator(self.trace_dofs.len(), self.trace_dofs.iter().map(|&d| u[d]));
        let phi = &vinv_b * (eu - &u0v);
        let phi = phi.as_slice().to_vec();

        let (top, bottom) = self.apply(&u, &phi);
        let res2: f64 = top.iter().zip(&self.rhs_volume).chain(bottom.iter().zip(&self.rhs_boundary)).map(|(a, b)| (a - b).powi(2)).sum();
        let rhs2: f64 = self.rhs_volume.iter().chain(&self.rhs_boundary).map(|v| v * v).sum();
        let residual = if rhs2 > 0.0 { (res2 / rhs2).sqrt() } else { res2.sqrt() };
        Ok(CoupledSolution { u, phi, u0: self.u0.clone(), residual })
    }
}

/// Spaces and operators for one mesh level.
pub struct Discretization {
    pub bnd: BoundaryMesh,
    pub space: FemSpace,
    pub density_space: BemSpaceP,
    pub trace_space: TraceSpace,
}

impl Discretization {
    pub fn new(mesh: &VolumeMesh, p: usize, q: usize) -> Self {
        let bnd = BoundaryMesh::from_volume(mesh);
        let space = FemSpace::new(mesh, p);
        Self { density_space: BemSpaceP::new(q, &bnd), trace_space: TraceSpace::new(p, &bnd), bnd, space }
    }
}

/// Builds the data approximation, assembles and solves on one mesh.
pub fn solve_level(
    mesh: &VolumeMesh,
    disc: &Discretization,
    data: &TransmissionData,
    method: DataMethod,
    quad: &BemQuadrature,
) -> Result<(CoupledSystem, CoupledSolution)> {
    let u0 = approximate_dirichlet(&data.u0, data.u0_continuous, &disc.bnd, disc.space.degree(), method)?;
    let system = assemble(mesh, &disc.bnd, &disc.space, disc.density_space.degree, data, &u0, quad)?;
    let solution = system.solve()?;
    Ok((system, solution))
}
