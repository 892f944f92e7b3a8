//! Boundary element spaces and the 2D Laplace boundary integral operators.

pub mod assembly;
pub mod kernel;
pub mod pointwise;

pub use assembly::{assemble, assemble_k, assemble_mass, assemble_v, assemble_w, BemMatrices, BemQuadrature};
pub use pointwise::{
    eval_exterior, eval_grad_k, eval_grad_v, eval_k, eval_kadj, eval_v, eval_w, ExteriorValue,
};

use crate::error::{Error, Result};
use crate::mesh::BoundaryMesh;

/// Local basis functions on a segment, written as coefficients of `1, tau, tau^2`.
pub type PanelPolynomial = [f64; 3];

/// Discontinuous piecewise polynomials `P^q` of degree `q` in `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BemSpaceP {
    pub degree: usize,
    pub num_segments: usize,
}

impl BemSpaceP {
    pub fn new(degree: usize, bnd: &BoundaryMesh) -> Self {
        assert!(degree <= 1, "only q = 0, 1 are supported");
        Self { degree, num_segments: bnd.len() }
    }

    pub fn dim(&self) -> usize {
        (self.degree + 1) * self.num_segments
    }

    pub fn segment_dofs(&self, j: usize) -> Vec<usize> {
        match self.degree {
            0 => vec![j],
            _ => vec![2 * j, 2 * j + 1],
        }
    }

    /// Local basis `{1}` or `{1 - tau, tau}`.
    pub fn local_basis(&self) -> Vec<PanelPolynomial> {
        match self.degree {
            0 => vec![[1.0, 0.0, 0.0]],
            _ => vec![[1.0, -1.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }
}

/// Continuous piecewise polynomials `S^p` on the closed boundary curve.
///
/// Segment `j` carries the DOFs of its start vertex `j`, its end vertex
/// `(j + 1) % M` and, for `p = 2`, its midpoint `M + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceSpace {
    pub degree: usize,
    pub num_segments: usize,
}

impl TraceSpace {
    pub fn new(degree: usize, bnd: &BoundaryMesh) -> Self {
        assert!(degree == 1 || degree == 2, "only p = 1, 2 are supported");
        Self { degree, num_segments: bnd.len() }
    }

    pub fn dim(&self) -> usize {
        self.degree * self.num_segments
    }

    pub fn segment_dofs(&self, j: usize) -> Vec<usize> {
        let m = self.num_segments;
        match self.degree {
            1 => vec![j, (j + 1) % m],
            _ => vec![j, (j + 1) % m, m + j],
        }
    }

    pub fn local_basis(&self) -> Vec<PanelPolynomial> {
        match self.degree {
            1 => vec![[1.0, -1.0, 0.0], [0.0, 1.0, 0.0]],
            _ => vec![[1.0, -3.0, 2.0], [0.0, -1.0, 2.0], [0.0, 4.0, -4.0]],
        }
    }

    /// Local parameters of the Lagrange nodes matching `local_basis`.
    pub fn local_nodes(&self) -> Vec<f64> {
        match self.degree {
            1 => vec![0.0, 1.0],
            _ => vec![0.0, 1.0, 0.5],
        }
    }
}

/// Space a density lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensitySpace {
    Piecewise(BemSpaceP),
    Trace(TraceSpace),
}

impl DensitySpace {
    pub fn dim(&self) -> usize {
        match self {
            Self::Piecewise(s) => s.dim(),
            Self::Trace(s) => s.dim(),
        }
    }

    fn segment_dofs(&self, j: usize) -> Vec<usize> {
        match self {
            Self::Piecewise(s) => s.segment_dofs(j),
            Self::Trace(s) => s.segment_dofs(j),
        }
    }

    fn local_basis(&self) -> Vec<PanelPolynomial> {
        match self {
            Self::Piecewise(s) => s.local_basis(),
            Self::Trace(s) => s.local_basis(),
        }
    }
}

/// Coefficient vector over a boundary space.
#[derive(Debug, Clone, PartialEq)]
pub struct BemDensity {
    pub space: DensitySpace,
    pub coeffs: Vec<f64>,
}

impl BemDensity {
    pub fn new(space: DensitySpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::Dimension(format!("density has {} coefficients, space has {}", coeffs.len(), space.dim())));
        }
        Ok(Self { space, coeffs })
    }

    pub fn piecewise(space: BemSpaceP, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(DensitySpace::Piecewise(space), coeffs)
    }

    pub fn trace(space: TraceSpace, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(DensitySpace::Trace(space), coeffs)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { space: self.space, coeffs: self.coeffs.iter().map(|c| t * c).collect() }
    }

    /// Density restricted to segment `j` as a polynomial in the local parameter.
    pub fn panel_polynomial(&self, j: usize) -> PanelPolynomial {
        let mut out = [0.0; 3];
        for (dof, basis) in self.space.segment_dofs(j).into_iter().zip(self.space.local_basis()) {
            for k in 0..3 {
                out[k] += self.coeffs[dof] * basis[k];
            }
        }
        out
    }

    pub fn panel_polynomials(&self) -> Vec<PanelPolynomial> {
        (0..self.num_segments()).map(|j| self.panel_polynomial(j)).collect()
    }

    fn num_segments(&self) -> usize {
        match self.space {
            DensitySpace::Piecewise(s) => s.num_segments,
            DensitySpace::Trace(s) => s.num_segments,
        }
    }

    /// Arclength derivative, segment by segment.
    pub fn derivative_polynomials(&self, bnd: &BoundaryMesh) -> Vec<PanelPolynomial> {
        self.panel_polynomials().iter().zip(&bnd.segments).map(|(c, s)| derivative(c, s.length)).collect()
    }

    pub fn value(&self, j: usize, tau: f64) -> f64 {
        polyval(&self.panel_polynomial(j), tau)
    }
}

pub fn polyval(c: &PanelPolynomial, tau: f64) -> f64 {
    c[0] + tau * (c[1] + tau * c[2])
}

/// `d/ds` of a panel polynomial on a segment of length `h`.
pub fn derivative(c: &PanelPolynomial, h: f64) -> PanelPolynomial {
    [c[1] / h, 2.0 * c[2] / h, 0.0]
}
