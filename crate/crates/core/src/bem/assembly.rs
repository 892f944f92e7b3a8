//! Galerkin matrices of `V`, `K`, `W` and the boundary mass matrix.
//!
//! The inner integral over the source panel uses the closed-form moments of
//! [`kernel`](super::kernel); the outer integral uses Gauss rules graded towards
//! the singular endpoints for identical and adjacent panels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::kernel::moments;
use super::{BemSpaceP, PanelPolynomial, TraceSpace};
use crate::mesh::{dist, BoundaryMesh, Segment};
use crate::quadrature::{gauss, graded, graded_both, LineRule};

/// Outer quadrature parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BemQuadrature {
    /// Gauss points for well-separated panels (outer and inner).
    pub far: usize,
    /// Gauss points for nearby, non-touching panels.
    pub near: usize,
    /// Gauss points per subinterval of the graded rules.
    pub graded_points: usize,
    pub graded_levels: usize,
    pub grading: f64,
}

impl Default for BemQuadrature {
    fn default() -> Self {
        Self { far: 8, near: 16, graded_points: 16, graded_levels: 6, grading: 0.15 }
    }
}

impl BemQuadrature {
    /// The same scheme with every Gauss order doubled.
    pub fn doubled(&self) -> Self {
        Self { far: 2 * self.far, near: 2 * self.near, graded_points: 2 * self.graded_points, ..*self }
    }
}

/// Dense Galerkin matrices on one boundary mesh.
#[derive(Debug, Clone)]
pub struct BemMatrices {
    /// `<psi_i, V psi_j>` on `P^q`.
    pub v: DMatrix<f64>,
    /// `<psi_i, K v_j>`, `P^q` test and `S^p` trial.
    pub k: DMatrix<f64>,
    /// `<W v_j, v_i>` on `S^p`.
    pub w: DMatrix<f64>,
    /// `<psi_i, v_j>`, `P^q` test and `S^p` trial.
    pub mass: DMatrix<f64>,
}

enum Relation {
    Identical,
    /// Touching at the start (`false`) or end (`true`) of the outer panel.
    Adjacent(bool),
    Near,
    Far,
}

fn segment_distance(a: &Segment, b: &Segment) -> f64 {
    use super::kernel::distance_to_segment;
    distance_to_segment(a.a, b).min(distance_to_segment(a.b, b)).min(distance_to_segment(b.a, a)).min(distance_to_segment(b.b, a))
}

fn relation(bnd: &BoundaryMesh, i: usize, j: usize) -> Relation {
    if i == j {
        return Relation::Identical;
    }
    let (si, sj) = (&bnd.segments[i], &bnd.segments[j]);
    if sj.vertices.contains(&si.vertices[0]) {
        return Relation::Adjacent(false);
    }
    if sj.vertices.contains(&si.vertices[1]) {
        return Relation::Adjacent(true);
    }
    // vertex indices may be absent for hand-built meshes; fall back to geometry
    let touch = 1e-14 * si.length.min(sj.length);
    if dist(si.a, sj.a).min(dist(si.a, sj.b)) <= touch {
        return Relation::Adjacent(false);
    }
    if dist(si.b, sj.a).min(dist(si.b, sj.b)) <= touch {
        return Relation::Adjacent(true);
    }
    if segment_distance(si, sj) < super::kernel::ANALYTIC_RADIUS * si.length.max(sj.length) {
        Relation::Near
    } else {
        Relation::Far
    }
}

struct OuterRules {
    identical: LineRule,
    adjacent_start: LineRule,
    adjacent_end: LineRule,
}

impl OuterRules {
    fn new(q: &BemQuadrature) -> Self {
        let start = graded(q.graded_points, q.graded_levels, q.grading);
        let mut end = start.clone();
        end.nodes.iter_mut().for_each(|t| *t = 1.0 - *t);
        Self { identical: graded_both(q.graded_points, q.graded_levels, q.grading), adjacent_start: start, adjacent_end: end }
    }
}

/// `out[a][k] = int_{E_i} tau_x^a  mu_k(x) ds_x` for the single- and double-layer moments.
type PairMoments = ([[f64; 3]; 2], [[f64; 3]; 2]);

fn pair_moments(bnd: &BoundaryMesh, i: usize, j: usize, quad: &BemQuadrature, rules: &OuterRules) -> PairMoments {
    let rule: &LineRule = match relation(bnd, i, j) {
        Relation::Identical => &rules.identical,
        Relation::Adjacent(false) => &rules.adjacent_start,
        Relation::Adjacent(true) => &rules.adjacent_end,
        Relation::Near => gauss(quad.near),
        Relation::Far => gauss(quad.far),
    };
    let (si, sj) = (&bnd.segments[i], &bnd.segments[j]);
    let mut g = [[0.0; 3]; 2];
    let mut d = [[0.0; 3]; 2];
    for (tau, w) in rule.iter() {
        let m = moments(si.point(tau), sj, quad.far);
        let ws = w * si.length;
        for k in 0..3 {
            g[0][k] += ws * m.g[k];
            g[1][k] += ws * tau * m.g[k];
            d[0][k] += ws * m.d[k];
            d[1][k] += ws * tau * m.d[k];
        }
    }
    (g, d)
}

/// `sum_{a,k} test[a] * m[a][k] * trial[k]` for a test function of degree at most one.
fn contract(test: &PanelPolynomial, m: &[[f64; 3]; 2], trial: &PanelPolynomial) -> f64 {
    debug_assert_eq!(test[2], 0.0);
    (0..2).map(|a| (0..3).map(|k| test[a] * m[a][k] * trial[k]).sum::<f64>()).sum()
}

/// Arclength-derivative map `S^p -> P^(p-1)` on one segment: rows are the
/// `P^(p-1)` local DOFs, columns the `S^p` local DOFs.
fn local_derivative(p: usize, h: f64) -> Vec<Vec<f64>> {
    match p {
        1 => vec![vec![-1.0 / h, 1.0 / h]],
        _ => vec![vec![-3.0 / h, -1.0 / h, 4.0 / h], vec![1.0 / h, 3.0 / h, -4.0 / h]],
    }
}

struct RowBlock {
    v: Vec<Vec<f64>>,
    v_deriv: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
}

/// Assembles all matrices with `P^q` densities and `S^p` traces.
pub fn assemble(bnd: &BoundaryMesh, q: usize, p: usize, quad: &BemQuadrature) -> BemMatrices {
    let sp_q = BemSpaceP::new(q, bnd);
    let sp_d = BemSpaceP::new(p - 1, bnd);
    let trace = TraceSpace::new(p, bnd);
    let (test_q, test_d, trial_s) = (sp_q.local_basis(), sp_d.local_basis(), trace.local_basis());
    let rules = OuterRules::new(quad);
    let m = bnd.len();
    let rows: Vec<RowBlock> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut block = RowBlock {
                v: vec![vec![0.0; sp_q.dim()]; q + 1],
                v_deriv: vec![vec![0.0; sp_d.dim()]; p],
                k: vec![vec![0.0; trace.dim()]; q + 1],
            };
            for j in 0..m {
                let (mg, md) = pair_moments(bnd, i, j, quad, &rules);
                for (a, ta) in test_q.iter().enumerate() {
                    for (b, &col) in sp_q.segment_dofs(j).iter().enumerate() {
                        block.v[a][col] += contract(ta, &mg, &test_q[b]);
                    }
                    for (b, &col) in trace.segment_dofs(j).iter().enumerate() {
                        block.k[a][col] += contract(ta, &md, &trial_s[b]);
                    }
                }
                for (a, ta) in test_d.iter().enumerate() {
                    for (b, &col) in sp_d.segment_dofs(j).iter().enumerate() {
                        block.v_deriv[a][col] += contract(ta, &mg, &test_d[b]);
                    }
                }
            }
            block
        })
        .collect();

    let mut v = DMatrix::zeros(sp_q.dim(), sp_q.dim());
    let mut v_deriv = DMatrix::zeros(sp_d.dim(), sp_d.dim());
    let mut k = DMatrix::zeros(sp_q.dim(), trace.dim());
    for (i, block) in rows.iter().enumerate() {
        for (a, &row) in sp_q.segment_dofs(i).iter().enumerate() {
            for c in 0..sp_q.dim() {
                v[(row, c)] = block.v[a][c];
            }
            for c in 0..trace.dim() {
                k[(row, c)] = block.k[a][c];
            }
        }
        for (a, &row) in sp_d.segment_dofs(i).iter().enumerate() {
            for c in 0..sp_d.dim() {
                v_deriv[(row, c)] = block.v_deriv[a][c];
            }
        }
    }
    mirror_upper(&mut v);
    mirror_upper(&mut v_deriv);

    // <W u, w> = <V u', w'>
    let mut w = DMatrix::zeros(trace.dim(), trace.dim());
    let derivs: Vec<Vec<Vec<f64>>> = bnd.segments.iter().map(|s| local_derivative(p, s.length)).collect();
    for i in 0..m {
        let (di, ri) = (&derivs[i], sp_d.segment_dofs(i));
        let si = trace.segment_dofs(i);
        for j in 0..m {
            let (dj, rj) = (&derivs[j], sp_d.segment_dofs(j));
            let sj = trace.segment_dofs(j);
            for (a, &ra) in ri.iter().enumerate() {
                for (b, &rb) in rj.iter().enumerate() {
                    let vab = v_deriv[(ra, rb)];
                    for (x, &gx) in si.iter().enumerate() {
                        for (y, &gy) in sj.iter().enumerate() {
                            w[(gx, gy)] += di[a][x] * vab * dj[b][y];
                        }
                    }
                }
            }
        }
    }
    let w = (&w + w.transpose()) * 0.5;
    BemMatrices { v, k, w, mass: assemble_mass(bnd, q, p) }
}

fn mirror_upper(m: &mut DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..r {
            m[(r, c)] = m[(c, r)];
        }
    }
}

/// Single-layer matrix on `P^q`.
pub fn assemble_v(bnd: &BoundaryMesh, q: usize, quad: &BemQuadrature) -> DMatrix<f64> {
    assemble(bnd, q, 1, quad).v
}

/// Double-layer matrix with `P^q` test and `S^p` trial functions.
pub fn assemble_k(bnd: &BoundaryMesh, q: usize, p: usize, quad: &BemQuadrature) -> DMatrix<f64> {
    assemble(bnd, q, p, quad).k
}

/// Hypersingular matrix on `S^p`.
pub fn assemble_w(bnd: &BoundaryMesh, p: usize, quad: &BemQuadrature) -> DMatrix<f64> {
    assemble(bnd, p - 1, p, quad).w
}

/// `<psi_i, v_j>` with `P^q` test and `S^p` trial functions.
pub fn assemble_mass(bnd: &BoundaryMesh, q: usize, p: usize) -> DMatrix<f64> {
    let sp = BemSpaceP::new(q, bnd);
    let trace = TraceSpace::new(p, bnd);
    let mut out = DMatrix::zeros(sp.dim(), trace.dim());
    for (j, seg) in bnd.segments.iter().enumerate() {
        for (a, ta) in sp.local_basis().iter().enumerate() {
            for (b, tb) in trace.local_basis().iter().enumerate() {
                let val = gauss(3).integrate(0.0, 1.0, |t| super::polyval(ta, t) * super::polyval(tb, t)) * seg.length;
                out[(sp.segment_dofs(j)[a], trace.segment_dofs(j)[b])] += val;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::kernel::double_layer_kernel;
    use crate::mesh::{create_z_shape_initial, Segment};
    use std::f64::consts::PI;

    fn z_boundary(levels: usize) -> BoundaryMesh {
        let mut mesh = create_z_shape_initial();
        for _ in 0..levels {
            mesh = mesh.refine_uniform().unwrap();
        }
        BoundaryMesh::from_volume(&mesh)
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    #[test]
    fn single_unit_panel_self_entry() {
        let seg = Segment {
            a: [0.0, 0.0],
            b: [1.0, 0.0],
            vertices: [0, 1],
            length: 1.0,
            tangent: [1.0, 0.0],
            normal: [0.0, -1.0],
            arclength_start: 0.0,
            triangle: 0,
        };
        let bnd = BoundaryMesh { segments: vec![seg] };
        let quad = BemQuadrature::default();
        let rules = OuterRules::new(&quad);
        let (g, _) = pair_moments(&bnd, 0, 0, &quad, &rules);
        assert!((g[0][0] - 3.0 / (4.0 * PI)).abs() < 1e-13);
    }

    #[test]
    fn v_is_symmetric_positive_definite() {
        for level in 0..3 {
            let bnd = z_boundary(level);
            for q in [0, 1] {
                let v = assemble_v(&bnd, q, &BemQuadrature::default());
                assert!(max_abs(&(&v - v.transpose())) <= 1e-12);
                let eig = v.clone().symmetric_eigenvalues();
                assert!(eig.min() > 0.0, "level {level} q {q}");
            }
        }
    }

    #[test]
    fn w_annihilates_constants_and_is_symmetric() {
        for p in [1, 2] {
            let bnd = z_boundary(1);
            let w = assemble_w(&bnd, p, &BemQuadrature::default());
            let ones = nalgebra::DVector::from_element(w.ncols(), 1.0);
            assert!((&w * ones).amax() <= 1e-11);
            assert!(max_abs(&(&w - w.transpose())) <= 1e-12);
            let mut hat = nalgebra::DVector::zeros(w.ncols());
            hat[0] = 1.0;
            assert!(hat.dot(&(&w * &hat)) > 0.0);
        }
    }

    #[test]
    fn double_layer_of_constant_is_minus_half() {
        for level in 0..4 {
            let bnd = z_boundary(level);
            let mats = assemble(&bnd, 0, 1, &BemQuadrature::default());
            let ones = nalgebra::DVector::from_element(mats.k.ncols(), 1.0);
            let rows = &mats.k * ones;
            for (j, seg) in bnd.segments.iter().enumerate() {
                assert!((rows[j] + 0.5 * seg.length).abs() <= 1e-8, "level {level} segment {j}: {}", rows[j]);
            }
        }
    }

    #[test]
    fn double_layer_of_constant_matches_dense_quadrature() {
        // brute-force oracle: composite Gauss in both variables, skipping the self panel
        let bnd = z_boundary(0);
        let k = assemble_k(&bnd, 0, 1, &BemQuadrature::default());
        let ones = nalgebra::DVector::from_element(k.ncols(), 1.0);
        let rows = &k * ones;
        let rule = graded_both(20, 12, 0.15);
        for (i, si) in bnd.segments.iter().enumerate() {
            let mut total = 0.0;
            for (tx, wx) in rule.iter() {
                let x = si.point(tx);
                for (j, sj) in bnd.segments.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    for (ty, wy) in rule.iter() {
                        total += wx * wy * si.length * sj.length * double_layer_kernel(x, sj.point(ty), sj.normal);
                    }
                }
            }
            assert!((rows[i] - total).abs() < 1e-6, "{} vs {}", rows[i], total);
        }
    }

    #[test]
    fn collinear_pairs_have_no_double_layer_part() {
        let bnd = z_boundary(1);
        let quad = BemQuadrature::default();
        let rules = OuterRules::new(&quad);
        let mut checked = 0;
        for i in 0..bnd.len() {
            let j = (i + 1) % bnd.len();
            if bnd.segments[i].tangent == bnd.segments[j].tangent {
                assert_eq!(pair_moments(&bnd, i, j, &quad, &rules).1, [[0.0; 3]; 2]);
                checked += 1;
            }
            assert_eq!(pair_moments(&bnd, i, i, &quad, &rules).1, [[0.0; 3]; 2]);
        }
        assert!(checked >= 10);
    }

    #[test]
    fn doubling_quadrature_changes_entries_little() {
        let bnd = z_boundary(2);
        let a = assemble(&bnd, 1, 2, &BemQuadrature::default());
        let b = assemble(&bnd, 1, 2, &BemQuadrature::default().doubled());
        assert!(max_abs(&(&a.v - &b.v)) < 1e-10, "V {}", max_abs(&(&a.v - &b.v)));
        assert!(max_abs(&(&a.k - &b.k)) < 1e-10, "K {}", max_abs(&(&a.k - &b.k)));
        assert!(max_abs(&(&a.w - &b.w)) < 1e-9, "W {}", max_abs(&(&a.w - &b.w)));
    }

    #[test]
    fn mass_matrix_integrates_to_perimeter() {
        let bnd = z_boundary(1);
        let m = assemble_mass(&bnd, 1, 2);
        assert!((m.sum() - bnd.total_length()).abs() < 1e-14);
    }
}
