//! Numerical check of the local inverse estimates for `V`, `K'`, `K` and `W`.
//!
//! For discrete densities the `h^(1/2)`-weighted `L^2` norms of the operator
//! traces are compared with energy surrogates of the fractional Sobolev norms.
//! The ratios must stay bounded along a refinement sequence.

use std::fmt::{self, Write as _};
use std::ops::ControlFlow;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::adaptive::{run_with_observer, AdaptiveConfig};
use crate::bem::pointwise::potentials_many;
use crate::bem::{assemble, BemDensity, BemQuadrature, BemSpaceP, PanelPolynomial, TraceSpace};
use crate::benchmark::benchmark_zshape;
use crate::coupling::boundary_diameter;
use crate::error::{Error, Result};
use crate::estimator::{boundary_rule, BOUNDARY_NODES};
use crate::mesh::{create_z_shape_initial, BoundaryMesh, Point, VolumeMesh};

/// Largest admissible growth of the maximal ratio between consecutive levels.
pub const MAX_GROWTH: f64 = 1.1;
/// Largest admissible overall maximum relative to the level-0 maximum.
pub const MAX_OVERALL: f64 = 5.0;
pub const MIN_LEVELS: usize = 4;
pub const MIN_DENSITIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    V,
    Kadj,
    K,
    W,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::V, Operator::Kadj, Operator::K, Operator::W];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::V => "V",
            Self::Kadj => "Kadj",
            Self::K => "K",
            Self::W => "W",
        }
    }

    /// `V` and `K'` act on discontinuous densities, `K` and `W` on traces.
    pub fn acts_on_traces(&self) -> bool {
        matches!(self, Self::K | Self::W)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == s).ok_or_else(|| Error::Parse(format!("unknown operator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseRatioRecord {
    pub level: usize,
    pub operator: Operator,
    /// Seed of a random density or a name.
    pub descriptor: String,
    pub numerator: f64,
    pub denominator: f64,
    /// `None` when the denominator vanishes.
    pub ratio: Option<f64>,
}

/// Boundary mesh with the matrices needed for the norm surrogates.
pub struct InverseContext {
    pub bnd: BoundaryMesh,
    pub density_space: BemSpaceP,
    pub trace_space: TraceSpace,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    /// `int_Gamma` of every trace basis function.
    trace_integrals: Vec<f64>,
    /// Segments of the arc `gamma`; `None` for the whole boundary.
    arc: Option<Vec<bool>>,
}

fn poly_integral(c: &PanelPolynomial) -> f64 {
    c[0] + c[1] / 2.0 + c[2] / 3.0
}

impl InverseContext {
    pub fn new(bnd: BoundaryMesh, p: usize, q: usize, quad: &BemQuadrature) -> Result<Self> {
        let diam = boundary_diameter(&bnd);
        if diam >= 1.0 {
            return Err(Error::Config(format!("boundary diameter {diam} must be below 1")));
        }
        let mats = assemble(&bnd, q, p, quad);
        let trace_space = TraceSpace::new(p, &bnd);
        let mut trace_integrals = vec![0.0; trace_space.dim()];
        let basis = trace_space.local_basis();
        for (j, seg) in bnd.segments.iter().enumerate() {
            for (dof, b) in trace_space.segment_dofs(j).into_iter().zip(&basis) {
                trace_integrals[dof] += seg.length * poly_integral(b);
            }
        }
        Ok(Self { density_space: BemSpaceP::new(q, &bnd), trace_space, v: mats.v, w: mats.w, trace_integrals, bnd, arc: None })
    }

    /// Restricts densities and norms to the segments flagged in `arc`.
    pub fn with_arc(mut self, arc: Vec<bool>) -> Result<Self> {
        if arc.len() != self.bnd.len() {
            return Err(Error::Dimension(format!("arc has {} flags for {} segments", arc.len(), self.bnd.len())));
        }
        self.arc = Some(arc);
        Ok(self)
    }

    fn in_arc(&self, j: usize) -> bool {
        self.arc.as_ref().is_none_or(|a| a[j])
    }

    /// `(<W v, v> + (int_Gamma v)^2)^(1/2)` for a trace `v`.
    pub fn hhalf_norm(&self, v: &[f64]) -> f64 {
        let x = DVector::from_column_slice(v);
        let mean: f64 = v.iter().zip(&self.trace_integrals).map(|(a, b)| a * b).sum();
        (x.dot(&(&self.w * &x)) + mean * mean).max(0.0).sqrt()
    }

    /// `<V psi, psi>^(1/2)` for a piecewise polynomial `psi`.
    pub fn hminushalf_norm(&self, psi: &[f64]) -> f64 {
        let x = DVector::from_column_slice(psi);
        x.dot(&(&self.v * &x)).max(0.0).sqrt()
    }

    /// Standard normal density for `op`, zero outside the arc.
    pub fn random_density(&self, op: Operator, seed: u64) -> BemDensity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
        if op.acts_on_traces() {
            let mut c = draw(self.trace_space.dim());
            if self.arc.is_some() {
                let m = self.bnd.len();
                for j in 0..m {
                    // vertex j starts segment j; it is interior to the arc if both neighbours are in it
                    if !(self.in_arc(j) && self.in_arc((j + m - 1) % m)) {
                        c[j] = 0.0;
                    }
                    if self.trace_space.degree == 2 && !self.in_arc(j) {
                        c[m + j] = 0.0;
                    }
                }
            }
            BemDensity::trace(self.trace_space, c).expect("matching length")
        } else {
            let mut c = draw(self.density_space.dim());
            for j in 0..self.bnd.len() {
                if !self.in_arc(j) {
                    for d in self.density_space.segment_dofs(j) {
                        c[d] = 0.0;
                    }
                }
            }
            BemDensity::piecewise(self.density_space, c).expect("matching length")
        }
    }

    /// Surrogate norm of `density` in the space matching `op`.
    pub fn denominator(&self, op: Operator, density: &BemDensity) -> f64 {
        if op.acts_on_traces() {
            self.hhalf_norm(&density.coeffs)
        } else {
            self.hminushalf_norm(&density.coeffs)
        }
    }

    /// `||h^(1/2) A d||_{L^2(gamma)}` for several densities at once.
    pub fn numerators(&self, op: Operator, densities: &[BemDensity]) -> Vec<f64> {
        // V and W use the tangential, K' and K the normal derivative of a single layer
        let polys: Vec<Vec<PanelPolynomial>> = densities
            .iter()
            .map(|d| if op.acts_on_traces() { d.derivative_polynomials(&self.bnd) } else { d.panel_polynomials() })
            .collect();
        let refs: Vec<&[PanelPolynomial]> = polys.iter().map(|p| p.as_slice()).collect();
        let rule = boundary_rule(BOUNDARY_NODES);
        let per_segment: Vec<Vec<f64>> = (0..self.bnd.len())
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![0.0; densities.len()];
                if !self.in_arc(j) {
                    return acc;
                }
                let seg = &self.bnd.segments[j];
                let dir: Point = match op {
                    Operator::V | Operator::W => seg.tangent,
                    Operator::Kadj | Operator::K => seg.normal,
                };
                for (tau, w) in rule.iter() {
                    for (a, pot) in acc.iter_mut().zip(potentials_many(&self.bnd, &refs, seg.point(tau))) {
                        let g = pot.grad_single;
                        *a += w * (dir[0] * g[0] + dir[1] * g[1]).powi(2);
                    }
                }
                acc.iter_mut().for_each(|a| *a *= seg.length * seg.length);
                acc
            })
            .collect();
        (0..densities.len()).map(|k| per_segment.iter().map(|s| s[k]).sum::<f64>().sqrt()).collect()
    }

    pub fn ratio(&self, level: usize, op: Operator, descriptor: &str, density: &BemDensity) -> InverseRatioRecord {
        let numerator = self.numerators(op, std::slice::from_ref(density))[0];
        record(level, op, descriptor.to_string(), numerator, self.denominator(op, density))
    }
}

fn record(level: usize, operator: Operator, descriptor: String, numerator: f64, denominator: f64) -> InverseRatioRecord {
    let ratio = (denominator > 0.0).then(|| numerator / denominator);
    InverseRatioRecord { level, operator, descriptor, numerator, denominator, ratio }
}

/// Ratio of `op` for `density` on one level.
pub fn inverse_ratio(ctx: &InverseContext, level: usize, op: Operator, descriptor: &str, density: &BemDensity) -> InverseRatioRecord {
    ctx.ratio(level, op, descriptor, density)
}

/// Seed of density `k` on `level`; distinct base seeds give unrelated draws.
pub fn density_seed(base: u64, level: usize, k: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((level as u64) << 32) ^ k as u64
}

/// Ratios of all four operators for `count` random densities.
pub fn level_ratios(ctx: &InverseContext, level: usize, count: usize, base_seed: u64) -> Vec<InverseRatioRecord> {
    let mut out = Vec::with_capacity(4 * count);
    for op in Operator::ALL {
        let seeds: Vec<u64> = (0..count).map(|k| density_seed(base_seed, level, k)).collect();
        let densities: Vec<BemDensity> = seeds.iter().map(|&s| ctx.random_density(op, s)).collect();
        let nums = ctx.numerators(op, &densities);
        for ((seed, d), num) in seeds.iter().zip(&densities).zip(nums) {
            out.push(record(level, op, seed.to_string(), num, ctx.denominator(op, d)));
        }
    }
    out
}

/// Per-operator outcome of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCertificate {
    pub operator: Operator,
    /// Maximal ratio per level, in level order.
    pub level_max: Vec<(usize, f64)>,
    /// `level_max[k + 1] / level_max[k]`.
    pub growth: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub operators: Vec<OperatorCertificate>,
    pub pass: bool,
}

impl CertifyReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.operators {
            let maxes: Vec<String> = c.level_max.iter().map(|(_, m)| format!("{m:.4}")).collect();
            let worst = c.growth.iter().cloned().fold(0.0, f64::max);
            let _ = writeln!(
                out,
                "{:<4} {}  max ratios [{}]  worst growth {:.4}",
                c.operator.as_str(),
                if c.pass { "PASS" } else { "FAIL" },
                maxes.join(", "),
                worst
            );
        }
        let _ = write!(out, "{}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

/// Checks that the maximal ratios stay bounded over the levels.
pub fn certify(records: &[InverseRatioRecord]) -> Result<CertifyReport> {
    let mut operators = Vec::new();
    for op in Operator::ALL {
        let mine: Vec<&InverseRatioRecord> = records.iter().filter(|r| r.operator == op).collect();
        if mine.is_empty() {
            continue;
        }
        let mut levels: Vec<usize> = mine.iter().map(|r| r.level).collect();
        levels.sort_unstable();
        levels.dedup();
        if levels.len() < MIN_LEVELS {
            return Err(Error::InsufficientData(format!("{op}: {} levels, need {MIN_LEVELS}", levels.len())));
        }
        let mut level_max = Vec::new();
        for &l in &levels {
            let ratios: Vec<f64> = mine.iter().filter(|r| r.level == l).filter_map(|r| r.ratio).collect();
            if ratios.len() < MIN_DENSITIES {
                return Err(Error::InsufficientData(format!(
                    "{op}: level {l} has {} densities with a defined ratio, need {MIN_DENSITIES}",
                    ratios.len()
                )));
            }
            level_max.push((l, ratios.iter().cloned().fold(0.0, f64::max)));
        }
        let growth: Vec<f64> = level_max.windows(2).map(|w| w[1].1 / w[0].1).collect();
        let first = level_max[0].1;
        let overall = level_max.iter().map(|x| x.1).fold(0.0, f64::max);
        let pass = growth.iter().all(|&g| g <= MAX_GROWTH) && overall <= MAX_OVERALL * first;
        operators.push(OperatorCertificate { operator: op, level_max, growth, pass });
    }
    if operators.is_empty() {
        return Err(Error::InsufficientData("no ratio records".into()));
    }
    let pass = operators.iter().all(|c| c.pass);
    Ok(CertifyReport { operators, pass })
}

pub const RATIO_HEADER: &str = "level,operator,seed,numerator,denominator,ratio";

pub fn records_to_csv(records: &[InverseRatioRecord]) -> String {
    let mut out = format!("{RATIO_HEADER}\n");
    for r in records {
        let ratio = r.ratio.map_or("nan".to_string(), |x| format!("{x:.12e}"));
        let _ = writeln!(out, "{},{},{},{:.12e},{:.12e},{}", r.level, r.operator, r.descriptor, r.numerator, r.denominator, ratio);
    }
    out
}

/// Segments on the two sides of the Z-shape meeting at the reentrant corner.
pub fn reentrant_arc(bnd: &BoundaryMesh) -> Vec<bool> {
    let on_sides = |x: Point| {
        let eps = 1e-12;
        let horizontal = x[1].abs() < eps && (0.0..=0.25).contains(&x[0]);
        let diagonal = (x[0] + x[1]).abs() < eps && (0.0..=0.25).contains(&x[0]);
        horizontal || diagonal
    };
    bnd.segments.iter().map(|s| on_sides(s.point(0.5)) && on_sides(s.a) && on_sides(s.b)).collect()
}

/// Boundary meshes for the certification: uniform refinements of the Z-shape
/// for the first half, then adaptive benchmark meshes with at least
/// `10 * 2^k` boundary segments.
pub fn mesh_family(levels: usize) -> Result<Vec<VolumeMesh>> {
    let uniform = levels.div_ceil(2);
    let mut meshes = vec![create_z_shape_initial()];
    while meshes.len() < uniform.min(levels) {
        let next = meshes.last().expect("nonempty").refine_uniform()?;
        meshes.push(next);
    }
    meshes.truncate(levels);
    if levels > uniform {
        let (mesh, data) = benchmark_zshape();
        let targets: Vec<usize> = (uniform..levels).map(|k| 10 << k).collect();
        let config = AdaptiveConfig { record_timing: false, n_max: usize::MAX, ..Default::default() };
        let mut next = 0;
        run_with_observer(&config, &data, mesh, |s| {
            if s.disc.bnd.len() >= targets[next] {
                meshes.push(s.mesh.clone());
                next += 1;
            }
            if next == targets.len() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })?;
        if next < targets.len() {
            return Err(Error::InsufficientData(format!("adaptive run ended before {} boundary segments", targets[next])));
        }
    }
    Ok(meshes)
}

/// Ratios for every mesh of a family.
pub fn family_ratios(meshes: &[VolumeMesh], p: usize, q: usize, count: usize, seed: u64) -> Result<Vec<InverseRatioRecord>> {
    let quad = BemQuadrature::default();
    let mut out = Vec::new();
    for (level, mesh) in meshes.iter().enumerate() {
        let ctx = InverseContext::new(BoundaryMesh::from_volume(mesh), p, q, &quad)?;
        out.extend(level_ratios(&ctx, level, count, seed));
    }
    Ok(out)
}
