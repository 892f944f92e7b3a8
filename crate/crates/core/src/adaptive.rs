//! Adaptive loop: solve, estimate, mark, refine.

use std::fmt::{self, Write as _};
use std::ops::ControlFlow;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::bem::{BemDensity, BemQuadrature};
use crate::coupling::{solve_level, CoupledSolution, DataMethod, Discretization, TransmissionData};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EntityKind, EstimatorReport};
use crate::fem::h1_error_parts;
use crate::mesh::{MarkSet, VolumeMesh};
use crate::quadrature::gauss;

/// Marking strategy; only Dörfler marking is provided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Marking {
    #[default]
    Doerfler,
}

impl Marking {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Doerfler => "doerfler",
        }
    }
}

impl FromStr for Marking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doerfler" => Ok(Self::Doerfler),
            _ => Err(Error::Config(format!("marking: unknown strategy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub p: usize,
    pub q: usize,
    pub data_method: DataMethod,
    /// Maximal number of levels, counting level 0.
    pub max_levels: usize,
    /// No level with more triangles than this is solved.
    pub n_max: usize,
    pub marking: Marking,
    pub quadrature: BemQuadrature,
    /// Wall-time budget for the whole run.
    pub budget: Option<Duration>,
    /// Record wall time per level; off gives byte-identical histories.
    pub record_timing: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.25,
            p: 1,
            q: 0,
            data_method: DataMethod::Nodal,
            max_levels: 100,
            n_max: 20000,
            marking: Marking::Doerfler,
            quadrature: BemQuadrature::default(),
            budget: None,
            record_timing: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta: {} not in (0, 1]", self.theta)));
        }
        if !(1..=2).contains(&self.p) {
            return Err(Error::Config(format!("p: {} not in {{1, 2}}", self.p)));
        }
        if self.q > 1 {
            return Err(Error::Config(format!("q_bem: {} not in {{0, 1}}", self.q)));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels: must be positive".into()));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max: must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    /// Number of triangles.
    pub n: usize,
    /// Number of boundary segments.
    pub m: usize,
    pub rho_total: f64,
    pub rho_omega: f64,
    pub rho_gamma: f64,
    pub osc: f64,
    /// `||u - U||_{H^1(Omega)}`; NaN without an exact solution.
    pub err_omega: f64,
    /// `||h^(1/2) (phi - Phi)||_{L^2(Gamma)}`; NaN without an exact solution.
    pub err_gamma: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxLevels,
    MaxElements,
    /// The estimator vanished.
    Converged,
    Budget,
    /// The observer asked to stop.
    Requested,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MaxLevels => "maximal number of levels reached",
            Self::MaxElements => "element limit reached",
            Self::Converged => "estimator vanished",
            Self::Budget => "wall-time budget exceeded",
            Self::Requested => "stopped on request",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceHistory {
    pub rows: Vec<LevelRecord>,
    pub stop: Option<StopReason>,
}

pub const HISTORY_HEADER: &str = "level,N,M,rho_total,rho_vol,rho_bnd,osc,err_omega,err_gamma,seconds";

/// Columns of the history usable in rate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    N,
    M,
    RhoTotal,
    RhoOmega,
    RhoGamma,
    Osc,
    ErrOmega,
    ErrGamma,
}

impl Field {
    pub fn of(&self, r: &LevelRecord) -> f64 {
        match self {
            Self::N => r.n as f64,
            Self::M => r.m as f64,
            Self::RhoTotal => r.rho_total,
            Self::RhoOmega => r.rho_omega,
            Self::RhoGamma => r.rho_gamma,
            Self::Osc => r.osc,
            Self::ErrOmega => r.err_omega,
            Self::ErrGamma => r.err_gamma,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::N => "N",
            Self::M => "M",
            Self::RhoTotal => "rho_total",
            Self::RhoOmega => "rho_vol",
            Self::RhoGamma => "rho_bnd",
            Self::Osc => "osc",
            Self::ErrOmega => "err_omega",
            Self::ErrGamma => "err_gamma",
        }
    }
}

/// Least-squares fit of `log y = c - rate * log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

impl ConvergenceHistory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6}",
                r.level, r.n, r.m, r.rho_total, r.rho_omega, r.rho_gamma, r.osc, r.err_omega, r.err_gamma, r.seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == HISTORY_HEADER => {}
            _ => return Err(Error::Parse(format!("history header must be '{HISTORY_HEADER}'"))),
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 10 {
                return Err(Error::Parse(format!("history row {}: expected 10 columns, found {}", k + 1, cols.len())));
            }
            let int = |i: usize| cols[i].parse::<usize>().map_err(|e| Error::Parse(format!("history row {}: {e}", k + 1)));
            let real = |i: usize| cols[i].parse::<f64>().map_err(|e| Error::Parse(format!("history row {}: {e}", k + 1)));
            rows.push(LevelRecord {
                level: int(0)?,
                n: int(1)?,
                m: int(2)?,
                rho_total: real(3)?,
                rho_omega: real(4)?,
                rho_gamma: real(5)?,
                osc: real(6)?,
                err_omega: real(7)?,
                err_gamma: real(8)?,
                seconds: real(9)?,
            });
        }
        Ok(Self { rows, stop: None })
    }

    pub fn fit_rate(&self, x: Field, y: Field) -> Result<RateFit> {
        let n = self.rows.len();
        if n < 4 {
            return Err(Error::InsufficientData(format!("rate fit needs at least 4 levels, found {n}")));
        }
        let tail = &self.rows[n - n.div_ceil(2)..];
        let pts: Vec<(f64, f64)> = tail.iter().map(|r| (x.of(r).ln(), y.of(r).ln())).collect();
        if pts.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InsufficientData(format!("{} or {} is not positive in the fitted rows", x.as_str(), y.as_str())));
        }
        let k = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::InsufficientData(format!("{} is constant in the fitted rows", x.as_str())));
        }
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
        let residual = (pts.iter().map(|p| (my + slope * (p.0 - mx) - p.1).powi(2)).sum::<f64>() / k).sqrt();
        Ok(RateFit { rate: -slope, residual, points: pts.len() })
    }
}

/// Fitted convergence rate over the last half of the history.
pub fn estimate_rate(history: &ConvergenceHistory, x: Field, y: Field) -> Result<f64> {
    Ok(history.fit_rate(x, y)?.rate)
}

/// Greedy Dörfler marking: the shortest prefix of the indicators sorted
/// descending (ties by entity id) whose sum reaches `theta` times the total.
/// `theta = 1` marks every entity, including those with vanishing indicators.
pub fn doerfler_mark(report: &EstimatorReport, theta: f64) -> MarkSet {
    let sorted = sorted_indicators(report);
    let mut marks = MarkSet::default();
    let total: f64 = sorted.iter().map(|x| x.1).sum();
    if total <= 0.0 {
        return marks;
    }
    let mut acc = 0.0;
    for (id, v) in sorted {
        if theta < 1.0 && acc >= theta * total {
            break;
        }
        acc += v;
        match id.kind {
            EntityKind::Triangle => marks.triangles.insert(id.index),
            EntityKind::Facet => marks.facets.insert(id.index),
            EntityKind::Segment => marks.segments.insert(id.index),
        };
    }
    marks
}

/// Indicators in marking order.
pub fn sorted_indicators(report: &EstimatorReport) -> Vec<(crate::estimator::EntityId, f64)> {
    let mut all = report.indicators();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all
}

/// `||h^(1/2) (phi - Phi)||_{L^2(Gamma)}`.
pub fn boundary_flux_error(disc: &Discretization, phi: &BemDensity, exact: &dyn Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
    let rule = gauss(8);
    disc.bnd
        .segments
        .iter()
        .enumerate()
        .map(|(j, seg)| {
            let int: f64 = rule.iter().map(|(t, w)| w * (exact(seg.point(t), seg.normal) - phi.value(j, t)).powi(2)).sum();
            seg.length * seg.length * int
        })
        .sum::<f64>()
        .sqrt()
}

/// Everything known about one level, handed to the observer.
pub struct LevelState<'a> {
    pub record: &'a LevelRecord,
    pub mesh: &'a VolumeMesh,
    pub disc: &'a Discretization,
    pub solution: &'a CoupledSolution,
    pub report: &'a EstimatorReport,
    /// Marks used to refine this level; `None` on the last level.
    pub marks: Option<&'a MarkSet>,
}

/// Runs the adaptive algorithm from `mesh`.
pub fn run(config: &AdaptiveConfig, data: &TransmissionData, mesh: VolumeMesh) -> Result<ConvergenceHistory> {
    run_with_observer(config, data, mesh, |_| ControlFlow::Continue(()))
}

pub fn run_with_observer(
    config: &AdaptiveConfig,
    data: &TransmissionData,
    mut mesh: VolumeMesh,
    mut observer: impl FnMut(&LevelState<'_>) -> ControlFlow<()>,
) -> Result<ConvergenceHistory> {
    config.validate()?;
    let start = Instant::now();
    let mut history = ConvergenceHistory { rows: Vec::new(), stop: None };
    for level in 0.. {
        let t0 = Instant::now();
        let disc = Discretization::new(&mesh, config.p, config.q);
        let (_, solution) = solve_level(&mesh, &disc, data, config.data_method, &config.quadrature)?;
        let report = estimate(&mesh, &disc, &solution, data)?;
        let (err_omega, err_gamma) = match &data.exact {
            Some(ex) => {
                let parts = h1_error_parts(&mesh, &disc.space, &solution.u, &*ex.u_int, &*ex.grad_u_int, &ex.singular_points);
                let e_omega = parts.iter().map(|(a, b)| a + b).sum::<f64>().sqrt();
                let phi = BemDensity::piecewise(disc.density_space, solution.phi.clone())?;
                (e_omega, boundary_flux_error(&disc, &phi, &*ex.phi))
            }
            None => (f64::NAN, f64::NAN),
        };
        let stop = if report.rho2() == 0.0 {
            Some(StopReason::Converged)
        } else if level + 1 >= config.max_levels {
            Some(StopReason::MaxLevels)
        } else {
            None
        };
        let marks = match stop {
            None => Some(match config.marking {
                Marking::Doerfler => doerfler_mark(&report, config.theta),
            }),
            Some(_) => None,
        };
        let refined = marks.as_ref().map(|m| mesh.refine(m)).transpose()?;
        let record = LevelRecord {
            level,
            n: mesh.num_triangles(),
            m: disc.bnd.len(),
            rho_total: report.rho(),
            rho_omega: report.rho_omega2().sqrt(),
            rho_gamma: report.rho_gamma2().sqrt(),
            osc: report.oscillation2().sqrt(),
            err_omega,
            err_gamma,
            seconds: if config.record_timing { t0.elapsed().as_secs_f64() } else { 0.0 },
        };
        let next = match (stop, refined) {
            (None, Some(next)) if next.num_triangles() > config.n_max => {
                history.stop = Some(StopReason::MaxElements);
                None
            }
            (None, Some(next)) => Some(next),
            (s, _) => {
                history.stop = s;
                None
            }
        };
        let over_budget = config.budget.is_some_and(|b| start.elapsed() > b);
        let flow = observer(&LevelState {
            record: &record,
            mesh: &mesh,
            disc: &disc,
            solution: &solution,
            report: &report,
            marks: if next.is_some() { marks.as_ref() } else { None },
        });
        history.rows.push(record);
        match next {
            Some(_) if flow.is_break() => {
                history.stop = Some(StopReason::Requested);
                break;
            }
            Some(_) if over_budget => {
                history.stop = Some(StopReason::Budget);
                break;
            }
            Some(next) => mesh = next,
            None => break,
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{benchmark_zshape, zero_data};
    use crate::mesh::create_z_shape_initial;

    fn report_of(vals: &[f64]) -> EstimatorReport {
        EstimatorReport::total(vals.to_vec(), vec![], vec![], vec![], vec![])
    }

    #[test]
    fn greedy_prefix_example() {
        let m = doerfler_mark(&report_of(&[2.0, 8.0, 4.0, 2.0]), 0.25);
        assert_eq!(m.triangles.into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn theta_one_marks_everything() {
        let vals = [0.1, 0.7, 0.0, 0.3, 1e-9, 0.2, 0.3, 0.0];
        assert_eq!(doerfler_mark(&report_of(&vals), 1.0).len(), vals.len());
    }

    #[test]
    fn equal_indicators_mark_the_ceiling() {
        for n in [1usize, 3, 7, 10, 16] {
            for theta in [0.1, 0.25, 0.3, 0.5, 0.9] {
                let m = doerfler_mark(&report_of(&vec![1.0; n]), theta);
                assert_eq!(m.len(), (theta * n as f64).ceil() as usize, "n={n} theta={theta}");
            }
        }
    }

    #[test]
    fn ties_break_by_entity_id() {
        let rep = EstimatorReport::total(vec![1.0, 1.0], vec![1.0], vec![0.5], vec![0.5], vec![0.0]);
        let m = doerfler_mark(&rep, 0.5);
        assert_eq!(m.triangles.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        assert!(m.facets.is_empty() && m.segments.is_empty());
    }

    #[test]
    fn zero_report_marks_nothing() {
        assert!(doerfler_mark(&report_of(&[0.0, 0.0]), 0.5).is_empty());
    }

    #[test]
    fn exact_power_law_rate() {
        let rows = (0..6)
            .map(|k| {
                let x = 10f64.powi(k + 1);
                LevelRecord {
                    level: k as usize,
                    n: x as usize,
                    m: 1,
                    rho_total: x.powf(-0.5),
                    rho_omega: 0.0,
                    rho_gamma: 0.0,
                    osc: 0.0,
                    err_omega: 0.0,
                    err_gamma: 0.0,
                    seconds: 0.0,
                }
            })
            .collect();
        let h = ConvergenceHistory { rows, stop: None };
        let fit = h.fit_rate(Field::N, Field::RhoTotal).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-12 && fit.residual < 1e-12);
        assert_eq!(fit.points, 3);
        let short = ConvergenceHistory { rows: h.rows[..3].to_vec(), stop: None };
        assert!(matches!(estimate_rate(&short, Field::N, Field::RhoTotal), Err(Error::InsufficientData(_))));
        assert_eq!(ConvergenceHistory::from_csv(&h.to_csv()).unwrap().fit_rate(Field::N, Field::RhoTotal).unwrap().points, 3);
    }

    #[test]
    fn uniform_run_quadruples() {
        let (mesh, data) = benchmark_zshape();
        let config = AdaptiveConfig { theta: 1.0, max_levels: 3, ..Default::default() };
        let h = run(&config, &data, mesh).unwrap();
        assert_eq!(h.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![14, 56, 224]);
        assert_eq!(h.rows.iter().map(|r| r.m).collect::<Vec<_>>(), vec![10, 20, 40]);
        assert_eq!(h.stop, Some(StopReason::MaxLevels));
    }

    #[test]
    fn zero_data_stops_at_level_zero() {
        let h = run(&AdaptiveConfig::default(), &zero_data(), create_z_shape_initial()).unwrap();
        assert_eq!(h.rows.len(), 1);
        assert_eq!(h.rows[0].rho_total, 0.0);
        assert_eq!(h.stop, Some(StopReason::Converged));
    }

    #[test]
    fn element_limit_and_budget_stop_the_run() {
        let (mesh, data) = benchmark_zshape();
        let h = run(&AdaptiveConfig { theta: 1.0, n_max: 100, ..Default::default() }, &data, mesh.clone()).unwrap();
        assert_eq!(h.rows.len(), 2);
        assert_eq!(h.stop, Some(StopReason::MaxElements));
        let h = run(&AdaptiveConfig { budget: Some(Duration::ZERO), ..Default::default() }, &data, mesh).unwrap();
        assert_eq!(h.rows.len(), 1);
        assert_eq!(h.stop, Some(StopReason::Budget));
    }

    #[test]
    fn invalid_theta_is_rejected() {
        for theta in [0.0, -0.1, 1.5, f64::NAN] {
            let c = AdaptiveConfig { theta, ..Default::default() };
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn adaptive_levels_satisfy_the_marking_criterion() {
        let (mesh, data) = benchmark_zshape();
        let config = AdaptiveConfig { max_levels: 6, record_timing: false, ..Default::default() };
        let mut checked = 0;
        let h = run_with_observer(&config, &data, mesh.clone(), |s| {
            if let Some(m) = s.marks {
                let sorted = sorted_indicators(s.report);
                let total: f64 = sorted.iter().map(|x| x.1).sum();
                let marked: Vec<f64> = sorted.iter().take(m.len()).map(|x| x.1).collect();
                assert!(marked.iter().sum::<f64>() >= config.theta * total);
                assert!(marked[..marked.len() - 1].iter().sum::<f64>() < config.theta * total);
                checked += 1;
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(checked, 5);
        assert!(h.rows.windows(2).all(|w| w[1].n > w[0].n && w[1].m >= w[0].m));
        let again = run(&config, &data, mesh).unwrap();
        assert_eq!(h.to_csv(), again.to_csv());
    }
}
