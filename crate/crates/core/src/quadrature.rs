//! Quadrature rules on the unit interval and the reference triangle.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Gauss-Legendre rule mapped to `[0, 1]`; weights sum to one.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    fn build(n: usize) -> Self {
        if n == 1 {
            return Self { nodes: vec![0.5], weights: vec![1.0] };
        }
        let rule = GaussLegendre::new(n).expect("n >= 2");
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let len = b - a;
        self.iter().map(|(t, w)| w * f(a + len * t)).sum::<f64>() * len
    }
}

const MAX_CACHED: usize = 40;

/// Cached `n`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss(n: usize) -> &'static LineRule {
    static CACHE: OnceLock<Vec<LineRule>> = OnceLock::new();
    assert!((1..=MAX_CACHED).contains(&n), "gauss rule with {n} points not cached");
    &CACHE.get_or_init(|| (1..=MAX_CACHED).map(LineRule::build).collect())[n - 1]
}

/// Composite rule on `[0, 1]` geometrically graded towards `0`.
///
/// Breakpoints are `0, sigma^levels, ..., sigma, 1`; each subinterval carries an
/// `n`-point Gauss rule.
pub fn graded(n: usize, levels: usize, sigma: f64) -> LineRule {
    let base = gauss(n);
    let mut breaks = vec![0.0];
    for k in (1..=levels).rev() {
        breaks.push(sigma.powi(k as i32));
    }
    breaks.push(1.0);
    let mut nodes = Vec::with_capacity(n * (levels + 1));
    let mut weights = Vec::with_capacity(n * (levels + 1));
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for (t, w) in base.iter() {
            nodes.push(a + (b - a) * t);
            weights.push((b - a) * w);
        }
    }
    LineRule { nodes, weights }
}

/// Composite rule on `[0, 1]` graded towards both endpoints.
pub fn graded_both(n: usize, levels: usize, sigma: f64) -> LineRule {
    let half = graded(n, levels, sigma);
    let mut nodes = Vec::with_capacity(2 * half.len());
    let mut weights = Vec::with_capacity(2 * half.len());
    for (t, w) in half.iter() {
        nodes.push(0.5 * t);
        weights.push(0.5 * w);
    }
    for (t, w) in half.iter().collect::<Vec<_>>().into_iter().rev() {
        nodes.push(1.0 - 0.5 * t);
        weights.push(0.5 * w);
    }
    LineRule { nodes, weights }
}

/// Rule on `[0, 1]` from the substitution `t = s^m / 2` on each half.
///
/// Endpoint singularities like `t^(-a)` with `a < 1` or `log(t)` become smooth
/// or weakly singular in `s` for large enough `m`.
pub fn power_graded_both(n: usize, m: u32) -> LineRule {
    let base = gauss(n);
    let mut nodes = Vec::with_capacity(2 * n);
    let mut weights = Vec::with_capacity(2 * n);
    let mf = f64::from(m);
    for (s, w) in base.iter() {
        nodes.push(0.5 * s.powi(m as i32));
        weights.push(0.5 * w * mf * s.powi(m as i32 - 1));
    }
    for k in (0..nodes.len()).rev() {
        nodes.push(1.0 - nodes[k]);
        weights.push(weights[k]);
    }
    LineRule { nodes, weights }
}

/// Rule on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are given in barycentric coordinates `(l0, l1, l2)` with respect to
/// the vertices; weights sum to one, so integrals are `|T| * sum(w f)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push_orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn push_orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn empty() -> Self {
        Self { points: Vec::new(), weights: Vec::new() }
    }

    /// 3-point rule, exact for degree 2.
    pub fn degree2() -> &'static Self {
        static RULE: OnceLock<TriangleRule> = OnceLock::new();
        RULE.get_or_init(|| {
            let mut r = Self::empty();
            r.push_orbit3(1.0 / 6.0, 1.0 / 3.0);
            r
        })
    }

    /// 7-point Radon rule, exact for degree 5.
    pub fn degree5() -> &'static Self {
        static RULE: OnceLock<TriangleRule> = OnceLock::new();
        RULE.get_or_init(|| {
            let s15 = 15f64.sqrt();
            let mut r = Self::empty();
            r.points.push([1.0 / 3.0; 3]);
            r.weights.push(9.0 / 40.0);
            r.push_orbit3((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
            r.push_orbit3((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
            r
        })
    }

    /// 16-point Dunavant rule, exact for degree 8.
    pub fn degree8() -> &'static Self {
        static RULE: OnceLock<TriangleRule> = OnceLock::new();
        RULE.get_or_init(|| {
            let mut r = Self::empty();
            r.points.push([1.0 / 3.0; 3]);
            r.weights.push(0.144_315_607_677_787);
            r.push_orbit3(0.459_292_588_292_723, 0.095_091_634_267_285);
            r.push_orbit3(0.170_569_307_751_760, 0.103_217_370_534_718);
            r.push_orbit3(0.050_547_228_317_031, 0.032_458_497_623_198);
            r.push_orbit6(0.008_394_777_409_958, 0.263_112_829_634_638, 0.027_230_314_174_435);
            r
        })
    }

    /// Collapsed (Duffy) tensor rule with the collapsed edge at vertex `apex`.
    ///
    /// The Jacobian of the collapse cancels a `1/r` singularity at the apex.
    pub fn duffy(n: usize, apex: usize) -> Self {
        let g = gauss(n);
        let mut r = Self::empty();
        for (u, wu) in g.iter() {
            for (v, wv) in g.iter() {
                // u: radial coordinate from the apex, v: angular coordinate.
                let mut p = [0.0; 3];
                p[apex] = 1.0 - u;
                p[(apex + 1) % 3] = u * (1.0 - v);
                p[(apex + 2) % 3] = u * v;
                r.points.push(p);
                r.weights.push(2.0 * wu * wv * u);
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(i: u32, j: u32) -> f64 {
        // int_T x^i y^j over the reference triangle = i! j! / (i + j + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    fn check_exactness(rule: &TriangleRule, degree: u32, tol: f64) {
        for i in 0..=degree {
            for j in 0..=(degree - i) {
                let approx: f64 = rule
                    .iter()
                    .map(|(p, w)| w * p[1].powi(i as i32) * p[2].powi(j as i32))
                    .sum::<f64>()
                    * 0.5;
                let exact = monomial_exact(i, j);
                assert!((approx - exact).abs() <= tol * exact.max(1e-3), "x^{i} y^{j}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact_to_their_degree() {
        check_exactness(TriangleRule::degree2(), 2, 1e-14);
        check_exactness(TriangleRule::degree5(), 5, 1e-14);
        check_exactness(TriangleRule::degree8(), 8, 1e-12);
        check_exactness(&TriangleRule::duffy(6, 0), 8, 1e-12);
        check_exactness(&TriangleRule::duffy(6, 2), 8, 1e-12);
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let g = gauss(4);
        let val = g.integrate(0.0, 2.0, |x| x.powi(7));
        assert!((val - 32.0).abs() < 1e-12);
        assert!((gauss(1).integrate(0.0, 1.0, |x| x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn graded_rules_sum_to_interval_length() {
        let r = graded(8, 5, 0.15);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let r = graded_both(8, 4, 0.15);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // x log x has a singular derivative at 0; the graded rule resolves it.
        let val = graded(16, 6, 0.15).integrate(0.0, 1.0, |x| x * x.ln());
        assert!((val + 0.25).abs() < 1e-13, "{}", val + 0.25);
    }

    #[test]
    fn power_graded_rule_handles_corner_singularities() {
        let rule = power_graded_both(8, 6);
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // t^(-6/7) near 0 and (1-t)^(-6/7) near 1 both integrate to 7
        let left = rule.integrate(0.0, 1.0, |t| t.powf(-6.0 / 7.0));
        let right = rule.integrate(0.0, 1.0, |t| (1.0 - t).powf(-6.0 / 7.0));
        assert!((left - 7.0).abs() < 0.02 && (right - 7.0).abs() < 0.02, "{left} {right}");
        let log2 = rule.integrate(0.0, 1.0, |t| t.ln().powi(2));
        assert!((log2 - 2.0).abs() < 1e-4, "{log2}");
    }
}
