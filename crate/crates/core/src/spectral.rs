//! Chebyshev grids on the delay interval, differentiation matrices,
//! barycentric interpolation and Clenshaw–Curtis quadrature.
//!
//! Everything is built once on the reference interval `[-1, 0]` (delay 1)
//! and rescaled: nodes scale with `tau`, the differentiation matrix with
//! `1/tau`, and the barycentric weights not at all.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("collocation degree must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("maximal delay must be positive, got {0}")]
    NonpositiveDelay(f64),
    #[error("theta = {theta} lies outside [-{tau}, 0]")]
    OutOfRange { theta: f64, tau: f64 },
    #[error("empty integration interval [{a}, {b}]")]
    EmptyInterval { a: f64, b: f64 },
}

/// Relative slack accepted outside `[-tau, 0]` by interpolation.
const RANGE_SLACK: f64 = 1e-12;
/// Relative distance under which a point is taken to be a node.
const NODE_HIT: f64 = 1e-14;

/// Chebyshev points of the second kind, `x_k = cos(k pi / n)`, computed
/// with the symmetric sine form so that `x_{n-k} = -x_k` exactly.
fn chebyshev_extrema(n: usize) -> Vec<f64> {
    let n_f = n as f64;
    (0..=n)
        .map(|k| (PI * (n_f - 2.0 * k as f64) / (2.0 * n_f)).sin())
        .collect()
}

/// Collocation grid `theta_k = (tau / 2) (cos(k pi / M) - 1)`, decreasing
/// from `theta_0 = 0` to `theta_M = -tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevGrid {
    degree: usize,
    tau: f64,
    nodes: Vec<f64>,
    reference_nodes: Vec<f64>,
    barycentric_weights: Vec<f64>,
}

impl ChebyshevGrid {
    pub fn new(degree: usize, tau: f64) -> Result<Self, SpectralError> {
        if degree < 1 {
            return Err(SpectralError::InvalidOrder(degree));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SpectralError::NonpositiveDelay(tau));
        }
        let reference_nodes: Vec<f64> = chebyshev_extrema(degree)
            .into_iter()
            .map(|x| (x - 1.0) / 2.0)
            .collect();
        // closed-form weights for Chebyshev extrema: alternating signs, halved ends
        let barycentric_weights = (0..=degree)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == degree {
                    sign / 2.0
                } else {
                    sign
                }
            })
            .collect();
        let mut grid = ChebyshevGrid {
            degree,
            tau: 1.0,
            nodes: Vec::new(),
            reference_nodes,
            barycentric_weights,
        };
        grid.set_tau(tau)?;
        Ok(grid)
    }

    /// Same grid for another maximal delay.
    pub fn set_tau(&mut self, tau: f64) -> Result<(), SpectralError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SpectralError::NonpositiveDelay(tau));
        }
        self.tau = tau;
        self.nodes = self.reference_nodes.iter().map(|s| tau * s).collect();
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodes on `[-1, 0]`.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.reference_nodes
    }

    pub fn barycentric_weights(&self) -> &[f64] {
        &self.barycentric_weights
    }

    /// Lagrange basis values `l_k(theta)`, `k = 0..=M`.
    pub fn lagrange_row(&self, theta: f64) -> Result<Vec<f64>, SpectralError> {
        let mut row = vec![0.0; self.degree + 1];
        self.lagrange_row_into(theta, &mut row)?;
        Ok(row)
    }

    pub fn lagrange_row_into(&self, theta: f64, row: &mut [f64]) -> Result<(), SpectralError> {
        let s = self.reference_point(theta)?;
        reference_lagrange_row(&self.reference_nodes, &self.barycentric_weights, s, row);
        Ok(())
    }

    /// `theta / tau`, clamped into `[-1, 0]` when within the slack.
    fn reference_point(&self, theta: f64) -> Result<f64, SpectralError> {
        let s = theta / self.tau;
        if !(s >= -1.0 - RANGE_SLACK && s <= RANGE_SLACK) {
            return Err(SpectralError::OutOfRange {
                theta,
                tau: self.tau,
            });
        }
        Ok(s.clamp(-1.0, 0.0))
    }

    /// Value at `theta` of the polynomial through `(theta_k, values[k])`.
    pub fn interpolate(&self, values: &[f64], theta: f64) -> Result<f64, SpectralError> {
        assert_eq!(values.len(), self.degree + 1, "one value per node");
        let s = self.reference_point(theta)?;
        Ok(reference_interpolate(
            &self.reference_nodes,
            &self.barycentric_weights,
            values,
            s,
        ))
    }

    /// Vector-valued interpolation: `values[k]` is the d-vector at node k.
    pub fn interpolate_vectors(
        &self,
        values: &[Vec<f64>],
        theta: f64,
    ) -> Result<Vec<f64>, SpectralError> {
        assert_eq!(values.len(), self.degree + 1, "one vector per node");
        let row = self.lagrange_row(theta)?;
        let d = values.first().map_or(0, Vec::len);
        let mut out = vec![0.0; d];
        for (l, v) in row.iter().zip(values) {
            if *l != 0.0 {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += l * x;
                }
            }
        }
        Ok(out)
    }
}

/// Barycentric formula of the second kind on reference nodes.
pub(crate) fn reference_interpolate(nodes: &[f64], weights: &[f64], values: &[f64], s: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&sk, &wk), &vk) in nodes.iter().zip(weights).zip(values) {
        let diff = s - sk;
        if diff.abs() <= NODE_HIT {
            return vk;
        }
        let c = wk / diff;
        num += c * vk;
        den += c;
    }
    num / den
}

pub(crate) fn reference_lagrange_row(nodes: &[f64], weights: &[f64], s: f64, row: &mut [f64]) {
    if let Some(hit) = nodes.iter().position(|&sk| (s - sk).abs() <= NODE_HIT) {
        row.iter_mut().for_each(|r| *r = 0.0);
        row[hit] = 1.0;
        return;
    }
    let mut den = 0.0;
    for ((r, &sk), &wk) in row.iter_mut().zip(nodes).zip(weights) {
        *r = wk / (s - sk);
        den += *r;
    }
    row.iter_mut().for_each(|r| *r /= den);
}

/// `Dhat` with `(Dhat)_{ij} = l_j'(theta_i)` and its submatrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrices {
    tau: f64,
    reference: DMatrix<f64>,
    dhat: DMatrix<f64>,
}

impl DiffMatrices {
    pub fn new(grid: &ChebyshevGrid) -> Self {
        let reference = reference_differentiation_matrix(grid);
        let dhat = &reference / grid.tau();
        DiffMatrices {
            tau: grid.tau(),
            reference,
            dhat,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Matrix for delay 1.
    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    /// Full `(M+1) x (M+1)` matrix.
    pub fn dhat(&self) -> &DMatrix<f64> {
        &self.dhat
    }

    /// First row and column removed, `M x M`.
    pub fn d(&self) -> DMatrix<f64> {
        let m = self.dhat.nrows() - 1;
        self.dhat.view((1, 1), (m, m)).into_owned()
    }

    /// First row removed, `M x (M+1)`.
    pub fn d_c(&self) -> DMatrix<f64> {
        let m = self.dhat.nrows() - 1;
        self.dhat.view((1, 0), (m, m + 1)).into_owned()
    }

    /// First column removed, `(M+1) x M`.
    pub fn d_r(&self) -> DMatrix<f64> {
        let m = self.dhat.nrows() - 1;
        self.dhat.view((0, 1), (m + 1, m)).into_owned()
    }
}

pub fn differentiation_matrices(grid: &ChebyshevGrid) -> DiffMatrices {
    DiffMatrices::new(grid)
}

/// Differentiation matrix on the reference nodes, off-diagonal entries
/// from the barycentric formula and diagonal entries from the negative
/// row sum.
fn reference_differentiation_matrix(grid: &ChebyshevGrid) -> DMatrix<f64> {
    let m = grid.degree();
    let w = grid.barycentric_weights();
    let mf = m as f64;
    let mut d = DMatrix::zeros(m + 1, m + 1);
    for i in 0..=m {
        let mut row_sum = 0.0;
        for j in 0..=m {
            if i == j {
                continue;
            }
            // s_i - s_j = (x_i - x_j) / 2 with the difference of cosines
            // rewritten as a product of sines to avoid cancellation
            let xi_minus_xj = 2.0
                * (PI * (i + j) as f64 / (2.0 * mf)).sin()
                * (PI * (j as f64 - i as f64) / (2.0 * mf)).sin();
            let entry = (w[j] / w[i]) / (xi_minus_xj / 2.0);
            d[(i, j)] = entry;
            row_sum += entry;
        }
        d[(i, i)] = -row_sum;
    }
    d
}

/// Clenshaw–Curtis rule on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    degree: usize,
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// The same rule mapped affinely onto `[a, b]`.
    pub fn rescaled(&self, a: f64, b: f64) -> Result<QuadRule, SpectralError> {
        if !(a < b) {
            return Err(SpectralError::EmptyInterval { a, b });
        }
        let ratio = (b - a) / (self.b - self.a);
        Ok(QuadRule {
            degree: self.degree,
            a,
            b,
            nodes: self
                .nodes
                .iter()
                .map(|x| a + (x - self.a) * ratio)
                .collect(),
            weights: self.weights.iter().map(|w| w * ratio).collect(),
        })
    }
}

/// Weights from the cosine-series construction of Clenshaw and Curtis;
/// nodes are `cos(k pi / Q)` mapped onto `[a, b]`, running from `b` to `a`.
pub fn clenshaw_curtis(degree: usize, a: f64, b: f64) -> Result<QuadRule, SpectralError> {
    if degree < 1 {
        return Err(SpectralError::InvalidOrder(degree));
    }
    if !(a < b) {
        return Err(SpectralError::EmptyInterval { a, b });
    }
    let n = degree;
    let nf = n as f64;
    let x = chebyshev_extrema(n);
    let mut w = vec![0.0; n + 1];
    let interior = |k: usize| PI * k as f64 / nf;
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
    }
    for (i, wi) in w.iter_mut().enumerate().take(n).skip(1) {
        let th = interior(i);
        let mut v = 1.0;
        if n % 2 == 0 {
            for k in 1..n / 2 {
                let kf = k as f64;
                v -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
            v -= (nf * th).cos() / (nf * nf - 1.0);
        } else {
            for k in 1..=(n - 1) / 2 {
                let kf = k as f64;
                v -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        *wi = 2.0 * v / nf;
    }
    let half = (b - a) / 2.0;
    Ok(QuadRule {
        degree,
        a,
        b,
        nodes: x.iter().map(|xi| a + (xi + 1.0) * half).collect(),
        weights: w.iter().map(|wi| wi * half).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exact derivative of the Lagrange basis by the product rule:
    /// `l_j'(x) = l_j(x) * sum_{m != j} 1 / (x - x_m)` away from the nodes,
    /// and at node `x_i != x_j`: `prod_{m != i,j} (x_i - x_m) / prod_{m != j} (x_j - x_m)`.
    fn lagrange_derivative_oracle(nodes: &[f64], i: usize, j: usize) -> f64 {
        let n = nodes.len();
        let denom: f64 = (0..n).filter(|&m| m != j).map(|m| nodes[j] - nodes[m]).product();
        if i != j {
            let num: f64 = (0..n)
                .filter(|&m| m != i && m != j)
                .map(|m| nodes[i] - nodes[m])
                .product();
            num / denom
        } else {
            (0..n).filter(|&m| m != j).map(|m| 1.0 / (nodes[j] - nodes[m])).sum()
        }
    }

    /// Monomial coefficients of the Lagrange basis polynomial, integrated
    /// exactly on `[a, b]`.
    fn lagrange_integral_oracle(nodes: &[f64], j: usize, a: f64, b: f64) -> f64 {
        let mut coeffs = vec![1.0];
        let mut denom = 1.0;
        for (m, &xm) in nodes.iter().enumerate() {
            if m == j {
                continue;
            }
            denom *= nodes[j] - xm;
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * xm;
            }
            coeffs = next;
        }
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let p = (k + 1) as i32;
                c * (b.powi(p) - a.powi(p)) / p as f64
            })
            .sum::<f64>()
            / denom
    }

    #[test]
    fn small_grids() {
        let g = ChebyshevGrid::new(1, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, -1.0]);
        let g = ChebyshevGrid::new(2, 2.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_abs_diff_eq!(g.nodes()[1], -1.0, epsilon = 1e-15);
        assert_eq!(g.nodes()[2], -2.0);
        let g = ChebyshevGrid::new(4, 1.0).unwrap();
        assert_eq!(g.nodes()[2], -0.5);
    }

    #[test]
    fn grid_errors() {
        assert_eq!(ChebyshevGrid::new(0, 1.0), Err(SpectralError::InvalidOrder(0)));
        assert!(matches!(
            ChebyshevGrid::new(3, 0.0),
            Err(SpectralError::NonpositiveDelay(_))
        ));
        assert!(matches!(
            ChebyshevGrid::new(3, -1.0),
            Err(SpectralError::NonpositiveDelay(_))
        ));
    }

    #[test]
    fn nodes_monotone_with_endpoints() {
        for m in 1..=64 {
            for tau in [0.3, 1.0, 20.3] {
                let g = ChebyshevGrid::new(m, tau).unwrap();
                let n = g.nodes();
                assert_eq!(n[0], 0.0);
                assert_eq!(n[m], -tau);
                assert!(n.windows(2).all(|w| w[0] > w[1]), "M={m}");
            }
        }
    }

    #[test]
    fn first_order_matrix() {
        let d = DiffMatrices::new(&ChebyshevGrid::new(1, 1.0).unwrap());
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        assert_abs_diff_eq!(d.dhat(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_first_row() {
        let d = DiffMatrices::new(&ChebyshevGrid::new(2, 2.0).unwrap());
        let row: Vec<f64> = d.dhat().row(0).iter().copied().collect();
        assert_abs_diff_eq!(row[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(row[1], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(row[2], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn matrix_matches_product_rule_oracle() {
        for m in [1, 2, 5, 10, 16] {
            let g = ChebyshevGrid::new(m, 1.7).unwrap();
            let d = DiffMatrices::new(&g);
            for i in 0..=m {
                for j in 0..=m {
                    let exact = lagrange_derivative_oracle(g.nodes(), i, j);
                    let scale = 1.0 + exact.abs();
                    assert!(
                        (d.dhat()[(i, j)] - exact).abs() <= 1e-10 * scale,
                        "M={m} ({i},{j}) {} vs {exact}",
                        d.dhat()[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn row_sums_vanish() {
        for m in 1..=64 {
            let d = DiffMatrices::new(&ChebyshevGrid::new(m, 0.7).unwrap());
            let norm = d.dhat().row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
            for r in d.dhat().row_iter() {
                assert!(r.sum().abs() <= 1e-12 * norm, "M={m}");
            }
        }
    }

    #[test]
    fn submatrices_and_scaling() {
        let g1 = ChebyshevGrid::new(6, 1.0).unwrap();
        let g3 = ChebyshevGrid::new(6, 3.0).unwrap();
        let d1 = DiffMatrices::new(&g1);
        let d3 = DiffMatrices::new(&g3);
        assert_eq!(d3.dhat(), &(d1.dhat() / 3.0));
        assert_eq!(d3.d(), d3.dhat().view((1, 1), (6, 6)).into_owned());
        assert_eq!(d3.d_c().shape(), (6, 7));
        assert_eq!(d3.d_r().shape(), (7, 6));
        assert_eq!(d3.d_c()[(0, 0)], d3.dhat()[(1, 0)]);
        assert_eq!(d3.d_r()[(0, 0)], d3.dhat()[(0, 1)]);
    }

    #[test]
    fn differentiation_exact_on_polynomials() {
        for m in 1..=20 {
            let g = ChebyshevGrid::new(m, 2.5).unwrap();
            let d = DiffMatrices::new(&g);
            // p(x) = sum_k c_k x^k with c_k = 1/(k+1)
            let p = |x: f64| (0..=m).map(|k| x.powi(k as i32) / (k + 1) as f64).sum::<f64>();
            let dp = |x: f64| {
                (1..=m)
                    .map(|k| k as f64 * x.powi(k as i32 - 1) / (k + 1) as f64)
                    .sum::<f64>()
            };
            let vals = nalgebra::DVector::from_iterator(m + 1, g.nodes().iter().map(|&x| p(x)));
            let der = d.dhat() * vals;
            for (i, &x) in g.nodes().iter().enumerate() {
                let exact = dp(x);
                assert!(
                    (der[i] - exact).abs() <= 1e-10 * (1.0 + exact.abs()) * (m * m) as f64,
                    "M={m} i={i}: {} vs {exact}",
                    der[i]
                );
            }
        }
    }

    #[test]
    fn interpolation_hits_nodes_exactly() {
        let g = ChebyshevGrid::new(7, 1.3).unwrap();
        let vals: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        for (k, &th) in g.nodes().iter().enumerate() {
            assert_eq!(g.interpolate(&vals, th).unwrap(), vals[k]);
        }
        let c = vec![4.25; 8];
        assert_abs_diff_eq!(g.interpolate(&c, -0.77).unwrap(), 4.25, epsilon = 1e-14);
    }

    #[test]
    fn interpolation_of_cubic() {
        // deterministic pseudo-random points
        let g = ChebyshevGrid::new(3, 1.0).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| x.powi(3)).collect();
        let mut state = 0x2545F4914F6CDD1Du64;
        for _ in 0..100 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let th = -((state >> 11) as f64 / (1u64 << 53) as f64);
            let v = g.interpolate(&vals, th).unwrap();
            assert_abs_diff_eq!(v, th.powi(3), epsilon = 1e-13);
        }
    }

    #[test]
    fn interpolation_range() {
        let g = ChebyshevGrid::new(4, 2.0).unwrap();
        let vals = vec![1.0; 5];
        assert!(g.interpolate(&vals, 0.1).is_err());
        assert!(g.interpolate(&vals, -2.1).is_err());
        assert!(g.interpolate(&vals, 1e-13).is_ok());
        assert!(g.interpolate(&vals, -2.0 - 1e-13).is_ok());
        let vv: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64, 1.0]).collect();
        let out = g.interpolate_vectors(&vv, g.nodes()[3]).unwrap();
        assert_eq!(out, vec![3.0, 1.0]);
    }

    #[test]
    fn clenshaw_curtis_q2() {
        let q = clenshaw_curtis(2, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(q.weights()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[2], 1.0 / 3.0, epsilon = 1e-15);
        let q = clenshaw_curtis(2, -3.0, -1.0).unwrap();
        assert_abs_diff_eq!(q.integrate(|x| x), -4.0, epsilon = 1e-13);
        assert!(matches!(
            clenshaw_curtis(3, 1.0, 1.0),
            Err(SpectralError::EmptyInterval { .. })
        ));
    }

    #[test]
    fn clenshaw_curtis_matches_exact_lagrange_integrals() {
        for q in 1..=12 {
            let (a, b) = (-2.0, 0.5);
            let rule = clenshaw_curtis(q, a, b).unwrap();
            // oracle on [-1, 1] for conditioning, then scaled
            let unit: Vec<f64> = rule.nodes().iter().map(|x| 2.0 * (x - a) / (b - a) - 1.0).collect();
            for j in 0..=q {
                let exact = lagrange_integral_oracle(&unit, j, -1.0, 1.0) * (b - a) / 2.0;
                assert_abs_diff_eq!(rule.weights()[j], exact, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn clenshaw_curtis_exact_on_monomials() {
        for q in 1..=24 {
            let (a, b) = (-3.0, -1.0);
            let rule = clenshaw_curtis(q, a, b).unwrap();
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert_abs_diff_eq!(rule.weights().iter().sum::<f64>(), b - a, epsilon = 1e-13);
            for k in 0..=q {
                let p = (k + 1) as i32;
                let exact = (b.powi(p) - a.powi(p)) / p as f64;
                let got = rule.integrate(|x| x.powi(k as i32));
                assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "Q={q} k={k}");
            }
        }
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_polynomials(
            m in 1usize..16,
            tau in 0.1f64..25.0,
            coeffs in proptest::collection::vec(-2.0f64..2.0, 16),
            t in 0.0f64..1.0,
        ) {
            let g = ChebyshevGrid::new(m, tau).unwrap();
            let p = |x: f64| {
                let s = x / tau;
                (0..=m).rev().fold(0.0, |acc, k| acc * s + coeffs[k])
            };
            let vals: Vec<f64> = g.nodes().iter().map(|&x| p(x)).collect();
            let th = -t * tau;
            let got = g.interpolate(&vals, th).unwrap();
            prop_assert!((got - p(th)).abs() <= 1e-11 * (1.0 + p(th).abs()));
        }

        #[test]
        fn weights_sum_to_length(q in 1usize..40, a in -10.0f64..0.0, len in 0.01f64..10.0) {
            let rule = clenshaw_curtis(q, a, a + len).unwrap();
            let s: f64 = rule.weights().iter().sum();
            prop_assert!((s - len).abs() <= 1e-13 * len.max(1.0));
        }
    }
}
