//! The per-coordinate convex subproblem shared by the sharpness test and DL-BCD.
//!
//! Replacing row `k` of `Q = D⁻¹` by `wᵀQ` (with `w[k] = 1`) and rescaling the
//! other rows so that `Q⁻¹` keeps unit columns changes the l1 objective to
//!
//! ```text
//! f(w) = Σᵢ |⟨βᵢ, w⟩| + Σ_{h≠k} cₕ √((wₕ − mₕ)² + 1 − mₕ²)
//! ```
//!
//! where `βᵢ = Q yᵢ`, `mₕ = ⟨Dₕ, Dₖ⟩` and `cₕ = Σᵢ |βᵢₕ|`. The current
//! dictionary is a sharp local minimum exactly when every such `f` is
//! minimized at the canonical vector `eₖ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, DlError, Result};

/// Collinearities are clamped to `|m| ≤ 1 − COLLINEARITY_GAP` so the root
/// terms stay strictly convex and differentiable.
pub const COLLINEARITY_GAP: f64 = 1e-9;

/// Problem data for coordinate `k`.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    /// K×n_active; column `i` is the i-th sample of the first term.
    samples: DMatrix<f64>,
    /// Squared norms of the samples with coordinate `k` removed.
    free_norm_sq: Vec<f64>,
    k: usize,
    m_row: DVector<f64>,
    weights: DVector<f64>,
    active_first: Vec<bool>,
}

impl SubproblemData {
    /// Untruncated data: every sample enters both terms.
    pub fn new(beta: &DMatrix<f64>, k: usize, m_row: &[f64]) -> Result<Self> {
        Self::truncated(beta, k, m_row, f64::INFINITY)
    }

    /// Truncated data: the first term keeps samples with `|βᵢₖ| < tau`, and
    /// `cₕ` sums `|βᵢₕ|` over samples with `|βᵢₕ| < tau`.
    pub fn truncated(beta: &DMatrix<f64>, k: usize, m_row: &[f64], tau: f64) -> Result<Self> {
        let dim = beta.ncols();
        if k >= dim {
            return Err(DlError::Parameter(format!("coordinate {k} out of range for K = {dim}")));
        }
        if m_row.len() != dim {
            return Err(shape_err(format!("collinearity row of length {dim}"), m_row.len().to_string()));
        }
        if !(tau > 0.0) {
            return Err(DlError::Parameter(format!("truncation threshold must be positive, got {tau}")));
        }
        let limit = 1.0 - COLLINEARITY_GAP;
        let m_row = DVector::from_fn(dim, |h, _| if h == k { 0.0 } else { m_row[h].clamp(-limit, limit) });
        let active_first: Vec<bool> = beta.column(k).iter().map(|v| v.abs() < tau).collect();
        let active: Vec<usize> = (0..beta.nrows()).filter(|&i| active_first[i]).collect();
        let samples = DMatrix::from_fn(dim, active.len(), |h, j| beta[(active[j], h)]);
        let weights = DVector::from_fn(dim, |h, _| {
            if h == k {
                0.0
            } else {
                beta.column(h).iter().map(|v| v.abs()).filter(|v| *v < tau).sum()
            }
        });
        let free_norm_sq = samples
            .column_iter()
            .map(|c| c.norm_squared() - c[k] * c[k])
            .map(|v| v.max(0.0))
            .collect();
        Ok(Self { samples, free_norm_sq, k, m_row, weights, active_first })
    }

    pub fn dim(&self) -> usize {
        self.m_row.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Clamped collinearities; entry `k` is zero and unused.
    pub fn m_row(&self) -> &DVector<f64> {
        &self.m_row
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Which samples enter the first term.
    pub fn active_first(&self) -> &[bool] {
        &self.active_first
    }

    /// The canonical starting point `eₖ`.
    pub fn unit(&self) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim());
        w[self.k] = 1.0;
        w
    }

    fn check(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(shape_err(format!("vector of length {}", self.dim()), w.len().to_string()));
        }
        if w[self.k] != 1.0 {
            return Err(DlError::Contract(format!("w[{}] must equal 1, got {}", self.k, w[self.k])));
        }
        Ok(())
    }

    fn root(&self, h: usize, wh: f64) -> f64 {
        let m = self.m_row[h];
        ((wh - m) * (wh - m) + 1.0 - m * m).sqrt()
    }

    fn residuals(&self, w: &DVector<f64>) -> DVector<f64> {
        self.samples.tr_mul(w)
    }

    fn eval(&self, w: &DVector<f64>) -> f64 {
        let first: f64 = self.residuals(w).iter().map(|v| v.abs()).sum();
        let second: f64 = (0..self.dim())
            .filter(|&h| h != self.k && self.weights[h] != 0.0)
            .map(|h| self.weights[h] * self.root(h, w[h]))
            .sum();
        first + second
    }

    fn smooth_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |h, _| {
            if h == self.k || self.weights[h] == 0.0 {
                0.0
            } else {
                self.weights[h] * (w[h] - self.m_row[h]) / self.root(h, w[h])
            }
        })
    }

    /// `f(w)`; fails unless `w[k] = 1`.
    pub fn objective(&self, w: &DVector<f64>) -> Result<f64> {
        self.check(w)?;
        Ok(self.eval(w))
    }

    /// A subgradient with `sign(0) = 0` on the l1 term; component `k` is 0.
    pub fn subgradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(w)?;
        let r = self.residuals(w);
        let mut g = self.smooth_gradient(w);
        for (i, ri) in r.iter().enumerate() {
            if *ri != 0.0 {
                g.axpy(ri.signum(), &self.samples.column(i), 1.0);
            }
        }
        g[self.k] = 0.0;
        Ok(g)
    }

    /// Magnitude used to make the stationarity tolerance scale-free.
    fn scale(&self) -> f64 {
        let first: f64 = self.samples.iter().map(|v| v.abs()).sum();
        first + self.weights.sum()
    }

    /// Shortest element of the subdifferential enlarged to every kink within
    /// distance `eps` of `w`, together with the number of such kinks.
    ///
    /// Kinks in the enlarged set get a multiplier in `[-1, 1]`; the multipliers
    /// are found by cyclic coordinate descent on the squared norm.
    fn shortest_subgradient(&self, w: &DVector<f64>, r: &DVector<f64>, eps: f64, target: f64) -> (DVector<f64>, usize) {
        let k = self.k;
        let mut v = self.smooth_gradient(w);
        let mut near = Vec::new();
        let mut t = Vec::new();
        for (i, ri) in r.iter().enumerate() {
            let nsq = self.free_norm_sq[i];
            if nsq == 0.0 {
                continue;
            }
            let sgn = if *ri > 0.0 {
                1.0
            } else if *ri < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sgn != 0.0 {
                v.axpy(sgn, &self.samples.column(i), 1.0);
            }
            if ri.abs() <= eps * nsq.sqrt() {
                near.push(i);
                t.push(sgn);
            }
        }
        v[k] = 0.0;
        let mut prev = v.norm_squared();
        for _ in 0..MAX_QP_SWEEPS {
            if prev.sqrt() <= target {
                break;
            }
            for (slot, &i) in near.iter().enumerate() {
                let col = self.samples.column(i);
                let step = col.dot(&v) / self.free_norm_sq[i];
                let next = (t[slot] - step).clamp(-1.0, 1.0);
                let delta = next - t[slot];
                if delta != 0.0 {
                    v.axpy(delta, &col, 1.0);
                    v[k] = 0.0;
                    t[slot] = next;
                }
            }
            let current = v.norm_squared();
            if prev - current <= 1e-10 * prev {
                break;
            }
            prev = current;
        }
        (v, near.len())
    }
}

const MAX_QP_SWEEPS: usize = 200;
const EPS_START: f64 = 1e-3;
const EPS_MIN: f64 = 1e-11;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const STALL_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stationarity tolerance, relative to the size of the objective's
    /// subgradients (`Σ‖βᵢ‖₁ + Σcₕ`). Also the relative stall threshold.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub w: DVector<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, fresh: bool) -> bool {
    let sy = s.dot(y);
    if !(sy > 1e-12 * s.norm() * y.norm()) {
        return false;
    }
    if fresh {
        let gamma = sy / y.norm_squared();
        *h *= gamma;
    }
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // H⁺ = H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
    h.ger(-rho, &hy, s, 1.0);
    h.ger(-rho, s, &hy, 1.0);
    h.ger(rho * rho * yhy + rho, s, s, 1.0);
    true
}

/// Minimizes the subproblem from `w0` over the free coordinates.
///
/// Each iteration computes the shortest element of an enlarged subdifferential,
/// moves along its BFGS-preconditioned negative (falling back to the plain
/// negative), and accepts steps by backtracking on objective values only, so
/// the objective never increases. The enlargement radius shrinks whenever the
/// current point is stationary at that radius. The result is `converged` when
/// the shortest subgradient at the smallest radius is within `tol` relative to
/// the problem scale, or after five consecutive iterations with relative
/// objective decrease below `tol`.
pub fn solve(data: &SubproblemData, w0: &DVector<f64>, options: &SolverOptions) -> Result<SolveResult> {
    data.check(w0)?;
    if !(options.tol > 0.0) {
        return Err(DlError::Parameter("solver tolerance must be positive".into()));
    }
    let dim = data.dim();
    let k = data.k;
    let scale = data.scale();
    let mut w = w0.clone();
    let mut f = data.eval(&w);
    if scale == 0.0 {
        return Ok(SolveResult { w, objective_value: f, iterations: 0, converged: true });
    }
    let target = options.tol * scale;
    let identity = || {
        let mut h = DMatrix::identity(dim, dim);
        h[(k, k)] = 0.0;
        h
    };
    let mut h = identity();
    let mut fresh = true;
    let mut eps = EPS_START;
    let mut stall = 0;
    let mut r = data.residuals(&w);
    let (mut g, mut near) = data.shortest_subgradient(&w, &r, eps, target);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        iterations += 1;
        if g.norm() <= target {
            // Stationary at radius eps; done if no kink lies between EPS_MIN and eps.
            let (g_min, near_min) = data.shortest_subgradient(&w, &r, EPS_MIN, target);
            if near_min == near || g_min.norm() <= target {
                converged = true;
                break;
            }
            eps = (eps * 0.1).max(EPS_MIN);
            (g, near) = data.shortest_subgradient(&w, &r, eps, target);
            h = identity();
            fresh = true;
            continue;
        }

        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        let quasi_newton = !fresh;
        if !(slope < 0.0) {
            d = -g.clone();
            slope = -g.norm_squared();
        }
        let mut alpha = if fresh { (1.0 / d.norm()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &w + &d * alpha;
            let ft = data.eval(&trial);
            if ft <= f + ARMIJO * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }

        let mut progress = false;
        if let Some((mut next, fnext)) = accepted {
            next[k] = 1.0;
            progress = f - fnext >= options.tol * (1.0 + f.abs());
            let r_next = data.residuals(&next);
            let (g_next, near_next) = data.shortest_subgradient(&next, &r_next, eps, target);
            let s = &next - &w;
            let y = &g_next - &g;
            if bfgs_update(&mut h, &s, &y, fresh) {
                fresh = false;
            }
            w = next;
            f = fnext;
            r = r_next;
            g = g_next;
            near = near_next;
        }
        if progress {
            stall = 0;
        } else if quasi_newton {
            h = identity();
            fresh = true;
        } else if eps > EPS_MIN {
            // Near-stationary only because of kinks inside the enlargement.
            eps = (eps * 0.1).max(EPS_MIN);
            (g, near) = data.shortest_subgradient(&w, &r, eps, target);
            h = identity();
            fresh = true;
        } else {
            stall += 1;
        }
        if stall >= STALL_LIMIT {
            converged = true;
            break;
        }
    }

    w[k] = 1.0;
    Ok(SolveResult { w, objective_value: f, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_models::{sample_coefficients, CoefficientModel};
    use crate::dictionary::Dictionary;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_sample_data() -> SubproblemData {
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        SubproblemData::new(&beta, 0, &[1.0, 0.0]).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> SubproblemData {
        let beta = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.6..0.6)).collect();
        SubproblemData::new(&beta, rng.random_range(0..dim), &m).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, data: &SubproblemData) -> DVector<f64> {
        let mut w = DVector::from_fn(data.dim(), |_, _| rng.random_range(-1.5..1.5));
        w[data.k()] = 1.0;
        w
    }

    #[test]
    fn objective_at_unit_is_total_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_problem(&mut rng, 50, 5);
        let beta_l1: f64 = data.samples.iter().map(|v| v.abs()).sum();
        assert_abs_diff_eq!(data.objective(&data.unit()).unwrap(), beta_l1, epsilon = 1e-10);
    }

    #[test]
    fn hand_evaluated_two_dimensional_objective() {
        let data = two_sample_data();
        for w2 in [-1.3, 0.0, 0.4, 2.0] {
            let w = DVector::from_vec(vec![1.0, w2]);
            let expected = 1.0 + f64::abs(w2) + (w2 * w2 + 1.0).sqrt();
            assert_abs_diff_eq!(data.objective(&w).unwrap(), expected, epsilon = 1e-14);
        }
        let bad = DVector::from_vec(vec![0.5, 0.0]);
        assert!(matches!(data.objective(&bad), Err(DlError::Contract(_))));
        assert!(matches!(data.subgradient(&bad), Err(DlError::Contract(_))));
    }

    #[test]
    fn zero_data_is_constant() {
        let data = SubproblemData::new(&DMatrix::zeros(7, 3), 1, &[0.2, 0.0, -0.4]).unwrap();
        let w0 = DVector::from_vec(vec![0.3, 1.0, -2.0]);
        assert_eq!(data.objective(&w0).unwrap(), 0.0);
        let res = solve(&data, &w0, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.w, w0);
    }

    #[test]
    fn subgradient_at_unit_with_orthogonal_collinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let beta = DMatrix::from_fn(30, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = SubproblemData::new(&beta, 2, &[0.0; 4]).unwrap();
        let g = data.subgradient(&data.unit()).unwrap();
        for h in 0..4 {
            let expected: f64 = if h == 2 { 0.0 } else { (0..30).map(|i| beta[(i, h)] * beta[(i, 2)].signum()).sum() };
            assert_abs_diff_eq!(g[h], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_unit_sample_has_no_first_term_gradient() {
        let beta = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let data = SubproblemData::new(&beta, 1, &[0.0; 3]).unwrap();
        assert_eq!(data.subgradient(&data.unit()).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn subgradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_problem(&mut rng, 40, 6);
        for _ in 0..20 {
            let w = random_point(&mut rng, &data);
            let g = data.subgradient(&w).unwrap();
            let h = 1e-6;
            for j in (0..6).filter(|&j| j != data.k()) {
                let mut plus = w.clone();
                let mut minus = w.clone();
                plus[j] += h;
                minus[j] -= h;
                let fd = (data.eval(&plus) - data.eval(&minus)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn convexity_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_problem(&mut rng, 25, 4);
        for _ in 0..1000 {
            let a = random_point(&mut rng, &data);
            let b = random_point(&mut rng, &data);
            let lambda: f64 = rng.random();
            let mid = &a * lambda + &b * (1.0 - lambda);
            assert!(data.eval(&mid) <= lambda * data.eval(&a) + (1.0 - lambda) * data.eval(&b) + 1e-10);
        }
    }

    #[test]
    fn two_dimensional_minimum() {
        let data = two_sample_data();
        let res = solve(&data, &DVector::from_vec(vec![1.0, 1.7]), &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.w[0], 1.0);
        assert!(res.w[1].abs() < 1e-6);
        assert_abs_diff_eq!(res.objective_value, 2.0, epsilon = 1e-9);
    }

    fn grid_minimum(data: &SubproblemData, step: f64, half_width: f64) -> f64 {
        let free: Vec<usize> = (0..data.dim()).filter(|&h| h != data.k()).collect();
        let count = (2.0 * half_width / step).round() as i64;
        let mut best = f64::INFINITY;
        let mut w = data.unit();
        let visit = |w: &mut DVector<f64>, best: &mut f64| *best = best.min(data.eval(w));
        if free.len() == 1 {
            for a in 0..=count {
                w[free[0]] = -half_width + a as f64 * step;
                visit(&mut w, &mut best);
            }
        } else {
            for a in 0..=count {
                w[free[0]] = -half_width + a as f64 * step;
                for b in 0..=count {
                    w[free[1]] = -half_width + b as f64 * step;
                    visit(&mut w, &mut best);
                }
            }
        }
        best
    }

    #[test]
    fn matches_grid_search_in_low_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2, 3] {
            for _ in 0..3 {
                let data = random_problem(&mut rng, 12, dim);
                let res = solve(&data, &data.unit(), &SolverOptions::default()).unwrap();
                assert!(res.converged);
                // Minimizers lie well inside [-2, 2] for collinearities below 0.6.
                let (step, width) = if dim == 2 { (1e-3, 2.0) } else { (2e-3, 2.0) };
                let grid = grid_minimum(&data, step, width);
                assert!(res.objective_value <= grid + 1e-5, "{} vs grid {grid}", res.objective_value);
            }
        }
    }

    #[test]
    fn iterates_keep_fixed_coordinate_and_never_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let data = random_problem(&mut rng, 60, 5);
            let w0 = random_point(&mut rng, &data);
            let f0 = data.eval(&w0);
            let res = solve(&data, &w0, &SolverOptions::default()).unwrap();
            assert_eq!(res.w[data.k()], 1.0);
            assert!(res.objective_value <= f0);
            assert_abs_diff_eq!(res.objective_value, data.eval(&res.w), epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_is_minimizer_under_identifiable_model() {
        let (dim, s, mu, n) = (20, 5, 0.1, 5000);
        let model = CoefficientModel::sparse_gaussian(dim, s).unwrap();
        let alpha = sample_coefficients(&model, n, 11).unwrap();
        let m = Dictionary::constant_collinearity(dim, mu).unwrap().collinearity();
        for k in 0..dim {
            let row: Vec<f64> = m.matrix().row(k).iter().copied().collect();
            let data = SubproblemData::new(&alpha, k, &row).unwrap();
            let res = solve(&data, &data.unit(), &SolverOptions::default()).unwrap();
            assert!(res.converged);
            assert!((&res.w - data.unit()).norm() < 1e-4, "k = {k}");
        }
    }

    #[test]
    fn truncation_masks() {
        let beta = DMatrix::from_row_slice(3, 2, &[0.1, 2.0, 3.0, 0.2, 0.4, 0.3]);
        let data = SubproblemData::truncated(&beta, 0, &[1.0, 0.5], 1.0).unwrap();
        assert_eq!(data.active_first(), &[true, false, true]);
        assert_abs_diff_eq!(data.weights()[1], 0.5, epsilon = 1e-15);
        assert_eq!(data.weights()[0], 0.0);
        assert!(SubproblemData::truncated(&beta, 0, &[1.0, 0.5], 0.0).is_err());
    }

    #[test]
    fn collinearity_is_clamped() {
        let beta = DMatrix::from_element(2, 3, 1.0);
        let data = SubproblemData::new(&beta, 0, &[1.0, 1.2, -3.0]).unwrap();
        assert_eq!(data.m_row()[1], 1.0 - COLLINEARITY_GAP);
        assert_eq!(data.m_row()[2], -(1.0 - COLLINEARITY_GAP));
        assert!(data.objective(&data.unit()).unwrap().is_finite());
    }
}
