//! Sinkhorn scaling iteration for uniform marginals `1/m`, `1/n`.
//!
//! The plain form alternates `u ← (1/m) / (G v)` and `v ← (1/n) / (Gᵀ u)`
//! with `G = exp(-C/ε)`. The stabilized form runs the same updates on the
//! potentials `f = log u`, `g = log v`, replacing each matrix-vector product
//! by a row- or column-wise log-sum-exp, so it survives kernels whose entries
//! underflow to zero.

use rayon::prelude::*;

use super::matrix::{entropy, marginal_residual, CostMatrix, CouplingMatrix};
use crate::error::{invalid, Error, Result};

/// Below this many matrix entries the row sweeps stay on the calling thread.
const PARALLEL_MIN_ENTRIES: usize = 1 << 16;

/// `exp(x)` rounds to zero for every `x` below this.
const EXP_UNDERFLOW: f64 = -746.0;

/// `exp` with the underflow range short-circuited; same result bit for bit.
#[inline]
pub(crate) fn exp_or_zero(x: f64) -> f64 {
    if x < EXP_UNDERFLOW {
        0.0
    } else {
        x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostNormalization {
    None,
    #[default]
    DivideByMax,
    DivideByMedian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    /// Regularization strength, relative to the normalized cost.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop early once the marginal residual is at or below this value.
    pub marginal_tolerance: f64,
    /// Run the updates in the log domain.
    pub stabilized: bool,
    pub cost_normalization: CostNormalization,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iterations: 30,
            marginal_tolerance: 0.0,
            stabilized: true,
            cost_normalization: CostNormalization::DivideByMax,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.marginal_tolerance >= 0.0) {
            return Err(invalid(format!(
                "marginal_tolerance must be nonnegative, got {}",
                self.marginal_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub coupling: CouplingMatrix,
    /// Row scalings `u`. May under- or overflow in stabilized mode; use
    /// [`log_u`](Self::log_u) there.
    pub dual_u: Vec<f64>,
    pub dual_v: Vec<f64>,
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    /// `⟨P, C⟩` in the units of the input cost.
    pub primal_cost: f64,
    /// `⟨P, C⟩ - ε_eff H(P)` in the units of the input cost.
    pub regularized_value: f64,
    pub iterations_run: usize,
    pub marginal_residual: f64,
    /// Factor the cost was divided by before solving (1 without normalization).
    pub cost_scale: f64,
    /// `epsilon * cost_scale`, the regularization in input cost units.
    pub effective_epsilon: f64,
}

/// Scale applied to the cost and the derivative of that scale with respect
/// to the cost entries, as `(flat index, weight)` pairs.
#[derive(Debug, Clone)]
pub(crate) struct CostScale {
    pub value: f64,
    pub support: Vec<(usize, f64)>,
}

impl CostScale {
    pub fn of(cost: &CostMatrix, mode: CostNormalization) -> Self {
        let data = cost.as_slice();
        let (value, support) = match mode {
            CostNormalization::None => return Self::unit(),
            CostNormalization::DivideByMax => {
                let mut best = 0;
                for (k, &c) in data.iter().enumerate() {
                    if c > data[best] {
                        best = k;
                    }
                }
                (data[best], vec![(best, 1.0)])
            }
            CostNormalization::DivideByMedian => {
                let mut idx: Vec<usize> = (0..data.len()).collect();
                let by_value = |a: &usize, b: &usize| data[*a].total_cmp(&data[*b]).then(a.cmp(b));
                let mid = data.len() / 2;
                let (lower, &mut upper, _) = idx.select_nth_unstable_by(mid, by_value);
                if data.len() % 2 == 1 {
                    (data[upper], vec![(upper, 1.0)])
                } else {
                    let below = *lower.iter().max_by(|a, b| by_value(a, b)).unwrap();
                    (
                        0.5 * (data[below] + data[upper]),
                        vec![(below, 0.5), (upper, 0.5)],
                    )
                }
            }
        };
        if value > 0.0 && value.is_finite() {
            Self { value, support }
        } else {
            // All-zero (or degenerate) costs: solve unscaled.
            Self::unit()
        }
    }

    fn unit() -> Self {
        Self {
            value: 1.0,
            support: Vec::new(),
        }
    }
}

/// Log-kernel `L = -C / (ε s)` stored both row- and column-major so that
/// both half-steps sweep contiguous memory.
pub(crate) struct LogKernel {
    pub m: usize,
    pub n: usize,
    pub by_row: Vec<f64>,
    pub by_col: Vec<f64>,
}

impl LogKernel {
    pub fn new(cost: &CostMatrix, effective_epsilon: f64) -> Self {
        let by_row: Vec<f64> = cost
            .as_slice()
            .iter()
            .map(|&c| -c / effective_epsilon)
            .collect();
        let (m, n) = (cost.rows(), cost.cols());
        let mut by_col = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                by_col[j * m + i] = by_row[i * n + j];
            }
        }
        Self {
            m,
            n,
            by_row,
            by_col,
        }
    }

    /// `out[i] = -log m - LSE_j(L_ij + g_j)`
    pub fn update_rows(&self, g: &[f64], out: &mut [f64]) {
        let shift = -(self.m as f64).ln();
        sweep(&self.by_row, self.n, g, shift, out);
    }

    /// `out[j] = -log n - LSE_i(L_ij + f_i)`
    pub fn update_cols(&self, f: &[f64], out: &mut [f64]) {
        let shift = -(self.n as f64).ln();
        sweep(&self.by_col, self.m, f, shift, out);
    }

    pub fn coupling(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.m * self.n);
        for (i, &fi) in f.iter().enumerate() {
            let row = &self.by_row[i * self.n..(i + 1) * self.n];
            p.extend(row.iter().zip(g).map(|(l, gj)| exp_or_zero(fi + l + gj)));
        }
        p
    }
}

fn sweep(kernel: &[f64], len: usize, potential: &[f64], shift: f64, out: &mut [f64]) {
    let one = |(row, o): (&[f64], &mut f64)| *o = shift - log_sum_exp_shifted(row, potential);
    if kernel.len() >= PARALLEL_MIN_ENTRIES {
        kernel.par_chunks(len).zip(out.par_iter_mut()).for_each(one);
    } else {
        kernel.chunks(len).zip(out.iter_mut()).for_each(one);
    }
}

/// `log Σ_k exp(row[k] + potential[k])`, evaluated around its maximum.
pub(crate) fn log_sum_exp_shifted(row: &[f64], potential: &[f64]) -> f64 {
    let max = row
        .iter()
        .zip(potential)
        .map(|(a, b)| a + b)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = row
        .iter()
        .zip(potential)
        .map(|(a, b)| exp_or_zero(a + b - max))
        .sum();
    max + sum.ln()
}

/// Row-marginal violation of `P(f_old, g)` given the next row update
/// `f_new`: row `i` of that plan sums to `exp(f_old_i - f_new_i) / m`.
/// Column sums are exact after a column update.
fn pending_row_residual(f_old: &[f64], f_new: &[f64]) -> f64 {
    let m = f_old.len() as f64;
    f_old
        .iter()
        .zip(f_new)
        .map(|(a, b)| ((a - b).exp() / m - 1.0 / m).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn check_cost(cost: &CostMatrix) -> Result<()> {
    if let Some(k) = cost.as_slice().iter().position(|c| !c.is_finite()) {
        return Err(invalid(format!(
            "cost entry ({}, {}) is not finite",
            k / cost.cols(),
            k % cost.cols()
        )));
    }
    Ok(())
}

/// Solves the entropy-regularized transport problem for `cost` with uniform
/// marginals.
pub fn sinkhorn(cost: &CostMatrix, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    cfg.validate()?;
    check_cost(cost)?;
    let scale = CostScale::of(cost, cfg.cost_normalization);
    let kernel = LogKernel::new(cost, cfg.epsilon * scale.value);
    let (f, g, iterations) = if cfg.stabilized {
        run_log_domain(&kernel, cfg)
    } else {
        run_plain(&kernel, cfg)?
    };
    let coupling = if cfg.stabilized {
        kernel.coupling(&f, &g)
    } else {
        plain_coupling(&kernel, &f, &g)
    };
    finish(cost, cfg, &scale, f, g, coupling, iterations)
}

pub(crate) fn finish(
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
    scale: &CostScale,
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    coupling: Vec<f64>,
    iterations_run: usize,
) -> Result<SinkhornSolution> {
    let coupling = CouplingMatrix::from_vec(cost.rows(), cost.cols(), coupling)?;
    if coupling.as_slice().iter().any(|p| !p.is_finite()) {
        return Err(Error::NumericFailure("coupling has non-finite entries".into()));
    }
    let effective_epsilon = cfg.epsilon * scale.value;
    let primal_cost = coupling.inner(cost);
    let regularized_value = primal_cost - effective_epsilon * entropy(&coupling)?;
    Ok(SinkhornSolution {
        marginal_residual: marginal_residual(&coupling),
        dual_u: log_u.iter().map(|x| x.exp()).collect(),
        dual_v: log_v.iter().map(|x| x.exp()).collect(),
        log_u,
        log_v,
        coupling,
        primal_cost,
        regularized_value,
        iterations_run,
        cost_scale: scale.value,
        effective_epsilon,
    })
}

/// Log-domain iteration from `g = 0` (`v = 1`). Returns `(f, g, iterations)`.
pub(crate) fn run_log_domain(kernel: &LogKernel, cfg: &SinkhornConfig) -> (Vec<f64>, Vec<f64>, usize) {
    let mut f = vec![0.0; kernel.m];
    let mut f_next = vec![0.0; kernel.m];
    let mut g = vec![0.0; kernel.n];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        kernel.update_rows(&g, &mut f_next);
        if iterations > 0 && pending_row_residual(&f, &f_next) <= cfg.marginal_tolerance {
            break;
        }
        std::mem::swap(&mut f, &mut f_next);
        kernel.update_cols(&f, &mut g);
        iterations += 1;
    }
    (f, g, iterations)
}

/// Plain scaling iteration on `G = exp(L)`. Returns log-scalings so that
/// both modes share the same bookkeeping.
fn run_plain(kernel: &LogKernel, cfg: &SinkhornConfig) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let (m, n) = (kernel.m, kernel.n);
    let gibbs: Vec<f64> = kernel.by_row.iter().map(|l| l.exp()).collect();
    let gibbs_t: Vec<f64> = kernel.by_col.iter().map(|l| l.exp()).collect();
    if let Some(i) = gibbs.chunks(n).position(|row| row.iter().all(|&x| x == 0.0)) {
        return Err(Error::NumericFailure(format!(
            "kernel row {i} underflowed to zero"
        )));
    }
    if let Some(j) = gibbs_t.chunks(m).position(|col| col.iter().all(|&x| x == 0.0)) {
        return Err(Error::NumericFailure(format!(
            "kernel column {j} underflowed to zero"
        )));
    }

    let row_target = 1.0 / m as f64;
    let col_target = 1.0 / n as f64;
    let mut u = vec![0.0; m];
    let mut v = vec![1.0; n];
    let mut gv = vec![0.0; m];
    let mut gtu = vec![0.0; n];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        mat_vec(&gibbs, n, &v, &mut gv);
        if iterations > 0 {
            let residual = u
                .iter()
                .zip(&gv)
                .map(|(ui, s)| (ui * s - row_target).abs())
                .fold(0.0, f64::max);
            if residual <= cfg.marginal_tolerance {
                break;
            }
        }
        for (ui, s) in u.iter_mut().zip(&gv) {
            *ui = row_target / s;
        }
        mat_vec(&gibbs_t, m, &u, &mut gtu);
        for (vj, s) in v.iter_mut().zip(&gtu) {
            *vj = col_target / s;
        }
        iterations += 1;
        let bad = |x: &f64| !(x.is_finite() && *x > 0.0);
        if u.iter().any(bad) || v.iter().any(bad) {
            return Err(Error::NumericFailure(format!(
                "scaling vectors left the positive finite range at iteration {iterations}"
            )));
        }
    }
    Ok((
        u.iter().map(|x| x.ln()).collect(),
        v.iter().map(|x| x.ln()).collect(),
        iterations,
    ))
}

fn mat_vec(matrix: &[f64], len: usize, x: &[f64], out: &mut [f64]) {
    let one = |(row, o): (&[f64], &mut f64)| {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    };
    if matrix.len() >= PARALLEL_MIN_ENTRIES {
        matrix.par_chunks(len).zip(out.par_iter_mut()).for_each(one);
    } else {
        matrix.chunks(len).zip(out.iter_mut()).for_each(one);
    }
}

/// `diag(u) G diag(v)` evaluated with the plain kernel.
fn plain_coupling(kernel: &LogKernel, log_u: &[f64], log_v: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = log_v.iter().map(|x| x.exp()).collect();
    let mut p = Vec::with_capacity(kernel.m * kernel.n);
    for (i, lu) in log_u.iter().enumerate() {
        let u = lu.exp();
        let row = &kernel.by_row[i * kernel.n..(i + 1) * kernel.n];
        p.extend(row.iter().zip(&v).map(|(l, vj)| u * l.exp() * vj));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(epsilon: f64, iterations: usize) -> SinkhornConfig {
        SinkhornConfig {
            epsilon,
            max_iterations: iterations,
            ..SinkhornConfig::default()
        }
    }

    #[test]
    fn single_entry_has_only_one_plan() {
        let c = CostMatrix::from_rows(&[vec![5.0]]).unwrap();
        for (eps, stabilized) in [(1e-3, true), (1.0, true), (1.0, false), (10.0, false)] {
            {
                let sol = sinkhorn(&c, &SinkhornConfig { stabilized, ..cfg(eps, 30) }).unwrap();
                assert_eq!(sol.coupling.as_slice(), &[1.0]);
                assert_eq!(sol.primal_cost, 5.0);
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_cost() {
        let c = CostMatrix::from_rows(&[vec![1.0, f64::INFINITY]]).unwrap();
        assert!(matches!(sinkhorn(&c, &cfg(1e-2, 10)), Err(Error::InvalidArgument(_))));
        let c = CostMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(sinkhorn(&c, &cfg(0.0, 10)).is_err());
        assert!(sinkhorn(&c, &cfg(1.0, 0)).is_err());
        let neg_tol = SinkhornConfig {
            marginal_tolerance: -1.0,
            ..cfg(1.0, 1)
        };
        assert!(sinkhorn(&c, &neg_tol).is_err());
    }

    #[test]
    fn plain_mode_reports_underflow() {
        let c = CostMatrix::from_rows(&[vec![0.0, 50.0], vec![60.0, 70.0]]).unwrap();
        let plain = SinkhornConfig {
            stabilized: false,
            cost_normalization: CostNormalization::None,
            ..cfg(1e-3, 30)
        };
        assert!(matches!(sinkhorn(&c, &plain), Err(Error::NumericFailure(_))));
        let stable = SinkhornConfig {
            stabilized: true,
            ..plain
        };
        let sol = sinkhorn(&c, &stable).unwrap();
        assert!(sol.primal_cost.is_finite());
    }

    #[test]
    fn plain_coupling_is_diag_u_g_diag_v() {
        let c = CostMatrix::from_rows(&[
            vec![0.1, 0.7, 0.3],
            vec![0.4, 0.2, 0.9],
        ])
        .unwrap();
        let sol = sinkhorn(
            &c,
            &SinkhornConfig {
                stabilized: false,
                cost_normalization: CostNormalization::None,
                ..cfg(0.5, 7)
            },
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let expected = sol.dual_u[i] * (-c.get(i, j) / 0.5).exp() * sol.dual_v[j];
                assert!((sol.coupling.get(i, j) - expected).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn early_stop_honours_tolerance() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let sol = sinkhorn(
            &c,
            &SinkhornConfig {
                marginal_tolerance: 1e-12,
                ..cfg(0.1, 1000)
            },
        )
        .unwrap();
        assert!(sol.iterations_run < 1000);
        assert!(sol.marginal_residual <= 1e-12);
    }

    #[test]
    fn median_scale_of_even_count_averages_middle_pair() {
        let c = CostMatrix::from_rows(&[vec![4.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let s = CostScale::of(&c, CostNormalization::DivideByMedian);
        assert_eq!(s.value, 2.5);
        let mut support = s.support.clone();
        support.sort_by_key(|p| p.0);
        assert_eq!(support, vec![(2, 0.5), (3, 0.5)]);
        let s = CostScale::of(&c, CostNormalization::DivideByMax);
        assert_eq!((s.value, s.support), (4.0, vec![(0, 1.0)]));
        let zero = CostMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(CostScale::of(&zero, CostNormalization::DivideByMax).value, 1.0);
    }

    #[test]
    fn normalization_rescales_back_to_input_units() {
        let c = CostMatrix::from_rows(&[vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
        let scaled = CostMatrix::from_rows(&[vec![0.0, 400.0], vec![400.0, 0.0]]).unwrap();
        let a = sinkhorn(&c, &cfg(0.3, 50)).unwrap();
        let b = sinkhorn(&scaled, &cfg(0.3, 50)).unwrap();
        assert!((b.primal_cost - 100.0 * a.primal_cost).abs() < 1e-9 * b.primal_cost.max(1.0));
        assert!((b.regularized_value - 100.0 * a.regularized_value).abs() < 1e-9);
    }
}
