//! Derivatives of the Sinkhorn value with respect to the cost matrix.
//!
//! Unrolled mode replays the log-domain iteration for exactly
//! `max_iterations` steps and runs the adjoint of every half-step in
//! reverse. Envelope mode differentiates with the plan held fixed.

use nalgebra::Vector3;

use super::matrix::{entropy, CostMatrix};
use super::sinkhorn::{
    check_cost, exp_or_zero, finish, sinkhorn, CostScale, LogKernel, SinkhornConfig, SinkhornSolution,
};
use crate::error::Result;

/// Which scalar the loss reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueKind {
    /// `⟨P, C⟩`
    #[default]
    PrimalCost,
    /// `⟨P, C⟩ - ε H(P)`
    RegularizedValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Reverse-mode through every iteration; exact for the computed value.
    #[default]
    Unrolled,
    /// Plan held fixed; exact for the regularized value at convergence.
    Envelope,
}

#[derive(Debug, Clone)]
pub struct CostGradient {
    pub solution: SinkhornSolution,
    pub value: f64,
    /// `∂value/∂C`, row-major like the cost.
    pub d_cost: Vec<f64>,
}

impl CostGradient {
    /// Pulls the cost gradient back to the two point sets that produced the
    /// squared-distance cost.
    pub fn point_gradients(
        &self,
        x: &[Vector3<f64>],
        y: &[Vector3<f64>],
    ) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let n = y.len();
        let mut gx = vec![Vector3::zeros(); x.len()];
        let mut gy = vec![Vector3::zeros(); n];
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                let d = (xi - yj) * (2.0 * self.d_cost[i * n + j]);
                gx[i] += d;
                gy[j] -= d;
            }
        }
        (gx, gy)
    }
}

pub fn value_of(solution: &SinkhornSolution, kind: ValueKind) -> f64 {
    match kind {
        ValueKind::PrimalCost => solution.primal_cost,
        ValueKind::RegularizedValue => solution.regularized_value,
    }
}

pub fn sinkhorn_gradient(
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
    kind: ValueKind,
    mode: GradientMode,
) -> Result<CostGradient> {
    match mode {
        GradientMode::Envelope => envelope(cost, cfg, kind),
        GradientMode::Unrolled => unrolled(cost, cfg, kind),
    }
}

fn envelope(cost: &CostMatrix, cfg: &SinkhornConfig, kind: ValueKind) -> Result<CostGradient> {
    let solution = sinkhorn(cost, cfg)?;
    let mut d_cost = solution.coupling.as_slice().to_vec();
    if kind == ValueKind::RegularizedValue {
        // ε_eff = ε s(C) also moves with the cost.
        let scale = CostScale::of(cost, cfg.cost_normalization);
        let h = entropy(&solution.coupling)?;
        for &(k, w) in &scale.support {
            d_cost[k] -= cfg.epsilon * h * w;
        }
    }
    Ok(CostGradient {
        value: value_of(&solution, kind),
        solution,
        d_cost,
    })
}

fn unrolled(cost: &CostMatrix, cfg: &SinkhornConfig, kind: ValueKind) -> Result<CostGradient> {
    cfg.validate()?;
    check_cost(cost)?;
    let fixed = SinkhornConfig {
        marginal_tolerance: 0.0,
        ..cfg.clone()
    };
    // The plain iteration computes the same function; run it only to surface
    // its numeric failures and report its plan.
    let plain = if cfg.stabilized {
        None
    } else {
        Some(sinkhorn(cost, &fixed)?)
    };

    let scale = CostScale::of(cost, cfg.cost_normalization);
    let eff = cfg.epsilon * scale.value;
    let kernel = LogKernel::new(cost, eff);
    let (m, n) = (kernel.m, kernel.n);
    let steps = cfg.max_iterations;

    // f_hist[t] = f after step t+1; g_hist[t] = g after step t (g_hist[0] = 0).
    let mut f_hist: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut g_hist: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    g_hist.push(vec![0.0; n]);
    for _ in 0..steps {
        let mut f = vec![0.0; m];
        kernel.update_rows(g_hist.last().unwrap(), &mut f);
        let mut g = vec![0.0; n];
        kernel.update_cols(&f, &mut g);
        f_hist.push(f);
        g_hist.push(g);
    }
    let f_final = f_hist.last().unwrap().clone();
    let g_final = g_hist.last().unwrap().clone();
    let p = kernel.coupling(&f_final, &g_final);
    let solution = match plain {
        Some(s) => s,
        None => finish(cost, &fixed, &scale, f_final.clone(), g_final.clone(), p.clone(), steps)?,
    };
    let value = value_of(&solution, kind);
    let c = cost.as_slice();

    // Adjoints. `d_log_kernel` accumulates ∂value/∂L.
    let mut d_cost = p.clone();
    let mut d_eff = 0.0;
    let mut d_log_kernel = vec![0.0; m * n];
    let mut d_f = vec![0.0; m];
    let mut d_g = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            let d_p = match kind {
                ValueKind::PrimalCost => c[k],
                ValueKind::RegularizedValue => {
                    c[k] + eff * (f_final[i] + kernel.by_row[k] + g_final[j])
                }
            };
            let d_z = d_p * p[k];
            d_log_kernel[k] += d_z;
            d_f[i] += d_z;
            d_g[j] += d_z;
        }
    }
    if kind == ValueKind::RegularizedValue {
        d_eff -= entropy(&solution.coupling)?;
    }

    let log_m = (m as f64).ln();
    let log_n = (n as f64).ln();
    for t in (0..steps).rev() {
        let f = &f_hist[t];
        let g = &g_hist[t + 1];
        let g_prev = &g_hist[t];

        // g_j = -log n - LSE_i(L_ij + f_i); softmax weights over i sum to 1.
        for i in 0..m {
            let row = &kernel.by_row[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                let w = exp_or_zero(row[j] + f[i] + g[j] + log_n) * d_g[j];
                d_log_kernel[i * n + j] -= w;
                acc += w;
            }
            d_f[i] -= acc;
        }

        // f_i = -log m - LSE_j(L_ij + g_prev_j).
        let mut d_g_prev = vec![0.0; n];
        for i in 0..m {
            let row = &kernel.by_row[i * n..(i + 1) * n];
            let scale_i = d_f[i];
            for j in 0..n {
                let w = exp_or_zero(row[j] + g_prev[j] + f[i] + log_m) * scale_i;
                d_log_kernel[i * n + j] -= w;
                d_g_prev[j] -= w;
            }
        }
        d_f.iter_mut().for_each(|x| *x = 0.0);
        d_g = d_g_prev;
    }

    // L = -C / ε_eff
    for k in 0..m * n {
        d_cost[k] -= d_log_kernel[k] / eff;
        d_eff += d_log_kernel[k] * c[k] / (eff * eff);
    }
    for &(k, w) in &scale.support {
        d_cost[k] += d_eff * cfg.epsilon * w;
    }

    Ok(CostGradient {
        solution,
        value,
        d_cost,
    })
}

/// Central differences of the solver value in every cost entry.
#[cfg(test)]
pub(crate) fn finite_difference(
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
    kind: ValueKind,
    h: f64,
) -> Vec<f64> {
    let base = cost.as_slice().to_vec();
    (0..base.len())
        .map(|k| {
            let eval = |delta: f64| {
                let mut data = base.clone();
                data[k] += delta;
                let c = CostMatrix::from_vec(cost.rows(), cost.cols(), data).unwrap();
                value_of(&sinkhorn(&c, cfg).unwrap(), kind)
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        })
        .collect()
}
