//! Unregularized transport between two equal-size uniform clouds.
//!
//! With `m = n` and uniform marginals the optimal plans include a scaled
//! permutation matrix, so exact OT reduces to linear assignment.

use super::matrix::{CostMatrix, CouplingMatrix};
use super::sinkhorn::check_cost;
use crate::error::{Error, Result};

/// Largest size solved by enumeration in [`exact_ot_oracle`].
pub const BRUTE_FORCE_MAX: usize = 8;

/// Optimal value `min ⟨P, C⟩` over uniform square plans, and a vertex plan
/// attaining it.
pub fn exact_ot_oracle(cost: &CostMatrix) -> Result<(f64, CouplingMatrix)> {
    if cost.rows() <= BRUTE_FORCE_MAX {
        exact_ot_bruteforce(cost)
    } else {
        exact_ot_assignment(cost)
    }
}

/// Enumerates every permutation in lexicographic order and keeps the first
/// one with the strictly smallest total.
pub fn exact_ot_bruteforce(cost: &CostMatrix) -> Result<(f64, CouplingMatrix)> {
    check_square(cost)?;
    let n = cost.rows();
    let mut search = Enumeration {
        cost,
        current: Vec::with_capacity(n),
        used: vec![false; n],
        best: Vec::new(),
        best_total: f64::INFINITY,
    };
    search.descend(0.0);
    Ok(plan(cost, &search.best))
}

/// Same problem solved with the O(n³) Hungarian method.
pub fn exact_ot_assignment(cost: &CostMatrix) -> Result<(f64, CouplingMatrix)> {
    check_square(cost)?;
    let perm = solve_assignment(cost);
    Ok(plan(cost, &perm))
}

fn check_square(cost: &CostMatrix) -> Result<()> {
    if !cost.is_square() {
        return Err(Error::UnsupportedInstance(format!(
            "exact oracle needs a square cost matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    check_cost(cost)
}

/// Value is summed in row order so both solvers agree bit-for-bit when they
/// return the same permutation.
fn plan(cost: &CostMatrix, perm: &[usize]) -> (f64, CouplingMatrix) {
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    (
        total / perm.len() as f64,
        CouplingMatrix::from_permutation(perm),
    )
}

struct Enumeration<'a> {
    cost: &'a CostMatrix,
    current: Vec<usize>,
    used: Vec<bool>,
    best: Vec<usize>,
    best_total: f64,
}

impl Enumeration<'_> {
    fn descend(&mut self, partial: f64) {
        let row = self.current.len();
        let n = self.cost.rows();
        if row == n {
            if partial < self.best_total {
                self.best_total = partial;
                self.best = self.current.clone();
            }
            return;
        }
        for col in 0..n {
            if self.used[col] {
                continue;
            }
            self.used[col] = true;
            self.current.push(col);
            self.descend(partial + self.cost.get(row, col));
            self.current.pop();
            self.used[col] = false;
        }
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the column
/// assigned to each row.
pub fn solve_assignment(cost: &CostMatrix) -> Vec<usize> {
    let n = cost.rows();
    // 1-based potentials; column 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let slack = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_picks_the_diagonal() {
        let c = CostMatrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 1.0]]).unwrap();
        let (value, p) = exact_ot_oracle(&c).unwrap();
        assert_eq!(value, 1.0);
        assert_eq!(p.as_slice(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn zero_cost_gives_zero_and_lexicographic_first_plan() {
        let c = CostMatrix::from_vec(3, 3, vec![0.0; 9]).unwrap();
        let (value, p) = exact_ot_bruteforce(&c).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(p, CouplingMatrix::from_permutation(&[0, 1, 2]));
    }

    #[test]
    fn rectangular_is_unsupported() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(exact_ot_oracle(&c), Err(Error::UnsupportedInstance(_))));
        assert!(matches!(exact_ot_assignment(&c), Err(Error::UnsupportedInstance(_))));
    }

    #[test]
    fn enumeration_and_hungarian_agree_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 1..=7 {
            for _ in 0..20 {
                let data = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
                let c = CostMatrix::from_vec(n, n, data).unwrap();
                let (a, _) = exact_ot_bruteforce(&c).unwrap();
                let (b, _) = exact_ot_assignment(&c).unwrap();
                assert_eq!(a, b, "n = {n}");
            }
        }
    }

    #[test]
    fn hungarian_beats_every_sampled_permutation_for_larger_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let data = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let c = CostMatrix::from_vec(n, n, data).unwrap();
        let (best, p) = exact_ot_oracle(&c).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..2000 {
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let total: f64 = perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
            assert!(best <= total / n as f64 + 1e-12);
        }
    }
}
