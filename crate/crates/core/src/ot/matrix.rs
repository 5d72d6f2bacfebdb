use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::geometry::PointCloud;

/// Dense row-major `rows × cols` matrix of squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Wraps row-major data. Negative entries are rejected; non-finite ones
    /// are kept so that the solver can report them.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("cost matrix must have at least one row and column"));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "cost matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|&c| c < 0.0) {
            return Err(invalid(format!(
                "negative cost {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged cost matrix rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            data: transpose(&self.data, self.rows, self.cols),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

/// Nonnegative `rows × cols` transport plan, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CouplingMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(invalid(format!(
                "coupling data of length {} does not fit {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged coupling rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// The plan that spreads all mass evenly, `1/(mn)` per entry.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        let mass = 1.0 / (rows * cols) as f64;
        Self {
            rows,
            cols,
            data: vec![mass; rows * cols],
        }
    }

    /// Permutation plan with mass `1/n` on `(i, perm[i])`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut data = vec![0.0; n * n];
        for (i, &j) in perm.iter().enumerate() {
            data[i * n + j] = 1.0 / n as f64;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            data: transpose(&self.data, self.rows, self.cols),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, &p) in sums.iter_mut().zip(self.row(i)) {
                *s += p;
            }
        }
        sums
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius inner product `⟨P, C⟩`.
    pub fn inner(&self, cost: &CostMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (cost.rows(), cost.cols()));
        self.data
            .iter()
            .zip(cost.as_slice())
            .map(|(p, c)| p * c)
            .sum()
    }
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// Squared Euclidean distances between every pair `(a[i], b[j])`.
pub fn build_cost_matrix(a: &PointCloud, b: &PointCloud) -> Result<CostMatrix> {
    if a.frame() != b.frame() {
        return Err(invalid(format!(
            "clouds live in different frames ({:?} vs {:?})",
            a.frame(),
            b.frame()
        )));
    }
    cost_from_points(a.points(), b.points())
}

pub fn cost_from_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<CostMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("cannot build a cost matrix from an empty cloud"));
    }
    let mut data = Vec::with_capacity(a.len() * b.len());
    for x in a {
        data.extend(b.iter().map(|y| (x - y).norm_squared()));
    }
    CostMatrix::from_vec(a.len(), b.len(), data)
}

/// `H(P) = -Σ P_ij (log P_ij - 1)`, with zero entries contributing nothing.
pub fn entropy(p: &CouplingMatrix) -> Result<f64> {
    let mut h = 0.0;
    for (k, &x) in p.as_slice().iter().enumerate() {
        if x < 0.0 || x.is_nan() {
            return Err(invalid(format!(
                "coupling entry ({}, {}) = {} is negative",
                k / p.cols(),
                k % p.cols(),
                x
            )));
        }
        if x > 0.0 {
            h -= x * (x.ln() - 1.0);
        }
    }
    Ok(h)
}

/// Largest violation of the uniform row (`1/m`) and column (`1/n`) marginals.
pub fn marginal_residual(p: &CouplingMatrix) -> f64 {
    let row_target = 1.0 / p.rows() as f64;
    let col_target = 1.0 / p.cols() as f64;
    let rows = p.row_sums().into_iter().map(|s| (s - row_target).abs());
    let cols = p.col_sums().into_iter().map(|s| (s - col_target).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new("A", "A", points.iter().map(|p| Vector3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn cost_of_a_345_triangle() {
        let c = build_cost_matrix(&cloud(&[[0., 0., 0.]]), &cloud(&[[3., 4., 0.]])).unwrap();
        assert_eq!(c.as_slice(), &[25.0]);
    }

    #[test]
    fn cost_of_identical_points_is_zero() {
        let a = cloud(&[[1., 2., 3.]]);
        assert_eq!(build_cost_matrix(&a, &a).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn cost_two_by_two() {
        let a = cloud(&[[0., 0., 0.], [1., 0., 0.]]);
        let b = cloud(&[[0., 0., 1.], [2., 0., 0.]]);
        let c = build_cost_matrix(&a, &b).unwrap();
        assert_eq!((c.rows(), c.cols()), (2, 2));
        assert_eq!(c.as_slice(), &[1.0, 4.0, 2.0, 1.0]);
    }

    #[test]
    fn cost_rejects_empty_and_mismatched_frames() {
        let a = cloud(&[[0., 0., 0.]]);
        let empty = PointCloud::new("A", "A", vec![]).unwrap();
        assert!(build_cost_matrix(&a, &empty).is_err());
        assert!(build_cost_matrix(&empty, &a).is_err());
        let b = PointCloud::new("B", "B", vec![Vector3::zeros()]).unwrap();
        assert!(build_cost_matrix(&a, &b).is_err());
    }

    #[test]
    fn entropy_examples() {
        let one = CouplingMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert_relative_eq!(entropy(&one).unwrap(), 1.0);

        let diag = CouplingMatrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let expected = 2.0 * 0.5 * (-(0.5f64).ln() + 1.0);
        assert_relative_eq!(entropy(&diag).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(entropy(&diag).unwrap(), 1.6931, epsilon = 1e-4);

        let neg = CouplingMatrix::from_rows(&[vec![0.5, -0.1]]).unwrap();
        assert!(entropy(&neg).is_err());
    }

    #[test]
    fn residual_examples() {
        assert_eq!(marginal_residual(&CouplingMatrix::uniform(4, 8)), 0.0);
        assert!(marginal_residual(&CouplingMatrix::uniform(3, 5)) < 1e-15);
        let p = CouplingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(marginal_residual(&p), 0.5);
    }

    #[test]
    fn transpose_round_trip() {
        let c = CostMatrix::from_rows(&[vec![1., 2., 3.], vec![4., 5., 6.]]).unwrap();
        let t = c.transpose();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        assert_eq!(t.get(2, 1), 6.0);
        assert_eq!(t.transpose(), c);
    }
}
