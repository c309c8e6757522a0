//! Dense row-major storage, entrywise norms and column-subset views.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major real matrix. All entries are finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Caller guarantees finiteness and length.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(l)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_vec_unchecked(self.rows, other.cols, out))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Columns of `self` followed by the columns of `other`.
    pub fn hstack(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::dims("hstack row counts differ"));
        }
        Ok(Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        }))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self::from_vec_unchecked(rows.len(), self.cols, data)
    }

    /// Columns at arbitrary (possibly unsorted) positions.
    pub fn columns_at(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn select_columns(&self, set: &ColumnIndexSet) -> Result<Self> {
        select_columns(self, set)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Sorted distinct column indices into a parent matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ColumnIndexSet {
    indices: Vec<usize>,
}

impl ColumnIndexSet {
    pub fn new(indices: Vec<usize>, parent_cols: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("column indices must be strictly increasing"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= parent_cols) {
            return Err(Error::invalid(format!(
                "column index {bad} out of range for {parent_cols} columns"
            )));
        }
        Ok(ColumnIndexSet { indices })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>, parent_cols: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, parent_cols)
    }

    pub fn all(cols: usize) -> Self {
        ColumnIndexSet {
            indices: (0..cols).collect(),
        }
    }

    pub fn empty() -> Self {
        ColumnIndexSet::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &ColumnIndexSet) -> ColumnIndexSet {
        let mut v: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        v.sort_unstable();
        v.dedup();
        ColumnIndexSet { indices: v }
    }

    pub fn is_disjoint(&self, other: &ColumnIndexSet) -> bool {
        self.indices.iter().all(|i| !other.contains(*i))
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [1, 2]")));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry"));
    }
    Ok(())
}

/// Sum of |v_i|^p.
pub fn sum_abs_pow(values: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    }
}

/// (Σ |v_i|^p)^{1/p}, with a max-scaling pass so large entries do not overflow.
pub fn vector_norm(values: &[f64], p: f64) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return values.iter().map(|v| v.abs()).sum();
    }
    let s: f64 = values.iter().map(|v| (v.abs() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// Entrywise ℓp norm (Σ_ij |A_ij|^p)^{1/p}.
pub fn entrywise_norm(a: &DenseMatrix, p: f64) -> Result<f64> {
    check_p(p)?;
    check_finite(a.data())?;
    Ok(vector_norm(a.data(), p))
}

/// Sum over columns of each column's ℓp norm.
pub fn norm_1p(a: &DenseMatrix, p: f64) -> Result<f64> {
    check_p(p)?;
    check_finite(a.data())?;
    Ok((0..a.cols()).map(|j| vector_norm(&a.column(j), p)).sum())
}

/// A_S with the columns of `set` in index order.
pub fn select_columns(a: &DenseMatrix, set: &ColumnIndexSet) -> Result<DenseMatrix> {
    if let Some(&bad) = set.indices().iter().find(|&&i| i >= a.cols()) {
        return Err(Error::invalid(format!(
            "column index {bad} out of range for {} columns",
            a.cols()
        )));
    }
    Ok(a.columns_at(set.indices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn entrywise_examples() {
        assert_eq!(entrywise_norm(&DenseMatrix::zeros(3, 4), 1.3).unwrap(), 0.0);
        let a = m(&[&[3.0, -4.0]]);
        assert_eq!(entrywise_norm(&a, 1.0).unwrap(), 7.0);
        assert!((entrywise_norm(&a, 2.0).unwrap() - 5.0).abs() < 1e-15);
        assert!(entrywise_norm(&a, 2.5).is_err());
    }

    #[test]
    fn norm_1p_examples() {
        assert!((norm_1p(&DenseMatrix::identity(2), 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(norm_1p(&m(&[&[1.0, 0.0], &[1.0, 0.0]]), 1.0).unwrap(), 2.0);
        assert!((norm_1p(&m(&[&[3.0], &[-4.0]]), 2.0).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn select_columns_examples() {
        let a = DenseMatrix::identity(3);
        let s = ColumnIndexSet::new(vec![0, 2], 3).unwrap();
        let sub = select_columns(&a, &s).unwrap();
        assert_eq!(sub, m(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(select_columns(&a, &ColumnIndexSet::all(3)).unwrap(), a);
        let empty = select_columns(&a, &ColumnIndexSet::empty()).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (3, 0));
        assert!(ColumnIndexSet::new(vec![0, 3], 3).is_err());
        assert!(ColumnIndexSet::new(vec![2, 1], 3).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = DenseMatrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |d| DenseMatrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn triangle_inequality(a in matrix_strategy(), seed in any::<u64>(), p in 1.0f64..=2.0) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let b = DenseMatrix::from_fn(a.rows(), a.cols(), |_, _| rng.gaussian() * 5.0);
            let lhs = entrywise_norm(&a.add(&b).unwrap(), p).unwrap();
            let rhs = entrywise_norm(&a, p).unwrap() + entrywise_norm(&b, p).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn homogeneity(a in matrix_strategy(), c in -100.0f64..100.0, p in 1.0f64..=2.0) {
            let lhs = entrywise_norm(&a.scale(c), p).unwrap();
            let rhs = c.abs() * entrywise_norm(&a, p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn monotone_in_p_for_unit_entries(a in matrix_strategy(), p in 1.0f64..2.0, dp in 0.0f64..1.0) {
            let a = a.map(|v| v / 10.0);
            let q = (p + dp).min(2.0);
            prop_assert!(entrywise_norm(&a, q).unwrap() <= entrywise_norm(&a, p).unwrap() * (1.0 + 1e-12));
        }
    }
}
