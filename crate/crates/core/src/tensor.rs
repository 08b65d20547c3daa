//! Coordinate-format sparse tensors, dense factor matrices and the
//! brute-force MTTKRP reference.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::{Error, Result, Rng};

/// Sparse tensor in coordinate format with zero-based indices.
///
/// Coordinates are stored flat, `order` indices per entry. Construction
/// merges duplicate coordinates by summing their values and rejects empty
/// tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensorCoo {
    dims: Vec<usize>,
    coords: Vec<usize>,
    values: Vec<f64>,
}

impl SparseTensorCoo {
    /// Builds a tensor from `(coords, value)` pairs, summing duplicates.
    ///
    /// Entries are kept in lexicographic coordinate order.
    pub fn from_entries<I, C>(dims: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, f64)>,
        C: AsRef<[usize]>,
    {
        if dims.is_empty() {
            return Err(Error::ShapeMismatch("tensor needs at least one mode".into()));
        }
        if let Some(mode) = dims.iter().position(|&d| d == 0) {
            return Err(Error::ZeroLengthMode { mode });
        }
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (coords, value) in entries {
            let coords = coords.as_ref();
            check_coords(&dims, coords)?;
            *merged.entry(coords.to_vec()).or_insert(0.0) += value;
        }
        if merged.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let mut flat = Vec::with_capacity(merged.len() * dims.len());
        let mut values = Vec::with_capacity(merged.len());
        for (c, v) in merged {
            flat.extend_from_slice(&c);
            values.push(v);
        }
        Ok(Self { dims, coords: flat, values })
    }

    /// Same as [`from_entries`](Self::from_entries) but infers every mode
    /// length as one past the largest index seen.
    pub fn from_entries_infer_dims<C: AsRef<[usize]>>(entries: Vec<(C, f64)>) -> Result<Self> {
        let order = match entries.first() {
            Some((c, _)) => c.as_ref().len(),
            None => return Err(Error::EmptyTensor),
        };
        let mut dims = vec![0usize; order];
        for (c, _) in &entries {
            let c = c.as_ref();
            if c.len() != order {
                return Err(Error::OrderMismatch { expected: order, got: c.len() });
            }
            for (d, &i) in dims.iter_mut().zip(c) {
                *d = (*d).max(i + 1);
            }
        }
        Self::from_entries(dims, entries)
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coords(&self, i: usize) -> &[usize] {
        let n = self.order();
        &self.coords[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.coords
            .chunks_exact(self.order())
            .zip(self.values.iter().copied())
    }

    /// Fraction of the index box that holds a nonzero.
    pub fn density(&self) -> f64 {
        let cells: f64 = self.dims.iter().map(|&d| d as f64).product();
        self.nnz() as f64 / cells
    }

    /// Multiplies every value by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }
}

fn check_coords(dims: &[usize], coords: &[usize]) -> Result<()> {
    if coords.len() != dims.len() {
        return Err(Error::OrderMismatch { expected: dims.len(), got: coords.len() });
    }
    for (mode, (&c, &len)) in coords.iter().zip(dims).enumerate() {
        if c >= len {
            return Err(Error::CoordinateOutOfRange { mode, coord: c, len });
        }
    }
    Ok(())
}

/// Row-major dense matrix of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute distance when
    /// `other` is identically zero.
    pub fn relative_error(&self, other: &DenseMatrix) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let diff = libm::sqrt(diff);
        let norm = other.frobenius_norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }
}

/// One `I_n × F` factor matrix per tensor mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    rank: usize,
    mats: Vec<DenseMatrix>,
}

impl FactorMatrices {
    pub fn new(mats: Vec<DenseMatrix>) -> Result<Self> {
        let rank = mats
            .first()
            .map(|m| m.cols())
            .ok_or_else(|| Error::ShapeMismatch("no factor matrices".into()))?;
        if rank == 0 {
            return Err(Error::ShapeMismatch("rank must be positive".into()));
        }
        if mats.iter().any(|m| m.cols() != rank) {
            return Err(Error::ShapeMismatch("factor matrices disagree on rank".into()));
        }
        if mats.iter().any(|m| m.as_slice().iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("factor matrices"));
        }
        Ok(Self { rank, mats })
    }

    /// I.i.d. uniform `[0, 1)` entries.
    pub fn random(dims: &[usize], rank: usize, rng: &mut Rng) -> Self {
        let mats = dims
            .iter()
            .map(|&d| DenseMatrix {
                rows: d,
                cols: rank,
                data: (0..d * rank).map(|_| rng.gen::<f64>()).collect(),
            })
            .collect();
        Self { rank, mats }
    }

    pub fn ones(dims: &[usize], rank: usize) -> Self {
        let mats = dims
            .iter()
            .map(|&d| DenseMatrix { rows: d, cols: rank, data: vec![1.0; d * rank] })
            .collect();
        Self { rank, mats }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.mats.len()
    }

    pub fn matrix(&self, mode: usize) -> &DenseMatrix {
        &self.mats[mode]
    }

    /// Checks that the factors fit a tensor with the given mode lengths.
    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.mats.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} factor matrices for an order-{} tensor",
                self.mats.len(),
                dims.len()
            )));
        }
        for (mode, (m, &d)) in self.mats.iter().zip(dims).enumerate() {
            if m.rows() != d {
                return Err(Error::ShapeMismatch(format!(
                    "factor {mode} has {} rows, mode length is {d}",
                    m.rows()
                )));
            }
        }
        Ok(())
    }
}

/// Mode-`mode` MTTKRP by direct summation over the nonzeros.
///
/// `out[i, f] = Σ_{x : x[mode] = i} v(x) · Π_{k≠mode} C_k[x[k], f]`. This is
/// the correctness reference for every other kernel.
pub fn dense_mttkrp_oracle(
    tensor: &SparseTensorCoo,
    factors: &FactorMatrices,
    mode: usize,
) -> Result<DenseMatrix> {
    factors.check_dims(tensor.dims())?;
    if mode >= tensor.order() {
        return Err(Error::ShapeMismatch(format!("mode {mode} of an order-{} tensor", tensor.order())));
    }
    let rank = factors.rank();
    let mut out = DenseMatrix::zeros(tensor.dims()[mode], rank);
    for (coords, value) in tensor.iter() {
        for f in 0..rank {
            let mut prod = value;
            for (k, &c) in coords.iter().enumerate() {
                if k != mode {
                    prod *= factors.matrix(k).get(c, f);
                }
            }
            out.row_mut(coords[mode])[f] += prod;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn toy() -> SparseTensorCoo {
        SparseTensorCoo::from_entries(
            vec![4, 8, 2],
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![1, 3, 1], 2.0),
                (vec![2, 7, 0], 3.0),
                (vec![3, 2, 1], 4.0),
                (vec![0, 5, 1], 5.0),
                (vec![3, 6, 0], 6.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let t = SparseTensorCoo::from_entries(
            vec![2, 2],
            vec![(vec![0, 0], 1.0), (vec![0, 0], 2.0), (vec![1, 1], 4.0)],
        )
        .unwrap();
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.coords(0), &[0, 0]);
        assert_eq!(t.values(), &[3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let empty: Vec<(Vec<usize>, f64)> = vec![];
        assert_eq!(SparseTensorCoo::from_entries(vec![2], empty), Err(Error::EmptyTensor));
        assert!(matches!(
            SparseTensorCoo::from_entries(vec![2, 2], vec![(vec![2, 0], 1.0)]),
            Err(Error::CoordinateOutOfRange { mode: 0, coord: 2, len: 2 })
        ));
        assert!(matches!(
            SparseTensorCoo::from_entries(vec![2, 2], vec![(vec![0], 1.0)]),
            Err(Error::OrderMismatch { .. })
        ));
    }

    #[test]
    fn infers_dims_from_max_index() {
        let t = SparseTensorCoo::from_entries_infer_dims(vec![
            (vec![0, 0, 0], 2.0),
            (vec![3, 7, 1], 1.0),
        ])
        .unwrap();
        assert_eq!(t.dims(), &[4, 8, 2]);
    }

    #[test]
    fn oracle_single_nonzero_expansion() {
        let t = SparseTensorCoo::from_entries(vec![2, 2, 2], vec![(vec![0, 0, 0], 2.0)]).unwrap();
        let c1 = DenseMatrix::from_vec(2, 2, vec![9.0, 9.0, 9.0, 9.0]).unwrap();
        let c2 = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 7.0, 7.0]).unwrap();
        let c3 = DenseMatrix::from_vec(2, 2, vec![3.0, 4.0, 7.0, 7.0]).unwrap();
        let f = FactorMatrices::new(vec![c1, c2, c3]).unwrap();
        let out = dense_mttkrp_oracle(&t, &f, 0).unwrap();
        assert_eq!(out.row(0), &[6.0, 16.0]);
        assert_eq!(out.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn oracle_with_ones_gives_slice_sums() {
        let t = toy();
        let f = FactorMatrices::ones(t.dims(), 3);
        for mode in 0..3 {
            let out = dense_mttkrp_oracle(&t, &f, mode).unwrap();
            let mut sums = vec![0.0; t.dims()[mode]];
            for (c, v) in t.iter() {
                sums[c[mode]] += v;
            }
            for (i, s) in sums.iter().enumerate() {
                assert!(out.row(i).iter().all(|x| x == s));
            }
        }
    }

    #[test]
    fn oracle_agrees_with_rank_outer_summation() {
        // Second loop ordering: rank outermost, explicit dense box walk.
        let mut rng = seeded_rng(11);
        let mut entries = Vec::new();
        for _ in 0..5 {
            let c: Vec<usize> = (0..3).map(|_| rng.gen_range(0..3)).collect();
            entries.push((c, rng.gen_range(-1.0..1.0)));
        }
        let t = SparseTensorCoo::from_entries(vec![3, 3, 3], entries).unwrap();
        let f = FactorMatrices::random(t.dims(), 2, &mut rng);
        let mut dense = [[[0.0f64; 3]; 3]; 3];
        for (c, v) in t.iter() {
            dense[c[0]][c[1]][c[2]] = v;
        }
        for mode in 0..3 {
            let out = dense_mttkrp_oracle(&t, &f, mode).unwrap();
            for r in 0..2 {
                for i in 0..3 {
                    let mut acc = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            for c in 0..3 {
                                let idx = [a, b, c];
                                if idx[mode] != i {
                                    continue;
                                }
                                let mut p = dense[a][b][c];
                                for (k, &ik) in idx.iter().enumerate() {
                                    if k != mode {
                                        p *= f.matrix(k).get(ik, r);
                                    }
                                }
                                acc += p;
                            }
                        }
                    }
                    assert!((out.get(i, r) - acc).abs() <= 1e-12 * (1.0 + acc.abs()));
                }
            }
        }
    }

    #[test]
    fn oracle_shape_mismatch() {
        let t = toy();
        let f = FactorMatrices::ones(&[4, 8], 2);
        assert!(matches!(dense_mttkrp_oracle(&t, &f, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn density_matches_definition() {
        let t = toy();
        assert!((t.density() - 6.0 / 64.0).abs() < 1e-15);
    }
}
