//! Single-threaded MTTKRP over a linearized tensor.
//!
//! The threaded driver in the `bitweave` crate partitions the nonzeros and
//! calls [`accumulate`] on each contiguous range.

use core::ops::Range;

use alloc::format;
use alloc::vec;

use crate::linearize::{BitCodec, LinearizedTensor, PositionWord, Positions};
use crate::tensor::{DenseMatrix, FactorMatrices};
use crate::{Error, Result};

/// Checks that `factors` and `mode` fit `lt`.
pub fn check_shapes(lt: &LinearizedTensor, factors: &FactorMatrices, mode: usize) -> Result<()> {
    factors.check_dims(lt.dims())?;
    if mode >= lt.order() {
        return Err(Error::ShapeMismatch(format!("mode {mode} of an order-{} tensor", lt.order())));
    }
    Ok(())
}

/// Computes the rank-`F` contribution of each nonzero in `range` and hands
/// `(output row, contribution)` to `sink`. `scratch` must hold `F` values.
pub fn accumulate<S>(
    lt: &LinearizedTensor,
    factors: &FactorMatrices,
    mode: usize,
    range: Range<usize>,
    scratch: &mut [f64],
    sink: S,
) where
    S: FnMut(usize, &[f64]),
{
    match lt.positions() {
        Positions::Narrow(p) => run(&p[range.clone()], &lt.values()[range], lt.codec(), factors, mode, scratch, sink),
        Positions::Wide(p) => run(&p[range.clone()], &lt.values()[range], lt.codec(), factors, mode, scratch, sink),
    }
}

#[inline]
fn run<W: PositionWord, S: FnMut(usize, &[f64])>(
    positions: &[W],
    values: &[f64],
    codec: &BitCodec,
    factors: &FactorMatrices,
    mode: usize,
    scratch: &mut [f64],
    mut sink: S,
) {
    let order = codec.order();
    for (&p, &v) in positions.iter().zip(values) {
        scratch.fill(v);
        for k in (0..order).filter(|&k| k != mode) {
            let row = factors.matrix(k).row(codec.extract(p, k) as usize);
            for (s, &c) in scratch.iter_mut().zip(row) {
                *s *= c;
            }
        }
        sink(codec.extract(p, mode) as usize, scratch);
    }
}

/// Whole-tensor MTTKRP on the calling thread.
pub fn mttkrp_sequential(
    lt: &LinearizedTensor,
    factors: &FactorMatrices,
    mode: usize,
) -> Result<DenseMatrix> {
    check_shapes(lt, factors, mode)?;
    let mut out = DenseMatrix::zeros(lt.dims()[mode], factors.rank());
    let mut scratch = vec![0.0; factors.rank()];
    accumulate(lt, factors, mode, 0..lt.nnz(), &mut scratch, |row, contrib| {
        for (o, c) in out.row_mut(row).iter_mut().zip(contrib) {
            *o += c;
        }
    });
    Ok(out)
}
