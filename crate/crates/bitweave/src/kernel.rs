//! Threaded MTTKRP over a linearized tensor.
//!
//! Nonzeros are split into contiguous ranges of the position order, one per
//! thread. When the expected reuse of an output row (`nnz / I_n`) reaches
//! `rho`, every thread accumulates into a private buffer and the buffers are
//! summed pairwise; otherwise threads add straight into a shared output with
//! atomic compare-and-swap, flushing once per run of equal rows.

use std::sync::atomic::{AtomicU64, Ordering};

use bitweave_core::kernel::{accumulate, check_shapes, mttkrp_sequential};
use bitweave_core::linearize::LinearizedTensor;
use bitweave_core::tensor::{DenseMatrix, FactorMatrices};

/// How output-row conflicts between threads were resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncStrategy {
    Sequential,
    Reduction,
    Atomic,
}

pub fn choose_strategy(nnz: usize, rows: usize, threads: usize, rho: f64) -> SyncStrategy {
    if threads <= 1 || nnz < 2 {
        SyncStrategy::Sequential
    } else if nnz as f64 / rows.max(1) as f64 >= rho {
        SyncStrategy::Reduction
    } else {
        SyncStrategy::Atomic
    }
}

pub fn mttkrp_linearized(
    lt: &LinearizedTensor,
    factors: &FactorMatrices,
    mode: usize,
    threads: usize,
    rho: f64,
) -> bitweave_core::Result<DenseMatrix> {
    check_shapes(lt, factors, mode)?;
    let rows = lt.dims()[mode];
    match choose_strategy(lt.nnz(), rows, threads, rho) {
        SyncStrategy::Sequential => mttkrp_sequential(lt, factors, mode),
        SyncStrategy::Reduction => Ok(reduction(lt, factors, mode, threads)),
        SyncStrategy::Atomic => Ok(atomic(lt, factors, mode, threads)),
    }
}

/// Forces one strategy; for tests and benchmarks of the strategies
/// themselves.
pub fn mttkrp_with(
    lt: &LinearizedTensor,
    factors: &FactorMatrices,
    mode: usize,
    threads: usize,
    strategy: SyncStrategy,
) -> bitweave_core::Result<DenseMatrix> {
    check_shapes(lt, factors, mode)?;
    Ok(match strategy {
        SyncStrategy::Sequential => return mttkrp_sequential(lt, factors, mode),
        SyncStrategy::Reduction => reduction(lt, factors, mode, threads.max(1)),
        SyncStrategy::Atomic => atomic(lt, factors, mode, threads.max(1)),
    })
}

fn partition(nnz: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.clamp(1, nnz.max(1));
    (0..parts).map(|i| i * nnz / parts..(i + 1) * nnz / parts).collect()
}

fn reduction(lt: &LinearizedTensor, factors: &FactorMatrices, mode: usize, threads: usize) -> DenseMatrix {
    let (rows, rank) = (lt.dims()[mode], factors.rank());
    let mut buffers: Vec<DenseMatrix> = std::thread::scope(|scope| {
        let handles: Vec<_> = partition(lt.nnz(), threads)
            .into_iter()
            .map(|range| {
                scope.spawn(move || {
                    let mut out = DenseMatrix::zeros(rows, rank);
                    let mut scratch = vec![0.0; rank];
                    accumulate(lt, factors, mode, range, &mut scratch, |row, contrib| {
                        for (o, c) in out.row_mut(row).iter_mut().zip(contrib) {
                            *o += c;
                        }
                    });
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("kernel thread panicked")).collect()
    });
    // pairwise tree: fixed shape, so the sum order depends only on the
    // thread count
    let mut stride = 1;
    while stride < buffers.len() {
        let mut i = 0;
        while i + stride < buffers.len() {
            let (lo, hi) = buffers.split_at_mut(i + stride);
            for (a, b) in lo[i].as_mut_slice().iter_mut().zip(hi[0].as_slice()) {
                *a += b;
            }
            i += 2 * stride;
        }
        stride *= 2;
    }
    buffers.swap_remove(0)
}

fn atomic_add(cell: &AtomicU64, x: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let new = (f64::from_bits(cur) + x).to_bits();
        match cell.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}

fn atomic(lt: &LinearizedTensor, factors: &FactorMatrices, mode: usize, threads: usize) -> DenseMatrix {
    let (rows, rank) = (lt.dims()[mode], factors.rank());
    let out: Vec<AtomicU64> = (0..rows * rank).map(|_| AtomicU64::new(0.0f64.to_bits())).collect();
    let out = &out;
    std::thread::scope(|scope| {
        for range in partition(lt.nnz(), threads) {
            scope.spawn(move || {
                let mut scratch = vec![0.0; rank];
                let mut run = vec![0.0; rank];
                let mut current: Option<usize> = None;
                let flush = |row: usize, run: &mut [f64]| {
                    for (f, v) in run.iter_mut().enumerate() {
                        atomic_add(&out[row * rank + f], *v);
                        *v = 0.0;
                    }
                };
                accumulate(lt, factors, mode, range, &mut scratch, |row, contrib| {
                    if current.is_some_and(|c| c != row) {
                        flush(current.unwrap(), &mut run);
                    }
                    current = Some(row);
                    for (r, c) in run.iter_mut().zip(contrib) {
                        *r += c;
                    }
                });
                if let Some(row) = current {
                    flush(row, &mut run);
                }
            });
        }
    });
    let data = out.iter().map(|c| f64::from_bits(c.load(Ordering::Relaxed))).collect();
    DenseMatrix::from_vec(rows, rank, data).expect("output shape")
}
