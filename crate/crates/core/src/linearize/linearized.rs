use alloc::vec::Vec;

use super::{BitBudget, BitCodec, EncodingPlan};
use crate::tensor::SparseTensorCoo;
use crate::{Error, Result};

/// Sorted positions stored in the narrowest word that fits the encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum Positions {
    Narrow(Vec<u64>),
    Wide(Vec<u128>),
}

impl Positions {
    pub fn len(&self) -> usize {
        match self {
            Positions::Narrow(p) => p.len(),
            Positions::Wide(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> u128 {
        match self {
            Positions::Narrow(p) => u128::from(p[i]),
            Positions::Wide(p) => p[i],
        }
    }

    /// Bytes per stored position.
    pub fn word_bytes(&self) -> usize {
        match self {
            Positions::Narrow(_) => 8,
            Positions::Wide(_) => 16,
        }
    }
}

/// Nonzeros ordered by their interleaved position. Coordinates are not
/// stored; they are recovered from positions through the codec.
#[derive(Debug, Clone)]
pub struct LinearizedTensor {
    dims: Vec<usize>,
    plan: EncodingPlan,
    codec: BitCodec,
    positions: Positions,
    values: Vec<f64>,
}

impl LinearizedTensor {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn plan(&self) -> &EncodingPlan {
        &self.plan
    }

    pub fn codec(&self) -> &BitCodec {
        &self.codec
    }

    pub fn positions(&self) -> &Positions {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Bit positions of `p` that hold `mode`'s index.
    pub fn mode_mask(&self, mode: usize) -> u128 {
        self.codec.mode_mask(mode)
    }

    pub fn coords(&self, i: usize) -> Vec<usize> {
        (0..self.order())
            .map(|m| match &self.positions {
                Positions::Narrow(p) => self.codec.extract(p[i], m) as usize,
                Positions::Wide(p) => self.codec.extract(p[i], m) as usize,
            })
            .collect()
    }

    /// Storage footprint of positions plus values. Depends only on nnz and
    /// the word width, never on the plan.
    pub fn storage_bytes(&self) -> usize {
        self.nnz() * (self.positions.word_bytes() + core::mem::size_of::<f64>())
    }
}

/// Encodes every nonzero under `plan` and sorts by position.
pub fn linearize(tensor: &SparseTensorCoo, plan: &EncodingPlan) -> Result<LinearizedTensor> {
    let budget = BitBudget::from_dims(tensor.dims());
    let codec = BitCodec::new(plan, &budget)?;
    let mut keyed: Vec<(u128, usize)> = Vec::with_capacity(tensor.nnz());
    for (i, (coords, _)) in tensor.iter().enumerate() {
        for (mode, (&c, &len)) in coords.iter().zip(tensor.dims()).enumerate() {
            if c >= len {
                return Err(Error::CoordinateOutOfRange { mode, coord: c, len });
            }
        }
        keyed.push((codec.encode(coords)?, i));
    }
    keyed.sort_by_key(|&(p, _)| p);
    let values = keyed.iter().map(|&(_, i)| tensor.values()[i]).collect();
    let positions = if codec.bits() <= 64 {
        Positions::Narrow(keyed.iter().map(|&(p, _)| p as u64).collect())
    } else {
        Positions::Wide(keyed.iter().map(|&(p, _)| p).collect())
    };
    Ok(LinearizedTensor {
        dims: tensor.dims().to_vec(),
        plan: plan.clone(),
        codec,
        positions,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::alto_default_plan;
    use alloc::vec;

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
    fn toy_tensor_under_alto() {
        let t = toy();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        let lt = linearize(&t, &plan).unwrap();
        assert_eq!(lt.nnz(), 6);
        let Positions::Narrow(p) = lt.positions() else { panic!("expected 64-bit words") };
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(lt.values().iter().sum::<f64>(), 21.0);
        for i in 0..lt.nnz() {
            let c = lt.coords(i);
            let j = t.iter().position(|(tc, _)| tc == c.as_slice()).unwrap();
            assert_eq!(t.values()[j], lt.values()[i]);
        }
    }

    #[test]
    fn row_major_plan_orders_like_coordinates() {
        let t = toy();
        let plan = EncodingPlan::row_major(&BitBudget::from_dims(t.dims()));
        let lt = linearize(&t, &plan).unwrap();
        let ordered: Vec<Vec<usize>> = (0..lt.nnz()).map(|i| lt.coords(i)).collect();
        let mut expected: Vec<Vec<usize>> = t.iter().map(|(c, _)| c.to_vec()).collect();
        expected.sort();
        assert_eq!(ordered, expected);
    }

    #[test]
    fn wide_positions_above_64_bits() {
        let dims = vec![1 << 40, 1 << 30];
        let t = SparseTensorCoo::from_entries(
            dims.clone(),
            vec![(vec![(1 << 40) - 1, 5], 1.0), (vec![7, (1 << 30) - 1], 2.0)],
        )
        .unwrap();
        let plan = alto_default_plan(&BitBudget::from_dims(&dims));
        let lt = linearize(&t, &plan).unwrap();
        assert!(matches!(lt.positions(), Positions::Wide(_)));
        assert_eq!(lt.storage_bytes(), 2 * 24);
        let mut got: Vec<Vec<usize>> = (0..2).map(|i| lt.coords(i)).collect();
        got.sort();
        assert_eq!(got, vec![vec![7, (1 << 30) - 1], vec![(1 << 40) - 1, 5]]);
    }
}
