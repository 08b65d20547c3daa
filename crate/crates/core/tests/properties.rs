use bitweave_core::kernel::mttkrp_sequential;
use bitweave_core::linearize::{linearize, BitBudget, BitCodec, EncodingPlan};
use bitweave_core::seeded_rng;
use bitweave_core::tensor::{dense_mttkrp_oracle, FactorMatrices, SparseTensorCoo};
use proptest::prelude::*;

/// Dims, a shuffle seed for the plan, and raw coordinate draws.
fn shape() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec(1usize..3000, 1..=5).prop_flat_map(|dims| {
        let n = dims.len();
        (Just(dims), prop::collection::vec(any::<usize>(), n..=n))
    })
}

/// A valid plan for `b`, chosen by `keys`: the picks of every mode, sorted
/// by the key drawn for each slot.
fn plan_from_keys(b: &BitBudget, keys: &[u64]) -> EncodingPlan {
    let mut picks: Vec<(u64, usize)> = (0..b.order())
        .flat_map(|m| std::iter::repeat_n(m, b.bits(m) as usize))
        .zip(keys.iter().cycle())
        .map(|(m, &k)| (k, m))
        .collect();
    picks.sort();
    EncodingPlan::new(picks.into_iter().map(|(_, m)| m).collect(), b).unwrap()
}

fn sparse(dims: &[usize], raw: &[(Vec<usize>, f64)]) -> SparseTensorCoo {
    let entries: Vec<(Vec<usize>, f64)> =
        raw.iter().map(|(c, v)| (c.iter().zip(dims).map(|(x, d)| x % d).collect(), *v)).collect();
    SparseTensorCoo::from_entries(dims.to_vec(), entries).unwrap()
}

fn tensor_case() -> impl Strategy<Value = (Vec<usize>, Vec<(Vec<usize>, f64)>, Vec<u64>)> {
    prop::collection::vec(1usize..40, 2..=4).prop_flat_map(|dims| {
        let n = dims.len();
        let entry = (prop::collection::vec(any::<usize>(), n..=n), -10.0f64..10.0);
        (Just(dims), prop::collection::vec(entry, 1..60), prop::collection::vec(any::<u64>(), 1..40))
    })
}

proptest! {
    #[test]
    fn decode_inverts_encode((dims, raw) in shape(), keys in prop::collection::vec(any::<u64>(), 1..64)) {
        let b = BitBudget::from_dims(&dims);
        prop_assume!(b.total() > 0);
        let plan = plan_from_keys(&b, &keys);
        let codec = BitCodec::new(&plan, &b).unwrap();
        let coords: Vec<usize> = raw.iter().zip(&dims).map(|(r, d)| r % d).collect();
        let p = codec.encode(&coords).unwrap();
        prop_assert!(p < 1u128 << b.total());
        prop_assert_eq!(codec.decode(p).unwrap(), coords);
    }

    #[test]
    fn linearized_kernel_matches_oracle((dims, raw, keys) in tensor_case(), rank in 1usize..6, seed in any::<u64>()) {
        let t = sparse(&dims, &raw);
        let b = BitBudget::from_dims(&dims);
        prop_assume!(b.total() > 0);
        let lt = linearize(&t, &plan_from_keys(&b, &keys)).unwrap();
        let factors = FactorMatrices::random(&dims, rank, &mut seeded_rng(seed));
        for mode in 0..dims.len() {
            let oracle = dense_mttkrp_oracle(&t, &factors, mode).unwrap();
            let got = mttkrp_sequential(&lt, &factors, mode).unwrap();
            prop_assert!(got.relative_error(&oracle) <= 1e-10);
        }
    }

    #[test]
    fn oracle_is_linear_in_values((dims, raw, _) in tensor_case(), alpha in -5.0f64..5.0, seed in any::<u64>()) {
        let t = sparse(&dims, &raw);
        let factors = FactorMatrices::random(&dims, 3, &mut seeded_rng(seed));
        for mode in 0..dims.len() {
            let base = dense_mttkrp_oracle(&t, &factors, mode).unwrap();
            let scaled = dense_mttkrp_oracle(&t.scaled(alpha), &factors, mode).unwrap();
            for (s, x) in scaled.as_slice().iter().zip(base.as_slice()) {
                prop_assert!((s - alpha * x).abs() <= 1e-12 * (alpha * x).abs().max(1e-300) + 1e-12);
            }
        }
    }

    #[test]
    fn entry_order_does_not_matter((dims, raw, _) in tensor_case(), seed in any::<u64>()) {
        let t = sparse(&dims, &raw);
        let mut reversed = raw.clone();
        reversed.reverse();
        let r = sparse(&dims, &reversed);
        let factors = FactorMatrices::random(&dims, 2, &mut seeded_rng(seed));
        for mode in 0..dims.len() {
            let a = dense_mttkrp_oracle(&t, &factors, mode).unwrap();
            let b = dense_mttkrp_oracle(&r, &factors, mode).unwrap();
            prop_assert!(b.relative_error(&a) <= 1e-12);
        }
    }
}
