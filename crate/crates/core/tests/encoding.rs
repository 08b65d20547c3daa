use bitweave_core::env::{state_space_size, StateMatrix};
use bitweave_core::linearize::{alto_default_plan, enumerate_plans, linearize, BitBudget, BitCodec, EncodingPlan};
use bitweave_core::tensor::SparseTensorCoo;
use bitweave_core::seeded_rng;
use num_bigint::BigUint;
use rand::Rng;
use std::collections::BTreeSet;

fn budgets() -> Vec<Vec<u32>> {
    vec![
        vec![1],
        vec![4],
        vec![1, 1],
        vec![2, 2],
        vec![2, 3, 1],
        vec![3, 3],
        vec![1, 1, 1, 1],
        vec![2, 2, 2],
        vec![4, 1, 2],
        vec![3, 2, 1, 1],
        vec![5, 5],
        vec![2, 0, 3],
        vec![6, 6],
        vec![4, 4, 4],
    ]
}

fn factorial(n: u32) -> BigUint {
    (1..=n).map(BigUint::from).product()
}

/// Every plan of every budget maps the padded box onto [0, 2^ℓ(p)) bijectively.
#[test]
fn exhaustive_bijection_up_to_twelve_bits() {
    let mut checked = 0u64;
    for bits in budgets() {
        let b = BitBudget::from_bits(bits.clone());
        assert!(b.total() <= 12);
        let plans = enumerate_plans(&b);
        for plan in plans {
            let codec = BitCodec::new(&plan, &b).unwrap();
            let n = 1usize << b.total();
            let mut seen = vec![false; n];
            let mut coords = vec![0usize; bits.len()];
            loop {
                let p = codec.encode(&coords).unwrap() as usize;
                assert!(!seen[p], "collision at {p} for {plan}");
                seen[p] = true;
                assert_eq!(codec.decode(p as u128).unwrap(), coords);
                checked += 1;
                // odometer over Π [0, 2^ℓ(n))
                let mut m = 0;
                while m < coords.len() {
                    coords[m] += 1;
                    if coords[m] < 1 << bits[m] {
                        break;
                    }
                    coords[m] = 0;
                    m += 1;
                }
                if m == coords.len() {
                    break;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn random_roundtrips() {
    let mut rng = seeded_rng(77);
    for _ in 0..1000 {
        let order = rng.gen_range(1..=5);
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=300)).collect();
        let b = BitBudget::from_dims(&dims);
        if b.total() == 0 {
            continue;
        }
        let mut picks: Vec<usize> = (0..order).flat_map(|m| std::iter::repeat_n(m, b.bits(m) as usize)).collect();
        rand::seq::SliceRandom::shuffle(&mut picks[..], &mut rng);
        let plan = EncodingPlan::new(picks, &b).unwrap();
        let codec = BitCodec::new(&plan, &b).unwrap();
        let c: Vec<usize> = dims.iter().map(|&d| rng.gen_range(0..d)).collect();
        assert_eq!(codec.decode(codec.encode(&c).unwrap()).unwrap(), c);
    }
}

#[test]
fn interleaving_count_matches_enumeration() {
    for bits in budgets() {
        let b = BitBudget::from_bits(bits.clone());
        let closed = factorial(b.total()) / bits.iter().map(|&k| factorial(k)).product::<BigUint>();
        assert_eq!(b.count_interleavings(), closed);
        assert_eq!(state_space_size(&b), closed);
        let plans = enumerate_plans(&b);
        assert_eq!(BigUint::from(plans.len()), closed, "{bits:?}");
        let distinct: BTreeSet<_> = plans.iter().map(|p| p.to_text()).collect();
        assert_eq!(distinct.len(), plans.len());
    }
    assert_eq!(BitBudget::from_bits(vec![2, 3, 1]).count_interleavings(), BigUint::from(60u32));
    assert_eq!(
        BitBudget::from_bits(vec![8, 8, 8, 8]).count_interleavings(),
        BigUint::from(99_561_092_450_391_000u64)
    );
}

/// Terminal states reachable by masked rollouts are exactly the valid plans.
#[test]
fn masked_rollouts_reach_every_plan() {
    for bits in budgets().into_iter().filter(|b| b.iter().sum::<u32>() <= 10) {
        let b = BitBudget::from_bits(bits);
        let mut terminals = BTreeSet::new();
        let mut stack = vec![StateMatrix::initial(&b)];
        while let Some(s) = stack.pop() {
            if s.is_terminal() {
                terminals.insert(s.to_plan().unwrap().to_text());
                continue;
            }
            let valid = s.valid_actions().unwrap();
            assert!(!valid.is_empty());
            for a in valid {
                stack.push(s.transition(a).unwrap());
            }
        }
        assert_eq!(BigUint::from(terminals.len()), b.count_interleavings());
    }
}

/// Distinct plans order a generic tensor differently.
#[test]
fn plans_produce_distinct_orderings() {
    let dims = [4, 8, 2];
    let b = BitBudget::from_dims(&dims);
    let mut entries = Vec::new();
    for i in 0..4 {
        for j in 0..8 {
            for k in 0..2 {
                entries.push((vec![i, j, k], 1.0 + (i * 16 + j * 2 + k) as f64));
            }
        }
    }
    let t = SparseTensorCoo::from_entries(dims.to_vec(), entries).unwrap();
    let orders: BTreeSet<Vec<u64>> = enumerate_plans(&b)
        .iter()
        .map(|p| linearize(&t, p).unwrap().values().iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(orders.len(), 60);
    let alto = linearize(&t, &alto_default_plan(&b)).unwrap();
    let total: f64 = alto.values().iter().sum();
    assert_eq!(total, t.values().iter().sum::<f64>());
}
