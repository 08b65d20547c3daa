use alloc::vec;
#[cfg(test)]
use alloc::vec::Vec;

use super::Sequential;

/// Worst disagreement found by [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares backprop against central differences for the scalar loss
/// `Σ_k weights[k] · output[k]` at the parameters in `indices`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    net: &Sequential,
    input: &[f64],
    weights: &[f64],
    indices: &[usize],
    h: f64,
) -> GradCheck {
    let loss = |n: &Sequential| -> f64 {
        n.forward(input)
            .expect("input fits network")
            .iter()
            .zip(weights)
            .map(|(o, w)| o * w)
            .sum()
    };
    let trace = net.forward_trace(input).expect("input fits network");
    let mut analytic = vec![0.0; net.param_count()];
    net.backward(&trace, weights, &mut analytic);

    let mut probe = net.clone();
    let mut worst = GradCheck { max_rel_error: 0.0, worst_index: 0, checked: 0 };
    for &i in indices {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.params_mut()[i] = orig - h;
        let down = loss(&probe);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst.checked += 1;
        if rel > worst.max_rel_error {
            worst.max_rel_error = rel;
            worst.worst_index = i;
        }
    }
    worst
}

#[cfg(test)]
/// Central-difference gradient with respect to the input, used to check
/// the input gradient returned by backprop.
pub(crate) fn numeric_input_grad(net: &Sequential, input: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
    let loss = |x: &[f64]| -> f64 {
        net.forward(x).unwrap().iter().zip(weights).map(|(o, w)| o * w).sum()
    };
    let mut x = input.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss(&x);
            x[i] = orig - h;
            let down = loss(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use crate::seeded_rng;
    use rand::Rng as _;

    #[test]
    fn each_layer_kind_passes() {
        let mut rng = seeded_rng(21);
        let nets = [
            vec![LayerSpec::Dense { inputs: 5, outputs: 4 }],
            vec![LayerSpec::Conv3x3 { in_ch: 2, out_ch: 3, height: 3, width: 5 }],
            vec![LayerSpec::Dense { inputs: 6, outputs: 6 }, LayerSpec::Relu { len: 6 }, LayerSpec::Dense { inputs: 6, outputs: 2 }],
        ];
        for layers in nets {
            let mut net = Sequential::new(layers).unwrap();
            net.init_he(&mut rng);
            // nonzero biases so they are exercised too
            for p in net.params_mut() {
                *p += rng.gen_range(-0.1..0.1);
            }
            let x: Vec<f64> = (0..net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..net.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let all: Vec<usize> = (0..net.param_count()).collect();
            let check = gradient_check(&net, &x, &w, &all, 1e-5);
            assert!(check.max_rel_error <= 1e-4, "{check:?}");

            let trace = net.forward_trace(&x).unwrap();
            let mut g = vec![0.0; net.param_count()];
            let gx = net.backward(&trace, &w, &mut g);
            let nx = numeric_input_grad(&net, &x, &w, 1e-5);
            for (a, n) in gx.iter().zip(&nx) {
                assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1e-6));
            }
        }
    }
}
