use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Adam, LayerSpec, Sequential};
use crate::env::StateMatrix;
use crate::{Error, Result, Rng};

/// Hidden units for an `rows × cols` state: `scale · rows · cols`.
pub fn hidden_width(rows: usize, cols: usize, scale: usize) -> usize {
    (scale * rows * cols).max(1)
}

/// Action-value network: two 3×3 convolutions (16 then 32 maps) over the
/// single-channel state image, then two dense layers ending in one value
/// per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    net: Sequential,
    rows: usize,
    cols: usize,
}

impl QNetwork {
    pub fn layout(rows: usize, cols: usize, hidden: usize) -> Vec<LayerSpec> {
        let cells = rows * cols;
        vec![
            LayerSpec::Conv3x3 { in_ch: 1, out_ch: 16, height: rows, width: cols },
            LayerSpec::Relu { len: 16 * cells },
            LayerSpec::Conv3x3 { in_ch: 16, out_ch: 32, height: rows, width: cols },
            LayerSpec::Relu { len: 32 * cells },
            LayerSpec::Dense { inputs: 32 * cells, outputs: hidden },
            LayerSpec::Relu { len: hidden },
            LayerSpec::Dense { inputs: hidden, outputs: rows },
        ]
    }

    /// Zero-weight network.
    pub fn zeros(rows: usize, cols: usize, hidden: usize) -> Result<Self> {
        Ok(Self { net: Sequential::new(Self::layout(rows, cols, hidden))?, rows, cols })
    }

    pub fn new(rows: usize, cols: usize, hidden_scale: usize, rng: &mut Rng) -> Result<Self> {
        let mut q = Self::zeros(rows, cols, hidden_width(rows, cols, hidden_scale))?;
        q.net.init_he(rng);
        Ok(q)
    }

    pub fn from_network(net: Sequential) -> Result<Self> {
        let (rows, cols) = match net.layers().first() {
            Some(&LayerSpec::Conv3x3 { in_ch: 1, height, width, .. }) => (height, width),
            _ => return Err(Error::ShapeMismatch("not an action-value network".into())),
        };
        if net.output_len() != rows {
            return Err(Error::ShapeMismatch("output width must equal the mode count".into()));
        }
        Ok(Self { net, rows, cols })
    }

    /// Wraps an arbitrary network mapping a `rows × cols` image to `rows`
    /// values.
    pub fn with_network(net: Sequential, rows: usize, cols: usize) -> Result<Self> {
        if net.input_len() != rows * cols || net.output_len() != rows {
            return Err(Error::ShapeMismatch(alloc::format!(
                "network maps {} to {}, expected {} to {rows}",
                net.input_len(),
                net.output_len(),
                rows * cols
            )));
        }
        Ok(Self { net, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    fn check(&self, s: &StateMatrix) -> Result<()> {
        if s.rows() != self.rows || s.cols() != self.cols {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{}x{} state for a {}x{} network",
                s.rows(),
                s.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    /// One value per mode.
    pub fn q_values(&self, s: &StateMatrix) -> Result<Vec<f64>> {
        self.check(s)?;
        self.net.forward(&s.to_image())
    }
}

/// A `(terminal state image, log speedup)` training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSample {
    pub image: Vec<f64>,
    pub log_speedup: f64,
}

impl RewardSample {
    pub fn new(state: &StateMatrix, speedup: f64) -> Self {
        Self { image: state.to_image(), log_speedup: libm::log(speedup) }
    }
}

/// Fully connected regressor from a terminal state to its log speedup.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    net: Sequential,
}

impl RewardModel {
    pub fn layout(inputs: usize, hidden: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense { inputs, outputs: hidden },
            LayerSpec::Relu { len: hidden },
            LayerSpec::Dense { inputs: hidden, outputs: hidden },
            LayerSpec::Relu { len: hidden },
            LayerSpec::Dense { inputs: hidden, outputs: 1 },
        ]
    }

    pub fn zeros(rows: usize, cols: usize, hidden: usize) -> Result<Self> {
        Ok(Self { net: Sequential::new(Self::layout(rows * cols, hidden))? })
    }

    /// He-initialized hidden layers and a zero output layer, so an
    /// untrained model predicts the baseline (log speedup 0).
    pub fn new(rows: usize, cols: usize, hidden_scale: usize, rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(rows, cols, hidden_width(rows, cols, hidden_scale))?;
        m.net.init_he(rng);
        let last = m.net.param_range(m.net.layers().len() - 1);
        m.net.params_mut()[last].fill(0.0);
        Ok(m)
    }

    pub fn from_network(net: Sequential) -> Result<Self> {
        if net.output_len() != 1 || net.layers().iter().any(|l| matches!(l, LayerSpec::Conv3x3 { .. })) {
            return Err(Error::ShapeMismatch("not a reward model".into()));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential {
        &mut self.net
    }

    pub fn predict_image(&self, image: &[f64]) -> Result<f64> {
        Ok(self.net.forward(image)?[0])
    }

    /// Predicted log speedup.
    pub fn predict(&self, s: &StateMatrix) -> Result<f64> {
        self.predict_image(&s.to_image())
    }

    /// One Adam step on the mean squared error over `batch`. Returns the
    /// loss before the step.
    pub fn train_batch(&mut self, batch: &[&RewardSample], adam: &mut Adam) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut grads = vec![0.0; self.net.param_count()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            let trace = self.net.forward_trace(&s.image)?;
            let err = trace.output()[0] - s.log_speedup;
            loss += scale * err * err;
            self.net.backward(&trace, &[2.0 * scale * err], &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("reward model loss"));
        }
        adam.step(self.net.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Shuffled minibatch passes over `samples`.
    pub fn fit(
        &mut self,
        samples: &[RewardSample],
        epochs: usize,
        batch: usize,
        adam: &mut Adam,
        rng: &mut Rng,
    ) -> Result<f64> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut last = 0.0;
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch.max(1)) {
                let b: Vec<&RewardSample> = chunk.iter().map(|&i| &samples[i]).collect();
                last = self.train_batch(&b, adam)?;
            }
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{enumerate_plans, BitBudget};
    use crate::seeded_rng;
    use rand::Rng as _;

    #[test]
    fn zero_q_network_outputs_zero() {
        for bits in [vec![2, 3, 1], vec![1, 2, 2, 1]] {
            let b = BitBudget::from_bits(bits);
            let s = StateMatrix::initial(&b);
            let q = QNetwork::zeros(s.rows(), s.cols(), 8).unwrap();
            assert_eq!(q.q_values(&s).unwrap(), vec![0.0; b.order()]);
            let q = QNetwork::new(s.rows(), s.cols(), 4, &mut seeded_rng(0)).unwrap();
            assert_eq!(q.q_values(&s).unwrap().len(), b.order());
        }
    }

    #[test]
    fn q_network_rejects_wrong_state() {
        let q = QNetwork::zeros(3, 6, 4).unwrap();
        let s = StateMatrix::initial(&BitBudget::from_bits(vec![2, 2]));
        assert!(q.q_values(&s).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let b = BitBudget::from_bits(vec![2, 3, 1]);
        let q = QNetwork::new(3, 6, 4, &mut seeded_rng(9)).unwrap();
        let s = StateMatrix::from_picks(&b, &[1, 0, 2]).unwrap();
        let a = q.q_values(&s).unwrap();
        let c = q.q_values(&s).unwrap();
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), c.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn hidden_width_grows_with_state() {
        assert_eq!(hidden_width(3, 6, 4), 72);
        assert!(hidden_width(3, 7, 4) > hidden_width(3, 6, 4));
    }

    #[test]
    fn zero_reward_model_predicts_zero() {
        let m = RewardModel::zeros(3, 6, 10).unwrap();
        let s = StateMatrix::from_picks(&BitBudget::from_bits(vec![2, 3, 1]), &[0, 0, 1, 1, 1, 2]).unwrap();
        assert_eq!(m.predict(&s).unwrap(), 0.0);
    }

    #[test]
    fn reward_model_fits_linear_function() {
        // log speedup = Σ weight[cell] over hot cells: exactly linear.
        let b = BitBudget::from_bits(vec![2, 3, 1]);
        let mut rng = seeded_rng(4);
        let weights: Vec<f64> = (0..18).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mut plans = enumerate_plans(&b);
        plans.shuffle(&mut rng);
        let samples: Vec<RewardSample> = plans
            .iter()
            .map(|p| {
                let s = StateMatrix::from_plan(p, &b).unwrap();
                let img = s.to_image();
                let log: f64 = img.iter().zip(&weights).map(|(x, w)| x * w).sum();
                RewardSample { image: img, log_speedup: log }
            })
            .collect();
        let (train, held) = samples.split_at(50);
        let mut model = RewardModel::new(3, 6, 4, &mut rng).unwrap();
        let mut adam = Adam::new(model.network().param_count(), 1e-3);
        model.fit(train, 2000, 8, &mut adam, &mut rng).unwrap();
        let mean_rel: f64 = held
            .iter()
            .map(|s| {
                let pred = libm::exp(model.predict_image(&s.image).unwrap());
                let truth = libm::exp(s.log_speedup);
                (pred - truth).abs() / truth
            })
            .sum::<f64>()
            / held.len() as f64;
        assert!(mean_rel <= 0.10, "mean relative error {mean_rel}");
    }
}
