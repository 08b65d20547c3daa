use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::{Error, Result, Rng};

/// Shape description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3×3 convolution, stride 1, zero "same" padding. Input and output are
    /// channel-major `[channel][row][col]`.
    Conv3x3 { in_ch: usize, out_ch: usize, height: usize, width: usize },
    /// `y = W x + b` with `W` stored `[out][in]`.
    Dense { inputs: usize, outputs: usize },
    Relu { len: usize },
}

impl LayerSpec {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_ch, height, width, .. } => in_ch * height * width,
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Relu { len } => len,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { out_ch, height, width, .. } => out_ch * height * width,
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Relu { len } => len,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_ch, out_ch, .. } => out_ch * in_ch * 9 + out_ch,
            LayerSpec::Dense { inputs, outputs } => outputs * inputs + outputs,
            LayerSpec::Relu { .. } => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_ch, .. } => in_ch * 9,
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Relu { .. } => 1,
        }
    }

    /// Number of weights; the biases follow them in the parameter slice.
    fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_ch, out_ch, .. } => out_ch * in_ch * 9,
            LayerSpec::Dense { inputs, outputs } => outputs * inputs,
            LayerSpec::Relu { .. } => 0,
        }
    }
}

/// Activations recorded by a forward pass: `acts[0]` is the input and
/// `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

/// A chain of layers whose parameters live in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

impl Sequential {
    /// Zero-initialized network. Adjacent layers must agree on sizes.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("network has no layers".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_len() != w[1].input_len() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} emits {} values, layer {} expects {}",
                    w[0].output_len(),
                    i + 1,
                    w[1].input_len()
                )));
            }
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        offsets.push(total);
        Ok(Self { layers, offsets, params: vec![0.0; total] })
    }

    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(layers)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a network with {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }

    /// He-scaled uniform weights, zero biases.
    pub fn init_he(&mut self, rng: &mut Rng) {
        for (i, l) in self.layers.iter().enumerate() {
            let bound = libm::sqrt(6.0 / l.fan_in() as f64);
            let start = self.offsets[i];
            for w in &mut self.params[start..start + l.weight_count()] {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut self.params[start + l.weight_count()..self.offsets[i + 1]] {
                *b = 0.0;
            }
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].output_len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter range owned by layer `i`.
    pub fn param_range(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            cur = layer_forward(l, &self.params[self.param_range(i)], &cur);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, l) in self.layers.iter().enumerate() {
            let next = layer_forward(l, &self.params[self.param_range(i)], &acts[i]);
            acts.push(next);
        }
        Ok(Trace { acts })
    }

    /// Backpropagates `grad_out` (∂loss/∂output) through a recorded pass,
    /// adding parameter gradients into `grads` and returning ∂loss/∂input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(grad_out.len(), self.output_len());
        let mut g = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let range = self.param_range(i);
            g = layer_backward(l, &self.params[range.clone()], &trace.acts[i], &trace.acts[i + 1], &g, &mut grads[range]);
        }
        g
    }
}

fn layer_forward(l: &LayerSpec, p: &[f64], x: &[f64]) -> Vec<f64> {
    match *l {
        LayerSpec::Conv3x3 { in_ch, out_ch, height, width } => {
            let plane = height * width;
            let (w, b) = p.split_at(out_ch * in_ch * 9);
            let mut out = vec![0.0; out_ch * plane];
            for o in 0..out_ch {
                let dst = &mut out[o * plane..(o + 1) * plane];
                dst.fill(b[o]);
                for i in 0..in_ch {
                    let src = &x[i * plane..(i + 1) * plane];
                    let k = &w[(o * in_ch + i) * 9..(o * in_ch + i + 1) * 9];
                    conv_accumulate(dst, src, k, height, width);
                }
            }
            out
        }
        LayerSpec::Dense { inputs, outputs } => {
            let (w, b) = p.split_at(outputs * inputs);
            (0..outputs)
                .map(|o| b[o] + dot(&w[o * inputs..(o + 1) * inputs], x))
                .collect()
        }
        LayerSpec::Relu { .. } => x.iter().map(|&v| v.max(0.0)).collect(),
    }
}

fn layer_backward(
    l: &LayerSpec,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    gy: &[f64],
    gp: &mut [f64],
) -> Vec<f64> {
    match *l {
        LayerSpec::Conv3x3 { in_ch, out_ch, height, width } => {
            let plane = height * width;
            let nw = out_ch * in_ch * 9;
            let (w, _) = p.split_at(nw);
            let (gw, gb) = gp.split_at_mut(nw);
            let mut gx = vec![0.0; in_ch * plane];
            for o in 0..out_ch {
                let go = &gy[o * plane..(o + 1) * plane];
                gb[o] += go.iter().sum::<f64>();
                for i in 0..in_ch {
                    let src = &x[i * plane..(i + 1) * plane];
                    let base = (o * in_ch + i) * 9;
                    conv_weight_grad(&mut gw[base..base + 9], src, go, height, width);
                    conv_input_grad(&mut gx[i * plane..(i + 1) * plane], &w[base..base + 9], go, height, width);
                }
            }
            gx
        }
        LayerSpec::Dense { inputs, outputs } => {
            let (w, _) = p.split_at(outputs * inputs);
            let (gw, gb) = gp.split_at_mut(outputs * inputs);
            let mut gx = vec![0.0; inputs];
            for o in 0..outputs {
                let g = gy[o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for j in 0..inputs {
                    grow[j] += g * x[j];
                    gx[j] += g * row[j];
                }
            }
            gx
        }
        LayerSpec::Relu { .. } => y
            .iter()
            .zip(gy)
            .map(|(&out, &g)| if out > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Output rows/cols `[lo, hi)` for which input offset `d - 1` stays inside a
/// dimension of length `n`.
#[inline]
fn valid_span(d: usize, n: usize) -> (usize, usize) {
    match d {
        0 => (1.min(n), n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

#[inline]
fn conv_accumulate(dst: &mut [f64], src: &[f64], k: &[f64], h: usize, w: usize) {
    for dy in 0..3 {
        let (y0, y1) = valid_span(dy, h);
        for dx in 0..3 {
            let kv = k[dy * 3 + dx];
            if kv == 0.0 {
                continue;
            }
            let (x0, x1) = valid_span(dx, w);
            for y in y0..y1 {
                let sy = y + dy - 1;
                let d = &mut dst[y * w + x0..y * w + x1];
                let s = &src[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                for (a, &b) in d.iter_mut().zip(s) {
                    *a += kv * b;
                }
            }
        }
    }
}

#[inline]
fn conv_weight_grad(gk: &mut [f64], src: &[f64], go: &[f64], h: usize, w: usize) {
    for dy in 0..3 {
        let (y0, y1) = valid_span(dy, h);
        for dx in 0..3 {
            let (x0, x1) = valid_span(dx, w);
            let mut acc = 0.0;
            for y in y0..y1 {
                let sy = y + dy - 1;
                let g = &go[y * w + x0..y * w + x1];
                let s = &src[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                acc += dot(g, s);
            }
            gk[dy * 3 + dx] += acc;
        }
    }
}

#[inline]
fn conv_input_grad(gx: &mut [f64], k: &[f64], go: &[f64], h: usize, w: usize) {
    for dy in 0..3 {
        let (y0, y1) = valid_span(dy, h);
        for dx in 0..3 {
            let kv = k[dy * 3 + dx];
            if kv == 0.0 {
                continue;
            }
            let (x0, x1) = valid_span(dx, w);
            for y in y0..y1 {
                let sy = y + dy - 1;
                let g = &go[y * w + x0..y * w + x1];
                let d = &mut gx[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                for (a, &b) in d.iter_mut().zip(g) {
                    *a += kv * b;
                }
            }
        }
    }
}
