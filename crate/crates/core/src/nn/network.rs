use super::layers::{softmax_backward, softmax_rows, Activation, Dense, DenseCache, LayerNorm, LayerNormCache, Lstm, LstmCache, Seq};
use super::NnError;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Lstm { units: usize },
    LayerNorm,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>, seed: u64) -> Self {
        Self { input_width, layers, seed }
    }

    /// Stack of LSTM layers (each followed by layer normalization) feeding a
    /// ReLU dense head and a linear scalar output.
    pub fn lstm_regressor(input_width: usize, lstm: &[usize], dense: &[usize], seed: u64) -> Self {
        let mut layers = Vec::new();
        for &u in lstm {
            layers.push(LayerSpec::Lstm { units: u });
            layers.push(LayerSpec::LayerNorm);
        }
        for &u in dense {
            layers.push(LayerSpec::Dense { units: u, activation: Activation::Relu });
        }
        layers.push(LayerSpec::Dense { units: 1, activation: Activation::Identity });
        Self::new(input_width, layers, seed)
    }

    /// Feed-forward stack with a linear output layer.
    pub fn mlp(input_width: usize, hidden: &[usize], activation: Activation, outputs: usize, seed: u64) -> Self {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&u| LayerSpec::Dense { units: u, activation }).collect();
        layers.push(LayerSpec::Dense { units: outputs, activation: Activation::Identity });
        Self::new(input_width, layers, seed)
    }

    pub fn output_width(&self) -> usize {
        self.layers.iter().fold(self.input_width, |w, l| match l {
            LayerSpec::Dense { units, .. } | LayerSpec::Lstm { units } => *units,
            _ => w,
        })
    }

    pub fn has_recurrence(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Lstm { .. }))
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_width == 0 {
            return Err(NnError::InvalidSpec("input width must be positive".into()));
        }
        for l in &self.layers {
            if let LayerSpec::Dense { units: 0, .. } | LayerSpec::Lstm { units: 0 } = l {
                return Err(NnError::InvalidSpec("layer widths must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Lstm(Lstm),
    LayerNorm(LayerNorm),
    Softmax,
}

#[derive(Debug, Clone)]
enum Cache {
    Dense(DenseCache),
    Lstm(LstmCache),
    LayerNorm(LayerNormCache),
    Softmax(Seq),
}

/// Forward-pass record needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    caches: Vec<Cache>,
}

/// Per-tensor gradients, ordered like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn clip_norm(&mut self, max: f64) {
        let n = self.norm();
        if n > max && n > 0.0 {
            self.scale(max / n);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network with seeded Xavier-uniform weights.
    pub fn new(spec: NetworkSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let last_lstm = spec.layers.iter().rposition(|l| matches!(l, LayerSpec::Lstm { .. }));
        let mut width = spec.input_width;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            layers.push(match *l {
                LayerSpec::Dense { units, activation } => {
                    let d = Dense::new(width, units, activation, &mut rng);
                    width = units;
                    Layer::Dense(d)
                }
                LayerSpec::Lstm { units } => {
                    let d = Lstm::new(width, units, Some(i) == last_lstm, &mut rng);
                    width = units;
                    Layer::Lstm(d)
                }
                LayerSpec::LayerNorm => Layer::LayerNorm(LayerNorm::new(width)),
                LayerSpec::Softmax => Layer::Softmax,
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    /// Runs the network over a time-major batch and returns the output of the
    /// final timestep (`batch x outputs`).
    pub fn forward(&self, x: &Seq) -> Result<(Array2<f64>, Tape), NnError> {
        self.check_input(x)?;
        let mut act = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Dense(d) => {
                    let (y, c) = d.forward(&act);
                    (y, Cache::Dense(c))
                }
                Layer::Lstm(l) => {
                    let (y, c) = l.forward(&act);
                    (y, Cache::Lstm(c))
                }
                Layer::LayerNorm(n) => {
                    let (y, c) = n.forward(&act);
                    (y, Cache::LayerNorm(c))
                }
                Layer::Softmax => {
                    let y: Seq = act.iter().map(softmax_rows).collect();
                    (y.clone(), Cache::Softmax(y))
                }
            };
            act = next;
            caches.push(cache);
        }
        let out = act.pop().ok_or(NnError::EmptyBatch)?;
        Ok((out, Tape { caches }))
    }

    pub fn predict(&self, x: &Seq) -> Result<Array2<f64>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Convenience for feed-forward nets: one `batch x input` matrix.
    pub fn predict_rows(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.predict(&vec![x.clone()])
    }

    /// Backpropagates `d_out` (gradient w.r.t. the forward output) and returns
    /// parameter gradients plus the gradient w.r.t. the input sequence.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> (Gradients, Seq) {
        let mut grads = self.zero_gradients();
        let offsets = self.param_offsets();
        let mut dy: Seq = vec![d_out.clone()];
        for (i, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let g = &mut grads.tensors[offsets[i]..offsets[i + 1]];
            let out_len = match cache {
                Cache::Dense(c) => c.len(),
                Cache::Lstm(_) => dy.len(),
                Cache::LayerNorm(c) => c.len(),
                Cache::Softmax(y) => y.len(),
            };
            // layers ahead of the last LSTM see full sequences; the upstream
            // gradient then only exists for the final step
            let d = pad_sequence(std::mem::take(&mut dy), out_len);
            dy = match (layer, cache) {
                (Layer::Dense(l), Cache::Dense(c)) => l.backward(c, d, g),
                (Layer::Lstm(l), Cache::Lstm(c)) => l.backward(c, d, g),
                (Layer::LayerNorm(l), Cache::LayerNorm(c)) => l.backward(c, d, g),
                (Layer::Softmax, Cache::Softmax(y)) => y.iter().zip(&d).map(|(y, d)| softmax_backward(y, d)).collect(),
                _ => unreachable!("tape does not match network"),
            };
        }
        (grads, dy)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { tensors: self.params().iter().map(|p| vec![0.0; p.len()]).collect() }
    }

    fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        for l in &self.layers {
            let n = match l {
                Layer::Dense(_) => 2,
                Layer::Lstm(_) => 3,
                Layer::LayerNorm(_) => 2,
                Layer::Softmax => 0,
            };
            offsets.push(offsets.last().copied().unwrap_or(0) + n);
        }
        offsets
    }

    /// Parameter tensors as flat slices, in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::Lstm(d) => {
                    out.push(d.w_input.as_slice().expect("standard layout"));
                    out.push(d.w_hidden.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::LayerNorm(n) => {
                    out.push(n.gain.as_slice().expect("standard layout"));
                    out.push(n.offset.as_slice().expect("standard layout"));
                }
                Layer::Softmax => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::Lstm(d) => {
                    out.push(d.w_input.as_slice_mut().expect("standard layout"));
                    out.push(d.w_hidden.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::LayerNorm(n) => {
                    out.push(n.gain.as_slice_mut().expect("standard layout"));
                    out.push(n.offset.as_slice_mut().expect("standard layout"));
                }
                Layer::Softmax => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(NnError::ShapeMismatch { expected: total, got: flat.len() });
        }
        let mut at = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Seq) -> Result<(), NnError> {
        let first = x.first().ok_or(NnError::EmptyBatch)?;
        if first.nrows() == 0 {
            return Err(NnError::EmptyBatch);
        }
        for xt in x {
            if xt.ncols() != self.spec.input_width {
                return Err(NnError::ShapeMismatch { expected: self.spec.input_width, got: xt.ncols() });
            }
            if xt.nrows() != first.nrows() {
                return Err(NnError::ShapeMismatch { expected: first.nrows(), got: xt.nrows() });
            }
        }
        if x.len() > 1 && !self.spec.has_recurrence() {
            return Err(NnError::ShapeMismatch { expected: 1, got: x.len() });
        }
        Ok(())
    }
}

/// Left-pads a last-step-only gradient with zeros up to `len` timesteps.
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

/// Versioned JSON form of a network: its spec plus the flat parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsDocument {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub tensors: Vec<Vec<f64>>,
}

impl WeightsDocument {
    pub fn from_network(net: &Network) -> Self {
        Self {
            format_version: WEIGHTS_FORMAT_VERSION,
            spec: net.spec.clone(),
            tensors: net.params().iter().map(|p| p.to_vec()).collect(),
        }
    }

    pub fn into_network(self) -> Result<Network, NnError> {
        if self.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(NnError::Weights(format!("unsupported format version {}", self.format_version)));
        }
        let mut net = Network::new(self.spec)?;
        let expected = net.params().len();
        if self.tensors.len() != expected {
            return Err(NnError::Weights(format!("expected {expected} tensors, got {}", self.tensors.len())));
        }
        for (dst, src) in net.params_mut().into_iter().zip(&self.tensors) {
            if dst.len() != src.len() {
                return Err(NnError::Weights(format!("tensor length {} does not match {}", src.len(), dst.len())));
            }
            if src.iter().any(|v| !v.is_finite()) {
                return Err(NnError::Weights("non-finite weight".into()));
            }
            dst.copy_from_slice(src);
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Weights(e.to_string()))
    }
}

fn pad_sequence(dy: Seq, len: usize) -> Seq {
    if dy.len() >= len {
        return dy;
    }
    let shape = dy[0].raw_dim();
    let mut out: Seq = (0..len - dy.len()).map(|_| Array2::zeros(shape)).collect();
    out.extend(dy);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = Network::new(NetworkSpec::mlp(3, &[4], Activation::Tanh, 2, 1)).unwrap();
        let n = net.param_count();
        net.set_flat_params(&vec![0.0; n]).unwrap();
        let y = net.predict_rows(&array![[1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(y, array![[0.0, 0.0]]);
    }

    #[test]
    fn identity_dense_reproduces_input() {
        let spec = NetworkSpec::new(3, vec![LayerSpec::Dense { units: 3, activation: Activation::Identity }], 0);
        let mut net = Network::new(spec).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[0] {
            d.weight = Array2::eye(3);
        }
        let x = array![[0.5, -1.0, 2.0], [3.0, 0.0, -0.25]];
        assert_eq!(net.predict_rows(&x).unwrap(), x);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Network::new(NetworkSpec::mlp(3, &[4], Activation::Relu, 1, 1)).unwrap();
        assert!(matches!(net.predict_rows(&array![[1.0, 2.0]]), Err(NnError::ShapeMismatch { .. })));
        let seq = vec![array![[1.0, 2.0, 3.0]], array![[1.0, 2.0, 3.0]]];
        assert!(net.predict(&seq).is_err());
    }

    #[test]
    fn lstm_matches_scalar_cell_oracle() {
        let spec = NetworkSpec::new(2, vec![LayerSpec::Lstm { units: 3 }], 11);
        let net = Network::new(spec).unwrap();
        let Layer::Lstm(l) = &net.layers()[0] else { unreachable!() };
        let input = [0.4, -0.7];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for len in [1usize, 6] {
            let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
            for _ in 0..len {
                let pre = |gate: usize, k: usize| {
                    let col = gate * 3 + k;
                    let mut z = l.bias[col];
                    for (j, x) in input.iter().enumerate() {
                        z += x * l.w_input[[j, col]];
                    }
                    for (j, hv) in h.iter().enumerate() {
                        z += hv * l.w_hidden[[j, col]];
                    }
                    z
                };
                let mut hn = vec![0.0; 3];
                let mut cn = vec![0.0; 3];
                for k in 0..3 {
                    let (i, f, g, o) = (sig(pre(0, k)), sig(pre(1, k)), pre(2, k).tanh(), sig(pre(3, k)));
                    cn[k] = f * c[k] + i * g;
                    hn[k] = o * cn[k].tanh();
                }
                h = hn;
                c = cn;
            }
            let x: Seq = (0..len).map(|_| array![[input[0], input[1]]]).collect();
            let y = net.predict(&x).unwrap();
            for k in 0..3 {
                assert!((y[[0, k]] - h[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let spec = NetworkSpec::new(4, vec![LayerSpec::Dense { units: 5, activation: Activation::Identity }, LayerSpec::Softmax], 2);
        let net = Network::new(spec).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - 2.0) * 10.0 + j as f64);
        let y = net.predict_rows(&x).unwrap();
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn weights_round_trip() {
        let net = Network::new(NetworkSpec::lstm_regressor(3, &[4], &[2], 8)).unwrap();
        let doc = WeightsDocument::from_network(&net);
        let back = WeightsDocument::from_json(&doc.to_json()).unwrap().into_network().unwrap();
        assert_eq!(back, net);
        let mut bad = doc.clone();
        bad.tensors.pop();
        assert!(bad.into_network().is_err());
        let mut bad = doc;
        bad.format_version = 9;
        assert!(bad.into_network().is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = NetworkSpec::lstm_regressor(5, &[6, 4], &[3], 42);
        assert_eq!(Network::new(spec.clone()).unwrap(), Network::new(spec).unwrap());
    }
}
