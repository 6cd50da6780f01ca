//! Layer implementations with explicit forward caches and backward passes.
//!
//! Activations flow time-major: a `Vec` with one `batch x width` matrix per
//! timestep. Feed-forward data is a sequence of length one.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Seq = Vec<Array2<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
        }
    }

    /// Multiplies `dy` in place by the derivative, expressed through the output `y`.
    fn backprop(self, y: &Array2<f64>, dy: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(dy).and(y).for_each(|d, &y| {
                if y <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => Zip::from(dy).and(y).for_each(|d, &y| *d *= 1.0 - y * y),
            Activation::Sigmoid => Zip::from(dy).and(y).for_each(|d, &y| *d *= y * (1.0 - y)),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn xavier<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    inputs: Seq,
    outputs: Seq,
}

impl DenseCache {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

impl Dense {
    pub fn new<R: Rng>(input: usize, units: usize, activation: Activation, rng: &mut R) -> Self {
        Self { weight: xavier(input, units, input, units, rng), bias: Array1::zeros(units), activation }
    }

    pub fn forward(&self, x: &Seq) -> (Seq, DenseCache) {
        let out: Seq = x
            .iter()
            .map(|xt| {
                let mut z = xt.dot(&self.weight);
                z += &self.bias;
                self.activation.apply(&mut z);
                z
            })
            .collect();
        (out.clone(), DenseCache { inputs: x.clone(), outputs: out })
    }

    pub fn backward(&self, cache: &DenseCache, dy: Seq, grads: &mut [Vec<f64>]) -> Seq {
        let mut dw = Array2::<f64>::zeros(self.weight.raw_dim());
        let mut db = Array1::<f64>::zeros(self.bias.len());
        let mut dx = Vec::with_capacity(dy.len());
        for ((mut d, x), y) in dy.into_iter().zip(&cache.inputs).zip(&cache.outputs) {
            self.activation.backprop(y, &mut d);
            dw += &x.t().dot(&d);
            db += &d.sum_axis(Axis(0));
            dx.push(d.dot(&self.weight.t()));
        }
        accumulate(&mut grads[0], &dw);
        accumulate1(&mut grads[1], &db);
        dx
    }
}

/// Gate order in the packed matrices: input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
    pub units: usize,
    /// Emit only the final hidden state.
    pub last_only: bool,
}

#[derive(Debug, Clone)]
struct LstmStep {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Post-activation gates, packed like the weights.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<LstmStep>,
}

impl Lstm {
    pub fn new<R: Rng>(input: usize, units: usize, last_only: bool, rng: &mut R) -> Self {
        let mut bias = Array1::zeros(4 * units);
        bias.slice_mut(s![units..2 * units]).fill(1.0);
        Self {
            w_input: xavier(input, 4 * units, input, units, rng),
            w_hidden: xavier(units, 4 * units, units, units, rng),
            bias,
            units,
            last_only,
        }
    }

    pub fn forward(&self, x: &Seq) -> (Seq, LstmCache) {
        let h = self.units;
        let batch = x.first().map_or(0, |a| a.nrows());
        let mut h_prev = Array2::<f64>::zeros((batch, h));
        let mut c_prev = Array2::<f64>::zeros((batch, h));
        let mut steps = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(if self.last_only { 1 } else { x.len() });
        for xt in x {
            let mut gates = xt.dot(&self.w_input);
            gates += &h_prev.dot(&self.w_hidden);
            gates += &self.bias;
            gates.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
            gates.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);

            let mut c = Array2::<f64>::zeros((batch, h));
            Zip::from(&mut c)
                .and(&c_prev)
                .and(gates.slice(s![.., 0..h]))
                .and(gates.slice(s![.., h..2 * h]))
                .and(gates.slice(s![.., 2 * h..3 * h]))
                .for_each(|c, &cp, &i, &f, &g| *c = f * cp + i * g);
            let tanh_c = c.mapv(f64::tanh);
            let mut hn = tanh_c.clone();
            hn *= &gates.slice(s![.., 3 * h..]);
            if !self.last_only {
                out.push(hn.clone());
            }
            steps.push(LstmStep { x: xt.clone(), h_prev, c_prev, gates, tanh_c });
            h_prev = hn;
            c_prev = c;
        }
        if self.last_only {
            out.push(h_prev);
        }
        (out, LstmCache { steps })
    }

    pub fn backward(&self, cache: &LstmCache, dy: Seq, grads: &mut [Vec<f64>]) -> Seq {
        let h = self.units;
        let t_len = cache.steps.len();
        let batch = cache.steps.first().map_or(0, |s| s.x.nrows());
        let mut dwx = Array2::<f64>::zeros(self.w_input.raw_dim());
        let mut dwh = Array2::<f64>::zeros(self.w_hidden.raw_dim());
        let mut db = Array1::<f64>::zeros(self.bias.len());
        let mut dx = vec![Array2::<f64>::zeros((0, 0)); t_len];
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        let mut dgates = Array2::<f64>::zeros((batch, 4 * h));

        for t in (0..t_len).rev() {
            let st = &cache.steps[t];
            let mut dh = dh_next;
            if self.last_only {
                if t == t_len - 1 {
                    dh += &dy[0];
                }
            } else {
                dh += &dy[t];
            }
            let gi = st.gates.slice(s![.., 0..h]);
            let gf = st.gates.slice(s![.., h..2 * h]);
            let gg = st.gates.slice(s![.., 2 * h..3 * h]);
            let go = st.gates.slice(s![.., 3 * h..]);

            // dc = dh * o * (1 - tanh(c)^2) + dc_next
            let mut dc = dc_next;
            Zip::from(&mut dc)
                .and(&dh)
                .and(go)
                .and(&st.tanh_c)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

            {
                let (mut d_if, mut d_go) = dgates.view_mut().split_at(Axis(1), 2 * h);
                let (mut d_i, mut d_f) = d_if.view_mut().split_at(Axis(1), h);
                let (mut d_g, mut d_o) = d_go.view_mut().split_at(Axis(1), h);
                Zip::from(&mut d_i).and(&dc).and(gi).and(gg).for_each(|d, &dc, &i, &g| *d = dc * g * i * (1.0 - i));
                Zip::from(&mut d_f)
                    .and(&dc)
                    .and(gf)
                    .and(&st.c_prev)
                    .for_each(|d, &dc, &f, &cp| *d = dc * cp * f * (1.0 - f));
                Zip::from(&mut d_g).and(&dc).and(gi).and(gg).for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
                Zip::from(&mut d_o)
                    .and(&dh)
                    .and(go)
                    .and(&st.tanh_c)
                    .for_each(|d, &dh, &o, &tc| *d = dh * tc * o * (1.0 - o));
            }
            dc *= &gf;
            dc_next = dc;

            dwx += &st.x.t().dot(&dgates);
            dwh += &st.h_prev.t().dot(&dgates);
            db += &dgates.sum_axis(Axis(0));
            dx[t] = dgates.dot(&self.w_input.t());
            dh_next = dgates.dot(&self.w_hidden.t());
        }
        accumulate(&mut grads[0], &dwx);
        accumulate(&mut grads[1], &dwh);
        accumulate1(&mut grads[2], &db);
        dx
    }
}

/// Per-row normalization with learned gain and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub offset: Array1<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Seq,
    inv_std: Vec<Array1<f64>>,
}

impl LayerNormCache {
    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self { gain: Array1::ones(width), offset: Array1::zeros(width), eps: 1e-5 }
    }

    pub fn forward(&self, x: &Seq) -> (Seq, LayerNormCache) {
        let mut out = Vec::with_capacity(x.len());
        let mut normalized = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len());
        for xt in x {
            let n = xt.ncols() as f64;
            let mut xh = xt.clone();
            let mut inv = Array1::zeros(xt.nrows());
            for (mut row, is) in xh.rows_mut().into_iter().zip(inv.iter_mut()) {
                let mean = row.sum() / n;
                row.mapv_inplace(|v| v - mean);
                let var = row.iter().map(|v| v * v).sum::<f64>() / n;
                *is = 1.0 / (var + self.eps).sqrt();
                let s = *is;
                row.mapv_inplace(|v| v * s);
            }
            let mut y = &xh * &self.gain;
            y += &self.offset;
            out.push(y);
            normalized.push(xh);
            inv_std.push(inv);
        }
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: Seq, grads: &mut [Vec<f64>]) -> Seq {
        let mut dgain = Array1::<f64>::zeros(self.gain.len());
        let mut doffset = Array1::<f64>::zeros(self.offset.len());
        let mut dx = Vec::with_capacity(dy.len());
        for ((d, xh), inv) in dy.into_iter().zip(&cache.normalized).zip(&cache.inv_std) {
            dgain += &(&d * xh).sum_axis(Axis(0));
            doffset += &d.sum_axis(Axis(0));
            let n = d.ncols() as f64;
            let mut dxh = d;
            dxh *= &self.gain;
            for ((mut row, xrow), &is) in dxh.rows_mut().into_iter().zip(xh.rows()).zip(inv.iter()) {
                let sum = row.sum();
                let dot: f64 = row.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum();
                Zip::from(&mut row).and(&xrow).for_each(|r, &x| *r = is / n * (n * *r - sum - x * dot));
            }
            dx.push(dxh);
        }
        accumulate1(&mut grads[0], &dgain);
        accumulate1(&mut grads[1], &doffset);
        dx
    }
}

pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}

pub fn softmax_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
        let dot: f64 = drow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
        Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d = y * (*d - dot));
    }
    dx
}

fn accumulate(dst: &mut [f64], src: &Array2<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

fn accumulate1(dst: &mut [f64], src: &Array1<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}
