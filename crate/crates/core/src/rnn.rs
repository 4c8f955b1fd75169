//! Single-layer recurrent networks trained with backpropagation through time.
//!
//! Two cell types share one parameter layout:
//!
//! * plain RNN: `h_i = tanh(W_x x_i + W_h h_{i-1} + b_h)`
//! * LSTM: the recurrent tensors stack four gate blocks in the order
//!   input, forget, output, cell candidate (`4 d_h` rows).
//!
//! In both cases `y_i = W_y h_i + b_y` and `h_0 = 0` (and `c_0 = 0`).
//! The loss over `N` sequences is `(1/N) Σ_n Σ_i ‖y_i − t_i‖²`.
//! Matrices are row-major `Vec<f64>`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::NormalizationStats;
use crate::seed;

pub const TENSOR_NAMES: [&str; 5] = ["W_x", "W_h", "b_h", "W_y", "b_y"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RnnError {
    #[error("sequence {index}: {what}")]
    Shape { index: usize, what: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rnn,
    Lstm,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Rnn => "rnn",
            Mode::Lstm => "lstm",
        }
    }

    /// Number of stacked gate blocks.
    pub fn gates(self) -> usize {
        match self {
            Mode::Rnn => 1,
            Mode::Lstm => 4,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = RnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rnn" => Ok(Mode::Rnn),
            "lstm" => Ok(Mode::Lstm),
            _ => Err(RnnError::Config("mode must be rnn or lstm")),
        }
    }
}

/// Network parameters Θ. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub mode: Mode,
    pub d_x: usize,
    pub d_h: usize,
    pub d_y: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_y: Vec<f64>,
    pub b_y: Vec<f64>,
}

impl RnnParams {
    pub fn zeros(mode: Mode, d_x: usize, d_h: usize, d_y: usize) -> Self {
        let g = mode.gates() * d_h;
        Self {
            mode,
            d_x,
            d_h,
            d_y,
            w_x: vec![0.0; g * d_x],
            w_h: vec![0.0; g * d_h],
            b_h: vec![0.0; g],
            w_y: vec![0.0; d_y * d_h],
            b_y: vec![0.0; d_y],
        }
    }

    /// Weights uniform on `[-scale, scale)`, biases zero, forget-gate bias one.
    pub fn init(
        mode: Mode,
        d_x: usize,
        d_h: usize,
        d_y: usize,
        scale: f64,
        rng: &mut seed::Rng,
    ) -> Self {
        let mut p = Self::zeros(mode, d_x, d_h, d_y);
        for w in p
            .w_x
            .iter_mut()
            .chain(p.w_h.iter_mut())
            .chain(p.w_y.iter_mut())
        {
            *w = rng.gen_range(-scale..scale);
        }
        if mode == Mode::Lstm {
            p.b_h[d_h..2 * d_h].fill(1.0);
        }
        p
    }

    /// `(name, rows, cols)` of each tensor, in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [(&'static str, usize, usize); 5] {
        let g = self.mode.gates() * self.d_h;
        [
            ("W_x", g, self.d_x),
            ("W_h", g, self.d_h),
            ("b_h", g, 1),
            ("W_y", self.d_y, self.d_h),
            ("b_y", self.d_y, 1),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.w_x, &self.w_h, &self.b_h, &self.w_y, &self.b_y]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_x,
            &mut self.w_h,
            &mut self.b_h,
            &mut self.w_y,
            &mut self.b_y,
        ]
    }

    /// True when every tensor has the length its shape demands.
    pub fn shapes_consistent(&self) -> bool {
        self.shapes()
            .iter()
            .zip(self.tensors())
            .all(|((_, r, c), t)| t.len() == r * c)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zeroed(&self) -> Self {
        Self::zeros(self.mode, self.d_x, self.d_h, self.d_y)
    }
}

/// One training or validation sequence, flattened row-major:
/// `x` is `T × d_x`, `t` is `T × d_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl Sequence {
    pub fn steps(&self, d_x: usize) -> usize {
        self.x.len() / d_x
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-v))
}

fn check_input(p: &RnnParams, x: &[f64], index: usize) -> Result<usize, RnnError> {
    if p.d_x == 0 || x.len() % p.d_x != 0 {
        return Err(RnnError::Shape {
            index,
            what: "input length is not a multiple of d_x",
        });
    }
    if !p.shapes_consistent() {
        return Err(RnnError::Shape {
            index,
            what: "parameter tensors do not match their dimensions",
        });
    }
    Ok(x.len() / p.d_x)
}

fn check_pair(p: &RnnParams, s: &Sequence, index: usize) -> Result<usize, RnnError> {
    let steps = check_input(p, &s.x, index)?;
    if s.t.len() != steps * p.d_y {
        return Err(RnnError::Shape {
            index,
            what: "target length does not match input length",
        });
    }
    Ok(steps)
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Default)]
struct Tape {
    /// `(T + 1) × d_h`, row 0 is `h_0`.
    h: Vec<f64>,
    /// LSTM only: `(T + 1) × d_h` cell states.
    c: Vec<f64>,
    /// LSTM only: `T × 4 d_h` gate activations after the nonlinearity.
    gates: Vec<f64>,
    /// `T × d_y`.
    y: Vec<f64>,
}

fn run(p: &RnnParams, x: &[f64], steps: usize, tape: &mut Tape) {
    let (dx, dh, dy) = (p.d_x, p.d_h, p.d_y);
    let g = p.mode.gates() * dh;
    tape.h.clear();
    tape.h.resize((steps + 1) * dh, 0.0);
    tape.y.clear();
    tape.y.resize(steps * dy, 0.0);
    if p.mode == Mode::Lstm {
        tape.c.clear();
        tape.c.resize((steps + 1) * dh, 0.0);
        tape.gates.clear();
        tape.gates.resize(steps * g, 0.0);
    }
    let mut z = vec![0.0; g];
    for i in 0..steps {
        let xi = &x[i * dx..(i + 1) * dx];
        let (before, after) = tape.h.split_at_mut((i + 1) * dh);
        let h_prev = &before[i * dh..];
        for r in 0..g {
            let mut s = p.b_h[r];
            let wx = &p.w_x[r * dx..(r + 1) * dx];
            for k in 0..dx {
                s += wx[k] * xi[k];
            }
            let wh = &p.w_h[r * dh..(r + 1) * dh];
            for k in 0..dh {
                s += wh[k] * h_prev[k];
            }
            z[r] = s;
        }
        let h = &mut after[..dh];
        match p.mode {
            Mode::Rnn => {
                for k in 0..dh {
                    h[k] = libm::tanh(z[k]);
                }
            }
            Mode::Lstm => {
                let a = &mut tape.gates[i * g..(i + 1) * g];
                for k in 0..3 * dh {
                    a[k] = sigmoid(z[k]);
                }
                for k in 3 * dh..4 * dh {
                    a[k] = libm::tanh(z[k]);
                }
                let (cb, ca) = tape.c.split_at_mut((i + 1) * dh);
                let c_prev = &cb[i * dh..];
                let c = &mut ca[..dh];
                for k in 0..dh {
                    c[k] = a[dh + k] * c_prev[k] + a[k] * a[3 * dh + k];
                    h[k] = a[2 * dh + k] * libm::tanh(c[k]);
                }
            }
        }
        let y = &mut tape.y[i * dy..(i + 1) * dy];
        for r in 0..dy {
            let mut s = p.b_y[r];
            let wy = &p.w_y[r * dh..(r + 1) * dh];
            for k in 0..dh {
                s += wy[k] * h[k];
            }
            y[r] = s;
        }
    }
}

/// Network outputs for one input sequence, `T × d_y` row-major.
pub fn forward(p: &RnnParams, x: &[f64]) -> Result<Vec<f64>, RnnError> {
    let steps = check_input(p, x, 0)?;
    let mut tape = Tape::default();
    run(p, x, steps, &mut tape);
    Ok(tape.y)
}

fn squared_error(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Mean over sequences of the summed squared error.
pub fn mse_loss(p: &RnnParams, batch: &[Sequence]) -> Result<f64, RnnError> {
    if batch.is_empty() {
        return Err(RnnError::EmptyBatch);
    }
    let mut tape = Tape::default();
    let mut total = 0.0;
    for (n, s) in batch.iter().enumerate() {
        let steps = check_pair(p, s, n)?;
        run(p, &s.x, steps, &mut tape);
        total += squared_error(&tape.y, &s.t);
    }
    Ok(total / batch.len() as f64)
}

/// Reusable buffers for [`backward`].
#[derive(Debug, Default)]
struct Scratch {
    tape: Tape,
    dh: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    dz: Vec<f64>,
    dy: Vec<f64>,
}

/// Adds the gradient of `scale · Σ_i ‖y_i − t_i‖²` for one sequence to `grad`
/// and returns the unscaled squared error.
fn accumulate(
    p: &RnnParams,
    s: &Sequence,
    steps: usize,
    scale: f64,
    grad: &mut RnnParams,
    w: &mut Scratch,
) -> f64 {
    let (dx, dh, dy) = (p.d_x, p.d_h, p.d_y);
    let g = p.mode.gates() * dh;
    run(p, &s.x, steps, &mut w.tape);
    let loss = squared_error(&w.tape.y, &s.t);
    w.dh.clear();
    w.dh.resize(dh, 0.0);
    w.dh_next.clear();
    w.dh_next.resize(dh, 0.0);
    w.dc_next.clear();
    w.dc_next.resize(dh, 0.0);
    w.dz.clear();
    w.dz.resize(g, 0.0);
    w.dy.clear();
    w.dy.resize(dy, 0.0);
    let tape = &w.tape;
    for i in (0..steps).rev() {
        let h = &tape.h[(i + 1) * dh..(i + 2) * dh];
        let h_prev = &tape.h[i * dh..(i + 1) * dh];
        let xi = &s.x[i * dx..(i + 1) * dx];
        for r in 0..dy {
            w.dy[r] = 2.0 * scale * (tape.y[i * dy + r] - s.t[i * dy + r]);
        }
        w.dh.copy_from_slice(&w.dh_next);
        for r in 0..dy {
            let e = w.dy[r];
            grad.b_y[r] += e;
            let gy = &mut grad.w_y[r * dh..(r + 1) * dh];
            let wy = &p.w_y[r * dh..(r + 1) * dh];
            for k in 0..dh {
                gy[k] += e * h[k];
                w.dh[k] += wy[k] * e;
            }
        }
        match p.mode {
            Mode::Rnn => {
                for k in 0..dh {
                    w.dz[k] = w.dh[k] * (1.0 - h[k] * h[k]);
                }
            }
            Mode::Lstm => {
                let a = &tape.gates[i * g..(i + 1) * g];
                let c = &tape.c[(i + 1) * dh..(i + 2) * dh];
                let c_prev = &tape.c[i * dh..(i + 1) * dh];
                for k in 0..dh {
                    let (ig, fg, og, cg) = (a[k], a[dh + k], a[2 * dh + k], a[3 * dh + k]);
                    let tc = libm::tanh(c[k]);
                    let dc = w.dh[k] * og * (1.0 - tc * tc) + w.dc_next[k];
                    w.dz[k] = dc * cg * ig * (1.0 - ig);
                    w.dz[dh + k] = dc * c_prev[k] * fg * (1.0 - fg);
                    w.dz[2 * dh + k] = w.dh[k] * tc * og * (1.0 - og);
                    w.dz[3 * dh + k] = dc * ig * (1.0 - cg * cg);
                    w.dc_next[k] = dc * fg;
                }
            }
        }
        w.dh_next.fill(0.0);
        for r in 0..g {
            let e = w.dz[r];
            if e == 0.0 {
                continue;
            }
            grad.b_h[r] += e;
            let gx = &mut grad.w_x[r * dx..(r + 1) * dx];
            for k in 0..dx {
                gx[k] += e * xi[k];
            }
            let gh = &mut grad.w_h[r * dh..(r + 1) * dh];
            let wh = &p.w_h[r * dh..(r + 1) * dh];
            for k in 0..dh {
                gh[k] += e * h_prev[k];
                w.dh_next[k] += wh[k] * e;
            }
        }
    }
    loss
}

fn gradient<'a>(
    p: &RnnParams,
    batch: impl ExactSizeIterator<Item = &'a Sequence>,
    w: &mut Scratch,
) -> Result<(f64, RnnParams), RnnError> {
    let n = batch.len();
    if n == 0 {
        return Err(RnnError::EmptyBatch);
    }
    let scale = 1.0 / n as f64;
    let mut grad = p.zeroed();
    let mut total = 0.0;
    for (index, s) in batch.enumerate() {
        let steps = check_pair(p, s, index)?;
        total += accumulate(p, s, steps, scale, &mut grad, w);
    }
    Ok((total * scale, grad))
}

/// Loss and its exact gradient with respect to every parameter.
pub fn backward(p: &RnnParams, batch: &[Sequence]) -> Result<(f64, RnnParams), RnnError> {
    gradient(p, batch.iter(), &mut Scratch::default())
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: RnnParams,
    v: RnnParams,
    t: i32,
}

impl Adam {
    pub fn new(p: &RnnParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: p.zeroed(),
            v: p.zeroed(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, p: &mut RnnParams, grad: &RnnParams) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = p.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((pt, gt), mt), vt) in params.into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
            for k in 0..pt.len() {
                let gk = gt[k];
                mt[k] = b1 * mt[k] + (1.0 - b1) * gk;
                vt[k] = b2 * vt[k] + (1.0 - b2) * gk * gk;
                let mh = mt[k] / c1;
                let vh = vt[k] / c2;
                pt[k] -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fixed minibatch size; `None` uses `max(1, min(N / 100, 500))`.
    pub minibatch: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Lstm,
            hidden: 32,
            learning_rate: 1e-3,
            epochs: 100,
            minibatch: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init_scale: 0.08,
            seed: 0,
        }
    }
}

pub fn default_minibatch(n: usize) -> usize {
    (n / 100).min(500).max(1)
}

impl TrainConfig {
    pub fn minibatch_size(&self, n: usize) -> usize {
        self.minibatch
            .unwrap_or_else(|| default_minibatch(n))
            .clamp(1, n.max(1))
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RnnError::Config("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(RnnError::Config("epochs must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(RnnError::Config("hidden size must be at least 1"));
        }
        if self.minibatch == Some(0) {
            return Err(RnnError::Config("minibatch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(RnnError::Config("Adam parameters out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: RnnParams,
    /// Mean training loss per epoch, accumulated over the epoch's minibatches.
    pub losses: Vec<f64>,
}

/// Minibatch Adam training; the data order is reshuffled every epoch.
pub fn train(
    data: &[Sequence],
    d_x: usize,
    d_y: usize,
    cfg: &TrainConfig,
) -> Result<Trained, RnnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(RnnError::EmptyBatch);
    }
    let mut rng = seed::rng(cfg.seed);
    let mut params = RnnParams::init(cfg.mode, d_x, cfg.hidden, d_y, cfg.init_scale, &mut rng);
    for (index, s) in data.iter().enumerate() {
        check_pair(&params, s, index)?;
    }
    let mut adam = Adam::new(&params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    let batch = cfg.minibatch_size(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scratch = Scratch::default();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = gradient(&params, chunk.iter().map(|&i| &data[i]), &mut scratch)?;
            total += loss * chunk.len() as f64;
            adam.step(&mut params, &grad);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(RnnError::Diverged { epoch: epoch + 1 });
        }
        losses.push(mean);
    }
    Ok(Trained { params, losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashPrediction {
    pub positive: bool,
    pub crash_time: Option<usize>,
}

impl CrashPrediction {
    pub fn from_gaps(gaps: impl IntoIterator<Item = f64>, threshold: f64) -> Self {
        let crash_time = crate::dataset::first_crash(gaps, threshold);
        Self {
            positive: crash_time.is_some(),
            crash_time,
        }
    }
}

/// Runs the network on normalized inputs and looks for the first step whose
/// denormalized gap (output dimension 2) falls below `threshold`.
pub fn predict_crash(
    p: &RnnParams,
    x: &[f64],
    stats: &NormalizationStats,
    threshold: f64,
) -> Result<CrashPrediction, RnnError> {
    let y = forward(p, x)?;
    Ok(CrashPrediction::from_gaps(
        stats.invert(&y).into_iter().map(|v| v[2]),
        threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn random_params(mode: Mode, d_h: usize, seed: u64) -> RnnParams {
        let mut rng = seed::rng(seed);
        let mut p = RnnParams::init(mode, 2, d_h, 3, 0.5, &mut rng);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        p
    }

    fn random_seq(steps: usize, rng: &mut seed::Rng) -> Sequence {
        Sequence {
            x: (0..steps * 2).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            t: (0..steps * 3).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        }
    }

    /// Independent forward pass over nested vectors, one scalar at a time.
    fn reference_forward(p: &RnnParams, x: &[f64]) -> Vec<f64> {
        let dh = p.d_h;
        let row =
            |m: &[f64], cols: usize, r: usize| -> Vec<f64> { m[r * cols..(r + 1) * cols].to_vec() };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(u, v)| u * v).sum() };
        let mut h = vec![0.0; dh];
        let mut c = vec![0.0; dh];
        let mut out = Vec::new();
        for xi in x.chunks(2) {
            let pre = |r: usize, h: &[f64]| {
                p.b_h[r] + dot(&row(&p.w_x, 2, r), xi) + dot(&row(&p.w_h, dh, r), h)
            };
            let new_h: Vec<f64> = match p.mode {
                Mode::Rnn => (0..dh).map(|k| libm::tanh(pre(k, &h))).collect(),
                Mode::Lstm => {
                    let mut nh = vec![0.0; dh];
                    for k in 0..dh {
                        let i = 1.0 / (1.0 + libm::exp(-pre(k, &h)));
                        let f = 1.0 / (1.0 + libm::exp(-pre(dh + k, &h)));
                        let o = 1.0 / (1.0 + libm::exp(-pre(2 * dh + k, &h)));
                        let g = libm::tanh(pre(3 * dh + k, &h));
                        c[k] = f * c[k] + i * g;
                        nh[k] = o * libm::tanh(c[k]);
                    }
                    nh
                }
            };
            h = new_h;
            for r in 0..3 {
                out.push(p.b_y[r] + dot(&row(&p.w_y, dh, r), &h));
            }
        }
        out
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        for mode in [Mode::Rnn, Mode::Lstm] {
            let p = RnnParams::zeros(mode, 2, 4, 3);
            assert!(forward(&p, &[1.0, -2.0, 0.5, 3.0])
                .unwrap()
                .iter()
                .all(|&y| y == 0.0));
        }
    }

    #[test]
    fn constant_network() {
        let mut p = RnnParams::zeros(Mode::Rnn, 2, 1, 3);
        p.w_y = vec![1.0; 3];
        p.b_y = vec![0.25, -1.0, 7.0];
        let y = forward(&p, &[3.0, 4.0, -1.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(y, [0.25, -1.0, 7.0, 0.25, -1.0, 7.0, 0.25, -1.0, 7.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = seed::rng(3);
        for mode in [Mode::Rnn, Mode::Lstm] {
            for seed in 0..5 {
                let p = random_params(mode, 5, seed);
                let s = random_seq(17, &mut rng);
                let y = forward(&p, &s.x).unwrap();
                for (a, b) in y.iter().zip(reference_forward(&p, &s.x)) {
                    assert!((a - b).abs() < 1e-12, "{mode}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = RnnParams::zeros(Mode::Lstm, 2, 3, 3);
        assert!(matches!(
            forward(&p, &[1.0, 2.0, 3.0]),
            Err(RnnError::Shape { .. })
        ));
        let bad = Sequence {
            x: vec![0.0; 4],
            t: vec![0.0; 3],
        };
        assert!(matches!(
            mse_loss(&p, &[bad]),
            Err(RnnError::Shape { index: 0, .. })
        ));
        assert_eq!(mse_loss(&p, &[]), Err(RnnError::EmptyBatch));
        let mut broken = p.clone();
        broken.w_h.pop();
        assert!(matches!(
            forward(&broken, &[1.0, 2.0]),
            Err(RnnError::Shape { .. })
        ));
    }

    #[test]
    fn loss_fixtures() {
        let p = RnnParams::zeros(Mode::Rnn, 2, 2, 3);
        let s = Sequence {
            x: vec![0.0, 0.0],
            t: vec![-1.0, 0.0, 0.0],
        };
        assert_eq!(mse_loss(&p, &[s]).unwrap(), 1.0);
        let mut rng = seed::rng(9);
        let p = random_params(Mode::Lstm, 4, 1);
        let batch: Vec<Sequence> = (0..4).map(|_| random_seq(6, &mut rng)).collect();
        let mut naive = 0.0;
        for s in &batch {
            let y = reference_forward(&p, &s.x);
            for i in 0..6 {
                for k in 0..3 {
                    naive += (y[i * 3 + k] - s.t[i * 3 + k]).powi(2);
                }
            }
        }
        naive /= 4.0;
        assert!((mse_loss(&p, &batch).unwrap() - naive).abs() < 1e-12);
        let exact: Vec<Sequence> = batch
            .iter()
            .map(|s| Sequence {
                x: s.x.clone(),
                t: forward(&p, &s.x).unwrap(),
            })
            .collect();
        assert_eq!(mse_loss(&p, &exact).unwrap(), 0.0);
        let (_, g) = backward(&p, &exact).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(21);
        for mode in [Mode::Rnn, Mode::Lstm] {
            let p = random_params(mode, 3, 4);
            let batch: Vec<Sequence> = (0..2).map(|_| random_seq(4, &mut rng)).collect();
            let (_, g) = backward(&p, &batch).unwrap();
            for (ti, t) in g.tensors().iter().enumerate() {
                for k in 0..t.len() {
                    let mut plus = p.clone();
                    plus.tensors_mut()[ti][k] += 1e-5;
                    let mut minus = p.clone();
                    minus.tensors_mut()[ti][k] -= 1e-5;
                    let fd = (mse_loss(&plus, &batch).unwrap() - mse_loss(&minus, &batch).unwrap())
                        / 2e-5;
                    let denom = t[k].abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (t[k] - fd).abs() / denom < 1e-5,
                        "{mode} {} [{k}]: {} vs {fd}",
                        TENSOR_NAMES[ti],
                        t[k]
                    );
                }
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let mut rng = seed::rng(5);
        let p = random_params(Mode::Lstm, 3, 2);
        let batch: Vec<Sequence> = (0..3).map(|_| random_seq(5, &mut rng)).collect();
        let doubled: Vec<Sequence> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = backward(&p, &batch).unwrap();
        let (l2, g2) = backward(&p, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let p0 = random_params(Mode::Rnn, 3, 0);
        let mut p = p0.clone();
        let mut adam = Adam::new(&p, 1e-3, 0.9, 0.999, 1e-8);
        adam.step(&mut p, &p0.zeroed());
        assert_eq!(p, p0);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn init_scheme() {
        let mut rng = seed::rng(1);
        let p = RnnParams::init(Mode::Lstm, 2, 4, 3, 0.08, &mut rng);
        assert!(p
            .w_x
            .iter()
            .chain(&p.w_h)
            .chain(&p.w_y)
            .all(|w| w.abs() <= 0.08));
        assert_eq!(
            p.b_h,
            [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(p.b_y, [0.0; 3]);
        assert_eq!(p.num_params(), 16 * 2 + 16 * 4 + 16 + 12 + 3);
    }

    #[test]
    fn minibatch_rule() {
        assert_eq!(default_minibatch(50), 1);
        assert_eq!(default_minibatch(500), 5);
        assert_eq!(default_minibatch(200_000), 500);
        let cfg = TrainConfig {
            minibatch: Some(64),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.minibatch_size(10), 10);
    }

    #[test]
    fn learns_a_constant_target_deterministically() {
        let data = vec![Sequence {
            x: vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.0],
            t: vec![0.5, -0.25, 0.1].repeat(3),
        }];
        for mode in [Mode::Rnn, Mode::Lstm] {
            let cfg = TrainConfig {
                mode,
                hidden: 4,
                epochs: 200,
                learning_rate: 1e-2,
                seed: 4,
                ..TrainConfig::default()
            };
            let a = train(&data, 2, 3, &cfg).unwrap();
            assert!(
                *a.losses.last().unwrap() < 1e-3,
                "{mode}: {:?}",
                a.losses.last()
            );
            assert!(a.losses[0] > *a.losses.last().unwrap());
            let b = train(&data, 2, 3, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![Sequence {
            x: vec![1.0, 1.0],
            t: vec![f64::NAN, 0.0, 0.0],
        }];
        let cfg = TrainConfig {
            mode: Mode::Rnn,
            hidden: 2,
            epochs: 3,
            ..TrainConfig::default()
        };
        assert_eq!(
            train(&data, 2, 3, &cfg),
            Err(RnnError::Diverged { epoch: 1 })
        );
        let bad = TrainConfig { epochs: 0, ..cfg };
        assert!(matches!(train(&data, 2, 3, &bad), Err(RnnError::Config(_))));
    }

    #[test]
    fn crash_prediction() {
        let stats = NormalizationStats {
            in_mean: [0.0; 2],
            in_std: [1.0; 2],
            out_mean: [0.0; 3],
            out_std: [1.0; 3],
        };
        let mut p = RnnParams::zeros(Mode::Rnn, 2, 1, 3);
        p.b_y = vec![0.0, 0.0, 1.0];
        let x = vec![0.0; 40];
        assert_eq!(
            predict_crash(&p, &x, &stats, 0.43).unwrap(),
            CrashPrediction {
                positive: false,
                crash_time: None
            }
        );
        let mut gaps = vec![1.0; 30];
        gaps[17] = 0.2;
        gaps[20] = 0.1;
        assert_eq!(
            CrashPrediction::from_gaps(gaps, 0.43),
            CrashPrediction {
                positive: true,
                crash_time: Some(17)
            }
        );
        // d is read back in meters
        let shifted = NormalizationStats {
            out_mean: [0.0, 0.0, 0.4],
            out_std: [1.0, 1.0, 0.1],
            ..stats
        };
        p.b_y = vec![0.0, 0.0, -0.5];
        assert!(predict_crash(&p, &x, &shifted, 0.43).unwrap().positive);
    }
}
