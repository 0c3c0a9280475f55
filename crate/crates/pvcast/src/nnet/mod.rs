//! LSTM numerical core.
//!
//! A single recurrent layer with forget, input, candidate and output gates,
//! followed by an affine scalar head on the last hidden state. Gradients
//! are exact backpropagation-through-time over the unrolled window, written
//! against flat parameter and gradient buffers so the optimizer stays a
//! plain vector update.
//!
//! Parameter layout (one contiguous buffer, row-major matrices):
//! `W_f, W_i, W_c, W_o` of shape `hidden x (hidden + input)`, then
//! `b_f, b_i, b_c, b_o` of length `hidden`, then the head weights `v`
//! (length `hidden`) and head bias `c`. Checkpoints persist this order.

mod adam;
mod train;

pub use adam::{AdamOptions, AdamState};
pub use train::{train, EpochLoss, TrainOptions, TrainOutcome};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::{SequenceSample, FEATURES};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Gate count of one LSTM cell.
const GATES: usize = 4;

/// Layer sizes. The input width is fixed by the record schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    hidden: usize,
    input: usize,
}

impl LstmDims {
    pub fn new(hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Parameter("hidden size must be at least 1".into()));
        }
        Ok(LstmDims { hidden, input: FEATURES })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    /// Width of the concatenated `[h, x]` gate input.
    fn concat(&self) -> usize {
        self.hidden + self.input
    }

    pub fn param_count(&self) -> usize {
        GATES * self.hidden * self.concat() + GATES * self.hidden + self.hidden + 1
    }

    fn w_off(&self, gate: usize) -> usize {
        gate * self.hidden * self.concat()
    }

    fn b_off(&self, gate: usize) -> usize {
        GATES * self.hidden * self.concat() + gate * self.hidden
    }

    fn v_off(&self) -> usize {
        GATES * self.hidden * self.concat() + GATES * self.hidden
    }

    fn c_off(&self) -> usize {
        self.v_off() + self.hidden
    }
}

/// Flat parameter block of one LSTM plus output head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    dims: LstmDims,
    theta: Vec<F>,
}

impl<F: Scalar> LstmParams<F> {
    pub fn zeros(dims: LstmDims) -> Self {
        LstmParams { dims, theta: vec![F::zero(); dims.param_count()] }
    }

    /// Seeded uniform initialization in `[-1/sqrt(hidden), 1/sqrt(hidden)]`.
    pub fn init(dims: LstmDims, seed: u64) -> Self {
        let bound = 1.0 / (dims.hidden as f64).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let theta = (0..dims.param_count())
            .map(|_| F::of(bound * (2.0 * rng.gen::<f64>() - 1.0)))
            .collect();
        LstmParams { dims, theta }
    }

    /// Rebuilds parameters from a stored buffer, e.g. a checkpoint.
    pub fn from_theta(dims: LstmDims, theta: Vec<F>) -> Result<Self> {
        if theta.len() != dims.param_count() {
            return Err(Error::Shape {
                what: "parameter buffer",
                expected: dims.param_count(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter buffer"));
        }
        Ok(LstmParams { dims, theta })
    }

    pub fn dims(&self) -> LstmDims {
        self.dims
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [F] {
        &mut self.theta
    }

    /// Head weights and bias, mutable; handy for constructing fixtures.
    pub fn output_head_mut(&mut self) -> (&mut [F], &mut F) {
        let v_off = self.dims.v_off();
        let c_off = self.dims.c_off();
        let (_, tail) = self.theta.split_at_mut(v_off);
        let (v, c) = tail.split_at_mut(c_off - v_off);
        (v, &mut c[0])
    }
}

/// Recurrent state carried between time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<F> {
    pub cell: Vec<F>,
    pub hidden: Vec<F>,
}

impl<F: Scalar> CellState<F> {
    pub fn zeros(dims: LstmDims) -> Self {
        CellState { cell: vec![F::zero(); dims.hidden], hidden: vec![F::zero(); dims.hidden] }
    }
}

/// Gate activations of one step, exposed for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations<F> {
    pub forget: Vec<F>,
    pub input: Vec<F>,
    pub candidate: Vec<F>,
    pub output: Vec<F>,
}

fn sigm<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Everything backprop needs from one forward step.
#[derive(Debug, Clone)]
struct StepCache<F> {
    m: Vec<F>,      // concatenated [h_prev, x]
    f: Vec<F>,      // forget gate
    i: Vec<F>,      // input gate
    ch: Vec<F>,     // candidate values (tanh)
    o: Vec<F>,      // output gate
    c_prev: Vec<F>, // cell state entering the step
    tc: Vec<F>,     // tanh of the new cell state
}

impl<F: Scalar> StepCache<F> {
    fn new(dims: LstmDims) -> Self {
        let h = vec![F::zero(); dims.hidden];
        StepCache {
            m: vec![F::zero(); dims.concat()],
            f: h.clone(),
            i: h.clone(),
            ch: h.clone(),
            o: h.clone(),
            c_prev: h.clone(),
            tc: h,
        }
    }
}

/// Reusable forward/backward buffers. One workspace serves one model shape;
/// reusing it across samples avoids per-sample allocation in training loops.
#[derive(Debug)]
pub struct Workspace<F> {
    dims: LstmDims,
    h: Vec<F>,
    c: Vec<F>,
    steps: Vec<StepCache<F>>,
    dh: Vec<F>,
    dcn: Vec<F>,
    dgate: Vec<Vec<F>>,
    dm: Vec<F>,
}

impl<F: Scalar> Workspace<F> {
    pub fn new(dims: LstmDims) -> Self {
        let h = vec![F::zero(); dims.hidden];
        Workspace {
            dims,
            h: h.clone(),
            c: h.clone(),
            steps: Vec::new(),
            dh: h.clone(),
            dcn: h.clone(),
            dgate: vec![h.clone(); GATES],
            dm: vec![F::zero(); dims.concat()],
        }
    }

    fn reset(&mut self, steps: usize) {
        self.h.iter_mut().for_each(|v| *v = F::zero());
        self.c.iter_mut().for_each(|v| *v = F::zero());
        while self.steps.len() < steps {
            self.steps.push(StepCache::new(self.dims));
        }
    }

    /// One gate-and-state update; reads previous state through the cache
    /// copies so `h`/`c` can be updated in place.
    fn step(&mut self, theta: &[F], t: usize, x: &[F]) {
        let dims = self.dims;
        let hn = dims.hidden;
        let mn = dims.concat();
        let st = &mut self.steps[t];
        st.m[..hn].copy_from_slice(&self.h);
        st.m[hn..].copy_from_slice(x);
        st.c_prev.copy_from_slice(&self.c);
        for u in 0..hn {
            let mut pre = [F::zero(); GATES];
            for (g, p) in pre.iter_mut().enumerate() {
                let row = dims.w_off(g) + u * mn;
                let mut acc = theta[dims.b_off(g) + u];
                for (m, &mv) in st.m.iter().enumerate() {
                    acc += theta[row + m] * mv;
                }
                *p = acc;
            }
            let f = sigm(pre[0]);
            let i = sigm(pre[1]);
            let ch = pre[2].tanh();
            let o = sigm(pre[3]);
            let c = f * st.c_prev[u] + i * ch;
            let tc = c.tanh();
            st.f[u] = f;
            st.i[u] = i;
            st.ch[u] = ch;
            st.o[u] = o;
            st.tc[u] = tc;
            self.c[u] = c;
            self.h[u] = o * tc;
        }
    }
}

/// One gate-and-state update from an explicit previous state. Returns the
/// new state together with the gate activations that produced it.
pub fn cell_step<F: Scalar>(
    params: &LstmParams<F>,
    prev: &CellState<F>,
    x: &[F],
) -> Result<(CellState<F>, GateActivations<F>)> {
    let dims = params.dims;
    if x.len() != dims.input {
        return Err(Error::Shape { what: "cell input", expected: dims.input, got: x.len() });
    }
    if prev.hidden.len() != dims.hidden || prev.cell.len() != dims.hidden {
        return Err(Error::Shape {
            what: "cell state",
            expected: dims.hidden,
            got: prev.hidden.len().max(prev.cell.len()),
        });
    }
    if prev.hidden.iter().chain(&prev.cell).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cell state"));
    }

    let mut ws = Workspace::new(dims);
    ws.reset(1);
    ws.h.copy_from_slice(&prev.hidden);
    ws.c.copy_from_slice(&prev.cell);
    ws.step(&params.theta, 0, x);
    let st = &ws.steps[0];
    Ok((
        CellState { cell: ws.c.clone(), hidden: ws.h.clone() },
        GateActivations {
            forget: st.f.clone(),
            input: st.i.clone(),
            candidate: st.ch.clone(),
            output: st.o.clone(),
        },
    ))
}

/// Runs the window from zero state and applies the affine head to the last
/// hidden state. Training uses this raw value; forecast-time clamping is
/// the caller's concern.
pub fn forward<F: Scalar>(
    params: &LstmParams<F>,
    window: &[[F; FEATURES]],
    ws: &mut Workspace<F>,
) -> Result<F> {
    if window.is_empty() {
        return Err(Error::Empty("forward window"));
    }
    if ws.dims != params.dims {
        return Err(Error::Parameter("workspace shape does not match parameters".into()));
    }
    ws.reset(window.len());
    for (t, x) in window.iter().enumerate() {
        ws.step(&params.theta, t, x);
    }
    let dims = params.dims;
    let mut y = params.theta[dims.c_off()];
    let v = dims.v_off();
    for u in 0..dims.hidden {
        y += params.theta[v + u] * ws.h[u];
    }
    Ok(y)
}

/// Mean squared error of the model over a sample set.
pub fn batch_loss<F: Scalar>(
    params: &LstmParams<F>,
    samples: &[SequenceSample<F>],
    ws: &mut Workspace<F>,
) -> Result<F> {
    if samples.is_empty() {
        return Err(Error::Empty("loss sample set"));
    }
    let mut total = F::zero();
    for s in samples {
        let r = forward(params, &s.window, ws)? - s.target;
        total += r * r;
    }
    Ok(total / F::of(samples.len() as f64))
}

/// Backpropagation through the unrolled window for one sample whose forward
/// pass just filled `ws`. `dy` is the loss gradient at the head output.
fn backward_sample<F: Scalar>(
    params: &LstmParams<F>,
    ws: &mut Workspace<F>,
    steps: usize,
    dy: F,
    grads: &mut [F],
) {
    let dims = params.dims;
    let hn = dims.hidden;
    let mn = dims.concat();
    let theta = &params.theta;

    let v_off = dims.v_off();
    for u in 0..hn {
        grads[v_off + u] += dy * ws.h[u];
        ws.dh[u] = dy * theta[v_off + u];
        ws.dcn[u] = F::zero();
    }
    grads[dims.c_off()] += dy;

    let one = F::one();
    for t in (0..steps).rev() {
        let st = &ws.steps[t];
        for u in 0..hn {
            let o = st.o[u];
            let tc = st.tc[u];
            let f = st.f[u];
            let i = st.i[u];
            let ch = st.ch[u];
            let dh = ws.dh[u];
            // Cell-state gradient gathers the head path through tanh and
            // the recurrent path from the later step.
            let dc = dh * o * (one - tc * tc) + ws.dcn[u];
            ws.dgate[0][u] = dc * st.c_prev[u] * f * (one - f);
            ws.dgate[1][u] = dc * ch * i * (one - i);
            ws.dgate[2][u] = dc * i * (one - ch * ch);
            ws.dgate[3][u] = dh * tc * o * (one - o);
            ws.dcn[u] = dc * f;
        }
        ws.dm.iter_mut().for_each(|v| *v = F::zero());
        for g in 0..GATES {
            let w = dims.w_off(g);
            let b = dims.b_off(g);
            for u in 0..hn {
                let d = ws.dgate[g][u];
                let row = w + u * mn;
                for m in 0..mn {
                    grads[row + m] += d * st.m[m];
                    ws.dm[m] += theta[row + m] * d;
                }
                grads[b + u] += d;
            }
        }
        ws.dh[..hn].copy_from_slice(&ws.dm[..hn]);
    }
}

/// Exact gradient of the mean squared error over a minibatch, written into
/// `grads` (same layout as the parameter buffer). Returns the batch loss.
pub fn batch_gradient<F: Scalar>(
    params: &LstmParams<F>,
    samples: &[SequenceSample<F>],
    ws: &mut Workspace<F>,
    grads: &mut [F],
) -> Result<F> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    batch_gradient_indexed(params, samples, &idx, ws, grads)
}

/// As [`batch_gradient`], over the subset picked out by `idx`; lets the
/// trainer shuffle without reshuffling the sample storage itself.
pub fn batch_gradient_indexed<F: Scalar>(
    params: &LstmParams<F>,
    samples: &[SequenceSample<F>],
    idx: &[usize],
    ws: &mut Workspace<F>,
    grads: &mut [F],
) -> Result<F> {
    if idx.is_empty() {
        return Err(Error::Empty("gradient minibatch"));
    }
    if grads.len() != params.dims.param_count() {
        return Err(Error::Shape {
            what: "gradient buffer",
            expected: params.dims.param_count(),
            got: grads.len(),
        });
    }
    grads.iter_mut().for_each(|g| *g = F::zero());
    let scale = F::of(2.0 / idx.len() as f64);
    let mut total = F::zero();
    for &k in idx {
        let s = &samples[k];
        let r = forward(params, &s.window, ws)? - s.target;
        total += r * r;
        backward_sample(params, ws, s.window.len(), scale * r, grads);
    }
    Ok(total / F::of(idx.len() as f64))
}

/// Compares analytic gradients against central finite differences and
/// returns the worst relative error. Small denominators are floored so the
/// report stays meaningful for near-zero gradient entries.
pub fn grad_check<F: Scalar>(
    params: &LstmParams<F>,
    samples: &[SequenceSample<F>],
    fd_step: f64,
) -> Result<F> {
    if !(fd_step > 0.0) {
        return Err(Error::Parameter("finite-difference step must be positive".into()));
    }
    let mut ws = Workspace::new(params.dims);
    let mut grads = vec![F::zero(); params.dims.param_count()];
    batch_gradient(params, samples, &mut ws, &mut grads)?;

    let step = F::of(fd_step);
    let floor = F::of(1e-3);
    let mut probe = params.clone();
    let mut worst = F::zero();
    for k in 0..probe.theta.len() {
        let saved = probe.theta[k];
        probe.theta[k] = saved + step;
        let up = batch_loss(&probe, samples, &mut ws)?;
        probe.theta[k] = saved - step;
        let down = batch_loss(&probe, samples, &mut ws)?;
        probe.theta[k] = saved;
        let numeric = (up - down) / (step + step);
        let denom = grads[k].abs().max(numeric.abs()).max(floor);
        worst = worst.max((grads[k] - numeric).abs() / denom);
    }
    Ok(worst)
}
