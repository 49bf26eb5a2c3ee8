//! Bias-free networks over one flat weight vector.
//!
//! Feedforward layout: one row-major `out x in` matrix per connection, input
//! side first. LSTM layout: the gate matrix `4H x (D+H)` with rows ordered
//! input gate, forget gate, output gate, cell input and columns `[x_t, y_{t-1}]`;
//! then, for the peephole variant, the diagonal peephole vectors `p_i, p_f,
//! p_o`; then the `K x H` output matrix.

use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::activation::{sigmoid, softmax_backward, softmax_in_place};
use super::topology::{HiddenKind, Topology};
use crate::error::{Error, Result};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn matvec(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// Adds `W^T delta` into `out`.
fn matvec_t(w: &[f64], cols: usize, delta: &[f64], out: &mut [f64]) {
    for (&d, row) in delta.iter().zip(w.chunks_exact(cols)) {
        if d != 0.0 {
            axpy(d, row, out);
        }
    }
}

/// Adds `delta x^T` into the matrix `g`.
fn outer_add(g: &mut [f64], cols: usize, delta: &[f64], x: &[f64]) {
    for (&d, row) in delta.iter().zip(g.chunks_exact_mut(cols)) {
        if d != 0.0 {
            axpy(d, x, row);
        }
    }
}

/// Mean squared error `(1/n) sum (T_i - y_i)^2`.
pub fn loss_mse(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::invalid("empty vectors"));
    }
    Ok(predicted
        .iter()
        .zip(target)
        .map(|(y, t)| (t - y) * (t - y))
        .sum::<f64>()
        / predicted.len() as f64)
}

/// Cell state and output of an LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub y: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            c: vec![0.0; hidden],
            y: vec![0.0; hidden],
        }
    }
}

#[derive(Clone, Debug)]
struct LstmLayout {
    d: usize,
    h: usize,
    k: usize,
    peephole: bool,
    gates: Range<usize>,
    peep: Range<usize>,
    out: Range<usize>,
}

impl LstmLayout {
    fn of(t: &Topology) -> Self {
        let (d, h, k) = (t.sizes[0], t.sizes[1], t.sizes[2]);
        let peephole = t.hidden == HiddenKind::LstmPeephole;
        let g = 4 * h * (d + h);
        let p = if peephole { 3 * h } else { 0 };
        LstmLayout {
            d,
            h,
            k,
            peephole,
            gates: 0..g,
            peep: g..g + p,
            out: g + p..g + p + k * h,
        }
    }

    fn cols(&self) -> usize {
        self.d + self.h
    }
}

/// Forward record of one sequence, reused between calls.
#[derive(Default, Debug)]
pub(crate) struct LstmTape {
    steps: usize,
    /// `[x_t, y_{t-1}]` per step.
    u: Vec<f64>,
    /// Activated `i, f, o, z` per step.
    gates: Vec<f64>,
    /// `c_{-1} = 0` then `c_0 .. c_{T-1}`.
    c: Vec<f64>,
    tc: Vec<f64>,
    y: Vec<f64>,
    out: Vec<f64>,
}

impl LstmTape {
    fn reset(&mut self, l: &LstmLayout, steps: usize) {
        self.steps = steps;
        let h = l.h;
        self.u.resize(steps * l.cols(), 0.0);
        self.gates.resize(steps * 4 * h, 0.0);
        self.c.clear();
        self.c.resize((steps + 1) * h, 0.0);
        self.tc.resize(steps * h, 0.0);
        self.y.resize(steps * h, 0.0);
        self.out.resize(steps * l.k, 0.0);
    }
}

/// Scratch space for the gradient computation.
#[derive(Default, Debug)]
pub(crate) struct Workspace {
    tape: LstmTape,
    acts: Vec<Vec<f64>>,
    bufs: [Vec<f64>; 4],
}

/// A topology and its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    topology: Topology,
    weights: Vec<f64>,
}

impl Network {
    pub fn zeros(topology: Topology) -> Self {
        let n = topology.weight_count();
        Network {
            topology,
            weights: vec![0.0; n],
        }
    }

    /// Weights drawn uniformly from `[-0.1, 0.1]`.
    pub fn random<R: Rng + ?Sized>(topology: Topology, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-0.1, 0.1);
        let weights = (0..topology.weight_count()).map(|_| dist.sample(rng)).collect();
        Network { topology, weights }
    }

    pub fn from_weights(topology: Topology, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != topology.weight_count() {
            return Err(Error::ModelFormat(format!(
                "{topology} needs {} weights, got {}",
                topology.weight_count(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::ModelFormat(format!("weight {i} is not finite")));
        }
        Ok(Network { topology, weights })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_recurrent(&self) -> bool {
        self.topology.hidden.is_recurrent()
    }

    pub fn output_dim(&self) -> usize {
        self.topology.output_dim()
    }

    /// Checks an input row: the full vector for feedforward nets, a whole
    /// number of frames for LSTMs. Returns the number of steps.
    pub fn check_input(&self, input: &[f64]) -> Result<usize> {
        let d = self.topology.input_dim();
        if self.is_recurrent() {
            if input.is_empty() || !input.len().is_multiple_of(d) {
                return Err(Error::DimensionMismatch {
                    expected: d * (input.len() / d).max(1),
                    actual: input.len(),
                });
            }
            Ok(input.len() / d)
        } else if input.len() != d {
            Err(Error::DimensionMismatch {
                expected: d,
                actual: input.len(),
            })
        } else {
            Ok(1)
        }
    }

    /// Output distribution: the softmax output for feedforward nets, the
    /// normalized sum of per-frame outputs for LSTMs.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if self.is_recurrent() {
            let frames = self.frame_outputs(input)?;
            let k = self.output_dim();
            let mut sum = vec![0.0; k];
            for f in &frames {
                for (s, v) in sum.iter_mut().zip(f) {
                    *s += v;
                }
            }
            let total: f64 = sum.iter().sum();
            for s in &mut sum {
                *s /= total;
            }
            Ok(sum)
        } else {
            let mut acts = Vec::new();
            self.fnn_forward(input, &mut acts);
            Ok(acts.pop().expect("output layer"))
        }
    }

    /// Softmax outputs at every frame of a sequence, from a zero state.
    pub fn frame_outputs(&self, sequence: &[f64]) -> Result<Vec<Vec<f64>>> {
        if !self.is_recurrent() {
            return Err(Error::Incompatible("frame outputs need a recurrent network".into()));
        }
        let steps = self.check_input(sequence)?;
        let l = LstmLayout::of(&self.topology);
        let mut tape = LstmTape::default();
        self.lstm_forward(&l, sequence, steps, &mut tape);
        Ok(tape.out.chunks_exact(l.k).map(<[f64]>::to_vec).collect())
    }

    /// One LSTM step from `state` on input frame `x`.
    pub fn lstm_step(&self, state: &LstmState, x: &[f64]) -> Result<LstmState> {
        if !self.is_recurrent() {
            return Err(Error::Incompatible("lstm_step needs a recurrent network".into()));
        }
        let l = LstmLayout::of(&self.topology);
        if x.len() != l.d {
            return Err(Error::DimensionMismatch {
                expected: l.d,
                actual: x.len(),
            });
        }
        if state.c.len() != l.h || state.y.len() != l.h {
            return Err(Error::DimensionMismatch {
                expected: l.h,
                actual: state.c.len().max(state.y.len()),
            });
        }
        let mut u = x.to_vec();
        u.extend_from_slice(&state.y);
        let mut gates = vec![0.0; 4 * l.h];
        let mut next = LstmState::zeros(l.h);
        let mut tc = vec![0.0; l.h];
        self.lstm_cell(&l, &u, &state.c, &mut gates, &mut next.c, &mut tc, &mut next.y);
        Ok(next)
    }

    /// Loss of one example: MSE of the softmax output, averaged over frames
    /// for LSTMs.
    pub fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        self.check_target(target)?;
        if self.is_recurrent() {
            let frames = self.frame_outputs(input)?;
            let mut total = 0.0;
            for f in &frames {
                total += loss_mse(f, target)?;
            }
            Ok(total / frames.len() as f64)
        } else {
            self.check_input(input)?;
            let mut acts = Vec::new();
            self.fnn_forward(input, &mut acts);
            loss_mse(acts.last().expect("output layer"), target)
        }
    }

    /// Loss and its gradient with respect to every weight.
    pub fn gradient(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.weights.len()];
        let mut ws = Workspace::default();
        let loss = self.gradient_into(input, target, &mut grad, &mut ws)?;
        Ok((loss, grad))
    }

    fn check_target(&self, target: &[f64]) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: target.len(),
            });
        }
        Ok(())
    }

    /// Overwrites `grad` with the gradient and returns the loss.
    pub(crate) fn gradient_into(
        &self,
        input: &[f64],
        target: &[f64],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64> {
        self.check_target(target)?;
        let steps = self.check_input(input)?;
        grad.fill(0.0);
        if self.is_recurrent() {
            Ok(self.lstm_backward(input, steps, target, grad, ws))
        } else {
            Ok(self.fnn_backward(input, target, grad, ws))
        }
    }

    fn fnn_layers(&self) -> impl Iterator<Item = (usize, usize, Range<usize>)> + '_ {
        let mut offset = 0;
        self.topology.sizes.windows(2).map(move |w| {
            let r = offset..offset + w[0] * w[1];
            offset = r.end;
            (w[0], w[1], r)
        })
    }

    fn fnn_forward(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) {
        let layers = self.topology.sizes.len() - 1;
        acts.resize_with(layers + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(input);
        let hidden = self.topology.hidden;
        for (l, (n_in, n_out, r)) in self.fnn_layers().enumerate() {
            let (prev, rest) = acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            out.resize(n_out, 0.0);
            matvec(&self.weights[r], n_in, &prev[l], out);
            if l + 1 == layers {
                softmax_in_place(out);
            } else {
                for v in out.iter_mut() {
                    *v = match hidden {
                        HiddenKind::Sigmoid => sigmoid(*v),
                        _ => v.tanh(),
                    };
                }
            }
        }
    }

    fn fnn_backward(&self, input: &[f64], target: &[f64], grad: &mut [f64], ws: &mut Workspace) -> f64 {
        self.fnn_forward(input, &mut ws.acts);
        let acts = &ws.acts;
        let y = acts.last().expect("output layer");
        let k = y.len() as f64;
        let loss = y.iter().zip(target).map(|(a, t)| (t - a) * (t - a)).sum::<f64>() / k;
        let [g, delta, back, _] = &mut ws.bufs;
        g.clear();
        g.extend(y.iter().zip(target).map(|(a, t)| 2.0 * (a - t) / k));
        delta.resize(y.len(), 0.0);
        softmax_backward(y, g, delta);

        let layers: Vec<_> = self.fnn_layers().collect();
        let hidden = self.topology.hidden;
        for (l, (n_in, _, r)) in layers.into_iter().enumerate().rev() {
            outer_add(&mut grad[r.clone()], n_in, delta, &acts[l]);
            if l == 0 {
                break;
            }
            back.clear();
            back.resize(n_in, 0.0);
            matvec_t(&self.weights[r], n_in, delta, back);
            for (b, &a) in back.iter_mut().zip(&acts[l]) {
                *b *= match hidden {
                    HiddenKind::Sigmoid => a * (1.0 - a),
                    _ => 1.0 - a * a,
                };
            }
            std::mem::swap(delta, back);
        }
        loss
    }

    /// One cell update. `u = [x_t, y_{t-1}]`; writes activated gates, the
    /// new cell state, its tanh and the output.
    #[allow(clippy::too_many_arguments)]
    fn lstm_cell(
        &self,
        l: &LstmLayout,
        u: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tc: &mut [f64],
        y: &mut [f64],
    ) {
        let h = l.h;
        matvec(&self.weights[l.gates.clone()], l.cols(), u, gates);
        let peep = &self.weights[l.peep.clone()];
        let (gi, rest) = gates.split_at_mut(h);
        let (gf, rest) = rest.split_at_mut(h);
        let (go, gz) = rest.split_at_mut(h);
        for j in 0..h {
            let (mut ai, mut af) = (gi[j], gf[j]);
            if l.peephole {
                ai += peep[j] * c_prev[j];
                af += peep[h + j] * c_prev[j];
            }
            let i = sigmoid(ai);
            let f = sigmoid(af);
            let z = gz[j].tanh();
            let cj = f * c_prev[j] + i * z;
            let mut ao = go[j];
            if l.peephole {
                ao += peep[2 * h + j] * cj;
            }
            let o = sigmoid(ao);
            let t = cj.tanh();
            gi[j] = i;
            gf[j] = f;
            go[j] = o;
            gz[j] = z;
            c[j] = cj;
            tc[j] = t;
            y[j] = o * t;
        }
    }

    fn lstm_forward(&self, l: &LstmLayout, seq: &[f64], steps: usize, tape: &mut LstmTape) {
        tape.reset(l, steps);
        let (d, h, k, cols) = (l.d, l.h, l.k, l.cols());
        let wout = &self.weights[l.out.clone()];
        for t in 0..steps {
            let u = &mut tape.u[t * cols..(t + 1) * cols];
            u[..d].copy_from_slice(&seq[t * d..(t + 1) * d]);
            if t > 0 {
                u[d..].copy_from_slice(&tape.y[(t - 1) * h..t * h]);
            } else {
                u[d..].fill(0.0);
            }
            let (c_before, c_after) = tape.c.split_at_mut((t + 1) * h);
            self.lstm_cell(
                l,
                &tape.u[t * cols..(t + 1) * cols],
                &c_before[t * h..],
                &mut tape.gates[t * 4 * h..(t + 1) * 4 * h],
                &mut c_after[..h],
                &mut tape.tc[t * h..(t + 1) * h],
                &mut tape.y[t * h..(t + 1) * h],
            );
            let out = &mut tape.out[t * k..(t + 1) * k];
            matvec(wout, h, &tape.y[t * h..(t + 1) * h], out);
            softmax_in_place(out);
        }
    }

    fn lstm_backward(&self, seq: &[f64], steps: usize, target: &[f64], grad: &mut [f64], ws: &mut Workspace) -> f64 {
        let l = LstmLayout::of(&self.topology);
        let tape = &mut ws.tape;
        self.lstm_forward(&l, seq, steps, tape);
        let (d, h, k, cols) = (l.d, l.h, l.k, l.cols());
        let w = &self.weights[l.gates.clone()];
        let peep = &self.weights[l.peep.clone()];
        let wout = &self.weights[l.out.clone()];

        let [g, dout, dh, dc] = &mut ws.bufs;
        g.resize(k, 0.0);
        dout.resize(k, 0.0);
        dh.clear();
        dh.resize(h, 0.0);
        dc.clear();
        dc.resize(h, 0.0);
        let mut da = vec![0.0; 4 * h];
        let mut du = vec![0.0; cols];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];

        let scale = 2.0 / (k as f64 * steps as f64);
        let mut loss = 0.0;
        let (g_gates, rest) = grad.split_at_mut(l.gates.end);
        let (g_peep, g_out) = rest.split_at_mut(l.peep.len());

        for t in (0..steps).rev() {
            let y_out = &tape.out[t * k..(t + 1) * k];
            let y_t = &tape.y[t * h..(t + 1) * h];
            for ((gi, &yi), &ti) in g.iter_mut().zip(y_out).zip(target) {
                loss += (ti - yi) * (ti - yi);
                *gi = scale * (yi - ti);
            }
            softmax_backward(y_out, g, dout);
            outer_add(g_out, h, dout, y_t);

            dh.copy_from_slice(&dh_next);
            matvec_t(wout, h, dout, dh);

            let gates = &tape.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &tape.c[t * h..(t + 1) * h];
            let c_t = &tape.c[(t + 1) * h..(t + 2) * h];
            let tc = &tape.tc[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, o, z) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let da_o = dh[j] * tc[j] * o * (1.0 - o);
                let mut dcj = dh[j] * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
                if l.peephole {
                    dcj += da_o * peep[2 * h + j];
                }
                let da_i = dcj * z * i * (1.0 - i);
                let da_f = dcj * c_prev[j] * f * (1.0 - f);
                let da_z = dcj * i * (1.0 - z * z);
                da[j] = da_i;
                da[h + j] = da_f;
                da[2 * h + j] = da_o;
                da[3 * h + j] = da_z;
                dc[j] = dcj;
                if l.peephole {
                    g_peep[j] += da_i * c_prev[j];
                    g_peep[h + j] += da_f * c_prev[j];
                    g_peep[2 * h + j] += da_o * c_t[j];
                }
            }
            let u = &tape.u[t * cols..(t + 1) * cols];
            outer_add(g_gates, cols, &da, u);
            du.fill(0.0);
            matvec_t(w, cols, &da, &mut du);
            dh_next.copy_from_slice(&du[d..]);
            for j in 0..h {
                let mut next = dc[j] * gates[h + j];
                if l.peephole {
                    next += da[j] * peep[j] + da[h + j] * peep[h + j];
                }
                dc_next[j] = next;
            }
        }
        loss / (k as f64 * steps as f64)
    }
}
