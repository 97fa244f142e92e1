//! Per-row numeric kernels shared by the differentiable tape and the
//! incremental streaming path. Both paths call exactly these functions in the
//! same order, which is what makes chunked and single-shot inference agree
//! bit for bit.

use serde::{Deserialize, Serialize};

use crate::math::sigmoid;

/// `out = b + x·W` with `W` stored `in × out` row-major.
pub fn linear_row(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n = out.len();
    debug_assert_eq!(w.len(), x.len() * n);
    out.copy_from_slice(b);
    for (k, &xk) in x.iter().enumerate() {
        let wk = &w[k * n..(k + 1) * n];
        for (o, &wv) in out.iter_mut().zip(wk) {
            *o += xk * wv;
        }
    }
}

/// Accumulates the gradients of [`linear_row`].
pub fn linear_row_backward(
    x: &[f64],
    w: &[f64],
    g_out: &[f64],
    g_x: Option<&mut [f64]>,
    g_w: &mut [f64],
    g_b: &mut [f64],
) {
    let n = g_out.len();
    for (gb, &g) in g_b.iter_mut().zip(g_out) {
        *gb += g;
    }
    for (k, &xk) in x.iter().enumerate() {
        let gw = &mut g_w[k * n..(k + 1) * n];
        for (gwv, &g) in gw.iter_mut().zip(g_out) {
            *gwv += xk * g;
        }
    }
    if let Some(g_x) = g_x {
        for (k, gx) in g_x.iter_mut().enumerate() {
            let wk = &w[k * n..(k + 1) * n];
            *gx += wk.iter().zip(g_out).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Geometry of one valid (unpadded) 3D convolution over
/// `(time, mel, stack)` with channels last. A row of the input holds one
/// time step laid out as `(mel, stack, channel)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub in_mel: usize,
    pub in_stack: usize,
    pub in_channels: usize,
    pub out_mel: usize,
    pub out_stack: usize,
    pub out_channels: usize,
}

impl ConvGeom {
    pub fn in_row(&self) -> usize {
        self.in_mel * self.in_stack * self.in_channels
    }

    pub fn out_row(&self) -> usize {
        self.out_mel * self.out_stack * self.out_channels
    }

    pub fn weight_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels * self.out_channels
    }

    fn in_index(&self, m: usize, s: usize, c: usize) -> usize {
        (m * self.in_stack + s) * self.in_channels + c
    }

    fn weight_offset(&self, dt: usize, dm: usize, ds: usize, ci: usize) -> usize {
        let [_, km, ks] = self.kernel;
        (((dt * km + dm) * ks + ds) * self.in_channels + ci) * self.out_channels
    }
}

/// One output time step from the `kernel[0]` input rows that feed it.
pub fn conv_row(g: &ConvGeom, inputs: &[&[f64]], w: &[f64], b: &[f64], out: &mut [f64]) {
    let oc = g.out_channels;
    let [kt, km, ks] = g.kernel;
    let [_, sm, ss] = g.stride;
    debug_assert_eq!(inputs.len(), kt);
    for mo in 0..g.out_mel {
        for so in 0..g.out_stack {
            let base = (mo * g.out_stack + so) * oc;
            let acc = &mut out[base..base + oc];
            acc.copy_from_slice(b);
            for (dt, row) in inputs.iter().enumerate() {
                for dm in 0..km {
                    for ds in 0..ks {
                        for ci in 0..g.in_channels {
                            let v = row[g.in_index(mo * sm + dm, so * ss + ds, ci)];
                            let wo = g.weight_offset(dt, dm, ds, ci);
                            for (a, &wv) in acc.iter_mut().zip(&w[wo..wo + oc]) {
                                *a += v * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates the gradients of [`conv_row`].
pub fn conv_row_backward(
    g: &ConvGeom,
    inputs: &[&[f64]],
    w: &[f64],
    g_out: &[f64],
    g_inputs: Option<&mut [Vec<f64>]>,
    g_w: &mut [f64],
    g_b: &mut [f64],
) {
    let oc = g.out_channels;
    let [_, km, ks] = g.kernel;
    let [_, sm, ss] = g.stride;
    let mut g_inputs = g_inputs;
    for mo in 0..g.out_mel {
        for so in 0..g.out_stack {
            let base = (mo * g.out_stack + so) * oc;
            let go = &g_out[base..base + oc];
            for (gb, &v) in g_b.iter_mut().zip(go) {
                *gb += v;
            }
            for (dt, row) in inputs.iter().enumerate() {
                for dm in 0..km {
                    for ds in 0..ks {
                        for ci in 0..g.in_channels {
                            let idx = g.in_index(mo * sm + dm, so * ss + ds, ci);
                            let v = row[idx];
                            let wo = g.weight_offset(dt, dm, ds, ci);
                            let mut gx = 0.0;
                            for ((gw, &wv), &gov) in
                                g_w[wo..wo + oc].iter_mut().zip(&w[wo..wo + oc]).zip(go)
                            {
                                *gw += v * gov;
                                gx += wv * gov;
                            }
                            if let Some(gi) = g_inputs.as_deref_mut() {
                                gi[dt][idx] += gx;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    #[default]
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Weights of one recurrent layer: `w_ih` is `input × G·H`, `w_hh` is
/// `H × G·H`, biases are `G·H`.
#[derive(Clone, Copy)]
pub struct CellWeights<'a> {
    pub kind: CellKind,
    pub hidden: usize,
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
}

/// Recurrent state carried between steps. `c` is unused by the GRU.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// What a step keeps for back-propagation through time.
#[derive(Clone, Debug)]
pub struct StepCache {
    /// Activated gates: LSTM `[i, f, g, o]`, GRU `[r, z, n]`.
    gates: Vec<f64>,
    /// GRU only: hidden-side pre-activation of the candidate gate.
    hidden_n: Vec<f64>,
}

/// Advances `state` by one input row.
pub fn cell_step(w: &CellWeights, x: &[f64], state: &mut CellState) -> StepCache {
    let h = w.hidden;
    let width = w.kind.gates() * h;
    let mut ax = vec![0.0; width];
    let mut ah = vec![0.0; width];
    linear_row(x, w.w_ih, w.b_ih, &mut ax);
    linear_row(&state.h, w.w_hh, w.b_hh, &mut ah);
    match w.kind {
        CellKind::Lstm => {
            let mut gates = vec![0.0; width];
            for j in 0..width {
                let a = ax[j] + ah[j];
                gates[j] = if (2 * h..3 * h).contains(&j) {
                    a.tanh()
                } else {
                    sigmoid(a)
                };
            }
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                state.c[j] = f * state.c[j] + i * g;
                state.h[j] = o * state.c[j].tanh();
            }
            StepCache {
                gates,
                hidden_n: Vec::new(),
            }
        }
        CellKind::Gru => {
            let mut gates = vec![0.0; width];
            for j in 0..2 * h {
                gates[j] = sigmoid(ax[j] + ah[j]);
            }
            let hidden_n = ah[2 * h..].to_vec();
            for j in 0..h {
                let n = (ax[2 * h + j] + gates[j] * hidden_n[j]).tanh();
                gates[2 * h + j] = n;
                let z = gates[h + j];
                state.h[j] = (1.0 - z) * n + z * state.h[j];
            }
            StepCache { gates, hidden_n }
        }
    }
}

/// Gradient buffers for one recurrent layer.
pub struct CellGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

/// Back-propagation through one step.
///
/// `prev` is the state before the step and `c_new` the LSTM cell after it.
/// `dh` and `dc` carry the gradient flowing into the new state and are
/// overwritten with the gradient with respect to the previous state.
#[allow(clippy::too_many_arguments)]
pub fn cell_step_backward(
    w: &CellWeights,
    x: &[f64],
    prev: &CellState,
    c_new: &[f64],
    cache: &StepCache,
    dh: &mut [f64],
    dc: &mut [f64],
    g_x: &mut [f64],
    grads: &mut CellGrads,
) {
    let h = w.hidden;
    let width = w.kind.gates() * h;
    let mut d_ax = vec![0.0; width];
    let mut d_ah = vec![0.0; width];
    let mut dh_prev = vec![0.0; h];
    match w.kind {
        CellKind::Lstm => {
            let gt = &cache.gates;
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = c_new[j].tanh();
                let d_o = dh[j] * tc;
                let d_c = dh[j] * o * (1.0 - tc * tc) + dc[j];
                let d_i = d_c * g;
                let d_g = d_c * i;
                let d_f = d_c * prev.c[j];
                dc[j] = d_c * f;
                d_ax[j] = d_i * i * (1.0 - i);
                d_ax[h + j] = d_f * f * (1.0 - f);
                d_ax[2 * h + j] = d_g * (1.0 - g * g);
                d_ax[3 * h + j] = d_o * o * (1.0 - o);
            }
            d_ah.copy_from_slice(&d_ax);
        }
        CellKind::Gru => {
            let gt = &cache.gates;
            for j in 0..h {
                let (r, z, n) = (gt[j], gt[h + j], gt[2 * h + j]);
                let d_n = dh[j] * (1.0 - z);
                let d_z = dh[j] * (prev.h[j] - n);
                dh_prev[j] = dh[j] * z;
                let d_npre = d_n * (1.0 - n * n);
                let d_r = d_npre * cache.hidden_n[j];
                d_ax[j] = d_r * r * (1.0 - r);
                d_ax[h + j] = d_z * z * (1.0 - z);
                d_ax[2 * h + j] = d_npre;
                d_ah[j] = d_ax[j];
                d_ah[h + j] = d_ax[h + j];
                d_ah[2 * h + j] = d_npre * r;
            }
        }
    }
    linear_row_backward(x, w.w_ih, &d_ax, Some(g_x), grads.w_ih, grads.b_ih);
    linear_row_backward(
        &prev.h,
        w.w_hh,
        &d_ah,
        Some(&mut dh_prev),
        grads.w_hh,
        grads.b_hh,
    );
    dh.copy_from_slice(&dh_prev);
}
