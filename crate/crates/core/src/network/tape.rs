//! A small reverse-accumulation tape with fused layer operations.

use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_row, Matrix};

use super::kernels::{
    cell_step, cell_step_backward, conv_row, conv_row_backward, linear_row, linear_row_backward,
    Activation, CellGrads, CellKind, CellState, CellWeights, ConvGeom, StepCache,
};
use super::params::{BlockId, ModelParams};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug)]
pub struct RecurrentBlocks {
    pub kind: CellKind,
    pub hidden: usize,
    pub w_ih: BlockId,
    pub w_hh: BlockId,
    pub b_ih: BlockId,
    pub b_hh: BlockId,
}

enum Op {
    Input,
    Linear {
        x: NodeId,
        w: BlockId,
        b: BlockId,
    },
    Conv {
        x: NodeId,
        geom: ConvGeom,
        w: BlockId,
        b: BlockId,
    },
    Act {
        x: NodeId,
        kind: Activation,
    },
    Recurrent {
        x: NodeId,
        blocks: RecurrentBlocks,
        states: Vec<CellState>,
        caches: Vec<StepCache>,
    },
    Dropout {
        x: NodeId,
        mask: Matrix,
    },
    TimeReduce {
        x: NodeId,
        factor: usize,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Softmax {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Copies a node's value into a fresh input; gradients stop here.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.clone();
        self.input(v)
    }

    pub fn linear(&mut self, x: NodeId, w: BlockId, b: BlockId) -> NodeId {
        let wv = self.params.block(w);
        let bv = self.params.block(b);
        let xv = &self.nodes[x].value;
        let mut out = Matrix::zeros(xv.rows(), bv.len());
        for (t, row) in xv.iter_rows().enumerate() {
            linear_row(row, wv, bv, out.row_mut(t));
        }
        self.push(out, Op::Linear { x, w, b })
    }

    pub fn conv(&mut self, x: NodeId, geom: ConvGeom, w: BlockId, b: BlockId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let [kt, ..] = geom.kernel;
        if xv.rows() < kt {
            return Err(Error::InputTooShort {
                got: xv.rows(),
                min: kt,
            });
        }
        let t_out = (xv.rows() - kt) / geom.stride[0] + 1;
        let wv = self.params.block(w);
        let bv = self.params.block(b);
        let mut out = Matrix::zeros(t_out, geom.out_row());
        for to in 0..t_out {
            let start = to * geom.stride[0];
            let inputs: Vec<&[f64]> = (start..start + kt).map(|t| xv.row(t)).collect();
            conv_row(&geom, &inputs, wv, bv, out.row_mut(to));
        }
        Ok(self.push(out, Op::Conv { x, geom, w, b }))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let out = self.nodes[x].value.map(|v| kind.apply(v));
        self.push(out, Op::Act { x, kind })
    }

    pub fn recurrent(&mut self, x: NodeId, blocks: RecurrentBlocks) -> NodeId {
        let weights = CellWeights {
            kind: blocks.kind,
            hidden: blocks.hidden,
            w_ih: self.params.block(blocks.w_ih),
            w_hh: self.params.block(blocks.w_hh),
            b_ih: self.params.block(blocks.b_ih),
            b_hh: self.params.block(blocks.b_hh),
        };
        let xv = &self.nodes[x].value;
        let mut out = Matrix::zeros(xv.rows(), blocks.hidden);
        let mut state = CellState::zeros(blocks.hidden);
        let mut states = Vec::with_capacity(xv.rows() + 1);
        let mut caches = Vec::with_capacity(xv.rows());
        states.push(state.clone());
        for (t, row) in xv.iter_rows().enumerate() {
            caches.push(cell_step(&weights, row, &mut state));
            out.row_mut(t).copy_from_slice(&state.h);
            states.push(state.clone());
        }
        self.push(
            out,
            Op::Recurrent {
                x,
                blocks,
                states,
                caches,
            },
        )
    }

    pub fn dropout(&mut self, x: NodeId, mask: Matrix) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.shape() != mask.shape() {
            return Err(Error::TapeMismatch(format!(
                "dropout mask {:?} vs input {:?}",
                mask.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for (o, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    pub fn time_reduce(&mut self, x: NodeId, factor: usize) -> NodeId {
        let out = time_reduce_concat(&self.nodes[x].value, factor);
        self.push(out, Op::TimeReduce { x, factor })
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.rows() != bv.rows() {
            return Err(Error::TapeMismatch(format!(
                "concat rows {} vs {}",
                av.rows(),
                bv.rows()
            )));
        }
        let mut out = Matrix::zeros(av.rows(), av.cols() + bv.cols());
        for t in 0..av.rows() {
            let r = out.row_mut(t);
            r[..av.cols()].copy_from_slice(av.row(t));
            r[av.cols()..].copy_from_slice(bv.row(t));
        }
        Ok(self.push(out, Op::Concat { a, b }))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for (t, row) in xv.iter_rows().enumerate() {
            softmax_row(row, out.row_mut(t));
        }
        self.push(out, Op::Softmax { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.map(sigmoid);
        self.push(out, Op::Sigmoid { x })
    }

    /// Propagates the seeded output gradients back to every parameter.
    /// Returns a vector laid out like the parameter vector.
    pub fn backward(&self, seeds: &[(NodeId, Matrix)]) -> Result<Vec<f64>> {
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            let node = self
                .nodes
                .get(*id)
                .ok_or_else(|| Error::TapeMismatch(format!("unknown node {id}")))?;
            if node.value.shape() != g.shape() {
                return Err(Error::TapeMismatch(format!(
                    "seed for node {id} has shape {:?}, node has {:?}",
                    g.shape(),
                    node.value.shape()
                )));
            }
            accumulate(&mut grads, *id, g.rows(), g.cols()).add_scaled(g, 1.0);
        }
        let mut pg = vec![0.0; self.params.len()];
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(id, &g, &mut grads, &mut pg);
        }
        Ok(pg)
    }

    fn wants_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id].op, Op::Input)
    }

    fn backward_node(&self, id: NodeId, g: &Matrix, grads: &mut [Option<Matrix>], pg: &mut [f64]) {
        let layout = self.params.layout();
        match &self.nodes[id].op {
            Op::Input => {}
            Op::Linear { x, w, b } => {
                let xv = &self.nodes[*x].value;
                let (wr, br) = (layout.info(*w).range(), layout.info(*b).range());
                let wv = self.params.block(*w);
                let (mut gw, mut gb) = (vec![0.0; wr.len()], vec![0.0; br.len()]);
                let mut gx = self
                    .wants_grad(*x)
                    .then(|| Matrix::zeros(xv.rows(), xv.cols()));
                for t in 0..xv.rows() {
                    linear_row_backward(
                        xv.row(t),
                        wv,
                        g.row(t),
                        gx.as_mut().map(|m| m.row_mut(t)),
                        &mut gw,
                        &mut gb,
                    );
                }
                add_into(&mut pg[wr], &gw);
                add_into(&mut pg[br], &gb);
                if let Some(gx) = gx {
                    accumulate(grads, *x, xv.rows(), xv.cols()).add_scaled(&gx, 1.0);
                }
            }
            Op::Conv { x, geom, w, b } => {
                let xv = &self.nodes[*x].value;
                let (wr, br) = (layout.info(*w).range(), layout.info(*b).range());
                let wv = self.params.block(*w);
                let (mut gw, mut gb) = (vec![0.0; wr.len()], vec![0.0; br.len()]);
                let want = self.wants_grad(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                let kt = geom.kernel[0];
                let mut scratch: Vec<Vec<f64>> = vec![vec![0.0; xv.cols()]; kt];
                for to in 0..g.rows() {
                    let start = to * geom.stride[0];
                    let inputs: Vec<&[f64]> = (start..start + kt).map(|t| xv.row(t)).collect();
                    for s in scratch.iter_mut() {
                        s.iter_mut().for_each(|v| *v = 0.0);
                    }
                    conv_row_backward(
                        geom,
                        &inputs,
                        wv,
                        g.row(to),
                        want.then_some(scratch.as_mut_slice()),
                        &mut gw,
                        &mut gb,
                    );
                    if want {
                        for (dt, s) in scratch.iter().enumerate() {
                            add_into(gx.row_mut(start + dt), s);
                        }
                    }
                }
                add_into(&mut pg[wr], &gw);
                add_into(&mut pg[br], &gb);
                if want {
                    accumulate(grads, *x, xv.rows(), xv.cols()).add_scaled(&gx, 1.0);
                }
            }
            Op::Act { x, kind } => {
                let out = &self.nodes[id].value;
                let mut gx = g.clone();
                for (gv, &o) in gx.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *gv *= kind.derivative_from_output(o);
                }
                accumulate(grads, *x, g.rows(), g.cols()).add_scaled(&gx, 1.0);
            }
            Op::Recurrent {
                x,
                blocks,
                states,
                caches,
            } => {
                let xv = &self.nodes[*x].value;
                let weights = CellWeights {
                    kind: blocks.kind,
                    hidden: blocks.hidden,
                    w_ih: self.params.block(blocks.w_ih),
                    w_hh: self.params.block(blocks.w_hh),
                    b_ih: self.params.block(blocks.b_ih),
                    b_hh: self.params.block(blocks.b_hh),
                };
                let ranges = [blocks.w_ih, blocks.w_hh, blocks.b_ih, blocks.b_hh]
                    .map(|b| layout.info(b).range());
                let mut gbufs = ranges.clone().map(|r| vec![0.0; r.len()]);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                let h = blocks.hidden;
                let mut dh = vec![0.0; h];
                let mut dc = vec![0.0; h];
                for t in (0..xv.rows()).rev() {
                    for (d, &gv) in dh.iter_mut().zip(g.row(t)) {
                        *d += gv;
                    }
                    let [gwi, gwh, gbi, gbh] = &mut gbufs;
                    let mut cg = CellGrads {
                        w_ih: gwi,
                        w_hh: gwh,
                        b_ih: gbi,
                        b_hh: gbh,
                    };
                    cell_step_backward(
                        &weights,
                        xv.row(t),
                        &states[t],
                        &states[t + 1].c,
                        &caches[t],
                        &mut dh,
                        &mut dc,
                        gx.row_mut(t),
                        &mut cg,
                    );
                }
                for (r, buf) in ranges.into_iter().zip(&gbufs) {
                    add_into(&mut pg[r], buf);
                }
                if self.wants_grad(*x) {
                    accumulate(grads, *x, xv.rows(), xv.cols()).add_scaled(&gx, 1.0);
                }
            }
            Op::Dropout { x, mask } => {
                let mut gx = g.clone();
                for (gv, m) in gx.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *gv *= m;
                }
                accumulate(grads, *x, g.rows(), g.cols()).add_scaled(&gx, 1.0);
            }
            Op::TimeReduce { x, factor } => {
                let xv = &self.nodes[*x].value;
                let hsz = xv.cols();
                let dst = accumulate(grads, *x, xv.rows(), hsz);
                for t in 0..xv.rows() {
                    let (grp, k) = (t / factor, t % factor);
                    add_into(dst.row_mut(t), &g.row(grp)[k * hsz..(k + 1) * hsz]);
                }
            }
            Op::Concat { a, b } => {
                let ac = self.nodes[*a].value.cols();
                let bc = self.nodes[*b].value.cols();
                let rows = g.rows();
                {
                    let ga = accumulate(grads, *a, rows, ac);
                    for t in 0..rows {
                        add_into(ga.row_mut(t), &g.row(t)[..ac]);
                    }
                }
                let gb = accumulate(grads, *b, rows, bc);
                for t in 0..rows {
                    add_into(gb.row_mut(t), &g.row(t)[ac..]);
                }
            }
            Op::Softmax { x } => {
                let p = &self.nodes[id].value;
                let mut gx = Matrix::zeros(p.rows(), p.cols());
                for t in 0..p.rows() {
                    let (pr, gr) = (p.row(t), g.row(t));
                    let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &pv), &gv) in gx.row_mut(t).iter_mut().zip(pr).zip(gr) {
                        *o = pv * (gv - dot);
                    }
                }
                accumulate(grads, *x, p.rows(), p.cols()).add_scaled(&gx, 1.0);
            }
            Op::Sigmoid { x } => {
                let s = &self.nodes[id].value;
                let mut gx = g.clone();
                for (gv, &sv) in gx.as_mut_slice().iter_mut().zip(s.as_slice()) {
                    *gv *= sv * (1.0 - sv);
                }
                accumulate(grads, *x, s.rows(), s.cols()).add_scaled(&gx, 1.0);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, rows: usize, cols: usize) -> &mut Matrix {
    grads[id].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Concatenates groups of `factor` consecutive rows; the last group is
/// zero-padded.
pub fn time_reduce_concat(x: &Matrix, factor: usize) -> Matrix {
    let factor = factor.max(1);
    let steps = x.rows().div_ceil(factor);
    let h = x.cols();
    let mut out = Matrix::zeros(steps, factor * h);
    for t in 0..x.rows() {
        let (grp, k) = (t / factor, t % factor);
        out.row_mut(grp)[k * h..(k + 1) * h].copy_from_slice(x.row(t));
    }
    out
}
