use serde::{Deserialize, Serialize};

use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

fn xavier(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect(),
    )
}

/// Fully connected layer `activation(W x + b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier(rng, outputs, inputs));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]));
        Self {
            weight,
            bias,
            activation,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let y = tape.matvec(self.weight, x);
        let y = tape.add_param(y, self.bias);
        match self.activation {
            Activation::Linear => y,
            Activation::Tanh => tape.tanh(y),
            Activation::Relu => tape.relu(y),
        }
    }
}

/// LSTM cell with gate order input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let w_ih = store.add(format!("{name}.w_ih"), xavier(rng, 4 * hidden, inputs));
        let w_hh = store.add(format!("{name}.w_hh"), xavier(rng, 4 * hidden, hidden));
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), Tensor::new(vec![4 * hidden], b));
        Self {
            w_ih,
            w_hh,
            bias,
            inputs,
            hidden,
        }
    }

    /// Input contribution `W_ih x + b` to the gate pre-activations.
    pub fn project_input(&self, tape: &mut Tape, x: Var) -> Var {
        let p = tape.matvec(self.w_ih, x);
        tape.add_param(p, self.bias)
    }

    /// One step given a precomputed input projection.
    pub fn step_projected(&self, tape: &mut Tape, projected: Var, h: Var, c: Var) -> (Var, Var) {
        let rec = tape.matvec(self.w_hh, h);
        let pre = tape.add(projected, rec);
        let n = self.hidden;
        let i = tape.slice(pre, 0, n);
        let f = tape.slice(pre, n, n);
        let g = tape.slice(pre, 2 * n, n);
        let o = tape.slice(pre, 3 * n, n);
        let (i, f, g, o) = (
            tape.sigmoid(i),
            tape.sigmoid(f),
            tape.tanh(g),
            tape.sigmoid(o),
        );
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        let c_next = tape.add(keep, write);
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed);
        (h_next, c_next)
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let p = self.project_input(tape, x);
        self.step_projected(tape, p, h, c)
    }
}
