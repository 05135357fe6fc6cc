use crate::{AecError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Sigmoid => 1,
            Activation::Relu => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = act(W x + b)` with `W` stored row-major, `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[f32], out: &mut [f32]) -> Result<()> {
        if input.len() != self.inputs || out.len() != self.outputs {
            return Err(AecError::model(format!(
                "dense layer expects {}→{}, got {}→{}",
                self.inputs,
                self.outputs,
                input.len(),
                out.len()
            )));
        }
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            let s: f32 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            *o = self.activation.apply(s + b);
        }
        Ok(())
    }
}

/// Gated recurrent unit. Gate blocks are stacked in the order update (z),
/// reset (r), candidate (h):
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r ∘ h) + bh)
/// h' = (1 - z) ∘ h + z ∘ h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub inputs: usize,
    pub hidden: usize,
    /// `3 * hidden x inputs`, row-major.
    pub input_weights: Vec<f32>,
    /// `3 * hidden x hidden`, row-major.
    pub recurrent_weights: Vec<f32>,
    /// `3 * hidden`.
    pub bias: Vec<f32>,
}

impl GruLayer {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        GruLayer {
            inputs,
            hidden,
            input_weights: vec![0.0; 3 * hidden * inputs],
            recurrent_weights: vec![0.0; 3 * hidden * hidden],
            bias: vec![0.0; 3 * hidden],
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_weights.len() + self.recurrent_weights.len() + self.bias.len()
    }

    /// Advance `state` by one step with `input`; the new state is also the
    /// layer output.
    pub fn step(&self, input: &[f32], state: &mut [f32]) -> Result<()> {
        let (n, h) = (self.inputs, self.hidden);
        if input.len() != n || state.len() != h {
            return Err(AecError::model(format!(
                "GRU expects input {n} / state {h}, got {} / {}",
                input.len(),
                state.len()
            )));
        }
        let dot = |m: &[f32], row: usize, width: usize, v: &[f32]| -> f32 {
            m[row * width..(row + 1) * width]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut z = vec![0.0f32; h];
        let mut r = vec![0.0f32; h];
        for i in 0..h {
            z[i] = sigmoid(
                dot(&self.input_weights, i, n, input)
                    + dot(&self.recurrent_weights, i, h, state)
                    + self.bias[i],
            );
            r[i] = sigmoid(
                dot(&self.input_weights, h + i, n, input)
                    + dot(&self.recurrent_weights, h + i, h, state)
                    + self.bias[h + i],
            );
        }
        let gated: Vec<f32> = r.iter().zip(state.iter()).map(|(a, b)| a * b).collect();
        let mut next = vec![0.0f32; h];
        for i in 0..h {
            let cand = (dot(&self.input_weights, 2 * h + i, n, input)
                + dot(&self.recurrent_weights, 2 * h + i, h, &gated)
                + self.bias[2 * h + i])
                .tanh();
            next[i] = (1.0 - z[i]) * state[i] + z[i] * cand;
        }
        state.copy_from_slice(&next);
        Ok(())
    }
}
