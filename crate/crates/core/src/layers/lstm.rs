use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{standard_mask, variational_mask, DropoutMode, LayerError, ModelConfig};
use crate::autograd::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        }
    }
}

/// One LSTM cell. Gate matrices act on `[1; h_{t−1}; x_t]`, so their first
/// column is the bias. With the highway connection the cell also owns the
/// gate `W_w` and the input map `W_h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellIds {
    pub w_c: ParamId,
    pub w_o: ParamId,
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_w: Option<ParamId>,
    pub w_h: Option<ParamId>,
    pub hidden: usize,
    pub input: usize,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut dyn RngCore) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    t
}

impl CellIds {
    /// Fan-in scaled uniform weights with the forget-gate bias set to 1.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        input: usize,
        highway: bool,
        rng: &mut dyn RngCore,
    ) -> Self {
        let width = 1 + hidden + input;
        let bound = 1.0 / (width as f64).sqrt();
        let mut gate = |name: &str, rng: &mut dyn RngCore| {
            store.add(format!("{prefix}.{name}"), uniform(&[hidden, width], bound, rng))
        };
        let w_c = gate("w_c", rng);
        let w_o = gate("w_o", rng);
        let w_f = gate("w_f", rng);
        let w_i = gate("w_i", rng);
        let w_w = highway.then(|| gate("w_w", rng));
        let w_h = highway.then(|| {
            let b = 1.0 / (input as f64).sqrt();
            store.add(format!("{prefix}.w_h"), uniform(&[hidden, input], b, rng))
        });
        let forget = store.get_mut(w_f);
        for r in 0..hidden {
            forget.data_mut()[r * width] = 1.0;
        }
        CellIds {
            w_c,
            w_o,
            w_f,
            w_i,
            w_w,
            w_h,
            hidden,
            input,
        }
    }

    pub fn num_scalars(hidden: usize, input: usize, highway: bool) -> usize {
        let gates = if highway { 5 } else { 4 };
        let w_h = if highway { hidden * input } else { 0 };
        gates * hidden * (1 + hidden + input) + w_h
    }

    /// One timestep; returns the (undropped) `h_t` and `c_t`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var), LayerError> {
        let one = g.constant(Tensor::vector(vec![1.0]));
        let z = g.concat(&[one, h_prev, x])?;
        let gate = |g: &mut Graph<'_>, w: ParamId| -> Result<Var, LayerError> {
            let w = g.param(w);
            let pre = g.matvec(w, z)?;
            Ok(g.sigmoid(pre)?)
        };
        let o = gate(g, self.w_o)?;
        let f = gate(g, self.w_f)?;
        let i = gate(g, self.w_i)?;
        let wc = g.param(self.w_c);
        let c_pre = g.matvec(wc, z)?;
        let c_tilde = g.tanh(c_pre)?;
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, c_tilde)?;
        let c = g.add(keep, write)?;
        let c_act = g.tanh(c)?;
        let h_tilde = g.mul(o, c_act)?;
        let h = match (self.w_w, self.w_h) {
            (Some(ww), Some(wh)) => {
                let w = gate(g, ww)?;
                let wh = g.param(wh);
                let carry = g.matvec(wh, x)?;
                let a = g.mul(w, h_tilde)?;
                let rest = g.one_minus(w)?;
                let b = g.mul(rest, carry)?;
                g.add(a, b)?
            }
            _ => h_tilde,
        };
        Ok((h, c))
    }

    /// Runs over `inputs` in `direction` from zero states. `mask`, if given,
    /// multiplies every `h_t` and the result feeds both the output and the
    /// recurrence. Outputs are returned in input order.
    pub fn run(
        &self,
        g: &mut Graph<'_>,
        inputs: &[Var],
        direction: Direction,
        mask: Option<&Tensor>,
    ) -> Result<Vec<Var>, LayerError> {
        if inputs.is_empty() {
            return Err(LayerError::EmptySequence);
        }
        let mut h = g.constant(Tensor::zeros(&[self.hidden]));
        let mut c = g.constant(Tensor::zeros(&[self.hidden]));
        let mut out = vec![h; inputs.len()];
        let order: Vec<usize> = match direction {
            Direction::LeftToRight => (0..inputs.len()).collect(),
            Direction::RightToLeft => (0..inputs.len()).rev().collect(),
        };
        for t in order {
            let (h_raw, c_new) = self.step(g, inputs[t], h, c)?;
            h = match mask {
                Some(m) => g.dropout_apply(h_raw, m.clone())?,
                None => h_raw,
            };
            c = c_new;
            out[t] = h;
        }
        Ok(out)
    }
}

fn recurrent_mask(config: &ModelConfig, width: usize, rng: &mut Option<&mut ChaCha8Rng>) -> Option<Tensor> {
    let r = rng.as_deref_mut()?;
    (config.dropout_mode == DropoutMode::Full && config.dropout.d2 > 0.0)
        .then(|| variational_mask(width, config.dropout.d2, r))
}

fn between_layers(
    g: &mut Graph<'_>,
    states: Vec<Var>,
    config: &ModelConfig,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Result<Vec<Var>, LayerError> {
    let Some(r) = rng.as_deref_mut() else { return Ok(states) };
    if config.dropout_mode != DropoutMode::BetweenLayersOnly || config.dropout.d2 == 0.0 {
        return Ok(states);
    }
    states
        .into_iter()
        .map(|s| {
            let mask = standard_mask(g.shape(s), config.dropout.d2, r);
            Ok(g.dropout_apply(s, mask)?)
        })
        .collect()
}

/// Unidirectional layers with alternating directions, each feeding the next.
pub fn alternating_highway_lstm(
    g: &mut Graph<'_>,
    layers: &[CellIds],
    inputs: &[Var],
    config: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Var>, LayerError> {
    if inputs.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    let mut states = inputs.to_vec();
    let mut direction = config.first_direction;
    for (k, cell) in layers.iter().enumerate() {
        let mask = recurrent_mask(config, cell.hidden, &mut rng);
        states = cell.run(g, &states, direction, mask.as_ref())?;
        if k + 1 < layers.len() {
            states = between_layers(g, states, config, &mut rng)?;
        }
        direction = direction.flip();
    }
    Ok(states)
}

/// Bidirectional layers; each layer's input is the per-timestep
/// concatenation of the previous layer's forward and backward states.
pub fn stacked_bilstm(
    g: &mut Graph<'_>,
    layers: &[[CellIds; 2]],
    inputs: &[Var],
    config: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Var>, LayerError> {
    if inputs.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    let mut states = inputs.to_vec();
    for (k, [fwd, bwd]) in layers.iter().enumerate() {
        let fmask = recurrent_mask(config, fwd.hidden, &mut rng);
        let bmask = recurrent_mask(config, bwd.hidden, &mut rng);
        let f = fwd.run(g, &states, Direction::LeftToRight, fmask.as_ref())?;
        let b = bwd.run(g, &states, Direction::RightToLeft, bmask.as_ref())?;
        states = f
            .into_iter()
            .zip(b)
            .map(|(x, y)| Ok(g.concat(&[x, y])?))
            .collect::<Result<Vec<Var>, LayerError>>()?;
        if k + 1 < layers.len() {
            states = between_layers(g, states, config, &mut rng)?;
        }
    }
    Ok(states)
}
