use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Activation, DenseLayer, GruLayer};
use crate::features::FEATURE_DIM;
use crate::dsp::NUM_BANDS;
use crate::{AecError, Result};

/// Far and near feature vectors side by side.
pub const INPUT_DIM: usize = 2 * FEATURE_DIM;
const EMBED: usize = 24;
const VAD_HIDDEN: usize = 24;
const ECHO_HIDDEN: usize = 48;
const SUPPRESS_HIDDEN: usize = 96;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Gru,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Gru => "gru",
        }
    }
}

/// Fixed position of one layer in the network and in the weight file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerRole {
    pub name: &'static str,
    pub kind: LayerKind,
    pub inputs: usize,
    /// Output width (dense) or hidden size (GRU).
    pub outputs: usize,
    pub activation: Activation,
}

const fn dense(name: &'static str, inputs: usize, outputs: usize, activation: Activation) -> LayerRole {
    LayerRole {
        name,
        kind: LayerKind::Dense,
        inputs,
        outputs,
        activation,
    }
}

const fn gru(name: &'static str, inputs: usize, hidden: usize) -> LayerRole {
    LayerRole {
        name,
        kind: LayerKind::Gru,
        inputs,
        outputs: hidden,
        activation: Activation::Tanh,
    }
}

pub const ROLES: [LayerRole; 8] = [
    dense("input_dense", INPUT_DIM, EMBED, Activation::Tanh),
    gru("vad_far_gru", EMBED, VAD_HIDDEN),
    gru("vad_near_gru", EMBED, VAD_HIDDEN),
    dense("vad_far_dense", VAD_HIDDEN, 1, Activation::Sigmoid),
    dense("vad_near_dense", VAD_HIDDEN, 1, Activation::Sigmoid),
    gru("echo_est_gru", EMBED + VAD_HIDDEN, ECHO_HIDDEN),
    gru("suppress_gru", ECHO_HIDDEN + VAD_HIDDEN + EMBED, SUPPRESS_HIDDEN),
    dense("gain_dense", SUPPRESS_HIDDEN, NUM_BANDS, Activation::Sigmoid),
];

/// A layer of either kind, as stored in the weight file.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Gru(GruLayer),
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.param_count(),
            Layer::Gru(g) => g.param_count(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Layer::Dense(d) => (d.inputs, d.outputs),
            Layer::Gru(g) => (g.inputs, g.hidden),
        }
    }
}

/// All network parameters, one layer per role in [`ROLES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub input_dense: DenseLayer,
    pub vad_far_gru: GruLayer,
    pub vad_near_gru: GruLayer,
    pub vad_far_dense: DenseLayer,
    pub vad_near_dense: DenseLayer,
    pub echo_est_gru: GruLayer,
    pub suppress_gru: GruLayer,
    pub gain_dense: DenseLayer,
}

impl NetworkWeights {
    /// Every parameter zero. Outputs 0.5 everywhere.
    pub fn zeros() -> Self {
        let layers = ROLES.map(|role| match role.kind {
            LayerKind::Dense => Layer::Dense(DenseLayer::zeros(role.inputs, role.outputs, role.activation)),
            LayerKind::Gru => Layer::Gru(GruLayer::zeros(role.inputs, role.outputs)),
        });
        Self::from_layers(layers.into()).expect("role table is self-consistent")
    }

    /// Uniform random parameters in `[-scale, scale]`, for tests and
    /// benchmarks.
    pub fn random(seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros();
        for layer in w.params_mut() {
            for v in layer {
                *v = rng.random_range(-scale..=scale);
            }
        }
        w
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for d in [&mut self.input_dense, &mut self.vad_far_dense, &mut self.vad_near_dense, &mut self.gain_dense] {
            out.push(&mut d.weights);
            out.push(&mut d.bias);
        }
        for g in [&mut self.vad_far_gru, &mut self.vad_near_gru, &mut self.echo_est_gru, &mut self.suppress_gru] {
            out.push(&mut g.input_weights);
            out.push(&mut g.recurrent_weights);
            out.push(&mut g.bias);
        }
        out
    }

    /// Assemble from layers in role order, validating kinds, shapes and
    /// activations.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != ROLES.len() {
            return Err(AecError::model(format!(
                "expected {} layers, found {}",
                ROLES.len(),
                layers.len()
            )));
        }
        for (role, layer) in ROLES.iter().zip(&layers) {
            check_layer(role, layer)?;
        }
        let mut it = layers.into_iter();
        Ok(NetworkWeights {
            input_dense: take_dense(&mut it),
            vad_far_gru: take_gru(&mut it),
            vad_near_gru: take_gru(&mut it),
            vad_far_dense: take_dense(&mut it),
            vad_near_dense: take_dense(&mut it),
            echo_est_gru: take_gru(&mut it),
            suppress_gru: take_gru(&mut it),
            gain_dense: take_dense(&mut it),
        })
    }

    /// Layers in role order.
    pub fn layers(&self) -> [LayerRef<'_>; 8] {
        [
            LayerRef::Dense(&self.input_dense),
            LayerRef::Gru(&self.vad_far_gru),
            LayerRef::Gru(&self.vad_near_gru),
            LayerRef::Dense(&self.vad_far_dense),
            LayerRef::Dense(&self.vad_near_dense),
            LayerRef::Gru(&self.echo_est_gru),
            LayerRef::Gru(&self.suppress_gru),
            LayerRef::Dense(&self.gain_dense),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (role, layer) in ROLES.iter().zip(self.layers()) {
            check_layer(role, &layer.to_owned())?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// One frame of inference. `far` and `near` are the 42-dimensional
    /// feature vectors of the reference and of the adaptive-filter output.
    pub fn forward(&self, state: &mut NetState, far: &[f32], near: &[f32]) -> Result<NetOutput> {
        if far.len() != FEATURE_DIM || near.len() != FEATURE_DIM {
            return Err(AecError::model(format!(
                "network expects two {FEATURE_DIM}-dimensional feature vectors"
            )));
        }
        let mut input = [0f32; INPUT_DIM];
        input[..FEATURE_DIM].copy_from_slice(far);
        input[FEATURE_DIM..].copy_from_slice(near);

        let mut embed = [0f32; EMBED];
        self.input_dense.forward(&input, &mut embed)?;
        self.vad_far_gru.step(&embed, &mut state.vad_far)?;
        self.vad_near_gru.step(&embed, &mut state.vad_near)?;
        let mut vad_far = [0f32; 1];
        let mut vad_near = [0f32; 1];
        self.vad_far_dense.forward(&state.vad_far, &mut vad_far)?;
        self.vad_near_dense.forward(&state.vad_near, &mut vad_near)?;

        let mut echo_in = [0f32; EMBED + VAD_HIDDEN];
        echo_in[..EMBED].copy_from_slice(&embed);
        echo_in[EMBED..].copy_from_slice(&state.vad_far);
        self.echo_est_gru.step(&echo_in, &mut state.echo)?;

        let mut sup_in = [0f32; ECHO_HIDDEN + VAD_HIDDEN + EMBED];
        sup_in[..ECHO_HIDDEN].copy_from_slice(&state.echo);
        sup_in[ECHO_HIDDEN..ECHO_HIDDEN + VAD_HIDDEN].copy_from_slice(&state.vad_near);
        sup_in[ECHO_HIDDEN + VAD_HIDDEN..].copy_from_slice(&embed);
        self.suppress_gru.step(&sup_in, &mut state.suppress)?;

        let mut band_gains = [0f32; NUM_BANDS];
        self.gain_dense.forward(&state.suppress, &mut band_gains)?;
        Ok(NetOutput {
            vad_near: vad_near[0],
            vad_far: vad_far[0],
            band_gains,
        })
    }
}

fn take_dense(it: &mut impl Iterator<Item = Layer>) -> DenseLayer {
    match it.next() {
        Some(Layer::Dense(d)) => d,
        _ => unreachable!("layer kinds checked against ROLES"),
    }
}

fn take_gru(it: &mut impl Iterator<Item = Layer>) -> GruLayer {
    match it.next() {
        Some(Layer::Gru(g)) => g,
        _ => unreachable!("layer kinds checked against ROLES"),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum LayerRef<'a> {
    Dense(&'a DenseLayer),
    Gru(&'a GruLayer),
}

impl LayerRef<'_> {
    pub fn param_count(&self) -> usize {
        match self {
            LayerRef::Dense(d) => d.param_count(),
            LayerRef::Gru(g) => g.param_count(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            LayerRef::Dense(d) => (d.inputs, d.outputs),
            LayerRef::Gru(g) => (g.inputs, g.hidden),
        }
    }

    pub fn to_owned(&self) -> Layer {
        match self {
            LayerRef::Dense(d) => Layer::Dense((*d).clone()),
            LayerRef::Gru(g) => Layer::Gru((*g).clone()),
        }
    }
}

/// Per-session recurrent state.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState {
    pub vad_far: Vec<f32>,
    pub vad_near: Vec<f32>,
    pub echo: Vec<f32>,
    pub suppress: Vec<f32>,
}

impl Default for NetState {
    fn default() -> Self {
        NetState {
            vad_far: vec![0.0; VAD_HIDDEN],
            vad_near: vec![0.0; VAD_HIDDEN],
            echo: vec![0.0; ECHO_HIDDEN],
            suppress: vec![0.0; SUPPRESS_HIDDEN],
        }
    }
}

impl NetState {
    pub fn iter(&self) -> impl Iterator<Item = &f32> {
        self.vad_far
            .iter()
            .chain(&self.vad_near)
            .chain(&self.echo)
            .chain(&self.suppress)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput {
    pub vad_near: f32,
    pub vad_far: f32,
    pub band_gains: [f32; NUM_BANDS],
}

fn check_layer(role: &LayerRole, layer: &Layer) -> Result<()> {
    let kind_ok = matches!(
        (role.kind, layer),
        (LayerKind::Dense, Layer::Dense(_)) | (LayerKind::Gru, Layer::Gru(_))
    );
    if !kind_ok {
        return Err(AecError::model(format!(
            "{} expects a {} layer",
            role.name,
            if role.kind == LayerKind::Dense { "dense" } else { "GRU" }
        )));
    }
    let (i, o) = layer.dims();
    if (i, o) != (role.inputs, role.outputs) {
        return Err(AecError::model(format!(
            "{} expects {}→{}, found {}→{}",
            role.name, role.inputs, role.outputs, i, o
        )));
    }
    let finite = match layer {
        Layer::Dense(d) => {
            if d.activation != role.activation {
                return Err(AecError::model(format!(
                    "{} expects {} activation, found {}",
                    role.name,
                    role.activation.name(),
                    d.activation.name()
                )));
            }
            d.weights.len() == i * o
                && d.bias.len() == o
                && d.weights.iter().chain(&d.bias).all(|v| v.is_finite())
        }
        Layer::Gru(g) => {
            g.input_weights.len() == 3 * o * i
                && g.recurrent_weights.len() == 3 * o * o
                && g.bias.len() == 3 * o
                && g
                    .input_weights
                    .iter()
                    .chain(&g.recurrent_weights)
                    .chain(&g.bias)
                    .all(|v| v.is_finite())
        }
    };
    if !finite {
        return Err(AecError::model(format!(
            "{} has inconsistent or non-finite parameters",
            role.name
        )));
    }
    Ok(())
}
