//! Fully connected scalar-field approximators `u_θ: ℝⁿ → ℝ`.
//!
//! Parameters live in one contiguous [`FlatParams`] vector; layer `l` owns a
//! row-major `fan_out × fan_in` weight block followed by its bias block.

pub mod batched;
pub mod io;

use std::ops::Range;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, JetOps, Scalar, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    /// tanh on every hidden layer.
    MlpTanh,
    /// First hidden activation is sine, later hidden layers tanh.
    Fls,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::MlpTanh => "mlp-tanh",
            Arch::Fls => "fls",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    /// `(σ, σ′, σ″, σ‴)` at `z`.
    #[inline]
    pub fn eval(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = crate::autodiff::scalar::tanh(z);
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s, -2.0 * s * (s - 2.0 * t * t))
            }
            Activation::Sin => {
                let (s, c) = (z.sin(), z.cos());
                (s, c, -s, -c)
            }
        }
    }
}

/// Named width presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn widths(self) -> Vec<usize> {
        match self {
            Preset::Desk => vec![2, 64, 64, 64, 1],
            Preset::Paper => vec![2, 512, 512, 512, 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub layer_widths: Vec<usize>,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Arch, layer_widths: Vec<usize>, init_seed: u64) -> Result<Self> {
        let cfg = Self {
            arch,
            layer_widths,
            init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(arch: Arch, preset: Preset, init_seed: u64) -> Self {
        Self {
            arch,
            layer_widths: preset.widths(),
            init_seed,
        }
    }

    /// Widths must be positive and end in a single output. A two-entry width
    /// list is accepted and describes a purely affine model.
    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if w.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least input and output widths, got {w:?}"
            )));
        }
        if w.contains(&0) {
            return Err(Error::InvalidModel(format!("widths must be positive, got {w:?}")));
        }
        if *w.last().unwrap() != 1 {
            return Err(Error::InvalidModel(format!("output width must be 1, got {w:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Activation after layer `l`, or `None` for the output layer.
    pub fn activation(&self, l: usize) -> Option<Activation> {
        if l + 1 >= self.n_layers() {
            None
        } else if l == 0 && self.arch == Arch::Fls {
            Some(Activation::Sin)
        } else {
            Some(Activation::Tanh)
        }
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut off = 0;
        self.layer_widths
            .windows(2)
            .enumerate()
            .map(|(layer, p)| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let weights = off..off + fan_in * fan_out;
                let biases = weights.end..weights.end + fan_out;
                off = biases.end;
                LayerLayout {
                    layer,
                    fan_in,
                    fan_out,
                    weights,
                    biases,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub layer: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub values: Vec<f64>,
    pub layout: Vec<LayerLayout>,
}

impl FlatParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            values: vec![0.0; config.param_count()],
            layout: config.layout(),
        })
    }

    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: config.param_count(),
                got: values.len(),
            });
        }
        Ok(Self {
            values,
            layout: config.layout(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.values[self.layout[l].weights.clone()]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.values[self.layout[l].biases.clone()]
    }

    /// Per-layer `(weights, biases)` copies.
    pub fn unflatten(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.layout.len())
            .map(|l| (self.weights(l).to_vec(), self.biases(l).to_vec()))
            .collect()
    }

    pub fn flatten(config: &ModelConfig, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let values = layers.iter().flat_map(|(w, b)| w.iter().chain(b)).copied().collect();
        Self::from_values(config, values)
    }

    pub(crate) fn check(&self, config: &ModelConfig) -> Result<()> {
        if self.values.len() != config.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: config.param_count(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, drawn from a ChaCha8 stream seeded
/// with `config.init_seed` in layout order.
pub fn init(config: &ModelConfig) -> Result<FlatParams> {
    let mut params = FlatParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    for layer in params.layout.clone() {
        let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite Glorot bound");
        for w in &mut params.values[layer.weights] {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Plain network evaluation at one input point.
pub fn forward(config: &ModelConfig, params: &FlatParams, x: &[f64]) -> Result<f64> {
    params.check(config)?;
    if x.len() != config.input_dim() {
        return Err(Error::Dimension {
            what: "input point",
            expected: config.input_dim(),
            got: x.len(),
        });
    }
    let mut a = x.to_vec();
    for layer in &params.layout {
        let w = &params.values[layer.weights.clone()];
        let b = &params.values[layer.biases.clone()];
        let act = config.activation(layer.layer);
        a = (0..layer.fan_out)
            .map(|o| {
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                // same accumulation order as the jet path
                let z = row[1..]
                    .iter()
                    .zip(&a[1..])
                    .fold(a[0] * row[0], |acc, (wi, ai)| acc + ai * wi)
                    + b[o];
                match act {
                    Some(f) => f.eval(z).0,
                    None => z,
                }
            })
            .collect();
    }
    Ok(a[0])
}

/// Pushes an input jet through the network with parameters `theta` of any
/// scalar type. `x` holds the input coordinates as scalars of the same type.
pub fn forward_jet_with<S, J>(config: &ModelConfig, theta: &[S], x: &[S]) -> Result<J>
where
    S: Scalar,
    J: JetOps<S>,
{
    if theta.len() != config.param_count() {
        return Err(Error::Dimension {
            what: "parameter vector",
            expected: config.param_count(),
            got: theta.len(),
        });
    }
    let n = config.input_dim();
    if x.len() != n {
        return Err(Error::Dimension {
            what: "input point",
            expected: n,
            got: x.len(),
        });
    }
    let mut acts: Vec<J> = x.iter().enumerate().map(|(j, v)| J::variable(v.clone(), j, n)).collect();
    for layer in config.layout() {
        let act = config.activation(layer.layer);
        acts = (0..layer.fan_out)
            .map(|o| {
                let w0 = layer.weights.start + o * layer.fan_in;
                let mut z = acts[0].mul_scalar(&theta[w0]);
                for (i, a) in acts.iter().enumerate().skip(1) {
                    z = z.add(&a.mul_scalar(&theta[w0 + i]));
                }
                let z = z.add_scalar(&theta[layer.biases.start + o]);
                match act {
                    Some(Activation::Tanh) => z.tanh(),
                    Some(Activation::Sin) => z.sin(),
                    None => z,
                }
            })
            .collect();
    }
    Ok(acts.swap_remove(0))
}

/// Parameters bound to leaves of a tape, ready for repeated jet evaluation.
pub struct TapeModel<'t> {
    config: ModelConfig,
    tape: &'t Tape,
    theta: Vec<Var<'t>>,
}

impl<'t> TapeModel<'t> {
    /// Registers every parameter coordinate as a leaf on `tape`.
    pub fn bind(tape: &'t Tape, config: &ModelConfig, params: &FlatParams) -> Result<Self> {
        params.check(config)?;
        let theta = params
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| tape.parameter(v, i))
            .collect();
        Ok(Self {
            config: config.clone(),
            tape,
            theta,
        })
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn forward_jet(&self, x: &[f64]) -> Result<Jet2<Var<'t>>> {
        let xs: Vec<Var<'t>> = x.iter().map(|&v| self.tape.constant(v)).collect();
        forward_jet_with(&self.config, &self.theta, &xs)
    }

    pub fn forward_jet3(&self, x: &[f64]) -> Result<crate::autodiff::Jet3<Var<'t>>> {
        if !cfg!(feature = "jet3") {
            return Err(Error::Capability("third-order jets (enable the `jet3` feature)".into()));
        }
        let xs: Vec<Var<'t>> = x.iter().map(|&v| self.tape.constant(v)).collect();
        forward_jet_with(&self.config, &self.theta, &xs)
    }
}

/// One-shot jet evaluation on a caller-owned tape.
pub fn forward_jet<'t>(
    config: &ModelConfig,
    params: &FlatParams,
    x: &[f64],
    tape: &'t Tape,
) -> Result<Jet2<Var<'t>>> {
    TapeModel::bind(tape, config, params)?.forward_jet(x)
}
