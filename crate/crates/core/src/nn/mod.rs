//! Multilayer perceptrons on top of the tape.

mod checkpoint;
mod store;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use store::{BoundParams, GradMap, ParamEntry, ParamStore};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Matrix, NodeId, Tape};
use crate::error::{Error, Result};

/// Architecture of a fully connected network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub name: String,
    /// Input width first, output width last.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        name: impl Into<String>,
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "network `{}` needs at least two layer widths",
                self.name
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config(format!(
                "network `{}` has a zero-width layer",
                self.name
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.w{layer}", self.name)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{layer}", self.name)
    }

    /// `(name, rows, cols)` for every parameter, in layer order.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        (0..self.num_layers())
            .flat_map(|l| {
                let (fan_in, fan_out) = (self.layer_widths[l], self.layer_widths[l + 1]);
                [
                    (self.weight_name(l), fan_in, fan_out),
                    (self.bias_name(l), 1, fan_out),
                ]
            })
            .collect()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    init_into(spec, rng, &mut store);
    store
}

/// Same as [`init_params`] but appends to an existing store.
pub fn init_into<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R, store: &mut ParamStore) {
    for l in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Matrix::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
        store.insert(spec.weight_name(l), w, true);
        store.insert(spec.bias_name(l), Matrix::zeros((1, fan_out)), true);
    }
}

/// Output of [`mlp_forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: NodeId,
    /// Post-activation hidden layers, in order.
    pub hiddens: Vec<NodeId>,
}

pub fn mlp_forward(
    spec: &MlpSpec,
    params: &BoundParams,
    batch: NodeId,
    tape: &mut Tape,
) -> Result<Forward> {
    let (rows, cols) = tape.value(batch).dim();
    if cols != spec.input_width() {
        return Err(Error::Dimension {
            op: "mlp input",
            left: (rows, cols),
            right: (rows, spec.input_width()),
        });
    }
    let mut h = batch;
    let mut hiddens = Vec::with_capacity(spec.num_layers().saturating_sub(1));
    for l in 0..spec.num_layers() {
        let w = params.id(&spec.weight_name(l))?;
        let b = params.id(&spec.bias_name(l))?;
        let pre = tape.affine(h, w, b)?;
        let last = l + 1 == spec.num_layers();
        let act = if last {
            spec.output_activation
        } else {
            spec.hidden_activation
        };
        h = if act == Activation::Identity {
            pre
        } else {
            tape.activation(pre, act)?
        };
        if !last {
            hiddens.push(h);
        }
    }
    Ok(Forward { output: h, hiddens })
}
