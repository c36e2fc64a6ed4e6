use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Full,
    /// Sign-binarized weights with a per-layer mean-|w| scale in the forward
    /// pass; gradients flow straight through to full-precision weights.
    BinarySte,
}

/// Architecture descriptor of an MLP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prototype {
    pub id: String,
    /// Widths from input through hidden layers to the class count.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_precision() -> Precision {
    Precision::Full
}

/// Offsets of one dense layer inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

impl Prototype {
    pub fn new(id: impl Into<String>, layer_widths: Vec<usize>, activation: Activation, precision: Precision) -> Result<Self> {
        let p = Self { id: id.into(), layer_widths, activation, precision };
        p.validate()?;
        Ok(p)
    }

    pub fn mlp(id: impl Into<String>, layer_widths: Vec<usize>) -> Result<Self> {
        Self::new(id, layer_widths, Activation::Relu, Precision::Full)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(FedError::Config(format!(
                "prototype `{}` needs at least an input and an output width",
                self.id
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(FedError::Config(format!("prototype `{}` has a zero-width layer", self.id)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_widths.last().expect("validated prototype")
    }

    pub fn depth(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Weight-then-bias layout of each layer, in forward order. Weights are
    /// stored row-major as `fan_in x fan_out`.
    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset..offset + fan_in * fan_out;
                let bias = weights.end..weights.end + fan_out;
                offset = bias.end;
                LayerLayout { fan_in, fan_out, weights, bias }
            })
            .collect()
    }

    pub fn param_len(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Same architecture evaluated with full-precision weights.
    pub fn full_precision(&self) -> Self {
        Self { precision: Precision::Full, ..self.clone() }
    }
}
