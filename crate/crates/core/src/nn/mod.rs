//! Network building blocks on top of the tensor tape: the layer vocabulary,
//! named parameters, weight initialization and optimizers.

pub mod init;
pub mod optim;

pub use optim::{OptimizerKind, OptimizerState};

use crate::error::{Error, Result};

/// One layer of a network architecture. Only `Conv2d` and `Dense` carry
/// parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Sigmoid,
    Downsample2,
    Upsample2,
    Flatten,
    Unflatten {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if kernel == 0 || kernel % 2 == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "conv2d kernel extent must be odd and >= 1, got {kernel}"
                    )));
                }
                if in_channels == 0 || out_channels == 0 || stride == 0 {
                    return Err(Error::InvalidConfig(
                        "conv2d channels and stride must be positive".into(),
                    ));
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::InvalidConfig(
                        "dense feature counts must be positive".into(),
                    ));
                }
            }
            LayerSpec::Unflatten {
                channels,
                height,
                width,
            } => {
                if channels == 0 || height == 0 || width == 0 {
                    return Err(Error::InvalidConfig(
                        "unflatten extents must be positive".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameter tensors this layer owns, as `(name suffix, shape)`.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("kernel", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Dense {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            _ => Vec::new(),
        }
    }

    /// Trainable element count of this layer.
    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Total trainable element count over a layer sequence.
pub fn count_parameters(layers: &[LayerSpec]) -> usize {
    layers.iter().map(LayerSpec::param_count).sum()
}

/// A named trainable tensor (weights live outside any tape).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}
