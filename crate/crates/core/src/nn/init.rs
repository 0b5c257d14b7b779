//! Seeded weight initialization.
//!
//! Fan-in-scaled uniform ("He") for layers feeding a relu; fan-average
//! ("Glorot") for layers feeding sigmoid or linear outputs. Biases start at
//! zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform on `[-sqrt(6/fan_in), sqrt(6/fan_in)]`.
    HeUniform,
    /// Uniform on `[-sqrt(6/(fan_in+fan_out)), ...]`.
    GlorotUniform,
    /// All zeros (used for the VAE heads so the initial coding is unit normal).
    Zero,
}

fn fans(spec: &LayerSpec) -> (usize, usize) {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
        LayerSpec::Dense {
            in_features,
            out_features,
        } => (in_features, out_features),
        _ => (1, 1),
    }
}

/// Initialize the parameters of one layer under `prefix` naming, advancing
/// the rng even for deterministic layouts so parameter order never changes
/// draw alignment.
pub fn init_layer(
    spec: &LayerSpec,
    kind: InitKind,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<Param> {
    let (fan_in, fan_out) = fans(spec);
    let limit = match kind {
        InitKind::HeUniform => (6.0 / fan_in as f64).sqrt(),
        InitKind::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        InitKind::Zero => 0.0,
    };
    spec.param_shapes()
        .into_iter()
        .map(|(suffix, shape)| {
            let name = format!("{prefix}.{suffix}");
            let n: usize = shape.iter().product();
            let data = if suffix == "bias" || kind == InitKind::Zero {
                vec![0.0; n]
            } else {
                (0..n)
                    .map(|_| rng.gen_range(-limit..limit) as f32)
                    .collect()
            };
            Param { name, shape, data }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let spec = LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 8,
            kernel: 3,
            stride: 2,
        };
        let a = init_layer(&spec, InitKind::HeUniform, "enc0", &mut ChaCha8Rng::seed_from_u64(5));
        let b = init_layer(&spec, InitKind::HeUniform, "enc0", &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let limit = (6.0f64 / 27.0).sqrt() as f32;
        assert!(a[0].data.iter().all(|v| v.abs() <= limit));
        assert!(a[1].data.iter().all(|&v| v == 0.0), "bias starts at zero");
    }

    #[test]
    fn zero_init_yields_zeros() {
        let spec = LayerSpec::Dense {
            in_features: 4,
            out_features: 2,
        };
        let p = init_layer(&spec, InitKind::Zero, "head", &mut ChaCha8Rng::seed_from_u64(1));
        assert!(p.iter().all(|p| p.data.iter().all(|&v| v == 0.0)));
    }
}
