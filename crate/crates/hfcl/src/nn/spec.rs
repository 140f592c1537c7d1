//! Model architecture descriptors and the flat parameter vector.
//!
//! Parameters live in one flat vector so they can be transmitted,
//! quantized, and compared bit-for-bit across runs. The canonical layout
//! is layer-major: for each dense layer, the weight matrix row-major
//! (`units x inputs`, one row per output unit) followed by the biases.

use rand::Rng;

use super::NnError;

/// One layer descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer (`inputs -> units`), weights plus biases.
    /// Hidden layers apply a sigmoid; the final layer feeds a softmax.
    Dense { inputs: usize, units: usize },
    /// A bank of square convolution filters counted for communication
    /// accounting only (filter weights, no biases). Not trainable here.
    ConvCount { filters: usize, kernel: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, units } => inputs * units + units,
            LayerSpec::ConvCount { filters, kernel } => filters * kernel * kernel,
        }
    }
}

/// A validated stack of layer descriptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Validates shape chaining and builds the spec. A spec is either all
    /// dense (trainable) or all filter-count (accounting-only).
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidSpec("model needs at least one layer".into()));
        }
        let dense = layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count();
        if dense != 0 && dense != layers.len() {
            return Err(NnError::InvalidSpec(
                "model mixes trainable and accounting-only layers".into(),
            ));
        }
        for layer in &layers {
            let ok = match *layer {
                LayerSpec::Dense { inputs, units } => inputs > 0 && units > 0,
                LayerSpec::ConvCount { filters, kernel } => filters > 0 && kernel > 0,
            };
            if !ok {
                return Err(NnError::InvalidSpec("layer sizes must be positive".into()));
            }
        }
        for pair in layers.windows(2) {
            if let (LayerSpec::Dense { units, .. }, LayerSpec::Dense { inputs, .. }) = (&pair[0], &pair[1]) {
                if units != inputs {
                    return Err(NnError::InvalidSpec(format!(
                        "layer output {units} does not feed next layer input {inputs}"
                    )));
                }
            }
        }
        Ok(Self { layers })
    }

    /// Dense stack from a chain of dimensions, e.g. `[196, 32, 10]`.
    pub fn mlp(dims: &[usize]) -> Result<Self, NnError> {
        if dims.len() < 2 {
            return Err(NnError::InvalidSpec("an MLP needs input and output dims".into()));
        }
        Self::new(
            dims.windows(2)
                .map(|w| LayerSpec::Dense { inputs: w[0], units: w[1] })
                .collect(),
        )
    }

    /// The desk-scale classifier: 196 -> 32 -> 10, sized for 14x14 inputs.
    pub fn desk_mlp() -> Self {
        Self::mlp(&[196, 32, 10]).expect("static dims are valid")
    }

    /// The reference CNN filter counts used for overhead arithmetic:
    /// 128 filters of 5x5 plus 128 of 3x3, weights only (P = 4,352).
    pub fn reference_cnn_count() -> Self {
        Self::new(vec![
            LayerSpec::ConvCount { filters: 128, kernel: 5 },
            LayerSpec::ConvCount { filters: 128, kernel: 3 },
        ])
        .expect("static spec is valid")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Total learnable parameter count P.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Whether forward/backward passes are defined for this spec.
    pub fn trainable(&self) -> bool {
        self.layers.iter().all(|l| matches!(l, LayerSpec::Dense { .. }))
    }

    /// Input feature dimension (dense specs only).
    pub fn input_dim(&self) -> Option<usize> {
        match self.layers.first() {
            Some(&LayerSpec::Dense { inputs, .. }) => Some(inputs),
            _ => None,
        }
    }

    /// Output class count (dense specs only).
    pub fn output_dim(&self) -> Option<usize> {
        match self.layers.last() {
            Some(&LayerSpec::Dense { units, .. }) => Some(units),
            _ => None,
        }
    }

    /// Byte offset bookkeeping: (weights_start, biases_start, end) of each
    /// dense layer within the flat vector.
    pub(crate) fn dense_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut cursor = 0;
        for layer in &self.layers {
            if let LayerSpec::Dense { inputs, units } = *layer {
                let weights = cursor;
                let biases = cursor + inputs * units;
                cursor = biases + units;
                offsets.push((weights, biases, cursor));
            }
        }
        offsets
    }

    /// Seeded Xavier-uniform initialization: weights from
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelParams, NnError> {
        if !self.trainable() {
            return Err(NnError::NotTrainable);
        }
        let mut theta = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            if let LayerSpec::Dense { inputs, units } = *layer {
                let limit = (6.0 / (inputs + units) as f64).sqrt();
                for _ in 0..inputs * units {
                    theta.push(rng.random_range(-limit..limit));
                }
                theta.extend(std::iter::repeat_n(0.0, units));
            }
        }
        ModelParams::new(self.clone(), theta)
    }
}

/// The flat learnable parameter vector plus its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(spec: ModelSpec, theta: Vec<f64>) -> Result<Self, NnError> {
        if theta.len() != spec.param_count() {
            return Err(NnError::LengthMismatch {
                expected: spec.param_count(),
                got: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteParameter { index: i });
        }
        Ok(Self { spec, theta })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_cnn_parameter_count() {
        // 128 * (5^2 + 3^2) = 4,352 filter weights, no biases.
        assert_eq!(ModelSpec::reference_cnn_count().param_count(), 4_352);
        assert!(!ModelSpec::reference_cnn_count().trainable());
    }

    #[test]
    fn desk_mlp_parameter_count() {
        // 196*32 + 32 + 32*10 + 10.
        assert_eq!(ModelSpec::desk_mlp().param_count(), 6_634);
        assert!(ModelSpec::desk_mlp().trainable());
    }

    #[test]
    fn param_count_is_sum_of_layers() {
        let spec = ModelSpec::mlp(&[4, 3, 2]).unwrap();
        let by_layer: usize = spec.layers().iter().map(LayerSpec::param_count).sum();
        assert_eq!(spec.param_count(), by_layer);
        assert_eq!(spec.param_count(), 4 * 3 + 3 + 3 * 2 + 2);
    }

    #[test]
    fn rejects_incompatible_chain() {
        let err = ModelSpec::new(vec![
            LayerSpec::Dense { inputs: 4, units: 3 },
            LayerSpec::Dense { inputs: 5, units: 2 },
        ]);
        assert!(matches!(err, Err(NnError::InvalidSpec(_))));
    }

    #[test]
    fn rejects_mixed_layer_kinds() {
        let err = ModelSpec::new(vec![
            LayerSpec::Dense { inputs: 4, units: 3 },
            LayerSpec::ConvCount { filters: 8, kernel: 3 },
        ]);
        assert!(matches!(err, Err(NnError::InvalidSpec(_))));
    }

    #[test]
    fn init_is_seeded_and_within_xavier_bounds() {
        let spec = ModelSpec::mlp(&[6, 4, 2]).unwrap();
        let a = spec.init_params(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = spec.init_params(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.theta(), b.theta());

        let offsets = spec.dense_offsets();
        let limit0 = (6.0 / (6 + 4) as f64).sqrt();
        for &w in &a.theta()[offsets[0].0..offsets[0].1] {
            assert!(w.abs() < limit0);
        }
        // Biases start at zero.
        for &(_, biases, end) in &offsets {
            assert!(a.theta()[biases..end].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn params_reject_wrong_length_and_non_finite() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        assert!(matches!(
            ModelParams::new(spec.clone(), vec![0.0; 3]),
            Err(NnError::LengthMismatch { expected: 6, got: 3 })
        ));
        let mut theta = vec![0.0; 6];
        theta[4] = f64::NAN;
        assert!(matches!(
            ModelParams::new(spec, theta),
            Err(NnError::NonFiniteParameter { index: 4 })
        ));
    }

    #[test]
    fn accounting_spec_cannot_init() {
        let spec = ModelSpec::reference_cnn_count();
        assert!(matches!(
            spec.init_params(&mut ChaCha8Rng::seed_from_u64(0)),
            Err(NnError::NotTrainable)
        ));
    }
}
