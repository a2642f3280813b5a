use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NnError;

/// 3×3 kernels in every convolution.
pub const CONV_KERNEL: usize = 3;
/// Hidden dense widths, in order after the flatten.
pub const DENSE_WIDTHS: [usize; 4] = [16, 32, 64, 128];
pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_FILTERS: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * CONV_KERNEL * CONV_KERNEL],
            biases: vec![0.0; out_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }
}

/// All trainable weights: three conv blocks, four hidden dense layers, and
/// the two-way output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    input_side: usize,
    pub conv: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
}

/// Spatial side after each of the three 2×2 pools.
pub fn pooled_sides(input_side: usize) -> [usize; 3] {
    [input_side / 2, input_side / 4, input_side / 8]
}

impl ModelParams {
    pub fn zeros(input_side: usize, filters: [usize; 3]) -> Result<Self, NnError> {
        if input_side < 8 {
            return Err(NnError::Shape(format!("input side {input_side} is too small for three 2×2 pools")));
        }
        if filters.contains(&0) {
            return Err(NnError::Shape("filter counts must be positive".into()));
        }
        let conv = vec![
            ConvLayer::zeros(1, filters[0]),
            ConvLayer::zeros(filters[0], filters[1]),
            ConvLayer::zeros(filters[1], filters[2]),
        ];
        let last = pooled_sides(input_side)[2];
        let mut width = last * last * filters[2];
        let mut dense = Vec::with_capacity(5);
        for &w in &DENSE_WIDTHS {
            dense.push(DenseLayer::zeros(width, w));
            width = w;
        }
        dense.push(DenseLayer::zeros(width, NUM_CLASSES));
        Ok(Self { input_side, conv, dense })
    }

    /// He-normal weights, zero biases.
    pub fn random(input_side: usize, filters: [usize; 3], rng: &mut impl Rng) -> Result<Self, NnError> {
        let mut params = Self::zeros(input_side, filters)?;
        for layer in &mut params.conv {
            let fan_in = (layer.in_channels * CONV_KERNEL * CONV_KERNEL) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng) as f32);
        }
        for layer in &mut params.dense {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).unwrap();
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng) as f32);
        }
        Ok(params)
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn filters(&self) -> [usize; 3] {
        [self.conv[0].out_channels, self.conv[1].out_channels, self.conv[2].out_channels]
    }

    pub fn flatten_len(&self) -> usize {
        let last = pooled_sides(self.input_side)[2];
        last * last * self.conv[2].out_channels
    }

    /// Checks layer count, kernel shapes, widths and chaining.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.conv.len() != 3 {
            return Err(NnError::Shape(format!("expected 3 conv layers, found {}", self.conv.len())));
        }
        if self.dense.len() != DENSE_WIDTHS.len() + 1 {
            return Err(NnError::Shape(format!("expected 5 dense layers, found {}", self.dense.len())));
        }
        let mut channels = 1;
        for (i, c) in self.conv.iter().enumerate() {
            if c.in_channels != channels
                || c.out_channels == 0
                || c.weights.len() != c.out_channels * c.in_channels * CONV_KERNEL * CONV_KERNEL
                || c.biases.len() != c.out_channels
            {
                return Err(NnError::Shape(format!("conv layer {i} has inconsistent shape")));
            }
            channels = c.out_channels;
        }
        let mut width = self.flatten_len();
        let widths = DENSE_WIDTHS.iter().copied().chain([NUM_CLASSES]);
        for (i, (d, expected)) in self.dense.iter().zip(widths).enumerate() {
            if d.inputs != width
                || d.outputs != expected
                || d.weights.len() != d.inputs * d.outputs
                || d.biases.len() != d.outputs
            {
                return Err(NnError::Shape(format!("dense layer {i} has inconsistent shape")));
            }
            width = d.outputs;
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(NnError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Every parameter tensor in canonical order: per layer, weights then
    /// biases; conv layers first.
    pub fn tensors(&self) -> Vec<&[f32]> {
        let conv = self.conv.iter().flat_map(|l| [&l.weights[..], &l.biases[..]]);
        let dense = self.dense.iter().flat_map(|l| [&l.weights[..], &l.biases[..]]);
        conv.chain(dense).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let conv = self.conv.iter_mut().flat_map(|l| [&mut l.weights[..], &mut l.biases[..]]);
        let dense = self.dense.iter_mut().flat_map(|l| [&mut l.weights[..], &mut l.biases[..]]);
        conv.chain(dense).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fast_model_shapes() {
        let p = ModelParams::zeros(24, DEFAULT_FILTERS).unwrap();
        assert_eq!(pooled_sides(24), [12, 6, 3]);
        assert_eq!(p.flatten_len(), 288);
        let widths: Vec<usize> = p.dense.iter().map(|d| d.outputs).collect();
        assert_eq!(widths, vec![16, 32, 64, 128, 2]);
        p.validate().unwrap();
    }

    #[test]
    fn slow_model_shapes() {
        let p = ModelParams::zeros(64, DEFAULT_FILTERS).unwrap();
        assert_eq!(p.flatten_len(), 8 * 8 * 32);
        p.validate().unwrap();
    }

    #[test]
    fn random_init_is_seeded() {
        let a = ModelParams::random(24, DEFAULT_FILTERS, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ModelParams::random(24, DEFAULT_FILTERS, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.conv[0].weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn validate_catches_broken_layers() {
        let mut p = ModelParams::zeros(24, DEFAULT_FILTERS).unwrap();
        p.dense[2].biases.pop();
        assert!(p.validate().is_err());
        let mut p = ModelParams::zeros(24, DEFAULT_FILTERS).unwrap();
        p.conv[1].weights[0] = f32::NAN;
        assert!(matches!(p.validate(), Err(NnError::Numeric(_))));
        assert!(ModelParams::zeros(4, DEFAULT_FILTERS).is_err());
    }
}
