//! Fully connected ReLU networks over a flat parameter vector.
//!
//! Layer `l` stores its weights as an `out x in` row-major block followed by
//! `out` biases. Hidden layers apply ReLU, the last layer is linear. All batch
//! arithmetic goes through `matrixmultiply::dgemm`, which is single-threaded
//! here, so results are bitwise reproducible for a fixed batch shape.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`DenseNet::forward_batch`].
///
/// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
/// (post-ReLU for hidden layers).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output, `batch x out_dim` row-major.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn output_row(&self, row: usize) -> &[f64] {
        let out = self.output();
        let width = out.len() / self.batch.max(1);
        &out[row * width..(row + 1) * width]
    }
}

/// Gradient aligned with a [`DenseNet`] parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn zeros(len: usize) -> Self {
        GradVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }
}

impl DenseNet {
    /// He-uniform hidden layers, zero biases. The output layer is scaled down
    /// so freshly built heads start close to uniform logits and zero offsets.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut limit = (6.0 / fan_in as f64).sqrt();
            if l + 1 == n_layers {
                limit *= OUTPUT_INIT_SCALE;
            }
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.random_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least an input and an output size".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        Ok(DenseNet {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset = self.layer_offset(l);
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + fan_in * fan_out];
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (w, b)
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.sizes
            .windows(2)
            .take(l)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.output().to_vec())
    }

    /// Forward pass over `batch` row-major input rows.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<ForwardCache> {
        if input.len() != batch * self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: batch * self.in_dim(),
                actual: input.len(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let x = &acts[l];
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z[b][o] += sum_i x[b][i] * w[o][i]
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_in,
                    fan_out,
                    1.0,
                    x.as_ptr(),
                    fan_in as isize,
                    1,
                    w.as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l + 1 < n_layers {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        Ok(ForwardCache { batch, acts })
    }

    /// Reverse-mode gradient of a scalar loss given `d_out = dL/d(output)`
    /// for every row of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<GradVector> {
        let batch = cache.batch;
        if d_out.len() != batch * self.out_dim() {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: batch * self.out_dim(),
                actual: d_out.len(),
            });
        }
        let mut grad = GradVector::zeros(self.params.len());
        let mut delta = d_out.to_vec();
        let n_layers = self.sizes.len() - 1;
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = self.layer_offset(l);
            let x = &cache.acts[l];
            let (gw, gb) = grad.0[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            // gw[o][i] = sum_b delta[b][o] * x[b][i]
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    batch,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    x.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    gw.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut d_in = vec![0.0; batch * fan_in];
            // d_in[b][i] = sum_o delta[b][o] * w[o][i]
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    w.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    d_in.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (d, a) in d_in.iter_mut().zip(x) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = d_in;
        }
        Ok(grad)
    }
}

/// Output-layer weights are drawn at this fraction of the He-uniform limit.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
