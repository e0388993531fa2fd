//! Minimal CPU tensor kernels for the U-Net: im2col convolutions backed by
//! `matrixmultiply`, transposed convolutions, max pooling and Adam.
//!
//! Everything works on one sample at a time in `[channels, height, width]`
//! layout. Batching happens one level up by mapping samples through
//! [`crate::exec::Execution`] and reducing gradients in a fixed order.

mod adam;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    conv_backward, conv_forward, dropout_mask, maxpool_backward, maxpool_forward, relu_backward, relu_inplace,
    tconv_backward, tconv_forward, ConvCache, PoolCache,
};

/// Dense `[channels, height, width]` f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Tensor { channels, height, width, data }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    /// Stack along the channel axis.
    pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!((a.height, a.width), (b.height, b.width));
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor { channels: a.channels + b.channels, height: a.height, width: a.width, data }
    }

    /// Inverse of [`Tensor::concat`]: the first `channels` channels and the rest.
    pub fn split(self, channels: usize) -> (Tensor, Tensor) {
        let p = self.plane();
        let mut data = self.data;
        let rest = data.split_off(channels * p);
        (
            Tensor { channels, height: self.height, width: self.width, data },
            Tensor { channels: self.channels - channels, height: self.height, width: self.width, data: rest },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = a' * b' + beta * c`, where `a'` is `m x k` and `b'` is `k x n`, each
/// optionally transposed from its row-major storage.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand sizes");
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the bounds above cover every element addressed by the given
    // dimensions and strides; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
