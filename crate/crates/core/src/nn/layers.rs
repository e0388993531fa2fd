use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gemm, Tensor};

/// Saved input columns of a convolution, needed for the weight gradient.
pub struct ConvCache {
    cols: Vec<f32>,
    in_channels: usize,
    height: usize,
    width: usize,
}

fn im2col3(x: &Tensor) -> Vec<f32> {
    let (c, h, w) = (x.channels, x.height, x.width);
    let hw = h * w;
    let mut cols = vec![0.0f32; c * 9 * hw];
    for ci in 0..c {
        let src = x.channel(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &src[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src_row[..w - 1]),
                        1 => dst.copy_from_slice(src_row),
                        _ => dst[..w - 1].copy_from_slice(&src_row[1..]),
                    }
                }
            }
        }
    }
    cols
}

fn col2im3(cols: &[f32], c: usize, h: usize, w: usize) -> Tensor {
    let hw = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * hw..][..hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let d = &mut dst[sy as usize * w..][..w];
                    let s = &row[y * w..][..w];
                    match kx {
                        0 => d[..w - 1].iter_mut().zip(&s[1..]).for_each(|(a, b)| *a += b),
                        1 => d.iter_mut().zip(s).for_each(|(a, b)| *a += b),
                        _ => d[1..].iter_mut().zip(&s[..w - 1]).for_each(|(a, b)| *a += b),
                    }
                }
            }
        }
    }
    out
}

/// Same-padded stride-1 convolution with a `kernel x kernel` filter, where
/// `kernel` is 1 or 3. `weight` is `[out, in * kernel^2]` row-major.
pub fn conv_forward(x: &Tensor, weight: &[f32], bias: &[f32], kernel: usize) -> (Tensor, ConvCache) {
    let out_c = bias.len();
    let hw = x.plane();
    let cols = match kernel {
        1 => x.data.clone(),
        3 => im2col3(x),
        _ => panic!("unsupported kernel {kernel}"),
    };
    let k = x.channels * kernel * kernel;
    let mut out = Tensor::zeros(out_c, x.height, x.width);
    for (co, &b) in bias.iter().enumerate() {
        out.data[co * hw..][..hw].fill(b);
    }
    gemm(out_c, k, hw, weight, false, &cols, false, &mut out.data, 1.0);
    (out, ConvCache { cols, in_channels: x.channels, height: x.height, width: x.width })
}

/// Accumulates into `dweight`/`dbias`, returns the input gradient.
pub fn conv_backward(
    cache: &ConvCache,
    dout: &Tensor,
    weight: &[f32],
    dweight: &mut [f32],
    dbias: &mut [f32],
    kernel: usize,
) -> Tensor {
    let out_c = dout.channels;
    let hw = dout.plane();
    let k = cache.in_channels * kernel * kernel;
    gemm(out_c, hw, k, &dout.data, false, &cache.cols, true, dweight, 1.0);
    for (co, db) in dbias.iter_mut().enumerate() {
        *db += dout.channel(co).iter().sum::<f32>();
    }
    let mut dcols = vec![0.0f32; k * hw];
    gemm(k, out_c, hw, weight, true, &dout.data, false, &mut dcols, 0.0);
    match kernel {
        1 => Tensor::from_vec(cache.in_channels, cache.height, cache.width, dcols),
        _ => col2im3(&dcols, cache.in_channels, cache.height, cache.width),
    }
}

/// Output row/col of a stride-2 3x3 transposed convolution tap, or `None`
/// when it falls outside the doubled grid.
#[inline]
fn up_index(i: usize, k: usize, out: usize) -> Option<usize> {
    let o = 2 * i + k;
    (o >= 1 && o - 1 < out).then(|| o - 1)
}

/// Stride-2 3x3 transposed convolution doubling the spatial size.
/// `weight` is `[in, out * 9]` row-major; input `(i, j)` through tap
/// `(ky, kx)` lands on output `(2i + ky - 1, 2j + kx - 1)`.
pub fn tconv_forward(x: &Tensor, weight: &[f32], bias: &[f32]) -> Tensor {
    let out_c = bias.len();
    let (h, w) = (x.height, x.width);
    let (oh, ow) = (2 * h, 2 * w);
    let hw = h * w;
    let mut cols = vec![0.0f32; out_c * 9 * hw];
    gemm(out_c * 9, x.channels, hw, weight, true, &x.data, false, &mut cols, 0.0);
    let mut out = Tensor::zeros(out_c, oh, ow);
    for co in 0..out_c {
        let dst = &mut out.data[co * oh * ow..][..oh * ow];
        dst.fill(bias[co]);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(co * 9 + ky * 3 + kx) * hw..][..hw];
                for i in 0..h {
                    let Some(oy) = up_index(i, ky, oh) else { continue };
                    for j in 0..w {
                        if let Some(ox) = up_index(j, kx, ow) {
                            dst[oy * ow + ox] += row[i * w + j];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn tconv_backward(x: &Tensor, dout: &Tensor, weight: &[f32], dweight: &mut [f32], dbias: &mut [f32]) -> Tensor {
    let out_c = dout.channels;
    let (h, w) = (x.height, x.width);
    let (oh, ow) = (dout.height, dout.width);
    let hw = h * w;
    let mut dcols = vec![0.0f32; out_c * 9 * hw];
    for co in 0..out_c {
        let src = dout.channel(co);
        dbias[co] += src.iter().sum::<f32>();
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut dcols[(co * 9 + ky * 3 + kx) * hw..][..hw];
                for i in 0..h {
                    let Some(oy) = up_index(i, ky, oh) else { continue };
                    for j in 0..w {
                        if let Some(ox) = up_index(j, kx, ow) {
                            row[i * w + j] = src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    gemm(x.channels, hw, out_c * 9, &x.data, false, &dcols, true, dweight, 1.0);
    let mut dx = Tensor::zeros(x.channels, h, w);
    gemm(x.channels, out_c * 9, hw, weight, false, &dcols, false, &mut dx.data, 0.0);
    dx
}

pub fn relu_inplace(x: &mut Tensor) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zero the gradient where the ReLU output was not positive.
pub fn relu_backward(out: &Tensor, grad: &mut Tensor) {
    for (g, &o) in grad.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Inverted-dropout multipliers: `0` with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f32, seed: u64) -> Vec<f32> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| if rng.random::<f32>() < keep { scale } else { 0.0 }).collect()
}

pub struct PoolCache {
    argmax: Vec<u32>,
    height: usize,
    width: usize,
}

/// 2x2 max pooling with stride 2. Ties keep the first element in raster order.
pub fn maxpool_forward(x: &Tensor) -> (Tensor, PoolCache) {
    let (h, w) = (x.height, x.width);
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Tensor::zeros(x.channels, ph, pw);
    let mut argmax = vec![0u32; x.channels * ph * pw];
    for c in 0..x.channels {
        let src = x.channel(c);
        for i in 0..ph {
            for j in 0..pw {
                let mut best = 2 * i * w + 2 * j;
                for idx in [2 * i * w + 2 * j + 1, (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = c * ph * pw + i * pw + j;
                out.data[o] = src[best];
                argmax[o] = best as u32;
            }
        }
    }
    (out, PoolCache { argmax, height: h, width: w })
}

pub fn maxpool_backward(cache: &PoolCache, dout: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(dout.channels, cache.height, cache.width);
    let plane_in = cache.height * cache.width;
    let plane_out = dout.plane();
    for c in 0..dout.channels {
        for o in 0..plane_out {
            let idx = c * plane_out + o;
            dx.data[c * plane_in + cache.argmax[idx] as usize] += dout.data[idx];
        }
    }
    dx
}
