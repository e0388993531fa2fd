//! Binary-mask primitives shared by click simulation, weighting and data
//! generation: disk rasterization, 4-connected boundaries and an exact
//! Euclidean distance transform.

use ndarray::Array2;

/// A binary 2D mask, `true` marks foreground.
pub type Mask = Array2<bool>;

pub fn count_foreground(mask: &Mask) -> usize {
    mask.iter().filter(|&&v| v).count()
}

pub fn dims<T>(a: &Array2<T>) -> (usize, usize) {
    let d = a.dim();
    (d.0, d.1)
}

/// Integer radius of a disk of the given pixel diameter.
pub fn disk_radius(size_px: u32) -> i64 {
    i64::from(size_px / 2)
}

/// Offsets `(dr, dc)` of a disk of diameter `size_px`: every pixel whose
/// squared distance to the center is at most `(size_px / 2)^2`.
pub fn disk_offsets(size_px: u32) -> Vec<(i64, i64)> {
    let r = disk_radius(size_px);
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Visit every in-bounds pixel of a disk centered at `(row, col)`, passing the
/// squared distance to the center.
pub fn for_each_disk_pixel(
    row: usize,
    col: usize,
    size_px: u32,
    height: usize,
    width: usize,
    mut f: impl FnMut(usize, usize, i64),
) {
    for (dr, dc) in disk_offsets(size_px) {
        let r = row as i64 + dr;
        let c = col as i64 + dc;
        if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
            f(r as usize, c as usize, dr * dr + dc * dc);
        }
    }
}

/// Foreground pixels with at least one 4-neighbour in the background.
/// Pixels outside the image are not treated as background.
pub fn boundary(mask: &Mask) -> Mask {
    let (h, w) = dims(mask);
    Array2::from_shape_fn((h, w), |(r, c)| {
        if !mask[[r, c]] {
            return false;
        }
        (r > 0 && !mask[[r - 1, c]])
            || (r + 1 < h && !mask[[r + 1, c]])
            || (c > 0 && !mask[[r, c - 1]])
            || (c + 1 < w && !mask[[r, c + 1]])
    })
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// of `seeds`. Pixels are `f64::INFINITY` when there is no seed at all.
///
/// Separable lower-envelope transform (Felzenszwalb & Huttenlocher), exact
/// for the Euclidean metric.
pub fn squared_distance_transform(seeds: &Mask) -> Array2<f64> {
    let (h, w) = dims(seeds);
    let mut out = Array2::from_shape_fn((h, w), |(r, c)| if seeds[[r, c]] { 0.0 } else { f64::INFINITY });
    let mut buf = Vec::new();
    for c in 0..w {
        buf.clear();
        buf.extend((0..h).map(|r| out[[r, c]]));
        let d = transform_1d(&buf);
        for r in 0..h {
            out[[r, c]] = d[r];
        }
    }
    for r in 0..h {
        buf.clear();
        buf.extend((0..w).map(|c| out[[r, c]]));
        let d = transform_1d(&buf);
        for c in 0..w {
            out[[r, c]] = d[c];
        }
    }
    out
}

fn transform_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![f64::INFINITY; n];
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return d;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    for &q in &sites {
        let qf = q as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < v.len() && z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
    d
}

/// Whether the foreground forms a single 8-connected component.
pub fn is_connected(mask: &Mask) -> bool {
    let (h, w) = dims(mask);
    let Some(start) = mask.indexed_iter().find(|(_, &v)| v).map(|(i, _)| i) else {
        return false;
    };
    let mut seen = Array2::from_elem((h, w), false);
    let mut stack = vec![start];
    seen[start] = true;
    let mut visited = 0usize;
    while let Some((r, c)) = stack.pop() {
        visited += 1;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    continue;
                }
                let p = (nr as usize, nc as usize);
                if mask[p] && !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
    }
    visited == count_foreground(mask)
}
