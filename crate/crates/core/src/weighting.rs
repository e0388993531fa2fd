//! Per-pixel loss weights: a gaussian emphasis on the region boundary fused
//! with high-certainty foreground click regions.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::guidance::{ClickSet, Polarity};
use crate::raster::{self, Mask};

/// Highest weight any pixel can receive.
pub const PEAK_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickWeightMode {
    /// Flat peak weight over the whole click disk.
    EqualWeight,
    /// Gaussian profile peaking at the click center, sigma = diameter / 4.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub sigma_px: f64,
    pub peak_weight: f64,
    pub click_weight_mode: ClickWeightMode,
    pub floor_weight: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            sigma_px: 5.0,
            peak_weight: PEAK_WEIGHT,
            click_weight_mode: ClickWeightMode::EqualWeight,
            floor_weight: 0.0,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px > 0.0) {
            return Err(Error::InvalidParams(format!("sigma_px must be positive, got {}", self.sigma_px)));
        }
        if self.peak_weight != PEAK_WEIGHT {
            return Err(Error::InvalidParams(format!("peak_weight is fixed at {PEAK_WEIGHT}")));
        }
        if !(0.0..PEAK_WEIGHT).contains(&self.floor_weight) {
            return Err(Error::InvalidParams(format!("floor_weight {} outside [0, 10)", self.floor_weight)));
        }
        Ok(())
    }

    /// Stable key of the parameters the boundary map depends on.
    pub fn cache_key(&self) -> String {
        format!("s{:016x}-f{:016x}", self.sigma_px.to_bits(), self.floor_weight.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub weights: Array2<f32>,
}

impl WeightMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        WeightMap { weights: Array2::zeros((height, width)) }
    }

    pub fn uniform(height: usize, width: usize, value: f32) -> Self {
        WeightMap { weights: Array2::from_elem((height, width), value) }
    }

    pub fn dims(&self) -> (usize, usize) {
        raster::dims(&self.weights)
    }

    pub fn peak(&self) -> f32 {
        self.weights.iter().copied().fold(0.0, f32::max)
    }

    const MAGIC: &'static [u8; 8] = b"ISEGWMAP";
    const VERSION: u32 = 1;

    /// Binary container: 8-byte magic `ISEGWMAP`, then little-endian `u32`
    /// version, height and width, then `height * width` row-major `f32`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let (h, wd) = self.dims();
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(h as u32).to_le_bytes())?;
        w.write_all(&(wd as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(h * wd * 4);
        for v in self.weights.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a weight map file".into()));
        }
        let mut header = [0u8; 12];
        r.read_exact(&mut header)?;
        let word = |i: usize| u32::from_le_bytes([header[i], header[i + 1], header[i + 2], header[i + 3]]);
        let version = word(0);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported weight map version {version}")));
        }
        let (h, w) = (word(4) as usize, word(8) as usize);
        let mut data = vec![0u8; h * w * 4];
        r.read_exact(&mut data)?;
        let values = data.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let weights = Array2::from_shape_vec((h, w), values).map_err(|e| Error::Format(e.to_string()))?;
        Ok(WeightMap { weights })
    }
}

/// `max(floor, 10 * exp(-D^2 / (2 sigma^2)))`, where `D` is the distance to
/// the nearest boundary pixel (foreground pixels 4-adjacent to background).
/// Decays on both sides of the boundary.
pub fn gaussian_boundary_map(gt_mask: &Mask, config: &WeightConfig) -> Result<WeightMap> {
    config.validate()?;
    let edge = raster::boundary(gt_mask);
    if raster::count_foreground(&edge) == 0 {
        return Err(Error::NoBoundary);
    }
    let d2 = raster::squared_distance_transform(&edge);
    let two_sigma2 = 2.0 * config.sigma_px * config.sigma_px;
    let weights = d2.mapv(|d2| (PEAK_WEIGHT * (-d2 / two_sigma2).exp()).max(config.floor_weight) as f32);
    Ok(WeightMap { weights })
}

/// Weights on the foreground click disks. Background clicks are ignored.
/// Overlapping disks keep the pointwise maximum.
pub fn click_weight_map(clicks: &ClickSet, height: usize, width: usize, config: &WeightConfig) -> Result<WeightMap> {
    let mut map = WeightMap::zeros(height, width);
    for click in clicks.clicks.iter().filter(|c| c.polarity == Polarity::Foreground) {
        click.check_bounds(height, width)?;
        let sigma = f64::from(click.size_px) / 4.0;
        raster::for_each_disk_pixel(click.row, click.col, click.size_px, height, width, |r, c, d2| {
            let v = match config.click_weight_mode {
                ClickWeightMode::EqualWeight => PEAK_WEIGHT,
                ClickWeightMode::Gaussian => PEAK_WEIGHT * (-(d2 as f64) / (2.0 * sigma * sigma)).exp(),
            } as f32;
            let cell = &mut map.weights[[r, c]];
            *cell = cell.max(v);
        });
    }
    Ok(map)
}

/// Pointwise maximum: click regions override the boundary emphasis.
pub fn fuse_weight_maps(boundary: &WeightMap, clicks: &WeightMap) -> Result<WeightMap> {
    ensure_shape(boundary.dims(), clicks.dims())?;
    let mut weights = boundary.weights.clone();
    weights.zip_mut_with(&clicks.weights, |a, &b| *a = a.max(b));
    Ok(WeightMap { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::Click;
    use proptest::prelude::*;

    fn square(h: usize, w: usize, lo: usize, hi: usize) -> Mask {
        Array2::from_shape_fn((h, w), |(r, c)| (lo..hi).contains(&r) && (lo..hi).contains(&c))
    }

    fn fg(row: usize, col: usize, size: u32) -> Click {
        Click::new(row, col, Polarity::Foreground, size)
    }

    #[test]
    fn boundary_peak_and_decay() {
        let gt = square(64, 64, 10, 54);
        let cfg = WeightConfig::default();
        let map = gaussian_boundary_map(&gt, &cfg).unwrap();
        let edge = raster::boundary(&gt);
        for ((i, &e), &v) in edge.indexed_iter().zip(map.weights.iter()) {
            if e {
                assert_eq!(v, 10.0, "boundary pixel {i:?}");
            }
        }
        // (10, 30) is on the top edge; (25, 30) lies 15 px = 3 sigma below it.
        assert!((f64::from(map.weights[[25, 30]]) - 10.0 * (-4.5f64).exp()).abs() < 1e-6);
        assert!((f64::from(map.weights[[25, 30]]) - 0.1111).abs() < 1e-4);
        // outside as well as inside
        assert!((f64::from(map.weights[[0, 30]]) - 10.0 * (-100.0f64 / 50.0).exp()).abs() < 1e-6);
    }

    #[test]
    fn floor_applies() {
        let gt = square(64, 64, 10, 54);
        let cfg = WeightConfig { floor_weight: 0.5, ..Default::default() };
        let map = gaussian_boundary_map(&gt, &cfg).unwrap();
        assert_eq!(map.weights[[32, 32]], 0.5);
    }

    #[test]
    fn no_boundary() {
        let cfg = WeightConfig::default();
        assert!(matches!(gaussian_boundary_map(&Array2::from_elem((8, 8), true), &cfg), Err(Error::NoBoundary)));
        assert!(matches!(gaussian_boundary_map(&Array2::from_elem((8, 8), false), &cfg), Err(Error::NoBoundary)));
    }

    #[test]
    fn invalid_config() {
        let gt = square(16, 16, 4, 12);
        for cfg in [
            WeightConfig { sigma_px: 0.0, ..Default::default() },
            WeightConfig { floor_weight: 10.0, ..Default::default() },
            WeightConfig { peak_weight: 5.0, ..Default::default() },
        ] {
            assert!(matches!(gaussian_boundary_map(&gt, &cfg), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn click_maps() {
        let cfg = WeightConfig::default();
        let none = click_weight_map(&ClickSet::new(), 32, 32, &cfg).unwrap();
        assert!(none.weights.iter().all(|&v| v == 0.0));

        let set = ClickSet { clicks: vec![fg(16, 16, 5)], interaction_count: 0 };
        let ew = click_weight_map(&set, 32, 32, &cfg).unwrap();
        assert_eq!(ew.weights.iter().filter(|&&v| v == 10.0).count(), 13);
        assert_eq!(ew.weights.iter().filter(|&&v| v != 0.0).count(), 13);

        let g_cfg = WeightConfig { click_weight_mode: ClickWeightMode::Gaussian, ..Default::default() };
        let set = ClickSet { clicks: vec![fg(16, 16, 4)], interaction_count: 0 };
        let g = click_weight_map(&set, 32, 32, &g_cfg).unwrap();
        assert_eq!(g.weights[[16, 16]], 10.0);
        // edge pixel at r = size / 2 = 2
        assert!((f64::from(g.weights[[18, 16]]) - 10.0 * (-2.0f64).exp()).abs() < 1e-5);
        assert!((f64::from(g.weights[[18, 16]]) - 1.353).abs() < 1e-3);
        assert_eq!(g.weights[[19, 16]], 0.0);
    }

    #[test]
    fn background_clicks_carry_no_weight() {
        let set = ClickSet { clicks: vec![Click::new(3, 3, Polarity::Background, 5)], interaction_count: 1 };
        let m = click_weight_map(&set, 16, 16, &WeightConfig::default()).unwrap();
        assert!(m.weights.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fusion_examples() {
        let mut a = WeightMap::zeros(4, 4);
        let mut b = WeightMap::zeros(4, 4);
        a.weights[[0, 0]] = 4.0;
        b.weights[[0, 0]] = 10.0;
        b.weights[[3, 3]] = 2.0;
        let f = fuse_weight_maps(&a, &b).unwrap();
        assert_eq!(f.weights[[0, 0]], 10.0);
        assert_eq!(f.weights[[3, 3]], 2.0);
        assert_eq!(fuse_weight_maps(&a, &WeightMap::zeros(4, 4)).unwrap(), a);
        assert!(matches!(fuse_weight_maps(&a, &WeightMap::zeros(4, 5)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn container_round_trip() {
        let gt = square(20, 24, 5, 15);
        let map = gaussian_boundary_map(&gt, &WeightConfig::default()).unwrap();
        let mut buf = Vec::new();
        map.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 12 + 20 * 24 * 4);
        assert_eq!(&buf[..8], b"ISEGWMAP");
        let back = WeightMap::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, map);
        assert!(WeightMap::read_from(&b"garbage-bytes-here"[..]).is_err());
    }

    fn arb_map() -> impl Strategy<Value = WeightMap> {
        proptest::collection::vec(0.0f32..=10.0, 36)
            .prop_map(|v| WeightMap { weights: Array2::from_shape_vec((6, 6), v).unwrap() })
    }

    proptest! {
        #[test]
        fn fusion_is_a_semilattice(a in arb_map(), b in arb_map(), c in arb_map()) {
            prop_assert_eq!(fuse_weight_maps(&a, &a).unwrap(), a.clone());
            prop_assert_eq!(fuse_weight_maps(&a, &b).unwrap(), fuse_weight_maps(&b, &a).unwrap());
            let l = fuse_weight_maps(&fuse_weight_maps(&a, &b).unwrap(), &c).unwrap();
            let r = fuse_weight_maps(&a, &fuse_weight_maps(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(&l, &r);
            prop_assert!(l.weights.iter().all(|&v| (0.0..=10.0).contains(&v)));
        }

        #[test]
        fn clicks_dominate_and_peak_on_boundary(
            lo in 4usize..14, size in 6usize..14, row in 0usize..32, col in 0usize..32, csize in 1u32..9, sigma in 1.0f64..8.0,
        ) {
            let hi = (lo + size).min(30);
            let gt = square(32, 32, lo, hi);
            let cfg = WeightConfig { sigma_px: sigma, ..Default::default() };
            let boundary = gaussian_boundary_map(&gt, &cfg).unwrap();
            let edge = raster::boundary(&gt);
            let max = boundary.peak();
            prop_assert_eq!(max, 10.0);
            for (i, &v) in boundary.weights.indexed_iter() {
                if v == max { prop_assert!(edge[i]); }
            }
            // nonincreasing along a ray leaving the top edge upwards
            for r in 1..=lo {
                prop_assert!(boundary.weights[[r - 1, lo + 1]] <= boundary.weights[[r, lo + 1]]);
            }
            let set = ClickSet { clicks: vec![fg(row, col, csize)], interaction_count: 0 };
            let clicks = click_weight_map(&set, 32, 32, &cfg).unwrap();
            let fused = fuse_weight_maps(&boundary, &clicks).unwrap();
            for (i, &c) in clicks.weights.indexed_iter() {
                if c > 0.0 { prop_assert_eq!(fused.weights[i], 10.0); }
            }
        }
    }
}
