//! Simulated user clicks and the FG/BG guidance channels fed to the network.
//!
//! A click is a disk of `size_px` diameter. Its size either stays fixed or
//! follows the region size: `size = round_half_up(alpha * mask_pixels)`,
//! clamped to the policy limits.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, Mask};

/// Background clicks are drawn from this band of distances (pixels) around
/// the foreground.
pub const BG_BAND_PX: (f64, f64) = (5.0, 40.0);

pub const DEFAULT_CLICK_SIZE_PX: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    pub size_px: u32,
}

impl Click {
    pub fn new(row: usize, col: usize, polarity: Polarity, size_px: u32) -> Self {
        Click { row, col, polarity, size_px: size_px.max(1) }
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.row < height && self.col < width {
            Ok(())
        } else {
            Err(Error::OutOfBounds { row: self.row, col: self.col, height, width })
        }
    }
}

/// Ordered clicks. One interaction is one foreground plus one background click.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSet {
    pub clicks: Vec<Click>,
    pub interaction_count: usize,
}

impl ClickSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    /// Append another set, e.g. the interaction of a later correction round.
    pub fn extend(&mut self, other: ClickSet) {
        self.clicks.extend(other.clicks);
        self.interaction_count += other.interaction_count;
    }

    pub fn foreground(&self) -> impl Iterator<Item = &Click> {
        self.clicks.iter().filter(|c| c.polarity == Polarity::Foreground)
    }

    /// Number of foreground clicks.
    pub fn foreground_count(&self) -> usize {
        self.foreground().count()
    }

    /// Copy of the set with every click resized.
    pub fn with_size(&self, size_px: u32) -> ClickSet {
        ClickSet {
            clicks: self.clicks.iter().map(|c| Click { size_px: size_px.max(1), ..*c }).collect(),
            interaction_count: self.interaction_count,
        }
    }
}

/// Binary FG and BG guidance channels, same shape as the image.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMaps {
    pub fg: Array2<f32>,
    pub bg: Array2<f32>,
}

impl GuidanceMaps {
    pub fn zeros(height: usize, width: usize) -> Self {
        GuidanceMaps { fg: Array2::zeros((height, width)), bg: Array2::zeros((height, width)) }
    }

    pub fn dims(&self) -> (usize, usize) {
        raster::dims(&self.fg)
    }
}

/// Positive rational click-size ratio, written `num/den` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alpha {
    num: u64,
    den: u64,
}

impl Alpha {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {num}/{den}")));
        }
        Ok(Alpha { num, den })
    }

    pub fn one_over(den: u64) -> Self {
        Alpha { num: 1, den: den.max(1) }
    }

    pub fn numerator(self) -> u64 {
        self.num
    }

    pub fn denominator(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `alpha * count` rounded half up, computed exactly in integers.
    pub fn scale_round_half_up(self, count: u64) -> u64 {
        let n = u128::from(count) * u128::from(self.num);
        let d = u128::from(self.den);
        ((2 * n + d) / (2 * d)) as u64
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("cannot parse alpha {s:?}, expected `num/den`"));
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let d = d.trim().parse().map_err(|_| bad())?;
        Alpha::new(n, d)
    }
}

impl TryFrom<String> for Alpha {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Alpha> for String {
    fn from(a: Alpha) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    Fixed,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ClickSizePolicy {
    pub mode: SizeMode,
    pub fixed_size_px: u32,
    pub alpha: Alpha,
    pub min_size_px: u32,
    /// `None` means a quarter of the smaller image dimension, see [`ClickSizePolicy::for_image`].
    pub max_size_px: Option<u32>,
}

impl Default for ClickSizePolicy {
    fn default() -> Self {
        ClickSizePolicy {
            mode: SizeMode::Fixed,
            fixed_size_px: DEFAULT_CLICK_SIZE_PX,
            alpha: Alpha::one_over(800),
            min_size_px: 1,
            max_size_px: None,
        }
    }
}

impl ClickSizePolicy {
    pub fn fixed(size_px: u32) -> Self {
        ClickSizePolicy { mode: SizeMode::Fixed, fixed_size_px: size_px, ..Default::default() }
    }

    pub fn dynamic(alpha: Alpha) -> Self {
        ClickSizePolicy { mode: SizeMode::Dynamic, alpha, ..Default::default() }
    }

    pub fn is_dynamic(&self) -> bool {
        self.mode == SizeMode::Dynamic
    }

    /// Fill in the default upper clamp for an image of this size.
    pub fn for_image(mut self, height: usize, width: usize) -> Self {
        if self.max_size_px.is_none() {
            let quarter = (height.min(width) / 4) as u32;
            self.max_size_px = Some(quarter.max(self.min_size_px));
        }
        self
    }

    /// Size for a region of `mask_pixel_count` pixels, falling back to the
    /// fixed size when a dynamic policy meets an empty region.
    pub fn size_for(&self, mask_pixel_count: usize) -> u32 {
        match self.mode {
            SizeMode::Fixed => self.fixed_size_px.max(1),
            SizeMode::Dynamic => compute_click_size(self.alpha, mask_pixel_count, self)
                .unwrap_or(self.fixed_size_px.max(1)),
        }
    }
}

/// Dynamic click diameter: `clamp(round_half_up(alpha * mask_pixel_count), min, max)`.
pub fn compute_click_size(alpha: Alpha, mask_pixel_count: usize, policy: &ClickSizePolicy) -> Result<u32> {
    if mask_pixel_count == 0 {
        return Err(Error::EmptyMask);
    }
    let raw = alpha.scale_round_half_up(mask_pixel_count as u64);
    let min = u64::from(policy.min_size_px.max(1));
    let max = policy.max_size_px.map_or(u64::MAX, u64::from).max(min);
    Ok(raw.clamp(min, max) as u32)
}

/// Simulate one interaction (a foreground and a background click) from the
/// ground truth.
///
/// Without `prior_prediction` the FG center is drawn uniformly from the
/// foreground eroded by the click radius and the BG center from the
/// background band [`BG_BAND_PX`] around the foreground. With a prior
/// prediction the centers come from its false negatives and false positives
/// respectively, and from the unconditional rule when there are none. Every
/// sampling set falls back to a wider one when empty.
pub fn simulate_interaction(
    gt_mask: &Mask,
    policy: &ClickSizePolicy,
    rng_seed: u64,
    prior_prediction: Option<&Mask>,
) -> Result<ClickSet> {
    let geo = Geometry::new(gt_mask, policy, prior_prediction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let errors = |want_gt: bool| match prior_prediction {
        Some(prior) => pixels_where(gt_mask, |i, g| g == want_gt && prior[i] != want_gt),
        None => Vec::new(),
    };

    let false_negatives = errors(true);
    let fg_center = if !false_negatives.is_empty() {
        pick(&mut rng, &false_negatives)
    } else {
        let eroded = pixels_where(gt_mask, |i, g| g && geo.to_bg[i] > geo.r2);
        if eroded.is_empty() {
            pick(&mut rng, &pixels_where(gt_mask, |_, g| g))
        } else {
            pick(&mut rng, &eroded)
        }
    };

    let false_positives = errors(false);
    let bg_center = if !false_positives.is_empty() {
        pick(&mut rng, &false_positives)
    } else {
        let (lo, hi) = (BG_BAND_PX.0 * BG_BAND_PX.0, BG_BAND_PX.1 * BG_BAND_PX.1);
        let band = pixels_where(gt_mask, |i, g| !g && geo.to_fg[i] >= lo && geo.to_fg[i] <= hi);
        if band.is_empty() {
            pick(&mut rng, &pixels_where(gt_mask, |_, g| !g))
        } else {
            pick(&mut rng, &band)
        }
    };

    Ok(ClickSet {
        clicks: vec![
            Click::new(fg_center.0, fg_center.1, Polarity::Foreground, geo.size),
            Click::new(bg_center.0, bg_center.1, Polarity::Background, geo.size),
        ],
        interaction_count: 1,
    })
}

/// Correction clicks for a later round: a FG click on a false negative and
/// a BG click on a false positive of `prediction`, each restricted to error
/// pixels whose whole click disk lies on the correct side of the ground
/// truth. A polarity without such a pixel gets no click, so the set is
/// empty once only thin rims remain wrong.
pub fn simulate_correction(gt_mask: &Mask, policy: &ClickSizePolicy, rng_seed: u64, prediction: &Mask) -> Result<ClickSet> {
    let geo = Geometry::new(gt_mask, policy, Some(prediction))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut clicks = Vec::with_capacity(2);
    for (want_gt, polarity) in [(true, Polarity::Foreground), (false, Polarity::Background)] {
        let clearance = if want_gt { &geo.to_bg } else { &geo.to_fg };
        let candidates = pixels_where(gt_mask, |i, g| g == want_gt && prediction[i] != want_gt && clearance[i] > geo.r2);
        if !candidates.is_empty() {
            let (row, col) = pick(&mut rng, &candidates);
            clicks.push(Click::new(row, col, polarity, geo.size));
        }
    }
    let interaction_count = usize::from(!clicks.is_empty());
    Ok(ClickSet { clicks, interaction_count })
}

/// Click size and distance fields shared by the samplers.
struct Geometry {
    size: u32,
    r2: f64,
    to_bg: Array2<f64>,
    to_fg: Array2<f64>,
}

impl Geometry {
    fn new(gt_mask: &Mask, policy: &ClickSizePolicy, prior: Option<&Mask>) -> Result<Self> {
        let (h, w) = raster::dims(gt_mask);
        if let Some(prior) = prior {
            crate::error::ensure_shape((h, w), raster::dims(prior))?;
        }
        let fg_count = raster::count_foreground(gt_mask);
        if fg_count == 0 {
            return Err(Error::EmptyMask);
        }
        if fg_count == h * w {
            return Err(Error::AllForeground);
        }
        let size = policy.for_image(h, w).size_for(fg_count);
        Ok(Geometry {
            size,
            r2: (raster::disk_radius(size) as f64).powi(2),
            to_bg: raster::squared_distance_transform(&gt_mask.mapv(|v| !v)),
            to_fg: raster::squared_distance_transform(gt_mask),
        })
    }
}

fn pixels_where(mask: &Mask, keep: impl Fn((usize, usize), bool) -> bool) -> Vec<(usize, usize)> {
    mask.indexed_iter().filter(|&(i, &v)| keep(i, v)).map(|(i, _)| i).collect()
}

fn pick(rng: &mut ChaCha8Rng, candidates: &[(usize, usize)]) -> (usize, usize) {
    candidates[rng.random_range(0..candidates.len())]
}

/// Rasterize clicks into FG/BG channels. Overlapping disks union to 1.0.
pub fn render_guidance(clicks: &ClickSet, height: usize, width: usize) -> Result<GuidanceMaps> {
    let mut maps = GuidanceMaps::zeros(height, width);
    for click in &clicks.clicks {
        click.check_bounds(height, width)?;
        let target = match click.polarity {
            Polarity::Foreground => &mut maps.fg,
            Polarity::Background => &mut maps.bg,
        };
        raster::for_each_disk_pixel(click.row, click.col, click.size_px, height, width, |r, c, _| {
            target[[r, c]] = 1.0;
        });
    }
    Ok(maps)
}

/// Click size at test time from the region size of a first prediction.
/// `EmptyMask` tells the caller to keep the fixed size.
pub fn estimate_test_time_size(initial_prediction: &Mask, policy: &ClickSizePolicy) -> Result<u32> {
    if !policy.is_dynamic() {
        return Err(Error::InvalidParams("test-time size estimation needs a dynamic policy".into()));
    }
    let (h, w) = raster::dims(initial_prediction);
    let policy = policy.for_image(h, w);
    compute_click_size(policy.alpha, raster::count_foreground(initial_prediction), &policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk_mask(h: usize, w: usize, center: (f64, f64), radius: f64) -> Mask {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let dr = r as f64 - center.0;
            let dc = c as f64 - center.1;
            dr * dr + dc * dc <= radius * radius
        })
    }

    fn unclamped() -> ClickSizePolicy {
        ClickSizePolicy { max_size_px: Some(u32::MAX), ..ClickSizePolicy::dynamic(Alpha::one_over(500)) }
    }

    #[test]
    fn click_size_examples() {
        let p = unclamped();
        assert_eq!(compute_click_size(Alpha::one_over(500), 5000, &p).unwrap(), 10);
        assert_eq!(compute_click_size(Alpha::one_over(800), 800, &p).unwrap(), 1);
        assert_eq!(compute_click_size(Alpha::one_over(800), 200, &p).unwrap(), 1);
        assert!(matches!(compute_click_size(Alpha::one_over(800), 0, &p), Err(Error::EmptyMask)));
    }

    #[test]
    fn click_size_rounds_half_up() {
        let p = unclamped();
        // 1250 / 500 = 2.5
        assert_eq!(compute_click_size(Alpha::one_over(500), 1250, &p).unwrap(), 3);
        assert_eq!(compute_click_size(Alpha::one_over(500), 1249, &p).unwrap(), 2);
    }

    #[test]
    fn alpha_parses() {
        let a: Alpha = "1/800".parse().unwrap();
        assert_eq!(a, Alpha::one_over(800));
        assert_eq!(a.to_string(), "1/800");
        assert!("0/3".parse::<Alpha>().is_err());
        assert!("abc".parse::<Alpha>().is_err());
        let json = serde_json::to_string(&ClickSizePolicy::dynamic(a)).unwrap();
        assert!(json.contains("\"1/800\""));
        let back: ClickSizePolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back.alpha, a);
    }

    #[test]
    fn simulate_on_centered_disk() {
        let gt = disk_mask(64, 64, (32.0, 32.0), 10.0);
        let set = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), 0, None).unwrap();
        assert_eq!(set.clicks.len(), 2);
        assert_eq!(set.interaction_count, 1);
        let fg = set.clicks[0];
        let bg = set.clicks[1];
        assert_eq!(fg.polarity, Polarity::Foreground);
        assert_eq!(bg.polarity, Polarity::Background);
        assert!(gt[[fg.row, fg.col]]);
        assert!(!gt[[bg.row, bg.col]]);
        assert_eq!((fg.size_px, bg.size_px), (5, 5));
        // the whole FG disk fits in the foreground
        raster::for_each_disk_pixel(fg.row, fg.col, 5, 64, 64, |r, c, _| assert!(gt[[r, c]]));
        // frozen seeded draw
        let again = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), 0, None).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn dynamic_size_uses_gt_area() {
        // 50 x 100 rectangle = 5000 pixels
        let gt = Array2::from_shape_fn((128, 128), |(r, c)| (10..60).contains(&r) && (10..110).contains(&c));
        let set = simulate_interaction(&gt, &ClickSizePolicy::dynamic(Alpha::one_over(500)), 3, None).unwrap();
        assert!(set.clicks.iter().all(|c| c.size_px == 10));
    }

    #[test]
    fn no_errors_falls_back() {
        let gt = disk_mask(64, 64, (20.0, 40.0), 8.0);
        let set = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), 7, Some(&gt)).unwrap();
        assert_eq!(set.clicks.len(), 2);
        assert!(gt[[set.clicks[0].row, set.clicks[0].col]]);
        assert!(!gt[[set.clicks[1].row, set.clicks[1].col]]);
    }

    #[test]
    fn error_regions_drive_later_clicks() {
        let gt = disk_mask(64, 64, (32.0, 32.0), 10.0);
        // prediction: left half of the disk plus a spurious blob
        let mut pred = Array2::from_shape_fn((64, 64), |(r, c)| gt[[r, c]] && c < 32);
        pred[[5, 5]] = true;
        for seed in 0..50 {
            let set = simulate_interaction(&gt, &ClickSizePolicy::fixed(3), seed, Some(&pred)).unwrap();
            let (fg, bg) = (set.clicks[0], set.clicks[1]);
            assert!(gt[[fg.row, fg.col]] && !pred[[fg.row, fg.col]]);
            assert_eq!((bg.row, bg.col), (5, 5));
        }
        let exact = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), 0, Some(&gt)).unwrap();
        assert_eq!((exact.len(), exact.interaction_count), (2, 1));
    }

    #[test]
    fn corrections_keep_disks_on_the_right_side() {
        let gt = disk_mask(64, 64, (32.0, 32.0), 10.0);
        let mut pred = Array2::from_shape_fn((64, 64), |(r, c)| gt[[r, c]] && c < 32);
        for r in 3..10 {
            for c in 3..10 {
                pred[[r, c]] = true;
            }
        }
        for seed in 0..50 {
            let set = simulate_correction(&gt, &ClickSizePolicy::fixed(3), seed, &pred).unwrap();
            assert_eq!((set.len(), set.interaction_count), (2, 1));
            for click in &set.clicks {
                let want = click.polarity == Polarity::Foreground;
                assert_ne!(pred[[click.row, click.col]], want);
                let fits = raster::disk_offsets(3)
                    .iter()
                    .all(|&(dr, dc)| gt[[(click.row as i64 + dr) as usize, (click.col as i64 + dc) as usize]] == want);
                assert!(fits, "{click:?}");
            }
        }
    }

    #[test]
    fn thin_error_rims_get_no_correction() {
        let gt = disk_mask(64, 64, (32.0, 32.0), 10.0);
        let rim = raster::boundary(&gt);
        let pred = Array2::from_shape_fn((64, 64), |p| gt[p] && !rim[p]);
        let set = simulate_correction(&gt, &ClickSizePolicy::fixed(5), 3, &pred).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.interaction_count, 0);
        assert!(simulate_correction(&gt, &ClickSizePolicy::fixed(5), 3, &gt).unwrap().is_empty());
    }

    #[test]
    fn degenerate_masks() {
        let empty = Array2::from_elem((8, 8), false);
        assert!(matches!(
            simulate_interaction(&empty, &ClickSizePolicy::default(), 0, None),
            Err(Error::EmptyMask)
        ));
        let full = Array2::from_elem((8, 8), true);
        assert!(matches!(
            simulate_interaction(&full, &ClickSizePolicy::default(), 0, None),
            Err(Error::AllForeground)
        ));
    }

    #[test]
    fn tiny_region_falls_back_to_any_foreground() {
        let mut gt = Array2::from_elem((16, 16), false);
        gt[[3, 4]] = true;
        let set = simulate_interaction(&gt, &ClickSizePolicy::fixed(10), 1, None).unwrap();
        assert_eq!((set.clicks[0].row, set.clicks[0].col), (3, 4));
    }

    #[test]
    fn render_examples() {
        let empty = render_guidance(&ClickSet::new(), 64, 64).unwrap();
        assert!(empty.fg.iter().chain(empty.bg.iter()).all(|&v| v == 0.0));

        let one = ClickSet { clicks: vec![Click::new(32, 32, Polarity::Foreground, 1)], interaction_count: 0 };
        let maps = render_guidance(&one, 64, 64).unwrap();
        assert_eq!(maps.fg.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(maps.bg.iter().all(|&v| v == 0.0));

        let five = one.with_size(5);
        let maps = render_guidance(&five, 64, 64).unwrap();
        // brute-force scan: pixels with squared distance <= (5/2)^2 in integers
        let expected = (0..64usize)
            .flat_map(|r| (0..64usize).map(move |c| (r, c)))
            .filter(|&(r, c)| {
                let (dr, dc) = (r as i64 - 32, c as i64 - 32);
                dr * dr + dc * dc <= 2 * 2
            })
            .count();
        assert_eq!(expected, 13);
        assert_eq!(maps.fg.iter().filter(|&&v| v != 0.0).count(), expected);
    }

    #[test]
    fn render_rejects_out_of_bounds() {
        let set = ClickSet { clicks: vec![Click::new(64, 0, Polarity::Background, 3)], interaction_count: 0 };
        assert!(matches!(render_guidance(&set, 64, 64), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn overlapping_disks_union() {
        let set = ClickSet {
            clicks: vec![
                Click::new(10, 10, Polarity::Foreground, 5),
                Click::new(11, 10, Polarity::Foreground, 5),
                Click::new(40, 40, Polarity::Background, 3),
            ],
            interaction_count: 0,
        };
        let maps = render_guidance(&set, 64, 64).unwrap();
        assert!(maps.fg.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(maps.bg.iter().filter(|&&v| v == 1.0).count(), 5);
        assert_eq!(maps.fg[[40, 40]], 0.0);
    }

    #[test]
    fn test_time_size_examples() {
        let policy = ClickSizePolicy::dynamic(Alpha::one_over(800));
        let pred = Array2::from_shape_fn((128, 128), |(r, c)| r < 40 && c < 100);
        assert_eq!(estimate_test_time_size(&pred, &policy).unwrap(), 5);
        let zero = Array2::from_elem((64, 64), false);
        assert!(matches!(estimate_test_time_size(&zero, &policy), Err(Error::EmptyMask)));
        assert_eq!(policy.size_for(0), 5);
        let full = Array2::from_elem((512, 512), true);
        let p500 = ClickSizePolicy::dynamic(Alpha::one_over(500));
        assert_eq!(estimate_test_time_size(&full, &p500).unwrap(), 128);
        assert!(estimate_test_time_size(&pred, &ClickSizePolicy::fixed(5)).is_err());
    }

    proptest! {
        #[test]
        fn click_size_monotone(a in 0usize..200_000, b in 0usize..200_000, den in 1u64..2000) {
            let p = ClickSizePolicy::dynamic(Alpha::one_over(den)).for_image(512, 512);
            let (lo, hi) = (a.min(b).max(1), a.max(b).max(1));
            let s_lo = compute_click_size(p.alpha, lo, &p).unwrap();
            let s_hi = compute_click_size(p.alpha, hi, &p).unwrap();
            prop_assert!(s_lo <= s_hi);
            prop_assert!(s_lo >= 1 && s_hi <= 128);
        }

        #[test]
        fn interior_disk_symmetric(size in 1u32..16) {
            let set = ClickSet { clicks: vec![Click::new(20, 20, Polarity::Foreground, size)], interaction_count: 0 };
            let m = render_guidance(&set, 41, 41).unwrap().fg;
            for r in 0..41 {
                for c in 0..41 {
                    prop_assert_eq!(m[[r, c]], m[[40 - r, c]]);
                    prop_assert_eq!(m[[r, c]], m[[r, 40 - c]]);
                }
            }
        }

        #[test]
        fn simulation_contract(cr in 12.0f64..52.0, cc in 12.0f64..52.0, rad in 2.0f64..12.0, seed in any::<u64>()) {
            let gt = disk_mask(64, 64, (cr, cc), rad);
            prop_assume!(raster::count_foreground(&gt) > 0);
            let a = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), seed, None).unwrap();
            let b = simulate_interaction(&gt, &ClickSizePolicy::fixed(5), seed, None).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(gt[[a.clicks[0].row, a.clicks[0].col]]);
            prop_assert!(!gt[[a.clicks[1].row, a.clicks[1].col]]);
            let maps = render_guidance(&a, 64, 64).unwrap();
            prop_assert_eq!(maps.dims(), (64, 64));
        }
    }
}
