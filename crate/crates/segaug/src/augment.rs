//! Segment-level transforms: color change, rotation, removal.
//!
//! A seeded plan selects segments (never the background), then draws one
//! Bernoulli(p) decision per (segment, transform) pair. Every decision is
//! written to an [`AugmentationRecord`] so a run can be audited or replayed.
//! `augment_image` is a pure function of `(image, config)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Color, RasterImage};
use crate::seed::{self, draw_without_replacement};
use crate::segmentation::{segment_image, Connectivity, SegmentMap};

/// How many segments to select for augmentation.
///
/// The fractional policies resolve against the eligible count `L` (segments
/// that are not the background and meet the area threshold), with a floor of
/// one so a sparse logo still gets augmented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentCountPolicy {
    Fixed(usize),
    ThirdOfEligible,
    HalfOfEligible,
}

/// The three segment transforms, in their fixed application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    ColorChange,
    Rotation,
    Removal,
}

/// Application order when several transforms hit the same segment: recolor
/// first, then rotate, then remove, all planned against the original map.
pub const TRANSFORM_ORDER: [TransformKind; 3] = [
    TransformKind::ColorChange,
    TransformKind::Rotation,
    TransformKind::Removal,
];

/// The stochastic augmentation plan.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    pub n_policy: SegmentCountPolicy,
    /// Per-(segment, transform) application probability.
    pub p: f64,
    /// Enabled transforms; must be non-empty.
    pub transforms: Vec<TransformKind>,
    pub seed: u64,
    /// Closed interval of rotation angles in degrees, within [-180, 180].
    pub rotation_range_deg: (f64, f64),
    /// Segments below this area are ineligible for selection.
    pub min_area: u32,
    /// Channel bits dropped before labeling.
    pub drop_bits: u8,
    pub connectivity: Connectivity,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            n_policy: SegmentCountPolicy::ThirdOfEligible,
            p: 0.5,
            transforms: vec![TransformKind::ColorChange],
            seed: 0,
            rotation_range_deg: (-90.0, 90.0),
            min_area: 4,
            drop_bits: 3,
            connectivity: Connectivity::Eight,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(AugmentError::InvalidConfig(format!(
                "p must be in [0, 1], got {}",
                self.p
            )));
        }
        if self.transforms.is_empty() {
            return Err(AugmentError::InvalidConfig(
                "at least one transform must be enabled".into(),
            ));
        }
        let (lo, hi) = self.rotation_range_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= -180.0 && hi <= 180.0) {
            return Err(AugmentError::InvalidConfig(format!(
                "rotation range [{lo}, {hi}] must lie within [-180, 180]"
            )));
        }
        if self.drop_bits > 7 {
            return Err(AugmentError::InvalidConfig(format!(
                "drop_bits must be in [0, 7], got {}",
                self.drop_bits
            )));
        }
        Ok(())
    }
}

/// Drawn parameters for an applied transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformParams {
    Color { color: [u8; 3] },
    Angle { angle_deg: f64 },
}

/// One (segment, transform) decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub segment_id: u32,
    pub transform: TransformKind,
    pub params: Option<TransformParams>,
    pub applied: bool,
}

/// Audit log of one augmentation run: which segments were considered for
/// which transforms and what was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRecord {
    /// Source image identifier; filled in by the batch driver.
    pub source: String,
    pub seed: u64,
    pub decisions: Vec<Decision>,
}

/// One line of the newline-delimited augmentation manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub src: String,
    pub dst: String,
    pub seed: u64,
    /// Generator algorithm identifier ([`seed::RNG_ALGORITHM`]).
    pub rng: String,
    pub decisions: Vec<Decision>,
}

impl ManifestEntry {
    pub fn new(src: String, dst: String, record: &AugmentationRecord) -> Self {
        Self {
            src,
            dst,
            seed: record.seed,
            rng: seed::RNG_ALGORITHM.to_string(),
            decisions: record.decisions.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("unknown segment id {0}")]
    UnknownSegment(u32),
    #[error("transform refused for the background segment (id {0})")]
    BackgroundTarget(u32),
    #[error("refusing to remove the largest eligible segment (id {0})")]
    RemoveLargest(u32),
    #[error("segment map is {map_width}x{map_height} but image is {width}x{height}")]
    DimensionMismatch {
        map_width: u32,
        map_height: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

fn check_compatible(
    image: &RasterImage,
    map: &SegmentMap,
    id: u32,
) -> Result<(), AugmentError> {
    if map.width() != image.width() || map.height() != image.height() {
        return Err(AugmentError::DimensionMismatch {
            map_width: map.width(),
            map_height: map.height(),
            width: image.width(),
            height: image.height(),
        });
    }
    if map.segment(id).is_none() {
        return Err(AugmentError::UnknownSegment(id));
    }
    Ok(())
}

/// Ids eligible for augmentation: everything except the background and
/// segments below the area threshold, in ascending id order.
fn eligible_ids(map: &SegmentMap, min_area: u32) -> Vec<u32> {
    map.segments()
        .iter()
        .filter(|s| s.id != map.background_id() && s.area >= min_area)
        .map(|s| s.id)
        .collect()
}

/// The largest non-background segment (ties to the lower id); segment
/// removal refuses this target so a logo never loses its main body.
fn largest_foreground(map: &SegmentMap) -> Option<u32> {
    map.segments()
        .iter()
        .filter(|s| s.id != map.background_id())
        .max_by_key(|s| (s.area, std::cmp::Reverse(s.id)))
        .map(|s| s.id)
}

/// Draws `n` distinct eligible segment ids uniformly without replacement,
/// where `n` resolves per the config policy against the eligible count.
/// Returns fewer (possibly zero) ids when the eligible set is small.
pub fn select_segments(
    map: &SegmentMap,
    config: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let eligible = eligible_ids(map, config.min_area);
    let n = match config.n_policy {
        SegmentCountPolicy::Fixed(k) => k,
        SegmentCountPolicy::ThirdOfEligible => 1.max(eligible.len() / 3),
        SegmentCountPolicy::HalfOfEligible => 1.max(eligible.len() / 2),
    };
    draw_without_replacement(&eligible, n, rng)
}

/// Sets every pixel of segment `id` to `new_color`; all other pixels are
/// bit-identical to the input.
pub fn color_change(
    image: &RasterImage,
    map: &SegmentMap,
    id: u32,
    new_color: Color,
) -> Result<RasterImage, AugmentError> {
    check_compatible(image, map, id)?;
    let mut out = image.clone();
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.label_at(x, y) == id {
                out.set(x, y, new_color);
            }
        }
    }
    Ok(out)
}

/// Fills segment `id` with the background segment's mean color. Refuses the
/// background itself and the largest non-background segment.
pub fn remove_segment(
    image: &RasterImage,
    map: &SegmentMap,
    id: u32,
) -> Result<RasterImage, AugmentError> {
    check_compatible(image, map, id)?;
    if id == map.background_id() {
        return Err(AugmentError::BackgroundTarget(id));
    }
    if largest_foreground(map) == Some(id) {
        return Err(AugmentError::RemoveLargest(id));
    }
    let fill = map
        .segment(map.background_id())
        .expect("background id always resolves")
        .mean_color;
    color_change(image, map, id, fill)
}

/// Rotates segment `id` about its centroid by `angle_deg`:
///
/// 1. erase the segment (fill with the background mean color),
/// 2. inverse-map the rotated mask with nearest-neighbor sampling,
/// 3. overlay the rotated pixels wherever they land inside the canvas.
///
/// Positive angles turn clockwise on screen (the y axis points down).
/// Rotated pixels falling outside the canvas are clipped silently.
pub fn rotate_segment(
    image: &RasterImage,
    map: &SegmentMap,
    id: u32,
    angle_deg: f64,
) -> Result<RasterImage, AugmentError> {
    check_compatible(image, map, id)?;
    if id == map.background_id() {
        return Err(AugmentError::BackgroundTarget(id));
    }
    let seg = map.segment(id).expect("checked above");
    let (cx, cy) = seg.centroid;
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let fill = map
        .segment(map.background_id())
        .expect("background id always resolves")
        .mean_color;

    let mut out = image.clone();
    for y in seg.bbox.min_y..=seg.bbox.max_y {
        for x in seg.bbox.min_x..=seg.bbox.max_x {
            if map.label_at(x, y) == id {
                out.set(x, y, fill);
            }
        }
    }

    // Destination window: the segment bbox rotated forward, padded to absorb
    // the 0.5px rounding slack, clamped to the canvas.
    let corners = [
        (f64::from(seg.bbox.min_x) - 0.5, f64::from(seg.bbox.min_y) - 0.5),
        (f64::from(seg.bbox.max_x) + 0.5, f64::from(seg.bbox.min_y) - 0.5),
        (f64::from(seg.bbox.min_x) - 0.5, f64::from(seg.bbox.max_y) + 0.5),
        (f64::from(seg.bbox.max_x) + 0.5, f64::from(seg.bbox.max_y) + 0.5),
    ];
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (px, py) in corners {
        let dx = px - cx;
        let dy = py - cy;
        let fx = cx + cos * dx - sin * dy;
        let fy = cy + sin * dx + cos * dy;
        min_x = min_x.min(fx);
        min_y = min_y.min(fy);
        max_x = max_x.max(fx);
        max_y = max_y.max(fy);
    }
    let x0 = (min_x.floor() - 1.0).max(0.0) as u32;
    let y0 = (min_y.floor() - 1.0).max(0.0) as u32;
    let x1 = ((max_x.ceil() + 1.0) as i64).min(i64::from(image.width()) - 1) as u32;
    let y1 = ((max_y.ceil() + 1.0) as i64).min(i64::from(image.height()) - 1) as u32;

    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = f64::from(x) - cx;
            let dy = f64::from(y) - cy;
            // inverse rotation of the destination pixel
            let sx = (cx + cos * dx + sin * dy).round();
            let sy = (cy - sin * dx + cos * dy).round();
            if sx < 0.0 || sy < 0.0 || sx >= f64::from(image.width()) || sy >= f64::from(image.height()) {
                continue;
            }
            let (sx, sy) = (sx as u32, sy as u32);
            if map.label_at(sx, sy) == id {
                out.set(x, y, image.get(sx, sy));
            }
        }
    }
    Ok(out)
}

/// Runs the whole per-image pipeline: segment, select, then decide and apply
/// each enabled transform per selected segment with probability `p`.
///
/// Decisions are drawn transform-major in [`TRANSFORM_ORDER`], segments in
/// selection order. A decision draws one Bernoulli, then (if applied) the
/// transform's parameters: three channel bytes for a color change, one angle
/// for a rotation. Removal of the largest eligible segment is recorded as
/// `applied = false` without consuming any draw. All transforms are applied
/// against the original segment map.
pub fn augment_image(
    image: &RasterImage,
    config: &AugmentationConfig,
) -> Result<(RasterImage, AugmentationRecord), AugmentError> {
    config.validate()?;
    let map = segment_image(image, config.drop_bits, config.connectivity);
    let mut rng = seed::new_rng(config.seed);
    let selected = select_segments(&map, config, &mut rng);
    let largest = largest_foreground(&map);

    let mut out = image.clone();
    let mut decisions = Vec::new();
    for transform in TRANSFORM_ORDER {
        if !config.transforms.contains(&transform) {
            continue;
        }
        for &segment_id in &selected {
            if transform == TransformKind::Removal && largest == Some(segment_id) {
                decisions.push(Decision {
                    segment_id,
                    transform,
                    params: None,
                    applied: false,
                });
                continue;
            }
            let applied = rng.random_bool(config.p);
            let mut params = None;
            if applied {
                match transform {
                    TransformKind::ColorChange => {
                        let color = Color::new(rng.random(), rng.random(), rng.random());
                        out = color_change(&out, &map, segment_id, color)?;
                        params = Some(TransformParams::Color {
                            color: [color.r, color.g, color.b],
                        });
                    }
                    TransformKind::Rotation => {
                        let (lo, hi) = config.rotation_range_deg;
                        let angle_deg = rng.random_range(lo..=hi);
                        out = rotate_segment(&out, &map, segment_id, angle_deg)?;
                        params = Some(TransformParams::Angle { angle_deg });
                    }
                    TransformKind::Removal => {
                        out = remove_segment(&out, &map, segment_id)?;
                    }
                }
            }
            decisions.push(Decision {
                segment_id,
                transform,
                params,
                applied,
            });
        }
    }
    Ok((
        out,
        AugmentationRecord {
            source: String::new(),
            seed: config.seed,
            decisions,
        },
    ))
}
