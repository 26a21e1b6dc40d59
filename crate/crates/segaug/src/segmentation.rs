//! Segmentation of logo images into color-homogeneous connected components.
//!
//! The pipeline is deliberately simple: quantize colors to merge near-equal
//! shades, label connected components of identical color, then flag the
//! background as the largest border-touching segment. Over- or
//! under-segmentation is tolerable downstream, so no smarter model is used.

use crate::image::{Color, RasterImage};

/// Neighborhood used when deciding whether two equal-colored pixels connect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E, W neighbors.
    Four,
    /// All eight surrounding pixels; keeps thin diagonal strokes whole.
    Eight,
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

/// Per-segment statistics captured at labeling time.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInfo {
    pub id: u32,
    /// Pixel count; always at least 1.
    pub area: u32,
    pub bbox: BoundingBox,
    /// Arithmetic per-channel mean over the segment, rounded to nearest.
    pub mean_color: Color,
    /// Mean pixel coordinate; lies inside `bbox`.
    pub centroid: (f64, f64),
    pub touches_border: bool,
}

/// Dense per-pixel segment labels plus segment statistics.
///
/// Labels are `0..K-1`, assigned in raster-scan order of first encounter, so
/// identical inputs always produce identical maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    segments: Vec<SegmentInfo>,
    background_id: u32,
}

impl SegmentMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major label per pixel.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label_at(&self, x: u32, y: u32) -> u32 {
        debug_assert!(x < self.width && y < self.height);
        self.labels[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentInfo> {
        self.segments.get(id as usize)
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn background_id(&self) -> u32 {
        self.background_id
    }
}

/// Drops the `drop_bits` low bits of every channel: `v -> (v >> b) << b`.
/// With `drop_bits = 0` the image is returned unchanged.
pub fn quantize(image: &RasterImage, drop_bits: u8) -> RasterImage {
    assert!(drop_bits <= 7, "drop_bits must be in [0, 7]");
    if drop_bits == 0 {
        return image.clone();
    }
    let q = |v: u8| (v >> drop_bits) << drop_bits;
    let pixels = image
        .pixels()
        .iter()
        .map(|c| Color::new(q(c.r), q(c.g), q(c.b)))
        .collect();
    RasterImage::new(image.width(), image.height(), pixels)
        .expect("quantize preserves dimensions")
}

/// Labels connected components of identical color and computes all segment
/// statistics from the same image. Two pixels share a label iff they are
/// joined by a path of adjacent equal-colored pixels.
pub fn label_components(image: &RasterImage, connectivity: Connectivity) -> SegmentMap {
    let (labels, count) = label_grid(image, connectivity);
    let segments = compute_stats(image, &labels, count);
    let background_id = identify_background(&segments);
    SegmentMap {
        width: image.width(),
        height: image.height(),
        labels,
        segments,
        background_id,
    }
}

/// Pipeline entry point: labels are computed on the quantized image, but
/// segment statistics (in particular the mean colors used as removal fill)
/// are taken from the original pixels.
pub fn segment_image(image: &RasterImage, drop_bits: u8, connectivity: Connectivity) -> SegmentMap {
    let quantized = quantize(image, drop_bits);
    let (labels, count) = label_grid(&quantized, connectivity);
    let segments = compute_stats(image, &labels, count);
    let background_id = identify_background(&segments);
    SegmentMap {
        width: image.width(),
        height: image.height(),
        labels,
        segments,
        background_id,
    }
}

/// The background is the largest border-touching segment; ties go to the
/// lower id. A finite raster always has one, since its border pixels are all
/// labeled.
pub fn identify_background(segments: &[SegmentInfo]) -> u32 {
    segments
        .iter()
        .filter(|s| s.touches_border)
        .max_by_key(|s| (s.area, std::cmp::Reverse(s.id)))
        .expect("a non-empty raster always has a border-touching segment")
        .id
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn push(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grandparent = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grandparent;
            a = grandparent;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // attach the larger root under the smaller to keep ids stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass labeling. The second pass renumbers roots densely in raster-scan
/// order of first encounter.
fn label_grid(image: &RasterImage, connectivity: Connectivity) -> (Vec<u32>, u32) {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSets::new();

    for y in 0..h {
        for x in 0..w {
            let color = image.get(x as u32, y as u32);
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            if x > 0 && image.get((x - 1) as u32, y as u32) == color {
                neighbors[n] = provisional[y * w + x - 1];
                n += 1;
            }
            if y > 0 {
                if image.get(x as u32, (y - 1) as u32) == color {
                    neighbors[n] = provisional[(y - 1) * w + x];
                    n += 1;
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && image.get((x - 1) as u32, (y - 1) as u32) == color {
                        neighbors[n] = provisional[(y - 1) * w + x - 1];
                        n += 1;
                    }
                    if x + 1 < w && image.get((x + 1) as u32, (y - 1) as u32) == color {
                        neighbors[n] = provisional[(y - 1) * w + x + 1];
                        n += 1;
                    }
                }
            }
            let label = if n == 0 {
                sets.push()
            } else {
                let min = *neighbors[..n].iter().min().unwrap();
                for &other in &neighbors[..n] {
                    sets.union(min, other);
                }
                min
            };
            provisional[y * w + x] = label;
        }
    }

    let mut remap = vec![u32::MAX; sets.parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for (i, &p) in provisional.iter().enumerate() {
        let root = sets.find(p);
        if remap[root as usize] == u32::MAX {
            remap[root as usize] = next;
            next += 1;
        }
        labels[i] = remap[root as usize];
    }
    (labels, next)
}

fn compute_stats(image: &RasterImage, labels: &[u32], count: u32) -> Vec<SegmentInfo> {
    #[derive(Clone)]
    struct Acc {
        area: u64,
        sum_r: u64,
        sum_g: u64,
        sum_b: u64,
        sum_x: u64,
        sum_y: u64,
        min_x: u32,
        min_y: u32,
        max_x: u32,
        max_y: u32,
        touches_border: bool,
    }
    let empty = Acc {
        area: 0,
        sum_r: 0,
        sum_g: 0,
        sum_b: 0,
        sum_x: 0,
        sum_y: 0,
        min_x: u32::MAX,
        min_y: u32::MAX,
        max_x: 0,
        max_y: 0,
        touches_border: false,
    };
    let mut accs = vec![empty; count as usize];
    let w = image.width();
    let h = image.height();
    for y in 0..h {
        for x in 0..w {
            let label = labels[(y as usize) * (w as usize) + (x as usize)];
            let acc = &mut accs[label as usize];
            let c = image.get(x, y);
            acc.area += 1;
            acc.sum_r += u64::from(c.r);
            acc.sum_g += u64::from(c.g);
            acc.sum_b += u64::from(c.b);
            acc.sum_x += u64::from(x);
            acc.sum_y += u64::from(y);
            acc.min_x = acc.min_x.min(x);
            acc.min_y = acc.min_y.min(y);
            acc.max_x = acc.max_x.max(x);
            acc.max_y = acc.max_y.max(y);
            acc.touches_border |= x == 0 || y == 0 || x == w - 1 || y == h - 1;
        }
    }
    accs.into_iter()
        .enumerate()
        .map(|(id, acc)| {
            debug_assert!(acc.area > 0, "dense labels leave no empty segment");
            let round_mean = |sum: u64| ((2 * sum + acc.area) / (2 * acc.area)) as u8;
            SegmentInfo {
                id: id as u32,
                area: acc.area as u32,
                bbox: BoundingBox {
                    min_x: acc.min_x,
                    min_y: acc.min_y,
                    max_x: acc.max_x,
                    max_y: acc.max_y,
                },
                mean_color: Color::new(
                    round_mean(acc.sum_r),
                    round_mean(acc.sum_g),
                    round_mean(acc.sum_b),
                ),
                centroid: (
                    acc.sum_x as f64 / acc.area as f64,
                    acc.sum_y as f64 / acc.area as f64,
                ),
                touches_border: acc.touches_border,
            }
        })
        .collect()
}

/// Renders each segment in a distinct deterministic color for debugging.
pub fn label_visualization(map: &SegmentMap) -> RasterImage {
    let palette: Vec<Color> = (0..map.segment_count() as u32).map(id_color).collect();
    let pixels = map.labels().iter().map(|&l| palette[l as usize]).collect();
    RasterImage::new(map.width(), map.height(), pixels).expect("map dimensions are valid")
}

/// Golden-angle hue spacing keeps consecutive ids far apart on the wheel.
fn id_color(id: u32) -> Color {
    let hue = (id as f64 * 0.618_033_988_749_895).fract();
    let value = 0.95 - 0.25 * ((id / 3) % 3) as f64 / 2.0;
    hsv_to_rgb(hue, 0.65, value)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Color {
    let h6 = (h.fract() * 6.0).clamp(0.0, 5.999_999);
    let sector = h6 as u32;
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let to_u8 = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
    Color::new(to_u8(r), to_u8(g), to_u8(b))
}

/// One line per segment: id, area, bounding box, mean color, background flag.
pub fn segment_report(map: &SegmentMap) -> String {
    let mut out = String::new();
    for s in map.segments() {
        out.push_str(&format!(
            "{}\tarea={}\tbbox=({},{},{},{})\tmean=#{:02x}{:02x}{:02x}\tbackground={}\n",
            s.id,
            s.area,
            s.bbox.min_x,
            s.bbox.min_y,
            s.bbox.max_x,
            s.bbox.max_y,
            s.mean_color.r,
            s.mean_color.g,
            s.mean_color.b,
            s.id == map.background_id(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::new_rng;
    use rand::Rng;
    use std::collections::VecDeque;

    fn image_from_rows(rows: &[&[u8]]) -> RasterImage {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let pixels = rows
            .iter()
            .flat_map(|r| r.iter().map(|&v| Color::new(v, v, v)))
            .collect();
        RasterImage::new(w, h, pixels).unwrap()
    }

    /// Small random image over a few gray values; adversarial for labeling.
    fn random_noise(rng: &mut impl Rng, w: u32, h: u32, levels: u8) -> RasterImage {
        let pixels = (0..(w as usize) * (h as usize))
            .map(|_| {
                let v = rng.random_range(0..levels) * (255 / levels);
                Color::new(v, v, v)
            })
            .collect();
        RasterImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn quantize_zero_bits_is_identity() {
        let mut rng = new_rng(1);
        let img = random_noise(&mut rng, 9, 7, 5);
        assert_eq!(quantize(&img, 0), img);
    }

    #[test]
    fn quantize_matches_bit_formula() {
        let img = RasterImage::new(1, 1, vec![Color::new(255, 128, 7)]).unwrap();
        let q = quantize(&img, 4);
        assert_eq!(q.get(0, 0), Color::new(240, 128, 0));
    }

    #[test]
    fn quantize_seven_bits_leaves_two_levels_per_channel() {
        // exhaustive over all 256 channel values
        let pixels: Vec<Color> = (0..=255u8).map(|v| Color::new(v, v, v)).collect();
        let img = RasterImage::new(16, 16, pixels).unwrap();
        for c in quantize(&img, 7).pixels() {
            assert!(c.r == 0 || c.r == 128, "got {}", c.r);
        }
    }

    #[test]
    fn uniform_image_is_one_segment() {
        let img = RasterImage::filled(6, 4, Color::new(9, 9, 9));
        let map = label_components(&img, Connectivity::Eight);
        assert_eq!(map.segment_count(), 1);
        assert_eq!(map.segments()[0].area, 24);
        assert_eq!(map.background_id(), 0);
    }

    #[test]
    fn checkerboard_four_vs_eight() {
        let img = image_from_rows(&[&[0, 255], &[255, 0]]);
        assert_eq!(label_components(&img, Connectivity::Four).segment_count(), 4);
        assert_eq!(label_components(&img, Connectivity::Eight).segment_count(), 2);
    }

    #[test]
    fn labels_are_dense_in_first_encounter_order() {
        let img = image_from_rows(&[&[7, 0, 0], &[0, 0, 9]]);
        let map = label_components(&img, Connectivity::Four);
        // first-encountered pixel (0,0) takes label 0, the zero region takes 1,
        // the lone 9 takes 2
        assert_eq!(map.labels(), &[0, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn u_shape_merges_across_the_scan() {
        // the two arms of the U meet only at the bottom row; union-find must
        // merge the provisional labels into one dense id
        let img = image_from_rows(&[&[0, 255, 0], &[0, 255, 0], &[0, 0, 0]]);
        let map = label_components(&img, Connectivity::Four);
        assert_eq!(map.segment_count(), 2);
        let u = map.segment(0).unwrap();
        assert_eq!(u.area, 7);
    }

    #[test]
    fn background_is_largest_border_segment() {
        // white frame with a black disk that also touches nothing
        let mut img = RasterImage::filled(9, 9, Color::WHITE);
        for y in 3..6 {
            for x in 3..6 {
                img.set(x, y, Color::BLACK);
            }
        }
        let map = label_components(&img, Connectivity::Eight);
        assert_eq!(map.segment_count(), 2);
        let bg = map.segment(map.background_id()).unwrap();
        assert_eq!(bg.mean_color, Color::WHITE);
        assert!(bg.touches_border);
    }

    #[test]
    fn background_prefers_larger_border_area() {
        // border split between two colors: top 3 rows (area 30) vs bottom 2 (20)
        let mut rows: Vec<&[u8]> = Vec::new();
        let top: &[u8] = &[0; 10];
        let bottom: &[u8] = &[255; 10];
        for _ in 0..3 {
            rows.push(top);
        }
        for _ in 0..2 {
            rows.push(bottom);
        }
        let img = image_from_rows(&rows);
        let map = label_components(&img, Connectivity::Eight);
        let bg = map.segment(map.background_id()).unwrap();
        assert_eq!(bg.area, 30);
        assert_eq!(bg.mean_color, Color::BLACK);
    }

    #[test]
    fn uniform_image_background_is_its_only_segment() {
        let img = RasterImage::filled(3, 3, Color::new(40, 40, 40));
        let map = label_components(&img, Connectivity::Four);
        assert_eq!(map.background_id(), 0);
    }

    #[test]
    fn stats_match_hand_computation() {
        // 4x3, gray 10 background, a 2x2 block of distinct colors at (1,1)
        let mut img = RasterImage::filled(4, 3, Color::new(10, 10, 10));
        img.set(1, 1, Color::new(100, 0, 0));
        img.set(2, 1, Color::new(101, 0, 0));
        // quantize with 3 bits merges 100 and 101 into one region
        let map = segment_image(&img, 3, Connectivity::Eight);
        assert_eq!(map.segment_count(), 2);
        let seg = map.segment(1).unwrap();
        assert_eq!(seg.area, 2);
        assert_eq!(
            seg.bbox,
            BoundingBox { min_x: 1, min_y: 1, max_x: 2, max_y: 1 }
        );
        // mean over the ORIGINAL pixels: (100+101)/2 rounds to 101
        assert_eq!(seg.mean_color, Color::new(101, 0, 0));
        assert_eq!(seg.centroid, (1.5, 1.0));
        assert!(!seg.touches_border);
    }

    #[test]
    fn labeling_is_deterministic() {
        let mut rng = new_rng(17);
        let img = random_noise(&mut rng, 23, 19, 3);
        let a = label_components(&img, Connectivity::Eight);
        let b = label_components(&img, Connectivity::Eight);
        assert_eq!(a, b);
    }

    #[test]
    fn visualization_and_report_cover_every_segment() {
        let img = image_from_rows(&[&[0, 255, 0], &[0, 255, 0], &[0, 0, 0]]);
        let map = label_components(&img, Connectivity::Four);
        let vis = label_visualization(&map);
        assert_eq!((vis.width(), vis.height()), (3, 3));
        // same label, same render color; different labels, different color
        assert_eq!(vis.get(0, 0), vis.get(2, 0));
        assert_ne!(vis.get(0, 0), vis.get(1, 0));
        let report = segment_report(&map);
        assert_eq!(report.lines().count(), map.segment_count());
        assert!(report.contains("background=true"));
    }

    /// Independent connectivity oracle: BFS restricted to one label.
    fn flood_reaches_whole_segment(map: &SegmentMap, conn: Connectivity) -> bool {
        let w = map.width() as i64;
        let h = map.height() as i64;
        for seg in map.segments() {
            let start = (0..w * h)
                .find(|&i| map.labels()[i as usize] == seg.id)
                .unwrap();
            let mut seen = vec![false; (w * h) as usize];
            let mut queue = VecDeque::from([start]);
            seen[start as usize] = true;
            let mut reached = 0u32;
            while let Some(i) = queue.pop_front() {
                reached += 1;
                let (x, y) = (i % w, i / w);
                let deltas: &[(i64, i64)] = match conn {
                    Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
                    Connectivity::Eight => &[
                        (1, 0), (-1, 0), (0, 1), (0, -1),
                        (1, 1), (1, -1), (-1, 1), (-1, -1),
                    ],
                };
                for (dx, dy) in deltas {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let ni = (ny * w + nx) as usize;
                    if !seen[ni] && map.labels()[ni] == seg.id {
                        seen[ni] = true;
                        queue.push_back(ni as i64);
                    }
                }
            }
            if reached != seg.area {
                return false;
            }
        }
        true
    }

    proptest::proptest! {
        #[test]
        fn areas_partition_the_grid(seed in 0u64..300, w in 1u32..20, h in 1u32..20) {
            let mut rng = new_rng(seed);
            let img = random_noise(&mut rng, w, h, 3);
            let map = label_components(&img, Connectivity::Eight);
            let total: u64 = map.segments().iter().map(|s| u64::from(s.area)).sum();
            proptest::prop_assert_eq!(total, u64::from(w) * u64::from(h));
        }

        #[test]
        fn every_segment_is_connected(seed in 0u64..150, four in proptest::bool::ANY) {
            let mut rng = new_rng(seed);
            let img = random_noise(&mut rng, 12, 12, 3);
            let conn = if four { Connectivity::Four } else { Connectivity::Eight };
            let map = label_components(&img, conn);
            proptest::prop_assert!(flood_reaches_whole_segment(&map, conn));
        }

        #[test]
        fn quantize_is_idempotent(seed in 0u64..100, bits in 0u8..8) {
            let mut rng = new_rng(seed);
            let img = random_noise(&mut rng, 8, 8, 7);
            let once = quantize(&img, bits);
            proptest::prop_assert_eq!(quantize(&once, bits), once);
        }

        #[test]
        fn coarser_quantization_never_adds_segments(seed in 0u64..100, bits in 0u8..7) {
            let mut rng = new_rng(seed);
            let img = random_noise(&mut rng, 10, 10, 7);
            let fine = label_components(&quantize(&img, bits), Connectivity::Eight);
            let coarse = label_components(&quantize(&img, bits + 1), Connectivity::Eight);
            proptest::prop_assert!(coarse.segment_count() <= fine.segment_count());
        }
    }
}
