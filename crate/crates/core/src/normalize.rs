//! Geometric and photometric face normalization.
//!
//! A face is aligned by the similarity transform that carries its two eye
//! centers onto fixed canonical positions in a 128x128 frame, then its gray
//! channel is histogram-equalized. An un-equalized RGB copy of the aligned
//! face is kept for avatar texturing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, RawImage};

pub const CANONICAL_SIZE: usize = 128;
pub const CANONICAL_LEFT_EYE: Point = Point { x: 32.0, y: 48.0 };
pub const CANONICAL_RIGHT_EYE: Point = Point { x: 96.0, y: 48.0 };

/// Minimum inter-ocular distance in source pixels accepted for alignment.
pub const MIN_EYE_DISTANCE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Eye centers in image coordinates; `left` is the eye with the smaller x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeLandmarks {
    pub left: Point,
    pub right: Point,
}

impl EyeLandmarks {
    pub const fn new(left: Point, right: Point) -> Self {
        EyeLandmarks { left, right }
    }

    pub const fn canonical() -> Self {
        EyeLandmarks {
            left: CANONICAL_LEFT_EYE,
            right: CANONICAL_RIGHT_EYE,
        }
    }

    pub fn distance(&self) -> f64 {
        self.left.distance(&self.right)
    }
}

/// `dst = a * src + b` over complex numbers: rotation and uniform scale in
/// `a`, translation in `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    a_re: f64,
    a_im: f64,
    b_re: f64,
    b_im: f64,
}

impl SimilarityTransform {
    /// The unique similarity taking `from.left -> to.left` and `from.right -> to.right`.
    pub fn between(from: &EyeLandmarks, to: &EyeLandmarks) -> Result<Self> {
        let (dx, dy) = (from.right.x - from.left.x, from.right.y - from.left.y);
        let denom = dx * dx + dy * dy;
        if denom == 0.0 {
            return Err(Error::Degenerate("coincident eye landmarks".into()));
        }
        let (ex, ey) = (to.right.x - to.left.x, to.right.y - to.left.y);
        // a = (E) / (D) in complex arithmetic
        let a_re = (ex * dx + ey * dy) / denom;
        let a_im = (ey * dx - ex * dy) / denom;
        let b_re = to.left.x - (a_re * from.left.x - a_im * from.left.y);
        let b_im = to.left.y - (a_im * from.left.x + a_re * from.left.y);
        Ok(SimilarityTransform { a_re, a_im, b_re, b_im })
    }

    pub fn apply(&self, p: Point) -> Point {
        Point {
            x: self.a_re * p.x - self.a_im * p.y + self.b_re,
            y: self.a_im * p.x + self.a_re * p.y + self.b_im,
        }
    }

    pub fn inverse(&self) -> Self {
        let m = self.a_re * self.a_re + self.a_im * self.a_im;
        let ia_re = self.a_re / m;
        let ia_im = -self.a_im / m;
        SimilarityTransform {
            a_re: ia_re,
            a_im: ia_im,
            b_re: -(ia_re * self.b_re - ia_im * self.b_im),
            b_im: -(ia_im * self.b_re + ia_re * self.b_im),
        }
    }

    pub fn scale(&self) -> f64 {
        self.a_re.hypot(self.a_im)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedFace {
    image: RawImage,
    color_ref: RawImage,
    equalized: bool,
}

impl NormalizedFace {
    /// Wraps an already-aligned 128x128 pair.
    pub fn from_parts(image: RawImage, color_ref: RawImage) -> Result<Self> {
        let ok = |img: &RawImage, ch| {
            img.width() == CANONICAL_SIZE && img.height() == CANONICAL_SIZE && img.channels() == ch
        };
        if !ok(&image, 1) || !ok(&color_ref, 3) {
            return Err(Error::Format(
                "normalized face must be 128x128 gray plus 128x128 RGB".into(),
            ));
        }
        Ok(NormalizedFace {
            image,
            color_ref,
            equalized: false,
        })
    }

    /// Grayscale matching image.
    pub fn image(&self) -> &RawImage {
        &self.image
    }

    /// Aligned RGB copy before photometric normalization.
    pub fn color_ref(&self) -> &RawImage {
        &self.color_ref
    }

    pub fn is_equalized(&self) -> bool {
        self.equalized
    }

    pub fn canonical_eyes(&self) -> EyeLandmarks {
        EyeLandmarks::canonical()
    }
}

fn to_rgb(img: &RawImage) -> RawImage {
    if img.channels() == 3 {
        return img.clone();
    }
    let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
    RawImage::new(img.width(), img.height(), 3, data).expect("same geometry")
}

/// Dark-blob eye locator used when no landmarks are supplied.
///
/// Searches rows 25%-50% and columns 15%-85% of the image for connected
/// components darker than `min + 0.2 * (median - min)`, ignores blobs that
/// touch the search band's edge, and returns the centroids of the two largest.
pub fn locate_eyes(img: &RawImage, hint: Option<EyeLandmarks>) -> Result<EyeLandmarks> {
    if let Some(h) = hint {
        return Ok(h);
    }
    let gray = to_grayscale(img);
    let (w, h) = (gray.width(), gray.height());
    let (y0, y1) = (h / 4, h / 2);
    let (x0, x1) = ((w * 15) / 100, (w * 85).div_ceil(100));
    if y1 <= y0 + 2 || x1 <= x0 + 2 {
        return Err(Error::Detect("image too small for eye search".into()));
    }
    let (bw, bh) = (x1 - x0, y1 - y0);

    let mut band: Vec<u8> = Vec::with_capacity(bw * bh);
    for y in y0..y1 {
        for x in x0..x1 {
            band.push(gray.get(x, y, 0));
        }
    }
    let mut sorted = band.clone();
    sorted.sort_unstable();
    let min = f64::from(sorted[0]);
    let median = f64::from(sorted[sorted.len() / 2]);
    if median - min < 20.0 {
        return Err(Error::Detect("no contrast in eye band".into()));
    }
    let threshold = min + 0.2 * (median - min);

    let dark: Vec<bool> = band.iter().map(|&v| f64::from(v) <= threshold).collect();
    let mut label = vec![usize::MAX; bw * bh];
    let mut blobs: Vec<Blob> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..band.len() {
        if !dark[start] || label[start] != usize::MAX {
            continue;
        }
        let id = blobs.len();
        let mut blob = Blob::default();
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (bx, by) = (i % bw, i / bw);
            blob.area += 1;
            blob.sum_x += (bx + x0) as f64;
            blob.sum_y += (by + y0) as f64;
            if bx == 0 || by == 0 || bx == bw - 1 || by == bh - 1 {
                blob.touches_edge = true;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = bx as i64 + dx;
                    let ny = by as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= bw as i64 || ny >= bh as i64 {
                        continue;
                    }
                    let j = ny as usize * bw + nx as usize;
                    if dark[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        blobs.push(blob);
    }

    let mut candidates: Vec<&Blob> = blobs.iter().filter(|b| !b.touches_edge && b.area >= 2).collect();
    if candidates.len() < 2 {
        return Err(Error::Detect(format!(
            "found {} candidate eye blobs, need 2",
            candidates.len()
        )));
    }
    // stable sort keeps raster order among equal areas
    candidates.sort_by_key(|c| std::cmp::Reverse(c.area));
    let (mut p, mut q) = (candidates[0].centroid(), candidates[1].centroid());
    if q.x < p.x {
        std::mem::swap(&mut p, &mut q);
    }
    if p.x == q.x {
        return Err(Error::Detect("eye candidates are vertically stacked".into()));
    }
    Ok(EyeLandmarks::new(p, q))
}

#[derive(Default)]
struct Blob {
    area: usize,
    sum_x: f64,
    sum_y: f64,
    touches_edge: bool,
}

impl Blob {
    fn centroid(&self) -> Point {
        Point::new(self.sum_x / self.area as f64, self.sum_y / self.area as f64)
    }
}

/// Aligns `img` so that `eyes` land on the canonical eye positions.
pub fn geometric_normalize(img: &RawImage, eyes: &EyeLandmarks) -> Result<NormalizedFace> {
    let d = eyes.distance();
    if !d.is_finite() || d < MIN_EYE_DISTANCE {
        return Err(Error::Degenerate(format!(
            "inter-ocular distance {d:.2} px is below {MIN_EYE_DISTANCE}"
        )));
    }
    if eyes.left.x >= eyes.right.x {
        return Err(Error::Degenerate("left eye must lie left of right eye".into()));
    }
    let to_canonical = SimilarityTransform::between(eyes, &EyeLandmarks::canonical())?;
    let to_source = to_canonical.inverse();

    let gray = to_grayscale(img);
    let rgb = to_rgb(img);
    let n = CANONICAL_SIZE;
    let mut g = Vec::with_capacity(n * n);
    let mut c = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let src = to_source.apply(Point::new(x as f64, y as f64));
            g.push(quantize(gray.sample_bilinear(src.x, src.y, 0)));
            for ch in 0..3 {
                c.push(quantize(rgb.sample_bilinear(src.x, src.y, ch)));
            }
        }
    }
    NormalizedFace::from_parts(RawImage::new(n, n, 1, g)?, RawImage::new(n, n, 3, c)?)
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 256-bin histogram equalization lookup: `v -> round(255 * cdf(v) / total)`.
///
/// Each occupied level maps to the rounded scaled count of pixels at or
/// below it, so an equalized image is a fixed point of its own lookup.
pub fn equalization_lut(img: &RawImage) -> [u8; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.data().len() as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (level, &count) in hist.iter().enumerate() {
        cdf += count;
        lut[level] = (255.0 * cdf as f64 / total).round() as u8;
    }
    lut
}

pub fn equalize(img: &RawImage) -> RawImage {
    let lut = equalization_lut(img);
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RawImage::new(img.width(), img.height(), img.channels(), data).expect("same geometry")
}

/// Histogram-equalizes the gray channel; `color_ref` is left untouched.
pub fn photometric_normalize(face: &NormalizedFace) -> NormalizedFace {
    NormalizedFace {
        image: equalize(&face.image),
        color_ref: face.color_ref.clone(),
        equalized: true,
    }
}

/// Eye location (hint or heuristic), alignment and equalization in one call.
pub fn normalize_face(img: &RawImage, hint: Option<EyeLandmarks>) -> Result<NormalizedFace> {
    let eyes = locate_eyes(img, hint)?;
    let face = geometric_normalize(img, &eyes)?;
    Ok(photometric_normalize(&face))
}
