//! Avatar generation: semantic attributes from a normalized face, a
//! blendshape head mesh driven by eight morph weights, a cylindrical texture
//! projection, and Wavefront OBJ/MTL export.
//!
//! Mesh coordinates: x to the viewer's right (image +x), y up, z toward the
//! viewer. The face's eyes sit at y = [`EYE_HEIGHT`], φ = ±30° around y.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{encode_png, luma, RawImage};
use crate::normalize::{EyeLandmarks, NormalizedFace, CANONICAL_SIZE};

// ---------------------------------------------------------------------------
// Attributes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceShape {
    Round,
    Oval,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToneClass {
    Light,
    Medium,
    Dark,
}

/// Half-width / height of the face region below which a face is long.
pub const LONG_BELOW: f64 = 0.95;
/// ... and above which it is round.
pub const ROUND_ABOVE: f64 = 1.05;
/// Skin luma at or above which the tone is light.
pub const LIGHT_FROM: f64 = 170.0;
/// Skin luma below which the tone is dark.
pub const DARK_BELOW: f64 = 120.0;

impl FaceShape {
    pub fn from_aspect(aspect: f64) -> Self {
        if aspect < LONG_BELOW {
            FaceShape::Long
        } else if aspect > ROUND_ABOVE {
            FaceShape::Round
        } else {
            FaceShape::Oval
        }
    }
}

impl ToneClass {
    pub fn from_luma(luma: f64) -> Self {
        if luma >= LIGHT_FROM {
            ToneClass::Light
        } else if luma < DARK_BELOW {
            ToneClass::Dark
        } else {
            ToneClass::Medium
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacialAttributes {
    pub face_shape: FaceShape,
    /// Mean color of the two cheek boxes.
    pub skin_tone: [u8; 3],
    /// Inter-ocular distance / face width at the eye row.
    pub eye_spacing_ratio: f64,
    pub tone_class: ToneClass,
    pub suggested_body: String,
    /// Face half-width / eye-to-chin distance.
    pub aspect_ratio: f64,
    /// Nose length / eye-to-chin distance.
    pub nose_length_ratio: f64,
    /// Mouth width / face width.
    pub mouth_width_ratio: f64,
    /// Eye half-width / inter-ocular distance.
    pub eye_size_ratio: f64,
}

impl FacialAttributes {
    /// Calibration anchor: maps to all morph weights = 0.5.
    pub fn neutral() -> Self {
        let mut a = FacialAttributes {
            face_shape: FaceShape::Oval,
            skin_tone: [180, 140, 115],
            eye_spacing_ratio: 0.5,
            tone_class: ToneClass::Medium,
            suggested_body: String::new(),
            aspect_ratio: 1.0,
            nose_length_ratio: 0.4,
            mouth_width_ratio: 0.35,
            eye_size_ratio: 0.16,
        };
        a.suggested_body = suggest_body(&a).to_string();
        a
    }
}

/// Cheek sample boxes in the canonical frame, `(x0, x1, y0, y1)` half-open.
pub const CHEEK_BOXES: [(usize, usize, usize, usize); 2] = [(26, 38, 62, 70), (90, 102, 62, 70)];
/// Size of the corner squares that sample the backdrop.
const CORNER: usize = 8;

fn rgb_at(img: &RawImage, x: usize, y: usize) -> [f64; 3] {
    let p = img.pixel(x, y);
    if p.len() == 3 {
        [p[0] as f64, p[1] as f64, p[2] as f64]
    } else {
        [p[0] as f64; 3]
    }
}

fn color_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn mean_color(img: &RawImage, boxes: &[(usize, usize, usize, usize)]) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for &(x0, x1, y0, y1) in boxes {
        for y in y0..y1 {
            for x in x0..x1 {
                let c = rgb_at(img, x, y);
                for k in 0..3 {
                    sum[k] += c[k];
                }
                n += 1.0;
            }
        }
    }
    sum.map(|s| s / n)
}

/// Backdrop color model: the mean of the two top corners, with a cut-off
/// halfway toward the cheek tone.
struct Backdrop {
    color: [f64; 3],
    cutoff: f64,
}

impl Backdrop {
    fn sample(img: &RawImage) -> Self {
        let n = CANONICAL_SIZE;
        let color = mean_color(img, &[(0, CORNER, 0, CORNER), (n - CORNER, n, 0, CORNER)]);
        let skin = mean_color(img, &CHEEK_BOXES);
        Backdrop {
            color,
            cutoff: 0.5 * color_dist(skin, color).max(1.0),
        }
    }

    fn contains(&self, c: [f64; 3]) -> bool {
        color_dist(c, self.color) <= self.cutoff
    }
}

/// Reads shape, tone and feature proportions off the aligned color image.
///
/// The face region is everything that differs from the backdrop sampled in
/// the two top corners; features are runs of non-skin pixels relative to the
/// cheek tone. Total: measurements that find nothing fall back to the
/// neutral value.
pub fn classify_attributes(face: &NormalizedFace, eyes: &EyeLandmarks) -> FacialAttributes {
    let img = face.color_ref();
    let n = CANONICAL_SIZE;
    let skin = mean_color(img, &CHEEK_BOXES);
    let backdrop = Backdrop::sample(img);
    let is_face = |x: usize, y: usize| !backdrop.contains(rgb_at(img, x, y));
    let skin_tol = (0.15 * color_dist(skin, [0.0; 3])).max(12.0);
    let is_skin = |x: usize, y: usize| color_dist(rgb_at(img, x, y), skin) <= skin_tol;

    let neutral = FacialAttributes::neutral();
    let eye_row = ((eyes.left.y + eyes.right.y) / 2.0).round().clamp(0.0, (n - 1) as f64) as usize;
    let center_x = ((eyes.left.x + eyes.right.x) / 2.0).round().clamp(0.0, (n - 1) as f64) as usize;
    let iod = eyes.distance();

    // width at the eye row: scan inward from both frame edges
    let left = (0..n).find(|&x| is_face(x, eye_row));
    let right = (0..n).rev().find(|&x| is_face(x, eye_row));
    let width = match (left, right) {
        (Some(l), Some(r)) if r > l => (r - l + 1) as f64,
        _ => n as f64,
    };
    // chin: scan up the center column from the bottom
    let chin = (eye_row + 1..n).rev().find(|&y| is_face(center_x, y)).unwrap_or(n - 1);
    let depth = (chin + 1 - eye_row) as f64;
    let aspect_ratio = (width / 2.0) / depth;

    // below the eyes the center column crosses the nose, then the mouth
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for y in eye_row..=chin {
        match (is_skin(center_x, y), start) {
            (false, None) => start = Some(y),
            (true, Some(s)) => {
                runs.push((s, y));
                start = None;
            }
            _ => {}
        }
    }
    let nose_length_ratio = runs
        .first()
        .map(|&(a, b)| (b - a) as f64 / depth)
        .unwrap_or(neutral.nose_length_ratio);
    let mouth_width_ratio = runs
        .get(1)
        .map(|&(a, b)| {
            let row = (a + b) / 2;
            let l = (0..center_x).rev().find(|&x| is_skin(x, row)).map_or(0, |x| x + 1);
            let r = (center_x..n).find(|&x| is_skin(x, row)).unwrap_or(n);
            (r - l) as f64 / width
        })
        .unwrap_or(neutral.mouth_width_ratio);

    // eye half-width: from the left eye center outward until skin
    let ex = eyes.left.x.round().clamp(0.0, (n - 1) as f64) as usize;
    let ey = eyes.left.y.round().clamp(0.0, (n - 1) as f64) as usize;
    let eye_size_ratio = (0..=ex)
        .rev()
        .find(|&x| is_skin(x, ey))
        .map(|x| (ex - x) as f64 / iod)
        .unwrap_or(neutral.eye_size_ratio);

    let skin_tone = skin.map(|c| c.round().clamp(0.0, 255.0) as u8);
    let tone_luma = luma(skin_tone[0], skin_tone[1], skin_tone[2]) as f64;
    let mut attrs = FacialAttributes {
        face_shape: FaceShape::from_aspect(aspect_ratio),
        skin_tone,
        eye_spacing_ratio: (iod / width).clamp(1e-6, 1.0 - 1e-6),
        tone_class: ToneClass::from_luma(tone_luma),
        suggested_body: String::new(),
        aspect_ratio,
        nose_length_ratio,
        mouth_width_ratio,
        eye_size_ratio,
    };
    attrs.suggested_body = suggest_body(&attrs).to_string();
    attrs
}

/// Body label per (face shape, tone class). Rows: long, oval, round;
/// columns: light, medium, dark.
pub const BODY_TABLE: [[&str; 3]; 3] = [
    ["lean", "tall", "athletic-tall"],
    ["slim", "standard", "athletic"],
    ["soft", "sturdy", "broad"],
];

pub fn suggest_body(attrs: &FacialAttributes) -> &'static str {
    let row = match attrs.face_shape {
        FaceShape::Long => 0,
        FaceShape::Oval => 1,
        FaceShape::Round => 2,
    };
    let col = match attrs.tone_class {
        ToneClass::Light => 0,
        ToneClass::Medium => 1,
        ToneClass::Dark => 2,
    };
    BODY_TABLE[row][col]
}

// ---------------------------------------------------------------------------
// Parameters

pub const MORPH_COUNT: usize = 8;
pub const MORPH_NAMES: [&str; MORPH_COUNT] = [
    "head_width",
    "jaw_length",
    "eye_spacing",
    "eye_size",
    "nose_length",
    "mouth_width",
    "brow_height",
    "cheek_fullness",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureMode {
    #[default]
    Projected,
    Flat,
}

impl FromStr for TextureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(TextureMode::Projected),
            "flat" => Ok(TextureMode::Flat),
            other => Err(Error::Config(format!(
                "unknown texture mode `{other}` (projected|flat)"
            ))),
        }
    }
}

impl fmt::Display for TextureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextureMode::Projected => "projected",
            TextureMode::Flat => "flat",
        })
    }
}

/// Morph weights in [`MORPH_NAMES`] order, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphWeights {
    pub head_width: f64,
    pub jaw_length: f64,
    pub eye_spacing: f64,
    pub eye_size: f64,
    pub nose_length: f64,
    pub mouth_width: f64,
    pub brow_height: f64,
    pub cheek_fullness: f64,
}

impl MorphWeights {
    pub fn from_array(w: [f64; MORPH_COUNT]) -> Self {
        MorphWeights {
            head_width: w[0],
            jaw_length: w[1],
            eye_spacing: w[2],
            eye_size: w[3],
            nose_length: w[4],
            mouth_width: w[5],
            brow_height: w[6],
            cheek_fullness: w[7],
        }
    }

    pub fn to_array(&self) -> [f64; MORPH_COUNT] {
        [
            self.head_width,
            self.jaw_length,
            self.eye_spacing,
            self.eye_size,
            self.nose_length,
            self.mouth_width,
            self.brow_height,
            self.cheek_fullness,
        ]
    }

    pub fn uniform(v: f64) -> Self {
        Self::from_array([v; MORPH_COUNT])
    }

    /// Clamps every weight into `[0, 1]`; non-finite weights are rejected.
    pub fn clamped(&self) -> Result<Self> {
        let w = self.to_array();
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "morph weight {} is not a finite number",
                MORPH_NAMES[i]
            )));
        }
        Ok(Self::from_array(w.map(|v| v.clamp(0.0, 1.0))))
    }

    /// Sets the weight called `name`, clamped.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = MORPH_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown morph weight `{name}`")))?;
        if !value.is_finite() {
            return Err(Error::Config(format!("morph weight {name} is not a finite number")));
        }
        let mut w = self.to_array();
        w[i] = value.clamp(0.0, 1.0);
        *self = Self::from_array(w);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvatarParams {
    pub morph_weights: MorphWeights,
    pub skin_tone: [u8; 3],
    pub texture_mode: TextureMode,
}

impl Default for AvatarParams {
    fn default() -> Self {
        AvatarParams {
            morph_weights: MorphWeights::uniform(0.5),
            skin_tone: FacialAttributes::neutral().skin_tone,
            texture_mode: TextureMode::Projected,
        }
    }
}

/// `(lo, hi)` of the affine map `ratio -> (ratio - lo) / (hi - lo)`; the
/// neutral attributes sit at every midpoint.
pub const ASPECT_MAP: (f64, f64) = (0.8, 1.2);
pub const EYE_SPACING_MAP: (f64, f64) = (0.4, 0.6);
pub const EYE_SIZE_MAP: (f64, f64) = (0.10, 0.22);
pub const NOSE_LENGTH_MAP: (f64, f64) = (0.30, 0.50);
pub const MOUTH_WIDTH_MAP: (f64, f64) = (0.25, 0.45);

fn affine(v: f64, (lo, hi): (f64, f64)) -> f64 {
    // centered form so the midpoint lands on exactly 0.5
    let w = 0.5 + (v - 0.5 * (lo + hi)) / (hi - lo);
    if w.is_finite() {
        w.clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn attributes_to_params(attrs: &FacialAttributes) -> AvatarParams {
    let head_width = affine(attrs.aspect_ratio, ASPECT_MAP);
    AvatarParams {
        morph_weights: MorphWeights {
            head_width,
            jaw_length: 1.0 - head_width,
            eye_spacing: affine(attrs.eye_spacing_ratio, EYE_SPACING_MAP),
            eye_size: affine(attrs.eye_size_ratio, EYE_SIZE_MAP),
            nose_length: affine(attrs.nose_length_ratio, NOSE_LENGTH_MAP),
            mouth_width: affine(attrs.mouth_width_ratio, MOUTH_WIDTH_MAP),
            brow_height: 0.5,
            cheek_fullness: head_width,
        },
        skin_tone: attrs.skin_tone,
        texture_mode: TextureMode::Projected,
    }
}

// ---------------------------------------------------------------------------
// Mesh

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub uvs: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 3]>,
}

impl Mesh {
    /// Index range, unit normals, per-vertex attribute counts.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uvs.len() != n || self.normals.len() != n {
            return Err(Error::Invariant("per-vertex attribute counts differ".into()));
        }
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::Invariant(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some(i) = self.normals.iter().position(|v| (norm(*v) - 1.0).abs() > 1e-6) {
            return Err(Error::Invariant(format!("normal {i} is not unit length")));
        }
        if self.uvs.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Invariant("uv outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Head sphere resolution: longitude segments and latitude rings.
pub const HEAD_SEGMENTS: usize = 32;
pub const HEAD_RINGS: usize = 16;
/// Eye insert resolution.
pub const EYE_SEGMENTS: usize = 12;
pub const EYE_RINGS: usize = 6;
/// Seam-duplicated head grid plus two eye inserts: 33·17 + 2·13·7.
pub const VERTEX_COUNT: usize = (HEAD_SEGMENTS + 1) * (HEAD_RINGS + 1) + 2 * (EYE_SEGMENTS + 1) * (EYE_RINGS + 1);
/// Base head semi-axes.
pub const HEAD_RADII: [f64; 3] = [1.0, 1.25, 1.05];
/// Mesh height of the eye line.
pub const EYE_HEIGHT: f64 = 0.15;
/// Azimuth of each eye off the front direction.
pub const EYE_AZIMUTH_DEG: f64 = 30.0;
pub const EYE_RADIUS: f64 = 0.11;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Part {
    Head,
    /// Eye insert with its side (-1 left, +1 right) and center.
    Eye(f64, [f64; 3]),
}

/// Neutral-pose geometry with per-vertex blendshape deltas.
#[derive(Clone, Debug)]
pub struct HeadRig {
    base: Mesh,
    deltas: [Vec<[f64; 3]>; MORPH_COUNT],
}

fn surface_point(theta: f64, phi: f64) -> [f64; 3] {
    let [rx, ry, rz] = HEAD_RADII;
    [
        rx * theta.sin() * phi.sin(),
        ry * theta.cos(),
        rz * theta.sin() * phi.cos(),
    ]
}

/// Cylindrical `(u, v)`: `u = 0.5 + atan2(x, z) / 2π`, `v = (ymax - y) / (ymax - ymin)`.
pub fn cylindrical_uv(p: [f64; 3]) -> [f64; 2] {
    let ry = HEAD_RADII[1];
    let u = 0.5 + p[0].atan2(p[2]) / (2.0 * PI);
    [u.clamp(0.0, 1.0), ((ry - p[1]) / (2.0 * ry)).clamp(0.0, 1.0)]
}

/// Eye insert center: on the head surface at the eye line and cylindrical
/// azimuth ±[`EYE_AZIMUTH_DEG`], sunk 0.4 radii toward the y axis.
pub fn eye_center(side: f64) -> [f64; 3] {
    let [rx, ry, rz] = HEAD_RADII;
    let (s, c) = (side * EYE_AZIMUTH_DEG.to_radians()).sin_cos();
    let ring = (1.0 - (EYE_HEIGHT / ry).powi(2)).sqrt();
    let rho = ring / ((s / rx).powi(2) + (c / rz).powi(2)).sqrt();
    let r = rho - 0.4 * EYE_RADIUS;
    [r * s, EYE_HEIGHT, r * c]
}

fn gauss(p: [f64; 3], c: [f64; 3], sigma: f64) -> f64 {
    let d = sub(p, c);
    (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * sigma * sigma)).exp()
}

/// Blendshape delta `k` of a head-surface point at base position `p`.
fn head_delta(k: usize, p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    let front = z.max(0.0) / HEAD_RADII[2];
    match k {
        // head width
        0 => [0.3 * x, 0.0, 0.05 * z],
        // jaw length: stretch the lower half downward
        1 => {
            let t = (-y / HEAD_RADII[1]).max(0.0);
            [0.0, -0.3 * t * t, 0.05 * t * z]
        }
        // eye spacing: sockets slide outward
        2 => {
            let mut d = [0.0; 3];
            for side in [-1.0, 1.0] {
                let g = gauss(p, eye_center(side), 0.22);
                d[0] += side * 0.1 * g;
            }
            d
        }
        // eye size: sockets open up
        3 => {
            let mut d = [0.0; 3];
            for side in [-1.0, 1.0] {
                let c = eye_center(side);
                let g = gauss(p, c, 0.18);
                let r = sub(p, c);
                d[0] += 0.15 * g * r[0];
                d[1] += 0.15 * g * r[1];
            }
            d
        }
        // nose length: ridge extends down and forward
        4 => {
            let g = gauss(p, [0.0, -0.2, HEAD_RADII[2]], 0.2) * front;
            [0.0, -0.08 * g, 0.3 * g]
        }
        // mouth width
        5 => {
            let g = gauss(p, [0.0, -0.6, 0.85], 0.22) * front;
            [0.35 * g * x, 0.0, 0.04 * g]
        }
        // brow height
        6 => {
            let mut d = [0.0; 3];
            for side in [-1.0, 1.0] {
                let g = gauss(p, [side * 0.45, 0.42, 0.9], 0.2) * front;
                d[1] += 0.1 * g;
                d[2] += 0.04 * g;
            }
            d
        }
        // cheek fullness
        _ => {
            let mut d = [0.0; 3];
            for side in [-1.0, 1.0] {
                let g = gauss(p, [side * 0.6, -0.3, 0.75], 0.28) * front;
                d[0] += side * 0.1 * g;
                d[2] += 0.08 * g;
            }
            d
        }
    }
}

/// Eye inserts ride their socket: every delta is the head delta at the eye
/// center, except the spacing shift (rigid) and the size morph (scale).
fn eye_delta(k: usize, p: [f64; 3], side: f64, c: [f64; 3]) -> [f64; 3] {
    match k {
        2 => [side * 0.1, 0.0, 0.0],
        3 => sub(p, c).map(|v| 0.6 * v),
        _ => head_delta(k, c),
    }
}

/// Positions, UVs and triangles of one grid.
type GridParts = (Vec<[f64; 3]>, Vec<[f64; 2]>, Vec<[u32; 3]>);

/// UV sphere grid with a duplicated seam column; pole quads emit one triangle.
fn sphere_grid(
    segments: usize,
    rings: usize,
    offset: u32,
    point: impl Fn(usize, usize) -> [f64; 3],
    uv: impl Fn(usize, usize, [f64; 3]) -> [f64; 2],
) -> GridParts {
    let mut vs = Vec::with_capacity((segments + 1) * (rings + 1));
    let mut uvs = Vec::with_capacity(vs.capacity());
    for i in 0..=rings {
        for j in 0..=segments {
            let p = point(i, j % segments);
            vs.push(p);
            uvs.push(uv(i, j, p));
        }
    }
    let idx = |i: usize, j: usize| offset + (i * (segments + 1) + j) as u32;
    let mut tris = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if i != 0 {
                tris.push([a, b, d]);
            }
            if i != rings - 1 {
                tris.push([d, b, c]);
            }
        }
    }
    (vs, uvs, tris)
}

impl HeadRig {
    pub fn new() -> Self {
        let mut parts = Vec::new();
        let mut base = Mesh::default();

        let head_point = |i: usize, j: usize| {
            let theta = PI * i as f64 / HEAD_RINGS as f64;
            let phi = -PI + 2.0 * PI * j as f64 / HEAD_SEGMENTS as f64;
            surface_point(theta, phi)
        };
        let (vs, uvs, tris) = sphere_grid(HEAD_SEGMENTS, HEAD_RINGS, 0, head_point, |_, j, p| {
            // the seam column takes u = 0 / 1 explicitly
            [j as f64 / HEAD_SEGMENTS as f64, cylindrical_uv(p)[1]]
        });
        parts.extend(std::iter::repeat_n(Part::Head, vs.len()));
        base.vertices.extend(vs);
        base.uvs.extend(uvs);
        base.triangles.extend(tris);

        for side in [-1.0, 1.0] {
            let c = eye_center(side);
            let eye_point = |i: usize, j: usize| {
                let theta = PI * i as f64 / EYE_RINGS as f64;
                let phi = -PI + 2.0 * PI * j as f64 / EYE_SEGMENTS as f64;
                let s = [theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos()];
                [
                    c[0] + EYE_RADIUS * s[0],
                    c[1] + EYE_RADIUS * s[1],
                    c[2] + EYE_RADIUS * s[2],
                ]
            };
            let offset = base.vertices.len() as u32;
            let (vs, uvs, tris) = sphere_grid(EYE_SEGMENTS, EYE_RINGS, offset, eye_point, |_, _, p| cylindrical_uv(p));
            parts.extend(std::iter::repeat_n(Part::Eye(side, c), vs.len()));
            base.vertices.extend(vs);
            base.uvs.extend(uvs);
            base.triangles.extend(tris);
        }
        debug_assert_eq!(base.vertices.len(), VERTEX_COUNT);

        let deltas = std::array::from_fn(|k| {
            base.vertices
                .iter()
                .zip(&parts)
                .map(|(&p, part)| match *part {
                    Part::Head => head_delta(k, p),
                    Part::Eye(side, c) => eye_delta(k, p, side, c),
                })
                .collect()
        });
        base.normals = vertex_normals(&base.vertices, &base.triangles);
        HeadRig { base, deltas }
    }

    pub fn base(&self) -> &Mesh {
        &self.base
    }

    pub fn delta(&self, k: usize) -> &[[f64; 3]] {
        &self.deltas[k]
    }

    /// `v = base + Σ w_k δ_k`, then normals recomputed.
    pub fn pose(&self, weights: &[f64; MORPH_COUNT]) -> Mesh {
        let vertices: Vec<[f64; 3]> = self
            .base
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let mut v = b;
                for (k, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        let d = self.deltas[k][i];
                        v = [v[0] + w * d[0], v[1] + w * d[1], v[2] + w * d[2]];
                    }
                }
                v
            })
            .collect();
        let normals = vertex_normals(&vertices, &self.base.triangles);
        Mesh {
            vertices,
            triangles: self.base.triangles.clone(),
            uvs: self.base.uvs.clone(),
            normals,
        }
    }
}

impl Default for HeadRig {
    fn default() -> Self {
        HeadRig::new()
    }
}

/// Area-weighted face normals summed over every vertex sharing a position,
/// so seam and pole duplicates get one smooth normal.
fn vertex_normals(vertices: &[[f64; 3]], triangles: &[[u32; 3]]) -> Vec<[f64; 3]> {
    let key = |p: [f64; 3]| p.map(|c| (c + 0.0).to_bits());
    let mut group: HashMap<[u64; 3], usize> = HashMap::new();
    let ids: Vec<usize> = vertices
        .iter()
        .map(|&p| {
            let next = group.len();
            *group.entry(key(p)).or_insert(next)
        })
        .collect();
    let mut acc = vec![[0.0f64; 3]; group.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = cross(sub(b, a), sub(c, a));
        for &i in t {
            let g = &mut acc[ids[i as usize]];
            for k in 0..3 {
                g[k] += n[k];
            }
        }
    }
    ids.iter()
        .zip(vertices)
        .map(|(&g, p)| {
            let n = acc[g];
            let len = norm(n);
            if len > 0.0 {
                n.map(|c| c / len)
            } else {
                // isolated vertex: fall back to the radial direction
                let r = norm(*p);
                if r > 0.0 {
                    p.map(|c| c / r)
                } else {
                    [0.0, 1.0, 0.0]
                }
            }
        })
        .collect()
}

pub fn generate_head_mesh(params: &AvatarParams) -> Mesh {
    HeadRig::new().pose(&params.morph_weights.to_array())
}

// ---------------------------------------------------------------------------
// Texture

pub const TEXTURE_SIZE: usize = 256;
/// Canonical-frame ellipse `(cx, cy, rx, ry)` bounding the face; texels that
/// project outside it, or onto backdrop-colored pixels, take the skin tone.
pub const FACE_FOOTPRINT: (f64, f64, f64, f64) = (64.0, 64.0, 62.0, 64.0);

/// Canonical-frame position seen by texel coordinate `(u, v)`, if the texel
/// faces the camera: `x = 64 + 64 sin φ`, `y = 48 + (0.15 - y_mesh) · 64`.
pub fn uv_to_canonical(u: f64, v: f64) -> Option<(f64, f64)> {
    let phi = (u - 0.5) * 2.0 * PI;
    if phi.abs() > PI / 2.0 {
        return None;
    }
    let ry = HEAD_RADII[1];
    let y_mesh = ry - 2.0 * ry * v;
    let half = CANONICAL_SIZE as f64 / 2.0;
    Some((half + half * phi.sin(), 48.0 + (EYE_HEIGHT - y_mesh) * half))
}

pub fn flat_texture(skin_tone: [u8; 3]) -> RawImage {
    let data = std::iter::repeat_n(skin_tone, TEXTURE_SIZE * TEXTURE_SIZE)
        .flatten()
        .collect();
    RawImage::new(TEXTURE_SIZE, TEXTURE_SIZE, 3, data).expect("texture dimensions are valid")
}

/// Frontal cylindrical projection of the aligned color image into the head UV layout.
pub fn project_texture(face: &NormalizedFace, skin_tone: [u8; 3]) -> RawImage {
    let src = face.color_ref();
    let backdrop = Backdrop::sample(src);
    let (cx, cy, rx, ry) = FACE_FOOTPRINT;
    let mut tex = flat_texture(skin_tone);
    for j in 0..TEXTURE_SIZE {
        for i in 0..TEXTURE_SIZE {
            let u = (i as f64 + 0.5) / TEXTURE_SIZE as f64;
            let v = (j as f64 + 0.5) / TEXTURE_SIZE as f64;
            let Some((x, y)) = uv_to_canonical(u, v) else { continue };
            if ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) > 1.0 {
                continue;
            }
            let rgb = [0, 1, 2].map(|c| src.sample_bilinear(x, y, c.min(src.channels() - 1)));
            if backdrop.contains(rgb) {
                continue;
            }
            for (c, v) in rgb.iter().enumerate() {
                tex.set(i, j, c, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    tex
}

pub fn render_texture(face: &NormalizedFace, params: &AvatarParams) -> RawImage {
    match params.texture_mode {
        TextureMode::Flat => flat_texture(params.skin_tone),
        TextureMode::Projected => project_texture(face, params.skin_tone),
    }
}

// ---------------------------------------------------------------------------
// OBJ / MTL

pub const OBJ_NAME: &str = "model.obj";
pub const MTL_NAME: &str = "model.mtl";
pub const TEXTURE_NAME: &str = "texture.png";

fn fmt6(out: &mut String, v: f64) {
    let s = format!("{v:.6}");
    // keep "-0.000000" out of the files
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        out.push_str(s.trim_start_matches('-'));
    } else {
        out.push_str(&s);
    }
}

/// Wavefront OBJ text: `v`, `vt` (flipped to bottom-left origin), `vn`, and
/// `f a/a/a b/b/b c/c/c`. LF endings, 6 decimals.
pub fn obj_string(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 96 + mesh.triangles.len() * 40);
    out.push_str("# avaface head\n");
    let _ = writeln!(out, "mtllib {MTL_NAME}");
    out.push_str("o head\n");
    let mut line = |tag: &str, vals: &[f64]| {
        out.push_str(tag);
        for &v in vals {
            out.push(' ');
            fmt6(&mut out, v);
        }
        out.push('\n');
    };
    for v in &mesh.vertices {
        line("v", v);
    }
    for t in &mesh.uvs {
        line("vt", &[t[0], 1.0 - t[1]]);
    }
    for n in &mesh.normals {
        line("vn", n);
    }
    out.push_str("usemtl skin\ns 1\n");
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(out, "f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}");
    }
    out
}

pub fn mtl_string() -> String {
    format!(
        "newmtl skin\nKa 1.000000 1.000000 1.000000\nKd 1.000000 1.000000 1.000000\nKs 0.000000 0.000000 0.000000\nd 1.000000\nillum 1\nmap_Kd {TEXTURE_NAME}\n"
    )
}

/// Validates `mesh` and writes `model.obj`, `model.mtl` and `texture.png` into `out_dir`.
pub fn export_obj(mesh: &Mesh, texture: &RawImage, out_dir: impl AsRef<Path>) -> Result<()> {
    mesh.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write(OBJ_NAME, obj_string(mesh).as_bytes())?;
    write(MTL_NAME, mtl_string().as_bytes())?;
    write(TEXTURE_NAME, &encode_png(texture))
}

/// Reads the subset of OBJ that [`obj_string`] writes: triangles whose
/// corners use the same index for position, uv and normal.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let bad = |n: usize, msg: &str| Error::Format(format!("obj line {n}: {msg}"));
    for (n, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let mut it = raw.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let nums = |it: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            it.map(|t| t.parse::<f64>().map_err(|_| bad(n, "bad number"))).collect()
        };
        match tag {
            "v" | "vn" => {
                let v = nums(it)?;
                let v: [f64; 3] = v.try_into().map_err(|_| bad(n, "expected 3 components"))?;
                if tag == "v" {
                    mesh.vertices.push(v);
                } else {
                    mesh.normals.push(v);
                }
            }
            "vt" => {
                let v = nums(it)?;
                let [u, t]: [f64; 2] = v.try_into().map_err(|_| bad(n, "expected 2 components"))?;
                mesh.uvs.push([u, 1.0 - t]);
            }
            "f" => {
                let corners: Vec<&str> = it.collect();
                if corners.len() != 3 {
                    return Err(bad(n, "only triangles are supported"));
                }
                let mut tri = [0u32; 3];
                for (slot, c) in tri.iter_mut().zip(&corners) {
                    let idx: Vec<u32> = c
                        .split('/')
                        .map(|s| s.parse::<u32>().map_err(|_| bad(n, "bad index")))
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 || idx[0] != idx[1] || idx[0] != idx[2] || idx[0] == 0 {
                        return Err(bad(n, "expected matching 1-based v/vt/vn indices"));
                    }
                    *slot = idx[0] - 1;
                }
                mesh.triangles.push(tri);
            }
            "#" | "mtllib" | "o" | "usemtl" | "s" | "g" => {}
            t if t.starts_with('#') => {}
            other => return Err(bad(n, &format!("unsupported statement `{other}`"))),
        }
    }
    if let Some(t) = mesh
        .triangles
        .iter()
        .find(|t| t.iter().any(|&i| i as usize >= mesh.vertices.len()))
    {
        return Err(Error::Format(format!("face {t:?} references an undefined vertex")));
    }
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// End to end

/// Everything generated for one face.
#[derive(Clone, Debug)]
pub struct Avatar {
    pub attributes: FacialAttributes,
    pub params: AvatarParams,
    pub mesh: Mesh,
    pub texture: RawImage,
}

pub fn build_avatar(face: &NormalizedFace, texture_mode: TextureMode) -> Avatar {
    let attributes = classify_attributes(face, &face.canonical_eyes());
    let mut params = attributes_to_params(&attributes);
    params.texture_mode = texture_mode;
    let mesh = generate_head_mesh(&params);
    let texture = render_texture(face, &params);
    Avatar {
        attributes,
        params,
        mesh,
        texture,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{render_synth_face, synth_eye_positions, synth_subject};
    use crate::normalize::normalize_face;

    fn synth_face(seed: u64) -> (crate::dataset::SynthFaceSpec, NormalizedFace) {
        let spec = synth_subject(seed);
        let img = render_synth_face(&spec, 160, 160).unwrap();
        let face = normalize_face(&img, Some(synth_eye_positions(&spec, 160, 160))).unwrap();
        (spec, face)
    }

    #[test]
    fn body_table_is_total() {
        let mut a = FacialAttributes::neutral();
        assert_eq!(suggest_body(&a), "standard");
        let mut seen = std::collections::HashSet::new();
        for shape in [FaceShape::Round, FaceShape::Oval, FaceShape::Long] {
            for tone in [ToneClass::Light, ToneClass::Medium, ToneClass::Dark] {
                a.face_shape = shape;
                a.tone_class = tone;
                seen.insert(suggest_body(&a));
            }
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn neutral_attributes_give_half_weights() {
        let p = attributes_to_params(&FacialAttributes::neutral());
        assert_eq!(p.morph_weights, MorphWeights::uniform(0.5));
        let mut a = FacialAttributes::neutral();
        a.eye_spacing_ratio = EYE_SPACING_MAP.0;
        a.nose_length_ratio = 0.0;
        let p = attributes_to_params(&a);
        assert_eq!(p.morph_weights.eye_spacing, 0.0);
        assert_eq!(p.morph_weights.nose_length, 0.0);
    }

    #[test]
    fn thresholds() {
        assert_eq!(FaceShape::from_aspect(0.94), FaceShape::Long);
        assert_eq!(FaceShape::from_aspect(1.0), FaceShape::Oval);
        assert_eq!(FaceShape::from_aspect(1.06), FaceShape::Round);
        assert_eq!(ToneClass::from_luma(170.0), ToneClass::Light);
        assert_eq!(ToneClass::from_luma(119.9), ToneClass::Dark);
        assert_eq!(ToneClass::from_luma(120.0), ToneClass::Medium);
    }

    #[test]
    fn weights_clamp_and_reject_nan() {
        let mut w = MorphWeights::uniform(0.5);
        w.set("nose_length", 1.7).unwrap();
        assert_eq!(w.nose_length, 1.0);
        w.set("eye_size", -3.0).unwrap();
        assert_eq!(w.eye_size, 0.0);
        assert!(w.set("nose_length", f64::NAN).is_err());
        assert!(w.set("ears", 0.1).is_err());
        assert!(MorphWeights::uniform(f64::INFINITY).clamped().is_err());
    }

    #[test]
    fn wide_generator_face_classifies_round() {
        let (_, face) = synth_face(2);
        let mut spec = synth_subject(2);
        spec.params.face_aspect = 1.2;
        let img = render_synth_face(&spec, 160, 160).unwrap();
        let face2 = normalize_face(&img, Some(synth_eye_positions(&spec, 160, 160))).unwrap();
        let a = classify_attributes(&face2, &face2.canonical_eyes());
        assert_eq!(a.face_shape, FaceShape::Round);
        // identical input, identical output
        let e = face.canonical_eyes();
        assert_eq!(classify_attributes(&face, &e), classify_attributes(&face, &e));
    }

    #[test]
    fn measured_ratios_track_generator() {
        let (spec, face) = synth_face(5);
        let a = classify_attributes(&face, &face.canonical_eyes());
        let p = spec.params;
        assert!(
            (a.aspect_ratio - p.face_aspect).abs() < 0.04,
            "{} vs {}",
            a.aspect_ratio,
            p.face_aspect
        );
        assert!((a.eye_spacing_ratio - p.eye_spacing).abs() < 0.02);
        assert!(
            (a.nose_length_ratio - p.nose_length).abs() < 0.05,
            "{} vs {}",
            a.nose_length_ratio,
            p.nose_length
        );
        assert!(
            (a.mouth_width_ratio - p.mouth_width).abs() < 0.05,
            "{} vs {}",
            a.mouth_width_ratio,
            p.mouth_width
        );
        assert!(
            (a.eye_size_ratio - p.eye_size).abs() < 0.04,
            "{} vs {}",
            a.eye_size_ratio,
            p.eye_size
        );
    }

    #[test]
    fn longer_nose_raises_nose_weight() {
        let mut spec = synth_subject(9);
        spec.params.nose_length = 0.5;
        let img = render_synth_face(&spec, 160, 160).unwrap();
        let face = normalize_face(&img, Some(synth_eye_positions(&spec, 160, 160))).unwrap();
        let p = attributes_to_params(&classify_attributes(&face, &face.canonical_eyes()));
        assert!(p.morph_weights.nose_length > 0.5, "{}", p.morph_weights.nose_length);
    }

    #[test]
    fn rig_counts_and_validity() {
        let rig = HeadRig::new();
        let base = rig.base();
        assert_eq!(base.vertices.len(), VERTEX_COUNT);
        assert_eq!(VERTEX_COUNT, 561 + 182);
        // per sphere: 2·S pole triangles + 2·S·(R-2) body triangles
        let tris = |s: usize, r: usize| 2 * s + 2 * s * (r - 2);
        assert_eq!(base.triangles.len(), tris(32, 16) + 2 * tris(12, 6));
        base.validate().unwrap();
    }

    #[test]
    fn triangles_face_outward() {
        let m = HeadRig::new().pose(&[0.5; MORPH_COUNT]);
        for t in &m.triangles[..960] {
            let [a, b, c] = t.map(|i| m.vertices[i as usize]);
            let n = cross(sub(b, a), sub(c, a));
            let centroid = [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0);
            assert!(n[0] * centroid[0] + n[1] * centroid[1] + n[2] * centroid[2] > 0.0);
        }
    }

    #[test]
    fn zero_weights_reproduce_base() {
        let rig = HeadRig::new();
        assert_eq!(&rig.pose(&[0.0; MORPH_COUNT]), rig.base());
    }

    #[test]
    fn seam_copies_share_position_and_normal() {
        let m = HeadRig::new().pose(&[0.7, 0.2, 0.9, 0.1, 1.0, 0.3, 0.6, 0.4]);
        for i in 0..=HEAD_RINGS {
            let a = i * (HEAD_SEGMENTS + 1);
            let b = a + HEAD_SEGMENTS;
            assert_eq!(m.vertices[a], m.vertices[b]);
            assert_eq!(m.normals[a], m.normals[b]);
        }
    }

    #[test]
    fn no_degenerate_triangles_at_extremes() {
        let rig = HeadRig::new();
        for w in [0.0, 1.0] {
            let m = rig.pose(&[w; MORPH_COUNT]);
            m.validate().unwrap();
            for t in 0..m.triangles.len() {
                assert!(m.triangle_area(t) > 1e-9, "triangle {t} at w={w}");
            }
        }
    }

    #[test]
    fn left_eye_pixel_projects_into_left_eye_uv() {
        // u = 0.5 + asin(-0.5)/2π = 5/12; v = (1.25 - 0.15) / 2.5 = 0.44
        let (u, v) = (5.0 / 12.0, 0.44);
        let (x, y) = uv_to_canonical(u, v).unwrap();
        assert!((x - 32.0).abs() < 1e-9 && (y - 48.0).abs() < 1e-9);
        let uv = cylindrical_uv(eye_center(-1.0));
        assert!((uv[0] - u).abs() < 1e-9 && (uv[1] - v).abs() < 1e-9, "{uv:?}");
        assert!(uv_to_canonical(0.1, 0.5).is_none());
    }

    #[test]
    fn constant_face_gives_constant_texture() {
        let gray = RawImage::filled(128, 128, 1, 90).unwrap();
        let color = RawImage::new(128, 128, 3, [10u8, 120, 200].repeat(128 * 128)).unwrap();
        let face = NormalizedFace::from_parts(gray, color).unwrap();
        let tex = project_texture(&face, [10, 120, 200]);
        assert_eq!(tex, flat_texture([10, 120, 200]));
        assert_eq!((tex.width(), tex.height(), tex.channels()), (256, 256, 3));
    }

    #[test]
    fn obj_round_trip() {
        let m = HeadRig::new().pose(&[0.3; MORPH_COUNT]);
        let text = obj_string(&m);
        assert!(!text.contains("-0.000000"));
        let back = parse_obj(&text).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back
            .vertices
            .iter()
            .zip(&m.vertices)
            .chain(back.normals.iter().zip(&m.normals))
        {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-6);
            }
        }
        for (a, b) in back.uvs.iter().zip(&m.uvs) {
            assert!((a[0] - b[0]).abs() <= 1e-6 && (a[1] - b[1]).abs() <= 1e-6);
        }
        assert!(parse_obj("f 1/1/1 2/2/2 3/3/3\n").is_err());
        assert!(parse_obj("v 1 2\n").is_err());
    }
}
