//! Dataset manifests, the frontal-gallery / probe split, and a procedural
//! face generator with analytic ground truth.
//!
//! Manifest JSON:
//!
//! ```json
//! {"root": "faces", "entries": [
//!   {"subject": "s000", "set": "A", "path": "s000/A_0.png", "eyes": [[56.0, 71.6], [104.0, 71.6]]},
//!   {"subject": "s000", "set": "B", "path": "s000/B_0.png", "eyes": null}
//! ]}
//! ```
//!
//! A relative `root` is resolved against the manifest's own directory, and
//! relative entry paths against `root`.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{luma, save_image, RawImage};
use crate::normalize::{EyeLandmarks, Point};

/// Pose set whose first entry per subject is enrolled.
pub const GALLERY_SET: &str = "A";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub pose_set: String,
    pub path: PathBuf,
    pub eyes: Option<EyeLandmarks>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    root: String,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    subject: String,
    set: String,
    path: String,
    eyes: Option<[[f64; 2]; 2]>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest {
            root: root.into(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.subject_id.is_empty() {
                return Err(Error::Format("entry with empty subject id".into()));
            }
            if e.pose_set.is_empty() {
                return Err(Error::Format(format!(
                    "entry for `{}` has an empty set label",
                    e.subject_id
                )));
            }
            if let Some(eyes) = &e.eyes {
                let coords = [eyes.left.x, eyes.left.y, eyes.right.x, eyes.right.y];
                if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(Error::Format(format!(
                        "eyes of {} lie outside the image",
                        e.path.display()
                    )));
                }
                if eyes.left.x >= eyes.right.x {
                    return Err(Error::Format(format!(
                        "eyes of {} are not ordered left/right",
                        e.path.display()
                    )));
                }
            }
            if !seen.insert((e.subject_id.as_str(), e.path.as_path())) {
                return Err(Error::Format(format!(
                    "duplicate entry ({}, {})",
                    e.subject_id,
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    /// Number of distinct subjects.
    pub fn subjects(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.subject_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Set labels in order of first appearance.
    pub fn set_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.pose_set) {
                out.push(e.pose_set.clone());
            }
        }
        out
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let root = base_dir.join(&file.root);
        let entries = file
            .entries
            .into_iter()
            .map(|e| ManifestEntry {
                path: root.join(&e.path),
                eyes: e
                    .eyes
                    .map(|[l, r]| EyeLandmarks::new(Point::new(l[0], l[1]), Point::new(r[0], r[1]))),
                subject_id: e.subject,
                pose_set: e.set,
            })
            .collect();
        Self::new(root, entries)
    }

    /// Serializes with entry paths relative to `root` where possible.
    pub fn to_json(&self, root_label: &str) -> String {
        let entries = self
            .entries
            .iter()
            .map(|e| EntryFile {
                subject: e.subject_id.clone(),
                set: e.pose_set.clone(),
                path: e
                    .path
                    .strip_prefix(&self.root)
                    .unwrap_or(&e.path)
                    .to_string_lossy()
                    .into_owned(),
                eyes: e
                    .eyes
                    .map(|eyes| [[eyes.left.x, eyes.left.y], [eyes.right.x, eyes.right.y]]),
            })
            .collect();
        let file = ManifestFile {
            root: root_label.to_string(),
            entries,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    DatasetManifest::from_json(&text, base)
}

/// Gallery = first set-A entry of each subject (subjects in order of first
/// appearance); probes = every other entry, in manifest order.
pub fn split_gallery_probe(m: &DatasetManifest) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    let mut subjects: Vec<&str> = Vec::new();
    for e in &m.entries {
        if !subjects.contains(&e.subject_id.as_str()) {
            subjects.push(&e.subject_id);
        }
    }
    let mut gallery_idx = Vec::with_capacity(subjects.len());
    let mut missing = Vec::new();
    for s in &subjects {
        match m
            .entries
            .iter()
            .position(|e| e.subject_id == *s && e.pose_set == GALLERY_SET)
        {
            Some(i) => gallery_idx.push(i),
            None => missing.push(*s),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Protocol(format!(
            "subjects without a set-{GALLERY_SET} frontal: {}",
            missing.join(", ")
        )));
    }
    let chosen: BTreeSet<usize> = gallery_idx.iter().copied().collect();
    let gallery = gallery_idx.iter().map(|&i| m.entries[i].clone()).collect();
    let probes = m
        .entries
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, e)| e.clone())
        .collect();
    Ok((gallery, probes))
}

// ---------------------------------------------------------------------------
// Procedural faces

/// Inclusive range of one generator parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    const fn new(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi }
    }

    fn at(&self, t: f64) -> f64 {
        self.lo + (self.hi - self.lo) * t
    }

    fn unit(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Head width over head height.
pub const FACE_ASPECT: ParamRange = ParamRange::new(0.80, 1.20);
/// Inter-ocular distance over head width.
pub const EYE_SPACING: ParamRange = ParamRange::new(0.52, 0.62);
/// Eye half-width over inter-ocular distance.
pub const EYE_SIZE: ParamRange = ParamRange::new(0.10, 0.22);
/// Nose length over the eye-to-chin distance.
pub const NOSE_LENGTH: ParamRange = ParamRange::new(0.30, 0.50);
/// Mouth width over head width.
pub const MOUTH_WIDTH: ParamRange = ParamRange::new(0.25, 0.45);
/// Rec. 601 luma of the skin color.
pub const SKIN_LUMA: ParamRange = ParamRange::new(70.0, 220.0);
pub const HAIR_DARKNESS: ParamRange = ParamRange::new(0.0, 1.0);
pub const POSE_LIMIT_DEG: f64 = 30.0;

/// Levels per stratified dimension.
const LEVELS: u64 = 3;
/// Stratified dimensions: aspect, skin luma, eye spacing, eye size, nose, mouth, hair.
const GRID_DIMS: u32 = 7;
/// Jitter around a cell center, as a fraction of the cell width.
const JITTER: f64 = 0.125;
/// Grid cells are distinct for any two seeds closer than this.
pub const SEED_WINDOW: u64 = 2187;
/// Unit of Z/2187 chosen so that the first 20 seeds differ pairwise in at
/// least three grid digits, at least one of them geometric.
const SEED_SCRAMBLE: u64 = 1867;
/// Lower bound on [`SubjectParams::distance`] between distinct seeds in one window.
pub const PARAM_DISTANCE_FLOOR: f64 = (1.0 - 2.0 * JITTER) / LEVELS as f64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub face_aspect: f64,
    pub eye_spacing: f64,
    pub eye_size: f64,
    pub nose_length: f64,
    pub mouth_width: f64,
    pub skin_rgb: [f64; 3],
    pub hair_darkness: f64,
}

impl SubjectParams {
    pub fn skin_luma(&self) -> f64 {
        let [r, g, b] = self.skin_rgb;
        0.299 * r + 0.587 * g + 0.114 * b
    }

    /// Raw parameter vector: aspect, eye spacing, eye size, nose, mouth, skin R, G, B, hair.
    pub fn to_vec(&self) -> Vec<f64> {
        let [r, g, b] = self.skin_rgb;
        vec![
            self.face_aspect,
            self.eye_spacing,
            self.eye_size,
            self.nose_length,
            self.mouth_width,
            r,
            g,
            b,
            self.hair_darkness,
        ]
    }

    /// Stratified coordinates, each rescaled to [0, 1] by its documented range.
    pub fn unit_coords(&self) -> [f64; GRID_DIMS as usize] {
        [
            FACE_ASPECT.unit(self.face_aspect),
            SKIN_LUMA.unit(self.skin_luma()),
            EYE_SPACING.unit(self.eye_spacing),
            EYE_SIZE.unit(self.eye_size),
            NOSE_LENGTH.unit(self.nose_length),
            MOUTH_WIDTH.unit(self.mouth_width),
            HAIR_DARKNESS.unit(self.hair_darkness),
        ]
    }

    /// L2 distance between unit coordinates.
    pub fn distance(&self, other: &SubjectParams) -> f64 {
        self.unit_coords()
            .iter()
            .zip(other.unit_coords())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn in_bounds(&self) -> bool {
        FACE_ASPECT.contains(self.face_aspect)
            && EYE_SPACING.contains(self.eye_spacing)
            && EYE_SIZE.contains(self.eye_size)
            && NOSE_LENGTH.contains(self.nose_length)
            && MOUTH_WIDTH.contains(self.mouth_width)
            && SKIN_LUMA.contains(self.skin_luma())
            && self.skin_rgb.iter().all(|c| (0.0..=255.0).contains(c))
            && HAIR_DARKNESS.contains(self.hair_darkness)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFaceSpec {
    pub seed: u64,
    pub params: SubjectParams,
    pub pose_deg: f64,
    pub brightness_scale: f64,
}

impl SynthFaceSpec {
    /// Same subject, different in-plane rotation and brightness.
    pub fn with_capture(&self, pose_deg: f64, brightness_scale: f64) -> Self {
        SynthFaceSpec {
            pose_deg: pose_deg.clamp(-POSE_LIMIT_DEG, POSE_LIMIT_DEG),
            brightness_scale,
            ..*self
        }
    }
}

/// Grid cell of a seed: digit 0 = aspect level, digit 1 = skin-luma level
/// (so any 9 consecutive seeds cover every shape/tone pair), digits 2..7 come
/// from a multiplicative scramble that is a bijection modulo 243.
fn grid_cell(seed: u64) -> [u64; GRID_DIMS as usize] {
    let mut cell = [0u64; GRID_DIMS as usize];
    let mut rest = (seed % SEED_WINDOW) * SEED_SCRAMBLE % SEED_WINDOW;
    for d in cell.iter_mut() {
        *d = rest % LEVELS;
        rest /= LEVELS;
    }
    cell
}

/// Deterministic subject parameters for `seed`, drawn from the stratified grid.
pub fn synth_subject(seed: u64) -> SynthFaceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_face_0000_0001);
    let cell = grid_cell(seed);
    let mut coord = |level: u64| {
        let jitter: f64 = rng.random_range(-JITTER..=JITTER);
        (level as f64 + 0.5 + jitter) / LEVELS as f64
    };
    let aspect = FACE_ASPECT.at(coord(cell[0]));
    let skin_luma = SKIN_LUMA.at(coord(cell[1]));
    let eye_spacing = EYE_SPACING.at(coord(cell[2]));
    let eye_size = EYE_SIZE.at(coord(cell[3]));
    let nose = NOSE_LENGTH.at(coord(cell[4]));
    let mouth = MOUTH_WIDTH.at(coord(cell[5]));
    let hair = HAIR_DARKNESS.at(coord(cell[6]));
    let hue: f64 = rng.random_range(-1.0..=1.0);

    SynthFaceSpec {
        seed,
        params: SubjectParams {
            face_aspect: aspect,
            eye_spacing,
            eye_size,
            nose_length: nose,
            mouth_width: mouth,
            skin_rgb: skin_from_luma(skin_luma, hue),
            hair_darkness: hair,
        },
        pose_deg: 0.0,
        brightness_scale: 1.0,
    }
}

/// Warm skin chroma scaled so the triple has exactly the requested luma.
fn skin_from_luma(target: f64, hue: f64) -> [f64; 3] {
    let chroma = [1.22 + 0.06 * hue, 0.96, 0.78 - 0.06 * hue];
    let unit = 0.299 * chroma[0] + 0.587 * chroma[1] + 0.114 * chroma[2];
    let k = target / unit;
    chroma.map(|c| c * k)
}

const BACKGROUND: [f64; 3] = [70.0, 110.0, 170.0];
const SCLERA: [f64; 3] = [240.0, 238.0, 232.0];
const PUPIL: [f64; 3] = [28.0, 24.0, 22.0];
const LIPS: [f64; 3] = [172.0, 62.0, 66.0];
const HAIR_LIGHT: [f64; 3] = [118.0, 92.0, 70.0];
/// Unit light direction in face coordinates (x right, y down, z toward the camera).
const LIGHT_DIR: [f64; 3] = [-0.2476, -0.3466, 0.9047];
/// Supersampling factor per axis.
const SS: usize = 4;

/// Layout of one face in source pixels (unrotated frame).
struct FaceLayout {
    mid: Point,
    eye_offset: f64,
    head_a: f64,
    head_b: f64,
    eye_rx: f64,
    eye_ry: f64,
    pupil_r: f64,
    brow_lift: f64,
    brow_rx: f64,
    brow_ry: f64,
    hair_line: f64,
    nose_top: f64,
    nose_len: f64,
    nose_half_w: f64,
    mouth_y: f64,
    mouth_half_w: f64,
    mouth_half_h: f64,
    backdrop_slope: f64,
}

impl FaceLayout {
    fn new(p: &SubjectParams, w: usize, h: usize) -> Self {
        let iod = 0.3 * w as f64;
        let head_a = iod / (2.0 * p.eye_spacing);
        let head_b = head_a / p.face_aspect;
        let eye_rx = p.eye_size * iod;
        let eye_ry = 0.6 * eye_rx;
        FaceLayout {
            mid: Point::new(0.5 * (w - 1) as f64, 0.45 * (h - 1) as f64),
            backdrop_slope: 0.1 / h as f64,
            eye_offset: iod / 2.0,
            head_a,
            head_b,
            eye_rx,
            eye_ry,
            pupil_r: 0.75 * eye_ry,
            brow_lift: eye_ry + 0.9 * eye_rx,
            brow_rx: 1.1 * eye_rx,
            brow_ry: 0.22 * eye_rx,
            hair_line: -0.55 * head_b,
            nose_top: 0.1 * head_b,
            nose_len: p.nose_length * head_b,
            nose_half_w: 0.07 * head_a,
            mouth_y: 0.72 * head_b,
            mouth_half_w: p.mouth_width * head_a,
            mouth_half_h: 0.05 * head_b,
        }
    }

    /// Color at offset (dx, dy) from the eye midpoint, before brightness.
    fn shade(&self, dx: f64, dy: f64, p: &SubjectParams) -> [f64; 3] {
        let inside = |x: f64, y: f64, rx: f64, ry: f64| (x / rx).powi(2) + (y / ry).powi(2) <= 1.0;
        if !inside(dx, dy, self.head_a, self.head_b) {
            // faint vertical ramp so no backdrop patch is perfectly flat
            return BACKGROUND.map(|c| c * (1.0 + self.backdrop_slope * dy));
        }
        let hair = HAIR_LIGHT.map(|c| c * (1.0 - 0.35 * p.hair_darkness));
        if dy < self.hair_line {
            return hair;
        }
        for side in [-1.0, 1.0] {
            let ex = dx - side * self.eye_offset;
            if inside(ex, dy, self.eye_rx, self.eye_ry) {
                return if ex.hypot(dy) <= self.pupil_r { PUPIL } else { SCLERA };
            }
            if inside(ex, dy + self.brow_lift, self.brow_rx, self.brow_ry) {
                return [0, 1, 2].map(|k| 0.5 * (hair[k] + p.skin_rgb[k]));
            }
        }
        if inside(dx, dy - self.mouth_y, self.mouth_half_w, self.mouth_half_h) {
            return LIPS;
        }
        let light = self.lighting(dx, dy);
        let nose_mid = self.nose_top + self.nose_len / 2.0;
        if inside(dx, dy - nose_mid, self.nose_half_w, self.nose_len / 2.0) {
            return p.skin_rgb.map(|c| c * 0.72 * light);
        }
        p.skin_rgb.map(|c| c * light)
    }

    /// Soft key light on the head ellipsoid: `1 - 0.25 (1 - max(n.l, 0))^2`.
    fn lighting(&self, dx: f64, dy: f64) -> f64 {
        let (u, v) = (dx / self.head_a, dy / self.head_b);
        let z = (1.0 - u * u - v * v).max(0.0).sqrt();
        let n_dot_l = (u * LIGHT_DIR[0] + v * LIGHT_DIR[1] + z * LIGHT_DIR[2]).max(0.0);
        1.0 - 0.25 * (1.0 - n_dot_l).powi(2)
    }
}

fn rotate_about(p: Point, c: Point, deg: f64) -> Point {
    let (s, co) = deg.to_radians().sin_cos();
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    Point::new(c.x + co * dx - s * dy, c.y + s * dx + co * dy)
}

fn image_center(w: usize, h: usize) -> Point {
    Point::new(0.5 * (w - 1) as f64, 0.5 * (h - 1) as f64)
}

/// Ground-truth eye centers of `render_synth_face(spec, w, h)`.
///
/// Pose rotates the face about the image center by `pose_deg` using
/// `x' = c + R(theta) (x - c)` in pixel coordinates (y down).
pub fn synth_eye_positions(spec: &SynthFaceSpec, w: usize, h: usize) -> EyeLandmarks {
    let layout = FaceLayout::new(&spec.params, w, h);
    let c = image_center(w, h);
    let l = Point::new(layout.mid.x - layout.eye_offset, layout.mid.y);
    let r = Point::new(layout.mid.x + layout.eye_offset, layout.mid.y);
    EyeLandmarks::new(rotate_about(l, c, spec.pose_deg), rotate_about(r, c, spec.pose_deg))
}

/// Renders an RGB procedural face with 4x4 supersampling.
pub fn render_synth_face(spec: &SynthFaceSpec, w: usize, h: usize) -> Result<RawImage> {
    if w < 64 || h < 64 {
        return Err(Error::Config(format!(
            "synthetic faces need at least 64x64 pixels, got {w}x{h}"
        )));
    }
    let p = &spec.params;
    let layout = FaceLayout::new(p, w, h);
    let c = image_center(w, h);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5;
                    // pull the sample back into the unrotated face frame
                    let q = rotate_about(Point::new(px, py), c, -spec.pose_deg);
                    let col = layout.shade(q.x - layout.mid.x, q.y - layout.mid.y, p);
                    for k in 0..3 {
                        acc[k] += col[k];
                    }
                }
            }
            for v in acc {
                let v = v / (SS * SS) as f64 * spec.brightness_scale;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage::new(w, h, 3, data)
}

/// Layout options for [`emit_synth_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDatasetOptions {
    pub subjects: usize,
    /// Set labels; the first holds the single frontal gallery image per subject,
    /// every later set holds `per_set` perturbed probes.
    pub sets: Vec<String>,
    pub per_set: usize,
    pub seed: u64,
    pub image_size: usize,
    pub max_pose_deg: f64,
    pub brightness_delta: f64,
}

impl Default for SynthDatasetOptions {
    fn default() -> Self {
        SynthDatasetOptions {
            subjects: 20,
            sets: vec!["A".into(), "B".into(), "C".into()],
            per_set: 4,
            seed: 0,
            image_size: 160,
            max_pose_deg: 5.0,
            brightness_delta: 0.05,
        }
    }
}

/// One planned image of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthItem {
    pub subject_id: String,
    pub set: String,
    pub relative_path: PathBuf,
    pub spec: SynthFaceSpec,
}

pub fn subject_label(index: usize) -> String {
    format!("s{index:03}")
}

/// Deterministic plan of every image: gallery frontals first, then probes.
pub fn plan_synth_dataset(opts: &SynthDatasetOptions) -> Result<Vec<SynthItem>> {
    if opts.sets.is_empty() {
        return Err(Error::Config("at least one set label is required".into()));
    }
    if opts.max_pose_deg < 0.0 || opts.max_pose_deg > POSE_LIMIT_DEG {
        return Err(Error::Config(format!("pose limit must lie in [0, {POSE_LIMIT_DEG}]")));
    }
    if !(0.0..1.0).contains(&opts.brightness_delta) {
        return Err(Error::Config("brightness delta must lie in [0, 1)".into()));
    }
    let mut items = Vec::new();
    for i in 0..opts.subjects {
        let id = subject_label(i);
        let spec = synth_subject(opts.seed.wrapping_add(i as u64));
        items.push(SynthItem {
            relative_path: PathBuf::from(&id).join(format!("{}_0.png", opts.sets[0])),
            subject_id: id,
            set: opts.sets[0].clone(),
            spec,
        });
    }
    for i in 0..opts.subjects {
        let id = subject_label(i);
        let base = synth_subject(opts.seed.wrapping_add(i as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(base.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x0bad_5eed);
        for set in opts.sets.iter().skip(1) {
            for k in 0..opts.per_set {
                let pose = if opts.max_pose_deg > 0.0 {
                    rng.random_range(-opts.max_pose_deg..=opts.max_pose_deg)
                } else {
                    0.0
                };
                let bright = if opts.brightness_delta > 0.0 {
                    rng.random_range(1.0 - opts.brightness_delta..=1.0 + opts.brightness_delta)
                } else {
                    1.0
                };
                items.push(SynthItem {
                    subject_id: id.clone(),
                    set: set.clone(),
                    relative_path: PathBuf::from(&id).join(format!("{set}_{k}.png")),
                    spec: base.with_capture(pose, bright),
                });
            }
        }
    }
    Ok(items)
}

/// Renders the planned dataset into `out_dir` as PNGs plus `manifest.json`.
pub fn emit_synth_dataset(opts: &SynthDatasetOptions, out_dir: &Path) -> Result<DatasetManifest> {
    use rayon::prelude::*;

    let items = plan_synth_dataset(opts)?;
    let size = opts.image_size;
    for id in items.iter().map(|it| &it.subject_id).collect::<BTreeSet<_>>() {
        let dir = out_dir.join(id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    items.par_iter().try_for_each(|it| {
        let img = render_synth_face(&it.spec, size, size)?;
        save_image(&img, out_dir.join(&it.relative_path))
    })?;
    let entries = items
        .iter()
        .map(|it| ManifestEntry {
            subject_id: it.subject_id.clone(),
            pose_set: it.set.clone(),
            path: out_dir.join(&it.relative_path),
            eyes: Some(synth_eye_positions(&it.spec, size, size)),
        })
        .collect();
    let manifest = DatasetManifest::new(out_dir, entries)?;
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json(".")).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Mean luma of an RGB or gray image.
pub fn mean_luma(img: &RawImage) -> f64 {
    if img.channels() == 1 {
        return img.mean();
    }
    let n = img.width() * img.height();
    img.data()
        .chunks_exact(3)
        .map(|p| f64::from(luma(p[0], p[1], p[2])))
        .sum::<f64>()
        / n as f64
}
