//! Patch-grid templates with two descriptors per patch.
//!
//! The normalized face is tiled by overlapping square patches. Each patch
//! yields an appearance histogram (59-bin uniform LBP) and a structure vector
//! (quadrature filter magnitudes, 5 wavelengths x 8 orientations, sampled at
//! the patch center). A [`FaceTemplate`] keeps both per-patch lists and their
//! concatenations in grid order.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::imaging::RawImage;
use crate::normalize::{NormalizedFace, CANONICAL_SIZE};

pub const DEFAULT_PATCH_SIZE: usize = 32;
pub const DEFAULT_STRIDE: usize = 16;
/// Uniform LBP bins: 58 uniform codes plus one bucket for the rest.
pub const APPEARANCE_DIM: usize = 59;
pub const STRUCTURE_WAVELENGTHS: [f64; 5] = [
    4.0,
    4.0 * std::f64::consts::SQRT_2,
    8.0,
    8.0 * std::f64::consts::SQRT_2,
    16.0,
];
pub const STRUCTURE_ORIENTATIONS: usize = 8;
pub const STRUCTURE_DIM: usize = STRUCTURE_WAVELENGTHS.len() * STRUCTURE_ORIENTATIONS;
/// Gaussian envelope width relative to wavelength.
pub const ENVELOPE_SIGMA_RATIO: f64 = 0.56;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGridSpec {
    patch_size: usize,
    stride: usize,
    image_size: usize,
    origins: Vec<(usize, usize)>,
}

impl PatchGridSpec {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    /// Top-left corners, row-major.
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Patches per grid row.
    pub fn columns(&self) -> usize {
        (self.image_size - self.patch_size) / self.stride + 1
    }
}

impl Default for PatchGridSpec {
    fn default() -> Self {
        make_patch_grid(CANONICAL_SIZE, DEFAULT_PATCH_SIZE, DEFAULT_STRIDE).expect("default grid is valid")
    }
}

pub fn make_patch_grid(image_size: usize, patch_size: usize, stride: usize) -> Result<PatchGridSpec> {
    if patch_size == 0 || patch_size > image_size {
        return Err(Error::Config(format!(
            "patch size {patch_size} must lie in 1..={image_size}"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if !(image_size - patch_size).is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "image size minus patch size ({}) is not divisible by stride {stride}",
            image_size - patch_size
        )));
    }
    let per_row = (image_size - patch_size) / stride + 1;
    let origins = (0..per_row)
        .flat_map(|r| (0..per_row).map(move |c| (c * stride, r * stride)))
        .collect();
    Ok(PatchGridSpec {
        patch_size,
        stride,
        image_size,
        origins,
    })
}

/// Square gray patch copied out of an image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    size: usize,
    pixels: Vec<u8>,
}

impl Patch {
    pub fn new(size: usize, pixels: Vec<u8>) -> Result<Self> {
        if size == 0 || pixels.len() != size * size {
            return Err(Error::Dimension(format!(
                "patch of side {size} needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        Ok(Patch { size, pixels })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let pixels = (0..size * size).map(|i| f(i % size, i / size)).collect();
        Patch { size, pixels }
    }

    /// Copies channel 0 of `img` at `(x, y)`.
    pub fn from_image(img: &RawImage, x: usize, y: usize, size: usize) -> Result<Self> {
        if x + size > img.width() || y + size > img.height() {
            return Err(Error::Dimension(format!(
                "patch at ({x}, {y}) of side {size} leaves the {}x{} image",
                img.width(),
                img.height()
            )));
        }
        let mut pixels = Vec::with_capacity(size * size);
        for row in y..y + size {
            for col in x..x + size {
                pixels.push(img.get(col, row, 0));
            }
        }
        Ok(Patch { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.size + x]
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Patch {
        Patch {
            size: self.size,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Neighbor offsets, clockwise from the top-left; offset `k` drives bit `k`.
pub const LBP_NEIGHBORS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// Bit `k` is set iff `neighbors[k] >= center`.
#[inline]
pub fn lbp_code(center: u8, neighbors: [u8; 8]) -> u8 {
    neighbors
        .iter()
        .enumerate()
        .fold(0u8, |code, (k, &n)| code | (u8::from(n >= center) << k))
}

const fn circular_transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

const fn build_uniform_bins() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if circular_transitions(code as u8) <= 2 {
            table[code] = next;
            next += 1;
        } else {
            table[code] = (APPEARANCE_DIM - 1) as u8;
        }
        code += 1;
    }
    table
}

/// LBP code -> histogram bin. Uniform codes take bins 0..58 in ascending
/// code order; every non-uniform code shares bin 58.
pub const UNIFORM_BINS: [u8; 256] = build_uniform_bins();

#[derive(Clone, Debug, PartialEq)]
pub struct AppearanceDescriptor {
    histogram: Vec<f64>,
    degenerate: bool,
}

impl AppearanceDescriptor {
    pub fn histogram(&self) -> &[f64] {
        &self.histogram
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn from_values(histogram: Vec<f64>) -> Self {
        let degenerate = histogram.iter().all(|&v| v == 0.0);
        AppearanceDescriptor { histogram, degenerate }
    }
}

/// L1-normalized uniform-LBP histogram over the patch interior.
pub fn appearance_descriptor(patch: &Patch) -> AppearanceDescriptor {
    let s = patch.size();
    let mut counts = [0u32; APPEARANCE_DIM];
    let mut total = 0u32;
    for y in 1..s.saturating_sub(1) {
        for x in 1..s - 1 {
            let mut neighbors = [0u8; 8];
            for (k, (dx, dy)) in LBP_NEIGHBORS.iter().enumerate() {
                neighbors[k] = patch.at((x as i32 + dx) as usize, (y as i32 + dy) as usize);
            }
            let code = lbp_code(patch.at(x, y), neighbors);
            counts[UNIFORM_BINS[code as usize] as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return AppearanceDescriptor {
            histogram: vec![0.0; APPEARANCE_DIM],
            degenerate: true,
        };
    }
    AppearanceDescriptor {
        histogram: counts.iter().map(|&c| f64::from(c) / f64::from(total)).collect(),
        degenerate: false,
    }
}

/// Even/odd Gabor pairs: `exp(-r^2 / 2 sigma^2) * {cos, sin}(2 pi x' / lambda)`
/// with `x' = dx cos(theta) + dy sin(theta)` measured from the patch center.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    size: usize,
    /// Row-major kernels, index `scale * 8 + orientation`.
    even: Vec<Vec<f64>>,
    odd: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn new(size: usize) -> Self {
        let c = (size as f64 - 1.0) / 2.0;
        let mut even = Vec::with_capacity(STRUCTURE_DIM);
        let mut odd = Vec::with_capacity(STRUCTURE_DIM);
        for &lambda in &STRUCTURE_WAVELENGTHS {
            let sigma = ENVELOPE_SIGMA_RATIO * lambda;
            for o in 0..STRUCTURE_ORIENTATIONS {
                let theta = o as f64 * PI / STRUCTURE_ORIENTATIONS as f64;
                let (st, ct) = theta.sin_cos();
                let mut e = Vec::with_capacity(size * size);
                let mut d = Vec::with_capacity(size * size);
                for y in 0..size {
                    for x in 0..size {
                        let (dx, dy) = (x as f64 - c, y as f64 - c);
                        let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                        let phase = 2.0 * PI * (dx * ct + dy * st) / lambda;
                        e.push(env * phase.cos());
                        d.push(env * phase.sin());
                    }
                }
                even.push(e);
                odd.push(d);
            }
        }
        FilterBank { size, even, odd }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.even.len()
    }

    pub fn is_empty(&self) -> bool {
        self.even.is_empty()
    }

    pub fn even(&self, index: usize) -> &[f64] {
        &self.even[index]
    }

    pub fn odd(&self, index: usize) -> &[f64] {
        &self.odd[index]
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        FilterBank::new(DEFAULT_PATCH_SIZE)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureDescriptor {
    responses: Vec<f64>,
    degenerate: bool,
}

impl StructureDescriptor {
    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn from_values(responses: Vec<f64>) -> Self {
        let degenerate = responses.iter().all(|&v| v == 0.0);
        StructureDescriptor { responses, degenerate }
    }
}

/// Quadrature magnitudes of the zero-mean patch, L2-normalized; a flat patch
/// gives the flagged all-zero vector.
pub fn structure_descriptor(patch: &Patch, bank: &FilterBank) -> Result<StructureDescriptor> {
    if patch.size() != bank.size() {
        return Err(Error::Dimension(format!(
            "patch side {} does not match filter side {}",
            patch.size(),
            bank.size()
        )));
    }
    let n = patch.pixels().len() as f64;
    let mean = patch.pixels().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let centered: Vec<f64> = patch.pixels().iter().map(|&v| f64::from(v) - mean).collect();
    let mut responses: Vec<f64> = (0..bank.len())
        .map(|i| {
            let (mut re, mut im) = (0.0, 0.0);
            for ((&p, &e), &o) in centered.iter().zip(bank.even(i)).zip(bank.odd(i)) {
                re += p * e;
                im += p * o;
            }
            re.hypot(im)
        })
        .collect();
    let norm = responses.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Ok(StructureDescriptor {
            responses: vec![0.0; bank.len()],
            degenerate: true,
        });
    }
    for v in &mut responses {
        *v /= norm;
    }
    Ok(StructureDescriptor {
        responses,
        degenerate: false,
    })
}

/// Shape of a template; two templates are comparable iff fingerprints match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TemplateFingerprint {
    pub patches: usize,
    pub appearance_dim: usize,
    pub structure_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceTemplate {
    appearance: Vec<AppearanceDescriptor>,
    structure: Vec<StructureDescriptor>,
    appearance_concat: Vec<f64>,
    structure_concat: Vec<f64>,
}

impl FaceTemplate {
    /// Builds a template from per-patch descriptors given in grid order.
    pub fn from_patches(appearance: Vec<AppearanceDescriptor>, structure: Vec<StructureDescriptor>) -> Result<Self> {
        if appearance.len() != structure.len() || appearance.is_empty() {
            return Err(Error::Dimension(format!(
                "{} appearance vs {} structure patches",
                appearance.len(),
                structure.len()
            )));
        }
        let da = appearance[0].histogram.len();
        let ds = structure[0].responses.len();
        if appearance.iter().any(|a| a.histogram.len() != da) || structure.iter().any(|s| s.responses.len() != ds) {
            return Err(Error::Dimension("ragged patch descriptors".into()));
        }
        let appearance_concat = appearance.iter().flat_map(|a| a.histogram.iter().copied()).collect();
        let structure_concat = structure.iter().flat_map(|s| s.responses.iter().copied()).collect();
        Ok(FaceTemplate {
            appearance,
            structure,
            appearance_concat,
            structure_concat,
        })
    }

    pub fn appearance_patches(&self) -> &[AppearanceDescriptor] {
        &self.appearance
    }

    pub fn structure_patches(&self) -> &[StructureDescriptor] {
        &self.structure
    }

    pub fn appearance_concat(&self) -> &[f64] {
        &self.appearance_concat
    }

    pub fn structure_concat(&self) -> &[f64] {
        &self.structure_concat
    }

    pub fn patch_count(&self) -> usize {
        self.appearance.len()
    }

    pub fn fingerprint(&self) -> TemplateFingerprint {
        TemplateFingerprint {
            patches: self.appearance.len(),
            appearance_dim: self.appearance[0].histogram.len(),
            structure_dim: self.structure[0].responses.len(),
        }
    }

    /// Same template with every descriptor multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> FaceTemplate {
        let appearance = self
            .appearance
            .iter()
            .map(|a| AppearanceDescriptor::from_values(a.histogram.iter().map(|v| v * alpha).collect()))
            .collect();
        let structure = self
            .structure
            .iter()
            .map(|s| StructureDescriptor::from_values(s.responses.iter().map(|v| v * alpha).collect()))
            .collect();
        FaceTemplate::from_patches(appearance, structure).expect("same shape")
    }

    /// Rounds every value to `f32`, matching what a dump round-trip yields.
    pub fn quantized(&self) -> FaceTemplate {
        let q = |v: &f64| f64::from(*v as f32);
        let appearance = self
            .appearance
            .iter()
            .map(|a| AppearanceDescriptor::from_values(a.histogram.iter().map(q).collect()))
            .collect();
        let structure = self
            .structure
            .iter()
            .map(|s| StructureDescriptor::from_values(s.responses.iter().map(q).collect()))
            .collect();
        FaceTemplate::from_patches(appearance, structure).expect("same shape")
    }
}

/// Descriptors for every grid patch of the face's equalized gray image.
pub fn extract_template(face: &NormalizedFace, grid: &PatchGridSpec, bank: &FilterBank) -> Result<FaceTemplate> {
    extract_template_from_gray(face.image(), grid, bank)
}

pub fn extract_template_from_gray(img: &RawImage, grid: &PatchGridSpec, bank: &FilterBank) -> Result<FaceTemplate> {
    if img.width() != grid.image_size() || img.height() != grid.image_size() || img.channels() != 1 {
        return Err(Error::Config(format!(
            "grid expects a {0}x{0} gray image, got {1}x{2}x{3}",
            grid.image_size(),
            img.width(),
            img.height(),
            img.channels()
        )));
    }
    if bank.size() != grid.patch_size() {
        return Err(Error::Config(format!(
            "filter bank side {} does not match patch size {}",
            bank.size(),
            grid.patch_size()
        )));
    }
    let mut appearance = Vec::with_capacity(grid.len());
    let mut structure = Vec::with_capacity(grid.len());
    for &(x, y) in grid.origins() {
        let patch = Patch::from_image(img, x, y, grid.patch_size())?;
        appearance.push(appearance_descriptor(&patch));
        structure.push(structure_descriptor(&patch, bank)?);
    }
    FaceTemplate::from_patches(appearance, structure)
}

pub const TEMPLATE_MAGIC: &[u8; 4] = b"AVFT";
pub const TEMPLATE_VERSION: u32 = 1;

/// Little-endian dump: magic, version, N, da, ds, N*da f32 appearance, N*ds f32 structure.
pub fn write_template(t: &FaceTemplate, out: &mut impl Write) -> std::io::Result<()> {
    let fp = t.fingerprint();
    out.write_all(TEMPLATE_MAGIC)?;
    for v in [
        TEMPLATE_VERSION,
        fp.patches as u32,
        fp.appearance_dim as u32,
        fp.structure_dim as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &v in t.appearance_concat().iter().chain(t.structure_concat()) {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn template_to_bytes(t: &FaceTemplate) -> Vec<u8> {
    let mut out = Vec::new();
    write_template(t, &mut out).expect("writing to a Vec");
    out
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated template: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_template(input: &mut impl Read) -> Result<FaceTemplate> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated template: {e}")))?;
    if &magic != TEMPLATE_MAGIC {
        return Err(Error::Format("bad template magic".into()));
    }
    let version = read_u32(input)?;
    if version != TEMPLATE_VERSION {
        return Err(Error::Format(format!("unsupported template version {version}")));
    }
    let n = read_u32(input)? as usize;
    let da = read_u32(input)? as usize;
    let ds = read_u32(input)? as usize;
    if n == 0 || da == 0 || ds == 0 || n.saturating_mul(da + ds) > 1 << 24 {
        return Err(Error::Format(format!("implausible template shape {n}x({da}+{ds})")));
    }
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 4];
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated template body: {e}")))?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    };
    let a = read_vec(n * da)?;
    let s = read_vec(n * ds)?;
    let appearance = a
        .chunks_exact(da)
        .map(|c| AppearanceDescriptor::from_values(c.to_vec()))
        .collect();
    let structure = s
        .chunks_exact(ds)
        .map(|c| StructureDescriptor::from_values(c.to_vec()))
        .collect();
    FaceTemplate::from_patches(appearance, structure)
}
