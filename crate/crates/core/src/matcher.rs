//! Cosine-correlation matching of face templates.
//!
//! `cos(p, g) = p.g / (|p| |g|)` is evaluated per channel (appearance,
//! structure), either on the concatenated template vectors or as the mean of
//! per-patch cosines, then fused by a convex combination.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FaceTemplate, TemplateFingerprint};

/// Result of one cosine evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either vector has zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<Cosine> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Cosine {
        value: (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Appearance,
    Structure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMode {
    /// Cosine of the concatenated vectors.
    Concat,
    /// Mean of per-patch cosines; degenerate patches count as 0.
    #[default]
    PatchMean,
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(ScoringMode::Concat),
            "patch-mean" | "patch_mean" => Ok(ScoringMode::PatchMean),
            other => Err(Error::Config(format!(
                "unknown mode `{other}`, expected concat or patch-mean"
            ))),
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringMode::Concat => "concat",
            ScoringMode::PatchMean => "patch-mean",
        })
    }
}

fn check_comparable(t1: &FaceTemplate, t2: &FaceTemplate) -> Result<()> {
    if t1.fingerprint() != t2.fingerprint() {
        return Err(Error::Dimension(format!(
            "template shapes differ: {:?} vs {:?}",
            t1.fingerprint(),
            t2.fingerprint()
        )));
    }
    Ok(())
}

pub fn channel_similarity(t1: &FaceTemplate, t2: &FaceTemplate, channel: Channel, mode: ScoringMode) -> Result<f64> {
    check_comparable(t1, t2)?;
    match (channel, mode) {
        (Channel::Appearance, ScoringMode::Concat) => Ok(cosine(t1.appearance_concat(), t2.appearance_concat())?.value),
        (Channel::Structure, ScoringMode::Concat) => Ok(cosine(t1.structure_concat(), t2.structure_concat())?.value),
        (Channel::Appearance, ScoringMode::PatchMean) => patch_mean(
            t1.appearance_patches().iter().map(|a| a.histogram()),
            t2.appearance_patches().iter().map(|a| a.histogram()),
        ),
        (Channel::Structure, ScoringMode::PatchMean) => patch_mean(
            t1.structure_patches().iter().map(|s| s.responses()),
            t2.structure_patches().iter().map(|s| s.responses()),
        ),
    }
}

fn patch_mean<'a>(a: impl ExactSizeIterator<Item = &'a [f64]>, b: impl Iterator<Item = &'a [f64]>) -> Result<f64> {
    let n = a.len();
    let mut sum = 0.0;
    for (x, y) in a.zip(b) {
        sum += cosine(x, y)?.value;
    }
    Ok(sum / n as f64)
}

/// Convex channel weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub appearance: f64,
    pub structure: f64,
}

impl FusionWeights {
    pub fn new(appearance: f64, structure: f64) -> Result<Self> {
        let w = FusionWeights { appearance, structure };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.appearance.is_finite()
            && self.structure.is_finite()
            && self.appearance >= 0.0
            && self.structure >= 0.0
            && (self.appearance + self.structure - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "fusion weights ({}, {}) must be non-negative and sum to 1",
                self.appearance, self.structure
            )))
        }
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            appearance: 0.5,
            structure: 0.5,
        }
    }
}

impl FromStr for FusionWeights {
    type Err = Error;

    /// Parses `"a,s"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [a, b] = parts.as_slice() else {
            return Err(Error::Config(format!("weights `{s}` must look like 0.5,0.5")));
        };
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("weight `{v}` is not a number")))
        };
        FusionWeights::new(parse(a)?, parse(b)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub weights: FusionWeights,
    pub mode: ScoringMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    #[serde(rename = "subject")]
    pub subject_id: String,
    pub fused: f64,
    #[serde(rename = "appearance")]
    pub appearance_sim: f64,
    #[serde(rename = "structure")]
    pub structure_sim: f64,
}

/// Channel similarities of one pair and their fusion. `subject_id` is empty
/// until the score is attached to a gallery entry.
pub fn fused_score(
    t1: &FaceTemplate,
    t2: &FaceTemplate,
    weights: FusionWeights,
    mode: ScoringMode,
) -> Result<MatchScore> {
    weights.validate()?;
    let appearance_sim = channel_similarity(t1, t2, Channel::Appearance, mode)?;
    let structure_sim = channel_similarity(t1, t2, Channel::Structure, mode)?;
    Ok(MatchScore {
        subject_id: String::new(),
        fused: fuse(weights, appearance_sim, structure_sim),
        appearance_sim,
        structure_sim,
    })
}

#[inline]
pub fn fuse(weights: FusionWeights, appearance: f64, structure: f64) -> f64 {
    weights.appearance * appearance + weights.structure * structure
}

/// Enrolled templates keyed by subject id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gallery {
    entries: BTreeMap<String, FaceTemplate>,
    fingerprint: Option<TemplateFingerprint>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enroll(&mut self, subject_id: impl Into<String>, template: FaceTemplate) -> Result<()> {
        let id = subject_id.into();
        if id.is_empty() {
            return Err(Error::Config("subject id must not be empty".into()));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateSubject(id));
        }
        let fp = template.fingerprint();
        match self.fingerprint {
            Some(existing) if existing != fp => {
                return Err(Error::Dimension(format!(
                    "template shape {fp:?} differs from gallery shape {existing:?}"
                )))
            }
            _ => self.fingerprint = Some(fp),
        }
        self.entries.insert(id, template);
        Ok(())
    }

    pub fn get(&self, subject_id: &str) -> Option<&FaceTemplate> {
        self.entries.get(subject_id)
    }

    pub fn contains(&self, subject_id: &str) -> bool {
        self.entries.contains_key(subject_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fingerprint(&self) -> Option<TemplateFingerprint> {
        self.fingerprint
    }

    /// Entries in ascending subject id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &FaceTemplate)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateList {
    pub ranked: Vec<MatchScore>,
    pub k: usize,
}

#[derive(Serialize)]
struct CandidateListJson<'a> {
    probe: &'a str,
    candidates: &'a [MatchScore],
}

impl CandidateList {
    pub fn to_json(&self, probe: &str) -> String {
        serde_json::to_string(&CandidateListJson {
            probe,
            candidates: &self.ranked,
        })
        .expect("candidate list serializes")
    }

    pub fn candidates_json(&self) -> String {
        serde_json::to_string(&self.ranked).expect("candidates serialize")
    }

    pub fn top(&self) -> Option<&MatchScore> {
        self.ranked.first()
    }
}

/// Descending fused score, then ascending subject id.
pub fn rank_order(a: &MatchScore, b: &MatchScore) -> std::cmp::Ordering {
    b.fused
        .total_cmp(&a.fused)
        .then_with(|| a.subject_id.cmp(&b.subject_id))
}

/// Scores `probe` against every gallery entry, unsorted, in gallery order.
pub fn score_all(probe: &FaceTemplate, gallery: &Gallery, config: &MatchConfig) -> Result<Vec<MatchScore>> {
    config.weights.validate()?;
    let entries: Vec<(&str, &FaceTemplate)> = gallery.iter().collect();
    entries
        .par_iter()
        .map(|(id, t)| {
            let mut s = fused_score(probe, t, config.weights, config.mode)?;
            s.subject_id = (*id).to_string();
            Ok(s)
        })
        .collect()
}

pub fn identify(probe: &FaceTemplate, gallery: &Gallery, k: usize, config: &MatchConfig) -> Result<CandidateList> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut scores = score_all(probe, gallery, config)?;
    scores.sort_by(rank_order);
    scores.truncate(k);
    Ok(CandidateList { ranked: scores, k })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub decision: Decision,
    pub score: MatchScore,
}

/// Accepts iff the fused score against the claimed subject reaches `threshold`.
pub fn verify(
    probe: &FaceTemplate,
    claimed: &str,
    gallery: &Gallery,
    threshold: f64,
    config: &MatchConfig,
) -> Result<Verification> {
    let enrolled = gallery
        .get(claimed)
        .ok_or_else(|| Error::UnknownSubject(claimed.to_string()))?;
    let mut score = fused_score(probe, enrolled, config.weights, config.mode)?;
    score.subject_id = claimed.to_string();
    let decision = if score.fused >= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Ok(Verification { decision, score })
}
