//! Closed-set identification protocol: enroll the set-A frontals, probe with
//! everything else, and summarize per pose set as rank-k accuracy and CMC.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::{split_gallery_probe, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::imaging::load_image;
use crate::matcher::{score_all, Gallery};
use crate::normalize::NormalizedFace;
use crate::pipeline::Engine;

/// A probe that could not be scored (unreadable file, eyes not found, ...).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exclusion {
    pub subject_id: String,
    pub set_label: String,
    pub path: PathBuf,
    pub code: String,
    pub reason: String,
}

/// Outcome of one scored probe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub subject_id: String,
    pub set_label: String,
    pub path: PathBuf,
    /// 1-based rank of the true subject; ties count against the probe.
    pub rank: usize,
    pub true_score: f64,
    pub top_subject: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetResult {
    pub set_label: String,
    /// Manifest images in the set; for the gallery set these are the enrolled frontals.
    pub images: usize,
    /// Scored probes.
    pub probe_count: usize,
    pub excluded: usize,
    /// `cmc[r - 1]` is the fraction of probes whose true subject ranks within
    /// `r`; empty when the set has no scored probes.
    pub cmc: Vec<f64>,
}

impl SetResult {
    pub fn from_ranks(set_label: impl Into<String>, ranks: &[usize], gallery_size: usize, excluded: usize) -> Self {
        let cmc = if ranks.is_empty() {
            Vec::new()
        } else {
            let mut hist = vec![0usize; gallery_size];
            for &r in ranks {
                hist[r.clamp(1, gallery_size) - 1] += 1;
            }
            let mut acc = 0usize;
            hist.iter()
                .map(|h| {
                    acc += h;
                    acc as f64 / ranks.len() as f64
                })
                .collect()
        };
        SetResult {
            set_label: set_label.into(),
            images: ranks.len() + excluded,
            probe_count: ranks.len(),
            excluded,
            cmc,
        }
    }

    /// CMC value at 1-based `rank`, saturating past the gallery size.
    pub fn cmc_at(&self, rank: usize) -> Option<f64> {
        if self.cmc.is_empty() || rank == 0 {
            return None;
        }
        Some(self.cmc[rank.min(self.cmc.len()) - 1])
    }

    pub fn rank1_accuracy(&self) -> Option<f64> {
        self.cmc_at(1)
    }

    /// Monotone, bounded, terminal value exactly 1 over a gallery of `gallery_size`.
    pub fn validate(&self, gallery_size: usize) -> Result<()> {
        if self.cmc.is_empty() {
            return if self.probe_count == 0 {
                Ok(())
            } else {
                Err(Error::Invariant(format!(
                    "set {}: probes scored but CMC empty",
                    self.set_label
                )))
            };
        }
        if self.cmc.len() != gallery_size {
            return Err(Error::Invariant(format!(
                "set {}: CMC has {} ranks for a gallery of {gallery_size}",
                self.set_label,
                self.cmc.len()
            )));
        }
        if let Some(w) = self.cmc.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Invariant(format!(
                "set {}: CMC decreases at rank {}",
                self.set_label,
                w + 2
            )));
        }
        if self.cmc.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant(format!(
                "set {}: CMC value outside [0, 1]",
                self.set_label
            )));
        }
        if self.cmc[self.cmc.len() - 1] != 1.0 {
            return Err(Error::Invariant(format!(
                "set {}: CMC ends at {} instead of 1",
                self.set_label,
                self.cmc[self.cmc.len() - 1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub config_label: String,
    pub gallery_size: usize,
    /// A gallery of one subject makes every rank-1 trivially perfect.
    pub degenerate_gallery: bool,
    /// One row per pose set, in manifest order (the gallery set included).
    pub sets: Vec<SetResult>,
    pub probes: Vec<ProbeOutcome>,
    pub exclusions: Vec<Exclusion>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        for s in &self.sets {
            s.validate(self.gallery_size)?;
        }
        let scored: usize = self.sets.iter().map(|s| s.probe_count).sum();
        let excluded: usize = self.sets.iter().map(|s| s.excluded).sum();
        if scored != self.probes.len() || excluded != self.exclusions.len() {
            return Err(Error::Invariant("set totals disagree with per-probe records".into()));
        }
        Ok(())
    }

    pub fn total_probes(&self) -> usize {
        self.probes.len() + self.exclusions.len()
    }
}

/// 1-based rank of `truth` among `scores`: the number of entries scoring at
/// least as high as the true subject.
pub fn pessimistic_rank(scores: &[(String, f64)], truth: &str) -> Option<usize> {
    let t = scores.iter().find(|(id, _)| id == truth)?.1;
    Some(scores.iter().filter(|(_, s)| *s >= t).count())
}

pub fn run_identification_eval(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<EvalReport> {
    let mut reports = evaluate_configs(manifest, std::slice::from_ref(config))?;
    Ok(reports.remove(0))
}

/// Evaluates several configurations on one manifest; images are loaded and
/// normalized once. Every returned report has passed [`EvalReport::validate`].
pub fn evaluate_configs(manifest: &DatasetManifest, configs: &[PipelineConfig]) -> Result<Vec<EvalReport>> {
    if configs.is_empty() {
        return Err(Error::Config("no configuration to evaluate".into()));
    }
    let (gallery_entries, probe_entries) = split_gallery_probe(manifest)?;

    // A gallery image that cannot be processed leaves its subject unscoreable,
    // so it aborts the run instead of becoming an exclusion.
    let gallery_faces: Vec<NormalizedFace> = gallery_entries
        .par_iter()
        .map(|e| load_and_normalize(e).map_err(|err| with_context(err, e)))
        .collect::<Result<_>>()?;
    let probe_faces: Vec<Result<NormalizedFace>> = probe_entries.par_iter().map(load_and_normalize).collect();

    let mut reports = Vec::with_capacity(configs.len());
    for config in configs {
        let engine = Engine::new(*config)?;
        let mut gallery = Gallery::new();
        let templates: Vec<_> = gallery_faces
            .par_iter()
            .map(|f| engine.template(f))
            .collect::<Result<_>>()?;
        for (e, t) in gallery_entries.iter().zip(templates) {
            gallery.enroll(e.subject_id.clone(), t)?;
        }
        let mc = engine.match_config();
        let outcomes: Vec<std::result::Result<ProbeOutcome, Exclusion>> = probe_entries
            .par_iter()
            .zip(probe_faces.par_iter())
            .map(|(entry, face)| {
                let exclude = |err: &Error| Exclusion {
                    subject_id: entry.subject_id.clone(),
                    set_label: entry.pose_set.clone(),
                    path: entry.path.clone(),
                    code: err.code().to_string(),
                    reason: err.to_string(),
                };
                let face = face.as_ref().map_err(exclude)?;
                engine
                    .template(face)
                    .and_then(|t| score_all(&t, &gallery, &mc))
                    .map(|scores| outcome(entry, &scores))
                    .map_err(|e| exclude(&e))
            })
            .collect();

        let mut probes = Vec::new();
        let mut exclusions = Vec::new();
        for o in outcomes {
            match o {
                Ok(p) => probes.push(p),
                Err(x) => exclusions.push(x),
            }
        }
        let sets = manifest
            .set_labels()
            .into_iter()
            .map(|label| {
                let ranks: Vec<usize> = probes.iter().filter(|p| p.set_label == label).map(|p| p.rank).collect();
                let excluded = exclusions.iter().filter(|x| x.set_label == label).count();
                let images = manifest.entries.iter().filter(|e| e.pose_set == label).count();
                SetResult {
                    images,
                    ..SetResult::from_ranks(label, &ranks, gallery.len(), excluded)
                }
            })
            .collect();
        let report = EvalReport {
            config: *config,
            config_label: config.label(),
            gallery_size: gallery.len(),
            degenerate_gallery: gallery.len() < 2,
            sets,
            probes,
            exclusions,
        };
        report.validate()?;
        reports.push(report);
    }
    Ok(reports)
}

fn load_and_normalize(e: &ManifestEntry) -> Result<NormalizedFace> {
    let img = load_image(&e.path)?;
    crate::normalize::normalize_face(&img, e.eyes)
}

fn with_context(err: Error, e: &ManifestEntry) -> Error {
    match err {
        Error::Io { .. } => err,
        other => Error::Protocol(format!("gallery image {}: {other}", e.path.display())),
    }
}

fn outcome(entry: &ManifestEntry, scores: &[crate::matcher::MatchScore]) -> ProbeOutcome {
    let pairs: Vec<(String, f64)> = scores.iter().map(|s| (s.subject_id.clone(), s.fused)).collect();
    let rank = pessimistic_rank(&pairs, &entry.subject_id).expect("split guarantees a gallery entry per subject");
    let top = scores
        .iter()
        .min_by(|a, b| crate::matcher::rank_order(a, b))
        .expect("gallery is non-empty");
    ProbeOutcome {
        subject_id: entry.subject_id.clone(),
        set_label: entry.pose_set.clone(),
        path: entry.path.clone(),
        rank,
        true_score: pairs
            .iter()
            .find(|(id, _)| *id == entry.subject_id)
            .map(|p| p.1)
            .unwrap_or(f64::NAN),
        top_subject: top.subject_id.clone(),
    }
}

// ---------------------------------------------------------------------------
// Output

fn percent(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => "n/a".to_string(),
    }
}

/// Comparison table: set label, scored image count, then one rank-1 column
/// per report in the order given. Rows follow the first report's sets.
pub fn format_table(reports: &[EvalReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut header = vec!["Set".to_string(), "Number of Images".to_string()];
    header.extend(reports.iter().map(|r| r.config_label.clone()));
    let mut rows = vec![header];
    for (i, set) in first.sets.iter().enumerate() {
        let mut row = vec![set.set_label.clone(), set.images.to_string()];
        row.extend(
            reports
                .iter()
                .map(|r| percent(r.sets.get(i).and_then(SetResult::rank1_accuracy))),
        );
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&line(&rows[0]));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in &rows[1..] {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_number(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// `set,images,excluded,config,rank1,rank5`; empty accuracy cells for sets without probes.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("set,images,excluded,config,rank1,rank5\n");
    for r in reports {
        for s in &r.sets {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&s.set_label),
                s.images,
                s.excluded,
                csv_field(&r.config_label),
                csv_number(s.cmc_at(1)),
                csv_number(s.cmc_at(5)),
            );
        }
    }
    out
}

/// `set,config,rank,cmc`, one line per rank of every non-empty set.
pub fn cmc_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("set,config,rank,cmc\n");
    for r in reports {
        for s in &r.sets {
            for (i, v) in s.cmc.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{v:.6}",
                    csv_field(&s.set_label),
                    csv_field(&r.config_label),
                    i + 1
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmc_from_ranks() {
        let s = SetResult::from_ranks("B", &[1, 1, 2, 4], 4, 0);
        assert_eq!(s.cmc, vec![0.5, 0.75, 0.75, 1.0]);
        assert_eq!(s.rank1_accuracy(), Some(0.5));
        assert_eq!(s.cmc_at(5), Some(1.0));
        s.validate(4).unwrap();
        let empty = SetResult::from_ranks("A", &[], 4, 0);
        assert_eq!(empty.rank1_accuracy(), None);
        empty.validate(4).unwrap();
    }

    #[test]
    fn broken_cmc_is_an_invariant_error() {
        let mut s = SetResult::from_ranks("B", &[1, 2], 2, 0);
        s.cmc = vec![0.6, 0.5];
        assert!(matches!(s.validate(2), Err(Error::Invariant(_))));
        s.cmc = vec![0.5, 0.9];
        assert!(matches!(s.validate(2), Err(Error::Invariant(_))));
        s.cmc = vec![0.5];
        assert!(matches!(s.validate(2), Err(Error::Invariant(_))));
    }

    #[test]
    fn ties_rank_pessimistically() {
        let scores = vec![("a".into(), 0.9), ("b".into(), 0.9), ("c".into(), 0.1)];
        assert_eq!(pessimistic_rank(&scores, "a"), Some(2));
        assert_eq!(pessimistic_rank(&scores, "b"), Some(2));
        assert_eq!(pessimistic_rank(&scores, "c"), Some(3));
        assert_eq!(pessimistic_rank(&scores, "z"), None);
    }

    fn report(label: &str, sets: Vec<SetResult>) -> EvalReport {
        EvalReport {
            config: PipelineConfig::default(),
            config_label: label.into(),
            gallery_size: 4,
            degenerate_gallery: false,
            sets,
            probes: vec![],
            exclusions: vec![],
        }
    }

    #[test]
    fn table_rows_and_columns() {
        let mut ranks = vec![1; 252];
        ranks.extend([2; 48]);
        let a = report(
            "m1",
            vec![
                SetResult::from_ranks("A", &ranks, 4, 0),
                SetResult::from_ranks("E", &[], 4, 0),
            ],
        );
        let b = report(
            "m2",
            vec![
                SetResult::from_ranks("A", &[1; 300], 4, 0),
                SetResult::from_ranks("E", &[], 4, 0),
            ],
        );
        let t = format_table(&[a, b]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Set | Number of Images | m1    | m2");
        assert_eq!(lines[2], "A   | 300              | 84.0% | 100.0%");
        assert_eq!(lines[3], "E   | 0                | n/a   | n/a");
    }

    #[test]
    fn csv_shapes() {
        let r = report("cfg,1", vec![SetResult::from_ranks("B", &[1, 3], 4, 1)]);
        let s = summary_csv(std::slice::from_ref(&r));
        assert_eq!(
            s,
            "set,images,excluded,config,rank1,rank5\nB,3,1,\"cfg,1\",0.500000,1.000000\n"
        );
        let c = cmc_csv(&[r]);
        assert_eq!(c.lines().count(), 5);
        assert!(c.ends_with("B,\"cfg,1\",4,1.000000\n"));
    }
}
