//! Quality-score based corpus filtering.
//!
//! Scores come from a [`QualityScorer`]: either the built-in proxy (a blind
//! SNR estimate from the spread of frame log-energies) or externally
//! computed scores supplied in a sidecar file. The proxy assumes
//! speech-like temporal dynamics: steady tones and stationary noise both
//! score low, and long files are scored as a whole rather than per segment.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioBuffer};
use crate::dsp::percentile_sorted;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub source: String,
    pub duration_s: f64,
    pub fs: u32,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_error(path: &Path, line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.to_string(),
    }
}

/// Reads a JSONL manifest. Blank lines are skipped; ids must be unique and
/// durations positive.
pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, e))?;
        if !(entry.duration_s > 0.0 && entry.duration_s.is_finite()) {
            return Err(parse_error(
                path,
                line_no,
                format!("duration_s must be positive, got {}", entry.duration_s),
            ));
        }
        if entry.fs == 0 {
            return Err(parse_error(path, line_no, "fs must be positive"));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(Error::DuplicateId(entry.id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_manifest<'a>(entries: impl IntoIterator<Item = &'a ManifestEntry>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Frame length used by the proxy scorer.
pub const PROXY_FRAME_MS: f64 = 32.0;
/// Spread of frame energies (dB) that maps to a score of 1.
pub const PROXY_SPREAD_DB: f64 = 60.0;
const PROXY_FLOOR: f64 = 1e-10;

/// Frame log-energies in dB (32 ms frames, 50 % hop). A buffer shorter than
/// one frame is treated as a single frame.
pub fn frame_log_energies(buf: &AudioBuffer) -> Vec<f64> {
    let frame = ((PROXY_FRAME_MS / 1000.0 * buf.fs() as f64).round() as usize).max(2);
    let hop = frame / 2;
    let x = buf.samples();
    let level = |w: &[f64]| 10.0 * (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64 + PROXY_FLOOR).log10();
    if x.len() <= frame {
        return vec![level(x)];
    }
    (0..=(x.len() - frame) / hop).map(|i| level(&x[i * hop..i * hop + frame])).collect()
}

/// Blind quality proxy in [0, 1]: `(P90 - P10) / 60` of the frame
/// log-energies, clamped. Silence scores 0.
pub fn proxy_quality_score(buf: &AudioBuffer) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::Empty("audio"));
    }
    if buf.energy() == 0.0 {
        return Ok(0.0);
    }
    let mut levels = frame_log_energies(buf);
    levels.sort_by(f64::total_cmp);
    let spread = percentile_sorted(&levels, 0.9) - percentile_sorted(&levels, 0.1);
    Ok((spread / PROXY_SPREAD_DB).clamp(0.0, 1.0))
}

/// Source of per-entry quality scores.
pub trait QualityScorer: Sync {
    fn name(&self) -> &str;

    /// Scores one entry; relative audio paths resolve against `base_dir`.
    fn score_entry(&self, entry: &ManifestEntry, base_dir: &Path) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProxyScorer;

impl QualityScorer for ProxyScorer {
    fn name(&self) -> &str {
        "proxy"
    }

    fn score_entry(&self, entry: &ManifestEntry, base_dir: &Path) -> Result<f64> {
        proxy_quality_score(&read_wav(base_dir.join(&entry.path))?)
    }
}

/// Precomputed scores keyed by entry id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SidecarScores {
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub score: f64,
}

impl SidecarScores {
    /// Reads a JSONL file of `{"id": ..., "score": ...}` lines.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut scores = BTreeMap::new();
        for (line_no, line) in read_lines(path)? {
            let s: ScoreLine = serde_json::from_str(&line).map_err(|e| parse_error(path, line_no, e))?;
            if !s.score.is_finite() {
                return Err(parse_error(path, line_no, "score must be finite"));
            }
            if scores.insert(s.id.clone(), s.score).is_some() {
                return Err(Error::DuplicateId(s.id));
            }
        }
        Ok(Self { scores })
    }

    pub fn write(lines: &[ScoreLine], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for l in lines {
            writeln!(f, "{}", serde_json::to_string(l).expect("score lines serialize")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Scores in manifest order; every entry must have one.
    pub fn align(&self, entries: &[ManifestEntry]) -> Result<Vec<f64>> {
        entries
            .iter()
            .map(|e| {
                self.scores
                    .get(&e.id)
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("no score for entry {:?}", e.id)))
            })
            .collect()
    }
}

impl QualityScorer for SidecarScores {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn score_entry(&self, entry: &ManifestEntry, _base_dir: &Path) -> Result<f64> {
        self.scores
            .get(&entry.id)
            .copied()
            .ok_or_else(|| Error::UnknownAsset(entry.id.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` equal-width edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub median: f64,
}

/// Middle value, or the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("score list"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Equal-width histogram over [0, 1]; the last bin is closed and values
/// outside the range land in the edge bins.
pub fn quality_histogram(scores: &[f64], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::param("n_bins", "must be at least 1"));
    }
    let median = median(scores)?;
    let mut counts = vec![0; n_bins];
    for &s in scores {
        let b = ((s * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram {
        edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
        counts,
        median,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub entries: usize,
    pub hours: f64,
    pub histogram: Histogram,
}

/// Per-source histograms, keyed by corpus label.
pub fn histograms_by_source(entries: &[ManifestEntry], scores: &[f64], n_bins: usize) -> Result<BTreeMap<String, SourceSummary>> {
    check_aligned(entries, scores)?;
    let mut grouped: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();
    for (e, &s) in entries.iter().zip(scores) {
        let slot = grouped.entry(&e.source).or_default();
        slot.0.push(s);
        slot.1 += e.duration_s / 3600.0;
    }
    grouped
        .into_iter()
        .map(|(src, (s, hours))| {
            Ok((
                src.to_string(),
                SourceSummary {
                    entries: s.len(),
                    hours,
                    histogram: quality_histogram(&s, n_bins)?,
                },
            ))
        })
        .collect()
}

fn check_aligned(entries: &[ManifestEntry], scores: &[f64]) -> Result<()> {
    if entries.len() != scores.len() {
        return Err(Error::Shape(format!("{} entries but {} scores", entries.len(), scores.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Published threshold-to-hours pairs, carried verbatim into every report as
/// an annotation. They come from a different scorer and corpus and are never
/// recomputed here.
pub const REFERENCE_THRESHOLD_HOURS: [(f64, f64); 3] = [(0.50, 2518.0), (0.65, 2506.0), (0.72, 629.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub tau: f64,
    pub hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnnotation {
    pub note: String,
    pub points: Vec<ReferencePoint>,
}

impl Default for ReferenceAnnotation {
    fn default() -> Self {
        Self {
            note: "reference VQScore thresholds and resulting training hours (0.50 = no filtering); \
                   annotation only, not reproduced by the proxy scorer"
                .into(),
            points: REFERENCE_THRESHOLD_HOURS
                .iter()
                .map(|&(tau, hours)| ReferencePoint { tau, hours })
                .collect(),
        }
    }
}

pub const DEFAULT_HIST_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub tau: f64,
    pub total_entries: usize,
    pub total_hours: f64,
    pub kept_hours: f64,
    pub dropped_hours: f64,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    pub per_source: BTreeMap<String, SourceSummary>,
    pub reference: ReferenceAnnotation,
}

/// Keeps entries scoring at least `tau`.
pub fn filter_by_threshold(entries: &[ManifestEntry], scores: &[f64], tau: f64) -> Result<QualityReport> {
    filter_with_bins(entries, scores, tau, DEFAULT_HIST_BINS)
}

pub fn filter_with_bins(entries: &[ManifestEntry], scores: &[f64], tau: f64, n_bins: usize) -> Result<QualityReport> {
    check_aligned(entries, scores)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::param("tau", format!("{tau} outside [0, 1]")));
    }
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    let (mut kept_s, mut dropped_s) = (0.0, 0.0);
    for (e, &s) in entries.iter().zip(scores) {
        if s >= tau {
            kept.push(e.id.clone());
            kept_s += e.duration_s;
        } else {
            dropped.push(e.id.clone());
            dropped_s += e.duration_s;
        }
    }
    let total_s: f64 = entries.iter().map(|e| e.duration_s).sum();
    let per_source = if entries.is_empty() {
        BTreeMap::new()
    } else {
        histograms_by_source(entries, scores, n_bins)?
    };
    Ok(QualityReport {
        tau,
        total_entries: entries.len(),
        total_hours: total_s / 3600.0,
        kept_hours: kept_s / 3600.0,
        dropped_hours: dropped_s / 3600.0,
        kept,
        dropped,
        per_source,
        reference: ReferenceAnnotation::default(),
    })
}

/// `source,bin_low,bin_high,count,median` rows for external plotting.
pub fn histogram_csv(per_source: &BTreeMap<String, SourceSummary>) -> String {
    let mut out = String::from("source,bin_low,bin_high,count,median\n");
    for (src, summary) in per_source {
        let h = &summary.histogram;
        for (i, c) in h.counts.iter().enumerate() {
            out.push_str(&format!("{src},{},{},{c},{}\n", h.edges[i], h.edges[i + 1], h.median));
        }
    }
    out
}
