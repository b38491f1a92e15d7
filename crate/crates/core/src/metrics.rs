//! Objective evaluation of rendered performances.
//!
//! Feature metrics work on token ids of matched notes: KL divergence of the
//! token histograms, Pearson correlation of the paired sequences, and a DTW
//! distance averaged over the warping path and divided by the vocabulary size.
//! Audio metrics are plain mean squared errors between chromagrams or
//! MIDI-scale spectrograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::error::{Error, Result};
use crate::midi::{resample_grid, NoteSequence};
use crate::tokenizer::{tokenize, Feature, TokenTuple, VocabSpec, N_SPECIALS, SEGMENT_LEN, TICKS_PER_BEAT};

/// Additive smoothing applied to every histogram bin before the divergence.
pub const KLD_EPSILON: f64 = 1e-6;

/// The three predicted features, in report order.
pub const EVAL_FEATURES: [Feature; 3] = [Feature::Velocity, Feature::Ioi, Feature::Duration];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSeq {
    pub values: Vec<u32>,
    pub feature: Feature,
    pub vocab_size: usize,
}

impl FeatureSeq {
    pub fn new(feature: Feature, values: Vec<u32>) -> Self {
        Self {
            values,
            feature,
            vocab_size: VocabSpec::default().size(feature),
        }
    }

    pub fn from_tokens(feature: Feature, tuples: &[TokenTuple]) -> Self {
        Self::new(feature, tuples.iter().map(|t| t.get(feature)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KldDirection {
    /// KL(target ‖ prediction).
    #[default]
    TargetToPrediction,
    /// KL(prediction ‖ target).
    PredictionToTarget,
}

/// `Σ q ln(q / p)`, with `0 ln 0 = 0`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum()
}

fn smoothed_histogram(seq: &FeatureSeq, eps: f64) -> Result<Vec<f64>> {
    let bins = seq.vocab_size - N_SPECIALS as usize;
    let mut hist = vec![0.0; bins];
    for &v in &seq.values {
        let idx = (v as usize)
            .checked_sub(N_SPECIALS as usize)
            .filter(|&i| i < bins)
            .ok_or(Error::TokenOutOfRange {
                feature: seq.feature.name(),
                position: 0,
                token: v,
                vocab: seq.vocab_size,
            })?;
        hist[idx] += 1.0;
    }
    let n = seq.values.len() as f64;
    let mut total = 0.0;
    for h in &mut hist {
        *h = *h / n + eps;
        total += *h;
    }
    hist.iter_mut().for_each(|h| *h /= total);
    Ok(hist)
}

fn check_pair(pred: &FeatureSeq, target: &FeatureSeq) -> Result<()> {
    if pred.feature != target.feature || pred.vocab_size != target.vocab_size {
        return Err(Error::Config(format!(
            "cannot compare {} with {}",
            pred.feature.name(),
            target.feature.name()
        )));
    }
    if pred.values.is_empty() || target.values.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(())
}

/// KL(target ‖ prediction) of the token histograms, ε-smoothed.
pub fn kld(pred: &FeatureSeq, target: &FeatureSeq) -> Result<f64> {
    kld_with(pred, target, KldDirection::default(), KLD_EPSILON)
}

pub fn kld_with(
    pred: &FeatureSeq,
    target: &FeatureSeq,
    direction: KldDirection,
    eps: f64,
) -> Result<f64> {
    check_pair(pred, target)?;
    let p = smoothed_histogram(pred, eps)?;
    let q = smoothed_histogram(target, eps)?;
    let d = match direction {
        KldDirection::TargetToPrediction => kl_divergence(&q, &p),
        KldDirection::PredictionToTarget => kl_divergence(&p, &q),
    };
    Ok(d.max(0.0))
}

/// Sample Pearson correlation of two equally long real sequences.
pub fn pearson_values(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two values"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant sequence"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(pred: &FeatureSeq, target: &FeatureSeq) -> Result<f64> {
    check_pair(pred, target)?;
    let x: Vec<f64> = pred.values.iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = target.values.iter().map(|&v| f64::from(v)).collect();
    pearson_values(&x, &y)
}

/// Minimal DTW cost and the length of the path achieving it. Among paths
/// of equal cost the shortest wins.
pub fn dtw_path_cost(a: &[u32], b: &[u32]) -> (u64, usize) {
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0, "DTW needs non-empty sequences");
    let inf = (u64::MAX, usize::MAX);
    let mut prev = vec![inf; m];
    let mut cur = vec![inf; m];
    for i in 0..n {
        for j in 0..m {
            let cost = u64::from(a[i].abs_diff(b[j]));
            let best = if i == 0 && j == 0 {
                (0, 0)
            } else {
                let mut best = inf;
                if i > 0 {
                    best = best.min(prev[j]);
                }
                if j > 0 {
                    best = best.min(cur[j - 1]);
                }
                if i > 0 && j > 0 {
                    best = best.min(prev[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + cost, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// DTW distance per path step, normalized by the vocabulary size.
pub fn dtwd(pred: &FeatureSeq, target: &FeatureSeq) -> Result<f64> {
    check_pair(pred, target)?;
    let (cost, len) = dtw_path_cost(&pred.values, &target.values);
    Ok(cost as f64 / len as f64 / pred.vocab_size as f64)
}

fn overlapping_frames(a: &Array2<f64>, b: &Array2<f64>) -> Result<usize> {
    if a.ncols() != b.ncols() {
        return Err(Error::Config(format!(
            "bin counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let t = a.nrows().min(b.nrows());
    if a.nrows() != b.nrows() {
        log::warn!(
            "frame counts differ ({} vs {}); truncating to {t}",
            a.nrows(),
            b.nrows()
        );
    }
    if t == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(t)
}

/// Mean squared difference over the frames both matrices share.
pub fn matrix_mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let t = overlapping_frames(a, b)?;
    let diff = &a.slice(s![..t, ..]) - &b.slice(s![..t, ..]);
    Ok(diff.mapv(|d| d * d).mean().unwrap_or(0.0))
}

pub fn chroma_mse(a: &crate::synth::Chromagram, b: &crate::synth::Chromagram) -> Result<f64> {
    check_rates(a.frame_rate, b.frame_rate)?;
    matrix_mse(&a.frames, &b.frames)
}

pub fn spectrogram_mse(a: &crate::synth::Spectrogram, b: &crate::synth::Spectrogram) -> Result<f64> {
    check_rates(a.frame_rate, b.frame_rate)?;
    matrix_mse(&a.frames, &b.frames)
}

fn check_rates(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
        return Err(Error::Config(format!("frame rates differ: {a} vs {b}")));
    }
    Ok(())
}

/// Mean and 95% confidence half-width (normal approximation) of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: Option<f64>,
    /// `1.96 · s / √n`; absent for fewer than two values.
    pub ci95: Option<f64>,
    /// Values that were undefined and left out (constant sequences).
    pub missing: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    });
    Aggregate {
        n,
        mean: Some(mean),
        ci95,
        missing: 0,
    }
}

fn aggregate_optional(values: &[Option<f64>]) -> Aggregate {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    Aggregate {
        missing: values.len() - present.len(),
        ..aggregate(&present)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMetrics {
    pub kld: Aggregate,
    pub correlation: Aggregate,
    pub dtwd: Aggregate,
}

/// Metrics of one prediction/target pair over its full matched sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub name: String,
    pub matched_notes: usize,
    pub segments: usize,
    /// Keyed by feature name; correlation is `None` when undefined.
    pub kld: BTreeMap<String, f64>,
    pub correlation: BTreeMap<String, Option<f64>>,
    pub dtwd: BTreeMap<String, f64>,
    pub chroma_mse: Option<f64>,
    pub spectrogram_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub performance_wise: BTreeMap<String, FeatureMetrics>,
    pub segment_wise: BTreeMap<String, FeatureMetrics>,
    pub chroma_mse: Option<Aggregate>,
    pub spectrogram_mse: Option<Aggregate>,
    pub items: Vec<ItemMetrics>,
}

/// One prediction/target pair to evaluate. `alignment` maps prediction note
/// indices to target note indices.
#[derive(Debug, Clone, Copy)]
pub struct EvalItem<'a> {
    pub name: &'a str,
    pub prediction: &'a NoteSequence,
    pub target: &'a NoteSequence,
    pub alignment: &'a AlignmentMap,
}

struct Triple {
    kld: f64,
    corr: Option<f64>,
    dtwd: f64,
}

fn triple(pred: &FeatureSeq, target: &FeatureSeq) -> Result<Triple> {
    let corr = match pearson(pred, target) {
        Ok(c) => Some(c),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Triple {
        kld: kld(pred, target)?,
        corr,
        dtwd: dtwd(pred, target)?,
    })
}

fn grid_tokens(seq: &NoteSequence) -> Result<Vec<TokenTuple>> {
    if seq.ppq == TICKS_PER_BEAT {
        tokenize(seq, false)
    } else {
        tokenize(&resample_grid(seq, TICKS_PER_BEAT), false)
    }
}

/// Computes every feature metric performance-wise and over 256-note windows
/// of the matched sequence.
pub fn evaluate_m2m(items: &[EvalItem<'_>]) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    let mut perf_vals: BTreeMap<&str, (Vec<f64>, Vec<Option<f64>>, Vec<f64>)> = BTreeMap::new();
    let mut seg_vals: BTreeMap<&str, (Vec<f64>, Vec<Option<f64>>, Vec<f64>)> = BTreeMap::new();
    for item in items {
        let pred_toks = grid_tokens(item.prediction)?;
        let target_toks = grid_tokens(item.target)?;
        let (pred_matched, target_matched): (Vec<TokenTuple>, Vec<TokenTuple>) = item
            .alignment
            .pairs
            .iter()
            .map(|&(i, j)| (pred_toks[i], target_toks[j]))
            .unzip();
        let mut row = ItemMetrics {
            name: item.name.to_string(),
            matched_notes: pred_matched.len(),
            segments: pred_matched.len().div_ceil(SEGMENT_LEN),
            ..Default::default()
        };
        if pred_matched.is_empty() {
            return Err(Error::EmptySequence);
        }
        for feature in EVAL_FEATURES {
            let name = feature.name();
            let p = FeatureSeq::from_tokens(feature, &pred_matched);
            let t = FeatureSeq::from_tokens(feature, &target_matched);
            let whole = triple(&p, &t)?;
            row.kld.insert(name.into(), whole.kld);
            row.correlation.insert(name.into(), whole.corr);
            row.dtwd.insert(name.into(), whole.dtwd);
            let e = perf_vals.entry(name).or_default();
            e.0.push(whole.kld);
            e.1.push(whole.corr);
            e.2.push(whole.dtwd);
            for (pc, tc) in p.values.chunks(SEGMENT_LEN).zip(t.values.chunks(SEGMENT_LEN)) {
                let part = triple(
                    &FeatureSeq::new(feature, pc.to_vec()),
                    &FeatureSeq::new(feature, tc.to_vec()),
                )?;
                let e = seg_vals.entry(name).or_default();
                e.0.push(part.kld);
                e.1.push(part.corr);
                e.2.push(part.dtwd);
            }
        }
        report.items.push(row);
    }
    let fold = |vals: &BTreeMap<&str, (Vec<f64>, Vec<Option<f64>>, Vec<f64>)>| {
        vals.iter()
            .map(|(name, (k, c, d))| {
                (
                    name.to_string(),
                    FeatureMetrics {
                        kld: aggregate(k),
                        correlation: aggregate_optional(c),
                        dtwd: aggregate(d),
                    },
                )
            })
            .collect()
    };
    report.performance_wise = fold(&perf_vals);
    report.segment_wise = fold(&seg_vals);
    Ok(report)
}

impl MetricReport {
    /// Attaches per-item audio errors (same order as `items`) and their aggregates.
    pub fn set_audio_metrics(&mut self, chroma: &[f64], spectrogram: &[f64]) {
        for (row, (&c, &s)) in self.items.iter_mut().zip(chroma.iter().zip(spectrogram)) {
            row.chroma_mse = Some(c);
            row.spectrogram_mse = Some(s);
        }
        self.chroma_mse = Some(aggregate(chroma));
        self.spectrogram_mse = Some(aggregate(spectrogram));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per item, one column per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,matched_notes,segments");
        for f in EVAL_FEATURES {
            let n = f.name();
            let _ = write!(out, ",{n}_kld,{n}_correlation,{n}_dtwd");
        }
        out.push_str(",chroma_mse,spectrogram_mse\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        for row in &self.items {
            let _ = write!(out, "{},{},{}", row.name, row.matched_notes, row.segments);
            for f in EVAL_FEATURES {
                let n = f.name();
                let _ = write!(
                    out,
                    ",{},{},{}",
                    opt(row.kld.get(n).copied()),
                    opt(row.correlation.get(n).copied().flatten()),
                    opt(row.dtwd.get(n).copied())
                );
            }
            let _ = writeln!(out, ",{},{}", opt(row.chroma_mse), opt(row.spectrogram_mse));
        }
        out
    }

    /// Text table with one row per feature and both granularities side by side.
    pub fn summary_table(&self) -> String {
        fn cell(a: &Aggregate) -> String {
            match (a.mean, a.ci95) {
                (Some(m), Some(ci)) => format!("{m:.3} ± {ci:.3}"),
                (Some(m), None) => format!("{m:.3}"),
                _ => "n/a".into(),
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22}| {:^47} | {:^47}",
            "", "Performance-wise", "Segment-wise"
        );
        let _ = writeln!(
            out,
            "{:<22}| {:<15}{:<17}{:<15} | {:<15}{:<17}{:<15}",
            "Feature", "KLD", "Correlation", "DTWD", "KLD", "Correlation", "DTWD"
        );
        for (f, label) in EVAL_FEATURES
            .iter()
            .zip(["Velocity", "Inter-Onset Interval", "Duration"])
        {
            let empty = FeatureMetrics::default();
            let p = self.performance_wise.get(f.name()).unwrap_or(&empty);
            let s = self.segment_wise.get(f.name()).unwrap_or(&empty);
            let _ = writeln!(
                out,
                "{:<22}| {:<15}{:<17}{:<15} | {:<15}{:<17}{:<15}",
                label,
                cell(&p.kld),
                cell(&p.correlation),
                cell(&p.dtwd),
                cell(&s.kld),
                cell(&s.correlation),
                cell(&s.dtwd)
            );
        }
        if let (Some(c), Some(s)) = (&self.chroma_mse, &self.spectrogram_mse) {
            let _ = writeln!(out, "Chroma MSE: {}", cell(c));
            let _ = writeln!(out, "Spectrogram MSE: {}", cell(s));
        }
        let _ = writeln!(out, "Items: {}", self.items.len());
        out
    }
}
