//! Evaluation protocol: precision at a threshold and average precision
//! over candidate instances, plus an argmax track-accuracy diagnostic and
//! a uniform-random baseline scorer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EditAnnotation, FeaturePool};
use crate::model::{score_group, ModelError, ModelParams, StreamMode};
use crate::training::{generate_boundary_samples, SampleGroup, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no instances to evaluate")]
    Empty,
    #[error("average precision needs at least one positive label")]
    NoPositives,
    #[error("group {index} malformed: {reason}")]
    MalformedGroup { index: usize, reason: String },
    #[error("no sample groups in the evaluation scenes")]
    NoGroups,
    #[error(transparent)]
    Sampler(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// All six headline numbers of one evaluation run. Percentages in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision_at_half: f64,
    pub average_precision: f64,
    pub track_accuracy: f64,
    pub instance_count: usize,
    pub group_count: usize,
    pub positives_count: usize,
}

/// Precision at a threshold. When nothing is predicted positive the value
/// is defined as 0 and flagged, so reports stay total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionAt {
    pub percent: f64,
    pub no_predicted_positives: bool,
}

/// TP/(TP+FP) over instances with `score ≥ tau` (inclusive), ×100.
pub fn precision_at(scores: &[f64], labels: &[bool], tau: f64) -> Result<PrecisionAt, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = 0usize;
    let mut predicted = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= tau {
            predicted += 1;
            if y {
                tp += 1;
            }
        }
    }
    if predicted == 0 {
        return Ok(PrecisionAt {
            percent: 0.0,
            no_predicted_positives: true,
        });
    }
    Ok(PrecisionAt {
        percent: 100.0 * tp as f64 / predicted as f64,
        no_predicted_positives: false,
    })
}

/// Recall-weighted average precision over the ranked score list, ×100.
/// Ties rank in original order (stable sort).
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let total_positives = labels.iter().filter(|&&y| y).count();
    if total_positives == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0f64;
    for idx in order {
        seen += 1;
        if labels[idx] {
            tp += 1;
            ap += tp as f64 / seen as f64;
        }
    }
    Ok(100.0 * ap / total_positives as f64)
}

/// Scores of one group's instances and the index of its single positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub scores: Vec<f64>,
    pub positive: usize,
}

impl GroupScores {
    fn check(&self, index: usize) -> Result<(), EvalError> {
        if self.scores.is_empty() {
            return Err(EvalError::MalformedGroup {
                index,
                reason: "no instances".into(),
            });
        }
        if self.positive >= self.scores.len() {
            return Err(EvalError::MalformedGroup {
                index,
                reason: format!(
                    "positive index {} out of range ({})",
                    self.positive,
                    self.scores.len()
                ),
            });
        }
        Ok(())
    }

    fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (j, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = j;
            }
        }
        best
    }
}

/// Fraction of groups whose argmax score is the positive instance, ×100.
/// Ties go to the lowest index.
pub fn track_accuracy(groups: &[GroupScores]) -> Result<f64, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut hits = 0usize;
    for (index, g) in groups.iter().enumerate() {
        g.check(index)?;
        if g.argmax() == g.positive {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / groups.len() as f64)
}

/// All three metrics over per-group scores.
pub fn report_from_scores(groups: &[GroupScores], tau: f64) -> Result<EvalReport, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::NoGroups);
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (index, g) in groups.iter().enumerate() {
        g.check(index)?;
        for (j, &s) in g.scores.iter().enumerate() {
            scores.push(s);
            labels.push(j == g.positive);
        }
    }
    Ok(EvalReport {
        precision_at_half: precision_at(&scores, &labels, tau)?.percent,
        average_precision: average_precision(&scores, &labels)?,
        track_accuracy: track_accuracy(groups)?,
        instance_count: scores.len(),
        group_count: groups.len(),
        positives_count: groups.len(),
    })
}

/// Score sample groups with the model. Groups evaluate independently, so
/// they run in parallel and collect back in order.
pub fn score_sample_groups(
    params: &ModelParams<f32>,
    groups: &[SampleGroup],
    mode: StreamMode,
) -> Result<Vec<GroupScores>, EvalError> {
    groups
        .par_iter()
        .map(|g| {
            let scores = score_group(params, &g.history, &g.context, mode)?;
            Ok(GroupScores {
                scores: scores.into_iter().map(f64::from).collect(),
                positive: g.positive,
            })
        })
        .collect()
}

/// The full protocol: boundary-centric sample groups with teacher-forced
/// histories (the training procedure), scored and reduced to a report.
pub fn evaluate(
    params: &ModelParams<f32>,
    scenes: &[(FeaturePool, EditAnnotation)],
    step: usize,
    groups_per_boundary: usize,
    mode: StreamMode,
) -> Result<EvalReport, EvalError> {
    let groups = evaluation_groups(params.config.w, scenes, step, groups_per_boundary)?;
    let scored = score_sample_groups(params, &groups, mode)?;
    report_from_scores(&scored, 0.5)
}

/// The sample groups `evaluate` scores, exposed so baselines can share them.
pub fn evaluation_groups(
    w: usize,
    scenes: &[(FeaturePool, EditAnnotation)],
    step: usize,
    groups_per_boundary: usize,
) -> Result<Vec<SampleGroup>, EvalError> {
    let mut groups = Vec::new();
    for (scene, (pool, ann)) in scenes.iter().enumerate() {
        let got = generate_boundary_samples(pool, ann, scene, w, step, groups_per_boundary)?;
        groups.extend(got.groups);
    }
    if groups.is_empty() {
        return Err(EvalError::NoGroups);
    }
    Ok(groups)
}

/// Group sizes and positive positions, all a baseline needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLayout {
    pub size: usize,
    pub positive: usize,
}

impl From<&SampleGroup> for GroupLayout {
    fn from(g: &SampleGroup) -> Self {
        GroupLayout {
            size: g.tracks(),
            positive: g.positive,
        }
    }
}

/// Seeded uniform-random scores over the given groups.
pub fn random_baseline(layouts: &[GroupLayout], seed: u64) -> Result<EvalReport, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<GroupScores> = layouts
        .iter()
        .map(|l| GroupScores {
            scores: (0..l.size).map(|_| rng.random_range(0.0..1.0)).collect(),
            positive: l.positive,
        })
        .collect();
    report_from_scores(&groups, 0.5)
}

/// Aligned comparison table, one row per labelled report.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = format!(
        "{:<name_w$}  {:>13}  {:>7}  {:>12}  {:>9}  {:>7}\n",
        "Method", "Precision(%)", "AP(%)", "TrackAcc(%)", "Instances", "Groups"
    );
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:>13.2}  {:>7.2}  {:>12.2}  {:>9}  {:>7}\n",
            name,
            r.precision_at_half,
            r.average_precision,
            r.track_accuracy,
            r.instance_count,
            r.group_count
        ));
    }
    out
}
