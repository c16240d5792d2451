//! Error metrics against self-reported ground truth, binarized
//! classification metrics, and report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{score_items, AssessmentMethod, AssessmentResult, Condition, ItemBank};
use crate::perception::ChannelBundle;
use crate::personas::TraitId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("prediction has {pred} values but truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no values to compare")]
    EmptyInput,
    #[error("classification needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no ground truth for player {0:?}")]
    MissingTruth(String),
    #[error("ground truth file: {0}")]
    Truth(String),
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    let abs: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(abs / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    MedianSplitOnTruth,
    FixedMidpoint3,
}

impl ThresholdRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdRule::MedianSplitOnTruth => "median_split_on_truth",
            ThresholdRule::FixedMidpoint3 => "fixed_midpoint_3",
        }
    }

    /// The cut point; a value is High when strictly above it.
    pub fn threshold(self, truth: &[f64]) -> f64 {
        match self {
            ThresholdRule::FixedMidpoint3 => 3.0,
            ThresholdRule::MedianSplitOnTruth => {
                let mut v = truth.to_vec();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    (v[n / 2 - 1] + v[n / 2]) / 2.0
                }
            }
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median_split_on_truth" | "median" => Ok(ThresholdRule::MedianSplitOnTruth),
            "fixed_midpoint_3" | "midpoint" => Ok(ThresholdRule::FixedMidpoint3),
            _ => Err(format!("unknown threshold rule {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    High,
}

pub fn binarize(values: &[f64], threshold: f64) -> Vec<Level> {
    values
        .iter()
        .map(|v| if *v > threshold { Level::High } else { Level::Low })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Fraction in [0, 1].
    pub accuracy: f64,
    /// Unweighted mean of the High and Low F1 scores, in [0, 1].
    pub macro_f1: f64,
    /// Truth holds a single class; the absent class contributes F1 = 0.
    pub degenerate: bool,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn classify_labels(pred: &[Level], truth: &[Level]) -> Result<Classification, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.len() < 2 {
        return Err(MetricError::TooFewSamples(pred.len()));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let per_class = [Level::High, Level::Low].map(|c| {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count();
        let fp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t != c).count();
        let fn_ = pred.iter().zip(truth).filter(|(p, t)| **p != c && **t == c).count();
        f1(tp, fp, fn_)
    });
    let degenerate = truth.iter().all(|t| *t == truth[0]);
    if degenerate {
        tracing::debug!("degenerate split: truth holds one class");
    }
    Ok(Classification {
        accuracy: correct as f64 / pred.len() as f64,
        macro_f1: (per_class[0] + per_class[1]) / 2.0,
        degenerate,
    })
}

pub fn binarize_and_classify(pred: &[f64], truth: &[f64], rule: ThresholdRule) -> Result<Classification, MetricError> {
    check(pred, truth)?;
    let thr = rule.threshold(truth);
    classify_labels(&binarize(pred, thr), &binarize(truth, thr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub player_id: String,
    /// Self-report scores in `TraitId::ALL` order.
    pub scores: [f64; 5],
}

impl GroundTruth {
    pub fn get(&self, t: TraitId) -> f64 {
        self.scores[TraitId::ALL.iter().position(|x| *x == t).unwrap()]
    }
}

/// Reads `player_id` plus either five dimension scores (O,C,E,A,N) or the
/// 44 raw item answers (1-5), which are scored with `bank`. A header row
/// is expected.
pub fn parse_ground_truth(text: &str, bank: &ItemBank) -> Result<Vec<GroundTruth>, MetricError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let err = |m: String| MetricError::Truth(m);
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let row = line + 2;
        let player_id = rec.get(0).unwrap_or("").to_string();
        if player_id.is_empty() {
            return Err(err(format!("row {row}: empty player_id")));
        }
        let nums: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>().map_err(|_| err(format!("row {row}: {c:?} is not a number"))))
            .collect::<Result<_, _>>()?;
        if nums.iter().any(|v| !(1.0..=5.0).contains(v)) {
            return Err(err(format!("row {row}: values must lie in [1, 5]")));
        }
        let scores = match nums.len() {
            5 => [nums[0], nums[1], nums[2], nums[3], nums[4]],
            44 => {
                if nums.iter().any(|v| v.fract() != 0.0) {
                    return Err(err(format!("row {row}: item answers must be integers")));
                }
                let values: BTreeMap<u32, i64> = nums.iter().enumerate().map(|(i, v)| (i as u32 + 1, *v as i64)).collect();
                score_items(bank, &values).map_err(|e| err(format!("row {row}: {e}")))?
            }
            n => return Err(err(format!("row {row}: expected 5 scores or 44 answers, found {n} values"))),
        };
        out.push(GroundTruth { player_id, scores });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub group: Option<String>,
    pub method: AssessmentMethod,
    pub model_id: String,
    pub bundle: ChannelBundle,
    pub condition: Condition,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    #[serde(flatten)]
    pub key: CellKey,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold_rule: ThresholdRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    pub cells: Vec<MetricCell>,
}

/// Groups results by trait × condition × method × model × bundle (and an
/// optional player grouping) and scores each group against ground truth.
pub fn build_report(
    results: &[AssessmentResult],
    truths: &[GroundTruth],
    rule: ThresholdRule,
    grouping: Option<(&str, &BTreeMap<String, String>)>,
) -> Result<MetricReport, MetricError> {
    let truth_by_player: BTreeMap<&str, &GroundTruth> = truths.iter().map(|t| (t.player_id.as_str(), t)).collect();
    let mut pairs: BTreeMap<CellKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in results {
        let truth = truth_by_player
            .get(r.player_id.as_str())
            .ok_or_else(|| MetricError::MissingTruth(r.player_id.clone()))?;
        let group = match grouping {
            Some((_, map)) => Some(map.get(&r.player_id).cloned().unwrap_or_else(|| "(unknown)".into())),
            None => None,
        };
        for t in TraitId::ALL {
            let key = CellKey {
                group: group.clone(),
                method: r.method,
                model_id: r.model_id.clone(),
                bundle: r.bundle,
                condition: r.condition,
                trait_id: t,
            };
            let entry = pairs.entry(key).or_default();
            entry.0.push(r.scores.get(t));
            entry.1.push(truth.get(t));
        }
    }
    let cells = pairs
        .into_iter()
        .map(|(key, (pred, truth))| {
            Ok(MetricCell {
                key,
                n: pred.len(),
                rmse: rmse(&pred, &truth)?,
                mae: mae(&pred, &truth)?,
                classification: binarize_and_classify(&pred, &truth, rule).ok(),
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(MetricReport {
        threshold_rule: rule,
        group_by: grouping.map(|(name, _)| name.to_string()),
        cells,
    })
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "group", "method", "model", "bundle", "condition", "trait", "n", "rmse", "mae", "accuracy", "macro_f1",
            "degenerate", "threshold_rule",
        ])
        .expect("in-memory write");
        for c in &self.cells {
            let (acc, f1, deg) = match &c.classification {
                Some(x) => (format!("{:.6}", x.accuracy), format!("{:.6}", x.macro_f1), x.degenerate.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                c.key.group.clone().unwrap_or_default(),
                c.key.method.to_string(),
                c.key.model_id.clone(),
                c.key.bundle.to_string(),
                c.key.condition.to_string(),
                c.key.trait_id.code().to_string(),
                c.n.to_string(),
                format!("{:.6}", c.rmse),
                format!("{:.6}", c.mae),
                acc,
                f1,
                deg,
                self.threshold_rule.as_str().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// One table per group × method × model × bundle: rows are conditions,
    /// columns RMSE and MAE per trait.
    pub fn to_text(&self) -> String {
        let mut tables: BTreeMap<(Option<String>, AssessmentMethod, String, ChannelBundle), BTreeMap<Condition, BTreeMap<TraitId, &MetricCell>>> =
            BTreeMap::new();
        for c in &self.cells {
            tables
                .entry((c.key.group.clone(), c.key.method, c.key.model_id.clone(), c.key.bundle))
                .or_default()
                .entry(c.key.condition)
                .or_default()
                .insert(c.key.trait_id, c);
        }
        let mut out = format!("Binarization rule: {}\n", self.threshold_rule.as_str());
        for ((group, method, model, bundle), rows) in tables {
            out.push('\n');
            if let (Some(name), Some(g)) = (&self.group_by, &group) {
                let _ = write!(out, "[{name} = {g}] ");
            }
            let _ = writeln!(out, "{method} | {model} | {bundle}");
            let _ = write!(out, "{:<10}", "Condition");
            for t in TraitId::ALL {
                let _ = write!(out, " {:>8} {:>8}", format!("{} RMSE", t.code()), format!("{} MAE", t.code()));
            }
            let _ = writeln!(out, " {:>4}", "n");
            for (cond, cells) in rows {
                let _ = write!(out, "{:<10}", cond.to_string());
                let mut n = 0;
                for t in TraitId::ALL {
                    match cells.get(&t) {
                        Some(c) => {
                            n = n.max(c.n);
                            let _ = write!(out, " {:>8.3} {:>8.3}", c.rmse, c.mae);
                        }
                        None => {
                            let _ = write!(out, " {:>8} {:>8}", "-", "-");
                        }
                    }
                }
                let _ = writeln!(out, " {n:>4}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_oracles() {
        assert!((rmse(&[3.0, 4.0], &[1.0, 4.0]).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert!((mae(&[3.0, 4.0], &[1.0, 4.0]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(rmse(&[2.5], &[4.0]).unwrap(), mae(&[2.5], &[4.0]).unwrap());
        assert_eq!(rmse(&[], &[]), Err(MetricError::EmptyInput));
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch { .. })));
    }

    #[test]
    fn four_sample_case() {
        use Level::*;
        let c = classify_labels(&[High, Low, Low, Low], &[High, High, Low, Low]).unwrap();
        assert_eq!(c.accuracy, 0.75);
        // High: tp1 fp0 fn1 -> 2/3; Low: tp2 fp1 fn0 -> 4/5.
        assert!((c.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!(!c.degenerate);
    }

    #[test]
    fn degenerate_truth_is_flagged() {
        let c = binarize_and_classify(&[4.0, 2.0, 4.5], &[4.0, 4.2, 3.5], ThresholdRule::FixedMidpoint3).unwrap();
        assert!(c.degenerate);
        assert!((c.accuracy - 2.0 / 3.0).abs() < 1e-12);
        // Only High is present in truth; Low's F1 is 0.
        assert!((c.macro_f1 - 0.8 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn median_threshold() {
        assert_eq!(ThresholdRule::MedianSplitOnTruth.threshold(&[1.0, 5.0, 3.0]), 3.0);
        assert_eq!(ThresholdRule::MedianSplitOnTruth.threshold(&[1.0, 2.0, 4.0, 5.0]), 3.0);
    }

    #[test]
    fn truth_from_scores_or_answers() {
        let bank = ItemBank::placeholder();
        let answers = vec!["3"; 44].join(",");
        let header: Vec<String> = (1..=44).map(|i| format!("q{i}")).collect();
        let text = format!("player_id,{}\np2,{answers}\n", header.join(","));
        let t = parse_ground_truth(&text, &bank).unwrap();
        assert_eq!(t[0].scores, [3.0; 5]);
        let t = parse_ground_truth("player_id,O,C,E,A,N\np1,4.2,3,2.5,1,5\n", &bank).unwrap();
        assert_eq!(t[0].get(TraitId::Extraversion), 2.5);
        assert!(parse_ground_truth("player_id,O,C,E,A,N\np1,6,3,2.5,1,5\n", &bank).is_err());
        assert!(parse_ground_truth("player_id,O,C\np1,3,3\n", &bank).is_err());
    }
}
