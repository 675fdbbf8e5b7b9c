//! Scoring predictions against ground truth.
//!
//! All metrics are computed as exact rationals; floats appear only in the
//! serialized report and in display strings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::ImpactScore;
use crate::report::RunReport;

pub type Rational = Ratio<u128>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("nothing to score")]
    Empty,
    #[error("ground truth line {line}: {reason}")]
    Truth { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows are ground truth, columns are predictions, both in `ImpactScore::ALL` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn tp(&self, label: ImpactScore) -> u64 {
        let i = label.index();
        self.counts[i][i]
    }

    pub fn fp(&self, label: ImpactScore) -> u64 {
        let j = label.index();
        (0..4).map(|i| self.counts[i][j]).sum::<u64>() - self.counts[j][j]
    }

    pub fn fn_(&self, label: ImpactScore) -> u64 {
        let i = label.index();
        self.counts[i].iter().sum::<u64>() - self.counts[i][i]
    }

    pub fn row_sum(&self, label: ImpactScore) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    /// Matrix with minor-visual folded into no-XBI (both rows and columns).
    pub fn merge_minor_into_none(&self) -> ConfusionMatrix {
        let fold = |i: usize| if i == 1 { 0 } else { i };
        let mut out = ConfusionMatrix::default();
        for i in 0..4 {
            for j in 0..4 {
                out.counts[fold(i)][fold(j)] += self.counts[i][j];
            }
        }
        out
    }
}

pub fn confusion(pred: &[ImpactScore], truth: &[ImpactScore]) -> Result<ConfusionMatrix, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in pred.iter().zip(truth) {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

fn ratio_or_zero(num: u64, den: u64) -> Rational {
    if den == 0 {
        Rational::from_integer(0)
    } else {
        Rational::new(num as u128, den as u128)
    }
}

/// Mean over the four labels of tp/(tp+fp); a never-predicted label counts 0.
pub fn macro_precision(m: &ConfusionMatrix) -> Rational {
    ImpactScore::ALL
        .iter()
        .map(|&l| ratio_or_zero(m.tp(l), m.tp(l) + m.fp(l)))
        .fold(Rational::from_integer(0), |a, b| a + b)
        / Rational::from_integer(4)
}

/// Mean over the four labels of tp/(tp+fn); an absent label counts 0.
pub fn macro_recall(m: &ConfusionMatrix) -> Rational {
    ImpactScore::ALL
        .iter()
        .map(|&l| ratio_or_zero(m.tp(l), m.tp(l) + m.fn_(l)))
        .fold(Rational::from_integer(0), |a, b| a + b)
        / Rational::from_integer(4)
}

/// Exact-label match rate: trace / total.
pub fn accuracy(m: &ConfusionMatrix) -> Result<Rational, EvalError> {
    match m.total() {
        0 => Err(EvalError::Empty),
        total => Ok(Rational::new(m.trace() as u128, total as u128)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Set when precision had no predicted positives (reported as 0).
    pub precision_undefined: bool,
    /// Set when recall had no actual positives (reported as 0).
    pub recall_undefined: bool,
}

impl BinaryMetrics {
    pub fn exact_accuracy(&self) -> Rational {
        ratio_or_zero(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }

    pub fn exact_precision(&self) -> Rational {
        ratio_or_zero(self.tp, self.tp + self.fp)
    }

    pub fn exact_recall(&self) -> Rational {
        ratio_or_zero(self.tp, self.tp + self.fn_)
    }
}

/// Positive means "present".
pub fn binary_metrics(pred: &[bool], truth: &[bool]) -> Result<BinaryMetrics, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut m = BinaryMetrics {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        tp,
        tn,
        fp,
        fn_,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    };
    m.accuracy = to_f64(m.exact_accuracy());
    m.precision = to_f64(m.exact_precision());
    m.recall = to_f64(m.exact_recall());
    Ok(m)
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// One ground-truth row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLabel {
    pub impact: ImpactScore,
    pub ads_present: bool,
    pub dynamics_present: bool,
}

pub type GroundTruth = BTreeMap<String, TruthLabel>;

pub const TRUTH_HEADER: [&str; 4] = ["site_id", "impact", "ads_present", "dynamics_present"];

fn parse_yes_no_field(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Parse `site_id,impact,ads_present,dynamics_present` CSV text.
pub fn parse_truth_csv(text: &str) -> Result<GroundTruth, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| EvalError::Truth {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != TRUTH_HEADER {
        return Err(EvalError::Truth {
            line: 1,
            reason: format!("expected header {}", TRUTH_HEADER.join(",")),
        });
    }
    let mut out = GroundTruth::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| EvalError::Truth { line, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let site_id = record[0].to_string();
        if site_id.is_empty() {
            return Err(bad("empty site_id".into()));
        }
        let impact = record[1].parse::<ImpactScore>().map_err(|e| bad(e.to_string()))?;
        let ads_present =
            parse_yes_no_field(&record[2]).ok_or_else(|| bad(format!("ads_present {:?} is not yes/no", &record[2])))?;
        let dynamics_present = parse_yes_no_field(&record[3])
            .ok_or_else(|| bad(format!("dynamics_present {:?} is not yes/no", &record[3])))?;
        if out
            .insert(
                site_id.clone(),
                TruthLabel {
                    impact,
                    ads_present,
                    dynamics_present,
                },
            )
            .is_some()
        {
            return Err(bad(format!("duplicate site_id {site_id}")));
        }
    }
    Ok(out)
}

pub fn read_truth_csv(path: &Path) -> Result<GroundTruth, EvalError> {
    parse_truth_csv(&std::fs::read_to_string(path)?)
}

/// Rows in `site_id` order, hyphenated impact labels, yes/no booleans.
pub fn write_truth_csv(truth: &GroundTruth) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRUTH_HEADER).expect("in-memory write");
    for (site, t) in truth {
        let yn = |b: bool| if b { "yes" } else { "no" };
        w.write_record([
            site.as_str(),
            t.impact.label(),
            yn(t.ads_present),
            yn(t.dynamics_present),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    pub accuracy: String,
    pub macro_precision: String,
    pub macro_recall: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub scored: usize,
    pub unscored: Vec<String>,
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub exact: ExactMetrics,
    pub per_label: BTreeMap<ImpactScore, LabelStats>,
    /// Accuracy with minor-visual counted as no-XBI on both sides.
    pub merged_minor_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_ads: Option<BinaryMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_dynamics: Option<BinaryMetrics>,
}

fn display_ratio(r: Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Score the report's sites that have ground truth; the rest are unscored.
pub fn score_run(report: &RunReport, truth: &GroundTruth) -> Result<EvalReport, EvalError> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut ads = (Vec::new(), Vec::new(), true);
    let mut dyns = (Vec::new(), Vec::new(), true);
    let mut unscored = Vec::new();
    for site in &report.sites {
        let Some(t) = truth.get(&site.site_id) else {
            unscored.push(site.site_id.clone());
            continue;
        };
        pred.push(site.xbi.impact);
        gold.push(t.impact);
        match &site.ads {
            Some(pair) => {
                ads.0.push(pair.iter().any(|f| f.present));
                ads.1.push(t.ads_present);
            }
            None => ads.2 = false,
        }
        match &site.dynamics {
            Some(pair) => {
                dyns.0.push(pair.iter().any(|f| f.present));
                dyns.1.push(t.dynamics_present);
            }
            None => dyns.2 = false,
        }
    }
    let matrix = confusion(&pred, &gold)?;
    let acc = accuracy(&matrix)?;
    let mp = macro_precision(&matrix);
    let mr = macro_recall(&matrix);
    let per_label = ImpactScore::ALL
        .iter()
        .map(|&l| {
            let (tp, fp, fn_) = (matrix.tp(l), matrix.fp(l), matrix.fn_(l));
            (
                l,
                LabelStats {
                    tp,
                    fp,
                    fn_,
                    precision: to_f64(ratio_or_zero(tp, tp + fp)),
                    recall: to_f64(ratio_or_zero(tp, tp + fn_)),
                },
            )
        })
        .collect();
    let binary = |(p, t, ran): (Vec<bool>, Vec<bool>, bool)| -> Result<Option<BinaryMetrics>, EvalError> {
        if ran {
            binary_metrics(&p, &t).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(EvalReport {
        schema: 1,
        scored: pred.len(),
        unscored,
        merged_minor_accuracy: to_f64(accuracy(&matrix.merge_minor_into_none())?),
        accuracy: to_f64(acc),
        macro_precision: to_f64(mp),
        macro_recall: to_f64(mr),
        exact: ExactMetrics {
            accuracy: display_ratio(acc),
            macro_precision: display_ratio(mp),
            macro_recall: display_ratio(mr),
        },
        matrix,
        per_label,
        binary_ads: binary(ads)?,
        binary_dynamics: binary(dyns)?,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Plain-text summary: headline metrics, the confusion matrix, per-label rows.
pub fn render_summary(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scored sites: {}  unscored: {}", r.scored, r.unscored.len());
    let _ = writeln!(s, "accuracy:         {} ({})", pct(r.accuracy), r.exact.accuracy);
    let _ = writeln!(
        s,
        "macro precision:  {} ({})",
        pct(r.macro_precision),
        r.exact.macro_precision
    );
    let _ = writeln!(
        s,
        "macro recall:     {} ({})",
        pct(r.macro_recall),
        r.exact.macro_recall
    );
    let _ = writeln!(
        s,
        "accuracy (minor-visual merged into no-XBI): {}",
        pct(r.merged_minor_accuracy)
    );
    let _ = writeln!(s);
    let _ = write!(s, "{:<22}", "truth \\ predicted");
    for l in ImpactScore::ALL {
        let _ = write!(s, "{:>20}", l.label());
    }
    let _ = writeln!(s);
    for l in ImpactScore::ALL {
        let _ = write!(s, "{:<22}", l.label());
        for c in r.matrix.counts[l.index()] {
            let _ = write!(s, "{c:>20}");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<22}{:>6}{:>6}{:>6}{:>12}{:>12}",
        "label", "tp", "fp", "fn", "precision", "recall"
    );
    for (l, st) in &r.per_label {
        let _ = writeln!(
            s,
            "{:<22}{:>6}{:>6}{:>6}{:>12}{:>12}",
            l.label(),
            st.tp,
            st.fp,
            st.fn_,
            pct(st.precision),
            pct(st.recall)
        );
    }
    for (name, b) in [("ads", &r.binary_ads), ("dynamics", &r.binary_dynamics)] {
        match b {
            Some(b) => {
                let _ = writeln!(
                    s,
                    "{name} detection: accuracy {} precision {}{} recall {}{}",
                    pct(b.accuracy),
                    pct(b.precision),
                    if b.precision_undefined { " (undefined)" } else { "" },
                    pct(b.recall),
                    if b.recall_undefined { " (undefined)" } else { "" },
                );
            }
            None => {
                let _ = writeln!(s, "{name} detection: stage not run");
            }
        }
    }
    s
}
