//! Screening scores, fold-level t intervals, paired comparisons between
//! configurations and the one-way ANOVA used for stage-wise detection.
//!
//! Fold-paired t-tests stand in for a mixed model with fold as random
//! effect; for a balanced fold design they test the same contrast.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::dataset::{ClassLabel, FoldPlan};
use crate::error::{Error, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub positive_class: ClassLabel,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn empty(positive_class: ClassLabel) -> Self {
        Self {
            positive_class,
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Entrywise sum; both sides must share the positive class.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.positive_class != other.positive_class {
            return Err(Error::InvalidInput(format!(
                "cannot merge confusions for {} and {}",
                self.positive_class, other.positive_class
            )));
        }
        Ok(Self {
            positive_class: self.positive_class,
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        })
    }
}

/// One-vs-rest tally of `positive` against every other label.
pub fn confusion(y_true: &[ClassLabel], y_pred: &[ClassLabel], positive: ClassLabel) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidInput("confusion over zero samples".into()));
    }
    let mut cm = ConfusionMatrix::empty(positive);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreName {
    Accuracy,
    Recall,
    Specificity,
    Precision,
}

impl ScoreName {
    pub const ALL: [ScoreName; 4] = [
        ScoreName::Accuracy,
        ScoreName::Recall,
        ScoreName::Specificity,
        ScoreName::Precision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreName::Accuracy => "accuracy",
            ScoreName::Recall => "recall",
            ScoreName::Specificity => "specificity",
            ScoreName::Precision => "precision",
        }
    }
}

impl fmt::Display for ScoreName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `None` marks a 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

impl Scores {
    pub fn get(&self, name: ScoreName) -> Option<f64> {
        match name {
            ScoreName::Accuracy => self.accuracy,
            ScoreName::Recall => self.recall,
            ScoreName::Specificity => self.specificity,
            ScoreName::Precision => self.precision,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn scores(cm: &ConfusionMatrix) -> Scores {
    Scores {
        precision: ratio(cm.tp, cm.tp + cm.fp),
        recall: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

/// Whole-percent rendering of a score, `-` when undefined.
pub fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.0}", 100.0 * v))
}

/// Two-sided `(1+confidence)/2` quantile of Student's t.
pub fn t_quantile(confidence: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + confidence / 2.0)
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// `P(F >= f)` for the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (k - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub score_name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ScoreSummary {
    /// `mean [low, high]` with the interval clamped to `[0, 1]`; the stored
    /// bounds stay raw.
    pub fn display(&self) -> String {
        format!(
            "{:.7} [{:.7}, {:.7}]",
            self.mean,
            self.ci_low.clamp(0.0, 1.0),
            self.ci_high.clamp(0.0, 1.0)
        )
    }
}

/// Mean with a 95% t interval over per-fold values.
pub fn fold_summary(score_name: &str, values: &[f64]) -> Result<ScoreSummary> {
    if values.len() < 2 {
        return Err(Error::InsufficientFolds(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite fold value in {score_name}")));
    }
    let k = values.len() as f64;
    let (mean, sd) = mean_and_sd(values);
    let half = t_quantile(CONFIDENCE, k - 1.0) * sd / k.sqrt();
    Ok(ScoreSummary {
        score_name: score_name.to_string(),
        values: values.to_vec(),
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub first: String,
    pub second: String,
    pub score_name: String,
    pub mean_difference: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
}

impl ComparisonResult {
    pub fn display(&self) -> String {
        format!("p={:.4}, CI [{:.8}, {:.8}]", self.p_value, self.ci_low, self.ci_high)
    }
}

/// Comparisons must be computed over one shared fold assignment.
pub fn ensure_same_plan(a: &FoldPlan, b: &FoldPlan) -> Result<()> {
    if a != b {
        return Err(Error::Pairing(
            "configurations were evaluated on different fold plans".into(),
        ));
    }
    Ok(())
}

/// Paired two-sided t-test on fold-wise differences `a - b`.
///
/// All-zero differences give `p = 1` with a zero-width interval; constant
/// nonzero differences give `p = 0`.
pub fn paired_compare(names: (&str, &str), score_name: &str, a: &[f64], b: &[f64]) -> Result<ComparisonResult> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!("{} folds against {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientFolds(a.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let k = diffs.len() as f64;
    let (mean, sd) = mean_and_sd(&diffs);
    let se = sd / k.sqrt();
    let half = t_quantile(CONFIDENCE, k - 1.0) * se;
    let p_value = if se > 0.0 {
        t_two_sided_p(mean / se, k - 1.0)
    } else if mean == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(ComparisonResult {
        first: names.0.to_string(),
        second: names.1.to_string(),
        score_name: score_name.to_string(),
        mean_difference: mean,
        p_value,
        ci_low: mean - half,
        ci_high: mean + half,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub group_means: Vec<f64>,
    /// `None` when within-group variance vanishes.
    pub f_statistic: Option<f64>,
    pub df_between: usize,
    pub df_within: usize,
    /// `None` when every observation is identical.
    pub p_value: Option<f64>,
}

/// Standard one-way ANOVA on real-valued groups (booleans as 0/1).
pub fn oneway_anova(groups: &[(&str, &[f64])]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((name, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "ANOVA group {name} has {} observations",
            g.len()
        )));
    }
    let n: usize = groups.iter().map(|(_, g)| g.len()).sum();
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let grand = groups.iter().flat_map(|(_, g)| g.iter()).sum::<f64>() / n as f64;
    let means: Vec<f64> = groups
        .iter()
        .map(|(_, g)| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|((_, g), m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|((_, g), m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (f_statistic, p_value) = if ss_within > 0.0 {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (Some(f), Some(f_survival(f, df_between as f64, df_within as f64)))
    } else if means.iter().all(|&m| m == means[0]) {
        (None, None)
    } else {
        (None, Some(0.0))
    };
    Ok(AnovaResult {
        group_names: groups.iter().map(|(name, _)| name.to_string()).collect(),
        group_sizes: groups.iter().map(|(_, g)| g.len()).collect(),
        group_means: means,
        f_statistic,
        df_between,
        df_within,
        p_value,
    })
}

impl AnovaResult {
    pub fn render(&self) -> String {
        let mut rows = vec![vec!["group".to_string(), "n".to_string(), "mean".to_string()]];
        for ((name, size), mean) in self.group_names.iter().zip(&self.group_sizes).zip(&self.group_means) {
            rows.push(vec![name.clone(), size.to_string(), format!("{mean:.4}")]);
        }
        let f = self
            .f_statistic
            .map_or_else(|| "undefined".to_string(), |f| format!("{f:.6}"));
        let p = self
            .p_value
            .map_or_else(|| "undefined".to_string(), |p| format!("{p:.4}"));
        format!(
            "{}F({}, {}) = {f}, p = {p}\n",
            render_table(&rows),
            self.df_between,
            self.df_within
        )
    }
}

/// Left-aligned text table; the first row is the header.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
