//! ERDE_θ, latency cost, F-latency and the usual classification scores.
//!
//! All functions take one [`Decision`] per gold user. `k` is the number of
//! posts read when the final verdict was issued (1-based); a user judged
//! negative at the end of the history has `k = total_posts`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, UserHistory};
use crate::error::{ErdError, Result};
use crate::scalar::{median, sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
}

impl Verdict {
    pub fn is_positive(self) -> bool {
        self == Verdict::Positive
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub user_id: String,
    pub verdict: Verdict,
    pub k: usize,
}

impl Decision {
    pub fn new(user_id: impl Into<String>, verdict: Verdict, k: usize) -> Self {
        Decision {
            user_id: user_id.into(),
            verdict,
            k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "FN")]
    FalseNegative,
    #[serde(rename = "TN")]
    TrueNegative,
}

impl Outcome {
    pub fn is_correct(self) -> bool {
        matches!(self, Outcome::TruePositive | Outcome::TrueNegative)
    }

    pub fn code(self) -> &'static str {
        match self {
            Outcome::TruePositive => "TP",
            Outcome::FalsePositive => "FP",
            Outcome::FalseNegative => "FN",
            Outcome::TrueNegative => "TN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct MetricsConfig<F> {
    /// Deadline used by [`erde`] and for model selection.
    pub theta: usize,
    /// Deadlines reported as `ERDE<θ>` columns.
    pub report_thetas: Vec<usize>,
    /// `None` means the gold positive ratio.
    pub c_fp: Option<F>,
    pub c_fn: F,
    pub c_tp: F,
    pub f_latency_p: F,
}

impl<F: Scalar> Default for MetricsConfig<F> {
    fn default() -> Self {
        MetricsConfig {
            theta: 30,
            report_thetas: vec![5, 30],
            c_fp: None,
            c_fn: F::one(),
            c_tp: F::one(),
            f_latency_p: F::c(0.0078),
        }
    }
}

impl<F: Scalar> MetricsConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.theta == 0 || self.report_thetas.contains(&0) {
            return Err(ErdError::Config("theta must be at least 1".into()));
        }
        let costs = [self.c_fp.unwrap_or(F::zero()), self.c_fn, self.c_tp];
        if costs.iter().any(|c| !(c.is_finite() && *c >= F::zero())) {
            return Err(ErdError::Config("costs must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn c_fp_for(&self, gold: &Corpus) -> F {
        self.c_fp
            .unwrap_or_else(|| F::from_count(gold.positive_count()) / F::from_count(gold.len()))
    }
}

pub fn classify_outcome(decision: &Decision, gold: &UserHistory) -> Result<Outcome> {
    if decision.user_id != gold.user_id {
        return Err(ErdError::Contract(format!(
            "decision for {} checked against gold user {}",
            decision.user_id, gold.user_id
        )));
    }
    Ok(outcome_of(decision.verdict, gold.label.is_positive()))
}

fn outcome_of(verdict: Verdict, positive: bool) -> Outcome {
    match (verdict.is_positive(), positive) {
        (true, true) => Outcome::TruePositive,
        (true, false) => Outcome::FalsePositive,
        (false, true) => Outcome::FalseNegative,
        (false, false) => Outcome::TrueNegative,
    }
}

/// `lc_θ(k) = 1 - 1 / (1 + e^(k - θ))`, evaluated as the logistic of `k - θ`
/// so early decisions do not round to exactly zero.
pub fn latency_cost<F: Scalar>(k: usize, theta: usize) -> F {
    sigmoid(F::from_count(k) - F::from_count(theta))
}

/// Pairs every gold user with its decision, in gold order.
pub fn align<'a>(
    decisions: &'a [Decision],
    gold: &'a Corpus,
) -> Result<Vec<(&'a Decision, &'a UserHistory)>> {
    let mut by_user: HashMap<&str, &Decision> = HashMap::with_capacity(decisions.len());
    for d in decisions {
        if d.k == 0 {
            return Err(ErdError::Contract(format!("decision for {} has k = 0", d.user_id)));
        }
        if by_user.insert(d.user_id.as_str(), d).is_some() {
            return Err(ErdError::Contract(format!("two decisions for {}", d.user_id)));
        }
    }
    let mut pairs = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    for user in &gold.users {
        match by_user.remove(user.user_id.as_str()) {
            Some(d) => pairs.push((d, user)),
            None => missing.push(user.user_id.clone()),
        }
    }
    if !missing.is_empty() || !by_user.is_empty() {
        let mut extra: Vec<&str> = by_user.into_keys().collect();
        extra.sort_unstable();
        return Err(ErdError::Contract(format!(
            "decisions do not match gold users (missing: {missing:?}, unknown: {extra:?})"
        )));
    }
    Ok(pairs)
}

pub fn erde<F: Scalar>(decisions: &[Decision], gold: &Corpus, config: &MetricsConfig<F>) -> Result<F> {
    erde_at(decisions, gold, config, config.theta)
}

/// Mean per-user ERDE cost at deadline `theta`.
pub fn erde_at<F: Scalar>(
    decisions: &[Decision],
    gold: &Corpus,
    config: &MetricsConfig<F>,
    theta: usize,
) -> Result<F> {
    let pairs = align(decisions, gold)?;
    let c_fp = config.c_fp_for(gold);
    let total: F = pairs
        .iter()
        .map(|(d, u)| match outcome_of(d.verdict, u.label.is_positive()) {
            Outcome::FalsePositive => c_fp,
            Outcome::FalseNegative => config.c_fn,
            Outcome::TruePositive => latency_cost::<F>(d.k, theta) * config.c_tp,
            Outcome::TrueNegative => F::zero(),
        })
        .sum();
    Ok(total / F::from_count(pairs.len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::FalseNegative => self.fn_ += 1,
            Outcome::TrueNegative => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub accuracy: F,
}

fn ratio<F: Scalar>(num: usize, den: usize) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::from_count(num) / F::from_count(den)
    }
}

/// Positive-class scores; any zero denominator yields 0.
pub fn scores_from_counts<F: Scalar>(c: &ConfusionCounts) -> ClassificationScores<F> {
    let precision: F = ratio(c.tp, c.tp + c.fp);
    let recall: F = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > F::zero() {
        F::c(2.0) * precision * recall / (precision + recall)
    } else {
        F::zero()
    };
    ClassificationScores {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

pub fn confusion_counts(decisions: &[Decision], gold: &Corpus) -> Result<ConfusionCounts> {
    let mut counts = ConfusionCounts::default();
    for (d, u) in align(decisions, gold)? {
        counts.add(outcome_of(d.verdict, u.label.is_positive()));
    }
    Ok(counts)
}

pub fn classification_metrics<F: Scalar>(
    decisions: &[Decision],
    gold: &Corpus,
) -> Result<ClassificationScores<F>> {
    Ok(scores_from_counts(&confusion_counts(decisions, gold)?))
}

/// Speed penalty for a detection after `k` posts: `-1 + 2 / (1 + e^(-p (k - 1)))`.
pub fn latency_penalty<F: Scalar>(k: usize, p: F) -> F {
    let x = -p * (F::from_count(k) - F::one());
    -F::one() + F::c(2.0) / (F::one() + x.exp())
}

/// F1 scaled by `1 - median(penalty(k))` over true positives; 0 without any.
pub fn f_latency<F: Scalar>(
    decisions: &[Decision],
    gold: &Corpus,
    config: &MetricsConfig<F>,
) -> Result<F> {
    let pairs = align(decisions, gold)?;
    let mut counts = ConfusionCounts::default();
    let mut penalties = Vec::new();
    for (d, u) in &pairs {
        let o = outcome_of(d.verdict, u.label.is_positive());
        counts.add(o);
        if o == Outcome::TruePositive {
            penalties.push(latency_penalty(d.k, config.f_latency_p));
        }
    }
    let f1 = scores_from_counts::<F>(&counts).f1;
    let speed = median(&penalties).map_or(F::zero(), |m| F::one() - m);
    Ok(f1 * speed)
}

/// Everything reported for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub accuracy: F,
    pub erde: BTreeMap<usize, F>,
    pub f_latency: F,
    pub counts: ConfusionCounts,
    pub median_tp_delay: Option<F>,
}

pub fn evaluate<F: Scalar>(
    decisions: &[Decision],
    gold: &Corpus,
    config: &MetricsConfig<F>,
) -> Result<MetricsReport<F>> {
    config.validate()?;
    let counts = confusion_counts(decisions, gold)?;
    let scores = scores_from_counts::<F>(&counts);
    let mut erde = BTreeMap::new();
    let mut thetas = config.report_thetas.clone();
    if !thetas.contains(&config.theta) {
        thetas.push(config.theta);
    }
    for theta in thetas {
        erde.insert(theta, erde_at(decisions, gold, config, theta)?);
    }
    let tp_delays: Vec<F> = align(decisions, gold)?
        .into_iter()
        .filter(|(d, u)| d.verdict.is_positive() && u.label.is_positive())
        .map(|(d, _)| F::from_count(d.k))
        .collect();
    Ok(MetricsReport {
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        accuracy: scores.accuracy,
        erde,
        f_latency: f_latency(decisions, gold, config)?,
        counts,
        median_tp_delay: median(&tp_delays),
    })
}

impl<F: Scalar> MetricsReport<F> {
    pub fn erde_for(&self, theta: usize) -> Option<F> {
        self.erde.get(&theta).copied()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["P".to_string(), "R".into(), "F1".into(), "acc".into()];
        cols.extend(self.erde.keys().map(|t| format!("ERDE{t}")));
        cols.extend(["F-latency", "TP", "FP", "FN", "TN"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{},{},{}",
            self.precision, self.recall, self.f1, self.accuracy
        );
        for v in self.erde.values() {
            let _ = write!(row, ",{v}");
        }
        let c = &self.counts;
        let _ = write!(row, ",{},{},{},{},{}", self.f_latency, c.tp, c.fp, c.fn_, c.tn);
        row
    }

    /// Header plus one data row, newline terminated.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", self.csv_header(), self.csv_row())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Wire form: the CSV column names plus `median_tp_delay`.
#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct ReportRecord<F> {
    #[serde(rename = "P")]
    precision: F,
    #[serde(rename = "R")]
    recall: F,
    #[serde(rename = "F1")]
    f1: F,
    #[serde(rename = "acc")]
    accuracy: F,
    #[serde(rename = "F-latency")]
    f_latency: F,
    #[serde(rename = "TP")]
    tp: usize,
    #[serde(rename = "FP")]
    fp: usize,
    #[serde(rename = "FN")]
    fn_: usize,
    #[serde(rename = "TN")]
    tn: usize,
    median_tp_delay: Option<F>,
    #[serde(flatten)]
    erde: BTreeMap<String, F>,
}

impl<F: Scalar> Serialize for MetricsReport<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReportRecord {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            accuracy: self.accuracy,
            f_latency: self.f_latency,
            tp: self.counts.tp,
            fp: self.counts.fp,
            fn_: self.counts.fn_,
            tn: self.counts.tn,
            median_tp_delay: self.median_tp_delay,
            erde: self.erde.iter().map(|(t, v)| (format!("ERDE{t}"), *v)).collect(),
        }
        .serialize(s)
    }
}

impl<'de, F: Scalar> Deserialize<'de> for MetricsReport<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = ReportRecord::<F>::deserialize(d)?;
        let mut erde = BTreeMap::new();
        for (key, v) in r.erde {
            let theta = key
                .strip_prefix("ERDE")
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| D::Error::custom(format!("unexpected report key {key}")))?;
            erde.insert(theta, v);
        }
        Ok(MetricsReport {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            accuracy: r.accuracy,
            erde,
            f_latency: r.f_latency,
            counts: ConfusionCounts {
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
                tn: r.tn,
            },
            median_tp_delay: r.median_tp_delay,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Split};

    fn corpus(labels: &[u8]) -> Corpus {
        let users = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                UserHistory::new(format!("u{i}"), Label::from_u8(l).unwrap(), vec!["p".into(); 60])
                    .unwrap()
            })
            .collect();
        Corpus::new("gold", Split::Test, users).unwrap()
    }

    fn d(i: usize, positive: bool, k: usize) -> Decision {
        let v = if positive { Verdict::Positive } else { Verdict::Negative };
        Decision::new(format!("u{i}"), v, k)
    }

    #[test]
    fn outcome_classes() {
        let c = corpus(&[1, 0]);
        assert_eq!(classify_outcome(&d(0, true, 1), &c.users[0]).unwrap(), Outcome::TruePositive);
        assert_eq!(classify_outcome(&d(0, false, 1), &c.users[0]).unwrap(), Outcome::FalseNegative);
        assert_eq!(classify_outcome(&d(1, true, 1), &c.users[1]).unwrap(), Outcome::FalsePositive);
        assert_eq!(classify_outcome(&d(1, false, 1), &c.users[1]).unwrap(), Outcome::TrueNegative);
        assert!(classify_outcome(&d(1, true, 1), &c.users[0]).is_err());
    }

    #[test]
    fn latency_cost_values() {
        assert_eq!(latency_cost::<f64>(30, 30), 0.5);
        assert_eq!(latency_cost::<f32>(5, 5), 0.5);
        // direct evaluation: e^-20 / (1 + e^-20)
        let e = (-20.0f64).exp();
        let lo: f64 = latency_cost(10, 30);
        assert!((lo - e / (1.0 + e)).abs() < 1e-15);
        assert!((lo - 2.06e-9).abs() < 0.01e-9);
        let hi: f64 = latency_cost(35, 30);
        assert!((hi - 0.993_307_149_075_715_3).abs() < 1e-12);
    }

    #[test]
    fn erde_examples() {
        let cfg = MetricsConfig::<f64> { c_fp: Some(0.5), ..Default::default() };
        let c = corpus(&[0, 0, 0]);
        let all_tn: Vec<_> = (0..3).map(|i| d(i, false, 60)).collect();
        assert_eq!(erde(&all_tn, &c, &cfg).unwrap(), 0.0);

        let c = corpus(&[1]);
        assert_eq!(erde(&[d(0, true, 30)], &c, &cfg).unwrap(), 0.5);

        let c = corpus(&[1, 0, 1, 0]);
        let ds = [d(0, true, 5), d(1, true, 3), d(2, false, 60), d(3, false, 60)];
        let tp = (-25.0f64).exp() / (1.0 + (-25.0f64).exp());
        let expected = (tp + 0.5 + 1.0 + 0.0) / 4.0;
        let got = erde(&ds, &c, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.375).abs() < 1e-10);
    }

    #[test]
    fn erde_rejects_missing_and_extra() {
        let c = corpus(&[1, 0]);
        let cfg = MetricsConfig::<f64>::default();
        assert!(matches!(erde(&[d(0, true, 3)], &c, &cfg), Err(ErdError::Contract(_))));
        let extra = [d(0, true, 3), d(1, true, 3), d(2, true, 3)];
        assert!(erde(&extra, &c, &cfg).is_err());
        let dup = [d(0, true, 3), d(0, true, 3)];
        assert!(erde(&dup, &c, &cfg).is_err());
        assert!(erde(&[d(0, true, 0), d(1, false, 1)], &c, &cfg).is_err());
    }

    #[test]
    fn c_fp_defaults_to_positive_ratio() {
        let c = corpus(&[1, 0, 0, 0]);
        let cfg = MetricsConfig::<f64>::default();
        assert_eq!(cfg.c_fp_for(&c), 0.25);
        let ds = [d(0, false, 60), d(1, true, 2), d(2, false, 60), d(3, false, 60)];
        assert_eq!(erde(&ds, &c, &cfg).unwrap(), (1.0 + 0.25) / 4.0);
    }

    #[test]
    fn classification_examples() {
        let c = corpus(&[1, 1, 0, 1, 0]);
        // TP, TP, FP, FN, TN
        let ds = [d(0, true, 1), d(1, true, 1), d(2, true, 1), d(3, false, 60), d(4, false, 60)];
        let s = classification_metrics::<f64>(&ds, &c).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.accuracy, 3.0 / 5.0);

        let perfect = [d(0, true, 1), d(1, true, 1), d(2, false, 1), d(3, true, 1), d(4, false, 1)];
        let s = classification_metrics::<f64>(&perfect, &c).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.accuracy), (1.0, 1.0, 1.0, 1.0));

        let none: Vec<_> = (0..5).map(|i| d(i, false, 60)).collect();
        let s = classification_metrics::<f64>(&none, &c).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f_latency_examples() {
        let cfg = MetricsConfig::<f64>::default();
        let c = corpus(&[1, 1, 0]);
        let immediate = [d(0, true, 1), d(1, true, 1), d(2, true, 4)];
        let f1 = classification_metrics::<f64>(&immediate, &c).unwrap().f1;
        assert_eq!(f_latency(&immediate, &c, &cfg).unwrap(), f1);

        let none = [d(0, false, 60), d(1, false, 60), d(2, false, 60)];
        assert_eq!(f_latency(&none, &c, &cfg).unwrap(), 0.0);

        let c = corpus(&[1, 1, 0]);
        let at50 = [d(0, true, 50), d(1, true, 50), d(2, false, 60)];
        // penalty(50) = -1 + 2 / (1 + e^(-0.0078 * 49))
        let penalty = -1.0 + 2.0 / (1.0 + (-0.0078f64 * 49.0).exp());
        let got = f_latency(&at50, &c, &cfg).unwrap();
        assert!((got - (1.0 - penalty)).abs() < 1e-15);
        assert!((got - 0.811_194).abs() < 1e-5);
    }

    #[test]
    fn report_csv_and_json_share_columns() {
        let c = corpus(&[1, 0]);
        let r = evaluate(&[d(0, true, 3), d(1, false, 60)], &c, &MetricsConfig::<f64>::default())
            .unwrap();
        assert_eq!(r.csv_header(), "P,R,F1,acc,ERDE5,ERDE30,F-latency,TP,FP,FN,TN");
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        for col in r.csv_header().split(',') {
            assert!(json.get(col).is_some(), "missing {col}");
        }
        let back: MetricsReport<f64> = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.median_tp_delay, Some(3.0));
    }
}
