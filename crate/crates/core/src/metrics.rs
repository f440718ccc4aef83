//! Reference-based generation metrics: macro-F1, corpus BLEU, and GLEU.
//!
//! All metrics are pure and deterministic. BLEU and GLEU share one
//! tokenizer: every Unicode-alphanumeric run is a token and every other
//! non-whitespace character is its own token, so punctuation (including
//! the danda) separates from words without any language-specific rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive floor used for zero-match n-gram orders when smoothing is on.
pub const BLEU_FLOOR: f64 = 0.1;

/// Highest n-gram order pooled by BLEU and the conventional GLEU setting.
pub const MAX_NGRAM_ORDER: usize = 4;

/// Why a metric could not be computed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    /// No examples were given.
    #[error("empty corpus: at least one example is required")]
    EmptyCorpus,
    /// The two sequences differ in length.
    #[error("length mismatch: {left} predictions vs {right} references")]
    LengthMismatch {
        /// Prediction-side count.
        left: usize,
        /// Reference-side count.
        right: usize,
    },
    /// A label was not in the declared label set.
    #[error("label {label:?} is outside the declared label set")]
    UnknownLabel {
        /// The offending label.
        label: String,
    },
    /// The declared label set was empty.
    #[error("the declared label set is empty")]
    EmptyLabelSet,
    /// An argument was out of range.
    #[error("invalid argument {field}: {detail}")]
    InvalidArg {
        /// Which argument.
        field: &'static str,
        /// What was wrong.
        detail: String,
    },
}

/// A computed metric with the counts behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// Metric name: `macro_f1`, `bleu`, or `gleu`.
    pub metric: String,
    /// The score, within `scale`.
    pub score: f64,
    /// Inclusive score range: `[0, 1]` for F1 and GLEU, `[0, 100]` for BLEU.
    pub scale: [f64; 2],
    /// Counts the score was computed from, keyed deterministically.
    pub support: BTreeMap<String, u64>,
}

/// Splits text into alphanumeric runs and single punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches(hyp: &HashMap<&[String], u64>, reference: &HashMap<&[String], u64>) -> u64 {
    hyp.iter()
        .map(|(gram, &count)| count.min(reference.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Macro-averaged F1 over a declared label set.
///
/// Per class, `F1 = 2PR / (P + R)` with 0 when `P + R = 0`; the macro score
/// is the unweighted mean over every declared label, so classes absent from
/// both sequences still contribute a 0 to the mean.
pub fn macro_f1<S: AsRef<str>>(
    predictions: &[S],
    golds: &[S],
    labels: &[S],
) -> Result<MetricReport, MetricError> {
    if predictions.is_empty() && golds.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if predictions.len() != golds.len() {
        return Err(MetricError::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let label_set: BTreeSet<&str> = labels.iter().map(|l| l.as_ref()).collect();
    if label_set.is_empty() {
        return Err(MetricError::EmptyLabelSet);
    }
    for value in predictions.iter().chain(golds.iter()) {
        if !label_set.contains(value.as_ref()) {
            return Err(MetricError::UnknownLabel {
                label: value.as_ref().to_string(),
            });
        }
    }

    let mut tp: BTreeMap<&str, u64> = BTreeMap::new();
    let mut fp: BTreeMap<&str, u64> = BTreeMap::new();
    let mut fn_: BTreeMap<&str, u64> = BTreeMap::new();
    for (pred, gold) in predictions.iter().zip(golds.iter()) {
        let (pred, gold) = (pred.as_ref(), gold.as_ref());
        if pred == gold {
            *tp.entry(pred).or_insert(0) += 1;
        } else {
            *fp.entry(pred).or_insert(0) += 1;
            *fn_.entry(gold).or_insert(0) += 1;
        }
    }

    let mut support = BTreeMap::new();
    let mut f1_sum = 0.0;
    for &label in &label_set {
        let t = tp.get(label).copied().unwrap_or(0);
        let p = fp.get(label).copied().unwrap_or(0);
        let n = fn_.get(label).copied().unwrap_or(0);
        support.insert(format!("tp/{label}"), t);
        support.insert(format!("fp/{label}"), p);
        support.insert(format!("fn/{label}"), n);
        let precision = if t + p > 0 { t as f64 / (t + p) as f64 } else { 0.0 };
        let recall = if t + n > 0 { t as f64 / (t + n) as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    support.insert("examples".into(), predictions.len() as u64);

    Ok(MetricReport {
        metric: "macro_f1".into(),
        score: f1_sum / label_set.len() as f64,
        scale: [0.0, 1.0],
        support,
    })
}

/// Corpus BLEU with clipped n-gram precisions pooled over the corpus.
///
/// `BLEU = BP * exp(mean of ln(p_n)) * 100` over orders 1 to 4, with
/// `BP = min(1, exp(1 - r/c))` for total reference length `r` and total
/// hypothesis length `c`. Without smoothing any zero precision zeroes the
/// score. With `smoothing` on, orders with no hypothesis n-grams at all are
/// dropped from the mean (the weights renormalize over the defined orders)
/// and zero-match orders get a floor of [`BLEU_FLOOR`] matches. A corpus
/// whose hypotheses have no tokens scores 0.
pub fn corpus_bleu<S: AsRef<str>>(
    hypotheses: &[S],
    references: &[S],
    smoothing: bool,
) -> Result<MetricReport, MetricError> {
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }

    let hyp_tokens: Vec<Vec<String>> = hypotheses.iter().map(|h| tokenize(h.as_ref())).collect();
    let ref_tokens: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    let c: u64 = hyp_tokens.iter().map(|t| t.len() as u64).sum();
    let r: u64 = ref_tokens.iter().map(|t| t.len() as u64).sum();

    let mut matched = [0u64; MAX_NGRAM_ORDER];
    let mut total = [0u64; MAX_NGRAM_ORDER];
    for (hyp, reference) in hyp_tokens.iter().zip(ref_tokens.iter()) {
        for n in 1..=MAX_NGRAM_ORDER {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts = ngram_counts(reference, n);
            matched[n - 1] += clipped_matches(&hyp_counts, &ref_counts);
            total[n - 1] += hyp_counts.values().sum::<u64>();
        }
    }

    let mut support = BTreeMap::new();
    for n in 1..=MAX_NGRAM_ORDER {
        support.insert(format!("matched/{n}"), matched[n - 1]);
        support.insert(format!("total/{n}"), total[n - 1]);
    }
    support.insert("hyp_tokens".into(), c);
    support.insert("ref_tokens".into(), r);

    let mut report = MetricReport {
        metric: "bleu".into(),
        score: 0.0,
        scale: [0.0, 100.0],
        support,
    };
    if c == 0 {
        return Ok(report);
    }

    let brevity = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };

    let mut log_sum = 0.0;
    let mut defined_orders = 0usize;
    for n in 0..MAX_NGRAM_ORDER {
        if total[n] == 0 {
            if smoothing {
                continue;
            }
            return Ok(report);
        }
        let p = if matched[n] > 0 {
            matched[n] as f64 / total[n] as f64
        } else if smoothing {
            BLEU_FLOOR / total[n] as f64
        } else {
            return Ok(report);
        };
        log_sum += p.ln();
        defined_orders += 1;
    }
    if defined_orders == 0 {
        return Ok(report);
    }
    report.score = brevity * (log_sum / defined_orders as f64).exp() * 100.0;
    Ok(report)
}

/// Corpus GLEU: `min(precision, recall)` over n-grams of orders 1 to
/// `max_n`, pooled across the corpus and across orders.
///
/// Precision divides matched n-grams (multiset intersection) by the
/// hypothesis n-gram count, recall by the reference n-gram count. A corpus
/// with no tokens on either side scores 0.
pub fn gleu<S: AsRef<str>>(
    hypotheses: &[S],
    references: &[S],
    max_n: usize,
) -> Result<MetricReport, MetricError> {
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if max_n == 0 {
        return Err(MetricError::InvalidArg {
            field: "max_n",
            detail: "must be at least 1".into(),
        });
    }

    let mut matched = 0u64;
    let mut hyp_total = 0u64;
    let mut ref_total = 0u64;
    for (hyp, reference) in hypotheses.iter().zip(references.iter()) {
        let hyp_tokens = tokenize(hyp.as_ref());
        let ref_tokens = tokenize(reference.as_ref());
        for n in 1..=max_n {
            let hyp_counts = ngram_counts(&hyp_tokens, n);
            let ref_counts = ngram_counts(&ref_tokens, n);
            matched += clipped_matches(&hyp_counts, &ref_counts);
            hyp_total += hyp_counts.values().sum::<u64>();
            ref_total += ref_counts.values().sum::<u64>();
        }
    }

    let precision = if hyp_total > 0 { matched as f64 / hyp_total as f64 } else { 0.0 };
    let recall = if ref_total > 0 { matched as f64 / ref_total as f64 } else { 0.0 };

    let mut support = BTreeMap::new();
    support.insert("matched".into(), matched);
    support.insert("hyp_ngrams".into(), hyp_total);
    support.insert("ref_ngrams".into(), ref_total);

    Ok(MetricReport {
        metric: "gleu".into(),
        score: precision.min(recall),
        scale: [0.0, 1.0],
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn macro_f1_hand_confusion_matrix() {
        let golds = ["A", "A", "B", "B"];
        let preds = ["A", "B", "B", "B"];
        let report = macro_f1(&preds, &golds, &["A", "B"]).unwrap();
        assert!((report.score - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(report.support["tp/A"], 1);
        assert_eq!(report.support["fp/B"], 1);
        assert_eq!(report.support["fn/A"], 1);
        let tp: u64 = ["A", "B"].iter().map(|l| report.support[&format!("tp/{l}")]).sum();
        let fp: u64 = ["A", "B"].iter().map(|l| report.support[&format!("fp/{l}")]).sum();
        assert_eq!(tp + fp, 4);
    }

    #[test]
    fn macro_f1_extremes() {
        let perfect = macro_f1(&["A", "B"], &["A", "B"], &["A", "B"]).unwrap();
        assert_eq!(perfect.score, 1.0);
        let swapped = macro_f1(&["B", "A"], &["A", "B"], &["A", "B"]).unwrap();
        assert_eq!(swapped.score, 0.0);
    }

    #[test]
    fn macro_f1_counts_declared_but_absent_classes() {
        let two = macro_f1(&["A", "B"], &["A", "B"], &["A", "B"]).unwrap();
        let three = macro_f1(&["A", "B"], &["A", "B"], &["A", "B", "C"]).unwrap();
        assert!((three.score - two.score * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_rejects_bad_input() {
        assert_eq!(
            macro_f1::<&str>(&[], &[], &["A"]).unwrap_err(),
            MetricError::EmptyCorpus
        );
        assert_eq!(
            macro_f1(&["A"], &["A", "B"], &["A", "B"]).unwrap_err(),
            MetricError::LengthMismatch { left: 1, right: 2 }
        );
        assert_eq!(
            macro_f1(&["C"], &["A"], &["A", "B"]).unwrap_err(),
            MetricError::UnknownLabel { label: "C".into() }
        );
        assert_eq!(
            macro_f1(&["A"], &["A"], &[]).unwrap_err(),
            MetricError::EmptyLabelSet
        );
    }

    #[test]
    fn tokenizer_splits_punctuation_and_whitespace() {
        assert_eq!(tokenize("the cat."), ["the", "cat", "."]);
        assert_eq!(tokenize("a,b"), ["a", ",", "b"]);
        assert_eq!(tokenize("নদী। জল"), ["নদী", "।", "জল"]);
        assert_eq!(tokenize("  spaced\tout  "), ["spaced", "out"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn bleu_identity_is_one_hundred() {
        let corpus = ["the cat sat on the mat", "নদীর জলে ভাসে নৌকা"];
        for smoothing in [false, true] {
            let report = corpus_bleu(&corpus, &corpus, smoothing).unwrap();
            assert!((report.score - 100.0).abs() < 1e-9, "smoothing={smoothing}");
        }
    }

    #[test]
    fn bleu_short_hypothesis_golden_value() {
        let unsmoothed = corpus_bleu(&["the cat"], &["the cat sat"], false).unwrap();
        assert_eq!(unsmoothed.score, 0.0);

        let smoothed = corpus_bleu(&["the cat"], &["the cat sat"], true).unwrap();
        assert!((smoothed.score - 100.0 * (-0.5f64).exp()).abs() < 1e-9);
        assert!((smoothed.score - 60.653066).abs() < 1e-6);
        assert_eq!(smoothed.support["matched/2"], 1);
        assert_eq!(smoothed.support["total/3"], 0);
    }

    #[test]
    fn bleu_single_token_corpus_with_smoothing() {
        let report = corpus_bleu(&["a"], &["a"], true).unwrap();
        assert!((report.score - 100.0).abs() < 1e-9);
        assert_eq!(corpus_bleu(&["a"], &["a"], false).unwrap().score, 0.0);
    }

    #[test]
    fn bleu_penalizes_out_of_reference_tokens() {
        let reference = ["the cat sat on the mat"];
        let good = corpus_bleu(&["the cat sat on the mat"], &reference, true).unwrap();
        let worse = corpus_bleu(&["the cat sat on the rug"], &reference, true).unwrap();
        assert!(worse.score < good.score);
    }

    #[test]
    fn bleu_zero_match_order_uses_floor_only_with_smoothing() {
        // Shares unigrams but no bigram, trigram, or 4-gram.
        let hyp = ["mat the sat cat on"];
        let reference = ["cat sat the on mat"];
        assert_eq!(corpus_bleu(&hyp, &reference, false).unwrap().score, 0.0);
        let smoothed = corpus_bleu(&hyp, &reference, true).unwrap();
        assert!(smoothed.score > 0.0);
    }

    #[test]
    fn bleu_rejects_bad_corpora() {
        assert_eq!(
            corpus_bleu::<&str>(&[], &[], true).unwrap_err(),
            MetricError::EmptyCorpus
        );
        assert_eq!(
            corpus_bleu(&["a"], &["a", "b"], true).unwrap_err(),
            MetricError::LengthMismatch { left: 1, right: 2 }
        );
        assert_eq!(corpus_bleu(&[""], &["a"], true).unwrap().score, 0.0);
    }

    #[test]
    fn gleu_hand_example() {
        let report = gleu(&["a b"], &["a c"], 4).unwrap();
        assert!((report.score - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.support["matched"], 1);
        assert_eq!(report.support["hyp_ngrams"], 3);
        assert_eq!(report.support["ref_ngrams"], 3);
    }

    #[test]
    fn gleu_extremes() {
        let same = gleu(&["ভাত খাই"], &["ভাত খাই"], 4).unwrap();
        assert_eq!(same.score, 1.0);
        let disjoint = gleu(&["a b"], &["c d"], 4).unwrap();
        assert_eq!(disjoint.score, 0.0);
        assert_eq!(
            gleu(&["a"], &["a"], 0).unwrap_err(),
            MetricError::InvalidArg { field: "max_n", detail: "must be at least 1".into() }
        );
    }

    fn label_corpus() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
        prop::collection::vec((0usize..3, 0usize..3), 1..40).prop_map(|pairs| {
            let names = ["A", "B", "C"];
            pairs
                .into_iter()
                .map(|(p, g)| (names[p].to_string(), names[g].to_string()))
                .unzip()
        })
    }

    proptest! {
        #[test]
        fn macro_f1_is_order_and_relabeling_invariant(
            (preds, golds) in label_corpus(),
            rotation in 0usize..3,
        ) {
            let labels = ["A".to_string(), "B".to_string(), "C".to_string()];
            let base = macro_f1(&preds, &golds, &labels).unwrap();

            let mut order: Vec<usize> = (0..preds.len()).collect();
            order.reverse();
            let shuffled_preds: Vec<String> = order.iter().map(|&i| preds[i].clone()).collect();
            let shuffled_golds: Vec<String> = order.iter().map(|&i| golds[i].clone()).collect();
            let shuffled = macro_f1(&shuffled_preds, &shuffled_golds, &labels).unwrap();
            prop_assert_eq!(base.score, shuffled.score);

            let relabel = |l: &str| {
                let idx = labels.iter().position(|x| x == l).unwrap();
                labels[(idx + rotation) % 3].clone()
            };
            let re_preds: Vec<String> = preds.iter().map(|l| relabel(l)).collect();
            let re_golds: Vec<String> = golds.iter().map(|l| relabel(l)).collect();
            let relabeled = macro_f1(&re_preds, &re_golds, &labels).unwrap();
            prop_assert!((base.score - relabeled.score).abs() < 1e-12);
        }

        #[test]
        fn bleu_and_gleu_identity_on_random_corpora(
            corpus in prop::collection::vec("[a-d।]{1,8}( [a-d।]{1,8}){0,6}", 1..8),
        ) {
            let bleu = corpus_bleu(&corpus, &corpus, true).unwrap();
            prop_assert!((bleu.score - 100.0).abs() < 1e-9);
            let g = gleu(&corpus, &corpus, 4).unwrap();
            prop_assert_eq!(g.score, 1.0);
        }

        #[test]
        fn gleu_is_bounded(
            (hyp, reference) in (1usize..6).prop_flat_map(|len| (
                prop::collection::vec("[a-c]{1,4}( [a-c]{1,4}){0,5}", len),
                prop::collection::vec("[a-c]{1,4}( [a-c]{1,4}){0,5}", len),
            )),
        ) {
            let report = gleu(&hyp, &reference, 4).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.score));
        }
    }
}
