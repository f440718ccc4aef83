//! Unicode text cleaning and corpus statistics.
//!
//! Web-scraped Bangla text arrives with a zoo of space-like codepoints
//! (no-break spaces, en/hair spaces, ideographic space) and zero-width
//! characters (ZWNJ) that fragment byte-level models. The cleaning pipeline
//! runs in a fixed order:
//!
//! 1. [`normalize_unicode`]: map every space-like codepoint to U+0020,
//!    delete zero-width codepoints, collapse runs of U+0020 to one.
//! 2. [`strip_punctuation`]: drop configured punctuation marks.
//!
//! [`clean_document`] is the composition. [`corpus_stats`] and
//! [`length_histogram`] report word/sentence/byte counts over a document
//! stream without materializing the corpus.
//!
//! ```
//! use byt5kit::textprep::{clean_document, CleanConfig};
//!
//! let config = CleanConfig::default();
//! assert_eq!(clean_document("a\u{2000}\u{200A}b", &config), "a b");
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use thiserror::Error;

/// Space-like codepoints replaced by U+0020 under the default config.
///
/// The common offenders in web-scraped Bangla text: ASCII space, no-break
/// space, Ogham space mark, Mongolian vowel separator, en quad, hair space,
/// narrow no-break space, medium mathematical space, and ideographic space.
pub const DEFAULT_SPACE_LIKE: [char; 9] = [
    '\u{0020}', '\u{00A0}', '\u{1680}', '\u{180E}', '\u{2000}', '\u{200A}', '\u{202F}',
    '\u{205F}', '\u{3000}',
];

/// Zero-width codepoints deleted under the default config.
///
/// ZWNJ appears inside Bangla conjuncts in scraped text and contributes
/// bytes without visible content.
pub const DEFAULT_ZERO_WIDTH: [char; 1] = ['\u{200C}'];

/// The 36 punctuation marks stripped under the default config: the Bangla
/// danda and double danda plus 34 common ASCII/typographic marks.
pub const DEFAULT_PUNCTUATION: [char; 36] = [
    '\u{0964}', '\u{0965}', '.', ',', ';', ':', '!', '?', '\'', '"', '(', ')', '[', ']',
    '{', '}', '-', '_', '/', '\\', '|', '@', '#', '$', '%', '^', '&', '*', '+', '=', '<',
    '>', '~', '`', '\u{201C}', '\u{201D}',
];

/// Sentence-ending marks under the default segmentation rules: the Bangla
/// danda plus '?', '!', and '.'.
pub const DEFAULT_SENTENCE_TERMINATORS: [char; 4] = ['\u{0964}', '?', '!', '.'];

/// Configuration for the cleaning pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    /// Codepoints replaced by a single U+0020.
    pub space_like_codepoints: BTreeSet<char>,
    /// Codepoints deleted outright.
    pub zero_width_codepoints: BTreeSet<char>,
    /// Codepoints removed by punctuation stripping.
    pub punctuation_set: BTreeSet<char>,
    /// Collapse maximal runs of U+0020 to a single U+0020.
    pub collapse_whitespace: bool,
    /// Apply punctuation stripping in [`clean_document`].
    pub strip_punctuation: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            space_like_codepoints: DEFAULT_SPACE_LIKE.into_iter().collect(),
            zero_width_codepoints: DEFAULT_ZERO_WIDTH.into_iter().collect(),
            punctuation_set: DEFAULT_PUNCTUATION.into_iter().collect(),
            collapse_whitespace: true,
            strip_punctuation: true,
        }
    }
}

/// Invalid [`CleanConfig`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CleanConfigError {
    /// The same codepoint appears in two sets with conflicting treatment.
    #[error("codepoint U+{codepoint:04X} appears in both {first} and {second}")]
    OverlappingSets {
        /// The conflicting codepoint.
        codepoint: u32,
        /// Name of the first set.
        first: &'static str,
        /// Name of the second set.
        second: &'static str,
    },
}

impl CleanConfig {
    /// Checks that the three codepoint sets are pairwise disjoint.
    ///
    /// A codepoint in two sets would make the pipeline order-dependent
    /// (delete vs. replace vs. strip), so overlap is rejected outright.
    pub fn validate(&self) -> Result<(), CleanConfigError> {
        let pairs: [(&BTreeSet<char>, &'static str, &BTreeSet<char>, &'static str); 3] = [
            (
                &self.space_like_codepoints,
                "space_like_codepoints",
                &self.zero_width_codepoints,
                "zero_width_codepoints",
            ),
            (
                &self.space_like_codepoints,
                "space_like_codepoints",
                &self.punctuation_set,
                "punctuation_set",
            ),
            (
                &self.zero_width_codepoints,
                "zero_width_codepoints",
                &self.punctuation_set,
                "punctuation_set",
            ),
        ];
        for (a, a_name, b, b_name) in pairs {
            if let Some(ch) = a.intersection(b).next() {
                return Err(CleanConfigError::OverlappingSets {
                    codepoint: *ch as u32,
                    first: a_name,
                    second: b_name,
                });
            }
        }
        Ok(())
    }
}

/// Maps space-like codepoints to U+0020, deletes zero-width codepoints, and
/// collapses runs of U+0020 when `collapse_whitespace` is set.
///
/// Idempotent: `normalize_unicode(normalize_unicode(t)) == normalize_unicode(t)`.
pub fn normalize_unicode(text: &str, config: &CleanConfig) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if config.zero_width_codepoints.contains(&ch) {
            continue;
        }
        let mapped = if config.space_like_codepoints.contains(&ch) {
            ' '
        } else {
            ch
        };
        if mapped == ' ' && config.collapse_whitespace && out.ends_with(' ') {
            continue;
        }
        out.push(mapped);
    }
    out
}

/// Removes every codepoint in `punctuation_set`.
pub fn strip_punctuation(text: &str, config: &CleanConfig) -> String {
    text.chars()
        .filter(|ch| !config.punctuation_set.contains(ch))
        .collect()
}

/// Full cleaning pipeline: normalization, then punctuation stripping when
/// `strip_punctuation` is enabled.
///
/// The output never contains a codepoint absent from the input other than
/// U+0020.
pub fn clean_document(text: &str, config: &CleanConfig) -> String {
    let normalized = normalize_unicode(text, config);
    if config.strip_punctuation {
        strip_punctuation(&normalized, config)
    } else {
        normalized
    }
}

/// Sentence segmentation rules for [`corpus_stats`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationRules {
    /// Codepoints that end a sentence.
    pub sentence_terminators: BTreeSet<char>,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        SegmentationRules {
            sentence_terminators: DEFAULT_SENTENCE_TERMINATORS.into_iter().collect(),
        }
    }
}

/// Aggregate counts over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Maximal non-whitespace runs, summed over documents.
    pub word_count: u64,
    /// Terminated or trailing non-empty sentences, summed over documents.
    pub sentence_count: u64,
    /// UTF-8 byte length, summed over documents.
    pub byte_count: u64,
    /// `word_count / sentence_count`, exact; 0 when the corpus has no
    /// sentences. Display layers round to two decimals.
    pub avg_words_per_sentence: f64,
}

impl CorpusStats {
    fn observe(&mut self, doc: &str, rules: &SegmentationRules) {
        self.word_count += count_words(doc);
        self.sentence_count += count_sentences(doc, rules);
        self.byte_count += doc.len() as u64;
    }

    fn finish(mut self) -> Self {
        self.avg_words_per_sentence = if self.sentence_count == 0 {
            0.0
        } else {
            self.word_count as f64 / self.sentence_count as f64
        };
        self
    }

    /// Combines counts from two disjoint corpus slices.
    pub fn merge(self, other: CorpusStats) -> CorpusStats {
        CorpusStats {
            word_count: self.word_count + other.word_count,
            sentence_count: self.sentence_count + other.sentence_count,
            byte_count: self.byte_count + other.byte_count,
            avg_words_per_sentence: 0.0,
        }
        .finish()
    }
}

/// Counts maximal runs of non-whitespace characters.
pub fn count_words(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Counts sentences: one per terminator whose preceding segment contains a
/// non-whitespace character, plus one for a non-empty trailing segment.
pub fn count_sentences(text: &str, rules: &SegmentationRules) -> u64 {
    let mut count = 0u64;
    let mut segment_has_content = false;
    for ch in text.chars() {
        if rules.sentence_terminators.contains(&ch) {
            if segment_has_content {
                count += 1;
            }
            segment_has_content = false;
        } else if !ch.is_whitespace() {
            segment_has_content = true;
        }
    }
    if segment_has_content {
        count += 1;
    }
    count
}

/// Streams documents once and returns aggregate corpus statistics.
pub fn corpus_stats<I, S>(documents: I, rules: &SegmentationRules) -> CorpusStats
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut stats = CorpusStats::default();
    for doc in documents {
        stats.observe(doc.as_ref(), rules);
    }
    stats.finish()
}

/// Word-length histogram over items: `count(length) = how many items have
/// exactly that many words`. The counts sum to the number of items.
pub fn length_histogram<I, S>(items: I) -> BTreeMap<usize, u64>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut histogram = BTreeMap::new();
    for item in items {
        let len = count_words(item.as_ref()) as usize;
        *histogram.entry(len).or_insert(0u64) += 1;
    }
    histogram
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        CleanConfig::default().validate().unwrap();
    }

    #[test]
    fn default_sets_have_the_documented_sizes() {
        let config = CleanConfig::default();
        assert_eq!(config.space_like_codepoints.len(), 9);
        assert_eq!(config.zero_width_codepoints.len(), 1);
        assert_eq!(config.punctuation_set.len(), 36);
        assert!(config.punctuation_set.contains(&'\u{0964}'));
        assert!(config.punctuation_set.contains(&'\u{0965}'));
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let mut config = CleanConfig::default();
        config.zero_width_codepoints.insert('\u{00A0}');
        let err = config.validate().unwrap_err();
        assert_eq!(
            err,
            CleanConfigError::OverlappingSets {
                codepoint: 0xA0,
                first: "space_like_codepoints",
                second: "zero_width_codepoints",
            }
        );
    }

    #[test]
    fn space_like_runs_collapse_to_one_space() {
        let config = CleanConfig::default();
        assert_eq!(normalize_unicode("a\u{2000}\u{200A}b", &config), "a b");
        assert_eq!(normalize_unicode("a \u{00A0} \u{3000}b", &config), "a b");
    }

    #[test]
    fn zero_width_codepoints_are_deleted() {
        let config = CleanConfig::default();
        assert_eq!(normalize_unicode("ক\u{200C}ষ", &config), "কষ");
        assert_eq!(normalize_unicode("\u{200C}", &config), "");
    }

    #[test]
    fn collapse_can_be_disabled() {
        let config = CleanConfig {
            collapse_whitespace: false,
            ..CleanConfig::default()
        };
        assert_eq!(normalize_unicode("a\u{2000}\u{200A}b", &config), "a  b");
    }

    #[test]
    fn strip_punctuation_removes_danda() {
        let config = CleanConfig::default();
        assert_eq!(strip_punctuation("আমি। তুমি?", &config), "আমি তুমি");
    }

    #[test]
    fn clean_document_runs_normalize_then_strip() {
        let config = CleanConfig::default();
        assert_eq!(
            clean_document("আমি\u{00A0}ভাত।\u{200C}", &config),
            "আমি ভাত"
        );
        let keep_punct = CleanConfig {
            strip_punctuation: false,
            ..CleanConfig::default()
        };
        assert_eq!(
            clean_document("আমি\u{00A0}ভাত।", &keep_punct),
            "আমি ভাত।"
        );
    }

    #[test]
    fn bangla_two_sentence_example() {
        let stats = corpus_stats(["আমি ভাত খাই। তুমি যাও।"], &SegmentationRules::default());
        assert_eq!(stats.word_count, 5);
        assert_eq!(stats.sentence_count, 2);
        assert_eq!(stats.avg_words_per_sentence, 2.5);
    }

    #[test]
    fn trailing_unterminated_sentence_counts() {
        let rules = SegmentationRules::default();
        assert_eq!(count_sentences("আমি ভাত খাই", &rules), 1);
        assert_eq!(count_sentences("আমি। তুমি", &rules), 2);
        assert_eq!(count_sentences("", &rules), 0);
        assert_eq!(count_sentences("।।।", &rules), 0);
        assert_eq!(count_sentences("ক।।", &rules), 1);
    }

    #[test]
    fn empty_corpus_gives_zero_stats() {
        let stats = corpus_stats(Vec::<String>::new(), &SegmentationRules::default());
        assert_eq!(stats.word_count, 0);
        assert_eq!(stats.sentence_count, 0);
        assert_eq!(stats.byte_count, 0);
        assert_eq!(stats.avg_words_per_sentence, 0.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let rules = SegmentationRules::default();
        let all = corpus_stats(["ক খ। গ?", "ঘ ঙ চ"], &rules);
        let merged =
            corpus_stats(["ক খ। গ?"], &rules).merge(corpus_stats(["ঘ ঙ চ"], &rules));
        assert_eq!(all, merged);
    }

    #[test]
    fn histogram_counts_sum_to_item_count() {
        let items = ["a b c", "a b", "x y z", ""];
        let histogram = length_histogram(items);
        assert_eq!(histogram[&3], 2);
        assert_eq!(histogram[&2], 1);
        assert_eq!(histogram[&0], 1);
        assert_eq!(histogram.values().sum::<u64>(), items.len() as u64);
    }

    fn corpus_char() -> impl Strategy<Value = char> {
        prop_oneof![
            prop::char::range('a', 'z'),
            prop::char::range('অ', 'হ'),
            Just('\u{0020}'),
            Just('\u{00A0}'),
            Just('\u{1680}'),
            Just('\u{180E}'),
            Just('\u{2000}'),
            Just('\u{200A}'),
            Just('\u{200C}'),
            Just('\u{202F}'),
            Just('\u{205F}'),
            Just('\u{3000}'),
            Just('\u{0964}'),
            Just('.'),
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(chars in prop::collection::vec(corpus_char(), 0..200)) {
            let text: String = chars.into_iter().collect();
            let config = CleanConfig::default();
            let once = normalize_unicode(&text, &config);
            prop_assert_eq!(normalize_unicode(&once, &config), once);
        }

        #[test]
        fn clean_introduces_only_space(chars in prop::collection::vec(corpus_char(), 0..200)) {
            let text: String = chars.into_iter().collect();
            let config = CleanConfig::default();
            let cleaned = clean_document(&text, &config);
            for ch in cleaned.chars() {
                prop_assert!(ch == ' ' || text.contains(ch));
            }
        }

        #[test]
        fn cleaned_text_has_no_managed_codepoints(chars in prop::collection::vec(corpus_char(), 0..200)) {
            let text: String = chars.into_iter().collect();
            let config = CleanConfig::default();
            let cleaned = clean_document(&text, &config);
            for ch in cleaned.chars() {
                prop_assert!(!config.zero_width_codepoints.contains(&ch));
                prop_assert!(!config.punctuation_set.contains(&ch));
                prop_assert!(ch == ' ' || !config.space_like_codepoints.contains(&ch));
            }
        }
    }
}
