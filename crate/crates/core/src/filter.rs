//! Chrome's post-processing of classifier confidence scores, and the set
//! comparison metrics used to score one classification against another.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classification::DomainClassification;
use crate::error::{Error, Result};
use crate::taxonomy::{Taxonomy, TopicId};

/// One confidence score per taxonomy topic (in taxonomy order) followed by
/// the Unknown score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, taxonomy: &Taxonomy) -> Result<Self> {
        let want = taxonomy.omega() + 1;
        if scores.len() != want {
            return Err(Error::Input(format!(
                "score vector has {} entries, expected {want}",
                scores.len()
            )));
        }
        if let Some((i, s)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || **s < 0.0 || **s > 1.0)
        {
            return Err(Error::Input(format!(
                "score {s} at index {i} outside [0, 1]"
            )));
        }
        Ok(ScoreVector { scores })
    }

    /// Builds a vector from sparse `(topic, score)` pairs; everything else is
    /// zero. `TopicId::UNKNOWN` addresses the Unknown slot.
    pub fn from_sparse(entries: &[(TopicId, f64)], taxonomy: &Taxonomy) -> Result<Self> {
        let omega = taxonomy.omega();
        let mut scores = vec![0.0; omega + 1];
        for &(t, s) in entries {
            let slot = if t.is_unknown() {
                omega
            } else {
                taxonomy
                    .position(t)
                    .ok_or_else(|| Error::Domain(format!("topic {t} is not in the taxonomy")))?
            };
            scores[slot] = s;
        }
        Self::new(scores, taxonomy)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    fn entries<'a>(&'a self, taxonomy: &'a Taxonomy) -> impl Iterator<Item = (TopicId, f64)> + 'a {
        let omega = taxonomy.omega();
        self.scores.iter().enumerate().map(move |(i, &s)| {
            let id = if i == omega {
                TopicId::UNKNOWN
            } else {
                taxonomy.topic_at(i)
            };
            (id, s)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub max_topics: usize,
    pub min_unknown_score: f64,
    pub min_topic_score: f64,
    pub min_normalized_score_within_top_n: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            max_topics: 5,
            min_unknown_score: 0.8,
            min_topic_score: 0.01,
            min_normalized_score_within_top_n: 0.25,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_topics == 0 {
            return Err(Error::Input("max_topics must be at least 1".into()));
        }
        for (name, v) in [
            ("min_unknown_score", self.min_unknown_score),
            ("min_topic_score", self.min_topic_score),
            (
                "min_normalized_score_within_top_n",
                self.min_normalized_score_within_top_n,
            ),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Input(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Filters a score vector down to the topics Chrome would assign.
///
/// Returns either a non-empty set of taxonomy topics or the singleton
/// `{Unknown}`. Ties in the top selection go to the lower topic id, so
/// Unknown (id 0) wins ties.
pub fn chrome_filter(
    scores: &ScoreVector,
    params: &FilterParams,
    taxonomy: &Taxonomy,
) -> BTreeSet<TopicId> {
    let mut ranked: Vec<(TopicId, f64)> = scores.entries(taxonomy).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(params.max_topics);

    let top_sum: f64 = ranked.iter().map(|(_, s)| s).sum();
    let unknown_score = ranked
        .iter()
        .find(|(t, _)| t.is_unknown())
        .map(|(_, s)| *s)
        .unwrap_or(0.0);

    let unknown_only = BTreeSet::from([TopicId::UNKNOWN]);
    // with top_sum == 0 every ratio is 0/0, which fails every threshold
    if top_sum > 0.0 && unknown_score / top_sum > params.min_unknown_score {
        return unknown_only;
    }
    let kept: BTreeSet<TopicId> = ranked
        .iter()
        .filter(|(t, s)| {
            !t.is_unknown()
                && *s >= params.min_topic_score
                && top_sum > 0.0
                && s / top_sum >= params.min_normalized_score_within_top_n
        })
        .map(|(t, _)| *t)
        .collect();
    if kept.is_empty() {
        unknown_only
    } else {
        kept
    }
}

/// Drops the Unknown sentinel; `{Unknown}` becomes the empty set.
pub fn known_topics(set: &BTreeSet<TopicId>) -> BTreeSet<TopicId> {
    set.iter().copied().filter(|t| !t.is_unknown()).collect()
}

/// Parses a score-vector file: `domain<TAB>` followed by omega+1
/// space-separated floats per line.
pub fn parse_score_vectors(
    text: &str,
    source_name: &str,
    taxonomy: &Taxonomy,
) -> Result<Vec<(String, ScoreVector)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (domain, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, line_no, "expected `domain<TAB>scores`"))?;
        let scores = rest
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(source_name, line_no, format!("bad score {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let vector = ScoreVector::new(scores, taxonomy)
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        out.push((domain.trim().to_string(), vector));
    }
    Ok(out)
}

pub fn load_score_vectors(
    path: impl AsRef<Path>,
    taxonomy: &Taxonomy,
) -> Result<Vec<(String, ScoreVector)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_vectors(&text, &path.display().to_string(), taxonomy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub jaccard: f64,
    pub dice: f64,
    pub overlap: f64,
    pub exact_match: bool,
    pub at_least_one: bool,
}

/// Jaccard, Dice and overlap coefficients between two topic sets.
///
/// Two empty sets (both Unknown) agree perfectly; exactly one empty set
/// scores zero on everything.
pub fn set_similarity(
    actual: &BTreeSet<TopicId>,
    predicted: &BTreeSet<TopicId>,
) -> SimilarityReport {
    match (actual.is_empty(), predicted.is_empty()) {
        (true, true) => {
            return SimilarityReport {
                jaccard: 1.0,
                dice: 1.0,
                overlap: 1.0,
                exact_match: true,
                at_least_one: true,
            }
        }
        (true, false) | (false, true) => {
            return SimilarityReport {
                jaccard: 0.0,
                dice: 0.0,
                overlap: 0.0,
                exact_match: false,
                at_least_one: false,
            }
        }
        _ => {}
    }
    let inter = actual.intersection(predicted).count() as f64;
    let (a, p) = (actual.len() as f64, predicted.len() as f64);
    let union = a + p - inter;
    SimilarityReport {
        jaccard: inter / union,
        dice: 2.0 * inter / (a + p),
        overlap: inter / a.min(p),
        exact_match: actual == predicted,
        at_least_one: inter > 0.0,
    }
}

/// Aggregate agreement between a reference classification and a predicted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub domains_compared: usize,
    /// Micro-averaged recall over (domain, label) pairs, Unknown counted as a
    /// label of its own.
    pub accuracy: f64,
    /// Mean per-label recall over labels present in the reference.
    pub balanced_accuracy: f64,
    pub all_correct_ratio: f64,
    pub mean_jaccard: f64,
    pub mean_dice: f64,
    pub mean_overlap: f64,
    pub at_least_one_ratio: f64,
}

/// Compares two classifications over the domains they share. Empty topic
/// sets are read as Unknown.
pub fn compare_classifications(
    truth: &DomainClassification,
    predicted: &DomainClassification,
) -> Result<ComparisonReport> {
    let mut n = 0usize;
    let (mut jac, mut dice, mut ovl) = (0.0, 0.0, 0.0);
    let (mut exact, mut one) = (0usize, 0usize);
    // label -> (hits, occurrences in truth)
    let mut per_label: HashMap<TopicId, (usize, usize)> = HashMap::new();

    for (domain, actual) in truth.iter() {
        let Some(pred) = predicted.topics_of(domain) else {
            continue;
        };
        n += 1;
        let a: BTreeSet<TopicId> = actual.iter().copied().collect();
        let p: BTreeSet<TopicId> = pred.iter().copied().collect();
        let r = set_similarity(&a, &p);
        jac += r.jaccard;
        dice += r.dice;
        ovl += r.overlap;
        exact += r.exact_match as usize;
        one += r.at_least_one as usize;

        if a.is_empty() {
            let e = per_label.entry(TopicId::UNKNOWN).or_default();
            e.1 += 1;
            e.0 += p.is_empty() as usize;
        } else {
            for t in &a {
                let e = per_label.entry(*t).or_default();
                e.1 += 1;
                e.0 += p.contains(t) as usize;
            }
        }
    }
    if n == 0 {
        return Err(Error::Domain(
            "the two classifications share no domain".into(),
        ));
    }
    let hits: usize = per_label.values().map(|(h, _)| h).sum();
    let total: usize = per_label.values().map(|(_, o)| o).sum();
    let balanced = per_label
        .values()
        .map(|&(h, o)| h as f64 / o as f64)
        .sum::<f64>()
        / per_label.len() as f64;
    let nf = n as f64;
    Ok(ComparisonReport {
        domains_compared: n,
        accuracy: hits as f64 / total as f64,
        balanced_accuracy: balanced,
        all_correct_ratio: exact as f64 / nf,
        mean_jaccard: jac / nf,
        mean_dice: dice / nf,
        mean_overlap: ovl / nf,
        at_least_one_ratio: one as f64 / nf,
    })
}
