//! Domain to topics assignments and the per-topic prevalence they induce.
//!
//! Classification files are `domain<TAB>comma-separated-topic-ids`, one domain
//! per line. An empty id list means the domain is Unknown: it still counts
//! toward the number of domains but carries no topic.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::taxonomy::{Taxonomy, TopicId};

/// Domains and their topic sets, stored flat.
#[derive(Debug, Clone)]
pub struct DomainClassification {
    domains: Vec<String>,
    offsets: Vec<u32>,
    topics: Vec<TopicId>,
    index: HashMap<String, u32>,
    pub source_label: String,
}

impl DomainClassification {
    /// Builds a classification, validating every topic against the taxonomy.
    /// Topic sets are sorted and de-duplicated.
    pub fn from_entries<I, S>(entries: I, taxonomy: &Taxonomy, source_label: &str) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<TopicId>)>,
        S: Into<String>,
    {
        let mut builder = Builder::new(source_label);
        for (i, (domain, topics)) in entries.into_iter().enumerate() {
            builder.push(domain.into(), topics, taxonomy, i + 1)?;
        }
        Ok(builder.finish())
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), taxonomy)
    }

    pub fn parse(text: &str, source_name: &str, taxonomy: &Taxonomy) -> Result<Self> {
        let mut builder = Builder::new(source_name);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (domain, ids) = match line.split_once('\t') {
                Some((d, ids)) => (d, ids),
                None => (line, ""),
            };
            let domain = domain.trim();
            if domain.is_empty() {
                return Err(Error::parse(source_name, line_no, "empty domain"));
            }
            let mut topics = Vec::new();
            for tok in ids.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let id: u16 = tok.parse().map_err(|_| {
                    Error::parse(source_name, line_no, format!("bad topic id {tok:?}"))
                })?;
                topics.push(TopicId(id));
            }
            builder
                .push(domain.to_string(), topics, taxonomy, line_no)
                .map_err(|e| match e {
                    Error::Parse { line, reason, .. } => Error::parse(source_name, line, reason),
                    other => other,
                })?;
        }
        Ok(builder.finish())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, d) in self.domains.iter().enumerate() {
            let ids: Vec<String> = self.topics_at(i).iter().map(|t| t.to_string()).collect();
            writeln!(w, "{d}\t{}", ids.join(","))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn domain(&self, i: usize) -> &str {
        &self.domains[i]
    }

    pub fn position(&self, domain: &str) -> Option<usize> {
        self.index.get(domain).map(|&i| i as usize)
    }

    /// Topics of the i-th domain, sorted ascending.
    pub fn topics_at(&self, i: usize) -> &[TopicId] {
        &self.topics[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn topics_of(&self, domain: &str) -> Option<&[TopicId]> {
        self.position(domain).map(|i| self.topics_at(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[TopicId])> + '_ {
        (0..self.len()).map(move |i| (self.domains[i].as_str(), self.topics_at(i)))
    }

    pub fn unknown_domains(&self) -> usize {
        (0..self.len())
            .filter(|&i| self.topics_at(i).is_empty())
            .count()
    }

    pub fn max_topics_per_domain(&self) -> usize {
        (0..self.len())
            .map(|i| self.topics_at(i).len())
            .max()
            .unwrap_or(0)
    }

    /// Histogram of topic-set sizes: entry k = number of domains with k topics.
    pub fn topics_per_domain_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.max_topics_per_domain() + 1];
        for i in 0..self.len() {
            hist[self.topics_at(i).len()] += 1;
        }
        hist
    }

    /// Median topic-set size over all domains (lower median for even counts).
    pub fn median_topics_per_domain(&self) -> usize {
        let hist = self.topics_per_domain_histogram();
        let target = self.len().saturating_sub(1) / 2;
        let mut seen = 0;
        for (k, &c) in hist.iter().enumerate() {
            seen += c;
            if seen > target {
                return k;
            }
        }
        0
    }

    /// Total number of (domain, topic) pairs.
    pub fn total_assignments(&self) -> usize {
        self.topics.len()
    }
}

struct Builder {
    label: String,
    domains: Vec<String>,
    offsets: Vec<u32>,
    topics: Vec<TopicId>,
    index: HashMap<String, u32>,
}

impl Builder {
    fn new(label: &str) -> Self {
        Builder {
            label: label.to_string(),
            domains: Vec::new(),
            offsets: vec![0],
            topics: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(
        &mut self,
        domain: String,
        mut topics: Vec<TopicId>,
        taxonomy: &Taxonomy,
        line: usize,
    ) -> Result<()> {
        if let Some(bad) = topics.iter().find(|t| !taxonomy.contains(**t)) {
            return Err(Error::parse(
                &self.label,
                line,
                format!("unknown topic id {bad} for {domain}"),
            ));
        }
        if self.index.contains_key(&domain) {
            return Err(Error::parse(
                &self.label,
                line,
                format!("duplicate domain {domain}"),
            ));
        }
        topics.sort_unstable();
        topics.dedup();
        self.index.insert(domain.clone(), self.domains.len() as u32);
        self.domains.push(domain);
        self.topics.extend_from_slice(&topics);
        self.offsets.push(self.topics.len() as u32);
        Ok(())
    }

    fn finish(self) -> DomainClassification {
        DomainClassification {
            domains: self.domains,
            offsets: self.offsets,
            topics: self.topics,
            index: self.index,
            source_label: self.label,
        }
    }
}

/// Number of distinct domains carrying each topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevalenceTable {
    /// Dense by topic id; index 0 (Unknown) is always 0.
    counts: Vec<u64>,
    pub total_domains: u64,
}

impl PrevalenceTable {
    pub fn from_counts(counts: Vec<u64>, total_domains: u64) -> Self {
        PrevalenceTable {
            counts,
            total_domains,
        }
    }

    pub fn count(&self, topic: TopicId) -> u64 {
        self.counts.get(topic.index()).copied().unwrap_or(0)
    }

    /// Per-topic counts in taxonomy order.
    pub fn per_topic(&self, taxonomy: &Taxonomy) -> Vec<(TopicId, u64)> {
        taxonomy.ids().map(|t| (t, self.count(t))).collect()
    }

    pub fn zero_topics(&self, taxonomy: &Taxonomy) -> usize {
        taxonomy.ids().filter(|&t| self.count(t) == 0).count()
    }

    /// Topics with count at most `threshold`.
    pub fn topics_at_most(&self, taxonomy: &Taxonomy, threshold: u64) -> usize {
        taxonomy
            .ids()
            .filter(|&t| self.count(t) <= threshold)
            .count()
    }

    pub fn max(&self) -> (TopicId, u64) {
        self.counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, &c)| (TopicId(i as u16), c))
            .unwrap_or((TopicId::UNKNOWN, 0))
    }

    /// Median over all taxonomy topics; mean of the middle pair when even.
    pub fn median(&self, taxonomy: &Taxonomy) -> f64 {
        let mut v: Vec<u64> = taxonomy.ids().map(|t| self.count(t)).collect();
        median_u64(&mut v)
    }

    pub fn sum(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn median_u64(v: &mut [u64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Counts, for every taxonomy topic, the domains whose set contains it.
pub fn prevalence(classification: &DomainClassification, taxonomy: &Taxonomy) -> PrevalenceTable {
    let width = taxonomy.max_id().index() + 1;
    let counts = (0..classification.len())
        .into_par_iter()
        .fold(
            || vec![0u64; width],
            |mut acc, i| {
                for t in classification.topics_at(i) {
                    acc[t.index()] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    PrevalenceTable {
        counts,
        total_domains: classification.len() as u64,
    }
}

/// Target statistics for a synthetic classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    /// Topics that must appear on no domain at all.
    pub zero_topics: usize,
    /// Fraction of domains carrying the single most common topic.
    pub top_fraction: f64,
    /// Median per-topic domain count over the whole taxonomy.
    pub median: f64,
}

impl SkewSpec {
    /// Statistics of the top-1M CrUX classification: 42 never-seen topics,
    /// one topic on 18.8% of domains, median 66 domains per topic.
    pub const CRUX: SkewSpec = SkewSpec {
        zero_topics: 42,
        top_fraction: 0.188,
        median: 66.0,
    };

    /// Median target rescaled to a list of `n_domains` instead of 1M.
    pub fn scaled_to(self, n_domains: usize) -> SkewSpec {
        SkewSpec {
            median: self.median * n_domains as f64 / 1_000_000.0,
            ..self
        }
    }
}

/// Relative tolerance within which synthesized statistics match a [`SkewSpec`].
pub const SKEW_TOLERANCE: f64 = 0.10;

/// Generates a classification of `n_domains` synthetic domains whose
/// prevalence table matches `spec`.
///
/// Active topics get power-law domain quotas `max(1, round(top * r^-a))` over
/// a seeded random ranking, with the exponent `a` fitted by bisection to hit
/// the median; the zero-topic count and the top count are exact by
/// construction. Each topic is then placed on a uniform random subset of
/// domains of its quota size. Domain `i` is named `site-<i+1>.example` so
/// list order doubles as a popularity order.
pub fn synthesize_skewed_classification(
    taxonomy: &Taxonomy,
    n_domains: usize,
    spec: SkewSpec,
    seed: u64,
) -> Result<DomainClassification> {
    let omega = taxonomy.omega();
    if n_domains == 0 {
        return Err(Error::InfeasibleSpec("n_domains must be positive".into()));
    }
    if spec.zero_topics >= omega {
        return Err(Error::InfeasibleSpec(format!(
            "{} zero topics leaves no active topic out of {omega}",
            spec.zero_topics
        )));
    }
    if !(spec.top_fraction > 0.0 && spec.top_fraction <= 1.0) {
        return Err(Error::InfeasibleSpec(format!(
            "top_fraction {} outside (0, 1]",
            spec.top_fraction
        )));
    }
    if !(spec.median >= 0.0) || spec.median > n_domains as f64 {
        return Err(Error::InfeasibleSpec(format!(
            "median {} outside [0, {n_domains}]",
            spec.median
        )));
    }
    let top = (spec.top_fraction * n_domains as f64).round().max(1.0) as u64;
    if spec.median > top as f64 {
        return Err(Error::InfeasibleSpec(format!(
            "median {} exceeds the top topic count {top}",
            spec.median
        )));
    }
    let active = omega - spec.zero_topics;

    let quotas_for = |a: f64| -> Vec<u64> {
        (1..=active)
            .map(|r| {
                ((top as f64) * (r as f64).powf(-a))
                    .round()
                    .clamp(1.0, top as f64) as u64
            })
            .collect()
    };
    let median_for = |quotas: &[u64]| -> f64 {
        let mut all: Vec<u64> = quotas.to_vec();
        all.extend(std::iter::repeat_n(0, spec.zero_topics));
        median_u64(&mut all)
    };

    // median(a) is non-increasing in a
    let (mut lo, mut hi) = (0.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if median_for(&quotas_for(mid)) > spec.median {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let exponent = [lo, hi]
        .into_iter()
        .min_by(|a, b| {
            let da = (median_for(&quotas_for(*a)) - spec.median).abs();
            let db = (median_for(&quotas_for(*b)) - spec.median).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    let quotas = quotas_for(exponent);
    let achieved = median_for(&quotas);
    if !within_tolerance(achieved, spec.median) {
        return Err(Error::InfeasibleSpec(format!(
            "closest reachable median is {achieved}, target {}",
            spec.median
        )));
    }

    let key = StreamKey::new(seed).purpose(Purpose::Classification);
    let mut order: Vec<TopicId> = taxonomy.ids().collect();
    order.shuffle(&mut key.with(u64::MAX).stream());
    let ranked = &order[..active];

    let mut per_domain: Vec<Vec<TopicId>> = vec![Vec::new(); n_domains];
    for (topic, &quota) in ranked.iter().zip(&quotas) {
        let mut rng = key.with(topic.0 as u64).stream();
        for d in index::sample(&mut rng, n_domains, quota as usize) {
            per_domain[d].push(*topic);
        }
    }

    let width = n_domains.to_string().len();
    let entries = per_domain
        .into_iter()
        .enumerate()
        .map(|(i, topics)| (format!("site-{:0width$}.example", i + 1), topics));
    let label = format!(
        "synthetic(n={n_domains}, zero={}, top={}, median={}, seed={seed})",
        spec.zero_topics, spec.top_fraction, spec.median
    );
    DomainClassification::from_entries(entries, taxonomy, &label)
}

fn within_tolerance(got: f64, want: f64) -> bool {
    if want == 0.0 {
        got == 0.0
    } else {
        (got - want).abs() <= SKEW_TOLERANCE * want.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATIC_FIXTURE: &str = include_str!("../data/static_mapping_fixture.tsv");

    #[test]
    fn static_mapping_fixture_shape() {
        let tax = Taxonomy::v1();
        let cls = DomainClassification::parse(STATIC_FIXTURE, "static", &tax).unwrap();
        assert_eq!(cls.len(), 9254);
        assert_eq!(cls.unknown_domains(), 1344);
        assert_eq!(cls.median_topics_per_domain(), 1);
        assert_eq!(
            cls.topics_per_domain_histogram(),
            vec![1344, 4135, 2350, 1073, 270, 59, 20, 3]
        );
        assert!(cls.max_topics_per_domain() <= 7);
    }

    #[test]
    fn unknown_topic_id_is_rejected() {
        let tax = Taxonomy::v1();
        let err = DomainClassification::parse("a.com\t1,999\n", "f", &tax).unwrap_err();
        assert!(err.to_string().contains("999"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn duplicate_domain_is_rejected() {
        let tax = Taxonomy::v1();
        let err =
            DomainClassification::parse("a.com\t1\nb.com\t\na.com\t2\n", "f", &tax).unwrap_err();
        assert!(err.to_string().contains("duplicate domain"), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn empty_list_is_unknown() {
        let tax = Taxonomy::v1();
        let cls = DomainClassification::parse("a.com\t\nb.com\n", "f", &tax).unwrap();
        assert_eq!(cls.len(), 2);
        assert_eq!(cls.unknown_domains(), 2);
        let prev = prevalence(&cls, &tax);
        assert_eq!(prev.total_domains, 2);
        assert_eq!(prev.sum(), 0);
    }

    #[test]
    fn singleton_prevalence() {
        let tax = Taxonomy::v1();
        let cls =
            DomainClassification::from_entries([("x.org", vec![TopicId(5)])], &tax, "one").unwrap();
        let prev = prevalence(&cls, &tax);
        assert_eq!(prev.count(TopicId(5)), 1);
        assert_eq!(prev.zero_topics(&tax), 348);
        assert_eq!(prev.sum(), 1);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let tax = Taxonomy::v1();
        let cls = DomainClassification::parse(STATIC_FIXTURE, "static", &tax).unwrap();
        let mut buf = Vec::new();
        cls.write_tsv(&mut buf).unwrap();
        let back =
            DomainClassification::parse(std::str::from_utf8(&buf).unwrap(), "b", &tax).unwrap();
        assert_eq!(prevalence(&cls, &tax), prevalence(&back, &tax));
        assert_eq!(back.domains(), cls.domains());
    }

    #[test]
    fn crux_shaped_synthesis_at_full_scale() {
        let tax = Taxonomy::v1();
        let cls = synthesize_skewed_classification(&tax, 1_000_000, SkewSpec::CRUX, 3).unwrap();
        let prev = prevalence(&cls, &tax);
        assert_eq!(prev.zero_topics(&tax), 42);
        assert_eq!(prev.max().1, 188_000);
        let median = prev.median(&tax);
        assert!((median - 66.0).abs() <= 6.6, "median {median}");
    }

    #[test]
    fn uniform_limit() {
        let tax = Taxonomy::v1();
        let n = 349 * 40;
        let spec = SkewSpec {
            zero_topics: 0,
            top_fraction: 1.0 / 349.0,
            median: 40.0,
        };
        let cls = synthesize_skewed_classification(&tax, n, spec, 1).unwrap();
        let prev = prevalence(&cls, &tax);
        for (_, c) in prev.per_topic(&tax) {
            assert_eq!(c, 40);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let tax = Taxonomy::v1();
        let spec = SkewSpec::CRUX.scaled_to(100_000);
        let a = synthesize_skewed_classification(&tax, 100_000, spec, 99).unwrap();
        let b = synthesize_skewed_classification(&tax, 100_000, spec, 99).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_tsv(&mut x).unwrap();
        b.write_tsv(&mut y).unwrap();
        assert_eq!(x, y);
        let c = synthesize_skewed_classification(&tax, 100_000, spec, 100).unwrap();
        let mut z = Vec::new();
        c.write_tsv(&mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn infeasible_specs() {
        let tax = Taxonomy::v1();
        let too_high = SkewSpec {
            median: 2_000.0,
            ..SkewSpec::CRUX
        };
        assert!(matches!(
            synthesize_skewed_classification(&tax, 1_000, too_high, 0),
            Err(Error::InfeasibleSpec(_))
        ));
        let all_zero = SkewSpec {
            zero_topics: 349,
            ..SkewSpec::CRUX
        };
        assert!(synthesize_skewed_classification(&tax, 1_000, all_zero, 0).is_err());
        let bad_fraction = SkewSpec {
            top_fraction: 0.0,
            ..SkewSpec::CRUX
        };
        assert!(synthesize_skewed_classification(&tax, 1_000, bad_fraction, 0).is_err());
        // more than half the taxonomy at zero forces a zero median
        let zero_median = SkewSpec {
            zero_topics: 200,
            top_fraction: 0.1,
            median: 5.0,
        };
        assert!(synthesize_skewed_classification(&tax, 10_000, zero_median, 0).is_err());
    }
}
