//! Synthetic browsing populations.
//!
//! A population is drawn in two steps. Each user first draws how many unique
//! domains they visit in an epoch, then draws that many distinct domains from
//! a ranked top list, weighted by a global traffic model. Topics observed by a
//! user are the union of the classification topics of their domains, and the
//! stable top-T profile is sampled from those.
//!
//! All randomness comes from per-user keyed streams, so a population does not
//! depend on thread count and user `i` is the same in populations of any size.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classification::DomainClassification;
use crate::error::{Error, Result};
use crate::rng::{KeyedStream, Purpose, StreamKey};
use crate::taxonomy::{Taxonomy, TopicId};

pub type UserId = u32;

/// The six sites placed ahead of every CrUX bucket.
pub const DEFAULT_FIXED_TOP: [&str; 6] = [
    "www.google.com",
    "www.youtube.com",
    "www.facebook.com",
    "www.whatsapp.com",
    "www.roblox.com",
    "www.amazon.com",
];

/// CrUX rank buckets, smallest first.
pub const CRUX_BUCKETS: [u32; 7] = [1_000, 5_000, 10_000, 50_000, 100_000, 500_000, 1_000_000];

/// Domains in a total popularity order; position 0 is rank 1.
#[derive(Debug, Clone)]
pub struct RankedDomainList {
    domains: Vec<String>,
}

impl RankedDomainList {
    pub fn new(domains: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(domains.len());
        for d in &domains {
            if !seen.insert(d.as_str()) {
                return Err(Error::Input(format!("duplicate domain {d} in ranked list")));
            }
        }
        Ok(RankedDomainList { domains })
    }

    /// Uses the classification's own domain order as the popularity order.
    pub fn from_classification(classification: &DomainClassification) -> Self {
        RankedDomainList {
            domains: classification.domains().to_vec(),
        }
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

    /// Domain at 1-based rank.
    pub fn at_rank(&self, rank: usize) -> Option<&str> {
        rank.checked_sub(1)
            .and_then(|i| self.domains.get(i))
            .map(String::as_str)
    }
}

/// Registrable-domain extraction against a public-suffix snapshot.
#[derive(Debug, Clone)]
pub struct PublicSuffixes {
    multi_label: HashSet<String>,
}

impl PublicSuffixes {
    /// The bundled snapshot of multi-label suffixes.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../data/public_suffix_snapshot.txt"))
    }

    /// One suffix per line; `//` comments and blank lines ignored.
    pub fn parse(text: &str) -> Self {
        let multi_label = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("//"))
            .map(|l| l.trim_start_matches('.').to_ascii_lowercase())
            .collect();
        PublicSuffixes { multi_label }
    }

    /// eTLD+1 of a host. Hosts whose suffix is not in the snapshot fall back
    /// to their last two labels.
    pub fn etld_plus_one(&self, host: &str) -> String {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        let labels: Vec<&str> = host.split('.').collect();
        // longest listed suffix wins
        for take in (2..labels.len()).rev() {
            let suffix = labels[labels.len() - take..].join(".");
            if self.multi_label.contains(&suffix) {
                return labels[labels.len() - take - 1..].join(".");
            }
        }
        if labels.len() <= 2 {
            host
        } else {
            labels[labels.len() - 2..].join(".")
        }
    }
}

/// Host part of a CrUX origin such as `https://www.example.com:8443`.
pub fn origin_host(origin: &str) -> &str {
    let rest = origin.split_once("://").map(|(_, r)| r).unwrap_or(origin);
    let rest = rest.split(['/', '?', '#']).next().unwrap_or(rest);
    rest.rsplit_once(':')
        .filter(|(_, port)| port.chars().all(|c| c.is_ascii_digit()))
        .map(|(h, _)| h)
        .unwrap_or(rest)
}

fn parse_bucket(label: &str) -> Option<u32> {
    let l = label.trim().to_ascii_lowercase();
    let value = match l.strip_suffix('k') {
        Some(n) => n.parse::<u32>().ok()?.checked_mul(1_000)?,
        None => match l.strip_suffix('m') {
            Some(n) => n.parse::<u32>().ok()?.checked_mul(1_000_000)?,
            None => l.parse().ok()?,
        },
    };
    CRUX_BUCKETS.contains(&value).then_some(value)
}

/// Parses a CrUX CSV (`origin,rank_bucket`) into `(host, bucket)` pairs.
/// Bucket labels may be numeric (`1000`) or short (`1k`, `1m`).
pub fn parse_crux_buckets(text: &str, source_name: &str) -> Result<Vec<(String, u32)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("origin")) {
            continue;
        }
        let (origin, bucket) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(source_name, line_no, "expected `origin,rank_bucket`"))?;
        let bucket = parse_bucket(bucket).ok_or_else(|| {
            Error::parse(
                source_name,
                line_no,
                format!("unknown rank bucket {bucket:?}"),
            )
        })?;
        out.push((origin_host(origin.trim()).to_ascii_lowercase(), bucket));
    }
    Ok(out)
}

/// Parses a Tranco CSV (`rank,domain`).
pub fn parse_tranco(text: &str, source_name: &str) -> Result<HashMap<String, u64>> {
    let mut out = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("rank")) {
            continue;
        }
        let (rank, domain) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(source_name, line_no, "expected `rank,domain`"))?;
        let rank: u64 = rank
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("bad rank {rank:?}")))?;
        // keep the best rank if a domain repeats
        let e = out
            .entry(domain.trim().to_ascii_lowercase())
            .or_insert(rank);
        *e = (*e).min(rank);
    }
    Ok(out)
}

/// Inputs to [`build_total_order`] besides the CrUX buckets.
#[derive(Debug, Clone)]
pub struct OrderingInputs<'a> {
    /// eTLD+1 -> Tranco rank.
    pub tranco: &'a HashMap<String, u64>,
    /// Optional secondary ordering (eTLD+1 -> rank), consulted on Tranco ties.
    pub radar: Option<&'a HashMap<String, u64>>,
    pub fixed_top: &'a [String],
    pub suffixes: &'a PublicSuffixes,
}

/// Totally orders a bucketed top list.
///
/// `fixed_top` takes positions 1..=k. Within each bucket, domains are sorted
/// by the Tranco rank of their eTLD+1 (unranked ones last), then by the
/// secondary rank when given, then lexicographically. Buckets follow each
/// other smallest first.
pub fn build_total_order(
    crux: &[(String, u32)],
    inputs: &OrderingInputs<'_>,
) -> Result<RankedDomainList> {
    let mut bucket_of: HashMap<&str, u32> = HashMap::with_capacity(crux.len());
    for (domain, bucket) in crux {
        if let Some(prev) = bucket_of.insert(domain.as_str(), *bucket) {
            return Err(Error::Input(if prev == *bucket {
                format!("{domain} listed twice in bucket {bucket}; deduplicate origins first")
            } else {
                format!("{domain} appears in buckets {prev} and {bucket}")
            }));
        }
    }
    for d in inputs.fixed_top {
        if !bucket_of.contains_key(d.as_str()) {
            return Err(Error::Input(format!(
                "fixed top site {d} is not in the CrUX list"
            )));
        }
    }
    let fixed: HashSet<&str> = inputs.fixed_top.iter().map(String::as_str).collect();

    let rank_of = |domain: &str| -> (u64, u64) {
        let reg = inputs.suffixes.etld_plus_one(domain);
        let tranco = inputs.tranco.get(&reg).copied().unwrap_or(u64::MAX);
        let radar = inputs
            .radar
            .and_then(|r| r.get(&reg).copied())
            .unwrap_or(u64::MAX);
        (tranco, radar)
    };

    let mut keyed: Vec<(u32, u64, u64, &str)> = crux
        .iter()
        .filter(|(d, _)| !fixed.contains(d.as_str()))
        .map(|(d, b)| {
            let (t, r) = rank_of(d);
            (*b, t, r, d.as_str())
        })
        .collect();
    keyed.sort_unstable();

    let mut domains: Vec<String> = inputs.fixed_top.to_vec();
    domains.extend(keyed.into_iter().map(|(_, _, _, d)| d.to_string()));
    RankedDomainList::new(domains)
}

/// How visits are spread over the ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficModel {
    /// Probability of rank r proportional to r^-exponent.
    Zipf { exponent: f64 },
    /// Mass per rank bucket, spread evenly over the ranks of the bucket.
    /// Pairs are `(last rank of bucket, mass)` with ascending last ranks.
    Binned { buckets: Vec<(u64, f64)> },
}

impl Default for TrafficModel {
    fn default() -> Self {
        TrafficModel::Zipf {
            exponent: DEFAULT_ZIPF_EXPONENT,
        }
    }
}

/// Default traffic exponent, fitted together with the lognormal defaults.
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.15;

impl TrafficModel {
    /// Per-rank probabilities over `m` positions, summing to 1.
    pub fn probabilities(&self, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::Input("traffic model over an empty list".into()));
        }
        let mut w: Vec<f64> = match self {
            TrafficModel::Zipf { exponent } => {
                if !exponent.is_finite() || *exponent < 0.0 {
                    return Err(Error::Input(format!("bad Zipf exponent {exponent}")));
                }
                (1..=m).map(|r| (r as f64).powf(-exponent)).collect()
            }
            TrafficModel::Binned { buckets } => {
                let mut w = vec![0.0; m];
                let mut start = 0usize;
                for &(last, mass) in buckets {
                    if !(mass >= 0.0) {
                        return Err(Error::Input(format!("negative bucket mass {mass}")));
                    }
                    let end = (last as usize).min(m);
                    if end <= start {
                        continue;
                    }
                    let per = mass / (end - start) as f64;
                    w[start..end].iter_mut().for_each(|x| *x = per);
                    start = end;
                }
                w
            }
        };
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Input("traffic model has no mass".into()));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }
}

/// Inverse-CDF sampler over ranked positions.
#[derive(Debug, Clone)]
pub struct TrafficSampler {
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl TrafficSampler {
    pub fn new(model: &TrafficModel, m: usize) -> Result<Self> {
        let weights = model.probabilities(m)?;
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(TrafficSampler { weights, cdf })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn probability(&self, pos: usize) -> f64 {
        self.weights[pos]
    }

    /// One position (0-based rank) with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }

    /// `k` distinct positions, drawn one after another proportionally to the
    /// weights of the positions not yet drawn.
    pub fn sample_distinct<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<u32> {
        let m = self.len();
        let k = k.min(m);
        if k * 4 <= m {
            let mut chosen: Vec<u32> = Vec::with_capacity(k);
            let mut seen: HashSet<u32> = HashSet::with_capacity(k * 2);
            let budget = 64 * k + 1_024;
            let mut tries = 0;
            while chosen.len() < k && tries < budget {
                tries += 1;
                let p = self.sample(rng) as u32;
                if seen.insert(p) {
                    chosen.push(p);
                }
            }
            if chosen.len() == k {
                return chosen;
            }
        }
        // exponential keys: position i gets key -ln(u)/w_i, smallest k win,
        // which matches successive weighted draws without replacement
        let mut keys: Vec<(f64, u32)> = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
                (key, i as u32)
            })
            .collect();
        if k < m {
            keys.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
            keys.truncate(k);
        }
        keys.sort_by(|a, b| a.0.total_cmp(&b.0));
        keys.into_iter().map(|(_, i)| i).collect()
    }
}

/// Distribution of the number of unique domains a user visits per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UniqueDomainCountModel {
    /// `max(1, round(X))` with `ln X ~ N(mu, sigma^2)`.
    Lognormal { mu: f64, sigma: f64 },
    /// `(unique_domain_count, user_fraction)` pairs.
    Histogram { bins: Vec<(u64, f64)> },
}

impl Default for UniqueDomainCountModel {
    fn default() -> Self {
        UniqueDomainCountModel::Lognormal {
            mu: DEFAULT_LOGNORMAL_MU,
            sigma: DEFAULT_LOGNORMAL_SIGMA,
        }
    }
}

/// Lognormal defaults. With the default traffic over a 1M list they give
/// about 93k unique domains and 47k unique profiles across 52k users, and
/// 266k domains and 215k profiles across 250k users.
pub const DEFAULT_LOGNORMAL_MU: f64 = 2.0;
pub const DEFAULT_LOGNORMAL_SIGMA: f64 = 1.0;

impl UniqueDomainCountModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            UniqueDomainCountModel::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::Input(format!("bad lognormal ({mu}, {sigma})")));
                }
            }
            UniqueDomainCountModel::Histogram { bins } => {
                if bins.is_empty() {
                    return Err(Error::Input("empty unique-domain histogram".into()));
                }
                if bins.iter().any(|&(c, f)| c == 0 || !(f >= 0.0)) {
                    return Err(Error::Input(
                        "histogram counts must be positive and fractions non-negative".into(),
                    ));
                }
                if !(bins.iter().map(|b| b.1).sum::<f64>() > 0.0) {
                    return Err(Error::Input("histogram has no mass".into()));
                }
            }
        }
        Ok(())
    }

    /// Parses `unique_domain_count,user_fraction` CSV. Fractions are
    /// normalized, so raw user counts work too.
    pub fn parse_histogram(text: &str, source_name: &str) -> Result<Self> {
        let mut bins = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("unique_domain_count")) {
                continue;
            }
            let (c, f) = line.split_once(',').ok_or_else(|| {
                Error::parse(
                    source_name,
                    line_no,
                    "expected `unique_domain_count,user_fraction`",
                )
            })?;
            let c: u64 = c
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("bad count {c:?}")))?;
            let f: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("bad fraction {f:?}")))?;
            bins.push((c, f));
        }
        let model = UniqueDomainCountModel::Histogram { bins };
        model
            .validate()
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))?;
        Ok(model)
    }

    pub fn load_histogram(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_histogram(&text, &path.display().to_string())
    }

    /// Draws a count (at least 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            UniqueDomainCountModel::Lognormal { mu, sigma } => {
                let d = LogNormal::new(*mu, *sigma).expect("validated parameters");
                d.sample(rng).round().max(1.0) as u64
            }
            UniqueDomainCountModel::Histogram { bins } => {
                let total: f64 = bins.iter().map(|b| b.1).sum();
                let mut u = rng.random::<f64>() * total;
                for &(c, f) in bins {
                    if u < f {
                        return c;
                    }
                    u -= f;
                }
                bins.iter()
                    .rev()
                    .find(|b| b.1 > 0.0)
                    .map(|b| b.0)
                    .unwrap_or(1)
            }
        }
    }

    /// P(count <= k), before clamping to the list size.
    pub fn cdf(&self, k: u64) -> f64 {
        match self {
            UniqueDomainCountModel::Lognormal { mu, sigma } => {
                if k == 0 {
                    return 0.0;
                }
                Normal::standard().cdf(((k as f64 + 0.5).ln() - mu) / sigma)
            }
            UniqueDomainCountModel::Histogram { bins } => {
                let total: f64 = bins.iter().map(|b| b.1).sum();
                bins.iter().filter(|b| b.0 <= k).map(|b| b.1).sum::<f64>() / total
            }
        }
    }
}

/// A synthetic user. Visited domains are stored as 0-based positions in the
/// ranked list the population was drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: UserId,
    pub visited: Vec<u32>,
    /// Sorted, distinct.
    pub observed_topics: Vec<TopicId>,
    /// Sorted, distinct; empty until [`derive_top_profile`] runs.
    pub top_profile: Vec<TopicId>,
}

impl UserProfile {
    pub fn visited_domains<'a>(
        &'a self,
        order: &'a RankedDomainList,
    ) -> impl Iterator<Item = &'a str> + 'a {
        self.visited
            .iter()
            .map(|&p| order.domains[p as usize].as_str())
    }

    pub fn to_record(&self, order: &RankedDomainList) -> PopulationRecord {
        PopulationRecord {
            user_id: self.user_id,
            visited_domains: self.visited_domains(order).map(str::to_string).collect(),
            observed_topics: self.observed_topics.clone(),
            top_profile: self.top_profile.clone(),
        }
    }

    /// Rebuilds a profile from a population record. Visited domains are
    /// resolved against `order` when given and dropped otherwise.
    pub fn from_record(rec: PopulationRecord, order: Option<&RankedDomainList>) -> Result<Self> {
        let visited = match order {
            Some(order) => {
                let index: HashMap<&str, u32> = order
                    .domains
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (d.as_str(), i as u32))
                    .collect();
                rec.visited_domains
                    .iter()
                    .map(|d| {
                        index.get(d.as_str()).copied().ok_or_else(|| {
                            Error::Input(format!("user {}: {d} not in ranked list", rec.user_id))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()?
            }
            None => Vec::new(),
        };
        Ok(UserProfile {
            user_id: rec.user_id,
            visited,
            observed_topics: sorted_distinct(rec.observed_topics),
            top_profile: sorted_distinct(rec.top_profile),
        })
    }
}

fn sorted_distinct(mut v: Vec<TopicId>) -> Vec<TopicId> {
    v.sort_unstable();
    v.dedup();
    v
}

/// One line of a population NDJSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub user_id: UserId,
    pub visited_domains: Vec<String>,
    pub observed_topics: Vec<TopicId>,
    pub top_profile: Vec<TopicId>,
}

/// Output of [`generate_population`].
#[derive(Debug, Clone)]
pub struct Population {
    pub users: Vec<UserProfile>,
    /// Users whose drawn count exceeded the list size and was clamped.
    pub clamped_counts: usize,
}

/// Everything a population draw needs besides its size and seed.
#[derive(Debug, Clone, Copy)]
pub struct PopulationModels<'a> {
    pub order: &'a RankedDomainList,
    pub traffic: &'a TrafficSampler,
    pub counts: &'a UniqueDomainCountModel,
    pub classification: &'a DomainClassification,
}

/// Draws `n` users with ids `0..n`; `top_profile` is left empty.
pub fn generate_population(
    n: usize,
    models: PopulationModels<'_>,
    seed: u64,
) -> Result<Population> {
    if n == 0 {
        return Err(Error::Input("population size must be at least 1".into()));
    }
    let PopulationModels {
        order,
        traffic,
        counts,
        classification,
    } = models;
    counts.validate()?;
    if traffic.len() != order.len() {
        return Err(Error::Input(format!(
            "traffic model covers {} ranks but the list has {}",
            traffic.len(),
            order.len()
        )));
    }
    // ranked position -> classification row
    let aligned = classification.len() == order.len()
        && classification
            .domains()
            .iter()
            .zip(order.domains())
            .all(|(a, b)| a == b);
    let rows: Option<Vec<Option<u32>>> = (!aligned).then(|| {
        order
            .domains()
            .par_iter()
            .map(|d| classification.position(d).map(|p| p as u32))
            .collect()
    });
    let topics_at = |pos: u32| -> &[TopicId] {
        match &rows {
            None => classification.topics_at(pos as usize),
            Some(rows) => rows[pos as usize]
                .map(|r| classification.topics_at(r as usize))
                .unwrap_or(&[]),
        }
    };

    let m = order.len() as u64;
    let base = StreamKey::new(seed);
    let drawn: Vec<(UserProfile, bool)> = (0..n as u32)
        .into_par_iter()
        .map(|user_id| {
            let user_key = base.with(user_id as u64);
            let mut count_rng = user_key.purpose(Purpose::DomainCount).stream();
            let k = counts.sample(&mut count_rng);
            let clamped = k > m;
            let k = k.min(m) as usize;
            let mut domain_rng = user_key.purpose(Purpose::DomainSample).stream();
            let visited = traffic.sample_distinct(&mut domain_rng, k);
            let observed: BTreeSet<TopicId> = visited
                .iter()
                .flat_map(|&p| topics_at(p).iter().copied())
                .collect();
            (
                UserProfile {
                    user_id,
                    visited,
                    observed_topics: observed.into_iter().collect(),
                    top_profile: Vec::new(),
                },
                clamped,
            )
        })
        .collect();
    let clamped_counts = drawn.iter().filter(|(_, c)| *c).count();
    Ok(Population {
        users: drawn.into_iter().map(|(u, _)| u).collect(),
        clamped_counts,
    })
}

/// Fills `top_profile` with `t` topics sampled uniformly from the observed
/// topics, topping up with uniform taxonomy draws when fewer than `t` were
/// observed. `profile_index` selects one of several candidate profiles for
/// the same user.
pub fn derive_top_profile(
    user: &UserProfile,
    taxonomy: &Taxonomy,
    t: usize,
    seed: u64,
    profile_index: u32,
) -> UserProfile {
    let mut rng = StreamKey::new(seed)
        .with(user.user_id as u64)
        .purpose(Purpose::TopProfile)
        .with(profile_index as u64)
        .stream();
    let t = t.min(taxonomy.omega());
    let mut profile: Vec<TopicId> = if user.observed_topics.len() >= t {
        index::sample(&mut rng, user.observed_topics.len(), t)
            .into_iter()
            .map(|i| user.observed_topics[i])
            .collect()
    } else {
        let mut chosen = user.observed_topics.clone();
        fill_uniform(&mut chosen, taxonomy, t, &mut rng);
        chosen
    };
    profile.sort_unstable();
    UserProfile {
        top_profile: profile,
        ..user.clone()
    }
}

fn fill_uniform(chosen: &mut Vec<TopicId>, taxonomy: &Taxonomy, t: usize, rng: &mut KeyedStream) {
    while chosen.len() < t {
        let cand = taxonomy.topic_at(rng.random_range(0..taxonomy.omega()));
        if !chosen.contains(&cand) {
            chosen.push(cand);
        }
    }
}

/// Uniform random T-sets, one per user, ignoring browsing entirely.
pub fn uniform_random_profiles(
    n: usize,
    taxonomy: &Taxonomy,
    t: usize,
    seed: u64,
) -> Vec<Vec<TopicId>> {
    (0..n as u64)
        .into_par_iter()
        .map(|u| {
            let mut rng = StreamKey::new(seed)
                .with(u)
                .purpose(Purpose::Baseline)
                .stream();
            let mut set = Vec::with_capacity(t);
            fill_uniform(&mut set, taxonomy, t.min(taxonomy.omega()), &mut rng);
            set.sort_unstable();
            set
        })
        .collect()
}

/// Summary statistics of a generated population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub users: usize,
    pub unique_domains: usize,
    pub unique_topics: usize,
    pub unique_profiles: usize,
}

pub fn population_stats(users: &[UserProfile]) -> PopulationStats {
    let domains: HashSet<u32> = users
        .iter()
        .flat_map(|u| u.visited.iter().copied())
        .collect();
    let topics: HashSet<TopicId> = users
        .iter()
        .flat_map(|u| u.observed_topics.iter().copied())
        .collect();
    let profiles: HashSet<&[TopicId]> = users.iter().map(|u| u.top_profile.as_slice()).collect();
    PopulationStats {
        users: users.len(),
        unique_domains: domains.len(),
        unique_topics: topics.len(),
        unique_profiles: profiles.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn etld_plus_one_rules() {
        let psl = PublicSuffixes::bundled();
        assert_eq!(psl.etld_plus_one("www.bbc.co.uk"), "bbc.co.uk");
        assert_eq!(psl.etld_plus_one("news.example.com"), "example.com");
        assert_eq!(psl.etld_plus_one("example.com"), "example.com");
        assert_eq!(
            psl.etld_plus_one("a.b.example.unknownsuffix"),
            "example.unknownsuffix"
        );
        assert_eq!(psl.etld_plus_one("foo.github.io"), "foo.github.io");
        assert_eq!(psl.etld_plus_one("WWW.Example.COM."), "example.com");
    }

    #[test]
    fn origin_parsing() {
        assert_eq!(origin_host("https://www.example.com"), "www.example.com");
        assert_eq!(origin_host("http://example.com:8080/path"), "example.com");
        assert_eq!(origin_host("example.org"), "example.org");
    }

    #[test]
    fn order_within_buckets_by_tranco() {
        let crux = vec![
            ("b.com".to_string(), 1_000),
            ("a.com".to_string(), 1_000),
            ("c.com".to_string(), 5_000),
        ];
        let tranco = HashMap::from([("a.com".to_string(), 1), ("b.com".to_string(), 2)]);
        let psl = PublicSuffixes::bundled();
        let list = build_total_order(
            &crux,
            &OrderingInputs {
                tranco: &tranco,
                radar: None,
                fixed_top: &[],
                suffixes: &psl,
            },
        )
        .unwrap();
        assert_eq!(
            list.domains(),
            strings(&["a.com", "b.com", "c.com"]).as_slice()
        );
    }

    #[test]
    fn unranked_after_ranked_then_lexicographic() {
        let crux = vec![
            ("zz.com".to_string(), 1_000),
            ("yy.com".to_string(), 1_000),
            ("www.ranked.com".to_string(), 1_000),
        ];
        let tranco = HashMap::from([("ranked.com".to_string(), 500)]);
        let psl = PublicSuffixes::bundled();
        let list = build_total_order(
            &crux,
            &OrderingInputs {
                tranco: &tranco,
                radar: None,
                fixed_top: &[],
                suffixes: &psl,
            },
        )
        .unwrap();
        assert_eq!(
            list.domains(),
            strings(&["www.ranked.com", "yy.com", "zz.com"]).as_slice()
        );
    }

    #[test]
    fn fixed_top_goes_first_and_must_exist() {
        let mut crux: Vec<(String, u32)> = vec![("x.com".into(), 1_000)];
        crux.extend(
            DEFAULT_FIXED_TOP
                .iter()
                .rev()
                .map(|d| (d.to_string(), 1_000)),
        );
        let tranco = HashMap::from([("x.com".to_string(), 1)]);
        let psl = PublicSuffixes::bundled();
        let fixed = strings(&DEFAULT_FIXED_TOP);
        let inputs = OrderingInputs {
            tranco: &tranco,
            radar: None,
            fixed_top: &fixed,
            suffixes: &psl,
        };
        let list = build_total_order(&crux, &inputs).unwrap();
        assert_eq!(&list.domains()[..6], fixed.as_slice());
        assert_eq!(list.at_rank(7), Some("x.com"));
        assert_eq!(list.at_rank(1), Some("www.google.com"));

        let err = build_total_order(&crux[..1], &inputs).unwrap_err();
        assert!(err.to_string().contains("www.google.com"));
    }

    #[test]
    fn domain_in_two_buckets_is_an_error() {
        let crux = vec![("a.com".to_string(), 1_000), ("a.com".to_string(), 5_000)];
        let psl = PublicSuffixes::bundled();
        let tranco = HashMap::new();
        let err = build_total_order(
            &crux,
            &OrderingInputs {
                tranco: &tranco,
                radar: None,
                fixed_top: &[],
                suffixes: &psl,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("buckets"));
    }

    #[test]
    fn radar_breaks_tranco_ties() {
        let crux = vec![("b.com".to_string(), 1_000), ("a.com".to_string(), 1_000)];
        let tranco = HashMap::new();
        let radar = HashMap::from([("b.com".to_string(), 1)]);
        let psl = PublicSuffixes::bundled();
        let list = build_total_order(
            &crux,
            &OrderingInputs {
                tranco: &tranco,
                radar: Some(&radar),
                fixed_top: &[],
                suffixes: &psl,
            },
        )
        .unwrap();
        assert_eq!(list.domains(), strings(&["b.com", "a.com"]).as_slice());
    }

    #[test]
    fn crux_and_tranco_parsers() {
        let crux = parse_crux_buckets(
            "origin,rank\nhttps://www.a.com,1000\nhttp://b.org,5k\n",
            "c",
        )
        .unwrap();
        assert_eq!(
            crux,
            vec![
                ("www.a.com".to_string(), 1_000),
                ("b.org".to_string(), 5_000)
            ]
        );
        assert!(parse_crux_buckets("https://a.com,7\n", "c").is_err());
        let tranco = parse_tranco("1,google.com\n2,a.com\n", "t").unwrap();
        assert_eq!(tranco["a.com"], 2);
    }

    #[test]
    fn traffic_probabilities_sum_to_one() {
        for model in [
            TrafficModel::Zipf { exponent: 1.0 },
            TrafficModel::Zipf { exponent: 0.0 },
            TrafficModel::Binned {
                buckets: vec![(10, 0.5), (100, 0.3), (1_000, 0.2)],
            },
        ] {
            let p = model.probabilities(1_000).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let binned = TrafficModel::Binned {
            buckets: vec![(10, 0.5), (100, 0.5)],
        }
        .probabilities(100)
        .unwrap();
        assert!((binned[0] - 0.05).abs() < 1e-12);
        assert!((binned[50] - 0.5 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn zipf_rank_one_frequency() {
        // analytic pmf: P(rank 1) = 1 / H_100
        let h100: f64 = (1..=100).map(|r| 1.0 / r as f64).sum();
        let sampler = TrafficSampler::new(&TrafficModel::Zipf { exponent: 1.0 }, 100).unwrap();
        let mut rng = StreamKey::new(5).stream();
        let draws = 1_000_000;
        let hits = (0..draws).filter(|_| sampler.sample(&mut rng) == 0).count();
        let freq = hits as f64 / draws as f64;
        let expect = 1.0 / h100;
        assert!((freq - expect).abs() <= 0.02 * expect, "{freq} vs {expect}");
    }

    #[test]
    fn sample_distinct_paths_agree() {
        let sampler = TrafficSampler::new(&TrafficModel::Zipf { exponent: 1.0 }, 50).unwrap();
        let mut rng = StreamKey::new(1).stream();
        // k > m/4 forces the exponential-key path
        let all = sampler.sample_distinct(&mut rng, 50);
        let set: HashSet<u32> = all.iter().copied().collect();
        assert_eq!(set.len(), 50);
        let few = sampler.sample_distinct(&mut rng, 5);
        assert_eq!(few.iter().collect::<HashSet<_>>().len(), 5);
        // rank 1 is the most likely first pick under either path
        let mut first = [0usize; 2];
        for i in 0..4_000 {
            let mut r = StreamKey::new(i).stream();
            if sampler.sample_distinct(&mut r, 5)[0] == 0 {
                first[0] += 1;
            }
            if sampler.sample_distinct(&mut r, 40)[0] == 0 {
                first[1] += 1;
            }
        }
        let expect = 4_000.0 * sampler.probability(0);
        for f in first {
            assert!((f as f64 - expect).abs() < 0.15 * expect, "{f} vs {expect}");
        }
    }

    #[test]
    fn histogram_model_parse_and_sample() {
        let m = UniqueDomainCountModel::parse_histogram(
            "unique_domain_count,user_fraction\n1,0.5\n10,0.5\n",
            "h",
        )
        .unwrap();
        assert_eq!(m.cdf(1), 0.5);
        assert_eq!(m.cdf(9), 0.5);
        assert_eq!(m.cdf(10), 1.0);
        let mut rng = StreamKey::new(3).stream();
        for _ in 0..100 {
            assert!(matches!(m.sample(&mut rng), 1 | 10));
        }
        assert!(UniqueDomainCountModel::parse_histogram("0,1.0\n", "h").is_err());
    }

    fn tiny_world() -> (
        Taxonomy,
        DomainClassification,
        RankedDomainList,
        TrafficSampler,
    ) {
        let tax = Taxonomy::v1();
        let cls = DomainClassification::parse("d1\t1\nd2\t2\nd3\t3,4\nd4\t\nd5\t5\n", "tiny", &tax)
            .unwrap();
        let order = RankedDomainList::from_classification(&cls);
        let traffic = TrafficSampler::new(&TrafficModel::default(), order.len()).unwrap();
        (tax, cls, order, traffic)
    }

    #[test]
    fn single_domain_users() {
        let (_, cls, order, traffic) = tiny_world();
        let counts = UniqueDomainCountModel::Histogram {
            bins: vec![(1, 1.0)],
        };
        let pop = generate_population(
            20,
            PopulationModels {
                order: &order,
                traffic: &traffic,
                counts: &counts,
                classification: &cls,
            },
            1,
        )
        .unwrap();
        assert_eq!(pop.users.len(), 20);
        for u in &pop.users {
            assert_eq!(u.visited.len(), 1);
            let d = order.domains()[u.visited[0] as usize].as_str();
            assert_eq!(u.observed_topics.as_slice(), cls.topics_of(d).unwrap());
        }
    }

    #[test]
    fn oversized_counts_are_clamped() {
        let (_, cls, order, traffic) = tiny_world();
        let counts = UniqueDomainCountModel::Histogram {
            bins: vec![(50, 1.0)],
        };
        let pop = generate_population(
            3,
            PopulationModels {
                order: &order,
                traffic: &traffic,
                counts: &counts,
                classification: &cls,
            },
            1,
        )
        .unwrap();
        assert_eq!(pop.clamped_counts, 3);
        assert!(pop.users.iter().all(|u| u.visited.len() == 5));
        assert!(pop.users.iter().all(|u| u.observed_topics.len() == 5));
    }

    #[test]
    fn top_profile_fill_and_containment() {
        let tax = Taxonomy::v1();
        let few = UserProfile {
            user_id: 4,
            visited: vec![],
            observed_topics: vec![TopicId(1), TopicId(2), TopicId(3)],
            top_profile: vec![],
        };
        let p = derive_top_profile(&few, &tax, 5, 11, 0);
        assert_eq!(p.top_profile.len(), 5);
        for t in &few.observed_topics {
            assert!(p.top_profile.contains(t));
        }
        assert_eq!(p, derive_top_profile(&few, &tax, 5, 11, 0));

        let many = UserProfile {
            observed_topics: (10..30).map(TopicId).collect(),
            ..few.clone()
        };
        let p = derive_top_profile(&many, &tax, 5, 11, 0);
        assert_eq!(p.top_profile.len(), 5);
        assert!(p
            .top_profile
            .iter()
            .all(|t| many.observed_topics.contains(t)));
        // distinct candidate profiles under distinct indices
        let others: HashSet<Vec<TopicId>> = (0..10)
            .map(|i| derive_top_profile(&many, &tax, 5, 11, i).top_profile)
            .collect();
        assert!(others.len() > 1);
    }

    #[test]
    fn record_round_trip() {
        let (tax, cls, order, traffic) = tiny_world();
        let counts = UniqueDomainCountModel::Histogram {
            bins: vec![(2, 1.0)],
        };
        let pop = generate_population(
            4,
            PopulationModels {
                order: &order,
                traffic: &traffic,
                counts: &counts,
                classification: &cls,
            },
            9,
        )
        .unwrap();
        for u in pop.users {
            let u = derive_top_profile(&u, &tax, 5, 9, 0);
            let rec = u.to_record(&order);
            let json = serde_json::to_string(&rec).unwrap();
            let back: PopulationRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(UserProfile::from_record(back, Some(&order)).unwrap(), u);
        }
    }
}
