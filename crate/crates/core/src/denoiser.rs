//! Adversary-side noise removal.
//!
//! A topic is taken as genuine when it repeats inside one call, or when it
//! shows up in two calls far enough apart that their source windows cannot
//! share a draw. Everything else falls back to a prevalence threshold: topics
//! that almost no domain is classified into are unlikely to be in anyone's
//! top profile. Once `T` topics are confirmed the profile is complete and any
//! other topic is noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classification::PrevalenceTable;
use crate::error::{Error, Result};
use crate::simulator::{ApiResult, Epoch, Observations, TruthChannel, TruthRecord};
use crate::taxonomy::TopicId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    RepetitionWithinCall,
    RepetitionAcrossCalls,
    Threshold,
    /// `T` topics were already confirmed, so this one must be noise.
    CompletedProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicVerdict {
    pub topic: TopicId,
    pub label: Label,
    pub basis: Basis,
}

/// Verdicts for one call, one per returned instance, in result order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseVerdict {
    pub epoch: Epoch,
    pub verdicts: Vec<TopicVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Topics on at most this many domains are treated as noise.
    pub threshold: u64,
    pub tau: usize,
    /// Profile size; reaching it ends threshold fallback.
    pub top_t: usize,
    /// Accept repetitions two epochs apart instead of `tau`.
    pub aggressive_gap_rule: bool,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            threshold: 10,
            tau: 3,
            top_t: 5,
            aggressive_gap_rule: false,
        }
    }
}

impl DenoiserConfig {
    /// Minimum epoch distance for a cross-call repetition to count.
    pub fn gap(&self) -> Epoch {
        if self.aggressive_gap_rule {
            2
        } else {
            self.tau as Epoch
        }
    }
}

/// Genuine iff strictly more than `threshold` domains carry the topic.
pub fn threshold_classify(
    topic: TopicId,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> Label {
    if prevalence.count(topic) > config.threshold {
        Label::Genuine
    } else {
        Label::Noisy
    }
}

fn multiplicities(topics: &[TopicId]) -> BTreeMap<TopicId, usize> {
    let mut m = BTreeMap::new();
    for &t in topics {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Judges a single call in isolation.
pub fn denoise_one_shot(
    result: &ApiResult,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> NoiseVerdict {
    let counts = multiplicities(&result.topics);
    let verdicts = result
        .topics
        .iter()
        .map(|&topic| {
            if counts[&topic] >= 2 {
                TopicVerdict {
                    topic,
                    label: Label::Genuine,
                    basis: Basis::RepetitionWithinCall,
                }
            } else {
                TopicVerdict {
                    topic,
                    label: threshold_classify(topic, prevalence, config),
                    basis: Basis::Threshold,
                }
            }
        })
        .collect();
    NoiseVerdict {
        epoch: result.epoch,
        verdicts,
    }
}

/// Incremental multi-shot state for one (site, user) history.
#[derive(Debug, Clone)]
pub struct MultiShotDenoiser<'a> {
    prevalence: &'a PrevalenceTable,
    config: DenoiserConfig,
    first_seen: BTreeMap<TopicId, Epoch>,
    confirmed: BTreeMap<TopicId, Basis>,
    believed: BTreeSet<TopicId>,
}

impl<'a> MultiShotDenoiser<'a> {
    pub fn new(prevalence: &'a PrevalenceTable, config: DenoiserConfig) -> Self {
        MultiShotDenoiser {
            prevalence,
            config,
            first_seen: BTreeMap::new(),
            confirmed: BTreeMap::new(),
            believed: BTreeSet::new(),
        }
    }

    /// Feeds the next call; calls must arrive in epoch order.
    pub fn observe(&mut self, result: &ApiResult) -> NoiseVerdict {
        let counts = multiplicities(&result.topics);
        for (&topic, &n) in &counts {
            if self.confirmed.contains_key(&topic) {
                continue;
            }
            if n >= 2 {
                self.confirmed.insert(topic, Basis::RepetitionWithinCall);
            } else if self
                .first_seen
                .get(&topic)
                .is_some_and(|&e| result.epoch - e >= self.config.gap())
            {
                self.confirmed.insert(topic, Basis::RepetitionAcrossCalls);
            }
        }
        for &topic in counts.keys() {
            self.first_seen.entry(topic).or_insert(result.epoch);
        }
        let complete = self.confirmed.len() >= self.config.top_t;
        let verdicts: Vec<TopicVerdict> = result
            .topics
            .iter()
            .map(|&topic| match self.confirmed.get(&topic) {
                Some(&basis) => TopicVerdict {
                    topic,
                    label: Label::Genuine,
                    basis,
                },
                None if complete => TopicVerdict {
                    topic,
                    label: Label::Noisy,
                    basis: Basis::CompletedProfile,
                },
                None => TopicVerdict {
                    topic,
                    label: threshold_classify(topic, self.prevalence, &self.config),
                    basis: Basis::Threshold,
                },
            })
            .collect();
        self.believed.extend(
            verdicts
                .iter()
                .filter(|v| v.label == Label::Genuine)
                .map(|v| v.topic),
        );
        NoiseVerdict {
            epoch: result.epoch,
            verdicts,
        }
    }

    /// Topics confirmed by repetition.
    pub fn confirmed(&self) -> impl Iterator<Item = TopicId> + '_ {
        self.confirmed.keys().copied()
    }

    pub fn confirmed_len(&self) -> usize {
        self.confirmed.len()
    }

    /// Every topic labeled genuine so far, threshold fallbacks included.
    pub fn belief(&self) -> &BTreeSet<TopicId> {
        &self.believed
    }
}

/// Runs the multi-shot rule over a whole history.
pub fn denoise_multi_shot(
    history: &[ApiResult],
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> (Vec<NoiseVerdict>, BTreeSet<TopicId>) {
    let mut d = MultiShotDenoiser::new(prevalence, *config);
    let verdicts = history.iter().map(|r| d.observe(r)).collect();
    (verdicts, d.confirmed().collect())
}

/// Confusion counts with noisy as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> DenoiseMetrics {
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        DenoiseMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision: ratio(self.tp, self.tp + self.fp),
            tpr: ratio(self.tp, self.tp + self.fn_),
            fpr: ratio(self.fp, self.fp + self.tn),
        }
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// Scores one call's verdicts against the truth behind it. Instances are
/// matched as multisets; all instances of a topic in a call share a label,
/// so the matching does not affect the counts.
pub fn score_verdict(verdict: &NoiseVerdict, window: &[TruthRecord]) -> Result<Confusion> {
    let mut truth: HashMap<TopicId, (u64, u64)> = HashMap::new();
    for r in window {
        if let Some(t) = r.delivered {
            let e = truth.entry(t).or_default();
            if r.draw.noisy {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut labels: BTreeMap<TopicId, (Label, u64)> = BTreeMap::new();
    for v in &verdict.verdicts {
        let e = labels.entry(v.topic).or_insert((v.label, 0));
        if e.0 != v.label {
            return Err(Error::Evaluation(format!(
                "epoch {}: topic {} labeled both ways in one call",
                verdict.epoch, v.topic
            )));
        }
        e.1 += 1;
    }
    let mut c = Confusion::default();
    for (topic, (label, n)) in labels {
        let (noisy, genuine) = truth.remove(&topic).unwrap_or((0, 0));
        if noisy + genuine != n {
            return Err(Error::Evaluation(format!(
                "epoch {}: {n} instance(s) of topic {topic} but {} in truth",
                verdict.epoch,
                noisy + genuine
            )));
        }
        match label {
            Label::Noisy => {
                c.tp += noisy;
                c.fp += genuine;
            }
            Label::Genuine => {
                c.fn_ += noisy;
                c.tn += genuine;
            }
        }
    }
    if let Some((topic, _)) = truth.into_iter().next() {
        return Err(Error::Evaluation(format!(
            "epoch {}: topic {topic} delivered but not judged",
            verdict.epoch
        )));
    }
    Ok(c)
}

fn check_alignment(obs: &Observations, truth: &TruthChannel) -> Result<()> {
    if obs.sites() != truth.sites() || obs.users() != truth.users() {
        return Err(Error::Evaluation(
            "observations and truth cover different sites or users".into(),
        ));
    }
    Ok(())
}

/// One-shot rule applied to every call independently.
pub fn evaluate_one_shot(
    obs: &Observations,
    truth: &TruthChannel,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> Result<Confusion> {
    check_alignment(obs, truth)?;
    let pairs: Vec<(usize, usize)> = (0..obs.sites().len())
        .flat_map(|s| (0..obs.users().len()).map(move |u| (s, u)))
        .collect();
    pairs
        .par_iter()
        .map(|&(s, u)| {
            let mut c = Confusion::default();
            for r in obs.history(s, u) {
                let v = denoise_one_shot(r, prevalence, config);
                c.add(score_verdict(&v, truth.window(s, u, r.epoch))?);
            }
            Ok(c)
        })
        .try_reduce(Confusion::default, |mut a, b| {
            a.add(b);
            Ok(a)
        })
}

/// One row of the multi-shot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: Epoch,
    pub confusion: Confusion,
    pub metrics: DenoiseMetrics,
    pub min_recovered: usize,
    /// Lower median over (site, user) histories.
    pub median_recovered: usize,
    pub max_recovered: usize,
}

/// Multi-shot rule over every (site, user) history; row `e` scores the calls
/// at epoch `e` and summarizes confirmed-set sizes after them.
pub fn evaluate_multi_shot(
    obs: &Observations,
    truth: &TruthChannel,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> Result<Vec<EpochRow>> {
    check_alignment(obs, truth)?;
    let pairs: Vec<(usize, usize)> = (0..obs.sites().len())
        .flat_map(|s| (0..obs.users().len()).map(move |u| (s, u)))
        .collect();
    let per_pair: Vec<Vec<(Confusion, usize)>> = pairs
        .par_iter()
        .map(|&(s, u)| {
            let mut d = MultiShotDenoiser::new(prevalence, *config);
            obs.history(s, u)
                .iter()
                .map(|r| {
                    let v = d.observe(r);
                    Ok((
                        score_verdict(&v, truth.window(s, u, r.epoch))?,
                        d.confirmed_len(),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let epochs = obs.epochs() as usize;
    let mut rows = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let mut c = Confusion::default();
        let mut sizes: Vec<usize> = Vec::with_capacity(per_pair.len());
        for p in &per_pair {
            c.add(p[e].0);
            sizes.push(p[e].1);
        }
        sizes.sort_unstable();
        let (min, median, max) = if sizes.is_empty() {
            (0, 0, 0)
        } else {
            (
                sizes[0],
                sizes[(sizes.len() - 1) / 2],
                sizes[sizes.len() - 1],
            )
        };
        rows.push(EpochRow {
            epoch: e as Epoch + 1,
            confusion: c,
            metrics: c.metrics(),
            min_recovered: min,
            median_recovered: median,
            max_recovered: max,
        });
    }
    Ok(rows)
}

/// One-shot metrics for each threshold.
pub fn threshold_sweep(
    obs: &Observations,
    truth: &TruthChannel,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
    thresholds: &[u64],
) -> Result<Vec<(u64, Confusion)>> {
    thresholds
        .iter()
        .map(|&threshold| {
            let cfg = DenoiserConfig {
                threshold,
                ..*config
            };
            Ok((threshold, evaluate_one_shot(obs, truth, prevalence, &cfg)?))
        })
        .collect()
}

/// Thresholds swept by default.
pub const SWEEP_THRESHOLDS: [u64; 10] = [0, 1, 2, 5, 10, 20, 50, 100, 500, 1000];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Writes the series as CSV; undefined metrics are empty fields.
pub fn write_series_csv<W: Write>(rows: &[EpochRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,accuracy,precision,tpr,fpr,min_recovered,median_recovered,max_recovered"
    )?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            opt(m.accuracy),
            opt(m.precision),
            opt(m.tpr),
            opt(m.fpr),
            r.min_recovered,
            r.median_recovered,
            r.max_recovered
        )?;
    }
    Ok(())
}
