//! The API mechanism.
//!
//! Each (user, site, source epoch) has one pinned draw: with probability `p`
//! a uniform topic from the whole taxonomy, otherwise a uniform pick from the
//! user's top profile. A call at epoch `e` returns the draws of the `tau`
//! source epochs `e - tau ..= e - 1`, shuffled. Users are warm-started, so
//! source epochs at or below zero exist and every call returns `tau` topics
//! unless the witness requirement withholds some.
//!
//! Draws are recomputed from keyed streams rather than stored state, so any
//! call can be evaluated in isolation and results do not depend on threads.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{UserId, UserProfile};
use crate::rng::{Purpose, StreamKey};
use crate::taxonomy::{Taxonomy, TopicId};

pub type SiteId = u32;
/// Epoch number. Calls happen at epochs `1..=epochs`; source epochs start at
/// `1 - tau`.
pub type Epoch = i64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Size of each user's top profile.
    pub top_t: usize,
    /// Source epochs returned per call.
    pub tau: usize,
    /// Per-draw noise probability.
    pub p: f64,
    pub epochs: u32,
    pub sites: Vec<SiteId>,
    /// Only deliver genuine topics the calling site has observed the user on.
    pub witness_enabled: bool,
    /// Chance that a caller has observed a given topic of a given user.
    pub witness_coverage: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            top_t: 5,
            tau: 3,
            p: 0.05,
            epochs: 30,
            sites: vec![0, 1],
            witness_enabled: false,
            witness_coverage: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_t == 0 || self.tau == 0 {
            return Err(Error::Input("top_t and tau must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Input(format!(
                "noise probability {} outside [0, 1]",
                self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.witness_coverage) {
            return Err(Error::Input(format!(
                "witness coverage {} outside [0, 1]",
                self.witness_coverage
            )));
        }
        let mut sites = self.sites.clone();
        sites.sort_unstable();
        sites.dedup();
        if sites.len() != self.sites.len() {
            return Err(Error::Input("site ids must be distinct".into()));
        }
        Ok(())
    }

    /// Source epochs that feed the call at `epoch`.
    pub fn window(&self, epoch: Epoch) -> std::ops::Range<Epoch> {
        epoch - self.tau as Epoch..epoch
    }
}

/// One pinned per-epoch draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochDraw {
    pub topic: TopicId,
    pub noisy: bool,
}

/// What a site sees from one call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiResult {
    pub site: SiteId,
    pub user: UserId,
    pub epoch: Epoch,
    pub topics: Vec<TopicId>,
}

fn draw_key(seed: u64, user: UserId, site: SiteId, source_epoch: Epoch) -> StreamKey {
    StreamKey::new(seed)
        .with(user as u64)
        .with(site as u64)
        .with(source_epoch as u64)
}

/// The draw pinned to `(user, site, source_epoch)`.
pub fn epoch_topic_draw(
    user: &UserProfile,
    site: SiteId,
    source_epoch: Epoch,
    config: &SimConfig,
    taxonomy: &Taxonomy,
) -> EpochDraw {
    let mut rng = draw_key(config.seed, user.user_id, site, source_epoch)
        .purpose(Purpose::EpochDraw)
        .stream();
    let noisy = rng.random::<f64>() < config.p || user.top_profile.is_empty();
    let topic = if noisy {
        taxonomy.topic_at(rng.random_range(0..taxonomy.omega()))
    } else {
        user.top_profile[rng.random_range(0..user.top_profile.len())]
    };
    EpochDraw { topic, noisy }
}

/// Whether `caller` has observed `user` on `topic`. Stable across epochs.
pub fn witnessed(caller: SiteId, user: &UserProfile, topic: TopicId, config: &SimConfig) -> bool {
    if user.observed_topics.binary_search(&topic).is_err() {
        return false;
    }
    if config.witness_coverage >= 1.0 {
        return true;
    }
    let mut rng = StreamKey::new(config.seed)
        .with(caller as u64)
        .with(user.user_id as u64)
        .with(topic.0 as u64)
        .purpose(Purpose::Witness)
        .stream();
    rng.random::<f64>() < config.witness_coverage
}

/// Topic actually handed to `caller` for a draw, if any. Noisy draws are
/// always delivered. Under the witness requirement an unwitnessed genuine
/// topic is replaced by its parent when the parent is witnessed, and
/// withheld otherwise.
pub fn deliver(
    draw: EpochDraw,
    user: &UserProfile,
    caller: SiteId,
    config: &SimConfig,
    taxonomy: &Taxonomy,
) -> Option<TopicId> {
    if !config.witness_enabled || draw.noisy || witnessed(caller, user, draw.topic, config) {
        return Some(draw.topic);
    }
    match taxonomy.parent_of(draw.topic) {
        Ok(Some(parent)) if witnessed(caller, user, parent, config) => Some(parent),
        _ => None,
    }
}

fn shuffled(
    mut topics: Vec<TopicId>,
    user: UserId,
    site: SiteId,
    epoch: Epoch,
    seed: u64,
) -> Vec<TopicId> {
    let mut rng = draw_key(seed, user, site, epoch)
        .purpose(Purpose::Shuffle)
        .stream();
    topics.shuffle(&mut rng);
    topics
}

/// A call made by `site` acting as its own caller.
pub fn call_api(
    user: &UserProfile,
    site: SiteId,
    epoch: Epoch,
    config: &SimConfig,
    taxonomy: &Taxonomy,
) -> ApiResult {
    call_api_as(site, user, site, epoch, config, taxonomy)
}

/// A call on `site` by a third-party `caller`. The caller only matters for
/// the witness requirement.
pub fn call_api_as(
    caller: SiteId,
    user: &UserProfile,
    site: SiteId,
    epoch: Epoch,
    config: &SimConfig,
    taxonomy: &Taxonomy,
) -> ApiResult {
    let topics = config
        .window(epoch)
        .filter_map(|s| {
            let draw = epoch_topic_draw(user, site, s, config, taxonomy);
            deliver(draw, user, caller, config, taxonomy)
        })
        .collect();
    ApiResult {
        site,
        user: user.user_id,
        epoch,
        topics: shuffled(topics, user.user_id, site, epoch, config.seed),
    }
}

/// Ground truth for one source epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthRecord {
    pub draw: EpochDraw,
    /// What the site received for this draw; `None` if withheld.
    pub delivered: Option<TopicId>,
}

/// Adversary-visible results, grouped by site then user, epochs contiguous.
#[derive(Debug, Clone)]
pub struct Observations {
    sites: Vec<SiteId>,
    users: Vec<UserId>,
    epochs: u32,
    results: Vec<Vec<ApiResult>>,
}

impl Observations {
    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn epochs(&self) -> u32 {
        self.epochs
    }

    pub fn site_index(&self, site: SiteId) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    /// Results for epochs `1..=epochs` of one user on one site.
    pub fn history(&self, site_index: usize, user_index: usize) -> &[ApiResult] {
        let e = self.epochs as usize;
        &self.results[site_index][user_index * e..(user_index + 1) * e]
    }

    pub fn site_results(&self, site_index: usize) -> &[ApiResult] {
        &self.results[site_index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApiResult> {
        self.results.iter().flatten()
    }

    /// Rebuilds from records. Every (site, user) must have exactly the calls
    /// for epochs `1..=E` for a common `E`.
    pub fn from_records(records: Vec<ApiResult>) -> Result<Self> {
        let mut grid: BTreeMap<SiteId, BTreeMap<UserId, BTreeMap<Epoch, ApiResult>>> =
            BTreeMap::new();
        for r in records {
            let key = (r.site, r.user, r.epoch);
            if grid
                .entry(r.site)
                .or_default()
                .entry(r.user)
                .or_default()
                .insert(r.epoch, r)
                .is_some()
            {
                return Err(Error::Input(format!("duplicate call record {key:?}")));
            }
        }
        let sites: Vec<SiteId> = grid.keys().copied().collect();
        let users: Vec<UserId> = grid
            .values()
            .next()
            .map(|u| u.keys().copied().collect())
            .unwrap_or_default();
        let epochs = grid
            .values()
            .next()
            .and_then(|u| u.values().next())
            .map(|e| e.len() as u32)
            .unwrap_or(0);
        let mut results = Vec::with_capacity(sites.len());
        for (site, per_user) in grid {
            if per_user.keys().ne(users.iter()) {
                return Err(Error::Input(format!(
                    "site {site} has a different user set"
                )));
            }
            let mut flat = Vec::with_capacity(users.len() * epochs as usize);
            for (user, per_epoch) in per_user {
                if per_epoch
                    .keys()
                    .ne((1..=epochs as Epoch).collect::<Vec<_>>().iter())
                {
                    return Err(Error::Input(format!(
                        "site {site}, user {user}: calls must cover epochs 1..={epochs}"
                    )));
                }
                flat.extend(per_epoch.into_values());
            }
            results.push(flat);
        }
        Ok(Observations {
            sites,
            users,
            epochs,
            results,
        })
    }
}

/// Per-source-epoch truth, kept apart from what the adversary sees.
#[derive(Debug, Clone)]
pub struct TruthChannel {
    sites: Vec<SiteId>,
    users: Vec<UserId>,
    epochs: u32,
    tau: usize,
    records: Vec<Vec<TruthRecord>>,
}

impl TruthChannel {
    fn span(&self) -> usize {
        self.epochs as usize + self.tau - 1
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    /// Truth for source epochs `1 - tau ..= epochs - 1` of one user.
    pub fn user_records(&self, site_index: usize, user_index: usize) -> &[TruthRecord] {
        let span = self.span();
        &self.records[site_index][user_index * span..(user_index + 1) * span]
    }

    /// The `tau` records behind the call at `epoch`.
    pub fn window(&self, site_index: usize, user_index: usize, epoch: Epoch) -> &[TruthRecord] {
        let start = (epoch - 1) as usize;
        &self.user_records(site_index, user_index)[start..start + self.tau]
    }

    pub fn source_epoch_of(&self, offset: usize) -> Epoch {
        offset as Epoch + 1 - self.tau as Epoch
    }

    /// Rebuilds from truth lines. Every (site, user) must cover source epochs
    /// `1 - tau ..= epochs - 1`.
    pub fn from_records(records: Vec<TruthLine>, epochs: u32, tau: usize) -> Result<Self> {
        let mut grid: BTreeMap<SiteId, BTreeMap<UserId, BTreeMap<Epoch, TruthRecord>>> =
            BTreeMap::new();
        for l in records {
            let rec = TruthRecord {
                draw: EpochDraw {
                    topic: l.topic,
                    noisy: l.noisy,
                },
                delivered: l.delivered,
            };
            if grid
                .entry(l.site)
                .or_default()
                .entry(l.user)
                .or_default()
                .insert(l.source_epoch, rec)
                .is_some()
            {
                return Err(Error::Input(format!(
                    "duplicate truth record ({}, {}, {})",
                    l.site, l.user, l.source_epoch
                )));
            }
        }
        let expected: Vec<Epoch> = (1 - tau as Epoch..epochs as Epoch).collect();
        let sites: Vec<SiteId> = grid.keys().copied().collect();
        let users: Vec<UserId> = grid
            .values()
            .next()
            .map(|u| u.keys().copied().collect())
            .unwrap_or_default();
        let mut out = Vec::with_capacity(sites.len());
        for (site, per_user) in grid {
            if per_user.keys().ne(users.iter()) {
                return Err(Error::Input(format!(
                    "truth for site {site} has a different user set"
                )));
            }
            let mut flat = Vec::new();
            for (user, per_epoch) in per_user {
                if per_epoch.keys().ne(expected.iter()) {
                    return Err(Error::Input(format!(
                        "truth for site {site}, user {user} must cover source epochs {}..={}",
                        1 - tau as Epoch,
                        epochs as Epoch - 1
                    )));
                }
                flat.extend(per_epoch.into_values());
            }
            out.push(flat);
        }
        Ok(TruthChannel {
            sites,
            users,
            epochs,
            tau,
            records: out,
        })
    }
}

/// Everything one scenario produced.
#[derive(Debug, Clone)]
pub struct ObservationLog {
    observations: Observations,
    truth: TruthChannel,
}

impl ObservationLog {
    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn truth(&self) -> &TruthChannel {
        &self.truth
    }

    pub fn into_parts(self) -> (Observations, TruthChannel) {
        (self.observations, self.truth)
    }
}

/// Runs every user on every site for epochs `1..=config.epochs`.
pub fn run_scenario(
    users: &[UserProfile],
    config: &SimConfig,
    taxonomy: &Taxonomy,
) -> Result<ObservationLog> {
    config.validate()?;
    let tau = config.tau as Epoch;
    let epochs = config.epochs as Epoch;
    let per_user: Vec<Vec<(Vec<ApiResult>, Vec<TruthRecord>)>> = users
        .par_iter()
        .map(|user| {
            config
                .sites
                .iter()
                .map(|&site| {
                    let truth: Vec<TruthRecord> = (1 - tau..epochs)
                        .map(|s| {
                            let draw = epoch_topic_draw(user, site, s, config, taxonomy);
                            TruthRecord {
                                draw,
                                delivered: deliver(draw, user, site, config, taxonomy),
                            }
                        })
                        .collect();
                    let calls = (1..=epochs)
                        .map(|e| {
                            let start = (e - 1) as usize;
                            let topics = truth[start..start + config.tau]
                                .iter()
                                .filter_map(|r| r.delivered)
                                .collect();
                            ApiResult {
                                site,
                                user: user.user_id,
                                epoch: e,
                                topics: shuffled(topics, user.user_id, site, e, config.seed),
                            }
                        })
                        .collect();
                    (calls, truth)
                })
                .collect()
        })
        .collect();

    let n_sites = config.sites.len();
    let mut results: Vec<Vec<ApiResult>> = (0..n_sites).map(|_| Vec::new()).collect();
    let mut truth: Vec<Vec<TruthRecord>> = (0..n_sites).map(|_| Vec::new()).collect();
    for per_site in per_user {
        for (i, (calls, t)) in per_site.into_iter().enumerate() {
            results[i].extend(calls);
            truth[i].extend(t);
        }
    }
    let user_ids: Vec<UserId> = users.iter().map(|u| u.user_id).collect();
    Ok(ObservationLog {
        observations: Observations {
            sites: config.sites.clone(),
            users: user_ids.clone(),
            epochs: config.epochs,
            results,
        },
        truth: TruthChannel {
            sites: config.sites.clone(),
            users: user_ids,
            epochs: config.epochs,
            tau: config.tau,
            records: truth,
        },
    })
}

/// One line of the truth NDJSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLine {
    pub site: SiteId,
    pub user: UserId,
    pub source_epoch: Epoch,
    pub topic: TopicId,
    pub noisy: bool,
    /// Topic handed to the site, `null` if withheld.
    pub delivered: Option<TopicId>,
}

pub fn write_observations_ndjson<W: Write>(obs: &Observations, mut w: W) -> std::io::Result<()> {
    for r in obs.iter() {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_truth_ndjson<W: Write>(truth: &TruthChannel, mut w: W) -> std::io::Result<()> {
    for (si, &site) in truth.sites.iter().enumerate() {
        for (ui, &user) in truth.users.iter().enumerate() {
            for (off, rec) in truth.user_records(si, ui).iter().enumerate() {
                let line = TruthLine {
                    site,
                    user,
                    source_epoch: truth.source_epoch_of(off),
                    topic: rec.draw.topic,
                    noisy: rec.draw.noisy,
                    delivered: rec.delivered,
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Reads NDJSON records, skipping blank lines and `#` comment lines.
pub fn read_ndjson<T, R>(reader: R, source_name: &str) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            serde_json::from_str(t)
                .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(id: UserId, profile: &[u16]) -> UserProfile {
        let top: Vec<TopicId> = profile.iter().map(|&t| TopicId(t)).collect();
        UserProfile {
            user_id: id,
            visited: vec![],
            observed_topics: top.clone(),
            top_profile: top,
        }
    }

    fn chi_square(counts: &[u64], expected: f64) -> f64 {
        counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    #[test]
    fn p_zero_is_uniform_over_profile() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            p: 0.0,
            ..Default::default()
        };
        let u = user(1, &[3, 50, 77, 120, 300]);
        let mut counts = [0u64; 5];
        let n = 50_000;
        for s in 0..n {
            let d = epoch_topic_draw(&u, 0, s, &cfg, &tax);
            assert!(!d.noisy);
            counts[u.top_profile.iter().position(|&t| t == d.topic).unwrap()] += 1;
        }
        // 4 dof, 0.999 quantile 18.47
        assert!(chi_square(&counts, n as f64 / 5.0) < 18.47);
    }

    #[test]
    fn p_one_is_uniform_over_taxonomy() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            p: 1.0,
            ..Default::default()
        };
        let u = user(2, &[3, 50, 77, 120, 300]);
        let mut counts = vec![0u64; tax.omega()];
        let n = tax.omega() as i64 * 200;
        for s in 0..n {
            let d = epoch_topic_draw(&u, 0, s, &cfg, &tax);
            assert!(d.noisy);
            counts[tax.position(d.topic).unwrap()] += 1;
        }
        // 348 dof: mean 348, sd ~26.4; 0.999 quantile is about 436
        assert!(chi_square(&counts, 200.0) < 436.0);
    }

    #[test]
    fn draws_are_independent_across_sites() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            p: 0.0,
            ..Default::default()
        };
        let mut table = [[0u64; 5]; 5];
        let mut n = 0u64;
        for id in 0..400 {
            let u = user(id, &[1, 2, 3, 4, 5]);
            for s in 0..50 {
                let a = epoch_topic_draw(&u, 0, s, &cfg, &tax).topic.0 as usize - 1;
                let b = epoch_topic_draw(&u, 1, s, &cfg, &tax).topic.0 as usize - 1;
                table[a][b] += 1;
                n += 1;
            }
        }
        let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..5).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut stat = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let e = rows[i] as f64 * cols[j] as f64 / n as f64;
                stat += (table[i][j] as f64 - e).powi(2) / e;
            }
        }
        // 16 dof, 0.999 quantile 39.25
        assert!(stat < 39.25, "chi2 {stat}");
    }

    #[test]
    fn every_call_returns_tau_topics_from_its_window() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            epochs: 6,
            ..Default::default()
        };
        let users: Vec<UserProfile> = (0..20).map(|i| user(i, &[10, 20, 30, 40, 50])).collect();
        let log = run_scenario(&users, &cfg, &tax).unwrap();
        let (obs, truth) = log.into_parts();
        for (si, &site) in obs.sites().iter().enumerate() {
            for (ui, u) in users.iter().enumerate() {
                for r in obs.history(si, ui) {
                    assert_eq!(r.topics.len(), cfg.tau);
                    assert_eq!(r, &call_api(u, site, r.epoch, &cfg, &tax));
                    let mut got = r.topics.clone();
                    got.sort();
                    let mut want: Vec<TopicId> = truth
                        .window(si, ui, r.epoch)
                        .iter()
                        .map(|t| t.draw.topic)
                        .collect();
                    want.sort();
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn empty_site_list_gives_empty_log() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            sites: vec![],
            ..Default::default()
        };
        let log = run_scenario(&[user(0, &[1, 2, 3, 4, 5])], &cfg, &tax).unwrap();
        assert_eq!(log.observations().iter().count(), 0);
        assert!(log.observations().sites().is_empty());
    }

    #[test]
    fn witness_requirement() {
        let tax = Taxonomy::v1();
        let u = user(3, &[2, 3, 4, 5, 6]);
        let full = SimConfig {
            witness_enabled: true,
            witness_coverage: 1.0,
            p: 0.0,
            ..Default::default()
        };
        let off = SimConfig {
            witness_enabled: false,
            ..full.clone()
        };
        for e in 1..20 {
            assert_eq!(
                call_api(&u, 0, e, &full, &tax),
                call_api(&u, 0, e, &off, &tax)
            );
        }
        let none = SimConfig {
            witness_coverage: 0.0,
            ..full
        };
        for e in 1..20 {
            assert!(call_api(&u, 0, e, &none, &tax).topics.is_empty());
        }
    }

    #[test]
    fn witness_substitutes_witnessed_parent() {
        let tax = Taxonomy::v1();
        let child = tax.topics().iter().find(|t| t.parent.is_some()).unwrap();
        let parent = child.parent.unwrap();
        let mut u = user(9, &[child.id.0]);
        u.observed_topics = vec![parent];
        let cfg = SimConfig {
            witness_enabled: true,
            p: 0.0,
            ..Default::default()
        };
        let r = call_api(&u, 0, 1, &cfg, &tax);
        assert_eq!(r.topics, vec![parent; 3]);
    }

    #[test]
    fn ndjson_round_trip() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            epochs: 4,
            ..Default::default()
        };
        let users: Vec<UserProfile> = (0..5).map(|i| user(i, &[7, 8, 9, 10, 11])).collect();
        let (obs, truth) = run_scenario(&users, &cfg, &tax).unwrap().into_parts();
        let mut buf = Vec::new();
        write_observations_ndjson(&obs, &mut buf).unwrap();
        let back = Observations::from_records(read_ndjson(&buf[..], "obs").unwrap()).unwrap();
        assert!(back.iter().eq(obs.iter()));
        let mut tbuf = Vec::new();
        write_truth_ndjson(&truth, &mut tbuf).unwrap();
        let tback =
            TruthChannel::from_records(read_ndjson(&tbuf[..], "truth").unwrap(), 4, 3).unwrap();
        for si in 0..2 {
            for ui in 0..5 {
                assert_eq!(tback.user_records(si, ui), truth.user_records(si, ui));
            }
        }
    }

    #[test]
    fn incomplete_records_are_rejected() {
        let r = ApiResult {
            site: 0,
            user: 0,
            epoch: 2,
            topics: vec![],
        };
        assert!(Observations::from_records(vec![r]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn draws_are_pinned(seed: u64, uid in 0u32..10_000, site in 0u32..8, e in 1i64..200) {
                let tax = Taxonomy::v1();
                let cfg = SimConfig { seed, ..Default::default() };
                let u = user(uid, &[11, 22, 33, 44, 55]);
                prop_assert_eq!(call_api(&u, site, e, &cfg, &tax), call_api(&u, site, e, &cfg, &tax));
                // consecutive calls share tau - 1 source draws
                let mut a = call_api(&u, site, e, &cfg, &tax).topics;
                let b = call_api(&u, site, e + 1, &cfg, &tax).topics;
                let dropped = epoch_topic_draw(&u, site, e - cfg.tau as i64, &cfg, &tax).topic;
                let added = epoch_topic_draw(&u, site, e, &cfg, &tax).topic;
                let pos = a.iter().position(|&t| t == dropped).unwrap();
                a.remove(pos);
                a.push(added);
                a.sort();
                let mut b = b;
                b.sort();
                prop_assert_eq!(a, b);
            }
        }
    }
}
