//! Cross-site re-identification by two colluding sites.
//!
//! Each site denoises its own observations into per-user topic sets. A user
//! of site A is then mapped to every user of site B sharing the largest
//! number of topics with them; the size of that tie set is the user's k.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classification::PrevalenceTable;
use crate::denoiser::{DenoiserConfig, MultiShotDenoiser};
use crate::error::{Error, Result};
use crate::simulator::{Epoch, Observations};
use crate::taxonomy::TopicId;

/// Per-epoch recovered sets for every user of one site.
#[derive(Debug, Clone)]
pub struct RecoveredProfiles {
    /// `sets[e][u]`: sorted topics believed genuine for user `u` after the
    /// call at epoch `e + 1`.
    sets: Vec<Vec<Vec<TopicId>>>,
}

impl RecoveredProfiles {
    pub fn epochs(&self) -> usize {
        self.sets.len()
    }

    /// Sets after epoch `epoch` (1-based).
    pub fn at(&self, epoch: Epoch) -> &[Vec<TopicId>] {
        &self.sets[(epoch - 1) as usize]
    }
}

/// Denoises one site's histories on the fly. The set after epoch `e` holds
/// every topic labeled genuine in calls `1..=e`, so it never shrinks.
pub fn recover_profiles(
    obs: &Observations,
    site_index: usize,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
) -> RecoveredProfiles {
    let per_user: Vec<Vec<Vec<TopicId>>> = (0..obs.users().len())
        .into_par_iter()
        .map(|u| {
            let mut d = MultiShotDenoiser::new(prevalence, *config);
            obs.history(site_index, u)
                .iter()
                .map(|r| {
                    d.observe(r);
                    d.belief().iter().copied().collect()
                })
                .collect()
        })
        .collect();
    let epochs = obs.epochs() as usize;
    let mut sets: Vec<Vec<Vec<TopicId>>> = (0..epochs)
        .map(|_| Vec::with_capacity(per_user.len()))
        .collect();
    for user in per_user {
        for (e, set) in user.into_iter().enumerate() {
            sets[e].push(set);
        }
    }
    RecoveredProfiles { sets }
}

/// Outcome for one user of site A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserMatch {
    /// Size of the matched group on site B.
    pub k: u32,
    pub contains_truth: bool,
    pub unique_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub users: Vec<UserMatch>,
    pub unique_rate: f64,
    /// Users in a correct group with `1 < k < n`, on top of the unique ones.
    pub better_than_random_rate: f64,
    /// `(k, fraction of all users re-identified into a group of size <= k)`.
    pub k_cdf: Vec<(u32, f64)>,
}

impl MatchReport {
    pub fn n(&self) -> usize {
        self.users.len()
    }
}

fn inverted_index(profiles: &[Vec<TopicId>]) -> Vec<Vec<u32>> {
    let width = profiles
        .iter()
        .flat_map(|p| p.iter().map(|t| t.index() + 1))
        .max()
        .unwrap_or(0);
    let mut index = vec![Vec::new(); width];
    for (v, p) in profiles.iter().enumerate() {
        for t in p {
            index[t.index()].push(v as u32);
        }
    }
    index
}

/// Matches every user of A against B by maximal overlap. User `i` of A is the
/// same person as user `i` of B.
pub fn match_users(
    profiles_a: &[Vec<TopicId>],
    profiles_b: &[Vec<TopicId>],
) -> Result<MatchReport> {
    let n = profiles_b.len();
    if profiles_a.len() != n {
        return Err(Error::Input(format!(
            "site A has {} users, site B has {n}",
            profiles_a.len()
        )));
    }
    let index = inverted_index(profiles_b);
    let users: Vec<UserMatch> = profiles_a
        .par_iter()
        .enumerate()
        .map_init(
            || (vec![0u16; n], Vec::<u32>::new()),
            |(counts, touched), (u, set)| {
                for t in set {
                    for &v in index.get(t.index()).map(Vec::as_slice).unwrap_or(&[]) {
                        if counts[v as usize] == 0 {
                            touched.push(v);
                        }
                        counts[v as usize] += 1;
                    }
                }
                let best = touched
                    .iter()
                    .map(|&v| counts[v as usize])
                    .max()
                    .unwrap_or(0);
                let out = if best == 0 {
                    // nothing in common with anyone: everybody ties at zero
                    UserMatch {
                        k: n as u32,
                        contains_truth: true,
                        unique_correct: n == 1,
                    }
                } else {
                    let k = touched
                        .iter()
                        .filter(|&&v| counts[v as usize] == best)
                        .count() as u32;
                    let contains_truth = counts[u] == best;
                    UserMatch {
                        k,
                        contains_truth,
                        unique_correct: contains_truth && k == 1,
                    }
                };
                for &v in touched.iter() {
                    counts[v as usize] = 0;
                }
                touched.clear();
                out
            },
        )
        .collect();

    let nf = n.max(1) as f64;
    let unique = users.iter().filter(|m| m.unique_correct).count();
    let better = users
        .iter()
        .filter(|m| m.contains_truth && m.k > 1 && (m.k as usize) < n)
        .count();
    let mut ks: Vec<u32> = users
        .iter()
        .filter(|m| m.contains_truth && (m.k as usize) < n.max(2))
        .map(|m| m.k)
        .collect();
    ks.sort_unstable();
    let mut k_cdf: Vec<(u32, f64)> = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let frac = (i + 1) as f64 / nf;
        match k_cdf.last_mut() {
            Some(last) if last.0 == k => last.1 = frac,
            _ => k_cdf.push((k, frac)),
        }
    }
    Ok(MatchReport {
        users,
        unique_rate: unique as f64 / nf,
        better_than_random_rate: better as f64 / nf,
        k_cdf,
    })
}

/// The full argmax tie set for user `u`, by brute force.
pub fn matched_group(
    profiles_a: &[Vec<TopicId>],
    profiles_b: &[Vec<TopicId>],
    u: usize,
) -> Vec<u32> {
    let overlap = |b: &Vec<TopicId>| profiles_a[u].iter().filter(|t| b.contains(t)).count();
    let best = profiles_b.iter().map(overlap).max().unwrap_or(0);
    if profiles_a[u].is_empty() {
        return (0..profiles_b.len() as u32).collect();
    }
    profiles_b
        .iter()
        .enumerate()
        .filter(|(_, b)| overlap(b) == best)
        .map(|(v, _)| v as u32)
        .collect()
}

/// Rates for one epoch in both matching directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidRow {
    pub epoch: Epoch,
    pub unique_rate: f64,
    pub better_than_random_rate: f64,
    pub unique_rate_reverse: f64,
    pub better_than_random_rate_reverse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidReport {
    pub users: usize,
    pub rows: Vec<ReidRow>,
    /// A -> B k-CDFs at the requested epochs.
    pub k_cdfs: Vec<(Epoch, Vec<(u32, f64)>)>,
}

impl ReidReport {
    pub fn row(&self, epoch: Epoch) -> Option<&ReidRow> {
        self.rows.iter().find(|r| r.epoch == epoch)
    }
}

/// Recovers profiles on two sites and matches them at every epoch.
pub fn reidentify(
    obs: &Observations,
    site_a: usize,
    site_b: usize,
    prevalence: &PrevalenceTable,
    config: &DenoiserConfig,
    cdf_epochs: &[Epoch],
) -> Result<ReidReport> {
    if site_a >= obs.sites().len() || site_b >= obs.sites().len() || site_a == site_b {
        return Err(Error::Input(
            "need two distinct sites in the observation log".into(),
        ));
    }
    if obs.epochs() == 0 {
        return Err(Error::Input("no epochs to match".into()));
    }
    let a = recover_profiles(obs, site_a, prevalence, config);
    let b = recover_profiles(obs, site_b, prevalence, config);
    let mut rows = Vec::new();
    let mut k_cdfs = Vec::new();
    for e in 1..=obs.epochs() as Epoch {
        let ab = match_users(a.at(e), b.at(e))?;
        let ba = match_users(b.at(e), a.at(e))?;
        rows.push(ReidRow {
            epoch: e,
            unique_rate: ab.unique_rate,
            better_than_random_rate: ab.better_than_random_rate,
            unique_rate_reverse: ba.unique_rate,
            better_than_random_rate_reverse: ba.better_than_random_rate,
        });
        if cdf_epochs.contains(&e) {
            k_cdfs.push((e, ab.k_cdf));
        }
    }
    Ok(ReidReport {
        users: obs.users().len(),
        rows,
        k_cdfs,
    })
}

pub fn write_rates_csv<W: Write>(report: &ReidReport, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,unique_rate,better_than_random_rate,unique_rate_ba,better_than_random_rate_ba"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.epoch,
            r.unique_rate,
            r.better_than_random_rate,
            r.unique_rate_reverse,
            r.better_than_random_rate_reverse
        )?;
    }
    Ok(())
}

pub fn write_k_cdf_csv<W: Write>(report: &ReidReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,k,cdf")?;
    for (e, cdf) in &report.k_cdfs {
        for (k, f) in cdf {
            writeln!(w, "{e},{k},{f:.6}")?;
        }
    }
    Ok(())
}
