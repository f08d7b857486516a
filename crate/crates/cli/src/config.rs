//! Flat JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topics_core::denoiser::DenoiserConfig;
use topics_core::filter::FilterParams;
use topics_core::population::{
    TrafficModel, UniqueDomainCountModel, DEFAULT_LOGNORMAL_MU, DEFAULT_LOGNORMAL_SIGMA,
    DEFAULT_ZIPF_EXPONENT,
};
use topics_core::simulator::{Epoch, SimConfig, SiteId};
use topics_core::world::DESK_DOMAINS;

/// Every key is optional; unknown keys are rejected. Relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Taxonomy TSV; the bundled v1 taxonomy when absent.
    pub taxonomy: Option<PathBuf>,
    /// `domain<TAB>id,id,...` classification; synthesized when absent.
    pub classification: Option<PathBuf>,
    /// Ranked domain list, one per line, most popular first. Defaults to the
    /// classification order.
    pub top_list: Option<PathBuf>,
    /// `unique_domain_count,user_fraction` CSV; lognormal when absent.
    pub histogram: Option<PathBuf>,
    /// Size of the synthetic list used when no classification is given.
    pub synthetic_domains: usize,
    pub users: usize,
    pub profile_index: u32,
    pub zipf_exponent: f64,
    /// `[last rank, mass]` pairs; replaces the Zipf traffic model when set.
    pub traffic_buckets: Option<Vec<(u64, f64)>>,
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,

    pub top_t: usize,
    pub tau: usize,
    pub p: f64,
    pub epochs: u32,
    pub sites: Vec<SiteId>,
    pub witness_enabled: bool,
    pub witness_coverage: f64,

    pub threshold: u64,
    pub aggressive_gap_rule: bool,
    pub sweep_thresholds: Vec<u64>,

    /// Epochs at which the k-CDF is written.
    pub cdf_epochs: Vec<Epoch>,
    /// Population size for the noise-floor figure in `analytics`.
    pub noise_floor_users: u64,

    pub max_topics: usize,
    pub min_unknown_score: f64,
    pub min_topic_score: f64,
    pub min_normalized_score_within_top_n: f64,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let den = DenoiserConfig::default();
        let filter = FilterParams::default();
        RunConfig {
            taxonomy: None,
            classification: None,
            top_list: None,
            histogram: None,
            synthetic_domains: DESK_DOMAINS,
            users: 1_000,
            profile_index: 0,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
            traffic_buckets: None,
            lognormal_mu: DEFAULT_LOGNORMAL_MU,
            lognormal_sigma: DEFAULT_LOGNORMAL_SIGMA,
            top_t: sim.top_t,
            tau: sim.tau,
            p: sim.p,
            epochs: sim.epochs,
            sites: sim.sites,
            witness_enabled: sim.witness_enabled,
            witness_coverage: sim.witness_coverage,
            threshold: den.threshold,
            aggressive_gap_rule: den.aggressive_gap_rule,
            sweep_thresholds: topics_core::denoiser::SWEEP_THRESHOLDS.to_vec(),
            cdf_epochs: vec![1, 10, 20, 30],
            noise_floor_users: 250_000,
            max_topics: filter.max_topics,
            min_unknown_score: filter.min_unknown_score,
            min_topic_score: filter.min_topic_score,
            min_normalized_score_within_top_n: filter.min_normalized_score_within_top_n,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [
            &mut self.taxonomy,
            &mut self.classification,
            &mut self.top_list,
            &mut self.histogram,
        ]
        .into_iter()
        .flatten()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, p) in [
            ("taxonomy", &self.taxonomy),
            ("classification", &self.classification),
            ("top_list", &self.top_list),
            ("histogram", &self.histogram),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("config key `{key}`: {} does not exist", p.display());
                }
            }
        }
        if self.top_list.is_some() && self.classification.is_none() {
            bail!("`top_list` needs a `classification` to go with it");
        }
        if self.users == 0 {
            bail!("`users` must be at least 1");
        }
        self.sim().validate()?;
        self.filter().validate()?;
        Ok(())
    }

    /// SHA-256 of the effective configuration, seed included.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn world_seed(&self) -> u64 {
        self.seed
    }

    pub fn population_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            top_t: self.top_t,
            tau: self.tau,
            p: self.p,
            epochs: self.epochs,
            sites: self.sites.clone(),
            witness_enabled: self.witness_enabled,
            witness_coverage: self.witness_coverage,
            seed: self.seed.wrapping_add(2),
        }
    }

    pub fn denoiser(&self) -> DenoiserConfig {
        DenoiserConfig {
            threshold: self.threshold,
            tau: self.tau,
            top_t: self.top_t,
            aggressive_gap_rule: self.aggressive_gap_rule,
        }
    }

    pub fn filter(&self) -> FilterParams {
        FilterParams {
            max_topics: self.max_topics,
            min_unknown_score: self.min_unknown_score,
            min_topic_score: self.min_topic_score,
            min_normalized_score_within_top_n: self.min_normalized_score_within_top_n,
        }
    }

    pub fn traffic(&self) -> TrafficModel {
        match &self.traffic_buckets {
            Some(buckets) => TrafficModel::Binned {
                buckets: buckets.clone(),
            },
            None => TrafficModel::Zipf {
                exponent: self.zipf_exponent,
            },
        }
    }

    pub fn counts(&self) -> Result<UniqueDomainCountModel> {
        Ok(match &self.histogram {
            Some(p) => UniqueDomainCountModel::load_histogram(p)?,
            None => UniqueDomainCountModel::Lognormal {
                mu: self.lognormal_mu,
                sigma: self.lognormal_sigma,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"users": 5, "epocs": 3}"#).unwrap_err();
        assert!(err.to_string().contains("epocs"));
        let ok: RunConfig = serde_json::from_str(r#"{"users": 5}"#).unwrap();
        assert_eq!(ok.users, 5);
        assert_eq!(ok.tau, 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
