//! A ready-made setting for experiments: taxonomy, classification, ranked
//! list and browsing models bundled together.

use rayon::prelude::*;

use crate::classification::{
    prevalence, synthesize_skewed_classification, DomainClassification, PrevalenceTable, SkewSpec,
};
use crate::error::Result;
use crate::population::{
    derive_top_profile, generate_population, PopulationModels, RankedDomainList, TrafficModel,
    TrafficSampler, UniqueDomainCountModel, UserProfile,
};
use crate::taxonomy::Taxonomy;

/// Size of the synthetic top list used when no real one is supplied.
pub const DESK_DOMAINS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct World {
    pub taxonomy: Taxonomy,
    pub classification: DomainClassification,
    pub order: RankedDomainList,
    pub traffic: TrafficSampler,
    pub counts: UniqueDomainCountModel,
    pub prevalence: PrevalenceTable,
}

impl World {
    pub fn new(
        taxonomy: Taxonomy,
        classification: DomainClassification,
        order: RankedDomainList,
        traffic: &TrafficModel,
        counts: UniqueDomainCountModel,
    ) -> Result<Self> {
        counts.validate()?;
        let traffic = TrafficSampler::new(traffic, order.len())?;
        let prevalence = prevalence(&classification, &taxonomy);
        Ok(World {
            taxonomy,
            classification,
            order,
            traffic,
            counts,
            prevalence,
        })
    }

    /// Synthetic skewed classification of `n_domains` domains whose list
    /// order is the popularity order, with default browsing models.
    pub fn synthetic(n_domains: usize, spec: SkewSpec, seed: u64) -> Result<Self> {
        let taxonomy = Taxonomy::v1();
        let classification = synthesize_skewed_classification(&taxonomy, n_domains, spec, seed)?;
        let order = RankedDomainList::from_classification(&classification);
        World::new(
            taxonomy,
            classification,
            order,
            &TrafficModel::default(),
            UniqueDomainCountModel::default(),
        )
    }

    /// The default desk setting: 1M synthetic domains shaped like the CrUX
    /// classification.
    pub fn desk(seed: u64) -> Result<Self> {
        World::synthetic(DESK_DOMAINS, SkewSpec::CRUX, seed)
    }

    pub fn models(&self) -> PopulationModels<'_> {
        PopulationModels {
            order: &self.order,
            traffic: &self.traffic,
            counts: &self.counts,
            classification: &self.classification,
        }
    }

    /// `n` users with top profiles of size `t`.
    pub fn population(
        &self,
        n: usize,
        t: usize,
        seed: u64,
        profile_index: u32,
    ) -> Result<Vec<UserProfile>> {
        let pop = generate_population(n, self.models(), seed)?;
        Ok(pop
            .users
            .par_iter()
            .map(|u| derive_top_profile(u, &self.taxonomy, t, seed, profile_index))
            .collect())
    }
}
