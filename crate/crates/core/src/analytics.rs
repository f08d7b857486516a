//! Closed-form properties of the noise mechanism.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::UserProfile;
use crate::simulator::{epoch_topic_draw, SimConfig};
use crate::taxonomy::{Taxonomy, TopicId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub tau: usize,
    pub p: f64,
    pub omega: usize,
    pub top_t: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            tau: 3,
            p: 0.05,
            omega: 349,
            top_t: 5,
        }
    }
}

impl NoiseModel {
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    pub fn from_sim(config: &SimConfig, taxonomy: &Taxonomy) -> Self {
        NoiseModel {
            tau: config.tau,
            p: config.p,
            omega: taxonomy.omega(),
            top_t: config.top_t,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// P(G >= g) for G ~ Binomial(tau, q): at least `g` genuine topics in a call.
pub fn prob_genuine_at_least(model: &NoiseModel, g: usize) -> Result<f64> {
    if g > model.tau {
        return Err(Error::Domain(format!(
            "g = {g} exceeds tau = {}",
            model.tau
        )));
    }
    let q = model.q();
    // summing the small lower tail keeps results near 1 exact
    let below: f64 = (0..g)
        .map(|i| binomial(model.tau, i) * q.powi(i as i32) * model.p.powi((model.tau - i) as i32))
        .sum();
    Ok((1.0 - below).clamp(0.0, 1.0))
}

/// `(p / omega)^x`, the chance that `x` sightings of one topic were all noise.
pub fn repeat_noisy_probability(model: &NoiseModel, x: u32) -> Result<f64> {
    if x == 0 {
        return Err(Error::Domain("x must be at least 1".into()));
    }
    Ok((model.p / model.omega as f64).powi(x as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionEpochs {
    /// `(T / q) * H_T`.
    pub exact: f64,
    /// Rounded up to whole epochs.
    pub ceiled: u64,
    /// `ceiled - tau + 1`: calls needed once each returns `tau` epochs.
    pub consecutive_calls: i64,
}

/// Expected epochs until every top topic has been drawn genuinely once.
pub fn expected_collection_epochs(model: &NoiseModel) -> Result<CollectionEpochs> {
    let q = model.q();
    if model.top_t == 0 {
        return Err(Error::Domain("T must be at least 1".into()));
    }
    if !(q > 0.0) {
        return Err(Error::Domain(
            "q = 0: genuine topics are never drawn".into(),
        ));
    }
    let harmonic: f64 = (1..=model.top_t).map(|i| 1.0 / i as f64).sum();
    let exact = model.top_t as f64 / q * harmonic;
    // guard against 12.000000000000002 style float noise
    let ceiled = (exact - 1e-9).ceil() as u64;
    Ok(CollectionEpochs {
        exact,
        ceiled,
        consecutive_calls: ceiled as i64 - model.tau as i64 + 1,
    })
}

/// Expected noisy sightings of each topic over `n` users in one call each.
pub fn noise_floor(model: &NoiseModel, n: u64) -> f64 {
    n as f64 * model.p * model.tau as f64 / model.omega as f64
}

/// Number of distinct T-subsets of the taxonomy.
pub fn profile_space(model: &NoiseModel) -> f64 {
    binomial(model.omega, model.top_t)
}

/// Mean epochs to collect a user's full profile, measured on simulator
/// draws for `n` users with distinct profiles.
pub fn simulated_collection_epochs(
    config: &SimConfig,
    taxonomy: &Taxonomy,
    n: u32,
    max_epochs: i64,
) -> f64 {
    let total: u64 = (0..n)
        .into_par_iter()
        .map(|uid| {
            let profile: Vec<TopicId> = (0..config.top_t)
                .map(|i| taxonomy.topic_at((uid as usize * 7 + i * 13) % taxonomy.omega()))
                .collect();
            let user = UserProfile {
                user_id: uid,
                visited: vec![],
                observed_topics: profile.clone(),
                top_profile: profile,
            };
            let mut missing = user.top_profile.clone();
            let mut e = 0;
            while !missing.is_empty() && e < max_epochs {
                e += 1;
                let d = epoch_topic_draw(&user, 0, e, config, taxonomy);
                if !d.noisy {
                    missing.retain(|&t| t != d.topic);
                }
            }
            e as u64
        })
        .sum();
    total as f64 / n as f64
}

/// Everything above at one model, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsSummary {
    pub model: NoiseModel,
    pub prob_genuine_at_least: Vec<f64>,
    pub repeat_noisy_probability: Vec<f64>,
    pub repeat_genuine_complement: Vec<f64>,
    pub collection_epochs: Option<CollectionEpochs>,
    pub noise_floor_n: u64,
    pub noise_floor: f64,
    pub profile_space: f64,
}

pub fn summary(model: &NoiseModel, n: u64) -> Result<AnalyticsSummary> {
    let prob = (0..=model.tau)
        .map(|g| prob_genuine_at_least(model, g))
        .collect::<Result<Vec<_>>>()?;
    let rep = (1..=4)
        .map(|x| repeat_noisy_probability(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalyticsSummary {
        model: *model,
        prob_genuine_at_least: prob,
        repeat_genuine_complement: rep.iter().map(|r| 1.0 - r).collect(),
        repeat_noisy_probability: rep,
        collection_epochs: expected_collection_epochs(model).ok(),
        noise_floor_n: n,
        noise_floor: noise_floor(model, n),
        profile_space: profile_space(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genuine_tail() {
        let m = NoiseModel::default();
        // 0.95^3 + 3 * 0.95^2 * 0.05
        let want = 0.95f64.powi(3) + 3.0 * 0.95f64.powi(2) * 0.05;
        assert!((prob_genuine_at_least(&m, 2).unwrap() - want).abs() < 1e-12);
        assert!((prob_genuine_at_least(&m, 2).unwrap() - 0.99275).abs() < 1e-9);
        assert_eq!(prob_genuine_at_least(&m, 0).unwrap(), 1.0);
        let clean = NoiseModel { p: 0.0, ..m };
        assert_eq!(prob_genuine_at_least(&clean, 3).unwrap(), 1.0);
        assert!(prob_genuine_at_least(&m, 4).is_err());
        let v: Vec<f64> = (0..=3)
            .map(|g| prob_genuine_at_least(&m, g).unwrap())
            .collect();
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn repeated_noise() {
        let m = NoiseModel::default();
        assert!((repeat_noisy_probability(&m, 1).unwrap() - 0.05 / 349.0).abs() < 1e-15);
        assert!((repeat_noisy_probability(&m, 1).unwrap() - 1.433e-4).abs() < 1e-7);
        assert!(1.0 - repeat_noisy_probability(&m, 2).unwrap() > 0.9999);
        assert_eq!(
            repeat_noisy_probability(&NoiseModel { p: 0.0, ..m }, 3).unwrap(),
            0.0
        );
    }

    #[test]
    fn collection_epochs() {
        let m = NoiseModel::default();
        let c = expected_collection_epochs(&m).unwrap();
        let want = 5.0 / 0.95 * (137.0 / 60.0);
        assert!((c.exact - want).abs() < 1e-12);
        assert!((c.exact - 12.018).abs() < 5e-4);
        assert_eq!(c.ceiled, 13);
        assert_eq!(c.consecutive_calls, 11);
        let one = NoiseModel {
            top_t: 1,
            p: 0.0,
            ..m
        };
        assert_eq!(expected_collection_epochs(&one).unwrap().exact, 1.0);
        assert!(expected_collection_epochs(&NoiseModel { p: 1.0, ..m }).is_err());
    }

    #[test]
    fn floor_and_space() {
        let m = NoiseModel::default();
        assert!((noise_floor(&m, 250_000) - 250_000.0 * 0.05 * 3.0 / 349.0).abs() < 1e-9);
        assert!((noise_floor(&m, 250_000) - 107.45).abs() < 0.01);
        assert_eq!(noise_floor(&m, 0), 0.0);
        assert_eq!(noise_floor(&NoiseModel { p: 0.0, ..m }, 10), 0.0);
        // C(349, 5) is about 42 billion
        assert!((profile_space(&m) / 1e9 - 42.0).abs() < 0.5);
    }

    #[test]
    fn monte_carlo_collection() {
        let tax = Taxonomy::v1();
        let cfg = SimConfig {
            seed: 17,
            ..Default::default()
        };
        let mean = simulated_collection_epochs(&cfg, &tax, 100_000, 10_000);
        let exact = expected_collection_epochs(&NoiseModel::from_sim(&cfg, &tax))
            .unwrap()
            .exact;
        assert!((mean - exact).abs() < 0.05, "{mean} vs {exact}");
    }
}
