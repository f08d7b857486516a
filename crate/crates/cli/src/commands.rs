use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use topics_core::analytics::{summary, NoiseModel};
use topics_core::classification::{
    synthesize_skewed_classification, DomainClassification, SkewSpec,
};
use topics_core::denoiser::{evaluate_multi_shot, threshold_sweep, write_series_csv};
use topics_core::filter::{chrome_filter, load_score_vectors};
use topics_core::population::{
    derive_top_profile, population_stats, PopulationRecord, RankedDomainList, UserProfile,
};
use topics_core::reidentifier::{reidentify, write_k_cdf_csv, write_rates_csv};
use topics_core::simulator::{
    read_ndjson, run_scenario, write_observations_ndjson, write_truth_ndjson, ApiResult,
    Observations, TruthChannel, TruthLine,
};
use topics_core::world::World;
use topics_core::{Taxonomy, TopicId};

use crate::artifact::{header_hash, OutDir, OBSERVATIONS, POPULATION, TRUTH};
use crate::config::RunConfig;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutDir,
}

impl Ctx {
    fn taxonomy(&self) -> Result<Taxonomy> {
        Ok(match &self.cfg.taxonomy {
            Some(p) => Taxonomy::load(p)?,
            None => Taxonomy::v1(),
        })
    }

    fn world(&self) -> Result<World> {
        let cfg = &self.cfg;
        let taxonomy = self.taxonomy()?;
        let (classification, order) = match &cfg.classification {
            Some(p) => {
                let classification = DomainClassification::load(p, &taxonomy)?;
                let order = match &cfg.top_list {
                    Some(list) => RankedDomainList::new(read_list(list)?)?,
                    None => RankedDomainList::from_classification(&classification),
                };
                (classification, order)
            }
            None => {
                let n = cfg.synthetic_domains;
                let classification = synthesize_skewed_classification(
                    &taxonomy,
                    n,
                    SkewSpec::CRUX.scaled_to(n),
                    cfg.world_seed(),
                )?;
                let order = RankedDomainList::from_classification(&classification);
                (classification, order)
            }
        };
        Ok(World::new(
            taxonomy,
            classification,
            order,
            &cfg.traffic(),
            cfg.counts()?,
        )?)
    }

    /// Opens an upstream artifact and warns when it came from another config.
    fn upstream(&self, name: &str, producer: &str) -> Result<BufReader<std::fs::File>> {
        let reader = self.out.open_upstream(name, producer)?;
        let path = self.out.path(name);
        if let Some(h) = header_hash(BufReader::new(std::fs::File::open(&path)?)) {
            if h != self.out.header().config_sha256 {
                eprintln!("warning: {} was written under config {h}", path.display());
            }
        }
        Ok(reader)
    }

    fn observations(&self) -> Result<Observations> {
        let source = self.out.path(OBSERVATIONS).display().to_string();
        let records: Vec<ApiResult> =
            read_ndjson(self.upstream(OBSERVATIONS, "simulate")?, &source)?;
        Ok(Observations::from_records(records)?)
    }
}

fn read_list(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn ids(topics: impl IntoIterator<Item = TopicId>) -> String {
    topics
        .into_iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Serialize)]
struct CandidateProfiles {
    user_id: u32,
    profiles: Vec<Vec<TopicId>>,
}

pub fn generate(ctx: &Ctx, candidates: u32) -> Result<()> {
    if !(1..=10).contains(&candidates) {
        bail!("--candidates must be in 1..=10");
    }
    let cfg = &ctx.cfg;
    let world = ctx.world()?;
    let users = world.population(
        cfg.users,
        cfg.top_t,
        cfg.population_seed(),
        cfg.profile_index,
    )?;
    let records: Vec<PopulationRecord> = users
        .par_iter()
        .map(|u| u.to_record(&world.order))
        .collect();
    let path = ctx.out.write_text(POPULATION, |w| {
        for r in &records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    if candidates > 1 {
        let rows: Vec<CandidateProfiles> = users
            .par_iter()
            .map(|u| CandidateProfiles {
                user_id: u.user_id,
                profiles: (0..candidates)
                    .map(|i| {
                        derive_top_profile(u, &world.taxonomy, cfg.top_t, cfg.population_seed(), i)
                            .top_profile
                    })
                    .collect(),
            })
            .collect();
        ctx.out.write_text("candidate_profiles.ndjson", |w| {
            for r in &rows {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })?;
    }
    let s = population_stats(&users);
    println!("users            {}", s.users);
    println!("unique domains   {}", s.unique_domains);
    println!("unique topics    {}", s.unique_topics);
    println!("unique profiles  {}", s.unique_profiles);
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let taxonomy = ctx.taxonomy()?;
    let source = ctx.out.path(POPULATION).display().to_string();
    let records: Vec<PopulationRecord> =
        read_ndjson(ctx.upstream(POPULATION, "generate")?, &source)?;
    // the mechanism only looks at top profiles
    let users = records
        .into_iter()
        .map(|r| UserProfile::from_record(r, None))
        .collect::<topics_core::Result<Vec<_>>>()?;
    let log = run_scenario(&users, &ctx.cfg.sim(), &taxonomy)?;
    let (obs, truth) = log.into_parts();
    ctx.out
        .write_text(OBSERVATIONS, |w| write_observations_ndjson(&obs, w))?;
    ctx.out
        .write_text(TRUTH, |w| write_truth_ndjson(&truth, w))?;
    println!(
        "{} users x {} sites x {} epochs",
        obs.users().len(),
        obs.sites().len(),
        obs.epochs()
    );
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn denoise(ctx: &Ctx) -> Result<()> {
    let obs = ctx.observations()?;
    let source = ctx.out.path(TRUTH).display().to_string();
    let lines: Vec<TruthLine> = read_ndjson(ctx.upstream(TRUTH, "simulate")?, &source)?;
    let truth = TruthChannel::from_records(lines, obs.epochs(), ctx.cfg.tau)?;
    let world = ctx.world()?;
    let den = ctx.cfg.denoiser();

    let rows = evaluate_multi_shot(&obs, &truth, &world.prevalence, &den)?;
    ctx.out
        .write_text("denoise_series.csv", |w| write_series_csv(&rows, w))?;

    let sweep = threshold_sweep(
        &obs,
        &truth,
        &world.prevalence,
        &den,
        &ctx.cfg.sweep_thresholds,
    )?;
    ctx.out.write_text("threshold_sweep.csv", |w| {
        writeln!(w, "threshold,tp,fp,tn,fn,accuracy,precision,tpr,fpr")?;
        for (t, c) in &sweep {
            let m = c.metrics();
            writeln!(
                w,
                "{t},{},{},{},{},{},{},{},{}",
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                opt(m.accuracy),
                opt(m.precision),
                opt(m.tpr),
                opt(m.fpr)
            )?;
        }
        Ok(())
    })?;

    if let Some(last) = rows.last() {
        println!(
            "epoch {}: tpr {} fpr {} median recovered {}",
            last.epoch,
            opt(last.metrics.tpr),
            opt(last.metrics.fpr),
            last.median_recovered
        );
    }
    Ok(())
}

pub fn reidentify_cmd(ctx: &Ctx) -> Result<()> {
    let obs = ctx.observations()?;
    if obs.sites().len() < 2 {
        bail!(
            "re-identification needs two sites; the observations hold {}",
            obs.sites().len()
        );
    }
    let world = ctx.world()?;
    let report = reidentify(
        &obs,
        0,
        1,
        &world.prevalence,
        &ctx.cfg.denoiser(),
        &ctx.cfg.cdf_epochs,
    )?;
    ctx.out
        .write_text("reid_rates.csv", |w| write_rates_csv(&report, w))?;
    ctx.out
        .write_text("k_cdf.csv", |w| write_k_cdf_csv(&report, w))?;
    if let Some(last) = report.rows.last() {
        println!(
            "epoch {}: unique_rate {:.4} better_than_random_rate {:.4} ({} users)",
            last.epoch, last.unique_rate, last.better_than_random_rate, report.users
        );
    }
    Ok(())
}

pub fn analytics(ctx: &Ctx) -> Result<()> {
    let taxonomy = ctx.taxonomy()?;
    let model = NoiseModel {
        tau: ctx.cfg.tau,
        p: ctx.cfg.p,
        omega: taxonomy.omega(),
        top_t: ctx.cfg.top_t,
    };
    let s = summary(&model, ctx.cfg.noise_floor_users)?;
    ctx.out.write_json("analytics.json", "summary", &s)?;
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(())
}

pub fn filter(ctx: &Ctx, scores: &Path) -> Result<()> {
    let taxonomy = ctx.taxonomy()?;
    let params = ctx.cfg.filter();
    let vectors = load_score_vectors(scores, &taxonomy)?;
    let sets: Vec<(String, String)> = vectors
        .par_iter()
        .map(|(d, v)| (d.clone(), ids(chrome_filter(v, &params, &taxonomy))))
        .collect();
    ctx.out.write_text("filtered_topics.tsv", |w| {
        for (d, s) in &sets {
            writeln!(w, "{d}\t{s}")?;
        }
        Ok(())
    })?;
    for (d, s) in &sets {
        println!("{d}\t{s}");
    }
    Ok(())
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let world = ctx.world()?;
    let hist = world.classification.topics_per_domain_histogram();
    let total = world.classification.len().max(1) as f64;
    ctx.out.write_text("topics_per_domain.csv", |w| {
        writeln!(w, "topics,domains,cdf")?;
        let mut acc = 0usize;
        for (k, &n) in hist.iter().enumerate() {
            acc += n;
            writeln!(w, "{k},{n},{:.6}", acc as f64 / total)?;
        }
        Ok(())
    })?;
    let per_topic = world.prevalence.per_topic(&world.taxonomy);
    ctx.out.write_text("prevalence.csv", |w| {
        writeln!(w, "topic,name,domains")?;
        for (t, n) in &per_topic {
            let name = world.taxonomy.name(*t).unwrap_or("");
            writeln!(w, "{t},\"{}\",{n}", name.replace('"', "\"\""))?;
        }
        Ok(())
    })?;
    let (top, top_n) = world.prevalence.max();
    println!("domains          {}", world.classification.len());
    println!(
        "zero topics      {}",
        world.prevalence.zero_topics(&world.taxonomy)
    );
    println!("top topic        {top} on {top_n} domains");
    println!(
        "median per topic {}",
        world.prevalence.median(&world.taxonomy)
    );
    Ok(())
}
