//! The experiment commands. Each is a pure function of the config, the
//! seed and its input files.

use std::fs;
use std::path::{Path, PathBuf};

use biasaware_core::diagnostics::{c2st, ecdf::family_level, ecdf_uniformity, sbc_ranks, C2stResult, EcdfBand, EcdfVerdict, RankMatrix};
use biasaware_core::household::{HouseholdSimulator, Scheme};
use biasaware_core::mcmc::{chain_diagnostics, run_chains, Chain, ChainDiagnostics, HouseholdLikelihood, HouseholdPosterior, LikelihoodConfig, McmcConfig};
use biasaware_core::npe::{checkpoint, grad_check, initial_model, prepare_pairs, train, EncodedSet, PosteriorModel, TrainReport};
use biasaware_core::sim::{JointSimulator, Pair};
use biasaware_core::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apps::{App, Instance};
use crate::config::{Application, Embedding, ExperimentConfig, SbcMethod, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::io::{self, Manifest, ManifestEntry, MANIFEST};
use crate::svg;
use crate::with_app;

/// Stream labels under the experiment seed.
mod stream {
    pub const SIMULATE: u64 = 1;
    pub const TRAIN_PAIRS: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const INFER: u64 = 4;
    pub const SBC: u64 = 5;
    pub const C2ST: u64 = 6;
    pub const MCMC: u64 = 7;
    pub const GRADCHECK: u64 = 8;
}

pub const CHECKPOINT: &str = "checkpoint.bin";

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    /// Overrides the command's default count (`--n`).
    pub n: Option<usize>,
    /// Fixed condition, 0-based (`--epoch` or `--scheme`).
    pub condition: Option<usize>,
}

impl Context {
    fn root(&self) -> RngStream {
        RngStream::new(self.cfg.seed, 0)
    }

    fn write_resolved_config(&self) -> Result<()> {
        io::write_atomic(&self.out.join("config.resolved.toml"), self.cfg.resolved_toml().as_bytes())
    }

    fn conditions<A: App>(&self, a: &A) -> Result<Vec<usize>>
    where
        A::Obs: Send,
    {
        match self.condition {
            Some(c) if c >= a.n_conditions() => Err(CliError::Config(format!(
                "condition {} outside 1..={}",
                c + 1,
                a.n_conditions()
            ))),
            Some(c) => Ok(vec![c]),
            None => Ok((0..a.n_conditions()).collect()),
        }
    }
}

fn condition_for(i: usize, conditions: &[usize]) -> usize {
    conditions[i % conditions.len()]
}

/// Parallel [`biasaware_core::sim::simulate_pairs`] with the same stream
/// convention.
pub fn simulate_pairs_par<A: App>(a: &A, n: usize, conditions: &[usize], rng: &RngStream) -> (Vec<Pair>, usize)
where
    A::Obs: Send,
{
    let out: Vec<Option<Pair>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let condition = condition_for(i, conditions);
            let (theta, obs) = a.draw(condition, &mut r).ok()?;
            let data = a.encode(&obs).ok()?;
            Some(Pair { theta, data, condition })
        })
        .collect();
    let failures = out.iter().filter(|p| p.is_none()).count();
    (out.into_iter().flatten().collect(), failures)
}

pub fn load_model(path: &Path) -> Result<PosteriorModel> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(checkpoint::from_bytes(&bytes)?)
}

fn compatible<A: App>(a: &A, m: &PosteriorModel) -> Result<()>
where
    A::Obs: Send,
{
    m.check_compatible(a.row_dim(), a.condition_dim(), a.n_params())
        .map_err(|e| CliError::Data(format!("checkpoint (format version {}) does not fit this simulator: {e}", checkpoint::VERSION)))
}

fn data_file(i: usize) -> String {
    format!("data/dataset_{i:05}.csv")
}

pub fn simulate(ctx: &Context) -> Result<Manifest> {
    with_app!(&Instance::build(&ctx.cfg)?, a => simulate_with(ctx, a))
}

fn simulate_with<A: App>(ctx: &Context, a: &A) -> Result<Manifest>
where
    A::Obs: Send,
{
    let n = ctx.n.unwrap_or(0);
    let conditions = ctx.conditions(a)?;
    let rng = ctx.root().derive(stream::SIMULATE);
    let results: Vec<Option<(usize, Vec<f64>, Vec<u8>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = condition_for(i, &conditions);
            let (theta, obs) = a.draw(c, &mut rng.derive(i as u64)).ok()?;
            let bytes = a.dataset_bytes(&obs).ok()?;
            Some((c, theta, bytes))
        })
        .collect();
    let mut datasets = Vec::new();
    let mut params = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if let Some((c, theta, bytes)) = r {
            let file = data_file(i);
            io::write_atomic(&ctx.out.join(&file), bytes)?;
            datasets.push(ManifestEntry { index: i, file, condition: *c });
            let mut row = vec![i as f64, *c as f64];
            row.extend(theta);
            params.push(row);
        }
    }
    let names = a.param_names();
    let mut header = vec!["index".to_string(), "condition".to_string()];
    header.extend(names.iter().cloned());
    io::write_table(&ctx.out.join("params.csv"), &header, params)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        application: ctx.cfg.application,
        seed: ctx.cfg.seed,
        simulator_seed: ctx.cfg.simulator_seed,
        n_requested: n,
        failures: results.iter().filter(|r| r.is_none()).count(),
        param_names: names,
        condition_labels: (0..a.n_conditions()).map(|c| a.condition_label(c)).collect(),
        datasets,
    };
    ctx.write_resolved_config()?;
    io::write_json(&ctx.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_pairs: usize,
    pub simulation_failures: usize,
    pub n_weights: usize,
    pub report: TrainReport,
}

pub fn train_model(ctx: &Context) -> Result<(PosteriorModel, TrainSummary)> {
    with_app!(&Instance::build(&ctx.cfg)?, a => train_with(ctx, a))
}

fn train_with<A: App>(ctx: &Context, a: &A) -> Result<(PosteriorModel, TrainSummary)>
where
    A::Obs: Send,
{
    let n = ctx.n.unwrap_or(ctx.cfg.run.train_pairs);
    let conditions = ctx.conditions(a)?;
    let (pairs, failures) = simulate_pairs_par(a, n, &conditions, &ctx.root().derive(stream::TRAIN_PAIRS));
    let (model, report) = train(
        &pairs,
        a.arch(&ctx.cfg.network),
        a.param_names(),
        a.transform(),
        &ctx.cfg.train,
        &ctx.root().derive(stream::TRAIN),
    )?;
    let summary = TrainSummary {
        n_pairs: pairs.len(),
        simulation_failures: failures,
        n_weights: model.n_weights(),
        report,
    };
    Ok((model, summary))
}

pub fn cmd_train(ctx: &Context) -> Result<TrainSummary> {
    let (model, summary) = train_model(ctx)?;
    io::write_atomic(&ctx.out.join(CHECKPOINT), &checkpoint::to_bytes(&model))?;
    io::write_json(&ctx.out.join("checkpoint.json"), &model)?;
    io::write_json(&ctx.out.join("train_report.json"), &summary)?;
    let r = &summary.report;
    let rows = (0..r.train_loss.len()).map(|e| {
        vec![
            e as f64,
            r.train_loss[e],
            r.val_loss.get(e).copied().unwrap_or(f64::NAN),
            r.smoothed_val_loss.get(e).copied().unwrap_or(f64::NAN),
        ]
    });
    let header = ["epoch", "train_loss", "val_loss", "smoothed_val_loss"].map(String::from);
    io::write_table(&ctx.out.join("train_loss.csv"), &header, rows)?;
    ctx.write_resolved_config()?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferRow {
    pub index: usize,
    pub condition: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub mode: Vec<f64>,
}

pub fn cmd_infer(ctx: &Context, checkpoint_path: &Path, data: &Path) -> Result<Vec<InferRow>> {
    let manifest = Manifest::load(data)?;
    if manifest.application != ctx.cfg.application {
        return Err(CliError::Data(format!(
            "manifest holds {:?} datasets, config is for {:?}",
            manifest.application, ctx.cfg.application
        )));
    }
    let model = load_model(checkpoint_path)?;
    with_app!(&Instance::build(&ctx.cfg)?, a => infer_with(ctx, a, &model, &manifest, data))
}

fn infer_with<A: App>(ctx: &Context, a: &A, model: &PosteriorModel, manifest: &Manifest, data: &Path) -> Result<Vec<InferRow>>
where
    A::Obs: Send,
{
    compatible(a, model)?;
    let k = ctx.cfg.run.posterior_samples;
    let rng = ctx.root().derive(stream::INFER);
    let names = model.param_names.clone();
    let rows: Vec<Result<InferRow>> = manifest
        .datasets
        .par_iter()
        .map(|e| {
            let set = a.read_set(&data.join(&e.file))?;
            let post = model.posterior(&set)?;
            let s = post.sample(k, &mut rng.derive(e.index as u64));
            let mut header = names.clone();
            header.push("log_density".into());
            let table = s.draws.iter().zip(&s.log_density).map(|(d, &l)| {
                let mut r = d.clone();
                r.push(l);
                r
            });
            io::write_table(&ctx.out.join(format!("posterior/posterior_{:05}.csv", e.index)), &header, table)?;
            let mean = s.mean();
            let sd = (0..names.len())
                .map(|j| {
                    let c = s.column(j);
                    (c.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / (c.len().max(2) - 1) as f64).sqrt()
                })
                .collect();
            Ok(InferRow {
                index: e.index,
                condition: e.condition,
                mode: s.mode().map(<[f64]>::to_vec).unwrap_or_default(),
                mean,
                sd,
            })
        })
        .collect();
    let rows: Vec<InferRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut header = vec!["index".to_string(), "condition".to_string()];
    for suffix in ["mean", "sd", "mode"] {
        header.extend(names.iter().map(|n| format!("{n}_{suffix}")));
    }
    let table = rows.iter().map(|r| {
        let mut v = vec![r.index as f64, r.condition as f64];
        v.extend(&r.mean);
        v.extend(&r.sd);
        v.extend(&r.mode);
        v
    });
    io::write_table(&ctx.out.join("infer_summary.csv"), &header, table)?;
    ctx.write_resolved_config()?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SbcCondition {
    pub condition: usize,
    pub label: String,
    pub failures: usize,
    pub failure_flag: bool,
    pub ranks: RankMatrix,
    /// Rank counts per parameter over `k + 1` values.
    pub histograms: Vec<Vec<u32>>,
    pub chi_square_p: Vec<f64>,
    pub verdicts: Vec<EcdfVerdict>,
    pub all_inside: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SbcReport {
    pub method: SbcMethod,
    pub m: usize,
    pub k: usize,
    /// Joint level over every parameter and condition in the report.
    pub family_level: f64,
    /// Level of each parameter's simultaneous band.
    pub band_level: f64,
    pub band: EcdfBand,
    pub conditions: Vec<SbcCondition>,
}

pub fn cmd_sbc(ctx: &Context, checkpoint_path: Option<&Path>) -> Result<SbcReport> {
    let report = match (ctx.cfg.run.sbc_method, &Instance::build(&ctx.cfg)?) {
        (SbcMethod::Npe, inst) => {
            let path = checkpoint_path.ok_or_else(|| CliError::Config("sbc with the npe method needs --checkpoint".into()))?;
            let model = load_model(path)?;
            with_app!(inst, a => {
                compatible(a, &model)?;
                sbc_with(ctx, a, SbcMethod::Npe, |obs, k, rng| Ok(model.posterior(&a.encode(obs)?)?.sample(k, rng).draws))
            })?
        }
        (SbcMethod::Mcmc, Instance::Household(a)) => {
            let chains = ctx.cfg.run.mcmc_chains;
            sbc_with(ctx, a, SbcMethod::Mcmc, |obs, k, rng| {
                let chains = household_chains(a, obs, &ctx.cfg.mcmc, chains, rng)?;
                Ok(thin_pooled(&chains, k))
            })?
        }
        (SbcMethod::Mcmc, _) => {
            return Err(CliError::Config(
                "run.sbc_method: \"mcmc\" is only available for the household application".into(),
            ))
        }
    };
    write_sbc(ctx, &report)?;
    ctx.write_resolved_config()?;
    Ok(report)
}

/// Ranks under every selected condition; `infer(obs, k, rng)` returns `k`
/// posterior draws in natural space.
fn sbc_with<A, F>(ctx: &Context, a: &A, method: SbcMethod, infer: F) -> Result<SbcReport>
where
    A: App,
    A::Obs: Send,
    F: Fn(&A::Obs, usize, &mut RngStream) -> biasaware_core::Result<Vec<Vec<f64>>> + Sync,
{
    let conditions = ctx.conditions(a)?;
    let m = ctx.n.unwrap_or(ctx.cfg.run.sbc_simulations);
    let k = ctx.cfg.run.sbc_draws;
    let names = a.param_names();
    let band_level = family_level(ctx.cfg.run.sbc_level, names.len() * conditions.len());
    let root = ctx.root().derive(stream::SBC);
    let mut out = Vec::new();
    let mut band = None;
    for &c in &conditions {
        let rng = root.derive(c as u64);
        let results: Vec<biasaware_core::Result<(Vec<f64>, Vec<Vec<f64>>)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut r = rng.derive(i as u64);
                let (theta, obs) = a.draw(c, &mut r)?;
                let draws = infer(&obs, k, &mut r.derive(1))?;
                Ok((theta, draws))
            })
            .collect();
        let run = sbc_ranks(m, k, names.clone(), &rng, |i, _| results[i].clone())?;
        let (b, verdicts) = ecdf_uniformity(&run.ranks, band_level, &mut rng.derive(u64::MAX))?;
        let histograms = (0..names.len())
            .map(|j| {
                let mut h = vec![0u32; k + 1];
                for r in run.ranks.column(j) {
                    h[r as usize] += 1;
                }
                h
            })
            .collect();
        out.push(SbcCondition {
            condition: c,
            label: a.condition_label(c),
            failures: run.failures,
            failure_flag: run.failure_flag,
            chi_square_p: run.ranks.chi_square_pvalues(20.min(k + 1)),
            all_inside: verdicts.iter().all(|v| v.inside),
            histograms,
            verdicts,
            ranks: run.ranks,
        });
        band.get_or_insert(b);
    }
    Ok(SbcReport {
        method,
        m,
        k,
        family_level: ctx.cfg.run.sbc_level,
        band_level,
        band: band.ok_or_else(|| CliError::Config("no condition selected".into()))?,
        conditions: out,
    })
}

fn write_sbc(ctx: &Context, report: &SbcReport) -> Result<()> {
    let names = report.conditions.first().map(|c| c.ranks.param_names.clone()).unwrap_or_default();
    let mut header = vec!["condition".to_string(), "simulation".to_string()];
    header.extend(names.iter().cloned());
    let mut rows = Vec::new();
    for c in &report.conditions {
        for i in 0..c.ranks.n_sims() {
            let mut r = vec![c.condition as f64, i as f64];
            r.extend(c.ranks.ranks[i * c.ranks.n_params..(i + 1) * c.ranks.n_params].iter().map(|&x| x as f64));
            rows.push(r);
        }
    }
    io::write_table(&ctx.out.join("sbc_ranks.csv"), &header, rows)?;
    let header = ["condition", "param", "x", "ecdf", "lower", "upper"].map(String::from);
    let mut rows = Vec::new();
    for c in &report.conditions {
        for (j, v) in c.verdicts.iter().enumerate() {
            for (g, x) in report.band.grid.iter().enumerate() {
                rows.push(vec![c.condition as f64, j as f64, *x, v.ecdf[g], report.band.lower[g], report.band.upper[g]]);
            }
        }
    }
    io::write_table(&ctx.out.join("sbc_ecdf.csv"), &header, rows)?;
    io::write_atomic(&ctx.out.join("sbc_ecdf.svg"), svg::ecdf_panels(report).as_bytes())?;
    io::write_json(&ctx.out.join("sbc_report.json"), report)
}

/// MCMC chains for one household study under the random-inclusion
/// likelihood; parameters are recorded on the sampling scale.
pub fn household_chains(
    a: &HouseholdSimulator,
    ds: &biasaware_core::household::StudyDataset,
    mc: &McmcConfig,
    n_chains: usize,
    rng: &RngStream,
) -> biasaware_core::Result<Vec<Chain>> {
    let lik = HouseholdLikelihood::new(ds, &a.cfg.variant, LikelihoodConfig::for_study(&a.cfg.study))?;
    let post = HouseholdPosterior::new(lik, a.cfg.prior);
    let inits: Vec<Vec<f64>> = (0..n_chains).map(|c| post.initial_state(&mut rng.derive(1000 + c as u64))).collect();
    let mc = McmcConfig {
        record: Some(0..HouseholdPosterior::N_PARAMS),
        ..mc.clone()
    };
    run_chains(&post, &inits, &mc, rng)
}

/// `k` evenly spaced draws from the pooled chains, in natural space.
fn thin_pooled(chains: &[Chain], k: usize) -> Vec<Vec<f64>> {
    let pooled: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    (0..k)
        .map(|i| HouseholdPosterior::to_natural(pooled[i * pooled.len() / k]))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C2stReport {
    pub n_pairs: usize,
    pub failures: usize,
    pub embedding: Embedding,
    pub visit_censoring: Option<bool>,
    pub input_dim: usize,
    pub result: C2stResult,
}

pub fn cmd_c2st(ctx: &Context, checkpoint_path: &Path) -> Result<C2stReport> {
    let model = load_model(checkpoint_path)?;
    let inst = match Instance::build(&ctx.cfg)? {
        Instance::Idm(a) => Instance::Idm(match ctx.cfg.run.c2st_visit_censoring {
            Some(v) => a.with_visit_censoring(v),
            None => a,
        }),
        other => other,
    };
    let report = with_app!(&inst, a => c2st_with(ctx, a, &model))?;
    io::write_json(&ctx.out.join("c2st_report.json"), &report)?;
    ctx.write_resolved_config()?;
    Ok(report)
}

/// Classes: `(theta, e(Y))` from the joint simulator against
/// `(theta~ ~ q(theta | Y), e(Y))` on the same datasets, both in the model's
/// standardised unconstrained space.
fn c2st_with<A: App>(ctx: &Context, a: &A, model: &PosteriorModel) -> Result<C2stReport>
where
    A::Obs: Send,
{
    compatible(a, model)?;
    let conditions = ctx.conditions(a)?;
    let n = ctx.n.unwrap_or(ctx.cfg.run.c2st_pairs);
    let embedding = ctx.cfg.run.c2st_embedding;
    let rng = ctx.root().derive(stream::C2ST);
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let (theta, obs) = a.draw(condition_for(i, &conditions), &mut r).ok()?;
            let set: EncodedSet = a.encode(&obs).ok()?;
            let post = model.posterior(&set).ok()?;
            let e = match embedding {
                Embedding::PosteriorMean => model.theta_scale.apply(&post.mixture.mean()),
                Embedding::Summary => model.summarize(&set).ok()?,
            };
            let truth = model.standardize_theta(&theta).ok()?;
            let draw = model.theta_scale.apply(&post.sample_unconstrained(&mut r.derive(1)));
            let joint = [truth, e.clone()].concat();
            let posterior = [draw, e].concat();
            Some((joint, posterior))
        })
        .collect();
    let failures = rows.iter().filter(|r| r.is_none()).count();
    let (c0, c1): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows.into_iter().flatten().unzip();
    let result = c2st(&c0, &c1, &ctx.cfg.c2st, &rng.derive(u64::MAX))?;
    Ok(C2stReport {
        n_pairs: c0.len(),
        failures,
        embedding,
        visit_censoring: ctx.cfg.run.c2st_visit_censoring,
        input_dim: c0.first().map_or(0, Vec::len),
        result,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McmcSummary {
    pub index: usize,
    pub scheme: Scheme,
    pub n_households: usize,
    pub diagnostics: ChainDiagnostics,
    pub acceptance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub param_names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

pub fn cmd_mcmc(ctx: &Context, data: &Path) -> Result<Vec<McmcSummary>> {
    let manifest = Manifest::load(data)?;
    let Instance::Household(a) = Instance::build(&ctx.cfg)? else {
        return Err(CliError::Config("mcmc is only available for the household application".into()));
    };
    if manifest.application != Application::Household {
        return Err(CliError::Data("mcmc needs a household dataset manifest".into()));
    }
    let take = ctx.n.unwrap_or(manifest.datasets.len()).min(manifest.datasets.len());
    let rng = ctx.root().derive(stream::MCMC);
    let names = a.param_names();
    let summaries: Vec<Result<McmcSummary>> = manifest.datasets[..take]
        .par_iter()
        .map(|e| {
            let ds = io::read_household(&data.join(&e.file))?;
            if ds.scheme != Scheme::Random {
                eprintln!("warning: dataset {} was selected under the {} scheme; the likelihood assumes random inclusion", e.index, ds.scheme.name());
            }
            let chains = household_chains(&a, &ds, &ctx.cfg.mcmc, ctx.cfg.run.mcmc_chains, &rng.derive(e.index as u64))?;
            let natural: Vec<Vec<Vec<f64>>> = chains
                .iter()
                .map(|c| c.draws.iter().map(|d| HouseholdPosterior::to_natural(d)).collect())
                .collect();
            let mut header = vec!["chain".to_string(), "draw".to_string(), "log_density".to_string()];
            header.extend(names.iter().cloned());
            let lp: Vec<&[f64]> = chains.iter().map(|c| c.log_density.as_slice()).collect();
            let rows = natural.iter().enumerate().flat_map(|(c, draws)| {
                let lp = lp[c];
                draws.iter().enumerate().map(move |(i, d)| {
                    let mut r = vec![c as f64, i as f64, lp[i]];
                    r.extend(d);
                    r
                })
            });
            io::write_table(&ctx.out.join(format!("mcmc/dataset_{:05}_chains.csv", e.index)), &header, rows)?;
            let diagnostics = if ctx.cfg.run.mcmc_chains >= 2 && ctx.cfg.mcmc.steps >= 100 {
                chain_diagnostics(&chains.iter().map(|c| c.draws.clone()).collect::<Vec<_>>())?
            } else {
                ChainDiagnostics { rhat: vec![None; names.len()], ess_bulk: vec![None; names.len()] }
            };
            let pooled: Vec<&Vec<f64>> = natural.iter().flatten().collect();
            let np = pooled.len().max(1) as f64;
            let mean: Vec<f64> = (0..names.len()).map(|j| pooled.iter().map(|d| d[j]).sum::<f64>() / np).collect();
            let sd = (0..names.len())
                .map(|j| (pooled.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / (np - 1.0).max(1.0)).sqrt())
                .collect();
            let s = McmcSummary {
                index: e.index,
                scheme: ds.scheme,
                n_households: ds.households.len(),
                diagnostics,
                acceptance: chains.iter().map(|c| c.acceptance.clone()).collect(),
                warnings: chains.iter().flat_map(|c| c.warnings.iter().cloned()).collect(),
                param_names: names.clone(),
                mean,
                sd,
            };
            io::write_json(&ctx.out.join(format!("mcmc/dataset_{:05}_diagnostics.json", e.index)), &s)?;
            Ok(s)
        })
        .collect();
    let summaries = summaries.into_iter().collect::<Result<Vec<_>>>()?;
    ctx.write_resolved_config()?;
    Ok(summaries)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub n_checked: usize,
    pub n_weights: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn cmd_gradcheck(ctx: &Context, checkpoint_path: Option<&Path>) -> Result<GradcheckReport> {
    with_app!(&Instance::build(&ctx.cfg)?, a => gradcheck_with(ctx, a, checkpoint_path))
}

fn gradcheck_with<A: App>(ctx: &Context, a: &A, checkpoint_path: Option<&Path>) -> Result<GradcheckReport>
where
    A::Obs: Send,
{
    let run = &ctx.cfg.run;
    let rng = ctx.root().derive(stream::GRADCHECK);
    let (pairs, _) = simulate_pairs_par(a, ctx.n.unwrap_or(run.gradcheck_pairs), &ctx.conditions(a)?, &rng);
    if pairs.is_empty() {
        return Err(CliError::Data("no pairs could be simulated for the gradient check".into()));
    }
    let refs: Vec<&Pair> = pairs.iter().collect();
    let model = match checkpoint_path {
        Some(p) => {
            let m = load_model(p)?;
            compatible(a, &m)?;
            m
        }
        None => initial_model(&refs, a.arch(&ctx.cfg.network), a.param_names(), a.transform(), &mut rng.derive(u64::MAX))?,
    };
    let batch = prepare_pairs(&model, &refs)?;
    let gc = grad_check(&model, &batch, run.gradcheck_eps, run.gradcheck_probes, &mut rng.derive(u64::MAX - 1));
    let report = GradcheckReport {
        max_rel_error: gc.max_rel_error,
        worst_index: gc.worst_index,
        n_checked: gc.n_checked,
        n_weights: model.n_weights(),
        tolerance: run.gradcheck_tolerance,
        passed: gc.max_rel_error < run.gradcheck_tolerance,
    };
    io::write_json(&ctx.out.join("gradcheck_report.json"), &report)?;
    ctx.write_resolved_config()?;
    if !report.passed {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:.3e} at weight {} exceeds {:.1e}",
            report.max_rel_error, report.worst_index, report.tolerance
        )));
    }
    Ok(report)
}
