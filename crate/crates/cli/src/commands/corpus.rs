use forge_core::bigraph::Aggregator;
use forge_core::geninst::{gen_corpus, CorpusSpec, Family, SizeTag, MANIFEST_FILE};
use forge_core::trainer::{codebook_report, pretrain_instances, write_codebook_csv, write_loss_csv, TrainConfig};

use super::{prepare_output, sibling, Ctx};
use crate::args::{AggregatorArg, GenArgs, PretrainArgs, Profile, ReportArgs};
use crate::error::CliError;
use crate::runlog;

pub fn gen(a: &GenArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let families = a.families.iter().map(|s| s.parse::<Family>()).collect::<Result<Vec<_>, _>>()?;
    let sizes = a.sizes.iter().map(|s| s.parse::<SizeTag>()).collect::<Result<Vec<_>, _>>()?;
    if a.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let specs: Vec<CorpusSpec> = families
        .iter()
        .flat_map(|&family| sizes.iter().map(move |&size| CorpusSpec { family, size, count: a.count }))
        .collect();
    let manifest = gen_corpus(&specs, ctx.seed, &a.out)?;
    for e in &manifest.entries {
        ctx.wrote(&manifest.resolve(e));
    }
    ctx.wrote(&a.out.join(MANIFEST_FILE));
    ctx.log.manifest_path = Some(runlog::inside(&a.out));
    println!("wrote {} instances to {}", manifest.entries.len(), a.out.display());
    Ok(())
}

fn train_config(a: &PretrainArgs, seed: u64) -> TrainConfig {
    let mut cfg = match a.profile {
        Profile::Desk => TrainConfig::desk(),
        Profile::Full => TrainConfig::full(),
    };
    if let Some(d) = a.d {
        cfg.model.d = d;
        cfg.model.edge_dim = d;
    }
    if let Some(v) = a.edge_dim {
        cfg.model.edge_dim = v;
    }
    if let Some(v) = a.k {
        cfg.model.k = v;
    }
    if let Some(v) = a.alpha {
        cfg.model.alpha = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.aggregator {
        cfg.model.aggregator = match v {
            AggregatorArg::Mean => Aggregator::Mean,
            AggregatorArg::Normalized => Aggregator::Normalized,
        };
    }
    if let Some(v) = a.neg_ratio {
        cfg.negative_ratio = v;
    }
    if let Some(v) = &a.fractions {
        cfg.fractions = v.clone();
    }
    cfg.reseed_dead_codes = !a.no_reseed;
    cfg.seed = seed;
    cfg
}

pub fn pretrain(a: &PretrainArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = train_config(a, ctx.seed);
    cfg.validate()?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let instances: Vec<_> = corpus.into_iter().map(|(_, m)| m).collect();
    prepare_output(&a.out)?;
    let ck = pretrain_instances(&instances, &cfg)?;
    ctx.save_checkpoint(&ck, &a.out)?;
    let loss_csv = sibling(&a.out, "loss.csv");
    write_loss_csv(&loss_csv, &ck.history).map_err(|e| CliError::io(&loss_csv, e))?;
    ctx.wrote(&loss_csv);
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    let first = ck.history.first().map_or(f64::NAN, |h| h.loss.total);
    let last = ck.history.last().map_or(f64::NAN, |h| h.loss.total);
    let dead = ck.history.last().map_or(f64::NAN, |h| h.dead_code_fraction);
    println!(
        "checkpoint {} ({}): loss {first:.4} -> {last:.4}, dead codes {:.1}%",
        a.out.display(),
        ck.id(),
        100.0 * dead
    );
    Ok(())
}

pub fn report(a: &ReportArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    if a.out.is_some() && a.corpus.is_none() {
        return Err(CliError::usage("--out needs --corpus"));
    }
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let m = &ck.config.model;
    println!("checkpoint  {}", ck.id());
    println!("model       d={} k={} edge_dim={} alpha={} aggregator={:?}", m.d, m.k, m.edge_dim, m.alpha, m.aggregator);
    println!(
        "training    epochs={} lr={} seed={} fractions={:?} neg_ratio={}",
        ck.config.epochs, ck.config.learning_rate, ck.config.seed, ck.config.fractions, ck.config.negative_ratio
    );
    for h in &ck.history {
        println!(
            "epoch {:>3}  total {:.5}  edge {:.5}  feat {:.5}  codebook {:.5}  commit {:.5}  dead {:.3}",
            h.epoch, h.loss.total, h.loss.edge_recon, h.loss.feat_recon, h.loss.codebook, h.loss.commitment, h.dead_code_fraction
        );
    }
    println!("gap head    {}", if ck.gap_head.is_some() { "yes" } else { "no" });
    println!("guide head  {}", if ck.guidance_head.is_some() { "yes" } else { "no" });
    if let Some(corpus) = &a.corpus {
        let instances: Vec<_> = ctx.read_corpus(corpus)?.into_iter().map(|(_, m)| m).collect();
        let rep = codebook_report(&ck, &instances);
        let used = rep.counts.iter().filter(|&&c| c > 0).count();
        println!(
            "codebook    {used}/{} codes used over {} nodes (dead {:.1}%)",
            rep.counts.len(),
            rep.total_nodes,
            100.0 * rep.dead_fraction
        );
        if let Some(out) = &a.out {
            prepare_output(out)?;
            write_codebook_csv(out, &rep).map_err(|e| CliError::io(out, e))?;
            ctx.wrote(out);
            ctx.log.manifest_path = Some(runlog::beside(out));
        }
    }
    Ok(())
}
