use std::fs;

use forge_core::heads::{
    auc, finetune_guidance, guidance_example, guidance_scores, select_hints, FinetuneConfig, GuidanceExample,
};
use forge_core::minisolve::{read_solution, solve_mip, MipOptions};
use forge_core::seed::rng_for;

use super::{check_fraction, prepare_output, sibling, split_indices, Ctx};
use crate::args::{FinetuneGuideArgs, HintsArgs};
use crate::error::CliError;
use crate::runlog;

pub fn finetune(a: &FinetuneGuideArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    check_fraction("holdout", a.holdout, 0.0, 0.9)?;
    if a.epochs == 0 || a.hidden == 0 || a.pool == 0 {
        return Err(CliError::usage("--epochs, --hidden and --pool must be at least 1"));
    }
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let opts = MipOptions { node_limit: a.node_limit, pool_size: a.pool, ..MipOptions::default() };
    let pools = ctx.par_map(&corpus, |(_, m)| solve_mip(m, &opts));

    // Triplet mining draws from one stream in manifest order.
    let mut rng = rng_for(ctx.seed, "cli/triplets");
    let mut examples: Vec<GuidanceExample> = Vec::new();
    for ((_, m), r) in corpus.iter().zip(pools) {
        match r {
            Ok(r) if !r.pool.is_empty() => examples.push(guidance_example(m, &r.pool, &ck, &mut rng)),
            Ok(_) => log::warn!("{}: skipped (no feasible solution)", m.name),
            Err(e) => log::warn!("{}: skipped ({e})", m.name),
        }
    }
    if examples.len() < 2 {
        return Err(CliError::data("fewer than two instances have a solution pool"));
    }

    let (train_idx, test_idx) = split_indices(examples.len(), a.holdout, ctx.seed);
    let train: Vec<GuidanceExample> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let n_triplets: usize = train.iter().map(|e| e.triplets.triplets.len()).sum();
    let cfg = FinetuneConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        hidden: a.hidden,
        seed: ctx.seed,
        from_scratch: a.scratch,
    };
    let (tuned, history) = finetune_guidance(&train, &ck, &cfg)?;
    prepare_output(&a.out)?;
    ctx.save_checkpoint(&tuned, &a.out)?;
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    println!(
        "trained on {} instances with {n_triplets} triplets; loss {:.4} -> {:.4}",
        train.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    );

    if !test_idx.is_empty() {
        let report = sibling(&a.out, "auc.csv");
        let mut w = csv::Writer::from_path(&report)?;
        w.write_record(["instance", "auc"])?;
        let mut aucs = Vec::new();
        for &i in &test_idx {
            let e = &examples[i];
            let (_, scores, _) = guidance_scores(&e.instance, &tuned)?;
            let positive: Vec<bool> = (0..e.labels.groups.len()).map(|j| e.labels.positive(j)).collect();
            let v = auc(&scores, &positive);
            w.write_record([e.instance.name.clone(), v.map_or(String::new(), |v| v.to_string())])?;
            aucs.extend(v);
        }
        w.flush().map_err(|e| CliError::io(&report, e))?;
        ctx.wrote(&report);
        if aucs.is_empty() {
            println!("no held-out instance has both labels; AUC undefined");
        } else {
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            println!("held-out AUC {mean:.4} (mean over {} instances)", aucs.len());
        }
    }
    Ok(())
}

pub fn hints(a: &HintsArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    check_fraction("radius", a.radius, 0.0, f64::INFINITY)?;
    check_fraction("decile", a.decile, 0.0, 1.0)?;
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let m = ctx.read_mps(&a.mps)?;
    let anchor = match &a.anchor {
        Some(path) => {
            super::require_file(path)?;
            ctx.log.read(path);
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            read_solution(&m, &text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => {
            let opts = MipOptions { node_limit: a.node_limit, pool_size: 1, ..MipOptions::default() };
            let r = solve_mip(&m, &opts).map_err(|e| CliError::data(format!("{}: {e}", m.name)))?;
            if !r.solution.has_incumbent() {
                return Err(CliError::data(format!("{}: no feasible solution to anchor on", m.name)));
            }
            r.solution
        }
    };
    let hints = select_hints(&m, &anchor.values, &ck, a.radius, a.decile)?;
    prepare_output(&a.out)?;
    ctx.write_text(&a.out, &hints.to_text())?;
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    println!("{} include, {} exclude", hints.include.len(), hints.exclude.len());
    Ok(())
}
