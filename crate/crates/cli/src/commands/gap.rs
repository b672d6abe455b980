use std::path::Path;

use forge_core::geninst::MANIFEST_FILE;
use forge_core::heads::{
    finetune_gap, predict_gap, predict_gap_and_cut, pseudo_cut_bound, write_gap_report, FinetuneConfig, GapExample,
    GapReportRow, HeadError,
};
use forge_core::mip::{write_mps, MipInstance};
use forge_core::minisolve::{integrality_gap_label, GapLabel, MipOptions};

use super::{check_fraction, ensure_dir, prepare_output, sibling, split_indices, Ctx};
use crate::args::{CutArgs, FinetuneGapArgs};
use crate::error::CliError;
use crate::runlog;

/// Shrink used for the bound column of the held-out report.
const REPORT_SHRINK: f64 = 0.9;

pub fn finetune(a: &FinetuneGapArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    check_fraction("holdout", a.holdout, 0.0, 0.9)?;
    if a.epochs == 0 || a.hidden == 0 {
        return Err(CliError::usage("--epochs and --hidden must be at least 1"));
    }
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let opts = MipOptions { node_limit: a.node_limit, ..MipOptions::default() };
    let labels: Vec<_> = ctx.par_map(&corpus, |(_, m)| integrality_gap_label(m, &opts));

    prepare_output(&a.out)?;
    let labels_csv = sibling(&a.out, "labels.csv");
    let mut w = csv::Writer::from_path(&labels_csv)?;
    w.write_record(["instance", "z_lp", "z_incumbent", "label", "status"])?;
    let mut examples: Vec<(GapExample, GapLabel)> = Vec::new();
    for ((_, m), l) in corpus.iter().zip(labels) {
        match l {
            Ok(l) => {
                w.write_record([
                    m.name.clone(),
                    l.z_lp.to_string(),
                    l.z_incumbent.to_string(),
                    l.label.to_string(),
                    l.status.as_str().to_string(),
                ])?;
                examples.push((GapExample { instance: m.clone(), label: l.label }, l));
            }
            Err(e) => {
                log::warn!("{}: skipped ({e})", m.name);
                w.write_record([m.name.as_str(), "", "", "", &format!("skipped: {e}")])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(&labels_csv, e))?;
    ctx.wrote(&labels_csv);
    if examples.len() < 2 {
        return Err(CliError::data("fewer than two instances could be labeled"));
    }

    let (train_idx, test_idx) = split_indices(examples.len(), a.holdout, ctx.seed);
    let train: Vec<GapExample> = train_idx.iter().map(|&i| examples[i].0.clone()).collect();
    let cfg = FinetuneConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        hidden: a.hidden,
        seed: ctx.seed,
        from_scratch: a.scratch,
    };
    let (tuned, history) = finetune_gap(&train, &ck, &cfg)?;
    ctx.save_checkpoint(&tuned, &a.out)?;
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    println!(
        "trained on {} instances; training MAE {:.4} -> {:.4}",
        train.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    );

    if !test_idx.is_empty() {
        let mean = train.iter().map(|e| e.label).sum::<f64>() / train.len() as f64;
        let mut rows = Vec::new();
        let (mut mae, mut base) = (0.0, 0.0);
        for &i in &test_idx {
            let (e, l) = &examples[i];
            let g = predict_gap(&e.instance, &tuned)?;
            mae += (g - e.label).abs();
            base += (mean - e.label).abs();
            rows.push(GapReportRow {
                instance: e.instance.name.clone(),
                z_lp: l.z_lp,
                gap: g,
                bound: pseudo_cut_bound(l.z_lp, g, REPORT_SHRINK),
                label: Some(e.label),
            });
        }
        let n = test_idx.len() as f64;
        let report = sibling(&a.out, "gap.csv");
        write_gap_report(&report, &rows).map_err(|e| CliError::io(&report, e))?;
        ctx.wrote(&report);
        println!("held-out MAE {:.4} over {} instances (training-mean baseline {:.4})", mae / n, test_idx.len(), base / n);
    }
    Ok(())
}

fn is_corpus(path: &Path) -> bool {
    path.is_dir() || path.file_name().is_some_and(|n| n == MANIFEST_FILE)
}

pub fn cut(a: &CutArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    check_fraction("shrink", a.shrink, 0.0, 1.0)?;
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    if ck.gap_head.is_none() {
        return Err(HeadError::MissingHead("gap").into());
    }
    let (instances, out_paths, report): (Vec<MipInstance>, Vec<_>, _) = if is_corpus(&a.input) {
        let corpus = ctx.read_corpus(&a.input)?;
        ensure_dir(&a.out)?;
        let paths = corpus.iter().map(|(_, m)| a.out.join(format!("{}.mps", m.name))).collect();
        ctx.log.manifest_path = Some(runlog::inside(&a.out));
        (corpus.into_iter().map(|(_, m)| m).collect(), paths, a.out.join("cuts.csv"))
    } else {
        let m = ctx.read_mps(&a.input)?;
        prepare_output(&a.out)?;
        ctx.log.manifest_path = Some(runlog::beside(&a.out));
        (vec![m], vec![a.out.clone()], sibling(&a.out, "cuts.csv"))
    };
    let cuts = ctx.par_map(&instances, |m| predict_gap_and_cut(m, &ck, a.shrink));
    let mut rows = Vec::new();
    for ((m, c), path) in instances.iter().zip(cuts).zip(&out_paths) {
        let c = c.map_err(|e| CliError::from(e).context(&m.name))?;
        ctx.write_text(path, &write_mps(&c.instance))?;
        rows.push(GapReportRow {
            instance: m.name.clone(),
            z_lp: c.z_lp,
            gap: c.gap,
            bound: c.bound,
            label: None,
        });
    }
    write_gap_report(&report, &rows).map_err(|e| CliError::io(&report, e))?;
    ctx.wrote(&report);
    println!("wrote {} cut instance(s); report {}", rows.len(), report.display());
    Ok(())
}
