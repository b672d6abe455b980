use forge_core::analysis::{
    column_mean, cosine_distance, kmeans, mean_cosine_distance, pca_project, vector_arith, write_cluster_csv,
    write_projection_csv, ClusterRow,
};
use forge_core::embed::{
    instance_embedding, label_propagation_embedding, mean_readout, write_store_binary, write_store_csv, EmbeddingRecord,
};
use forge_core::geninst::{Family, ManifestEntry};
use forge_core::mip::MipInstance;
use forge_core::trainer::Checkpoint;

use super::{prepare_output, Ctx};
use crate::args::{ArithArgs, ClusterArgs, EmbedArgs, EmbedKind, StoreFormat};
use crate::error::CliError;
use crate::runlog;

fn vectors(ctx: &Ctx, ck: &Checkpoint, corpus: &[(ManifestEntry, MipInstance)], kind: EmbedKind, raw: bool) -> Vec<Vec<f64>> {
    ctx.par_map(corpus, |(_, m)| {
        let g = ck.graph(m);
        match kind {
            EmbedKind::Hist => instance_embedding(&g, ck, !raw).values,
            EmbedKind::Mean => mean_readout(&g, ck),
            EmbedKind::Lp => label_propagation_embedding(&g),
        }
    })
}

pub fn embed(a: &EmbedArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    if a.raw && a.kind != EmbedKind::Hist {
        return Err(CliError::usage("--raw only applies to --kind hist"));
    }
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let vecs = vectors(ctx, &ck, &corpus, a.kind, a.raw);
    let records: Vec<EmbeddingRecord> = corpus
        .iter()
        .zip(vecs)
        .map(|((e, m), vector)| EmbeddingRecord {
            name: m.name.clone(),
            family: e.family.to_string(),
            size: e.size.to_string(),
            vector,
        })
        .collect();
    prepare_output(&a.out)?;
    match a.format {
        StoreFormat::Csv => write_store_csv(&a.out, &records)?,
        StoreFormat::Bin => write_store_binary(&a.out, &records).map_err(|e| CliError::io(&a.out, e))?,
    }
    ctx.wrote(&a.out);
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    println!("wrote {} embeddings of width {} to {}", records.len(), records[0].vector.len(), a.out.display());
    Ok(())
}

pub fn cluster(a: &ClusterArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    if a.k_clusters < 1 || a.runs < 1 {
        return Err(CliError::usage("--k-clusters and --runs must be at least 1"));
    }
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let x = vectors(ctx, &ck, &corpus, a.kind, false);
    let truth: Vec<String> = corpus.iter().map(|(e, _)| format!("{}/{}", e.family, e.size)).collect();
    let result = kmeans(&x, a.k_clusters, a.runs, ctx.seed)?;
    let mean = result.nmi_mean(&truth)?;
    let best = result.nmi_best(&truth)?;
    let families: Vec<String> = corpus.iter().map(|(e, _)| e.family.to_string()).collect();
    let sizes: Vec<String> = corpus.iter().map(|(e, _)| e.size.to_string()).collect();
    let rows: Vec<ClusterRow> = corpus
        .iter()
        .enumerate()
        .map(|(i, (_, m))| ClusterRow {
            instance: &m.name,
            family: &families[i],
            size: &sizes[i],
            cluster: result.assignments[i],
        })
        .collect();
    prepare_output(&a.out)?;
    write_cluster_csv(&a.out, &rows).map_err(|e| CliError::io(&a.out, e))?;
    ctx.wrote(&a.out);
    if let Some(p) = &a.projection {
        let proj = pca_project(&x, 2)?;
        let names: Vec<&str> = corpus.iter().map(|(_, m)| m.name.as_str()).collect();
        prepare_output(p)?;
        write_projection_csv(p, &names, &proj.points).map_err(|e| CliError::io(p, e))?;
        ctx.wrote(p);
    }
    ctx.log.manifest_path = Some(runlog::beside(&a.out));
    println!("nmi {mean:.4} (mean over {} runs; best-inertia run {best:.4})", a.runs);
    Ok(())
}

pub fn arith(a: &ArithArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let roles: Vec<Family> = [&a.minuend, &a.subtrahend, &a.addend, &a.target]
        .iter()
        .map(|s| s.parse::<Family>())
        .collect::<Result<_, _>>()?;
    let ck = ctx.load_checkpoint(&a.ckpt)?;
    let corpus = ctx.read_corpus(&a.corpus)?;
    let x = vectors(ctx, &ck, &corpus, EmbedKind::Hist, false);
    let group = |f: Family| -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
        let (names, rows): (Vec<String>, Vec<Vec<f64>>) = corpus
            .iter()
            .zip(&x)
            .filter(|((e, _), _)| e.family == f)
            .map(|((_, m), v)| (m.name.clone(), v.clone()))
            .unzip();
        if rows.is_empty() {
            return Err(CliError::data(format!("corpus has no `{f}` instances")));
        }
        Ok((names, rows))
    };
    let (names, minuend) = group(roles[0])?;
    let (_, sub) = group(roles[1])?;
    let (_, add) = group(roles[2])?;
    let (_, target) = group(roles[3])?;
    let centroid = column_mean(&target)?;
    let shifted = vector_arith(&minuend, &sub, &add)?;
    let before = mean_cosine_distance(&minuend, &centroid);
    let after = mean_cosine_distance(&shifted, &centroid);
    if let Some(out) = &a.out {
        prepare_output(out)?;
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["instance", "before", "after"])?;
        for (i, name) in names.iter().enumerate() {
            w.write_record([
                name.clone(),
                cosine_distance(&minuend[i], &centroid).to_string(),
                cosine_distance(&shifted[i], &centroid).to_string(),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(out, e))?;
        ctx.wrote(out);
        ctx.log.manifest_path = Some(runlog::beside(out));
    }
    println!(
        "mean cosine distance of {} to the {} centroid: {before:.4} -> {after:.4} after - ({} - {})",
        roles[0], roles[3], roles[1], roles[2]
    );
    Ok(())
}
