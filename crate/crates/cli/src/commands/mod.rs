mod corpus;
mod embedding;
mod gap;
mod guide;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use forge_core::geninst::{CorpusManifest, ManifestEntry, MANIFEST_FILE};
use forge_core::mip::{parse_mps, MipInstance};
use forge_core::trainer::Checkpoint;

use crate::args::Command;
use crate::error::{checkpoint_error, CliError};
use crate::runlog::RunLog;

pub struct Ctx {
    pub seed: u64,
    pub log: RunLog,
    pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(seed: u64, jobs: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::usage(format!("--jobs {jobs}: {e}")))?;
        Ok(Self { seed, log: RunLog::default(), pool })
    }

    /// Order-preserving parallel map; results match a sequential run.
    pub fn par_map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<Checkpoint, CliError> {
        require_file(path)?;
        self.log.read(path);
        Checkpoint::load(path).map_err(|e| checkpoint_error(path, e))
    }

    pub fn save_checkpoint(&mut self, ck: &Checkpoint, path: &Path) -> Result<(), CliError> {
        ck.save(path).map_err(|e| checkpoint_error(path, e))?;
        self.log.wrote(path);
        Ok(())
    }

    pub fn read_mps(&mut self, path: &Path) -> Result<MipInstance, CliError> {
        require_file(path)?;
        self.log.read(path);
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        parse_mps(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    /// Manifest plus parsed instances, in manifest order.
    pub fn read_corpus(&mut self, path: &Path) -> Result<Vec<(ManifestEntry, MipInstance)>, CliError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        require_file(&file)?;
        let manifest = CorpusManifest::read(&file)?;
        if manifest.entries.is_empty() {
            return Err(CliError::data(format!("{}: corpus is empty", file.display())));
        }
        self.log.read(&file);
        let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| manifest.resolve(e)).collect();
        for p in &paths {
            require_file(p)?;
            self.log.read(p);
        }
        let parsed = self.par_map(&paths, |p| -> Result<MipInstance, CliError> {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_mps(&text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
        });
        manifest
            .entries
            .into_iter()
            .zip(parsed)
            .map(|(e, inst)| Ok((e, inst?)))
            .collect()
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        self.log.wrote(path);
        Ok(())
    }

    pub fn wrote(&mut self, path: &Path) {
        self.log.wrote(path);
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{}: no such file", path.display())))
    }
}

/// Creates the parent directory of an output file.
pub fn prepare_output(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// `<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn check_fraction(name: &str, v: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{name} must lie in [{lo}, {hi}], got {v}")))
    }
}

/// Deterministic shuffle of `0..n` split into `(train, held_out)`.
pub fn split_indices(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut forge_core::seed::rng_for(seed, "cli/split"));
    let n_test = ((n as f64) * holdout).round() as usize;
    let n_test = n_test.min(n.saturating_sub(1));
    let test = idx.split_off(n - n_test);
    (idx, test)
}

pub fn dispatch(command: &Command, ctx: &mut Ctx) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => corpus::gen(a, ctx),
        Command::Pretrain(a) => corpus::pretrain(a, ctx),
        Command::Report(a) => corpus::report(a, ctx),
        Command::Embed(a) => embedding::embed(a, ctx),
        Command::Cluster(a) => embedding::cluster(a, ctx),
        Command::Arith(a) => embedding::arith(a, ctx),
        Command::FinetuneGap(a) => gap::finetune(a, ctx),
        Command::Cut(a) => gap::cut(a, ctx),
        Command::FinetuneGuide(a) => guide::finetune(a, ctx),
        Command::Hints(a) => guide::hints(a, ctx),
    }
}
