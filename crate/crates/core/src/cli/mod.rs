//! Command-line front end: `train`, `generate`, `eval`, `gradcheck`, `synth`.

pub mod checkpoint;
pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{self, SynthSpec, Vocabulary};
use crate::decoding::{beam_search, sample_captions, NoiseMode, DEFAULT_BEAM, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::metrics::EvalCorpus;
use crate::model::{Dims, ModelConfig, ModelParams};
use crate::training::{self, ValMetric};

pub use checkpoint::Checkpoint;
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "msrnn", version, about = "Video captioning with a stochastic recurrent decoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenMode {
    Stochastic,
    Mean,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the best checkpoint plus a history log.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "val_captions")]
        val_features: Option<PathBuf>,
        #[arg(long, requires = "val_features")]
        val_captions: Option<PathBuf>,
        /// History log path; defaults to `<out>.history`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Caption every clip of a feature file.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BEAM)]
        beam: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, value_enum, default_value_t = GenMode::Stochastic)]
        mode: GenMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate captions against references.
    Eval {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "bleu1,bleu2,bleu3,bleu4,rouge_l,cider")]
        metrics: Vec<String>,
    },
    /// Compare tape gradients with finite differences on a random model.
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        d_v: usize,
        #[arg(long, default_value_t = 8)]
        d_s: usize,
        #[arg(long, default_value_t = 16)]
        h: usize,
        #[arg(long, default_value_t = 16)]
        h_r: usize,
        #[arg(long, default_value_t = 4)]
        d_z: usize,
        #[arg(long, default_value_t = 20)]
        d_a: usize,
        #[arg(long, default_value_t = 8)]
        fc_hidden: usize,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a synthetic corpus (features, captions, manifest).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        scenes: usize,
        #[arg(long, default_value_t = 10)]
        clips_per_scene: usize,
        #[arg(long, default_value_t = 3)]
        captions_per_scene: usize,
        #[arg(long, default_value_t = 16)]
        d_v: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut impl std::io::Write, err: &mut impl std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            let _ = writeln!(err, "error: usage: {first}");
            return 2;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {}: {msg}", e.category());
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut impl std::io::Write) -> Result<()> {
    match command {
        Command::Train {
            features,
            captions,
            config,
            out: ckpt,
            val_features,
            val_captions,
            history,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let val = match (val_features, val_captions) {
                (Some(f), Some(c)) => Some((f, c)),
                _ => None,
            };
            let history = history.unwrap_or_else(|| with_suffix(&ckpt, ".history"));
            let report = cmd_train(&features, &captions, &cfg, val.as_ref().map(|(f, c)| (f.as_path(), c.as_path())), &ckpt, &history)?;
            writeln!(out, "{report}")?;
        }
        Command::Generate {
            ckpt,
            features,
            samples,
            seed,
            beam,
            max_len,
            mode,
            out: dest,
        } => {
            let text = cmd_generate(&ckpt, &features, samples, seed, beam, max_len, mode)?;
            fs::write(&dest, text)?;
        }
        Command::Eval {
            candidates,
            references,
            metrics,
        } => {
            let scores = cmd_eval(&candidates, &references, &metrics)?;
            for (name, v) in scores {
                writeln!(out, "{name}\t{v:.6}")?;
            }
        }
        Command::Gradcheck {
            d_v,
            d_s,
            h,
            h_r,
            d_z,
            d_a,
            fc_hidden,
            steps,
            seed,
            tolerance,
        } => {
            let dims = Dims {
                d_v,
                d_s,
                h,
                h_r,
                d_z,
                d_a,
                fc_hidden,
            };
            let report = training::gradient_check(ModelConfig::new(dims), steps, seed, tolerance)?;
            write!(out, "{report}")?;
            if !report.passed() {
                return Err(Error::contract(format!(
                    "gradient check failed for {}",
                    report.failing().join(", ")
                )));
            }
        }
        Command::Synth {
            out: dir,
            scenes,
            clips_per_scene,
            captions_per_scene,
            d_v,
            frames,
            noise,
            seed,
        } => {
            let spec = SynthSpec {
                scenes,
                captions_per_scene,
                clips_per_scene,
                d_v,
                frames,
                noise,
                seed,
            };
            data::generate_synthetic(&spec)?.write(&dir)?;
        }
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Builds the vocabulary from training captions, trains, and writes the
/// checkpoint and history. Returns a one-line summary.
pub fn cmd_train(
    features: &Path,
    captions: &Path,
    cfg: &RunConfig,
    val: Option<(&Path, &Path)>,
    ckpt: &Path,
    history: &Path,
) -> Result<String> {
    cfg.validate()?;
    let feats = data::read_features(features)?;
    let caps = data::read_captions(captions)?;
    if let Some((id, f)) = feats.first() {
        if f.shape()[1] != cfg.d_v {
            return Err(Error::Schema(format!(
                "config d_v is {}, clip {id} has feature dimension {}",
                cfg.d_v,
                f.shape()[1]
            )));
        }
    }
    let texts: Vec<&str> = caps.iter().map(|(_, c)| c.as_str()).collect();
    let vocab = Vocabulary::build(&texts, cfg.min_count)?;
    let train_set = data::join(feats, &caps, &vocab)?;
    let val_set = match val {
        Some((f, c)) => {
            let vf = data::read_features(f)?;
            if let Some((id, t)) = vf.iter().find(|(_, t)| t.shape()[1] != cfg.d_v) {
                return Err(Error::Schema(format!(
                    "config d_v is {}, validation clip {id} has feature dimension {}",
                    cfg.d_v,
                    t.shape()[1]
                )));
            }
            let vc = data::read_captions(c)?;
            data::join(vf, &vc, &vocab)?
                .into_iter()
                .filter(|r| !r.captions.is_empty())
                .collect()
        }
        None => Vec::new(),
    };
    let train_set: Vec<_> = train_set.into_iter().filter(|r| !r.captions.is_empty()).collect();

    let params = ModelParams::new(cfg.model_config(vocab.len()), cfg.seed, cfg.init_scale);
    let outcome = training::train(&params, &train_set, &val_set, &cfg.train_config())?;
    Checkpoint {
        params: outcome.params,
        vocab,
    }
    .save(ckpt)?;
    fs::write(history, training::history_log(&outcome.history))?;
    let best = &outcome.history[outcome.best_epoch];
    Ok(format!(
        "trained {} epochs, best epoch {} with {} {:.6}",
        outcome.history.len(),
        outcome.best_epoch,
        cfg.val_metric,
        best.val_metric
    ))
}

/// Returns the TSV `id<TAB>sample_index<TAB>caption`, one row per sample.
pub fn cmd_generate(
    ckpt: &Path,
    features: &Path,
    samples: usize,
    seed: u64,
    beam: usize,
    max_len: usize,
    mode: GenMode,
) -> Result<String> {
    let ck = Checkpoint::load(ckpt)?;
    let feats = data::read_features(features)?;
    let d_v = ck.params.dims().d_v;
    if let Some((id, f)) = feats.iter().find(|(_, f)| f.shape()[1] != d_v) {
        return Err(Error::Schema(format!(
            "checkpoint d_v is {d_v}, clip {id} has feature dimension {}",
            f.shape()[1]
        )));
    }
    let mut text = String::new();
    for (id, frames) in &feats {
        let caps = match mode {
            GenMode::Mean => vec![beam_search(&ck.params, frames, beam, max_len, NoiseMode::Mean)?],
            GenMode::Stochastic => sample_captions(&ck.params, frames, samples, seed, beam, max_len)?,
        };
        for (i, c) in caps.iter().enumerate() {
            let _ = writeln!(text, "{id}\t{i}\t{}", ck.vocab.decode(&c.tokens)?.join(" "));
        }
    }
    Ok(text)
}

/// Candidate rows may be `id<TAB>caption` or `id<TAB>sample<TAB>caption`;
/// in the latter case sample 0 is scored.
fn parse_candidates(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (id, caption) = match cols.as_slice() {
            [id, cap] => (*id, *cap),
            [id, sample, cap] => {
                let k: usize = sample.trim().parse().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("bad sample index `{sample}`"),
                })?;
                if k != 0 {
                    continue;
                }
                (*id, *cap)
            }
            _ => {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "expected 2 or 3 tab-separated columns".into(),
                })
            }
        };
        if out.insert(id.to_string(), caption.to_string()).is_some() {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("duplicate candidate for clip {id}"),
            });
        }
    }
    Ok(out)
}

/// Returns `(metric name, score)` in request order.
pub fn cmd_eval(candidates: &Path, references: &Path, metrics: &[String]) -> Result<Vec<(String, f64)>> {
    let parsed: Vec<(String, ValMetric)> = metrics
        .iter()
        .map(|m| Ok((m.trim().to_string(), m.parse::<ValMetric>()?)))
        .collect::<Result<_>>()?;
    let cands = parse_candidates(&fs::read_to_string(candidates)?)?;
    let refs = data::read_captions(references)?;
    let mut by_id: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for (id, c) in &refs {
        by_id.entry(id.as_str()).or_default().push(data::tokenize(c));
    }
    let missing: Vec<&str> = cands.keys().map(String::as_str).filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::Join(format!("candidates without references: {}", missing.join(", "))));
    }
    let mut corpus = EvalCorpus::new();
    for (id, c) in &cands {
        corpus.insert(id.clone(), data::tokenize(c), by_id.remove(id.as_str()).unwrap_or_default())?;
    }
    parsed
        .into_iter()
        .map(|(name, m)| Ok((name, m.score(&corpus)?)))
        .collect()
}
