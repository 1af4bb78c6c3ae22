//! Flat `key = value` run configuration with `#` comments.

use std::fs;
use std::path::Path;

use crate::decoding::{DEFAULT_BEAM, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{AblationMode, Dims, ModelConfig, PosteriorMean};
use crate::training::{AdadeltaConfig, TrainConfig, ValMetric};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d_v: usize,
    pub d_s: usize,
    pub h: usize,
    pub h_r: usize,
    pub d_z: usize,
    pub fc_hidden: usize,
    pub mode: AblationMode,
    pub kl_mean: PosteriorMean,
    pub init_scale: f64,
    pub min_count: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub anneal_epochs: usize,
    pub anneal_start: f64,
    pub beam_size: usize,
    pub max_len: usize,
    pub rho: f64,
    pub adadelta_eps: f64,
    pub scale: f64,
    pub clip_norm: Option<f64>,
    pub val_metric: ValMetric,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = Dims::desk(0);
        let t = TrainConfig::default();
        RunConfig {
            d_v: d.d_v,
            d_s: d.d_s,
            h: d.h,
            h_r: d.h_r,
            d_z: d.d_z,
            fc_hidden: d.fc_hidden,
            mode: AblationMode::Stochastic,
            kl_mean: PosteriorMean::Effective,
            init_scale: 0.08,
            min_count: 1,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            anneal_epochs: t.anneal_epochs,
            anneal_start: t.anneal_start,
            beam_size: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
            rho: t.optimizer.rho,
            adadelta_eps: t.optimizer.eps,
            scale: t.optimizer.scale,
            clip_norm: t.clip_norm,
            val_metric: t.val_metric,
            seed: t.seed,
        }
    }
}

fn value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value `{raw}` for `{key}`"),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, raw_line) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n,
                message: "expected `key = value`".into(),
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            match key {
                "d_v" => c.d_v = value(n, key, raw)?,
                "d_s" => c.d_s = value(n, key, raw)?,
                "h" => c.h = value(n, key, raw)?,
                "h_r" => c.h_r = value(n, key, raw)?,
                "d_z" => c.d_z = value(n, key, raw)?,
                "fc_hidden" => c.fc_hidden = value(n, key, raw)?,
                "mode" => c.mode = raw.parse().map_err(|e: Error| Error::Parse { line: n, message: e.to_string() })?,
                "kl_mean" => c.kl_mean = raw.parse().map_err(|e: Error| Error::Parse { line: n, message: e.to_string() })?,
                "init_scale" => c.init_scale = value(n, key, raw)?,
                "min_count" => c.min_count = value(n, key, raw)?,
                "batch_size" => c.batch_size = value(n, key, raw)?,
                "max_epochs" => c.max_epochs = value(n, key, raw)?,
                "patience" => c.patience = value(n, key, raw)?,
                "anneal_epochs" => c.anneal_epochs = value(n, key, raw)?,
                "anneal_start" => c.anneal_start = value(n, key, raw)?,
                "beam_size" => c.beam_size = value(n, key, raw)?,
                "max_len" => c.max_len = value(n, key, raw)?,
                "rho" => c.rho = value(n, key, raw)?,
                "adadelta_eps" => c.adadelta_eps = value(n, key, raw)?,
                "scale" => c.scale = value(n, key, raw)?,
                "clip_norm" => {
                    c.clip_norm = match raw {
                        "none" | "off" => None,
                        _ => Some(value(n, key, raw)?),
                    }
                }
                "val_metric" => c.val_metric = raw.parse().map_err(|e: Error| Error::Parse { line: n, message: e.to_string() })?,
                "seed" => c.seed = value(n, key, raw)?,
                other => {
                    return Err(Error::Parse {
                        line: n,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn model_config(&self, d_a: usize) -> ModelConfig {
        ModelConfig {
            dims: Dims {
                d_v: self.d_v,
                d_s: self.d_s,
                h: self.h,
                h_r: self.h_r,
                d_z: self.d_z,
                d_a,
                fc_hidden: self.fc_hidden,
            },
            mode: self.mode,
            kl_mean: self.kl_mean,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            anneal_epochs: self.anneal_epochs,
            anneal_start: self.anneal_start,
            seed: self.seed,
            val_metric: self.val_metric,
            beam_size: self.beam_size,
            max_len: self.max_len,
            clip_norm: self.clip_norm,
            optimizer: AdadeltaConfig {
                rho: self.rho,
                eps: self.adadelta_eps,
                scale: self.scale,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [self.d_v, self.d_s, self.h, self.h_r, self.d_z, self.fc_hidden];
        if sizes.contains(&0) {
            return Err(Error::contract("all layer sizes must be positive"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::contract("init_scale must be positive"));
        }
        self.train_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse("# desk run\nd_v = 8\nmode = M  # ablation\nclip_norm = 5\n\nseed=3\n").unwrap();
        assert_eq!(c.d_v, 8);
        assert_eq!(c.mode, AblationMode::Deterministic);
        assert_eq!(c.clip_norm, Some(5.0));
        assert_eq!(c.seed, 3);
        assert_eq!(c.h, RunConfig::default().h);
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        assert!(matches!(RunConfig::parse("d_v = 8\nbogus = 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(RunConfig::parse("d_v = x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("just words\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn paper_scale_is_one_config_away() {
        let c = RunConfig::parse("d_s = 512\nh = 512\nh_r = 512\nd_z = 256\n").unwrap();
        let m = c.model_config(13010);
        assert_eq!((m.dims.d_s, m.dims.h, m.dims.h_r, m.dims.d_z), (512, 512, 512, 256));
        c.validate().unwrap();
    }
}
