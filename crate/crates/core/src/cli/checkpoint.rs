//! Binary checkpoint: `MSRN`, u32 version, u32 entry count, then named
//! tensors (u32 name length, UTF-8 name, u32 rank, u32 dims, f32 payload),
//! all little-endian. Two trailing entries carry the model dims and the
//! vocabulary.

use std::fs;
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{AblationMode, Dims, ModelConfig, ModelParams, PosteriorMean};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"MSRN";
pub const VERSION: u32 = 1;
const META_DIMS: &str = "meta.dims";
const META_VOCAB: &str = "meta.vocab";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
}

fn put_u32(out: &mut Vec<u8>, x: usize) -> Result<()> {
    let v = u32::try_from(x).map_err(|_| Error::contract(format!("{x} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: impl Iterator<Item = f32>) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

fn config_record(c: &ModelConfig) -> Vec<f32> {
    let d = c.dims;
    let mode = match c.mode {
        AblationMode::Deterministic => 0.0,
        AblationMode::Stochastic => 1.0,
    };
    let kl = match c.kl_mean {
        PosteriorMean::Effective => 0.0,
        PosteriorMean::Residual => 1.0,
    };
    [d.d_v, d.d_s, d.h, d.h_r, d.d_z, d.d_a, d.fc_hidden]
        .iter()
        .map(|&x| x as f32)
        .chain([mode, kl])
        .collect()
}

fn config_from_record(v: &[f32]) -> Result<ModelConfig> {
    if v.len() != 9 || v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
        return Err(Error::Schema("malformed meta.dims entry".into()));
    }
    let u = |i: usize| v[i] as usize;
    let mode = match u(7) {
        0 => AblationMode::Deterministic,
        1 => AblationMode::Stochastic,
        _ => return Err(Error::Schema("unknown ablation mode in checkpoint".into())),
    };
    let kl_mean = match u(8) {
        0 => PosteriorMean::Effective,
        1 => PosteriorMean::Residual,
        _ => return Err(Error::Schema("unknown kl mean in checkpoint".into())),
    };
    Ok(ModelConfig {
        dims: Dims {
            d_v: u(0),
            d_s: u(1),
            h: u(2),
            h_r: u(3),
            d_z: u(4),
            d_a: u(5),
            fc_hidden: u(6),
        },
        mode,
        kl_mean,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        self.params.visit(&mut |n, t| {
            entries.push((n.to_string(), t.shape().to_vec(), t.data().iter().map(|&x| x as f32).collect()))
        });
        let rec = config_record(&self.params.config);
        entries.push((META_DIMS.into(), vec![rec.len()], rec));
        let text = self.vocab.to_text();
        entries.push((META_VOCAB.into(), vec![text.len()], text.bytes().map(f32::from).collect()));

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, entries.len())?;
        for (name, shape, data) in entries {
            put_entry(&mut out, &name, &shape, data.into_iter())?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic bytes, not a checkpoint".into(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::Format {
                    offset: at,
                    message: "entry name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank == 0 || rank > 2 {
                return Err(Error::Format {
                    offset: r.pos - 4,
                    message: format!("entry {name} has unsupported rank {rank}"),
                });
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<_>>()?;
            let n = shape.iter().product::<usize>();
            let payload = r.take(n.saturating_mul(4), "payload")?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push((name, shape, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                message: "trailing bytes after last entry".into(),
            });
        }

        let find = |name: &str| entries.iter().find(|e| e.0 == name);
        let config = config_from_record(&find(META_DIMS).ok_or_else(|| Error::Schema("missing meta.dims".into()))?.2)?;
        let vocab_bytes: Vec<u8> = find(META_VOCAB)
            .ok_or_else(|| Error::Schema("missing meta.vocab".into()))?
            .2
            .iter()
            .map(|&x| x as u8)
            .collect();
        let vocab = Vocabulary::from_text(
            &String::from_utf8(vocab_bytes).map_err(|_| Error::Schema("vocabulary is not UTF-8".into()))?,
        )?;
        if vocab.len() != config.dims.d_a {
            return Err(Error::Schema(format!(
                "vocabulary has {} tokens, model d_a is {}",
                vocab.len(),
                config.dims.d_a
            )));
        }

        let mut params = ModelParams::zeros(config);
        let mut problem = None;
        let mut seen = 0;
        params.visit_mut(&mut |n, t| {
            let matches: Vec<_> = entries.iter().filter(|e| e.0 == n).collect();
            match matches.as_slice() {
                [(_, shape, data)] if shape.as_slice() == t.shape() => {
                    seen += 1;
                    match Tensor::new(shape.clone(), data.iter().map(|&x| f64::from(x)).collect()) {
                        Ok(v) => *t = v,
                        Err(_) => problem = Some(format!("entry {n} holds non-finite values")),
                    }
                }
                [(_, shape, _)] => {
                    problem.get_or_insert(format!("entry {n} has shape {shape:?}, dims imply {:?}", t.shape()));
                }
                [] => {
                    problem.get_or_insert(format!("missing entry {n}"));
                }
                _ => {
                    problem.get_or_insert(format!("entry {n} appears more than once"));
                }
            }
        });
        if let Some(p) = problem {
            return Err(Error::Schema(p));
        }
        if seen + 2 != entries.len() {
            return Err(Error::Schema("checkpoint has unknown entries".into()));
        }
        Ok(Checkpoint { params, vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    /// Errors naming every dimension that differs from `expected`.
    pub fn ensure_dims(&self, expected: &Dims) -> Result<()> {
        let got = self.params.dims();
        let fields = [
            ("d_v", got.d_v, expected.d_v),
            ("d_s", got.d_s, expected.d_s),
            ("h", got.h, expected.h),
            ("h_r", got.h_r, expected.h_r),
            ("d_z", got.d_z, expected.d_z),
            ("d_a", got.d_a, expected.d_a),
            ("fc_hidden", got.fc_hidden, expected.fc_hidden),
        ];
        let diffs: Vec<String> = fields
            .iter()
            .filter(|f| f.1 != f.2)
            .map(|(n, g, e)| format!("{n} is {g} in checkpoint, {e} expected"))
            .collect();
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(diffs.join("; ")))
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.bytes.len(),
                message: format!("file truncated while reading {what} at byte {}", self.pos),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    fn sample() -> Checkpoint {
        let vocab = Vocabulary::build(&["a man is cooking", "a dog runs"], 1).unwrap();
        let dims = Dims {
            d_v: 3,
            d_s: 4,
            h: 5,
            h_r: 4,
            d_z: 2,
            d_a: vocab.len(),
            fc_hidden: 3,
        };
        Checkpoint {
            params: ModelParams::new(ModelConfig::new(dims), 1, 0.1),
            vocab,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let bytes = sample().to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes().unwrap(), bytes);
        let orig = sample();
        let (a, b) = (orig.params.tensors(), loaded.params.tensors());
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert_eq!(*u as f32, *v as f32);
                assert_eq!(f64::from(*u as f32), *v);
            }
        }
        assert_eq!(loaded.vocab, orig.vocab);
        assert_eq!(loaded.params.config, orig.params.config);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [2, 10, 100, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset, cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn dimension_mismatch_matrix() {
        let ck = sample();
        let base = ck.params.dims();
        ck.ensure_dims(&base).unwrap();
        let variants: [fn(&mut Dims); 7] = [
            |d| d.d_v += 1,
            |d| d.d_s += 1,
            |d| d.h += 1,
            |d| d.h_r += 1,
            |d| d.d_z += 1,
            |d| d.d_a += 1,
            |d| d.fc_hidden += 1,
        ];
        let names = ["d_v", "d_s", "h", "h_r", "d_z", "d_a", "fc_hidden"];
        for (f, name) in variants.iter().zip(names) {
            let mut d = base;
            f(&mut d);
            match ck.ensure_dims(&d) {
                Err(Error::Schema(msg)) => assert!(msg.starts_with(name), "{msg}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
