//! Vocabulary, tokenization, feature/caption file formats and the synthetic
//! corpus generator.
//!
//! File formats:
//! - features: JSON lines, `{"id": "...", "frames": [[f64; D_v]; N]}`
//! - captions: TSV, `id<TAB>raw caption`, one caption per line
//! - vocabulary: one token per line, line number = index
//! - manifest: JSON lines, `{"id": "...", "valid": ["caption", ...]}`

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RandomSource, Tensor};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const BOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// Lowercases, splits on word/punctuation boundaries and drops punctuation-only tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    let re = PATTERN.get_or_init(|| Regex::new(r"\w+|[^\w\s]+").expect("valid pattern"));
    let lower = sentence.to_lowercase();
    re.find_iter(&lower)
        .map(|m| m.as_str())
        .filter(|tok| tok.chars().any(|c| c.is_alphanumeric() || c == '_'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn with_reserved() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [BOS, EOS, UNK] {
            v.push(t);
        }
        v
    }

    fn push(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    /// Reserved tokens first, then tokens seen at least `min_count` times in
    /// first-appearance order.
    pub fn build<S: AsRef<str>>(captions: &[S], min_count: usize) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::contract("cannot build a vocabulary from an empty corpus"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for c in captions {
            for tok in tokenize(c.as_ref()) {
                let n = counts.entry(tok.clone()).or_insert(0);
                if *n == 0 {
                    order.push(tok);
                }
                *n += 1;
            }
        }
        let mut v = Vocabulary::with_reserved();
        for tok in order {
            if counts[&tok] >= min_count.max(1) {
                v.push(&tok);
            }
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| {
                self.tokens.get(i).cloned().ok_or(Error::Vocabulary {
                    index: i,
                    size: self.len(),
                })
            })
            .collect()
    }

    /// `[<bos>, words.., <eos>]`, the form consumed by training.
    pub fn training_sequence(&self, sentence: &str) -> Vec<usize> {
        let mut seq = vec![BOS_ID];
        seq.extend(self.encode(&tokenize(sentence)));
        seq.push(EOS_ID);
        seq
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < 3 || tokens[..3] != [BOS, EOS, UNK] {
            return Err(Error::Schema("vocabulary must start with <bos>, <eos>, <unk>".into()));
        }
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (line, t) in tokens.iter().enumerate() {
            if v.index.contains_key(*t) {
                return Err(Error::Parse {
                    line: line + 1,
                    message: format!("duplicate vocabulary token `{t}`"),
                });
            }
            v.push(t);
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Vocabulary::from_text(&fs::read_to_string(path)?)
    }
}

/// One clip: pooled-later frame features plus encoded reference captions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub id: String,
    pub frames: Tensor,
    /// Training sequences `[<bos>, words.., <eos>]`.
    pub captions: Vec<Vec<usize>>,
}

impl ClipRecord {
    /// Caption bodies without `<bos>`/`<eos>`.
    pub fn references(&self) -> Vec<Vec<usize>> {
        self.captions
            .iter()
            .map(|c| c.iter().copied().filter(|&t| t != BOS_ID && t != EOS_ID).collect())
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureLine {
    id: String,
    frames: Vec<Vec<f64>>,
}

fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders clips as feature JSON lines with 17 significant digits per value.
pub fn features_to_string(clips: &[(String, Tensor)]) -> String {
    let mut out = String::new();
    for (id, frames) in clips {
        let d = frames.shape()[1];
        out.push_str("{\"id\":");
        out.push_str(&serde_json::to_string(id).expect("string serializes"));
        out.push_str(",\"frames\":[");
        for (i, row) in frames.data().chunks(d.max(1)).take(frames.shape()[0]).enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push('[');
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_float(*x));
            }
            out.push(']');
        }
        out.push_str("]}\n");
    }
    out
}

pub fn parse_features(text: &str) -> Result<Vec<(String, Tensor)>> {
    let mut clips = Vec::new();
    let mut dim: Option<(usize, String)> = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FeatureLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if parsed.frames.is_empty() {
            return Err(Error::Schema(format!("clip {} has no frames", parsed.id)));
        }
        let d = parsed.frames[0].len();
        if parsed.frames.iter().any(|r| r.len() != d) {
            return Err(Error::Schema(format!("clip {} has ragged frame rows", parsed.id)));
        }
        match &dim {
            Some((d0, first)) if *d0 != d => {
                return Err(Error::Schema(format!(
                    "clip {} has feature dimension {d}, clip {first} has {d0}",
                    parsed.id
                )))
            }
            None => dim = Some((d, parsed.id.clone())),
            _ => {}
        }
        let rows = parsed.frames.len();
        let data: Vec<f64> = parsed.frames.into_iter().flatten().collect();
        let frames = Tensor::matrix(rows, d, data).map_err(|_| Error::Parse {
            line: n + 1,
            message: "non-finite feature value".into(),
        })?;
        clips.push((parsed.id, frames));
    }
    Ok(clips)
}

pub fn read_features(path: &Path) -> Result<Vec<(String, Tensor)>> {
    parse_features(&fs::read_to_string(path)?)
}

pub fn write_features(path: &Path, clips: &[(String, Tensor)]) -> Result<()> {
    fs::write(path, features_to_string(clips))?;
    Ok(())
}

/// Parses `id<TAB>caption` lines, keeping file order.
pub fn parse_captions(text: &str) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, caption) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected `id<TAB>caption`".into(),
        })?;
        rows.push((id.to_string(), caption.to_string()));
    }
    Ok(rows)
}

pub fn read_captions(path: &Path) -> Result<Vec<(String, String)>> {
    parse_captions(&fs::read_to_string(path)?)
}

pub fn captions_to_string(rows: &[(String, String)]) -> String {
    let mut s = String::new();
    for (id, c) in rows {
        let _ = writeln!(s, "{id}\t{c}");
    }
    s
}

/// Joins features and captions on clip id. Clips without captions are kept
/// with an empty caption list; captions without features are an error.
pub fn join(
    features: Vec<(String, Tensor)>,
    captions: &[(String, String)],
    vocab: &Vocabulary,
) -> Result<Vec<ClipRecord>> {
    let mut by_id: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    for (id, c) in captions {
        by_id.entry(id.as_str()).or_default().push(vocab.training_sequence(c));
    }
    let known: std::collections::HashSet<&str> = features.iter().map(|(id, _)| id.as_str()).collect();
    let missing: Vec<&str> = by_id.keys().copied().filter(|id| !known.contains(id)).collect();
    if !missing.is_empty() {
        return Err(Error::Join(format!("captions without features: {}", missing.join(", "))));
    }
    Ok(features
        .into_iter()
        .map(|(id, frames)| {
            let captions = by_id.remove(id.as_str()).unwrap_or_default();
            ClipRecord { id, frames, captions }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub valid: Vec<String>,
}

pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e).expect("manifest serializes"));
        s.push('\n');
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parameters of the synthetic scene corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub scenes: usize,
    pub captions_per_scene: usize,
    pub clips_per_scene: usize,
    pub d_v: usize,
    pub frames: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            scenes: 5,
            captions_per_scene: 3,
            clips_per_scene: 10,
            d_v: 16,
            frames: 8,
            noise: 0.1,
            seed: 0,
        }
    }
}

const SUBJECTS: [&str; 10] = [
    "man", "woman", "dog", "cat", "child", "chef", "bird", "girl", "boy", "horse",
];
const VERBS: [&str; 10] = [
    "cooking", "running", "playing", "swimming", "dancing", "riding", "eating", "singing",
    "jumping", "painting",
];
const OBJECTS: [&str; 10] = [
    "food", "outside", "guitar", "water", "music", "bike", "bread", "songs", "rope", "walls",
];
const TEMPLATES: [&str; 4] = [
    "a {s} is {v} {o}",
    "the {s} keeps {v} {o}",
    "someone is {v} {o} now",
    "there is a {s} {v} {o}",
];

/// Minimum pairwise distance between scene centroids.
pub const MIN_CENTROID_DISTANCE: f64 = 4.0;

fn scene_word(pool: &[&str; 10], scene: usize) -> String {
    if scene < pool.len() {
        pool[scene].to_string()
    } else {
        format!("{}{}", pool[scene % pool.len()], scene / pool.len())
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 || self.clips_per_scene == 0 || self.d_v == 0 || self.frames == 0 {
            return Err(Error::contract("synthetic corpus sizes must be positive"));
        }
        if !(2..=TEMPLATES.len()).contains(&self.captions_per_scene) {
            return Err(Error::contract(format!(
                "captions_per_scene must be between 2 and {}",
                TEMPLATES.len()
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::contract("noise level must be finite and non-negative"));
        }
        Ok(())
    }

    /// Caption templates of one scene.
    pub fn scene_captions(&self, scene: usize) -> Vec<String> {
        let (s, v, o) = (
            scene_word(&SUBJECTS, scene),
            scene_word(&VERBS, scene),
            scene_word(&OBJECTS, scene),
        );
        TEMPLATES[..self.captions_per_scene]
            .iter()
            .map(|t| t.replace("{s}", &s).replace("{v}", &v).replace("{o}", &o))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub scene: usize,
    pub frames: Tensor,
}

/// A generated corpus: clips, their captions and the acceptable captions per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub centroids: Vec<Tensor>,
    pub clips: Vec<SynthClip>,
    pub scene_captions: Vec<Vec<String>>,
}

impl SynthCorpus {
    pub fn features(&self) -> Vec<(String, Tensor)> {
        self.clips.iter().map(|c| (c.id.clone(), c.frames.clone())).collect()
    }

    pub fn captions(&self) -> Vec<(String, String)> {
        self.clips
            .iter()
            .flat_map(|c| {
                self.scene_captions[c.scene]
                    .iter()
                    .map(move |cap| (c.id.clone(), cap.clone()))
            })
            .collect()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.clips
            .iter()
            .map(|c| ManifestEntry {
                id: c.id.clone(),
                valid: self.scene_captions[c.scene].clone(),
            })
            .collect()
    }

    /// Splits by clip position within its scene: the first `train_per_scene`
    /// clips of every scene go to the first corpus.
    pub fn split(&self, train_per_scene: usize) -> (SynthCorpus, SynthCorpus) {
        let mut seen = vec![0usize; self.scene_captions.len()];
        let (mut train, mut rest) = (Vec::new(), Vec::new());
        for c in &self.clips {
            if seen[c.scene] < train_per_scene {
                train.push(c.clone());
            } else {
                rest.push(c.clone());
            }
            seen[c.scene] += 1;
        }
        let with = |clips| SynthCorpus {
            centroids: self.centroids.clone(),
            clips,
            scene_captions: self.scene_captions.clone(),
        };
        (with(train), with(rest))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("features.jsonl"), features_to_string(&self.features()))?;
        fs::write(dir.join("captions.tsv"), captions_to_string(&self.captions()))?;
        fs::write(dir.join("manifest.jsonl"), manifest_to_string(&self.manifest()))?;
        Ok(())
    }
}

/// Scene centroids with pairwise separation, then per-clip frames as centroid
/// plus Gaussian noise. Deterministic in the spec.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rs = RandomSource::new(spec.seed);
    let spread = 2.0 * MIN_CENTROID_DISTANCE / (spec.d_v as f64).sqrt().max(1.0) + 1.0;
    let mut centroids: Vec<Tensor> = Vec::with_capacity(spec.scenes);
    let mut attempts = 0;
    while centroids.len() < spec.scenes {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::contract(format!(
                "cannot place {} separated centroids in {} dimensions",
                spec.scenes, spec.d_v
            )));
        }
        let c = rs.sample_standard_normal(spec.d_v).scale(spread)?;
        let far = centroids.iter().all(|o| {
            let d2: f64 = o.data().iter().zip(c.data()).map(|(a, b)| (a - b).powi(2)).sum();
            d2.sqrt() >= MIN_CENTROID_DISTANCE
        });
        if far {
            centroids.push(c);
        }
    }

    let mut clips = Vec::with_capacity(spec.scenes * spec.clips_per_scene);
    for (scene, centroid) in centroids.iter().enumerate() {
        for j in 0..spec.clips_per_scene {
            let mut data = Vec::with_capacity(spec.frames * spec.d_v);
            for _ in 0..spec.frames {
                for &c in centroid.data() {
                    data.push(c + spec.noise * rs.standard_normal());
                }
            }
            clips.push(SynthClip {
                id: format!("scene{scene}_clip{j}"),
                scene,
                frames: Tensor::matrix(spec.frames, spec.d_v, data)?,
            });
        }
    }
    Ok(SynthCorpus {
        centroids,
        clips,
        scene_captions: (0..spec.scenes).map(|s| spec.scene_captions(s)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_pool;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("A man is Cooking."), ["a", "man", "is", "cooking"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("don't stop"), ["don", "t", "stop"]);
        assert_eq!(tokenize("Wow!!  ok, fine..."), ["wow", "ok", "fine"]);
    }

    #[test]
    fn build_vocab_examples() {
        let v = Vocabulary::build(&["a b", "a"], 1).unwrap();
        assert_eq!(v.tokens(), ["<bos>", "<eos>", "<unk>", "a", "b"]);
        let v2 = Vocabulary::build(&["a b", "a"], 2).unwrap();
        assert_eq!(v2.tokens(), ["<bos>", "<eos>", "<unk>", "a"]);
        assert_eq!(v2.encode(&["b"]), [UNK_ID]);
        assert_eq!(
            Vocabulary::build(&["x y z", "z"], 1).unwrap().to_text(),
            Vocabulary::build(&["x y z", "z"], 1).unwrap().to_text()
        );
        assert!(Vocabulary::build::<&str>(&[], 1).is_err());
    }

    #[test]
    fn encode_decode() {
        let v = Vocabulary::build(&["the cat sat", "a dog ran"], 1).unwrap();
        let toks = tokenize("the dog sat");
        assert_eq!(v.decode(&v.encode(&toks)).unwrap(), toks);
        assert_eq!(v.encode(&["zebra"]), [UNK_ID]);
        assert!(matches!(v.decode(&[99]), Err(Error::Vocabulary { index: 99, .. })));
        for i in 0..v.len() {
            assert_eq!(v.encode(&v.decode(&[i]).unwrap()), [i]);
        }
    }

    #[test]
    fn vocab_text_round_trip() {
        let v = Vocabulary::build(&["one two", "three"], 1).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }

    #[test]
    fn single_clip_feature_round_trip() {
        let clips = vec![("c0".to_string(), Tensor::matrix(1, 3, vec![0.1, -2.5e-7, 1.0 / 3.0]).unwrap())];
        let back = parse_features(&features_to_string(&clips)).unwrap();
        assert_eq!(back, clips);
    }

    #[test]
    fn ragged_rows_name_the_clip() {
        let text = "{\"id\":\"bad\",\"frames\":[[1,2],[3]]}\n";
        match parse_features(text) {
            Err(Error::Schema(msg)) => assert!(msg.contains("bad")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"frames\":[[1]]}\nnot json\n";
        assert!(matches!(parse_features(text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_captions("a\tok\nbroken\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn inconsistent_dims_are_schema_errors() {
        let text = "{\"id\":\"a\",\"frames\":[[1,2]]}\n{\"id\":\"b\",\"frames\":[[1,2,3]]}\n";
        assert!(matches!(parse_features(text), Err(Error::Schema(_))));
    }

    #[test]
    fn join_requires_features_for_every_caption() {
        let v = Vocabulary::build(&["a b"], 1).unwrap();
        let feats = vec![("x".to_string(), Tensor::zeros(&[1, 2]))];
        let caps = vec![("x".to_string(), "a b".to_string()), ("y".to_string(), "a".to_string())];
        match join(feats.clone(), &caps, &v) {
            Err(Error::Join(msg)) => assert!(msg.contains('y')),
            other => panic!("{other:?}"),
        }
        let clips = join(feats, &caps[..1], &v).unwrap();
        assert_eq!(clips[0].captions, vec![vec![BOS_ID, 3, 4, EOS_ID]]);
        assert_eq!(clips[0].references(), vec![vec![3, 4]]);
    }

    #[test]
    fn zero_noise_clips_of_a_scene_are_identical() {
        let spec = SynthSpec { noise: 0.0, ..SynthSpec::default() };
        let corpus = generate_synthetic(&spec).unwrap();
        for scene in 0..spec.scenes {
            let of_scene: Vec<_> = corpus.clips.iter().filter(|c| c.scene == scene).collect();
            assert!(of_scene.windows(2).all(|w| w[0].frames == w[1].frames));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = SynthSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(features_to_string(&a.features()), features_to_string(&b.features()));
        assert_eq!(a.captions(), b.captions());
        assert!(generate_synthetic(&SynthSpec { captions_per_scene: 1, ..spec }).is_err());
    }

    #[test]
    fn hundred_clip_dump_round_trips() {
        let spec = SynthSpec { scenes: 10, ..SynthSpec::default() };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.clips.len(), 100);
        let dir = tempfile::tempdir().unwrap();
        corpus.write(dir.path()).unwrap();
        let feats = read_features(&dir.path().join("features.jsonl")).unwrap();
        assert_eq!(feats, corpus.features());
        assert_eq!(read_captions(&dir.path().join("captions.tsv")).unwrap(), corpus.captions());
        let manifest = parse_manifest(&fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap()).unwrap();
        assert_eq!(manifest, corpus.manifest());
    }

    #[test]
    fn scenes_are_separable_by_nearest_centroid() {
        let spec = SynthSpec { noise: 0.1, clips_per_scene: 20, ..SynthSpec::default() };
        let corpus = generate_synthetic(&spec).unwrap();
        for (i, a) in corpus.centroids.iter().enumerate() {
            for b in &corpus.centroids[i + 1..] {
                let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(d.sqrt() >= MIN_CENTROID_DISTANCE);
            }
        }
        for clip in &corpus.clips {
            let pooled = mean_pool(&clip.frames).unwrap();
            let nearest = (0..spec.scenes)
                .min_by(|&x, &y| {
                    let dx = pooled.sub(&corpus.centroids[x]).unwrap().data().iter().map(|v| v * v).sum::<f64>();
                    let dy = pooled.sub(&corpus.centroids[y]).unwrap().data().iter().map(|v| v * v).sum::<f64>();
                    dx.total_cmp(&dy)
                })
                .unwrap();
            assert_eq!(nearest, clip.scene);
        }
    }

    #[test]
    fn scene_captions_are_distinct() {
        let spec = SynthSpec { scenes: 12, captions_per_scene: 4, ..SynthSpec::default() };
        let corpus = generate_synthetic(&spec).unwrap();
        let all: Vec<&String> = corpus.scene_captions.iter().flatten().collect();
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), all.len());
    }

    #[test]
    fn split_keeps_scene_balance() {
        let spec = SynthSpec { clips_per_scene: 12, ..SynthSpec::default() };
        let (train, test) = generate_synthetic(&spec).unwrap().split(10);
        assert_eq!(train.clips.len(), 50);
        assert_eq!(test.clips.len(), 10);
    }
}
