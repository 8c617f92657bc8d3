//! Binary model checkpoints.
//!
//! Layout, all integers u32 little-endian: `"TGCM"`, version, snapshot
//! length + UTF-8 snapshot, tensor count, then per tensor: name length +
//! UTF-8 name, rank, dims, row-major f32 LE values.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::tensor::{ParamSet, Tensor};
use crate::textpipe::{Preprocessor, StopwordList, Vocabulary};

pub const MAGIC: &[u8; 4] = b"TGCM";
pub const VERSION: u32 = 1;

/// Everything needed to reproduce predictions on raw text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Class names in index order.
    pub classes: Vec<String>,
    pub vocab: Vocabulary,
    pub stopwords: StopwordList,
    pub model: Model<f32>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::CorruptTensor(format!("bad escape \\{other:?} in snapshot"))),
        }
    }
    Ok(out)
}

impl Checkpoint {
    /// Checks that the model's shape agrees with the config, vocabulary and classes.
    pub fn new(
        config: RunConfig,
        classes: Vec<String>,
        vocab: Vocabulary,
        stopwords: StopwordList,
        model: Model<f32>,
    ) -> Result<Self> {
        let expected = config.model_config(vocab.len(), classes.len());
        if expected != model.cfg {
            return Err(Error::Config("model does not match config, vocabulary or class list".into()));
        }
        Ok(Checkpoint {
            config,
            classes,
            vocab,
            stopwords,
            model,
        })
    }

    pub fn preprocessor(&self) -> Preprocessor {
        Preprocessor::new(self.stopwords.clone())
    }

    fn modality_names(&self) -> Vec<&str> {
        self.model
            .cfg
            .active_modalities()
            .iter()
            .map(|m| m.name.as_str())
            .collect()
    }

    fn snapshot(&self) -> String {
        let mut s = self.config.to_text();
        for c in &self.classes {
            s.push_str(&format!("class = {}\n", escape(c)));
        }
        for w in self.stopwords.iter() {
            s.push_str(&format!("stopword = {}\n", escape(w)));
        }
        s.push_str(&format!("vocab.total_docs = {}\n", self.vocab.total_docs()));
        for (tok, df) in self.vocab.entries() {
            s.push_str(&format!("vocab = {}:{df}\n", escape(tok)));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.snapshot());
        let tensors = self.model.params.named(&self.modality_names());
        put_u32(&mut out, tensors.len() as u32);
        for (name, t) in tensors {
            put_str(&mut out, &name);
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let snapshot = r.string()?;
        let (config, classes, vocab, stopwords) = parse_snapshot(&snapshot)?;
        let model_cfg = config.model_config(vocab.len(), classes.len());
        model_cfg.validate()?;
        // Shapes only; every tensor is overwritten below.
        let mut params: ModelParams<f32> = ModelParams::init(&model_cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let names: Vec<String> = {
            let modality_names: Vec<&str> = model_cfg.active_modalities().iter().map(|m| m.name.as_str()).collect();
            params.named(&modality_names).into_iter().map(|(n, _)| n).collect()
        };
        let count = r.u32()? as usize;
        if count != names.len() {
            return Err(Error::CorruptTensor(format!("expected {} tensors, found {count}", names.len())));
        }
        for (expected_name, slot) in names.iter().zip(params.tensors_mut()) {
            let name = r.string()?;
            if &name != expected_name {
                return Err(Error::CorruptTensor(format!("expected tensor {expected_name}, found {name}")));
            }
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != slot.shape() {
                return Err(Error::CorruptTensor(format!(
                    "{name}: shape {dims:?}, expected {:?}",
                    slot.shape()
                )));
            }
            let len: usize = dims.iter().product();
            let raw = r.take(len * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            *slot = Tensor::from_vec(&dims, data).map_err(|_| Error::CorruptTensor(format!("{name}: non-finite values")))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptTensor(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            classes,
            vocab,
            stopwords,
            model: Model { cfg: model_cfg, params },
        })
    }
}

fn parse_snapshot(text: &str) -> Result<(RunConfig, Vec<String>, Vocabulary, StopwordList)> {
    let mut config = RunConfig::default();
    let mut classes = Vec::new();
    let mut stopwords = Vec::new();
    let mut vocab = Vec::new();
    let mut total_docs = 0;
    let corrupt = |msg: String| Error::CorruptTensor(format!("snapshot: {msg}"));
    for line in text.lines() {
        let (key, value) = line
            .split_once(" = ")
            .ok_or_else(|| corrupt(format!("malformed line {line:?}")))?;
        match key {
            "class" => classes.push(unescape(value)?),
            "stopword" => stopwords.push(unescape(value)?),
            "vocab.total_docs" => total_docs = value.parse().map_err(|_| corrupt("bad vocab.total_docs".into()))?,
            "vocab" => {
                let (tok, df) = value
                    .rsplit_once(':')
                    .ok_or_else(|| corrupt(format!("bad vocab entry {value:?}")))?;
                let df = df.parse().map_err(|_| corrupt(format!("bad vocab entry {value:?}")))?;
                vocab.push((unescape(tok)?, df));
            }
            _ => config.set(key, value)?,
        }
    }
    config.validate()?;
    Ok((
        config,
        classes,
        Vocabulary::from_ranked(vocab, total_docs),
        StopwordList::from_words(stopwords),
    ))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptTensor(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptTensor("invalid UTF-8".into()))
    }
}
