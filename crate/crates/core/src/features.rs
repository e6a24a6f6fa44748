//! Fixed-dimension text representations.
//!
//! Two sources feed the classifier and the distance analysis: the built-in
//! signed feature-hashing featurizer, and dense vectors produced by an
//! external encoder and exchanged through the embedding file format below.
//!
//! # Embedding file format (version 1)
//!
//! All integers and floats little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"SGEM"`                         |
//! | 4      | 2    | version, `1`                            |
//! | 6      | 2    | value type, `1` = f64                   |
//! | 8      | 4    | `dim` (u32)                             |
//! | 12     | 4    | `key_width` in bytes (u32)              |
//! | 16     | 8    | `count` (u64)                           |
//! | 24     | ...  | `count` records                         |
//!
//! Each record is `key_width` bytes of UTF-8 key, NUL-padded, followed by
//! `dim` f64 values. Keys are `report_id|SEGMENT`, e.g. `r0012|C5-C6`.
//!
//! The JSONL debug variant holds one `{"key": ..., "values": [...]}` object
//! per line. [`read_embeddings`] accepts either.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::model::{bundle_key, MotionSegment};

pub const MAGIC: [u8; 4] = *b"SGEM";
pub const FORMAT_VERSION: u16 = 1;
const VALUE_TYPE_F64: u16 = 1;
const HEADER_LEN: usize = 24;
const SIGN_SALT: u64 = 0x5157_u64 << 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashedFeaturizerConfig {
    pub dim: usize,
    pub ngram_range: (usize, usize),
    pub lowercase: bool,
    pub seed: u64,
}

impl Default for HashedFeaturizerConfig {
    fn default() -> Self {
        Self {
            dim: 1024,
            ngram_range: (1, 2),
            lowercase: true,
            seed: 0,
        }
    }
}

impl HashedFeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!("featurizer dim {} < 2", self.dim)));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || hi < lo {
            return Err(Error::InvalidConfig(format!("bad ngram range ({lo}, {hi})")));
        }
        Ok(())
    }
}

fn tokens(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// Signed hashed bag of word n-grams, L2-normalized (zero vector when the
/// text has no tokens).
///
/// Panics if `config` fails [`HashedFeaturizerConfig::validate`].
pub fn featurize(text: &str, config: &HashedFeaturizerConfig) -> Vec<f64> {
    config.validate().expect("invalid featurizer config");
    let mut out = vec![0.0; config.dim];
    let toks = tokens(text, config.lowercase);
    let (lo, hi) = config.ngram_range;
    let mut gram = String::new();
    for n in lo..=hi {
        for window in toks.windows(n) {
            gram.clear();
            for (i, t) in window.iter().enumerate() {
                if i > 0 {
                    gram.push(' ');
                }
                gram.push_str(t);
            }
            let index = (fnv1a64(config.seed, gram.as_bytes()) % config.dim as u64) as usize;
            let sign = if fnv1a64(config.seed ^ SIGN_SALT, gram.as_bytes()) & 1 == 0 {
                1.0
            } else {
                -1.0
            };
            out[index] += sign;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub key: String,
    pub values: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(report_id: &str, segment: MotionSegment, values: Vec<f64>) -> Self {
        Self {
            key: bundle_key(report_id, segment),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Splits the key at its last `|`.
    pub fn parse_key(&self) -> Result<(&str, MotionSegment)> {
        let (id, seg) = self
            .key
            .rsplit_once('|')
            .ok_or_else(|| Error::Format(format!("embedding key {:?} has no '|'", self.key)))?;
        Ok((id, seg.parse()?))
    }
}

/// Checks uniform, positive dimension and finite values. Returns the dim
/// (0 for an empty set).
pub fn validate_records(records: &[EmbeddingRecord]) -> Result<usize> {
    let Some(first) = records.first() else {
        return Ok(0);
    };
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::InvalidConfig("embedding dim must be positive".into()));
    }
    for r in records {
        if r.dim() != dim {
            return Err(Error::InconsistentDimension {
                first: dim,
                other: r.dim(),
            });
        }
        if let Some(&v) = r.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                key: r.key.clone(),
                value: v,
            });
        }
        if r.key.contains('\0') {
            return Err(Error::Format(format!("NUL byte in key {:?}", r.key)));
        }
    }
    Ok(dim)
}

pub fn write_embeddings(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = validate_records(records)?;
    let key_width = records.iter().map(|r| r.key.len()).max().unwrap_or(0);
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&VALUE_TYPE_F64.to_le_bytes());
    header.extend_from_slice(&(dim as u32).to_le_bytes());
    header.extend_from_slice(&(key_width as u32).to_le_bytes());
    header.extend_from_slice(&(records.len() as u64).to_le_bytes());
    w.write_all(&header).map_err(io)?;
    let mut key_buf = vec![0u8; key_width];
    for r in records {
        key_buf.fill(0);
        key_buf[..r.key.len()].copy_from_slice(r.key.as_bytes());
        w.write_all(&key_buf).map_err(io)?;
        for v in &r.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_embeddings_jsonl(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<()> {
    validate_records(records)?;
    crate::io::write_jsonl(path, records)
}

/// Reads either the binary or the JSONL variant and validates the result.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(io)?)
        .read_to_end(&mut bytes)
        .map_err(io)?;
    let records = if bytes.starts_with(&MAGIC) {
        decode_binary(&bytes)?
    } else {
        crate::io::read_jsonl(path)?
    };
    validate_records(&records)?;
    Ok(records)
}

fn decode_binary(bytes: &[u8]) -> Result<Vec<EmbeddingRecord>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated embedding header".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    if u16_at(6) != VALUE_TYPE_F64 {
        return Err(Error::Format(format!("unsupported value type {}", u16_at(6))));
    }
    let dim = u32_at(8) as usize;
    let key_width = u32_at(12) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let record_len = key_width + 8 * dim;
    let body = &bytes[HEADER_LEN..];
    if body.len() != record_len * count {
        return Err(Error::Format(format!(
            "expected {} record bytes, found {}",
            record_len * count,
            body.len()
        )));
    }
    body.chunks_exact(record_len.max(1))
        .take(count)
        .map(|chunk| {
            let (key, values) = chunk.split_at(key_width);
            let end = key.iter().position(|&b| b == 0).unwrap_or(key_width);
            let key = std::str::from_utf8(&key[..end])
                .map_err(|e| Error::Format(format!("key is not UTF-8: {e}")))?
                .to_string();
            let values = values
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(EmbeddingRecord { key, values })
        })
        .collect()
}

/// Read-only key → vector lookup.
#[derive(Clone, Debug)]
pub struct EmbeddingIndex {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    by_key: HashMap<String, usize>,
}

impl EmbeddingIndex {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let dim = validate_records(&records)?;
        let by_key = records.iter().enumerate().map(|(i, r)| (r.key.clone(), i)).collect();
        Ok(Self { dim, records, by_key })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_embeddings(path)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Result<&[f64]> {
        self.by_key
            .get(key)
            .map(|&i| self.records[i].values.as_slice())
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> HashedFeaturizerConfig {
        HashedFeaturizerConfig::default()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = featurize("", &cfg());
        assert_eq!(v.len(), 1024);
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(featurize(" ,;. ", &cfg()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_bytes() {
        let t = "C5-C6: Severe canal stenosis with cord flattening.";
        let a: Vec<u64> = featurize(t, &cfg()).iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = featurize(t, &cfg()).iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    /// Straight-line reference: builds the n-gram list explicitly, hashes
    /// each into a map and normalizes, without sharing the featurizer loop.
    fn reference(text: &str, c: &HashedFeaturizerConfig) -> Vec<f64> {
        let words: Vec<String> = text
            .to_lowercase()
            .split(|ch: char| !ch.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect();
        let mut grams = Vec::new();
        for n in c.ngram_range.0..=c.ngram_range.1 {
            for i in 0..words.len().saturating_sub(n - 1) {
                grams.push(words[i..i + n].join(" "));
            }
        }
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for g in &grams {
            let idx = (fnv1a64(c.seed, g.as_bytes()) % c.dim as u64) as usize;
            let s = if fnv1a64(c.seed ^ SIGN_SALT, g.as_bytes()) % 2 == 0 { 1.0 } else { -1.0 };
            *acc.entry(idx).or_default() += s;
        }
        let n: f64 = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = vec![0.0; c.dim];
        for (i, v) in acc {
            out[i] = v / n;
        }
        out
    }

    #[test]
    fn one_token_difference_cosine() {
        let a = "Mild disc bulge with moderate canal stenosis";
        let b = "Severe disc bulge with moderate canal stenosis";
        let (fa, fb) = (featurize(a, &cfg()), featurize(b, &cfg()));
        let (ra, rb) = (reference(a, &cfg()), reference(b, &cfg()));
        assert_eq!(fa, ra);
        let cos: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
        let ref_cos: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
        assert!(cos > 0.0 && cos < 1.0);
        // 7 unigrams + 6 bigrams each; the changed word touches one of each.
        // With no index collisions the cosine is 11/13.
        assert!((cos - ref_cos).abs() < 1e-15);
        assert!((cos - 11.0 / 13.0).abs() < 1e-12, "cos = {cos}");
    }

    #[test]
    fn hash_mass_is_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let words: Vec<String> = (0..10_000)
            .map(|_| (0..rng.random_range(3..9)).map(|_| rng.random_range(b'a'..=b'z') as char).collect())
            .collect();
        let text = words.join(" ");
        let c = cfg();
        let mut counts = vec![0usize; c.dim];
        let toks = tokens(&text, true);
        let mut total = 0;
        for n in 1..=2 {
            for w in toks.windows(n) {
                let g = w.join(" ");
                counts[(fnv1a64(c.seed, g.as_bytes()) % c.dim as u64) as usize] += 1;
                total += 1;
            }
        }
        let max = *counts.iter().max().unwrap();
        assert!((max as f64) / (total as f64) < 0.05, "max bucket {max} of {total}");
    }

    #[test]
    fn mixed_dims_rejected() {
        let recs = vec![
            EmbeddingRecord::new("a", MotionSegment::C2C3, vec![0.0; 768]),
            EmbeddingRecord::new("b", MotionSegment::C2C3, vec![0.0; 512]),
        ];
        assert!(matches!(
            validate_records(&recs),
            Err(Error::InconsistentDimension { first: 768, other: 512 })
        ));
        let dir = tempfile::tempdir().unwrap();
        assert!(write_embeddings(&recs, dir.path().join("x.bin")).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let recs = vec![EmbeddingRecord::new("a", MotionSegment::C2C3, vec![1.0, f64::NAN])];
        assert!(matches!(validate_records(&recs), Err(Error::InvalidValue { .. })));
    }

    #[test]
    fn roundtrip_768() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let recs: Vec<_> = ["r1", "r22", "report|with|pipes"]
            .iter()
            .map(|id| EmbeddingRecord::new(id, MotionSegment::C6C7, (0..768).map(|_| rng.random::<f64>() - 0.5).collect()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("e.bin");
        let jsonl = dir.path().join("e.jsonl");
        write_embeddings(&recs, &bin).unwrap();
        write_embeddings_jsonl(&recs, &jsonl).unwrap();
        assert_eq!(read_embeddings(&bin).unwrap(), recs);
        assert_eq!(read_embeddings(&jsonl).unwrap(), recs);
        let (id, seg) = recs[2].parse_key().unwrap();
        assert_eq!((id, seg), ("report|with|pipes", MotionSegment::C6C7));
    }

    #[test]
    fn header_layout() {
        let recs = vec![EmbeddingRecord::new("ab", MotionSegment::C2C3, vec![1.5, -2.0])];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_embeddings(&recs, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let key = b"ab|C2-C3";
        let mut expected = Vec::new();
        expected.extend_from_slice(b"SGEM");
        expected.extend_from_slice(&[1, 0, 1, 0]);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&(key.len() as u32).to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(key);
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_embeddings(&[EmbeddingRecord::new("a", MotionSegment::C2C3, vec![1.0; 4])], &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_embeddings(&p), Err(Error::Format(_))));
    }

    #[test]
    fn index_lookup() {
        let idx = EmbeddingIndex::new(vec![EmbeddingRecord::new("a", MotionSegment::C3C4, vec![1.0, 2.0])]).unwrap();
        assert_eq!(idx.get("a|C3-C4").unwrap(), &[1.0, 2.0]);
        assert!(matches!(idx.get("b|C3-C4"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn training_scale_file_reads_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 5488 + 561 + 178 train instances.
        let recs: Vec<_> = (0..6227)
            .map(|i| EmbeddingRecord::new(&format!("r{i:05}"), MotionSegment::C4C5, (0..768).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("big.bin");
        write_embeddings(&recs, &p).unwrap();
        let t = std::time::Instant::now();
        let back = read_embeddings(&p).unwrap();
        let elapsed = t.elapsed();
        assert_eq!(back.len(), 6227);
        assert!(elapsed.as_secs_f64() < 2.0, "read took {elapsed:?}");
    }

    proptest! {
        #[test]
        fn featurized_norm_is_zero_or_one(text in "\\PC{0,80}") {
            let n = norm(&featurize(&text, &cfg()));
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn binary_roundtrip(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..6),
                            ids in prop::collection::vec("[a-z0-9]{1,10}", 6)) {
            let recs: Vec<_> = values.into_iter().zip(ids).map(|(v, id)| EmbeddingRecord::new(&id, MotionSegment::C2C3, v)).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("e.bin");
            write_embeddings(&recs, &p).unwrap();
            prop_assert_eq!(read_embeddings(&p).unwrap(), recs);
        }
    }
}
