// SPDX-License-Identifier: MIT OR Apache-2.0

//! Representation trajectories and the ARGR binary dump format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! header   "ARGR" | version u32 | dim u32 | count_pairs u32
//! record   pair_id u64 | seq_id u64 | label u8 | prompt_len u32 | resp_len u32
//!          | (prompt_len + resp_len) * dim f32, row-major
//! ```
//!
//! Each pair is written as two records, non-toxic first. A JSON manifest is
//! written next to the dump as `<path>.manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Mat, Rng};

pub const MAGIC: [u8; 4] = *b"ARGR";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
/// Fixed bytes per record before the float payload.
pub const RECORD_PREFIX_LEN: usize = 8 + 8 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Toxic,
    NonToxic,
    Unlabeled,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Toxic => 0,
            Label::NonToxic => 1,
            Label::Unlabeled => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::Toxic),
            1 => Some(Label::NonToxic),
            2 => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

/// One prompt+response trajectory of final-layer hidden vectors.
///
/// Rows `0..prompt_len` belong to the prompt, the remaining `resp_len` rows
/// to the response.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSequence {
    prompt_len: usize,
    resp_len: usize,
    reps: Mat,
    pub label: Label,
    pub pair_id: u64,
    pub seq_id: u64,
}

impl RepSequence {
    pub fn new(
        prompt_len: usize,
        reps: Mat,
        label: Label,
        pair_id: u64,
        seq_id: u64,
    ) -> Result<Self> {
        if prompt_len == 0 {
            return Err(Error::CorruptRecord("prompt_len must be >= 1".into()));
        }
        if reps.rows() <= prompt_len {
            return Err(Error::CorruptRecord(format!(
                "sequence has {} rows but prompt_len {}; resp_len must be >= 1",
                reps.rows(),
                prompt_len
            )));
        }
        if reps.cols() == 0 {
            return Err(Error::CorruptRecord("dim must be >= 1".into()));
        }
        ensure_finite(reps.as_slice(), "representation")?;
        Ok(Self {
            prompt_len,
            resp_len: reps.rows() - prompt_len,
            reps,
            label,
            pair_id,
            seq_id,
        })
    }

    #[inline]
    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    #[inline]
    pub fn resp_len(&self) -> usize {
        self.resp_len
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.reps.cols()
    }

    #[inline]
    pub fn reps(&self) -> &Mat {
        &self.reps
    }

    /// Position `t` (0-based over prompt+response).
    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        self.reps.row(t)
    }

    pub fn prompt_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.reps.iter_rows().take(self.prompt_len)
    }

    pub fn response_rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.reps.iter_rows().skip(self.prompt_len)
    }

    pub fn last_row(&self) -> &[f32] {
        self.reps.row(self.reps.rows() - 1)
    }

    /// Copy with the response cut to `resp_len` tokens.
    pub fn truncated(&self, resp_len: usize) -> Result<Self> {
        if resp_len == 0 || resp_len > self.resp_len {
            return Err(Error::InvalidConfig(format!(
                "cannot truncate response of {} tokens to {}",
                self.resp_len, resp_len
            )));
        }
        let mut reps = self.reps.clone();
        reps.truncate_rows(self.prompt_len + resp_len);
        Ok(Self {
            resp_len,
            reps,
            ..self.clone()
        })
    }

    /// Same metadata over new rows holding `resp_len` response tokens.
    pub(crate) fn with_reps_truncated(&self, reps: Mat, resp_len: usize) -> Self {
        debug_assert_eq!(reps.rows(), self.prompt_len + resp_len);
        Self {
            resp_len,
            reps,
            ..self.clone()
        }
    }

    fn prompt_bytes_equal(&self, other: &RepSequence) -> bool {
        let n = self.prompt_len * self.dim();
        let a = &self.reps.as_slice()[..n];
        let b = &other.reps.as_slice()[..n];
        a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

/// A non-toxic and a toxic continuation of the same prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPair {
    non_toxic: RepSequence,
    toxic: RepSequence,
}

impl AnnotatedPair {
    pub fn new(non_toxic: RepSequence, toxic: RepSequence) -> Result<Self> {
        if non_toxic.label != Label::NonToxic || toxic.label != Label::Toxic {
            return Err(Error::CorruptRecord(format!(
                "pair {} has labels {:?}/{:?}, expected NonToxic/Toxic",
                non_toxic.pair_id, non_toxic.label, toxic.label
            )));
        }
        if non_toxic.dim() != toxic.dim() {
            return Err(Error::DimensionMismatch {
                expected: non_toxic.dim(),
                got: toxic.dim(),
            });
        }
        if non_toxic.pair_id != toxic.pair_id {
            return Err(Error::CorruptRecord(format!(
                "pair ids differ: {} vs {}",
                non_toxic.pair_id, toxic.pair_id
            )));
        }
        if non_toxic.prompt_len != toxic.prompt_len || !non_toxic.prompt_bytes_equal(&toxic) {
            return Err(Error::PromptMismatch(non_toxic.pair_id));
        }
        Ok(Self { non_toxic, toxic })
    }

    #[inline]
    pub fn non_toxic(&self) -> &RepSequence {
        &self.non_toxic
    }

    #[inline]
    pub fn toxic(&self) -> &RepSequence {
        &self.toxic
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.non_toxic.dim()
    }

    #[inline]
    pub fn pair_id(&self) -> u64 {
        self.non_toxic.pair_id
    }
}

/// Sidecar metadata for a dump file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub model_tag: String,
    pub count_pairs: usize,
    pub created_unix_s: u64,
    pub format_version: u32,
}

/// Path of the JSON manifest that accompanies `dump`.
pub fn manifest_path(dump: &Path) -> PathBuf {
    let mut s = dump.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Exact byte length of a dump holding `pairs`.
pub fn encoded_len(pairs: &[AnnotatedPair]) -> usize {
    HEADER_LEN
        + pairs
            .iter()
            .flat_map(|p| [p.non_toxic(), p.toxic()])
            .map(|s| RECORD_PREFIX_LEN + s.reps().as_slice().len() * 4)
            .sum::<usize>()
}

/// Serializes pairs into the ARGR byte layout.
pub fn encode_dump(dim: usize, pairs: &[AnnotatedPair]) -> Result<Vec<u8>> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dump dim must be > 0".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.dim() != dim) {
        return Err(Error::MixedDimensions(dim, p.dim()));
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} exceeds u32")))
    };
    let mut buf = Vec::with_capacity(encoded_len(pairs));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(pairs.len(), "count_pairs")?.to_le_bytes());
    for seq in pairs.iter().flat_map(|p| [p.non_toxic(), p.toxic()]) {
        buf.extend_from_slice(&seq.pair_id.to_le_bytes());
        buf.extend_from_slice(&seq.seq_id.to_le_bytes());
        buf.push(seq.label.to_byte());
        buf.extend_from_slice(&to_u32(seq.prompt_len, "prompt_len")?.to_le_bytes());
        buf.extend_from_slice(&to_u32(seq.resp_len, "resp_len")?.to_le_bytes());
        for v in seq.reps().as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::CorruptRecord(format!(
                    "truncated while reading {what} at byte {} ({} bytes left, {n} needed)",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

fn decode_record(cur: &mut Cursor<'_>, dim: usize, expected: Label) -> Result<RepSequence> {
    let pair_id = cur.u64("pair_id")?;
    let seq_id = cur.u64("seq_id")?;
    let label_byte = cur.u8("label")?;
    let label = Label::from_byte(label_byte)
        .ok_or_else(|| Error::CorruptRecord(format!("invalid label byte {label_byte}")))?;
    if label != expected {
        return Err(Error::CorruptRecord(format!(
            "pair {pair_id}: expected a {expected:?} record, found {label:?}"
        )));
    }
    let prompt_len = cur.u32("prompt_len")? as usize;
    let resp_len = cur.u32("resp_len")? as usize;
    if prompt_len == 0 || resp_len == 0 {
        return Err(Error::CorruptRecord(format!(
            "pair {pair_id}: prompt_len {prompt_len} / resp_len {resp_len} must both be >= 1"
        )));
    }
    let n_values = (prompt_len + resp_len)
        .checked_mul(dim)
        .ok_or_else(|| Error::CorruptRecord("record size overflows".into()))?;
    let n_bytes = n_values
        .checked_mul(4)
        .ok_or_else(|| Error::CorruptRecord("record size overflows".into()))?;
    let raw = cur.take(n_bytes, "representation payload")?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ensure_finite(&values, "dump payload")?;
    let reps = Mat::new(prompt_len + resp_len, dim, values)?;
    RepSequence::new(prompt_len, reps, label, pair_id, seq_id)
}

/// Parses and validates an ARGR byte buffer. Returns `(dim, pairs)`.
pub fn decode_dump(bytes: &[u8]) -> Result<(usize, Vec<AnnotatedPair>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::CorruptRecord("header dim is 0".into()));
    }
    let count = cur.u32("count_pairs")? as usize;
    // Every record needs at least its prefix plus two rows.
    let min_pair = 2 * (RECORD_PREFIX_LEN + 2 * dim * 4);
    if count.saturating_mul(min_pair) > bytes.len() - HEADER_LEN {
        return Err(Error::CorruptRecord(format!(
            "header claims {count} pairs but only {} payload bytes follow",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let non_toxic = decode_record(&mut cur, dim, Label::NonToxic)?;
        let toxic = decode_record(&mut cur, dim, Label::Toxic)?;
        pairs.push(AnnotatedPair::new(non_toxic, toxic)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptRecord(format!(
            "{} trailing bytes after last record",
            bytes.len() - cur.pos
        )));
    }
    Ok((dim, pairs))
}

/// Writes `pairs` to `path` plus the sidecar manifest.
pub fn write_dump(
    pairs: &[AnnotatedPair],
    dim: usize,
    model_tag: &str,
    path: &Path,
) -> Result<Manifest> {
    let bytes = encode_dump(dim, pairs)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest {
        dim,
        model_tag: model_tag.to_owned(),
        count_pairs: pairs.len(),
        created_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        format_version: FORMAT_VERSION,
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&mpath, json).map_err(|e| Error::io(mpath, e))?;
    Ok(manifest)
}

/// Reads and validates a dump. A missing manifest is reconstructed from the
/// binary header with an empty model tag.
pub fn read_dump(path: &Path) -> Result<(Manifest, Vec<AnnotatedPair>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dim, pairs) = decode_dump(&bytes)?;
    let mpath = manifest_path(path);
    let manifest = match fs::read(&mpath) {
        Ok(raw) => {
            let m: Manifest = serde_json::from_slice(&raw)?;
            if m.format_version != FORMAT_VERSION {
                return Err(Error::UnsupportedVersion(m.format_version));
            }
            if m.dim != dim || m.count_pairs != pairs.len() {
                return Err(Error::CorruptRecord(format!(
                    "manifest (dim {}, {} pairs) disagrees with dump (dim {dim}, {} pairs)",
                    m.dim,
                    m.count_pairs,
                    pairs.len()
                )));
            }
            m
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Manifest {
            dim,
            model_tag: String::new(),
            count_pairs: pairs.len(),
            created_unix_s: 0,
            format_version: FORMAT_VERSION,
        },
        Err(e) => return Err(Error::io(mpath, e)),
    };
    Ok((manifest, pairs))
}

/// Deterministic shuffled train/held-out split.
pub fn split(
    pairs: &[AnnotatedPair],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<AnnotatedPair>, Vec<AnnotatedPair>)> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = pairs.len();
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let train = order[..n_train].iter().map(|&i| pairs[i].clone()).collect();
    let heldout = order[n_train..].iter().map(|&i| pairs[i].clone()).collect();
    Ok((train, heldout))
}
