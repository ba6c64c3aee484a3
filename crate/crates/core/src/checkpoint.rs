//! Binary model checkpoints.
//!
//! Layout: the magic bytes `CSMO`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every parameter
//! array as row-major little-endian `f32` in header order. Parameters are
//! kept at `f32` precision during training, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig, BackboneModel};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::text::Vocab;
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 4] = b"CSMO";
pub const FORMAT_VERSION: u32 = 1;

/// How a checkpoint was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Seconds since the Unix epoch at save time.
    pub created_unix: u64,
    pub train: Option<TrainConfig>,
    pub epochs_done: usize,
    pub steps: u64,
    /// Source corpus description, free-form.
    pub corpus: Option<String>,
}

impl Provenance {
    pub fn now() -> Self {
        Provenance {
            created_unix: unix_now(),
            ..Provenance::default()
        }
    }

    /// Latent values to decode from: 1 for a model trained without latents.
    pub fn generation_latents(&self, vocab: &Vocab) -> usize {
        match &self.train {
            Some(t) if t.mode == crate::trainer::TrainMode::NoLatent => 1,
            _ => vocab.num_latents(),
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    vocab: Vocab,
    backbone: BackboneConfig,
    provenance: Provenance,
    arrays: Vec<ArrayMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: BackboneModel,
    pub provenance: Provenance,
}

/// Serializes `model`. Values are rounded to `f32`.
pub fn write_checkpoint<W: Write>(mut out: W, model: &BackboneModel, provenance: &Provenance) -> Result<()> {
    let header = Header {
        vocab: model.vocab().clone(),
        backbone: model.config().clone(),
        provenance: provenance.clone(),
        arrays: model
            .params()
            .iter()
            .map(|(name, t)| ArrayMeta {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, t) in model.params().iter() {
        let mut buf = Vec::with_capacity(t.len() * 4);
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    read_exact_or(&mut input, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut len = [0u8; 8];
    read_exact_or(&mut input, &mut len, "header length")?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Checkpoint("header length overflows".into()))?;
    let mut json = vec![0u8; len];
    read_exact_or(&mut input, &mut json, "header")?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut params = ParamStore::new();
    for meta in &header.arrays {
        let n: usize = meta.shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        read_exact_or(&mut input, &mut raw, &format!("array {}", meta.name))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        params.add(meta.name.clone(), Tensor::new(meta.shape.clone(), data)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last array".into()));
    }
    let model = BackboneModel::from_params(header.backbone, header.vocab, params)?;
    Ok(Checkpoint {
        model,
        provenance: header.provenance,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &BackboneModel, provenance: &Provenance) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, provenance)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
