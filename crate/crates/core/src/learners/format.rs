//! Versioned binary model container, little-endian throughout.
//!
//! ```text
//! magic "LGPM" | version u16 | model kind u8 | feature kind u8 | mode u8
//! omega f64 | image size u32 | class count u32 | class names (u32 len + UTF-8)...
//! standardizer flag u8 [dim u32 | mean f64 × dim | std f64 × dim]
//! payload
//! ```
//!
//! kNN payload: `k u32 | rows u64 | dim u32 | labels u32 × rows | features f64 × rows·dim`.
//!
//! MLP payload: `seed u64 | layer count u32 | widths u32 × (layers+1) |
//! dropout f64 × (layers−1) | per layer: weights f64 × in·out, biases f64 × out`.

use std::fs;
use std::path::Path;

use super::{DenseLayer, KnnModel, MlpModel, ModelBundle, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind, PipelineMode, Standardizer};

pub const MAGIC: &[u8; 4] = b"LGPM";
pub const FORMAT_VERSION: u16 = 1;

struct Encoder(Vec<u8>);

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("value fits the u32 model field");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.0.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptModel(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt("class name is not UTF-8"))
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptModel(msg.to_string())
}

fn kind_tag(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::LineProfile => 0,
        FeatureKind::Flattened => 1,
    }
}

fn kind_from_tag(tag: u8) -> Result<FeatureKind> {
    match tag {
        0 => Ok(FeatureKind::LineProfile),
        1 => Ok(FeatureKind::Flattened),
        _ => Err(corrupt("unknown feature kind")),
    }
}

fn mode_tag(mode: PipelineMode) -> u8 {
    match mode {
        PipelineMode::Full => 0,
        PipelineMode::NoConvolution => 1,
        PipelineMode::NoShift => 2,
    }
}

fn mode_from_tag(tag: u8) -> Result<PipelineMode> {
    match tag {
        0 => Ok(PipelineMode::Full),
        1 => Ok(PipelineMode::NoConvolution),
        2 => Ok(PipelineMode::NoShift),
        _ => Err(corrupt("unknown pipeline mode")),
    }
}

pub fn encode_model(bundle: &ModelBundle) -> Vec<u8> {
    let mut e = Encoder(Vec::new());
    e.0.extend_from_slice(MAGIC);
    e.u16(FORMAT_VERSION);
    e.u8(match bundle.model {
        TrainedModel::Knn(_) => 0,
        TrainedModel::Mlp(_) => 1,
    });
    e.u8(kind_tag(bundle.features.kind));
    e.u8(mode_tag(bundle.features.mode));
    e.f64(bundle.features.omega);
    e.u32(bundle.image_size);
    e.u32(bundle.class_names.len());
    for name in &bundle.class_names {
        e.str(name);
    }
    let standardizer = match &bundle.model {
        TrainedModel::Mlp(m) => m.standardizer.as_ref(),
        TrainedModel::Knn(_) => None,
    };
    match standardizer {
        Some(s) => {
            e.u8(1);
            e.u32(s.dim());
            e.f64s(&s.mean);
            e.f64s(&s.std);
        }
        None => e.u8(0),
    }
    match &bundle.model {
        TrainedModel::Knn(m) => {
            e.u32(m.k);
            e.u64(m.labels.len() as u64);
            e.u32(m.dim);
            for &l in &m.labels {
                e.u32(l);
            }
            e.f64s(&m.features);
        }
        TrainedModel::Mlp(m) => {
            e.u64(m.seed);
            e.u32(m.layers.len());
            for w in m.widths() {
                e.u32(w);
            }
            e.f64s(&m.dropout);
            for layer in &m.layers {
                e.f64s(&layer.weights);
                e.f64s(&layer.biases);
            }
        }
    }
    e.0
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    let mut d = Decoder { bytes, pos: 0 };
    if d.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let version = d.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::CorruptModel(format!(
            "unsupported format version {version}"
        )));
    }
    let model_tag = d.u8()?;
    let kind = kind_from_tag(d.u8()?)?;
    let mode = mode_from_tag(d.u8()?)?;
    let omega = d.f64()?;
    let image_size = d.u32()?;
    let class_count = d.u32()?;
    let class_names = (0..class_count)
        .map(|_| d.str())
        .collect::<Result<Vec<_>>>()?;
    let standardizer = match d.u8()? {
        0 => None,
        1 => {
            let dim = d.u32()?;
            Some(Standardizer {
                mean: d.f64s(dim)?,
                std: d.f64s(dim)?,
            })
        }
        _ => return Err(corrupt("bad standardizer flag")),
    };
    let model = match model_tag {
        0 => {
            let k = d.u32()?;
            let rows = usize::try_from(d.u64()?).map_err(|_| corrupt("row count overflow"))?;
            let dim = d.u32()?;
            let labels = (0..rows).map(|_| d.u32()).collect::<Result<Vec<_>>>()?;
            if labels.iter().any(|&l| l >= class_count) {
                return Err(corrupt("kNN label out of range"));
            }
            let features = d.f64s(
                rows.checked_mul(dim)
                    .ok_or_else(|| corrupt("size overflow"))?,
            )?;
            TrainedModel::Knn(KnnModel {
                k,
                dim,
                num_classes: class_count,
                feature_kind: kind,
                features,
                labels,
            })
        }
        1 => {
            let seed = d.u64()?;
            let layer_count = d.u32()?;
            let widths = (0..=layer_count)
                .map(|_| d.u32())
                .collect::<Result<Vec<_>>>()?;
            let dropout = d.f64s(layer_count.saturating_sub(1))?;
            let mut layers = Vec::with_capacity(layer_count);
            for w in widths.windows(2) {
                let (inputs, outputs) = (w[0], w[1]);
                let weights = d.f64s(inputs * outputs)?;
                let biases = d.f64s(outputs)?;
                layers.push(DenseLayer {
                    inputs,
                    outputs,
                    weights,
                    biases,
                });
            }
            if layers.is_empty() {
                return Err(corrupt("MLP without layers"));
            }
            TrainedModel::Mlp(MlpModel {
                layers,
                dropout,
                standardizer,
                feature_kind: kind,
                seed,
            })
        }
        _ => return Err(corrupt("unknown model kind")),
    };
    if d.pos != bytes.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(ModelBundle {
        model,
        features: FeatureConfig { kind, omega, mode },
        image_size,
        class_names,
    })
}

/// Writes the model file and returns the number of bytes written.
pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let bytes = encode_model(bundle);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Size of the serialized container in bytes.
pub fn model_size_bytes(bundle: &ModelBundle) -> usize {
    encode_model(bundle).len()
}
