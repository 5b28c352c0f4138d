//! Checkpoint files.
//!
//! Layout, all integers `u32` little-endian unless noted:
//!
//! ```text
//! magic        8 bytes  "EX2LCKPT"
//! version      u32      1
//! algorithm    u8       0 erm, 1 groupdro, 2 ex2l
//! epoch        u32
//! val_aa       f64
//! val_wga      f64
//! n_labels     u32
//! n_confounders u32
//! n_models     u32      1, or 2 for ex2l (label model first)
//! per model:
//!   input      3 × u32  channels, height, width
//!   capture    u32      index of the Grad-CAM layer
//!   n_layers   u32
//!   per layer: u8 tag (0 conv, 1 relu, 2 maxpool, 3 flatten, 4 dense)
//!              then 5 × u32 (conv: in, out, kernel, padding, stride;
//!              dense: in, out, 0, 0, 0; others all 0)
//!   n_params   u32
//!   per param: rank u32, dims rank × u32, values as f64 little-endian
//! ```
//!
//! Values are always stored as `f64`, whatever the in-memory precision.

// `as f64` casts are no-ops in double precision but needed for `single-precision`
#![allow(clippy::unnecessary_cast)]

use std::fs;
use std::path::Path;

use crate::data::GroupCoding;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::rng::{self, Stream};
use crate::tensor::NdArray;
use crate::train::{Algorithm, Trainer};
use crate::Scalar;

pub const MAGIC: &[u8; 8] = b"EX2LCKPT";
pub const VERSION: u32 = 1;

/// A selected model with everything needed to rebuild it.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub algorithm: Algorithm,
    pub epoch: usize,
    pub val_aa: Scalar,
    pub val_wga: Scalar,
    pub coding: GroupCoding,
    pub label: Network,
    pub conf: Option<Network>,
}

impl SavedModel {
    /// The trainer's current parameters, tagged with the selected epoch.
    pub fn from_trainer(trainer: &Trainer, epoch: usize, val_aa: Scalar, val_wga: Scalar) -> Self {
        SavedModel {
            algorithm: trainer.config().algorithm,
            epoch,
            val_aa,
            val_wga,
            coding: trainer.coding(),
            label: trainer.label_net().deep_clone(),
            conf: trainer.conf_net().map(Network::deep_clone),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        w.push(match self.algorithm {
            Algorithm::Erm => 0,
            Algorithm::GroupDro => 1,
            Algorithm::Ex2l => 2,
        });
        put_u32(&mut w, self.epoch as u32);
        w.extend_from_slice(&(self.val_aa as f64).to_le_bytes());
        w.extend_from_slice(&(self.val_wga as f64).to_le_bytes());
        put_u32(&mut w, self.coding.n_labels as u32);
        put_u32(&mut w, self.coding.n_confounders as u32);
        let models: Vec<&Network> = std::iter::once(&self.label)
            .chain(self.conf.as_ref())
            .collect();
        put_u32(&mut w, models.len() as u32);
        for net in models {
            write_network(&mut w, net);
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format(0, "not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                8,
                format!("checkpoint version {version}, expected {VERSION}"),
            ));
        }
        let at = r.pos as u64;
        let algorithm = match r.take(1)?[0] {
            0 => Algorithm::Erm,
            1 => Algorithm::GroupDro,
            2 => Algorithm::Ex2l,
            t => return Err(Error::format(at, format!("unknown algorithm tag {t}"))),
        };
        let epoch = r.u32()? as usize;
        let val_aa = r.f64()? as Scalar;
        let val_wga = r.f64()? as Scalar;
        let coding = GroupCoding {
            n_labels: r.u32()? as usize,
            n_confounders: r.u32()? as usize,
        };
        let at = r.pos as u64;
        let n_models = r.u32()?;
        if !(1..=2).contains(&n_models) {
            return Err(Error::format(
                at,
                format!("{n_models} models in checkpoint, expected 1 or 2"),
            ));
        }
        let label = read_network(&mut r)?;
        let conf = if n_models == 2 {
            Some(read_network(&mut r)?)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                "trailing bytes after checkpoint",
            ));
        }
        Ok(SavedModel {
            algorithm,
            epoch,
            val_aa,
            val_wga,
            coding,
            label,
            conf,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn write_network(w: &mut Vec<u8>, net: &Network) {
    for d in net.input_shape() {
        put_u32(w, d as u32);
    }
    put_u32(w, net.capture_layer() as u32);
    put_u32(w, net.layers().len() as u32);
    for layer in net.layers() {
        let (tag, f) = match *layer {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                padding,
                stride,
            } => (0u8, [in_ch, out_ch, kernel, padding, stride]),
            LayerSpec::Relu => (1, [0; 5]),
            LayerSpec::MaxPool2 => (2, [0; 5]),
            LayerSpec::Flatten => (3, [0; 5]),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (4, [in_features, out_features, 0, 0, 0]),
        };
        w.push(tag);
        for v in f {
            put_u32(w, v as u32);
        }
    }
    let values = net.snapshot();
    put_u32(w, values.len() as u32);
    for v in values {
        put_u32(w, v.rank() as u32);
        for &d in v.shape() {
            put_u32(w, d as u32);
        }
        for &x in v.data() {
            w.extend_from_slice(&(x as f64).to_le_bytes());
        }
    }
}

fn read_network(r: &mut Reader<'_>) -> Result<Network> {
    let input = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let capture = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let at = r.pos as u64;
        let tag = r.take(1)?[0];
        let mut f = [0usize; 5];
        for v in &mut f {
            *v = r.u32()? as usize;
        }
        layers.push(match tag {
            0 => LayerSpec::Conv2d {
                in_ch: f[0],
                out_ch: f[1],
                kernel: f[2],
                padding: f[3],
                stride: f[4],
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool2,
            3 => LayerSpec::Flatten,
            4 => LayerSpec::Dense {
                in_features: f[0],
                out_features: f[1],
            },
            t => return Err(Error::format(at, format!("unknown layer tag {t}"))),
        });
    }
    let at = r.pos as u64;
    // initial values are overwritten by the stored ones below
    let net = Network::new(
        input,
        layers,
        capture,
        &mut rng::stream(0, Stream::LabelInit),
    )
    .map_err(|e| Error::format(at, format!("invalid architecture: {e}")))?;
    let n_params = r.u32()? as usize;
    let mut values = Vec::with_capacity(n_params.min(1024));
    for _ in 0..n_params {
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(
            len.checked_mul(8)
                .ok_or_else(|| Error::format(r.pos as u64, "parameter too large"))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as Scalar)
            .collect();
        values.push(NdArray::new(shape, data)?);
    }
    let at = r.pos as u64;
    net.load_snapshot(&values)
        .map_err(|e| Error::format(at, format!("parameters do not fit the architecture: {e}")))?;
    Ok(net)
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
            .ok_or_else(|| {
                Error::format(
                    self.bytes.len() as u64,
                    format!("truncated: need {n} bytes at offset {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HeadKind;
    use crate::train::TrainConfig;

    fn saved(algorithm: Algorithm) -> SavedModel {
        let cfg = TrainConfig {
            algorithm,
            ..TrainConfig::default()
        };
        let coding = GroupCoding {
            n_labels: 2,
            n_confounders: 3,
        };
        let t = Trainer::new(cfg, [3, 8, 8], coding).unwrap();
        SavedModel::from_trainer(&t, 7, 0.8, 0.6)
    }

    #[test]
    fn round_trip() {
        for a in [Algorithm::Erm, Algorithm::Ex2l] {
            let s = saved(a);
            let back = SavedModel::from_bytes(&s.to_bytes()).unwrap();
            assert_eq!(back.algorithm, a);
            assert_eq!((back.epoch, back.val_aa, back.val_wga), (7, 0.8, 0.6));
            assert_eq!(back.coding, s.coding);
            assert_eq!(back.label.snapshot(), s.label.snapshot());
            assert_eq!(back.label.layers(), s.label.layers());
            assert_eq!(back.conf.is_some(), a == Algorithm::Ex2l);
            if let Some(c) = &back.conf {
                assert_eq!(c.head(), HeadKind::Multiclass(3));
                assert_eq!(c.snapshot(), s.conf.as_ref().unwrap().snapshot());
            }
        }
    }

    #[test]
    fn corrupt_files() {
        let b = saved(Algorithm::Erm).to_bytes();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            SavedModel::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let cut = &b[..b.len() - 3];
        assert!(matches!(
            SavedModel::from_bytes(cut),
            Err(Error::Format { .. })
        ));
        let mut v2 = b.clone();
        v2[8] = 2;
        assert!(matches!(
            SavedModel::from_bytes(&v2),
            Err(Error::Format { offset: 8, .. })
        ));
        let mut extra = b;
        extra.push(0);
        assert!(SavedModel::from_bytes(&extra).is_err());
    }
}
