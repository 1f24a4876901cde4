//! Binary datasets, model checkpoints, the live frame stream, and
//! scene-disjoint splitting.
//!
//! Dataset file, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "HOODDS1\0"
//! version    u16      1
//! kind       u16      0 raw_frames, 1 rdi_macro, 2 rdi_micro, 3 paired_rdi
//! n_samples  u64
//! n_dims     u32
//! dims       u32 x n_dims          shape of one sample
//! labels     12 bytes x n_samples  category u8 (0 static, 1 very_static,
//!                                  2 none), ood u8, reserved u16,
//!                                  scene_id u32, frame_index u32
//! payload    f32 x n_samples x prod(dims), row-major
//! crc32      u32 of the payload bytes
//! ```
//!
//! Sample shapes are `[n_rx, n_chirps, n_samples]` for raw frames,
//! `[n_doppler, n_range]` for single RDIs and `[2, n_doppler, n_range]`
//! (macro then micro) for pairs.

mod bytes;
mod checkpoint;
mod stream;

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{PairedRdi, RdiFrame, RdiKind};
use crate::model::{Category, TrainingSample};
use crate::radar::{FrameCube, RadarConfig};
use crate::{HoodError, Result};

pub use bytes::write_atomic;
use bytes::{dim_u32, put_f32s, Cursor};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use stream::{write_stream_frame, write_stream_header, FrameStreamReader};

pub const DATASET_MAGIC: &[u8; 8] = b"HOODDS1\0";
pub const DATASET_VERSION: u16 = 1;
const LABEL_BYTES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    RawFrames,
    RdiMacro,
    RdiMicro,
    PairedRdi,
}

impl DatasetKind {
    pub fn code(self) -> u16 {
        match self {
            DatasetKind::RawFrames => 0,
            DatasetKind::RdiMacro => 1,
            DatasetKind::RdiMicro => 2,
            DatasetKind::PairedRdi => 3,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Some(match code {
            0 => DatasetKind::RawFrames,
            1 => DatasetKind::RdiMacro,
            2 => DatasetKind::RdiMicro,
            3 => DatasetKind::PairedRdi,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::RawFrames => "raw_frames",
            DatasetKind::RdiMacro => "rdi_macro",
            DatasetKind::RdiMicro => "rdi_micro",
            DatasetKind::PairedRdi => "paired_rdi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleLabel {
    /// `None` for samples without a person.
    pub category: Option<Category>,
    pub ood: bool,
    pub scene_id: u32,
    pub frame_index: u32,
}

impl SampleLabel {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(match self.category {
            Some(Category::Static) => 0,
            Some(Category::VeryStatic) => 1,
            None => 2,
        });
        out.push(self.ood as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.scene_id.to_le_bytes());
        out.extend_from_slice(&self.frame_index.to_le_bytes());
    }

    fn decode(c: &mut Cursor<'_>) -> Result<Self> {
        let category = match c.u8("label category")? {
            0 => Some(Category::Static),
            1 => Some(Category::VeryStatic),
            2 => None,
            other => return Err(c.schema(format!("unknown category code {other}"))),
        };
        let ood = match c.u8("label ood flag")? {
            0 => false,
            1 => true,
            other => return Err(c.schema(format!("ood flag must be 0 or 1, got {other}"))),
        };
        c.u16("label reserved")?;
        Ok(Self { category, ood, scene_id: c.u32("label scene id")?, frame_index: c.u32("label frame index")? })
    }
}

/// Equal-shape `f32` samples with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub sample_dims: Vec<usize>,
    pub labels: Vec<SampleLabel>,
    pub data: Vec<f32>,
}

fn index_u32(i: usize) -> Result<u32> {
    dim_u32(i, "frame index")
}

impl Dataset {
    pub fn new(kind: DatasetKind, sample_dims: Vec<usize>, labels: Vec<SampleLabel>, data: Vec<f32>) -> Result<Self> {
        let ds = Self { kind, sample_dims, labels, data };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let per = self.sample_len();
        if self.data.len() != per * self.labels.len() {
            return Err(HoodError::Shape(format!(
                "{} labels of {:?} samples need {} values, have {}",
                self.labels.len(),
                self.sample_dims,
                per * self.labels.len(),
                self.data.len()
            )));
        }
        let rank_ok = match self.kind {
            DatasetKind::RawFrames => self.sample_dims.len() == 3,
            DatasetKind::RdiMacro | DatasetKind::RdiMicro => self.sample_dims.len() == 2,
            DatasetKind::PairedRdi => self.sample_dims.len() == 3 && self.sample_dims[0] == 2,
        };
        if !rank_ok {
            return Err(HoodError::Shape(format!(
                "{} samples cannot have dims {:?}",
                self.kind.as_str(),
                self.sample_dims
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_dims.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    fn expect_kind(&self, kind: DatasetKind) -> Result<()> {
        if self.kind != kind {
            return Err(HoodError::InvalidConfig(format!(
                "expected a {} dataset, got {}",
                kind.as_str(),
                self.kind.as_str()
            )));
        }
        Ok(())
    }

    /// Frames sharing one label template; each label takes its frame's index.
    pub fn from_frames(frames: &[FrameCube], template: SampleLabel) -> Result<Self> {
        let dims = frames.first().map(|f| f.dims().to_vec()).unwrap_or_else(|| vec![0, 0, 0]);
        let mut data = Vec::new();
        let mut labels = Vec::with_capacity(frames.len());
        for f in frames {
            if f.dims().as_slice() != dims.as_slice() {
                return Err(HoodError::Shape(format!(
                    "frame {} has dims {:?}, expected {dims:?}",
                    f.frame_index,
                    f.dims()
                )));
            }
            data.extend_from_slice(&f.data);
            labels.push(SampleLabel { frame_index: index_u32(f.frame_index)?, ..template });
        }
        Self::new(DatasetKind::RawFrames, dims, labels, data)
    }

    pub fn raw_frames<'a>(&'a self, radar: &'a RadarConfig) -> Result<impl Iterator<Item = Result<FrameCube>> + 'a> {
        self.expect_kind(DatasetKind::RawFrames)?;
        let want = [radar.n_rx, radar.n_chirps, radar.n_samples];
        if !self.is_empty() && self.sample_dims != want {
            return Err(HoodError::Shape(format!(
                "recording has frame dims {:?}, radar config expects {want:?}",
                self.sample_dims
            )));
        }
        Ok((0..self.len()).map(move |i| {
            let idx = self.labels[i].frame_index as usize;
            Ok(FrameCube {
                n_rx: want[0],
                n_chirps: want[1],
                n_samples: want[2],
                data: self.sample(i).to_vec(),
                frame_index: idx,
                timestamp: idx as f64 * radar.frame_period,
            })
        }))
    }

    /// Pairs with one label template; each label takes its pair's index.
    pub fn from_pairs(pairs: &[PairedRdi], template: SampleLabel) -> Result<Self> {
        let labels = pairs
            .iter()
            .map(|p| Ok(SampleLabel { frame_index: index_u32(p.frame_index)?, ..template }))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pair_frames(pairs.iter().map(|p| (&p.macro_rdi, &p.micro_rdi)), labels)
    }

    fn from_pair_frames<'a>(
        pairs: impl Iterator<Item = (&'a RdiFrame, &'a RdiFrame)>,
        labels: Vec<SampleLabel>,
    ) -> Result<Self> {
        let mut dims: Option<(usize, usize)> = None;
        let mut data = Vec::new();
        for (m, u) in pairs {
            let d = *dims.get_or_insert(m.dims());
            if m.dims() != d || u.dims() != d {
                return Err(HoodError::Shape(format!("pair dims {:?} / {:?} differ from {d:?}", m.dims(), u.dims())));
            }
            data.extend(m.data.iter().chain(&u.data).map(|&v| v as f32));
        }
        let (h, w) = dims.unwrap_or((0, 0));
        Self::new(DatasetKind::PairedRdi, vec![2, h, w], labels, data)
    }

    /// Macro and micro images of a paired dataset, as `f64` frames.
    pub fn paired_frames(&self) -> Result<(Vec<RdiFrame>, Vec<RdiFrame>)> {
        self.expect_kind(DatasetKind::PairedRdi)?;
        let (h, w) = (self.sample_dims[1], self.sample_dims[2]);
        let mut macros = Vec::with_capacity(self.len());
        let mut micros = Vec::with_capacity(self.len());
        for (i, label) in self.labels.iter().enumerate() {
            let s = self.sample(i);
            let img = |part: &[f32], kind| RdiFrame {
                n_doppler: h,
                n_range: w,
                data: part.iter().map(|&v| f64::from(v)).collect(),
                kind,
                frame_index: label.frame_index as usize,
            };
            macros.push(img(&s[..h * w], RdiKind::Macro));
            micros.push(img(&s[h * w..], RdiKind::Micro));
        }
        Ok((macros, micros))
    }

    /// ID samples with a category, ready for training or calibration.
    pub fn training_samples(&self) -> Result<Vec<TrainingSample>> {
        let (macros, micros) = self.paired_frames()?;
        Ok(macros
            .into_iter()
            .zip(micros)
            .zip(&self.labels)
            .filter_map(|((macro_rdi, micro_rdi), l)| match (l.ood, l.category) {
                (false, Some(category)) => Some(TrainingSample { macro_rdi, micro_rdi, category }),
                _ => None,
            })
            .collect())
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Self {
            kind: self.kind,
            sample_dims: self.sample_dims.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            data,
        }
    }

    /// Concatenates datasets of one kind and sample shape.
    pub fn concat(parts: &[Dataset]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| HoodError::InsufficientData("nothing to concatenate".into()))?;
        let mut out = Self { labels: Vec::new(), data: Vec::new(), ..first.clone() };
        for p in parts {
            if p.kind != first.kind || (p.sample_dims != first.sample_dims && !p.is_empty()) {
                return Err(HoodError::Shape(format!(
                    "cannot concatenate {} {:?} with {} {:?}",
                    p.kind.as_str(),
                    p.sample_dims,
                    first.kind.as_str(),
                    first.sample_dims
                )));
            }
            out.labels.extend_from_slice(&p.labels);
            out.data.extend_from_slice(&p.data);
        }
        Ok(out)
    }

    /// CRC32 of the payload, as a short hex id.
    pub fn content_id(&self) -> String {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        put_f32s(&mut bytes, &self.data);
        format!("ds-{:08x}", crc32fast::hash(&bytes))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = header_bytes(self.kind, self.labels.len() as u64, &self.sample_dims)?;
        out.reserve(self.labels.len() * LABEL_BYTES + self.data.len() * 4 + 4);
        for l in &self.labels {
            l.encode(&mut out);
        }
        let start = out.len();
        put_f32s(&mut out, &self.data);
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor::new(buf, path);
        let (kind, n, dims) = read_header(&mut c)?;
        let n = usize::try_from(n).map_err(|_| c.schema(format!("sample count {n} too large")))?;
        let labels = (0..n).map(|_| SampleLabel::decode(&mut c)).collect::<Result<Vec<_>>>()?;
        let per: usize = dims.iter().product();
        let count = per.checked_mul(n).ok_or_else(|| c.schema("payload size overflows".into()))?;
        let (data, raw) = c.f32s(count, "payload")?;
        c.checksum(raw)?;
        Ok(Self { kind, sample_dims: dims, labels, data })
    }
}

/// Magic, version, kind, sample count and sample dims; the live stream
/// reuses it with a zero count.
fn read_header(c: &mut Cursor<'_>) -> Result<(DatasetKind, u64, Vec<usize>)> {
    c.magic(DATASET_MAGIC)?;
    c.version(DATASET_VERSION)?;
    let code = c.u16("kind")?;
    let kind = DatasetKind::from_code(code).ok_or_else(|| c.schema(format!("unknown dataset kind {code}")))?;
    let n = c.u64("sample count")?;
    let rank = c.u32("rank")? as usize;
    if rank > 8 {
        return Err(c.schema(format!("rank {rank} is implausible")));
    }
    let dims = (0..rank).map(|_| Ok(c.u32("dimension")? as usize)).collect::<Result<_>>()?;
    Ok((kind, n, dims))
}

fn header_bytes(kind: DatasetKind, n_samples: u64, dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(28 + 4 * dims.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&kind.code().to_le_bytes());
    out.extend_from_slice(&n_samples.to_le_bytes());
    out.extend_from_slice(&dim_u32(dims.len(), "rank")?.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&dim_u32(d, "dimension")?.to_le_bytes());
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, &dataset.to_bytes()?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let buf = std::fs::read(path)?;
    Dataset::from_bytes(&buf, path)
}

/// Scene-disjoint split: a `train_fraction` share of the distinct scene ids
/// (rounded) goes to the first dataset.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(HoodError::InvalidConfig(format!("train fraction must be in [0, 1], got {train_fraction}")));
    }
    let scenes: BTreeSet<u32> = dataset.labels.iter().map(|l| l.scene_id).collect();
    if scenes.len() < 2 {
        return Err(HoodError::InsufficientData(format!("splitting needs >= 2 scene ids, found {}", scenes.len())));
    }
    let mut ids: Vec<u32> = scenes.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * ids.len() as f64).round() as usize;
    let train_ids: BTreeSet<u32> = ids[..n_train].iter().copied().collect();
    if n_train == ids.len() {
        log::warn!("train fraction {train_fraction} leaves the test split empty");
    }
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| train_ids.contains(&dataset.labels[i].scene_id));
    Ok((dataset.select(&train), dataset.select(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(scene: u32, i: u32) -> SampleLabel {
        SampleLabel { category: Some(Category::Static), ood: false, scene_id: scene, frame_index: i }
    }

    fn small(n: usize) -> Dataset {
        let labels = (0..n).map(|i| label(i as u32 % 3, i as u32)).collect();
        let data = (0..n * 2 * 4 * 4).map(|i| (i as f32).sin()).collect();
        Dataset::new(DatasetKind::PairedRdi, vec![2, 4, 4], labels, data).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        for n in [0, 1, 3] {
            let ds = small(n);
            let back = Dataset::from_bytes(&ds.to_bytes().unwrap(), Path::new("x")).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn corruption_is_typed() {
        let bytes = small(3).to_bytes().unwrap();
        let p = Path::new("x");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bad, p), Err(HoodError::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Dataset::from_bytes(&bad, p), Err(HoodError::VersionMismatch { found: 9, .. })));
        assert!(matches!(Dataset::from_bytes(&bytes[..bytes.len() - 9], p), Err(HoodError::Truncated { .. })));
        let mut bad = bytes.clone();
        let i = bad.len() - 20;
        bad[i] ^= 0x40;
        assert!(matches!(Dataset::from_bytes(&bad, p), Err(HoodError::Checksum { .. })));
    }

    #[test]
    fn pairs_round_trip_through_frames() {
        let ds = small(3);
        let (m, u) = ds.paired_frames().unwrap();
        let rebuilt = Dataset::from_pair_frames(m.iter().zip(&u), ds.labels.clone()).unwrap();
        assert_eq!(rebuilt, ds);
        assert_eq!(m[2].frame_index, 2);
    }

    #[test]
    fn split_is_scene_disjoint_and_seeded() {
        let labels = (0..56).map(|i| label(i % 28, i)).collect();
        let ds = Dataset::new(DatasetKind::RdiMacro, vec![1, 1], labels, vec![0.0; 56]).unwrap();
        let (a, b) = split_dataset(&ds, 0.5, 4).unwrap();
        let sa: BTreeSet<u32> = a.labels.iter().map(|l| l.scene_id).collect();
        let sb: BTreeSet<u32> = b.labels.iter().map(|l| l.scene_id).collect();
        assert_eq!((sa.len(), sb.len()), (14, 14));
        assert!(sa.is_disjoint(&sb));
        assert_eq!(split_dataset(&ds, 0.5, 4).unwrap(), (a, b));
        let (all, none) = split_dataset(&ds, 1.0, 4).unwrap();
        assert_eq!((all.len(), none.len()), (56, 0));
        let one = Dataset::new(DatasetKind::RdiMacro, vec![1, 1], vec![label(3, 0)], vec![0.0]).unwrap();
        assert!(split_dataset(&one, 0.5, 0).is_err());
    }
}
