//! Versioned binary checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FANETCKP"
//! version  u32      1
//! spec     u32 length + UTF-8 JSON of the ArchitectureSpec
//! count    u32      number of entries
//! entry    u32 name length, name bytes,
//!          u8 kind (0 parameter, 1 buffer),
//!          u32 rank, rank × u64 extents,
//!          numel × f32 values
//! ```
//!
//! Entries follow registration order, so identical parameters always give
//! identical bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::model::Model;
use super::spec::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::tensor::{numel, Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"FANETCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Parameter = 0,
    Buffer = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchitectureSpec,
    pub entries: Vec<Entry>,
}

fn entries_of<T: Scalar>(model: &Model<T>) -> Vec<Entry> {
    let to_entry = |name: String, kind, t: &Tensor<T>| Entry {
        name,
        kind,
        shape: t.shape().to_vec(),
        values: t.data().iter().map(|v| v.as_f64() as f32).collect(),
    };
    model
        .parameters()
        .into_iter()
        .map(|p| to_entry(p.name, EntryKind::Parameter, &p.tensor))
        .chain(
            model
                .buffers()
                .into_iter()
                .map(|(n, t)| to_entry(n, EntryKind::Buffer, &t)),
        )
        .collect()
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>) -> Self {
        Checkpoint {
            spec: model.spec.clone(),
            entries: entries_of(model),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = serde_json::to_vec(&self.spec).expect("spec serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.kind as u8);
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let spec_len = read_u32(&mut r)? as usize;
        let spec_bytes = take(&mut r, spec_len)?;
        let spec: ArchitectureSpec = serde_json::from_slice(spec_bytes)
            .map_err(|e| Error::Checkpoint(format!("bad spec: {e}")))?;
        let count = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(take(&mut r, name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let kind = match take(&mut r, 1)?[0] {
                0 => EntryKind::Parameter,
                1 => EntryKind::Buffer,
                k => return Err(Error::Checkpoint(format!("entry {name}: unknown kind {k}"))),
            };
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n = numel(&shape);
            let raw = take(&mut r, n.checked_mul(4).ok_or_else(|| {
                Error::Checkpoint(format!("entry {name}: absurd shape {shape:?}"))
            })?)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(Entry { name, kind, shape, values });
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint { spec, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Rebuilds the model and fills every parameter and buffer. The entry set
    /// must match the spec's registry exactly.
    pub fn into_model<T: Scalar>(&self) -> Result<Model<T>> {
        let model = Model::<T>::build(&self.spec, 0)?;
        self.apply(&model)?;
        Ok(model)
    }

    /// Loads the values into an already-built model with the same registry.
    pub fn apply<T: Scalar>(&self, model: &Model<T>) -> Result<()> {
        let targets: Vec<(String, Tensor<T>)> = model
            .parameters()
            .into_iter()
            .map(|p| (p.name, p.tensor))
            .chain(model.buffers())
            .collect();
        if targets.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} entries, model {} expects {}",
                self.entries.len(),
                self.spec.variant,
                targets.len()
            )));
        }
        for (name, tensor) in targets {
            let e = self
                .entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))?;
            if e.shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "entry {name}: shape {:?}, model expects {:?}",
                    e.shape,
                    tensor.shape()
                )));
            }
            *tensor.data_mut() = e.values.iter().map(|&v| T::of(f64::from(v))).collect();
        }
        Ok(())
    }
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    buf.copy_from_slice(take(r, buf.len())?);
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
