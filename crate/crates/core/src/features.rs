//! HMLF feature files: fixed-dimension vectors keyed by sample id (or by
//! label name, for definition features).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"HMLF"
//! version u16 = 1
//! dim     u32
//! count   u64
//! count × { id_len u16, id bytes (UTF-8) }
//! count × dim × f32        row-major values
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HMLF";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

/// One row of a feature file.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRecord<'a> {
    pub sample_id: &'a str,
    pub vector: &'a [f32],
}

impl FeatureRecord<'_> {
    pub fn to_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&x| f64::from(x)).collect()
    }
}

impl FeatureFile {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut f = Self::new(dim);
        for (id, v) in rows {
            f.push(id, &v)?;
        }
        Ok(f)
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f32]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::MalformedHeader(format!(
                "id of {} bytes exceeds the u16 length prefix",
                id.len()
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn records(&self) -> impl Iterator<Item = FeatureRecord<'_>> {
        self.ids.iter().enumerate().map(|(i, id)| FeatureRecord {
            sample_id: id,
            vector: self.row(i),
        })
    }

    /// Row-wise `self ⊕ other`, in `self`'s id order. Both files must hold
    /// exactly the same ids.
    pub fn concat(&self, other: &FeatureFile) -> Result<FeatureFile> {
        check_same_ids(self.ids.iter(), other.ids.iter())?;
        let dim = self.dim + other.dim;
        let mut out = FeatureFile::new(dim);
        let mut row = Vec::with_capacity(dim);
        for (i, id) in self.ids.iter().enumerate() {
            row.clear();
            row.extend_from_slice(self.row(i));
            row.extend_from_slice(other.get(id).expect("ids checked"));
            out.push(id.clone(), &row)?;
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::MalformedHeader(format!("dim {} exceeds u32", self.dim)))?;
        w.write_u32::<LittleEndian>(dim)?;
        w.write_u64::<LittleEndian>(self.ids.len() as u64)?;
        for id in &self.ids {
            w.write_u16::<LittleEndian>(id.len() as u16)?;
            w.write_all(id.as_bytes())?;
        }
        for &v in &self.values {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::MalformedHeader("truncated magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::MalformedHeader(format!("bad magic {magic:?}")));
        }
        let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::MalformedHeader(format!("unsupported version {version}")));
        }
        let dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let count = usize::try_from(count)
            .map_err(|_| Error::MalformedHeader(format!("count {count} too large")))?;

        let mut ids = Vec::with_capacity(count.min(1 << 20));
        let mut index = HashMap::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(truncated)?;
            let id = String::from_utf8(buf)
                .map_err(|_| Error::MalformedHeader(format!("id {i} is not UTF-8")))?;
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
        }
        let n = count
            .checked_mul(dim)
            .ok_or_else(|| Error::MalformedHeader("count × dim overflows".into()))?;
        let mut values = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut values).map_err(truncated)?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::MalformedHeader("trailing bytes after value matrix".into()));
        }
        Ok(Self {
            dim,
            ids,
            values,
            index,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::MalformedHeader("file truncated".into())
}

/// Fail with the symmetric difference when two id collections differ as sets.
pub(crate) fn check_same_ids<'a>(
    a: impl Iterator<Item = &'a String>,
    b: impl Iterator<Item = &'a String>,
) -> Result<()> {
    let a: HashSet<&str> = a.map(String::as_str).collect();
    let b: HashSet<&str> = b.map(String::as_str).collect();
    if a != b {
        let mut diff: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        diff.sort();
        return Err(Error::IdMismatch(diff));
    }
    Ok(())
}
