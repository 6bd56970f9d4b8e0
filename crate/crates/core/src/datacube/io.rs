//! HSC1 cube files, label-map CSVs and patch-set directories.
//!
//! HSC1 layout (all little-endian): `"HSC1"`, version `u16 = 1`, `H`, `W`, `B`
//! as `u32`, `B` wavelengths as `f64`, then `H*W*B` samples as `f32` in
//! `(row, col, band)` order. Samples are widened to `f64` on load and
//! rounded to `f32` on save.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{HyperCube, LabelMap, LabeledPatchSet, WavelengthAxis};
use crate::error::{Error, Result};

pub const HSC1_MAGIC: &[u8; 4] = b"HSC1";
pub const HSC1_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 3 * 4;

pub fn write_cube<W: Write>(cube: &HyperCube, mut w: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(
        HEADER_LEN + 8 * cube.bands() + 4 * cube.data().len(),
    );
    buf.extend_from_slice(HSC1_MAGIC);
    buf.extend_from_slice(&HSC1_VERSION.to_le_bytes());
    for dim in [cube.height(), cube.width(), cube.bands()] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for wl in cube.axis().as_slice() {
        buf.extend_from_slice(&wl.to_le_bytes());
    }
    for v in cube.data() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_cube<R: Read>(mut r: R) -> Result<HyperCube> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != HSC1_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != HSC1_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (h, w, b) = (dim(6), dim(10), dim(14));
    if h == 0 || w == 0 || b == 0 {
        return Err(Error::Format(format!("zero dimension in header {h}x{w}x{b}")));
    }
    let expected = h
        .checked_mul(w)
        .and_then(|hw| hw.checked_mul(b))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN + 8 * b))
        .ok_or_else(|| Error::Format(format!("header dimensions {h}x{w}x{b} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let wl_end = HEADER_LEN + 8 * b;
    let wavelengths = bytes[HEADER_LEN..wl_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let axis = WavelengthAxis::new(wavelengths)?;
    let mut data = Vec::with_capacity(h * w * b);
    for (i, c) in bytes[wl_end..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite sample at flat index {i}")));
        }
        data.push(v as f64);
    }
    HyperCube::new(h, w, data, axis)
}

pub fn save_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cube(cube, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Reads an `H` rows × `W` columns integer CSV without header; `-1` is
/// unlabeled.
pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut raw = Vec::new();
    let mut width = None;
    let mut height = 0;
    for record in reader.records() {
        let record = record?;
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Data(format!(
                    "label map row {height} has {} columns, expected {w}",
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            raw.push(field.parse::<i64>().map_err(|_| {
                Error::Data(format!("label map row {height}: '{field}' is not an integer"))
            })?);
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::EmptyDataset("label map is empty".into()))?;
    LabelMap::from_raw(height, width, &raw)
}

pub fn save_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in map.to_raw().chunks(map.width()) {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn patch_file_name(i: usize) -> String {
    format!("patch_{i:06}.hsc")
}

/// Writes each patch as an `S×S×B` HSC1 file plus `labels.csv` (`index,label`).
pub fn save_patch_set(set: &LabeledPatchSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = set.patch_size();
    for i in 0..set.len() {
        let cube = HyperCube::new(s, s, set.patch(i).to_vec(), set.axis().clone())?;
        save_cube(&cube, dir.join(patch_file_name(i)))?;
    }
    let labels_path = dir.join("labels.csv");
    let mut writer = csv::Writer::from_path(&labels_path)?;
    writer.write_record(["index", "label"])?;
    for (i, l) in set.labels().iter().enumerate() {
        writer.write_record([i.to_string(), l.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(&labels_path, e))
}

pub fn load_patch_set(dir: impl AsRef<Path>) -> Result<LabeledPatchSet> {
    let dir = dir.as_ref();
    let labels_path = dir.join("labels.csv");
    let mut reader = csv::Reader::from_path(&labels_path)?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |k: usize| -> Result<usize> {
            record
                .get(k)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Data(format!("bad labels.csv row {record:?}")))
        };
        entries.push((parse(0)?, parse(1)?));
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(format!("{} lists no patches", labels_path.display())));
    }
    entries.sort_unstable();
    let mut data = Vec::new();
    let mut labels = Vec::with_capacity(entries.len());
    let mut shape: Option<(usize, WavelengthAxis)> = None;
    for (index, label) in entries {
        let cube = load_cube(dir.join(patch_file_name(index)))?;
        if cube.height() != cube.width() {
            return Err(Error::Data(format!("patch {index} is not square")));
        }
        match &shape {
            None => shape = Some((cube.height(), cube.axis().clone())),
            Some((s, axis)) => {
                if *s != cube.height() || axis != cube.axis() {
                    return Err(Error::Data(format!(
                        "patch {index} differs in size or wavelength axis"
                    )));
                }
            }
        }
        data.extend_from_slice(cube.data());
        labels.push(label);
    }
    let (s, axis) = shape.expect("at least one patch");
    LabeledPatchSet::new(s, axis, data, labels)
}
