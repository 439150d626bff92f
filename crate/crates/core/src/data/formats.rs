use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::rawtensor::{self, RawTensor, TensorData, TensorReader};
use super::Dataset;
use crate::error::{Error, Result};

const CIFAR10_RECORD: usize = 1 + 3072;
const CIFAR100_RECORD: usize = 2 + 3072;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// CIFAR-10 binary batch: 1 label byte + 3072 pixel bytes per record.
    CifarBinary,
    /// CIFAR-100 binary: coarse + fine label bytes, then 3072 pixels. Fine labels are used.
    Cifar100Binary,
    /// IDX image file; labels are read from the sibling `labels-idx1` file.
    Idx,
    /// `SSLT` container holding a sample tensor followed by a label tensor.
    RawTensor,
}

fn pixel(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Map raw label values onto contiguous 1..=K in ascending order.
fn remap_labels(raw: &[i64]) -> (Vec<usize>, Vec<String>) {
    let uniq: BTreeSet<i64> = raw.iter().copied().collect();
    let uniq: Vec<i64> = uniq.into_iter().collect();
    let labels = raw
        .iter()
        .map(|r| uniq.binary_search(r).unwrap() + 1)
        .collect();
    (labels, uniq.iter().map(i64::to_string).collect())
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::CifarBinary => load_cifar(path, CIFAR10_RECORD, 0),
        DataFormat::Cifar100Binary => load_cifar(path, CIFAR100_RECORD, 1),
        DataFormat::Idx => {
            let labels = idx_labels_path(path)?;
            load_idx_pair(path, &labels)
        }
        DataFormat::RawTensor => load_raw(path),
    }
}

/// Load and concatenate several files of one format (e.g. the five CIFAR training batches).
pub fn load_many(paths: &[PathBuf], format: DataFormat) -> Result<Dataset> {
    let parts = paths
        .iter()
        .map(|p| load_dataset(p, format))
        .collect::<Result<Vec<_>>>()?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().unwrap());
    }
    let name = parts
        .iter()
        .map(|d| d.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Dataset::concat(name, &parts)
}

fn load_cifar(path: &Path, record: usize, label_byte: usize) -> Result<Dataset> {
    let bytes = read(path)?;
    if bytes.len() % record != 0 {
        let offset = (bytes.len() / record * record) as u64;
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset,
            msg: format!(
                "truncated record: {} trailing bytes, records are {record} bytes",
                bytes.len() % record
            ),
        });
    }
    let n = bytes.len() / record;
    let header = record - 3072;
    let mut samples = Array2::zeros((n, 3072));
    let mut raw = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        raw.push(rec[label_byte] as i64);
        for (dst, &b) in samples.row_mut(i).iter_mut().zip(&rec[header..]) {
            *dst = pixel(b);
        }
    }
    let (labels, names) = remap_labels(&raw);
    Dataset::new(dataset_name(path), vec![3, 32, 32], samples, labels, names)
}

fn idx_labels_path(images: &Path) -> Result<PathBuf> {
    let name = dataset_name(images);
    if !name.contains("images") {
        return Err(Error::arg(format!(
            "cannot derive IDX label file from {}; name must contain \"images\"",
            images.display()
        )));
    }
    let labels = name.replace("images", "labels").replace("idx3", "idx1");
    Ok(images.with_file_name(labels))
}

#[derive(Debug)]
struct Idx {
    dims: Vec<usize>,
    values: Vec<f64>,
    is_u8: bool,
}

fn parse_idx(path: &Path) -> Result<Idx> {
    let bytes = read(path)?;
    let fmt_err = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 4 {
        return Err(fmt_err(bytes.len(), "truncated IDX magic".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: format!("bad IDX magic {:02x?}", &bytes[..4]),
        });
    }
    let (width, is_u8) = match bytes[2] {
        0x08 | 0x09 => (1, bytes[2] == 0x08),
        0x0B => (2, false),
        0x0C | 0x0D => (4, false),
        0x0E => (8, false),
        t => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                msg: format!("unknown IDX element type 0x{t:02x}"),
            })
        }
    };
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(fmt_err(bytes.len(), "truncated IDX dimension header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let need = header + count * width;
    if bytes.len() < need {
        let complete = (bytes.len() - header) / width;
        return Err(fmt_err(
            header + complete * width,
            format!("truncated IDX payload: {} of {need} bytes", bytes.len()),
        ));
    }
    let payload = &bytes[header..need];
    let values = match bytes[2] {
        0x08 => payload.iter().map(|&b| b as f64).collect(),
        0x09 => payload.iter().map(|&b| b as i8 as f64).collect(),
        0x0B => payload
            .chunks_exact(2)
            .map(|c| i16::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        0x0C => payload
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        0x0D => payload
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(Idx {
        dims,
        values,
        is_u8,
    })
}

/// Load an IDX image file with an explicit label file.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_idx(images)?;
    let lab = parse_idx(labels)?;
    let n = *img
        .dims
        .first()
        .ok_or_else(|| Error::arg("IDX image file has rank 0"))?;
    if lab.dims != [n] {
        return Err(Error::arg(format!(
            "IDX labels have dims {:?}, expected [{n}]",
            lab.dims
        )));
    }
    let mut shape: Vec<usize> = img.dims[1..].to_vec();
    if shape.len() == 2 {
        shape.insert(0, 1);
    }
    let width: usize = shape.iter().product();
    let values: Vec<f64> = if img.is_u8 {
        img.values.iter().map(|&v| pixel(v as u8)).collect()
    } else {
        img.values
    };
    let samples = Array2::from_shape_vec((n, width), values)
        .map_err(|e| Error::arg(format!("IDX reshape: {e}")))?;
    let raw: Vec<i64> = lab.values.iter().map(|&v| v as i64).collect();
    let (labels, names) = remap_labels(&raw);
    Dataset::new(dataset_name(images), shape, samples, labels, names)
}

fn load_raw(path: &Path) -> Result<Dataset> {
    let bytes = read(path)?;
    let mut reader = TensorReader::new(&bytes, path);
    let samples = reader.read_tensor()?;
    let labels = reader.read_tensor()?;
    let n = *samples
        .shape
        .first()
        .ok_or_else(|| Error::arg("raw-tensor sample tensor has rank 0"))?;
    if labels.shape != [n] {
        return Err(Error::arg(format!(
            "raw-tensor labels have shape {:?}, expected [{n}]",
            labels.shape
        )));
    }
    let shape = samples.shape[1..].to_vec();
    let width: usize = shape.iter().product();
    // u8 payloads are pixels and get scaled; float payloads are taken as-is.
    let values: Vec<f64> = match &samples.data {
        TensorData::U8(v) => v.iter().map(|&b| pixel(b)).collect(),
        _ => samples.to_f64(),
    };
    let raw: Vec<i64> = match &labels.data {
        TensorData::I64(v) => v.clone(),
        TensorData::U8(v) => v.iter().map(|&b| b as i64).collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                msg: format!("labels must be integer typed, got {:?}", other.dtype()),
            })
        }
    };
    let matrix = Array2::from_shape_vec((n, width), values)
        .map_err(|e| Error::arg(format!("raw-tensor reshape: {e}")))?;
    let (labels, names) = remap_labels(&raw);
    Dataset::new(dataset_name(path), shape, matrix, labels, names)
}

/// Write a dataset as an `SSLT` file (f64 samples, i64 labels holding category names
/// when numeric, otherwise 0-based category positions).
pub fn write_raw_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut shape = vec![ds.len()];
    shape.extend_from_slice(&ds.sample_shape);
    let samples = RawTensor::f64(shape, ds.samples().iter().copied().collect())?;
    let numeric: Option<Vec<i64>> = ds
        .category_names()
        .iter()
        .map(|n| n.parse::<i64>().ok())
        .collect();
    let raw: Vec<i64> = ds
        .labels()
        .iter()
        .map(|&l| match &numeric {
            Some(v) => v[l - 1],
            None => (l - 1) as i64,
        })
        .collect();
    let labels = RawTensor::new(vec![ds.len()], TensorData::I64(raw))?;
    rawtensor::write_tensors(path, &[&samples, &labels])
}

/// Bring samples of shape `from` to shape `to`.
///
/// Image tensors `[C, H, W]` are center-cropped to the target aspect ratio and
/// nearest-neighbour resized; channels are averaged (to 1) or replicated (from 1).
pub fn adapt_samples(samples: &Array2<f64>, from: &[usize], to: &[usize]) -> Result<Array2<f64>> {
    if from == to {
        return Ok(samples.clone());
    }
    let (&[fc, fh, fw], &[tc, th, tw]) = (from, to) else {
        return Err(Error::arg(format!(
            "cannot adapt sample shape {from:?} to {to:?}"
        )));
    };
    if fc != tc && fc != 1 && tc != 1 {
        return Err(Error::arg(format!("cannot map {fc} channels onto {tc}")));
    }
    // Largest centered window with the target aspect ratio.
    let (ch, cw) = if fh * tw > fw * th {
        ((fw * th).div_ceil(tw).min(fh), fw)
    } else {
        (fh, (fh * tw).div_ceil(th).min(fw))
    };
    let (y0, x0) = ((fh - ch) / 2, (fw - cw) / 2);
    let mut out = Array2::zeros((samples.nrows(), tc * th * tw));
    for (src, mut dst) in samples.rows().into_iter().zip(out.rows_mut()) {
        for c in 0..tc {
            for y in 0..th {
                let sy = y0 + y * ch / th;
                for x in 0..tw {
                    let sx = x0 + x * cw / tw;
                    let at = |ci: usize| src[ci * fh * fw + sy * fw + sx];
                    let v = if fc == tc {
                        at(c)
                    } else if fc == 1 {
                        at(0)
                    } else {
                        (0..fc).map(at).sum::<f64>() / fc as f64
                    };
                    dst[c * th * tw + y * tw + x] = v;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn cifar_records_parse() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for label in [3u8, 7, 3] {
            bytes.push(label);
            bytes.extend(std::iter::repeat_n(255u8, 3072));
        }
        let p = write(dir.path(), "batch.bin", &bytes);
        let ds = load_dataset(&p, DataFormat::CifarBinary).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.sample_shape, vec![3, 32, 32]);
        assert_eq!(ds.labels(), &[1, 2, 1]);
        assert_eq!(ds.category_names(), &["3".to_string(), "7".to_string()]);
        assert!(ds.samples().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cifar_truncation_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = vec![0u8; CIFAR10_RECORD * 2 + 100];
        let p = write(dir.path(), "batch.bin", &bytes);
        match load_dataset(&p, DataFormat::CifarBinary).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset as usize, CIFAR10_RECORD * 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![2u8, 40];
        bytes.extend(vec![0u8; 3072]);
        let p = write(dir.path(), "test.bin", &bytes);
        let ds = load_dataset(&p, DataFormat::Cifar100Binary).unwrap();
        assert_eq!(ds.category_names(), &["40".to_string()]);
    }

    #[test]
    fn idx_bad_magic_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x-images-idx3-ubyte", &[1, 2, 8, 1, 0, 0, 0, 0]);
        let _ = write(dir.path(), "x-labels-idx1-ubyte", &[0, 0, 8, 1, 0, 0, 0, 0]);
        assert!(matches!(
            load_dataset(&p, DataFormat::Idx).unwrap_err(),
            Error::UnsupportedFormat { .. }
        ));
    }

    #[test]
    fn idx_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0u8; 5]);
        let p = write(dir.path(), "t-images-idx3-ubyte", &img);
        match parse_idx(&p).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 16 + 5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn raw_tensor_u8_scaled_float_kept() {
        let dir = tempfile::tempdir().unwrap();
        let s = RawTensor::new(vec![2, 1], TensorData::U8(vec![0, 255])).unwrap();
        let l = RawTensor::new(vec![2], TensorData::I64(vec![5, 9])).unwrap();
        let p = dir.path().join("a.sslt");
        rawtensor::write_tensors(&p, &[&s, &l]).unwrap();
        let ds = load_dataset(&p, DataFormat::RawTensor).unwrap();
        assert_eq!(ds.samples().as_slice().unwrap(), &[-1.0, 1.0]);
        assert_eq!(ds.labels(), &[1, 2]);

        let s = RawTensor::f64(vec![1, 2], vec![3.5, -7.0]).unwrap();
        let l = RawTensor::new(vec![1], TensorData::I64(vec![0])).unwrap();
        rawtensor::write_tensors(&p, &[&s, &l]).unwrap();
        let ds = load_dataset(&p, DataFormat::RawTensor).unwrap();
        assert_eq!(ds.samples().as_slice().unwrap(), &[3.5, -7.0]);
    }

    #[test]
    fn raw_dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = Array2::from_shape_vec((3, 2), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let ds = Dataset::new("d", vec![2], samples, vec![2, 1, 2], vec!["4".into(), "8".into()]).unwrap();
        let p = dir.path().join("d.sslt");
        write_raw_dataset(&p, &ds).unwrap();
        let back = load_dataset(&p, DataFormat::RawTensor).unwrap();
        assert_eq!(back.samples(), ds.samples());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.category_names(), ds.category_names());
    }

    #[test]
    fn adapt_crops_and_resizes() {
        // 1x4x2 image -> 1x2x2: crop the middle 2x2 rows.
        let s = Array2::from_shape_vec((1, 8), (0..8).map(f64::from).collect()).unwrap();
        let out = adapt_samples(&s, &[1, 4, 2], &[1, 2, 2]).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        // channel averaging
        let s = Array2::from_shape_vec((1, 3), vec![0.0, 0.3, 0.6]).unwrap();
        let out = adapt_samples(&s, &[3, 1, 1], &[1, 1, 1]).unwrap();
        assert!((out[[0, 0]] - 0.3).abs() < 1e-12);
        // nearest upsample
        let s = Array2::from_shape_vec((1, 1), vec![0.7]).unwrap();
        let out = adapt_samples(&s, &[1, 1, 1], &[3, 2, 2]).unwrap();
        assert!(out.iter().all(|&v| v == 0.7));
        assert!(adapt_samples(&s, &[1], &[2]).is_err());
    }
}
