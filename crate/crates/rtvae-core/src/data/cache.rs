//! Versioned binary cache for encoded datasets.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic          5 bytes   "RTVD1"
//! flags          1 byte    bit 0: labels present
//! reserved       2 bytes   zero
//! fp_len         u32       fingerprint byte length
//! fingerprint    fp_len    ASCII hex
//! n_columns      u32       layout entries
//! per entry:
//!   name_len     u32
//!   name         name_len  UTF-8
//!   kind         1 byte    0 categorical, 1 continuous
//!   offset       u32
//!   width        u32
//! rows           u32
//! cols           u32
//! payload        rows*cols f64, row-major
//! labels         rows bytes (0 normal, 1 anomaly), only when flagged
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ColumnKind, DataError, EncodedDataset, FeatureColumn, Label};
use crate::fsio;
use crate::numerics::Matrix;

const MAGIC: &[u8; 5] = b"RTVD1";

pub fn write_cache(path: impl AsRef<Path>, ds: &EncodedDataset) -> Result<(), DataError> {
    let mut buf = Vec::new();
    encode_cache(&mut buf, ds)?;
    fsio::write_atomic(path.as_ref(), &buf)?;
    Ok(())
}

fn encode_cache(out: &mut impl Write, ds: &EncodedDataset) -> Result<(), DataError> {
    out.write_all(MAGIC)?;
    out.write_all(&[u8::from(ds.labels.is_some()), 0, 0])?;
    write_bytes(out, ds.fingerprint.as_bytes())?;
    write_u32(out, ds.layout.len())?;
    for col in &ds.layout {
        write_bytes(out, col.name.as_bytes())?;
        out.write_all(&[match col.kind {
            ColumnKind::Categorical => 0,
            ColumnKind::Continuous => 1,
        }])?;
        write_u32(out, col.offset)?;
        write_u32(out, col.width)?;
    }
    write_u32(out, ds.x.rows())?;
    write_u32(out, ds.x.cols())?;
    for v in ds.x.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = &ds.labels {
        for l in labels {
            out.write_all(&[u8::from(*l == Label::Anomaly)])?;
        }
    }
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<EncodedDataset, DataError> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_cache(&mut bytes.as_slice())
}

fn decode_cache(input: &mut &[u8]) -> Result<EncodedDataset, DataError> {
    let mut magic = [0u8; 5];
    read_exact(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::Cache(format!(
            "bad magic {:?} (expected {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut header = [0u8; 3];
    read_exact(input, &mut header)?;
    let has_labels = header[0] & 1 == 1;

    let fingerprint = String::from_utf8(read_bytes(input)?)
        .map_err(|_| DataError::Cache("fingerprint is not UTF-8".into()))?;

    let n_columns = read_u32(input)?;
    let mut layout = Vec::with_capacity(n_columns);
    for _ in 0..n_columns {
        let name = String::from_utf8(read_bytes(input)?)
            .map_err(|_| DataError::Cache("column name is not UTF-8".into()))?;
        let mut kind = [0u8; 1];
        read_exact(input, &mut kind)?;
        let kind = match kind[0] {
            0 => ColumnKind::Categorical,
            1 => ColumnKind::Continuous,
            other => return Err(DataError::Cache(format!("unknown column kind {other}"))),
        };
        let offset = read_u32(input)?;
        let width = read_u32(input)?;
        layout.push(FeatureColumn {
            name,
            kind,
            offset,
            width,
        });
    }

    let rows = read_u32(input)?;
    let cols = read_u32(input)?;
    let mut expected_offset = 0;
    for col in &layout {
        if col.offset != expected_offset {
            return Err(DataError::Cache("layout does not tile the row".into()));
        }
        expected_offset += col.width;
    }
    if expected_offset != cols {
        return Err(DataError::Cache(format!(
            "layout covers {expected_offset} of {cols} columns"
        )));
    }

    let mut data = Vec::with_capacity(rows * cols);
    let mut word = [0u8; 8];
    for _ in 0..rows * cols {
        read_exact(input, &mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    let x = Matrix::from_vec(rows, cols, data)?;

    let labels = if has_labels {
        let mut labels = Vec::with_capacity(rows);
        let mut byte = [0u8; 1];
        for _ in 0..rows {
            read_exact(input, &mut byte)?;
            labels.push(if byte[0] == 1 {
                Label::Anomaly
            } else {
                Label::Normal
            });
        }
        Some(labels)
    } else {
        None
    };

    Ok(EncodedDataset {
        x,
        layout,
        labels,
        fingerprint,
    })
}

fn write_u32(out: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).expect("dimension fits in u32");
    out.write_all(&v.to_le_bytes())
}

fn write_bytes(out: &mut impl Write, bytes: &[u8]) -> std::io::Result<()> {
    write_u32(out, bytes.len())?;
    out.write_all(bytes)
}

fn read_exact(input: &mut &[u8], buf: &mut [u8]) -> Result<(), DataError> {
    input
        .read_exact(buf)
        .map_err(|_| DataError::Cache("file is truncated".into()))
}

fn read_u32(input: &mut &[u8]) -> Result<usize, DataError> {
    let mut word = [0u8; 4];
    read_exact(input, &mut word)?;
    Ok(u32::from_le_bytes(word) as usize)
}

fn read_bytes(input: &mut &[u8]) -> Result<Vec<u8>, DataError> {
    let len = read_u32(input)?;
    let mut buf = vec![0u8; len];
    read_exact(input, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset(labels: bool) -> EncodedDataset {
        EncodedDataset {
            x: Matrix::from_vec(2, 3, vec![1.0, 0.0, -0.5, 0.0, 1.0, 2.25]).unwrap(),
            layout: vec![
                FeatureColumn {
                    name: "proto".into(),
                    kind: ColumnKind::Categorical,
                    offset: 0,
                    width: 2,
                },
                FeatureColumn {
                    name: "bytes".into(),
                    kind: ColumnKind::Continuous,
                    offset: 2,
                    width: 1,
                },
            ],
            labels: labels.then(|| vec![Label::Normal, Label::Anomaly]),
            fingerprint: "deadbeef01234567".into(),
        }
    }

    #[test]
    fn round_trip_with_and_without_labels() {
        for labels in [false, true] {
            let ds = sample_dataset(labels);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("data.rtvd");
            write_cache(&path, &ds).unwrap();
            let back = read_cache(&path).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rtvd");
        std::fs::write(&path, b"NOTIT rest of file").unwrap();
        assert!(matches!(read_cache(&path), Err(DataError::Cache(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let ds = sample_dataset(true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.rtvd");
        write_cache(&path, &ds).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_cache(&path), Err(DataError::Cache(_))));
    }
}
