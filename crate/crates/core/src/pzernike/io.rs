//! Feature CSV and basis-table binary formats.

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;

use crate::camera::ParticleClass;
use crate::error::{Error, Result};
use crate::pzernike::{BasisTable, pair_count};

/// One features row: event id, optional label, magnitudes in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub event_id: u64,
    pub label: Option<ParticleClass>,
    pub features: Vec<f64>,
}

/// Parsed features file.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    /// Rows that carry a label, as (features, +-1) training pairs.
    pub fn labeled(&self) -> Vec<(&[f64], i8)> {
        self.rows
            .iter()
            .filter_map(|r| r.label.map(|l| (r.features.as_slice(), l.sign())))
            .collect()
    }
}

fn label_str(label: Option<ParticleClass>) -> &'static str {
    match label {
        Some(c) => c.name(),
        None => "",
    }
}

/// Write the features CSV: header `event_id,label,f00,...`, floats at
/// 17 significant digits.
pub fn write_features_csv<W: Write>(rows: &[FeatureRow], n_features: usize, mut w: W) -> Result<()> {
    let mut header = String::from("event_id,label");
    for k in 0..n_features {
        header.push_str(&format!(",f{k:02}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    for row in rows {
        if row.features.len() != n_features {
            return Err(Error::DimensionMismatch {
                what: "feature row",
                expected: n_features,
                got: row.features.len(),
            });
        }
        let mut line = format!("{},{}", row.event_id, label_str(row.label));
        for v in &row.features {
            line.push_str(&format!(",{v:.16e}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Read a features CSV produced by [`write_features_csv`].
pub fn read_features_csv<R: BufRead>(r: R) -> Result<FeatureTable> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("features file", "missing header"))??;
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    if columns.len() < 3 || columns[0] != "event_id" || columns[1] != "label" {
        return Err(Error::format("features file", "unexpected header"));
    }
    let n_features = columns.len() - 2;

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != n_features + 2 {
            return Err(Error::format(
                "features file",
                format!("line {}: expected {} fields", lineno + 2, n_features + 2),
            ));
        }
        let event_id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::format("features file", format!("line {}: bad id", lineno + 2)))?;
        let label = match fields[1] {
            "gamma" => Some(ParticleClass::Gamma),
            "hadron" => Some(ParticleClass::Hadron),
            "" => None,
            other => {
                return Err(Error::format(
                    "features file",
                    format!("line {}: unknown label `{other}`", lineno + 2),
                ));
            }
        };
        let features = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::format("features file", format!("line {}: bad value", lineno + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureRow {
            event_id,
            label,
            features,
        });
    }
    Ok(FeatureTable { rows })
}

const BASIS_MAGIC: &[u8; 4] = b"PZRT";

/// Write the basis table: magic "PZRT", u16 version=1, u16 q_flag (0 =
/// float64 payload), u16 n_max, u32 n_pixels, then pixel-major (re, im)
/// float64 pairs, everything little-endian.
pub fn write_basis_binary<W: Write>(table: &BasisTable, mut w: W) -> Result<()> {
    w.write_all(BASIS_MAGIC)?;
    w.write_all(&1u16.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(table.n_max() as u16).to_le_bytes())?;
    w.write_all(&(table.n_pixels() as u32).to_le_bytes())?;
    for e in table.entries() {
        w.write_all(&e.re.to_le_bytes())?;
        w.write_all(&e.im.to_le_bytes())?;
    }
    Ok(())
}

/// Read a basis table written by [`write_basis_binary`].
pub fn read_basis_binary<R: Read>(mut r: R) -> Result<BasisTable> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(Error::format("basis file", "bad magic"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != 1 {
        return Err(Error::format("basis file", format!("unsupported version {version}")));
    }
    r.read_exact(&mut u16buf)?;
    let q_flag = u16::from_le_bytes(u16buf);
    if q_flag != 0 {
        return Err(Error::format("basis file", format!("unsupported q_flag {q_flag}")));
    }
    r.read_exact(&mut u16buf)?;
    let n_max = u16::from_le_bytes(u16buf) as u32;
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_pixels = u32::from_le_bytes(u32buf) as usize;

    let count = n_pixels * pair_count(n_max);
    let mut entries = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut f64buf)?;
        let re = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let im = f64::from_le_bytes(f64buf);
        entries.push(Complex64::new(re, im));
    }
    Ok(BasisTable::from_raw(n_max, n_pixels, entries))
}
