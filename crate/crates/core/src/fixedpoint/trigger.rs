//! Quantized trigger tables and their binary serialization.
//!
//! [`export_trigger`] freezes everything the fixed-point decision pipeline
//! needs — basis table, normalizer (mean and reciprocal std, so the pipeline
//! never divides), support vectors, dual coefficients, bias, gamma and the
//! exponential LUT — into per-table Q formats chosen by an [`ExportProfile`].
//!
//! Range policy: a signed table must keep one headroom bit, i.e. its maximum
//! magnitude must stay below `2^(integer_bits - 1)`; unsigned tables only
//! need plain representability. A table that does not fit fails the export
//! with an error naming it, and the caller picks a wider format.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fixedpoint::{ExpLut, QFormat, from_fixed, to_fixed_checked};
use crate::pzernike::BasisTable;
use crate::svm::SvmModel;

/// Per-table formats for an export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportProfile {
    pub basis: QFormat,
    pub norm_mean: QFormat,
    pub norm_invstd: QFormat,
    pub support_vectors: QFormat,
    pub dual_coeffs: QFormat,
    pub bias: QFormat,
    pub gamma: QFormat,
    pub exp_lut: QFormat,
    pub exp_segments: u32,
}

impl ExportProfile {
    /// Hardware-sized defaults: 32-bit tables on the data path, 64-bit
    /// coefficient ROM so regularization constants up to ~4e6 stay coverable,
    /// 1024-segment uq1.31 exponential LUT.
    ///
    /// Fraction widths follow from the decision error budget: kernel sums
    /// weight every table's quantization error by the l1 norm of the dual
    /// coefficients (easily ~10^3), so 16 fractional bits per table would
    /// leak ~10^-2 into the decision value while these formats keep the
    /// end-to-end deviation near 10^-4.
    pub fn standard() -> Self {
        ExportProfile {
            basis: QFormat::signed(32, 30),
            norm_mean: QFormat::signed(32, 20),
            norm_invstd: QFormat::signed(32, 20),
            support_vectors: QFormat::signed(32, 20),
            dual_coeffs: QFormat::signed(64, 40),
            bias: QFormat::signed(64, 40),
            gamma: QFormat::signed(32, 24),
            exp_lut: QFormat::unsigned(32, 31),
            exp_segments: 1024,
        }
    }

    /// Precision head-room profile: 64-bit Q24.40 everywhere and a denser
    /// LUT, for validating that residual disagreement is quantization, not
    /// logic.
    pub fn wide() -> Self {
        let w = QFormat::signed(64, 40);
        ExportProfile {
            basis: w,
            norm_mean: w,
            norm_invstd: w,
            support_vectors: w,
            dual_coeffs: w,
            bias: w,
            gamma: w,
            exp_lut: QFormat::unsigned(64, 40),
            exp_segments: 4096,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, q) in self.named_formats() {
            q.validate()
                .map_err(|_| Error::invalid(format!("table `{name}`: unusable format {q}")))?;
        }
        if self.exp_lut.signed {
            return Err(Error::invalid("exp_lut format must be unsigned"));
        }
        if self.norm_mean != self.support_vectors {
            return Err(Error::invalid(
                "norm_mean and support_vectors must share a format (subtraction alignment)",
            ));
        }
        if self.exp_segments < 2 {
            return Err(Error::invalid("exp_segments must be >= 2"));
        }
        Ok(())
    }

    fn named_formats(&self) -> [(&'static str, QFormat); 8] {
        [
            ("basis", self.basis),
            ("norm_mean", self.norm_mean),
            ("norm_invstd", self.norm_invstd),
            ("support_vectors", self.support_vectors),
            ("dual_coeffs", self.dual_coeffs),
            ("bias", self.bias),
            ("gamma", self.gamma),
            ("exp_lut", self.exp_lut),
        ]
    }
}

/// One quantized table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxTable {
    pub format: QFormat,
    pub raw: Vec<i64>,
}

impl FxTable {
    pub fn value(&self, i: usize) -> f64 {
        from_fixed(self.raw[i], self.format)
    }
}

/// Everything the fixed-point pipeline consumes, immutable once exported.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerImage {
    /// Basis entries, pixel-major, (re, im) interleaved.
    pub basis: FxTable,
    pub norm_mean: FxTable,
    pub norm_invstd: FxTable,
    pub support_vectors: FxTable,
    pub dual_coeffs: FxTable,
    pub bias: FxTable,
    pub gamma: FxTable,
    pub exp_lut: FxTable,
}

impl TriggerImage {
    pub fn n_features(&self) -> usize {
        self.norm_mean.raw.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.basis.raw.len() / (2 * self.n_features().max(1))
    }

    pub fn n_support_vectors(&self) -> usize {
        self.support_vectors.raw.len() / self.n_features().max(1)
    }

    pub(crate) fn lut(&self) -> ExpLut {
        ExpLut::from_raw(self.exp_lut.format, self.exp_lut.raw.clone())
    }
}

/// Per-table quantization report.
#[derive(Debug, Clone, Default)]
pub struct QuantReport {
    /// (table, max |dequantized - original|, saturation count).
    pub tables: Vec<(&'static str, f64, u64)>,
}

impl QuantReport {
    pub fn total_saturations(&self) -> u64 {
        self.tables.iter().map(|t| t.2).sum()
    }

    pub fn max_error(&self) -> f64 {
        self.tables.iter().fold(0.0, |m, t| m.max(t.1))
    }
}

/// Check the range policy and quantize one table.
fn quantize_table(
    name: &'static str,
    values: impl Iterator<Item = f64> + Clone,
    q: QFormat,
    report: &mut QuantReport,
) -> Result<FxTable> {
    let max_abs = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    let fits = if q.signed {
        // One headroom bit below the sign.
        let bound = ((q.integer_bits() as f64) - 1.0).exp2();
        max_abs < bound
    } else {
        values.clone().all(|v| v >= 0.0) && max_abs <= q.max_value()
    };
    if !fits || !max_abs.is_finite() {
        return Err(Error::ExportRange {
            table: name,
            format: q.to_string(),
            max_abs,
        });
    }
    let mut raw = Vec::new();
    let mut saturations = 0u64;
    let mut max_err = 0.0f64;
    for v in values {
        let (r, saturated) = to_fixed_checked(v, q);
        if saturated {
            saturations += 1;
        }
        max_err = max_err.max((from_fixed(r, q) - v).abs());
        raw.push(r);
    }
    report.tables.push((name, max_err, saturations));
    Ok(FxTable { format: q, raw })
}

/// Quantize a trained model plus its basis table into a trigger image.
///
/// Requires a converged model whose dimensionality matches the basis table.
/// Deterministic: identical inputs produce identical bytes.
pub fn export_trigger(
    model: &SvmModel,
    table: &BasisTable,
    profile: &ExportProfile,
) -> Result<(TriggerImage, QuantReport)> {
    profile.validate()?;
    if !model.converged {
        return Err(Error::invalid("refusing to export a non-converged model"));
    }
    if model.dim() != table.n_pairs() {
        return Err(Error::DimensionMismatch {
            what: "model features vs basis pairs",
            expected: table.n_pairs(),
            got: model.dim(),
        });
    }
    if model.normalizer.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "normalizer",
            expected: model.dim(),
            got: model.normalizer.dim(),
        });
    }

    let mut report = QuantReport::default();

    let basis_values = table
        .entries()
        .iter()
        .flat_map(|e| [e.re, e.im])
        .collect::<Vec<f64>>();
    let basis = quantize_table("basis", basis_values.iter().copied(), profile.basis, &mut report)?;

    let norm_mean = quantize_table(
        "norm_mean",
        model.normalizer.mean().iter().copied(),
        profile.norm_mean,
        &mut report,
    )?;
    let invstd: Vec<f64> = model.normalizer.std().iter().map(|s| 1.0 / s).collect();
    let norm_invstd = quantize_table(
        "norm_invstd",
        invstd.iter().copied(),
        profile.norm_invstd,
        &mut report,
    )?;

    let sv_values: Vec<f64> = model.support_vectors.iter().flatten().copied().collect();
    let support_vectors = quantize_table(
        "support_vectors",
        sv_values.iter().copied(),
        profile.support_vectors,
        &mut report,
    )?;

    let dual_coeffs = quantize_table(
        "dual_coeffs",
        model.dual_coeffs.iter().copied(),
        profile.dual_coeffs,
        &mut report,
    )?;
    let bias = quantize_table(
        "bias",
        std::iter::once(model.bias),
        profile.bias,
        &mut report,
    )?;
    let gamma = quantize_table(
        "gamma",
        std::iter::once(model.gamma),
        profile.gamma,
        &mut report,
    )?;

    let lut = ExpLut::build(profile.exp_lut, profile.exp_segments)?;
    let exp_values: Vec<f64> = lut
        .entries()
        .iter()
        .map(|&r| from_fixed(r, profile.exp_lut))
        .collect();
    let exp_lut = quantize_table("exp_lut", exp_values.iter().copied(), profile.exp_lut, &mut report)?;

    Ok((
        TriggerImage {
            basis,
            norm_mean,
            norm_invstd,
            support_vectors,
            dual_coeffs,
            bias,
            gamma,
            exp_lut,
        },
        report,
    ))
}

const TRIGGER_MAGIC: &[u8; 4] = b"PZTR";

/// Table order in the file; `exp_lut` is the only unsigned table.
const TABLE_ORDER: [&str; 8] = [
    "basis",
    "norm_mean",
    "norm_invstd",
    "support_vectors",
    "dual_coeffs",
    "bias",
    "gamma",
    "exp_lut",
];

fn tables_of(img: &TriggerImage) -> [&FxTable; 8] {
    [
        &img.basis,
        &img.norm_mean,
        &img.norm_invstd,
        &img.support_vectors,
        &img.dual_coeffs,
        &img.bias,
        &img.gamma,
        &img.exp_lut,
    ]
}

/// Write the trigger image: magic "PZTR", u16 version=1, eight per-table
/// descriptors {u8 total_bits, u8 frac_bits, u32 count}, then the raw
/// two's-complement payloads at each declared width, all little-endian.
/// Signedness is positional: every table is signed except the final
/// exponential LUT.
pub fn write_trigger_binary<W: Write>(img: &TriggerImage, mut w: W) -> Result<()> {
    w.write_all(TRIGGER_MAGIC)?;
    w.write_all(&1u16.to_le_bytes())?;
    for t in tables_of(img) {
        w.write_all(&[t.format.total_bits, t.format.frac_bits])?;
        w.write_all(&(t.raw.len() as u32).to_le_bytes())?;
    }
    for t in tables_of(img) {
        let width = t.format.total_bits as usize / 8;
        for &raw in &t.raw {
            w.write_all(&raw.to_le_bytes()[..width])?;
        }
    }
    Ok(())
}

/// Read a trigger image written by [`write_trigger_binary`].
pub fn read_trigger_binary<R: Read>(mut r: R) -> Result<TriggerImage> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRIGGER_MAGIC {
        return Err(Error::format("trigger file", "bad magic"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != 1 {
        return Err(Error::format(
            "trigger file",
            format!("unsupported version {version}"),
        ));
    }

    let mut descriptors = Vec::with_capacity(8);
    for (i, name) in TABLE_ORDER.iter().enumerate() {
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        let mut cnt = [0u8; 4];
        r.read_exact(&mut cnt)?;
        let q = QFormat {
            total_bits: head[0],
            frac_bits: head[1],
            signed: i != 7,
        };
        if !q.total_bits.is_multiple_of(8) {
            return Err(Error::format(
                "trigger file",
                format!("table `{name}`: width {} is not byte-aligned", q.total_bits),
            ));
        }
        q.validate()
            .map_err(|_| Error::format("trigger file", format!("table `{name}`: bad format")))?;
        descriptors.push((q, u32::from_le_bytes(cnt) as usize));
    }

    let mut tables = Vec::with_capacity(8);
    for &(q, count) in &descriptors {
        let width = q.total_bits as usize / 8;
        let mut raw = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf[..width])?;
            let mut value = i64::from_le_bytes({
                let mut full = [0u8; 8];
                full[..width].copy_from_slice(&buf[..width]);
                full
            });
            if q.signed && width < 8 {
                // Sign-extend from the declared width.
                let shift = 64 - 8 * width as u32;
                value = (value << shift) >> shift;
            }
            raw.push(value);
        }
        tables.push(FxTable { format: q, raw });
    }

    let img = TriggerImage {
        exp_lut: tables.pop().unwrap(),
        gamma: tables.pop().unwrap(),
        bias: tables.pop().unwrap(),
        dual_coeffs: tables.pop().unwrap(),
        support_vectors: tables.pop().unwrap(),
        norm_invstd: tables.pop().unwrap(),
        norm_mean: tables.pop().unwrap(),
        basis: tables.pop().unwrap(),
    };

    // Structural consistency.
    let nf = img.n_features();
    if nf == 0
        || !img.basis.raw.len().is_multiple_of(2 * nf)
        || !img.support_vectors.raw.len().is_multiple_of(nf)
        || img.norm_invstd.raw.len() != nf
        || img.bias.raw.len() != 1
        || img.gamma.raw.len() != 1
        || img.exp_lut.raw.is_empty()
    {
        return Err(Error::format("trigger file", "inconsistent table sizes"));
    }
    Ok(img)
}
