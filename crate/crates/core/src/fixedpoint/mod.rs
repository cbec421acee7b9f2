//! Q-format fixed-point arithmetic mirroring an integer-only hardware
//! datapath: round-to-nearest-even quantization, saturating multiply, a
//! non-restoring integer square root and a LUT-based negative exponential.
//!
//! Raw values are carried in `i64` regardless of the declared storage width;
//! the [`QFormat`] says how many bits are meaningful and where the binary
//! point sits. All rounding is round-to-nearest-even and all overflow
//! saturates - wraparound never occurs.
//!
//! # Error budget
//!
//! Per-stage worst-case bounds used by the pipeline agreement check (ulp is
//! `2^-frac` of the named table's format, halves come from round-to-nearest):
//!
//! * quantizing any table entry: <= ulp/2;
//! * moment accumulation: exact in the double-width accumulator, one
//!   rounding (<= ulp/2 of the feature format) at the final shift;
//! * `fx_sqrt`: floor of the exact root, error <= 1 ulp;
//! * `fx_exp_neg`: LUT entry rounding (ulp_lut/2) + linear interpolation
//!   (h^2/8 with h = ln2/segments) + range-reduction drift
//!   (k_max * quantized-ln2 error) + one floor shift (<= 1 output ulp);
//! * every `fx_mul`/format change: <= ulp/2 of the result format.
//!
//! [`pipeline::agreement_report`] instantiates these terms with the actual
//! data magnitudes and asserts the measured float-vs-fixed deviation stays
//! under the summed budget.

pub mod pipeline;
pub mod trigger;

pub use pipeline::{
    ACCUMULATOR_FORMAT, AgreementReport, AgreementRow, FxDecision, PIXEL_FORMAT, agreement_report,
    float_decision, fx_pipeline, quantize_pixels, write_agreement_csv,
};
pub use trigger::{ExportProfile, QuantReport, TriggerImage, export_trigger};

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Fixed-point format: `total_bits` of storage, `frac_bits` of fraction.
///
/// Signed formats spend one of the integer bits on the sign; `Q16.16`
/// denotes a signed 32-bit value with 16 fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QFormat {
    pub total_bits: u8,
    pub frac_bits: u8,
    pub signed: bool,
}

impl QFormat {
    pub const fn signed(total_bits: u8, frac_bits: u8) -> Self {
        QFormat {
            total_bits,
            frac_bits,
            signed: true,
        }
    }

    pub const fn unsigned(total_bits: u8, frac_bits: u8) -> Self {
        QFormat {
            total_bits,
            frac_bits,
            signed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frac_bits == 0 || self.frac_bits >= self.total_bits || self.total_bits > 64 {
            return Err(Error::invalid(format!("unusable format {self}")));
        }
        Ok(())
    }

    /// Value of one least significant bit.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn raw_min(&self) -> i64 {
        if self.signed {
            if self.total_bits == 64 {
                i64::MIN
            } else {
                -(1i64 << (self.total_bits - 1))
            }
        } else {
            0
        }
    }

    pub fn raw_max(&self) -> i64 {
        if self.signed {
            if self.total_bits == 64 {
                i64::MAX
            } else {
                (1i64 << (self.total_bits - 1)) - 1
            }
        } else if self.total_bits == 64 {
            i64::MAX // unsigned 64-bit tables cap at the i64 carrier range
        } else {
            (1i64 << self.total_bits) - 1
        }
    }

    /// Largest representable magnitude, as a real value.
    pub fn max_value(&self) -> f64 {
        self.raw_max() as f64 * self.ulp()
    }

    /// Integer magnitude bits (excluding sign for signed formats).
    pub fn integer_bits(&self) -> u8 {
        self.total_bits - self.frac_bits - if self.signed { 1 } else { 0 }
    }

    /// Parse `q16.16` / `uq1.15` style names (integer.fraction bit counts).
    pub fn parse(text: &str) -> Result<QFormat> {
        let (signed, rest) = if let Some(r) = text.strip_prefix("uq") {
            (false, r)
        } else if let Some(r) = text.strip_prefix('q') {
            (true, r)
        } else {
            return Err(Error::invalid(format!("bad format `{text}`")));
        };
        let (int_part, frac_part) = rest
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("bad format `{text}`")))?;
        let int_bits: u8 = int_part
            .parse()
            .map_err(|_| Error::invalid(format!("bad format `{text}`")))?;
        let frac_bits: u8 = frac_part
            .parse()
            .map_err(|_| Error::invalid(format!("bad format `{text}`")))?;
        let q = QFormat {
            total_bits: int_bits
                .checked_add(frac_bits)
                .ok_or_else(|| Error::invalid(format!("bad format `{text}`")))?,
            frac_bits,
            signed,
        };
        q.validate()?;
        Ok(q)
    }
}

impl std::fmt::Display for QFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}q{}.{}",
            if self.signed { "" } else { "u" },
            self.total_bits - self.frac_bits,
            self.frac_bits
        )
    }
}

/// Right shift with round-to-nearest-even; arithmetic (floor) semantics for
/// the truncated part.
pub(crate) fn rne_shift_right(x: i128, shift: u32) -> i128 {
    if shift == 0 {
        return x;
    }
    let floor = x >> shift;
    let remainder = x - (floor << shift);
    let half = 1i128 << (shift - 1);
    if remainder > half {
        floor + 1
    } else if remainder < half {
        floor
    } else {
        floor + (floor & 1)
    }
}

/// Division with round-to-nearest-even; `den > 0`.
pub(crate) fn rne_div(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let floor = num.div_euclid(den);
    let remainder = num.rem_euclid(den);
    match (2 * remainder).cmp(&den) {
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Equal => floor + (floor & 1),
    }
}

/// Re-scale a raw value between fractional precisions. Widening shifts are
/// exact; narrowing shifts round to nearest even.
pub(crate) fn shift_to_frac(x: i128, from_frac: i32, to_frac: i32) -> i128 {
    if to_frac >= from_frac {
        x << (to_frac - from_frac)
    } else {
        rne_shift_right(x, (from_frac - to_frac) as u32)
    }
}

/// Clamp a wide result into the format's raw range; the flag reports
/// saturation.
pub(crate) fn saturate(x: i128, q: QFormat) -> (i64, bool) {
    let lo = q.raw_min() as i128;
    let hi = q.raw_max() as i128;
    if x < lo {
        (q.raw_min(), true)
    } else if x > hi {
        (q.raw_max(), true)
    } else {
        (x as i64, false)
    }
}

/// Quantize a real value: round-to-nearest-even of `v * 2^frac`, saturating
/// at the format bounds. NaN quantizes to 0.
pub fn to_fixed_checked(v: f64, q: QFormat) -> (i64, bool) {
    if v.is_nan() {
        return (0, true);
    }
    let scaled = v * (q.frac_bits as f64).exp2();
    // Multiplying by a power of two is exact, so this is true RNE of v*2^f;
    // the as-cast saturates infinities at the i128 bounds.
    let rounded = scaled.round_ties_even();
    saturate(rounded as i128, q)
}

/// Quantize, discarding the saturation flag.
pub fn to_fixed(v: f64, q: QFormat) -> i64 {
    to_fixed_checked(v, q).0
}

/// Dequantize a raw value.
pub fn from_fixed(raw: i64, q: QFormat) -> f64 {
    raw as f64 * q.ulp()
}

/// Saturating fixed-point multiply in a shared format, with
/// round-to-nearest-even at the post-shift.
pub fn fx_mul(a: i64, b: i64, q: QFormat) -> i64 {
    fx_mul_checked(a, b, q).0
}

pub fn fx_mul_checked(a: i64, b: i64, q: QFormat) -> (i64, bool) {
    let product = a as i128 * b as i128;
    saturate(rne_shift_right(product, q.frac_bits as u32), q)
}

/// Mixed-format multiply used inside the pipeline: inputs carry `fa`/`fb`
/// fractional bits, the result is produced in `q_out`.
pub(crate) fn fx_mul_mixed(a: i64, fa: u8, b: i64, fb: u8, q_out: QFormat) -> (i64, bool) {
    let product = a as i128 * b as i128;
    let shifted = shift_to_frac(product, fa as i32 + fb as i32, q_out.frac_bits as i32);
    saturate(shifted, q_out)
}

/// Bit-by-bit (non-restoring) integer square root, floor semantics.
pub(crate) fn isqrt_u128(x: u128) -> u128 {
    if x == 0 {
        return 0;
    }
    let mut remainder = x;
    let mut result = 0u128;
    // Highest even bit position at or below the MSB.
    let mut bit = 1u128 << ((127 - x.leading_zeros()) & !1);
    while bit != 0 {
        if remainder >= result + bit {
            remainder -= result + bit;
            result = (result >> 1) + bit;
        } else {
            result >>= 1;
        }
        bit >>= 2;
    }
    result
}

/// Fixed-point square root: floor of the exact root of the double-width
/// radicand `a << frac`, so the result is within 1 ulp below the real root.
/// Negative input is an error.
pub fn fx_sqrt(a: i64, q: QFormat) -> Result<i64> {
    if a < 0 {
        return Err(Error::invalid("fx_sqrt of a negative value"));
    }
    let radicand = (a as u128) << q.frac_bits;
    let root = isqrt_u128(radicand);
    Ok(saturate(root as i128, q).0)
}

/// Negative exponential lookup table: `segments` samples of `e^-r` over
/// `r in [0, ln 2)`, plus the exact endpoint 1/2 implied at the right edge.
#[derive(Debug, Clone)]
pub struct ExpLut {
    format: QFormat,
    entries: Vec<i64>,
}

impl ExpLut {
    /// Build a table in an unsigned format.
    pub fn build(format: QFormat, segments: u32) -> Result<ExpLut> {
        format.validate()?;
        if format.signed {
            return Err(Error::invalid("exp LUT format must be unsigned"));
        }
        if segments < 2 {
            return Err(Error::invalid("exp LUT needs at least 2 segments"));
        }
        let entries = (0..segments)
            .map(|i| {
                let r = i as f64 * std::f64::consts::LN_2 / segments as f64;
                to_fixed((-r).exp(), format)
            })
            .collect();
        Ok(ExpLut { format, entries })
    }

    pub(crate) fn from_raw(format: QFormat, entries: Vec<i64>) -> ExpLut {
        ExpLut { format, entries }
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn segments(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    /// Implied right-edge value: e^-ln2 = 1/2, exact in any format.
    fn endpoint(&self) -> i64 {
        1i64 << (self.format.frac_bits - 1)
    }
}

fn default_lut() -> &'static ExpLut {
    static LUT: OnceLock<ExpLut> = OnceLock::new();
    LUT.get_or_init(|| ExpLut::build(QFormat::unsigned(16, 15), 256).expect("static format"))
}

/// `e^-u` for `u >= 0` in format `q`, result in the same format.
///
/// Range reduction `u = k ln2 + r`, a linear interpolation into the LUT for
/// `e^-r`, then an arithmetic right shift by `k`; underflows to 0 once
/// `k >= frac_bits + 1`. With the default 256-segment Q1.15 table the
/// absolute error stays below `2^-12` for any reasonable output precision.
pub fn fx_exp_neg(u: i64, q: QFormat) -> Result<i64> {
    fx_exp_neg_with(u, q, default_lut())
}

/// `fx_exp_neg` against a caller-provided LUT (the trigger image carries its
/// own quantized table).
pub fn fx_exp_neg_with(u: i64, q: QFormat, lut: &ExpLut) -> Result<i64> {
    if u < 0 {
        return Err(Error::invalid("fx_exp_neg of a negative value"));
    }
    let ln2_raw = to_fixed(std::f64::consts::LN_2, q) as i128;
    debug_assert!(ln2_raw > 0);
    let k = (u as i128 / ln2_raw) as u32;
    if k > q.frac_bits as u32 {
        return Ok(0);
    }
    let r = u as i128 - k as i128 * ln2_raw;
    let segments = lut.segments() as i128;
    let position = r * segments;
    let idx = (position / ln2_raw) as usize;
    let within = position - idx as i128 * ln2_raw;
    let left = lut.entries[idx] as i128;
    let right = if idx + 1 < lut.entries.len() {
        lut.entries[idx + 1] as i128
    } else {
        lut.endpoint() as i128
    };
    // left*ln2 - (left-right)*within, one exact product each, one RNE divide.
    let numerator = left * ln2_raw - (left - right) * within;
    let interp = rne_div(numerator, ln2_raw); // in the LUT's fractional scale

    let net = q.frac_bits as i32 - lut.format.frac_bits as i32 - k as i32;
    let value = if net >= 0 {
        interp << net
    } else {
        interp >> (-net) as u32
    };
    Ok(saturate(value, q).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q16_16: QFormat = QFormat::signed(32, 16);

    #[test]
    fn format_parsing_and_display() {
        assert_eq!(QFormat::parse("q16.16").unwrap(), Q16_16);
        assert_eq!(QFormat::parse("q24.8").unwrap(), QFormat::signed(32, 8));
        assert_eq!(QFormat::parse("q24.40").unwrap(), QFormat::signed(64, 40));
        assert_eq!(QFormat::parse("uq1.15").unwrap(), QFormat::unsigned(16, 15));
        assert_eq!(Q16_16.to_string(), "q16.16");
        assert_eq!(QFormat::unsigned(16, 15).to_string(), "uq1.15");
        assert!(QFormat::parse("garbage").is_err());
        assert!(QFormat::parse("q64.64").is_err());
    }

    #[test]
    fn unit_value_in_q16_16() {
        assert_eq!(to_fixed(1.0, Q16_16), 65536);
        assert_eq!(from_fixed(65536, Q16_16), 1.0);
    }

    #[test]
    fn large_values_saturate() {
        let (raw, saturated) = to_fixed_checked((1u64 << 20) as f64, Q16_16);
        assert_eq!(raw, i32::MAX as i64);
        assert!(saturated);
        let (raw, saturated) = to_fixed_checked(-1e9, Q16_16);
        assert_eq!(raw, i32::MIN as i64);
        assert!(saturated);
        assert_eq!(to_fixed(f64::NAN, Q16_16), 0);
    }

    #[test]
    fn tenth_rounds_to_6554() {
        let raw = to_fixed(0.1, Q16_16);
        assert_eq!(raw, 6554);
        assert!((from_fixed(raw, Q16_16) - 0.1).abs() <= (-17f64).exp2());
    }

    #[test]
    fn ties_round_to_even() {
        // 1.5 raw halves: 3 * 2^-17 is exactly raw 1.5 -> rounds to 2.
        assert_eq!(to_fixed(3.0 / 131072.0, Q16_16), 2);
        // raw 0.5 -> rounds to 0.
        assert_eq!(to_fixed(1.0 / 131072.0, Q16_16), 0);
        // raw -0.5 -> rounds to 0 (even).
        assert_eq!(to_fixed(-1.0 / 131072.0, Q16_16), 0);
    }

    #[test]
    fn multiply_identity_and_exact_dyadics() {
        let one = to_fixed(1.0, Q16_16);
        for v in [-123456i64, -1, 0, 7, 65536, 12345678] {
            assert_eq!(fx_mul(one, v, Q16_16), v);
        }
        let half = to_fixed(0.5, Q16_16);
        assert_eq!(from_fixed(fx_mul(half, half, Q16_16), Q16_16), 0.25);
    }

    #[test]
    fn multiply_saturates_at_extremes() {
        let max = Q16_16.raw_max();
        let (raw, saturated) = fx_mul_checked(max, max, Q16_16);
        assert_eq!(raw, max);
        assert!(saturated);
        let (raw, saturated) = fx_mul_checked(max, Q16_16.raw_min(), Q16_16);
        assert_eq!(raw, Q16_16.raw_min());
        assert!(saturated);
    }

    #[test]
    fn sqrt_of_perfect_squares_is_exact() {
        assert_eq!(fx_sqrt(to_fixed(4.0, Q16_16), Q16_16).unwrap(), to_fixed(2.0, Q16_16));
        assert_eq!(fx_sqrt(0, Q16_16).unwrap(), 0);
        assert_eq!(
            fx_sqrt(to_fixed(2.25, Q16_16), Q16_16).unwrap(),
            to_fixed(1.5, Q16_16)
        );
    }

    #[test]
    fn sqrt_of_two_within_one_ulp() {
        let raw = fx_sqrt(to_fixed(2.0, Q16_16), Q16_16).unwrap();
        let err = (from_fixed(raw, Q16_16) - 2f64.sqrt()).abs();
        assert!(err <= (-16f64).exp2(), "error {err}");
    }

    #[test]
    fn sqrt_rejects_negatives() {
        assert!(fx_sqrt(-1, Q16_16).is_err());
    }

    #[test]
    fn sqrt_bracket_invariant_on_random_inputs() {
        let mut rng = crate::rng::SplitMix64::new(2024);
        for _ in 0..20_000 {
            let a = (rng.next_u64() >> 33) as i64; // non-negative 31-bit raw
            let root = fx_sqrt(a, Q16_16).unwrap() as u128;
            let radicand = (a as u128) << 16;
            assert!(root * root <= radicand);
            assert!((root + 1) * (root + 1) > radicand);
        }
    }

    #[test]
    fn exp_of_zero_is_one() {
        assert_eq!(fx_exp_neg(0, Q16_16).unwrap(), to_fixed(1.0, Q16_16));
    }

    #[test]
    fn exp_of_ln2_is_half() {
        let raw = fx_exp_neg(to_fixed(std::f64::consts::LN_2, Q16_16), Q16_16).unwrap();
        let err = (from_fixed(raw, Q16_16) - 0.5).abs();
        assert!(err <= (-12f64).exp2(), "error {err}");
    }

    #[test]
    fn exp_underflows_to_zero() {
        assert_eq!(fx_exp_neg(to_fixed(40.0, Q16_16), Q16_16).unwrap(), 0);
    }

    #[test]
    fn exp_rejects_negatives() {
        assert!(fx_exp_neg(-1, Q16_16).is_err());
    }

    #[test]
    fn exp_tracks_the_reference_curve() {
        for i in 0..2000 {
            let u = i as f64 * 16.0 / 2000.0;
            let raw_u = to_fixed(u, Q16_16);
            let got = from_fixed(fx_exp_neg(raw_u, Q16_16).unwrap(), Q16_16);
            let expect = (-from_fixed(raw_u, Q16_16)).exp();
            assert!(
                (got - expect).abs() <= (-12f64).exp2(),
                "u={u}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn exp_is_monotone_across_segment_boundaries() {
        let q = Q16_16;
        let ln2 = to_fixed(std::f64::consts::LN_2, q);
        let mut probes = Vec::new();
        // All segment boundaries of the first window plus window edges.
        for seg in 0..=256i64 {
            let r = seg * ln2 / 256;
            for delta in -2..=2i64 {
                let u = r + delta;
                if u >= 0 {
                    probes.push(u);
                }
            }
        }
        for k in 1..=17i64 {
            for delta in -2..=2i64 {
                probes.push(k * ln2 + delta);
            }
        }
        probes.sort_unstable();
        let mut last = i64::MAX;
        for &u in &probes {
            let v = fx_exp_neg(u, q).unwrap();
            assert!(v <= last, "u={u}: {v} > {last}");
            last = v;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn quantization_roundtrips_within_half_ulp(v in -30000.0f64..30000.0) {
            let (raw, saturated) = to_fixed_checked(v, Q16_16);
            prop_assert!(!saturated);
            prop_assert!((from_fixed(raw, Q16_16) - v).abs() <= 0.5 * Q16_16.ulp());
        }

        #[test]
        fn exp_is_monotone_on_random_pairs(a in 0i64..1_500_000, b in 0i64..1_500_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let va = fx_exp_neg(lo, Q16_16).unwrap();
            let vb = fx_exp_neg(hi, Q16_16).unwrap();
            prop_assert!(va >= vb);
        }

        #[test]
        fn mul_matches_reference_within_one_ulp(a in -2_000_000i64..2_000_000, b in -2_000_000i64..2_000_000) {
            let got = from_fixed(fx_mul(a, b, Q16_16), Q16_16);
            let expect = from_fixed(a, Q16_16) * from_fixed(b, Q16_16);
            prop_assert!((got - expect).abs() <= Q16_16.ulp());
        }
    }
}
