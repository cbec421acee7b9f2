//! The end-to-end fixed-point decision path and its float-reference
//! agreement harness.
//!
//! [`fx_pipeline`] is straight-line integer arithmetic over a quantized
//! image: multiply-accumulate moments in a double-width accumulator, feature
//! magnitudes through the integer square root, normalization as
//! `(x - mean) * inv_std`, then the kernel sum
//! `sum_i a_i y_i * exp(-gamma ||x - sv_i||^2) + b`. Evaluation order is
//! fixed (pixels, features, support vectors all ascending), so identical
//! bytes in give identical bytes out on any platform. Accumulator saturation
//! anywhere sets a sticky flag in the result instead of silently wrapping.

use std::io::Write;

use crate::camera::CherenkovImage;
use crate::error::{Error, Result};
use crate::fixedpoint::trigger::TriggerImage;
use crate::fixedpoint::{
    QFormat, from_fixed, fx_exp_neg_with, fx_mul_mixed, isqrt_u128, saturate, shift_to_frac,
    to_fixed_checked,
};
use crate::pzernike::{BasisTable, feature_vector, moments};
use crate::svm::SvmModel;

/// Pixel intensities enter the trigger as signed Q16.16.
pub const PIXEL_FORMAT: QFormat = QFormat::signed(32, 16);
/// Wide accumulator: signed 64-bit Q32.32.
pub const ACCUMULATOR_FORMAT: QFormat = QFormat::signed(64, 32);

/// Quantize a cleaned image for the trigger. The flag reports pixel
/// saturation.
pub fn quantize_pixels(pixels: &[f64]) -> (Vec<i64>, bool) {
    let mut saturated = false;
    let raw = pixels
        .iter()
        .map(|&v| {
            let (r, s) = to_fixed_checked(v, PIXEL_FORMAT);
            saturated |= s;
            r
        })
        .collect();
    (raw, saturated)
}

/// Fixed-point trigger decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxDecision {
    /// +1 (gamma) or -1 (hadron); the sign of the decision value with 0
    /// mapping to +1, matching the float pipeline's tie-break.
    pub label: i8,
    /// Raw decision value in [`ACCUMULATOR_FORMAT`].
    pub decision_raw: i64,
    /// Dequantized decision value, for reporting.
    pub decision: f64,
    /// True when any stage saturated.
    pub saturated: bool,
}

/// Run the fixed-point decision pipeline on a quantized image.
pub fn fx_pipeline(trigger: &TriggerImage, pixels: &[i64]) -> Result<FxDecision> {
    let n_features = trigger.n_features();
    let n_pixels = trigger.n_pixels();
    if pixels.len() != n_pixels {
        return Err(Error::DimensionMismatch {
            what: "trigger pixels",
            expected: n_pixels,
            got: pixels.len(),
        });
    }

    let f_px = PIXEL_FORMAT.frac_bits as i32;
    let f_b = trigger.basis.format.frac_bits as i32;
    let feat_q = trigger.support_vectors.format;
    let f_feat = feat_q.frac_bits as i32;
    let f_is = trigger.norm_invstd.format.frac_bits;
    let acc_q = ACCUMULATOR_FORMAT;
    let gamma_q = trigger.gamma.format;
    let f_dual = trigger.dual_coeffs.format.frac_bits as i32;
    let mut sticky = false;

    // Moments: exact MAC at f_px + f_b fractional bits, one rounding into
    // the feature format.
    let mut normalized = vec![0i64; n_features];
    for k in 0..n_features {
        let mut acc_re: i128 = 0;
        let mut acc_im: i128 = 0;
        for (p, &px) in pixels.iter().enumerate() {
            let base = 2 * (p * n_features + k);
            acc_re += px as i128 * trigger.basis.raw[base] as i128;
            acc_im += px as i128 * trigger.basis.raw[base + 1] as i128;
        }
        let (re, s1) = saturate(shift_to_frac(acc_re, f_px + f_b, f_feat), feat_q);
        let (im, s2) = saturate(shift_to_frac(acc_im, f_px + f_b, f_feat), feat_q);
        sticky |= s1 | s2;

        // Magnitude: radicand is re^2 + im^2 at 2*f_feat fractional bits, so
        // the integer root lands back on f_feat.
        let radicand = (re as i128 * re as i128 + im as i128 * im as i128) as u128;
        let (feature, s3) = saturate(isqrt_u128(radicand) as i128, feat_q);
        sticky |= s3;

        // Normalization: (feature - mean) * inv_std, rounded into the
        // feature format.
        let centered = feature as i128 - trigger.norm_mean.raw[k] as i128;
        let product = centered * trigger.norm_invstd.raw[k] as i128;
        let (x, s4) = saturate(shift_to_frac(product, f_feat + f_is as i32, f_feat), feat_q);
        sticky |= s4;
        normalized[k] = x;
    }

    // Kernel sum accumulated at f_dual + f_gamma fractional bits.
    let f_term = f_dual + gamma_q.frac_bits as i32;
    let mut decision_acc: i128 = 0;
    let n_sv = trigger.n_support_vectors();
    for i in 0..n_sv {
        let sv = &trigger.support_vectors.raw[i * n_features..(i + 1) * n_features];
        let mut d2: i128 = 0;
        for k in 0..n_features {
            let diff = normalized[k] as i128 - sv[k] as i128;
            d2 += diff * diff;
        }
        let (d2_acc, s5) = saturate(
            shift_to_frac(d2, 2 * f_feat, acc_q.frac_bits as i32),
            acc_q,
        );
        sticky |= s5;

        // gamma * d^2 in the wide accumulator, then into the exponential's
        // input format (the gamma table format).
        let (u, s6) = fx_mul_mixed(
            trigger.gamma.raw[0],
            gamma_q.frac_bits,
            d2_acc,
            acc_q.frac_bits,
            gamma_q,
        );
        sticky |= s6;
        let e = fx_exp_neg_with(u.max(0), gamma_q, &trigger.lut())?;

        decision_acc += trigger.dual_coeffs.raw[i] as i128 * e as i128;
    }
    decision_acc += shift_to_frac(
        trigger.bias.raw[0] as i128,
        trigger.bias.format.frac_bits as i32,
        f_term,
    );

    let (decision_raw, s7) = saturate(
        shift_to_frac(decision_acc, f_term, acc_q.frac_bits as i32),
        acc_q,
    );
    sticky |= s7;

    Ok(FxDecision {
        label: if decision_raw >= 0 { 1 } else { -1 },
        decision_raw,
        decision: from_fixed(decision_raw, acc_q),
        saturated: sticky,
    })
}

/// Float reference decision for a cleaned image: moments -> magnitudes ->
/// normalizer -> kernel sum, all in f64.
pub fn float_decision(model: &SvmModel, table: &BasisTable, image: &CherenkovImage) -> Result<f64> {
    let features = feature_vector(&moments(image, table)?);
    model.decision_value_raw(&features)
}

/// One event in the agreement report.
#[derive(Debug, Clone)]
pub struct AgreementRow {
    pub event_id: u64,
    pub float_decision: f64,
    pub fx_decision: f64,
    pub abs_err: f64,
    pub label_float: i8,
    pub label_fx: i8,
    pub saturated: bool,
}

/// Float-vs-fixed comparison over a set of events.
#[derive(Debug, Clone, Default)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
    pub label_mismatches: u64,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    pub saturated_events: u64,
    /// Analytic worst-case |fx - float| bound, instantiated with the
    /// magnitudes measured on this data (see the module error-budget note).
    pub error_budget: f64,
}

impl AgreementReport {
    pub fn agreement(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        1.0 - self.label_mismatches as f64 / self.rows.len() as f64
    }
}

/// Run both pipelines on cleaned events and tabulate the deviations.
pub fn agreement_report(
    model: &SvmModel,
    table: &BasisTable,
    trigger: &TriggerImage,
    events: &[CherenkovImage],
) -> Result<AgreementReport> {
    let mut report = AgreementReport::default();
    let mut err_sum = 0.0;

    // Data magnitudes feeding the analytic budget.
    let mut max_intensity_l1 = 0.0f64;
    let mut max_centered = 0.0f64;
    let mut max_dist_l1 = 0.0f64;
    let mut max_d2 = 0.0f64;

    for image in events {
        let ms = moments(image, table)?;
        let features = feature_vector(&ms);
        let normalized = model.normalizer.apply(&features)?;
        let float_dec = model.decision_value(&normalized)?;

        max_intensity_l1 = max_intensity_l1.max(image.pixels.iter().map(|v| v.abs()).sum());
        for (k, f) in features.iter().enumerate() {
            max_centered = max_centered.max((f - model.normalizer.mean()[k]).abs());
        }
        for sv in &model.support_vectors {
            let l1: f64 = normalized.iter().zip(sv).map(|(a, b)| (a - b).abs()).sum();
            let d2: f64 = normalized
                .iter()
                .zip(sv)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            max_dist_l1 = max_dist_l1.max(l1);
            max_d2 = max_d2.max(d2);
        }

        let (pixels, px_saturated) = quantize_pixels(&image.pixels);
        let fx = fx_pipeline(trigger, &pixels)?;
        let saturated = fx.saturated || px_saturated;

        let label_float: i8 = if float_dec >= 0.0 { 1 } else { -1 };
        let abs_err = (float_dec - fx.decision).abs();
        if label_float != fx.label {
            report.label_mismatches += 1;
        }
        if saturated {
            report.saturated_events += 1;
        }
        report.max_abs_err = report.max_abs_err.max(abs_err);
        err_sum += abs_err;
        report.rows.push(AgreementRow {
            event_id: image.event_id,
            float_decision: float_dec,
            fx_decision: fx.decision,
            abs_err,
            label_float,
            label_fx: fx.label,
            saturated,
        });
    }
    if !report.rows.is_empty() {
        report.mean_abs_err = err_sum / report.rows.len() as f64;
    }

    report.error_budget = decision_error_budget(
        model,
        table,
        trigger,
        max_intensity_l1,
        max_centered,
        max_dist_l1,
        max_d2,
    );
    Ok(report)
}

/// Sum of the per-stage worst-case bounds from the module error-budget note,
/// instantiated with measured data magnitudes.
#[allow(clippy::too_many_arguments)]
fn decision_error_budget(
    model: &SvmModel,
    table: &BasisTable,
    trigger: &TriggerImage,
    max_intensity_l1: f64,
    max_centered: f64,
    max_dist_l1: f64,
    max_d2: f64,
) -> f64 {
    let u_px = PIXEL_FORMAT.ulp();
    let u_b = trigger.basis.format.ulp();
    let u_feat = trigger.support_vectors.format.ulp();
    let u_mean = trigger.norm_mean.format.ulp();
    let u_is = trigger.norm_invstd.format.ulp();
    let u_acc = ACCUMULATOR_FORMAT.ulp();
    let u_gamma = trigger.gamma.format.ulp();
    let u_dual = trigger.dual_coeffs.format.ulp();
    let u_bias = trigger.bias.format.ulp();
    let u_lut = trigger.exp_lut.format.ulp();
    let n_features = trigger.n_features() as f64;

    // Largest per-feature column weight of the basis table.
    let mut basis_col_l1 = 0.0f64;
    for k in 0..table.n_pairs() {
        let mut col = 0.0;
        for p in 0..table.n_pixels() {
            col += table.pixel_entries(p)[k].norm();
        }
        basis_col_l1 = basis_col_l1.max(col);
    }
    let invstd_max = model
        .normalizer
        .std()
        .iter()
        .fold(0.0f64, |m, s| m.max(1.0 / s));
    let dual_l1: f64 = model.dual_coeffs.iter().map(|d| d.abs()).sum();

    // Moment component, magnitude, normalized feature.
    let d_moment = max_intensity_l1 * u_b / 2.0 + basis_col_l1 * u_px / 2.0 + u_feat / 2.0;
    let d_feature = std::f64::consts::SQRT_2 * d_moment + u_feat;
    let d_norm = (d_feature + u_mean / 2.0) * invstd_max
        + (max_centered + d_feature) * u_is / 2.0
        + u_feat / 2.0;
    let d_vs_sv = d_norm + u_feat / 2.0;
    // Squared distance, exponential argument, kernel value.
    let d_d2 = 2.0 * max_dist_l1 * d_vs_sv + n_features * d_vs_sv * d_vs_sv + u_acc / 2.0;
    let d_u = model.gamma * d_d2 + max_d2 * u_gamma / 2.0 + u_gamma / 2.0;
    let segments = trigger.exp_lut.raw.len() as f64;
    let h = std::f64::consts::LN_2 / segments;
    let k_max = trigger.gamma.format.frac_bits as f64 + 1.0;
    let d_exp = d_u + u_lut / 2.0 + h * h / 8.0 + k_max * u_gamma / 2.0 + u_gamma;
    // Decision sum.
    dual_l1 * d_exp
        + model.support_vectors.len() as f64 * u_dual / 2.0
        + u_bias / 2.0
        + u_acc
}

/// Write the agreement CSV:
/// `event_id,float_decision,fx_decision,abs_err,label_float,label_fx,saturated`.
pub fn write_agreement_csv<W: Write>(report: &AgreementReport, mut w: W) -> Result<()> {
    w.write_all(b"event_id,float_decision,fx_decision,abs_err,label_float,label_fx,saturated\n")?;
    for row in &report.rows {
        w.write_all(
            format!(
                "{},{:.16e},{:.16e},{:.16e},{},{},{}\n",
                row.event_id,
                row.float_decision,
                row.fx_decision,
                row.abs_err,
                row.label_float,
                row.label_fx,
                u8::from(row.saturated)
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{GeneratorParams, ParticleClass, build_geometry, clean_image, generate_event, map_to_unit_disk};
    use crate::fixedpoint::trigger::{ExportProfile, export_trigger};
    use crate::modelsel::{fit_normalized, zscore_fit};
    use crate::pzernike::build_basis_table;
    use crate::svm::{LabeledDataset, SmoParams};

    /// Small but real setup: camera, features, trained model, trigger.
    fn trained_setup() -> (
        crate::camera::CameraGeometry,
        BasisTable,
        SvmModel,
        TriggerImage,
        Vec<CherenkovImage>,
    ) {
        let g = build_geometry(5, 1.0).unwrap();
        let table = build_basis_table(&map_to_unit_disk(&g), 3).unwrap();
        let mut params = GeneratorParams::default();
        // Compact blobs fitting the 5-ring camera.
        params.gamma.dist_range = (1.0, 2.0);
        params.gamma.length_range = (0.8, 1.2);
        params.hadron.dist_range = (0.0, 2.0);
        params.noise.pedestal_sigma = 0.5;

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut events = Vec::new();
        for seed in 0..160u64 {
            let class = if seed % 2 == 0 {
                ParticleClass::Gamma
            } else {
                ParticleClass::Hadron
            };
            let ev = generate_event(class, &params, &g, seed).unwrap();
            let cleaned = clean_image(&ev, &g, 5.0, 2.5).unwrap();
            let f = feature_vector(&moments(&cleaned, &table).unwrap());
            rows.push(f);
            labels.push(class.sign());
            events.push(cleaned);
        }
        let data = LabeledDataset::new(rows, labels).unwrap();
        let model = fit_normalized(&data, &SmoParams::new(4.0, 0.25)).unwrap();
        assert!(model.converged);
        let (trigger, _) = export_trigger(&model, &table, &ExportProfile::standard()).unwrap();
        (g, table, model, trigger, events)
    }

    #[test]
    fn zero_image_matches_float_pipeline() {
        let (g, table, model, trigger, _) = trained_setup();
        let zero = CherenkovImage {
            event_id: 0,
            label: None,
            seed: None,
            pixels: vec![0.0; g.n_pixels()],
        };
        let (pixels, _) = quantize_pixels(&zero.pixels);
        let fx = fx_pipeline(&trigger, &pixels).unwrap();
        let float = float_decision(&model, &table, &zero).unwrap();
        assert!(
            (fx.decision - float).abs() < 0.01,
            "fx {} vs float {float}",
            fx.decision
        );
        assert_eq!(fx.label, if float >= 0.0 { 1 } else { -1 });
    }

    #[test]
    fn pipeline_is_bit_exact_across_runs() {
        let (g, _, _, trigger, events) = trained_setup();
        let _ = g;
        for ev in events.iter().take(10) {
            let (pixels, _) = quantize_pixels(&ev.pixels);
            let a = fx_pipeline(&trigger, &pixels).unwrap();
            let b = fx_pipeline(&trigger, &pixels).unwrap();
            assert_eq!(a.decision_raw, b.decision_raw);
        }
    }

    #[test]
    fn pipeline_rejects_wrong_pixel_count() {
        let (_, _, _, trigger, _) = trained_setup();
        assert!(fx_pipeline(&trigger, &[0i64; 3]).is_err());
    }

    /// Absurd intensities overflow the feature format; the result carries a
    /// sticky saturation flag instead of wrapping.
    #[test]
    fn saturation_sets_the_sticky_flag() {
        let (g, _, _, trigger, _) = trained_setup();
        let blown = vec![PIXEL_FORMAT.raw_max(); g.n_pixels()];
        let result = fx_pipeline(&trigger, &blown).unwrap();
        assert!(result.saturated);
    }

    #[test]
    fn agreement_stays_within_the_analytic_budget() {
        let (_, table, model, trigger, events) = trained_setup();
        let report = agreement_report(&model, &table, &trigger, &events).unwrap();
        assert!(report.agreement() >= 0.99, "agreement {}", report.agreement());
        assert!(
            report.max_abs_err <= report.error_budget,
            "measured {} exceeds budget {}",
            report.max_abs_err,
            report.error_budget
        );
        // Any label flips happen only next to the decision boundary.
        for row in &report.rows {
            if row.label_float != row.label_fx {
                assert!(
                    row.float_decision.abs() <= 3.0 * report.max_abs_err,
                    "mismatch far from the boundary: {row:?}"
                );
            }
        }
    }

    #[test]
    fn wide_export_eliminates_mismatches() {
        let (_, table, model, _, events) = trained_setup();
        let (wide, _) = export_trigger(&model, &table, &ExportProfile::wide()).unwrap();
        let report = agreement_report(&model, &table, &wide, &events).unwrap();
        assert_eq!(report.label_mismatches, 0);
        assert!(report.max_abs_err < 1e-4, "max err {}", report.max_abs_err);
    }

    #[test]
    fn empty_event_list_gives_empty_report() {
        let (_, table, model, trigger, _) = trained_setup();
        let report = agreement_report(&model, &table, &trigger, &[]).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.label_mismatches, 0);
        assert_eq!(report.saturated_events, 0);
        assert_eq!(report.agreement(), 1.0);
    }

    #[test]
    fn agreement_csv_has_the_declared_header() {
        let (_, table, model, trigger, events) = trained_setup();
        let report = agreement_report(&model, &table, &trigger, &events[..3]).unwrap();
        let mut buf = Vec::new();
        write_agreement_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "event_id,float_decision,fx_decision,abs_err,label_float,label_fx,saturated\n"
        ));
        assert_eq!(text.lines().count(), 4);
    }

    /// Normalizer fitted on the feature rows keeps the q16.16 tables in
    /// range for this setup (guards the default profile).
    #[test]
    fn standard_profile_fits_trained_tables() {
        let (_, _, model, trigger, _) = trained_setup();
        let max_sv = model
            .support_vectors
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_sv < 1024.0);
        assert_eq!(trigger.norm_mean.format, QFormat::signed(32, 20));
        let refit = zscore_fit(&model.support_vectors).unwrap();
        assert!(refit.mean().iter().all(|m| m.is_finite()));
    }
}
