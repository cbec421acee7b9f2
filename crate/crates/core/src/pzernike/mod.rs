//! Pseudo-Zernike basis construction, moment extraction and reconstruction.
//!
//! The basis functions are `V_nm(rho, theta) = R_nm(rho) * exp(i m theta)`
//! on the unit disk, with radial part
//!
//! ```text
//! R_nm(rho) = sum_{s=0}^{n-m} (-1)^s (2n+1-s)!
//!             / [ s! (n-m-s)! (n+m+1-s)! ] * rho^(n-s)
//! ```
//!
//! They are orthogonal with `integral V_nm V*_n'm' dA = pi/(n+1) delta`.
//! Up to order `n` there are `(n+1)^2` signed-m members; real images make the
//! negative-m coefficients redundant (conjugate symmetry), so the feature set
//! keeps the `(n+1)(n+2)/2` magnitudes with `m >= 0` — 36 at order 7.
//!
//! Radial coefficients are exact integers (largest factorial involved is
//! `(2n+1)!`), precomputed once and evaluated by Horner's rule in `rho`;
//! nothing here relies on floating factorial cancellations.
//!
//! Feature magnitudes are invariant under image rotation and deliberately
//! *not* invariant under intensity scaling or translation: scaling the image
//! scales every feature linearly, and moving a blob off-center changes the
//! vector. Both properties carry physical signal and are asserted in tests.
//!
//! A [`BasisTable`] is immutable after construction and shareable across
//! threads; moment extraction is pure, so per-event work parallelizes
//! trivially.

mod io;

pub use io::{
    FeatureRow, FeatureTable, read_basis_binary, read_features_csv, write_basis_binary,
    write_features_csv,
};

use num_complex::Complex64;

use crate::camera::{CherenkovImage, DiskMapping};
use crate::error::{Error, Result};

/// Default maximum order: 36 features.
pub const DEFAULT_N_MAX: u32 = 7;

/// Largest supported order; keeps `(2n+1)!` within u128 and every radial
/// coefficient exactly representable in an f64.
pub const MAX_ORDER: u32 = 15;

/// Number of `(n, m >= 0)` pairs up to order `n_max`.
pub fn pair_count(n_max: u32) -> usize {
    ((n_max as usize + 1) * (n_max as usize + 2)) / 2
}

/// Number of signed-m basis members up to order `n_max`.
pub fn signed_count(n_max: u32) -> usize {
    (n_max as usize + 1) * (n_max as usize + 1)
}

/// Canonical order: n ascending, m ascending within n.
pub fn pairs(n_max: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..=n_max).flat_map(|n| (0..=n).map(move |m| (n, m)))
}

/// Index of `(n, m)` in canonical order.
pub fn pair_index(n: u32, m: u32) -> usize {
    debug_assert!(m <= n);
    (n as usize * (n as usize + 1)) / 2 + m as usize
}

fn factorial_u128(k: u32) -> u128 {
    (1..=k as u128).product()
}

/// Radial coefficients indexed by exponent (0..=n); entries below `m` are 0.
/// Every coefficient is an exact integer.
fn radial_coefficients(n: u32, m: u32) -> Vec<f64> {
    let mut coeffs = vec![0.0; n as usize + 1];
    for s in 0..=(n - m) {
        let num = factorial_u128(2 * n + 1 - s);
        let den = factorial_u128(s) * factorial_u128(n - m - s) * factorial_u128(n + m + 1 - s);
        debug_assert_eq!(num % den, 0);
        let magnitude = (num / den) as f64;
        coeffs[(n - s) as usize] = if s % 2 == 0 { magnitude } else { -magnitude };
    }
    coeffs
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Evaluate the radial polynomial `R_nm(rho)`.
///
/// Requires `m <= n <= MAX_ORDER` and `rho` in [0, 1]; satisfies
/// `R_nm(1) = 1`.
pub fn radial_polynomial(n: u32, m: u32, rho: f64) -> Result<f64> {
    if m > n {
        return Err(Error::invalid(format!("repetition m={m} exceeds order n={n}")));
    }
    if n > MAX_ORDER {
        return Err(Error::invalid(format!("order n={n} exceeds {MAX_ORDER}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho={rho} outside [0, 1]")));
    }
    Ok(horner(&radial_coefficients(n, m), rho))
}

/// Precomputed per-pixel basis weights.
///
/// Entry `(p, n, m)` holds the conjugated, area-weighted basis value
/// `(n+1)/pi * R_nm(rho_p) * exp(-i m theta_p) * dA_p`, laid out pixel-major
/// with `(n, m)` in canonical order, so a moment is a plain dot product of
/// the image with one stride of this table.
#[derive(Debug, Clone)]
pub struct BasisTable {
    n_max: u32,
    n_pixels: usize,
    entries: Vec<Complex64>,
}

impl BasisTable {
    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn n_pairs(&self) -> usize {
        pair_count(self.n_max)
    }

    /// All entries for one pixel, in canonical pair order.
    pub fn pixel_entries(&self, pixel: usize) -> &[Complex64] {
        let k = self.n_pairs();
        &self.entries[pixel * k..(pixel + 1) * k]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub(crate) fn from_raw(n_max: u32, n_pixels: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), n_pixels * pair_count(n_max));
        BasisTable {
            n_max,
            n_pixels,
            entries,
        }
    }
}

/// Build the basis table for a disk mapping. Computed once per geometry and
/// reused for every event.
pub fn build_basis_table(mapping: &DiskMapping, n_max: u32) -> Result<BasisTable> {
    if n_max > MAX_ORDER {
        return Err(Error::invalid(format!("order n_max={n_max} exceeds {MAX_ORDER}")));
    }
    let coeff_tables: Vec<Vec<f64>> = pairs(n_max)
        .map(|(n, m)| radial_coefficients(n, m))
        .collect();
    let k = pair_count(n_max);
    let mut entries = Vec::with_capacity(mapping.n_pixels() * k);

    for p in 0..mapping.n_pixels() {
        let rho = mapping.rho()[p];
        let theta = mapping.theta()[p];
        let weight = mapping.weights()[p];
        // cos(m theta), sin(m theta) by recurrence.
        let (sin1, cos1) = theta.sin_cos();
        let mut trig = Vec::with_capacity(n_max as usize + 1);
        trig.push((1.0, 0.0));
        for m in 1..=n_max as usize {
            let (c, s) = trig[m - 1];
            trig.push((c * cos1 - s * sin1, s * cos1 + c * sin1));
        }
        for (idx, (n, m)) in pairs(n_max).enumerate() {
            let radial = horner(&coeff_tables[idx], rho);
            let scale = (n as f64 + 1.0) / std::f64::consts::PI * radial * weight;
            let (c, s) = trig[m as usize];
            entries.push(Complex64::new(scale * c, -scale * s));
        }
    }

    Ok(BasisTable {
        n_max,
        n_pixels: mapping.n_pixels(),
        entries,
    })
}

/// Complex pseudo-Zernike coefficients `A_nm` for `0 <= m <= n <= n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    n_max: u32,
    coeffs: Vec<Complex64>,
}

impl MomentSet {
    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: u32, m: u32) -> Complex64 {
        self.coeffs[pair_index(n, m)]
    }
}

/// Project an image onto the basis: `A_nm = sum_p I_p * entry(p, n, m)`.
/// Linear in the image.
pub fn moments(image: &CherenkovImage, table: &BasisTable) -> Result<MomentSet> {
    if image.pixels.len() != table.n_pixels() {
        return Err(Error::DimensionMismatch {
            what: "image pixels",
            expected: table.n_pixels(),
            got: image.pixels.len(),
        });
    }
    let k = table.n_pairs();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k];
    for (p, &intensity) in image.pixels.iter().enumerate() {
        let row = table.pixel_entries(p);
        for (acc, &e) in coeffs.iter_mut().zip(row) {
            *acc += intensity * e;
        }
    }
    Ok(MomentSet {
        n_max: table.n_max(),
        coeffs,
    })
}

/// Rotation-invariant feature vector: the moment magnitudes in canonical
/// order (36 entries at order 7).
pub type FeatureVector = Vec<f64>;

pub fn feature_vector(moments: &MomentSet) -> FeatureVector {
    moments.coeffs.iter().map(|a| a.norm()).collect()
}

/// Reconstruct a per-pixel image from moments up to `n_max`, which may be
/// lower than the moment set's own order (truncated reconstruction).
///
/// Negative-m terms are supplied by conjugate symmetry, so each `m > 0` pair
/// contributes twice its real part.
pub fn reconstruct(moments: &MomentSet, mapping: &DiskMapping, n_max: u32) -> Result<Vec<f64>> {
    if n_max > moments.n_max {
        return Err(Error::invalid(format!(
            "reconstruction order {n_max} exceeds moment order {}",
            moments.n_max
        )));
    }
    let coeff_tables: Vec<Vec<f64>> = pairs(n_max)
        .map(|(n, m)| radial_coefficients(n, m))
        .collect();
    let mut out = vec![0.0; mapping.n_pixels()];
    for p in 0..mapping.n_pixels() {
        let rho = mapping.rho()[p];
        let theta = mapping.theta()[p];
        let mut acc = 0.0;
        for (idx, (n, m)) in pairs(n_max).enumerate() {
            let radial = horner(&coeff_tables[idx], rho);
            let phase = Complex64::from_polar(1.0, m as f64 * theta);
            let term = (moments.coeff(n, m) * radial * phase).re;
            acc += if m == 0 { term } else { 2.0 * term };
        }
        out[p] = acc;
    }
    Ok(out)
}

/// Numerically verify basis orthogonality on a Cartesian grid over the disk.
///
/// Integrates `V_nm * conj(V_n'm')` with the midpoint rule on a
/// `grid x grid` lattice over [-1, 1]^2 and returns the maximum absolute
/// deviation from `pi/(n+1) * delta_nn' * delta_mm'` over all pairs with
/// `m, m' >= 0` (negative-m members are conjugates and add nothing).
pub fn orthogonality_check(n_max: u32, grid: usize) -> Result<f64> {
    if grid < 256 {
        return Err(Error::invalid("grid must be at least 256 points per axis"));
    }
    if n_max > MAX_ORDER {
        return Err(Error::invalid(format!("order n_max={n_max} exceeds {MAX_ORDER}")));
    }

    let k = pair_count(n_max);
    let coeff_tables: Vec<Vec<f64>> = pairs(n_max)
        .map(|(n, m)| radial_coefficients(n, m))
        .collect();
    let h = 2.0 / grid as f64;
    let cell = h * h;

    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    let mut vals = vec![Complex64::new(0.0, 0.0); k];
    let mut trig: Vec<(f64, f64)> = Vec::with_capacity(n_max as usize + 1);

    for iy in 0..grid {
        let y = -1.0 + (iy as f64 + 0.5) * h;
        for ix in 0..grid {
            let x = -1.0 + (ix as f64 + 0.5) * h;
            let r2 = x * x + y * y;
            if r2 > 1.0 {
                continue;
            }
            let rho = r2.sqrt();
            let theta = y.atan2(x);
            let (sin1, cos1) = theta.sin_cos();
            trig.clear();
            trig.push((1.0, 0.0));
            for m in 1..=n_max as usize {
                let (c, s) = trig[m - 1];
                trig.push((c * cos1 - s * sin1, s * cos1 + c * sin1));
            }
            for (idx, (_, m)) in pairs(n_max).enumerate() {
                let radial = horner(&coeff_tables[idx], rho);
                let (c, s) = trig[m as usize];
                vals[idx] = Complex64::new(radial * c, radial * s);
            }
            for i in 0..k {
                let vi = vals[i];
                for j in i..k {
                    gram[i * k + j] += vi * vals[j].conj();
                }
            }
        }
    }

    let mut max_dev = 0.0f64;
    for (i, (n_i, _)) in pairs(n_max).enumerate() {
        for (j, _) in pairs(n_max).enumerate().skip(i) {
            let integral = gram[i * k + j] * cell;
            let expect = if i == j {
                std::f64::consts::PI / (n_i as f64 + 1.0)
            } else {
                0.0
            };
            let dev = (integral - Complex64::new(expect, 0.0)).norm();
            max_dev = max_dev.max(dev);
        }
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CherenkovImage, build_geometry, map_to_unit_disk};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn image(pixels: Vec<f64>) -> CherenkovImage {
        CherenkovImage {
            event_id: 0,
            label: None,
            seed: None,
            pixels,
        }
    }

    #[test]
    fn counts_follow_the_order_laws() {
        for n_max in 0..=9 {
            assert_eq!(pairs(n_max).count(), pair_count(n_max));
            assert_eq!(
                pair_count(n_max),
                ((n_max as usize + 1) * (n_max as usize + 2)) / 2
            );
            // Full signed-m family: m in -n..=n per order n.
            let signed: usize = (0..=n_max).map(|n| 2 * n as usize + 1).sum();
            assert_eq!(signed, signed_count(n_max));
            assert_eq!(signed_count(n_max), (n_max as usize + 1).pow(2));
        }
        assert_eq!(pair_count(7), 36);
        assert_eq!(signed_count(7), 64);
    }

    #[test]
    fn radial_constant_term_is_one_for_order_zero() {
        assert_eq!(radial_polynomial(0, 0, 0.37).unwrap(), 1.0);
    }

    #[test]
    fn radial_1_0_expands_to_3rho_minus_2() {
        // Two-term sum by hand: 3! / (0! 1! 2!) = 3 and -2!/ (1! 0! 1!) = -2.
        assert_relative_eq!(radial_polynomial(1, 0, 0.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_relative_eq!(radial_polynomial(1, 0, 0.0).unwrap(), -2.0, epsilon = 1e-15);
    }

    /// Independent brute-force evaluation of the defining sum with float
    /// factorials, no shared code with the implementation.
    fn radial_brute_force(n: u32, m: u32, rho: f64) -> f64 {
        fn fact(k: u32) -> f64 {
            (1..=k).map(|v| v as f64).product()
        }
        (0..=(n - m))
            .map(|s| {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact(2 * n + 1 - s) / (fact(s) * fact(n - m - s) * fact(n + m + 1 - s))
                    * rho.powi((n - s) as i32)
            })
            .sum()
    }

    #[test]
    fn radial_5_3_boundary_value_is_one() {
        assert_relative_eq!(radial_brute_force(5, 3, 1.0), 1.0, epsilon = 1e-9);
        assert_relative_eq!(radial_polynomial(5, 3, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn radial_matches_brute_force_on_a_grid() {
        for (n, m) in pairs(7) {
            for i in 0..=10 {
                let rho = i as f64 / 10.0;
                assert_relative_eq!(
                    radial_polynomial(n, m, rho).unwrap(),
                    radial_brute_force(n, m, rho),
                    epsilon = 1e-9,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn radial_boundary_identity_holds_for_all_pairs() {
        for (n, m) in pairs(7) {
            let v = radial_polynomial(n, m, 1.0).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "R({n},{m})(1) = {v}");
        }
    }

    #[test]
    fn radial_domain_errors() {
        assert!(radial_polynomial(1, 2, 0.5).is_err());
        assert!(radial_polynomial(2, 0, -0.1).is_err());
        assert!(radial_polynomial(2, 0, 1.1).is_err());
        assert!(radial_polynomial(MAX_ORDER + 1, 0, 0.5).is_err());
    }

    #[test]
    fn basis_order_zero_has_one_real_pair_per_pixel() {
        let g = build_geometry(2, 1.0).unwrap();
        let m = map_to_unit_disk(&g);
        let t = build_basis_table(&m, 0).unwrap();
        assert_eq!(t.n_pairs(), 1);
        for p in 0..t.n_pixels() {
            assert_eq!(t.pixel_entries(p).len(), 1);
            assert_eq!(t.pixel_entries(p)[0].im, 0.0);
        }
    }

    /// At the central pixel (rho = 0) the radial part vanishes for every
    /// m >= 1 and equals (-1)^n (n+1) for m = 0, straight from the formula
    /// (the only rho^0 term is s = n, which requires m = 0).
    #[test]
    fn basis_central_pixel_follows_the_formula() {
        let g = build_geometry(3, 1.0).unwrap();
        let m = map_to_unit_disk(&g);
        let t = build_basis_table(&m, 3).unwrap();
        let weight = m.weights()[0];
        for (idx, (n, mm)) in pairs(3).enumerate() {
            let e = t.pixel_entries(0)[idx];
            if mm >= 1 {
                assert_eq!(e, Complex64::new(0.0, 0.0), "({n},{mm})");
            } else {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let expect =
                    (n as f64 + 1.0) / std::f64::consts::PI * sign * (n as f64 + 1.0) * weight;
                assert_relative_eq!(e.re, expect, max_relative = 1e-12);
                assert_eq!(e.im, 0.0);
            }
        }
    }

    #[test]
    fn basis_order_seven_has_36_pairs() {
        let g = build_geometry(2, 1.0).unwrap();
        let m = map_to_unit_disk(&g);
        let t = build_basis_table(&m, 7).unwrap();
        assert_eq!(t.n_pairs(), 36);
        assert!(t.entries().iter().all(|e| e.re.is_finite() && e.im.is_finite()));
    }

    #[test]
    fn moments_of_zero_image_are_zero() {
        let g = build_geometry(2, 1.0).unwrap();
        let m = map_to_unit_disk(&g);
        let t = build_basis_table(&m, 7).unwrap();
        let ms = moments(&image(vec![0.0; g.n_pixels()]), &t).unwrap();
        assert!(ms.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn moments_reject_length_mismatch() {
        let g = build_geometry(2, 1.0).unwrap();
        let t = build_basis_table(&map_to_unit_disk(&g), 3).unwrap();
        assert!(moments(&image(vec![1.0; 5]), &t).is_err());
    }

    /// Quadrature oracle: integrate `I * conj(V_nm)` over the union of the
    /// hexagonal pixels by triangulating each hexagon into 6 triangles and
    /// each triangle into sub^2 congruent cells sampled at their centroids.
    /// Independent of the pixel-center-times-area sum used by `moments`.
    fn quadrature_moment(
        g: &crate::camera::CameraGeometry,
        mapping: &crate::camera::DiskMapping,
        pixels: &[f64],
        n: u32,
        m: u32,
        sub: usize,
    ) -> Complex64 {
        let r_hex = g.pixel_circumradius() * mapping.scale();
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, &intensity) in pixels.iter().enumerate() {
            if intensity == 0.0 {
                continue;
            }
            let c = [
                mapping.rho()[p] * mapping.theta()[p].cos(),
                mapping.rho()[p] * mapping.theta()[p].sin(),
            ];
            for corner in 0..6 {
                let a0 = (30.0 + 60.0 * corner as f64).to_radians();
                let a1 = (30.0 + 60.0 * (corner as f64 + 1.0)).to_radians();
                let v0 = [c[0] + r_hex * a0.cos(), c[1] + r_hex * a0.sin()];
                let v1 = [c[0] + r_hex * a1.cos(), c[1] + r_hex * a1.sin()];
                // Triangle (c, v0, v1) split into sub^2 congruent triangles
                // on the barycentric lattice; centroid sampling with equal
                // weights integrates constants exactly.
                let tri_area = 0.5
                    * ((v0[0] - c[0]) * (v1[1] - c[1]) - (v1[0] - c[0]) * (v0[1] - c[1])).abs();
                let w = tri_area / (sub * sub) as f64;
                let mut sample = |b1: f64, b2: f64| {
                    let b0 = 1.0 - b1 - b2;
                    let x = b0 * c[0] + b1 * v0[0] + b2 * v1[0];
                    let y = b0 * c[1] + b1 * v0[1] + b2 * v1[1];
                    let rho = (x * x + y * y).sqrt().min(1.0);
                    let theta = y.atan2(x);
                    let radial = radial_brute_force(n, m, rho);
                    acc += intensity * w * Complex64::from_polar(radial, -(m as f64) * theta);
                };
                let step = 1.0 / (3 * sub) as f64;
                for i in 0..sub {
                    for j in 0..(sub - i) {
                        // Upward-pointing cell centroid.
                        sample((3 * i + 1) as f64 * step, (3 * j + 1) as f64 * step);
                        // Downward-pointing cell, when it exists.
                        if i + j + 2 <= sub {
                            sample((3 * i + 2) as f64 * step, (3 * j + 2) as f64 * step);
                        }
                    }
                }
            }
        }
        acc * ((n as f64 + 1.0) / std::f64::consts::PI)
    }

    #[test]
    fn constant_image_moment_matches_quadrature_oracle() {
        let g = build_geometry(3, 1.0).unwrap();
        let mapping = map_to_unit_disk(&g);
        let t = build_basis_table(&mapping, 2).unwrap();
        let c = 2.375;
        let img = image(vec![c; g.n_pixels()]);
        let ms = moments(&img, &t).unwrap();

        // Direct form of the same sum.
        let expect = c / std::f64::consts::PI * mapping.weights().iter().sum::<f64>();
        assert_relative_eq!(ms.coeff(0, 0).re, expect, max_relative = 1e-12);
        assert!(ms.coeff(0, 0).im.abs() < 1e-15);

        // Independent quadrature over the hexagon footprints.
        let oracle = quadrature_moment(&g, &mapping, &img.pixels, 0, 0, 4);
        assert_relative_eq!(ms.coeff(0, 0).re, oracle.re, max_relative = 1e-6);
    }

    #[test]
    fn moments_are_linear_in_the_image() {
        let g = build_geometry(3, 1.0).unwrap();
        let t = build_basis_table(&map_to_unit_disk(&g), 5).unwrap();
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..10 {
            let i1: Vec<f64> = (0..g.n_pixels()).map(|_| rng.uniform(-2.0, 5.0)).collect();
            let i2: Vec<f64> = (0..g.n_pixels()).map(|_| rng.uniform(-2.0, 5.0)).collect();
            let a = rng.uniform(-3.0, 3.0);
            let b = rng.uniform(-3.0, 3.0);
            let mixed: Vec<f64> = i1.iter().zip(&i2).map(|(x, y)| a * x + b * y).collect();
            let m1 = moments(&image(i1), &t).unwrap();
            let m2 = moments(&image(i2), &t).unwrap();
            let mm = moments(&image(mixed), &t).unwrap();
            for k in 0..t.n_pairs() {
                let expect = a * m1.coeffs()[k] + b * m2.coeffs()[k];
                assert!((mm.coeffs()[k] - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn feature_magnitudes() {
        let ms = MomentSet {
            n_max: 1,
            coeffs: vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(3.0, 4.0),
                Complex64::new(-1.0, 0.0),
            ],
        };
        assert_eq!(feature_vector(&ms), vec![0.0, 5.0, 1.0]);
    }

    fn features_of(g: &crate::camera::CameraGeometry, t: &BasisTable, px: Vec<f64>) -> Vec<f64> {
        let _ = g;
        feature_vector(&moments(&image(px), t).unwrap())
    }

    #[test]
    fn features_are_rotation_invariant_under_lattice_permutation() {
        let g = build_geometry(11, 1.0).unwrap();
        let t = build_basis_table(&map_to_unit_disk(&g), 7).unwrap();
        let perm = g.rotation60_permutation();
        let params = crate::camera::GeneratorParams::default();
        for seed in 0..20u64 {
            let ev = crate::camera::generate_event(
                crate::camera::ParticleClass::Gamma,
                &params,
                &g,
                seed,
            )
            .unwrap();
            let f0 = features_of(&g, &t, ev.pixels.clone());
            let mut rotated = vec![0.0; ev.pixels.len()];
            for (i, &j) in perm.iter().enumerate() {
                rotated[j] = ev.pixels[i];
            }
            let f1 = features_of(&g, &t, rotated);
            let scale = f0.iter().cloned().fold(0.0f64, f64::max);
            for k in 0..36 {
                let rel = (f0[k] - f1[k]).abs() / f0[k].abs().max(f1[k].abs()).max(1e-6 * scale);
                assert!(rel <= 1e-9, "seed {seed} feature {k}: rel {rel}");
            }
        }
    }

    #[test]
    fn features_scale_linearly_with_intensity() {
        let g = build_geometry(5, 1.0).unwrap();
        let t = build_basis_table(&map_to_unit_disk(&g), 7).unwrap();
        let mut rng = crate::rng::SplitMix64::new(77);
        let px: Vec<f64> = (0..g.n_pixels()).map(|_| rng.uniform(0.0, 30.0)).collect();
        let f0 = features_of(&g, &t, px.clone());
        for c in [0.5, 2.0, 10.0] {
            let scaled: Vec<f64> = px.iter().map(|v| c * v).collect();
            let f1 = features_of(&g, &t, scaled);
            for k in 0..f0.len() {
                let rel = (f1[k] - c * f0[k]).abs() / (c * f0[k]).abs().max(1e-300);
                assert!(rel <= 1e-12, "c={c} k={k} rel={rel}");
            }
        }
    }

    /// Translating a compact blob by two pixels changes the features.
    #[test]
    fn features_are_translation_sensitive() {
        let g = build_geometry(11, 1.0).unwrap();
        let t = build_basis_table(&map_to_unit_disk(&g), 7).unwrap();
        let blob = |center: [f64; 2]| -> Vec<f64> {
            g.positions()
                .iter()
                .map(|p| {
                    let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                    100.0 * (-d2 / (2.0 * 1.2 * 1.2)).exp()
                })
                .collect()
        };
        let f0 = features_of(&g, &t, blob([0.0, 0.0]));
        let f1 = features_of(&g, &t, blob([2.0, 0.0]));
        let diff: f64 = f0
            .iter()
            .zip(&f1)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = f0.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm > 1e-3, "relative L2 change {}", diff / norm);
    }

    #[test]
    fn reconstruction_of_zero_moments_is_zero() {
        let g = build_geometry(3, 1.0).unwrap();
        let mapping = map_to_unit_disk(&g);
        let t = build_basis_table(&mapping, 4).unwrap();
        let ms = moments(&image(vec![0.0; g.n_pixels()]), &t).unwrap();
        let rec = reconstruct(&ms, &mapping, 4).unwrap();
        assert!(rec.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruction_error_decreases_with_order() {
        // Order-7 members oscillate at sub-pixel scale on small cameras;
        // 31 rings resolves them so the truncated expansions converge.
        let g = build_geometry(31, 1.0).unwrap();
        let mapping = map_to_unit_disk(&g);
        let t = build_basis_table(&mapping, 7).unwrap();
        // Smooth centered blob, sigma fixed in disk units.
        let sigma = (0.30 / mapping.scale(), 0.22 / mapping.scale());
        let px: Vec<f64> = g
            .positions()
            .iter()
            .map(|p| {
                let d2 = p[0] * p[0] / (2.0 * sigma.0 * sigma.0)
                    + p[1] * p[1] / (2.0 * sigma.1 * sigma.1);
                50.0 * (-d2).exp()
            })
            .collect();
        let norm: f64 = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ms = moments(&image(px.clone()), &t).unwrap();
        let mut previous = f64::INFINITY;
        for order in [1, 3, 5, 7] {
            let rec = reconstruct(&ms, &mapping, order).unwrap();
            let err: f64 = px
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / norm;
            assert!(
                err <= previous + 1e-12,
                "order {order}: {err} > previous {previous}"
            );
            previous = err;
        }
    }

    /// Forward-then-back on single basis images. The hexagonal footprint
    /// covers 82% of the disk, so a truncated basis image legitimately
    /// leaks into other radial orders of the same m: V_20 cannot exceed
    /// ~0.968 correlation at any resolution, while V_22 (alone in its
    /// m-class at order 2) round-trips essentially exactly.
    #[test]
    fn basis_image_round_trip_correlates() {
        let g = build_geometry(11, 1.0).unwrap();
        let mapping = map_to_unit_disk(&g);
        let t = build_basis_table(&mapping, 2).unwrap();
        let correlation = |px: &[f64]| -> f64 {
            let ms = moments(&image(px.to_vec()), &t).unwrap();
            let rec = reconstruct(&ms, &mapping, 2).unwrap();
            let dot: f64 = px.iter().zip(&rec).map(|(a, b)| a * b).sum();
            let na: f64 = px.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = rec.iter().map(|v| v * v).sum::<f64>().sqrt();
            dot / (na * nb)
        };

        // I_p = Re[V_20(rho_p, theta_p)].
        let v20: Vec<f64> = (0..g.n_pixels())
            .map(|p| radial_polynomial(2, 0, mapping.rho()[p]).unwrap())
            .collect();
        let c20 = correlation(&v20);
        assert!(c20 > 0.96, "V20 correlation {c20}");

        // I_p = Re[V_22], no cross-order leakage possible.
        let v22: Vec<f64> = (0..g.n_pixels())
            .map(|p| {
                radial_polynomial(2, 2, mapping.rho()[p]).unwrap()
                    * (2.0 * mapping.theta()[p]).cos()
            })
            .collect();
        let c22 = correlation(&v22);
        assert!(c22 > 0.9999, "V22 correlation {c22}");
    }

    #[test]
    fn orthogonality_small_order() {
        let dev = orthogonality_check(1, 512).unwrap();
        assert!(dev < 1e-3, "deviation {dev}");
    }

    #[test]
    fn orthogonality_rejects_small_grids() {
        assert!(orthogonality_check(1, 128).is_err());
    }

    /// The identical (0,0) pair integrates to the disk area, and distinct-m
    /// pairs integrate to ~0 (angular orthogonality).
    #[test]
    fn orthogonality_identity_and_cross_terms() {
        let grid = 512usize;
        let h = 2.0 / grid as f64;
        let mut area = 0.0;
        let mut cross = Complex64::new(0.0, 0.0);
        for iy in 0..grid {
            let y = -1.0 + (iy as f64 + 0.5) * h;
            for ix in 0..grid {
                let x = -1.0 + (ix as f64 + 0.5) * h;
                if x * x + y * y > 1.0 {
                    continue;
                }
                area += h * h;
                let theta = y.atan2(x);
                let rho = (x * x + y * y).sqrt();
                // V_00 * conj(V_11) = rho * e^{-i theta}.
                cross += Complex64::from_polar(rho, -theta) * h * h;
            }
        }
        assert!((area - std::f64::consts::PI).abs() < 1e-3);
        assert!(cross.norm() < 1e-3);
    }
}
