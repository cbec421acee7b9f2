//! Hillas second-moment image parameters, the classical baseline feature set.

use crate::camera::{CameraGeometry, CherenkovImage};
use crate::error::{Error, Result};

/// Second-moment shower descriptors.
///
/// `length` and `width` are the RMS spreads along the principal axes of the
/// intensity distribution; `alpha` is the angle between the major axis and
/// the line from the camera center to the center of gravity, folded into
/// [0, 90] degrees. When the image is pointlike (no spread) the major axis is
/// taken along +x; when the center of gravity coincides with the camera
/// center, `alpha` is defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillasParams {
    /// Total intensity in photo-electrons.
    pub size: f64,
    /// Intensity-weighted center of gravity.
    pub cog: [f64; 2],
    /// RMS spread along the major axis, >= width.
    pub length: f64,
    /// RMS spread along the minor axis.
    pub width: f64,
    /// Distance from the camera center to the center of gravity.
    pub dist: f64,
    /// Major axis vs. cog direction, in degrees, in [0, 90].
    pub alpha_deg: f64,
}

/// Compute Hillas parameters of a cleaned image.
///
/// Requires at least one pixel with nonzero intensity.
pub fn hillas(image: &CherenkovImage, geometry: &CameraGeometry) -> Result<HillasParams> {
    if image.pixels.len() != geometry.n_pixels() {
        return Err(Error::DimensionMismatch {
            what: "image pixels",
            expected: geometry.n_pixels(),
            got: image.pixels.len(),
        });
    }
    let size: f64 = image.pixels.iter().sum();
    if !(size > 0.0) {
        return Err(Error::EmptyImage);
    }

    let mut cx = 0.0;
    let mut cy = 0.0;
    for (p, &v) in image.pixels.iter().enumerate() {
        cx += v * geometry.positions()[p][0];
        cy += v * geometry.positions()[p][1];
    }
    cx /= size;
    cy /= size;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (p, &v) in image.pixels.iter().enumerate() {
        let dx = geometry.positions()[p][0] - cx;
        let dy = geometry.positions()[p][1] - cy;
        sxx += v * dx * dx;
        sxy += v * dx * dy;
        syy += v * dy * dy;
    }
    sxx /= size;
    sxy /= size;
    syy /= size;

    // Eigenvalues of the 2x2 covariance.
    let half_trace = 0.5 * (sxx + syy);
    let det_root = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let lambda_major = (half_trace + det_root).max(0.0);
    let lambda_minor = (half_trace - det_root).max(0.0);

    // Major-axis direction; falls back to +x for isotropic images.
    let axis = if det_root > 0.0 {
        let vx = lambda_major - syy;
        let vy = sxy;
        if vx == 0.0 && vy == 0.0 {
            // sxy == 0 and syy is the major eigenvalue: axis along y.
            std::f64::consts::FRAC_PI_2
        } else {
            vy.atan2(vx)
        }
    } else {
        0.0
    };

    let dist = (cx * cx + cy * cy).sqrt();
    let alpha_deg = if dist > 0.0 {
        let cog_angle = cy.atan2(cx);
        let mut delta = (axis - cog_angle).rem_euclid(std::f64::consts::PI);
        if delta > std::f64::consts::FRAC_PI_2 {
            delta = std::f64::consts::PI - delta;
        }
        delta.to_degrees()
    } else {
        0.0
    };

    Ok(HillasParams {
        size,
        cog: [cx, cy],
        length: lambda_major.sqrt(),
        width: lambda_minor.sqrt(),
        dist,
        alpha_deg,
    })
}
