//! Hexagonal camera geometry, synthetic events, image cleaning and the
//! Hillas-parameter baseline.
//!
//! The camera is a hexagonal lattice of pixels laid out in rings around a
//! central pixel: ring `k` holds `6k` pixels, so a camera with `R` rings has
//! `3R(R+1) + 1` pixels. Pixel 0 is the center; ring pixels follow ring by
//! ring, counter-clockwise starting from the +x axis. [`DiskMapping`] rescales
//! the lattice onto the unit disk so the farthest pixel's outer edge touches
//! radius 1, which is the domain the feature basis lives on.
//!
//! Everything here is a pure function of its inputs; the event generator
//! takes its seed explicitly, so there is no shared RNG state and all
//! operations are safe to call from many threads.

mod generator;
mod hillas;

pub use generator::{GammaParams, GeneratorParams, HadronParams, NoiseParams, generate_event};
pub use hillas::{HillasParams, hillas};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default MAGIC-like camera: 11 rings, 397 pixels.
pub const DEFAULT_RINGS: u32 = 11;
/// Default center-to-center pixel pitch (arbitrary length units).
pub const DEFAULT_PITCH: f64 = 1.0;
/// Default two-level tail-cut thresholds in photo-electrons.
pub const DEFAULT_CORE_THR: f64 = 10.0;
pub const DEFAULT_BOUNDARY_THR: f64 = 5.0;

/// The six lattice step angles, counter-clockwise from +x.
const HEX_DIRS: [(f64, f64); 6] = [
    (1.0, 0.0),
    (0.5, 0.866_025_403_784_438_6),
    (-0.5, 0.866_025_403_784_438_6),
    (-1.0, 0.0),
    (-0.5, -0.866_025_403_784_438_6),
    (0.5, -0.866_025_403_784_438_6),
];

/// Particle class of a simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticleClass {
    Gamma,
    Hadron,
}

impl ParticleClass {
    /// Class label as used by the SVM: gamma is +1, hadron is -1.
    pub fn sign(self) -> i8 {
        match self {
            ParticleClass::Gamma => 1,
            ParticleClass::Hadron => -1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParticleClass::Gamma => "gamma",
            ParticleClass::Hadron => "hadron",
        }
    }
}

/// Hexagonal pixel lattice with positions and symmetric neighbor lists.
#[derive(Debug, Clone)]
pub struct CameraGeometry {
    rings: u32,
    pixel_pitch: f64,
    positions: Vec<[f64; 2]>,
    neighbors: Vec<Vec<usize>>,
    /// Integer lattice coordinates (a, b) such that
    /// position = pitch * (a * dir0 + b * dir1).
    axial: Vec<(i32, i32)>,
}

impl CameraGeometry {
    pub fn rings(&self) -> u32 {
        self.rings
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn n_pixels(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn neighbors(&self, pixel: usize) -> &[usize] {
        &self.neighbors[pixel]
    }

    /// Circumradius of one hexagonal pixel (center to vertex).
    pub fn pixel_circumradius(&self) -> f64 {
        self.pixel_pitch / 3f64.sqrt()
    }

    /// Area of one hexagonal pixel.
    pub fn pixel_area(&self) -> f64 {
        0.5 * 3f64.sqrt() * self.pixel_pitch * self.pixel_pitch
    }

    /// Permutation mapping each pixel to the pixel at its position rotated by
    /// +60 degrees about the camera center. The lattice maps onto itself, so
    /// this is always a bijection.
    pub fn rotation60_permutation(&self) -> Vec<usize> {
        let index: HashMap<(i32, i32), usize> = self
            .axial
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        self.axial
            .iter()
            .map(|&(a, b)| {
                // dir0 -> dir1 and dir1 -> dir1 - dir0 under a +60 rotation.
                index[&(-b, a + b)]
            })
            .collect()
    }
}

/// Build the hexagonal lattice.
///
/// Pixel 0 sits at the origin; ring `k` starts at `(k * pitch, 0)` and walks
/// counter-clockwise. Errors if `rings == 0` or `pitch <= 0`.
pub fn build_geometry(rings: u32, pixel_pitch: f64) -> Result<CameraGeometry> {
    if rings == 0 {
        return Err(Error::invalid("rings must be >= 1"));
    }
    if !(pixel_pitch > 0.0) {
        return Err(Error::invalid("pixel_pitch must be > 0"));
    }

    let mut axial: Vec<(i32, i32)> = vec![(0, 0)];
    for k in 1..=rings as i32 {
        // Corner on the +x axis, then k steps per side towards each
        // successive corner; side j advances in lattice direction j + 2.
        let mut cur = (k, 0);
        for side in 0..6 {
            let step = AX_DIRS[(side + 2) % 6];
            for _ in 0..k {
                axial.push(cur);
                cur = (cur.0 + step.0, cur.1 + step.1);
            }
        }
    }

    let positions: Vec<[f64; 2]> = axial
        .iter()
        .map(|&(a, b)| {
            [
                pixel_pitch * (a as f64 * HEX_DIRS[0].0 + b as f64 * HEX_DIRS[1].0),
                pixel_pitch * (a as f64 * HEX_DIRS[0].1 + b as f64 * HEX_DIRS[1].1),
            ]
        })
        .collect();

    let index: HashMap<(i32, i32), usize> = axial
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let neighbors = axial
        .iter()
        .map(|&(a, b)| {
            AX_DIRS
                .iter()
                .filter_map(|&(da, db)| index.get(&(a + da, b + db)).copied())
                .collect()
        })
        .collect();

    Ok(CameraGeometry {
        rings,
        pixel_pitch,
        positions,
        neighbors,
        axial,
    })
}

/// Axial lattice steps matching `HEX_DIRS`: step j moves by dir j.
/// dir2 = dir1 - dir0, dir3 = -dir0, dir4 = -dir1, dir5 = dir0 - dir1.
const AX_DIRS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Camera pixels mapped onto the unit disk.
///
/// The scale is chosen so that the farthest pixel center plus its circumradius
/// lands exactly on radius 1: every hexagon lies inside the disk.
#[derive(Debug, Clone)]
pub struct DiskMapping {
    scale: f64,
    rho: Vec<f64>,
    theta: Vec<f64>,
    weights: Vec<f64>,
}

impl DiskMapping {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n_pixels(&self) -> usize {
        self.rho.len()
    }

    /// Radial coordinate of each pixel center, all <= 1.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Angular coordinate of each pixel center in [0, 2*pi).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Unit-disk area element of each pixel (hexagon area times scale^2).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Map a camera onto the unit disk.
pub fn map_to_unit_disk(geometry: &CameraGeometry) -> DiskMapping {
    let max_extent = geometry
        .positions()
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .fold(0.0, f64::max)
        + geometry.pixel_circumradius();
    let scale = 1.0 / max_extent;

    let mut rho = Vec::with_capacity(geometry.n_pixels());
    let mut theta = Vec::with_capacity(geometry.n_pixels());
    for p in geometry.positions() {
        rho.push((p[0] * p[0] + p[1] * p[1]).sqrt() * scale);
        let mut t = p[1].atan2(p[0]);
        if t < 0.0 {
            t += 2.0 * std::f64::consts::PI;
        }
        theta.push(t);
    }
    let w = geometry.pixel_area() * scale * scale;
    let weights = vec![w; geometry.n_pixels()];

    DiskMapping {
        scale,
        rho,
        theta,
        weights,
    }
}

/// One calibrated camera image in photo-electron units.
#[derive(Debug, Clone, PartialEq)]
pub struct CherenkovImage {
    pub event_id: u64,
    pub label: Option<ParticleClass>,
    pub seed: Option<u64>,
    pub pixels: Vec<f64>,
}

impl CherenkovImage {
    pub fn total_intensity(&self) -> f64 {
        self.pixels.iter().sum()
    }
}

/// Two-level tail cut.
///
/// Pixels at or above `core_thr` survive; pixels at or above `boundary_thr`
/// survive if they touch a surviving core pixel. Everything else is zeroed
/// and negative survivors are clamped to zero.
pub fn clean_image(
    image: &CherenkovImage,
    geometry: &CameraGeometry,
    core_thr: f64,
    boundary_thr: f64,
) -> Result<CherenkovImage> {
    if !(core_thr >= boundary_thr && boundary_thr >= 0.0) {
        return Err(Error::invalid(
            "cleaning thresholds must satisfy core >= boundary >= 0",
        ));
    }
    if image.pixels.len() != geometry.n_pixels() {
        return Err(Error::DimensionMismatch {
            what: "image pixels",
            expected: geometry.n_pixels(),
            got: image.pixels.len(),
        });
    }

    let core: Vec<bool> = image.pixels.iter().map(|&v| v >= core_thr).collect();
    let pixels = image
        .pixels
        .iter()
        .enumerate()
        .map(|(p, &v)| {
            let keep = core[p]
                || (v >= boundary_thr && geometry.neighbors(p).iter().any(|&q| core[q]));
            if keep { v.max(0.0) } else { 0.0 }
        })
        .collect();

    Ok(CherenkovImage {
        pixels,
        ..image.clone()
    })
}

// ---------------------------------------------------------------------------
// Geometry file (JSON) and event file (JSON Lines)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    version: u32,
    rings: u32,
    pixel_pitch: f64,
    pixels: Vec<PixelRecord>,
    neighbors: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct PixelRecord {
    id: u32,
    x: f64,
    y: f64,
}

/// Write the geometry JSON file.
pub fn write_geometry_json<W: Write>(geometry: &CameraGeometry, mut w: W) -> Result<()> {
    let file = GeometryFile {
        version: 1,
        rings: geometry.rings,
        pixel_pitch: geometry.pixel_pitch,
        pixels: geometry
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| PixelRecord {
                id: i as u32,
                x: p[0],
                y: p[1],
            })
            .collect(),
        neighbors: geometry
            .neighbors
            .iter()
            .map(|ns| ns.iter().map(|&n| n as u32).collect())
            .collect(),
    };
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Read a geometry JSON file. The lattice is rebuilt from (rings, pitch) and
/// checked against the stored pixel table so a corrupt file cannot produce a
/// geometry whose invariants do not hold.
pub fn read_geometry_json<R: std::io::Read>(r: R) -> Result<CameraGeometry> {
    let file: GeometryFile = serde_json::from_reader(r)?;
    if file.version != 1 {
        return Err(Error::format(
            "geometry file",
            format!("unsupported version {}", file.version),
        ));
    }
    let geometry = build_geometry(file.rings, file.pixel_pitch)?;
    if file.pixels.len() != geometry.n_pixels() {
        return Err(Error::format(
            "geometry file",
            format!(
                "pixel count {} does not match rings={}",
                file.pixels.len(),
                file.rings
            ),
        ));
    }
    let tol = geometry.pixel_pitch * 1e-9;
    for (i, rec) in file.pixels.iter().enumerate() {
        if rec.id as usize != i {
            return Err(Error::format("geometry file", "non-sequential pixel ids"));
        }
        let p = geometry.positions[i];
        if (p[0] - rec.x).abs() > tol || (p[1] - rec.y).abs() > tol {
            return Err(Error::format(
                "geometry file",
                format!("pixel {i} position does not match the lattice"),
            ));
        }
    }
    Ok(geometry)
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    event_id: u64,
    label: Option<ParticleClass>,
    seed: Option<u64>,
    pixels: Vec<f64>,
}

/// Write events as JSON Lines, one object per line.
pub fn write_events_jsonl<W: Write>(events: &[CherenkovImage], mut w: W) -> Result<()> {
    for ev in events {
        let rec = EventRecord {
            event_id: ev.event_id,
            label: ev.label,
            seed: ev.seed,
            pixels: ev.pixels.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a JSON Lines event file.
pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<CherenkovImage>> {
    let mut events = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line).map_err(|e| {
            Error::format("event file", format!("line {}: {e}", lineno + 1))
        })?;
        events.push(CherenkovImage {
            event_id: rec.event_id,
            label: rec.label,
            seed: rec.seed,
            pixels: rec.pixels,
        });
    }
    Ok(events)
}
