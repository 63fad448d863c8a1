//! Scene geometry: the square serving region and its grid of sample points,
//! base-station and STAR-RIS placement, per-element offsets, and array
//! responses.
//!
//! Coordinates are 3D Cartesian with the origin at one corner of the region.
//! The two base stations sit at `(side, 0, h_b)` and `(side, side, h_b)`;
//! sample points are grid-cell centers at height zero.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::util::{dist2, dist3};

/// Horizontal distances below this are treated as degenerate geometry.
const GEOM_EPS: f64 = 1e-9;
/// Attempts per surface before random placement gives up.
const PLACEMENT_ATTEMPTS: usize = 10_000;

/// How STAR-RIS ground positions are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum RisPlacement {
    /// Seeded uniform rejection sampling inside the region, keeping at least
    /// one grid side of separation between surfaces.
    Random,
    /// Explicit (x, y) ground coordinates, one per surface.
    Fixed(Vec<[f64; 2]>),
}

impl Serialize for RisPlacement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RisPlacement::Random => s.serialize_str("random"),
            RisPlacement::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for RisPlacement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Keyword(String),
            Fixed(Vec<[f64; 2]>),
        }
        match Raw::deserialize(d)? {
            Raw::Keyword(s) if s == "random" => Ok(RisPlacement::Random),
            Raw::Keyword(s) => Err(D::Error::custom(format!(
                "unknown placement `{s}` (expected \"random\" or a coordinate list)"
            ))),
            Raw::Fixed(v) => Ok(RisPlacement::Fixed(v)),
        }
    }
}

/// Geometry parameters of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Side length of the square serving region (m).
    pub region_side: f64,
    /// Side length of one square grid cell (m).
    pub grid_side: f64,
    /// Base-station height (m).
    pub bs_height: f64,
    /// STAR-RIS mounting height (m); must stay below `bs_height`.
    pub ris_height: f64,
    /// Number of STAR-RIS surfaces.
    pub num_ris: usize,
    /// Elements per row of each surface.
    pub elements_h: usize,
    /// Elements per column of each surface.
    pub elements_v: usize,
    /// Element width (m).
    pub element_width: f64,
    /// Element height (m).
    pub element_height: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Surface ground positions.
    pub ris_positions: RisPlacement,
}

impl Default for SceneConfig {
    fn default() -> Self {
        // Desk-scale defaults: 100 m square, 10 m grids, half-wavelength
        // elements at 3 GHz.
        SceneConfig {
            region_side: 100.0,
            grid_side: 10.0,
            bs_height: 25.0,
            ris_height: 5.0,
            num_ris: 2,
            elements_h: 4,
            elements_v: 2,
            element_width: 0.05,
            element_height: 0.05,
            wavelength: 0.1,
            ris_positions: RisPlacement::Random,
        }
    }
}

impl SceneConfig {
    /// Total elements per surface.
    pub fn num_elements(&self) -> usize {
        self.elements_h * self.elements_v
    }

    /// Grid cells per side of the region.
    pub fn grids_per_side(&self) -> usize {
        (self.region_side / self.grid_side).ceil() as usize
    }

    /// Total number of sample points.
    pub fn num_points(&self) -> usize {
        let side = self.grids_per_side();
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.region_side > 0.0) || !(self.grid_side > 0.0) {
            return fail("region_side and grid_side must be positive".into());
        }
        if self.region_side < self.grid_side {
            return fail("region_side must be at least grid_side".into());
        }
        if !(self.ris_height < self.bs_height) {
            return fail("ris_height must be below bs_height".into());
        }
        if self.num_ris == 0 {
            return fail("num_ris must be at least 1".into());
        }
        if self.elements_h == 0 || self.elements_v == 0 {
            return fail("element counts must be at least 1".into());
        }
        if !(self.element_width > 0.0) || !(self.element_height > 0.0) {
            return fail("element dimensions must be positive".into());
        }
        if !(self.wavelength > 0.0) {
            return fail("wavelength must be positive".into());
        }
        if let RisPlacement::Fixed(positions) = &self.ris_positions {
            if positions.len() != self.num_ris {
                return fail(format!(
                    "ris_positions lists {} surfaces but num_ris is {}",
                    positions.len(),
                    self.num_ris
                ));
            }
            for (i, p) in positions.iter().enumerate() {
                if !(0.0..=self.region_side).contains(&p[0])
                    || !(0.0..=self.region_side).contains(&p[1])
                {
                    return fail(format!("surface {i} at {p:?} is outside the region"));
                }
                for (j, q) in positions.iter().enumerate().take(i) {
                    if p == q {
                        return fail(format!("surfaces {j} and {i} share position {p:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Immutable scene geometry built from a [`SceneConfig`].
#[derive(Debug, Clone, Serialize)]
pub struct Scene {
    pub config: SceneConfig,
    /// Base stations at `(side, 0, h_b)` and `(side, side, h_b)`.
    pub bs_positions: [[f64; 3]; 2],
    /// One 3D position per surface.
    pub ris_positions: Vec<[f64; 3]>,
    /// Grid-cell centers at height zero, row-major from the origin corner.
    pub sample_points: Vec<[f64; 3]>,
    /// Local element offsets shared by every surface.
    pub element_offsets: Vec<[f64; 3]>,
}

impl Scene {
    pub fn num_points(&self) -> usize {
        self.sample_points.len()
    }

    pub fn num_ris(&self) -> usize {
        self.ris_positions.len()
    }

    pub fn num_elements(&self) -> usize {
        self.element_offsets.len()
    }
}

/// Builds the scene: validates the config, enumerates grid centers row-major
/// from the origin corner, and places the surfaces.
///
/// Deterministic for a given `(config, seed)`; random placement draws uniform
/// positions and rejects candidates closer than one grid side to an already
/// placed surface. Surfaces placed for a smaller `num_ris` form a prefix of
/// those placed for a larger one under the same seed.
pub fn build_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;

    let side = config.grids_per_side();
    let mut sample_points = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            sample_points.push([
                (col as f64 + 0.5) * config.grid_side,
                (row as f64 + 0.5) * config.grid_side,
                0.0,
            ]);
        }
    }

    let ground: Vec<[f64; 2]> = match &config.ris_positions {
        RisPlacement::Fixed(positions) => positions.clone(),
        RisPlacement::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut placed: Vec<[f64; 2]> = Vec::with_capacity(config.num_ris);
            for _ in 0..config.num_ris {
                let mut accepted = None;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let candidate = [
                        rng.gen::<f64>() * config.region_side,
                        rng.gen::<f64>() * config.region_side,
                    ];
                    let clear = placed.iter().all(|p| {
                        let dx = p[0] - candidate[0];
                        let dy = p[1] - candidate[1];
                        (dx * dx + dy * dy).sqrt() >= config.grid_side
                    });
                    if clear {
                        accepted = Some(candidate);
                        break;
                    }
                }
                match accepted {
                    Some(c) => placed.push(c),
                    None => {
                        return Err(Error::Placement {
                            requested: config.num_ris,
                            min_separation: config.grid_side,
                            attempts: PLACEMENT_ATTEMPTS,
                        })
                    }
                }
            }
            placed
        }
    };
    let ris_positions = ground
        .into_iter()
        .map(|p| [p[0], p[1], config.ris_height])
        .collect();

    let element_offsets = (1..=config.num_elements())
        .map(|k| element_position(k, config))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        bs_positions: [
            [config.region_side, 0.0, config.bs_height],
            [config.region_side, config.region_side, config.bs_height],
        ],
        ris_positions,
        sample_points,
        element_offsets,
        config: config.clone(),
    })
}

/// Local offset of element `k` (1-based) within a surface: the surface lies
/// in a vertical plane, so the first coordinate is always zero.
pub fn element_position(k: usize, config: &SceneConfig) -> Result<[f64; 3]> {
    let total = config.num_elements();
    if k == 0 || k > total {
        return Err(Error::IndexOutOfRange(format!(
            "element {k} of {total}"
        )));
    }
    let col = (k - 1) % config.elements_h;
    let row = (k - 1) / config.elements_h;
    Ok([
        0.0,
        col as f64 * config.element_width,
        row as f64 * config.element_height,
    ])
}

/// Wave vector for a plane wave arriving from azimuth `psi` and elevation
/// `theta`: `(2π/λ)·[cosθ·cosψ, cosθ·sinψ, sinθ]`.
pub fn wave_vector(psi: f64, theta: f64, wavelength: f64) -> [f64; 3] {
    let scale = 2.0 * PI / wavelength;
    [
        scale * theta.cos() * psi.cos(),
        scale * theta.cos() * psi.sin(),
        scale * theta.sin(),
    ]
}

/// Array response vector: component `k` is `exp(j·b(ψ,θ)ᵀ·l_k)`; every
/// component has unit modulus.
pub fn array_response(psi: f64, theta: f64, config: &SceneConfig) -> Vec<Complex64> {
    let b = wave_vector(psi, theta, config.wavelength);
    (1..=config.num_elements())
        .map(|k| {
            let l = element_position(k, config).expect("k in range by construction");
            Complex64::cis(b[0] * l[0] + b[1] * l[1] + b[2] * l[2])
        })
        .collect()
}

/// Line-of-sight angles `(psi, theta)` of the `from → to` link:
/// `theta = arcsin(Δh / d3D)` and `psi = arccos(Δx / d2D)` with
/// `Δh = from_z − to_z` and `Δx = from_x − to_x`.
pub fn los_angles(from: [f64; 3], to: [f64; 3]) -> Result<(f64, f64)> {
    let d2 = dist2(from, to);
    if d2 < GEOM_EPS {
        return Err(Error::SingularGeometry { from, to });
    }
    let d3 = dist3(from, to);
    let theta = ((from[2] - to[2]) / d3).clamp(-1.0, 1.0).asin();
    let psi = ((from[0] - to[0]) / d2).clamp(-1.0, 1.0).acos();
    Ok((psi, theta))
}
