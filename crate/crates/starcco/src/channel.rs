//! Rician fading channel draws for every link class, with distance path loss
//! and optional spatial correlation of the surface-side NLoS components.
//!
//! One [`ChannelSet`] holds a single realization of all links; environments
//! redraw it once per episode (block fading).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::scene::{array_response, los_angles, Scene};
use crate::util::{dist3, derive_seed};

/// Path-loss model validity limit (m).
pub const REFERENCE_DISTANCE: f64 = 1.0;

/// STAR-RIS operating mode of a link: reflection serves the side of the
/// surface facing the base stations, transmission the far side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reflect,
    Transmit,
}

pub const MODES: [Mode; 2] = [Mode::Reflect, Mode::Transmit];

impl Mode {
    pub fn index(self) -> usize {
        match self {
            Mode::Reflect => 0,
            Mode::Transmit => 1,
        }
    }
}

/// Distance path-loss parameters, one exponent per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossParams {
    /// Linear gain at the 1 m reference distance.
    pub reference_gain: f64,
    pub exponent_bs_ris: f64,
    pub exponent_ris_point: f64,
    pub exponent_bs_point: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            reference_gain: 1e-3,
            exponent_bs_ris: 2.0,
            exponent_ris_point: 2.0,
            exponent_bs_point: 4.0,
        }
    }
}

/// Rician factors per link class (0 = pure NLoS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RicianParams {
    pub factor_bs_ris: f64,
    pub factor_ris_point: f64,
    pub factor_bs_point: f64,
}

impl Default for RicianParams {
    fn default() -> Self {
        RicianParams {
            factor_bs_ris: 10.0,
            factor_ris_point: 10.0,
            factor_bs_point: 1.0,
        }
    }
}

/// Covariance model of the surface-side NLoS vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlosCorrelation {
    /// `Σ_{k,l} = sinc(2‖l_k − l_l‖/λ)` from the element geometry.
    Sinc,
    /// Independent entries.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub path_loss: PathLossParams,
    pub rician: RicianParams,
    pub nlos_correlation: NlosCorrelation,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            path_loss: PathLossParams::default(),
            rician: RicianParams::default(),
            nlos_correlation: NlosCorrelation::Sinc,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss.reference_gain > 0.0) {
            return Err(Error::Config("reference_gain must be positive".into()));
        }
        for (name, v) in [
            ("exponent_bs_ris", self.path_loss.exponent_bs_ris),
            ("exponent_ris_point", self.path_loss.exponent_ris_point),
            ("exponent_bs_point", self.path_loss.exponent_bs_point),
            ("factor_bs_ris", self.rician.factor_bs_ris),
            ("factor_ris_point", self.rician.factor_ris_point),
            ("factor_bs_point", self.rician.factor_bs_point),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// One realization of every channel in the scene.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// `bs_ris[a][n]`: K-vector from BS `a` to surface `n`.
    pub bs_ris: Vec<Vec<Vec<Complex64>>>,
    /// `ris_point[mode][n][i]`: K-vector from surface `n` to point `i`.
    pub ris_point: [Vec<Vec<Vec<Complex64>>>; 2],
    /// `bs_point[a][i]`: direct scalar channel.
    pub bs_point: Vec<Vec<Complex64>>,
}

/// LoS/NLoS decomposition of one draw, for diagnostics and statistics.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    pub total: Vec<Complex64>,
    pub los: Vec<Complex64>,
    pub nlos: Vec<Complex64>,
}

/// Linear path loss `C·d^(−γ)`; the model is only valid beyond the 1 m
/// reference distance.
pub fn path_loss(distance: f64, exponent: f64, reference_gain: f64) -> Result<f64> {
    if distance < REFERENCE_DISTANCE {
        return Err(Error::BelowReferenceDistance(distance));
    }
    Ok(reference_gain * distance.powf(-exponent))
}

/// `sin(πx)/(πx)` with `sinc(0) = 1`.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Correlation matrix of the surface-side NLoS entries under the sinc model.
fn correlation_matrix(offsets: &[[f64; 3]], wavelength: f64) -> DMatrix<f64> {
    let k = offsets.len();
    DMatrix::from_fn(k, k, |r, c| {
        sinc(2.0 * dist3(offsets[r], offsets[c]) / wavelength)
    })
}

/// Symmetric PSD square root; eigenvalues are clipped at zero to absorb
/// numerical negatives.
fn matrix_sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Square root of the NLoS covariance for the configured model, or `None`
/// when entries are independent.
pub(crate) fn nlos_root(scene: &Scene, params: &ChannelParams) -> Option<DMatrix<f64>> {
    match params.nlos_correlation {
        NlosCorrelation::Iid => None,
        NlosCorrelation::Sinc => Some(matrix_sqrt_psd(&correlation_matrix(
            &scene.element_offsets,
            scene.config.wavelength,
        ))),
    }
}

/// Standard circularly-symmetric complex Gaussian: unit expected power.
fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

fn gaussian_vector(len: usize, root: Option<&DMatrix<f64>>, rng: &mut impl Rng) -> Vec<Complex64> {
    let white: Vec<Complex64> = (0..len).map(|_| complex_gaussian(rng)).collect();
    match root {
        None => white,
        Some(r) => (0..len)
            .map(|i| {
                white
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * r[(i, j)])
                    .sum::<Complex64>()
            })
            .collect(),
    }
}

fn mix_rician(l: f64, factor: f64, los: Vec<Complex64>, nlos: Vec<Complex64>) -> ChannelDraw {
    let los_scale = (l * factor / (1.0 + factor)).sqrt();
    let nlos_scale = (l / (1.0 + factor)).sqrt();
    let total = los
        .iter()
        .zip(&nlos)
        .map(|(a, b)| a * los_scale + b * nlos_scale)
        .collect();
    ChannelDraw { total, los, nlos }
}

fn bs_ris_parts_with_root(
    bs: usize,
    ris: usize,
    scene: &Scene,
    params: &ChannelParams,
    root: Option<&DMatrix<f64>>,
    rng: &mut impl Rng,
) -> Result<ChannelDraw> {
    let from = *scene
        .bs_positions
        .get(bs)
        .ok_or_else(|| Error::IndexOutOfRange(format!("bs {bs}")))?;
    let to = *scene
        .ris_positions
        .get(ris)
        .ok_or_else(|| Error::IndexOutOfRange(format!("ris {ris}")))?;
    let (psi, theta) = los_angles(from, to)?;
    let los = array_response(psi, theta, &scene.config);
    let l = path_loss(
        dist3(from, to),
        params.path_loss.exponent_bs_ris,
        params.path_loss.reference_gain,
    )?;
    let nlos = gaussian_vector(los.len(), root, rng);
    Ok(mix_rician(l, params.rician.factor_bs_ris, los, nlos))
}

fn ris_point_parts_with_root(
    ris: usize,
    point: usize,
    scene: &Scene,
    params: &ChannelParams,
    root: Option<&DMatrix<f64>>,
    rng: &mut impl Rng,
) -> Result<ChannelDraw> {
    let from = *scene
        .ris_positions
        .get(ris)
        .ok_or_else(|| Error::IndexOutOfRange(format!("ris {ris}")))?;
    let to = *scene
        .sample_points
        .get(point)
        .ok_or_else(|| Error::IndexOutOfRange(format!("point {point}")))?;
    let (psi, theta) = los_angles(from, to)?;
    let los = array_response(psi, theta, &scene.config);
    let l = path_loss(
        dist3(from, to),
        params.path_loss.exponent_ris_point,
        params.path_loss.reference_gain,
    )?;
    let nlos = gaussian_vector(los.len(), root, rng);
    Ok(mix_rician(l, params.rician.factor_ris_point, los, nlos))
}

/// BS→surface draw split into LoS and NLoS parts.
pub fn draw_bs_ris_parts(
    bs: usize,
    ris: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<ChannelDraw> {
    let root = nlos_root(scene, params);
    bs_ris_parts_with_root(bs, ris, scene, params, root.as_ref(), rng)
}

/// BS→surface Rician draw: `√L·(√(α/(1+α))·a(ψ,θ) + √(1/(1+α))·h_NLoS)`.
pub fn draw_bs_ris_channel(
    bs: usize,
    ris: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<Vec<Complex64>> {
    Ok(draw_bs_ris_parts(bs, ris, scene, params, rng)?.total)
}

/// Surface→point draw split into LoS and NLoS parts. The LoS component is
/// the same for both modes (it is determined by the geometry); NLoS is drawn
/// independently per call, i.e. per mode.
pub fn draw_ris_point_parts(
    _mode: Mode,
    ris: usize,
    point: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<ChannelDraw> {
    let root = nlos_root(scene, params);
    ris_point_parts_with_root(ris, point, scene, params, root.as_ref(), rng)
}

/// Surface→point Rician draw for one mode.
pub fn draw_ris_point_channel(
    mode: Mode,
    ris: usize,
    point: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<Vec<Complex64>> {
    Ok(draw_ris_point_parts(mode, ris, point, scene, params, rng)?.total)
}

/// Direct BS→point draw split into parts. Both parts are independent
/// standard complex Gaussians; the model keeps the Rician mixing weights even
/// though the "LoS" term of the direct link is itself random.
pub fn draw_bs_point_parts(
    bs: usize,
    point: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<ChannelDraw> {
    let from = *scene
        .bs_positions
        .get(bs)
        .ok_or_else(|| Error::IndexOutOfRange(format!("bs {bs}")))?;
    let to = *scene
        .sample_points
        .get(point)
        .ok_or_else(|| Error::IndexOutOfRange(format!("point {point}")))?;
    let l = path_loss(
        dist3(from, to),
        params.path_loss.exponent_bs_point,
        params.path_loss.reference_gain,
    )?;
    let los = vec![complex_gaussian(rng)];
    let nlos = vec![complex_gaussian(rng)];
    Ok(mix_rician(l, params.rician.factor_bs_point, los, nlos))
}

/// Direct BS→point scalar draw.
pub fn draw_bs_point_channel(
    bs: usize,
    point: usize,
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<Complex64> {
    Ok(draw_bs_point_parts(bs, point, scene, params, rng)?.total[0])
}

// Stream tags for per-link substreams.
const LINK_BS_RIS: u64 = 1;
const LINK_RIS_POINT: u64 = 2;
const LINK_BS_POINT: u64 = 3;

fn link_rng(base: u64, class: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut s = derive_seed(base, class);
    s = derive_seed(s, a);
    s = derive_seed(s, b);
    s = derive_seed(s, c);
    ChaCha8Rng::seed_from_u64(s)
}

/// Draws one realization of every link in the scene.
///
/// Deterministic given the state of `rng`. Each link draws from its own
/// substream derived from a single value pulled from `rng`, so one link's
/// realization does not depend on how many other links the scene has.
pub fn draw_channel_set(
    scene: &Scene,
    params: &ChannelParams,
    rng: &mut impl Rng,
) -> Result<ChannelSet> {
    params.validate()?;
    let base: u64 = rng.gen();
    let root = nlos_root(scene, params);
    let num_ris = scene.num_ris();
    let num_points = scene.num_points();

    let mut bs_ris = vec![vec![Vec::new(); num_ris]; 2];
    for a in 0..2 {
        for n in 0..num_ris {
            let mut r = link_rng(base, LINK_BS_RIS, a as u64, n as u64, 0);
            bs_ris[a][n] = bs_ris_parts_with_root(a, n, scene, params, root.as_ref(), &mut r)?.total;
        }
    }

    let mut ris_point = [
        vec![vec![Vec::new(); num_points]; num_ris],
        vec![vec![Vec::new(); num_points]; num_ris],
    ];
    for mode in MODES {
        for n in 0..num_ris {
            for i in 0..num_points {
                let mut r = link_rng(base, LINK_RIS_POINT, mode.index() as u64, n as u64, i as u64);
                ris_point[mode.index()][n][i] =
                    ris_point_parts_with_root(n, i, scene, params, root.as_ref(), &mut r)?.total;
            }
        }
    }

    let mut bs_point = vec![vec![Complex64::new(0.0, 0.0); num_points]; 2];
    for a in 0..2 {
        for i in 0..num_points {
            let mut r = link_rng(base, LINK_BS_POINT, a as u64, i as u64, 0);
            bs_point[a][i] = draw_bs_point_parts(a, i, scene, params, &mut r)?.total[0];
        }
    }

    Ok(ChannelSet {
        bs_ris,
        ris_point,
        bs_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_scene, RisPlacement, SceneConfig};

    fn test_scene(num_ris: usize, eh: usize, ev: usize) -> Scene {
        let config = SceneConfig {
            region_side: 100.0,
            grid_side: 50.0,
            num_ris,
            elements_h: eh,
            elements_v: ev,
            ris_positions: RisPlacement::Random,
            ..SceneConfig::default()
        };
        build_scene(&config, 99).unwrap()
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, 2.0, 1e-3).unwrap(), 1e-3);
        assert!((path_loss(10.0, 2.0, 1e-3).unwrap() - 1e-5).abs() < 1e-18);
        assert!(matches!(
            path_loss(0.5, 2.0, 1e-3),
            Err(Error::BelowReferenceDistance(_))
        ));
    }

    #[test]
    fn pure_los_limit() {
        let scene = test_scene(1, 2, 2);
        let params = ChannelParams {
            rician: RicianParams {
                factor_bs_ris: 1e12,
                factor_ris_point: 1e12,
                factor_bs_point: 1e12,
            },
            ..ChannelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = draw_bs_ris_channel(0, 0, &scene, &params, &mut rng).unwrap();
        let from = scene.bs_positions[0];
        let to = scene.ris_positions[0];
        let l = path_loss(dist3(from, to), 2.0, 1e-3).unwrap();
        for entry in &h {
            assert!((entry.norm() - l.sqrt()).abs() / l.sqrt() < 1e-5);
        }
        // Both modes share the LoS component in the limit.
        let re = draw_ris_point_channel(Mode::Reflect, 0, 0, &scene, &params, &mut rng).unwrap();
        let tr = draw_ris_point_channel(Mode::Transmit, 0, 0, &scene, &params, &mut rng).unwrap();
        for (a, b) in re.iter().zip(&tr) {
            assert!((a - b).norm() / a.norm() < 1e-5);
        }
    }

    #[test]
    fn nlos_mean_power_matches_path_loss() {
        let scene = test_scene(1, 1, 1);
        let params = ChannelParams {
            rician: RicianParams {
                factor_bs_ris: 0.0,
                factor_ris_point: 0.0,
                factor_bs_point: 0.0,
            },
            nlos_correlation: NlosCorrelation::Iid,
            ..ChannelParams::default()
        };
        let from = scene.bs_positions[0];
        let to = scene.ris_positions[0];
        let l = path_loss(dist3(from, to), 2.0, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| {
                draw_bs_ris_channel(0, 0, &scene, &params, &mut rng).unwrap()[0].norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean / l - 1.0).abs() < 0.03,
            "mean power ratio {}",
            mean / l
        );
    }

    #[test]
    fn direct_link_mean_power() {
        let scene = test_scene(1, 1, 1);
        let params = ChannelParams::default();
        let from = scene.bs_positions[0];
        let to = scene.sample_points[0];
        let l = path_loss(dist3(from, to), params.path_loss.exponent_bs_point, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| {
                draw_bs_point_channel(0, 0, &scene, &params, &mut rng)
                    .unwrap()
                    .norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean / l - 1.0).abs() < 0.03);
    }

    #[test]
    fn mode_draws_are_independent() {
        let scene = test_scene(1, 2, 1);
        let params = ChannelParams {
            rician: RicianParams {
                factor_bs_ris: 0.0,
                factor_ris_point: 0.0,
                factor_bs_point: 0.0,
            },
            nlos_correlation: NlosCorrelation::Iid,
            ..ChannelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let mut cross = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        for _ in 0..n {
            let re =
                draw_ris_point_channel(Mode::Reflect, 0, 0, &scene, &params, &mut rng).unwrap();
            let tr =
                draw_ris_point_channel(Mode::Transmit, 0, 0, &scene, &params, &mut rng).unwrap();
            cross += re[0] * tr[0].conj();
            power += re[0].norm_sqr();
        }
        assert!((cross / power).norm() < 0.05);
    }

    #[test]
    fn channel_set_shape_and_determinism() {
        let scene = test_scene(1, 2, 1);
        let params = ChannelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = draw_channel_set(&scene, &params, &mut rng).unwrap();
        assert_eq!(set.bs_ris.len(), 2);
        assert_eq!(set.bs_ris[0].len(), 1);
        assert_eq!(set.bs_ris[0][0].len(), 2);
        assert_eq!(set.ris_point[0][0].len(), 4);
        assert_eq!(set.bs_point[0].len(), 4);

        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        let set2 = draw_channel_set(&scene, &params, &mut rng2).unwrap();
        assert_eq!(set.bs_ris, set2.bs_ris);
        assert_eq!(set.bs_point, set2.bs_point);

        let mut rng3 = ChaCha8Rng::seed_from_u64(12);
        let set3 = draw_channel_set(&scene, &params, &mut rng3).unwrap();
        assert_ne!(set.bs_point, set3.bs_point);
    }

    #[test]
    fn shared_links_identical_across_surface_counts() {
        // The first surface's links don't change when more surfaces exist.
        let config1 = SceneConfig {
            region_side: 100.0,
            grid_side: 50.0,
            num_ris: 1,
            ..SceneConfig::default()
        };
        let config2 = SceneConfig {
            num_ris: 3,
            ..config1.clone()
        };
        let s1 = build_scene(&config1, 21).unwrap();
        let s2 = build_scene(&config2, 21).unwrap();
        let params = ChannelParams::default();
        let mut a = ChaCha8Rng::seed_from_u64(33);
        let mut b = ChaCha8Rng::seed_from_u64(33);
        let c1 = draw_channel_set(&s1, &params, &mut a).unwrap();
        let c2 = draw_channel_set(&s2, &params, &mut b).unwrap();
        assert_eq!(c1.bs_ris[0][0], c2.bs_ris[0][0]);
        assert_eq!(c1.ris_point[0][0][2], c2.ris_point[0][0][2]);
        assert_eq!(c1.bs_point, c2.bs_point);
    }

    #[test]
    fn sinc_covariance_converges() {
        let scene = test_scene(1, 2, 2);
        let params = ChannelParams {
            rician: RicianParams {
                factor_bs_ris: 0.0,
                factor_ris_point: 0.0,
                factor_bs_point: 0.0,
            },
            nlos_correlation: NlosCorrelation::Sinc,
            ..ChannelParams::default()
        };
        let sigma = correlation_matrix(&scene.element_offsets, scene.config.wavelength);
        let k = scene.num_elements();
        let from = scene.bs_positions[0];
        let to = scene.ris_positions[0];
        let l = path_loss(dist3(from, to), 2.0, 1e-3).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(k, k);
        for _ in 0..n {
            let h = draw_bs_ris_channel(0, 0, &scene, &params, &mut rng).unwrap();
            for r in 0..k {
                for c in 0..k {
                    acc[(r, c)] += (h[r] * h[c].conj()).re;
                }
            }
        }
        let empirical = acc / (n as f64 * l);
        let err = (&empirical - &sigma).norm() / sigma.norm();
        assert!(err < 0.05, "covariance relative error {err}");
    }
}
