//! STAR-RIS coefficient matrices, received signals, RSRP with serving-pair
//! selection, SINR, and the weighted coverage/capacity objectives.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::channel::{ChannelSet, Mode};
use crate::error::{Error, Result};
use crate::scene::Scene;

/// Controllable state of all surfaces: per-surface mode amplitudes and
/// per-element phases. Construction and mutation keep the energy split
/// `β_re + β_tr = 1` and phases in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfig {
    beta_reflect: Vec<f64>,
    beta_transmit: Vec<f64>,
    /// `phases[mode][n][k]`.
    phases: [Vec<Vec<f64>>; 2],
}

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can return the modulus itself when phi is a tiny negative.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl RisConfig {
    /// Builds a configuration from reflect amplitudes and per-mode phases.
    /// Transmit amplitudes are the complements of the reflect amplitudes.
    pub fn new(
        beta_reflect: Vec<f64>,
        phases_reflect: Vec<Vec<f64>>,
        phases_transmit: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = beta_reflect.len();
        if phases_reflect.len() != n || phases_transmit.len() != n {
            return Err(Error::DimensionMismatch(
                "phase tables must list every surface".into(),
            ));
        }
        for &b in &beta_reflect {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!(
                    "reflect amplitude {b} outside (0, 1)"
                )));
            }
        }
        let k = phases_reflect.first().map_or(0, Vec::len);
        for table in phases_reflect.iter().chain(&phases_transmit) {
            if table.len() != k {
                return Err(Error::DimensionMismatch(
                    "surfaces must have equal element counts".into(),
                ));
            }
        }
        let beta_transmit = beta_reflect.iter().map(|b| 1.0 - b).collect();
        let wrap_all = |t: Vec<Vec<f64>>| {
            t.into_iter()
                .map(|v| v.into_iter().map(wrap_phase).collect())
                .collect()
        };
        Ok(RisConfig {
            beta_reflect,
            beta_transmit,
            phases: [wrap_all(phases_reflect), wrap_all(phases_transmit)],
        })
    }

    /// Balanced split with uniformly random phases.
    pub fn balanced(num_ris: usize, num_elements: usize, rng: &mut impl Rng) -> Self {
        let draw = |rng: &mut dyn rand::RngCore| {
            (0..num_ris)
                .map(|_| (0..num_elements).map(|_| rng.gen::<f64>() * TAU).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let reflect = draw(rng);
        let transmit = draw(rng);
        RisConfig::new(vec![0.5; num_ris], reflect, transmit)
            .expect("balanced configuration is always valid")
    }

    pub fn num_ris(&self) -> usize {
        self.beta_reflect.len()
    }

    pub fn num_elements(&self) -> usize {
        self.phases[0].first().map_or(0, Vec::len)
    }

    pub fn beta(&self, n: usize, mode: Mode) -> f64 {
        match mode {
            Mode::Reflect => self.beta_reflect[n],
            Mode::Transmit => self.beta_transmit[n],
        }
    }

    pub fn phase(&self, n: usize, mode: Mode, k: usize) -> f64 {
        self.phases[mode.index()][n][k]
    }

    pub fn phases(&self, n: usize, mode: Mode) -> &[f64] {
        &self.phases[mode.index()][n]
    }

    /// Sets the reflect amplitude of surface `n`; the transmit amplitude
    /// becomes its complement.
    pub fn set_beta_reflect(&mut self, n: usize, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!(
                "reflect amplitude {beta} outside (0, 1)"
            )));
        }
        self.beta_reflect[n] = beta;
        self.beta_transmit[n] = 1.0 - beta;
        Ok(())
    }

    /// Adds `delta` to one element phase, wrapping into `[0, 2π)`.
    pub fn apply_phase_delta(&mut self, n: usize, mode: Mode, k: usize, delta: f64) {
        let phi = &mut self.phases[mode.index()][n][k];
        *phi = wrap_phase(*phi + delta);
    }
}

/// Per-point traffic weights; each field sums to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightField {
    pub coverage: Vec<f64>,
    pub capacity: Vec<f64>,
}

impl WeightField {
    pub fn uniform(num_points: usize) -> Self {
        let w = vec![1.0 / num_points as f64; num_points];
        WeightField {
            coverage: w.clone(),
            capacity: w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("coverage", &self.coverage), ("capacity", &self.capacity)] {
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::Config(format!("{name} weights must be >= 0")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("{name} weights sum to {sum}")));
            }
        }
        Ok(())
    }
}

/// Which non-serving signal powers count as interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Other-BS paths through the non-serving surfaces.
    OtherBs,
    /// Every (BS, surface) pair except the serving one.
    AllNonServing,
}

/// Signal-level parameters shared by the per-point metric computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Transmit power (W).
    pub tx_power: f64,
    /// Noise power (W).
    pub noise_power: f64,
    /// Coverage threshold on RSRP (linear).
    pub rsrp_threshold: f64,
    pub interference: InterferenceMode,
}

/// Per-point link metrics for one channel realization and surface state.
#[derive(Debug, Clone)]
pub struct LinkMetrics {
    pub rsrp: Vec<f64>,
    /// Serving `(bs, surface)` pair per point (lexicographic tie-break).
    pub serving: Vec<(usize, usize)>,
    pub sinr: Vec<f64>,
    pub covered: Vec<bool>,
}

/// Diagonal entries of the coefficient matrix of surface `n` in `mode`:
/// entry `k` is `√β·exp(jφ_k)`.
pub fn star_coefficients(ris: &RisConfig, n: usize, mode: Mode) -> Vec<Complex64> {
    let amp = ris.beta(n, mode).sqrt();
    ris.phases(n, mode)
        .iter()
        .map(|&phi| Complex64::from_polar(amp, phi))
        .collect()
}

/// Mode in which surface `n` serves `point`: reflection for points on the
/// base-station side of the surface plane (`x ≥ x_n`), transmission beyond.
pub fn serving_mode(scene: &Scene, n: usize, point: usize) -> Mode {
    if scene.sample_points[point][0] >= scene.ris_positions[n][0] {
        Mode::Reflect
    } else {
        Mode::Transmit
    }
}

/// Noiseless received amplitude at `point` from BS `bs` via surface `n`:
/// `(h_rp^H Φ h_br + h_direct)·√P_t`.
pub fn received_signal(
    bs: usize,
    n: usize,
    point: usize,
    scene: &Scene,
    channels: &ChannelSet,
    ris: &RisConfig,
    tx_power: f64,
) -> Complex64 {
    let mode = serving_mode(scene, n, point);
    let coeff = star_coefficients(ris, n, mode);
    let h_br = &channels.bs_ris[bs][n];
    let h_rp = &channels.ris_point[mode.index()][n][point];
    let cascade: Complex64 = (0..coeff.len())
        .map(|k| h_rp[k].conj() * coeff[k] * h_br[k])
        .sum();
    (cascade + channels.bs_point[bs][point]) * tx_power.sqrt()
}

/// Noiseless received powers `|y|²` at `point` for every (BS, surface) pair.
fn signal_powers(
    point: usize,
    scene: &Scene,
    channels: &ChannelSet,
    ris: &RisConfig,
    tx_power: f64,
) -> [Vec<f64>; 2] {
    let per_bs = |bs: usize| {
        (0..scene.num_ris())
            .map(|n| received_signal(bs, n, point, scene, channels, ris, tx_power).norm_sqr())
            .collect()
    };
    [per_bs(0), per_bs(1)]
}

fn argmax_pair(powers: &[Vec<f64>; 2]) -> (f64, (usize, usize)) {
    let mut best = f64::NEG_INFINITY;
    let mut pair = (0, 0);
    for (a, row) in powers.iter().enumerate() {
        for (n, &p) in row.iter().enumerate() {
            if p > best {
                best = p;
                pair = (a, n);
            }
        }
    }
    (best, pair)
}

/// RSRP at `point`: the maximal noiseless received power over all candidate
/// pairs, with its argmax (ties go to the lexicographically smallest pair).
pub fn rsrp(
    point: usize,
    scene: &Scene,
    channels: &ChannelSet,
    ris: &RisConfig,
    tx_power: f64,
) -> (f64, (usize, usize)) {
    argmax_pair(&signal_powers(point, scene, channels, ris, tx_power))
}

fn sinr_from_powers(powers: &[Vec<f64>; 2], params: &MetricParams) -> f64 {
    let (signal, (a, n)) = argmax_pair(powers);
    let other = 1 - a;
    let interference: f64 = match params.interference {
        InterferenceMode::OtherBs => powers[other]
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != n)
            .map(|(_, &p)| p)
            .sum(),
        InterferenceMode::AllNonServing => powers
            .iter()
            .enumerate()
            .flat_map(|(b, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |&(m, _)| (b, m) != (a, n))
                    .map(|(_, &p)| p)
            })
            .sum(),
    };
    signal / (interference + params.noise_power)
}

/// SINR at `point` under its serving pair.
pub fn sinr(
    point: usize,
    scene: &Scene,
    channels: &ChannelSet,
    ris: &RisConfig,
    params: &MetricParams,
) -> f64 {
    sinr_from_powers(
        &signal_powers(point, scene, channels, ris, params.tx_power),
        params,
    )
}

/// Computes RSRP, serving pair, SINR, and the coverage flag for every point.
pub fn compute_link_metrics(
    scene: &Scene,
    channels: &ChannelSet,
    ris: &RisConfig,
    params: &MetricParams,
) -> LinkMetrics {
    let n = scene.num_points();
    let mut out = LinkMetrics {
        rsrp: Vec::with_capacity(n),
        serving: Vec::with_capacity(n),
        sinr: Vec::with_capacity(n),
        covered: Vec::with_capacity(n),
    };
    for point in 0..n {
        let powers = signal_powers(point, scene, channels, ris, params.tx_power);
        let (best, pair) = argmax_pair(&powers);
        out.rsrp.push(best);
        out.serving.push(pair);
        out.sinr.push(sinr_from_powers(&powers, params));
        out.covered.push(best >= params.rsrp_threshold);
    }
    out
}

/// Weighted coverage ratio: the total coverage weight of points meeting the
/// RSRP threshold. Equals the covered fraction under uniform weights.
pub fn coverage(metrics: &LinkMetrics, weights: &WeightField) -> f64 {
    metrics
        .covered
        .iter()
        .zip(&weights.coverage)
        .filter(|(&c, _)| c)
        .map(|(_, &w)| w)
        .sum()
}

/// Weighted capacity: `Σ_i w_i · B · log₂(1 + SINR_i)` over all points.
pub fn capacity(metrics: &LinkMetrics, weights: &WeightField, bandwidth: f64) -> f64 {
    metrics
        .sinr
        .iter()
        .zip(&weights.capacity)
        .map(|(&s, &w)| w * bandwidth * (1.0 + s).log2())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel_set, ChannelParams};
    use crate::scene::{build_scene, RisPlacement, SceneConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Hand-built scene/channel pair where every channel entry is 1.
    fn unit_world(num_ris: usize, k: usize) -> (Scene, ChannelSet) {
        let config = SceneConfig {
            region_side: 10.0,
            grid_side: 10.0,
            num_ris,
            elements_h: k,
            elements_v: 1,
            ris_positions: RisPlacement::Fixed(
                (0..num_ris).map(|i| [1.0 + i as f64, 5.0]).collect(),
            ),
            ..SceneConfig::default()
        };
        let scene = build_scene(&config, 0).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let channels = ChannelSet {
            bs_ris: vec![vec![vec![one; k]; num_ris]; 2],
            ris_point: [
                vec![vec![vec![one; k]; 1]; num_ris],
                vec![vec![vec![one; k]; 1]; num_ris],
            ],
            bs_point: vec![vec![one; 1]; 2],
        };
        (scene, channels)
    }

    #[test]
    fn star_coefficients_examples() {
        let ris = RisConfig::new(vec![0.5], vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]).unwrap();
        for entry in star_coefficients(&ris, 0, Mode::Reflect) {
            assert!((entry - Complex64::new(0.5_f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        // Energy split per element.
        let ris = RisConfig::new(vec![0.3], vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let re = star_coefficients(&ris, 0, Mode::Reflect)[0];
        let tr = star_coefficients(&ris, 0, Mode::Transmit)[0];
        assert!((re.norm_sqr() + tr.norm_sqr() - 1.0).abs() < 1e-12);
        // φ=π, β=0.25 → −0.5.
        let ris = RisConfig::new(vec![0.25], vec![vec![PI]], vec![vec![0.0]]).unwrap();
        let entry = star_coefficients(&ris, 0, Mode::Reflect)[0];
        assert!((entry - Complex64::new(-0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn received_signal_scalar_example() {
        let (scene, channels) = unit_world(1, 1);
        let ris = RisConfig::new(vec![0.5], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        // Point (5,5) is on the BS side of the surface at x=1 → reflect mode.
        assert_eq!(serving_mode(&scene, 0, 0), Mode::Reflect);
        let y = received_signal(0, 0, 0, &scene, &channels, &ris, 1.0);
        assert!((y - Complex64::new(0.5_f64.sqrt() + 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn received_signal_coherent_sum() {
        let (scene, mut channels) = unit_world(1, 4);
        channels.bs_point = vec![vec![Complex64::new(0.0, 0.0); 1]; 2];
        let ris =
            RisConfig::new(vec![0.5], vec![vec![0.0; 4]], vec![vec![0.0; 4]]).unwrap();
        let p = 2.0;
        let y = received_signal(0, 0, 0, &scene, &channels, &ris, p);
        let expected = 4.0 * 0.5_f64.sqrt() * p.sqrt();
        assert!((y - Complex64::new(expected, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rsrp_tie_break_and_scaling() {
        let (scene, channels) = unit_world(2, 1);
        let ris = RisConfig::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let (value, pair) = rsrp(0, &scene, &channels, &ris, 1.0);
        // All four candidates are identical → smallest pair wins.
        assert_eq!(pair, (0, 0));
        let (value2, pair2) = rsrp(0, &scene, &channels, &ris, 2.0);
        assert_eq!(pair2, pair);
        assert!((value2 / value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_examples() {
        let (scene, mut channels) = unit_world(2, 1);
        // Serving candidate power 4 (amplitude 2 via BS 0, surface 0); the
        // interferer is the other-BS path via surface 1 with power 1.
        channels.bs_ris[0][0] = vec![Complex64::new(2.0 / 0.5_f64.sqrt(), 0.0)];
        channels.bs_ris[0][1] = vec![Complex64::new(0.0, 0.0)];
        channels.bs_ris[1][0] = vec![Complex64::new(0.0, 0.0)];
        channels.bs_ris[1][1] = vec![Complex64::new(1.0 / 0.5_f64.sqrt(), 0.0)];
        channels.bs_point = vec![vec![Complex64::new(0.0, 0.0); 1]; 2];
        let ris = RisConfig::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let params = MetricParams {
            tx_power: 1.0,
            noise_power: 1.0,
            rsrp_threshold: 1.0,
            interference: InterferenceMode::OtherBs,
        };
        let s = sinr(0, &scene, &channels, &ris, &params);
        assert!((s - 2.0).abs() < 1e-12);

        // Huge noise → SINR → 0.
        let noisy = MetricParams {
            noise_power: 1e12,
            ..params
        };
        assert!(sinr(0, &scene, &channels, &ris, &noisy) < 1e-10);
    }

    #[test]
    fn sinr_single_surface_has_no_interference() {
        let (scene, channels) = unit_world(1, 1);
        let ris = RisConfig::new(vec![0.5], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let params = MetricParams {
            tx_power: 1.0,
            noise_power: 0.25,
            rsrp_threshold: 1.0,
            interference: InterferenceMode::OtherBs,
        };
        let powers = signal_powers(0, &scene, &channels, &ris, 1.0);
        let (best, _) = argmax_pair(&powers);
        let s = sinr(0, &scene, &channels, &ris, &params);
        assert!((s - best / 0.25).abs() < 1e-12);
    }

    #[test]
    fn coverage_and_capacity_examples() {
        let metrics = LinkMetrics {
            rsrp: vec![2.0, 0.5, 3.0],
            serving: vec![(0, 0); 3],
            sinr: vec![3.0, 0.0, 1.0],
            covered: vec![true, false, true],
        };
        let uniform = WeightField::uniform(3);
        assert!((coverage(&metrics, &uniform) - 2.0 / 3.0).abs() < 1e-15);

        let all = LinkMetrics {
            covered: vec![true; 3],
            ..metrics.clone()
        };
        assert!((coverage(&all, &uniform) - 1.0).abs() < 1e-15);
        let none = LinkMetrics {
            covered: vec![false; 3],
            ..metrics.clone()
        };
        assert_eq!(coverage(&none, &uniform), 0.0);

        // One point with weight 1 and SINR 3 → log₂4 = 2.
        let single = LinkMetrics {
            rsrp: vec![1.0],
            serving: vec![(0, 0)],
            sinr: vec![3.0],
            covered: vec![true],
        };
        let w = WeightField::uniform(1);
        assert!((capacity(&single, &w, 1.0) - 2.0).abs() < 1e-15);

        // Uniform weights, identical SINR 1 → B·1.
        let same = LinkMetrics {
            rsrp: vec![1.0; 3],
            serving: vec![(0, 0); 3],
            sinr: vec![1.0; 3],
            covered: vec![true; 3],
        };
        assert!((capacity(&same, &uniform, 1.0) - 1.0).abs() < 1e-15);
        let zero = LinkMetrics {
            sinr: vec![0.0; 3],
            ..same
        };
        assert_eq!(capacity(&zero, &uniform, 1.0), 0.0);
    }

    #[test]
    fn threshold_monotonicity() {
        let config = SceneConfig {
            region_side: 40.0,
            grid_side: 20.0,
            num_ris: 2,
            elements_h: 2,
            elements_v: 1,
            ris_positions: RisPlacement::Random,
            ..SceneConfig::default()
        };
        let scene = build_scene(&config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let channels = draw_channel_set(&scene, &ChannelParams::default(), &mut rng).unwrap();
        let ris = RisConfig::balanced(2, 2, &mut rng);
        let weights = WeightField::uniform(scene.num_points());
        let base = MetricParams {
            tx_power: 1.0,
            noise_power: 1e-13,
            rsrp_threshold: 1e-9,
            interference: InterferenceMode::OtherBs,
        };
        let strict = compute_link_metrics(&scene, &channels, &ris, &base);
        let loose = compute_link_metrics(
            &scene,
            &channels,
            &ris,
            &MetricParams {
                rsrp_threshold: 1e-12,
                ..base
            },
        );
        assert!(coverage(&loose, &weights) >= coverage(&strict, &weights));

        // Raising transmit power scales RSRP and keeps the argmax.
        let boosted = compute_link_metrics(
            &scene,
            &channels,
            &ris,
            &MetricParams {
                tx_power: 2.0,
                ..base
            },
        );
        for i in 0..scene.num_points() {
            assert!(boosted.rsrp[i] >= strict.rsrp[i]);
            assert_eq!(boosted.serving[i], strict.serving[i]);
        }
    }

    #[test]
    fn phase_wrapping() {
        let mut ris = RisConfig::new(vec![0.5], vec![vec![0.1]], vec![vec![0.1]]).unwrap();
        ris.apply_phase_delta(0, Mode::Reflect, 0, -0.2);
        let phi = ris.phase(0, Mode::Reflect, 0);
        assert!(phi >= 0.0 && phi < TAU);
        assert!((phi - (TAU - 0.1)).abs() < 1e-12);
    }
}
