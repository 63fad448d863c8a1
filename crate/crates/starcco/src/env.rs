//! The control MDP: state/action encoding, constraint enforcement, Poisson
//! traffic weights, episode stepping, and the two-component reward.
//!
//! Channels are drawn once per episode and held fixed (block fading) unless
//! per-step redraws are enabled. The reward at each step is the change of the
//! weighted coverage and capacity between consecutive timesteps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::channel::{draw_channel_set, ChannelParams, ChannelSet, Mode, MODES};
use crate::error::{Error, Result};
use crate::metrics::{
    capacity, compute_link_metrics, coverage, star_coefficients, InterferenceMode, MetricParams,
    RisConfig, WeightField,
};
use crate::scene::Scene;

/// Floor added to Poisson counts so a zero-traffic field still normalizes.
const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Maximum transmit power (W); also the fixed operating power when no
    /// power action is configured.
    pub max_tx_power: f64,
    /// Coverage threshold on RSRP (linear).
    pub rsrp_threshold: f64,
    /// Noise power (W).
    pub noise_power: f64,
    /// Bandwidth multiplying the per-point spectral efficiency.
    pub bandwidth: f64,
    /// Amplitude level step `z`; reflect amplitudes live on `{z, 2z, …, 1−z}`.
    pub amplitude_step: f64,
    /// Steps per episode.
    pub horizon: usize,
    /// Poisson mean of the per-grid traffic counts.
    pub traffic_rate: f64,
    /// Number of discrete transmit-power levels, or `None` to hold the
    /// maximum power.
    pub power_levels: Option<usize>,
    pub interference: InterferenceMode,
    /// Redraw the channel realization every step instead of once per episode.
    pub redraw_channels_each_step: bool,
    /// Draw coverage and capacity weights from independent traffic counts.
    pub independent_weight_draws: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_tx_power: 1.0,
            rsrp_threshold: 2e-11,
            noise_power: 1e-13,
            bandwidth: 1.0,
            amplitude_step: 0.1,
            horizon: 16,
            traffic_rate: 1.0,
            power_levels: None,
            interference: InterferenceMode::OtherBs,
            redraw_channels_each_step: false,
            independent_weight_draws: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_tx_power > 0.0) {
            return Err(Error::Config("max_tx_power must be positive".into()));
        }
        if !(self.amplitude_step > 0.0 && self.amplitude_step < 0.5) {
            return Err(Error::Config("amplitude_step must lie in (0, 0.5)".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.traffic_rate > 0.0) {
            return Err(Error::Config("traffic_rate must be positive".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::Config("noise_power must be positive".into()));
        }
        if self.power_levels == Some(0) {
            return Err(Error::Config("power_levels must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of reflect-amplitude levels `{z, 2z, …, 1−z}`.
    pub fn beta_levels(&self) -> usize {
        ((1.0 - self.amplitude_step) / self.amplitude_step + 1e-9).floor() as usize
    }

    /// Reflect amplitude of a level index.
    pub fn beta_value(&self, level: usize) -> f64 {
        (level + 1) as f64 * self.amplitude_step
    }

    /// Transmit power of a power-level index (levels are uniform in
    /// `(0, max]`).
    pub fn power_value(&self, level: usize) -> f64 {
        let levels = self.power_levels.unwrap_or(1);
        self.max_tx_power * (level + 1) as f64 / levels as f64
    }

    /// Length of the policy feature vector.
    pub fn feature_len(&self, num_ris: usize, num_elements: usize) -> usize {
        num_ris * (2 + 4 * num_elements) + usize::from(self.power_levels.is_some())
    }

    fn metric_params(&self, tx_power: f64) -> MetricParams {
        MetricParams {
            tx_power,
            noise_power: self.noise_power,
            rsrp_threshold: self.rsrp_threshold,
            interference: self.interference,
        }
    }
}

/// Observable state: the surface configuration, the traffic weights, and the
/// flattened policy features.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub ris: RisConfig,
    pub weights: WeightField,
    pub t: usize,
    pub tx_power: f64,
    pub features: Vec<f64>,
}

/// One control action: per-surface amplitude level, phase increments, and an
/// optional power level.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvAction {
    /// Amplitude level per surface; level `j` sets the reflect amplitude to
    /// `(j+1)·z`.
    pub beta_levels: Vec<usize>,
    /// Phase increments (rad), laid out per surface as all reflect-mode
    /// elements then all transmit-mode elements.
    pub phase_deltas: Vec<f64>,
    pub power_level: Option<usize>,
}

impl EnvAction {
    pub fn phase_delta(&self, n: usize, mode: Mode, k: usize, num_elements: usize) -> f64 {
        self.phase_deltas[(n * 2 + mode.index()) * num_elements + k]
    }
}

/// Per-step change of the two objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardVec {
    pub d_coverage: f64,
    pub d_capacity: f64,
}

/// A violated operating constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintViolation {
    TxPowerOutOfRange { value: f64, max: f64 },
    ModeEnergyOutOfRange { surface: usize, element: usize, mode: Mode, energy: f64 },
    ElementEnergyExceeded { surface: usize, element: usize, total: f64 },
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintViolation::TxPowerOutOfRange { value, max } => {
                write!(f, "transmit power {value} outside (0, {max}]")
            }
            ConstraintViolation::ModeEnergyOutOfRange { surface, element, mode, energy } => {
                write!(
                    f,
                    "surface {surface} element {element} {mode:?} energy {energy} outside (0, 1)"
                )
            }
            ConstraintViolation::ElementEnergyExceeded { surface, element, total } => {
                write!(
                    f,
                    "surface {surface} element {element} total energy {total} exceeds 1"
                )
            }
        }
    }
}

/// Checks the operating constraints: transmit power in `(0, max]`, each
/// mode's per-element energy in `(0, 1)`, and the per-element energy sum at
/// most one. Returns every violation instead of failing on the first.
pub fn validate_state(state: &EnvState, config: &EnvConfig) -> Vec<ConstraintViolation> {
    let mut violations = Vec::new();
    if !(state.tx_power > 0.0 && state.tx_power <= config.max_tx_power) {
        violations.push(ConstraintViolation::TxPowerOutOfRange {
            value: state.tx_power,
            max: config.max_tx_power,
        });
    }
    for n in 0..state.ris.num_ris() {
        let coeff = [
            star_coefficients(&state.ris, n, Mode::Reflect),
            star_coefficients(&state.ris, n, Mode::Transmit),
        ];
        for k in 0..state.ris.num_elements() {
            let mut total = 0.0;
            for mode in MODES {
                let energy = coeff[mode.index()][k].norm_sqr();
                total += energy;
                if !(energy > 0.0 && energy < 1.0) {
                    violations.push(ConstraintViolation::ModeEnergyOutOfRange {
                        surface: n,
                        element: k,
                        mode,
                        energy,
                    });
                }
            }
            if total > 1.0 + 1e-12 {
                violations.push(ConstraintViolation::ElementEnergyExceeded {
                    surface: n,
                    element: k,
                    total,
                });
            }
        }
    }
    violations
}

/// Draws a fresh traffic weight field: per-grid Poisson counts, floored and
/// normalized to sum to one. Coverage and capacity share one draw unless
/// `independent` is set.
pub fn update_weights(
    rng: &mut impl Rng,
    traffic_rate: f64,
    num_points: usize,
    independent: bool,
) -> WeightField {
    let poisson = Poisson::new(traffic_rate).expect("validated traffic rate");
    let mut draw = |rng: &mut dyn rand::RngCore| {
        let counts: Vec<f64> = (0..num_points)
            .map(|_| poisson.sample(rng) + WEIGHT_FLOOR)
            .collect();
        let total: f64 = counts.iter().sum();
        counts.into_iter().map(|c| c / total).collect::<Vec<f64>>()
    };
    let coverage = draw(rng);
    let capacity = if independent { draw(rng) } else { coverage.clone() };
    WeightField { coverage, capacity }
}

/// Encodes the policy features: per surface `[β_re, β_tr]`, then per mode and
/// element `[sin φ, cos φ]`; the normalized transmit power is appended when a
/// power action is configured.
pub fn encode_features(ris: &RisConfig, tx_power: f64, config: &EnvConfig) -> Vec<f64> {
    let mut features =
        Vec::with_capacity(config.feature_len(ris.num_ris(), ris.num_elements()));
    for n in 0..ris.num_ris() {
        features.push(ris.beta(n, Mode::Reflect));
        features.push(ris.beta(n, Mode::Transmit));
        for mode in MODES {
            for &phi in ris.phases(n, mode) {
                features.push(phi.sin());
                features.push(phi.cos());
            }
        }
    }
    if config.power_levels.is_some() {
        features.push(tx_power / config.max_tx_power);
    }
    features
}

/// Inverts [`encode_features`]: recovers per-surface reflect amplitudes and
/// per-mode phases in `[0, 2π)`.
pub fn decode_features(
    features: &[f64],
    num_ris: usize,
    num_elements: usize,
) -> (Vec<f64>, [Vec<Vec<f64>>; 2]) {
    let mut betas = Vec::with_capacity(num_ris);
    let mut phases = [
        vec![Vec::with_capacity(num_elements); num_ris],
        vec![Vec::with_capacity(num_elements); num_ris],
    ];
    let mut idx = 0;
    for n in 0..num_ris {
        betas.push(features[idx]);
        idx += 2;
        for mode in MODES {
            for _ in 0..num_elements {
                let (s, c) = (features[idx], features[idx + 1]);
                idx += 2;
                phases[mode.index()][n].push(s.atan2(c).rem_euclid(std::f64::consts::TAU));
            }
        }
    }
    (betas, phases)
}

/// One environment instance; owns its RNG stream, channel realization, and
/// state. Shares the immutable scene.
pub struct Env {
    scene: Arc<Scene>,
    channel_params: ChannelParams,
    config: EnvConfig,
    channels: ChannelSet,
    state: EnvState,
    rng: ChaCha8Rng,
    prev_coverage: f64,
    prev_capacity: f64,
    weights_frozen: bool,
}

impl Env {
    pub fn new(
        scene: Arc<Scene>,
        channel_params: ChannelParams,
        config: EnvConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        channel_params.validate()?;
        let mut env = Env {
            scene,
            channel_params,
            config,
            channels: ChannelSet {
                bs_ris: Vec::new(),
                ris_point: [Vec::new(), Vec::new()],
                bs_point: Vec::new(),
            },
            state: EnvState {
                ris: RisConfig::balanced(1, 1, &mut ChaCha8Rng::seed_from_u64(0)),
                weights: WeightField::uniform(1),
                t: 0,
                tx_power: 0.0,
                features: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            prev_coverage: 0.0,
            prev_capacity: 0.0,
            weights_frozen: false,
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Starts a fresh episode: reseeds the RNG, redraws channels and traffic
    /// weights, and initializes the surfaces with balanced amplitudes and
    /// uniform random phases at full power.
    pub fn reset(&mut self, seed: u64) -> Result<&EnvState> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.channels = draw_channel_set(&self.scene, &self.channel_params, &mut self.rng)?;
        let ris = RisConfig::balanced(
            self.scene.num_ris(),
            self.scene.num_elements(),
            &mut self.rng,
        );
        let weights = update_weights(
            &mut self.rng,
            self.config.traffic_rate,
            self.scene.num_points(),
            self.config.independent_weight_draws,
        );
        let tx_power = self.config.max_tx_power;
        let features = encode_features(&ris, tx_power, &self.config);
        self.state = EnvState {
            ris,
            weights,
            t: 0,
            tx_power,
            features,
        };
        let metrics = compute_link_metrics(
            &self.scene,
            &self.channels,
            &self.state.ris,
            &self.config.metric_params(tx_power),
        );
        self.prev_coverage = coverage(&metrics, &self.state.weights);
        self.prev_capacity = capacity(&metrics, &self.state.weights, self.config.bandwidth);
        Ok(&self.state)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.horizon
    }

    /// The most recently computed `(coverage, capacity)` — the baseline the
    /// next reward is measured against.
    pub fn current_metrics(&self) -> (f64, f64) {
        (self.prev_coverage, self.prev_capacity)
    }

    fn check_action(&self, action: &EnvAction) -> Result<()> {
        let num_ris = self.scene.num_ris();
        let k = self.scene.num_elements();
        if action.beta_levels.len() != num_ris {
            return Err(Error::DimensionMismatch(format!(
                "action lists {} amplitude levels for {} surfaces",
                action.beta_levels.len(),
                num_ris
            )));
        }
        if action.phase_deltas.len() != 2 * num_ris * k {
            return Err(Error::DimensionMismatch(format!(
                "action lists {} phase deltas, expected {}",
                action.phase_deltas.len(),
                2 * num_ris * k
            )));
        }
        for &level in &action.beta_levels {
            if level >= self.config.beta_levels() {
                return Err(Error::IndexOutOfRange(format!(
                    "amplitude level {level} of {}",
                    self.config.beta_levels()
                )));
            }
        }
        match (action.power_level, self.config.power_levels) {
            (None, None) => {}
            (Some(l), Some(levels)) if l < levels => {}
            (p, c) => {
                return Err(Error::IndexOutOfRange(format!(
                    "power level {p:?} with {c:?} configured levels"
                )))
            }
        }
        Ok(())
    }

    /// Applies the action, recomputes the link metrics, and returns the
    /// metric differences as the reward; traffic weights then advance. The
    /// episode ends when the horizon is reached.
    pub fn step(&mut self, action: &EnvAction) -> Result<(RewardVec, bool)> {
        self.check_action(action)?;
        let k = self.scene.num_elements();
        for n in 0..self.scene.num_ris() {
            self.state
                .ris
                .set_beta_reflect(n, self.config.beta_value(action.beta_levels[n]))?;
            for mode in MODES {
                for el in 0..k {
                    self.state.ris.apply_phase_delta(
                        n,
                        mode,
                        el,
                        action.phase_delta(n, mode, el, k),
                    );
                }
            }
        }
        if let Some(level) = action.power_level {
            self.state.tx_power = self.config.power_value(level);
        }
        if self.config.redraw_channels_each_step {
            self.channels = draw_channel_set(&self.scene, &self.channel_params, &mut self.rng)?;
        }

        let metrics = compute_link_metrics(
            &self.scene,
            &self.channels,
            &self.state.ris,
            &self.config.metric_params(self.state.tx_power),
        );
        let cov = coverage(&metrics, &self.state.weights);
        let cap = capacity(&metrics, &self.state.weights, self.config.bandwidth);
        let reward = RewardVec {
            d_coverage: cov - self.prev_coverage,
            d_capacity: cap - self.prev_capacity,
        };
        self.prev_coverage = cov;
        self.prev_capacity = cap;

        if !self.weights_frozen {
            self.state.weights = update_weights(
                &mut self.rng,
                self.config.traffic_rate,
                self.scene.num_points(),
                self.config.independent_weight_draws,
            );
        }
        self.state.t += 1;
        self.state.features =
            encode_features(&self.state.ris, self.state.tx_power, &self.config);

        let violations = validate_state(&self.state, &self.config);
        if !violations.is_empty() {
            return Err(Error::Config(format!(
                "action encoding produced an invalid state: {}",
                violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        Ok((reward, self.is_done()))
    }

    /// Draws a uniformly random valid action.
    pub fn random_action(&mut self, rng: &mut impl Rng) -> EnvAction {
        let num_ris = self.scene.num_ris();
        let k = self.scene.num_elements();
        EnvAction {
            beta_levels: (0..num_ris)
                .map(|_| rng.gen_range(0..self.config.beta_levels()))
                .collect(),
            phase_deltas: (0..2 * num_ris * k)
                .map(|_| rng.gen::<f64>() * std::f64::consts::TAU - std::f64::consts::PI)
                .collect(),
            power_level: self.config.power_levels.map(|levels| rng.gen_range(0..levels)),
        }
    }
}
