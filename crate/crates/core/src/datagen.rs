//! Seeded synthetic net-load and price scenarios.
//!
//! Load and price follow daily profiles perturbed by stationary AR(1) noise
//! clipped at four standard deviations; wind is an AR(1) capacity factor.
//! With probability `tail_prob` a scenario also gets a coincident load and
//! price spike over a short window, which produces right-tail cost atoms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Scenario, ScenarioSet};

/// Noise is clipped at this many marginal standard deviations.
pub const NOISE_CLIP_SIGMAS: f64 = 4.0;

/// Hourly values (24 entries), linearly interpolated onto the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub hourly: Vec<f64>,
}

impl DailyProfile {
    pub fn new(hourly: Vec<f64>) -> Result<Self> {
        let p = Self { hourly };
        p.check("profile")?;
        Ok(p)
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.hourly.len() != 24 {
            return Err(Error::param(format!("{what} needs 24 hourly values, got {}", self.hourly.len())));
        }
        if self.hourly.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::param(format!("{what} values must be positive and finite")));
        }
        Ok(())
    }

    /// Value at hour `h` in [0, 24), wrapping around midnight.
    pub fn at_hour(&self, h: f64) -> f64 {
        let h = h.rem_euclid(24.0);
        let i = h.floor() as usize % 24;
        let frac = h - h.floor();
        self.hourly[i] * (1.0 - frac) + self.hourly[(i + 1) % 24] * frac
    }

    pub fn sample(&self, t: usize) -> Vec<f64> {
        let dt = 24.0 / t as f64;
        (0..t).map(|k| self.at_hour((k as f64 + 0.5) * dt)).collect()
    }

    pub fn default_load() -> Self {
        Self {
            hourly: vec![
                700.0, 660.0, 640.0, 630.0, 640.0, 700.0, 820.0, 960.0, 1080.0, 1140.0, 1170.0, 1180.0,
                1160.0, 1150.0, 1140.0, 1130.0, 1150.0, 1200.0, 1220.0, 1180.0, 1080.0, 950.0, 830.0, 750.0,
            ],
        }
    }

    pub fn default_price() -> Self {
        Self {
            hourly: vec![
                0.060, 0.055, 0.052, 0.050, 0.052, 0.058, 0.070, 0.085, 0.095, 0.100, 0.098, 0.095,
                0.090, 0.088, 0.088, 0.092, 0.100, 0.115, 0.125, 0.120, 0.105, 0.090, 0.075, 0.065,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseScales {
    /// Marginal standard deviation of the load noise, kW.
    pub load_sigma_kw: f64,
    pub load_phi: f64,
    /// Mean wind capacity factor.
    pub wind_mean: f64,
    pub wind_sigma: f64,
    pub wind_phi: f64,
    /// Relative standard deviation of the price noise.
    pub price_sigma_rel: f64,
    pub price_phi: f64,
    /// Correlation between the load and price innovations.
    pub price_load_corr: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        Self {
            load_sigma_kw: 60.0,
            load_phi: 0.9,
            wind_mean: 0.35,
            wind_sigma: 0.15,
            wind_phi: 0.97,
            price_sigma_rel: 0.12,
            price_phi: 0.8,
            price_load_corr: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub base_load_kw: DailyProfile,
    pub wind_capacity_kw: f64,
    pub price_base: DailyProfile,
    pub noise_scale: NoiseScales,
    pub tail_prob: f64,
    /// Price multiplier inside a spike window.
    pub tail_magnitude: f64,
    /// Fraction of `tail_magnitude − 1` applied to the load inside a spike.
    pub tail_load_share: f64,
    pub tail_window_hours: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 96,
            seed: 0,
            base_load_kw: DailyProfile::default_load(),
            wind_capacity_kw: 1000.0,
            price_base: DailyProfile::default_price(),
            noise_scale: NoiseScales::default(),
            tail_prob: 0.05,
            tail_magnitude: 4.0,
            tail_load_share: 0.1,
            tail_window_hours: 4.0,
        }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<()> {
        self.base_load_kw.check("base_load_kw")?;
        self.price_base.check("price_base")?;
        let fail = |m: &str| Err(Error::param(m.to_string()));
        if self.n == 0 || self.t == 0 {
            return fail("n and t must be positive");
        }
        if !(self.wind_capacity_kw >= 0.0) {
            return fail("wind capacity must be non-negative");
        }
        let s = &self.noise_scale;
        if !(s.load_sigma_kw >= 0.0 && s.wind_sigma >= 0.0 && s.price_sigma_rel >= 0.0) {
            return fail("noise scales must be non-negative");
        }
        for phi in [s.load_phi, s.wind_phi, s.price_phi] {
            if !(0.0..1.0).contains(&phi) {
                return fail("AR coefficients must lie in [0, 1)");
            }
        }
        if !(0.0..=1.0).contains(&s.wind_mean) || !(-1.0..=1.0).contains(&s.price_load_corr) {
            return fail("wind_mean must lie in [0, 1] and price_load_corr in [-1, 1]");
        }
        if !(0.0..1.0).contains(&self.tail_prob) {
            return fail("tail_prob must lie in [0, 1)");
        }
        if !(self.tail_magnitude >= 1.0) || !(self.tail_load_share >= 0.0) || !(self.tail_window_hours > 0.0) {
            return fail("tail_magnitude >= 1, tail_load_share >= 0 and tail_window_hours > 0 required");
        }
        Ok(())
    }

    pub fn dt_hours(&self) -> f64 {
        24.0 / self.t as f64
    }
}

/// Per-scenario output with the spike flag, for diagnostics.
#[derive(Debug, Clone)]
pub struct Generated {
    pub set: ScenarioSet,
    pub spiked: Vec<bool>,
}

struct Ar1 {
    phi: f64,
    sigma: f64,
    state: f64,
}

impl Ar1 {
    fn new(phi: f64, sigma: f64, first: f64) -> Self {
        Self { phi, sigma, state: first * sigma }
    }

    /// Advances with the given standard-normal innovation; the marginal
    /// variance stays `sigma²`.
    fn step(&mut self, z: f64) -> f64 {
        self.state = self.phi * self.state + (1.0 - self.phi * self.phi).sqrt() * self.sigma * z;
        self.value()
    }

    fn value(&self) -> f64 {
        let lim = NOISE_CLIP_SIGMAS * self.sigma;
        self.state.clamp(-lim, lim)
    }
}

pub fn generate(cfg: &GenConfig) -> Result<ScenarioSet> {
    Ok(generate_detailed(cfg)?.set)
}

pub fn generate_detailed(cfg: &GenConfig) -> Result<Generated> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base_load = cfg.base_load_kw.sample(cfg.t);
    let base_price = cfg.price_base.sample(cfg.t);
    let dt = cfg.dt_hours();
    let s = &cfg.noise_scale;
    let rho = s.price_load_corr;
    let window = ((cfg.tail_window_hours / dt).round() as usize).clamp(1, cfg.t);
    let mut scenarios = Vec::with_capacity(cfg.n);
    let mut spiked = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let (z_load, z_price, z_wind) = (normal(), normal(), normal());
        let mut load_ar = Ar1::new(s.load_phi, s.load_sigma_kw, z_load);
        let mut wind_ar = Ar1::new(s.wind_phi, s.wind_sigma, z_wind);
        let mut price_ar = Ar1::new(s.price_phi, s.price_sigma_rel, rho * z_load + (1.0 - rho * rho).sqrt() * z_price);
        let mut load = Vec::with_capacity(cfg.t);
        let mut price = Vec::with_capacity(cfg.t);
        let mut wind = Vec::with_capacity(cfg.t);
        for k in 0..cfg.t {
            let (el, ep, ew) = if k == 0 {
                (load_ar.value(), price_ar.value(), wind_ar.value())
            } else {
                let (a, b, c) = (normal(), normal(), normal());
                (load_ar.step(a), price_ar.step(rho * a + (1.0 - rho * rho).sqrt() * b), wind_ar.step(c))
            };
            load.push((base_load[k] + el).max(0.0));
            price.push(base_price[k] * (1.0 + ep).max(0.1));
            wind.push(cfg.wind_capacity_kw * (s.wind_mean + ew).clamp(0.0, 1.0));
        }
        let spike = rng.gen::<f64>() < cfg.tail_prob;
        if spike {
            let start = rng.gen_range(0..=cfg.t - window);
            let load_factor = 1.0 + (cfg.tail_magnitude - 1.0) * cfg.tail_load_share;
            for k in start..start + window {
                price[k] *= cfg.tail_magnitude;
                load[k] *= load_factor;
            }
        }
        let net: Vec<f64> = load.iter().zip(&wind).map(|(l, w)| l - w).collect();
        scenarios.push(Scenario::new(net, price)?.with_renewable(wind)?);
        spiked.push(spike);
    }
    Ok(Generated { set: ScenarioSet::uniform(scenarios, dt)?, spiked })
}
