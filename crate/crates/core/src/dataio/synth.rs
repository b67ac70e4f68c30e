use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use super::{Dataset, Observation};
use crate::{Error, Result};

/// Functional shape active during a stretch of the synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    /// Calm weather: load is dominated by smooth cycles and linear weather responses.
    Smooth,
    /// Stormy weather that keeps crossing the wind threshold, with heavy-tailed noise.
    Spiky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInterval {
    /// First hour index (inclusive).
    pub start_hour: usize,
    /// Last hour index (exclusive).
    pub end_hour: usize,
    pub kind: RegimeKind,
    /// Overrides the base noise scale inside the interval.
    #[serde(default)]
    pub noise_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RegimeSchedule {
    /// Smooth everywhere.
    None,
    /// Smooth and spiky blocks of `period_hours`, starting smooth.
    Alternating { period_hours: usize },
    /// Listed intervals; hours outside them are smooth.
    Explicit { intervals: Vec<RegimeInterval> },
}

impl RegimeSchedule {
    fn at(&self, hour: usize, base_noise: f64) -> (RegimeKind, f64) {
        match self {
            RegimeSchedule::None => (RegimeKind::Smooth, base_noise),
            RegimeSchedule::Alternating { period_hours } => {
                if (hour / period_hours.max(&1)) % 2 == 0 {
                    (RegimeKind::Smooth, base_noise)
                } else {
                    (RegimeKind::Spiky, base_noise)
                }
            }
            RegimeSchedule::Explicit { intervals } => intervals
                .iter()
                .find(|r| r.start_hour <= hour && hour < r.end_hour)
                .map(|r| (r.kind, r.noise_scale.unwrap_or(base_noise)))
                .unwrap_or((RegimeKind::Smooth, base_noise)),
        }
    }
}

/// Parameters of the seeded synthetic load/weather generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_hours: usize,
    pub start: NaiveDateTime,
    /// kW
    pub base_load: f64,
    /// kW amplitude of the 24-hour sinusoid.
    pub daily_amplitude: f64,
    /// kW amplitude of the 168-hour sinusoid.
    pub weekly_amplitude: f64,
    /// kW amplitude of the yearly sinusoid.
    pub annual_amplitude: f64,
    /// kW per °C of temperature departure from 18 °C.
    pub temperature_coupling: f64,
    /// kW per % humidity departure from 65 %.
    pub humidity_coupling: f64,
    /// kW per W/m² of irradiance (behind-the-meter solar offset).
    pub ghi_coupling: f64,
    /// kW per m/s of wind above 3.5 m/s.
    pub wind_coupling: f64,
    /// Wind speed (m/s) above which the storm load step applies.
    pub storm_threshold: f64,
    /// kW added while the wind exceeds `storm_threshold`.
    pub storm_step: f64,
    /// m/s added to the wind inside spiky regimes.
    pub storm_wind_shift: f64,
    /// Standard deviation (kW) of the additive noise.
    pub noise_scale: f64,
    /// Multiplier on the noise scale inside spiky regimes.
    pub spiky_noise_factor: f64,
    /// Innovation standard deviation (kW) of the unobserved AR(1) load disturbance.
    pub disturbance_scale: f64,
    /// AR coefficient of the disturbance, in [0, 1).
    pub disturbance_persistence: f64,
    /// Multiplier on the disturbance innovations inside spiky regimes.
    pub spiky_disturbance_factor: f64,
    pub regimes: RegimeSchedule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 2014,
            n_hours: 17_520,
            start: NaiveDate::from_ymd_opt(2014, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            base_load: 1000.0,
            daily_amplitude: 180.0,
            weekly_amplitude: 60.0,
            annual_amplitude: 80.0,
            temperature_coupling: 1.0,
            humidity_coupling: 0.15,
            ghi_coupling: 0.01,
            wind_coupling: 0.0,
            storm_threshold: 7.0,
            storm_step: 300.0,
            storm_wind_shift: 4.0,
            noise_scale: 0.3,
            spiky_noise_factor: 3.0,
            disturbance_scale: 0.3,
            disturbance_persistence: 0.97,
            spiky_disturbance_factor: 3.0,
            regimes: RegimeSchedule::Alternating { period_hours: 720 },
        }
    }
}

impl SynthConfig {
    /// Pure daily sinusoid with no weather coupling, noise or regimes.
    pub fn pure_daily(seed: u64, n_hours: usize, base_load: f64, amplitude: f64) -> Self {
        SynthConfig {
            seed,
            n_hours,
            base_load,
            daily_amplitude: amplitude,
            weekly_amplitude: 0.0,
            annual_amplitude: 0.0,
            temperature_coupling: 0.0,
            humidity_coupling: 0.0,
            ghi_coupling: 0.0,
            wind_coupling: 0.0,
            storm_step: 0.0,
            noise_scale: 0.0,
            disturbance_scale: 0.0,
            regimes: RegimeSchedule::None,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_hours == 0 {
            return bad("n_hours must be positive");
        }
        if !(self.base_load > 0.0) {
            return bad("base_load must be positive");
        }
        let nonneg = [
            ("daily_amplitude", self.daily_amplitude),
            ("weekly_amplitude", self.weekly_amplitude),
            ("annual_amplitude", self.annual_amplitude),
            ("noise_scale", self.noise_scale),
            ("spiky_noise_factor", self.spiky_noise_factor),
            ("disturbance_scale", self.disturbance_scale),
            ("spiky_disturbance_factor", self.spiky_disturbance_factor),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("temperature_coupling", self.temperature_coupling),
            ("humidity_coupling", self.humidity_coupling),
            ("ghi_coupling", self.ghi_coupling),
            ("wind_coupling", self.wind_coupling),
            ("storm_threshold", self.storm_threshold),
            ("storm_step", self.storm_step),
            ("storm_wind_shift", self.storm_wind_shift),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if !(0.0..1.0).contains(&self.disturbance_persistence) {
            return bad("disturbance_persistence must be in [0, 1)");
        }
        match &self.regimes {
            RegimeSchedule::Alternating { period_hours: 0 } => bad("regime period must be positive"),
            RegimeSchedule::Explicit { intervals } => {
                for r in intervals {
                    if r.end_hour <= r.start_hour {
                        return bad("regime interval is empty");
                    }
                    if let Some(s) = r.noise_scale {
                        if !(s >= 0.0) {
                            return bad("regime noise_scale must be >= 0");
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

struct Ar1 {
    phi: f64,
    state: f64,
    innov: Normal<f64>,
}

impl Ar1 {
    fn new(phi: f64, sigma: f64) -> Self {
        Ar1 {
            phi,
            state: 0.0,
            innov: Normal::new(0.0, sigma).expect("valid sigma"),
        }
    }

    fn step<R: Rng>(&mut self, rng: &mut R) -> f64 {
        self.state = self.phi * self.state + self.innov.sample(rng);
        self.state
    }
}

/// Deterministic synthetic hourly load and weather.
///
/// Weather is driven by seasonal cycles plus AR(1) anomalies. Load is the sum
/// of daily, weekly and annual cycles, a centered response to the previous
/// hour's weather (linear, plus a step while the wind exceeds the storm
/// threshold), a slow unobserved AR(1) disturbance and noise. Spiky regimes
/// shift the wind upwards so the step dominates, amplify the disturbance and
/// switch the noise to a Student-t; smooth regimes rarely reach the threshold.
/// Which forecaster family fits best therefore changes with the regime.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_hours;

    let mut temp_ar = Ar1::new(0.97, 0.6);
    let mut hum_ar = Ar1::new(0.95, 2.0);
    let mut cloud_ar = Ar1::new(0.9, 0.12);
    let mut wind_ar = Ar1::new(0.9, 0.7);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut disturbance = 0.0;
    let heavy = StudentT::new(3.0).expect("valid dof");

    let mut weather: Vec<[f64; 4]> = Vec::with_capacity(n);
    let mut cycles = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    let mut stamps = Vec::with_capacity(n);

    for t in 0..n {
        let ts = config.start + Duration::hours(t as i64);
        let h = ts.hour() as f64;
        let dow = ts.weekday().num_days_from_monday() as f64;
        let doy = ts.ordinal0() as f64 + h / 24.0;
        let annual_phase = 2.0 * PI * doy / 365.0;
        let (kind, sigma) = config.regimes.at(t, config.noise_scale);

        let temperature =
            18.0 + 10.0 * (annual_phase - PI / 2.0 - 0.3).sin() + 5.0 * (2.0 * PI * (h - 9.0) / 24.0).sin()
                + temp_ar.step(&mut rng);
        let humidity = (65.0 - 1.2 * (temperature - 18.0) + hum_ar.step(&mut rng)).clamp(5.0, 100.0);
        let sun = if (6.0..=18.0).contains(&h) {
            (PI * (h - 6.0) / 12.0).sin()
        } else {
            0.0
        };
        let cloud = (1.0 - cloud_ar.step(&mut rng).abs()).clamp(0.1, 1.0);
        let ghi = (1000.0 * sun * (0.75 + 0.2 * (annual_phase - PI / 2.0 - 0.3).sin()) * cloud).max(0.0);
        let storm = if kind == RegimeKind::Spiky { config.storm_wind_shift } else { 0.0 };
        let wind_speed = (3.5 + storm + wind_ar.step(&mut rng)).abs();

        cycles.push(
            config.daily_amplitude * (2.0 * PI * h / 24.0).sin()
                + config.weekly_amplitude * (2.0 * PI * dow / 7.0).sin()
                + config.annual_amplitude * annual_phase.sin(),
        );
        weather.push([temperature, humidity, ghi, wind_speed]);

        // thermal inertia: load reacts to the previous hour's weather
        let [tp, hp, gp, wp] = weather[t.saturating_sub(1)];
        let mut resp = config.temperature_coupling * (tp - 18.0)
            + config.humidity_coupling * (hp - 65.0)
            - config.ghi_coupling * gp
            + config.wind_coupling * (wp - 3.5);
        if wp > config.storm_threshold {
            resp += config.storm_step;
        }
        let burst = if kind == RegimeKind::Spiky { config.spiky_disturbance_factor } else { 1.0 };
        disturbance = config.disturbance_persistence * disturbance
            + config.disturbance_scale * burst * gauss.sample(&mut rng);
        response.push(resp + disturbance);
        noise.push(match kind {
            RegimeKind::Smooth => sigma * gauss.sample(&mut rng),
            RegimeKind::Spiky => sigma * config.spiky_noise_factor * heavy.sample(&mut rng) / 3.0f64.sqrt(),
        });
        stamps.push(ts);
    }

    let resp_mean = response.iter().sum::<f64>() / n as f64;
    let floor = 0.05 * config.base_load;
    let observations = (0..n)
        .map(|t| {
            let [temperature, humidity, ghi, wind_speed] = weather[t];
            let load = config.base_load + cycles[t] + (response[t] - resp_mean) + noise[t];
            Observation {
                timestamp: stamps[t],
                load: load.max(floor),
                temperature,
                humidity,
                ghi,
                wind_speed,
            }
        })
        .collect();
    Dataset::from_observations(observations)
}
