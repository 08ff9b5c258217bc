//! Cell environments and correlated SNR trace synthesis.
//!
//! A cell holds `K` static devices served by one base station over pencil
//! beams. Blockage objects of zero width slide along a Bernoulli lemniscate at
//! constant loop speed; the fraction of each beam they cover attenuates the
//! dominant path of a Rician channel.

use rand::distr::Uniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arc_polyline, ArcTable, BeamStrip, Point};
use crate::seed::{self, purpose};

/// Inclusive range used by the scenario sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::config(format!(
                "{name}: invalid range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..self.max)
        }
    }
}

/// Distribution over cell environments. Defaults follow the evaluation
/// parameters of the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioDistribution {
    pub devices: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Loops per second.
    pub object_speed: Range,
    pub object_length: Range,
    pub attenuation_db: Range,
    pub beamwidth: f64,
    pub bs_position: [f64; 2],
    pub area_x: Range,
    pub area_y: Range,
    pub average_unblocked_snr_db: f64,
    pub k_factor_db: f64,
    pub snr_threshold_db: f64,
    pub transmission_interval_ms: f64,
}

impl Default for ScenarioDistribution {
    fn default() -> Self {
        ScenarioDistribution {
            devices: 20,
            objects_min: 2,
            objects_max: 5,
            object_speed: Range::new(0.005, 0.01),
            object_length: Range::new(0.05, 0.05),
            attenuation_db: Range::new(-30.0, -10.0),
            beamwidth: 0.025,
            bs_position: [-1.3, 0.0],
            area_x: Range::new(-1.0, 1.0),
            area_y: Range::new(-0.5, 0.5),
            average_unblocked_snr_db: 0.0,
            k_factor_db: 15.0,
            snr_threshold_db: -20.0,
            transmission_interval_ms: 50.0,
        }
    }
}

impl ScenarioDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 {
            return Err(Error::config("devices must be at least 1"));
        }
        if self.objects_min > self.objects_max {
            return Err(Error::config(format!(
                "objects_min ({}) exceeds objects_max ({})",
                self.objects_min, self.objects_max
            )));
        }
        self.object_speed.check("object_speed")?;
        self.object_length.check("object_length")?;
        self.attenuation_db.check("attenuation_db")?;
        self.area_x.check("area_x")?;
        self.area_y.check("area_y")?;
        if self.object_speed.min <= 0.0 {
            return Err(Error::config("object_speed must be positive"));
        }
        if self.object_length.min <= 0.0 {
            return Err(Error::config("object_length must be positive"));
        }
        if self.attenuation_db.max >= 0.0 {
            return Err(Error::config("attenuation_db must be negative"));
        }
        if !(self.beamwidth > 0.0) {
            return Err(Error::config("beamwidth must be positive"));
        }
        if !(self.transmission_interval_ms > 0.0) {
            return Err(Error::config("transmission_interval_ms must be positive"));
        }
        let bs = Point::new(self.bs_position[0], self.bs_position[1]);
        let inside_x = bs.x >= self.area_x.min && bs.x <= self.area_x.max;
        let inside_y = bs.y >= self.area_y.min && bs.y <= self.area_y.max;
        if inside_x && inside_y {
            return Err(Error::config("bs_position must lie outside the device area"));
        }
        Ok(())
    }

    pub fn fading(&self) -> FadingParams {
        FadingParams::from_db(
            self.average_unblocked_snr_db,
            self.k_factor_db,
            self.snr_threshold_db,
            self.transmission_interval_ms / 1000.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageObject {
    pub arc_length: f64,
    /// Loops per second.
    pub speed: f64,
    /// Fraction of a loop at `t = 0`, in `[0, 1)`.
    pub initial_phase: f64,
    /// Dominant-path power attenuation at full occlusion (negative dB).
    pub attenuation_db: f64,
}

impl BlockageObject {
    /// Amplitude factor at full occlusion, `10^(dB/20)`.
    pub fn amplitude_factor(&self) -> f64 {
        10f64.powf(self.attenuation_db / 20.0)
    }

    /// Loop fraction of the object's midpoint at slot `t`.
    pub fn center_fraction(&self, t: u64, slot_seconds: f64) -> f64 {
        (self.initial_phase + (self.speed * slot_seconds * t as f64).rem_euclid(1.0)).rem_euclid(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    /// Dominant-path amplitude `Ā` when unblocked.
    pub unblocked_amplitude: f64,
    /// Per-component standard deviation `σ` of the diffuse part.
    pub diffuse_sigma: f64,
    pub snr_threshold_db: f64,
    pub slot_seconds: f64,
}

impl FadingParams {
    /// Solves `Ā² + 2σ² = avg` and `Ā²/(2σ²) = K` for the two amplitudes.
    pub fn from_db(avg_snr_db: f64, k_factor_db: f64, snr_threshold_db: f64, slot_seconds: f64) -> Self {
        let avg = 10f64.powf(avg_snr_db / 10.0);
        let k = 10f64.powf(k_factor_db / 10.0);
        let diffuse_power = avg / (1.0 + k);
        let dominant_power = avg * k / (1.0 + k);
        FadingParams {
            unblocked_amplitude: dominant_power.sqrt(),
            diffuse_sigma: (0.5 * diffuse_power).sqrt(),
            snr_threshold_db,
            slot_seconds,
        }
    }

    pub fn threshold_linear(&self) -> f64 {
        10f64.powf(self.snr_threshold_db / 10.0)
    }
}

/// One sampled cell environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub device_positions: Vec<Point>,
    pub bs_position: Point,
    pub beamwidth: f64,
    pub objects: Vec<BlockageObject>,
    pub fading: FadingParams,
    pub rng_seed: u64,
}

impl ScenarioParams {
    pub fn devices(&self) -> usize {
        self.device_positions.len()
    }
}

pub fn sample_scenario(config: &ScenarioDistribution, seed: u64) -> Result<ScenarioParams> {
    config.validate()?;
    let mut rng = seed::rng_for(seed, purpose::SCENARIO, 0);
    let device_positions = (0..config.devices)
        .map(|_| Point::new(config.area_x.sample(&mut rng), config.area_y.sample(&mut rng)))
        .collect();
    let m = rng.sample(Uniform::new_inclusive(config.objects_min, config.objects_max).expect("checked range"));
    let objects = (0..m)
        .map(|_| BlockageObject {
            arc_length: config.object_length.sample(&mut rng),
            speed: config.object_speed.sample(&mut rng),
            initial_phase: rng.random_range(0.0..1.0),
            attenuation_db: config.attenuation_db.sample(&mut rng),
        })
        .collect();
    Ok(ScenarioParams {
        device_positions,
        bs_position: Point::new(config.bs_position[0], config.bs_position[1]),
        beamwidth: config.beamwidth,
        objects,
        fading: config.fading(),
        rng_seed: seed,
    })
}

/// Polyline occupied by `obj` at slot `t`.
pub fn object_polyline(obj: &BlockageObject, t: u64, table: &ArcTable, slot_seconds: f64) -> Vec<Point> {
    arc_polyline(table, obj.center_fraction(t, slot_seconds), obj.arc_length)
}

/// Product over objects of `δ_m^{p_m}`, given the blocked fractions `p_m`.
fn attenuation_from_fractions(objects: &[BlockageObject], fractions: impl Iterator<Item = f64>) -> f64 {
    objects
        .iter()
        .zip(fractions)
        .map(|(o, p)| if p > 0.0 { o.amplitude_factor().powf(p) } else { 1.0 })
        .product()
}

/// Amplitude attenuation `ζ ∈ (0, 1]` of device `k`'s dominant path at slot `t`.
pub fn attenuation_coefficient(scenario: &ScenarioParams, k: usize, t: u64, table: &ArcTable) -> f64 {
    let strip = BeamStrip::new(scenario.bs_position, scenario.device_positions[k], scenario.beamwidth);
    let slot = scenario.fading.slot_seconds;
    attenuation_from_fractions(
        &scenario.objects,
        scenario
            .objects
            .iter()
            .map(|o| strip.block_fraction(&object_polyline(o, t, table, slot))),
    )
}

/// Magnitude of `(A + n₁) + i·n₂` with `n₁, n₂ ~ N(0, σ²)`: a Rician draw.
pub fn rician_sample<R: Rng + ?Sized>(rng: &mut R, amplitude: f64, sigma: f64) -> f64 {
    let n1: f64 = StandardNormal.sample(rng);
    let n2: f64 = StandardNormal.sample(rng);
    let re = amplitude + sigma * n1;
    let im = sigma * n2;
    re.hypot(im)
}

/// Per-device SNR and attenuation sequences for one cell. Arrays are
/// device-major: entry `(k, t)` lives at `k * slots + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub devices: usize,
    pub slots: usize,
    /// Linear instantaneous SNR `|h|²`.
    pub snr: Vec<f32>,
    pub zeta: Vec<f32>,
}

impl ChannelTrace {
    pub fn snr_row(&self, k: usize) -> &[f32] {
        &self.snr[k * self.slots..(k + 1) * self.slots]
    }

    pub fn zeta_row(&self, k: usize) -> &[f32] {
        &self.zeta[k * self.slots..(k + 1) * self.slots]
    }

    /// Slots `[start, end)` of every device.
    pub fn slice(&self, start: usize, end: usize) -> ChannelTrace {
        assert!(start <= end && end <= self.slots);
        let len = end - start;
        let mut snr = Vec::with_capacity(self.devices * len);
        let mut zeta = Vec::with_capacity(self.devices * len);
        for k in 0..self.devices {
            snr.extend_from_slice(&self.snr_row(k)[start..end]);
            zeta.extend_from_slice(&self.zeta_row(k)[start..end]);
        }
        ChannelTrace {
            devices: self.devices,
            slots: len,
            snr,
            zeta,
        }
    }
}

/// Attenuation coefficients for every device and slot.
pub fn attenuation_matrix(scenario: &ScenarioParams, slots: usize, table: &ArcTable) -> Vec<f64> {
    let devices = scenario.devices();
    let strips: Vec<BeamStrip> = scenario
        .device_positions
        .iter()
        .map(|&d| BeamStrip::new(scenario.bs_position, d, scenario.beamwidth))
        .collect();
    let slot = scenario.fading.slot_seconds;
    let per_slot: Vec<Vec<f64>> = (0..slots)
        .into_par_iter()
        .map(|t| {
            let polys: Vec<Vec<Point>> = scenario
                .objects
                .iter()
                .map(|o| object_polyline(o, t as u64, table, slot))
                .collect();
            strips
                .iter()
                .map(|s| {
                    attenuation_from_fractions(&scenario.objects, polys.iter().map(|p| s.block_fraction(p)))
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; devices * slots];
    for (t, row) in per_slot.into_iter().enumerate() {
        for (k, z) in row.into_iter().enumerate() {
            out[k * slots + t] = z;
        }
    }
    out
}

/// Simulates `slots` transmission intervals of the cell. Fading draws for
/// device `k` come from stream `(seed, k)`, so devices are independent of the
/// order they are simulated in.
pub fn simulate_traces(scenario: &ScenarioParams, slots: usize, seed: u64, table: &ArcTable) -> Result<ChannelTrace> {
    if slots == 0 {
        return Err(Error::config("trace length must be at least 1"));
    }
    let devices = scenario.devices();
    let zeta = attenuation_matrix(scenario, slots, table);
    let fading = scenario.fading;
    let snr: Vec<f32> = (0..devices)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = seed::rng_for(seed, purpose::TRACE, k as u64);
            let row = &zeta[k * slots..(k + 1) * slots];
            row.iter()
                .map(|&z| {
                    let h = rician_sample(&mut rng, z * fading.unblocked_amplitude, fading.diffuse_sigma);
                    (h * h) as f32
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(ChannelTrace {
        devices,
        slots,
        snr,
        zeta: zeta.into_iter().map(|z| z as f32).collect(),
    })
}
