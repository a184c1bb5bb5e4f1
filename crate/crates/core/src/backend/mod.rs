//! Software stand-in for the analog neuromorphic substrate.
//!
//! Discrete-time LIF/LI dynamics with quantized 6-bit weights, per-column
//! fan-in limits, sparse membrane sampling through an emulated parallel ADC,
//! optional fixed-pattern parameter noise, and spike-output gating.

pub mod events;
pub mod neuron;
pub mod noise;
pub mod project;

pub use events::{MembraneSample, MembraneSamples, SpikeEvent, SpikeTrain};
pub use neuron::{lif_forward, li_forward, NeuronDynamics, NeuronState, RawNeuronOutput};
pub use noise::apply_noise;
pub use project::{project, HwWeightMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Emulator constraints and nuisance parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareProfile {
    pub max_neurons: usize,
    pub max_fan_in: usize,
    /// Weights live in `[-weight_magnitude, +weight_magnitude]`.
    pub weight_magnitude: i8,
    /// Membrane sampling period of the parallel ADC, in microseconds.
    pub cadc_period_us: f64,
    /// Uniform sampling jitter, +/- microseconds. Emulator-specific choice.
    pub cadc_jitter_us: f64,
    /// Relative fixed-pattern spread on tau_mem, tau_syn and threshold.
    pub noise: f64,
    /// Error on resource violations instead of logging a warning.
    pub strict: bool,
    /// ADC resolution in bits. Emulator-specific choice.
    pub adc_bits: u32,
    /// ADC counts at membrane value 0.
    pub adc_offset: f64,
    /// ADC counts per model unit of membrane.
    pub adc_scale: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile {
            max_neurons: 512,
            max_fan_in: 256,
            weight_magnitude: 63,
            cadc_period_us: 2.0,
            cadc_jitter_us: 0.2,
            noise: 0.05,
            strict: true,
            adc_bits: 10,
            adc_offset: 256.0,
            adc_scale: 256.0,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if self.cadc_period_us <= 0.0 {
            return Err(Error::Parameter("cadc_period_us must be positive".into()));
        }
        if self.cadc_jitter_us < 0.0 || self.cadc_jitter_us >= self.cadc_period_us / 2.0 {
            return Err(Error::Parameter(
                "cadc_jitter_us must be in [0, cadc_period_us/2)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Parameter("noise spread must be in [0, 1)".into()));
        }
        if self.weight_magnitude <= 0 {
            return Err(Error::Parameter("weight_magnitude must be positive".into()));
        }
        if self.adc_bits == 0 || self.adc_bits > 16 || self.adc_scale == 0.0 {
            return Err(Error::Parameter("invalid ADC configuration".into()));
        }
        Ok(())
    }

    /// Largest representable ADC count.
    pub fn adc_max(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    /// Membrane model units to ADC counts, clamped to the converter range.
    pub fn digitize(&self, v: f64) -> u16 {
        let counts = (self.adc_offset + self.adc_scale * v).round();
        counts.clamp(0.0, self.adc_max() as f64) as u16
    }

    /// One ADC least significant bit, in model units.
    pub fn adc_lsb(&self) -> f64 {
        1.0 / self.adc_scale
    }
}

/// LIF/LI dynamics configuration. Times in microseconds, potentials in model
/// units.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronParams {
    pub tau_mem_us: f64,
    pub tau_syn_us: f64,
    pub threshold: f64,
    pub reset: f64,
    pub leak: f64,
    pub refractory_us: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            tau_mem_us: 10.0,
            tau_syn_us: 5.0,
            threshold: 1.0,
            reset: 0.0,
            leak: 0.0,
            refractory_us: 1.0,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau_mem_us <= 0.0 || self.tau_syn_us <= 0.0 {
            return Err(Error::Parameter(
                "membrane and synaptic time constants must be positive".into(),
            ));
        }
        if self.threshold <= self.leak {
            return Err(Error::Parameter(
                "threshold must lie above the leak potential".into(),
            ));
        }
        if self.refractory_us < 0.0 {
            return Err(Error::Parameter("refractory period must be non-negative".into()));
        }
        Ok(())
    }
}
