//! Discrete-time LIF/LI dynamics: exponential-Euler stepping, spike emission
//! with refractory hold, and sparse ADC membrane sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::events::{MembraneSample, MembraneSamples, SpikeEvent, SpikeTrain};
use super::{HardwareProfile, NeuronParams};
use crate::error::{Error, Result};
use crate::tensor::{rf, Real, TimeTensor};

/// Per-unit step coefficients of one population, frozen for a run.
#[derive(Clone, Debug)]
pub struct NeuronDynamics<E: Real> {
    pub units: usize,
    decay_syn: Vec<E>,
    decay_mem: Vec<E>,
    /// `dt / tau_mem` per unit.
    gain: Vec<E>,
    threshold: Vec<E>,
    reset: Vec<E>,
    leak: Vec<E>,
    refrac_steps: u32,
    spiking: bool,
}

impl<E: Real> NeuronDynamics<E> {
    /// Build from per-unit parameters. The refractory hold uses the first
    /// unit's period (fixed-pattern noise does not perturb it).
    pub fn new(per_unit: &[NeuronParams], dt_us: f64, spiking: bool) -> Result<Self> {
        if per_unit.is_empty() {
            return Err(Error::Parameter("population needs at least one unit".into()));
        }
        if dt_us <= 0.0 {
            return Err(Error::Parameter("dt must be positive".into()));
        }
        let mut d = NeuronDynamics {
            units: per_unit.len(),
            decay_syn: Vec::with_capacity(per_unit.len()),
            decay_mem: Vec::with_capacity(per_unit.len()),
            gain: Vec::with_capacity(per_unit.len()),
            threshold: Vec::with_capacity(per_unit.len()),
            reset: Vec::with_capacity(per_unit.len()),
            leak: Vec::with_capacity(per_unit.len()),
            refrac_steps: (per_unit[0].refractory_us / dt_us).ceil() as u32,
            spiking,
        };
        for p in per_unit {
            p.validate()?;
            d.decay_syn.push(rf((-dt_us / p.tau_syn_us).exp()));
            d.decay_mem.push(rf((-dt_us / p.tau_mem_us).exp()));
            d.gain.push(rf(dt_us / p.tau_mem_us));
            d.threshold.push(rf(p.threshold));
            d.reset.push(rf(p.reset));
            d.leak.push(rf(p.leak));
        }
        Ok(d)
    }

    pub fn uniform(params: &NeuronParams, units: usize, dt_us: f64, spiking: bool) -> Result<Self> {
        Self::new(&vec![*params; units], dt_us, spiking)
    }

    pub fn is_spiking(&self) -> bool {
        self.spiking
    }

    pub fn leak_of(&self, unit: usize) -> E {
        self.leak[unit]
    }
}

/// Mutable integration state of a batch of populations (`batch * units`).
#[derive(Clone, Debug)]
pub struct NeuronState<E: Real> {
    pub v: Vec<E>,
    pub i: Vec<E>,
    refrac: Vec<u32>,
    batch: usize,
}

impl<E: Real> NeuronState<E> {
    /// All membranes start at leak, currents at zero.
    pub fn new(dynamics: &NeuronDynamics<E>, batch: usize) -> Self {
        let mut v = Vec::with_capacity(batch * dynamics.units);
        for _ in 0..batch {
            v.extend_from_slice(&dynamics.leak);
        }
        NeuronState {
            v,
            i: vec![E::zero(); batch * dynamics.units],
            refrac: vec![0; batch * dynamics.units],
            batch,
        }
    }

    /// One exponential-Euler step.
    ///
    /// `input` and `spikes_out` are `[batch * units]`; the gate, when given,
    /// suppresses spike emission but not the threshold/reset dynamics.
    pub fn step(
        &mut self,
        dynamics: &NeuronDynamics<E>,
        input: &[E],
        gate: Option<&[bool]>,
        spikes_out: &mut [E],
    ) {
        let units = dynamics.units;
        debug_assert_eq!(input.len(), self.batch * units);
        debug_assert_eq!(spikes_out.len(), self.batch * units);
        for b in 0..self.batch {
            let base = b * units;
            for n in 0..units {
                let k = base + n;
                self.i[k] = self.i[k] * dynamics.decay_syn[n] + input[k];
                spikes_out[k] = E::zero();
                if self.refrac[k] > 0 {
                    self.refrac[k] -= 1;
                    self.v[k] = dynamics.reset[n];
                    continue;
                }
                let leak = dynamics.leak[n];
                self.v[k] = leak + (self.v[k] - leak) * dynamics.decay_mem[n]
                    + self.i[k] * dynamics.gain[n];
                if dynamics.spiking && self.v[k] >= dynamics.threshold[n] {
                    self.v[k] = dynamics.reset[n];
                    self.refrac[k] = dynamics.refrac_steps.saturating_sub(1);
                    let emit = gate.map_or(true, |g| g[k]);
                    if emit {
                        spikes_out[k] = E::one();
                    }
                }
            }
        }
    }
}

/// Observables of one population run. The emulator fills the sparse fields,
/// a mock run fills the dense ones.
#[derive(Clone, Debug, Default)]
pub struct RawNeuronOutput<E: Real> {
    pub train: Option<SpikeTrain>,
    pub samples: Option<MembraneSamples>,
    pub spikes_dense: Option<TimeTensor<E>>,
    pub membrane_dense: Option<TimeTensor<E>>,
}

/// ADC sampling schedule of one run: per batch entry, the step each sample
/// lands in and its exact time.
pub(crate) struct SampleSchedule {
    /// Per batch: `(step, time_us)`, sorted by step.
    pub per_batch: Vec<Vec<(usize, f64)>>,
}

impl SampleSchedule {
    pub fn new(profile: &HardwareProfile, t_us: f64, dt_us: f64, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCADC_5A3D);
        let mut per_batch = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut times = Vec::new();
            let mut j = 0usize;
            loop {
                let nominal = j as f64 * profile.cadc_period_us;
                if nominal >= t_us {
                    break;
                }
                let jitter = if profile.cadc_jitter_us > 0.0 {
                    rng.gen_range(-profile.cadc_jitter_us..=profile.cadc_jitter_us)
                } else {
                    0.0
                };
                let t = nominal + jitter;
                if t >= 0.0 && t < t_us {
                    times.push(((t / dt_us).floor() as usize, t));
                }
                j += 1;
            }
            per_batch.push(times);
        }
        SampleSchedule { per_batch }
    }
}

fn check_population<E: Real>(
    input: &TimeTensor<E>,
    profile: &HardwareProfile,
) -> Result<()> {
    let n = input.shape().units;
    if n > profile.max_neurons {
        if profile.strict {
            return Err(Error::Resource(format!(
                "population of {n} exceeds {} neurons",
                profile.max_neurons
            )));
        }
        eprintln!(
            "warning: population of {n} exceeds {} neurons (non-strict mode)",
            profile.max_neurons
        );
    }
    Ok(())
}

/// Emulated LIF population: integrates `input_current` over the run, emits
/// spike events and sparse ADC membrane samples.
///
/// `seed` drives the ADC jitter; dynamics are deterministic.
pub fn lif_forward<E: Real>(
    input_current: &TimeTensor<E>,
    params: &NeuronParams,
    profile: &HardwareProfile,
    dt_us: f64,
    spike_gate: Option<&[bool]>,
    seed: u64,
) -> Result<(SpikeTrain, MembraneSamples)> {
    let shape = input_current.shape();
    check_population(input_current, profile)?;
    let dynamics = NeuronDynamics::uniform(params, shape.units, dt_us, true)?;
    let out = run_population(input_current, &dynamics, profile, dt_us, spike_gate, seed, false)?;
    Ok((out.train.expect("emulated run records events"), out.samples.expect("emulated run records samples")))
}

/// Emulated LI population: same dynamics with thresholding disabled.
pub fn li_forward<E: Real>(
    input_current: &TimeTensor<E>,
    params: &NeuronParams,
    profile: &HardwareProfile,
    dt_us: f64,
    seed: u64,
) -> Result<MembraneSamples> {
    let shape = input_current.shape();
    check_population(input_current, profile)?;
    let dynamics = NeuronDynamics::uniform(params, shape.units, dt_us, false)?;
    let out = run_population(input_current, &dynamics, profile, dt_us, None, seed, false)?;
    Ok(out.samples.expect("emulated run records samples"))
}

/// Steps a whole population over the run. With `dense` set, records the full
/// membrane/spike grid (mock path); otherwise spike events plus ADC samples.
pub(crate) fn run_population<E: Real>(
    input_current: &TimeTensor<E>,
    dynamics: &NeuronDynamics<E>,
    profile: &HardwareProfile,
    dt_us: f64,
    spike_gate: Option<&[bool]>,
    seed: u64,
    dense: bool,
) -> Result<RawNeuronOutput<E>> {
    let shape = input_current.shape();
    let (steps, batch, units) = (shape.steps, shape.batch, shape.units);
    let t_us = steps as f64 * dt_us;
    let mut state = NeuronState::new(dynamics, batch);
    let mut spike_buf = vec![E::zero(); batch * units];

    let mut out = RawNeuronOutput::default();
    let mut events = Vec::new();
    let mut samples = Vec::new();
    let mut dense_spikes = if dense { vec![E::zero(); shape.len()] } else { Vec::new() };
    let mut dense_membrane = if dense { vec![E::zero(); shape.len()] } else { Vec::new() };
    let schedule = if dense {
        None
    } else {
        Some(SampleSchedule::new(profile, t_us, dt_us, batch, seed))
    };
    let mut next_sample = vec![0usize; batch];

    for t in 0..steps {
        state.step(dynamics, input_current.step_slice(t), spike_gate, &mut spike_buf);
        if dense {
            let base = t * batch * units;
            dense_spikes[base..base + batch * units].copy_from_slice(&spike_buf);
            dense_membrane[base..base + batch * units].copy_from_slice(&state.v);
        } else {
            for b in 0..batch {
                for n in 0..units {
                    if spike_buf[b * units + n] != E::zero() {
                        events.push(SpikeEvent { time_us: t as f64 * dt_us, batch: b, unit: n });
                    }
                }
            }
            let schedule = schedule.as_ref().expect("emulated run has a schedule");
            for b in 0..batch {
                let times = &schedule.per_batch[b];
                while next_sample[b] < times.len() && times[next_sample[b]].0 == t {
                    let time_us = times[next_sample[b]].1;
                    for n in 0..units {
                        samples.push(MembraneSample {
                            time_us,
                            batch: b,
                            unit: n,
                            value: profile.digitize(state.v[b * units + n].into_f64()),
                        });
                    }
                    next_sample[b] += 1;
                }
            }
        }
    }

    if dense {
        out.spikes_dense = Some(TimeTensor::new(shape, dense_spikes)?);
        out.membrane_dense = Some(TimeTensor::new(shape, dense_membrane)?);
    } else {
        out.train = Some(SpikeTrain { events });
        out.samples = Some(MembraneSamples { samples });
    }
    Ok(out)
}
