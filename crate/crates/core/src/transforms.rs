//! Conversions between sparse backend observables and dense tensors, plus
//! membrane normalization and float-to-hardware weight mapping.

use crate::backend::{HwWeightMatrix, MembraneSamples, SpikeTrain};
use crate::error::{Error, Result};
use crate::tensor::{rf, Real, Shape, TimeTensor};

/// Dense time grid of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub t_us: f64,
    pub dt_us: f64,
}

impl Grid {
    pub fn new(t_us: f64, dt_us: f64) -> Result<Self> {
        if t_us <= 0.0 || dt_us <= 0.0 {
            return Err(Error::Parameter("grid extent and step must be positive".into()));
        }
        Ok(Grid { t_us, dt_us })
    }

    pub fn steps(&self) -> usize {
        (self.t_us / self.dt_us).ceil() as usize
    }

    /// Grid bin holding time `t`.
    pub fn bin(&self, t_us: f64) -> usize {
        (t_us / self.dt_us).floor() as usize
    }
}

/// Binned `{0,1}` spike tensor plus the number of bin collisions (events
/// beyond the first in one bin saturate and are only counted).
pub fn spikes_to_dense<E: Real>(
    train: &SpikeTrain,
    grid: Grid,
    batch: usize,
    units: usize,
) -> Result<(TimeTensor<E>, u64)> {
    let shape = Shape::new(grid.steps(), batch, units);
    let mut data = vec![E::zero(); shape.len()];
    let mut collisions = 0u64;
    for e in &train.events {
        if e.batch >= batch || e.unit >= units {
            return Err(Error::Index(format!(
                "spike event (batch {}, unit {}) outside shape ({batch}, {units})",
                e.batch, e.unit
            )));
        }
        if e.time_us >= grid.t_us || e.time_us < 0.0 {
            return Err(Error::Index(format!(
                "spike time {} outside grid [0, {})",
                e.time_us, grid.t_us
            )));
        }
        let idx = shape.index(grid.bin(e.time_us), e.batch, e.unit);
        if data[idx] != E::zero() {
            collisions += 1;
        } else {
            data[idx] = E::one();
        }
    }
    Ok((TimeTensor::new(shape, data)?, collisions))
}

/// Dense events from a binary spike tensor; inverse of [`spikes_to_dense`]
/// on collision-free trains.
pub fn dense_to_spikes<E: Real>(dense: &TimeTensor<E>, grid: Grid) -> SpikeTrain {
    let shape = dense.shape();
    let mut events = Vec::new();
    for t in 0..shape.steps {
        for b in 0..shape.batch {
            for n in 0..shape.units {
                if dense.get(t, b, n) != E::zero() {
                    events.push(crate::backend::SpikeEvent {
                        time_us: t as f64 * grid.dt_us,
                        batch: b,
                        unit: n,
                    });
                }
            }
        }
    }
    SpikeTrain { events }
}

/// Piecewise-linear interpolation of sparse ADC samples onto the grid, in
/// ADC counts. Constant extrapolation before the first and after the last
/// sample; a `(batch, unit)` pair without samples is a data error.
pub fn interpolate_membrane<E: Real>(
    samples: &MembraneSamples,
    grid: Grid,
    batch: usize,
    units: usize,
) -> Result<TimeTensor<E>> {
    let steps = grid.steps();
    let shape = Shape::new(steps, batch, units);
    // Gather per-(batch, unit) sample series; input order within a pair is
    // already time-sorted by construction.
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); batch * units];
    for s in &samples.samples {
        if s.batch >= batch || s.unit >= units {
            return Err(Error::Index(format!(
                "membrane sample (batch {}, unit {}) outside shape ({batch}, {units})",
                s.batch, s.unit
            )));
        }
        series[s.batch * units + s.unit].push((s.time_us, s.value as f64));
    }
    let mut data = vec![E::zero(); shape.len()];
    for b in 0..batch {
        for n in 0..units {
            let pts = &series[b * units + n];
            if pts.is_empty() {
                return Err(Error::Data(format!(
                    "no membrane samples for batch {b}, unit {n}"
                )));
            }
            let mut seg = 0usize;
            for t in 0..steps {
                let x = t as f64 * grid.dt_us;
                while seg + 1 < pts.len() && pts[seg + 1].0 <= x {
                    seg += 1;
                }
                let y = if x <= pts[0].0 {
                    pts[0].1
                } else if seg + 1 >= pts.len() {
                    pts[pts.len() - 1].1
                } else {
                    let (x0, y0) = pts[seg];
                    let (x1, y1) = pts[seg + 1];
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                };
                data[shape.index(t, b, n)] = rf(y);
            }
        }
    }
    TimeTensor::new(shape, data)
}

/// ADC counts to model units: `(value - offset) / scale`.
pub fn normalize_membrane<E: Real>(
    dense: &TimeTensor<E>,
    offset: f64,
    scale: f64,
) -> Result<TimeTensor<E>> {
    if scale == 0.0 {
        return Err(Error::Parameter("membrane normalization scale must be nonzero".into()));
    }
    let off = rf::<E>(offset);
    let inv = rf::<E>(1.0 / scale);
    Ok(dense.map(|x| (x - off) * inv))
}

/// Model units back to ADC counts: `value * scale + offset`.
pub fn denormalize_membrane<E: Real>(
    dense: &TimeTensor<E>,
    offset: f64,
    scale: f64,
) -> Result<TimeTensor<E>> {
    if scale == 0.0 {
        return Err(Error::Parameter("membrane normalization scale must be nonzero".into()));
    }
    let off = rf::<E>(offset);
    let s = rf::<E>(scale);
    Ok(dense.map(|x| x * s + off))
}

/// Quantization report of one weight matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SaturationReport {
    /// Entries clamped to the representable range.
    pub saturated: u64,
    pub total: u64,
}

/// Rounds `w * scale` half away from zero and clamps into the hardware
/// range. Saturation is reported, not fatal.
pub fn weight_to_hardware<E: Real>(
    weights: &TimeTensor<E>,
    scale: f64,
    magnitude: i8,
) -> Result<(HwWeightMatrix, SaturationReport)> {
    if scale <= 0.0 {
        return Err(Error::Parameter("weight scale must be positive".into()));
    }
    let shape = weights.shape();
    if shape.steps != 1 {
        return Err(Error::Dimension(format!(
            "weight matrix must be [1,N,M], got {shape}"
        )));
    }
    let mut report = SaturationReport { saturated: 0, total: shape.len() as u64 };
    let limit = magnitude as f64;
    let data = weights
        .data()
        .iter()
        .map(|&w| {
            // f64::round ties away from zero, matching the converter.
            let q = (w.into_f64() * scale).round();
            if q.abs() > limit {
                report.saturated += 1;
            }
            q.clamp(-limit, limit) as i8
        })
        .collect();
    Ok((HwWeightMatrix::new(shape.batch, shape.units, data)?, report))
}

/// Float weights as the hardware will realize them: `q(w) / scale`.
///
/// This is the forward side of the straight-through estimator; the backward
/// pass treats the mapping as identity.
pub fn quantized_weights<E: Real>(
    weights: &TimeTensor<E>,
    scale: f64,
    magnitude: i8,
) -> Result<(TimeTensor<E>, SaturationReport)> {
    let (hw, report) = weight_to_hardware(weights, scale, magnitude)?;
    let inv = 1.0 / scale;
    let data: Vec<E> = hw.data.iter().map(|&q| rf(q as f64 * inv)).collect();
    Ok((TimeTensor::new(weights.shape(), data)?, report))
}
