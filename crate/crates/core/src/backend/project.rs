//! Synaptic projection through the quantized weight matrix.

use super::HardwareProfile;
use crate::error::{Error, Result};
use crate::tensor::{rf, Real, Shape, TimeTensor};

/// Integer weight matrix as configured on the synapse array, row-major
/// `[inputs, outputs]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HwWeightMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i8>,
}

impl HwWeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "weight matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(HwWeightMatrix { rows, cols, data })
    }

    pub fn check_range(&self, profile: &HardwareProfile) -> Result<()> {
        let m = profile.weight_magnitude;
        for &w in &self.data {
            if w < -m || w > m {
                return Err(Error::Quantization(format!(
                    "hardware weight {w} outside [-{m}, {m}]"
                )));
            }
        }
        Ok(())
    }
}

/// `current[t,b,m] = sum_n spikes[t,b,n] * w[n,m] * current_lsb`.
///
/// `current_lsb` converts one integer weight step into model units of
/// synaptic current.
pub fn project<E: Real>(
    spikes_dense: &TimeTensor<E>,
    hw_weights: &HwWeightMatrix,
    profile: &HardwareProfile,
    current_lsb: f64,
) -> Result<TimeTensor<E>> {
    let shape = spikes_dense.shape();
    if shape.units != hw_weights.rows {
        return Err(Error::Dimension(format!(
            "projection: {} input units vs weight matrix {}x{}",
            shape.units, hw_weights.rows, hw_weights.cols
        )));
    }
    hw_weights.check_range(profile)?;
    if hw_weights.rows > profile.max_fan_in {
        if profile.strict {
            return Err(Error::Resource(format!(
                "fan-in {} exceeds {} synapses per column",
                hw_weights.rows, profile.max_fan_in
            )));
        }
        eprintln!(
            "warning: fan-in {} exceeds {} synapses per column (non-strict mode)",
            hw_weights.rows, profile.max_fan_in
        );
    }
    let lsb = rf::<E>(current_lsb);
    let (n_in, n_out) = (hw_weights.rows, hw_weights.cols);
    let out_shape = Shape::new(shape.steps, shape.batch, n_out);
    let mut out = vec![E::zero(); out_shape.len()];
    let rows = shape.steps * shape.batch;
    for r in 0..rows {
        let zi = &spikes_dense.data()[r * n_in..(r + 1) * n_in];
        let oi = &mut out[r * n_out..(r + 1) * n_out];
        for (n, &z) in zi.iter().enumerate() {
            if z == E::zero() {
                continue;
            }
            let wn = &hw_weights.data[n * n_out..(n + 1) * n_out];
            for (o, &w) in oi.iter_mut().zip(wn.iter()) {
                *o += z * rf::<E>(w as f64) * lsb;
            }
        }
    }
    TimeTensor::new(out_shape, out)
}
