//! Fixed-pattern parameter variation.
//!
//! Analog circuits differ unit by unit; the emulator reproduces this as a
//! per-unit multiplicative perturbation of the time constants and threshold,
//! drawn once per seed so the pattern is stable across runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{HardwareProfile, NeuronParams};

/// Per-unit parameter arrays under the profile's noise spread. Gaussian
/// factors are clipped to +/- 3 sigma; the same seed yields the same array.
pub fn apply_noise(
    params: &NeuronParams,
    units: usize,
    profile: &HardwareProfile,
    seed: u64,
) -> Vec<NeuronParams> {
    if profile.noise == 0.0 {
        return vec![*params; units];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0F1E_2D3C_4B5A_6978);
    let normal = Normal::new(0.0f64, profile.noise).expect("spread validated by profile");
    let mut factor = || {
        let f = normal.sample(&mut rng).clamp(-3.0 * profile.noise, 3.0 * profile.noise);
        1.0 + f
    };
    (0..units)
        .map(|_| {
            let mut p = *params;
            p.tau_mem_us *= factor();
            p.tau_syn_us *= factor();
            // Threshold varies relative to its distance from leak so the
            // spiking condition stays well-formed.
            p.threshold = p.leak + (p.threshold - p.leak) * factor();
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_is_identity() {
        let profile = HardwareProfile { noise: 0.0, ..Default::default() };
        let params = NeuronParams::default();
        let per_unit = apply_noise(&params, 8, &profile, 7);
        for p in &per_unit {
            assert_eq!(p.tau_mem_us, params.tau_mem_us);
            assert_eq!(p.tau_syn_us, params.tau_syn_us);
            assert_eq!(p.threshold, params.threshold);
        }
    }

    #[test]
    fn same_seed_same_arrays() {
        let profile = HardwareProfile { noise: 0.1, ..Default::default() };
        let params = NeuronParams::default();
        let a = apply_noise(&params, 64, &profile, 123);
        let b = apply_noise(&params, 64, &profile, 123);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.tau_mem_us, y.tau_mem_us);
            assert_eq!(x.tau_syn_us, y.tau_syn_us);
            assert_eq!(x.threshold, y.threshold);
        }
        let c = apply_noise(&params, 64, &profile, 124);
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.tau_mem_us != y.tau_mem_us));
    }

    #[test]
    fn empirical_spread_matches_config() {
        let profile = HardwareProfile { noise: 0.1, ..Default::default() };
        let params = NeuronParams::default();
        let per_unit = apply_noise(&params, 10_000, &profile, 99);
        let mean: f64 =
            per_unit.iter().map(|p| p.tau_mem_us).sum::<f64>() / per_unit.len() as f64;
        let var: f64 = per_unit
            .iter()
            .map(|p| (p.tau_mem_us - mean).powi(2))
            .sum::<f64>()
            / per_unit.len() as f64;
        let std = var.sqrt();
        let expected = params.tau_mem_us * profile.noise;
        assert!(
            (std - expected).abs() < 0.1 * expected,
            "std {std} vs expected {expected}"
        );
    }
}
