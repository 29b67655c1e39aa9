//! Energy and carbon-footprint estimates from model FLOPs.
//!
//! Forward-pass energy is `flops * samples * epochs / gpu_efficiency`; the
//! backward pass is modeled at twice the forward cost, so a training pass
//! costs three forward passes. Carbon mass follows from grid intensity in
//! grams of CO2-equivalent per kilowatt-hour.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Joules per kilowatt-hour.
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Hours in a (non-leap) year, used for per-user fleet projections.
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Effective GPU efficiency in FLOPs per joule used by default.
///
/// Solved from the published training-energy figures of the reference
/// models; the value reproduces all three within 0.2%. Always overridable.
pub const DEFAULT_GPU_EFFICIENCY: f64 = 3.613e9;

/// Grid carbon intensity default, grams CO2-eq per kWh (US west coast).
pub const DEFAULT_CARBON_INTENSITY: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnergyError {
    #[error("{what} must be strictly positive")]
    NonPositive { what: &'static str },
}

/// Device efficiency and grid intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// FLOPs per joule (identically, sustained FLOPS per watt).
    pub gpu_efficiency: f64,
    /// Grams CO2-eq per kilowatt-hour.
    pub carbon_intensity: f64,
}

impl EnergyParams {
    pub fn new(gpu_efficiency: f64, carbon_intensity: f64) -> Result<Self, EnergyError> {
        if !(gpu_efficiency > 0.0) || !gpu_efficiency.is_finite() {
            return Err(EnergyError::NonPositive { what: "gpu_efficiency" });
        }
        if !(carbon_intensity > 0.0) || !carbon_intensity.is_finite() {
            return Err(EnergyError::NonPositive { what: "carbon_intensity" });
        }
        Ok(Self { gpu_efficiency, carbon_intensity })
    }
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            gpu_efficiency: DEFAULT_GPU_EFFICIENCY,
            carbon_intensity: DEFAULT_CARBON_INTENSITY,
        }
    }
}

/// Training-run shape: sample count and epochs.
///
/// Epochs may be fractional so category averages can be used directly. The
/// batch size is recorded for reporting but does not enter the energy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub training_samples: u64,
    pub epochs: f64,
    pub batch_size: u32,
}

impl TrainingConfig {
    pub fn new(training_samples: u64, epochs: f64, batch_size: u32) -> Result<Self, EnergyError> {
        if training_samples < 1 {
            return Err(EnergyError::NonPositive { what: "training_samples" });
        }
        if !(epochs > 0.0) || !epochs.is_finite() {
            return Err(EnergyError::NonPositive { what: "epochs" });
        }
        Ok(Self { training_samples, epochs, batch_size })
    }
}

/// Energy split of one training run, with its carbon mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_forward_j: f64,
    pub e_backward_j: f64,
    pub e_training_j: f64,
    pub carbon_training_g: f64,
}

/// Energy of all forward passes of a training run, in joules.
pub fn energy_forward(m_flops: u64, cfg: &TrainingConfig, params: &EnergyParams) -> f64 {
    // keep the flops * samples product exact before going to floats
    let passes = m_flops as u128 * cfg.training_samples as u128;
    passes as f64 * cfg.epochs / params.gpu_efficiency
}

/// Full training energy: backward is twice forward, training is three times.
pub fn energy_training(m_flops: u64, cfg: &TrainingConfig, params: &EnergyParams) -> EnergyReport {
    let e_forward_j = energy_forward(m_flops, cfg, params);
    let e_training_j = 3.0 * e_forward_j;
    EnergyReport {
        e_forward_j,
        e_backward_j: 2.0 * e_forward_j,
        e_training_j,
        carbon_training_g: carbon_from_energy(e_training_j, params.carbon_intensity),
    }
}

/// Energy of `n_predictions` forward passes, in joules.
pub fn energy_prediction(m_flops: u64, n_predictions: u64, params: &EnergyParams) -> f64 {
    (m_flops as u128 * n_predictions as u128) as f64 / params.gpu_efficiency
}

/// Grams of CO2-equivalent for `e` joules at `intensity` g/kWh.
pub fn carbon_from_energy(e_joules: f64, intensity: f64) -> f64 {
    e_joules / JOULES_PER_KWH * intensity
}

/// One point of a fleet projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub predictions: u64,
    pub energy_j: f64,
    pub carbon_g: f64,
}

/// Carbon projection over a growing prediction count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCurve {
    /// Log-spaced points 1, 10, 100, ... capped by the annual total.
    pub points: Vec<ProjectionPoint>,
    pub annual: ProjectionPoint,
}

/// Projects prediction carbon over log-spaced counts up to
/// `predictions_per_year`, which is always included as the final point.
pub fn project_carbon(
    m_flops: u64,
    predictions_per_year: u64,
    params: &EnergyParams,
) -> ProjectionCurve {
    assert!(predictions_per_year >= 1, "projection needs at least one prediction");
    let point = |n: u64| {
        let energy_j = energy_prediction(m_flops, n, params);
        ProjectionPoint { predictions: n, energy_j, carbon_g: carbon_from_energy(energy_j, params.carbon_intensity) }
    };
    let mut points = Vec::new();
    let mut n: u64 = 1;
    while n < predictions_per_year {
        points.push(point(n));
        match n.checked_mul(10) {
            Some(next) => n = next,
            None => break,
        }
    }
    let annual = point(predictions_per_year);
    points.push(annual);
    ProjectionCurve { points, annual }
}

/// Predictions per year for a fleet of `users` each asking
/// `per_user_per_hour` predictions every hour.
pub fn predictions_per_year_for_users(users: f64, per_user_per_hour: f64) -> f64 {
    users * per_user_per_hour * HOURS_PER_YEAR
}

/// Solves the GPU efficiency (FLOPs per joule) that makes a training run of
/// `m_flops` cost exactly `e_training_target` joules.
///
/// Exact right-inverse of [`energy_training`] on the training-energy field.
pub fn backsolve_gpu_efficiency(
    m_flops: u64,
    cfg: &TrainingConfig,
    e_training_target: f64,
) -> Result<f64, EnergyError> {
    if !(e_training_target > 0.0) || !e_training_target.is_finite() {
        return Err(EnergyError::NonPositive { what: "e_training_target" });
    }
    if m_flops < 1 {
        return Err(EnergyError::NonPositive { what: "m_flops" });
    }
    let passes = m_flops as u128 * cfg.training_samples as u128;
    Ok(3.0 * passes as f64 * cfg.epochs / e_training_target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    fn params(g: f64) -> EnergyParams {
        EnergyParams::new(g, 250.0).unwrap()
    }

    const REF_FLOPS: u64 = 345_000_000;
    const REF_SAMPLES: u64 = 15_723;
    const REF_EPOCHS: f64 = 33.75;

    #[test]
    fn forward_energy_reference_run() {
        let cfg = TrainingConfig::new(REF_SAMPLES, REF_EPOCHS, 32).unwrap();
        let e = energy_forward(REF_FLOPS, &cfg, &params(3.613e9));
        assert!(close(e, 5.067e4, 1e-3), "e_forward = {e}");
        let report = energy_training(REF_FLOPS, &cfg, &params(3.613e9));
        assert!(close(report.e_training_j, 152_000.0, 5e-3), "{}", report.e_training_j);
    }

    #[test]
    fn forward_energy_trivial_cases() {
        let cfg = TrainingConfig::new(100, 2.0, 32).unwrap();
        assert_eq!(energy_forward(0, &cfg, &params(1e9)), 0.0);
        let unit = TrainingConfig::new(1, 1.0, 1).unwrap();
        assert_eq!(energy_forward(1_000_000_000, &unit, &params(1e9)), 1.0);
    }

    #[test]
    fn training_split_is_exactly_one_two_three() {
        for flops in [0u64, 7, 345_000_000, 999_999_937] {
            for samples in [1u64, 321, 15_723] {
                for epochs in [0.25f64, 1.0, 33.75, 78.75] {
                    let cfg = TrainingConfig::new(samples, epochs, 32).unwrap();
                    let r = energy_training(flops, &cfg, &params(3.613e9));
                    assert_eq!(r.e_backward_j, 2.0 * r.e_forward_j);
                    assert_eq!(r.e_training_j, 3.0 * r.e_forward_j);
                }
            }
        }
    }

    #[test]
    fn published_training_energies_reproduce() {
        let g = params(3.613e9);
        let rows: [(u64, f64, f64); 3] = [
            (345_000_000, 33.75, 152_000.0),
            (535_000_000, 37.75, 264_000.0),
            (2_479_000_000, 78.75, 2_547_000.0),
        ];
        for (flops, epochs, energy) in rows {
            let cfg = TrainingConfig::new(REF_SAMPLES, epochs, 32).unwrap();
            let r = energy_training(flops, &cfg, &g);
            assert!(close(r.e_training_j, energy, 0.01), "{flops}: {}", r.e_training_j);
        }
        // carbon at 250 g/kWh for the first row
        let cfg = TrainingConfig::new(REF_SAMPLES, 33.75, 32).unwrap();
        let r = energy_training(345_000_000, &cfg, &g);
        assert!(close(r.carbon_training_g, 10.6, 0.01), "{}", r.carbon_training_g);
    }

    #[test]
    fn prediction_energy() {
        let g = params(3.613e9);
        let one = energy_prediction(REF_FLOPS, 1, &g);
        assert!(close(one, 0.0955, 2e-3), "per-prediction J = {one}");
        assert_eq!(energy_prediction(REF_FLOPS, 0, &g), 0.0);
        assert_eq!(energy_prediction(REF_FLOPS, 2, &g), 2.0 * one);
    }

    #[test]
    fn carbon_conversion_published_rows() {
        assert!((carbon_from_energy(152_000.0, 250.0) - 10.6).abs() < 0.05);
        assert!((carbon_from_energy(264_000.0, 250.0) - 18.3).abs() < 0.05);
        assert!((carbon_from_energy(2_547_000.0, 250.0) - 176.9).abs() < 0.05);
        assert_eq!(carbon_from_energy(3.6e6, 250.0), 250.0);
    }

    #[test]
    fn carbon_is_linear_in_energy() {
        for a in [0.0, 0.5, 2.0, 1e6] {
            let base = carbon_from_energy(123.456, 250.0);
            assert!(close(carbon_from_energy(a * 123.456, 250.0), a * base, 1e-12));
        }
    }

    #[test]
    fn forward_energy_linearity() {
        let cfg = TrainingConfig::new(1000, 4.0, 32).unwrap();
        let g = params(2e9);
        let base = energy_forward(1_000_000, &cfg, &g);
        assert!(close(energy_forward(3_000_000, &cfg, &g), 3.0 * base, 1e-12));
        let cfg2 = TrainingConfig::new(2000, 4.0, 32).unwrap();
        assert!(close(energy_forward(1_000_000, &cfg2, &g), 2.0 * base, 1e-12));
        let cfg3 = TrainingConfig::new(1000, 8.0, 32).unwrap();
        assert!(close(energy_forward(1_000_000, &cfg3, &g), 2.0 * base, 1e-12));
        let half = params(4e9);
        assert!(close(energy_forward(1_000_000, &cfg, &half), 0.5 * base, 1e-12));
    }

    #[test]
    fn backsolve_reproduces_reference_efficiency() {
        let cfg = TrainingConfig::new(REF_SAMPLES, REF_EPOCHS, 32).unwrap();
        let g = backsolve_gpu_efficiency(REF_FLOPS, &cfg, 152_000.0).unwrap();
        assert!(close(g, 3.613e9, 5e-3), "back-solved {g}");
    }

    #[test]
    fn backsolve_is_right_inverse_of_training_energy() {
        let cfg = TrainingConfig::new(777, 12.5, 8).unwrap();
        for target in [1.0, 152_000.0, 9.9e7] {
            let g = backsolve_gpu_efficiency(41_000_000, &cfg, target).unwrap();
            let r = energy_training(41_000_000, &cfg, &params(g));
            assert!(close(r.e_training_j, target, 1e-12));
        }
    }

    #[test]
    fn backsolved_efficiency_transfers_across_published_rows() {
        let cfg = TrainingConfig::new(REF_SAMPLES, REF_EPOCHS, 32).unwrap();
        let g = backsolve_gpu_efficiency(REF_FLOPS, &cfg, 152_000.0).unwrap();
        let gp = params(g);

        let chin = TrainingConfig::new(REF_SAMPLES, 37.75, 32).unwrap();
        let r = energy_training(535_000_000, &chin, &gp);
        assert!(close(r.e_training_j, 264_000.0, 0.01), "{}", r.e_training_j);

        let cerar = TrainingConfig::new(REF_SAMPLES, 78.75, 32).unwrap();
        let r = energy_training(2_479_000_000, &cerar, &gp);
        assert!(close(r.e_training_j, 2_547_000.0, 0.01), "{}", r.e_training_j);
    }

    #[test]
    fn fleet_size_matches_mobile_user_estimate() {
        let n = predictions_per_year_for_users(7.4e9, 1.0);
        assert!(close(n, 6.48e13, 0.01), "n = {n}");
        // one significant-figure agreement with 65e12
        assert_eq!((n / 1e12).round() as u64, 65);
    }

    #[test]
    fn projection_curve_is_log_spaced_monotone_and_linear() {
        // 7.4e9 users at one prediction per user per hour
        let curve = project_carbon(REF_FLOPS, 64_824_000_000_000, &params(3.613e9));
        assert_eq!(curve.points.first().unwrap().predictions, 1);
        assert_eq!(curve.points.last().unwrap().predictions, 64_824_000_000_000);
        let per = curve.points[0].carbon_g;
        for w in curve.points.windows(2) {
            assert!(w[1].carbon_g > w[0].carbon_g);
            assert!(w[1].predictions > w[0].predictions);
        }
        for p in &curve.points {
            assert!(close(p.carbon_g, per * p.predictions as f64, 1e-9));
        }
        // annual total around 4.3e8 g for the reference model
        assert!(close(curve.annual.carbon_g, 4.3e8, 0.02), "{}", curve.annual.carbon_g);
    }

    #[test]
    fn projection_with_single_prediction() {
        let curve = project_carbon(REF_FLOPS, 1, &params(3.613e9));
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.annual.predictions, 1);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(EnergyParams::new(0.0, 250.0).is_err());
        assert!(EnergyParams::new(1e9, -1.0).is_err());
        assert!(TrainingConfig::new(0, 1.0, 32).is_err());
        assert!(TrainingConfig::new(10, 0.0, 32).is_err());
        let cfg = TrainingConfig::new(10, 1.0, 32).unwrap();
        assert!(backsolve_gpu_efficiency(1000, &cfg, 0.0).is_err());
    }
}
