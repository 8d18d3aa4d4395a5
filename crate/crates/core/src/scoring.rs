//! Aiming-strategy quality score and comparison metrics.
//!
//! The score rewards the energy collected on each panel and penalizes
//! non-uniformity of the central part of the vertical flux profile. Per
//! panel: the vertical profile is the horizontal mean of the concentration
//! map; it is min-max normalized; the distribution difference is the mean
//! shortfall from the panel maximum over a central window of vertical nodes;
//! the panel score is the trapezoidal profile integral minus `lambda` times
//! that shortfall. The overall score is the heliostat-weighted mean of the
//! panel scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{spillage, FluxMap};
use crate::plant::{Heliostat, PlantConfig, SunState};

/// Per-panel and overall quality-score terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Trapezoidal integral of each panel's vertical profile, suns x m.
    pub panel_energy: Vec<f64>,
    /// Mean central shortfall from the panel maximum, in [0, 1].
    pub panel_distribution_difference: Vec<f64>,
    /// `panel_energy - lambda * panel_distribution_difference`.
    pub panel_score: Vec<f64>,
    /// Heliostats aimed at each panel (the weighting of the overall score).
    pub panel_weights: Vec<usize>,
    /// Weighted mean of the panel scores, suns x m.
    pub quality_score: f64,
    /// Penalty weight used, suns x m.
    pub lambda: f64,
}

/// Flux-map summary used for strategy comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Heliostat-weighted mean panel energy (the zero-penalty quality score),
    /// suns x m.
    pub collected_energy: f64,
    /// Heliostat-weighted mean distribution difference, dimensionless.
    pub distribution_difference: f64,
    /// Spillage loss factor.
    pub spl: f64,
    /// Peak concentration over all nodes, suns.
    pub max_suns: f64,
}

/// Composite trapezoidal integral of a vertical profile with spacing `dv`.
pub fn panel_energy(profile: &[f64], dv: f64) -> Result<f64> {
    if profile.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "vertical profile needs at least 2 nodes, got {}",
            profile.len()
        )));
    }
    Ok(profile.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dv).sum())
}

/// Index range of the central vertical window: `floor(v * fraction)` nodes
/// (at least one), centered.
pub fn central_window(v_nodes: usize, central_fraction: f64) -> std::ops::Range<usize> {
    let count = ((v_nodes as f64 * central_fraction).floor() as usize).clamp(1, v_nodes);
    let start = (v_nodes - count) / 2;
    start..start + count
}

/// Mean central shortfall of a profile from its maximum after min-max
/// normalization. A flat profile normalizes to all-ones by convention, so it
/// is never penalized.
fn distribution_difference(profile: &[f64], window: std::ops::Range<usize>) -> f64 {
    let min = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut total = 0.0;
    for v in window.clone() {
        let normalized = if span > 0.0 { (profile[v] - min) / span } else { 1.0 };
        total += 1.0 - normalized;
    }
    total / window.len() as f64
}

/// Computes the quality score of a flux map.
///
/// `panel_weights[p]` is the number of heliostats aimed at panel `p`; panels
/// with zero weight are skipped in the weighted mean.
pub fn quality_score(
    flux: &FluxMap,
    lambda: f64,
    panel_weights: &[usize],
    central_fraction: f64,
) -> Result<ScoreBreakdown> {
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(central_fraction > 0.0 && central_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "central_fraction must be in (0, 1], got {central_fraction}"
        )));
    }
    let panels = flux.mesh.panel_count;
    if panel_weights.len() != panels {
        return Err(Error::Shape(format!(
            "got {} panel weights for {} panels",
            panel_weights.len(),
            panels
        )));
    }

    let window = central_window(flux.mesh.v_nodes, central_fraction);
    let mut breakdown = ScoreBreakdown {
        panel_energy: Vec::with_capacity(panels),
        panel_distribution_difference: Vec::with_capacity(panels),
        panel_score: Vec::with_capacity(panels),
        panel_weights: panel_weights.to_vec(),
        quality_score: 0.0,
        lambda,
    };

    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for (p, &weight) in panel_weights.iter().enumerate() {
        let profile = flux.vertical_profile(p);
        let energy = panel_energy(&profile, flux.mesh.dv)?;
        let dd = distribution_difference(&profile, window.clone());
        let score = energy - lambda * dd;
        breakdown.panel_energy.push(energy);
        breakdown.panel_distribution_difference.push(dd);
        breakdown.panel_score.push(score);
        weighted += score * weight as f64;
        total_weight += weight as f64;
    }
    if total_weight <= 0.0 {
        return Err(Error::Domain("all panel weights are zero".into()));
    }
    breakdown.quality_score = weighted / total_weight;
    Ok(breakdown)
}

/// Summary metrics of a flux map: weighted mean energy and distribution
/// difference, spillage, and peak concentration.
pub fn metrics(
    flux: &FluxMap,
    field: &[Heliostat],
    sun: &SunState,
    config: &PlantConfig,
    central_fraction: f64,
) -> Result<MetricsReport> {
    let weights = crate::plant::sector_counts(field, config.panel_count);
    let breakdown = quality_score(flux, 0.0, &weights, central_fraction)?;
    let total_weight: f64 = weights.iter().map(|&w| w as f64).sum();
    let dd = breakdown
        .panel_distribution_difference
        .iter()
        .zip(&weights)
        .map(|(dd, &w)| dd * w as f64)
        .sum::<f64>()
        / total_weight;
    Ok(MetricsReport {
        collected_energy: breakdown.quality_score,
        distribution_difference: dd,
        spl: spillage(flux, field, sun, config)?,
        max_suns: flux.max_suns(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::ReceiverMesh;
    use ndarray::Array3;
    use std::sync::Arc;

    fn single_panel_map(profile: &[f64], dv_height: f64) -> FluxMap {
        let v = profile.len();
        let mut cfg = PlantConfig::dunhuang();
        cfg.panel_count = 1;
        cfg.mesh_vertical = v;
        cfg.mesh_horizontal = 1;
        cfg.receiver_height = dv_height * (v - 1) as f64;
        let mesh = Arc::new(ReceiverMesh::from_config(&cfg));
        let mut c = Array3::zeros((1, v, 1));
        for (i, &x) in profile.iter().enumerate() {
            c[[0, i, 0]] = x;
        }
        FluxMap::from_parts(c, mesh, 1.0, 1)
    }

    #[test]
    fn panel_energy_matches_hand_values() {
        // Constant profile over height RH integrates to c * RH.
        let profile = vec![2.0; 24];
        assert!((panel_energy(&profile, 0.4).unwrap() - 2.0 * 0.4 * 23.0).abs() < 1e-12);
        // Linear ramp integrates to c * RH / 2.
        let n = 101;
        let ramp: Vec<f64> = (0..n).map(|i| 3.0 * i as f64 / (n - 1) as f64).collect();
        let dv = 9.2 / (n - 1) as f64;
        assert!((panel_energy(&ramp, dv).unwrap() - 3.0 * 9.2 / 2.0).abs() < 1e-12);
        // Hand trapezoid.
        assert!((panel_energy(&[1.0, 3.0, 2.0], 1.0).unwrap() - 4.5).abs() < 1e-12);
        // Too-short profile is rejected.
        assert!(panel_energy(&[1.0], 1.0).is_err());
    }

    #[test]
    fn central_window_picks_middle_node_of_three() {
        assert_eq!(central_window(3, 0.5), 1..2);
        assert_eq!(central_window(23, 0.5), 6..17);
        assert_eq!(central_window(4, 1.0), 0..4);
    }

    #[test]
    fn hand_example_scores_two_point_five() {
        let map = single_panel_map(&[0.0, 2.0, 1.0], 1.0);
        let b = quality_score(&map, 1.0, &[5], 0.5).unwrap();
        assert_eq!(b.panel_energy[0], 2.5);
        assert_eq!(b.panel_distribution_difference[0], 0.0);
        assert_eq!(b.quality_score, 2.5);
    }

    #[test]
    fn uniform_map_has_zero_penalty() {
        let map = single_panel_map(&[1.5; 23], 0.4);
        let b = quality_score(&map, 5000.0, &[10], 0.5).unwrap();
        assert_eq!(b.panel_distribution_difference[0], 0.0);
        assert!((b.quality_score - b.panel_energy[0]).abs() < 1e-12 * b.panel_energy[0]);
    }

    #[test]
    fn zero_lambda_score_is_pure_energy() {
        let map = single_panel_map(&[0.0, 5.0, 1.0, 4.0, 2.0], 1.0);
        let b = quality_score(&map, 0.0, &[3], 0.5).unwrap();
        assert_eq!(b.quality_score, b.panel_energy[0]);
    }

    #[test]
    fn score_non_increasing_in_lambda() {
        let map = single_panel_map(&[0.0, 5.0, 1.0, 4.0, 2.0], 1.0);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 10.0, 100.0, 1000.0] {
            let b = quality_score(&map, lambda, &[3], 0.5).unwrap();
            assert!(b.quality_score <= last + 1e-12);
            last = b.quality_score;
        }
    }

    #[test]
    fn scaling_flux_scales_energy_not_dd() {
        let profile = [0.3, 2.0, 1.1, 1.7, 0.2];
        let map = single_panel_map(&profile, 1.0);
        let scaled: Vec<f64> = profile.iter().map(|x| x * 7.0).collect();
        let map7 = single_panel_map(&scaled, 1.0);
        let a = quality_score(&map, 0.0, &[2], 0.5).unwrap();
        let b = quality_score(&map7, 0.0, &[2], 0.5).unwrap();
        assert!((b.panel_energy[0] - 7.0 * a.panel_energy[0]).abs() < 1e-9);
        assert!(
            (b.panel_distribution_difference[0] - a.panel_distribution_difference[0]).abs()
                < 1e-12
        );
    }

    #[test]
    fn dd_zero_iff_central_window_at_maximum() {
        // Peak inside the window, window profile at max: dd = 0.
        let map = single_panel_map(&[0.0, 1.0, 1.0, 1.0, 0.0], 1.0);
        let b = quality_score(&map, 1.0, &[1], 0.6).unwrap();
        assert_eq!(b.panel_distribution_difference[0], 0.0);
        // Window not at max: dd > 0.
        let map = single_panel_map(&[0.0, 1.0, 0.9, 1.0, 0.0], 1.0);
        let b = quality_score(&map, 1.0, &[1], 0.6).unwrap();
        assert!(b.panel_distribution_difference[0] > 0.0);
    }

    #[test]
    fn zero_total_weight_is_error() {
        let map = single_panel_map(&[1.0, 2.0, 1.0], 1.0);
        assert!(quality_score(&map, 1.0, &[0], 0.5).is_err());
    }

    #[test]
    fn metrics_of_uniform_and_zero_maps() {
        use crate::plant::{generate_field, solar_position};
        let mut cfg = PlantConfig::dunhuang();
        cfg.heliostat_count = 30;
        let field = generate_field(&cfg, 0).unwrap();
        let sun = solar_position(40.08, 81, 12.0);

        // All-zero map: no energy, full spillage.
        let mesh = Arc::new(ReceiverMesh::from_config(&cfg));
        let zero = FluxMap::from_parts(
            Array3::zeros((cfg.panel_count, cfg.mesh_vertical, cfg.mesh_horizontal)),
            Arc::clone(&mesh),
            42.0,
            field.len(),
        );
        let m = metrics(&zero, &field, &sun, &cfg, 0.5).unwrap();
        assert_eq!(m.collected_energy, 0.0);
        assert_eq!(m.max_suns, 0.0);
        assert_eq!(m.spl, 1.0);
        assert_eq!(m.distribution_difference, 0.0);

        // Uniform map: no distribution difference.
        let uniform = FluxMap::from_parts(
            Array3::from_elem((cfg.panel_count, cfg.mesh_vertical, cfg.mesh_horizontal), 2.0),
            mesh,
            1e4,
            field.len(),
        );
        let m = metrics(&uniform, &field, &sun, &cfg, 0.5).unwrap();
        assert_eq!(m.distribution_difference, 0.0);
        assert_eq!(m.max_suns, 2.0);
    }

    #[test]
    fn metrics_serializes_with_expected_keys() {
        let report = MetricsReport {
            collected_energy: 5657.112,
            distribution_difference: 0.041,
            spl: 0.136,
            max_suns: 1053.2,
        };
        let json = serde_json::to_value(&report).unwrap();
        for key in ["collected_energy", "distribution_difference", "spl", "max_suns"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
