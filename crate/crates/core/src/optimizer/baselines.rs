//! Classical aiming baselines: equatorial aiming and the per-sector
//! factor sweep.

use crate::error::{Error, Result};
use crate::flux::{AimVector, FluxScene};
use crate::plant::{group_count, Heliostat, PlantConfig, SunState};

/// Equatorial aiming: every group at the maximum factor, which keeps each
/// beam centered on the receiver equator.
pub fn equatorial_baseline(groups: usize, k_max: f64) -> AimVector {
    AimVector::uniform(groups, k_max)
}

/// Result of the sweep heuristic.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub aims: AimVector,
    /// Sectors whose profile never turned bimodal; they fall back to the
    /// minimum factor and deserve a warning upstream.
    pub never_bimodal: Vec<usize>,
}

/// Classical sweep: per sector, all rows share one factor. Starting at the
/// maximum, the factor decreases stepwise; the last value before the
/// sector's own vertical profile splits into two peaks is kept.
///
/// Each sector is swept against the flux of its own heliostats on its own
/// panel, so sectors are independent and the sweep parallelizes trivially.
pub fn sweep_baseline(
    field: &[Heliostat],
    sun: &SunState,
    config: &PlantConfig,
    k_step: f64,
) -> Result<SweepOutcome> {
    if !(k_step > 0.0) {
        return Err(Error::InvalidConfig(format!("k_step must be > 0, got {k_step}")));
    }
    let groups = group_count(field);
    if groups == 0 {
        return Err(Error::InvalidConfig("empty field".into()));
    }

    // Factor grid from the top downward.
    let steps = ((config.k_max - config.k_min) / k_step).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| config.k_max - i as f64 * k_step).collect();

    let mut sector_k = vec![config.k_max; config.panel_count];
    let mut never_bimodal = Vec::new();

    for sector in 0..config.panel_count {
        // The sector's heliostats as a one-group field.
        let members: Vec<Heliostat> = field
            .iter()
            .filter(|h| h.sector == sector)
            .map(|h| Heliostat { group: 0, ..(*h).clone() })
            .collect();
        if members.is_empty() {
            sector_k[sector] = config.k_max;
            continue;
        }
        let scene = FluxScene::new(&members, sun, config)?;

        let mut selected = None;
        let mut previous = config.k_max;
        for &k in &grid {
            let map = scene.evaluate(&AimVector::uniform(1, k))?;
            let profile = map.vertical_profile(sector);
            if is_bimodal(&profile, 0.01) {
                selected = Some(previous);
                break;
            }
            previous = k;
        }
        match selected {
            Some(k) => sector_k[sector] = k,
            None => {
                sector_k[sector] = config.k_min;
                never_bimodal.push(sector);
            }
        }
    }

    // Expand per-sector factors onto the group vector.
    let mut k = vec![config.k_max; groups];
    for h in field {
        k[h.group] = sector_k[h.sector];
    }
    Ok(SweepOutcome { aims: AimVector::new(k), never_bimodal })
}

/// Two local maxima separated by a dip deeper than `dip_fraction` of the
/// global peak.
pub fn is_bimodal(profile: &[f64], dip_fraction: f64) -> bool {
    let global_peak = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(global_peak > 0.0) {
        return false;
    }

    // Plateau-tolerant local maxima: compress equal runs, then compare each
    // run against its neighbors (missing neighbors count as lower).
    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < profile.len() {
        let mut j = i;
        while j + 1 < profile.len() && profile[j + 1] == profile[i] {
            j += 1;
        }
        let left_lower = i == 0 || profile[i - 1] < profile[i];
        let right_lower = j + 1 == profile.len() || profile[j + 1] < profile[i];
        if left_lower && right_lower {
            peaks.push(i);
        }
        i = j + 1;
    }

    for w in peaks.windows(2) {
        let (p1, p2) = (w[0], w[1]);
        let valley = profile[p1..=p2].iter().cloned().fold(f64::INFINITY, f64::min);
        let dip = profile[p1].min(profile[p2]) - valley;
        if dip > dip_fraction * global_peak {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{generate_field, solar_position};

    #[test]
    fn equatorial_is_all_k_max() {
        let aims = equatorial_baseline(5, 3.0);
        assert_eq!(aims.k, vec![3.0; 5]);
    }

    #[test]
    fn bimodality_detector_basics() {
        assert!(!is_bimodal(&[0.0, 1.0, 2.0, 1.0, 0.0], 0.01));
        assert!(is_bimodal(&[0.0, 2.0, 0.5, 2.0, 0.0], 0.01));
        // Shallow dip below the threshold does not count.
        assert!(!is_bimodal(&[0.0, 2.0, 1.995, 2.0, 0.0], 0.01));
        // Plateaus are a single peak.
        assert!(!is_bimodal(&[1.0, 2.0, 2.0, 2.0, 1.0], 0.01));
        assert!(!is_bimodal(&[0.0; 5], 0.01));
    }

    fn desk_config() -> PlantConfig {
        let mut cfg = PlantConfig::dunhuang();
        cfg.panel_count = 6;
        cfg.panel_width = 4.2;
        cfg.heliostat_count = 90;
        cfg
    }

    #[test]
    fn sweep_selects_last_unimodal_factor() {
        let cfg = desk_config();
        let field = generate_field(&cfg, 0).unwrap();
        let sun = solar_position(cfg.latitude_deg, 81, 12.0);
        let outcome = sweep_baseline(&field, &sun, &cfg, 0.1).unwrap();
        assert_eq!(outcome.aims.len(), group_count(&field));
        assert!(outcome.aims.k.iter().all(|&k| (0.0..=3.0).contains(&k)));

        // Verify the selection rule on one swept sector: unimodal at the
        // selected factor, bimodal one step below (when a step below exists).
        let sector = 0usize;
        let selected = field
            .iter()
            .find(|h| h.sector == sector)
            .map(|h| outcome.aims.k[h.group])
            .unwrap();
        if selected > cfg.k_min + 1e-9 && !outcome.never_bimodal.contains(&sector) {
            let members: Vec<Heliostat> = field
                .iter()
                .filter(|h| h.sector == sector)
                .map(|h| Heliostat { group: 0, ..(*h).clone() })
                .collect();
            let scene = FluxScene::new(&members, &sun, &cfg).unwrap();
            let at = scene.evaluate(&AimVector::uniform(1, selected)).unwrap();
            assert!(!is_bimodal(&at.vertical_profile(sector), 0.01));
            let below = scene
                .evaluate(&AimVector::uniform(1, (selected - 0.1).max(cfg.k_min)))
                .unwrap();
            assert!(is_bimodal(&below.vertical_profile(sector), 0.01));
        }
    }

    /// Two close-in rows with a pencil beam split apart even at the maximum
    /// factor, so the sweep stops immediately and keeps it.
    #[test]
    fn already_bimodal_profile_keeps_k_max() {
        let mut cfg = desk_config();
        cfg.heliostat_count = 2;
        cfg.sigma_sun_mrad = 1.0;
        cfg.sigma_slope_mrad = 0.0;
        let theta = 0.5 * cfg.panel_aperture_deg().to_radians();
        // Close enough that the beam radius stays below the half-height at
        // k = 3, leaving the odd/even rows aimed well apart.
        let field = vec![
            Heliostat {
                id: 0,
                position: [95.0 * theta.sin(), 95.0 * theta.cos(), 0.0],
                sector: 0,
                row: 0,
                group: 0,
            },
            Heliostat {
                id: 1,
                position: [110.0 * theta.sin(), 110.0 * theta.cos(), 0.0],
                sector: 0,
                row: 1,
                group: 1,
            },
        ];
        let sun = solar_position(cfg.latitude_deg, 81, 12.0);
        let outcome = sweep_baseline(&field, &sun, &cfg, 0.1).unwrap();
        assert_eq!(outcome.aims.k[0], cfg.k_max);
        assert_eq!(outcome.aims.k[1], cfg.k_max);
        assert!(outcome.never_bimodal.is_empty());
    }

    /// Equatorial aiming maximizes interception, so its collected energy
    /// dominates the sweep's on the same field and sun.
    #[test]
    fn equatorial_collects_at_least_sweep_energy() {
        use crate::optimizer::QsEvaluator;
        let cfg = desk_config();
        let field = generate_field(&cfg, 0).unwrap();
        let sun = solar_position(cfg.latitude_deg, 81, 12.0);
        let evaluator = QsEvaluator::new(&field, &sun, &cfg, 0.0, 0.5).unwrap();
        let sweep = sweep_baseline(&field, &sun, &cfg, 0.1).unwrap();
        let (_, sweep_metrics) = evaluator.assess(&sweep.aims).unwrap();
        let equatorial = equatorial_baseline(group_count(&field), cfg.k_max);
        let (_, eq_metrics) = evaluator.assess(&equatorial).unwrap();
        assert!(
            eq_metrics.collected_energy >= sweep_metrics.collected_energy,
            "equatorial {} < sweep {}",
            eq_metrics.collected_energy,
            sweep_metrics.collected_energy
        );
    }

    /// A single far heliostat with a beam wider than the panel never turns
    /// bimodal, so its sector falls back to the minimum factor.
    #[test]
    fn wide_beam_never_bimodal_falls_back_to_k_min() {
        let mut cfg = desk_config();
        cfg.heliostat_count = 1;
        cfg.sigma_slope_mrad = 6.0;
        let theta = 0.5 * cfg.panel_aperture_deg().to_radians();
        let field = vec![Heliostat {
            id: 0,
            position: [900.0 * theta.sin(), 900.0 * theta.cos(), 0.0],
            sector: 0,
            row: 0,
            group: 0,
        }];
        let sun = solar_position(cfg.latitude_deg, 81, 12.0);
        let outcome = sweep_baseline(&field, &sun, &cfg, 0.1).unwrap();
        assert!(outcome.never_bimodal.contains(&0));
        assert_eq!(outcome.aims.k[0], cfg.k_min);
    }
}
