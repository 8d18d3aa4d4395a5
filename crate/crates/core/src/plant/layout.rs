//! Synthetic radially staggered surround field.
//!
//! Heliostats are placed on concentric rings starting at 0.75x the tower
//! optical height, with the ring spacing growing geometrically. Each ring is
//! filled with evenly spaced heliostats; alternate rings are rotated by half
//! an angular step so neighboring rings interleave. A partially filled last
//! ring keeps its members evenly spaced, so the layout stays mirror-symmetric
//! about the north-south axis.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plant::{Heliostat, PlantConfig};

/// First ring radius as a fraction of the tower optical height.
const FIRST_RING_FACTOR: f64 = 0.75;
/// Geometric growth of the radial ring spacing.
const RING_GROWTH: f64 = 1.05;
/// Radial spacing base, in units of the mirror side length.
const RADIAL_SPACING_FACTOR: f64 = 1.2;
/// Azimuthal arc between neighbors, in units of the mirror side length.
const AZIMUTHAL_SPACING_FACTOR: f64 = 1.5;

/// Generates the synthetic field and assigns sectors, rows and groups.
///
/// The placement itself is fully deterministic; the seed only selects which
/// ring parity carries the half-step stagger offset, so distinct seeds yield
/// one of two equivalent interleavings.
pub fn generate_field(config: &PlantConfig, seed: u64) -> Result<Vec<Heliostat>> {
    config.validate()?;
    if config.heliostat_count == 0 {
        return Err(Error::InvalidConfig("heliostat_count must be > 0".into()));
    }

    let side = config.heliostat_mirror_area.sqrt();
    let azimuthal_arc = AZIMUTHAL_SPACING_FACTOR * side;
    let mut radius = FIRST_RING_FACTOR * config.tower_optical_height;
    let mut ring_spacing = RADIAL_SPACING_FACTOR * side;
    // Even seeds stagger the odd rings, odd seeds the even rings. Ring 0 is
    // unstaggered for even seeds, so it always contains a due-north mirror.
    let staggered_rows = if seed.is_multiple_of(2) { 1 } else { 0 };

    let aperture = config.panel_aperture_deg();
    let mut field = Vec::with_capacity(config.heliostat_count);
    let mut remaining = config.heliostat_count;
    let mut row = 0usize;

    while remaining > 0 {
        let capacity = ((std::f64::consts::TAU * radius / azimuthal_arc).floor() as usize).max(1);
        let placed = capacity.min(remaining);
        let step = std::f64::consts::TAU / placed as f64;
        let offset = if row % 2 == staggered_rows { step / 2.0 } else { 0.0 };

        for j in 0..placed {
            let azimuth = offset + j as f64 * step;
            let position = [radius * azimuth.sin(), radius * azimuth.cos(), 0.0];
            // Sector from the realized position so the azimuth-bin invariant
            // holds exactly as stored.
            let azimuth_deg = position[0].atan2(position[1]).to_degrees().rem_euclid(360.0);
            let sector = ((azimuth_deg / aperture).floor() as usize) % config.panel_count;
            field.push(Heliostat { id: field.len(), position, sector, row, group: 0 });
        }

        remaining -= placed;
        radius += ring_spacing;
        ring_spacing *= RING_GROWTH;
        row += 1;
    }

    assign_groups(&mut field);
    Ok(field)
}

/// Assigns group indices: one group per distinct `(sector, row)` pair,
/// ordered by sector then row.
fn assign_groups(field: &mut [Heliostat]) {
    let mut pairs: Vec<(usize, usize)> = field.iter().map(|h| (h.sector, h.row)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    for h in field.iter_mut() {
        h.group = pairs.binary_search(&(h.sector, h.row)).expect("pair present");
    }
}

/// Number of aiming groups (distinct `(sector, row)` pairs) in the field.
pub fn group_count(field: &[Heliostat]) -> usize {
    field.iter().map(|h| h.group).max().map_or(0, |g| g + 1)
}

/// Heliostat indices per group.
pub fn group_members(field: &[Heliostat]) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); group_count(field)];
    for (i, h) in field.iter().enumerate() {
        members[h.group].push(i);
    }
    members
}

/// Heliostats per sector, used as panel weights in the quality score.
pub fn sector_counts(field: &[Heliostat], panel_count: usize) -> Vec<usize> {
    let mut counts = vec![0usize; panel_count];
    for h in field {
        counts[h.sector] += 1;
    }
    counts
}

/// Writes the field as CSV with columns `id,east,north,up,sector,row,group`.
pub fn write_field_csv<W: Write>(field: &[Heliostat], out: &mut W) -> Result<()> {
    writeln!(out, "id,east,north,up,sector,row,group")?;
    for h in field {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            h.id, h.position[0], h.position[1], h.position[2], h.sector, h.row, h.group
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dunhuang_field_has_all_sectors_populated() {
        let cfg = PlantConfig::dunhuang();
        let field = generate_field(&cfg, 0).unwrap();
        assert_eq!(field.len(), 1525);
        let counts = sector_counts(&field, cfg.panel_count);
        assert_eq!(counts.len(), 18);
        assert!(counts.iter().all(|&c| c > 0), "empty sector in {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 1525);
    }

    #[test]
    fn single_heliostat_lands_due_north_in_sector_zero() {
        let mut cfg = PlantConfig::dunhuang();
        cfg.heliostat_count = 1;
        let field = generate_field(&cfg, 0).unwrap();
        assert_eq!(field.len(), 1);
        assert_eq!(field[0].sector, 0);
        assert_eq!(field[0].row, 0);
        // Seed 0 leaves even rings unstaggered, so the single mirror sits at
        // azimuth 0 (due north).
        assert!(field[0].position[0].abs() < 1e-9);
        assert!(field[0].position[1] > 0.0);
    }

    #[test]
    fn same_seed_reproduces_coordinates() {
        let cfg = PlantConfig::dunhuang();
        let a = generate_field(&cfg, 7).unwrap();
        let b = generate_field(&cfg, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.group, y.group);
        }
    }

    #[test]
    fn sectors_match_azimuth_bins() {
        let cfg = PlantConfig::dunhuang();
        let field = generate_field(&cfg, 3).unwrap();
        let aperture = cfg.panel_aperture_deg();
        for h in &field {
            let az = h.position[0].atan2(h.position[1]).to_degrees().rem_euclid(360.0);
            let expected = ((az / aperture).floor() as usize) % cfg.panel_count;
            assert_eq!(h.sector, expected, "heliostat {} at azimuth {az}", h.id);
        }
    }

    #[test]
    fn groups_partition_the_field() {
        let cfg = PlantConfig::dunhuang();
        let field = generate_field(&cfg, 0).unwrap();
        let members = group_members(&field);
        assert!(!members.is_empty());
        assert!(members.iter().all(|m| !m.is_empty()));
        assert_eq!(members.iter().map(|m| m.len()).sum::<usize>(), field.len());
        // All members of a group share sector and row.
        for group in &members {
            let first = &field[group[0]];
            for &i in group {
                assert_eq!(field[i].sector, first.sector);
                assert_eq!(field[i].row, first.row);
            }
        }
    }

    #[test]
    fn layout_is_mirror_symmetric_in_east() {
        let cfg = PlantConfig::dunhuang();
        let field = generate_field(&cfg, 0).unwrap();
        // For every heliostat there is one at the mirrored east coordinate.
        let mut mirrored: Vec<(i64, i64)> = field
            .iter()
            .map(|h| ((h.position[0] * 1e6).round() as i64, (h.position[1] * 1e6).round() as i64))
            .collect();
        let mut original = mirrored.clone();
        for p in &mut mirrored {
            p.0 = -p.0;
        }
        original.sort_unstable();
        mirrored.sort_unstable();
        assert_eq!(original, mirrored);
    }

    #[test]
    fn rejects_zero_count() {
        let mut cfg = PlantConfig::dunhuang();
        cfg.heliostat_count = 0;
        assert!(generate_field(&cfg, 0).is_err());
    }

    #[test]
    fn field_csv_has_documented_columns() {
        let mut cfg = PlantConfig::dunhuang();
        cfg.heliostat_count = 3;
        let field = generate_field(&cfg, 0).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&field, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("id,east,north,up,sector,row,group"));
        assert_eq!(lines.count(), 3);
    }
}
