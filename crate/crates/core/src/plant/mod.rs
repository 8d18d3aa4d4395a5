//! Plant geometry: receiver and field configuration, synthetic field layout,
//! solar position and per-heliostat optical geometry.

mod geometry;
mod layout;
mod sun;

pub use geometry::{heliostat_geometry, HeliostatGeometry};
pub use layout::{generate_field, group_count, group_members, sector_counts, write_field_csv};
pub use sun::{solar_position, SunState, EQUINOX_DAY};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Receiver, field and optical-error parameters of a solar tower plant.
///
/// Distances are in meters, angular errors in milliradians, the latitude in
/// degrees. `k_min`/`k_max` bound the dimensionless aiming factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Receiver height, m.
    pub receiver_height: f64,
    /// Receiver diameter, m.
    pub receiver_diameter: f64,
    /// Number of receiver panels (equal to the number of field sectors).
    pub panel_count: usize,
    /// Width of one receiver panel, m.
    pub panel_width: f64,
    /// Height of the receiver equator above the heliostat pivot plane, m.
    pub tower_optical_height: f64,
    /// Mirror area of one heliostat, m^2.
    pub heliostat_mirror_area: f64,
    /// Number of heliostats in the field.
    pub heliostat_count: usize,
    /// Plant latitude, degrees (positive north).
    pub latitude_deg: f64,
    /// Sunshape error, mrad.
    pub sigma_sun_mrad: f64,
    /// Mirror slope error, mrad.
    pub sigma_slope_mrad: f64,
    /// Tracking error, mrad.
    pub sigma_tracking_mrad: f64,
    /// Vertical mesh nodes per panel.
    pub mesh_vertical: usize,
    /// Horizontal mesh nodes per panel.
    pub mesh_horizontal: usize,
    /// Lower bound of the aiming factor.
    pub k_min: f64,
    /// Upper bound of the aiming factor.
    pub k_max: f64,
}

impl PlantConfig {
    /// Default configuration modeled after a 10 MWe plant with a cylindrical
    /// 18-panel receiver. The field layout itself is synthetic.
    pub fn dunhuang() -> Self {
        PlantConfig {
            receiver_height: 9.2,
            receiver_diameter: 7.3,
            panel_count: 18,
            panel_width: 1.29,
            tower_optical_height: 121.4,
            heliostat_mirror_area: 115.7,
            heliostat_count: 1525,
            latitude_deg: 40.08,
            sigma_sun_mrad: 2.09,
            sigma_slope_mrad: 2.6,
            sigma_tracking_mrad: 0.0,
            mesh_vertical: 23,
            mesh_horizontal: 5,
            k_min: 0.0,
            k_max: 3.0,
        }
    }

    /// Checks the documented invariants of the configuration.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("receiver_height", self.receiver_height),
            ("receiver_diameter", self.receiver_diameter),
            ("panel_width", self.panel_width),
            ("tower_optical_height", self.tower_optical_height),
            ("heliostat_mirror_area", self.heliostat_mirror_area),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {value}")));
            }
        }
        if self.panel_count < 1 {
            return Err(Error::InvalidConfig("panel_count must be >= 1".into()));
        }
        if self.mesh_vertical < 3 {
            return Err(Error::InvalidConfig("mesh_vertical must be >= 3".into()));
        }
        if self.mesh_horizontal < 1 {
            return Err(Error::InvalidConfig("mesh_horizontal must be >= 1".into()));
        }
        if !(self.k_min >= 0.0 && self.k_min < self.k_max) {
            return Err(Error::InvalidConfig(format!(
                "aiming factor bounds must satisfy 0 <= k_min < k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        for (name, value) in [
            ("sigma_sun_mrad", self.sigma_sun_mrad),
            ("sigma_slope_mrad", self.sigma_slope_mrad),
            ("sigma_tracking_mrad", self.sigma_tracking_mrad),
        ] {
            if !(value >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {value}")));
            }
        }
        if !(self.latitude_deg.abs() <= 90.0) {
            return Err(Error::InvalidConfig("latitude_deg must be in [-90, 90]".into()));
        }
        Ok(())
    }

    /// Angular aperture of one sector/panel, degrees.
    pub fn panel_aperture_deg(&self) -> f64 {
        360.0 / self.panel_count as f64
    }
}

/// One mirror of the field with its sector, row and aiming-group assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Heliostat {
    pub id: usize,
    /// Mirror center (east, north, up) relative to the tower base, m.
    pub position: [f64; 3],
    /// Field sector, equal to the azimuth bin of the heliostat as seen from
    /// the tower: `floor(azimuth / (360 / P))`.
    pub sector: usize,
    /// Ring index, counted from the innermost ring (0-based).
    pub row: usize,
    /// Aiming group: index of the heliostat's `(sector, row)` pair. All
    /// heliostats of a group share one aiming factor.
    pub group: usize,
}

impl Heliostat {
    /// Rows are numbered from 1 at the innermost ring; odd rows aim at the
    /// upper half of the receiver, even rows at the lower half.
    pub fn row_parity(&self) -> RowParity {
        if !(self.row + 1).is_multiple_of(2) {
            RowParity::Odd
        } else {
            RowParity::Even
        }
    }
}

/// Parity of a heliostat row (1-based ring numbering).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowParity {
    Odd,
    Even,
}

/// Clear-day atmospheric attenuation as a polynomial in the slant range (m).
pub fn attenuation_factor(slant_range_m: f64) -> f64 {
    let s = slant_range_m;
    (0.99321 - 1.176e-4 * s + 1.97e-8 * s * s).clamp(1e-6, 1.0)
}
