//! Solar position from declination/hour-angle spherical trigonometry.
//!
//! Solar time is taken directly (no equation-of-time correction), so solar
//! noon is always at hour 12.

use serde::{Deserialize, Serialize};

/// Sun direction at a given instant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SunState {
    /// Compass azimuth, degrees clockwise from north.
    pub azimuth_deg: f64,
    /// Elevation above the horizon, degrees. Negative below the horizon.
    pub elevation_deg: f64,
    /// Unit vector toward the sun in (east, north, up) coordinates.
    pub unit_vector: [f64; 3],
}

impl SunState {
    pub fn is_above_horizon(&self) -> bool {
        self.elevation_deg > 0.0
    }
}

/// Day of year at which Cooper's declination formula is exactly zero.
pub const EQUINOX_DAY: u32 = 81;

/// Sun declination for a day of the year (Cooper's formula), degrees.
fn declination_deg(day_of_year: u32) -> f64 {
    23.45 * (std::f64::consts::TAU * (284 + day_of_year) as f64 / 365.0).sin()
}

/// Computes the sun position for a latitude, day of year and solar hour.
///
/// The hour is wrapped into [0, 24). A below-horizon sun is returned with a
/// negative elevation; callers decide whether that is an error.
pub fn solar_position(latitude_deg: f64, day_of_year: u32, solar_hour: f64) -> SunState {
    let hour = solar_hour.rem_euclid(24.0);
    let phi = latitude_deg.to_radians();
    let delta = declination_deg(day_of_year).to_radians();
    let hour_angle = (15.0 * (hour - 12.0)).to_radians();

    // Horizon-frame components of the unit vector toward the sun.
    let up = phi.sin() * delta.sin() + phi.cos() * delta.cos() * hour_angle.cos();
    let south = -phi.cos() * delta.sin() + phi.sin() * delta.cos() * hour_angle.cos();
    let east = -delta.cos() * hour_angle.sin();

    let elevation_deg = up.clamp(-1.0, 1.0).asin().to_degrees();
    let azimuth_deg = east.atan2(-south).to_degrees().rem_euclid(360.0);

    SunState { azimuth_deg, elevation_deg, unit_vector: [east, -south, up] }
}
