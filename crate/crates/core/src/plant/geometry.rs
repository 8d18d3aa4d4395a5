//! Per-heliostat optical geometry for a given sun position and aim point.

use crate::error::{Error, Result};
use crate::plant::{attenuation_factor, Heliostat, PlantConfig, SunState};
use crate::vec3::{self, Vec3};

/// Optical quantities of one heliostat aiming at a point on the receiver.
#[derive(Debug, Clone)]
pub struct HeliostatGeometry {
    /// Mirror-to-aim distance, m.
    pub slant_range: f64,
    /// Incidence angle on the mirror (between sun vector and mirror normal), rad.
    pub incidence_angle: f64,
    /// Incident angle on the receiver surface at the aim point, rad.
    pub receiver_incident_angle: f64,
    /// cos of the incidence angle.
    pub cosine_factor: f64,
    /// Atmospheric attenuation over the slant range.
    pub attenuation_factor: f64,
}

/// Computes slant range, incidence angles and loss factors for a heliostat.
///
/// The mirror normal bisects the sun direction and the mirror-to-aim
/// direction. The receiver incident angle is measured against the outward
/// cylinder normal at the aim point.
pub fn heliostat_geometry(
    heliostat: &Heliostat,
    sun: &SunState,
    aim_point: Vec3,
    _config: &PlantConfig,
) -> Result<HeliostatGeometry> {
    if !sun.is_above_horizon() {
        return Err(Error::Domain(format!(
            "sun below horizon (elevation {:.3} deg)",
            sun.elevation_deg
        )));
    }

    let to_aim = vec3::sub(aim_point, heliostat.position);
    let slant_range = vec3::norm(to_aim);
    if !(slant_range > 0.0) {
        return Err(Error::Domain("heliostat coincides with its aim point".into()));
    }
    let ray = vec3::scale(to_aim, 1.0 / slant_range);

    let normal = vec3::normalize(vec3::add(sun.unit_vector, ray));
    let incidence_angle = vec3::angle_between_units(sun.unit_vector, normal);

    // Outward cylinder normal at the aim point is radial and horizontal.
    let radial = vec3::normalize([aim_point[0], aim_point[1], 0.0]);
    let receiver_incident_angle = vec3::angle_between_units(vec3::scale(ray, -1.0), radial);

    Ok(HeliostatGeometry {
        slant_range,
        incidence_angle,
        receiver_incident_angle,
        cosine_factor: incidence_angle.cos(),
        attenuation_factor: attenuation_factor(slant_range),
    })
}
