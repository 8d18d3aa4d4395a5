//! Simplified convolution-projection flux model.
//!
//! Each heliostat's reflected power is spread as a circular Gaussian of
//! standard deviation `sigma_e * S` on the plane normal to its reflected
//! ray. Instead of projecting the receiver mesh into that plane, the
//! Gaussian is evaluated directly at the receiver nodes in panel surface
//! coordinates (horizontal offset within the flat panel, height). The
//! sightline is radial, so the image-plane footprint maps to an
//! axis-aligned ellipse on the surface: elongated vertically by the ray's
//! upward tilt, with the flux density scaled by the matching cosine — the
//! obliquity cosine of the ray against the receiver normal at the aim.
//! With `c = cos(tilt)` and `u` measured from the beam center projected
//! onto the panel plane:
//!
//! `C(node) = P c / (2 pi sigma^2) * exp(-(u^2 + c^2 dz^2) / (2 sigma^2))`
//!
//! The kernel integrates to the reflected power over the beam's own panel
//! plane regardless of obliquity and is symmetric about the aim height.
//! Across the faceted receiver the per-panel pieces leave small gaps (never
//! overlaps) at the facet joints, so the total interception cannot exceed
//! the reflected power; panels facing away from the ray accumulate nothing.
//!
//! Only the vertical aim coordinate is a decision: the horizontal aim is
//! fixed at the intersection of the heliostat's sightline toward the tower
//! axis with the receiver cylinder, and the vertical shift follows the
//! aiming-factor rule (odd rows up, even rows down, clamped to zero once the
//! beam radius covers the half-height). The beam radius is evaluated at the
//! equator-level aim, which breaks the circular dependence between the shift
//! and the shifted geometry; the Gaussian spread itself uses the shifted aim.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{attenuation_factor, Heliostat, PlantConfig, RowParity, SunState};
use crate::vec3::{self, Vec3};

/// Per-group aiming factors, one entry per `(sector, row)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimVector {
    pub k: Vec<f64>,
}

impl AimVector {
    pub fn new(k: Vec<f64>) -> Self {
        AimVector { k }
    }

    pub fn uniform(groups: usize, k: f64) -> Self {
        AimVector { k: vec![k; groups] }
    }

    /// Uniform aim vector sized to a field's group count.
    pub fn uniform_for(field: &[Heliostat], k: f64) -> Self {
        Self::uniform(crate::plant::group_count(field), k)
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Checks the aiming factors against the configured bounds, tolerating
    /// solver-level rounding of `tol`.
    pub fn validate(&self, k_min: f64, k_max: f64, tol: f64) -> Result<()> {
        for (i, &k) in self.k.iter().enumerate() {
            if !(k >= k_min - tol && k <= k_max + tol) {
                return Err(Error::Domain(format!(
                    "aiming factor k[{i}] = {k} outside [{k_min}, {k_max}]"
                )));
            }
        }
        Ok(())
    }
}

/// Combined beam error from sunshape, slope and tracking errors, mrad.
pub fn effective_error(
    incidence_angle: f64,
    sigma_sun_mrad: f64,
    sigma_slope_mrad: f64,
    sigma_tracking_mrad: f64,
) -> f64 {
    (sigma_sun_mrad.powi(2)
        + 2.0 * (1.0 + incidence_angle.cos()) * sigma_slope_mrad.powi(2)
        + sigma_tracking_mrad.powi(2))
    .sqrt()
}

/// Beam radius at confidence level `k`, m. `sigma_e` is in radians.
pub fn beam_radius(
    k: f64,
    sigma_e_rad: f64,
    slant_range: f64,
    receiver_incident_angle: f64,
) -> Result<f64> {
    let cos_eps = receiver_incident_angle.cos();
    if !(receiver_incident_angle >= 0.0) || cos_eps <= 1e-9 {
        return Err(Error::Domain(format!(
            "grazing incidence on receiver: angle {receiver_incident_angle} rad"
        )));
    }
    Ok(k * sigma_e_rad * slant_range / cos_eps)
}

/// Vertical aim shift from the receiver equator, m.
///
/// The beam circle is kept tangent to the receiver edge: odd rows shift up,
/// even rows down, and once the beam radius reaches the half-height the aim
/// stays on the equator.
pub fn aim_shift(beam_radius: f64, receiver_height: f64, parity: RowParity) -> f64 {
    let half = receiver_height / 2.0;
    if beam_radius >= half {
        0.0
    } else {
        match parity {
            RowParity::Odd => half - beam_radius,
            RowParity::Even => -(half - beam_radius),
        }
    }
}

/// Receiver discretization: flat panels tangent to the cylinder, each meshed
/// with `v_nodes` x `h_nodes` points. Vertical node 0 is at the panel bottom.
#[derive(Debug, Clone)]
pub struct ReceiverMesh {
    pub panel_count: usize,
    pub v_nodes: usize,
    pub h_nodes: usize,
    /// Vertical node spacing, m.
    pub dv: f64,
    /// Horizontal node spacing, m (the full panel width when `h_nodes` = 1).
    pub dh: f64,
    /// Height of the receiver equator, m.
    pub equator_z: f64,
    /// Outward unit normal per panel.
    pub panel_normals: Vec<Vec3>,
    /// Compass azimuth of each panel center, radians.
    pub panel_azimuths: Vec<f64>,
    /// Node positions, indexed `(p * v_nodes + v) * h_nodes + h`.
    pub node_positions: Vec<Vec3>,
    /// Horizontal node offset within its flat panel, m, same indexing.
    pub node_offsets: Vec<f64>,
    /// Cylinder apothem (radius of the panel tangent circle), m.
    pub apothem: f64,
}

impl ReceiverMesh {
    pub fn from_config(config: &PlantConfig) -> Self {
        let p_count = config.panel_count;
        let v_nodes = config.mesh_vertical;
        let h_nodes = config.mesh_horizontal;
        let dv = config.receiver_height / (v_nodes - 1) as f64;
        let dh = if h_nodes > 1 {
            config.panel_width / (h_nodes - 1) as f64
        } else {
            config.panel_width
        };
        let apothem = config.receiver_diameter / 2.0;
        let equator_z = config.tower_optical_height;
        let aperture = std::f64::consts::TAU / p_count as f64;

        let mut panel_normals = Vec::with_capacity(p_count);
        let mut panel_azimuths = Vec::with_capacity(p_count);
        let mut node_positions = Vec::with_capacity(p_count * v_nodes * h_nodes);
        let mut node_offsets = Vec::with_capacity(p_count * v_nodes * h_nodes);
        for p in 0..p_count {
            let theta = (p as f64 + 0.5) * aperture;
            let normal = [theta.sin(), theta.cos(), 0.0];
            let tangent = [theta.cos(), -theta.sin(), 0.0];
            panel_normals.push(normal);
            panel_azimuths.push(theta);
            for v in 0..v_nodes {
                let z = equator_z - config.receiver_height / 2.0 + v as f64 * dv;
                for h in 0..h_nodes {
                    let u = if h_nodes > 1 {
                        -config.panel_width / 2.0 + h as f64 * dh
                    } else {
                        0.0
                    };
                    node_positions.push([
                        apothem * normal[0] + u * tangent[0],
                        apothem * normal[1] + u * tangent[1],
                        z,
                    ]);
                    node_offsets.push(u);
                }
            }
        }

        ReceiverMesh {
            panel_count: p_count,
            v_nodes,
            h_nodes,
            dv,
            dh,
            equator_z,
            panel_normals,
            panel_azimuths,
            node_positions,
            node_offsets,
            apothem,
        }
    }

    #[inline]
    pub fn node(&self, p: usize, v: usize, h: usize) -> Vec3 {
        self.node_positions[(p * self.v_nodes + v) * self.h_nodes + h]
    }

    /// Quadrature area of a node: trapezoid weights in both directions, so
    /// the node areas of a panel sum exactly to `height x width`.
    #[inline]
    pub fn node_area(&self, v: usize, h: usize) -> f64 {
        let wv = if v == 0 || v == self.v_nodes - 1 { 0.5 } else { 1.0 };
        let wh = if self.h_nodes > 1 && (h == 0 || h == self.h_nodes - 1) { 0.5 } else { 1.0 };
        wv * wh * self.dv * self.dh
    }
}

/// Concentration-ratio map over the receiver mesh, in suns (DNI-normalized).
#[derive(Debug, Clone)]
pub struct FluxMap {
    /// Concentration ratio indexed `[panel, vertical, horizontal]`.
    pub c: Array3<f64>,
    pub mesh: Arc<ReceiverMesh>,
    /// Cosine-weighted mirror area of the contributing field, m^2
    /// (the denominator of the spillage factor).
    pub reflected_cosine_area: f64,
    /// Number of heliostats that contributed.
    pub heliostat_count: usize,
}

impl FluxMap {
    /// Assembles a map from raw parts (used by tests and file loaders).
    pub fn from_parts(
        c: Array3<f64>,
        mesh: Arc<ReceiverMesh>,
        reflected_cosine_area: f64,
        heliostat_count: usize,
    ) -> Self {
        FluxMap { c, mesh, reflected_cosine_area, heliostat_count }
    }

    /// Total intercepted power per unit DNI: sum of `C x dA`, suns x m^2.
    pub fn intercepted(&self) -> f64 {
        let mut total = 0.0;
        for p in 0..self.mesh.panel_count {
            for v in 0..self.mesh.v_nodes {
                for h in 0..self.mesh.h_nodes {
                    total += self.c[[p, v, h]] * self.mesh.node_area(v, h);
                }
            }
        }
        total
    }

    /// Largest concentration ratio over all nodes, suns.
    pub fn max_suns(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, &x| m.max(x))
    }

    /// Mean concentration over the horizontal nodes of a panel, bottom to top.
    pub fn vertical_profile(&self, panel: usize) -> Vec<f64> {
        let h_nodes = self.mesh.h_nodes as f64;
        (0..self.mesh.v_nodes)
            .map(|v| (0..self.mesh.h_nodes).map(|h| self.c[[panel, v, h]]).sum::<f64>() / h_nodes)
            .collect()
    }

    /// Writes the map as long-format CSV with columns `panel,v,h,C`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "panel,v,h,C")?;
        for p in 0..self.mesh.panel_count {
            for v in 0..self.mesh.v_nodes {
                for h in 0..self.mesh.h_nodes {
                    writeln!(out, "{},{},{},{}", p, v, h, self.c[[p, v, h]])?;
                }
            }
        }
        Ok(())
    }

    /// Nested-array JSON representation `[panel][vertical][horizontal]`.
    pub fn to_json(&self) -> serde_json::Value {
        let panels: Vec<Vec<Vec<f64>>> = (0..self.mesh.panel_count)
            .map(|p| {
                (0..self.mesh.v_nodes)
                    .map(|v| (0..self.mesh.h_nodes).map(|h| self.c[[p, v, h]]).collect())
                    .collect()
            })
            .collect();
        serde_json::json!({
            "panels": panels,
            "dv": self.mesh.dv,
            "dh": self.mesh.dh,
            "reflected_cosine_area": self.reflected_cosine_area,
        })
    }
}

/// Options for flux evaluation.
#[derive(Debug, Clone)]
pub struct FluxOptions {
    /// Apply atmospheric attenuation (on by default; off is useful for
    /// quadrature checks against the plain Gaussian mass).
    pub attenuation: bool,
}

impl Default for FluxOptions {
    fn default() -> Self {
        FluxOptions { attenuation: true }
    }
}

/// Beam contributions beyond this many standard deviations are skipped.
const CULL_SIGMAS: f64 = 5.0;

/// Node contributions are rounded to this binary grid before accumulation,
/// which makes node sums exact integer multiples of a power of two and hence
/// independent of the order in which heliostat contributions are added.
const QUANT_SCALE: f64 = 4294967296.0; // 2^32

#[inline]
fn quantize(x: f64) -> f64 {
    (x * QUANT_SCALE).round() / QUANT_SCALE
}

/// Geometry shared by every flux evaluation of one `(field, sun)` pair.
///
/// The per-heliostat base aim point, slant range and error cone are fixed by
/// the field and the sun; only the vertical aim shift depends on the aiming
/// factors, so repeated evaluations over candidate aim vectors reuse this.
/// Evaluation is a pure function of the aim vector and may run concurrently
/// from many threads.
pub struct FluxScene {
    mesh: Arc<ReceiverMesh>,
    sun_vector: Vec3,
    mirror_area: f64,
    receiver_height: f64,
    sigma_sun_mrad: f64,
    sigma_slope_mrad: f64,
    sigma_tracking_mrad: f64,
    k_min: f64,
    k_max: f64,
    group_count: usize,
    options: FluxOptions,
    heliostats: Vec<HeliostatOptics>,
}

struct HeliostatOptics {
    position: Vec3,
    group: usize,
    parity: RowParity,
    /// Sightline-cylinder intersection at equator height.
    base_aim: Vec3,
    /// Compass azimuth of the aim point, radians.
    aim_azimuth: f64,
    /// Beam-radius ingredients evaluated at the base aim.
    sigma_e0_rad: f64,
    slant0: f64,
    cos_eps0: f64,
}

/// Wraps an angle difference into [-pi, pi].
#[inline]
fn wrap_angle(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

impl FluxScene {
    pub fn new(field: &[Heliostat], sun: &SunState, config: &PlantConfig) -> Result<Self> {
        Self::with_options(field, sun, config, FluxOptions::default())
    }

    pub fn with_options(
        field: &[Heliostat],
        sun: &SunState,
        config: &PlantConfig,
        options: FluxOptions,
    ) -> Result<Self> {
        config.validate()?;
        if !sun.is_above_horizon() {
            return Err(Error::Domain(format!(
                "sun below horizon (elevation {:.3} deg)",
                sun.elevation_deg
            )));
        }
        let mesh = Arc::new(ReceiverMesh::from_config(config));
        let apothem = config.receiver_diameter / 2.0;

        let mut heliostats = Vec::with_capacity(field.len());
        for h in field {
            let radial = vec3::normalize([h.position[0], h.position[1], 0.0]);
            let base_aim = [radial[0] * apothem, radial[1] * apothem, config.tower_optical_height];
            let to_aim = vec3::sub(base_aim, h.position);
            let slant0 = vec3::norm(to_aim);
            let ray = vec3::scale(to_aim, 1.0 / slant0);
            let normal = vec3::normalize(vec3::add(sun.unit_vector, ray));
            let omega0 = vec3::angle_between_units(sun.unit_vector, normal);
            let cos_eps0 = vec3::dot(vec3::scale(ray, -1.0), radial).clamp(-1.0, 1.0);
            if cos_eps0 <= 1e-9 {
                return Err(Error::Domain(format!(
                    "heliostat {} sees the receiver at grazing incidence",
                    h.id
                )));
            }
            let sigma_e0_rad = 1e-3
                * effective_error(
                    omega0,
                    config.sigma_sun_mrad,
                    config.sigma_slope_mrad,
                    config.sigma_tracking_mrad,
                );
            heliostats.push(HeliostatOptics {
                position: h.position,
                group: h.group,
                parity: h.row_parity(),
                base_aim,
                aim_azimuth: base_aim[0].atan2(base_aim[1]),
                sigma_e0_rad,
                slant0,
                cos_eps0,
            });
        }

        let group_count = field.iter().map(|h| h.group).max().map_or(0, |g| g + 1);
        Ok(FluxScene {
            mesh,
            sun_vector: sun.unit_vector,
            mirror_area: config.heliostat_mirror_area,
            receiver_height: config.receiver_height,
            sigma_sun_mrad: config.sigma_sun_mrad,
            sigma_slope_mrad: config.sigma_slope_mrad,
            sigma_tracking_mrad: config.sigma_tracking_mrad,
            k_min: config.k_min,
            k_max: config.k_max,
            group_count,
            options,
            heliostats,
        })
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn heliostat_count(&self) -> usize {
        self.heliostats.len()
    }

    pub fn mesh(&self) -> &Arc<ReceiverMesh> {
        &self.mesh
    }

    /// Cosine-weighted mirror area at the equator-level aim, m^2.
    pub fn base_cosine_area(&self) -> f64 {
        self.heliostats
            .iter()
            .map(|h| {
                let ray = vec3::scale(vec3::sub(h.base_aim, h.position), 1.0 / h.slant0);
                let normal = vec3::normalize(vec3::add(self.sun_vector, ray));
                self.mirror_area * vec3::dot(self.sun_vector, normal).clamp(0.0, 1.0)
            })
            .sum()
    }

    /// Evaluates the flux map for one aim vector.
    pub fn evaluate(&self, aims: &AimVector) -> Result<FluxMap> {
        if aims.len() != self.group_count {
            return Err(Error::Shape(format!(
                "aim vector has {} entries, field has {} groups",
                aims.len(),
                self.group_count
            )));
        }
        aims.validate(self.k_min, self.k_max, 1e-6)?;

        let mesh = &self.mesh;
        let nodes_per_panel = mesh.v_nodes * mesh.h_nodes;
        let mut c = vec![0.0f64; mesh.panel_count * nodes_per_panel];
        let mut reflected_cosine_area = 0.0;

        for h in &self.heliostats {
            let k = aims.k[h.group].clamp(self.k_min, self.k_max);
            let r_k = k * h.sigma_e0_rad * h.slant0 / h.cos_eps0;
            let shift = aim_shift(r_k, self.receiver_height, h.parity);
            let aim = [h.base_aim[0], h.base_aim[1], h.base_aim[2] + shift];

            let to_aim = vec3::sub(aim, h.position);
            let slant = vec3::norm(to_aim);
            let ray = vec3::scale(to_aim, 1.0 / slant);
            let normal = vec3::normalize(vec3::add(self.sun_vector, ray));
            let cos_omega = vec3::dot(self.sun_vector, normal).clamp(0.0, 1.0);
            reflected_cosine_area += self.mirror_area * cos_omega;

            let omega = cos_omega.clamp(-1.0, 1.0).acos();
            let sigma_e_rad = 1e-3
                * effective_error(
                    omega,
                    self.sigma_sun_mrad,
                    self.sigma_slope_mrad,
                    self.sigma_tracking_mrad,
                );
            let sigma_beam = sigma_e_rad * slant;
            if sigma_beam <= 0.0 {
                // A zero-width beam has no finite-density representation on
                // the mesh; such configurations are excluded upstream.
                continue;
            }
            let attenuation =
                if self.options.attenuation { attenuation_factor(slant) } else { 1.0 };
            let power = self.mirror_area * cos_omega * attenuation;
            // Vertical elongation of the footprint by the ray tilt; the
            // amplitude carries the matching obliquity cosine, so the kernel
            // mass equals the reflected power for any tilt.
            let tilt_cos2 = (1.0 - ray[2] * ray[2]).max(1e-12);
            let tilt_cos = tilt_cos2.sqrt();
            let amplitude =
                power * tilt_cos / (std::f64::consts::TAU * sigma_beam * sigma_beam);
            let inv_two_sigma2 = 1.0 / (2.0 * sigma_beam * sigma_beam);
            let cull_d2 = (CULL_SIGMAS * sigma_beam).powi(2);

            for p in 0..mesh.panel_count {
                // Beam center projected onto this panel's plane along the
                // aim azimuth; panels facing away accumulate nothing.
                let delta = wrap_angle(h.aim_azimuth - mesh.panel_azimuths[p]);
                if delta.abs() >= std::f64::consts::FRAC_PI_2 - 1e-9 {
                    continue;
                }
                let center_u = mesh.apothem * delta.tan();
                let base = p * nodes_per_panel;
                for n in 0..nodes_per_panel {
                    let du = mesh.node_offsets[base + n] - center_u;
                    let dz = mesh.node_positions[base + n][2] - aim[2];
                    let d2 = du * du + tilt_cos2 * dz * dz;
                    if d2 <= cull_d2 {
                        c[base + n] += quantize(amplitude * (-d2 * inv_two_sigma2).exp());
                    }
                }
            }
        }

        let c = Array3::from_shape_vec((mesh.panel_count, mesh.v_nodes, mesh.h_nodes), c)
            .expect("flux buffer matches mesh shape");
        Ok(FluxMap {
            c,
            mesh: Arc::clone(mesh),
            reflected_cosine_area,
            heliostat_count: self.heliostats.len(),
        })
    }
}

/// One-shot flux map evaluation. For repeated evaluations over many aim
/// vectors build a [`FluxScene`] once and call [`FluxScene::evaluate`].
pub fn flux_map(
    field: &[Heliostat],
    aims: &AimVector,
    sun: &SunState,
    config: &PlantConfig,
) -> Result<FluxMap> {
    FluxScene::new(field, sun, config)?.evaluate(aims)
}

/// Spillage loss factor: the fraction of cosine-weighted reflected power not
/// intercepted by the receiver. The denominator deliberately excludes
/// attenuation, so atmospheric loss is absorbed into the spillage figure.
pub fn spillage(
    flux: &FluxMap,
    field: &[Heliostat],
    sun: &SunState,
    _config: &PlantConfig,
) -> Result<f64> {
    if field.len() != flux.heliostat_count {
        return Err(Error::Shape(format!(
            "flux map was built from {} heliostats, got a field of {}",
            flux.heliostat_count,
            field.len()
        )));
    }
    if !sun.is_above_horizon() {
        return Err(Error::Domain("sun below horizon".into()));
    }
    if flux.reflected_cosine_area <= 0.0 {
        return Err(Error::Domain("no reflected power: empty field".into()));
    }
    Ok(1.0 - flux.intercepted() / flux.reflected_cosine_area)
}
