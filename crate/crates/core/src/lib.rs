//! Heliostat-field aiming optimization for solar power tower plants.
//!
//! The crate simulates receiver flux maps for a synthetic surround field,
//! scores aiming strategies by collected energy and flux uniformity, trains
//! a rectifier-network surrogate of that score, embeds the network exactly
//! into a mixed-integer linear program with a trust region, and refines the
//! aiming strategy iteratively. Classical equatorial and sweep baselines are
//! included for comparison.
//!
//! Typical flow:
//!
//! ```
//! use helio_aim::flux::AimVector;
//! use helio_aim::plant::{generate_field, solar_position, PlantConfig};
//! use helio_aim::scoring::metrics;
//!
//! let mut config = PlantConfig::dunhuang();
//! config.heliostat_count = 60;
//! let field = generate_field(&config, 0)?;
//! let sun = solar_position(config.latitude_deg, 81, 12.0);
//! let flux = helio_aim::flux::flux_map(&field, &AimVector::uniform_for(&field, 3.0), &sun, &config)?;
//! let report = metrics(&flux, &field, &sun, &config, 0.5)?;
//! assert!(report.spl >= 0.0 && report.spl <= 1.0);
//! # Ok::<(), helio_aim::Error>(())
//! ```

// Guards like `!(x > 0.0)` are written that way on purpose: unlike `x <= 0.0`
// they also reject NaN. Index loops are the clearer form for the pivot and
// mesh kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod flux;
pub mod milp;
pub mod optimizer;
pub mod plant;
pub mod scoring;
pub mod surrogate;
mod vec3;

pub use error::{Error, Result};
