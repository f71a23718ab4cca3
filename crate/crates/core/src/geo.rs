//! Geodetic positions and the local planar frame used by mobility and the channel.
//!
//! All scenarios span a few kilometres at most, so horizontal distances use an
//! equirectangular approximation on a sphere of mean Earth radius. Altitude
//! differences enter distances through Pythagoras (3-D separation).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest horizontal offset accepted by [`to_local`].
pub const MAX_LOCAL_RANGE_M: f64 = 50_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("altitude {0} m outside the 16-bit wire range")]
    Altitude(f64),
    #[error("point is {0:.0} m from the local origin (limit {MAX_LOCAL_RANGE_M} m)")]
    OutOfRange(f64),
}

/// WGS-84 latitude/longitude in degrees, altitude in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeoPosition {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self, GeoError> {
        let p = GeoPosition { lat, lon, alt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(GeoError::Latitude(self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeoError::Longitude(self.lon));
        }
        if !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&self.alt) {
            return Err(GeoError::Altitude(self.alt));
        }
        Ok(())
    }
}

/// East/north/up offsets in metres from a scenario origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPosition {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl LocalPosition {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        LocalPosition { east, north, up }
    }

    pub fn norm(&self) -> f64 {
        (self.east * self.east + self.north * self.north + self.up * self.up).sqrt()
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.east.hypot(self.north)
    }
}

/// 3-D separation of two positions in metres.
pub fn distance(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let mean_lat = ((a.lat + b.lat) * 0.5).to_radians();
    let north = (b.lat - a.lat).to_radians() * EARTH_RADIUS_M;
    let east = (b.lon - a.lon).to_radians() * mean_lat.cos() * EARTH_RADIUS_M;
    let up = b.alt - a.alt;
    (north * north + east * east + up * up).sqrt()
}

/// Projects `p` onto the tangent plane at `origin`.
pub fn to_local(origin: &GeoPosition, p: &GeoPosition) -> Result<LocalPosition, GeoError> {
    let local = project(origin, p);
    let h = local.horizontal_norm();
    if h > MAX_LOCAL_RANGE_M {
        return Err(GeoError::OutOfRange(h));
    }
    Ok(local)
}

/// Inverse of [`to_local`].
pub fn from_local(origin: &GeoPosition, p: &LocalPosition) -> GeoPosition {
    let cos_lat = origin.lat.to_radians().cos();
    GeoPosition {
        lat: origin.lat + (p.north / EARTH_RADIUS_M).to_degrees(),
        lon: origin.lon + (p.east / (EARTH_RADIUS_M * cos_lat)).to_degrees(),
        alt: origin.alt + p.up,
    }
}

/// Moves `p` by a local offset; shorthand for `from_local(p, offset)`.
pub fn offset(p: &GeoPosition, east: f64, north: f64, up: f64) -> GeoPosition {
    from_local(p, &LocalPosition::new(east, north, up))
}

fn project(origin: &GeoPosition, p: &GeoPosition) -> LocalPosition {
    let cos_lat = origin.lat.to_radians().cos();
    LocalPosition {
        east: (p.lon - origin.lon).to_radians() * cos_lat * EARTH_RADIUS_M,
        north: (p.lat - origin.lat).to_radians() * EARTH_RADIUS_M,
        up: p.alt - origin.alt,
    }
}
