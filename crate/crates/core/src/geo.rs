//! Local tangent-plane ↔ geodetic conversion and great-circle distance.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Offsets `(east, north)` metres from `origin` onto the sphere.
pub fn to_geodetic(origin: LatLon, east_m: f64, north_m: f64) -> LatLon {
    let dlat = north_m / EARTH_RADIUS_M;
    let dlon = east_m / (EARTH_RADIUS_M * origin.lat.to_radians().cos());
    LatLon::new(origin.lat + dlat.to_degrees(), origin.lon + dlon.to_degrees())
}

/// Haversine great-circle distance in metres.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_offset_is_origin() {
        let o = LatLon::new(31.2, 121.4);
        assert_eq!(to_geodetic(o, 0.0, 0.0), o);
    }

    #[test]
    fn one_degree_north() {
        let p = to_geodetic(LatLon::new(0.0, 0.0), 0.0, 111_195.0);
        assert!((p.lat - 1.0).abs() < 1e-5, "{p:?}");
        assert_eq!(p.lon, 0.0);
    }

    #[test]
    fn haversine_examples() {
        let a = LatLon::new(0.0, 0.0);
        assert_eq!(haversine_m(a, a), 0.0);
        let b = LatLon::new(1.0, 0.0);
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((haversine_m(a, b) - expected).abs() < 1e-6);
        assert!((expected - 111_195.0).abs() < 1.0);
        assert_eq!(haversine_m(a, b), haversine_m(b, a));
    }

    #[test]
    fn round_trip_within_a_tenth_of_a_percent() {
        let o = LatLon::new(39.95, 116.3);
        for &(e, n) in &[(2000.0, 0.0), (0.0, -2000.0), (1400.0, 1400.0), (-300.0, 25.0), (5.0, 3.0)] {
            let p = to_geodetic(o, e, n);
            let d = haversine_m(o, p);
            let planar = f64::hypot(e, n);
            assert!((d - planar).abs() / planar < 1e-3, "({e},{n}): {d} vs {planar}");
        }
    }
}
