//! 3-DOF point-mass flight dynamics over a rotating spherical planet with an
//! exponential atmosphere.
//!
//! States: altitude, longitude, latitude, planet-relative speed, flight-path
//! angle, heading (0 = North, +90 deg = East) and propellant consumed. The
//! scalar rate equations come from expanding the rotating-frame vector
//! kinematics in the local East-North-Up basis; a second, purely vector-based
//! evaluation of the same kinematics is kept alongside as a cross-check.

use crate::logic::{DnfExpr, LogicError, PredicateId, SmoothingParams};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("instantaneous mass is not positive ({0} kg)")]
    NonPositiveMass(f64),
    #[error("flight-path angle within 1e-6 rad of vertical; heading rate is singular")]
    VerticalFlight,
    #[error("scaling reference must be nonzero")]
    ZeroReference,
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Gravitational, geometric and atmospheric constants of the central body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanetModel {
    /// Gravitational parameter, m^3/s^2.
    pub mu: f64,
    /// Mean radius, m.
    pub radius: f64,
    /// Spin rate about the body-fixed Z axis, rad/s.
    pub spin_rate: f64,
    /// Atmospheric density at zero altitude, kg/m^3.
    pub surface_density: f64,
    /// Exponential atmosphere scale height, m.
    pub scale_height: f64,
}

/// Per-segment vehicle characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Vehicle mass at the start of the segment, kg.
    pub mass0: f64,
    pub lift_coeff: f64,
    pub drag_coeff: f64,
    /// Aerodynamic reference area, m^2.
    pub ref_area: f64,
    /// Maximum propellant flow, kg/s (0 when the segment has no engine).
    pub mdot_max: f64,
    /// Maximum thrust, N.
    pub thrust_max: f64,
    /// Specific impulse, s.
    pub isp: f64,
    pub has_bank_control: bool,
    /// Engine available; thrust acts retrograde along the velocity axis.
    pub has_thrust_control: bool,
}

/// Physical flight state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    /// Altitude above the reference sphere, m.
    pub altitude: f64,
    /// Longitude, rad.
    pub longitude: f64,
    /// Latitude, rad.
    pub latitude: f64,
    /// Planet-relative speed, m/s.
    pub speed: f64,
    /// Planet-relative flight-path angle, rad.
    pub fpa: f64,
    /// Heading, rad, 0 = North, +pi/2 = East.
    pub heading: f64,
    /// Propellant consumed since entry, kg.
    pub fuel_burned: f64,
}

impl FlightState {
    pub fn to_array(self) -> [f64; 7] {
        [
            self.altitude,
            self.longitude,
            self.latitude,
            self.speed,
            self.fpa,
            self.heading,
            self.fuel_burned,
        ]
    }

    pub fn from_array(x: [f64; 7]) -> Self {
        FlightState {
            altitude: x[0],
            longitude: x[1],
            latitude: x[2],
            speed: x[3],
            fpa: x[4],
            heading: x[5],
            fuel_burned: x[6],
        }
    }
}

/// State-vector component indices shared by physical and scaled layouts.
pub const ALT: usize = 0;
pub const LON: usize = 1;
pub const LAT: usize = 2;
pub const SPD: usize = 3;
pub const FPA: usize = 4;
pub const HDG: usize = 5;
pub const FUEL: usize = 6;

/// References used to nondimensionalize altitude, speed and propellant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRefs {
    pub altitude: f64,
    pub speed: f64,
    pub fuel: f64,
}

impl ScaleRefs {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.altitude == 0.0 || self.speed == 0.0 || self.fuel == 0.0 {
            return Err(DynamicsError::ZeroReference);
        }
        Ok(())
    }
}

/// Nondimensional state: altitude, speed and propellant divided by their
/// reference values; angles unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledState(pub [f64; 7]);

/// Bank angle and thrust commanded at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Bank angle, rad. Positive banks toward the left of the velocity.
    pub bank: f64,
    /// Thrust magnitude, N.
    pub thrust: f64,
}

/// Atmospheric density `rho0 * exp(-h / H)`.
#[inline]
pub fn density<T: Scalar>(altitude: T, planet: &PlanetModel) -> T {
    T::c(planet.surface_density) * (-altitude / T::c(planet.scale_height)).exp()
}

/// Lift and drag magnitudes `(L, D)` from the exponential atmosphere.
#[inline]
pub fn aero_forces<T: Scalar>(
    altitude: T,
    speed: T,
    seg: &SegmentParams,
    planet: &PlanetModel,
) -> (T, T) {
    let q = T::c(0.5) * density(altitude, planet) * speed * speed * T::c(seg.ref_area);
    (q * T::c(seg.lift_coeff), q * T::c(seg.drag_coeff))
}

/// Stagnation-point heat rate `k * sqrt(rho / r_nose) * v^3`, W/m^2.
#[inline]
pub fn heat_rate<T: Scalar>(altitude: T, speed: T, planet: &PlanetModel, r_nose: f64, k: f64) -> T {
    T::c(k) * (density(altitude, planet) / T::c(r_nose)).sqrt() * speed * speed * speed
}

fn check_state<T: Scalar>(x: &[T; 7], seg: &SegmentParams) -> Result<(), DynamicsError> {
    let mass = seg.mass0 - x[FUEL].value();
    if mass <= 0.0 {
        return Err(DynamicsError::NonPositiveMass(mass));
    }
    if (x[FPA].value().abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-6 {
        return Err(DynamicsError::VerticalFlight);
    }
    Ok(())
}

/// Physical state rates for one flight segment, closed form.
///
/// `x` is the physical state in the [`ALT`]..[`FUEL`] layout. Thrust acts
/// retrograde when the segment has thrust control and is ignored otherwise.
pub fn segment_dynamics<T: Scalar>(
    x: &[T; 7],
    bank: T,
    thrust: T,
    seg: &SegmentParams,
    planet: &PlanetModel,
) -> Result<[T; 7], DynamicsError> {
    check_state(x, seg)?;
    let mass = T::c(seg.mass0) - x[FUEL];
    let (lift, drag) = aero_forces(x[ALT], x[SPD], seg, planet);

    // wind-frame force components; x axis along the velocity
    let (fx, mdot) = if seg.has_thrust_control && seg.thrust_max > 0.0 {
        (
            -thrust - drag,
            T::c(seg.mdot_max / seg.thrust_max) * thrust,
        )
    } else {
        (-drag, T::zero())
    };
    let (fy, fz) = if seg.has_bank_control || seg.lift_coeff != 0.0 {
        (lift * bank.sin(), lift * bank.cos())
    } else {
        (T::zero(), T::zero())
    };

    let r = T::c(planet.radius) + x[ALT];
    let grav = T::c(planet.mu) / (r * r);
    let w = planet.spin_rate;
    let v = x[SPD];
    let (sin_fpa, cos_fpa) = (x[FPA].sin(), x[FPA].cos());
    let (sin_lat, cos_lat) = (x[LAT].sin(), x[LAT].cos());
    let (sin_hdg, cos_hdg) = (x[HDG].sin(), x[HDG].cos());

    let alt_rate = v * sin_fpa;
    let lon_rate = v * cos_fpa * sin_hdg / (r * cos_lat);
    let lat_rate = v * cos_fpa * cos_hdg / r;
    let spd_rate = fx / mass - grav * sin_fpa
        + T::c(w * w) * r * cos_lat * (sin_fpa * cos_lat - cos_fpa * sin_lat * cos_hdg);
    let fpa_rate = fz / (mass * v)
        + (v / r - grav / v) * cos_fpa
        + T::c(2.0 * w) * cos_lat * sin_hdg
        + T::c(w * w) * r / v * cos_lat * (cos_fpa * cos_lat + sin_fpa * sin_lat * cos_hdg);
    let hdg_rate = -fy / (mass * v * cos_fpa)
        + v / r * cos_fpa * sin_hdg * sin_lat / cos_lat
        - T::c(2.0 * w) * (sin_fpa / cos_fpa * cos_lat * cos_hdg - sin_lat)
        + T::c(w * w) * r / (v * cos_fpa) * sin_lat * cos_lat * sin_hdg;

    Ok([alt_rate, lon_rate, lat_rate, spd_rate, fpa_rate, hdg_rate, mdot])
}

/// Physical state rates evaluated through the rotating-frame vector
/// kinematics in Cartesian planet-fixed coordinates, mapped back to
/// spherical-state rates. Independent of [`segment_dynamics`]; the two must
/// agree to roundoff.
pub fn segment_dynamics_frame_based(
    x: &[f64; 7],
    bank: f64,
    thrust: f64,
    seg: &SegmentParams,
    planet: &PlanetModel,
) -> Result<[f64; 7], DynamicsError> {
    check_state(x, seg)?;
    let mass = seg.mass0 - x[FUEL];
    let (lift, drag) = aero_forces(x[ALT], x[SPD], seg, planet);
    let (fx, mdot) = if seg.has_thrust_control && seg.thrust_max > 0.0 {
        (-thrust - drag, seg.mdot_max * thrust / seg.thrust_max)
    } else {
        (-drag, 0.0)
    };
    let (fy, fz) = (lift * bank.sin(), lift * bank.cos());

    let (sin_lon, cos_lon) = x[LON].sin_cos();
    let (sin_lat, cos_lat) = x[LAT].sin_cos();
    let (sin_fpa, cos_fpa) = x[FPA].sin_cos();
    let (sin_hdg, cos_hdg) = x[HDG].sin_cos();

    // local East-North-Up basis in planet-fixed Cartesian components
    let e_east = [-sin_lon, cos_lon, 0.0];
    let e_north = [-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat];
    let e_up = [cos_lat * cos_lon, cos_lat * sin_lon, sin_lat];
    // basis partials with respect to longitude and latitude
    let de_east_dlon = [-cos_lon, -sin_lon, 0.0];
    let de_north_dlon = [sin_lat * sin_lon, -sin_lat * cos_lon, 0.0];
    let de_north_dlat = [-cos_lat * cos_lon, -cos_lat * sin_lon, -sin_lat];
    let de_up_dlon = [-cos_lat * sin_lon, cos_lat * cos_lon, 0.0];
    let de_up_dlat = [-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat];

    let lin = |a: f64, va: [f64; 3], b: f64, vb: [f64; 3], c: f64, vc: [f64; 3]| {
        [
            a * va[0] + b * vb[0] + c * vc[0],
            a * va[1] + b * vb[1] + c * vc[1],
            a * va[2] + b * vb[2] + c * vc[2],
        ]
    };
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    let r_mag = planet.radius + x[ALT];
    let r_vec = [r_mag * e_up[0], r_mag * e_up[1], r_mag * e_up[2]];
    let v_dir = lin(cos_fpa * sin_hdg, e_east, cos_fpa * cos_hdg, e_north, sin_fpa, e_up);
    let v_vec = [x[SPD] * v_dir[0], x[SPD] * v_dir[1], x[SPD] * v_dir[2]];

    // wind frame: x along velocity, z in the vertical plane, y = z cross x
    let x_w = v_dir;
    let z_w = [
        (e_up[0] - sin_fpa * x_w[0]) / cos_fpa,
        (e_up[1] - sin_fpa * x_w[1]) / cos_fpa,
        (e_up[2] - sin_fpa * x_w[2]) / cos_fpa,
    ];
    let y_w = cross(z_w, x_w);

    let grav = planet.mu / (r_mag * r_mag);
    let f_total = [
        fx * x_w[0] + fy * y_w[0] + fz * z_w[0] - mass * grav * e_up[0],
        fx * x_w[1] + fy * y_w[1] + fz * z_w[1] - mass * grav * e_up[1],
        fx * x_w[2] + fy * y_w[2] + fz * z_w[2] - mass * grav * e_up[2],
    ];
    let spin = [0.0, 0.0, planet.spin_rate];
    let coriolis = cross(spin, v_vec);
    let centrifugal = cross(spin, cross(spin, r_vec));
    // planet-relative acceleration of the velocity vector
    let accel = [
        f_total[0] / mass - 2.0 * coriolis[0] - centrifugal[0],
        f_total[1] / mass - 2.0 * coriolis[1] - centrifugal[1],
        f_total[2] / mass - 2.0 * coriolis[2] - centrifugal[2],
    ];

    let alt_rate = x[SPD] * sin_fpa;
    let lon_rate = x[SPD] * cos_fpa * sin_hdg / (r_mag * cos_lat);
    let lat_rate = x[SPD] * cos_fpa * cos_hdg / r_mag;

    // subtract the carriage of the velocity direction through basis motion,
    // then read the component rates in the local wind axes
    let dir_dlon = lin(cos_fpa * sin_hdg, de_east_dlon, cos_fpa * cos_hdg, de_north_dlon, sin_fpa, de_up_dlon);
    let dir_dlat = lin(0.0, [0.0; 3], cos_fpa * cos_hdg, de_north_dlat, sin_fpa, de_up_dlat);
    let carry = [
        x[SPD] * (lon_rate * dir_dlon[0] + lat_rate * dir_dlat[0]),
        x[SPD] * (lon_rate * dir_dlon[1] + lat_rate * dir_dlat[1]),
        x[SPD] * (lon_rate * dir_dlon[2] + lat_rate * dir_dlat[2]),
    ];
    let resid = [accel[0] - carry[0], accel[1] - carry[1], accel[2] - carry[2]];
    let spd_rate = dot(resid, x_w);
    let fpa_rate = dot(resid, z_w) / x[SPD];
    let hdg_rate = -dot(resid, y_w) / (x[SPD] * cos_fpa);

    Ok([alt_rate, lon_rate, lat_rate, spd_rate, fpa_rate, hdg_rate, mdot])
}

/// Nondimensionalize a physical state.
pub fn scale(state: &FlightState, refs: &ScaleRefs) -> Result<ScaledState, DynamicsError> {
    refs.validate()?;
    let x = state.to_array();
    Ok(ScaledState([
        x[ALT] / refs.altitude,
        x[LON],
        x[LAT],
        x[SPD] / refs.speed,
        x[FPA],
        x[HDG],
        x[FUEL] / refs.fuel,
    ]))
}

/// Inverse of [`scale`].
pub fn unscale(state: &ScaledState, refs: &ScaleRefs) -> Result<FlightState, DynamicsError> {
    refs.validate()?;
    let x = &state.0;
    Ok(FlightState {
        altitude: x[ALT] * refs.altitude,
        longitude: x[LON],
        latitude: x[LAT],
        speed: x[SPD] * refs.speed,
        fpa: x[FPA],
        heading: x[HDG],
        fuel_burned: x[FUEL] * refs.fuel,
    })
}

/// Segment rates in scaled coordinates: unscale the state, evaluate the
/// physical rates, scale the rates back.
pub fn segment_dynamics_scaled<T: Scalar>(
    xs: &[T; 7],
    bank: T,
    thrust: T,
    seg: &SegmentParams,
    planet: &PlanetModel,
    refs: &ScaleRefs,
) -> Result<[T; 7], DynamicsError> {
    let x = [
        xs[ALT] * T::c(refs.altitude),
        xs[LON],
        xs[LAT],
        xs[SPD] * T::c(refs.speed),
        xs[FPA],
        xs[HDG],
        xs[FUEL] * T::c(refs.fuel),
    ];
    let d = segment_dynamics(&x, bank, thrust, seg, planet)?;
    Ok([
        d[ALT] / T::c(refs.altitude),
        d[LON],
        d[LAT],
        d[SPD] / T::c(refs.speed),
        d[FPA],
        d[HDG],
        d[FUEL] / T::c(refs.fuel),
    ])
}

/// Smoothed multi-segment dynamics in scaled coordinates: each segment's
/// rate vector weighted by the smoothed switching value of its condition.
///
/// `g_of` evaluates predicate `id` on the current scaled state.
#[allow(clippy::too_many_arguments)]
pub fn blended_dynamics<T: Scalar>(
    xs: &[T; 7],
    bank: T,
    thrust: T,
    segments: &[SegmentParams],
    conditions: &[DnfExpr],
    g_of: &impl Fn(PredicateId) -> T,
    smoothing: &SmoothingParams,
    planet: &PlanetModel,
    refs: &ScaleRefs,
) -> Result<[T; 7], DynamicsError> {
    let mut out = [T::zero(); 7];
    for (seg, dnf) in segments.iter().zip(conditions) {
        let w = dnf.eval_smooth_with(|id| g_of(id), smoothing)?;
        let rates = segment_dynamics_scaled(xs, bank, thrust, seg, planet, refs)?;
        for (o, r) in out.iter_mut().zip(rates) {
            *o += w * r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn mars() -> PlanetModel {
        PlanetModel {
            mu: 4.2828372e13,
            radius: 3.3962e6,
            spin_rate: 7.08824e-5,
            surface_density: 0.025,
            scale_height: 11_100.0,
        }
    }

    fn hypersonic_segment() -> SegmentParams {
        SegmentParams {
            mass0: 3152.0,
            lift_coeff: 0.25,
            drag_coeff: 1.24,
            ref_area: 15.9,
            mdot_max: 0.0,
            thrust_max: 0.0,
            isp: 0.0,
            has_bank_control: true,
            has_thrust_control: false,
        }
    }

    fn powered_segment() -> SegmentParams {
        SegmentParams {
            mass0: 2268.0,
            lift_coeff: 0.0,
            drag_coeff: 0.31,
            ref_area: 15.9,
            mdot_max: 12.43,
            thrust_max: 25_600.0,
            isp: 210.0,
            has_bank_control: false,
            has_thrust_control: true,
        }
    }

    #[test]
    fn density_values() {
        let p = mars();
        assert_eq!(density(0.0, &p), 0.025);
        assert!((density(11_100.0, &p) - 0.025 / std::f64::consts::E).abs() < 1e-15);
        assert!(density(1.0e9, &p) == 0.0 || density(1.0e9, &p) < 1e-300);
    }

    #[test]
    fn aero_force_values() {
        let p = mars();
        let seg = hypersonic_segment();
        let (l, d) = aero_forces(50_000.0, 0.0, &seg, &p);
        assert_eq!((l, d), (0.0, 0.0));
        // parachute segment has no lift
        let mut chute = hypersonic_segment();
        chute.lift_coeff = 0.0;
        chute.drag_coeff = 9.43;
        let (l, _) = aero_forces(8000.0, 400.0, &chute, &p);
        assert_eq!(l, 0.0);
        // entry interface, hand evaluation of the lift/drag formula
        let (l, d) = aero_forces(120_000.0, 5900.0, &seg, &p);
        let rho = 0.025 * (-120_000.0f64 / 11_100.0).exp();
        let q = 0.5 * rho * 5900.0 * 5900.0 * 15.9;
        assert!((l - q * 0.25).abs() < 1e-9 * q);
        assert!((d - q * 1.24).abs() < 1e-9 * q);
    }

    #[test]
    fn heat_rate_values() {
        let p = mars();
        assert_eq!(heat_rate(10_000.0, 0.0, &p, 1.125, 1.898e-4), 0.0);
        let q = heat_rate(120_000.0, 5900.0, &p, 1.125, 1.898e-4);
        let rho = 0.025 * (-120_000.0f64 / 11_100.0).exp();
        let expect = 1.898e-4 * (rho / 1.125).sqrt() * 5900.0f64.powi(3);
        assert!((q - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn ballistic_vacuum_limit() {
        let mut p = mars();
        p.surface_density = 0.0;
        p.spin_rate = 0.0;
        let seg = hypersonic_segment();
        let x = [40_000.0, 0.3, -0.2, 3000.0, -0.25, 1.1, 0.0];
        let d = segment_dynamics(&x, 0.4, 0.0, &seg, &p).unwrap();
        let g = p.mu / (p.radius + x[ALT]).powi(2);
        assert!((d[ALT] - x[SPD] * x[FPA].sin()).abs() < 1e-12);
        assert!((d[SPD] + g * x[FPA].sin()).abs() < 1e-12 * g);
        let fpa_expect = (x[SPD] / (p.radius + x[ALT]) - g / x[SPD]) * x[FPA].cos();
        assert!((d[FPA] - fpa_expect).abs() < 1e-14);
    }

    #[test]
    fn max_propellant_flow() {
        let p = mars();
        let seg = powered_segment();
        let x = [1000.0, 0.28, 0.02, 80.0, -1.2, 1.57, 100.0];
        let d = segment_dynamics(&x, 0.0, seg.thrust_max, &seg, &p).unwrap();
        assert!((d[FUEL] - 12.43).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        let p = mars();
        let seg = powered_segment();
        let x = [1000.0, 0.0, 0.0, 80.0, -0.5, 1.0, 3000.0];
        assert!(matches!(
            segment_dynamics(&x, 0.0, 0.0, &seg, &p),
            Err(DynamicsError::NonPositiveMass(_))
        ));
        let x = [1000.0, 0.0, 0.0, 80.0, -std::f64::consts::FRAC_PI_2, 1.0, 0.0];
        assert_eq!(
            segment_dynamics(&x, 0.0, 0.0, &seg, &p),
            Err(DynamicsError::VerticalFlight)
        );
    }

    pub fn random_state(rng: &mut impl Rng) -> [f64; 7] {
        [
            rng.gen_range(0.0..130_000.0),
            rng.gen_range(-3.1..3.1),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(50.0..6000.0),
            rng.gen_range(-1.4..1.4),
            rng.gen_range(-3.1..3.1),
            rng.gen_range(0.0..300.0),
        ]
    }

    #[test]
    fn closed_form_matches_frame_based() {
        let p = mars();
        let segs = [hypersonic_segment(), powered_segment()];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let x = random_state(&mut rng);
            let seg = &segs[rng.gen_range(0..2)];
            let bank = rng.gen_range(-3.1..3.1);
            let thrust = rng.gen_range(0.0..seg.thrust_max.max(1.0));
            let a = segment_dynamics(&x, bank, thrust, seg, &p).unwrap();
            let b = segment_dynamics_frame_based(&x, bank, thrust, seg, &p).unwrap();
            for i in 0..7 {
                let denom = 1.0 + a[i].abs();
                assert!(
                    ((a[i] - b[i]) / denom).abs() < 1e-9,
                    "component {i}: {} vs {}",
                    a[i],
                    b[i]
                );
            }
        }
    }

    #[test]
    fn fuel_rate_nonnegative() {
        let p = mars();
        let seg = powered_segment();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let x = random_state(&mut rng);
            let t = rng.gen_range(0.0..seg.thrust_max);
            let d = segment_dynamics(&x, 0.0, t, &seg, &p).unwrap();
            assert!(d[FUEL] >= 0.0);
        }
    }

    #[test]
    fn scaling_round_trip() {
        let refs = ScaleRefs { altitude: 120_000.0, speed: 5900.0, fuel: 387.0 };
        let entry = FlightState {
            altitude: 120_000.0,
            longitude: 0.0,
            latitude: 0.0,
            speed: 5900.0,
            fpa: -0.1,
            heading: std::f64::consts::FRAC_PI_2,
            fuel_burned: 0.0,
        };
        let s = scale(&entry, &refs).unwrap();
        assert_eq!(s.0[ALT], 1.0);
        assert_eq!(s.0[SPD], 1.0);
        assert_eq!(s.0[FUEL], 0.0);
        let back = unscale(&s, &refs).unwrap();
        assert_eq!(back, entry);
        // touchdown target
        let td = FlightState {
            altitude: 0.0,
            longitude: 0.2797,
            latitude: 0.0206,
            speed: 0.1,
            fpa: -1.0,
            heading: 0.3,
            fuel_burned: 100.0,
        };
        let st = scale(&td, &refs).unwrap();
        assert_eq!(st.0[ALT], 0.0);
        assert!((st.0[SPD] - 0.1 / 5900.0).abs() < 1e-18);
        let bad = ScaleRefs { altitude: 0.0, speed: 1.0, fuel: 1.0 };
        assert_eq!(scale(&td, &bad), Err(DynamicsError::ZeroReference));
    }

    #[test]
    fn dual_rates_match_f64_rates() {
        use crate::scalar::Dual;
        let p = mars();
        let seg = hypersonic_segment();
        let x = [60_000.0, 0.1, 0.05, 4000.0, -0.1, 1.5, 0.0];
        let xd: [Dual<7, f64>; 7] = std::array::from_fn(|i| Dual::var(x[i], i));
        let d = segment_dynamics(&xd, Dual::new(0.3), Dual::new(0.0), &seg, &p).unwrap();
        let d0 = segment_dynamics(&x, 0.3, 0.0, &seg, &p).unwrap();
        for i in 0..7 {
            assert_eq!(d[i].re, d0[i]);
        }
        // spot-check one partial against finite differences
        let h = 1.0e-3;
        let mut xp = x;
        xp[ALT] += h;
        let mut xm = x;
        xm[ALT] -= h;
        let dp = segment_dynamics(&xp, 0.3, 0.0, &seg, &p).unwrap();
        let dm = segment_dynamics(&xm, 0.3, 0.0, &seg, &p).unwrap();
        let fd = (dp[SPD] - dm[SPD]) / (2.0 * h);
        assert!((d[SPD].eps[ALT] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
    }
}
