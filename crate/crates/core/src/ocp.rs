//! Smoothed optimal-control problem assembly: blended Lagrangian,
//! Hamiltonian, costate dynamics by forward-mode differentiation,
//! stationarity control law, and the free-final-time two-point boundary
//! value problem over normalized time.
//!
//! The augmented state is `z = [x, lambda]` with the seven scaled flight
//! states followed by their costates. Time is normalized to `tau in [0, 1]`
//! and the free final time enters as an unknown parameter multiplying the
//! right-hand side.

use crate::bvp::SmoothBvp;
use crate::dynamics::{
    blended_dynamics, density, DynamicsError, PlanetModel, ScaleRefs, SegmentParams, FPA, FUEL,
    HDG, LAT, LON, SPD,
};
use crate::logic::{DnfExpr, PredicateId, SmoothingParams};
use crate::scalar::{Dual, Scalar};
use serde::{Deserialize, Serialize};

/// Number of flight states and of augmented states.
pub const NX: usize = 7;
pub const NZ: usize = 14;

/// Cost-functional weights. Heat-load terms use the scaled speed; the
/// thrust-effort term measures thrust in units of `thrust_scale` newtons so
/// the path costs stay comparable in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub thrust_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { k1: 1.0, k2: 1.0, k3: 1e-5, thrust_scale: 1000.0 }
    }
}

/// Per-segment path-cost integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostKind {
    /// `w * sqrt(rho / r_nose) * V^3` with V the scaled speed.
    HeatLoad { weight: f64 },
    /// `w * (T / scale)^2`.
    ThrustEffort { weight: f64, scale: f64 },
}

/// Predicate `x[var] - threshold < 0` on the scaled state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePredicate {
    pub label: String,
    pub var: usize,
    pub threshold: f64,
}

/// Scaled state-vector of the 14-dimensional augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState(pub [f64; NZ]);

/// Which boundary rows are state conditions versus transversality rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcMode {
    pub final_speed_fixed: bool,
    pub initial_heading_fixed: bool,
}

/// Boundary targets in scaled units; continuation morphs these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcTargets {
    pub final_altitude: f64,
    pub final_longitude: f64,
    pub final_latitude: f64,
    pub final_speed: f64,
    pub initial_heading: f64,
}

/// Fully assembled smoothed optimal-control problem.
#[derive(Debug, Clone)]
pub struct EdlOcp {
    pub planet: PlanetModel,
    pub segments: Vec<SegmentParams>,
    pub conditions: Vec<DnfExpr>,
    pub predicates: Vec<AffinePredicate>,
    pub cost: Vec<CostKind>,
    pub refs: ScaleRefs,
    pub smoothing: SmoothingParams,
    pub nose_radius: f64,
    /// Fixed initial scaled state values: altitude, longitude, latitude,
    /// speed and propellant (heading is a target, the path angle is free).
    pub entry: [f64; 5],
    /// Index of the segment with thrust authority.
    pub thrust_segment: usize,
    pub weights: CostWeights,
}

impl EdlOcp {
    #[inline]
    pub fn predicate_value<T: Scalar>(&self, id: PredicateId, x: &[T]) -> T {
        let p = &self.predicates[id.0];
        x[p.var] - T::c(p.threshold)
    }

    /// Smoothed switching weight of each segment at the scaled state.
    pub fn segment_weights<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        self.conditions
            .iter()
            .map(|dnf| {
                dnf.eval_smooth_with(|id| self.predicate_value(id, x), &self.smoothing)
                    .unwrap_or_else(|_| T::c(f64::NAN))
            })
            .collect()
    }

    pub(crate) fn segment_cost<T: Scalar>(&self, kind: &CostKind, x: &[T], thrust: T) -> T {
        match kind {
            CostKind::HeatLoad { weight } => {
                let alt = x[0] * T::c(self.refs.altitude);
                let v = x[SPD];
                T::c(*weight)
                    * (density(alt, &self.planet) / T::c(self.nose_radius)).sqrt()
                    * v
                    * v
                    * v
            }
            CostKind::ThrustEffort { weight, scale } => {
                let t = thrust / T::c(*scale);
                T::c(*weight) * t * t
            }
        }
    }

    /// Smoothed blended path-cost integrand.
    pub fn lagrangian<T: Scalar>(&self, x: &[T], thrust: T) -> T {
        let mut total = T::zero();
        for (kind, dnf) in self.cost.iter().zip(&self.conditions) {
            let w = dnf
                .eval_smooth_with(|id| self.predicate_value(id, x), &self.smoothing)
                .unwrap_or_else(|_| T::c(f64::NAN));
            total += w * self.segment_cost(kind, x, thrust);
        }
        total
    }

    /// Blended scaled state rates.
    pub fn state_rates<T: Scalar>(
        &self,
        x: &[T],
        bank: T,
        thrust: T,
    ) -> Result<[T; NX], DynamicsError> {
        let xs: [T; NX] = x[0..NX].try_into().expect("state slice");
        blended_dynamics(
            &xs,
            bank,
            thrust,
            &self.segments,
            &self.conditions,
            &|id| self.predicate_value(id, x),
            &self.smoothing,
            &self.planet,
            &self.refs,
        )
    }

    /// Hamiltonian `H = L + lambda . f` at a given control.
    pub fn hamiltonian<T: Scalar>(
        &self,
        z: &[T],
        bank: T,
        thrust: T,
    ) -> Result<T, DynamicsError> {
        let f = self.state_rates(&z[0..NX], bank, thrust)?;
        let mut h = self.lagrangian(&z[0..NX], thrust);
        for i in 0..NX {
            h += z[NX + i] * f[i];
        }
        Ok(h)
    }

    /// Costate rates `-dH/dx` by a forward dual pass over the seven states,
    /// holding costates and the control fixed.
    pub fn costate_rates<T: Scalar>(
        &self,
        z: &[T],
        bank: T,
        thrust: T,
    ) -> Result<[T; NX], DynamicsError> {
        let zz: [Dual<NX, T>; NZ] = std::array::from_fn(|i| {
            if i < NX {
                Dual::var(z[i], i)
            } else {
                Dual::new(z[i])
            }
        });
        let h = self.hamiltonian(&zz, Dual::new(bank), Dual::new(thrust))?;
        Ok(std::array::from_fn(|i| -h.eps[i]))
    }

    /// Stationarity control law.
    ///
    /// The Hamiltonian depends on the bank angle through
    /// `A cos(bank) + B sin(bank)` with `A = lam_fpa * c` and
    /// `B = -lam_hdg * c / cos(fpa)`, where `c >= 0` collects the blended
    /// lift terms. The minimizer is the arctangent branch opposite `(A, B)`,
    /// where the second-order condition `-(A cos + B sin) > 0` holds
    /// automatically; the common factor `c` cancels and is dropped. Thrust
    /// enters quadratically, so its stationary point is closed form and is
    /// clamped to the admissible range.
    pub fn optimal_control<T: Scalar>(&self, z: &[T]) -> (T, T) {
        let lam_fpa = z[NX + FPA];
        let lam_hdg = z[NX + HDG];
        let bank = if lam_fpa.value() == 0.0 && lam_hdg.value() == 0.0 {
            T::zero()
        } else {
            (lam_hdg / z[FPA].cos()).atan2(-lam_fpa)
        };

        let seg = &self.segments[self.thrust_segment];
        let mass = T::c(seg.mass0) - z[FUEL] * T::c(self.refs.fuel);
        let dspd_dthrust = -T::one() / (mass * T::c(self.refs.speed));
        let dfuel_dthrust = T::c(seg.mdot_max / (seg.thrust_max * self.refs.fuel));
        let slope = z[NX + SPD] * dspd_dthrust + z[NX + FUEL] * dfuel_dthrust;
        let effort = match self.cost[self.thrust_segment] {
            CostKind::ThrustEffort { weight, scale } => weight / (scale * scale),
            CostKind::HeatLoad { .. } => self.weights.k3,
        };
        let t_stat = -slope / T::c(2.0 * effort);
        (bank, t_stat.clamp_by_value(0.0, seg.thrust_max))
    }

    /// Augmented rates `[x-dot, lambda-dot]` under the stationarity control.
    pub fn augmented_rates<T: Scalar>(&self, z: &[T]) -> Result<[T; NZ], DynamicsError> {
        let (bank, thrust) = self.optimal_control(z);
        let f = self.state_rates(&z[0..NX], bank, thrust)?;
        let lam = self.costate_rates(z, bank, thrust)?;
        let mut out = [T::zero(); NZ];
        out[..NX].copy_from_slice(&f);
        out[NX..].copy_from_slice(&lam);
        Ok(out)
    }

    /// Left boundary residuals (7): fixed entry-state rows, the heading row
    /// (state condition or its transversality replacement) and the free
    /// initial path-angle transversality.
    pub fn bc_left<T: Scalar>(&self, za: &[T], targets: &BcTargets, mode: &BcMode, out: &mut [T]) {
        out[0] = za[0] - T::c(self.entry[0]);
        out[1] = za[LON] - T::c(self.entry[1]);
        out[2] = za[LAT] - T::c(self.entry[2]);
        out[3] = za[SPD] - T::c(self.entry[3]);
        out[4] = za[FUEL] - T::c(self.entry[4]);
        out[5] = if mode.initial_heading_fixed {
            za[HDG] - T::c(targets.initial_heading)
        } else {
            za[NX + HDG]
        };
        out[6] = za[NX + FPA];
    }

    /// Right boundary residuals (8): fixed final-position rows, the speed
    /// row (state condition or transversality), free-state transversality
    /// rows and, last, the free-final-time Hamiltonian condition.
    pub fn bc_right<T: Scalar>(&self, zb: &[T], targets: &BcTargets, mode: &BcMode, out: &mut [T]) {
        out[0] = zb[0] - T::c(targets.final_altitude);
        out[1] = zb[LON] - T::c(targets.final_longitude);
        out[2] = zb[LAT] - T::c(targets.final_latitude);
        out[3] = if mode.final_speed_fixed {
            zb[SPD] - T::c(targets.final_speed)
        } else {
            zb[NX + SPD]
        };
        out[4] = zb[NX + FPA];
        out[5] = zb[NX + HDG];
        out[6] = zb[NX + FUEL];
        let (bank, thrust) = self.optimal_control(zb);
        out[7] = self.hamiltonian(zb, bank, thrust).unwrap_or_else(|_| T::c(f64::NAN));
    }

    /// Stack both boundary sides into the 15-residual vector used by the
    /// free-final-time problem.
    pub fn boundary_residuals(
        &self,
        za: &AugmentedState,
        zb: &AugmentedState,
        targets: &BcTargets,
        mode: &BcMode,
    ) -> [f64; 15] {
        let mut out = [0.0; 15];
        let (mut left, mut right) = ([0.0; 7], [0.0; 8]);
        self.bc_left(&za.0, targets, mode, &mut left);
        self.bc_right(&zb.0, targets, mode, &mut right);
        out[0..7].copy_from_slice(&left);
        out[7..15].copy_from_slice(&right);
        out
    }
}

/// The collocation problem: 14 augmented states over normalized time with
/// the final time free (one parameter, 15 boundary residuals) or frozen
/// (14 residuals, no parameter, Hamiltonian row dropped).
#[derive(Debug, Clone)]
pub struct EdlTpbvp {
    pub ocp: EdlOcp,
    pub targets: BcTargets,
    pub mode: BcMode,
    pub free_time: bool,
    /// Final time used when `free_time` is false.
    pub fixed_tf: f64,
}

impl SmoothBvp for EdlTpbvp {
    fn dim(&self) -> usize {
        NZ
    }

    fn n_params(&self) -> usize {
        usize::from(self.free_time)
    }

    fn n_left_bc(&self) -> usize {
        7
    }

    fn rhs<T: Scalar>(&self, _tau: f64, y: &[T], p: &[T], dy: &mut [T]) {
        let tf = if self.free_time { p[0] } else { T::c(self.fixed_tf) };
        match self.ocp.augmented_rates(y) {
            Ok(rates) => {
                for (o, r) in dy.iter_mut().zip(rates) {
                    *o = tf * r;
                }
            }
            Err(_) => dy.fill(T::c(f64::NAN)),
        }
    }

    fn bc_left<T: Scalar>(&self, ya: &[T], _p: &[T], out: &mut [T]) {
        self.ocp.bc_left(ya, &self.targets, &self.mode, out);
    }

    fn bc_right<T: Scalar>(&self, yb: &[T], _p: &[T], out: &mut [T]) {
        // The final-altitude row goes last: it borders the banded block in
        // the free-time solve. The Hamiltonian row must stay inside the
        // band because it is the only final-boundary row with costate
        // support when the dynamics are momentarily uncontrolled (zero lift
        // during early continuation, thrust on its clamp).
        let mut full = [T::zero(); 8];
        self.ocp.bc_right(yb, &self.targets, &self.mode, &mut full);
        if self.free_time {
            out[..6].copy_from_slice(&full[1..7]);
            out[6] = full[7];
            out[7] = full[0];
        } else {
            out[..6].copy_from_slice(&full[1..7]);
            out[6] = full[0];
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dynamics::ALT;
    use crate::logic::Literal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hand-built three-segment problem matching the mission tables.
    pub fn test_ocp() -> EdlOcp {
        let planet = PlanetModel {
            mu: 4.2828372e13,
            radius: 3.3962e6,
            spin_rate: 7.08824e-5,
            surface_density: 0.025,
            scale_height: 11_100.0,
        };
        let refs = ScaleRefs { altitude: 120_000.0, speed: 5900.0, fuel: 387.0 };
        let area = 15.9;
        let segments = vec![
            SegmentParams {
                mass0: 3152.0,
                lift_coeff: 0.25,
                drag_coeff: 1.24,
                ref_area: area,
                mdot_max: 0.0,
                thrust_max: 0.0,
                isp: 0.0,
                has_bank_control: true,
                has_thrust_control: false,
            },
            SegmentParams {
                mass0: 2617.0,
                lift_coeff: 0.0,
                drag_coeff: 9.43,
                ref_area: area,
                mdot_max: 0.0,
                thrust_max: 0.0,
                isp: 0.0,
                has_bank_control: false,
                has_thrust_control: false,
            },
            SegmentParams {
                mass0: 2268.0,
                lift_coeff: 0.0,
                drag_coeff: 0.31,
                ref_area: area,
                mdot_max: 12.43,
                thrust_max: 25_600.0,
                isp: 210.0,
                has_bank_control: false,
                has_thrust_control: true,
            },
        ];
        let predicates = vec![
            AffinePredicate { label: "v_lt_vP".into(), var: SPD, threshold: 408.0 / 5900.0 },
            AffinePredicate { label: "h_lt_hP".into(), var: ALT, threshold: 3500.0 / 120_000.0 },
            AffinePredicate { label: "h_lt_hPDI".into(), var: ALT, threshold: 2000.0 / 120_000.0 },
        ];
        let lit = |p: usize, negated: bool| Literal { pred: PredicateId(p), negated };
        let conditions = vec![
            DnfExpr::new(vec![vec![lit(0, true), lit(1, true)]]).unwrap(),
            DnfExpr::new(vec![vec![lit(0, false), lit(2, true)], vec![lit(1, false), lit(2, true)]])
                .unwrap(),
            DnfExpr::new(vec![vec![lit(2, false)]]).unwrap(),
        ];
        let w = CostWeights::default();
        EdlOcp {
            planet,
            segments,
            conditions,
            predicates,
            cost: vec![
                CostKind::HeatLoad { weight: w.k1 },
                CostKind::HeatLoad { weight: w.k2 },
                CostKind::ThrustEffort { weight: w.k3, scale: w.thrust_scale },
            ],
            refs,
            smoothing: SmoothingParams::new(100.0, 1.0).unwrap(),
            nose_radius: 1.125,
            entry: [1.0, 0.0, 0.0, 1.0, 0.0],
            thrust_segment: 2,
            weights: w,
        }
    }

    pub fn random_augmented(rng: &mut impl Rng) -> [f64; NZ] {
        let mut z = [0.0; NZ];
        z[ALT] = rng.gen_range(0.01..1.05);
        z[LON] = rng.gen_range(-0.3..0.3);
        z[LAT] = rng.gen_range(-0.3..0.3);
        z[SPD] = rng.gen_range(0.01..1.05);
        z[FPA] = rng.gen_range(-1.2..0.5);
        z[HDG] = rng.gen_range(-1.0..2.5);
        z[FUEL] = rng.gen_range(0.0..0.9);
        for i in NX..NZ {
            z[i] = rng.gen_range(-5.0..5.0);
        }
        z
    }

    #[test]
    fn lagrangian_limits() {
        let mut ocp = test_ocp();
        // slopes steep enough that "deep in a segment" means fully switched
        ocp.smoothing = SmoothingParams::new(2000.0, 2000.0).unwrap();
        // deep in segment 3 with zero thrust: cost vanishes
        let mut x = [0.005, 0.1, 0.02, 0.005, -1.0, 1.5, 0.3];
        let l = ocp.lagrangian(&x, 0.0);
        assert!(l.abs() < 1e-12, "L = {l}");
        // deep in segment 1: the heat-rate integrand with K1
        x = [0.5, 0.05, 0.01, 0.6, -0.1, 1.5, 0.0];
        let l = ocp.lagrangian(&x, 0.0);
        let rho = 0.025 * (-0.5f64 * 120_000.0 / 11_100.0).exp();
        let expect = (rho / 1.125f64).sqrt() * 0.6f64.powi(3);
        assert!((l - expect).abs() < 1e-9 * expect, "L = {l} vs {expect}");
    }

    #[test]
    fn deployment_branch_integrands_agree() {
        // K1 = K2, so the two branch integrands are the same function of the
        // state and nothing jumps when the deployment weight trades over
        let ocp = test_ocp();
        let vp = 408.0 / 5900.0;
        let x = [0.06, 0.2, 0.02, vp, -0.3, 1.5, 0.0];
        let l1 = ocp.segment_cost(&ocp.cost[0], &x, 0.0);
        let l2 = ocp.segment_cost(&ocp.cost[1], &x, 0.0);
        assert_eq!(l1, l2);
    }

    #[test]
    fn hamiltonian_is_cost_plus_costate_dot_rates() {
        let ocp = test_ocp();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let z = random_augmented(&mut rng);
            let bank = rng.gen_range(-3.0..3.0);
            let thrust = rng.gen_range(0.0..25_600.0);
            let h = ocp.hamiltonian(&z, bank, thrust).unwrap();
            let f = ocp.state_rates(&z[0..NX], bank, thrust).unwrap();
            let mut expect = ocp.lagrangian(&z[0..NX], thrust);
            for i in 0..NX {
                expect += z[NX + i] * f[i];
            }
            assert!((h - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn zero_costates_give_h_equals_lagrangian() {
        let ocp = test_ocp();
        let mut z = [0.0; NZ];
        z[..NX].copy_from_slice(&[0.4, 0.1, 0.02, 0.5, -0.2, 1.5, 0.0]);
        let h = ocp.hamiltonian(&z, 0.2, 500.0).unwrap();
        let l = ocp.lagrangian(&z[0..NX], 500.0);
        assert_eq!(h, l);
    }

    #[test]
    fn costate_rates_match_finite_differences() {
        let ocp = test_ocp();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let z = random_augmented(&mut rng);
            let bank = rng.gen_range(-3.0..3.0);
            let thrust = rng.gen_range(0.0..25_600.0);
            let rates = ocp.costate_rates(&z, bank, thrust).unwrap();
            for i in 0..NX {
                let step = 1e-6 * (1.0 + z[i].abs());
                let mut zp = z;
                zp[i] += step;
                let mut zm = z;
                zm[i] -= step;
                let hp = ocp.hamiltonian(&zp, bank, thrust).unwrap();
                let hm = ocp.hamiltonian(&zm, bank, thrust).unwrap();
                let fd = -(hp - hm) / (2.0 * step);
                let denom = 1.0 + fd.abs().max(rates[i].abs());
                assert!(
                    ((rates[i] - fd) / denom).abs() < 1e-6,
                    "state {i}: dual {} vs fd {}",
                    rates[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn longitude_is_cyclic() {
        let mut ocp = test_ocp();
        ocp.planet.spin_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let z = random_augmented(&mut rng);
            let rates = ocp.costate_rates(&z, 0.7, 4000.0).unwrap();
            assert_eq!(rates[LON], 0.0);
        }
    }

    #[test]
    fn control_stationarity() {
        let ocp = test_ocp();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..300 {
            let z = random_augmented(&mut rng);
            let (bank, thrust) = ocp.optimal_control(&z);
            let h0 = ocp.hamiltonian(&z, bank, thrust).unwrap();
            let db = 1e-5;
            let hp = ocp.hamiltonian(&z, bank + db, thrust).unwrap();
            let hm = ocp.hamiltonian(&z, bank - db, thrust).unwrap();
            let dh_dbank = (hp - hm) / (2.0 * db);
            assert!(
                dh_dbank.abs() < 1e-9 * (1.0 + h0.abs()),
                "dH/dbank = {dh_dbank} at H = {h0}"
            );
            // the bank branch is a minimizer, not the saddle
            assert!(hp >= h0 - 1e-9 * (1.0 + h0.abs()));
            if thrust > 1.0 && thrust < 25_599.0 {
                let dt = 1e-3;
                let hp = ocp.hamiltonian(&z, bank, thrust + dt).unwrap();
                let hm = ocp.hamiltonian(&z, bank, thrust - dt).unwrap();
                let dh_dthrust = (hp - hm) / (2.0 * dt);
                assert!(
                    dh_dthrust.abs() < 1e-8 * (1.0 + h0.abs()),
                    "dH/dthrust = {dh_dthrust}"
                );
            }
        }
    }

    #[test]
    fn zero_costates_tie_break() {
        let ocp = test_ocp();
        let mut z = [0.0; NZ];
        z[..NX].copy_from_slice(&[0.01, 0.1, 0.02, 0.01, -0.5, 1.0, 0.2]);
        let (bank, thrust) = ocp.optimal_control(&z);
        assert_eq!(bank, 0.0);
        assert_eq!(thrust, 0.0);
    }

    #[test]
    fn thrust_clamps_at_max() {
        let ocp = test_ocp();
        let mut z = [0.0; NZ];
        z[..NX].copy_from_slice(&[0.01, 0.28, 0.02, 0.01, -1.0, 1.5, 0.1]);
        z[NX + SPD] = 50.0; // strong deceleration demand
        let (_, thrust) = ocp.optimal_control(&z);
        assert_eq!(thrust, 25_600.0);
    }

    #[test]
    fn boundary_residual_semantics() {
        let ocp = test_ocp();
        let targets = BcTargets {
            final_altitude: 0.0,
            final_longitude: 16.027f64.to_radians(),
            final_latitude: 1.1809f64.to_radians(),
            final_speed: 0.1 / 5900.0,
            initial_heading: std::f64::consts::FRAC_PI_2,
        };
        let mode = BcMode { final_speed_fixed: true, initial_heading_fixed: true };
        let mut za = AugmentedState([0.0; NZ]);
        za.0[ALT] = 1.0;
        za.0[SPD] = 1.0;
        za.0[HDG] = std::f64::consts::FRAC_PI_2;
        let mut zb = AugmentedState([0.0; NZ]);
        zb.0[ALT] = 0.0;
        zb.0[LON] = targets.final_longitude;
        zb.0[LAT] = targets.final_latitude;
        zb.0[SPD] = targets.final_speed;
        zb.0[FPA] = -1.0;
        zb.0[HDG] = 0.4;
        let r = ocp.boundary_residuals(&za, &zb, &targets, &mode);
        // all state and transversality rows vanish by construction
        for (i, v) in r.iter().enumerate().take(14) {
            assert!(v.abs() < 1e-12, "row {i} = {v}");
        }
        // moving the longitude target moves exactly its residual row
        let mut t2 = targets;
        t2.final_longitude += 0.01;
        let r2 = ocp.boundary_residuals(&za, &zb, &t2, &mode);
        assert!((r2[8] - (r[8] - 0.01)).abs() < 1e-15);
        // free-speed mode swaps the state row for the costate row
        let free = BcMode { final_speed_fixed: false, initial_heading_fixed: false };
        let mut zb2 = zb;
        zb2.0[NX + SPD] = 0.77;
        let r3 = ocp.boundary_residuals(&za, &zb2, &targets, &free);
        assert_eq!(r3[10], 0.77);
    }

    #[test]
    fn fixed_time_variant_has_14_residuals() {
        let ocp = test_ocp();
        let targets = BcTargets {
            final_altitude: 0.9,
            final_longitude: 0.001,
            final_latitude: 0.0,
            final_speed: 0.9,
            initial_heading: std::f64::consts::FRAC_PI_2,
        };
        let mode = BcMode { final_speed_fixed: false, initial_heading_fixed: false };
        let free =
            EdlTpbvp { ocp: ocp.clone(), targets, mode, free_time: true, fixed_tf: 0.0 };
        assert_eq!(free.n_params(), 1);
        assert_eq!(free.n_left_bc(), 7);
        let frozen = EdlTpbvp { free_time: false, fixed_tf: 0.1, ..free.clone() };
        assert_eq!(frozen.n_params(), 0);
        // 7 left + 7 right = 14 residuals, Hamiltonian row dropped
        let mut out = vec![0.0; 7];
        let zb = vec![0.1; NZ];
        SmoothBvp::bc_right(&frozen, &zb, &[], &mut out);
        let mut full = vec![0.0; 8];
        SmoothBvp::bc_right(&free, &zb, &[0.1], &mut full);
        // frozen variant shares all rows except the Hamiltonian one
        assert_eq!(out[0..6], full[0..6]);
        assert_eq!(out[6], full[7]);
    }
}
