//! Mission configuration, the end-to-end solve pipeline, switching-event
//! extraction and run artifacts.
//!
//! A mission config is a JSON document mirroring the scenario tables:
//! planet constants, per-segment mass/aero/propulsion with a switching
//! condition in DNF over named predicates, boundary conditions, trigger
//! thresholds, cost weights and the continuation schedule. Configs for both
//! shipped profiles (and their single-minterm variants) are constructable
//! in code and shipped under `configs/`.

use crate::bvp::{BvpOptions, BvpSolution};
use crate::dynamics::{PlanetModel, ScaleRefs, SegmentParams, ALT, FPA, FUEL, HDG, LAT, LON, SPD};
use crate::homotopy::{
    run_schedule, seed_guess, solution_cost, ContinuationStep, HomotopyError, HomotopyOutcome,
    HomotopySchedule, MorphParam, MorphTarget, RampKind, SeedSpec, TraceRecord,
};
use crate::logic::{DnfExpr, Literal, PredicateId, SmoothingParams};
use crate::ocp::{AffinePredicate, BcMode, CostKind, EdlOcp, NX, NZ};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error("event '{0}' has no crossing in the solution")]
    EventNotFound(String),
    #[error("artifacts are incompatible: {0}")]
    Incompatible(String),
}

/// Vehicle-level constants shared by all segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    /// Stagnation-point nose radius, m.
    pub nose_radius: f64,
    /// Aerodynamic reference area, m^2.
    pub ref_area: f64,
    /// Propellant loaded at entry, kg; also the propellant scale reference.
    pub propellant_mass: f64,
}

/// Named predicate `var < threshold` in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateConfig {
    pub id: String,
    /// One of: altitude, longitude, latitude, speed, fpa, heading,
    /// fuel_burned.
    pub var: String,
    pub threshold: f64,
}

/// Per-segment cost integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentCostConfig {
    /// Stagnation-point heat-rate integrand (scaled speed cubed).
    HeatLoad { weight: f64 },
    /// Quadratic thrust effort with thrust measured in `thrust_scale` N.
    ThrustEffort { weight: f64, thrust_scale: f64 },
}

/// One flight segment: physical characteristics plus its activation
/// condition as a DNF over named predicates, `[[ [id, sign], ... ], ...]`
/// with sign +1 for `g < 0` as declared and -1 for the negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub name: String,
    pub mass0: f64,
    pub lift_coeff: f64,
    pub drag_coeff: f64,
    pub mdot_max: f64,
    pub thrust_max: f64,
    pub isp: f64,
    pub bank_control: bool,
    pub thrust_control: bool,
    pub condition: Vec<Vec<(String, i8)>>,
    pub cost: SegmentCostConfig,
}

/// Boundary conditions mirroring the scenario table. Path angle is free at
/// both ends; heading and consumed propellant are fixed initially and free
/// finally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub initial_altitude: f64,
    pub initial_longitude_deg: f64,
    pub initial_latitude_deg: f64,
    pub initial_speed: f64,
    pub initial_heading_deg: f64,
    pub initial_fuel_burned: f64,
    pub final_altitude: f64,
    pub final_longitude_deg: f64,
    pub final_latitude_deg: f64,
    pub final_speed: f64,
}

/// Event definitions: each event fires at the earliest threshold crossing
/// among its predicates; which predicate crossed first is the trigger
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub deployment: Vec<String>,
    pub powered_descent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeRamp {
    Linear,
    Geometric,
}

/// Continuation schedule constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyConfig {
    /// Seed propagation horizon, s.
    pub seed_horizon: f64,
    pub seed_costates: [f64; 7],
    pub seed_sigmoid_slope: f64,
    pub seed_tanh_slope: f64,
    /// Lift coefficient of the banking segment during seeding and the
    /// first continuation steps.
    pub seed_lift_coeff: f64,
    pub final_sigmoid_slope: f64,
    pub final_tanh_slope: f64,
    pub position_iterations: usize,
    pub speed_iterations: usize,
    pub lift_iterations: usize,
    pub heading_iterations: usize,
    pub slope_iterations: usize,
    pub max_bisections: u32,
    pub slope_ramp: SlopeRamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub initial_mesh_points: usize,
    pub max_mesh_points: usize,
    pub max_newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    pub name: String,
    pub planet: PlanetModel,
    pub vehicle: VehicleConfig,
    pub predicates: Vec<PredicateConfig>,
    pub segments: Vec<SegmentConfig>,
    pub events: EventConfig,
    pub boundary: BoundaryConfig,
    pub homotopy: HomotopyConfig,
    pub solver: SolverConfig,
}

fn var_index(name: &str) -> Option<usize> {
    Some(match name {
        "altitude" => ALT,
        "longitude" => LON,
        "latitude" => LAT,
        "speed" => SPD,
        "fpa" => FPA,
        "heading" => HDG,
        "fuel_burned" => FUEL,
        _ => return None,
    })
}

impl MissionConfig {
    pub fn from_json(text: &str) -> Result<Self, MissionError> {
        let cfg: MissionConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, MissionError> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Field-by-field semantic validation.
    pub fn validate(&self) -> Result<(), MissionError> {
        let mut problems = Vec::new();
        fn check(problems: &mut Vec<String>, ok: bool, msg: &str) {
            if !ok {
                problems.push(msg.to_string());
            }
        }
        check(&mut problems, self.planet.mu > 0.0, "planet.mu must be positive");
        check(&mut problems, self.planet.radius > 0.0, "planet.radius must be positive");
        check(&mut problems, self.planet.spin_rate >= 0.0, "planet.spin_rate must be nonnegative");
        check(&mut problems, self.planet.surface_density >= 0.0, "planet.surface_density must be nonnegative");
        check(&mut problems, self.planet.scale_height > 0.0, "planet.scale_height must be positive");
        check(&mut problems, self.vehicle.nose_radius > 0.0, "vehicle.nose_radius must be positive");
        check(&mut problems, self.vehicle.ref_area > 0.0, "vehicle.ref_area must be positive");
        check(&mut problems, self.vehicle.propellant_mass > 0.0, "vehicle.propellant_mass must be positive");
        check(&mut problems, self.boundary.initial_altitude > 0.0, "boundary.initial_altitude must be positive");
        check(&mut problems, self.boundary.initial_speed > 0.0, "boundary.initial_speed must be positive");
        check(&mut problems, self.boundary.final_speed > 0.0, "boundary.final_speed must be positive");
        check(&mut problems, !self.segments.is_empty(), "segments must be non-empty");
        let thrust_count = self.segments.iter().filter(|s| s.thrust_control).count();
        check(&mut problems, thrust_count == 1, "exactly one segment must have thrust_control");
        let ids: Vec<&str> = self.predicates.iter().map(|p| p.id.as_str()).collect();
        for p in &self.predicates {
            if var_index(&p.var).is_none() {
                problems.push(format!("predicates.{}.var '{}' is not a state name", p.id, p.var));
            }
        }
        for (i, seg) in self.segments.iter().enumerate() {
            check(&mut problems, seg.mass0 > 0.0, &format!("segments[{i}].mass0 must be positive"));
            check(&mut problems, seg.drag_coeff > 0.0, &format!("segments[{i}].drag_coeff must be positive"));
            check(&mut problems, seg.mdot_max >= 0.0, &format!("segments[{i}].mdot_max must be nonnegative"));
            check(&mut problems, seg.thrust_max >= 0.0, &format!("segments[{i}].thrust_max must be nonnegative"));
            if seg.thrust_control {
                check(&mut problems, 
                    seg.thrust_max > 0.0 && seg.mdot_max > 0.0,
                    &format!("segments[{i}] has thrust_control but no thrust_max/mdot_max"),
                );
            }
            check(&mut problems, !seg.condition.is_empty(), &format!("segments[{i}].condition must be non-empty"));
            for minterm in &seg.condition {
                check(&mut problems, 
                    !minterm.is_empty(),
                    &format!("segments[{i}].condition has an empty minterm"),
                );
                for (id, sign) in minterm {
                    if !ids.contains(&id.as_str()) {
                        problems
                            .push(format!("segments[{i}].condition references unknown '{id}'"));
                    }
                    if *sign != 1 && *sign != -1 {
                        problems.push(format!(
                            "segments[{i}].condition sign for '{id}' must be +1 or -1"
                        ));
                    }
                }
            }
        }
        for id in self.events.deployment.iter().chain(&self.events.powered_descent) {
            if !ids.contains(&id.as_str()) {
                problems.push(format!("events reference unknown predicate '{id}'"));
            }
        }
        let h = &self.homotopy;
        check(&mut problems, h.seed_horizon > 0.0, "homotopy.seed_horizon must be positive");
        check(&mut problems, h.seed_sigmoid_slope > 0.0, "homotopy.seed_sigmoid_slope must be positive");
        check(&mut problems, h.seed_tanh_slope > 0.0, "homotopy.seed_tanh_slope must be positive");
        check(&mut problems, h.final_sigmoid_slope > 0.0, "homotopy.final_sigmoid_slope must be positive");
        check(&mut problems, h.final_tanh_slope > 0.0, "homotopy.final_tanh_slope must be positive");
        for (n, v) in [
            ("position_iterations", h.position_iterations),
            ("speed_iterations", h.speed_iterations),
            ("lift_iterations", h.lift_iterations),
            ("heading_iterations", h.heading_iterations),
            ("slope_iterations", h.slope_iterations),
        ] {
            check(&mut problems, v >= 1, &format!("homotopy.{n} must be at least 1"));
        }
        check(&mut problems, self.solver.tolerance > 0.0, "solver.tolerance must be positive");
        check(&mut problems, self.solver.initial_mesh_points >= 5, "solver.initial_mesh_points must be >= 5");
        check(&mut problems, 
            self.solver.max_mesh_points >= self.solver.initial_mesh_points,
            "solver.max_mesh_points must cover the initial mesh",
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MissionError::Validation(problems))
        }
    }

    pub fn scale_refs(&self) -> ScaleRefs {
        ScaleRefs {
            altitude: self.boundary.initial_altitude,
            speed: self.boundary.initial_speed,
            fuel: self.vehicle.propellant_mass,
        }
    }

    fn predicate_index(&self) -> HashMap<&str, usize> {
        self.predicates.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect()
    }

    /// Scale a physical predicate threshold into state units.
    fn scaled_threshold(&self, var: usize, physical: f64) -> f64 {
        let refs = self.scale_refs();
        match var {
            ALT => physical / refs.altitude,
            SPD => physical / refs.speed,
            FUEL => physical / refs.fuel,
            _ => physical,
        }
    }

    /// Assemble the smoothed optimal-control problem. With `seeded` the
    /// smoothing slopes and the banking segment's lift coefficient take
    /// their continuation seed values.
    pub fn build_ocp(&self, seeded: bool) -> EdlOcp {
        let refs = self.scale_refs();
        let index = self.predicate_index();
        let predicates: Vec<AffinePredicate> = self
            .predicates
            .iter()
            .map(|p| {
                let var = var_index(&p.var).expect("validated var");
                AffinePredicate {
                    label: p.id.clone(),
                    var,
                    threshold: self.scaled_threshold(var, p.threshold),
                }
            })
            .collect();
        let mut segments = Vec::new();
        let mut conditions = Vec::new();
        let mut cost = Vec::new();
        for seg in &self.segments {
            let lift = if seeded && seg.bank_control {
                self.homotopy.seed_lift_coeff
            } else {
                seg.lift_coeff
            };
            segments.push(SegmentParams {
                mass0: seg.mass0,
                lift_coeff: lift,
                drag_coeff: seg.drag_coeff,
                ref_area: self.vehicle.ref_area,
                mdot_max: seg.mdot_max,
                thrust_max: seg.thrust_max,
                isp: seg.isp,
                has_bank_control: seg.bank_control,
                has_thrust_control: seg.thrust_control,
            });
            let minterms: Vec<Vec<Literal>> = seg
                .condition
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|(id, sign)| Literal {
                            pred: PredicateId(index[id.as_str()]),
                            negated: *sign < 0,
                        })
                        .collect()
                })
                .collect();
            conditions.push(DnfExpr::new(minterms).expect("validated condition"));
            cost.push(match seg.cost {
                SegmentCostConfig::HeatLoad { weight } => CostKind::HeatLoad { weight },
                SegmentCostConfig::ThrustEffort { weight, thrust_scale } => {
                    CostKind::ThrustEffort { weight, scale: thrust_scale }
                }
            });
        }
        let smoothing = if seeded {
            SmoothingParams::new(self.homotopy.seed_sigmoid_slope, self.homotopy.seed_tanh_slope)
                .expect("validated slopes")
        } else {
            SmoothingParams::new(self.homotopy.final_sigmoid_slope, self.homotopy.final_tanh_slope)
                .expect("validated slopes")
        };
        let thrust_segment =
            self.segments.iter().position(|s| s.thrust_control).expect("validated thrust segment");
        let k3 = match self.segments[thrust_segment].cost {
            SegmentCostConfig::ThrustEffort { weight, .. } => weight,
            SegmentCostConfig::HeatLoad { weight } => weight,
        };
        EdlOcp {
            planet: self.planet.clone(),
            segments,
            conditions,
            predicates,
            cost,
            refs,
            smoothing,
            nose_radius: self.vehicle.nose_radius,
            entry: [
                1.0,
                self.boundary.initial_longitude_deg.to_radians(),
                self.boundary.initial_latitude_deg.to_radians(),
                1.0,
                self.boundary.initial_fuel_burned / refs.fuel,
            ],
            thrust_segment,
            weights: crate::ocp::CostWeights { k3, ..Default::default() },
        }
    }

    /// The five-step continuation schedule, optionally with every iteration
    /// count divided by `iter_scale`.
    pub fn build_schedule(&self, iter_scale: u32) -> HomotopySchedule {
        let scale = |n: usize| (n / iter_scale.max(1) as usize).max(1);
        let h = &self.homotopy;
        let b = &self.boundary;
        let refs = self.scale_refs();
        let bank_segment =
            self.segments.iter().position(|s| s.bank_control).unwrap_or(0);
        let bank_lift_end = self.segments[bank_segment].lift_coeff;
        let slope_ramp = match h.slope_ramp {
            SlopeRamp::Linear => RampKind::Linear,
            SlopeRamp::Geometric => RampKind::Geometric,
        };
        let free = BcMode { final_speed_fixed: false, initial_heading_fixed: false };
        let speed_fixed = BcMode { final_speed_fixed: true, initial_heading_fixed: false };
        let both_fixed = BcMode { final_speed_fixed: true, initial_heading_fixed: true };
        let lin = |param, end| MorphTarget { param, end, ramp: RampKind::Linear };
        HomotopySchedule {
            steps: vec![
                ContinuationStep {
                    name: "final_position".into(),
                    targets: vec![
                        lin(MorphParam::FinalLongitude, b.final_longitude_deg.to_radians()),
                        lin(MorphParam::FinalLatitude, b.final_latitude_deg.to_radians()),
                        lin(MorphParam::FinalAltitude, b.final_altitude / refs.altitude),
                    ],
                    iterations: scale(h.position_iterations),
                    mode: free,
                },
                ContinuationStep {
                    name: "final_speed".into(),
                    targets: vec![lin(MorphParam::FinalSpeed, b.final_speed / refs.speed)],
                    iterations: scale(h.speed_iterations),
                    mode: speed_fixed,
                },
                ContinuationStep {
                    name: "lift".into(),
                    targets: vec![lin(
                        MorphParam::LiftCoeff { segment: bank_segment },
                        bank_lift_end,
                    )],
                    iterations: scale(h.lift_iterations),
                    mode: speed_fixed,
                },
                ContinuationStep {
                    name: "initial_heading".into(),
                    targets: vec![lin(
                        MorphParam::InitialHeading,
                        b.initial_heading_deg.to_radians(),
                    )],
                    iterations: scale(h.heading_iterations),
                    mode: both_fixed,
                },
                ContinuationStep {
                    name: "slopes".into(),
                    targets: vec![
                        MorphTarget {
                            param: MorphParam::SigmoidSlope,
                            end: h.final_sigmoid_slope,
                            ramp: slope_ramp,
                        },
                        MorphTarget {
                            param: MorphParam::TanhSlope,
                            end: h.final_tanh_slope,
                            ramp: slope_ramp,
                        },
                    ],
                    iterations: scale(h.slope_iterations),
                    mode: both_fixed,
                },
            ],
            max_bisections: h.max_bisections,
        }
    }

    pub fn solver_options(&self) -> BvpOptions {
        BvpOptions {
            tol: self.solver.tolerance,
            newton_tol: (self.solver.tolerance * 1e-2).max(5e-14),
            max_newton: self.solver.max_newton_iterations,
            max_nodes: self.solver.max_mesh_points,
            max_remesh: 10,
        }
    }

    /// Shipped profile: low parachute-deployment altitude (velocity
    /// triggered).
    pub fn profile1() -> Self {
        let two_arg = |a: &str, s: i8| (a.to_string(), s);
        MissionConfig {
            name: "profile1".into(),
            planet: PlanetModel {
                mu: 4.2828372e13,
                radius: 3.3962e6,
                spin_rate: 7.08824e-5,
                surface_density: 0.025,
                scale_height: 11_100.0,
            },
            vehicle: VehicleConfig {
                nose_radius: 1.125,
                ref_area: 15.9,
                propellant_mass: 387.0,
            },
            predicates: vec![
                PredicateConfig { id: "v_lt_vP".into(), var: "speed".into(), threshold: 408.0 },
                PredicateConfig {
                    id: "h_lt_hP".into(),
                    var: "altitude".into(),
                    threshold: 3500.0,
                },
                PredicateConfig {
                    id: "h_lt_hPDI".into(),
                    var: "altitude".into(),
                    threshold: 2000.0,
                },
            ],
            segments: vec![
                SegmentConfig {
                    name: "hypersonic".into(),
                    mass0: 3152.0,
                    lift_coeff: 0.25,
                    drag_coeff: 1.24,
                    mdot_max: 0.0,
                    thrust_max: 0.0,
                    isp: 0.0,
                    bank_control: true,
                    thrust_control: false,
                    condition: vec![vec![two_arg("v_lt_vP", -1), two_arg("h_lt_hP", -1)]],
                    cost: SegmentCostConfig::HeatLoad { weight: 1.0 },
                },
                SegmentConfig {
                    name: "parachute".into(),
                    mass0: 2617.0,
                    lift_coeff: 0.0,
                    drag_coeff: 9.43,
                    mdot_max: 0.0,
                    thrust_max: 0.0,
                    isp: 0.0,
                    bank_control: false,
                    thrust_control: false,
                    condition: vec![
                        vec![two_arg("v_lt_vP", 1), two_arg("h_lt_hPDI", -1)],
                        vec![two_arg("h_lt_hP", 1), two_arg("h_lt_hPDI", -1)],
                    ],
                    cost: SegmentCostConfig::HeatLoad { weight: 1.0 },
                },
                SegmentConfig {
                    name: "powered".into(),
                    mass0: 2268.0,
                    lift_coeff: 0.0,
                    drag_coeff: 0.31,
                    mdot_max: 12.43,
                    thrust_max: 25_600.0,
                    isp: 210.0,
                    bank_control: false,
                    thrust_control: true,
                    condition: vec![vec![two_arg("h_lt_hPDI", 1)]],
                    cost: SegmentCostConfig::ThrustEffort { weight: 1e-5, thrust_scale: 1000.0 },
                },
            ],
            events: EventConfig {
                deployment: vec!["v_lt_vP".into(), "h_lt_hP".into()],
                powered_descent: vec!["h_lt_hPDI".into()],
            },
            boundary: BoundaryConfig {
                initial_altitude: 120_000.0,
                initial_longitude_deg: 0.0,
                initial_latitude_deg: 0.0,
                initial_speed: 5900.0,
                initial_heading_deg: 90.0,
                initial_fuel_burned: 0.0,
                final_altitude: 0.0,
                final_longitude_deg: 16.027,
                final_latitude_deg: 1.1809,
                final_speed: 0.1,
            },
            homotopy: HomotopyConfig {
                seed_horizon: 0.1,
                seed_costates: [0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
                seed_sigmoid_slope: 100.0,
                seed_tanh_slope: 1.0,
                seed_lift_coeff: 0.0,
                final_sigmoid_slope: 40_000.0,
                final_tanh_slope: 40_000.0,
                position_iterations: 1000,
                speed_iterations: 500,
                lift_iterations: 500,
                heading_iterations: 500,
                slope_iterations: 1000,
                max_bisections: 8,
                slope_ramp: SlopeRamp::Linear,
            },
            solver: SolverConfig {
                tolerance: 1e-8,
                initial_mesh_points: 101,
                max_mesh_points: 5000,
                max_newton_iterations: 40,
            },
        }
    }

    /// Shipped profile: high parachute-deployment altitude (altitude
    /// triggered). Identical to profile 1 except the deployment-altitude
    /// threshold.
    pub fn profile2() -> Self {
        let mut cfg = Self::profile1();
        cfg.name = "profile2".into();
        for p in cfg.predicates.iter_mut() {
            if p.id == "h_lt_hP" {
                p.threshold = 6500.0;
            }
        }
        cfg
    }

    /// Single-minterm variant of profile 1: the deployment-altitude guard is
    /// dropped (requires knowing deployment is velocity-triggered).
    pub fn profile1_single_minterm() -> Self {
        let mut cfg = Self::profile1();
        cfg.name = "profile1_rashs".into();
        cfg.segments[0].condition = vec![vec![("v_lt_vP".into(), -1)]];
        cfg.segments[1].condition =
            vec![vec![("v_lt_vP".into(), 1), ("h_lt_hPDI".into(), -1)]];
        cfg
    }

    /// Single-minterm variant of profile 2: the deployment-velocity trigger
    /// is dropped (requires knowing deployment is altitude-triggered).
    pub fn profile2_single_minterm() -> Self {
        let mut cfg = Self::profile2();
        cfg.name = "profile2_rashs".into();
        cfg.segments[0].condition = vec![vec![("h_lt_hP".into(), -1)]];
        cfg.segments[1].condition =
            vec![vec![("h_lt_hP".into(), 1), ("h_lt_hPDI".into(), -1)]];
        cfg
    }
}

/// Simple column-labelled numeric table with delimited-text I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{v:.17e}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MissionError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| MissionError::Incompatible("empty table".into()))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse()).collect();
            let row = row.map_err(|_| {
                MissionError::Incompatible(format!("row {} is not numeric", i + 2))
            })?;
            if row.len() != columns.len() {
                return Err(MissionError::Incompatible(format!(
                    "row {} has {} fields, expected {}",
                    i + 2,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

/// Switching events located on a solved trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsRecord {
    pub deployment_time: f64,
    /// Predicates that fired first (more than one on a tie within 1 us).
    pub deployment_triggers: Vec<String>,
    pub deployment_speed: f64,
    pub deployment_altitude: f64,
    pub pdi_time: f64,
    pub pdi_speed: f64,
    pub pdi_altitude: f64,
    pub touchdown_time: f64,
}

/// Everything a solve produces.
#[derive(Debug, Clone)]
pub struct MissionRun {
    pub config: MissionConfig,
    pub trajectory: Table,
    pub costates: Table,
    pub events: EventsRecord,
    pub trace: Vec<TraceRecord>,
    pub trace_columns: Vec<String>,
    pub final_time: f64,
    pub cost: f64,
    pub solution: BvpSolution,
    pub ocp: EdlOcp,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Divide every continuation step's iteration count by this factor.
    pub iter_scale: u32,
    /// Number of uniform samples in the trajectory/costate tables.
    pub samples: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { iter_scale: 1, samples: 2001, out_dir: None }
    }
}

/// Solve a mission end to end: seed propagation, continuation schedule,
/// dense evaluation, event extraction and (optionally) artifact files.
///
/// On a continuation abort the partial trace is still written before the
/// error is returned.
pub fn run_mission(cfg: &MissionConfig, opts: &RunOptions) -> Result<MissionRun, MissionError> {
    cfg.validate()?;
    let seed_ocp = cfg.build_ocp(true);
    let seed = SeedSpec { horizon: cfg.homotopy.seed_horizon, costates: cfg.homotopy.seed_costates };
    let guess = seed_guess(&seed_ocp, &seed, cfg.solver.initial_mesh_points)?;
    let schedule = cfg.build_schedule(opts.iter_scale);
    let outcome = match run_schedule(seed_ocp, &schedule, &guess, &cfg.solver_options()) {
        Ok(o) => o,
        Err(err) => {
            if let (Some(dir), HomotopyError::Aborted { partial, .. }) = (&opts.out_dir, &err) {
                let _ = std::fs::create_dir_all(dir);
                let _ = write_atomic(
                    &dir.join("trace.csv"),
                    &trace_table(&partial.trace, &partial.trace_columns).to_csv(),
                );
                let _ = write_atomic(&dir.join("config.json"), &cfg.to_json());
            }
            return Err(err.into());
        }
    };
    let run = package_run(cfg, outcome, opts.samples)?;
    if let Some(dir) = &opts.out_dir {
        write_artifacts(&run, dir)?;
    }
    Ok(run)
}

fn package_run(
    cfg: &MissionConfig,
    outcome: HomotopyOutcome,
    samples: usize,
) -> Result<MissionRun, MissionError> {
    let HomotopyOutcome { solution, ocp, trace, trace_columns, .. } = outcome;
    let events = extract_events_from_solution(cfg, &ocp, &solution)?;
    let (trajectory, costates) = sample_tables(cfg, &ocp, &solution, samples);
    let cost = solution_cost(&ocp, &solution);
    Ok(MissionRun {
        config: cfg.clone(),
        trajectory,
        costates,
        events,
        trace,
        trace_columns,
        final_time: solution.params[0],
        cost,
        solution,
        ocp,
    })
}

/// Dense physical-unit trajectory and costate tables.
fn sample_tables(
    cfg: &MissionConfig,
    ocp: &EdlOcp,
    sol: &BvpSolution,
    samples: usize,
) -> (Table, Table) {
    let refs = cfg.scale_refs();
    let tf = sol.params[0];
    let nseg = ocp.segments.len();
    let mut columns = vec![
        "t".to_string(),
        "altitude".into(),
        "longitude".into(),
        "latitude".into(),
        "speed".into(),
        "fpa".into(),
        "heading".into(),
        "fuel_burned".into(),
        "bank".into(),
        "thrust".into(),
    ];
    for k in 0..nseg {
        columns.push(format!("weight_{k}"));
    }
    columns.push("hamiltonian".into());
    let mut rows = Vec::with_capacity(samples);
    let mut crows = Vec::with_capacity(samples);
    let mut z = vec![0.0; NZ];
    for i in 0..samples {
        let tau = i as f64 / (samples - 1) as f64;
        sol.eval(tau, &mut z);
        let (bank, thrust) = ocp.optimal_control(&z);
        let weights = ocp.segment_weights(&z[0..NX]);
        let h = ocp.hamiltonian(&z, bank, thrust).unwrap_or(f64::NAN);
        let mut row = vec![
            tau * tf,
            z[ALT] * refs.altitude,
            z[LON],
            z[LAT],
            z[SPD] * refs.speed,
            z[FPA],
            z[HDG],
            z[FUEL] * refs.fuel,
            bank,
            thrust,
        ];
        row.extend(weights);
        row.push(h);
        rows.push(row);
        let mut crow = vec![tau * tf];
        crow.extend_from_slice(&z[NX..NZ]);
        crows.push(crow);
    }
    let costate_columns = vec![
        "t".to_string(),
        "lam_altitude".into(),
        "lam_longitude".into(),
        "lam_latitude".into(),
        "lam_speed".into(),
        "lam_fpa".into(),
        "lam_heading".into(),
        "lam_fuel".into(),
    ];
    (Table { columns, rows }, Table { columns: costate_columns, rows: crows })
}

/// Earliest threshold crossing of a scalar profile given by a closure over
/// normalized time, refined by bisection on the interpolant.
fn earliest_crossing(
    sol: &BvpSolution,
    var: usize,
    threshold: f64,
) -> Option<f64> {
    let mut buf = vec![0.0; NZ];
    let mut phi = |tau: f64| -> f64 {
        sol.eval(tau, &mut buf);
        buf[var] - threshold
    };
    let sub = 8;
    let mut prev_tau = sol.mesh[0];
    let mut prev = phi(prev_tau);
    if prev == 0.0 {
        return Some(prev_tau);
    }
    for w in 0..sol.mesh.len() - 1 {
        let (a, b) = (sol.mesh[w], sol.mesh[w + 1]);
        for k in 1..=sub {
            let tau = a + (b - a) * k as f64 / sub as f64;
            let val = phi(tau);
            if val == 0.0 {
                return Some(tau);
            }
            if prev.signum() != val.signum() {
                // bisect
                let (mut lo, mut hi) = (prev_tau, tau);
                let mut flo = prev;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let fm = phi(mid);
                    if fm == 0.0 {
                        return Some(mid);
                    }
                    if flo.signum() != fm.signum() {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            prev = val;
            prev_tau = tau;
        }
    }
    None
}

/// Locate the mission events on the solved trajectory.
pub fn extract_events_from_solution(
    cfg: &MissionConfig,
    ocp: &EdlOcp,
    sol: &BvpSolution,
) -> Result<EventsRecord, MissionError> {
    let tf = sol.params[0];
    let index = cfg.predicate_index();
    let crossing_of = |id: &str| -> Option<f64> {
        let p = &ocp.predicates[index[id]];
        earliest_crossing(sol, p.var, p.threshold)
    };
    // deployment: earliest crossing among its trigger predicates
    let mut candidates: Vec<(String, f64)> = Vec::new();
    for id in &cfg.events.deployment {
        if let Some(tau) = crossing_of(id) {
            candidates.push((id.clone(), tau * tf));
        }
    }
    let deploy_t = candidates
        .iter()
        .map(|(_, t)| *t)
        .fold(f64::INFINITY, f64::min);
    if !deploy_t.is_finite() {
        return Err(MissionError::EventNotFound("deployment".into()));
    }
    let deployment_triggers: Vec<String> = candidates
        .iter()
        .filter(|(_, t)| (*t - deploy_t).abs() <= 1e-6)
        .map(|(id, _)| id.clone())
        .collect();
    let pdi_tau = cfg
        .events
        .powered_descent
        .iter()
        .filter_map(|id| crossing_of(id))
        .fold(f64::INFINITY, f64::min);
    if !pdi_tau.is_finite() {
        return Err(MissionError::EventNotFound("powered_descent".into()));
    }
    let refs = cfg.scale_refs();
    let mut z = vec![0.0; NZ];
    sol.eval(deploy_t / tf, &mut z);
    let (deployment_speed, deployment_altitude) = (z[SPD] * refs.speed, z[ALT] * refs.altitude);
    sol.eval(pdi_tau, &mut z);
    Ok(EventsRecord {
        deployment_time: deploy_t,
        deployment_triggers,
        deployment_speed,
        deployment_altitude,
        pdi_time: pdi_tau * tf,
        pdi_speed: z[SPD] * refs.speed,
        pdi_altitude: z[ALT] * refs.altitude,
        touchdown_time: tf,
    })
}

/// Locate the mission events on a sampled trajectory table by linear
/// bracketing between rows.
pub fn extract_events_from_table(
    cfg: &MissionConfig,
    table: &Table,
) -> Result<EventsRecord, MissionError> {
    let t_col = table
        .column("t")
        .ok_or_else(|| MissionError::Incompatible("table lacks column 't'".into()))?;
    let col_of = |var: usize| -> Result<usize, MissionError> {
        let name = match var {
            ALT => "altitude",
            SPD => "speed",
            LON => "longitude",
            LAT => "latitude",
            FPA => "fpa",
            HDG => "heading",
            _ => "fuel_burned",
        };
        table
            .column(name)
            .ok_or_else(|| MissionError::Incompatible(format!("table lacks column '{name}'")))
    };
    let crossing_of = |id: &str| -> Result<Option<f64>, MissionError> {
        let pc = cfg.predicates.iter().find(|p| p.id == id).expect("validated id");
        let var = var_index(&pc.var).expect("validated var");
        let col = col_of(var)?;
        let thr = pc.threshold;
        for w in 0..table.rows.len() - 1 {
            let (t0, v0) = (table.rows[w][t_col], table.rows[w][col] - thr);
            let (t1, v1) = (table.rows[w + 1][t_col], table.rows[w + 1][col] - thr);
            if v0 == 0.0 {
                return Ok(Some(t0));
            }
            if v0.signum() != v1.signum() {
                return Ok(Some(t0 + (t1 - t0) * v0 / (v0 - v1)));
            }
        }
        let last = table.rows.last().expect("non-empty table");
        if last[col] - thr == 0.0 {
            return Ok(Some(last[t_col]));
        }
        Ok(None)
    };
    let mut candidates = Vec::new();
    for id in &cfg.events.deployment {
        if let Some(t) = crossing_of(id)? {
            candidates.push((id.clone(), t));
        }
    }
    let deploy_t = candidates.iter().map(|(_, t)| *t).fold(f64::INFINITY, f64::min);
    if !deploy_t.is_finite() {
        return Err(MissionError::EventNotFound("deployment".into()));
    }
    let deployment_triggers: Vec<String> = candidates
        .iter()
        .filter(|(_, t)| (*t - deploy_t).abs() <= 1e-6)
        .map(|(id, _)| id.clone())
        .collect();
    let mut pdi_t = f64::INFINITY;
    for id in &cfg.events.powered_descent {
        if let Some(t) = crossing_of(id)? {
            pdi_t = pdi_t.min(t);
        }
    }
    if !pdi_t.is_finite() {
        return Err(MissionError::EventNotFound("powered_descent".into()));
    }
    let sample_at = |t: f64, col: usize| -> f64 {
        // linear interpolation over rows
        let rows = &table.rows;
        if t <= rows[0][t_col] {
            return rows[0][col];
        }
        for w in 0..rows.len() - 1 {
            if rows[w + 1][t_col] >= t {
                let (t0, t1) = (rows[w][t_col], rows[w + 1][t_col]);
                let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                return rows[w][col] + s * (rows[w + 1][col] - rows[w][col]);
            }
        }
        rows.last().expect("non-empty")[col]
    };
    let alt_col = col_of(ALT)?;
    let spd_col = col_of(SPD)?;
    Ok(EventsRecord {
        deployment_time: deploy_t,
        deployment_triggers,
        deployment_speed: sample_at(deploy_t, spd_col),
        deployment_altitude: sample_at(deploy_t, alt_col),
        pdi_time: pdi_t,
        pdi_speed: sample_at(pdi_t, spd_col),
        pdi_altitude: sample_at(pdi_t, alt_col),
        touchdown_time: table.rows.last().expect("non-empty")[t_col],
    })
}

fn trace_table(trace: &[TraceRecord], value_columns: &[String]) -> Table {
    let mut columns = vec!["step".to_string(), "iteration".into(), "bisections".into()];
    columns.extend(value_columns.iter().cloned());
    columns.extend(
        ["tf", "cost", "newton_iterations", "max_residual", "mesh_points"]
            .map(String::from),
    );
    let rows = trace
        .iter()
        .map(|r| {
            let mut row = vec![r.step as f64, r.iteration as f64, r.bisections as f64];
            row.extend_from_slice(&r.values);
            row.extend_from_slice(&[
                r.tf,
                r.cost,
                r.newton_iterations as f64,
                r.max_residual,
                r.mesh_points as f64,
            ]);
            row
        })
        .collect();
    Table { columns, rows }
}

/// Write-then-rename so readers never observe a partial file.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Write the full artifact set into a directory.
pub fn write_artifacts(run: &MissionRun, dir: &Path) -> Result<(), MissionError> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("config.json"), &run.config.to_json())?;
    write_atomic(&dir.join("trajectory.csv"), &run.trajectory.to_csv())?;
    write_atomic(&dir.join("costates.csv"), &run.costates.to_csv())?;
    write_atomic(&dir.join("trace.csv"), &trace_table(&run.trace, &run.trace_columns).to_csv())?;
    let ev = &run.events;
    let events_csv = format!(
        "deployment_time,pdi_time,touchdown_time,deployment_triggers,deployment_speed,\
         deployment_altitude,pdi_speed,pdi_altitude\n{:.9},{:.9},{:.9},{},{:.9},{:.9},{:.9},{:.9}\n",
        ev.deployment_time,
        ev.pdi_time,
        ev.touchdown_time,
        ev.deployment_triggers.join("+"),
        ev.deployment_speed,
        ev.deployment_altitude,
        ev.pdi_speed,
        ev.pdi_altitude,
    );
    write_atomic(&dir.join("events.csv"), &events_csv)?;
    let summary = format!(
        "tf,cost,max_residual,mesh_points\n{:.17e},{:.17e},{:.17e},{}\n",
        run.final_time,
        run.cost,
        run.solution.max_residual,
        run.solution.mesh.len()
    );
    write_atomic(&dir.join("summary.csv"), &summary)?;
    Ok(())
}

/// Artifacts read back from a run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub trajectory: Table,
    pub events: EventsRecord,
    pub cost: f64,
    pub final_time: f64,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, MissionError> {
    let trajectory = Table::from_csv(&std::fs::read_to_string(dir.join("trajectory.csv"))?)?;
    if trajectory.rows.len() < 2 {
        return Err(MissionError::Incompatible("trajectory has fewer than 2 rows".into()));
    }
    let events_text = std::fs::read_to_string(dir.join("events.csv"))?;
    let events = parse_events_csv(&events_text)?;
    let summary_text = std::fs::read_to_string(dir.join("summary.csv"))?;
    let summary = Table::from_csv(&summary_text)
        .map_err(|_| MissionError::Incompatible("summary.csv malformed".into()))?;
    let cost_col = summary
        .column("cost")
        .ok_or_else(|| MissionError::Incompatible("summary lacks cost".into()))?;
    let tf_col = summary
        .column("tf")
        .ok_or_else(|| MissionError::Incompatible("summary lacks tf".into()))?;
    let row = summary
        .rows
        .first()
        .ok_or_else(|| MissionError::Incompatible("summary has no data row".into()))?;
    Ok(LoadedRun { trajectory, events, cost: row[cost_col], final_time: row[tf_col] })
}

fn parse_events_csv(text: &str) -> Result<EventsRecord, MissionError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| MissionError::Incompatible("events.csv empty".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let data: Vec<&str> = lines
        .next()
        .ok_or_else(|| MissionError::Incompatible("events.csv has no data row".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if data.len() != header.len() {
        return Err(MissionError::Incompatible("events.csv row width mismatch".into()));
    }
    let get = |name: &str| -> Result<&str, MissionError> {
        header
            .iter()
            .position(|h| *h == name)
            .map(|i| data[i])
            .ok_or_else(|| MissionError::Incompatible(format!("events.csv lacks '{name}'")))
    };
    let num = |name: &str| -> Result<f64, MissionError> {
        get(name)?
            .parse()
            .map_err(|_| MissionError::Incompatible(format!("events.csv '{name}' not numeric")))
    };
    Ok(EventsRecord {
        deployment_time: num("deployment_time")?,
        deployment_triggers: get("deployment_triggers")?
            .split('+')
            .map(str::to_string)
            .collect(),
        deployment_speed: num("deployment_speed")?,
        deployment_altitude: num("deployment_altitude")?,
        pdi_time: num("pdi_time")?,
        pdi_speed: num("pdi_speed")?,
        pdi_altitude: num("pdi_altitude")?,
        touchdown_time: num("touchdown_time")?,
    })
}

/// Time-aligned comparison of two runs.
#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Per-state (column name, max abs difference, rms difference).
    pub state_diffs: Vec<(String, f64, f64)>,
    pub deployment_delta: f64,
    pub pdi_delta: f64,
    pub touchdown_delta: f64,
    pub cost_delta: f64,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,max_abs,rms\n");
        for (name, mx, rms) in &self.state_diffs {
            let _ = writeln!(out, "{name},{mx:.9e},{rms:.9e}");
        }
        let _ = writeln!(out, "deployment_delta,{0:.9e},{0:.9e}", self.deployment_delta);
        let _ = writeln!(out, "pdi_delta,{0:.9e},{0:.9e}", self.pdi_delta);
        let _ = writeln!(out, "touchdown_delta,{0:.9e},{0:.9e}", self.touchdown_delta);
        let _ = writeln!(out, "cost_delta,{0:.9e},{0:.9e}", self.cost_delta);
        out
    }
}

const STATE_COLUMNS: [&str; 7] =
    ["altitude", "longitude", "latitude", "speed", "fpa", "heading", "fuel_burned"];

/// Compare two runs: resample the second trajectory onto the first one's
/// time grid over the common span and difference the state columns.
pub fn compare_runs(a: &LoadedRun, b: &LoadedRun) -> Result<CompareReport, MissionError> {
    let t_a = a
        .trajectory
        .column("t")
        .ok_or_else(|| MissionError::Incompatible("first trajectory lacks 't'".into()))?;
    let t_b = b
        .trajectory
        .column("t")
        .ok_or_else(|| MissionError::Incompatible("second trajectory lacks 't'".into()))?;
    let t_end = a
        .trajectory
        .rows
        .last()
        .expect("non-empty")[t_a]
        .min(b.trajectory.rows.last().expect("non-empty")[t_b]);
    let mut state_diffs = Vec::new();
    for name in STATE_COLUMNS {
        let ca = a
            .trajectory
            .column(name)
            .ok_or_else(|| MissionError::Incompatible(format!("first run lacks '{name}'")))?;
        let cb = b
            .trajectory
            .column(name)
            .ok_or_else(|| MissionError::Incompatible(format!("second run lacks '{name}'")))?;
        let mut mx = 0.0f64;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        let mut k = 0usize;
        for row in &a.trajectory.rows {
            let t = row[t_a];
            if t > t_end {
                break;
            }
            while k + 2 < b.trajectory.rows.len() && b.trajectory.rows[k + 1][t_b] < t {
                k += 1;
            }
            let r0 = &b.trajectory.rows[k];
            let r1 = &b.trajectory.rows[(k + 1).min(b.trajectory.rows.len() - 1)];
            let (t0, t1) = (r0[t_b], r1[t_b]);
            let s = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
            let vb = r0[cb] + s * (r1[cb] - r0[cb]);
            let d = row[ca] - vb;
            mx = mx.max(d.abs());
            sum_sq += d * d;
            count += 1;
        }
        let rms = (sum_sq / count.max(1) as f64).sqrt();
        state_diffs.push((name.to_string(), mx, rms));
    }
    Ok(CompareReport {
        state_diffs,
        deployment_delta: a.events.deployment_time - b.events.deployment_time,
        pdi_delta: a.events.pdi_time - b.events.pdi_time,
        touchdown_delta: a.events.touchdown_time - b.events.touchdown_time,
        cost_delta: a.cost - b.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_is_byte_identical() {
        for cfg in [
            MissionConfig::profile1(),
            MissionConfig::profile2(),
            MissionConfig::profile1_single_minterm(),
            MissionConfig::profile2_single_minterm(),
        ] {
            let json = cfg.to_json();
            let parsed = MissionConfig::from_json(&json).unwrap();
            assert_eq!(parsed, cfg);
            assert_eq!(parsed.to_json(), json);
        }
    }

    #[test]
    fn profiles_differ_only_in_deployment_altitude() {
        let mut p1 = MissionConfig::profile1();
        let p2 = MissionConfig::profile2();
        p1.name = p2.name.clone();
        for p in p1.predicates.iter_mut() {
            if p.id == "h_lt_hP" {
                p.threshold = 6500.0;
            }
        }
        assert_eq!(p1, p2);
    }

    #[test]
    fn validation_names_offending_fields() {
        let mut cfg = MissionConfig::profile1();
        cfg.planet.mu = -1.0;
        cfg.segments[1].condition[0][0].0 = "nope".into();
        let err = cfg.validate().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("planet.mu"), "{text}");
        assert!(text.contains("nope"), "{text}");
    }

    #[test]
    fn missing_mu_is_named_by_the_parser() {
        let mut v: serde_json::Value =
            serde_json::from_str(&MissionConfig::profile1().to_json()).unwrap();
        v["planet"].as_object_mut().unwrap().remove("mu");
        let err = MissionConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
    }

    #[test]
    fn ocp_respects_seed_flag() {
        let cfg = MissionConfig::profile1();
        let seeded = cfg.build_ocp(true);
        assert_eq!(seeded.segments[0].lift_coeff, 0.0);
        assert_eq!(seeded.smoothing.s, 100.0);
        assert_eq!(seeded.smoothing.zeta, 1.0);
        let full = cfg.build_ocp(false);
        assert_eq!(full.segments[0].lift_coeff, 0.25);
        assert_eq!(full.smoothing.s, 40_000.0);
        assert_eq!(full.thrust_segment, 2);
        // scaled predicate thresholds
        assert!((full.predicates[0].threshold - 408.0 / 5900.0).abs() < 1e-15);
        assert!((full.predicates[1].threshold - 3500.0 / 120_000.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_matches_iteration_counts() {
        let cfg = MissionConfig::profile1();
        let s = cfg.build_schedule(1);
        assert_eq!(s.steps.len(), 5);
        assert_eq!(
            s.steps.iter().map(|st| st.iterations).collect::<Vec<_>>(),
            vec![1000, 500, 500, 500, 1000]
        );
        let scaled = cfg.build_schedule(10);
        assert_eq!(
            scaled.steps.iter().map(|st| st.iterations).collect::<Vec<_>>(),
            vec![100, 50, 50, 50, 100]
        );
        // step 1 frees speed and heading, later steps pin them
        assert!(!s.steps[0].mode.final_speed_fixed);
        assert!(!s.steps[0].mode.initial_heading_fixed);
        assert!(s.steps[1].mode.final_speed_fixed);
        assert!(s.steps[4].mode.initial_heading_fixed);
        // slope step ends at the configured final slopes
        assert_eq!(s.steps[4].targets[0].end, 40_000.0);
        assert_eq!(s.steps[4].targets[1].end, 40_000.0);
    }

    #[test]
    fn table_round_trip() {
        let t = Table {
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![1.5, -2.25], vec![1.0 / 3.0, 1e-18]],
        };
        let parsed = Table::from_csv(&t.to_csv()).unwrap();
        assert_eq!(parsed, t);
        assert!(Table::from_csv("a,b\n1.0\n").is_err());
    }

    fn synthetic_descent_table() -> Table {
        // strictly descending altitude, decelerating speed
        let mut rows = Vec::new();
        for i in 0..=100 {
            let t = i as f64;
            rows.push(vec![t, 10_000.0 - 100.0 * t, 800.0 - 7.0 * t]);
        }
        Table { columns: vec!["t".into(), "altitude".into(), "speed".into()], rows }
    }

    #[test]
    fn table_events_hit_exact_node() {
        let mut cfg = MissionConfig::profile1();
        // thresholds that fall exactly on a sample row: altitude 2000 at t=80
        for p in cfg.predicates.iter_mut() {
            match p.id.as_str() {
                "v_lt_vP" => p.threshold = 408.0,
                "h_lt_hP" => p.threshold = 3500.0,
                _ => p.threshold = 2000.0,
            }
        }
        let table = synthetic_descent_table();
        let ev = extract_events_from_table(&cfg, &table).unwrap();
        assert_eq!(ev.pdi_time, 80.0);
        // speed crosses 408 at t = 56, altitude crosses 3500 at t = 65:
        // velocity trigger fires first
        assert!((ev.deployment_time - 56.0).abs() < 1e-9);
        assert_eq!(ev.deployment_triggers, vec!["v_lt_vP".to_string()]);
        assert_eq!(ev.touchdown_time, 100.0);
    }

    #[test]
    fn compare_run_with_itself_is_zero() {
        let table = synthetic_descent_table();
        // extend to the full state-column set
        let mut t = table.clone();
        for name in ["longitude", "latitude", "fpa", "heading", "fuel_burned"] {
            t.columns.push(name.into());
            for row in t.rows.iter_mut() {
                let v = row[0] * 0.001;
                row.push(v);
            }
        }
        let run = LoadedRun {
            trajectory: t,
            events: EventsRecord {
                deployment_time: 56.0,
                deployment_triggers: vec!["v_lt_vP".into()],
                deployment_speed: 408.0,
                deployment_altitude: 4400.0,
                pdi_time: 80.0,
                pdi_speed: 240.0,
                pdi_altitude: 2000.0,
                touchdown_time: 100.0,
            },
            cost: 1.5,
            final_time: 100.0,
        };
        let report = compare_runs(&run, &run).unwrap();
        for (name, mx, rms) in &report.state_diffs {
            assert_eq!((*mx, *rms), (0.0, 0.0), "{name}");
        }
        assert_eq!(report.deployment_delta, 0.0);
        assert_eq!(report.cost_delta, 0.0);
    }

    #[test]
    fn truncated_artifacts_error() {
        let dir = std::env::temp_dir().join(format!("softswitch_trunc_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("trajectory.csv"), "t,altitude\n").unwrap();
        std::fs::write(dir.join("events.csv"), "deployment_time\n1.0\n").unwrap();
        std::fs::write(dir.join("summary.csv"), "tf,cost\n1.0,2.0\n").unwrap();
        assert!(load_run(&dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
