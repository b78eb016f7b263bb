//! Desk-scale validation problem: a one-dimensional double integrator whose
//! damping switches at a position threshold, minimum control effort, fixed
//! endpoints and horizon.
//!
//! Two independent solution routes are kept side by side: the smoothed
//! indirect route (the same collocation/continuation machinery as the
//! mission pipeline) and a brute-force direct transcription with exact
//! discrete switching, which serves as the reference.

use crate::bvp::{solve_bvp, BvpError, BvpGuess, BvpOptions, BvpSolution, SmoothBvp};
use crate::logic::sigmoid;
use crate::scalar::{Dual, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("direct transcription did not settle within the refinement budget")]
    OracleNoConvergence,
    #[error("smoothed solve failed: {0}")]
    Smoothed(#[from] BvpError),
}

/// Switched double integrator: `x' = v`, `v' = u - c(x) v` with damping
/// `c1` where `x < x_switch` and `c2` beyond; cost is the control effort
/// integral; both endpoints and the horizon are fixed.
#[derive(Debug, Clone, Copy)]
pub struct ToyHybridProblem {
    pub damping1: f64,
    pub damping2: f64,
    pub x_switch: f64,
    pub x0: f64,
    pub v0: f64,
    pub x1: f64,
    pub v1: f64,
    pub horizon: f64,
}

impl ToyHybridProblem {
    /// Exact discrete damping at a position.
    pub fn damping(&self, x: f64) -> f64 {
        if x < self.x_switch {
            self.damping1
        } else {
            self.damping2
        }
    }

    /// Smoothed damping: the two single-minterm segment weights blend the
    /// coefficients.
    pub fn damping_smooth<T: Scalar>(&self, x: T, slope: f64) -> T {
        let g = x - T::c(self.x_switch);
        sigmoid(g, slope) * T::c(self.damping1) + sigmoid(-g, slope) * T::c(self.damping2)
    }
}

/// The smoothed indirect problem over normalized time: states
/// `(x, v, lam_x, lam_v)`, control `u* = -lam_v / 2`, fixed horizon.
struct ToyTpbvp {
    problem: ToyHybridProblem,
    slope: f64,
}

impl ToyTpbvp {
    fn hamiltonian<T: Scalar>(&self, z: &[T]) -> T {
        let (x, v, lam_x, lam_v) = (z[0], z[1], z[2], z[3]);
        let u = -lam_v / T::c(2.0);
        let c = self.problem.damping_smooth(x, self.slope);
        u * u + lam_x * v + lam_v * (u - c * v)
    }
}

impl SmoothBvp for ToyTpbvp {
    fn dim(&self) -> usize {
        4
    }
    fn n_params(&self) -> usize {
        0
    }
    fn n_left_bc(&self) -> usize {
        2
    }

    fn rhs<T: Scalar>(&self, _tau: f64, y: &[T], _p: &[T], dy: &mut [T]) {
        // costate rates from a dual pass over (x, v)
        let zz: [Dual<2, T>; 4] = [
            Dual::var(y[0], 0),
            Dual::var(y[1], 1),
            Dual::new(y[2]),
            Dual::new(y[3]),
        ];
        let h = self.hamiltonian(&zz);
        let u = -y[3] / T::c(2.0);
        let c = self.problem.damping_smooth(y[0], self.slope);
        let tf = T::c(self.problem.horizon);
        dy[0] = tf * y[1];
        dy[1] = tf * (u - c * y[1]);
        dy[2] = tf * -h.eps[0];
        dy[3] = tf * -h.eps[1];
    }

    fn bc_left<T: Scalar>(&self, ya: &[T], _p: &[T], out: &mut [T]) {
        out[0] = ya[0] - T::c(self.problem.x0);
        out[1] = ya[1] - T::c(self.problem.v0);
    }

    fn bc_right<T: Scalar>(&self, yb: &[T], _p: &[T], out: &mut [T]) {
        out[0] = yb[0] - T::c(self.problem.x1);
        out[1] = yb[1] - T::c(self.problem.v1);
    }
}

/// Result of either solution route.
#[derive(Debug, Clone)]
pub struct ToySolution {
    pub cost: f64,
    /// `(t, x, v, u)` samples.
    pub trajectory: Vec<[f64; 4]>,
}

/// Solve the smoothed problem, ramping the sigmoid slope from a benign
/// value up to `final_slope` and warm-starting each solve.
pub fn solve_toy_smoothed(
    p: &ToyHybridProblem,
    final_slope: f64,
) -> Result<ToySolution, ToyError> {
    let n = 161;
    let mesh: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let y: Vec<Vec<f64>> = mesh
        .iter()
        .map(|&t| {
            vec![
                p.x0 + (p.x1 - p.x0) * t,
                p.v0 + (p.v1 - p.v0) * t,
                0.0,
                0.0,
            ]
        })
        .collect();
    let mut guess = BvpGuess { mesh, y, params: vec![] };
    let opts = BvpOptions { max_nodes: 20_000, ..BvpOptions::default() };

    let mut slope = 25.0_f64.min(final_slope);
    let mut sol: BvpSolution;
    loop {
        let tp = ToyTpbvp { problem: *p, slope };
        sol = solve_bvp(&tp, &guess, &opts)?;
        guess = sol.as_guess();
        if slope >= final_slope {
            break;
        }
        slope = (slope * 2.0).min(final_slope);
    }
    Ok(package_toy(p, &sol))
}

fn package_toy(p: &ToyHybridProblem, sol: &BvpSolution) -> ToySolution {
    let samples = 2001;
    let mut trajectory = Vec::with_capacity(samples);
    let mut z = [0.0; 4];
    let mut us = Vec::with_capacity(samples);
    for i in 0..samples {
        let tau = i as f64 / (samples - 1) as f64;
        sol.eval(tau, &mut z);
        let u = -z[3] / 2.0;
        us.push(u);
        trajectory.push([tau * p.horizon, z[0], z[1], u]);
    }
    // control-effort integral via the composite Simpson rule
    let h = p.horizon / (samples - 1) as f64;
    let mut cost = 0.0;
    for i in (0..samples - 2).step_by(2) {
        cost += h / 3.0 * (us[i] * us[i] + 4.0 * us[i + 1] * us[i + 1] + us[i + 2] * us[i + 2]);
    }
    ToySolution { cost, trajectory }
}

/// Simulate the exact switched system under piecewise-constant control,
/// one interval of length `dt` per entry of `u`. Classic fourth-order
/// Runge-Kutta with the discrete damping evaluated at every stage.
fn simulate(p: &ToyHybridProblem, u: &[f64], from: (f64, f64), dt: f64) -> (f64, f64) {
    let sub = 4;
    let h = dt / sub as f64;
    let (mut x, mut v) = from;
    for &ui in u {
        for _ in 0..sub {
            let f = |x: f64, v: f64| (v, ui - p.damping(x) * v);
            let (k1x, k1v) = f(x, v);
            let (k2x, k2v) = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
            let (k3x, k3v) = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
            let (k4x, k4v) = f(x + h * k3x, v + h * k3v);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
    }
    (x, v)
}

/// Endpoint-constrained cost of a control grid under an augmented-Lagrangian
/// penalty.
fn penalized_cost(
    p: &ToyHybridProblem,
    u: &[f64],
    mul: (f64, f64),
    weight: f64,
    prefix: &[(f64, f64)],
    start_index: usize,
) -> f64 {
    let dt = p.horizon / u.len() as f64;
    let effort: f64 = u.iter().map(|ui| ui * ui * dt).sum();
    let (xf, vf) = simulate(p, &u[start_index..], prefix[start_index], dt);
    let (cx, cv) = (xf - p.x1, vf - p.v1);
    effort + mul.0 * cx + mul.1 * cv + weight * (cx * cx + cv * cv)
}

/// Brute-force reference: direct transcription with piecewise-constant
/// control and exact switching, minimized by gradient descent with
/// Barzilai-Borwein steps inside an augmented-Lagrangian loop, refined by
/// grid doubling until the cost settles.
pub fn brute_force_cost(
    p: &ToyHybridProblem,
    grid: usize,
) -> Result<ToySolution, ToyError> {
    assert!(grid >= 50, "transcription grid must have at least 50 nodes");
    let mut n = grid;
    let mut u = vec![0.0; n];
    let mut prev_cost = f64::INFINITY;
    for _level in 0..4 {
        u = minimize_on_grid(p, u);
        let dt = p.horizon / n as f64;
        let cost: f64 = u.iter().map(|ui| ui * ui * dt).sum();
        if (prev_cost - cost).abs() <= 1e-3 * cost.abs().max(1e-12) {
            prev_cost = cost;
            break;
        }
        prev_cost = cost;
        // double the grid, repeating each control value
        n *= 2;
        u = u.iter().flat_map(|&v| [v, v]).collect();
    }
    if !prev_cost.is_finite() {
        return Err(ToyError::OracleNoConvergence);
    }
    // sampled trajectory for reporting
    let mut trajectory = Vec::with_capacity(u.len() + 1);
    let dt = p.horizon / u.len() as f64;
    let mut state = (p.x0, p.v0);
    trajectory.push([0.0, state.0, state.1, u[0]]);
    for (i, &ui) in u.iter().enumerate() {
        state = simulate(p, &u[i..i + 1], state, dt);
        trajectory.push([dt * (i + 1) as f64, state.0, state.1, ui]);
    }
    Ok(ToySolution { cost: prev_cost, trajectory })
}

fn minimize_on_grid(p: &ToyHybridProblem, mut u: Vec<f64>) -> Vec<f64> {
    let n = u.len();
    let mut mul = (0.0, 0.0);
    let mut weight = 100.0;
    let mut grad = vec![0.0; n];
    let mut grad_prev = vec![0.0; n];
    let mut u_prev = vec![0.0; n];
    for _outer in 0..10 {
        let mut bb_step = 1e-2;
        let mut have_prev = false;
        for _inner in 0..200 {
            // state prefix at every control-interval boundary, so each
            // forward-difference column only re-simulates its suffix
            let dt = p.horizon / n as f64;
            let mut prefix = vec![(p.x0, p.v0); n + 1];
            for i in 0..n {
                prefix[i + 1] = simulate(p, &u[i..i + 1], prefix[i], dt);
            }
            let base = penalized_cost(p, &u, mul, weight, &prefix, 0);
            let eps = 1e-6;
            for i in 0..n {
                let mut up = u.clone();
                up[i] += eps;
                let c = penalized_cost(p, &up, mul, weight, &prefix, i);
                grad[i] = (c - base) / eps;
            }
            let gnorm_sq: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm_sq.sqrt() < 1e-8 * (1.0 + base.abs()) {
                break;
            }
            if have_prev {
                let mut sy = 0.0;
                let mut yy = 0.0;
                for i in 0..n {
                    let s = u[i] - u_prev[i];
                    let y = grad[i] - grad_prev[i];
                    sy += s * y;
                    yy += y * y;
                }
                if yy > 1e-30 && sy > 1e-30 {
                    bb_step = (sy / yy).clamp(1e-8, 1e2);
                }
            }
            u_prev.copy_from_slice(&u);
            grad_prev.copy_from_slice(&grad);
            // Armijo backtracking keeps the iteration monotone
            let mut t = bb_step;
            let mut accepted = false;
            while t > 1e-14 {
                let trial: Vec<f64> =
                    u.iter().zip(&grad).map(|(ui, gi)| ui - t * gi).collect();
                let mut pref_t = vec![(p.x0, p.v0); 1];
                pref_t.resize(n + 1, (p.x0, p.v0));
                let cost_t = penalized_cost(p, &trial, mul, weight, &pref_t, 0);
                if cost_t.is_finite() && cost_t <= base - 1e-4 * t * gnorm_sq {
                    u = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            have_prev = true;
        }
        let dt = p.horizon / n as f64;
        let (xf, vf) = simulate(p, &u, (p.x0, p.v0), dt);
        let (cx, cv) = (xf - p.x1, vf - p.v1);
        if cx.abs().max(cv.abs()) < 1e-8 {
            break;
        }
        mul.0 += 2.0 * weight * cx;
        mul.1 += 2.0 * weight * cv;
        if weight < 1e7 {
            weight *= 10.0;
        }
    }
    u
}

/// Analytic minimum-effort cost for the undamped double integrator; the
/// optimal control is affine in time.
pub fn analytic_double_integrator_cost(p: &ToyHybridProblem) -> f64 {
    let t = p.horizon;
    let dx = p.x1 - p.x0 - p.v0 * t;
    let dv = p.v1 - p.v0;
    // u = a + b s minimizing the effort integral subject to the endpoint
    let b = (6.0 * dv * t - 12.0 * dx) / t.powi(3);
    let a = (dv - 0.5 * b * t * t) / t;
    a * a * t + a * b * t * t + b * b * t.powi(3) / 3.0
}

/// Analytic costate jump across the switching surface for the exact
/// (non-smoothed) problem: continuity of the Hamiltonian forces
/// `lam_x(+) - lam_x(-) = (c2 - c1) lam_v` at the crossing.
pub fn analytic_position_costate_jump(p: &ToyHybridProblem, lam_v_at_switch: f64) -> f64 {
    (p.damping2 - p.damping1) * lam_v_at_switch
}

/// The smoothed solution's costate step across the switching layer,
/// estimated by extrapolating one-sided linear fits of `lam_x` to the
/// crossing time, plus the value of `lam_v` there.
pub fn measure_costate_jump(
    p: &ToyHybridProblem,
    final_slope: f64,
) -> Result<(f64, f64), ToyError> {
    let n = 161;
    let mesh: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let y: Vec<Vec<f64>> = mesh
        .iter()
        .map(|&t| vec![p.x0 + (p.x1 - p.x0) * t, p.v0 + (p.v1 - p.v0) * t, 0.0, 0.0])
        .collect();
    let mut guess = BvpGuess { mesh, y, params: vec![] };
    let opts = BvpOptions { max_nodes: 20_000, ..BvpOptions::default() };
    let mut slope = 25.0_f64.min(final_slope);
    let mut sol: BvpSolution;
    loop {
        let tp = ToyTpbvp { problem: *p, slope };
        sol = solve_bvp(&tp, &guess, &opts)?;
        guess = sol.as_guess();
        if slope >= final_slope {
            break;
        }
        slope = (slope * 2.0).min(final_slope);
    }
    // crossing time of x = x_switch
    let mut z = [0.0; 4];
    let mut cross = None;
    let mut prev = {
        sol.eval(0.0, &mut z);
        z[0] - p.x_switch
    };
    let scan = 4000;
    for i in 1..=scan {
        let tau = i as f64 / scan as f64;
        sol.eval(tau, &mut z);
        let val = z[0] - p.x_switch;
        if prev.signum() != val.signum() {
            cross = Some(tau);
            break;
        }
        prev = val;
    }
    let tau_s = cross.ok_or(ToyError::OracleNoConvergence)?;
    sol.eval(tau_s, &mut z);
    let lam_v_s = z[3];
    // one-sided linear fits of lam_x away from the smoothing layer
    let layer = (12.0 / final_slope).clamp(1e-4, 0.1);
    let mut fit = |lo: f64, hi: f64| -> (f64, f64) {
        let m = 40;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..m {
            let tau = lo + (hi - lo) * k as f64 / (m - 1) as f64;
            sol.eval(tau, &mut z);
            sx += tau;
            sy += z[2];
            sxx += tau * tau;
            sxy += tau * z[2];
        }
        let mf = m as f64;
        let slope = (mf * sxy - sx * sy) / (mf * sxx - sx * sx);
        let intercept = (sy - slope * sx) / mf;
        (intercept, slope)
    };
    let span = 0.15;
    let (bl, ml) = fit((tau_s - span).max(0.0), tau_s - layer);
    let (br, mr) = fit(tau_s + layer, (tau_s + span).min(1.0));
    let jump = (br + mr * tau_s) - (bl + ml * tau_s);
    Ok((jump, lam_v_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_problem() -> ToyHybridProblem {
        ToyHybridProblem {
            damping1: 0.4,
            damping2: 1.6,
            x_switch: 0.5,
            x0: 0.0,
            v0: 0.9,
            x1: 1.0,
            v1: 0.7,
            horizon: 1.0,
        }
    }

    #[test]
    fn zero_length_transfer_costs_nothing() {
        let p = ToyHybridProblem {
            damping1: 0.0,
            damping2: 0.0,
            x_switch: 0.5,
            x0: 0.2,
            v0: 0.0,
            x1: 0.2,
            v1: 0.0,
            horizon: 1.0,
        };
        let oracle = brute_force_cost(&p, 64).unwrap();
        assert!(oracle.cost.abs() < 1e-8, "cost = {}", oracle.cost);
    }

    #[test]
    fn identical_segments_match_analytic_cost() {
        // no damping on either side: the switch is irrelevant and the
        // analytic minimum-effort cost applies
        let p = ToyHybridProblem {
            damping1: 0.0,
            damping2: 0.0,
            x_switch: 0.5,
            x0: 0.0,
            v0: 0.0,
            x1: 1.0,
            v1: 0.0,
            horizon: 1.0,
        };
        let exact = analytic_double_integrator_cost(&p);
        let oracle = brute_force_cost(&p, 64).unwrap();
        assert!(
            (oracle.cost - exact).abs() < 5e-3 * exact,
            "oracle {} vs analytic {exact}",
            oracle.cost
        );
        let smooth = solve_toy_smoothed(&p, 1e4).unwrap();
        assert!(
            (smooth.cost - exact).abs() < 5e-3 * exact,
            "smoothed {} vs analytic {exact}",
            smooth.cost
        );
    }

    #[test]
    fn asymmetric_damping_matches_oracle() {
        let p = base_problem();
        let oracle = brute_force_cost(&p, 64).unwrap();
        let smooth = solve_toy_smoothed(&p, 1e4).unwrap();
        let rel = (smooth.cost - oracle.cost).abs() / oracle.cost;
        assert!(rel < 5e-3, "smoothed {} vs oracle {} (rel {rel})", smooth.cost, oracle.cost);
    }

    #[test]
    fn costate_jump_approaches_analytic_value() {
        let p = base_problem();
        let (jump_lo, lamv_lo) = measure_costate_jump(&p, 400.0).unwrap();
        let (jump_hi, lamv_hi) = measure_costate_jump(&p, 6400.0).unwrap();
        let err_lo = (jump_lo - analytic_position_costate_jump(&p, lamv_lo)).abs();
        let err_hi = (jump_hi - analytic_position_costate_jump(&p, lamv_hi)).abs();
        assert!(
            err_hi < err_lo,
            "jump error should shrink as the slope grows: {err_lo} -> {err_hi}"
        );
        let scale = jump_hi.abs().max(1e-6);
        assert!(err_hi < 0.05 * scale, "jump {jump_hi} vs analytic, err {err_hi}");
    }
}
