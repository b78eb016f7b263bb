//! Adaptive explicit initial-value integration: Dormand-Prince 5(4) with
//! proportional-integral step control and a 5th-order dense interpolant.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IvpError {
    #[error("step size underflow at t = {t}; last good state retained")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget exhausted after {0} steps")]
    TooManySteps(usize),
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
}

pub struct IvpProblem<'a> {
    pub rhs: &'a dyn Fn(f64, &[f64], &mut [f64]),
    pub y0: Vec<f64>,
    pub span: [f64; 2],
    pub rtol: f64,
    pub atol: f64,
}

/// One accepted step with the dense-output coefficients for its interval.
#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

/// Dense trajectory from [`integrate_ivp`].
#[derive(Debug, Clone)]
pub struct IvpTrajectory {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
}

impl IvpTrajectory {
    pub fn end_time(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn end_state(&self) -> &[f64] {
        self.ys.last().unwrap()
    }

    /// Evaluate the continuous solution at `t` (clamped to the span).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let k = match self.ts.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.segments.len().saturating_sub(1)),
            Err(i) => i.saturating_sub(1).min(self.segments.len() - 1),
        };
        let seg = &self.segments[k];
        let theta = ((t - seg.t0) / seg.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = seg.r[0][i]
                + theta
                    * (seg.r[1][i]
                        + th1 * (seg.r[2][i] + theta * (seg.r[3][i] + th1 * seg.r[4][i])));
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// difference between the 5th and embedded 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// dense-output weights
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const MAX_STEPS: usize = 500_000;

pub fn integrate_ivp(p: &IvpProblem) -> Result<IvpTrajectory, IvpError> {
    let n = p.y0.len();
    let [t0, t1] = p.span;
    assert!(t1 > t0, "span must be increasing");
    let mut t = t0;
    let mut y = p.y0.clone();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    (p.rhs)(t, &y, &mut k[0]);

    let sc = |yv: &[f64], yn: &[f64], i: usize| p.atol + p.rtol * yv[i].abs().max(yn[i].abs());
    // initial step: balance the scaled state against its first derivative
    let mut h = {
        let d0: f64 = (0..n).map(|i| (y[i] / sc(&y, &y, i)).powi(2)).sum::<f64>().sqrt();
        let d1: f64 = (0..n).map(|i| (k[0][i] / sc(&y, &y, i)).powi(2)).sum::<f64>().sqrt();
        let guess = if d0 > 1e-5 && d1 > 1e-5 { 0.01 * d0 / d1 } else { 1e-6 };
        guess.min((t1 - t0) / 10.0)
    };

    let mut traj = IvpTrajectory { ts: vec![t0], ys: vec![y.clone()], segments: Vec::new() };
    let mut err_old = 1e-4f64;
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    for step in 0..MAX_STEPS {
        if t >= t1 {
            return Ok(traj);
        }
        if step + 1 == MAX_STEPS {
            return Err(IvpError::TooManySteps(MAX_STEPS));
        }
        h = h.min(t1 - t);
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IvpError::StepSizeUnderflow { t });
        }
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate().take(stage + 1) {
                    acc += A[stage][s] * ks[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let ts = t + C[stage] * h;
            let out = &mut k[stage + 1];
            (p.rhs)(ts, &ytmp, out);
        }
        // stage 7 argument is the 5th-order solution (FSAL)
        ynew.copy_from_slice(&ytmp);
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            let r = h * e / sc(&y, &ynew, i);
            err += r * r;
        }
        err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(IvpError::NonFinite { t });
        }

        if err <= 1.0 {
            // accept; build dense coefficients for this interval
            let dy: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
            let r0 = y.clone();
            let r2: Vec<f64> = (0..n).map(|i| h * k[0][i] - dy[i]).collect();
            let r3: Vec<f64> = (0..n).map(|i| dy[i] - h * k[6][i] - r2[i]).collect();
            let r4: Vec<f64> = (0..n)
                .map(|i| h * k.iter().enumerate().map(|(s, ks)| D[s] * ks[i]).sum::<f64>())
                .collect();
            traj.segments.push(DenseSegment { t0: t, h, r: [r0, dy, r2, r3, r4] });
            t += h;
            y.copy_from_slice(&ynew);
            traj.ts.push(t);
            traj.ys.push(y.clone());
            let k6 = std::mem::take(&mut k[6]);
            k[0] = k6;
            k[6] = vec![0.0; n];
            // PI controller (Hairer's dopri5 constants)
            let beta = 0.04;
            let alpha = 0.2 - 0.75 * beta;
            let fac = err.powf(-alpha) * err_old.powf(beta) * 0.9;
            h *= fac.clamp(0.2, 10.0);
            err_old = err.max(1e-4);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Ok(traj)
}
