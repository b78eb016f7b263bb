//! Two-point boundary value solver: 3-stage Lobatto IIIa collocation
//! (4th order, C1 cubic interpolant) with unknown parameters, damped Newton
//! on the assembled nonlinear system, a bordered block-banded linear solve
//! and residual-equidistributing mesh refinement.
//!
//! Problems provide their right-hand side and separated boundary conditions
//! generically over [`Scalar`], so all Jacobians are exact dual-number
//! evaluations rather than finite differences or hand derivations. Boundary
//! residuals at the right end must be ordered so that the last `n_params` of
//! them close the parameter equations (for a free final time, the
//! final-Hamiltonian residual goes last).

use crate::bvp::banded::BandedMatrix;
use crate::scalar::{Dual, Scalar};
use thiserror::Error;

/// Tangent lanes per dual sweep when assembling Jacobians.
const LANES: usize = 8;

#[derive(Debug, Error)]
pub enum BvpError {
    #[error("mesh must be strictly increasing with at least 5 points")]
    InvalidMesh,
    #[error("guess dimensions do not match the problem")]
    DimensionMismatch,
    #[error("left boundary conditions exceed the state dimension")]
    BadBoundarySplit,
    #[error(
        "singular collocation Jacobian at column {column} (largest pivot {max_pivot:.3e})"
    )]
    SingularJacobian { column: usize, max_pivot: f64 },
    #[error("Newton did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize, best: Box<BvpSolution> },
    #[error("mesh refinement needs {needed} points but the cap is {cap}")]
    MeshCapExceeded { needed: usize, cap: usize },
    #[error("residuals became non-finite")]
    NonFinite,
}

/// Problem definition with separated boundary conditions.
pub trait SmoothBvp {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Number of residuals evaluated at the left boundary; the right side
    /// supplies `dim + n_params - n_left_bc`.
    fn n_left_bc(&self) -> usize;
    fn rhs<T: Scalar>(&self, tau: f64, y: &[T], p: &[T], dy: &mut [T]);
    fn bc_left<T: Scalar>(&self, ya: &[T], p: &[T], out: &mut [T]);
    fn bc_right<T: Scalar>(&self, yb: &[T], p: &[T], out: &mut [T]);
}

/// Solver knobs. `tol` bounds the normalized collocation defect of the
/// returned interpolant; Newton iterates until the stacked residuals drop
/// below `newton_tol`.
#[derive(Debug, Clone)]
pub struct BvpOptions {
    pub tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_nodes: usize,
    pub max_remesh: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            tol: 1e-8,
            newton_tol: 1e-10,
            max_newton: 40,
            max_nodes: 5000,
            max_remesh: 10,
        }
    }
}

/// Initial guess: solution values on a mesh plus parameter guesses.
#[derive(Debug, Clone)]
pub struct BvpGuess {
    pub mesh: Vec<f64>,
    /// `y[i]` is the state at `mesh[i]`.
    pub y: Vec<Vec<f64>>,
    pub params: Vec<f64>,
}

/// Converged solution with its C1 interpolant data.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub mesh: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Right-hand side at the mesh nodes (interpolant slopes).
    pub f: Vec<Vec<f64>>,
    pub params: Vec<f64>,
    pub max_residual: f64,
    pub newton_iterations: usize,
}

impl BvpSolution {
    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    fn interval_of(&self, tau: f64) -> usize {
        let n = self.mesh.len();
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.mesh[mid] <= tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Evaluate the interpolant at `tau`.
    pub fn eval(&self, tau: f64, out: &mut [f64]) {
        let k = self.interval_of(tau);
        hermite_eval(
            tau,
            self.mesh[k],
            self.mesh[k + 1],
            &self.y[k],
            &self.y[k + 1],
            &self.f[k],
            &self.f[k + 1],
            out,
        );
    }

    /// Evaluate the interpolant derivative at `tau`.
    pub fn eval_deriv(&self, tau: f64, out: &mut [f64]) {
        let k = self.interval_of(tau);
        hermite_deriv(
            tau,
            self.mesh[k],
            self.mesh[k + 1],
            &self.y[k],
            &self.y[k + 1],
            &self.f[k],
            &self.f[k + 1],
            out,
        );
    }

    /// Resample onto a new mesh, producing a guess for a follow-up solve.
    pub fn resample(&self, mesh: &[f64]) -> BvpGuess {
        let ny = self.dim();
        let mut y = Vec::with_capacity(mesh.len());
        for &tau in mesh {
            let mut row = vec![0.0; ny];
            self.eval(tau, &mut row);
            y.push(row);
        }
        BvpGuess { mesh: mesh.to_vec(), y, params: self.params.clone() }
    }

    pub fn as_guess(&self) -> BvpGuess {
        BvpGuess { mesh: self.mesh.clone(), y: self.y.clone(), params: self.params.clone() }
    }
}

/// Cubic Hermite evaluation on `[t0, t1]`.
#[allow(clippy::too_many_arguments)]
pub fn hermite_eval(
    tau: f64,
    t0: f64,
    t1: f64,
    y0: &[f64],
    y1: &[f64],
    f0: &[f64],
    f1: &[f64],
    out: &mut [f64],
) {
    let h = t1 - t0;
    let th = (tau - t0) / h;
    let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
    let h10 = th * (1.0 - th) * (1.0 - th) * h;
    let h01 = th * th * (3.0 - 2.0 * th);
    let h11 = th * th * (th - 1.0) * h;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * f0[i] + h01 * y1[i] + h11 * f1[i];
    }
}

/// Derivative of the cubic Hermite on `[t0, t1]`.
#[allow(clippy::too_many_arguments)]
pub fn hermite_deriv(
    tau: f64,
    t0: f64,
    t1: f64,
    y0: &[f64],
    y1: &[f64],
    f0: &[f64],
    f1: &[f64],
    out: &mut [f64],
) {
    let h = t1 - t0;
    let th = (tau - t0) / h;
    let d00 = 6.0 * th * (th - 1.0) / h;
    let d10 = (1.0 - th) * (1.0 - 3.0 * th);
    let d01 = 6.0 * th * (1.0 - th) / h;
    let d11 = th * (3.0 * th - 2.0);
    for i in 0..out.len() {
        out[i] = d00 * y0[i] + d10 * f0[i] + d01 * y1[i] + d11 * f1[i];
    }
}

/// Dense Jacobian of `rhs` with respect to `(y, p)` by chunked dual sweeps.
fn rhs_jacobian<P: SmoothBvp>(
    p: &P,
    tau: f64,
    y: &[f64],
    par: &[f64],
    jy: &mut [f64],
    jp: &mut [f64],
) {
    let ny = y.len();
    let np = par.len();
    let nv = ny + np;
    let mut yd: Vec<Dual<LANES, f64>> = y.iter().map(|&v| Dual::new(v)).collect();
    let mut pd: Vec<Dual<LANES, f64>> = par.iter().map(|&v| Dual::new(v)).collect();
    let mut out = vec![Dual::<LANES, f64>::new(0.0); ny];
    let mut base = 0;
    while base < nv {
        let width = LANES.min(nv - base);
        for l in 0..width {
            let g = base + l;
            if g < ny {
                yd[g].eps[l] = 1.0;
            } else {
                pd[g - ny].eps[l] = 1.0;
            }
        }
        p.rhs(tau, &yd, &pd, &mut out);
        for r in 0..ny {
            for l in 0..width {
                let g = base + l;
                if g < ny {
                    jy[r * ny + g] = out[r].eps[l];
                } else {
                    jp[r * np + (g - ny)] = out[r].eps[l];
                }
            }
        }
        for l in 0..width {
            let g = base + l;
            if g < ny {
                yd[g].eps[l] = 0.0;
            } else {
                pd[g - ny].eps[l] = 0.0;
            }
        }
        base += width;
    }
}

/// Dense Jacobian of a boundary-condition function by chunked dual sweeps.
fn bc_jacobian(
    eval: impl Fn(&[Dual<LANES, f64>], &[Dual<LANES, f64>], &mut [Dual<LANES, f64>]),
    y: &[f64],
    par: &[f64],
    nbc: usize,
    jy: &mut [f64],
    jp: &mut [f64],
) {
    let ny = y.len();
    let np = par.len();
    let nv = ny + np;
    let mut yd: Vec<Dual<LANES, f64>> = y.iter().map(|&v| Dual::new(v)).collect();
    let mut pd: Vec<Dual<LANES, f64>> = par.iter().map(|&v| Dual::new(v)).collect();
    let mut out = vec![Dual::<LANES, f64>::new(0.0); nbc];
    let mut base = 0;
    while base < nv {
        let width = LANES.min(nv - base);
        for l in 0..width {
            let g = base + l;
            if g < ny {
                yd[g].eps[l] = 1.0;
            } else {
                pd[g - ny].eps[l] = 1.0;
            }
        }
        eval(&yd, &pd, &mut out);
        for r in 0..nbc {
            for l in 0..width {
                let g = base + l;
                if g < ny {
                    jy[r * ny + g] = out[r].eps[l];
                } else {
                    jp[r * np + (g - ny)] = out[r].eps[l];
                }
            }
        }
        for l in 0..width {
            let g = base + l;
            if g < ny {
                yd[g].eps[l] = 0.0;
            } else {
                pd[g - ny].eps[l] = 0.0;
            }
        }
        base += width;
    }
}

/// Scratch state for one mesh: node values, node rhs, midpoint data and the
/// stacked residual vector.
struct Workspace {
    f_nodes: Vec<Vec<f64>>,
    y_mid: Vec<Vec<f64>>,
    f_mid: Vec<Vec<f64>>,
    residual: Vec<f64>,
}

fn eval_residuals<P: SmoothBvp>(
    p: &P,
    mesh: &[f64],
    y: &[Vec<f64>],
    par: &[f64],
    ws: &mut Workspace,
) {
    let ny = p.dim();
    let n = mesh.len();
    let n_a = p.n_left_bc();
    for i in 0..n {
        p.rhs(mesh[i], &y[i], par, &mut ws.f_nodes[i]);
    }
    p.bc_left(&y[0], par, &mut ws.residual[0..n_a]);
    for i in 0..n - 1 {
        let h = mesh[i + 1] - mesh[i];
        for j in 0..ny {
            ws.y_mid[i][j] = 0.5 * (y[i][j] + y[i + 1][j])
                + h / 8.0 * (ws.f_nodes[i][j] - ws.f_nodes[i + 1][j]);
        }
        let tm = 0.5 * (mesh[i] + mesh[i + 1]);
        p.rhs(tm, &ws.y_mid[i], par, &mut ws.f_mid[i]);
        let row = n_a + ny * i;
        for j in 0..ny {
            ws.residual[row + j] = y[i + 1][j]
                - y[i][j]
                - h / 6.0 * (ws.f_nodes[i][j] + 4.0 * ws.f_mid[i][j] + ws.f_nodes[i + 1][j]);
        }
    }
    let tail = n_a + ny * (n - 1);
    let nb = ny + p.n_params() - n_a;
    p.bc_right(&y[n - 1], par, &mut ws.residual[tail..tail + nb]);
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residual norm in defect units: collocation rows are divided by their
/// interval length so the Newton exit test tracks the interpolant defect the
/// mesh controller measures, independent of mesh density.
fn scaled_max(residual: &[f64], mesh: &[f64], ny: usize, n_a: usize) -> f64 {
    let mut worst = residual[0..n_a].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..mesh.len() - 1 {
        let h = mesh[i + 1] - mesh[i];
        for j in 0..ny {
            worst = worst.max((residual[n_a + ny * i + j] / h).abs());
        }
    }
    let tail = n_a + ny * (mesh.len() - 1);
    worst.max(residual[tail..].iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

fn mat_mul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// Solve the problem from a guess.
pub fn solve_bvp<P: SmoothBvp>(
    p: &P,
    guess: &BvpGuess,
    opts: &BvpOptions,
) -> Result<BvpSolution, BvpError> {
    let ny = p.dim();
    let np = p.n_params();
    let n_a = p.n_left_bc();
    if n_a > ny {
        return Err(BvpError::BadBoundarySplit);
    }
    if guess.y.len() != guess.mesh.len()
        || guess.y.iter().any(|r| r.len() != ny)
        || guess.params.len() != np
    {
        return Err(BvpError::DimensionMismatch);
    }
    check_mesh(&guess.mesh)?;

    let mut mesh = guess.mesh.clone();
    let mut y = guess.y.clone();
    let mut par = guess.params.clone();
    let mut total_newton = 0usize;

    for round in 0..=opts.max_remesh {
        let (sol_y, sol_par, iters) = newton_solve(p, &mesh, y, par, opts)?;
        total_newton += iters;
        y = sol_y;
        par = sol_par;

        let mut f = Vec::with_capacity(mesh.len());
        for i in 0..mesh.len() {
            let mut fi = vec![0.0; ny];
            p.rhs(mesh[i], &y[i], &par, &mut fi);
            f.push(fi);
        }
        let sol = BvpSolution {
            mesh: mesh.clone(),
            y: y.clone(),
            f,
            params: par.clone(),
            max_residual: 0.0,
            newton_iterations: total_newton,
        };
        let res = estimate_residuals(p, &sol);
        let max_res = res.iter().fold(0.0f64, |m, r| m.max(*r));
        if max_res <= opts.tol {
            return Ok(BvpSolution { max_residual: max_res, ..sol });
        }
        if round == opts.max_remesh {
            return Err(BvpError::NoConvergence {
                residual: max_res,
                iterations: total_newton,
                best: Box::new(BvpSolution { max_residual: max_res, ..sol }),
            });
        }
        let new_mesh = equidistribute(&mesh, &res, opts.tol, opts.max_nodes)?;
        let resampled = sol.resample(&new_mesh);
        mesh = resampled.mesh;
        y = resampled.y;
    }
    unreachable!("remesh loop returns or errors");
}

fn check_mesh(mesh: &[f64]) -> Result<(), BvpError> {
    if mesh.len() < 5 || mesh.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BvpError::InvalidMesh);
    }
    Ok(())
}

/// Damped Newton iteration on a fixed mesh.
#[allow(clippy::type_complexity)]
fn newton_solve<P: SmoothBvp>(
    p: &P,
    mesh: &[f64],
    mut y: Vec<Vec<f64>>,
    mut par: Vec<f64>,
    opts: &BvpOptions,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize), BvpError> {
    let ny = p.dim();
    let np = p.n_params();
    let n_a = p.n_left_bc();
    let n_b = ny + np - n_a;
    let n = mesh.len();
    let m = ny * n;
    let total = m + np;

    let mut ws = Workspace {
        f_nodes: vec![vec![0.0; ny]; n],
        y_mid: vec![vec![0.0; ny]; n - 1],
        f_mid: vec![vec![0.0; ny]; n - 1],
        residual: vec![0.0; total],
    };
    let mut trial_ws = Workspace {
        f_nodes: vec![vec![0.0; ny]; n],
        y_mid: vec![vec![0.0; ny]; n - 1],
        f_mid: vec![vec![0.0; ny]; n - 1],
        residual: vec![0.0; total],
    };

    eval_residuals(p, mesh, &y, &par, &mut ws);
    let mut merit = rms(&ws.residual);
    if !merit.is_finite() {
        return Err(BvpError::NonFinite);
    }

    // Jacobian blocks at nodes and midpoints
    let mut jy_nodes = vec![0.0; n * ny * ny];
    let mut jp_nodes = vec![0.0; n * ny * np.max(1)];
    let mut jy_mid = vec![0.0; (n - 1) * ny * ny];
    let mut jp_mid = vec![0.0; (n - 1) * ny * np.max(1)];
    let mut scratch_a = vec![0.0; ny * ny];
    let mut scratch_b = vec![0.0; ny * ny];

    let kl = n_a + ny - 1;
    let ku = 2 * ny - 1 - n_a;

    for iteration in 0..opts.max_newton {
        if scaled_max(&ws.residual, mesh, ny, n_a) <= opts.newton_tol {
            return Ok((y, par, iteration));
        }

        for i in 0..n {
            rhs_jacobian(
                p,
                mesh[i],
                &y[i],
                &par,
                &mut jy_nodes[i * ny * ny..(i + 1) * ny * ny],
                &mut jp_nodes[i * ny * np.max(1)..],
            );
        }
        for i in 0..n - 1 {
            let tm = 0.5 * (mesh[i] + mesh[i + 1]);
            rhs_jacobian(
                p,
                tm,
                &ws.y_mid[i],
                &par,
                &mut jy_mid[i * ny * ny..(i + 1) * ny * ny],
                &mut jp_mid[i * ny * np.max(1)..],
            );
        }

        let mut band = BandedMatrix::zeros(m, kl, ku);
        let mut border = vec![0.0; m * np.max(1)]; // column block for parameters
        let mut c_rows = vec![0.0; np * ny];
        let mut d_block = vec![0.0; np * np];

        // left boundary rows
        {
            let mut jy = vec![0.0; n_a * ny];
            let mut jp = vec![0.0; n_a * np.max(1)];
            bc_jacobian(|ya, pp, out| p.bc_left(ya, pp, out), &y[0], &par, n_a, &mut jy, &mut jp);
            for r in 0..n_a {
                for cidx in 0..ny {
                    band.set(r, cidx, jy[r * ny + cidx]);
                }
                for q in 0..np {
                    border[r * np + q] = jp[r * np + q];
                }
            }
        }

        // collocation rows
        for i in 0..n - 1 {
            let h = mesh[i + 1] - mesh[i];
            let ji = &jy_nodes[i * ny * ny..(i + 1) * ny * ny];
            let jn = &jy_nodes[(i + 1) * ny * ny..(i + 2) * ny * ny];
            let jm = &jy_mid[i * ny * ny..(i + 1) * ny * ny];

            // d r_i / d y_i = -I - h/6 (J_i + 4 J_m (I/2 + h/8 J_i))
            mat_mul(jm, ji, ny, &mut scratch_a);
            for a in 0..ny {
                for b in 0..ny {
                    let jm_ab = jm[a * ny + b];
                    let v = -h / 6.0
                        * (ji[a * ny + b] + 2.0 * jm_ab + 0.5 * h * scratch_a[a * ny + b])
                        - if a == b { 1.0 } else { 0.0 };
                    band.set(n_a + ny * i + a, ny * i + b, v);
                }
            }
            // d r_i / d y_{i+1} = I - h/6 (J_{i+1} + 4 J_m (I/2 - h/8 J_{i+1}))
            mat_mul(jm, jn, ny, &mut scratch_b);
            for a in 0..ny {
                for b in 0..ny {
                    let jm_ab = jm[a * ny + b];
                    let v = -h / 6.0
                        * (jn[a * ny + b] + 2.0 * jm_ab - 0.5 * h * scratch_b[a * ny + b])
                        + if a == b { 1.0 } else { 0.0 };
                    band.set(n_a + ny * i + a, ny * (i + 1) + b, v);
                }
            }
            // d r_i / d p
            if np > 0 {
                let pi = &jp_nodes[i * ny * np..(i + 1) * ny * np];
                let pn = &jp_nodes[(i + 1) * ny * np..(i + 2) * ny * np];
                let pm = &jp_mid[i * ny * np..(i + 1) * ny * np];
                for a in 0..ny {
                    for q in 0..np {
                        let mut chain = 0.0;
                        for b in 0..ny {
                            chain += jm[a * ny + b] * (pi[b * np + q] - pn[b * np + q]);
                        }
                        let v = -h / 6.0
                            * (pi[a * np + q]
                                + pn[a * np + q]
                                + 4.0 * (pm[a * np + q] + h / 8.0 * chain));
                        border[(n_a + ny * i + a) * np + q] = v;
                    }
                }
            }
        }

        // right boundary rows: first n_b - np inside the band, last np border
        {
            let mut jy = vec![0.0; n_b * ny];
            let mut jp = vec![0.0; n_b * np.max(1)];
            bc_jacobian(
                |yb, pp, out| p.bc_right(yb, pp, out),
                &y[n - 1],
                &par,
                n_b,
                &mut jy,
                &mut jp,
            );
            let row0 = n_a + ny * (n - 1);
            for r in 0..n_b - np {
                for cidx in 0..ny {
                    band.set(row0 + r, ny * (n - 1) + cidx, jy[r * ny + cidx]);
                }
                for q in 0..np {
                    border[(row0 + r) * np + q] = jp[r * np + q];
                }
            }
            for r in 0..np {
                let rr = n_b - np + r;
                for cidx in 0..ny {
                    c_rows[r * ny + cidx] = jy[rr * ny + cidx];
                }
                for q in 0..np {
                    d_block[r * np + q] = jp[rr * np + q];
                }
            }
        }

        let factored = band.factor().map_err(|s| BvpError::SingularJacobian {
            column: s.column,
            max_pivot: s.max_pivot,
        })?;

        // bordered elimination for the parameter unknowns
        let mut x_a: Vec<f64> = ws.residual[0..m].to_vec();
        factored.solve(&mut x_a);
        let mut dp = vec![0.0; np];
        let mut w_cols = vec![0.0; m * np.max(1)];
        if np > 0 {
            for q in 0..np {
                let mut col: Vec<f64> = (0..m).map(|r| border[r * np + q]).collect();
                factored.solve(&mut col);
                for r in 0..m {
                    w_cols[r * np + q] = col[r];
                }
            }
            // Schur complement S = D - C W, rhs = C x_a - F2
            let mut s = vec![0.0; np * np];
            let mut rhs_s = vec![0.0; np];
            for r in 0..np {
                for q in 0..np {
                    let mut acc = d_block[r * np + q];
                    for kk in 0..ny {
                        acc -= c_rows[r * ny + kk] * w_cols[(m - ny + kk) * np + q];
                    }
                    s[r * np + q] = acc;
                }
                let mut acc = -ws.residual[m + r];
                for kk in 0..ny {
                    acc += c_rows[r * ny + kk] * x_a[m - ny + kk];
                }
                rhs_s[r] = acc;
            }
            solve_small(&mut s, &mut rhs_s, np).map_err(|c| BvpError::SingularJacobian {
                column: m + c,
                max_pivot: 0.0,
            })?;
            dp.copy_from_slice(&rhs_s);
        }

        // assemble the Newton direction: dY = -(x_a + W dp)
        let mut dy = x_a;
        if np > 0 {
            for r in 0..m {
                let mut acc = dy[r];
                for q in 0..np {
                    acc += w_cols[r * np + q] * dp[q];
                }
                dy[r] = -acc;
            }
        } else {
            for v in dy.iter_mut() {
                *v = -*v;
            }
        }

        // Armijo backtracking on the residual norm, floor 2^-10
        let mut accepted = false;
        let mut step = 1.0f64;
        while step >= (1.0 / 1024.0) {
            let mut y_trial = y.clone();
            for i in 0..n {
                for j in 0..ny {
                    y_trial[i][j] += step * dy[ny * i + j];
                }
            }
            let mut p_trial = par.clone();
            for q in 0..np {
                p_trial[q] += step * dp[q];
            }
            eval_residuals(p, mesh, &y_trial, &p_trial, &mut trial_ws);
            let trial_merit = rms(&trial_ws.residual);
            if trial_merit.is_finite() && trial_merit <= (1.0 - 1e-4 * step) * merit {
                y = y_trial;
                par = p_trial;
                std::mem::swap(&mut ws, &mut trial_ws);
                merit = trial_merit;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // backtracking floor reached; usable if the iterate already
            // meets the defect tolerance the mesh controller enforces
            let stalled = scaled_max(&ws.residual, mesh, ny, n_a);
            if stalled <= opts.tol {
                return Ok((y, par, iteration + 1));
            }
            let best = solution_snapshot(p, mesh, &y, &par, iteration + 1);
            return Err(BvpError::NoConvergence {
                residual: stalled,
                iterations: iteration + 1,
                best: Box::new(best),
            });
        }
    }

    let final_norm = scaled_max(&ws.residual, mesh, ny, n_a);
    if final_norm <= opts.tol {
        return Ok((y, par, opts.max_newton));
    }
    let best = solution_snapshot(p, mesh, &y, &par, opts.max_newton);
    Err(BvpError::NoConvergence {
        residual: final_norm,
        iterations: opts.max_newton,
        best: Box::new(best),
    })
}

fn solution_snapshot<P: SmoothBvp>(
    p: &P,
    mesh: &[f64],
    y: &[Vec<f64>],
    par: &[f64],
    iterations: usize,
) -> BvpSolution {
    let ny = p.dim();
    let mut f = Vec::with_capacity(mesh.len());
    for i in 0..mesh.len() {
        let mut fi = vec![0.0; ny];
        p.rhs(mesh[i], &y[i], par, &mut fi);
        f.push(fi);
    }
    BvpSolution {
        mesh: mesh.to_vec(),
        y: y.to_vec(),
        f,
        params: par.to_vec(),
        max_residual: f64::INFINITY,
        newton_iterations: iterations,
    }
}

/// Gaussian elimination with partial pivoting for the small Schur system.
fn solve_small(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), usize> {
    for j in 0..n {
        let mut piv = j;
        for i in j + 1..n {
            if a[i * n + j].abs() > a[piv * n + j].abs() {
                piv = i;
            }
        }
        if a[piv * n + j] == 0.0 || !a[piv * n + j].is_finite() {
            return Err(j);
        }
        if piv != j {
            for k in 0..n {
                a.swap(j * n + k, piv * n + k);
            }
            b.swap(j, piv);
        }
        for i in j + 1..n {
            let mfac = a[i * n + j] / a[j * n + j];
            for k in j..n {
                a[i * n + k] -= mfac * a[j * n + k];
            }
            b[i] -= mfac * b[j];
        }
    }
    for j in (0..n).rev() {
        for k in j + 1..n {
            b[j] -= a[j * n + k] * b[k];
        }
        b[j] /= a[j * n + j];
    }
    Ok(())
}

/// Normalized collocation defect of the interpolant per interval, sampled at
/// the two interior Gauss points.
pub fn estimate_residuals<P: SmoothBvp>(p: &P, sol: &BvpSolution) -> Vec<f64> {
    let ny = p.dim();
    let n = sol.mesh.len();
    let gauss = [0.5 - 3.0f64.sqrt() / 6.0, 0.5 + 3.0f64.sqrt() / 6.0];
    let mut out = Vec::with_capacity(n - 1);
    let mut yv = vec![0.0; ny];
    let mut dv = vec![0.0; ny];
    let mut fv = vec![0.0; ny];
    for i in 0..n - 1 {
        let (t0, t1) = (sol.mesh[i], sol.mesh[i + 1]);
        let mut worst = 0.0f64;
        for g in gauss {
            let tau = t0 + g * (t1 - t0);
            hermite_eval(tau, t0, t1, &sol.y[i], &sol.y[i + 1], &sol.f[i], &sol.f[i + 1], &mut yv);
            hermite_deriv(tau, t0, t1, &sol.y[i], &sol.y[i + 1], &sol.f[i], &sol.f[i + 1], &mut dv);
            p.rhs(tau, &yv, &sol.params, &mut fv);
            let mut acc = 0.0;
            for j in 0..ny {
                let d = (dv[j] - fv[j]) / (1.0 + fv[j].abs());
                acc += d * d;
            }
            worst = worst.max((acc / ny as f64).sqrt());
        }
        out.push(if worst.is_finite() { worst } else { f64::INFINITY });
    }
    out
}

/// Build a mesh that equidistributes the estimated defect. Unchanged when
/// every interval already meets the tolerance.
pub fn equidistribute(
    mesh: &[f64],
    residuals: &[f64],
    tol: f64,
    max_nodes: usize,
) -> Result<Vec<f64>, BvpError> {
    assert_eq!(residuals.len(), mesh.len() - 1);
    if residuals.iter().all(|r| *r <= tol) {
        return Ok(mesh.to_vec());
    }
    // target a margin below tol; defect scales like h^4
    let weights: Vec<f64> =
        residuals.iter().map(|r| (r / (0.3 * tol)).powf(0.25).max(1e-8)).collect();
    let total: f64 = weights.iter().sum();
    let n_int = (total.ceil() as usize).max(6);
    if n_int + 1 > max_nodes {
        return Err(BvpError::MeshCapExceeded { needed: n_int + 1, cap: max_nodes });
    }
    let mut new_mesh = Vec::with_capacity(n_int + 1);
    new_mesh.push(mesh[0]);
    let step = total / n_int as f64;
    let mut acc = 0.0;
    let mut k = 0usize;
    for target in 1..n_int {
        let goal = step * target as f64;
        while acc + weights[k] < goal && k + 1 < weights.len() {
            acc += weights[k];
            k += 1;
        }
        let frac = (goal - acc) / weights[k];
        new_mesh.push(mesh[k] + frac * (mesh[k + 1] - mesh[k]));
    }
    new_mesh.push(*mesh.last().unwrap());
    Ok(new_mesh)
}

/// Re-estimate defects for an existing solution and propose a refined mesh.
pub fn remesh<P: SmoothBvp>(
    p: &P,
    sol: &BvpSolution,
    target_tol: f64,
    max_nodes: usize,
) -> Result<Vec<f64>, BvpError> {
    let res = estimate_residuals(p, sol);
    equidistribute(&sol.mesh, &res, target_tol, max_nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y'' = -y as a first-order system; y(0) = 0, y(pi/2) = 1 -> y = sin.
    struct Sine;
    impl SmoothBvp for Sine {
        fn dim(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            0
        }
        fn n_left_bc(&self) -> usize {
            1
        }
        fn rhs<T: Scalar>(&self, _tau: f64, y: &[T], _p: &[T], dy: &mut [T]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn bc_left<T: Scalar>(&self, ya: &[T], _p: &[T], out: &mut [T]) {
            out[0] = ya[0];
        }
        fn bc_right<T: Scalar>(&self, yb: &[T], _p: &[T], out: &mut [T]) {
            out[0] = yb[0] - T::one();
        }
    }

    fn uniform_mesh(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    fn sine_guess(n: usize) -> BvpGuess {
        let mesh = uniform_mesh(n, 0.0, std::f64::consts::FRAC_PI_2);
        let y = mesh.iter().map(|&t| vec![t / std::f64::consts::FRAC_PI_2, 0.5]).collect();
        BvpGuess { mesh, y, params: vec![] }
    }

    #[test]
    fn linear_bvp_matches_sine() {
        let sol = solve_bvp(&Sine, &sine_guess(50), &BvpOptions::default()).unwrap();
        let mut out = [0.0; 2];
        for k in 0..200 {
            let tau = std::f64::consts::FRAC_PI_2 * k as f64 / 199.0;
            sol.eval(tau, &mut out);
            assert!((out[0] - tau.sin()).abs() < 1e-6, "y({tau}) = {} vs {}", out[0], tau.sin());
            assert!((out[1] - tau.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn fourth_order_mesh_convergence() {
        // no remeshing: fixed meshes with h and h/2
        let opts = BvpOptions { tol: 1.0, max_remesh: 0, ..BvpOptions::default() };
        let mut errs = Vec::new();
        for n in [9, 17] {
            let sol = solve_bvp(&Sine, &sine_guess(n), &opts).unwrap();
            let mut worst = 0.0f64;
            let mut out = [0.0; 2];
            for (i, &tau) in sol.mesh.iter().enumerate() {
                out.copy_from_slice(&sol.y[i]);
                worst = worst.max((out[0] - tau.sin()).abs());
            }
            errs.push(worst);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (12.0..=20.0).contains(&ratio),
            "expected ~16x error reduction per mesh halving, got {ratio} ({errs:?})"
        );
    }

    /// y' = p y with y(0) = 1, y(1) = e^2: the unknown growth rate is 2.
    struct Growth;
    impl SmoothBvp for Growth {
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            1
        }
        fn n_left_bc(&self) -> usize {
            1
        }
        fn rhs<T: Scalar>(&self, _tau: f64, y: &[T], p: &[T], dy: &mut [T]) {
            dy[0] = p[0] * y[0];
        }
        fn bc_left<T: Scalar>(&self, ya: &[T], _p: &[T], out: &mut [T]) {
            out[0] = ya[0] - T::one();
        }
        fn bc_right<T: Scalar>(&self, yb: &[T], _p: &[T], out: &mut [T]) {
            out[0] = yb[0] - T::c(2.0f64.exp());
        }
    }

    #[test]
    fn recovers_unknown_parameter() {
        let mesh = uniform_mesh(41, 0.0, 1.0);
        let y = mesh.iter().map(|&t| vec![1.0 + 6.0 * t]).collect();
        let guess = BvpGuess { mesh, y, params: vec![1.0] };
        let sol = solve_bvp(&Growth, &guess, &BvpOptions::default()).unwrap();
        assert!((sol.params[0] - 2.0).abs() < 1e-8, "p = {}", sol.params[0]);
    }

    /// y1' = y2, y2' = 0 with y2(0) = 1 and y2(1) = -1: y2 is constant, so
    /// the boundary conditions contradict each other.
    struct Contradictory;
    impl SmoothBvp for Contradictory {
        fn dim(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            0
        }
        fn n_left_bc(&self) -> usize {
            1
        }
        fn rhs<T: Scalar>(&self, _tau: f64, y: &[T], _p: &[T], dy: &mut [T]) {
            dy[0] = y[1];
            dy[1] = T::zero();
        }
        fn bc_left<T: Scalar>(&self, ya: &[T], _p: &[T], out: &mut [T]) {
            out[0] = ya[1] - T::one();
        }
        fn bc_right<T: Scalar>(&self, yb: &[T], _p: &[T], out: &mut [T]) {
            out[0] = yb[1] + T::one();
        }
    }

    #[test]
    fn infeasible_problem_errors() {
        let mesh = uniform_mesh(31, 0.0, 3.0);
        let y = mesh.iter().map(|&t| vec![t, 0.1]).collect();
        let guess = BvpGuess { mesh, y, params: vec![] };
        assert!(solve_bvp(&Contradictory, &guess, &BvpOptions::default()).is_err());
    }

    #[test]
    fn deterministic_solutions() {
        let a = solve_bvp(&Sine, &sine_guess(33), &BvpOptions::default()).unwrap();
        let b = solve_bvp(&Sine, &sine_guess(33), &BvpOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interpolant_is_c1_at_nodes() {
        let sol = solve_bvp(&Sine, &sine_guess(21), &BvpOptions::default()).unwrap();
        let mut left = [0.0; 2];
        let mut right = [0.0; 2];
        for k in 1..sol.mesh.len() - 1 {
            let t = sol.mesh[k];
            sol.eval(t - 1e-13, &mut left);
            sol.eval(t + 1e-13, &mut right);
            assert!((left[0] - right[0]).abs() < 1e-11);
            sol.eval_deriv(t - 1e-13, &mut left);
            sol.eval_deriv(t + 1e-13, &mut right);
            assert!((left[0] - right[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn equidistribute_behavior() {
        let mesh = uniform_mesh(11, 0.0, 1.0);
        // all below tol: unchanged
        let res = vec![1e-12; 10];
        assert_eq!(equidistribute(&mesh, &res, 1e-8, 500).unwrap(), mesh);
        // uniform residual above tol: near-uniform mesh
        let res = vec![1e-4; 10];
        let newm = equidistribute(&mesh, &res, 1e-8, 500).unwrap();
        let hs: Vec<f64> = newm.windows(2).map(|w| w[1] - w[0]).collect();
        let (hmin, hmax) = hs.iter().fold((1.0f64, 0.0f64), |(lo, hi), h| (lo.min(*h), hi.max(*h)));
        assert!(hmax / hmin < 1.05, "uniform residual should stay uniform: {hs:?}");
        // concentrated residual: points cluster in the hot interval
        let mut res = vec![1e-10; 10];
        res[4] = 1e-2;
        let newm = equidistribute(&mesh, &res, 1e-8, 500).unwrap();
        let inside = newm.iter().filter(|t| (0.4..0.5).contains(*t)).count();
        assert!(
            inside * 2 > newm.len(),
            "most points should land in the hot interval: {inside} of {}",
            newm.len()
        );
        // cap enforcement
        let res = vec![1.0; 10];
        assert!(matches!(
            equidistribute(&mesh, &res, 1e-10, 20),
            Err(BvpError::MeshCapExceeded { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let guess = BvpGuess { mesh: vec![0.0, 1.0], y: vec![vec![0.0; 2]; 2], params: vec![] };
        assert!(matches!(solve_bvp(&Sine, &guess, &BvpOptions::default()), Err(BvpError::InvalidMesh)));
        let mut g = sine_guess(10);
        g.y.pop();
        assert!(matches!(
            solve_bvp(&Sine, &g, &BvpOptions::default()),
            Err(BvpError::DimensionMismatch)
        ));
    }
}

