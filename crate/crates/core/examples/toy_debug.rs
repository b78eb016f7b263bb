use softswitch::toy::*;

fn simulate(p: &ToyHybridProblem, u: &[f64], from: (f64, f64)) -> (f64, f64) {
    let n = u.len();
    let dt = p.horizon / n as f64;
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

fn main() {
    let p = ToyHybridProblem {
        damping1: 0.0, damping2: 0.0, x_switch: 0.5,
        x0: 0.0, v0: 0.0, x1: 1.0, v1: 0.0, horizon: 1.0,
    };
    match brute_force_cost(&p, 64) {
        Ok(s) => {
            let u: Vec<f64> = s.trajectory.iter().map(|r| r[3]).collect();
            let endpoint = simulate(&p, &u[..u.len()-1], (p.x0, p.v0));
            println!("oracle cost = {}, endpoint = {:?} (want (1.0, 0.0))", s.cost, endpoint);
            println!("traj endpoint row: {:?}", s.trajectory.last().unwrap());
        }
        Err(e) => println!("oracle error: {e}"),
    }
}
