//! Fixed-step RK4 on the reduced manifold with projection after every step.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::ReducedSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `||E(x) v - F(x)||` with `v` the velocity used at that state.
    pub res_dyn: Vec<f64>,
    /// Largest constraint value of `M*` after projection.
    pub res_con: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn max_res_dyn(&self) -> f64 {
        self.res_dyn.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_res_con(&self) -> f64 {
        self.res_con.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::from("t");
        for n in names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",res_dyn,res_con\n");
        for (i, t) in self.times.iter().enumerate() {
            write!(s, "{t}").unwrap();
            for v in &self.states[i] {
                write!(s, ",{v}").unwrap();
            }
            writeln!(s, ",{},{}", self.res_dyn[i], self.res_con[i]).unwrap();
        }
        s
    }
}

/// One classical Runge-Kutta step.
pub fn rk4_step(x: &[f64], dt: f64, vel: &mut dyn FnMut(&[f64]) -> Result<DVector<f64>>) -> Result<Vec<f64>> {
    let shift = |h: f64, k: &DVector<f64>| -> Vec<f64> { x.iter().zip(k.iter()).map(|(a, b)| a + h * b).collect() };
    let k1 = vel(x)?;
    let k2 = vel(&shift(dt / 2.0, &k1))?;
    let k3 = vel(&shift(dt / 2.0, &k2))?;
    let k4 = vel(&shift(dt, &k3))?;
    let k = (k1 + (k2 + k3) * 2.0 + k4) / 6.0;
    Ok(shift(dt, &k))
}

/// Step count and effective step so that the grid ends exactly at `tmax`.
pub fn grid(tmax: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !(tmax >= 0.0) {
        return Err(Error::Model(format!("need dt > 0 and tmax >= 0, got dt = {dt}, tmax = {tmax}")));
    }
    let steps = (tmax / dt).round().max(if tmax > 0.0 { 1.0 } else { 0.0 }) as usize;
    Ok((steps, if steps == 0 { 0.0 } else { tmax / steps as f64 }))
}

fn at_time(e: Error, t: f64) -> Error {
    Error::NotConverged(format!("integration stopped at t = {t:.6}: {e}"))
}

fn run(
    reduced: &ReducedSystem,
    x0: &[f64],
    tmax: f64,
    dt: f64,
    vel: &mut dyn FnMut(f64, &[f64]) -> Result<DVector<f64>>,
) -> Result<Trajectory> {
    let (steps, h) = grid(tmax, dt)?;
    let mut warnings = Vec::new();
    let mut x = x0.to_vec();
    let tol = reduced.config().tol_residual;
    if reduced.constraint_residual(&x)? > tol {
        x = reduced.project(&x)?;
        warnings.push(format!("initial state was not on M*; projected to {x:?}"));
    }
    let mut traj = Trajectory { times: Vec::with_capacity(steps + 1), states: Vec::new(), res_dyn: Vec::new(), res_con: Vec::new(), warnings };
    let record = |traj: &mut Trajectory, t: f64, x: &[f64], v: &DVector<f64>| -> Result<()> {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.res_dyn.push(reduced.dynamic_residual(x, v)?);
        traj.res_con.push(reduced.constraint_residual(x)?);
        Ok(())
    };
    let v0 = vel(0.0, &x).map_err(|e| at_time(e, 0.0))?;
    record(&mut traj, 0.0, &x, &v0)?;
    for i in 0..steps {
        let t = i as f64 * h;
        let next = rk4_step(&x, h, &mut |y| vel(t, y)).map_err(|e| at_time(e, t))?;
        let t1 = (i + 1) as f64 * h;
        x = reduced.project(&next).map_err(|e| at_time(e, t1))?;
        let v = vel(t1, &x).map_err(|e| at_time(e, t1))?;
        record(&mut traj, t1, &x, &v)?;
    }
    Ok(traj)
}

/// Integrates `x' = f*(x)` on `M*` of an internally regular system.
pub fn integrate(reduced: &ReducedSystem, x0: &[f64], tmax: f64, dt: f64) -> Result<Trajectory> {
    if !reduced.internally_regular {
        return Err(Error::Assumption(format!(
            "integration needs an internally regular system (n* = {}, r* = {}); use integrate_free",
            reduced.n_star, reduced.r_star
        )));
    }
    run(reduced, x0, tmax, dt, &mut |_, x| Ok(reduced.admissible_velocity(x)?.particular))
}

/// Integrates with the rates of the free coordinates supplied by `policy(t, x)`.
pub fn integrate_free(
    reduced: &ReducedSystem,
    x0: &[f64],
    policy: &dyn Fn(f64, &[f64]) -> Vec<f64>,
    tmax: f64,
    dt: f64,
) -> Result<Trajectory> {
    run(reduced, x0, tmax, dt, &mut |t, x| reduced.velocity_with(x, &policy(t, x)))
}

/// A policy holding the free rates at zero.
pub fn zero_policy(reduced: &ReducedSystem) -> impl Fn(f64, &[f64]) -> Vec<f64> {
    let d = reduced.free_dim();
    move |_, _| vec![0.0; d]
}
