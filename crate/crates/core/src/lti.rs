//! Discrete-time LTI plant and the hover-linearized quadrotor.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t) + D u(t)`, with `h` picking the
/// three output entries that hold Cartesian position.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: [usize; 3],
}

/// Inputs, states and outputs of a simulation. `states[t]` and `outputs[t]`
/// are taken before `inputs[t]` is applied; `final_state` follows the last input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimTrace {
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub final_state: DVector<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        h: [usize; 3],
    ) -> Result<Self> {
        let n = a.nrows();
        let dims_ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols();
        if !dims_ok || n == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        let p = c.nrows();
        if h.iter().any(|&i| i >= p) || h[0] == h[1] || h[1] == h[2] || h[0] == h[2] {
            return Err(Error::InvalidParam(format!("position selector {h:?} must be 3 distinct outputs below {p}")));
        }
        Ok(LtiSystem { a, b, c, d, h })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Applies one step of the exact linear map, returning `(x_next, y)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(Error::Dimension(format!(
                "state {} (want {}), input {} (want {})",
                x.len(),
                self.n(),
                u.len(),
                self.m()
            )));
        }
        Ok((&self.a * x + &self.b * u, &self.c * x + &self.d * u))
    }

    pub fn simulate(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<SimTrace> {
        if inputs.is_empty() {
            return Err(Error::InvalidParam("empty input sequence".into()));
        }
        let mut x = x0.clone();
        let mut states = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for u in inputs {
            let (next, y) = self.step(&x, u)?;
            states.push(x);
            outputs.push(y);
            x = next;
        }
        Ok(SimTrace { inputs: inputs.to_vec(), states, outputs, final_state: x })
    }

    /// Position components `h·y` of an output vector.
    pub fn position(&self, y: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(y[self.h[0]], y[self.h[1]], y[self.h[2]])
    }
}

/// Physical constants of the hover-linearized quadrotor and its actuator box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrotorParams {
    /// Sampling time [s].
    pub ts: f64,
    /// Gravity [m/s^2].
    pub g: f64,
    /// Mass [kg].
    pub mass: f64,
    /// Arm length [m].
    pub arm: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Lower input bounds (lift, roll, pitch, yaw torque).
    pub u_min: [f64; 4],
    pub u_max: [f64; 4],
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        QuadrotorParams {
            ts: 0.7,
            g: 9.81,
            mass: 1.2,
            arm: 0.21,
            ix: 0.004,
            iy: 0.004,
            iz: 0.004,
            u_min: [-3.0, -2.0, -2.0, -2.0],
            u_max: [3.0, 2.0, 2.0, 2.0],
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ts", self.ts),
            ("g", self.g),
            ("mass", self.mass),
            ("arm", self.arm),
            ("ix", self.ix),
            ("iy", self.iy),
            ("iz", self.iz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        for k in 0..4 {
            if !(self.u_min[k] < self.u_max[k]) {
                return Err(Error::InvalidParam(format!("input bound {k}: {} !< {}", self.u_min[k], self.u_max[k])));
            }
        }
        Ok(())
    }

    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        self.u_min.iter().zip(&self.u_max).map(|(&l, &u)| (l, u)).collect()
    }
}

/// Builds the 12-state quadrotor. State order is
/// `[x1, x1', x2, x2', x3, x3', roll, roll', pitch, pitch', yaw, yaw']`, every
/// state is measured, and position sits at outputs 0, 2, 4.
///
/// Only the listed entries are non-zero; in particular the position rows
/// carry no identity term, so the next position is `Ts` times the velocity.
pub fn build_quadrotor(p: &QuadrotorParams) -> Result<LtiSystem> {
    p.validate()?;
    let ts = p.ts;
    let mut a = DMatrix::zeros(12, 12);
    // Entries are written 1-based to mirror the usual listing.
    let mut set = |r: usize, c: usize, v: f64| a[(r - 1, c - 1)] = v;
    set(1, 2, ts);
    set(2, 2, 1.0);
    set(2, 9, p.g * ts);
    set(3, 4, ts);
    set(4, 4, 1.0);
    set(4, 7, -p.g * ts);
    set(5, 6, ts);
    set(6, 6, 1.0);
    set(7, 8, ts);
    set(8, 8, 1.0);
    set(9, 10, ts);
    set(10, 10, 1.0);
    set(11, 12, ts);
    set(12, 12, 1.0);

    let mut b = DMatrix::zeros(12, 4);
    b[(5, 0)] = ts / p.mass;
    b[(7, 1)] = p.arm * ts / p.ix;
    b[(9, 2)] = p.arm * ts / p.iy;
    b[(11, 3)] = ts / p.iz;

    LtiSystem::new(a, b, DMatrix::identity(12, 12), DMatrix::zeros(12, 4), [0, 2, 4])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> LtiSystem {
        build_quadrotor(&QuadrotorParams::default()).unwrap()
    }

    #[test]
    fn listed_entries() {
        let s = quad();
        assert!((s.a[(1, 8)] - 6.867).abs() < 1e-12);
        assert!((s.b[(5, 0)] - 0.7 / 1.2).abs() < 1e-15);
        assert_eq!(s.a[(0, 0)], 0.0);
        assert_eq!((s.n(), s.m(), s.p()), (12, 4, 12));
        assert_eq!(s.h, [0, 2, 4]);
    }

    #[test]
    fn sparsity_counts() {
        let s = quad();
        assert_eq!(s.a.iter().filter(|v| **v != 0.0).count(), 14);
        assert_eq!(s.b.iter().filter(|v| **v != 0.0).count(), 4);
    }

    #[test]
    fn unit_lift_moves_only_vertical_velocity() {
        let s = quad();
        let (x1, _) = s.step(&DVector::zeros(12), &DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        for (k, v) in x1.iter().enumerate() {
            if k == 5 {
                assert!((v - 0.7 / 1.2).abs() < 1e-15);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn unit_velocity_step() {
        let s = quad();
        let mut x = DVector::zeros(12);
        x[1] = 1.0;
        let (x1, y) = s.step(&x, &DVector::zeros(4)).unwrap();
        assert_eq!(x1[0], 0.7);
        assert_eq!(x1[1], 1.0);
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_bad_params() {
        let p = QuadrotorParams { ix: 0.0, ..Default::default() };
        assert!(build_quadrotor(&p).is_err());
        let p = QuadrotorParams { ts: -0.1, ..Default::default() };
        assert!(build_quadrotor(&p).is_err());
    }

    #[test]
    fn step_checks_dimensions() {
        assert!(quad().step(&DVector::zeros(3), &DVector::zeros(4)).is_err());
    }

    #[test]
    fn zero_simulation_stays_zero() {
        let s = quad();
        let tr = s.simulate(&DVector::zeros(12), &vec![DVector::zeros(4); 104]).unwrap();
        assert_eq!(tr.len(), 104);
        assert!(tr.outputs.iter().all(|y| y.iter().all(|v| *v == 0.0)));
    }
}
