use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// Continuous-time dynamics with their failure sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum System {
    /// Radial satellite model: `x1' = x2`, `x2' = -g/x1^2 + omega^2 x1 + u`.
    /// Failure when `x1 <= lower` or `x1 >= upper`.
    Satellite { gravity: f64, omega: f64, lower: f64, upper: f64 },
    /// Robot on a shelf `[0, L)` moving at `u`, falling at `L / fall_time`
    /// on `(-L, 0)`, stopped elsewhere. Failure at `x <= -L`.
    Shelf { length: f64, speed: f64, fall_time: f64 },
    /// The three-node example; it has no continuous flow.
    TwoState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub system: System,
    /// Zero-order-hold period in seconds.
    pub dt: f64,
    /// RK4 substeps per hold period.
    pub substeps: usize,
}

impl SystemSpec {
    pub fn satellite() -> Self {
        Self {
            system: System::Satellite { gravity: 10.0, omega: 0.1, lower: 1.0, upper: 15.0 },
            dt: 1.0,
            substeps: 10,
        }
    }

    pub fn shelf(length: f64, speed: f64, fall_time: f64, dt: f64) -> Self {
        Self { system: System::Shelf { length, speed, fall_time }, dt, substeps: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config(format!("hold period must be positive, got {}", self.dt));
        }
        if self.substeps == 0 {
            return config("substep count must be positive");
        }
        match self.system {
            System::Satellite { gravity, omega, lower, upper } => {
                if !(gravity > 0.0 && omega > 0.0) {
                    return config("satellite needs g > 0 and omega > 0");
                }
                if !(lower < upper) {
                    return config("satellite failure band needs lower < upper");
                }
            }
            System::Shelf { length, speed, fall_time } => {
                if !(length > 0.0 && speed > 0.0 && fall_time > 0.0) {
                    return config("shelf needs L, v and T_f positive");
                }
            }
            System::TwoState => {}
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self.system {
            System::Satellite { .. } => 2,
            System::Shelf { .. } | System::TwoState => 1,
        }
    }

    pub fn is_failure(&self, x: &[f64]) -> bool {
        match self.system {
            System::Satellite { lower, upper, .. } => x[0] <= lower || x[0] >= upper,
            System::Shelf { length, .. } => x[0] <= -length,
            System::TwoState => false,
        }
    }

    fn rhs(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self.system {
            System::Satellite { gravity, omega, .. } => {
                out[0] = x[1];
                out[1] = -gravity / (x[0] * x[0]) + omega * omega * x[0] + u[0];
            }
            // piecewise constant; only used through the exact flow below
            System::Shelf { .. } | System::TwoState => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    fn rk4_substep(&self, x: &mut [f64], u: &[f64], h: f64) {
        let n = x.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.rhs(x, u, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.rhs(&tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.rhs(&tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.rhs(&tmp, u, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Exact flow of the piecewise-constant shelf dynamics over `t` seconds.
    fn shelf_flow(length: f64, fall_time: f64, mut x: f64, u: f64, mut t: f64) -> f64 {
        let fall = length / fall_time;
        while t > 0.0 {
            if x <= -length || x >= length {
                break;
            }
            if x < 0.0 {
                let to_ground = (x + length) / fall;
                if to_ground <= t {
                    return -length;
                }
                return x - fall * t;
            }
            // x in [0, L)
            if u > 0.0 {
                let to_end = (length - x) / u;
                if to_end <= t {
                    return length;
                }
                return x + u * t;
            } else if u < 0.0 {
                let to_edge = x / -u;
                if to_edge >= t {
                    return x + u * t;
                }
                // past the ledge: the fall regime takes over
                t -= to_edge;
                x = -f64::MIN_POSITIVE;
            } else {
                return x;
            }
        }
        x
    }

    /// State after one hold period under constant control `u`.
    pub fn integrate_step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.integrate_hold(x, u, false)?.0)
    }

    /// Like [`integrate_step`](Self::integrate_step), but when `stop_on_failure`
    /// is set the flow is halted at the first substep boundary inside the
    /// failure set. The flag in the result reports whether that happened.
    pub(crate) fn integrate_hold(
        &self,
        x: &[f64],
        u: &[f64],
        stop_on_failure: bool,
    ) -> Result<(Vec<f64>, bool)> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { state: x.to_vec() });
        }
        match self.system {
            System::TwoState => config("the two-state example has no continuous flow"),
            System::Shelf { length, fall_time, .. } => {
                let y = Self::shelf_flow(length, fall_time, x[0], u[0], self.dt);
                let y = vec![y];
                let failed = stop_on_failure && self.is_failure(&y);
                Ok((y, failed))
            }
            System::Satellite { .. } => {
                let h = self.dt / self.substeps as f64;
                let mut y = x.to_vec();
                for _ in 0..self.substeps {
                    self.rk4_substep(&mut y, u, h);
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Integration { state: y });
                    }
                    if stop_on_failure && self.is_failure(&y) {
                        return Ok((y, true));
                    }
                }
                Ok((y, false))
            }
        }
    }
}
