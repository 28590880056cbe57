use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::LoadParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysConstants {
    /// Water specific heat, J/(kg·K).
    pub c_w: f64,
    /// Water density, kg/m³.
    pub rho: f64,
    /// Ground temperature around the buried pipes, °C.
    pub t_ext: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        PhysConstants {
            c_w: 4186.0,
            rho: 1000.0,
            t_ext: 10.0,
        }
    }
}

impl PhysConstants {
    pub fn check(&self) -> Result<()> {
        if !(self.c_w > 0.0 && self.rho > 0.0 && self.t_ext.is_finite()) {
            return Err(Error::Config(format!("invalid physical constants {self:?}")));
        }
        Ok(())
    }
}

/// Load output temperature: `T_s - P / (q c_w)`.
pub fn load_output_temp(t_supply: f64, power: f64, flow: f64, c: &PhysConstants) -> Result<f64> {
    if flow <= 0.0 || flow.is_nan() {
        return Err(Error::DegenerateFlow(flow));
    }
    Ok(t_supply - power / (flow * c.c_w))
}

/// Flow demanded by the local controller of a load so that its output
/// temperature sits at `t_ref`, clamped to the flow limits.
pub fn load_flow(t_supply: f64, power: f64, limits: &LoadParams, c: &PhysConstants) -> f64 {
    let lift = t_supply - limits.t_ref;
    let q = if power <= 0.0 {
        limits.q_min
    } else if lift <= 0.0 {
        limits.q_max
    } else {
        power / (c.c_w * lift)
    };
    q.clamp(limits.q_min, limits.q_max)
}

/// Heating station thermal power, W.
pub fn station_power(q0: f64, t0_supply: f64, t0_return: f64, c: &PhysConstants) -> f64 {
    c.c_w * q0 * (t0_supply - t0_return)
}
