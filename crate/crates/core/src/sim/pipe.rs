//! Upwind finite-volume advection with heat loss to the ground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::physics::PhysConstants;

/// Geometry needed to advance one pipe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipeGeometry {
    pub length: f64,
    pub area: f64,
    pub heat_loss_coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipeState {
    /// Cell temperatures in flow order for the pipe's reference orientation, °C.
    pub cells: Vec<f64>,
    /// Actual cell length, m (pipe length / cell count).
    pub cell_length: f64,
}

impl PipeState {
    /// Uniform pipe at `temp` with `ceil(length / target_cell_length)` cells (at least one).
    pub fn uniform(length: f64, target_cell_length: f64, temp: f64) -> Self {
        let n = ((length / target_cell_length).ceil() as usize).max(1);
        PipeState {
            cells: vec![temp; n],
            cell_length: length / n as f64,
        }
    }

    pub fn outlet(&self) -> f64 {
        *self.cells.last().expect("pipe has at least one cell")
    }

    pub fn inlet_cell(&self) -> f64 {
        self.cells[0]
    }

    /// Water mass in one cell, kg.
    pub fn cell_mass(&self, geom: &PipeGeometry, c: &PhysConstants) -> f64 {
        c.rho * geom.area * self.cell_length
    }

    /// Loss conductance of one cell, W/K.
    pub fn cell_conductance(&self, geom: &PipeGeometry) -> f64 {
        geom.heat_loss_coeff * self.cell_length
    }

    /// Heat currently lost to the ground, W.
    pub fn heat_loss(&self, geom: &PipeGeometry, c: &PhysConstants) -> f64 {
        let h = self.cell_conductance(geom);
        self.cells.iter().map(|t| h * (t - c.t_ext)).sum()
    }

    /// Number of explicit sub-steps that keeps the update monotone over `dt`.
    pub fn substeps(&self, q: f64, dt: f64, geom: &PipeGeometry, c: &PhysConstants) -> usize {
        let m = self.cell_mass(geom, c);
        let rate = q / m + self.cell_conductance(geom) / (m * c.c_w);
        ((dt * rate).ceil() as usize).max(1)
    }

    /// One explicit Euler update of length `dt`; the caller guarantees the
    /// CFL-type bound. `reversed` advects from the last cell towards the first.
    pub(crate) fn advance(
        &mut self,
        q: f64,
        t_in: f64,
        dt: f64,
        geom: &PipeGeometry,
        c: &PhysConstants,
        reversed: bool,
    ) {
        let m = self.cell_mass(geom, c);
        let a = dt * q / m;
        let b = dt * self.cell_conductance(geom) / (m * c.c_w);
        let t_ext = c.t_ext;
        let n = self.cells.len();
        if !reversed {
            for k in (0..n).rev() {
                let up = if k == 0 { t_in } else { self.cells[k - 1] };
                let t = self.cells[k];
                self.cells[k] = t + a * (up - t) - b * (t - t_ext);
            }
        } else {
            for k in 0..n {
                let up = if k == n - 1 { t_in } else { self.cells[k + 1] };
                let t = self.cells[k];
                self.cells[k] = t + a * (up - t) - b * (t - t_ext);
            }
        }
    }

    pub(crate) fn outlet_dir(&self, reversed: bool) -> f64 {
        if reversed {
            self.cells[0]
        } else {
            self.outlet()
        }
    }
}

/// Advances a pipe by `dt` under flow `q` and inlet temperature `t_in`,
/// sub-stepping so that each explicit update stays monotone. Returns the
/// updated state and the outlet temperature.
pub fn pipe_step(
    p: &PipeState,
    q: f64,
    t_in: f64,
    dt: f64,
    geom: &PipeGeometry,
    c: &PhysConstants,
) -> Result<(PipeState, f64)> {
    if !t_in.is_finite() {
        return Err(Error::NonFinite(format!("pipe inlet temperature {t_in}")));
    }
    if q.is_nan() || q < 0.0 || dt.is_nan() || dt <= 0.0 {
        return Err(Error::Config(format!("pipe_step needs q >= 0 and dt > 0 (q={q}, dt={dt})")));
    }
    let mut next = p.clone();
    let n = p.substeps(q, dt, geom, c);
    let h = dt / n as f64;
    for _ in 0..n {
        next.advance(q, t_in, h, geom, c, false);
    }
    let out = next.outlet();
    Ok((next, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(loss: f64) -> PipeGeometry {
        PipeGeometry {
            length: 1000.0,
            area: 0.01,
            heat_loss_coeff: loss,
        }
    }

    #[test]
    fn no_flow_no_loss_is_frozen() {
        let c = PhysConstants::default();
        let mut p = PipeState::uniform(1000.0, 100.0, 50.0);
        p.cells[3] = 70.0;
        let (next, out) = pipe_step(&p, 0.0, 90.0, 300.0, &geom(0.0), &c).unwrap();
        assert_eq!(next, p);
        assert_eq!(out, p.outlet());
    }

    #[test]
    fn ground_temperature_is_a_fixed_point() {
        let c = PhysConstants::default();
        let p = PipeState::uniform(1000.0, 100.0, c.t_ext);
        for q in [0.0, 0.5, 3.0, 40.0] {
            let (next, out) = pipe_step(&p, q, c.t_ext, 300.0, &geom(2.0), &c).unwrap();
            assert!(next.cells.iter().all(|t| (*t - c.t_ext).abs() < 1e-12));
            assert!((out - c.t_ext).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_inlet_rejected() {
        let c = PhysConstants::default();
        let p = PipeState::uniform(100.0, 100.0, 50.0);
        assert!(matches!(
            pipe_step(&p, 1.0, f64::NAN, 10.0, &geom(0.0), &c),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cell_count_rounds_up() {
        let p = PipeState::uniform(561.2, 100.0, 0.0);
        assert_eq!(p.cells.len(), 6);
        assert!((p.cell_length * 6.0 - 561.2).abs() < 1e-12);
        assert_eq!(PipeState::uniform(30.0, 100.0, 0.0).cells.len(), 1);
    }
}
