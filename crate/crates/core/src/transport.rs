//! Upwind finite-difference discretization of the coupled ODE-PDE plant and
//! explicit time marching.
//!
//! Transport speeds are positive and the boundary condition sits at `xi = 0`,
//! so the spatial derivative is approximated with the first-order backward
//! (upwind) difference and the source terms are evaluated fully explicitly.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::model::{PlantState, SystemMatrices};

/// Spatial/temporal discretization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of spatial cells; the grid has `n + 1` nodes and `dxi = 1/n`.
    pub n: usize,
    /// Time step (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(n: usize, dt: f64, t_end: f64, mats: &SystemMatrices) -> Result<Self> {
        let spec = Self { n, dt, t_end };
        spec.validate(mats)?;
        Ok(spec)
    }

    /// Grid spacing `dxi`.
    pub fn dxi(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Courant number `max(lambda) * dt / dxi` of the explicit upwind scheme.
    pub fn cfl(&self, mats: &SystemMatrices) -> f64 {
        mats.lambda.max() * self.dt / self.dxi()
    }

    pub fn validate(&self, mats: &SystemMatrices) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter {
                field: "grid.n",
                message: format!("need at least 2 cells, got {}", self.n),
            });
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "grid.dt",
                message: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end.is_finite() && self.t_end > self.dt) {
            return Err(Error::InvalidParameter {
                field: "grid.t_end",
                message: format!("must exceed dt, got {}", self.t_end),
            });
        }
        let cfl = self.cfl(mats);
        if cfl > 1.0 {
            return Err(Error::CflViolation {
                cfl,
                n: self.n,
                dt: self.dt,
            });
        }
        Ok(())
    }

    /// Number of time steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Parametric steering input: per channel `delta_i(t) = offset + amplitude *
/// sin(frequency * t)`, all in radians. Channel 2 is forced to zero when the
/// model has no rear actuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringSpec {
    pub offset: [f64; 2],
    pub amplitude: [f64; 2],
    pub frequency: [f64; 2],
}

impl SteeringSpec {
    pub fn zero() -> Self {
        Self {
            offset: [0.0; 2],
            amplitude: [0.0; 2],
            frequency: [0.0; 2],
        }
    }

    /// Builds the spec, zeroing the rear channel when `chi = 0` and rejecting
    /// non-finite coefficients.
    pub fn new(
        offset: [f64; 2],
        amplitude: [f64; 2],
        frequency: [f64; 2],
        chi: u8,
    ) -> Result<Self> {
        for v in offset.iter().chain(&amplitude).chain(&frequency) {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    field: "steering",
                    message: format!("coefficients must be finite, got {v}"),
                });
            }
        }
        let mut spec = Self {
            offset,
            amplitude,
            frequency,
        };
        if chi == 0 {
            spec.offset[1] = 0.0;
            spec.amplitude[1] = 0.0;
            spec.frequency[1] = 0.0;
        }
        Ok(spec)
    }

    pub fn eval(&self, t: f64) -> Vector2<f64> {
        Vector2::new(
            self.offset[0] + self.amplitude[0] * (self.frequency[0] * t).sin(),
            self.offset[1] + self.amplitude[1] * (self.frequency[1] * t).sin(),
        )
    }
}

/// Decimated snapshots of one component of a distributed state, for surface
/// plots: `rows[k][j]` is the value at time `times[k]` and node `j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

/// Time-indexed record of a simulation run, decimated to the logging period.
#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    /// Seed recorded for reproducibility (0 when no noise was involved).
    pub seed: u64,
    pub t: Vec<f64>,
    /// Lumped plant state per log instant.
    pub x: Vec<Vector2<f64>>,
    pub sideslip: Vec<f64>,
    /// Integrated front/rear tire forces (N).
    pub forces: Vec<Vector2<f64>>,
    pub steering: Vec<Vector2<f64>>,
    /// Clean output `[r, a_y]`.
    pub y_clean: Vec<Vector2<f64>>,
    /// Measured (noisy, sampled-and-held) output.
    pub y_meas: Vec<Vector2<f64>>,
    /// Plant state norm `||(X, z)||`.
    pub plant_norm: Vec<f64>,
    /// Observer estimates, present for closed-loop runs.
    pub x_hat: Vec<Vector2<f64>>,
    pub sideslip_hat: Vec<f64>,
    pub observer_norm: Vec<f64>,
    /// Error norms `||X~||_2`, `||z~||_L2`, `||(X~, z~)||`.
    pub err_x_norm: Vec<f64>,
    pub err_z_norm: Vec<f64>,
    pub err_total_norm: Vec<f64>,
    /// Decimated snapshots of the front-tire deformation `z_1(., t)`.
    pub z1_snapshots: Snapshots,
    /// Decimated snapshots of the front-tire deformation error.
    pub z1_err_snapshots: Snapshots,
    /// Time at which a non-finite state entry was first detected, if any.
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn has_observer(&self) -> bool {
        !self.x_hat.is_empty()
    }
}

/// Logging configuration for simulation traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSpec {
    /// Period between logged rows (s); must be a multiple of `dt`.
    pub period: f64,
    /// Period between distributed-state snapshots (s); 0 disables snapshots.
    pub snapshot_period: f64,
}

impl LogSpec {
    pub fn new(period: f64, snapshot_period: f64, dt: f64) -> Result<Self> {
        let spec = Self {
            period,
            snapshot_period,
        };
        spec.stride(dt)?;
        spec.snapshot_stride(dt)?;
        Ok(spec)
    }

    pub fn stride(&self, dt: f64) -> Result<usize> {
        period_to_stride(self.period, dt, "log.period")
    }

    pub fn snapshot_stride(&self, dt: f64) -> Result<usize> {
        if self.snapshot_period == 0.0 {
            return Ok(0);
        }
        period_to_stride(self.snapshot_period, dt, "log.snapshot_period")
    }
}

impl Default for LogSpec {
    fn default() -> Self {
        Self {
            period: 1e-3,
            snapshot_period: 1e-2,
        }
    }
}

pub(crate) fn period_to_stride(period: f64, dt: f64, field: &'static str) -> Result<usize> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidParameter {
            field,
            message: format!("must be positive, got {period}"),
        });
    }
    let ratio = period / dt;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidParameter {
            field,
            message: format!("{period} is not an integer multiple of dt = {dt}"),
        });
    }
    Ok(stride as usize)
}

/// Time derivative of the plant state under the first-order upwind scheme.
///
/// Node 0 carries the boundary condition and its derivative is forced to
/// zero; every other node sees the backward difference plus the (spatially
/// uniform) source `K2 z(1) + A2 X + B delta`.
pub fn plant_rhs(
    state: &PlantState,
    delta: Vector2<f64>,
    mats: &SystemMatrices,
) -> (Vector2<f64>, Vec<Vector2<f64>>) {
    let n = state.cells();
    let inv_dxi = n as f64;
    let forces = mats.axle_forces(&state.z);
    let xdot = mats.a1 * state.x + mats.g * forces;
    let source = mats.boundary_coupling(&state.z) + mats.a2 * state.x + mats.b * delta;

    let mut zdot = vec![Vector2::zeros(); n + 1];
    for j in 1..=n {
        let upwind = (state.z[j] - state.z[j - 1]) * inv_dxi;
        zdot[j] = Vector2::new(
            -mats.lambda.x * upwind.x + source.x,
            -mats.lambda.y * upwind.y + source.y,
        );
    }
    (xdot, zdot)
}

/// One explicit-Euler step, updating the state in place and re-imposing the
/// boundary condition exactly. CFL validity is the caller's responsibility
/// (checked once at configuration time).
pub fn step(state: &mut PlantState, delta: Vector2<f64>, dt: f64, mats: &SystemMatrices) {
    let n = state.cells();
    let inv_dxi = n as f64;
    let forces = mats.axle_forces(&state.z);
    let xdot = mats.a1 * state.x + mats.g * forces;
    let source = mats.boundary_coupling(&state.z) + mats.a2 * state.x + mats.b * delta;

    // Descending sweep lets the update run in place: node j reads the old
    // value of node j-1.
    for j in (1..=n).rev() {
        let upwind = (state.z[j] - state.z[j - 1]) * inv_dxi;
        state.z[j] += dt
            * Vector2::new(
                -mats.lambda.x * upwind.x + source.x,
                -mats.lambda.y * upwind.y + source.y,
            );
    }
    state.z[0] = Vector2::zeros();
    state.x += dt * xdot;
}

/// `L^2(0, 1)` norm of a grid function via trapezoid quadrature.
pub fn l2_norm(z: &[Vector2<f64>]) -> f64 {
    let dxi = 1.0 / (z.len() - 1) as f64;
    let mut sum = 0.5 * (z[0].norm_squared() + z[z.len() - 1].norm_squared());
    for node in &z[1..z.len() - 1] {
        sum += node.norm_squared();
    }
    (sum * dxi).sqrt()
}

/// Norm of the product state: `sqrt(||X||_2^2 + ||z||_L2^2)`.
pub fn state_norm(state: &PlantState) -> f64 {
    composite_norm(state.x, &state.z)
}

/// Same norm for a lumped/distributed pair held separately.
pub fn composite_norm(x: Vector2<f64>, z: &[Vector2<f64>]) -> f64 {
    let dxi = 1.0 / (z.len() - 1) as f64;
    let mut sum = 0.5 * (z[0].norm_squared() + z[z.len() - 1].norm_squared());
    for node in &z[1..z.len() - 1] {
        sum += node.norm_squared();
    }
    (x.norm_squared() + sum * dxi).sqrt()
}

/// Projects an initial condition onto the boundary condition `z(0) = 0`,
/// returning whether a nonzero boundary value had to be zeroed. Incompatible
/// initial data is legitimate for mild solutions; the projection is reported
/// so callers can warn.
pub fn project_boundary(state: &mut PlantState) -> bool {
    let violated = state.z[0] != Vector2::zeros();
    state.z[0] = Vector2::zeros();
    violated
}

const DIVERGENCE_CHECK_STRIDE: usize = 1000;

/// Simulates the open-loop plant, logging at the decimation period.
///
/// A non-finite state aborts the march; the abort time is recorded on the
/// trace rather than treated as an error, since divergence is the expected
/// outcome for unstable configurations.
pub fn simulate_open_loop(
    ic: &PlantState,
    steering: &SteeringSpec,
    grid: &GridSpec,
    log: &LogSpec,
    mats: &SystemMatrices,
) -> Result<SimTrace> {
    grid.validate(mats)?;
    if ic.cells() != grid.n {
        return Err(Error::InvalidInput {
            context: "simulate_open_loop",
            message: format!("initial condition has {} cells, grid has {}", ic.cells(), grid.n),
        });
    }
    let log_stride = log.stride(grid.dt)?;
    let snap_stride = log.snapshot_stride(grid.dt)?;

    let mut state = ic.clone();
    project_boundary(&mut state);

    let mut trace = SimTrace::default();
    let steps = grid.steps();
    for step_idx in 0..=steps {
        let t = step_idx as f64 * grid.dt;
        if step_idx % DIVERGENCE_CHECK_STRIDE == 0 && !state.is_finite() {
            trace.diverged_at = Some(t);
            break;
        }
        if step_idx % log_stride == 0 {
            let delta = steering.eval(t);
            log_plant_row(&mut trace, t, &state, delta, mats);
        }
        if snap_stride > 0 && step_idx % snap_stride == 0 {
            trace.z1_snapshots.times.push(t);
            trace
                .z1_snapshots
                .rows
                .push(state.z.iter().map(|v| v.x).collect());
        }
        if step_idx == steps {
            break;
        }
        let delta = steering.eval(t);
        step(&mut state, delta, grid.dt, mats);
    }
    Ok(trace)
}

fn log_plant_row(
    trace: &mut SimTrace,
    t: f64,
    state: &PlantState,
    delta: Vector2<f64>,
    mats: &SystemMatrices,
) {
    let y = mats.measure(state.x, &state.z);
    trace.t.push(t);
    trace.x.push(state.x);
    trace.sideslip.push(mats.sideslip(state.x));
    trace.forces.push(mats.axle_forces(&state.z));
    trace.steering.push(delta);
    trace.y_clean.push(y);
    trace.y_meas.push(y);
    trace.plant_norm.push(state_norm(state));
}

/// Simulates the distributed subsystem alone (lumped state frozen at zero,
/// no steering), returning `(t, ||z||_L2)` samples. Used to exercise the
/// exponential stability of the transport subsystem.
pub fn simulate_pde_decay(
    z0: &[Vector2<f64>],
    grid: &GridSpec,
    log_period: f64,
    mats: &SystemMatrices,
) -> Result<Vec<(f64, f64)>> {
    grid.validate(mats)?;
    let stride = period_to_stride(log_period, grid.dt, "log.period")?;
    let mut state = PlantState {
        x: Vector2::zeros(),
        z: z0.to_vec(),
    };
    project_boundary(&mut state);

    let mut out = Vec::new();
    let steps = grid.steps();
    for step_idx in 0..=steps {
        let t = step_idx as f64 * grid.dt;
        if step_idx % stride == 0 {
            out.push((t, l2_norm(&state.z)));
        }
        if step_idx == steps {
            break;
        }
        step(&mut state, Vector2::zeros(), grid.dt, mats);
        state.x = Vector2::zeros();
    }
    Ok(out)
}
