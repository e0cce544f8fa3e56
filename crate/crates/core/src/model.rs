//! Physical parameters, constant system matrices, coupling operators and
//! output maps of the single-track vehicle with distributed tire deformation.
//!
//! The lumped state is `X = [v_y, r]` (lateral speed, yaw rate). The
//! distributed state `z(xi, t)` holds the lateral bristle deformation of the
//! front and rear contact patches on the nondimensional coordinate
//! `xi in [0, 1]`, sampled at `N + 1` uniform nodes with `z(0) = 0`.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

/// Physical constants of the vehicle and tire model.
///
/// `psi_i = 1 - phi_i` is always derived, never stored, so the structural
/// constraint `phi_i + psi_i = 1` cannot be violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Longitudinal speed (m/s), constant during a run.
    pub v_x: f64,
    /// Vehicle mass (kg).
    pub m: f64,
    /// Yaw moment of inertia (kg m^2).
    pub i_z: f64,
    /// Front axle distance from the center of gravity (m).
    pub l_1: f64,
    /// Rear axle distance from the center of gravity (m).
    pub l_2: f64,
    /// Front tire vertical load (N).
    pub f_z1: f64,
    /// Rear tire vertical load (N).
    pub f_z2: f64,
    /// Front contact patch length (m).
    pub cp_1: f64,
    /// Rear contact patch length (m).
    pub cp_2: f64,
    /// Front normalized micro-stiffness (1/m).
    pub sigma_1: f64,
    /// Rear normalized micro-stiffness (1/m).
    pub sigma_2: f64,
    /// Front carcass structural parameter, in (0, 1].
    pub phi_1: f64,
    /// Rear carcass structural parameter, in (0, 1].
    pub phi_2: f64,
    /// Rear steering actuation flag (0 or 1).
    pub chi: u8,
}

impl VehicleParams {
    /// Reference parameter set used throughout the test scenarios.
    pub fn reference() -> Self {
        Self {
            v_x: 50.0,
            m: 1300.0,
            i_z: 2000.0,
            l_1: 1.4,
            l_2: 1.0,
            f_z1: 2660.0,
            f_z2: 3720.0,
            cp_1: 0.1,
            cp_2: 0.1,
            sigma_1: 263.0,
            sigma_2: 242.0,
            phi_1: 0.92,
            phi_2: 0.92,
            chi: 0,
        }
    }

    /// Derived structural parameters `psi_i = 1 - phi_i`.
    pub fn psi(&self) -> (f64, f64) {
        (1.0 - self.phi_1, 1.0 - self.phi_2)
    }

    /// Validates every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_x", self.v_x),
            ("m", self.m),
            ("i_z", self.i_z),
            ("l_1", self.l_1),
            ("l_2", self.l_2),
            ("f_z1", self.f_z1),
            ("f_z2", self.f_z2),
            ("cp_1", self.cp_1),
            ("cp_2", self.cp_2),
            ("sigma_1", self.sigma_1),
            ("sigma_2", self.sigma_2),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    message: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        for (field, value) in [("phi_1", self.phi_1), ("phi_2", self.phi_2)] {
            if !(value.is_finite() && value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidParameter {
                    field,
                    message: format!("must lie in (0, 1], got {value}"),
                });
            }
        }
        if self.chi > 1 {
            return Err(Error::InvalidParameter {
                field: "chi",
                message: format!("must be 0 or 1, got {}", self.chi),
            });
        }
        Ok(())
    }
}

/// Constant matrices of the coupled ODE-PDE model, built once from validated
/// parameters and shared read-only by every downstream module.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    /// Lumped-state drift; exact sparsity `[[0, -v_x], [0, 0]]`.
    pub a1: Matrix2<f64>,
    /// Slip-to-deflection forcing of the distributed state.
    pub a2: Matrix2<f64>,
    /// Force-to-lumped-acceleration map.
    pub g: Matrix2<f64>,
    /// Steering input map; column 2 is zero when `chi = 0`.
    pub b: Matrix2<f64>,
    /// Diagonal transport speeds `lambda_i = v_x / L_i` (1/s).
    pub lambda: Vector2<f64>,
    /// Diagonal integral-coupling weights `diag(F_zi sigma_i)` (N/m).
    pub k1: Vector2<f64>,
    /// Diagonal boundary-coupling weights `v_x diag(psi_i / L_i)` (1/s).
    pub k2: Vector2<f64>,
    /// Yaw-rate output row.
    pub c1: RowVector2<f64>,
    /// Force-to-lateral-acceleration output row.
    pub c2: RowVector2<f64>,
    /// Static observer injection gain `[v_x, 0]^T`.
    pub l_gain: Vector2<f64>,
    /// Copy of the validated parameters the matrices were built from.
    pub params: VehicleParams,
}

impl SystemMatrices {
    /// Builds every constant matrix of the model. Pure and deterministic;
    /// rejects invalid parameters eagerly so downstream code can assume
    /// validity.
    pub fn from_params(params: VehicleParams) -> Result<Self> {
        params.validate()?;
        let (psi_1, psi_2) = params.psi();
        let chi = f64::from(params.chi);

        let a1 = Matrix2::new(0.0, -params.v_x, 0.0, 0.0);
        let a2 = 2.0
            * Matrix2::new(
                params.phi_1,
                params.phi_1 * params.l_1,
                params.phi_2,
                -params.phi_2 * params.l_2,
            );
        let g = -Matrix2::new(
            1.0 / params.m,
            1.0 / params.m,
            params.l_1 / params.i_z,
            -params.l_2 / params.i_z,
        );
        let b = -2.0 * params.v_x * Matrix2::new(params.phi_1, 0.0, 0.0, chi * params.phi_2);
        let lambda = Vector2::new(params.v_x / params.cp_1, params.v_x / params.cp_2);
        let k1 = Vector2::new(params.f_z1 * params.sigma_1, params.f_z2 * params.sigma_2);
        let k2 = params.v_x * Vector2::new(psi_1 / params.cp_1, psi_2 / params.cp_2);
        let c1 = RowVector2::new(0.0, 1.0);
        let c2 = -RowVector2::new(1.0 / params.m, 1.0 / params.m);
        let l_gain = Vector2::new(params.v_x, 0.0);

        Ok(Self {
            a1,
            a2,
            g,
            b,
            lambda,
            k1,
            k2,
            c1,
            c2,
            l_gain,
            params,
        })
    }

    /// Integral coupling operator: `K1`-weighted composite-trapezoid
    /// quadrature of the grid function over `[0, 1]`. The result is the
    /// vector of front/rear lateral tire forces (N) entering the lumped
    /// dynamics through `g`.
    pub fn axle_forces(&self, z: &[Vector2<f64>]) -> Vector2<f64> {
        weighted_trapezoid(z, self.k1)
    }

    /// Boundary coupling operator: `K2 * z(1)`.
    pub fn boundary_coupling(&self, z: &[Vector2<f64>]) -> Vector2<f64> {
        let tail = z[z.len() - 1];
        Vector2::new(self.k2.x * tail.x, self.k2.y * tail.y)
    }

    /// Measured output `Y = [r, a_y]`: yaw rate from the lumped state and
    /// lateral acceleration from the integrated tire forces.
    pub fn measure(&self, x: Vector2<f64>, z: &[Vector2<f64>]) -> Vector2<f64> {
        let forces = self.axle_forces(z);
        Vector2::new((self.c1 * x).x, (self.c2 * forces).x)
    }

    /// Sideslip angle `beta = v_y / v_x` (rad).
    pub fn sideslip(&self, x: Vector2<f64>) -> f64 {
        x.x / self.params.v_x
    }
}

/// Composite-trapezoid quadrature of a grid function on [0, 1], each
/// component weighted by the corresponding diagonal entry of `weights`.
/// Exact for grid functions constant or linear in `xi`.
pub fn weighted_trapezoid(z: &[Vector2<f64>], weights: Vector2<f64>) -> Vector2<f64> {
    assert!(z.len() >= 2, "quadrature requires at least two nodes");
    let dxi = 1.0 / (z.len() - 1) as f64;
    let mut sum = 0.5 * (z[0] + z[z.len() - 1]);
    for node in &z[1..z.len() - 1] {
        sum += *node;
    }
    Vector2::new(weights.x * sum.x * dxi, weights.y * sum.y * dxi)
}

/// Lumped plus distributed state of the plant (or of an observer copy).
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Lumped state `[v_y (m/s), r (rad/s)]`.
    pub x: Vector2<f64>,
    /// Distributed state at `N + 1` uniform nodes; node 0 is pinned to zero.
    pub z: Vec<Vector2<f64>>,
}

impl PlantState {
    /// Zero state on a grid with `n` cells (`n + 1` nodes).
    pub fn zero(n: usize) -> Self {
        Self {
            x: Vector2::zeros(),
            z: vec![Vector2::zeros(); n + 1],
        }
    }

    /// State with the given lumped vector and a spatially constant
    /// distributed profile. The boundary node is projected to zero to
    /// satisfy `z(0) = 0`; callers that need the unprojected profile for
    /// norms should build `z` directly.
    pub fn with_constant_profile(x: Vector2<f64>, profile: Vector2<f64>, n: usize) -> Self {
        let mut z = vec![profile; n + 1];
        z[0] = Vector2::zeros();
        Self { x, z }
    }

    /// Number of spatial cells of the grid this state lives on.
    pub fn cells(&self) -> usize {
        self.z.len() - 1
    }

    /// True when every entry of the state is finite.
    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.z.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }
}
