//! Multi-branch complex Lambert W evaluation and the stability certificate
//! for the inverse output transfer.
//!
//! The W function inverts `w -> w e^w`. Halley iteration refines an
//! asymptotic-logarithm initializer on every branch; near the branch point
//! `-1/e` the square-root expansion seeds branches 0 and -1. The zeros of
//! the per-axle determinant factors sit at `s = lambda_i (W_k(-1/e) + 1)`,
//! and the certificate combines those zero locations with a right-half-plane
//! scan of the closed-form determinant.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::freq::{axle_det_factor, det_c_closed};
use crate::model::SystemMatrices;

/// Largest admitted branch index magnitude.
pub const MAX_BRANCH_INDEX: i32 = 50;

/// Validated branch index for the Lambert W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchIndex(i32);

impl BranchIndex {
    pub fn new(k: i32) -> Result<Self> {
        Self::with_max(k, MAX_BRANCH_INDEX)
    }

    pub fn with_max(k: i32, k_max: i32) -> Result<Self> {
        if k.abs() > k_max {
            return Err(Error::InvalidParameter {
                field: "branch index",
                message: format!("|k| must not exceed {k_max}, got {k}"),
            });
        }
        Ok(Self(k))
    }

    pub fn get(self) -> i32 {
        self.0
    }
}

const BRANCH_POINT: f64 = -std::f64::consts::E.recip(); // -1/e

fn initial_guess(w: Complex64, k: i32) -> Complex64 {
    let two_pi_k = Complex64::new(0.0, 2.0 * PI * f64::from(k));

    // Square-root expansion around the branch point for the two branches
    // that meet there.
    if (k == 0 || k == -1) && (w - BRANCH_POINT).norm() < 0.3 {
        let p = (2.0 * (std::f64::consts::E * w + 1.0)).sqrt();
        let p = if k == 0 { p } else { -p };
        return Complex64::new(-1.0, 0.0) + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    }

    // Small-argument expansion on the principal branch, where log(w) would
    // make a poor seed.
    if k == 0 && w.norm() < 1.0 {
        // Pade(3,2) of the series around 0
        let num = 1.0 + 2.331_643_981_597_124 * w + 1.812_187_885_639_363_4 * w * w
            + 0.1 * w * w * w;
        let den = 1.0 + 3.331_643_981_597_124 * w + 1.812_187_885_639_363_4 * w * w;
        return w * num / den;
    }

    // Asymptotic initializer log(w) + 2 pi i k - log(log(w) + 2 pi i k).
    let l = w.ln() + two_pi_k;
    if l.norm() < 1e-12 {
        return l; // w ~ 1 on the principal branch; Halley finishes the job
    }
    l - l.ln()
}

/// Evaluates branch `k` of the Lambert W function at `w`.
///
/// Refines with Halley's method to a defining-equation residual of
/// `1e-13 * max(1, |w|)` and verifies the branch by strip membership of the
/// imaginary part. `w = 0` is only valid on the principal branch; the exact
/// branch-point value -1 is returned at `w = -1/e` for branches 0 and -1.
pub fn lambert_w(k: BranchIndex, w: Complex64) -> Result<Complex64> {
    let k = k.get();
    if !w.re.is_finite() || !w.im.is_finite() {
        return Err(Error::InvalidInput {
            context: "lambert_w",
            message: format!("argument must be finite, got {w}"),
        });
    }
    if w.norm() == 0.0 {
        if k == 0 {
            return Ok(Complex64::ZERO);
        }
        return Err(Error::InvalidInput {
            context: "lambert_w",
            message: format!("branch {k} has a logarithmic singularity at w = 0"),
        });
    }
    if (k == 0 || k == -1) && (w - BRANCH_POINT).norm() < 1e-300 {
        return Ok(Complex64::new(-1.0, 0.0));
    }

    let tol = 1e-13 * w.norm().max(1.0);
    let mut z = initial_guess(w, k);
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let ez = z.exp();
        let f = z * ez - w;
        residual = f.norm();
        if residual <= tol {
            break;
        }
        // Halley step: f' = e^z (1 + z), f'' = e^z (2 + z)
        let zp1 = z + 1.0;
        let denom = ez * zp1 - (z + 2.0) * f / (2.0 * zp1);
        if denom.norm() < 1e-300 {
            z -= 0.5 * f / (ez * zp1);
            continue;
        }
        let step = f / denom;
        // Damp absurd steps from poor seeds far from the solution.
        z -= if step.norm() > 10.0 {
            step * (10.0 / step.norm())
        } else {
            step
        };
    }
    if residual > tol {
        return Err(Error::NonConvergence {
            context: "lambert_w Halley iteration",
            iterations: 100,
            residual,
        });
    }

    // Branch verification: Im(W_k) lies in a horizontal strip around
    // 2 pi k. The half-width is padded because the exact strip boundaries
    // are curved; a wrong branch lands a full 2 pi away.
    let center = 2.0 * PI * f64::from(k);
    if (z.im - center).abs() > PI + 0.1 {
        return Err(Error::NonConvergence {
            context: "lambert_w branch verification",
            iterations: 100,
            residual: (z.im - center).abs(),
        });
    }
    Ok(z)
}

/// Zeros of the numerator factor of `h_i`: solutions of
/// `s/lambda + exp(-s/lambda) - 1 = 0` at `s = lambda (W_k(-1/e) + 1)` for
/// the requested branches. Branches 0 and -1 are excluded by contract: they
/// reproduce the removable point `s = 0`.
pub fn axle_factor_zeros(
    axle: usize,
    branches: impl IntoIterator<Item = i32>,
    mats: &SystemMatrices,
) -> Result<Vec<Complex64>> {
    let lambda = match axle {
        0 => mats.lambda.x,
        1 => mats.lambda.y,
        _ => panic!("axle index must be 0 or 1"),
    };
    let w_arg = Complex64::new(BRANCH_POINT, 0.0);
    let mut zeros = Vec::new();
    for k in branches {
        if k == 0 || k == -1 {
            return Err(Error::InvalidInput {
                context: "axle_factor_zeros",
                message: format!("branch {k} reproduces the removable zero at s = 0"),
            });
        }
        let w = lambert_w(BranchIndex::new(k)?, w_arg)?;
        let s = lambda * (w + 1.0);
        // verify against the defining transcendental equation
        let u = s / lambda;
        let residual = (u + (-u).exp() - 1.0).norm();
        if residual > 1e-9 {
            return Err(Error::NonConvergence {
                context: "axle factor zero verification",
                iterations: 0,
                residual,
            });
        }
        zeros.push(s);
    }
    Ok(zeros)
}

/// Default branch list for zero computations: `1..=k_max` and
/// `-k_max..=-2`, matching the excluded set {0, -1}.
pub fn default_branches(k_max: i32) -> Vec<i32> {
    let mut ks: Vec<i32> = (1..=k_max).collect();
    ks.extend((-k_max..=-2).rev());
    ks
}

/// One computed zero of a per-axle factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorZero {
    pub axle: usize,
    pub branch: i32,
    pub location: Complex64,
    /// Residual of the defining transcendental equation at the zero.
    pub residual: f64,
}

/// Certificate that the inverse output transfer has no unstable poles.
///
/// The analytic zero computation is the primary evidence; the
/// right-half-plane determinant scan and the positive-real spot checks
/// corroborate it, since a grid alone cannot prove absence of zeros.
#[derive(Debug, Clone)]
pub struct PoleCertificate {
    pub zeros: Vec<FactorZero>,
    /// Largest real part over all computed zeros (None when no branches
    /// were requested).
    pub max_real_part: Option<f64>,
    /// Smallest |det C(s)| over the right-half-plane scan grid.
    pub scan_min: f64,
    /// Scan threshold actually applied: `scan_floor_rel * |det C(0)|`.
    pub scan_threshold: f64,
    /// Static determinant value |det C(0)|, checked positive.
    pub det_at_zero: f64,
    /// Smallest Re(h_i) over the random right-half-plane spot checks.
    pub spot_min_real: f64,
    pub certified: bool,
    /// Location of the first failed check, when not certified.
    pub offending: Option<Complex64>,
}

/// Scan configuration for [`certify_no_unstable_poles`].
#[derive(Debug, Clone, Copy)]
pub struct ScanSpec {
    /// Log-spaced magnitudes cover [mag_min, mag_max] on each axis.
    pub mag_min: f64,
    pub mag_max: f64,
    /// Points per axis decade direction.
    pub points_per_axis: usize,
    /// Relative floor applied to |det C(0)|.
    pub floor_rel: f64,
    /// Number of random spot checks of Re(h_i) > 0.
    pub spot_checks: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            mag_min: 1e-2,
            mag_max: 1e4,
            points_per_axis: 30,
            floor_rel: 1e-3,
            spot_checks: 1000,
        }
    }
}

/// Computes the per-axle factor zeros for `1 <= |k| <= k_max` (excluding the
/// removable branches), asserts their real parts negative, scans |det C| on
/// a right-half-plane grid against a positive floor, and spot-checks
/// `Re(h_i) > 0` at random right-half-plane points.
pub fn certify_no_unstable_poles(
    mats: &SystemMatrices,
    k_max: i32,
    scan: &ScanSpec,
) -> Result<PoleCertificate> {
    let mut zeros = Vec::new();
    let mut max_real: Option<f64> = None;
    let mut offending = None;

    for axle in 0..2 {
        for k in default_branches(k_max) {
            let s = axle_factor_zeros(axle, [k], mats)?[0];
            let u = s / if axle == 0 { mats.lambda.x } else { mats.lambda.y };
            let residual = (u + (-u).exp() - 1.0).norm();
            zeros.push(FactorZero {
                axle,
                branch: k,
                location: s,
                residual,
            });
            max_real = Some(max_real.map_or(s.re, |m: f64| m.max(s.re)));
            if s.re >= 0.0 && offending.is_none() {
                offending = Some(s);
            }
        }
    }

    // Right-half-plane scan of the closed-form determinant.
    let det0 = det_c_closed(Complex64::ZERO, mats).norm();
    let threshold = scan.floor_rel * det0;
    let mut scan_min = f64::INFINITY;
    let mut axis = vec![0.0];
    axis.extend(crate::freq::log_omega_grid(
        scan.mag_min,
        scan.mag_max,
        scan.points_per_axis,
    ));
    for &re in &axis {
        for &im in &axis {
            for sign in [1.0, -1.0] {
                let s = Complex64::new(re, sign * im);
                let d = det_c_closed(s, mats).norm();
                if d < scan_min {
                    scan_min = d;
                    if d <= threshold && offending.is_none() {
                        offending = Some(s);
                    }
                }
            }
        }
    }

    // Spot checks of the positive-real property of the factors.
    let mut spot_min_real = f64::INFINITY;
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..scan.spot_checks {
        let mag = 10f64.powf(-2.0 + next() * 6.0);
        let phase = (next() - 0.5) * (PI - 1e-3);
        let s = Complex64::from_polar(mag, phase); // Re(s) > 0
        for axle in 0..2 {
            let re = axle_det_factor(s, axle, mats).re;
            if re < spot_min_real {
                spot_min_real = re;
                if re <= 0.0 && offending.is_none() {
                    offending = Some(s);
                }
            }
        }
    }

    let zeros_ok = max_real.is_none_or(|m| m < 0.0);
    let certified = zeros_ok && det0 > 0.0 && scan_min > threshold && spot_min_real > 0.0;
    Ok(PoleCertificate {
        zeros,
        max_real_part: max_real,
        scan_min,
        scan_threshold: threshold,
        det_at_zero: det0,
        spot_min_real,
        certified,
        offending: if certified { None } else { offending },
    })
}

impl PoleCertificate {
    /// Human-readable report.
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str("inverse output transfer pole certificate\n");
        out.push_str(&format!(
            "verdict: {}\n",
            if self.certified { "certified" } else { "NOT certified" }
        ));
        match self.max_real_part {
            Some(m) => out.push_str(&format!(
                "computed factor zeros: {} (max real part {:.6e})\n",
                self.zeros.len(),
                m
            )),
            None => out.push_str("computed factor zeros: none (scan-only corroboration)\n"),
        }
        out.push_str(&format!(
            "|det C(0)| = {:.6e}; right-half-plane scan min |det C| = {:.6e} (threshold {:.6e})\n",
            self.det_at_zero, self.scan_min, self.scan_threshold
        ));
        out.push_str(&format!(
            "spot-check min Re(h_i) over right half-plane = {:.6e}\n",
            self.spot_min_real
        ));
        if let Some(s) = self.offending {
            out.push_str(&format!("first offending location: {s}\n"));
        }
        out
    }

    /// Machine-readable CSV of the zero locations.
    pub fn zeros_csv(&self) -> String {
        let mut out = String::from("axle,branch,re,im,residual\n");
        for z in &self.zeros {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                z.axle + 1,
                z.branch,
                z.location.re,
                z.location.im,
                z.residual
            ));
        }
        out
    }
}
