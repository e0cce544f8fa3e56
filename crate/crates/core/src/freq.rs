//! Closed-form Laplace-domain analysis of the transport subsystem: the
//! force/state transfer matrix, the output map and its inverse, the designed
//! injection gain, and grid-based H-infinity norm estimation.
//!
//! Every Laplace object here is diagonal or built from diagonal factors
//! (transport speeds and coupling weights are diagonal), so all evaluation is
//! componentwise closed-form. Removable singularities at `s = 0` are handled
//! by series fallbacks to avoid catastrophic cancellation.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::SystemMatrices;

/// `(1 - exp(-u)) / u`, the normalized transport propagator integral.
/// Series fallback below |u| = 1e-6 avoids cancellation; value 1 at u = 0.
pub fn g_factor(u: Complex64) -> Complex64 {
    if u.norm() < 1e-6 {
        // 1 - u/2 + u^2/6; truncation below 1e-19 in this range
        Complex64::new(1.0, 0.0) - u / 2.0 + u * u / 6.0
    } else {
        (Complex64::new(1.0, 0.0) - (-u).exp()) / u
    }
}

/// `(u - 1 + exp(-u)) / u^2`, the doubly integrated propagator factor.
/// The cancellation here is quadratic, so the series region is wider than
/// for `g_factor`; value 1/2 at u = 0.
pub fn q_factor(u: Complex64) -> Complex64 {
    if u.norm() < 0.05 {
        // sum_{k>=0} (-u)^k / (k+2)!, truncated after u^6 (error < 1e-14)
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for k in 1..=6u32 {
            term *= -u / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (u - 1.0 + (-u).exp()) / (u * u)
    }
}

/// Integrated transport propagator `Gamma(xi, s)`: diagonal with entries
/// `(lambda_i / s)(1 - exp(-s xi / lambda_i))`, equal to `xi` at `s = 0`.
pub fn propagator_integral(xi: f64, s: Complex64, mats: &SystemMatrices) -> Matrix2<Complex64> {
    debug_assert!((0.0..=1.0).contains(&xi));
    let d1 = xi * g_factor(s / mats.lambda.x * xi);
    let d2 = xi * g_factor(s / mats.lambda.y * xi);
    Matrix2::new(d1, Complex64::ZERO, Complex64::ZERO, d2)
}

/// Diagonal entries of `Theta_1(s) = (K1 Gamma)(s) Lambda^{-1}`.
pub fn theta1_diag(s: Complex64, mats: &SystemMatrices) -> Vector2<Complex64> {
    Vector2::new(
        mats.k1.x * q_factor(s / mats.lambda.x) / mats.lambda.x,
        mats.k1.y * q_factor(s / mats.lambda.y) / mats.lambda.y,
    )
}

/// Diagonal entries of `Theta_2(s) = (K2 Gamma)(s) Lambda^{-1}`; reduces to
/// `psi_i g(s / lambda_i)`.
pub fn theta2_diag(s: Complex64, mats: &SystemMatrices) -> Vector2<Complex64> {
    let (psi_1, psi_2) = mats.params.psi();
    Vector2::new(
        psi_1 * g_factor(s / mats.lambda.x),
        psi_2 * g_factor(s / mats.lambda.y),
    )
}

/// Per-axle factor of the closed-form output-transfer determinant:
/// `h_i(s) = q(s/lambda_i) / (lambda_i (1 - psi_i g(s/lambda_i)))`.
/// Its value at `s = 0` is `1 / (2 lambda_i phi_i)`.
pub fn axle_det_factor(s: Complex64, axle: usize, mats: &SystemMatrices) -> Complex64 {
    let (lambda, psi) = match axle {
        0 => (mats.lambda.x, mats.params.psi().0),
        1 => (mats.lambda.y, mats.params.psi().1),
        _ => panic!("axle index must be 0 or 1"),
    };
    let u = s / lambda;
    q_factor(u) / (lambda * (Complex64::new(1.0, 0.0) - psi * g_factor(u)))
}

fn complexify(m: &Matrix2<f64>) -> Matrix2<Complex64> {
    m.map(|e| Complex64::new(e, 0.0))
}

/// Transfer matrix from the lumped state to the integrated tire-force
/// vector, obtained by eliminating the boundary coupling:
/// `H1 = [I 0] [[I, -Theta1], [0, I - Theta2]]^{-1} [Psi1; Psi2]`
/// with `Psi_k = Theta_k A2`. With diagonal `Theta` blocks this collapses to
/// `diag(Theta1_i / (1 - Theta2_i)) A2`.
pub fn force_transfer(s: Complex64, mats: &SystemMatrices) -> Result<Matrix2<Complex64>> {
    let t1 = theta1_diag(s, mats);
    let t2 = theta2_diag(s, mats);
    let one = Complex64::new(1.0, 0.0);
    let mut diag = Vector2::new(Complex64::ZERO, Complex64::ZERO);
    for i in 0..2 {
        let denom = one - t2[i];
        if denom.norm() < 1e-9 * (1.0 + t2[i].norm()) {
            return Err(Error::Singular {
                context: "force transfer boundary-coupling block",
                det_mag: denom.norm(),
                scale: 1.0 + t2[i].norm(),
            });
        }
        diag[i] = t1[i] / denom;
    }
    let a2 = complexify(&mats.a2);
    Ok(Matrix2::new(
        diag.x * a2[(0, 0)],
        diag.x * a2[(0, 1)],
        diag.y * a2[(1, 0)],
        diag.y * a2[(1, 1)],
    ))
}

/// Output transfer matrix `C(s)`: first row is the constant yaw-rate map,
/// second row is the acceleration map composed with the force transfer.
pub fn output_transfer(s: Complex64, mats: &SystemMatrices) -> Result<Matrix2<Complex64>> {
    let h1 = force_transfer(s, mats)?;
    let c2 = mats.c2;
    let row2 = (
        c2[(0, 0)] * h1[(0, 0)] + c2[(0, 1)] * h1[(1, 0)],
        c2[(0, 0)] * h1[(0, 1)] + c2[(0, 1)] * h1[(1, 1)],
    );
    Ok(Matrix2::new(
        Complex64::ZERO,
        Complex64::new(1.0, 0.0),
        row2.0,
        row2.1,
    ))
}

fn det2(m: &Matrix2<Complex64>) -> Complex64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Inverse of the output transfer via the 2x2 adjugate, with a singularity
/// diagnostic when the determinant is negligible against the row scales.
pub fn output_transfer_inverse(s: Complex64, mats: &SystemMatrices) -> Result<Matrix2<Complex64>> {
    let c = output_transfer(s, mats)?;
    let det = det2(&c);
    let row1 = (c[(0, 0)].norm_sqr() + c[(0, 1)].norm_sqr()).sqrt();
    let row2 = (c[(1, 0)].norm_sqr() + c[(1, 1)].norm_sqr()).sqrt();
    let scale = row1 * row2;
    if det.norm() < 1e-12 * scale {
        return Err(Error::Singular {
            context: "output transfer inverse",
            det_mag: det.norm(),
            scale,
        });
    }
    Ok(Matrix2::new(c[(1, 1)], -c[(0, 1)], -c[(1, 0)], c[(0, 0)]) / det)
}

/// Parameter-weighted sum of the per-axle determinant factors,
/// `F_z1 sigma_1 phi_1 h_1(s) + F_z2 sigma_2 phi_2 h_2(s)`.
/// Equals `det C(s)` up to the constant positive output scaling `2/m`; for
/// equal transport speeds its value at `s = 0` is
/// `(F_z1 sigma_1 + F_z2 sigma_2) / (2 lambda)`.
pub fn det_c_factor_sum(s: Complex64, mats: &SystemMatrices) -> Complex64 {
    let p = &mats.params;
    p.f_z1 * p.sigma_1 * p.phi_1 * axle_det_factor(s, 0, mats)
        + p.f_z2 * p.sigma_2 * p.phi_2 * axle_det_factor(s, 1, mats)
}

/// Closed-form determinant of the output transfer. Agrees with the
/// determinant of the assembled `C(s)` everywhere; see `det_c_factor_sum`
/// for the version without the constant output scaling.
pub fn det_c_closed(s: Complex64, mats: &SystemMatrices) -> Complex64 {
    2.0 / mats.params.m * det_c_factor_sum(s, mats)
}

/// Validated observer gain pair (filter corner `gamma`, injection gain
/// `eta`, both strictly positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub gamma: f64,
    pub eta: f64,
}

impl ObserverGains {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        for (field, v) in [("observer.gamma", gamma), ("observer.eta", eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    message: format!("must be strictly positive, got {v}"),
                });
            }
        }
        Ok(Self { gamma, eta })
    }
}

/// Designed error sensitivity `H2(s) = s / (s^2 + gamma s + eta gamma)`.
pub fn error_sensitivity(s: Complex64, gains: ObserverGains) -> Complex64 {
    s / (s * s + gains.gamma * s + gains.eta * gains.gamma)
}

/// First-order realization filter `gamma / (s + gamma)`.
pub fn realization_filter(s: Complex64, gains: ObserverGains) -> Complex64 {
    gains.gamma / (s + gains.gamma)
}

/// Injection gain `-(filter)(eta I + G H1(s)) C^{-1}(s)` evaluated at `s`.
pub fn injection_gain(
    s: Complex64,
    gains: ObserverGains,
    mats: &SystemMatrices,
) -> Result<Matrix2<Complex64>> {
    let h1 = force_transfer(s, mats)?;
    let cinv = output_transfer_inverse(s, mats)?;
    let g = complexify(&mats.g);
    let eta_i = Matrix2::from_diagonal_element(Complex64::new(gains.eta, 0.0));
    let gain = -((eta_i + g * h1) * cinv) * realization_filter(s, gains);
    if gain.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::NonFinite {
            context: "injection gain evaluation",
            time: s.im,
        });
    }
    Ok(gain)
}

/// High-frequency limit of the injection gain. Only the (1, 2) entry
/// survives: `gamma * eta * m / (2 (F_z1 sigma_1 phi_1 + F_z2 sigma_2 phi_2))`.
/// The gain is proper but not strictly proper, so realizations carry this
/// constant feedthrough separately.
pub fn injection_gain_feedthrough(gains: ObserverGains, mats: &SystemMatrices) -> Matrix2<f64> {
    let p = &mats.params;
    let s_weight = 2.0 / p.m * (p.f_z1 * p.sigma_1 * p.phi_1 + p.f_z2 * p.sigma_2 * p.phi_2);
    Matrix2::new(0.0, gains.gamma * gains.eta / s_weight, 0.0, 0.0)
}

/// Complex matrix (or scalar) samples of a transfer function over an
/// ascending frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse<T> {
    /// Ascending frequencies (rad/s); a leading 0 entry is allowed and is
    /// evaluated through the analytic limits.
    pub omega: Vec<f64>,
    pub samples: Vec<T>,
}

impl<T> FrequencyResponse<T> {
    pub fn new(omega: Vec<f64>, samples: Vec<T>) -> Result<Self> {
        if omega.len() != samples.len() {
            return Err(Error::InvalidInput {
                context: "frequency response",
                message: format!(
                    "grid length {} does not match sample count {}",
                    omega.len(),
                    samples.len()
                ),
            });
        }
        if omega.is_empty() || omega[0] < 0.0 || omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput {
                context: "frequency response",
                message: "grid must be nonnegative and strictly ascending".into(),
            });
        }
        Ok(Self { omega, samples })
    }
}

/// Samples an evaluator over a frequency grid.
pub fn sample_response<T>(
    omega: &[f64],
    mut eval: impl FnMut(f64) -> Result<T>,
) -> Result<FrequencyResponse<T>> {
    let samples = omega.iter().map(|&w| eval(w)).collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(omega.to_vec(), samples)
}

/// Samples the injection gain over the given frequency grid.
pub fn injection_gain_response(
    omega: &[f64],
    gains: ObserverGains,
    mats: &SystemMatrices,
) -> Result<FrequencyResponse<Matrix2<Complex64>>> {
    sample_response(omega, |w| injection_gain(Complex64::new(0.0, w), gains, mats))
}

/// Default log-spaced analysis grid: 2000 points on [1e-2, 1e5] rad/s,
/// spanning both the transport rate and the realization-filter corner.
pub fn default_omega_grid() -> Vec<f64> {
    log_omega_grid(1e-2, 1e5, 2000)
}

pub fn log_omega_grid(omega_min: f64, omega_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && omega_min > 0.0 && omega_max > omega_min);
    let (l0, l1) = (omega_min.log10(), omega_max.log10());
    (0..n)
        .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Uniform grid 0..omega_max inclusive with n intervals, for transform use.
pub fn uniform_omega_grid(omega_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1 && omega_max > 0.0);
    (0..=n).map(|i| omega_max * i as f64 / n as f64).collect()
}

/// Largest-gain measure of one frequency sample.
pub trait ResponseSample {
    /// Largest singular value (modulus for scalar samples).
    fn gain(&self) -> f64;
}

impl ResponseSample for Complex64 {
    fn gain(&self) -> f64 {
        self.norm()
    }
}

impl ResponseSample for Matrix2<Complex64> {
    fn gain(&self) -> f64 {
        sigma_max(self)
    }
}

/// Largest singular value of a complex 2x2 matrix via the closed-form
/// eigenvalues of the Hermitian Gram matrix.
pub fn sigma_max(m: &Matrix2<Complex64>) -> f64 {
    let a = m[(0, 0)].norm_sqr() + m[(1, 0)].norm_sqr();
    let c = m[(0, 1)].norm_sqr() + m[(1, 1)].norm_sqr();
    let b = m[(0, 0)].conj() * m[(0, 1)] + m[(1, 0)].conj() * m[(1, 1)];
    let disc = ((a - c) * (a - c) + 4.0 * b.norm_sqr()).sqrt();
    (0.5 * (a + c + disc)).max(0.0).sqrt()
}

/// Result of a grid H-infinity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfEstimate {
    pub norm: f64,
    pub omega_at_max: f64,
}

/// Supremum of the sample gain over the grid, refined by one golden-section
/// search (in log frequency) around the grid argmax.
pub fn hinf_estimate<T: ResponseSample>(
    resp: &FrequencyResponse<T>,
    mut eval: impl FnMut(f64) -> Result<T>,
) -> Result<HinfEstimate> {
    let gains: Vec<f64> = resp.samples.iter().map(ResponseSample::gain).collect();
    let (mut best_idx, mut best) = (0usize, f64::NEG_INFINITY);
    for (i, &g) in gains.iter().enumerate() {
        if g > best {
            best = g;
            best_idx = i;
        }
    }
    let mut best_omega = resp.omega[best_idx];

    // Bracket the argmax with its grid neighbors; skip refinement when the
    // peak sits on the boundary of the grid.
    if best_idx > 0 && best_idx + 1 < resp.omega.len() && resp.omega[best_idx - 1] > 0.0 {
        let (mut a, mut b) = (resp.omega[best_idx - 1].ln(), resp.omega[best_idx + 1].ln());
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = eval(c.exp())?.gain();
        let mut fd = eval(d.exp())?.gain();
        for _ in 0..80 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = eval(c.exp())?.gain();
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = eval(d.exp())?.gain();
            }
            if (b - a).abs() < 1e-12 {
                break;
            }
        }
        let (f_ref, w_ref) = if fc > fd { (fc, c.exp()) } else { (fd, d.exp()) };
        if f_ref > best {
            best = f_ref;
            best_omega = w_ref;
        }
    }
    Ok(HinfEstimate {
        norm: best,
        omega_at_max: best_omega,
    })
}

/// Outcome of the loop-gain condition `||H2|| < 1 / ||H1||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallGainReport {
    /// Estimated `||H2||_inf` (equals `1/gamma` analytically).
    pub lhs: f64,
    /// `1 / ||H1||_inf`.
    pub rhs: f64,
    /// `lhs < rhs` with the safety margin applied.
    pub satisfied: bool,
    /// Safety margin used (fraction of `rhs`).
    pub margin: f64,
    pub h1_norm: f64,
    pub h1_omega_at_max: f64,
    pub h2_omega_at_max: f64,
    /// Supplementary diagnostic: norm of the composed loop gain `G H1`,
    /// whose smallness explains convergence even when the conservative
    /// condition fails.
    pub gh1_norm: f64,
}

/// Composes the two norm estimates over the given grid and applies the
/// small-gain condition with a relative safety margin (default 5%).
pub fn check_small_gain(
    gains: ObserverGains,
    mats: &SystemMatrices,
    margin: f64,
    omega: &[f64],
) -> Result<SmallGainReport> {
    let h2_eval =
        |w: f64| -> Result<Complex64> { Ok(error_sensitivity(Complex64::new(0.0, w), gains)) };
    let h2_resp = sample_response(omega, h2_eval)?;
    let h2 = hinf_estimate(&h2_resp, h2_eval)?;

    let h1_eval = |w: f64| force_transfer(Complex64::new(0.0, w), mats);
    let h1_resp = sample_response(omega, h1_eval)?;
    let h1 = hinf_estimate(&h1_resp, h1_eval)?;

    let g = complexify(&mats.g);
    let gh1_eval =
        |w: f64| -> Result<Matrix2<Complex64>> { Ok(g * force_transfer(Complex64::new(0.0, w), mats)?) };
    let gh1_resp = sample_response(omega, gh1_eval)?;
    let gh1 = hinf_estimate(&gh1_resp, gh1_eval)?;

    let lhs = h2.norm;
    let rhs = 1.0 / h1.norm;
    Ok(SmallGainReport {
        lhs,
        rhs,
        satisfied: lhs < rhs * (1.0 - margin),
        margin,
        h1_norm: h1.norm,
        h1_omega_at_max: h1.omega_at_max,
        h2_omega_at_max: h2.omega_at_max,
        gh1_norm: gh1.norm,
    })
}

/// CSV serialization of a frequency response: `omega` followed by the real
/// and imaginary part of each sample entry.
pub trait CsvSample {
    fn csv_header() -> &'static str;
    fn csv_row(&self, out: &mut String);
}

impl CsvSample for Complex64 {
    fn csv_header() -> &'static str {
        "omega,re,im"
    }
    fn csv_row(&self, out: &mut String) {
        out.push_str(&format!(",{},{}", self.re, self.im));
    }
}

impl CsvSample for Matrix2<Complex64> {
    fn csv_header() -> &'static str {
        "omega,re_11,im_11,re_12,im_12,re_21,im_21,re_22,im_22"
    }
    fn csv_row(&self, out: &mut String) {
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let e = self[(r, c)];
            out.push_str(&format!(",{},{}", e.re, e.im));
        }
    }
}

impl<T: CsvSample> FrequencyResponse<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(T::csv_header());
        out.push('\n');
        for (w, sample) in self.omega.iter().zip(&self.samples) {
            out.push_str(&format!("{w}"));
            sample.csv_row(&mut out);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleParams;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;

    fn mats() -> SystemMatrices {
        SystemMatrices::from_params(VehicleParams::reference()).unwrap()
    }

    fn crel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    /// Adaptive Simpson quadrature for complex integrands, used as an
    /// independent oracle for the closed-form integrals.
    fn simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
        #[allow(clippy::too_many_arguments)]
        fn quad<F: Fn(f64) -> Complex64>(
            f: &F,
            a: f64,
            b: f64,
            fa: Complex64,
            fm: Complex64,
            fb: Complex64,
            whole: Complex64,
            tol: f64,
            depth: usize,
        ) -> Complex64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.norm() < 15.0 * tol {
                left + right + delta / 15.0
            } else {
                quad(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + quad(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        quad(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    fn random_rhp_points(count: usize, max_mag: f64) -> Vec<Complex64> {
        // Deterministic pseudo-random points in the closed right half-plane.
        let mut pts = Vec::with_capacity(count);
        let mut state = 0x12345678u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..count {
            let mag = 10f64.powf(-2.0 + next() * (max_mag.log10() + 2.0));
            let phase = (next() - 0.5) * std::f64::consts::PI; // [-pi/2, pi/2]
            pts.push(Complex64::from_polar(mag, phase));
        }
        pts
    }

    #[test]
    fn propagator_integral_at_zero_frequency() {
        let m = mats();
        for xi in [0.0, 0.3, 1.0] {
            let gamma = propagator_integral(xi, Complex64::ZERO, &m);
            assert_relative_eq!(gamma[(0, 0)].re, xi, max_relative = 1e-14);
            assert_eq!(gamma[(0, 0)].im, 0.0);
            assert_relative_eq!(gamma[(1, 1)].re, xi, max_relative = 1e-14);
        }
    }

    #[test]
    fn propagator_integral_closed_form_value() {
        // At s = 500i and lambda = 500 the entry is (1 - e^{-i})/i,
        // which equals sin(1) - i(1 - cos(1)).
        let m = mats();
        let gamma = propagator_integral(1.0, Complex64::new(0.0, 500.0), &m);
        let expected = Complex64::new(1f64.sin(), -(1.0 - 1f64.cos()));
        assert!(crel(gamma[(0, 0)], expected) < 1e-14);
    }

    #[test]
    fn propagator_integral_matches_quadrature() {
        let m = mats();
        for (idx, s) in random_rhp_points(100, 1e4).into_iter().enumerate() {
            for xi in [0.25, 1.0] {
                let gamma = propagator_integral(xi, s, &m);
                let oracle = simpson(
                    &|xp: f64| (-s / m.lambda.x * (xi - xp)).exp(),
                    0.0,
                    xi,
                    1e-12,
                );
                assert!(
                    crel(gamma[(0, 0)], oracle) < 1e-8,
                    "point {idx}, s = {s}, xi = {xi}: {} vs {}",
                    gamma[(0, 0)],
                    oracle
                );
            }
        }
    }

    #[test]
    fn theta_factors_match_quadrature() {
        let m = mats();
        let (psi_1, _) = m.params.psi();
        for s in random_rhp_points(100, 1e4) {
            // Theta1 entry 0: K1 * integral of Gamma over xi / lambda
            let t1 = theta1_diag(s, &m);
            let oracle1 = m.k1.x / m.lambda.x
                * simpson(
                    &|xi: f64| propagator_integral(xi, s, &m)[(0, 0)],
                    0.0,
                    1.0,
                    1e-13,
                );
            assert!(crel(t1.x, oracle1) < 1e-8, "s = {s}: {} vs {}", t1.x, oracle1);

            // Theta2 entry 0: psi * g = K2 Gamma(1, s) / lambda
            let t2 = theta2_diag(s, &m);
            let oracle2 = psi_1 * propagator_integral(1.0, s, &m)[(0, 0)];
            assert!(crel(t2.x, oracle2) < 1e-10);
        }
    }

    #[test]
    fn force_transfer_matches_block_inverse() {
        let m = mats();
        let zero = Complex64::ZERO;
        let one = Complex64::new(1.0, 0.0);
        for s in random_rhp_points(40, 1e4) {
            let t1 = theta1_diag(s, &m);
            let t2 = theta2_diag(s, &m);
            let a2 = m.a2.map(|e| Complex64::new(e, 0.0));
            let psi1 = Matrix2::new(t1.x, zero, zero, t1.y) * a2;
            let psi2 = Matrix2::new(t2.x, zero, zero, t2.y) * a2;
            #[rustfmt::skip]
            let block = Matrix4::new(
                one, zero, -t1.x, zero,
                zero, one, zero, -t1.y,
                zero, zero, one - t2.x, zero,
                zero, zero, zero, one - t2.y,
            );
            let inv = block.try_inverse().expect("block invertible");
            let mut rhs = Matrix4::zeros();
            rhs.view_mut((0, 0), (2, 2)).copy_from(&psi1);
            rhs.view_mut((2, 0), (2, 2)).copy_from(&psi2);
            let full = inv * rhs;
            let oracle = full.view((0, 0), (2, 2)).into_owned();

            let h1 = force_transfer(s, &m).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!(
                        crel(h1[(r, c)], oracle[(r, c)]) < 1e-10,
                        "s = {s}: {} vs {}",
                        h1[(r, c)],
                        oracle[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn axle_det_factor_static_limit() {
        let m = mats();
        for axle in 0..2 {
            let h0 = axle_det_factor(Complex64::ZERO, axle, &m);
            assert!(crel(h0, Complex64::new(1.0 / (2.0 * 500.0 * 0.92), 0.0)) < 1e-13);
        }
    }

    #[test]
    fn force_transfer_static_values() {
        let m = mats();
        let h1 = force_transfer(Complex64::ZERO, &m).unwrap();
        assert_relative_eq!(h1[(0, 0)].re, 699_580.0 / 500.0, max_relative = 1e-12);
        assert_relative_eq!(h1[(0, 1)].re, 699_580.0 * 1.4 / 500.0, max_relative = 1e-12);
        assert_relative_eq!(h1[(1, 0)].re, 900_240.0 / 500.0, max_relative = 1e-12);
        assert_relative_eq!(h1[(1, 1)].re, -900_240.0 / 500.0, max_relative = 1e-12);
    }

    #[test]
    fn force_transfer_conjugate_symmetry() {
        let m = mats();
        for s in random_rhp_points(30, 1e4) {
            let h = force_transfer(s, &m).unwrap();
            let hc = force_transfer(s.conj(), &m).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!(crel(hc[(r, c)], h[(r, c)].conj()) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn force_transfer_detects_singular_boundary_block() {
        // The boundary-coupling block 1 - psi g(u) has a real negative root;
        // locate it by bisection and confirm the diagnostic fires there.
        let m = mats();
        let (psi_1, _) = m.params.psi();
        let f = |u: f64| 1.0 - psi_1 * g_factor(Complex64::new(u, 0.0)).re;
        let (mut lo, mut hi) = (-4.2, -3.6);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = Complex64::new(0.5 * (lo + hi) * m.lambda.x, 0.0);
        match force_transfer(s, &m) {
            Err(Error::Singular { context, .. }) => {
                assert!(context.contains("boundary-coupling"));
            }
            other => panic!("expected singularity diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn output_transfer_first_row_constant() {
        let m = mats();
        for s in random_rhp_points(20, 1e4) {
            let c = output_transfer(s, &m).unwrap();
            assert_eq!(c[(0, 0)], Complex64::ZERO);
            assert_eq!(c[(0, 1)], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn output_transfer_inverse_contract() {
        let m = mats();
        for s in random_rhp_points(50, 1e4) {
            let c = output_transfer(s, &m).unwrap();
            let cinv = output_transfer_inverse(s, &m).unwrap();
            let prod = c * cinv;
            for r in 0..2 {
                for col in 0..2 {
                    let expect = if r == col { 1.0 } else { 0.0 };
                    assert!(
                        (prod[(r, col)] - Complex64::new(expect, 0.0)).norm() < 1e-12,
                        "s = {s}: product {prod}"
                    );
                }
            }
        }
    }

    #[test]
    fn det_factor_sum_static_value() {
        let m = mats();
        let d0 = det_c_factor_sum(Complex64::ZERO, &m);
        assert_relative_eq!(d0.re, 1599.82, max_relative = 1e-12);
        assert!(d0.im.abs() < 1e-12);

        // Extrapolation oracle: assemble C near zero and scale out 2/m.
        let s = Complex64::new(1e-8, 0.0);
        let c = output_transfer(s, &m).unwrap();
        let assembled = det2(&c) * Complex64::new(m.params.m / 2.0, 0.0);
        assert!(crel(assembled, d0) < 1e-6);
    }

    #[test]
    fn det_closed_matches_assembled_determinant() {
        let m = mats();
        for s in random_rhp_points(200, 1e4) {
            let assembled = det2(&output_transfer(s, &m).unwrap());
            let closed = det_c_closed(s, &m);
            assert!(
                crel(closed, assembled) < 1e-9,
                "s = {s}: {closed} vs {assembled}"
            );
        }
    }

    #[test]
    fn det_factor_conjugate_symmetry() {
        let m = mats();
        for s in random_rhp_points(30, 1e4) {
            for axle in 0..2 {
                let h = axle_det_factor(s, axle, &m);
                let hc = axle_det_factor(s.conj(), axle, &m);
                assert!(crel(hc, h.conj()) < 1e-13);
            }
        }
    }

    #[test]
    fn error_sensitivity_values() {
        let gains = ObserverGains::new(500.0, 1.0).unwrap();
        assert_eq!(error_sensitivity(Complex64::ZERO, gains), Complex64::ZERO);
        // |H2| at the peak frequency sqrt(eta gamma) equals 1/gamma.
        let w = (gains.eta * gains.gamma).sqrt();
        let peak = error_sensitivity(Complex64::new(0.0, w), gains).norm();
        assert_relative_eq!(peak, 1.0 / gains.gamma, max_relative = 1e-12);
        // Strictly proper: decays along the imaginary axis.
        let hi = error_sensitivity(Complex64::new(0.0, 1e7), gains).norm();
        assert!(hi < 1e-6);
    }

    #[test]
    fn hinf_of_constant_response() {
        let omega = log_omega_grid(1e-2, 1e2, 50);
        let eval = |_w: f64| -> crate::error::Result<Complex64> { Ok(Complex64::new(-2.5, 0.0)) };
        let resp = sample_response(&omega, eval).unwrap();
        let est = hinf_estimate(&resp, eval).unwrap();
        assert_relative_eq!(est.norm, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn hinf_of_error_sensitivity_matches_analytic_norm() {
        for (gamma, eta) in [(500.0, 1.0), (100.0, 1.0), (500.0, 10.0)] {
            let gains = ObserverGains::new(gamma, eta).unwrap();
            let eval = |w: f64| -> crate::error::Result<Complex64> {
                Ok(error_sensitivity(Complex64::new(0.0, w), gains))
            };
            let resp = sample_response(&default_omega_grid(), eval).unwrap();
            let est = hinf_estimate(&resp, eval).unwrap();
            assert_relative_eq!(est.norm, 1.0 / gamma, max_relative = 0.01);
            assert_relative_eq!(est.omega_at_max, (eta * gamma).sqrt(), max_relative = 0.05);
        }
    }

    #[test]
    fn force_transfer_norm_bounded_and_peaked_inside_grid() {
        let m = mats();
        let eval = |w: f64| force_transfer(Complex64::new(0.0, w), &m);
        let resp = sample_response(&default_omega_grid(), eval).unwrap();
        let est = hinf_estimate(&resp, eval).unwrap();
        assert!(est.norm.is_finite());
        // the force transfer rolls off: the edge gain sits below the peak
        let edge = resp.samples.last().unwrap().gain();
        assert!(edge < est.norm, "edge {edge} vs peak {}", est.norm);
        // static gain is the peak for this model
        let static_gain = sigma_max(&force_transfer(Complex64::ZERO, &m).unwrap());
        assert!(est.norm >= static_gain * (1.0 - 1e-9));
    }

    #[test]
    fn injection_gain_response_properties() {
        let m = mats();
        let gains = ObserverGains::new(500.0, 1.0).unwrap();

        // conjugate symmetry
        for w in [0.7, 35.0, 4200.0] {
            let plus = injection_gain(Complex64::new(0.0, w), gains, &m).unwrap();
            let minus = injection_gain(Complex64::new(0.0, -w), gains, &m).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!(crel(minus[(r, c)], plus[(r, c)].conj()) < 1e-12);
                }
            }
        }

        // finite real static gain, cross-checked by small-frequency samples
        let at_zero = injection_gain(Complex64::ZERO, gains, &m).unwrap();
        assert!(at_zero.iter().all(|e| e.im.abs() < 1e-12));
        let near1 = injection_gain(Complex64::new(0.0, 1e-6), gains, &m).unwrap();
        let near2 = injection_gain(Complex64::new(0.0, 1e-7), gains, &m).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let scale = 1.0 + at_zero[(r, c)].norm();
                assert!((near1[(r, c)] - at_zero[(r, c)]).norm() < 1e-6 * scale);
                assert!((near2[(r, c)] - at_zero[(r, c)]).norm() < 1e-7 * scale);
            }
        }
    }

    #[test]
    fn injection_gain_feedthrough_limit() {
        let m = mats();
        let gains = ObserverGains::new(500.0, 1.0).unwrap();
        let d_inf = injection_gain_feedthrough(gains, &m);
        assert_relative_eq!(d_inf[(0, 1)], 500.0 / 2264.3606153846154, max_relative = 1e-10);

        let far = injection_gain(Complex64::new(0.0, 1e8), gains, &m).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (far[(r, c)] - Complex64::new(d_inf[(r, c)], 0.0)).norm() < 1e-4,
                    "entry ({r},{c}): {} vs {}",
                    far[(r, c)],
                    d_inf[(r, c)]
                );
            }
        }
    }

    #[test]
    fn small_gain_check_limits() {
        let m = mats();
        let omega = default_omega_grid();

        // Vanishing filter corner makes the left side blow up.
        let tiny = ObserverGains::new(1e-6, 1.0).unwrap();
        let report = check_small_gain(tiny, &m, 0.05, &omega).unwrap();
        assert!(!report.satisfied);

        // A corner at twice the measured force-transfer norm satisfies the
        // condition by construction.
        let h1_eval = |w: f64| force_transfer(Complex64::new(0.0, w), &m);
        let h1_resp = sample_response(&omega, h1_eval).unwrap();
        let h1 = hinf_estimate(&h1_resp, h1_eval).unwrap();
        let ample = ObserverGains::new(2.0 * h1.norm, 1.0).unwrap();
        let report = check_small_gain(ample, &m, 0.05, &omega).unwrap();
        assert!(report.satisfied, "report: {report:?}");
        assert_relative_eq!(report.lhs, 1.0 / (2.0 * h1.norm), max_relative = 0.01);
    }

    #[test]
    fn response_csv_round_shape() {
        let omega = vec![0.0, 1.0, 10.0];
        let eval = |w: f64| -> crate::error::Result<Complex64> { Ok(Complex64::new(w, -w)) };
        let resp = sample_response(&omega, eval).unwrap();
        let csv = resp.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "omega,re,im");
        assert_eq!(lines[2], "1,1,-1");
    }
}
