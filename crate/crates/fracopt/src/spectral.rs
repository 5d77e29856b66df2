//! Sine-series spectral tools on the unit square.
//!
//! The Dirichlet eigenpairs of `-Δ` on `Ω = (0,1)²` are
//! `λ_{k,l} = π²(k² + l²)` with `φ_{k,l}(x) = sin(kπx₁) sin(lπx₂)` and
//! `‖φ_{k,l}‖² = 1/4`, so the expansion of `g` reads
//! `g = Σ w_{k,l} φ_{k,l}` with `w_{k,l} = 4 (g, φ_{k,l})`.
//!
//! Along the extension direction each mode decays like
//! `ψ(y) = c_s (ξy)^s K_s(ξy)`, `ξ = √λ`, normalized to `ψ(0) = 1`. On a
//! cylinder truncated at height `Y` the profile picks up an `I_s` correction
//! that enforces `χ(Y) = 0`, and the Dirichlet-to-Neumann multiplier of the
//! truncated problem becomes `λ^s (1 - e/d_s)` with
//! `e = -c_s² K_s(ξY)/I_s(ξY) < 0`. These exact mode solutions provide
//! reference values for everything the finite element solver computes.

use crate::bessel::{bessel_i_scaled, bessel_k_scaled};
use crate::params::FracParams;
use crate::quadrature::gauss_on;
use crate::{Error, Result};

/// Dirichlet Laplace eigenvalue `π²(k² + l²)` on the unit square; `k, l ≥ 1`.
pub fn eigenvalue(k: usize, l: usize) -> f64 {
    assert!(k >= 1 && l >= 1, "mode indices start at 1");
    std::f64::consts::PI.powi(2) * ((k * k + l * l) as f64)
}

/// Eigenfunction `sin(kπx₁) sin(lπx₂)`.
pub fn eigenfunction(k: usize, l: usize, x: [f64; 2]) -> f64 {
    let pi = std::f64::consts::PI;
    (k as f64 * pi * x[0]).sin() * (l as f64 * pi * x[1]).sin()
}

/// Truncated sine-series coefficients `w_{k,l}`, `1 ≤ k, l ≤ k_max`.
#[derive(Debug, Clone)]
pub struct SpectralCoefficients {
    pub k_max: usize,
    data: Vec<f64>,
}

impl SpectralCoefficients {
    pub fn zeros(k_max: usize) -> Self {
        assert!(k_max >= 1);
        SpectralCoefficients {
            k_max,
            data: vec![0.0; k_max * k_max],
        }
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        assert!((1..=self.k_max).contains(&k) && (1..=self.k_max).contains(&l));
        self.data[(k - 1) * self.k_max + (l - 1)]
    }

    pub fn set(&mut self, k: usize, l: usize, w: f64) {
        assert!((1..=self.k_max).contains(&k) && (1..=self.k_max).contains(&l));
        self.data[(k - 1) * self.k_max + (l - 1)] = w;
    }

    /// Iterate `(k, l, w_{k,l})` over all stored modes.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k_max = self.k_max;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &w)| (i / k_max + 1, i % k_max + 1, w))
    }

    /// Synthesize the series at a point.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let pi = std::f64::consts::PI;
        let sx: Vec<f64> = (1..=self.k_max)
            .map(|k| (k as f64 * pi * x[0]).sin())
            .collect();
        let sy: Vec<f64> = (1..=self.k_max)
            .map(|l| (l as f64 * pi * x[1]).sin())
            .collect();
        let mut total = 0.0;
        for k in 0..self.k_max {
            let mut row = 0.0;
            for l in 0..self.k_max {
                row += self.data[k * self.k_max + l] * sy[l];
            }
            total += sx[k] * row;
        }
        total
    }

    /// `L²(Ω)` norm of the series: `(1/4 Σ w²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (0.25 * self.data.iter().map(|w| w * w).sum::<f64>()).sqrt()
    }

    /// Largest coefficient magnitude on the outermost band
    /// (`k = k_max` or `l = k_max`); a proxy for the truncation error.
    pub fn tail_indicator(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 1..=self.k_max {
            worst = worst.max(self.get(k, self.k_max).abs());
            worst = worst.max(self.get(self.k_max, k).abs());
        }
        worst
    }

    /// Apply the fractional operator: scale each mode by `λ_{k,l}^s`.
    pub fn apply_fractional(&self, s: f64) -> Self {
        assert!(s > 0.0 && s < 1.0, "fractional order must lie in (0,1), got {s}");
        self.scale_by_eigenvalue_power(s)
    }

    /// Apply the inverse operator: scale each mode by `λ_{k,l}^{-s}`.
    pub fn apply_inverse_fractional(&self, s: f64) -> Self {
        assert!(s > 0.0 && s < 1.0, "fractional order must lie in (0,1), got {s}");
        self.scale_by_eigenvalue_power(-s)
    }

    fn scale_by_eigenvalue_power(&self, power: f64) -> Self {
        let mut out = self.clone();
        for k in 1..=self.k_max {
            for l in 1..=self.k_max {
                let lam = eigenvalue(k, l).powf(power);
                out.set(k, l, self.get(k, l) * lam);
            }
        }
        out
    }

    /// Map load coefficients to trace coefficients of the extension problem
    /// truncated at `y_cut`: each mode is divided by `λ^s (1 - e/d_s)`.
    pub fn apply_truncated_inverse(&self, p: &FracParams, y_cut: f64) -> Self {
        let mut out = self.clone();
        for k in 1..=self.k_max {
            for l in 1..=self.k_max {
                let lam = eigenvalue(k, l);
                out.set(
                    k,
                    l,
                    self.get(k, l) * truncated_inverse_multiplier(p, lam, y_cut),
                );
            }
        }
        out
    }
}

/// Sine transform by tensorized Gauss quadrature: `w_{k,l} = 4 (g, φ_{k,l})`.
///
/// A single `quad_pts`-node rule must resolve the highest mode, so take
/// `quad_pts ≥ 2 k_max + 16` or so for spectral accuracy.
pub fn sine_coefficients(
    g: impl Fn([f64; 2]) -> f64,
    k_max: usize,
    quad_pts: usize,
) -> SpectralCoefficients {
    assert!(k_max >= 1 && quad_pts >= 2);
    debug_assert!(
        quad_pts >= 2 * k_max,
        "quad_pts = {quad_pts} under-resolves mode {k_max}"
    );
    let pi = std::f64::consts::PI;
    let rule = gauss_on(0.0, 1.0, quad_pts);
    let n = rule.len();
    // sines[k-1][i] = w_i sin(kπ x_i): quadrature already folded in.
    let sines: Vec<Vec<f64>> = (1..=k_max)
        .map(|k| {
            rule.iter()
                .map(|&(x, w)| w * (k as f64 * pi * x).sin())
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(n * n);
    for &(x1, _) in &rule {
        for &(x2, _) in &rule {
            samples.push(g([x1, x2]));
        }
    }
    // tmp[k-1][j] = Σ_i w_i sin(kπx_i) g(x_i, x_j)
    let mut tmp = vec![0.0; k_max * n];
    for k in 0..k_max {
        for i in 0..n {
            let si = sines[k][i];
            if si == 0.0 {
                continue;
            }
            let row = &samples[i * n..(i + 1) * n];
            let trow = &mut tmp[k * n..(k + 1) * n];
            for j in 0..n {
                trow[j] += si * row[j];
            }
        }
    }
    let mut out = SpectralCoefficients::zeros(k_max);
    for k in 1..=k_max {
        for l in 1..=k_max {
            let dot: f64 = (0..n).map(|j| tmp[(k - 1) * n + j] * sines[l - 1][j]).sum();
            out.set(k, l, 4.0 * dot);
        }
    }
    out
}

/// Decay profile `ψ(y) = c_s (ξy)^s K_s(ξy)` of a mode with eigenvalue
/// `lambda` on the unbounded cylinder; `ψ(0) = 1` and `ψ' ~ -d_s λ^s y^{-α}`
/// near the base.
pub fn psi_profile(p: &FracParams, lambda: f64, y: f64) -> f64 {
    assert!(lambda > 0.0 && y >= 0.0);
    if y == 0.0 {
        return 1.0;
    }
    let xi = lambda.sqrt() * y;
    // (ξ)^s e^{-ξ} K̃_s(ξ) with K̃ = e^ξ K_s: assembled in log space so the
    // huge/tiny factors cannot overflow individually.
    p.c_s * (p.s * xi.ln() - xi).exp() * bessel_k_scaled(p.s, xi)
}

/// Truncation correction `e = -c_s² K_s(ξY)/I_s(ξY)`; always negative and
/// decaying like `e^{-2ξY}` as the cut height grows.
pub fn truncation_coefficient(p: &FracParams, lambda: f64, y_cut: f64) -> f64 {
    assert!(lambda > 0.0 && y_cut > 0.0);
    let xi_y = lambda.sqrt() * y_cut;
    let ratio =
        bessel_k_scaled(p.s, xi_y) / bessel_i_scaled(p.s, xi_y) * (-2.0 * xi_y).exp();
    -p.c_s * p.c_s * ratio
}

/// Reciprocal Dirichlet-to-Neumann factor of the truncated extension:
/// the trace of the mode solution is `r / (λ^s (1 - e/d_s))` for load
/// coefficient `r`. At `s = 1/2` this reduces to `tanh(ξY)/ξ`.
pub fn truncated_inverse_multiplier(p: &FracParams, lambda: f64, y_cut: f64) -> f64 {
    let e = truncation_coefficient(p, lambda, y_cut);
    1.0 / (lambda.powf(p.s) * (1.0 - e / p.d_s))
}

/// Profile of a mode on the truncated cylinder: `χ(0) = 1`, `χ(y_cut) = 0`,
/// solving the same weighted ODE as `ψ` with a Dirichlet cap.
///
/// # Panics
/// If `y` falls outside `[0, y_cut]` or the eigenvalue is non-positive.
pub fn chi_profile(p: &FracParams, lambda: f64, y_cut: f64, y: f64) -> f64 {
    assert!(lambda > 0.0 && y_cut > 0.0, "need λ > 0 and Y > 0");
    assert!(
        (0.0..=y_cut).contains(&y),
        "height y = {y} outside the cylinder [0, {y_cut}]"
    );
    if y == 0.0 {
        return 1.0;
    }
    if y == y_cut {
        return 0.0;
    }
    let root = lambda.sqrt();
    let xi = root * y;
    let xi_y = root * y_cut;
    let log_pow = p.s * xi.ln();
    let k_part = (log_pow - xi).exp() * bessel_k_scaled(p.s, xi);
    // (ξ)^s I_s(ξ) K_s(ξY)/I_s(ξY), all in scaled form: the combined
    // exponent ξ - 2ξY + s ln ξ stays far below overflow for y < y_cut.
    let i_part = (log_pow + xi - 2.0 * xi_y).exp()
        * bessel_i_scaled(p.s, xi)
        * (bessel_k_scaled(p.s, xi_y) / bessel_i_scaled(p.s, xi_y));
    p.c_s * (k_part - i_part)
}

/// Manufactured optimality system built on the `(2,2)` eigenmode.
///
/// With desired state `(1 + ϑ λ^s) ū` and forcing `λ^s ū - z̄`, the triple
/// `(ū, p̄, z̄) = (φ_{2,2}, -ϑ φ_{2,2}, clip(φ_{2,2}))` satisfies the state
/// equation, the adjoint equation, and the box-constrained optimality
/// condition exactly, for every order `s` and weight `ϑ`.
#[derive(Debug, Clone, Copy)]
pub struct ExactTriple {
    pub params: FracParams,
    /// Eigenvalue `λ_{2,2} = 8π²` of the driving mode.
    pub lambda: f64,
    /// `λ_{2,2}^s`.
    pub lambda_s: f64,
}

impl ExactTriple {
    /// Requires a control box containing zero, so the clipped mode is an
    /// admissible control.
    pub fn new(params: FracParams) -> Result<Self> {
        if !(params.a_bound < 0.0 && params.b_bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "the manufactured control needs a < 0 < b, got [{}, {}]",
                params.a_bound, params.b_bound
            )));
        }
        let lambda = eigenvalue(2, 2);
        Ok(ExactTriple {
            params,
            lambda,
            lambda_s: lambda.powf(params.s),
        })
    }

    /// Optimal state `ū = sin(2πx₁) sin(2πx₂)`.
    pub fn state(&self, x: [f64; 2]) -> f64 {
        eigenfunction(2, 2, x)
    }

    /// Optimal adjoint `p̄ = -ϑ ū`.
    pub fn adjoint(&self, x: [f64; 2]) -> f64 {
        -self.params.vartheta * self.state(x)
    }

    /// Optimal control `z̄ = clip(ū) = clip(-p̄/ϑ)`.
    pub fn control(&self, x: [f64; 2]) -> f64 {
        self.state(x).clamp(self.params.a_bound, self.params.b_bound)
    }

    /// Forcing `f = λ^s ū - z̄`, so that `f + z̄` is a pure mode.
    pub fn forcing(&self, x: [f64; 2]) -> f64 {
        self.lambda_s * self.state(x) - self.control(x)
    }

    /// Desired state `u_d = (1 + ϑ λ^s) ū`.
    pub fn desired(&self, x: [f64; 2]) -> f64 {
        (1.0 + self.params.vartheta * self.lambda_s) * self.state(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(s: f64) -> FracParams {
        FracParams::new(s).unwrap()
    }

    #[test]
    fn eigenvalues_match_the_square() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(eigenvalue(1, 1), 2.0 * pi2, max_relative = 1e-15);
        assert_relative_eq!(eigenvalue(2, 2), 8.0 * pi2, max_relative = 1e-15);
        assert_relative_eq!(eigenvalue(3, 1), 10.0 * pi2, max_relative = 1e-15);
    }

    #[test]
    fn transform_recovers_a_pure_mode() {
        let w = sine_coefficients(|x| eigenfunction(2, 2, x), 8, 64);
        assert_relative_eq!(w.get(2, 2), 1.0, max_relative = 1e-12);
        for (k, l, v) in w.iter() {
            if (k, l) != (2, 2) {
                assert!(v.abs() < 1e-12, "spurious w[{k},{l}] = {v}");
            }
        }
        assert!(w.tail_indicator() < 1e-12);
    }

    #[test]
    fn transform_is_linear_and_parseval_holds() {
        let g = |x: [f64; 2]| 3.0 * eigenfunction(1, 2, x) - 0.5 * eigenfunction(4, 3, x);
        let w = sine_coefficients(g, 6, 48);
        assert_relative_eq!(w.get(1, 2), 3.0, max_relative = 1e-12);
        assert_relative_eq!(w.get(4, 3), -0.5, max_relative = 1e-12);
        // ‖g‖² = (9 + 0.25)/4.
        assert_relative_eq!(w.l2_norm(), (9.25_f64 / 4.0).sqrt(), max_relative = 1e-12);
        // Synthesis inverts analysis.
        let x = [0.321, 0.654];
        assert_relative_eq!(w.eval(x), g(x), max_relative = 1e-11);
    }

    #[test]
    fn fractional_scaling_roundtrips() {
        let mut w = SpectralCoefficients::zeros(4);
        w.set(3, 2, 1.0);
        let s = 0.7;
        let forward = w.apply_fractional(s);
        assert_relative_eq!(
            forward.get(3, 2),
            eigenvalue(3, 2).powf(s),
            max_relative = 1e-12
        );
        let back = forward.apply_inverse_fractional(s);
        assert_relative_eq!(back.get(3, 2), 1.0, max_relative = 1e-14);
        // Off-mode coefficients stay bit-identical (scaled exact zeros).
        for (k, l, v) in back.iter() {
            if (k, l) != (3, 2) {
                assert_eq!(v.to_bits(), 0.0_f64.to_bits());
            }
        }
    }

    #[test]
    fn fractional_powers_compose_as_a_semigroup() {
        let mut w = SpectralCoefficients::zeros(5);
        w.set(1, 1, 2.0);
        w.set(4, 3, -0.7);
        w.set(5, 5, 0.1);
        let (s1, s2) = (0.35, 0.4);
        let composed = w.apply_fractional(s1).apply_fractional(s2);
        let direct = w.apply_fractional(s1 + s2);
        for ((k, l, a), (_, _, b)) in composed.iter().zip(direct.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-13, epsilon = 1e-15);
            let _ = (k, l);
        }
    }

    #[test]
    fn polynomial_bubble_coefficient_is_sixty_four_over_pi_sixth() {
        // ∫₀¹ x(1-x) sin(πx) dx = 4/π³ per axis, so w_{1,1} = 4·(4/π³)².
        let w = sine_coefficients(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 4, 48);
        let exact = 64.0 / std::f64::consts::PI.powi(6);
        assert_relative_eq!(exact, 0.066570334290934547, max_relative = 1e-14);
        assert_relative_eq!(w.get(1, 1), exact, max_relative = 1e-12);
        // Even modes vanish by symmetry.
        assert!(w.get(2, 1).abs() < 1e-13);
        assert!(w.get(1, 2).abs() < 1e-13);
        assert!(w.get(2, 2).abs() < 1e-13);
    }

    #[test]
    fn psi_normalizes_at_the_base_and_decays() {
        for s in [0.2, 0.5, 0.8] {
            let p = params(s);
            assert_eq!(psi_profile(&p, 10.0, 0.0), 1.0);
            // Continuity down to very small heights: ψ = 1 - O(ξ^{2s}), so
            // the approach is slow for small s but clean far below any mesh.
            assert_relative_eq!(psi_profile(&p, 10.0, 1e-30), 1.0, epsilon = 1e-10);
            assert_relative_eq!(psi_profile(&p, 10.0, 1e-14), 1.0, epsilon = 1e-4);
            let mut prev = 1.0;
            for i in 1..40 {
                let v = psi_profile(&p, 10.0, i as f64 * 0.25);
                assert!(v > 0.0 && v < prev, "ψ must decay monotonically");
                prev = v;
            }
        }
    }

    #[test]
    fn psi_half_order_is_a_plain_exponential() {
        let p = params(0.5);
        // ψ(y) = e^{-ξy} at s = 1/2.
        assert_relative_eq!(psi_profile(&p, 4.0, 1.0), (-2.0_f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(
            psi_profile(&p, 9.0, 2.5),
            (-7.5_f64).exp(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn psi_reference_value() {
        let p = params(0.3);
        assert_relative_eq!(
            psi_profile(&p, 1.0, 2.0),
            0.077575997629132391,
            max_relative = 1e-12
        );
    }

    #[test]
    fn chi_satisfies_both_boundary_conditions() {
        for s in [0.2, 0.5, 0.8] {
            let p = params(s);
            for lambda in [eigenvalue(1, 1), eigenvalue(5, 3)] {
                for y_cut in [1.0, 3.7443102969384864] {
                    assert_eq!(chi_profile(&p, lambda, y_cut, 0.0), 1.0);
                    let at_cut = chi_profile(&p, lambda, y_cut, y_cut * (1.0 - 1e-14));
                    assert!(at_cut.abs() < 1e-12, "χ(Y) = {at_cut}");
                    assert_eq!(chi_profile(&p, lambda, y_cut, y_cut), 0.0);
                    // Interior values sit strictly between the caps.
                    let mid = chi_profile(&p, lambda, y_cut, 0.5 * y_cut);
                    assert!(mid > 0.0 && mid < 1.0);
                }
            }
        }
    }

    #[test]
    fn chi_half_order_matches_sinh_ratio() {
        let p = params(0.5);
        let lambda = eigenvalue(1, 1); // 2π²
        let (y_cut, y) = (2.0, 1.0);
        let xi = lambda.sqrt();
        let exact = (xi * (y_cut - y)).sinh() / (xi * y_cut).sinh();
        assert_relative_eq!(exact, 0.01176035355484926, max_relative = 1e-13);
        assert_relative_eq!(
            chi_profile(&p, lambda, y_cut, y),
            exact,
            max_relative = 1e-12
        );
    }

    #[test]
    fn truncated_multiplier_reduces_to_tanh_at_half() {
        let p = params(0.5);
        for (lambda, y_cut) in [(eigenvalue(1, 1), 1.0), (eigenvalue(2, 2), 2.5)] {
            let xi = lambda.sqrt();
            let exact = (xi * y_cut).tanh() / xi;
            assert_relative_eq!(
                truncated_inverse_multiplier(&p, lambda, y_cut),
                exact,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn truncation_correction_vanishes_with_height() {
        for s in [0.2, 0.8] {
            let p = params(s);
            let lambda = eigenvalue(1, 1);
            let e1 = truncation_coefficient(&p, lambda, 1.0).abs();
            let e2 = truncation_coefficient(&p, lambda, 2.0).abs();
            let e4 = truncation_coefficient(&p, lambda, 4.0).abs();
            assert!(e1 > e2 && e2 > e4);
            // Decay rate ~ e^{-2ξY}: one extra unit of height buys e^{-2ξ}.
            assert!(e2 / e1 < (-1.5 * lambda.sqrt()).exp());
            // Far cut: underflows cleanly to zero, no NaN.
            let far = truncation_coefficient(&p, lambda, 200.0);
            assert_eq!(far, 0.0);
            assert!(truncated_inverse_multiplier(&p, lambda, 200.0).is_finite());
        }
    }

    #[test]
    fn truncated_limit_is_the_unbounded_multiplier() {
        // As Y → ∞ the multiplier tends to λ^{-s}.
        for s in [0.3, 0.7] {
            let p = params(s);
            let lambda = eigenvalue(1, 1);
            let m = truncated_inverse_multiplier(&p, lambda, 60.0);
            assert_relative_eq!(m, lambda.powf(-s), max_relative = 1e-13);
        }
    }

    #[test]
    fn exact_triple_satisfies_its_optimality_system_pointwise() {
        for s in [0.2, 0.5, 0.8] {
            let t = ExactTriple::new(params(s)).unwrap();
            // Frozen powers of 8π².
            if s == 0.2 {
                assert_relative_eq!(t.lambda_s, 2.3959510799837841, max_relative = 1e-13);
            }
            if s == 0.8 {
                assert_relative_eq!(t.lambda_s, 32.954276849946891, max_relative = 1e-13);
            }
            for x in [[0.1, 0.2], [0.125, 0.125], [0.6, 0.9], [0.375, 0.875]] {
                // State equation: λ^s ū = f + z̄ pointwise (pure mode rhs).
                assert_relative_eq!(
                    t.lambda_s * t.state(x),
                    t.forcing(x) + t.control(x),
                    max_relative = 1e-12,
                    epsilon = 1e-14
                );
                // Adjoint equation: λ^s p̄ = ū - u_d.
                assert_relative_eq!(
                    t.lambda_s * t.adjoint(x),
                    t.state(x) - t.desired(x),
                    max_relative = 1e-12,
                    epsilon = 1e-14
                );
                // Projection form of the optimality condition.
                let z = (-t.adjoint(x) / t.params.vartheta)
                    .clamp(t.params.a_bound, t.params.b_bound);
                assert_relative_eq!(z, t.control(x), max_relative = 1e-13, epsilon = 1e-15);
                // The control saturates where |ū| > 1/2.
                assert!(t.control(x).abs() <= 0.5);
            }
            // Spot values at the peak and on a nodal line.
            assert_relative_eq!(t.state([0.25, 0.25]), 1.0, max_relative = 1e-14);
            assert_relative_eq!(
                t.adjoint([0.25, 0.25]),
                -t.params.vartheta,
                max_relative = 1e-14
            );
            assert_eq!(t.control([0.25, 0.25]), 0.5);
            assert!(t.state([0.5, 0.37]).abs() < 1e-14);
            assert!(t.control([0.5, 0.37]).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_triple_optimality_holds_coefficient_wise() {
        // Expand each residual on modes (k,l) ≤ 8 and require it to vanish.
        for s in [0.3, 0.7] {
            let t = ExactTriple::new(params(s)).unwrap();
            // State: coefficients of f + z̄ equal λ^s times those of ū.
            let rhs = sine_coefficients(|x| t.forcing(x) + t.control(x), 8, 64);
            let state = sine_coefficients(|x| t.state(x), 8, 64).apply_fractional(s);
            for ((k, l, a), (_, _, b)) in rhs.iter().zip(state.iter()) {
                assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-10);
                let _ = (k, l);
            }
            // Adjoint: p̄ = L^{-s}(ū - u_d).
            let diff =
                sine_coefficients(|x| t.state(x) - t.desired(x), 8, 64).apply_inverse_fractional(s);
            let adjoint = sine_coefficients(|x| t.adjoint(x), 8, 64);
            for ((k, l, a), (_, _, b)) in diff.iter().zip(adjoint.iter()) {
                assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-10);
                let _ = (k, l);
            }
        }
    }

    #[test]
    fn clipped_control_norm_matches_adaptive_reference() {
        // ‖z̄‖²_{L²} for the clipped (2,2) mode with box [-1/2, 1/2],
        // reference value from 30-digit adaptive quadrature.
        let t = ExactTriple::new(params(0.5)).unwrap();
        let val = crate::quadrature::composite_gauss(
            |x1| {
                crate::quadrature::composite_gauss(
                    |x2| t.control([x1, x2]).powi(2),
                    0.0,
                    1.0,
                    128,
                    4,
                )
            },
            0.0,
            1.0,
            128,
            4,
        );
        assert_relative_eq!(val, 0.13402210652961, max_relative = 2e-4);
    }

    #[test]
    fn exact_triple_rejects_boxes_excluding_zero() {
        let p = FracParams::with_control(0.5, 1.0, 0.1, 0.5).unwrap();
        assert!(ExactTriple::new(p).is_err());
        let p = FracParams::with_control(0.5, 1.0, -0.5, -0.1).unwrap();
        assert!(ExactTriple::new(p).is_err());
    }

    #[test]
    fn psi_satisfies_the_weighted_ode() {
        // ψ'' + (α/y) ψ' - λ ψ = 0, derivatives by central differences.
        for s in [0.2, 0.5, 0.8] {
            let p = params(s);
            for lambda in [2.0, 19.739208802178716] {
                for y in [0.3, 1.0, 2.7] {
                    let h = 1e-4 * y;
                    let (m, c, pl) = (
                        psi_profile(&p, lambda, y - h),
                        psi_profile(&p, lambda, y),
                        psi_profile(&p, lambda, y + h),
                    );
                    let d1 = (pl - m) / (2.0 * h);
                    let d2 = (pl - 2.0 * c + m) / (h * h);
                    let residual = d2 + p.alpha / y * d1 - lambda * c;
                    assert!(
                        (residual / (lambda * c)).abs() < 1e-6,
                        "ODE residual {residual} at s={s}, λ={lambda}, y={y}"
                    );
                }
            }
        }
    }

    #[test]
    fn chi_approaches_psi_away_from_the_cap() {
        // |χ - ψ| ≤ C e^{-ξY} on [0, Y/2], with C staying O(1) as Y grows.
        for s in [0.25, 0.6] {
            let p = params(s);
            let lambda = eigenvalue(1, 1);
            let xi = lambda.sqrt();
            let mut prev_diff = f64::INFINITY;
            for y_cut in [1.0, 1.5, 2.0, 3.0] {
                let mut max_diff = 0.0_f64;
                for i in 0..=50 {
                    let y = 0.5 * y_cut * i as f64 / 50.0;
                    let d = (chi_profile(&p, lambda, y_cut, y) - psi_profile(&p, lambda, y)).abs();
                    max_diff = max_diff.max(d);
                }
                let ratio = max_diff / (-xi * y_cut).exp();
                assert!(ratio < 10.0, "C = {ratio} too large at Y = {y_cut}");
                assert!(max_diff < prev_diff, "gap must shrink as Y grows");
                prev_diff = max_diff;
            }
        }
    }

    #[test]
    fn half_order_conormal_deviation_decays_exponentially() {
        // At s = 1/2 the truncated Dirichlet-to-Neumann factor is ξ coth(ξY);
        // its relative deviation from ξ is 2e^{-2ξY}/(1 - e^{-2ξY}), and the
        // correction e equals that deviation up to sign. Frozen reference at
        // λ = 2π², Y = 3: 2e^{-2ξY} = 5.29557024123134e-12.
        let p = params(0.5);
        let lambda = eigenvalue(1, 1);
        let e = truncation_coefficient(&p, lambda, 3.0);
        assert!(e < 0.0);
        assert_relative_eq!(-e / p.d_s, 5.29557024123134e-12, max_relative = 1e-9);
    }
}
