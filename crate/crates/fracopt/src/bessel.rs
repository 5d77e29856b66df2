//! Modified Bessel functions `I_ν` and `K_ν` of fractional order.
//!
//! The cylinder-extension profiles of each spectral mode are combinations of
//! `(ξy)^s K_s(ξy)` and `(ξy)^s I_s(ξy)`, so these kernels must stay accurate
//! over the whole range met by graded meshes: arguments from `~1e-3` up to
//! `~10^2`, orders in `(0, 1)` (plus `ν ± 1` for recurrence checks).
//!
//! Branch layout:
//! - `I_ν`: ascending power series for `x ≤ 30` (every term positive, so no
//!   cancellation), Hankel's asymptotic expansion beyond,
//! - `K_ν`: Temme's series for `x ≤ 2`, a Steed continued fraction beyond;
//!   both evaluate at a reduced order `μ ∈ [-1/2, 1/2]` and recur upward.
//!
//! Scaled variants `e^{-x} I_ν(x)` and `e^x K_ν(x)` avoid over/underflow when
//! both factors of a ratio like `K_ν(ξY)/I_ν(ξY)` leave the double range.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

const EPS: f64 = 1e-17;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_86;
/// Series / continued-fraction crossover for `K_ν`.
const K_SPLIT: f64 = 2.0;
/// Series / asymptotic crossover for `I_ν`.
const I_SPLIT: f64 = 30.0;

/// `I_ν(x)` for `ν > -1`, `x ≥ 0`.
pub fn bessel_i(nu: f64, x: f64) -> f64 {
    check_order_i(nu, x);
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if x <= I_SPLIT {
        i_series(nu, x)
    } else {
        i_asymptotic_scaled(nu, x) * x.exp()
    }
}

/// `e^{-x} I_ν(x)` for `ν > -1`, `x ≥ 0`; safe for arguments far beyond 700.
pub fn bessel_i_scaled(nu: f64, x: f64) -> f64 {
    check_order_i(nu, x);
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if x <= I_SPLIT {
        i_series(nu, x) * (-x).exp()
    } else {
        i_asymptotic_scaled(nu, x)
    }
}

/// `K_ν(x)` for `ν ≥ 0`, `x > 0`. Underflows to subnormals past `x ≈ 700`;
/// use [`bessel_k_scaled`] there.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_pair(nu, x).0
}

/// `e^x K_ν(x)` for `ν ≥ 0`, `x > 0`; safe for arguments far beyond 700.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    k_pair_scaled(nu, x).0
}

/// `(K_ν(x), K_{ν+1}(x))`, sharing one series/continued-fraction evaluation.
pub fn bessel_k_pair(nu: f64, x: f64) -> (f64, f64) {
    let (a, b) = k_pair_scaled(nu, x);
    let e = (-x).exp();
    (a * e, b * e)
}

fn check_order_i(nu: f64, x: f64) {
    assert!(
        nu > -1.0 && nu.is_finite() && x >= 0.0,
        "bessel_i requires ν > -1 and x ≥ 0, got ν = {nu}, x = {x}"
    );
}

/// `(e^x K_ν, e^x K_{ν+1})`: reduce to `μ ∈ [-1/2, 1/2)` and recur upward.
/// K grows with the order, so forward recursion is stable; scaling commutes
/// with the (linear) recurrence.
fn k_pair_scaled(nu: f64, x: f64) -> (f64, f64) {
    assert!(
        nu >= 0.0 && nu.is_finite() && x > 0.0,
        "bessel_k requires ν ≥ 0 and x > 0, got ν = {nu}, x = {x}"
    );
    let n_up = (nu + 0.5).floor() as usize;
    let mu = nu - n_up as f64;
    debug_assert!((-0.5..0.5 + 1e-12).contains(&mu));
    let (mut k0, mut k1) = if x <= K_SPLIT {
        let (a, b) = k_temme(mu, x);
        let e = x.exp(); // x ≤ 2, no overflow
        (a * e, b * e)
    } else {
        k_cf2_scaled(mu, x)
    };
    for j in 1..=n_up {
        let next = 2.0 * (mu + j as f64) / x * k1 + k0;
        k0 = k1;
        k1 = next;
    }
    (k0, k1)
}

/// Ascending series `I_ν(x) = (x/2)^ν / Γ(1+ν) Σ_m (x²/4)^m / (m! (ν+1)_m)`.
fn i_series(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = (0.5 * x).powf(nu) / gamma(1.0 + nu);
    let mut sum = term;
    for m in 1..400 {
        term *= q / (m as f64 * (nu + m as f64));
        sum += term;
        if term <= sum * EPS {
            break;
        }
    }
    sum
}

/// Hankel expansion of `e^{-x} I_ν(x)`; truncation error below `e^{-2x}` at
/// the smallest term, negligible for `x > 30`.
fn i_asymptotic_scaled(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 1..64 {
        let odd = 2.0 * k as f64 - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k as f64 * x);
        if term.abs() >= prev {
            break; // divergent tail reached
        }
        sum += term;
        prev = term.abs();
        if term.abs() <= sum.abs() * EPS {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Temme's series for `(K_μ, K_{μ+1})`, `|μ| ≤ 1/2`, `0 < x ≤ 2`.
fn k_temme(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < 1e-15 {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-15 { 1.0 } else { e.sinh() / e };
    let gampl = 1.0 / gamma(1.0 + mu); // 1/Γ(1+μ)
    let gammi = 1.0 / gamma(1.0 - mu); // 1/Γ(1-μ)
    // gam1 = (1/Γ(1-μ) - 1/Γ(1+μ))/(2μ) has a removable singularity at μ = 0;
    // switch to its Taylor form before cancellation eats the low digits.
    let gam1 = if mu.abs() >= 1e-4 {
        (gammi - gampl) / (2.0 * mu)
    } else {
        -EULER_GAMMA + 0.042_013_35 * mu * mu
    };
    let gam2 = 0.5 * (gammi + gampl);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp(); // (x/2)^{-μ}
    let mut p = 0.5 * ee / gampl; // ½ (x/2)^{-μ} Γ(1+μ)
    let mut q = 0.5 / (ee * gammi); // ½ (x/2)^{+μ} Γ(1-μ)
    let mut c = 1.0;
    let d2 = x2 * x2;
    let mut sum1 = p;
    for i in 1..500 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Steed's continued fraction for `(e^x K_μ, e^x K_{μ+1})`, `|μ| ≤ 1/2`, `x > 2`.
fn k_cf2_scaled(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = 0.0_f64;
    let mut q2 = 1.0_f64;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}
