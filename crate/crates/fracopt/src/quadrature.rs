//! Quadrature rules used by assembly, load evaluation, and error functionals.

/// Six-point symmetric triangle rule, exact for polynomials of degree ≤ 4.
/// Entries are `(λ₁, λ₂, λ₃, w)` in barycentric coordinates with the weights
/// summing to one; multiply by the triangle area.
pub const TRI6: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 1.0 - 2.0 * A1;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 1.0 - 2.0 * A2;
    const W2: f64 = 0.109_951_743_655_322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
/// iteration from the Chebyshev-angle initial guess; weights are
/// `2 / ((1 - x²) P_n'(x)²)`. Accurate to machine precision for `n ≲ 10³`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "need at least one quadrature node");
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Root estimate (Chebyshev angle), then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                x -= p / d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((-x, w));
    }
    // Mirror to the positive half; odd n keeps the middle node once.
    for i in (0..n - m).rev() {
        let (x, w) = rule[i];
        rule.push((-x, w));
    }
    rule
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let fk = k as f64;
        let p2 = ((2.0 * fk - 1.0) * x * p1 - (fk - 1.0) * p0) / fk;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Integrate `f` over `[a, b]` with a composite Gauss rule on `panels`
/// equal subintervals of `pts` points each.
pub fn composite_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, pts: usize) -> f64 {
    let base = gauss_legendre(pts);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for &(x, w) in &base {
            total += 0.5 * h * w * f(mid + 0.5 * h * x);
        }
    }
    total
}
