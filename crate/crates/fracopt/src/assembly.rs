//! Finite element assembly: exact `y^α` interval matrices, prism-local
//! blocks, the global weighted stiffness matrix over the cylinder, trace
//! mass matrices, and degree-4 trace loads.

use crate::mesh::{BaseMesh, CylinderMesh};
use crate::params::FracParams;
use crate::quadrature::TRI6;
use crate::sparse::{Csr, Triplets};
use crate::{Error, Result};

/// Integrals of the weight `y^α` against the local linear basis on one
/// vertical interval: `mass[p][q] = ∫ y^α ℓ_p ℓ_q dy` and
/// `stiff[p][q] = ∫ y^α ℓ_p' ℓ_q' dy`, with `ℓ_0` falling and `ℓ_1` rising.
#[derive(Clone, Copy, Debug)]
pub struct WeightedIntervalMatrices {
    pub y_lo: f64,
    pub y_hi: f64,
    pub alpha: f64,
    pub mass: [[f64; 2]; 2],
    pub stiff: [[f64; 2]; 2],
}

/// Closed-form weighted interval matrices.  Every entry reduces to the
/// moments ∫ y^{α+m} dy, m = 1..3, so the first interval (`y_lo = 0`) stays
/// finite for any α > −1; no quadrature is involved.
pub fn weighted_y_integrals(y_lo: f64, y_hi: f64, alpha: f64) -> Result<WeightedIntervalMatrices> {
    if !(alpha > -1.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("weight exponent {alpha} outside (-1, 1)")));
    }
    if !(0.0 <= y_lo && y_lo < y_hi && y_hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad interval [{y_lo}, {y_hi}]")));
    }
    let moment = |m: i32| {
        let e = alpha + m as f64;
        (y_hi.powf(e) - y_lo.powf(e)) / e
    };
    let (p1, p2, p3) = (moment(1), moment(2), moment(3));
    let h2 = (y_hi - y_lo) * (y_hi - y_lo);
    let m00 = (y_hi * y_hi * p1 - 2.0 * y_hi * p2 + p3) / h2;
    let m01 = (-(y_lo * y_hi) * p1 + (y_lo + y_hi) * p2 - p3) / h2;
    let m11 = (y_lo * y_lo * p1 - 2.0 * y_lo * p2 + p3) / h2;
    let s = p1 / h2;
    Ok(WeightedIntervalMatrices {
        y_lo,
        y_hi,
        alpha,
        mass: [[m00, m01], [m01, m11]],
        stiff: [[s, -s], [-s, s]],
    })
}

/// Area and shape-function gradients of a counterclockwise triangle.
pub struct TriGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

pub fn tri_geometry(v: [[f64; 2]; 3]) -> TriGeometry {
    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]);
    debug_assert!(det > 0.0, "triangle is not counterclockwise");
    let grads = [
        [(v[1][1] - v[2][1]) / det, (v[2][0] - v[1][0]) / det],
        [(v[2][1] - v[0][1]) / det, (v[0][0] - v[2][0]) / det],
        [(v[0][1] - v[1][1]) / det, (v[1][0] - v[0][0]) / det],
    ];
    TriGeometry { area: 0.5 * det, grads }
}

impl TriGeometry {
    /// Element stiffness `area · ∇λ_v · ∇λ_w`.
    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let mut s = [[0.0; 3]; 3];
        for v in 0..3 {
            for w in 0..3 {
                s[v][w] =
                    self.area * (self.grads[v][0] * self.grads[w][0] + self.grads[v][1] * self.grads[w][1]);
            }
        }
        s
    }

    /// Element mass `area/12 · (1 + δ_vw)`.
    pub fn mass(&self) -> [[f64; 3]; 3] {
        let off = self.area / 12.0;
        let diag = self.area / 6.0;
        [[diag, off, off], [off, diag, off], [off, off, diag]]
    }
}

/// Local 6×6 prism matrix `∫∫ y^α ∇(λ_v ℓ_p) · ∇(λ_w ℓ_q)` for one triangle
/// × one vertical interval; local index `3p + v`.  The `1/d_s` scaling is
/// applied by the global assembly, not here.
pub fn prism_local(tri: [[f64; 2]; 3], w: &WeightedIntervalMatrices) -> [[f64; 6]; 6] {
    let geo = tri_geometry(tri);
    let sk = geo.stiffness();
    let mk = geo.mass();
    let mut out = [[0.0; 6]; 6];
    for p in 0..2 {
        for v in 0..3 {
            for q in 0..2 {
                for u in 0..3 {
                    out[3 * p + v][3 * q + u] = sk[v][u] * w.mass[p][q] + mk[v][u] * w.stiff[p][q];
                }
            }
        }
    }
    out
}

/// Weighted stiffness matrix of the cylinder over the free DOFs (interior
/// base vertices × layers `0..M−1`), scaled by `1/d_s`.  DOFs on the lateral
/// boundary and the top cap `y = Y` are eliminated.
pub fn assemble_stiffness(mesh: &CylinderMesh, params: &FracParams) -> Result<Csr> {
    let base = &mesh.base;
    let n_int = base.n_interior();
    let m_layers = mesh.n_layers();
    let n_free = n_int * m_layers;
    if n_free == 0 {
        return Err(Error::InvalidParameter("cylinder mesh has no free DOFs".into()));
    }
    let intervals = (0..m_layers)
        .map(|k| {
            let (lo, hi) = mesh.partition.interval(k);
            weighted_y_integrals(lo, hi, params.alpha)
        })
        .collect::<Result<Vec<_>>>()?;

    let inv_d = 1.0 / params.d_s;
    let mut triplets = Triplets::with_capacity(n_free, n_free, 36 * base.n_triangles() * m_layers);
    for t in 0..base.n_triangles() {
        let geo = tri_geometry(base.triangle(t));
        let sk = geo.stiffness();
        let mk = geo.mass();
        let tri = base.triangles[t];
        let slots = [
            base.slot_of[tri[0] as usize],
            base.slot_of[tri[1] as usize],
            base.slot_of[tri[2] as usize],
        ];
        for (k, w) in intervals.iter().enumerate() {
            for p in 0..2 {
                let layer_p = k + p;
                if layer_p == m_layers {
                    continue; // clamped cap
                }
                for v in 0..3 {
                    if slots[v] == u32::MAX {
                        continue; // clamped lateral boundary
                    }
                    let row = layer_p * n_int + slots[v] as usize;
                    for q in 0..2 {
                        let layer_q = k + q;
                        if layer_q == m_layers {
                            continue;
                        }
                        for u in 0..3 {
                            if slots[u] == u32::MAX {
                                continue;
                            }
                            let col = layer_q * n_int + slots[u] as usize;
                            let val = sk[v][u] * w.mass[p][q] + mk[v][u] * w.stiff[p][q];
                            triplets.push(row, col, inv_d * val);
                        }
                    }
                }
            }
        }
    }
    Ok(triplets.into_csr())
}

/// Trace mass matrix over the interior (control-carrying) base vertices.
/// The consistent variant is the P1 Gram matrix; the lumped variant is the
/// diagonal of hat-function integrals ∫ φ_i = Σ_K |K|/3, i.e. the interior
/// row sums of the all-vertex mass matrix.
pub fn assemble_trace_mass(base: &BaseMesh, lumped: bool) -> Csr {
    let n = base.n_interior();
    let mut triplets = Triplets::with_capacity(n, n, if lumped { 3 } else { 9 } * base.n_triangles());
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let tri = base.triangles[t];
        let slots = [
            base.slot_of[tri[0] as usize],
            base.slot_of[tri[1] as usize],
            base.slot_of[tri[2] as usize],
        ];
        for v in 0..3 {
            if slots[v] == u32::MAX {
                continue;
            }
            if lumped {
                triplets.push(slots[v] as usize, slots[v] as usize, area / 3.0);
            } else {
                for w in 0..3 {
                    if slots[w] == u32::MAX {
                        continue;
                    }
                    let val = if v == w { area / 6.0 } else { area / 12.0 };
                    triplets.push(slots[v] as usize, slots[w] as usize, val);
                }
            }
        }
    }
    triplets.into_csr()
}

/// Consistent P1 mass matrix over all base vertices, boundary included.
pub fn assemble_full_mass(base: &BaseMesh) -> Csr {
    let n = base.n_vertices();
    let mut triplets = Triplets::with_capacity(n, n, 9 * base.n_triangles());
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let tri = base.triangles[t];
        for v in 0..3 {
            for w in 0..3 {
                let val = if v == w { area / 6.0 } else { area / 12.0 };
                triplets.push(tri[v] as usize, tri[w] as usize, val);
            }
        }
    }
    triplets.into_csr()
}

/// Load vector `(g, φ_i)` over interior base vertices, exact for `g·φ` of
/// total degree ≤ 4.
pub fn assemble_trace_load(base: &BaseMesh, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; base.n_interior()];
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let [a, b, c] = base.triangle(t);
        let tri = base.triangles[t];
        for &(bary, w) in TRI6.iter() {
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
            ];
            let gw = area * w * g(p);
            for v in 0..3 {
                let slot = base.slot_of[tri[v] as usize];
                if slot != u32::MAX {
                    load[slot as usize] += gw * bary[v];
                }
            }
        }
    }
    load
}

/// ∫ f over the triangulated polygon (degree-4 rule per triangle).  For
/// curved domains the uncovered sliver is *not* included; combine with
/// [`BaseMesh::integrate_outside`] when the full domain is meant.
pub fn quad_integral(base: &BaseMesh, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut total = 0.0;
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let [a, b, c] = base.triangle(t);
        for &(bary, w) in TRI6.iter() {
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
            ];
            total += area * w * f(p);
        }
    }
    total
}
