//! Triangulations of the base domain, graded partitions of the extended
//! direction, and the tensor-product cylinder meshes built from them.
//!
//! Base meshes are deterministic structured grids: a diagonal-split uniform
//! grid on the unit square, and the same logical grid mapped onto a
//! star-shaped domain so that boundary vertices land exactly on the curve.
//! The mapped construction keeps the uncovered sliver `|Ω \ Ω_h|` of order
//! `h²` for convex boundaries, which is what the curved-domain error
//! analysis rests on.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::quadrature::{composite_gauss, gauss_on};
use crate::{Error, Result};

/// Closed curve around a star-shaped domain, given in polar form about an
/// interior point.
pub trait StarBoundary: Send + Sync {
    /// Polar origin; must lie strictly inside the domain.
    fn center(&self) -> [f64; 2];

    /// Distance from the center to the boundary in direction `theta`.
    /// Must be positive, finite, and 2π-periodic.
    fn radius(&self, theta: f64) -> f64;
}

/// Disk of radius `r` about `center`.
#[derive(Clone, Copy, Debug)]
pub struct Disk {
    pub center: [f64; 2],
    pub r: f64,
}

impl Disk {
    pub fn unit() -> Self {
        Disk { center: [0.0, 0.0], r: 1.0 }
    }
}

impl StarBoundary for Disk {
    fn center(&self) -> [f64; 2] {
        self.center
    }

    fn radius(&self, _theta: f64) -> f64 {
        self.r
    }
}

/// Base domain underneath the extension cylinder.
#[derive(Clone)]
pub enum Domain {
    UnitSquare,
    /// Curved star-shaped domain; the triangulation covers only the inscribed
    /// polygon spanned by its boundary vertices.
    Star(Arc<dyn StarBoundary>),
}

/// Conforming triangulation of the base domain.
///
/// All triangles are stored counterclockwise.  `interior` lists the vertex
/// ids that carry degrees of freedom, in ascending order; `slot_of` inverts
/// that list (boundary vertices map to `u32::MAX`).
pub struct BaseMesh {
    pub domain: Domain,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    pub is_boundary: Vec<bool>,
    pub interior: Vec<u32>,
    pub slot_of: Vec<u32>,
    /// Boundary vertices in counterclockwise loop order, each with its
    /// unwrapped polar angle about the star center.  Empty for the square.
    pub boundary_loop: Vec<(u32, f64)>,
    pub h_max: f64,
    pub min_angle_deg: f64,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Vertex ids of a structured (m+1)×(m+1) grid, row-major from the bottom.
fn grid_id(m: usize, ix: usize, iy: usize) -> u32 {
    (iy * (m + 1) + ix) as u32
}

/// Split every grid cell along its shorter diagonal (ties pick the
/// bottom-left/top-right one, so uniform grids always split the same way).
/// The length test keeps mapped cells shape-regular where the radial map
/// shears them.
fn grid_triangles(m: usize, vertices: &[[f64; 2]]) -> Vec<[u32; 3]> {
    let dist2 =
        |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
    let mut triangles = Vec::with_capacity(2 * m * m);
    for iy in 0..m {
        for ix in 0..m {
            let a = grid_id(m, ix, iy);
            let b = grid_id(m, ix + 1, iy);
            let c = grid_id(m, ix + 1, iy + 1);
            let d = grid_id(m, ix, iy + 1);
            let diag_ac = dist2(vertices[a as usize], vertices[c as usize]);
            let diag_bd = dist2(vertices[b as usize], vertices[d as usize]);
            if diag_ac <= diag_bd {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([b, c, d]);
                triangles.push([b, d, a]);
            }
        }
    }
    triangles
}

/// Boundary vertices of the logical grid in counterclockwise order,
/// starting at the bottom-left corner.
fn grid_boundary_ring(m: usize) -> Vec<u32> {
    let mut ring = Vec::with_capacity(4 * m);
    for ix in 0..m {
        ring.push(grid_id(m, ix, 0));
    }
    for iy in 0..m {
        ring.push(grid_id(m, m, iy));
    }
    for ix in (1..=m).rev() {
        ring.push(grid_id(m, ix, m));
    }
    for iy in (1..=m).rev() {
        ring.push(grid_id(m, 0, iy));
    }
    ring
}

impl BaseMesh {
    /// Uniform triangulation of the unit square with `m` cells per side,
    /// each cell split along its bottom-left/top-right diagonal.
    pub fn unit_square_grid(m: usize) -> BaseMesh {
        assert!(m >= 2, "grid needs at least 2 cells per side");
        let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
        let mut is_boundary = Vec::with_capacity((m + 1) * (m + 1));
        for iy in 0..=m {
            for ix in 0..=m {
                vertices.push([ix as f64 / m as f64, iy as f64 / m as f64]);
                is_boundary.push(ix == 0 || ix == m || iy == 0 || iy == m);
            }
        }
        let triangles = grid_triangles(m, &vertices);
        Self::finish(Domain::UnitSquare, vertices, triangles, is_boundary, Vec::new())
    }

    /// `unit_square_grid` with `2^level` cells per side.
    pub fn unit_square(level: u32) -> BaseMesh {
        assert!(level >= 1);
        Self::unit_square_grid(1 << level)
    }

    /// Inscribed-polygon triangulation of a star-shaped domain: the logical
    /// grid on [-1,1]² is mapped radially so the boundary ring lands exactly
    /// on the curve.  Rejects boundaries whose sampled polygon is not convex.
    pub fn star(boundary: Arc<dyn StarBoundary>, m: usize) -> Result<BaseMesh> {
        assert!(m >= 2, "grid needs at least 2 cells per side");
        let c = boundary.center();
        let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
        let mut is_boundary = Vec::with_capacity((m + 1) * (m + 1));
        let mut scale: f64 = 0.0;
        for iy in 0..=m {
            for ix in 0..=m {
                let u = [2.0 * ix as f64 / m as f64 - 1.0, 2.0 * iy as f64 / m as f64 - 1.0];
                let r_inf = u[0].abs().max(u[1].abs());
                let p = if r_inf == 0.0 {
                    c
                } else {
                    let theta = u[1].atan2(u[0]);
                    let rho = boundary.radius(theta);
                    if !(rho > 0.0 && rho.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "boundary radius {rho} at angle {theta} is not positive"
                        )));
                    }
                    scale = scale.max(rho);
                    [c[0] + r_inf * rho * theta.cos(), c[1] + r_inf * rho * theta.sin()]
                };
                vertices.push(p);
                is_boundary.push(ix == 0 || ix == m || iy == 0 || iy == m);
            }
        }

        // Walk the boundary ring and unwrap the polar angles; consecutive
        // increments stay in (0, π) for a star-shaped polygon.
        let ring = grid_boundary_ring(m);
        let mut boundary_loop = Vec::with_capacity(ring.len());
        let mut prev = f64::NAN;
        for &v in &ring {
            let p = vertices[v as usize];
            let raw = (p[1] - c[1]).atan2(p[0] - c[0]);
            let theta = if prev.is_nan() {
                raw
            } else {
                let mut d = (raw - prev) % (2.0 * PI);
                if d <= 0.0 {
                    d += 2.0 * PI;
                }
                prev + d
            };
            prev = theta;
            boundary_loop.push((v, theta));
        }
        let wrap = boundary_loop[0].1 + 2.0 * PI - boundary_loop.last().unwrap().1;
        if !(wrap > 0.0 && wrap < PI) {
            return Err(Error::InvalidParameter("boundary loop does not close around the center".into()));
        }

        // Convexity of the inscribed polygon: every turn is a left turn.
        let n = boundary_loop.len();
        for j in 0..n {
            let p0 = vertices[boundary_loop[j].0 as usize];
            let p1 = vertices[boundary_loop[(j + 1) % n].0 as usize];
            let p2 = vertices[boundary_loop[(j + 2) % n].0 as usize];
            let cross = (p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0]);
            if cross < -1e-12 * scale * scale {
                return Err(Error::InvalidParameter("sampled boundary polygon is not convex".into()));
            }
        }

        let triangles = grid_triangles(m, &vertices);
        Ok(Self::finish(Domain::Star(boundary), vertices, triangles, is_boundary, boundary_loop))
    }

    fn finish(
        domain: Domain,
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[u32; 3]>,
        is_boundary: Vec<bool>,
        boundary_loop: Vec<(u32, f64)>,
    ) -> BaseMesh {
        let mut interior = Vec::new();
        let mut slot_of = vec![u32::MAX; vertices.len()];
        for (v, &bdy) in is_boundary.iter().enumerate() {
            if !bdy {
                slot_of[v] = interior.len() as u32;
                interior.push(v as u32);
            }
        }

        let mut h_max: f64 = 0.0;
        let mut min_angle: f64 = f64::INFINITY;
        for tri in triangles.iter_mut() {
            let [a, b, c] = [
                vertices[tri[0] as usize],
                vertices[tri[1] as usize],
                vertices[tri[2] as usize],
            ];
            let area = signed_area(a, b, c);
            assert!(area != 0.0, "degenerate triangle");
            if area < 0.0 {
                tri.swap(1, 2);
            }
            let sides = [
                ((c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2)).sqrt(),
                ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt(),
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt(),
            ];
            for i in 0..3 {
                let (o, p, q) = (sides[i], sides[(i + 1) % 3], sides[(i + 2) % 3]);
                let cos = ((p * p + q * q - o * o) / (2.0 * p * q)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cos.acos());
                h_max = h_max.max(o);
            }
        }

        BaseMesh {
            domain,
            vertices,
            triangles,
            is_boundary,
            interior,
            slot_of,
            boundary_loop,
            h_max,
            min_angle_deg: min_angle.to_degrees(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Corner coordinates of triangle `t`, counterclockwise.
    pub fn triangle(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        signed_area(a, b, c)
    }

    /// Area of the continuous domain (not of the triangulated polygon).
    pub fn domain_area(&self) -> f64 {
        match &self.domain {
            Domain::UnitSquare => 1.0,
            Domain::Star(b) => {
                0.5 * composite_gauss(|t| b.radius(t) * b.radius(t), 0.0, 2.0 * PI, 64, 8)
            }
        }
    }

    /// Area of the sliver between the curved boundary and the inscribed
    /// polygon; zero for the square.
    pub fn area_deficit(&self) -> f64 {
        let covered: f64 = (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum();
        self.domain_area() - covered
    }

    /// Integral of `f` over the uncovered sliver, one polar panel per
    /// boundary edge between the chord and the curve.
    pub fn integrate_outside(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        let boundary = match &self.domain {
            Domain::UnitSquare => return 0.0,
            Domain::Star(b) => b,
        };
        let c = boundary.center();
        let unit = gauss_on(0.0, 1.0, 8);
        let n = self.boundary_loop.len();
        let mut total = 0.0;
        for j in 0..n {
            let (va, ta) = self.boundary_loop[j];
            let (vb, tb) = self.boundary_loop[(j + 1) % n];
            let tb = if j + 1 == n { tb + 2.0 * PI } else { tb };
            let a = self.vertices[va as usize];
            let b = self.vertices[vb as usize];
            // Outward chord normal: the interior sits left of a CCW edge.
            let nx = b[1] - a[1];
            let ny = -(b[0] - a[0]);
            let na = nx * (a[0] - c[0]) + ny * (a[1] - c[1]);
            for &(xt, wt) in &unit {
                let theta = ta + (tb - ta) * xt;
                let u = [theta.cos(), theta.sin()];
                let denom = nx * u[0] + ny * u[1];
                debug_assert!(denom > 0.0, "chord does not face the center");
                let r_lo = na / denom;
                let r_hi = boundary.radius(theta);
                if r_hi <= r_lo {
                    continue;
                }
                for &(xr, wr) in &unit {
                    let r = r_lo + (r_hi - r_lo) * xr;
                    let p = [c[0] + r * u[0], c[1] + r * u[1]];
                    total += wt * (tb - ta) * wr * (r_hi - r_lo) * r * f(p);
                }
            }
        }
        total
    }

    /// One vertex per line: `id x y boundary_flag`.
    pub fn write_nodes(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(out, "{} {:.16e} {:.16e} {}", v, p[0], p[1], u8::from(self.is_boundary[v]))?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// One triangle per line: `id v0 v1 v2`.
    pub fn write_elements(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(out, "{} {} {} {}", t, tri[0], tri[1], tri[2])?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Partition 0 = y_0 < … < y_M = Y of the extended direction with points
/// y_k = (k/M)^γ · Y, concentrating intervals near the trace plane.
#[derive(Clone, Debug)]
pub struct GradedPartition {
    pub gamma: f64,
    pub y_max: f64,
    pub points: Vec<f64>,
}

impl GradedPartition {
    pub fn new(m: usize, gamma: f64, y_max: f64) -> Result<GradedPartition> {
        if m < 1 {
            return Err(Error::InvalidParameter("partition needs at least one interval".into()));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("grading exponent {gamma} must be >= 1")));
        }
        if !(y_max > 0.0 && y_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("truncation height {y_max} must be positive")));
        }
        let mut points = Vec::with_capacity(m + 1);
        points.push(0.0);
        for k in 1..m {
            points.push((k as f64 / m as f64).powf(gamma) * y_max);
        }
        points.push(y_max);
        Ok(GradedPartition { gamma, y_max, points })
    }

    /// Partition graded for the exponent `s` via [`default_gamma`].
    pub fn graded(m: usize, s: f64, y_max: f64, gamma_factor: f64) -> Result<GradedPartition> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("exponent s = {s} must lie in (0, 1)")));
        }
        if !(gamma_factor >= 1.0 && gamma_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grading factor {gamma_factor} must be >= 1"
            )));
        }
        Self::new(m, default_gamma(s, gamma_factor), y_max)
    }

    pub fn n_intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.points[k], self.points[k + 1])
    }

    pub fn widths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Largest ratio between adjacent interval lengths (the weak
    /// shape-regularity constant; equals 2^γ − 1 for this family).
    pub fn max_ratio(&self) -> f64 {
        let w = self.widths();
        let mut ratio = 1.0_f64;
        for pair in w.windows(2) {
            ratio = ratio.max(pair[1] / pair[0]).max(pair[0] / pair[1]);
        }
        ratio
    }
}

/// Grading exponent with a safety margin above the 3/(2s) threshold that the
/// weighted interpolation estimates require, never below 1.
pub fn default_gamma(s: f64, gamma_factor: f64) -> f64 {
    assert!(s > 0.0 && s < 1.0, "s must lie in (0,1)");
    (gamma_factor * (3.0 / (2.0 * s)).max(1.4)).max(1.0)
}

/// Truncation height equilibrating the exponential tail against the mesh
/// terms: exp(−√λ₁ · Y / 4) = M^{−3/2} / c0, clamped to Y ≥ 1.
pub fn choose_truncation(m: usize, lambda_1: f64, c0: f64) -> f64 {
    assert!(m >= 2, "truncation rule needs at least 2 intervals");
    assert!(lambda_1 > 0.0 && c0 > 0.0);
    let y = 4.0 / lambda_1.sqrt() * (1.5 * (m as f64).ln() + c0.ln());
    y.max(1.0)
}

/// Tensor-product mesh of the cylinder: base triangulation × graded
/// partition.  Free degrees of freedom are (interior base vertex) × (layer
/// 0..M−1); the lateral boundary and the top cap y = Y are clamped.  The
/// global index is `layer * n_interior + slot`, so the trace plane occupies
/// the first `n_interior` indices.
pub struct CylinderMesh {
    pub base: Arc<BaseMesh>,
    pub partition: GradedPartition,
}

impl CylinderMesh {
    pub fn new(base: Arc<BaseMesh>, partition: GradedPartition) -> CylinderMesh {
        assert!(base.n_interior() > 0, "base mesh has no interior vertices");
        CylinderMesh { base, partition }
    }

    /// Number of free layers (the clamped cap layer is not counted).
    pub fn n_layers(&self) -> usize {
        self.partition.n_intervals()
    }

    pub fn n_free_dofs(&self) -> usize {
        self.base.n_interior() * self.n_layers()
    }

    pub fn n_trace_dofs(&self) -> usize {
        self.base.n_interior()
    }

    pub fn n_prisms(&self) -> usize {
        self.base.n_triangles() * self.partition.n_intervals()
    }

    /// Vertex count of the full tensor grid including clamped vertices; this
    /// is the mesh-size figure reported by the experiment harness.
    pub fn total_vertices(&self) -> usize {
        self.base.n_vertices() * (self.partition.n_intervals() + 1)
    }

    pub fn dof(&self, slot: usize, layer: usize) -> usize {
        debug_assert!(slot < self.base.n_interior() && layer < self.n_layers());
        layer * self.base.n_interior() + slot
    }
}
