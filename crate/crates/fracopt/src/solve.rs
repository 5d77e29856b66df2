//! State and adjoint solves on the extension cylinder, trace extraction,
//! and the error toolbox (energy norms, trace L² errors against reference
//! evaluators).
//!
//! Coefficient conventions: cylinder unknowns are plain `Vec<f64>` over the
//! free DOFs of a [`CylinderMesh`] (Dirichlet DOFs implicitly zero); trace
//! vectors run over the interior base vertices in slot order and represent
//! piecewise-linear functions vanishing on (and outside) the polygon
//! boundary.

use std::sync::Arc;

use crate::assembly::{assemble_stiffness, assemble_trace_load, assemble_trace_mass};
use crate::mesh::{BaseMesh, CylinderMesh};
use crate::params::FracParams;
use crate::quadrature::TRI6;
use crate::sparse::{solve_spd, CgOutcome, Csr, Preconditioner};
use crate::Result;

/// Assembled cylinder problem: weighted stiffness, trace mass matrices, and
/// a reusable preconditioner.  The matrix depends on the control only
/// through the right-hand side, so one `StateSystem` serves every state and
/// adjoint solve on its mesh.
pub struct StateSystem {
    pub mesh: Arc<CylinderMesh>,
    pub params: FracParams,
    pub matrix: Csr,
    pc: Preconditioner,
    /// Consistent P1 mass over interior base vertices.
    pub trace_mass: Csr,
    /// Lumped trace mass diagonal ∫ φ_i.
    pub lumped: Vec<f64>,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl StateSystem {
    pub fn new(mesh: Arc<CylinderMesh>, params: FracParams) -> Result<StateSystem> {
        let matrix = assemble_stiffness(&mesh, &params)?;
        // Incomplete Cholesky when the factorization survives, Jacobi otherwise.
        let pc = Preconditioner::incomplete_cholesky(&matrix)
            .or_else(|_| Preconditioner::jacobi(&matrix))?;
        let trace_mass = assemble_trace_mass(&mesh.base, false);
        let lumped = assemble_trace_mass(&mesh.base, true).diagonal();
        Ok(StateSystem {
            mesh,
            params,
            matrix,
            pc,
            trace_mass,
            lumped,
            rel_tol: 1e-10,
            max_iter: 10_000,
        })
    }

    pub fn n_free(&self) -> usize {
        self.mesh.n_free_dofs()
    }

    pub fn n_trace(&self) -> usize {
        self.mesh.n_trace_dofs()
    }

    /// Extend an interior-vertex load to the free DOFs (layer 0 holds the
    /// trace plane, everything above is zero).
    pub fn inject_trace(&self, load: &[f64]) -> Vec<f64> {
        debug_assert_eq!(load.len(), self.n_trace());
        let mut rhs = vec![0.0; self.n_free()];
        rhs[..load.len()].copy_from_slice(load);
        rhs
    }

    /// Right-hand side `(z, tr ·)` for nodal trace data `z`.
    pub fn trace_rhs(&self, z: &[f64]) -> Vec<f64> {
        let mut mz = vec![0.0; self.n_trace()];
        self.trace_mass.matvec(z, &mut mz);
        self.inject_trace(&mz)
    }

    /// Solve into `x`, reusing its current content as the initial guess.
    pub fn solve_into(&self, rhs: &[f64], x: &mut Vec<f64>) -> Result<CgOutcome> {
        if x.len() != self.n_free() {
            x.clear();
            x.resize(self.n_free(), 0.0);
        }
        solve_spd(&self.matrix, rhs, x, &self.pc, self.rel_tol, self.max_iter)
    }

    /// State solve for nodal trace data `z`, from a cold start.
    pub fn solve_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.trace_rhs(z);
        let mut x = vec![0.0; self.n_free()];
        self.solve_into(&rhs, &mut x)?;
        Ok(x)
    }

    /// Adjoint solve: rhs `(tr V − u_d, tr ·)` with `u_d` given by its
    /// interior load vector `(u_d, φ_i)`.
    pub fn solve_adjoint(&self, v: &[f64], desired_load: &[f64]) -> Result<Vec<f64>> {
        let trace = self.trace_of(v);
        let mut rhs_tr = vec![0.0; self.n_trace()];
        self.trace_mass.matvec(&trace, &mut rhs_tr);
        for (r, d) in rhs_tr.iter_mut().zip(desired_load) {
            *r -= d;
        }
        let rhs = self.inject_trace(&rhs_tr);
        let mut x = vec![0.0; self.n_free()];
        self.solve_into(&rhs, &mut x)?;
        Ok(x)
    }

    /// Layer-0 nodal values; exact extraction, no interpolation.
    pub fn trace_of(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n_free());
        v[..self.n_trace()].to_vec()
    }

    /// Energy norm sqrt(a(V,V)) in the weighted bilinear form (the 1/d_s
    /// scaling is inside the assembled matrix).
    pub fn energy_norm(&self, v: &[f64]) -> f64 {
        self.matrix.quadratic_form(v).max(0.0).sqrt()
    }

    /// Mode profile along the extended direction: for each grid plane
    /// y = y_k (cap included) the sine coefficient `4·(V(·,y_k), φ_{kx,ly})`.
    pub fn layer_mode_profile(&self, v: &[f64], kx: usize, ly: usize) -> Vec<f64> {
        let base = &self.mesh.base;
        let load = assemble_trace_load(base, |p| crate::spectral::eigenfunction(kx, ly, p));
        let n_int = self.n_trace();
        let mut profile = Vec::with_capacity(self.mesh.n_layers() + 1);
        for layer in 0..self.mesh.n_layers() {
            let slice = &v[layer * n_int..(layer + 1) * n_int];
            profile.push(4.0 * slice.iter().zip(&load).map(|(a, b)| a * b).sum::<f64>());
        }
        profile.push(0.0); // clamped cap
        profile
    }
}

/// ‖U − g‖_{L²(Ω)} for piecewise-linear `U` given by interior nodal values
/// (zero on the boundary).  On curved domains the ∫_{Ω∖Ω_T} g² tail is
/// included, since the discrete function vanishes there.
pub fn trace_l2_error(base: &BaseMesh, u: &[f64], g: impl Fn([f64; 2]) -> f64) -> f64 {
    debug_assert_eq!(u.len(), base.n_interior());
    let mut err2 = 0.0;
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let [a, b, c] = base.triangle(t);
        let tri = base.triangles[t];
        let nodal: [f64; 3] = std::array::from_fn(|v| {
            let slot = base.slot_of[tri[v] as usize];
            if slot == u32::MAX {
                0.0
            } else {
                u[slot as usize]
            }
        });
        for &(bary, w) in TRI6.iter() {
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
            ];
            let val = bary[0] * nodal[0] + bary[1] * nodal[1] + bary[2] * nodal[2];
            let d = val - g(p);
            err2 += area * w * d * d;
        }
    }
    err2 += base.integrate_outside(|p| g(p) * g(p));
    err2.max(0.0).sqrt()
}

/// ‖U − g‖_{L²(Ω)} for piecewise-constant `U` (one value per triangle);
/// curved tail included as above.
pub fn p0_l2_error(base: &BaseMesh, per_triangle: &[f64], g: impl Fn([f64; 2]) -> f64) -> f64 {
    debug_assert_eq!(per_triangle.len(), base.n_triangles());
    let mut err2 = 0.0;
    for t in 0..base.n_triangles() {
        let area = base.triangle_area(t);
        let [a, b, c] = base.triangle(t);
        for &(bary, w) in TRI6.iter() {
            let p = [
                bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
                bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
            ];
            let d = per_triangle[t] - g(p);
            err2 += area * w * d * d;
        }
    }
    err2 += base.integrate_outside(|p| g(p) * g(p));
    err2.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{choose_truncation, BaseMesh, GradedPartition};
    use crate::spectral::{chi_profile, eigenfunction, eigenvalue};
    use approx::assert_abs_diff_eq;

    fn square_system(s: f64, m: usize, layers: usize) -> StateSystem {
        let params = FracParams::new(s).unwrap();
        let base = Arc::new(BaseMesh::unit_square_grid(m));
        let y = choose_truncation(layers, eigenvalue(1, 1), 1.0);
        let part = GradedPartition::graded(layers, s, y, 1.1).unwrap();
        StateSystem::new(Arc::new(CylinderMesh::new(base, part)), params).unwrap()
    }

    fn interpolate(base: &BaseMesh, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        base.interior.iter().map(|&v| g(base.vertices[v as usize])).collect()
    }

    /// Tiny deterministic generator for reproducible pseudo-random vectors.
    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn zero_control_gives_zero_state() {
        let sys = square_system(0.4, 4, 4);
        let v = sys.solve_state(&vec![0.0; sys.n_trace()]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn traces_copy_layer_zero_bitwise() {
        let sys = square_system(0.6, 3, 3);
        let v = pseudo(sys.n_free(), 7);
        let tr = sys.trace_of(&v);
        assert_eq!(tr.as_slice(), &v[..sys.n_trace()]);
    }

    #[test]
    fn control_to_state_map_is_self_adjoint() {
        let sys = square_system(0.3, 5, 6);
        let z1 = pseudo(sys.n_trace(), 1);
        let z2 = pseudo(sys.n_trace(), 2);
        let v1 = sys.solve_state(&z1).unwrap();
        let v2 = sys.solve_state(&z2).unwrap();
        let lhs = sys.trace_mass.bilinear(&sys.trace_of(&v1), &z2);
        let rhs = sys.trace_mass.bilinear(&z1, &sys.trace_of(&v2));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11 * lhs.abs());
    }

    #[test]
    fn energy_identity_holds_at_the_solution() {
        // Galerkin: a(V,V) = F(V) at the discrete solution.
        let sys = square_system(0.7, 5, 5);
        let z = interpolate(&sys.mesh.base, |p| eigenfunction(1, 1, p));
        let rhs = sys.trace_rhs(&z);
        let v = sys.solve_state(&z).unwrap();
        let energy2 = sys.energy_norm(&v).powi(2);
        let work: f64 = rhs.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(energy2, work, epsilon = 1e-9 * work.abs());

        let scaled: Vec<f64> = v.iter().map(|x| -2.5 * x).collect();
        assert_abs_diff_eq!(sys.energy_norm(&scaled), 2.5 * sys.energy_norm(&v), epsilon = 1e-12);
    }

    #[test]
    fn adjoint_vanishes_when_trace_matches_desired() {
        let sys = square_system(0.5, 4, 4);
        let z = interpolate(&sys.mesh.base, |p| eigenfunction(2, 1, p));
        let v = sys.solve_state(&z).unwrap();
        // Desired load manufactured from the trace itself: rhs = M·trV − M·trV.
        let tr = sys.trace_of(&v);
        let mut desired = vec![0.0; sys.n_trace()];
        sys.trace_mass.matvec(&tr, &mut desired);
        let p = sys.solve_adjoint(&v, &desired).unwrap();
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn solver_failures_propagate() {
        let mut sys = square_system(0.5, 4, 4);
        sys.max_iter = 1;
        sys.rel_tol = 1e-14;
        let z = interpolate(&sys.mesh.base, |p| eigenfunction(1, 1, p));
        assert!(sys.solve_state(&z).is_err());
    }

    #[test]
    fn half_case_trace_approaches_the_spectral_solution() {
        // s = 1/2, control φ_{1,1}: continuous solution is λ^{−1/2}φ_{1,1}
        // up to an exponentially small truncation correction; the trace
        // L² error must shrink roughly like the mesh size.
        let lambda = eigenvalue(1, 1);
        let mut errors = Vec::new();
        for &(m, layers) in &[(4usize, 6usize), (8, 12), (16, 24)] {
            let sys = square_system(0.5, m, layers);
            let z = interpolate(&sys.mesh.base, |p| eigenfunction(1, 1, p));
            let v = sys.solve_state(&z).unwrap();
            let y_cut = sys.mesh.partition.y_max;
            let factor = (lambda.sqrt() * y_cut).tanh() / lambda.sqrt();
            let err = trace_l2_error(&sys.mesh.base, &sys.trace_of(&v), |p| {
                factor * eigenfunction(1, 1, p)
            });
            errors.push(err);
        }
        assert!(errors[1] < 0.55 * errors[0], "errors {errors:?}");
        assert!(errors[2] < 0.55 * errors[1], "errors {errors:?}");
    }

    #[test]
    fn mode_profile_follows_the_truncated_cylinder_shape() {
        let sys = square_system(0.5, 12, 16);
        let z = interpolate(&sys.mesh.base, |p| eigenfunction(2, 2, p));
        let v = sys.solve_state(&z).unwrap();
        let profile = sys.layer_mode_profile(&v, 2, 2);
        assert_eq!(profile.len(), sys.mesh.n_layers() + 1);
        assert_eq!(*profile.last().unwrap(), 0.0);

        let lambda = eigenvalue(2, 2);
        let y_cut = sys.mesh.partition.y_max;
        let scale = profile[0];
        assert!(scale > 0.0);
        for (k, &p) in profile.iter().enumerate() {
            let chi = chi_profile(&sys.params, lambda, y_cut, sys.mesh.partition.points[k]);
            assert_abs_diff_eq!(p / scale, chi, epsilon = 0.03);
        }
    }

    #[test]
    fn l2_errors_match_mass_matrix_norms() {
        let base = BaseMesh::unit_square_grid(5);
        let u = pseudo(base.n_interior(), 3);
        let mass = assemble_trace_mass(&base, false);
        let exact = mass.quadratic_form(&u).sqrt();
        assert_abs_diff_eq!(trace_l2_error(&base, &u, |_| 0.0), exact, epsilon = 1e-13);

        // Interpolation error of a smooth function drops ~h².
        let coarse = BaseMesh::unit_square_grid(4);
        let fine = BaseMesh::unit_square_grid(8);
        let g = |p: [f64; 2]| eigenfunction(1, 1, p);
        let e_coarse = trace_l2_error(&coarse, &interpolate(&coarse, g), g);
        let e_fine = trace_l2_error(&fine, &interpolate(&fine, g), g);
        let ratio = e_coarse / e_fine;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn p0_error_handles_constants_exactly() {
        let base = BaseMesh::unit_square_grid(4);
        let u = vec![0.37; base.n_triangles()];
        assert_abs_diff_eq!(p0_l2_error(&base, &u, |_| 0.37), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p0_l2_error(&base, &u, |_| 0.0), 0.37, epsilon = 1e-14);
    }
}
