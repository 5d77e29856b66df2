//! The discrete control problem: reduced cost and gradient, box projection,
//! projected limited-memory BFGS, optimality diagnostics, and cell
//! classification around the free boundary.
//!
//! Controls are either piecewise linear (nodal values on interior base
//! vertices, vanishing on the boundary, where the exact optimum vanishes as
//! well) or piecewise constant (one value per base triangle).  The optimizer
//! works in the lumped inner product, under which nodal clipping is the
//! exact metric projection; reported errors always use consistent mass.

use crate::assembly::{assemble_trace_load, quad_integral};
use crate::mesh::BaseMesh;
use crate::solve::StateSystem;
use crate::sparse::{Csr, Triplets};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlScheme {
    /// Continuous piecewise-linear controls on interior vertices.
    P1,
    /// Piecewise-constant controls, one per triangle.
    P0,
}

/// Clip nodal values into `[lo, hi]`; values already inside are untouched
/// bit-exactly, so the map is idempotent.
pub fn project_box(z: &mut [f64], lo: f64, hi: f64) {
    for v in z.iter_mut() {
        if *v < lo {
            *v = lo;
        } else if *v > hi {
            *v = hi;
        }
    }
}

/// ℓ² norm of `z − proj(z − g)`, the first-order optimality residual.
pub fn projected_gradient_norm(z: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    z.iter()
        .zip(g)
        .map(|(&zi, &gi)| {
            let step = (zi - gi).clamp(lo, hi);
            (zi - step) * (zi - step)
        })
        .sum::<f64>()
        .sqrt()
}

/// Reduced cost and gradient at one control.
pub struct Evaluation {
    pub cost: f64,
    /// Gradient in control coordinates: `j'(z)[δ] = grad_euclid · δ`.
    pub grad_euclid: Vec<f64>,
    /// Lumped-metric gradient `D⁻¹ grad_euclid` driving the optimizer.
    pub grad_metric: Vec<f64>,
}

/// All fixed data of one reduced optimization problem
/// `min ½‖tr V(z) − u_d‖² + ϑ/2 ‖z‖²` subject to the state equation with
/// right-hand side `z + f` and nodal box constraints.
pub struct ControlProblem {
    pub system: StateSystem,
    pub scheme: ControlScheme,
    /// Interior load `(u_d, φ_i)`.
    pub desired_load: Vec<f64>,
    /// ∫ u_d² over the full domain (sliver included on curved domains).
    pub desired_sq: f64,
    /// Interior load `(f, φ_i)` of the fixed forcing.
    pub forcing_load: Vec<f64>,
    /// Triangle areas: the P0 control metric and mass.
    areas: Vec<f64>,
    /// P0 coupling `B[i][K] = ∫_K φ_i = |K|/3` (interior vertices × cells).
    coupling: Option<Csr>,
}

impl ControlProblem {
    pub fn new(
        system: StateSystem,
        scheme: ControlScheme,
        u_d: impl Fn([f64; 2]) -> f64,
        forcing: impl Fn([f64; 2]) -> f64,
    ) -> ControlProblem {
        let base = &system.mesh.base;
        let desired_load = assemble_trace_load(base, &u_d);
        let desired_sq =
            quad_integral(base, |p| u_d(p) * u_d(p)) + base.integrate_outside(|p| u_d(p) * u_d(p));
        let forcing_load = assemble_trace_load(base, forcing);
        let areas: Vec<f64> = (0..base.n_triangles()).map(|t| base.triangle_area(t)).collect();
        let coupling = match scheme {
            ControlScheme::P1 => None,
            ControlScheme::P0 => {
                let mut b = Triplets::with_capacity(base.n_interior(), base.n_triangles(), 3 * base.n_triangles());
                for t in 0..base.n_triangles() {
                    for v in 0..3 {
                        let slot = base.slot_of[base.triangles[t][v] as usize];
                        if slot != u32::MAX {
                            b.push(slot as usize, t, areas[t] / 3.0);
                        }
                    }
                }
                Some(b.into_csr())
            }
        };
        ControlProblem { system, scheme, desired_load, desired_sq, forcing_load, areas, coupling }
    }

    pub fn n_controls(&self) -> usize {
        match self.scheme {
            ControlScheme::P1 => self.system.n_trace(),
            ControlScheme::P0 => self.areas.len(),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.system.params.a_bound, self.system.params.b_bound)
    }

    /// `‖z‖²_{L²}` in the control space's consistent inner product.
    pub fn control_mass_sq(&self, z: &[f64]) -> f64 {
        match self.scheme {
            ControlScheme::P1 => self.system.trace_mass.quadratic_form(z),
            ControlScheme::P0 => z.iter().zip(&self.areas).map(|(zi, a)| a * zi * zi).sum(),
        }
    }

    /// Positive diagonal of the optimizer metric.
    pub fn metric_diag(&self) -> &[f64] {
        match self.scheme {
            ControlScheme::P1 => &self.system.lumped,
            ControlScheme::P0 => &self.areas,
        }
    }

    /// Interior-vertex load `(z, φ_i)` of the control plus fixed forcing.
    fn state_load(&self, z: &[f64]) -> Vec<f64> {
        let mut load = self.forcing_load.clone();
        match self.scheme {
            ControlScheme::P1 => {
                let mut mz = vec![0.0; z.len()];
                self.system.trace_mass.matvec(z, &mut mz);
                for (l, m) in load.iter_mut().zip(&mz) {
                    *l += m;
                }
            }
            ControlScheme::P0 => {
                let b = self.coupling.as_ref().expect("P0 coupling");
                let mut bz = vec![0.0; self.system.n_trace()];
                b.matvec(z, &mut bz);
                for (l, m) in load.iter_mut().zip(&bz) {
                    *l += m;
                }
            }
        }
        load
    }

    /// Solve state and adjoint at `z` (warm-starting from the passed
    /// buffers) and return cost and gradients.
    pub fn evaluate(&self, z: &[f64], v: &mut Vec<f64>, p: &mut Vec<f64>) -> Result<Evaluation> {
        debug_assert_eq!(z.len(), self.n_controls());
        let sys = &self.system;
        let rhs = sys.inject_trace(&self.state_load(z));
        sys.solve_into(&rhs, v)?;
        let trace = sys.trace_of(v);

        let mut m_trace = vec![0.0; trace.len()];
        sys.trace_mass.matvec(&trace, &mut m_trace);
        let tracking = 0.5
            * (trace.iter().zip(&m_trace).map(|(a, b)| a * b).sum::<f64>()
                - 2.0 * trace.iter().zip(&self.desired_load).map(|(a, b)| a * b).sum::<f64>()
                + self.desired_sq);
        let vartheta = sys.params.vartheta;
        let cost = tracking + 0.5 * vartheta * self.control_mass_sq(z);

        // Adjoint rhs (tr V − u_d, tr ·); reuse M·trace.
        let mut adj = m_trace;
        for (r, d) in adj.iter_mut().zip(&self.desired_load) {
            *r -= d;
        }
        let rhs = sys.inject_trace(&adj);
        sys.solve_into(&rhs, p)?;
        let q = sys.trace_of(p);

        let (grad_euclid, grad_metric) = match self.scheme {
            ControlScheme::P1 => {
                // j' = M (tr P + ϑ z); Riesz representative tr P + ϑ z.
                let riesz: Vec<f64> = q.iter().zip(z).map(|(qi, zi)| qi + vartheta * zi).collect();
                let mut ge = vec![0.0; z.len()];
                sys.trace_mass.matvec(&riesz, &mut ge);
                let gm: Vec<f64> = ge.iter().zip(&sys.lumped).map(|(g, d)| g / d).collect();
                (ge, gm)
            }
            ControlScheme::P0 => {
                let b = self.coupling.as_ref().expect("P0 coupling");
                let mut btq = vec![0.0; z.len()];
                b.matvec_transpose(&q, &mut btq);
                let ge: Vec<f64> = btq
                    .iter()
                    .zip(z)
                    .zip(&self.areas)
                    .map(|((bq, zi), a)| bq + vartheta * a * zi)
                    .collect();
                let gm: Vec<f64> = ge.iter().zip(&self.areas).map(|(g, a)| g / a).collect();
                (ge, gm)
            }
        };
        Ok(Evaluation { cost, grad_euclid, grad_metric })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    /// Stop when `‖Z − proj(Z − g)‖_{ℓ²} ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Limited-memory depth.
    pub memory: usize,
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { tol: 1e-8, max_iter: 500, memory: 10, armijo_c: 1e-4, max_backtracks: 40 }
    }
}

/// Converged (or flagged) optimizer output.
pub struct ControlIterate {
    pub z: Vec<f64>,
    /// Cylinder state at `z`.
    pub v: Vec<f64>,
    /// Cylinder adjoint at `z`.
    pub p: Vec<f64>,
    pub cost: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, cost, pg_norm)` per outer iteration.
    pub history: Vec<(usize, f64, f64)>,
}

/// Projected limited-memory BFGS in the lumped metric: two-loop recursion
/// with metric-weighted inner products, memory cleared whenever the active
/// set changes, Armijo backtracking on `j ∘ proj`.
pub fn optimize(problem: &ControlProblem, start: &[f64], opts: &OptimizeOptions) -> Result<ControlIterate> {
    let (lo, hi) = problem.bounds();
    let diag = problem.metric_diag().to_vec();
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&diag).map(|((x, y), d)| x * y * d).sum()
    };

    let mut z = start.to_vec();
    project_box(&mut z, lo, hi);
    let mut v = Vec::new();
    let mut p = Vec::new();
    let mut eval = problem.evaluate(&z, &mut v, &mut p)?;

    let active_set = |z: &[f64]| -> Vec<bool> {
        let eps = 1e-10 * (hi - lo);
        z.iter().map(|&zi| zi <= lo + eps || zi >= hi - eps).collect()
    };
    let mut active = active_set(&z);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut history = Vec::new();

    for iter in 0..opts.max_iter {
        let pg = projected_gradient_norm(&z, &eval.grad_metric, lo, hi);
        history.push((iter, eval.cost, pg));
        if pg <= opts.tol {
            return Ok(ControlIterate {
                z,
                v,
                p,
                cost: eval.cost,
                pg_norm: pg,
                iterations: iter,
                converged: true,
                history,
            });
        }

        // Two-loop recursion in the weighted product.
        let mut d: Vec<f64> = eval.grad_metric.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            alphas[k] = rho[k] * wdot(&s_hist[k], &d);
            for (di, yi) in d.iter_mut().zip(&y_hist[k]) {
                *di -= alphas[k] * yi;
            }
        }
        if let (Some(s_last), Some(y_last)) = (s_hist.last(), y_hist.last()) {
            let gamma = wdot(s_last, y_last) / wdot(y_last, y_last);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        }
        for k in 0..s_hist.len() {
            let beta = rho[k] * wdot(&y_hist[k], &d);
            for (di, si) in d.iter_mut().zip(&s_hist[k]) {
                *di += (alphas[k] - beta) * si;
            }
        }
        for di in d.iter_mut() {
            *di = -*di;
        }

        // Armijo on the projected path, with the directional derivative
        // re-measured against the realized step.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut z_trial: Vec<f64> = z.iter().zip(&d).map(|(zi, di)| zi + t * di).collect();
            project_box(&mut z_trial, lo, hi);
            let slope: f64 =
                eval.grad_euclid.iter().zip(&z_trial).zip(&z).map(|((g, zt), zi)| g * (zt - zi)).sum();
            if slope >= 0.0 {
                // Projection bent the step uphill; fall back towards the
                // projected-gradient direction by shrinking.
                t *= 0.5;
                continue;
            }
            let trial = problem.evaluate(&z_trial, &mut v, &mut p)?;
            if trial.cost <= eval.cost + opts.armijo_c * slope {
                accepted = Some((z_trial, trial));
                break;
            }
            t *= 0.5;
        }
        let Some((z_new, eval_new)) = accepted else {
            return Err(Error::LineSearchFailed { iter, cost: eval.cost, pg_norm: pg, history });
        };

        let new_active = active_set(&z_new);
        if new_active != active {
            s_hist.clear();
            y_hist.clear();
            rho.clear();
        } else {
            let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
            let y: Vec<f64> =
                eval_new.grad_metric.iter().zip(&eval.grad_metric).map(|(a, b)| a - b).collect();
            let sy = wdot(&s, &y);
            if sy > 1e-12 * wdot(&s, &s).sqrt() * wdot(&y, &y).sqrt() {
                s_hist.push(s);
                y_hist.push(y);
                rho.push(1.0 / sy);
                if s_hist.len() > opts.memory {
                    s_hist.remove(0);
                    y_hist.remove(0);
                    rho.remove(0);
                }
            }
        }
        active = new_active;
        z = z_new;
        eval = eval_new;
    }

    let pg = projected_gradient_norm(&z, &eval.grad_metric, lo, hi);
    history.push((opts.max_iter, eval.cost, pg));
    Ok(ControlIterate {
        z,
        v,
        p,
        cost: eval.cost,
        pg_norm: pg,
        iterations: opts.max_iter,
        converged: false,
        history,
    })
}

/// Triangles split by where a nodal control sits relative to the bounds:
/// clamped at one bound on the whole cell, strictly inside on the whole
/// cell, or mixed ("kink" cells crossed by the discrete free boundary).
pub struct CellPartition {
    pub active: Vec<u32>,
    pub inactive: Vec<u32>,
    pub kink: Vec<u32>,
    pub active_measure: f64,
    pub inactive_measure: f64,
    pub kink_measure: f64,
}

/// Classify cells for a piecewise-linear control given by interior nodal
/// values (boundary vertices count as zero).  `tol_rel` is measured against
/// the box width.
pub fn classify_cells(base: &BaseMesh, z: &[f64], lo: f64, hi: f64, tol_rel: f64) -> CellPartition {
    debug_assert_eq!(z.len(), base.n_interior());
    let eps = tol_rel * (hi - lo);
    let mut part = CellPartition {
        active: Vec::new(),
        inactive: Vec::new(),
        kink: Vec::new(),
        active_measure: 0.0,
        inactive_measure: 0.0,
        kink_measure: 0.0,
    };
    for t in 0..base.n_triangles() {
        let nodal: [f64; 3] = std::array::from_fn(|v| {
            let slot = base.slot_of[base.triangles[t][v] as usize];
            if slot == u32::MAX {
                0.0
            } else {
                z[slot as usize]
            }
        });
        let area = base.triangle_area(t);
        let all_hi = nodal.iter().all(|&x| x >= hi - eps);
        let all_lo = nodal.iter().all(|&x| x <= lo + eps);
        let all_in = nodal.iter().all(|&x| x > lo + eps && x < hi - eps);
        if all_hi || all_lo {
            part.active.push(t as u32);
            part.active_measure += area;
        } else if all_in {
            part.inactive.push(t as u32);
            part.inactive_measure += area;
        } else {
            part.kink.push(t as u32);
            part.kink_measure += area;
        }
    }
    part
}

/// Regularity exponent entering the predicted convergence rate
/// `(1/2 + σ)/(n+1)`: 1/2 below s = 1/4, then 2s, any θ < 1 at s = 1/2,
/// and 1 above.
pub fn sigma_exponent(s: f64, theta: f64) -> f64 {
    assert!(s > 0.0 && s < 1.0, "s must lie in (0,1)");
    assert!(theta > 0.0 && theta < 1.0, "theta must lie in (0,1)");
    if s < 0.25 {
        0.5
    } else if s < 0.5 {
        2.0 * s
    } else if s == 0.5 {
        theta
    } else {
        1.0
    }
}
