//! The ADMM iteration: Step A (global PDE solve for the potential), Step B
//! (pointwise projection onto the dual constraint set), Step C (gradient
//! ascent on the density/flux multiplier), plus initialization, the
//! density-weighted optimality residual, and convergence bookkeeping.

use rayon::prelude::*;

use crate::cost::CostModel;
use crate::density::DensityPair;
use crate::error::{Error, Result};
use crate::lattice::{grad_txx, integrate_x, Field, Lattice};
use crate::pde::{assemble_operator, build_rhs, solve_phi, StepAOperator};
use crate::scalar::Scalar;

/// Initialization scheme for the density iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `rho(t) = (1 - t) rho0 + t rho1`.
    LinearMarginal,
    /// Gaussian smoothing of `rho0` with variance growing linearly to the
    /// variance gap of the marginals; starts near the constant-diffusion
    /// flow.
    HeatKernel,
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<S> {
    /// Augmentation (penalization) parameter, `> 0`.
    pub r: S,
    /// Iteration cap, `>= 1`.
    pub max_iter: usize,
    /// Stop once the residual drops to this level (`0` runs to `max_iter`).
    pub res_tol: S,
    /// Relative residual required of every Step-A linear solve.
    pub lin_tol: S,
    pub init_scheme: InitScheme,
    /// Density super-level fraction used when reporting the primal gap.
    pub rho_mask_fraction: S,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            r: S::cast(64.0),
            max_iter: 3000,
            res_tol: S::cast(1e-6),
            lin_tol: S::cast(1e-10),
            init_scheme: InitScheme::LinearMarginal,
            rho_mask_fraction: S::cast(0.01),
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > S::zero()) || !self.r.is_finite() {
            return Err(Error::Validation(format!(
                "solver.r must be > 0 (got {})",
                self.r
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::Validation("solver.max_iter must be >= 1".into()));
        }
        if self.res_tol < S::zero() || !self.res_tol.is_finite() {
            return Err(Error::Validation(format!(
                "solver.res_tol must be >= 0 (got {})",
                self.res_tol
            )));
        }
        if !(self.lin_tol > S::zero()) || !self.lin_tol.is_finite() {
            return Err(Error::Validation(format!(
                "solver.lin_tol must be > 0 (got {})",
                self.lin_tol
            )));
        }
        let frac = self.rho_mask_fraction;
        if !(frac > S::zero() && frac < S::one()) {
            return Err(Error::Validation(format!(
                "solver.rho_mask_fraction must lie in (0, 1) (got {frac})"
            )));
        }
        Ok(())
    }
}

/// The ADMM iterate: dual potential, constraint-set pair `q = (a, b)`, and
/// primal pair `mu = (rho, m)`.
#[derive(Debug, Clone)]
pub struct AdmmState<S> {
    pub phi: Field<S>,
    pub a: Field<S>,
    pub b: Field<S>,
    pub rho: Field<S>,
    pub m: Field<S>,
}

/// One row of the convergence log.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord<S> {
    pub iteration: usize,
    pub residual: S,
    pub primal_gap: S,
}

/// Convergence diagnostics for a completed run.
#[derive(Debug, Clone)]
pub struct RunReport<S> {
    /// Residual and primal gap at every iteration, in order.
    pub history: Vec<IterationRecord<S>>,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_residual: S,
    /// Final max-norm of `grad phi - q` on the reliable-density region.
    pub primal_gap: S,
}

/// Builds the initial iterate: zero potential and multipliers, interpolated
/// density, and flux `m = gamma_bar * rho` vanishing on the spatial
/// boundary columns.
pub fn init_state<S: Scalar>(
    densities: &DensityPair<S>,
    cost: &CostModel<S>,
    scheme: InitScheme,
) -> AdmmState<S> {
    let lattice = *densities.lattice();
    let (nt, nx) = (lattice.nt(), lattice.nx());
    let mut rho = Field::zeros(&lattice);
    match scheme {
        InitScheme::LinearMarginal => {
            for i in 0..nt {
                let t = lattice.t(i);
                for j in 0..nx {
                    let v = (S::one() - t) * densities.rho0()[j] + t * densities.rho1()[j];
                    rho.set(i, j, v);
                }
            }
        }
        InitScheme::HeatKernel => {
            let var0 = densities.variance(densities.rho0());
            let var1 = densities.variance(densities.rho1());
            let spread = (var1 - var0).max(S::zero());
            let floor = lattice.dx() * lattice.dx() * S::cast(1e-6);
            for i in 0..nt {
                let s = lattice.t(i) * spread;
                if s <= floor {
                    rho.row_mut(i).copy_from_slice(densities.rho0());
                    continue;
                }
                let sd = s.sqrt();
                let mut row = vec![S::zero(); nx];
                for (j, slot) in row.iter_mut().enumerate() {
                    let xj = lattice.x(j);
                    let mut acc = S::zero();
                    for (k, &r0) in densities.rho0().iter().enumerate() {
                        let w = if k == 0 || k == nx - 1 {
                            lattice.dx() * S::cast(0.5)
                        } else {
                            lattice.dx()
                        };
                        acc = acc + w * r0 * crate::density::normal_pdf(xj, lattice.x(k), sd);
                    }
                    *slot = acc;
                }
                let mass = integrate_x(&row, &lattice);
                for (slot, &v) in rho.row_mut(i).iter_mut().zip(&row) {
                    *slot = v / mass;
                }
            }
        }
    }

    let gamma_bar = cost.gamma_bar();
    let mut m = Field::zeros(&lattice);
    for i in 0..nt {
        for j in 1..nx - 1 {
            m.set(i, j, gamma_bar * rho.at(i, j));
        }
    }

    AdmmState {
        phi: Field::zeros(&lattice),
        a: Field::zeros(&lattice),
        b: Field::zeros(&lattice),
        rho,
        m,
    }
}

/// Step A: solve the Step-A system for the new potential. Leaves the state
/// untouched; the caller installs the result.
pub fn step_a<S: Scalar>(
    state: &AdmmState<S>,
    op: &StepAOperator<S>,
    densities: &DensityPair<S>,
    r: S,
    lin_tol: S,
) -> Result<Field<S>> {
    debug_assert!(op.r() == r, "operator assembled with a different r");
    debug_assert!(op.lattice() == state.phi.lattice());
    let rhs = build_rhs(state, densities, r);
    solve_phi(op, &rhs, lin_tol)
}

/// Step B: project `grad phi + mu / r` onto the constraint set at every
/// node. Embarrassingly parallel; each node's output depends only on that
/// node's inputs.
pub fn step_b<S: Scalar>(
    state: &AdmmState<S>,
    cost: &CostModel<S>,
    r: S,
) -> Result<(Field<S>, Field<S>)> {
    let lattice = *state.phi.lattice();
    let nx = lattice.nx();
    let (dt_phi, dxx_phi) = grad_txx(&state.phi);
    let inv_r = S::one() / r;

    let mut a = Field::zeros(&lattice);
    let mut b = Field::zeros(&lattice);
    a.values_mut()
        .par_chunks_mut(nx)
        .zip(b.values_mut().par_chunks_mut(nx))
        .enumerate()
        .try_for_each(|(i, (a_row, b_row))| -> Result<()> {
            for j in 0..nx {
                let alpha = dt_phi.at(i, j) + state.rho.at(i, j) * inv_r;
                let beta = dxx_phi.at(i, j) + state.m.at(i, j) * inv_r;
                let p = cost.project_to_k(alpha, beta).map_err(|e| match e {
                    Error::ProjectionNoConvergence { iterations, .. } => {
                        Error::ProjectionNoConvergence {
                            iterations,
                            node: Some((i, j)),
                        }
                    }
                    other => other,
                })?;
                a_row[j] = p.a;
                b_row[j] = p.b;
            }
            Ok(())
        })?;
    Ok((a, b))
}

/// Step C: dual ascent on `mu = (rho, m)` along `grad phi - q`, no clipping.
pub fn step_c<S: Scalar>(state: &AdmmState<S>, r: S) -> (Field<S>, Field<S>) {
    let (dt_phi, dxx_phi) = grad_txx(&state.phi);
    let rho = state.rho.axpy(r, &dt_phi.axpy(-S::one(), &state.a));
    let m = state.m.axpy(r, &dxx_phi.axpy(-S::one(), &state.b));
    (rho, m)
}

/// Density-weighted optimality residual
/// `max_{t,x} rho |phi_t + F*(phi_xx)|`, evaluated with the same discrete
/// operators the solver uses. Negative density values enter as-is.
pub fn residual<S: Scalar>(state: &AdmmState<S>, cost: &CostModel<S>) -> S {
    let (dt_phi, dxx_phi) = grad_txx(&state.phi);
    let mut worst = S::zero();
    for ((&dt, &dxx), &rho) in dt_phi
        .values()
        .iter()
        .zip(dxx_phi.values())
        .zip(state.rho.values())
    {
        let v = rho * (dt + cost.f_conj(dxx)).abs();
        worst = worst.max(v);
    }
    worst
}

/// Max-norm of `grad phi - q` over nodes whose density clears
/// `mask_fraction` of the current maximum (all nodes if the density has no
/// positive values).
pub fn primal_gap<S: Scalar>(state: &AdmmState<S>, mask_fraction: S) -> S {
    let (dt_phi, dxx_phi) = grad_txx(&state.phi);
    let max_rho = state.rho.max_value();
    let threshold = if max_rho > S::zero() {
        mask_fraction * max_rho
    } else {
        S::neg_infinity()
    };
    let mut worst = S::zero();
    for (k, &rho) in state.rho.values().iter().enumerate() {
        if rho < threshold {
            continue;
        }
        let ga = (dt_phi.values()[k] - state.a.values()[k]).abs();
        let gb = (dxx_phi.values()[k] - state.b.values()[k]).abs();
        worst = worst.max(ga).max(gb);
    }
    worst
}

/// Dual objective `J(phi) = ∫ [phi(0, x) rho0 - phi(1, x) rho1] dx`, a
/// diagnostic only; it carries no convergence contract.
pub fn dual_objective<S: Scalar>(state: &AdmmState<S>, densities: &DensityPair<S>) -> S {
    let lattice = state.phi.lattice();
    let nt = lattice.nt();
    let mut first = Vec::with_capacity(lattice.nx());
    let mut last = Vec::with_capacity(lattice.nx());
    for j in 0..lattice.nx() {
        first.push(state.phi.at(0, j) * densities.rho0()[j]);
        last.push(state.phi.at(nt - 1, j) * densities.rho1()[j]);
    }
    integrate_x(&first, lattice) - integrate_x(&last, lattice)
}

/// Runs the full iteration until the residual meets `res_tol` or `max_iter`
/// is exhausted.
pub fn run<S: Scalar>(
    config: &SolverConfig<S>,
    densities: &DensityPair<S>,
    cost: &CostModel<S>,
    lattice: &Lattice<S>,
) -> Result<(AdmmState<S>, RunReport<S>)> {
    run_with_progress(config, densities, cost, lattice, |_| {})
}

/// [`run`] with a per-iteration streaming hook.
pub fn run_with_progress<S: Scalar>(
    config: &SolverConfig<S>,
    densities: &DensityPair<S>,
    cost: &CostModel<S>,
    lattice: &Lattice<S>,
    mut on_iter: impl FnMut(&IterationRecord<S>),
) -> Result<(AdmmState<S>, RunReport<S>)> {
    config.validate()?;
    if densities.lattice() != lattice {
        return Err(Error::Validation(
            "densities and solver lattice do not match".into(),
        ));
    }

    let op = assemble_operator(lattice, config.r)?;
    let mut state = init_state(densities, cost, config.init_scheme);
    let mut history = Vec::with_capacity(config.max_iter.min(1 << 20));
    let mut converged = false;

    for n in 1..=config.max_iter {
        let with_iter = |e: Error| match e {
            Error::NumericFailure { .. } => e,
            other => Error::NumericFailure {
                iteration: n,
                what: other.to_string(),
            },
        };

        let phi = step_a(&state, &op, densities, config.r, config.lin_tol).map_err(with_iter)?;
        state.phi = phi;
        let (a, b) = step_b(&state, cost, config.r).map_err(with_iter)?;
        state.a = a;
        state.b = b;
        let (rho, m) = step_c(&state, config.r);
        state.rho = rho;
        state.m = m;

        let res = residual(&state, cost);
        let gap = primal_gap(&state, config.rho_mask_fraction);
        if !res.is_finite() || !gap.is_finite() {
            return Err(Error::NumericFailure {
                iteration: n,
                what: format!("non-finite diagnostics (residual {res}, primal gap {gap})"),
            });
        }
        let record = IterationRecord {
            iteration: n,
            residual: res,
            primal_gap: gap,
        };
        on_iter(&record);
        history.push(record);

        if res <= config.res_tol {
            converged = true;
            break;
        }
    }

    let last = history.last().expect("max_iter >= 1 guarantees one record");
    let report = RunReport {
        iterations_used: history.len(),
        converged,
        final_residual: last.residual,
        primal_gap: last.primal_gap,
        history,
    };
    Ok((state, report))
}
