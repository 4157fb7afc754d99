//! The Step-A linear solve: a fourth-order space-time PDE for the dual
//! potential.
//!
//! The minimization of the augmented Lagrangian over the potential leads to
//!
//! ```text
//! r (-phi_tt + phi_xxxx) = d_t(rho - r a) - d_xx(m - r b)
//! ```
//!
//! with Neumann conditions in time carrying the marginal data,
//!
//! ```text
//! r phi_t(0, x) = rho_0 - rho(0, x) + r a(0, x)
//! r phi_t(1, x) = rho_1 - rho(1, x) + r a(1, x)
//! ```
//!
//! and simply-supported spatial boundaries `phi = phi_xx = 0`.
//!
//! Discretization: collocated second-order stencils. The time second
//! difference uses ghost-node elimination for the Neumann rows, the spatial
//! fourth difference is the square of the Dirichlet second difference
//! (which encodes `phi_xx = 0` via the reflected ghost value), and the two
//! Neumann rows are scaled by one half so the assembled matrix is symmetric.
//! The sign is chosen so the operator is positive definite, and the system
//! is factored once per run by a banded Cholesky decomposition; solves are
//! finished with iterative refinement down to the requested residual.

use crate::admm::AdmmState;
use crate::density::DensityPair;
use crate::error::{Error, Result};
use crate::lattice::{d_t, d_xx, Field, Lattice};
use crate::scalar::Scalar;

/// Iterative-refinement cap for [`solve_phi`].
const MAX_REFINEMENTS: usize = 8;

/// Symmetric banded matrix in lower-band storage.
///
/// Row `i` stores `A[i][j]` for `j in [i - bw, i]` at
/// `data[i * (bw + 1) + (j - i + bw)]`; entries left of column zero are
/// unused padding.
#[derive(Debug, Clone)]
struct BandMatrix<S> {
    n: usize,
    bw: usize,
    data: Vec<S>,
}

impl<S: Scalar> BandMatrix<S> {
    fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![S::zero(); n * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> S {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: S) {
        let k = self.idx(i, j);
        self.data[k] = self.data[k] + v;
    }

    /// Max row 1-norm of the symmetric band.
    fn inf_norm(&self) -> S {
        let mut sums = vec![S::zero(); self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            sums[i] = sums[i] + self.get(i, i).abs();
            for j in j0..i {
                let a = self.get(i, j).abs();
                sums[i] = sums[i] + a;
                sums[j] = sums[j] + a;
            }
        }
        sums.into_iter().fold(S::zero(), |acc, v| acc.max(v))
    }

    /// `y = A x` using the symmetric band.
    fn matvec(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let mut acc = self.get(i, i) * x[i];
            for j in j0..i {
                let a = self.get(i, j);
                acc = acc + a * x[j];
                y[j] = y[j] + a * x[i];
            }
            y[i] = y[i] + acc;
        }
        y
    }

    /// In-place banded Cholesky; returns the lower factor or the index of a
    /// non-positive pivot.
    fn cholesky(&self) -> std::result::Result<BandMatrix<S>, usize> {
        let mut l = self.clone();
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                let k0 = j0.max(j.saturating_sub(self.bw));
                let mut s = l.get(i, j);
                // Dot the overlapping parts of rows i and j.
                let row_i = i * w;
                let row_j = j * w;
                for k in k0..j {
                    s = s - l.data[row_i + k + self.bw - i] * l.data[row_j + k + self.bw - j];
                }
                let v = s / l.get(j, j);
                l.data[row_i + j + self.bw - i] = v;
            }
            let mut d = l.get(i, i);
            let row_i = i * w;
            for k in j0..i {
                let v = l.data[row_i + k + self.bw - i];
                d = d - v * v;
            }
            if !(d > S::zero()) || !d.is_finite() {
                return Err(i);
            }
            l.data[row_i + self.bw] = d.sqrt();
        }
        Ok(l)
    }

    /// Solves `L L^T x = b` given the Cholesky factor `self`.
    fn solve_with_factor(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x = b.to_vec();
        // Forward: L y = b.
        for i in 0..n {
            let j0 = i.saturating_sub(self.bw);
            let mut s = x[i];
            for j in j0..i {
                s = s - self.get(i, j) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        // Backward: L^T x = y, scattering row j into earlier unknowns.
        for j in (0..n).rev() {
            x[j] = x[j] / self.get(j, j);
            let xj = x[j];
            let j0 = j.saturating_sub(self.bw);
            for k in j0..j {
                x[k] = x[k] - self.get(j, k) * xj;
            }
        }
        x
    }
}

/// Assembled and factored Step-A operator, reusable across all iterations.
#[derive(Debug, Clone)]
pub struct StepAOperator<S> {
    lattice: Lattice<S>,
    r: S,
    matrix: BandMatrix<S>,
    factor: BandMatrix<S>,
}

/// Right-hand side of the Step-A system with boundary data folded in.
///
/// `values` holds the literal linear-system right-hand side on the full
/// grid: source rows at `t = 0, 1` are halved (matching the symmetrized
/// Neumann rows of the operator) and carry the marginal data term; the
/// spatial boundary columns are zero because they are not unknowns.
#[derive(Debug, Clone)]
pub struct StepARhs<S> {
    values: Field<S>,
}

impl<S: Scalar> StepARhs<S> {
    /// Folds a source field and Neumann time-boundary data into a
    /// solver-ready right-hand side.
    ///
    /// `source` is the interior forcing `d_t(rho - r a) - d_xx(m - r b)`
    /// sampled on the whole grid; `neumann0` and `neumann1` are the rows of
    /// `r * phi_t` data at `t = 0` and `t = 1`.
    pub fn from_parts(
        lattice: &Lattice<S>,
        source: &Field<S>,
        neumann0: &[S],
        neumann1: &[S],
    ) -> Self {
        assert_eq!(neumann0.len(), lattice.nx());
        assert_eq!(neumann1.len(), lattice.nx());
        let (nt, nx) = (lattice.nt(), lattice.nx());
        let half = S::cast(0.5);
        let inv_dt = S::one() / lattice.dt();
        let mut values = Field::zeros(lattice);
        for i in 0..nt {
            for j in 1..nx - 1 {
                let v = if i == 0 {
                    half * source.at(0, j) - neumann0[j] * inv_dt
                } else if i == nt - 1 {
                    half * source.at(nt - 1, j) + neumann1[j] * inv_dt
                } else {
                    source.at(i, j)
                };
                values.set(i, j, v);
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &Field<S> {
        &self.values
    }
}

/// Assembles and factors the discrete operator `r (-d_tt + d_xxxx)` with the
/// boundary conditions eliminated.
///
/// Fails if the symmetry/positive-definiteness probes or the Cholesky
/// factorization reject the assembled matrix.
pub fn assemble_operator<S: Scalar>(lattice: &Lattice<S>, r: S) -> Result<StepAOperator<S>> {
    if !(r > S::zero()) || !r.is_finite() {
        return Err(Error::Validation(format!("solver.r must be > 0 (got {r})")));
    }
    let (nt, nx) = (lattice.nt(), lattice.nx());
    let m = nx - 2;
    let n = nt * m;
    let mut a = BandMatrix::zeros(n, m);

    let inv_dt2 = r / (lattice.dt() * lattice.dt());
    let inv_dx4 = r / (lattice.dx() * lattice.dx() * lattice.dx() * lattice.dx());
    let idx = |i: usize, k: usize| i * m + k;

    for i in 0..nt {
        let time_boundary = i == 0 || i == nt - 1;
        // Halved Neumann rows keep the matrix symmetric.
        let w = if time_boundary {
            S::cast(0.5)
        } else {
            S::one()
        };
        let t_diag = if time_boundary {
            inv_dt2
        } else {
            S::cast(2.0) * inv_dt2
        };
        for k in 0..m {
            let row = idx(i, k);
            // Fourth difference = square of the Dirichlet second difference:
            // diagonal 6 (5 next to the boundary), first off-diagonal -4,
            // second off-diagonal 1, all scaled by r/dx^4.
            let x4_diag = if k == 0 || k == m - 1 {
                S::cast(5.0)
            } else {
                S::cast(6.0)
            };
            a.add(row, row, t_diag + w * x4_diag * inv_dx4);
            if k >= 1 {
                a.add(row, idx(i, k - 1), -w * S::cast(4.0) * inv_dx4);
            }
            if k >= 2 {
                a.add(row, idx(i, k - 2), w * inv_dx4);
            }
            if i >= 1 {
                a.add(row, idx(i - 1, k), -inv_dt2);
            }
        }
    }

    probe_operator(&a)?;
    let factor = a
        .cholesky()
        .map_err(|i| Error::AssemblyFailed(format!("non-positive pivot at unknown {i}")))?;
    Ok(StepAOperator {
        lattice: *lattice,
        r,
        matrix: a,
        factor,
    })
}

/// Randomized symmetry and positive-definiteness checks on the assembled
/// matrix. Tolerances scale with the operator norm estimate so the same
/// probe works for both scalar widths.
fn probe_operator<S: Scalar>(a: &BandMatrix<S>) -> Result<()> {
    let mut seed = 0x2545F4914F6CDD1Du64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        S::cast((seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
    };
    let norm = |v: &[S]| v.iter().map(|&x| x * x).sum::<S>().sqrt();
    let dot = |u: &[S], v: &[S]| u.iter().zip(v).map(|(&x, &y)| x * y).sum::<S>();
    let tol = S::cast(1e-10).max(S::epsilon() * S::cast(100.0));

    for probe in 0..10 {
        let u: Vec<S> = (0..a.n).map(|_| next()).collect();
        let v: Vec<S> = (0..a.n).map(|_| next()).collect();
        let au = a.matvec(&u);
        let av = a.matvec(&v);
        let gap = (dot(&au, &v) - dot(&u, &av)).abs();
        let scale = (norm(&au) * norm(&v)).max(norm(&u) * norm(&av)).max(S::one());
        if gap > tol * scale {
            return Err(Error::AssemblyFailed(format!(
                "symmetry probe {probe} failed: gap {gap} vs scale {scale}"
            )));
        }
        let quad = dot(&au, &u);
        if !(quad > S::zero()) {
            return Err(Error::AssemblyFailed(format!(
                "positive-definiteness probe {probe} failed: <Au,u> = {quad}"
            )));
        }
    }
    Ok(())
}

impl<S: Scalar> StepAOperator<S> {
    pub fn lattice(&self) -> &Lattice<S> {
        &self.lattice
    }

    pub fn r(&self) -> S {
        self.r
    }

    /// Applies the discrete operator (boundary conditions folded) to a field
    /// whose spatial boundary columns are zero.
    pub fn apply(&self, phi: &Field<S>) -> Field<S> {
        let x = pack(phi);
        unpack(&self.lattice, &self.matrix.matvec(&x))
    }

    fn pack_rhs(&self, rhs: &StepARhs<S>) -> Vec<S> {
        pack(rhs.values())
    }
}

fn pack<S: Scalar>(f: &Field<S>) -> Vec<S> {
    let lat = f.lattice();
    let (nt, nx) = (lat.nt(), lat.nx());
    let mut v = Vec::with_capacity(nt * (nx - 2));
    for i in 0..nt {
        for j in 1..nx - 1 {
            v.push(f.at(i, j));
        }
    }
    v
}

fn unpack<S: Scalar>(lattice: &Lattice<S>, v: &[S]) -> Field<S> {
    let (nt, nx) = (lattice.nt(), lattice.nx());
    let m = nx - 2;
    let mut f = Field::zeros(lattice);
    for i in 0..nt {
        for k in 0..m {
            f.set(i, k + 1, v[i * m + k]);
        }
    }
    f
}

/// Builds the Step-A right-hand side from the current iterate and the
/// marginal data.
pub fn build_rhs<S: Scalar>(
    state: &AdmmState<S>,
    densities: &DensityPair<S>,
    r: S,
) -> StepARhs<S> {
    let lattice = state.phi.lattice();
    let diff_rho = state.rho.axpy(-r, &state.a);
    let diff_m = state.m.axpy(-r, &state.b);
    let source = d_t(&diff_rho).axpy(-S::one(), &d_xx(&diff_m));

    let nx = lattice.nx();
    let mut neumann0 = Vec::with_capacity(nx);
    let mut neumann1 = Vec::with_capacity(nx);
    let nt = lattice.nt();
    for j in 0..nx {
        neumann0.push(densities.rho0()[j] - state.rho.at(0, j) + r * state.a.at(0, j));
        neumann1.push(densities.rho1()[j] - state.rho.at(nt - 1, j) + r * state.a.at(nt - 1, j));
    }
    StepARhs::from_parts(lattice, &source, &neumann0, &neumann1)
}

/// Solves the factored system down to the requested relative residual,
/// polishing with iterative refinement when the direct pass is not enough.
///
/// The residual is measured as the normwise backward error
/// `||b - A x|| / (||A|| ||x|| + ||b||)`: the plain `||b - A x|| / ||b||`
/// ratio cannot be certified below `eps * ||A|| ||x|| / ||b||` in floating
/// point, which for smooth right-hand sides of this stiff operator sits
/// above any useful tolerance.
pub fn solve_phi<S: Scalar>(
    op: &StepAOperator<S>,
    rhs: &StepARhs<S>,
    lin_tol: S,
) -> Result<Field<S>> {
    let b = op.pack_rhs(rhs);
    let norm = |v: &[S]| v.iter().map(|&x| x * x).sum::<S>().sqrt();
    let b_norm = norm(&b);
    if b_norm == S::zero() {
        return Ok(Field::zeros(&op.lattice));
    }
    let a_norm = op.matrix.inf_norm();

    let mut x = op.factor.solve_with_factor(&b);
    let mut achieved = S::infinity();
    for pass in 0..=MAX_REFINEMENTS {
        let ax = op.matrix.matvec(&x);
        let res: Vec<S> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        achieved = norm(&res) / (a_norm * norm(&x) + b_norm);
        if achieved <= lin_tol {
            return Ok(unpack(&op.lattice, &x));
        }
        if pass == MAX_REFINEMENTS {
            break;
        }
        let dx = op.factor.solve_with_factor(&res);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi = *xi + *di;
        }
    }
    Err(Error::LinearSolverFailure {
        achieved: achieved.as_f64(),
        required: lin_tol.as_f64(),
        iterations: MAX_REFINEMENTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::integrate;
    use std::f64::consts::PI;

    fn lat(nt: usize, nx: usize) -> Lattice<f64> {
        Lattice::new(nt, nx, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let l = lat(9, 9);
        let op = assemble_operator(&l, 64.0).unwrap();
        let rhs = StepARhs::from_parts(&l, &Field::zeros(&l), &vec![0.0; 9], &vec![0.0; 9]);
        let phi = solve_phi(&op, &rhs, 1e-10).unwrap();
        assert_eq!(phi.max_abs(), 0.0);
    }

    #[test]
    fn assembled_operator_passes_probes_at_benchmark_size() {
        let l = lat(128, 128);
        assert!(assemble_operator(&l, 64.0).is_ok());
    }

    #[test]
    fn rejects_nonpositive_r() {
        let l = lat(9, 9);
        assert!(matches!(
            assemble_operator(&l, 0.0),
            Err(Error::Validation(_))
        ));
    }

    /// Manufactured solution with zero Neumann data:
    /// phi(t,x) = cos(pi t) sin(pi x) satisfies all four boundary
    /// conditions, and r(-phi_tt + phi_xxxx) = r (pi^2 + pi^4) cos sin.
    fn manufactured_error(nt: usize, nx: usize, r: f64) -> f64 {
        let l = lat(nt, nx);
        let exact = |t: f64, x: f64| (PI * t).cos() * (PI * x).sin();
        let src = Field::from_fn(&l, |t, x| r * (PI * PI + PI.powi(4)) * exact(t, x));
        let zeros = vec![0.0; nx];
        let rhs = StepARhs::from_parts(&l, &src, &zeros, &zeros);
        let op = assemble_operator(&l, r).unwrap();
        let phi = solve_phi(&op, &rhs, 1e-10).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..nt {
            for j in 0..nx {
                err = err.max((phi.at(i, j) - exact(l.t(i), l.x(j))).abs());
            }
        }
        err
    }

    #[test]
    fn manufactured_solution_second_order() {
        let e1 = manufactured_error(17, 17, 64.0);
        let e2 = manufactured_error(33, 33, 64.0);
        let ratio = e1 / e2;
        assert!(
            (3.4..=4.6).contains(&ratio),
            "error ratio {ratio} outside [3.4, 4.6] (errors {e1:e}, {e2:e})"
        );
    }

    /// Manufactured solution with nonzero Neumann data pins the sign of the
    /// boundary fold-in: phi(t,x) = t sin(pi x) has phi_t = sin(pi x) at both
    /// time ends and -phi_tt = 0, so the whole error is the O(dx^2) spatial
    /// truncation.
    #[test]
    fn manufactured_solution_with_neumann_data() {
        let r = 8.0;
        let errs: Vec<f64> = [(9usize, 17usize), (9, 33)]
            .iter()
            .map(|&(nt, nx)| {
                let l = lat(nt, nx);
                let exact = |t: f64, x: f64| t * (PI * x).sin();
                let src = Field::from_fn(&l, |t, x| r * PI.powi(4) * exact(t, x));
                let data: Vec<f64> = (0..nx).map(|j| r * (PI * l.x(j)).sin()).collect();
                let rhs = StepARhs::from_parts(&l, &src, &data, &data);
                let op = assemble_operator(&l, r).unwrap();
                let phi = solve_phi(&op, &rhs, 1e-10).unwrap();
                let mut err: f64 = 0.0;
                for i in 0..nt {
                    for j in 0..nx {
                        err = err.max((phi.at(i, j) - exact(l.t(i), l.x(j))).abs());
                    }
                }
                err
            })
            .collect();
        assert!(errs[0] < 0.05, "coarse error too large: {:?}", errs);
        let ratio = errs[0] / errs[1];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "spatial refinement ratio {ratio} (errors {errs:?})"
        );
    }

    #[test]
    fn solve_is_linear_in_the_rhs() {
        let l = lat(9, 11);
        let op = assemble_operator(&l, 16.0).unwrap();
        let f1 = Field::from_fn(&l, |t, x| (1.0 + t) * x * (1.0 - x));
        let f2 = Field::from_fn(&l, |t, x| (2.0 - t) * (PI * x).sin());
        let zeros = vec![0.0; 11];
        let r1 = StepARhs::from_parts(&l, &f1, &zeros, &zeros);
        let r2 = StepARhs::from_parts(&l, &f2, &zeros, &zeros);
        let combo_src = f1.axpy(2.5, &f2);
        let rc = StepARhs::from_parts(&l, &combo_src, &zeros, &zeros);

        let p1 = solve_phi(&op, &r1, 1e-11).unwrap();
        let p2 = solve_phi(&op, &r2, 1e-11).unwrap();
        let pc = solve_phi(&op, &rc, 1e-11).unwrap();
        let recombined = p1.axpy(2.5, &p2);
        let gap = pc
            .values()
            .iter()
            .zip(recombined.values())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(gap <= 1e-8 * pc.max_abs().max(1.0), "linearity gap {gap}");
    }

    #[test]
    fn random_rhs_reaches_requested_residual() {
        let l = lat(12, 13);
        let op = assemble_operator(&l, 64.0).unwrap();
        let mut seed = 42u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let src_values: Vec<f64> = (0..l.node_count()).map(|_| next()).collect();
        let src = Field::from_values(&l, src_values).unwrap();
        let n0: Vec<f64> = (0..13).map(|_| next()).collect();
        let n1: Vec<f64> = (0..13).map(|_| next()).collect();
        let rhs = StepARhs::from_parts(&l, &src, &n0, &n1);
        let phi = solve_phi(&op, &rhs, 1e-10).unwrap();

        // Verify the residual claim independently through apply().
        let ax = op.apply(&phi);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..l.nt() {
            for j in 1..l.nx() - 1 {
                num += (ax.at(i, j) - rhs.values().at(i, j)).powi(2);
                den += rhs.values().at(i, j).powi(2);
            }
        }
        assert!(num.sqrt() / den.sqrt() <= 1e-10);
    }

    #[test]
    fn operator_kernel_is_trivial() {
        // A field constant in time with zero spatial boundary values is not
        // in the kernel: the quadratic form stays positive.
        let l = lat(7, 9);
        let op = assemble_operator(&l, 4.0).unwrap();
        let constant_in_t = Field::from_fn(&l, |_t, x| (PI * x).sin());
        let image = op.apply(&constant_in_t);
        let energy = integrate(&mul(&image, &constant_in_t));
        assert!(energy > 0.0);
    }

    #[test]
    fn works_in_f32_on_coarse_grids() {
        let l = Lattice::new(7usize, 9, 0.0f32, 1.0).unwrap();
        let op = assemble_operator(&l, 4.0f32).unwrap();
        let src = Field::from_fn(&l, |t, x| (PI as f32) * t * x * (1.0 - x));
        let zeros = vec![0.0f32; 9];
        let rhs = StepARhs::from_parts(&l, &src, &zeros, &zeros);
        let phi = solve_phi(&op, &rhs, 1e-4f32).unwrap();
        assert!(phi.is_finite());
    }

    fn mul(a: &Field<f64>, b: &Field<f64>) -> Field<f64> {
        Field::from_values(
            a.lattice(),
            a.values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| x * y)
                .collect(),
        )
        .unwrap()
    }
}
