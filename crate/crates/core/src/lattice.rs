//! Uniform space-time grid and the discrete differential operators used by
//! every other module.
//!
//! The grid covers `[0,1] x [x_lo, x_hi]` with `nt` time nodes and `nx`
//! space nodes, both counts including the endpoints. All fields (density,
//! flux, dual potential, multipliers) live on the same collocated grid.
//!
//! Operator conventions:
//! * `d_t` — second-order central differences in the time interior and
//!   second-order one-sided stencils at `t=0` and `t=1`.
//! * `d_xx` — the 3-point second difference in the space interior; the two
//!   boundary columns are set to zero, which encodes the `∂xx φ = 0`
//!   boundary condition of the dual potential and the vanishing flux of
//!   every other field it is applied to.
//! * `integrate` — trapezoidal rule in both directions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform discretization of the space-time domain `[0,1] x [x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice<S> {
    nt: usize,
    nx: usize,
    x_lo: S,
    x_hi: S,
    dt: S,
    dx: S,
}

impl<S: Scalar> Lattice<S> {
    /// Builds a lattice with `nt` time nodes and `nx` space nodes, endpoints
    /// included. Requires `nt >= 3` (one-sided time stencils) and `nx >= 5`
    /// (the fourth-difference stencil spans five nodes).
    pub fn new(nt: usize, nx: usize, x_lo: S, x_hi: S) -> Result<Self> {
        if nt < 3 || nx < 5 {
            return Err(Error::InvalidDimensions { nt, nx });
        }
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(Error::InvalidDomain {
                x_lo: x_lo.as_f64(),
                x_hi: x_hi.as_f64(),
            });
        }
        let dt = S::one() / S::cast_usize(nt - 1);
        let dx = (x_hi - x_lo) / S::cast_usize(nx - 1);
        Ok(Self {
            nt,
            nx,
            x_lo,
            x_hi,
            dt,
            dx,
        })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn x_lo(&self) -> S {
        self.x_lo
    }

    pub fn x_hi(&self) -> S {
        self.x_hi
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn dx(&self) -> S {
        self.dx
    }

    /// Number of nodes on the full grid.
    pub fn node_count(&self) -> usize {
        self.nt * self.nx
    }

    /// Time coordinate of node row `i`.
    pub fn t(&self, i: usize) -> S {
        debug_assert!(i < self.nt);
        S::cast_usize(i) * self.dt
    }

    /// Space coordinate of node column `j`.
    pub fn x(&self, j: usize) -> S {
        debug_assert!(j < self.nx);
        self.x_lo + S::cast_usize(j) * self.dx
    }

    /// All space coordinates, in column order.
    pub fn xs(&self) -> Vec<S> {
        (0..self.nx).map(|j| self.x(j)).collect()
    }

    /// Trapezoidal quadrature weight of column `j` (boundary columns count half).
    fn x_weight(&self, j: usize) -> S {
        if j == 0 || j == self.nx - 1 {
            self.dx * S::cast(0.5)
        } else {
            self.dx
        }
    }

    /// Trapezoidal quadrature weight of time row `i`.
    fn t_weight(&self, i: usize) -> S {
        if i == 0 || i == self.nt - 1 {
            self.dt * S::cast(0.5)
        } else {
            self.dt
        }
    }
}

/// A real-valued function sampled on a [`Lattice`], stored row-major with the
/// time index outermost: `values[i * nx + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<S> {
    lattice: Lattice<S>,
    values: Vec<S>,
}

impl<S: Scalar> Field<S> {
    /// All-zero field.
    pub fn zeros(lattice: &Lattice<S>) -> Self {
        Self {
            lattice: *lattice,
            values: vec![S::zero(); lattice.node_count()],
        }
    }

    /// Samples `f(t, x)` at every node.
    pub fn from_fn(lattice: &Lattice<S>, f: impl Fn(S, S) -> S) -> Self {
        let mut values = Vec::with_capacity(lattice.node_count());
        for i in 0..lattice.nt() {
            let t = lattice.t(i);
            for j in 0..lattice.nx() {
                values.push(f(t, lattice.x(j)));
            }
        }
        Self {
            lattice: *lattice,
            values,
        }
    }

    /// Wraps raw values, checking shape and finiteness.
    pub fn from_values(lattice: &Lattice<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != lattice.node_count() {
            return Err(Error::InvalidField(format!(
                "expected {} values for a {}x{} lattice, got {}",
                lattice.node_count(),
                lattice.nt(),
                lattice.nx(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value at node (t_index={}, x_index={})",
                k / lattice.nx(),
                k % lattice.nx()
            )));
        }
        Ok(Self {
            lattice: *lattice,
            values,
        })
    }

    pub fn lattice(&self) -> &Lattice<S> {
        &self.lattice
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    /// Value at time row `i`, space column `j`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.values[i * self.lattice.nx + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.values[i * self.lattice.nx + j] = v;
    }

    /// Spatial row at time index `i`.
    pub fn row(&self, i: usize) -> &[S] {
        let nx = self.lattice.nx;
        &self.values[i * nx..(i + 1) * nx]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        let nx = self.lattice.nx;
        &mut self.values[i * nx..(i + 1) * nx]
    }

    /// Maximum absolute value over all nodes.
    pub fn max_abs(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Maximum value over all nodes.
    pub fn max_value(&self) -> S {
        self.values
            .iter()
            .fold(S::neg_infinity(), |acc, v| acc.max(*v))
    }

    /// True if every stored value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise `self + scale * other`.
    pub fn axpy(&self, scale: S, other: &Field<S>) -> Field<S> {
        debug_assert_eq!(self.lattice, other.lattice);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + scale * b)
            .collect();
        Field {
            lattice: self.lattice,
            values,
        }
    }
}

/// Discrete time derivative.
///
/// Central differences in the interior, second-order one-sided stencils at
/// the first and last time rows. Exact on fields quadratic in `t`.
pub fn d_t<S: Scalar>(f: &Field<S>) -> Field<S> {
    let lat = *f.lattice();
    let (nt, nx) = (lat.nt(), lat.nx());
    let inv_2dt = S::cast(0.5) / lat.dt();
    let mut out = Field::zeros(&lat);
    for j in 0..nx {
        let three = S::cast(3.0);
        let four = S::cast(4.0);
        out.set(
            0,
            j,
            (-three * f.at(0, j) + four * f.at(1, j) - f.at(2, j)) * inv_2dt,
        );
        out.set(
            nt - 1,
            j,
            (three * f.at(nt - 1, j) - four * f.at(nt - 2, j) + f.at(nt - 3, j)) * inv_2dt,
        );
    }
    for i in 1..nt - 1 {
        for j in 0..nx {
            out.set(i, j, (f.at(i + 1, j) - f.at(i - 1, j)) * inv_2dt);
        }
    }
    out
}

/// Discrete second space derivative.
///
/// 3-point stencil in the interior; the two boundary columns are set to
/// zero (the simply-supported condition on the dual potential, and the
/// vanishing boundary flux for every other field this is applied to).
pub fn d_xx<S: Scalar>(f: &Field<S>) -> Field<S> {
    let lat = *f.lattice();
    let (nt, nx) = (lat.nt(), lat.nx());
    let inv_dx2 = S::one() / (lat.dx() * lat.dx());
    let two = S::cast(2.0);
    let mut out = Field::zeros(&lat);
    for i in 0..nt {
        for j in 1..nx - 1 {
            out.set(
                i,
                j,
                (f.at(i, j - 1) - two * f.at(i, j) + f.at(i, j + 1)) * inv_dx2,
            );
        }
    }
    out
}

/// The operator pair `(d_t, d_xx)` applied to the dual potential.
pub fn grad_txx<S: Scalar>(phi: &Field<S>) -> (Field<S>, Field<S>) {
    (d_t(phi), d_xx(phi))
}

/// Trapezoidal integral of a field over the whole space-time domain.
pub fn integrate<S: Scalar>(f: &Field<S>) -> S {
    let lat = f.lattice();
    let mut total = S::zero();
    for i in 0..lat.nt() {
        let wt = lat.t_weight(i);
        let mut row_sum = S::zero();
        for j in 0..lat.nx() {
            row_sum = row_sum + lat.x_weight(j) * f.at(i, j);
        }
        total = total + wt * row_sum;
    }
    total
}

/// Trapezoidal integral of one spatial row.
pub fn integrate_x<S: Scalar>(row: &[S], lattice: &Lattice<S>) -> S {
    assert_eq!(row.len(), lattice.nx(), "row length must equal nx");
    let mut total = S::zero();
    for (j, &v) in row.iter().enumerate() {
        total = total + lattice.x_weight(j) * v;
    }
    total
}

/// Trapezoidal first moment of one spatial row, `∫ x f(x) dx`.
pub fn mean_x<S: Scalar>(row: &[S], lattice: &Lattice<S>) -> S {
    let mut total = S::zero();
    for (j, &v) in row.iter().enumerate() {
        total = total + lattice.x_weight(j) * lattice.x(j) * v;
    }
    total
}
