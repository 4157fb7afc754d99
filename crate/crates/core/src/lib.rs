//! Local volatility calibration by martingale optimal transport.
//!
//! Given the risk-neutral densities of an asset price at two dates, this
//! crate finds a driftless diffusion that carries the first density into the
//! second while minimizing a convex cost on the diffusion coefficient
//! `gamma = sigma^2 / 2`. The density flow `rho(t, x)` and flux
//! `m(t, x) = rho * gamma` are recovered together, so no time interpolation
//! of option prices is ever needed; the local variance surface is read off
//! as `sigma^2 = 2 m / rho`.
//!
//! The saddle-point formulation is solved with an augmented Lagrangian and
//! ADMM sweeps:
//!
//! * **Step A** — a positive-definite fourth-order space-time solve for the
//!   dual potential ([`pde`]),
//! * **Step B** — pointwise projections onto the convex-conjugate constraint
//!   set `a + F*(b) <= 0` ([`cost`]),
//! * **Step C** — dual ascent on the density/flux pair ([`admm`]),
//!
//! with the density-weighted optimality residual
//! `max rho |phi_t + F*(phi_xx)|` as the stopping criterion.
//!
//! Everything is generic over the floating-point [`Scalar`]; the `*32`/`*64`
//! aliases below pin the two concrete widths. Shipped tolerances assume
//! `f64`.
//!
//! # Quick start
//!
//! ```
//! use mot_core::{admm, calib, cost, density, lattice};
//!
//! let grid = lattice::Lattice::new(17, 33, 0.0, 1.0).unwrap();
//! let rho0 = density::gaussian_density(&grid, 0.5, 0.05).unwrap();
//! let rho1 = density::gaussian_density(&grid, 0.5, 0.1).unwrap();
//! let pair = density::DensityPair::new(&grid, rho0, rho1).unwrap();
//! let cost = cost::CostModel::quadratic(0.00375).unwrap();
//! let config = admm::SolverConfig { max_iter: 50, ..Default::default() };
//!
//! let (state, report) = admm::run(&config, &pair, &cost, &grid).unwrap();
//! let surface = calib::extract_sigma2(&state, 0.1).unwrap();
//! println!(
//!     "{} iterations, residual {:.3e}, mean sigma^2 {:.4}",
//!     report.iterations_used,
//!     report.final_residual,
//!     calib::summarize(&surface).sigma2_mean,
//! );
//! ```

pub mod admm;
pub mod calib;
pub mod cost;
pub mod density;
pub mod error;
pub mod lattice;
pub mod pde;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Lattice32 = lattice::Lattice<f32>;
pub type Lattice64 = lattice::Lattice<f64>;
pub type Field32 = lattice::Field<f32>;
pub type Field64 = lattice::Field<f64>;
pub type CostModel32 = cost::CostModel<f32>;
pub type CostModel64 = cost::CostModel<f64>;
pub type DensityPair32 = density::DensityPair<f32>;
pub type DensityPair64 = density::DensityPair<f64>;
pub type AdmmState32 = admm::AdmmState<f32>;
pub type AdmmState64 = admm::AdmmState<f64>;
pub type SolverConfig32 = admm::SolverConfig<f32>;
pub type SolverConfig64 = admm::SolverConfig<f64>;
pub type RunReport32 = admm::RunReport<f32>;
pub type RunReport64 = admm::RunReport<f64>;
pub type VolSurface32 = calib::VolSurface<f32>;
pub type VolSurface64 = calib::VolSurface<f64>;
