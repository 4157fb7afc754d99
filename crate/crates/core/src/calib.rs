//! Post-processing of a converged state into the deliverable volatility
//! surface `sigma^2(t, x) = 2 m / rho`, with low-density nodes masked.
//!
//! Where the density is close to zero the ratio is noise — the diffusion
//! barely visits those nodes and the transport cost is insensitive to them —
//! so the surface only makes numeric claims on the super-level set
//! `rho >= mask_fraction * max(rho)`.

use crate::admm::AdmmState;
use crate::error::{Error, Result};
use crate::lattice::Field;
use crate::scalar::Scalar;

/// Masked local-variance surface extracted from a solver state.
#[derive(Debug, Clone)]
pub struct VolSurface<S> {
    /// `sigma^2` per node; only meaningful where `mask` is true (masked
    /// nodes hold zero).
    sigma2: Field<S>,
    /// True where the node is reliable (density above the threshold).
    mask: Vec<bool>,
    /// The converged density the mask was derived from.
    rho: Field<S>,
    /// Flux field the surface was derived from.
    m: Field<S>,
    threshold_used: S,
    clip_count: usize,
}

/// Summary statistics over the reliable region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSummary<S> {
    pub unmasked_fraction: S,
    pub sigma2_mean: S,
    pub sigma2_min: S,
    pub sigma2_max: S,
    pub clip_count: usize,
}

impl<S: Scalar> VolSurface<S> {
    pub fn sigma2(&self) -> &Field<S> {
        &self.sigma2
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn rho(&self) -> &Field<S> {
        &self.rho
    }

    pub fn m(&self) -> &Field<S> {
        &self.m
    }

    pub fn threshold_used(&self) -> S {
        self.threshold_used
    }

    /// Number of unmasked nodes whose raw `2 m / rho` was negative and got
    /// clipped to zero.
    pub fn clip_count(&self) -> usize {
        self.clip_count
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        !self.mask[i * self.rho.lattice().nx() + j]
    }
}

/// Inverts `m = rho * gamma` into `sigma^2 = 2 m / rho` on the reliable
/// region, clipping negative values to zero and counting the clips.
pub fn extract_sigma2<S: Scalar>(state: &AdmmState<S>, mask_fraction: S) -> Result<VolSurface<S>> {
    if !(mask_fraction > S::zero() && mask_fraction < S::one()) {
        return Err(Error::Validation(format!(
            "mask_fraction must lie in (0, 1) (got {mask_fraction})"
        )));
    }
    let max_rho = state.rho.max_value();
    if !(max_rho > S::zero()) {
        return Err(Error::EmptyMask {
            threshold: (mask_fraction * max_rho).as_f64(),
        });
    }
    let threshold = mask_fraction * max_rho;

    let lattice = *state.rho.lattice();
    let mut sigma2 = Field::zeros(&lattice);
    let mut mask = vec![false; lattice.node_count()];
    let mut clip_count = 0usize;
    let mut any = false;
    let two = S::cast(2.0);
    for i in 0..lattice.nt() {
        for j in 0..lattice.nx() {
            let rho = state.rho.at(i, j);
            if rho >= threshold {
                let raw = two * state.m.at(i, j) / rho;
                if raw < S::zero() {
                    clip_count += 1;
                    sigma2.set(i, j, S::zero());
                } else {
                    sigma2.set(i, j, raw);
                }
                mask[i * lattice.nx() + j] = true;
                any = true;
            }
        }
    }
    if !any {
        return Err(Error::EmptyMask {
            threshold: threshold.as_f64(),
        });
    }
    Ok(VolSurface {
        sigma2,
        mask,
        rho: state.rho.clone(),
        m: state.m.clone(),
        threshold_used: threshold,
        clip_count,
    })
}

/// Aggregates the reliable region of a surface.
pub fn summarize<S: Scalar>(surface: &VolSurface<S>) -> SurfaceSummary<S> {
    let mut count = 0usize;
    let mut sum = S::zero();
    let mut min = S::infinity();
    let mut max = S::neg_infinity();
    for (k, &keep) in surface.mask.iter().enumerate() {
        if !keep {
            continue;
        }
        let v = surface.sigma2.values()[k];
        count += 1;
        sum = sum + v;
        min = min.min(v);
        max = max.max(v);
    }
    let total = surface.mask.len();
    SurfaceSummary {
        unmasked_fraction: S::cast_usize(count) / S::cast_usize(total),
        sigma2_mean: sum / S::cast_usize(count.max(1)),
        sigma2_min: min,
        sigma2_max: max,
        clip_count: surface.clip_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;

    fn state_with(rho: Field<f64>, m: Field<f64>) -> AdmmState<f64> {
        let l = *rho.lattice();
        AdmmState {
            phi: Field::zeros(&l),
            a: Field::zeros(&l),
            b: Field::zeros(&l),
            rho,
            m,
        }
    }

    #[test]
    fn constant_gamma_inverts_exactly() {
        let l = Lattice::new(5, 9, 0.0, 1.0).unwrap();
        let rho = Field::from_fn(&l, |_t, _x| 2.0);
        let m = Field::from_fn(&l, |_t, _x| 2.0 * 0.00375);
        let surf = extract_sigma2(&state_with(rho, m), 0.1).unwrap();
        let summary = summarize(&surf);
        assert_eq!(summary.unmasked_fraction, 1.0);
        assert_eq!(summary.clip_count, 0);
        assert!((summary.sigma2_mean - 0.0075).abs() < 1e-15);
        assert!((summary.sigma2_min - 0.0075).abs() < 1e-15);
        assert!((summary.sigma2_max - 0.0075).abs() < 1e-15);
    }

    #[test]
    fn low_density_nodes_are_masked() {
        let l = Lattice::new(3, 5, 0.0, 1.0).unwrap();
        let mut rho = Field::from_fn(&l, |_t, _x| 1.0);
        rho.set(1, 2, 0.05); // exactly half the 0.1 threshold
        let m = Field::zeros(&l);
        let surf = extract_sigma2(&state_with(rho, m), 0.1).unwrap();
        assert!(surf.is_masked(1, 2));
        assert!(!surf.is_masked(0, 0));
        let summary = summarize(&surf);
        assert!(summary.unmasked_fraction < 1.0 && summary.unmasked_fraction > 0.0);
    }

    #[test]
    fn negative_flux_is_clipped_and_counted() {
        let l = Lattice::new(3, 5, 0.0, 1.0).unwrap();
        let rho = Field::from_fn(&l, |_t, _x| 1.0);
        let mut m = Field::zeros(&l);
        m.set(0, 1, -0.5);
        let surf = extract_sigma2(&state_with(rho, m), 0.5).unwrap();
        assert_eq!(surf.clip_count(), 1);
        assert_eq!(surf.sigma2().at(0, 1), 0.0);
        assert_eq!(summarize(&surf).clip_count, 1);
    }

    #[test]
    fn scale_consistency_of_unmasked_values() {
        let l = Lattice::new(5, 9, 0.0, 1.0).unwrap();
        let rho = Field::from_fn(&l, |t, x| 1.0 + t + x);
        let m = Field::from_fn(&l, |t, x| 0.001 * (1.0 + t + x) * (1.0 + x));
        let s1 = extract_sigma2(&state_with(rho.clone(), m.clone()), 0.3).unwrap();
        let scaled_rho =
            Field::from_values(&l, rho.values().iter().map(|&v| 3.0 * v).collect()).unwrap();
        let scaled_m =
            Field::from_values(&l, m.values().iter().map(|&v| 3.0 * v).collect()).unwrap();
        let s2 = extract_sigma2(&state_with(scaled_rho, scaled_m), 0.3).unwrap();
        for i in 0..l.nt() {
            for j in 0..l.nx() {
                if !s1.is_masked(i, j) && !s2.is_masked(i, j) {
                    assert!(
                        (s1.sigma2().at(i, j) - s2.sigma2().at(i, j)).abs() < 1e-14,
                        "scale changed sigma2 at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn all_nonpositive_density_is_empty_mask() {
        let l = Lattice::new(3, 5, 0.0, 1.0).unwrap();
        let rho = Field::zeros(&l);
        let m = Field::zeros(&l);
        assert!(matches!(
            extract_sigma2(&state_with(rho, m), 0.1),
            Err(Error::EmptyMask { .. })
        ));
    }

    #[test]
    fn rejects_bad_mask_fraction() {
        let l = Lattice::new(3, 5, 0.0, 1.0).unwrap();
        let rho = Field::from_fn(&l, |_t, _x| 1.0);
        let state = state_with(rho, Field::zeros(&l));
        assert!(extract_sigma2(&state, 0.0).is_err());
        assert!(extract_sigma2(&state, 1.0).is_err());
    }
}
