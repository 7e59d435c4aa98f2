//! Stochastic kernels between finite spaces.

use crate::error::{Error, Result};
use crate::measure::{meet_mass, tv_distance, AtomSpace, ProbMeasure, SignedMeasure, MASS_TOL};
use crate::product::product_measure;

/// Row-stochastic table: one probability measure on `target` per source atom.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteKernel {
    source: AtomSpace,
    target: AtomSpace,
    rows: Vec<ProbMeasure>,
}

impl FiniteKernel {
    pub fn new(source: &AtomSpace, target: &AtomSpace, rows: Vec<ProbMeasure>) -> Result<Self> {
        if rows.len() != source.len() {
            return Err(Error::WeightCount {
                expected: source.len(),
                actual: rows.len(),
            });
        }
        for (i, r) in rows.iter().enumerate() {
            r.space().require(
                target,
                &format!(
                    "row for source atom {} is not on the target space",
                    source.atom(i)
                ),
            )?;
        }
        Ok(FiniteKernel {
            source: source.clone(),
            target: target.clone(),
            rows,
        })
    }

    /// Kernel from a dense matrix, one row per source atom.
    pub fn from_matrix(
        source: &AtomSpace,
        target: &AtomSpace,
        matrix: &[Vec<f64>],
    ) -> Result<Self> {
        if matrix.len() != source.len() {
            return Err(Error::WeightCount {
                expected: source.len(),
                actual: matrix.len(),
            });
        }
        let rows = matrix
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let m = SignedMeasure::from_weights(target, r.clone())?;
                ProbMeasure::new(m).map_err(|e| match e {
                    Error::MassOutOfTolerance { mass } => Error::RowMass {
                        atom: source.atom(i).to_string(),
                        mass,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, rows)
    }

    /// `K_x = ρ` for every `x`.
    pub fn constant(source: &AtomSpace, rho: &ProbMeasure) -> Self {
        FiniteKernel {
            source: source.clone(),
            target: rho.space().clone(),
            rows: vec![rho.clone(); source.len()],
        }
    }

    /// `K_x = δ_x`.
    pub fn identity(space: &AtomSpace) -> Self {
        let rows = space
            .atoms()
            .iter()
            .map(|a| ProbMeasure::point_mass(space, a).expect("atom of its own space"))
            .collect();
        FiniteKernel {
            source: space.clone(),
            target: space.clone(),
            rows,
        }
    }

    pub fn source(&self) -> &AtomSpace {
        &self.source
    }

    pub fn target(&self) -> &AtomSpace {
        &self.target
    }

    pub fn row(&self, i: usize) -> &ProbMeasure {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[ProbMeasure] {
        &self.rows
    }

    fn require_shape(&self, other: &FiniteKernel) -> Result<()> {
        self.source
            .require(&other.source, "kernels have different source spaces")?;
        self.target
            .require(&other.target, "kernels have different target spaces")
    }
}

/// `‖K − K̃‖ = sup_x ‖K_x − K̃_x‖`.
pub fn kernel_tv_distance(k: &FiniteKernel, k_t: &FiniteKernel) -> Result<f64> {
    k.require_shape(k_t)?;
    k.rows
        .iter()
        .zip(&k_t.rows)
        .try_fold(0.0_f64, |acc, (a, b)| Ok(acc.max(tv_distance(a, b)?)))
}

/// `inf_x ‖K_x ∧ K̃_x‖`, computed from the rows directly.
pub fn kernel_overlap_inf(k: &FiniteKernel, k_t: &FiniteKernel) -> Result<f64> {
    k.require_shape(k_t)?;
    k.rows
        .iter()
        .zip(&k_t.rows)
        .try_fold(1.0_f64, |acc, (a, b)| Ok(acc.min(meet_mass(a, b)?)))
}

/// Kernel given by a density against a base probability measure:
/// `K_x({y}) = k(x, y) · λ({y})`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityKernel {
    source: AtomSpace,
    base: ProbMeasure,
    density: Vec<Vec<f64>>,
}

impl DensityKernel {
    pub fn new(source: &AtomSpace, base: &ProbMeasure, density: Vec<Vec<f64>>) -> Result<Self> {
        if density.len() != source.len() {
            return Err(Error::WeightCount {
                expected: source.len(),
                actual: density.len(),
            });
        }
        let target = base.space();
        for (i, row) in density.iter().enumerate() {
            if row.len() != target.len() {
                return Err(Error::WeightCount {
                    expected: target.len(),
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidDensity {
                        source_atom: source.atom(i).to_string(),
                        target_atom: target.atom(j).to_string(),
                        value: v,
                    });
                }
            }
            let mass: f64 = row.iter().zip(base.weights()).map(|(k, l)| k * l).sum();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::RowMass {
                    atom: source.atom(i).to_string(),
                    mass,
                });
            }
        }
        Ok(DensityKernel {
            source: source.clone(),
            base: base.clone(),
            density,
        })
    }

    /// Density of `kernel` with respect to the uniform measure on its target.
    pub fn from_finite_uniform(kernel: &FiniteKernel) -> Self {
        let m = kernel.target().len() as f64;
        DensityKernel {
            source: kernel.source().clone(),
            base: ProbMeasure::uniform(kernel.target()),
            density: kernel
                .rows()
                .iter()
                .map(|r| r.weights().iter().map(|w| w * m).collect())
                .collect(),
        }
    }

    pub fn source(&self) -> &AtomSpace {
        &self.source
    }

    pub fn target(&self) -> &AtomSpace {
        self.base.space()
    }

    pub fn base(&self) -> &ProbMeasure {
        &self.base
    }

    pub fn density(&self, x: usize, y: usize) -> f64 {
        self.density[x][y]
    }

    /// Materializes the rows `k(x, ·) · λ`.
    pub fn to_finite(&self) -> Result<FiniteKernel> {
        let rows = self
            .density
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let w = row
                    .iter()
                    .zip(self.base.weights())
                    .map(|(k, l)| k * l)
                    .collect();
                let m = SignedMeasure::from_weights(self.target(), w)?;
                ProbMeasure::new(m).map_err(|e| match e {
                    Error::MassOutOfTolerance { mass } => Error::RowMass {
                        atom: self.source.atom(i).to_string(),
                        mass,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteKernel::new(&self.source, self.target(), rows)
    }
}

/// Both sides of the one-step overlap inequality for density kernels,
/// `‖μ⊗K ∧ μ̃⊗K̃‖ ≥ ‖μ ∧ μ̃‖ · inf_x ‖K_x ∧ K̃_x‖`, as `(lhs, rhs)`.
///
/// Both kernels must share one base measure.
pub fn density_overlap_check(
    mu: &ProbMeasure,
    mu_t: &ProbMeasure,
    d: &DensityKernel,
    d_t: &DensityKernel,
) -> Result<(f64, f64)> {
    if d.base != d_t.base {
        return Err(Error::BaseMeasureMismatch);
    }
    d.source
        .require(&d_t.source, "density kernels have different source spaces")?;
    let k = d.to_finite()?;
    let k_t = d_t.to_finite()?;
    let q = product_measure(mu, &k)?;
    let q_t = product_measure(mu_t, &k_t)?;
    let lhs = q.meet_mass(&q_t)?;
    let rhs = meet_mass(mu, mu_t)? * kernel_overlap_inf(&k, &k_t)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;

    fn two() -> AtomSpace {
        AtomSpace::range(2).unwrap()
    }

    fn flip(eps: f64) -> FiniteKernel {
        FiniteKernel::from_matrix(
            &two(),
            &two(),
            &[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
        )
        .unwrap()
    }

    #[test]
    fn tv_and_overlap_of_flip_kernels() {
        let id = FiniteKernel::identity(&two());
        let p = flip(0.1);
        assert_eq!(kernel_tv_distance(&id, &id).unwrap(), 0.0);
        assert_eq!(kernel_overlap_inf(&id, &id).unwrap(), 1.0);
        assert!((kernel_tv_distance(&id, &p).unwrap() - 0.2).abs() < 1e-15);
        assert!((kernel_overlap_inf(&id, &p).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn disjoint_rows_are_at_distance_two() {
        let s = two();
        let a = FiniteKernel::identity(&s);
        let b = FiniteKernel::from_matrix(&s, &s, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(kernel_tv_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(kernel_overlap_inf(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = FiniteKernel::identity(&two());
        let b = FiniteKernel::identity(&AtomSpace::range(3).unwrap());
        assert!(matches!(
            kernel_tv_distance(&a, &b),
            Err(Error::SpaceMismatch(_))
        ));
        assert!(kernel_overlap_inf(&a, &b).is_err());
    }

    #[test]
    fn from_matrix_names_bad_row() {
        let s = two();
        let err = FiniteKernel::from_matrix(&s, &s, &[vec![1.0, 0.0], vec![0.5, 0.4]]).unwrap_err();
        assert_eq!(
            err,
            Error::RowMass {
                atom: "1".into(),
                mass: 0.9
            }
        );
    }

    #[test]
    fn unit_density_reproduces_base() {
        let s = AtomSpace::range(3).unwrap();
        let lambda = ProbMeasure::from_weights(&s, vec![0.2, 0.5, 0.3]).unwrap();
        let d = DensityKernel::new(&two(), &lambda, vec![vec![1.0; 3]; 2]).unwrap();
        let k = d.to_finite().unwrap();
        for r in k.rows() {
            assert_eq!(r, &lambda);
        }
    }

    #[test]
    fn density_against_uniform_half() {
        let s = two();
        let lambda = ProbMeasure::uniform(&s);
        let qs = [0.3, 0.85];
        let dens = qs.iter().map(|q| vec![2.0 * q, 2.0 * (1.0 - q)]).collect();
        let k = DensityKernel::new(&s, &lambda, dens)
            .unwrap()
            .to_finite()
            .unwrap();
        for (r, q) in k.rows().iter().zip(qs) {
            assert!((r.weight(&Atom::Int(0)) - q).abs() < 1e-15);
            assert!((r.weight(&Atom::Int(1)) - (1.0 - q)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_row_mass_is_checked() {
        let s = two();
        let lambda = ProbMeasure::uniform(&s);
        let err =
            DensityKernel::new(&s, &lambda, vec![vec![1.0, 1.0], vec![1.0, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::RowMass { ref atom, .. } if atom == "1"));
        assert!(DensityKernel::new(&s, &lambda, vec![vec![2.5, -0.5], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn uniform_density_round_trip() {
        let p = flip(0.37);
        let back = DensityKernel::from_finite_uniform(&p).to_finite().unwrap();
        for (a, b) in p.rows().iter().zip(back.rows()) {
            for (x, y) in a.weights().iter().zip(b.weights()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn density_overlap_trivial_cases() {
        let s = two();
        let mu = ProbMeasure::from_weights(&s, vec![0.4, 0.6]).unwrap();
        let d = DensityKernel::from_finite_uniform(&flip(0.2));
        let (l, r) = density_overlap_check(&mu, &mu, &d, &d).unwrap();
        assert!((l - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);

        let a = ProbMeasure::point_mass(&s, &Atom::Int(0)).unwrap();
        let b = ProbMeasure::point_mass(&s, &Atom::Int(1)).unwrap();
        let d_t = DensityKernel::from_finite_uniform(&flip(0.6));
        let (l, r) = density_overlap_check(&a, &b, &d, &d_t).unwrap();
        assert_eq!(r, 0.0);
        assert!(l >= 0.0);
    }

    #[test]
    fn density_overlap_requires_common_base() {
        let s = two();
        let mu = ProbMeasure::uniform(&s);
        let d = DensityKernel::from_finite_uniform(&flip(0.2));
        let other = ProbMeasure::from_weights(&s, vec![0.25, 0.75]).unwrap();
        let d_t =
            DensityKernel::new(&s, &other, vec![vec![4.0, 0.0], vec![0.0, 4.0 / 3.0]]).unwrap();
        assert_eq!(
            density_overlap_check(&mu, &mu, &d, &d_t),
            Err(Error::BaseMeasureMismatch)
        );
    }
}
