//! Natural adaptation of pseudo-inertia estimates on the SPD manifold.
//!
//! Each body's estimate `𝓛̂` evolves as `𝓛̂̇ = (1/γ) 𝓛̂ S(η) 𝓛̂`, where `S(η)` is
//! the symmetric 4×4 matrix dual to `η` under the pseudo-inertia map:
//! `tr(S(η) f(δ)) = ηᵀδ` for every parameter vector `δ`.

use std::sync::OnceLock;

use nalgebra::{Matrix4, SMatrix, SymmetricEigen};

use crate::body::{f_inv, f_map, InertialParams, ParamVector, PseudoInertia, Regressor};
use crate::error::{Error, Result};
use crate::spatial::Vec6;

type Mat10 = SMatrix<f64, 10, 10>;

/// Eigenvalue floor applied by the SPD projection fallback.
pub const SPD_FLOOR: f64 = 1e-10;

/// `(row, col)` of the upper-triangle entries used as the symmetric basis.
const SYM_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (3, 3),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 3),
];

fn sym_basis(k: usize) -> Matrix4<f64> {
    let (r, c) = SYM_INDEX[k];
    let mut b = Matrix4::zeros();
    b[(r, c)] = 1.0;
    b[(c, r)] = 1.0;
    b
}

/// `A⁻ᵀ` where `A[k][j] = tr(B_k f(e_j))`; `S(η) = Σ c_k B_k` with `c = A⁻ᵀη`.
fn duality_solver() -> &'static Mat10 {
    static SOLVER: OnceLock<Mat10> = OnceLock::new();
    SOLVER.get_or_init(|| {
        let mut a = Mat10::zeros();
        for j in 0..10 {
            let mut e = ParamVector::zeros();
            e[j] = 1.0;
            let fj = *f_map(&InertialParams::from_vector(&e)).matrix();
            for k in 0..10 {
                a[(k, j)] = (sym_basis(k) * fj).trace();
            }
        }
        a.transpose()
            .try_inverse()
            .expect("pseudo-inertia map is a bijection")
    })
}

/// `η = ʳYᵀ (V_r - V)`.
pub fn eta(yr: &Regressor, v_r: &Vec6, v: &Vec6) -> ParamVector {
    yr.transpose() * (v_r - v)
}

/// Symmetric `S` with `tr(S f(δ)) = ηᵀδ` for all `δ`.
pub fn s_of_eta(eta: &ParamVector) -> Matrix4<f64> {
    let c = duality_solver() * eta;
    let mut s = Matrix4::zeros();
    for (k, &(r, col)) in SYM_INDEX.iter().enumerate() {
        s[(r, col)] = c[k];
        s[(col, r)] = c[k];
    }
    s
}

/// `log(|𝓛̂| / |𝓛|) + tr(𝓛̂⁻¹ 𝓛) - 4`.
pub fn bregman_divergence(l_true: &PseudoInertia, l_hat: &PseudoInertia) -> Result<f64> {
    let chol_true = l_true.matrix().cholesky().ok_or_else(|| Error::Singular {
        what: "true pseudo-inertia".into(),
    })?;
    let chol_hat = l_hat.matrix().cholesky().ok_or_else(|| Error::Singular {
        what: "estimated pseudo-inertia".into(),
    })?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::U4>| {
        2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    };
    let trace = chol_hat.solve(l_true.matrix()).trace();
    Ok(logdet(&chol_hat) - logdet(&chol_true) + trace - 4.0)
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrize and floor eigenvalues at [`SPD_FLOOR`].
pub fn project_spd(m: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|x| x.max(SPD_FLOOR));
    symmetrize(&(eig.eigenvectors * Matrix4::from_diagonal(&d) * eig.eigenvectors.transpose()))
}

/// Per-body estimates sharing one adaptation gain.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState {
    l_hat: Vec<PseudoInertia>,
    gamma: f64,
    fallback_count: u64,
}

impl AdaptState {
    pub fn new(l_hat: Vec<PseudoInertia>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("adaptation gain must be positive"));
        }
        for (i, l) in l_hat.iter().enumerate() {
            if !l.is_positive_definite() {
                return Err(Error::NotPositiveDefinite {
                    what: format!("initial estimate of body {i}"),
                    min_eigenvalue: l.min_eigenvalue(),
                });
            }
        }
        Ok(Self {
            l_hat,
            gamma,
            fallback_count: 0,
        })
    }

    /// Every body starts from `scale · I₄`.
    pub fn uniform(bodies: usize, scale: f64, gamma: f64) -> Result<Self> {
        let l = PseudoInertia::new(Matrix4::identity() * scale)?;
        Self::new(vec![l; bodies], gamma)
    }

    pub fn l_hat(&self) -> &[PseudoInertia] {
        &self.l_hat
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn fallback_count(&self) -> u64 {
        self.fallback_count
    }

    /// `φ̂ = f⁻¹(𝓛̂)` per body.
    pub fn params(&self) -> Vec<InertialParams> {
        self.l_hat.iter().map(f_inv).collect()
    }

    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.l_hat.iter().map(PseudoInertia::min_eigenvalue).collect()
    }

    /// One step for every body; `etas[i]` drives body `i`.
    pub fn step(&mut self, etas: &[ParamVector], dt: f64) -> Result<()> {
        if etas.len() != self.l_hat.len() {
            return Err(Error::Dimension {
                context: "adaptation signals".into(),
                expected: self.l_hat.len(),
                found: etas.len(),
            });
        }
        for (l, eta) in self.l_hat.iter_mut().zip(etas) {
            let (next, projected) = nal_update(l.matrix(), eta, self.gamma, dt);
            if projected {
                self.fallback_count += 1;
            }
            *l = PseudoInertia::new_unchecked(next);
        }
        Ok(())
    }
}

/// `𝓛 ← Gᵀ 𝓛 G`, `G = I + (dt/2γ) S(η) 𝓛`. Returns the new estimate and
/// whether the SPD projection had to be applied.
fn nal_update(l: &Matrix4<f64>, eta: &ParamVector, gamma: f64, dt: f64) -> (Matrix4<f64>, bool) {
    let s = s_of_eta(eta);
    let g = Matrix4::identity() + s * l * (dt / (2.0 * gamma));
    let next = symmetrize(&(g.transpose() * l * g));
    match next.cholesky() {
        Some(_) => (next, false),
        None => (project_spd(&next), true),
    }
}

/// Single-body step. Rejects an estimate that is not SPD.
pub fn nal_step(l_hat: &PseudoInertia, eta: &ParamVector, gamma: f64, dt: f64) -> Result<PseudoInertia> {
    if !l_hat.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            what: "pseudo-inertia estimate".into(),
            min_eigenvalue: l_hat.min_eigenvalue(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("adaptation gain must be positive"));
    }
    Ok(PseudoInertia::new_unchecked(nal_update(l_hat.matrix(), eta, gamma, dt).0))
}
