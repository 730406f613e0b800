//! Planted-spectrum test systems: `A(k) = T · D(k) · T⁻¹` where `D(k)` is
//! block diagonal with 1×1 real blocks and 2×2 rotation blocks whose
//! eigenvalues are prescribed quadratic polynomials in `k`. The eigenvalue
//! paths, and therefore every stability crossing, are known in closed form.

use nalgebra::{DMatrix, DVector};

use crate::modal::{eig_full, sensitivity_bundle_with_curvature, ModalError, C64};
use crate::region::{build_constraints, ConstraintSet};

/// `p(k) = c0 + gᵀ(k − k_ref) + ½ (k − k_ref)ᵀ Q (k − k_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub c0: f64,
    pub g: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl Quadratic {
    pub fn eval(&self, dk: &DVector<f64>) -> f64 {
        self.c0 + self.g.dot(dk) + 0.5 * dk.dot(&(&self.q * dk))
    }

    pub fn gradient(&self, dk: &DVector<f64>) -> DVector<f64> {
        &self.g + &self.q * dk
    }
}

/// One diagonal block: a real eigenvalue `σ(k)`, or the pair `σ(k) ± jω(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantedMode {
    Real(Quadratic),
    Pair { sigma: Quadratic, omega: Quadratic },
}

#[derive(Debug, Clone)]
pub struct PlantedSystem {
    pub modes: Vec<PlantedMode>,
    pub k_ref: DVector<f64>,
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
}

impl PlantedSystem {
    pub fn new(modes: Vec<PlantedMode>, k_ref: DVector<f64>, t: DMatrix<f64>) -> Self {
        let t_inv = t.clone().try_inverse().expect("planted basis must be invertible");
        PlantedSystem {
            modes,
            k_ref,
            t,
            t_inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.modes
            .iter()
            .map(|m| match m {
                PlantedMode::Real(_) => 1,
                PlantedMode::Pair { .. } => 2,
            })
            .sum()
    }

    pub fn n_axes(&self) -> usize {
        self.k_ref.len()
    }

    /// Builds `T·B·T⁻¹` where `B` is block diagonal with per-mode blocks
    /// produced by `real` and `pair`.
    fn conjugated(
        &self,
        real: impl Fn(&Quadratic) -> f64,
        pair: impl Fn(&Quadratic, &Quadratic) -> (f64, f64),
    ) -> DMatrix<f64> {
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        let mut at = 0;
        for mode in &self.modes {
            match mode {
                PlantedMode::Real(s) => {
                    d[(at, at)] = real(s);
                    at += 1;
                }
                PlantedMode::Pair { sigma, omega } => {
                    let (s, w) = pair(sigma, omega);
                    d[(at, at)] = s;
                    d[(at, at + 1)] = w;
                    d[(at + 1, at)] = -w;
                    d[(at + 1, at + 1)] = s;
                    at += 2;
                }
            }
        }
        &self.t * d * &self.t_inv
    }

    pub fn matrix(&self, k: &DVector<f64>) -> DMatrix<f64> {
        let dk = k - &self.k_ref;
        self.conjugated(|s| s.eval(&dk), |s, w| (s.eval(&dk), w.eval(&dk)))
    }

    /// `∂A/∂k_j` at `k`.
    pub fn derivative(&self, k: &DVector<f64>, j: usize) -> DMatrix<f64> {
        let dk = k - &self.k_ref;
        self.conjugated(
            |s| s.gradient(&dk)[j],
            |s, w| (s.gradient(&dk)[j], w.gradient(&dk)[j]),
        )
    }

    /// `∂²A/∂k_j∂k_l` (constant).
    pub fn curvature(&self, j: usize, l: usize) -> DMatrix<f64> {
        self.conjugated(|s| s.q[(j, l)], |s, w| (s.q[(j, l)], w.q[(j, l)]))
    }

    pub fn curvature_tensor(&self) -> Vec<Vec<DMatrix<f64>>> {
        let p = self.n_axes();
        (0..p)
            .map(|j| (0..p).map(|l| self.curvature(j, l)).collect())
            .collect()
    }

    /// Exact eigenvalues at `k`.
    pub fn eigenvalues(&self, k: &DVector<f64>) -> Vec<C64> {
        let dk = k - &self.k_ref;
        let mut out = Vec::with_capacity(self.dim());
        for mode in &self.modes {
            match mode {
                PlantedMode::Real(s) => out.push(C64::new(s.eval(&dk), 0.0)),
                PlantedMode::Pair { sigma, omega } => {
                    let (s, w) = (sigma.eval(&dk), omega.eval(&dk));
                    out.push(C64::new(s, w));
                    out.push(C64::new(s, -w));
                }
            }
        }
        out
    }

    /// Quadratic slope constraints expanded at `k`, with the exact
    /// curvature `∂²A/∂k²` included so the Taylor model is exact.
    pub fn constraints(&self, k: &DVector<f64>) -> Result<ConstraintSet, ModalError> {
        let sol = eig_full(&self.matrix(k))?;
        let m: Vec<_> = (0..self.n_axes()).map(|j| self.derivative(k, j)).collect();
        let curv = self.curvature_tensor();
        let bundle = sensitivity_bundle_with_curvature(&sol, &m, Some(&curv));
        Ok(build_constraints(&bundle, k.as_slice()))
    }

    /// Smallest `k_axis ≥ start` (others fixed by `k`) where some real part
    /// reaches zero, from the closed-form quadratics. `None` if none.
    pub fn crossing(&self, k: &DVector<f64>, axis: usize, start: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for mode in &self.modes {
            let s = match mode {
                PlantedMode::Real(s) => s,
                PlantedMode::Pair { sigma, .. } => sigma,
            };
            let mut base = k - &self.k_ref;
            base[axis] = start - self.k_ref[axis];
            // σ(start + t) = c + b t + ½ a t²
            let c = s.eval(&base);
            let b = s.gradient(&base)[axis];
            let a = s.q[(axis, axis)];
            let root = first_nonnegative_root(0.5 * a, b, c);
            if let Some(t) = root {
                let v = start + t;
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        best
    }
}

/// Smallest `t ≥ 0` with `a t² + b t + c = 0` where `c < 0`.
fn first_nonnegative_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a == 0.0 {
        return (b > 0.0).then(|| -c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
    roots
        .into_iter()
        .filter(|&t| t >= 0.0)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
}

/// A reproducible planted system with `n_pairs` oscillatory pairs and
/// `n_real` real modes over `n_axes` slopes, all stable at `k_ref`.
pub fn planted_example(n_pairs: usize, n_real: usize, n_axes: usize, seed: u64) -> PlantedSystem {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut quad = |c0: f64, gscale: f64, qscale: f64| {
        let g = DVector::from_fn(n_axes, |_, _| gscale * next());
        let mut q = DMatrix::from_fn(n_axes, n_axes, |_, _| qscale * next());
        q = (&q + q.transpose()) * 0.5;
        Quadratic { c0, g, q }
    };
    let mut modes = Vec::new();
    for p in 0..n_pairs {
        let sigma = quad(-1.0 - p as f64, 0.05, 0.004);
        let omega = quad(10.0 + 7.0 * p as f64, 0.1, 0.002);
        modes.push(PlantedMode::Pair { sigma, omega });
    }
    for r in 0..n_real {
        modes.push(PlantedMode::Real(quad(-0.5 - 1.3 * r as f64, 0.04, 0.003)));
    }
    let dim: usize = 2 * n_pairs + n_real;
    let t = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            3.0 + 0.5 * next()
        } else {
            0.5 * next()
        }
    });
    let k_ref = DVector::from_fn(n_axes, |i, _| 10.0 + 2.0 * i as f64);
    PlantedSystem::new(modes, k_ref, t)
}
