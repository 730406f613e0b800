//! Eigensolution with biorthonormal left/right eigenvectors, stability
//! margins and first/second-order eigenvalue sensitivities to droop slopes.
//!
//! Right eigenvectors come from a dense nonsymmetric solve of the balanced
//! matrix; left eigenvectors are the rows of `W⁻¹`, so `z_iᵀ w_j = δ_ij`
//! holds by construction. Eigenvalues are ordered by `(Re, Im)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;

/// Modes whose nearest-neighbour gap is below this fraction of `‖A‖₂`
/// are excluded from sensitivity analysis.
pub const DEGENERACY_FRACTION: f64 = 1e-6;

/// `‖z_i‖‖w_i‖` above this marks a near-defective mode.
pub const MAX_EIGENVALUE_CONDITION: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum ModalError {
    #[error("modal: matrix is not square ({0}×{1})")]
    NotSquare(usize, usize),
    #[error("modal: matrix has non-finite entries")]
    NonFinite,
    #[error("modal: eigensolver did not converge")]
    NoConvergence,
    #[error("modal: eigenvector matrix is singular, left eigenvectors undefined")]
    SingularEigenbasis,
    #[error("modal: conjugate pairing incomplete for eigenvalue {value} (mode {mode})")]
    Pairing { mode: usize, value: C64 },
    #[error(
        "modal: mode {mode} ({value}) is degenerate: gap {gap:.3e} < threshold {threshold:.3e}; clustered with {cluster:?}"
    )]
    Degenerate {
        mode: usize,
        value: C64,
        gap: f64,
        threshold: f64,
        cluster: Vec<(usize, C64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    /// Gap to the nearest eigenvalue below the degeneracy threshold.
    Degenerate,
    /// `z_iᵀ w_i` could not be normalized reliably.
    Defective,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExcludedMode {
    pub mode: usize,
    pub reason: ExclusionReason,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub values: Vec<C64>,
    /// Right eigenvectors `w_i` as unit-norm columns.
    pub right: DMatrix<C64>,
    /// Left eigenvectors `z_i` as rows, `Z W = I`.
    pub left: DMatrix<C64>,
    /// Conjugate partner of each mode; a real mode is its own partner.
    pub partner: Vec<usize>,
    pub gaps: Vec<f64>,
    /// `‖A‖₂` of the analysed matrix.
    pub norm: f64,
    /// `‖z_i‖ ‖w_i‖`.
    pub condition: Vec<f64>,
}

impl EigenSolution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_real(&self, i: usize) -> bool {
        self.partner[i] == i
    }

    pub fn degeneracy_threshold(&self) -> f64 {
        DEGENERACY_FRACTION * self.norm
    }

    /// Modes excluded from sensitivity and constraint generation.
    pub fn excluded(&self) -> Vec<ExcludedMode> {
        let threshold = self.degeneracy_threshold();
        (0..self.len())
            .filter_map(|i| {
                let reason = if self.gaps[i] < threshold {
                    ExclusionReason::Degenerate
                } else if !(self.condition[i] < MAX_EIGENVALUE_CONDITION) {
                    ExclusionReason::Defective
                } else {
                    return None;
                };
                Some(ExcludedMode {
                    mode: i,
                    reason,
                    gap: self.gaps[i],
                })
            })
            .collect()
    }

    pub fn included(&self) -> Vec<bool> {
        let mut inc = vec![true; self.len()];
        for e in self.excluded() {
            inc[e.mode] = false;
        }
        inc
    }

    /// `‖A w_i − λ_i w_i‖₂` for every mode.
    pub fn residuals(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let ac = a.map(|v| C64::new(v, 0.0));
        let aw = &ac * &self.right;
        (0..self.len())
            .map(|i| (aw.column(i) - self.right.column(i) * self.values[i]).norm())
            .collect()
    }

    /// `max_{i,j} |z_iᵀ w_j − δ_ij|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let p = &self.left * &self.right;
        let mut worst = 0.0f64;
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `max_i Re λ_i`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns an error naming the cluster if mode `i` is degenerate.
    pub fn check_separated(&self, i: usize) -> Result<(), ModalError> {
        let threshold = self.degeneracy_threshold();
        if self.gaps[i] >= threshold {
            return Ok(());
        }
        let cluster = (0..self.len())
            .filter(|&k| k != i && (self.values[k] - self.values[i]).norm() < threshold)
            .map(|k| (k, self.values[k]))
            .collect();
        Err(ModalError::Degenerate {
            mode: i,
            value: self.values[i],
            gap: self.gaps[i],
            threshold,
            cluster,
        })
    }

    /// `Z M W`, the modal projection of a parameter derivative.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<C64> {
        let mc = m.map(|v| C64::new(v, 0.0));
        &self.left * mc * &self.right
    }
}

/// Diagonal similarity `B = D⁻¹ A D` by powers of two so that row and
/// column norms are comparable. Returns `B` and the diagonal of `D`.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                b.row_mut(i).scale_mut(1.0 / f);
                b.column_mut(i).scale_mut(f);
            }
        }
    }
    (b, d)
}

fn check_input(a: &DMatrix<f64>) -> Result<(), ModalError> {
    if a.nrows() != a.ncols() {
        return Err(ModalError::NotSquare(a.nrows(), a.ncols()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ModalError::NonFinite);
    }
    Ok(())
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn sort_order(values: &[C64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
    });
    order
}

/// Eigenvalues only, sorted by `(Re, Im)`.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>, ModalError> {
    check_input(a)?;
    let (b, _) = balance(a);
    let mut values = to_faer(&b)
        .eigenvalues()
        .map_err(|_| ModalError::NoConvergence)?;
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(values)
}

/// `max Re λ(A)`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64, ModalError> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|v| v.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest singular value.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

fn pair_conjugates(values: &[C64], norm: f64) -> Result<Vec<usize>, ModalError> {
    let n = values.len();
    let real_tol = 1e-13 * norm.max(1e-300);
    let pair_tol = 1e-7 * norm.max(1e-300);
    let mut partner = vec![usize::MAX; n];
    for i in 0..n {
        if partner[i] != usize::MAX {
            continue;
        }
        if values[i].im.abs() <= real_tol {
            partner[i] = i;
            continue;
        }
        let target = values[i].conj();
        let best = (0..n)
            .filter(|&k| k != i && partner[k] == usize::MAX && values[k].im * values[i].im < 0.0)
            .min_by(|&a, &b| {
                (values[a] - target)
                    .norm()
                    .total_cmp(&(values[b] - target).norm())
            });
        match best {
            Some(k) if (values[k] - target).norm() <= pair_tol => {
                partner[i] = k;
                partner[k] = i;
            }
            _ => {
                return Err(ModalError::Pairing {
                    mode: i,
                    value: values[i],
                })
            }
        }
    }
    Ok(partner)
}

fn gaps(values: &[C64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            values
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, v)| (v - values[i]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Full eigensolution of a real matrix.
pub fn eig_full(a: &DMatrix<f64>) -> Result<EigenSolution, ModalError> {
    check_input(a)?;
    let n = a.nrows();
    let norm = norm2(a);
    let (b, d) = balance(a);
    let evd = to_faer(&b).eigen().map_err(|_| ModalError::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let raw: Vec<C64> = (0..n).map(|i| s[i]).collect();
    let order = sort_order(&raw);

    let values: Vec<C64> = order.iter().map(|&k| raw[k]).collect();
    let mut right = DMatrix::<C64>::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for r in 0..n {
            right[(r, col)] = u[(r, k)] * d[r];
        }
        let nrm = right.column(col).norm();
        if nrm > 0.0 {
            right.column_mut(col).unscale_mut(nrm);
        }
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or(ModalError::SingularEigenbasis)?;
    if left.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(ModalError::SingularEigenbasis);
    }
    let partner = pair_conjugates(&values, norm)?;
    let condition = (0..n).map(|i| left.row(i).norm()).collect();
    Ok(EigenSolution {
        gaps: gaps(&values),
        values,
        right,
        left,
        partner,
        norm,
        condition,
    })
}

/// `δ_i = −Re λ_i`.
pub fn margins(solution: &EigenSolution) -> Vec<f64> {
    solution.values.iter().map(|v| -v.re).collect()
}

/// `∂λ_i/∂k_j = z_iᵀ M_j w_i` for every mode (rows) and axis (columns).
pub fn first_order_sensitivity(solution: &EigenSolution, m: &[DMatrix<f64>]) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(solution.len(), m.len());
    for (j, mj) in m.iter().enumerate() {
        let mc = mj.map(|v| C64::new(v, 0.0));
        let mw = mc * &solution.right;
        for i in 0..solution.len() {
            out[(i, j)] = solution.left.row(i).transpose().dot(&mw.column(i));
        }
    }
    out
}

/// `∂w_i/∂k_j = Σ_{κ≠i} (z_κᵀ M_j w_i)/(λ_i − λ_κ) w_κ`.
pub fn eigvec_derivative(
    solution: &EigenSolution,
    m: &DMatrix<f64>,
    i: usize,
) -> Result<DVector<C64>, ModalError> {
    solution.check_separated(i)?;
    let mc = m.map(|v| C64::new(v, 0.0));
    let mw = mc * solution.right.column(i);
    let coupling = &solution.left * mw;
    let mut dw = DVector::zeros(solution.len());
    for k in 0..solution.len() {
        if k != i {
            dw += solution.right.column(k) * (coupling[k] / (solution.values[i] - solution.values[k]));
        }
    }
    Ok(dw)
}

/// Second derivatives `∂²λ_i/∂k_j∂k_l`, one symmetric matrix per mode.
/// `projected[j] = Z M_j W`.
pub fn second_order_from_projections(
    solution: &EigenSolution,
    projected: &[DMatrix<C64>],
    included: &[bool],
) -> Vec<DMatrix<C64>> {
    let n = solution.len();
    let p = projected.len();
    (0..n)
        .map(|i| {
            let mut h = DMatrix::from_element(p, p, C64::new(f64::NAN, f64::NAN));
            if !included[i] {
                return h;
            }
            let inv: Vec<C64> = (0..n)
                .map(|k| {
                    if k == i {
                        C64::new(0.0, 0.0)
                    } else {
                        (solution.values[i] - solution.values[k]).inv()
                    }
                })
                .collect();
            for j in 0..p {
                for l in j..p {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..n {
                        if k != i {
                            acc += (projected[l][(i, k)] * projected[j][(k, i)]
                                + projected[j][(i, k)] * projected[l][(k, i)])
                                * inv[k];
                        }
                    }
                    h[(j, l)] = acc;
                    h[(l, j)] = acc;
                }
            }
            h
        })
        .collect()
}

/// First- and second-order sensitivities with margins and exclusions.
#[derive(Debug, Clone)]
pub struct SensitivityBundle {
    pub values: Vec<C64>,
    /// Modes × axes; `NaN` rows for excluded modes.
    pub first: DMatrix<C64>,
    /// Per mode, axes × axes; `NaN` for excluded modes.
    pub second: Vec<DMatrix<C64>>,
    pub margins: Vec<f64>,
    pub partner: Vec<usize>,
    pub excluded: Vec<ExcludedMode>,
}

impl SensitivityBundle {
    pub fn n_axes(&self) -> usize {
        self.first.ncols()
    }

    pub fn is_excluded(&self, mode: usize) -> bool {
        self.excluded.iter().any(|e| e.mode == mode)
    }
}

pub fn sensitivity_bundle(solution: &EigenSolution, m: &[DMatrix<f64>]) -> SensitivityBundle {
    sensitivity_bundle_with_curvature(solution, m, None)
}

/// As [`sensitivity_bundle`] for a matrix that is not affine in `k`:
/// `curvature[j][l] = ∂²A/∂k_j∂k_l` adds `z_iᵀ (∂²A/∂k_j∂k_l) w_i`.
pub fn sensitivity_bundle_with_curvature(
    solution: &EigenSolution,
    m: &[DMatrix<f64>],
    curvature: Option<&[Vec<DMatrix<f64>>]>,
) -> SensitivityBundle {
    let included = solution.included();
    let projected: Vec<DMatrix<C64>> = m.iter().map(|mj| solution.project(mj)).collect();
    let mut second = second_order_from_projections(solution, &projected, &included);
    if let Some(curv) = curvature {
        for (j, row) in curv.iter().enumerate() {
            for (l, mjl) in row.iter().enumerate() {
                let pjl = solution.project(mjl);
                for (i, h) in second.iter_mut().enumerate() {
                    if included[i] {
                        h[(j, l)] += pjl[(i, i)];
                    }
                }
            }
        }
    }
    let mut first = DMatrix::from_fn(solution.len(), m.len(), |i, j| projected[j][(i, i)]);
    for (i, inc) in included.iter().enumerate() {
        if !inc {
            first.row_mut(i).fill(C64::new(f64::NAN, f64::NAN));
        }
    }
    SensitivityBundle {
        values: solution.values.clone(),
        first,
        second,
        margins: margins(solution),
        partner: solution.partner.clone(),
        excluded: solution.excluded(),
    }
}

/// Pairs each mode of `reference` with a mode of `perturbed`: greedy
/// nearest-eigenvalue assignment, ties broken by eigenvector overlap
/// `|z_iᵀ w'_κ|`.
pub fn match_modes(reference: &EigenSolution, perturbed: &EigenSolution) -> Vec<usize> {
    let n = reference.len();
    let mut candidates: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(n * 8);
    for i in 0..n {
        let mut near: Vec<(f64, usize)> = (0..perturbed.len())
            .map(|k| ((reference.values[i] - perturbed.values[k]).norm(), k))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(dist, k) in near.iter().take(8) {
            let overlap = reference
                .left
                .row(i)
                .transpose()
                .dot(&perturbed.right.column(k))
                .norm();
            candidates.push((dist, -overlap, i, k));
        }
    }
    // distances equal to within roundoff land in one bucket and count as ties
    let scale = reference.norm.max(1e-300);
    let bucket = |d: f64| (d / scale / 1e-14).round() as u64;
    candidates.sort_by(|a, b| bucket(a.0).cmp(&bucket(b.0)).then(a.1.total_cmp(&b.1)));
    let mut assigned = vec![usize::MAX; n];
    let mut taken = vec![false; perturbed.len()];
    for (_, _, i, k) in candidates {
        if assigned[i] == usize::MAX && !taken[k] {
            assigned[i] = k;
            taken[k] = true;
        }
    }
    for i in 0..n {
        if assigned[i] == usize::MAX {
            let k = (0..perturbed.len())
                .filter(|&k| !taken[k])
                .min_by(|&a, &b| {
                    (reference.values[i] - perturbed.values[a])
                        .norm()
                        .total_cmp(&(reference.values[i] - perturbed.values[b]).norm())
                })
                .expect("equal mode counts");
            assigned[i] = k;
            taken[k] = true;
        }
    }
    assigned
}

/// Finite-difference step `ε^{1/3} max(|k|, scale)`.
pub fn fd_step(k: f64, scale: f64) -> f64 {
    f64::EPSILON.cbrt() * k.abs().max(scale)
}
