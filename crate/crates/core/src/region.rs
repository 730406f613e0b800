//! Quadratic slope constraints, per-axis suprema, 2-D stability regions and
//! the eigenvalue-loci oracle.
//!
//! Constraint for mode `i` around expansion slopes `k*`:
//!
//! ```text
//!   aᵀΔk + ½ ΔkᵀHΔk < δ_i,   a_j = Re ∂λ_i/∂k_j,  H_jl = Re ∂²λ_i/∂k_j∂k_l
//! ```
//!
//! Equality counts as unstable.

use nalgebra::{DMatrix, DVector};

use crate::modal::{self, ExcludedMode, ModalError, SensitivityBundle, C64};

#[derive(Debug, thiserror::Error)]
pub enum RegionError {
    #[error("region: expansion point infeasible: mode {mode} violates its constraint by {excess:.3e} at Δk = 0")]
    InfeasibleExpansion { mode: usize, excess: f64 },
    #[error("region: axis {axis} out of range ({n_axes} droop axes)")]
    Axis { axis: usize, n_axes: usize },
    #[error("region: expected {expected} deviations, got {got}")]
    Deviations { expected: usize, got: usize },
    #[error("region: no stability crossing for axis {axis} in [{lo}, {hi}] (max Re λ {f_lo:.3e} → {f_hi:.3e})")]
    NoSignChange {
        axis: usize,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error(transparent)]
    Modal(#[from] ModalError),
    #[error("region: model evaluation failed: {0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SlopeConstraint {
    pub mode: usize,
    pub eigenvalue: (f64, f64),
    /// `a_j = Re ∂λ/∂k_j`, 1/s per W/V.
    pub a: Vec<f64>,
    /// `H_jl = Re ∂²λ/∂k_j∂k_l`, row-major.
    pub h: Vec<Vec<f64>>,
    pub margin: f64,
}

impl SlopeConstraint {
    /// `aᵀΔk + ½ΔkᵀHΔk`, the predicted real-part deviation.
    pub fn deviation(&self, dk: &[f64]) -> f64 {
        let lin: f64 = self.a.iter().zip(dk).map(|(a, d)| a * d).sum();
        let mut quad = 0.0;
        for (j, row) in self.h.iter().enumerate() {
            for (l, h) in row.iter().enumerate() {
                quad += h * dk[j] * dk[l];
            }
        }
        lin + 0.5 * quad
    }

    pub fn holds(&self, dk: &[f64]) -> bool {
        self.deviation(dk) < self.margin
    }

    /// Along `axis` with the other deviations fixed: `(½H_ii, b, c)` so the
    /// constraint reads `½H_ii t² + b t < c`.
    pub fn reduce(&self, axis: usize, dk: &[f64]) -> (f64, f64, f64) {
        let mut base = dk.to_vec();
        base[axis] = 0.0;
        let c0 = self.deviation(&base);
        let b = self.a[axis]
            + self.h[axis]
                .iter()
                .zip(&base)
                .map(|(h, d)| h * d)
                .sum::<f64>();
        (0.5 * self.h[axis][axis], b, self.margin - c0)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstraintSet {
    pub constraints: Vec<SlopeConstraint>,
    /// Expansion slopes `k*`, W/V.
    pub expansion: Vec<f64>,
    pub excluded: Vec<ExcludedMode>,
    pub n_modes: usize,
}

impl ConstraintSet {
    pub fn n_axes(&self) -> usize {
        self.expansion.len()
    }

    /// Conjunction of all constraints at `Δk`.
    pub fn holds(&self, dk: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.holds(dk))
    }
}

/// One constraint per real mode and per conjugate pair.
pub fn build_constraints(bundle: &SensitivityBundle, expansion: &[f64]) -> ConstraintSet {
    let p = bundle.n_axes();
    let mut constraints = Vec::new();
    for i in 0..bundle.values.len() {
        if bundle.is_excluded(i) {
            continue;
        }
        let partner = bundle.partner[i];
        if partner < i && !bundle.is_excluded(partner) {
            continue;
        }
        let lam = bundle.values[i];
        constraints.push(SlopeConstraint {
            mode: i,
            eigenvalue: (lam.re, lam.im),
            a: (0..p).map(|j| bundle.first[(i, j)].re).collect(),
            h: (0..p)
                .map(|j| (0..p).map(|l| bundle.second[i][(j, l)].re).collect())
                .collect(),
            margin: bundle.margins[i],
        });
    }
    ConstraintSet {
        constraints,
        expansion: expansion.to_vec(),
        excluded: bundle.excluded.clone(),
        n_modes: bundle.values.len(),
    }
}

/// Largest `t ≥ 0` with `qa t² + b t < c` on `[0, t)`; `None` if the
/// constraint never binds. Requires `c > 0`.
pub fn first_crossing(qa: f64, b: f64, c: f64) -> Option<f64> {
    debug_assert!(c > 0.0);
    if qa == 0.0 {
        return (b > 0.0).then(|| c / b);
    }
    let disc = b * b + 4.0 * qa * c;
    if qa > 0.0 {
        // exactly one positive root
        let sq = disc.sqrt();
        return Some(if b >= 0.0 {
            2.0 * c / (b + sq)
        } else {
            (sq - b) / (2.0 * qa)
        });
    }
    // downward-opening: binds only when rising first
    if b <= 0.0 || disc < 0.0 {
        return None;
    }
    Some(2.0 * c / (b + disc.sqrt()))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SupremumResult {
    pub axis: usize,
    /// Supremum slope, W/V; the cap when unbounded.
    pub k_sup: f64,
    pub binding_mode: Option<usize>,
    pub init_deviations: Vec<f64>,
    pub bounded: bool,
}

/// Relative tolerance for calling the expansion point infeasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// `k_i + min_c Δk_c` over all constraints with the other deviations fixed.
/// `cap` is the Δk reported when nothing binds.
pub fn estimate_supremum(
    set: &ConstraintSet,
    axis: usize,
    init_deviations: &[f64],
    cap: f64,
) -> Result<SupremumResult, RegionError> {
    let p = set.n_axes();
    if axis >= p {
        return Err(RegionError::Axis { axis, n_axes: p });
    }
    if init_deviations.len() != p {
        return Err(RegionError::Deviations {
            expected: p,
            got: init_deviations.len(),
        });
    }
    let mut dk = init_deviations.to_vec();
    dk[axis] = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for con in &set.constraints {
        let (qa, b, c) = con.reduce(axis, &dk);
        if c <= 0.0 {
            let excess = -c;
            if excess > FEASIBILITY_TOLERANCE * con.margin.abs().max(1e-300) {
                return Err(RegionError::InfeasibleExpansion {
                    mode: con.mode,
                    excess,
                });
            }
            // on the boundary: strict inequality makes it binding at 0
            best = Some((0.0, con.mode));
            continue;
        }
        if let Some(t) = first_crossing(qa, b, c) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, con.mode));
            }
        }
    }
    let k_axis = set.expansion[axis];
    Ok(match best {
        Some((t, mode)) => SupremumResult {
            axis,
            k_sup: k_axis + t,
            binding_mode: Some(mode),
            init_deviations: dk,
            bounded: true,
        },
        None => SupremumResult {
            axis,
            k_sup: k_axis + cap,
            binding_mode: None,
            init_deviations: dk,
            bounded: false,
        },
    })
}

/// Suprema of every axis with the constraints of case A and the other
/// slopes at case B's values (deviations `k_B − k_A`).
pub fn cross_validate(
    set_a: &ConstraintSet,
    slopes_b: &[f64],
    cap: f64,
) -> Result<Vec<SupremumResult>, RegionError> {
    if slopes_b.len() != set_a.n_axes() {
        return Err(RegionError::Deviations {
            expected: set_a.n_axes(),
            got: slopes_b.len(),
        });
    }
    let dev: Vec<f64> = slopes_b
        .iter()
        .zip(&set_a.expansion)
        .map(|(b, a)| b - a)
        .collect();
    (0..set_a.n_axes())
        .map(|axis| estimate_supremum(set_a, axis, &dev, cap))
        .collect()
}

/// Per-axis self-validation suprema (zero deviations).
pub fn self_validate(set: &ConstraintSet, cap: f64) -> Result<Vec<SupremumResult>, RegionError> {
    let zero = vec![0.0; set.n_axes()];
    (0..set.n_axes())
        .map(|axis| estimate_supremum(set, axis, &zero, cap))
        .collect()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LocusPoint {
    pub k: f64,
    pub max_re: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<C64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LociResult {
    pub axis: usize,
    pub k_sup: f64,
    pub f_at_sup: f64,
    pub evaluations: usize,
    pub table: Vec<LocusPoint>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct LociOptions {
    pub scan_points: usize,
    pub f_tolerance: f64,
    pub k_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LociOptions {
    fn default() -> Self {
        LociOptions {
            scan_points: 41,
            f_tolerance: 1e-6,
            k_tolerance: 1e-3,
            max_iterations: 200,
        }
    }
}

/// Exact supremum along `axis` by bisection on `max Re λ(A(k))`, with every
/// other slope at `base`. `build` returns the state matrix for a full slope
/// vector. The bracket is scanned first; the smallest crossing is refined.
pub fn loci_supremum<F, E>(
    mut build: F,
    base: &[f64],
    axis: usize,
    bracket: (f64, f64),
    opts: &LociOptions,
) -> Result<LociResult, RegionError>
where
    F: FnMut(&[f64]) -> Result<DMatrix<f64>, E>,
    E: std::fmt::Display,
{
    let mut evaluations = 0;
    let mut eval = |k: f64, keep: bool| -> Result<LocusPoint, RegionError> {
        let mut slopes = base.to_vec();
        slopes[axis] = k;
        let a = build(&slopes).map_err(|e| RegionError::Model(e.to_string()))?;
        let values = modal::eigenvalues(&a)?;
        evaluations += 1;
        let max_re = values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        Ok(LocusPoint {
            k,
            max_re,
            eigenvalues: if keep { values } else { Vec::new() },
        })
    };
    let (lo, hi) = bracket;
    let n = opts.scan_points.max(2);
    let mut table = Vec::with_capacity(n);
    for s in 0..n {
        let k = lo + (hi - lo) * s as f64 / (n - 1) as f64;
        table.push(eval(k, true)?);
    }
    let crossings: Vec<usize> = (1..n)
        .filter(|&s| (table[s - 1].max_re < 0.0) != (table[s].max_re < 0.0))
        .collect();
    let Some(&first) = crossings.first() else {
        return Err(RegionError::NoSignChange {
            axis,
            lo,
            hi,
            f_lo: table[0].max_re,
            f_hi: table[n - 1].max_re,
        });
    };
    let mut warnings = Vec::new();
    if crossings.len() > 1 {
        warnings.push(format!(
            "max Re λ changes sign {} times in the bracket; returning the smallest crossing",
            crossings.len()
        ));
    }
    if table[0].max_re >= 0.0 {
        warnings.push("bracket starts unstable; crossing is a stabilization".to_string());
    }
    let (mut a, mut b) = (table[first - 1].k, table[first].k);
    let stable_left = table[first - 1].max_re < 0.0;
    let mut f_mid = table[first].max_re;
    let mut mid = b;
    for _ in 0..opts.max_iterations {
        if (b - a).abs() < opts.k_tolerance {
            break;
        }
        mid = 0.5 * (a + b);
        f_mid = eval(mid, false)?.max_re;
        if f_mid.abs() < opts.f_tolerance {
            break;
        }
        if (f_mid < 0.0) == stable_left {
            a = mid;
        } else {
            b = mid;
        }
        mid = 0.5 * (a + b);
    }
    Ok(LociResult {
        axis,
        k_sup: mid,
        f_at_sup: f_mid,
        evaluations,
        table,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMethod {
    Taylor,
    Loci,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RegionGrid {
    pub axes: (usize, usize),
    pub range_i: (f64, f64),
    pub range_j: (f64, f64),
    pub resolution: (usize, usize),
    /// `stable[a * res_j + b]` for cell `(a, b)`.
    pub stable: Vec<bool>,
    pub method: RegionMethod,
}

impl RegionGrid {
    /// Cell-centre slope of index `a` in `range` with `res` cells.
    pub fn centre(range: (f64, f64), res: usize, a: usize) -> f64 {
        range.0 + (range.1 - range.0) * (a as f64 + 0.5) / res as f64
    }

    pub fn k_i(&self, a: usize) -> f64 {
        Self::centre(self.range_i, self.resolution.0, a)
    }

    pub fn k_j(&self, b: usize) -> f64 {
        Self::centre(self.range_j, self.resolution.1, b)
    }

    pub fn is_stable(&self, a: usize, b: usize) -> bool {
        self.stable[a * self.resolution.1 + b]
    }

    pub fn to_csv(&self, names: (&str, &str)) -> String {
        let method = match self.method {
            RegionMethod::Taylor => "taylor",
            RegionMethod::Loci => "loci",
        };
        let mut out = format!("{},{},stable,method\n", names.0, names.1);
        for a in 0..self.resolution.0 {
            for b in 0..self.resolution.1 {
                out.push_str(&format!(
                    "{:.9e},{:.9e},{},{}\n",
                    self.k_i(a),
                    self.k_j(b),
                    u8::from(self.is_stable(a, b)),
                    method
                ));
            }
        }
        out
    }
}

/// Region over axes `(i, j)` by the constraint conjunction; other axes at
/// `base` (absolute slopes).
pub fn scan_region_taylor(
    set: &ConstraintSet,
    axes: (usize, usize),
    ranges: ((f64, f64), (f64, f64)),
    resolution: (usize, usize),
    base: &[f64],
) -> RegionGrid {
    let mut stable = Vec::with_capacity(resolution.0 * resolution.1);
    for a in 0..resolution.0 {
        for b in 0..resolution.1 {
            let mut k = base.to_vec();
            k[axes.0] = RegionGrid::centre(ranges.0, resolution.0, a);
            k[axes.1] = RegionGrid::centre(ranges.1, resolution.1, b);
            let dk: Vec<f64> = k.iter().zip(&set.expansion).map(|(k, e)| k - e).collect();
            stable.push(set.holds(&dk));
        }
    }
    RegionGrid {
        axes,
        range_i: ranges.0,
        range_j: ranges.1,
        resolution,
        stable,
        method: RegionMethod::Taylor,
    }
}

/// Region by `max Re λ < 0`, evaluated on worker threads. `build` must be
/// shareable: it returns the state matrix for a full slope vector.
pub fn scan_region_loci<F, E>(
    build: F,
    axes: (usize, usize),
    ranges: ((f64, f64), (f64, f64)),
    resolution: (usize, usize),
    base: &[f64],
) -> Result<RegionGrid, RegionError>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>, E> + Sync,
    E: std::fmt::Display,
{
    let cells = resolution.0 * resolution.1;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cells.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<Vec<(usize, bool)>, RegionError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let c = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if c >= cells {
                            break;
                        }
                        let (a, b) = (c / resolution.1, c % resolution.1);
                        let mut k = base.to_vec();
                        k[axes.0] = RegionGrid::centre(ranges.0, resolution.0, a);
                        k[axes.1] = RegionGrid::centre(ranges.1, resolution.1, b);
                        let m = build(&k).map_err(|e| RegionError::Model(e.to_string()))?;
                        out.push((c, modal::spectral_abscissa(&m)? < 0.0));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut stable = vec![false; cells];
    for r in results {
        for (c, s) in r? {
            stable[c] = s;
        }
    }
    Ok(RegionGrid {
        axes,
        range_i: ranges.0,
        range_j: ranges.1,
        resolution,
        stable,
        method: RegionMethod::Loci,
    })
}

/// Agreement between two grids of the same shape: fraction of equal
/// cells, and whether every disagreement lies within `band` cells
/// (Chebyshev distance) of a stability change in `reference`.
pub fn compare_grids(test: &RegionGrid, reference: &RegionGrid, band: usize) -> (f64, bool, usize) {
    let (ri, rj) = reference.resolution;
    let boundary = |a: usize, b: usize| {
        let s = reference.is_stable(a, b);
        let mut edge = false;
        for (da, db) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (x, y) = (a as i64 + da, b as i64 + db);
            if x >= 0 && y >= 0 && (x as usize) < ri && (y as usize) < rj {
                edge |= reference.is_stable(x as usize, y as usize) != s;
            }
        }
        edge
    };
    let mut equal = 0;
    let mut all_adjacent = true;
    let mut disagreements = 0;
    for a in 0..ri {
        for b in 0..rj {
            if test.is_stable(a, b) == reference.is_stable(a, b) {
                equal += 1;
                continue;
            }
            disagreements += 1;
            let lo_a = a.saturating_sub(band);
            let lo_b = b.saturating_sub(band);
            let near = (lo_a..=(a + band).min(ri - 1))
                .any(|x| (lo_b..=(b + band).min(rj - 1)).any(|y| boundary(x, y)));
            all_adjacent &= near;
        }
    }
    (equal as f64 / (ri * rj) as f64, all_adjacent, disagreements)
}

/// `DVector` convenience for callers that work with slopes as vectors.
pub fn deviations(k: &DVector<f64>, expansion: &[f64]) -> Vec<f64> {
    k.iter().zip(expansion).map(|(k, e)| k - e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::eig_full;
    use crate::synthetic::planted_example;
    use proptest::prelude::*;

    fn single(a: f64, h: f64, margin: f64) -> ConstraintSet {
        ConstraintSet {
            constraints: vec![SlopeConstraint {
                mode: 0,
                eigenvalue: (-margin, 0.0),
                a: vec![a],
                h: vec![vec![h]],
                margin,
            }],
            expansion: vec![10.0],
            excluded: vec![],
            n_modes: 1,
        }
    }

    #[test]
    fn single_real_mode_constraint() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let sol = eig_full(&a).unwrap();
        let m = DMatrix::from_element(1, 1, 0.5);
        let bundle = crate::modal::sensitivity_bundle(&sol, &[m]);
        let set = build_constraints(&bundle, &[10.0]);
        assert_eq!(set.constraints.len(), 1);
        let c = &set.constraints[0];
        assert_eq!((c.a[0], c.h[0][0], c.margin), (0.5, 0.0, 1.0));
        assert!(c.holds(&[1.99]) && !c.holds(&[2.0]));
    }

    #[test]
    fn linear_and_quadratic_suprema() {
        let r = estimate_supremum(&single(0.5, 0.0, 1.0), 0, &[0.0], 1e3).unwrap();
        assert_eq!(r.k_sup, 12.0);
        assert!(r.bounded);
        let r = estimate_supremum(&single(0.0, 0.5, 1.0), 0, &[0.0], 1e3).unwrap();
        assert!((r.k_sup - 12.0).abs() < 1e-15);
    }

    #[test]
    fn minimum_over_constraints_binds() {
        let mut set = single(0.5, 0.0, 1.0);
        let mut other = set.constraints[0].clone();
        other.mode = 1;
        other.a = vec![0.2];
        set.constraints.push(other);
        let r = estimate_supremum(&set, 0, &[0.0], 1e3).unwrap();
        assert_eq!((r.k_sup, r.binding_mode), (12.0, Some(0)));
    }

    #[test]
    fn sign_cases_of_the_reduced_quadratic() {
        // H > 0, b < 0: dips then rises
        let t = first_crossing(0.5, -1.0, 1.0).unwrap();
        assert!((0.5 * t * t - t - 1.0).abs() < 1e-12 && t > 0.0);
        // H < 0, b > 0 with real roots
        let t = first_crossing(-0.1, 1.0, 1.0).unwrap();
        assert!((-0.1 * t * t + t - 1.0).abs() < 1e-12);
        // H < 0, b > 0 without roots; H < 0, b ≤ 0; H = 0, b ≤ 0
        assert_eq!(first_crossing(-1.0, 1.0, 1.0), None);
        assert_eq!(first_crossing(-1.0, -1.0, 1.0), None);
        assert_eq!(first_crossing(0.0, -1.0, 1.0), None);
    }

    #[test]
    fn unbounded_reports_cap() {
        let r = estimate_supremum(&single(-0.5, 0.0, 1.0), 0, &[0.0], 50.0).unwrap();
        assert!(!r.bounded);
        assert_eq!(r.k_sup, 60.0);
        assert_eq!(r.binding_mode, None);
    }

    #[test]
    fn infeasible_expansion_is_an_error() {
        let set = single(0.5, 0.0, -1.0);
        assert!(matches!(
            estimate_supremum(&set, 0, &[0.0], 1e3),
            Err(RegionError::InfeasibleExpansion { .. })
        ));
    }

    #[test]
    fn identical_cases_reduce_to_self_validation() {
        let sys = planted_example(3, 2, 2, 5);
        let k = sys.k_ref.clone();
        let set = sys.constraints(&k).unwrap();
        let own: Vec<f64> = k.iter().copied().collect();
        let a = self_validate(&set, 1e3).unwrap();
        let b = cross_validate(&set, &own, 1e3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planted_suprema_match_closed_form() {
        let sys = planted_example(4, 3, 3, 17);
        let k = sys.k_ref.clone();
        let set = sys.constraints(&k).unwrap();
        assert_eq!(set.constraints.len(), 7);
        for axis in 0..3 {
            let r = estimate_supremum(&set, axis, &[0.0; 3], 1e4).unwrap();
            match sys.crossing(&k, axis, k[axis]) {
                Some(exact) => {
                    assert!(r.bounded);
                    assert!((r.k_sup - exact).abs() <= 1e-6 * exact.abs(), "{} vs {exact}", r.k_sup);
                }
                None => assert!(!r.bounded),
            }
        }
    }

    #[test]
    fn planted_loci_bisection_recovers_crossing() {
        let sys = planted_example(3, 2, 2, 23);
        let k = sys.k_ref.clone();
        let exact = (0..2).find_map(|axis| sys.crossing(&k, axis, k[axis]).map(|c| (axis, c)));
        let (axis, exact) = exact.expect("planted family crosses");
        let build = |s: &[f64]| Ok::<_, String>(sys.matrix(&DVector::from_column_slice(s)));
        let r = loci_supremum(build, k.as_slice(), axis, (k[axis], exact * 1.5 + 10.0), &LociOptions::default())
            .unwrap();
        assert!((r.k_sup - exact).abs() < 2e-3, "{} vs {exact}", r.k_sup);
    }

    #[test]
    fn stable_bracket_has_no_sign_change() {
        let build = |_: &[f64]| Ok::<_, String>(DMatrix::from_diagonal_element(2, 2, -1.0));
        assert!(matches!(
            loci_supremum(build, &[0.0], 0, (0.0, 1.0), &LociOptions::default()),
            Err(RegionError::NoSignChange { .. })
        ));
    }

    #[test]
    fn single_cell_grid_is_point_classification() {
        let set = single(0.5, 0.0, 1.0);
        let g = scan_region_taylor(&set, (0, 0), ((11.0, 11.0), (11.0, 11.0)), (1, 1), &[10.0]);
        assert_eq!(g.stable, vec![set.holds(&[1.0])]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn binding_constraint_holds_with_equality(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            h in proptest::collection::vec(-0.2f64..0.2, 6),
            m in proptest::collection::vec(0.1f64..5.0, 6),
            d in -3.0f64..3.0,
        ) {
            let constraints: Vec<_> = (0..3).map(|i| SlopeConstraint {
                mode: i,
                eigenvalue: (-m[i], 0.0),
                a: vec![a[2 * i], a[2 * i + 1]],
                h: vec![vec![h[2 * i], h[2 * i + 1]], vec![h[2 * i + 1], h[(2 * i + 2) % 6]]],
                margin: m[i],
            }).collect();
            let set = ConstraintSet { constraints, expansion: vec![10.0, 20.0], excluded: vec![], n_modes: 3 };
            let dev = [0.0, d];
            if let Ok(r) = estimate_supremum(&set, 0, &dev, 1e6) {
                if r.bounded {
                    let con = set.constraints.iter().find(|c| Some(c.mode) == r.binding_mode).unwrap();
                    let dk = [r.k_sup - 10.0, d];
                    let gap = con.deviation(&dk) - con.margin;
                    prop_assert!(gap.abs() <= 1e-9 * con.margin.max(1.0));
                    // every constraint holds just before the supremum
                    let before = [0.999_999 * (r.k_sup - 10.0), d];
                    prop_assert!(set.holds(&before) || r.k_sup - 10.0 < 1e-9);
                }
                // adding a constraint never raises the supremum
                let mut more = set.clone();
                let mut extra = more.constraints[0].clone();
                extra.mode = 9;
                extra.a = vec![0.3, 0.0];
                extra.h = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
                more.constraints.push(extra);
                if let Ok(r2) = estimate_supremum(&more, 0, &dev, 1e6) {
                    prop_assert!(r2.k_sup <= r.k_sup);
                }
            }
        }
    }
}
