//! Global small-signal model: per-unit block stacking, selector matrices and
//! the nine-block state matrix with its affine dependence on droop slopes.
//!
//! Global state order, grouped by signal (all stations for one signal, then
//! the next signal):
//!
//! ```text
//! x[1] = [i_dc, i_d, i_q, i2_d, i2_q, v_sum, v1_d, v1_q, v2_d, v2_q]   10n
//! x[2] = [xi_d, xi_q, xP, xQ]                                           4n
//! x[3] = [iα (m), iβ (m), v_T (m), v_dc (n)]                           3m + n
//! ```
//!
//! With that order the selectors are literal `[I, 0, …]` blocks and unit
//! `u`'s local entry `(r, c)` lands at `(r·n + u, c·n + u)`.

use nalgebra::{DMatrix, DVector};

use crate::control::ControllerModel;
use crate::converter::{MmcLinearization, STATE_NAMES};
use crate::network::NetworkModel;

pub const CONTROLLER_STATE_NAMES: [&str; 4] = ["xi_d", "xi_q", "xP", "xQ"];

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("{what}: expected {expected} units, got {got}")]
    UnitCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("block ({row},{col}) of the global matrix: {detail}")]
    Dimension {
        row: usize,
        col: usize,
        detail: String,
    },
}

/// Index map of the global state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub m: usize,
}

impl StateLayout {
    pub fn new(n: usize, m: usize) -> Self {
        StateLayout { n, m }
    }

    pub fn dim(&self) -> usize {
        15 * self.n + 3 * self.m
    }

    /// Converter state `local` (0..10) of unit `u`.
    pub fn converter(&self, local: usize, u: usize) -> usize {
        local * self.n + u
    }

    /// Controller state `local` (0..4) of unit `u`.
    pub fn controller(&self, local: usize, u: usize) -> usize {
        10 * self.n + local * self.n + u
    }

    /// Network state `k` (0..3m+n).
    pub fn network(&self, k: usize) -> usize {
        14 * self.n + k
    }

    pub fn network_offset(&self) -> usize {
        14 * self.n
    }

    pub fn v_dc(&self, u: usize) -> usize {
        self.network(3 * self.m + u)
    }

    /// Human-readable name of every global state.
    pub fn names(&self, nodes: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for s in STATE_NAMES {
            out.extend(nodes.iter().map(|n| format!("{s}[{n}]")));
        }
        for s in CONTROLLER_STATE_NAMES {
            out.extend(nodes.iter().map(|n| format!("{s}[{n}]")));
        }
        out.extend((0..self.m).map(|l| format!("i_alpha[{l}]")));
        out.extend((0..self.m).map(|l| format!("i_beta[{l}]")));
        out.extend((0..self.m).map(|l| format!("v_T[{l}]")));
        out.extend(nodes.iter().map(|n| format!("v_dc[{n}]")));
        out
    }
}

/// Block-diagonal system matrices in grouped-by-signal order.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedBlocks {
    pub a1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub b3: DMatrix<f64>,
}

/// Places the same-shaped per-unit blocks with the interleaved rule.
pub fn interleave<'a, I>(blocks: I, n: usize, rows: usize, cols: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = nalgebra::DMatrixView<'a, f64>>,
{
    let mut out = DMatrix::zeros(rows * n, cols * n);
    for (u, block) in blocks.into_iter().enumerate() {
        for r in 0..rows {
            for c in 0..cols {
                out[(r * n + u, c * n + u)] = block[(r, c)];
            }
        }
    }
    out
}

pub fn stack_units(
    converters: &[MmcLinearization],
    controllers: &[ControllerModel],
    network: &NetworkModel,
) -> Result<StackedBlocks, AssemblyError> {
    let n = network.n_nodes;
    for (what, got) in [
        ("converter linearizations", converters.len()),
        ("controllers", controllers.len()),
    ] {
        if got != n {
            return Err(AssemblyError::UnitCount {
                what,
                expected: n,
                got,
            });
        }
    }
    let dyn_of = |m: nalgebra::DMatrixView<'_, f64>| m.into_owned();
    let a1s: Vec<DMatrix<f64>> = converters
        .iter()
        .map(|l| dyn_of(DMatrix::from_column_slice(10, 10, l.a1.as_slice()).as_view()))
        .collect();
    let b1s: Vec<DMatrix<f64>> = converters
        .iter()
        .map(|l| DMatrix::from_column_slice(10, 3, l.b1.as_slice()))
        .collect();
    let to_dyn = |r: usize, c: usize, s: &[f64]| DMatrix::from_column_slice(r, c, s);
    let a2s: Vec<_> = controllers.iter().map(|c| to_dyn(4, 4, c.a.as_slice())).collect();
    let b2s: Vec<_> = controllers.iter().map(|c| to_dyn(4, 4, c.b.as_slice())).collect();
    let c2s: Vec<_> = controllers.iter().map(|c| to_dyn(2, 4, c.c.as_slice())).collect();
    let d2s: Vec<_> = controllers.iter().map(|c| to_dyn(2, 4, c.d.as_slice())).collect();
    Ok(StackedBlocks {
        a1: interleave(a1s.iter().map(|m| m.as_view()), n, 10, 10),
        b1: interleave(b1s.iter().map(|m| m.as_view()), n, 10, 3),
        a2: interleave(a2s.iter().map(|m| m.as_view()), n, 4, 4),
        b2: interleave(b2s.iter().map(|m| m.as_view()), n, 4, 4),
        c2: interleave(c2s.iter().map(|m| m.as_view()), n, 2, 4),
        d2: interleave(d2s.iter().map(|m| m.as_view()), n, 2, 4),
        a3: network.a3.clone(),
        b3: network.b3.clone(),
    })
}

/// 0/1 selector and placement matrices linking the three subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSet {
    /// `i_dc = G3 x[1]`, n × 10n.
    pub g3: DMatrix<f64>,
    /// `(i_d, i_q) = Gs1 x[1]`, 2n × 10n.
    pub gs1: DMatrix<f64>,
    /// `v_dc = Gs2 x[3]`, n × (3m + n).
    pub gs2: DMatrix<f64>,
    /// places `v_dc` (taken from `x[3]`) into `u[1]`, 3n × (3m + n).
    pub g11: DMatrix<f64>,
    /// places `(vref_d, vref_q)` into `u[1]`, 3n × 2n.
    pub g12: DMatrix<f64>,
    /// places `P_ref` into `u[2]`, 4n × n.
    pub g21: DMatrix<f64>,
    /// places `(i_d, i_q)` into `u[2]`, 4n × 2n.
    pub g23: DMatrix<f64>,
}

fn identity_block(rows: usize, cols: usize, at: (usize, usize), size: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(rows, cols);
    for k in 0..size {
        g[(at.0 + k, at.1 + k)] = 1.0;
    }
    g
}

pub fn build_selectors(n: usize, m: usize) -> SelectorSet {
    let net = 3 * m + n;
    SelectorSet {
        g3: identity_block(n, 10 * n, (0, 0), n),
        gs1: identity_block(2 * n, 10 * n, (0, n), 2 * n),
        gs2: identity_block(n, net, (0, 3 * m), n),
        g11: identity_block(3 * n, net, (0, 3 * m), n),
        g12: identity_block(3 * n, 2 * n, (n, 0), 2 * n),
        g21: identity_block(4 * n, n, (0, 0), n),
        g23: identity_block(4 * n, 2 * n, (2 * n, 0), 2 * n),
    }
}

fn product(
    at: (usize, usize),
    factors: &[(&str, &DMatrix<f64>)],
) -> Result<DMatrix<f64>, AssemblyError> {
    let mut acc = factors[0].1.clone();
    for pair in factors.windows(2) {
        let (ln, _) = pair[0];
        let (rn, r) = pair[1];
        if acc.ncols() != r.nrows() {
            return Err(AssemblyError::Dimension {
                row: at.0,
                col: at.1,
                detail: format!(
                    "cannot multiply after {ln} ({} cols) by {rn} ({}×{})",
                    acc.ncols(),
                    r.nrows(),
                    r.ncols()
                ),
            });
        }
        acc = acc * r;
    }
    Ok(acc)
}

/// The nine-block global matrix for droop gains `k_lambda` (n × n diagonal).
pub fn assemble_global(
    blocks: &StackedBlocks,
    sel: &SelectorSet,
    k_lambda: &DMatrix<f64>,
) -> Result<DMatrix<f64>, AssemblyError> {
    let StackedBlocks {
        a1,
        b1,
        a2,
        b2,
        c2,
        d2,
        a3,
        b3,
    } = blocks;
    let n1 = a1.nrows();
    let n2 = a2.nrows();
    let n3 = a3.nrows();

    let p = |at, f: &[(&str, &DMatrix<f64>)]| product(at, f);
    let b11 = a1
        + p(
            (1, 1),
            &[("B1", b1), ("G12", &sel.g12), ("D2", d2), ("G23", &sel.g23), ("Gs1", &sel.gs1)],
        )?;
    let b12 = p((1, 2), &[("B1", b1), ("G12", &sel.g12), ("C2", c2)])?;
    let b13 = p((1, 3), &[("B1", b1), ("G11", &sel.g11)])?
        + p(
            (1, 3),
            &[
                ("B1", b1),
                ("G12", &sel.g12),
                ("D2", d2),
                ("G21", &sel.g21),
                ("kΛ", k_lambda),
                ("Gs2", &sel.gs2),
            ],
        )?;
    let b21 = p((2, 1), &[("B2", b2), ("G23", &sel.g23), ("Gs1", &sel.gs1)])?;
    let b23 = p(
        (2, 3),
        &[("B2", b2), ("G21", &sel.g21), ("kΛ", k_lambda), ("Gs2", &sel.gs2)],
    )?;
    let b31 = p((3, 1), &[("B3", b3), ("G3", &sel.g3)])?;

    let dim = n1 + n2 + n3;
    let mut a = DMatrix::zeros(dim, dim);
    let offsets = [0, n1, n1 + n2];
    let place = |a: &mut DMatrix<f64>, r: usize, c: usize, m: &DMatrix<f64>| {
        let rows = [n1, n2, n3][r];
        let cols = [n1, n2, n3][c];
        if m.shape() != (rows, cols) {
            return Err(AssemblyError::Dimension {
                row: r + 1,
                col: c + 1,
                detail: format!("expected {rows}×{cols}, got {}×{}", m.nrows(), m.ncols()),
            });
        }
        a.view_mut((offsets[r], offsets[c]), (rows, cols)).copy_from(m);
        Ok(())
    };
    place(&mut a, 0, 0, &b11)?;
    place(&mut a, 0, 1, &b12)?;
    place(&mut a, 0, 2, &b13)?;
    place(&mut a, 1, 0, &b21)?;
    place(&mut a, 1, 1, a2)?;
    place(&mut a, 1, 2, &b23)?;
    place(&mut a, 2, 0, &b31)?;
    place(&mut a, 2, 2, a3)?;
    Ok(a)
}

/// `A_ss(k) = A0 + Σ k_j M_j` around one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignalModel {
    /// State matrix at the slopes the model was built with.
    pub a_ss: DMatrix<f64>,
    /// State matrix with every droop slope set to zero.
    pub a0: DMatrix<f64>,
    /// `∂A_ss/∂k_j`, one per droop axis.
    pub m: Vec<DMatrix<f64>>,
    /// Node index of each droop axis.
    pub axes: Vec<usize>,
    /// Slopes (W/V) `a_ss` was assembled at.
    pub slopes: Vec<f64>,
    pub state_names: Vec<String>,
    /// Expansion point.
    pub x_star: DVector<f64>,
}

impl SmallSignalModel {
    pub fn dim(&self) -> usize {
        self.a_ss.nrows()
    }

    /// Evaluates the affine form at arbitrary slopes.
    pub fn at_slopes(&self, slopes: &[f64]) -> DMatrix<f64> {
        let mut a = self.a0.clone();
        for (m, &k) in self.m.iter().zip(slopes) {
            a += m * k;
        }
        a
    }
}

/// Builds the global model; `M_j` by assembly with unit slope on axis `j`
/// minus the zero-slope assembly.
pub fn small_signal_from_blocks(
    blocks: &StackedBlocks,
    axes: &[usize],
    slopes: &[f64],
    state_names: Vec<String>,
    x_star: DVector<f64>,
) -> Result<SmallSignalModel, AssemblyError> {
    let n = blocks.b3.ncols();
    let m_lines = (blocks.a3.nrows() - n) / 3;
    let sel = build_selectors(n, m_lines);
    let diag = |values: &[(usize, f64)]| {
        let mut k = DMatrix::zeros(n, n);
        for &(i, v) in values {
            k[(i, i)] = v;
        }
        k
    };
    let k_now: Vec<(usize, f64)> = axes.iter().copied().zip(slopes.iter().copied()).collect();
    let a_ss = assemble_global(blocks, &sel, &diag(&k_now))?;
    let a0 = assemble_global(blocks, &sel, &diag(&[]))?;
    let m = axes
        .iter()
        .map(|&i| Ok(assemble_global(blocks, &sel, &diag(&[(i, 1.0)]))? - &a0))
        .collect::<Result<Vec<_>, AssemblyError>>()?;
    Ok(SmallSignalModel {
        a_ss,
        a0,
        m,
        axes: axes.to_vec(),
        slopes: slopes.to_vec(),
        state_names,
        x_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::{Matrix10, Matrix10x3, MmcInput, MmcState, Vector10};
    use crate::network::{assemble_from_elements, build_incidence};
    use nalgebra::{Matrix2x4, Matrix4, Vector2};

    fn fake_linearization(seed: f64) -> MmcLinearization {
        MmcLinearization {
            a1: Matrix10::from_fn(|r, c| (seed + r as f64 * 0.37 + c as f64 * 1.13).sin()),
            b1: Matrix10x3::from_fn(|r, c| (seed * 2.0 + r as f64 * 0.71 - c as f64).cos()),
            state: MmcState(Vector10::zeros()),
            input: MmcInput::new(0.0, 0.0, 0.0),
        }
    }

    fn fake_controller(seed: f64) -> ControllerModel {
        ControllerModel {
            a: Matrix4::from_fn(|r, c| (seed + 3.0 * r as f64 + c as f64).sin()),
            b: Matrix4::from_fn(|r, c| (seed - r as f64 + 0.5 * c as f64).cos()),
            c: Matrix2x4::from_fn(|r, c| (seed * 0.3 + r as f64 + 2.0 * c as f64).sin()),
            d: Matrix2x4::from_fn(|r, c| (seed * 0.9 - r as f64 + c as f64).cos()),
            y0: Vector2::zeros(),
        }
    }

    fn fake_network(n: usize) -> NetworkModel {
        let lines: Vec<_> = (1..n)
            .map(|i| crate::config::LineSpec {
                from_node: i - 1,
                to_node: i,
                length_km: 50.0 * i as f64,
                r_per_km: 0.01,
                l_per_km: 1e-3,
                c_per_km: 1e-8,
            })
            .collect();
        let inc = build_incidence(n, &lines);
        let el: Vec<_> = lines.iter().map(crate::network::t_circuit).collect();
        assemble_from_elements(&inc, &el, &vec![0.2; n], &vec![1e-6; n]).unwrap()
    }

    #[test]
    fn single_unit_stack_is_the_unit() {
        let lin = fake_linearization(0.4);
        let blocks = stack_units(&[lin.clone()], &[fake_controller(0.1)], &fake_network(1)).unwrap();
        assert_eq!(blocks.a1, DMatrix::from_column_slice(10, 10, lin.a1.as_slice()));
    }

    #[test]
    fn interleaving_is_a_permutation_of_block_diagonal() {
        let lins = [fake_linearization(0.4), fake_linearization(1.7)];
        let ctrls = [fake_controller(0.1), fake_controller(0.2)];
        let blocks = stack_units(&lins, &ctrls, &fake_network(2)).unwrap();
        // direct block-diagonal, then permute unit-major -> signal-major
        let mut bd = DMatrix::zeros(20, 20);
        for (u, l) in lins.iter().enumerate() {
            bd.view_mut((10 * u, 10 * u), (10, 10))
                .copy_from(&DMatrix::from_column_slice(10, 10, l.a1.as_slice()));
        }
        let perm = |g: usize| {
            let (signal, unit) = (g / 2, g % 2);
            unit * 10 + signal
        };
        let permuted = DMatrix::from_fn(20, 20, |r, c| bd[(perm(r), perm(c))]);
        assert_eq!(blocks.a1, permuted);
    }

    #[test]
    fn restacking_changes_only_that_unit() {
        let ctrls = [fake_controller(0.1), fake_controller(0.2), fake_controller(0.3)];
        let net = fake_network(3);
        let a = stack_units(&[fake_linearization(0.4), fake_linearization(1.7), fake_linearization(2.2)], &ctrls, &net).unwrap();
        let b = stack_units(&[fake_linearization(0.4), fake_linearization(9.9), fake_linearization(2.2)], &ctrls, &net).unwrap();
        for r in 0..30 {
            for c in 0..30 {
                if r % 3 != 1 && c % 3 != 1 {
                    assert_eq!(a.a1[(r, c)], b.a1[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn unit_count_mismatch_is_reported() {
        let err = stack_units(&[fake_linearization(0.4)], &[fake_controller(0.1)], &fake_network(2));
        assert!(matches!(err, Err(AssemblyError::UnitCount { expected: 2, got: 1, .. })));
    }

    #[test]
    fn selector_shapes_and_patterns() {
        let s = build_selectors(1, 0);
        let mut g3 = DMatrix::zeros(1, 10);
        g3[(0, 0)] = 1.0;
        assert_eq!(s.g3, g3);
        assert_eq!(s.gs2, DMatrix::from_element(1, 1, 1.0));

        let (n, m) = (4, 5);
        let s = build_selectors(n, m);
        assert_eq!(s.g3.shape(), (n, 10 * n));
        assert_eq!(s.gs1.shape(), (2 * n, 10 * n));
        assert_eq!(s.gs2.shape(), (n, 3 * m + n));
        assert_eq!(s.g11.shape(), (3 * n, 3 * m + n));
        assert_eq!(s.g12.shape(), (3 * n, 2 * n));
        assert_eq!(s.g21.shape(), (4 * n, n));
        assert_eq!(s.g23.shape(), (4 * n, 2 * n));
        for g in [&s.g3, &s.gs1, &s.gs2, &s.g11, &s.g12, &s.g21, &s.g23] {
            for row in g.row_iter() {
                assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
                assert!(row.iter().filter(|&&v| v == 1.0).count() <= 1);
            }
        }
        let x1 = DVector::from_fn(10 * n, |i, _| i as f64);
        let picked = &s.gs1 * &x1;
        let expected = DVector::from_fn(2 * n, |i, _| (n + i) as f64);
        assert_eq!(picked, expected);
    }

    #[test]
    fn zero_droop_gain_blocks() {
        let n = 2;
        let net = fake_network(n);
        let blocks = stack_units(
            &[fake_linearization(0.4), fake_linearization(1.7)],
            &[fake_controller(0.1), fake_controller(0.2)],
            &net,
        )
        .unwrap();
        let sel = build_selectors(n, 1);
        let a = assemble_global(&blocks, &sel, &DMatrix::zeros(n, n)).unwrap();
        let b13 = &blocks.b1 * &sel.g11;
        assert_eq!(a.view((0, 14 * n), (10 * n, net.dim())).into_owned(), b13);
        assert!(a.view((10 * n, 14 * n), (4 * n, net.dim())).iter().all(|&v| v == 0.0));
        assert!(a.view((14 * n, 10 * n), (net.dim(), 4 * n)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_droop_matrix_shape_names_block() {
        let net = fake_network(2);
        let blocks = stack_units(
            &[fake_linearization(0.4), fake_linearization(1.7)],
            &[fake_controller(0.1), fake_controller(0.2)],
            &net,
        )
        .unwrap();
        let err = assemble_global(&blocks, &build_selectors(2, 1), &DMatrix::zeros(3, 3));
        assert!(matches!(err, Err(AssemblyError::Dimension { row: 1, col: 3, .. })));
    }
}
