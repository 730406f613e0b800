//! dc grid model built from the edge-node incidence matrix.
//!
//! Each line is a T circuit: series `R_T, L_T` on both halves (half the line
//! total each) and the full shunt capacitance `C_T` at the midpoint. Each
//! station connects to its grid bus through the smoothing reactor `L_s`; the
//! grounding capacitor `C_g` sits at the converter terminal.
//!
//! ```text
//!   L_s d/dt(-J1ᵀ iα + J2ᵀ iβ) = v_bus - v_dc
//!   R_T iα + L_T iα' = J1 v_bus - v_T
//!   R_T iβ + L_T iβ' = v_T - J2 v_bus
//!   C_T v_T' = iα - iβ
//!   C_g v_dc' = -J1ᵀ iα + J2ᵀ iβ - i_dc
//! ```
//!
//! Eliminating `v_bus` gives the descriptor form `E (iα, iβ)' = ...` with
//! `E = blockdiag(L_T, L_T) + Kᵀ L_s K`, `K = [-J1ᵀ, J2ᵀ]`.

use nalgebra::{Cholesky, DMatrix};

use crate::config::{LineSpec, SystemConfig};

/// Conditioning limit on the descriptor mass matrix.
pub const MAX_MASS_CONDITION: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("line inductance matrix is singular or ill-conditioned (condition ≈ {condition:e})")]
    SingularMass { condition: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    /// lines × nodes, +1 at the sending end, -1 at the receiving end.
    pub j: DMatrix<f64>,
    /// The +1 entries of `j`.
    pub j1: DMatrix<f64>,
    /// The -1 entries of `j`, negated.
    pub j2: DMatrix<f64>,
}

pub fn build_incidence(n_nodes: usize, lines: &[LineSpec]) -> Incidence {
    let m = lines.len();
    let mut j1 = DMatrix::zeros(m, n_nodes);
    let mut j2 = DMatrix::zeros(m, n_nodes);
    for (row, line) in lines.iter().enumerate() {
        j1[(row, line.from_node)] = 1.0;
        j2[(row, line.to_node)] = 1.0;
    }
    Incidence {
        j: &j1 - &j2,
        j1,
        j2,
    }
}

/// `z' = A3 z + B3 i_dc` with `z = [iα (m), iβ (m), v_T (m), v_dc (n)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub a3: DMatrix<f64>,
    pub b3: DMatrix<f64>,
    /// Descriptor mass matrix of the line currents, 2m × 2m.
    pub mass: DMatrix<f64>,
    pub n_nodes: usize,
    pub n_lines: usize,
}

impl NetworkModel {
    pub fn dim(&self) -> usize {
        3 * self.n_lines + self.n_nodes
    }

    /// Offset of the `v_dc` block inside `z`.
    pub fn v_dc_offset(&self) -> usize {
        3 * self.n_lines
    }

    pub fn state_names(&self, nodes: &[String]) -> Vec<String> {
        let m = self.n_lines;
        let mut names = Vec::with_capacity(self.dim());
        names.extend((0..m).map(|l| format!("i_alpha[{l}]")));
        names.extend((0..m).map(|l| format!("i_beta[{l}]")));
        names.extend((0..m).map(|l| format!("v_T[{l}]")));
        names.extend(nodes.iter().map(|n| format!("v_dc[{n}]")));
        names
    }

    /// Stored energy with the smoothing-reactor coupling included.
    pub fn stored_energy(&self, z: &[f64], c_t: &[f64], c_g: &[f64]) -> f64 {
        let m = self.n_lines;
        let i_ab = DMatrix::from_column_slice(2 * m, 1, &z[..2 * m]);
        let magnetic = 0.5 * (i_ab.transpose() * &self.mass * &i_ab)[(0, 0)];
        let line_cap: f64 = (0..m).map(|l| 0.5 * c_t[l] * z[2 * m + l].powi(2)).sum();
        let ground: f64 = (0..self.n_nodes)
            .map(|i| 0.5 * c_g[i] * z[3 * m + i].powi(2))
            .sum();
        magnetic + line_cap + ground
    }
}

/// Per-line T-circuit elements `(R_T, L_T, C_T)`.
pub fn t_circuit(line: &LineSpec) -> (f64, f64, f64) {
    (
        0.5 * line.total_resistance(),
        0.5 * line.total_inductance(),
        line.total_capacitance(),
    )
}

pub fn assemble_network(
    incidence: &Incidence,
    config: &SystemConfig,
) -> Result<NetworkModel, NetworkError> {
    let elements: Vec<_> = config.lines.iter().map(t_circuit).collect();
    let l_s: Vec<f64> = config.converters.iter().map(|c| c.l_s).collect();
    let c_g: Vec<f64> = config.converters.iter().map(|c| c.c_g).collect();
    assemble_from_elements(incidence, &elements, &l_s, &c_g)
}

pub(crate) fn assemble_from_elements(
    incidence: &Incidence,
    elements: &[(f64, f64, f64)],
    l_s: &[f64],
    c_g: &[f64],
) -> Result<NetworkModel, NetworkError> {
    let n = l_s.len();
    let m = elements.len();
    let dim = 3 * m + n;

    // K = [-J1ᵀ, J2ᵀ], n × 2m
    let mut k = DMatrix::zeros(n, 2 * m);
    k.view_mut((0, 0), (n, m)).copy_from(&(-incidence.j1.transpose()));
    k.view_mut((0, m), (n, m)).copy_from(&incidence.j2.transpose());

    let ls = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(l_s));
    let mut mass = k.transpose() * &ls * &k;
    for (l, &(_, lt, _)) in elements.iter().enumerate() {
        mass[(l, l)] += lt;
        mass[(m + l, m + l)] += lt;
    }

    // rhs of the current rows: -R i_ab + S v_T - Kᵀ v_dc, S = [-I; I]
    let mut rhs = DMatrix::zeros(2 * m, dim);
    for (l, &(rt, _, _)) in elements.iter().enumerate() {
        rhs[(l, l)] = -rt;
        rhs[(m + l, m + l)] = -rt;
        rhs[(l, 2 * m + l)] = -1.0;
        rhs[(m + l, 2 * m + l)] = 1.0;
    }
    rhs.view_mut((0, 3 * m), (2 * m, n))
        .copy_from(&(-k.transpose()));

    let mut a3 = DMatrix::zeros(dim, dim);
    if m > 0 {
        let condition = mass_condition(&mass);
        let chol = Cholesky::new(mass.clone())
            .filter(|_| condition < MAX_MASS_CONDITION)
            .ok_or(NetworkError::SingularMass { condition })?;
        a3.view_mut((0, 0), (2 * m, dim))
            .copy_from(&chol.solve(&rhs));
    }
    for (l, &(_, _, ct)) in elements.iter().enumerate() {
        a3[(2 * m + l, l)] = 1.0 / ct;
        a3[(2 * m + l, m + l)] = -1.0 / ct;
    }
    for i in 0..n {
        for c in 0..2 * m {
            a3[(3 * m + i, c)] = k[(i, c)] / c_g[i];
        }
    }

    let mut b3 = DMatrix::zeros(dim, n);
    for i in 0..n {
        b3[(3 * m + i, i)] = -1.0 / c_g[i];
    }

    Ok(NetworkModel {
        a3,
        b3,
        mass,
        n_nodes: n,
        n_lines: m,
    })
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite if not PD).
pub fn mass_condition(mass: &DMatrix<f64>) -> f64 {
    if mass.nrows() == 0 {
        return 1.0;
    }
    let eig = mass.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_value, two_node_doc};

    fn path_lines() -> Vec<LineSpec> {
        let line = |from_node, to_node| LineSpec {
            from_node,
            to_node,
            length_km: 100.0,
            r_per_km: 0.01273,
            l_per_km: 0.9337e-3,
            c_per_km: 0.01274e-6,
        };
        vec![line(0, 1), line(1, 2)]
    }

    #[test]
    fn two_edge_path_incidence() {
        let inc = build_incidence(3, &path_lines());
        let expect = |rows: [[f64; 3]; 2]| DMatrix::from_fn(2, 3, |i, j| rows[i][j]);
        assert_eq!(inc.j, expect([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]));
        assert_eq!(inc.j1, expect([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]));
        assert_eq!(inc.j2, expect([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]));
        assert_eq!(&inc.j1 - &inc.j2, inc.j);
    }

    #[test]
    fn two_node_network_rows() {
        let cfg = parse_value(&two_node_doc()).unwrap();
        let inc = build_incidence(2, &cfg.lines);
        assert_eq!(inc.j[(0, 0)], 1.0);
        assert_eq!(inc.j[(0, 1)], -1.0);
        let net = assemble_network(&inc, &cfg).unwrap();
        assert_eq!(net.a3.shape(), (5, 5));
        assert_eq!(net.b3.shape(), (5, 2));
        let cg = cfg.converters[0].c_g;
        // v_dc[a]' = (-iα - i_dc[a]) / C_g, v_dc[b]' = (iβ - i_dc[b]) / C_g
        assert_eq!(net.a3[(3, 0)], -1.0 / cg);
        assert_eq!(net.a3[(3, 1)], 0.0);
        assert_eq!(net.a3[(4, 1)], 1.0 / cg);
        assert_eq!(net.b3[(3, 0)], -1.0 / cg);
        assert_eq!(net.b3[(4, 1)], -1.0 / cg);
        assert_eq!(net.b3[(3, 1)], 0.0);
    }

    #[test]
    fn vanishing_smoothing_reactor_leaves_line_inductance() {
        let inc = build_incidence(3, &path_lines());
        let elements: Vec<_> = path_lines().iter().map(t_circuit).collect();
        let net = assemble_from_elements(&inc, &elements, &[0.0; 3], &[1e-6; 3]).unwrap();
        let lt = elements[0].1;
        assert_eq!(net.mass, DMatrix::from_diagonal_element(4, 4, lt));
    }

    #[test]
    fn degenerate_inductance_rejected() {
        let inc = build_incidence(3, &path_lines());
        let mut elements: Vec<_> = path_lines().iter().map(t_circuit).collect();
        elements[0].1 = 0.0;
        let err = assemble_from_elements(&inc, &elements, &[0.0; 3], &[1e-6; 3]);
        assert!(matches!(err, Err(NetworkError::SingularMass { .. })));
    }

    #[test]
    fn lossless_network_conserves_energy() {
        // trapezoidal integration preserves quadratic invariants of linear systems
        let inc = build_incidence(3, &path_lines());
        let elements: Vec<_> = path_lines()
            .iter()
            .map(|l| {
                let (_, lt, ct) = t_circuit(l);
                (0.0, lt, ct)
            })
            .collect();
        let l_s = [0.2, 0.2, 0.2];
        let c_g = [1e-6, 2e-6, 1.5e-6];
        let net = assemble_from_elements(&inc, &elements, &l_s, &c_g).unwrap();
        let c_t: Vec<f64> = elements.iter().map(|e| e.2).collect();
        let dim = net.dim();
        let h = 20e-6;
        let eye = DMatrix::<f64>::identity(dim, dim);
        let lhs = (&eye - &net.a3 * (0.5 * h)).lu();
        let rhs = &eye + &net.a3 * (0.5 * h);
        let mut z = nalgebra::DVector::from_fn(dim, |i, _| (i as f64 * 0.7).sin() * 1e3);
        let e0 = net.stored_energy(z.as_slice(), &c_t, &c_g);
        for _ in 0..5000 {
            z = lhs.solve(&(&rhs * &z)).unwrap();
        }
        let e1 = net.stored_energy(z.as_slice(), &c_t, &c_g);
        assert!((e1 - e0).abs() < 1e-9 * e0, "{e0} -> {e1}");
    }
}
