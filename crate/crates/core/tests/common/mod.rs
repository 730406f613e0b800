//! Generators and invariant checks shared by the property suite and the
//! acceptance runner.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mtdc::config::{parse_value, validate, SystemConfig};
use mtdc::modal::{eig_full, sensitivity_bundle};
use mtdc::network::{assemble_network, build_incidence};
use mtdc::region::{estimate_supremum, RegionError};
use mtdc::synthetic::planted_example;
use mtdc::system::SystemModel;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use serde_json::{json, Value};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// A connected random grid: a spanning tree over `lengths.len() + 1` nodes
/// (node `i + 1` hangs off `parents[i] % (i + 1)`) plus `extra` chords.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub parents: Vec<usize>,
    pub lengths: Vec<f64>,
    pub extra: Vec<(usize, usize, f64)>,
    pub droop: Vec<bool>,
    pub slope_mw_per_kv: Vec<f64>,
}

pub fn grid_spec() -> impl Strategy<Value = GridSpec> {
    (2usize..7)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..64, n - 1),
                prop::collection::vec(50.0f64..400.0, n - 1),
                prop::collection::vec((0usize..64, 0usize..64, 50.0f64..400.0), 0..3),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(5.0f64..60.0, n),
            )
        })
        .prop_map(|(parents, lengths, extra, droop, slope_mw_per_kv)| GridSpec {
            parents,
            lengths,
            extra,
            droop,
            slope_mw_per_kv,
        })
}

impl GridSpec {
    pub fn n_nodes(&self) -> usize {
        self.lengths.len() + 1
    }

    pub fn document(&self) -> Value {
        let n = self.n_nodes();
        let name = |i: usize| format!("n{i}");
        let line = |a: usize, b: usize, len: f64| {
            json!({"from": name(a), "to": name(b), "length": {"value": len, "unit": "km"},
                "r_per_km": {"value": 0.01273, "unit": "ohm/km"},
                "l_per_km": {"value": 0.9337, "unit": "mH/km"},
                "c_per_km": {"value": 0.01274, "unit": "uF/km"}})
        };
        let mut lines = Vec::new();
        for (i, (&p, &len)) in self.parents.iter().zip(&self.lengths).enumerate() {
            lines.push(line(p % (i + 1), i + 1, len));
        }
        for &(a, b, len) in &self.extra {
            let (a, b) = (a % n, b % n);
            if a != b {
                lines.push(line(a, b, len));
            }
        }
        // at least one droop station holds the dc voltage
        let droop: Vec<bool> = (0..n).map(|i| self.droop[i] || i == 0).collect();
        let converters: Vec<Value> = (0..n)
            .map(|i| {
                let mut c = json!({
                    "node": name(i), "mode": if droop[i] { "droop" } else { "fixed-power" },
                    "c_sm": {"value": 20, "unit": "mF"}, "n_sm": 400,
                    "l_arm": {"value": 100, "unit": "mH"}, "r_arm": {"value": 2, "unit": "ohm"},
                    "l0": {"value": 0, "unit": "mH"}, "r0": {"value": 1, "unit": "ohm"},
                    "l_s": {"value": 200, "unit": "mH"}, "c_g": {"value": 1, "unit": "uF"},
                    "v_dc_nom": {"value": 1000, "unit": "kV"},
                    "pcc_voltage_dq": [{"value": 400, "unit": "kV"}, {"value": 0, "unit": "V"}],
                    "omega0": {"value": 50, "unit": "Hz"},
                    "p_set": {"value": 50, "unit": "MW"}, "q_set": {"value": 0, "unit": "Mvar"}
                });
                if droop[i] {
                    c["droop"] = json!({"k": {"value": self.slope_mw_per_kv[i], "unit": "MW/kV"},
                        "v_dc_ref": {"value": 500, "unit": "kV"}, "p0": {"value": -50, "unit": "MW"}});
                }
                c
            })
            .collect();
        json!({
            "nodes": (0..n).map(name).collect::<Vec<_>>(),
            "lines": lines,
            "converters": converters,
            "gains": {"default": {"kp_i": 3, "ki_i": 50, "kp_pq": 1e-5, "ki_pq": 1e-3}},
            "scenario": []
        })
    }

    pub fn config(&self) -> SystemConfig {
        validate(parse_value(&self.document()).expect("generated document parses"))
            .expect("generated grid is valid")
            .into_inner()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// One +1 and one −1 per line, `J = J1 − J2`, and rank `n − 1` on a
/// connected grid.
pub fn incidence_properties(g: &GridSpec) -> Result<(), TestCaseError> {
    let cfg = g.config();
    let inc = build_incidence(cfg.n_nodes(), &cfg.lines);
    for r in 0..inc.j.nrows() {
        let row = inc.j.row(r);
        let plus = row.iter().filter(|v| **v == 1.0).count();
        let minus = row.iter().filter(|v| **v == -1.0).count();
        let zero = row.iter().filter(|v| **v == 0.0).count();
        check(plus == 1 && minus == 1 && zero == row.len() - 2, || format!("row {r}: {row}"))?;
    }
    check(inc.j == &inc.j1 - &inc.j2, || "J ≠ J1 − J2".into())?;
    let ones = DVector::from_element(cfg.n_nodes(), 1.0);
    check((&inc.j * &ones).amax() == 0.0, || "rows do not sum to zero".into())?;
    let rank = inc.j.clone().svd(false, false).rank(1e-9);
    check(rank == cfg.n_nodes() - 1, || format!("rank {rank} on {} nodes", cfg.n_nodes()))
}

/// The line-current mass matrix is symmetric positive definite.
pub fn mass_positive_definite(g: &GridSpec) -> Result<(), TestCaseError> {
    let cfg = g.config();
    let inc = build_incidence(cfg.n_nodes(), &cfg.lines);
    let net = assemble_network(&inc, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let e = &net.mass;
    check((e - e.transpose()).amax() <= 1e-15 * e.amax(), || "mass matrix not symmetric".into())?;
    check(e.clone().cholesky().is_some(), || "mass matrix not positive definite".into())
}

/// `A₀ + Σ kⱼ Mⱼ` reproduces the directly assembled Jacobian at other slopes.
pub fn affine_reconstruction(g: &GridSpec, factors: &[f64]) -> Result<f64, TestCaseError> {
    let mut sys = SystemModel::new(&g.config()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let x = sys.flat_start();
    let model = sys.small_signal(&x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let k: Vec<f64> = model
        .slopes
        .iter()
        .zip(factors.iter().cycle())
        .map(|(k, f)| k * f)
        .collect();
    sys.set_slopes(&k, None);
    let direct = sys.jacobian(&x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let err = (direct - model.at_slopes(&k)).amax() / model.a_ss.amax();
    check(err <= 1e-12, || format!("relative reconstruction error {err:e}"))?;
    Ok(err)
}

/// A random real matrix with a spread spectrum.
pub fn random_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (3usize..24).prop_flat_map(|n| {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let mut a = DMatrix::from_vec(n, n, v);
            for i in 0..n {
                a[(i, i)] -= 1.0 + 0.5 * i as f64;
            }
            a
        })
    })
}

pub fn biorthogonality(a: &DMatrix<f64>) -> Result<f64, TestCaseError> {
    let sol = eig_full(a).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let err = sol.biorthogonality_error();
    check(err <= 1e-8, || format!("‖ZW − I‖ = {err:e}"))?;
    Ok(err)
}

/// Sensitivities of conjugate partners are conjugate, first and second
/// order, for real parameter directions.
pub fn conjugate_symmetry(a: &DMatrix<f64>, m: &[DMatrix<f64>]) -> Result<(), TestCaseError> {
    let sol = eig_full(a).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let b = sensitivity_bundle(&sol, m);
    for i in 0..sol.len() {
        let p = b.partner[i];
        if b.is_excluded(i) || b.is_excluded(p) {
            continue;
        }
        for j in 0..m.len() {
            let (x, y) = (b.first[(i, j)], b.first[(p, j)].conj());
            check((x - y).norm() <= 1e-9 * (1.0 + x.norm()), || format!("first order, mode {i}: {x} vs {y}"))?;
            for l in 0..m.len() {
                let (x, y) = (b.second[i][(j, l)], b.second[p][(j, l)].conj());
                check((x - y).norm() <= 1e-9 * (1.0 + x.norm()), || format!("second order, mode {i}: {x} vs {y}"))?;
            }
        }
    }
    Ok(())
}

/// Every bounded supremum of a planted system makes its binding constraint
/// vanish at the returned slope.
pub fn binding_equality(seed: u64, axis: usize, dev: &[f64]) -> Result<f64, TestCaseError> {
    let sys = planted_example(3, 2, 3, seed);
    let set = sys.constraints(&sys.k_ref).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let r = match estimate_supremum(&set, axis, dev, 1e4) {
        Ok(r) => r,
        Err(RegionError::InfeasibleExpansion { .. }) => return Ok(0.0),
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    };
    let Some(mode) = r.binding_mode else {
        return Ok(0.0);
    };
    let c = set.constraints.iter().find(|c| c.mode == mode).expect("binding mode has a constraint");
    let mut dk = dev.to_vec();
    dk[axis] = r.k_sup - set.expansion[axis];
    let residual = (c.deviation(&dk) - c.margin).abs() / c.margin;
    check(residual <= 1e-9, || format!("binding residual {residual:e}"))?;
    Ok(residual)
}
