//! Station-level control: PCC power measurement, the droop law and the
//! cascaded dq power/current controller in state-space form.
//!
//! Controller realization (one station):
//!
//! ```text
//!   eP = P_ref - P                 eQ = Q_ref - Q
//!   id* =  kp_pq eP + ki_pq ∫eP     iq* = -(kp_pq eQ + ki_pq ∫eQ)
//!   vref_d = -[ vd·ff - ω L i_q·dec + kp_i (id* - i_d) + ki_i ∫(id* - i_d) ]
//!   vref_q = -[ vq·ff + ω L i_d·dec + kp_i (iq* - i_q) + ki_i ∫(iq* - i_q) ]
//! ```
//!
//! The outer sign flip on `vref` follows from the modulation convention
//! `S_p = 1/2 + vref/Ṽ`, under which the converter's ac emf is `-vref`.
//! `L = L_arm/2 + L0` is the equivalent ac-side inductance.

use nalgebra::{DMatrix, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::config::{ControllerGains, ConverterSpec, SystemConfig};

/// Droop law parameters. `k` in W/V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopParams {
    pub k: f64,
    pub v_dc_ref: f64,
    pub p0: f64,
}

impl DroopParams {
    /// `P_ref = -k (v_dc_ref - v_dc) + P0`.
    pub fn reference(&self, v_dc: f64) -> f64 {
        droop_reference(self, v_dc)
    }

    /// New slope with P0 shifted so that `reference(v_dc_eq)` is unchanged.
    pub fn retuned(&self, k: f64, v_dc_eq: f64) -> DroopParams {
        DroopParams {
            k,
            v_dc_ref: self.v_dc_ref,
            p0: self.p0 + (k - self.k) * (self.v_dc_ref - v_dc_eq),
        }
    }
}

pub fn droop_reference(droop: &DroopParams, v_dc: f64) -> f64 {
    -droop.k * (droop.v_dc_ref - v_dc) + droop.p0
}

/// PCC active and reactive power from peak-valued dq quantities.
pub fn pcc_power(v_d: f64, v_q: f64, i_d: f64, i_q: f64) -> (f64, f64) {
    (
        1.5 * (v_d * i_d + v_q * i_q),
        1.5 * (v_q * i_d - v_d * i_q),
    )
}

/// Linear controller `x' = A x + B u`, `y = C x + D u + y0`.
///
/// States `[∫(id*-i_d), ∫(iq*-i_q), ∫eP, ∫eQ]`, inputs
/// `[P_ref, Q_ref, i_d, i_q]`, outputs `[vref_d, vref_q]`. The offset `y0`
/// carries the PCC voltage feedforward and vanishes in small-signal form.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4<f64>,
    pub c: Matrix2x4<f64>,
    pub d: Matrix2x4<f64>,
    pub y0: Vector2<f64>,
}

impl ControllerModel {
    pub fn derivative(&self, x: &Vector4<f64>, u: &Vector4<f64>) -> Vector4<f64> {
        self.a * x + self.b * u
    }

    pub fn output(&self, x: &Vector4<f64>, u: &Vector4<f64>) -> Vector2<f64> {
        self.c * x + self.d * u + self.y0
    }
}

/// Equivalent ac-side inductance seen by the current loop.
pub fn ac_inductance(spec: &ConverterSpec) -> f64 {
    0.5 * spec.l_arm + spec.l0
}

/// Builds the controller for one station.
///
/// P and Q are linear in `i_dq` against the fixed PCC source, so the
/// realization is exact rather than an expansion around an operating point.
pub fn controller_model(gains: &ControllerGains, spec: &ConverterSpec) -> ControllerModel {
    let (vd, vq) = spec.pcc_voltage_dq;
    let ControllerGains {
        kp_i,
        ki_i,
        kp_pq,
        ki_pq,
        ..
    } = *gains;
    let ff = if gains.voltage_feedforward { 1.0 } else { 0.0 };
    let wl = if gains.decoupling {
        spec.omega0 * ac_inductance(spec)
    } else {
        0.0
    };

    // ∂eP/∂u and ∂eQ/∂u
    let de_p = [1.0, 0.0, -1.5 * vd, -1.5 * vq];
    let de_q = [0.0, 1.0, -1.5 * vq, 1.5 * vd];

    let mut a = Matrix4::zeros();
    a[(0, 2)] = ki_pq;
    a[(1, 3)] = -ki_pq;

    let mut b = Matrix4::zeros();
    for j in 0..4 {
        b[(0, j)] = kp_pq * de_p[j];
        b[(1, j)] = -kp_pq * de_q[j];
        b[(2, j)] = de_p[j];
        b[(3, j)] = de_q[j];
    }
    b[(0, 2)] -= 1.0;
    b[(1, 3)] -= 1.0;

    // vref = -(kp_i (i* - i) + ki_i x_i + ff v + decoupling)
    let mut c = Matrix2x4::zeros();
    c[(0, 0)] = -ki_i;
    c[(0, 2)] = -kp_i * ki_pq;
    c[(1, 1)] = -ki_i;
    c[(1, 3)] = kp_i * ki_pq;

    let mut d = Matrix2x4::zeros();
    for j in 0..4 {
        d[(0, j)] = -kp_i * kp_pq * de_p[j];
        d[(1, j)] = kp_i * kp_pq * de_q[j];
    }
    d[(0, 2)] += kp_i;
    d[(1, 3)] += kp_i;
    d[(0, 3)] += wl;
    d[(1, 2)] -= wl;

    ControllerModel {
        a,
        b,
        c,
        d,
        y0: Vector2::new(-ff * vd, -ff * vq),
    }
}

/// Diagonal `k_Λ` with the slope of each droop station, zero elsewhere.
pub fn droop_gain_matrix(config: &SystemConfig) -> DMatrix<f64> {
    let n = config.n_nodes();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            config.converters[i].droop.map_or(0.0, |d| d.k)
        } else {
            0.0
        }
    })
}
