//! Averaged MMC model in dq coordinates.
//!
//! The arm-switching-function equations of one phase leg,
//!
//! ```text
//!   v_dc - S_p v_p - R i_p - L di_p/dt = v_ac
//!  -v_dc + S_n v_n + R i_n + L di_n/dt = v_ac
//!   (C_SM/N) dv_p/dt = S_p i_p,  (C_SM/N) dv_n/dt = S_n i_n
//!   v_ac = v_pcc + R0 i + L0 di/dt
//! ```
//!
//! are harmonic-balanced keeping dc, fundamental and second-harmonic terms:
//! `v_p,n = v^dc ± v^ω + v^2ω`, `i_p,n = i_dc/3 ± i/2 + i^2ω`,
//! `S_p,n = 1/2 ± vref/Ṽ`.
//!
//! Phasor conventions, phase `k = 0, 1, 2` (a, b, c) and `θ = ω0 t`:
//!
//! * fundamental: `x_k(t) = Re[(x_d + j x_q) e^{j(θ - 2πk/3)}]`
//! * second harmonic, negative sequence:
//!   `x_k(t) = Re[(x_d + j x_q) e^{j(2θ + 2πk/3)}]`
//!
//! Third and higher harmonics produced by the products are dropped. The
//! result has the form `ẋ = A10 x + g(x) u + c` with `u = [v_dc, vref_d,
//! vref_q]` and `c` the constant PCC-source forcing. `v_dc` is the pole
//! voltage of the dc terminal; the arm sum `v^dc` sits near `2 v_dc = Ṽ`.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::config::ConverterSpec;

pub const I_DC: usize = 0;
pub const I_D: usize = 1;
pub const I_Q: usize = 2;
pub const I2_D: usize = 3;
pub const I2_Q: usize = 4;
pub const V_DC: usize = 5;
pub const V1_D: usize = 6;
pub const V1_Q: usize = 7;
pub const V2_D: usize = 8;
pub const V2_Q: usize = 9;

pub const STATE_NAMES: [&str; 10] = [
    "i_dc", "i_d", "i_q", "i2_d", "i2_q", "v_sum", "v1_d", "v1_q", "v2_d", "v2_q",
];
pub const INPUT_NAMES: [&str; 3] = ["v_dc", "vref_d", "vref_q"];

pub type Vector10 = SVector<f64, 10>;
pub type Matrix10 = SMatrix<f64, 10, 10>;
pub type Matrix10x3 = SMatrix<f64, 10, 3>;

/// `[i_dc, i_d, i_q, i2_d, i2_q, v^dc, v1_d, v1_q, v2_d, v2_q]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmcState(pub Vector10);

impl MmcState {
    pub fn i_dc(&self) -> f64 {
        self.0[I_DC]
    }
    pub fn i_dq(&self) -> (f64, f64) {
        (self.0[I_D], self.0[I_Q])
    }
    pub fn i2_dq(&self) -> (f64, f64) {
        (self.0[I2_D], self.0[I2_Q])
    }
    pub fn v_sum(&self) -> f64 {
        self.0[V_DC]
    }
    pub fn v1_dq(&self) -> (f64, f64) {
        (self.0[V1_D], self.0[V1_Q])
    }
    pub fn v2_dq(&self) -> (f64, f64) {
        (self.0[V2_D], self.0[V2_Q])
    }
}

/// `[v_dc, vref_d, vref_q]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmcInput(pub Vector3<f64>);

impl MmcInput {
    pub fn new(v_dc: f64, vref_d: f64, vref_q: f64) -> Self {
        MmcInput(Vector3::new(v_dc, vref_d, vref_q))
    }
}

/// Electrical parameters of one station, base units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmcParams {
    pub l_arm: f64,
    pub r_arm: f64,
    pub l0: f64,
    pub r0: f64,
    /// C_SM / N
    pub c_arm: f64,
    /// Ṽ_dc
    pub v_nom: f64,
    pub omega0: f64,
    pub pcc_dq: (f64, f64),
}

impl MmcParams {
    pub fn from_spec(spec: &ConverterSpec) -> Self {
        MmcParams {
            l_arm: spec.l_arm,
            r_arm: spec.r_arm,
            l0: spec.l0,
            r0: spec.r0,
            c_arm: spec.arm_capacitance(),
            v_nom: spec.v_dc_nom,
            omega0: spec.omega0,
            pcc_dq: spec.pcc_voltage_dq,
        }
    }

    fn l_ac(&self) -> f64 {
        0.5 * self.l_arm + self.l0
    }

    fn r_ac(&self) -> f64 {
        0.5 * self.r_arm + self.r0
    }
}

/// dc and fundamental dq parts of the switching functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingComponents {
    pub dc: f64,
    pub d: f64,
    pub q: f64,
}

impl SwitchingComponents {
    /// `S_jp(t)` for phase `k` at angle `θ`.
    pub fn upper(&self, theta: f64, k: usize) -> f64 {
        let phi = theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        self.dc + self.d * phi.cos() - self.q * phi.sin()
    }

    /// `S_jn(t) = 1 - S_jp(t)`.
    pub fn lower(&self, theta: f64, k: usize) -> f64 {
        1.0 - self.upper(theta, k)
    }
}

pub fn switching_components(vref_d: f64, vref_q: f64, v_dc_nom: f64) -> SwitchingComponents {
    SwitchingComponents {
        dc: 0.5,
        d: vref_d / v_dc_nom,
        q: vref_q / v_dc_nom,
    }
}

/// Right-hand side of the dq model, written out term by term.
pub fn mmc_derivative(state: &MmcState, input: &MmcInput, params: &MmcParams) -> Vector10 {
    let x = &state.0;
    let (vt, md, mq) = (
        input.0[0],
        input.0[1] / params.v_nom,
        input.0[2] / params.v_nom,
    );
    let (idc, id, iq) = (x[I_DC], x[I_D], x[I_Q]);
    let (jd, jq) = (x[I2_D], x[I2_Q]);
    let vs = x[V_DC];
    let (ad, aq) = (x[V1_D], x[V1_Q]);
    let (bd, bq) = (x[V2_D], x[V2_Q]);
    let (vgd, vgq) = params.pcc_dq;
    let l = params.l_arm;
    let r = params.r_arm;
    let le = params.l_ac();
    let re = params.r_ac();
    let c2 = 2.0 * params.c_arm;
    let w = params.omega0;

    let mut dx = Vector10::zeros();
    // dc loop of the circulating current
    dx[I_DC] = 3.0 / l * (vt - 0.5 * vs - 0.5 * (md * ad + mq * aq) - r / 3.0 * idc);
    // ac current: emf -(V1/2 + M v^dc + M* V2 / 2)
    dx[I_D] = (-0.5 * ad - md * vs - 0.5 * (md * bd + mq * bq) - re * id - vgd) / le + w * iq;
    dx[I_Q] = (-0.5 * aq - mq * vs - 0.5 * (md * bq - mq * bd) - re * iq - vgq) / le - w * id;
    // second-harmonic circulating current
    dx[I2_D] = (-0.5 * bd - 0.5 * (md * ad - mq * aq) - r * jd) / l + 2.0 * w * jq;
    dx[I2_Q] = (-0.5 * bq - 0.5 * (md * aq + mq * ad) - r * jq) / l - 2.0 * w * jd;
    // capacitor sum, dc part
    dx[V_DC] = (idc / 3.0 + 0.5 * (md * id + mq * iq)) / c2;
    // capacitor difference, fundamental
    dx[V1_D] = (0.5 * id + 2.0 / 3.0 * md * idc + (md * jd + mq * jq)) / c2 + w * aq;
    dx[V1_Q] = (0.5 * iq + 2.0 / 3.0 * mq * idc + (md * jq - mq * jd)) / c2 - w * ad;
    // capacitor sum, second harmonic
    dx[V2_D] = (jd + 0.5 * (md * id - mq * iq)) / c2 + 2.0 * w * bq;
    dx[V2_Q] = (jq + 0.5 * (md * iq + mq * id)) / c2 - 2.0 * w * bd;
    dx
}

/// The state matrix at zero modulation.
pub fn a10(params: &MmcParams) -> Matrix10 {
    let l = params.l_arm;
    let r = params.r_arm;
    let le = params.l_ac();
    let re = params.r_ac();
    let c2 = 2.0 * params.c_arm;
    let w = params.omega0;
    let mut a = Matrix10::zeros();
    a[(I_DC, V_DC)] = -1.5 / l;
    a[(I_DC, I_DC)] = -r / l;
    a[(I_D, V1_D)] = -0.5 / le;
    a[(I_D, I_D)] = -re / le;
    a[(I_D, I_Q)] = w;
    a[(I_Q, V1_Q)] = -0.5 / le;
    a[(I_Q, I_Q)] = -re / le;
    a[(I_Q, I_D)] = -w;
    a[(I2_D, V2_D)] = -0.5 / l;
    a[(I2_D, I2_D)] = -r / l;
    a[(I2_D, I2_Q)] = 2.0 * w;
    a[(I2_Q, V2_Q)] = -0.5 / l;
    a[(I2_Q, I2_Q)] = -r / l;
    a[(I2_Q, I2_D)] = -2.0 * w;
    a[(V_DC, I_DC)] = 1.0 / (3.0 * c2);
    a[(V1_D, I_D)] = 0.5 / c2;
    a[(V1_D, V1_Q)] = w;
    a[(V1_Q, I_Q)] = 0.5 / c2;
    a[(V1_Q, V1_D)] = -w;
    a[(V2_D, I2_D)] = 1.0 / c2;
    a[(V2_D, V2_Q)] = 2.0 * w;
    a[(V2_Q, I2_Q)] = 1.0 / c2;
    a[(V2_Q, V2_D)] = -2.0 * w;
    a
}

/// Matrices `G_d`, `G_q` with `∂ẋ/∂m_d = G_d x` and `∂ẋ/∂m_q = G_q x`,
/// where `m = vref / Ṽ`. The bilinear part is `(m_d G_d + m_q G_q) x`.
pub fn modulation_matrices(params: &MmcParams) -> (Matrix10, Matrix10) {
    let l = params.l_arm;
    let le = params.l_ac();
    let c2 = 2.0 * params.c_arm;
    let mut gd = Matrix10::zeros();
    let mut gq = Matrix10::zeros();

    gd[(I_DC, V1_D)] = -1.5 / l;
    gq[(I_DC, V1_Q)] = -1.5 / l;

    gd[(I_D, V_DC)] = -1.0 / le;
    gd[(I_D, V2_D)] = -0.5 / le;
    gq[(I_D, V2_Q)] = -0.5 / le;

    gd[(I_Q, V2_Q)] = -0.5 / le;
    gq[(I_Q, V_DC)] = -1.0 / le;
    gq[(I_Q, V2_D)] = 0.5 / le;

    gd[(I2_D, V1_D)] = -0.5 / l;
    gq[(I2_D, V1_Q)] = 0.5 / l;

    gd[(I2_Q, V1_Q)] = -0.5 / l;
    gq[(I2_Q, V1_D)] = -0.5 / l;

    gd[(V_DC, I_D)] = 0.5 / c2;
    gq[(V_DC, I_Q)] = 0.5 / c2;

    gd[(V1_D, I_DC)] = 2.0 / (3.0 * c2);
    gd[(V1_D, I2_D)] = 1.0 / c2;
    gq[(V1_D, I2_Q)] = 1.0 / c2;

    gd[(V1_Q, I2_Q)] = 1.0 / c2;
    gq[(V1_Q, I_DC)] = 2.0 / (3.0 * c2);
    gq[(V1_Q, I2_D)] = -1.0 / c2;

    gd[(V2_D, I_D)] = 0.5 / c2;
    gq[(V2_D, I_Q)] = -0.5 / c2;

    gd[(V2_Q, I_Q)] = 0.5 / c2;
    gq[(V2_Q, I_D)] = 0.5 / c2;

    (gd, gq)
}

/// Constant forcing from the PCC source.
pub fn pcc_forcing(params: &MmcParams) -> Vector10 {
    let mut c = Vector10::zeros();
    c[I_D] = -params.pcc_dq.0 / params.l_ac();
    c[I_Q] = -params.pcc_dq.1 / params.l_ac();
    c
}

/// `g(x)`: the input matrix multiplying `u` in `ẋ = A10 x + g(x) u + c`.
pub fn input_matrix(state: &MmcState, params: &MmcParams) -> Matrix10x3 {
    let (gd, gq) = modulation_matrices(params);
    let mut g = Matrix10x3::zeros();
    g[(I_DC, 0)] = 3.0 / params.l_arm;
    g.set_column(1, &(gd * state.0 / params.v_nom));
    g.set_column(2, &(gq * state.0 / params.v_nom));
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmcLinearization {
    pub a1: Matrix10,
    pub b1: Matrix10x3,
    pub state: MmcState,
    pub input: MmcInput,
}

/// Analytic Jacobians of [`mmc_derivative`] at `(state, input)`.
pub fn mmc_linearize(state: &MmcState, input: &MmcInput, params: &MmcParams) -> MmcLinearization {
    let (gd, gq) = modulation_matrices(params);
    let md = input.0[1] / params.v_nom;
    let mq = input.0[2] / params.v_nom;
    MmcLinearization {
        a1: a10(params) + gd * md + gq * mq,
        b1: input_matrix(state, params),
        state: *state,
        input: *input,
    }
}

/// Steady-state power audit of one station, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAudit {
    /// Power drawn from both dc poles, `2 v_dc i_dc`.
    pub dc_input: f64,
    /// Active power delivered at the PCC.
    pub ac_output: f64,
    /// Time-averaged losses in the six arm resistors and the PCC branch.
    pub losses: f64,
}

pub fn power_audit(state: &MmcState, v_dc: f64, params: &MmcParams) -> PowerAudit {
    let (id, iq) = state.i_dq();
    let (jd, jq) = state.i2_dq();
    let idc = state.i_dc();
    let i_sq = id * id + iq * iq;
    let j_sq = jd * jd + jq * jq;
    // per phase: R (<i_p²> + <i_n²>) = R (2 i_dc²/9 + |I2|² + |I|²/4)
    let arm = 3.0 * params.r_arm * (2.0 * idc * idc / 9.0 + j_sq + 0.25 * i_sq);
    let pcc = 1.5 * params.r0 * i_sq;
    let (vgd, vgq) = params.pcc_dq;
    PowerAudit {
        dc_input: 2.0 * v_dc * idc,
        ac_output: 1.5 * (vgd * id + vgq * iq),
        losses: arm + pcc,
    }
}
