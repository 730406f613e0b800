//! Operating point, time-domain integration of the nonlinear and linearized
//! grid models, and the per-phase arm-switching-function reference.
//!
//! Integration is implicit trapezoidal. The nonlinear step is solved by a
//! modified Newton iteration that reuses one factorization of
//! `I − h/2 J` until convergence slows, then refreshes it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{build_selectors, AssemblyError, StateLayout};
use crate::config::{EventKind, ScenarioEvent};
use crate::control::pcc_power;
use crate::converter::{mmc_derivative, mmc_linearize, MmcInput, MmcParams, MmcState, Vector10};
use crate::converter::{I_D, I_DC, I_Q, V1_D, V1_Q, V2_D, V2_Q, I2_D, I2_Q, V_DC};
use crate::system::{PowerReference, SystemModel};

pub const DEFAULT_STEP: f64 = 50e-6;
/// Equilibrium acceptance on the scaled residual.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;
/// Allowed band of equilibrium dc voltages around nominal.
pub const VOLTAGE_BAND: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("dynamics: equilibrium not found after {iterations} iterations (scaled residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dynamics: equilibrium dc voltage at node {node} is {value:.1} V, outside ±20% of {nominal:.1} V")]
    OutOfBand {
        node: String,
        value: f64,
        nominal: f64,
    },
    #[error("dynamics: step size underflow at t = {time:.6} s (h = {step:.3e} s)")]
    StepUnderflow { time: f64, step: f64 },
    #[error("dynamics: singular iteration matrix")]
    Singular,
    #[error("dynamics: scenario event at node {0} does not match the station's control mode")]
    Event(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Per-state magnitude used to normalize residuals, Newton updates and the
/// divergence guard: the largest `|x|` in the same signal group across
/// stations, floored at 1. The d and q groups of a signal (and the P and Q
/// integrators) share one scale, so a q quantity that is zero at the
/// operating point is still measured in its physical size.
pub fn state_scales(layout: &StateLayout, x: &DVector<f64>) -> DVector<f64> {
    let n = layout.n;
    let m = layout.m;
    let mut groups: Vec<(usize, usize)> = (0..14).map(|g| (g * n, n)).collect();
    let off = layout.network_offset();
    groups.extend([(off, m), (off + m, m), (off + 2 * m, m), (off + 3 * m, n)]);
    let mut size: Vec<f64> = groups.iter().map(|&(start, len)| x.rows(start, len).amax().max(1.0)).collect();
    // (d, q) partners among the 14 per-station groups
    for (d, q) in [(I_D, I_Q), (I2_D, I2_Q), (V1_D, V1_Q), (V2_D, V2_Q), (10, 11), (12, 13)] {
        let g = size[d].max(size[q]);
        size[d] = g;
        size[q] = g;
    }
    let mut s = DVector::from_element(x.len(), 1.0);
    for ((start, len), g) in groups.into_iter().zip(size) {
        s.rows_mut(start, len).fill(g);
    }
    s
}

/// `max_i |f_i| / Σ_j |J_ij| s_j`: the residual relative to the size of the
/// terms that make up each derivative.
pub fn scaled_residual(f: &DVector<f64>, jac: &DMatrix<f64>, scales: &DVector<f64>) -> f64 {
    let terms = jac.abs() * scales;
    let floor = terms.max() * 1e-12;
    f.iter()
        .zip(terms.iter())
        .map(|(fi, ti)| fi.abs() / ti.max(floor).max(1e-300))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumMethod {
    Newton,
    TimeMarchThenNewton,
}

#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub x: DVector<f64>,
    pub p_ref: Vec<f64>,
    pub q_ref: Vec<f64>,
    /// Scaled ∞-norm residual, see [`scaled_residual`].
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: EquilibriumMethod,
}

impl OperatingPoint {
    pub fn v_dc(&self, layout: &StateLayout) -> Vec<f64> {
        (0..layout.n).map(|u| self.x[layout.v_dc(u)]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    pub max_newton: usize,
    pub tolerance: f64,
    pub march_horizon: f64,
    pub quiescence_window: f64,
    pub quiescence_tolerance: f64,
    pub step: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            max_newton: 60,
            tolerance: EQUILIBRIUM_TOLERANCE,
            march_horizon: 5.0,
            quiescence_window: 0.2,
            quiescence_tolerance: 1e-6,
            step: DEFAULT_STEP,
        }
    }
}

/// Lossless dc power flow for the station powers, then per-station dq
/// quantities consistent with those powers. A starting point for Newton.
pub fn power_flow_guess(sys: &SystemModel) -> DVector<f64> {
    let l = sys.layout;
    let cfg = &sys.config;
    let n = l.n;
    let mut lap = DMatrix::zeros(n, n);
    for line in &cfg.lines {
        let g = 1.0 / line.total_resistance();
        let (a, b) = (line.from_node, line.to_node);
        lap[(a, a)] += g;
        lap[(b, b)] += g;
        lap[(a, b)] -= g;
        lap[(b, a)] -= g;
    }
    let nominal: Vec<f64> = cfg.converters.iter().map(|c| c.pole_voltage_nom()).collect();
    let mut v = DVector::from_vec(nominal.clone());
    for _ in 0..50 {
        // KCL: Lap v + i_dc(v) = 0 with i_dc = P/(2v)
        let mut f = &lap * &v;
        let mut jac = lap.clone();
        for u in 0..n {
            let p = sys.p_refs[u].value(v[u]);
            let dp = match sys.p_refs[u] {
                PowerReference::Droop(d) => d.k,
                PowerReference::Fixed(_) => 0.0,
            };
            f[u] += p / (2.0 * v[u]);
            jac[(u, u)] += dp / (2.0 * v[u]) - p / (2.0 * v[u] * v[u]);
        }
        let Some(step) = jac.lu().solve(&f) else { break };
        v -= &step;
        if step.amax() < 1e-9 * v.amax() {
            break;
        }
    }
    let mut x = DVector::zeros(l.dim());
    for u in 0..n {
        let spec = &cfg.converters[u];
        let (vd, vq) = spec.pcc_voltage_dq;
        let p = sys.p_refs[u].value(v[u]);
        let q = sys.q_refs[u];
        let den = 1.5 * (vd * vd + vq * vq);
        x[l.converter(I_DC, u)] = p / (2.0 * v[u]);
        x[l.converter(I_D, u)] = (vd * p + vq * q) / den;
        x[l.converter(I_Q, u)] = (vq * p - vd * q) / den;
        x[l.converter(V_DC, u)] = 2.0 * v[u];
        x[l.v_dc(u)] = v[u];
    }
    for (k, line) in cfg.lines.iter().enumerate() {
        let (va, vb) = (v[line.from_node], v[line.to_node]);
        let i = (va - vb) / line.total_resistance();
        x[l.network(k)] = i;
        x[l.network(l.m + k)] = i;
        x[l.network(2 * l.m + k)] = 0.5 * (va + vb);
    }
    x
}

/// Damped Newton on `f(x) = 0` with the assembled Jacobian.
pub fn newton(
    sys: &SystemModel,
    x0: &DVector<f64>,
    opts: &EquilibriumOptions,
) -> Result<(DVector<f64>, f64, usize), DynamicsError> {
    let mut x = x0.clone();
    let mut scales = state_scales(&sys.layout, &x);
    let mut f = sys.derivative(&x);
    let mut jac = sys.jacobian(&x)?;
    let mut res = scaled_residual(&f, &jac, &scales);
    let mut stalled = 0;
    for it in 0..opts.max_newton {
        let Some(dx) = jac.clone().lu().solve(&f) else {
            return Err(DynamicsError::Singular);
        };
        let merit = |f: &DVector<f64>| f.component_div(&(jac.abs() * &scales)).amax();
        let m0 = merit(&f);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-4 {
            let trial = &x - &dx * alpha;
            let ft = sys.derivative(&trial);
            if ft.iter().all(|v| v.is_finite()) && merit(&ft) < (1.0 - 1e-4 * alpha) * m0 {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // roundoff floor reached
            if res < opts.tolerance {
                return Ok((x, res, it));
            }
            return Err(DynamicsError::NoConvergence {
                iterations: it,
                residual: res,
            });
        };
        x = xn;
        f = fnew;
        scales = state_scales(&sys.layout, &x);
        jac = sys.jacobian(&x)?;
        let new_res = scaled_residual(&f, &jac, &scales);
        // polish a few iterations past the tolerance, then stop on stagnation
        if new_res < opts.tolerance {
            if new_res > 0.5 * res {
                stalled += 1;
            }
            if stalled >= 2 || new_res < 1e-15 {
                return Ok((x, new_res, it + 1));
            }
        }
        res = new_res;
    }
    if res < opts.tolerance {
        Ok((x, res, opts.max_newton))
    } else {
        Err(DynamicsError::NoConvergence {
            iterations: opts.max_newton,
            residual: res,
        })
    }
}

/// Integrates from `x0` until `‖ẋ‖` stays small for the quiescence window.
pub fn time_march(
    sys: &SystemModel,
    x0: &DVector<f64>,
    opts: &EquilibriumOptions,
) -> Result<DVector<f64>, DynamicsError> {
    let mut integ = NonlinearStepper::new(sys, x0, opts.step)?;
    let window_steps = (opts.quiescence_window / opts.step).ceil() as usize;
    let mut quiet = 0;
    let steps = (opts.march_horizon / opts.step).ceil() as usize;
    for _ in 0..steps {
        integ.step(sys)?;
        let res = scaled_residual(&integ.f, &integ.jac, &integ.scales);
        quiet = if res < opts.quiescence_tolerance { quiet + 1 } else { 0 };
        if quiet >= window_steps {
            break;
        }
    }
    Ok(integ.x)
}

fn check_band(sys: &SystemModel, x: &DVector<f64>) -> Result<(), DynamicsError> {
    for (u, spec) in sys.config.converters.iter().enumerate() {
        let v = x[sys.layout.v_dc(u)];
        let nominal = spec.pole_voltage_nom();
        if !((v - nominal).abs() <= VOLTAGE_BAND * nominal) {
            return Err(DynamicsError::OutOfBand {
                node: sys.config.nodes[u].clone(),
                value: v,
                nominal,
            });
        }
    }
    Ok(())
}

/// Solves `f(x*) = 0` from `guess` (the power-flow start when `None`).
pub fn solve_equilibrium_from(
    sys: &SystemModel,
    guess: Option<&DVector<f64>>,
    opts: &EquilibriumOptions,
) -> Result<OperatingPoint, DynamicsError> {
    let x0 = guess.cloned().unwrap_or_else(|| power_flow_guess(sys));
    let (x, residual, iterations, method) = match newton(sys, &x0, opts) {
        Ok((x, r, it)) => (x, r, it, EquilibriumMethod::Newton),
        Err(DynamicsError::NoConvergence { .. }) | Err(DynamicsError::Singular) => {
            let marched = time_march(sys, &x0, opts)?;
            let (x, r, it) = newton(sys, &marched, opts)?;
            (x, r, it, EquilibriumMethod::TimeMarchThenNewton)
        }
        Err(e) => return Err(e),
    };
    check_band(sys, &x)?;
    let p_ref = (0..sys.n()).map(|u| sys.p_refs[u].value(x[sys.layout.v_dc(u)])).collect();
    Ok(OperatingPoint {
        x,
        p_ref,
        q_ref: sys.q_refs.clone(),
        residual_norm: residual,
        iterations,
        method,
    })
}

pub fn solve_equilibrium(sys: &SystemModel) -> Result<OperatingPoint, DynamicsError> {
    solve_equilibrium_from(sys, None, &EquilibriumOptions::default())
}

/// One implicit trapezoidal integrator for the nonlinear model.
struct NonlinearStepper {
    x: DVector<f64>,
    f: DVector<f64>,
    jac: DMatrix<f64>,
    scales: DVector<f64>,
    h: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_h: f64,
    t: f64,
}

const NEWTON_TOL: f64 = 1e-11;
const NEWTON_FLOOR: f64 = 1e-7;
const NEWTON_MAX: usize = 8;

impl NonlinearStepper {
    fn new(sys: &SystemModel, x0: &DVector<f64>, h: f64) -> Result<Self, DynamicsError> {
        let jac = sys.jacobian(x0)?;
        let lu = Self::factor(&jac, h);
        Ok(NonlinearStepper {
            f: sys.derivative(x0),
            scales: state_scales(&sys.layout, x0),
            x: x0.clone(),
            jac,
            h,
            lu,
            lu_h: h,
            t: 0.0,
        })
    }

    fn factor(jac: &DMatrix<f64>, h: f64) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        let n = jac.nrows();
        (DMatrix::identity(n, n) - jac * (0.5 * h)).lu()
    }

    fn refresh(&mut self, sys: &SystemModel, at: &DVector<f64>, h: f64) -> Result<(), DynamicsError> {
        self.jac = sys.jacobian(at)?;
        self.lu = Self::factor(&self.jac, h);
        self.lu_h = h;
        Ok(())
    }

    fn solve_step(&self, sys: &SystemModel, h: f64) -> Option<(DVector<f64>, DVector<f64>, usize)> {
        let mut y = self.x.clone();
        let mut fy = self.f.clone();
        let mut prev = f64::INFINITY;
        for it in 1..=NEWTON_MAX {
            let g = &y - &self.x - (&self.f + &fy) * (0.5 * h);
            let delta = self.lu.solve(&g)?;
            y -= &delta;
            fy = sys.derivative(&y);
            if !fy.iter().all(|v| v.is_finite()) {
                return None;
            }
            let size = delta.component_div(&self.scales).amax();
            // contraction rate of the simplified iteration bounds the
            // remaining error by ρ/(1 − ρ)·size; below NEWTON_FLOOR,
            // stagnation means the roundoff level is reached
            let rate = size / prev;
            if it > 1 && rate >= 1.0 && size >= NEWTON_FLOOR {
                return None;
            }
            let remaining = if it > 1 && rate < 1.0 { rate / (1.0 - rate) * size } else { size };
            if size < NEWTON_TOL || remaining < NEWTON_TOL || (size < NEWTON_FLOOR && rate > 0.5) {
                return Some((y, fy, it));
            }
            prev = size;
        }
        None
    }

    /// Advances by one step of (at most) `self.h`.
    fn step(&mut self, sys: &SystemModel) -> Result<(), DynamicsError> {
        let mut h = self.h;
        let mut refreshed = false;
        loop {
            if self.lu_h != h {
                let x = self.x.clone();
                self.refresh(sys, &x, h)?;
                refreshed = true;
            }
            match self.solve_step(sys, h) {
                Some((y, fy, iterations)) => {
                    self.x = y;
                    self.f = fy;
                    self.t += h;
                    if iterations > 4 {
                        let x = self.x.clone();
                        self.refresh(sys, &x, self.h)?;
                    }
                    return Ok(());
                }
                None if !refreshed => {
                    let x = self.x.clone();
                    self.refresh(sys, &x, h)?;
                    refreshed = true;
                }
                None => {
                    h *= 0.5;
                    if h < self.h * 1e-4 {
                        return Err(DynamicsError::StepUnderflow { time: self.t, step: h });
                    }
                    refreshed = false;
                    self.lu_h = f64::NAN;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Nonlinear,
    Linearized,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_end: f64,
    pub step: f64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
    /// Deviation from the initial state, in units of [`state_scales`],
    /// beyond which the run stops and is flagged diverged.
    pub divergence_guard: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_end: 3.0,
            step: DEFAULT_STEP,
            record_every: 20,
            divergence_guard: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time: Vec<f64>,
    /// States × samples; for linearized runs, the absolute state `x* + Δx`.
    pub states: DMatrix<f64>,
    pub state_names: Vec<String>,
    pub node_names: Vec<String>,
    /// Active and reactive PCC power and dc voltage per node, × samples.
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub v_dc: DMatrix<f64>,
    pub diverged: bool,
    pub kind: ModelKind,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// CSV with time, then `P[node]`, `Q[node]`, `v_dc[node]`, then the full
    /// state when `with_states`.
    pub fn to_csv(&self, with_states: bool) -> String {
        let mut out = String::from("time");
        for prefix in ["P", "Q", "v_dc"] {
            for n in &self.node_names {
                let _ = write!(out, ",{prefix}[{n}]");
            }
        }
        if with_states {
            for s in &self.state_names {
                let _ = write!(out, ",{s}");
            }
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{:.9e}", self.time[k]);
            for mat in [&self.p, &self.q, &self.v_dc] {
                for r in 0..mat.nrows() {
                    let _ = write!(out, ",{:.12e}", mat[(r, k)]);
                }
            }
            if with_states {
                for r in 0..self.states.nrows() {
                    let _ = write!(out, ",{:.12e}", self.states[(r, k)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

struct Recorder {
    time: Vec<f64>,
    samples: Vec<DVector<f64>>,
}

impl Recorder {
    fn finish(self, sys: &SystemModel, diverged: bool, kind: ModelKind) -> Trajectory {
        let l = sys.layout;
        let n = l.n;
        let cols = self.samples.len();
        let states = DMatrix::from_fn(l.dim(), cols, |r, c| self.samples[c][r]);
        let mut p = DMatrix::zeros(n, cols);
        let mut q = DMatrix::zeros(n, cols);
        let mut v = DMatrix::zeros(n, cols);
        for c in 0..cols {
            for u in 0..n {
                let (vd, vq) = sys.config.converters[u].pcc_voltage_dq;
                let x = &self.samples[c];
                let (pp, qq) = pcc_power(vd, vq, x[l.converter(I_D, u)], x[l.converter(I_Q, u)]);
                p[(u, c)] = pp;
                q[(u, c)] = qq;
                v[(u, c)] = x[l.v_dc(u)];
            }
        }
        Trajectory {
            time: self.time,
            states,
            state_names: sys.state_names(),
            node_names: sys.config.nodes.clone(),
            p,
            q,
            v_dc: v,
            diverged,
            kind,
        }
    }
}

/// Applies an event to the references. Droop-slope events shift P0 so the
/// reference is unchanged at `v_eq`.
fn apply_event(sys: &mut SystemModel, ev: &ScenarioEvent, v_eq: &[f64]) -> Result<(), DynamicsError> {
    let u = ev.node;
    match (ev.kind, &mut sys.p_refs[u]) {
        (EventKind::PowerCommand, PowerReference::Fixed(p)) => *p = ev.to,
        (EventKind::PowerCommand, PowerReference::Droop(d)) => {
            d.p0 += ev.to - ev.from;
        }
        (EventKind::DroopSlope, PowerReference::Droop(d)) => *d = d.retuned(ev.to, v_eq[u]),
        (EventKind::DroopSlope, PowerReference::Fixed(_)) => {
            return Err(DynamicsError::Event(sys.config.nodes[u].clone()))
        }
    }
    Ok(())
}

fn sorted_events(events: &[ScenarioEvent]) -> Vec<ScenarioEvent> {
    let mut ev = events.to_vec();
    ev.sort_by(|a, b| a.time.total_cmp(&b.time));
    ev
}

fn n_steps(t: f64, h: f64) -> usize {
    (t / h - 1e-9).ceil().max(0.0) as usize
}

/// Integrates the nonlinear model from `op` applying `events`.
pub fn simulate_nonlinear(
    sys: &SystemModel,
    op: &OperatingPoint,
    events: &[ScenarioEvent],
    opts: &SimOptions,
) -> Result<Trajectory, DynamicsError> {
    let mut sys = sys.clone();
    let v_eq = op.v_dc(&sys.layout);
    let events = sorted_events(events);
    let mut next = 0;
    let mut stepper = NonlinearStepper::new(&sys, &op.x, opts.step)?;
    let guard_scale = stepper.scales.clone();
    let mut rec = Recorder {
        time: vec![0.0],
        samples: vec![op.x.clone()],
    };
    let total = n_steps(opts.t_end, opts.step);
    let mut diverged = false;
    for k in 1..=total {
        let mut changed = false;
        while next < events.len() && events[next].time <= stepper.t + 1e-12 {
            apply_event(&mut sys, &events[next], &v_eq)?;
            next += 1;
            changed = true;
        }
        if changed {
            let x = stepper.x.clone();
            stepper.f = sys.derivative(&x);
            stepper.refresh(&sys, &x, stepper.h)?;
        }
        let t_target = k as f64 * opts.step;
        // tolerance well above the ulp of t, so rounding never adds a sliver step
        while stepper.t < t_target - 1e-6 * opts.step {
            let remaining = t_target - stepper.t;
            let saved = stepper.h;
            if remaining < saved * (1.0 - 1e-9) {
                stepper.h = remaining;
            }
            let res = stepper.step(&sys);
            stepper.h = saved;
            res?;
        }
        stepper.t = t_target;
        let dev = (&stepper.x - &op.x).component_div(&guard_scale).amax();
        let bad = !dev.is_finite() || dev > opts.divergence_guard;
        if k % opts.record_every == 0 || k == total || bad {
            rec.time.push(stepper.t);
            rec.samples.push(stepper.x.clone());
        }
        if bad {
            diverged = true;
            break;
        }
    }
    Ok(rec.finish(&sys, diverged, ModelKind::Nonlinear))
}

/// `∂f/∂P_ref` at `x`, one column per station.
pub fn power_reference_input(sys: &SystemModel, x: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    let blocks = sys.stacked_blocks(x)?;
    let l = sys.layout;
    let sel = build_selectors(l.n, l.m);
    let top = &blocks.b1 * &sel.g12 * &blocks.d2 * &sel.g21;
    let mid = &blocks.b2 * &sel.g21;
    let mut b = DMatrix::zeros(l.dim(), l.n);
    b.view_mut((0, 0), (10 * l.n, l.n)).copy_from(&top);
    b.view_mut((10 * l.n, 0), (4 * l.n, l.n)).copy_from(&mid);
    Ok(b)
}

/// Integrates `Δẋ = A(k) Δx + B_P ΔP_ref` around `op` with the same
/// trapezoidal rule. Droop-slope events switch `A` (P0-compensated, so no
/// input change); power-command events step `ΔP_ref`.
pub fn simulate_linearized(
    sys: &SystemModel,
    op: &OperatingPoint,
    events: &[ScenarioEvent],
    opts: &SimOptions,
) -> Result<Trajectory, DynamicsError> {
    let model = sys.small_signal(&op.x)?;
    let bp = power_reference_input(sys, &op.x)?;
    let axes = sys.droop_axes();
    let mut slopes = sys.droop_slopes();
    let mut dp = DVector::zeros(sys.n());
    let events = sorted_events(events);
    let mut next = 0;
    let h = opts.step;
    let dim = model.dim();
    let scales = state_scales(&sys.layout, &op.x);

    let build = |a: &DMatrix<f64>| {
        let lu = (DMatrix::identity(dim, dim) - a * (0.5 * h)).lu();
        let explicit = DMatrix::identity(dim, dim) + a * (0.5 * h);
        (lu, explicit)
    };
    let mut a = model.at_slopes(&slopes);
    let (mut lu, mut explicit) = build(&a);
    let mut dx = DVector::zeros(dim);
    let mut rec = Recorder {
        time: vec![0.0],
        samples: vec![op.x.clone()],
    };
    let total = n_steps(opts.t_end, h);
    let mut diverged = false;
    for k in 1..=total {
        let t = (k - 1) as f64 * h;
        let dp_prev = dp.clone();
        let mut a_changed = false;
        while next < events.len() && events[next].time <= t + 1e-12 {
            let ev = &events[next];
            match ev.kind {
                EventKind::PowerCommand => dp[ev.node] += ev.to - ev.from,
                EventKind::DroopSlope => {
                    let j = axes
                        .iter()
                        .position(|&a| a == ev.node)
                        .ok_or_else(|| DynamicsError::Event(sys.config.nodes[ev.node].clone()))?;
                    slopes[j] = ev.to;
                    a_changed = true;
                }
            }
            next += 1;
        }
        if a_changed {
            a = model.at_slopes(&slopes);
            (lu, explicit) = build(&a);
        }
        // inputs are piecewise constant and switch at step boundaries
        let _ = dp_prev;
        let rhs = &explicit * &dx + &bp * &dp * h;
        dx = lu.solve(&rhs).ok_or(DynamicsError::Singular)?;
        let dev = dx.component_div(&scales).amax();
        let bad = !dev.is_finite() || dev > opts.divergence_guard;
        if k % opts.record_every == 0 || k == total || bad {
            rec.time.push(k as f64 * h);
            rec.samples.push(&op.x + &dx);
        }
        if bad {
            diverged = true;
            break;
        }
    }
    let mut sys2 = sys.clone();
    sys2.set_slopes(&slopes, None);
    Ok(rec.finish(&sys2, diverged, ModelKind::Linearized))
}

pub fn simulate(
    sys: &SystemModel,
    op: &OperatingPoint,
    events: &[ScenarioEvent],
    opts: &SimOptions,
    kind: ModelKind,
) -> Result<Trajectory, DynamicsError> {
    match kind {
        ModelKind::Nonlinear => simulate_nonlinear(sys, op, events, opts),
        ModelKind::Linearized => simulate_linearized(sys, op, events, opts),
    }
}

/// Open-loop dq steady state of one converter for fixed inputs.
pub fn converter_steady_state(
    params: &MmcParams,
    input: &MmcInput,
    guess: &MmcState,
) -> Result<MmcState, DynamicsError> {
    let mut x = *guess;
    for it in 0..50 {
        let f = mmc_derivative(&x, input, params);
        let lin = mmc_linearize(&x, input, params);
        let dx = lin.a1.lu().solve(&f).ok_or(DynamicsError::Singular)?;
        x.0 -= dx;
        if dx.amax() <= 1e-13 * x.0.amax() {
            return Ok(x);
        }
        if it == 49 {
            break;
        }
    }
    Err(DynamicsError::NoConvergence {
        iterations: 50,
        residual: mmc_derivative(&x, input, params).amax(),
    })
}

/// Harmonic content of one phase over the final fundamental cycle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhaseHarmonics {
    /// dc part of the arm-current sum `(i_p + i_n)/2 · 3`, i.e. `i_dc`.
    pub i_dc: f64,
    /// Fundamental of `i_p − i_n` as `(d, q)`.
    pub i_ac: (f64, f64),
    /// Second harmonic of `(i_p + i_n)/2`.
    pub i_2: (f64, f64),
    /// dc part of `(v_p + v_n)/2`.
    pub v_sum: f64,
    /// Fundamental of `(v_p − v_n)/2`.
    pub v_1: (f64, f64),
    /// Second harmonic of `(v_p + v_n)/2`.
    pub v_2: (f64, f64),
}

impl PhaseHarmonics {
    pub fn from_dq(x: &MmcState) -> Self {
        let v = &x.0;
        PhaseHarmonics {
            i_dc: v[I_DC],
            i_ac: (v[I_D], v[I_Q]),
            i_2: (v[I2_D], v[I2_Q]),
            v_sum: v[V_DC],
            v_1: (v[V1_D], v[V1_Q]),
            v_2: (v[V2_D], v[V2_Q]),
        }
    }

    /// `(name, harmonic, value as complex pair)` with dc terms as `(x, 0)`.
    pub fn components(&self) -> [(&'static str, &'static str, (f64, f64)); 6] {
        [
            ("i_dc", "dc", (self.i_dc, 0.0)),
            ("i", "w0", self.i_ac),
            ("i2", "2w0", self.i_2),
            ("v_sum", "dc", (self.v_sum, 0.0)),
            ("v1", "w0", self.v_1),
            ("v2", "2w0", self.v_2),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct AsfReference {
    pub time: Vec<f64>,
    /// Per sample `[i_p, i_n, v_p, v_n]` of phases a, b, c.
    pub arms: Vec<[[f64; 4]; 3]>,
    /// Per sample `(S_p, S_n)` of phase a.
    pub switching: Vec<(f64, f64)>,
    pub harmonics: PhaseHarmonics,
    pub dq_steady_state: MmcState,
}

/// Integrates the six-arm phase-domain equations of one converter with a
/// prescribed pole voltage `v_dc` and fixed `vref`, then extracts phase-a
/// harmonics over the last cycle. Initial state: the dq steady state
/// mapped to the arms. Fixed-step RK4 with `dt` well below the arm time
/// constants.
pub fn asf_phase_reference(
    params: &MmcParams,
    input: &MmcInput,
    t_end: f64,
    dt: f64,
) -> Result<AsfReference, DynamicsError> {
    use std::f64::consts::PI;
    let guess = MmcState(Vector10::from_fn(|i, _| if i == V_DC { params.v_nom } else { 0.0 }));
    let dq = converter_steady_state(params, input, &guess)?;
    let w = params.omega0;
    let s = crate::converter::switching_components(input.0[1], input.0[2], params.v_nom);
    let v_dc = input.0[0];
    let (l, r, l0, r0, c) = (params.l_arm, params.r_arm, params.l0, params.r0, params.c_arm);
    let (vgd, vgq) = params.pcc_dq;

    let fund = |d: f64, q: f64, th: f64, k: usize| {
        let phi = th - 2.0 * PI * k as f64 / 3.0;
        d * phi.cos() - q * phi.sin()
    };
    let second = |d: f64, q: f64, th: f64, k: usize| {
        let phi = 2.0 * th + 2.0 * PI * k as f64 / 3.0;
        d * phi.cos() - q * phi.sin()
    };
    let v = &dq.0;
    let mut y = [[0.0f64; 4]; 3];
    for (k, arm) in y.iter_mut().enumerate() {
        let i_ac = fund(v[I_D], v[I_Q], 0.0, k);
        let i2 = second(v[I2_D], v[I2_Q], 0.0, k);
        let v1 = fund(v[V1_D], v[V1_Q], 0.0, k);
        let v2 = second(v[V2_D], v[V2_Q], 0.0, k);
        *arm = [
            v[I_DC] / 3.0 + 0.5 * i_ac + i2,
            v[I_DC] / 3.0 - 0.5 * i_ac + i2,
            v[V_DC] + v1 + v2,
            v[V_DC] - v1 + v2,
        ];
    }
    let det = l * (l + 2.0 * l0);
    let rhs = |t: f64, y: &[[f64; 4]; 3]| {
        let th = w * t;
        let mut d = [[0.0; 4]; 3];
        for k in 0..3 {
            let [ip, inn, vp, vn] = y[k];
            let sp = s.upper(th, k);
            let sn = s.lower(th, k);
            let i = ip - inn;
            let vg = fund(vgd, vgq, th, k);
            let a = v_dc - sp * vp - r * ip - vg - r0 * i;
            let b = vg + r0 * i + v_dc - sn * vn - r * inn;
            // [[L+L0, -L0], [-L0, L+L0]] [ip', in'] = [a, b]
            d[k][0] = ((l + l0) * a + l0 * b) / det;
            d[k][1] = (l0 * a + (l + l0) * b) / det;
            d[k][2] = sp * ip / c;
            d[k][3] = sn * inn / c;
        }
        d
    };
    let axpy = |y: &[[f64; 4]; 3], k: &[[f64; 4]; 3], h: f64| {
        let mut o = *y;
        for p in 0..3 {
            for q in 0..4 {
                o[p][q] += h * k[p][q];
            }
        }
        o
    };
    let steps = (t_end / dt).round() as usize;
    let mut time = Vec::with_capacity(steps + 1);
    let mut arms = Vec::with_capacity(steps + 1);
    let mut switching = Vec::with_capacity(steps + 1);
    let mut t = 0.0;
    time.push(t);
    arms.push(y);
    switching.push((s.upper(0.0, 0), s.lower(0.0, 0)));
    for n in 1..=steps {
        let k1 = rhs(t, &y);
        let k2 = rhs(t + 0.5 * dt, &axpy(&y, &k1, 0.5 * dt));
        let k3 = rhs(t + 0.5 * dt, &axpy(&y, &k2, 0.5 * dt));
        let k4 = rhs(t + dt, &axpy(&y, &k3, dt));
        for p in 0..3 {
            for q in 0..4 {
                y[p][q] += dt / 6.0 * (k1[p][q] + 2.0 * k2[p][q] + 2.0 * k3[p][q] + k4[p][q]);
            }
        }
        t = n as f64 * dt;
        if !y.iter().flatten().all(|v| v.is_finite()) {
            return Err(DynamicsError::StepUnderflow { time: t, step: dt });
        }
        time.push(t);
        arms.push(y);
        switching.push((s.upper(w * t, 0), s.lower(w * t, 0)));
    }

    // last full cycle, trapezoid-free rectangle rule over an exact period
    let period = 2.0 * PI / w;
    let per = (period / dt).round() as usize;
    let start = arms.len().saturating_sub(per);
    let mut acc = [0.0f64; 10];
    for idx in start..arms.len() {
        let th = w * time[idx];
        let [ip, inn, vp, vn] = arms[idx][0];
        let isum = 0.5 * (ip + inn);
        let idiff = ip - inn;
        let vsum = 0.5 * (vp + vn);
        let vdiff = 0.5 * (vp - vn);
        acc[0] += isum;
        acc[1] += idiff * th.cos();
        acc[2] -= idiff * th.sin();
        acc[3] += isum * (2.0 * th).cos();
        acc[4] -= isum * (2.0 * th).sin();
        acc[5] += vsum;
        acc[6] += vdiff * th.cos();
        acc[7] -= vdiff * th.sin();
        acc[8] += vsum * (2.0 * th).cos();
        acc[9] -= vsum * (2.0 * th).sin();
    }
    let cnt = (arms.len() - start) as f64;
    let mean = |v: f64| v / cnt;
    let amp = |v: f64| 2.0 * v / cnt;
    let harmonics = PhaseHarmonics {
        i_dc: 3.0 * mean(acc[0]),
        i_ac: (amp(acc[1]), amp(acc[2])),
        i_2: (amp(acc[3]), amp(acc[4])),
        v_sum: mean(acc[5]),
        v_1: (amp(acc[6]), amp(acc[7])),
        v_2: (amp(acc[8]), amp(acc[9])),
    };
    Ok(AsfReference {
        time,
        arms,
        switching,
        harmonics,
        dq_steady_state: dq,
    })
}
