//! The assembled nonlinear grid: every station's converter and controller
//! coupled through the dc network, in the global state order of
//! [`crate::assembly::StateLayout`].

use nalgebra::{DVector, Vector4};

use crate::assembly::{self, AssemblyError, SmallSignalModel, StateLayout};
use crate::config::{ConverterMode, SystemConfig};
use crate::control::{controller_model, ControllerModel, DroopParams};
use crate::converter::{mmc_derivative, mmc_linearize, MmcInput, MmcParams, MmcState, Vector10};
use crate::network::{assemble_network, build_incidence, NetworkError, NetworkModel};

/// Active-power reference of one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerReference {
    Fixed(f64),
    Droop(DroopParams),
}

impl PowerReference {
    pub fn value(&self, v_dc: f64) -> f64 {
        match self {
            PowerReference::Fixed(p) => *p,
            PowerReference::Droop(d) => d.reference(v_dc),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub config: SystemConfig,
    pub layout: StateLayout,
    pub params: Vec<MmcParams>,
    pub controllers: Vec<ControllerModel>,
    pub network: NetworkModel,
    pub p_refs: Vec<PowerReference>,
    pub q_refs: Vec<f64>,
}

/// Signals of one station at a given global state.
#[derive(Debug, Clone, Copy)]
pub struct StationSignals {
    pub converter: MmcState,
    pub controller: Vector4<f64>,
    pub controller_input: Vector4<f64>,
    pub input: MmcInput,
}

impl SystemModel {
    pub fn new(config: &SystemConfig) -> Result<Self, NetworkError> {
        let n = config.n_nodes();
        let incidence = build_incidence(n, &config.lines);
        let network = assemble_network(&incidence, config)?;
        let params = config.converters.iter().map(MmcParams::from_spec).collect();
        let controllers = config
            .converters
            .iter()
            .zip(&config.gains)
            .map(|(c, g)| controller_model(g, c))
            .collect();
        let p_refs = config
            .converters
            .iter()
            .map(|c| match (c.mode, c.droop) {
                (ConverterMode::Droop, Some(d)) => PowerReference::Droop(d),
                _ => PowerReference::Fixed(c.p_set),
            })
            .collect();
        let q_refs = config.converters.iter().map(|c| c.q_set).collect();
        Ok(SystemModel {
            config: config.clone(),
            layout: StateLayout::new(n, config.n_lines()),
            params,
            controllers,
            network,
            p_refs,
            q_refs,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn state_names(&self) -> Vec<String> {
        self.layout.names(&self.config.nodes)
    }

    /// Current droop slopes, ordered by droop axis.
    pub fn droop_slopes(&self) -> Vec<f64> {
        self.p_refs
            .iter()
            .filter_map(|p| match p {
                PowerReference::Droop(d) => Some(d.k),
                PowerReference::Fixed(_) => None,
            })
            .collect()
    }

    pub fn droop_axes(&self) -> Vec<usize> {
        self.p_refs
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, PowerReference::Droop(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Sets droop slopes; P0 is shifted so each reference is unchanged at
    /// the voltages in `v_dc_eq` when given.
    pub fn set_slopes(&mut self, slopes: &[f64], v_dc_eq: Option<&[f64]>) {
        for (axis, &k) in self.droop_axes().into_iter().zip(slopes) {
            if let PowerReference::Droop(d) = &mut self.p_refs[axis] {
                *d = match v_dc_eq {
                    Some(v) => d.retuned(k, v[axis]),
                    None => DroopParams { k, ..*d },
                };
            }
        }
    }

    pub fn v_dc(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.n()).map(|u| x[self.layout.v_dc(u)]).collect()
    }

    pub fn station(&self, x: &DVector<f64>, u: usize) -> StationSignals {
        let l = &self.layout;
        let converter = MmcState(Vector10::from_fn(|s, _| x[l.converter(s, u)]));
        let controller = Vector4::from_fn(|s, _| x[l.controller(s, u)]);
        let v_dc = x[l.v_dc(u)];
        let controller_input = Vector4::new(
            self.p_refs[u].value(v_dc),
            self.q_refs[u],
            converter.0[crate::converter::I_D],
            converter.0[crate::converter::I_Q],
        );
        let vref = self.controllers[u].output(&controller, &controller_input);
        StationSignals {
            converter,
            controller,
            controller_input,
            input: MmcInput::new(v_dc, vref[0], vref[1]),
        }
    }

    /// `ẋ = f(x)`.
    pub fn derivative(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = &self.layout;
        let mut dx = DVector::zeros(l.dim());
        let mut i_dc = DVector::zeros(l.n);
        for u in 0..l.n {
            let s = self.station(x, u);
            let d1 = mmc_derivative(&s.converter, &s.input, &self.params[u]);
            let d2 = self.controllers[u].derivative(&s.controller, &s.controller_input);
            for k in 0..10 {
                dx[l.converter(k, u)] = d1[k];
            }
            for k in 0..4 {
                dx[l.controller(k, u)] = d2[k];
            }
            i_dc[u] = s.converter.i_dc();
        }
        let off = l.network_offset();
        let z = x.rows(off, self.network.dim());
        let dz = &self.network.a3 * z + &self.network.b3 * i_dc;
        dx.rows_mut(off, self.network.dim()).copy_from(&dz);
        dx
    }

    /// Per-unit linearizations and the stacked block matrices at `x`.
    pub fn stacked_blocks(&self, x: &DVector<f64>) -> Result<assembly::StackedBlocks, AssemblyError> {
        let lins: Vec<_> = (0..self.n())
            .map(|u| {
                let s = self.station(x, u);
                mmc_linearize(&s.converter, &s.input, &self.params[u])
            })
            .collect();
        assembly::stack_units(&lins, &self.controllers, &self.network)
    }

    /// Small-signal model around `x` at the current slopes.
    pub fn small_signal(&self, x: &DVector<f64>) -> Result<SmallSignalModel, AssemblyError> {
        let blocks = self.stacked_blocks(x)?;
        assembly::small_signal_from_blocks(
            &blocks,
            &self.droop_axes(),
            &self.droop_slopes(),
            self.state_names(),
            x.clone(),
        )
    }

    /// Jacobian `∂f/∂x`, equal to `A_ss` at the current slopes.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<nalgebra::DMatrix<f64>, AssemblyError> {
        let blocks = self.stacked_blocks(x)?;
        let n = self.n();
        let sel = assembly::build_selectors(n, self.layout.m);
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for (axis, kj) in self.droop_axes().into_iter().zip(self.droop_slopes()) {
            k[(axis, axis)] = kj;
        }
        assembly::assemble_global(&blocks, &sel, &k)
    }

    /// Initial state: capacitors charged to nominal, everything else at rest.
    pub fn flat_start(&self) -> DVector<f64> {
        let l = &self.layout;
        let mut x = DVector::zeros(l.dim());
        for (u, spec) in self.config.converters.iter().enumerate() {
            x[l.converter(crate::converter::V_DC, u)] = spec.v_dc_nom;
            x[l.v_dc(u)] = spec.pole_voltage_nom();
        }
        for k in 0..l.m {
            let line = &self.config.lines[k];
            let va = self.config.converters[line.from_node].pole_voltage_nom();
            let vb = self.config.converters[line.to_node].pole_voltage_nom();
            x[l.network(2 * l.m + k)] = 0.5 * (va + vb);
        }
        x
    }
}
