//! One configured grid at one operating point: the pieces every analysis
//! stage shares. Expansion-point cases re-slope the droop stations with P0
//! compensation, so all cases of a config share the equilibrium.

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::assembly::{AssemblyError, SmallSignalModel};
use crate::config::{self, ConfigError, SystemConfig};
use crate::dynamics::{self, DynamicsError, EquilibriumOptions, OperatingPoint};
use crate::modal::{self, EigenSolution, ModalError, SensitivityBundle};
use crate::network::NetworkError;
use crate::region::{self, ConstraintSet, RegionError};
use crate::system::SystemModel;
use crate::units::{self, Dimension};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error("modal: {0}")]
    Modal(#[from] ModalError),
    #[error("{0}")]
    Region(#[from] RegionError),
    #[error("case: {0}")]
    Case(String),
}

/// Droop slopes of one expansion point, keyed by node id, in W/V.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub name: String,
    pub slopes: Vec<(String, f64)>,
}

/// `{"name": .., "slopes": {"<node>": {"value": .., "unit": "MW/kV"}}}`.
pub fn parse_case(document: &str) -> Result<CaseSpec, StudyError> {
    let v: Value = serde_json::from_str(document).map_err(|e| StudyError::Case(e.to_string()))?;
    let name = v
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("case")
        .to_string();
    let map = v
        .get("slopes")
        .and_then(Value::as_object)
        .ok_or_else(|| StudyError::Case("`slopes` must be an object".into()))?;
    let mut slopes = Vec::new();
    for (node, q) in map {
        let value = q.get("value").and_then(Value::as_f64);
        let unit = q.get("unit").and_then(Value::as_str);
        let (Some(value), Some(unit)) = (value, unit) else {
            return Err(StudyError::Case(format!("slopes.{node}: expected {{value, unit}}")));
        };
        let k = units::to_base(value, unit, Dimension::Slope)
            .map_err(|e| StudyError::Case(format!("slopes.{node}: {e}")))?;
        slopes.push((node.clone(), k));
    }
    Ok(CaseSpec { name, slopes })
}

pub fn load_case(path: &std::path::Path) -> Result<CaseSpec, StudyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| StudyError::Case(format!("{}: {e}", path.display())))?;
    parse_case(&text)
}

/// Loads a config file, applies `path=value` overrides and validates.
pub fn load_config(path: &std::path::Path, overrides: &[String]) -> Result<SystemConfig, StudyError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        StudyError::Config(ConfigError::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let mut doc: Value = serde_json::from_str(&text).map_err(ConfigError::from)?;
    for o in overrides {
        config::apply_override(&mut doc, o)?;
    }
    Ok(config::validate(config::parse_value(&doc)?)?.into_inner())
}

/// Axis label of a droop station: `k` followed by the node id.
pub fn axis_name(node: &str) -> String {
    format!("k{node}")
}

#[derive(Debug, Clone)]
pub struct Study {
    pub sys: SystemModel,
    pub op: OperatingPoint,
    pub model: SmallSignalModel,
    pub case_name: String,
}

impl Study {
    /// Solves the equilibrium (from `guess` when given) and linearizes.
    pub fn new(config: &SystemConfig, guess: Option<&DVector<f64>>) -> Result<Study, StudyError> {
        let sys = SystemModel::new(config)?;
        let op = dynamics::solve_equilibrium_from(&sys, guess, &EquilibriumOptions::default())?;
        let model = sys.small_signal(&op.x)?;
        Ok(Study {
            sys,
            op,
            model,
            case_name: "config".into(),
        })
    }

    /// Adopts `x` as the operating point when its scaled residual is within
    /// tolerance (bit-for-bit reuse of a cached solve); otherwise solves
    /// from it.
    pub fn from_state(config: &SystemConfig, x: &DVector<f64>) -> Result<Study, StudyError> {
        let sys = SystemModel::new(config)?;
        if x.len() == sys.dim() {
            let jac = sys.jacobian(x)?;
            let scales = dynamics::state_scales(&sys.layout, x);
            let residual = dynamics::scaled_residual(&sys.derivative(x), &jac, &scales);
            if residual <= dynamics::EQUILIBRIUM_TOLERANCE {
                let op = OperatingPoint {
                    x: x.clone(),
                    p_ref: (0..sys.n()).map(|u| sys.p_refs[u].value(x[sys.layout.v_dc(u)])).collect(),
                    q_ref: sys.q_refs.clone(),
                    residual_norm: residual,
                    iterations: 0,
                    method: dynamics::EquilibriumMethod::Newton,
                };
                let model = sys.small_signal(&op.x)?;
                return Ok(Study {
                    sys,
                    op,
                    model,
                    case_name: "config".into(),
                });
            }
            return Study::new(config, Some(x));
        }
        Study::new(config, None)
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.sys
            .droop_axes()
            .iter()
            .map(|&u| axis_name(&self.sys.config.nodes[u]))
            .collect()
    }

    pub fn axis_index(&self, name: &str) -> Result<usize, StudyError> {
        let names = self.axis_names();
        names.iter().position(|n| n == name).ok_or_else(|| {
            StudyError::Case(format!("unknown droop axis `{name}` (axes: {})", names.join(", ")))
        })
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.sys.droop_slopes()
    }

    pub fn v_eq(&self) -> Vec<f64> {
        self.op.v_dc(&self.sys.layout)
    }

    /// Slope vector of `case`; axes it leaves out keep their current value.
    pub fn case_slopes(&self, case: &CaseSpec) -> Result<Vec<f64>, StudyError> {
        let mut slopes = self.slopes();
        let names = self.axis_names();
        for (node, k) in &case.slopes {
            let at = names
                .iter()
                .position(|n| *n == axis_name(node))
                .ok_or_else(|| StudyError::Case(format!("node `{node}` is not a droop station")))?;
            slopes[at] = *k;
        }
        Ok(slopes)
    }

    /// The same grid re-sloped to `case` with P0 compensation.
    pub fn with_case(&self, case: &CaseSpec) -> Result<Study, StudyError> {
        let slopes = self.case_slopes(case)?;
        let mut study = self.with_slopes(&slopes)?;
        study.case_name = case.name.clone();
        Ok(study)
    }

    pub fn with_slopes(&self, slopes: &[f64]) -> Result<Study, StudyError> {
        let mut sys = self.sys.clone();
        sys.set_slopes(slopes, Some(&self.v_eq()));
        let model = sys.small_signal(&self.op.x)?;
        let mut op = self.op.clone();
        op.p_ref = (0..sys.n()).map(|u| sys.p_refs[u].value(self.op.x[sys.layout.v_dc(u)])).collect();
        Ok(Study {
            sys,
            op,
            model,
            case_name: self.case_name.clone(),
        })
    }

    /// State matrix at `slopes` by full re-assembly of the Jacobian at the
    /// shared equilibrium (independent of the affine form).
    pub fn state_matrix(&self, slopes: &[f64]) -> Result<DMatrix<f64>, StudyError> {
        let mut sys = self.sys.clone();
        sys.set_slopes(slopes, Some(&self.v_eq()));
        Ok(sys.jacobian(&self.op.x)?)
    }

    pub fn eig(&self) -> Result<EigenSolution, StudyError> {
        Ok(modal::eig_full(&self.model.a_ss)?)
    }

    pub fn bundle(&self, solution: &EigenSolution) -> SensitivityBundle {
        modal::sensitivity_bundle(solution, &self.model.m)
    }

    pub fn constraints(&self) -> Result<ConstraintSet, StudyError> {
        let sol = self.eig()?;
        Ok(region::build_constraints(&self.bundle(&sol), &self.slopes()))
    }

    /// Exact supremum along `axis` from the loci oracle, other slopes as in
    /// this study.
    pub fn loci_supremum(
        &self,
        axis: usize,
        bracket: (f64, f64),
        opts: &region::LociOptions,
    ) -> Result<region::LociResult, StudyError> {
        let build = |k: &[f64]| self.state_matrix(k);
        Ok(region::loci_supremum(build, &self.slopes(), axis, bracket, opts)?)
    }
}
