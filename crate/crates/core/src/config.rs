//! Declarative system description: parsing, validation and normalization.
//!
//! The on-disk form is a single JSON document with top-level keys `nodes`,
//! `lines`, `converters`, `gains` and `scenario`. Every physical quantity is
//! an object `{"value": number, "unit": string}`; see [`crate::units`] for the
//! accepted suffixes. Keys starting with `_` are comments and are ignored, as
//! are the top-level `description` and `notes` keys.

use std::collections::{HashMap, VecDeque};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::control::DroopParams;
use crate::units::{self, Dimension, UnitError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("bad unit at `{path}`: {source}")]
    Unit {
        path: String,
        #[source]
        source: UnitError,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("dc grid is disconnected ({components} islands)")]
    Disconnected { components: usize },
    #[error("`{path}` must be positive, got {value}")]
    NonPositive { path: String, value: f64 },
    #[error("`{path}` must be non-negative, got {value}")]
    Negative { path: String, value: f64 },
    #[error("converter at node `{node}`: {message}")]
    DroopMismatch { node: String, message: String },
    #[error("no converter operates in droop mode")]
    NoDroop,
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSpec {
    /// Index into [`SystemConfig::nodes`]; current flows from here.
    pub from_node: usize,
    pub to_node: usize,
    pub length_km: f64,
    pub r_per_km: f64,
    pub l_per_km: f64,
    pub c_per_km: f64,
}

impl LineSpec {
    pub fn total_resistance(&self) -> f64 {
        self.r_per_km * self.length_km
    }
    pub fn total_inductance(&self) -> f64 {
        self.l_per_km * self.length_km
    }
    pub fn total_capacitance(&self) -> f64 {
        self.c_per_km * self.length_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConverterMode {
    Droop,
    FixedPower,
}

/// One MMC station. All quantities in base units.
///
/// `v_dc_nom` is the nominal arm capacitor voltage sum used as the modulation
/// base, i.e. the pole-to-pole voltage. The dc grid is modelled per pole, so
/// the nominal grid node voltage is `v_dc_nom / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterSpec {
    pub mode: ConverterMode,
    pub c_sm: f64,
    pub n_sm: u32,
    pub l_arm: f64,
    pub r_arm: f64,
    pub l0: f64,
    pub r0: f64,
    pub l_s: f64,
    pub c_g: f64,
    pub v_dc_nom: f64,
    /// Peak phase voltage of the ideal PCC source in the dq frame.
    pub pcc_voltage_dq: (f64, f64),
    pub omega0: f64,
    pub p_set: f64,
    pub q_set: f64,
    pub droop: Option<DroopParams>,
}

impl ConverterSpec {
    /// Lumped arm capacitance C_SM / N.
    pub fn arm_capacitance(&self) -> f64 {
        self.c_sm / self.n_sm as f64
    }

    /// Nominal pole-to-ground voltage seen by the dc grid.
    pub fn pole_voltage_nom(&self) -> f64 {
        0.5 * self.v_dc_nom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    /// Current loop, V/A and V/(A·s).
    pub kp_i: f64,
    pub ki_i: f64,
    /// Power loop, A/W and A/(W·s).
    pub kp_pq: f64,
    pub ki_pq: f64,
    pub voltage_feedforward: bool,
    pub decoupling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Step of `p_set` on a fixed-power station (W).
    PowerCommand,
    /// Step of the droop slope (W/V); P0 is compensated to keep the equilibrium.
    DroopSlope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub time: f64,
    pub kind: EventKind,
    pub node: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub nodes: Vec<String>,
    pub lines: Vec<LineSpec>,
    /// One per node, same order as `nodes`.
    pub converters: Vec<ConverterSpec>,
    /// One per node, same order as `nodes`.
    pub gains: Vec<ControllerGains>,
    pub scenario: Vec<ScenarioEvent>,
}

impl SystemConfig {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// Node indices of droop-controlled stations, in node order.
    pub fn droop_axes(&self) -> Vec<usize> {
        self.converters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.droop.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Current droop slopes along [`Self::droop_axes`].
    pub fn droop_slopes(&self) -> Vec<f64> {
        self.converters
            .iter()
            .filter_map(|c| c.droop.as_ref().map(|d| d.k))
            .collect()
    }

    /// 15 states per station plus 3 per line.
    pub fn state_dimension(&self) -> usize {
        15 * self.n_nodes() + 3 * self.n_lines()
    }

    /// Replaces the droop slopes, shifting each P0 so that the droop
    /// reference at the given pole voltages is unchanged.
    pub fn retune_slopes(&mut self, slopes: &[f64], v_dc: &[f64]) {
        let axes = self.droop_axes();
        assert_eq!(slopes.len(), axes.len(), "one slope per droop axis");
        for (&node, &k) in axes.iter().zip(slopes) {
            let droop = self.converters[node].droop.as_mut().expect("droop axis");
            *droop = droop.retuned(k, v_dc[node]);
        }
    }

    /// Normalized JSON form (base units, canonical key order).
    pub fn to_json(&self) -> Value {
        let q = |v: f64, d: Dimension| json!({"value": v, "unit": d.base_unit()});
        let nodes: Vec<Value> = self.nodes.iter().map(|n| json!(n)).collect();
        let lines: Vec<Value> = self
            .lines
            .iter()
            .map(|l| {
                json!({
                    "from": self.nodes[l.from_node],
                    "to": self.nodes[l.to_node],
                    "length": q(l.length_km, Dimension::Length),
                    "r_per_km": q(l.r_per_km, Dimension::ResistancePerLength),
                    "l_per_km": q(l.l_per_km, Dimension::InductancePerLength),
                    "c_per_km": q(l.c_per_km, Dimension::CapacitancePerLength),
                })
            })
            .collect();
        let converters: Vec<Value> = self
            .converters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut o = json!({
                    "node": self.nodes[i],
                    "mode": match c.mode { ConverterMode::Droop => "droop", ConverterMode::FixedPower => "fixed-power" },
                    "c_sm": q(c.c_sm, Dimension::Capacitance),
                    "n_sm": c.n_sm,
                    "l_arm": q(c.l_arm, Dimension::Inductance),
                    "r_arm": q(c.r_arm, Dimension::Resistance),
                    "l0": q(c.l0, Dimension::Inductance),
                    "r0": q(c.r0, Dimension::Resistance),
                    "l_s": q(c.l_s, Dimension::Inductance),
                    "c_g": q(c.c_g, Dimension::Capacitance),
                    "v_dc_nom": q(c.v_dc_nom, Dimension::Voltage),
                    "pcc_voltage_dq": [q(c.pcc_voltage_dq.0, Dimension::Voltage), q(c.pcc_voltage_dq.1, Dimension::Voltage)],
                    "omega0": q(c.omega0, Dimension::AngularFrequency),
                    "p_set": q(c.p_set, Dimension::Power),
                    "q_set": q(c.q_set, Dimension::ReactivePower),
                });
                if let Some(d) = &c.droop {
                    o["droop"] = json!({
                        "k": q(d.k, Dimension::Slope),
                        "v_dc_ref": q(d.v_dc_ref, Dimension::Voltage),
                        "p0": q(d.p0, Dimension::Power),
                    });
                }
                o
            })
            .collect();
        let mut gains = Map::new();
        for (i, g) in self.gains.iter().enumerate() {
            gains.insert(
                self.nodes[i].clone(),
                json!({
                    "kp_i": g.kp_i,
                    "ki_i": g.ki_i,
                    "kp_pq": g.kp_pq,
                    "ki_pq": g.ki_pq,
                    "voltage_feedforward": g.voltage_feedforward,
                    "decoupling": g.decoupling,
                }),
            );
        }
        let scenario: Vec<Value> = self
            .scenario
            .iter()
            .map(|e| {
                let (kind, dim) = match e.kind {
                    EventKind::PowerCommand => ("power_command", Dimension::Power),
                    EventKind::DroopSlope => ("droop_slope", Dimension::Slope),
                };
                json!({
                    "time": q(e.time, Dimension::Time),
                    "kind": kind,
                    "node": self.nodes[e.node],
                    "from": q(e.from, dim),
                    "to": q(e.to, dim),
                })
            })
            .collect();
        json!({
            "nodes": nodes,
            "lines": lines,
            "converters": converters,
            "gains": gains,
            "scenario": scenario,
        })
    }

    /// SHA-256 of the normalized form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_json()).expect("serializable");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A config that passed [`validate`]. Immutable; cheap to share.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SystemConfig,
    state_dim: usize,
}

impl ValidatedConfig {
    pub fn state_dimension(&self) -> usize {
        self.state_dim
    }

    pub fn into_inner(self) -> SystemConfig {
        self.config
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.config
    }
}

// ---------------------------------------------------------------------------
// parsing

struct Node<'a> {
    path: String,
    value: &'a Value,
}

impl<'a> Node<'a> {
    fn root(value: &'a Value) -> Self {
        Node {
            path: String::new(),
            value,
        }
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn object(&self) -> Result<&'a Map<String, Value>, ConfigError> {
        self.value
            .as_object()
            .ok_or_else(|| schema(&self.path, "expected an object"))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.object()?.keys() {
            if !key.starts_with('_') && !allowed.contains(&key.as_str()) {
                return Err(schema(self.child_path(key), "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Node<'a>, ConfigError> {
        let path = self.child_path(key);
        match self.object()?.get(key) {
            Some(value) => Ok(Node { path, value }),
            None => Err(schema(path, "missing required field")),
        }
    }

    fn opt(&self, key: &str) -> Result<Option<Node<'a>>, ConfigError> {
        Ok(self.object()?.get(key).map(|value| Node {
            path: self.child_path(key),
            value,
        }))
    }

    fn array(&self) -> Result<Vec<Node<'a>>, ConfigError> {
        let items = self
            .value
            .as_array()
            .ok_or_else(|| schema(&self.path, "expected an array"))?;
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, value)| Node {
                path: self.child_path(&i.to_string()),
                value,
            })
            .collect())
    }

    fn string(&self) -> Result<String, ConfigError> {
        match self.value {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(schema(&self.path, "expected a string")),
        }
    }

    fn number(&self) -> Result<f64, ConfigError> {
        self.value
            .as_f64()
            .ok_or_else(|| schema(&self.path, "expected a number"))
    }

    fn boolean(&self) -> Result<bool, ConfigError> {
        self.value
            .as_bool()
            .ok_or_else(|| schema(&self.path, "expected a boolean"))
    }

    /// `{"value": x, "unit": "..."}` converted to base units.
    fn quantity(&self, dim: Dimension) -> Result<f64, ConfigError> {
        self.check_keys(&["value", "unit"])?;
        let value = self.get("value")?.number()?;
        let unit = self.get("unit")?.string()?;
        units::to_base(value, &unit, dim).map_err(|source| ConfigError::Unit {
            path: self.child_path("unit"),
            source,
        })
    }
}

/// Parses a JSON document into a [`SystemConfig`] in base units.
pub fn parse_config(document: &str) -> Result<SystemConfig, ConfigError> {
    let value: Value = serde_json::from_str(document)?;
    parse_value(&value)
}

/// Parses an already-decoded JSON value.
pub fn parse_value(value: &Value) -> Result<SystemConfig, ConfigError> {
    let root = Node::root(value);
    root.check_keys(&[
        "nodes",
        "lines",
        "converters",
        "gains",
        "scenario",
        "description",
        "notes",
    ])?;

    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    for item in root.get("nodes")?.array()? {
        let id = item.string()?;
        if index.insert(id.clone(), nodes.len()).is_some() {
            return Err(ConfigError::DuplicateNode(id));
        }
        nodes.push(id);
    }
    if nodes.is_empty() {
        return Err(schema("nodes", "at least one node is required"));
    }
    let resolve = |item: &Node| -> Result<usize, ConfigError> {
        let id = item.string()?;
        index
            .get(&id)
            .copied()
            .ok_or_else(|| schema(&item.path, format!("undeclared node `{id}`")))
    };

    let mut lines = Vec::new();
    for item in root.get("lines")?.array()? {
        item.check_keys(&["from", "to", "length", "r_per_km", "l_per_km", "c_per_km"])?;
        let from_node = resolve(&item.get("from")?)?;
        let to_node = resolve(&item.get("to")?)?;
        if from_node == to_node {
            return Err(schema(&item.path, "line connects a node to itself"));
        }
        lines.push(LineSpec {
            from_node,
            to_node,
            length_km: item.get("length")?.quantity(Dimension::Length)?,
            r_per_km: item
                .get("r_per_km")?
                .quantity(Dimension::ResistancePerLength)?,
            l_per_km: item
                .get("l_per_km")?
                .quantity(Dimension::InductancePerLength)?,
            c_per_km: item
                .get("c_per_km")?
                .quantity(Dimension::CapacitancePerLength)?,
        });
    }

    let mut converters: Vec<Option<ConverterSpec>> = vec![None; nodes.len()];
    for item in root.get("converters")?.array()? {
        item.check_keys(&[
            "node",
            "mode",
            "c_sm",
            "n_sm",
            "l_arm",
            "r_arm",
            "l0",
            "r0",
            "l_s",
            "c_g",
            "v_dc_nom",
            "pcc_voltage_dq",
            "omega0",
            "p_set",
            "q_set",
            "droop",
        ])?;
        let node_item = item.get("node")?;
        let node = resolve(&node_item)?;
        let mode = match item.get("mode")?.string()?.as_str() {
            "droop" => ConverterMode::Droop,
            "fixed-power" => ConverterMode::FixedPower,
            other => {
                return Err(schema(
                    item.child_path("mode"),
                    format!("unknown mode `{other}` (expected `droop` or `fixed-power`)"),
                ))
            }
        };
        let n_sm_item = item.get("n_sm")?;
        let n_sm = n_sm_item
            .value
            .as_u64()
            .filter(|&n| n >= 1 && n <= u32::MAX as u64)
            .ok_or_else(|| schema(&n_sm_item.path, "expected a positive integer"))?
            as u32;
        let pcc = item.get("pcc_voltage_dq")?.array()?;
        if pcc.len() != 2 {
            return Err(schema(item.child_path("pcc_voltage_dq"), "expected [d, q]"));
        }
        let droop = match item.opt("droop")? {
            None => None,
            Some(d) => {
                d.check_keys(&["k", "v_dc_ref", "p0"])?;
                Some(DroopParams {
                    k: d.get("k")?.quantity(Dimension::Slope)?,
                    v_dc_ref: d.get("v_dc_ref")?.quantity(Dimension::Voltage)?,
                    p0: d.get("p0")?.quantity(Dimension::Power)?,
                })
            }
        };
        let spec = ConverterSpec {
            mode,
            c_sm: item.get("c_sm")?.quantity(Dimension::Capacitance)?,
            n_sm,
            l_arm: item.get("l_arm")?.quantity(Dimension::Inductance)?,
            r_arm: item.get("r_arm")?.quantity(Dimension::Resistance)?,
            l0: item.get("l0")?.quantity(Dimension::Inductance)?,
            r0: item.get("r0")?.quantity(Dimension::Resistance)?,
            l_s: item.get("l_s")?.quantity(Dimension::Inductance)?,
            c_g: item.get("c_g")?.quantity(Dimension::Capacitance)?,
            v_dc_nom: item.get("v_dc_nom")?.quantity(Dimension::Voltage)?,
            pcc_voltage_dq: (
                pcc[0].quantity(Dimension::Voltage)?,
                pcc[1].quantity(Dimension::Voltage)?,
            ),
            omega0: item.get("omega0")?.quantity(Dimension::AngularFrequency)?,
            p_set: item.get("p_set")?.quantity(Dimension::Power)?,
            q_set: item.get("q_set")?.quantity(Dimension::ReactivePower)?,
            droop,
        };
        if converters[node].replace(spec).is_some() {
            return Err(schema(
                &node_item.path,
                format!("second converter at node `{}`", nodes[node]),
            ));
        }
    }
    let converters = converters
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| schema("converters", format!("node `{}` has no converter", nodes[i]))))
        .collect::<Result<Vec<_>, _>>()?;

    let gains = parse_gains(&root.get("gains")?, &nodes, &index)?;

    let mut scenario = Vec::new();
    if let Some(list) = root.opt("scenario")? {
        if !list.value.is_null() {
            for item in list.array()? {
                item.check_keys(&["time", "kind", "node", "from", "to"])?;
                let (kind, dim) = match item.get("kind")?.string()?.as_str() {
                    "power_command" => (EventKind::PowerCommand, Dimension::Power),
                    "droop_slope" => (EventKind::DroopSlope, Dimension::Slope),
                    other => {
                        return Err(schema(
                            item.child_path("kind"),
                            format!("unknown event kind `{other}`"),
                        ))
                    }
                };
                scenario.push(ScenarioEvent {
                    time: item.get("time")?.quantity(Dimension::Time)?,
                    kind,
                    node: resolve(&item.get("node")?)?,
                    from: item.get("from")?.quantity(dim)?,
                    to: item.get("to")?.quantity(dim)?,
                });
            }
        }
    }

    Ok(SystemConfig {
        nodes,
        lines,
        converters,
        gains,
        scenario,
    })
}

fn parse_gain_block(
    item: &Node,
    base: Option<&ControllerGains>,
) -> Result<ControllerGains, ConfigError> {
    item.check_keys(&[
        "kp_i",
        "ki_i",
        "kp_pq",
        "ki_pq",
        "voltage_feedforward",
        "decoupling",
    ])?;
    let num = |key: &str, fallback: Option<f64>| -> Result<f64, ConfigError> {
        match (item.opt(key)?, fallback) {
            (Some(n), _) => n.number(),
            (None, Some(v)) => Ok(v),
            (None, None) => Err(schema(item.child_path(key), "missing required field")),
        }
    };
    let flag = |key: &str, fallback: bool| -> Result<bool, ConfigError> {
        item.opt(key)?.map_or(Ok(fallback), |n| n.boolean())
    };
    Ok(ControllerGains {
        kp_i: num("kp_i", base.map(|g| g.kp_i))?,
        ki_i: num("ki_i", base.map(|g| g.ki_i))?,
        kp_pq: num("kp_pq", base.map(|g| g.kp_pq))?,
        ki_pq: num("ki_pq", base.map(|g| g.ki_pq))?,
        voltage_feedforward: flag("voltage_feedforward", base.is_none_or(|g| g.voltage_feedforward))?,
        decoupling: flag("decoupling", base.is_none_or(|g| g.decoupling))?,
    })
}

/// `gains` maps node ids to gain blocks; an optional `default` block fills
/// in stations without one and missing fields of partial blocks.
fn parse_gains(
    item: &Node,
    nodes: &[String],
    index: &HashMap<String, usize>,
) -> Result<Vec<ControllerGains>, ConfigError> {
    let map = item.object()?;
    let default = match item.opt("default")? {
        Some(d) => Some(parse_gain_block(&d, None)?),
        None => None,
    };
    for key in map.keys() {
        if key != "default" && !key.starts_with('_') && !index.contains_key(key) {
            return Err(schema(item.child_path(key), format!("undeclared node `{key}`")));
        }
    }
    nodes
        .iter()
        .map(|id| match item.opt(id)? {
            Some(block) => parse_gain_block(&block, default.as_ref()),
            None => default
                .clone()
                .ok_or_else(|| schema(item.child_path(id), "no gains and no default")),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// validation

/// Checks connectivity, positivity and mode/droop consistency.
pub fn validate(config: SystemConfig) -> Result<ValidatedConfig, ConfigError> {
    let components = count_components(config.n_nodes(), &config.lines);
    if components > 1 {
        return Err(ConfigError::Disconnected { components });
    }

    let positive = |path: String, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::NonPositive { path, value: v })
        }
    };
    let non_negative = |path: String, v: f64| {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Negative { path, value: v })
        }
    };

    for (i, l) in config.lines.iter().enumerate() {
        positive(format!("lines.{i}.length"), l.length_km)?;
        non_negative(format!("lines.{i}.r_per_km"), l.r_per_km)?;
        positive(format!("lines.{i}.l_per_km"), l.l_per_km)?;
        positive(format!("lines.{i}.c_per_km"), l.c_per_km)?;
    }

    for (i, c) in config.converters.iter().enumerate() {
        let p = |field: &str| format!("converters.{}.{field}", config.nodes[i]);
        positive(p("c_sm"), c.c_sm)?;
        positive(p("l_arm"), c.l_arm)?;
        positive(p("c_g"), c.c_g)?;
        positive(p("l_s"), c.l_s)?;
        positive(p("v_dc_nom"), c.v_dc_nom)?;
        positive(p("omega0"), c.omega0)?;
        non_negative(p("r_arm"), c.r_arm)?;
        non_negative(p("r0"), c.r0)?;
        non_negative(p("l0"), c.l0)?;
        match (c.mode, &c.droop) {
            (ConverterMode::Droop, None) => {
                return Err(ConfigError::DroopMismatch {
                    node: config.nodes[i].clone(),
                    message: "droop mode without a droop block".into(),
                })
            }
            (ConverterMode::FixedPower, Some(_)) => {
                return Err(ConfigError::DroopMismatch {
                    node: config.nodes[i].clone(),
                    message: "droop block on a fixed-power converter".into(),
                })
            }
            (ConverterMode::Droop, Some(d)) => {
                positive(p("droop.v_dc_ref"), d.v_dc_ref)?;
                non_negative(p("droop.k"), d.k)?;
            }
            _ => {}
        }
    }

    for (i, g) in config.gains.iter().enumerate() {
        let p = |field: &str| format!("gains.{}.{field}", config.nodes[i]);
        non_negative(p("kp_i"), g.kp_i)?;
        non_negative(p("kp_pq"), g.kp_pq)?;
        positive(p("ki_i"), g.ki_i)?;
        positive(p("ki_pq"), g.ki_pq)?;
    }

    if config.droop_axes().is_empty() {
        return Err(ConfigError::NoDroop);
    }

    let state_dim = config.state_dimension();
    Ok(ValidatedConfig { config, state_dim })
}

fn count_components(n: usize, lines: &[LineSpec]) -> usize {
    let mut adjacency = vec![Vec::new(); n];
    for l in lines {
        adjacency[l.from_node].push(l.to_node);
        adjacency[l.to_node].push(l.from_node);
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    components
}

// ---------------------------------------------------------------------------
// overrides

/// Applies `path=value` overrides to a raw document before parsing.
///
/// Path segments are object keys or array indices separated by dots.
/// Values are parsed as JSON when possible; `"<number><unit>"` such as
/// `60MW/kV` becomes a quantity object; anything else is a string.
pub fn apply_override(document: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let bad = |msg: &str| ConfigError::Override(assignment.to_string(), msg.to_string());
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad("expected path=value"))?;
    let value = parse_override_value(raw.trim());
    let mut target = document;
    for segment in path.trim().split('.') {
        target = match target {
            Value::Object(map) => map
                .get_mut(segment)
                .ok_or_else(|| bad(&format!("no key `{segment}`")))?,
            Value::Array(items) => {
                let i: usize = segment
                    .parse()
                    .map_err(|_| bad(&format!("`{segment}` is not an index")))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| bad(&format!("index {i} out of range")))?
            }
            _ => return Err(bad(&format!("cannot descend into `{segment}`"))),
        };
    }
    *target = value;
    Ok(())
}

fn parse_override_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    let split = raw
        .char_indices()
        .find(|&(i, ch)| {
            !(ch.is_ascii_digit()
                || ch == '.'
                || ch == '-'
                || ch == '+'
                || ((ch == 'e' || ch == 'E') && i > 0))
        })
        .map(|(i, _)| i);
    if let Some(i) = split {
        if let Ok(value) = raw[..i].trim().parse::<f64>() {
            return json!({"value": value, "unit": raw[i..].trim()});
        }
    }
    Value::String(raw.to_string())
}


#[cfg(test)]
pub(crate) use tests::two_node_doc;
