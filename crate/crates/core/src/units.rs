//! Engineering-unit suffixes and their conversion to the internal base units.
//!
//! Electrical quantities are stored in V, A, W, var, Ω, H, F, s and rad/s.
//! Line data is the one exception: lengths are kept in km and the per-length
//! constants in Ω/km, H/km and F/km, mirroring how cable data is tabulated.

use std::fmt;

/// Physical dimension a config field expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Voltage,
    Current,
    Power,
    ReactivePower,
    Resistance,
    Inductance,
    Capacitance,
    Time,
    AngularFrequency,
    Length,
    ResistancePerLength,
    InductancePerLength,
    CapacitancePerLength,
    /// Droop slope, W/V.
    Slope,
}

impl Dimension {
    /// Unit string used when serializing the normalized form.
    pub fn base_unit(self) -> &'static str {
        match self {
            Dimension::Voltage => "V",
            Dimension::Current => "A",
            Dimension::Power => "W",
            Dimension::ReactivePower => "var",
            Dimension::Resistance => "ohm",
            Dimension::Inductance => "H",
            Dimension::Capacitance => "F",
            Dimension::Time => "s",
            Dimension::AngularFrequency => "rad/s",
            Dimension::Length => "km",
            Dimension::ResistancePerLength => "ohm/km",
            Dimension::InductancePerLength => "H/km",
            Dimension::CapacitancePerLength => "F/km",
            Dimension::Slope => "W/V",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

const UNITS: &[(&str, Dimension, f64)] = &[
    ("V", Dimension::Voltage, 1.0),
    ("kV", Dimension::Voltage, 1e3),
    ("MV", Dimension::Voltage, 1e6),
    ("A", Dimension::Current, 1.0),
    ("kA", Dimension::Current, 1e3),
    ("W", Dimension::Power, 1.0),
    ("kW", Dimension::Power, 1e3),
    ("MW", Dimension::Power, 1e6),
    ("GW", Dimension::Power, 1e9),
    ("var", Dimension::ReactivePower, 1.0),
    ("kvar", Dimension::ReactivePower, 1e3),
    ("Mvar", Dimension::ReactivePower, 1e6),
    ("ohm", Dimension::Resistance, 1.0),
    ("Ω", Dimension::Resistance, 1.0),
    ("mohm", Dimension::Resistance, 1e-3),
    ("kohm", Dimension::Resistance, 1e3),
    ("H", Dimension::Inductance, 1.0),
    ("mH", Dimension::Inductance, 1e-3),
    ("uH", Dimension::Inductance, 1e-6),
    ("F", Dimension::Capacitance, 1.0),
    ("mF", Dimension::Capacitance, 1e-3),
    ("uF", Dimension::Capacitance, 1e-6),
    ("μF", Dimension::Capacitance, 1e-6),
    ("nF", Dimension::Capacitance, 1e-9),
    ("s", Dimension::Time, 1.0),
    ("ms", Dimension::Time, 1e-3),
    ("us", Dimension::Time, 1e-6),
    ("rad/s", Dimension::AngularFrequency, 1.0),
    ("Hz", Dimension::AngularFrequency, 2.0 * std::f64::consts::PI),
    ("km", Dimension::Length, 1.0),
    ("m", Dimension::Length, 1e-3),
    ("ohm/km", Dimension::ResistancePerLength, 1.0),
    ("Ω/km", Dimension::ResistancePerLength, 1.0),
    ("ohm/m", Dimension::ResistancePerLength, 1e3),
    ("H/km", Dimension::InductancePerLength, 1.0),
    ("mH/km", Dimension::InductancePerLength, 1e-3),
    ("F/km", Dimension::CapacitancePerLength, 1.0),
    ("uF/km", Dimension::CapacitancePerLength, 1e-6),
    ("μF/km", Dimension::CapacitancePerLength, 1e-6),
    ("nF/km", Dimension::CapacitancePerLength, 1e-9),
    ("W/V", Dimension::Slope, 1.0),
    ("kW/V", Dimension::Slope, 1e3),
    ("MW/kV", Dimension::Slope, 1e3),
];

/// One MW/kV expressed in W/V.
pub const MW_PER_KV: f64 = 1e3;

/// Looks up a unit suffix. Returns its dimension and the factor to base units.
pub fn lookup(unit: &str) -> Option<(Dimension, f64)> {
    UNITS
        .iter()
        .find(|(name, _, _)| *name == unit)
        .map(|&(_, dim, factor)| (dim, factor))
}

/// Converts `value` given in `unit` to base units, checking the dimension.
pub fn to_base(value: f64, unit: &str, expected: Dimension) -> Result<f64, UnitError> {
    match lookup(unit) {
        None => Err(UnitError::Unknown(unit.to_string())),
        Some((dim, factor)) if dim == expected => Ok(value * factor),
        Some((dim, _)) => Err(UnitError::WrongDimension {
            unit: unit.to_string(),
            found: dim,
            expected,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("unknown unit suffix `{0}`")]
    Unknown(String),
    #[error("unit `{unit}` is a {found}, expected a {expected}")]
    WrongDimension {
        unit: String,
        found: Dimension,
        expected: Dimension,
    },
}
