use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::document::{Document, DocumentError};

/// Closed set of component kinds a device model may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ComponentKind {
    Sensor,
    Actuator,
    ProcessingUnit,
    Memory,
    Firmware,
    DataExchangeService,
    PhysicalInterface,
    WirelessInterface,
    NetworkService,
    UserInterface,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 10] = [
        Self::Sensor,
        Self::Actuator,
        Self::ProcessingUnit,
        Self::Memory,
        Self::Firmware,
        Self::DataExchangeService,
        Self::PhysicalInterface,
        Self::WirelessInterface,
        Self::NetworkService,
        Self::UserInterface,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sensor => "SENSOR",
            Self::Actuator => "ACTUATOR",
            Self::ProcessingUnit => "PROCESSING_UNIT",
            Self::Memory => "MEMORY",
            Self::Firmware => "FIRMWARE",
            Self::DataExchangeService => "DATA_EXCHANGE_SERVICE",
            Self::PhysicalInterface => "PHYSICAL_INTERFACE",
            Self::WirelessInterface => "WIRELESS_INTERFACE",
            Self::NetworkService => "NETWORK_SERVICE",
            Self::UserInterface => "USER_INTERFACE",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Data-transmission technologies accepted for the `protocol` attribute of
/// wireless interfaces.
pub const WIRELESS_PROTOCOLS: [&str; 12] = [
    "wifi",
    "bluetooth_classic",
    "ble",
    "zigbee",
    "thread",
    "zwave",
    "lorawan",
    "matter",
    "cellular_2g",
    "cellular_3g",
    "cellular_4g",
    "cellular_5g",
];

/// Scalar attribute value. Text, integer or boolean.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Bool(bool),
    Integer(i64),
    Text(String),
}

impl AttributeValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Self::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bool(b) => write!(f, "{b}"),
            Self::Integer(i) => write!(f, "{i}"),
            Self::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for AttributeValue {
    fn from(s: &str) -> Self {
        Self::Text(s.to_string())
    }
}

impl From<String> for AttributeValue {
    fn from(s: String) -> Self {
        Self::Text(s)
    }
}

impl From<i64> for AttributeValue {
    fn from(i: i64) -> Self {
        Self::Integer(i)
    }
}

impl From<bool> for AttributeValue {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DeviceComponent {
    pub component_id: String,
    pub kind: ComponentKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl DeviceComponent {
    pub fn new(component_id: impl Into<String>, kind: ComponentKind) -> Self {
        Self {
            component_id: component_id.into(),
            kind,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, name: impl Into<String>, value: impl Into<AttributeValue>) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeValue> {
        self.attributes.get(name)
    }
}

/// Machine-readable abstraction of the device under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DeviceModel {
    pub device_id: String,
    pub display_name: String,
    pub components: Vec<DeviceComponent>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl DeviceModel {
    pub fn component(&self, component_id: &str) -> Option<&DeviceComponent> {
        self.components.iter().find(|c| c.component_id == component_id)
    }
}

pub(crate) fn require_token(path: &str, value: &str) -> Result<(), DocumentError> {
    if value.trim().is_empty() {
        return Err(DocumentError::invariant("non-empty-id", path, "identifier must not be empty"));
    }
    Ok(())
}

impl Document for DeviceModel {
    const KIND: &'static str = "device-model";

    fn validate(&self) -> Result<(), DocumentError> {
        require_token("$.device-id", &self.device_id)?;
        if self.components.is_empty() {
            return Err(DocumentError::invariant(
                "at-least-one-component",
                "$.components",
                "a device model needs at least one component",
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, component) in self.components.iter().enumerate() {
            let path = format!("$.components[{i}]");
            require_token(&format!("{path}.component-id"), &component.component_id)?;
            if !seen.insert(component.component_id.as_str()) {
                return Err(DocumentError::invariant(
                    "unique-component-id",
                    format!("{path}.component-id"),
                    format!("duplicate component-id `{}`", component.component_id),
                ));
            }
            if component.kind == ComponentKind::WirelessInterface {
                if let Some(protocol) = component.attributes.get("protocol") {
                    let known = protocol
                        .as_text()
                        .is_some_and(|p| WIRELESS_PROTOCOLS.contains(&p));
                    if !known {
                        return Err(DocumentError::schema(
                            format!("{path}.attributes.protocol"),
                            format!(
                                "unknown wireless protocol `{protocol}`, expected one of {}",
                                WIRELESS_PROTOCOLS.join(", ")
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
