use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::device::{require_token, ComponentKind};
use super::document::{Document, DocumentError};
use super::levels::{
    AuthorizationAccessLevel, DataSensitivityLevel, PhysicalAccessLevel, SecurityImpactLevel, VerificationLevel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EcosystemKind {
    CloudBackend,
    MobileApp,
    HubGateway,
    ThirdPartyApi,
}

/// A backend or control system the device interacts with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EcosystemSystem {
    pub system_id: String,
    pub kind: EcosystemKind,
    pub endpoint: String,
    pub in_scope: bool,
}

/// Assumptions under which a device is tested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TestingProfile {
    pub profile_id: String,
    pub granted_physical: PhysicalAccessLevel,
    pub granted_authorization: AuthorizationAccessLevel,
    pub device_data_sensitivity: DataSensitivityLevel,
    pub device_security_impact: SecurityImpactLevel,
    pub verification_level: VerificationLevel,
    #[serde(default)]
    pub ecosystem: Vec<EcosystemSystem>,
    /// Per component kind verification level, replacing `verification_level`.
    #[serde(default)]
    pub verification_overrides: BTreeMap<ComponentKind, VerificationLevel>,
}

impl TestingProfile {
    /// Verification level applied to components of `kind`.
    pub fn effective_verification_level(&self, kind: ComponentKind) -> VerificationLevel {
        self.verification_overrides
            .get(&kind)
            .copied()
            .unwrap_or(self.verification_level)
    }
}

impl Document for TestingProfile {
    const KIND: &'static str = "testing-profile";

    fn validate(&self) -> Result<(), DocumentError> {
        require_token("$.profile-id", &self.profile_id)?;
        let mut seen = BTreeSet::new();
        for (i, system) in self.ecosystem.iter().enumerate() {
            let path = format!("$.ecosystem[{i}].system-id");
            require_token(&path, &system.system_id)?;
            if !seen.insert(system.system_id.as_str()) {
                return Err(DocumentError::invariant(
                    "unique-system-id",
                    path,
                    format!("duplicate system-id `{}`", system.system_id),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::document::{parse_document, serialize_document};
    use crate::model::levels::OrdinalLevel;

    fn minimal() -> TestingProfile {
        TestingProfile {
            profile_id: "p".into(),
            granted_physical: PhysicalAccessLevel::lowest(),
            granted_authorization: AuthorizationAccessLevel::lowest(),
            device_data_sensitivity: DataSensitivityLevel::lowest(),
            device_security_impact: SecurityImpactLevel::lowest(),
            verification_level: VerificationLevel::lowest(),
            ecosystem: vec![],
            verification_overrides: BTreeMap::new(),
        }
    }

    #[test]
    fn lowest_levels_serialize_by_name() {
        let text = String::from_utf8(serialize_document(&minimal())).unwrap();
        for name in ["REMOTE", "UNAUTHORIZED", "NONPERSONAL", "INCONVENIENCE"] {
            assert!(text.contains(&format!("\"{name}\"")), "{name} missing in {text}");
        }
        assert_eq!(parse_document::<TestingProfile>(text.as_bytes()).unwrap(), minimal());
    }

    #[test]
    fn overrides_must_name_component_kinds() {
        let mut profile = minimal();
        profile
            .verification_overrides
            .insert(ComponentKind::Firmware, VerificationLevel::Rigorous);
        assert_eq!(profile.effective_verification_level(ComponentKind::Firmware), VerificationLevel::Rigorous);
        assert_eq!(profile.effective_verification_level(ComponentKind::Sensor), VerificationLevel::Overall);

        let text = String::from_utf8(serialize_document(&profile)).unwrap();
        let broken = text.replace("\"FIRMWARE\"", "\"BOOTLOADER\"");
        let err = parse_document::<TestingProfile>(broken.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "SCHEMA");
    }

    #[test]
    fn duplicate_ecosystem_ids_are_rejected() {
        let mut profile = minimal();
        let system = EcosystemSystem {
            system_id: "cloud".into(),
            kind: EcosystemKind::CloudBackend,
            endpoint: "https://api.example.com".into(),
            in_scope: true,
        };
        profile.ecosystem = vec![system.clone(), system];
        let err = parse_document::<TestingProfile>(&serialize_document(&profile)).unwrap_err();
        assert_eq!(err.path(), "$.ecosystem[1].system-id");
    }

    #[test]
    fn missing_level_is_a_schema_error() {
        let text = String::from_utf8(serialize_document(&minimal())).unwrap();
        let broken = text.replace("  \"granted-physical\": \"REMOTE\",\n", "");
        let err = parse_document::<TestingProfile>(broken.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "SCHEMA");
        assert!(err.to_string().contains("granted-physical"));
    }
}
