#![allow(dead_code)]

use std::path::PathBuf;

use iotsam_core::model::parse_document;
use iotsam_probes::mock::{MockDevice, MockService};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_mock(name: &str) -> MockDevice {
    let bytes = std::fs::read(fixture_path(&format!("mock/{name}"))).unwrap();
    parse_document(&bytes).unwrap()
}

pub fn vulnerable() -> MockDevice {
    load_mock("smart-lock.mock.json")
}

pub fn hardened() -> MockDevice {
    load_mock("hardened.mock.json")
}

/// Port of the first service matching `pick`.
pub fn port_of(mock: &MockDevice, pick: impl Fn(&MockService) -> bool) -> u16 {
    mock.services.iter().find(|s| pick(s)).map(MockService::port).expect("service in fixture")
}
