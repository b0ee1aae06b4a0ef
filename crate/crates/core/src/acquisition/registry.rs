//! Process-wide registry of known acquisition devices.
//!
//! Populated on first use with the built-in devices; callers may register
//! more at runtime.

use std::sync::{OnceLock, RwLock};

use indexmap::IndexMap;

use crate::datastream;
use crate::device::DeviceSpec;

use super::AcquisitionError;

/// Default port used by the data server and client.
pub const DEFAULT_PORT: u16 = 8844;

const DSI_CHANNELS: [&str; 25] = [
    "P3", "C3", "F3", "Fz", "F4", "C4", "P4", "Cz", "CM", "A1", "Fp1", "Fp2", "T3", "T5", "O1",
    "O2", "X3", "X2", "F7", "F8", "X1", "A2", "T6", "T4", "Pz",
];

/// The dry-electrode headset layout: 25 channels at 300 Hz.
pub fn dsi_device() -> DeviceSpec {
    DeviceSpec::new(
        "DSI",
        300.0,
        DSI_CHANNELS.iter().map(|s| s.to_string()).collect(),
    )
    .expect("built-in device is valid")
}

fn registry() -> &'static RwLock<IndexMap<String, DeviceSpec>> {
    static REGISTRY: OnceLock<RwLock<IndexMap<String, DeviceSpec>>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut map = IndexMap::new();
        for spec in [dsi_device(), datastream::sim_device()] {
            map.insert(spec.name.clone(), spec);
        }
        RwLock::new(map)
    })
}

pub fn find_device(name: &str) -> Result<DeviceSpec, AcquisitionError> {
    registry()
        .read()
        .expect("registry lock poisoned")
        .get(name)
        .cloned()
        .ok_or_else(|| AcquisitionError::UnknownDevice(name.to_string()))
}

/// Adds or replaces a device under its own name.
pub fn register_device(spec: DeviceSpec) {
    registry()
        .write()
        .expect("registry lock poisoned")
        .insert(spec.name.clone(), spec);
}

pub fn list_devices() -> Vec<String> {
    registry()
        .read()
        .expect("registry lock poisoned")
        .keys()
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_devices() {
        let dsi = find_device("DSI").unwrap();
        assert_eq!(dsi.channel_count(), 25);
        assert_eq!(dsi.sample_rate, 300.0);
        let names = list_devices();
        assert!(names.contains(&"DSI".to_string()));
        assert!(names.contains(&"SIM".to_string()));
        assert_eq!(find_device("SIM").unwrap(), datastream::sim_device());
    }

    #[test]
    fn unknown_device() {
        assert!(matches!(
            find_device("NOPE"),
            Err(AcquisitionError::UnknownDevice(ref n)) if n == "NOPE"
        ));
    }

    #[test]
    fn runtime_registration() {
        let spec = DeviceSpec::new("TEST-REG", 128.0, vec!["x".into()]).unwrap();
        register_device(spec.clone());
        assert_eq!(find_device("TEST-REG").unwrap(), spec);
    }
}
