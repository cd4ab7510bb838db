use serde::{Deserialize, Serialize};

use super::NodeKind;
use crate::e2::E2Quirk;

/// Per-vendor characteristics of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackProfile {
    pub name: String,
    /// `None` means the radio model is the only limit.
    pub dl_cap_mbps: Option<f64>,
    pub ul_cap_mbps: Option<f64>,
    pub one_way_proc_delay_us: u64,
    pub e2_quirk: E2Quirk,
}

pub const PRESETS: [&str; 3] = ["vendor", "oai-split", "oai-mono"];

/// Extra one-way delay of the white-box split stack on the DU-CU path.
const OAI_SPLIT_EXTRA_US: u64 = 16_700;
/// Extra one-way delay of the monolithic white-box gNB.
const OAI_MONO_EXTRA_US: u64 = 3_250;

fn base_delay(kind: NodeKind) -> u64 {
    match kind {
        NodeKind::Ru => 100,
        NodeKind::Du => 700,
        NodeKind::CuCp | NodeKind::CuUp => 400,
    }
}

impl StackProfile {
    /// Built-in profile for `name` applied to a node of `kind`.
    pub fn preset(name: &str, kind: NodeKind) -> Option<StackProfile> {
        let base = base_delay(kind);
        let du = kind == NodeKind::Du;
        let (dl, ul, delay, quirk) = match name {
            "vendor" => (None, None, base, E2Quirk::Normal),
            "oai-split" => (
                Some(10.0),
                Some(6.0),
                if du { base + OAI_SPLIT_EXTRA_US } else { base },
                E2Quirk::NoDecode,
            ),
            "oai-mono" => (
                Some(120.0),
                Some(2.0),
                if du { base + OAI_MONO_EXTRA_US } else { base },
                E2Quirk::NoDecode,
            ),
            _ => return None,
        };
        Some(StackProfile {
            name: name.to_owned(),
            dl_cap_mbps: if du { dl } else { None },
            ul_cap_mbps: if du { ul } else { None },
            one_way_proc_delay_us: delay,
            e2_quirk: quirk,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        for (label, cap) in [("dl_cap", self.dl_cap_mbps), ("ul_cap", self.ul_cap_mbps)] {
            if let Some(c) = cap {
                if !(c.is_finite() && c > 0.0) {
                    return Err(format!("profile {}: {label} must be > 0", self.name));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vendor_path_sums_to_reference_budget() {
        let total: u64 = [NodeKind::Ru, NodeKind::Du, NodeKind::CuUp]
            .into_iter()
            .map(|k| StackProfile::preset("vendor", k).unwrap().one_way_proc_delay_us)
            .sum();
        assert_eq!(total, 1_200);
    }

    #[test]
    fn white_box_presets() {
        let split = StackProfile::preset("oai-split", NodeKind::Du).unwrap();
        assert_eq!(split.one_way_proc_delay_us, 17_400);
        assert_eq!((split.dl_cap_mbps, split.ul_cap_mbps), (Some(10.0), Some(6.0)));
        assert_eq!(split.e2_quirk, E2Quirk::NoDecode);
        let mono = StackProfile::preset("oai-mono", NodeKind::Du).unwrap();
        assert_eq!(mono.one_way_proc_delay_us, 3_950);
        assert_eq!((mono.dl_cap_mbps, mono.ul_cap_mbps), (Some(120.0), Some(2.0)));
        assert_eq!(
            StackProfile::preset("oai-split", NodeKind::CuUp).unwrap().dl_cap_mbps,
            None
        );
        assert!(StackProfile::preset("nope", NodeKind::Du).is_none());
    }
}
