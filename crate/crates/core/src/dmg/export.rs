use std::fmt::Write;

use super::{Dmg, DmgError, FORMAT_VERSION};
use crate::scalar::{to_f64, Real};

impl<T: Real> Dmg<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DmgError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DmgError::Malformed(e.to_string()))?;
        Self::from_json_value(value)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, DmgError> {
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| DmgError::Malformed("missing version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(DmgError::UnsupportedVersion(version as u32));
        }
        let dmg: Dmg<T> =
            serde_json::from_value(value).map_err(|e| DmgError::Malformed(e.to_string()))?;
        dmg.validate()?;
        Ok(dmg)
    }

    /// Graphviz rendering with one cluster per connected component.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph dmg {\n  node [shape=box, fontsize=9];\n");
        for label in 0..self.component_count() {
            let _ = writeln!(out, "  subgraph cluster_{label} {{\n    label=\"component {label}\";");
            for id in self.component_members(label) {
                let n = self.node(id);
                let p = n.contact;
                let _ = writeln!(
                    out,
                    "    n{id} [label=\"{}:{} [{}..{}]\\n({:.3}, {:.3}, {:.3})\"];",
                    n.patch,
                    n.component_index,
                    n.angles.start,
                    n.angles.end(),
                    to_f64(p.x),
                    to_f64(p.y),
                    to_f64(p.z)
                );
            }
            out.push_str("  }\n");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "  n{a} -- n{b};");
        }
        out.push_str("}\n");
        out
    }
}
