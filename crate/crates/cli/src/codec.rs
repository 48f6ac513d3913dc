//! JSON instance files.
//!
//! ```json
//! {
//!   "num_states": 2, "initial_state": 0,
//!   "actions": [[0, 1], [0]],
//!   "costs": {"0,0": 1.0, "0,1": 0.3, "1,0": 0.4},
//!   "transitions": {"0,0": [0.0, 0.0], "0,1": [0.3, 0.3], "1,0": [0.1, 0.2]},
//!   "confidence": {"kind": "l1", "epsilon": 0.1, "modification": "none"}
//! }
//! ```
//!
//! Keys are `"state,action-id"`. `epsilon` is a scalar or a per-pair map;
//! `counts` (per-pair visit counts) is required for any modification other
//! than `none`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use ssp_core::divergence::{ConfidenceSet, DivergenceKind, Modification};
use ssp_core::SspInstance;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub num_states: usize,
    #[serde(default)]
    pub initial_state: usize,
    pub actions: Vec<Vec<usize>>,
    pub costs: BTreeMap<String, f64>,
    pub transitions: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSpec {
    pub kind: String,
    pub epsilon: Epsilon,
    #[serde(default = "default_modification")]
    pub modification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, u64>>,
}

fn default_modification() -> String {
    "none".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    Uniform(f64),
    PerPair(BTreeMap<String, f64>),
}

pub fn key(s: usize, id: usize) -> String {
    format!("{s},{id}")
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Parse(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files serialise")
    }

    /// File for `instance`, without a confidence section.
    pub fn from_instance(instance: &SspInstance) -> Self {
        let mut costs = BTreeMap::new();
        let mut transitions = BTreeMap::new();
        for s in 0..instance.num_states() {
            for a in 0..instance.num_actions(s) {
                let k = key(s, instance.action_id(s, a));
                costs.insert(k.clone(), instance.cost(s, a));
                transitions.insert(k, instance.row(s, a).to_vec());
            }
        }
        InstanceFile {
            num_states: instance.num_states(),
            initial_state: instance.initial_state(),
            actions: instance.action_ids().to_vec(),
            costs,
            transitions,
            confidence: None,
        }
    }

    pub fn build_instance(&self) -> Result<SspInstance, CliError> {
        if self.actions.len() != self.num_states {
            return Err(invalid(format!("actions: expected {} entries, found {}", self.num_states, self.actions.len())));
        }
        let mut costs = Vec::with_capacity(self.num_states);
        let mut rows = Vec::with_capacity(self.num_states);
        let mut expected = 0;
        for (s, ids) in self.actions.iter().enumerate() {
            let mut cs = Vec::with_capacity(ids.len());
            let mut rs = Vec::with_capacity(ids.len());
            for &id in ids {
                let k = key(s, id);
                cs.push(*self.costs.get(&k).ok_or_else(|| invalid(format!("costs: missing key \"{k}\"")))?);
                rs.push(self.transitions.get(&k).ok_or_else(|| invalid(format!("transitions: missing key \"{k}\"")))?.clone());
                expected += 1;
            }
            costs.push(cs);
            rows.push(rs);
        }
        if self.costs.len() != expected {
            let extra = self.costs.keys().find(|k| !self.has_pair(k)).cloned().unwrap_or_default();
            return Err(invalid(format!("costs: unexpected key \"{extra}\"")));
        }
        if self.transitions.len() != expected {
            let extra = self.transitions.keys().find(|k| !self.has_pair(k)).cloned().unwrap_or_default();
            return Err(invalid(format!("transitions: unexpected key \"{extra}\"")));
        }
        SspInstance::new(self.num_states, self.initial_state, self.actions.clone(), costs, rows).map_err(|e| invalid(e.to_string()))
    }

    fn has_pair(&self, k: &str) -> bool {
        self.actions.iter().enumerate().any(|(s, ids)| ids.iter().any(|&id| key(s, id) == k))
    }

    pub fn build(&self) -> Result<(SspInstance, Option<ConfidenceSet>), CliError> {
        let inst = self.build_instance()?;
        let conf = match &self.confidence {
            None => None,
            Some(spec) => Some(spec.build(&inst)?),
        };
        Ok((inst, conf))
    }
}

impl ConfidenceSpec {
    pub fn build(&self, inst: &SspInstance) -> Result<ConfidenceSet, CliError> {
        let kind = DivergenceKind::parse(&self.kind)
            .ok_or_else(|| invalid(format!("confidence.kind: unknown divergence \"{}\"", self.kind)))?;
        let modification = Modification::parse(&self.modification)
            .ok_or_else(|| invalid(format!("confidence.modification: unknown value \"{}\"", self.modification)))?;
        let per_pair = |what: &str, s: usize, a: usize| key(s, inst.action_id(s, a)) + what;
        let mut radius = Vec::with_capacity(inst.num_states());
        for s in 0..inst.num_states() {
            let mut r = Vec::with_capacity(inst.num_actions(s));
            for a in 0..inst.num_actions(s) {
                r.push(match &self.epsilon {
                    Epsilon::Uniform(e) => *e,
                    Epsilon::PerPair(m) => *m
                        .get(&key(s, inst.action_id(s, a)))
                        .ok_or_else(|| invalid(format!("confidence.epsilon: missing key \"{}\"", per_pair("", s, a))))?,
                });
            }
            radius.push(r);
        }
        let counts = match &self.counts {
            None => None,
            Some(m) => {
                let mut out = Vec::with_capacity(inst.num_states());
                for s in 0..inst.num_states() {
                    let mut row = Vec::with_capacity(inst.num_actions(s));
                    for a in 0..inst.num_actions(s) {
                        let k = key(s, inst.action_id(s, a));
                        row.push(*m.get(&k).ok_or_else(|| invalid(format!("confidence.counts: missing key \"{k}\"")))?);
                    }
                    out.push(row);
                }
                Some(out)
            }
        };
        let built = match counts {
            Some(c) => ConfidenceSet::from_counts(kind, inst.transitions(), &c, &radius, modification),
            None if modification == Modification::None => ConfidenceSet::new(kind, inst.transitions().to_vec(), radius),
            None => return Err(invalid("confidence.counts: required when a modification is requested")),
        };
        built.map_err(|e| invalid(format!("confidence: {e}")))
    }
}

/// Parse and build in one step.
pub fn decode(text: &str) -> Result<(SspInstance, Option<ConfidenceSet>), CliError> {
    InstanceFile::parse(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_name_the_field() {
        let text = r#"{"num_states": 1, "actions": [[0]], "costs": {}, "transitions": {"0,0": [0.5]}}"#;
        match decode(text) {
            Err(CliError::Validation(m)) => assert!(m.contains("costs") && m.contains("0,0"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = "{\n  \"num_states\": 1,\n  \"actions\": [[0]]\n  \"costs\": {}\n}";
        match decode(text) {
            Err(CliError::Parse(m)) => assert!(m.starts_with("line 4"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"num_states": 1, "actions": [[0]], "costs": {"0,0": 0.5}, "transitions": {"0,0": [1.5]}}"#;
        assert!(matches!(decode(text), Err(CliError::Validation(_))));
    }

    #[test]
    fn confidence_forms() {
        let text = r#"{"num_states": 1, "actions": [[3]], "costs": {"0,3": 0.5}, "transitions": {"0,3": [0.5]},
            "confidence": {"kind": "sup", "epsilon": {"0,3": 0.2}}}"#;
        let (_, conf) = decode(text).unwrap();
        let conf = conf.unwrap();
        assert_eq!(conf.kind, DivergenceKind::SupNorm);
        assert_eq!(conf.radius, vec![vec![0.2]]);
        let text = r#"{"num_states": 1, "actions": [[0]], "costs": {"0,0": 0.5}, "transitions": {"0,0": [1.0]},
            "confidence": {"kind": "l1", "epsilon": 0.1, "modification": "star", "counts": {"0,0": 3}}}"#;
        let (_, conf) = decode(text).unwrap();
        let conf = conf.unwrap();
        assert_eq!(conf.center, vec![vec![vec![0.75]]]);
        assert!((conf.radius[0][0] - 0.35).abs() < 1e-15);
        let text = r#"{"num_states": 1, "actions": [[0]], "costs": {"0,0": 0.5}, "transitions": {"0,0": [1.0]},
            "confidence": {"kind": "l1", "epsilon": 0.1, "modification": "plus"}}"#;
        assert!(matches!(decode(text), Err(CliError::Validation(_))));
    }
}
