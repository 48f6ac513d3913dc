//! Bundled instances and named figure grids.

use ssp_core::divergence::ConfidenceSet;
use ssp_core::two_state::TwoStateParams;
use ssp_core::SspInstance;

use crate::codec;
use crate::CliError;

/// `(name, JSON text)` for every bundled instance.
pub const CORPUS: &[(&str, &str)] = &[
    ("one-state", include_str!("../data/one_state.json")),
    ("chain", include_str!("../data/chain.json")),
    ("multi-action", include_str!("../data/multi_action.json")),
    ("benchmark", include_str!("../data/learning_benchmark.json")),
    ("trap", include_str!("../data/greedy_trap.json")),
    ("ex1", include_str!("../data/ex1.json")),
    ("slow", include_str!("../data/slow.json")),
    ("oscillation", include_str!("../data/oscillation.json")),
    ("witness", include_str!("../data/witness.json")),
    ("sup-table", include_str!("../data/sup_table.json")),
];

pub fn names() -> Vec<&'static str> {
    CORPUS.iter().map(|(n, _)| *n).collect()
}

pub fn text(name: &str) -> Result<&'static str, CliError> {
    CORPUS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Validation(format!("unknown preset \"{name}\" (known: {})", names().join(", "))))
}

pub fn load(name: &str) -> Result<(SspInstance, Option<ConfidenceSet>), CliError> {
    codec::decode(text(name)?)
}

/// Starting point, grid and trace settings for a dagger figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaggerPreset {
    pub instance: &'static str,
    pub x0: Option<[f64; 2]>,
    pub arrow_field: Option<(f64, f64, usize)>,
    pub trace: bool,
    /// Keep only this many trailing iterates of the trace.
    pub tail: Option<usize>,
}

pub fn dagger_preset(name: &str) -> Option<DaggerPreset> {
    let base = DaggerPreset { instance: "ex1", x0: None, arrow_field: None, trace: false, tail: None };
    match name {
        "fig2" => Some(DaggerPreset { arrow_field: Some((-0.1, 1.1, 6)), ..base }),
        "fig3" => Some(DaggerPreset { instance: "slow", arrow_field: Some((-1.0, 11.0, 6)), ..base }),
        "fig4" => Some(DaggerPreset { instance: "slow", x0: Some([11.1, 10.468]), trace: true, ..base }),
        "fig5" => Some(DaggerPreset { instance: "slow", x0: Some([11.1, 10.468]), trace: true, tail: Some(40), ..base }),
        "oscillation" => Some(DaggerPreset { instance: "oscillation", x0: Some([0.3, 0.363367]), trace: true, ..base }),
        _ => None,
    }
}

pub const DAGGER_PRESETS: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "oscillation"];

/// Single-policy two-state parameters of the named examples.
pub fn two_state_preset(name: &str) -> Option<TwoStateParams> {
    match name {
        "ex1" => Some(TwoStateParams::new(0.1, 0.89, 0.89, 0.1, [0.1, 0.9], [0.01, 0.01])),
        "slow" => Some(TwoStateParams::new(0.00001, 0.999, 0.999, 0.00001, [0.01, 0.01], [0.01, 0.01])),
        "oscillation" => Some(TwoStateParams::new(0.00001, 0.999, 0.999, 0.00001, [0.2, 0.1], [0.3, 0.1])),
        "witness" => Some(TwoStateParams::new(0.45, 0.45, 0.45, 0.45, [0.5, 0.5], [0.5, 0.5])),
        _ => None,
    }
}

pub const TWO_STATE_PRESETS: [&str; 4] = ["ex1", "slow", "oscillation", "witness"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::InstanceFile;
    use ssp_core::gen;

    #[test]
    fn corpus_decodes_and_round_trips() {
        for (name, text) in CORPUS {
            let file = InstanceFile::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let (inst, conf) = file.build().unwrap_or_else(|e| panic!("{name}: {e}"));
            let again = InstanceFile::parse(&file.to_json()).unwrap();
            assert_eq!(again, file, "{name}");
            let plain = InstanceFile::from_instance(&inst);
            assert_eq!(plain.build_instance().unwrap(), inst, "{name}");
            if let Some(c) = conf {
                assert_eq!(c.center.len(), inst.num_states());
            }
        }
    }

    #[test]
    fn learning_files_match_generators() {
        assert_eq!(load("benchmark").unwrap().0, gen::learning_benchmark());
        assert_eq!(load("trap").unwrap().0, gen::greedy_trap());
    }

    #[test]
    fn two_state_presets_match_files() {
        for name in TWO_STATE_PRESETS {
            let params = two_state_preset(name).unwrap();
            let (inst, conf) = load(name).unwrap();
            assert_eq!(params.instance().unwrap(), inst, "{name}");
            assert_eq!(params.confidence().unwrap(), conf.unwrap(), "{name}");
        }
        for name in DAGGER_PRESETS {
            assert!(load(dagger_preset(name).unwrap().instance).is_ok());
        }
    }
}
