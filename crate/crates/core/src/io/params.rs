use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_file, RunHeader};
use crate::error::{Error, Result};
use crate::model::{validate_params, LabelSpace, ModelKind, ModelParams, Stoch2};
use crate::scalar::Scalar;

/// Rows whose sum is off by more than this are left for validation to reject.
const RENORMALIZE_BAND: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    #[serde(default)]
    run: Option<RunHeader>,
    kind: ModelKind,
    phases: Vec<String>,
    tools: Vec<String>,
    alpha: Vec<f64>,
    phase_trans: Vec<Vec<f64>>,
    tool_init: Vec<Vec<f64>>,
    tool_trans: Vec<Vec<Stoch2<f64>>>,
    phase_confusion: Vec<Vec<f64>>,
    tool_confusion: Vec<Stoch2<f64>>,
}

/// Self-describing JSON document; floats use the shortest representation
/// that reads back to the same bits.
pub fn params_to_json(params: &ModelParams<f64>, header: Option<&RunHeader>) -> String {
    let doc = ParamsDoc {
        run: header.cloned(),
        kind: params.kind,
        phases: params.space.phases().to_vec(),
        tools: params.space.tools().to_vec(),
        alpha: params.alpha.clone(),
        phase_trans: params.phase_trans.clone(),
        tool_init: params.tool_init.clone(),
        tool_trans: params.tool_trans.clone(),
        phase_confusion: params.phase_confusion.clone(),
        tool_confusion: params.tool_confusion.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("params serialize")
}

fn renormalize(row: &mut [f64]) {
    if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return;
    }
    let s: f64 = row.iter().sum();
    let off = (s - 1.0).abs();
    if off > <f64 as Scalar>::sum_tolerance() && off <= RENORMALIZE_BAND {
        row.iter_mut().for_each(|x| *x /= s);
    }
}

/// Parses and validates a params document. `path` only labels errors.
pub fn params_from_json(text: &str, path: &Path) -> Result<ModelParams<f64>> {
    let mut doc: ParamsDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let space = LabelSpace::new(doc.phases, doc.tools).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    renormalize(&mut doc.alpha);
    let matrices = doc
        .phase_trans
        .iter_mut()
        .chain(doc.phase_confusion.iter_mut());
    matrices.for_each(|r| renormalize(r));
    let pairs = doc
        .tool_trans
        .iter_mut()
        .flatten()
        .chain(doc.tool_confusion.iter_mut());
    pairs
        .flat_map(|m| m.iter_mut())
        .for_each(|r| renormalize(r));
    let params = ModelParams {
        kind: doc.kind,
        space,
        alpha: doc.alpha,
        phase_trans: doc.phase_trans,
        tool_init: doc.tool_init,
        tool_trans: doc.tool_trans,
        phase_confusion: doc.phase_confusion,
        tool_confusion: doc.tool_confusion,
    };
    let violations = validate_params(&params);
    if violations.is_empty() {
        Ok(params)
    } else {
        Err(Error::Validation {
            path: path.into(),
            violations,
        })
    }
}

pub fn save_params(path: &Path, params: &ModelParams<f64>, header: &RunHeader) -> Result<()> {
    let text = params_to_json(params, Some(header));
    write_file(path, |w| writeln!(w, "{text}"))
}

pub fn load_params(path: &Path) -> Result<ModelParams<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    params_from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_init;

    fn tmp(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        (dir, p)
    }

    #[test]
    fn random_init_round_trips_bit_exactly() {
        let (_d, path) = tmp("p.json");
        for kind in [
            ModelKind::Coupled,
            ModelKind::ToolOnly,
            ModelKind::PhaseOnly,
        ] {
            let k = if kind == ModelKind::PhaseOnly { 0 } else { 3 };
            let space = LabelSpace::numbered(4, k).unwrap();
            for seed in 0..5 {
                let p = random_init::<f64>(&space, kind, seed).unwrap();
                save_params(&path, &p, &RunHeader::new("test", Some(seed))).unwrap();
                let q = load_params(&path).unwrap();
                let bits = |m: &ModelParams<f64>| params_to_json(m, None);
                assert_eq!(bits(&p), bits(&q));
                assert_eq!(p, q);
            }
        }
    }

    fn edited(row0: [f64; 2]) -> String {
        let space = LabelSpace::numbered(2, 1).unwrap();
        let mut p = crate::model::uniform_init::<f64>(&space, ModelKind::Coupled).unwrap();
        p.phase_trans[0] = row0.to_vec();
        params_to_json(&p, None)
    }

    #[test]
    fn row_sum_far_from_one_is_rejected() {
        match params_from_json(&edited([0.4, 0.5]), Path::new("p.json")) {
            Err(Error::Validation { violations, .. }) => {
                assert_eq!(violations.len(), 1);
                assert_eq!(violations[0].path, "phase_trans row 0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_sum_inside_band_is_renormalized() {
        let p = params_from_json(&edited([0.5, 0.5 + 1e-8]), Path::new("p.json")).unwrap();
        let s: f64 = p.phase_trans[0].iter().sum();
        assert!((s - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            params_from_json("{\n\"kind\": ", Path::new("p.json")),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
