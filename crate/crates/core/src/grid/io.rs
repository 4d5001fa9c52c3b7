//! `gridcase-v1` JSON files.
//!
//! ```json
//! {
//!   "version": "gridcase-v1",
//!   "base_mva": 100.0,
//!   "study_zone": null,
//!   "buses":      [{"id": 1, "kind": "slack", "v_mag": 1.0, "v_ang_deg": 0.0,
//!                   "v_min": 0.95, "v_max": 1.05, "g_sh": 0.0, "b_sh": 0.0}],
//!   "generators": [{"id": 1, "bus_id": 1, "p_mw": 0.0, "q_mvar": 0.0,
//!                   "p_min_mw": 0.0, "p_max_mw": 100.0, "q_min_mvar": -50.0,
//!                   "q_max_mvar": 50.0, "controllable": false}],
//!   "loads":      [{"id": 1, "bus_id": 2, "p_mw": 50.0, "q_mvar": 20.0,
//!                   "group": 1, "swing": false}],
//!   "branches":   [{"id": 1, "from_bus": 1, "to_bus": 2, "r": 0.0, "x": 0.1,
//!                   "b_ch": 0.0, "tap": 1.0, "p_limit_mw": 100.0,
//!                   "s_max_mva": 120.0, "in_service": true}]
//! }
//! ```
//!
//! Unknown keys are rejected. `g_sh`, `b_sh`, `b_ch`, `tap`, `in_service`,
//! `controllable`, `zone`, `group` and `swing` may be omitted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, Generator, GridCase, Load};
use crate::error::{Error, Result};

pub const CASE_VERSION: &str = "gridcase-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    version: String,
    base_mva: f64,
    #[serde(default)]
    study_zone: Option<u32>,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    loads: Vec<Load>,
    branches: Vec<Branch>,
}

pub fn parse_case(text: &str, origin: &Path) -> Result<GridCase> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| Error::json(origin, &e))?;
    if file.version != CASE_VERSION {
        return Err(Error::Validation(format!(
            "unsupported case version {:?}, expected {CASE_VERSION:?}",
            file.version
        )));
    }
    let case = GridCase {
        base_mva: file.base_mva,
        study_zone: file.study_zone,
        buses: file.buses,
        generators: file.generators,
        loads: file.loads,
        branches: file.branches,
    };
    case.validate()?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text, path)
}

/// Canonical text form: fixed key order, shortest round-trip float
/// formatting, trailing newline.
pub fn to_canonical_string(case: &GridCase) -> String {
    let file = CaseFile {
        version: CASE_VERSION.to_string(),
        base_mva: case.base_mva,
        study_zone: case.study_zone,
        buses: case.buses.clone(),
        generators: case.generators.clone(),
        loads: case.loads.clone(),
        branches: case.branches.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("case serializes");
    text.push('\n');
    text
}

pub fn save_case(case: &GridCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_canonical_string(case)).map_err(|e| Error::io(path, e))
}
