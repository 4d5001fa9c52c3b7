use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GeneratorControl,
    LoadControl,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::GeneratorControl => "generator_control",
            Stage::LoadControl => "load_control",
        })
    }
}

/// Controlled elements and their physical ranges in MW.
///
/// Generator control acts on every controllable generator over
/// `[p_min, p_max]`. Load control acts on the non-swing loads of one group
/// over `[0, group total]`; the swing load absorbs the residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub stage: Stage,
    pub group: Option<u32>,
    /// Generator or load ids, in case order.
    pub element_ids: Vec<u32>,
    pub lower_mw: Vec<f64>,
    pub upper_mw: Vec<f64>,
}

impl ActionSpec {
    pub fn generator_control(case: &GridCase) -> Result<Self> {
        let gens: Vec<_> = case.controllable_generators().collect();
        if gens.is_empty() {
            return Err(Error::Config("case has no controllable generators".into()));
        }
        Ok(Self {
            stage: Stage::GeneratorControl,
            group: None,
            element_ids: gens.iter().map(|g| g.id).collect(),
            lower_mw: gens.iter().map(|g| g.p_min_mw).collect(),
            upper_mw: gens.iter().map(|g| g.p_max_mw).collect(),
        })
    }

    pub fn load_control(case: &GridCase, group: u32) -> Result<Self> {
        let members: Vec<_> = case.group_loads(group).collect();
        if !members.iter().any(|l| l.swing) {
            return Err(Error::UnknownGroup(group));
        }
        let total: f64 = members.iter().map(|l| l.p_mw).sum();
        let ids: Vec<u32> = members.iter().filter(|l| !l.swing).map(|l| l.id).collect();
        if ids.is_empty() {
            return Err(Error::Config(format!("load group {group} has no loads besides its swing load")));
        }
        Ok(Self {
            stage: Stage::LoadControl,
            group: Some(group),
            lower_mw: vec![0.0; ids.len()],
            upper_mw: vec![total; ids.len()],
            element_ids: ids,
        })
    }

    pub fn dim(&self) -> usize {
        self.element_ids.len()
    }

    /// Affine map from `[−1, 1]` to each element's range; inputs outside
    /// `[−1, 1]` are clipped first.
    pub fn to_physical(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.dim() {
            return Err(Error::Dimension {
                what: "action",
                expected: self.dim(),
                got: action.len(),
            });
        }
        Ok(action
            .iter()
            .zip(self.lower_mw.iter().zip(&self.upper_mw))
            .map(|(a, (lo, hi))| {
                let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
                lo + 0.5 * (a + 1.0) * (hi - lo)
            })
            .collect())
    }

    /// Inverse of [`to_physical`](Self::to_physical); degenerate ranges map
    /// to 0.
    pub fn to_normalized(&self, physical_mw: &[f64]) -> Vec<f64> {
        physical_mw
            .iter()
            .zip(self.lower_mw.iter().zip(&self.upper_mw))
            .map(|(p, (lo, hi))| {
                if hi > lo {
                    (2.0 * (p - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Current physical values of the controlled elements in `case`.
    pub fn current_values(&self, case: &GridCase) -> Vec<f64> {
        self.element_ids
            .iter()
            .map(|&id| match self.stage {
                Stage::GeneratorControl => case.generators.iter().find(|g| g.id == id).map_or(0.0, |g| g.p_mw),
                Stage::LoadControl => case.loads.iter().find(|l| l.id == id).map_or(0.0, |l| l.p_mw),
            })
            .collect()
    }
}

/// Observation layout: monitored branch flows, then bus voltage magnitudes,
/// then the controlled generator outputs or load demands. Flows, voltages and
/// powers are per-unit on the case base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    pub stage: Stage,
    pub branch_ids: Vec<u32>,
    pub bus_ids: Vec<u32>,
    pub element_ids: Vec<u32>,
}

impl ObservationSpec {
    pub fn new(case: &GridCase, monitored_branches: Vec<u32>, action: &ActionSpec) -> Self {
        Self {
            stage: action.stage,
            branch_ids: monitored_branches,
            bus_ids: case.monitored_bus_ids(),
            element_ids: action.element_ids.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.branch_ids.len() + self.bus_ids.len() + self.element_ids.len()
    }
}
