//! Line-flow control as an episodic MDP.
//!
//! Actions are absolute setpoints in `[−1, 1]^dim`, mapped affinely onto the
//! controlled elements' MW ranges and applied to the original case, so a
//! step depends only on the action. Each step re-solves the power flow and
//! scores the result with the N-1 security reward. An episode ends on the
//! first secure state or after `max_steps`.

mod area;
mod normalizer;
mod spaces;

pub use area::{assign_group, detect_overload_area, AreaProposal};
pub use normalizer::Normalizer;
pub use spaces::{ActionSpec, ObservationSpec, Stage};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_generator_setpoints, apply_load_group, GridCase};
use crate::power_flow::{solve, PowerFlowSolution, SolverSettings};
use crate::security::{breakdown_from_solution, build_contingency_list, ContingencyList, RewardBreakdown, RewardConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_steps: 50 }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// What a trained policy needs to act on a case: layouts and the
/// observation statistics it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBinding {
    pub observation: ObservationSpec,
    pub action: ActionSpec,
    pub normalizer: Normalizer,
}

impl PolicyBinding {
    /// Fails with [`Error::Incompatible`] naming the first layout that
    /// differs from `env`.
    pub fn check_compatible(&self, env: &GridEnv) -> Result<()> {
        if self.observation != env.observation {
            return Err(Error::Incompatible {
                what: "observation layout",
                expected: format!("{:?}", self.observation),
                got: format!("{:?}", env.observation),
            });
        }
        if self.action != env.action {
            return Err(Error::Incompatible {
                what: "action layout",
                expected: format!("{:?}", self.action),
                got: format!("{:?}", env.action),
            });
        }
        if self.normalizer.dim() != env.observation.dim() {
            return Err(Error::Incompatible {
                what: "normalizer width",
                expected: self.normalizer.dim().to_string(),
                got: env.observation.dim().to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: RewardBreakdown,
    pub done: bool,
    /// The new state is N-1 secure.
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct GridEnv {
    original: GridCase,
    current: GridCase,
    observation: ObservationSpec,
    action: ActionSpec,
    reward: RewardConfig,
    solver: SolverSettings,
    episode: EpisodeConfig,
    contingencies: ContingencyList,
    normalizer: Normalizer,
    steps: usize,
}

impl GridEnv {
    /// Fails unless the intact case converges.
    pub fn new(
        case: GridCase,
        action: ActionSpec,
        reward: RewardConfig,
        solver: SolverSettings,
        episode: EpisodeConfig,
    ) -> Result<Self> {
        case.validate()?;
        reward.validate()?;
        solver.validate()?;
        episode.validate()?;
        if action.dim() == 0 {
            return Err(Error::Config("empty action space".into()));
        }
        if !solve(&case, &solver)?.converged {
            return Err(Error::NotConverged);
        }
        let observation = ObservationSpec::new(&case, reward.monitored(&case), &action);
        let contingencies = build_contingency_list(&case, &reward);
        Ok(Self {
            normalizer: Normalizer::new(observation.dim()),
            current: case.clone(),
            original: case,
            observation,
            action,
            reward,
            solver,
            episode,
            contingencies,
            steps: 0,
        })
    }

    pub fn observation_spec(&self) -> &ObservationSpec {
        &self.observation
    }

    pub fn action_spec(&self) -> &ActionSpec {
        &self.action
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.dim() != self.observation.dim() {
            return Err(Error::Dimension {
                what: "normalizer",
                expected: self.observation.dim(),
                got: normalizer.dim(),
            });
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn freeze_normalizer(&mut self, frozen: bool) {
        self.normalizer.frozen = frozen;
    }

    pub fn original_case(&self) -> &GridCase {
        &self.original
    }

    pub fn current_case(&self) -> &GridCase {
        &self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn binding(&self) -> PolicyBinding {
        PolicyBinding {
            observation: self.observation.clone(),
            action: self.action.clone(),
            normalizer: self.normalizer.clone(),
        }
    }

    /// Restores the original case and returns its normalized observation.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        self.current = self.original.clone();
        self.steps = 0;
        let solution = solve(&self.current, &self.solver)?;
        let raw = self.raw_observation(&solution);
        self.normalizer.normalize(&raw)
    }

    /// Security reward of the current case.
    pub fn evaluate_current(&self) -> Result<RewardBreakdown> {
        let solution = solve(&self.current, &self.solver)?;
        breakdown_from_solution(&self.current, &solution, &self.contingencies, &self.reward, &self.solver)
    }

    /// The case an action would produce, without stepping.
    pub fn case_for_action(&self, action: &[f64]) -> Result<GridCase> {
        let values = self.action.to_physical(action)?;
        match self.action.stage {
            Stage::GeneratorControl => apply_generator_setpoints(&self.original, &values),
            Stage::LoadControl => {
                let group = self.action.group.expect("load control always has a group");
                apply_load_group(&self.original, group, &values)
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let case = self.case_for_action(action)?;
        let solution = solve(&case, &self.solver)?;
        let reward = breakdown_from_solution(&case, &solution, &self.contingencies, &self.reward, &self.solver)?;
        self.current = case;
        self.steps += 1;
        let raw = self.raw_observation(&solution);
        let observation = self.normalizer.normalize(&raw)?;
        let success = reward.is_secure();
        Ok(StepResult {
            observation,
            done: success || self.steps >= self.episode.max_steps,
            success,
            reward,
        })
    }

    /// Unnormalized observation of the current case. A diverged solve
    /// reports zero flows and flat voltages.
    fn raw_observation(&self, solution: &PowerFlowSolution) -> Vec<f64> {
        let base = self.current.base_mva;
        let mut obs = Vec::with_capacity(self.observation.dim());
        for id in &self.observation.branch_ids {
            let k = self.current.branch_position(*id).expect("monitored branch exists");
            obs.push(if solution.converged { solution.branch_p_from[k] } else { 0.0 });
        }
        let index = self.current.bus_index();
        for id in &self.observation.bus_ids {
            obs.push(if solution.converged { solution.v_mag[index[id]] } else { 1.0 });
        }
        obs.extend(self.action.current_values(&self.current).iter().map(|p| p / base));
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus;
    use crate::grid::Generator;

    fn env() -> GridEnv {
        let mut c = two_bus();
        c.generators.push(Generator {
            id: 2,
            bus_id: 2,
            p_mw: 20.0,
            q_mvar: 0.0,
            p_min_mw: 0.0,
            p_max_mw: 40.0,
            q_min_mvar: -10.0,
            q_max_mvar: 10.0,
            controllable: true,
        });
        c.generators[0].controllable = false;
        let action = ActionSpec::generator_control(&c).unwrap();
        GridEnv::new(c, action, RewardConfig::default(), SolverSettings::default(), EpisodeConfig::default()).unwrap()
    }

    #[test]
    fn resets_are_identical_when_frozen() {
        let mut e = env();
        e.freeze_normalizer(true);
        assert_eq!(e.reset().unwrap(), e.reset().unwrap());
        assert_eq!(e.reset().unwrap().len(), e.observation_spec().dim());
    }

    #[test]
    fn identity_action_reproduces_reset_state() {
        let mut e = env();
        e.freeze_normalizer(true);
        let obs0 = e.reset().unwrap();
        let step = e.step(&[0.0]).unwrap();
        // 20 MW is the midpoint of [0, 40]
        assert_eq!(step.observation, obs0);
        assert!(step.success && step.done);
        assert_eq!(e.current_case(), e.original_case());
    }

    #[test]
    fn lower_endpoint_sets_minimum() {
        let mut e = env();
        e.reset().unwrap();
        e.step(&[-1.0]).unwrap();
        assert_eq!(e.current_case().generators[1].p_mw, 0.0);
    }

    #[test]
    fn wrong_action_width_rejected() {
        let mut e = env();
        e.reset().unwrap();
        assert!(matches!(e.step(&[0.0, 0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn unsolvable_start_rejected() {
        let mut c = two_bus();
        c.loads[0].p_mw = 6000.0;
        c.generators[0].controllable = true;
        c.generators[0].p_max_mw = 10_000.0;
        let action = ActionSpec::generator_control(&c).unwrap();
        let err = GridEnv::new(c, action, RewardConfig::default(), SolverSettings::default(), EpisodeConfig::default());
        assert!(matches!(err, Err(Error::NotConverged)));
    }

    #[test]
    fn episode_limit_ends_episode() {
        let mut c = env().original_case().clone();
        c.branches[0].p_limit_mw = 10.0;
        let action = ActionSpec::generator_control(&c).unwrap();
        let mut e = GridEnv::new(
            c,
            action,
            RewardConfig::default(),
            SolverSettings::default(),
            EpisodeConfig { max_steps: 2 },
        )
        .unwrap();
        e.reset().unwrap();
        assert!(!e.step(&[-1.0]).unwrap().done);
        let last = e.step(&[-1.0]).unwrap();
        assert!(last.done && !last.success);
        assert!(last.reward.r_total < 0.0);
    }
}
