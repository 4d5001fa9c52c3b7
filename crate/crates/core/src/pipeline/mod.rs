//! Two-stage line-flow control: train generator control, and if overloads
//! remain, train load control on the area around them. Trained policies are
//! applied to cases by greedy rollout.
//!
//! Output directory layout of [`run_msdrl`]:
//!
//! ```text
//! out/
//!   stage1/checkpoint.json  metrics.jsonl  case.json
//!   stage2/input_case.json  checkpoint.json  metrics.jsonl  case.json   (only when stage two runs)
//!   final_case.json
//!   summary.json
//! ```

pub mod config;
pub mod metrics;

pub use config::{LoadControlConfig, RunConfig, StageConfig};
pub use metrics::{read_metrics, write_metrics_csv, EpisodeRecord};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{assign_group, detect_overload_area, ActionSpec, AreaProposal, EpisodeConfig, GridEnv, PolicyBinding, Stage};
use crate::error::{Error, Result};
use crate::grid::{load_case, save_case, GridCase};
use crate::power_flow::SolverSettings;
use crate::sac::{AgentCheckpoint, ReplayBuffer, SacAgent, Transition};
use crate::security::{total_reward, RewardBreakdown, RewardConfig};

pub type PolicyCheckpoint = AgentCheckpoint<PolicyBinding>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    /// Physical values of the controlled elements after this step.
    pub setpoints_mw: Vec<f64>,
    pub r_total: f64,
    pub secure: bool,
}

/// Greedy rollout result.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Empty when the start case was already secure.
    pub trajectory: Vec<TrajectoryStep>,
    /// Sum of step rewards.
    pub greedy_return: f64,
    pub resolved: bool,
    /// Highest-reward case of the rollout, earliest on ties; the start case
    /// when it was already secure.
    pub final_case: GridCase,
    pub breakdown: RewardBreakdown,
}

impl Evaluation {
    pub fn steps(&self) -> usize {
        self.trajectory.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub stage: Stage,
    pub dir: PathBuf,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub episodes: usize,
    /// Episode after which the kept checkpoint was evaluated.
    pub best_episode: usize,
    pub resolved: bool,
    pub evaluation: Evaluation,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Deterministic rollout from reset until success or the step limit.
fn rollout(agent: &SacAgent, env: &mut GridEnv) -> Result<Evaluation> {
    env.freeze_normalizer(true);
    let mut obs = env.reset()?;
    let start = env.evaluate_current()?;
    if start.is_secure() {
        return Ok(Evaluation {
            trajectory: Vec::new(),
            greedy_return: 0.0,
            resolved: true,
            final_case: env.original_case().clone(),
            breakdown: start,
        });
    }
    // deterministic sampling draws no noise
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut trajectory = Vec::new();
    let mut best: Option<(GridCase, RewardBreakdown)> = None;
    let mut greedy_return = 0.0;
    loop {
        let action = agent.act(&obs, true, &mut unused)?;
        let s = env.step(&action)?;
        greedy_return += s.reward.r_total;
        trajectory.push(TrajectoryStep {
            step: env.steps(),
            setpoints_mw: env.action_spec().current_values(env.current_case()),
            r_total: s.reward.r_total,
            secure: s.success,
        });
        if best.as_ref().is_none_or(|(_, b)| s.reward.r_total > b.r_total) {
            best = Some((env.current_case().clone(), s.reward.clone()));
        }
        obs = s.observation;
        if s.done {
            let (final_case, breakdown) = best.expect("at least one step taken");
            return Ok(Evaluation {
                trajectory,
                greedy_return,
                resolved: s.success,
                final_case,
                breakdown,
            });
        }
    }
}

fn frozen_binding(env: &GridEnv) -> PolicyBinding {
    let mut b = env.binding();
    b.normalizer.frozen = true;
    b
}

/// Trains one stage on `env` and writes `checkpoint.json`, `metrics.jsonl`
/// and `case.json` into `dir`.
///
/// The kept checkpoint is the one with the best greedy evaluation: resolved
/// before unresolved, then higher return, then earlier episode. A start
/// case that is already secure needs no control; its episodes end at their
/// first step and the untrained agent is stored.
pub fn train_stage(
    config: &StageConfig,
    mut env: GridEnv,
    seed: u64,
    dir: &Path,
    record_wall_time: bool,
) -> Result<StageResult> {
    config.validate()?;
    create_dir(dir)?;
    let checkpoint_path = dir.join("checkpoint.json");
    let metrics_path = dir.join("metrics.jsonl");
    let stage = env.action_spec().stage;
    let mut log = BufWriter::new(fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?);
    let mut write_record = |r: &EpisodeRecord| -> Result<()> {
        log.write_all(metrics::to_json_line(r).as_bytes())
            .map_err(|e| Error::io(&metrics_path, e))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sac = config.sac.clone();
    sac.seed = seed;
    let mut agent = SacAgent::new(env.observation_spec().dim(), env.action_spec().dim(), sac, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.sac.buffer_capacity);

    env.reset()?;
    let start = env.evaluate_current()?;
    let mut best: Option<(usize, Evaluation)> = None;
    let mut episodes = 0;

    if start.is_secure() {
        let n = config.patience.min(config.max_episodes);
        for episode in 1..=n {
            write_record(&EpisodeRecord {
                episode,
                steps: 1,
                episode_return: 0.0,
                eval_return: (episode == n).then_some(0.0),
                wall_ms: record_wall_time.then_some(0),
            })?;
        }
        episodes = n;
        let mut eval_env = env.clone();
        best = Some((n, rollout(&agent, &mut eval_env)?));
        AgentCheckpoint::from_agent(&agent, frozen_binding(&env)).save(&checkpoint_path)?;
    } else {
        let mut streak = 0;
        for episode in 1..=config.max_episodes {
            let clock = Instant::now();
            let mut obs = env.reset()?;
            let (mut steps, mut ret) = (0, 0.0);
            let success = loop {
                let action = agent.act(&obs, false, &mut rng)?;
                let s = env.step(&action)?;
                buffer.push(Transition {
                    state: obs,
                    action,
                    reward: s.reward.r_total,
                    next_state: s.observation.clone(),
                    done: s.success,
                });
                agent.update(&buffer, &mut rng)?;
                steps += 1;
                ret += s.reward.r_total;
                obs = s.observation;
                if s.done {
                    break s.success;
                }
            };
            episodes = episode;
            streak = if success && steps == 1 { streak + 1 } else { 0 };
            let stop = streak >= config.patience || episode == config.max_episodes;

            let eval_return = if episode % config.eval_every == 0 || stop {
                let mut eval_env = env.clone();
                let ev = rollout(&agent, &mut eval_env)?;
                let improves = best
                    .as_ref()
                    .is_none_or(|(_, b)| (ev.resolved, ev.greedy_return) > (b.resolved, b.greedy_return));
                let r = ev.greedy_return;
                if improves {
                    AgentCheckpoint::from_agent(&agent, frozen_binding(&env)).save(&checkpoint_path)?;
                    info!("{stage} episode {episode}: greedy return {r:.6}, resolved {}", ev.resolved);
                    best = Some((episode, ev));
                }
                Some(r)
            } else {
                None
            };
            write_record(&EpisodeRecord {
                episode,
                steps,
                episode_return: ret,
                eval_return,
                wall_ms: record_wall_time.then(|| clock.elapsed().as_millis() as u64),
            })?;
            if stop {
                break;
            }
        }
    }
    log.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let (best_episode, evaluation) = best.expect("the last episode is always evaluated");
    save_case(&evaluation.final_case, dir.join("case.json"))?;
    Ok(StageResult {
        stage,
        dir: dir.to_path_buf(),
        checkpoint_path,
        metrics_path,
        episodes,
        best_episode,
        resolved: evaluation.resolved,
        evaluation,
    })
}

fn action_spec_for(case: &GridCase, binding: &PolicyBinding) -> Result<ActionSpec> {
    match binding.action.stage {
        Stage::GeneratorControl => ActionSpec::generator_control(case),
        Stage::LoadControl => {
            let group = binding
                .action
                .group
                .ok_or_else(|| Error::Checkpoint("load-control checkpoint without a group".into()))?;
            ActionSpec::load_control(case, group)
        }
    }
}

/// Greedy rollout of a checkpoint on `case`.
pub fn evaluate_policy(
    checkpoint: &PolicyCheckpoint,
    case: &GridCase,
    solver: &SolverSettings,
    reward: &RewardConfig,
    episode: &EpisodeConfig,
) -> Result<Evaluation> {
    let action = action_spec_for(case, &checkpoint.binding)?;
    let mut env = GridEnv::new(case.clone(), action, reward.clone(), solver.clone(), episode.clone())?;
    checkpoint.binding.check_compatible(&env)?;
    env.set_normalizer(checkpoint.binding.normalizer.clone())?;
    let agent = checkpoint.to_agent()?;
    rollout(&agent, &mut env)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplySummary {
    pub stage: Stage,
    pub steps: usize,
    pub resolved: bool,
    pub r_total: f64,
    pub overloaded_branches: Vec<u32>,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Loads a checkpoint, rolls it out greedily on the case at `case_in` and
/// writes the resulting case to `case_out`, also when violations remain.
pub fn apply_policy(
    checkpoint_path: &Path,
    case_in: &Path,
    case_out: &Path,
    solver: &SolverSettings,
    reward: &RewardConfig,
    episode: &EpisodeConfig,
) -> Result<ApplySummary> {
    let checkpoint = PolicyCheckpoint::load(checkpoint_path)?;
    let case = load_case(case_in)?;
    let ev = evaluate_policy(&checkpoint, &case, solver, reward, episode)?;
    save_case(&ev.final_case, case_out)?;
    Ok(ApplySummary {
        stage: checkpoint.binding.action.stage,
        steps: ev.steps(),
        resolved: ev.resolved,
        r_total: ev.breakdown.r_total,
        overloaded_branches: ev.breakdown.overloaded_branches(),
        trajectory: ev.trajectory,
    })
}

/// A case with a load-control group, and that group's id.
pub type GroupedCase = (GridCase, u32);

/// Case and group for load control: the configured group, or one detected
/// around the overloaded branches of `breakdown`. `None` when detection
/// finds fewer than two loads.
pub fn prepare_load_control(
    case: &GridCase,
    breakdown: &RewardBreakdown,
    config: &LoadControlConfig,
) -> Result<(Option<GroupedCase>, Option<AreaProposal>)> {
    if let Some(group) = config.group {
        ActionSpec::load_control(case, group)?;
        return Ok((Some((case.clone(), group)), None));
    }
    let proposal = detect_overload_area(case, breakdown, config.hop_radius);
    if proposal.loads.len() < 2 {
        return Ok((None, Some(proposal)));
    }
    let group = case.loads.iter().filter_map(|l| l.group).max().map_or(1, |g| g + 1);
    let grouped = assign_group(case, &proposal, group)?;
    Ok((Some((grouped, group)), Some(proposal)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Resolved,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownSummary {
    pub r_total: f64,
    pub r_base: f64,
    pub r_con: f64,
    pub any_violation: bool,
    pub overloaded_branches: Vec<u32>,
    pub diverged_contingencies: Vec<u32>,
}

impl From<&RewardBreakdown> for BreakdownSummary {
    fn from(b: &RewardBreakdown) -> Self {
        Self {
            r_total: b.r_total,
            r_base: b.r_base,
            r_con: b.r_con,
            any_violation: b.any_violation,
            overloaded_branches: b.overloaded_branches(),
            diverged_contingencies: b.diverged_contingencies.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub episodes: usize,
    pub best_episode: usize,
    pub resolved: bool,
    pub greedy_steps: usize,
    pub greedy_return: f64,
    pub result: BreakdownSummary,
    /// Paths relative to the output directory.
    pub checkpoint: String,
    pub metrics: String,
    pub case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub seed: u64,
    pub initial: BreakdownSummary,
    pub stages: Vec<StageSummary>,
    pub load_area: Option<AreaProposal>,
    /// Independent re-evaluation of `final_case.json`.
    #[serde(rename = "final")]
    pub final_result: BreakdownSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_case: GridCase,
    pub final_breakdown: RewardBreakdown,
    pub stages: Vec<StageResult>,
    pub summary: RunSummary,
}

fn stage_summary(r: &StageResult, name: &str) -> StageSummary {
    StageSummary {
        stage: r.stage,
        episodes: r.episodes,
        best_episode: r.best_episode,
        resolved: r.resolved,
        greedy_steps: r.evaluation.steps(),
        greedy_return: r.evaluation.greedy_return,
        result: (&r.evaluation.breakdown).into(),
        checkpoint: format!("{name}/checkpoint.json"),
        metrics: format!("{name}/metrics.jsonl"),
        case: format!("{name}/case.json"),
    }
}

/// Full two-stage run. Stage two runs only when the stage-one result still
/// has violations. An unresolved outcome is reported in the result, not as
/// an error.
pub fn run_msdrl(config: &RunConfig) -> Result<RunOutcome> {
    let out = &config.output_dir;
    create_dir(out)?;
    let case = load_case(&config.case)?;
    let initial = total_reward(&case, &config.reward, &config.solver)?;

    let env = GridEnv::new(
        case.clone(),
        ActionSpec::generator_control(&case)?,
        config.reward.clone(),
        config.solver.clone(),
        config.stage_one.episode.clone(),
    )?;
    let s1 = train_stage(&config.stage_one, env, config.stage_seed(0), &out.join("stage1"), config.record_wall_time)?;
    let mut current = s1.evaluation.final_case.clone();
    let after_one = total_reward(&current, &config.reward, &config.solver)?;
    info!("stage one: resolved {}, r_total {:.6}", s1.resolved, after_one.r_total);
    let mut stages = vec![s1];
    let mut load_area = None;

    if after_one.any_violation {
        let (prepared, proposal) = prepare_load_control(&current, &after_one, &config.load_control)?;
        load_area = proposal;
        if let Some((grouped, group)) = prepared {
            let dir = out.join("stage2");
            create_dir(&dir)?;
            save_case(&grouped, dir.join("input_case.json"))?;
            let env = GridEnv::new(
                grouped.clone(),
                ActionSpec::load_control(&grouped, group)?,
                config.reward.clone(),
                config.solver.clone(),
                config.stage_two.episode.clone(),
            )?;
            let s2 = train_stage(&config.stage_two, env, config.stage_seed(1), &dir, config.record_wall_time)?;
            current = s2.evaluation.final_case.clone();
            stages.push(s2);
        }
    }

    let final_breakdown = total_reward(&current, &config.reward, &config.solver)?;
    let status = if final_breakdown.any_violation {
        RunStatus::Unresolved
    } else {
        RunStatus::Resolved
    };
    save_case(&current, out.join("final_case.json"))?;
    let summary = RunSummary {
        status,
        seed: config.seed,
        initial: (&initial).into(),
        stages: stages
            .iter()
            .zip(["stage1", "stage2"])
            .map(|(s, n)| stage_summary(s, n))
            .collect(),
        load_area,
        final_result: (&final_breakdown).into(),
    };
    let summary_path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;
    Ok(RunOutcome {
        status,
        final_case: current,
        final_breakdown,
        stages,
        summary,
    })
}

/// Trains a single stage on the configured case, writing into
/// `output_dir/stage1` or `output_dir/stage2`.
pub fn train_single(config: &RunConfig, stage: Stage) -> Result<StageResult> {
    let case = load_case(&config.case)?;
    match stage {
        Stage::GeneratorControl => {
            let env = GridEnv::new(
                case.clone(),
                ActionSpec::generator_control(&case)?,
                config.reward.clone(),
                config.solver.clone(),
                config.stage_one.episode.clone(),
            )?;
            train_stage(&config.stage_one, env, config.stage_seed(0), &config.output_dir.join("stage1"), config.record_wall_time)
        }
        Stage::LoadControl => {
            let breakdown = total_reward(&case, &config.reward, &config.solver)?;
            let (prepared, _) = prepare_load_control(&case, &breakdown, &config.load_control)?;
            let (grouped, group) =
                prepared.ok_or_else(|| Error::Config("no load group configured and none detected".into()))?;
            let dir = config.output_dir.join("stage2");
            create_dir(&dir)?;
            save_case(&grouped, dir.join("input_case.json"))?;
            let env = GridEnv::new(
                grouped.clone(),
                ActionSpec::load_control(&grouped, group)?,
                config.reward.clone(),
                config.solver.clone(),
                config.stage_two.episode.clone(),
            )?;
            train_stage(&config.stage_two, env, config.stage_seed(1), &dir, config.record_wall_time)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus;
    use crate::sac::SacConfig;

    fn small_stage(max_episodes: usize) -> StageConfig {
        StageConfig {
            max_episodes,
            eval_every: 2,
            patience: 3,
            episode: EpisodeConfig { max_steps: 5 },
            sac: SacConfig {
                hidden: vec![8],
                batch_size: 4,
                buffer_capacity: 100,
                ..Default::default()
            },
        }
    }

    fn controllable_two_bus() -> GridCase {
        let mut c = two_bus();
        c.generators[0].controllable = true;
        c
    }

    #[test]
    fn secure_start_is_resolved_without_control() {
        let dir = tempfile::tempdir().unwrap();
        let case = controllable_two_bus();
        let env = GridEnv::new(
            case.clone(),
            ActionSpec::generator_control(&case).unwrap(),
            RewardConfig::default(),
            SolverSettings::default(),
            EpisodeConfig::default(),
        )
        .unwrap();
        let r = train_stage(&small_stage(50), env, 1, dir.path(), false).unwrap();
        assert!(r.resolved);
        assert_eq!(r.episodes, 3);
        assert_eq!(r.evaluation.final_case, case);
        let log = read_metrics(&r.metrics_path).unwrap();
        assert!(log.iter().all(|e| e.steps == 1 && e.episode_return == 0.0));
    }

    #[test]
    fn unrelievable_overload_runs_full_budget() {
        // the single line is radial, so generator control cannot help
        let dir = tempfile::tempdir().unwrap();
        let mut case = controllable_two_bus();
        case.branches[0].p_limit_mw = 40.0;
        let env = GridEnv::new(
            case.clone(),
            ActionSpec::generator_control(&case).unwrap(),
            RewardConfig::default(),
            SolverSettings::default(),
            EpisodeConfig { max_steps: 5 },
        )
        .unwrap();
        let r = train_stage(&small_stage(4), env, 1, dir.path(), false).unwrap();
        assert!(!r.resolved);
        assert_eq!(r.episodes, 4);
        let log = read_metrics(&r.metrics_path).unwrap();
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|e| e.steps == 5 && e.wall_ms.is_none()));
        assert_eq!(log.iter().filter(|e| e.eval_return.is_some()).count(), 2);
        assert!(dir.path().join("checkpoint.json").is_file());
        assert!(dir.path().join("case.json").is_file());
    }

    #[test]
    fn evaluation_rejects_other_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut case = controllable_two_bus();
        case.branches[0].p_limit_mw = 40.0;
        let env = GridEnv::new(
            case.clone(),
            ActionSpec::generator_control(&case).unwrap(),
            RewardConfig::default(),
            SolverSettings::default(),
            EpisodeConfig::default(),
        )
        .unwrap();
        let r = train_stage(&small_stage(1), env, 1, dir.path(), false).unwrap();
        let ckpt = PolicyCheckpoint::load(&r.checkpoint_path).unwrap();
        let mut other = case.clone();
        other.generators[0].p_max_mw = 300.0;
        let err = evaluate_policy(&ckpt, &other, &SolverSettings::default(), &RewardConfig::default(), &EpisodeConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Incompatible { what: "action layout", .. }));
    }
}
