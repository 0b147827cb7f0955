//! `forage` — arena generation, training, evaluation rollouts, replay
//! verification, and the analysis pipelines (decoding, GLM, metric panels,
//! segmentation, curve export), all driven by one TOML run config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use forage_core::behavior::{
    detect_patches, extract_choice_events, fit_glm_logistic, metric_panel, segment_movement,
    ChoiceParams, GlmOptions, SegmentParams,
};
use forage_core::config::RunConfig;
use forage_core::decoding::{horizon_sweep, Frame};
use forage_core::net::{checkpoint_load, checkpoint_manifest};
use forage_core::ppo::{evaluate, train, EvalConfig, PolicyMode};
use forage_core::telemetry::{read_all_logs, read_log, replay_verify};
use forage_core::worldgen::{generate_arena, ArenaFile};

#[derive(Parser)]
#[command(name = "forage", version, about = "ForageWorld simulator, trainer and analysis toolkit")]
struct Cli {
    /// Bound worker parallelism inside a subcommand.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Arena side length override.
    #[arg(long)]
    map_size: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.train.seed = seed;
        }
        if let Some(size) = self.map_size {
            config.env.map_size = size;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an arena and write it as structured JSON.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent into a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a checkpoint (or the random policy) on held-out arenas with
    /// full telemetry logging.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint directory; omit for the uniform-random policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Greedy action selection instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Log every k-th hidden state.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Optional step cap per episode.
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate a log from its embedded seeds and verify every
    /// environment field.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Ridge-decode position from logged hidden states across offsets.
    Decode {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory of episode logs.
        #[arg(long)]
        logs: PathBuf,
        /// Offsets, e.g. "-100..100:10" or "-50,0,50".
        #[arg(long, allow_hyphen_values = true)]
        dts: Option<String>,
        #[arg(long, default_value = "allo")]
        frame: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the revisitation-choice GLM over one or more agents' log dirs.
    Glm {
        #[command(flatten)]
        config: ConfigArgs,
        /// One directory per agent.
        #[arg(long, num_args = 1.., required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Behavioral metric panel, one row per run directory.
    Metrics {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Movement-phase segmentation of one episode log.
    Segment {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// EMA-smooth a training curve file.
    Export {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory containing curves.csv (or the file itself).
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        ema_halflife: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Resolve an output path against FORAGE_OUT_ROOT when it is relative.
fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("FORAGE_OUT_ROOT") {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_owned(),
    }
}

fn parse_dts(spec: &str) -> anyhow::Result<Vec<i64>> {
    let spec = spec.trim();
    if let Some((range, step)) = spec.split_once(':') {
        let (lo, hi) = range
            .split_once("..")
            .context("range must look like lo..hi:step")?;
        let lo: i64 = lo.trim().parse()?;
        let hi: i64 = hi.trim().parse()?;
        let step: i64 = step.trim().parse()?;
        if step <= 0 || hi < lo {
            bail!("bad dt range {spec}");
        }
        Ok((lo..=hi).step_by(step as usize).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<i64>().map_err(Into::into))
            .collect()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Gen { config, out } => {
            let config = config.resolve()?;
            let layout = generate_arena(config.seed, &config.env)?;
            let file = ArenaFile::from_layout(&layout, &config.env);
            let out = out_path(&out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, serde_json::to_string_pretty(&file)?)?;
            println!(
                "arena seed {} ({}x{}, {} spawn points, {} lake cells, {} retries) -> {}",
                config.seed,
                layout.grid.width,
                layout.grid.height,
                layout.cow_spawn_points.len(),
                layout.lake_cells.len(),
                layout.retries,
                out.display()
            );
        }
        Command::Train { config, out } => {
            let config = config.resolve()?;
            let out = out_path(&out);
            config.write_echo(&out)?;
            let report = train(&config.env, &config.train, &out)?;
            println!(
                "trained {} iterations ({} env steps); return_mean {:.3}, ep_len_mean {:.1}",
                report.iterations, report.env_steps, report.return_mean, report.ep_len_mean
            );
            println!("curves: {}", report.curve_path.display());
            println!("final checkpoint: {}", report.final_checkpoint.display());
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            greedy,
            stride,
            max_steps,
            out,
        } => {
            let config = config.resolve()?;
            let out = out_path(&out);
            let eval_config = EvalConfig {
                n_episodes: episodes,
                seed: config.seed,
                policy: if checkpoint.is_none() {
                    PolicyMode::Random
                } else if greedy {
                    PolicyMode::Greedy
                } else {
                    PolicyMode::Sample
                },
                hidden_stride: stride,
                max_steps,
            };
            let (params, checkpoint_id) = match &checkpoint {
                Some(dir) => {
                    let manifest = checkpoint_manifest(dir)?;
                    let (params, step) = checkpoint_load(dir, &manifest.config)?;
                    (Some(params), format!("iter_{step:06}"))
                }
                None => (None, "random".to_owned()),
            };
            config.write_echo(&out)?;
            let (summary, _) = evaluate(
                params.as_ref(),
                &config.env,
                &eval_config,
                Some(&out),
                &checkpoint_id,
            )?;
            println!(
                "{} episodes ({}): return {:.3} +/- {:.3}, length {:.1} +/- {:.1}",
                summary.n_episodes,
                checkpoint_id,
                summary.mean_return,
                summary.ci95_return,
                summary.mean_length,
                summary.ci95_length
            );
            println!(
                "rates: eat {:.4}, drink {:.4}, sleep {:.4}",
                summary.eat_rate, summary.drink_rate, summary.sleep_rate
            );
        }
        Command::Replay { log } => {
            let log = read_log(&log)?;
            replay_verify(&log)?;
            println!(
                "episode {:016x}: {} records replay byte-exactly",
                log.header.episode_id,
                log.records.len()
            );
        }
        Command::Decode {
            config,
            logs,
            dts,
            frame,
            out,
        } => {
            let config = config.resolve()?;
            let frame = match frame.as_str() {
                "allo" | "allocentric" => Frame::Allocentric,
                "ego" | "egocentric" => Frame::Egocentric,
                other => bail!("unknown frame `{other}` (use allo or ego)"),
            };
            let dts = match dts {
                Some(spec) => parse_dts(&spec)?,
                None => config.analysis.dts.clone(),
            };
            let episode_logs = read_all_logs(&logs)?;
            if episode_logs.is_empty() {
                bail!("no logs found under {}", logs.display());
            }
            let rows = horizon_sweep(&episode_logs, &dts, frame, &config.analysis.alpha_grid)?;
            let out = out_path(&out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut text = String::new();
            text.push_str("# forage-decode v1\n");
            text.push_str(&format!("# frame: {frame:?}\n"));
            text.push_str("# target semantics: allocentric = displacement from episode start at t+dt; egocentric = displacement from t to t+dt rotated into the body frame at t (forward = +y)\n");
            text.push_str("# baseline: current position plus train-mean displacement over |dt| steps; chance: train-mean target (position-uninformed)\n");
            text.push_str("# rmse convention: per-coordinate, sqrt(mean(||err||^2 / 2))\n");
            text.push_str("dt,rmse,baseline,chance,alpha,n_train,n_test\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.dt, r.rmse, r.baseline, r.chance, r.alpha, r.n_train, r.n_test
                ));
            }
            std::fs::write(&out, text)?;
            println!(
                "decoded {} offsets over {} episodes -> {}",
                rows.len(),
                episode_logs.len(),
                out.display()
            );
        }
        Command::Glm { config, logs, out } => {
            let config = config.resolve()?;
            let params = ChoiceParams {
                decision_offset: config.analysis.decision_offset,
                revisit_gap: config.analysis.revisit_gap,
                drink_radius: config.analysis.drink_radius,
            };
            let mut events = Vec::new();
            for (agent_id, dir) in logs.iter().enumerate() {
                let episode_logs = read_all_logs(dir)?;
                for log in &episode_logs {
                    let layout = generate_arena(log.header.arena_seed, &log.header.env)?;
                    let patches = detect_patches(&layout, config.analysis.patch_radius);
                    events.extend(extract_choice_events(log, &patches, agent_id, &params));
                }
            }
            if events.is_empty() {
                bail!("no revisitation choice events found");
            }
            let fit = fit_glm_logistic(&events, &GlmOptions::default())?;
            let out = out_path(&out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut text = String::new();
            text.push_str("# forage-glm v1\n");
            text.push_str(&format!(
                "# n_obs: {}, n_events: {}, converged: {}, iterations: {}, log_likelihood: {}\n",
                fit.n_obs, fit.n_events, fit.converged, fit.iterations, fit.log_likelihood
            ));
            text.push_str("# recency sign: larger = visited longer ago (a negative coefficient means recently visited patches are preferred)\n");
            for w in &fit.warnings {
                text.push_str(&format!("# warning: {w}\n"));
            }
            text.push_str("predictor,coefficient,std_error,z,p,stars,vif\n");
            for j in 0..fit.predictor_names.len() {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fit.predictor_names[j],
                    fit.coefficients[j],
                    fit.std_errors[j],
                    fit.z_scores[j],
                    fit.p_values[j],
                    fit.stars[j],
                    fit.vif[j]
                ));
            }
            for (agent, intercept) in &fit.agent_intercepts {
                text.push_str(&format!("agent_{agent},{intercept},,,,,\n"));
            }
            std::fs::write(&out, text)?;
            println!(
                "GLM over {} events ({} rows) -> {}",
                fit.n_events,
                fit.n_obs,
                out.display()
            );
        }
        Command::Metrics { config, runs, out } => {
            let config = config.resolve()?;
            let out = out_path(&out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut text = String::new();
            text.push_str("# forage-metrics v1\n");
            text.push_str("run,n_episodes,spatial_uncertainty,early_distance,late_distance,occupancy_entropy,angular_variance,predator_exposure,tool_rate,mean_food,mean_drink,eat_rate,drink_rate,sleep_rate\n");
            for dir in &runs {
                let episode_logs = read_all_logs(dir)?;
                if episode_logs.is_empty() {
                    bail!("no logs under {}", dir.display());
                }
                let row = metric_panel(&episode_logs, config.analysis.bin_size);
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    dir.display(),
                    row.n_episodes,
                    row.spatial_uncertainty,
                    row.early_distance,
                    row.late_distance,
                    row.occupancy_entropy,
                    row.angular_variance,
                    row.predator_exposure,
                    row.tool_rate,
                    row.mean_food,
                    row.mean_drink,
                    row.eat_rate,
                    row.drink_rate,
                    row.sleep_rate
                ));
            }
            std::fs::write(&out, text)?;
            println!("metric panel over {} runs -> {}", runs.len(), out.display());
        }
        Command::Segment { config, log, out } => {
            let config = config.resolve()?;
            let episode = read_log(&log)?;
            let seg = segment_movement(
                &episode,
                &SegmentParams {
                    window: config.analysis.segment_window,
                    k: config.analysis.segment_k,
                    restarts: 50,
                    seed: config.seed,
                },
            )?;
            let out = out_path(&out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut text = String::new();
            text.push_str("# forage-segment v1\n");
            text.push_str(&format!(
                "# method: {} (simplified stand-in for Bayesian movement segmentation)\n",
                seg.method
            ));
            text.push_str(&format!("# degenerate: {}\n", seg.degenerate));
            for (label, (step, turn)) in seg.state_means.iter().enumerate() {
                text.push_str(&format!(
                    "# state {}: mean_step_length {step:.4}, mean_abs_turning {turn:.4}\n",
                    label + 1
                ));
            }
            text.push_str("t,state\n");
            for (t, label) in seg.labels.iter().enumerate() {
                text.push_str(&format!("{t},{label}\n"));
            }
            std::fs::write(&out, text)?;
            println!(
                "segmented {} steps into {} states -> {}",
                seg.labels.len(),
                seg.state_means.len(),
                out.display()
            );
        }
        Command::Export {
            config,
            curves,
            ema_halflife,
            out,
        } => {
            let config = config.resolve()?;
            let halflife = ema_halflife.unwrap_or(config.analysis.ema_halflife);
            if halflife <= 0.0 {
                bail!("ema halflife must be > 0");
            }
            let curve_path = if curves.is_dir() {
                curves.join("curves.csv")
            } else {
                curves.clone()
            };
            let text = std::fs::read_to_string(&curve_path)
                .with_context(|| format!("reading {}", curve_path.display()))?;
            let mut lines = text.lines();
            let header = lines.next().context("empty curve file")?;
            let columns: Vec<&str> = header.split(',').collect();
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for line in lines {
                if line.is_empty() {
                    continue;
                }
                rows.push(
                    line.split(',')
                        .map(|c| c.parse::<f64>().unwrap_or(f64::NAN))
                        .collect(),
                );
            }
            // Time-weighted EMA over iterations: the weight halves every
            // `halflife` iterations; NaN gaps carry the previous state.
            let mut smoothed = rows.clone();
            let mut state: Vec<Option<f64>> = vec![None; columns.len()];
            let mut last_iter: Option<f64> = None;
            for (i, row) in rows.iter().enumerate() {
                let iter = row[0];
                let gap = last_iter.map_or(1.0, |l| (iter - l).max(1.0));
                let decay = 0.5f64.powf(gap / halflife);
                last_iter = Some(iter);
                for c in 2..columns.len() {
                    let x = row[c];
                    if x.is_nan() {
                        smoothed[i][c] = state[c].unwrap_or(f64::NAN);
                        continue;
                    }
                    let s = match state[c] {
                        Some(prev) => decay * prev + (1.0 - decay) * x,
                        None => x,
                    };
                    state[c] = Some(s);
                    smoothed[i][c] = s;
                }
            }
            let out = out_path(&out.unwrap_or_else(|| curve_path.with_extension("smoothed.csv")));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut text = String::new();
            text.push_str(&format!("# ema halflife: {halflife} iterations\n"));
            text.push_str(header);
            text.push('\n');
            for row in &smoothed {
                let cells: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(c, v)| {
                        if c < 2 {
                            format!("{}", *v as i64)
                        } else {
                            format!("{v}")
                        }
                    })
                    .collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(&out, text)?;
            println!("smoothed curves -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
