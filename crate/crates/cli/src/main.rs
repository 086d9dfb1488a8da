use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use overwatch_core::harness::{
    compare_methods, detect_overwatch, export_plotdata, read_trajectory_log, replay,
    restations_after_relocation, run_experiment, trajectory_from_log, validate_file, write_table,
    write_trajectory, ExperimentResult, ExperimentSpec, Method, Placement,
};
use overwatch_core::ppo::{read_policy, TrainConfig};
use overwatch_core::solvers::{solve_exact_cached, DiscreteInstance};
use overwatch_core::ScenarioConfig;

/// Risk-aware multi-robot traversal experiments.
#[derive(Parser, Debug)]
#[command(name = "overwatch", version)]
struct Cli {
    /// Scenario preset (m1, m2, m3, m1-small, corridor) or scenario file.
    #[arg(long, global = true, default_value = "m1")]
    scenario: String,
    /// Base seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Disable the on-disk oracle cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Override the scenario's robot count.
    #[arg(long, global = true)]
    robots: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out one method and log its trajectories.
    Simulate {
        #[arg(long, default_value = "overwatch")]
        method: Method,
        /// Policy file or run directory for learned methods.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a PPO learner per seed.
    Train {
        #[arg(long, default_value = "d-ppo")]
        method: Method,
        #[command(flatten)]
        training: TrainArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate saved policies without training.
    Evaluate {
        /// Policy file or run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve the discretized scenario exactly for one placement.
    Oracle {
        /// Comma-separated adversary positions (defaults to the scenario's).
        #[arg(long, value_delimiter = ',')]
        placement: Option<Vec<f64>>,
    },
    /// Build the method comparison table on one fixed placement.
    Compare {
        /// Comma-separated methods (defaults to all).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Run directory holding `<method>/seed-<s>/policy.bin` for learners.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        placement: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        training: TrainArgs,
    },
    /// Replay a trajectory log and report behavioral flags as JSON.
    CheckBehavior { log: PathBuf },
    /// Write chart-ready CSVs for a trajectory log.
    ExportPlots { log: PathBuf },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Comma-separated seeds (defaults to the base seed, or the training
    /// config's seed count for `train`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated fixed adversary positions; sampled per seed if absent.
    #[arg(long, value_delimiter = ',')]
    placement: Option<Vec<f64>>,
    /// Relocate an adversary mid-episode: STEP:ADVERSARY:POSITION, with the
    /// adversary numbered from 1.
    #[arg(long)]
    relocate: Option<String>,
    /// Keep hybrid speeds continuous during evaluation.
    #[arg(long)]
    no_snap: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the environment step budget per seed.
    #[arg(long)]
    steps: Option<usize>,
}

impl TrainArgs {
    fn load(&self) -> Result<TrainConfig> {
        let mut tc = match &self.config {
            Some(p) => TrainConfig::load(p)
                .with_context(|| format!("loading training config {}", p.display()))?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.steps {
            tc.total_steps = s;
        }
        tc.validate()?;
        Ok(tc)
    }
}

fn parse_relocation(text: &str, initial: Vec<f64>) -> Result<Placement> {
    let parts: Vec<&str> = text.split(':').collect();
    let [step, adv, pos] = parts[..] else {
        bail!("--relocate expects STEP:ADVERSARY:POSITION, got '{text}'");
    };
    let adversary: usize = adv.parse().context("relocation adversary")?;
    if adversary == 0 {
        bail!("adversaries are numbered from 1");
    }
    Ok(Placement::Relocate {
        initial,
        step: step.parse().context("relocation step")?,
        adversary: adversary - 1,
        position: pos.parse().context("relocation position")?,
    })
}

struct Ctx {
    cli: Cli,
    emitted: Vec<PathBuf>,
}

impl Ctx {
    fn config(&self) -> Result<ScenarioConfig> {
        let cfg = ScenarioConfig::resolve(&self.cli.scenario)
            .with_context(|| format!("resolving scenario '{}'", self.cli.scenario))?;
        let cfg = match self.cli.robots {
            Some(n) => cfg.with_robots(n),
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        (!self.cli.no_cache).then(|| self.cli.out.join("oracle-cache"))
    }

    fn spec(
        &self,
        method: Method,
        run: &RunArgs,
        default_seeds: Vec<u64>,
    ) -> Result<ExperimentSpec> {
        let cfg = self.config()?;
        let mut spec = ExperimentSpec::new(self.cli.scenario.clone(), method, self.cli.out.clone());
        spec.robots = self.cli.robots;
        spec.seeds = run.seeds.clone().unwrap_or(default_seeds);
        spec.cache_dir = self.cache_dir();
        spec.snap_speeds = !run.no_snap;
        spec.placement = match (&run.placement, &run.relocate) {
            (p, Some(r)) => {
                parse_relocation(r, p.clone().unwrap_or_else(|| cfg.default_placement()))?
            }
            (Some(p), None) => Placement::Fixed(p.clone()),
            (None, None) => Placement::Sampled,
        };
        Ok(spec)
    }

    fn record(&mut self, res: &ExperimentResult) {
        for run in &res.runs {
            self.emitted.push(run.log_path.clone());
            if run.curve.is_some() {
                let dir = run
                    .log_path
                    .parent()
                    .expect("log lives in a seed directory");
                self.emitted.push(dir.join("curve.csv"));
                self.emitted.push(dir.join("policy.bin"));
            }
        }
    }

    fn report(&mut self, res: &ExperimentResult) -> Result<()> {
        self.record(res);
        for run in &res.runs {
            println!(
                "seed {:>4}  return {:>12.6}  steps {:>4}  all_arrived {}",
                run.seed,
                run.trajectory.raw_return(),
                run.trajectory.len(),
                run.trajectory.all_arrived(&self.config()?)
            );
        }
        let table = write_table(&self.cli.out, vec![res.row.clone()])?;
        self.emitted
            .extend([table.text_path, table.csv_path, table.timings_path]);
        Ok(())
    }

    /// Scenario for a log whose robot count may differ from the preset.
    fn config_for_log(&self, log: &Path) -> Result<ScenarioConfig> {
        let cfg = self.config()?;
        if self.cli.robots.is_some() {
            return Ok(cfg);
        }
        let text =
            std::fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
        let (n, _) = overwatch_core::harness::log::log_dims(&text)?;
        Ok(if n != cfg.n_robots {
            cfg.with_robots(n)
        } else {
            cfg
        })
    }

    fn run(&mut self) -> Result<()> {
        let seed = self.cli.seed;
        match &self.cli.command {
            Command::Simulate {
                method,
                checkpoint,
                run,
            } => {
                if method.is_learned() && checkpoint.is_none() {
                    bail!("simulating {method} needs --checkpoint (use `train` to learn one)");
                }
                let mut spec = self.spec(*method, run, vec![seed])?;
                spec.checkpoint = checkpoint.clone();
                let res = run_experiment(&spec)?;
                self.report(&res)?;
            }
            Command::Train {
                method,
                training,
                run,
            } => {
                if !method.is_learned() {
                    bail!("{method} is not a learning method");
                }
                let tc = training.load()?;
                let defaults = (seed..seed + tc.seeds as u64).collect();
                let mut spec = self.spec(*method, run, defaults)?;
                std::fs::create_dir_all(&self.cli.out)?;
                let tc_path = self.cli.out.join("train.toml");
                tc.save(&tc_path)?;
                self.emitted.push(tc_path);
                spec.train = tc;
                let res = run_experiment(&spec)?;
                self.report(&res)?;
            }
            Command::Evaluate { checkpoint, run } => {
                let probe = if checkpoint.is_dir() {
                    find_policy(checkpoint)?
                } else {
                    checkpoint.clone()
                };
                let params = read_policy(&probe)?;
                let method = match params.variant {
                    overwatch_core::ppo::Variant::Discrete => Method::DPpo,
                    overwatch_core::ppo::Variant::Hybrid => Method::HPpo,
                };
                let mut spec = self.spec(method, run, vec![seed])?;
                spec.checkpoint = Some(checkpoint.clone());
                let res = run_experiment(&spec)?;
                self.report(&res)?;
            }
            Command::Oracle { placement } => {
                let cfg = self.config()?;
                let placement = placement.clone().unwrap_or_else(|| cfg.default_placement());
                let inst = DiscreteInstance::new(cfg.clone(), placement.clone())?;
                let sol = solve_exact_cached(&inst, self.cache_dir().as_deref())?;
                let traj = sol.rollout()?;
                let dir = self.cli.out.join("oracle");
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("trajectory.csv");
                write_trajectory(&path, &traj, &cfg)?;
                self.emitted.push(path);
                println!("placement       {placement:?}");
                println!("states          {}", sol.n_states());
                println!("optimal return  {}", sol.optimal_return());
                println!("episode return  {}", traj.raw_return());
                println!("steps           {}", traj.len());
            }
            Command::Compare {
                methods,
                checkpoint,
                placement,
                seeds,
                training,
            } => {
                let tc = training.load()?;
                let mut spec = ExperimentSpec::new(
                    self.cli.scenario.clone(),
                    Method::Oracle,
                    self.cli.out.clone(),
                );
                spec.robots = self.cli.robots;
                spec.seeds = seeds
                    .clone()
                    .unwrap_or_else(|| (seed..seed + tc.seeds as u64).collect());
                spec.cache_dir = self.cache_dir();
                spec.checkpoint = checkpoint.clone();
                spec.train = tc;
                let methods = methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
                let table = compare_methods(&spec, &methods, placement.clone())?;
                print!("{}", std::fs::read_to_string(&table.text_path)?);
                for row in &table.rows {
                    if row.mean_return.is_none() {
                        continue;
                    }
                    let dir = self.cli.out.join(row.method.name());
                    for s in &spec.seeds {
                        let seed_dir = dir.join(format!("seed-{s}"));
                        for name in ["trajectory.csv", "curve.csv", "policy.bin"] {
                            let p = seed_dir.join(name);
                            if p.exists() {
                                self.emitted.push(p);
                            }
                        }
                    }
                }
                self.emitted
                    .extend([table.text_path, table.csv_path, table.timings_path]);
            }
            Command::CheckBehavior { log } => {
                let cfg = self.config_for_log(log)?;
                let rows = read_trajectory_log(log, &cfg)?;
                let rep = replay(&rows, &cfg)?;
                if !rep.is_exact() {
                    bail!(
                        "{} does not replay exactly: {}",
                        log.display(),
                        rep.mismatches.join("; ")
                    );
                }
                let traj = trajectory_from_log(&rows, &cfg)?;
                let behavior = detect_overwatch(&traj, &cfg);
                let mut json = serde_json::to_value(&behavior)?;
                json["replayed_steps"] = rep.steps.into();
                json["relocations"] = rep.relocations.len().into();
                if !rep.relocations.is_empty() {
                    json["restationed_after_relocation"] =
                        restations_after_relocation(&traj, &cfg).into();
                }
                json["raw_return"] = traj.raw_return().into();
                println!("{}", serde_json::to_string_pretty(&json)?);
            }
            Command::ExportPlots { log } => {
                let cfg = self.config_for_log(log)?;
                let rows = read_trajectory_log(log, &cfg)?;
                let traj = trajectory_from_log(&rows, &cfg)?;
                let paths = export_plotdata(&traj, &cfg, &self.cli.out)?;
                for p in &paths {
                    println!("{}", p.display());
                }
                self.emitted.extend(paths);
            }
        }
        Ok(())
    }
}

/// First `policy.bin` under a run directory, used to learn its variant.
fn find_policy(dir: &Path) -> Result<PathBuf> {
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&d)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries.iter().rev() {
            if p.is_dir() {
                stack.push(p.clone());
            } else if p.file_name().is_some_and(|n| n == "policy.bin") {
                return Ok(p.clone());
            }
        }
    }
    bail!("no policy.bin under {}", dir.display())
}

fn main() -> ExitCode {
    let mut ctx = Ctx {
        cli: Cli::parse(),
        emitted: Vec::new(),
    };
    if let Err(e) = ctx.run() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    let mut ok = true;
    for path in &ctx.emitted {
        if let Err(e) = validate_file(path) {
            eprintln!("schema check failed for {}: {e}", path.display());
            ok = false;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
