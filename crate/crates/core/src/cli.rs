//! `abarrier` command line: one subcommand per experiment stage.
//!
//! Artifacts live under `<out_dir>/<name>/`. Each stage reads what earlier
//! stages wrote there, so a full run is
//! `train-policy`, `collect`, `loop`, then `monitor` and `compare`.

use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::adversarial::history_csv;
use crate::barrier::{BarrierFile, BarrierNet};
use crate::certify::CertReport;
use crate::config::ExperimentConfig;
use crate::controllers::{rollout, Controller, MlpPolicy, PolicyFile, Trajectory};
use crate::error::{Error, Result};
use crate::io::{archive_csv, dataset_csv, fmt_f64, read_dataset, read_json, read_text, transitions_csv, write_json, write_text};
use crate::monitor::monitor_csv;
use crate::obs::Archive;
use crate::pipeline::Env;
use crate::sampling::LabeledDataset;
use crate::study::rates_csv;

#[derive(Debug, Parser)]
#[command(name = "abarrier", version, about = "Learn, certify, and monitor almost-barrier functions for path-tracking controllers")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the run directory `<out_dir>/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BarrierArg {
    /// Barrier weights; defaults to the loop's best round, else `barrier.json`.
    #[arg(long)]
    pub barrier: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out one controller and write `trajectory.csv`.
    Simulate(#[command(flatten)] Common),
    /// Train the neural tracking policy (`policy.json`).
    TrainPolicy(#[command(flatten)] Common),
    /// Collect safe rollouts and label unsafe samples.
    Collect(#[command(flatten)] Common),
    /// Train a barrier on the collected dataset (`barrier.json`).
    TrainBarrier(#[command(flatten)] Common),
    /// Certify a barrier on the configured grid.
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: BarrierArg,
    },
    /// Adversarial train/certify/relabel loop.
    Loop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_rounds: Option<usize>,
    },
    /// Flag level-set states that can reach uncertified cells.
    Monitor {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: BarrierArg,
        /// Overrides `monitor.horizon`.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Escape rates and sample trajectories of neural, Stanley, and MPC control.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: BarrierArg,
    },
    /// Regenerate summaries and SVGs from saved report CSVs.
    Report(#[command(flatten)] Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::TrainPolicy(c) | Command::Collect(c) | Command::TrainBarrier(c) | Command::Report(c) => c,
            Command::Certify { common, .. } | Command::Loop { common, .. } | Command::Monitor { common, .. } | Command::Compare { common, .. } => common,
        }
    }
}

/// Configuration, environment, and run directory of one invocation.
pub struct Run {
    pub env: Env,
    pub dir: PathBuf,
}

impl Run {
    pub fn open(common: &Common) -> Result<Self> {
        let text = read_text(&common.config).map_err(|e| Error::Config(format!("{}: {e}", common.config.display())))?;
        let mut cfg = ExperimentConfig::parse(&text, &common.config.display().to_string())?;
        if let Some(seed) = common.seed {
            cfg = cfg.with_seed(seed);
        }
        let dir = common.out.clone().unwrap_or_else(|| FsPath::new(&cfg.out_dir).join(&cfg.name));
        Ok(Self { env: Env::new(cfg)?, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::Config(format!("{} not found; run `{stage}` first", p.display())));
        }
        Ok(p)
    }

    pub fn policy(&self) -> Result<MlpPolicy> {
        MlpPolicy::from_file(read_json::<PolicyFile>(&self.require("policy.json", "train-policy")?)?)
    }

    pub fn dataset(&self) -> Result<LabeledDataset> {
        read_dataset(
            &self.require("dataset.csv", "collect")?,
            &self.require("transitions.csv", "collect")?,
            &self.require("archive.csv", "collect")?,
        )
    }

    /// Barrier weights and the report certified for them, if one was saved.
    pub fn barrier(&self, arg: &BarrierArg) -> Result<(BarrierNet, Option<PathBuf>)> {
        let (path, report) = match &arg.barrier {
            Some(p) => (p.clone(), None),
            None if self.path("barrier_best.json").exists() => (self.path("barrier_best.json"), Some(self.path("report_best.csv"))),
            None => (self.require("barrier.json", "train-barrier")?, Some(self.path("report.csv"))),
        };
        let file: BarrierFile = read_json(&path)?;
        let names: Vec<String> = self.env.spec.dims.iter().map(|d| d.name().to_string()).collect();
        if file.observation != names || file.norm_center != self.env.norm.center || file.norm_scale != self.env.norm.scale {
            return Err(Error::Config(format!("{} was trained for a different observation space", path.display())));
        }
        Ok((file.net()?, report.filter(|p| p.exists())))
    }

    fn write_report(&self, report: &CertReport, stem: &str) -> Result<()> {
        write_text(&self.path(&format!("{stem}.csv")), &report.to_csv())?;
        write_text(&self.path(&format!("{stem}.svg")), &report.to_svg())?;
        write_text(&self.path(&format!("summary{}.txt", stem.strip_prefix("report").unwrap_or(""))), &report.summary(&self.env.cfg.hash()))
    }
}

fn trajectory_csv(env: &Env, trajs: &[(String, Trajectory)]) -> String {
    let mut s = String::from("id,t,x,y,theta,v_x,v_y,r,s,d_e,theta_e");
    for d in &env.spec.dims {
        s.push_str(&format!(",obs_{}", d.name()));
    }
    s.push_str(",a,delta\n");
    let dt = env.sim.dt();
    for (id, tr) in trajs {
        for (k, (x, f)) in tr.states.iter().zip(&tr.frames).enumerate() {
            let mut row = vec![id.clone(), fmt_f64(k as f64 * dt)];
            row.extend([x.x, x.y, x.theta, x.v_x, x.v_y, x.r, f.s, f.d_e, f.theta_e].map(fmt_f64));
            row.extend(env.spec.observe(x, f).into_iter().map(fmt_f64));
            match tr.actions.get(k) {
                Some(u) => row.extend([fmt_f64(u.a), fmt_f64(u.delta)]),
                None => row.extend(["nan".to_string(), "nan".to_string()]),
            }
            s.push_str(&row.join(","));
            s.push('\n');
        }
    }
    s
}

fn simulate(run: &Run) -> Result<()> {
    let env = &run.env;
    let sc = &env.cfg.simulate;
    let mut ctrl: Box<dyn Controller> = match sc.controller.as_str() {
        "neural" => Box::new(run.policy()?),
        "stanley" => Box::new(env.stanley()),
        "mpc" => Box::new(crate::controllers::ShootingMpc::new(env.cfg.study.mpc, crate::seeds::named_seed(env.cfg.seed, "simulate"))),
        other => return Err(Error::Config(format!("simulate.controller: unknown controller {other:?}"))),
    };
    let init = env.sim.state_at(sc.s, sc.d_e, sc.theta_e, env.cfg.policy.v_target, 0.0, 0.0);
    let mut sim = env.sim.clone();
    let traj = rollout(&mut sim, ctrl.as_mut(), init, sc.steps, env.cfg.collect.crash_d_e)?;
    info!("{} steps, crashed: {}", traj.actions.len(), traj.crashed);
    write_text(&run.path("trajectory.csv"), &trajectory_csv(env, &[(sc.controller.clone(), traj)]))
}

fn train_policy(run: &Run) -> Result<()> {
    let (policy, log) = run.env.train_policy()?;
    let mut s = String::from("generation,best_return,elite_mean_return,mean_return\n");
    for g in &log {
        s.push_str(&format!("{},{},{},{}\n", g.generation, fmt_f64(g.best_return), fmt_f64(g.elite_mean_return), fmt_f64(g.mean_return)));
    }
    write_text(&run.path("policy_log.csv"), &s)?;
    write_json(&run.path("policy.json"), &policy.to_file())
}

fn write_dataset(run: &Run, ds: &LabeledDataset, prefix: &str) -> Result<()> {
    write_text(&run.path(&format!("{prefix}dataset.csv")), &dataset_csv(ds))?;
    write_text(&run.path(&format!("{prefix}transitions.csv")), &transitions_csv(&ds.transitions))?;
    write_text(&run.path(&format!("{prefix}archive.csv")), &archive_csv(&ds.archive))
}

fn collect(run: &Run) -> Result<()> {
    let policy = run.policy()?;
    let ds = run.env.collect(&policy)?;
    info!("{} safe, {} unsafe, {} transitions", ds.safe.len(), ds.unsafe_.len(), ds.transitions.len());
    write_dataset(run, &ds, "")
}

fn train_barrier(run: &Run) -> Result<()> {
    let ds = run.dataset()?;
    let out = run.env.train_barrier(&run.env.normalized(&ds))?;
    info!("best loss {:.4e}", out.best_loss);
    let log: Vec<Vec<f64>> = out.epoch_losses.iter().enumerate().map(|(e, l)| vec![e as f64, *l]).collect();
    write_text(&run.path("train_log.csv"), &crate::io::table_csv(&["epoch", "loss"], &log))?;
    write_json(&run.path("barrier.json"), &run.env.barrier_file(&out.net))
}

fn loaded(run: &Run) -> Result<(MlpPolicy, Archive)> {
    let policy = run.policy()?;
    let archive = run.env.archive(&run.dataset()?)?;
    Ok((policy, archive))
}

fn certify(run: &Run, barrier: &BarrierArg) -> Result<()> {
    let (net, _) = run.barrier(barrier)?;
    let (policy, archive) = loaded(run)?;
    let report = run.env.certify(&net, &policy, &archive)?;
    info!("{} boundary cells, certified fraction {:.4}", report.n_boundary, report.certified_fraction());
    run.write_report(&report, "report")
}

fn run_loop(run: &mut Run, max_rounds: Option<usize>) -> Result<()> {
    if let Some(m) = max_rounds {
        run.env.cfg.max_rounds = m;
    }
    let run = &*run;
    let ds = run.dataset()?;
    let (policy, archive) = loaded(run)?;
    let hash = run.env.cfg.hash();
    let out = run.env.run_loop(run.env.normalized(&ds), &policy, &archive, |v| {
        let dir = run.path(&format!("round_{}", v.record.round));
        write_json(&dir.join("barrier.json"), &run.env.barrier_file(v.net))?;
        write_text(&dir.join("report.csv"), &v.report.to_csv())?;
        write_text(&dir.join("summary.txt"), &v.report.summary(&hash))
    })?;
    info!("best round {} with certified fraction {:.4}", out.best_round, out.report.certified_fraction());
    write_text(&run.path("history.csv"), &history_csv(&out.history))?;
    write_json(&run.path("barrier_best.json"), &run.env.barrier_file(&out.net))?;
    run.write_report(&out.report, "report_best")?;
    let norm = &run.env.norm;
    let raw = LabeledDataset {
        safe: out.dataset.safe.iter().map(|z| norm.denormalize(z)).collect(),
        unsafe_: out.dataset.unsafe_.iter().map(|z| norm.denormalize(z)).collect(),
        transitions: Vec::new(),
        archive: Vec::new(),
    };
    write_text(&run.path("loop_dataset.csv"), &dataset_csv(&raw))
}

fn saved_report(run: &Run, net: &BarrierNet, path: Option<PathBuf>, policy: &MlpPolicy, archive: &Archive) -> Result<CertReport> {
    match path {
        Some(p) => CertReport::from_csv(run.env.grid.clone(), run.env.cfg.certify, run.env.sim.dt(), &read_text(&p)?),
        None => run.env.certify(net, policy, archive),
    }
}

fn monitor(run: &Run, barrier: &BarrierArg, horizon: Option<usize>) -> Result<()> {
    let (net, report_path) = run.barrier(barrier)?;
    let (policy, archive) = loaded(run)?;
    let report = saved_report(run, &net, report_path, &policy, &archive)?;
    let h = horizon.unwrap_or(run.env.cfg.monitor.horizon);
    let flags = run.env.monitor(&net, &report, &policy, &archive, h)?;
    info!("{} of {} level-set states flagged", flags.iter().filter(|f| f.flagged).count(), flags.len());
    write_text(&run.path(&format!("monitor_T{h}.csv")), &monitor_csv(&flags))
}

fn compare(run: &Run, barrier: &BarrierArg) -> Result<()> {
    let (net, _) = run.barrier(barrier)?;
    let (policy, archive) = loaded(run)?;
    let (rates, trajs) = run.env.compare(&net, &policy, &archive)?;
    for r in &rates {
        info!("{}: {} / {} escaped", r.controller, r.escapes, r.total);
    }
    write_text(&run.path("rates.csv"), &rates_csv(&rates))?;
    write_text(&run.path("compare_trajectories.csv"), &trajectory_csv(&run.env, &trajs))
}

fn report(run: &Run) -> Result<()> {
    let mut dirs = vec![run.dir.clone()];
    let mut rounds: Vec<(usize, PathBuf)> = std::fs::read_dir(&run.dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| Some((e.file_name().to_str()?.strip_prefix("round_")?.parse().ok()?, e.path())))
        .collect();
    rounds.sort();
    dirs.extend(rounds.into_iter().map(|r| r.1));
    let hash = run.env.cfg.hash();
    let mut n = 0;
    for dir in dirs {
        for stem in ["report", "report_best"] {
            let csv = dir.join(format!("{stem}.csv"));
            if !csv.exists() {
                continue;
            }
            let rep = CertReport::from_csv(run.env.grid.clone(), run.env.cfg.certify, run.env.sim.dt(), &read_text(&csv)?)?;
            write_text(&dir.join(format!("{stem}.svg")), &rep.to_svg())?;
            write_text(&dir.join(format!("summary{}.txt", stem.strip_prefix("report").unwrap_or(""))), &rep.summary(&hash))?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Config(format!("no report CSVs under {}", run.dir.display())));
    }
    info!("regenerated {n} reports");
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a second initialization (tests calling `execute` repeatedly) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut run = Run::open(cli.command.common())?;
    match &cli.command {
        Command::Simulate(_) => simulate(&run),
        Command::TrainPolicy(_) => train_policy(&run),
        Command::Collect(_) => collect(&run),
        Command::TrainBarrier(_) => train_barrier(&run),
        Command::Certify { barrier, .. } => certify(&run, barrier),
        Command::Loop { max_rounds, .. } => run_loop(&mut run, *max_rounds),
        Command::Monitor { barrier, horizon, .. } => monitor(&run, barrier, *horizon),
        Command::Compare { barrier, .. } => compare(&run, barrier),
        Command::Report(_) => report(&run),
    }
}

/// Exit code for `argv`: 0 on success, 1 on usage or validation errors, 2 on runtime errors.
pub fn run_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run_args(std::env::args_os())
}
