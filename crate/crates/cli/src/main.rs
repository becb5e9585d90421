//! `twophase`: run configured scenarios, the manufactured-solution
//! convergence study, and mesh summaries.
//!
//! Progress goes to stderr; `TWOPHASE_LOG=quiet|info|debug` sets how much
//! (default `info`). Usage errors and unreadable or invalid configs exit
//! with 2, failed simulations with 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use twophase_dg::config::{ScenarioConfig, PRESETS};
use twophase_dg::diagnostics::{
    convergence_table, iteration_table, magnitudes, violation_stats, wetting_velocity, IterationStats, Table,
    ViolationStats,
};
use twophase_dg::limiters::LimiterBounds;
use twophase_dg::mms::{convergence_study, Study};
use twophase_dg::solver::{LimiterMode, Simulation, StepRecord};
use twophase_dg::vtk::{write_atomic, write_vtk, CellMetrics};
use twophase_dg::State;

#[derive(Parser, Debug)]
#[command(
    name = "twophase",
    version,
    about = "Bound-preserving DG simulator for compressible two-phase flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario given as a config file or `preset:<name>`.
    Run {
        config: String,
        /// Override the configured limiter: none, sl, fl or fl+sl.
        #[arg(long)]
        limiter: Option<LimiterMode>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// h-convergence study of the manufactured solution on the unit square.
    MmsConvergence {
        /// Refinement levels; level l has 2^l cells per side.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(2..=8))]
        levels: u32,
        /// Limiter mode; all of none, fl and fl+sl when omitted.
        #[arg(long)]
        limiter: Option<LimiterMode>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write the tables into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise the mesh and boundary classification of a scenario.
    MeshInfo { config: String },
    /// List the built-in presets.
    Presets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Verbosity {
    Quiet,
    Info,
    Debug,
}

fn verbosity() -> Verbosity {
    match std::env::var("TWOPHASE_LOG").as_deref() {
        Ok("quiet") | Ok("0") => Verbosity::Quiet,
        Ok("debug") | Ok("2") => Verbosity::Debug,
        _ => Verbosity::Info,
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: format!("{e}\n\nRun `twophase --help` for usage."),
        }
    }

    fn run(e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help / --version.
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, limiter, out } => run(&config, limiter, &out),
        Command::MmsConvergence {
            levels,
            limiter,
            format,
            out,
        } => mms(levels as usize, limiter, format, out.as_deref()),
        Command::MeshInfo { config } => mesh_info(&config),
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(source: &str, limiter: Option<LimiterMode>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(source).map_err(Failure::usage)?;
    if let Some(l) = limiter {
        cfg.solver.limiter = l;
    }
    cfg.validate().map_err(Failure::usage)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunSummary {
    scenario: String,
    limiter: String,
    steps_completed: usize,
    steps_planned: usize,
    final_time: f64,
    /// Over the initial state and every step.
    violation: ViolationStats,
    /// Over the Newton solutions before limiting.
    violation_unlimited: ViolationStats,
    iterations: IterationStats,
    final_max_abs_mass_balance: Option<f64>,
    final_median_abs_mass_balance: Option<f64>,
    clipped_mass_total: f64,
    error: Option<String>,
}

fn run(source: &str, limiter: Option<LimiterMode>, out: &Path) -> Result<(), Failure> {
    let v = verbosity();
    let cfg = load(source, limiter)?;
    let sc = cfg.build().map_err(Failure::usage)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::run(format!("{}: {e}", out.display())))?;
    let io = |r: twophase_dg::Result<()>| r.map_err(Failure::run);
    io(write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes()))?;

    let pb = &sc.problem;
    let mode = sc.time_loop.limiter;
    let vtk_every = cfg.output.vtk_every;
    let mut sim = Simulation::new(pb, sc.initial.clone(), sc.time_loop).map_err(Failure::usage)?;
    let planned = sim.num_steps();
    let bounds64 = {
        let b = sim.bounds_at(0.0);
        LimiterBounds { lo: b.lo, hi: b.hi }
    };
    if v >= Verbosity::Info {
        eprintln!(
            "{}: {} elements, {} steps, limiter {mode}",
            cfg.preset.as_deref().unwrap_or(source),
            pb.space.num_elements(),
            planned
        );
    }
    let snapshot = |state: &State, balance: Option<Vec<f64>>| {
        let metrics = CellMetrics {
            velocity: Some(magnitudes(&wetting_velocity(pb, state))),
            mass_balance: balance,
        };
        let path = out.join(format!("state_{:05}.vtk", state.step));
        write_vtk(&path, pb.space.mesh(), state, &metrics)
    };
    io(snapshot(sim.state(), None))?;

    let mut log = String::new();
    let mut records: Vec<StepRecord> = Vec::new();
    let mut trace = String::from("step,k,max_abs_h,limited_faces\n");
    let mut viol = violation_stats(&sim.state().saturation, bounds64);
    let mut viol_unlim = viol;
    let mut last_balance = None;
    let mut clipped = 0.0;
    let mut error = None;
    loop {
        let o = match sim.step() {
            Ok(Some(o)) => o,
            Ok(None) => break,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        let line = o.record.to_json_line();
        if v >= Verbosity::Debug {
            eprintln!("{line}");
        } else if v >= Verbosity::Info && (o.record.step % 10 == 0 || o.record.step == planned) {
            eprintln!(
                "step {}/{}: newton {}, fl {}, S in [{:.6}, {:.6}]",
                o.record.step,
                planned,
                o.record.newton_iters,
                o.record.fl_iters.map_or("-".into(), |k| k.to_string()),
                o.record.min_s,
                o.record.max_s
            );
        }
        log.push_str(&line);
        log.push('\n');
        viol.accumulate(&o.state.saturation, bounds64);
        viol_unlim.accumulate(&o.unlimited.saturation, bounds64);
        if let Some(r) = &o.limiter {
            clipped += r.clipped_mass;
            for it in &r.history {
                trace.push_str(&format!(
                    "{},{},{:e},{}\n",
                    o.record.step, it.k, it.max_flux, it.limited_faces
                ));
            }
        }
        let balance = o.mass_balance(pb);
        let last = o.record.step == planned;
        if last || (vtk_every > 0 && o.record.step % vtk_every == 0) {
            io(snapshot(&o.state, Some(balance.clone())))?;
        }
        last_balance = Some(balance);
        records.push(o.record);
    }

    io(write_atomic(&out.join("log.jsonl"), log.as_bytes()))?;
    let series = iteration_table(&records).to_csv().map_err(Failure::run)?;
    io(write_atomic(&out.join("timeseries.csv"), series.as_bytes()))?;
    if cfg.output.verbose {
        io(write_atomic(&out.join("limiter_trace.csv"), trace.as_bytes()))?;
    }
    let (bmax, bmed) = match &last_balance {
        Some(b) => {
            let mut a: Vec<f64> = b.iter().map(|x| x.abs()).collect();
            a.sort_by(f64::total_cmp);
            (a.last().copied(), Some(a[a.len() / 2]))
        }
        None => (None, None),
    };
    let summary = RunSummary {
        scenario: cfg.preset.clone().unwrap_or_else(|| source.to_string()),
        limiter: mode.to_string(),
        steps_completed: records.len(),
        steps_planned: planned,
        final_time: sim.state().time,
        violation: viol,
        violation_unlimited: viol_unlim,
        iterations: IterationStats::from_records(&records),
        final_max_abs_mass_balance: bmax,
        final_median_abs_mass_balance: bmed,
        clipped_mass_total: clipped,
        error: error.as_ref().map(|e| e.to_string()),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    io(write_atomic(&out.join("summary.json"), json.as_bytes()))?;
    if v >= Verbosity::Info {
        println!("{json}");
    }
    match error {
        Some(e) => Err(Failure::run(e)),
        None => Ok(()),
    }
}

fn mms(levels: usize, limiter: Option<LimiterMode>, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let v = verbosity();
    let modes = match limiter {
        Some(m) => vec![m],
        None => vec![LimiterMode::None, LimiterMode::Fl, LimiterMode::FlSl],
    };
    let mut studies: Vec<Study> = Vec::new();
    for m in modes {
        if v >= Verbosity::Info {
            eprintln!("manufactured solution, limiter {m}, {levels} levels");
        }
        studies.push(convergence_study(levels, m, 1.0));
    }
    let table = |field: &str, pick: fn(&Study) -> &[twophase_dg::diagnostics::ConvergenceRow]| -> Table {
        let named: Vec<(String, &[_])> = studies.iter().map(|s| (s.limiter.to_string(), pick(s))).collect();
        let refs: Vec<(&str, &[_])> = named.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        let mut t = convergence_table(&refs);
        t.headers.insert(0, "field".into());
        for r in &mut t.rows {
            r.insert(0, field.into());
        }
        t
    };
    let mut all = table("saturation", |s| &s.saturation);
    all.rows.extend(table("pressure", |s| &s.pressure).rows);
    let text = match format {
        Format::Csv => all.to_csv().map_err(Failure::run)?,
        Format::Text => all.to_text(),
    };
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::run(format!("{}: {e}", dir.display())))?;
        let csv = all.to_csv().map_err(Failure::run)?;
        write_atomic(&dir.join("mms_convergence.csv"), csv.as_bytes()).map_err(Failure::run)?;
        write_atomic(&dir.join("mms_convergence.txt"), all.to_text().as_bytes()).map_err(Failure::run)?;
    }
    let failed: Vec<String> = studies
        .iter()
        .filter_map(|s| s.failure.as_ref().map(|e| format!("{}: {e}", s.limiter)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::run(failed.join("; ")))
    }
}

fn mesh_info(source: &str) -> Result<(), Failure> {
    let cfg = load(source, None)?;
    let mesh = cfg.mesh().map_err(Failure::usage)?;
    let ne = mesh.num_elements();
    let [lo, hi] = mesh.bounding_box();
    let mut per_rule: BTreeMap<usize, (usize, String)> = BTreeMap::new();
    for (_, f) in mesh.boundary_faces() {
        if let Some(tag) = f.boundary {
            let e = per_rule
                .entry(tag.rule)
                .or_insert((0, format!("{:?}/{:?}", tag.pressure, tag.saturation)));
            e.0 += 1;
        }
    }
    println!("elements: {ne}");
    println!("vertices: {}", mesh.num_vertices());
    println!(
        "faces: {} ({} interior, {} boundary)",
        mesh.faces().len(),
        mesh.interior_faces().count(),
        mesh.boundary_faces().count()
    );
    println!("h: {}", mesh.h());
    println!("bounding box: [{}, {}] x [{}, {}]", lo[0], hi[0], lo[1], hi[1]);
    println!("area: {}", mesh.areas().iter().sum::<f64>());
    println!("dofs per field: {}", 3 * ne);
    println!("unknowns: {}", 6 * ne);
    for (rule, (n, kind)) in per_rule {
        println!("boundary rule {rule}: {n} faces, {kind}");
    }
    Ok(())
}
