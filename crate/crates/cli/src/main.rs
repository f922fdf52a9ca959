//! `hyqsim` command-line workbench.
//!
//! Every run writes its outputs plus a `manifest.json` into `--out`.
//! Exit status: 0 success, 2 bad configuration, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use hyqsim::budget::{circuit_budget, BudgetOptions, GateBudgetTable, TimeScaling};
use hyqsim::circuit::Circuit;
use hyqsim::config::{
    parse_budget_table, parse_model_config, parse_sweep_config, parse_trap_config, parse_vqe_config,
    parse_wigner_config, EvolutionMethod, ModelConfig, WignerSource,
};
use hyqsim::cv::{ground_state_wigner, negativity_magnitude, wigner};
use hyqsim::jch::{evolve, evolve_exact, fmt_num, trotter_step, EvolveOptions, JchParams};
use hyqsim::trap::{mode_structure, optimize_control_subset};
use hyqsim::vqe::{gap_scan, results_csv, solve_cell, sweep, CellResult};
use hyqsim::{HyqError, C64};

#[derive(Parser)]
#[command(name = "hyqsim", version, about = "Hybrid qubit-qumode simulation workbench")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "HYQSIM_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scaling {
    Fixed,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Time evolution of a lattice model.
    Evolve { config: PathBuf },
    /// Variational ground state at one parameter point.
    Vqe { config: PathBuf },
    /// Variational ground states over a (delta, kappa) grid.
    Sweep { config: PathBuf },
    /// Wigner maps and negativities.
    Wigner { config: PathBuf },
    /// Ion-chain modes and beam-splitter control planning.
    Trap { config: PathBuf },
    /// Time and fidelity budget of a circuit.
    Budget {
        circuit: PathBuf,
        /// Gate table; the bundled table is used when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scaling::Fixed)]
        scaling: Scaling,
        /// Coherence limit in milliseconds for circuits touching qumodes.
        #[arg(long)]
        coherence_ms: Option<f64>,
    },
    /// Writes one Trotter step of a model config as circuit JSON.
    TrotterCircuit { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Evolve { .. } => "evolve",
            Command::Vqe { .. } => "vqe",
            Command::Sweep { .. } => "sweep",
            Command::Wigner { .. } => "wigner",
            Command::Trap { .. } => "trap",
            Command::Budget { .. } => "budget",
            Command::TrotterCircuit { .. } => "trotter-circuit",
        }
    }
}

/// Error with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: format!("configuration error: {e}") }
}

fn numeric_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, message: format!("numerical failure: {e}") }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 3, message: format!("{}: {e}", path.display()) }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: String,
    config_sha256: String,
    seed: Option<u64>,
    tool_version: &'static str,
    threads: usize,
    wall_time_s: f64,
    outputs: Vec<String>,
}

struct Run {
    out: PathBuf,
    format: Format,
    config_sources: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl Run {
    fn read_config(&mut self, path: &Path) -> Result<String, Failure> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        self.config_sources.push((path.display().to_string(), text.clone()));
        Ok(text)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(numeric_err)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for (_, text) in &self.config_sources {
            h.update(text.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hyqsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(numeric_err)?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let started = Instant::now();
    let mut run = Run { out: cli.out.clone(), format: cli.format, config_sources: Vec::new(), outputs: Vec::new() };
    let seed = match &cli.command {
        Command::Evolve { config } => cmd_evolve(&mut run, config)?,
        Command::Vqe { config } => cmd_vqe(&mut run, config, cli.seed)?,
        Command::Sweep { config } => cmd_sweep(&mut run, config, cli.seed)?,
        Command::Wigner { config } => cmd_wigner(&mut run, config)?,
        Command::Trap { config } => cmd_trap(&mut run, config)?,
        Command::Budget { circuit, table, scaling, coherence_ms } => cmd_budget(&mut run, circuit, table.as_deref(), *scaling, *coherence_ms)?,
        Command::TrotterCircuit { config } => cmd_trotter_circuit(&mut run, config)?,
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: run.config_sources.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>().join(","),
        config_sha256: run.config_hash(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: run.outputs.clone(),
    };
    run.write_json("manifest.json", &manifest)?;
    Ok(())
}

fn load_model(run: &mut Run, path: &Path) -> Result<ModelConfig, Failure> {
    let text = run.read_config(path)?;
    parse_model_config(&text).map_err(config_err)
}

fn cmd_evolve(run: &mut Run, path: &Path) -> Result<Option<u64>, Failure> {
    let cfg = load_model(run, path)?;
    let params = cfg.params().map_err(config_err)?;
    let psi0 = cfg.initial_state().map_err(config_err)?;
    let rec = match cfg.method {
        EvolutionMethod::Trotter => evolve(&psi0, &params, cfg.dt, cfg.steps, &EvolveOptions { entropy: cfg.entropy }).map_err(numeric_err)?,
        EvolutionMethod::Exact => evolve_exact(&psi0, &params, cfg.dt, cfg.steps, &EvolveOptions { entropy: cfg.entropy }).map_err(numeric_err)?,
    };
    match run.format {
        Format::Csv => {
            run.write("occupations.csv", &rec.to_csv())?;
            if rec.entropy.is_some() {
                run.write("entropy.csv", &rec.entropy_csv())?;
            }
        }
        Format::Json => run.write_json("evolution.json", &json!({ "manifest": "manifest.json", "record": rec }))?,
    }
    Ok(None)
}

fn write_cells(run: &mut Run, name: &str, rows: &[CellResult]) -> Result<(), Failure> {
    match run.format {
        Format::Csv => run.write(&format!("{name}.csv"), &results_csv(rows)),
        Format::Json => run.write_json(&format!("{name}.json"), &json!({ "manifest": "manifest.json", "cells": rows })),
    }
}

fn cmd_vqe(run: &mut Run, path: &Path, seed: Option<u64>) -> Result<Option<u64>, Failure> {
    let text = run.read_config(path)?;
    let cfg = parse_vqe_config(&text).map_err(config_err)?;
    let params = cfg.params().map_err(config_err)?;
    let opts = cfg.optimizer.options().map_err(config_err)?;
    let seed = seed.unwrap_or(cfg.seed);
    let r = solve_cell(&params, cfg.mode, &opts, seed);
    if r.status.starts_with("error") {
        return Err(numeric_err(&r.status));
    }
    write_cells(run, "vqe", std::slice::from_ref(&r))?;
    Ok(Some(seed))
}

fn panel(rows: &[CellResult], value: impl Fn(&CellResult) -> f64) -> String {
    let mut s = String::from("delta,kappa,value\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", fmt_num(r.delta), fmt_num(r.kappa), fmt_num(value(r))));
    }
    s
}

fn cmd_sweep(run: &mut Run, path: &Path, seed: Option<u64>) -> Result<Option<u64>, Failure> {
    let text = run.read_config(path)?;
    let cfg = parse_sweep_config(&text).map_err(config_err)?;
    let grid = cfg.grid().map_err(config_err)?;
    let base = cfg.base().map_err(config_err)?;
    let seed = seed.unwrap_or(cfg.seed);
    if cfg.exact_only {
        let rows = gap_scan(&grid, &base, cfg.mode.sector()).map_err(numeric_err)?;
        let mut s = String::from("delta,kappa,gap\n");
        for (d, k, g) in &rows {
            s.push_str(&format!("{},{},{}\n", fmt_num(*d), fmt_num(*k), fmt_num(*g)));
        }
        match run.format {
            Format::Csv => run.write("gap.csv", &s)?,
            Format::Json => run.write_json("gap.json", &json!({ "manifest": "manifest.json", "cells": rows }))?,
        }
        return Ok(Some(seed));
    }
    let opts = cfg.optimizer.options().map_err(config_err)?;
    let rows = sweep(&grid, &base, cfg.mode, &opts, seed);
    let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
    for r in rows.iter().filter(|r| r.status != "ok") {
        log::warn!("cell delta={} kappa={}: {}", r.delta, r.kappa, r.status);
    }
    write_cells(run, "sweep", &rows)?;
    if run.format == Format::Csv {
        run.write("fidelity.csv", &panel(&rows, |r| r.fidelity))?;
        run.write("gap.csv", &panel(&rows, |r| r.gap))?;
        run.write("n_tot_exact.csv", &panel(&rows, |r| r.n_tot_exact))?;
        run.write("n_tot_vqa.csv", &panel(&rows, |r| r.n_tot))?;
    }
    if failed == rows.len() {
        return Err(numeric_err("every sweep cell failed"));
    }
    Ok(Some(seed))
}

fn cmd_wigner(run: &mut Run, path: &Path) -> Result<Option<u64>, Failure> {
    let text = run.read_config(path)?;
    let cfg = parse_wigner_config(&text).map_err(config_err)?;
    let mut summary = String::from("point,kappa,delta,site,negativity,average_negativity,degeneracy\n");
    let mut json_rows = Vec::new();
    match &cfg.state {
        WignerSource::Fock { n, cutoff } => {
            let mut rho = nalgebra::DMatrix::<C64>::zeros(cutoff + 1, cutoff + 1);
            rho[(*n, *n)] = C64::new(1.0, 0.0);
            let map = wigner(&rho, &cfg.grid).map_err(numeric_err)?;
            let neg = negativity_magnitude(&map);
            summary.push_str(&format!("0,,,0,{},{},1\n", fmt_num(neg), fmt_num(neg)));
            emit_map(run, 0, &map)?;
            json_rows.push(json!({ "point": 0, "fock": n, "negativity": neg }));
        }
        WignerSource::Ground { sites, omega_c, eta, cutoff, sector, points, site } => {
            let site = site.unwrap_or(sites / 2);
            for (i, p) in points.iter().enumerate() {
                let params = JchParams::with_detuning(*sites, *omega_c, p.delta, p.kappa, *eta, *cutoff).map_err(config_err)?;
                let g = ground_state_wigner(&params, *sector, site, &cfg.grid).map_err(numeric_err)?;
                summary.push_str(&format!(
                    "{i},{},{},{site},{},{},{}\n",
                    fmt_num(p.kappa),
                    fmt_num(p.delta),
                    fmt_num(g.negativity),
                    fmt_num(g.average),
                    g.degeneracy
                ));
                emit_map(run, i, &g.map)?;
                json_rows.push(json!({
                    "point": i, "kappa": p.kappa, "delta": p.delta, "site": site,
                    "negativity": g.negativity, "per_mode": g.per_mode, "average_negativity": g.average,
                    "degeneracy": g.degeneracy,
                }));
            }
        }
    }
    match run.format {
        Format::Csv => run.write("negativity.csv", &summary)?,
        Format::Json => run.write_json("negativity.json", &json!({ "manifest": "manifest.json", "points": json_rows }))?,
    }
    Ok(None)
}

fn emit_map(run: &mut Run, i: usize, map: &hyqsim::cv::WignerMap) -> Result<(), Failure> {
    match run.format {
        Format::Csv => run.write(&format!("wigner_{i}.csv"), &map.to_csv()),
        Format::Json => run.write_json(&format!("wigner_{i}.json"), &json!({ "manifest": "manifest.json", "map": map })),
    }
}

fn cmd_trap(run: &mut Run, path: &Path) -> Result<Option<u64>, Failure> {
    let text = run.read_config(path)?;
    let cfg = parse_trap_config(&text).map_err(config_err)?;
    let trap = cfg.model().map_err(config_err)?;
    let ms = mode_structure(&trap).map_err(numeric_err)?;
    let mut modes = ms.band_order(cfg.band);
    if cfg.exclude_com {
        modes.remove(0);
    }
    let drive = cfg.drive.settings();
    let subsets = optimize_control_subset(&ms, &modes, &cfg.sizes, &drive).map_err(numeric_err)?;
    match run.format {
        Format::Csv => {
            run.write("modes.csv", &ms.to_csv())?;
            let mut s = String::from("ion,x_m,y_m,z_m\n");
            for (j, p) in ms.positions.iter().enumerate() {
                s.push_str(&format!("{j},{},{},{}\n", fmt_num(p[0]), fmt_num(p[1]), fmt_num(p[2])));
            }
            run.write("positions.csv", &s)?;
            let mut s = String::from("size,ions,max_time_s,pair,host_ion,t_bs_s\n");
            for r in &subsets {
                let ions = r.ions.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                for a in &r.assignment {
                    s.push_str(&format!("{},{ions},{},{}-{},{},{}\n", r.size, fmt_num(r.max_time), a.pair.0, a.pair.1, a.ion, fmt_num(a.t_bs)));
                }
            }
            run.write("subsets.csv", &s)?;
        }
        Format::Json => run.write_json(
            "trap.json",
            &json!({
                "manifest": "manifest.json",
                "positions_m": ms.positions,
                "modes": ms.modes,
                "band": cfg.band.name(),
                "coupled_modes": modes,
                "subsets": subsets,
            }),
        )?,
    }
    Ok(None)
}

fn cmd_budget(run: &mut Run, circuit: &Path, table: Option<&Path>, scaling: Scaling, coherence_ms: Option<f64>) -> Result<Option<u64>, Failure> {
    let text = run.read_config(circuit)?;
    let c = Circuit::from_json(&text).map_err(config_err)?;
    let table = match table {
        Some(p) => {
            let t = run.read_config(p)?;
            parse_budget_table(&t).map_err(config_err)?
        }
        None => GateBudgetTable::default(),
    };
    if coherence_ms.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
        return Err(config_err("--coherence-ms must be positive"));
    }
    let opts = BudgetOptions {
        scaling: match scaling {
            Scaling::Fixed => TimeScaling::Fixed,
            Scaling::Linear => TimeScaling::LinearInAngle,
        },
        coherence_s: coherence_ms.map(|v| v * 1e-3),
    };
    let report = circuit_budget(&c, &table, &opts).map_err(|e| match e {
        HyqError::UnknownGate(_) => config_err(e),
        other => numeric_err(other),
    })?;
    if report.exceeds_coherence {
        log::warn!("serial time {:.3} ms exceeds the coherence limit", report.serial_time_s * 1e3);
    }
    match run.format {
        Format::Json => run.write_json("budget.json", &json!({ "manifest": "manifest.json", "budget": report }))?,
        Format::Csv => {
            let mut s = String::from("index,gate,targets,start_s,time_s,fidelity\n");
            for g in &report.gates {
                let t = g.targets.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                s.push_str(&format!("{},{},{t},{},{},{}\n", g.index, g.gate, fmt_num(g.start_s), fmt_num(g.time_s), fmt_num(g.fidelity)));
            }
            run.write("budget_gates.csv", &s)?;
            let summary = format!(
                "serial_time_s,parallel_time_s,fidelity,coherence_limit_s,exceeds_coherence\n{},{},{},{},{}\n",
                fmt_num(report.serial_time_s),
                fmt_num(report.parallel_time_s),
                fmt_num(report.fidelity),
                report.coherence_limit_s.map(fmt_num).unwrap_or_default(),
                report.exceeds_coherence
            );
            run.write("budget.csv", &summary)?;
        }
    }
    Ok(None)
}

fn cmd_trotter_circuit(run: &mut Run, path: &Path) -> Result<Option<u64>, Failure> {
    let cfg = load_model(run, path)?;
    let params = cfg.params().map_err(config_err)?;
    let c = trotter_step(&params, cfg.dt).map_err(numeric_err)?;
    let mut text = c.to_json();
    text.push('\n');
    run.write("trotter_step.json", &text)?;
    Ok(None)
}
