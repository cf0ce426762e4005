use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use freqmpc::config::{find_preset, load_config, parse_config, preset_name, ControlChoice, ScenarioConfig, PRESETS};
use freqmpc::metrics::{
    compute_metrics, fmt_value, sweep_cells, sweep_horizons, write_metrics_csv, write_plot_data,
    write_run_metrics_csv, write_trace_csv, RunMetrics,
};
use freqmpc::sim::{run_closed_loop, soc_audit, MpcKind, SimError};

#[derive(Parser)]
#[command(name = "freqmpc", version, about = "Battery-assisted frequency control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace, metrics and manifest.
    Simulate {
        /// Config file, or the name of a built-in preset.
        config: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every horizon and mode combination.
    Sweep {
        config: String,
        /// Inclusive horizon range such as 2..50.
        #[arg(long, value_parser = parse_range)]
        n: (usize, usize),
        /// Comma-separated MPC modes.
        #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "standard,passivity,clf")]
        modes: Vec<MpcKind>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the three MPC modes and conventional control side by side.
    Compare {
        config: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List the built-in presets, or print one.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

fn parse_mode(s: &str) -> Result<MpcKind, String> {
    MpcKind::parse(s.trim()).ok_or_else(|| format!("unknown mode `{s}` (standard, passivity, clf)"))
}

/// Loads a config file, falling back to a preset of that name.
fn resolve(config: &str) -> Result<(ScenarioConfig, Option<String>)> {
    let path = Path::new(config);
    if path.exists() {
        let cfg = load_config(path)?;
        let preset = preset_name(&fs::read_to_string(path)?);
        return Ok((cfg, preset));
    }
    if find_preset(config).is_some() {
        let cfg = parse_config(&format!("preset = \"{config}\""), Path::new("."))?;
        return Ok((cfg, Some(config.to_string())));
    }
    bail!("{config}: no such file or preset")
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn simulate(config: &str, out: &Path) -> Result<()> {
    let (cfg, preset) = resolve(config)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("manifest.toml"), &cfg.manifest(preset.as_deref(), &command_line()))?;
    let scenario = cfg.to_scenario()?;
    let trace = match run_closed_loop(&scenario) {
        Ok(t) => t,
        Err(SimError::NonFiniteState { time, trace }) => {
            write_trace_csv(&trace, &out.join("trace.csv"))?;
            bail!("state diverged at t = {time} s; partial trace written");
        }
        Err(e) => return Err(e.into()),
    };
    write_trace_csv(&trace, &out.join("trace.csv"))?;
    let metrics = compute_metrics(&trace, None)?;
    write_run_metrics_csv(&cfg.cell(), &metrics, &out.join("metrics.csv"))?;
    let audit = soc_audit(&trace, &scenario.plant);
    println!("{}", summary(&metrics));
    println!("soc audit max error {audit:.3e}");
    println!("wrote {}", out.display());
    Ok(())
}

fn summary(m: &RunMetrics) -> String {
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    format!(
        "max |df| [{}] Hz, mean |df| [{}] Hz, max |dphi| {:.4e} rad, fallback steps {}",
        list(&m.max_abs_freq_dev),
        list(&m.mean_abs_freq_dev),
        m.max_abs_angle_diff,
        m.infeasible_step_count
    )
}

fn sweep(config: &str, range: (usize, usize), modes: &[MpcKind], workers: usize, out: &Path) -> Result<()> {
    let (cfg, preset) = resolve(config)?;
    if range.0 < 2 || range.1 > 50 {
        bail!("horizons must lie in 2..50");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let horizons: Vec<usize> = (range.0..=range.1).collect();
    let cells = sweep_cells(cfg.topology, modes, &horizons);
    write(&out.join("manifest.toml"), &cfg.manifest(preset.as_deref(), &command_line()))?;
    let result = sweep_horizons(&cells, workers, |cell| {
        cfg.for_cell(cell).to_scenario().map_err(|e| SimError::Scenario(e.to_string()))
    });
    write_metrics_csv(&result, &out.join("metrics.csv"))?;
    write_plot_data(&result, &out.join("plots"))?;
    let failed: Vec<_> = result.failures().collect();
    for f in &failed {
        eprintln!(
            "FAILED {} {} N={}: {}",
            f.cell.coordination_label(),
            f.cell.kind.as_str(),
            f.cell.horizon,
            f.result.as_ref().err().map(String::as_str).unwrap_or("")
        );
    }
    println!("{} cells, {} failed; wrote {}", result.cells.len(), failed.len(), out.display());
    Ok(())
}

fn compare(config: &str, out: &Path) -> Result<()> {
    let (cfg, preset) = resolve(config)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("manifest.toml"), &cfg.manifest(preset.as_deref(), &command_line()))?;
    let mut columns: Vec<(String, ScenarioConfig)> = MpcKind::ALL
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.control = ControlChoice::Mpc;
            c.mpc.mode = k;
            (k.as_str().to_string(), c)
        })
        .collect();
    let mut conv = cfg.clone();
    conv.control = ControlChoice::Conventional;
    columns.push(("conventional".into(), conv));

    let mut results = Vec::new();
    for (name, c) in &columns {
        let m = c
            .to_scenario()
            .map_err(anyhow::Error::from)
            .and_then(|s| run_closed_loop(&s).map_err(anyhow::Error::from))
            .and_then(|t| compute_metrics(&t, None).map_err(anyhow::Error::from));
        if let Err(e) = &m {
            eprintln!("{name}: {e}");
        }
        results.push(m.ok());
    }

    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let n_areas = cfg.n_areas();
    for a in 0..n_areas {
        let sfx = if n_areas > 1 { format!("_a{}", a + 1) } else { String::new() };
        let pick = |f: fn(&RunMetrics) -> &Vec<f64>| -> Vec<Option<f64>> {
            results.iter().map(|r| r.as_ref().map(|m| f(m)[a])).collect()
        };
        rows.push((format!("max_abs_freq_dev{sfx}"), pick(|m| &m.max_abs_freq_dev)));
        rows.push((format!("mean_abs_freq_dev{sfx}"), pick(|m| &m.mean_abs_freq_dev)));
        rows.push((format!("mean_abs_control_input{sfx}"), pick(|m| &m.mean_abs_control_input)));
    }
    let scalar = |f: fn(&RunMetrics) -> f64| -> Vec<Option<f64>> { results.iter().map(|r| r.as_ref().map(f)).collect() };
    rows.push(("max_abs_angle_diff".into(), scalar(|m| m.max_abs_angle_diff)));
    rows.push(("mean_abs_tie_power".into(), scalar(|m| m.mean_abs_tie_power)));
    rows.push(("mean_solve_time".into(), scalar(|m| m.mean_solve_time)));
    rows.push(("infeasible_step_count".into(), scalar(|m| m.infeasible_step_count as f64)));

    let mut csv = String::from("metric");
    for (name, _) in &columns {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    println!("{:<26}{}", "metric", columns.iter().map(|(n, _)| format!("{n:>16}")).collect::<String>());
    for (name, vals) in &rows {
        csv.push_str(name);
        let mut line = format!("{name:<26}");
        for v in vals {
            csv.push(',');
            match v {
                Some(x) => {
                    csv.push_str(&fmt_value(*x));
                    line.push_str(&format!("{x:>16.4e}"));
                }
                None => {
                    csv.push_str("FAILED");
                    line.push_str(&format!("{:>16}", "FAILED"));
                }
            }
        }
        csv.push('\n');
        println!("{line}");
    }
    write(&out.join("compare.csv"), &csv)?;
    if results.iter().all(Option::is_none) {
        return Err(anyhow!("every run failed"));
    }
    Ok(())
}

fn presets(show: Option<&str>) -> Result<()> {
    match show {
        Some(name) => {
            let p = find_preset(name).ok_or_else(|| anyhow!("unknown preset `{name}`"))?;
            print!("{}", p.text);
        }
        None => {
            for p in &PRESETS {
                println!("{:<30} {}", p.name, p.description);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version go to stdout with success, the rest is a usage error
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, out } => simulate(config, out),
        Command::Sweep {
            config,
            n,
            modes,
            workers,
            out,
        } => sweep(config, *n, modes, *workers, out),
        Command::Compare { config, out } => compare(config, out),
        Command::Presets { show } => presets(show.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
