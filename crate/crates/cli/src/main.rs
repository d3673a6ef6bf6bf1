//! `cardioflow`: coupled 3D-0D cardiac hemodynamics runs, standalone 0D
//! circulation runs, and postprocessing (biomarker reports, WSS/TAWSS maps).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cardioflow_core::coupling::{CoupledSim, RunFile, SnapshotManifest};
use cardioflow_core::nsale::FluidProperties;
use cardioflow_core::postproc;
use cardioflow_core::vtk;

#[derive(Parser)]
#[command(name = "cardioflow", version, about = "Desk-scale cardiac hemodynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a coupled 3D-0D simulation from a TOML config.
    Run {
        /// Path to the run configuration.
        config: PathBuf,
    },
    /// Run the lumped-parameter circulation standalone with prescribed
    /// chamber volume waveforms.
    #[command(name = "run-0d")]
    Run0d {
        /// Path to the standalone configuration.
        config: PathBuf,
    },
    /// Postprocess emitted series and snapshots.
    Postproc {
        #[command(subcommand)]
        what: PostprocCommand,
    },
}

#[derive(Subcommand)]
enum PostprocCommand {
    /// Extract chamber biomarkers from a CSV series and normalize them
    /// against physiological reference ranges.
    Biomarkers {
        /// Input CSV with a header row and a time column `t`.
        #[arg(long)]
        series: PathBuf,
        /// Reference-range registry (TOML). Defaults to the bundled one.
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Output report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Column holding the chamber volume (mL).
        #[arg(long)]
        volume_col: String,
        /// Column holding the flowrate.
        #[arg(long)]
        flow_col: String,
        /// Column holding the pressure.
        #[arg(long)]
        pressure_col: String,
        /// Flow units of the input column.
        #[arg(long, default_value = "mls", value_parser = ["mls", "m3s"])]
        flow_units: String,
        /// Pressure units of the input column.
        #[arg(long, default_value = "mmhg", value_parser = ["mmhg", "pa"])]
        pressure_units: String,
        /// Biomarker name suffix, e.g. `LV` reports `ESV_LV`.
        #[arg(long, default_value = "LV")]
        suffix: String,
        /// Registry name for the peak-flow biomarker.
        #[arg(long)]
        qmax_name: Option<String>,
        /// Registry name for the peak-pressure biomarker.
        #[arg(long)]
        pmax_name: Option<String>,
        /// Registry name for the mean-pressure biomarker.
        #[arg(long)]
        pmean_name: Option<String>,
        /// Start of the beat window (s).
        #[arg(long, default_value_t = 0.0)]
        beat_start: f64,
        /// Beat period (s).
        #[arg(long, default_value_t = 0.8)]
        period: f64,
    },
    /// Compute the time-averaged wall shear stress from run snapshots.
    Wss {
        /// Run configuration used to rebuild the mesh topology and tags.
        #[arg(long)]
        config: PathBuf,
        /// Snapshot directory produced by `cardioflow run`.
        #[arg(long)]
        snapshots: PathBuf,
        /// Boundary tag of the wall to evaluate.
        #[arg(long)]
        wall_tag: String,
        /// Output VTK with the TAWSS point field.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => run_coupled(&config),
        Command::Run0d { config } => run_0d(&config),
        Command::Postproc { what } => match what {
            PostprocCommand::Biomarkers {
                series,
                ranges,
                out,
                volume_col,
                flow_col,
                pressure_col,
                flow_units,
                pressure_units,
                suffix,
                qmax_name,
                pmax_name,
                pmean_name,
                beat_start,
                period,
            } => postproc_biomarkers(BiomarkerArgs {
                series,
                ranges,
                out,
                volume_col,
                flow_col,
                pressure_col,
                flow_units,
                pressure_units,
                suffix,
                qmax_name,
                pmax_name,
                pmean_name,
                beat_start,
                period,
            }),
            PostprocCommand::Wss {
                config,
                snapshots,
                wall_tag,
                out,
            } => postproc_wss(&config, &snapshots, &wall_tag, &out),
        },
    }
}

fn run_coupled(config_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let file = RunFile::from_toml_str(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config = file.build(base)?;
    let out_dir = config.output_dir.clone();
    let mut sim = CoupledSim::new(config)?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    let steps = (sim.config().t_end / sim.config().dt).round() as usize;
    eprintln!(
        "running {} steps (dt = {:.3e} s, {} vertices)",
        steps,
        sim.config().dt,
        sim.mesh.num_vertices()
    );
    sim.run()?;
    match &out_dir {
        Some(dir) => eprintln!(
            "done: {} records written under {}",
            sim.records.len(),
            dir.display()
        ),
        None => {
            // no output dir: emit the records to stdout
            print!("{}", sim.records_csv());
        }
    }
    Ok(())
}

fn run_0d(config_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let file = cardioflow_core::circulation::Run0dFile::from_toml_str(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let records = file.execute(base)?;
    match &file.standalone.out_csv {
        Some(out) => eprintln!("done: {} records -> {}", records.len(), base.join(out).display()),
        None => {
            let mut text = cardioflow_core::circulation::standalone_csv_header();
            text.push('\n');
            for r in &records {
                text.push_str(&cardioflow_core::circulation::standalone_csv_row(r));
                text.push('\n');
            }
            print!("{text}");
        }
    }
    Ok(())
}

struct BiomarkerArgs {
    series: PathBuf,
    ranges: Option<PathBuf>,
    out: PathBuf,
    volume_col: String,
    flow_col: String,
    pressure_col: String,
    flow_units: String,
    pressure_units: String,
    suffix: String,
    qmax_name: Option<String>,
    pmax_name: Option<String>,
    pmean_name: Option<String>,
    beat_start: f64,
    period: f64,
}

fn postproc_biomarkers(args: BiomarkerArgs) -> Result<()> {
    let registry = match &args.ranges {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            postproc::RangeRegistry::from_toml_str(&text)?
        }
        None => postproc::RangeRegistry::builtin(),
    };
    let (header, rows) = read_csv(&args.series)?;
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column `{name}` not found in {}", args.series.display()))
    };
    let (ti, vi, qi, pi) = (
        col("t")?,
        col(&args.volume_col)?,
        col(&args.flow_col)?,
        col(&args.pressure_col)?,
    );
    let flow_scale = match args.flow_units.as_str() {
        "m3s" => cardioflow_core::M3S_TO_MLS,
        _ => 1.0,
    };
    let pressure_scale = match args.pressure_units.as_str() {
        "pa" => 1.0 / cardioflow_core::MMHG_TO_PA,
        _ => 1.0,
    };
    let times: Vec<f64> = rows.iter().map(|r| r[ti]).collect();
    let volume: Vec<f64> = rows.iter().map(|r| r[vi]).collect();
    let flow: Vec<f64> = rows.iter().map(|r| r[qi] * flow_scale).collect();
    let pressure: Vec<f64> = rows.iter().map(|r| r[pi] * pressure_scale).collect();
    let b = postproc::chamber_biomarkers(
        &times,
        &volume,
        &flow,
        &pressure,
        args.beat_start,
        args.period,
    )?;
    let sfx = &args.suffix;
    let mut values = vec![
        (format!("ESV_{sfx}"), b.esv),
        (format!("EDV_{sfx}"), b.edv),
        (format!("SV_{sfx}"), b.sv),
        (format!("EF_{sfx}"), 100.0 * b.ef),
    ];
    values.push((
        args.qmax_name.unwrap_or(format!("Q_{sfx}_max")),
        b.q_max,
    ));
    values.push((args.pmax_name.unwrap_or(format!("p_{sfx}_max")), b.p_max));
    if let Some(name) = args.pmean_name {
        values.push((name, b.p_mean));
    }
    let report = postproc::build_report(&values, &registry);
    std::fs::write(&args.out, postproc::report_csv(&report))
        .with_context(|| format!("writing {}", args.out.display()))?;
    for row in &report {
        let status = match row.in_range {
            Some(true) => "in range",
            Some(false) => "OUT OF RANGE",
            None => "no reference",
        };
        eprintln!(
            "{:>10}: {:10.4} {:6} {}",
            row.name, row.value, row.units, status
        );
    }
    eprintln!("report -> {}", args.out.display());
    Ok(())
}

fn postproc_wss(config: &Path, snapshots: &Path, wall_tag: &str, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let file = RunFile::from_toml_str(&text)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let built = file.build(base)?;
    let reference = built.mesh;

    // Fluid properties recorded alongside the snapshots win over the config.
    let props = match std::fs::read_to_string(snapshots.join("run.toml")) {
        Ok(text) => {
            let manifest = SnapshotManifest::from_toml_str(&text)?;
            FluidProperties {
                rho: manifest.rho,
                mu: manifest.mu,
            }
        }
        Err(_) => built.props,
    };

    let mut files: Vec<PathBuf> = std::fs::read_dir(snapshots)
        .with_context(|| format!("listing {}", snapshots.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("step_") && n.ends_with(".vtk"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(
            "no step_*.vtk snapshots in {} (set [output] snapshot_stride in the run config)",
            snapshots.display()
        );
    }

    let wall_tags = vec![wall_tag.to_string()];
    let mut series = Vec::with_capacity(files.len());
    for path in &files {
        let data = vtk::read_vtk_point_data(path)?;
        let (_, vectors) = data
            .vectors
            .iter()
            .find(|(name, _)| name == "velocity")
            .with_context(|| format!("{}: no velocity field", path.display()))?;
        let mesh = reference.with_coordinates(&data.points)?;
        let mut u = cardioflow_core::Field::zeros(&mesh, mesh.dim());
        for (v, val) in vectors.iter().enumerate() {
            for d in 0..mesh.dim() {
                u.set(v, d, val[d]);
            }
        }
        series.push(postproc::wss_field(&mesh, &u, &props, &wall_tags)?);
    }
    let tawss = postproc::tawss(&series)?;
    vtk::write_vtk(
        out,
        &reference,
        &[vtk::PointData {
            name: "TAWSS",
            field: &tawss,
        }],
    )?;
    let (lo, mean, hi) = postproc::regional_stats(&reference, &tawss, wall_tag)?;
    eprintln!(
        "TAWSS on `{wall_tag}` over {} snapshots: min {lo:.4e} mean {mean:.4e} max {hi:.4e} Pa",
        files.len()
    );
    eprintln!("field -> {}", out.display());
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .context("empty CSV")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: bad number on data row {}", path.display(), k + 1))?;
        if row.len() != header.len() {
            bail!("{}: row {} has {} fields, header has {}", path.display(), k + 1, row.len(), header.len());
        }
        rows.push(row);
    }
    Ok((header, rows))
}
