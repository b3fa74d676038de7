use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nearfield::experiments::{
    apply_overrides, bundled_scenario, field_scan_csv, fig5_metadata, load_scenario, run_beamsplit,
    run_fig3, run_fig4, run_fig5, Scenario,
};
use nearfield::{fraunhofer_distance, reactive_bound, Carrier, Region, Vec3};

#[derive(Parser)]
#[command(name = "nearfield", version, about = "Near-field beam focusing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fraunhofer distance, reactive bound and region of a point
    Region(RegionArgs),
    /// Single-user focusing vs. steering sweep (fig3.csv)
    Sweep(RunArgs),
    /// Two-user sum-rate focusing vs. steering sweep (fig4.csv)
    TwoUser(RunArgs),
    /// Normalized xz-plane power scans of both focused beams (fig5_user*.csv)
    Scan(RunArgs),
    /// Wideband focal drift of frequency-flat weights (beamsplit.csv)
    Beamsplit(RunArgs),
    /// Load and validate a scenario without running it
    Validate(ScenarioArgs),
}

#[derive(Args)]
struct RegionArgs {
    /// Carrier frequency, Hz
    #[arg(long)]
    freq: f64,
    /// Array aperture (largest element distance), m
    #[arg(long, conflicts_with_all = ["length", "width"])]
    aperture: Option<f64>,
    /// Rectangular array length, m (aperture is the diagonal)
    #[arg(long, requires = "width")]
    length: Option<f64>,
    /// Rectangular array width, m
    #[arg(long, requires = "length")]
    width: Option<f64>,
    /// Query point `x,y,z` in meters, relative to the array center
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    point: Option<Vec3>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file, or the name of a bundled scenario
    #[arg(long)]
    scenario: String,
    /// Override a scenario key before validation (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
}

fn parse_point(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err("expected x,y,z".into()),
    }
}

fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k.to_string(), v.to_string()))
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let path = Path::new(&args.scenario);
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or(&args.scenario);
        match bundled_scenario(name) {
            Some(doc) => doc.to_string(),
            None => bail!("scenario not found: {}", args.scenario),
        }
    };
    let doc = apply_overrides(&text, &args.overrides)?;
    Ok(load_scenario(&doc)?)
}

fn fmt_m(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.1}")
    }
}

fn region(args: &RegionArgs) -> Result<()> {
    let carrier = Carrier::new(args.freq)?;
    let aperture = match (args.aperture, args.length, args.width) {
        (Some(d), _, _) => d,
        (None, Some(l), Some(w)) => {
            if !(l >= 0.0 && w >= 0.0) {
                bail!("array dimensions must be non-negative");
            }
            l.hypot(w)
        }
        _ => bail!("give either --aperture or both --length and --width"),
    };
    let df = fraunhofer_distance(aperture, carrier)?;
    let rb = reactive_bound(aperture, carrier)?;
    if df == 0.0 {
        println!("fraunhofer: 0 m (always far-field)");
    } else {
        println!("fraunhofer: {} m", fmt_m(df));
    }
    println!("reactive bound: {} m", fmt_m(rb));
    if let Some(p) = args.point {
        let d = p.norm();
        let label = if d > df {
            Region::FarField
        } else if d < rb {
            Region::ReactiveNearField
        } else {
            Region::RadiatingNearField
        };
        println!("region: {label} (distance {d:.3} m)");
    }
    Ok(())
}

fn written(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Region(args) => region(&args),
        Command::Validate(args) => {
            load(&args)?;
            println!("OK");
            Ok(())
        }
        Command::Sweep(args) => {
            let table = run_fig3(&load(&args.scenario)?)?;
            let paths = table.write(&args.output, "fig3")?;
            let peak = table
                .column("se_focus_bpshz")
                .unwrap_or_default()
                .into_iter()
                .fold(0.0, f64::max);
            println!(
                "fig3: {} rows -> {}; peak focus SE {:.3} bits/s/Hz",
                table.rows.len(),
                written(&paths),
                peak
            );
            Ok(())
        }
        Command::TwoUser(args) => {
            let table = run_fig4(&load(&args.scenario)?)?;
            let paths = table.write(&args.output, "fig4")?;
            let peak = |c: &str| table.column(c).unwrap_or_default().into_iter().fold(0.0, f64::max);
            println!(
                "fig4: {} rows -> {}; peak focus SE {:.3} / {:.3} bits/s/Hz",
                table.rows.len(),
                written(&paths),
                peak("se_user1_focus"),
                peak("se_user2_focus")
            );
            Ok(())
        }
        Command::Scan(args) => {
            let scenario = load(&args.scenario)?;
            let (first, second) = run_fig5(&scenario)?;
            fs::create_dir_all(&args.output)?;
            let mut paths = Vec::new();
            for (k, scan) in [&first, &second].into_iter().enumerate() {
                let p = args.output.join(format!("fig5_user{}.csv", k + 1));
                fs::write(&p, field_scan_csv(scan))?;
                paths.push(p);
            }
            let meta = fig5_metadata(&scenario, &[&first, &second]);
            let p = args.output.join("fig5.json");
            fs::write(&p, meta.to_json())?;
            paths.push(p);
            let (i, j) = first.argmax();
            println!(
                "fig5: {}x{} scans -> {}; user1 peak at ({:.2}, {:.2}) m",
                first.spec.resolution[0],
                first.spec.resolution[1],
                written(&paths),
                first.spec.coordinate(0, i),
                first.spec.coordinate(1, j)
            );
            Ok(())
        }
        Command::Beamsplit(args) => {
            let table = run_beamsplit(&load(&args.scenario)?)?;
            let paths = table.write(&args.output, "beamsplit")?;
            let peak = table
                .column("drift_m")
                .unwrap_or_default()
                .into_iter()
                .fold(0.0, |a: f64, d| a.max(d.abs()));
            println!(
                "beamsplit: {} rows -> {}; peak drift {:.4e} m",
                table.rows.len(),
                written(&paths),
                peak
            );
            Ok(())
        }
    }
}


fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
