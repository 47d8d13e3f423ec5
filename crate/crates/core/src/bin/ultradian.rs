//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
//! 3 artifacts written but a certification failed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ultradian::analysis::{amplitude_gain, classify, AmplitudeMeasure};
use ultradian::config::{resolve, ExperimentConfig, Layers, PRESETS};
use ultradian::forcing::InfusionProtocol;
use ultradian::linear::{
    approx_gap, char_coeffs, hopf_curve, omega_bounds, ray_intercept, write_curves_csv, RESIDUAL_TOLERANCE,
};
use ultradian::model::equilibrium;
use ultradian::simulate::{check_invariants, constant_history, series, simulate};
use ultradian::sweep::{run_grid, MapKind, Scalar};
use ultradian::{Error, VERSION};

#[derive(Parser, Debug)]
#[command(name = "ultradian", version, about = "Glucose-insulin delay model: simulation, Hopf curves and entrainment maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the model and write the time series and response summary.
    Simulate(Common),
    /// Equilibrium, characteristic coefficients and Hopf frequency bounds.
    Equilibrium(Common),
    /// Hopf curve(s) in the (tau_I, tau_G) plane.
    Hopf(Common),
    /// Grid sweep (resonance, duration or fasting map).
    Sweep(Common),
    /// Classify the long-term response and compare with the fasting run.
    Classify(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset applied below the config file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Flat TOML file of model parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Override a config key, e.g. --set protocol.g_max=1.2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Reserved; every computation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    command: String,
    certified: bool,
    notes: Vec<String>,
    files: Vec<ManifestEntry>,
}

struct Run {
    dir: PathBuf,
    command: &'static str,
    files: Vec<PathBuf>,
    certified: bool,
    notes: Vec<String>,
}

impl Run {
    fn new(cfg: &ExperimentConfig, command: &'static str) -> Result<Self, Error> {
        std::fs::create_dir_all(&cfg.output.dir)?;
        let mut run = Run {
            dir: cfg.output.dir.clone(),
            command,
            files: Vec::new(),
            certified: true,
            notes: Vec::new(),
        };
        run.write("config.toml", |w| Ok(w.write_all(cfg.to_toml().as_bytes())?))?;
        Ok(run)
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>) -> Result<(), Error> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn fail_certification(&mut self, note: String) {
        eprintln!("certification failed: {note}");
        self.certified = false;
        self.notes.push(note);
    }

    fn finish(self) -> Result<bool, Error> {
        let mut files = Vec::new();
        for path in &self.files {
            let bytes = std::fs::read(path)?;
            files.push(ManifestEntry {
                path: path.file_name().unwrap().to_string_lossy().into_owned(),
                sha256: hex(&Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = Manifest {
            version: VERSION,
            command: self.command.to_string(),
            certified: self.certified,
            notes: self.notes,
            files,
        };
        let f = File::create(self.dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(f, &manifest)?;
        println!("wrote {} files to {}", manifest.files.len() + 1, self.dir.display());
        Ok(self.certified)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn load(c: &Common) -> Result<ExperimentConfig, Error> {
    resolve(&Layers {
        preset: c.preset.clone(),
        file: c.config.clone(),
        params_file: c.params.clone(),
        sets: c.sets.clone(),
        out: c.out.clone(),
        workers: c.workers,
    })
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut run = Run::new(cfg, "simulate")?;
    let history = constant_history(&cfg.model, cfg.integrator.initial_glucose, cfg.integrator.initial_insulin);
    let traj = simulate(&cfg.model, &cfg.protocol, history, &cfg.integrator_config())?;
    if let Err(msg) = check_invariants(&traj, &cfg.model) {
        run.fail_certification(msg);
    }
    let rows = series(&traj, &cfg.model, &cfg.protocol, cfg.output.stride);
    run.write("timeseries.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["t", "G", "I", "G_in_rate"])?;
        for r in rows {
            c.write_record([
                format!("{:.4}", r.t),
                format!("{:.6}", r.glucose),
                format!("{:.6}", r.insulin),
                format!("{:.6}", r.infusion),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    match classify(&traj, &cfg.model, &cfg.protocol, &cfg.analysis) {
        Ok(summary) => {
            print!("{}", summary.report());
            run.write("summary.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(ultradian::analysis::ResponseSummary::CSV_HEADER)?;
                c.write_record(summary.csv_record())?;
                c.flush()?;
                Ok(())
            })?;
            run.write("summary.txt", |w| Ok(w.write_all(summary.report().as_bytes())?))?;
        }
        Err(Error::SpanTooShort { span, needed }) => {
            println!("span {span} min is too short for classification (needs {needed}); time series only");
        }
        Err(e) => return Err(e),
    }
    run.finish()
}

fn cmd_equilibrium(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut run = Run::new(cfg, "equilibrium")?;
    let g_in = cfg.protocol.mean_rate();
    let eq = equilibrium(&cfg.model, g_in)?;
    let coeffs = char_coeffs(&cfg.model, &eq);
    let bounds = omega_bounds(&coeffs);
    println!("G_in        : {g_in} mg/(dl min)");
    println!("G*          : {:.6} mg/dl", eq.g_star);
    println!("I*          : {:.6} uU/ml", eq.i_star);
    println!("residuals   : {:.3e} (glucose), {:.3e} (insulin)", eq.residual_glucose, eq.residual_insulin);
    println!(
        "coefficients: alpha0 {:.6e}, alpha1 {:.6e}, beta1 {:.6e}, beta2 {:.6e}",
        coeffs.alpha0, coeffs.alpha1, coeffs.beta1, coeffs.beta2
    );
    match &bounds {
        Ok(b) => println!(
            "omega_I {:.6} (tau_G {:.4}), omega_G {:.6} (tau_I {:.4})",
            b.omega_i, b.tau_g_at_omega_i, b.omega_g, b.tau_i_at_omega_g
        ),
        Err(e) => println!("omega bounds: {e}"),
    }
    #[derive(Serialize)]
    struct Out<'a> {
        equilibrium: &'a ultradian::model::Equilibrium,
        alpha0: f64,
        alpha1: f64,
        beta1: f64,
        beta2: f64,
        bounds: Option<ultradian::linear::OmegaBounds>,
    }
    let out = Out {
        equilibrium: &eq,
        alpha0: coeffs.alpha0,
        alpha1: coeffs.alpha1,
        beta1: coeffs.beta1,
        beta2: coeffs.beta2,
        bounds: bounds.ok(),
    };
    run.write("equilibrium.json", |w| Ok(serde_json::to_writer_pretty(w, &out)?))?;
    run.finish()
}

fn cmd_hopf(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut run = Run::new(cfg, "hopf")?;
    let opts = cfg.hopf.curve_options();
    let mut curves = Vec::new();
    for &g_in in &cfg.hopf.g_in {
        let eq = equilibrium(&cfg.model, g_in)?;
        let coeffs = char_coeffs(&cfg.model, &eq);
        let curve = hopf_curve(&coeffs, &opts)?;
        let diag = ray_intercept(&coeffs, 4.0, &opts).ok();
        println!(
            "G_in {g_in:5.2}: {} samples, max residual {:.2e}, tau_G = 4 tau_I intercept {}",
            curve.samples.len(),
            curve.max_residual(),
            diag.map_or("-".to_string(), |d| format!("({:.4}, {:.4})", d.tau_i, d.tau_g))
        );
        if !curve.is_certified() {
            run.fail_certification(format!(
                "G_in {g_in}: residual {:.3e} above {RESIDUAL_TOLERANCE:e}",
                curve.max_residual()
            ));
        }
        if cfg.hopf.approx {
            match approx_gap(&coeffs, 20.0, 100) {
                Ok(gap) => println!("           approximation max |tau_G gap| {gap:.4} min"),
                Err(e) => println!("           approximation gap unavailable: {e}"),
            }
        }
        curves.push(curve);
    }
    let name = if curves.len() == 1 { "hopf_curve.csv" } else { "hopf_family.csv" };
    run.write(name, |w| write_curves_csv(w, &curves, cfg.hopf.approx))?;
    run.finish()
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut run = Run::new(cfg, "sweep")?;
    let map = run_grid(&cfg.model, &cfg.sweep, &cfg.sweep_options())?;
    let name = match cfg.sweep.kind {
        MapKind::Resonance => "resonance_map",
        MapKind::Duration => "duration_map",
        MapKind::Fasting => "fasting_map",
    };
    run.write(&format!("{name}.csv"), |w| map.write_csv(w))?;
    if cfg.output.svg {
        run.write(&format!("{name}_gmax.svg"), |w| map.write_svg(w, Scalar::GMax, true))?;
        if cfg.sweep.kind == MapKind::Fasting {
            run.write(&format!("{name}_period.svg"), |w| map.write_svg(w, Scalar::Period, false))?;
            run.write(&format!("{name}_gmin.svg"), |w| map.write_svg(w, Scalar::GMin, false))?;
        }
    }
    if let Some(t0) = map.natural_period {
        println!("natural period T0 = {t0:.3} min ({:.3} h)", t0 / 60.0);
    }
    let failed = map.failed_cells();
    let violations = map.cells.iter().filter(|c| c.invariant_violation.is_some()).count();
    println!("{} cells, {failed} failed, {violations} invariant violations", map.cells.len());
    if failed > 0 {
        run.fail_certification(format!("{failed} cells failed"));
    }
    if violations > 0 {
        run.fail_certification(format!("{violations} cells violate positivity or the insulin bound"));
    }
    println!("config hash {}", map.provenance.config_hash);
    run.finish()
}

fn cmd_classify(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut run = Run::new(cfg, "classify")?;
    let history = || constant_history(&cfg.model, cfg.integrator.initial_glucose, cfg.integrator.initial_insulin);
    let traj = simulate(&cfg.model, &cfg.protocol, history(), &cfg.integrator_config())?;
    let summary = classify(&traj, &cfg.model, &cfg.protocol, &cfg.analysis)?;
    print!("{}", summary.report());
    let fasting = InfusionProtocol::fasting();
    let span = cfg.analysis.required_span(&fasting, cfg.model.delays());
    let base_traj = simulate(
        &cfg.model,
        &fasting,
        history(),
        &ultradian::dde::IntegratorConfig::new(cfg.integrator.dt, span),
    )?;
    let base = classify(&base_traj, &cfg.model, &fasting, &cfg.analysis)?;
    let mut record = summary.csv_record();
    let mut header: Vec<&str> = ultradian::analysis::ResponseSummary::CSV_HEADER.to_vec();
    for (label, m) in [("gain_max", AmplitudeMeasure::Maximum), ("gain_peak_to_peak", AmplitudeMeasure::PeakToPeak)] {
        header.push(label);
        match amplitude_gain(&summary, &base, m) {
            Ok(g) => {
                println!("{label:15}: {g:.4}");
                record.push(format!("{g:.6}"));
            }
            Err(e) => {
                println!("{label:15}: {e}");
                record.push(String::new());
            }
        }
    }
    run.write("classification.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(&header)?;
        c.write_record(&record)?;
        c.flush()?;
        Ok(())
    })?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Simulate(c) | Command::Equilibrium(c) | Command::Hopf(c) | Command::Sweep(c) | Command::Classify(c)) =
        &cli.command;
    let cfg = match load(c) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Equilibrium(_) => cmd_equilibrium(&cfg),
        Command::Hopf(_) => cmd_hopf(&cfg),
        Command::Sweep(_) => cmd_sweep(&cfg),
        Command::Classify(_) => cmd_classify(&cfg),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
