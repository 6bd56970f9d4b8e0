//! `bandpick`: redundancy scan, entropy ranking, greedy band selection and
//! multispectral filter simulation from the command line.

mod plot;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bandpick::classifier::{ClassifierKind, ClassifierSpec};
use bandpick::collinearity::{
    interband_redundancy, read_ibra_csv, BandMatrix, IbraResult, DEFAULT_SUBSAMPLE_CAP,
};
use bandpick::datacube::{
    extract_patches, load_cube, load_label_map, load_patch_set, save_patch_set, LabeledPatchSet,
};
use bandpick::saliency::{rank_by_entropy, DEFAULT_BIT_DEPTH};
use bandpick::selection::{
    evaluate_selection, greedy_spectral_selection, make_cv_plan, threshold_sweep,
    write_summary_csv, MetricsReport, SelectionReport,
};
use bandpick::sensorsim::{build_filter_bank, simulate_patches, DEFAULT_FWHM_BANDS};
use bandpick::synthetic::PlantedConfig;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use plot::LinePlot;

const THETA_MIN: f64 = 1.5;
const THETA_MAX: f64 = 100.0;

/// A problem with how the tool was invoked; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "bandpick", version, about = "Hyperspectral band selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inter-band redundancy scan: per-band CSV and d(x) plot.
    Ibra(IbraArgs),
    /// Scan, rank and greedily select k bands at one threshold or a range.
    Gss(GssArgs),
    /// Greedy selection at every threshold of a range, best first.
    Sweep(SweepArgs),
    /// Simulate Gaussian filters at the bands of a selection report.
    Simulate(SimulateArgs),
    /// Cross-validate a fixed band subset.
    Evaluate(EvaluateArgs),
    /// Write the planted 12-band benchmark as a patch-set directory.
    GenSynthetic(GenArgs),
    /// Render the d(x) plot of an existing redundancy CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct InputArgs {
    /// HSC1 cube file or patch-set directory.
    #[arg(long, value_parser = existing_path)]
    input: PathBuf,
    /// Label-map CSV for a cube input (-1 marks unlabelled pixels).
    #[arg(long, value_parser = existing_path)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    patch_size: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Row cap for regression fits; larger inputs are stride-subsampled.
    #[arg(long, default_value_t = DEFAULT_SUBSAMPLE_CAP)]
    subsample_cap: usize,
}

#[derive(Args)]
struct ClassifierArgs {
    /// Seed of the cross-validation split and of weight initialisation.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// External classifier command (run with `sh -c`).
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
}

#[derive(Args)]
struct IbraArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10.0, value_parser = parse_theta)]
    theta: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GssArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long, value_parser = parse_theta, conflicts_with = "theta_range")]
    theta: Option<f64>,
    /// Integer-step threshold sweep, e.g. `5:12`.
    #[arg(long, value_parser = parse_theta_range)]
    theta_range: Option<ThetaRange>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_BIT_DEPTH)]
    bit_depth: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long, default_value = "5:12", value_parser = parse_theta_range)]
    theta_range: ThetaRange,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_BIT_DEPTH)]
    bit_depth: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Selection report (`report.json`) naming the filter centres.
    #[arg(long, value_parser = existing_path)]
    report: PathBuf,
    /// Filter FWHM in band-index units.
    #[arg(long, default_value_t = DEFAULT_FWHM_BANDS)]
    fwhm_bands: f64,
    /// Filter FWHM in nanometres, converted with the mean band spacing.
    #[arg(long, conflicts_with = "fwhm_bands")]
    fwhm_nm: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Comma-separated band indices.
    #[arg(long, value_delimiter = ',', required = true)]
    bands: Vec<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    patches: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    patch_size: usize,
    /// Patch-set directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Redundancy CSV written by `ibra` or `gss`.
    #[arg(long, value_parser = existing_path)]
    ibra: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy)]
struct ThetaRange {
    lo: f64,
    hi: f64,
}

impl ThetaRange {
    fn values(self) -> Vec<f64> {
        let steps = (self.hi - self.lo).floor() as usize;
        (0..=steps).map(|i| self.lo + i as f64).collect()
    }
}

fn existing_path(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("{s}: no such file or directory"))
    }
}

fn parse_theta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (THETA_MIN..=THETA_MAX).contains(&v) {
        Ok(v)
    } else {
        Err(format!("threshold must lie in [{THETA_MIN}, {THETA_MAX}], got {v}"))
    }
}

fn parse_theta_range(s: &str) -> Result<ThetaRange, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s}"))?;
    let (lo, hi) = (parse_theta(lo)?, parse_theta(hi)?);
    if lo > hi {
        return Err(format!("empty range {s}"));
    }
    Ok(ThetaRange { lo, hi })
}

impl ClassifierArgs {
    fn spec(&self) -> ClassifierSpec {
        ClassifierSpec {
            kind: match &self.backend {
                Some(command) => ClassifierKind::External {
                    command: command.clone(),
                },
                None => ClassifierKind::LogisticBaseline,
            },
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            seed: self.seed,
        }
    }
}

struct Input {
    matrix: BandMatrix,
    set: Option<LabeledPatchSet>,
}

impl Input {
    fn labelled(&self) -> Result<&LabeledPatchSet> {
        self.set
            .as_ref()
            .ok_or_else(|| usage("labelled data needed: pass a patch-set directory or --labels"))
    }
}

fn load_input(a: &InputArgs) -> Result<Input> {
    let (matrix, set) = if a.input.is_dir() {
        if a.labels.is_some() {
            return Err(usage("--labels applies to cube inputs only"));
        }
        let set = load_patch_set(&a.input)?;
        (BandMatrix::from_patch_set(&set)?, Some(set))
    } else {
        let cube = load_cube(&a.input)?;
        let set = match &a.labels {
            Some(path) => {
                let map = load_label_map(path)?;
                Some(extract_patches(&cube, &map, a.patch_size, a.stride)?)
            }
            None => None,
        };
        (BandMatrix::from_cube(&cube)?, set)
    };
    Ok(Input {
        matrix: matrix.with_subsample_cap(a.subsample_cap),
        set,
    })
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn ibra_csv(r: &IbraResult) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    Ok(buf)
}

fn ibra_svg(wavelengths: &[f64], d: &[f64], candidates: &[usize], theta: f64) -> String {
    LinePlot {
        title: &format!("Spectral distance d(x), VIF threshold {theta}"),
        x_label: "Wavelength (nm)",
        y_label: "d",
        x: wavelengths,
        y: d,
        marked: candidates,
    }
    .render()
}

fn fmt_theta(theta: Option<f64>) -> String {
    theta.map_or_else(|| "-".into(), |t| t.to_string())
}

fn summary_line(r: &SelectionReport) -> String {
    let std = r.metrics.std();
    format!(
        "theta {} k {} bands {:?} ({} nm) f1 {:.4} ± {:.4} oa {:.4}",
        fmt_theta(r.theta),
        r.k,
        r.selected_bands,
        r.selected_wavelengths_nm
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        r.metrics.macro_f1,
        std.macro_f1,
        r.metrics.oa,
    )
}

fn cmd_ibra(a: &IbraArgs) -> Result<()> {
    let input = load_input(&a.input)?;
    let r = interband_redundancy(&input.matrix, a.theta)?;
    write(&a.out, "ibra.csv", ibra_csv(&r)?)?;
    let d: Vec<f64> = r.d.iter().map(|&v| v as f64).collect();
    write(&a.out, "ibra.svg", ibra_svg(&r.wavelengths_nm, &d, &r.candidates, a.theta))?;
    println!(
        "theta {}: {} candidates {:?}",
        a.theta,
        r.candidates.len(),
        r.candidates
    );
    Ok(())
}

fn run_sweep(
    input: &Input,
    classifier: &ClassifierArgs,
    thetas: &[f64],
    k: usize,
    bit_depth: u32,
    out: &Path,
) -> Result<()> {
    let set = input.labelled()?;
    let spec = classifier.spec();
    let plan = make_cv_plan(set, classifier.seed)?;
    let outcome = threshold_sweep(set, &input.matrix, thetas, k, bit_depth, &spec, &plan)?;
    let Some(winner) = outcome.winner() else {
        anyhow::bail!("no candidate bands at any threshold in {thetas:?}");
    };
    let mut summary = Vec::new();
    write_summary_csv(&outcome.reports, &mut summary)?;
    write(out, "summary.csv", summary)?;
    write(out, "sweep.json", serde_json::to_string_pretty(&outcome)? + "\n")?;
    write(out, "report.json", winner.to_json()? + "\n")?;
    for r in &outcome.reports {
        println!("{}", summary_line(r));
    }
    for t in &outcome.empty_thetas {
        println!("theta {t}: no candidates");
    }
    println!("best: {}", summary_line(winner));
    Ok(())
}

fn cmd_gss(a: &GssArgs) -> Result<()> {
    let input = load_input(&a.input)?;
    if let Some(range) = a.theta_range {
        return run_sweep(&input, &a.classifier, &range.values(), a.k, a.bit_depth, &a.out);
    }
    let theta = a.theta.unwrap_or(10.0);
    let set = input.labelled()?;
    let spec = a.classifier.spec();
    let plan = make_cv_plan(set, a.classifier.seed)?;
    let ibra = interband_redundancy(&input.matrix, theta)?;
    if ibra.candidates.is_empty() {
        anyhow::bail!("no candidate bands at threshold {theta}");
    }
    let ranking = rank_by_entropy(&input.matrix, &ibra.candidates, a.bit_depth)?;
    let mut report =
        greedy_spectral_selection(set, &input.matrix, &ranking.order(), a.k, &spec, &plan)?;
    report.theta = Some(theta);

    let mut ranking_csv = Vec::new();
    ranking.write_csv(input.matrix.axis().as_slice(), &mut ranking_csv)?;
    let mut summary = Vec::new();
    write_summary_csv(std::slice::from_ref(&report), &mut summary)?;
    write(&a.out, "ibra.csv", ibra_csv(&ibra)?)?;
    write(&a.out, "ranking.csv", ranking_csv)?;
    write(&a.out, "summary.csv", summary)?;
    write(&a.out, "report.json", report.to_json()? + "\n")?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", summary_line(&report));
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let input = load_input(&a.input)?;
    run_sweep(
        &input,
        &a.classifier,
        &a.theta_range.values(),
        a.k,
        a.bit_depth,
        &a.out,
    )
}

fn metrics_json(bands: &[usize], wavelengths: &[f64], m: &MetricsReport) -> serde_json::Value {
    json!({
        "bands": bands,
        "wavelengths_nm": wavelengths,
        "metrics": m,
        "std": m.std(),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report)
        .with_context(|| format!("reading {}", a.report.display()))?;
    let report = SelectionReport::from_json(&text)
        .with_context(|| format!("parsing {}", a.report.display()))?;
    let input = load_input(&a.input)?;
    let set = input.labelled()?;
    let axis = set.axis().as_slice();
    for (&b, &w) in report.selected_bands.iter().zip(&report.selected_wavelengths_nm) {
        match axis.get(b) {
            Some(&nm) if (nm - w).abs() <= 1e-6 * w.abs().max(1.0) => {}
            _ => anyhow::bail!(
                "report band {b} ({w} nm) does not exist in the {}-band dataset",
                axis.len()
            ),
        }
    }
    let spec = a.classifier.spec();
    let plan = make_cv_plan(set, a.classifier.seed)?;
    let fwhm = match a.fwhm_nm {
        Some(nm) if axis.len() > 1 => {
            nm * (axis.len() - 1) as f64 / (axis[axis.len() - 1] - axis[0])
        }
        Some(_) => return Err(usage("--fwhm-nm needs at least two bands")),
        None => a.fwhm_bands,
    };
    let bank = build_filter_bank(&report.selected_bands, set.axis(), fwhm)?;
    let simulated = simulate_patches(set, &bank)?;
    let raw = evaluate_selection(set, &bank.centers, &spec, &plan)?;
    let all: Vec<usize> = (0..simulated.bands()).collect();
    let sim = evaluate_selection(&simulated, &all, &spec, &plan)?;

    let mut bank_csv = Vec::new();
    bank.write_csv(&mut bank_csv)?;
    write(&a.out, "filter_bank.csv", bank_csv)?;
    save_patch_set(&simulated, a.out.join("simulated"))?;
    let paired = json!({
        "fwhm_bands": fwhm,
        "raw": metrics_json(&bank.centers, &bank.center_wavelengths_nm, &raw),
        "simulated": metrics_json(&all, &bank.center_wavelengths_nm, &sim),
        "f1_gap": (raw.macro_f1 - sim.macro_f1).abs(),
    });
    write(&a.out, "simulation.json", serde_json::to_string_pretty(&paired)? + "\n")?;
    println!(
        "raw f1 {:.4}  simulated f1 {:.4}  (FWHM {} bands)",
        raw.macro_f1, sim.macro_f1, fwhm
    );
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let input = load_input(&a.input)?;
    let set = input.labelled()?;
    let spec = a.classifier.spec();
    let plan = make_cv_plan(set, a.classifier.seed)?;
    let m = evaluate_selection(set, &a.bands, &spec, &plan)?;
    let wavelengths: Vec<f64> = a.bands.iter().map(|&b| set.axis().as_slice()[b]).collect();
    let value = metrics_json(&a.bands, &wavelengths, &m);
    write(&a.out, "evaluation.json", serde_json::to_string_pretty(&value)? + "\n")?;
    let std = m.std();
    println!(
        "bands {:?}: oa {:.4} ± {:.4} prec {:.4} rec {:.4} f1 {:.4} ± {:.4}",
        a.bands, m.oa, std.oa, m.macro_precision, m.macro_recall, m.macro_f1, std.macro_f1
    );
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let config = PlantedConfig {
        seed: a.seed,
        patches: a.patches,
        classes: a.classes,
        patch_size: a.patch_size,
        ..PlantedConfig::default()
    };
    let set = config.generate()?;
    save_patch_set(&set, &a.out)?;
    println!(
        "{} patches, {} classes, {} bands -> {}",
        set.len(),
        set.classes(),
        set.bands(),
        a.out.display()
    );
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let file = fs::File::open(&a.ibra).with_context(|| format!("opening {}", a.ibra.display()))?;
    let rows = read_ibra_csv(file).with_context(|| format!("parsing {}", a.ibra.display()))?;
    let x: Vec<f64> = rows.iter().map(|r| r.wavelength_nm).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.d as f64).collect();
    let marked: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].is_candidate).collect();
    let path = write(
        &a.out,
        "ibra.svg",
        LinePlot {
            title: "Spectral distance d(x)",
            x_label: "Wavelength (nm)",
            y_label: "d",
            x: &x,
            y: &d,
            marked: &marked,
        }
        .render(),
    )?;
    println!("{}", path.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("BANDPICK_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("BANDPICK_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Ibra(a) => cmd_ibra(a),
        Command::Gss(a) => cmd_gss(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::GenSynthetic(a) => cmd_gen(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
