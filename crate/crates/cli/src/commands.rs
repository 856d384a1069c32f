use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use sharing_effects::io::session_log::read_session_log_manifest;
use sharing_effects::io::svg::{render_error_plot, Series, SeriesPoint};
use sharing_effects::io::tables::{self, PLOT_DATA_FILE};
use sharing_effects::io::{read_session_log, write_session_log, AteReport, ConfigFile, RunManifest};
use sharing_effects::parallel;
use sharing_effects::{run_sweep, sample_dataset, AssignmentPolicy, EstimatorKind, SimulationSeed, VariantId};

use crate::error::CliError;
use crate::{EstimateArgs, ReplayArgs, ReportArgs, SimulateArgs, SweepArgs};

pub const MANIFEST_FILE: &str = "manifest.json";
const METADATA_OPEN: &str = r#"<metadata id="run-manifest">"#;
const METADATA_CLOSE: &str = "</metadata>";

pub struct Context {
    pub workers: usize,
    pub argv: Vec<String>,
}

impl Context {
    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::new(self.argv.clone(), Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true));
        m.command = command.to_string();
        m
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    ConfigFile::parse(&read_text(path)?).map_err(|e| CliError::format(path, e))
}

fn parse_snapshot(manifest: &RunManifest, origin: &Path) -> Result<ConfigFile, CliError> {
    let text = manifest
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{}: manifest has no config snapshot", origin.display())))?;
    ConfigFile::parse(text).map_err(|e| CliError::format(origin, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes through `write` and deletes the file again if anything fails.
fn write_or_remove(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let result = write(&mut out).and_then(|()| out.flush());
    result.map_err(|e| {
        let _ = fs::remove_file(path);
        CliError::io(path, e)
    })
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> Result<(), CliError> {
    let file = read_config(&args.config)?;
    let constant = match &args.constant {
        None => None,
        Some(name) => {
            let index = file
                .variant_names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| CliError::Usage(format!("--constant: no variant named '{name}' in {}", args.config.display())))?;
            Some(VariantId::from(index))
        }
    };
    let seed = SimulationSeed::new(args.seed).with_stream(args.stream);
    let n = usize::try_from(args.n).map_err(|_| CliError::Usage(format!("--n {} is too large", args.n)))?;
    run_simulate(ctx, &file, seed, n, constant, &args.out)
}

fn run_simulate(
    ctx: &Context,
    file: &ConfigFile,
    seed: SimulationSeed,
    n: usize,
    constant: Option<VariantId>,
    out: &Path,
) -> Result<(), CliError> {
    let config = file.mdp_config().map_err(|e| CliError::Config(e.to_string()))?;
    let policy = constant.map_or(AssignmentPolicy::Production, AssignmentPolicy::Constant);
    let dataset = parallel::with_workers(ctx.workers, || sample_dataset(&config, policy, file.knob(), seed, n))?;

    let mut manifest = ctx.manifest("simulate");
    manifest.seed = Some(seed);
    manifest.n_trajectories = Some(n);
    manifest.constant_variant = constant.map(|v| v.0);
    manifest.workers = Some(ctx.workers);
    manifest.config = Some(file.to_toml());
    write_or_remove(out, |w| write_session_log(w, &dataset, Some(&manifest)))
}

pub fn estimate(ctx: &Context, args: &EstimateArgs) -> Result<(), CliError> {
    let policy_file = read_config(&args.policy)?;
    run_estimate(ctx, &policy_file, &args.log, &args.estimators, args.out.as_deref())
}

fn run_estimate(
    ctx: &Context,
    policy_file: &ConfigFile,
    log: &Path,
    estimators: &[EstimatorKind],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let policy = policy_file.policy().map_err(|e| CliError::Config(e.to_string()))?;
    let reader = BufReader::new(File::open(log).map_err(|e| CliError::io(log, e))?);
    let dataset = read_session_log(reader, policy).map_err(|e| CliError::format(log, e))?;
    let report = AteReport::compute(&dataset, estimators, &policy_file.variant_names())?;

    let mut manifest = ctx.manifest("estimate");
    manifest.estimators = estimators.to_vec();
    manifest.config = Some(policy_file.to_toml());
    manifest.inputs = vec![log.display().to_string()];
    let text = report.render(Some(&manifest));
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    if report.all_ates_degenerate() {
        return Err(CliError::Numeric("every treatment-effect estimate is degenerate".into()));
    }
    Ok(())
}

pub fn sweep(ctx: &Context, args: &SweepArgs) -> Result<(), CliError> {
    let mut file = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        match file.sweep.as_mut() {
            Some(sweep) => sweep.seed = seed,
            None => return Err(CliError::Config(format!("{}: no [sweep] section", args.config.display()))),
        }
    }
    run_sweep_to(ctx, &file, &args.out)
}

/// Tracks created paths so a failed run leaves nothing behind.
struct OutputGuard {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        write_text(&path, text)
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn run_sweep_to(ctx: &Context, file: &ConfigFile, out: &Path) -> Result<(), CliError> {
    let plan = file.sweep_plan().map_err(|e| CliError::Config(e.to_string()))?;
    let result = run_sweep(&plan, ctx.workers)?;
    let names = file.variant_names();

    let mut guard = OutputGuard::new(out)?;
    for curve in &result.curves {
        guard.write(&tables::curve_file_name(curve, &names), &tables::curve_table(curve))?;
    }
    guard.write(PLOT_DATA_FILE, &tables::plot_data_table(&result, &names))?;
    let mut manifest = ctx.manifest("sweep");
    manifest.seed = Some(plan.base_seed);
    manifest.workers = Some(ctx.workers);
    manifest.estimators = plan.estimators.clone();
    manifest.config = Some(file.to_toml());
    guard.write(MANIFEST_FILE, &manifest.to_json_pretty())?;
    guard.committed = true;
    Ok(())
}

pub fn report(ctx: &Context, args: &ReportArgs) -> Result<(), CliError> {
    run_report(ctx, &args.sweep_dir, &args.out)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn unescape_xml(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")
}

pub fn plot_file_name(i: &str, j: &str) -> String {
    format!("{}_vs_{}.svg", tables::file_safe(i), tables::file_safe(j))
}

fn run_report(ctx: &Context, sweep_dir: &Path, out: &Path) -> Result<(), CliError> {
    let data_path = sweep_dir.join(PLOT_DATA_FILE);
    if !data_path.is_file() {
        return Err(CliError::Io(format!("{}: no sweep output ({PLOT_DATA_FILE} not found)", sweep_dir.display())));
    }
    let rows = tables::parse_plot_data(&read_text(&data_path)?).map_err(|e| CliError::format(&data_path, e))?;
    if rows.is_empty() {
        return Err(CliError::Io(format!("{}: sweep output is empty", data_path.display())));
    }

    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let pair = (r.variant_i.clone(), r.variant_j.clone());
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    let estimators: BTreeSet<EstimatorKind> = rows.iter().map(|r| r.estimator).collect();

    let mut manifest = ctx.manifest("report");
    manifest.inputs = vec![sweep_dir.display().to_string()];
    let metadata = format!("{METADATA_OPEN}{}{METADATA_CLOSE}\n", escape_xml(&manifest.to_json_line()));

    let mut guard = OutputGuard::new(out)?;
    for (i, j) in &pairs {
        let series: Vec<Series> = estimators
            .iter()
            .map(|&kind| Series {
                label: kind.label().to_string(),
                points: rows
                    .iter()
                    .filter(|r| r.estimator == kind && &r.variant_i == i && &r.variant_j == j)
                    .filter_map(|r| {
                        Some(SeriesPoint {
                            x: r.sample_size as f64,
                            y: r.mse?,
                            low: r.ci_low?,
                            high: r.ci_high?,
                        })
                    })
                    .collect(),
            })
            .collect();
        let svg = render_error_plot(
            &format!("Treatment-effect MSE, {i} vs {j}"),
            "trajectories (N)",
            "mean squared error",
            &series,
        );
        let body = match svg.split_once('\n') {
            Some((first, rest)) => format!("{first}\n{metadata}{rest}"),
            None => svg,
        };
        guard.write(&plot_file_name(i, j), &body)?;
    }
    guard.committed = true;
    Ok(())
}

fn manifest_of(path: &Path) -> Result<RunManifest, CliError> {
    let text = read_text(path)?;
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    if text.trim_start().starts_with('{') {
        return RunManifest::from_json(&text).map_err(|e| bad(format!("bad manifest: {e}")));
    }
    if let Some(start) = text.find(METADATA_OPEN) {
        let rest = &text[start + METADATA_OPEN.len()..];
        let end = rest.find(METADATA_CLOSE).ok_or_else(|| bad("unterminated manifest metadata".into()))?;
        return RunManifest::from_json(&unescape_xml(&rest[..end])).map_err(|e| bad(format!("bad manifest: {e}")));
    }
    read_session_log_manifest(text.as_bytes())
        .map_err(|e| CliError::format(path, e))?
        .ok_or_else(|| bad("no manifest found".into()))
}

pub fn replay(ctx: &Context, args: &ReplayArgs) -> Result<(), CliError> {
    let manifest = manifest_of(&args.from)?;
    let missing = |what: &str| CliError::Config(format!("{}: manifest has no {what}", args.from.display()));
    let input = || manifest.inputs.first().map(PathBuf::from).ok_or_else(|| missing("input path"));
    match manifest.command.as_str() {
        "simulate" => {
            let file = parse_snapshot(&manifest, &args.from)?;
            let seed = manifest.seed.ok_or_else(|| missing("seed"))?;
            let n = manifest.n_trajectories.ok_or_else(|| missing("trajectory count"))?;
            run_simulate(ctx, &file, seed, n, manifest.constant_variant.map(VariantId), &args.out)
        }
        "estimate" => {
            let file = parse_snapshot(&manifest, &args.from)?;
            run_estimate(ctx, &file, &input()?, &manifest.estimators, Some(&args.out))
        }
        "sweep" => run_sweep_to(ctx, &parse_snapshot(&manifest, &args.from)?, &args.out),
        "report" => run_report(ctx, &input()?, &args.out),
        other => Err(CliError::Config(format!("{}: unknown command '{other}' in manifest", args.from.display()))),
    }
}
