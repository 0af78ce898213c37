//! Subcommand implementations.
//!
//! Random-stream convention per (seed, cell): stream 0 draws the ground
//! truth direction, stream 1 the covariates, stream 2 the corruption, and
//! the solver's oracle calls use streams 16 + t. Two cells with the same
//! seed and dimension therefore share their clean data across regimes.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use robust_phase::altmin::{run_altmin, run_log_csv, AltMinConfig, Termination};
use robust_phase::datagen::{
    apply_corruption, dataset_to_string, generate_clean, read_dataset, CorruptionKind,
    CorruptionPlan, CorruptionSelection, RngSeed,
};
use robust_phase::metrics::{
    relative_error, summarize, summary_csv_row, trial_csv_row, TrialRecord, SUMMARY_CSV_HEADER,
    TRIAL_CSV_HEADER,
};
use robust_phase::objective::{landscape_grid, GridSpec};
use robust_phase::oracle::OracleConfig;
use robust_phase::signal::SignalVec;
use robust_phase::verify::default_checks;
use robust_phase::MeasurementSet;

use crate::config::{Config, CorruptionSpec};

pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

type CliResult = Result<(), CliError>;

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("cannot create output dir {}: {e}", out.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn unit_sphere_signal(d: usize, seed: RngSeed) -> SignalVec {
    let mut rng = seed.rng();
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return SignalVec::new(g.into_iter().map(|v| v / norm).collect()).unwrap();
        }
    }
}

fn build_plan(spec: &CorruptionSpec, k: usize) -> CorruptionPlan {
    match spec {
        CorruptionSpec::None => CorruptionPlan {
            kind: CorruptionKind::None,
            k,
            selection: CorruptionSelection::RandomUniform,
        },
        CorruptionSpec::Uniform { lo, hi } => CorruptionPlan::uniform(*lo, *hi, k),
        CorruptionSpec::Constant { value } => CorruptionPlan::constant(*value, k),
        CorruptionSpec::Signflip => CorruptionPlan {
            kind: CorruptionKind::StrongAdaptive(Box::new(|_x, y| -y)),
            k,
            selection: CorruptionSelection::LargestResponses,
        },
    }
}

fn synth_dataset(
    cfg: &Config,
    d: usize,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(MeasurementSet, SignalVec), CliError> {
    let theta_star = unit_sphere_signal(d, RngSeed::new(seed, 0));
    let clean = generate_clean(d, n, &theta_star, RngSeed::new(seed, 1))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let data = apply_corruption(
        &clean,
        &build_plan(&cfg.corruption, k),
        RngSeed::new(seed, 2),
    )
    .map_err(|e| {
        if k > n {
            CliError::usage(format!("k exceeds n (k = {k}, n = {n})"))
        } else {
            CliError::usage(e.to_string())
        }
    })?;
    Ok((data, theta_star))
}

fn altmin_config(cfg: &Config, d: usize, k: usize) -> AltMinConfig {
    let mut oracle = OracleConfig::for_dim(d);
    if let Some(c) = cfg.step_scale_c {
        oracle.step_scale_c = c;
    }
    if let Some(t) = cfg.oracle_iters {
        oracle.max_iters = t;
    }
    if let Some(tol) = cfg.grad_tol {
        oracle.grad_tol = tol;
    }
    if let Some(est) = cfg.kappa_estimator {
        oracle.kappa_estimator = est;
    }
    let mut alt = AltMinConfig::new(k).with_oracle(oracle);
    if let Some(beta) = cfg.beta {
        alt = alt.with_beta(beta);
    }
    if let Some(cap) = cfg.max_outer_iters {
        alt = alt.with_max_outer_iters(cap);
    }
    alt
}

fn generation_geometry(cfg: &Config) -> Result<(usize, usize, usize, u64), CliError> {
    let d = *cfg
        .dims
        .first()
        .ok_or_else(|| CliError::usage("config needs d"))?;
    let n = cfg.sample_count(d).map_err(CliError::usage)?;
    let k = match (cfg.explicit_k, cfg.regimes.first()) {
        (Some(k), _) => k,
        (None, Some(regime)) => cfg
            .corruption_count(regime, n, d)
            .map_err(CliError::usage)?,
        (None, None) => 0,
    };
    let seed = *cfg
        .seeds
        .first()
        .ok_or_else(|| CliError::usage("config needs at least one seed"))?;
    Ok((d, n, k, seed))
}

fn truth_to_string(theta: &SignalVec) -> String {
    let mut out = String::new();
    for v in theta.as_slice() {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

fn truth_from_path(path: &Path) -> Result<SignalVec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read truth {}: {e}", path.display())))?;
    let entries: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| CliError::usage(format!("bad truth entry {l:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    SignalVec::new(entries).map_err(|e| CliError::usage(e.to_string()))
}

pub fn cmd_generate(cfg: &Config, out: &Path, quiet: bool) -> CliResult {
    let (d, n, k, seed) = generation_geometry(cfg)?;
    if k > n {
        return Err(CliError::usage(format!("k exceeds n (k = {k}, n = {n})")));
    }
    let (data, theta_star) = synth_dataset(cfg, d, n, k, seed)?;
    ensure_out_dir(out)?;
    write_file(&out.join("dataset.txt"), &dataset_to_string(&data))?;
    write_file(&out.join("truth.txt"), &truth_to_string(&theta_star))?;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for y in data.responses() {
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !quiet {
        println!(
            "dataset: n={} d={} k={} y_min={y_min} y_max={y_max}",
            data.len(),
            data.dim(),
            data.corrupted_indices().len()
        );
    }
    Ok(())
}

pub fn cmd_run(cfg: &Config, out: &Path, quiet: bool) -> CliResult {
    let (data, truth) = match &cfg.data {
        Some(path) => {
            let data = read_dataset(path)
                .map_err(|e| CliError::usage(format!("cannot load {}: {e}", path.display())))?;
            let truth_path = cfg.truth.clone().or_else(|| {
                let sibling = path.with_file_name("truth.txt");
                sibling.exists().then_some(sibling)
            });
            let truth = truth_path.map(|p| truth_from_path(&p)).transpose()?;
            (data, truth)
        }
        None => {
            let (d, n, k, seed) = generation_geometry(cfg)?;
            let (data, theta_star) = synth_dataset(cfg, d, n, k, seed)?;
            (data, Some(theta_star))
        }
    };
    let n = data.len();
    let k = cfg.explicit_k.unwrap_or(data.corrupted_indices().len());
    if 2 * k >= n {
        return Err(CliError::usage(format!(
            "solver needs 2k < n (k = {k}, n = {n}); set k explicitly"
        )));
    }
    let seed = *cfg.seeds.first().unwrap_or(&1);
    let mut alt_cfg = altmin_config(cfg, data.dim(), k);
    if let Some(theta_star) = &truth {
        alt_cfg = alt_cfg.with_truth(theta_star.clone());
    }
    let result = run_altmin(&data, &alt_cfg, RngSeed::new(seed, 16))
        .map_err(|e| CliError::numerical(e.to_string()))?;

    ensure_out_dir(out)?;
    let mut log = String::new();
    for line in cfg.echo_lines() {
        log.push_str(&format!("# {line}\n"));
    }
    log.push_str(&run_log_csv(&result));
    write_file(&out.join("run_log.csv"), &log)?;

    let rel_error = match &truth {
        Some(theta_star) => relative_error(&result.theta_hat, theta_star)
            .map_err(|e| CliError::numerical(e.to_string()))?,
        None => f64::NAN,
    };
    if !quiet || matches!(result.termination, Termination::OracleError(_)) {
        println!(
            "rel_error={rel_error}, outer_iters={}, termination={}",
            result.outer_iters, result.termination
        );
    }
    if let Termination::OracleError(msg) = &result.termination {
        if msg.contains("step size too large") {
            return Err(CliError::numerical(format!("oracle divergence: {msg}")));
        }
    }
    Ok(())
}

struct Cell {
    regime_label: String,
    d: usize,
    n: usize,
    k: usize,
    seed: u64,
}

fn sweep_cells(cfg: &Config) -> Result<Vec<Cell>, CliError> {
    if cfg.dims.is_empty() {
        return Err(CliError::usage("sweep needs a nonempty d list"));
    }
    if cfg.regimes.is_empty() {
        return Err(CliError::usage("sweep needs a nonempty regimes list"));
    }
    if cfg.seeds.is_empty() {
        return Err(CliError::usage("sweep needs a nonempty seeds list"));
    }
    let mut cells = Vec::new();
    for regime in &cfg.regimes {
        for &d in &cfg.dims {
            let n = cfg.sample_count(d).map_err(CliError::usage)?;
            let k = cfg
                .corruption_count(regime, n, d)
                .map_err(CliError::usage)?;
            if 2 * k >= n {
                return Err(CliError::usage(format!(
                    "regime {} at d = {d} gives k = {k}, n = {n}; need 2k < n",
                    regime.label
                )));
            }
            for &seed in &cfg.seeds {
                cells.push(Cell {
                    regime_label: regime.label.clone(),
                    d,
                    n,
                    k,
                    seed,
                });
            }
        }
    }
    cells.sort_by(|a, b| {
        (&a.regime_label, a.d, a.n, a.seed).cmp(&(&b.regime_label, b.d, b.n, b.seed))
    });
    Ok(cells)
}

fn run_cell(cfg: &Config, cell: &Cell) -> TrialRecord {
    let started = Instant::now();
    let outcome = synth_dataset(cfg, cell.d, cell.n, cell.k, cell.seed)
        .map_err(|e| e.message)
        .and_then(|(data, theta_star)| {
            let alt_cfg = altmin_config(cfg, cell.d, cell.k);
            let result = run_altmin(&data, &alt_cfg, RngSeed::new(cell.seed, 16))
                .map_err(|e| e.to_string())?;
            let rel = relative_error(&result.theta_hat, &theta_star).map_err(|e| e.to_string())?;
            Ok((result, rel))
        });
    let wall_ms = started.elapsed().as_millis() as u64;
    match outcome {
        Ok((result, rel_error)) => TrialRecord {
            seed: cell.seed,
            d: cell.d,
            n: cell.n,
            k: cell.k,
            regime_label: cell.regime_label.clone(),
            rel_error,
            outer_iters: result.outer_iters,
            oracle_iters_total: result.oracle_iters_total,
            wall_ms,
            termination: result.termination.to_string(),
        },
        Err(message) => TrialRecord {
            seed: cell.seed,
            d: cell.d,
            n: cell.n,
            k: cell.k,
            regime_label: cell.regime_label.clone(),
            rel_error: f64::NAN,
            outer_iters: 0,
            oracle_iters_total: 0,
            wall_ms,
            termination: format!("error: {message}"),
        },
    }
}

fn resolve_parallelism(cfg: &Config, flag: Option<usize>) -> usize {
    if let Ok(value) = std::env::var("ROBUST_PHASE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                return threads;
            }
        }
    }
    flag.or(cfg.parallelism)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
        .max(1)
}

pub fn cmd_sweep(cfg: &Config, out: &Path, parallelism: Option<usize>, quiet: bool) -> CliResult {
    let cells = sweep_cells(cfg)?;
    let threads = resolve_parallelism(cfg, parallelism).min(cells.len());
    let next = AtomicUsize::new(0);
    let mut records: Vec<Option<TrialRecord>> = Vec::new();
    records.resize_with(cells.len(), || None);

    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let next = &next;
            let cells = &cells;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let record = run_cell(cfg, &cells[i]);
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, record) in rx {
            records[i] = Some(record);
        }
    });
    let records: Vec<TrialRecord> = records.into_iter().map(|r| r.unwrap()).collect();

    ensure_out_dir(out)?;
    let echo: String = cfg
        .echo_lines()
        .iter()
        .map(|line| format!("# {line}\n"))
        .collect();

    let mut trials = echo.clone();
    trials.push_str(TRIAL_CSV_HEADER);
    trials.push('\n');
    for record in &records {
        trials.push_str(&trial_csv_row(record));
        trials.push('\n');
    }
    write_file(&out.join("trials.csv"), &trials)?;

    let ok_records: Vec<TrialRecord> = records
        .iter()
        .filter(|r| r.rel_error.is_finite())
        .cloned()
        .collect();
    let mut summary = echo;
    summary.push_str(SUMMARY_CSV_HEADER);
    summary.push('\n');
    if !ok_records.is_empty() {
        for row in summarize(&ok_records).map_err(|e| CliError::failure(e.to_string()))? {
            summary.push_str(&summary_csv_row(&row));
            summary.push('\n');
            if !quiet {
                println!(
                    "{} d={} n={} k={}: rel_error {:.6} ± {:.6} over {} trials",
                    row.regime_label,
                    row.d,
                    row.n,
                    row.k,
                    row.mean_rel_error,
                    row.std_rel_error,
                    row.trials
                );
            }
        }
    }
    write_file(&out.join("summary.csv"), &summary)?;

    let failures = records.len() - ok_records.len();
    if failures > 0 && !quiet {
        eprintln!("{failures}/{} cells failed; see trials.csv", records.len());
    }
    if ok_records.is_empty() {
        return Err(CliError::failure("every sweep cell failed"));
    }
    Ok(())
}

pub fn cmd_landscape(cfg: &Config, out: &Path, quiet: bool) -> CliResult {
    let eta_bar = cfg
        .eta_bar
        .ok_or_else(|| CliError::usage("landscape needs eta_bar"))?;
    if cfg.grid_dims != 2 {
        return Err(CliError::usage(format!(
            "only 2-D landscape grids are supported, got grid_dims = {}",
            cfg.grid_dims
        )));
    }
    let spec = GridSpec {
        x_min: cfg.grid_min,
        x_max: cfg.grid_max,
        y_min: cfg.grid_min,
        y_max: cfg.grid_max,
        steps: cfg.grid_steps,
    };
    let grid = landscape_grid(eta_bar, cfg.eta_sq_mean, &spec)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let panel = if eta_bar == 0.0 {
        "a"
    } else if eta_bar <= -3.0 {
        "b"
    } else {
        "c"
    };
    let mut text = format!(
        "# eta_bar={eta_bar}\n# eta_sq_mean={}\n# panel={panel}\n# grid={}:{}:{}\n",
        cfg.eta_sq_mean, cfg.grid_min, cfg.grid_max, cfg.grid_steps
    );
    text.push_str(&grid);
    ensure_out_dir(out)?;
    write_file(&out.join("landscape.txt"), &text)?;
    if !quiet {
        println!(
            "landscape: eta_bar={eta_bar} panel={panel} points={}",
            cfg.grid_steps * cfg.grid_steps
        );
    }
    Ok(())
}

pub fn cmd_verify(cfg: &Config) -> CliResult {
    let mut reports = default_checks(RngSeed::new(cfg.check_seed, 0));
    if let Some(filter) = &cfg.checks {
        reports.retain(|r| filter.iter().any(|name| name == &r.name));
        if reports.is_empty() {
            return Err(CliError::usage("no checks registered"));
        }
    }
    let mut failed = Vec::new();
    for report in &reports {
        println!("{}", report.json_line());
        if !report.passed {
            failed.push(report.name.clone());
        }
    }
    if !failed.is_empty() {
        return Err(CliError::failure(format!(
            "failed checks: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}
