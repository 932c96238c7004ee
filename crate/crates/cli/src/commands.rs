//! The `run`, `sweep`, `lowerbound` and `calibrate` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use replab::experiments::{
    learner_regret_trials, slow_change_trials, smoothness_trials, Calibration, EnvelopeCalibration, FavorCell,
    LearnerRegretCalibration, LowerBoundCalibration, SlowChangeCalibration, SmoothnessCalibration,
};
use replab::lowerbound::{lower_bound_run, pm1_planner_payoff, LowerBoundRun};
use replab::metrics::{regret_scaling_fit, RegretReport, ScalingFit, SweepRow};
use replab::oll::dim;
use replab::sim::{run_simulation, RunStats, SimConfig, SimulationTranscript};
use replab::stats::MeanStderr;

use crate::error::{CliError, CliResult};
use crate::experiment::{read_config_text, Cell, ExperimentConfig, LowerBoundConfig};
use crate::provenance::{json_with_provenance, write_atomic, Provenance};

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

/// Accepts either a bare simulation config or an experiment config, whose
/// `base` is used.
pub fn load_sim_config(path: &Path) -> CliResult<SimConfig> {
    let text = read_config_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    if value.get("base").is_some() {
        Ok(ExperimentConfig::from_json(&text)?.base)
    } else {
        Ok(SimConfig::from_json(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed_offset: u64,
    pub strict: bool,
    pub dump_x: bool,
    pub dump_p: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub honest: Vec<usize>,
    pub regret: RegretReport,
    pub regret_per_honest_user: f64,
    pub per_user_payoff: Vec<f64>,
    pub interactions: usize,
    pub stats: RunStats,
    pub final_wealth: Option<Vec<f64>>,
    pub transcript_sha256: String,
}

impl RunSummary {
    pub fn of(tr: &SimulationTranscript) -> Self {
        let regret = RegretReport::new(&tr.rounds, &tr.honest);
        Self {
            honest: tr.honest.clone(),
            regret_per_honest_user: regret.regret_per_user(),
            regret,
            per_user_payoff: tr.per_user_payoff.clone(),
            interactions: tr.rounds.iter().filter(|r| r.interacted).count(),
            stats: tr.stats,
            final_wealth: tr.final_wealth.clone(),
            transcript_sha256: tr.hash(),
        }
    }
}

fn x_label(i: usize) -> String {
    let label = match i % 3 {
        0 => "-1",
        1 => "0",
        _ => "+1",
    };
    format!("u{}:{label}", i / 3)
}

/// Matrix as CSV with labelled rows and columns.
pub fn matrix_csv<F: Fn(usize) -> String>(m: &DMatrix<f64>, name: F) -> String {
    let mut out = String::from("row");
    for j in 0..m.ncols() {
        out.push(',');
        out.push_str(&name(j));
    }
    out.push('\n');
    for i in 0..m.nrows() {
        out.push_str(&name(i));
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn cmd_run(opts: &RunOptions) -> CliResult<RunSummary> {
    let mut cfg = load_sim_config(&opts.config)?;
    cfg.seed += opts.seed_offset;
    let tr = run_simulation(&cfg)?;
    let prov = Provenance::new("run", &cfg);
    let summary = RunSummary::of(&tr);

    fs::create_dir_all(&opts.out)?;
    write_atomic(&opts.out.join("transcript.csv"), &prov.csv(&tr.to_csv()))?;
    write_atomic(&opts.out.join("summary.json"), &json_with_provenance(&prov, &summary))?;
    if let Some(planner) = tr.final_planner.as_ref().filter(|_| opts.dump_x || opts.dump_p) {
        if opts.dump_x {
            write_atomic(&opts.out.join("x.csv"), &prov.csv(&matrix_csv(planner.x(), x_label)))?;
        }
        if opts.dump_p {
            write_atomic(&opts.out.join("p.csv"), &prov.csv(&matrix_csv(planner.p(), |i| format!("u{i}"))))?;
        }
    }
    if opts.strict && tr.stats.non_converged > 0 {
        return Err(CliError::NonConvergence(format!(
            "{} of {} solves hit the iteration cap",
            tr.stats.non_converged, tr.stats.solves
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed_offset: u64,
    pub jobs: usize,
    pub strict: bool,
}

/// One finished `(cell, seed)` unit; its file doubles as the completion
/// marker.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct UnitResult {
    row: SweepRow,
    non_converged: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub regret_per_honest_user: MeanStderr,
    pub p_h: MeanStderr,
    pub opt_h: MeanStderr,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendFit {
    pub n_users: usize,
    pub alpha: f64,
    pub protocol: String,
    pub fit: ScalingFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
    /// `ln(regret per honest user)` against `ln T`, where the grid has at
    /// least four horizons.
    pub trends: Vec<TrendFit>,
    pub computed: usize,
    pub resumed: usize,
    pub non_converged: u64,
}

fn sweep_row(cell: &Cell, seed: u64, cfg: &SimConfig, tr: &SimulationTranscript) -> SweepRow {
    let rep = RegretReport::new(&tr.rounds, &tr.honest);
    SweepRow {
        n: cell.n_users,
        t: cell.n_rounds,
        rho: cfg.rho,
        alpha: cell.alpha,
        protocol: cell.protocol.name().to_string(),
        seed,
        p_h: rep.p_h,
        opt_h: rep.opt_h,
        regret: rep.regret,
        regret_per_honest_user: rep.regret_per_user(),
    }
}

pub fn cmd_sweep(opts: &SweepOptions) -> CliResult<SweepReport> {
    let exp = ExperimentConfig::load(&opts.config)?;
    let out = opts
        .out
        .clone()
        .or_else(|| exp.out.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set \"out\"".into()))?;
    let prov = Provenance::new(
        "sweep",
        &serde_json::json!({ "experiment": exp, "seed_offset": opts.seed_offset }),
    );
    let units_dir = out.join(format!("cells-{}", &prov.config_hash()[..16]));
    fs::create_dir_all(&units_dir)?;

    let cells = exp.cells();
    let seeds = exp.seeds.seeds(opts.seed_offset);
    let units: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let unit_path = |c: usize, s: u64| units_dir.join(format!("{}__seed{s}.json", cells[c].id()));
    let todo: Vec<(usize, u64)> = units.iter().copied().filter(|&(c, s)| !unit_path(c, s).exists()).collect();
    let resumed = units.len() - todo.len();

    pool(opts.jobs)?.install(|| {
        todo.par_iter().try_for_each(|&(c, seed)| -> CliResult<()> {
            let cfg = exp.cell_config(&cells[c], seed)?;
            let tr = run_simulation(&cfg)?;
            let unit = UnitResult {
                row: sweep_row(&cells[c], seed, &cfg, &tr),
                non_converged: tr.stats.non_converged,
            };
            let text = serde_json::to_string(&unit).expect("rows serialize");
            write_atomic(&unit_path(c, seed), &text)?;
            Ok(())
        })
    })?;

    let mut rows = Vec::with_capacity(units.len());
    let mut non_converged = 0;
    for &(c, s) in &units {
        let text = fs::read_to_string(unit_path(c, s))?;
        let unit: UnitResult = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("corrupt unit file for {} seed {s}: {e}", cells[c].id())))?;
        non_converged += unit.non_converged;
        rows.push(unit.row);
    }

    let mut body = String::from(SweepRow::HEADER);
    body.push('\n');
    for r in &rows {
        body.push_str(&r.to_csv());
        body.push('\n');
    }
    write_atomic(&out.join("sweep.csv"), &prov.csv(&body))?;

    let per_cell = seeds.len();
    let cell_summaries: Vec<CellSummary> = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let rs = &rows[i * per_cell..(i + 1) * per_cell];
            let col = |f: fn(&SweepRow) -> f64| MeanStderr::of(&rs.iter().map(f).collect::<Vec<_>>());
            CellSummary {
                cell: *cell,
                regret_per_honest_user: col(|r| r.regret_per_honest_user),
                p_h: col(|r| r.p_h),
                opt_h: col(|r| r.opt_h),
            }
        })
        .collect();
    let trends = trend_fits(&cell_summaries);
    let report = SweepReport {
        rows,
        cells: cell_summaries,
        trends,
        computed: todo.len(),
        resumed,
        non_converged,
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        cells: &'a [CellSummary],
        trends: &'a [TrendFit],
        non_converged: u64,
    }
    write_atomic(
        &out.join("sweep_summary.json"),
        &json_with_provenance(
            &prov,
            &Summary {
                cells: &report.cells,
                trends: &report.trends,
                non_converged,
            },
        ),
    )?;
    if opts.strict && non_converged > 0 {
        return Err(CliError::NonConvergence(format!("{non_converged} solves hit the iteration cap")));
    }
    Ok(report)
}

fn trend_fits(cells: &[CellSummary]) -> Vec<TrendFit> {
    let mut groups: Vec<(Cell, Vec<(f64, f64)>)> = Vec::new();
    for c in cells {
        let key = c.cell;
        let point = (key.n_rounds as f64, c.regret_per_honest_user.mean);
        match groups.iter_mut().find(|(k, _)| {
            k.n_users == key.n_users && k.alpha == key.alpha && k.protocol == key.protocol
        }) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((key, vec![point])),
        }
    }
    groups
        .into_iter()
        .filter_map(|(k, pts)| {
            regret_scaling_fit(&pts).ok().map(|fit| TrendFit {
                n_users: k.n_users,
                alpha: k.alpha,
                protocol: k.protocol.name().to_string(),
                fit,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LowerBoundOptions {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed_offset: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundSize {
    pub n_users: usize,
    pub t: u64,
    pub gap: MeanStderr,
    pub normalized_gap: MeanStderr,
    pub opt_h1: MeanStderr,
    pub opt_h2: MeanStderr,
    /// Over users `x > N/2` and seeds: fraction with `P_x > 0`, and with
    /// `P_x < 0`.
    pub included: f64,
    pub excluded_negative: f64,
    pub planner_payoff: Option<MeanStderr>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub sizes: Vec<LowerBoundSize>,
    pub runs: Vec<LowerBoundRun>,
}

pub fn cmd_lowerbound(opts: &LowerBoundOptions) -> CliResult<LowerBoundReport> {
    let cfg = match &opts.config {
        Some(p) => LowerBoundConfig::load(p)?,
        None => LowerBoundConfig::default(),
    };
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set \"out\"".into()))?;
    let sizes = cfg.sizes()?;
    let seeds = cfg.seeds.seeds(opts.seed_offset);
    let prov = Provenance::new(
        "lowerbound",
        &serde_json::json!({ "config": cfg, "seed_offset": opts.seed_offset }),
    );

    let units: Vec<(usize, u64, u64)> = sizes
        .iter()
        .flat_map(|&(n, t)| seeds.iter().map(move |&s| (n, t, s)))
        .collect();
    let results: Vec<(LowerBoundRun, Option<f64>)> = pool(opts.jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(n, t, s)| -> CliResult<_> {
                let run = lower_bound_run(n, t, s)?;
                let planner = if cfg.planner {
                    Some(pm1_planner_payoff(n, t, s)?)
                } else {
                    None
                };
                Ok((run, planner))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let mut body = String::from(LowerBoundRun::CSV_HEADER);
    body.push('\n');
    for (r, _) in &results {
        body.push_str(&r.to_csv());
        body.push('\n');
    }
    fs::create_dir_all(&out)?;
    write_atomic(&out.join("lowerbound.csv"), &prov.csv(&body))?;
    if cfg.planner {
        let mut body = String::from("N,T,seed,p_all\n");
        for (r, p) in &results {
            body.push_str(&format!("{},{},{},{}\n", r.n_users, r.t, r.seed, p.unwrap_or(f64::NAN)));
        }
        write_atomic(&out.join("planner_payoff.csv"), &prov.csv(&body))?;
    }

    let per = seeds.len();
    let summaries: Vec<LowerBoundSize> = sizes
        .iter()
        .enumerate()
        .map(|(i, &(n, t))| {
            let chunk = &results[i * per..(i + 1) * per];
            let col = |f: &dyn Fn(&LowerBoundRun) -> f64| MeanStderr::of(&chunk.iter().map(|(r, _)| f(r)).collect::<Vec<_>>());
            let upper: Vec<f64> = chunk
                .iter()
                .flat_map(|(r, _)| r.p_x[n / 2 + 1..].to_vec())
                .collect();
            let frac = |pred: fn(f64) -> bool| upper.iter().filter(|&&p| pred(p)).count() as f64 / upper.len().max(1) as f64;
            LowerBoundSize {
                n_users: n,
                t,
                gap: col(&|r| r.gap()),
                normalized_gap: col(&|r| r.normalized_gap()),
                opt_h1: col(&|r| r.opt_h1),
                opt_h2: col(&|r| r.opt_h2),
                included: frac(|p| p > 0.0),
                excluded_negative: frac(|p| p < 0.0),
                planner_payoff: cfg
                    .planner
                    .then(|| MeanStderr::of(&chunk.iter().filter_map(|(_, p)| *p).collect::<Vec<_>>())),
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Summary<'a> {
        sizes: &'a [LowerBoundSize],
    }
    write_atomic(
        &out.join("lowerbound_summary.json"),
        &json_with_provenance(&prov, &Summary { sizes: &summaries }),
    )?;
    Ok(LowerBoundReport {
        sizes: summaries,
        runs: results.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Seeds and trial counts of a calibration pass. Calibration seeds are
/// disjoint from the ones the acceptance suite uses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPlan {
    pub margin: f64,
    pub smoothness_seed: u64,
    pub smoothness_trials: usize,
    pub learner_seed: u64,
    pub learner_trials: usize,
    pub slow_change_seed: u64,
    pub slow_change_trials: usize,
    pub envelope_seeds: Vec<u64>,
    pub envelope_alphas: Vec<f64>,
    /// Overrides the standard favor-game horizons (for quick runs).
    pub envelope_horizons: Option<Vec<u64>>,
    pub lower_bound_n: usize,
    pub lower_bound_t: u64,
    pub lower_bound_seeds: Vec<u64>,
}

impl CalibrationPlan {
    pub fn full() -> Self {
        Self {
            margin: 1.5,
            smoothness_seed: 7000,
            smoothness_trials: 1000,
            learner_seed: 9000,
            learner_trials: 20,
            slow_change_seed: 9100,
            slow_change_trials: 20,
            envelope_seeds: (1000..1004).collect(),
            envelope_alphas: vec![0.5, 0.75],
            envelope_horizons: None,
            lower_bound_n: 16,
            lower_bound_t: 4096,
            lower_bound_seeds: (2000..2100).collect(),
        }
    }

    /// Small version for smoke tests; its constants are not meaningful.
    pub fn quick() -> Self {
        Self {
            smoothness_trials: 12,
            learner_trials: 2,
            slow_change_trials: 2,
            envelope_seeds: vec![1000],
            envelope_alphas: vec![0.75],
            envelope_horizons: Some(vec![32, 64, 128, 256]),
            lower_bound_seeds: (2000..2010).collect(),
            lower_bound_t: 256,
            ..Self::full()
        }
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Runs every calibration experiment. Bounds are the largest observed ratio
/// times the margin; the lower-bound window is the observed mean divided and
/// multiplied by the margin.
pub fn calibrate(plan: &CalibrationPlan, jobs: usize) -> CliResult<Calibration> {
    let margin = plan.margin;
    let pool = pool(jobs)?;

    let smooth = smoothness_trials(plan.smoothness_seed, plan.smoothness_trials, &[2, 4, 8])?;
    let smooth_max = max_of(smooth.iter().map(|t| t.ratio));

    let learner = learner_regret_trials(plan.learner_seed, plan.learner_trials)?;
    let learner_max = max_of(learner.iter().map(|t| t.ratio));

    let slow = slow_change_trials(plan.slow_change_seed, plan.slow_change_trials)?;
    let path_max = max_of(slow.iter().map(|t| t.path_ratio));
    let step_max = max_of(slow.iter().map(|t| t.step_ratio));

    let cells: Vec<FavorCell> = plan
        .envelope_alphas
        .iter()
        .map(|&a| {
            let mut c = FavorCell::standard(a);
            if let Some(h) = &plan.envelope_horizons {
                c.horizons = h.clone();
            }
            c
        })
        .collect();
    let units: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| plan.envelope_seeds.iter().map(move |&s| (c, s)))
        .collect();
    let envelope_max = pool.install(|| {
        units
            .par_iter()
            .map(|&(c, s)| -> CliResult<f64> {
                let run = replab::experiments::favor_run(&cells[c], s)?;
                Ok(max_of(run.subsets.iter().map(|r| r.ratio)))
            })
            .collect::<CliResult<Vec<f64>>>()
    })?;
    let envelope_max = max_of(envelope_max);

    let lb: Vec<f64> = pool.install(|| {
        plan.lower_bound_seeds
            .par_iter()
            .map(|&s| lower_bound_run(plan.lower_bound_n, plan.lower_bound_t, s).map(|r| r.normalized_gap()))
            .collect::<replab::Result<Vec<f64>>>()
    })?;
    let lb_mean = MeanStderr::of(&lb).mean;

    Ok(Calibration {
        version: crate::provenance::VERSION.to_string(),
        smoothness: SmoothnessCalibration {
            c_s: smooth_max * margin,
            max_ratio: smooth_max,
            margin,
            seed: plan.smoothness_seed,
            trials: plan.smoothness_trials,
        },
        regret_envelope: EnvelopeCalibration {
            c: envelope_max.max(1e-3) * margin,
            max_ratio: envelope_max,
            margin,
            seeds: plan.envelope_seeds.clone(),
        },
        lower_bound: LowerBoundCalibration {
            c_lo: lb_mean / margin,
            c_hi: lb_mean * margin,
            mean_normalized_gap: lb_mean,
            n_users: plan.lower_bound_n,
            t: plan.lower_bound_t,
            seeds: plan.lower_bound_seeds.clone(),
        },
        learner_regret: LearnerRegretCalibration {
            c: learner_max.max(1e-3) * margin,
            max_ratio: learner_max,
            margin,
            seed: plan.learner_seed,
            trials: plan.learner_trials,
        },
        slow_change: SlowChangeCalibration {
            c_y: path_max * margin,
            c_y_prime: step_max * margin,
            max_path_ratio: path_max,
            max_step_ratio: step_max,
            margin,
            seed: plan.slow_change_seed,
            trials: plan.slow_change_trials,
        },
    })
}

pub fn cmd_calibrate(out: &Path, quick: bool, jobs: usize) -> CliResult<Calibration> {
    let plan = if quick {
        CalibrationPlan::quick()
    } else {
        CalibrationPlan::full()
    };
    let cal = calibrate(&plan, jobs)?;
    let mut text = serde_json::to_string_pretty(&cal).expect("calibration serializes");
    text.push('\n');
    write_atomic(out, &text)?;
    Ok(cal)
}

/// Labels of the rows and columns of `X`, for reference.
pub fn x_labels(n_users: usize) -> Vec<String> {
    (0..dim(n_users)).map(x_label).collect()
}
