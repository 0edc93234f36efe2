//! Out-of-sample evaluation, GAP, and the end-to-end experiment that
//! compares the deterministic equivalent against the surrogate model.
//!
//! A report is three CSV tables plus an optional SVG:
//!
//! - `metrics.csv`: surrogate training and test-set quality per run,
//! - `oos.csv`: out-of-sample cost of both optimal tours and their GAP,
//! - `timing.csv`: build and solve wall times with model censuses.
//!
//! `metrics.csv` and `oos.csv` contain no wall times and are byte-identical
//! for a fixed master seed.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{write_string, Error, Result};
use crate::formulations::{build_de, build_surrogate};
use crate::instance::{compute_costs_with_rule, with_first_stage, CostTables, FirstStageRule, Instance};
use crate::milp::{
    check_witness, model_census, solve_enumeration, solve_local_search, Census, LocalSearchConfig, Solution,
    TourProblem, VarTag, DEFAULT_ENUMERATION_CAP,
};
use crate::neural::{metrics, train, TrainConfig};
use crate::provenance::Provenance;
use crate::recourse::{arcs_expected_recourse, generate_dataset, DatasetProvenance};
use crate::rng::derive_seed;
use crate::scenario::{expand, partition, ExpansionMode, ScenarioSet};
use crate::tour::Tour;

/// `c̄ᵀx + Σ_s π_s Q(x, ξ_s)` over the scenarios of `oos`.
///
/// `oos` must carry the first-stage costs of the solving scenario set; build
/// it with [`oos_tables`].
pub fn oos_cost(tour: &Tour, oos: &CostTables) -> f64 {
    tour.arcs().iter().map(|&a| oos.c_bar()[a]).sum::<f64>() + arcs_expected_recourse(tour.arcs(), oos)
}

/// Deviation tables of `oos_set` measured against the first-stage costs of `train`.
pub fn oos_tables(inst: &Instance, train: &CostTables, oos_set: &ScenarioSet) -> Result<CostTables> {
    if oos_set.is_empty() {
        return Err(Error::Size("out-of-sample set is empty".into()));
    }
    with_first_stage(inst, train.c_bar().to_vec(), oos_set)
}

/// Signed relative difference in percent; negative favours the surrogate.
pub fn gap(cost_nn: f64, cost_de: f64) -> Result<f64> {
    if cost_de.is_nan() || cost_de <= 0.0 {
        return Err(Error::Domain(format!("GAP denominator must be positive, got {cost_de}")));
    }
    Ok((cost_nn - cost_de) / cost_de * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveBackend {
    #[default]
    Enumeration,
    LocalSearch,
}

impl std::str::FromStr for SolveBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enum" | "enumeration" => Ok(Self::Enumeration),
            "local" | "local_search" => Ok(Self::LocalSearch),
            other => Err(Error::validation("backend", format!("unknown backend `{other}`"))),
        }
    }
}

/// Solves a tour problem with the chosen backend.
pub fn solve<P: TourProblem + ?Sized>(problem: &P, backend: SolveBackend, cap: usize, local: &LocalSearchConfig) -> Result<Solution> {
    match backend {
        SolveBackend::Enumeration => solve_enumeration(problem, cap),
        SolveBackend::LocalSearch => solve_local_search(problem, local),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Grid of solving scenario-set sizes `|S|`.
    pub scenario_sizes: Vec<usize>,
    /// Scenarios reserved for solving and training; each run draws `|S|` of them.
    pub train_pool: usize,
    /// Disjoint scenarios used only for out-of-sample evaluation.
    pub oos_pool: usize,
    /// Labelled tours `K` per run, before the test split.
    pub dataset_size: usize,
    /// Share of the labelled tours held out as the test set.
    pub test_fraction: f64,
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub runs: usize,
    pub seed: u64,
    pub backend: SolveBackend,
    pub local_restarts: usize,
    pub enumeration_cap: usize,
    pub expansion: ExpansionMode,
    pub first_stage: FirstStageRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario_sizes: vec![3, 10, 20],
            train_pool: 200,
            oos_pool: 200,
            dataset_size: 10_000,
            test_fraction: 0.2,
            arch: vec![16, 16],
            train: TrainConfig::default(),
            runs: 30,
            seed: 0,
            backend: SolveBackend::Enumeration,
            local_restarts: 8,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            expansion: ExpansionMode::Independent,
            first_stage: FirstStageRule::HarmonicVelocity,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario_sizes.is_empty() {
            return Err(Error::validation("scenario_sizes", "grid is empty"));
        }
        if let Some(&s) = self.scenario_sizes.iter().find(|&&s| s == 0 || s > self.train_pool) {
            return Err(Error::validation(
                "scenario_sizes",
                format!("size {s} is outside 1..={}", self.train_pool),
            ));
        }
        if self.oos_pool == 0 {
            return Err(Error::validation("oos_pool", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::validation("runs", "must be at least 1"));
        }
        if self.dataset_size < 10 {
            return Err(Error::validation("dataset_size", "must be at least 10"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::validation("test_fraction", "must lie in (0, 1)"));
        }
        if self.backend == SolveBackend::LocalSearch && self.local_restarts == 0 {
            return Err(Error::validation("local_restarts", "must be at least 1"));
        }
        self.train.validate()
    }
}

/// One arm (DE or surrogate) of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmResult {
    pub tour: String,
    /// Objective of the model that was solved.
    pub objective: f64,
    pub oos_cost: f64,
    pub witness_feasible: bool,
    pub census: Census,
    pub build_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenarios: usize,
    pub run: usize,
    pub seed: u64,
    /// Identity hash of the solving scenario set, shared by both arms.
    pub pool_hash: String,
    pub oos_hash: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_mae: f64,
    pub test_mape: f64,
    pub test_r2: f64,
    pub de: ArmResult,
    pub nn: ArmResult,
    pub gap_pct: f64,
    pub data_ms: f64,
    pub train_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub scenarios: usize,
    pub run: usize,
    pub seed: u64,
    /// `Err` holds the message of the stage that failed.
    pub result: std::result::Result<RunRecord, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub instance: String,
    pub config: ExperimentConfig,
    pub outcomes: Vec<RunOutcome>,
    pub provenance: Provenance,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn arm<P: TourProblem>(problem: &P, build_ms: f64, oos: &CostTables, cfg: &ExperimentConfig, seed: u64) -> Result<ArmResult> {
    let local = LocalSearchConfig {
        restarts: cfg.local_restarts,
        seed,
        ..LocalSearchConfig::default()
    };
    let started = Instant::now();
    let sol = solve(problem, cfg.backend, cfg.enumeration_cap, &local)?;
    let solve_ms = ms_since(started);
    let witness = check_witness(problem.model(), &sol.assignment)?;
    Ok(ArmResult {
        tour: sol.tour.to_id_string(),
        objective: sol.objective,
        oos_cost: oos_cost(&sol.tour, oos),
        witness_feasible: witness.feasible,
        census: model_census(problem.model()),
        build_ms,
        solve_ms,
    })
}

/// Seed of run `run` at grid size `size`.
pub fn run_seed(master: u64, size: usize, run: usize) -> u64 {
    derive_seed(derive_seed(master, 0x5_0000 + size as u64), run as u64)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    inst: &Instance,
    cfg: &ExperimentConfig,
    train_pool: &ScenarioSet,
    oos_pool: &ScenarioSet,
    size: usize,
    run: usize,
    seed: u64,
) -> Result<RunRecord> {
    let started = Instant::now();
    let scen = train_pool.subsample(size, derive_seed(seed, 1))?;
    let costs = compute_costs_with_rule(inst, &scen, cfg.first_stage)?;
    let oos = oos_tables(inst, &costs, oos_pool)?;
    let provenance = DatasetProvenance {
        instance: inst.name().to_string(),
        scenario_set: scen.identity_hash(),
        seed: derive_seed(seed, 2),
        extra: Vec::new(),
    };
    let data = generate_dataset(&costs, cfg.dataset_size, provenance.seed, provenance)?;
    let (train_set, test_set) = data.split(cfg.test_fraction, derive_seed(seed, 3))?;
    let data_ms = ms_since(started);

    let train_cfg = TrainConfig {
        seed: derive_seed(seed, 4),
        ..cfg.train.clone()
    };
    let (net, report) = train(&train_set, &cfg.arch, &train_cfg)?;
    let quality = metrics(&net, &test_set)?;

    let t = Instant::now();
    let de = build_de(inst, &costs)?;
    let de_build = ms_since(t);
    let de_arm = arm(&de, de_build, &oos, cfg, derive_seed(seed, 5))?;

    let t = Instant::now();
    let sur = build_surrogate(inst, &costs, &net)?;
    let nn_build = ms_since(t);
    let nn_arm = arm(&sur, nn_build, &oos, cfg, derive_seed(seed, 6))?;

    let gap_pct = gap(nn_arm.oos_cost, de_arm.oos_cost)?;
    Ok(RunRecord {
        scenarios: size,
        run,
        seed,
        pool_hash: scen.identity_hash(),
        oos_hash: oos_pool.identity_hash(),
        train_samples: report.train_samples,
        test_samples: test_set.len(),
        epochs: report.history.len(),
        best_epoch: report.best_epoch,
        best_val_loss: report.best_val_loss,
        test_mae: quality.mae,
        test_mape: quality.mape,
        test_r2: quality.r2,
        de: de_arm,
        nn: nn_arm,
        gap_pct,
        data_ms,
        train_ms: report.wall_ms,
    })
}

/// Scenario pools of an experiment: `(train_pool, oos_pool)`, disjoint.
pub fn experiment_pools(inst: &Instance, cfg: &ExperimentConfig) -> Result<(ScenarioSet, ScenarioSet)> {
    let pool = expand(inst, cfg.train_pool + cfg.oos_pool, derive_seed(cfg.seed, 1), cfg.expansion)?;
    partition(&pool, cfg.train_pool, derive_seed(cfg.seed, 2))
}

/// Runs every `(|S|, run)` cell of the grid in parallel.
///
/// A failing run is recorded with its error; the others still complete.
pub fn run_experiment(inst: &Instance, cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let (train_pool, oos_pool) = experiment_pools(inst, cfg)?;
    let cells: Vec<(usize, usize)> = cfg
        .scenario_sizes
        .iter()
        .flat_map(|&s| (0..cfg.runs).map(move |r| (s, r)))
        .collect();
    let outcomes = cells
        .into_par_iter()
        .map(|(size, run)| {
            let seed = run_seed(cfg.seed, size, run);
            let result = run_one(inst, cfg, &train_pool, &oos_pool, size, run, seed).map_err(|e| e.to_string());
            if let Err(e) = &result {
                log::error!("run {run} at |S|={size} failed: {e}");
            }
            RunOutcome {
                scenarios: size,
                run,
                seed,
                result,
            }
        })
        .collect();
    let config_text = serde_json::to_string(cfg).expect("config serializes");
    let provenance = Provenance::new("experiment", Some(cfg.seed))
        .with_input("instance", inst.to_json().as_bytes())
        .with_input("config", config_text.as_bytes());
    Ok(ReportBundle {
        instance: inst.name().to_string(),
        config: cfg.clone(),
        outcomes,
        provenance,
    })
}

fn status(o: &RunOutcome) -> String {
    match &o.result {
        Ok(_) => "ok".into(),
        Err(e) => format!("error: {}", e.replace([',', '\n'], ";")),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { f64::NAN } else { sum / n as f64 }
}

impl ReportBundle {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    fn header(&self, out: &mut String) {
        for line in self.provenance.comment_lines() {
            writeln!(out, "{line}").unwrap();
        }
        writeln!(out, "# instance={}", self.instance).unwrap();
    }

    /// Training and test quality of the surrogate, one row per run.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        writeln!(
            out,
            "scenarios,run,seed,status,pool_hash,k,arch,train_samples,test_samples,epochs,best_epoch,best_val_loss,test_mae,test_mape,test_r2"
        )
        .unwrap();
        let arch = self.config.arch.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x");
        for o in &self.outcomes {
            write!(out, "{},{},{},{}", o.scenarios, o.run, o.seed, status(o)).unwrap();
            match &o.result {
                Ok(r) => writeln!(
                    out,
                    ",{},{},{arch},{},{},{},{},{},{},{},{}",
                    r.pool_hash,
                    self.config.dataset_size,
                    r.train_samples,
                    r.test_samples,
                    r.epochs,
                    r.best_epoch,
                    r.best_val_loss,
                    r.test_mae,
                    r.test_mape,
                    r.test_r2
                ),
                Err(_) => writeln!(out, ",,{},{arch},,,,,,,,", self.config.dataset_size),
            }
            .unwrap();
        }
        out
    }

    /// Out-of-sample comparison, one row per run.
    pub fn oos_csv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        writeln!(
            out,
            "scenarios,run,status,pool_hash,oos_hash,tour_de,tour_nn,objective_de,objective_nn,cost_de,cost_nn,gap_pct,witness_de,witness_nn"
        )
        .unwrap();
        for o in &self.outcomes {
            write!(out, "{},{},{}", o.scenarios, o.run, status(o)).unwrap();
            match &o.result {
                Ok(r) => writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{},{},{},{}",
                    r.pool_hash,
                    r.oos_hash,
                    r.de.tour,
                    r.nn.tour,
                    r.de.objective,
                    r.nn.objective,
                    r.de.oos_cost,
                    r.nn.oos_cost,
                    r.gap_pct,
                    r.de.witness_feasible,
                    r.nn.witness_feasible
                ),
                Err(_) => writeln!(out, ",,,,,,,,,,,"),
            }
            .unwrap();
        }
        out
    }

    /// Run means per scenario-set size.
    pub fn oos_summary_csv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        writeln!(out, "scenarios,runs,cost_de,cost_nn,gap_pct").unwrap();
        for &size in &self.config.scenario_sizes {
            let rows: Vec<&RunRecord> = self.records().filter(|r| r.scenarios == size).collect();
            writeln!(
                out,
                "{size},{},{:.2},{:.2},{:.2}",
                rows.len(),
                mean(rows.iter().map(|r| r.de.oos_cost)),
                mean(rows.iter().map(|r| r.nn.oos_cost)),
                mean(rows.iter().map(|r| r.gap_pct))
            )
            .unwrap();
        }
        out
    }

    /// Wall times and censuses, one row per run and arm.
    pub fn timing_csv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        writeln!(
            out,
            "model,scenarios,run,data_ms,train_ms,build_ms,solve_ms,variables,constraints,binaries,y_variables"
        )
        .unwrap();
        for r in self.records() {
            for (name, a) in [("de", &r.de), ("surrogate", &r.nn)] {
                let train_ms = if name == "de" { 0.0 } else { r.train_ms };
                writeln!(
                    out,
                    "{name},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{}",
                    r.scenarios,
                    r.run,
                    r.data_ms,
                    train_ms,
                    a.build_ms,
                    a.solve_ms,
                    a.census.total_vars(),
                    a.census.total_rows(),
                    a.census.binaries,
                    a.census.vars(VarTag::PathChoice)
                )
                .unwrap();
            }
        }
        out
    }

    /// Mean solve time against `|S|` for both arms.
    pub fn timing_svg(&self) -> String {
        let sizes = &self.config.scenario_sizes;
        let series: Vec<(&str, &str, Vec<f64>)> = [("DE", "#c0392b", true), ("surrogate", "#2471a3", false)]
            .into_iter()
            .map(|(label, color, de)| {
                let ys = sizes
                    .iter()
                    .map(|&s| {
                        mean(
                            self.records()
                                .filter(|r| r.scenarios == s)
                                .map(|r| if de { r.de.solve_ms } else { r.nn.solve_ms }),
                        )
                    })
                    .collect();
                (label, color, ys)
            })
            .collect();
        render_line_chart("Solve time vs. scenario-set size", "|S|", "solve time (ms)", sizes, &series)
    }

    /// Writes the tables (and `timing.svg`) into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, svg: bool) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_string(&dir.join("metrics.csv"), &self.metrics_csv())?;
        write_string(&dir.join("oos.csv"), &self.oos_csv())?;
        write_string(&dir.join("oos_summary.csv"), &self.oos_summary_csv())?;
        write_string(&dir.join("timing.csv"), &self.timing_csv())?;
        if svg {
            write_string(&dir.join("timing.svg"), &self.timing_svg())?;
        }
        Ok(())
    }
}

/// Minimal SVG line chart; `ys` entries that are not finite are skipped.
pub fn render_line_chart(title: &str, x_label: &str, y_label: &str, xs: &[usize], series: &[(&str, &str, Vec<f64>)]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 20.0, 40.0, 50.0);
    let x_max = xs.iter().copied().max().unwrap_or(1).max(1) as f64;
    let x_min = xs.iter().copied().min().unwrap_or(0) as f64;
    let y_max = series
        .iter()
        .flat_map(|s| s.2.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let span = (x_max - x_min).max(1.0);
    let px = |x: f64| left + (x - x_min) / span * (w - left - right);
    let py = |y: f64| h - bottom - y / y_max * (h - top - bottom);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, w / 2.0).unwrap();
    writeln!(
        svg,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom,
        h - bottom
    )
    .unwrap();
    for &x in xs {
        writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, px(x as f64), h - bottom + 16.0).unwrap();
    }
    for k in 0..=4 {
        let y = y_max * k as f64 / 4.0;
        writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, left - 6.0, py(y) + 4.0).unwrap();
    }
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (left + w - right) / 2.0, h - 12.0).unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    for (k, (label, color, ys)) in series.iter().enumerate() {
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x as f64), py(y)))
            .collect();
        writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" ")).unwrap();
        let ly = top + 14.0 + 16.0 * k as f64;
        writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{label}</text>"#,
            w - right - 110.0,
            ly - 4.0,
            w - right - 92.0,
            ly
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::build_de;
    use crate::instance::{compute_costs, fixtures::tiny3, synthetic, SyntheticParams};
    use crate::milp::objectives_match;

    #[test]
    fn gap_examples() {
        assert_eq!(gap(105.0, 100.0).unwrap(), 5.0);
        assert_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        let g = gap(16417.00, 17219.60).unwrap();
        assert_eq!(format!("{g:.2}"), "-4.66");
        assert!(gap(1.0, 0.0).is_err());
        assert!(gap(1.0, -3.0).is_err());
        assert!(gap(1.0, f64::NAN).is_err());
    }

    #[test]
    fn gap_sign_flips_only_in_numerator() {
        let (a, b) = (120.0, 100.0);
        let forward = gap(a, b).unwrap() * b / 100.0;
        let backward = gap(b, a).unwrap() * a / 100.0;
        assert!((forward + backward).abs() < 1e-12);
    }

    #[test]
    fn oos_on_training_set_equals_de_objective() {
        let inst = tiny3();
        let scen = inst.base_scenario_set();
        let costs = compute_costs(&inst, &scen).unwrap();
        let oos = oos_tables(&inst, &costs, &scen).unwrap();
        let de = build_de(&inst, &costs).unwrap();
        for tour in crate::tour::enumerate(3) {
            let w = de.witness(&tour);
            let obj = check_witness(de.model(), &w).unwrap().objective;
            assert!(objectives_match(oos_cost(&tour, &oos), obj, 1e-12));
        }
    }

    #[test]
    fn tiny3_hand_value() {
        // Tour 1-2-3-1, first-stage 3.2 + 3.5555... + 2.3; per-scenario minima
        // s1: -1.2 + (-0.3555...) + (-0.8) and s2: -1.2 + (-1.0444...) + (-0.8).
        let inst = tiny3();
        let scen = inst.base_scenario_set();
        let costs = compute_costs(&inst, &scen).unwrap();
        let oos = oos_tables(&inst, &costs, &scen).unwrap();
        let tour = Tour::from_ids(&[1, 2, 3]).unwrap();
        let first: f64 = [(0, 1), (1, 2), (2, 0)].iter().map(|&(i, j)| costs.c_bar()[costs.arcs().index(i, j)]).sum();
        let mut rec = 0.0;
        for s in 0..2 {
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let a = costs.arcs().index(i, j);
                let d = inst.distance(a);
                let best = (0..2).map(|p| d / inst.velocity(a, p, s)).fold(f64::INFINITY, f64::min);
                rec += 0.5 * (best - costs.c_bar()[a]);
            }
        }
        assert!((oos_cost(&tour, &oos) - (first + rec)).abs() < 1e-12);
    }

    #[test]
    fn zero_deviation_oos_is_first_stage() {
        let params = SyntheticParams {
            nodes: 5,
            paths: 2,
            base_scenarios: 1,
            ..SyntheticParams::default()
        };
        let inst = synthetic("z", &params, 3).unwrap();
        let mut costs = compute_costs(&inst, &inst.base_scenario_set()).unwrap();
        costs = CostTables::from_raw(5, 1, costs.c_bar().to_vec(), vec![0.0; 20], vec![1.0]).unwrap();
        let tour = Tour::from_ids(&[1, 3, 2, 5, 4]).unwrap();
        let expected: f64 = tour.arcs().iter().map(|&a| costs.c_bar()[a]).sum();
        assert_eq!(oos_cost(&tour, &costs), expected);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario_sizes: vec![3, 10, 20],
            train_pool: 20,
            oos_pool: 20,
            dataset_size: 300,
            runs: 3,
            seed: 11,
            train: TrainConfig {
                max_epochs: 20,
                ..TrainConfig::default()
            },
            arch: vec![4],
            ..ExperimentConfig::default()
        }
    }

    fn small_instance() -> Instance {
        let params = SyntheticParams {
            nodes: 5,
            paths: 2,
            base_scenarios: 6,
            ..SyntheticParams::default()
        };
        synthetic("smoke", &params, 5).unwrap()
    }

    #[test]
    fn smoke_grid_and_determinism() {
        let inst = small_instance();
        let cfg = small_config();
        let a = run_experiment(&inst, &cfg).unwrap();
        assert_eq!(a.failures(), 0);
        assert_eq!(a.records().count(), 9);
        assert!(a.records().all(|r| r.de.witness_feasible && r.nn.witness_feasible));
        let oos = a.oos_csv();
        assert_eq!(oos.lines().filter(|l| !l.starts_with('#')).count(), 10);
        let b = run_experiment(&inst, &cfg).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.oos_csv(), b.oos_csv());
        for r in a.records() {
            assert_eq!(r.de.census.vars(VarTag::PathChoice), 20 * 2 * r.scenarios);
        }
        let first = &a.records().next().unwrap().nn.census;
        assert!(a.records().all(|r| &r.nn.census == first));
        assert!(a.timing_svg().starts_with("<svg"));
    }

    #[test]
    fn single_row_report() {
        let inst = small_instance();
        let cfg = ExperimentConfig {
            scenario_sizes: vec![5],
            runs: 1,
            ..small_config()
        };
        let rep = run_experiment(&inst, &cfg).unwrap();
        let rows = rep.metrics_csv().lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 2);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ExperimentConfig {
            scenario_sizes: vec![50],
            ..small_config()
        };
        assert!(run_experiment(&small_instance(), &cfg).unwrap_err().is_validation());
    }
}
