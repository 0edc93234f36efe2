use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use mptsp::evalreport::{self, gap, oos_cost, oos_tables, run_experiment, ExperimentConfig, SolveBackend};
use mptsp::formulations::{build_da, build_de, build_surrogate};
use mptsp::instance::{compute_costs_with_rule, synthetic, SyntheticParams};
use mptsp::milp::{self, check_witness, model_census, write_lp, LocalSearchConfig, TourProblem};
use mptsp::neural::{metrics, train, LossKind, RegressionMetrics, TrainingReport};
use mptsp::provenance::Provenance;
use mptsp::recourse::{generate_dataset, DatasetProvenance};
use mptsp::rng::derive_seed;
use mptsp::scenario::{expand, partition};
use mptsp::{CostTables, Dataset, Instance, Network, ScenarioSet, Tour, TrainConfig};

use crate::{BackendArg, Cli, CliError, Command, ModelArg, TrainOptions};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    match &cli.command {
        Command::GenInstance(a) => gen_instance(cli, a),
        Command::ExpandScenarios(a) => expand_scenarios(cli, a),
        Command::GenDataset(a) => gen_dataset(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::GridSearch(a) => grid_search(cli, a),
        Command::Solve(a) => solve(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn provenance(name: &str, seed: u64, inputs: &[&Path]) -> Result<Provenance> {
    let mut p = Provenance::new(name, Some(seed));
    for path in inputs {
        let label = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        p = p.with_input(label, read(path)?.as_bytes());
    }
    Ok(p)
}

fn load_instance(path: &Path) -> Result<Instance> {
    Ok(Instance::from_json(&read(path)?)?)
}

fn load_scenarios(inst: &Instance, path: Option<&PathBuf>) -> Result<ScenarioSet> {
    match path {
        Some(p) => Ok(ScenarioSet::from_json(&read(p)?)?),
        None => Ok(inst.base_scenario_set()),
    }
}

pub fn parse_arch(text: &str) -> Result<Vec<usize>> {
    let widths = text
        .split(',')
        .map(|w| w.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| CliError::argument("arch", format!("expected comma-separated widths, got `{text}`")))?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(CliError::argument("arch", "every layer needs at least one neuron"));
    }
    Ok(widths)
}

fn train_config(opts: &TrainOptions, seed: u64) -> Result<TrainConfig> {
    let loss: LossKind = opts.loss.parse()?;
    let cfg = TrainConfig {
        learning_rate: opts.lr,
        batch_size: opts.batch_size,
        max_epochs: opts.max_epochs,
        patience: opts.patience,
        validation_fraction: opts.validation_fraction,
        loss,
        seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn gen_instance(cli: &Cli, a: &crate::GenInstanceArgs) -> Result<()> {
    let params = SyntheticParams {
        nodes: a.nodes,
        paths: a.paths,
        base_scenarios: a.base_scenarios,
        v_min: a.v_min,
        v_max: a.v_max,
        extent: a.extent,
    };
    let inst = synthetic(&a.name, &params, cli.seed)?.with_provenance(provenance("gen-instance", cli.seed, &[])?);
    let path = cli.out.join("instance.json");
    write(&path, &inst.to_json())?;
    println!("instance {}: {} nodes, {} paths, {} base scenarios", inst.name(), inst.n_nodes(), inst.paths_per_arc(), inst.base_scenarios());
    Ok(())
}

fn expand_scenarios(cli: &Cli, a: &crate::ExpandArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let prov = provenance("expand-scenarios", cli.seed, &[&a.instance])?;
    let pool = expand(&inst, a.count, derive_seed(cli.seed, 1), a.mode.into())?;
    match a.split {
        None => {
            write(&cli.out.join("pool.json"), &pool.with_provenance(prov).to_json())?;
            println!("pool: {} scenarios", a.count);
        }
        Some(train_count) => {
            let (train, oos) = partition(&pool, train_count, derive_seed(cli.seed, 2))?;
            println!("train: {} scenarios ({}), oos: {} scenarios ({})", train.len(), train.identity_hash(), oos.len(), oos.identity_hash());
            write(&cli.out.join("train.json"), &train.with_provenance(prov.clone()).to_json())?;
            write(&cli.out.join("oos.json"), &oos.with_provenance(prov).to_json())?;
        }
    }
    Ok(())
}

fn gen_dataset(cli: &Cli, a: &crate::GenDatasetArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let scen = load_scenarios(&inst, a.scenarios.as_ref())?;
    let costs = compute_costs_with_rule(&inst, &scen, a.first_stage.into())?;
    let mut inputs: Vec<&Path> = vec![&a.instance];
    if let Some(p) = &a.scenarios {
        inputs.push(p);
    }
    let mut prov = provenance("gen-dataset", cli.seed, &inputs)?;
    // The dataset header already records its seed.
    prov.seed = None;
    let dp = DatasetProvenance {
        instance: inst.name().to_string(),
        scenario_set: scen.identity_hash(),
        seed: cli.seed,
        extra: prov.comment_lines(),
    };
    let started = Instant::now();
    let data = generate_dataset(&costs, a.k, cli.seed, dp)?;
    log::info!("labelled {} tours in {:.1} ms", a.k, started.elapsed().as_secs_f64() * 1e3);
    write(&cli.out.join("dataset.csv"), &data.to_csv())?;
    println!("dataset: {} tours over {} scenarios", data.len(), scen.len());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    arch: Vec<usize>,
    param_count: usize,
    train_samples: usize,
    validation_samples: usize,
    test_samples: usize,
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
    test: &'a RegressionMetrics,
}

fn train_and_test(data: &Dataset, arch: &[usize], cfg: &TrainConfig, test_fraction: f64, seed: u64) -> Result<(Network, TrainingReport, RegressionMetrics, usize)> {
    let (train_set, test_set) = data.split(test_fraction, derive_seed(seed, 3))?;
    let (net, rep) = train(&train_set, arch, cfg)?;
    let m = metrics(&net, &test_set)?;
    Ok((net, rep, m, test_set.len()))
}

fn history_csv(rep: &TrainingReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,learning_rate\n");
    for h in &rep.history {
        writeln!(out, "{},{},{},{}", h.epoch, h.train_loss, h.val_loss, h.learning_rate).unwrap();
    }
    out
}

fn train_cmd(cli: &Cli, a: &crate::TrainArgs) -> Result<()> {
    let data = Dataset::from_csv(&read(&a.dataset)?)?;
    let arch = parse_arch(&a.opts.arch)?;
    let cfg = train_config(&a.opts, derive_seed(cli.seed, 4))?;
    let (net, rep, m, test_n) = train_and_test(&data, &arch, &cfg, a.opts.test_fraction, cli.seed)?;
    let mut meta = net.meta().clone();
    meta.provenance = Some(provenance("train", cli.seed, &[&a.dataset])?);
    let net = net.with_meta(meta);
    write(&cli.out.join("network.json"), &net.to_json())?;
    write(&cli.out.join("training.csv"), &history_csv(&rep))?;
    let summary = TrainSummary {
        arch: arch.clone(),
        param_count: rep.param_count,
        train_samples: rep.train_samples,
        validation_samples: rep.val_samples,
        test_samples: test_n,
        epochs: rep.history.len(),
        best_epoch: rep.best_epoch,
        best_val_loss: rep.best_val_loss,
        stopped_early: rep.stopped_early,
        test: &m,
    };
    write(&cli.out.join("training.json"), &json(&summary))?;
    println!(
        "trained {:?} ({} params) for {} epochs: test MAE {:.4}, MAPE {:.4}%, R2 {:.5}",
        arch,
        rep.param_count,
        rep.history.len(),
        m.mae,
        m.mape,
        m.r2
    );
    Ok(())
}

fn backend(arg: BackendArg) -> Result<SolveBackend> {
    match arg {
        BackendArg::Enum => Ok(SolveBackend::Enumeration),
        BackendArg::Local => Ok(SolveBackend::LocalSearch),
        BackendArg::Export => Err(CliError::argument("backend", "`export` is only available for `solve`")),
    }
}

fn grid_search(cli: &Cli, a: &crate::GridSearchArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let scen = ScenarioSet::from_json(&read(&a.scenarios)?)?;
    let oos_set = ScenarioSet::from_json(&read(&a.oos)?)?;
    let data = Dataset::from_csv(&read(&a.dataset)?)?;
    let costs = compute_costs_with_rule(&inst, &scen, a.first_stage.into())?;
    let oos = oos_tables(&inst, &costs, &oos_set)?;
    let archs = a.archs.split(';').map(parse_arch).collect::<Result<Vec<_>>>()?;
    if a.batch_sizes.is_empty() {
        return Err(CliError::argument("batch_sizes", "at least one batch size is required"));
    }
    let be = backend(a.backend)?;
    let mut rows = Vec::new();
    for arch in &archs {
        for &batch in &a.batch_sizes {
            let opts = TrainOptions {
                arch: String::new(),
                loss: a.loss.clone(),
                lr: a.lr,
                batch_size: batch,
                max_epochs: a.max_epochs,
                patience: 5,
                validation_fraction: 0.1,
                test_fraction: a.test_fraction,
            };
            let cfg = train_config(&opts, derive_seed(cli.seed, 4))?;
            let (net, rep, m, _) = train_and_test(&data, arch, &cfg, a.test_fraction, cli.seed)?;
            let sur = build_surrogate(&inst, &costs, &net)?;
            let local = LocalSearchConfig {
                seed: derive_seed(cli.seed, 6),
                ..LocalSearchConfig::default()
            };
            let sol = evalreport::solve(&sur, be, milp::DEFAULT_ENUMERATION_CAP, &local)?;
            let cost = oos_cost(&sol.tour, &oos);
            log::info!("{arch:?} batch {batch}: OOS {cost}");
            rows.push((arch.clone(), batch, rep.history.len(), m, sol.tour.to_id_string(), cost));
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .5.total_cmp(&y.1 .5).then(x.0.cmp(&y.0)))
        .map(|(k, _)| k)
        .expect("non-empty grid");
    let mut csv = String::new();
    for line in provenance("grid-search", cli.seed, &[&a.instance, &a.scenarios, &a.oos, &a.dataset])?.comment_lines() {
        writeln!(csv, "{line}").unwrap();
    }
    csv.push_str("layers,batch_size,epochs,test_mae,test_mape,test_r2,tour,oos_cost,selected\n");
    println!("{:<14} {:>10} {:>10} {:>10} {:>14}", "layers", "batch", "MAPE(%)", "R2", "OOS cost");
    for (k, (arch, batch, epochs, m, tour, cost)) in rows.iter().enumerate() {
        let layers = format!("{arch:?}");
        writeln!(csv, "\"{layers}\",{batch},{epochs},{},{},{},{tour},{cost},{}", m.mae, m.mape, m.r2, k == best).unwrap();
        println!("{layers:<14} {batch:>10} {:>10.4} {:>10.5} {cost:>14.2}{}", m.mape, m.r2, if k == best { "  *" } else { "" });
    }
    let (arch, batch, ..) = &rows[best];
    println!("selected: {arch:?} with batch size {batch}");
    write(&cli.out.join("grid.csv"), &csv)?;
    Ok(())
}

#[derive(Serialize)]
struct WitnessSummary {
    feasible: bool,
    max_violation: f64,
    objective: f64,
}

#[derive(Serialize)]
struct SolutionFile {
    model: &'static str,
    backend: milp::Backend,
    tour: String,
    objective: f64,
    evaluations: u64,
    witness: WitnessSummary,
    census: milp::Census,
    provenance: Provenance,
}

fn model_name(m: ModelArg) -> &'static str {
    match m {
        ModelArg::De => "de",
        ModelArg::Da => "da",
        ModelArg::Surrogate => "surrogate",
    }
}

fn solve_problem<P: TourProblem>(cli: &Cli, a: &crate::SolveArgs, problem: &P, prov: Provenance) -> Result<()> {
    let name = model_name(a.model);
    if a.backend == BackendArg::Export {
        let census = model_census(problem.model());
        problem.model().validate()?;
        let mut text = String::new();
        for line in prov.comment_lines() {
            writeln!(text, "\\{}", line.trim_start_matches('#')).unwrap();
        }
        text.push_str(&write_lp(problem.model()));
        write(&cli.out.join(format!("{name}.lp")), &text)?;
        write(&cli.out.join(format!("{name}_census.csv")), &census.to_csv())?;
        print!("{}", census.to_text());
        return Ok(());
    }
    let local = LocalSearchConfig {
        restarts: a.restarts,
        seed: cli.seed,
        ..LocalSearchConfig::default()
    };
    let sol = evalreport::solve(problem, backend(a.backend)?, a.cap, &local)?;
    let rep = check_witness(problem.model(), &sol.assignment)?;
    log::info!("{} evaluations in {:.1} ms", sol.meta.evaluations, sol.meta.wall_ms);
    let file = SolutionFile {
        model: name,
        backend: sol.meta.backend,
        tour: sol.tour.to_id_string(),
        objective: sol.objective,
        evaluations: sol.meta.evaluations,
        witness: WitnessSummary {
            feasible: rep.feasible,
            max_violation: rep.max_violation,
            objective: rep.objective,
        },
        census: model_census(problem.model()),
        provenance: prov,
    };
    write(&cli.out.join(format!("solution_{name}.json")), &json(&file))?;
    println!("tour {}  objective {}", file.tour, file.objective);
    if !rep.feasible {
        return Err(mptsp::Error::Runtime(format!("witness infeasible: max violation {}", rep.max_violation)).into());
    }
    Ok(())
}

fn solve(cli: &Cli, a: &crate::SolveArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let scen = load_scenarios(&inst, a.scenarios.as_ref())?;
    let costs = compute_costs_with_rule(&inst, &scen, a.first_stage.into())?;
    let mut inputs: Vec<&Path> = vec![&a.instance];
    inputs.extend(a.scenarios.as_deref());
    inputs.extend(a.network.as_deref());
    let prov = provenance("solve", cli.seed, &inputs)?;
    match a.model {
        ModelArg::De => solve_problem(cli, a, &build_de(&inst, &costs)?, prov),
        ModelArg::Da => solve_problem(cli, a, &build_da(&inst, &costs)?, prov),
        ModelArg::Surrogate => {
            let path = a
                .network
                .as_ref()
                .ok_or_else(|| CliError::argument("network", "the surrogate model needs `--network`"))?;
            let net = Network::from_json(&read(path)?)?;
            solve_problem(cli, a, &build_surrogate(&inst, &costs, &net)?, prov)
        }
    }
}

fn tour_from_spec(spec: &str) -> Result<Tour> {
    let path = Path::new(spec);
    if path.is_file() {
        let v: serde_json::Value = serde_json::from_str(&read(path)?).map_err(|e| mptsp::Error::Parse(e.to_string()))?;
        let t = v["tour"]
            .as_str()
            .ok_or_else(|| CliError::argument("solution", format!("{spec} has no `tour` field")))?;
        Ok(Tour::parse(t)?)
    } else {
        Ok(Tour::parse(spec)?)
    }
}

#[derive(Serialize)]
struct Evaluation {
    tour: String,
    oos_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_pct: Option<f64>,
}

#[derive(Serialize)]
struct EvaluationFile {
    oos_hash: String,
    oos_scenarios: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<Evaluation>,
    candidates: Vec<Evaluation>,
    provenance: Provenance,
}

fn evaluate(cli: &Cli, a: &crate::EvaluateArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let scen = load_scenarios(&inst, a.scenarios.as_ref())?;
    let oos_set = ScenarioSet::from_json(&read(&a.oos)?)?;
    let costs: CostTables = compute_costs_with_rule(&inst, &scen, a.first_stage.into())?;
    let oos = oos_tables(&inst, &costs, &oos_set)?;
    let mut tours = a.tours.iter().map(|t| tour_from_spec(t)).collect::<Result<Vec<_>>>()?;
    for s in &a.solutions {
        tours.push(tour_from_spec(&s.to_string_lossy())?);
    }
    if tours.is_empty() {
        return Err(CliError::argument("tour", "give at least one `--tour` or `--solution`"));
    }
    for t in &tours {
        if t.n() != inst.n_nodes() {
            return Err(mptsp::Error::Dimension {
                expected: inst.n_nodes(),
                actual: t.n(),
            }
            .into());
        }
    }
    let baseline = a.baseline.as_deref().map(tour_from_spec).transpose()?.map(|t| Evaluation {
        tour: t.to_id_string(),
        oos_cost: oos_cost(&t, &oos),
        gap_pct: None,
    });
    let candidates = tours
        .iter()
        .map(|t| {
            let c = oos_cost(t, &oos);
            let g = baseline.as_ref().map(|b| gap(c, b.oos_cost)).transpose()?;
            Ok(Evaluation {
                tour: t.to_id_string(),
                oos_cost: c,
                gap_pct: g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for c in &candidates {
        match c.gap_pct {
            Some(g) => println!("{}  oos_cost {:.4}  gap {:+.2}%", c.tour, c.oos_cost, g),
            None => println!("{}  oos_cost {:.4}", c.tour, c.oos_cost),
        }
    }
    let mut inputs: Vec<&Path> = vec![&a.instance, &a.oos];
    inputs.extend(a.scenarios.as_deref());
    let file = EvaluationFile {
        oos_hash: oos_set.identity_hash(),
        oos_scenarios: oos_set.len(),
        baseline,
        candidates,
        provenance: provenance("evaluate", cli.seed, &inputs)?,
    };
    write(&cli.out.join("evaluation.json"), &json(&file))
}

fn experiment(cli: &Cli, a: &crate::ExperimentArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let cfg = ExperimentConfig {
        scenario_sizes: a.sizes.clone(),
        train_pool: a.train_pool,
        oos_pool: a.oos_pool,
        dataset_size: a.k,
        test_fraction: a.opts.test_fraction,
        arch: parse_arch(&a.opts.arch)?,
        train: train_config(&a.opts, 0)?,
        runs: a.runs,
        seed: cli.seed,
        backend: backend(a.backend)?,
        local_restarts: a.restarts,
        expansion: a.mode.into(),
        first_stage: a.first_stage.into(),
        ..ExperimentConfig::default()
    };
    let bundle = run_experiment(&inst, &cfg)?;
    bundle.write(&cli.out, a.svg)?;
    print!("{}", bundle.oos_summary_csv().lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    if bundle.failures() > 0 {
        return Err(mptsp::Error::Runtime(format!("{} of {} runs failed", bundle.failures(), bundle.outcomes.len())).into());
    }
    Ok(())
}

fn report(cli: &Cli, a: &crate::ReportArgs) -> Result<()> {
    let path = a.input.join("timing.csv");
    let text = read(&path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::argument("input", format!("timing.csv has no `{name}` column")))
    };
    let (c_model, c_size, c_solve) = (col("model")?, col("scenarios")?, col("solve_ms")?);
    let mut cells: std::collections::BTreeMap<(String, usize), Vec<f64>> = Default::default();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::argument("input", format!("timing.csv row {} is malformed", k + 1));
        let size = f.get(c_size).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let ms = f.get(c_solve).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let model = f.get(c_model).ok_or_else(bad)?.to_string();
        cells.entry((model, size)).or_default().push(ms);
    }
    let mut sizes: Vec<usize> = cells.keys().map(|k| k.1).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mean = |model: &str, s: usize| {
        cells
            .get(&(model.to_string(), s))
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .unwrap_or(f64::NAN)
    };
    let series = vec![
        ("DE", "#c0392b", sizes.iter().map(|&s| mean("de", s)).collect::<Vec<_>>()),
        ("surrogate", "#2471a3", sizes.iter().map(|&s| mean("surrogate", s)).collect()),
    ];
    println!("{:>6} {:>14} {:>14}", "|S|", "DE ms", "surrogate ms");
    for (k, s) in sizes.iter().enumerate() {
        println!("{s:>6} {:>14.3} {:>14.3}", series[0].2[k], series[1].2[k]);
    }
    let svg = evalreport::render_line_chart("Solve time vs. scenario-set size", "|S|", "solve time (ms)", &sizes, &series);
    write(&cli.out.join("timing.svg"), &svg)
}
