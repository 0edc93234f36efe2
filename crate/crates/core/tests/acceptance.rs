//! Acceptance suite. Every criterion prints one `[PASS]` or `[FAIL]` line;
//! the test fails if any criterion does. The criteria run one after another
//! in a single test so the timing checks are not disturbed by the heavier
//! end-to-end run.
//!
//! Set `ACCEPTANCE_ONLY=3,7` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use mptsp::evalreport::{run_experiment, ExperimentConfig, SolveBackend};
use mptsp::formulations::{build_da, build_de, build_surrogate, interval_bounds};
use mptsp::instance::{compute_costs, compute_costs_with_rule, synthetic, SyntheticParams};
use mptsp::milp::{
    check_witness, model_census, read_lp, read_lp_file, solve_enumeration, write_lp, export_lp, ConstraintFamily,
    TourProblem, VarTag,
};
use mptsp::neural::{loss, loss_gradient, Input, Layer, LossKind, Sample, SampleInput};
use mptsp::recourse::{expected_recourse, generate_dataset, recourse_value, DatasetProvenance};
use mptsp::rng::{self, Rng};
use mptsp::scenario::{expand, ExpansionMode, ScenarioLabel};
use mptsp::tour::sample_uniform;
use mptsp::{ArcSpace, CostTables, Dataset, FirstStageRule, Instance, Network, ScenarioSet, Tour};
use rand::Rng as _;

const EXACT_TOL: f64 = 1e-12;
const WITNESS_TOL: f64 = 1e-6;
const OBJECTIVE_TOL: f64 = 1e-6;
const GRADIENT_REL_TOL: f64 = 1e-4;
const GRADIENT_MIN_COORDS: usize = 200;
const BRUTE_FORCE_BUDGET: Duration = Duration::from_secs(10);
const E2E_BUDGET: Duration = Duration::from_secs(15 * 60);
const E2E_MAX_MEAN_GAP_PCT: f64 = 2.0;
const E2E_MAX_MAPE_PCT: f64 = 1.0;
const E2E_MIN_R2: f64 = 0.95;
const SURROGATE_TIME_SPREAD: f64 = 0.20;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn tiny3() -> Instance {
    Instance::load(golden("tiny3.json")).unwrap()
}

/// Synthetic instance plus a scenario set with random positive probabilities.
fn random_problem(r: &mut Rng, n: usize, paths: usize, scenarios: usize) -> (Instance, ScenarioSet) {
    let params = SyntheticParams {
        nodes: n,
        paths,
        base_scenarios: 1,
        ..SyntheticParams::default()
    };
    let inst = synthetic("random", &params, r.random()).unwrap();
    let arcs = ArcSpace::new(n).len();
    let weights: Vec<f64> = (0..scenarios).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let head: f64 = probs[..scenarios - 1].iter().sum();
    probs[scenarios - 1] = 1.0 - head;
    let velocities = (0..scenarios * arcs * paths).map(|_| r.random_range(2.0..20.0)).collect();
    let scen = ScenarioSet::from_parts(
        ScenarioLabel::Custom,
        n,
        paths,
        (0..scenarios as u64).collect(),
        probs,
        velocities,
    )
    .unwrap();
    (inst, scen)
}

/// `Δ[a][s][p]` straight from distances and velocities under the harmonic rule.
fn oracle_deltas(inst: &Instance, scen: &ScenarioSet) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let arcs = inst.arcs().len();
    let mut c_bar = vec![0.0; arcs];
    let mut delta = vec![vec![vec![0.0; scen.n_paths()]; scen.len()]; arcs];
    for a in 0..arcs {
        let d = inst.distance(a);
        for s in 0..scen.len() {
            let v = scen.velocities(s, a);
            let mean_v = v.iter().sum::<f64>() / v.len() as f64;
            c_bar[a] += scen.probability(s) * d / mean_v;
        }
        for s in 0..scen.len() {
            for (p, v) in scen.velocities(s, a).iter().enumerate() {
                delta[a][s][p] = d / v - c_bar[a];
            }
        }
    }
    (c_bar, delta)
}

fn random_tour(r: &mut Rng, n: usize) -> Tour {
    let mut rest: Vec<usize> = (1..n).collect();
    for i in (1..rest.len()).rev() {
        rest.swap(i, r.random_range(0..=i));
    }
    let mut perm = vec![0];
    perm.extend(rest);
    Tour::from_permutation(perm).unwrap()
}

/// All tours from the depot, lexicographic in the visiting order.
fn all_tours(n: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for k in 1..n {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(n, prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    rec(n, &mut vec![0], &mut used, &mut out);
    out
}

/// Arc indices `i*(n-1) + j - [j > i]` of the closed tour, sorted.
fn oracle_arcs(n: usize, perm: &[usize]) -> Vec<usize> {
    let mut arcs: Vec<usize> = (0..n)
        .map(|k| {
            let (i, j) = (perm[k], perm[(k + 1) % n]);
            i * (n - 1) + j - usize::from(j > i)
        })
        .collect();
    arcs.sort_unstable();
    arcs
}

fn incidence(n: usize, perm: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; n * (n - 1)];
    for a in oracle_arcs(n, perm) {
        x[a] = 1.0;
    }
    x
}

/// Dense ReLU forward pass; returns hidden pre-activations and the prediction.
fn oracle_forward(net: &Network, x: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let layers = net.layers();
    let mut act = x.to_vec();
    let mut pres = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let pre: Vec<f64> = (0..layer.outputs())
            .map(|j| layer.bias()[j] + layer.row(j).iter().zip(&act).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        if l + 1 == layers.len() {
            return (pres, pre[0] * net.target_std() + net.target_mean());
        }
        act = pre.iter().map(|v| v.max(0.0)).collect();
        pres.push(pre);
    }
    unreachable!()
}

fn random_network(r: &mut Rng, input_dim: usize, arch: &[usize]) -> Network {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(arch);
    dims.push(1);
    let layers = dims
        .windows(2)
        .map(|w| {
            let scale = 2.0 / (w[0] as f64).sqrt();
            let weights = (0..w[0] * w[1]).map(|_| r.random_range(-scale..scale)).collect();
            let bias = (0..w[1]).map(|_| r.random_range(-0.5..0.5)).collect();
            Layer::new(w[0], w[1], weights, bias).unwrap()
        })
        .collect();
    Network::new(layers, r.random_range(50.0..150.0), r.random_range(1.0..10.0)).unwrap()
}

const ARCHS: [&[usize]; 7] = [&[4], &[8], &[16], &[8, 8], &[16, 8], &[8, 16], &[16, 16]];

fn criterion_1() -> Check {
    let started = Instant::now();
    let mut r = rng::seeded(101);
    let mut checked = 0usize;
    for case in 0..50 {
        let n = r.random_range(3..=6);
        let paths = r.random_range(1..=3);
        let scenarios = r.random_range(1..=5);
        let (inst, scen) = random_problem(&mut r, n, paths, scenarios);
        let costs = compute_costs(&inst, &scen).map_err(|e| e.to_string())?;
        let (c_bar, delta) = oracle_deltas(&inst, &scen);
        for a in 0..c_bar.len() {
            ensure(close(costs.c_bar()[a], c_bar[a], EXACT_TOL), || format!("case {case}: c̄ differs on arc {a}"))?;
        }
        for perm in all_tours(n) {
            let tour = Tour::from_permutation(perm.clone()).unwrap();
            let arcs = oracle_arcs(n, &perm);
            let mut expected = 0.0;
            for s in 0..scenarios {
                // Every assignment of one path per tour arc.
                let mut best = f64::INFINITY;
                let mut choice = vec![0usize; n];
                loop {
                    let total: f64 = arcs.iter().zip(&choice).map(|(&a, &p)| delta[a][s][p]).sum();
                    best = best.min(total);
                    let mut k = 0;
                    while k < n && choice[k] + 1 == paths {
                        choice[k] = 0;
                        k += 1;
                    }
                    if k == n {
                        break;
                    }
                    choice[k] += 1;
                }
                let got = recourse_value(&tour, &costs, s);
                ensure(close(got, best, EXACT_TOL), || {
                    format!("case {case} tour {} scenario {s}: {got} vs brute force {best}", tour.to_id_string())
                })?;
                expected += scen.probability(s) * best;
                checked += 1;
            }
            let got = expected_recourse(&tour, &costs);
            ensure(close(got, expected, EXACT_TOL), || format!("case {case}: expected recourse {got} vs {expected}"))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < BRUTE_FORCE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} (tour, scenario) pairs in {:.2}s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Check {
    let inst = tiny3();
    let arc = inst.arcs().index(0, 1);
    let base = inst.base_scenario_set();
    // Realized travel times of the two paths in both scenarios.
    let times: Vec<Vec<f64>> = (0..base.len())
        .map(|s| base.velocities(s, arc).iter().map(|v| inst.distance(arc) / v).collect())
        .collect();
    let da_oracle = (0..2)
        .map(|p| (0..2).map(|s| base.probability(s) * times[s][p]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let de_oracle: f64 = (0..2).map(|s| base.probability(s) * times[s][0].min(times[s][1])).sum();
    ensure(da_oracle == 5.0 && de_oracle == 2.0, || format!("oracle gives {da_oracle}, {de_oracle}"))?;

    let mean = compute_costs_with_rule(&inst, &base, FirstStageRule::MeanTravelTime).map_err(|e| e.to_string())?;
    let da = build_da(&inst, &mean).map_err(|e| e.to_string())?.arc_costs()[arc];
    let de = mean.adaptive_arc_cost(arc);
    ensure(da == 5.0 && de == 2.0, || format!("mean-time rule gives c_DA {da}, c_DE {de}"))?;

    let harmonic = compute_costs(&inst, &base).map_err(|e| e.to_string())?;
    let da_h = build_da(&inst, &harmonic).map_err(|e| e.to_string())?.arc_costs()[arc];
    let de_h = harmonic.adaptive_arc_cost(arc);
    ensure((da_h - 5.0).abs() <= EXACT_TOL && (de_h - 2.0).abs() <= EXACT_TOL, || {
        format!("harmonic rule gives c_DA {da_h}, c_DE {de_h}")
    })?;
    Ok(format!("c_DA = {da}, c_DE = {de}"))
}

fn criterion_3() -> Check {
    let mut r = rng::seeded(303);
    let mut models = 0;
    for n in 3..=8 {
        for s in 1..=5 {
            let paths = r.random_range(1..=3);
            let (inst, scen) = random_problem(&mut r, n, paths, s);
            let costs = compute_costs(&inst, &scen).map_err(|e| e.to_string())?;
            let de = build_de(&inst, &costs).map_err(|e| e.to_string())?;
            let c = model_census(de.model());
            let arcs = n * (n - 1);
            let expect = [
                (c.vars(VarTag::TourArc), arcs),
                (c.vars(VarTag::Flow), arcs),
                (c.vars(VarTag::PathChoice), arcs * paths * s),
                (c.total_vars(), 2 * arcs + arcs * paths * s),
                (c.rows(ConstraintFamily::DegreeOut), n),
                (c.rows(ConstraintFamily::DegreeIn), n),
                (c.rows(ConstraintFamily::FlowBalance) + c.rows(ConstraintFamily::FlowSource), n + 1),
                (c.rows(ConstraintFamily::FlowLink), arcs),
                (c.rows(ConstraintFamily::PathAssignment), arcs * s),
                (c.total_rows(), 3 * n + 1 + arcs + arcs * s),
                (c.binaries, arcs + arcs * paths * s),
            ];
            for (k, (got, want)) in expect.iter().enumerate() {
                ensure(got == want, || format!("N={n} |S|={s} |P|={paths}: census entry {k} is {got}, want {want}"))?;
            }
            for _ in 0..5 {
                let tour = random_tour(&mut r, n);
                let w = check_witness(de.model(), &de.witness(&tour)).map_err(|e| e.to_string())?;
                ensure(w.max_violation <= WITNESS_TOL, || {
                    format!("N={n} |S|={s}: violation {} at {:?}", w.max_violation, w.worst)
                })?;
                let oracle: f64 = tour
                    .arcs()
                    .iter()
                    .map(|&a| {
                        costs.c_bar()[a]
                            + (0..s)
                                .map(|k| costs.probability(k) * costs.deltas(a, k).iter().copied().fold(f64::INFINITY, f64::min))
                                .sum::<f64>()
                    })
                    .sum();
                ensure(close(w.objective, oracle, OBJECTIVE_TOL), || {
                    format!("N={n} |S|={s}: witness objective {} vs {oracle}", w.objective)
                })?;
                ensure(close(de.tour_cost(&tour), oracle, OBJECTIVE_TOL), || format!("N={n} |S|={s}: tour cost"))?;
            }
            models += 1;
        }
    }
    Ok(format!("{models} models, 5 tours each"))
}

fn criterion_4() -> Check {
    let mut r = rng::seeded(404);
    let mut tours = 0;
    let mut probes = 0;
    for net_k in 0..20 {
        let n = r.random_range(4..=7);
        let arch = ARCHS[net_k % ARCHS.len()];
        let (inst, scen) = random_problem(&mut r, n, 2, 3);
        let costs = compute_costs(&inst, &scen).map_err(|e| e.to_string())?;
        let net = random_network(&mut r, n * (n - 1), arch);
        let sur = build_surrogate(&inst, &costs, &net).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let tour = random_tour(&mut r, n);
            let x = incidence(n, tour.perm());
            let (_, pred) = oracle_forward(&net, &x);
            let linear: f64 = oracle_arcs(n, tour.perm()).iter().map(|&a| costs.c_bar()[a]).sum();
            let w = check_witness(sur.model(), &sur.witness(&tour)).map_err(|e| e.to_string())?;
            ensure(w.max_violation <= WITNESS_TOL, || {
                format!("net {net_k} {arch:?}: violation {} at {:?}", w.max_violation, w.worst)
            })?;
            ensure(close(w.objective, linear + pred, OBJECTIVE_TOL), || {
                format!("net {net_k}: witness objective {} vs {}", w.objective, linear + pred)
            })?;
            tours += 1;
        }
        let bounds = interval_bounds(&net).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n * (n - 1)).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
            let (pres, _) = oracle_forward(&net, &x);
            for (l, layer) in pres.iter().enumerate() {
                for (j, &v) in layer.iter().enumerate() {
                    let (lo, hi) = bounds[l][j];
                    ensure(lo <= v && v <= hi, || format!("net {net_k}: neuron {l}/{j} at {v} outside [{lo}, {hi}]"))?;
                }
            }
            probes += 1;
        }
    }
    Ok(format!("{tours} witnesses, {probes} bound probes over 20 networks"))
}

fn criterion_5() -> Check {
    let mut r = rng::seeded(505);
    let mut evaluated = 0;
    for case in 0..10 {
        let n = 5 + case % 4;
        let (inst, scen) = random_problem(&mut r, n, 3, 4);
        let costs = compute_costs(&inst, &scen).map_err(|e| e.to_string())?;
        let net = random_network(&mut r, n * (n - 1), ARCHS[case % ARCHS.len()]);
        let sur = build_surrogate(&inst, &costs, &net).map_err(|e| e.to_string())?;
        let sol = solve_enumeration(&sur, usize::MAX).map_err(|e| e.to_string())?;
        let mut best: Option<(Vec<usize>, f64)> = None;
        for perm in all_tours(n) {
            let x = incidence(n, &perm);
            let linear: f64 = x.iter().zip(costs.c_bar()).map(|(x, c)| x * c).sum();
            let value = linear + oracle_forward(&net, &x).1;
            if best.as_ref().is_none_or(|b| value < b.1) {
                best = Some((perm, value));
            }
            evaluated += 1;
        }
        let (perm, value) = best.unwrap();
        ensure(sol.tour.perm() == perm.as_slice(), || {
            format!("case {case}: solver picked {} but the loop picked {perm:?}", sol.tour.to_id_string())
        })?;
        ensure(close(sol.objective, value, OBJECTIVE_TOL), || format!("case {case}: {} vs {value}", sol.objective))?;
    }
    Ok(format!("10 instances, {evaluated} tours"))
}

fn criterion_6() -> Check {
    let started = Instant::now();
    let inst = synthetic("e2e", &SyntheticParams::default(), 2024).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        scenario_sizes: vec![200],
        train_pool: 200,
        oos_pool: 200,
        dataset_size: 20_000,
        arch: vec![16, 16],
        runs: 5,
        seed: 6,
        backend: SolveBackend::Enumeration,
        ..ExperimentConfig::default()
    };
    let bundle = run_experiment(&inst, &cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let records: Vec<_> = bundle.records().collect();
    ensure(records.len() == cfg.runs, || format!("{} of {} runs failed", bundle.failures(), cfg.runs))?;
    let mean_gap = records.iter().map(|r| r.gap_pct).sum::<f64>() / records.len() as f64;
    let worst_mape = records.iter().map(|r| r.test_mape).fold(0.0, f64::max);
    let worst_r2 = records.iter().map(|r| r.test_r2).fold(f64::INFINITY, f64::min);
    let summary = format!(
        "mean GAP {mean_gap:+.3}%, worst test MAPE {worst_mape:.3}%, worst R² {worst_r2:.4}, {:.0}s",
        elapsed.as_secs_f64()
    );
    ensure(records.iter().all(|r| r.de.witness_feasible && r.nn.witness_feasible), || {
        format!("infeasible witness; {summary}")
    })?;
    ensure(mean_gap <= E2E_MAX_MEAN_GAP_PCT, || summary.clone())?;
    ensure(worst_mape <= E2E_MAX_MAPE_PCT, || summary.clone())?;
    ensure(worst_r2 >= E2E_MIN_R2, || summary.clone())?;
    ensure(elapsed < E2E_BUDGET, || summary.clone())?;
    Ok(summary)
}

fn criterion_7() -> Check {
    const SIZES: [usize; 7] = [3, 10, 20, 40, 60, 80, 100];
    const REPEATS: usize = 25;
    let n = 8;
    let mut r = rng::seeded(707);
    let (inst, full) = random_problem(&mut r, n, 3, 100);
    let net = random_network(&mut r, n * (n - 1), &[16, 16]);
    let sets: Vec<CostTables> = SIZES
        .iter()
        .map(|&s| {
            let sub = full.subsample(s, s as u64).unwrap();
            compute_costs(&inst, &sub).unwrap()
        })
        .collect();
    let mut census = None;
    for (costs, &s) in sets.iter().zip(&SIZES) {
        let de = model_census(build_de(&inst, costs).map_err(|e| e.to_string())?.model());
        ensure(de.vars(VarTag::PathChoice) == n * (n - 1) * 3 * s, || format!("|S|={s}: DE y count"))?;
        let sur = model_census(build_surrogate(&inst, costs, &net).map_err(|e| e.to_string())?.model());
        match &census {
            None => census = Some(sur),
            Some(first) => ensure(*first == sur, || format!("surrogate census changes at |S|={s}"))?,
        }
    }

    // Wall-clock timings on shared hardware come in slow bursts. Samples
    // accumulate over up to MAX_CAMPAIGNS interleaved campaigns and each
    // size keeps its fastest sample.
    const MAX_CAMPAIGNS: usize = 3;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let mut de = vec![f64::INFINITY; SIZES.len()];
    let mut nn = vec![f64::INFINITY; SIZES.len()];
    let fmt = |xs: &[f64]| xs.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>().join("/");
    let mut verdict = Err(String::new());
    for campaign in 1..=MAX_CAMPAIGNS {
        pool.install(|| -> Result<(), String> {
            for _ in 0..REPEATS {
                for (k, costs) in sets.iter().enumerate() {
                    let de_model = build_de(&inst, costs).map_err(|e| e.to_string())?;
                    let t = Instant::now();
                    solve_enumeration(&de_model, usize::MAX).map_err(|e| e.to_string())?;
                    de[k] = de[k].min(t.elapsed().as_secs_f64() * 1e3);
                    let sur = build_surrogate(&inst, costs, &net).map_err(|e| e.to_string())?;
                    let t = Instant::now();
                    solve_enumeration(&sur, usize::MAX).map_err(|e| e.to_string())?;
                    nn[k] = nn[k].min(t.elapsed().as_secs_f64() * 1e3);
                }
            }
            Ok(())
        })?;
        let summary = format!("DE ms {}; surrogate ms {}; {campaign} campaign(s)", fmt(&de), fmt(&nn));
        let lo = nn.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nn.iter().copied().fold(0.0, f64::max);
        verdict = if !de.windows(2).all(|w| w[1] > w[0]) {
            Err(format!("DE time not increasing: {summary}"))
        } else if hi / lo - 1.0 >= SURROGATE_TIME_SPREAD {
            Err(format!("surrogate spread {:.1}%: {summary}", 100.0 * (hi / lo - 1.0)))
        } else {
            Ok(summary)
        };
        if verdict.is_ok() {
            break;
        }
    }
    verdict
}

fn criterion_8() -> Check {
    let mut r = rng::seeded(808);
    let mut arcs_checked = 0;
    for case in 0..100 {
        let n = r.random_range(3..=7);
        let paths = r.random_range(1..=4);
        let scenarios = r.random_range(1..=8);
        let (inst, scen) = random_problem(&mut r, n, paths, scenarios);
        let costs = compute_costs(&inst, &scen).map_err(|e| e.to_string())?;
        for a in 0..costs.arcs().len() {
            let e_min = costs.expected_min_deviation(a);
            let min_e = costs.min_expected_deviation(a).1;
            ensure(e_min <= min_e, || format!("case {case} arc {a}: E[min] {e_min} > min E {min_e}"))?;
            arcs_checked += 1;
        }
        let tour = random_tour(&mut r, n);
        let da = build_da(&inst, &costs).map_err(|e| e.to_string())?;
        let de = build_de(&inst, &costs).map_err(|e| e.to_string())?;
        // Tour totals are summed in different orders, so allow rounding.
        let (de_cost, da_cost) = (de.tour_cost(&tour), da.tour_cost(&tour));
        ensure(de_cost <= da_cost + EXACT_TOL * da_cost.abs(), || {
            format!("case {case}: DE tour cost {de_cost} above DA {da_cost}")
        })?;
    }
    let inst = tiny3();
    let arc = inst.arcs().index(0, 1);
    let costs = compute_costs(&inst, &inst.base_scenario_set()).map_err(|e| e.to_string())?;
    let (e_min, min_e) = (costs.expected_min_deviation(arc), costs.min_expected_deviation(arc).1);
    ensure(e_min < min_e, || format!("toy arc not strict: {e_min} vs {min_e}"))?;
    Ok(format!("{arcs_checked} arcs; toy arc {e_min:.3} < {min_e:.3}"))
}

fn perturbed(net: &Network, layer: usize, bias: bool, k: usize, h: f64) -> Network {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(l, ly)| {
            let mut w: Vec<f64> = (0..ly.outputs()).flat_map(|j| ly.row(j).to_vec()).collect();
            let mut b = ly.bias().to_vec();
            if l == layer {
                if bias {
                    b[k] += h;
                } else {
                    w[k] += h;
                }
            }
            Layer::new(ly.inputs(), ly.outputs(), w, b).unwrap()
        })
        .collect();
    Network::new(layers, net.target_mean(), net.target_std()).unwrap()
}

fn batch_loss(net: &Network, samples: &[Sample], kind: LossKind) -> f64 {
    let (pred, target): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .map(|s| match &s.input {
            SampleInput::Dense(x) => (net.predict(Input::Dense(x)), s.target),
            SampleInput::Active(a) => (net.predict(Input::Active(a)), s.target),
        })
        .unzip();
    loss(&pred, &target, kind).unwrap()
}

fn criterion_9() -> Check {
    let mut r = rng::seeded(909);
    let mut worst: f64 = 0.0;
    let mut per_kind = Vec::new();
    for kind in [LossKind::Mse, LossKind::Mae, LossKind::Mape] {
        let mut checked = 0;
        for trial in 0..12 {
            let dim = 6 + trial % 3;
            let net = random_network(&mut r, dim, ARCHS[trial % ARCHS.len()]);
            let samples: Vec<Sample> = (0..10)
                .map(|_| Sample {
                    input: SampleInput::Dense((0..dim).map(|_| r.random_range(0.0..1.0)).collect()),
                    target: r.random_range(40.0..160.0),
                })
                .collect();
            let grad = loss_gradient(&net, &samples, kind).map_err(|e| e.to_string())?;
            ensure(close(grad.loss, batch_loss(&net, &samples, kind), EXACT_TOL), || format!("{kind:?}: loss value"))?;
            for _ in 0..20 {
                let layer = r.random_range(0..net.layers().len());
                let bias = r.random_bool(0.3);
                let g = if bias { &grad.bias[layer] } else { &grad.weights[layer] };
                let k = r.random_range(0..g.len());
                let h = 1e-5;
                let numeric = (batch_loss(&perturbed(&net, layer, bias, k, h), &samples, kind)
                    - batch_loss(&perturbed(&net, layer, bias, k, -h), &samples, kind))
                    / (2.0 * h);
                let err = (g[k] - numeric).abs() / g[k].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
                ensure(err <= GRADIENT_REL_TOL, || {
                    format!("{kind:?} layer {layer} bias {bias} k {k}: analytic {} vs numeric {numeric}", g[k])
                })?;
                checked += 1;
            }
        }
        ensure(checked >= GRADIENT_MIN_COORDS, || format!("{kind:?}: only {checked} coordinates"))?;
        per_kind.push(format!("{} {checked}", kind.name()));
    }
    Ok(format!("{} coordinates, worst relative error {worst:.1e}", per_kind.join(", ")))
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let roundtrip = |name: &str, text: &str, reload: &dyn Fn(&std::path::Path) -> String| -> Result<(), String> {
        let p = dir.path().join(name);
        std::fs::write(&p, text).map_err(|e| e.to_string())?;
        let back = reload(&p);
        ensure(back == text, || format!("{name} changed on reload"))
    };

    let inst = tiny3();
    let tiny_text = std::fs::read_to_string(golden("tiny3.json")).unwrap();
    roundtrip("tiny3.json", &tiny_text, &|p| Instance::load(p).unwrap().to_json())?;
    let syn = synthetic("syn", &SyntheticParams::default(), 3).map_err(|e| e.to_string())?;
    let p = dir.path().join("syn.json");
    syn.save(&p).map_err(|e| e.to_string())?;
    ensure(Instance::load(&p).map_err(|e| e.to_string())? == syn, || "synthetic instance changed".into())?;

    let pool_text = std::fs::read_to_string(golden("tiny3_pool.json")).unwrap();
    roundtrip("pool.json", &pool_text, &|p| ScenarioSet::load(p).unwrap().to_json())?;
    let pool = expand(&syn, 40, 9, ExpansionMode::Rowwise).map_err(|e| e.to_string())?;
    roundtrip("pool40.json", &pool.to_json(), &|p| ScenarioSet::load(p).unwrap().to_json())?;

    let data_text = std::fs::read_to_string(golden("tiny3_dataset.csv")).unwrap();
    roundtrip("data.csv", &data_text, &|p| Dataset::load(p).unwrap().to_csv())?;
    let costs = compute_costs(&syn, &pool).map_err(|e| e.to_string())?;
    let prov = DatasetProvenance {
        instance: "syn".into(),
        scenario_set: pool.identity_hash(),
        seed: 4,
        extra: Vec::new(),
    };
    let data = generate_dataset(&costs, 50, 4, prov).map_err(|e| e.to_string())?;
    roundtrip("data50.csv", &data.to_csv(), &|p| Dataset::load(p).unwrap().to_csv())?;
    let first = &data.records()[0];
    let reloaded = Dataset::from_csv(&data.to_csv()).map_err(|e| e.to_string())?;
    ensure(reloaded.records()[0] == *first, || "dataset record changed".into())?;

    let net_text = std::fs::read_to_string(golden("tiny3_network.json")).unwrap();
    roundtrip("net.json", &net_text, &|p| Network::load(p).unwrap().to_json())?;
    let net = random_network(&mut rng::seeded(10), 90, &[16, 16]);
    let p = dir.path().join("net90.json");
    net.save(&p).map_err(|e| e.to_string())?;
    let back = Network::load(&p).map_err(|e| e.to_string())?;
    for tour in sample_uniform(10, 20, 5) {
        let x = tour.incidence();
        ensure(back.forward(&x).unwrap() == net.forward(&x).unwrap(), || "network output changed".into())?;
    }

    for name in ["toy.lp", "tiny3_de.lp"] {
        let text = std::fs::read_to_string(golden(name)).unwrap();
        roundtrip(name, &text, &|p| write_lp(&read_lp_file(p).unwrap()))?;
    }
    let base = inst.base_scenario_set();
    let tiny_costs = compute_costs(&inst, &base).map_err(|e| e.to_string())?;
    let tiny_net = Network::load(golden("tiny3_network.json")).map_err(|e| e.to_string())?;
    let sur = build_surrogate(&inst, &tiny_costs, &tiny_net).map_err(|e| e.to_string())?;
    let p = dir.path().join("surrogate.lp");
    export_lp(sur.model(), &p).map_err(|e| e.to_string())?;
    let back = read_lp_file(&p).map_err(|e| e.to_string())?;
    ensure(&back == sur.model(), || "surrogate model changed through LP".into())?;
    ensure(read_lp(&write_lp(&back)).map_err(|e| e.to_string())? == back, || "LP not stable".into())?;
    Ok("instance, pool, dataset, network and LP files reload unchanged".into())
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(&str, fn() -> Check); 10] = [
        ("recourse equals brute force", criterion_1),
        ("toy arc DA and DE costs", criterion_2),
        ("DE witness and census", criterion_3),
        ("network embedding", criterion_4),
        ("surrogate optimization", criterion_5),
        ("end to end quality", criterion_6),
        ("scaling with |S|", criterion_7),
        ("Jensen inequality", criterion_8),
        ("gradient check", criterion_9),
        ("file round trips", criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {id:>2} {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                println!("[FAIL] criterion {id:>2} {name}: {why} ({secs:.1}s)");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
