//! The regressor recovers a target that is exactly linear in the edge incidence.

use mptsp::neural::{metrics, train, RegressionMetrics, TrainConfig};
use mptsp::recourse::{Dataset, DatasetProvenance, Record};
use mptsp::rng;
use mptsp::tour::sample_uniform;
use rand::Rng as _;

/// Ridge-regularized least squares with intercept via Gaussian elimination.
fn least_squares(rows: &[Vec<f64>], y: &[f64], ridge: f64) -> Vec<f64> {
    let d = rows[0].len() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (x, &t) in rows.iter().zip(y) {
        let mut xi = vec![1.0];
        xi.extend_from_slice(x);
        for i in 0..d {
            for j in 0..d {
                a[i][j] += xi[i] * xi[j];
            }
            a[i][d] += xi[i] * t;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += ridge;
    }
    for c in 0..d {
        let pivot = (c..d).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
        a.swap(c, pivot);
        for r in 0..d {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

fn r2(pred: &[f64], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|t| (t - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn linear_target_is_learned() {
    let n = 8;
    let dim = n * (n - 1);
    let mut r = rng::seeded(21);
    let w: Vec<f64> = (0..dim).map(|_| r.random_range(1.0..10.0)).collect();
    let label = |inc: &[f64]| 50.0 + inc.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
    let tours = sample_uniform(n, 5000, 3);
    let records: Vec<Record> = tours
        .iter()
        .map(|t| Record {
            tour: t.clone(),
            q_bar: label(&t.incidence()),
        })
        .collect();
    let data = Dataset::new(n, records, DatasetProvenance::default()).unwrap();
    let (train_set, test_set) = data.split(0.2, 5).unwrap();

    let xs: Vec<Vec<f64>> = train_set.records().iter().map(|r| r.tour.incidence()).collect();
    let ys: Vec<f64> = train_set.records().iter().map(|r| r.q_bar).collect();
    let beta = least_squares(&xs, &ys, 1e-8);
    let test_y: Vec<f64> = test_set.records().iter().map(|r| r.q_bar).collect();
    let oracle: Vec<f64> = test_set
        .records()
        .iter()
        .map(|r| beta[0] + r.tour.incidence().iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    let oracle_r2 = r2(&oracle, &test_y);
    assert!(oracle_r2 > 0.999_999, "least squares R2 {oracle_r2}");

    let cfg = TrainConfig {
        seed: 2,
        ..TrainConfig::default()
    };
    let (net, _) = train(&train_set, &[16, 16], &cfg).unwrap();
    let m: RegressionMetrics = metrics(&net, &test_set).unwrap();
    let pred: Vec<f64> = test_set.records().iter().map(|r| net.forward_active(r.tour.arcs())).collect();
    assert!((r2(&pred, &test_y) - m.r2).abs() < 1e-9);
    assert!(m.r2 >= 0.999, "network R2 {}", m.r2);
}
