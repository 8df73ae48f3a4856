use std::path::Path;

use synmem::{parse_config, run, ExperimentKind, RunOptions, RunOutput};

fn frontier(text: &str) -> RunOutput {
    let cfg = parse_config(text, "t").unwrap();
    run(ExperimentKind::TrainFrontier, &cfg, Path::new("."), &RunOptions::default()).unwrap()
}

fn num(out: &RunOutput, row: usize, col: &str) -> f64 {
    out.table("train-frontier.csv").unwrap().cell(row, col).unwrap().parse().unwrap()
}

#[test]
fn zero_epochs_cost_nothing_and_keep_the_initial_distance() {
    let out = frontier("[train_frontier]\nlayers = [10, 6, 4]\nsteps = 15\nepochs = 0\nbits = [3]\n");
    let t = out.table("train-frontier.csv").unwrap();
    assert_eq!(t.rows.len(), 3);
    for r in 0..3 {
        assert_eq!(num(&out, r, "train_pJ"), 0.0);
        assert_eq!(num(&out, r, "final_vr"), num(&out, r, "initial_vr"));
        assert_eq!(num(&out, r, "best_vr"), num(&out, r, "initial_vr"));
    }
    assert_eq!(out.table("curves/curve-b3.csv").unwrap().rows.len(), 3);
}

#[test]
fn one_diverging_cell_does_not_stop_the_others() {
    let out = frontier(
        "seed = 2\n[train_frontier]\nlayers = [6, 4, 3]\nsteps = 20\nepochs = 5\nbits = [2]\nfull_precision = true\nlr_full = 1.79e308\n",
    );
    assert_eq!((out.cells, out.diverged), (2, 1));
    assert!(!out.all_diverged());
    let t = out.table("train-frontier.csv").unwrap();
    let status: Vec<&str> = (0..t.rows.len()).map(|r| t.cell(r, "status").unwrap()).collect();
    assert_eq!(status, ["ok", "ok", "ok", "diverged", "diverged", "diverged"]);
    assert!(num(&out, 3, "final_vr").is_nan());
    assert!(out.table("curves/curve-fp32.csv").is_none());
}

#[test]
fn energy_columns_add_up_and_curves_match_the_summary() {
    let out = frontier("[train_frontier]\nlayers = [12, 8, 4]\nsteps = 20\nepochs = 6\nbits = [2, 5]\n");
    let summary = out.table("train-frontier.csv").unwrap();
    for r in 0..summary.rows.len() {
        assert_eq!(num(&out, r, "fwd_pJ") + num(&out, r, "bwd_pJ"), num(&out, r, "train_pJ"));
        let label = summary.cell(r, "precision").unwrap();
        let scheme = summary.cell(r, "scheme").unwrap();
        let curve = out.table(&format!("curves/curve-{label}.csv")).unwrap();
        let rows: Vec<usize> = (0..curve.rows.len()).filter(|&k| curve.cell(k, "scheme") == Some(scheme)).collect();
        assert_eq!(rows.len(), 7);
        let fwd: f64 = rows.iter().map(|&k| curve.cell(k, "fwd_pJ").unwrap().parse::<f64>().unwrap()).sum();
        assert!((fwd - num(&out, r, "fwd_pJ")).abs() <= 1e-9 * fwd);
        let last = curve.cell(*rows.last().unwrap(), "vr_distance").unwrap().parse::<f64>().unwrap();
        assert_eq!(last, num(&out, r, "final_vr"));
    }
}
