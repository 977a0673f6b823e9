use proptest::prelude::*;
use riverlab::config::{preset, ExperimentConfig, PRESETS};
use riverlab::experiment::run;
use riverlab::optim::{run_gd, RunOpts};
use riverlab::river::{project_to_river, ProjectOpts};
use riverlab::schedules::decay_windows;
use riverlab::{QuadraticValley, ScheduleSpec};

#[test]
fn presets_resolve_to_stable_text() {
    for (name, _) in PRESETS {
        let cfg = preset(name).unwrap();
        let text = cfg.to_text();
        let again = ExperimentConfig::from_text(&text).unwrap();
        assert_eq!(again.to_text(), text, "{name}");
    }
}

#[test]
fn schedule_run_matches_library_table() {
    let cfg = preset("table2").unwrap();
    let out = run(&cfg).unwrap();
    let table = cfg.schedule.build_table().unwrap();
    let csv = out.artifact("schedule.csv").unwrap();
    let parsed: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(parsed.len(), table.len());
    for (a, b) in parsed.iter().zip(&table.lrs) {
        assert!((a - b).abs() <= 1e-15 * b, "{a} vs {b}");
    }
    for end in [12500, 25000, 53750] {
        assert_eq!(table.lrs[end], 3e-5);
    }
    assert_eq!(table.lrs[12501], 3e-4);
    assert_eq!(table.lrs[25001], 3e-4);
}

#[test]
fn projecting_a_gd_iterate_lands_on_the_valley_floor() {
    let l = QuadraticValley::new(4.0).unwrap();
    let table = ScheduleSpec::constant(0.1, 50).build_table().unwrap();
    let traj = run_gd(&l, &[0.0, 0.8], &table, &RunOpts::default()).unwrap();
    let last = &traj.steps.last().unwrap().w;
    let p = project_to_river(&l, last, &ProjectOpts::default()).unwrap();
    assert!(p.converged);
    assert!(p.phi[1].abs() < 1e-6, "{:?}", p.phi);
    assert!((p.phi[0] - last[0]).abs() < 1e-9);
}

proptest! {
    #[test]
    fn wsd_tables_stay_in_range(
        b1 in 20usize..200,
        growth in prop::collection::vec(2.0f64..3.0, 0..3),
        frac in 0.05f64..0.5,
        eta in 1e-4f64..1.0,
        ratio in 0.01f64..0.9,
    ) {
        let mut budgets = vec![b1];
        for g in growth {
            budgets.push((*budgets.last().unwrap() as f64 * g).ceil() as usize);
        }
        let windows = decay_windows(&budgets, frac).unwrap();
        let total = budgets.last().unwrap() + 1;
        let table = ScheduleSpec::wsds(eta, eta * ratio, windows.clone(), total).build_table().unwrap();
        prop_assert_eq!(table.len(), total);
        for lr in &table.lrs {
            prop_assert!(*lr >= eta * ratio * (1.0 - 1e-12) && *lr <= eta * (1.0 + 1e-12));
        }
        for w in &windows {
            prop_assert!((table.lrs[w.end] - eta * ratio).abs() <= 1e-15 * eta);
            prop_assert_eq!(table.lrs[w.start], eta);
        }
    }
}
