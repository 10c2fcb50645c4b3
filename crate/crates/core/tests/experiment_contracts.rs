//! Contracts of the Monte-Carlo harness: replicate means against the exact
//! expectation trace, zero spread for deterministic cells, seed isolation,
//! conditioning rates, rate fitting, and on-disk artifacts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sco_lab_core::analytics::coupled_sgd_expectation_trace;
use sco_lab_core::experiments::{
    condition_dataset, estimate_event_probability, estimate_excess_risk, event_holds, fit_rate,
    render, replicate_seed, run_sweep, write_results, CellFilter, ConditioningMode, Event,
    OutputFormat, Results, SweepGrid, SweptVar, CSV_COLUMNS,
};
use sco_lab_core::instances::{
    instance_from_str, BuildContext, CoordinateHiding, CoupledRealizable, CurvatureLaw,
    LossInstance, NonRealizableScalar, ScalarRealizable,
};
use sco_lab_core::optimizers::{run_gd, run_sgd_seeded, Algorithm, OptimizerConfig};
use sco_lab_core::Real;

#[test]
fn sgd_replicate_mean_tracks_the_expectation_trace() {
    let n = 16usize;
    let t_iters = 64usize;
    let runs = 2000usize;
    let inst = CoupledRealizable::<Real>::with_horizon(n, 1.0, 1.0, t_iters).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data =
        condition_dataset(&inst, n, Event::Permutation, ConditioningMode::Forced, &mut rng)
            .unwrap();
    let mut config = OptimizerConfig::new(Algorithm::SGD, 1.0, t_iters);
    config.record_iterates = true;

    // Streaming mean/variance per step for the x coordinate and the
    // hidden-block coordinate mean.
    let mut mean = vec![[0.0f64; 2]; t_iters];
    let mut m2 = vec![[0.0f64; 2]; t_iters];
    for run in 0..runs {
        let result = run_sgd_seeded(&inst, &data, &config, run as u64).unwrap();
        let iterates = result.iterates.as_ref().unwrap();
        for (t_idx, w) in iterates.iter().enumerate() {
            let y_mean = w[1..].iter().sum::<Real>() / n as Real;
            for (slot, v) in [(0, w[0]), (1, y_mean)] {
                let delta = v - mean[t_idx][slot];
                mean[t_idx][slot] += delta / (run + 1) as Real;
                m2[t_idx][slot] += delta * (v - mean[t_idx][slot]);
            }
        }
    }

    let trace = coupled_sgd_expectation_trace::<Real>(n, 1.0, t_iters, 1.0).unwrap();
    let mut worst_z: Real = 0.0;
    for t in 1..=t_iters {
        let expected = [trace.x_at(t), trace.y_at(t)];
        for slot in 0..2 {
            let se = (m2[t - 1][slot] / (runs as Real - 1.0)).sqrt() / (runs as Real).sqrt();
            let err = (mean[t - 1][slot] - expected[slot]).abs();
            if se == 0.0 {
                assert!(err <= 1e-15, "t={t} slot={slot}: deterministic step off by {err:e}");
            } else {
                worst_z = worst_z.max(err / se);
                assert!(
                    err <= 3.0 * se,
                    "t={t} slot={slot}: mean {} vs expected {} is {} standard errors",
                    mean[t - 1][slot],
                    expected[slot],
                    err / se
                );
            }
        }
    }
    println!("worst |z| over all recorded steps: {worst_z:.3}");
}

#[test]
fn conditioned_gd_sweep_has_exactly_zero_spread() {
    let mut grid = SweepGrid::new(
        "coupled",
        Algorithm::GD,
        vec![0.5, 1.0],
        vec![16, 64],
        vec![16],
        8,
        7,
    );
    grid.conditioning = Some(Event::Permutation);
    let sweep = run_sweep(&grid).unwrap();
    assert_eq!(sweep.cells.len(), 4);
    for cell in &sweep.cells {
        assert_eq!(cell.error, None);
        assert_eq!(cell.stderr.unwrap().to_bits(), 0.0f64.to_bits(), "cell {cell:?}");
        let trace =
            sco_lab_core::analytics::coupled_gd_trace::<Real>(cell.n, cell.eta, cell.t_iters, 1.0)
                .unwrap();
        assert!(
            (cell.mean_excess.unwrap() - trace.averaged_risk()).abs() <= 1e-13,
            "cell {cell:?} vs trace {}",
            trace.averaged_risk()
        );
    }
}

#[test]
fn scalar_longer_training_never_raises_final_risk() {
    let inst = ScalarRealizable::<Real>::new(CurvatureLaw::Levels(4), 0.0).unwrap();
    let n = 32usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let data = inst.draw_dataset(n, &mut rng).unwrap();
        let mut short_cfg = OptimizerConfig::new(Algorithm::SGD, 0.5, n);
        short_cfg.record_trajectory = true;
        let mut long_cfg = OptimizerConfig::new(Algorithm::SGD, 0.5, 100 * n);
        long_cfg.record_trajectory = true;
        let short = run_sgd_seeded(&inst, &data, &short_cfg, seed).unwrap();
        let long = run_sgd_seeded(&inst, &data, &long_cfg, seed).unwrap();
        assert!(
            long.excess_risk_final <= short.excess_risk_final,
            "seed {seed}: final excess rose from {} (T={n}) to {} (T={})",
            short.excess_risk_final,
            long.excess_risk_final,
            100 * n
        );
        // The longer run extends the same index stream, so its iterate at
        // t = n is the short run's final iterate, bit for bit.
        let short_steps = short.per_step.as_ref().unwrap();
        let long_steps = long.per_step.as_ref().unwrap();
        assert_eq!(
            short_steps[n - 1].dist_to_min.to_bits(),
            long_steps[n - 1].dist_to_min.to_bits()
        );
    }
}

#[test]
fn rejection_sampling_matches_the_exact_event_rate() {
    let sign_inst = NonRealizableScalar::<Real>::new(4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let stats =
        estimate_event_probability(&sign_inst, 9, Event::AntiConcentration, 40_000, &mut rng)
            .unwrap();
    assert!(stats.z_score.unwrap().abs() <= 4.0, "{stats:?}");
    for _ in 0..20 {
        let data = condition_dataset(
            &sign_inst,
            9,
            Event::AntiConcentration,
            ConditioningMode::Rejection,
            &mut rng,
        )
        .unwrap();
        assert!(event_holds(Event::AntiConcentration, &data).unwrap());
        assert_eq!(data.conditioning.as_deref(), Some("anti_concentration"));
        assert_eq!(data.len(), 9);
    }

    let coupled = CoupledRealizable::<Real>::new(4, 0.25, 1.0).unwrap();
    let stats =
        estimate_event_probability(&coupled, 4, Event::Permutation, 40_000, &mut rng).unwrap();
    assert!((stats.exact.unwrap() - 24.0 / 256.0).abs() <= 1e-15);
    assert!(stats.z_score.unwrap().abs() <= 4.0, "{stats:?}");
    for _ in 0..10 {
        let data =
            condition_dataset(&coupled, 4, Event::Permutation, ConditioningMode::Rejection, &mut rng)
                .unwrap();
        assert!(event_holds(Event::Permutation, &data).unwrap());
    }
}

#[test]
fn fully_converged_cell_is_numerically_quiet() {
    let inst = ScalarRealizable::<Real>::new(CurvatureLaw::Constant(1.0), 0.0).unwrap();
    let stats =
        estimate_excess_risk(&inst, 0.5, 100_000, 4, Algorithm::GD, 3, None, 99).unwrap();
    assert!(stats.mean_excess <= 1e-8, "mean {:e}", stats.mean_excess);
    assert_eq!(stats.stderr.to_bits(), 0.0f64.to_bits());
    assert_eq!(stats.divergences, 0);
}

#[test]
fn sweep_artifacts_round_trip_on_disk() {
    let grid = SweepGrid::new(
        "twodim{lambda=1}",
        Algorithm::GD,
        vec![0.5, 1.0],
        vec![2, 4],
        vec![1],
        3,
        42,
    );
    let sweep = run_sweep(&grid).unwrap();

    let csv = render(Results::Sweep(&sweep), OutputFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(headers, CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for (row, cell) in rows.iter().zip(&sweep.cells) {
        let mean: f64 = row[7].parse().unwrap();
        assert_eq!(mean.to_bits(), cell.mean_excess.unwrap().to_bits());
    }

    let json = render(Results::Sweep(&sweep), OutputFormat::Json).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["cells"].as_array().unwrap().len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let json_path = dir.path().join("sweep.json");
    write_results(Results::Sweep(&sweep), &csv_path, OutputFormat::Csv).unwrap();
    write_results(Results::Sweep(&sweep), &json_path, OutputFormat::Json).unwrap();
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap(), csv);
    assert_eq!(std::fs::read_to_string(&json_path).unwrap(), json);
}

#[test]
fn fit_rate_recovers_decay_on_live_sweeps() {
    // With lambda tied to 1/(eta*T) per cell, the averaged excess decays
    // like 1/(eta*T) along either axis.
    let by_t = SweepGrid::new(
        "twodim",
        Algorithm::GD,
        vec![1.0],
        vec![16, 64, 256, 1024],
        vec![1],
        1,
        5,
    );
    let sweep = run_sweep(&by_t).unwrap();
    let fit = fit_rate(&sweep, SweptVar::T, &CellFilter::default()).unwrap();
    assert!(
        (-1.1..=-0.9).contains(&fit.slope),
        "slope vs T: {} ({fit:?})",
        fit.slope
    );
    assert!(fit.r_squared >= 0.99);
    assert_eq!(fit.points_used, 4);

    let by_eta = SweepGrid::new(
        "twodim",
        Algorithm::GD,
        vec![0.125, 0.25, 0.5, 1.0],
        vec![256],
        vec![1],
        1,
        5,
    );
    let sweep = run_sweep(&by_eta).unwrap();
    let fit = fit_rate(&sweep, SweptVar::Eta, &CellFilter::default()).unwrap();
    assert!(
        (-1.1..=-0.9).contains(&fit.slope),
        "slope vs eta: {} ({fit:?})",
        fit.slope
    );
}

#[test]
fn isolated_rerun_matches_the_sweep_bit_for_bit() {
    let base_seed = 1234u64;
    let grid = SweepGrid::new(
        "hiding",
        Algorithm::GD,
        vec![1.0],
        vec![128],
        vec![32],
        50,
        base_seed,
    );
    let sweep = run_sweep(&grid).unwrap();
    let cell = &sweep.cells[0];

    let inst = instance_from_str("hiding", &BuildContext::new(1.0, 128, 32)).unwrap();
    let isolated =
        estimate_excess_risk(inst.as_ref(), 1.0, 128, 32, Algorithm::GD, 50, None, base_seed)
            .unwrap();
    assert_eq!(isolated.mean_excess.to_bits(), cell.mean_excess.unwrap().to_bits());
    assert_eq!(isolated.stderr.to_bits(), cell.stderr.unwrap().to_bits());

    // Reconstruct replicate 0 from scratch: same derived seed, dataset
    // stream, and run.
    let seed0 = replicate_seed(base_seed, 1.0, 128, 32, 0);
    let hiding = CoordinateHiding::<Real>::new(32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed0);
    rng.set_stream(0);
    let data = hiding.draw_dataset(32, &mut rng).unwrap();
    let config = OptimizerConfig::new(Algorithm::GD, 1.0, 128);
    let run = run_gd(&hiding, &data, &config).unwrap();
    let single =
        estimate_excess_risk(&hiding, 1.0, 128, 32, Algorithm::GD, 1, None, base_seed).unwrap();
    assert_eq!(single.mean_excess.to_bits(), run.excess_risk_avg.to_bits());
}
