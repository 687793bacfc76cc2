use lpvrom::dmdc::Readout;
use lpvrom::experiment::{
    fit_grid_rom, generate_training, plant_gramians, plant_trims, predict, prediction_error, simulate_truth, FitCache,
    FitOptions, Scenario, SpeedProfile,
};
use lpvrom::gramians::GramianOptions;
use lpvrom::io::{grid_rom_from_bundle, grid_rom_to_bundle, read_trajectory, write_trajectory, Bundle};
use lpvrom::lpv::{Algorithm, GridRom};
use lpvrom::signals::SignalSpec;
use lpvrom::{make_benchmark_plant, HighOrderPlant, PlantConfig, SettleConfig};

fn small_config() -> PlantConfig {
    PlantConfig {
        n_x: 30,
        n_u: 2,
        n_y: 1,
        relevant_units: 2,
        distractor_units: 2,
        trim_input: vec![1.0, 0.0],
        grid_rhos: vec![20.0, 30.0, 40.0, 50.0],
        ..PlantConfig::default()
    }
}

fn training_signal() -> SignalSpec {
    SignalSpec::ImpulseTrain {
        amplitude: 1.0,
        spacing: 10,
        seed: 4,
    }
}

fn scenario() -> Scenario {
    Scenario {
        name: "sine".into(),
        speed: SpeedProfile::Ramp { from: 20.0, to: 50.0 },
        len: 200,
        signal: SignalSpec::SineBank {
            channels: vec![0, 1],
            factors: vec![0.06, 0.03],
            amplitudes: vec![1.0, 0.5],
        },
    }
}

#[test]
fn every_algorithm_fits_predicts_and_round_trips() {
    let plant: HighOrderPlant<f64> = make_benchmark_plant(&small_config()).unwrap();
    let trims = plant_trims(&plant, &SettleConfig::default()).unwrap();
    let gramians = plant_gramians(&plant, &GramianOptions::default()).unwrap();
    let data = generate_training(&plant, &trims, &training_signal(), 200).unwrap();
    let cache = FitCache::new(&data, Some(&gramians)).unwrap();
    let truth = simulate_truth(&plant, &trims, &scenario()).unwrap();
    let readout = Readout {
        matrix: plant.model(0).c.clone(),
    };

    for alg in [Algorithm::Dmdc, Algorithm::Admdc, Algorithm::Iorom, Algorithm::Bmd] {
        let rom = fit_grid_rom(alg, &data, &cache, 8, &FitOptions::default()).unwrap();
        rom.validate().unwrap();
        let err = prediction_error(&rom, &truth, &readout).unwrap();
        assert!(err.is_finite() && err < 1.0, "{}: relative error {err}", alg.tag());

        let text = grid_rom_to_bundle(&rom).to_text();
        let back: GridRom<f64> = grid_rom_from_bundle(&Bundle::from_text(&text).unwrap()).unwrap();
        assert_eq!(back.models, rom.models, "{}", alg.tag());
        assert_eq!(
            predict(&back, &truth, &readout).unwrap(),
            predict(&rom, &truth, &readout).unwrap(),
            "{}: stored ROM predicts differently",
            alg.tag()
        );
    }

    // Between knots the trims are only interpolated, so the exact model is
    // exact at a frozen knot, up to how well the trims settled (1e-10).
    let exact = GridRom::exact(&plant, &trims).unwrap();
    let frozen = Scenario {
        speed: SpeedProfile::Constant { speed: 30.0 },
        ..scenario()
    };
    let truth = simulate_truth(&plant, &trims, &frozen).unwrap();
    let err = prediction_error(&exact, &truth, &readout).unwrap();
    assert!(err < 1e-8, "exact model error {err}");
}

#[test]
fn stored_training_runs_rebuild_identical_snapshots() {
    let plant: HighOrderPlant<f64> = make_benchmark_plant(&small_config()).unwrap();
    let trims = plant_trims(&plant, &SettleConfig::default()).unwrap();
    let data = generate_training(&plant, &trims, &training_signal(), 50).unwrap();
    let dir = std::env::temp_dir().join(format!("lpvrom-e2e-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (j, traj) in data.trajectories.iter().enumerate() {
        let path = dir.join(format!("traj-{j}.csv"));
        write_trajectory(&path, traj).unwrap();
        let back = read_trajectory::<f64>(&path).unwrap();
        assert_eq!(&back, traj);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn single_precision_pipeline_runs() {
    let plant: HighOrderPlant<f32> = make_benchmark_plant(&small_config()).unwrap();
    let settle = SettleConfig {
        tolerance: 1e-6,
        ..SettleConfig::default()
    };
    let trims = plant_trims(&plant, &settle).unwrap();
    let data = generate_training(&plant, &trims, &training_signal(), 200).unwrap();
    let cache = FitCache::new(&data, None).unwrap();
    let rom = fit_grid_rom(Algorithm::Iorom, &data, &cache, 6, &FitOptions::default()).unwrap();
    let truth = simulate_truth(&plant, &trims, &scenario()).unwrap();
    let readout = Readout {
        matrix: plant.model(0).c.clone(),
    };
    let err = prediction_error(&rom, &truth, &readout).unwrap();
    assert!(err.is_finite() && err < 1.0, "f32 IOROM error {err}");
}
