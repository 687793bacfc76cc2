//! Shared fixtures for the CLI integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use lpvrom_cli::ExperimentConfig;

/// A desk-scale experiment: 30 states, 2 inputs, 4 grid points, 2 seeds.
pub const SMALL_CONFIG: &str = r#"
seed = 11

[plant]
n_x = 30
n_u = 2
n_y = 1
relevant_units = 2
distractor_units = 2
trim_input = [1.0, 0.0]

[grid]
n_g = 4
range = [20.0, 50.0]

[training]
n_s = 200
seeds = 2
signal = { kind = "impulse_train", amplitude = 1.0, spacing = 10, seed = 0 }

[fit]
algorithms = ["admdc", "iorom", "bmd"]
n_z = [4, 6]

[eval]
trace_n_z = 4

[[scenarios]]
name = "sine"
len = 200
speed = { profile = "ramp", from = 20.0, to = 50.0 }
signal = { kind = "sine_bank", channels = [0, 1], factors = [0.06, 0.03], amplitudes = [1.0, 0.5] }

[[scenarios]]
name = "prbs"
len = 200
speed = { profile = "ramp", from = 20.0, to = 50.0 }
signal = { kind = "prbs9", channels = [0, 1], amplitude = 1.0, chip = 2, seed = 1 }

[mpc]
algorithms = ["admdc", "iorom", "bmd"]
n_z = [4, 6]
len = 120
controlled = [0]
speed = { profile = "ramp", from = 27.0, to = 50.0 }
disturbances = [{ kind = "gust_one_cosine", channel = 1, length_s = 0.2, amplitude = 1.0, start_s = 0.1 }]
"#;

pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL_CONFIG).expect("fixture config is valid")
}

/// Fresh scratch directory unique to this process and tag.
pub fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lpvrom-test-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// All files below `root` whose extension is `ext`, as sorted relative paths.
pub fn files_with_extension(root: &Path, ext: &str) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, ext: &str, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, ext, out);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, ext, &mut out);
    out.sort();
    out
}
