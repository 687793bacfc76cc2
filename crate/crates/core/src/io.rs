//! Plain-text persistence.
//!
//! A *bundle* is a manifest of `# key = value` lines followed by matrix
//! blocks:
//!
//! ```text
//! # kind = plant
//! @block a.0 3 3
//! 1e0,0e0,0e0
//! ...
//! ```
//!
//! Values are written in shortest round-trip exponent form, so reading back
//! reproduces every stored number exactly. Trajectories are CSV files with a
//! `t, x_1.., u_1.., y_1..` header and a TOML trim sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::gramians::{GramianPair, ObservabilityMethod};
use crate::grid::ParamGrid;
use crate::lpv::{Algorithm, GridRom};
use crate::model::ReducedModel;
use crate::plant::HighOrderPlant;
use crate::scalar::{lit, to_f64, Scalar};
use crate::snapshots::{TrajectorySet, Trim};
use crate::system::StateSpace;

fn parse_err<V>(msg: impl Into<String>) -> Result<V> {
    Err(RomError::Parse(msg.into()))
}

fn fmt_value(out: &mut String, v: f64) {
    let _ = write!(out, "{v:e}");
}

fn parse_value<T: Scalar>(s: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(lit)
        .map_err(|e| RomError::Parse(format!("bad number '{s}': {e}")))
}

/// Manifest plus named matrices, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub manifest: BTreeMap<String, String>,
    pub blocks: Vec<(String, DMatrix<f64>)>,
}

impl Bundle {
    pub fn new(kind: &str) -> Self {
        let mut b = Self::default();
        b.set("kind", kind);
        b
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.manifest.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.manifest
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| RomError::Parse(format!("manifest key '{key}' missing")))
    }

    pub fn get_parsed<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| RomError::Parse(format!("manifest key '{key}' has bad value '{raw}'")))
    }

    pub fn push<T: Scalar>(&mut self, name: impl Into<String>, m: &DMatrix<T>) {
        self.blocks.push((name.into(), m.map(to_f64)));
    }

    pub fn push_vector<T: Scalar>(&mut self, name: impl Into<String>, v: &DVector<T>) {
        self.push(name, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
    }

    pub fn matrix<T: Scalar>(&self, name: &str) -> Result<DMatrix<T>> {
        self.try_matrix(name)?
            .ok_or_else(|| RomError::Parse(format!("block '{name}' missing")))
    }

    pub fn try_matrix<T: Scalar>(&self, name: &str) -> Result<Option<DMatrix<T>>> {
        Ok(self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m.map(lit::<T>)))
    }

    pub fn vector<T: Scalar>(&self, name: &str) -> Result<DVector<T>> {
        let m = self.matrix::<T>(name)?;
        if m.ncols() != 1 {
            return parse_err(format!("block '{name}' is not a column vector"));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.manifest {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for (name, m) in &self.blocks {
            let _ = writeln!(out, "@block {name} {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    if c > 0 {
                        out.push(',');
                    }
                    fmt_value(&mut out, m[(r, c)]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut b = Self::default();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((no, line)) = lines.next() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((k, v)) = rest.split_once('=') else {
                    return parse_err(format!("line {}: manifest entry without '='", no + 1));
                };
                b.manifest.insert(k.trim().to_string(), v.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("@block ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, rows, cols] = parts[..] else {
                    return parse_err(format!("line {}: expected '@block name rows cols'", no + 1));
                };
                let rows: usize = rows.parse().map_err(|_| RomError::Parse(format!("line {}: bad row count", no + 1)))?;
                let cols: usize = cols.parse().map_err(|_| RomError::Parse(format!("line {}: bad column count", no + 1)))?;
                let mut m = DMatrix::zeros(rows, cols);
                for r in 0..rows {
                    let Some((rno, row)) = lines.next() else {
                        return parse_err(format!("block '{name}' truncated"));
                    };
                    let vals: Vec<&str> = if cols == 0 { Vec::new() } else { row.split(',').collect() };
                    if vals.len() != cols {
                        return parse_err(format!("line {}: expected {cols} values, got {}", rno + 1, vals.len()));
                    }
                    for (c, v) in vals.iter().enumerate() {
                        m[(r, c)] = parse_value::<f64>(v)?;
                    }
                }
                b.blocks.push((name.to_string(), m));
            } else {
                return parse_err(format!("line {}: unexpected content", no + 1));
            }
        }
        Ok(b)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let found = self.get("kind")?;
        if found != kind {
            return parse_err(format!("expected a '{kind}' bundle, found '{found}'"));
        }
        Ok(())
    }
}

/// Writes through a temporary sibling file and renames, so readers never see
/// a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn join_f64<T: Scalar>(vals: &[T]) -> String {
    let mut s = String::new();
    for (i, &v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        fmt_value(&mut s, to_f64(v));
    }
    s
}

fn split_f64<T: Scalar>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace().map(parse_value).collect()
}

pub fn plant_to_bundle<T: Scalar>(plant: &HighOrderPlant<T>) -> Bundle {
    let mut b = Bundle::new("plant");
    b.set("grid", join_f64(plant.grid().points()));
    b.set("dt", format!("{:e}", to_f64(plant.dt())));
    b.set("n_x", plant.n_x());
    b.set("n_u", plant.n_u());
    b.set("n_y", plant.n_y());
    b.push_vector("trim_input", plant.trim_input());
    for (j, m) in plant.models().iter().enumerate() {
        for (name, mat) in [("a", &m.a), ("b", &m.b), ("c", &m.c), ("d", &m.d), ("r", &m.r), ("p", &m.p)] {
            b.push(format!("{name}.{j}"), mat);
        }
    }
    b
}

pub fn plant_from_bundle<T: Scalar>(b: &Bundle) -> Result<HighOrderPlant<T>> {
    b.expect_kind("plant")?;
    let grid = ParamGrid::new(split_f64(b.get("grid")?)?)?;
    let models = (0..grid.len())
        .map(|j| {
            let m = |name: &str| b.matrix::<T>(&format!("{name}.{j}"));
            StateSpace::with_algebraic(m("a")?, m("b")?, m("c")?, m("d")?, m("r")?, m("p")?)
        })
        .collect::<Result<Vec<_>>>()?;
    HighOrderPlant::new(grid, models, parse_value(b.get("dt")?)?, b.vector("trim_input")?)
}

pub fn grid_rom_to_bundle<T: Scalar>(rom: &GridRom<T>) -> Bundle {
    let mut b = Bundle::new("grid_rom");
    b.set("algorithm", rom.algorithm.tag());
    b.set("grid", join_f64(rom.grid.points()));
    b.set("dt", format!("{:e}", to_f64(rom.dt)));
    b.set("n_z", rom.n_z());
    // Shared bases are common; store them once.
    let shared_lift = rom.models.windows(2).all(|w| w[0].lift == w[1].lift);
    if shared_lift {
        if let Some(m) = rom.models.first() {
            b.push("lift", &m.lift);
        }
    }
    for (j, m) in rom.models.iter().enumerate() {
        b.push(format!("f.{j}"), &m.f);
        b.push(format!("g.{j}"), &m.g);
        for (name, mat) in [("h", &m.h), ("d", &m.d), ("l", &m.l), ("p", &m.p)] {
            if let Some(mat) = mat {
                b.push(format!("{name}.{j}"), mat);
            }
        }
        if !shared_lift {
            b.push(format!("lift.{j}"), &m.lift);
        }
        b.set(&format!("identifiable.{j}"), m.identifiable);
        b.push_vector(format!("u_trim.{j}"), &rom.u_trim[j]);
        b.push_vector(format!("y_trim.{j}"), &rom.y_trim[j]);
        if let Some(xt) = &rom.x_trim {
            b.push_vector(format!("x_trim.{j}"), &xt[j]);
        }
        if let Some(ws) = &rom.test_spaces {
            b.push(format!("w.{j}"), &ws[j]);
        }
    }
    b
}

pub fn grid_rom_from_bundle<T: Scalar>(b: &Bundle) -> Result<GridRom<T>> {
    b.expect_kind("grid_rom")?;
    let algorithm = Algorithm::from_tag(b.get("algorithm")?)?;
    let points: Vec<T> = split_f64(b.get("grid")?)?;
    let grid = ParamGrid::new(points.clone())?;
    let mut models = Vec::with_capacity(points.len());
    let mut trims = Vec::with_capacity(points.len());
    let mut spaces = Vec::new();
    for (j, &rho) in points.iter().enumerate() {
        let opt = |name: &str| b.try_matrix::<T>(&format!("{name}.{j}"));
        let model = ReducedModel {
            f: b.matrix(&format!("f.{j}"))?,
            g: b.matrix(&format!("g.{j}"))?,
            h: opt("h")?,
            d: opt("d")?,
            l: opt("l")?,
            p: opt("p")?,
            lift: match opt("lift")? {
                Some(l) => l,
                None => b.matrix("lift")?,
            },
            rho,
            identifiable: b.get_parsed(&format!("identifiable.{j}"))?,
        };
        let x = match b.try_matrix::<T>(&format!("x_trim.{j}"))? {
            Some(m) => DVector::from_column_slice(m.as_slice()),
            None => DVector::zeros(model.n_x()),
        };
        trims.push(Trim {
            x,
            u: b.vector(&format!("u_trim.{j}"))?,
            y: b.vector(&format!("y_trim.{j}"))?,
        });
        if let Some(w) = opt("w")? {
            spaces.push(w);
        }
        models.push(model);
    }
    let has_x = b.try_matrix::<T>("x_trim.0")?.is_some();
    let test_spaces = (!spaces.is_empty()).then_some(spaces);
    let mut rom = GridRom::from_models(algorithm, grid, models, &trims, test_spaces, parse_value(b.get("dt")?)?)?;
    if !has_x {
        rom.x_trim = None;
    }
    Ok(rom)
}

pub fn gramians_to_bundle<T: Scalar>(pairs: &[GramianPair<T>]) -> Bundle {
    let mut b = Bundle::new("gramians");
    b.set("count", pairs.len());
    for (j, p) in pairs.iter().enumerate() {
        b.push(format!("wc.{j}"), &p.wc);
        b.push(format!("wo.{j}"), &p.wo);
        b.set(&format!("horizon.{j}"), p.horizon);
        b.set(&format!("method_o.{j}"), p.method_o.tag());
        b.set(&format!("truncated.{j}"), p.truncated);
    }
    b
}

pub fn gramians_from_bundle<T: Scalar>(b: &Bundle) -> Result<Vec<GramianPair<T>>> {
    b.expect_kind("gramians")?;
    let count: usize = b.get_parsed("count")?;
    (0..count)
        .map(|j| {
            let method_o = match b.get(&format!("method_o.{j}"))? {
                t if t == ObservabilityMethod::AdjointImpulse.tag() => ObservabilityMethod::AdjointImpulse,
                t if t == ObservabilityMethod::Perturbation.tag() => ObservabilityMethod::Perturbation,
                other => return parse_err(format!("unknown observability method '{other}'")),
            };
            Ok(GramianPair {
                wc: b.matrix(&format!("wc.{j}"))?,
                wo: b.matrix(&format!("wo.{j}"))?,
                horizon: b.get_parsed(&format!("horizon.{j}"))?,
                method_o,
                truncated: b.get_parsed(&format!("truncated.{j}"))?,
            })
        })
        .collect()
}

pub fn trims_to_bundle<T: Scalar>(trims: &[Trim<T>]) -> Bundle {
    let mut b = Bundle::new("trims");
    b.set("count", trims.len());
    for (j, t) in trims.iter().enumerate() {
        b.push_vector(format!("x.{j}"), &t.x);
        b.push_vector(format!("u.{j}"), &t.u);
        b.push_vector(format!("y.{j}"), &t.y);
    }
    b
}

pub fn trims_from_bundle<T: Scalar>(b: &Bundle) -> Result<Vec<Trim<T>>> {
    b.expect_kind("trims")?;
    let count: usize = b.get_parsed("count")?;
    (0..count)
        .map(|j| {
            Ok(Trim {
                x: b.vector(&format!("x.{j}"))?,
                u: b.vector(&format!("u.{j}"))?,
                y: b.vector(&format!("y.{j}"))?,
            })
        })
        .collect()
}

/// Trim sidecar of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimRecord {
    pub rho: f64,
    pub dt: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// CSV text of a trajectory: one row per sample.
pub fn trajectory_csv<T: Scalar>(traj: &TrajectorySet<T>) -> String {
    let (x, u, y) = (traj.states(), traj.inputs(), traj.outputs());
    let mut out = String::from("t");
    for (prefix, n) in [("x", x.nrows()), ("u", u.nrows()), ("y", y.nrows())] {
        for i in 1..=n {
            let _ = write!(out, ",{prefix}_{i}");
        }
    }
    out.push('\n');
    let dt = to_f64(traj.dt());
    for k in 0..x.ncols() {
        fmt_value(&mut out, k as f64 * dt);
        for m in [x, u, y] {
            for i in 0..m.nrows() {
                out.push(',');
                fmt_value(&mut out, to_f64(m[(i, k)]));
            }
        }
        out.push('\n');
    }
    out
}

pub fn trim_record<T: Scalar>(traj: &TrajectorySet<T>) -> TrimRecord {
    let v = |d: &DVector<T>| d.iter().map(|&x| to_f64(x)).collect();
    TrimRecord {
        rho: to_f64(traj.rho()),
        dt: to_f64(traj.dt()),
        x: v(&traj.trim().x),
        u: v(&traj.trim().u),
        y: v(&traj.trim().y),
    }
}

/// Writes `path` (CSV) and `path.trim.toml`.
pub fn write_trajectory<T: Scalar>(path: &Path, traj: &TrajectorySet<T>) -> Result<()> {
    write_atomic(path, &trajectory_csv(traj))?;
    let sidecar = toml::to_string(&trim_record(traj)).map_err(|e| RomError::Parse(e.to_string()))?;
    write_atomic(&sidecar_path(path), &sidecar)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".trim.toml");
    s.into()
}

pub fn read_trajectory<T: Scalar>(path: &Path) -> Result<TrajectorySet<T>> {
    let rec: TrimRecord =
        toml::from_str(&fs::read_to_string(sidecar_path(path))?).map_err(|e| RomError::Parse(e.to_string()))?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| RomError::Parse("empty trajectory file".into()))?.split(',').collect();
    let (n_x, n_u, n_y) = (rec.x.len(), rec.u.len(), rec.y.len());
    if header.len() != 1 + n_x + n_u + n_y || header[0] != "t" {
        return parse_err("trajectory header does not match its trim record");
    }
    let rows: Vec<Vec<T>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(parse_value).collect::<Result<Vec<T>>>())
        .collect::<Result<_>>()?;
    if rows.iter().any(|r| r.len() != header.len()) {
        return parse_err("ragged trajectory row");
    }
    let n = rows.len();
    let block = |off: usize, k: usize| DMatrix::from_fn(k, n, |i, c| rows[c][off + i]);
    let v = |xs: &[f64]| DVector::from_iterator(xs.len(), xs.iter().map(|&x| lit::<T>(x)));
    TrajectorySet::new(
        block(1, n_x),
        block(1 + n_x, n_u),
        block(1 + n_x + n_u, n_y),
        lit(rec.dt),
        lit(rec.rho),
        Trim {
            x: v(&rec.x),
            u: v(&rec.u),
            y: v(&rec.y),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{make_benchmark_plant, PlantConfig};
    use crate::snapshots::SettleConfig;

    fn small_plant() -> HighOrderPlant<f64> {
        make_benchmark_plant(&PlantConfig {
            n_x: 8,
            n_u: 2,
            n_y: 2,
            grid_rhos: vec![20.0, 35.0, 50.0],
            trim_input: vec![1.0, 0.0],
            ..PlantConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn bundle_text_round_trip_is_exact() {
        let mut b = Bundle::new("test");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, f64::MAX, 0.0, -2.5e17]);
        b.push("m", &m);
        b.push("empty", &DMatrix::<f64>::zeros(0, 3));
        let back = Bundle::from_text(&b.to_text()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.matrix::<f64>("m").unwrap(), m);
    }

    #[test]
    fn malformed_bundles_are_rejected() {
        assert!(Bundle::from_text("@block m 2 2\n1,2\n").is_err());
        assert!(Bundle::from_text("@block m 1 2\n1,x\n").is_err());
        assert!(Bundle::from_text("garbage\n").is_err());
    }

    #[test]
    fn plant_round_trip() {
        let p = small_plant();
        let q: HighOrderPlant<f64> = plant_from_bundle(&Bundle::from_text(&plant_to_bundle(&p).to_text()).unwrap()).unwrap();
        assert_eq!(p.models(), q.models());
        assert_eq!(p.grid(), q.grid());
        assert_eq!(p.dt(), q.dt());
    }

    #[test]
    fn grid_rom_round_trip() {
        let p = small_plant();
        let trims = p.grid_trims(&SettleConfig::default()).unwrap();
        let rom = GridRom::exact(&p, &trims).unwrap();
        let back: GridRom<f64> = grid_rom_from_bundle(&Bundle::from_text(&grid_rom_to_bundle(&rom).to_text()).unwrap()).unwrap();
        assert_eq!(rom, back);

        let mut distinct = rom.clone();
        distinct.algorithm = Algorithm::Admdc;
        distinct.models[1].lift[(0, 0)] += 1.0;
        let b = grid_rom_to_bundle(&distinct);
        assert!(b.try_matrix::<f64>("lift").unwrap().is_none());
        assert_eq!(grid_rom_from_bundle::<f64>(&b).unwrap().models, distinct.models);
    }

    #[test]
    fn trims_round_trip() {
        let p = small_plant();
        let trims = p.grid_trims(&SettleConfig::default()).unwrap();
        let b = Bundle::from_text(&trims_to_bundle(&trims).to_text()).unwrap();
        assert_eq!(trims_from_bundle::<f64>(&b).unwrap(), trims);
        assert!(plant_from_bundle::<f64>(&b).is_err());
    }

    #[test]
    fn gramian_round_trip() {
        let p = small_plant();
        let g = crate::gramians::grid_gramians(&p, &Default::default()).unwrap();
        let back: Vec<GramianPair<f64>> = gramians_from_bundle(&Bundle::from_text(&gramians_to_bundle(&g).to_text()).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn trajectory_round_trip() {
        let p = small_plant();
        let trims = p.grid_trims(&SettleConfig::default()).unwrap();
        let u = DMatrix::from_fn(2, 20, |i, k| ((i + k) as f64).sin() + trims[1].u[i]);
        let sim = p.simulate(&u, &[35.0; 20], &trims[1].x).unwrap();
        let traj = sim.into_trajectory(p.dt(), trims[1].clone()).unwrap();
        let dir = std::env::temp_dir().join(format!("lpvrom-io-{}", std::process::id()));
        let path = dir.join("traj.csv");
        write_trajectory(&path, &traj).unwrap();
        let back: TrajectorySet<f64> = read_trajectory(&path).unwrap();
        assert_eq!(back.states(), traj.states());
        assert_eq!(back.inputs(), traj.inputs());
        assert_eq!(back.trim(), traj.trim());
        fs::remove_dir_all(dir).unwrap();
    }
}
