use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multilayer_vi::config::{parse_config, TractionConfig};
use multilayer_vi::output::{read_convergence_csv, read_kkt_csv, write_convergence_csv, write_kkt_csv};
use multilayer_vi::problems::canonical_config;
use multilayer_vi::verification::convergence::{ConvergenceRow, ConvergenceTable};
use multilayer_vi::verification::kkt::KktReport;
use proptest::prelude::*;

const CANONICAL: &str = include_str!("../../../configs/canonical.toml");

fn mlvi(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlvi"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The shipped configuration at half the resolution.
fn coarse_canonical() -> String {
    CANONICAL
        .replace("nx = 16", "nx = 8")
        .replace("ny = 4", "ny = 2")
        .replace("ny = 8", "ny = 4")
}

fn unloaded() -> String {
    let mut cfg = canonical_config();
    cfg.geometry.nx = 4;
    for (l, ny) in cfg.layer.values_mut().zip([1, 1, 2]) {
        l.ny = ny;
    }
    cfg.loads.body = vec![[0.0, 0.0]; 3];
    cfg.loads.traction = TractionConfig::Uniform { value: [0.0, 0.0] };
    cfg.to_toml()
}

fn vtk_vectors(text: &str) -> Vec<f64> {
    text.lines()
        .skip_while(|l| !l.starts_with("VECTORS displacement"))
        .skip(1)
        .take_while(|l| !l.starts_with("CELL_DATA"))
        .flat_map(|l| {
            l.split_whitespace()
                .map(|v| v.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn unloaded_solve_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, unloaded()).unwrap();
    let out = dir.path().join("out");
    let o = mlvi(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let vtk = fs::read_to_string(out.join("solution.vtk")).unwrap();
    let u = vtk_vectors(&vtk);
    assert!(!u.is_empty() && u.iter().all(|v| *v == 0.0));
    let kkt = read_kkt_csv(fs::File::open(out.join("kkt.csv")).unwrap()).unwrap();
    assert!(kkt.values().iter().all(|v| *v == 0.0));
    assert!(fs::read_to_string(out.join("solver.log"))
        .unwrap()
        .contains("status: converged"));
}

#[test]
fn solve_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, coarse_canonical()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = mlvi(&["solve"], &cfg, d);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}{}",
            stdout(&o),
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for f in ["solution.vtk", "solver.csv", "kkt.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn converge_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, coarse_canonical()).unwrap();
    let out = dir.path().join("out");
    let o = mlvi(&["converge", "--levels", "4"], &cfg, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(text.lines().next().unwrap().split(',').any(|c| c == "fitted_slope"));
    let table = read_convergence_csv(text.as_bytes()).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert!(table.strictly_decreasing());
    assert!(table.fitted_slope > 0.5);
    assert!(out.join("convergence.dat").exists());
    assert!(stdout(&o).contains("fitted slope"));
}

#[test]
fn verify_notes_dense_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CANONICAL).unwrap();
    let out = dir.path().join("out");
    let o = mlvi(&["verify"], &cfg, &out);
    let s = stdout(&o);
    assert!(s.contains("oracle: skipped: dense regime exceeded"), "{s}");
    assert_eq!(o.status.code(), Some(0), "{s}");
    let csv = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert!(csv.contains("greens_identity") && csv.contains("stick_slip_equivalence"));
}

#[test]
fn verify_runs_oracle_on_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let mut c = parse_config(&coarse_canonical()).unwrap();
    c.geometry.nx = 4;
    for (l, ny) in c.layer.values_mut().zip([1, 1, 2]) {
        l.ny = ny;
    }
    fs::write(&cfg, c.to_toml()).unwrap();
    let out = dir.path().join("out");
    let o = mlvi(&["verify"], &cfg, &out);
    let s = stdout(&o);
    assert!(s.contains("oracle: pass"), "{s}");
}

#[test]
fn seed_must_fit_a_toml_integer() {
    let mut c = canonical_config();
    c.solver.seed = u64::MAX;
    assert!(c.validate().is_err());
}

#[test]
fn bad_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CANONICAL.replace("mu = 1.852e9", "mu = -1.0")).unwrap();
    let o = mlvi(&["mesh"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn mesh_command_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, CANONICAL).unwrap();
    let out = dir.path().join("out");
    let o = mlvi(&["mesh"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    let mesh = multilayer_vi::mesh::Mesh::read_text(fs::read(out.join("mesh.txt")).unwrap().as_slice()).unwrap();
    assert_eq!(mesh.n_nodes(), 17 * 19);
    assert!(fs::read_to_string(out.join("mesh.vtk"))
        .unwrap()
        .contains("POINTS 323 double"));
}

fn any_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        Just(0.0),
        Just(f64::NAN),
        Just(f64::INFINITY)
    ]
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn config_round_trips(
        layers in 1usize..=4,
        nx in 1usize..40,
        width in 0.1f64..10.0,
        mus in prop::collection::vec((0.0f64..2.0, prop::option::of(1e-9f64..1.0)), 3),
        lam in 1e3f64..1e10,
        shear in 1e3f64..1e10,
        seed in 0..=i64::MAX as u64,
        vtk in any::<bool>(),
        traction in prop_oneof![
            (any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e6f64..1e6)
                .prop_map(|(a, b)| TractionConfig::Uniform { value: [a, b] }),
            (0.0f64..1.0, 0.01f64..0.5, -1e6f64..1e6)
                .prop_map(|(c, w, a)| TractionConfig::Patch { center: c, half_width: w, amplitude: [0.3 * a, a] }),
            prop::collection::vec((0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..6)
                .prop_map(|r| {
                    let mut rows: Vec<[f64; 3]> = r.into_iter().map(|(x, a, b)| [x, a, b]).collect();
                    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
                    rows.dedup_by(|a, b| a[0] == b[0]);
                    TractionConfig::Table { rows }
                }),
        ],
    ) {
        let mut c = canonical_config();
        c.geometry = multilayer_vi::config::GeometryConfig { width, nx };
        let proto = c.layer["1"].clone();
        c.layer = (1..=layers)
            .map(|i| {
                let mut l = proto.clone();
                l.lambda = lam * i as f64;
                l.mu = shear / i as f64;
                (i.to_string(), l)
            })
            .collect();
        let iproto = c.interface["1"].clone();
        c.interface = (1..layers)
            .map(|i| {
                let mut f = iproto.clone();
                let (mu, delta) = mus[i - 1];
                f.mu = mu;
                f.delta = delta;
                f.law = if delta.is_some() {
                    multilayer_vi::config::TangentialName::ModifiedCoulomb
                } else {
                    multilayer_vi::config::TangentialName::Coulomb
                };
                (i.to_string(), f)
            })
            .collect();
        c.loads.body = vec![[0.0, -1.0]; layers];
        c.loads.traction = traction;
        c.solver.seed = seed;
        c.output.vtk = vtk;
        let text = c.to_toml();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn convergence_csv_round_trips(
        rows in prop::collection::vec((any_float(), 0usize..1_000_000, any_float(), any_float(), any_float(), 0usize..500), 1..6),
        slope in any_float(),
        stiffness in any_float(),
    ) {
        let table = ConvergenceTable {
            rows: rows
                .iter()
                .map(|&(h, dofs, e, i, r, it)| ConvergenceRow {
                    h,
                    dofs,
                    error: e,
                    ratio: e / 2.0,
                    local_slope: -e,
                    interp_error: i,
                    residual: r,
                    outer_iters: it,
                })
                .collect(),
            fitted_slope: slope,
            reference: "fine grid, two refinements".into(),
            stiffness,
        };
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &table).unwrap();
        let back = read_convergence_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.rows.len(), table.rows.len());
        for (a, b) in back.rows.iter().zip(&table.rows) {
            prop_assert!(same(a.h, b.h) && same(a.error, b.error) && same(a.ratio, b.ratio));
            prop_assert!(same(a.local_slope, b.local_slope) && same(a.interp_error, b.interp_error));
            prop_assert!(same(a.residual, b.residual));
            prop_assert_eq!((a.dofs, a.outer_iters), (b.dofs, b.outer_iters));
        }
        prop_assert!(same(back.fitted_slope, slope) && same(back.stiffness, stiffness));
        prop_assert_eq!(&back.reference, &table.reference);
    }

    #[test]
    fn kkt_csv_round_trips(v in prop::array::uniform7(any_float())) {
        let r = KktReport {
            max_penetration: v[0],
            max_complementarity: v[1],
            max_friction_violation: v[2],
            max_stick_slip: v[3],
            foundation_normal: v[4],
            foundation_friction: v[5],
            foundation_stick_slip: v[6],
        };
        let mut buf = Vec::new();
        write_kkt_csv(&mut buf, &r, Some(&r)).unwrap();
        let back = read_kkt_csv(&buf[..]).unwrap();
        for (a, b) in back.values().iter().zip(r.values()) {
            prop_assert!(same(*a, b));
        }
    }
}
