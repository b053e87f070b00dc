//! File emission: legacy VTK for fields, CSV for reports and tables.
//!
//! Floats are written with `{:e}`, which is the shortest representation that
//! parses back to the same bits.

use std::io::{Read, Write};

use thiserror::Error;

use crate::constitutive::Sym2;
use crate::mesh::Mesh;
use crate::solver::SolverReport;
use crate::verification::convergence::{ConvergenceRow, ConvergenceTable};
use crate::verification::kkt::KktReport;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("field size mismatch: {0}")]
    Size(String),
    #[error("malformed table: {0}")]
    Parse(String),
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Legacy ASCII unstructured grid with optional nodal displacement and
/// per-cell stress `(xx, yy, xy)`. The layer index is always written as cell data.
pub fn write_vtk<W: Write>(
    mut w: W,
    mesh: &Mesh,
    displacement: Option<&[f64]>,
    stress: Option<&[Sym2]>,
) -> Result<(), OutputError> {
    let n = mesh.n_nodes();
    let m = mesh.triangles.len();
    if let Some(u) = displacement {
        if u.len() != 2 * n {
            return Err(OutputError::Size(format!(
                "displacement has {} entries, mesh needs {}",
                u.len(),
                2 * n
            )));
        }
    }
    if let Some(s) = stress {
        if s.len() != m {
            return Err(OutputError::Size(format!("stress has {} cells, mesh has {m}", s.len())));
        }
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "layered elastic stack")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", num(p[0]), num(p[1]))?;
    }
    writeln!(w, "CELLS {m} {}", 4 * m)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t.nodes[0], t.nodes[1], t.nodes[2])?;
    }
    writeln!(w, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(w, "5")?;
    }
    if let Some(u) = displacement {
        writeln!(w, "POINT_DATA {n}")?;
        writeln!(w, "VECTORS displacement double")?;
        for k in 0..n {
            writeln!(w, "{} {} 0", num(u[2 * k]), num(u[2 * k + 1]))?;
        }
    }
    writeln!(w, "CELL_DATA {m}")?;
    writeln!(w, "SCALARS layer int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for t in &mesh.triangles {
        writeln!(w, "{}", t.layer + 1)?;
    }
    if let Some(s) = stress {
        writeln!(w, "SCALARS stress double 3")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for c in s {
            writeln!(w, "{} {} {}", num(c.xx), num(c.yy), num(c.xy))?;
        }
    }
    Ok(())
}

const CONVERGENCE_HEADER: [&str; 13] = [
    "level",
    "h",
    "dofs",
    "error",
    "ratio",
    "local_slope",
    "interp_error",
    "residual",
    "outer_iters",
    "bound_constant",
    "fitted_slope",
    "stiffness",
    "reference",
];

pub fn write_convergence_csv<W: Write>(w: W, table: &ConvergenceTable) -> Result<(), OutputError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(CONVERGENCE_HEADER)?;
    let consts = table.bound_constants();
    for (l, (r, c)) in table.rows.iter().zip(consts).enumerate() {
        out.write_record([
            (l + 1).to_string(),
            num(r.h),
            r.dofs.to_string(),
            num(r.error),
            num(r.ratio),
            num(r.local_slope),
            num(r.interp_error),
            num(r.residual),
            r.outer_iters.to_string(),
            num(c),
            num(table.fitted_slope),
            num(table.stiffness),
            table.reference.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, OutputError> {
    rec.get(i)
        .ok_or_else(|| OutputError::Parse(format!("missing column {i}")))?
        .parse()
        .map_err(|_| OutputError::Parse(format!("bad value in column {i}: {:?}", rec.get(i))))
}

/// Inverse of [`write_convergence_csv`] for tables with at least one row.
pub fn read_convergence_csv<R: Read>(r: R) -> Result<ConvergenceTable, OutputError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CONVERGENCE_HEADER {
        return Err(OutputError::Parse(format!("unexpected header {header:?}")));
    }
    let mut table = ConvergenceTable {
        rows: Vec::new(),
        fitted_slope: f64::NAN,
        reference: String::new(),
        stiffness: f64::NAN,
    };
    for rec in rdr.records() {
        let rec = rec?;
        table.rows.push(ConvergenceRow {
            h: field(&rec, 1)?,
            dofs: field(&rec, 2)?,
            error: field(&rec, 3)?,
            ratio: field(&rec, 4)?,
            local_slope: field(&rec, 5)?,
            interp_error: field(&rec, 6)?,
            residual: field(&rec, 7)?,
            outer_iters: field(&rec, 8)?,
        });
        table.fitted_slope = field(&rec, 10)?;
        table.stiffness = field(&rec, 11)?;
        table.reference = field(&rec, 12)?;
    }
    if table.rows.is_empty() {
        return Err(OutputError::Parse("table has no rows".into()));
    }
    Ok(table)
}

/// Whitespace-separated columns for plotting `error` against `h` on log axes.
pub fn write_convergence_dat<W: Write>(mut w: W, table: &ConvergenceTable) -> Result<(), OutputError> {
    writeln!(w, "# fitted slope {}", num(table.fitted_slope))?;
    writeln!(w, "# reference: {}", table.reference)?;
    writeln!(w, "# h error interp_error sqrt_residual_scaled dofs")?;
    for r in &table.rows {
        writeln!(
            w,
            "{} {} {} {} {}",
            num(r.h),
            num(r.error),
            num(r.interp_error),
            num((r.residual.abs() / table.stiffness).sqrt()),
            r.dofs
        )?;
    }
    Ok(())
}

/// One row per entry: `entry,value[,threshold,pass]`.
pub fn write_kkt_csv<W: Write>(w: W, report: &KktReport, limit: Option<&KktReport>) -> Result<(), OutputError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    match limit {
        Some(_) => out.write_record(["entry", "value", "threshold", "pass"])?,
        None => out.write_record(["entry", "value"])?,
    }
    let values = report.values();
    for (k, name) in KktReport::FIELDS.iter().enumerate() {
        match limit {
            Some(l) => {
                let t = l.values()[k];
                out.write_record([name.to_string(), num(values[k]), num(t), (values[k] <= t).to_string()])?
            }
            None => out.write_record([name.to_string(), num(values[k])])?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_kkt_csv<R: Read>(r: R) -> Result<KktReport, OutputError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut v = [None; 7];
    for rec in rdr.records() {
        let rec = rec?;
        let name: String = field(&rec, 0)?;
        let k = KktReport::FIELDS
            .iter()
            .position(|f| *f == name)
            .ok_or_else(|| OutputError::Parse(format!("unknown entry {name}")))?;
        v[k] = Some(field(&rec, 1)?);
    }
    let Some(v) = v.into_iter().collect::<Option<Vec<f64>>>() else {
        return Err(OutputError::Parse("missing KKT entries".into()));
    };
    Ok(KktReport {
        max_penetration: v[0],
        max_complementarity: v[1],
        max_friction_violation: v[2],
        max_stick_slip: v[3],
        foundation_normal: v[4],
        foundation_friction: v[5],
        foundation_stick_slip: v[6],
    })
}

/// Per-iteration history of the outer loop.
pub fn write_solver_csv<W: Write>(w: W, report: &SolverReport) -> Result<(), OutputError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record([
        "iter",
        "increment",
        "relative_increment",
        "contraction_ratio",
        "inner_iterations",
    ])?;
    for k in 0..report.increments.len() {
        // ratios start at the second increment
        let ratio = if k == 0 {
            f64::NAN
        } else {
            report.contraction_ratios.get(k - 1).copied().unwrap_or(f64::NAN)
        };
        out.write_record([
            (k + 1).to_string(),
            num(report.increments[k]),
            num(report.relative_increments.get(k).copied().unwrap_or(f64::NAN)),
            num(ratio),
            report.inner_iterations.get(k).map(usize::to_string).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Human-readable summary of a solve.
pub fn write_solver_log<W: Write>(
    mut w: W,
    report: &SolverReport,
    contraction: Option<f64>,
) -> Result<(), OutputError> {
    let status = if report.converged {
        "converged"
    } else if report.diverged {
        "diverged"
    } else {
        "not converged"
    };
    writeln!(w, "status: {status}")?;
    writeln!(w, "outer iterations: {}", report.outer_iters)?;
    writeln!(w, "inner iterations: {}", report.inner_iterations.iter().sum::<usize>())?;
    if let Some(inc) = report.relative_increments.last() {
        writeln!(w, "last relative increment: {}", num(*inc))?;
    }
    match contraction {
        Some(r) => writeln!(w, "tail contraction ratio: {}", num(r))?,
        None => writeln!(w, "tail contraction ratio: n/a")?,
    }
    writeln!(w, "wall time: {:.3} s", report.wall_time.as_secs_f64())?;
    Ok(())
}
