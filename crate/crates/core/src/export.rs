//! Output artifacts: convergence CSV, legacy VTK meshes, SVG meshes and
//! log-log convergence plots.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::drive::ConvergenceRow;
use crate::error::{Error, Result};
use crate::estimate::IndicatorField;
use crate::mesh::Mesh;
use crate::real::Real;
use crate::space::DiscreteField;

pub const RECORD_HEADER: [&str; 9] = [
    "iter",
    "n_elements",
    "n_dofs",
    "eta_sq",
    "zeta_sq",
    "dwr_est",
    "goal_error",
    "newton_iters",
    "wall_ms",
];

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFile {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(CsvFile { path, writer })
    }

    fn serialize(&mut self, row: impl serde::Serialize) -> Result<()> {
        self.writer.serialize(row).map_err(|e| csv_err(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes `record.csv` and `timing.csv` row by row (flushed after every
/// row so partial runs are inspectable), plus mesh snapshots and a final
/// `plot.svg`.
pub struct RecordWriter {
    dir: PathBuf,
    record: CsvFile,
    timing: CsvFile,
    points: Vec<(f64, f64)>,
}

impl RecordWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(RecordWriter {
            dir: dir.to_path_buf(),
            record: CsvFile::create(dir.join("record.csv"), &RECORD_HEADER)?,
            timing: CsvFile::create(dir.join("timing.csv"), &["iter", "wall_ms"])?,
            points: Vec::new(),
        })
    }

    pub fn write_row(&mut self, row: &ConvergenceRow, wall_ms: f64) -> Result<()> {
        self.record.serialize(row)?;
        self.record.flush()?;
        self.timing.serialize((row.iter, wall_ms))?;
        self.timing.flush()?;
        if let Some(e) = row.goal_error {
            self.points.push((row.n_elements as f64, e));
        }
        Ok(())
    }

    pub fn write_snapshot<T: Real>(
        &mut self,
        iter: usize,
        mesh: &Mesh<T>,
        u: &DiscreteField<T>,
        eta: &IndicatorField<T>,
    ) -> Result<()> {
        let stem = format!("mesh_{iter:03}");
        write_vtk(
            &self.dir.join(format!("{stem}.vtk")),
            mesh,
            Some(("u", u.coefficients())),
            Some(("eta_sq", eta.values())),
        )?;
        write_mesh_svg(&self.dir.join(format!("{stem}.svg")), mesh)
    }

    pub fn finish(mut self) -> Result<()> {
        self.record.flush()?;
        self.timing.flush()?;
        write_convergence_plot(&self.dir.join("plot.svg"), &[("goal error", &self.points)])
    }
}

/// Writes a complete record (header only if empty).
pub fn write_record_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut f = CsvFile::create(path.to_path_buf(), &RECORD_HEADER)?;
    for r in rows {
        f.serialize(r)?;
    }
    f.flush()
}

pub fn read_record_csv(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(Error::InvalidInput(format!(
            "{} does not have the record header",
            path.display()
        )));
    }
    reader.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

/// Generic CSV table writer used for auxiliary outputs.
pub fn write_csv_rows<R: serde::Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut f = CsvFile::create(path.to_path_buf(), header)?;
    for r in rows {
        f.serialize(r)?;
    }
    f.flush()
}

/// Legacy ASCII VTK 3.0 unstructured grid of triangles (cell type 5) with
/// optional point and cell scalars.
pub fn write_vtk<T: Real>(
    path: &Path,
    mesh: &Mesh<T>,
    point_data: Option<(&str, &[T])>,
    cell_data: Option<(&str, &[T])>,
) -> Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "mesh generation {}", mesh.generation());
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", v.x.as_f64(), v.y.as_f64());
    }
    let ne = mesh.n_elements();
    let _ = writeln!(s, "CELLS {} {}", ne, 4 * ne);
    for el in mesh.elements() {
        let [a, b, c] = el.vertices;
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("5\n");
    }
    if let Some((name, values)) = point_data {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "point data `{name}` has {} values",
                values.len()
            )));
        }
        let _ = writeln!(
            s,
            "POINT_DATA {}\nSCALARS {name} double 1\nLOOKUP_TABLE default",
            values.len()
        );
        for v in values {
            let _ = writeln!(s, "{:e}", v.as_f64());
        }
    }
    if let Some((name, values)) = cell_data {
        if values.len() != ne {
            return Err(Error::InvalidInput(format!(
                "cell data `{name}` has {} values",
                values.len()
            )));
        }
        let _ = writeln!(s, "CELL_DATA {ne}\nSCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{:e}", v.as_f64());
        }
    }
    let mut f = create(path)?;
    f.write_all(s.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

const SVG_SIZE: f64 = 1000.0;
const SVG_MARGIN: f64 = 20.0;

fn svg_open(s: &mut String) {
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{0}" height="{0}" viewBox="0 0 {0} {0}">
<rect width="{0}" height="{0}" fill="white"/>"#,
        SVG_SIZE
    );
}

/// SVG 1.1 drawing of the mesh, one `<polygon>` per element, fitted to a
/// 1000x1000 viewport with the y axis pointing up.
pub fn write_mesh_svg<T: Real>(path: &Path, mesh: &Mesh<T>) -> Result<()> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in mesh.vertices() {
        for (k, c) in [v.x.as_f64(), v.y.as_f64()].into_iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (SVG_SIZE - 2.0 * SVG_MARGIN) / extent;
    let mut s = String::new();
    svg_open(&mut s);
    s.push_str("<g fill=\"none\" stroke=\"black\" stroke-width=\"0.5\">\n");
    for el in mesh.elements() {
        s.push_str("<polygon points=\"");
        for (i, &v) in el.vertices.iter().enumerate() {
            let p = &mesh.vertices()[v];
            let x = SVG_MARGIN + (p.x.as_f64() - lo[0]) * scale;
            let y = SVG_SIZE - SVG_MARGIN - (p.y.as_f64() - lo[1]) * scale;
            let _ = write!(s, "{}{x:.3},{y:.3}", if i > 0 { " " } else { "" });
        }
        s.push_str("\"/>\n");
    }
    s.push_str("</g>\n</svg>\n");
    let mut f = create(path)?;
    f.write_all(s.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

const PLOT_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log-log plot of error against element count for each series, with an
/// `n^{-1}` guide line through the first point of the first series.
pub fn write_convergence_plot(path: &Path, series: &[(&str, &[(f64, f64)])]) -> Result<()> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|&(n, e)| n > 0.0 && e > 0.0)
        .map(|(n, e)| (n.log10(), e.log10()))
        .collect();
    let mut s = String::new();
    svg_open(&mut s);
    let plot = (100.0, 50.0, 950.0, 900.0);
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        plot.0,
        plot.1,
        plot.2 - plot.0,
        plot.3 - plot.1
    );
    if !pts.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
        let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
        let map = |x: f64, y: f64| {
            (
                plot.0 + (x - x0) / (x1 - x0) * (plot.2 - plot.0),
                plot.3 - (y - y0) / (y1 - y0) * (plot.3 - plot.1),
            )
        };
        for d in (x0 as i32)..=(x1 as i32) {
            let (px, _) = map(d as f64, y0);
            let _ = writeln!(
                s,
                r#"<text x="{px:.1}" y="{}" font-size="16" text-anchor="middle">1e{d}</text>"#,
                plot.3 + 25.0
            );
        }
        for d in (y0 as i32)..=(y1 as i32) {
            let (_, py) = map(x0, d as f64);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{py:.1}" font-size="16" text-anchor="end">1e{d}</text>"#,
                plot.0 - 8.0
            );
        }
        // n^{-1} guide through the first valid point
        let (gx, gy) = pts[0];
        let (ax, ay) = map(x0, gy + (gx - x0));
        let (bx, by) = map(x1, gy - (x1 - gx));
        let _ = writeln!(
            s,
            r#"<line x1="{ax:.1}" y1="{ay:.1}" x2="{bx:.1}" y2="{by:.1}" stroke="gray" stroke-dasharray="8,6"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="18" fill="gray">n^-1</text>"#,
            plot.2 - 60.0,
            plot.1 + 25.0
        );
        for (k, (label, p)) in series.iter().enumerate() {
            let color = PLOT_COLORS[k % PLOT_COLORS.len()];
            let coords: Vec<String> = p
                .iter()
                .filter(|&&(n, e)| n > 0.0 && e > 0.0)
                .map(|&(n, e)| {
                    let (px, py) = map(n.log10(), e.log10());
                    format!("{px:.1},{py:.1}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="18" fill="{color}">{label}</text>"#,
                plot.0 + 15.0,
                plot.1 + 25.0 + 22.0 * k as f64
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="525" y="960" font-size="18" text-anchor="middle">elements</text>"#
    );
    s.push_str("</svg>\n");
    let mut f = create(path)?;
    f.write_all(s.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}
