//! Single runs and convergence sweeps over the analytic test functions.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{FunctionalKind, FunctionalSpec};
use crate::linalg::Point;
use crate::mesh::vtk::VtkWriter;
use crate::mesh::{build_structured_mesh, SimplicialMesh};
use crate::metric::{MetricField, MetricKind};
use crate::quadrature::l2_interp_error;
use crate::quality::{mesh_quality, QualityReport};
use crate::solver::{adapt_with_reference, metric_for, AdaptationConfig, FieldSource, IterationDiagnostics};
use crate::testcase::TestCase;

/// Overrides of solver and functional defaults. `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub tol: Option<f64>,
    pub metric_scale: Option<f64>,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub nu: Option<f64>,
    pub thetas: Option<[f64; 4]>,
}

impl Overrides {
    pub fn config(&self, dim: usize) -> AdaptationConfig {
        let mut c = AdaptationConfig::for_dim(dim);
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.outer {
            c.max_outer_iters = v;
        }
        if let Some(v) = self.inner {
            c.max_inner_steps = v;
        }
        if let Some(v) = self.tol {
            c.displacement_tol = v;
        }
        if let Some(v) = self.metric_scale {
            c.metric_scale = v;
        }
        c
    }

    pub fn functional(&self, kind: FunctionalKind) -> FunctionalSpec {
        let mut s = FunctionalSpec::new(kind);
        if let Some(v) = self.p {
            s.p = v;
        }
        if let Some(v) = self.theta {
            s.theta = v;
        }
        if let Some(v) = self.nu {
            s.nu = v;
        }
        if let Some(v) = self.thetas {
            s.thetas = v;
        }
        s
    }
}

/// Everything needed to reproduce a run or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub example: u8,
    pub functionals: Vec<FunctionalKind>,
    pub metric: MetricKind,
    pub sizes: Vec<usize>,
    /// Also run the unadapted structured mesh at each size.
    pub uniform: bool,
    pub overrides: Overrides,
    pub out_dir: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
    /// Random interior perturbation of the initial mesh, as a fraction of the cell size.
    pub perturb: Option<f64>,
    pub seed: u64,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        TestCase::new(self.example)?;
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("no mesh sizes given".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "sizes {:?} must be strictly increasing",
                self.sizes
            )));
        }
        if self.functionals.is_empty() && !self.uniform {
            return Err(Error::InvalidArgument("nothing to run".into()));
        }
        if let Some(a) = self.perturb {
            if !(0.0..0.25).contains(&a) {
                return Err(Error::InvalidArgument(format!("perturbation {a} must lie in [0, 0.25)")));
            }
        }
        self.overrides.config(2).validate()
    }
}

/// A mesh in either dimension.
#[derive(Debug, Clone)]
pub enum AnyMesh {
    Tri(SimplicialMesh<2>),
    Tet(SimplicialMesh<3>),
}

impl AnyMesh {
    pub fn n_elements(&self) -> usize {
        match self {
            AnyMesh::Tri(m) => m.n_elements(),
            AnyMesh::Tet(m) => m.n_elements(),
        }
    }

    pub fn first_inverted(&self) -> Option<(usize, f64)> {
        match self {
            AnyMesh::Tri(m) => m.first_inverted(),
            AnyMesh::Tet(m) => m.first_inverted(),
        }
    }

    /// Flattened vertex coordinates.
    pub fn coordinates(&self) -> Vec<f64> {
        match self {
            AnyMesh::Tri(m) => m.vertices().iter().flat_map(|p| p.iter().copied()).collect(),
            AnyMesh::Tet(m) => m.vertices().iter().flat_map(|p| p.iter().copied()).collect(),
        }
    }
}

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub functional: String,
    pub metric_kind: MetricKind,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_elements: usize,
    #[serde(rename = "N_v")]
    pub n_vertices: usize,
    pub l2_error: f64,
    pub q_eq: f64,
    pub q_ali: f64,
    pub wall_time_s: f64,
}

pub const REPORT_HEADER: [&str; 9] = ["functional", "metric_kind", "n", "N", "N_v", "l2_error", "q_eq", "q_ali", "wall_time_s"];

impl ReportRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.functional.clone(),
            self.metric_kind.as_str().to_string(),
            self.n.to_string(),
            self.n_elements.to_string(),
            self.n_vertices.to_string(),
            self.l2_error.to_string(),
            self.q_eq.to_string(),
            self.q_ali.to_string(),
            self.wall_time_s.to_string(),
        ]
    }
}

/// Outcome of one adaptation (or uniform baseline).
#[derive(Debug, Clone)]
pub struct RunResult {
    pub row: ReportRow,
    pub report: QualityReport,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub converged: bool,
    pub mesh: AnyMesh,
}

impl RunResult {
    pub fn write_vtk(&self, path: &Path) -> std::io::Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let title = format!("{} {} n={}", self.row.functional, self.row.metric_kind.as_str(), self.row.n);
        match &self.mesh {
            AnyMesh::Tri(m) => write_mesh_vtk(m, &self.report, &title, file),
            AnyMesh::Tet(m) => write_mesh_vtk(m, &self.report, &title, file),
        }
    }
}

fn write_mesh_vtk<const D: usize, W: Write>(
    mesh: &SimplicialMesh<D>,
    report: &QualityReport,
    title: &str,
    w: W,
) -> std::io::Result<()> {
    VtkWriter::new(mesh)
        .title(title)
        .cell_scalar("Q_eq", &report.per_element_eq)
        .cell_scalar("Q_ali", &report.per_element_ali)
        .write(w)
}

/// One run: `functional = None` is the uniform baseline.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub case: TestCase,
    pub functional: Option<FunctionalSpec>,
    pub metric: MetricKind,
    pub n: usize,
    pub config: AdaptationConfig,
    pub perturb: Option<(f64, u64)>,
}

/// Structured mesh with interior vertices moved by up to `amplitude / n`
/// along each axis; boundary vertices slide only along their entity.
pub fn perturbed_mesh<const D: usize>(n: usize, amplitude: f64, seed: u64) -> Result<SimplicialMesh<D>> {
    let mesh = build_structured_mesh::<D>(n)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let h = 1.0 / n as f64;
    let vertices = (0..mesh.n_vertices())
        .map(|i| {
            let fixed = mesh.boundary_class(i).fixed_axes(D);
            let mut p: Point<D> = *mesh.vertex(i);
            for a in 0..D {
                let r: f64 = rng.gen_range(-1.0..=1.0);
                if fixed & (1 << a) == 0 {
                    p[a] += amplitude * h * r;
                }
            }
            p
        })
        .collect();
    let out = mesh.with_vertices(vertices);
    out.check_orientation()?;
    Ok(out)
}

pub fn run(spec: &RunSpec) -> Result<RunResult> {
    match spec.case.dim {
        2 => run_dim::<2>(spec).map(|(r, m)| r.into_result(AnyMesh::Tri(m))),
        3 => run_dim::<3>(spec).map(|(r, m)| r.into_result(AnyMesh::Tet(m))),
        d => Err(Error::InvalidArgument(format!("unsupported dimension {d}"))),
    }
}

struct Partial {
    row: ReportRow,
    report: QualityReport,
    diagnostics: Vec<IterationDiagnostics>,
    converged: bool,
}

impl Partial {
    fn into_result(self, mesh: AnyMesh) -> RunResult {
        RunResult {
            row: self.row,
            report: self.report,
            diagnostics: self.diagnostics,
            converged: self.converged,
            mesh,
        }
    }
}

fn run_dim<const D: usize>(spec: &RunSpec) -> Result<(Partial, SimplicialMesh<D>)> {
    let start = Instant::now();
    let case = spec.case;
    let u = move |p: &Point<D>| case.eval(p.as_slice());
    let source = FieldSource::Analytic(&u);
    let reference = build_structured_mesh::<D>(spec.n)?;
    let initial = match spec.perturb {
        Some((a, seed)) if a > 0.0 => reference.with_vertices(perturbed_mesh::<D>(spec.n, a, seed)?.vertices().to_vec()),
        _ => reference.clone(),
    };

    let (mesh, quality, diagnostics, converged, label) = match &spec.functional {
        Some(fs) => {
            let out = adapt_with_reference(&initial, &reference, &source, fs, spec.metric, &spec.config)?;
            (out.mesh, out.quality, out.diagnostics, out.converged, fs.kind.as_str().to_string())
        }
        None => {
            let metric: MetricField<D> = metric_for(&initial, &source, spec.metric, &spec.config)?;
            let quality = mesh_quality(&initial, &reference, &metric)?;
            (initial, quality, Vec::new(), true, "uniform".to_string())
        }
    };
    let l2 = l2_interp_error(&mesh, u);
    let wall = start.elapsed().as_secs_f64();
    let report = QualityReport::new(&mesh, quality, l2, wall);
    let row = ReportRow {
        functional: label,
        metric_kind: spec.metric,
        n: spec.n,
        n_elements: report.n_elements,
        n_vertices: report.n_vertices,
        l2_error: l2,
        q_eq: report.q_eq,
        q_ali: report.q_ali,
        wall_time_s: wall,
    };
    info!(
        "{} n={} N={}: l2 {:.4e}, Q_eq {:.4}, Q_ali {:.4}, {:.2}s",
        row.functional, row.n, row.n_elements, row.l2_error, row.q_eq, row.q_ali, wall
    );
    Ok((
        Partial {
            row,
            report,
            diagnostics,
            converged,
        },
        mesh,
    ))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// A row of a sweep; failed runs keep their place with an error status.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub functional: String,
    pub n: usize,
    pub result: std::result::Result<RunResult, String>,
}

#[derive(Debug, Clone)]
pub struct StudySummary {
    pub rows: Vec<StudyRow>,
    /// `(functional, slope of l2_error against N)`.
    pub slopes: Vec<(String, Option<f64>)>,
}

impl StudySummary {
    pub fn slope(&self, functional: &str) -> Option<f64> {
        self.slopes.iter().find(|(f, _)| f == functional).and_then(|s| s.1)
    }

    /// Report columns plus `status`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = REPORT_HEADER.to_vec();
        header.push("status");
        out.write_record(&header)?;
        for row in &self.rows {
            match &row.result {
                Ok(r) => {
                    let mut f = r.row.fields();
                    f.push("ok".into());
                    out.write_record(&f)?;
                }
                Err(e) => {
                    let mut f = vec![row.functional.clone(), String::new(), row.n.to_string()];
                    f.extend(std::iter::repeat(String::new()).take(REPORT_HEADER.len() - 3));
                    f.push(format!("failed: {e}"));
                    out.write_record(&f)?;
                }
            }
        }
        out.flush()
    }

    pub fn write_slopes<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["functional", "slope"])?;
        for (f, s) in &self.slopes {
            out.write_record([f.clone(), s.map_or(String::new(), |v| v.to_string())])?;
        }
        out.flush()
    }
}

/// Run every functional (and the uniform baseline if requested) at every size.
pub fn run_study(manifest: &RunManifest) -> Result<StudySummary> {
    manifest.validate()?;
    let case = TestCase::new(manifest.example)?;
    let config = manifest.overrides.config(case.dim);
    let mut labels: Vec<Option<FunctionalKind>> = manifest.functionals.iter().copied().map(Some).collect();
    if manifest.uniform {
        labels.insert(0, None);
    }

    let mut rows = Vec::new();
    for kind in &labels {
        for &n in &manifest.sizes {
            let spec = RunSpec {
                case,
                functional: kind.map(|k| manifest.overrides.functional(k)),
                metric: manifest.metric,
                n,
                config,
                perturb: manifest.perturb.map(|a| (a, manifest.seed)),
            };
            let label = kind.map_or("uniform", FunctionalKind::as_str).to_string();
            let result = run(&spec).map_err(|e| {
                warn!("{label} n={n} failed: {e}");
                e.to_string()
            });
            rows.push(StudyRow {
                functional: label,
                n,
                result,
            });
        }
    }

    let slopes = labels
        .iter()
        .map(|kind| {
            let label = kind.map_or("uniform", FunctionalKind::as_str).to_string();
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.functional == label)
                .filter_map(|r| r.result.as_ref().ok())
                .map(|r| (r.row.n_elements as f64, r.row.l2_error))
                .unzip();
            (label, log_log_slope(&x, &y))
        })
        .collect();
    Ok(StudySummary { rows, slopes })
}

/// Write the single-run report CSV.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in rows {
        out.write_record(r.fields())?;
    }
    out.flush()
}
