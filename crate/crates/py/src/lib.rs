//! Python bindings: fragments and trajectories as classes, plus the
//! association, rectification, pipeline, benchmark and evaluation entry
//! points.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use trajrecon::association::{associate_online, ncc_batch, Association};
use trajrecon::bench::{generate_ground_truth, perturb, Benchmark};
use trajrecon::cost::CostModelParams;
use trajrecon::eval::{evaluate as eval_tracks, tracks, MatchConfig, Track};
use trajrecon::io::{associate_partitioned, run_fragments, PipelineConfig};
use trajrecon::rectify::{rectify_trajectory, RectifierConfig, Weights};
use trajrecon::types::{Direction, Point};

fn err(e: trajrecon::Error) -> PyErr {
    match e {
        trajrecon::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn direction(sign: i64) -> PyResult<Direction> {
    Direction::from_sign(sign).ok_or_else(|| PyValueError::new_err(format!("direction must be 1 or -1, got {sign}")))
}

#[pyclass(module = "trajrecon", frozen, from_py_object)]
#[derive(Clone)]
pub struct Fragment(trajrecon::types::Fragment);

#[pymethods]
impl Fragment {
    #[new]
    #[pyo3(signature = (id, t, x, y, length = 15.0, width = 6.0, direction = 1, gt_id = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(id: String, t: Vec<f64>, x: Vec<f64>, y: Vec<f64>, length: f64, width: f64, direction: i64, gt_id: Option<String>) -> PyResult<Self> {
        if t.len() != x.len() || t.len() != y.len() {
            return Err(PyValueError::new_err(format!("t, x, y lengths differ: {}, {}, {}", t.len(), x.len(), y.len())));
        }
        let points = t.iter().zip(&x).zip(&y).map(|((&t, &x), &y)| Point::new(t, x, y)).collect();
        let mut f = trajrecon::types::Fragment::new(id, points, length, width, self::direction(direction)?).map_err(err)?;
        f.gt_id = gt_id;
        Ok(Self(f))
    }

    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.t).collect()
    }
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.x).collect()
    }
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.y).collect()
    }
    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }
    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }
    #[getter]
    fn direction(&self) -> i8 {
        self.0.direction.as_i8()
    }
    #[getter]
    fn gt_id(&self) -> Option<&str> {
        self.0.gt_id.as_deref()
    }
    #[getter]
    fn t_start(&self) -> f64 {
        self.0.t_start()
    }
    #[getter]
    fn t_end(&self) -> f64 {
        self.0.t_end()
    }
    fn __len__(&self) -> usize {
        self.0.points.len()
    }
    fn __repr__(&self) -> String {
        format!("Fragment({:?}, {} points, t {:.2}..{:.2})", self.0.id, self.0.points.len(), self.0.t_start(), self.0.t_end())
    }
}

#[pyclass(module = "trajrecon", frozen, from_py_object)]
#[derive(Clone)]
pub struct Trajectory(trajrecon::types::Trajectory);

#[pymethods]
impl Trajectory {
    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }
    #[getter]
    fn fragment_ids(&self) -> Vec<String> {
        self.0.fragment_ids.clone()
    }
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.t.clone()
    }
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.0.x.clone()
    }
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.y.clone()
    }
    #[getter]
    fn vx(&self) -> Vec<f64> {
        self.0.vx.clone()
    }
    #[getter]
    fn vy(&self) -> Vec<f64> {
        self.0.vy.clone()
    }
    #[getter]
    fn ax(&self) -> Vec<f64> {
        self.0.ax.clone()
    }
    #[getter]
    fn ay(&self) -> Vec<f64> {
        self.0.ay.clone()
    }
    #[getter]
    fn jx(&self) -> Vec<f64> {
        self.0.jx.clone()
    }
    #[getter]
    fn jy(&self) -> Vec<f64> {
        self.0.jy.clone()
    }
    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.0.theta.clone()
    }
    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }
    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }
    #[getter]
    fn direction(&self) -> i8 {
        self.0.direction.as_i8()
    }
    #[getter]
    fn solved(&self) -> bool {
        self.0.solved
    }
    fn __len__(&self) -> usize {
        self.0.t.len()
    }
    fn __repr__(&self) -> String {
        format!("Trajectory({:?}, {} fragments, {} samples)", self.0.id, self.0.fragment_ids.len(), self.0.t.len())
    }
}

/// Association cost parameters. Keyword arguments override the defaults.
#[pyclass(module = "trajrecon", name = "CostParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
pub struct CostParams {
    alpha: f64,
    beta: f64,
    p_enter: f64,
    p_exit: f64,
    fp_prob: f64,
    max_gap: f64,
    max_transition_cost: Option<f64>,
    nominal_speed: f64,
    lateral: Option<(f64, f64)>,
}

impl From<CostModelParams> for CostParams {
    fn from(p: CostModelParams) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            p_enter: p.p_enter,
            p_exit: p.p_exit,
            fp_prob: p.fp_prob,
            max_gap: p.max_gap,
            max_transition_cost: p.max_transition_cost,
            nominal_speed: p.nominal_speed,
            lateral: p.lateral,
        }
    }
}

impl CostParams {
    fn to_core(&self) -> PyResult<CostModelParams> {
        let p = CostModelParams {
            alpha: self.alpha,
            beta: self.beta,
            p_enter: self.p_enter,
            p_exit: self.p_exit,
            fp_prob: self.fp_prob,
            max_gap: self.max_gap,
            max_transition_cost: self.max_transition_cost,
            nominal_speed: self.nominal_speed,
            lateral: self.lateral,
        };
        p.validate().map_err(PyValueError::new_err)?;
        Ok(p)
    }
}

#[pymethods]
impl CostParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut p = Self::from(CostModelParams::default());
        if let Some(kw) = kwargs {
            let me = Bound::new(kw.py(), p.clone())?;
            for (k, v) in kw.iter() {
                me.setattr(k.cast::<pyo3::types::PyString>()?, v)?;
            }
            p = me.borrow().clone();
        }
        Ok(p)
    }

    /// Settings tuned on the replica benchmark.
    #[staticmethod]
    fn benchmark() -> Self {
        Benchmark::cost_params().into()
    }

    fn __repr__(&self) -> String {
        format!(
            "CostParams(alpha={}, beta={}, p_enter={}, p_exit={}, fp_prob={}, max_gap={})",
            self.alpha, self.beta, self.p_enter, self.p_exit, self.fp_prob, self.max_gap
        )
    }
}

fn core_params(params: Option<&CostParams>) -> PyResult<CostModelParams> {
    params.map_or_else(|| Ok(CostModelParams::default()), CostParams::to_core)
}

fn unwrap_fragments(fragments: &[Fragment]) -> Vec<trajrecon::types::Fragment> {
    let mut v: Vec<_> = fragments.iter().map(|f| f.0.clone()).collect();
    v.sort_by(|a, b| a.t_end().total_cmp(&b.t_end()).then_with(|| a.id.cmp(&b.id)));
    v
}

fn split(a: &Association) -> (Vec<Vec<String>>, Vec<String>) {
    let mut chains = Vec::new();
    let mut excluded = Vec::new();
    for c in &a.chains {
        if c.included {
            chains.push(c.members());
        } else {
            excluded.extend(c.members());
        }
    }
    (chains, excluded)
}

/// Links fragments into chains. Returns `(chains, excluded, cost)` where
/// each chain is a list of fragment ids. `batch=True` solves the whole set
/// at once; otherwise fragments stream in by last timestamp with the given
/// eviction horizon.
#[pyfunction]
#[pyo3(signature = (fragments, params = None, horizon = f64::INFINITY, batch = false))]
fn associate(py: Python<'_>, fragments: Vec<Fragment>, params: Option<CostParams>, horizon: f64, batch: bool) -> PyResult<(Vec<Vec<String>>, Vec<String>, f64)> {
    let p = core_params(params.as_ref())?;
    let frags = unwrap_fragments(&fragments);
    let a = py
        .detach(|| if batch { ncc_batch(&frags, &p) } else { associate_online(&frags, &p, horizon).map(|(a, _)| a) })
        .map_err(err)?;
    let (chains, excluded) = split(&a);
    Ok((chains, excluded, a.cost))
}

/// Rectifies one chain of fragments into a smooth trajectory.
#[pyfunction]
#[pyo3(signature = (fragments, id = "trj".to_string(), lambda1 = None, lambda2 = None, lambda3 = None))]
fn rectify(py: Python<'_>, fragments: Vec<Fragment>, id: String, lambda1: Option<f64>, lambda2: Option<f64>, lambda3: Option<f64>) -> PyResult<Trajectory> {
    let d = Weights::default();
    let weights = Weights { lambda1: lambda1.unwrap_or(d.lambda1), lambda2: lambda2.unwrap_or(d.lambda2), lambda3: lambda3.unwrap_or(d.lambda3) };
    let cfg = RectifierConfig { weights, ..RectifierConfig::default() };
    let chain: Vec<&trajrecon::types::Fragment> = fragments.iter().map(|f| &f.0).collect();
    py.detach(|| rectify_trajectory(id, &chain, &cfg)).map(Trajectory).map_err(err)
}

fn pipeline_config(params: Option<&CostParams>, partitions: Vec<f64>, workers: usize, horizon: f64, benchmark: bool) -> PyResult<PipelineConfig> {
    let base = if benchmark { Benchmark::pipeline_config() } else { PipelineConfig::default() };
    let cost = match params {
        Some(p) => p.to_core()?,
        None => base.cost,
    };
    let margin = cost.max_gap * trajrecon::io::config::DEFAULT_V_MAX;
    Ok(PipelineConfig { cost, margin, partitions, workers, horizon, ..base })
}

/// Association then rectification over partition boundaries `partitions`
/// (empty for one partition). `benchmark=True` starts from the replica
/// settings.
#[pyfunction]
#[pyo3(signature = (fragments, params = None, partitions = Vec::new(), workers = 1, horizon = trajrecon::association::DEFAULT_HORIZON, benchmark = false))]
fn run(
    py: Python<'_>,
    fragments: Vec<Fragment>,
    params: Option<CostParams>,
    partitions: Vec<f64>,
    workers: usize,
    horizon: f64,
    benchmark: bool,
) -> PyResult<Vec<Trajectory>> {
    let cfg = pipeline_config(params.as_ref(), partitions, workers, horizon, benchmark)?;
    let frags = unwrap_fragments(&fragments);
    let out = py.detach(|| run_fragments(&frags, &cfg)).map_err(err)?;
    Ok(out.trajectories.into_iter().map(Trajectory).collect())
}

/// Chains from the partitioned pipeline without rectification.
#[pyfunction]
#[pyo3(signature = (fragments, params = None, partitions = Vec::new(), horizon = trajrecon::association::DEFAULT_HORIZON, benchmark = false))]
fn associate_pipeline(
    py: Python<'_>,
    fragments: Vec<Fragment>,
    params: Option<CostParams>,
    partitions: Vec<f64>,
    horizon: f64,
    benchmark: bool,
) -> PyResult<(Vec<Vec<String>>, Vec<String>, f64)> {
    let cfg = pipeline_config(params.as_ref(), partitions, 1, horizon, benchmark)?;
    let frags = unwrap_fragments(&fragments);
    let out = py.detach(|| associate_partitioned(&frags, &cfg)).map_err(err)?;
    Ok((out.chains.iter().map(|c| c.members()).collect(), out.excluded, out.cost))
}

/// Ground truth and corrupted fragments of the replica benchmark.
#[pyfunction]
#[pyo3(signature = (seed = 1, duration = None))]
fn replica(py: Python<'_>, seed: u64, duration: Option<f64>) -> PyResult<(Vec<Trajectory>, Vec<Fragment>)> {
    let mut b = Benchmark::replica(seed);
    if let Some(d) = duration {
        b.scenario.duration = d;
    }
    let (gt, raw) = py
        .detach(|| {
            let gt = generate_ground_truth(&b.scenario, seed)?;
            let raw = perturb(&gt, &b.masks, &b.layout, &b.noise)?;
            Ok::<_, trajrecon::Error>((gt, raw))
        })
        .map_err(err)?;
    Ok((gt.into_iter().map(Trajectory).collect(), raw.into_iter().map(Fragment).collect()))
}

fn to_tracks(items: &Bound<'_, PyAny>) -> PyResult<Vec<Track>> {
    let mut out = Vec::new();
    for item in items.try_iter()? {
        let item = item?;
        if let Ok(f) = item.cast::<Fragment>() {
            out.extend(tracks([&f.get().0]));
        } else {
            let t = item.cast::<Trajectory>()?;
            out.extend(tracks([&t.get().0]));
        }
    }
    Ok(out)
}

/// CLEAR-MOT metrics and kinematic statistics of `pred` against `gt`; both
/// are sequences of Fragment or Trajectory. Returns a dict.
#[pyfunction]
#[pyo3(signature = (gt, pred, iou_threshold = None))]
fn evaluate<'py>(py: Python<'py>, gt: &Bound<'py, PyAny>, pred: &Bound<'py, PyAny>, iou_threshold: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let (g, p) = (to_tracks(gt)?, to_tracks(pred)?);
    let mut cfg = MatchConfig::default();
    if let Some(th) = iou_threshold {
        cfg.iou_threshold = th;
    }
    let report = py.detach(|| eval_tracks(&g, &p, &cfg)).map_err(err)?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn read_fragments(path: std::path::PathBuf) -> PyResult<Vec<Fragment>> {
    Ok(trajrecon::io::read_fragments(&path).map_err(err)?.into_iter().map(Fragment).collect())
}

#[pyfunction]
fn write_fragments(path: std::path::PathBuf, fragments: Vec<Fragment>) -> PyResult<()> {
    let v: Vec<_> = fragments.into_iter().map(|f| f.0).collect();
    trajrecon::io::write_fragments(&path, &v).map_err(err)
}

#[pyfunction]
fn read_trajectories(path: std::path::PathBuf) -> PyResult<Vec<Trajectory>> {
    Ok(trajrecon::io::read_trajectories(&path).map_err(err)?.into_iter().map(Trajectory).collect())
}

#[pyfunction]
fn write_trajectories(path: std::path::PathBuf, trajectories: Vec<Trajectory>) -> PyResult<()> {
    let v: Vec<_> = trajectories.into_iter().map(|t| t.0).collect();
    trajrecon::io::write_trajectories(&path, &v).map_err(err)
}

#[pymodule]
#[pyo3(name = "trajrecon")]
fn trajrecon_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Fragment>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<CostParams>()?;
    m.add_function(wrap_pyfunction!(associate, m)?)?;
    m.add_function(wrap_pyfunction!(associate_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(rectify, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replica, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(read_fragments, m)?)?;
    m.add_function(wrap_pyfunction!(write_fragments, m)?)?;
    m.add_function(wrap_pyfunction!(read_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(write_trajectories, m)?)?;
    Ok(())
}
