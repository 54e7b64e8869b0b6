//! Pipeline configuration from a `key = value` file.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::association::DEFAULT_HORIZON;
use crate::cost::CostModelParams;
use crate::error::{Error, Result};
use crate::io::kv::KeyValues;
use crate::rectify::{RectifierConfig, Weights};

/// Default reorder window of the ingest stage, s.
pub const DEFAULT_REORDER_WINDOW: f64 = 5.0;
/// Speed bound used for the partition margin, ft/s.
pub const DEFAULT_V_MAX: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Partition boundaries along x, ascending; `k + 1` values make `k`
    /// partitions. Empty means one partition over everything.
    pub partitions: Vec<f64>,
    /// Chains ending or starting this close to an interior boundary go to
    /// the master pass, ft.
    pub margin: f64,
    pub v_max: f64,
    /// Rectification threads.
    pub workers: usize,
    pub horizon: f64,
    pub reorder_window: f64,
    pub cost: CostModelParams,
    pub rectifier: RectifierConfig,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub chains: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cost = CostModelParams::default();
        Self {
            partitions: Vec::new(),
            margin: cost.max_gap * DEFAULT_V_MAX,
            v_max: DEFAULT_V_MAX,
            workers: 1,
            horizon: DEFAULT_HORIZON,
            reorder_window: DEFAULT_REORDER_WINDOW,
            cost,
            rectifier: RectifierConfig::default(),
            input: None,
            output: None,
            summary: None,
            chains: None,
            csv: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate().map_err(Error::Config)?;
        self.rectifier.validate()?;
        if self.partitions.len() == 1 {
            return Err(Error::Config("partitions needs at least two boundaries".into()));
        }
        if self.partitions.windows(2).any(|w| !(w[1] > w[0])) || self.partitions.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config(format!("partition boundaries must increase: {:?}", self.partitions)));
        }
        let need = self.cost.max_gap * self.v_max;
        if self.partition_count() > 1 && !(self.margin >= need) {
            return Err(Error::Config(format!("margin {} ft is below max_gap * v_max = {need} ft", self.margin)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !(self.reorder_window >= 0.0) {
            return Err(Error::Config("horizon must be positive and reorder_window nonnegative".into()));
        }
        Ok(())
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len().saturating_sub(1).max(1)
    }

    /// Index of the partition holding position `x`; positions beyond the
    /// outer boundaries fall into the first or last partition.
    pub fn partition_of(&self, x: f64) -> usize {
        if self.partitions.len() < 2 {
            return 0;
        }
        let inner = &self.partitions[1..self.partitions.len() - 1];
        inner.partition_point(|&b| b <= x)
    }

    pub fn interior_boundaries(&self) -> &[f64] {
        if self.partitions.len() < 3 {
            &[]
        } else {
            &self.partitions[1..self.partitions.len() - 1]
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        c.cost = cost_from_key_values(kv)?;
        c.rectifier = rectifier_from_key_values(kv)?;
        if let Some(p) = kv.list("partitions")? {
            c.partitions = p;
        }
        c.v_max = kv.get_or("v_max", c.v_max)?;
        c.margin = kv.get_or("margin", c.cost.max_gap * c.v_max)?;
        c.workers = kv.get_or("workers", c.workers)?;
        c.horizon = kv.get_or("horizon", c.horizon)?;
        c.reorder_window = kv.get_or("reorder_window", c.reorder_window)?;
        c.seed = kv.get_or("seed", c.seed)?;
        c.input = kv.raw("input").map(PathBuf::from);
        c.output = kv.raw("output").map(PathBuf::from);
        c.summary = kv.raw("summary").map(PathBuf::from);
        c.chains = kv.raw("chains").map(PathBuf::from);
        c.csv = kv.raw("csv").map(PathBuf::from);
        c.validate()?;
        Ok(c)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::from_key_values(&KeyValues::load(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.input, &mut c.output, &mut c.summary, &mut c.chains, &mut c.csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

/// Cost model keys: `alpha`, `beta`, `p_enter`, `p_exit`, `fp_prob`,
/// `max_gap`, `max_transition_cost`, `nominal_speed`, `lateral = a, b`.
pub fn cost_from_key_values(kv: &KeyValues) -> Result<CostModelParams> {
    let d = CostModelParams::default();
    let lateral = match kv.list("lateral")? {
        None => d.lateral,
        Some(v) if v.len() == 2 => Some((v[0], v[1])),
        Some(v) => return Err(Error::Config(format!("lateral needs two values, got {}", v.len()))),
    };
    let p = CostModelParams {
        alpha: kv.get_or("alpha", d.alpha)?,
        beta: kv.get_or("beta", d.beta)?,
        p_enter: kv.get_or("p_enter", d.p_enter)?,
        p_exit: kv.get_or("p_exit", d.p_exit)?,
        fp_prob: kv.get_or("fp_prob", d.fp_prob)?,
        max_gap: kv.get_or("max_gap", d.max_gap)?,
        max_transition_cost: kv.get("max_transition_cost")?.or(d.max_transition_cost),
        nominal_speed: kv.get_or("nominal_speed", d.nominal_speed)?,
        lateral,
    };
    p.validate().map_err(Error::Config)?;
    Ok(p)
}

/// Rectifier keys: `lambda1..3`, `lateral_lambda1..3`, `a_max`, `j_max`,
/// `dt`, `tolerance`, `max_iterations`.
pub fn rectifier_from_key_values(kv: &KeyValues) -> Result<RectifierConfig> {
    let d = RectifierConfig::default();
    let weights = |prefix: &str, base: Weights| -> Result<Weights> {
        Ok(Weights {
            lambda1: kv.get_or(&format!("{prefix}lambda1"), base.lambda1)?,
            lambda2: kv.get_or(&format!("{prefix}lambda2"), base.lambda2)?,
            lambda3: kv.get_or(&format!("{prefix}lambda3"), base.lambda3)?,
        })
    };
    let w = weights("", d.weights)?;
    let lateral = if kv.keys().any(|k| k.starts_with("lateral_lambda")) { Some(weights("lateral_", w)?) } else { None };
    let c = RectifierConfig {
        weights: w,
        lateral_weights: lateral,
        a_max: kv.get_or("a_max", d.a_max)?,
        j_max: kv.get_or("j_max", d.j_max)?,
        dt: kv.get_or("dt", d.dt)?,
        tolerance: kv.get_or("tolerance", d.tolerance)?,
        max_iterations: kv.get_or("max_iterations", d.max_iterations)?,
    };
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_routes() {
        let kv = KeyValues::parse("partitions = 0, 700, 1400, 2000\nmargin = 2000\nbeta = 50\nlateral = 4, 0.2\nlambda1 = 6\n", "t")
            .unwrap();
        let c = PipelineConfig::from_key_values(&kv).unwrap();
        assert_eq!(c.partition_count(), 3);
        assert_eq!(c.cost.beta, 50.0);
        assert_eq!(c.cost.lateral, Some((4.0, 0.2)));
        assert_eq!(c.rectifier.weights.lambda1, 6.0);
        assert_eq!([c.partition_of(-5.0), c.partition_of(699.0), c.partition_of(700.0), c.partition_of(5000.0)], [0, 0, 1, 2]);
    }

    #[test]
    fn margin_must_cover_max_gap() {
        let kv = KeyValues::parse("partitions = 0, 1000, 2000\nmargin = 10\n", "t").unwrap();
        assert!(PipelineConfig::from_key_values(&kv).unwrap_err().to_string().contains("margin"));
        let kv = KeyValues::parse("partitions = 0, 1000, 500\n", "t").unwrap();
        assert!(PipelineConfig::from_key_values(&kv).is_err());
    }
}
