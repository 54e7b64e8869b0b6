//! JSON-lines dataset files: one fragment, trajectory or chain per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::association::Chain;
use crate::error::{Error, Result};
use crate::types::{Direction, Fragment, Point, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRecord {
    pub id: String,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub length: f64,
    pub width: f64,
    pub direction: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_id: Option<String>,
}

impl From<&Fragment> for FragmentRecord {
    fn from(f: &Fragment) -> Self {
        Self {
            id: f.id.clone(),
            t: f.points.iter().map(|p| p.t).collect(),
            x: f.points.iter().map(|p| p.x).collect(),
            y: f.points.iter().map(|p| p.y).collect(),
            length: f.length,
            width: f.width,
            direction: f.direction.as_i8() as i64,
            gt_id: f.gt_id.clone(),
        }
    }
}

impl FragmentRecord {
    pub fn into_fragment(self) -> std::result::Result<Fragment, String> {
        if self.x.len() != self.t.len() || self.y.len() != self.t.len() {
            return Err(format!(
                "fragment {}: array lengths differ (t {}, x {}, y {})",
                self.id,
                self.t.len(),
                self.x.len(),
                self.y.len()
            ));
        }
        let direction = Direction::from_sign(self.direction)
            .ok_or_else(|| format!("fragment {}: direction must be +1 or -1, got {}", self.id, self.direction))?;
        let points = (0..self.t.len()).map(|k| Point::new(self.t[k], self.x[k], self.y[k])).collect();
        let f = Fragment::new(self.id, points, self.length, self.width, direction).map_err(|e| e.to_string())?;
        Ok(match self.gt_id {
            Some(g) => f.with_gt_id(g),
            None => f,
        })
    }
}

/// File form of a reconciled trajectory. `direction` is an addition to
/// the minimal field set so that plots and metrics can orient footprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub fragment_ids: Vec<String>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jx: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jy: Vec<f64>,
    pub length: f64,
    pub width: f64,
    #[serde(default = "forward")]
    pub direction: i64,
}

fn forward() -> i64 {
    1
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            id: t.id.clone(),
            fragment_ids: t.fragment_ids.clone(),
            t: t.t.clone(),
            x: t.x.clone(),
            y: t.y.clone(),
            vx: t.vx.clone(),
            vy: t.vy.clone(),
            ax: t.ax.clone(),
            ay: t.ay.clone(),
            theta: t.theta.clone(),
            jx: t.jx.clone(),
            jy: t.jy.clone(),
            length: t.length,
            width: t.width,
            direction: t.direction.as_i8() as i64,
        }
    }
}

impl TrajectoryRecord {
    /// Rebuilds a trajectory. Missing jerks are recomputed from the
    /// accelerations; outlier estimates are not stored.
    pub fn into_trajectory(self) -> std::result::Result<Trajectory, String> {
        let n = self.t.len();
        let want = |name: &str, len: usize, expect: usize| {
            if len == expect {
                Ok(())
            } else {
                Err(format!("trajectory {}: `{name}` has {len} entries, expected {expect}", self.id))
            }
        };
        want("x", self.x.len(), n)?;
        want("y", self.y.len(), n)?;
        want("theta", self.theta.len(), n.saturating_sub(1))?;
        want("vx", self.vx.len(), n.saturating_sub(1))?;
        want("vy", self.vy.len(), n.saturating_sub(1))?;
        want("ax", self.ax.len(), n.saturating_sub(2))?;
        want("ay", self.ay.len(), n.saturating_sub(2))?;
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format!("trajectory {}: t not strictly increasing", self.id));
        }
        let direction = Direction::from_sign(self.direction)
            .ok_or_else(|| format!("trajectory {}: direction must be +1 or -1, got {}", self.id, self.direction))?;
        let diff = |a: &[f64], t: &[f64]| -> Vec<f64> {
            a.windows(2).zip(t.windows(2)).map(|(a, t)| (a[1] - a[0]) / (t[1] - t[0])).collect()
        };
        let jx = if self.jx.is_empty() { diff(&self.ax, &self.t) } else { self.jx };
        let jy = if self.jy.is_empty() { diff(&self.ay, &self.t) } else { self.jy };
        want("jx", jx.len(), n.saturating_sub(3))?;
        want("jy", jy.len(), n.saturating_sub(3))?;
        Ok(Trajectory {
            id: self.id,
            fragment_ids: self.fragment_ids,
            t: self.t,
            x: self.x,
            y: self.y,
            vx: self.vx,
            vy: self.vy,
            ax: self.ax,
            ay: self.ay,
            jx,
            jy,
            theta: self.theta,
            ex: Vec::new(),
            ey: Vec::new(),
            length: self.length,
            width: self.width,
            direction,
            solved: true,
        })
    }
}

/// One association result: the fragment ids of a trajectory in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub id: String,
    pub fragment_ids: Vec<String>,
    pub cost: f64,
    pub included: bool,
}

impl ChainRecord {
    pub fn from_chain(chain: &Chain) -> Self {
        Self { id: chain.key().to_string(), fragment_ids: chain.members(), cost: chain.cost, included: chain.included }
    }
}

/// Contents of a dataset file, told apart by the presence of
/// `fragment_ids`.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Fragments(Vec<Fragment>),
    Trajectories(Vec<Trajectory>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Fragments(v) => v.len(),
            Dataset::Trajectories(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Nonblank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((k + 1, line));
        }
    }
    Ok(out)
}

fn decode<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_error(path, line, e.to_string()))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    lines(path)?.iter().map(|(k, l)| decode(path, *k, l)).collect()
}

pub fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&r).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_fragments(path: &Path) -> Result<Vec<Fragment>> {
    let mut out = Vec::new();
    for (k, l) in lines(path)? {
        let rec: FragmentRecord = decode(path, k, &l)?;
        out.push(rec.into_fragment().map_err(|m| parse_error(path, k, m))?);
    }
    Ok(out)
}

pub fn write_fragments(path: &Path, fragments: &[Fragment]) -> Result<()> {
    write_records(path, fragments.iter().map(FragmentRecord::from))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (k, l) in lines(path)? {
        let rec: TrajectoryRecord = decode(path, k, &l)?;
        out.push(rec.into_trajectory().map_err(|m| parse_error(path, k, m))?);
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    write_records(path, trajectories.iter().map(TrajectoryRecord::from))
}

pub fn read_chains(path: &Path) -> Result<Vec<ChainRecord>> {
    read_records(path)
}

/// Loads a fragment or trajectory file, deciding the kind from the first
/// record. An empty file is an empty fragment set.
pub fn load_external(path: &Path) -> Result<Dataset> {
    let lines = lines(path)?;
    let Some((k0, first)) = lines.first() else { return Ok(Dataset::Fragments(Vec::new())) };
    let probe: serde_json::Value = decode(path, *k0, first)?;
    if probe.get("fragment_ids").is_some() {
        let mut out = Vec::with_capacity(lines.len());
        for (k, l) in &lines {
            let rec: TrajectoryRecord = decode(path, *k, l)?;
            out.push(rec.into_trajectory().map_err(|m| parse_error(path, *k, m))?);
        }
        Ok(Dataset::Trajectories(out))
    } else {
        let mut out = Vec::with_capacity(lines.len());
        for (k, l) in &lines {
            let rec: FragmentRecord = decode(path, *k, l)?;
            out.push(rec.into_fragment().map_err(|m| parse_error(path, *k, m))?);
        }
        Ok(Dataset::Fragments(out))
    }
}

/// Flat CSV export, one row per sample.
pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "id,t,x,y,vx,vy,ax,ay,theta").map_err(io)?;
    let opt = |v: &[f64], k: usize| v.get(k).map_or(String::new(), |x| x.to_string());
    for tr in trajectories {
        for k in 0..tr.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                tr.id,
                tr.t[k],
                tr.x[k],
                tr.y[k],
                opt(&tr.vx, k),
                opt(&tr.vy, k),
                opt(&tr.ax, k),
                opt(&tr.ay, k),
                opt(&tr.theta, k)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
