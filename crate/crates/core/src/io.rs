//! Artifact formats. Floats are written with 17 significant digits so that
//! every value reads back bit-exactly; infinities are the strings `"+inf"`
//! and `"-inf"`.

use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::cost::ExtendedCost;
use crate::error::{Error, Result};
use crate::kantorovich::{PivotStats, SolveResult};
use crate::measures::{Coupling, DiscreteMeasure, Instance, PlanEntry, Profile};
use crate::potentials::{ExtReal, PotentialPair};
use crate::spacetime::Event;
use crate::transport::TransportMap;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn serialize_f64<S: Serializer>(v: f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        let raw = RawValue::from_string(fmt17(v)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if v > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

fn deserialize_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match NumOrStr::deserialize(d)? {
        NumOrStr::Num(v) => Ok(v),
        NumOrStr::Str(s) => match s.as_str() {
            "+inf" | "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(de::Error::custom(format!("not a float: {other:?}"))),
        },
    }
}

/// A float that serializes with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_f64(self.0, s)
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        deserialize_f64(d).map(F17)
    }
}

/// `#[serde(with = "f17")]` for `f64` fields.
pub mod f17 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_f64(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        deserialize_f64(d)
    }
}

/// `#[serde(with = "f17_opt")]` for `Option<f64>` fields.
pub mod f17_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.map(F17).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        Ok(Option::<F17>::deserialize(d)?.map(|v| v.0))
    }
}

/// `#[serde(with = "f17_vec")]` for `Vec<f64>` fields.
pub mod f17_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| F17(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Ok(Vec::<F17>::deserialize(d)?
            .into_iter()
            .map(|v| v.0)
            .collect())
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasureFile {
    points: Vec<Vec<F17>>,
    #[serde(with = "f17_vec")]
    weights: Vec<f64>,
}

impl MeasureFile {
    fn from_measure(m: &DiscreteMeasure) -> Self {
        MeasureFile {
            points: m
                .points()
                .iter()
                .map(|p| p.coords().iter().map(|&c| F17(c)).collect())
                .collect(),
            weights: m.weights().to_vec(),
        }
    }

    fn to_measure(&self) -> Result<DiscreteMeasure> {
        let points = self
            .points
            .iter()
            .map(|p| Event::new(p.iter().map(|c| c.0).collect()))
            .collect::<Result<_>>()?;
        DiscreteMeasure::new(points, self.weights.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InstanceFile {
    /// Spatial dimension `n` of `R^{1+n}`.
    dimension: usize,
    tau: String,
    seed: u64,
    profile: Profile,
    mu: MeasureFile,
    nu: MeasureFile,
}

pub const TAU_LABEL: &str = "2t";

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    to_json(&InstanceFile {
        dimension: inst.spatial_dim,
        tau: TAU_LABEL.into(),
        seed: inst.seed,
        profile: inst.profile,
        mu: MeasureFile::from_measure(&inst.mu),
        nu: MeasureFile::from_measure(&inst.nu),
    })
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    let f: InstanceFile = serde_json::from_str(text)?;
    if f.tau != TAU_LABEL {
        return Err(Error::Parse(format!(
            "unsupported time function {:?}",
            f.tau
        )));
    }
    let mu = f.mu.to_measure()?;
    let nu = f.nu.to_measure()?;
    for m in [&mu, &nu] {
        if m.dim() != f.dimension + 1 {
            return Err(Error::DimensionMismatch {
                expected: f.dimension + 1,
                got: m.dim(),
            });
        }
    }
    Ok(Instance {
        spatial_dim: f.dimension,
        seed: f.seed,
        profile: f.profile,
        mu,
        nu,
    })
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    write_text(path, &instance_to_json(inst)?)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlanEntryFile {
    i: usize,
    j: usize,
    #[serde(with = "f17")]
    mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StatsFile {
    phase1_pivots: usize,
    phase2_pivots: usize,
    degenerate_pivots: usize,
}

/// On-disk form of a solve result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "f17")]
    pub total_cost: f64,
    entries: Vec<PlanEntryFile>,
    #[serde(with = "f17_vec")]
    pub source_duals: Vec<f64>,
    #[serde(with = "f17_vec")]
    pub target_duals: Vec<f64>,
    stats: StatsFile,
}

impl PlanFile {
    pub fn from_result(r: &SolveResult) -> Self {
        PlanFile {
            rows: r.coupling.source.len(),
            cols: r.coupling.target.len(),
            total_cost: r.total_cost.to_f64(),
            entries: r
                .coupling
                .plan()
                .iter()
                .map(|e| PlanEntryFile {
                    i: e.i,
                    j: e.j,
                    mass: e.mass,
                })
                .collect(),
            source_duals: r.source_duals.clone(),
            target_duals: r.target_duals.clone(),
            stats: StatsFile {
                phase1_pivots: r.stats.phase1_pivots,
                phase2_pivots: r.stats.phase2_pivots,
                degenerate_pivots: r.stats.degenerate_pivots,
            },
        }
    }

    pub fn entries(&self) -> Vec<PlanEntry> {
        self.entries
            .iter()
            .map(|e| PlanEntry {
                i: e.i,
                j: e.j,
                mass: e.mass,
            })
            .collect()
    }

    /// Rebuilds the solve result against the instance measures; the
    /// coupling constructor re-validates both marginals.
    pub fn to_result(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<SolveResult> {
        if self.rows != mu.len() || self.cols != nu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len() * nu.len(),
                got: self.rows * self.cols,
            });
        }
        let coupling = Coupling::new(mu.clone(), nu.clone(), self.entries())?;
        Ok(SolveResult {
            coupling,
            total_cost: if self.total_cost.is_finite() {
                ExtendedCost::Finite(self.total_cost)
            } else {
                ExtendedCost::PlusInfinity
            },
            source_duals: self.source_duals.clone(),
            target_duals: self.target_duals.clone(),
            stats: PivotStats {
                phase1_pivots: self.stats.phase1_pivots,
                phase2_pivots: self.stats.phase2_pivots,
                degenerate_pivots: self.stats.degenerate_pivots,
            },
        })
    }
}

pub fn read_plan(path: &Path) -> Result<PlanFile> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

/// `side,index,value` rows, `phi` first.
pub fn potentials_csv(pp: &PotentialPair) -> String {
    let mut out = String::from("side,index,value\n");
    for (i, v) in pp.phi.iter().enumerate() {
        out.push_str(&format!("phi,{i},{}\n", v.to_csv_field()));
    }
    for (j, v) in pp.psi.iter().enumerate() {
        out.push_str(&format!("psi,{j},{}\n", v.to_csv_field()));
    }
    out
}

/// Parses [`potentials_csv`] output into `(phi, psi)`.
pub fn parse_potentials_csv(text: &str) -> Result<(Vec<ExtReal>, Vec<ExtReal>)> {
    let mut phi = Vec::new();
    let mut psi = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("potentials line {}: {line:?}", n + 1)));
        }
        let index: usize = fields[1]
            .parse()
            .map_err(|e| Error::Parse(format!("potentials line {}: {e}", n + 1)))?;
        let value = ExtReal::parse_csv_field(fields[2])?;
        let side = match fields[0] {
            "phi" => &mut phi,
            "psi" => &mut psi,
            other => return Err(Error::Parse(format!("unknown side {other:?}"))),
        };
        if index != side.len() {
            return Err(Error::Parse(format!(
                "potentials line {}: index out of order",
                n + 1
            )));
        }
        side.push(value);
    }
    Ok((phi, psi))
}

/// `source_index,target_index,residual,distance,status`.
pub fn map_csv(tm: &TransportMap) -> String {
    let mut out = String::from("source_index,target_index,residual,distance,status\n");
    for e in &tm.entries {
        let residual = if e.residual.is_finite() {
            fmt17(e.residual)
        } else {
            "+inf".into()
        };
        let status = serde_json::to_value(e.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.source_index,
            e.target_index,
            residual,
            fmt17(e.distance),
            status
        ));
    }
    out
}
