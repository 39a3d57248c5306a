//! Composite variational inequality instances and their serialized form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::OperatorOracle;
use crate::set::{FeasibleSet, SetKind};
use crate::space::{EuclideanSpace, Metric};

/// Find `x⋆ ∈ Q` with `⟨V(x⋆), x − x⋆⟩ ≥ 0` for all `x ∈ Q`.
#[derive(Debug, Clone)]
pub struct CompositeVI {
    pub space: EuclideanSpace,
    pub set: FeasibleSet,
    pub oracle: Arc<dyn OperatorOracle>,
}

impl CompositeVI {
    pub fn new(space: EuclideanSpace, set: FeasibleSet, oracle: Arc<dyn OperatorOracle>) -> Result<Self> {
        check_dim(space.dim(), set.dim())?;
        check_dim(space.dim(), oracle.dim())?;
        Ok(Self { space, set, oracle })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn diameter(&self) -> Option<f64> {
        self.set.diameter(&self.space)
    }
}

/// `T^p_x(y) = Σ_{k=0}^{p} (1/k!) D^kV(x)[y − x]^k` for `p ≤ 2`.
pub fn taylor_model(oracle: &dyn OperatorOracle, x: &DVector<f64>, y: &DVector<f64>, p: usize) -> Result<DVector<f64>> {
    check_dim(oracle.dim(), x.len())?;
    check_dim(oracle.dim(), y.len())?;
    if p > oracle.max_order() {
        return Err(Error::OrderTooHigh { requested: p, max: oracle.max_order() });
    }
    if p > 2 {
        return Err(Error::Unsupported(format!("Taylor models of order {p}")));
    }
    let d = y - x;
    let mut out = oracle.eval(x);
    if p >= 1 {
        out += oracle.jvp(x, &d);
    }
    if p >= 2 {
        let second = oracle.d2vp(x, &d, &d).ok_or(Error::OrderTooHigh { requested: 2, max: 1 })?;
        out += second * 0.5;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricDoc {
    /// The literal string `"identity"`.
    Named(String),
    Diagonal { diag: Vec<f64> },
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDoc {
    pub n: usize,
    #[serde(rename = "B")]
    pub metric: MetricDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDoc {
    pub builtin: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// JSON form of a problem: `{space, set, oracle}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub space: SpaceDoc,
    pub set: SetDoc,
    pub oracle: OracleDoc,
}

impl SpaceDoc {
    pub fn from_space(space: &EuclideanSpace) -> Self {
        let metric = match space.metric() {
            Metric::Identity => MetricDoc::Named("identity".into()),
            Metric::Diagonal(w) => MetricDoc::Diagonal { diag: w.iter().copied().collect() },
            Metric::Dense { matrix, .. } => MetricDoc::Dense(
                (0..matrix.nrows()).map(|i| matrix.row(i).iter().copied().collect()).collect(),
            ),
        };
        Self { n: space.dim(), metric }
    }

    pub fn build(&self) -> Result<EuclideanSpace> {
        let space = match &self.metric {
            MetricDoc::Named(name) if name == "identity" => EuclideanSpace::identity(self.n)?,
            MetricDoc::Named(name) => {
                return Err(Error::InvalidParameter(format!("unknown metric name {name:?}")))
            }
            MetricDoc::Diagonal { diag } => EuclideanSpace::diagonal(DVector::from_column_slice(diag))?,
            MetricDoc::Dense(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidParameter("dense metric must be square".into()));
                }
                EuclideanSpace::dense(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?
            }
        };
        check_dim(self.n, space.dim())?;
        Ok(space)
    }
}

fn get_f64(params: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<f64> {
    params.get(key).and_then(|v| v.as_f64())
}

fn get_vec(params: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<Vec<f64>> {
    params
        .get(key)
        .and_then(|v| v.as_array())
        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
}

impl SetDoc {
    pub fn from_set(set: &FeasibleSet, space: &EuclideanSpace) -> Self {
        let mut params = serde_json::Map::new();
        let kind = match set.kind() {
            SetKind::WholeSpace { radius, .. } => {
                if let Some(r) = radius {
                    params.insert("R".into(), (*r).into());
                }
                "whole"
            }
            SetKind::Box { lower, upper } => {
                params.insert("lower".into(), lower.iter().copied().collect::<Vec<_>>().into());
                params.insert("upper".into(), upper.iter().copied().collect::<Vec<_>>().into());
                "box"
            }
            SetKind::Ball { center, radius } => {
                params.insert("center".into(), center.iter().copied().collect::<Vec<_>>().into());
                params.insert("R".into(), (*radius).into());
                "ball"
            }
            SetKind::Simplex { .. } => "simplex",
            SetKind::Product(blocks) => {
                let mut start = 0;
                let docs: Vec<serde_json::Value> = blocks
                    .iter()
                    .map(|b| {
                        let sub = space.block(start, b.dim()).unwrap_or_else(|_| space.clone());
                        start += b.dim();
                        serde_json::to_value(SetDoc::from_set(b, &sub)).unwrap_or_default()
                    })
                    .collect();
                params.insert("blocks".into(), docs.into());
                "product"
            }
        };
        Self { kind: kind.into(), n: Some(set.dim()), params, diameter: set.diameter(space) }
    }

    /// Builds the set for dimension `n`. Balls accept `R` (radius) or `D`
    /// (diameter); `D` on the document itself also sets the ball diameter.
    pub fn build(&self, n: usize) -> Result<FeasibleSet> {
        let p = &self.params;
        match self.kind.as_str() {
            "whole" | "whole_space" => {
                let radius = get_f64(p, "R").or_else(|| get_f64(p, "D").or(self.diameter).map(|d| d / 2.0));
                FeasibleSet::whole_space(n, radius)
            }
            "box" => {
                let lower = get_vec(p, "lower")
                    .map(DVector::from_vec)
                    .or_else(|| get_f64(p, "lo").map(|v| DVector::from_element(n, v)))
                    .unwrap_or_else(|| DVector::from_element(n, -1.0));
                let upper = get_vec(p, "upper")
                    .map(DVector::from_vec)
                    .or_else(|| get_f64(p, "hi").map(|v| DVector::from_element(n, v)))
                    .unwrap_or_else(|| DVector::from_element(n, 1.0));
                check_dim(n, lower.len())?;
                FeasibleSet::boxed(lower, upper)
            }
            "ball" => {
                let radius = get_f64(p, "R")
                    .or_else(|| get_f64(p, "D").or(self.diameter).map(|d| d / 2.0))
                    .unwrap_or(1.0);
                let center = get_vec(p, "center").map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(n));
                check_dim(n, center.len())?;
                FeasibleSet::ball(center, radius)
            }
            "simplex" => FeasibleSet::simplex(n),
            "product" => {
                let blocks = p
                    .get("blocks")
                    .and_then(|b| b.as_array())
                    .ok_or_else(|| Error::InvalidParameter("product set needs a blocks array".into()))?;
                let mut sets = Vec::new();
                let mut total = 0;
                for b in blocks {
                    let doc: SetDoc = serde_json::from_value(b.clone())
                        .map_err(|e| Error::InvalidParameter(format!("product block: {e}")))?;
                    let dim = doc
                        .n
                        .or_else(|| get_vec(&doc.params, "center").map(|c| c.len()))
                        .or_else(|| get_vec(&doc.params, "lower").map(|c| c.len()))
                        .ok_or_else(|| Error::InvalidParameter("product block needs n".into()))?;
                    total += dim;
                    sets.push(doc.build(dim)?);
                }
                check_dim(n, total)?;
                FeasibleSet::product(sets)
            }
            other => Err(Error::InvalidParameter(format!("unknown set kind {other:?}"))),
        }
    }
}
