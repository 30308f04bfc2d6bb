//! Randomized single-hidden-layer feedforward network.
//!
//! Hidden weights and biases are generated, never trained; the output weights
//! solve a linear least-squares problem through the pseudoinverse of the
//! hidden-layer output matrix. Four generators are provided:
//!
//! - [`Method::Standard`]: weights and biases i.i.d. on `[-u, u]`.
//! - [`Method::RaM`]: weights on `[-u, u]`; each bias places the sigmoid's
//!   inflection point on a randomly chosen training pattern, `b = -aᵀx*`.
//! - [`Method::RAlphaM`]: slope angles drawn on `(0, α_max)` and mapped to
//!   weights `±4 tan α`, biases as in RaM.
//! - [`Method::Ddm`]: weights are four times the slope of a hyperplane fitted
//!   to the targets over the k-neighbourhood of a random training pattern,
//!   biases as in RaM.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::numerics::{default_tolerance, fit_hyperplane, knn, pinv_solve, sigmoid, Matrix};
use crate::seed::rng_for;

/// Largest slope angle actually used; a 90° grid value maps here.
pub const ALPHA_CEILING_DEG: f64 = 89.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "ram")]
    RaM,
    #[serde(rename = "ralpham")]
    RAlphaM,
    #[serde(rename = "ddm")]
    Ddm,
}

impl Method {
    pub const RANDOMIZED: [Method; 3] = [Method::RaM, Method::RAlphaM, Method::Ddm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::RaM => "ram",
            Method::RAlphaM => "ralpham",
            Method::Ddm => "ddm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Method::Standard),
            "ram" => Ok(Method::RaM),
            "ralpham" | "ralpha" => Ok(Method::RAlphaM),
            "ddm" => Ok(Method::Ddm),
            other => param(format!("unknown method `{other}`")),
        }
    }
}

/// The method-specific flexibility parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Smoothing {
    /// Weight bound `u` (Standard, RaM).
    WeightBound(f64),
    /// Upper slope angle in degrees (RαM).
    AlphaMax(f64),
    /// Neighbourhood size (DDM).
    Neighbors(usize),
}

impl Smoothing {
    pub fn for_method(method: Method, value: f64) -> Result<Self> {
        let s = match method {
            Method::Standard | Method::RaM => Smoothing::WeightBound(value),
            Method::RAlphaM => Smoothing::AlphaMax(value),
            Method::Ddm => {
                if value < 1.0 || value.fract() != 0.0 {
                    return param(format!("neighbour count must be a positive integer, got {value}"));
                }
                Smoothing::Neighbors(value as usize)
            }
        };
        Ok(s)
    }

    pub fn value(&self) -> f64 {
        match *self {
            Smoothing::WeightBound(u) => u,
            Smoothing::AlphaMax(a) => a,
            Smoothing::Neighbors(k) => k as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub m: usize,
    pub smoothing: Smoothing,
    pub seed: u64,
}

impl HyperParams {
    pub fn new(m: usize, smoothing: Smoothing, seed: u64) -> Self {
        Self { m, smoothing, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        if self.m == 0 {
            return param("node count must be at least 1");
        }
        match (method, self.smoothing) {
            (Method::Standard | Method::RaM, Smoothing::WeightBound(u)) if u > 0.0 && u.is_finite() => Ok(()),
            (Method::RAlphaM, Smoothing::AlphaMax(a)) if a > 0.0 && a <= 90.0 => Ok(()),
            (Method::Ddm, Smoothing::Neighbors(k)) if k >= 1 => Ok(()),
            (m, s) => param(format!("smoothing {s:?} is invalid for method {m}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub method: Method,
    pub hyper: HyperParams,
    /// One weight vector per node.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Training-pattern index each node's inflection point was placed on.
    pub anchors: Vec<Option<usize>>,
    /// Slope angles in degrees (RαM only), before the random sign.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<Vec<f64>>>,
    /// Output component each DDM hyperplane was fitted to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_components: Option<Vec<usize>>,
}

impl HiddenLayer {
    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let n = self.inputs();
        if self.biases.len() != self.nodes() || self.anchors.len() != self.nodes() {
            return Err(Error::Shape("weights, biases and anchors disagree on node count".into()));
        }
        if self.weights.iter().any(|w| w.len() != n) {
            return Err(Error::Shape("weight vectors differ in length".into()));
        }
        if self.weights.iter().flatten().chain(&self.biases).any(|v| !v.is_finite()) {
            return param("hidden layer has non-finite parameters");
        }
        Ok(())
    }

    /// Activation of every node at one input pattern.
    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!("pattern length {} but layer expects {}", x.len(), self.inputs())));
        }
        Ok(self.weights.iter().zip(&self.biases).map(|(a, b)| sigmoid(dot(a, x) + b)).collect())
    }
}

/// A fitted network: hidden layer plus output weights `beta` (nodes × outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct RandFnnModel {
    pub hidden: HiddenLayer,
    pub beta: Matrix,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inflection_bias(weights: &[f64], anchor: &[f64]) -> f64 {
    -dot(weights, anchor)
}

fn check_patterns<P: AsRef<[f64]>>(xs: &[P]) -> Result<usize> {
    let Some(first) = xs.first() else {
        return param("no training patterns");
    };
    let n = first.as_ref().len();
    if xs.iter().any(|x| x.as_ref().len() != n) {
        return Err(Error::Shape("training patterns differ in length".into()));
    }
    Ok(n)
}

/// Weights and biases i.i.d. uniform on `[-u, u]`.
pub fn gen_standard(m: usize, n: usize, u: f64, seed: u64) -> Result<HiddenLayer> {
    let hyper = HyperParams::new(m, Smoothing::WeightBound(u), seed);
    hyper.validate(Method::Standard)?;
    let mut weights = Vec::with_capacity(m);
    let mut biases = Vec::with_capacity(m);
    for j in 0..m {
        let mut rng = rng_for(seed, &[j as u64]);
        weights.push((0..n).map(|_| rng.random_range(-u..=u)).collect());
        biases.push(rng.random_range(-u..=u));
    }
    Ok(HiddenLayer {
        method: Method::Standard,
        hyper,
        weights,
        biases,
        anchors: vec![None; m],
        angles_deg: None,
        output_components: None,
    })
}

/// Uniform weights on `[-u, u]` with biases placing each inflection point on a
/// training pattern drawn with replacement.
pub fn gen_ram<P: AsRef<[f64]>>(m: usize, u: f64, xs: &[P], seed: u64) -> Result<HiddenLayer> {
    let hyper = HyperParams::new(m, Smoothing::WeightBound(u), seed);
    hyper.validate(Method::RaM)?;
    let n = check_patterns(xs)?;
    let mut layer = HiddenLayer {
        method: Method::RaM,
        hyper,
        weights: Vec::with_capacity(m),
        biases: Vec::with_capacity(m),
        anchors: Vec::with_capacity(m),
        angles_deg: None,
        output_components: None,
    };
    for j in 0..m {
        let mut rng = rng_for(seed, &[j as u64]);
        let anchor = rng.random_range(0..xs.len());
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-u..=u)).collect();
        layer.biases.push(inflection_bias(&a, xs[anchor].as_ref()));
        layer.weights.push(a);
        layer.anchors.push(Some(anchor));
    }
    Ok(layer)
}

/// Slope angles uniform on `(0°, alpha_max)`, weights `s · 4 tan α` with an
/// independent random sign `s`, biases as in [`gen_ram`].
pub fn gen_ralpham<P: AsRef<[f64]>>(m: usize, alpha_max: f64, xs: &[P], seed: u64) -> Result<HiddenLayer> {
    if !(alpha_max > 0.0 && alpha_max < 90.0) {
        return param(format!("alpha_max must lie in (0°, 90°), got {alpha_max}"));
    }
    let hyper = HyperParams::new(m, Smoothing::AlphaMax(alpha_max), seed);
    hyper.validate(Method::RAlphaM)?;
    let n = check_patterns(xs)?;
    let mut layer = HiddenLayer {
        method: Method::RAlphaM,
        hyper,
        weights: Vec::with_capacity(m),
        biases: Vec::with_capacity(m),
        anchors: Vec::with_capacity(m),
        angles_deg: Some(Vec::with_capacity(m)),
        output_components: None,
    };
    for j in 0..m {
        let mut rng = rng_for(seed, &[j as u64]);
        let anchor = rng.random_range(0..xs.len());
        let mut angles = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        for _ in 0..n {
            let alpha = rng.random_range(0.0..alpha_max);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            angles.push(alpha);
            a.push(sign * 4.0 * alpha.to_radians().tan());
        }
        layer.biases.push(inflection_bias(&a, xs[anchor].as_ref()));
        layer.weights.push(a);
        layer.anchors.push(Some(anchor));
        layer.angles_deg.as_mut().unwrap().push(angles);
    }
    Ok(layer)
}

/// Data-driven generator. For every node a random training pattern and its `k`
/// nearest neighbours form a neighbourhood; a hyperplane is fitted over it to
/// one randomly chosen output component and the node weights are four times
/// its slope coefficients.
pub fn gen_ddm<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    m: usize,
    k: usize,
    xs: &[P],
    ys: &[Q],
    seed: u64,
) -> Result<HiddenLayer> {
    let hyper = HyperParams::new(m, Smoothing::Neighbors(k), seed);
    hyper.validate(Method::Ddm)?;
    check_patterns(xs)?;
    let n_out = check_patterns(ys)?;
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", xs.len(), ys.len())));
    }
    let big_n = xs.len();
    if big_n < 2 || k >= big_n {
        return param(format!("neighbour count {k} needs at least {} patterns, have {big_n}", k + 1));
    }
    let mut layer = HiddenLayer {
        method: Method::Ddm,
        hyper,
        weights: Vec::with_capacity(m),
        biases: Vec::with_capacity(m),
        anchors: Vec::with_capacity(m),
        angles_deg: None,
        output_components: Some(Vec::with_capacity(m)),
    };
    for j in 0..m {
        let mut rng = rng_for(seed, &[j as u64]);
        let anchor = rng.random_range(0..big_n);
        let component = rng.random_range(0..n_out);
        let mut hood = vec![anchor];
        hood.extend(knn(xs, xs[anchor].as_ref(), k, Some(anchor))?);
        let inputs: Vec<&[f64]> = hood.iter().map(|&i| xs[i].as_ref()).collect();
        let targets: Vec<f64> = hood.iter().map(|&i| ys[i].as_ref()[component]).collect();
        let (slope, _) = fit_hyperplane(&inputs, &targets)?;
        let a: Vec<f64> = slope.iter().map(|c| 4.0 * c).collect();
        layer.biases.push(inflection_bias(&a, xs[anchor].as_ref()));
        layer.weights.push(a);
        layer.anchors.push(Some(anchor));
        layer.output_components.as_mut().unwrap().push(component);
    }
    Ok(layer)
}

/// Dispatches to the generator for `method`. A 90° angle bound is mapped to
/// [`ALPHA_CEILING_DEG`].
pub fn generate<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    method: Method,
    hyper: &HyperParams,
    xs: &[P],
    ys: &[Q],
) -> Result<HiddenLayer> {
    hyper.validate(method)?;
    let HyperParams { m, seed, .. } = *hyper;
    let mut layer = match (method, hyper.smoothing) {
        (Method::Standard, Smoothing::WeightBound(u)) => gen_standard(m, check_patterns(xs)?, u, seed),
        (Method::RaM, Smoothing::WeightBound(u)) => gen_ram(m, u, xs, seed),
        (Method::RAlphaM, Smoothing::AlphaMax(a)) => gen_ralpham(m, a.min(ALPHA_CEILING_DEG), xs, seed),
        (Method::Ddm, Smoothing::Neighbors(k)) => gen_ddm(m, k, xs, ys, seed),
        _ => unreachable!("validated above"),
    }?;
    layer.hyper = *hyper;
    Ok(layer)
}

/// Hidden-layer output matrix, one row per pattern and one column per node.
pub fn hidden_output<P: AsRef<[f64]>>(layer: &HiddenLayer, xs: &[P]) -> Result<Matrix> {
    let rows = xs.iter().map(|x| layer.activations(x.as_ref())).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, layer.nodes()));
    }
    Matrix::from_rows(&rows)
}

/// Output weights `beta = H⁺ Y`.
pub fn fit<P: AsRef<[f64]>, Q: AsRef<[f64]>>(layer: HiddenLayer, xs: &[P], ys: &[Q]) -> Result<RandFnnModel> {
    layer.validate()?;
    if xs.is_empty() {
        return param("cannot fit on an empty training set");
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", xs.len(), ys.len())));
    }
    let h = hidden_output(&layer, xs)?;
    let y = Matrix::from_rows(ys)?;
    let beta = pinv_solve(&h, &y, default_tolerance(&h))?;
    Ok(RandFnnModel { hidden: layer, beta })
}

/// Generates a layer for `method` and fits its output weights.
pub fn train<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    method: Method,
    hyper: &HyperParams,
    xs: &[P],
    ys: &[Q],
) -> Result<RandFnnModel> {
    fit(generate(method, hyper, xs, ys)?, xs, ys)
}

/// Serialized form of a model.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    method: Method,
    m: usize,
    smoothing: Smoothing,
    seed: u64,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    beta: Vec<Vec<f64>>,
    anchors: Vec<Option<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angles_deg: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_components: Option<Vec<usize>>,
}

impl RandFnnModel {
    pub fn outputs(&self) -> usize {
        self.beta.cols()
    }

    /// Multi-output prediction `h(x) · beta`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden.activations(x)?;
        let beta = self.beta.as_dmatrix();
        Ok((0..beta.ncols()).map(|c| h.iter().enumerate().map(|(r, hr)| hr * beta[(r, c)]).sum()).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let h = &self.hidden;
        let doc = ModelDocument {
            method: h.method,
            m: h.nodes(),
            smoothing: h.hyper.smoothing,
            seed: h.hyper.seed,
            weights: h.weights.clone(),
            biases: h.biases.clone(),
            beta: self.beta.to_rows(),
            anchors: h.anchors.clone(),
            angles_deg: h.angles_deg.clone(),
            output_components: h.output_components.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        let hidden = HiddenLayer {
            method: doc.method,
            hyper: HyperParams::new(doc.m, doc.smoothing, doc.seed),
            weights: doc.weights,
            biases: doc.biases,
            anchors: doc.anchors,
            angles_deg: doc.angles_deg,
            output_components: doc.output_components,
        };
        hidden.validate()?;
        let beta = Matrix::from_rows(&doc.beta)?;
        if hidden.nodes() != doc.m || beta.rows() != doc.m {
            return Err(Error::Shape(format!(
                "model declares m = {} but has {} nodes and {} beta rows",
                doc.m,
                hidden.nodes(),
                beta.rows()
            )));
        }
        Ok(RandFnnModel { hidden, beta })
    }
}
