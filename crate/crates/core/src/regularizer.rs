//! Regularizers behind a common trait, selectable by name.
//!
//! The learned TDV energy is the production regularizer; the quadratic and
//! norm-based ones serve as analytically tractable oracles for the
//! reconstructor and the eigenfunction search.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::tdv::TdvParams;

pub trait Regularizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn energy(&self, x: &ComplexField) -> Result<f64>;

    fn grad(&self, x: &ComplexField) -> Result<ComplexField>;

    /// Hessian–vector product `∇²R(x) v`.
    fn hvp(&self, x: &ComplexField, v: &ComplexField) -> Result<ComplexField>;

    /// `(∇R(x), ∇²R(x) v)`; override when both come from one pass.
    fn grad_and_hvp(&self, x: &ComplexField, v: &ComplexField) -> Result<(ComplexField, ComplexField)> {
        Ok((self.grad(x)?, self.hvp(x, v)?))
    }
}

impl Regularizer for TdvParams {
    fn name(&self) -> &'static str {
        "tdv"
    }

    fn energy(&self, x: &ComplexField) -> Result<f64> {
        TdvParams::energy(self, x)
    }

    fn grad(&self, x: &ComplexField) -> Result<ComplexField> {
        self.grad_x(x)
    }

    fn hvp(&self, x: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        Ok(self.second_order(x, v)?.hvp)
    }

    fn grad_and_hvp(&self, x: &ComplexField, v: &ComplexField) -> Result<(ComplexField, ComplexField)> {
        let s = self.second_order(x, v)?;
        Ok((s.grad_x, s.hvp))
    }
}

/// `R ≡ 0`
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Regularizer for Zero {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn energy(&self, _x: &ComplexField) -> Result<f64> {
        Ok(0.0)
    }

    fn grad(&self, x: &ComplexField) -> Result<ComplexField> {
        Ok(ComplexField::zeros(x.width(), x.height(), x.coils(), x.domain()))
    }

    fn hvp(&self, _x: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        Ok(ComplexField::zeros(v.width(), v.height(), v.coils(), v.domain()))
    }
}

/// `R(x) = ½‖x‖²`
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquaredNorm;

impl Regularizer for HalfSquaredNorm {
    fn name(&self) -> &'static str {
        "half_squared_norm"
    }

    fn energy(&self, x: &ComplexField) -> Result<f64> {
        Ok(0.5 * x.norm_sqr())
    }

    fn grad(&self, x: &ComplexField) -> Result<ComplexField> {
        Ok(x.clone())
    }

    fn hvp(&self, _x: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        Ok(v.clone())
    }
}

/// `R(x) = ½ rᵀ A r` on the real representation `r = [re₀, im₀, …]` with
/// symmetric `A`.
#[derive(Debug, Clone)]
pub enum Quadratic {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Quadratic {
    pub fn diagonal(d: Vec<f64>) -> Result<Self> {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("diagonal must be finite"));
        }
        Ok(Quadratic::Diagonal(d))
    }

    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape("quadratic form must be square"));
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * a.amax().max(1.0) {
            return Err(Error::invalid("quadratic form must be symmetric"));
        }
        Ok(Quadratic::Dense(a))
    }

    pub fn dim(&self) -> usize {
        match self {
            Quadratic::Diagonal(d) => d.len(),
            Quadratic::Dense(a) => a.nrows(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Quadratic::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Quadratic::Dense(a) => a.clone(),
        }
    }

    fn apply(&self, x: &ComplexField) -> Result<ComplexField> {
        let r = x.to_real_vec();
        if r.len() != self.dim() {
            return Err(Error::shape(format!(
                "quadratic form of dimension {} applied to {} reals",
                self.dim(),
                r.len()
            )));
        }
        let out: Vec<f64> = match self {
            Quadratic::Diagonal(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
            Quadratic::Dense(a) => (a * DVector::from_vec(r)).as_slice().to_vec(),
        };
        ComplexField::from_real_slice(x, &out)
    }
}

impl Regularizer for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn energy(&self, x: &ComplexField) -> Result<f64> {
        Ok(0.5 * x.dot(&self.apply(x)?))
    }

    fn grad(&self, x: &ComplexField) -> Result<ComplexField> {
        self.apply(x)
    }

    fn hvp(&self, _x: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        self.apply(v)
    }
}

pub type Constructor = fn(&Value) -> Result<Box<dyn Regularizer>>;

/// Name → constructor table. Constructors receive the JSON options object
/// of the selecting configuration.
#[derive(Clone)]
pub struct Registry {
    constructors: BTreeMap<&'static str, Constructor>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register("tdv", build_tdv);
        r.register("quadratic", build_quadratic);
        r.register("half_squared_norm", |_| Ok(Box::new(HalfSquaredNorm)));
        r.register("zero", |_| Ok(Box::new(Zero)));
        r
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            constructors: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, constructor: Constructor) {
        self.constructors.insert(name, constructor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.constructors.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.constructors.contains_key(name)
    }

    pub fn build(&self, name: &str, options: &Value) -> Result<Box<dyn Regularizer>> {
        let ctor = self.constructors.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::Config(format!("unknown regularizer '{name}' (known: {})", known.join(", ")))
        })?;
        ctor(options)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TdvOptions {
    path: std::path::PathBuf,
}

fn build_tdv(options: &Value) -> Result<Box<dyn Regularizer>> {
    let o: TdvOptions = serde_json::from_value(options.clone())
        .map_err(|e| Error::Config(format!("tdv options: {e}")))?;
    Ok(Box::new(crate::io::read_params(&o.path)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticOptions {
    #[serde(default)]
    diagonal: Option<Vec<f64>>,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
}

fn build_quadratic(options: &Value) -> Result<Box<dyn Regularizer>> {
    let o: QuadraticOptions = serde_json::from_value(options.clone())
        .map_err(|e| Error::Config(format!("quadratic options: {e}")))?;
    match (o.diagonal, o.matrix) {
        (Some(d), None) => Ok(Box::new(Quadratic::diagonal(d)?)),
        (None, Some(rows)) => {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config("quadratic matrix must be square".into()));
            }
            let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            Ok(Box::new(Quadratic::dense(a)?))
        }
        _ => Err(Error::Config("quadratic needs exactly one of 'diagonal' or 'matrix'".into())),
    }
}
