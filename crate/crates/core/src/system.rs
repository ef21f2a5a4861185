//! The interface every analysis works against: a parameterised autonomous
//! vector field `y' = f(y, p)` with a Jacobian.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::spectral::SpectralError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("delay `{expr}` = {value} is not admissible")]
    Delay { expr: String, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} parameter values, got {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("history: {0}")]
    History(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Parameterised vector field of fixed dimension.
pub trait DynamicalSystem {
    fn dim(&self) -> usize;

    /// Names of the state entries.
    fn labels(&self) -> Vec<String>;

    fn param_names(&self) -> Vec<String>;

    /// Evaluator bound to one parameter vector. Fails when `p` is not
    /// admissible (for delay systems: the delay guard).
    fn evaluator(&self, p: &[f64]) -> Result<Box<dyn Evaluator + '_>, SystemError>;

    fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|n| n == name)
    }
}

/// Right-hand side and Jacobian at fixed parameters. Evaluators carry
/// per-parameter caches and scratch space, hence `&mut self`.
pub trait Evaluator {
    fn params(&self) -> &[f64];

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), SystemError>;

    fn jacobian(&mut self, y: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        central_difference_jacobian(|y, out| self.rhs(y, out), y)
    }
}

/// Step for central differences in entry `x` (balances the O(h^2)
/// truncation against the O(eps/h) rounding error).
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// Full central-difference Jacobian of `f`.
pub fn central_difference_jacobian(
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), SystemError>,
    y: &[f64],
) -> Result<DMatrix<f64>, SystemError> {
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = fd_step(y[j]);
        yp[j] = y[j] + h;
        f(&yp, &mut fp)?;
        yp[j] = y[j] - h;
        f(&yp, &mut fm)?;
        yp[j] = y[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Derivative of the right-hand side with respect to parameter `idx`, by
/// central differences; `None` when the perturbed parameters are not
/// admissible on both sides (a one-sided difference is used if one is).
pub fn param_derivative(
    sys: &dyn DynamicalSystem,
    y: &[f64],
    p: &[f64],
    idx: usize,
) -> Result<Vec<f64>, SystemError> {
    let n = y.len();
    let h = fd_step(p[idx]);
    let eval_at = |v: f64| -> Result<Vec<f64>, SystemError> {
        let mut q = p.to_vec();
        q[idx] = v;
        let mut out = vec![0.0; n];
        sys.evaluator(&q)?.rhs(y, &mut out)?;
        Ok(out)
    };
    let plus = eval_at(p[idx] + h);
    let minus = eval_at(p[idx] - h);
    match (plus, minus) {
        (Ok(a), Ok(b)) => Ok(a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()),
        (Ok(a), Err(_)) => {
            let c = eval_at(p[idx])?;
            Ok(a.iter().zip(&c).map(|(a, c)| (a - c) / h).collect())
        }
        (Err(_), Ok(b)) => {
            let c = eval_at(p[idx])?;
            Ok(c.iter().zip(&b).map(|(c, b)| (c - b) / h).collect())
        }
        (Err(e), Err(_)) => Err(e),
    }
}

type VectorField = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// System given by a closure `f(y, p, out)`; the Jacobian is by central
/// differences unless one is supplied.
pub struct FnSystem {
    labels: Vec<String>,
    params: Vec<String>,
    field: Box<VectorField>,
    jac: Option<Box<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>>,
}

impl FnSystem {
    pub fn new(
        labels: &[&str],
        params: &[&str],
        field: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnSystem {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            params: params.iter().map(|s| s.to_string()).collect(),
            field: Box::new(field),
            jac: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }
}

struct FnEvaluator<'a> {
    sys: &'a FnSystem,
    p: Vec<f64>,
}

impl Evaluator for FnEvaluator<'_> {
    fn params(&self) -> &[f64] {
        &self.p
    }

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        (self.sys.field)(y, &self.p, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SystemError::NonFinite("right-hand side"))
        }
    }

    fn jacobian(&mut self, y: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        match &self.sys.jac {
            Some(j) => Ok(j(y, &self.p)),
            None => {
                let (f, p) = (&self.sys.field, &self.p);
                central_difference_jacobian(
                    |y, out| {
                        f(y, p, out);
                        Ok(())
                    },
                    y,
                )
            }
        }
    }
}

impl DynamicalSystem for FnSystem {
    fn dim(&self) -> usize {
        self.labels.len()
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn param_names(&self) -> Vec<String> {
        self.params.clone()
    }

    fn evaluator(&self, p: &[f64]) -> Result<Box<dyn Evaluator + '_>, SystemError> {
        if p.len() != self.params.len() {
            return Err(SystemError::ParameterCount {
                expected: self.params.len(),
                found: p.len(),
            });
        }
        Ok(Box::new(FnEvaluator {
            sys: self,
            p: p.to_vec(),
        }))
    }
}
