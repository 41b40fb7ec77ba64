//! Coefficient catalog and basis families.
//!
//! Catalog models all start from a Gaussian initial law, which has finite
//! moments of every order. Drifts and squared diffusions are Lipschitz with
//! linear growth in the state, except `mean-vol`, whose `mean(μ)²` factor is
//! only locally Lipschitz in the measure (fine on bounded-moment sets).
//! These growth conditions are documented, not checked at runtime.
//!
//! User-defined dynamics plug in through [`McKeanVlasovModel`] and
//! [`BasisAtom`]; configuration files can only name catalog entries.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::scalar::Scalar;

/// Gaussian initial law `N(mean, sd²)`; `sd == 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw<T> {
    pub mean: T,
    pub sd: T,
}

/// Drift `b(x, μ)` and squared diffusion `a²(x, μ)` of a one-dimensional
/// McKean–Vlasov equation, together with its initial law.
///
/// Implementations must be deterministic functions of `x` and the sorted
/// atoms of `μ`.
pub trait McKeanVlasovModel<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn drift(&self, x: T, mu: &EmpiricalMeasure<T>) -> T;

    /// Must be nonnegative; the simulator reports a
    /// [`Error::CoefficientEvaluation`] otherwise.
    fn diffusion_sq(&self, x: T, mu: &EmpiricalMeasure<T>) -> T;

    fn initial_law(&self) -> GaussianLaw<T>;

    /// Parameters recorded in grid metadata.
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

/// Model name and parameters as they appear in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new<I, K>(name: &str, params: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        Self {
            name: name.to_string(),
            params: params.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<CoefficientModel<T>> {
        build_model(&self.name, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dynamics<T> {
    /// b = −θ(x − κ·mean μ), a² = σ²
    MvOu { theta: T, kappa: T, sigma: T },
    /// b = −θx, a² = λ1 + λ2 x²
    StateVol { theta: T, lambda1: T, lambda2: T },
    /// b = −θ(x − mean μ), a² = σ²(1 + c·mean(μ)²)
    MeanVol { theta: T, sigma: T, c: T },
    /// b = −θx, a² = η(2 + sin x)
    SinVol { theta: T, eta: T },
}

/// A catalog model. Build with [`build_model`] or [`ModelSpec::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel<T: Scalar = f64> {
    name: String,
    params: BTreeMap<String, f64>,
    dynamics: Dynamics<T>,
    initial: GaussianLaw<T>,
}

pub const MODEL_NAMES: [&str; 4] = ["mv-ou", "state-vol", "mean-vol", "sin-vol"];

struct ParamReader<'a> {
    model: &'a str,
    params: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn required(&mut self, key: &'static str) -> Result<f64> {
        self.used.push(key);
        let v = *self.params.get(key).ok_or_else(|| {
            Error::InvalidParams(format!("model '{}' requires parameter '{key}'", self.model))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidParams(format!("parameter '{key}' must be finite")));
        }
        Ok(v)
    }

    fn nonnegative(&mut self, key: &'static str) -> Result<f64> {
        let v = self.required(key)?;
        if v < 0.0 {
            return Err(Error::InvalidParams(format!(
                "parameter '{key}' must be nonnegative, got {v}"
            )));
        }
        Ok(v)
    }

    fn optional(&mut self, key: &'static str, default: f64) -> Result<f64> {
        if self.params.contains_key(key) {
            self.required(key)
        } else {
            self.used.push(key);
            Ok(default)
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.params.keys() {
            if !self.used.contains(&k.as_str()) {
                return Err(Error::InvalidParams(format!(
                    "unknown parameter '{k}' for model '{}'",
                    self.model
                )));
            }
        }
        Ok(())
    }
}

/// Builds a catalog model.
///
/// Every catalog entry accepts `m0` (default 0) and `s0` (default 1) for the
/// Gaussian initial law.
///
/// | name        | drift              | squared diffusion   | parameters            |
/// |-------------|--------------------|---------------------|-----------------------|
/// | `mv-ou`     | −θ(x − κ·mean μ)   | σ²                  | theta, kappa, sigma   |
/// | `state-vol` | −θx                | λ1 + λ2 x²          | theta, lambda1, lambda2 |
/// | `mean-vol`  | −θ(x − mean μ)     | σ²(1 + c·mean(μ)²)  | theta, sigma, c       |
/// | `sin-vol`   | −θx                | η(2 + sin x)        | theta, eta            |
pub fn build_model<T: Scalar>(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<CoefficientModel<T>> {
    let mut r = ParamReader {
        model: name,
        params,
        used: Vec::new(),
    };
    let dynamics = match name {
        "mv-ou" => Dynamics::MvOu {
            theta: T::lit(r.required("theta")?),
            kappa: T::lit(r.required("kappa")?),
            sigma: T::lit(r.nonnegative("sigma")?),
        },
        "state-vol" => Dynamics::StateVol {
            theta: T::lit(r.required("theta")?),
            lambda1: T::lit(r.nonnegative("lambda1")?),
            lambda2: T::lit(r.nonnegative("lambda2")?),
        },
        "mean-vol" => Dynamics::MeanVol {
            theta: T::lit(r.required("theta")?),
            sigma: T::lit(r.nonnegative("sigma")?),
            c: T::lit(r.nonnegative("c")?),
        },
        "sin-vol" => Dynamics::SinVol {
            theta: T::lit(r.required("theta")?),
            eta: T::lit(r.nonnegative("eta")?),
        },
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    let m0 = r.optional("m0", 0.0)?;
    let s0 = r.optional("s0", 1.0)?;
    if s0 < 0.0 {
        return Err(Error::InvalidParams(format!("s0 must be nonnegative, got {s0}")));
    }
    r.finish()?;

    let mut recorded = params.clone();
    recorded.entry("m0".into()).or_insert(m0);
    recorded.entry("s0".into()).or_insert(s0);
    Ok(CoefficientModel {
        name: name.to_string(),
        params: recorded,
        dynamics,
        initial: GaussianLaw {
            mean: T::lit(m0),
            sd: T::lit(s0),
        },
    })
}

impl<T: Scalar> McKeanVlasovModel<T> for CoefficientModel<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn drift(&self, x: T, mu: &EmpiricalMeasure<T>) -> T {
        match self.dynamics {
            Dynamics::MvOu { theta, kappa, .. } => -theta * (x - kappa * mu.mean()),
            Dynamics::StateVol { theta, .. } | Dynamics::SinVol { theta, .. } => -theta * x,
            Dynamics::MeanVol { theta, .. } => -theta * (x - mu.mean()),
        }
    }

    fn diffusion_sq(&self, x: T, mu: &EmpiricalMeasure<T>) -> T {
        match self.dynamics {
            Dynamics::MvOu { sigma, .. } => sigma * sigma,
            Dynamics::StateVol {
                lambda1, lambda2, ..
            } => lambda1 + lambda2 * x * x,
            Dynamics::MeanVol { sigma, c, .. } => {
                let m = mu.mean();
                sigma * sigma * (T::one() + c * m * m)
            }
            Dynamics::SinVol { eta, .. } => eta * (T::lit(2.0) + x.sin()),
        }
    }

    fn initial_law(&self) -> GaussianLaw<T> {
        self.initial
    }

    fn params(&self) -> BTreeMap<String, f64> {
        self.params.clone()
    }
}

/// One squared-volatility candidate `a_k²(x, μ)` of a basis family.
pub trait BasisAtom<T: Scalar>: Send + Sync + fmt::Debug {
    fn label(&self) -> String;
    fn eval(&self, x: T, mu: &EmpiricalMeasure<T>) -> T;
}

/// Built-in atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatalogAtom<T> {
    /// 1
    Const,
    /// x²
    X2,
    /// x⁴
    X4,
    /// e^{βx}
    ExpX { beta: T },
    /// (mean μ)²
    Mean2,
    /// variance of μ
    Var,
}

impl<T: Scalar> BasisAtom<T> for CatalogAtom<T> {
    fn label(&self) -> String {
        match self {
            CatalogAtom::Const => "const".into(),
            CatalogAtom::X2 => "x2".into(),
            CatalogAtom::X4 => "x4".into(),
            CatalogAtom::ExpX { beta } if *beta == T::one() => "expx".into(),
            CatalogAtom::ExpX { beta } => format!("expx:{beta}"),
            CatalogAtom::Mean2 => "mean2".into(),
            CatalogAtom::Var => "var".into(),
        }
    }

    #[inline]
    fn eval(&self, x: T, mu: &EmpiricalMeasure<T>) -> T {
        match *self {
            CatalogAtom::Const => T::one(),
            CatalogAtom::X2 => x * x,
            CatalogAtom::X4 => {
                let x2 = x * x;
                x2 * x2
            }
            CatalogAtom::ExpX { beta } => (beta * x).exp(),
            CatalogAtom::Mean2 => mu.mean() * mu.mean(),
            CatalogAtom::Var => mu.variance(),
        }
    }
}

/// `factor · inner(x, μ)`.
#[derive(Debug, Clone)]
pub struct ScaledAtom<T: Scalar> {
    pub inner: Arc<dyn BasisAtom<T>>,
    pub factor: T,
}

impl<T: Scalar> BasisAtom<T> for ScaledAtom<T> {
    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.inner.label())
    }

    fn eval(&self, x: T, mu: &EmpiricalMeasure<T>) -> T {
        self.factor * self.inner.eval(x, mu)
    }
}

/// Ordered candidate family `a_1², …, a_d²`; the order fixes the index `k`
/// used in every estimator.
#[derive(Debug, Clone)]
pub struct BasisFamily<T: Scalar = f64> {
    atoms: Vec<Arc<dyn BasisAtom<T>>>,
}

impl<T: Scalar> BasisFamily<T> {
    pub fn new(atoms: Vec<Arc<dyn BasisAtom<T>>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyBasis);
        }
        Ok(Self { atoms })
    }

    pub fn d(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Arc<dyn BasisAtom<T>>] {
        &self.atoms
    }

    pub fn labels(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.label()).collect()
    }

    /// Writes `(a_1²(x, μ), …, a_d²(x, μ))` into `out`.
    #[inline]
    pub fn eval_into(&self, x: T, mu: &EmpiricalMeasure<T>, out: &mut [T]) {
        for (slot, atom) in out.iter_mut().zip(&self.atoms) {
            *slot = atom.eval(x, mu);
        }
    }

    pub fn eval(&self, x: T, mu: &EmpiricalMeasure<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.d()];
        self.eval_into(x, mu, &mut out);
        out
    }

    /// Every atom multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| {
                    Arc::new(ScaledAtom {
                        inner: Arc::clone(a),
                        factor,
                    }) as Arc<dyn BasisAtom<T>>
                })
                .collect(),
        }
    }
}

fn parse_atom<T: Scalar>(token: &str) -> Result<CatalogAtom<T>> {
    let token = token.trim();
    let (name, arg) = match token.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (token, None),
    };
    let atom = match (name, arg) {
        ("const", None) => CatalogAtom::Const,
        ("x2", None) => CatalogAtom::X2,
        ("x4", None) => CatalogAtom::X4,
        ("mean2", None) => CatalogAtom::Mean2,
        ("var", None) => CatalogAtom::Var,
        ("expx", None) => CatalogAtom::ExpX { beta: T::one() },
        ("expx", Some(b)) => {
            let beta: f64 = b
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::InvalidParams(format!("bad expx exponent '{b}'")))?;
            CatalogAtom::ExpX { beta: T::lit(beta) }
        }
        _ => return Err(Error::UnknownAtom(token.to_string())),
    };
    Ok(atom)
}

/// Builds a family from atom names: `const`, `x2`, `x4`, `expx` (β = 1) or
/// `expx:<β>`, `mean2`, `var`.
pub fn build_basis<T: Scalar, S: AsRef<str>>(atoms: &[S]) -> Result<BasisFamily<T>> {
    let atoms = atoms
        .iter()
        .map(|s| parse_atom::<T>(s.as_ref()).map(|a| Arc::new(a) as Arc<dyn BasisAtom<T>>))
        .collect::<Result<Vec<_>>>()?;
    BasisFamily::new(atoms)
}

/// Parses a comma-separated basis spec such as `"const,x2"`.
pub fn parse_basis<T: Scalar>(spec: &str) -> Result<BasisFamily<T>> {
    let tokens: Vec<&str> = spec.split(',').filter(|t| !t.trim().is_empty()).collect();
    build_basis(&tokens)
}
