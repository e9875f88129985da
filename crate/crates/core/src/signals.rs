//! Coefficient laws, frequency sequences and localized signal instances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::periodic_fn::PeriodicFunction;
use crate::sum::CompensatedSum;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("explicit frequency list has {len} entries, n = {n} requested")]
    ExplicitTooShort { len: usize, n: usize },
    #[error("n must be at least 1")]
    ZeroN,
}

fn invalid(field: &'static str, message: impl Into<String>) -> SignalError {
    SignalError::Invalid {
        field,
        message: message.into(),
    }
}

/// Finitely supported centered law with unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, SignalError> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(invalid("law", "need matching, nonempty value and probability lists"));
        }
        if values.iter().chain(&probs).any(|v| !v.is_finite()) || probs.iter().any(|&p| p <= 0.0) {
            return Err(invalid("law", "values must be finite and probabilities positive"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("law", format!("probabilities sum to {total}, not 1")));
        }
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let second: f64 = values.iter().zip(&probs).map(|(v, p)| v * v * p).sum();
        if mean.abs() > 1e-12 {
            return Err(invalid("law", format!("mean is {mean}, not 0")));
        }
        if (second - 1.0).abs() > 1e-12 {
            return Err(invalid("law", format!("variance is {second}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            values,
            probs,
            cumulative,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Common law of the coefficients `a_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientLaw {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformCentered,
    Discrete(DiscreteLaw),
}

impl CoefficientLaw {
    /// `E[a⁴]`.
    pub fn fourth_moment(&self) -> f64 {
        match self {
            CoefficientLaw::Gaussian => 3.0,
            CoefficientLaw::Rademacher => 1.0,
            CoefficientLaw::UniformCentered => 9.0 / 5.0,
            CoefficientLaw::Discrete(d) => d.values.iter().zip(&d.probs).map(|(v, p)| p * v.powi(4)).sum(),
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CoefficientLaw::Gaussian => rng.sample(StandardNormal),
            CoefficientLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            CoefficientLaw::UniformCentered => rng.random_range(-SQRT3..=SQRT3),
            CoefficientLaw::Discrete(d) => d.sample(rng),
        }
    }

    /// `n` independent draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Convenience wrapper for [`CoefficientLaw::sample`].
pub fn sample_coefficients<R: Rng + ?Sized>(law: &CoefficientLaw, n: usize, rng: &mut R) -> Vec<f64> {
    law.sample(n, rng)
}

impl FromStr for CoefficientLaw {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "gaussian" => return Ok(CoefficientLaw::Gaussian),
            "rademacher" => return Ok(CoefficientLaw::Rademacher),
            "uniform" => return Ok(CoefficientLaw::UniformCentered),
            _ => {}
        }
        let body = s
            .strip_prefix("discrete:")
            .ok_or_else(|| invalid("law", format!("unknown law `{s}`")))?;
        let mut values = Vec::new();
        let mut probs = Vec::new();
        for atom in body.split(';').map(str::trim).filter(|a| !a.is_empty()) {
            let (v, p) = atom
                .split_once(',')
                .ok_or_else(|| invalid("law", format!("expected `value,prob`, got `{atom}`")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid("law", format!("cannot parse `{}`", x.trim())))
            };
            values.push(parse(v)?);
            probs.push(parse(p)?);
        }
        Ok(CoefficientLaw::Discrete(DiscreteLaw::new(values, probs)?))
    }
}

impl fmt::Display for CoefficientLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientLaw::Gaussian => write!(f, "gaussian"),
            CoefficientLaw::Rademacher => write!(f, "rademacher"),
            CoefficientLaw::UniformCentered => write!(f, "uniform"),
            CoefficientLaw::Discrete(d) => {
                let atoms: Vec<String> = d
                    .values
                    .iter()
                    .zip(&d.probs)
                    .map(|(v, p)| format!("{v},{p}"))
                    .collect();
                write!(f, "discrete:{}", atoms.join(";"))
            }
        }
    }
}

/// How `p_n` is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum PnRule {
    /// `p_n = ⌊n α⌋`.
    FloorMultiple,
    /// `p_n` read from a list indexed by `n - 1`.
    Explicit(Vec<f64>),
}

/// Sequence `p_n` with `p_n / n → α`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySequence {
    alpha: f64,
    rule: PnRule,
}

impl FrequencySequence {
    /// `α = π (√5 - 1) / 2`, the golden rotation.
    pub fn golden() -> Self {
        Self {
            alpha: PI * (5f64.sqrt() - 1.0) / 2.0,
            rule: PnRule::FloorMultiple,
        }
    }

    pub fn floor_multiple(alpha: f64) -> Result<Self, SignalError> {
        Self::new(alpha, PnRule::FloorMultiple)
    }

    pub fn new(alpha: f64, rule: PnRule) -> Result<Self, SignalError> {
        if !(alpha > 0.0 && alpha < 2.0 * PI) {
            return Err(invalid("alpha", format!("alpha must lie in (0, 2π), got {alpha}")));
        }
        Ok(Self { alpha, rule })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rule(&self) -> &PnRule {
        &self.rule
    }

    pub fn make_pn(&self, n: usize) -> Result<f64, SignalError> {
        if n == 0 {
            return Err(SignalError::ZeroN);
        }
        match &self.rule {
            PnRule::FloorMultiple => Ok((n as f64 * self.alpha).floor()),
            PnRule::Explicit(list) => list
                .get(n - 1)
                .copied()
                .ok_or(SignalError::ExplicitTooShort { len: list.len(), n }),
        }
    }

    fn is_golden(&self) -> bool {
        *self == Self::golden()
    }
}

/// Parses `golden` or a number (floor rule).
impl FromStr for FrequencySequence {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "golden" => Ok(Self::golden()),
            other => {
                let alpha = other
                    .parse::<f64>()
                    .map_err(|_| invalid("alpha", format!("expected `golden` or a number, got `{other}`")))?;
                Self::floor_multiple(alpha)
            }
        }
    }
}

impl fmt::Display for FrequencySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_golden() {
            write!(f, "golden")
        } else {
            write!(f, "{}", self.alpha)
        }
    }
}

/// One realization of `X_n`.
#[derive(Clone, Debug)]
pub struct SignalInstance {
    p_n: f64,
    coefficients: Vec<f64>,
    function: Arc<PeriodicFunction>,
}

impl SignalInstance {
    pub fn new(function: Arc<PeriodicFunction>, p_n: f64, coefficients: Vec<f64>) -> Result<Self, SignalError> {
        if coefficients.is_empty() {
            return Err(SignalError::ZeroN);
        }
        Ok(Self {
            p_n,
            coefficients,
            function,
        })
    }

    pub fn n(&self) -> usize {
        self.coefficients.len()
    }

    pub fn p_n(&self) -> f64 {
        self.p_n
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn function(&self) -> &PeriodicFunction {
        &self.function
    }

    pub fn function_arc(&self) -> &Arc<PeriodicFunction> {
        &self.function
    }

    /// `X_n(t) = n^{-1/2} Σ a_k f(k (p_n + t) / n)`.
    pub fn eval(&self, t: f64) -> f64 {
        let nf = self.n() as f64;
        let shift = self.p_n + t;
        let acc: CompensatedSum = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| a * self.function.eval((i + 1) as f64 * shift / nf))
            .collect();
        acc.value() / nf.sqrt()
    }

    /// `X_n'(t) = n^{-1/2} Σ a_k (k/n) f'(k (p_n + t) / n)`, right-continuous.
    pub fn eval_derivative(&self, t: f64) -> f64 {
        let nf = self.n() as f64;
        let shift = self.p_n + t;
        let acc: CompensatedSum = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let w = (i + 1) as f64 / nf;
                a * w * self.function.eval_derivative((i + 1) as f64 * shift / nf)
            })
            .collect();
        acc.value() / nf.sqrt()
    }

    /// Same instance with every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p_n: self.p_n,
            coefficients: self.coefficients.iter().map(|a| c * a).collect(),
            function: Arc::clone(&self.function),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rademacher_support() {
        let mut rng = stream(1, 0, 0);
        let a = CoefficientLaw::Rademacher.sample(1000, &mut rng);
        assert!(a.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn gaussian_moments() {
        let n = 1_000_000;
        let mut rng = stream(2, 0, 0);
        let a = CoefficientLaw::Gaussian.sample(n, &mut rng);
        let mean = a.iter().sum::<f64>() / n as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn uniform_support_and_variance() {
        let n = 200_000;
        let mut rng = stream(3, 0, 0);
        let a = CoefficientLaw::UniformCentered.sample(n, &mut rng);
        assert!(a.iter().all(|x| x.abs() <= SQRT3));
        let var = a.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn discrete_law_validation() {
        assert!(DiscreteLaw::new(vec![-1.0, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(DiscreteLaw::new(vec![-2.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteLaw::new(vec![-1.0, 1.0], vec![0.6, 0.5]).is_err());
        // three-point law: ±√2 with 1/4 each, 0 with 1/2
        let r2 = 2f64.sqrt();
        let law = DiscreteLaw::new(vec![-r2, 0.0, r2], vec![0.25, 0.5, 0.25]).unwrap();
        let law = CoefficientLaw::Discrete(law);
        assert!((law.fourth_moment() - 2.0).abs() < 1e-12);
        let mut rng = stream(4, 0, 0);
        let draws = law.sample(10_000, &mut rng);
        assert!(draws.iter().all(|x| [-r2, 0.0, r2].contains(x)));
    }

    #[test]
    fn law_strings_round_trip() {
        for s in ["gaussian", "rademacher", "uniform", "discrete:-1,0.5;1,0.5"] {
            let law: CoefficientLaw = s.parse().unwrap();
            assert_eq!(law.to_string(), s);
        }
        for bad in ["cauchy", "discrete:1,1", "discrete:-1;1", "discrete:a,0.5;1,0.5"] {
            match bad.parse::<CoefficientLaw>() {
                Err(SignalError::Invalid { field, .. }) => assert_eq!(field, "law"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn golden_pn() {
        let seq = FrequencySequence::golden();
        assert!((seq.alpha() - 1.941_611_038_725_466_5).abs() < 1e-15);
        assert_eq!(seq.make_pn(10).unwrap(), 19.0);
        assert_eq!(seq.make_pn(1).unwrap(), seq.alpha().floor());
        let n = 10_000;
        assert!((seq.make_pn(n).unwrap() / n as f64 - seq.alpha()).abs() <= 1e-4);
        assert_eq!(seq.make_pn(0), Err(SignalError::ZeroN));
    }

    #[test]
    fn explicit_pn() {
        let seq = FrequencySequence::new(1.0, PnRule::Explicit(vec![1.0, 2.5])).unwrap();
        assert_eq!(seq.make_pn(2).unwrap(), 2.5);
        assert_eq!(
            seq.make_pn(3),
            Err(SignalError::ExplicitTooShort { len: 2, n: 3 })
        );
        assert!(FrequencySequence::floor_multiple(7.0).is_err());
        assert_eq!("golden".parse::<FrequencySequence>().unwrap().to_string(), "golden");
        assert_eq!("1.5".parse::<FrequencySequence>().unwrap().to_string(), "1.5");
    }

    #[test]
    fn single_term_signal() {
        let f = Arc::new(PeriodicFunction::cosine());
        let inst = SignalInstance::new(f, 0.0, vec![1.0]).unwrap();
        for &t in &[0.0, 0.7, -2.0] {
            assert!((inst.eval(t) - f64::cos(t)).abs() < 1e-15);
            assert!((inst.eval_derivative(t) + f64::sin(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn cancelling_pair() {
        let f = Arc::new(PeriodicFunction::cosine());
        let inst = SignalInstance::new(f, 0.0, vec![1.0, -1.0]).unwrap();
        assert_eq!(inst.eval(0.0), 0.0);
        assert!(SignalInstance::new(Arc::new(PeriodicFunction::cosine()), 0.0, vec![]).is_err());
    }

    #[test]
    fn derivative_constant_on_affine_cell() {
        let f = Arc::new(PeriodicFunction::triangle());
        let inst = SignalInstance::new(f, 3.0, vec![0.3, -1.2, 0.8]).unwrap();
        // breakpoints of term k sit at t = (πq) n / k - p_n; t = 0.10 and 0.11 share a cell
        assert_eq!(inst.eval_derivative(0.10), inst.eval_derivative(0.11));
    }
}
