//! Program families and cost-ratio regressions over them.
//!
//! A measurement compares the full cost of differentiating a program (the
//! forward pass, running its backpropagator on the seed and building the
//! zero environment) against the cost of the program itself.

mod family;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::chad::{self, Derivative, Gradient, Mode, TransformConfig};
use crate::cotangent::{self, CotValue};
use crate::eval::{eval, EvalError, Value};
use crate::hoc::{self, HoMode, HocError};
use crate::lang::{Context, Program, Term};

pub use family::{family_point, gen_family, Family, POINT_SEED};

/// Cost of creating one zero slot in the initial environment.
pub const C_ZERO_SLOT: u64 = crate::evm::C_RUN + 2;
/// Per-node cost allowance for the seed.
pub const C_SEED: u64 = cotangent::C_PHI;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("size {n} is out of range for family {family}")]
    SizeOutOfRange { family: Family, n: usize },
    #[error("bad size sweep: {0}")]
    BadSizes(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Hoc(#[from] HocError),
    /// A failure inside a concurrently measured cell.
    #[error("size {n}: {msg}")]
    Cell { n: usize, msg: String },
}

/// Any differentiation strategy: a first-order CHAD mode or a
/// higher-order pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnyMode {
    FirstOrder(Mode),
    HigherOrder(HoMode),
}

impl AnyMode {
    pub const ALL: [AnyMode; 6] = [
        AnyMode::FirstOrder(Mode::NaiveDense),
        AnyMode::FirstOrder(Mode::NaiveTreeMap),
        AnyMode::FirstOrder(Mode::Monadic),
        AnyMode::HigherOrder(HoMode::NaiveHo),
        AnyMode::HigherOrder(HoMode::Defunctionalise),
        AnyMode::HigherOrder(HoMode::ClosureChad),
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnyMode::FirstOrder(m) => m.name(),
            AnyMode::HigherOrder(m) => m.name(),
        }
    }

    /// The derivative term this mode produces for `p`.
    pub fn transform(self, p: &Program) -> Result<Derivative, HocError> {
        match self {
            AnyMode::FirstOrder(m) => Ok(chad::chad_transform(&TransformConfig::new(m), &p.ctx, &p.body)?),
            AnyMode::HigherOrder(HoMode::NaiveHo) => hoc::chad_naive_ho(&p.ctx, &p.body),
            AnyMode::HigherOrder(HoMode::Defunctionalise) => {
                let fo = hoc::defunctionalise(&hoc::closure_convert(&p.ctx, &p.body)?)?;
                Ok(chad::chad_transform(&TransformConfig::new(Mode::Monadic), &fo.ctx, &fo.term)?)
            }
            AnyMode::HigherOrder(HoMode::ClosureChad) => hoc::chad_closed(&hoc::closure_convert(&p.ctx, &p.body)?),
        }
    }

    /// Gradient of `t` at `point` for the output cotangent `seed`.
    pub fn grad(self, ctx: &Context, t: &Term, point: &[Value], seed: &CotValue) -> Result<Gradient, HocError> {
        match self {
            AnyMode::FirstOrder(m) => Ok(chad::grad(&TransformConfig::new(m), ctx, t, point, seed)?),
            AnyMode::HigherOrder(m) => hoc::grad_ho(m, ctx, t, point, seed),
        }
    }
}

impl fmt::Display for AnyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<AnyMode, String> {
        AnyMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Costs of one program under one mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub cost_primal: u64,
    pub cost_derivative: u64,
    pub ratio: f64,
    /// `(cost_derivative - C_ZERO_SLOT·n_ctx - C_SEED·seed_size) / cost_primal`.
    pub adjusted_ratio: f64,
    pub n_ctx: usize,
    pub seed_size: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    #[serde(flatten)]
    pub m: Measurement,
}

pub fn measure(p: &Program, mode: AnyMode, point: &[Value], seed: &CotValue) -> Result<Measurement, BenchError> {
    let (_, cost_primal) = eval(point, &p.body)?;
    let g = mode.grad(&p.ctx, &p.body, point, seed)?;
    let n_ctx = p.ctx.len();
    let seed_size = cotangent::size(seed);
    let allowance = C_ZERO_SLOT * n_ctx as u64 + C_SEED * seed_size;
    let primal = cost_primal.max(1) as f64;
    Ok(Measurement {
        cost_primal,
        cost_derivative: g.cost,
        ratio: g.cost as f64 / primal,
        adjusted_ratio: g.cost.saturating_sub(allowance) as f64 / primal,
        n_ctx,
        seed_size,
    })
}

/// Smallest size at which the doubling rule is judged; lower-order terms
/// dominate below it.
pub const DOUBLING_FROM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Adjusted ratio at the largest size is at most 1.2 times the one at the smallest.
    FlatRatio,
    /// Adjusted ratio at the largest size is at least 1.5 times the one at the smallest.
    LogGrowth,
    /// Derivative cost between consecutive sizes grows by a factor in
    /// `[1.8, 2.2]`, for steps starting at `DOUBLING_FROM` or above.
    Doubling,
    /// Derivative cost between consecutive sizes grows by at most 1.15 times the size factor.
    Linear,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::FlatRatio, Rule::LogGrowth, Rule::Doubling, Rule::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Rule::FlatRatio => "flat-ratio",
            Rule::LogGrowth => "log-growth",
            Rule::Doubling => "doubling",
            Rule::Linear => "linear",
        }
    }

    /// The rule a family is expected to obey under a mode.
    pub fn default_for(family: Family, mode: AnyMode) -> Rule {
        match (family, mode) {
            (Family::TN, AnyMode::HigherOrder(HoMode::NaiveHo)) => Rule::Doubling,
            (Family::TN, _) => Rule::Linear,
            _ => Rule::FlatRatio,
        }
    }

    /// Sizes from `lo` to `hi`: every integer for `doubling`, otherwise powers of two.
    pub fn sweep(self, lo: usize, hi: usize) -> Result<Vec<usize>, BenchError> {
        if lo == 0 || lo > hi {
            return Err(BenchError::BadSizes(format!("{lo}..{hi}")));
        }
        if self == Rule::Doubling {
            return Ok((lo..=hi).collect());
        }
        if !lo.is_power_of_two() || !hi.is_power_of_two() {
            return Err(BenchError::BadSizes(format!("{lo}..{hi} must be powers of two")));
        }
        Ok(std::iter::successors(Some(lo), |n| Some(n * 2)).take_while(|n| *n <= hi).collect())
    }

    pub fn holds(self, rows: &[Row]) -> bool {
        let (Some(first), Some(last)) = (rows.first(), rows.last()) else { return false };
        let pairs = || rows.windows(2).map(|w| (&w[0], &w[1]));
        match self {
            Rule::FlatRatio => last.m.adjusted_ratio <= 1.2 * first.m.adjusted_ratio,
            Rule::LogGrowth => last.m.adjusted_ratio >= 1.5 * first.m.adjusted_ratio,
            Rule::Doubling => pairs().filter(|(a, _)| a.n >= DOUBLING_FROM).all(|(a, b)| {
                let r = b.m.cost_derivative as f64 / a.m.cost_derivative as f64;
                (1.8..=2.2).contains(&r)
            }),
            Rule::Linear => pairs().all(|(a, b)| {
                let r = b.m.cost_derivative as f64 / a.m.cost_derivative as f64;
                r <= 1.15 * (b.n as f64 / a.n as f64)
            }),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Rule, String> {
        Rule::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

/// Least-squares fit of the adjusted ratio against `log2 n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trend {
    pub intercept: f64,
    pub slope_per_doubling: f64,
}

fn fit(rows: &[Row]) -> Trend {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).log2(), r.m.adjusted_ratio)).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    Trend { intercept: my - slope * mx, slope_per_doubling: slope }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub family: Family,
    pub mode: String,
    pub rows: Vec<Row>,
    pub rule: Rule,
    pub pass: bool,
    pub trend: Trend,
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Measures the family member of size `n` at its fixed point with seed 1.
pub fn measure_family(family: Family, n: usize, mode: AnyMode) -> Result<Row, BenchError> {
    let p = gen_family(family, n)?;
    let point = family_point(family, n);
    Ok(Row { n, m: measure(&p, mode, &point, &CotValue::Real(1.0))? })
}

/// Measures `family` at every size and evaluates `rule` on the rows.
/// Up to four cells run concurrently.
pub fn regression_check(family: Family, mode: AnyMode, sizes: &[usize], rule: Rule) -> Result<BenchReport, BenchError> {
    if sizes.len() < 4 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadSizes(format!("need at least 4 ascending sizes, got {sizes:?}")));
    }
    for &n in sizes {
        family.check_size(n)?;
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let mut rows = Vec::with_capacity(sizes.len());
    for chunk in sizes.chunks(workers) {
        let done = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&n| {
                    std::thread::Builder::new()
                        .stack_size(1 << 30)
                        .spawn_scoped(s, move || measure_family(family, n, mode).map_err(|e| e.to_string()))
                        .expect("spawn measurement thread")
                })
                .collect();
            handles
                .into_iter()
                .zip(chunk)
                .map(|(h, &n)| {
                    h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)).map_err(|msg| BenchError::Cell { n, msg })
                })
                .collect::<Result<Vec<Row>, BenchError>>()
        })?;
        rows.extend(done);
    }
    let pass = rule.holds(&rows);
    Ok(BenchReport { family, mode: mode.name().to_string(), trend: fit(&rows), rows, rule, pass })
}
