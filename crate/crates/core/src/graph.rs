//! Factor graphs over mixed discrete and continuous variables.
//!
//! All potentials are held in the log domain; `-inf` encodes a zero potential.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::LogSumExp;

pub type VarId = usize;
pub type FactorId = usize;

/// Default cap on the number of joint states the enumeration oracles visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// States `0..cardinality`, stored as exact integers in `f64`.
    Discrete {
        cardinality: usize,
    },
    /// The circle, canonically `(-π, π]`.
    Angle,
    Real,
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Domain::Discrete { cardinality } => {
                x.fract() == 0.0 && x >= 0.0 && (x as usize) < cardinality
            }
            Domain::Angle => x > -PI && x <= PI,
            Domain::Real => x.is_finite(),
        }
    }

    pub fn cardinality(&self) -> Option<usize> {
        match *self {
            Domain::Discrete { cardinality } => Some(cardinality),
            _ => None,
        }
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * ((x - PI) / two_pi).ceil();
    // guard the boundary against rounding in the line above
    if y <= -PI {
        y += two_pi;
    } else if y > PI {
        y -= two_pi;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: VarId,
    pub domain: Domain,
}

/// Read access to variable values. Unassigned variables read as NaN.
pub trait Values {
    fn value(&self, v: VarId) -> f64;
}

impl Values for [f64] {
    #[inline]
    fn value(&self, v: VarId) -> f64 {
        self[v]
    }
}

impl Values for Vec<f64> {
    #[inline]
    fn value(&self, v: VarId) -> f64 {
        self[v]
    }
}

/// Values taken from `head` where `in_head[v]` holds, and from `tail` elsewhere.
pub struct Spliced<'a> {
    pub head: &'a [f64],
    pub tail: &'a [f64],
    pub in_head: &'a [bool],
}

impl Values for Spliced<'_> {
    #[inline]
    fn value(&self, v: VarId) -> f64 {
        if self.in_head[v] {
            self.head[v]
        } else {
            self.tail[v]
        }
    }
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Log-potential of a factor.
#[derive(Clone)]
pub enum Potential {
    /// `log ψ ≡ log_value`.
    Constant { log_value: f64 },
    /// Row-major table of log-values over the clique's discrete states, last
    /// clique variable fastest.
    Table { log_values: Vec<f64> },
    /// `coupling · cos(x_i − x_j)` over two angles.
    XyPair { coupling: f64 },
    /// `−(x − y)² / (2σ²)`.
    GaussianObs { y: f64, sigma: f64 },
    /// `−(x_i − x_j)² / (2σ²)`.
    GaussianPair { sigma: f64 },
    /// Arbitrary log-potential over the clique values (in clique order).
    /// Not serializable.
    Custom { name: String, f: CustomFn },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Constant { log_value } => write!(f, "Constant({log_value})"),
            Potential::Table { log_values } => write!(f, "Table({log_values:?})"),
            Potential::XyPair { coupling } => write!(f, "XyPair({coupling})"),
            Potential::GaussianObs { y, sigma } => write!(f, "GaussianObs(y={y}, sigma={sigma})"),
            Potential::GaussianPair { sigma } => write!(f, "GaussianPair(sigma={sigma})"),
            Potential::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        use Potential::*;
        match (self, other) {
            (Constant { log_value: a }, Constant { log_value: b }) => a == b,
            (Table { log_values: a }, Table { log_values: b }) => a == b,
            (XyPair { coupling: a }, XyPair { coupling: b }) => a == b,
            (GaussianObs { y: a, sigma: s }, GaussianObs { y: b, sigma: t }) => a == b && s == t,
            (GaussianPair { sigma: a }, GaussianPair { sigma: b }) => a == b,
            (Custom { f: a, .. }, Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    clique: Vec<VarId>,
    potential: Potential,
    /// Cardinalities of the clique variables, for table lookup.
    cards: Vec<usize>,
}

impl Factor {
    pub fn clique(&self) -> &[VarId] {
        &self.clique
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// `log ψ_C` read from any value source; no coverage check.
    #[inline]
    pub fn log_value<S: Values + ?Sized>(&self, src: &S) -> f64 {
        match &self.potential {
            Potential::Constant { log_value } => *log_value,
            Potential::Table { log_values } => {
                let mut idx = 0usize;
                for (&v, &card) in self.clique.iter().zip(&self.cards) {
                    idx = idx * card + src.value(v) as usize;
                }
                log_values[idx]
            }
            Potential::XyPair { coupling } => {
                coupling * (src.value(self.clique[0]) - src.value(self.clique[1])).cos()
            }
            Potential::GaussianObs { y, sigma } => {
                let d = src.value(self.clique[0]) - y;
                -d * d / (2.0 * sigma * sigma)
            }
            Potential::GaussianPair { sigma } => {
                let d = src.value(self.clique[0]) - src.value(self.clique[1]);
                -d * d / (2.0 * sigma * sigma)
            }
            Potential::Custom { f, .. } => {
                let xs: Vec<f64> = self.clique.iter().map(|&v| src.value(v)).collect();
                f(&xs)
            }
        }
    }
}

/// Rectangular lattice metadata; variable `r * cols + c` sits at `(r, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub rows: usize,
    pub cols: usize,
    pub periodic: bool,
}

impl Lattice {
    pub fn new(rows: usize, cols: usize, periodic: bool) -> Self {
        Self {
            rows,
            cols,
            periodic,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, r: usize, c: usize) -> VarId {
        r * self.cols + c
    }

    pub fn coords(&self, v: VarId) -> (usize, usize) {
        (v / self.cols, v % self.cols)
    }

    /// Undirected nearest-neighbour edges, each listed once with `i < j`.
    pub fn edges(&self) -> Vec<(VarId, VarId)> {
        let mut edges = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.id(r, c);
                if c + 1 < self.cols {
                    edges.push((v, self.id(r, c + 1)));
                } else if self.periodic && self.cols > 2 {
                    edges.push((self.id(r, 0), v));
                }
                if r + 1 < self.rows {
                    edges.push((v, self.id(r + 1, c)));
                } else if self.periodic && self.rows > 2 {
                    edges.push((self.id(0, c), v));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn neighbours(&self, v: VarId) -> Vec<VarId> {
        let mut out: Vec<VarId> = self
            .edges()
            .into_iter()
            .filter_map(|(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    variables: Vec<VariableSpec>,
    factors: Vec<Factor>,
    lattice: Option<Lattice>,
    var_factors: Vec<Vec<FactorId>>,
}

impl FactorGraph {
    pub fn new(domains: impl IntoIterator<Item = Domain>) -> Result<Self> {
        let variables: Vec<VariableSpec> = domains
            .into_iter()
            .enumerate()
            .map(|(id, domain)| VariableSpec { id, domain })
            .collect();
        for v in &variables {
            if let Domain::Discrete { cardinality: 0 } = v.domain {
                return Err(Error::UnsupportedDomain(format!(
                    "variable {} has cardinality 0",
                    v.id
                )));
            }
        }
        let n = variables.len();
        Ok(Self {
            variables,
            factors: Vec::new(),
            lattice: None,
            var_factors: vec![Vec::new(); n],
        })
    }

    pub fn with_lattice(mut self, lattice: Lattice) -> Result<Self> {
        if lattice.len() != self.variables.len() {
            return Err(Error::InvalidArgument(format!(
                "lattice {}x{} does not match {} variables",
                lattice.rows,
                lattice.cols,
                self.variables.len()
            )));
        }
        self.lattice = Some(lattice);
        Ok(self)
    }

    pub fn add_factor(&mut self, clique: Vec<VarId>, potential: Potential) -> Result<FactorId> {
        if clique.is_empty() {
            return Err(Error::InvalidFactor("empty clique".into()));
        }
        for (i, &v) in clique.iter().enumerate() {
            if v >= self.variables.len() {
                return Err(Error::UnknownVariable(v));
            }
            if clique[..i].contains(&v) {
                return Err(Error::InvalidFactor(format!(
                    "variable {v} repeated in clique"
                )));
            }
        }
        let domains: Vec<Domain> = clique.iter().map(|&v| self.variables[v].domain).collect();
        let bad = |msg: &str| Err(Error::InvalidFactor(msg.to_string()));
        let mut cards = Vec::new();
        match &potential {
            Potential::Constant { log_value } => {
                if log_value.is_nan() || *log_value == f64::INFINITY {
                    return bad("constant log-potential must lie in [-inf, inf)");
                }
            }
            Potential::Table { log_values } => {
                for d in &domains {
                    match d.cardinality() {
                        Some(c) => cards.push(c),
                        None => return bad("table factor over a non-discrete variable"),
                    }
                }
                let size: usize = cards.iter().product();
                if log_values.len() != size {
                    return Err(Error::InvalidFactor(format!(
                        "table has {} entries, clique needs {size}",
                        log_values.len()
                    )));
                }
                if log_values.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                    return bad("table log-values must lie in [-inf, inf)");
                }
            }
            Potential::XyPair { coupling } => {
                if clique.len() != 2 || domains.iter().any(|d| *d != Domain::Angle) {
                    return bad("xy_pair needs two angle variables");
                }
                if !coupling.is_finite() {
                    return bad("xy_pair coupling must be finite");
                }
            }
            Potential::GaussianObs { y, sigma } => {
                if clique.len() != 1 || domains[0] != Domain::Real {
                    return bad("gaussian_obs needs one real variable");
                }
                if !(y.is_finite() && *sigma > 0.0 && sigma.is_finite()) {
                    return bad("gaussian_obs needs finite y and sigma > 0");
                }
            }
            Potential::GaussianPair { sigma } => {
                if clique.len() != 2 || domains.iter().any(|d| *d != Domain::Real) {
                    return bad("gaussian_pair needs two real variables");
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return bad("gaussian_pair needs sigma > 0");
                }
            }
            Potential::Custom { .. } => {}
        }
        let id = self.factors.len();
        for &v in &clique {
            self.var_factors[v].push(id);
        }
        self.factors.push(Factor {
            clique,
            potential,
            cards,
        });
        Ok(id)
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn domain(&self, v: VarId) -> Domain {
        self.variables[v].domain
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, f: FactorId) -> &Factor {
        &self.factors[f]
    }

    /// Factors whose clique contains `v`, in insertion order.
    pub fn factors_of(&self, v: VarId) -> &[FactorId] {
        &self.var_factors[v]
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.lattice.as_ref()
    }

    /// Variables sharing a factor with `v`.
    pub fn markov_blanket(&self, v: VarId) -> Vec<VarId> {
        let mut out: Vec<VarId> = self.var_factors[v]
            .iter()
            .flat_map(|&f| self.factors[f].clique.iter().copied())
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn eval_log_factor(&self, f: FactorId, a: &Assignment) -> Result<f64> {
        let factor = self.factors.get(f).ok_or(Error::UnknownFactor(f))?;
        a.require(&factor.clique)?;
        Ok(factor.log_value(a.values()))
    }

    /// `log ∏_C ψ_C(X_C)` for a full assignment.
    pub fn eval_log_unnorm_density(&self, a: &Assignment) -> Result<f64> {
        if a.len() != self.num_variables() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} slots, graph has {} variables",
                a.len(),
                self.num_variables()
            )));
        }
        a.require_all()?;
        Ok(self.log_unnorm_density_unchecked(a.values()))
    }

    #[inline]
    pub fn log_unnorm_density_unchecked<S: Values + ?Sized>(&self, src: &S) -> f64 {
        self.factors.iter().map(|f| f.log_value(src)).sum()
    }

    /// Sum of `log ψ` over a subset of factors.
    #[inline]
    pub fn log_factors<S: Values + ?Sized>(&self, ids: &[FactorId], src: &S) -> f64 {
        ids.iter().map(|&f| self.factors[f].log_value(src)).sum()
    }

    /// `log Z` by enumerating every joint state, with the default cap.
    pub fn brute_force_log_partition(&self) -> Result<f64> {
        self.brute_force_log_partition_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn brute_force_log_partition_capped(&self, cap: u64) -> Result<f64> {
        let cards = self.discrete_cardinalities()?;
        let states: f64 = cards.iter().map(|&c| c as f64).product();
        if states > cap as f64 {
            return Err(Error::DomainTooLarge { states, cap });
        }
        let mut acc = LogSumExp::default();
        for_each_joint_state(&cards, |x| acc.push(self.log_unnorm_density_unchecked(x)));
        Ok(acc.value())
    }

    pub fn discrete_cardinalities(&self) -> Result<Vec<usize>> {
        self.variables
            .iter()
            .map(|v| {
                v.domain.cardinality().ok_or_else(|| {
                    Error::UnsupportedDomain(format!("variable {} is not discrete", v.id))
                })
            })
            .collect()
    }
}

/// Visit every joint state of discrete variables with the given cardinalities
/// in odometer order (last variable fastest).
pub fn for_each_joint_state(cards: &[usize], mut f: impl FnMut(&[f64])) {
    let n = cards.len();
    let mut x = vec![0.0f64; n];
    loop {
        f(&x);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            x[i] += 1.0;
            if (x[i] as usize) < cards[i] {
                break;
            }
            x[i] = 0.0;
        }
    }
}

/// Possibly partial assignment of values to variables; unassigned slots hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<f64>,
}

impl Assignment {
    /// Empty assignment over `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![f64::NAN; n],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Build an assignment checked against the graph's domains.
    pub fn checked(graph: &FactorGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != graph.num_variables() {
            return Err(Error::InvalidArgument("assignment length mismatch".into()));
        }
        for (v, &x) in values.iter().enumerate() {
            if !x.is_nan() && !graph.domain(v).contains(x) {
                return Err(Error::OutOfDomain { var: v, value: x });
            }
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: VarId) -> Option<f64> {
        self.values.get(v).copied().filter(|x| !x.is_nan())
    }

    pub fn set(&mut self, v: VarId, x: f64) {
        self.values[v] = x;
    }

    pub fn unset(&mut self, v: VarId) {
        self.values[v] = f64::NAN;
    }

    pub fn is_assigned(&self, v: VarId) -> bool {
        self.get(v).is_some()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn require(&self, vars: &[VarId]) -> Result<()> {
        match vars.iter().find(|&&v| !self.is_assigned(v)) {
            Some(&v) => Err(Error::MissingVariable(v)),
            None => Ok(()),
        }
    }

    pub fn require_all(&self) -> Result<()> {
        match self.values.iter().position(|x| x.is_nan()) {
            Some(v) => Err(Error::MissingVariable(v)),
            None => Ok(()),
        }
    }
}

impl Values for Assignment {
    #[inline]
    fn value(&self, v: VarId) -> f64 {
        self.values[v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(n: usize) -> FactorGraph {
        FactorGraph::new(vec![Domain::Discrete { cardinality: 2 }; n]).unwrap()
    }

    #[test]
    fn factor_examples() {
        let mut g = binary(2);
        let c = g
            .add_factor(vec![0], Potential::Constant { log_value: 0.0 })
            .unwrap();
        let t = g
            .add_factor(
                vec![0, 1],
                Potential::Table {
                    log_values: vec![2f64.ln(), 0.0, 0.0, 2f64.ln()],
                },
            )
            .unwrap();
        let a = Assignment::from_values(vec![0.0, 0.0]);
        assert_eq!(g.eval_log_factor(c, &a).unwrap(), 0.0);
        assert!((g.eval_log_factor(t, &a).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let b = Assignment::from_values(vec![0.0, 1.0]);
        assert_eq!(g.eval_log_factor(t, &b).unwrap(), 0.0);

        let mut xy = FactorGraph::new(vec![Domain::Angle; 2]).unwrap();
        let f = xy
            .add_factor(vec![0, 1], Potential::XyPair { coupling: 1.1 })
            .unwrap();
        let a = Assignment::from_values(vec![0.4, 0.4]);
        assert!((xy.eval_log_factor(f, &a).unwrap() - 1.1).abs() < 1e-15);
    }

    #[test]
    fn missing_variable_is_reported() {
        let mut g = binary(2);
        let f = g
            .add_factor(
                vec![0, 1],
                Potential::Table {
                    log_values: vec![0.0; 4],
                },
            )
            .unwrap();
        let mut a = Assignment::new(2);
        a.set(0, 1.0);
        assert!(matches!(
            g.eval_log_factor(f, &a),
            Err(Error::MissingVariable(1))
        ));
        assert!(matches!(
            g.eval_log_unnorm_density(&a),
            Err(Error::MissingVariable(1))
        ));
    }

    #[test]
    fn rejects_malformed_factors() {
        let mut g = binary(2);
        assert!(g
            .add_factor(vec![], Potential::Constant { log_value: 0.0 })
            .is_err());
        assert!(g
            .add_factor(vec![0, 0], Potential::Constant { log_value: 0.0 })
            .is_err());
        assert!(g
            .add_factor(vec![5], Potential::Constant { log_value: 0.0 })
            .is_err());
        assert!(g
            .add_factor(
                vec![0, 1],
                Potential::Table {
                    log_values: vec![0.0; 3]
                }
            )
            .is_err());
        assert!(g
            .add_factor(vec![0, 1], Potential::XyPair { coupling: 1.0 })
            .is_err());
        assert!(g
            .add_factor(
                vec![0],
                Potential::Constant {
                    log_value: f64::INFINITY
                }
            )
            .is_err());
    }

    #[test]
    fn density_sums_factors() {
        let mut g = binary(2);
        g.add_factor(vec![0], Potential::Constant { log_value: 0.0 })
            .unwrap();
        g.add_factor(vec![1], Potential::Constant { log_value: 0.0 })
            .unwrap();
        let a = Assignment::from_values(vec![1.0, 0.0]);
        assert_eq!(g.eval_log_unnorm_density(&a).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_small_cases() {
        let mut g = binary(1);
        g.add_factor(vec![0], Potential::Constant { log_value: 0.0 })
            .unwrap();
        assert!((g.brute_force_log_partition().unwrap() - 2f64.ln()).abs() < 1e-15);
        let g = binary(2);
        assert!((g.brute_force_log_partition().unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn brute_force_rejects_continuous_and_large() {
        let g = FactorGraph::new(vec![Domain::Real]).unwrap();
        assert!(matches!(
            g.brute_force_log_partition(),
            Err(Error::UnsupportedDomain(_))
        ));
        let g = binary(30);
        assert!(matches!(
            g.brute_force_log_partition(),
            Err(Error::DomainTooLarge { .. })
        ));
    }

    #[test]
    fn wrap_angle_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        for i in -50..50 {
            let y = wrap_angle(i as f64 * 0.77);
            assert!(y > -PI && y <= PI);
        }
    }

    #[test]
    fn lattice_edges() {
        let l = Lattice::new(3, 3, false);
        assert_eq!(l.edges().len(), 12);
        let p = Lattice::new(3, 3, true);
        assert_eq!(p.edges().len(), 18);
        assert_eq!(p.neighbours(0), vec![1, 2, 3, 6]);
        // 2-wide periodic lattices do not double edges
        assert_eq!(Lattice::new(2, 2, true).edges().len(), 4);
    }
}
