//! Per-customer service rates `r(n)` that depend on the number of customers
//! in the system.
//!
//! Every [`RateFunction`] carries a declared throughput floor `K_r` and a
//! single-server flag. Neither is inferred: [`RateFunction::validate`] checks
//! the standing assumptions (positivity, monotonicity, `n r(n) <= 1` when the
//! single-server flag is set, `n r(n) >= K_r`) on a finite probe horizon and
//! reports that horizon alongside the verdict.

use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("throughput is undefined for an empty system")]
    ZeroCustomers,
    #[error("rate table is empty")]
    EmptyTable,
    #[error("rate table must define r(1)")]
    TableMissingFirst,
    #[error("rate table index {0} appears more than once")]
    DuplicateTableIndex(u64),
    #[error("rate {rate} at n = {n} must be finite and strictly positive")]
    NonPositiveRate { n: u64, rate: f64 },
    #[error("declared throughput floor {0} must be finite and nonnegative")]
    InvalidFloor(f64),
    #[error("formula parameter {name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Kind tag of a rate function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateKindTag {
    PureDelay,
    ClassicalPs,
    HalfInterference,
    CustomTable,
    CustomFormula,
}

/// How a table is extended past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TableExtension {
    /// `r(n) = r(n_last)` for `n > n_last`.
    #[default]
    HoldRate,
    /// `n r(n) = n_last r(n_last)` for `n > n_last`.
    HoldThroughput,
}

/// Tabulated rates. Between two consecutive entries the throughput `n r(n)`
/// is interpolated linearly in `n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateTable {
    points: Vec<(u64, f64)>,
    extension: TableExtension,
}

impl RateTable {
    pub fn new(mut points: Vec<(u64, f64)>, extension: TableExtension) -> Result<Self, RateError> {
        if points.is_empty() {
            return Err(RateError::EmptyTable);
        }
        points.sort_by_key(|p| p.0);
        if points[0].0 != 1 {
            return Err(RateError::TableMissingFirst);
        }
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(RateError::DuplicateTableIndex(w[0].0));
            }
        }
        for &(n, rate) in &points {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(RateError::NonPositiveRate { n, rate });
            }
        }
        Ok(Self { points, extension })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn extension(&self) -> TableExtension {
        self.extension
    }

    fn eval(&self, n: u64) -> f64 {
        let idx = self.points.partition_point(|p| p.0 <= n);
        let (n0, r0) = self.points[idx - 1];
        if n0 == n {
            return r0;
        }
        match self.points.get(idx) {
            Some(&(n1, r1)) => {
                let (t0, t1) = (n0 as f64 * r0, n1 as f64 * r1);
                let w = (n - n0) as f64 / (n1 - n0) as f64;
                (t0 + w * (t1 - t0)) / n as f64
            }
            None => match self.extension {
                TableExtension::HoldRate => r0,
                TableExtension::HoldThroughput => n0 as f64 * r0 / n as f64,
            },
        }
    }
}

/// Closed-form rate families.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "formula", rename_all = "snake_case"))]
pub enum RateFormula {
    /// `r(n) = c / n`: total throughput `c` whenever the system is busy.
    ConstantThroughput { throughput: f64 },
    /// `r(n) = scale * n^(-exponent)`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl RateFormula {
    fn eval(&self, n: u64) -> f64 {
        match *self {
            Self::ConstantThroughput { throughput } => throughput / n as f64,
            Self::PowerLaw { scale, exponent } => scale * libm::pow(n as f64, -exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    /// `r = 1`: every customer is served at unit speed (G/G/infinity).
    PureDelay,
    /// `r(n) = 1/n`.
    ClassicalPs,
    /// `r(1) = 1`, `r(n) = 1/(2n)` for `n >= 2`.
    HalfInterference,
    Table(RateTable),
    Formula(RateFormula),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    kind: RateKind,
    floor: f64,
    single_server: bool,
}

impl RateFunction {
    pub fn new(kind: RateKind, floor: f64, single_server: bool) -> Result<Self, RateError> {
        if !(floor >= 0.0) || !floor.is_finite() {
            return Err(RateError::InvalidFloor(floor));
        }
        Ok(Self { kind, floor, single_server })
    }

    pub fn pure_delay() -> Self {
        Self { kind: RateKind::PureDelay, floor: 1.0, single_server: false }
    }

    pub fn classical_ps() -> Self {
        Self { kind: RateKind::ClassicalPs, floor: 1.0, single_server: true }
    }

    pub fn half_interference() -> Self {
        Self { kind: RateKind::HalfInterference, floor: 0.5, single_server: true }
    }

    /// The illustrative throughput-degradation table: rates 1, 0.495, 0.3
    /// for one to three customers and 0.008 at one hundred, i.e. throughputs
    /// 1, 0.99, 0.9 and 0.8. Declared floor 0.8.
    pub fn nominal_table() -> Self {
        let table = RateTable::new(
            alloc::vec![(1, 1.0), (2, 0.495), (3, 0.3), (100, 0.008)],
            TableExtension::HoldRate,
        )
        .expect("static table is well formed");
        Self { kind: RateKind::Table(table), floor: 0.8, single_server: true }
    }

    /// `r(n) = k / n`, the slowest rate compatible with floor `k`.
    pub fn constant_throughput(k: f64) -> Result<Self, RateError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(RateError::InvalidParameter { name: "throughput", value: k });
        }
        Ok(Self {
            kind: RateKind::Formula(RateFormula::ConstantThroughput { throughput: k }),
            floor: k,
            single_server: k <= 1.0,
        })
    }

    pub fn table(table: RateTable, floor: f64, single_server: bool) -> Result<Self, RateError> {
        Self::new(RateKind::Table(table), floor, single_server)
    }

    pub fn formula(formula: RateFormula, floor: f64, single_server: bool) -> Result<Self, RateError> {
        let (name, value) = match formula {
            RateFormula::ConstantThroughput { throughput } => ("throughput", throughput),
            RateFormula::PowerLaw { scale, .. } => ("scale", scale),
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(RateError::InvalidParameter { name, value });
        }
        if let RateFormula::PowerLaw { exponent, .. } = formula {
            if !exponent.is_finite() {
                return Err(RateError::InvalidParameter { name: "exponent", value: exponent });
            }
        }
        Self::new(RateKind::Formula(formula), floor, single_server)
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn tag(&self) -> RateKindTag {
        match self.kind {
            RateKind::PureDelay => RateKindTag::PureDelay,
            RateKind::ClassicalPs => RateKindTag::ClassicalPs,
            RateKind::HalfInterference => RateKindTag::HalfInterference,
            RateKind::Table(_) => RateKindTag::CustomTable,
            RateKind::Formula(_) => RateKindTag::CustomFormula,
        }
    }

    /// Declared throughput floor `K_r`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_single_server(&self) -> bool {
        self.single_server
    }

    pub fn with_single_server(mut self, single_server: bool) -> Self {
        self.single_server = single_server;
        self
    }

    /// `r(n)` for `n >= 1`.
    #[inline]
    pub fn rate(&self, n: usize) -> f64 {
        debug_assert!(n >= 1, "rate is defined for n >= 1");
        let n = n as u64;
        match &self.kind {
            RateKind::PureDelay => 1.0,
            RateKind::ClassicalPs => 1.0 / n as f64,
            RateKind::HalfInterference => {
                if n <= 1 {
                    1.0
                } else {
                    1.0 / (2.0 * n as f64)
                }
            }
            RateKind::Table(t) => t.eval(n),
            RateKind::Formula(f) => f.eval(n),
        }
    }

    /// `n r(n)`.
    pub fn throughput(&self, n: usize) -> Result<f64, RateError> {
        if n == 0 {
            return Err(RateError::ZeroCustomers);
        }
        Ok(n as f64 * self.rate(n))
    }

    /// `r(n) <= other(n)` for every `1 <= n <= n_max`.
    pub fn pointwise_le(&self, other: &RateFunction, n_max: usize) -> bool {
        (1..=n_max).all(|n| self.rate(n) <= other.rate(n))
    }

    pub fn validate(&self, n_max: usize) -> ValidationReport {
        let n_max = n_max.max(1);
        let mut violations = Vec::new();
        let (mut seen_positive, mut seen_monotone, mut seen_unit, mut seen_floor) =
            (false, false, false, false);
        let mut min_throughput = (1usize, f64::INFINITY);
        let mut max_throughput = (1usize, f64::NEG_INFINITY);
        let mut prev = f64::INFINITY;

        for n in 1..=n_max {
            let rate = self.rate(n);
            let tp = n as f64 * rate;
            if (!(rate > 0.0) || !rate.is_finite()) && !seen_positive {
                violations.push(Violation::NonPositive { n, rate });
                seen_positive = true;
            }
            if rate > prev && !seen_monotone {
                violations.push(Violation::Increasing { n, previous: prev, rate });
                seen_monotone = true;
            }
            if self.single_server && tp > 1.0 + 1e-12 && !seen_unit {
                violations.push(Violation::ExceedsUnitThroughput { n, throughput: tp });
                seen_unit = true;
            }
            if tp < self.floor - 1e-12 && !seen_floor {
                violations.push(Violation::BelowFloor { n, throughput: tp, floor: self.floor });
                seen_floor = true;
            }
            if tp < min_throughput.1 {
                min_throughput = (n, tp);
            }
            if tp > max_throughput.1 {
                max_throughput = (n, tp);
            }
            prev = rate;
        }

        ValidationReport {
            valid: violations.is_empty(),
            probed_up_to: n_max,
            declared_floor: self.floor,
            min_throughput: min_throughput.1,
            min_throughput_at: min_throughput.0,
            max_throughput: max_throughput.1,
            violations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "violation", rename_all = "snake_case"))]
pub enum Violation {
    NonPositive { n: usize, rate: f64 },
    Increasing { n: usize, previous: f64, rate: f64 },
    ExceedsUnitThroughput { n: usize, throughput: f64 },
    BelowFloor { n: usize, throughput: f64, floor: f64 },
}

/// Outcome of probing a rate function on `1..=probed_up_to`. Each violated
/// invariant is reported once, at the first `n` where it fails.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValidationReport {
    pub valid: bool,
    pub probed_up_to: usize,
    pub declared_floor: f64,
    pub min_throughput: f64,
    pub min_throughput_at: usize,
    pub max_throughput: f64,
    pub violations: Vec<Violation>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn classical_ps_is_valid_with_unit_throughput() {
        let report = RateFunction::classical_ps().validate(100);
        assert!(report.valid, "{report:?}");
        assert!(close(report.min_throughput, 1.0));
        assert!(close(report.max_throughput, 1.0));
        for n in 1..=100 {
            assert!(close(RateFunction::classical_ps().throughput(n).unwrap(), 1.0));
        }
    }

    #[test]
    fn half_interference_has_floor_one_half() {
        let r = RateFunction::half_interference();
        let report = r.validate(100);
        assert!(report.valid, "{report:?}");
        assert!(close(report.min_throughput, 0.5));
        assert_eq!(report.declared_floor, 0.5);
        assert_eq!(r.rate(1), 1.0);
        assert!(close(r.throughput(2).unwrap(), 0.5));
    }

    #[test]
    fn nominal_table_reproduces_tabulated_throughputs() {
        let r = RateFunction::nominal_table();
        let tp: Vec<f64> = [1, 2, 3, 100].iter().map(|&n| r.throughput(n).unwrap()).collect();
        for (got, want) in tp.iter().zip([1.0, 0.99, 0.9, 0.8]) {
            assert!(close(*got, want), "{got} vs {want}");
        }
        let report = r.validate(100);
        assert!(report.valid, "{report:?}");
        assert!(close(report.min_throughput, 0.8));
        assert_eq!(report.min_throughput_at, 100);
    }

    #[test]
    fn nominal_table_hold_rate_breaks_single_server_far_out() {
        // 0.008 n exceeds 1 from n = 126 on.
        let report = RateFunction::nominal_table().validate(200);
        assert!(!report.valid);
        assert_eq!(
            report.violations,
            vec![Violation::ExceedsUnitThroughput { n: 126, throughput: 126.0 * 0.008 }]
        );
    }

    #[test]
    fn table_interpolates_throughput_and_extends() {
        let t = RateTable::new(vec![(1, 1.0), (3, 0.2)], TableExtension::HoldThroughput).unwrap();
        let r = RateFunction::table(t, 0.6, true).unwrap();
        // throughput 1.0 at n=1, 0.6 at n=3 -> 0.8 at n=2
        assert!(close(r.rate(2), 0.4));
        assert!(close(r.throughput(10).unwrap(), 0.6));
        assert!(r.validate(50).valid);
    }

    #[test]
    fn table_rejects_malformed_input() {
        assert_eq!(RateTable::new(vec![], TableExtension::HoldRate), Err(RateError::EmptyTable));
        assert_eq!(
            RateTable::new(vec![(2, 0.5)], TableExtension::HoldRate),
            Err(RateError::TableMissingFirst)
        );
        assert_eq!(
            RateTable::new(vec![(1, 1.0), (1, 0.5)], TableExtension::HoldRate),
            Err(RateError::DuplicateTableIndex(1))
        );
        assert_eq!(
            RateTable::new(vec![(1, 1.0), (2, 0.0)], TableExtension::HoldRate),
            Err(RateError::NonPositiveRate { n: 2, rate: 0.0 })
        );
    }

    #[test]
    fn throughput_rejects_empty_system() {
        assert_eq!(RateFunction::classical_ps().throughput(0), Err(RateError::ZeroCustomers));
        assert_eq!(RateFunction::classical_ps().throughput(7).unwrap(), 1.0);
        assert_eq!(RateFunction::pure_delay().throughput(5).unwrap(), 5.0);
    }

    #[test]
    fn pure_delay_is_flagged_only_as_single_server() {
        let r = RateFunction::pure_delay();
        assert!(r.validate(100).valid);
        let report = r.with_single_server(true).validate(100);
        assert!(!report.valid);
        assert_eq!(report.violations, vec![Violation::ExceedsUnitThroughput { n: 2, throughput: 2.0 }]);
    }

    #[test]
    fn validator_reports_increasing_rate_and_floor_breach() {
        let t = RateTable::new(vec![(1, 0.5), (2, 0.45)], TableExtension::HoldRate).unwrap();
        // throughput at n=1 is 0.5 < declared 0.9; rate 0.45 -> interpolation is fine.
        let r = RateFunction::table(t, 0.9, true).unwrap();
        let report = r.validate(2);
        assert_eq!(report.violations, vec![Violation::BelowFloor { n: 1, throughput: 0.5, floor: 0.9 }]);

        let up = RateFormula::PowerLaw { scale: 0.1, exponent: -1.0 };
        let r = RateFunction::formula(up, 0.0, false).unwrap();
        assert!(matches!(r.validate(3).violations[0], Violation::Increasing { n: 2, .. }));
    }

    #[test]
    fn constant_throughput_formula() {
        let r = RateFunction::constant_throughput(0.5).unwrap();
        assert_eq!(r.tag(), RateKindTag::CustomFormula);
        assert!(close(r.rate(4), 0.125));
        assert!(r.validate(1000).valid);
        assert!(RateFunction::constant_throughput(0.0).is_err());
    }

    #[test]
    fn dominance_chain_of_catalog() {
        let n_max = 120;
        let half = RateFunction::half_interference();
        let table = RateFunction::nominal_table();
        let ps = RateFunction::classical_ps();
        let delay = RateFunction::pure_delay();
        assert!(half.pointwise_le(&table, n_max));
        assert!(table.pointwise_le(&ps, n_max));
        assert!(ps.pointwise_le(&delay, n_max));
        assert!(!ps.pointwise_le(&half, n_max));
    }
}
