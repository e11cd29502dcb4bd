//! p-evolution-robustness: how many ordered version pairs of a class can be
//! bridged by chaining declared transformation functions.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::release::Repository;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolutionHistory {
    pub class_name: String,
    /// Number of versions `m`; versions are `1..=m`.
    pub versions: u32,
    pub edges: BTreeSet<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerError {
    #[error("InvalidHistory {class}: {reason}")]
    InvalidHistory { class: String, reason: String },
    #[error("DegenerateHistory {0}")]
    DegenerateHistory(String),
    #[error("UnknownVersion {0} {1}")]
    UnknownVersion(String, u32),
    #[error("EmptyRelease")]
    EmptyRelease,
    #[error("UnknownClass {0}")]
    UnknownClass(String),
    #[error("HistSyntax line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

impl EvolutionHistory {
    pub fn new(
        class_name: impl Into<String>,
        versions: u32,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, PerError> {
        let h = EvolutionHistory {
            class_name: class_name.into(),
            versions,
            edges: edges.into_iter().collect(),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), PerError> {
        let bad = |reason: String| PerError::InvalidHistory {
            class: self.class_name.clone(),
            reason,
        };
        if self.versions == 0 {
            return Err(bad("a class has at least one version".into()));
        }
        for &(a, b) in &self.edges {
            if a == b {
                return Err(bad(format!("self loop on version {a}")));
            }
            if !(1..=self.versions).contains(&a) || !(1..=self.versions).contains(&b) {
                return Err(bad(format!("edge {a} -> {b} outside 1..={}", self.versions)));
            }
        }
        Ok(())
    }

    /// Transitive closure of the edges, without self pairs.
    pub fn closure(&self) -> BTreeSet<(u32, u32)> {
        closure(self.versions, &self.edges)
    }
}

/// Reachability by depth-first search from every version.
pub fn closure(m: u32, edges: &BTreeSet<(u32, u32)>) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for start in 1..=m {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(_, w) in edges.range((v, 0)..=(v, u32::MAX)) {
                if seen.insert(w) {
                    out.insert((start, w));
                    stack.push(w);
                }
            }
        }
    }
    out
}

fn ratio(num: usize, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `|closure| / m(m-1)`; a single-version class counts as fully robust.
pub fn per_class(history: &EvolutionHistory) -> BigRational {
    let m = u64::from(history.versions);
    if m <= 1 {
        return BigRational::one();
    }
    ratio(history.closure().len(), m * (m - 1))
}

/// Closure pairs touching `v`, out of the `2(m-1)` possible.
pub fn per_version(history: &EvolutionHistory, v: u32) -> Result<BigRational, PerError> {
    if history.versions <= 1 {
        return Err(PerError::DegenerateHistory(history.class_name.clone()));
    }
    if !(1..=history.versions).contains(&v) {
        return Err(PerError::UnknownVersion(history.class_name.clone(), v));
    }
    let touching = history
        .closure()
        .into_iter()
        .filter(|&(a, b)| a == v || b == v)
        .count();
    Ok(ratio(touching, 2 * (u64::from(history.versions) - 1)))
}

/// Unweighted mean of the class PERs.
pub fn per_release(histories: &[EvolutionHistory]) -> Result<BigRational, PerError> {
    if histories.is_empty() {
        return Err(PerError::EmptyRelease);
    }
    let sum = histories
        .iter()
        .map(per_class)
        .fold(BigRational::zero(), |acc, x| acc + x);
    Ok(sum / BigInt::from(histories.len()))
}

/// Two decimal places, halves rounded up.
pub fn render_decimal(r: &BigRational) -> String {
    let hundred = BigInt::from(100);
    let scaled = r * BigRational::from_integer(hundred.clone());
    let rounded = (scaled + BigRational::new(BigInt::one(), BigInt::from(2))).floor();
    let n = rounded.to_integer();
    let sign = if n < BigInt::zero() { "-" } else { "" };
    let n = if n < BigInt::zero() { -n } else { n };
    let whole = &n / &hundred;
    let frac = &n % &hundred;
    format!("{sign}{whole}.{frac:0>2}")
}

/// Version count is the latest tag; edges are the registered transformers.
pub fn history_from_repository(repo: &Repository, class: &str) -> Result<EvolutionHistory, PerError> {
    let versions = repo
        .versions(class)
        .last()
        .copied()
        .ok_or_else(|| PerError::UnknownClass(class.to_string()))?;
    let edges: BTreeSet<(u32, u32)> = repo
        .handler(class)
        .map(|h| h.keys().copied().collect())
        .unwrap_or_default();
    EvolutionHistory::new(class, versions, edges)
}

/// Class name, `versions` value, edges and the line of the `class` header.
type PendingClass = (String, Option<u32>, BTreeSet<(u32, u32)>, usize);

/// Parses one or more `class / versions / tf` blocks.
pub fn parse_histories(text: &str) -> Result<Vec<EvolutionHistory>, PerError> {
    let mut out: Vec<EvolutionHistory> = Vec::new();
    let mut pending: Option<PendingClass> = None;
    let finish = |p: PendingClass| {
        let (name, versions, edges, line) = p;
        let versions = versions.ok_or_else(|| PerError::Syntax {
            line,
            reason: format!("class {name} has no `versions` line"),
        })?;
        EvolutionHistory::new(name, versions, edges)
    };
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split("--").next().unwrap_or("").trim();
        let err = |reason: String| PerError::Syntax { line: n, reason };
        let num = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad number `{s}`")));
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[..] {
            [] => {}
            ["class", name] => {
                if let Some(p) = pending.take() {
                    out.push(finish(p)?);
                }
                if out.iter().any(|h| h.class_name == name) {
                    return Err(err(format!("class {name} listed twice")));
                }
                pending = Some((name.to_string(), None, BTreeSet::new(), n));
            }
            ["versions", m] => {
                let p = pending.as_mut().ok_or_else(|| err("`versions` before `class`".into()))?;
                if p.1.is_some() {
                    return Err(err("duplicate `versions`".into()));
                }
                p.1 = Some(num(m)?);
            }
            ["tf", a, b] => {
                let p = pending.as_mut().ok_or_else(|| err("`tf` before `class`".into()))?;
                p.2.insert((num(a)?, num(b)?));
            }
            _ => return Err(err(format!("unrecognised line `{line}`"))),
        }
    }
    if let Some(p) = pending.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

/// `per <class> = 0.xx` lines followed by `release per = 0.xx`.
pub fn report(histories: &[EvolutionHistory]) -> Result<String, PerError> {
    let mut out = String::new();
    for h in histories {
        let _ = writeln!(out, "per {} = {}", h.class_name, render_decimal(&per_class(h)));
    }
    let _ = writeln!(out, "release per = {}", render_decimal(&per_release(histories)?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn hist(m: u32, edges: &[(u32, u32)]) -> EvolutionHistory {
        EvolutionHistory::new("C", m, edges.iter().copied()).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(per_class(&hist(2, &[(1, 2)])), q(1, 2));
        assert_eq!(per_class(&hist(5, &[(1, 2), (2, 3), (3, 4), (4, 5)])), q(1, 2));
        let arraylist = hist(5, &[(1, 2), (2, 1), (1, 3), (2, 3)]);
        assert_eq!(arraylist.closure().len(), 4);
        assert_eq!(per_class(&arraylist), q(1, 5));
        assert_eq!(per_version(&arraylist, 5).unwrap(), q(0, 1));
        assert_eq!(per_version(&hist(2, &[(1, 2)]), 1).unwrap(), q(1, 2));
    }

    #[test]
    fn extremes() {
        let complete: Vec<_> = (1..=4)
            .flat_map(|a| (1..=4).filter(move |b| *b != a).map(move |b| (a, b)))
            .collect();
        assert_eq!(per_class(&hist(4, &complete)), q(1, 1));
        assert_eq!(per_version(&hist(4, &complete), 3).unwrap(), q(1, 1));
        assert_eq!(per_class(&hist(4, &[])), q(0, 1));
        assert_eq!(per_class(&hist(1, &[])), q(1, 1));
        assert_eq!(
            per_version(&hist(1, &[]), 1),
            Err(PerError::DegenerateHistory("C".into()))
        );
    }

    #[test]
    fn mixed_directions_skip_self_pairs() {
        let h = hist(3, &[(1, 2), (2, 1), (2, 3)]);
        assert_eq!(
            h.closure(),
            BTreeSet::from([(1, 2), (1, 3), (2, 1), (2, 3)])
        );
    }

    #[test]
    fn release_mean() {
        assert_eq!(per_release(&[]), Err(PerError::EmptyRelease));
        let zero = hist(3, &[]);
        let one = hist(2, &[(1, 2), (2, 1)]);
        assert_eq!(per_release(&[zero, one]).unwrap(), q(1, 2));
    }

    #[test]
    fn invalid_histories() {
        assert!(EvolutionHistory::new("C", 3, [(1, 1)]).is_err());
        assert!(EvolutionHistory::new("C", 3, [(1, 4)]).is_err());
        assert!(EvolutionHistory::new("C", 0, []).is_err());
    }

    #[test]
    fn decimals() {
        assert_eq!(render_decimal(&q(1, 5)), "0.20");
        assert_eq!(render_decimal(&q(1, 2)), "0.50");
        assert_eq!(render_decimal(&q(1, 1)), "1.00");
        assert_eq!(render_decimal(&q(1, 3)), "0.33");
        assert_eq!(render_decimal(&q(1, 200)), "0.01");
        assert_eq!(render_decimal(&q(2, 3)), "0.67");
        assert_eq!(render_decimal(&q(0, 1)), "0.00");
    }

    #[test]
    fn hist_file() {
        let text = "class ArrayList\nversions 5\ntf 1 2\ntf 2 1\ntf 1 3\ntf 2 3\n\nclass Solo -- one version\nversions 1\n";
        let hs = parse_histories(text).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(
            report(&hs).unwrap(),
            "per ArrayList = 0.20\nper Solo = 1.00\nrelease per = 0.60\n"
        );
        assert!(matches!(
            parse_histories("class A\ntf 1 2\n"),
            Err(PerError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_histories("versions 2\n"),
            Err(PerError::Syntax { line: 1, .. })
        ));
    }
}
