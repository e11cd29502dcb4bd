use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    eval_invariant, interpret_transformer, InterpretOptions, InvariantOutcome, ObjectGraph,
    RuntimeError,
};
use crate::converter::ConverterRegistry;
use crate::release::Repository;
use crate::value::ObjectValue;

/// Developer-supplied values keyed by `(class, attribute)`.
pub type InputMap = BTreeMap<(String, String), ObjectValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrieveOptions {
    /// Enforce target invariants and `require_attached` checks.
    pub check_assertions: bool,
    /// Chain registered transformers when no direct one exists.
    pub allow_composition: bool,
}

impl Default for RetrieveOptions {
    fn default() -> Self {
        RetrieveOptions {
            check_assertions: true,
            allow_composition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub graph: ObjectGraph,
    pub warnings: Vec<String>,
}

/// Shortest version path `from -> ... -> to` over `edges`; among shortest
/// paths the lexicographically smallest version sequence wins.
pub fn find_path(edges: &BTreeSet<(u32, u32)>, from: u32, to: u32) -> Option<Vec<u32>> {
    if from == to {
        return Some(vec![from]);
    }
    let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(v) = queue.pop_front() {
        // Edges are sorted, so neighbours come out in ascending order.
        for &(_, w) in edges.range((v, 0)..=(v, u32::MAX)) {
            if seen.insert(w) {
                parent.insert(w, v);
                if w == to {
                    let mut path = vec![to];
                    let mut cur = to;
                    while let Some(&p) = parent.get(&cur) {
                        path.push(p);
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(w);
            }
        }
    }
    None
}

/// Migrates every record whose stored version differs from its class's
/// target version and checks each record against its target invariant.
/// Classes absent from `target_versions` stay at their stored version.
pub fn retrieve(
    graph: &ObjectGraph,
    repo: &Repository,
    target_versions: &BTreeMap<String, u32>,
    inputs: &InputMap,
    registry: &ConverterRegistry,
    options: RetrieveOptions,
) -> Result<Retrieved, RuntimeError> {
    graph.validate()?;
    let mut out = graph.clone();
    let mut warnings = Vec::new();
    let interp_options = InterpretOptions {
        check_attached: options.check_assertions,
    };
    for record in out.records.iter_mut() {
        let class = record.class_name.clone();
        let target = target_versions
            .get(&class)
            .copied()
            .unwrap_or(record.version);
        let schema_for = |version: u32| {
            repo.schema(&class, version)
                .ok_or_else(|| RuntimeError::UnknownSchema {
                    class: class.clone(),
                    version,
                })
        };
        let target_schema = schema_for(target)?;
        if record.version != target {
            let handler = repo
                .handler(&class)
                .filter(|h| !h.is_empty())
                .ok_or_else(|| RuntimeError::HandlerMissing(class.clone()))?;
            let missing = || RuntimeError::TransformationMissing {
                class: class.clone(),
                from: record.version,
                to: target,
            };
            let path = if handler.contains_key(&(record.version, target)) {
                vec![record.version, target]
            } else if options.allow_composition {
                let edges: BTreeSet<(u32, u32)> = handler.keys().copied().collect();
                find_path(&edges, record.version, target).ok_or_else(missing)?
            } else {
                return Err(missing());
            };
            if path.len() > 2 {
                warnings.push(format!(
                    "{class} object {}: composed migration {}",
                    record.id,
                    path.iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(" -> ")
                ));
            }
            let class_inputs: BTreeMap<String, ObjectValue> = inputs
                .iter()
                .filter(|((c, _), _)| *c == class)
                .map(|((_, a), v)| (a.clone(), v.clone()))
                .collect();
            for hop in path.windows(2) {
                let t = &handler[&(hop[0], hop[1])];
                let step_schema = schema_for(hop[1])?;
                let step = interpret_transformer(
                    t,
                    record,
                    &class_inputs,
                    registry,
                    step_schema,
                    interp_options,
                )?;
                warnings.extend(step.warnings);
                *record = step.record;
            }
        }
        if options.check_assertions {
            if let InvariantOutcome::Fail(tag) = eval_invariant(record, target_schema)? {
                return Err(RuntimeError::InvariantViolation {
                    class,
                    id: record.id,
                    tag,
                });
            }
        }
    }
    Ok(Retrieved {
        graph: out,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(pairs: &[(u32, u32)]) -> BTreeSet<(u32, u32)> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn direct_and_composed_paths() {
        let e = edges(&[(1, 2), (2, 3)]);
        assert_eq!(find_path(&e, 1, 2), Some(vec![1, 2]));
        assert_eq!(find_path(&e, 1, 3), Some(vec![1, 2, 3]));
        assert_eq!(find_path(&e, 3, 1), None);
        assert_eq!(find_path(&e, 2, 2), Some(vec![2]));
    }

    #[test]
    fn shortest_then_lexicographic() {
        // 1->4 via 3 or via 2: both length 2, pick [1,2,4].
        let e = edges(&[(1, 3), (3, 4), (1, 2), (2, 4), (1, 5), (5, 6), (6, 4)]);
        assert_eq!(find_path(&e, 1, 4), Some(vec![1, 2, 4]));
        // A shorter path beats a lexicographically smaller longer one.
        let e = edges(&[(1, 2), (2, 3), (3, 9), (1, 8), (8, 9)]);
        assert_eq!(find_path(&e, 1, 9), Some(vec![1, 8, 9]));
    }

    #[test]
    fn lexicographic_tie_break_deep() {
        // Two 3-hop paths: 1-2-5-9 and 1-3-4-9; the first is smaller even
        // though 4 < 5 at the third position.
        let e = edges(&[(1, 3), (3, 4), (4, 9), (1, 2), (2, 5), (5, 9)]);
        assert_eq!(find_path(&e, 1, 9), Some(vec![1, 2, 5, 9]));
    }
}
