#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use escher::expr::{BinOp, Expr};
use escher::schema::{InvariantClause, INTEGER};
use escher::{Attribute, ClassSchema, Field, ObjectGraph, ObjectRecord, ObjectValue, TypeExpr};
use proptest::prelude::*;
use proptest::sample::Index;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("escher").chain(args.iter().copied());
    let code = escher::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

const LEAVES: [&str; 6] = ["INTEGER", "REAL", "STRING", "BOOLEAN", "PERSON", "ADDRESS"];
const CONTAINERS: [&str; 2] = ["LIST", "ARRAY"];
const NAMES: [&str; 16] = [
    "amount", "balance", "count", "data", "flag", "items", "key", "label", "owner", "parent",
    "rate", "size", "tag", "total", "value", "weight",
];
const FRESH: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn with_marker(ty: TypeExpr, marker: u8) -> TypeExpr {
    match marker {
        1 => TypeExpr::attached(ty),
        2 => TypeExpr::detachable(ty),
        _ => ty,
    }
}

/// Types over the primitive and reference leaves plus `generics`, with
/// optional one-level derivation and attachment markers.
pub fn type_strategy(generics: Vec<String>) -> impl Strategy<Value = TypeExpr> {
    let mut leaves: Vec<TypeExpr> = LEAVES.iter().map(|n| TypeExpr::class(*n)).collect();
    leaves.extend(generics.into_iter().map(TypeExpr::Generic));
    (
        prop::sample::select(leaves),
        prop::option::weighted(0.25, prop::sample::select(CONTAINERS.to_vec())),
        0u8..3,
        0u8..3,
    )
        .prop_map(|(leaf, container, inner_marker, marker)| {
            let ty = match container {
                Some(c) => TypeExpr::derived(TypeExpr::class(c), with_marker(leaf, inner_marker)),
                None => leaf,
            };
            with_marker(ty, marker)
        })
}

fn is_integer(ty: &TypeExpr) -> bool {
    ty.primitive() == Some(INTEGER)
}

type ClauseSeed = (Index, Index, i64, u8);

fn clause_seeds() -> impl Strategy<Value = Vec<ClauseSeed>> {
    prop::collection::vec((any::<Index>(), any::<Index>(), -5i64..5, 0u8..3), 0..3)
}

/// Invariant clauses over the INTEGER attributes of `attrs`.
fn build_invariant(attrs: &[Attribute], seeds: &[ClauseSeed]) -> Vec<InvariantClause> {
    let ints: Vec<&str> = attrs
        .iter()
        .filter(|a| is_integer(&a.ty))
        .map(|a| a.name.as_str())
        .collect();
    if ints.is_empty() {
        return Vec::new();
    }
    seeds
        .iter()
        .enumerate()
        .map(|(i, (a, b, k, shape))| {
            let a = Expr::Attr(ints[a.index(ints.len())].to_string());
            let b = Expr::Attr(ints[b.index(ints.len())].to_string());
            let body = match shape {
                0 => Expr::binary(BinOp::Gt, a, Expr::Int(*k)),
                1 => Expr::binary(BinOp::Ge, Expr::binary(BinOp::Add, a, b), Expr::Int(*k)),
                _ => Expr::binary(
                    BinOp::Or,
                    Expr::Not(Box::new(Expr::binary(BinOp::Eq, a, b))),
                    Expr::binary(BinOp::Le, Expr::Neg(Box::new(Expr::Int(*k))), Expr::Int(3)),
                ),
            };
            InvariantClause {
                tag: format!("inv_{i}"),
                body,
            }
        })
        .collect()
}

fn schema_from(
    generics: Vec<String>,
    attributes: Vec<Attribute>,
    seeds: &[ClauseSeed],
    version: u32,
) -> ClassSchema {
    let mut s = ClassSchema::new("ITEM");
    s.invariant.clauses = build_invariant(&attributes, seeds);
    s.generic_params = generics;
    s.attributes = attributes;
    s.version = version;
    s
}

/// A well-formed class schema with up to 12 attributes.
pub fn schema_strategy() -> impl Strategy<Value = ClassSchema> {
    prop::sample::subsequence(vec!["G".to_string(), "H".to_string()], 0..=2)
        .prop_flat_map(|generics| {
            let names = prop::sample::subsequence(NAMES.to_vec(), 0..=12).prop_shuffle();
            (
                Just(generics.clone()),
                names.prop_flat_map(move |names| {
                    let n = names.len();
                    (
                        Just(names),
                        prop::collection::vec(type_strategy(generics.clone()), n),
                    )
                }),
                clause_seeds(),
                1u32..4,
            )
        })
        .prop_map(|(generics, (names, types), seeds, version)| {
            let attrs = names
                .into_iter()
                .zip(types)
                .map(|(n, t)| Attribute::new(n, t))
                .collect();
            schema_from(generics, attrs, &seeds, version)
        })
}

#[derive(Debug, Clone)]
enum Edit {
    Keep,
    Retype(TypeExpr),
    Rename(Index),
    Remove,
    ToggleAttached,
}

fn edit_strategy(generics: Vec<String>) -> impl Strategy<Value = Edit> {
    prop_oneof![
        3 => Just(Edit::Keep),
        2 => type_strategy(generics).prop_map(Edit::Retype),
        1 => any::<Index>().prop_map(Edit::Rename),
        2 => Just(Edit::Remove),
        1 => Just(Edit::ToggleAttached),
    ]
}

fn mutate(old: &ClassSchema, edits: &[Edit], additions: &[(Index, TypeExpr)], seeds: &[ClauseSeed]) -> ClassSchema {
    let mut taken: BTreeSet<String> = old.attributes.iter().map(|a| a.name.clone()).collect();
    let fresh = |idx: &Index, taken: &mut BTreeSet<String>| {
        let start = idx.index(FRESH.len());
        (0..FRESH.len())
            .map(|k| FRESH[(start + k) % FRESH.len()].to_string())
            .find(|n| !taken.contains(n))
            .inspect(|n| {
                taken.insert(n.clone());
            })
    };
    let mut attrs = Vec::new();
    for (a, edit) in old.attributes.iter().zip(edits) {
        match edit {
            Edit::Keep => attrs.push(a.clone()),
            Edit::Retype(t) => attrs.push(Attribute::new(a.name.clone(), t.clone())),
            Edit::Rename(i) => {
                if let Some(n) = fresh(i, &mut taken) {
                    attrs.push(Attribute::new(n, a.ty.clone()));
                }
            }
            Edit::Remove => {}
            Edit::ToggleAttached => {
                let inner = a.ty.unmarked().clone();
                let ty = if matches!(a.ty, TypeExpr::Attached(_)) {
                    inner
                } else {
                    TypeExpr::attached(inner)
                };
                attrs.push(Attribute::new(a.name.clone(), ty));
            }
        }
    }
    for (i, t) in additions {
        if let Some(n) = fresh(i, &mut taken) {
            attrs.insert(i.index(attrs.len() + 1), Attribute::new(n, t.clone()));
        }
    }
    schema_from(old.generic_params.clone(), attrs, seeds, old.version + 1)
}

fn generics_bound(ty: &TypeExpr, params: &[String]) -> bool {
    match ty {
        TypeExpr::Generic(g) => params.contains(g),
        TypeExpr::Class(_) => true,
        TypeExpr::Derived { base, arg } => generics_bound(base, params) && generics_bound(arg, params),
        TypeExpr::Attached(t) | TypeExpr::Detachable(t) => generics_bound(t, params),
    }
}

/// Pairs of schemas of the same class: either an edited copy (renames,
/// retypes, removals, marker changes, additions) or an unrelated schema.
pub fn schema_pair_strategy() -> impl Strategy<Value = (ClassSchema, ClassSchema)> {
    schema_strategy().prop_flat_map(|old| {
        let n = old.attributes.len();
        let g = old.generic_params.clone();
        let edited = (
            prop::collection::vec(edit_strategy(g.clone()), n),
            prop::collection::vec((any::<Index>(), type_strategy(g)), 0..4),
            clause_seeds(),
        )
            .prop_map({
                let old = old.clone();
                move |(edits, adds, seeds)| mutate(&old, &edits, &adds, &seeds)
            });
        let unrelated = schema_strategy().prop_map({
            let old = old.clone();
            move |mut s| {
                s.generic_params = old.generic_params.clone();
                let keep: Vec<_> = s
                    .attributes
                    .iter()
                    .filter(|a| generics_bound(&a.ty, &old.generic_params))
                    .cloned()
                    .collect();
                s.attributes = keep;
                s.invariant.clauses.clear();
                s
            }
        });
        (Just(old), prop_oneof![4 => edited, 1 => unrelated])
    })
}

fn value_for(kind: u8, n_records: usize, pick: &Index, int: i64, real: f64, text: &str) -> (TypeExpr, ObjectValue) {
    match kind {
        0 => (TypeExpr::class("INTEGER"), ObjectValue::Int(int)),
        1 => (TypeExpr::class("REAL"), ObjectValue::Real(real)),
        2 => (TypeExpr::class("BOOLEAN"), ObjectValue::Bool(int % 2 == 0)),
        3 => (TypeExpr::class("STRING"), ObjectValue::Str(text.to_string())),
        4 => (TypeExpr::class("STRING"), ObjectValue::Void),
        5 => (TypeExpr::class("NODE"), ObjectValue::Void),
        6 => (
            TypeExpr::attached(TypeExpr::class("NODE")),
            ObjectValue::Ref(pick.index(n_records)),
        ),
        _ => (
            TypeExpr::derived(TypeExpr::class("LIST"), TypeExpr::class("NODE")),
            ObjectValue::Ref(pick.index(n_records)),
        ),
    }
}

/// Object graphs of up to 12 records whose references freely form cycles.
pub fn graph_strategy() -> impl Strategy<Value = ObjectGraph> {
    let field = (
        0u8..8,
        any::<Index>(),
        any::<i64>(),
        any::<f64>().prop_filter("finite", |f| f.is_finite()),
        "[ -~]{0,8}|\\PC{0,6}|[\"\\\\\n\t]{1,4}",
    );
    let record = (
        prop::sample::select(vec!["NODE", "ITEM", "BANK_ACCOUNT"]),
        1u32..5,
        prop::sample::subsequence(NAMES.to_vec(), 0..=6),
        prop::collection::vec(field, 6),
    );
    prop::collection::vec(record, 1..12).prop_map(|records| {
        let n = records.len();
        let records = records
            .into_iter()
            .enumerate()
            .map(|(id, (class, version, names, fields))| ObjectRecord {
                id,
                class_name: class.to_string(),
                version,
                fields: names
                    .into_iter()
                    .zip(fields)
                    .map(|(name, (kind, pick, int, real, text))| {
                        let (ty, value) = value_for(kind, n, &pick, int, real, &text);
                        Field::new(name, ty, value)
                    })
                    .collect(),
            })
            .collect();
        ObjectGraph::new(records).unwrap()
    })
}

/// Every edge set on `m` versions, as bitmasks over the ordered pairs.
pub fn all_pairs(m: u32) -> Vec<(u32, u32)> {
    (1..=m)
        .flat_map(|a| (1..=m).filter(move |b| *b != a).map(move |b| (a, b)))
        .collect()
}

pub fn edges_from_mask(pairs: &[(u32, u32)], mask: u64) -> BTreeSet<(u32, u32)> {
    pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, p)| *p)
        .collect()
}

/// Closure by repeated composition until nothing new appears.
pub fn naive_closure(edges: &BTreeSet<(u32, u32)>) -> BTreeSet<(u32, u32)> {
    let mut r = edges.clone();
    loop {
        let mut next = r.clone();
        for &(a, b) in &r {
            for &(c, d) in &r {
                if b == c && a != d {
                    next.insert((a, d));
                }
            }
        }
        if next == r {
            return r;
        }
        r = next;
    }
}
