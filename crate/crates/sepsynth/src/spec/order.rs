//! Ghost-binder placement check for `with` clauses.
//!
//! Specifications that follow the conventional layout list their ghost
//! binders in a predictable order derived from the C parameter list. The
//! checker recovers the intended grouping and reports numbered violations:
//!
//! 1. parameter groups appear in parameter order (the group's leading binder
//!    sits exactly where the scan expects it);
//! 2. constant parameter expressions contribute no binder and are skipped;
//! 3. a non-address parameter contributes exactly one binder;
//! 4. an address parameter contributes `[addr, optional share, contents...]`
//!    contiguously in that order, contents following the field order of the
//!    covering atom in the precondition;
//! 5. ghosts tied to no parameter come only after the last parameter group.
//!
//! The recovered grouping is also what call-site parameter inference
//! consumes, so it is exposed on its own.

use super::{FunSpec, SpatialAtom, SpecExpr};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamGroup {
    /// Constant parameter expression; no binder.
    Const,
    /// Non-address parameter: one value binder (none when an earlier group
    /// already claimed it).
    Value { binder: Option<String> },
    /// Address parameter: the address binder, an optional share binder, and
    /// the content binders of the covering heap atom.
    Address {
        addr: String,
        share: Option<String>,
        contents: Vec<String>,
    },
}

impl ParamGroup {
    pub fn binders(&self) -> Vec<&str> {
        match self {
            ParamGroup::Const => Vec::new(),
            ParamGroup::Value { binder } => binder.iter().map(|s| s.as_str()).collect(),
            ParamGroup::Address { addr, share, contents } => {
                let mut out = vec![addr.as_str()];
                if let Some(sh) = share {
                    out.push(sh.as_str());
                }
                out.extend(contents.iter().map(|s| s.as_str()));
                out
            }
        }
    }
}

/// The grouping of a spec's binders by parameter, plus the trailing extras.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithGrouping {
    pub groups: Vec<ParamGroup>,
    pub extras: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderViolation {
    pub rule: u8,
    pub binder: String,
    pub detail: String,
}

impl fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}, binder {}: {}", self.rule, self.binder, self.detail)
    }
}

/// Find the heap atom in `atoms` rooted at binder `addr` (recursing into
/// conditionals, first match wins) and return (share binder, content binders
/// in field order).
fn covering_atom_binders(
    atoms: &[SpatialAtom],
    addr: &str,
    claimed: &BTreeSet<String>,
) -> Option<(Option<String>, Vec<String>)> {
    for atom in atoms {
        match atom {
            SpatialAtom::PtsTo { addr: a, share, value } => {
                if a == &SpecExpr::Var(addr.to_string()) {
                    let share_binder = match share {
                        SpecExpr::Var(s) if !claimed.contains(s) => Some(s.clone()),
                        _ => None,
                    };
                    let mut contents = Vec::new();
                    let mut seen = claimed.clone();
                    seen.extend(share_binder.clone());
                    for field in value.field_exprs() {
                        let mut vs = BTreeSet::new();
                        field.vars(&mut vs);
                        // Preserve textual field order; a field expression
                        // with several vars contributes them in render order.
                        for v in ordered_vars(field) {
                            if vs.contains(&v) && seen.insert(v.clone()) {
                                contents.push(v);
                            }
                        }
                    }
                    return Some((share_binder, contents));
                }
            }
            SpatialAtom::ListRep { elems, addr: a }
            | SpatialAtom::TreeRep { tree: elems, addr: a } => {
                if a == &SpecExpr::Var(addr.to_string()) {
                    let mut contents = Vec::new();
                    let mut seen = claimed.clone();
                    for v in ordered_vars(elems) {
                        if seen.insert(v.clone()) {
                            contents.push(v);
                        }
                    }
                    return Some((None, contents));
                }
            }
            SpatialAtom::ArraySeg { elems, addr: a, .. } => {
                if a == &SpecExpr::Var(addr.to_string()) {
                    let mut contents = Vec::new();
                    let mut seen = claimed.clone();
                    for v in ordered_vars(elems) {
                        if seen.insert(v.clone()) {
                            contents.push(v);
                        }
                    }
                    return Some((None, contents));
                }
            }
            SpatialAtom::Cond { then_atoms, else_atoms, .. } => {
                if let Some(found) = covering_atom_binders(then_atoms, addr, claimed) {
                    return Some(found);
                }
                if let Some(found) = covering_atom_binders(else_atoms, addr, claimed) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Variables of an expression in left-to-right textual order, deduplicated.
fn ordered_vars(e: &SpecExpr) -> Vec<String> {
    fn walk(e: &SpecExpr, out: &mut Vec<String>) {
        match e {
            SpecExpr::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            _ => {
                // Reuse the set-based collector and order by first occurrence
                // in the rendering; cheap because expressions are tiny.
                let mut all = BTreeSet::new();
                e.vars(&mut all);
                if all.is_empty() {
                    return;
                }
                let rendered = format!("{}", e);
                let mut hits: Vec<(usize, String)> = all
                    .into_iter()
                    .filter_map(|v| find_ident(&rendered, &v).map(|i| (i, v)))
                    .collect();
                hits.sort();
                for (_, v) in hits {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out
}

/// First occurrence of `ident` in `s` as a whole identifier.
fn find_ident(s: &str, ident: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut start = 0;
    while let Some(rel) = s[start..].find(ident) {
        let i = start + rel;
        let before_ok = i == 0 || !is_ident_byte(bytes[i - 1]);
        let end = i + ident.len();
        let after_ok = end >= bytes.len() || !is_ident_byte(bytes[end]);
        if before_ok && after_ok {
            return Some(i);
        }
        start = i + 1;
    }
    None
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Recover the per-parameter binder grouping from the spec. Violations of
/// rule 3 (binder multiplicity) are found here; placement violations are
/// found by the scan in [`check_with_order`].
pub fn compute_groups(spec: &FunSpec) -> (WithGrouping, Vec<OrderViolation>) {
    let mut violations = Vec::new();
    let mut groups = Vec::new();
    let mut claimed: BTreeSet<String> = BTreeSet::new();

    for (i, param) in spec.params.iter().enumerate() {
        let ty = spec.sig.params.get(i).map(|(_, t)| t.clone());
        let is_address = ty.as_ref().map(|t| t.is_address()).unwrap_or(false);
        if param.is_constant() {
            groups.push(ParamGroup::Const);
            continue;
        }
        if is_address {
            match param {
                SpecExpr::Var(addr) => {
                    let fresh_addr = claimed.insert(addr.clone());
                    let (share, contents) = covering_atom_binders(
                        &spec.pre.spatial,
                        addr,
                        &claimed,
                    )
                    .unwrap_or((None, Vec::new()));
                    claimed.extend(share.clone());
                    claimed.extend(contents.iter().cloned());
                    if fresh_addr {
                        groups.push(ParamGroup::Address { addr: addr.clone(), share, contents });
                    } else {
                        // Address binder already claimed by an earlier
                        // parameter; nothing new to place.
                        groups.push(ParamGroup::Const);
                    }
                }
                other => {
                    let vars = ordered_vars(other);
                    let first = vars.first().cloned().unwrap_or_default();
                    violations.push(OrderViolation {
                        rule: 4,
                        binder: first.clone(),
                        detail: format!(
                            "address parameter {} must be a single ghost binder, found `{}`",
                            i + 1,
                            other
                        ),
                    });
                    for v in vars {
                        claimed.insert(v);
                    }
                    groups.push(ParamGroup::Value { binder: None });
                }
            }
        } else {
            let vars: Vec<String> = ordered_vars(param)
                .into_iter()
                .filter(|v| !claimed.contains(v))
                .collect();
            match vars.len() {
                0 => groups.push(ParamGroup::Value { binder: None }),
                1 => {
                    claimed.insert(vars[0].clone());
                    groups.push(ParamGroup::Value { binder: Some(vars[0].clone()) });
                }
                _ => {
                    violations.push(OrderViolation {
                        rule: 3,
                        binder: vars[1].clone(),
                        detail: format!(
                            "non-address parameter {} mentions {} fresh binders, expected one",
                            i + 1,
                            vars.len()
                        ),
                    });
                    for v in &vars {
                        claimed.insert(v.clone());
                    }
                    groups.push(ParamGroup::Value { binder: Some(vars[0].clone()) });
                }
            }
        }
    }

    let extras: Vec<String> = spec
        .with_binders
        .iter()
        .map(|(n, _)| n.clone())
        .filter(|n| !claimed.contains(n))
        .collect();
    (WithGrouping { groups, extras }, violations)
}

/// Check the binder placement rules; on success return the grouping used by
/// call-parameter inference.
pub fn check_with_order(spec: &FunSpec) -> Result<WithGrouping, Vec<OrderViolation>> {
    let (grouping, mut violations) = compute_groups(spec);
    let with_names: Vec<&str> = spec.with_binders.iter().map(|(n, _)| n.as_str()).collect();

    // Scan the clause left to right, consuming one group at a time. A group
    // that sits contiguously at the scan position is correct. A group that
    // sits contiguously elsewhere is misplaced (one rule-1 report, no
    // cascade). A group whose members are scattered gets a rule-1 report if
    // its leading binder is out of place, rule 4 if the leader is right but
    // the interior order is not.
    let find_contig = |expected: &[&str]| -> Option<usize> {
        if expected.is_empty() || with_names.len() < expected.len() {
            return None;
        }
        (0..=with_names.len() - expected.len())
            .find(|&q| with_names[q..q + expected.len()] == *expected)
    };
    let mut pos = 0usize;
    for group in &grouping.groups {
        let expected = group.binders();
        if expected.is_empty() {
            continue;
        }
        if with_names.get(pos..pos + expected.len()) == Some(&expected[..]) {
            pos += expected.len();
            continue;
        }
        if let Some(q) = find_contig(&expected) {
            violations.push(OrderViolation {
                rule: 1,
                binder: expected[0].to_string(),
                detail: format!(
                    "group [{}] found at position {}, expected position {}",
                    expected.join(", "),
                    q + 1,
                    pos + 1
                ),
            });
            pos = q + expected.len();
            continue;
        }
        if with_names.get(pos).copied() == Some(expected[0]) {
            let j = (1..expected.len())
                .find(|&j| with_names.get(pos + j).copied() != Some(expected[j]))
                .unwrap_or(1);
            violations.push(OrderViolation {
                rule: 4,
                binder: expected[j].to_string(),
                detail: format!(
                    "binder {} out of place inside group [{}]",
                    expected[j],
                    expected.join(", ")
                ),
            });
            pos = (pos + expected.len()).min(with_names.len());
        } else {
            violations.push(OrderViolation {
                rule: 1,
                binder: expected[0].to_string(),
                detail: match with_names.get(pos) {
                    Some(got) => format!(
                        "expected binder {} at position {}, found {}",
                        expected[0],
                        pos + 1,
                        got
                    ),
                    None => format!(
                        "expected binder {} but the with clause ended",
                        expected[0]
                    ),
                },
            });
            if let Some(q) = with_names.iter().position(|n| *n == expected[0]) {
                pos = pos.max(q + 1);
            }
        }
    }

    // Everything after the last placed group must be the extras; any extra
    // encountered before that point breaks rule 5.
    for (idx, name) in with_names.iter().enumerate() {
        if grouping.extras.iter().any(|e| e == name) && idx < pos {
            violations.push(OrderViolation {
                rule: 5,
                binder: (*name).to_string(),
                detail: format!(
                    "ghost {} is tied to no parameter but appears before the last parameter group",
                    name
                ),
            });
        }
    }

    violations.sort_by(|a, b| (a.rule, &a.binder).cmp(&(b.rule, &b.binder)));
    violations.dedup();
    if violations.is_empty() {
        Ok(grouping)
    } else {
        Err(violations)
    }
}
