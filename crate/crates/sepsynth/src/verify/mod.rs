//! Goal-directed forward verifier.
//!
//! A function is checked against its specification by symbolic execution:
//! the precondition becomes a symbolic state, statements are stepped through
//! one rule at a time, and every `return` (or fall-through) produces an
//! entailment against the postcondition. Goals the engine cannot advance are
//! *parked* as side conditions instead of failing the run; the caller can
//! inspect them, supply a [`Hint`], and resume.
//!
//! The rule vocabulary reported in traces:
//!
//! | rule           | meaning                                               |
//! |----------------|-------------------------------------------------------|
//! | `if_seq`       | pushed the statements after an `if` into both branches |
//! | `forward_if`   | split on the branch condition                          |
//! | `forward`      | strongest-postcondition step for one plain statement   |
//! | `forward_call` | applied a callee specification at a call site          |
//! | `unfold`       | case-split a list/tree predicate (hint-driven)         |
//! | `assert`       | introduced a cut (hint-driven)                         |
//! | `ite_resolve`  | resolved or split a conditional inside an entailment   |
//! | `entail`       | discharged an entailment goal                          |

mod forward;

use crate::c::{CSignature, Stmt, TypedProgram};
use crate::entail::{prove_entail, EntailGoal, EntailOutcome};
use crate::span::Span;
use crate::spec::{Assertion, PureProp, Sort, SpecEnv, SpecExpr};
use serde::Serialize;
use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fmt;

pub use forward::{if_seq_transform, SymState};

// ---------------------------------------------------------------------------
// Goals
// ---------------------------------------------------------------------------

/// What the current function promises on exit.
#[derive(Debug, Clone)]
pub struct Post {
    /// Post-state assertion over the entry ghosts (plus its own binders).
    pub assertion: Assertion,
    /// Return-value expression, when the function returns one.
    pub ret: Option<SpecExpr>,
}

#[derive(Debug, Clone)]
pub enum GoalKind {
    /// Execute `stmts` from `state`, then establish `post`.
    Hoare {
        state: SymState,
        stmts: Vec<Stmt>,
        post: Post,
    },
    /// A standalone entailment; `sorts` types every name in it.
    Entail {
        sorts: BTreeMap<String, Sort>,
        goal: EntailGoal,
    },
}

#[derive(Debug, Clone)]
pub struct Goal {
    pub kind: GoalKind,
    /// Rules applied along this goal's lineage, oldest first.
    pub trace: Vec<String>,
    /// Source location the goal is currently at.
    pub span: Span,
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GoalKind::Hoare { state, stmts, .. } => {
                write!(f, "{{ ")?;
                for (i, p) in state.hyps.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{}", p)?;
                }
                write!(f, " | ")?;
                if state.heap.is_empty() {
                    write!(f, "emp")?;
                } else {
                    for (i, at) in state.heap.iter().enumerate() {
                        if i > 0 {
                            write!(f, " * ")?;
                        }
                        write!(f, "{}", at)?;
                    }
                }
                write!(f, " }} ")?;
                match stmts.first() {
                    Some(s) => write!(
                        f,
                        "at {} (+{} more) {{ post }}",
                        crate::c::pretty_stmt_head(s),
                        stmts.len().saturating_sub(1)
                    ),
                    None => write!(f, "<fall through> {{ post }}"),
                }
            }
            GoalKind::Entail { goal, .. } => write!(f, "{}", goal),
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "count", rename_all = "snake_case")]
pub enum VerifyStatus {
    Verified,
    SideConditions(usize),
}

/// One parked goal, rendered for the report.
#[derive(Debug, Clone, Serialize)]
pub struct SideCondition {
    pub goal_pretty: String,
    pub trace: Vec<String>,
    pub span: Span,
    /// Why the engine stopped here.
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub function: String,
    pub status: VerifyStatus,
    pub side_conditions: Vec<SideCondition>,
    /// Rule trace of every goal closed successfully, in closure order.
    pub traces: Vec<Vec<String>>,
    /// Evidence lines: which calls were instantiated with what, which
    /// predicates were unfolded automatically.
    pub notes: Vec<String>,
    /// Total number of rule applications across the run.
    pub rules_fired: usize,
    pub wall_ms: u64,
}

impl VerifyReport {
    pub fn is_verified(&self) -> bool {
        self.status == VerifyStatus::Verified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyErr {
    #[error("no specification for function `{0}`")]
    MissingSpec(String),
    #[error("function `{0}` is not defined in the program")]
    MissingFunction(String),
    #[error("signature mismatch for `{fun}`: specification declares `{expected}`, program defines `{found}`")]
    SignatureMismatch {
        fun: String,
        expected: String,
        found: String,
    },
    #[error("internal rule budget exhausted after {0} applications")]
    InternalLimit(usize),
    #[error("hint failed: {0}")]
    HintFailed(String),
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Hard cap on rule applications for one run.
    pub rule_budget: usize,
    /// Fold/unfold budget per entailment and unfold cap per goal lineage.
    pub unfold_depth: usize,
    /// Also require every arithmetic result to fit a 32-bit int. Ghosts are
    /// unbounded integers, so switching this on floods most goals with
    /// range side conditions; it is off unless a run asks for it.
    pub check_int_ranges: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { rule_budget: 10_000, unfold_depth: 8, check_int_ranges: false }
    }
}

// ---------------------------------------------------------------------------
// Hints
// ---------------------------------------------------------------------------

/// User guidance for a parked goal.
#[derive(Debug, Clone, PartialEq)]
pub enum Hint {
    /// `unfold listrep at p` / `unfold treerep at t`: case-split the
    /// predicate rooted at the named variable into its null and non-null
    /// forms.
    Unfold { pred: String, at: String },
    /// `exists q := e`: pin a right-hand existential of an entailment goal.
    Exists { binder: String, value: SpecExpr },
    /// `assert p`: cut — prove `p` separately and assume it from here on.
    Assert { prop: PureProp },
}

/// Parse the hint syntax used by scripts: one of
/// `unfold <pred> at <var>`, `exists <binder> := <expr>`, `assert <prop>`.
pub fn parse_hint(s: &str) -> Result<Hint, String> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("unfold ") {
        let mut it = rest.splitn(2, " at ");
        let pred = it.next().unwrap_or("").trim().to_string();
        let at = it
            .next()
            .ok_or_else(|| "expected `unfold <pred> at <var>`".to_string())?
            .trim()
            .to_string();
        if pred != "listrep" && pred != "treerep" {
            return Err(format!("unknown predicate `{}`; expected listrep or treerep", pred));
        }
        if at.is_empty() {
            return Err("expected a variable after `at`".into());
        }
        return Ok(Hint::Unfold { pred, at });
    }
    if let Some(rest) = s.strip_prefix("exists ") {
        let mut it = rest.splitn(2, ":=");
        let binder = it.next().unwrap_or("").trim().to_string();
        let value_src = it
            .next()
            .ok_or_else(|| "expected `exists <binder> := <expr>`".to_string())?;
        let value = crate::spec::parse::parse_expr(value_src).map_err(|e| e.to_string())?;
        if binder.is_empty() {
            return Err("expected a binder before `:=`".into());
        }
        return Ok(Hint::Exists { binder, value });
    }
    if let Some(rest) = s.strip_prefix("assert ") {
        let prop = crate::spec::parse::parse_prop(rest).map_err(|e| e.to_string())?;
        return Ok(Hint::Assert { prop });
    }
    Err(format!("unrecognized hint `{}`", s))
}

// ---------------------------------------------------------------------------
// The worklist driver
// ---------------------------------------------------------------------------

pub(crate) struct Ctx<'a> {
    pub env: &'a SpecEnv,
    pub cfg: &'a VerifyConfig,
    pub rules_fired: usize,
    /// Human-readable evidence: call instantiations, automatic unfoldings.
    pub notes: Vec<String>,
}

/// A stepped goal either closes, spawns successors, or parks.
pub(crate) struct StepOut {
    pub closed: Vec<Vec<String>>,
    pub next: Vec<Goal>,
    pub parked: Vec<(Goal, String)>,
}

impl StepOut {
    pub(crate) fn closed(trace: Vec<String>) -> StepOut {
        StepOut { closed: vec![trace], next: Vec::new(), parked: Vec::new() }
    }

    pub(crate) fn next(goals: Vec<Goal>) -> StepOut {
        StepOut { closed: Vec::new(), next: goals, parked: Vec::new() }
    }

    pub(crate) fn park(goal: Goal, why: impl Into<String>) -> StepOut {
        StepOut { closed: Vec::new(), next: Vec::new(), parked: vec![(goal, why.into())] }
    }
}

/// Result of a verification run; keeps the parked goals so hints can resume
/// from exactly where the engine stopped.
#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub report: VerifyReport,
    parked: Vec<Goal>,
}

impl VerifyOutcome {
    /// The parked goal behind side condition `idx`, if any.
    pub fn parked_goal(&self, idx: usize) -> Option<&Goal> {
        self.parked.get(idx)
    }

    /// Apply a hint to side condition `idx` and resume verification of that
    /// goal. Side conditions the hint does not touch are carried over; the
    /// resumed goal's descendants are stepped to completion.
    pub fn resolve(
        &self,
        idx: usize,
        hint: &Hint,
        env: &SpecEnv,
        cfg: &VerifyConfig,
    ) -> Result<VerifyOutcome, VerifyErr> {
        let started = std::time::Instant::now();
        let goal = self
            .parked
            .get(idx)
            .ok_or_else(|| {
                VerifyErr::HintFailed(format!(
                    "no side condition #{} (report has {})",
                    idx,
                    self.parked.len()
                ))
            })?
            .clone();
        let seeds = apply_hint(goal, hint)?;
        let mut ctx = Ctx { env, cfg, rules_fired: 0, notes: Vec::new() };
        let mut run = run_worklist(seeds.into_iter().collect(), &mut ctx)?;

        let mut side_conditions: Vec<SideCondition> = Vec::new();
        let mut parked: Vec<Goal> = Vec::new();
        for (i, sc) in self.report.side_conditions.iter().enumerate() {
            if i != idx {
                side_conditions.push(sc.clone());
                parked.push(self.parked[i].clone());
            }
        }
        side_conditions.append(&mut run.side_conditions);
        parked.append(&mut run.parked);

        let mut traces = self.report.traces.clone();
        traces.append(&mut run.traces);
        let mut notes = self.report.notes.clone();
        notes.append(&mut ctx.notes);

        let status = if side_conditions.is_empty() {
            VerifyStatus::Verified
        } else {
            VerifyStatus::SideConditions(side_conditions.len())
        };
        Ok(VerifyOutcome {
            report: VerifyReport {
                function: self.report.function.clone(),
                status,
                side_conditions,
                traces,
                notes,
                rules_fired: self.report.rules_fired + ctx.rules_fired,
                wall_ms: self.report.wall_ms + started.elapsed().as_millis() as u64,
            },
            parked,
        })
    }
}

struct RunOut {
    traces: Vec<Vec<String>>,
    side_conditions: Vec<SideCondition>,
    parked: Vec<Goal>,
}

fn run_worklist(mut work: VecDeque<Goal>, ctx: &mut Ctx) -> Result<RunOut, VerifyErr> {
    let mut out = RunOut { traces: Vec::new(), side_conditions: Vec::new(), parked: Vec::new() };
    while let Some(goal) = work.pop_front() {
        if ctx.rules_fired > ctx.cfg.rule_budget {
            return Err(VerifyErr::InternalLimit(ctx.rules_fired));
        }
        let stepped = forward::step(goal, ctx)?;
        out.traces.extend(stepped.closed);
        // FIFO: successors go to the back, in order.
        for g in stepped.next {
            work.push_back(g);
        }
        for (g, why) in stepped.parked {
            out.side_conditions.push(SideCondition {
                goal_pretty: g.to_string(),
                trace: g.trace.clone(),
                span: g.span,
                reason: why,
            });
            out.parked.push(g);
        }
    }
    Ok(out)
}

/// Check `fun` in `prog` against its specification in `env`.
pub fn verify(
    prog: &TypedProgram,
    fun: &str,
    env: &SpecEnv,
    cfg: &VerifyConfig,
) -> Result<VerifyOutcome, VerifyErr> {
    let started = std::time::Instant::now();
    let def = prog
        .program()
        .fun(fun)
        .ok_or_else(|| VerifyErr::MissingFunction(fun.to_string()))?;
    let spec = env
        .specs
        .get(fun)
        .ok_or_else(|| VerifyErr::MissingSpec(fun.to_string()))?;
    let sig = CSignature::of_fundef(def);
    if !spec.sig.matches(&sig) {
        return Err(VerifyErr::SignatureMismatch {
            fun: fun.to_string(),
            expected: spec.sig.render(),
            found: sig.render(),
        });
    }

    // Entry state: ghosts are the spec binders themselves, C parameters hold
    // the declared parameter expressions, the heap is the precondition.
    let mut ghosts: BTreeMap<String, Sort> = BTreeMap::new();
    for (n, s) in spec.with_binders.iter().chain(&spec.pre.exists) {
        ghosts.insert(n.clone(), *s);
    }
    let mut locals = BTreeMap::new();
    for (param, value) in def.params.iter().zip(&spec.params) {
        locals.insert(param.name.clone(), value.clone());
    }
    let state = SymState {
        hyps: spec.pre.pure.clone(),
        locals,
        heap: spec.pre.spatial.clone(),
        ghosts,
        fresh: 0,
        unfolds: 0,
    };
    let post = Post { assertion: spec.post.clone(), ret: spec.ret.clone() };
    let root = Goal {
        kind: GoalKind::Hoare { state, stmts: def.body.clone(), post },
        trace: Vec::new(),
        span: def.span,
    };

    let mut ctx = Ctx { env, cfg, rules_fired: 0, notes: Vec::new() };
    let run = run_worklist(VecDeque::from([root]), &mut ctx)?;
    let status = if run.side_conditions.is_empty() {
        VerifyStatus::Verified
    } else {
        VerifyStatus::SideConditions(run.side_conditions.len())
    };
    Ok(VerifyOutcome {
        report: VerifyReport {
            function: fun.to_string(),
            status,
            side_conditions: run.side_conditions,
            traces: run.traces,
            notes: ctx.notes,
            rules_fired: ctx.rules_fired,
            wall_ms: started.elapsed().as_millis() as u64,
        },
        parked: run.parked,
    })
}

// ---------------------------------------------------------------------------
// Hint application
// ---------------------------------------------------------------------------

fn apply_hint(mut goal: Goal, hint: &Hint) -> Result<Vec<Goal>, VerifyErr> {
    match hint {
        Hint::Unfold { pred, at } => forward::apply_unfold_hint(goal, pred, at),
        Hint::Exists { binder, value } => {
            let GoalKind::Entail { goal: ref mut egoal, .. } = goal.kind else {
                return Err(VerifyErr::HintFailed(
                    "`exists` hints apply to entailment goals".into(),
                ));
            };
            if !egoal.rhs.exists.iter().any(|(n, _)| n == binder) {
                return Err(VerifyErr::HintFailed(format!(
                    "`{}` is not an existential of the goal's right-hand side",
                    binder
                )));
            }
            egoal.rhs.pure.push(PureProp::eq(SpecExpr::Var(binder.clone()), value.clone()));
            goal.trace.push("exists".into());
            Ok(vec![goal])
        }
        Hint::Assert { prop } => {
            let (sorts, hyps) = match &goal.kind {
                GoalKind::Hoare { state, .. } => (state.ghosts.clone(), state.hyps.clone()),
                GoalKind::Entail { sorts, goal } => (sorts.clone(), goal.hyps.clone()),
            };
            let cut = Goal {
                kind: GoalKind::Entail {
                    sorts,
                    goal: EntailGoal {
                        hyps,
                        lhs: Assertion::emp(),
                        rhs: Assertion {
                            exists: Vec::new(),
                            pure: vec![prop.clone()],
                            spatial: Vec::new(),
                        },
                    },
                },
                trace: {
                    let mut t = goal.trace.clone();
                    t.push("assert".into());
                    t
                },
                span: goal.span,
            };
            match &mut goal.kind {
                GoalKind::Hoare { state, .. } => state.hyps.push(prop.clone()),
                GoalKind::Entail { goal: egoal, .. } => egoal.hyps.push(prop.clone()),
            }
            goal.trace.push("assert".into());
            Ok(vec![cut, goal])
        }
    }
}

// ---------------------------------------------------------------------------
// Entailment goals
// ---------------------------------------------------------------------------

/// Discharge an entailment goal, recording `ite_resolve` when the proof went
/// through a conditional on either side.
pub(crate) fn step_entail(mut goal: Goal, ctx: &mut Ctx) -> StepOut {
    let GoalKind::Entail { ref sorts, goal: ref egoal } = goal.kind else {
        unreachable!("step_entail on a non-entailment goal");
    };
    match prove_entail(sorts, &egoal.hyps, &egoal.lhs, &egoal.rhs) {
        EntailOutcome::Proved { log, .. } => {
            let touched_ite = log.iter().any(|l| {
                l.contains("conditional resolved")
                    || l.contains("conditional decided")
                    || l.contains("split on")
            });
            if touched_ite {
                goal.trace.push("ite_resolve".into());
                ctx.rules_fired += 1;
            }
            goal.trace.push("entail".into());
            ctx.rules_fired += 1;
            StepOut::closed(goal.trace)
        }
        EntailOutcome::Residual { goal: residual, stage, .. } => {
            let why = format!("entailment stuck at {} on: {}", stage, residual);
            StepOut::park(goal, why)
        }
    }
}
