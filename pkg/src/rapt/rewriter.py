"""Axiom-directed normalization of process terms to basic form.

Rewriting works on the canonical n-ary term shapes, so the pure shuffling
laws (commutativity and associativity of alternatives and lock-step
composition, idempotence of alternatives) are baked into construction and
never appear as steps.  Everything else lives in an ordered rule table
applied leftmost-innermost: a rule fires at a node only once nothing fires
inside it, which keeps runs deterministic and lets the operator-elimination
rules assume normalized operands.

Two tables ship.  The ``strong`` table eliminates whole parallel
composition, communication merge, conflict resolution, the conflict
filter, blocking, and hiding, and prunes dead branches and dead runs.  The
``branching`` table adds the silent-absorption laws that are only sound up
to branching equivalence.

Rules whose right-hand side composes leftover tails re-expand the whole
composition inline (tails become ``(x || y) + (x | y)`` directly instead
of going through the whole-parallel operator).  That is deliberate: it
lets a single path order certify termination, with merge and lock-step
sharing one precedence class and whole-parallel sitting strictly above
them.  ``shipped_rules`` exposes ground representative instances and
``lpo_greater`` checks each one decreases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .semantics import suppressed_label
from .terms import (
    Abstract,
    Between,
    Choice,
    Comm,
    ConflictElim,
    Delta,
    Encap,
    Event,
    KeyClash,
    NSTD,
    Par,
    RecRef,
    STD,
    Seq,
    Signature,
    Tau,
    Term,
    TermError,
    Unless,
    alphabet_of,
    canonicalize,
    children,
    choice,
    is_basic,
    par,
    render,
    replace_at,
    seq,
    std_status,
    subterm_at,
)

__all__ = [
    "DEFAULT_PRECEDENCE",
    "FuelExhausted",
    "NoMatch",
    "NotClosed",
    "Precedence",
    "RewriteStep",
    "RewriteTrace",
    "SideConditionFailed",
    "apply_axiom",
    "is_basic",
    "lpo_greater",
    "normalize",
    "rewrite_once",
    "rule_names",
    "shipped_rules",
]


class NotClosed(TermError):
    """Normalization is only defined for terms without recursion references."""


class NoMatch(TermError):
    """The named rule's left-hand shape is absent at the given position."""


class SideConditionFailed(TermError):
    """The shape matched but a side condition ruled the step out."""


class FuelExhausted(TermError):
    """Defensive step bound hit; indicates a non-terminating rule table."""


# --- path order -------------------------------------------------------------

_OPERATORS = frozenset(
    {
        "hide",
        "block",
        "resolve",
        "filter",
        "whole",
        "merge",
        "lockstep",
        "run",
        "branch",
        "atom",
    }
)

_DEFAULT_ORDER = (
    "hide",
    "block",
    "resolve",
    "filter",
    "whole",
    ("merge", "lockstep"),
    "run",
    "branch",
    "atom",
)


@dataclass(frozen=True)
class Precedence:
    """Operator order for the termination certificate, greatest first.

    A nested tuple groups operators into one equal-precedence class (the
    default puts communication merge and lock-step composition together:
    their elimination rules recurse into each other's tails).  Every
    operator appears exactly once, and lock-step > run > branch must form
    the low end of the order, just above the atoms.
    """

    order: tuple = _DEFAULT_ORDER

    def __post_init__(self):
        ranks = {}
        groups = [g if isinstance(g, tuple) else (g,) for g in self.order]
        for i, group in enumerate(groups):
            for sym in group:
                if sym in ranks:
                    raise TermError(f"operator {sym!r} listed twice")
                ranks[sym] = len(groups) - i
        if set(ranks) != _OPERATORS:
            missing = sorted(_OPERATORS - set(ranks)) + sorted(set(ranks) - _OPERATORS)
            raise TermError(f"precedence must cover the operators exactly: {missing}")
        if not (ranks["lockstep"] > ranks["run"] > ranks["branch"]):
            raise TermError("precedence needs lockstep > run > branch as its tail")
        for sym in _OPERATORS - {"branch", "atom"}:
            if ranks[sym] < ranks["branch"]:
                raise TermError(f"only atoms may rank below branch, not {sym!r}")
        object.__setattr__(self, "_rank", ranks)

    def rank(self, symbol: str) -> int:
        return self._rank[symbol]


DEFAULT_PRECEDENCE = Precedence()


def _symbol(t: Term) -> str:
    match t:
        case Abstract():
            return "hide"
        case Encap():
            return "block"
        case ConflictElim():
            return "resolve"
        case Unless():
            return "filter"
        case Between():
            return "whole"
        case Comm():
            return "merge"
        case Par():
            return "lockstep"
        case Seq():
            return "run"
        case Choice():
            return "branch"
    return "atom"


def lpo_greater(s: Term, t: Term, prec: Precedence | None = None) -> bool:
    """Strict lexicographic path order on terms, status left-to-right.

    Operators in the same precedence class compare their argument tuples
    lexicographically, as if they were one symbol.  Atoms are mutually
    incomparable constants below every operator.
    """
    p = prec if prec is not None else DEFAULT_PRECEDENCE
    return s != t and _lpo(s, t, p)


def _lpo(s: Term, t: Term, p: Precedence) -> bool:
    for a in children(s):
        if a == t or _lpo(a, t, p):
            return True
    rs = p.rank(_symbol(s))
    rt = p.rank(_symbol(t))
    if rs < rt:
        return False
    tk = children(t)
    if rs > rt:
        return all(_lpo(s, b, p) for b in tk)
    # equal precedence: lexicographic on arguments, then dominate them all
    return _lex(children(s), tk, p) and all(_lpo(s, b, p) for b in tk)


def _lex(xs: tuple, ys: tuple, p: Precedence) -> bool:
    for a, b in zip(xs, ys):
        if a != b:
            return _lpo(a, b, p)
    return len(xs) > len(ys)


# --- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class RewriteStep:
    """One applied rule: the whole term before and after, and where."""

    rule: str
    path: tuple
    before: Term
    after: Term


@dataclass(frozen=True)
class RewriteTrace:
    steps: tuple = ()

    def replay(self, start: Term) -> Term:
        """Re-check the chain from the canonical form of the start term."""
        cur = canonicalize(start)
        for st in self.steps:
            if st.before != cur:
                raise TermError(f"trace broken at {st.rule}: {render(cur)}")
            cur = st.after
        return cur

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "rule": st.rule,
                    "path": list(st.path),
                    "before": render(st.before),
                    "after": render(st.after),
                },
                sort_keys=True,
            )
            for st in self.steps
        ]
        return "\n".join(lines)


# --- rule functions ---------------------------------------------------------
#
# Each takes (term, sig) and returns the contractum for a root match, or
# None when the left-hand shape is absent.  SideConditionFailed means the
# shape was there but a status condition blocked the step; KeyClash means
# a lock-step merge met histories from different steps.


def _is_unit(t: Term) -> bool:
    # a block: one atom, or a lock-step composition of atoms
    if isinstance(t, (Event, Tau, Delta)):
        return True
    return isinstance(t, Par) and all(
        isinstance(a, (Event, Tau)) for a in t.args
    )


def _unit_keys(t: Term) -> set:
    match t:
        case Event(key=k) | Tau(key=k):
            return set() if k is None else {k}
        case Par(args=args):
            out = set()
            for a in args:
                out |= _unit_keys(a)
            return out
    return set()


def _r_drop_dead_branch(t: Term, sig: Signature):
    # x + delta = x
    if not isinstance(t, Choice):
        return None
    kept = [a for a in t.args if not isinstance(a, Delta)]
    if len(kept) == len(t.args) or not kept:
        return None
    return choice(kept)


def _r_cut_dead_run_forward(t: Term, sig: Signature):
    # delta . x = delta, for unexecuted x: nothing after a deadlock runs
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i, a in enumerate(args):
        if isinstance(a, Delta) and i + 1 < len(args):
            if all(std_status(s) == STD for s in args[i + 1 :]):
                return seq(list(args[: i + 1]))
            raise SideConditionFailed("suffix after deadlock is not all unexecuted")
    return None


def _r_cut_dead_run_reverse(t: Term, sig: Signature):
    # x . delta = delta, for fully executed x: the history is unreachable
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i, a in enumerate(args):
        if isinstance(a, Delta) and i > 0:
            if all(std_status(s) == NSTD for s in args[:i]):
                return seq([Delta()] + list(args[i + 1 :]))
            raise SideConditionFailed("prefix before deadlock is not all executed")
    return None


def _r_distribute_branches_forward(t: Term, sig: Signature):
    # (x + y) . z = x . z + y . z, everything distributed still unexecuted
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i, a in enumerate(args):
        if isinstance(a, Choice) and i + 1 < len(args):
            suffix = args[i + 1 :]
            if all(std_status(s) == STD for s in a.args) and all(
                std_status(s) == STD for s in suffix
            ):
                branches = [seq([b] + list(suffix)) for b in a.args]
                return seq(list(args[:i]) + [choice(branches)])
            raise SideConditionFailed("forward distribution needs unexecuted parts")
    return None


def _r_distribute_branches_reverse(t: Term, sig: Signature):
    # x . (y + z) = x . y + x . z, everything distributed fully executed
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i, a in enumerate(args):
        if isinstance(a, Choice) and i > 0:
            prefix = args[:i]
            if all(std_status(s) == NSTD for s in a.args) and all(
                std_status(s) == NSTD for s in prefix
            ):
                branches = [seq(list(prefix) + [b]) for b in a.args]
                return seq([choice(branches)] + list(args[i + 1 :]))
            raise SideConditionFailed("reverse distribution needs executed parts")
    return None


def _r_expand_whole_parallel(t: Term, sig: Signature):
    # x & y = (x || y) + (x | y)
    if not isinstance(t, Between):
        return None
    return choice([par([t.left, t.right]), Comm(t.left, t.right)])


def _r_dead_lockstep(t: Term, sig: Signature):
    # delta in lock-step poisons the whole composition
    if isinstance(t, Par) and any(isinstance(a, Delta) for a in t.args):
        return Delta()
    return None


def _r_distribute_branches_lockstep(t: Term, sig: Signature):
    # (x + y) || z = (x || z) + (y || z)
    if not isinstance(t, Par):
        return None
    for i, a in enumerate(t.args):
        if isinstance(a, Choice):
            rest = list(t.args[:i]) + list(t.args[i + 1 :])
            return choice([par([b] + rest) for b in a.args])
    return None


def _tails_product(x: Term, y: Term) -> Term:
    # leftover tails run as a fresh whole composition, pre-expanded so the
    # rule's right side stays below it in the path order
    return choice([par([x, y]), Comm(x, y)])


def _combine_forward(u: Term, v: Term):
    """Merge one lock-step pair of unexecuted operands, one being a run."""
    if isinstance(u, Seq) and isinstance(v, Seq):
        hu, tu = u.args[0], u.args[1:]
        hv, tv = v.args[0], v.args[1:]
        if not (_is_unit(hu) and _is_unit(hv)):
            return None
        return seq([par([hu, hv]), _tails_product(seq(list(tu)), seq(list(tv)))])
    if isinstance(v, Seq):
        head, tail = v.args[0], v.args[1:]
        if not (_is_unit(u) and _is_unit(head)):
            return None
        return seq([par([u, head])] + list(tail))
    if isinstance(u, Seq):
        head, tail = u.args[0], u.args[1:]
        if not (_is_unit(v) and _is_unit(head)):
            return None
        return seq([par([head, v])] + list(tail))
    return None


def _combine_reverse(u: Term, v: Term):
    """Mirror image: merge the newest history units at the ends of runs.

    The merged units must carry one shared key; histories from different
    steps cannot have happened together, so that is a KeyClash."""

    def check(a: Term, b: Term):
        ks = _unit_keys(a) | _unit_keys(b)
        if len(ks) > 1:
            raise KeyClash(f"lock-step merge across keys {sorted(ks)}")

    if isinstance(u, Seq) and isinstance(v, Seq):
        xu, eu = u.args[:-1], u.args[-1]
        xv, ev = v.args[:-1], v.args[-1]
        if not (_is_unit(eu) and _is_unit(ev)):
            return None
        check(eu, ev)
        return seq([_tails_product(seq(list(xu)), seq(list(xv))), par([eu, ev])])
    if isinstance(v, Seq):
        pre, ev = v.args[:-1], v.args[-1]
        if not (_is_unit(u) and _is_unit(ev)):
            return None
        check(u, ev)
        return seq(list(pre) + [par([u, ev])])
    if isinstance(u, Seq):
        pre, eu = u.args[:-1], u.args[-1]
        if not (_is_unit(v) and _is_unit(eu)):
            return None
        check(eu, v)
        return seq(list(pre) + [par([eu, v])])
    return None


def _merge_pick(t: Term, want_status: str):
    if not isinstance(t, Par):
        return None
    if any(std_status(a) != want_status for a in t.args):
        return None
    j = next((i for i, a in enumerate(t.args) if isinstance(a, Seq)), None)
    if j is None:
        return ()  # nothing to merge: possibly already a block
    k = 0 if j > 0 else 1
    i1, i2 = min(j, k), max(j, k)
    return i1, i2


def _r_merge_lockstep_heads(t: Term, sig: Signature):
    picked = _merge_pick(t, STD)
    if not picked:
        return None
    i1, i2 = picked
    combined = _combine_forward(t.args[i1], t.args[i2])
    if combined is None:
        return None
    rest = [a for i, a in enumerate(t.args) if i not in (i1, i2)]
    return par([combined] + rest)


def _r_merge_lockstep_tails(t: Term, sig: Signature):
    picked = _merge_pick(t, NSTD)
    if picked == ():
        # all atoms: a well-formed history block shares one key
        keys = set()
        for a in t.args:
            keys |= _unit_keys(a)
        if len(keys) > 1:
            raise KeyClash(f"history block mixes keys {sorted(keys)}")
        return None
    if not picked:
        return None
    i1, i2 = picked
    combined = _combine_reverse(t.args[i1], t.args[i2])
    if combined is None:
        return None
    rest = [a for i, a in enumerate(t.args) if i not in (i1, i2)]
    return par([combined] + rest)


def _r_dead_communication(t: Term, sig: Signature):
    # delta | x = delta; one side all future and the other all history can
    # never fire together either
    if not isinstance(t, Comm):
        return None
    if isinstance(t.left, Delta) or isinstance(t.right, Delta):
        return Delta()
    if {std_status(t.left), std_status(t.right)} == {STD, NSTD}:
        return Delta()
    return None


def _r_distribute_branches_communication(t: Term, sig: Signature):
    # (x + y) | z = (x | z) + (y | z), and mirrored
    if not isinstance(t, Comm):
        return None
    if isinstance(t.left, Choice):
        return choice([Comm(b, t.right) for b in t.left.args])
    if isinstance(t.right, Choice):
        return choice([Comm(t.left, b) for b in t.right.args])
    return None


def _head_label(u: Term):
    # communication merges exactly two single events
    match u:
        case Event(label=lb, key=k):
            return lb, k
        case Tau(key=k):
            return "tau", k
    return None


def _r_communicate_heads(t: Term, sig: Signature):
    if not isinstance(t, Comm):
        return None
    l, r = t.left, t.right
    if isinstance(l, Choice) or isinstance(r, Choice):
        return None
    if std_status(l) != STD or std_status(r) != STD:
        return None

    def split(s):
        return (s.args[0], s.args[1:]) if isinstance(s, Seq) else (s, ())

    h1, t1 = split(l)
    h2, t2 = split(r)
    a1 = _head_label(h1)
    a2 = _head_label(h2)
    if a1 is None or a2 is None:
        return Delta()  # block heads have no pairwise merge
    c = sig.gamma_of(a1[0], a2[0])
    if c is None:
        return Delta()
    if not t1 and not t2:
        return Event(c)
    if t1 and t2:
        rest = _tails_product(seq(list(t1)), seq(list(t2)))
        return seq([Event(c), rest])
    return seq([Event(c)] + list(t1 or t2))


def _r_communicate_tails(t: Term, sig: Signature):
    if not isinstance(t, Comm):
        return None
    l, r = t.left, t.right
    if isinstance(l, Choice) or isinstance(r, Choice):
        return None
    if std_status(l) != NSTD or std_status(r) != NSTD:
        return None

    def split(s):
        return (s.args[:-1], s.args[-1]) if isinstance(s, Seq) else ((), s)

    p1, e1 = split(l)
    p2, e2 = split(r)
    a1 = _head_label(e1)
    a2 = _head_label(e2)
    if a1 is None or a2 is None:
        return Delta()
    if a1[1] != a2[1]:
        return Delta()  # different steps: the pair never fired together
    c = sig.gamma_of(a1[0], a2[0])
    if c is None:
        return Delta()
    merged = Event(c, a1[1])
    if not p1 and not p2:
        return merged
    if p1 and p2:
        rest = _tails_product(seq(list(p1)), seq(list(p2)))
        return seq([rest, merged])
    return seq(list(p1 or p2) + [merged])


def _r_resolve_conflicts_atom(t: Term, sig: Signature):
    if isinstance(t, ConflictElim) and isinstance(t.body, (Event, Tau, Delta)):
        return t.body
    return None


def _r_resolve_conflicts_branches(t: Term, sig: Signature):
    # each alternative survives filtered against all the others
    if not (isinstance(t, ConflictElim) and isinstance(t.body, Choice)):
        return None
    args = t.body.args
    out = []
    for i, b in enumerate(args):
        acc: Term = ConflictElim(b)
        for j, other in enumerate(args):
            if j != i:
                acc = Unless(acc, other)
        out.append(acc)
    return choice(out)


def _r_resolve_conflicts_run(t: Term, sig: Signature):
    if not (isinstance(t, ConflictElim) and isinstance(t.body, Seq)):
        return None
    return seq([ConflictElim(f) for f in t.body.args])


def _r_resolve_conflicts_lockstep(t: Term, sig: Signature):
    if not (isinstance(t, ConflictElim) and isinstance(t.body, Par)):
        return None
    x = t.body.args[0]
    y = par(list(t.body.args[1:]))
    return choice(
        [
            par([Unless(ConflictElim(x), y), y]),
            par([Unless(ConflictElim(y), x), x]),
        ]
    )


def _r_resolve_conflicts_communication(t: Term, sig: Signature):
    if not (isinstance(t, ConflictElim) and isinstance(t.body, Comm)):
        return None
    l, r = t.body.left, t.body.right
    return choice(
        [
            Comm(Unless(ConflictElim(l), r), r),
            Comm(Unless(ConflictElim(r), l), l),
        ]
    )


def _r_filter_atom(t: Term, sig: Signature):
    if not isinstance(t, Unless):
        return None
    left = t.left
    match left:
        case Delta():
            return Delta()
        case Tau():
            return left  # silence is never filtered
        case Event(label=lb, key=k):
            reverse = k is not None
            if suppressed_label(sig, lb, alphabet_of(t.right), reverse):
                return Tau(k)
            return left
    return None


def _r_filter_branches(t: Term, sig: Signature):
    if isinstance(t, Unless) and isinstance(t.left, Choice):
        return choice([Unless(b, t.right) for b in t.left.args])
    return None


def _r_filter_run(t: Term, sig: Signature):
    if isinstance(t, Unless) and isinstance(t.left, Seq):
        return seq([Unless(f, t.right) for f in t.left.args])
    return None


def _r_filter_lockstep(t: Term, sig: Signature):
    if isinstance(t, Unless) and isinstance(t.left, Par):
        return par([Unless(a, t.right) for a in t.left.args])
    return None


def _r_block_atom(t: Term, sig: Signature):
    if not isinstance(t, Encap):
        return None
    match t.body:
        case Event(label=lb):
            return Delta() if lb in t.labels else t.body
        case Tau() | Delta():
            return t.body
    return None


def _r_block_branches(t: Term, sig: Signature):
    if isinstance(t, Encap) and isinstance(t.body, Choice):
        return choice([Encap(t.labels, b) for b in t.body.args])
    return None


def _r_block_run(t: Term, sig: Signature):
    if isinstance(t, Encap) and isinstance(t.body, Seq):
        return seq([Encap(t.labels, f) for f in t.body.args])
    return None


def _r_block_lockstep(t: Term, sig: Signature):
    if isinstance(t, Encap) and isinstance(t.body, Par):
        return par([Encap(t.labels, a) for a in t.body.args])
    return None


def _r_hide_atom(t: Term, sig: Signature):
    if not isinstance(t, Abstract):
        return None
    match t.body:
        case Event(label=lb, key=k):
            # a hidden history keeps its key: the step still happened
            return Tau(k) if lb in t.labels else t.body
        case Tau() | Delta():
            return t.body
    return None


def _r_hide_branches(t: Term, sig: Signature):
    if isinstance(t, Abstract) and isinstance(t.body, Choice):
        return choice([Abstract(t.labels, b) for b in t.body.args])
    return None


def _r_hide_run(t: Term, sig: Signature):
    if isinstance(t, Abstract) and isinstance(t.body, Seq):
        return seq([Abstract(t.labels, f) for f in t.body.args])
    return None


def _r_hide_lockstep(t: Term, sig: Signature):
    if isinstance(t, Abstract) and isinstance(t.body, Par):
        return par([Abstract(t.labels, a) for a in t.body.args])
    return None


def _r_absorb_silent_forward(t: Term, sig: Signature):
    # e . tau = e: invisible and nothing branches on it
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i in range(1, len(args)):
        here = args[i]
        prev = args[i - 1]
        if (
            isinstance(here, Tau)
            and here.key is None
            and isinstance(prev, (Event, Tau))
            and prev.key is None
        ):
            return seq(list(args[:i]) + list(args[i + 1 :]))
    return None


def _r_absorb_silent_reverse(t: Term, sig: Signature):
    # tau . e[m] = e[m]: a skipped pause before recorded history
    if not isinstance(t, Seq):
        return None
    args = t.args
    for i in range(len(args) - 1):
        here = args[i]
        nxt = args[i + 1]
        if (
            isinstance(here, Tau)
            and here.key is None
            and isinstance(nxt, (Event, Tau))
            and nxt.key is not None
        ):
            return seq(list(args[:i]) + list(args[i + 1 :]))
    return None


def _r_absorb_silent_lockstep(t: Term, sig: Signature):
    # x || tau = x
    if not isinstance(t, Par):
        return None
    for i, a in enumerate(t.args):
        if isinstance(a, Tau) and a.key is None:
            return par(list(t.args[:i]) + list(t.args[i + 1 :]))
    return None


def _r_associate_run(t: Term, sig: Signature):
    # (x . y) . z = x . (y . z); canonical terms are pre-flattened, so this
    # only ever fires on raw nested input handed to apply_axiom
    if isinstance(t, Seq) and any(isinstance(a, Seq) for a in t.args):
        return seq(list(t.args))
    return None


def _r_associate_lockstep(t: Term, sig: Signature):
    if isinstance(t, Par) and any(isinstance(a, Par) for a in t.args):
        return par(list(t.args))
    return None


def _r_associate_branches(t: Term, sig: Signature):
    if isinstance(t, Choice) and any(isinstance(a, Choice) for a in t.args):
        return choice(list(t.args))
    return None


_RULES_STRONG = (
    ("drop-dead-branch", _r_drop_dead_branch),
    ("cut-dead-run-forward", _r_cut_dead_run_forward),
    ("cut-dead-run-reverse", _r_cut_dead_run_reverse),
    ("distribute-branches-forward", _r_distribute_branches_forward),
    ("distribute-branches-reverse", _r_distribute_branches_reverse),
    ("expand-whole-parallel", _r_expand_whole_parallel),
    ("dead-lockstep", _r_dead_lockstep),
    ("distribute-branches-lockstep", _r_distribute_branches_lockstep),
    ("merge-lockstep-heads", _r_merge_lockstep_heads),
    ("merge-lockstep-tails", _r_merge_lockstep_tails),
    ("dead-communication", _r_dead_communication),
    ("distribute-branches-communication", _r_distribute_branches_communication),
    ("communicate-heads", _r_communicate_heads),
    ("communicate-tails", _r_communicate_tails),
    ("resolve-conflicts-atom", _r_resolve_conflicts_atom),
    ("resolve-conflicts-branches", _r_resolve_conflicts_branches),
    ("resolve-conflicts-run", _r_resolve_conflicts_run),
    ("resolve-conflicts-lockstep", _r_resolve_conflicts_lockstep),
    ("resolve-conflicts-communication", _r_resolve_conflicts_communication),
    ("filter-atom", _r_filter_atom),
    ("filter-branches", _r_filter_branches),
    ("filter-run", _r_filter_run),
    ("filter-lockstep", _r_filter_lockstep),
    ("block-atom", _r_block_atom),
    ("block-branches", _r_block_branches),
    ("block-run", _r_block_run),
    ("block-lockstep", _r_block_lockstep),
    ("hide-atom", _r_hide_atom),
    ("hide-branches", _r_hide_branches),
    ("hide-run", _r_hide_run),
    ("hide-lockstep", _r_hide_lockstep),
)

_RULES_SILENT = (
    ("absorb-silent-forward", _r_absorb_silent_forward),
    ("absorb-silent-reverse", _r_absorb_silent_reverse),
    ("absorb-silent-lockstep", _r_absorb_silent_lockstep),
)

_RULES_BRANCHING = _RULES_STRONG + _RULES_SILENT

# reachable through apply_axiom only: canonical construction pre-applies them
_RULES_STRUCTURAL = (
    ("associate-branches", _r_associate_branches),
    ("associate-run", _r_associate_run),
    ("associate-lockstep", _r_associate_lockstep),
)

_BY_NAME = {name: fn for name, fn in _RULES_BRANCHING + _RULES_STRUCTURAL}


def _table(ruleset: str):
    if ruleset == "strong":
        return _RULES_STRONG
    if ruleset == "branching":
        return _RULES_BRANCHING
    raise TermError(f"unknown ruleset {ruleset!r}")


def rule_names(ruleset: str = "strong") -> tuple:
    return tuple(name for name, _ in _table(ruleset))


# --- the rewrite relation ---------------------------------------------------


def _find_redex(t: Term, path: tuple, table, sig: Signature):
    for i, c in enumerate(children(t)):
        hit = _find_redex(c, path + (i,), table, sig)
        if hit is not None:
            return hit
    for name, fn in table:
        try:
            nt = fn(t, sig)
        except SideConditionFailed:
            continue
        if nt is not None and nt != t:
            return name, path, nt
    return None


def rewrite_once(t: Term, sig: Signature, ruleset: str = "strong"):
    """Apply the first rule at the leftmost-innermost redex, or None."""
    table = _table(ruleset)
    hit = _find_redex(t, (), table, sig)
    if hit is None:
        return None
    name, path, contractum = hit
    after = canonicalize(replace_at(t, path, contractum))
    return after, RewriteStep(name, path, t, after)


def _mentions_recursion(t: Term) -> bool:
    if isinstance(t, RecRef):
        return True
    return any(_mentions_recursion(c) for c in children(t))


def normalize(
    t: Term, sig: Signature, ruleset: str = "strong", fuel: int = 200_000
):
    """Rewrite t to normal form.  Returns (normal form, trace).

    The result of the strong table on closed direction-coherent terms is
    basic: sums of runs of atom blocks, free of whole-parallel composition,
    communication merge, conflict resolution, the filter, blocking, and
    hiding."""
    cur = canonicalize(t)
    if _mentions_recursion(cur):
        raise NotClosed("cannot normalize a term with recursion references")
    steps = []
    for _ in range(fuel):
        hit = rewrite_once(cur, sig, ruleset)
        if hit is None:
            return cur, RewriteTrace(tuple(steps))
        cur, step = hit
        steps.append(step)
    raise FuelExhausted(f"no normal form within {fuel} steps")


def apply_axiom(t: Term, rule: str, path: tuple, sig: Signature) -> Term:
    """Apply one named rule at one position of t and rebuild the whole term.

    Raises NoMatch when the rule's shape is absent there, and lets
    SideConditionFailed and KeyClash from the rule pass through."""
    fn = _BY_NAME.get(rule)
    if fn is None:
        raise TermError(f"unknown rule {rule!r}; see rule_names()")
    sub = subterm_at(t, path)
    nt = fn(sub, sig)
    if nt is None or nt == sub:
        raise NoMatch(f"{rule} does not match at {list(path)} in {render(t)}")
    return canonicalize(replace_at(t, path, nt))


# --- termination certificates ----------------------------------------------


def _cert_sig() -> Signature:
    return Signature(
        alphabet=frozenset({"a", "b", "c", "d"}),
        gamma={("a", "b"): "c"},
        conflict=frozenset({("a", "c")}),
        priority=frozenset({("c", "b")}),
    )


def shipped_rules() -> tuple:
    """Ground representative instances, one or more per shipped rule.

    Each entry is (rule name, left side, right side) with the right side
    produced by the rule implementation itself, so the certificate checks
    the code that actually runs."""
    sig = _cert_sig()
    a, b, c, d = (Event(x) for x in "abcd")
    a1, b1, c1, d1 = (Event(x, 1) for x in "abcd")
    a2, b2 = Event("a", 2), Event("b", 2)
    reps = [
        ("drop-dead-branch", choice([a, Delta()])),
        ("cut-dead-run-forward", seq([Delta(), a])),
        ("cut-dead-run-reverse", seq([a1, Delta()])),
        ("distribute-branches-forward", seq([choice([a, b]), c])),
        ("distribute-branches-reverse", seq([a1, choice([b1, c1])])),
        ("expand-whole-parallel", Between(a, b)),
        ("dead-lockstep", Par((Delta(), a))),
        ("distribute-branches-lockstep", Par((choice([a, b]), c))),
        ("merge-lockstep-heads", Par((a, seq([b, c])))),
        ("merge-lockstep-heads", Par((seq([a, c]), seq([b, d])))),
        ("merge-lockstep-tails", Par((a2, seq([c1, b2])))),
        ("merge-lockstep-tails", Par((seq([c1, a2]), seq([d1, b2])))),
        ("dead-communication", Comm(a, Delta())),
        ("dead-communication", Comm(a, b1)),
        ("distribute-branches-communication", Comm(choice([a, b]), c)),
        ("communicate-heads", Comm(a, b)),
        ("communicate-heads", Comm(seq([a, d]), b)),
        ("communicate-heads", Comm(seq([a, c]), seq([b, d]))),
        ("communicate-heads", Comm(a, d)),
        ("communicate-tails", Comm(a1, b1)),
        ("communicate-tails", Comm(seq([d1, a2]), b2)),
        ("communicate-tails", Comm(seq([c1, a2]), seq([d1, b2]))),
        ("resolve-conflicts-atom", ConflictElim(a)),
        ("resolve-conflicts-branches", ConflictElim(choice([a, b]))),
        ("resolve-conflicts-run", ConflictElim(seq([a, b]))),
        ("resolve-conflicts-lockstep", ConflictElim(Par((a, b)))),
        ("resolve-conflicts-communication", ConflictElim(Comm(a, b))),
        ("filter-atom", Unless(a, c)),
        ("filter-atom", Unless(a1, c)),
        ("filter-atom", Unless(b, d)),
        ("filter-branches", Unless(choice([a, b]), c)),
        ("filter-run", Unless(seq([a, b]), c)),
        ("filter-lockstep", Unless(Par((a, b)), c)),
        ("block-atom", Encap(frozenset({"a"}), a)),
        ("block-atom", Encap(frozenset({"a"}), b)),
        ("block-atom", Encap(frozenset({"a"}), a1)),
        ("block-branches", Encap(frozenset({"a"}), choice([a, b]))),
        ("block-run", Encap(frozenset({"a"}), seq([a, b]))),
        ("block-lockstep", Encap(frozenset({"a"}), Par((a, b)))),
        ("hide-atom", Abstract(frozenset({"a"}), a)),
        ("hide-atom", Abstract(frozenset({"a"}), a1)),
        ("hide-atom", Abstract(frozenset({"a"}), b)),
        ("hide-branches", Abstract(frozenset({"a"}), choice([a, b]))),
        ("hide-run", Abstract(frozenset({"a"}), seq([a, b]))),
        ("hide-lockstep", Abstract(frozenset({"a"}), Par((a, b)))),
        ("absorb-silent-forward", seq([a, Tau()])),
        ("absorb-silent-reverse", seq([Tau(), a1])),
        ("absorb-silent-lockstep", Par((a, Tau()))),
        ("associate-branches", Choice((Choice((a, b)), c))),
        ("associate-run", Seq((Seq((a, b)), c))),
        ("associate-lockstep", Par((Par((a, b)), c))),
    ]
    out = []
    for name, lhs in reps:
        rhs = _BY_NAME[name](lhs, sig)
        if rhs is None or rhs == lhs:
            raise TermError(f"certificate instance for {name} does not fire")
        out.append((name, lhs, rhs))
    return tuple(out)
