"""Seeded soundness suites for the shipped algebraic laws.

Every law is an equation schema over metavariables.  An instance fills
the metavariables with small random closed terms that meet the law's
side conditions by construction, then both sides are explored as raw
operator states (no rewriting first: that would test the rewriter
against itself) and compared under every equivalence the law's table is
sound for.  The core, parallelism, and encapsulation tables run under
the strong forward-reverse kinds; the silent-step and abstraction
tables run under the rooted branching kinds.

Reports are plain data and serialize deterministically: the same seed
and flags give byte-identical output.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Callable

from .equivalence import EquivKind, check
from .semantics import Budget, build_lts
from .terms import (
    Abstract,
    Between,
    Choice,
    Comm,
    ConflictElim,
    Delta,
    Encap,
    Event,
    Par,
    Seq,
    Signature,
    Tau,
    Term,
    TermError,
    Unless,
    canonicalize,
    render,
)

STRONG_KINDS = ("fr-step", "fr-pomset", "fr-hp")
BRANCHING_KINDS = ("rb-fr-step", "rb-fr-pomset", "rb-fr-hp")
TABLE_ORDER = ("core", "parallelism", "encapsulation", "silent", "abstraction")
_BRANCHING_TABLES = frozenset({"silent", "abstraction"})

REJECTION_CAP = 1000


def default_signature() -> Signature:
    """Three labels with one communication, one conflict, and a priority
    chain arranged so every conditioned law has instances: c
    communicates out of a|b, c conflicts with a, and c < b < a."""
    return Signature(
        alphabet=frozenset({"a", "b", "c"}),
        gamma={("a", "b"): "c"},
        conflict=frozenset({("a", "c")}),
        priority=frozenset({("c", "b"), ("b", "a")}),
    )


def table_kinds(table: str, pomset_k: int = 4, wrong_kind: bool = False):
    """The equivalences a table is checked under; wrong_kind swaps the
    family, turning soundness runs into negative controls."""
    branching = (table in _BRANCHING_TABLES) != wrong_kind
    names = BRANCHING_KINDS if branching else STRONG_KINDS
    return tuple(EquivKind(n, pomset_k) for n in names)


# --- random instantiation -------------------------------------------------------


def _labels(sig: Signature):
    return sorted(sig.alphabet)


def _pick_label(rng, sig) -> str:
    return rng.choice(_labels(sig))


def _label_set(rng, sig, avoid=frozenset()) -> frozenset:
    pool = [l for l in _labels(sig) if l not in avoid]
    if not pool:
        return frozenset()
    n = rng.randint(1, max(len(pool) - 1, 1))
    return frozenset(rng.sample(pool, min(n, len(pool))))


def _executed_labels(t: Term) -> frozenset:
    """Labels of the events a term has already performed."""
    from .terms import children

    out = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Event) and cur.key is not None:
            out.add(cur.label)
        stack.extend(children(cur))
    return frozenset(out)


def _gamma_pair(rng, sig):
    """A communicating label pair and its result, randomly oriented."""
    pairs = sorted(sig.gamma.items())
    if not pairs:
        raise TermError("the signature defines no communications")
    (l1, l2), g = rng.choice(pairs)
    return (l2, l1, g) if rng.random() < 0.5 else (l1, l2, g)


def _conflict_pair(rng, sig):
    pairs = sorted(sig.conflict)
    if not pairs:
        raise TermError("the signature defines no conflicts")
    f, g = rng.choice(pairs)
    return (g, f) if rng.random() < 0.5 else (f, g)


def _bystander_triples(sig: Signature, keyed: bool):
    """(e1, e2, e3) with e1, e2 in conflict and e3 strictly above e2 in
    the priority order (strictly below once executed: undoing flips the
    comparison).  e3 must be conflict-free: a third label that is itself
    contested, or that sits exactly at e2, also meets the written side
    condition but falls to the suppression laws instead."""
    contested = {l for pair in sig.conflict for l in pair}
    out = []
    for f, g in sorted(sig.conflict):
        for e1, e2 in ((f, g), (g, f)):
            for e3 in sorted(sig.alphabet):
                if e3 in contested:
                    continue
                ok = sig.prio_lt(e3, e2) if keyed else sig.prio_lt(e2, e3)
                if ok:
                    out.append((e1, e2, e3))
    return out


def _std_term(rng, sig, depth: int, labels=None) -> Term:
    """Random unexecuted closed term, biased small.  With labels given,
    events draw from that pool instead of the whole alphabet."""
    pick = (lambda: rng.choice(labels)) if labels else (lambda: _pick_label(rng, sig))
    if depth <= 0 or rng.random() < 0.40:
        roll = rng.random()
        if roll < 0.80:
            return Event(pick())
        if roll < 0.90:
            return Tau()
        return Delta()
    roll = rng.random()
    sub = lambda: _std_term(rng, sig, depth - 1, labels)
    if roll < 0.30:
        return Choice((sub(), sub()))
    if roll < 0.60:
        return Seq((sub(), sub()))
    if roll < 0.75:
        return Par((sub(), sub()))
    if roll < 0.82:
        return Between(sub(), sub())
    if roll < 0.88:
        return Comm(sub(), sub())
    if roll < 0.92:
        return ConflictElim(sub())
    if roll < 0.96:
        return Encap(frozenset({pick()}), sub())
    return Abstract(frozenset({pick()}), sub())


def _comm_free_pool(rng, sig):
    """Random maximal label pool no two members of which (nor a member
    with itself) communicate."""
    labels = sorted(sig.alphabet)
    rng.shuffle(labels)
    pool = []
    for l in labels:
        if all(sig.gamma_of(l, p) is None for p in pool + [l]):
            pool.append(l)
    return tuple(sorted(pool))


def _nstd_shape(rng, sig, budget: int):
    """Unkeyed shape one complete run of which consumes at most `budget`
    keys.  Returns (shape, keys used)."""
    if budget <= 1 or rng.random() < 0.5:
        roll = rng.random()
        if roll < 0.70:
            return Event(_pick_label(rng, sig)), 1
        if roll < 0.82:
            return Tau(), 1
        # a lock-step pair burns a single shared key
        return Par((Event(_pick_label(rng, sig)), Event(_pick_label(rng, sig)))), 1
    # no keyed alternatives: a state records the one run taken, and the
    # step relations never produce a committed choice with live siblings
    left, lu = _nstd_shape(rng, sig, budget - 1)
    right, ru = _nstd_shape(rng, sig, budget - lu)
    return Seq((left, right)), lu + ru


def _stamp(t: Term, k: int):
    """Key the shape as one complete run: k, k+1, ... left to right,
    branches of an alternative reusing the same range."""
    match t:
        case Event(label=lb):
            return Event(lb, k), k + 1
        case Tau():
            return Tau(k), k + 1
        case Par(args=args):
            return Par(tuple(Event(a.label, k) for a in args)), k + 1
        case Seq(args=args):
            out = []
            for part in args:
                part, k = _stamp(part, k)
                out.append(part)
            return Seq(tuple(out)), k
        case Choice(args=args):
            stamped = [_stamp(a, k) for a in args]
            return Choice(tuple(s for s, _ in stamped)), max(n for _, n in stamped)
    raise TermError(f"cannot stamp {t!r}")


def _nstd_term(rng, sig, max_keys: int, start: int = 1):
    """Random fully executed term; returns (term, next free key)."""
    shape, _ = _nstd_shape(rng, sig, max_keys)
    return _stamp(shape, start)


def _any_term(rng, sig, depth: int) -> Term:
    """Unexecuted, executed, or mid-run at random."""
    roll = rng.random()
    if roll < 0.60:
        return _std_term(rng, sig, depth)
    if roll < 0.85:
        return _nstd_term(rng, sig, 2)[0]
    done, _ = _nstd_term(rng, sig, 1)
    return Seq((done, _std_term(rng, sig, max(depth - 1, 0))))


# --- the law tables -------------------------------------------------------------


@dataclass(frozen=True)
class Law:
    name: str
    table: str
    gen: Callable


def _t(rng, sig):
    return _any_term(rng, sig, 2)


def _s(rng, sig):
    return _std_term(rng, sig, 2)


def _e(rng, sig):
    return Event(_pick_label(rng, sig))


def _ke(rng, sig):
    return Event(_pick_label(rng, sig), rng.randint(1, 3))


def _gen_a41(rng, sig):
    x, y, z = _s(rng, sig), _s(rng, sig), _s(rng, sig)
    return Seq((Choice((x, y)), z)), Choice((Seq((x, z)), Seq((y, z))))


def _gen_a42(rng, sig):
    x, nxt = _nstd_term(rng, sig, 1)
    y, _ = _nstd_term(rng, sig, 2, nxt)
    z, _ = _nstd_term(rng, sig, 2, nxt)
    return Seq((x, Choice((y, z)))), Choice((Seq((x, y)), Seq((x, z))))


def _gen_p4(rng, sig):
    e1, e2, y = _e(rng, sig), _e(rng, sig), _s(rng, sig)
    return Par((e1, Seq((e2, y)))), Seq((Par((e1, e2)), y))


def _gen_rp4(rng, sig):
    # executed pair before an unexecuted tail: the one reading of the
    # reversed law whose two sides stay in lock-step under full rewind
    m = rng.randint(1, 3)
    e1 = Event(_pick_label(rng, sig), m)
    e2 = Event(_pick_label(rng, sig), m)
    y = _s(rng, sig)
    return Par((e1, Seq((e2, y)))), Seq((Par((e1, e2)), y))


def _gen_p5(rng, sig):
    e1, e2, x = _e(rng, sig), _e(rng, sig), _s(rng, sig)
    return Par((Seq((e1, x)), e2)), Seq((Par((e1, e2)), x))


def _gen_rp5(rng, sig):
    m = rng.randint(1, 3)
    e1 = Event(_pick_label(rng, sig), m)
    e2 = Event(_pick_label(rng, sig), m)
    x = _s(rng, sig)
    return Par((Seq((e1, x)), e2)), Seq((Par((e1, e2)), x))


def _gen_p6(rng, sig):
    # continuations draw from a communication-free pool: a lock-step pair
    # never communicates, so the whole-merge on the right must not either
    pool = _comm_free_pool(rng, sig)
    e1, e2 = _e(rng, sig), _e(rng, sig)
    x = _std_term(rng, sig, 2, pool)
    y = _std_term(rng, sig, 2, pool)
    return Par((Seq((e1, x)), Seq((e2, y)))), Seq((Par((e1, e2)), Between(x, y)))


def _gen_rp6(rng, sig):
    # both histories ran in lock-step (same length, shared keys), from a
    # communication-free pool so rewinding the merge stays joint
    pool = _comm_free_pool(rng, sig)
    n = rng.randint(1, 2)
    xs = [Event(rng.choice(pool), i) for i in range(1, n + 1)]
    ys = [Event(rng.choice(pool), i) for i in range(1, n + 1)]
    m = n + 1
    e1 = Event(_pick_label(rng, sig), m)
    e2 = Event(_pick_label(rng, sig), m)
    x = xs[0] if n == 1 else Seq(tuple(xs))
    y = ys[0] if n == 1 else Seq(tuple(ys))
    return Par((Seq((x, e1)), Seq((y, e2)))), Seq((Between(x, y), Par((e1, e2))))


def _gen_c11(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    return Comm(Event(l1), Event(l2)), Event(g)


def _gen_rc11(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    m = rng.randint(1, 3)
    return Comm(Event(l1, m), Event(l2, m)), Event(g, m)


def _gen_c12(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    y = _s(rng, sig)
    return Comm(Event(l1), Seq((Event(l2), y))), Seq((Event(g), y))


def _gen_rc12(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    y, m = _nstd_term(rng, sig, rng.randint(1, 2))
    return Comm(Event(l1, m), Seq((y, Event(l2, m)))), Seq((y, Event(g, m)))


def _gen_c13(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    x = _s(rng, sig)
    return Comm(Seq((Event(l1), x)), Event(l2)), Seq((Event(g), x))


def _gen_rc13(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    x, m = _nstd_term(rng, sig, rng.randint(1, 2))
    return Comm(Seq((x, Event(l1, m))), Event(l2, m)), Seq((x, Event(g, m)))


def _gen_c14(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    x, y = _s(rng, sig), _s(rng, sig)
    return (
        Comm(Seq((Event(l1), x)), Seq((Event(l2), y))),
        Seq((Event(g), Between(x, y))),
    )


def _gen_rc14(rng, sig):
    l1, l2, g = _gamma_pair(rng, sig)
    x, mx = _nstd_term(rng, sig, rng.randint(1, 2))
    y, my = _nstd_term(rng, sig, rng.randint(1, 2))
    m = max(mx, my)
    return (
        Comm(Seq((x, Event(l1, m))), Seq((y, Event(l2, m)))),
        Seq((Between(x, y), Event(g, m))),
    )


def _gen_ce21(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    return (
        ConflictElim(Choice((x, y))),
        Choice((Unless(ConflictElim(x), y), Unless(ConflictElim(y), x))),
    )


def _gen_ce23(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    return (
        ConflictElim(Par((x, y))),
        Choice(
            (
                Par((Unless(ConflictElim(x), y), y)),
                Par((Unless(ConflictElim(y), x), x)),
            )
        ),
    )


def _gen_ce24(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    return (
        ConflictElim(Comm(x, y)),
        Choice(
            (
                Comm(Unless(ConflictElim(x), y), y),
                Comm(Unless(ConflictElim(y), x), x),
            )
        ),
    )


def _gen_u25(rng, sig):
    e1, e2 = _conflict_pair(rng, sig)
    return Unless(Event(e1), Event(e2)), Tau()


def _gen_ru25(rng, sig):
    e1, e2 = _conflict_pair(rng, sig)
    m, n = rng.randint(1, 3), rng.randint(1, 3)
    # the silenced side keeps its key: the residue must still undo
    return Unless(Event(e1, m), Event(e2, n)), Tau(m)


def _gen_u26(rng, sig):
    e1, _, e3 = rng.choice(_bystander_triples(sig, keyed=False))
    return Unless(Event(e1), Event(e3)), Event(e1)


def _gen_ru26(rng, sig):
    e1, _, e3 = rng.choice(_bystander_triples(sig, keyed=True))
    m, l = rng.randint(1, 3), rng.randint(1, 3)
    return Unless(Event(e1, m), Event(e3, l)), Event(e1, m)


def _gen_u27(rng, sig):
    # only the reversal-stable instances (third label equal to the
    # conflicting one) survive undo; a strictly higher third label is
    # silenced forward but undoes visibly
    e1, e2 = _conflict_pair(rng, sig)
    return Unless(Event(e2), Event(e1)), Tau()


def _gen_ru27(rng, sig):
    e1, e2 = _conflict_pair(rng, sig)
    m, l = rng.randint(1, 3), rng.randint(1, 3)
    return Unless(Event(e2, l), Event(e1, m)), Tau(l)


def _gen_d1(rng, sig):
    s = _label_set(rng, sig)
    e = rng.choice(sorted(sig.alphabet - s))
    return Encap(s, Event(e)), Event(e)


def _gen_rd1(rng, sig):
    s = _label_set(rng, sig)
    e = Event(rng.choice(sorted(sig.alphabet - s)), rng.randint(1, 3))
    return Encap(s, e), e


def _gen_d2(rng, sig):
    s = _label_set(rng, sig)
    return Encap(s, Event(rng.choice(sorted(s)))), Delta()


def _gen_rd2(rng, sig):
    s = _label_set(rng, sig)
    return Encap(s, Event(rng.choice(sorted(s)), rng.randint(1, 3))), Delta()


def _gen_d4(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    s = _label_set(rng, sig, _executed_labels(x) | _executed_labels(y))
    return Encap(s, Choice((x, y))), Choice((Encap(s, x), Encap(s, y)))


def _gen_d5(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    s = _label_set(rng, sig, _executed_labels(x) | _executed_labels(y))
    return Encap(s, Seq((x, y))), Seq((Encap(s, x), Encap(s, y)))


def _gen_d6(rng, sig):
    x, y = _t(rng, sig), _t(rng, sig)
    s = _label_set(rng, sig, _executed_labels(x) | _executed_labels(y))
    return Encap(s, Par((x, y))), Par((Encap(s, x), Encap(s, y)))


def _gen_b2(rng, sig):
    e, x, y = _e(rng, sig), _s(rng, sig), _s(rng, sig)
    lhs = Seq((e, Choice((Seq((Tau(), Choice((x, y)))), x))))
    return lhs, Seq((e, Choice((x, y))))


def _gen_rb2(rng, sig):
    x, nx = _nstd_term(rng, sig, rng.randint(1, 2))
    y, ny = _nstd_term(rng, sig, rng.randint(1, 2))
    em = Event(_pick_label(rng, sig), max(nx, ny))
    lhs = Seq((Choice((Seq((Choice((x, y)), Tau())), x)), em))
    return lhs, Seq((Choice((x, y)), em))


def _gen_ti1(rng, sig):
    s = _label_set(rng, sig)
    e = rng.choice(sorted(sig.alphabet - s))
    return Abstract(s, Event(e)), Event(e)


def _gen_rti1(rng, sig):
    s = _label_set(rng, sig)
    e = Event(rng.choice(sorted(sig.alphabet - s)), rng.randint(1, 3))
    return Abstract(s, e), e


def _gen_ti2(rng, sig):
    s = _label_set(rng, sig)
    return Abstract(s, Event(rng.choice(sorted(s)))), Tau()


def _gen_rti2(rng, sig):
    # hiding an executed event keeps its key: the silent residue undoes
    s = _label_set(rng, sig)
    m = rng.randint(1, 3)
    return Abstract(s, Event(rng.choice(sorted(s)), m)), Tau(m)


def _wrap1(op):
    def gen(rng, sig):
        x = _t(rng, sig)
        return op(x), x

    return gen


LAWS: tuple = (
    # core: choice is commutative, associative, idempotent; sequencing
    # distributes over an uncommitted (resp. completed) choice
    Law("A1", "core", lambda r, g: (lambda x, y: (Choice((x, y)), Choice((y, x))))(_t(r, g), _t(r, g))),
    Law("A2", "core", lambda r, g: (lambda x, y, z: (Choice((Choice((x, y)), z)), Choice((x, Choice((y, z))))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("A3", "core", lambda r, g: (lambda x: (Choice((x, x)), x))(_t(r, g))),
    Law("A41", "core", _gen_a41),
    Law("A42", "core", _gen_a42),
    Law("A5", "core", lambda r, g: (lambda x, y, z: (Seq((Seq((x, y)), z)), Seq((x, Seq((y, z))))))(_t(r, g), _t(r, g), _t(r, g))),
    # parallelism: deadlock laws, lock-step composition, communication,
    # conflict elimination, and the conflict filter
    Law("A6", "parallelism", lambda r, g: (lambda x: (Choice((x, Delta())), x))(_t(r, g))),
    Law("A7", "parallelism", lambda r, g: (Seq((Delta(), _s(r, g))), Delta())),
    Law("RA7", "parallelism", lambda r, g: (Seq((_nstd_term(r, g, 2)[0], Delta())), Delta())),
    Law("P1", "parallelism", lambda r, g: (lambda x, y: (Between(x, y), Choice((Par((x, y)), Comm(x, y)))))(_t(r, g), _t(r, g))),
    Law("P2", "parallelism", lambda r, g: (lambda x, y: (Par((x, y)), Par((y, x))))(_t(r, g), _t(r, g))),
    Law("P3", "parallelism", lambda r, g: (lambda x, y, z: (Par((Par((x, y)), z)), Par((x, Par((y, z))))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("P4", "parallelism", _gen_p4),
    Law("RP4", "parallelism", _gen_rp4),
    Law("P5", "parallelism", _gen_p5),
    Law("RP5", "parallelism", _gen_rp5),
    Law("P6", "parallelism", _gen_p6),
    Law("RP6", "parallelism", _gen_rp6),
    # choice under a lock-step merge reads forward: distributing a run
    # already under way would duplicate or orphan its history
    Law("P7", "parallelism", lambda r, g: (lambda x, y, z: (Par((Choice((x, y)), z)), Choice((Par((x, z)), Par((y, z))))))(_s(r, g), _s(r, g), _s(r, g))),
    Law("P8", "parallelism", lambda r, g: (lambda x, y, z: (Par((x, Choice((y, z)))), Choice((Par((x, y)), Par((x, z))))))(_s(r, g), _s(r, g), _s(r, g))),
    Law("P9", "parallelism", lambda r, g: (Par((Delta(), _t(r, g))), Delta())),
    Law("P10", "parallelism", lambda r, g: (Par((_t(r, g), Delta())), Delta())),
    Law("C11", "parallelism", _gen_c11),
    Law("RC11", "parallelism", _gen_rc11),
    Law("C12", "parallelism", _gen_c12),
    Law("RC12", "parallelism", _gen_rc12),
    Law("C13", "parallelism", _gen_c13),
    Law("RC13", "parallelism", _gen_rc13),
    Law("C14", "parallelism", _gen_c14),
    Law("RC14", "parallelism", _gen_rc14),
    Law("C15", "parallelism", lambda r, g: (lambda x, y, z: (Comm(Choice((x, y)), z), Choice((Comm(x, z), Comm(y, z)))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("C16", "parallelism", lambda r, g: (lambda x, y, z: (Comm(x, Choice((y, z))), Choice((Comm(x, y), Comm(x, z)))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("C17", "parallelism", lambda r, g: (Comm(Delta(), _t(r, g)), Delta())),
    Law("C18", "parallelism", lambda r, g: (Comm(_t(r, g), Delta()), Delta())),
    Law("CE19", "parallelism", lambda r, g: (lambda e: (ConflictElim(e), e))(_e(r, g))),
    Law("RCE19", "parallelism", lambda r, g: (lambda e: (ConflictElim(e), e))(_ke(r, g))),
    Law("CE20", "parallelism", lambda r, g: (ConflictElim(Delta()), Delta())),
    Law("CE21", "parallelism", _gen_ce21),
    Law("CE22", "parallelism", lambda r, g: (lambda x, y: (ConflictElim(Seq((x, y))), Seq((ConflictElim(x), ConflictElim(y)))))(_t(r, g), _t(r, g))),
    Law("CE23", "parallelism", _gen_ce23),
    Law("CE24", "parallelism", _gen_ce24),
    Law("U25", "parallelism", _gen_u25),
    Law("RU25", "parallelism", _gen_ru25),
    Law("U26", "parallelism", _gen_u26),
    Law("RU26", "parallelism", _gen_ru26),
    Law("U27", "parallelism", _gen_u27),
    Law("RU27", "parallelism", _gen_ru27),
    Law("U28", "parallelism", lambda r, g: (lambda e: (Unless(e, Delta()), e))(_e(r, g))),
    Law("U29", "parallelism", lambda r, g: (Unless(Delta(), _e(r, g)), Delta())),
    Law("U30", "parallelism", lambda r, g: (lambda x, y, z: (Unless(Choice((x, y)), z), Choice((Unless(x, z), Unless(y, z)))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U31", "parallelism", lambda r, g: (lambda x, y, z: (Unless(Seq((x, y)), z), Seq((Unless(x, z), Unless(y, z)))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U32", "parallelism", lambda r, g: (lambda x, y, z: (Unless(Par((x, y)), z), Par((Unless(x, z), Unless(y, z)))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U33", "parallelism", lambda r, g: (lambda x, y, z: (Unless(Comm(x, y), z), Comm(Unless(x, z), Unless(y, z))))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U34", "parallelism", lambda r, g: (lambda x, y, z: (Unless(x, Choice((y, z))), Unless(Unless(x, y), z)))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U35", "parallelism", lambda r, g: (lambda x, y, z: (Unless(x, Seq((y, z))), Unless(Unless(x, y), z)))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U36", "parallelism", lambda r, g: (lambda x, y, z: (Unless(x, Par((y, z))), Unless(Unless(x, y), z)))(_t(r, g), _t(r, g), _t(r, g))),
    Law("U37", "parallelism", lambda r, g: (lambda x, y, z: (Unless(x, Comm(y, z)), Unless(Unless(x, y), z)))(_t(r, g), _t(r, g), _t(r, g))),
    # encapsulation: blocked labels die in both tenses, the rest pass
    Law("D1", "encapsulation", _gen_d1),
    Law("RD1", "encapsulation", _gen_rd1),
    Law("D2", "encapsulation", _gen_d2),
    Law("RD2", "encapsulation", _gen_rd2),
    Law("D3", "encapsulation", lambda r, g: (Encap(_label_set(r, g), Delta()), Delta())),
    # a blocked label can never have fired, so histories under an
    # encapsulation avoid the blocked set
    Law("D4", "encapsulation", _gen_d4),
    Law("D5", "encapsulation", _gen_d5),
    Law("D6", "encapsulation", _gen_d6),
    # silent step: an inert tau after an event, before a residue, and
    # inside a branching context; a lock-step tau vanishes
    Law("B1", "silent", lambda r, g: (lambda e: (Seq((e, Tau())), e))(_e(r, g))),
    Law("RB1", "silent", lambda r, g: (lambda e: (Seq((Tau(), e)), e))(_ke(r, g))),
    Law("B2", "silent", _gen_b2),
    Law("RB2", "silent", _gen_rb2),
    Law("B3", "silent", lambda r, g: (lambda x: (Par((x, Tau())), x))(_s(r, g))),
    # abstraction: hidden labels turn silent, keeping their keys
    Law("TI1", "abstraction", _gen_ti1),
    Law("RTI1", "abstraction", _gen_rti1),
    Law("TI2", "abstraction", _gen_ti2),
    Law("RTI2", "abstraction", _gen_rti2),
    Law("TI3", "abstraction", lambda r, g: (Abstract(_label_set(r, g), Delta()), Delta())),
    Law("TI4", "abstraction", lambda r, g: (lambda s, x, y: (Abstract(s, Choice((x, y))), Choice((Abstract(s, x), Abstract(s, y)))))(_label_set(r, g), _t(r, g), _t(r, g))),
    Law("TI5", "abstraction", lambda r, g: (lambda s, x, y: (Abstract(s, Seq((x, y))), Seq((Abstract(s, x), Abstract(s, y)))))(_label_set(r, g), _t(r, g), _t(r, g))),
    Law("TI6", "abstraction", lambda r, g: (lambda s, x, y: (Abstract(s, Par((x, y))), Par((Abstract(s, x), Abstract(s, y)))))(_label_set(r, g), _t(r, g), _t(r, g))),
)

LAW_INDEX = {law.name: law for law in LAWS}


# --- the runner -----------------------------------------------------------------


@dataclass(frozen=True)
class LawFailure:
    law: str
    kind: str
    instance: int
    lhs: str
    rhs: str
    play: tuple | None = None


@dataclass(frozen=True)
class LawReport:
    law: str
    table: str
    instances: int
    checks: tuple  # ((kind, passed), ...) in check order
    failures: tuple

    @property
    def failed(self) -> int:
        return len(self.failures)


@dataclass(frozen=True)
class SuiteReport:
    seed: int
    instances: int
    pomset_k: int
    wrong_kind: bool
    laws: tuple

    @property
    def failure_count(self) -> int:
        return sum(len(l.failures) for l in self.laws)


def _checkable_instance(law: Law, rng, sig, budget):
    """One canonical, budget-explorable instance of the law.  Draws that
    cannot be keyed coherently or that blow the exploration budget are
    thrown back; they are not counterexamples."""
    for _ in range(REJECTION_CAP):
        try:
            lhs, rhs = law.gen(rng, sig)
            lhs, rhs = canonicalize(lhs), canonicalize(rhs)
            l1 = build_lts(lhs, sig, budget, normalize_first=False)
            l2 = build_lts(rhs, sig, budget, normalize_first=False)
        except TermError:
            continue
        return lhs, rhs, l1, l2
    raise TermError(f"no checkable instance of {law.name} after {REJECTION_CAP} tries")


def run_law(
    law: Law,
    seed: int = 1,
    instances: int = 50,
    sig: Signature | None = None,
    pomset_k: int = 4,
    wrong_kind: bool = False,
    budget: Budget | None = None,
) -> LawReport:
    sig = sig if sig is not None else default_signature()
    budget = budget if budget is not None else Budget(max_states=600, max_key=12)
    # seed per law name, not per position: stable under table edits
    rng = random.Random(f"{seed}:{law.name}")
    kinds = table_kinds(law.table, pomset_k, wrong_kind)
    passed = {str(k): 0 for k in kinds}
    failures = []
    for i in range(instances):
        lhs, rhs, l1, l2 = _checkable_instance(law, rng, sig, budget)
        for kind in kinds:
            verdict = check(l1, l2, kind)
            if verdict.equivalent:
                passed[str(kind)] += 1
            else:
                failures.append(
                    LawFailure(law.name, str(kind), i, render(lhs), render(rhs), verdict.play)
                )
    return LawReport(
        law.name,
        law.table,
        instances,
        tuple((str(k), passed[str(k)]) for k in kinds),
        tuple(failures),
    )


def run_suite(
    seed: int = 1,
    instances: int = 50,
    sig: Signature | None = None,
    tables=TABLE_ORDER,
    pomset_k: int = 4,
    wrong_kind: bool = False,
    budget: Budget | None = None,
) -> SuiteReport:
    wanted = set(tables)
    unknown = wanted - set(TABLE_ORDER)
    if unknown:
        raise TermError(f"unknown tables: {sorted(unknown)}")
    reports = [
        run_law(law, seed, instances, sig, pomset_k, wrong_kind, budget)
        for law in LAWS
        if law.table in wanted
    ]
    return SuiteReport(seed, instances, pomset_k, wrong_kind, tuple(reports))


# --- serialization --------------------------------------------------------------


def suite_report_doc(rep: SuiteReport) -> dict:
    return {
        "seed": rep.seed,
        "instances": rep.instances,
        "pomset_k": rep.pomset_k,
        "wrong_kind": rep.wrong_kind,
        "failure_count": rep.failure_count,
        "laws": [
            {
                "law": lr.law,
                "table": lr.table,
                "instances": lr.instances,
                "checks": [{"kind": k, "passed": p} for k, p in lr.checks],
                "failures": [
                    {
                        "kind": f.kind,
                        "instance": f.instance,
                        "lhs": f.lhs,
                        "rhs": f.rhs,
                        "play": list(f.play) if f.play is not None else None,
                    }
                    for f in lr.failures
                ],
            }
            for lr in rep.laws
        ],
    }


def suite_report_json(rep: SuiteReport) -> str:
    return json.dumps(suite_report_doc(rep), indent=2, sort_keys=True) + "\n"


def suite_report_csv(rep: SuiteReport) -> str:
    lines = ["table,law,kind,instances,passed,failed"]
    for lr in rep.laws:
        by_kind = {}
        for f in lr.failures:
            by_kind[f.kind] = by_kind.get(f.kind, 0) + 1
        for kind, p in lr.checks:
            lines.append(
                f"{lr.table},{lr.law},{kind},{lr.instances},{p},{by_kind.get(kind, 0)}"
            )
    return "\n".join(lines) + "\n"
