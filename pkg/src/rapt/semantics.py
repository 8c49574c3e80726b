"""Bidirectional operational semantics and transition-system construction.

Forward steps stamp every fired event with one fresh key (lock-step blocks
share it); reverse steps undo exactly the most recent key.  A handful of
deliberate departures from a purely textbook rule set keep the two
directions inverse to each other:

* Sequencing uses a frontier: forward skips fully executed factors, reverse
  skips fully unexecuted ones.  The classic rules move only the first
  factor forward and the last backward, stranding states like a[1].b; pass
  ``gap_fill=False`` to study that behaviour.
* A subterm is "poison" when it can neither finish nor fully rewind (think
  delta, or an encapsulated history).  Poison kills an enclosing parallel
  composition outright in both directions, which is what makes laws like
  x || delta = delta contextually sound.
* The silent step leaves a keyed residue tau[k] like any other event, so
  undoing it is observable as tau[k] rather than impossible.
* Suppressed events (priority filtering) are rewritten to silent residues
  in the successor, keeping the forward and reverse views consistent.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .recursion import unfold_rdp
from .terms import (
    Abstract,
    Between,
    Choice,
    Comm,
    ConflictElim,
    Delta,
    Encap,
    Event,
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
    _status_bits,
    canonicalize,
    choice,
    max_key,
    par,
    render,
    seq,
    std_status,
)

FORWARD = "Forward"
REVERSE = "Reverse"


class UnknownSpec(TermError):
    """A recursion reference has no specification to unfold."""


class UnguardedRecursion(TermError):
    """Computing a term's moves required those same moves: some variable
    reaches itself without passing an action."""


class BudgetExceeded(TermError):
    def __init__(self, limit):
        super().__init__(f"{type(self).__name__}: limit {limit}")
        self.limit = limit


class StateLimitExceeded(BudgetExceeded):
    """BFS found more states than the budget allows."""


class KeyLimitExceeded(BudgetExceeded):
    """A forward step would need a key beyond the budget; histories grow
    without bound (typically unbounded recursion)."""


def _ev_sort_key(entry):
    label, key = entry
    return (label, key if key is not None else 0)


@dataclass(frozen=True)
class StepLabel:
    """Multiset of fired (label, key) pairs; key None in forward labels,
    the undone key in reverse labels.  Kept as a sorted tuple so that twin
    events (a lock-step a || a) stay counted."""

    events: tuple
    direction: str

    def __post_init__(self):
        if not self.events:
            raise TermError("empty step label")
        object.__setattr__(self, "events", tuple(sorted(self.events, key=_ev_sort_key)))
        keyed = [k is not None for _, k in self.events]
        if self.direction == FORWARD and any(keyed):
            raise TermError("forward labels are key-free")
        if self.direction == REVERSE and not all(keyed):
            raise TermError("reverse labels carry keys")

    def __str__(self):
        def one(entry):
            label, key = entry
            return label if key is None else f"{label}[{key}]"

        return "{" + ",".join(one(e) for e in self.events) + "}"

    def is_silent(self) -> bool:
        return all(label == "tau" for label, _ in self.events)


@dataclass(frozen=True)
class Budget:
    max_states: int = 2000
    max_key: int = 16

    def __post_init__(self):
        if self.max_states < 1 or self.max_key < 1:
            raise TermError("budget bounds are positive")


@dataclass(frozen=True, eq=False)
class Lts:
    """Finite two-directional transition system over canonical terms."""

    initial: Term
    states: tuple
    forward_edges: tuple  # (source, StepLabel, target)
    reverse_edges: tuple
    specs: dict | None = None
    weak_forward: tuple = ()
    weak_reverse: tuple = ()
    # states with moves cut off by a key or state budget instead of
    # raising; nonempty only for truncated (bounded-exploration) systems
    horizon: frozenset = frozenset()
    sig: Signature | None = None

    def fwd_terminal(self, s: Term) -> bool:
        return std_status(s, self.specs) == NSTD

    def rev_terminal(self, s: Term) -> bool:
        return std_status(s, self.specs) == STD


_BUSY = object()


def suppressed_label(sig: Signature, label: str, other_alphabet, reverse: bool) -> bool:
    """Whether an event with this label loses a conflict-filter decision
    against the given alphabet.  Forward filtering retires labels that sit
    at or below a conflicting event in the priority order; reverse
    filtering mirrors the comparison."""
    for f in other_alphabet:
        for g in sig.alphabet:
            if not sig.in_conflict(f, g):
                continue
            if (not reverse and sig.prio_le(g, label)) or (
                reverse and sig.prio_le(label, g)
            ):
                return True
    return False


def theta_expand(x: Term, specs=None):
    """One head unfolding of the conflict-elimination axioms; None for
    operands whose moves just pass through."""
    match x:
        case Event() | Tau() | Delta():
            return x
        case Choice(args=args):
            summands = []
            for i, a in enumerate(args):
                node = ConflictElim(a)
                for j, b in enumerate(args):
                    if j != i:
                        node = Unless(node, b)
                summands.append(node)
            return choice(summands)
        case Seq(args=args):
            return seq([ConflictElim(a) for a in args])
        case Par(args=args):
            head, rest = args[0], par(args[1:])
            return choice(
                [
                    par([Unless(ConflictElim(head), rest), rest]),
                    par([Unless(ConflictElim(rest), head), head]),
                ]
            )
        case Comm(left=l, right=r):
            return choice(
                [
                    Comm(Unless(ConflictElim(l), r), r),
                    Comm(Unless(ConflictElim(r), l), l),
                ]
            )
        case Between(left=l, right=r):
            return ConflictElim(choice([par([l, r]), Comm(l, r)]))
        case RecRef():
            spec = (specs or {}).get(x.spec)
            if spec is None:
                raise UnknownSpec(f"no specification named {x.spec!r} in scope")
            return ConflictElim(unfold_rdp(spec, x.var))
    return None


def _has_keyed_material(t: Term, specs) -> bool:
    return _status_bits(t, specs, frozenset())[0]


def _mentions_recursion(t: Term) -> bool:
    from .terms import children

    stack = [t]
    while stack:
        cur = stack.pop()
        if isinstance(cur, RecRef):
            return True
        stack.extend(children(cur))
    return False


def _strip(t: Term, label: str, key):
    """Remove the first (leftmost-innermost) matching event instance.
    Returns (term or None, found)."""
    match t:
        case Event(label=lb, key=k) if lb == label and k == key:
            return None, True
        case Event() | Delta() | Tau() | RecRef():
            return t, False
        case Choice(args=args) | Seq(args=args) | Par(args=args):
            new = []
            found = False
            for a in args:
                if found:
                    new.append(a)
                    continue
                a2, found = _strip(a, label, key)
                if a2 is not None:
                    new.append(a2)
            if not found:
                return t, False
            if not new:
                return None, True
            ctor = {Choice: choice, Seq: seq, Par: par}[type(t)]
            return ctor(new), True
    # wrappers and binary operators: strip inside, keep shape when possible
    from .terms import children, with_children

    kids = list(children(t))
    for i, a in enumerate(kids):
        a2, found = _strip(a, label, key)
        if found:
            if a2 is None:
                if isinstance(t, (Comm, Between)):
                    return kids[1 - i], True
                if isinstance(t, Unless):
                    # the filter side never holds history; a vanished left
                    # operand takes the whole filter with it
                    return (None if i == 0 else kids[0]), True
                return None, True
            kids[i] = a2
            return with_children(t, tuple(kids)), True
    return t, False


def _to_tau(t: Term, label: str, key):
    """Replace the first matching event instance with a silent residue of
    the same key.  Returns (term, found)."""
    match t:
        case Event(label=lb, key=k) if lb == label and k == key:
            return Tau(key), True
        case Event() | Delta() | Tau() | RecRef():
            return t, False
    from .terms import children, with_children

    kids = list(children(t))
    for i, a in enumerate(kids):
        a2, found = _to_tau(a, label, key)
        if found:
            kids[i] = a2
            return canonicalize(with_children(t, tuple(kids))), True
    return t, False


class _Engine:
    """One-step move computation with memoization.  Not thread-safe;
    build one per traversal."""

    def __init__(self, sig: Signature, specs=None, gap_fill=True):
        self.sig = sig
        self.specs = specs or {}
        self.gap_fill = gap_fill
        self._fwd = {}
        self._rev = {}
        self._poison = {}

    # -- public-ish entry points

    def fwd(self, t: Term, k: int):
        ck = (t, k)
        if ck in self._fwd:
            v = self._fwd[ck]
            if v is _BUSY:
                raise UnguardedRecursion(
                    f"unguarded recursion while stepping {render(t)}"
                )
            return v
        self._fwd[ck] = _BUSY
        try:
            out = tuple(
                (tuple(sorted(ev, key=_ev_sort_key)), s)
                for ev, s in self._fwd_of(t, k)
            )
        except BaseException:
            # leave no stale in-flight marker behind an aborted attempt
            if self._fwd.get(ck) is _BUSY:
                del self._fwd[ck]
            raise
        self._fwd[ck] = out
        return out

    def rev(self, t: Term):
        if t in self._rev:
            v = self._rev[t]
            if v is _BUSY:
                raise UnguardedRecursion(
                    f"unguarded recursion while stepping {render(t)}"
                )
            return v
        self._rev[t] = _BUSY
        try:
            out = tuple(
                (tuple(sorted(ev, key=_ev_sort_key)), s)
                for ev, s in self._rev_of(t)
            )
        except BaseException:
            if self._rev.get(t) is _BUSY:
                del self._rev[t]
            raise
        self._rev[t] = out
        return out

    def has_fwd(self, t: Term) -> bool:
        k = max_key(t, self.specs) + 1
        if self._fwd.get((t, k)) is _BUSY:
            # probing a term mid-computation (recursive unfolding):
            # assume productive, the direct move path catches unguardedness
            return True
        try:
            return bool(self.fwd(t, k))
        except UnguardedRecursion:
            # a cyclic probe through a guarded spec; treat as productive,
            # genuine unguardedness still raises when the term is stepped
            return True

    def _has_rev(self, t: Term) -> bool:
        if self._rev.get(t) is _BUSY:
            return True
        try:
            return bool(self.rev(t))
        except UnguardedRecursion:
            return True

    def poison(self, t: Term) -> bool:
        if t in self._poison:
            v = self._poison[t]
            # cycles through recursion are treated as healthy
            return False if v is _BUSY else v
        self._poison[t] = _BUSY
        st = std_status(t, self.specs)
        dead_fwd = not self.has_fwd(t) and st != NSTD
        dead_rev = not self._has_rev(t) and st != STD
        val = dead_fwd or dead_rev
        self._poison[t] = val
        return val

    # -- helpers

    def _unfold(self, t: RecRef) -> Term:
        spec = self.specs.get(t.spec)
        if spec is None:
            raise UnknownSpec(f"no specification named {t.spec!r} in scope")
        return unfold_rdp(spec, t.var)

    def _suppressed(self, label: str, other_alphabet, reverse: bool) -> bool:
        return suppressed_label(self.sig, label, other_alphabet, reverse)

    def _theta_expand(self, x: Term):
        return theta_expand(x, self.specs)

    # -- forward rules

    def _fwd_of(self, t: Term, k: int):
        match t:
            case Event(key=None):
                return [(((t.label, None),), Event(t.label, k))]
            case Tau(key=None):
                return [((("tau", None),), Tau(k))]
            case Event() | Tau() | Delta():
                return []
            case Choice(args=args):
                out = []
                for a in args:
                    out.extend(self.fwd(a, k))
                return out
            case Seq(args=args):
                return self._fwd_seq(args, k)
            case Par(args=args):
                return self._fwd_par(args, k)
            case Comm(left=x, right=y):
                return self._fwd_comm(x, y, k)
            case Between(left=x, right=y):
                return self.fwd(par([x, y]), k) + self.fwd(Comm(x, y), k)
            case ConflictElim(body=x):
                exp = self._theta_expand(x)
                if exp is None:  # opaque operand: filterless pass-through
                    return [(ev, ConflictElim(s)) for ev, s in self.fwd(x, k)]
                if exp == x:
                    return self.fwd(x, k)
                return self.fwd(exp, k)
            case Unless(left=x, right=y):
                return self._filter_unless(self.fwd(x, k), y, k, reverse=False)
            case Encap(labels=h, body=x):
                out = []
                for ev, s in self.fwd(x, k):
                    if any(lb in h for lb, _ in ev):
                        continue
                    out.append((ev, Encap(h, s)))
                return out
            case Abstract(labels=i_set, body=x):
                out = []
                for ev, s in self.fwd(x, k):
                    ev2 = tuple(("tau" if lb in i_set else lb, kk) for lb, kk in ev)
                    out.append((ev2, Abstract(i_set, s)))
                return out
            case RecRef():
                return self.fwd(self._unfold(t), k)
        raise TermError(f"no forward rules for {t!r}")

    def _fwd_seq(self, args, k):
        if self.gap_fill:
            idx = None
            for i, f in enumerate(args):
                if not (std_status(f, self.specs) == NSTD and not self.poison(f)):
                    idx = i
                    break
            if idx is None:
                return []
            if self.poison(args[idx]):
                return []
            # a keyed suffix means this state already ran past here; a dead
            # suffix means the run could never finish, so refuse to start
            if any(
                _has_keyed_material(s, self.specs) or self.poison(s)
                for s in args[idx + 1 :]
            ):
                return []
        else:
            idx = 0
        out = []
        for ev, f2 in self.fwd(args[idx], k):
            parts = list(args)
            parts[idx] = f2
            out.append((ev, seq(parts)))
        return out

    def _fwd_par(self, args, k):
        if any(self.poison(a) for a in args):
            return []
        active = [i for i, a in enumerate(args) if std_status(a, self.specs) != NSTD]
        if not active:
            return []
        per = []
        for i in active:
            mv = self.fwd(args[i], k)
            if not mv:  # lock step: everyone unfinished must move
                return []
            per.append((i, mv))
        out = []
        for combo in itertools.product(*(mv for _, mv in per)):
            parts = list(args)
            events = []
            for (i, _), (ev, s2) in zip(per, combo):
                parts[i] = s2
                events.extend(ev)
            out.append((tuple(events), par(parts)))
        return out

    def _fwd_comm(self, x, y, k):
        singles_x = [(ev, s) for ev, s in self.fwd(x, k) if len(ev) == 1]
        singles_y = [(ev, s) for ev, s in self.fwd(y, k) if len(ev) == 1]
        out = []
        for (e1,), x2 in singles_x:
            for (e2,), y2 in singles_y:
                c = self.sig.gamma_of(e1[0], e2[0])
                if c is None:
                    continue
                rx, _ = _strip(x2, e1[0], k)
                ry, _ = _strip(y2, e2[0], k)
                parts = [Event(c, k)]
                if rx is not None and ry is not None:
                    parts.append(Between(rx, ry))
                elif rx is not None or ry is not None:
                    parts.append(rx if rx is not None else ry)
                out.append((((c, None),), seq(parts)))
        return out

    def _filter_unless(self, moves, y, k, reverse):
        a_y = _alpha(y, self.specs)
        out = []
        for ev, s in moves:
            ev2 = []
            s2 = s
            for lb, kk in ev:
                if lb != "tau" and self._suppressed(lb, a_y, reverse):
                    ev2.append(("tau", kk))
                    s2, _ = _to_tau(s2, lb, k if not reverse else None)
                else:
                    ev2.append((lb, kk))
            out.append((tuple(ev2), Unless(s2, y)))
        return out

    # -- reverse rules

    def _rev_of(self, t: Term):
        match t:
            case Event(key=None) | Tau(key=None) | Delta():
                return []
            case Event(label=lb, key=m):
                return [(((lb, m),), Event(lb))]
            case Tau(key=m):
                return [((("tau", m),), Tau())]
            case Choice(args=args):
                out = []
                for a in args:
                    out.extend(self.rev(a))
                return out
            case Seq(args=args):
                return self._rev_seq(args)
            case Par(args=args):
                return self._rev_par(args)
            case Comm(left=x, right=y):
                return self._rev_comm(x, y)
            case Between(left=x, right=y):
                return self.rev(par([x, y])) + self.rev(Comm(x, y))
            case ConflictElim(body=x):
                exp = self._theta_expand(x)
                if exp is None:
                    return [(ev, ConflictElim(s)) for ev, s in self.rev(x)]
                if exp == x:
                    return self.rev(x)
                return self.rev(exp)
            case Unless(left=x, right=y):
                return self._filter_unless(self.rev(x), y, None, reverse=True)
            case Encap(labels=h, body=x):
                out = []
                for ev, s in self.rev(x):
                    if any(lb in h for lb, _ in ev):
                        continue
                    out.append((ev, Encap(h, s)))
                return out
            case Abstract(labels=i_set, body=x):
                out = []
                for ev, s in self.rev(x):
                    ev2 = tuple(("tau" if lb in i_set else lb, kk) for lb, kk in ev)
                    out.append((ev2, Abstract(i_set, s)))
                return out
            case RecRef():
                return self.rev(self._unfold(t))
        raise TermError(f"no reverse rules for {t!r}")

    def _rev_seq(self, args):
        if self.gap_fill:
            # skip history-free suffix factors, then refuse to act when the
            # frontier's history is stuck or the suffix could never run
            # (keeps a history-then-deadlock term as inert as the deadlock)
            idx = None
            for i in range(len(args) - 1, -1, -1):
                if std_status(args[i], self.specs) != STD:
                    idx = i
                    break
            if idx is None:
                return []
            if self.poison(args[idx]):
                return []
            if any(self.poison(s) for s in args[idx + 1 :]):
                return []
        else:
            idx = len(args) - 1
        out = []
        for ev, f2 in self.rev(args[idx]):
            parts = list(args)
            parts[idx] = f2
            out.append((ev, seq(parts)))
        return out

    def _rev_par(self, args):
        if any(self.poison(a) for a in args):
            return []
        keys = [max_key(a, self.specs) for a in args]
        top = max(keys)
        if top == 0:
            return []
        movers = []
        for i, a in enumerate(args):
            if keys[i] == top:
                mv = [
                    (ev, s)
                    for ev, s in self.rev(a)
                    if all(kk == top for _, kk in ev)
                ]
                if not mv:  # the newest step is stuck inside this component
                    return []
                movers.append((i, mv))
            elif self.has_fwd(a):
                # a sibling with pending forward work cannot watch history
                # rewind past it; such states only come from raw input
                return []
        out = []
        for combo in itertools.product(*(mv for _, mv in movers)):
            parts = list(args)
            events = []
            for (i, _), (ev, s2) in zip(movers, combo):
                parts[i] = s2
                events.extend(ev)
            out.append((tuple(events), par(parts)))
        return out

    def _rev_comm(self, x, y):
        singles_x = [(ev, s) for ev, s in self.rev(x) if len(ev) == 1]
        singles_y = [(ev, s) for ev, s in self.rev(y) if len(ev) == 1]
        out = []
        for ((l1, m1),), _x2 in singles_x:
            for ((l2, m2),), _y2 in singles_y:
                if m1 != m2:
                    continue
                c = self.sig.gamma_of(l1, l2)
                if c is None:
                    continue
                rx, _ = _strip(x, l1, m1)
                ry, _ = _strip(y, l2, m2)
                parts = []
                if rx is not None and ry is not None:
                    parts.append(Between(rx, ry))
                elif rx is not None or ry is not None:
                    parts.append(rx if rx is not None else ry)
                parts.append(Event(c))
                out.append((((c, m1),), seq(parts)))
        return out


def _alpha(t: Term, specs):
    from .terms import alphabet_of

    return alphabet_of(t, specs)


# --- public operations -------------------------------------------------------


def forward_steps(t: Term, sig: Signature, next_key: int, specs=None, gap_fill=True):
    """All single forward steps of t; fired events carry key next_key."""
    eng = _Engine(sig, specs, gap_fill)
    return {
        (StepLabel(ev, FORWARD), canonicalize(s))
        for ev, s in eng.fwd(canonicalize(t), next_key)
    }


def reverse_steps(t: Term, sig: Signature, specs=None, gap_fill=True):
    """All single reverse steps of t (undoing the most recent keys)."""
    eng = _Engine(sig, specs, gap_fill)
    return {
        (StepLabel(ev, REVERSE), canonicalize(s))
        for ev, s in eng.rev(canonicalize(t))
    }


def build_lts(
    t: Term,
    sig: Signature,
    budget: Budget = Budget(),
    specs=None,
    normalize_first=True,
    gap_fill=True,
    truncate=False,
) -> Lts:
    """Closure of the step relations from t, breadth-first, deterministic.

    The input is normalized before exploration (disable with
    normalize_first=False to study raw operator states).  With
    truncate=True a move past the key or state budget is dropped instead
    of raising, and its source joins the horizon set; comparisons must
    treat horizon states optimistically."""
    t0 = canonicalize(t)
    if normalize_first and not _mentions_recursion(t0):
        # recursion references have no normal form; explore them raw
        from .rewriter import normalize

        t0 = normalize(t0, sig)[0]
    eng = _Engine(sig, specs, gap_fill)
    seen = {t0: 0}
    queue = [t0]
    fedges = []
    redges = []
    horizon = set()

    def intern(s):
        if s not in seen:
            if len(seen) >= budget.max_states:
                if truncate:
                    return None
                raise StateLimitExceeded(budget.max_states)
            seen[s] = len(seen)
            queue.append(s)
        return s

    qi = 0
    while qi < len(queue):
        s = queue[qi]
        qi += 1
        nk = max_key(s, specs) + 1
        fmv = sorted(set(eng.fwd(s, nk)), key=lambda m: (m[0], render(m[1])))
        if fmv and nk > budget.max_key:
            if not truncate:
                raise KeyLimitExceeded(budget.max_key)
            fmv = []
            horizon.add(s)
        for ev, d in fmv:
            tgt = intern(d)
            if tgt is None:
                horizon.add(s)
                continue
            fedges.append((s, StepLabel(ev, FORWARD), tgt))
        rmv = sorted(set(eng.rev(s)), key=lambda m: (m[0], render(m[1])))
        for ev, d in rmv:
            tgt = intern(d)
            if tgt is None:
                horizon.add(s)
                continue
            redges.append((s, StepLabel(ev, REVERSE), tgt))
    return Lts(
        initial=t0,
        states=tuple(queue),
        forward_edges=tuple(fedges),
        reverse_edges=tuple(redges),
        specs=specs,
        horizon=frozenset(horizon),
        sig=sig,
    )


def weak_closure(l: Lts) -> Lts:
    """Annotate l with weak edges: silent* . step . silent* in each
    direction.  Strong edges are kept untouched."""

    def closures(edges):
        silent_next = {}
        for s, lab, d in edges:
            if lab.is_silent():
                silent_next.setdefault(s, set()).add(d)
        memo = {}

        def reach(s):
            if s in memo:
                return memo[s]
            out = {s}
            frontier = [s]
            while frontier:
                cur = frontier.pop()
                for nxt in silent_next.get(cur, ()):
                    if nxt not in out:
                        out.add(nxt)
                        frontier.append(nxt)
            memo[s] = out
            return out

        return reach

    def weaken(edges):
        reach = closures(edges)
        targets = {}
        for s, lab, d in edges:
            targets.setdefault(s, []).append((lab, d))
        out = set()
        for s in l.states:
            for mid in reach(s):
                for lab, d in targets.get(mid, ()):
                    for end in reach(d):
                        out.add((s, lab, end))
        order = {st: i for i, st in enumerate(l.states)}
        return tuple(
            sorted(out, key=lambda e: (order[e[0]], e[1].events, order[e[2]]))
        )

    return Lts(
        initial=l.initial,
        states=l.states,
        forward_edges=l.forward_edges,
        reverse_edges=l.reverse_edges,
        specs=l.specs,
        weak_forward=weaken(l.forward_edges),
        weak_reverse=weaken(l.reverse_edges),
        horizon=l.horizon,
        sig=l.sig,
    )


# --- hiding-aware configurations ---------------------------------------------


def visible_instances(t: Term, sig: Signature | None = None, specs=None):
    """Executed instances of t as (label, key, occ) triples, plus the
    strict temporal order between them: lower key means earlier, joint
    events share a key and stay unordered.

    An instance's label is what an observer of the remaining history can
    still account for.  Abstraction scopes rename hidden labels to tau.
    A communication node whose operands each executed one event under a
    shared key shows the merged event, since that is how the pair fired
    and how it will undo.  History that an encapsulation scope blocks is
    dead weight and dropped.  The left operand of a filter shows tau
    wherever undoing the event would be suppressed; the right operand is
    context, not history.  The communication and suppression readings
    need sig and are skipped without it.  A choice keeps the history of
    its first committed branch: reachable states never hold several."""
    from .terms import alphabet_of

    def walk(node):
        match node:
            case Event(label=lb, key=k):
                return [(lb, k)] if k is not None else []
            case Tau(key=k):
                return [("tau", k)] if k is not None else []
            case Delta() | RecRef():
                return []
            case Choice(args=args):
                for a in args:
                    got = walk(a)
                    if got:
                        return got
                return []
            case Seq(args=args) | Par(args=args):
                out = []
                for a in args:
                    out.extend(walk(a))
                return out
            case Comm(left=l, right=r):
                wl, wr = walk(l), walk(r)
                if sig is not None:
                    lk, rk = {}, {}
                    for lb, k in wl:
                        lk.setdefault(k, []).append(lb)
                    for lb, k in wr:
                        rk.setdefault(k, []).append(lb)
                    for k in sorted(set(lk) & set(rk)):
                        if len(lk[k]) == 1 == len(rk[k]):
                            c = sig.gamma_of(lk[k][0], rk[k][0])
                            if c is not None:
                                wl = [e for e in wl if e[1] != k] + [(c, k)]
                                wr = [e for e in wr if e[1] != k]
                return wl + wr
            case Between(left=l, right=r):
                # a between-state holds two independent branch histories;
                # the merged reading belongs to Comm alone
                return walk(l) + walk(r)
            case ConflictElim(body=b):
                # read through the same expansion the step rules use, so a
                # filter-elimination state agrees with its own successors
                if isinstance(b, RecRef):
                    return []
                exp = theta_expand(b, specs)
                if exp is None or exp == b:
                    return walk(b)
                return walk(exp)
            case Unless(left=l, right=r):
                wl = walk(l)
                if sig is None:
                    return wl
                ctx = alphabet_of(r, specs)
                return [
                    ("tau", k)
                    if lb != "tau" and suppressed_label(sig, lb, ctx, True)
                    else (lb, k)
                    for lb, k in wl
                ]
            case Encap(labels=h, body=b):
                return [e for e in walk(b) if e[0] not in h]
            case Abstract(labels=i_set, body=b):
                return [
                    (("tau" if lb in i_set else lb), k) for lb, k in walk(b)
                ]
        return []

    flat = sorted(walk(t), key=lambda e: (e[1], e[0]))
    occ = {}
    final = []
    for lb, k in flat:
        n = occ.get((lb, k), 0)
        occ[(lb, k)] = n + 1
        final.append((lb, k, n))
    pairs = frozenset((u, v) for u in final for v in final if u[1] < v[1])
    return tuple(final), pairs


# --- exports -----------------------------------------------------------------


def lts_to_json(l: Lts) -> str:
    def edge(e, direction):
        s, lab, d = e
        return {
            "from": render(s),
            "to": render(d),
            "dir": direction,
            "events": [{"label": lb, "key": k} for lb, k in lab.events],
        }

    doc = {
        "initial": render(l.initial),
        "states": [render(s) for s in l.states],
        "edges": [edge(e, "forward") for e in l.forward_edges]
        + [edge(e, "reverse") for e in l.reverse_edges],
        "terminals": {
            "forward": [render(s) for s in l.states if l.fwd_terminal(s)],
            "reverse": [render(s) for s in l.states if l.rev_terminal(s)],
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def lts_to_dot(l: Lts) -> str:
    ids = {s: f"s{i}" for i, s in enumerate(l.states)}
    lines = ["digraph lts {", "  rankdir=LR;"]
    for s in l.states:
        shape = "doublecircle" if s == l.initial else "circle"
        if l.fwd_terminal(s):
            shape = "doubleoctagon" if s == l.initial else "octagon"
        label = render(s).replace('"', '\\"')
        lines.append(f'  {ids[s]} [shape={shape},label="{label}"];')
    for s, lab, d in l.forward_edges:
        lines.append(f'  {ids[s]} -> {ids[d]} [label="{lab}"];')
    for s, lab, d in l.reverse_edges:
        lines.append(f'  {ids[s]} -> {ids[d]} [label="{lab}",style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"
