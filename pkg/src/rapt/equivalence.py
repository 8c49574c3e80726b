"""Deciders for forward-reverse bisimulation equivalences.

Seven kinds are supported: plain and rooted-branching variants of step,
pomset and history-preserving bisimilarity, plus hereditary
history-preserving bisimilarity at small scale.  They all run on one
greatest-fixpoint core: starting from the initial pair (or posetal
triple), every way a defender could answer an attacker is discovered,
then nodes violating their transfer clauses are pruned until the
candidate relation stabilizes.  A surviving initial node yields a witness
relation; a pruned one yields a distinguishing play rebuilt from the
pruning order.

Matching never looks at raw keys.  A reverse step is abstracted to its
label multiset, and the history-preserving kinds additionally require the
undone instances to be exactly the image of the configuration
isomorphism carried by the triple.  Branching kinds treat a step as
silent when every fired label is tau; their rooted variants force the
first move of either system to be answered by an actual move whose
non-silent label content agrees.

Systems built with a key horizon (truncated exploration) compare
optimistically: any node touching a horizon state counts as matched.
Only the step kinds accept truncated systems.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass

from .semantics import (
    BudgetExceeded,
    FORWARD,
    Lts,
    REVERSE,
    visible_instances,
)
from .terms import Term, TermError, render

KINDS = (
    "fr-step",
    "fr-pomset",
    "fr-hp",
    "fr-hhp",
    "rb-fr-step",
    "rb-fr-pomset",
    "rb-fr-hp",
)

MAX_TRIPLES = 1_000_000
HHP_STATE_CAP = 12

_ROOT = ("__root__",)
_BIG = 10**9


@dataclass(frozen=True)
class EquivKind:
    """One of the supported equivalences; k bounds pomset fragments."""

    name: str
    k: int = 4

    def __post_init__(self):
        if self.name not in KINDS:
            raise TermError(f"unknown equivalence kind: {self.name}")
        if self.k < 1:
            raise TermError("pomset size bound is positive")

    @property
    def rooted(self) -> bool:
        return self.name.startswith("rb-")

    @property
    def branching(self) -> bool:
        return self.name.startswith("rb-")

    @property
    def pomset(self) -> bool:
        return "pomset" in self.name

    @classmethod
    def parse(cls, text: str) -> "EquivKind":
        m = re.fullmatch(r"\s*([a-z-]+)(?:\((\d+)\))?\s*", text)
        if not m:
            raise TermError(f"unknown equivalence kind: {text!r}")
        name, k = m.group(1), m.group(2)
        if k is not None and "pomset" not in name:
            raise TermError(f"only pomset kinds take a size bound: {text!r}")
        return cls(name, int(k)) if k is not None else cls(name)

    def __str__(self):
        return f"{self.name}({self.k})" if self.pomset else self.name


@dataclass(frozen=True)
class Verdict:
    """Outcome of an equivalence check.

    A positive verdict carries a witness: the surviving relation, state
    pairs for the step and pomset kinds, posetal triples for the
    history-preserving ones, always containing the initial node.  A
    negative verdict carries a distinguishing play: an alternating list
    of attack and reply entries ending in an attack nobody answered."""

    kind: str
    equivalent: bool
    k: int | None = None
    witness: tuple | None = None
    play: tuple | None = None

    def to_json(self) -> str:
        doc = {"kind": self.kind, "equivalent": self.equivalent}
        if self.k is not None:
            doc["k"] = self.k
        if self.witness is not None:
            doc["witness"] = [list(w) if not isinstance(w, str) else w for w in self.witness]
        if self.play is not None:
            doc["play"] = list(self.play)
        return json.dumps(doc, sort_keys=True, default=list)


# --- abstract move labels -----------------------------------------------------
#
# Step moves become (direction, sorted label tuple); pomset moves become
# Pomset values.  Both drop keys, which is what lets runs with different
# key histories match.


@dataclass(frozen=True, order=True)
class Pomset:
    """Canonical labeled poset: labels indexed 0..n-1, order as strict
    precedence pairs.  Instances are interned via _canon_pomset so equal
    posets compare equal regardless of how they were enumerated."""

    direction: str
    labels: tuple
    order: tuple


_POMSET_CACHE: dict = {}


def _canon_pomset(direction, labels, order) -> Pomset:
    key = (direction, tuple(labels), frozenset(order))
    hit = _POMSET_CACHE.get(key)
    if hit is not None:
        return hit
    n = len(labels)
    best = None
    for perm in itertools.permutations(range(n)):
        lab2 = [None] * n
        for i, p in enumerate(perm):
            lab2[p] = labels[i]
        ord2 = tuple(sorted((perm[i], perm[j]) for i, j in order))
        cand = (tuple(lab2), ord2)
        if best is None or cand < best:
            best = cand
    out = Pomset(direction, best[0], best[1])
    _POMSET_CACHE[key] = out
    return out


def _pomset_hat(p: Pomset) -> Pomset:
    keep = [i for i, lb in enumerate(p.labels) if lb != "tau"]
    remap = {old: new for new, old in enumerate(keep)}
    labels = tuple(p.labels[i] for i in keep)
    order = [(remap[i], remap[j]) for i, j in p.order if i in remap and j in remap]
    return _canon_pomset(p.direction, labels, order)


def render_pomset(p: Pomset) -> str:
    in_order = set()
    parts = [f"{p.labels[i]}<{p.labels[j]}" for i, j in p.order]
    for i, j in p.order:
        in_order.add(i)
        in_order.add(j)
    parts.extend(p.labels[i] for i in range(len(p.labels)) if i not in in_order)
    body = "{" + ", ".join(parts) + "}"
    return body if p.direction == FORWARD else "rev" + body


def _abs_step(lab):
    return (lab.direction, tuple(sorted(lb for lb, _ in lab.events)))


def _dirn(absl):
    return absl.direction if isinstance(absl, Pomset) else absl[0]


def _labels_of(absl):
    return absl.labels if isinstance(absl, Pomset) else absl[1]


def _is_silent(absl) -> bool:
    return all(lb == "tau" for lb in _labels_of(absl))


def _hat(absl):
    if isinstance(absl, Pomset):
        return _pomset_hat(absl)
    d, labels = absl
    return (d, tuple(lb for lb in labels if lb != "tau"))


def _move_str(absl) -> str:
    if isinstance(absl, Pomset):
        return render_pomset(absl)
    d, labels = absl
    body = "{" + ",".join(labels) + "}"
    return body if d == FORWARD else "rev" + body


def _move_sort_key(entry):
    absl, dst = entry
    if isinstance(absl, Pomset):
        return (absl.direction, absl.labels, absl.order, render(dst))
    return (absl[0], absl[1], (), render(dst))


# --- move tables --------------------------------------------------------------


def _edges_by_state(l: Lts):
    fwd, rev = {}, {}
    for s, lab, d in l.forward_edges:
        fwd.setdefault(s, []).append((lab, d))
    for s, lab, d in l.reverse_edges:
        rev.setdefault(s, []).append((lab, d))
    return fwd, rev


def _silent_closure(states, by_state):
    """States reachable through zero or more all-tau steps, per state."""
    out = {}
    for s in states:
        seen = {s}
        frontier = [s]
        while frontier:
            cur = frontier.pop()
            for lab, d in by_state.get(cur, ()):
                if lab.is_silent() and d not in seen:
                    seen.add(d)
                    frontier.append(d)
        out[s] = tuple(sorted(seen, key=render))
    return out


def pomset_moves(l: Lts, s: Term, k: int = 4, weak: bool = False) -> frozenset:
    """Execution fragments of at most k events starting at s, reified as
    labeled posets paired with the state they reach.

    A forward fragment is a nonempty sequence of forward steps; events of
    one step stay unordered, events of an earlier step precede events of
    a later one.  Reverse fragments follow reverse steps and are ordered
    by the run they unwind: the step undone last comes earliest.  With
    weak=True silent events ride along without consuming the bound, so a
    fragment can always pad its visible events with the silent steps
    needed to reach them."""
    if k < 1:
        raise TermError("pomset size bound is positive")

    def span(evs):
        return sum(1 for lb in evs if lb != "tau") if weak else len(evs)

    fwd_by, rev_by = _edges_by_state(l)
    out = set()
    for direction, table in ((FORWARD, fwd_by), (REVERSE, rev_by)):
        stack = [(s, ())]
        while stack:
            cur, steps = stack.pop()
            used = sum(span(st) for st in steps)
            for lab, dst in table.get(cur, ()):
                evs = tuple(sorted(lb for lb, _ in lab.events))
                if used + span(evs) > k:
                    continue
                grown = steps + (evs,)
                out.add((_fragment_pomset(direction, grown), dst))
                stack.append((dst, grown))
    return frozenset(out)


def _fragment_pomset(direction, steps) -> Pomset:
    labels = []
    ids = []
    for st in steps:
        ids.append(range(len(labels), len(labels) + len(st)))
        labels.extend(st)
    order = []
    for i in range(len(steps)):
        for j in range(i + 1, len(steps)):
            early, late = ids[i], ids[j]
            if direction == REVERSE:
                early, late = late, early
            order.extend((u, v) for u in early for v in late)
    return _canon_pomset(direction, tuple(labels), order)


@dataclass
class _Side:
    moves: dict
    index: dict
    silent_fwd: dict
    silent_rev: dict
    fwd_term: dict
    rev_term: dict
    horizon: frozenset


def _make_side(l: Lts, kind: EquivKind) -> _Side:
    fwd_by, rev_by = _edges_by_state(l)
    moves = {}
    for s in l.states:
        if kind.pomset:
            mv = set(pomset_moves(l, s, kind.k, weak=kind.branching))
        else:
            mv = {(_abs_step(lab), d) for lab, d in fwd_by.get(s, ())}
            mv |= {(_abs_step(lab), d) for lab, d in rev_by.get(s, ())}
        moves[s] = tuple(sorted(mv, key=_move_sort_key))
    index = {}
    for s, mv in moves.items():
        for absl, dst in mv:
            key = _hat(absl) if kind.branching else absl
            index.setdefault((s, key), []).append((absl, dst))
    return _Side(
        moves=moves,
        index={key: tuple(v) for key, v in index.items()},
        silent_fwd=_silent_closure(l.states, fwd_by),
        silent_rev=_silent_closure(l.states, rev_by),
        fwd_term={s: l.fwd_terminal(s) for s in l.states},
        rev_term={s: l.rev_terminal(s) for s in l.states},
        horizon=l.horizon,
    )


# --- the fixpoint core --------------------------------------------------------
#
# A node's clauses are (attack, options) pairs; each option is (reply,
# requirements) where the requirements are nodes that must stay alive for
# the option to answer the attack.  A clause with no surviving option
# kills the node.  Horizon nodes carry clauses None and are never killed.


def _solve(initials, expand, horizon, max_nodes):
    clauses = {}
    queue = list(initials)
    while queue:
        node = queue.pop()
        if node in clauses:
            continue
        if horizon(node):
            clauses[node] = None
            continue
        cl = expand(node)
        clauses[node] = cl
        if len(clauses) > max_nodes:
            raise BudgetExceeded(max_nodes)
        for _attack, options in cl:
            for _reply, req in options:
                for q in req:
                    if q not in clauses:
                        queue.append(q)
    alive = set(clauses)
    rounds = {}
    rnd = 0
    while True:
        rnd += 1
        dead = []
        for node in alive:
            cl = clauses[node]
            if cl is None:
                continue
            for _attack, options in cl:
                if not any(all(q in alive for q in req) for _reply, req in options):
                    dead.append(node)
                    break
        if not dead:
            break
        for node in dead:
            alive.discard(node)
            rounds[node] = rnd
    return clauses, alive, rounds


def _fmt_attack(att):
    out = {"role": "attack", "side": att["side"]}
    if "claim" in att:
        out["claim"] = att["claim"]
        if "to" in att and att["to"] is not None:
            out["to"] = render(att["to"])
        return out
    out["direction"] = _dirn(att["move"])
    out["move"] = _move_str(att["move"])
    out["to"] = render(att["to"])
    return out


def _fmt_reply(rep):
    out = {"role": "reply", "side": rep["side"]}
    if rep.get("horizon"):
        out["horizon"] = True
        return out
    if rep.get("stutter"):
        out["stutter"] = True
        out["to"] = render(rep["to"])
        return out
    if rep.get("via") is not None:
        out["via"] = render(rep["via"])
    if rep.get("move") is not None:
        out["move"] = _move_str(rep["move"])
    out["to"] = render(rep["to"])
    return out


def _extract_play(start, clauses, rounds):
    """Rebuild a distinguishing play from the pruning order: pick an
    attack all of whose answers died strictly earlier, log the longest
    surviving answer, recurse on what blocked it."""
    play = []
    cur = start
    while True:
        r = rounds.get(cur, _BIG)
        chosen = None
        for attack, options in clauses[cur] or ():
            blockers = []
            refuted = True
            for reply, req in options:
                dead = [q for q in req if rounds.get(q, _BIG) < r]
                if not dead:
                    refuted = False
                    break
                blockers.append((reply, max(dead, key=lambda q: rounds[q])))
            if refuted:
                chosen = (attack, blockers)
                break
        if chosen is None:
            return tuple(play)
        attack, blockers = chosen
        play.append(_fmt_attack(attack))
        if not blockers:
            return tuple(play)
        reply, nxt = max(blockers, key=lambda b: rounds[b[1]])
        play.append(_fmt_reply(reply))
        cur = nxt


# --- pair games (step and pomset kinds) ---------------------------------------


def _orient(a, b, left):
    return (a, b) if left else (b, a)


def _pair_clauses(pair, a_side: _Side, b_side: _Side, branching: bool):
    x, y = pair
    out = []
    for me, other, left in ((a_side, b_side, True), (b_side, a_side, False)):
        p, q = (x, y) if left else (y, x)
        side = "left" if left else "right"
        oside = "right" if left else "left"
        for absl, p2 in me.moves.get(p, ()):
            dirn = _dirn(absl)
            options = []
            if branching and _is_silent(absl):
                options.append(
                    ({"side": oside, "stutter": True, "to": q}, (_orient(p2, q, left),))
                )
            key = _hat(absl) if branching else absl
            walk = (
                (other.silent_fwd if dirn == FORWARD else other.silent_rev)[q]
                if branching
                else (q,)
            )
            for q0 in walk:
                via = None if q0 == q else q0
                if q0 in other.horizon:
                    # the answer may lie past the exploration cutoff;
                    # concede it optimistically
                    options.append(({"side": oside, "horizon": True}, ()))
                for absl2, q2 in other.index.get((q0, key), ()):
                    req = [_orient(p2, q2, left)]
                    if via is not None:
                        req.append(_orient(p, q0, left))
                    options.append(
                        ({"side": oside, "via": via, "move": absl2, "to": q2}, tuple(req))
                    )
            out.append(({"side": side, "move": absl, "to": p2}, tuple(options)))
        if branching:
            for claim, mine, theirs, walk_map in (
                ("forward-termination", me.fwd_term, other.fwd_term, other.silent_fwd),
                ("reverse-termination", me.rev_term, other.rev_term, other.silent_rev),
            ):
                if mine[p]:
                    options = tuple(
                        ({"side": oside, "to": q0}, (_orient(p, q0, left),))
                        for q0 in walk_map[q]
                        if theirs[q0] or q0 in other.horizon
                    )
                    out.append(({"side": side, "claim": claim, "to": None}, options))
    return out


def _root_clauses(pair, a_side: _Side, b_side: _Side):
    """Rooted matching: the first move must be answered by an actual move
    with the same non-silent label content, landing in the residual
    relation.  No stuttering, no silent detours."""
    x, y = pair
    out = []
    for me, other, left in ((a_side, b_side, True), (b_side, a_side, False)):
        p, q = (x, y) if left else (y, x)
        side = "left" if left else "right"
        oside = "right" if left else "left"
        for absl, p2 in me.moves.get(p, ()):
            key = _hat(absl)
            options = [
                ({"side": oside, "move": absl2, "to": q2}, (_orient(p2, q2, left),))
                for absl2, q2 in other.index.get((q, key), ())
            ]
            if q in other.horizon:
                options.append(({"side": oside, "horizon": True}, ()))
            out.append(({"side": side, "move": absl, "to": p2}, tuple(options)))
    return out


def _game_verdict(l1: Lts, l2: Lts, kind: EquivKind) -> Verdict:
    a_side = _make_side(l1, kind)
    b_side = _make_side(l2, kind)
    init = (l1.initial, l2.initial)

    def horizon(pair):
        return pair[0] in a_side.horizon or pair[1] in b_side.horizon

    clauses, alive, rounds = _solve(
        [init],
        lambda pair: _pair_clauses(pair, a_side, b_side, kind.branching),
        horizon,
        MAX_TRIPLES,
    )
    kq = kind.k if kind.pomset else None
    if kind.rooted:
        root = _root_clauses(init, a_side, b_side)
        clauses[_ROOT] = root
        equivalent = all(
            any(all(q in alive for q in req) for _reply, req in options)
            for _attack, options in root
        )
        start = _ROOT
    else:
        equivalent = init in alive
        start = init
    if equivalent:
        pairs = sorted(((render(a), render(b)) for a, b in alive), key=lambda w: w)
        if kind.rooted:
            pairs = [(render(init[0]), render(init[1]))] + pairs
        return Verdict(kind=kind.name, equivalent=True, k=kq, witness=tuple(pairs))
    return Verdict(
        kind=kind.name,
        equivalent=False,
        k=kq,
        play=_extract_play(start, clauses, rounds),
    )


# --- history-preserving games ---------------------------------------------


def _config(t: Term, drop_tau: bool, sig=None, specs=None):
    insts, order = visible_instances(t, sig, specs)
    if drop_tau:
        insts = tuple(i for i in insts if i[0] != "tau")
        keep = set(insts)
        order = frozenset(p for p in order if p[0] in keep and p[1] in keep)
    return frozenset(insts), frozenset(order)


def _inst_str(inst) -> str:
    label, key, occ = inst
    return f"{label}[{key}]#{occ}"


def _order_iso(fpairs, o1, o2) -> bool:
    fd = dict(fpairs)
    for u in fd:
        for v in fd:
            if u == v:
                continue
            if ((u, v) in o1) != ((fd[u], fd[v]) in o2):
                return False
    return True


def _isos(c1, c2):
    """Label-preserving order-isomorphisms between two configurations."""
    i1, o1 = c1
    i2, o2 = c2
    by1, by2 = {}, {}
    for i in sorted(i1):
        by1.setdefault(i[0], []).append(i)
    for i in sorted(i2):
        by2.setdefault(i[0], []).append(i)
    if {lb: len(v) for lb, v in by1.items()} != {lb: len(v) for lb, v in by2.items()}:
        return []
    labels = sorted(by1)
    out = []
    pools = [list(itertools.permutations(by2[lb])) for lb in labels]
    for combo in itertools.product(*pools):
        f = []
        for lb, perm in zip(labels, combo):
            f.extend(zip(by1[lb], perm))
        f = frozenset(f)
        if _order_iso(f, o1, o2):
            out.append(f)
    return out


def _matchings(added1, added2):
    """Label-preserving bijections between two added-instance sets."""
    return _isos((added1, frozenset()), (added2, frozenset()))


@dataclass
class _HSide:
    fwd: dict  # state -> ((absl, dst, added instances), ...)
    rev: dict  # state -> ((absl, dst, removed instances), ...)
    cfg: dict
    silent_fwd: dict
    silent_rev: dict
    fwd_term: dict
    rev_term: dict


def _hp_side(l: Lts, branching: bool) -> _HSide:
    cfg = {s: _config(s, branching, l.sig, l.specs) for s in l.states}
    fwd_by, rev_by = _edges_by_state(l)
    fwd, rev = {}, {}
    for s in l.states:
        fwd[s] = tuple(
            sorted(
                ((_abs_step(lab), d, cfg[d][0] - cfg[s][0]) for lab, d in fwd_by.get(s, ())),
                key=lambda e: (_move_sort_key(e[:2])),
            )
        )
        rev[s] = tuple(
            sorted(
                ((_abs_step(lab), d, cfg[s][0] - cfg[d][0]) for lab, d in rev_by.get(s, ())),
                key=lambda e: (_move_sort_key(e[:2])),
            )
        )
    return _HSide(
        fwd=fwd,
        rev=rev,
        cfg=cfg,
        silent_fwd=_silent_closure(l.states, fwd_by),
        silent_rev=_silent_closure(l.states, rev_by),
        fwd_term={s: l.fwd_terminal(s) for s in l.states},
        rev_term={s: l.rev_terminal(s) for s in l.states},
    )


def _mk3(p, f, q, left):
    return (p, f, q) if left else (q, f, p)


def _flip(f):
    return frozenset((w, u) for u, w in f)


def _hp_transfer(p, q, f, me, other, left, branching, rooted=False):
    """Clauses for the moves of p (label matching, isomorphism bookkeeping),
    answered from q.  With rooted=True the defender may neither stutter
    nor take silent detours."""
    side = "left" if left else "right"
    oside = "right" if left else "left"
    fd = dict(f) if left else {w: u for u, w in f}
    out = []
    for absl, p2, added in me.fwd.get(p, ()):
        options = []
        if branching and not rooted and _is_silent(absl):
            options.append(({"side": oside, "stutter": True, "to": q}, (_mk3(p2, f, q, left),)))
        key = _hat(absl) if branching else absl
        walk = other.silent_fwd[q] if branching and not rooted else (q,)
        for q0 in walk:
            via = None if q0 == q else q0
            for absl2, q2, added2 in other.fwd.get(q0, ()):
                if (_hat(absl2) if branching else absl2) != key:
                    continue
                lcfg, rcfg = (
                    (me.cfg[p2], other.cfg[q2]) if left else (other.cfg[q2], me.cfg[p2])
                )
                for m in _matchings(added, added2):
                    f2 = f | (m if left else _flip(m))
                    if not _order_iso(f2, lcfg[1], rcfg[1]):
                        continue
                    req = [_mk3(p2, f2, q2, left)]
                    if via is not None:
                        req.append(_mk3(p, f, q0, left))
                    options.append(
                        ({"side": oside, "via": via, "move": absl2, "to": q2}, tuple(req))
                    )
        out.append(({"side": side, "move": absl, "to": p2}, tuple(options)))
    for absl, p2, removed in me.rev.get(p, ()):
        options = []
        if branching and not rooted and _is_silent(absl):
            options.append(({"side": oside, "stutter": True, "to": q}, (_mk3(p2, f, q, left),)))
        key = _hat(absl) if branching else absl
        # instances never tracked by f (history the systems started with)
        # are matched by step label alone; tracked ones must undo their
        # exact partners
        tracked = frozenset(u for u in removed if u in fd)
        image = frozenset(fd[u] for u in tracked)
        rng = frozenset((w if left else u) for u, w in f)
        f2 = frozenset(pair for pair in f if pair[0 if left else 1] not in removed)
        walk = other.silent_rev[q] if branching and not rooted else (q,)
        for q0 in walk:
            via = None if q0 == q else q0
            for absl2, q2, removed2 in other.rev.get(q0, ()):
                if (_hat(absl2) if branching else absl2) != key:
                    continue
                if (removed2 & rng) != image:
                    continue
                req = [_mk3(p2, f2, q2, left)]
                if via is not None:
                    req.append(_mk3(p, f, q0, left))
                options.append(
                    ({"side": oside, "via": via, "move": absl2, "to": q2}, tuple(req))
                )
        out.append(({"side": side, "move": absl, "to": p2}, tuple(options)))
    return out


def _hp_clauses(triple, h1: _HSide, h2: _HSide, branching: bool):
    s1, f, s2 = triple
    out = []
    out.extend(_hp_transfer(s1, s2, f, h1, h2, True, branching))
    out.extend(_hp_transfer(s2, s1, f, h2, h1, False, branching))
    if branching:
        for me, other, left in ((h1, h2, True), (h2, h1, False)):
            p, q = (s1, s2) if left else (s2, s1)
            side = "left" if left else "right"
            oside = "right" if left else "left"
            for claim, mine, theirs, walk_map in (
                ("forward-termination", me.fwd_term, other.fwd_term, other.silent_fwd),
                ("reverse-termination", me.rev_term, other.rev_term, other.silent_rev),
            ):
                if mine[p]:
                    options = tuple(
                        ({"side": oside, "to": q0}, (_mk3(p, f, q0, left),))
                        for q0 in walk_map[q]
                        if theirs[q0]
                    )
                    out.append(({"side": side, "claim": claim, "to": None}, options))
    return out


def _render_triple(triple):
    s1, f, s2 = triple
    body = tuple(sorted((_inst_str(u), _inst_str(w)) for u, w in f))
    return (render(s1), body, render(s2))


def hp_game(l1: Lts, l2: Lts, rooted_branching: bool = False, max_triples: int = MAX_TRIPLES) -> Verdict:
    """History-preserving bisimulation game over posetal triples
    (state, isomorphism, state).  Forward moves extend the isomorphism by
    the matched fresh instances; reverse moves must undo exactly
    corresponding instances and contract it.  With rooted_branching the
    residual game abstracts silent steps and the first move is matched
    strictly."""
    if l1.horizon or l2.horizon:
        raise TermError("truncated systems support only the step kinds")
    branching = bool(rooted_branching)
    kindname = "rb-fr-hp" if rooted_branching else "fr-hp"
    h1 = _hp_side(l1, branching)
    h2 = _hp_side(l2, branching)
    # the isomorphism tracks instances executed during the play; history
    # the initial states already carry is matched by step labels only
    inits = [(l1.initial, frozenset(), l2.initial)]
    clauses, alive, rounds = _solve(
        inits,
        lambda T: _hp_clauses(T, h1, h2, branching),
        lambda T: False,
        max_triples,
    )
    if rooted_branching:
        last_root = None
        for T0 in inits:
            root = _hp_transfer(T0[0], T0[2], T0[1], h1, h2, True, True, rooted=True)
            root += _hp_transfer(T0[2], T0[0], T0[1], h2, h1, False, True, rooted=True)
            if all(
                any(all(q in alive for q in req) for _reply, req in options)
                for _attack, options in root
            ):
                witness = [_render_triple(T0)] + sorted(
                    _render_triple(T) for T in alive
                )
                return Verdict(kind=kindname, equivalent=True, witness=tuple(witness))
            last_root = root
        clauses[_ROOT] = last_root
        return Verdict(
            kind=kindname, equivalent=False, play=_extract_play(_ROOT, clauses, rounds)
        )
    survivors = [T for T in inits if T in alive]
    if survivors:
        witness = tuple(sorted(_render_triple(T) for T in alive))
        return Verdict(kind=kindname, equivalent=True, witness=witness)
    return Verdict(
        kind=kindname, equivalent=False, play=_extract_play(inits[0], clauses, rounds)
    )


def _rev_reach(l: Lts):
    _, rev_by = _edges_by_state(l)
    out = {}
    for s in l.states:
        seen = {s}
        frontier = [s]
        while frontier:
            cur = frontier.pop()
            for _lab, d in rev_by.get(cur, ()):
                if d not in seen:
                    seen.add(d)
                    frontier.append(d)
        out[s] = tuple(sorted(seen, key=render))
    return out


def hhp_check(l1: Lts, l2: Lts, max_triples: int = MAX_TRIPLES) -> Verdict:
    """Hereditary history-preserving check: a history-preserving
    bisimulation additionally closed under pointwise prefixes.  Every
    rewind of a related pair of states (restricting the isomorphism
    accordingly) must land on a related triple again.  Small systems
    only."""
    if len(l1.states) > HHP_STATE_CAP or len(l2.states) > HHP_STATE_CAP:
        raise BudgetExceeded(HHP_STATE_CAP)
    if l1.horizon or l2.horizon:
        raise TermError("truncated systems support only the step kinds")
    h1 = _hp_side(l1, False)
    h2 = _hp_side(l2, False)
    reach1 = _rev_reach(l1)
    reach2 = _rev_reach(l2)
    inits = [(l1.initial, frozenset(), l2.initial)]

    def expand(T):
        out = _hp_clauses(T, h1, h2, False)
        s1, f, s2 = T
        # rewinds are compared on the played (tracked) part of the
        # configurations; pre-existing history is outside the isomorphism
        dom_f = frozenset(u for u, _w in f)
        rng_f = frozenset(w for _u, w in f)
        for t1 in reach1[s1]:
            if t1 == s1:
                continue
            dom = h1.cfg[t1][0]
            g = frozenset(pair for pair in f if pair[0] in dom)
            image = frozenset(w for _u, w in g)
            options = tuple(
                ({"side": "right", "to": t2}, ((t1, g, t2),))
                for t2 in reach2[s2]
                if (h2.cfg[t2][0] & rng_f) == image
            )
            out.append(({"side": "left", "claim": "prefix", "to": t1}, options))
        for t2 in reach2[s2]:
            if t2 == s2:
                continue
            dom = h2.cfg[t2][0]
            g = frozenset(pair for pair in f if pair[1] in dom)
            image = frozenset(u for u, _w in g)
            options = tuple(
                ({"side": "left", "to": t1}, ((t1, g, t2),))
                for t1 in reach1[s1]
                if (h1.cfg[t1][0] & dom_f) == image
            )
            out.append(({"side": "right", "claim": "prefix", "to": t2}, options))
        return out

    clauses, alive, rounds = _solve(inits, expand, lambda T: False, max_triples)
    survivors = [T for T in inits if T in alive]
    if survivors:
        witness = tuple(sorted(_render_triple(T) for T in alive))
        return Verdict(kind="fr-hhp", equivalent=True, witness=witness)
    return Verdict(
        kind="fr-hhp", equivalent=False, play=_extract_play(inits[0], clauses, rounds)
    )


# --- entry point ---------------------------------------------------------------


def check(l1: Lts, l2: Lts, kind) -> Verdict:
    """Decide the requested forward-reverse equivalence between two finite
    systems.  kind may be an EquivKind or its string form, e.g.
    "fr-step" or "fr-pomset(4)"."""
    k = EquivKind.parse(kind) if isinstance(kind, str) else kind
    if k.name == "fr-hhp":
        return hhp_check(l1, l2)
    if k.name.endswith("-hp"):
        return hp_game(l1, l2, rooted_branching=k.rooted)
    if k.pomset and (l1.horizon or l2.horizon):
        raise TermError("truncated systems support only the step kinds")
    return _game_verdict(l1, l2, k)


# --- independent witness verification ------------------------------------------


def _witness_ok(node_ok, members, horizon):
    for node in members:
        if horizon(node):
            continue
        if not node_ok(node):
            return False
    return True


def verify_witness(l1: Lts, l2: Lts, verdict: Verdict) -> bool:
    """Re-evaluate a positive verdict's witness against the transfer
    clauses directly, without the discovery/pruning engine: every member
    must have all its attacks answered inside the witness, and the
    initial node must be present (for rooted kinds, the leading entry
    must satisfy the root clauses against the rest)."""
    if not verdict.equivalent or not verdict.witness:
        return False
    kind = EquivKind(verdict.kind, verdict.k) if verdict.k else EquivKind(verdict.kind)
    by1 = {render(s): s for s in l1.states}
    by2 = {render(s): s for s in l2.states}
    if kind.name in ("fr-hp", "rb-fr-hp", "fr-hhp"):
        return _verify_hp(l1, l2, verdict, kind, by1, by2)
    a_side = _make_side(l1, kind)
    b_side = _make_side(l2, kind)
    entries = []
    for xs, ys in verdict.witness:
        if xs not in by1 or ys not in by2:
            return False
        entries.append((by1[xs], by2[ys]))
    init = (l1.initial, l2.initial)
    if kind.rooted:
        if entries[0] != init:
            return False
        members = set(entries[1:])
        root = _root_clauses(init, a_side, b_side)
        if not all(
            any(all(q in members for q in req) for _r, req in options)
            for _a, options in root
        ):
            return False
    else:
        members = set(entries)
        if init not in members:
            return False

    def horizon(pair):
        return pair[0] in a_side.horizon or pair[1] in b_side.horizon

    def node_ok(pair):
        for _attack, options in _pair_clauses(pair, a_side, b_side, kind.branching):
            if not any(
                all(q == pair or q in members or horizon(q) for q in req)
                for _reply, req in options
            ):
                return False
        return True

    return _witness_ok(node_ok, members, horizon)


def _verify_hp(l1, l2, verdict, kind, by1, by2):
    branching = kind.branching
    h1 = _hp_side(l1, branching)
    h2 = _hp_side(l2, branching)
    inst1 = {s: {_inst_str(i): i for i in h1.cfg[s][0]} for s in l1.states}
    inst2 = {s: {_inst_str(i): i for i in h2.cfg[s][0]} for s in l2.states}
    entries = []
    for xs, fpairs, ys in verdict.witness:
        if xs not in by1 or ys not in by2:
            return False
        s1, s2 = by1[xs], by2[ys]
        try:
            f = frozenset((inst1[s1][u], inst2[s2][w]) for u, w in fpairs)
        except KeyError:
            return False
        entries.append((s1, f, s2))
    if kind.rooted:
        head, members = entries[0], set(entries[1:])
        if head[0] != l1.initial or head[2] != l2.initial:
            return False
        root = _hp_transfer(head[0], head[2], head[1], h1, h2, True, True, rooted=True)
        root += _hp_transfer(head[2], head[0], head[1], h2, h1, False, True, rooted=True)
        if not all(
            any(all(q in members for q in req) for _r, req in options)
            for _a, options in root
        ):
            return False
    else:
        members = set(entries)
        if not any(T[0] == l1.initial and T[2] == l2.initial for T in members):
            return False
    reach1 = _rev_reach(l1) if kind.name == "fr-hhp" else None
    reach2 = _rev_reach(l2) if kind.name == "fr-hhp" else None

    def prefixes_covered(T):
        s1, f, s2 = T
        dom_f = frozenset(u for u, _w in f)
        rng_f = frozenset(w for _u, w in f)
        for t1 in reach1[s1]:
            if t1 == s1:
                continue
            dom = h1.cfg[t1][0]
            g = frozenset(p for p in f if p[0] in dom)
            image = frozenset(w for _u, w in g)
            if not any(
                (t1, g, t2) in members
                for t2 in reach2[s2]
                if (h2.cfg[t2][0] & rng_f) == image
            ):
                return False
        for t2 in reach2[s2]:
            if t2 == s2:
                continue
            dom = h2.cfg[t2][0]
            g = frozenset(p for p in f if p[1] in dom)
            image = frozenset(u for u, _w in g)
            if not any(
                (t1, g, t2) in members
                for t1 in reach1[s1]
                if (h1.cfg[t1][0] & dom_f) == image
            ):
                return False
        return True

    def node_ok(T):
        if reach1 is not None and not prefixes_covered(T):
            return False
        for _attack, options in _hp_clauses(T, h1, h2, branching):
            if not any(
                all(q == T or q in members for q in req) for _reply, req in options
            ):
                return False
        return True

    return _witness_ok(node_ok, members, lambda T: False)
