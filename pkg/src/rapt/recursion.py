"""Recursive specifications: validation, unfolding, clusters, fair abstraction.

A specification is a finite system of equations X_i = t_i where the right
hand sides mention the specification's own variables as <X_i|name>
references.  Guarded linear specs are the workhorse: every summand is an
action block, an action block followed by a variable, or their executed
mirror images, which makes spec-level equivalence and cluster analysis a
finite-graph affair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .terms import (
    MIXED,
    NSTD,
    STD,
    Choice,
    Delta,
    Event,
    Par,
    RecRef,
    Seq,
    Signature,
    Tau,
    Term,
    TermError,
    abstract,
    alphabet_of,
    canonicalize,
    children,
    choice,
    is_basic,
    max_key,
    render,
    seq,
    std_status,
)

FORWARD = "Forward"
REVERSED = "Reversed"
MIXED_DIR = "Mixed"


class UndefinedVariable(TermError):
    """A right-hand side mentions a variable with no equation."""


class UnknownVariable(TermError):
    """Lookup of a variable the specification does not define."""


class Unguarded(TermError):
    """Operation requires a guarded specification."""


class NotLinear(TermError):
    """Operation requires a linear specification."""


class NoCluster(TermError):
    """The variable does not sit in a cluster for the given label set."""


class MixedExitForms(TermError):
    """Cluster exits mix forward and reverse forms."""


class NotBasic(TermError):
    """linearize needs a normalized (basic-form) input."""


@dataclass(frozen=True)
class SpecClassification:
    """guarded: every variable reachable only through an action prefix
    (a silent prefix counts).  guarded_silent: same but tau never guards,
    the discipline the silent-step theory needs.  direction reports whether
    summands step forward, backward, or both."""

    guarded: bool
    guarded_silent: bool
    linear: bool
    direction: str


def _is_bare_atom(t: Term) -> bool:
    return (isinstance(t, Event) or isinstance(t, Tau)) and t.key is None


def _is_keyed_atom(t: Term) -> bool:
    return (isinstance(t, Event) or isinstance(t, Tau)) and t.key is not None


def _is_fwd_block(t: Term) -> bool:
    if _is_bare_atom(t):
        return True
    return isinstance(t, Par) and all(_is_bare_atom(a) for a in t.args)


def _is_rev_block(t: Term) -> bool:
    if _is_keyed_atom(t):
        return True
    if isinstance(t, Par) and all(_is_keyed_atom(a) for a in t.args):
        return len({a.key for a in t.args}) == 1
    return False


def _sure_forward_guard(t: Term, lenient: bool) -> bool:
    match t:
        case Delta():
            return True
        case Event(key=None):
            return True
        case Tau(key=None):
            return lenient
        case Par(args=args):
            return all(_sure_forward_guard(a, lenient) for a in args)
        case Choice(args=args):
            return all(_sure_forward_guard(a, lenient) for a in args)
    return False


def _sure_reverse_guard(t: Term, lenient: bool) -> bool:
    match t:
        case Delta():
            return True
        case Event(key=k) if k is not None:
            return True
        case Tau(key=k) if k is not None:
            return lenient
        case Par(args=args):
            return all(_sure_reverse_guard(a, lenient) for a in args)
        case Choice(args=args):
            return all(_sure_reverse_guard(a, lenient) for a in args)
    return False


def _unguarded_vars(t: Term, lenient: bool) -> set:
    """Variables of t not protected by an action prefix (forward) or an
    executed-action suffix (reverse)."""
    match t:
        case RecRef(var=v):
            return {v}
        case Seq(args=args):
            out = set()
            fwd_seen = False
            rev_after = [False] * len(args)
            later = False
            for i in range(len(args) - 1, -1, -1):
                rev_after[i] = later
                later = later or _sure_reverse_guard(args[i], lenient)
            for i, f in enumerate(args):
                if not (fwd_seen or rev_after[i]):
                    out |= _unguarded_vars(f, lenient)
                fwd_seen = fwd_seen or _sure_forward_guard(f, lenient)
            return out
    out = set()
    for c in children(t):
        out |= _unguarded_vars(c, lenient)
    return out


def _has_cycle(graph: dict) -> bool:
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(graph, WHITE)
    for start in graph:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(graph[start]))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt not in color:
                    continue
                if color[nxt] == GREY:
                    return True
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(graph[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return False


def _summands(t: Term):
    return t.args if isinstance(t, Choice) else (t,)


def _classify(name: str, equations: dict) -> SpecClassification:
    guarded = not _has_cycle(
        {v: _unguarded_vars(rhs, True) for v, rhs in equations.items()}
    )
    guarded_silent = guarded and not _has_cycle(
        {v: _unguarded_vars(rhs, False) for v, rhs in equations.items()}
    )

    linear = True
    fwd_evidence = rev_evidence = False
    for rhs in equations.values():
        if isinstance(rhs, Delta):
            continue
        for s in _summands(rhs):
            match s:
                case Seq(args=(blk, RecRef())) if _is_fwd_block(blk):
                    fwd_evidence = True
                case Seq(args=(RecRef(), blk)) if _is_rev_block(blk):
                    rev_evidence = True
                case _ if _is_fwd_block(s):
                    fwd_evidence = True
                case _ if _is_rev_block(s):
                    rev_evidence = True
                case _:
                    linear = False
    if fwd_evidence and rev_evidence:
        direction = MIXED_DIR
    elif rev_evidence:
        direction = REVERSED
    else:
        direction = FORWARD
    return SpecClassification(guarded, guarded_silent, linear, direction)


@dataclass(frozen=True, eq=False)
class RecSpec:
    """Named equation system; right-hand sides are canonicalized at
    construction and may only reference the spec's own variables."""

    name: str
    equations: dict
    classification: SpecClassification = field(init=False)

    def __post_init__(self):
        if not self.name.isidentifier():
            raise TermError(f"bad specification name {self.name!r}")
        if not self.equations:
            raise TermError("a specification needs at least one equation")
        canon = {}
        for var, rhs in self.equations.items():
            if not (var.isidentifier() and var[:1].isupper()):
                raise TermError(f"bad recursion variable {var!r}")
            canon[var] = canonicalize(rhs)
        object.__setattr__(self, "equations", canon)
        for var, rhs in canon.items():
            self._check_refs(rhs)
        object.__setattr__(self, "classification", _classify(self.name, canon))

    def _check_refs(self, t: Term):
        if isinstance(t, RecRef):
            if t.spec != self.name:
                raise TermError(
                    f"equation references foreign specification {t.spec!r}"
                )
            if t.var not in self.equations:
                raise UndefinedVariable(f"variable {t.var!r} has no equation")
        for c in children(t):
            self._check_refs(c)

    @property
    def direction(self) -> str:
        return self.classification.direction

    @property
    def variables(self) -> tuple:
        return tuple(self.equations)

    def var_ref(self, var: str) -> RecRef:
        if var not in self.equations:
            raise UnknownVariable(f"{var!r} not defined by {self.name}")
        return RecRef(var, self.name)


def validate_spec(spec: RecSpec, sig=None) -> SpecClassification:
    """Classification is computed at construction; this is the named lookup."""
    return spec.classification


def unfold_rdp(spec: RecSpec, var: str) -> Term:
    """One unfolding of <var|spec>: the equation body, whose variable
    occurrences are already <Y|spec> references."""
    if var not in spec.equations:
        raise UnknownVariable(f"{var!r} not defined by {spec.name}")
    return spec.equations[var]


# --- the summand graph of a linear spec --------------------------------------

_F = "F"
_R = "R"


def _block_labels(t: Term) -> tuple:
    atoms = t.args if isinstance(t, Par) else (t,)
    return tuple(
        sorted("tau" if isinstance(a, Tau) else a.label for a in atoms)
    )


def _linear_edges(spec: RecSpec) -> dict:
    """Per variable, the summands as graph edges (dir, labels, succ, term)
    where succ None means the summand runs out with no continuation."""
    edges = {}
    for var, rhs in spec.equations.items():
        if isinstance(rhs, Delta):
            edges[var] = ()
            continue
        out = []
        for s in _summands(rhs):
            match s:
                case Seq(args=(blk, RecRef(var=v))) if _is_fwd_block(blk):
                    out.append((_F, _block_labels(blk), v, s))
                case Seq(args=(RecRef(var=v), blk)) if _is_rev_block(blk):
                    out.append((_R, _block_labels(blk), v, s))
                case _ if _is_fwd_block(s):
                    out.append((_F, _block_labels(s), None, s))
                case _ if _is_rev_block(s):
                    out.append((_R, _block_labels(s), None, s))
                case _:
                    raise NotLinear(
                        f"summand {render(s)} of {var} is not a linear shape"
                    )
        edges[var] = tuple(out)
    return edges


_DEAD = ("dead", None)


def _graph_bisim(edges1: dict, x1: str, edges2: dict, y1: str) -> bool:
    """Partition refinement on the two variable graphs side by side.

    Keys are abstracted and runs through matched summands force each
    other's reverse moves, so block-labeled variable bisimilarity decides
    the strong kinds outright."""
    adj = {_DEAD: ()}
    for tag, edges in (("1", edges1), ("2", edges2)):
        for var, outs in edges.items():
            adj[(tag, var)] = tuple(
                (d, bl, (tag, v) if v is not None else _DEAD)
                for d, bl, v, _t in outs
            )
    order = sorted(adj, key=repr)
    cls = dict.fromkeys(adj, 0)
    while True:
        sigs = {}
        for n in order:
            sigs[n] = (cls[n], frozenset((d, bl, cls[m]) for d, bl, m in adj[n]))
        renum = {}
        fresh = {}
        for n in order:
            fresh[n] = renum.setdefault(sigs[n], len(renum))
        if fresh == cls:
            return cls[("1", x1)] == cls[("2", y1)]
        cls = fresh


# --- spec-level equivalence ---------------------------------------------------


@dataclass(frozen=True)
class BoundedVerdict:
    """Outcome of a spec comparison.  exact means the finite summand graph
    decided it; otherwise the answer holds up to the exploration depth."""

    equivalent: bool
    exact: bool
    kind: str
    depth: int | None = None


def _infer_sig(*parts, specs=None, extra=()) -> Signature:
    labels = set(extra)
    for t in parts:
        labels |= alphabet_of(t, specs)
    labels.discard("tau")
    return Signature(alphabet=frozenset(labels))


def _spec_sig(spec: RecSpec, extra=()) -> Signature:
    return _infer_sig(
        *spec.equations.values(), specs={spec.name: spec}, extra=extra
    )


def _bounded_lts(term: Term, spec: RecSpec, sig, depth: int, max_states: int):
    # imported here: semantics itself pulls in unfold_rdp from this module
    from .semantics import Budget, build_lts

    return build_lts(
        term,
        sig,
        Budget(max_states=max_states, max_key=depth),
        specs={spec.name: spec},
        truncate=True,
    )


def spec_equal(
    e1: RecSpec,
    x1: str,
    e2: RecSpec,
    y1: str,
    kind="fr-step",
    depth: int = 8,
    sig: Signature | None = None,
    max_states: int = 1000,
) -> BoundedVerdict:
    """Do <x1|e1> and <y1|e2> denote the same process under kind?

    Guarded linear specs of one direction are decided exactly on the
    summand graph for the strong kinds.  Everything else is compared on
    depth-bounded transition systems with optimistic horizons, which the
    rooted branching kinds need anyway."""
    from .equivalence import EquivKind, check

    e1.var_ref(x1)
    e2.var_ref(y1)
    for e in (e1, e2):
        if not e.classification.guarded:
            raise Unguarded(f"specification {e.name} is not guarded")
    if not isinstance(kind, EquivKind):
        kind = EquivKind.parse(kind)
    exact = (
        not kind.rooted
        and e1.classification.linear
        and e2.classification.linear
        and MIXED_DIR not in (e1.direction, e2.direction)
    )
    if exact:
        same = _graph_bisim(_linear_edges(e1), x1, _linear_edges(e2), y1)
        return BoundedVerdict(same, exact=True, kind=str(kind))
    if sig is None:
        sig = Signature(
            alphabet=_spec_sig(e1).alphabet | _spec_sig(e2).alphabet
        )
    l1 = _bounded_lts(e1.var_ref(x1), e1, sig, depth, max_states)
    l2 = _bounded_lts(e2.var_ref(y1), e2, sig, depth, max_states)
    v = check(l1, l2, kind)
    return BoundedVerdict(v.equivalent, exact=False, kind=str(kind), depth=depth)


# --- linearization ------------------------------------------------------------


def _fwd_summand_pairs(t: Term):
    """Decompose an unexecuted basic term into (block, continuation | None)
    pairs, one per resolvable first step; the flag reports dead branches."""
    match t:
        case Delta():
            return [], True
        case Choice(args=args):
            pairs, dead = [], False
            for a in args:
                p, d = _fwd_summand_pairs(a)
                pairs.extend(p)
                dead = dead or d
            return pairs, dead
        case _ if _is_fwd_block(t):
            return [(t, None)], False
        case Seq(args=args):
            rest = seq(list(args[1:]))
            pairs, dead = _fwd_summand_pairs(args[0])
            out = []
            for blk, cont in pairs:
                out.append((blk, rest if cont is None else seq([cont, rest])))
            return out, dead
    raise NotLinear(f"no linear reading for {render(t)}")


def _rev_summand_pairs(t: Term):
    """Mirror image: (prefix | None, executed block) pairs, one per
    undoable last step."""
    match t:
        case Delta():
            return [], True
        case Choice(args=args):
            pairs, dead = [], False
            for a in args:
                p, d = _rev_summand_pairs(a)
                pairs.extend(p)
                dead = dead or d
            return pairs, dead
        case _ if _is_rev_block(t):
            return [(None, t)], False
        case Seq(args=args):
            prefix = seq(list(args[:-1]))
            pairs, dead = _rev_summand_pairs(args[-1])
            out = []
            for pre, blk in pairs:
                out.append((prefix if pre is None else seq([prefix, pre]), blk))
            return out, dead
    raise NotLinear(f"no linear reading for {render(t)}")


def linearize(t: Term, sig: Signature | None = None):
    """Present a basic term as a guarded linear spec: (spec, root var).

    <root|spec> and t have the same forward-reverse step behavior.  Terms
    caught mid-run (some steps done, some pending) fall outside the linear
    summand shapes and are rejected."""
    t = canonicalize(t)
    if not is_basic(t):
        raise NotBasic(f"{render(t)} is not in basic form")
    status = std_status(t)
    if status == MIXED:
        raise NotLinear("mid-run terms fall outside the linear summand shapes")
    name = "L"
    var_of = {}
    eqs = {}

    def visit(term: Term) -> str:
        key = render(term)
        if key in var_of:
            return var_of[key]
        var = f"X{len(var_of) + 1}"
        var_of[key] = var
        eqs[var] = None
        if status == STD:
            pairs, _dead = _fwd_summand_pairs(term)
            summands = [
                blk if cont is None else Seq((blk, RecRef(visit(cont), name)))
                for blk, cont in pairs
            ]
        else:
            pairs, _dead = _rev_summand_pairs(term)
            summands = [
                blk if pre is None else Seq((RecRef(visit(pre), name), blk))
                for pre, blk in pairs
            ]
        eqs[var] = Delta() if not summands else choice(summands)
        return var

    root = visit(t)
    return RecSpec(name, eqs), root


# --- clusters and fair abstraction --------------------------------------------


@dataclass(frozen=True)
class Cluster:
    """A set of variables closed under silent-candidate summands for some
    label set, with the summands that leave it."""

    variables: tuple
    exits: tuple
    looping: bool

    def report(self) -> dict:
        return {
            "cluster": list(self.variables),
            "exits": [render(e) for e in self.exits],
        }


def _sccs(graph: dict):
    """Tarjan, iterative; yields each strongly connected component as a
    frozenset, in a deterministic order."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    out = []
    counter = [0]
    for root in sorted(graph):
        if root in index:
            continue
        work = [(root, iter(sorted(graph[root])))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(graph[nxt]))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.add(member)
                    if member == node:
                        break
                out.append(frozenset(comp))
    return out


def find_clusters(spec: RecSpec, labels) -> tuple:
    """Partition the variables into clusters for the label set: maximal
    groups connected by summands whose blocks will all fall silent once
    the labels are hidden.  Every other summand is an exit."""
    if not spec.classification.guarded:
        raise Unguarded(f"specification {spec.name} is not guarded")
    if not spec.classification.linear:
        raise NotLinear(f"specification {spec.name} is not linear")
    edges = _linear_edges(spec)
    allowed = frozenset(labels) | {"tau"}

    def internal(d, bl, succ, members):
        return succ is not None and succ in members and set(bl) <= allowed

    graph = {
        var: [
            succ
            for d, bl, succ, _t in outs
            if succ is not None and set(bl) <= allowed
        ]
        for var, outs in edges.items()
    }
    clusters = []
    for comp in _sccs(graph):
        exits = {}
        looping = False
        for var in sorted(comp):
            for d, bl, succ, s_term in edges[var]:
                if internal(d, bl, succ, comp):
                    looping = True
                else:
                    exits.setdefault(render(s_term), s_term)
        clusters.append(
            Cluster(
                variables=tuple(sorted(comp)),
                exits=tuple(exits[k] for k in sorted(exits)),
                looping=looping,
            )
        )
    clusters.sort(key=lambda c: c.variables)
    return tuple(clusters)


@dataclass(frozen=True)
class CfarResult:
    """Fair-abstraction outcome: the closed form, the cluster it came
    from, and whether the cluster had no way out."""

    term: Term
    cluster: Cluster
    divergent: bool
    verified_depth: int


def _mentions_rec(t: Term) -> bool:
    if isinstance(t, RecRef):
        return True
    return any(_mentions_rec(c) for c in children(t))


def _exit_form(s: Term) -> str:
    match s:
        case Seq(args=(RecRef(), blk)) if _is_rev_block(blk):
            return _R
        case _ if _is_rev_block(s):
            return _R
    return _F


def apply_cfar(
    spec: RecSpec,
    var: str,
    labels,
    sig: Signature | None = None,
    depth: int = 6,
    max_states: int = 600,
) -> CfarResult:
    """Collapse the silent cluster of var under the hidden label set to a
    single guarded escape: tau . hide(sum of exits), or its mirror for
    clusters that run backward.

    The closed form is audited against tau . hide(<var|spec>) on bounded
    transition systems under the rooted branching step kind before it is
    returned."""
    from .equivalence import check
    from .rewriter import normalize

    spec.var_ref(var)
    labels = frozenset(labels)
    clusters = find_clusters(spec, labels)
    cluster = next(c for c in clusters if var in c.variables)
    if not cluster.looping:
        raise NoCluster(
            f"{var} has no silent cycle once {sorted(labels)} are hidden"
        )
    dirs = set()
    edges = _linear_edges(spec)
    allowed = labels | {"tau"}
    for v in cluster.variables:
        for d, bl, succ, _t in edges[v]:
            if succ in cluster.variables and set(bl) <= allowed:
                dirs.add(d)
    if len(dirs) > 1:
        raise MixedExitForms("cluster cycles run in both directions")
    reversed_form = dirs == {_R}
    forms = {_exit_form(s) for s in cluster.exits}
    if len(forms) > 1:
        raise MixedExitForms(
            "cluster exits mix unexecuted and executed summand shapes"
        )
    if forms and forms != ({_R} if reversed_form else {_F}):
        raise MixedExitForms("cluster exits run against the cluster direction")

    if sig is None:
        sig = _spec_sig(spec, extra=labels)
    divergent = not cluster.exits
    fresh = 1 + max((max_key(e) for e in cluster.exits), default=0)
    if divergent:
        # a cluster with no way out collapses to a guarded deadlock by
        # fairness alone; no bisimulation audit can certify that leap
        # (the sequencing rules leave tau . delta inert), so the flag is
        # the caller's only warrant
        form = seq(
            [Delta(), Tau(key=fresh)] if reversed_form else [Tau(), Delta()]
        )
        return CfarResult(
            term=form, cluster=cluster, divergent=True, verified_depth=0
        )
    guard_body = abstract(labels, choice(list(cluster.exits)))
    if reversed_form:
        result = seq([guard_body, Tau(key=fresh)])
        reference = seq([abstract(labels, spec.var_ref(var)), Tau(key=fresh)])
    else:
        result = seq([Tau(), guard_body])
        reference = seq([Tau(), abstract(labels, spec.var_ref(var))])
    if not _mentions_rec(result):
        result = normalize(result, sig)[0]
    l_res = _bounded_lts(result, spec, sig, depth, max_states)
    l_ref = _bounded_lts(reference, spec, sig, depth, max_states)
    verdict = check(l_res, l_ref, "rb-fr-step")
    if not verdict.equivalent:
        raise TermError(
            f"fair abstraction of {var} failed its equivalence audit"
        )
    return CfarResult(
        term=result, cluster=cluster, divergent=divergent, verified_depth=depth
    )
