"""Process term ASTs, canonical forms, and signature bookkeeping.

Terms model processes that run both forward and backward: an unexecuted
action ``a`` turns into the history ``a[3]`` once executed (3 is the step
key), and reversing removes the key again.  Everything downstream (the
rewriter, the transition semantics, the equivalence checkers) works on the
canonical shape produced by :func:`canonicalize`.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# delta/tau are constants; theta/enc/hide are operator keywords in the
# concrete syntax, so none of them may name an event.
RESERVED_NAMES = ("delta", "tau", "theta", "enc", "hide")


class TermError(Exception):
    """Base error for malformed terms or signatures."""

    def __init__(self, message):
        super().__init__(message)
        self.message = message


class KeyClash(TermError):
    """The same step key decorates two causally ordered instances."""


class UnknownLabel(TermError):
    """An event label is not part of the signature's alphabet."""


# Rendering precedence, loosest to tightest.  The three "parallel family"
# operators share one level and are always parenthesized inside each other.
PREC_CHOICE = 10
PREC_UNLESS = 20
PREC_PAR = 30
PREC_SEQ = 40
PREC_ATOM = 100


class Term:
    __slots__ = ()
    prec = PREC_ATOM

    def __str__(self):
        return render(self)

    def __repr__(self):
        return f"{type(self).__name__}({render(self)!r})"


@dataclass(frozen=True, repr=False)
class Event(Term):
    """A standard event when key is None, else the executed history e[key]."""

    label: str
    key: int | None = None

    def __post_init__(self):
        if not _ident_ok(self.label):
            raise TermError(f"bad event label {self.label!r}")
        if self.key is not None and self.key < 1:
            raise TermError("event keys are positive integers")


@dataclass(frozen=True, repr=False)
class Delta(Term):
    """Deadlock: no moves in either direction."""


@dataclass(frozen=True, repr=False)
class Tau(Term):
    """The silent step; Tau(k) is its executed history tau[k].

    The paper treats tau as unkeyed in both directions, which would make
    executing tau indistinguishable from not having run it and would break
    the forward/reverse loop property.  We let tau leave a keyed residue
    like any other event; only the residue can be undone.
    """

    key: int | None = None

    def __post_init__(self):
        if self.key is not None and self.key < 1:
            raise TermError("tau keys are positive integers")


@dataclass(frozen=True, repr=False)
class Choice(Term):
    args: tuple
    prec = PREC_CHOICE

    def __post_init__(self):
        if len(self.args) < 2:
            raise TermError("Choice needs at least two alternatives")


@dataclass(frozen=True, repr=False)
class Seq(Term):
    args: tuple
    prec = PREC_SEQ

    def __post_init__(self):
        if len(self.args) < 2:
            raise TermError("Seq needs at least two factors")


@dataclass(frozen=True, repr=False)
class Par(Term):
    args: tuple
    prec = PREC_PAR

    def __post_init__(self):
        if len(self.args) < 2:
            raise TermError("Par needs at least two components")


@dataclass(frozen=True, repr=False)
class Comm(Term):
    left: Term
    right: Term
    prec = PREC_PAR


@dataclass(frozen=True, repr=False)
class Between(Term):
    """Full concurrent composition: runs as Par plus Comm (axiom style)."""

    left: Term
    right: Term
    prec = PREC_PAR


@dataclass(frozen=True, repr=False)
class ConflictElim(Term):
    body: Term


@dataclass(frozen=True, repr=False)
class Unless(Term):
    left: Term
    right: Term
    prec = PREC_UNLESS


@dataclass(frozen=True, repr=False)
class Encap(Term):
    labels: frozenset
    body: Term


@dataclass(frozen=True, repr=False)
class Abstract(Term):
    labels: frozenset
    body: Term


@dataclass(frozen=True, repr=False)
class RecRef(Term):
    """Reference <X|S> to variable X of the specification named S."""

    var: str
    spec: str

    def __post_init__(self):
        if not (self.var.isidentifier() and self.var[:1].isupper()):
            raise TermError(f"recursion variables start uppercase; got {self.var!r}")
        if not self.spec.isidentifier():
            raise TermError(f"bad specification name {self.spec!r}")


def _label_set(labels):
    out = frozenset(labels)
    for name in out:
        if name in RESERVED_NAMES:
            raise TermError(f"{name!r} cannot appear in an operator label set")
    return out


def encap(labels, body) -> Term:
    return Encap(_label_set(labels), body)


def abstract(labels, body) -> Term:
    return Abstract(_label_set(labels), body)


def render(t: Term) -> str:
    """Canonical text form; doubles as the ordering key for + and ||."""

    def wrap(child, parent_prec, force_equal=False):
        s = render(child)
        if child.prec < parent_prec or (force_equal and child.prec == parent_prec):
            return "(" + s + ")"
        return s

    match t:
        case Event(label=lb, key=None):
            return lb
        case Event(label=lb, key=k):
            return f"{lb}[{k}]"
        case Delta():
            return "delta"
        case Tau(key=None):
            return "tau"
        case Tau(key=k):
            return f"tau[{k}]"
        case Choice(args=args):
            return " + ".join(wrap(a, PREC_CHOICE) for a in args)
        case Seq(args=args):
            return " . ".join(wrap(a, PREC_SEQ) for a in args)
        case Par(args=args):
            return " || ".join(wrap(a, PREC_PAR, force_equal=True) for a in args)
        case Comm(left=l, right=r):
            return f"{wrap(l, PREC_PAR, True)} | {wrap(r, PREC_PAR, True)}"
        case Between(left=l, right=r):
            return f"{wrap(l, PREC_PAR, True)} & {wrap(r, PREC_PAR, True)}"
        case ConflictElim(body=b):
            return f"theta({render(b)})"
        case Unless(left=l, right=r):
            # left associative: left child may sit bare at equal precedence
            return f"{wrap(l, PREC_UNLESS)} <| {wrap(r, PREC_UNLESS, True)}"
        case Encap(labels=ls, body=b):
            return "enc{%s}(%s)" % (",".join(sorted(ls)), render(b))
        case Abstract(labels=ls, body=b):
            return "hide{%s}(%s)" % (",".join(sorted(ls)), render(b))
        case RecRef(var=v, spec=s):
            return f"<{v}|{s}>"
    raise TermError(f"unrenderable node {t!r}")


def choice(items) -> Term:
    """Smart constructor: flatten, sort by rendering, drop duplicates."""
    flat = []
    for it in items:
        if isinstance(it, Choice):
            flat.extend(it.args)
        else:
            flat.append(it)
    if not flat:
        raise TermError("empty choice")
    seen = {}
    for it in flat:
        seen.setdefault(render(it), it)
    args = tuple(seen[k] for k in sorted(seen))
    return args[0] if len(args) == 1 else Choice(args)


def seq(items) -> Term:
    flat = []
    for it in items:
        if isinstance(it, Seq):
            flat.extend(it.args)
        else:
            flat.append(it)
    if not flat:
        raise TermError("empty sequence")
    return flat[0] if len(flat) == 1 else Seq(tuple(flat))


def par(items) -> Term:
    flat = []
    for it in items:
        if isinstance(it, Par):
            flat.extend(it.args)
        else:
            flat.append(it)
    if not flat:
        raise TermError("empty parallel composition")
    if len(flat) == 1:
        return flat[0]
    return Par(tuple(sorted(flat, key=render)))


def canonicalize(t: Term) -> Term:
    """Rebuild bottom-up through the smart constructors.

    Choice and Par args end up flattened and sorted by their rendering;
    duplicate Choice alternatives collapse (x + x = x).  Seq is flattened
    only.  Idempotent.
    """
    match t:
        case Event() | Delta() | Tau() | RecRef():
            return t
        case Choice(args=args):
            return choice(canonicalize(a) for a in args)
        case Seq(args=args):
            return seq(canonicalize(a) for a in args)
        case Par(args=args):
            return par(canonicalize(a) for a in args)
        case Comm(left=l, right=r):
            return Comm(canonicalize(l), canonicalize(r))
        case Between(left=l, right=r):
            return Between(canonicalize(l), canonicalize(r))
        case ConflictElim(body=b):
            return ConflictElim(canonicalize(b))
        case Unless(left=l, right=r):
            return Unless(canonicalize(l), canonicalize(r))
        case Encap(labels=ls, body=b):
            return Encap(ls, canonicalize(b))
        case Abstract(labels=ls, body=b):
            return Abstract(ls, canonicalize(b))
    raise TermError(f"cannot canonicalize {t!r}")


def children(t: Term) -> tuple:
    match t:
        case Choice(args=a) | Seq(args=a) | Par(args=a):
            return a
        case Comm(left=l, right=r) | Between(left=l, right=r) | Unless(left=l, right=r):
            return (l, r)
        case ConflictElim(body=b) | Encap(body=b) | Abstract(body=b):
            return (b,)
    return ()


def with_children(t: Term, new: tuple) -> Term:
    """Rebuild t with replaced children (no canonicalization here)."""
    match t:
        case Choice():
            return Choice(tuple(new))
        case Seq():
            return Seq(tuple(new))
        case Par():
            return Par(tuple(new))
        case Comm():
            return Comm(new[0], new[1])
        case Between():
            return Between(new[0], new[1])
        case Unless():
            return Unless(new[0], new[1])
        case ConflictElim():
            return ConflictElim(new[0])
        case Encap(labels=ls):
            return Encap(ls, new[0])
        case Abstract(labels=ls):
            return Abstract(ls, new[0])
    if new:
        raise TermError(f"{t!r} has no children to replace")
    return t


def subterm_at(t: Term, path) -> Term:
    cur = t
    for i in path:
        kids = children(cur)
        if i >= len(kids):
            raise TermError(f"path {list(path)} leaves the term")
        cur = kids[i]
    return cur


def replace_at(t: Term, path, sub: Term) -> Term:
    if not path:
        return sub
    kids = list(children(t))
    i = path[0]
    if i >= len(kids):
        raise TermError(f"path index {i} out of range")
    kids[i] = replace_at(kids[i], path[1:], sub)
    return with_children(t, tuple(kids))


def size(t: Term) -> int:
    return 1 + sum(size(c) for c in children(t))


def depth(t: Term) -> int:
    kids = children(t)
    if not kids:
        return 1
    return 1 + max(depth(c) for c in kids)


# --- standard/executed classification -------------------------------------

STD = "Std"
NSTD = "NStd"
MIXED = "Mixed"


def _status_bits(t: Term, specs, seen):
    """Return (has_keyed, has_bare) where bare means unexecuted material:
    a standard event, a bare tau, delta, or a forward recursion reference."""
    match t:
        case Event(key=None):
            return (False, True)
        case Event():
            return (True, False)
        case Tau(key=None):
            return (False, True)
        case Tau():
            return (True, False)
        case Delta():
            return (False, True)
        case RecRef(var=v, spec=s):
            direction = "Forward"
            if specs is not None and s in specs:
                direction = specs[s].direction
                if (s, v) not in seen:
                    seen = seen | {(s, v)}
            if direction == "Forward":
                return (False, True)
            if direction == "Reversed":
                return (True, False)
            return (True, True)
        case Unless(left=l):
            # the filter operand never executes; it must not drag a fully
            # executed left side back to mixed status
            return _status_bits(l, specs, seen)
    keyed = bare = False
    for c in children(t):
        k, b = _status_bits(c, specs, seen)
        keyed = keyed or k
        bare = bare or b
        if keyed and bare:
            break
    return (keyed, bare)


def std_status(t: Term, specs=None) -> str:
    """Std: nothing executed yet.  NStd: fully executed (keyed residues
    only).  Mixed: both kinds of material present."""
    keyed, bare = _status_bits(t, specs, frozenset())
    if keyed and bare:
        return MIXED
    if keyed:
        return NSTD
    return STD


def max_key(t: Term, specs=None) -> int:
    """Largest step key in t, looking through recursion references into
    their equation bodies (0 if none)."""
    best = 0
    stack = [t]
    seen_specs = set()
    while stack:
        cur = stack.pop()
        match cur:
            case Event(key=k) | Tau(key=k) if k is not None:
                best = max(best, k)
            case RecRef(spec=s):
                if specs is not None and s in specs and s not in seen_specs:
                    seen_specs.add(s)
                    stack.extend(specs[s].equations.values())
        stack.extend(children(cur))
    return best


# --- configurations --------------------------------------------------------


@dataclass(frozen=True)
class Configuration:
    """Executed-event poset of a term: (label, key) pairs plus causal order."""

    events: frozenset
    order: frozenset = field(default_factory=frozenset)


def instances_of(t: Term):
    """All executed instances of t as (label, key, occ) triples, in rendering
    order, paired with the strict causal order between them.

    occ disambiguates equal (label, key) pairs, which a lock-step a||a
    produces legitimately.  tau residues appear with the pseudo-label "tau".
    Raises KeyClash when one key decorates two causally ordered instances.
    """
    insts = []
    order = set()

    def walk(node):
        # returns the list of instance indices contained in node
        match node:
            case Event(label=lb, key=k) if k is not None:
                insts.append([lb, k])
                return [len(insts) - 1]
            case Tau(key=k) if k is not None:
                insts.append(["tau", k])
                return [len(insts) - 1]
            case Seq(args=args):
                groups = [walk(a) for a in args]
                mine = []
                for gi, g in enumerate(groups):
                    for hj in range(gi + 1, len(groups)):
                        for i in g:
                            for j in groups[hj]:
                                order.add((i, j))
                    mine.extend(g)
                return mine
            case _:
                mine = []
                for c in children(node):
                    mine.extend(walk(c))
                return mine

    walk(t)
    occ_count = {}
    final = []
    for lb, k in insts:
        n = occ_count.get((lb, k), 0)
        occ_count[(lb, k)] = n + 1
        final.append((lb, k, n))
    for i, j in order:
        if final[i][1] == final[j][1]:
            raise KeyClash(
                f"key {final[i][1]} appears on ordered instances "
                f"{final[i][0]} and {final[j][0]} in {render(t)}"
            )
    pairs = frozenset((final[i], final[j]) for i, j in order)
    return tuple(final), pairs


def configuration_of(t: Term) -> Configuration:
    """Public configuration: real-event (label, key) pairs and their order.
    Silent residues are internal bookkeeping and are omitted here."""
    insts, order = instances_of(t)
    keep = {inst for inst in insts if inst[0] != "tau"}
    events = frozenset((lb, k) for lb, k, _ in keep)
    pairs = frozenset(
        ((a[0], a[1]), (b[0], b[1])) for a, b in order if a in keep and b in keep
    )
    return Configuration(events, pairs)


def alphabet_of(t: Term, specs=None) -> frozenset:
    """Real event labels occurring anywhere in t (executed or not)."""
    out = set()
    stack = [t]
    seen_specs = set()
    while stack:
        cur = stack.pop()
        match cur:
            case Event(label=lb):
                out.add(lb)
            case RecRef(spec=s):
                if specs is not None and s in specs and s not in seen_specs:
                    seen_specs.add(s)
                    stack.extend(specs[s].equations.values())
        stack.extend(children(cur))
    return frozenset(out)


# --- basic terms ------------------------------------------------------------


def _is_block(t: Term) -> bool:
    """A lock-step block: one atom, or a Par of atoms that are either all
    unexecuted or all histories sharing a single key."""
    if isinstance(t, (Event, Tau)):
        return True
    if isinstance(t, Delta):
        return True
    if not isinstance(t, Par):
        return False
    keys = set()
    for a in t.args:
        match a:
            case Event(key=k) | Tau(key=k):
                keys.add(k)
            case Delta():
                return False
            case _:
                return False
    return len(keys) == 1  # all bare (None) or all sharing one key


def is_basic(t: Term) -> bool:
    """Normal-form grammar: sums of sequences of atom blocks, where a
    sequence may hold sums of basics at any position (the keyed-choice
    shapes the conditioned distribution laws cannot touch)."""
    match t:
        case Event() | Delta() | Tau():
            return True
        case Par():
            return _is_block(t)
        case Choice(args=args):
            return all(is_basic(a) for a in args)
        case Seq(args=args):
            for a in args:
                if isinstance(a, Choice):
                    if not is_basic(a):
                        return False
                elif not _is_block(a):
                    return False
            return True
    return False


# --- signatures -------------------------------------------------------------


def _ident_ok(name: str) -> bool:
    # labels start lowercase; uppercase initials are recursion variables
    return (
        name.isidentifier()
        and name not in RESERVED_NAMES
        and name[:1].islower()
    )


@dataclass(frozen=True)
class Signature:
    """Event alphabet with communication, conflict, and priority structure.

    gamma is stored on sorted label pairs (it is commutative); conflict is a
    set of sorted pairs (irreflexive, symmetric); priority holds (lo, hi)
    pairs meaning lo < hi and is closed under transitivity at construction.
    """

    alphabet: frozenset
    gamma: dict = field(default_factory=dict)
    conflict: frozenset = field(default_factory=frozenset)
    priority: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name in self.alphabet:
            if not _ident_ok(name):
                raise TermError(f"bad event label {name!r}")
        norm = {}
        for (a, b), c in self.gamma.items():
            for name in (a, b, c):
                if name not in self.alphabet:
                    raise UnknownLabel(f"gamma uses {name!r} outside the alphabet")
            key = (a, b) if a <= b else (b, a)
            if norm.get(key, c) != c:
                raise TermError(f"gamma({a},{b}) defined twice with different results")
            norm[key] = c
        object.__setattr__(self, "gamma", norm)
        conf = set()
        for a, b in self.conflict:
            if a == b:
                raise TermError(f"conflict is irreflexive; got ({a},{a})")
            if a not in self.alphabet or b not in self.alphabet:
                raise UnknownLabel(f"conflict pair ({a},{b}) outside the alphabet")
            conf.add((a, b) if a <= b else (b, a))
        object.__setattr__(self, "conflict", frozenset(conf))
        # transitive closure of the priority pairs, rejecting cycles
        edges = set(self.priority)
        for a, b in edges:
            if a not in self.alphabet or b not in self.alphabet:
                raise UnknownLabel(f"priority pair ({a},{b}) outside the alphabet")
        changed = True
        while changed:
            changed = False
            for a, b in list(edges):
                for c, d in list(edges):
                    if b == c and (a, d) not in edges:
                        edges.add((a, d))
                        changed = True
        for a, b in edges:
            if a == b or (b, a) in edges:
                raise TermError("priority must be a strict partial order")
        object.__setattr__(self, "priority", frozenset(edges))

    def gamma_of(self, a: str, b: str):
        """Communication result of a and b, or None when undefined."""
        if "tau" in (a, b):
            return None
        key = (a, b) if a <= b else (b, a)
        return self.gamma.get(key)

    def in_conflict(self, a: str, b: str) -> bool:
        if a == b:
            return False
        key = (a, b) if a <= b else (b, a)
        return key in self.conflict

    def prio_lt(self, a: str, b: str) -> bool:
        return (a, b) in self.priority

    def prio_le(self, a: str, b: str) -> bool:
        return a == b or (a, b) in self.priority


def check_labels(t: Term, sig: Signature, specs=None):
    """Raise UnknownLabel if t mentions an event outside sig's alphabet."""
    for name in sorted(alphabet_of(t, specs)):
        if name not in sig.alphabet:
            raise UnknownLabel(f"event {name!r} is not in the alphabet")
