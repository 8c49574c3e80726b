"""Unit tests for the term layer: canonical shapes, status, configurations."""

import pytest

from rapt.terms import (
    Abstract,
    Choice,
    Comm,
    Configuration,
    Delta,
    Encap,
    Event,
    KeyClash,
    Par,
    RecRef,
    Seq,
    Signature,
    Tau,
    TermError,
    UnknownLabel,
    Unless,
    abstract,
    alphabet_of,
    canonicalize,
    choice,
    configuration_of,
    depth,
    encap,
    is_basic,
    max_key,
    par,
    render,
    replace_at,
    seq,
    size,
    std_status,
    subterm_at,
)

a = Event("a")
b = Event("b")
c = Event("c")


def ek(label, k):
    return Event(label, k)


class TestConstructors:
    def test_choice_sorts_and_dedups(self):
        t = choice([b, a, b])
        assert t == Choice((a, b))

    def test_choice_flattens(self):
        t = choice([Choice((a, b)), c])
        assert t == Choice((a, b, c))

    def test_choice_singleton_collapses(self):
        assert choice([a, a]) == a

    def test_par_sorts_but_keeps_duplicates(self):
        t = par([b, a, a])
        assert t == Par((a, a, b))

    def test_seq_flattens_in_order(self):
        t = seq([Seq((a, b)), c])
        assert t == Seq((a, b, c))

    def test_empty_rejected(self):
        with pytest.raises(TermError):
            choice([])

    def test_reserved_event_names_rejected(self):
        with pytest.raises(TermError):
            Event("tau")
        with pytest.raises(TermError):
            Event("delta")

    def test_nonpositive_keys_rejected(self):
        with pytest.raises(TermError):
            Event("a", 0)


class TestCanonicalize:
    def test_ac_choice(self):
        lhs = canonicalize(Choice((Choice((c, a)), b)))
        rhs = canonicalize(Choice((b, Choice((a, c)))))
        assert lhs == rhs == Choice((a, b, c))

    def test_idempotent_choice(self):
        t = canonicalize(Choice((a, a)))
        assert t == a

    def test_ac_par(self):
        lhs = canonicalize(Par((Par((c, a)), b)))
        rhs = canonicalize(Par((b, Par((a, c)))))
        assert lhs == rhs == Par((a, b, c))

    def test_par_no_idempotence(self):
        t = canonicalize(Par((a, a)))
        assert t == Par((a, a))

    def test_seq_assoc_only(self):
        lhs = canonicalize(Seq((Seq((a, b)), c)))
        rhs = canonicalize(Seq((a, Seq((b, c)))))
        assert lhs == rhs == Seq((a, b, c))

    def test_recursive(self):
        t = canonicalize(Encap(frozenset({"a"}), Choice((b, Choice((a, b))))))
        assert t == Encap(frozenset({"a"}), Choice((a, b)))

    def test_canonicalize_is_stable(self):
        t = canonicalize(Unless(Choice((b, a)), Par((c, b))))
        assert canonicalize(t) == t


class TestRender:
    cases = [
        (a, "a"),
        (ek("a", 3), "a[3]"),
        (Delta(), "delta"),
        (Tau(), "tau"),
        (Tau(2), "tau[2]"),
        (Choice((a, b)), "a + b"),
        (Seq((a, b, c)), "a . b . c"),
        (Seq((Choice((a, b)), c)), "(a + b) . c"),
        (Par((a, b)), "a || b"),
        (Par((Seq((a, b)), c)), "a . b || c"),
        (Comm(a, b), "a | b"),
        (Comm(Par((a, b)), c), "(a || b) | c"),
        (Unless(a, b), "a <| b"),
        (Unless(Unless(a, b), c), "a <| b <| c"),
        (Unless(a, Unless(b, c)), "a <| (b <| c)"),
        (Unless(Choice((a, b)), c), "(a + b) <| c"),
        (Encap(frozenset({"b", "a"}), Seq((a, b))), "enc{a,b}(a . b)"),
        (Abstract(frozenset({"a"}), a), "hide{a}(a)"),
        (RecRef("X", "E"), "<X|E>"),
    ]

    @pytest.mark.parametrize("t,expect", cases, ids=[e for _, e in cases])
    def test_render(self, t, expect):
        assert render(t) == expect

    def test_parallel_family_always_parenthesized_inside_itself(self):
        t = Par((Comm(a, b), c))
        assert render(t) == "(a | b) || c"


class TestStatus:
    def test_standard(self):
        assert std_status(Seq((a, Choice((b, c))))) == "Std"

    def test_executed(self):
        assert std_status(Seq((ek("a", 1), ek("b", 2)))) == "NStd"

    def test_mixed(self):
        assert std_status(Seq((ek("a", 1), b))) == "Mixed"

    def test_delta_counts_as_standard(self):
        assert std_status(Delta()) == "Std"
        assert std_status(Seq((ek("a", 1), Delta()))) == "Mixed"

    def test_tau_residue_counts_as_executed(self):
        assert std_status(Tau(1)) == "NStd"
        assert std_status(Tau()) == "Std"

    def test_recref_defaults_to_standard(self):
        assert std_status(RecRef("X", "E")) == "Std"


class TestKeysAndAlphabet:
    def test_max_key(self):
        t = Par((ek("a", 2), Seq((ek("b", 5), c))))
        assert max_key(t) == 5
        assert max_key(a) == 0

    def test_alphabet(self):
        t = Encap(frozenset({"a"}), Seq((ek("a", 1), Choice((b, Tau())))))
        assert alphabet_of(t) == frozenset({"a", "b"})


class TestConfiguration:
    def test_empty_for_standard_terms(self):
        assert configuration_of(Seq((a, b))) == Configuration(frozenset())

    def test_seq_orders_instances(self):
        t = Seq((ek("a", 1), ek("b", 2)))
        cfg = configuration_of(t)
        assert cfg.events == frozenset({("a", 1), ("b", 2)})
        assert cfg.order == frozenset({(("a", 1), ("b", 2))})

    def test_par_is_unordered(self):
        t = Par((ek("a", 1), ek("b", 1)))
        cfg = configuration_of(t)
        assert cfg.events == frozenset({("a", 1), ("b", 1)})
        assert cfg.order == frozenset()

    def test_tau_residues_hidden(self):
        t = Seq((Tau(1), ek("b", 2)))
        cfg = configuration_of(t)
        assert cfg.events == frozenset({("b", 2)})
        assert cfg.order == frozenset()

    def test_key_clash_on_ordered_instances(self):
        with pytest.raises(KeyClash):
            configuration_of(Seq((ek("a", 1), ek("b", 1))))

    def test_shared_key_fine_when_concurrent(self):
        cfg = configuration_of(Par((ek("a", 1), ek("a", 1))))
        assert cfg.events == frozenset({("a", 1)})


class TestBasicGrammar:
    @pytest.mark.parametrize(
        "t",
        [
            a,
            Delta(),
            Tau(),
            Tau(4),
            ek("a", 1),
            Choice((a, b)),
            Seq((a, b)),
            Seq((a, Choice((b, c)))),
            Par((a, b)),
            Par((ek("a", 1), ek("b", 1))),
            Seq((Par((a, b)), c)),
            Choice((Seq((a, b)), c)),
            Seq((ek("a", 1), Choice((ek("b", 2), ek("c", 2))))),
        ],
        ids=render,
    )
    def test_basic(self, t):
        assert is_basic(t)

    @pytest.mark.parametrize(
        "t",
        [
            Comm(a, b),
            Unless(a, b),
            Encap(frozenset({"a"}), a),
            Abstract(frozenset({"a"}), a),
            RecRef("X", "E"),
            Par((Seq((a, b)), c)),
            Par((ek("a", 1), ek("b", 2))),
            Par((a, ek("b", 1))),
            Seq((Par((Seq((a, b)), c)), a)),
        ],
        ids=render,
    )
    def test_not_basic(self, t):
        assert not is_basic(t)


class TestPaths:
    def test_subterm_and_replace(self):
        t = Seq((a, Choice((b, c))))
        assert subterm_at(t, (1, 0)) == b
        t2 = replace_at(t, (1, 0), Delta())
        assert t2 == Seq((a, Choice((Delta(), c))))
        assert subterm_at(t, ()) == t

    def test_size_depth(self):
        t = Seq((a, Choice((b, c))))
        assert size(t) == 5
        assert depth(t) == 3


class TestSignature:
    def test_gamma_symmetric(self):
        sig = Signature(frozenset({"a", "b", "c"}), gamma={("b", "a"): "c"})
        assert sig.gamma_of("a", "b") == "c"
        assert sig.gamma_of("b", "a") == "c"
        assert sig.gamma_of("a", "c") is None

    def test_gamma_never_pairs_tau(self):
        sig = Signature(frozenset({"a", "b", "c"}), gamma={("a", "b"): "c"})
        assert sig.gamma_of("tau", "a") is None

    def test_gamma_outside_alphabet_rejected(self):
        with pytest.raises(UnknownLabel):
            Signature(frozenset({"a"}), gamma={("a", "a"): "z"})

    def test_conflict_symmetric_irreflexive(self):
        sig = Signature(frozenset({"a", "c"}), conflict=frozenset({("c", "a")}))
        assert sig.in_conflict("a", "c")
        assert sig.in_conflict("c", "a")
        assert not sig.in_conflict("a", "a")
        with pytest.raises(TermError):
            Signature(frozenset({"a"}), conflict=frozenset({("a", "a")}))

    def test_priority_transitive_and_acyclic(self):
        sig = Signature(
            frozenset({"a", "b", "c"}),
            priority=frozenset({("a", "b"), ("b", "c")}),
        )
        assert sig.prio_lt("a", "c")
        assert sig.prio_le("a", "a")
        assert not sig.prio_lt("c", "a")
        with pytest.raises(TermError):
            Signature(frozenset({"a", "b"}), priority=frozenset({("a", "b"), ("b", "a")}))

    def test_label_set_operator_helpers(self):
        with pytest.raises(TermError):
            encap(["tau"], a)
        assert abstract(["a"], a) == Abstract(frozenset({"a"}), a)
