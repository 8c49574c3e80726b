"""Recursive specifications: classification, comparison, linearization,
clusters, fair abstraction."""

import pytest

from rapt.equivalence import check
from rapt.recursion import (
    MIXED_DIR,
    FORWARD,
    REVERSED,
    BoundedVerdict,
    MixedExitForms,
    NoCluster,
    NotBasic,
    NotLinear,
    RecSpec,
    UndefinedVariable,
    Unguarded,
    UnknownVariable,
    apply_cfar,
    find_clusters,
    linearize,
    spec_equal,
    unfold_rdp,
    validate_spec,
)
from rapt.semantics import Budget, build_lts
from rapt.syntax import parse_spec, parse_term
from rapt.terms import Signature, TermError, render

SIG = Signature(alphabet=frozenset("abcd"))


def T(src):
    return parse_term(src, SIG)


def S(src):
    return parse_spec(src)


class TestClassification:
    def test_guarded_linear_forward(self):
        c = validate_spec(S("X = a . X + b"))
        assert c.guarded and c.guarded_silent and c.linear
        assert c.direction == FORWARD

    def test_self_reference_unguarded(self):
        assert not S("X = X + a").classification.guarded

    def test_tau_guard_counts_only_leniently(self):
        c = S("X = tau . X").classification
        assert c.guarded and not c.guarded_silent

    def test_mutual_guarding(self):
        c = S("X = a . Y\nY = b . X").classification
        assert c.guarded and c.linear

    def test_reversed_direction(self):
        c = S("X = X . a[1] + b[1]").classification
        assert c.guarded and c.linear and c.direction == REVERSED

    def test_mixed_direction(self):
        c = S("X = a . X + X . b[1]").classification
        assert c.direction == MIXED_DIR

    def test_nonlinear_summand(self):
        c = S("X = a . b . X").classification
        assert not c.linear

    def test_delta_equation_is_linear(self):
        c = S("X = a . Y\nY = delta").classification
        assert c.linear and c.guarded

    def test_undefined_variable_rejected(self):
        with pytest.raises(UndefinedVariable):
            S("X = a . Y")

    def test_foreign_spec_rejected(self):
        from rapt.terms import RecRef, Seq, Event

        with pytest.raises(TermError):
            RecSpec("E", {"X": Seq((Event("a"), RecRef("X", "OTHER")))})


class TestUnfold:
    def test_unfold_returns_equation(self):
        spec = S("X = a . X + b")
        assert render(unfold_rdp(spec, "X")) == "a . <X|E> + b"

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariable):
            unfold_rdp(S("X = a"), "Y")

    def test_rdp_sound_on_bounded_lts(self):
        # <X|E> and one unfolding have the same bounded behavior
        spec = S("X = a . X + b")
        budget = Budget(max_states=500, max_key=6)
        l1 = build_lts(
            spec.var_ref("X"), SIG, budget, specs={"E": spec}, truncate=True
        )
        l2 = build_lts(
            unfold_rdp(spec, "X"), SIG, budget, specs={"E": spec}, truncate=True
        )
        assert check(l1, l2, "fr-step").equivalent


class TestSpecEqual:
    def test_loop_vs_two_step_loop(self):
        v = spec_equal(S("X = a . X"), "X", S("Y = a . Z\nZ = a . Y"), "Y")
        assert v.equivalent and v.exact

    def test_exit_vs_no_exit(self):
        v = spec_equal(S("X = a . X + b"), "X", S("Y = a . Y"), "Y")
        assert not v.equivalent and v.exact

    def test_block_labels_up_to_commutation(self):
        v = spec_equal(
            S("X = (a || b) . X"), "X", S("Y = (b || a) . Y"), "Y"
        )
        assert v.equivalent and v.exact

    def test_block_size_matters(self):
        v = spec_equal(S("X = (a || a) . X"), "X", S("Y = a . Y"), "Y")
        assert not v.equivalent

    def test_direction_mismatch(self):
        v = spec_equal(S("X = a . X"), "X", S("Y = Y . a[1]"), "Y")
        assert not v.equivalent and v.exact

    def test_reversed_pair(self):
        v = spec_equal(
            S("X = X . a[1]"), "X", S("Y = Z . a[1]\nZ = Y . a[1]"), "Y"
        )
        assert v.equivalent and v.exact

    def test_rooted_kind_goes_bounded(self):
        v = spec_equal(
            S("X = a . X + b"),
            "X",
            S("Y = a . Y + b . tau"),
            "Y",
            kind="rb-fr-step",
            depth=6,
        )
        assert v.equivalent and not v.exact and v.depth == 6

    def test_nonlinear_goes_bounded(self):
        v = spec_equal(
            S("X = a . b . X"), "X", S("Y = a . Z\nZ = b . Y"), "Y", depth=6
        )
        assert v.equivalent and not v.exact

    def test_nonlinear_inequivalent(self):
        v = spec_equal(
            S("X = a . b . X"), "X", S("Y = a . Y"), "Y", depth=6
        )
        assert not v.equivalent

    def test_unguarded_raises(self):
        with pytest.raises(Unguarded):
            spec_equal(S("X = X + a"), "X", S("Y = a"), "Y")

    def test_unknown_root_raises(self):
        with pytest.raises(UnknownVariable):
            spec_equal(S("X = a"), "Z", S("Y = a"), "Y")

    def test_exact_matches_bounded(self):
        # the summand graph and the depth-bounded game agree
        pairs = [
            (S("X = a . X"), "X", S("Y = a . Z\nZ = a . Y"), "Y"),
            (S("X = a . X + b"), "X", S("Y = a . Y"), "Y"),
            (S("X = a . Y\nY = b . X"), "X", S("Y = a . Z\nZ = b . Y"), "Y"),
            (S("X = a + b"), "X", S("Y = b + a"), "Y"),
        ]
        for e1, x1, e2, y1 in pairs:
            exact = spec_equal(e1, x1, e2, y1)
            assert exact.exact
            bounded = spec_equal(e1, x1, e2, y1, kind="rb-fr-step", depth=6)
            # rooted branching is coarser, so exact-equal implies bounded-equal
            if exact.equivalent:
                assert bounded.equivalent


class TestLinearize:
    def test_sequence(self):
        spec, root = linearize(T("a . b"))
        assert root == "X1"
        assert {v: render(rhs) for v, rhs in spec.equations.items()} == {
            "X1": "a . <X2|L>",
            "X2": "b",
        }

    def test_block_sequence(self):
        spec, _root = linearize(T("(a || b) . c"))
        assert render(spec.equations["X1"]) == "(a || b) . <X2|L>"
        assert render(spec.equations["X2"]) == "c"

    def test_choice(self):
        spec, _root = linearize(T("a + b"))
        assert {v: render(rhs) for v, rhs in spec.equations.items()} == {
            "X1": "a + b"
        }

    def test_choice_under_prefix(self):
        spec, _root = linearize(T("a . (b + c)"))
        assert render(spec.equations["X2"]) == "b + c"

    def test_choice_head_distributes(self):
        spec, root = linearize(T("(a + b) . c"))
        assert render(spec.equations[root]) in (
            "a . <X2|L> + b . <X2|L>",
        )

    def test_deadlock(self):
        spec, root = linearize(T("delta"))
        assert render(spec.equations[root]) == "delta"

    def test_shared_continuation_reused(self):
        spec, _root = linearize(T("a . c + b . c"))
        assert len(spec.equations) == 2

    def test_executed_atom(self):
        spec, root = linearize(T("a[1]"))
        assert render(spec.equations[root]) == "a[1]"

    def test_executed_sequence(self):
        spec, root = linearize(T("a[1] . b[2]"))
        assert render(spec.equations[root]) == "<X2|L> . b[2]"
        assert render(spec.equations["X2"]) == "a[1]"

    def test_mid_run_rejected(self):
        with pytest.raises(NotLinear):
            linearize(T("a[1] . b"))

    def test_non_basic_rejected(self):
        with pytest.raises(NotBasic):
            linearize(T("enc{a}(a . b)"))

    @pytest.mark.parametrize(
        "src",
        [
            "a . b",
            "(a || b) . c",
            "a + b",
            "a . (b + c)",
            "(a + b) . c",
            "a . b . c + d",
            "a[1] . b[2]",
            "tau . a",
        ],
    )
    def test_round_trip_bisimilar(self, src):
        spec, root = linearize(T(src))
        assert spec.classification.guarded and spec.classification.linear
        l1 = build_lts(T(src), SIG)
        l2 = build_lts(spec.var_ref(root), SIG, specs={spec.name: spec})
        assert check(l1, l2, "fr-step").equivalent


class TestFindClusters:
    def test_self_loop(self):
        clusters = find_clusters(S("X = a . X + b"), {"a"})
        assert clusters[0].report() == {"cluster": ["X"], "exits": ["b"]}
        assert clusters[0].looping

    def test_two_variable_cluster(self):
        spec = S("X = a . Y\nY = a . X + b")
        (c,) = find_clusters(spec, {"a"})
        assert c.report() == {"cluster": ["X", "Y"], "exits": ["b"]}

    def test_empty_label_set_gives_singletons(self):
        (c,) = find_clusters(S("X = a . X + b"), set())
        assert c.report() == {"cluster": ["X"], "exits": ["a . <X|E>", "b"]}
        assert not c.looping

    def test_tau_is_always_eligible(self):
        (c,) = find_clusters(S("X = tau . X + b"), set())
        assert c.looping and [render(e) for e in c.exits] == ["b"]

    def test_escape_to_other_cluster_is_exit(self):
        spec = S("X = a . X + b . Y\nY = a . Y")
        cs = find_clusters(spec, {"a"})
        byvars = {c.variables: c for c in cs}
        assert [render(e) for e in byvars[("X",)].exits] == ["b . <Y|E>"]
        assert byvars[("Y",)].exits == ()

    def test_eligible_label_leaving_cluster_is_exit(self):
        spec = S("X = a . X + a . Y\nY = b")
        cs = find_clusters(spec, {"a"})
        byvars = {c.variables: c for c in cs}
        assert [render(e) for e in byvars[("X",)].exits] == ["a . <Y|E>"]

    def test_unguarded_raises(self):
        with pytest.raises(Unguarded):
            find_clusters(S("X = X + a"), {"a"})

    def test_nonlinear_raises(self):
        with pytest.raises(NotLinear):
            find_clusters(S("X = a . b . X"), {"a"})


class TestApplyCfar:
    def test_single_exit(self):
        r = apply_cfar(S("X = a . X + b"), "X", {"a"})
        assert render(r.term) == "tau . b"
        assert not r.divergent and r.verified_depth == 6

    def test_two_variable_cluster(self):
        r = apply_cfar(S("X = a . Y\nY = a . X + b"), "X", {"a"})
        assert render(r.term) == "tau . b"

    def test_no_exit_is_divergent(self):
        r = apply_cfar(S("X = a . X"), "X", {"a"})
        assert render(r.term) == "tau . delta"
        assert r.divergent

    def test_reentrant_exit_keeps_reference(self):
        r = apply_cfar(S("X = a . X + b . X"), "X", {"a"})
        assert render(r.term) == "tau . hide{a}(b . <X|E>)"

    def test_tau_cluster_with_empty_label_set(self):
        r = apply_cfar(S("X = tau . X + b"), "X", set())
        assert render(r.term) == "tau . b"

    def test_reversed_cluster_mirrors(self):
        r = apply_cfar(S("X = X . a[1] + b[1]"), "X", {"a"})
        assert render(r.term) == "b[1] . tau[2]"
        assert not r.divergent

    def test_no_cluster_without_cycle(self):
        with pytest.raises(NoCluster):
            apply_cfar(S("X = b . X"), "X", {"a"})

    def test_mixed_exits_rejected(self):
        spec = S("X = a . X + b + Y . c[1]\nY = delta")
        with pytest.raises(MixedExitForms):
            apply_cfar(spec, "X", {"a"})

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariable):
            apply_cfar(S("X = a . X"), "Z", {"a"})

    def test_collapse_verified_against_hidden_loop(self):
        # the audit really runs: the result is rb-step equivalent to
        # guarding and hiding the original variable, up to the depth
        spec = S("X = a . X + b")
        r = apply_cfar(spec, "X", {"a"}, depth=6)
        from rapt.terms import abstract, seq, Tau

        reference = seq([Tau(), abstract({"a"}, spec.var_ref("X"))])
        budget = Budget(max_states=4000, max_key=6)
        l1 = build_lts(
            r.term, SIG, budget, specs={"E": spec}, truncate=True
        )
        l2 = build_lts(
            reference, SIG, budget, specs={"E": spec}, truncate=True
        )
        assert check(l1, l2, "rb-fr-step").equivalent
