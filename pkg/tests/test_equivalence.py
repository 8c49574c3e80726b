"""Equivalence deciders: worked pairs, witnesses, plays, budgets."""

import json

import pytest

from rapt.equivalence import (
    EquivKind,
    Verdict,
    check,
    hhp_check,
    hp_game,
    pomset_moves,
    render_pomset,
    verify_witness,
)
from rapt.semantics import FORWARD, REVERSE, Budget, BudgetExceeded, build_lts
from rapt.syntax import parse_spec, parse_term
from rapt.terms import Signature, TermError, render

SIG = Signature(
    alphabet=frozenset("abcd"),
    gamma={("a", "b"): "c"},
    conflict=frozenset({("a", "c")}),
    priority=frozenset({("c", "b")}),
)


def T(src):
    return parse_term(src, SIG)


def L(src, max_states=500, max_key=12, **kw):
    term = T(src) if isinstance(src, str) else src
    return build_lts(term, SIG, Budget(max_states, max_key), **kw)


def V(a, b, kind):
    return check(L(a), L(b), kind)


def eq(a, b, kind):
    return V(a, b, kind).equivalent


def _abs_move(move_str):
    """Inverse of the play rendering: '{a,b}' / 'rev{a}' back to the
    abstract (direction, labels) form."""
    direction = FORWARD
    if move_str.startswith("rev"):
        direction = REVERSE
        move_str = move_str[3:]
    labels = tuple(sorted(move_str.strip("{}").split(",")))
    return (direction, labels)


def _step_moves(l, state):
    out = {}
    for src, lab, dst in tuple(l.forward_edges) + tuple(l.reverse_edges):
        if src == state:
            key = (lab.direction, tuple(sorted(lb for lb, _ in lab.events)))
            out.setdefault(key, set()).add(render(dst))
    return out


def replay_step_play(l1, l2, play):
    """A play must run on the two systems and end with an attack the other
    side has no same-labeled answer to."""
    sides = {"left": l1, "right": l2}
    cur = {"left": render(l1.initial), "right": render(l2.initial)}
    by_render = {
        "left": {render(s): s for s in l1.states},
        "right": {render(s): s for s in l2.states},
    }
    entries = list(play)
    while entries:
        attack = entries.pop(0)
        assert attack["role"] == "attack"
        side = attack["side"]
        absl = _abs_move(attack["move"])
        moves = _step_moves(sides[side], by_render[side][cur[side]])
        assert attack["to"] in moves.get(absl, set()), "attack does not replay"
        cur[side] = attack["to"]
        other = "right" if side == "left" else "left"
        if not entries:
            stuck = _step_moves(sides[other], by_render[other][cur[other]])
            assert absl not in stuck, "defender could still answer"
            return True
        reply = entries.pop(0)
        assert reply["role"] == "reply"
        assert reply["side"] == other
        moves = _step_moves(sides[other], by_render[other][cur[other]])
        assert reply["to"] in moves.get(_abs_move(reply["move"]), set())
        cur[other] = reply["to"]
    raise AssertionError("play ended on a reply")


class TestEquivKind:
    def test_parse_plain(self):
        kind = EquivKind.parse("fr-step")
        assert kind.name == "fr-step" and kind.k == 4

    def test_parse_pomset_bound(self):
        kind = EquivKind.parse("fr-pomset(6)")
        assert kind.name == "fr-pomset" and kind.k == 6

    def test_parse_rb(self):
        assert EquivKind.parse("rb-fr-hp").rooted
        assert not EquivKind.parse("fr-hp").rooted

    def test_unknown_kind(self):
        with pytest.raises(TermError):
            EquivKind.parse("weak-trace")

    def test_bound_on_non_pomset(self):
        with pytest.raises(TermError):
            EquivKind.parse("fr-step(3)")

    def test_bound_positive(self):
        with pytest.raises(TermError):
            EquivKind("fr-pomset", 0)

    def test_str_forms(self):
        assert str(EquivKind("fr-pomset", 5)) == "fr-pomset(5)"
        assert str(EquivKind("rb-fr-step")) == "rb-fr-step"


class TestStepExamples:
    def test_idempotent_choice(self):
        assert eq("a + a", "a", "fr-step")

    def test_lockstep_beats_interleaving(self):
        v = V("a || b", "a . b + b . a", "fr-step")
        assert not v.equivalent
        assert v.play[0]["move"] == "{a,b}"

    def test_whole_parallel_expansion(self):
        assert eq("a & b", "a || b + a | b", "fr-step")

    def test_trailing_silent_step(self):
        assert eq("a . tau", "a", "rb-fr-step")
        assert not eq("a . tau", "a", "fr-step")

    def test_leading_silent_step_rooted(self):
        assert not eq("tau . a", "a", "rb-fr-step")

    def test_silent_choice_rooted(self):
        assert not eq("a + tau . a", "a", "rb-fr-step")

    def test_silent_partner(self):
        assert eq("a || tau", "a", "rb-fr-step")
        assert not eq("a || tau", "a", "fr-step")

    def test_label_mismatch(self):
        v = V("a . b", "a . c", "fr-step")
        assert not v.equivalent

    def test_keys_abstracted(self):
        assert eq("a[1] . b", "a[3] . b", "fr-step")

    def test_branch_commit_distinguished(self):
        assert not eq("a . (b + c)", "a . b + a . c", "fr-step")

    def test_deadlock_vs_action(self):
        assert not eq("delta", "a", "fr-step")

    def test_executed_silent_residue(self):
        # keyed silent history matches silently under the branching kinds
        assert eq("tau . a[1]", "a[1]", "rb-fr-step")
        assert not eq("tau . a[1]", "a[1]", "fr-step")


class TestVerdictShape:
    def test_json_equivalent(self):
        doc = json.loads(V("a + a", "a", "fr-step").to_json())
        assert doc["kind"] == "fr-step"
        assert doc["equivalent"] is True
        assert "witness" in doc and "play" not in doc and "k" not in doc

    def test_json_inequivalent(self):
        doc = json.loads(V("a . b", "a . c", "fr-step").to_json())
        assert doc["equivalent"] is False
        assert "play" in doc and "witness" not in doc

    def test_json_pomset_reports_bound(self):
        doc = json.loads(V("a", "a", "fr-pomset").to_json())
        assert doc["k"] == 4

    def test_kind_object_accepted(self):
        v = check(L("a"), L("a"), EquivKind("fr-pomset", 2))
        assert v.equivalent and v.k == 2


class TestWitness:
    def test_contains_initial_pair(self):
        v = V("a + a", "a", "fr-step")
        assert (render(T("a + a")), render(T("a"))) in set(v.witness)

    def test_verifies_step(self):
        v = V("a . b . c", "a . b . c", "fr-step")
        assert verify_witness(L("a . b . c"), L("a . b . c"), v)

    def test_verifies_rooted(self):
        v = V("a . tau", "a", "rb-fr-step")
        assert v.witness[0] == (render(T("a . tau")), render(T("a")))
        assert verify_witness(L("a . tau"), L("a"), v)

    def test_verifies_pomset(self):
        v = V("a || b", "a || b", "fr-pomset")
        assert verify_witness(L("a || b"), L("a || b"), v)

    def test_verifies_hp(self):
        v = V("a . (b + c)", "a . (b + c)", "fr-hp")
        assert verify_witness(L("a . (b + c)"), L("a . (b + c)"), v)

    def test_verifies_hhp(self):
        v = V("a || b", "b || a", "fr-hhp")
        assert verify_witness(L("a || b"), L("b || a"), v)

    def test_tampered_witness_rejected(self):
        v = V("a . b", "a . b", "fr-step")
        pruned = Verdict(
            kind=v.kind, equivalent=True, witness=v.witness[:1]
        )
        assert not verify_witness(L("a . b"), L("a . b"), pruned)

    def test_negative_verdict_never_verifies(self):
        v = V("a . b", "a . c", "fr-step")
        assert not verify_witness(L("a . b"), L("a . c"), v)


class TestPlays:
    def test_label_mismatch_play_replays(self):
        v = V("a . b", "a . c", "fr-step")
        assert replay_step_play(L("a . b"), L("a . c"), v.play)

    def test_joint_step_play_replays(self):
        v = V("a || b", "a . b + b . a", "fr-step")
        assert replay_step_play(L("a || b"), L("a . b + b . a"), v.play)

    def test_depth_two_play(self):
        v = V("a . (b + c)", "a . b + a . c", "fr-step")
        assert replay_step_play(L("a . (b + c)"), L("a . b + a . c"), v.play)
        assert v.play[0]["role"] == "attack" and v.play[-1]["role"] == "attack"

    def test_reverse_move_play(self):
        # committed pasts differ only backwards
        v = V("a[1] . b", "a . b", "fr-step")
        assert not v.equivalent
        assert replay_step_play(L("a[1] . b"), L("a . b"), v.play)


class TestPomsetMoves:
    def test_sequential_fragments(self):
        l = L("a . b")
        got = {render_pomset(p) for p, _ in pomset_moves(l, l.initial, 2)}
        assert got == {"{a}", "{a<b}"}

    def test_lockstep_unordered(self):
        l = L("a || b")
        got = {render_pomset(p) for p, _ in pomset_moves(l, l.initial, 2)}
        assert got == {"{a, b}"}

    def test_joint_step_exceeds_small_bound(self):
        l = L("a || b")
        assert pomset_moves(l, l.initial, 1) == frozenset()

    def test_bound_one_is_single_small_steps(self):
        l = L("a . b")
        got = {render_pomset(p) for p, _ in pomset_moves(l, l.initial, 1)}
        assert got == {"{a}"}

    def test_reverse_fragments_keep_run_order(self):
        l = L("a . b")
        done = T("a[1] . b[2]")
        got = {render_pomset(p) for p, _ in pomset_moves(l, done, 2)}
        assert got == {"rev{b}", "rev{a<b}"}

    def test_bound_positive(self):
        l = L("a")
        with pytest.raises(TermError):
            pomset_moves(l, l.initial, 0)

    def test_fragments_reach_states(self):
        l = L("a . b")
        targets = {render(s) for p, s in pomset_moves(l, l.initial, 2)}
        assert targets == {"a[1] . b", "a[1] . b[2]"}


class TestPomsetKind:
    def test_distinguishes_concurrency(self):
        assert not eq("a || b", "a . b + b . a", "fr-pomset")

    def test_small_bound_is_blind(self):
        # no fragment of size <= 1 exists on either side, so the check
        # passes vacuously; the verdict records the bound it used
        v = check(L("a || b"), L("delta"), EquivKind("fr-pomset", 1))
        assert v.equivalent and v.k == 1

    def test_trailing_silent_rooted(self):
        assert eq("a . tau", "a", "rb-fr-pomset")

    def test_leading_silent_rooted(self):
        assert not eq("tau . a", "a", "rb-fr-pomset")


class TestHpExamples:
    def test_branch_commit(self):
        assert not eq("a . (b + c)", "a . b + a . c", "fr-hp")

    def test_identity(self):
        t = "a . (b + c) || d"
        v = V(t, t, "fr-hp")
        assert v.equivalent
        assert verify_witness(L(t), L(t), v)

    def test_commuted_parallel(self):
        assert eq("a || b", "b || a", "fr-hp")

    def test_trailing_silent_rooted(self):
        assert eq("a . tau", "a", "rb-fr-hp")

    def test_executed_map_in_witness(self):
        v = V("a . b", "a . b", "fr-hp")
        maps = {m for _s1, m, _s2 in v.witness}
        assert (("a[1]#0", "a[1]#0"), ("b[2]#0", "b[2]#0")) in maps

    def test_concurrent_vs_sequential(self):
        assert not eq("a || a", "a . a", "fr-hp")


class TestHhp:
    def test_commuted_parallel(self):
        assert eq("a || b", "b || a", "fr-hhp")

    def test_leading_silent(self):
        assert not eq("tau . a", "a", "fr-hhp")

    def test_state_budget(self):
        wide = " . ".join("abcd" * 3)  # 13 states in a chain
        with pytest.raises(BudgetExceeded):
            check(L(wide), L(wide), "fr-hhp")

    def test_triple_budget(self):
        with pytest.raises(BudgetExceeded):
            hp_game(L("a . b . c"), L("a . b . c"), max_triples=3)


HIERARCHY_PAIRS = (
    ("a", "a + a"),
    ("a . b", "a . b"),
    ("a || b", "a . b + b . a"),
    ("a . (b + c)", "a . b + a . c"),
    ("a || b", "b || a"),
    ("a . tau", "a"),
    ("a + b", "b + a"),
    ("a . b", "a . c"),
    ("a || a", "a . a"),
    ("(a + b) . c", "a . c + b . c"),
)


class TestKindHierarchy:
    @pytest.mark.parametrize("left,right", HIERARCHY_PAIRS)
    def test_strong_chain(self, left, right):
        hhp = eq(left, right, "fr-hhp")
        hp = eq(left, right, "fr-hp")
        pom = eq(left, right, "fr-pomset")
        step = eq(left, right, "fr-step")
        assert (not hhp or hp) and (not hp or pom) and (not pom or step)

    @pytest.mark.parametrize("left,right", HIERARCHY_PAIRS)
    def test_rooted_chain(self, left, right):
        hp = eq(left, right, "rb-fr-hp")
        pom = eq(left, right, "rb-fr-pomset")
        step = eq(left, right, "rb-fr-step")
        assert (not hp or pom) and (not pom or step)

    @pytest.mark.parametrize("kind", ["fr-step", "fr-pomset", "fr-hp", "fr-hhp"])
    def test_reflexive(self, kind):
        assert eq("(a + b) . c", "(a + b) . c", kind)

    @pytest.mark.parametrize("kind", ["fr-step", "fr-pomset", "fr-hp"])
    def test_symmetric(self, kind):
        for left, right in HIERARCHY_PAIRS:
            assert eq(left, right, kind) == eq(right, left, kind)

    def test_transitive_spot(self):
        a, b, c = "a + a", "a", "a + a + a"
        assert eq(a, b, "fr-step") and eq(b, c, "fr-step") and eq(a, c, "fr-step")


CONTEXTS = (
    "({}) + d",
    "({}) . d",
    "d . ({})",
    "({}) || d",
    "enc{{b}}({})",
    "hide{{b}}({})",
)


class TestCongruence:
    @pytest.mark.parametrize("ctx", CONTEXTS)
    def test_rooted_preserved(self, ctx):
        lhs, rhs = ctx.format("a . tau"), ctx.format("a")
        assert eq(lhs, rhs, "rb-fr-step")

    @pytest.mark.parametrize("ctx", CONTEXTS)
    def test_strong_preserved(self, ctx):
        lhs, rhs = ctx.format("(a + b) . c"), ctx.format("a . c + b . c")
        assert eq(lhs, rhs, "fr-step")

    @pytest.mark.parametrize("ctx", CONTEXTS)
    def test_inequivalence_not_masked_by_sum(self, ctx):
        lhs, rhs = ctx.format("a . b"), ctx.format("a . c")
        assert not eq(lhs, rhs, "fr-step")


class TestTruncatedSystems:
    def setup_method(self):
        self.spec = parse_spec("X = a . X + b")
        self.specs = {self.spec.name: self.spec}

    def bounded(self, src, max_key):
        return build_lts(
            T(src) if isinstance(src, str) else src,
            SIG,
            Budget(max_states=500, max_key=max_key),
            specs=self.specs,
            truncate=True,
        )

    def test_horizon_marked(self):
        l = self.bounded("<X|E>", 3)
        assert l.horizon

    def test_bounded_self_comparison(self):
        l1 = self.bounded("<X|E>", 4)
        l2 = self.bounded("<X|E>", 4)
        assert check(l1, l2, "fr-step").equivalent

    def test_fair_abstraction_shape(self):
        # the flagship bounded comparison: hiding the loop of X = a.X + b
        # behind a silent guard collapses, at any depth, to tau . b
        lhs = self.bounded("tau . hide{a}(<X|E>)", 6)
        rhs = self.bounded("tau . b", 6)
        assert check(lhs, rhs, "rb-fr-step").equivalent

    def test_horizon_is_optimistic(self):
        # differences hiding beyond the key budget are invisible: both
        # sides agree up to depth 3 and the divergence (c vs the loop)
        # sits past the horizon
        lhs = self.bounded("<X|E>", 3)
        rhs = self.bounded("a . (a . (a . c + b) + b) + b", 3)
        assert rhs.horizon
        assert check(lhs, rhs, "fr-step").equivalent
        exact = self.bounded("a . (a . (a . c + b) + b) + b", 10)
        deep = self.bounded("<X|E>", 10)
        assert not check(deep, exact, "fr-step").equivalent

    def test_pomset_rejects_horizon(self):
        l = self.bounded("<X|E>", 3)
        with pytest.raises(TermError):
            check(l, l, "fr-pomset")

    def test_hp_rejects_horizon(self):
        l = self.bounded("<X|E>", 3)
        with pytest.raises(TermError):
            check(l, l, "fr-hp")
