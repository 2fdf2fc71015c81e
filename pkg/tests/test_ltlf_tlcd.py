import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import InvalidInputError, ParseError
from ltlf import (And, Atom, Globally, Next, Not, Or, Until, WeakUntil, final, ltlf_eval, nnf, parse_formula,
                  progress)
from rm_core import EventAlphabet, dfa_run
from tlcd import (compile, compile_tlcd, dfa_to_dot, minimize_dfa, one_event_constraint, parse_tlcd,
                  tlcd_to_formula)

PDG = EventAlphabet('P D G')

FORMULAS = [
    'G (D -> G !X P)',
    'P U D',
    'P W D',
    'G (P -> X D)',
    '!X P',
    'X X G',
    'G G',
    'G !G',
    '(P | D) & !G',
    'true',
    'false',
    'G (D -> X (P | G))',
]


def _all_sequences(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(list(alphabet), repeat=n)


# ==================== 解析 ====================
def test_operators_double_as_event_names():
    formula = parse_formula('G G', PDG)
    assert isinstance(formula, Globally) and formula.arg == Atom('G')
    assert parse_formula('X G', PDG) == Next(Atom('G'))


def test_precedence_and_printing():
    formula = parse_formula('D -> G !X P', PDG)
    assert str(formula) == 'D -> G !X P'
    assert str(parse_formula('(P | D) & G', PDG)) == '(P | D) & G'
    assert parse_formula('P U D U G') == Until(Atom('P'), Until(Atom('D'), Atom('G')))


def test_unknown_event_reports_position():
    with pytest.raises(ParseError) as info:
        parse_formula('P & Q', PDG)
    assert (info.value.line, info.value.column) == (1, 5)


@pytest.mark.parametrize('text', ['P &', '(P | D', 'P D', '& P', 'P $ D'])
def test_malformed_formulas(text):
    with pytest.raises(ParseError):
        parse_formula(text, PDG)


def test_tlcd_file_parsing():
    tlcd = parse_tlcd("# comment\nalphabet: P D G\nD ~> G !X P\n")
    assert tlcd.alphabet == PDG
    assert str(tlcd.edges[0][1]) == 'G !X P'
    assert str(tlcd_to_formula(tlcd)) == 'G (D -> G !X P)'


def test_tlcd_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as info:
        parse_tlcd("alphabet: P D G\nD ~> G !X Q\n")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        parse_tlcd("D ~> P\n")
    with pytest.raises(ParseError):
        parse_tlcd("alphabet: P D\nD P\n")


def test_one_event_constraint_shape():
    assert str(one_event_constraint(['P'])) == 'G P'
    formula = one_event_constraint(['P', 'D'])
    assert all(ltlf_eval(formula, seq) for seq in _all_sequences(['P', 'D'], 3))


# ==================== 推進 ====================
@pytest.mark.parametrize('text', FORMULAS)
def test_progression_agrees_with_semantics(text):
    formula = parse_formula(text, PDG)
    for seq in _all_sequences(PDG, 4):
        node = nnf(formula)
        for event in seq:
            node = progress(node, event)
        assert final(node) == ltlf_eval(formula, seq), seq


# ==================== 編譯 ====================
@pytest.mark.parametrize('text', FORMULAS)
def test_compiled_dfa_matches_semantics(text):
    formula = parse_formula(text, PDG)
    dfa = compile(formula, PDG)
    for seq in _all_sequences(PDG, 6):
        assert dfa_run(dfa, seq)[1] == ltlf_eval(formula, seq), seq


def test_generator_dfa_has_three_states(generator_task):
    dfa = compile_tlcd(generator_task.team_tlcd)
    assert dfa.n_states == 3
    assert dfa.accepting == frozenset({0, 1})
    q1 = dfa.step(dfa.initial, 'D')
    assert q1 == 1
    assert dfa.step(q1, 'P') == dfa.rejecting_sink == 2
    assert dfa.step(q1, 'G') == q1
    assert not dfa.collapsed_dead_states


def test_buttons_signal_dfa(buttons_task):
    dfa = compile_tlcd(buttons_task.team_tlcd, buttons_task.rm.alphabet)
    assert dfa.n_states == 3
    q = dfa.step(dfa.initial, 'S')
    assert dfa.step(q, 'G') == dfa.rejecting_sink
    assert dfa.step(q, 'B') == q


@pytest.mark.parametrize('task', ['generator', 'buttons'])
def test_task_tlcd_matches_semantics(task, request):
    tlcd = request.getfixturevalue(f'{task}_task').team_tlcd
    formula, dfa = tlcd_to_formula(tlcd), compile_tlcd(tlcd)
    for seq in _all_sequences(tlcd.alphabet, 6):
        assert dfa_run(dfa, seq)[1] == ltlf_eval(formula, seq), seq


@pytest.mark.slow
@pytest.mark.parametrize('task', ['generator', 'buttons'])
def test_task_tlcd_matches_semantics_over_team_alphabet(task, request):
    definition = request.getfixturevalue(f'{task}_task')
    events = list(definition.rm.alphabet)
    formula, dfa = tlcd_to_formula(definition.team_tlcd), compile_tlcd(definition.team_tlcd, definition.rm.alphabet)
    for seq in _all_sequences(events, 6):
        assert dfa_run(dfa, seq)[1] == ltlf_eval(formula, seq), seq
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        seq = tuple(events[k] for k in rng.integers(len(events), size=int(rng.integers(21))))
        assert dfa_run(dfa, seq)[1] == ltlf_eval(formula, seq), seq


def test_compile_rejects_foreign_events():
    with pytest.raises(InvalidInputError):
        compile(parse_formula('G !F'), PDG)


def test_minimize_is_idempotent(laboratory_task):
    dfa = compile_tlcd(laboratory_task.team_tlcd)
    again = minimize_dfa(dfa)
    assert again.n_states == dfa.n_states
    assert dict(again.transitions) == dict(dfa.transitions)


def test_unsatisfiable_formula_collapses_to_sink():
    dfa = compile(parse_formula('X P & G !P', PDG), PDG)
    assert dfa.n_states == 1
    assert dfa.rejecting_sink == 0


def test_dot_output(generator_task):
    dot = dfa_to_dot(compile_tlcd(generator_task.team_tlcd))
    assert dot.startswith('digraph causal {')
    assert 'q2 [shape=circle, style=dashed];' in dot
    assert 'q1 -> q2 [label="P"];' in dot


_atoms = st.sampled_from([Atom('P'), Atom('D'), Atom('G')])
_formulas = st.recursive(
    _atoms,
    lambda inner: st.one_of(
        inner.map(Not), inner.map(Next), inner.map(Globally),
        st.tuples(inner, inner).map(lambda p: And(*p)),
        st.tuples(inner, inner).map(lambda p: Or(*p)),
        st.tuples(inner, inner).map(lambda p: Until(*p)),
        st.tuples(inner, inner).map(lambda p: WeakUntil(*p)),
    ),
    max_leaves=6,
)


@given(_formulas, st.lists(st.sampled_from(['P', 'D', 'G']), max_size=10))
@settings(max_examples=200, deadline=None)
def test_random_formulas_compile_faithfully(formula, sequence):
    dfa = compile(formula, PDG)
    assert dfa_run(dfa, tuple(sequence))[1] == ltlf_eval(formula, tuple(sequence))
