import itertools

import pytest
from hypothesis import given, settings

from causal import build_tilde, format_tilde, should_short_circuit, value_iteration
from config import SINK_PENALTY
from errors import InvalidInputError
from projection import project
from rm_core import trivial_dfa
from strategies import dfas, reward_machines
from tasks import agent_causal_dfas


@pytest.fixture
def generator_tildes(generator_env, generator_task):
    return [build_tilde(p, dfa) for p, dfa in zip(generator_env.projections, agent_causal_dfas(generator_task))]


def _best_path_value(tilde, pair, depth):
    # 窮舉所有長度不超過 depth 的事件序列，取累積獎勵的最大值 (下界 0)
    best = 0.0
    for n in range(1, depth + 1):
        for seq in itertools.product(list(tilde.alphabet), repeat=n):
            u, q = pair
            total = 0.0
            for event in seq:
                if tilde.is_terminal(u, q):
                    break
                (u, q), reward = tilde.step(u, q, event)
                total += reward
            best = max(best, total)
    return best


def test_generator_agent1_values(generator_tildes):
    tilde = generator_tildes[0]
    table = value_iteration(tilde)
    projected = tilde.rm
    dfa = tilde.dfa
    u0, q0 = tilde.initial
    assert table[(u0, q0)] == 1.0

    u24 = projected.state_id('u2')
    q1 = dfa.step(q0, 'D')
    assert table[(u24, q1)] == 0.0
    assert should_short_circuit(table, u24, q1)
    assert not should_short_circuit(table, u0, q0)


def test_fuel_after_door_lands_in_sink(generator_tildes):
    tilde = generator_tildes[0]
    u0, q0 = tilde.initial
    (u, q), reward = tilde.step(u0, q0, 'D')
    assert reward == 0.0
    (u, q), reward = tilde.step(u, q, 'P')
    assert reward == SINK_PENALTY
    assert q == tilde.dfa.rejecting_sink
    assert tilde.rm.name(u) == 'u3'


def test_agent_without_tlcd_uses_trivial_dfa(generator_tildes):
    tilde = generator_tildes[1]
    assert tilde.dfa.n_states == 1
    assert not tilde.sink_pairs
    assert value_iteration(tilde)[tilde.initial] == 1.0


def test_terminal_pairs_are_absorbing(generator_tildes):
    tilde = generator_tildes[1]
    table = value_iteration(tilde)
    for k in tilde.terminals:
        u, q = tilde.pairs[k]
        assert table[(u, q)] == 0.0
        for event in tilde.alphabet:
            assert tilde.step(u, q, event) == ((u, q), 0.0)


def test_unknown_pair_is_rejected(generator_tildes):
    table = value_iteration(generator_tildes[0])
    with pytest.raises(InvalidInputError):
        should_short_circuit(table, 99, 0)


def test_dfa_must_cover_local_alphabet(generator_env):
    with pytest.raises(InvalidInputError):
        build_tilde(generator_env.projections[0], trivial_dfa(['P']))


def test_laboratory_agent_values_are_binary(laboratory_env, laboratory_task):
    for projected, dfa in zip(laboratory_env.projections, agent_causal_dfas(laboratory_task)):
        table = value_iteration(build_tilde(projected, dfa))
        assert {v for _, v in table.items()} <= {0.0, 1.0}
        assert table[(projected.rm.initial, dfa.initial)] == 1.0


def test_format_lists_values(generator_tildes):
    tilde = generator_tildes[0]
    text = format_tilde(tilde, value_iteration(tilde))
    assert '(u0, q0)  V*=1' in text
    assert 'sink' in text


@given(reward_machines(max_states=3), dfas(max_states=2))
@settings(max_examples=100, deadline=None)
def test_value_iteration_matches_exhaustive_search(rm, dfa):
    tilde = build_tilde(rm, dfa)
    table = value_iteration(tilde)
    for pair, value in table.items():
        assert value >= 0.0
        assert value == _best_path_value(tilde, pair, tilde.n_pairs)


@given(reward_machines())
@settings(max_examples=100, deadline=None)
def test_plain_value_is_one_iff_terminal_reachable(rm):
    tilde = build_tilde(rm)
    assert value_iteration(tilde)[tilde.initial] == (1.0 if _reachable_terminal(rm) else 0.0)


def _reachable_terminal(rm):
    if rm.initial in rm.terminals:
        return False
    seen, stack = {rm.initial}, [rm.initial]
    while stack:
        u = stack.pop()
        for e in rm.alphabet:
            v = rm.successor(u, e)
            if v is None or v in seen:
                continue
            if v in rm.terminals:
                return True
            seen.add(v)
            stack.append(v)
    return False


def test_projection_values_for_buttons(buttons_env):
    for projected in buttons_env.projections:
        table = value_iteration(build_tilde(projected))
        assert table[(projected.rm.initial, 0)] == 1.0
    assert project(buttons_env.rm, ['B', 'B3', 'G', 'S']).rm.n_states == 4
