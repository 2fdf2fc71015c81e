import itertools

import pytest
from hypothesis import given, settings

from composition import (bisimilar, check_relaxed, check_strict, compose_all, compose_rm_dfa, decompose,
                         format_counterexample, parallel_compose)
from errors import InvalidInputError
from projection import project, project_sequence
from rm_core import RewardMachine, rm_final_state, rm_run, trivial_dfa
from strategies import dfas, local_alphabets, reward_machines
from tasks import team_causal_dfa


def _strict_walk(rm, sequence):
    # 只沿實際轉移前進；遇到未定義事件回傳 None
    u = rm.initial
    trace = [u in rm.terminals]
    for event in sequence:
        u = rm.successor(u, event)
        if u is None:
            return trace, None
        trace.append(u in rm.terminals)
    return trace, u


def _brute_force_equivalent(a, b, length):
    # 有定義的序列集合相同，且每個前綴的終止與否相同
    for n in range(length + 1):
        for seq in itertools.product(list(a.alphabet), repeat=n):
            trace_a, end_a = _strict_walk(a, seq)
            trace_b, end_b = _strict_walk(b, seq)
            if trace_a != trace_b or (end_a is None) != (end_b is None):
                return False
    return True


def _equivalent_up_to(a, b, length):
    # 同上，但每一層只保留可達的狀態對，長度可以拉長到 |Ua|·|Ub|
    level = {(a.initial, b.initial)}
    for _ in range(length + 1):
        nxt = set()
        for u, v in level:
            if (u in a.terminals) != (v in b.terminals):
                return False
            for e in a.alphabet:
                x, y = a.successor(u, e), b.successor(v, e)
                if (x is None) != (y is None):
                    return False
                if x is not None:
                    nxt.add((x, y))
        level = nxt
    return True


# ==================== 案例任務 ====================
def test_generator_strict_fails_with_short_counterexample(generator_task):
    result = check_strict(generator_task.rm, generator_task.alphabets)
    assert not result
    assert result.counterexample == ('D', 'G', 'P')
    assert result.reason == 'acceptance'
    composed = compose_all([p.rm for p in decompose(generator_task.rm, generator_task.alphabets)])
    assert rm_run(generator_task.rm, result.counterexample) != rm_run(composed, result.counterexample)


def test_generator_relaxed_passes(generator_task):
    assert check_relaxed(generator_task.rm, generator_task.alphabets, team_causal_dfa(generator_task))


def test_laboratory_strict_fails_relaxed_passes(laboratory_task):
    team = laboratory_task.rm
    strict = check_strict(team, laboratory_task.alphabets)
    assert not strict
    assert len(strict.counterexample) >= 2
    # 反例重放：團隊與合成機在這個序列上確實不同
    composed = compose_all([p.rm for p in decompose(team, laboratory_task.alphabets)])
    sequence = strict.counterexample
    if strict.reason == 'acceptance':
        assert rm_run(team, sequence) != rm_run(composed, sequence)
    else:
        u, v = rm_final_state(team, sequence[:-1]), rm_final_state(composed, sequence[:-1])
        assert (team.successor(u, sequence[-1]) is None) != (composed.successor(v, sequence[-1]) is None)
    assert check_relaxed(team, laboratory_task.alphabets, team_causal_dfa(laboratory_task))


def test_buttons_strict_passes(buttons_task):
    result = check_strict(buttons_task.rm, buttons_task.alphabets)
    assert result
    assert (buttons_task.rm.initial, 0) in result.relation
    assert format_counterexample(result) == ''


def test_buttons_literal_composition_fails(buttons_task):
    # 字面合成：共享事件只要有一位擁有者能讀取就前進
    result = check_strict(buttons_task.rm, buttons_task.alphabets, synchronize_shared=False)
    assert not result
    assert result.counterexample


def test_buttons_team_acceptance_matches_every_local(buttons_task):
    team = buttons_task.rm
    projections = decompose(team, buttons_task.alphabets)
    composed = compose_all([p.rm for p in projections])
    stack = [((), team.initial)]
    while stack:
        sequence, u = stack.pop()
        ends = [_strict_walk(p.rm, project_sequence(sequence, p.alphabet))[1] for p in projections]
        assert all(end is not None for end in ends)
        assert (u in team.terminals) == all(end in p.rm.terminals for end, p in zip(ends, projections))
        if len(sequence) == 8:
            continue
        for e in team.alphabet:
            v = team.successor(u, e)
            if v is None:
                assert composed.successor(rm_final_state(composed, sequence), e) is None
            else:
                stack.append((sequence + (e,), v))


def test_relaxed_requires_dfa_over_team_alphabet(generator_task):
    with pytest.raises(InvalidInputError):
        check_relaxed(generator_task.rm, generator_task.alphabets, trivial_dfa(['P', 'D']))


def test_decompose_requires_coverage(generator_task):
    with pytest.raises(InvalidInputError):
        decompose(generator_task.rm, [['P'], ['D']])
    with pytest.raises(InvalidInputError):
        decompose(generator_task.rm, [['P', 'D', 'X'], ['G']])


def test_counterexample_formatting(generator_task):
    result = check_strict(generator_task.rm, generator_task.alphabets)
    assert format_counterexample(result).startswith('D G P')


# ==================== 合成 ====================
def test_parallel_compose_synchronizes_shared_events():
    a = RewardMachine.from_names(['a0', 'a1'], 'a0', 'x s', [('a0', 's', 'a1')], ['a1'])
    b = RewardMachine.from_names(['b0', 'b1', 'b2'], 'b0', 's y',
                                 [('b0', 'y', 'b1'), ('b1', 's', 'b2')], ['b2'])
    composed = parallel_compose(a, b)
    assert composed.successor(composed.initial, 's') is None
    assert rm_run(composed, ('y', 's')) == 1
    assert rm_run(composed, ('s', 'y')) == 0
    literal = parallel_compose(a, b, synchronize_shared=False)
    assert literal.successor(literal.initial, 's') is not None


def test_rm_dfa_product_uses_stay_semantics(chain_rm):
    dfa = trivial_dfa(['a', 'b'])
    product = compose_rm_dfa(chain_rm, dfa)
    assert product.successor(product.initial, 'b') == product.initial
    assert rm_run(product, ('b', 'a', 'b')) == 1


def test_bisimilar_requires_same_alphabet(chain_rm, generator_task):
    with pytest.raises(InvalidInputError):
        bisimilar(chain_rm, generator_task.rm)


# ==================== 性質 ====================
@given(reward_machines(events=('a', 'b'), max_states=4), reward_machines(events=('a', 'b'), max_states=4))
@settings(max_examples=200, deadline=None)
def test_bisimulation_matches_brute_force(a, b):
    result = bisimilar(a, b)
    assert bool(result) == _brute_force_equivalent(a, b, a.n_states + b.n_states)
    if not result:
        assert result.reason in ('acceptance', 'definedness')


@given(reward_machines(events=('a', 'b'), max_states=6), reward_machines(events=('a', 'b'), max_states=6))
@settings(max_examples=200, deadline=None)
def test_bisimulation_matches_bounded_equivalence(a, b):
    assert bool(bisimilar(a, b)) == _equivalent_up_to(a, b, a.n_states * b.n_states)


@given(reward_machines(events=('a', 'b'), max_states=3), reward_machines(events=('b', 'c'), max_states=3),
       reward_machines(events=('a', 'c'), max_states=3))
@settings(max_examples=100, deadline=None)
def test_parallel_composition_associates(a, b, c):
    left = parallel_compose(parallel_compose(a, b), c)
    right = parallel_compose(a, parallel_compose(b, c))
    assert bisimilar(left, right)


@given(reward_machines(), reward_machines())
@settings(max_examples=100, deadline=None)
def test_parallel_composition_commutes(a, b):
    left = parallel_compose(a, b)
    right = parallel_compose(b, a)
    assert bisimilar(left, right)


@given(reward_machines(), local_alphabets(), dfas())
@settings(max_examples=150, deadline=None)
def test_strict_pass_survives_causal_product(rm, alphabets, dfa):
    if check_strict(rm, alphabets):
        assert check_relaxed(rm, alphabets, dfa)


@given(reward_machines())
@settings(max_examples=100, deadline=None)
def test_single_agent_full_alphabet_is_strictly_decomposable(rm):
    assert check_strict(rm, [list(rm.alphabet)])


def test_projection_of_team_is_each_local_machine(generator_task):
    team = generator_task.rm
    locals_ = decompose(team, generator_task.alphabets)
    for alphabet, projected in zip(generator_task.alphabets, locals_):
        assert project(team, alphabet).rm.labels == projected.rm.labels


@pytest.mark.slow
@given(reward_machines(events=('a', 'b', 'c', 'd'), max_states=8),
       local_alphabets(events=('a', 'b', 'c', 'd')), dfas(events=('a', 'b', 'c', 'd'), max_states=5))
@settings(max_examples=1000, deadline=None)
def test_strict_pass_survives_causal_product_at_scale(rm, alphabets, dfa):
    if check_strict(rm, alphabets):
        assert check_relaxed(rm, alphabets, dfa)
