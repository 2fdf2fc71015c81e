import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from composition import bisimilar
from errors import InvalidInputError
from projection import compute_equivalence, describe_blocks, project, project_sequence
from rm_core import rm_run
from strategies import reward_machines


def _naive_partition(rm, local):
    # 直接反覆套用兩個條件直到不動點 (布林矩陣 + 遞移閉包)
    n = rm.n_states
    same = [[u == v for v in range(n)] for u in range(n)]
    changed = True
    while changed:
        changed = False

        def merge(u, v):
            nonlocal changed
            if not same[u][v]:
                same[u][v] = same[v][u] = True
                changed = True

        for (u, e), v in rm.transitions.items():
            if e not in local:
                merge(u, v)
        for (u, e), v in rm.transitions.items():
            for (u2, e2), v2 in rm.transitions.items():
                if e == e2 and e in local and same[u][u2]:
                    merge(v, v2)
        for k, i, j in itertools.product(range(n), repeat=3):
            if same[i][k] and same[k][j]:
                merge(i, j)
    return {frozenset(v for v in range(n) if same[u][v]) for u in range(n)}


def _block_names(projected, team):
    return [sorted(team.name(u) for u in block) for block in projected.members]


def test_generator_agent1_blocks(generator_task):
    projected = project(generator_task.rm, generator_task.alphabets[0])
    assert _block_names(projected, generator_task.rm) == [['u0'], ['u1'], ['u2', 'u4'], ['u3', 'u5']]
    assert projected.rm.labels == ('u0', 'u1', 'u2', 'u3')
    assert {projected.rm.name(u) for u in projected.rm.terminals} == {'u3'}


def test_generator_agent2_blocks(generator_task):
    projected = project(generator_task.rm, generator_task.alphabets[1])
    assert _block_names(projected, generator_task.rm) == [['u0', 'u1'], ['u2', 'u3'], ['u4', 'u5']]
    rm = projected.rm
    assert rm.successor(0, 'D') == 1
    assert rm.successor(1, 'G') == 2
    assert rm.terminals == frozenset({2})


def test_laboratory_agent1_projection(laboratory_task):
    team = laboratory_task.rm
    projected = project(team, laboratory_task.alphabets[0])
    assert sorted(map(tuple, _block_names(projected, team))) == [
        ('l0',), ('l1', 'l3'), ('l2',), ('l4',), ('l5',)]
    rm = projected.rm
    l1 = projected.block_of(team.state_id('l1'))
    assert rm.name(rm.successor(l1, 'M')) == 'l4'
    assert rm.name(rm.successor(l1, 'E')) == 'l5'
    assert rm.name(rm.successor(l1, 'F')) == 'l2'


def test_buttons_projections_accept_the_joint_plan(buttons_task):
    team = buttons_task.rm
    plan = ('B', 'B1', 'A2_B3', 'A3_B3', 'B2', 'B3', 'G')
    assert rm_run(team, plan) == 1
    for alphabet in buttons_task.alphabets:
        projected = project(team, alphabet)
        assert rm_run(projected.rm, project_sequence(plan, alphabet)) == 1


def test_block_of_maps_team_states(generator_task):
    team = generator_task.rm
    projected = project(team, generator_task.alphabets[0])
    assert projected.block_of(team.state_id('u4')) == projected.block_of(team.state_id('u2'))
    assert describe_blocks(projected, team)[2] == 'u2 = {u2 u4}'


def test_foreign_local_event_is_rejected(generator_task):
    with pytest.raises(InvalidInputError):
        project(generator_task.rm, ['P', 'Z'])


def test_project_sequence_keeps_order():
    assert project_sequence(('D', 'G', 'P', 'D'), {'P', 'D'}) == ('D', 'P', 'D')


@given(reward_machines())
@settings(max_examples=150, deadline=None)
def test_union_find_matches_naive_closure(rm):
    for local in (['a'], ['a', 'b'], ['b', 'c'], ['a', 'b', 'c']):
        partition = compute_equivalence(rm, local)
        assert set(partition.blocks) == _naive_partition(rm, set(local))


@given(reward_machines())
@settings(max_examples=100, deadline=None)
def test_projection_onto_full_alphabet_preserves_runs(rm):
    projected = project(rm, ['a', 'b', 'c'])
    assert all(len(block) == 1 for block in projected.members)
    for n in range(4):
        for seq in itertools.product('abc', repeat=n):
            assert rm_run(projected.rm, seq) == rm_run(rm, seq)


@pytest.mark.parametrize('task', ['generator', 'laboratory', 'buttons'])
def test_projection_is_idempotent(task, request):
    team = request.getfixturevalue(f'{task}_task')
    for alphabet in team.alphabets:
        once = project(team.rm, alphabet)
        twice = project(once.rm, alphabet)
        assert all(len(block) == 1 for block in twice.members)
        assert bisimilar(twice.rm, once.rm)


@given(reward_machines(), st.sampled_from([['a'], ['a', 'b'], ['b', 'c'], ['a', 'c']]))
@settings(max_examples=150, deadline=None)
def test_random_projection_is_idempotent(rm, local):
    once = project(rm, local)
    assert bisimilar(project(once.rm, local).rm, once.rm)
