import numpy as np
import pytest

from causal import build_tilde, value_iteration
from config import ACTIONS
from envs import local_label, local_step
from errors import CriterionRejected, InvalidInputError, ValidationError
from harness import frechet_bounds
from rm_core import trivial_dfa
from tasks import agent_causal_dfas, team_causal_dfa
from training import (QPolicy, TrainConfig, causal_dqprm_train, centralized_train, dqprm_train, evaluate_policies,
                      execute_team, q_update)


def _small(**overrides):
    values = dict(num_episodes=2, num_steps=100, eval_every=100, eval_trials=2, seed=3)
    values.update(overrides)
    return TrainConfig(**values)


def _planned_policies(env, dfas):
    """
    以局部環境的最短路徑規劃填 Q 表：Q(s, u, a) = -(a 之後到完成的步數)

    規劃在增強獎勵機上做，進入拒絕匯點的轉移視為不可行；
    (格, u) 對應多個 DFA 狀態時取距離最短的那個
    """
    policies = []
    for local, projected, dfa in zip(env.locals_, env.projections, dfas):
        tilde = build_tilde(projected, dfa)
        cells = env.grid.free_cells()

        def successor(s, k):
            u, q = tilde.pairs[k]
            for action in ACTIONS:
                s_next = local_step(local, s, u, action)
                pair = (u, q)
                for event in local_label(local, s, u, s_next):
                    pair, _ = tilde.step(u, q, event)
                k_next = tilde.pair_id(*pair)
                yield None if k_next in tilde.sink_pairs else (s_next, k_next)

        done = tilde.terminals - tilde.sink_pairs
        dist = {(s, k): 0.0 if k in done else np.inf for s in cells for k in range(tilde.n_pairs)}
        changed = True
        while changed:
            changed = False
            for (s, k), d in dist.items():
                if k in done:
                    continue
                best = min(np.inf if nxt is None else 1 + dist[nxt] for nxt in successor(s, k))
                if best < d:
                    dist[(s, k)] = best
                    changed = True

        policy = QPolicy(epsilon=0.0)
        for s in cells:
            for u in range(projected.rm.n_states):
                ks = [k for k, (v, _) in enumerate(tilde.pairs) if v == u]
                if not ks:
                    continue
                k = min(ks, key=lambda k: dist[(s, k)])
                policy.row((s, u))[:] = [-1e6 if nxt is None or not np.isfinite(dist[nxt]) else -(1 + dist[nxt])
                                         for nxt in successor(s, k)]
        policies.append(policy)
    return policies


def _first_reach(curve, threshold=200):
    """完成任務步數中位數第一次 ≤ threshold 的訓練步數 (沒有到達為 inf)"""
    return next((step for step, value in curve if value <= threshold), np.inf)


# ==================== Q 表 ====================
def test_q_update_arithmetic():
    pol = QPolicy(len(ACTIONS), alpha=0.5, gamma=0.9, epsilon=0.0)
    q_update(pol, 's', 0, 2, 1.0, 't', 1, False)
    assert pol.values(('s', 0))[2] == pytest.approx(0.5)
    pol.row(('t', 1))[1] = 2.0
    q_update(pol, 's', 0, 2, 1.0, 't', 1, False)
    assert pol.values(('s', 0))[2] == pytest.approx(0.5 * 0.5 + 0.5 * (1.0 + 0.9 * 2.0))
    q_update(pol, 's', 0, 3, 1.0, 't', 1, True)
    assert pol.values(('s', 0))[3] == pytest.approx(0.5)


def test_greedy_breaks_ties_uniformly(rng):
    pol = QPolicy(len(ACTIONS))
    picks = {pol.greedy('unseen', rng) for _ in range(200)}
    assert picks == set(range(len(ACTIONS)))
    pol.row('seen')[4] = 1.0
    assert pol.greedy('seen', rng) == 4


def test_epsilon_greedy_explores(rng):
    pol = QPolicy(len(ACTIONS), epsilon=1.0)
    pol.row('k')[0] = 10.0
    assert len({pol.select('k', rng) for _ in range(200)}) > 1
    pol.epsilon = 0.0
    assert {pol.select('k', rng) for _ in range(20)} == {0}


def test_policy_save_and_load(tmp_path):
    pol = QPolicy(len(ACTIONS), alpha=0.2, gamma=0.8, epsilon=0.1)
    pol.row(((1, 2), 3))[:] = [0.1, 0.2, 0.3, 0.4, 0.5]
    pol.row((((1, 1), (2, 2)), (0, 1)))[2] = 7.0
    path = tmp_path / 'agent1.npz'
    pol.save(path)
    loaded = QPolicy.load(path)
    assert (loaded.alpha, loaded.gamma, loaded.epsilon) == (0.2, 0.8, 0.1)
    assert set(loaded.table) == set(pol.table)
    np.testing.assert_allclose(loaded.values(((1, 2), 3)), [0.1, 0.2, 0.3, 0.4, 0.5])
    with pytest.raises(InvalidInputError):
        QPolicy.load(tmp_path / 'missing.npz')


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(num_episodes=1, p_sync=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(num_episodes=1, num_steps=0)
    assert TrainConfig(num_episodes=3, num_steps=10).total_steps == 30


# ==================== 訓練 ====================
def test_dqprm_rejects_generator(generator_env):
    with pytest.raises(CriterionRejected) as info:
        dqprm_train(generator_env, _small())
    assert info.value.criterion == 'strict'
    assert info.value.result.counterexample == ('D', 'G', 'P')


def test_dqprm_returns_one_policy_per_buttons_agent(buttons_env):
    result = dqprm_train(buttons_env, _small(num_steps=50, eval_every=50, eval_trials=1))
    assert len(result.policies) == 3
    assert result.algorithm == 'dqprm'
    assert [step for step, _ in result.curve] == [50, 100]
    assert all(1 <= value <= 50 for _, value in result.curve)


def test_causal_dqprm_on_generator(generator_env, generator_task):
    result = causal_dqprm_train(generator_env, _small(), team_causal_dfa(generator_task),
                                agent_causal_dfas(generator_task))
    assert len(result.policies) == 2
    assert [step for step, _ in result.curve] == [100, 200]
    assert len(result.resets) == 2
    assert all(sum(v.values()) == 200 for v in result.visits)


def test_causal_dqprm_requires_relaxed_criterion(generator_env):
    with pytest.raises(CriterionRejected) as info:
        causal_dqprm_train(generator_env, _small(), trivial_dfa(generator_env.rm.alphabet))
    assert info.value.criterion == 'relaxed'
    with pytest.raises(InvalidInputError):
        causal_dqprm_train(generator_env, _small(), None)


def test_training_is_deterministic(generator_env, generator_task):
    team_dfa = team_causal_dfa(generator_task)
    first = causal_dqprm_train(generator_env, _small(), team_dfa, agent_causal_dfas(generator_task))
    second = causal_dqprm_train(generator_env, _small(), team_dfa, agent_causal_dfas(generator_task))
    assert first.curve == second.curve
    assert first.resets == second.resets
    for a, b in zip(first.policies, second.policies):
        assert set(a.table) == set(b.table)
        for key in a.table:
            np.testing.assert_array_equal(a.table[key], b.table[key])


@pytest.mark.parametrize('with_dfa', [False, True])
def test_centralized_baseline(generator_env, generator_task, with_dfa):
    dfa = team_causal_dfa(generator_task) if with_dfa else None
    result = centralized_train(generator_env, _small(eval_trials=1), dfa)
    assert isinstance(result.policies, QPolicy)
    assert result.policies.n_actions == len(ACTIONS) ** 2
    assert [step for step, _ in result.curve] == [100, 200]


# ==================== 評估 ====================
def test_execute_team_checks_policy_count(generator_env):
    with pytest.raises(InvalidInputError):
        execute_team(generator_env, [QPolicy()])


def test_evaluation_report_is_consistent(buttons_env):
    policies = [QPolicy() for _ in range(3)]
    report = evaluate_policies(buttons_env, policies, episodes=5, seed=0, max_steps=50)
    assert report.episodes == 5
    assert 0.0 <= report.team_rate <= 1.0
    assert len(report.agent_rates) == 3
    assert report.equivalence_violations == 0
    with pytest.raises(ValidationError):
        evaluate_policies(buttons_env, policies, episodes=0)



def test_evaluation_keeps_training_hazards(laboratory_env):
    laboratory_env.locals_[0].hazard = 'fire'
    laboratory_env.locals_[1].hazard = 'radiation'
    execute_team(laboratory_env, [QPolicy(), QPolicy()], 5, np.random.default_rng(0))
    evaluate_policies(laboratory_env, [QPolicy(), QPolicy()], episodes=4, max_steps=5)
    assert [local.hazard for local in laboratory_env.locals_] == ['fire', 'radiation']


@pytest.mark.parametrize('task', ['generator', 'buttons'])
def test_planned_policies_complete_the_task(task, request):
    env = request.getfixturevalue(f'{task}_env')
    dfas = agent_causal_dfas(request.getfixturevalue(f'{task}_task'))
    report = evaluate_policies(env, _planned_policies(env, dfas), episodes=500, seed=1)
    assert report.equivalence_violations == 0
    assert report.team_rate > 0.9
    assert all(rate >= report.team_rate for rate in report.agent_rates)
    assert frechet_bounds(report).holds


# ==================== 短路 ====================
def test_agent_episode_length_is_capped(generator_env, generator_task):
    # 代理人 1 五步之內到不了開門按鈕，只會因步數上限重置
    cfg = _small(num_episodes=20, num_steps=5, eval_every=100, eval_trials=1)
    result = causal_dqprm_train(generator_env, cfg, team_causal_dfa(generator_task))
    assert result.resets[0] == cfg.num_episodes - 1
    assert result.short_circuits[0] == {}
    assert sum(result.visits[0].values()) == cfg.total_steps


def test_short_circuit_resets_happen_at_zero_value(generator_env, generator_task):
    dfas = agent_causal_dfas(generator_task)
    cfg = _small(num_episodes=3, num_steps=1000, eval_every=3000, eval_trials=1, seed=0)
    result = causal_dqprm_train(generator_env, cfg, team_causal_dfa(generator_task), dfas)
    assert any(result.short_circuits)
    for projected, dfa, pairs, resets in zip(generator_env.projections, dfas, result.short_circuits, result.resets):
        table = value_iteration(build_tilde(projected, dfa))
        assert all(table[pair] == 0 for pair in pairs)
        assert sum(pairs.values()) <= resets


def _early_door_fraction(env, result):
    # 代理人 1 在拿燃料前開門 (團隊 u2) 之後所花的步數比例
    block = env.projections[0].block_of(env.rm.state_id('u2'))
    visits = result.visits[0]
    return visits.get(block, 0) / sum(visits.values())


@pytest.mark.slow
def test_generator_early_door_steps_with_and_without_tlcd(generator_env, generator_task):
    team_dfa, dfas = team_causal_dfa(generator_task), agent_causal_dfas(generator_task)
    cfg = TrainConfig(num_episodes=20, num_steps=1000, eval_every=20000, eval_trials=1, seed=0)
    with_tlcd = causal_dqprm_train(generator_env, cfg, team_dfa, dfas)
    without_tlcd = causal_dqprm_train(generator_env, cfg, team_dfa)
    assert _early_door_fraction(generator_env, with_tlcd) < 0.05
    assert _early_door_fraction(generator_env, without_tlcd) > 0.20

    table = value_iteration(build_tilde(generator_env.projections[0], dfas[0]))
    early_door = (generator_env.projections[0].block_of(generator_env.rm.state_id('u2')),
                  dfas[0].step(dfas[0].initial, 'D'))
    assert with_tlcd.short_circuits[0].get(early_door, 0) > 0
    assert all(table[pair] == 0 for pair in with_tlcd.short_circuits[0])


# ==================== 學習速度 ====================
@pytest.mark.slow
@pytest.mark.parametrize('task, episodes', [('generator', 60), ('laboratory', 100)])
def test_decentralized_tlcd_learns_before_centralized(task, episodes, request):
    env = request.getfixturevalue(f'{task}_env')
    definition = request.getfixturevalue(f'{task}_task')
    team_dfa, dfas = team_causal_dfa(definition), agent_causal_dfas(definition)
    decentralized, centralized = [], []
    for seed in range(3):
        cfg = TrainConfig(num_episodes=episodes, num_steps=1000, eval_every=2000, eval_trials=5, seed=seed)
        decentralized.append(_first_reach(causal_dqprm_train(env, cfg, team_dfa, dfas).curve))
        centralized.append(_first_reach(centralized_train(env, cfg).curve))
    assert np.isfinite(np.median(decentralized))
    assert np.median(decentralized) < np.median(centralized)


@pytest.mark.slow
def test_trained_generator_policies_satisfy_team_bounds(generator_env, generator_task):
    cfg = TrainConfig(num_episodes=60, num_steps=1000, eval_every=60000, eval_trials=1, seed=0)
    result = causal_dqprm_train(generator_env, cfg, team_causal_dfa(generator_task),
                                agent_causal_dfas(generator_task))
    report = evaluate_policies(generator_env, result.policies, episodes=500, seed=1)
    assert report.equivalence_violations == 0
    assert report.team_rate > 0
    assert frechet_bounds(report).holds
