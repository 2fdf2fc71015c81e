# 建立 training.py → 訓練模組
# 表格 Q-learning：DQPRM (分散式)、Causal DQPRM (因果短路)、集中式基準、貪婪執行與評估

import itertools
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from causal import build_tilde, should_short_circuit, value_iteration
from composition import check_relaxed, check_strict
from config import ACTIONS, ALPHA, EPSILON, EVAL_EVERY, EVAL_TRIALS, GAMMA, NUM_STEPS, P_SYNC, SINK_PENALTY
from envs import draw_accident, local_label, local_step, reset_episode, team_step
from errors import CriterionRejected, InvalidInputError, InvariantViolation, ValidationError

logger = logging.getLogger(__name__)


# ==================== Q 表 ====================
def _to_tuple(value):
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


class QPolicy:
    """
    表格 Q 函數：key → 各動作的值 (numpy 陣列)

    key 在分散式為 (格, u)，集中式為 (聯合格, u) 或 (聯合格, u, q)；
    未見過的 key 視為全 0，貪婪選擇時平手均勻隨機
    """

    def __init__(self, n_actions=len(ACTIONS), alpha=ALPHA, gamma=GAMMA, epsilon=EPSILON):
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon
        self.table = {}

    def __len__(self):
        return len(self.table)

    def values(self, key):
        row = self.table.get(key)
        return np.zeros(self.n_actions) if row is None else row

    def row(self, key):
        row = self.table.get(key)
        if row is None:
            row = self.table[key] = np.zeros(self.n_actions)
        return row

    def greedy(self, key, rng):
        v = self.values(key)
        return int(rng.choice(np.flatnonzero(v == v.max())))

    def select(self, key, rng):
        """ε-greedy"""
        if rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(key, rng)

    def save(self, path):
        """存成 .npz：keys 以 JSON 編碼"""
        keys = sorted(self.table, key=repr)
        values = np.stack([self.table[k] for k in keys]) if keys else np.zeros((0, self.n_actions))
        np.savez(path, keys=np.array([json.dumps(k) for k in keys], dtype=str), values=values,
                 params=np.array([self.alpha, self.gamma, self.epsilon, self.n_actions]))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"找不到策略檔案: {path}")
        with np.load(path) as data:
            alpha, gamma, epsilon, n_actions = data['params']
            policy = cls(int(n_actions), float(alpha), float(gamma), float(epsilon))
            for key, row in zip(data['keys'], data['values']):
                policy.table[_to_tuple(json.loads(str(key)))] = np.array(row, dtype=float)
        return policy


def q_update(pol, s, u, a, r, s_next, u_next, done):
    """
    功能:
        Q(s,u,a) ← (1−α)Q(s,u,a) + α(r + γ·max_a' Q(s',u',a'))，done 時不自舉

    參數:
        s, u / s_next, u_next: 組成 key 的兩部分 (集中式的 u 可為 (u, q))
        a: 動作索引
    """
    row = pol.row((s, u))
    target = r if done else r + pol.gamma * pol.values((s_next, u_next)).max()
    row[a] = (1 - pol.alpha) * row[a] + pol.alpha * target


# ==================== 設定與結果 ====================
@dataclass(frozen=True)
class TrainConfig:
    """訓練預算與超參數；總步數 = num_episodes × num_steps"""

    num_episodes: int
    num_steps: int = NUM_STEPS
    p_sync: float = P_SYNC
    alpha: float = ALPHA
    gamma: float = GAMMA
    epsilon: float = EPSILON
    seed: int = 0
    eval_every: int = EVAL_EVERY
    eval_trials: int = EVAL_TRIALS

    def __post_init__(self):
        if self.num_episodes < 0 or self.num_steps <= 0:
            raise ValidationError(f"訓練預算必須為正 (num_episodes={self.num_episodes}, num_steps={self.num_steps})")
        if not 0 < self.p_sync <= 1:
            raise ValidationError(f"p_sync 必須在 (0, 1] 之間 ({self.p_sync})")
        if not 0 <= self.alpha <= 1 or not 0 < self.gamma <= 1 or not 0 <= self.epsilon <= 1:
            raise ValidationError("alpha、epsilon 必須在 [0, 1]，gamma 必須在 (0, 1]")
        if self.eval_every <= 0 or self.eval_trials <= 0:
            raise ValidationError("評估間隔與次數必須為正")

    @property
    def total_steps(self):
        return self.num_episodes * self.num_steps

    def new_policy(self, n_actions=len(ACTIONS)):
        return QPolicy(n_actions, self.alpha, self.gamma, self.epsilon)

    def rngs(self):
        """訓練與評估使用互相獨立的亂數流"""
        train_seq, eval_seq = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(train_seq), np.random.default_rng(eval_seq)


@dataclass
class TrainResult:
    """
    policies: 分散式為 QPolicy 列表，集中式為單一 QPolicy
    curve: [(訓練步數, 完成任務步數的中位數)]
    visits[i]: 代理人 i 在各局部獎勵機狀態的步數
    resets[i]: 代理人 i 因短路或步數上限而重置的次數
    short_circuits[i]: 代理人 i 短路重置時所在的狀態對 (u, q) → 次數
    """

    policies: object
    curve: list = field(default_factory=list)
    visits: list = field(default_factory=list)
    resets: list = field(default_factory=list)
    algorithm: str = ''
    short_circuits: list = field(default_factory=list)


# ==================== 執行與評估 ====================
@dataclass(frozen=True)
class Execution:
    success: bool
    steps: int
    local_accepts: tuple


@contextmanager
def _keep_hazards(env):
    # 執行時重新抽的事故只在執行期間有效，結束後還原每位代理人的事故
    team_hazard, local_hazards = env.hazard, [local.hazard for local in env.locals_]
    try:
        yield
    finally:
        env.hazard = team_hazard
        for local, hazard in zip(env.locals_, local_hazards):
            local.hazard = hazard


def _execute(env, policies, max_steps, rng):
    with _keep_hazards(env):
        s, u = reset_episode(env, rng)
        for t in range(1, max_steps + 1):
            local_u = env.local_states(u)
            actions = []
            for local, policy, cell, ui in zip(env.locals_, policies, s, local_u):
                # 已完成的代理人停在原地
                if ui in local.rm.terminals:
                    actions.append('stay')
                else:
                    actions.append(ACTIONS[policy.greedy((cell, ui), rng)])
            step = team_step(env, s, u, tuple(actions))
            s, u = step.state, step.rm_state
            if step.done:
                return Execution(u in env.rm.terminals, t, _local_accepts(env, u))
        return Execution(False, max_steps, _local_accepts(env, u))


def _local_accepts(env, u):
    return tuple(ui in local.rm.terminals for local, ui in zip(env.locals_, env.local_states(u)))


def execute_team(env, policies, max_steps=NUM_STEPS, rng=None):
    """
    功能:
        分散式策略的貪婪聯合執行 (共享事件真正同步)

    返回:
        (success, steps): 失敗時 steps = max_steps
    """
    if len(policies) != env.n_agents:
        raise InvalidInputError(f"策略數量 ({len(policies)}) 與代理人數量 ({env.n_agents}) 不符")
    rng = rng if rng is not None else np.random.default_rng()
    result = _execute(env, policies, max_steps, rng)
    return result.success, result.steps


def _joint_actions(n_agents):
    return list(itertools.product(ACTIONS, repeat=n_agents))


def _advance_dfa(dfa, q, label, alphabet):
    for e in alphabet:
        if e in label:
            q = dfa.step(q, e)
    return q


def execute_centralized(env, policy, max_steps=NUM_STEPS, rng=None, dfa=None):
    """集中式策略的貪婪執行；dfa 給定時 key 包含因果 DFA 狀態"""
    rng = rng if rng is not None else np.random.default_rng()
    joint = _joint_actions(env.n_agents)
    with _keep_hazards(env):
        s, u = reset_episode(env, rng)
        q = dfa.initial if dfa is not None else None
        for t in range(1, max_steps + 1):
            key = (s, u) if dfa is None else (s, (u, q))
            step = team_step(env, s, u, joint[policy.greedy(key, rng)])
            if dfa is not None:
                q = _advance_dfa(dfa, q, step.label, env.rm.alphabet)
            s, u = step.state, step.rm_state
            if step.done:
                return u in env.rm.terminals, t
        return False, max_steps


@dataclass(frozen=True)
class EvaluationReport:
    """團隊與各代理人的成功率，以及團隊接受與局部全部接受不一致的回合數"""

    episodes: int
    team_rate: float
    agent_rates: tuple
    equivalence_violations: int


def evaluate_policies(env, policies, episodes, seed=0, max_steps=NUM_STEPS):
    """
    功能:
        以獨立回合估計團隊成功率與各代理人的局部成功率

    返回:
        report: EvaluationReport
    """
    if episodes <= 0:
        raise ValidationError("評估回合數必須為正")
    rng = np.random.default_rng(seed)
    team, agents, violations = 0, np.zeros(env.n_agents), 0
    for _ in range(episodes):
        result = _execute(env, policies, max_steps, rng)
        team += result.success
        agents += np.array(result.local_accepts, dtype=float)
        violations += result.success != all(result.local_accepts)
    return EvaluationReport(episodes, team / episodes, tuple(float(x) for x in agents / episodes), int(violations))


def _median_steps(run_once, cfg):
    return float(np.median([run_once() for _ in range(cfg.eval_trials)]))


def _record(curve, step, cfg, run_once):
    value = _median_steps(run_once, cfg)
    curve.append((step, value))
    logger.debug("訓練步數 %d: 完成任務步數中位數 %.1f", step, value)


# ==================== 分散式訓練 ====================
def _sync_label(env, label, rng, p_sync):
    # 訓練時以機率 p 模擬共享事件的同步
    if not label:
        return label
    (event,) = label
    if len(env.owners[event]) > 1 and rng.random() > p_sync:
        return frozenset()
    return label


def _draw_local_hazard(env, local, rng):
    if env.hazards:
        local.hazard = env.hazards[int(rng.integers(len(env.hazards)))]


def dqprm_train(env, cfg):
    """
    功能:
        DQPRM：各代理人在自己的投影獎勵機上獨立做 Q-learning

    參數:
        env: TeamEnv
        cfg: TrainConfig

    返回:
        result: TrainResult (policies 為每位代理人一個 QPolicy)

    流程:
        1. 嚴格分解準則不成立 → CriterionRejected
        2. 每回合重置所有代理人，回合內代理人輪流走一步；已完成的代理人跳過
        3. 共享事件只在以機率 p_sync 模擬同步成功時推進局部獎勵機
        4. 所有代理人完成後提早結束回合，直到用完總步數
    """
    result = check_strict(env.rm, [p.alphabet for p in env.projections])
    if not result:
        raise CriterionRejected('strict', result)
    logger.info("DQPRM: 嚴格分解準則成立，開始訓練 %d 位代理人", env.n_agents)

    rng, eval_rng = cfg.rngs()
    policies = [cfg.new_policy() for _ in env.locals_]
    visits = [dict() for _ in env.locals_]
    curve = []

    def run_once():
        return execute_team(env, policies, cfg.num_steps, eval_rng)[1]

    step = 0
    while step < cfg.total_steps:
        if env.hazards:
            draw_accident(env, rng)
        cells = [local.start for local in env.locals_]
        states = [local.rm.initial for local in env.locals_]
        complete = [False] * env.n_agents
        for _ in range(cfg.num_steps):
            step += 1
            for i, (local, policy) in enumerate(zip(env.locals_, policies)):
                if complete[i]:
                    continue
                s, u = cells[i], states[i]
                visits[i][u] = visits[i].get(u, 0) + 1
                a = policy.select((s, u), rng)
                s_next = local_step(local, s, u, ACTIONS[a])
                label = _sync_label(env, local_label(local, s, u, s_next), rng, cfg.p_sync)
                u_next = u
                for event in label:
                    v = local.rm.successor(u, event)
                    u_next = u if v is None else v
                reward = local.rm.reward(u, u_next)
                done = u_next in local.rm.terminals
                q_update(policy, s, u, a, reward, s_next, u_next, done)
                cells[i], states[i], complete[i] = s_next, u_next, done
            if step % cfg.eval_every == 0:
                _record(curve, step, cfg, run_once)
            if all(complete) or step >= cfg.total_steps:
                break

    return TrainResult(policies, curve, visits, [0] * env.n_agents, 'dqprm')


def causal_dqprm_train(env, cfg, team_dfa, agent_dfas=None):
    """
    功能:
        Causal DQPRM：以增強獎勵機 R̃_i 訓練，並在 V*(u, q) = 0 時提早重置代理人

    參數:
        env: TeamEnv
        cfg: TrainConfig
        team_dfa: 團隊 TL-CD 的因果 DFA (寬鬆分解準則使用)
        agent_dfas: 每位代理人的因果 DFA 列表 (None 項目表示不帶因果知識)

    返回:
        result: TrainResult

    說明:
        單一全域步數迴圈 (總步數 = num_episodes × num_steps)，
        每位代理人有自己的回合游標，步數超過 num_steps 或短路時各自重置
    """
    if team_dfa is None:
        raise InvalidInputError("Causal DQPRM 需要團隊 TL-CD 的因果 DFA")
    result = check_relaxed(env.rm, [p.alphabet for p in env.projections], team_dfa)
    if not result:
        raise CriterionRejected('relaxed', result)
    agent_dfas = list(agent_dfas) if agent_dfas is not None else [None] * env.n_agents
    if len(agent_dfas) != env.n_agents:
        raise InvalidInputError(f"因果 DFA 數量 ({len(agent_dfas)}) 與代理人數量 ({env.n_agents}) 不符")
    logger.info("Causal DQPRM: 寬鬆分解準則成立，開始訓練 %d 位代理人", env.n_agents)

    tildes = [build_tilde(p, dfa) for p, dfa in zip(env.projections, agent_dfas)]
    tables = [value_iteration(t) for t in tildes]
    for i, (tilde, table) in enumerate(zip(tildes, tables)):
        if should_short_circuit(table, *tilde.initial):
            raise InvariantViolation(f"代理人 {i + 1} 的初始狀態對 V* = 0，任務不可能完成")

    rng, eval_rng = cfg.rngs()
    policies = [cfg.new_policy() for _ in env.locals_]
    visits = [dict() for _ in env.locals_]
    resets = [0] * env.n_agents
    short_circuits = [dict() for _ in env.locals_]
    curve = []

    def run_once():
        return execute_team(env, policies, cfg.num_steps, eval_rng)[1]

    cells, states, steps = [], [], []
    for local, tilde in zip(env.locals_, tildes):
        _draw_local_hazard(env, local, rng)
        cells.append(local.start)
        states.append(tilde.initial)
        steps.append(0)

    for t in range(1, cfg.total_steps + 1):
        for i, (local, tilde, table, policy) in enumerate(zip(env.locals_, tildes, tables, policies)):
            u, q = states[i]
            short = should_short_circuit(table, u, q)
            if short or steps[i] >= cfg.num_steps:
                if short:
                    short_circuits[i][(u, q)] = short_circuits[i].get((u, q), 0) + 1
                _draw_local_hazard(env, local, rng)
                cells[i], states[i], steps[i] = local.start, tilde.initial, 0
                resets[i] += 1
                u, q = states[i]
            if table[(u, q)] <= 0:
                raise InvariantViolation(f"代理人 {i + 1} 在 V* = 0 的狀態對上繼續探索")

            s = cells[i]
            visits[i][u] = visits[i].get(u, 0) + 1
            a = policy.select((s, u), rng)
            s_next = local_step(local, s, u, ACTIONS[a])
            label = _sync_label(env, local_label(local, s, u, s_next), rng, cfg.p_sync)
            (u_next, q_next), reward = (u, q), 0.0
            for event in label:
                (u_next, q_next), reward = tilde.step(u, q, event)
            done = should_short_circuit(table, u_next, q_next)
            q_update(policy, s, u, a, reward, s_next, u_next, done)
            cells[i], states[i] = s_next, (u_next, q_next)
            steps[i] += 1
        if t % cfg.eval_every == 0:
            _record(curve, t, cfg, run_once)

    return TrainResult(policies, curve, visits, resets, 'causal-dqprm', short_circuits)


# ==================== 集中式基準 ====================
def centralized_train(env, cfg, team_dfa=None):
    """
    功能:
        單一 Q 表的集中式控制器 (聯合格 × 團隊獎勵機狀態 [× 因果 DFA 狀態])

    說明:
        有因果 DFA 時進入拒絕匯點的獎勵為 -1，並在 V*(u, q) = 0 時結束回合
    """
    rng, eval_rng = cfg.rngs()
    joint = _joint_actions(env.n_agents)
    policy = cfg.new_policy(len(joint))
    alphabet = list(env.rm.alphabet)
    tilde = table = sink = None
    if team_dfa is not None:
        tilde = build_tilde(env.rm, team_dfa)
        table = value_iteration(tilde)
        sink = getattr(team_dfa, 'rejecting_sink', None)
    visits = [dict()]
    curve = []

    def run_once():
        return execute_centralized(env, policy, cfg.num_steps, eval_rng, team_dfa)[1]

    step = 0
    while step < cfg.total_steps:
        s, u = reset_episode(env, rng)
        q = team_dfa.initial if team_dfa is not None else None
        for _ in range(cfg.num_steps):
            step += 1
            visits[0][u] = visits[0].get(u, 0) + 1
            key_u = u if team_dfa is None else (u, q)
            a = policy.select((s, key_u), rng)
            result = team_step(env, s, u, joint[a])
            reward, done = float(result.reward), result.done
            next_u = result.rm_state
            if team_dfa is not None:
                q_next = _advance_dfa(team_dfa, q, result.label, alphabet)
                if q_next == sink:
                    reward = SINK_PENALTY
                done = done or should_short_circuit(table, next_u, q_next)
                next_key_u = (next_u, q_next)
                q = q_next
            else:
                next_key_u = next_u
            q_update(policy, s, key_u, a, reward, result.state, next_key_u, done)
            s, u = result.state, next_u
            if step % cfg.eval_every == 0:
                _record(curve, step, cfg, run_once)
            if done or step >= cfg.total_steps:
                break

    return TrainResult(policy, curve, visits, [0], 'centralized')
