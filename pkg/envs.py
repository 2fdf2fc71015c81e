# 建立 envs.py → 多代理人環境模組
# 局部動態與標籤函數、團隊步進 (共享事件一致決)、同步機制、事故抽樣、隨機 rollout

import logging
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from config import ACTIONS, P_SYNC
from errors import ConsistencyError, InvalidInputError, ValidationError
from gridworld import HAZARDS, try_move
from projection import project
from rm_core import EMPTY_LABEL, dead_states, rm_read_labelset

logger = logging.getLogger(__name__)


# ==================== 局部環境 ====================
class LocalEnv:
    """
    單一代理人的局部環境

    動態與標籤函數都以代理人的投影獎勵機狀態 u 為條件；
    hazard 為本回合抽到的事故 (Laboratory)，由 TeamEnv 設定
    """

    def __init__(self, grid, agent, projected):
        self.grid = grid
        self.agent = agent
        self.projected = projected
        self.rm = projected.rm
        self.start = grid.starts[agent]
        self.hazard = None
        # 有轉移的事件；沒有轉移的事件 (如 S) 只作為觀察，永遠可發出
        self.active_events = frozenset(e for (_, e) in self.rm.transitions)
        self.open_states = {e: self._states_after(e) for e in self.rm.alphabet}
        self._moves = {}
        self._labels = {}

    def _states_after(self, event):
        # 閘門在讀過 event 之後的所有狀態都開啟
        seeds = [v for (u, e), v in self.rm.transitions.items() if e == event]
        seen = set(seeds)
        queue = deque(seeds)
        while queue:
            u = queue.popleft()
            for e in self.rm.alphabet:
                v = self.rm.successor(u, e)
                if v is not None and v not in seen:
                    seen.add(v)
                    queue.append(v)
        return frozenset(seen)

    def enabled(self, event, u):
        if event not in self.rm.alphabet:
            return False
        return self.rm.successor(u, event) is not None or event not in self.active_events

    def barrier_open(self, event, u):
        if event not in self.rm.alphabet:
            return True
        return u in self.open_states[event]

    def __repr__(self):
        return f"LocalEnv(agent={self.agent}, start={self.start}, alphabet={' '.join(self.rm.alphabet)})"


def local_step(env, s, u, a):
    """
    功能:
        代理人的確定性移動 (牆壁、單向坡道、依獎勵機狀態開啟的閘門)

    參數:
        env: LocalEnv
        s: 目前格 (列, 行)
        u: 投影獎勵機狀態
        a: 動作

    返回:
        s': 下一格；被擋住時與 s 相同
    """
    key = (s, u, a)
    cached = env._moves.get(key)
    if cached is None:
        cached = try_move(env.grid, env.agent, s, a, lambda event: env.barrier_open(event, u))
        env._moves[key] = cached
    return cached


def local_label(env, s, u, s_next):
    """
    功能:
        局部標籤函數 L_i(s, u, s')，最多輸出一個事件

    說明:
        1. 離開帶有 leave 事件的格時，第一個已啟用的離開事件優先
        2. 停在 (或進入) 特殊格時，第一個已啟用的事件
        3. 事故格只有在本回合事故相符時才發出事件
    """
    key = (s, u, s_next, env.hazard)
    cached = env._labels.get(key)
    if cached is not None:
        return cached

    label = EMPTY_LABEL
    here = env.grid.tag(s, env.agent)
    there = env.grid.tag(s_next, env.agent)
    if s_next != s and here is not None:
        for event in here.leave:
            if env.enabled(event, u):
                label = frozenset({event})
                break
    if not label and there is not None and (there.hazard is None or there.hazard == env.hazard):
        for event in there.events:
            if env.enabled(event, u):
                label = frozenset({event})
                break
    env._labels[key] = label
    return label


# ==================== 同步 ====================
@dataclass
class SyncOracle:
    """
    共享事件的同步機制

    mode='training': 每步以機率 p_sync 模擬同步 (Bernoulli)
    mode='execution': 所有共享代理人同一步都發出事件才同步
    """

    mode: str = 'training'
    p_sync: float = P_SYNC
    rng: object = None

    def __post_init__(self):
        if self.mode not in ('training', 'execution'):
            raise ValidationError(f"未知同步模式: {self.mode!r}")
        if not 0 < self.p_sync <= 1:
            raise ValidationError(f"p_sync 必須在 (0, 1] 之間 ({self.p_sync})")
        if self.mode == 'training' and self.rng is None:
            raise ValidationError("訓練模式需要亂數產生器")

    def fires(self, event, sharers, emitted=None):
        """
        參數:
            event: 事件
            sharers: 共享此事件的代理人索引 (I_e)
            emitted: 執行模式下，代理人索引 → 本步標籤
        """
        if len(sharers) <= 1:
            return True
        if self.mode == 'training':
            return self.rng.random() <= self.p_sync
        return all(event in emitted[i] for i in sharers)


# ==================== 團隊環境 ====================
class TeamStep(NamedTuple):
    state: tuple
    rm_state: int
    reward: int
    done: bool
    label: frozenset


class TeamEnv:
    """
    多代理人 RM-MDP

    locals_[i] 是第 i 位代理人 (編號 i+1) 的局部環境；
    owners[e] 是共享事件 e 的代理人索引 I_e
    """

    def __init__(self, grid, rm, alphabets, name=''):
        if len(alphabets) != grid.n_agents:
            raise InvalidInputError(f"局部字母表數量 ({len(alphabets)}) 與代理人數量 ({grid.n_agents}) 不符")
        self.name = name
        self.grid = grid
        self.rm = rm
        self.projections = [project(rm, alphabet) for alphabet in alphabets]
        self.locals_ = [LocalEnv(grid, k + 1, p) for k, p in enumerate(self.projections)]
        self.owners = {e: tuple(i for i, p in enumerate(self.projections) if e in p.alphabet)
                       for e in rm.alphabet}
        self.dead = dead_states(rm)
        self.hazards = HAZARDS if any(tag.hazard for tags in grid.special_cells.values() for tag in tags) else ()
        self.hazard = None

    @property
    def n_agents(self):
        return len(self.locals_)

    def initial_state(self):
        return tuple(env.start for env in self.locals_)

    def set_hazard(self, hazard):
        self.hazard = hazard
        for env in self.locals_:
            env.hazard = hazard

    def local_states(self, u):
        """團隊狀態 u 在每位代理人的投影狀態 [u]_i"""
        return tuple(p.block_of(u) for p in self.projections)

    def __repr__(self):
        return f"TeamEnv(name={self.name!r}, agents={self.n_agents}, rm_states={self.rm.n_states})"


def team_step(env, s, u, a):
    """
    功能:
        團隊同步一步

    參數:
        env: TeamEnv
        s: 聯合格狀態 (每位代理人一格)
        u: 團隊獎勵機狀態
        a: 聯合動作

    返回:
        TeamStep(state, rm_state, reward, done, label)

    流程:
        1. 各代理人依 [u]_i 移動並產生局部標籤
        2. 團隊標籤 = 所有共享者都發出的事件 (一致決)
        3. 團隊獎勵機讀取標籤集合
        4. 檢查每位代理人的局部獎勵機追蹤結果等於 [u']_i
    """
    if len(s) != env.n_agents or len(a) != env.n_agents:
        raise InvalidInputError(f"聯合狀態/動作維度與代理人數量 ({env.n_agents}) 不符")
    local_u = env.local_states(u)

    s_next, labels = [], []
    for local, cell, ui, action in zip(env.locals_, s, local_u, a):
        nxt = local_step(local, cell, ui, action)
        s_next.append(nxt)
        labels.append(local_label(local, cell, ui, nxt))

    emitted = set().union(*labels)
    team_label = frozenset(e for e in emitted if all(e in labels[i] for i in env.owners[e]))
    u_next, reward = rm_read_labelset(env.rm, u, team_label)

    expected = env.local_states(u_next)
    for i, (local, ui) in enumerate(zip(env.locals_, local_u)):
        v = ui
        for e in local.rm.alphabet:
            if e in team_label:
                w = local.rm.successor(v, e)
                v = v if w is None else w
        if v != expected[i]:
            raise ConsistencyError(
                f"代理人 {i + 1} 的局部獎勵機追蹤結果 {local.rm.name(v)} 與團隊狀態 "
                f"{env.rm.name(u_next)} 的投影 {local.rm.name(expected[i])} 不一致")

    done = u_next in env.rm.terminals or u_next in env.dead
    return TeamStep(tuple(s_next), u_next, reward, done, team_label)


def draw_accident(env, rng):
    """
    功能:
        回合開始時等機率抽出事故類型 (fire / radiation)，並設定到所有局部環境

    返回:
        hazard: 'fire' 或 'radiation'
    """
    if not env.hazards:
        raise InvalidInputError(f"環境 {env.name!r} 沒有事故格")
    hazard = env.hazards[int(rng.integers(len(env.hazards)))]
    env.set_hazard(hazard)
    return hazard


def reset_episode(env, rng):
    """回合開始：有事故格時重新抽樣"""
    if env.hazards:
        draw_accident(env, rng)
    return env.initial_state(), env.rm.initial


def buttons_red_press(env, joint):
    """代理人 2 與 3 同一步都站在紅色按鈕格上"""
    if env.n_agents < 3:
        raise InvalidInputError("紅色按鈕需要至少三位代理人")
    red = env.grid.cells_with_event('B2')
    return joint[1] in red and joint[2] in red


# ==================== Rollout ====================
@dataclass(frozen=True)
class Rollout:
    labels: tuple          # 每步的團隊標籤
    local_labels: tuple    # 每步每位代理人的局部標籤
    rm_states: tuple
    completed: bool

    def events(self, alphabet):
        """團隊標籤依字母表順序展開成事件序列"""
        return tuple(e for label in self.labels for e in alphabet if e in label)


def rollout(env, policy_fn, steps, rng):
    """
    功能:
        執行一個回合並記錄標籤 (用於可達性與可分解性檢查)

    參數:
        env: TeamEnv
        policy_fn: (state, u, rng) → 聯合動作
        steps: 步數上限
        rng: numpy Generator
    """
    s, u = reset_episode(env, rng)
    labels, local_labels, rm_states = [], [], [u]
    completed = False
    for _ in range(steps):
        a = policy_fn(s, u, rng)
        local_u = env.local_states(u)
        local_labels.append(tuple(
            local_label(local, cell, ui, local_step(local, cell, ui, action))
            for local, cell, ui, action in zip(env.locals_, s, local_u, a)))
        step = team_step(env, s, u, a)
        labels.append(step.label)
        rm_states.append(step.rm_state)
        s, u = step.state, step.rm_state
        if step.done:
            completed = u in env.rm.terminals
            break
    return Rollout(tuple(labels), tuple(local_labels), tuple(rm_states), completed)


def random_policy(env):
    """均勻隨機聯合動作"""
    def policy_fn(state, u, rng):
        return tuple(ACTIONS[k] for k in rng.integers(len(ACTIONS), size=env.n_agents))
    return policy_fn
