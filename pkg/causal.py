# 建立 causal.py → 因果增強獎勵機模組
# 代理人獎勵機 × 因果 DFA 乘積、匯點懲罰、無折扣 Bellman 值迭代、探索短路判斷

import logging
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from config import SINK_PENALTY
from errors import InvalidInputError, InvariantViolation
from rm_core import trivial_dfa
from tlcd import CausalDfa, find_rejecting_sink

logger = logging.getLogger(__name__)


# ==================== 乘積 ====================
@dataclass(frozen=True, eq=False)
class TildeRm:
    """
    增強獎勵機 R̃ = R_i × C_i (只含可達狀態對)

    pairs[k] = (u, q)；transitions[(k, e)] = k'；rewards[(k, e)] = σ̃
    terminals 為 u 終止的狀態對 (吸收)；sink_pairs 為 q 是拒絕匯點的狀態對
    """

    rm: object
    dfa: object
    pairs: tuple
    transitions: object
    rewards: object
    terminals: frozenset
    sink_pairs: frozenset

    def __post_init__(self):
        object.__setattr__(self, '_index', {pair: k for k, pair in enumerate(self.pairs)})

    @property
    def initial(self):
        return self.pairs[0]

    @property
    def alphabet(self):
        return self.rm.alphabet

    @property
    def n_pairs(self):
        return len(self.pairs)

    def pair_id(self, u, q):
        try:
            return self._index[(u, q)]
        except KeyError:
            raise InvalidInputError(f"狀態對 ({u}, {q}) 不在增強獎勵機中") from None

    def step(self, u, q, event):
        """讀取一個局部事件: 回傳 ((u', q'), σ̃)；終止狀態對停在原地且獎勵為 0"""
        k = self.pair_id(u, q)
        if k in self.terminals:
            return (u, q), 0.0
        nxt = self.transitions[(k, event)]
        return self.pairs[nxt], self.rewards[(k, event)]

    def is_terminal(self, u, q):
        return self.pair_id(u, q) in self.terminals

    def name(self, k):
        u, q = self.pairs[k]
        return f"({self.rm.name(u)}, {self.dfa.name(q)})"


def build_tilde(local, causal_local=None):
    """
    功能:
        建立代理人的增強獎勵機

    參數:
        local: ProjectedRm 或 RewardMachine
        causal_local: 在局部字母表上編譯的因果 DFA (None 表示不帶因果知識)

    返回:
        tilde: TildeRm

    說明:
        DFA 對每個局部事件都前進；獎勵機無對應轉移時停在原狀態。
        進入拒絕匯點的轉移獎勵為 -1，其餘沿用 σ_i
    """
    rm = getattr(local, 'rm', local)
    dfa = causal_local if causal_local is not None else trivial_dfa(rm.alphabet)
    if not rm.alphabet.issubset(dfa.alphabet):
        raise InvalidInputError(f"因果 DFA 字母表 {dfa.alphabet} 未包含局部字母表 {rm.alphabet}")
    sink = dfa.rejecting_sink if isinstance(dfa, CausalDfa) else find_rejecting_sink(dfa)

    start = (rm.initial, dfa.initial)
    index = {start: 0}
    pairs = [start]
    transitions, rewards = {}, {}
    queue = deque([start])
    while queue:
        u, q = pair = queue.popleft()
        if u in rm.terminals:
            continue
        for e in rm.alphabet:
            v = rm.successor(u, e)
            nxt = (u if v is None else v, dfa.step(q, e))
            if nxt not in index:
                index[nxt] = len(pairs)
                pairs.append(nxt)
                queue.append(nxt)
            transitions[(index[pair], e)] = index[nxt]
            rewards[(index[pair], e)] = SINK_PENALTY if nxt[1] == sink else float(rm.reward(u, nxt[0]))

    terminals = frozenset(k for k, (u, _) in enumerate(pairs) if u in rm.terminals)
    sink_pairs = frozenset(k for k, (_, q) in enumerate(pairs) if q == sink)
    logger.debug("增強獎勵機: %d 個狀態對，%d 個位於匯點", len(pairs), len(sink_pairs))
    return TildeRm(rm, dfa, tuple(pairs), MappingProxyType(transitions), MappingProxyType(rewards),
                   terminals, sink_pairs)


# ==================== 值迭代 ====================
@dataclass(frozen=True, eq=False)
class ValueTable:
    """(u, q) → V* 的唯讀表"""

    tilde: TildeRm
    values: np.ndarray

    def __contains__(self, pair):
        return pair in self.tilde._index

    def __getitem__(self, pair):
        return float(self.values[self.tilde.pair_id(*pair)])

    def items(self):
        return ((pair, float(v)) for pair, v in zip(self.tilde.pairs, self.values))


def value_iteration(tilde):
    """
    功能:
        求解無折扣 Bellman 最優方程 (下界截在 0)

        V*(u,q) = max(0, max_e [σ̃ + V*(δ̃((u,q), e))])，終止狀態對 V* = 0

    參數:
        tilde: TildeRm

    返回:
        table: ValueTable

    說明:
        就地 (Gauss-Seidel) 更新，從 0 開始即為最小不動點；
        超過 |狀態對|+1 輪仍未收斂代表存在正獎勵迴圈
    """
    n = tilde.n_pairs
    values = np.zeros(n)
    events = list(tilde.alphabet)
    for sweep in range(n + 1):
        changed = False
        for k in range(n):
            if k in tilde.terminals:
                continue
            best = 0.0
            for e in events:
                best = max(best, tilde.rewards[(k, e)] + values[tilde.transitions[(k, e)]])
            if best != values[k]:
                values[k] = best
                changed = True
        if not changed:
            logger.debug("值迭代於第 %d 輪收斂", sweep + 1)
            values.setflags(write=False)
            return ValueTable(tilde, values)
    raise InvariantViolation(f"值迭代 {n + 1} 輪後仍未收斂")


def should_short_circuit(table, u, q):
    """
    功能:
        (u, q) 的最優值為 0 時，本回合的探索已無法再得到獎勵，可提早重置

    返回:
        True ⟺ V*(u, q) == 0 (終止狀態對亦為 True)
    """
    if (u, q) not in table:
        raise InvalidInputError(f"狀態對 ({u}, {q}) 不在值表中")
    return table[(u, q)] == 0


def format_tilde(tilde, table=None):
    """增強獎勵機與 V* 的文字輸出 (inspect-tilde 使用)"""
    lines = [f"# 狀態對: {tilde.n_pairs}，匯點狀態對: {len(tilde.sink_pairs)}"]
    for k, pair in enumerate(tilde.pairs):
        flags = []
        if k in tilde.terminals:
            flags.append('terminal')
        if k in tilde.sink_pairs:
            flags.append('sink')
        value = f"  V*={table[pair]:g}" if table is not None else ''
        suffix = f"  [{', '.join(flags)}]" if flags else ''
        lines.append(f"{tilde.name(k)}{value}{suffix}")
        if k in tilde.terminals:
            continue
        for e in tilde.alphabet:
            target = tilde.transitions[(k, e)]
            reward = tilde.rewards[(k, e)]
            if target != k or reward:
                lines.append(f"    -{e}-> {tilde.name(target)}  σ̃={reward:g}")
    return '\n'.join(lines) + '\n'
