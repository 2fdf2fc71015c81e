# 建立 composition.py → 合成與互模擬模組
# 平行合成、獎勵機與 DFA 的乘積、互模擬判定與反例、嚴格 / 寬鬆分解準則

import logging
from collections import deque
from dataclasses import dataclass

from errors import InvalidInputError, InvariantViolation
from projection import project
from rm_core import EventAlphabet, RewardMachine, rm_final_state, rm_run

logger = logging.getLogger(__name__)

# 合成後的獎勵機：狀態名稱是各元件狀態名稱組成的 tuple
ComposedRm = RewardMachine


@dataclass(frozen=True)
class BisimResult:
    """
    互模擬判定結果

    bisimilar 為真時 relation 是從初始對同步展開的狀態對；
    為假時 counterexample 是最短的區分序列，reason 說明區分方式
    ('acceptance' 接受結果不同，'definedness' 某一事件只在一方有定義)
    """

    bisimilar: bool
    relation: frozenset = None
    counterexample: tuple = None
    reason: str = None

    def __bool__(self):
        return self.bisimilar


# ==================== 平行合成 ====================
def _joint_successor(machines, state, event, owners, synchronize_shared):
    nxt = list(state)
    moved = False
    for k in owners:
        v = machines[k].successor(state[k], event)
        if v is None:
            if synchronize_shared:
                return None
            continue
        nxt[k] = v
        moved = True
    return tuple(nxt) if moved else None


def compose_all(machines, synchronize_shared=True):
    """
    功能:
        多個獎勵機的平行合成 (只保留可達乘積狀態)

    參數:
        machines: RewardMachine 列表
        synchronize_shared: 共享事件是否要求所有擁有該事件的元件都有定義

    返回:
        composed: ComposedRm，終止狀態 = 各元件皆終止
    """
    machines = list(machines)
    if not machines:
        raise InvalidInputError("平行合成至少需要一個獎勵機")
    alphabet = machines[0].alphabet
    for m in machines[1:]:
        alphabet = alphabet.union(m.alphabet)
    owners = {e: [k for k, m in enumerate(machines) if e in m.alphabet] for e in alphabet}

    def is_terminal(state):
        return all(c in m.terminals for m, c in zip(machines, state))

    start = tuple(m.initial for m in machines)
    index = {start: 0}
    order = [start]
    table = {}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if is_terminal(state):
            continue
        for e in alphabet:
            nxt = _joint_successor(machines, state, e, owners[e], synchronize_shared)
            if nxt is None:
                continue
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            table[(index[state], e)] = index[nxt]

    labels = tuple(tuple(m.labels[c] for m, c in zip(machines, state)) for state in order)
    terminals = frozenset(i for i, state in enumerate(order) if is_terminal(state))
    return RewardMachine(labels, 0, alphabet, table, terminals)


def parallel_compose(a, b, synchronize_shared=True):
    """兩個獎勵機的平行合成 R_a ∥ R_b"""
    return compose_all([a, b], synchronize_shared)


def compose_rm_dfa(rm, dfa):
    """
    功能:
        獎勵機與 DFA 的乘積 R ∥ C

    說明:
        DFA 分量每個事件都前進；獎勵機分量依部分轉移前進 (無定義時停留)。
        乘積狀態為終止 ⟺ 獎勵機分量終止且 DFA 分量接受
    """
    if not rm.alphabet.issubset(dfa.alphabet):
        raise InvalidInputError("DFA 字母表必須包含獎勵機字母表")

    start = (rm.initial, dfa.initial)
    index = {start: 0}
    order = [start]
    table = {}
    queue = deque([start])
    while queue:
        u, q = state = queue.popleft()
        if u in rm.terminals and q in dfa.accepting:
            continue
        for e in dfa.alphabet:
            v = rm.successor(u, e)
            nxt = (u if v is None else v, dfa.step(q, e))
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            table[(index[state], e)] = index[nxt]

    labels = tuple((rm.labels[u], dfa.labels[q]) for u, q in order)
    terminals = frozenset(i for i, (u, q) in enumerate(order) if u in rm.terminals and q in dfa.accepting)
    return RewardMachine(labels, 0, dfa.alphabet, table, terminals)


# ==================== 互模擬 ====================
def _number(keys, nodes):
    ids = {}
    block = {}
    for node in nodes:
        block[node] = ids.setdefault(keys[node], len(ids))
    return block


def _refine(a, b, alphabet):
    machines = {0: a, 1: b}
    nodes = [(0, u) for u in a.states] + [(1, v) for v in b.states]

    def successors(node):
        m = machines[node[0]]
        out = []
        for e in alphabet:
            v = m.successor(node[1], e)
            out.append(None if v is None else (node[0], v))
        return out

    succ = {node: successors(node) for node in nodes}
    # 初始分割：接受與否 + 哪些事件有定義
    keys = {node: (node[1] in machines[node[0]].terminals, tuple(s is not None for s in succ[node]))
            for node in nodes}
    block = _number(keys, nodes)
    while True:
        keys = {node: (block[node], tuple(-1 if s is None else block[s] for s in succ[node]))
                for node in nodes}
        refined = _number(keys, nodes)
        if max(refined.values()) == max(block.values()):
            return refined
        block = refined


def _relation(a, b, alphabet):
    start = (a.initial, b.initial)
    seen = {start}
    queue = deque([start])
    while queue:
        u, v = queue.popleft()
        for e in alphabet:
            su, sv = a.successor(u, e), b.successor(v, e)
            if su is None or sv is None:
                continue
            if (su, sv) not in seen:
                seen.add((su, sv))
                queue.append((su, sv))
    return frozenset(seen)


def _path(parent, pair):
    events = []
    while parent[pair] is not None:
        pair, event = parent[pair]
        events.append(event)
    return tuple(reversed(events))


def _shortest_distinction(a, b, alphabet):
    # 同步 BFS：優先回傳接受結果不同的最短序列，其次是可定義性不同的最短序列
    start = (a.initial, b.initial)
    parent = {start: None}
    queue = deque([start])
    definedness = None
    while queue:
        pair = queue.popleft()
        u, v = pair
        if (u in a.terminals) != (v in b.terminals):
            return _path(parent, pair), 'acceptance'
        for e in alphabet:
            su, sv = a.successor(u, e), b.successor(v, e)
            if definedness is None and (su is None) != (sv is None):
                definedness = _path(parent, pair) + (e,)
            nxt = (u if su is None else su, v if sv is None else sv)
            if nxt not in parent:
                parent[nxt] = (pair, e)
                queue.append(nxt)
    if definedness is not None:
        return definedness, 'definedness'
    raise InvariantViolation("分割判定不互模擬，但找不到區分序列")


def _verify(a, b, sequence, reason):
    if reason == 'acceptance':
        return rm_run(a, sequence) != rm_run(b, sequence)
    prefix, last = sequence[:-1], sequence[-1]
    u, v = rm_final_state(a, prefix), rm_final_state(b, prefix)
    return (a.successor(u, last) is None) != (b.successor(v, last) is None)


def bisimilar(a, b):
    """
    功能:
        判定兩個獎勵機是否互模擬

    參數:
        a, b: 字母表相同的 RewardMachine

    返回:
        result: BisimResult

    流程:
        1. 在兩機的不交聯集上做分割細化 (接受與否、可定義事件集合、後繼區塊)
        2. 初始狀態同區塊 → 互模擬，從初始對展開關係
        3. 否則以同步 BFS 找最短區分序列，重放驗證後回傳
    """
    if a.alphabet != b.alphabet:
        raise InvalidInputError(f"互模擬需要相同字母表: {a.alphabet} vs {b.alphabet}")
    alphabet = list(a.alphabet)

    block = _refine(a, b, alphabet)
    if block[(0, a.initial)] == block[(1, b.initial)]:
        return BisimResult(True, relation=_relation(a, b, alphabet))

    sequence, reason = _shortest_distinction(a, b, alphabet)
    if not _verify(a, b, sequence, reason):
        raise InvariantViolation(f"反例重放失敗: {' '.join(sequence)}")
    return BisimResult(False, counterexample=sequence, reason=reason)


# ==================== 分解準則 ====================
def decompose(team, locals_):
    """
    功能:
        檢查局部字母表覆蓋團隊字母表，並投影出每位代理人的獎勵機

    返回:
        projections: ProjectedRm 列表
    """
    alphabets = [x if isinstance(x, EventAlphabet) else EventAlphabet(x) for x in locals_]
    if not alphabets:
        raise InvalidInputError("至少需要一個局部字母表")
    for alphabet in alphabets:
        if not alphabet.issubset(team.alphabet):
            raise InvalidInputError(f"局部字母表 {alphabet} 不是團隊字母表的子集")
    covered = set().union(*(set(x) for x in alphabets))
    missing = [e for e in team.alphabet if e not in covered]
    if missing:
        raise InvalidInputError(f"局部字母表未覆蓋團隊事件: {' '.join(missing)}")
    return [project(team, alphabet) for alphabet in alphabets]


def check_strict(team, locals_, synchronize_shared=True):
    """嚴格準則：R ≅ ∥ R_i"""
    projections = decompose(team, locals_)
    composed = compose_all([p.rm for p in projections], synchronize_shared)
    result = bisimilar(team, composed)
    logger.info("嚴格分解準則: %s", 'PASS' if result else 'FAIL')
    return result


def check_relaxed(team, locals_, causal, synchronize_shared=True):
    """寬鬆準則：R ∥ C ≅ (∥ R_i) ∥ C"""
    if not team.alphabet.issubset(causal.alphabet):
        raise InvalidInputError("因果 DFA 字母表必須包含團隊字母表")
    projections = decompose(team, locals_)
    composed = compose_all([p.rm for p in projections], synchronize_shared)
    result = bisimilar(compose_rm_dfa(team, causal), compose_rm_dfa(composed, causal))
    logger.info("寬鬆分解準則: %s", 'PASS' if result else 'FAIL')
    return result


def format_counterexample(result):
    if result.bisimilar:
        return ''
    sequence = ' '.join(result.counterexample) or 'ε'
    kind = '接受結果不同' if result.reason == 'acceptance' else '事件可定義性不同'
    return f"{sequence} ({kind})"
