# 建立 projection.py → 投影模組
# 計算 ~i 等價關係 (union-find 不動點)、投影獎勵機、事件序列投影

import logging
from dataclasses import dataclass
from types import MappingProxyType

from errors import InvalidInputError, InvariantViolation
from rm_core import EventAlphabet, RewardMachine, restrict_to_reachable

logger = logging.getLogger(__name__)


# ==================== 分割 ====================
@dataclass(frozen=True)
class Partition:
    """
    狀態分割

    blocks 依最小成員 id 排序；block_of 將每個狀態對應到區塊編號
    """

    blocks: tuple
    block_of: object

    def same_block(self, u, v):
        return self.block_of[u] == self.block_of[v]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # 以較小 id 為代表
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def _as_alphabet(local):
    return local if isinstance(local, EventAlphabet) else EventAlphabet(local)


def compute_equivalence(rm, local):
    """
    功能:
        計算滿足兩個條件的最小等價關係 ~i

    參數:
        rm: 團隊獎勵機
        local: 代理人的局部事件集合 Σ_i

    返回:
        partition: Partition

    流程:
        1. 非局部事件的轉移兩端合併
        2. 重複施加同餘條件 (等價狀態經相同局部事件的目標合併) 直到穩定
    """
    local = _as_alphabet(local)
    if not local.issubset(rm.alphabet):
        foreign = [e for e in local if e not in rm.alphabet]
        raise InvalidInputError(f"局部字母表含有團隊字母表以外的事件: {' '.join(foreign)}")

    uf = _UnionFind(rm.n_states)

    # 步驟 1：非局部事件
    for (u, e), v in rm.transitions.items():
        if e not in local:
            uf.union(u, v)

    # 步驟 2：同餘閉包
    by_event = {}
    for (u, e), v in rm.transitions.items():
        if e in local:
            by_event.setdefault(e, []).append((u, v))

    changed = True
    while changed:
        changed = False
        for pairs in by_event.values():
            target_of = {}
            for u, v in pairs:
                root = uf.find(u)
                if root in target_of:
                    changed |= uf.union(target_of[root], v)
                else:
                    target_of[root] = v

    groups = {}
    for u in rm.states:
        groups.setdefault(uf.find(u), []).append(u)
    blocks = tuple(sorted((frozenset(members) for members in groups.values()), key=min))
    block_of = {u: index for index, block in enumerate(blocks) for u in block}
    return Partition(blocks, MappingProxyType(block_of))


# ==================== 投影獎勵機 ====================
@dataclass(frozen=True)
class ProjectedRm:
    """
    投影獎勵機 R_i

    rm 的狀態是 ~i 區塊 (只保留可達區塊)；members[k] 是投影狀態 k 對應的團隊狀態集合
    """

    rm: RewardMachine
    members: tuple
    partition: Partition
    _team_to_local: object

    @property
    def alphabet(self):
        return self.rm.alphabet

    def block_of(self, team_state):
        """團隊狀態 u 對應的投影狀態 [u]_i (被修剪的區塊回傳 None)"""
        return self._team_to_local.get(team_state)


def project(rm, local):
    """
    功能:
        沿局部事件集合投影團隊獎勵機

    參數:
        rm: 團隊獎勵機
        local: Σ_i

    返回:
        projected: ProjectedRm

    說明:
        區塊含有任一終止狀態即為終止區塊；同一區塊各成員的同一事件轉移
        必須落在同一區塊，否則丟出 InvariantViolation
    """
    local = _as_alphabet(local)
    partition = compute_equivalence(rm, local)
    block_of = partition.block_of

    table = {}
    for (u, e), v in rm.transitions.items():
        if e not in local:
            continue
        key = (block_of[u], e)
        if key in table and table[key] != block_of[v]:
            raise InvariantViolation(f"投影不良定義: 區塊 {key[0]} 在事件 {e} 上落入不同區塊")
        table[key] = block_of[v]

    terminals = frozenset(k for k, block in enumerate(partition.blocks) if block & rm.terminals)
    labels = tuple(rm.labels[min(block)] for block in partition.blocks)
    quotient = RewardMachine(labels, block_of[rm.initial], local, table, terminals)
    pruned, renumber = restrict_to_reachable(quotient)

    members = [None] * pruned.n_states
    for old, new in renumber.items():
        members[new] = partition.blocks[old]
    team_to_local = {u: renumber[block_of[u]] for u in rm.states if block_of[u] in renumber}

    logger.debug("投影 %s: %d 個團隊狀態 → %d 個局部狀態", ' '.join(local), rm.n_states, pruned.n_states)
    return ProjectedRm(pruned, tuple(members), partition, MappingProxyType(team_to_local))


def project_sequence(sequence, local):
    """保留序列中屬於局部字母表的事件 (保持順序)"""
    return tuple(e for e in sequence if e in local)


def describe_blocks(projected, team):
    """每個投影狀態對應的團隊狀態名稱，供文字輸出的註解使用"""
    lines = []
    for k, block in enumerate(projected.members):
        names = ' '.join(team.name(u) for u in sorted(block))
        lines.append(f"{projected.rm.name(k)} = {{{names}}}")
    return lines
