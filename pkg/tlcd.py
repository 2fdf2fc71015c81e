# 建立 tlcd.py → 時序因果圖 (TL-CD) 模組
# 解析 .tlcd 檔、轉為 LTLf 公式、以公式推進編譯成最小化因果 DFA、找出拒絕匯點

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from config import MAX_FORMULA_STATES
from errors import InvalidInputError, InvariantViolation, ParseError
from ltlf import (Atom, FormulaParser, Globally, Implies, N_FALSE, Not, atoms, conjoin, disjoin, final, nnf,
                  progress, tokenize)
from rm_core import Dfa, EventAlphabet

logger = logging.getLogger(__name__)


# ==================== 資料結構 ====================
@dataclass(frozen=True)
class Tlcd:
    """
    時序因果圖：節點是 LTLf 公式，每條邊 lhs ~> rhs 代表 G(lhs → rhs)

    alphabet 是檔案宣告的字母表；edges 依檔案順序
    """

    alphabet: EventAlphabet
    edges: tuple

    def __post_init__(self):
        if not self.edges:
            raise InvalidInputError("TL-CD 至少需要一條邊")

    @property
    def nodes(self):
        seen = {}
        for lhs, rhs in self.edges:
            seen.setdefault(lhs, None)
            seen.setdefault(rhs, None)
        return tuple(seen)

    def __str__(self):
        lines = [f"alphabet: {' '.join(self.alphabet)}"]
        lines += [f"{lhs} ~> {rhs}" for lhs, rhs in self.edges]
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True, eq=False)
class CausalDfa(Dfa):
    """
    最小化的因果 DFA

    rejecting_sink: 非接受且全部自迴圈的狀態 (沒有則為 None)
    collapsed_dead_states: 推進過程是否出現非 false 但無法接受的殘餘公式 (已併入匯點)
    """

    rejecting_sink: int = None
    collapsed_dead_states: bool = False


# ==================== 解析 ====================
def parse_tlcd(text, alphabet=None):
    """
    功能:
        解析 .tlcd 文字

    參數:
        text: 檔案內容；第一個非空行為 "alphabet: P D G"，其後每行 "公式 ~> 公式"
        alphabet: 外部指定的字母表 (給定時可省略 alphabet 行)

    返回:
        tlcd: Tlcd

    範例:
        >>> t = parse_tlcd("alphabet: P D G\\nD ~> G !X P\\n")
        >>> str(t.edges[0][1])
        'G !X P'
    """
    if alphabet is not None and not isinstance(alphabet, EventAlphabet):
        alphabet = EventAlphabet(alphabet)

    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0]
        if not line.strip():
            continue
        head, sep, rest = line.partition(':')
        if sep and head.strip() == 'alphabet':
            if edges:
                raise ParseError("alphabet 必須寫在所有邊之前", lineno, 1)
            try:
                declared = EventAlphabet(rest.split())
            except InvalidInputError as exc:
                raise ParseError(str(exc), lineno) from None
            if alphabet is not None and declared != alphabet:
                raise ParseError(f"宣告的字母表與指定字母表不同: {declared} vs {alphabet}", lineno, 1)
            alphabet = declared
            continue
        if alphabet is None:
            raise ParseError("缺少 alphabet 宣告", lineno, 1)

        parser = FormulaParser(tokenize(line, lineno), alphabet)
        lhs = parser.parse()
        if parser.current.text != '~>':
            raise parser.error("預期因果邊 '~>'")
        parser.advance()
        rhs = parser.parse()
        parser.expect_end()
        edges.append((lhs, rhs))

    if alphabet is None:
        raise ParseError("缺少 alphabet 宣告")
    if not edges:
        raise ParseError("TL-CD 沒有任何邊")
    return Tlcd(alphabet, tuple(edges))


def load_tlcd(path, alphabet=None):
    return parse_tlcd(Path(path).read_text(encoding='utf-8'), alphabet)


# ==================== 公式 ====================
def tlcd_to_formula(tlcd):
    """φ^C = 依邊的順序合取 G(lhs → rhs)"""
    return conjoin(Globally(Implies(lhs, rhs)) for lhs, rhs in tlcd.edges)


def one_event_constraint(alphabet):
    """
    功能:
        每個位置恰好發生一個事件的公式 ψ_Σ

    範例:
        {P} → G P
        {P, D} → G ((P & !D) | (D & !P))
    """
    events = list(alphabet)
    if not events:
        raise InvalidInputError("字母表不可為空")
    options = []
    for e in events:
        options.append(conjoin([Atom(e)] + [Not(Atom(o)) for o in events if o != e]))
    return Globally(disjoin(options))


# ==================== 編譯 ====================
def _progression_automaton(formula, alphabet):
    start = nnf(formula)
    index = {start: 0}
    order = [start]
    table = {}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for e in alphabet:
            nxt = progress(node, e)
            if nxt not in index:
                if len(order) >= MAX_FORMULA_STATES:
                    raise InvalidInputError(
                        f"公式推進狀態超過上限 ({MAX_FORMULA_STATES})，請簡化公式")
                index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            table[(index[node], e)] = index[nxt]
    accepting = frozenset(i for i, node in enumerate(order) if final(node))
    return order, table, accepting


def _alive_states(n, table, accepting):
    predecessors = {q: set() for q in range(n)}
    for (q, _), target in table.items():
        predecessors[target].add(q)
    alive = set(accepting)
    queue = deque(accepting)
    while queue:
        target = queue.popleft()
        for q in predecessors[target]:
            if q not in alive:
                alive.add(q)
                queue.append(q)
    return alive


def _hopcroft(states, alphabet, table, accepting):
    # 反向轉移: (事件, 目標) → 前驅集合
    inverse = {}
    for (q, e), target in table.items():
        if q in states:
            inverse.setdefault((e, target), set()).add(q)

    final_block = frozenset(q for q in states if q in accepting)
    other_block = frozenset(q for q in states if q not in accepting)
    partition = {block for block in (final_block, other_block) if block}
    if len(partition) <= 1:
        return partition

    block_of = {q: block for block in partition for q in block}
    # 工作清單只放較小的一半
    worklist = {final_block if len(final_block) <= len(other_block) else other_block}
    while worklist:
        splitter = worklist.pop()
        for e in alphabet:
            affected = {}
            for target in splitter:
                for q in inverse.get((e, target), ()):
                    affected.setdefault(block_of[q], set()).add(q)
            for block, overlap in affected.items():
                if len(overlap) == len(block):
                    continue
                inside = frozenset(overlap)
                outside = block - inside
                partition.discard(block)
                partition.update((inside, outside))
                for q in inside:
                    block_of[q] = inside
                for q in outside:
                    block_of[q] = outside
                if block in worklist:
                    worklist.discard(block)
                    worklist.update((inside, outside))
                else:
                    worklist.add(inside if len(inside) <= len(outside) else outside)
    return partition


def _minimal_tables(initial, alphabet, table, accepting):
    # 只保留可達狀態
    reachable = {initial}
    queue = deque([initial])
    while queue:
        q = queue.popleft()
        for e in alphabet:
            target = table[(q, e)]
            if target not in reachable:
                reachable.add(target)
                queue.append(target)

    partition = _hopcroft(reachable, alphabet, table, accepting)
    block_of = {q: block for block in partition for q in block}

    # 依 BFS 順序重新編號 q0, q1, ...
    number = {block_of[initial]: 0}
    order = [block_of[initial]]
    queue = deque(order)
    new_table = {}
    while queue:
        block = queue.popleft()
        representative = min(block)
        for e in alphabet:
            target = block_of[table[(representative, e)]]
            if target not in number:
                number[target] = len(order)
                order.append(target)
                queue.append(target)
            new_table[(number[block], e)] = number[target]
    new_accepting = frozenset(number[b] for b in order if min(b) in accepting)
    labels = tuple(f"q{k}" for k in range(len(order)))
    return labels, new_table, new_accepting


def minimize_dfa(dfa):
    """
    功能:
        Hopcroft 最小化 (先移除不可達狀態)

    返回:
        minimized: Dfa，狀態依 BFS 順序命名為 q0, q1, ...
    """
    labels, table, accepting = _minimal_tables(dfa.initial, list(dfa.alphabet), dict(dfa.transitions),
                                               dfa.accepting)
    return Dfa(labels, 0, dfa.alphabet, table, accepting)


def find_rejecting_sink(dfa):
    """
    功能:
        找出非接受且所有事件都自迴圈的狀態

    返回:
        state id 或 None；最小化 DFA 中出現兩個以上時丟出 InvariantViolation
    """
    sinks = [q for q in dfa.states
             if q not in dfa.accepting and all(dfa.step(q, e) == q for e in dfa.alphabet)]
    if len(sinks) > 1:
        raise InvariantViolation(f"最小化 DFA 出現多個拒絕匯點: {[dfa.name(q) for q in sinks]}")
    return sinks[0] if sinks else None


def compile(formula, alphabet):
    """
    功能:
        將 LTLf 公式編譯成最小化的因果 DFA

    參數:
        formula: Formula (通常為 tlcd_to_formula 的結果)
        alphabet: DFA 輸入字母表；每個輸入位置恰好一個事件，ψ_Σ 自動成立

    返回:
        causal: CausalDfa

    流程:
        1. 轉為否定正規形後以公式推進展開狀態 (狀態數上限 MAX_FORMULA_STATES)
        2. 無法到達接受狀態的狀態併入匯點，若其中有非 false 的殘餘公式則記錄旗標
        3. Hopcroft 最小化並找出拒絕匯點
    """
    if not isinstance(alphabet, EventAlphabet):
        alphabet = EventAlphabet(alphabet)
    foreign = sorted(atoms(formula) - set(alphabet))
    if foreign:
        raise InvalidInputError(f"公式使用了字母表以外的事件: {' '.join(foreign)}")

    events = list(alphabet)
    order, table, accepting = _progression_automaton(formula, events)
    alive = _alive_states(len(order), table, accepting)
    collapsed = any(q not in alive and node != N_FALSE for q, node in enumerate(order))

    labels, new_table, new_accepting = _minimal_tables(0, events, table, accepting)
    dfa = Dfa(labels, 0, alphabet, new_table, new_accepting)
    sink = find_rejecting_sink(dfa)
    if collapsed:
        logger.warning("公式 %s 產生無法接受的殘餘狀態，已併入拒絕匯點", formula)
    logger.debug("編譯 %s: %d 個推進狀態 → %d 個 DFA 狀態", formula, len(order), dfa.n_states)
    return CausalDfa(dfa.labels, dfa.initial, alphabet, dfa.transitions, dfa.accepting,
                     rejecting_sink=sink, collapsed_dead_states=collapsed)


def compile_tlcd(tlcd, alphabet=None):
    """TL-CD 直接編譯 (字母表預設為檔案宣告的字母表)"""
    return compile(tlcd_to_formula(tlcd), tlcd.alphabet if alphabet is None else alphabet)


# ==================== 輸出 ====================
def dfa_to_dot(dfa, name='causal'):
    """
    功能:
        Graphviz DOT 文字 (接受狀態雙圈、拒絕匯點虛線)，同一對狀態的事件合併成一條邊
    """
    sink = getattr(dfa, 'rejecting_sink', None)
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=none, label=""];']
    for q in dfa.states:
        shape = 'doublecircle' if q in dfa.accepting else 'circle'
        style = ', style=dashed' if q == sink else ''
        lines.append(f'  {dfa.name(q)} [shape={shape}{style}];')
    lines.append(f"  __start -> {dfa.name(dfa.initial)};")
    for q in dfa.states:
        grouped = {}
        for e in dfa.alphabet:
            grouped.setdefault(dfa.step(q, e), []).append(e)
        for target, events in grouped.items():
            lines.append(f'  {dfa.name(q)} -> {dfa.name(target)} [label="{", ".join(events)}"];')
    lines.append("}")
    return '\n'.join(lines) + '\n'
