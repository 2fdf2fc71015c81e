# 建立 rm_core.py → 獎勵機核心模組
# 事件字母表、事件式獎勵機 (部分轉移)、全域 DFA、執行語意與文字格式

import itertools
import logging
import re
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from config import debug_checks_enabled
from errors import ConsistencyError, InvalidInputError, ParseError, ValidationError

logger = logging.getLogger(__name__)

EVENT_NAME = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')

# 同一步同時發生的事件集合 (每位代理人最多貢獻一個事件)
LabelSet = frozenset
EMPTY_LABEL = frozenset()


# ==================== 事件字母表 ====================
class EventAlphabet:
    """
    有序、不重複的事件集合

    事件以名稱表示 (例如 "P", "D", "G")；迭代順序即插入順序。
    兩個字母表相等 ⟺ 事件集合相同 (不看順序)。
    """

    __slots__ = ('_events', '_index')

    def __init__(self, events=()):
        if isinstance(events, str):
            events = events.replace(',', ' ').split()
        ordered = []
        index = {}
        for name in events:
            name = str(name)
            if not EVENT_NAME.match(name):
                raise InvalidInputError(f"事件名稱不合法: {name!r}")
            if name in index:
                raise InvalidInputError(f"字母表中事件重複: {name}")
            index[name] = len(ordered)
            ordered.append(name)
        self._events = tuple(ordered)
        self._index = index

    def __iter__(self):
        return iter(self._events)

    def __len__(self):
        return len(self._events)

    def __contains__(self, event):
        return event in self._index

    def __eq__(self, other):
        if not isinstance(other, EventAlphabet):
            return NotImplemented
        return set(self._events) == set(other._events)

    def __hash__(self):
        return hash(frozenset(self._events))

    def __repr__(self):
        return f"EventAlphabet({' '.join(self._events)})"

    @property
    def names(self):
        return self._events

    def index(self, event):
        return self._index[event]

    def issubset(self, other):
        return all(e in other for e in self._events)

    def union(self, other):
        return EventAlphabet(list(self._events) + [e for e in other if e not in self._index])

    def check(self, sequence, owner='字母表'):
        """所有事件都必須屬於字母表，否則丟出 InvalidInputError"""
        for event in sequence:
            if event not in self._index:
                raise InvalidInputError(f"事件 {event!r} 不在{owner} {{{' '.join(self._events)}}} 中")


def format_state(label):
    """將狀態名稱 (可能是巢狀 tuple) 轉成可讀字串"""
    if isinstance(label, tuple):
        return '(' + ','.join(format_state(part) for part in label) + ')'
    return str(label)


# ==================== 獎勵機 ====================
@dataclass(frozen=True, eq=False)
class RewardMachine:
    """
    事件式獎勵機 (任務完成型)

    狀態是 0..n-1 的整數，labels 保存可讀名稱。
    transitions 是部分函數 (u, e) → u'；從終止狀態出發的轉移在建構時移除，
    因此終止狀態對獎勵而言是吸收的。σ(u, u') 由終止集合計算，不另外儲存。
    """

    labels: tuple
    initial: int
    alphabet: EventAlphabet
    transitions: object
    terminals: frozenset

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise ValidationError("獎勵機至少需要一個狀態")
        if len(set(self.labels)) != n:
            raise ValidationError("狀態名稱重複")
        if not 0 <= self.initial < n:
            raise ValidationError(f"初始狀態 ({self.initial}) 超出範圍")
        terminals = frozenset(self.terminals)
        if any(not 0 <= u < n for u in terminals):
            raise ValidationError("終止狀態超出範圍")

        cleaned = {}
        for (u, e), v in dict(self.transitions).items():
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"轉移端點超出範圍: {u} -{e}-> {v}")
            if e not in self.alphabet:
                raise ValidationError(f"轉移事件 {e} 不在字母表中")
            if u in terminals:
                continue
            cleaned[(u, e)] = v

        object.__setattr__(self, 'terminals', terminals)
        object.__setattr__(self, 'transitions', MappingProxyType(cleaned))
        object.__setattr__(self, '_ids', MappingProxyType({label: i for i, label in enumerate(self.labels)}))

    @classmethod
    def from_names(cls, states, initial, alphabet, transitions, terminals=()):
        """
        功能:
            以狀態名稱建立獎勵機

        參數:
            states: 狀態名稱列表 (順序決定整數 id)
            initial: 初始狀態名稱
            alphabet: EventAlphabet 或事件名稱
            transitions: (來源, 事件, 目標) 三元組
            terminals: 終止狀態名稱

        返回:
            rm: RewardMachine
        """
        if not isinstance(alphabet, EventAlphabet):
            alphabet = EventAlphabet(alphabet)
        ids = {name: i for i, name in enumerate(states)}

        def lookup(name):
            if name not in ids:
                raise InvalidInputError(f"未知狀態: {name}")
            return ids[name]

        table = {}
        for src, event, dst in transitions:
            key = (lookup(src), event)
            if key in table and table[key] != lookup(dst):
                raise ValidationError(f"狀態 {src} 在事件 {event} 上有多個目標")
            table[key] = lookup(dst)
        return cls(tuple(states), lookup(initial), alphabet, table, frozenset(lookup(t) for t in terminals))

    @property
    def states(self):
        return range(len(self.labels))

    @property
    def n_states(self):
        return len(self.labels)

    def successor(self, u, event):
        return self.transitions.get((u, event))

    def enabled(self, u):
        return tuple(e for e in self.alphabet if (u, e) in self.transitions)

    def is_terminal(self, u):
        return u in self.terminals

    def reward(self, u, v):
        """σ(u, u') = 1 ⟺ 從終止集合外進入終止集合"""
        return 1 if (v in self.terminals and u not in self.terminals) else 0

    def state_id(self, label):
        if label not in self._ids:
            raise InvalidInputError(f"未知狀態: {label}")
        return self._ids[label]

    def name(self, u):
        return format_state(self.labels[u])

    def check_state(self, u):
        if not (isinstance(u, int) and 0 <= u < len(self.labels)):
            raise InvalidInputError(f"未知狀態 id: {u!r}")

    def __repr__(self):
        return (f"RewardMachine(states={len(self.labels)}, alphabet={' '.join(self.alphabet)}, "
                f"terminals={sorted(self.name(u) for u in self.terminals)})")


def rm_step(rm, u, event):
    """
    功能:
        獎勵機讀取單一事件

    參數:
        rm: RewardMachine
        u: 目前狀態 id
        event: 事件名稱

    返回:
        (u', reward): 無對應轉移時停在原狀態並輸出 0
    """
    rm.check_state(u)
    if event not in rm.alphabet:
        raise InvalidInputError(f"事件 {event!r} 不在獎勵機字母表中")
    v = rm.successor(u, event)
    if v is None:
        return u, 0
    return v, rm.reward(u, v)


def rm_final_state(rm, sequence, start=None):
    """從 start (預設初始狀態) 讀完整個序列後的狀態"""
    rm.alphabet.check(sequence, '獎勵機字母表')
    u = rm.initial if start is None else start
    for event in sequence:
        v = rm.successor(u, event)
        if v is not None:
            u = v
    return u


def rm_run(rm, sequence):
    """
    功能:
        計算事件序列的任務完成獎勵

    返回:
        1 若執行結束於終止狀態，否則 0
    """
    return 1 if rm_final_state(rm, sequence) in rm.terminals else 0


def rm_read_labelset(rm, u, labels, check_permutations=None):
    """
    功能:
        讀取同一步發生的事件集合

    參數:
        rm: RewardMachine
        u: 目前狀態
        labels: LabelSet
        check_permutations: 是否檢查所有排列結果一致 (預設看除錯開關)

    返回:
        (u', reward)
    """
    rm.check_state(u)
    rm.alphabet.check(labels, '獎勵機字母表')
    ordered = [e for e in rm.alphabet if e in labels]

    state, total = u, 0
    for event in ordered:
        state, reward = rm_step(rm, state, event)
        total += reward

    if check_permutations is None:
        check_permutations = debug_checks_enabled()
    if check_permutations and len(ordered) > 1:
        for perm in itertools.permutations(ordered):
            other = u
            for event in perm:
                other, _ = rm_step(rm, other, event)
            if other != state:
                raise ConsistencyError(
                    f"標籤集合 {{{' '.join(ordered)}}} 的讀取順序影響結果 "
                    f"({rm.name(state)} ≠ {rm.name(other)})，標籤函數不可分解")
    return state, total


# ==================== DFA ====================
@dataclass(frozen=True, eq=False)
class Dfa:
    """全域轉移的確定性有限自動機"""

    labels: tuple
    initial: int
    alphabet: EventAlphabet
    transitions: object
    accepting: frozenset

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise ValidationError("DFA 至少需要一個狀態")
        if not 0 <= self.initial < n:
            raise ValidationError(f"初始狀態 ({self.initial}) 超出範圍")
        table = dict(self.transitions)
        for q in range(n):
            for e in self.alphabet:
                target = table.get((q, e))
                if target is None:
                    raise ValidationError(f"DFA 轉移不完整: 狀態 {self.labels[q]} 缺少事件 {e}")
                if not 0 <= target < n:
                    raise ValidationError("DFA 轉移目標超出範圍")
        object.__setattr__(self, 'transitions', MappingProxyType(table))
        object.__setattr__(self, 'accepting', frozenset(self.accepting))

    @classmethod
    def from_names(cls, states, initial, alphabet, transitions, accepting=(), **extra):
        if not isinstance(alphabet, EventAlphabet):
            alphabet = EventAlphabet(alphabet)
        ids = {name: i for i, name in enumerate(states)}
        try:
            table = {(ids[src], e): ids[dst] for src, e, dst in transitions}
            return cls(tuple(states), ids[initial], alphabet, table,
                       frozenset(ids[q] for q in accepting), **extra)
        except KeyError as exc:
            raise InvalidInputError(f"未知狀態: {exc.args[0]}") from None

    @property
    def states(self):
        return range(len(self.labels))

    @property
    def n_states(self):
        return len(self.labels)

    def step(self, q, event):
        return self.transitions[(q, event)]

    def is_accepting(self, q):
        return q in self.accepting

    def name(self, q):
        return format_state(self.labels[q])


def dfa_run(dfa, sequence):
    """
    功能:
        DFA 讀取事件序列

    返回:
        (最終狀態, 是否接受)
    """
    dfa.alphabet.check(sequence, 'DFA 字母表')
    q = dfa.initial
    for event in sequence:
        q = dfa.transitions[(q, event)]
    return q, q in dfa.accepting


def trivial_dfa(alphabet):
    """單一接受狀態、全部自迴圈的 DFA (不帶任何因果知識)"""
    if not isinstance(alphabet, EventAlphabet):
        alphabet = EventAlphabet(alphabet)
    return Dfa(('q0',), 0, alphabet, {(0, e): 0 for e in alphabet}, frozenset({0}))


# ==================== 可達性 ====================
def reachable_states(rm):
    """從初始狀態可達的狀態 (BFS 順序)"""
    seen = {rm.initial: None}
    queue = deque([rm.initial])
    while queue:
        u = queue.popleft()
        for e in rm.alphabet:
            v = rm.successor(u, e)
            if v is not None and v not in seen:
                seen[v] = None
                queue.append(v)
    return tuple(seen)


def restrict_to_reachable(rm):
    """
    功能:
        移除不可達狀態並重新編號

    返回:
        (新的 RewardMachine, 舊 id → 新 id 對照)
    """
    order = reachable_states(rm)
    if len(order) == rm.n_states:
        return rm, {u: u for u in rm.states}
    renumber = {old: new for new, old in enumerate(order)}
    table = {(renumber[u], e): renumber[v]
             for (u, e), v in rm.transitions.items() if u in renumber}
    restricted = RewardMachine(tuple(rm.labels[u] for u in order), 0, rm.alphabet, table,
                               frozenset(renumber[u] for u in rm.terminals if u in renumber))
    return restricted, renumber


def dead_states(rm):
    """無法再到達任何終止狀態的非終止狀態"""
    predecessors = {u: set() for u in rm.states}
    for (u, _), v in rm.transitions.items():
        predecessors[v].add(u)
    alive = set(rm.terminals)
    queue = deque(rm.terminals)
    while queue:
        v = queue.popleft()
        for u in predecessors[v]:
            if u not in alive:
                alive.add(u)
                queue.append(u)
    return frozenset(u for u in rm.states if u not in alive)


# ==================== 文字格式 ====================
_TRANSITION = re.compile(r'^([^\s-]+)\s*-([A-Za-z_][A-Za-z0-9_]*)->\s*([^\s-]+)$')


def _parse_machine(text, final_key):
    header = {}
    transitions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        match = _TRANSITION.match(line)
        if match:
            transitions.append((lineno, match.group(1), match.group(2), match.group(3)))
            continue
        key, sep, value = line.partition(':')
        key = key.strip()
        if not sep:
            raise ParseError(f"無法辨識的內容: {line!r}", lineno, 1)
        if key not in ('alphabet', 'states', 'initial', final_key):
            raise ParseError(f"未知欄位: {key}", lineno, 1)
        if key in header:
            raise ParseError(f"欄位重複: {key}", lineno, 1)
        header[key] = (lineno, value.split())

    for key in ('alphabet', 'states', 'initial'):
        if key not in header:
            raise ParseError(f"缺少欄位: {key}")

    lineno, names = header['alphabet']
    try:
        alphabet = EventAlphabet(names)
    except InvalidInputError as exc:
        raise ParseError(str(exc), lineno) from None

    lineno, states = header['states']
    if not states:
        raise ParseError("狀態列表為空", lineno)
    if len(set(states)) != len(states):
        raise ParseError("狀態名稱重複", lineno)
    known = set(states)

    lineno, initial = header['initial']
    if len(initial) != 1 or initial[0] not in known:
        raise ParseError(f"初始狀態不合法: {' '.join(initial)}", lineno)

    lineno, finals = header.get(final_key, (None, []))
    for name in finals:
        if name not in known:
            raise ParseError(f"未知狀態: {name}", lineno)

    seen = {}
    triples = []
    for lineno, src, event, dst in transitions:
        for name in (src, dst):
            if name not in known:
                raise ParseError(f"未知狀態: {name}", lineno)
        if event not in alphabet:
            raise ParseError(f"事件 {event} 不在字母表中", lineno)
        if (src, event) in seen and seen[(src, event)] != dst:
            raise ParseError(f"狀態 {src} 在事件 {event} 上有多個目標", lineno)
        seen[(src, event)] = dst
        triples.append((src, event, dst))
    return alphabet, states, initial[0], finals, triples


def parse_rm(text):
    """
    功能:
        解析獎勵機文字格式

    格式:
        alphabet: P D G
        states: u0 u1 ...
        initial: u0
        terminal: u5
        u0 -P-> u1

    返回:
        rm: RewardMachine
    """
    alphabet, states, initial, finals, triples = _parse_machine(text, 'terminal')
    return RewardMachine.from_names(states, initial, alphabet, triples, finals)


def parse_dfa(text):
    """解析 DFA 文字格式 (與獎勵機相同，終止欄位改為 accepting)"""
    alphabet, states, initial, finals, triples = _parse_machine(text, 'accepting')
    try:
        return Dfa.from_names(states, initial, alphabet, triples, finals)
    except ValidationError as exc:
        raise ParseError(str(exc)) from None


def _format_machine(machine, final_key, finals, comments):
    lines = [f"# {line}" for line in comments]
    lines.append(f"alphabet: {' '.join(machine.alphabet)}")
    lines.append(f"states: {' '.join(machine.name(u) for u in machine.states)}")
    lines.append(f"initial: {machine.name(machine.initial)}")
    lines.append(f"{final_key}: {' '.join(machine.name(u) for u in sorted(finals))}".rstrip())
    for u in machine.states:
        for e in machine.alphabet:
            v = machine.transitions.get((u, e))
            if v is not None:
                lines.append(f"{machine.name(u)} -{e}-> {machine.name(v)}")
    return '\n'.join(lines) + '\n'


def format_rm(rm, comments=()):
    return _format_machine(rm, 'terminal', rm.terminals, comments)


def format_dfa(dfa, comments=()):
    return _format_machine(dfa, 'accepting', dfa.accepting, comments)


def load_rm(path):
    return parse_rm(Path(path).read_text(encoding='utf-8'))


def load_dfa(path):
    return parse_dfa(Path(path).read_text(encoding='utf-8'))
