# 建立 gridworld.py → 格子世界佈局模組
# 解析佈局 TOML (ASCII 地圖 + 圖例)、特殊格標記、單向坡道與閘門的移動規則

from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from config import ACTION_DELTAS
from errors import ParseError, ValidationError
from rm_core import EVENT_NAME

WALL = '#'
FLOOR = '.'
DIRECTIONS = ('up', 'down', 'left', 'right')
OPPOSITE = {'up': 'down', 'down': 'up', 'left': 'right', 'right': 'left'}
HAZARDS = ('fire', 'radiation')
_LEGEND_KEYS = {'event', 'events', 'leave', 'barrier', 'ramp', 'hazard', 'agents'}


# ==================== 特殊格 ====================
@dataclass(frozen=True)
class CellTag:
    """
    特殊格的語意標記

    events: 停在 (或進入) 此格時可能發出的事件，依序取第一個已啟用者
    leave: 離開此格時可能發出的事件 (優先於進入事件)
    barrier: 閘門事件；在局部獎勵機讀過此事件之前無法進入
    ramp: 單向坡道方向；只能沿此方向進入，且不能反向離開
    hazard: 只有在本回合抽到相同事故時才發出事件
    agents: 標記適用的代理人 (None 表示全部)
    """

    char: str
    events: tuple = ()
    leave: tuple = ()
    barrier: str = None
    ramp: str = None
    hazard: str = None
    agents: frozenset = None

    def applies_to(self, agent):
        return self.agents is None or agent in self.agents


@dataclass(frozen=True)
class GridSpec:
    """
    格子世界

    cells 以 (列, 行) 表示；walls 為牆壁格；starts 為代理人編號 → 起點；
    special_cells 為格 → CellTag 列表 (不同代理人可有不同標記)
    """

    height: int
    width: int
    walls: frozenset
    starts: object
    special_cells: object
    rows: tuple = ()

    def in_bounds(self, cell):
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def passable(self, cell):
        return self.in_bounds(cell) and cell not in self.walls

    def tag(self, cell, agent):
        """格對某位代理人的標記 (沒有則為 None)"""
        for tag in self.special_cells.get(cell, ()):
            if tag.applies_to(agent):
                return tag
        return None

    @property
    def one_way(self):
        """單向邊: (來源格, 目標格)，只能從來源走向目標"""
        edges = set()
        for cell, tags in self.special_cells.items():
            for tag in tags:
                if tag.ramp:
                    dr, dc = ACTION_DELTAS[tag.ramp]
                    edges.add(((cell[0] - dr, cell[1] - dc), cell))
                    edges.add((cell, (cell[0] + dr, cell[1] + dc)))
        return frozenset(edges)

    def cells_with_event(self, event):
        return frozenset(cell for cell, tags in self.special_cells.items()
                         if any(event in tag.events for tag in tags))

    def free_cells(self):
        return [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]

    @property
    def n_agents(self):
        return len(self.starts)


# ==================== 解析 ====================
def _as_list(value, key, char):
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) and EVENT_NAME.match(v) for v in value):
        raise ParseError(f"圖例 {char!r} 的 {key} 必須是事件名稱或事件名稱列表")
    return tuple(value)


def _parse_tag(char, table):
    if not isinstance(table, dict):
        raise ParseError(f"圖例 {char!r} 必須是表格")
    unknown = set(table) - _LEGEND_KEYS
    if unknown:
        raise ParseError(f"圖例 {char!r} 含有未知欄位: {', '.join(sorted(unknown))}")
    if 'event' in table and 'events' in table:
        raise ParseError(f"圖例 {char!r} 不可同時使用 event 與 events")

    events = _as_list(table.get('event', table.get('events', [])), 'events', char)
    leave = _as_list(table.get('leave', []), 'leave', char)
    barrier = table.get('barrier')
    if barrier is not None and not (isinstance(barrier, str) and EVENT_NAME.match(barrier)):
        raise ParseError(f"圖例 {char!r} 的 barrier 必須是事件名稱")
    ramp = table.get('ramp')
    if ramp is not None and ramp not in DIRECTIONS:
        raise ParseError(f"圖例 {char!r} 的 ramp 必須是 {'/'.join(DIRECTIONS)} 之一")
    hazard = table.get('hazard')
    if hazard is not None and hazard not in HAZARDS:
        raise ParseError(f"圖例 {char!r} 的 hazard 必須是 {'/'.join(HAZARDS)} 之一")
    agents = table.get('agents')
    if agents is not None:
        if not isinstance(agents, list) or not all(isinstance(a, int) and a > 0 for a in agents):
            raise ParseError(f"圖例 {char!r} 的 agents 必須是正整數列表")
        agents = frozenset(agents)
    return CellTag(char, events, leave, barrier, ramp, hazard, agents)


def parse_layout(text):
    """
    功能:
        解析佈局 TOML

    格式:
        grid = \"\"\"
        #####
        #1.p#
        #####
        \"\"\"
        [legend]
        p = { event = "P" }

        '#' 牆壁、'.' 地板、數字為代理人起點；其餘字元必須出現在 legend

    返回:
        grid: GridSpec
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"佈局 TOML 格式錯誤: {exc}") from None
    if 'grid' not in data or not isinstance(data['grid'], str):
        raise ParseError("佈局缺少 grid 字串")

    rows = [row.rstrip() for row in data['grid'].splitlines() if row.strip()]
    if not rows:
        raise ParseError("grid 為空")
    width = len(rows[0])
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise ParseError(f"grid 每列長度必須相同 (第 {lineno} 列為 {len(row)}，預期 {width})", lineno)

    legend = {}
    for char, table in data.get('legend', {}).items():
        if len(char) != 1 or char in (WALL, FLOOR) or char.isdigit():
            raise ParseError(f"圖例字元不合法: {char!r}")
        legend[char] = _parse_tag(char, table)

    walls, starts, special = set(), {}, {}
    for r, row in enumerate(rows):
        for c, char in enumerate(row):
            if char == WALL:
                walls.add((r, c))
            elif char == FLOOR:
                continue
            elif char.isdigit():
                agent = int(char)
                if agent == 0 or agent in starts:
                    raise ParseError(f"代理人起點 {char} 不合法或重複", r + 1, c + 1)
                starts[agent] = (r, c)
            elif char in legend:
                special.setdefault((r, c), []).append(legend[char])
            else:
                raise ParseError(f"未定義的地圖字元 {char!r}", r + 1, c + 1)

    if not starts:
        raise ParseError("grid 沒有任何代理人起點")
    if sorted(starts) != list(range(1, len(starts) + 1)):
        raise ParseError(f"代理人編號必須從 1 連續編號: {sorted(starts)}")

    return GridSpec(len(rows), width, frozenset(walls), MappingProxyType(dict(sorted(starts.items()))),
                    MappingProxyType({cell: tuple(tags) for cell, tags in special.items()}), tuple(rows))


def load_layout(path):
    return parse_layout(Path(path).read_text(encoding='utf-8'))


# ==================== 移動規則 ====================
def try_move(grid, agent, cell, action, barrier_open):
    """
    功能:
        確定性移動；被擋住時停在原地

    參數:
        grid: GridSpec
        agent: 代理人編號
        cell: 目前格
        action: ACTIONS 之一
        barrier_open: 函數 event → bool，閘門事件是否已發生

    返回:
        next_cell
    """
    if action not in ACTION_DELTAS:
        raise ValidationError(f"未知動作: {action!r}")
    dr, dc = ACTION_DELTAS[action]
    if dr == 0 and dc == 0:
        return cell
    target = (cell[0] + dr, cell[1] + dc)
    if not grid.passable(target):
        return cell

    here = grid.tag(cell, agent)
    there = grid.tag(target, agent)
    if here is not None and here.ramp and OPPOSITE[here.ramp] == action:
        return cell
    if there is not None:
        if there.ramp and there.ramp != action:
            return cell
        if there.barrier and not barrier_open(there.barrier):
            return cell
    return target
