# 建立 tasks.py → 任務設定模組
# 讀取 task.toml：佈局、團隊獎勵機、局部字母表、TL-CD、同步機率

import logging
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from config import P_SYNC, TASK_FILES
from envs import TeamEnv
from errors import InvalidInputError, ParseError, ValidationError
from gridworld import load_layout
from rm_core import EventAlphabet, load_rm
from tlcd import compile_tlcd, load_tlcd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Task:
    """
    一個案例任務

    alphabets[i] 是代理人 i+1 的局部字母表；
    team_tlcd 用於寬鬆分解準則，agent_tlcds[i] 用於代理人 i+1 的增強獎勵機
    """

    name: str
    path: Path
    grid: object
    rm: object
    alphabets: tuple
    p_sync: float = P_SYNC
    team_tlcd: object = None
    agent_tlcds: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return len(self.alphabets)


def _resolve(base, value, key):
    if not isinstance(value, str) or not value:
        raise ParseError(f"task.toml 的 {key} 必須是檔案路徑字串")
    path = (base / value).resolve()
    if not path.exists():
        raise InvalidInputError(f"找不到 {key} 檔案: {path}")
    return path


def load_task(path):
    """
    功能:
        讀取任務設定

    參數:
        path: task.toml 路徑，或 config.TASK_FILES 中的任務名稱

    格式:
        name = "generator"
        layout = "layout.toml"
        rm = "team.rm"
        alphabets = [["P", "D"], ["D", "G"]]
        p_sync = 0.3
        [tlcd]
        team = "generator.tlcd"
        [tlcd.agents]
        "1" = "generator.tlcd"

    返回:
        task: Task
    """
    if str(path) in TASK_FILES:
        path = TASK_FILES[str(path)]
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise InvalidInputError(f"找不到任務檔案: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"task.toml 格式錯誤: {exc}") from None

    for key in ('layout', 'rm', 'alphabets'):
        if key not in data:
            raise ParseError(f"task.toml 缺少欄位: {key}")
    base = path.parent
    grid = load_layout(_resolve(base, data['layout'], 'layout'))
    rm = load_rm(_resolve(base, data['rm'], 'rm'))

    raw_alphabets = data['alphabets']
    if not isinstance(raw_alphabets, list) or not all(isinstance(a, list) for a in raw_alphabets):
        raise ParseError("alphabets 必須是事件名稱列表的列表")
    alphabets = tuple(EventAlphabet(a) for a in raw_alphabets)
    if len(alphabets) != grid.n_agents:
        raise ValidationError(f"alphabets 數量 ({len(alphabets)}) 與佈局代理人數量 ({grid.n_agents}) 不符")

    p_sync = data.get('p_sync', P_SYNC)
    if not isinstance(p_sync, (int, float)) or not 0 < p_sync <= 1:
        raise ValidationError(f"p_sync 必須在 (0, 1] 之間 ({p_sync})")

    tlcd_section = data.get('tlcd', {})
    team_tlcd = None
    if 'team' in tlcd_section:
        team_tlcd = load_tlcd(_resolve(base, tlcd_section['team'], 'tlcd.team'))
    agent_tlcds = {}
    for key, value in tlcd_section.get('agents', {}).items():
        if not key.isdigit() or not 1 <= int(key) <= len(alphabets):
            raise ParseError(f"tlcd.agents 的代理人編號不合法: {key!r}")
        agent_tlcds[int(key) - 1] = load_tlcd(_resolve(base, value, f'tlcd.agents.{key}'))

    name = data.get('name', base.name)
    logger.info("載入任務 %s: %d 位代理人，%d 個團隊狀態", name, len(alphabets), rm.n_states)
    return Task(name, path, grid, rm, alphabets, float(p_sync), team_tlcd, agent_tlcds)


def build_team_env(task):
    return TeamEnv(task.grid, task.rm, task.alphabets, task.name)


def team_causal_dfa(task):
    """團隊 TL-CD 編譯成的因果 DFA (字母表為團隊字母表)；沒有 TL-CD 時為 None"""
    if task.team_tlcd is None:
        return None
    return compile_tlcd(task.team_tlcd, task.rm.alphabet)


def agent_causal_dfas(task):
    """每位代理人在自己局部字母表上編譯的因果 DFA (沒有 TL-CD 的代理人為 None)"""
    return [compile_tlcd(task.agent_tlcds[i], alphabet) if i in task.agent_tlcds else None
            for i, alphabet in enumerate(task.alphabets)]
