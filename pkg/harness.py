# 建立 harness.py → 實驗流程模組
# 多種子訓練、百分位數彙整、CSV 輸出、學習曲線圖、Fréchet 界線

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from matplotlib.figure import Figure

from composition import check_strict
from config import (CSV_FLOAT_FORMAT, CSV_HEADER, DEFAULT_RUNS, DECENTRALIZED_STEPS, FRECHET_SIGMAS,
                    MODES, NUM_STEPS, PERCENTILES, PLOT_X_LABEL, PLOT_Y_LABEL)
from errors import CriterionRejected, InvalidInputError, ValidationError
from tasks import agent_causal_dfas, build_team_env, load_task, team_causal_dfa
from training import (QPolicy, TrainConfig, causal_dqprm_train, centralized_train, dqprm_train,
                      evaluate_policies)

logger = logging.getLogger(__name__)


# ==================== 設定 ====================
@dataclass(frozen=True)
class ExperimentConfig:
    """
    一組實驗：同一任務、同一模式、多個種子

    mode 為 MODES 之一；帶 tlcd 的模式要求任務有團隊 TL-CD
    """

    task: str
    mode: str
    runs: int = DEFAULT_RUNS
    seeds: tuple = None
    total_steps: int = DECENTRALIZED_STEPS
    num_steps: int = NUM_STEPS
    p_sync: float = None
    eval_episodes: int = 0
    workers: int = 1
    policy_dir: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"未知模式 {self.mode!r}，可用: {', '.join(MODES)}")
        if self.runs <= 0:
            raise ValidationError(f"runs 必須為正 ({self.runs})")
        if self.total_steps < 0 or self.num_steps <= 0:
            raise ValidationError("步數預算必須為正")
        if self.total_steps % self.num_steps:
            raise ValidationError(f"總步數 ({self.total_steps}) 必須是每回合步數 ({self.num_steps}) 的倍數")
        if self.seeds is not None and len(self.seeds) != self.runs:
            raise ValidationError(f"seeds 數量 ({len(self.seeds)}) 與 runs ({self.runs}) 不符")

    @property
    def seed_list(self):
        return tuple(self.seeds) if self.seeds is not None else tuple(range(self.runs))

    def train_config(self, seed, task):
        p_sync = self.p_sync if self.p_sync is not None else task.p_sync
        return TrainConfig(self.total_steps // self.num_steps, self.num_steps, p_sync, seed=seed)


@dataclass
class RunMetrics:
    """單次訓練的學習曲線與 (可選的) 成功率估計"""

    seed: int
    steps: tuple
    values: tuple
    algorithm: str = ''
    team_rate: float = None
    agent_rates: tuple = ()
    resets: tuple = ()
    visits: list = field(default_factory=list)


@dataclass(frozen=True)
class AggregatedMetrics:
    steps: tuple
    prc_25: tuple
    prc_50: tuple
    prc_75: tuple
    runs: tuple

    def rows(self):
        return list(zip(self.steps, self.prc_25, self.prc_50, self.prc_75))


# ==================== 單次訓練 ====================
def train_mode(task, env, mode, train_cfg):
    """
    功能:
        依模式選擇訓練演算法

    說明:
        decentralized+no-tlcd 在嚴格準則成立時用 DQPRM，
        否則用不帶代理人 TL-CD 的 Causal DQPRM (以團隊 TL-CD 通過寬鬆準則)
    """
    needs_tlcd = mode.endswith('+tlcd') or (mode == 'decentralized+no-tlcd'
                                             and not check_strict(env.rm, [p.alphabet for p in env.projections]))
    team_dfa = team_causal_dfa(task)
    if needs_tlcd and team_dfa is None:
        raise InvalidInputError(f"模式 {mode} 需要任務 {task.name} 提供團隊 TL-CD")

    if mode == 'decentralized+tlcd':
        return causal_dqprm_train(env, train_cfg, team_dfa, agent_causal_dfas(task))
    if mode == 'decentralized+no-tlcd':
        if needs_tlcd:
            return causal_dqprm_train(env, train_cfg, team_dfa, None)
        return dqprm_train(env, train_cfg)
    if mode == 'centralized+tlcd':
        return centralized_train(env, train_cfg, team_dfa)
    return centralized_train(env, train_cfg)


def _run_seed(cfg, seed):
    task = load_task(cfg.task)
    env = build_team_env(task)
    result = train_mode(task, env, cfg.mode, cfg.train_config(seed, task))
    metrics = RunMetrics(seed, tuple(s for s, _ in result.curve), tuple(v for _, v in result.curve),
                         result.algorithm, resets=tuple(result.resets), visits=result.visits)
    if cfg.policy_dir:
        save_policies(result.policies, Path(cfg.policy_dir) / f"seed{seed}")
    if cfg.eval_episodes and isinstance(result.policies, list):
        report = evaluate_policies(env, result.policies, cfg.eval_episodes, seed, cfg.num_steps)
        metrics.team_rate, metrics.agent_rates = report.team_rate, report.agent_rates
    return metrics


def save_policies(policies, directory):
    """分散式策略存成 agent1.npz, agent2.npz ...；集中式存成 centralized.npz"""
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(policies, list):
        for i, policy in enumerate(policies, 1):
            policy.save(directory / f"agent{i}.npz")
    else:
        policies.save(directory / "centralized.npz")
    return directory


def load_policies(directory, n_agents):
    directory = Path(directory)
    return [QPolicy.load(directory / f"agent{i}.npz") for i in range(1, n_agents + 1)]


def _safe_run(cfg, seed):
    # 子程序中的例外以值回傳，由主程序決定丟棄或中止
    try:
        return _run_seed(cfg, seed)
    except CriterionRejected:
        raise
    except Exception as exc:
        return exc


# ==================== 彙整 ====================
def percentile_nearest_rank(values, q):
    """最近秩百分位數：排序後取第 ceil(q/100 · n) 個值"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("百分位數需要至少一個值")
    return float(np.percentile(values, q, method='inverted_cdf'))


def aggregate(runs):
    """
    功能:
        每個評估點跨次數取 25/50/75 百分位數

    返回:
        metrics: AggregatedMetrics
    """
    if not runs:
        raise ValidationError("沒有可彙整的訓練結果")
    steps = runs[0].steps
    for run in runs[1:]:
        if run.steps != steps:
            raise ValidationError(f"種子 {run.seed} 的評估點與其他訓練不一致")
    columns = {q: [] for q in PERCENTILES}
    for k in range(len(steps)):
        values = [run.values[k] for run in runs]
        for q in PERCENTILES:
            columns[q].append(percentile_nearest_rank(values, q))
    low, mid, high = (tuple(columns[q]) for q in PERCENTILES)
    return AggregatedMetrics(tuple(steps), low, mid, high, tuple(runs))


def run_experiment(cfg):
    """
    功能:
        以多個種子獨立訓練並彙整學習曲線

    參數:
        cfg: ExperimentConfig

    返回:
        metrics: AggregatedMetrics

    說明:
        準則不成立時直接丟出 CriterionRejected (帶反例)；其他失敗的訓練記錄警告後丟棄。
        worker 數量不影響結果
    """
    seeds = cfg.seed_list
    logger.info("實驗 %s / %s: %d 次訓練，每次 %d 步", cfg.task, cfg.mode, len(seeds), cfg.total_steps)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_safe_run, [cfg] * len(seeds), seeds))
    else:
        outcomes = [_safe_run(cfg, seed) for seed in seeds]

    runs = []
    for seed, outcome in zip(seeds, outcomes):
        if isinstance(outcome, Exception):
            logger.warning("種子 %d 的訓練失敗，已丟棄: %s", seed, outcome)
            continue
        runs.append(outcome)
    return aggregate(runs)


# ==================== CSV ====================
def emit_csv(metrics, path):
    """
    功能:
        輸出 steps,prc_25,prc_50,prc_75 (UTF-8、LF、小數三位)
    """
    rows = metrics.rows()
    if not rows:
        raise ValidationError("沒有評估點可輸出")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for step, low, mid, high in rows:
            writer.writerow([int(step)] + [CSV_FLOAT_FORMAT.format(v) for v in (low, mid, high)])
    logger.info("已寫入 %s (%d 個評估點)", path, len(rows))
    return path


def read_csv(path):
    """讀回 emit_csv 的輸出，返回 (steps, prc_25, prc_50, prc_75) 四個 numpy 陣列"""
    with Path(path).open(encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValidationError(f"{path} 的欄位必須是 {','.join(CSV_HEADER)}")
        rows = [row for row in reader if row]
    if not rows:
        return tuple(np.zeros(0) for _ in CSV_HEADER)
    try:
        data = np.array(rows, dtype=float)
    except ValueError:
        raise ValidationError(f"{path} 含有非數值資料") from None
    return data[:, 0].astype(int), data[:, 1], data[:, 2], data[:, 3]


# ==================== 圖 ====================
def plot_series(series, labels, num_steps=NUM_STEPS):
    """
    功能:
        中位數曲線加四分位距區帶

    參數:
        series: [(steps, prc_25, prc_50, prc_75)]
        labels: 每條曲線的圖例名稱

    返回:
        fig: matplotlib Figure
    """
    if not series:
        raise ValidationError("至少需要一條曲線")
    if len(series) != len(labels):
        raise ValidationError(f"曲線數量 ({len(series)}) 與標籤數量 ({len(labels)}) 不符")
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    for (steps, low, mid, high), label in zip(series, labels):
        if len(steps) == 0:
            raise ValidationError(f"曲線 {label!r} 沒有資料")
        if not len(steps) == len(low) == len(mid) == len(high):
            raise ValidationError(f"曲線 {label!r} 的欄位長度不一致")
        line, = ax.plot(steps, mid, label=label)
        ax.fill_between(steps, low, high, color=line.get_color(), alpha=0.25)
    ax.set_xlabel(PLOT_X_LABEL)
    ax.set_ylabel(PLOT_Y_LABEL)
    ax.set_ylim(0, num_steps)
    ax.legend()
    fig.tight_layout()
    return fig


def emit_plot(csv_paths, labels, out_path, num_steps=NUM_STEPS):
    """讀取多個 CSV 並輸出 SVG 向量圖"""
    if not csv_paths:
        raise ValidationError("至少需要一個 CSV 檔案")
    series = [read_csv(p) for p in csv_paths]
    fig = plot_series(series, labels, num_steps)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format='svg')
    return out_path


# ==================== Fréchet 界線 ====================
class FrechetBounds(NamedTuple):
    lower: float
    upper: float
    holds: bool


def frechet_bounds(report, sigmas=FRECHET_SIGMAS):
    """
    功能:
        團隊成功率的 Fréchet 界線 (含 sigmas 倍二項標準誤)

        max(0, ΣV̂_i − (N−1)) − kσ̂ ≤ V̂ ≤ min_i V̂_i + kσ̂
    """
    n = len(report.agent_rates)
    if n == 0:
        raise ValidationError("報告沒有代理人成功率")
    team = report.team_rate
    sigma = math.sqrt(team * (1 - team) / report.episodes)
    lower = max(0.0, sum(report.agent_rates) - (n - 1)) - sigmas * sigma
    upper = min(report.agent_rates) + sigmas * sigma
    return FrechetBounds(lower, upper, lower <= team <= upper)
