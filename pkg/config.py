# 建立 config.py → 配置模組
# 系統參數設定、訓練超參數、實驗預設值

import os
from pathlib import Path

# 專案資訊
PROJECT_NAME = 'Causal DQPRM'
VERSION = '1.0.0'
CLI_NAME = 'causal-dqprm'

# ==================== 路徑 ====================
BASE_DIR = Path(__file__).resolve().parent
TASKS_DIR = BASE_DIR / 'tasks'
DEFAULT_OUTPUT_DIR = BASE_DIR / 'results'
OUTPUT_ENV_VAR = 'CAUSAL_DQPRM_OUTPUT'   # 覆寫輸出目錄的環境變數
DEBUG_ENV_VAR = 'CAUSAL_DQPRM_DEBUG'     # 開啟標籤集合排列檢查

TASK_FILES = {
    'generator': TASKS_DIR / 'generator' / 'task.toml',
    'laboratory': TASKS_DIR / 'laboratory' / 'task.toml',
    'buttons': TASKS_DIR / 'buttons' / 'task.toml',
}

# ==================== Q-learning 超參數 ====================
ALPHA = 0.1      # 學習率
GAMMA = 0.9      # 折扣因子
EPSILON = 0.15   # 訓練時固定的 ε-greedy 探索率，評估時貪婪
NUM_STEPS = 1000  # 每回合步數上限 (圖表 y 軸上限)
P_SYNC = 0.3     # 訓練時模擬共享事件同步的機率

# ==================== 評估 ====================
EVAL_EVERY = 1000  # 每 1000 訓練步評估一次
EVAL_TRIALS = 10   # 每次評估的貪婪執行次數 (取中位數)
EVAL_EPISODES = 500  # eval 指令預設回合數
FRECHET_SIGMAS = 3   # Fréchet 界線的容許標準誤倍數

# ==================== 實驗規模 (桌機) ====================
DEFAULT_RUNS = 10
DECENTRALIZED_STEPS = 200_000
CENTRALIZED_STEPS = 1_000_000
MODES = ('decentralized+tlcd', 'decentralized+no-tlcd', 'centralized+tlcd', 'centralized+no-tlcd')

# ==================== 自動機 ====================
MAX_FORMULA_STATES = 10_000  # 公式推進狀態上限
SINK_PENALTY = -1.0          # 進入拒絕匯點的獎勵

# 動作: 名稱 → (列位移, 行位移)
ACTIONS = ('up', 'down', 'left', 'right', 'stay')
ACTION_DELTAS = {
    'up': (-1, 0),
    'down': (1, 0),
    'left': (0, -1),
    'right': (0, 1),
    'stay': (0, 0),
}

# ==================== 輸出格式 ====================
CSV_HEADER = ('steps', 'prc_25', 'prc_50', 'prc_75')
CSV_FLOAT_FORMAT = '{:.3f}'
PERCENTILES = (25, 50, 75)
PLOT_X_LABEL = 'Training Steps'
PLOT_Y_LABEL = 'Steps to Task Completion'


def debug_checks_enabled():
    """
    功能:
        是否在讀取標籤集合時檢查所有排列 (測試與除錯模式)
    """
    return os.environ.get(DEBUG_ENV_VAR, '').lower() in ('1', 'true', 'yes')


def output_dir(override=None):
    """
    功能:
        決定輸出目錄：命令列參數 > 環境變數 > 預設值

    參數:
        override: 命令列指定的目錄 (可為 None)

    返回:
        path: 輸出目錄 Path (尚未建立)
    """
    if override:
        return Path(override)
    env_value = os.environ.get(OUTPUT_ENV_VAR)
    if env_value:
        return Path(env_value)
    return DEFAULT_OUTPUT_DIR
