# 建立 main.py → 命令列介面
# check / project / compile-tlcd / inspect-tilde / train / eval / plot / demo

import argparse
import logging
import sys
from pathlib import Path

from causal import build_tilde, format_tilde, value_iteration
from composition import check_relaxed, check_strict, format_counterexample
from config import (CLI_NAME, DECENTRALIZED_STEPS, DEFAULT_RUNS, EVAL_EPISODES, MODES, NUM_STEPS, PROJECT_NAME,
                    VERSION, output_dir)
from errors import CriterionRejected
from harness import (ExperimentConfig, emit_csv, emit_plot, frechet_bounds, load_policies, run_experiment)
from projection import describe_blocks, project
from rm_core import EventAlphabet, format_dfa, format_rm, load_rm
from tasks import agent_causal_dfas, build_team_env, load_task, team_causal_dfa
from tlcd import compile_tlcd, dfa_to_dot, load_tlcd
from training import TrainConfig, causal_dqprm_train, evaluate_policies

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2


def print_section(title):
    print()
    print("=" * 40)
    print(title)
    print("=" * 40)
    print()


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    print(f"已寫入 {path}")


def _parse_alphabet(text):
    return EventAlphabet(e for e in text.replace(',', ' ').split() if e)


class UsageError(ValueError):
    """命令列參數組合不合法"""


def _agent_index(task, agent):
    if not 1 <= agent <= task.n_agents:
        raise UsageError(f"代理人編號必須在 1..{task.n_agents} 之間 ({agent})")
    return agent - 1


# ==================== check ====================
def _print_verdict(name, result, other, synchronize):
    print(f"{name}: {'PASS' if result else 'FAIL'}")
    if not result:
        print(f"  反例: {format_counterexample(result)}")
    if bool(other) != bool(result):
        reading = '字面合成 (--literal)' if synchronize else '同步合成'
        print(f"  註: 改用{reading}時 {name} 為 {'PASS' if other else 'FAIL'}")


def cmd_check(args):
    """
    功能:
        嚴格準則一定檢查；給定 --tlcd 時另外檢查寬鬆準則

    返回:
        結束碼：適用的準則 (有 --tlcd 為寬鬆，否則嚴格) 成立時為 0

    說明:
        另一種共享事件讀法 (同步 / 字面) 的結論不同時多印一行註記
    """
    task = load_task(args.task)
    synchronize = not args.literal
    strict = check_strict(task.rm, task.alphabets, synchronize)
    _print_verdict('STRICT', strict, check_strict(task.rm, task.alphabets, not synchronize), synchronize)
    if args.tlcd is None:
        return EXIT_OK if strict else EXIT_REJECTED

    dfa = compile_tlcd(load_tlcd(args.tlcd), task.rm.alphabet)
    relaxed = check_relaxed(task.rm, task.alphabets, dfa, synchronize)
    _print_verdict('RELAXED', relaxed, check_relaxed(task.rm, task.alphabets, dfa, not synchronize), synchronize)
    return EXIT_OK if relaxed else EXIT_REJECTED


# ==================== project ====================
def cmd_project(args):
    if args.task:
        task = load_task(args.task)
        team = task.rm
        if args.alphabet:
            alphabets = [_parse_alphabet(args.alphabet)]
        elif args.agent:
            alphabets = [task.alphabets[_agent_index(task, args.agent)]]
        else:
            alphabets = list(task.alphabets)
    elif args.rm and args.alphabet:
        team = load_rm(args.rm)
        alphabets = [_parse_alphabet(args.alphabet)]
    else:
        raise UsageError("project 需要 --task，或同時給 --rm 與 --alphabet")

    chunks = []
    for alphabet in alphabets:
        projected = project(team, alphabet)
        comments = [f"投影到 {' '.join(alphabet)}"] + describe_blocks(projected, team)
        chunks.append(format_rm(projected.rm, comments))
    _write('\n'.join(chunks), args.out)
    return EXIT_OK


# ==================== compile-tlcd ====================
def cmd_compile_tlcd(args):
    alphabet = _parse_alphabet(args.alphabet) if args.alphabet else None
    tlcd = load_tlcd(args.input)
    dfa = compile_tlcd(tlcd, alphabet)
    comments = [f"{lhs} ~> {rhs}" for lhs, rhs in tlcd.edges]
    if dfa.rejecting_sink is not None:
        comments.append(f"拒絕匯點: {dfa.name(dfa.rejecting_sink)}")
    _write(format_dfa(dfa, comments), args.out)
    if args.dot:
        _write(dfa_to_dot(dfa), args.dot)
    return EXIT_OK


# ==================== inspect-tilde ====================
def cmd_inspect_tilde(args):
    task = load_task(args.task)
    env = build_team_env(task)
    agent = _agent_index(task, args.agent)
    dfa = None if args.no_tlcd else agent_causal_dfas(task)[agent]
    tilde = build_tilde(env.projections[agent], dfa)
    table = value_iteration(tilde)
    print(f"# 代理人 {args.agent}，局部字母表 {' '.join(task.alphabets[agent])}")
    sys.stdout.write(format_tilde(tilde, table))
    return EXIT_OK


# ==================== train / eval / plot ====================
def cmd_train(args):
    mode = args.mode
    out = output_dir(args.out)
    name = load_task(args.task).name
    stem = f"{name}_{mode.replace('+', '_')}"
    policy_dir = out / 'policies' / stem if args.save_policies else None
    cfg = ExperimentConfig(
        task=args.task, mode=mode, runs=args.runs,
        seeds=tuple(args.seeds) if args.seeds else None,
        total_steps=args.steps, num_steps=args.num_steps, p_sync=args.p_sync,
        eval_episodes=args.eval_episodes, workers=args.workers,
        policy_dir=str(policy_dir) if policy_dir else None)
    metrics = run_experiment(cfg)
    path = emit_csv(metrics, out / f"{stem}.csv")
    print(f"{len(metrics.runs)} 次訓練完成，最後評估點中位數: {metrics.prc_50[-1]:.1f} 步")
    print(f"CSV: {path}")
    if policy_dir:
        print(f"策略: {policy_dir}")
    return EXIT_OK


def cmd_eval(args):
    task = load_task(args.task)
    env = build_team_env(task)
    policies = load_policies(args.policies, task.n_agents)
    report = evaluate_policies(env, policies, args.episodes, args.seed, args.num_steps)
    bounds = frechet_bounds(report)
    print(f"團隊成功率: {report.team_rate:.3f} ({report.episodes} 回合)")
    for i, rate in enumerate(report.agent_rates, 1):
        print(f"代理人 {i} 成功率: {rate:.3f}")
    print(f"Fréchet 界線: [{bounds.lower:.3f}, {bounds.upper:.3f}] {'成立' if bounds.holds else '不成立'}")
    print(f"團隊接受與局部接受不一致的回合: {report.equivalence_violations}")
    return EXIT_OK if report.equivalence_violations == 0 else EXIT_REJECTED


def cmd_plot(args):
    labels = args.labels or [Path(p).stem for p in args.csv]
    path = emit_plot(args.csv, labels, args.out, args.num_steps)
    print(f"已寫入 {path}")
    return EXIT_OK


# ==================== demo ====================
def cmd_demo(args):
    """
    功能:
        以 Generator 任務展示完整流程

    流程:
        1. 團隊獎勵機與兩位代理人的投影
        2. 嚴格準則 (失敗並給出反例)
        3. TL-CD 編譯成因果 DFA，寬鬆準則成立
        4. 增強獎勵機的 V*，短路狀態
        5. 小規模 Causal DQPRM 訓練與學習曲線
    """
    print("=" * 40)
    print(f"       {PROJECT_NAME}")
    print(f"       Version {VERSION}")
    print("=" * 40)

    task = load_task('generator')
    env = build_team_env(task)

    print_section("步驟1: 團隊獎勵機")
    sys.stdout.write(format_rm(task.rm))

    print_section("步驟2: 投影到各代理人")
    for i, projected in enumerate(env.projections, 1):
        print(f"代理人 {i} ({' '.join(projected.alphabet)}):")
        for line in describe_blocks(projected, task.rm):
            print(f"  {line}")
        print()

    print_section("步驟3: 嚴格分解準則")
    strict = check_strict(task.rm, task.alphabets)
    print(f"STRICT: {'PASS' if strict else 'FAIL'}")
    if not strict:
        print(f"反例: {format_counterexample(strict)}")
        print("▸ 代理人 1 看不到 G，無法得知發電機已在沒有燃料時被啟動")

    print_section("步驟4: TL-CD 與因果 DFA")
    print(str(task.team_tlcd).rstrip())
    print()
    dfa = team_causal_dfa(task)
    sys.stdout.write(format_dfa(dfa))
    relaxed = check_relaxed(task.rm, task.alphabets, dfa)
    print()
    print(f"RELAXED: {'PASS' if relaxed else 'FAIL'}")

    print_section("步驟5: 增強獎勵機的最優值")
    dfas = agent_causal_dfas(task)
    for i, (projected, agent_dfa) in enumerate(zip(env.projections, dfas), 1):
        tilde = build_tilde(projected, agent_dfa)
        table = value_iteration(tilde)
        print(f"代理人 {i}:")
        for line in format_tilde(tilde, table).splitlines():
            if 'V*' in line:
                print(f"  {line.strip()}")
        print()

    print_section(f"步驟6: Causal DQPRM 訓練 ({args.steps} 步)")
    cfg = TrainConfig(max(1, args.steps // NUM_STEPS), NUM_STEPS, task.p_sync, seed=args.seed)
    result = causal_dqprm_train(env, cfg, dfa, dfas)
    for step, value in result.curve:
        print(f"  訓練步數 {step:6d}: 完成任務步數中位數 {value:6.1f}")
    print(f"▸ 短路重置次數: {', '.join(str(r) for r in result.resets)}")
    return EXIT_OK


# ==================== 參數 ====================
def build_parser():
    parser = argparse.ArgumentParser(prog=CLI_NAME, description=f"{PROJECT_NAME} {VERSION}")
    parser.add_argument('-v', '--verbose', action='count', default=0, help="-v 顯示 INFO，-vv 顯示 DEBUG")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('check', help="檢查嚴格 / 寬鬆分解準則")
    p.add_argument('--task', required=True, help="任務名稱或 task.toml 路徑")
    p.add_argument('--tlcd', help="團隊 TL-CD 檔案 (給定時檢查寬鬆準則)")
    p.add_argument('--literal', action='store_true', help="共享事件不同步的字面合成")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser('project', help="輸出投影獎勵機")
    p.add_argument('--task')
    p.add_argument('--rm')
    p.add_argument('--alphabet', help="例如 P,D")
    p.add_argument('--agent', type=int)
    p.add_argument('--out')
    p.set_defaults(func=cmd_project)

    p = sub.add_parser('compile-tlcd', help="TL-CD 編譯成最小化因果 DFA")
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out')
    p.add_argument('--dot')
    p.add_argument('--alphabet')
    p.set_defaults(func=cmd_compile_tlcd)

    p = sub.add_parser('inspect-tilde', help="輸出增強獎勵機與 V*")
    p.add_argument('--task', required=True)
    p.add_argument('--agent', type=int, required=True)
    p.add_argument('--no-tlcd', action='store_true')
    p.set_defaults(func=cmd_inspect_tilde)

    p = sub.add_parser('train', help="多種子訓練並輸出 CSV")
    p.add_argument('--task', required=True)
    p.add_argument('--mode', choices=MODES, default=MODES[0])
    p.add_argument('--runs', type=int, default=DEFAULT_RUNS)
    p.add_argument('--seeds', type=int, nargs='+')
    p.add_argument('--steps', type=int, default=DECENTRALIZED_STEPS)
    p.add_argument('--num-steps', type=int, default=NUM_STEPS)
    p.add_argument('--p-sync', type=float)
    p.add_argument('--eval-episodes', type=int, default=0)
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--out')
    p.add_argument('--save-policies', action='store_true')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help="評估已儲存的分散式策略")
    p.add_argument('--task', required=True)
    p.add_argument('--policies', required=True, help="含 agent1.npz ... 的目錄")
    p.add_argument('--episodes', type=int, default=EVAL_EPISODES)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--num-steps', type=int, default=NUM_STEPS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('plot', help="由 CSV 畫學習曲線 (SVG)")
    p.add_argument('--csv', nargs='+', required=True)
    p.add_argument('--labels', nargs='+')
    p.add_argument('--out', required=True)
    p.add_argument('--num-steps', type=int, default=NUM_STEPS)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser('demo', help="Generator 任務的完整流程展示")
    p.add_argument('--steps', type=int, default=20_000)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None):
    """
    功能:
        命令列進入點

    返回:
        結束碼：0 成功、1 準則不成立 (或領域上的拒絕)、2 用法或輸入錯誤
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        return args.func(args)
    except CriterionRejected as exc:
        print(f"訓練被拒絕: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except ValueError as exc:
        print(f"錯誤: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
