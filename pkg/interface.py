# 建立 interface.py → 介面模組
# Streamlit 網頁介面：檢視任務、分解準則、因果 DFA、增強獎勵機與學習曲線

import io

import streamlit as st

from causal import build_tilde, format_tilde, value_iteration
from composition import check_relaxed, check_strict, format_counterexample
from config import PROJECT_NAME, TASK_FILES, VERSION, output_dir
from harness import plot_series, read_csv
from projection import describe_blocks
from rendering import render_layout
from rm_core import format_dfa, format_rm
from tasks import agent_causal_dfas, build_team_env, load_task, team_causal_dfa
from tlcd import dfa_to_dot

PAGES = ('任務', '分解準則', '因果 DFA', '增強獎勵機', '學習曲線')


# ==================== 載入 ====================
@st.cache_resource
def get_task(name):
    return load_task(name)


@st.cache_resource
def get_team_dfa(name):
    return team_causal_dfa(get_task(name))


@st.cache_resource
def get_agent_dfas(name):
    return agent_causal_dfas(get_task(name))


def show_result(title, result):
    """準則結果：成立用 success，不成立用 error 並附上反例"""
    if result:
        st.success(f"{title}: PASS")
    else:
        st.error(f"{title}: FAIL，反例 {format_counterexample(result)}")


def figure_bytes(fig, fmt):
    buffer = io.BytesIO()
    fig.savefig(buffer, format=fmt)
    return buffer.getvalue()


# ==================== 頁面設定 ====================
st.set_page_config(page_title=f"{PROJECT_NAME} {VERSION}", page_icon="🤖", layout="wide")

st.markdown("""
<style>
.page-title { font-size: 34px; font-weight: bold; color: #4A6B8A; margin-bottom: 10px; }
.block-line { font-family: monospace; font-size: 16px; color: #443C3C; }
</style>
""", unsafe_allow_html=True)

# 每個任務記住上次選取的曲線
if 'curves' not in st.session_state:
    st.session_state.curves = {}

with st.sidebar:
    st.markdown(f"**{PROJECT_NAME}** {VERSION}")
    task_name = st.selectbox("任務", sorted(TASK_FILES), key='task')
    page = st.radio("頁面", PAGES, key='page')

task = get_task(task_name)
env = build_team_env(task)

st.markdown(f'<div class="page-title">{page}：{task.name}</div>', unsafe_allow_html=True)


# ==================== 任務 ====================
if page == '任務':
    col_left, col_right = st.columns([2, 3])
    with col_left:
        st.image(render_layout(task.grid, cell_size=36), caption="佈局與代理人起點")
    with col_right:
        st.markdown(f"代理人數: **{task.n_agents}**，同步機率 p = **{task.p_sync}**")
        st.code(format_rm(task.rm), language=None)
    st.markdown("---")
    columns = st.columns(task.n_agents)
    for i, (column, projected) in enumerate(zip(columns, env.projections), 1):
        with column:
            st.markdown(f"**代理人 {i}**：{' '.join(projected.alphabet)}")
            for line in describe_blocks(projected, task.rm):
                st.markdown(f'<div class="block-line">{line}</div>', unsafe_allow_html=True)
            st.code(format_rm(projected.rm), language=None)


# ==================== 分解準則 ====================
elif page == '分解準則':
    literal = st.checkbox("字面合成 (共享事件不同步)", value=False)
    show_result("STRICT", check_strict(task.rm, task.alphabets, not literal))
    team_dfa = get_team_dfa(task_name)
    if team_dfa is None:
        st.info("此任務沒有團隊 TL-CD，只檢查嚴格準則")
    else:
        st.code(str(task.team_tlcd), language=None)
        show_result("RELAXED", check_relaxed(task.rm, task.alphabets, team_dfa, not literal))


# ==================== 因果 DFA ====================
elif page == '因果 DFA':
    team_dfa = get_team_dfa(task_name)
    if team_dfa is None:
        st.info("此任務沒有團隊 TL-CD")
    else:
        dot = dfa_to_dot(team_dfa)
        col_left, col_right = st.columns(2)
        with col_left:
            st.graphviz_chart(dot)
        with col_right:
            st.code(format_dfa(team_dfa), language=None)
            st.download_button("下載 DOT", dot, file_name=f"{task.name}.dot", mime="text/vnd.graphviz")


# ==================== 增強獎勵機 ====================
elif page == '增強獎勵機':
    agent = st.selectbox("代理人", range(1, task.n_agents + 1), key='agent')
    use_tlcd = st.checkbox("使用代理人 TL-CD", value=True)
    dfa = get_agent_dfas(task_name)[agent - 1] if use_tlcd else None
    tilde = build_tilde(env.projections[agent - 1], dfa)
    table = value_iteration(tilde)
    st.metric("初始狀態對 V*", f"{table[tilde.initial]:g}")
    short = [tilde.name(k) for k, pair in enumerate(tilde.pairs) if table[pair] <= 0]
    if short:
        st.markdown(f"短路狀態對 (V* = 0): {', '.join(short)}")
    st.code(format_tilde(tilde, table), language=None)


# ==================== 學習曲線 ====================
elif page == '學習曲線':
    out = output_dir()
    names = [p.name for p in sorted(out.glob(f"{task.name}_*.csv"))] if out.exists() else []
    if not names:
        st.info(f"{out} 中沒有 {task.name} 的 CSV，請先執行 train 指令")
    else:
        previous = [n for n in st.session_state.curves.get(task_name, names) if n in names]
        chosen = st.multiselect("曲線", names, default=previous)
        st.session_state.curves[task_name] = chosen
        if chosen:
            fig = plot_series([read_csv(out / name) for name in chosen], [name[:-4] for name in chosen])
            st.pyplot(fig)
            st.download_button("下載 SVG", figure_bytes(fig, 'svg'), file_name=f"{task.name}.svg",
                               mime="image/svg+xml")
