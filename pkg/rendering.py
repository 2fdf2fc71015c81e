# 建立 rendering.py → 佈局繪圖模組
# 以 PIL 將格子世界畫成圖片：牆壁、特殊格、代理人起點

import numpy as np
from PIL import Image, ImageDraw

from errors import ValidationError

WALL_COLOR = (60, 60, 70)
FLOOR_COLOR = (245, 245, 240)
GRID_COLOR = (200, 200, 200)
TEXT_COLOR = (20, 20, 20)
AGENT_COLORS = ((74, 107, 138), (125, 90, 107), (95, 140, 90), (180, 130, 60))

# 特殊格底色：閘門、坡道、事故格各自一色，其餘依事件名稱雜湊取色
BARRIER_COLOR = (150, 150, 160)
RAMP_COLOR = (210, 220, 235)
HAZARD_COLORS = {'fire': (235, 140, 110), 'radiation': (190, 225, 120)}


def event_color(event):
    """
    功能:
        事件名稱 → 固定的淺色 (同一事件在不同佈局中顏色相同)
    """
    seed = sum(ord(ch) * (k + 1) for k, ch in enumerate(event))
    rng = np.random.default_rng(seed)
    return tuple(int(v) for v in rng.integers(150, 240, size=3))


def cell_color(tags):
    """特殊格的底色；多個標記時以第一個決定"""
    tag = tags[0]
    if tag.hazard:
        return HAZARD_COLORS[tag.hazard]
    if tag.events or tag.leave:
        return event_color((tag.events or tag.leave)[0])
    if tag.barrier:
        return BARRIER_COLOR
    return RAMP_COLOR


def _ramp_arrow(draw, box, direction):
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    h = (x1 - x0) / 4
    tips = {
        'down': [(cx - h, cy - h), (cx + h, cy - h), (cx, cy + h)],
        'up': [(cx - h, cy + h), (cx + h, cy + h), (cx, cy - h)],
        'left': [(cx + h, cy - h), (cx + h, cy + h), (cx - h, cy)],
        'right': [(cx - h, cy - h), (cx - h, cy + h), (cx + h, cy)],
    }
    draw.polygon(tips[direction], fill=GRID_COLOR)


def render_layout(grid, cell_size=32, positions=None):
    """
    功能:
        畫出格子世界

    參數:
        grid: GridSpec
        cell_size: 每格像素
        positions: 選用，代理人編號 → 格；預設為起點

    返回:
        img: PIL Image (RGB)，大小為 (width·cell_size, height·cell_size)

    說明:
        特殊格標示事件名稱 (多事件只顯示第一個)，坡道畫方向箭頭，
        代理人畫成圓圈並標上編號
    """
    if cell_size < 8:
        raise ValidationError(f"cell_size 太小 ({cell_size})")
    positions = dict(grid.starts) if positions is None else positions
    img = Image.new('RGB', (grid.width * cell_size, grid.height * cell_size), FLOOR_COLOR)
    draw = ImageDraw.Draw(img)

    for r in range(grid.height):
        for c in range(grid.width):
            box = (c * cell_size, r * cell_size, (c + 1) * cell_size - 1, (r + 1) * cell_size - 1)
            if (r, c) in grid.walls:
                draw.rectangle(box, fill=WALL_COLOR)
                continue
            tags = grid.special_cells.get((r, c))
            draw.rectangle(box, fill=cell_color(tags) if tags else FLOOR_COLOR, outline=GRID_COLOR)
            if not tags:
                continue
            tag = tags[0]
            if tag.ramp:
                _ramp_arrow(draw, box, tag.ramp)
            label = (tag.events or tag.leave or (tag.barrier and (f'|{tag.barrier}',)) or ('',))[0]
            if label:
                draw.text((box[0] + 2, box[1] + 2), label[:6], fill=TEXT_COLOR)

    for agent, (r, c) in positions.items():
        pad = cell_size // 5
        box = (c * cell_size + pad, r * cell_size + pad, (c + 1) * cell_size - pad, (r + 1) * cell_size - pad)
        draw.ellipse(box, fill=AGENT_COLORS[(agent - 1) % len(AGENT_COLORS)])
        draw.text((box[0] + pad // 2, box[1]), str(agent), fill=(255, 255, 255))
    return img
