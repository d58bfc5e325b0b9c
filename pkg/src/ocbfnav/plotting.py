"""Standalone SVG trajectory plots, written by hand so the bytes are deterministic."""

from __future__ import annotations

from typing import List, Sequence

from .geometry import Box, Circle, Environment
from .simulate import EpisodeLog

MODE_COLORS = {"G": "#1f77b4", "E": "#ff7f0e", "F": "#d62728"}
MODE_NAMES = {"G": "goal-seeking", "E": "exploratory", "F": "fail-safe"}


def _f(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def mode_segments(log: EpisodeLog) -> List[tuple]:
    """Consecutive runs of equal mode as (mode, [(x, y), ...]); runs share their endpoints."""
    pts = [(s.pose[0], s.pose[1], s.mode) for s in log.steps]
    if log.final_pose:
        last_mode = pts[-1][2] if pts else "G"
        pts.append((log.final_pose[0], log.final_pose[1], last_mode))
    segs: List[tuple] = []
    for i, (x, y, mode) in enumerate(pts):
        if segs and segs[-1][0] == mode:
            segs[-1][1].append((x, y))
        else:
            start = [segs[-1][1][-1]] if segs else []
            segs.append((mode, start + [(x, y)]))
    return segs


def trajectory_svg(env: Environment, log: EpisodeLog, px_per_m: float = 120.0,
                   d_c: float = 0.2, goal_radius: float = 0.2) -> str:
    (x0, y0), (x1, y1) = env.bounds.lo, env.bounds.hi
    pad = 0.3
    W, H = x1 - x0 + 2 * pad, y1 - y0 + 2 * pad

    def X(x):
        return _f((x - x0 + pad) * px_per_m)

    def Y(y):  # svg y grows downwards
        return _f((y1 - y + pad) * px_per_m)

    def L(d):
        return _f(d * px_per_m)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W * px_per_m)}" '
        f'height="{_f(H * px_per_m)}" viewBox="0 0 {_f(W * px_per_m)} {_f(H * px_per_m)}">',
        f'<rect x="{X(x0)}" y="{Y(y1)}" width="{L(x1 - x0)}" height="{L(y1 - y0)}" '
        'fill="white" stroke="black" stroke-width="2"/>',
    ]
    for ob in env.obstacles:
        if isinstance(ob, Circle):
            out.append(f'<circle cx="{X(ob.center[0])}" cy="{Y(ob.center[1])}" r="{L(ob.radius)}" '
                       'fill="#888888"/>')
        elif isinstance(ob, Box):
            out.append(f'<rect x="{X(ob.lo[0])}" y="{Y(ob.hi[1])}" width="{L(ob.hi[0] - ob.lo[0])}" '
                       f'height="{L(ob.hi[1] - ob.lo[1])}" fill="#888888"/>')
    gx, gy = env.goal
    out.append(f'<circle cx="{X(gx)}" cy="{Y(gy)}" r="{L(goal_radius)}" fill="none" '
               'stroke="#2ca02c" stroke-width="2"/>')
    sx, sy = env.start.x, env.start.y
    out.append(f'<circle cx="{X(sx)}" cy="{Y(sy)}" r="{L(d_c)}" fill="none" stroke="black" '
               'stroke-dasharray="4 3"/>')
    for mode, pts in mode_segments(log):
        path = " ".join(f"{X(x)},{Y(y)}" for x, y in pts)
        out.append(f'<polyline class="mode-{mode}" points="{path}" fill="none" '
                   f'stroke="{MODE_COLORS[mode]}" stroke-width="3"/>')
    used = sorted({s.mode for s in log.steps}, key="GEF".index)
    for i, mode in enumerate(used):
        ty = 18 + 18 * i
        out.append(f'<rect x="8" y="{ty - 10}" width="14" height="10" fill="{MODE_COLORS[mode]}"/>')
        out.append(f'<text x="28" y="{ty}" font-family="sans-serif" font-size="12">'
                   f'{MODE_NAMES[mode]}</text>')
    out.append(f'<text x="8" y="{_f(H * px_per_m - 8)}" font-family="sans-serif" font-size="12">'
               f'{log.policy}: {log.outcome}'
               + ("" if log.outcome_time is None else f" at {log.outcome_time:.2f} s") + "</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def modes_in_svg(svg: str) -> Sequence[str]:
    """Modes whose path segments appear in an SVG produced by :func:`trajectory_svg`."""
    return [m for m in "GEF" if f'class="mode-{m}"' in svg]
