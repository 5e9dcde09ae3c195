"""Static SVG overhead plots of episodes (logged vs. simulated trajectories).

Hand-rolled SVG emission with fixed numeric formatting so reruns produce
byte-identical artifacts.
"""
from __future__ import annotations

from .engine import EpisodeResult
from .scenario import Scenario

_STYLE = {
    "lane": 'stroke="#b0b0b0" stroke-width="0.4" fill="none"',
    "ego_log": 'stroke="#7aa6d8" stroke-width="0.5" stroke-dasharray="2,1.5" fill="none"',
    "ego_sim": 'stroke="#1f5fbf" stroke-width="0.9" fill="none"',
    "ov_log": 'stroke="#d89a7a" stroke-width="0.5" stroke-dasharray="2,1.5" fill="none"',
    "ov_sim": 'stroke="#c0271b" stroke-width="0.9" fill="none"',
    "plan": 'stroke="#f0a020" stroke-width="0.35" fill="none" opacity="0.7"',
}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, points, size=720, pad=12.0):
        xs = [p[0] for p in points] or [0.0]
        ys = [p[1] for p in points] or [0.0]
        self.x0, self.y0 = min(xs) - pad, min(ys) - pad
        span = max(max(xs) - min(xs), max(ys) - min(ys), 1.0) + 2 * pad
        self.scale = size / span
        self.width = (max(xs) - min(xs) + 2 * pad) * self.scale
        self.height = (max(ys) - min(ys) + 2 * pad) * self.scale

    def to_px(self, x, y):
        return (x - self.x0) * self.scale, self.height - (y - self.y0) * self.scale


def _polyline(canvas: _Canvas, points, style: str) -> str:
    coords = " ".join(
        f"{_fmt(px)},{_fmt(py)}" for px, py in (canvas.to_px(x, y) for x, y in points)
    )
    return f'<polyline points="{coords}" {style}/>'


def episode_svg(scenario: Scenario, result: EpisodeResult) -> str:
    """Overhead plot: lanes, logged vs simulated ego/opponent, chosen plans."""
    geometry = [pt for lane in scenario.map.lane_centerlines for pt in lane]
    for tr in scenario.tracks:
        geometry.extend((p.x, p.y) for p in tr.states)
    canvas = _Canvas(geometry)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(canvas.width)}" '
        f'height="{_fmt(canvas.height)}" viewBox="0 0 {_fmt(canvas.width)} {_fmt(canvas.height)}">',
        f"<!-- scenario {scenario.scenario_id} mode {result.mode} -->",
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for lane in scenario.map.lane_centerlines:
        parts.append(_polyline(canvas, lane, _STYLE["lane"]))
    ego_log = [(p.x, p.y) for p in scenario.ego_track.states]
    parts.append(_polyline(canvas, ego_log, _STYLE["ego_log"]))
    if result.opponent_id is not None:
        ov_log = [(p.x, p.y) for p in scenario.track(result.opponent_id).states]
        parts.append(_polyline(canvas, ov_log, _STYLE["ov_log"]))
    for _, plan in result.plans:
        parts.append(
            _polyline(canvas, [(p.x, p.y) for p in plan.poses], _STYLE["plan"])
        )
    if len(result.ego_track) >= 2:
        parts.append(
            _polyline(canvas, [(p.x, p.y) for p in result.ego_track], _STYLE["ego_sim"])
        )
    if len(result.ov_track) >= 2:
        parts.append(
            _polyline(canvas, [(p.x, p.y) for p in result.ov_track], _STYLE["ov_sim"])
        )
    if result.collision.occurred and result.ego_track:
        px, py = canvas.to_px(result.ego_track[-1].x, result.ego_track[-1].y)
        parts.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="4" fill="none" '
            'stroke="#c0271b" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
