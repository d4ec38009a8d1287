"""Plain-text scene files for the navigation world.

One directive per line; `#` starts a comment. Directives:

    arena <xmin> <ymin> <xmax> <ymax>     rectangular arena (pick one)
    arena_circle <cx> <cy> <radius>       circular arena    (pick one)
    rect <xmin> <ymin> <xmax> <ymax>      axis-aligned rectangular obstacle
    circle <cx> <cy> <radius>             circular obstacle
    spawn <x> <y> <heading_deg>           robot start pose (order matters)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import SceneError


@dataclass
class Scene:
    arena_rect: tuple | None = None
    arena_circle: tuple | None = None
    rects: list = field(default_factory=list)
    circles: list = field(default_factory=list)
    spawns: list = field(default_factory=list)

    def validate(self) -> None:
        if (self.arena_rect is None) == (self.arena_circle is None):
            raise SceneError("scene needs exactly one arena or arena_circle directive")
        if self.arena_rect is not None:
            xmin, ymin, xmax, ymax = self.arena_rect
            if xmin >= xmax or ymin >= ymax:
                raise SceneError("arena bounds are degenerate")
        elif self.arena_circle[2] <= 0:
            raise SceneError("arena_circle radius must be positive")
        for r in self.rects:
            if r[0] >= r[2] or r[1] >= r[3]:
                raise SceneError(f"degenerate rect {r}")
        for c in self.circles:
            if c[2] <= 0:
                raise SceneError(f"degenerate circle {c}")
        if not self.spawns:
            raise SceneError("scene has no spawn poses")

    @property
    def diagonal(self) -> float:
        if self.arena_rect is not None:
            xmin, ymin, xmax, ymax = self.arena_rect
            return float(np.hypot(xmax - xmin, ymax - ymin))
        return 2.0 * self.arena_circle[2]

    def bbox(self) -> tuple:
        if self.arena_rect is not None:
            return self.arena_rect
        cx, cy, r = self.arena_circle
        return (cx - r, cy - r, cx + r, cy + r)

    def inside_arena(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """True for points at least ``margin`` inside the arena boundary."""
        p = np.atleast_2d(points)
        if self.arena_rect is not None:
            xmin, ymin, xmax, ymax = self.arena_rect
            ok = ((p[:, 0] >= xmin + margin) & (p[:, 0] <= xmax - margin)
                  & (p[:, 1] >= ymin + margin) & (p[:, 1] <= ymax - margin))
        else:
            cx, cy, r = self.arena_circle
            ok = np.hypot(p[:, 0] - cx, p[:, 1] - cy) <= r - margin
        return ok if points.ndim > 1 else bool(ok[0])

    def clear_of_obstacles(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """True for points farther than ``margin`` from every obstacle."""
        p = np.atleast_2d(points)
        ok = np.ones(len(p), dtype=bool)
        for xmin, ymin, xmax, ymax in self.rects:
            cx = np.clip(p[:, 0], xmin, xmax)
            cy = np.clip(p[:, 1], ymin, ymax)
            ok &= np.hypot(p[:, 0] - cx, p[:, 1] - cy) > margin
        for ox, oy, orad in self.circles:
            ok &= np.hypot(p[:, 0] - ox, p[:, 1] - oy) > orad + margin
        return ok if points.ndim > 1 else bool(ok[0])


def parse_scene(text: str) -> Scene:
    scene = Scene()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise SceneError(f"line {lineno}: non-numeric argument in {raw!r}")
        if kind == "arena" and len(vals) == 4:
            scene.arena_rect = tuple(vals)
        elif kind == "arena_circle" and len(vals) == 3:
            scene.arena_circle = tuple(vals)
        elif kind == "rect" and len(vals) == 4:
            scene.rects.append(tuple(vals))
        elif kind == "circle" and len(vals) == 3:
            scene.circles.append(tuple(vals))
        elif kind == "spawn" and len(vals) == 3:
            scene.spawns.append((vals[0], vals[1], np.deg2rad(vals[2])))
        else:
            raise SceneError(f"line {lineno}: bad directive {raw!r}")
    scene.validate()
    return scene


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read())


def scene_to_text(scene: Scene) -> str:
    lines = []
    if scene.arena_rect is not None:
        lines.append("arena " + " ".join(repr(v) for v in scene.arena_rect))
    if scene.arena_circle is not None:
        lines.append("arena_circle " + " ".join(repr(v) for v in scene.arena_circle))
    for r in scene.rects:
        lines.append("rect " + " ".join(repr(v) for v in r))
    for c in scene.circles:
        lines.append("circle " + " ".join(repr(v) for v in c))
    for x, y, h in scene.spawns:
        lines.append(f"spawn {x!r} {y!r} {np.rad2deg(h)!r}")
    return "\n".join(lines) + "\n"


def builtin_scene_path(name: str):
    """Path to a scene shipped with the package (``train`` or ``test``)."""
    ref = resources.files("gdqnav.envs").joinpath(f"data/{name}.scene")
    if not ref.is_file():
        raise SceneError(f"no builtin scene named {name!r}")
    return str(ref)
