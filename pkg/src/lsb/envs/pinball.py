"""Pinball: a ball in the unit square steered by velocity impulses, bouncing
off polygonal obstacles, rewarded on reaching a circular target."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numba import njit

from ..mdp import EnvModel
from .constants import PINBALL as C

# +x, -x, +y, -y, none
ACTIONS = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.0, 0.0))


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class PinballLayout:
    obstacles: tuple      # tuple of ((x, y), ...) vertex tuples
    start: tuple
    target: tuple         # (x, y, radius)
    ball_radius: float = 0.02
    drag: float = C["drag"]
    restitution: float = C["restitution"]

    def segments(self) -> np.ndarray:
        segs = []
        for poly in self.obstacles:
            n = len(poly)
            for k in range(n):
                (ax, ay), (bx, by) = poly[k], poly[(k + 1) % n]
                segs.append((ax, ay, bx, by))
        return np.array(segs, dtype=float).reshape(-1, 4)

    def polygon_arrays(self):
        """Flat vertex array and per-polygon offsets for the point-in-polygon kernel."""
        verts = [v for poly in self.obstacles for v in poly]
        offsets = np.zeros(len(self.obstacles) + 1, dtype=np.int64)
        for k, poly in enumerate(self.obstacles):
            offsets[k + 1] = offsets[k] + len(poly)
        return np.array(verts, dtype=float).reshape(-1, 2), offsets


# ------------------------------------------------------------------ parsing

def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4)


def polygon_self_intersects(poly) -> bool:
    n = len(poly)
    edges = [(poly[k], poly[(k + 1) % n]) for k in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_cross(*edges[a], *edges[b]):
                return True
    return False


def point_in_polygon(x: float, y: float, poly) -> bool:
    inside = False
    n = len(poly)
    for k in range(n):
        (ax, ay), (bx, by) = poly[k], poly[(k + 1) % n]
        if (ay > y) != (by > y) and x < ax + (y - ay) * (bx - ax) / (by - ay):
            inside = not inside
    return inside


def _floats(parts, n, lineno, key):
    if n is not None and len(parts) != n:
        raise LayoutError(f"line {lineno}: '{key}' takes {n} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise LayoutError(f"line {lineno}: '{key}' has a non-numeric field") from None


def load_pinball_layout(text: str) -> PinballLayout:
    """Parse the line-oriented layout format (ball, start, target, drag, restitution, polygon)."""
    fields = {"ball_radius": 0.02, "drag": C["drag"], "restitution": C["restitution"]}
    start = target = None
    polys = []
    poly_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *parts = line.split()
        if key == "ball":
            (fields["ball_radius"],) = _floats(parts, 1, lineno, key)
        elif key == "start":
            start = tuple(_floats(parts, 2, lineno, key))
        elif key == "target":
            target = tuple(_floats(parts, 3, lineno, key))
        elif key == "drag":
            (fields["drag"],) = _floats(parts, 1, lineno, key)
        elif key == "restitution":
            (fields["restitution"],) = _floats(parts, 1, lineno, key)
        elif key == "polygon":
            vals = _floats(parts, None, lineno, key)
            if len(vals) % 2 or len(vals) < 6:
                raise LayoutError(f"line {lineno}: polygon needs at least 3 vertices given as x y pairs")
            poly = tuple(zip(vals[0::2], vals[1::2]))
            if polygon_self_intersects(poly):
                raise LayoutError(f"line {lineno}: polygon is self-intersecting")
            polys.append(poly)
            poly_lines.append(lineno)
        else:
            raise LayoutError(f"line {lineno}: unknown record '{key}'")
    if start is None or target is None:
        raise LayoutError("layout needs both a start and a target line")
    r = fields["ball_radius"]
    if not 0 < r < 0.5:
        raise LayoutError("ball radius must lie in (0, 0.5)")
    if not 0 < fields["drag"] <= 1:
        raise LayoutError("drag must lie in (0, 1]")
    if not 0 <= fields["restitution"] <= 1:
        raise LayoutError("restitution must lie in [0, 1]")
    for name, (x, y) in (("start", start), ("target", target[:2])):
        if not (0 < x < 1 and 0 < y < 1):
            raise LayoutError(f"{name} lies outside the unit box")
    if target[2] <= 0:
        raise LayoutError("target radius must be positive")
    for poly, lineno in zip(polys, poly_lines):
        if point_in_polygon(*start, poly):
            raise LayoutError(f"line {lineno}: start lies inside this obstacle")
        if point_in_polygon(*target[:2], poly):
            raise LayoutError(f"line {lineno}: target lies inside this obstacle")
    return PinballLayout(tuple(polys), start, target, r, fields["drag"], fields["restitution"])


def bundled_layout(name: str) -> PinballLayout:
    """``maze_world`` or ``pinball_world``."""
    text = resources.files("lsb.envs").joinpath("layouts", f"{name}.pin").read_text()
    return load_pinball_layout(text)


# ------------------------------------------------------------------ physics

@njit(cache=True)
def _deepest_contact(x, y, segs, r):
    """Closest obstacle point among segments penetrating the ball; k = -1 if none."""
    best_k = -1
    best_pen = 0.0
    cx_best = 0.0
    cy_best = 0.0
    for k in range(segs.shape[0]):
        ax, ay, bx, by = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        dx = bx - ax
        dy = by - ay
        t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        cx = ax + t * dx
        cy = ay + t * dy
        d = math.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        pen = r - d
        if pen > best_pen:
            best_pen = pen
            best_k = k
            cx_best = cx
            cy_best = cy
    return best_k, cx_best, cy_best


@njit(cache=True)
def _resolve_contacts(x, y, vx, vy, segs, r, e, passes):
    for _ in range(passes):
        k, cx, cy = _deepest_contact(x, y, segs, r)
        if k < 0:
            break
        ex = x - cx
        ey = y - cy
        d = math.sqrt(ex * ex + ey * ey)
        if d > 1e-12:
            nx = ex / d
            ny = ey / d
        else:
            # centre exactly on the segment: use the segment normal facing the velocity's origin
            sx = segs[k, 2] - segs[k, 0]
            sy = segs[k, 3] - segs[k, 1]
            L = math.sqrt(sx * sx + sy * sy)
            nx = -sy / L
            ny = sx / L
            if nx * vx + ny * vy > 0.0:
                nx = -nx
                ny = -ny
        vn = vx * nx + vy * ny
        if vn < 0.0:
            vx -= (1.0 + e) * vn * nx
            vy -= (1.0 + e) * vn * ny
        x = cx + nx * r
        y = cy + ny * r
    # the unit box acts as four walls
    if x < r:
        x = r
        if vx < 0.0:
            vx = -e * vx
    elif x > 1.0 - r:
        x = 1.0 - r
        if vx > 0.0:
            vx = -e * vx
    if y < r:
        y = r
        if vy < 0.0:
            vy = -e * vy
    elif y > 1.0 - r:
        y = 1.0 - r
        if vy > 0.0:
            vy = -e * vy
    return x, y, vx, vy


@njit(cache=True)
def _advance(x, y, vx, vy, segs, r, e, tx, ty, tr, dt, substeps, passes):
    """Integrate one action step; returns (x, y, vx, vy, reached_target)."""
    h = dt / substeps
    for _ in range(substeps):
        x += vx * h
        y += vy * h
        x, y, vx, vy = _resolve_contacts(x, y, vx, vy, segs, r, e, passes)
        if (x - tx) ** 2 + (y - ty) ** 2 <= tr * tr:
            return x, y, vx, vy, True
    return x, y, vx, vy, False


@njit(cache=True)
def _clearance(x, y, segs):
    best = 1e300
    for k in range(segs.shape[0]):
        ax, ay, bx, by = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        dx = bx - ax
        dy = by - ay
        t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
        t = min(max(t, 0.0), 1.0)
        d = math.sqrt((x - ax - t * dx) ** 2 + (y - ay - t * dy) ** 2)
        if d < best:
            best = d
    return best


@njit(cache=True)
def _inside_any(x, y, verts, offsets):
    for p in range(offsets.shape[0] - 1):
        lo = offsets[p]
        hi = offsets[p + 1]
        n = hi - lo
        inside = False
        for k in range(n):
            ax, ay = verts[lo + k, 0], verts[lo + k, 1]
            bx, by = verts[lo + (k + 1) % n, 0], verts[lo + (k + 1) % n, 1]
            if (ay > y) != (by > y) and x < ax + (y - ay) * (bx - ax) / (by - ay):
                inside = not inside
        if inside:
            return True
    return False


def reflect(v, n, e: float = 1.0):
    """v - (1 + e)(v . n) n for a unit normal n pointing away from the surface."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    vn = float(v @ n)
    return v - (1.0 + e) * vn * n if vn < 0 else v


class Pinball(EnvModel):
    name = "pinball"
    state_dim = 4
    action_count = 5
    action_names = ("+x", "-x", "+y", "-y", "none")
    action_vectors = ACTIONS

    def __init__(self, layout: PinballLayout | str = "maze_world", gamma: float = C["gamma"],
                 dt: float = C["dt"], substeps: int = C["substeps"]):
        if isinstance(layout, str):
            layout = bundled_layout(layout)
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.layout = layout
        self.gamma = float(gamma)
        self.dt = float(dt)
        self.substeps = int(substeps)
        self.passes = C["max_contact_passes"]
        self.bounds = np.array([[0.0, 1.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]])
        self.segs = layout.segments()
        if self.segs.shape[0] == 0:
            # the kernels need a non-empty array; a zero-length wall far outside the box never touches
            self.segs = np.array([[10.0, 10.0, 10.0, 10.000001]])
        self.verts, self.offsets = layout.polygon_arrays()
        if self.verts.shape[0] == 0:
            self.verts = np.zeros((0, 2))
        self._r = float(layout.ball_radius)
        self._e = float(layout.restitution)
        self._drag = float(layout.drag)
        self._target = tuple(float(v) for v in layout.target)
        self._impulse = C["impulse"]
        self._vmax = C["speed_limit"]

    def step(self, state, action, rng=None):
        x, y, vx, vy = state
        ax, ay = ACTIONS[action]
        vmax = self._vmax
        vx = min(max(vx + self._impulse * ax, -vmax), vmax)
        vy = min(max(vy + self._impulse * ay, -vmax), vmax)
        tx, ty, tr = self._target
        x, y, vx, vy, hit = _advance(x, y, vx, vy, self.segs, self._r, self._e, tx, ty, tr,
                                     self.dt, self.substeps, self.passes)
        if hit:
            return (x, y, vx, vy), 1.0, True
        return (x, y, vx * self._drag, vy * self._drag), 0.0, False

    def initial_state(self, rng=None):
        return (float(self.layout.start[0]), float(self.layout.start[1]), 0.0, 0.0)

    def clearance(self, x: float, y: float) -> float:
        """Distance from (x, y) to the nearest obstacle edge."""
        return float(_clearance(x, y, self.segs))

    def inside_obstacle(self, x: float, y: float) -> bool:
        return bool(_inside_any(x, y, self.verts, self.offsets))

    def is_start_valid(self, state):
        x, y = state[0], state[1]
        r = self._r
        if not (r <= x <= 1.0 - r and r <= y <= 1.0 - r):
            return False
        tx, ty, tr = self._target
        if (x - tx) ** 2 + (y - ty) ** 2 <= tr * tr:
            return False
        return _clearance(x, y, self.segs) >= r and not _inside_any(x, y, self.verts, self.offsets)


def pinball_step(env: Pinball, s, a, rng=None):
    return env.step(s, a, rng)
