"""Shared test helpers: oracles kept independent of the code they check.

The finite-difference checker perturbs raw parameter coordinates and never
touches the backprop path. The ray-march oracle finds lidar ranges by
stepping along each beam and bisecting the first inside/outside crossing,
using only point-membership tests (no intersection algebra).
"""

from __future__ import annotations

import numpy as np
import pytest

from gdqnav.envs.scenes import Scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# finite-difference gradient oracle


def relative_error(a: float, b: float) -> float:
    """|a - b| scaled by the larger magnitude, floored at 1 so gradients
    near zero compare absolutely."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_diff_check(loss_fn, theta: np.ndarray, grad: np.ndarray,
                      coords: np.ndarray, step: float = 1e-6,
                      rtol: float = 1e-5) -> float:
    """Compare analytic gradient coordinates against central differences.

    ``loss_fn`` must recompute the loss from ``theta`` in place with
    everything else (targets, weights, batches) frozen. Returns the worst
    relative error; asserts it stays under ``rtol``.
    """
    worst = 0.0
    for i in coords:
        old = theta[i]
        theta[i] = old + step
        up = loss_fn()
        theta[i] = old - step
        down = loss_fn()
        theta[i] = old
        fd = (up - down) / (2.0 * step)
        err = relative_error(fd, grad[i])
        worst = max(worst, err)
        assert err <= rtol, f"coordinate {i}: analytic {grad[i]}, fd {fd}, rel err {err}"
    return worst


def min_relu_margin(caches) -> float:
    """Smallest |pre-activation| over every ReLU layer in a list of Mlp
    caches. Draws that leave a unit close to its kink are rejected so the
    finite-difference window never straddles one."""
    worst = np.inf
    for cache, net in caches:
        for layer, (_, z, _) in zip(net.layers, cache):
            if layer.activation == "relu":
                worst = min(worst, float(np.min(np.abs(z))))
    return worst


def dueling_relu_margin(net, cache) -> float:
    trunk_cache, value_cache, adv_caches, _ = cache
    pairs = [(trunk_cache, net.trunk), (value_cache, net.value)]
    pairs += list(zip(adv_caches, net.advantages))
    return min_relu_margin(pairs)


# ---------------------------------------------------------------------------
# ray-march lidar oracle


def _points_blocked(scene: Scene, pts: np.ndarray, bodies: np.ndarray,
                    exclude: int | None) -> np.ndarray:
    """True where a point is outside the arena or inside any solid."""
    blocked = ~scene.inside_arena(pts)
    for xmin, ymin, xmax, ymax in scene.rects:
        blocked |= ((pts[:, 0] >= xmin) & (pts[:, 0] <= xmax)
                    & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax))
    for j, (cx, cy, r) in enumerate(bodies):
        if exclude is not None and j == exclude:
            continue
        blocked |= np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= r
    return blocked


def ray_march_ranges(scene: Scene, origin: np.ndarray, angles: np.ndarray,
                     bodies: np.ndarray, exclude: int | None,
                     max_range: float, coarse: float = 2e-3,
                     refine_iters: int = 60) -> np.ndarray:
    """March each beam in small steps, then bisect the first crossing.

    ``bodies`` are circles (cx, cy, r) covering both circular obstacles and
    robot discs; ``exclude`` names the scanning robot's own disc.
    """
    k = len(angles)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    ts = np.arange(coarse, max_range + coarse, coarse)
    pts = origin[None, None, :] + ts[None, :, None] * dirs[:, None, :]
    flat = pts.reshape(-1, 2)
    blocked = _points_blocked(scene, flat, bodies, exclude).reshape(k, len(ts))

    out = np.full(k, max_range)
    any_hit = blocked.any(axis=1)
    first = np.argmax(blocked, axis=1)
    lo = np.where(first > 0, ts[np.maximum(first - 1, 0)], 0.0)
    hi = ts[first]
    for _ in range(refine_iters):
        mid = 0.5 * (lo + hi)
        p = origin[None, :] + mid[:, None] * dirs
        inside = _points_blocked(scene, p, bodies, exclude)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    out[any_hit] = np.minimum(hi[any_hit], max_range)
    return out
