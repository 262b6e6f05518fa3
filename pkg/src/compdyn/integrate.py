"""Batched Dormand-Prince 5(4) integration with escape handling.

Without dense output every point carries its own time and step size, so one
point approaching a blow-up does not throttle the rest of the batch.  Dense
output needs common nodes, so there all points share one step size and the
error norm is the worst point's.  Points that leave the escape ball, or that
force the step size to underflow, are frozen with a terminal status while the
rest continue.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

COMPLETED = 0
ESCAPED = 1
BLOWUP = 2
STOPPED = 3  # frozen by a monitor callback

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (Shampine's optimal c6 choice)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = 0.5
    escape_radius: Optional[float] = None
    max_time: float = 1e5
    min_step: float = 1e-12
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass
class DenseBatch:
    """Piecewise quartic interpolant for a batch; times are elapsed |t|."""

    nodes: np.ndarray  # (k+1,)
    y: np.ndarray  # (k+1, m, n) state at each node
    q: np.ndarray  # (k, m, n, 4)

    def __call__(self, times) -> np.ndarray:
        """States at the given elapsed times, shape (len(times), m, n)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if len(self.q) == 0:
            return np.repeat(self.y[:1], len(times), axis=0)
        seg = np.clip(np.searchsorted(self.nodes, times, side="right") - 1, 0, len(self.q) - 1)
        h = self.nodes[seg + 1] - self.nodes[seg]
        s = (times - self.nodes[seg]) / h
        powers = np.stack([s, s ** 2, s ** 3, s ** 4], axis=-1)  # (T, 4)
        out = self.y[seg] + h[:, None, None] * np.einsum("tmnk,tk->tmn", self.q[seg], powers)
        return out

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])


@dataclass
class BatchResult:
    states: np.ndarray  # (m, n) final or frozen state
    status: np.ndarray  # (m,) int codes
    stop_time: np.ndarray  # (m,) elapsed time at which each point stopped
    dense: Optional[DenseBatch] = None
    codes: Optional[np.ndarray] = None  # monitor codes for STOPPED points


def _initial_step(f, x, fx, rtol, atol, axis=None):
    """Hairer's starting step; per row when ``axis=1``."""
    scale = atol + np.abs(x) * rtol
    d0 = np.sqrt(np.mean((x / scale) ** 2, axis=axis))
    d1 = np.sqrt(np.mean((fx / scale) ** 2, axis=axis))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
        x1 = x + (h0[..., None] if axis else h0) * fx
        d2 = np.sqrt(np.mean(((f(x1) - fx) / scale) ** 2, axis=axis)) / h0
        dm = np.maximum(d1, d2)
        h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / dm) ** 0.2)
    out = np.minimum(100 * h0, h1)
    out = np.where(np.isfinite(out), out, 1e-6)
    return float(out) if axis is None else out


def integrate_batch(
    field: Callable[[np.ndarray], np.ndarray],
    x0,
    duration: float,
    cfg: IntegratorConfig,
    *,
    dense: bool = False,
    monitor: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None,
) -> BatchResult:
    """Integrate ``x' = field(x)`` for every row of ``x0`` over ``duration``.

    A negative ``duration`` integrates the reversed field.  ``monitor(t, X,
    active)`` may return an integer array (0 = continue) after every accepted
    step; nonzero entries freeze the corresponding points with status STOPPED.
    ``t`` is a scalar with dense output and a per-row array otherwise; it
    carries the sign of ``duration``.
    """
    x = np.array(np.atleast_2d(x0), dtype=float)
    m, n = x.shape
    sign = -1.0 if duration < 0 else 1.0
    t_end = abs(float(duration))
    if sign < 0:
        def f(y):
            return -field(y)
    else:
        f = field
    radius = cfg.escape_radius if cfg.escape_radius is not None else np.inf

    status = np.zeros(m, dtype=int)
    codes = np.zeros(m, dtype=int)
    stop_time = np.full(m, t_end)
    active = np.ones(m, dtype=bool)
    bad0 = ~np.all(np.isfinite(x), axis=1)
    if bad0.any():
        status[bad0] = BLOWUP
        stop_time[bad0] = 0.0
        active &= ~bad0
    esc0 = active & (np.linalg.norm(x, axis=1) > radius)
    status[esc0] = ESCAPED
    stop_time[esc0] = 0.0
    active &= ~esc0

    nodes = [0.0]
    ys = [x.copy()] if dense else None
    qs = [] if dense else None

    if t_end == 0.0 or not active.any():
        d = DenseBatch(np.array(nodes), np.array(ys), np.zeros((0, m, n, 4))) if dense else None
        return BatchResult(x, status, np.where(active, 0.0, stop_time), d, codes)

    if not dense:
        return _independent(f, x, active, status, stop_time, codes, t_end, sign, radius, cfg,
                            monitor)

    xa = x[active]
    fa = f(xa)
    h = min(_initial_step(f, xa, fa, cfg.rel_tol, cfg.abs_tol), cfg.max_step, t_end)
    t = 0.0
    k = np.empty((7,) + xa.shape)
    steps = 0
    idx = np.flatnonzero(active)
    while t < t_end and len(idx) > 0:
        steps += 1
        if steps > cfg.max_steps:
            raise RuntimeError("integration exceeded max_steps")
        h = min(h, t_end - t)
        last = (t + h >= t_end)
        k[0, : len(idx)] = fa
        kk = k[:, : len(idx)]
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 6):
                dy = sum(a * kk[j] for j, a in enumerate(_A[s]) if a != 0.0)
                kk[s] = f(xa + h * dy)
            x_new = xa + h * np.tensordot(_B, kk[:6], axes=1)
            f_new = f(x_new)
            kk[6] = f_new
            err_vec = h * np.tensordot(_E, kk, axes=1)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(xa), np.abs(x_new))
            err_pt = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))
        err_pt = np.where(np.isfinite(err_pt) & np.all(np.isfinite(f_new), axis=1), err_pt, np.inf)
        err = float(err_pt.max())
        if err > 1.0:
            if h <= cfg.min_step * max(1.0, t):
                # step underflow: freeze the worst offenders
                worst = err_pt > 1.0
                sel = idx[worst]
                status[sel] = BLOWUP
                stop_time[sel] = t
                x[sel] = xa[worst]
                keep = ~worst
                idx, xa, fa = idx[keep], xa[keep], fa[keep]
                continue
            factor = 0.9 * err ** -0.2 if np.isfinite(err) else 0.2
            h = h * max(0.2, factor)
            continue
        # accepted
        t_new = t_end if last else t + h
        if dense:
            q = np.einsum("smn,sk->mnk", kk, _P)
            full_q = np.zeros((m, n, 4))
            full_q[idx] = q
            qs.append(full_q)
            nodes.append(t_new)
        t = t_new
        xa, fa = x_new, f_new
        x[idx] = xa
        if dense:
            ys.append(x.copy())
        norms = np.linalg.norm(xa, axis=1)
        freeze = norms > radius
        if freeze.any():
            sel = idx[freeze]
            status[sel] = ESCAPED
            stop_time[sel] = t
        if monitor is not None:
            mc = np.asarray(monitor(t * sign, xa, idx), dtype=int)
            stop = (mc != 0) & ~freeze
            if stop.any():
                sel = idx[stop]
                status[sel] = STOPPED
                codes[sel] = mc[stop]
                stop_time[sel] = t
                freeze = freeze | stop
        if freeze.any():
            keep = ~freeze
            idx, xa, fa = idx[keep], xa[keep], fa[keep]
        factor = 0.9 * err ** -0.2 if err > 0 else 10.0
        h = min(h * min(10.0, max(0.2, factor)), cfg.max_step)

    d = None
    if dense:
        d = DenseBatch(np.array(nodes), np.array(ys),
                       np.array(qs) if qs else np.zeros((0, m, n, 4)))
    return BatchResult(x, status, stop_time, d, codes)


def _independent(f, x, active, status, stop_time, codes, t_end, sign, radius, cfg, monitor):
    """Per-point step control; same acceptance rule as the shared-step loop."""
    idx = np.flatnonzero(active)
    xa = x[idx]
    fa = f(xa)
    h = np.minimum(_initial_step(f, xa, fa, cfg.rel_tol, cfg.abs_tol, axis=1), cfg.max_step)
    h = np.minimum(h, t_end)
    t = np.zeros(len(idx))
    k = np.empty((7,) + xa.shape)
    steps = 0
    while len(idx) > 0:
        steps += 1
        if steps > cfg.max_steps:
            raise RuntimeError("integration exceeded max_steps")
        h = np.minimum(h, t_end - t)
        last = t + h >= t_end
        hc = h[:, None]
        kk = k[:, : len(idx)]
        kk[0] = fa
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(1, 6):
                dy = sum(a * kk[j] for j, a in enumerate(_A[s]) if a != 0.0)
                kk[s] = f(xa + hc * dy)
            x_new = xa + hc * np.tensordot(_B, kk[:6], axes=1)
            f_new = f(x_new)
            kk[6] = f_new
            err_vec = hc * np.tensordot(_E, kk, axes=1)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(xa), np.abs(x_new))
            err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))
        err = np.where(np.isfinite(err) & np.all(np.isfinite(f_new), axis=1), err, np.inf)
        ok = err <= 1.0
        with np.errstate(divide="ignore"):
            factor = np.where(np.isfinite(err), 0.9 * err ** -0.2, 0.2)
        factor = np.where(err > 0, factor, 10.0)
        gone = np.zeros(len(idx), dtype=bool)

        rej = ~ok
        under = rej & (h <= cfg.min_step * np.maximum(1.0, t))
        if under.any():
            sel = idx[under]
            status[sel] = BLOWUP
            stop_time[sel] = t[under]
            x[sel] = xa[under]
            gone |= under
        h = np.where(rej, h * np.maximum(0.2, factor), h)

        if ok.any():
            t = np.where(ok, np.where(last, t_end, t + h), t)
            xa = np.where(ok[:, None], x_new, xa)
            fa = np.where(ok[:, None], f_new, fa)
            x[idx[ok]] = xa[ok]
            esc = ok & (np.linalg.norm(xa, axis=1) > radius)
            if esc.any():
                status[idx[esc]] = ESCAPED
                stop_time[idx[esc]] = t[esc]
                gone |= esc
            live = ok & ~esc
            if monitor is not None and live.any():
                mc = np.asarray(monitor(sign * t[live], xa[live], idx[live]), dtype=int)
                stop = np.zeros(len(idx), dtype=bool)
                stop[np.flatnonzero(live)[mc != 0]] = True
                if stop.any():
                    status[idx[stop]] = STOPPED
                    codes[idx[stop]] = mc[mc != 0]
                    stop_time[idx[stop]] = t[stop]
                    gone |= stop
            done = live & last & ~gone
            gone |= done
            h = np.where(ok, np.minimum(h * np.minimum(10.0, np.maximum(0.2, factor)), cfg.max_step), h)

        if gone.any():
            keep = ~gone
            idx, xa, fa, t, h = idx[keep], xa[keep], fa[keep], t[keep], h[keep]
    return BatchResult(x, status, stop_time, None, codes)
