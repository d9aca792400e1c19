"""Time evolution of metrics depending on x^0 only, driven by F^P plus a trace-condition closure.

The closure sets the spatial and mixed blocks of F^h to -F^P (no dependence on x^1..x^3)
and solves the ten trace conditions for the (0, 0) block by least norm.  The four
constraint rows of that system carry no second time derivative, so a state is admissible
only when they already vanish; RK4 stage states are not checked, accepted states are.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import jax
import jax.numpy as jnp
import numpy as np

from .curvature import check_metric, ricci
from .jet_algebra import PAIR_INDEX, PAIRS, MetricJet, pair_label
from .multivector_solver import f_particular, homogeneous_residual

D00 = int(PAIR_INDEX[0, 0])  # packed slot of the (0, 0) second derivative
SINGULAR_RTOL = 1e-10
CONSISTENCY_TOL = 1e-8
TRACK_TOL = 1e-6


class EvolutionError(RuntimeError):
    """Raised when a trajectory leaves the admissible set; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class EvolState:
    t: float
    g: np.ndarray  # (10,)
    v: np.ndarray  # (10,) = g_{ab,0}

    def jet(self, accel=None) -> MetricJet:
        return _state_jet(self.t, jnp.asarray(self.g), jnp.asarray(self.v), accel)


def _state_jet(t, g, v, accel=None) -> MetricJet:
    dg = jnp.zeros((10, 4), dtype=g.dtype).at[:, 0].set(v)
    d2g = jnp.zeros((10, 10), dtype=g.dtype)
    if accel is not None:
        d2g = d2g.at[:, D00].set(accel)
    x = jnp.zeros(4, dtype=g.dtype).at[0].set(t)
    return MetricJet(x, g, dg, d2g, jnp.zeros((10, 20), dtype=g.dtype))


def kasner(p: Sequence[float], t: float) -> EvolState:
    """g = diag(-1, t^{2 p_i}) and its time derivative."""
    if t <= 0:
        raise ValueError("Kasner time must be positive")
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError("Kasner needs three exponents")
    diag = np.concatenate([[-1.0], t ** (2 * p)])
    ddiag = np.concatenate([[0.0], 2 * p * t ** (2 * p - 1)])
    g = np.zeros(10)
    v = np.zeros(10)
    for i in range(4):
        g[PAIR_INDEX[i, i]] = diag[i]
        v[PAIR_INDEX[i, i]] = ddiag[i]
    return EvolState(float(t), g, v)


def kasner_accel(p: Sequence[float], t: float) -> np.ndarray:
    """Closed-form second time derivative 2 p_i (2 p_i - 1) t^{2 p_i - 2}."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(10)
    for i in range(3):
        out[PAIR_INDEX[i + 1, i + 1]] = 2 * p[i] * (2 * p[i] - 1) * t ** (2 * p[i] - 2)
    return out


def _closure(t, g, v):
    """(F^h, consistency residual, rank) at a state."""
    jet = _state_jet(t, g, v)
    fp = f_particular(jet)
    base = -fp.at[:, 0, 0].set(0.0)

    def res(w):
        return homogeneous_residual(base.at[:, 0, 0].set(w), g)

    w0 = jnp.zeros(10, dtype=g.dtype)
    r0 = res(w0)
    M = jax.jacfwd(res)(w0)
    w, _, rank, _ = jnp.linalg.lstsq(M, -r0, rcond=SINGULAR_RTOL)
    fh = base.at[:, 0, 0].set(w)
    resid = jnp.max(jnp.abs(res(w))) / (1.0 + jnp.max(jnp.abs(r0)))
    return fh, fp, resid, rank


_closure_jit = jax.jit(_closure)


@dataclass(frozen=True)
class Closure:
    F_h: np.ndarray  # (10, 4, 4)
    F_P: np.ndarray
    accel: np.ndarray  # (10,) second time derivative
    consistency: float
    rank: int


def closure_fh(state: EvolState) -> Closure:
    """The closure F^h at ``state``; raises if the trace conditions cannot be met."""
    fh, fp, resid, rank = _closure_jit(jnp.asarray(float(state.t)), jnp.asarray(state.g, float),
                                       jnp.asarray(state.v, float))
    resid = float(resid)
    if resid > CONSISTENCY_TOL:
        raise EvolutionError(f"trace conditions inconsistent (residual {resid:.3e})", 0)
    fh, fp = np.asarray(fh), np.asarray(fp)
    return Closure(fh, fp, fp[:, 0, 0] + fh[:, 0, 0], resid, int(rank))


def _accel(t, g, v):
    fh, fp, _, _ = _closure(t, g, v)
    return fp[:, 0, 0] + fh[:, 0, 0]


@jax.jit
def _rk4(t, g, v, h):
    a1 = _accel(t, g, v)
    g2, v2 = g + 0.5 * h * v, v + 0.5 * h * a1
    a2 = _accel(t + 0.5 * h, g2, v2)
    g3, v3 = g + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = _accel(t + 0.5 * h, g3, v3)
    g4, v4 = g + h * v3, v + h * a3
    a4 = _accel(t + h, g4, v4)
    g_new = g + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
    v_new = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return g_new, v_new


@jax.jit
def _diagnostics(t, g, v):
    fh, fp, resid, _ = _closure(t, g, v)
    jet = _state_jet(t, g, v, fp[:, 0, 0] + fh[:, 0, 0])
    return jnp.max(jnp.abs(ricci(jet))), resid


@dataclass
class Trajectory:
    t: np.ndarray
    g: np.ndarray  # (N, 10)
    v: np.ndarray  # (N, 10)
    ricci_norm: np.ndarray
    consistency: np.ndarray = field(default=None)

    @property
    def final(self) -> EvolState:
        return EvolState(float(self.t[-1]), self.g[-1].copy(), self.v[-1].copy())

    @property
    def max_ricci(self) -> float:
        return float(np.max(self.ricci_norm))

    def columns(self) -> list[str]:
        labels = [pair_label(i) for i in range(len(PAIRS))]
        return ["t"] + [f"g{l}" for l in labels] + [f"v{l}" for l in labels] + ["ricci_norm"]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns())
        for i in range(len(self.t)):
            w.writerow([repr(float(self.t[i]))] + [repr(float(a)) for a in self.g[i]]
                       + [repr(float(a)) for a in self.v[i]] + [repr(float(self.ricci_norm[i]))])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self.write_csv(fh)


def integrate(initial: EvolState, t_end: float, h: float, tol_track: float = TRACK_TOL) -> Trajectory:
    """Fixed-step RK4 from ``initial.t`` to ``t_end``; every accepted state is checked."""
    if not h > 0:
        raise ValueError("step size must be positive")
    if t_end < initial.t:
        raise ValueError("t_end precedes the initial time")
    n = int(round((t_end - initial.t) / h))
    if not np.isclose(initial.t + n * h, t_end, rtol=0, atol=1e-9 * max(1.0, abs(t_end))):
        raise ValueError("(t_end - t0) must be an integer multiple of h")
    g = jnp.asarray(initial.g, dtype=float)
    v = jnp.asarray(initial.v, dtype=float)
    ts, gs, vs, rn, cons = [], [], [], [], []
    for k in range(n + 1):
        t = initial.t + k * h
        try:
            check_metric(np.asarray(g), require_lorentzian=True)
        except ValueError as exc:
            raise EvolutionError(str(exc), k) from exc
        r, c = (float(a) for a in _diagnostics(jnp.asarray(t), g, v))
        if c > CONSISTENCY_TOL:
            raise EvolutionError(f"constraint drift: trace conditions residual {c:.3e}", k)
        if not r < tol_track:
            raise EvolutionError(f"Ricci norm {r:.3e} exceeds {tol_track:.1e}", k)
        ts.append(t)
        gs.append(np.asarray(g))
        vs.append(np.asarray(v))
        rn.append(r)
        cons.append(c)
        if k < n:
            g, v = _rk4(jnp.asarray(t), g, v, jnp.asarray(h))
    return Trajectory(np.array(ts), np.stack(gs), np.stack(vs), np.array(rn), np.array(cons))
