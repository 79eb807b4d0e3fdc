"""Exact and Monte-Carlo checks that an operator annihilates a target law.

Three modes, one report type:

* ``check_moment_recurrence``: for targets with an exact moment oracle, the
  relation E[S y^k] = 0 is evaluated as exact rational arithmetic for
  k = 0..K.  Pass means identically zero; there is no tolerance.
* ``mc_stein_residual``: for sampled targets, E[S f(W)] is estimated over a
  family of smooth test functions whose derivatives are available in closed
  form (trigonometric waves and Gaussian-weighted polynomials).  A test
  passes when |sample mean| <= sigma_mult * standard error (default 4).
* ``ode_residual``: when the target has a closed-form characteristic
  function, the transformed ODE is evaluated directly on a t-grid and the
  worst normalised residual |sum c_i phi^(i)| / (sum |c_i||phi^(i)| + 1) is
  returned.

Derivatives of test functions are never taken numerically: the j-th
derivative of cos(ty)/sin(ty) is t^j cos(ty + j pi/2) / t^j sin(ty + j pi/2),
and the class exp(-y^2/2) p(y) is closed under d/dy via p -> p' - y p.  This
keeps high-order operators stable.

Monte-Carlo estimation is chunked; chunk i draws from a generator seeded
with seed + i, so results are reproducible and independent of the number of
worker threads (capped by the STEIN_SCOPE_THREADS environment variable).
Chunk statistics are merged by exact pairwise Welford combination in chunk
order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from .algebra import RationalPoly
from .operators import CfOde, SteinOperator, moment_recurrence

_DEFAULT_N = 10**6
_CHUNK = 1 << 17


class ResidualReport:
    """One verification test: residual, threshold, and pass/fail.

    The invariant ``passed == (|residual| <= threshold)`` is enforced at
    construction.  Exact-mode reports carry a Fraction residual and zero
    threshold; Monte-Carlo reports carry float residual, standard error and
    threshold = sigma_mult * stderr.
    """

    __slots__ = ("test_id", "mode", "residual", "stderr", "threshold",
                 "passed", "n", "seed")

    def __init__(self, test_id, mode, residual, threshold, stderr=None,
                 n=None, seed=None):
        self.test_id = str(test_id)
        self.mode = str(mode)
        self.residual = residual
        self.stderr = stderr
        self.threshold = threshold
        self.passed = abs(residual) <= threshold
        self.n = n
        self.seed = seed

    def as_json(self) -> dict:
        out = {
            "test_id": self.test_id,
            "mode": self.mode,
            "residual": (
                str(self.residual)
                if isinstance(self.residual, Fraction)
                else float(self.residual)
            ),
            "threshold": (
                str(self.threshold)
                if isinstance(self.threshold, Fraction)
                else float(self.threshold)
            ),
            "passed": bool(self.passed),
        }
        if self.stderr is not None:
            out["stderr"] = float(self.stderr)
        if self.n is not None:
            out["n"] = int(self.n)
        if self.seed is not None:
            out["seed"] = int(self.seed)
        return out

    def __repr__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"ResidualReport({self.test_id}: {self.residual} [{flag}])"


# --- exact mode -----------------------------------------------------------------

def check_moment_recurrence(op: SteinOperator, dist, K: int = 12) -> list[ResidualReport]:
    """Evaluate the operator's moment relation exactly for k = 0..K.

    ``dist`` must expose an exact ``moment(order) -> Fraction`` oracle
    (NoExactOracle propagates otherwise).  Each report's residual is the
    exact value of sum_s c_s(k) E[W^{k+s}]; pass means exactly zero.
    """
    rec = moment_recurrence(op)
    out = []
    for k in range(K + 1):
        r = rec.residual(dist.moment, k)
        out.append(ResidualReport(f"moment-k={k}", "exact", r, Fraction(0)))
    return out


# --- Monte-Carlo mode -------------------------------------------------------------

class TrigTest:
    """cos(ty) or sin(ty): the j-th derivative is t^j trig(ty + j pi/2)."""

    __slots__ = ("kind", "t", "label")

    def __init__(self, kind: str, t):
        if kind not in ("cos", "sin"):
            raise ValueError("kind must be 'cos' or 'sin'")
        self.kind = kind
        self.t = float(t)
        self.label = f"{kind}({t}*y)"

    def derivative(self, y: np.ndarray, j: int) -> np.ndarray:
        phase = self.t * y + j * (np.pi / 2)
        wave = np.cos(phase) if self.kind == "cos" else np.sin(phase)
        return self.t**j * wave


class GaussianPolyTest:
    """exp(-y^2/2) p(y): differentiation maps p to p' - y p, a closed class."""

    __slots__ = ("label", "_polys")

    def __init__(self, poly: RationalPoly, label: str | None = None):
        self._polys = [poly]
        self.label = label if label is not None else f"exp(-y^2/2)*({poly})"

    def _poly(self, j: int) -> np.ndarray:
        while len(self._polys) <= j:
            p = self._polys[-1]
            self._polys.append(p.derivative() - RationalPoly({1: 1}) * p)
        p = self._polys[j]
        dense = np.zeros(max(p.degree() + 1, 1))
        for d, c in p.c.items():
            dense[d] = float(c)
        return dense

    def derivative(self, y: np.ndarray, j: int) -> np.ndarray:
        vals = np.polynomial.polynomial.polyval(y, self._poly(j))
        return vals * np.exp(-0.5 * y * y)


def default_test_family(t_grid=(Fraction(1, 2), 1, 2), max_poly_degree: int = 2):
    """The standard family: cos/sin waves on a t-grid plus weighted monomials."""
    family = []
    for t in t_grid:
        family.append(TrigTest("cos", t))
        family.append(TrigTest("sin", t))
    for d in range(max_poly_degree + 1):
        label = "exp(-y^2/2)" if d == 0 else f"exp(-y^2/2)*y^{d}"
        family.append(GaussianPolyTest(RationalPoly({d: 1}), label=label))
    return family


def _welford_merge(a, b):
    n_a, mean_a, m2_a = a
    n_b, mean_b, m2_b = b
    if n_a == 0:
        return b
    if n_b == 0:
        return a
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return (n, mean, m2)


def _operator_coefficient_arrays(op: SteinOperator) -> dict[int, np.ndarray]:
    arrays = {}
    for j in range(op.T + 1):
        poly = op.coefficient_poly(j)
        if poly.is_zero():
            continue
        dense = np.zeros(poly.degree() + 1)
        for d, c in poly.c.items():
            dense[d] = float(c)
        arrays[j] = dense
    return arrays


def _threads() -> int:
    raw = os.environ.get("STEIN_SCOPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def mc_stein_residual(op: SteinOperator, dist, family=None, n: int = _DEFAULT_N,
                      seed: int = 0, *, sigma_mult: float = 4.0,
                      chunk: int = _CHUNK) -> list[ResidualReport]:
    """Estimate E[S f(W)] over a test-function family by seeded Monte-Carlo.

    Returns one report per family member with residual = sample mean,
    stderr, and threshold = sigma_mult * stderr.  Chunk i draws
    ``dist.sample(chunk_size, seed + i)``; estimates are identical for any
    thread count.
    """
    if family is None:
        family = default_test_family()
    family = list(family)
    coeff = _operator_coefficient_arrays(op)
    sizes = [chunk] * (n // chunk) + ([n % chunk] if n % chunk else [])

    def run_chunk(i: int):
        rng = np.random.default_rng(seed + i)
        y = dist.sample(sizes[i], seed=rng)
        powers = {j: np.polynomial.polynomial.polyval(y, c)
                  for j, c in coeff.items()}
        stats = []
        for fn in family:
            vals = np.zeros_like(y)
            for j, a_j in powers.items():
                vals += a_j * fn.derivative(y, j)
            m = float(vals.mean())
            stats.append((len(y), m, float(((vals - m) ** 2).sum())))
        return stats

    workers = min(_threads(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_chunk = list(pool.map(run_chunk, range(len(sizes))))
    else:
        per_chunk = [run_chunk(i) for i in range(len(sizes))]

    out = []
    for idx, fn in enumerate(family):
        acc = (0, 0.0, 0.0)
        for stats in per_chunk:
            acc = _welford_merge(acc, stats[idx])
        cnt, mean, m2 = acc
        stderr = (m2 / (cnt - 1)) ** 0.5 / cnt**0.5 if cnt > 1 else 0.0
        out.append(ResidualReport(
            fn.label, "mc", mean, sigma_mult * stderr,
            stderr=stderr, n=cnt, seed=seed,
        ))
    return out


# --- ODE mode ----------------------------------------------------------------------

def default_ode_grid() -> np.ndarray:
    """64 log-spaced points in [0.1, 10]; avoids the singular point t = 0."""
    return np.geomspace(0.1, 10.0, 64)


def ode_residual(ode: CfOde, cf, grid=None) -> float:
    """Worst normalised residual of the ODE applied to a candidate solution.

    ``cf(t, j)`` must return the j-th derivative of the candidate at t.  The
    residual at t is |sum_i c_i(t) phi^(i)(t)| divided by
    sum_i |c_i(t)| |phi^(i)(t)| + 1, and the maximum over the grid is
    returned.
    """
    if grid is None:
        grid = default_ode_grid()
    worst = 0.0
    for t in grid:
        t = float(t)
        num = 0j
        den = 1.0
        for i, poly in enumerate(ode.coeffs):
            if poly.is_zero():
                continue
            c = poly.eval_complex(t)
            phi = complex(cf(t, i))
            num += c * phi
            den += abs(c) * abs(phi)
        worst = max(worst, abs(num) / den)
    return worst
