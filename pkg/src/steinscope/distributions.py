"""Target laws: exact moment oracles, seeded samplers, characteristic functions.

A TargetDistribution bundles up to three capabilities behind one name:

* an exact moment oracle ``moment(k)`` returning a Fraction.  The laws that
  carry one are the Hermite targets H_p(X) with X ~ N(0,1), the product
  normal laws PN(p, sigma2), the centred Gaussian, and the centred
  semicircle; their moments are rational and computed exactly.
* a seeded sampler ``sample(n, seed)`` drawing i.i.d. replicates with numpy.
  Samplers are stateless: concurrent use derives per-task seeds as
  ``seed + task_index``.
* a characteristic function ``cf(t, j)`` evaluating the j-th derivative of
  phi at t, for the three laws with a closed form: the Gaussian
  (exp(-sigma2 t^2/2)), the semicircle (2 J_1(t)/t), and PN(2, sigma2)
  ((1 + sigma2 t^2)^(-1/2)).

The Beta/Gamma product laws (G1X, BG1, G1G2) ship samplers and metadata but
no exact oracle; recurrence checks for them run in Monte-Carlo mode.  The
Kummer-type law annihilated by the PRR operator ships metadata only: the
sufficiency pipeline works from the operator alone, so it needs neither a
sampler nor an oracle.

Characteristic-function derivatives are never computed by numerical
differencing.  Each closed form lives in a finite function basis that is
closed under d/dt (Gaussian weight times polynomials; Bessel functions over
powers of t; rational powers of 1 + sigma2 t^2 times monomials), so the j-th
derivative is obtained by exact recursion on basis coefficients followed by
a single floating-point evaluation.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy import special as _special

from .algebra import (
    HermiteExpansion,
    _as_fraction,
    gaussian_moment,
    hermite_to_monomial,
)
from .operators import BadParameter, _parse_params, _take


class NoExactOracle(ValueError):
    """An exact moment oracle was required but the target does not have one."""


class NoClosedForm(ValueError):
    """A closed-form characteristic function was required but none exists."""


class UnknownTarget(KeyError):
    """The requested name is not in the target registry."""


# --- exact moment helpers ----------------------------------------------------

@lru_cache(maxsize=None)
def _hermite_power(p: int, k: int) -> HermiteExpansion:
    if k == 0:
        return HermiteExpansion({0: 1})
    return _hermite_power(p, k - 1) * HermiteExpansion.basis(p)


def hermite_poly_moment(p: int, k: int) -> Fraction:
    """E[H_p(X)^k] for X ~ N(0,1), exactly.

    The k-th power is expanded in the Hermite basis (where products
    linearise exactly), and the expectation is its degree-0 coefficient.
    """
    if p < 1:
        raise ValueError("Hermite index p must be >= 1")
    if k < 0:
        raise ValueError("moment order k must be >= 0")
    return _hermite_power(p, k).expectation()


def cumulants_from_moments(moment_oracle, r: int) -> Fraction:
    """kappa_r from a moment oracle, by the standard recursion.

    kappa_n = mu_n - sum_{m=1}^{n-1} C(n-1, m-1) kappa_m mu_{n-m}.
    """
    if r < 1:
        raise ValueError("cumulant order must be >= 1")
    mu = [Fraction(1)] + [_as_fraction(moment_oracle(n)) for n in range(1, r + 1)]
    kappa = [Fraction(0)]
    for n in range(1, r + 1):
        k_n = mu[n] - sum(
            comb(n - 1, m - 1) * kappa[m] * mu[n - m] for m in range(1, n)
        )
        kappa.append(k_n)
    return kappa[r]


def cumulant(dist: "TargetDistribution", r: int) -> Fraction:
    """kappa_r of the target, exact; requires an exact moment oracle."""
    return cumulants_from_moments(dist.moment, r)


def _catalan(r: int) -> int:
    return comb(2 * r, r) // (r + 1)


# --- characteristic-function engines -----------------------------------------

class GaussianCf:
    """phi(t) = exp(-sigma2 t^2 / 2) with exact-structure derivatives.

    The j-th derivative is (-s)^j H_j(s t) exp(-s^2 t^2/2) with s^2 = sigma2
    and H_j the monic Hermite polynomial, so evaluation needs no differencing.
    """

    __slots__ = ("sigma2", "_sigma")

    def __init__(self, sigma2=1):
        self.sigma2 = _as_fraction(sigma2)
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        self._sigma = float(self.sigma2) ** 0.5

    def __call__(self, t: float, j: int = 0) -> float:
        s = self._sigma
        u = s * t
        value = 0.0
        for d, c in hermite_to_monomial(j).c.items():
            value += float(c) * u**d
        return (-s) ** j * value * np.exp(-0.5 * u * u)


class BesselRatioCf:
    """B_1(t)/t (scaled) for B in {J, Y}, with derivatives in the Bessel basis.

    Elements are stored as {(nu, k): c} meaning sum c * B_nu(t) / t^k.  The
    rule d/dt [B_nu t^-k] = B_{nu-1} t^-k - (nu+k) B_nu t^-(k+1) (valid for
    both kinds) keeps the basis closed under differentiation.  The "J" form
    is 2 J_1(t)/t, normalised so phi(0) = 1 with the removable singularity
    filled by its even power series; the "Y" form Y_1(t)/t is singular at 0.
    """

    __slots__ = ("kind", "_derivs")

    def __init__(self, kind: str = "J"):
        if kind not in ("J", "Y"):
            raise ValueError("kind must be 'J' or 'Y'")
        self.kind = kind
        scale = 2 if kind == "J" else 1
        self._derivs = [{(1, 1): Fraction(scale)}]

    def _rep(self, j: int) -> dict:
        while len(self._derivs) <= j:
            nxt = {}
            for (nu, k), c in self._derivs[-1].items():
                nxt[(nu - 1, k)] = nxt.get((nu - 1, k), Fraction(0)) + c
                nxt[(nu, k + 1)] = nxt.get((nu, k + 1), Fraction(0)) - (nu + k) * c
            self._derivs.append({key: v for key, v in nxt.items() if v})
        return self._derivs[j]

    def __call__(self, t: float, j: int = 0) -> float:
        if self.kind == "J" and abs(t) <= 1.0:
            # The entire series 2 J_1(t)/t = sum_m a_m t^{2m} with
            # a_m = (-1)^m / (4^m m! (m+1)!) avoids the cancellation the
            # Bessel basis suffers between J_nu / t^k terms at small t.
            total = 0.0
            a_m = 1.0
            for m in range(0, 40 + j // 2):
                if 2 * m >= j:
                    term = a_m * t ** (2 * m - j)
                    for i in range(j):
                        term *= 2 * m - i
                    total += term
                    if m and abs(term) < 1e-18 * max(1.0, abs(total)):
                        break
                a_m /= -4.0 * (m + 1) * (m + 2)
            return total
        if t == 0:
            raise ValueError("Y_1(t)/t is singular at t = 0")
        bessel = _special.jv if self.kind == "J" else _special.yv
        return sum(
            float(c) * bessel(nu, t) / t**k for (nu, k), c in self._rep(j).items()
        )


class ReciprocalSqrtCf:
    """phi(t) = (1 + sigma2 t^2)^(-1/2) with derivatives by exact recursion.

    Elements are {(e, d): c} meaning sum c * t^d * (1 + sigma2 t^2)^e with
    rational c and e; d/dt maps (e, d) to d*(e, d-1) + 2*sigma2*e*(e-1, d+1).
    """

    __slots__ = ("sigma2", "_derivs")

    def __init__(self, sigma2=1):
        self.sigma2 = _as_fraction(sigma2)
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        self._derivs = [{(Fraction(-1, 2), 0): Fraction(1)}]

    def _rep(self, j: int) -> dict:
        while len(self._derivs) <= j:
            nxt = {}
            for (e, d), c in self._derivs[-1].items():
                if d:
                    key = (e, d - 1)
                    nxt[key] = nxt.get(key, Fraction(0)) + d * c
                key = (e - 1, d + 1)
                nxt[key] = nxt.get(key, Fraction(0)) + 2 * self.sigma2 * e * c
            self._derivs.append({key: v for key, v in nxt.items() if v})
        return self._derivs[j]

    def __call__(self, t: float, j: int = 0) -> float:
        u = 1.0 + float(self.sigma2) * t * t
        return sum(
            float(c) * t**d * u ** float(e) for (e, d), c in self._rep(j).items()
        )


# --- the target type ----------------------------------------------------------

class TargetDistribution:
    """A named target law bundling whichever capabilities it supports.

    Capabilities are optional: ``moment`` raises NoExactOracle when the law
    has no exact oracle, ``cf`` raises NoClosedForm when no closed form
    exists, and ``sample`` raises NotImplementedError for analysis-only
    targets.  ``meta`` is the side-condition dictionary consumed by the
    sufficiency pipeline; ``moment_determinate`` records whether the law is
    determined by its moments (None when not recorded) and nothing branches
    on it.
    """

    __slots__ = (
        "name",
        "family",
        "params",
        "symmetric",
        "zero_mean",
        "moment_determinate",
        "_moment",
        "_sampler",
        "_cf",
    )

    def __init__(
        self,
        name: str,
        family: str,
        params: dict | None,
        *,
        symmetric: bool,
        zero_mean: bool,
        moment_determinate: bool | None = None,
        moment=None,
        sampler=None,
        cf=None,
    ):
        self.name = name
        self.family = family
        self.params = {k: _as_fraction(v) for k, v in (params or {}).items()}
        self.symmetric = bool(symmetric)
        self.zero_mean = bool(zero_mean)
        self.moment_determinate = moment_determinate
        self._moment = moment
        self._sampler = sampler
        self._cf = cf

    @property
    def meta(self) -> dict:
        """Side conditions for the sufficiency pipeline."""
        return {"symmetric": self.symmetric, "zero_mean": self.zero_mean}

    @property
    def has_exact_moments(self) -> bool:
        return self._moment is not None

    @property
    def has_sampler(self) -> bool:
        return self._sampler is not None

    @property
    def has_cf(self) -> bool:
        return self._cf is not None

    def moment(self, k: int) -> Fraction:
        """E[Y^k], exact."""
        if k < 0:
            raise ValueError("moment order must be >= 0")
        if self._moment is None:
            raise NoExactOracle(f"{self.name} has no exact moment oracle")
        return self._moment(int(k))

    def sample(self, n: int, seed=0) -> np.ndarray:
        """n i.i.d. draws; reproducible for a fixed integer seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self._sampler is None:
            raise NotImplementedError(
                f"{self.name} has no sampler; it is an analysis-only target"
            )
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return self._sampler(rng, int(n))

    def cf(self, t: float, j: int = 0) -> float:
        """j-th derivative of the characteristic function at t."""
        if self._cf is None:
            raise NoClosedForm(f"{self.name} has no closed-form characteristic function")
        return self._cf(t, j)

    def __repr__(self):
        caps = [
            label
            for label, flag in (
                ("moments", self.has_exact_moments),
                ("sampler", self.has_sampler),
                ("cf", self.has_cf),
            )
            if flag
        ]
        return f"TargetDistribution({self.name!r}, capabilities={caps})"


# --- registry -----------------------------------------------------------------

def _gaussian_target(sigma2) -> TargetDistribution:
    sigma2 = _as_fraction(sigma2)
    name = "gaussian" if sigma2 == 1 else f"gaussian:sigma2={sigma2}"
    sigma = float(sigma2) ** 0.5
    return TargetDistribution(
        name,
        "gaussian",
        {"sigma2": sigma2},
        symmetric=True,
        zero_mean=True,
        moment_determinate=True,
        moment=lambda k: gaussian_moment(k) * sigma2 ** (k // 2),
        sampler=lambda rng, n: sigma * rng.standard_normal(n),
        cf=GaussianCf(sigma2),
    )


def _semicircle_target() -> TargetDistribution:
    def moment(k: int) -> Fraction:
        if k % 2:
            return Fraction(0)
        r = k // 2
        return Fraction(_catalan(r), 4**r)

    return TargetDistribution(
        "semicircle",
        "semicircle",
        {},
        symmetric=True,
        zero_mean=True,
        moment_determinate=True,
        moment=moment,
        sampler=lambda rng, n: 2.0 * rng.beta(1.5, 1.5, n) - 1.0,
        cf=BesselRatioCf("J"),
    )


def _hermite_target(p: int) -> TargetDistribution:
    poly = hermite_to_monomial(p)
    coef = np.zeros(p + 1)
    for d, c in poly.c.items():
        coef[d] = float(c)

    return TargetDistribution(
        f"H{p}",
        "H",
        {"p": p},
        symmetric=(p % 2 == 1),
        zero_mean=True,
        moment_determinate=(p in (1, 2, 4)),
        moment=lambda k: hermite_poly_moment(p, k),
        sampler=lambda rng, n: np.polynomial.polynomial.polyval(
            rng.standard_normal(n), coef
        ),
        cf=GaussianCf(1) if p == 1 else None,
    )


def _pn_target(p: int, sigma2) -> TargetDistribution:
    sigma2 = _as_fraction(sigma2)
    sigma = float(sigma2) ** 0.5
    if p == 1:
        cf = GaussianCf(sigma2)
    elif p == 2:
        cf = ReciprocalSqrtCf(sigma2)
    else:
        cf = None

    return TargetDistribution(
        f"PN:p={p},sigma2={sigma2}",
        "PN",
        {"p": p, "sigma2": sigma2},
        symmetric=True,
        zero_mean=True,
        moment=lambda k: gaussian_moment(k) ** p * sigma2 ** (k // 2),
        sampler=lambda rng, n: sigma * rng.standard_normal((p, n)).prod(axis=0),
        cf=cf,
    )


def _prr_target(s) -> TargetDistribution:
    s = _as_fraction(s)
    return TargetDistribution(
        f"PRR:s={s}",
        "PRR",
        {"s": s},
        symmetric=True,
        zero_mean=True,
    )


def _g1x_target(r, lam, sigma2) -> TargetDistribution:
    r, lam, sigma2 = _as_fraction(r), _as_fraction(lam), _as_fraction(sigma2)
    sigma = float(sigma2) ** 0.5
    rate = float(lam) ** 0.5
    return TargetDistribution(
        f"G1X:r={r},lam={lam},sigma2={sigma2}",
        "G1X",
        {"r": r, "lam": lam, "sigma2": sigma2},
        symmetric=True,
        zero_mean=True,
        sampler=lambda rng, n: (
            sigma
            * rng.standard_normal(n)
            * rng.gamma(float(r), 1.0 / rate, n)
        ),
    )


def _bg1_target(a, b, r) -> TargetDistribution:
    a, b, r = _as_fraction(a), _as_fraction(b), _as_fraction(r)
    return TargetDistribution(
        f"BG1:a={a},b={b},r={r}",
        "BG1",
        {"a": a, "b": b, "r": r},
        symmetric=False,
        zero_mean=False,
        sampler=lambda rng, n: (
            rng.beta(float(a), float(b), n) * rng.gamma(float(r), 1.0, n)
        ),
    )


def _g1g2_target(r, s, lam) -> TargetDistribution:
    r, s, lam = _as_fraction(r), _as_fraction(s), _as_fraction(lam)
    scale = 1.0 / float(lam)
    return TargetDistribution(
        f"G1G2:r={r},s={s},lam={lam}",
        "G1G2",
        {"r": r, "s": s, "lam": lam},
        symmetric=False,
        zero_mean=False,
        sampler=lambda rng, n: (
            rng.gamma(float(r), scale, n) * rng.gamma(float(s), scale, n)
        ),
    )


_ALIASES = {"N01": "gaussian"}

_HERMITE_NAME = re.compile(r"^H(\d+)$")


def target_names() -> list[str]:
    """Accepted target names; parameterised families by family name."""
    return sorted(
        [f"H{p}" for p in range(1, 9)]
        + ["gaussian", "semicircle", "PN", "PRR", "G1X", "BG1", "G1G2"]
    )


def get_target(spec: str, **params) -> TargetDistribution:
    """Fetch a target law, e.g. get_target("PN:p=4,sigma2=1").

    Parameters may be embedded after a colon or passed as keywords (keywords
    win on conflict).  Raises UnknownTarget for unknown names and
    BadParameter for invalid parameters.
    """
    base, _, inline = spec.partition(":")
    base = base.strip()
    base = _ALIASES.get(base, base)
    if inline:
        merged = _parse_params(inline)
        merged.update(params)
        params = merged
    params = {("lam" if k == "lambda" else k): v for k, v in params.items()}

    hermite = _HERMITE_NAME.match(base)
    if hermite:
        p = int(hermite.group(1))
        if p < 1:
            raise BadParameter(f"Hermite target requires p >= 1, got {p}")
        out = _hermite_target(p)
    elif base == "gaussian":
        out = _gaussian_target(_take(params, base, "sigma2", default=1, positive=True))
    elif base == "semicircle":
        out = _semicircle_target()
    elif base == "PN":
        p = _take(params, base, "p")
        sigma2 = _take(params, base, "sigma2", default=1, positive=True)
        if p.denominator != 1 or p < 1:
            raise BadParameter(f"PN requires integer p >= 1, got {p}")
        out = _pn_target(int(p), sigma2)
    elif base == "PRR":
        s = _take(params, base, "s")
        if s <= Fraction(1, 2):
            raise BadParameter(f"PRR requires s > 1/2, got {s}")
        out = _prr_target(s)
    elif base == "G1X":
        r = _take(params, base, "r", positive=True)
        lam = _take(params, base, "lam", positive=True)
        sigma2 = _take(params, base, "sigma2", default=1, positive=True)
        out = _g1x_target(r, lam, sigma2)
    elif base == "BG1":
        a = _take(params, base, "a", positive=True)
        b = _take(params, base, "b", positive=True)
        r = _take(params, base, "r", positive=True)
        out = _bg1_target(a, b, r)
    elif base == "G1G2":
        r = _take(params, base, "r", positive=True)
        s = _take(params, base, "s", positive=True)
        lam = _take(params, base, "lam", positive=True)
        out = _g1g2_target(r, s, lam)
    else:
        raise UnknownTarget(spec)

    if params:
        raise BadParameter(f"unknown parameters for {base}: {sorted(params)}")
    return out
