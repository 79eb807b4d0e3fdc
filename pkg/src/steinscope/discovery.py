"""Exhaustive search for polynomial Stein operators by exact linear algebra.

A candidate operator S = sum a_{i,j} y^i D^j with coefficient degree <= m
and derivative order <= T annihilates a target in the moment sense iff
E[S y^k] = 0 for every k >= 0.  Each k is one homogeneous linear
constraint on the (m+1)(T+1) unknown coefficients:

    sum_{i,j} a_{i,j} ff(k, j) mu(k + i - j) = 0,

with ff the falling factorial (zero for j > k, so no negative moment is
ever requested) and mu the exact moment oracle.  Truncating to k < K
gives a K x (m+1)(T+1) rational matrix whose nullspace contains every
operator of this shape that annihilates the law; whether K constraints
already pin that nullspace down is checked by stabilisation: the system
is re-solved with eight extra rows, and K is raised until the dimension
stops moving.  The trail of (K, dimension) pairs is kept on the problem
object so any K-sensitivity is surfaced, never hidden.

The elimination is fraction-free (Bareiss): each row is first cleared to
a common integer denominator, and every update divides exactly by the
previous pivot, so all intermediate entries are integers (minors of the
original matrix).  Moment matrices for sixth-order Hermite targets have
entries with hundreds of digits; floating point is unusable there, and
plain Fraction elimination wastes most of its time normalising gcd's.
Back-substitution for the nullspace vectors is then done over Fractions,
where the numbers are small.
"""

from fractions import Fraction
from math import gcd, lcm

from .algebra import _as_fraction, falling_factorial
from .operators import SteinOperator

__all__ = [
    "DiscoveryProblem",
    "OracleTooShort",
    "canonicalise",
    "find_stein_operators",
]


class OracleTooShort(ValueError):
    """The moment oracle cannot supply a required order."""


class DiscoveryProblem:
    """Search space for operators annihilating a target's moments.

    ``oracle`` may be an object with an exact ``moment`` method, a bare
    callable k -> moment, or a finite sequence [mu_0, mu_1, ...] (which
    raises OracleTooShort when the search needs more than it holds).
    ``T`` bounds the derivative order, ``m`` the coefficient degree in y,
    and ``K`` the number of moment constraints; the default gives 16 rows
    of slack over the (T+1)(m+1) unknowns.

    After ``find_stein_operators`` runs, ``effective_K`` holds the
    constraint count at which the nullspace stabilised and
    ``dimension_trail`` the (K, dimension) pairs visited along the way.
    """

    __slots__ = ("oracle", "T", "m", "K", "effective_K", "dimension_trail",
                 "_moment")

    def __init__(self, oracle, T: int, m: int, K: int | None = None):
        self.T = int(T)
        self.m = int(m)
        if self.T < 0 or self.m < 0:
            raise ValueError("derivative order and degree must be >= 0")
        unknowns = (self.T + 1) * (self.m + 1)
        self.K = unknowns + 16 if K is None else int(K)
        if self.K < unknowns:
            raise ValueError(
                f"K = {self.K} constraints cannot pin {unknowns} unknowns")
        self.oracle = oracle
        self.effective_K = None
        self.dimension_trail = []
        if hasattr(oracle, "moment"):
            self._moment = oracle.moment
        elif callable(oracle):
            self._moment = oracle
        else:
            seq = [_as_fraction(v) for v in oracle]

            def from_sequence(k: int, _seq=seq):
                if k >= len(_seq):
                    raise OracleTooShort(
                        f"moment of order {k} required, but the oracle "
                        f"ends at order {len(_seq) - 1}")
                return _seq[k]

            self._moment = from_sequence

    def moment(self, k: int) -> Fraction:
        return _as_fraction(self._moment(k))

    def columns(self) -> list[tuple[int, int]]:
        """Unknown coefficient slots (i, j), i.e. y^i D^j, in (i, j)-lex order."""
        return [(i, j) for i in range(self.m + 1) for j in range(self.T + 1)]


def _constraint_matrix(prob: DiscoveryProblem, K: int) -> list[list[Fraction]]:
    cols = prob.columns()
    rows = []
    for k in range(K):
        row = []
        for i, j in cols:
            ff = falling_factorial(k, j)
            row.append(ff * prob.moment(k + i - j) if ff else Fraction(0))
        rows.append(row)
    return rows


def _integer_rows(rows: list[list[Fraction]]) -> list[list[int]]:
    out = []
    for row in rows:
        scale = lcm(*(v.denominator for v in row)) if row else 1
        out.append([int(v * scale) for v in row])
    return out


def _bareiss_echelon(rows: list[list[int]], ncols: int):
    """Fraction-free row echelon form; returns (echelon rows, pivot cols)."""
    rows = [row[:] for row in rows]
    pivots = []
    r = 0
    prev = 1
    for c in range(ncols):
        pivot_row = next(
            (p for p in range(r, len(rows)) if rows[p][c]), None)
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        pivot = rows[r][c]
        for q in range(r + 1, len(rows)):
            if not any(rows[q][c:]):
                continue
            factor = rows[q][c]
            for cc in range(ncols):
                rows[q][cc] = (rows[q][cc] * pivot - factor * rows[r][cc]) // prev
        pivots.append(c)
        prev = pivot
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def _nullspace(rows: list[list[Fraction]], ncols: int) -> list[list[Fraction]]:
    """Exact nullspace basis, one vector per free column."""
    echelon, pivots = _bareiss_echelon(_integer_rows(rows), ncols)
    pivot_set = set(pivots)
    basis = []
    for free in range(ncols):
        if free in pivot_set:
            continue
        v = [Fraction(0)] * ncols
        v[free] = Fraction(1)
        for r in reversed(range(len(echelon))):
            c = pivots[r]
            s = sum(
                (echelon[r][cc] * v[cc] for cc in range(c + 1, ncols) if v[cc]),
                Fraction(0),
            )
            v[c] = -s / echelon[r][c]
        basis.append(v)
    return basis


def _primitive(row: list[Fraction]) -> list[Fraction]:
    """Scale to coprime integers with the first nonzero entry positive."""
    nonzero = [v for v in row if v]
    if not nonzero:
        return row
    scale = Fraction(lcm(*(v.denominator for v in nonzero)))
    ints = [v * scale for v in row]
    g = 0
    for v in ints:
        g = gcd(g, int(v))
    ints = [v / g for v in ints]
    first = next(v for v in ints if v)
    if first < 0:
        ints = [-v for v in ints]
    return ints


def canonicalise(basis: list[SteinOperator]) -> list[SteinOperator]:
    """Deterministic representatives of the span of ``basis``.

    Coefficient vectors (columns in (i, j)-lex order over all slots the
    basis touches) are put in reduced row echelon form, dependent members
    are dropped, and each survivor is rescaled to coprime integers with a
    positive leading coefficient.  Two bases of the same span therefore
    canonicalise to the same list, which is how the tests decide span
    membership and equality.
    """
    if not basis:
        return []
    keys = sorted({key for op in basis for key in op.a})
    rows = [[Fraction(op.a.get(key, 0)) for key in keys] for op in basis]
    ncols = len(keys)
    # Plain Fraction RREF: these matrices are tiny (one row per operator).
    r = 0
    pivots = []
    for c in range(ncols):
        pivot_row = next((p for p in range(r, len(rows)) if rows[p][c]), None)
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [v * inv for v in rows[r]]
        for q in range(len(rows)):
            if q != r and rows[q][c]:
                f = rows[q][c]
                rows[q] = [a - f * b for a, b in zip(rows[q], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    out = []
    for row in rows[:r]:
        prim = _primitive(row)
        out.append(SteinOperator(
            {key: v for key, v in zip(keys, prim) if v}))
    return out


def find_stein_operators(prob: DiscoveryProblem) -> list[SteinOperator]:
    """All operators of shape (T, m) annihilating the target's moments.

    Solves the K-row constraint system exactly, then re-solves with eight
    extra rows; since constraints only accumulate, the nullspace can only
    shrink, so equal dimensions mean equal spans.  If the dimension drops,
    K is raised and the check repeats until it holds.  Returns the
    canonicalised basis (possibly empty); the visited (K, dimension)
    pairs are recorded on ``prob.dimension_trail`` and the stabilised K
    on ``prob.effective_K``.
    """
    ncols = (prob.T + 1) * (prob.m + 1)
    K = prob.K
    prob.dimension_trail = []
    vectors = _nullspace(_constraint_matrix(prob, K), ncols)
    prob.dimension_trail.append((K, len(vectors)))
    while True:
        check = _nullspace(_constraint_matrix(prob, K + 8), ncols)
        prob.dimension_trail.append((K + 8, len(check)))
        if len(check) == len(vectors):
            break
        K += 8
        vectors = check
    prob.effective_K = K
    cols = prob.columns()
    ops = [
        SteinOperator({cols[idx]: v for idx, v in enumerate(vec) if v})
        for vec in vectors
    ]
    return canonicalise(ops)
