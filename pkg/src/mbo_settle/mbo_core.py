"""Quadratic objectives over mixed binary/continuous variables.

An objective is stored as a single quadratic form jointly in a binary vector
``x`` and a continuous vector ``y``::

    f(x, y) = x'Qxx x + x'Qxy y + y'Qyy y + qx'x + qy'y + c0

For a fixed ``y`` this is a QUBO with ``A = Qxx``, ``b = qx + Qxy y`` and
``c = y'Qyy y + qy'y + c0``. All evaluation happens in minimization form;
a ``maximize`` objective is negated when it is evaluated or transformed.

Bit convention used throughout the package: bit ``i`` of a basis index is
variable ``x_{i+1}`` (qubit ``i``), and bitstrings are printed ``x_1 x_2 ... x_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


class DomainError(ValueError):
    """A continuous point lies outside its feasible box."""


def _as_matrix(a, shape: tuple[int, int], name: str) -> np.ndarray:
    if a is None:
        return np.zeros(shape)
    arr = np.array(a, dtype=float)
    if arr.size == 0 and shape[0] * shape[1] == 0:
        return np.zeros(shape)
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def _as_vector(a, size: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros(size)
    arr = np.array(a, dtype=float).ravel()
    if arr.size != size:
        raise ValueError(f"{name} has length {arr.size}, expected {size}")
    return arr


@dataclass(frozen=True, eq=False)
class JointQuadratic:
    """Quadratic objective jointly in binary ``x`` (length n) and continuous ``y`` (length m)."""

    n: int
    m: int = 0
    Qxx: np.ndarray = None
    Qxy: np.ndarray = None
    Qyy: np.ndarray = None
    qx: np.ndarray = None
    qy: np.ndarray = None
    c0: float = 0.0
    sense: str = MINIMIZE

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("dimensions must be nonnegative")
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")
        n, m = self.n, self.m
        values = {
            "Qxx": _as_matrix(self.Qxx, (n, n), "Qxx"),
            "Qxy": _as_matrix(self.Qxy, (n, m), "Qxy"),
            "Qyy": _as_matrix(self.Qyy, (m, m), "Qyy"),
            "qx": _as_vector(self.qx, n, "qx"),
            "qy": _as_vector(self.qy, m, "qy"),
        }
        for name, arr in values.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        c0 = float(self.c0)
        if not np.isfinite(c0):
            raise ValueError("c0 must be finite")
        object.__setattr__(self, "c0", c0)

    @classmethod
    def qubo(cls, A, b=None, c: float = 0.0, sense: str = MINIMIZE) -> JointQuadratic:
        A = np.asarray(A, dtype=float)
        return cls(n=A.shape[0], m=0, Qxx=A, qx=b, c0=c, sense=sense)

    def minimization_form(self) -> JointQuadratic:
        """Return an equivalent objective with ``sense == "minimize"``."""
        if self.sense == MINIMIZE:
            return self
        return JointQuadratic(
            self.n, self.m, -self.Qxx, -self.Qxy, -self.Qyy, -self.qx, -self.qy, -self.c0, MINIMIZE
        )

    def negated(self) -> JointQuadratic:
        """The same coefficients negated, with the opposite sense."""
        other = MINIMIZE if self.sense == MAXIMIZE else MAXIMIZE
        return JointQuadratic(
            self.n, self.m, -self.Qxx, -self.Qxy, -self.Qyy, -self.qx, -self.qy, -self.c0, other
        )

    def value(self, x, y=()) -> float:
        """Objective value in the objective's own sense."""
        v = eval_joint(self, x, y)
        return -v if self.sense == MAXIMIZE else v

    def qubo_coefficients(self, y=()) -> tuple[np.ndarray, np.ndarray, float]:
        """``(A, b, c)`` of the minimization-form QUBO at fixed ``y``."""
        mf = self.minimization_form()
        y = _check_y(mf, y)
        b = mf.qx + mf.Qxy @ y
        c = float(y @ mf.Qyy @ y + mf.qy @ y + mf.c0)
        return mf.Qxx, b, c

    def energies(self, y=()) -> np.ndarray:
        """Minimization-form values for every basis index ``0 .. 2**n - 1``."""
        A, b, c = self.qubo_coefficients(y)
        X = bit_matrix(self.n)
        return np.einsum("ki,ij,kj->k", X, A, X) + X @ b + c


def _check_y(jq: JointQuadratic, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != jq.m:
        raise ValueError(f"y has length {y.size}, expected {jq.m}")
    return y


def _check_x(jq: JointQuadratic, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != jq.n:
        raise ValueError(f"x has length {x.size}, expected {jq.n}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("x must be a 0/1 vector")
    return x


def eval_joint(jq: JointQuadratic, x, y=()) -> float:
    """Evaluate ``jq`` at ``(x, y)`` in minimization form."""
    mf = jq.minimization_form()
    x = _check_x(mf, x)
    y = _check_y(mf, y)
    return float(
        x @ mf.Qxx @ x + x @ mf.Qxy @ y + y @ mf.Qyy @ y + mf.qx @ x + mf.qy @ y + mf.c0
    )


@dataclass(frozen=True)
class LinearRelation:
    """``a . y  (>= | ==)  beta``."""

    a: tuple[float, ...]
    beta: float
    relation: str = ">="

    def __post_init__(self):
        if self.relation not in (">=", "=="):
            raise ValueError(f"relation must be '>=' or '==', got {self.relation!r}")

    def residual(self, y) -> float:
        return float(np.dot(self.a, y) - self.beta)

    def violation(self, y) -> float:
        r = self.residual(y)
        return abs(r) if self.relation == "==" else max(0.0, -r)


@dataclass(frozen=True)
class ContinuousDomain:
    """Box bounds plus linear relations on the continuous variables."""

    m: int
    lower: tuple[float, ...] = None
    upper: tuple[float, ...] = None
    relations: tuple[LinearRelation, ...] = ()

    def __post_init__(self):
        lower = (-np.inf,) * self.m if self.lower is None else tuple(float(v) for v in self.lower)
        upper = (np.inf,) * self.m if self.upper is None else tuple(float(v) for v in self.upper)
        if len(lower) != self.m or len(upper) != self.m:
            raise ValueError("bound vectors must have length m")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise ValueError("lower bound exceeds upper bound")
        for rel in self.relations:
            if len(rel.a) != self.m:
                raise ValueError("relation coefficient vector must have length m")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "relations", tuple(self.relations))

    def contains(self, y, tol: float = 1e-6) -> bool:
        y = np.asarray(y, dtype=float)
        if np.any(y < np.array(self.lower)) or np.any(y > np.array(self.upper)):
            return False
        return all(rel.violation(y) <= tol for rel in self.relations)

    def lift(self, k: int) -> ContinuousDomain:
        """Prepend ``k`` unbounded, unconstrained coordinates."""
        return ContinuousDomain(
            self.m + k,
            (-np.inf,) * k + self.lower,
            (np.inf,) * k + self.upper,
            tuple(
                LinearRelation((0.0,) * k + tuple(rel.a), rel.beta, rel.relation)
                for rel in self.relations
            ),
        )


@dataclass(frozen=True)
class LinearEqualityPenalty:
    """``lam * (u . x + U . y + v)**2``."""

    u: tuple[float, ...]
    U: tuple[float, ...]
    v: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"penalty weight must be positive, got {self.lam}")
        object.__setattr__(self, "u", tuple(float(t) for t in self.u))
        object.__setattr__(self, "U", tuple(float(t) for t in self.U))

    def residual(self, x, y=()) -> float:
        return float(np.dot(self.u, x) + np.dot(self.U, y) + self.v)

    def value(self, x, y=()) -> float:
        return self.lam * self.residual(x, y) ** 2


def add_penalty(jq: JointQuadratic, p: LinearEqualityPenalty) -> JointQuadratic:
    """Expand ``p`` into the coefficients of ``jq`` (result is in minimization form).

    ``x_i**2`` is replaced by ``x_i``, so the squared binary terms land on the
    linear coefficients rather than on the diagonal of ``Qxx``.
    """
    mf = jq.minimization_form()
    u = np.asarray(p.u, dtype=float)
    U = np.asarray(p.U, dtype=float)
    if u.size != mf.n or U.size != mf.m:
        raise ValueError(
            f"penalty has |u|={u.size}, |U|={U.size}; objective has n={mf.n}, m={mf.m}"
        )
    lam, v = p.lam, float(p.v)
    uu = np.outer(u, u)
    diag = np.diag(uu).copy()
    np.fill_diagonal(uu, 0.0)
    return JointQuadratic(
        n=mf.n,
        m=mf.m,
        Qxx=mf.Qxx + lam * uu,
        Qxy=mf.Qxy + 2 * lam * np.outer(u, U),
        Qyy=mf.Qyy + lam * np.outer(U, U),
        qx=mf.qx + lam * (diag + 2 * v * u),
        qy=mf.qy + 2 * lam * v * U,
        c0=mf.c0 + lam * v * v,
        sense=MINIMIZE,
    )


def fix_continuous(jq: JointQuadratic, domain: ContinuousDomain | None, y) -> JointQuadratic:
    """The QUBO obtained by substituting a fixed ``y`` (raises ``DomainError`` outside the box)."""
    y = _check_y(jq, y)
    if domain is not None:
        if domain.m != jq.m:
            raise ValueError("domain dimension does not match objective")
        if np.any(y < np.array(domain.lower)) or np.any(y > np.array(domain.upper)):
            raise DomainError(f"y={y.tolist()} lies outside the domain bounds")
    if jq.m == 0:
        return jq
    A, b, c = jq.qubo_coefficients(y)
    return JointQuadratic.qubo(A, b, c)


def bit_matrix(n: int) -> np.ndarray:
    """Row ``k`` holds the bits of basis index ``k`` (column ``i`` is ``x_{i+1}``)."""
    idx = np.arange(2**n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(float)


def bitstring(index: int, n: int) -> str:
    return "".join(str((index >> q) & 1) for q in range(n))


def bitstring_index(bits: str | Sequence[int]) -> int:
    return sum(int(b) << q for q, b in enumerate(bits))


@dataclass(frozen=True, eq=False)
class DiagonalIsing:
    """Diagonal Hamiltonian: ``offset + sum h_i z_i + sum_{i<j} J_ij z_i z_j``, ``x_i = (1 - z_i)/2``."""

    n: int
    energies: np.ndarray
    offset: float = 0.0
    h: np.ndarray = field(default=None)
    J: np.ndarray = field(default=None)

    def energy(self, x) -> float:
        return float(self.energies[bitstring_index(x)])

    def reconstruct(self) -> np.ndarray:
        """Energies recomputed from the coefficient lists."""
        Z = 1.0 - 2.0 * bit_matrix(self.n)
        return self.offset + Z @ self.h + np.einsum("ki,ij,kj->k", Z, self.J, Z)


def to_ising(qubo: JointQuadratic) -> DiagonalIsing:
    if qubo.m != 0:
        raise ValueError("to_ising needs a QUBO (m == 0); call fix_continuous first")
    A, b, c = qubo.qubo_coefficients()
    n = qubo.n
    off = A - np.diag(np.diag(A))
    sym = off + off.T
    offset = c + (np.trace(A) + b.sum()) / 2 + off.sum() / 4
    h = -(np.diag(A) + b) / 2 - sym.sum(axis=1) / 4
    J = np.triu(sym, 1) / 4
    energies = qubo.energies()
    energies.setflags(write=False)
    return DiagonalIsing(n, energies, float(offset), h, J)


@dataclass(frozen=True, eq=False)
class MBOProblem:
    """A penalized mixed-binary problem plus what is needed to complete its slacks.

    ``objective`` is the full penalized objective (minimization form) and
    ``base`` the objective without penalty terms, kept in its original sense.
    ``slack_index[k]`` is the continuous coordinate acting as slack in
    ``penalties[k]`` (or ``None``); ``limit_groups`` describe variable limits
    tied together by a single pool relation.
    """

    objective: JointQuadratic
    domain: ContinuousDomain
    base: JointQuadratic
    penalties: tuple[LinearEqualityPenalty, ...] = ()
    slack_index: tuple[int | None, ...] = ()
    limit_groups: tuple[LimitGroup, ...] = ()
    labels: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def m(self) -> int:
        return self.objective.m

    @classmethod
    def from_qubo(cls, qubo: JointQuadratic) -> MBOProblem:
        return cls(qubo.minimization_form(), ContinuousDomain(0), qubo)

    @classmethod
    def build(
        cls,
        base: JointQuadratic,
        domain: ContinuousDomain,
        penalties: Sequence[LinearEqualityPenalty],
        slack_index: Sequence[int | None],
        limit_groups: Sequence[LimitGroup] = (),
        labels: Sequence[str] = (),
    ) -> MBOProblem:
        obj = base.minimization_form()
        for p in penalties:
            obj = add_penalty(obj, p)
        return cls(obj, domain, base, tuple(penalties), tuple(slack_index), tuple(limit_groups), tuple(labels))


@dataclass(frozen=True)
class LimitGroup:
    """Variable limits ``l_a`` sharing one pool relation ``r . l (>= | ==) p``.

    ``rows[a]`` is the penalty row in which ``l_a`` enters with coefficient -1
    (next to that row's slack, also with coefficient -1).
    """

    variables: tuple[int, ...]
    rows: tuple[int, ...]
    exchange: tuple[float, ...]
    pool: float
    relation: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
