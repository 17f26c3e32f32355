"""Atomic representing measures from flat moment data, pushforwards, and exactness checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares

from .algebra import MultiIndex, QuadraticModule, VariableSet, evaluate, monomials_up_to
from .errors import IllConditionedError, MissingSubsetError, NotFlatError, NotSubsetError
from .functional import MomentFunctional
from .matrices import RANK_TOL, equilibrate, find_flat_order, flatness, moment_matrix
from .measures import MERGE_TOL, AtomicMeasure

MOMENT_MATCH_TOL = 1e-6
NOISE_FLOOR = 1e-13
ATOM_TOL = 1e-6
DATA_EPS = 1e-15
ESCALATION = (1e-9, 1e-11, 1e-12)
EXACTNESS_TOL = 1e-8
CONTINUOUS_COMPARE_DEGREE = 6

__all__ = [
    "AtomicMeasure", "ExactnessReport", "ExactnessVerdict", "extract", "pushforward",
    "check_exactness", "check_support", "moment_mismatch", "solve_flat", "FlatSolution",
]


def extract(L: MomentFunctional, F: VariableSet, n: int, rank_tol: float = RANK_TOL,
            moment_tol: float = MOMENT_MATCH_TOL, seed: int = 0, polish: bool = True,
            noise_floor: float | None = NOISE_FLOOR, atom_tol: float | None = ATOM_TOL) -> AtomicMeasure:
    """Atomic measure with rank(M_n) atoms reproducing the moments of L on F up to degree 2n.

    Requires the truncation at order ``n`` to be flat. One variable goes
    through the Jacobi matrix of the orthogonal polynomials; several
    variables through multiplication matrices on the column space of M_n,
    diagonalized simultaneously by one real Schur form.

    The rank decision is rejected as ill-conditioned when an eigenvalue
    discarded as zero still sits above ``noise_floor`` (relative, after
    diagonal scaling): such data usually hides near-coincident atoms that a
    tighter ``rank_tol`` might resolve. Pass ``noise_floor=None`` for noisy
    tabulated data. The solve is also rejected when double-precision moment
    data cannot pin atoms and weights down to ``atom_tol``.
    """
    F = VariableSet(F)
    rep = flatness(L, F, n, rank_tol)
    if not rep.is_flat:
        raise NotFlatError(f"M_{n} on {F} has rank {rep.rank_n} but M_{n - 1} has rank {rep.rank_n_minus_1}")
    r = rep.rank_n
    if r == 0:
        raise IllConditionedError(f"moment matrix on {F} is numerically zero")
    if noise_floor is not None:
        eig = np.linalg.eigvalsh(equilibrate(moment_matrix(L, F, n).entries))
        dropped = eig[:len(eig) - r]
        if dropped.size and dropped.max() > noise_floor * max(1.0, eig.max()):
            raise IllConditionedError(
                f"rank decision on {F} at order {n} is ambiguous: discarded eigenvalue "
                f"{dropped.max() / max(1.0, eig.max()):.3g} (relative) is above the noise floor")
    if len(F) == 0:
        return AtomicMeasure(F, [((), 1.0)], validate=False)
    if len(F) == 1:
        points, weights = _jacobi_atoms(L, F.ids[0], r)
    else:
        points, weights = _multiplication_atoms(L, F, n, r, seed)
    exps = np.array([[m.exponent(i) for i in F.ids] for m in monomials_up_to(F, 2 * n)], dtype=int)
    target = np.array([L.moment(m) for m in monomials_up_to(F, 2 * n)])
    if polish:
        points, weights = _polish(points, weights, exps, target)
    mismatch = _relative_mismatch(points, weights, exps, target)
    if not np.all(np.isfinite(points)) or np.any(weights <= 0) or mismatch > moment_tol:
        raise IllConditionedError(
            f"atom solve on {F} at order {n} is ill-conditioned: relative moment mismatch {mismatch:.3g}")
    if atom_tol is not None:
        bound = forward_error_estimate(points, weights, exps, target)
        if bound > atom_tol:
            raise IllConditionedError(
                f"atoms on {F} are determined by the moment data only to about {bound:.2g}")
    mu = AtomicMeasure(F, [(tuple(p), w) for p, w in zip(points, weights)], validate=False)
    total = mu.weights.sum()
    if abs(total - 1.0) > 1e-9:
        raise IllConditionedError(f"extracted weights on {F} sum to {total!r}")
    return mu


@dataclass(frozen=True)
class FlatSolution:
    measure: AtomicMeasure
    order: int
    rank_tol: float
    flatness: tuple = ()


def solve_flat(L: MomentFunctional, F: VariableSet, max_n: int, rank_tol: float = RANK_TOL,
               escalation: Iterable[float] = ESCALATION, **kwargs) -> FlatSolution:
    """Extract at the first flat order, tightening the rank tolerance when the guard trips.

    Tolerances in ``escalation`` larger than ``rank_tol`` are skipped. The
    last error is re-raised when every tolerance fails.
    """
    F = VariableSet(F)
    tols = [rank_tol] + [t for t in escalation if t < rank_tol]
    last: Exception | None = None
    for tol in tols:
        n, reports = find_flat_order(L, F, max_n, tol)
        if n is None:
            last = NotFlatError(f"no flat truncation on {F} up to order {max_n} at rank tolerance {tol:g}")
            continue
        try:
            mu = extract(L, F, n, rank_tol=tol, **kwargs)
        except IllConditionedError as exc:
            last = exc
            continue
        return FlatSolution(mu, n, tol, tuple(reports))
    raise last


def _jacobi_atoms(L: MomentFunctional, var: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    mom = np.array([L.moment(MultiIndex.var(var, k)) for k in range(2 * r)])
    H = scipy.linalg.hankel(mom[:r], mom[r - 1:2 * r - 1])
    try:
        R = scipy.linalg.cholesky(H, lower=False)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"Hankel matrix for x{var} is not positive definite") from exc
    # last column of the (r+1)x(r+1) factor; its corner entry would be zero
    c = scipy.linalg.solve_triangular(R, mom[r:2 * r], trans="T", lower=False)
    Rx = np.hstack([R, c[:, None]])
    d = np.diag(R)
    ratio = Rx[np.arange(r), np.arange(1, r + 1)] / d
    alpha = ratio - np.concatenate([[0.0], ratio[:-1]])
    beta = d[1:] / d[:-1]
    if r == 1:
        nodes, vecs = alpha.copy(), np.ones((1, 1))
    else:
        nodes, vecs = scipy.linalg.eigh_tridiagonal(alpha, beta)
    weights = mom[0] * vecs[0, :] ** 2
    return nodes[:, None], weights


def _multiplication_atoms(L: MomentFunctional, F: VariableSet, n: int, r: int,
                          seed: int) -> tuple[np.ndarray, np.ndarray]:
    M = moment_matrix(L, F, n)
    basis = list(M.basis)
    position = {m: k for k, m in enumerate(basis)}
    k_prev = len(monomials_up_to(F, n - 1))
    s, P = np.linalg.eigh(M.entries)
    V = P[:, -r:] * np.sqrt(np.clip(s[-r:], 0.0, None))
    # pick r well-conditioned basis monomials of degree <= n-1
    _, _, piv = scipy.linalg.qr(V[:k_prev].T, pivoting=True, mode="economic")
    chosen = piv[:r]
    W = V[chosen]
    mult = []
    for i in F.ids:
        rows = [position[MultiIndex.var(i) * basis[j]] for j in chosen]
        mult.append(scipy.linalg.solve(W.T, V[rows].T).T)
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.5, 1.5, len(mult))
    lam /= lam.sum()
    N = sum(l * Ni for l, Ni in zip(lam, mult))
    T, Q = scipy.linalg.schur(N, output="real")
    if r > 1 and np.max(np.abs(np.diag(T, -1))) > 1e-8 * max(1.0, np.abs(T).max()):
        raise IllConditionedError(f"multiplication operators on {F} have complex eigenvalues")
    points = np.column_stack([np.diag(Q.T @ Ni @ Q) for Ni in mult])
    vand = np.column_stack([np.prod(points ** np.array([[m.exponent(i) for i in F.ids]]), axis=1)
                            for m in basis]).T
    weights, *_ = np.linalg.lstsq(vand, M.entries[:, 0], rcond=None)
    return points, weights


def _power_matrix(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    # P[a, k] = prod_i points[k, i] ** exps[a, i]
    return np.prod(points[None, :, :] ** exps[:, None, :], axis=2)


def _moment_jacobian(points: np.ndarray, weights: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """d(moments)/d(atoms, weights); atom coordinates first, row-major per atom."""
    k, d = points.shape
    J = np.empty((len(exps), k * d + k))
    J[:, k * d:] = _power_matrix(points, exps)
    for i in range(d):
        lowered = exps.copy()
        lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
        J[:, i:k * d:d] = _power_matrix(points, lowered) * exps[:, i:i + 1] * weights[None, :]
    return J


def forward_error_estimate(points: np.ndarray, weights: np.ndarray, exps: np.ndarray,
                           target: np.ndarray) -> float:
    """First-order bound on atom/weight error caused by double-precision moment data."""
    J = _moment_jacobian(points, weights, exps) / np.maximum(1.0, np.abs(target))[:, None]
    smin = np.linalg.svd(J, compute_uv=False)[-1]
    return DATA_EPS / smin if smin > 0 else math.inf


def _relative_mismatch(points, weights, exps, target) -> float:
    model = _power_matrix(points, exps) @ weights
    return float(np.max(np.abs(model - target) / np.maximum(1.0, np.abs(target))))


def _polish(points: np.ndarray, weights: np.ndarray, exps: np.ndarray,
            target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton refinement of atoms and weights against the scaled moment residual."""
    k, d = points.shape
    scale = np.maximum(1.0, np.abs(target))

    def unpack(z):
        return z[:k * d].reshape(k, d), z[k * d:]

    def resid(z):
        p, w = unpack(z)
        return (_power_matrix(p, exps) @ w - target) / scale

    def jac(z):
        p, w = unpack(z)
        return _moment_jacobian(p, w, exps) / scale[:, None]

    z0 = np.concatenate([points.ravel(), weights])
    if len(target) < len(z0):
        return points, weights
    try:
        sol = least_squares(resid, z0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    except (ValueError, np.linalg.LinAlgError):
        return points, weights
    if np.linalg.norm(sol.fun) <= np.linalg.norm(resid(z0)):
        return unpack(sol.x)
    return points, weights


def moment_mismatch(mu, L: MomentFunctional, degree: int) -> float:
    """Max relative moment error of ``mu`` against ``L`` on monomials up to ``degree``."""
    worst = 0.0
    for m in monomials_up_to(mu.variable_set, degree):
        target = L.moment(m)
        worst = max(worst, abs(mu.moment(m) - target) / max(1.0, abs(target)))
    return worst


def pushforward(mu, F: VariableSet, merge_tol: float = MERGE_TOL):
    F = VariableSet(F)
    if not F <= mu.variable_set:
        raise NotSubsetError(f"{F} is not a subset of {mu.variable_set}")
    return mu.pushforward(F, merge_tol)


class ExactnessVerdict(str, enum.Enum):
    EXACT = "exact"
    NOT_EXACT = "not_exact"


@dataclass(frozen=True)
class ExactnessReport:
    pairs_checked: tuple[tuple[VariableSet, VariableSet], ...]
    max_discrepancy: float
    verdict: ExactnessVerdict
    tolerance: float
    worst_pair: tuple[VariableSet, VariableSet] | None = None
    per_pair: tuple[float, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "pairs_checked": [[list(a.ids), list(b.ids)] for a, b in self.pairs_checked],
            "per_pair_discrepancy": list(self.per_pair),
            "max_discrepancy": self.max_discrepancy,
            "verdict": self.verdict.value,
            "tolerance": self.tolerance,
            "worst_pair": None if self.worst_pair is None else [list(s.ids) for s in self.worst_pair],
        }


def comparison_degree(a, b) -> int:
    """Degree up to which moments of a and b are compared.

    Two atomic measures with k and l atoms agree iff their moments agree up
    to degree k + l - 1 (interpolation on at most k + l points), so that
    degree certifies equality. Continuous marginals fall back to a fixed degree.
    """
    if isinstance(a, AtomicMeasure) and isinstance(b, AtomicMeasure):
        return max(1, len(a) + len(b) - 1)
    return CONTINUOUS_COMPARE_DEGREE


def marginal_discrepancy(small, large) -> float:
    """Max absolute moment difference between ``small`` and the pushforward of ``large``."""
    pushed = large.pushforward(small.variable_set)
    deg = comparison_degree(small, pushed)
    return max(abs(small.moment(m) - pushed.moment(m)) for m in monomials_up_to(small.variable_set, deg))


def check_exactness(family, pairs: Iterable[tuple[VariableSet, VariableSet]],
                    tol: float = EXACTNESS_TOL) -> ExactnessReport:
    """Verify pushforward compatibility on the given (F, F') pairs, F a subset of F'."""
    measures: Mapping = family.measures if hasattr(family, "measures") else family
    pairs = tuple((VariableSet(a), VariableSet(b)) for a, b in pairs)
    worst, worst_pair, per_pair = 0.0, None, []
    for small, large in pairs:
        if not small <= large:
            raise NotSubsetError(f"{small} is not a subset of {large}")
        for s in (small, large):
            if s not in measures:
                raise MissingSubsetError(f"family has no measure on {s}")
        d = marginal_discrepancy(measures[small], measures[large])
        per_pair.append(d)
        if worst_pair is None or d > worst:
            worst, worst_pair = d, (small, large)
    verdict = ExactnessVerdict.EXACT if worst <= tol else ExactnessVerdict.NOT_EXACT
    return ExactnessReport(pairs, worst, verdict, tol, worst_pair, tuple(per_pair))


def check_support(mu: AtomicMeasure, Q_F: QuadraticModule, tol: float = 1e-9) -> bool:
    """True iff every atom satisfies g >= -tol for every generator."""
    for point, _ in mu.atom_dicts():
        if not all(evaluate(g, point) >= -tol for g in Q_F.generators):
            return False
    return True
