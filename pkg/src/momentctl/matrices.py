"""Moment and localizing matrices and their PSD / rank diagnostics."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .algebra import MultiIndex, Polynomial, VariableSet, monomials_up_to, support
from .errors import DegreeExceededError
from .functional import MomentFunctional

PSD_TOL = 1e-8
RANK_TOL = 1e-7


class PsdVerdict(str, enum.Enum):
    PSD = "psd"
    NOT_PSD = "not_psd"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class MomentMatrix:
    basis: tuple[MultiIndex, ...]
    entries: np.ndarray
    shift: Polynomial
    order: int
    variables: VariableSet

    @property
    def dim(self) -> int:
        return len(self.basis)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        labels = [str(m) for m in self.basis]
        writer.writerow([""] + labels)
        for label, row in zip(labels, self.entries):
            writer.writerow([label] + [repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class PsdReport:
    min_eigenvalue: float
    matrix_norm: float
    verdict: PsdVerdict
    tolerance_used: float

    @property
    def passed(self) -> bool:
        return self.verdict is not PsdVerdict.NOT_PSD

    def to_json(self) -> dict:
        return {"min_eigenvalue": self.min_eigenvalue, "matrix_norm": self.matrix_norm,
                "verdict": self.verdict.value, "tolerance_used": self.tolerance_used}


@dataclass(frozen=True)
class FlatnessReport:
    order: int
    rank_n: int
    rank_n_minus_1: int
    is_flat: bool
    rank_tolerance: float

    def to_json(self) -> dict:
        return {"order": self.order, "rank_n": self.rank_n, "rank_n_minus_1": self.rank_n_minus_1,
                "is_flat": self.is_flat, "rank_tolerance": self.rank_tolerance}


def moment_matrix(L: MomentFunctional, F: VariableSet, n: int, g: Polynomial | None = None) -> MomentMatrix:
    """Localizing matrix of ``g`` at order ``n``: entries L(x^u x^v g) over monomials of degree <= n.

    With ``g`` omitted (or 1) this is the plain moment matrix M_n(L restricted to F).
    """
    F = VariableSet(F)
    g = Polynomial.constant(1.0) if g is None else g
    if not support(g) <= F:
        raise ValueError(f"shift polynomial {g} is not supported in {F}")
    needed = 2 * n + g.degree
    if needed > L.available_degree:
        raise DegreeExceededError(needed, int(L.available_degree))
    basis = tuple(monomials_up_to(F, n))
    k = len(basis)
    M = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            uv = basis[a] * basis[b]
            val = math.fsum(c * L.moment(uv * m) for m, c in g.items())
            M[a, b] = M[b, a] = val
    return MomentMatrix(basis, M, g, n, F)


def _eigvalsh(entries: np.ndarray) -> np.ndarray:
    if entries.size == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(entries)):
        raise FloatingPointError("matrix has non-finite entries")
    return np.linalg.eigvalsh(entries)


def psd_check(M: MomentMatrix | np.ndarray, tol: float = PSD_TOL) -> PsdReport:
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    entries = M.entries if isinstance(M, MomentMatrix) else np.asarray(M, dtype=float)
    eig = _eigvalsh(entries)
    lam_min = float(eig[0]) if eig.size else 0.0
    norm = float(np.max(np.abs(eig))) if eig.size else 0.0
    scale = tol * max(1.0, norm)
    if lam_min < -scale:
        verdict = PsdVerdict.NOT_PSD
    elif abs(lam_min) < scale:
        verdict = PsdVerdict.MARGINAL
    else:
        verdict = PsdVerdict.PSD
    return PsdReport(lam_min, norm, verdict, tol)


def equilibrate(entries: np.ndarray) -> np.ndarray:
    """Symmetric diagonal scaling D^-1/2 M D^-1/2; zero diagonal entries are left unscaled.

    Congruence by a positive diagonal preserves rank and inertia, and it
    removes the monomial-scale spread that makes raw Hankel spectra useless
    for rank decisions.
    """
    d = np.diag(entries).copy()
    d[d <= 0] = 1.0
    s = 1.0 / np.sqrt(d)
    return entries * s[:, None] * s[None, :]


def numerical_rank(entries: np.ndarray, tol: float = RANK_TOL) -> int:
    eig = _eigvalsh(entries)
    if not eig.size:
        return 0
    norm = float(np.max(np.abs(eig)))
    return int(np.sum(eig > tol * max(1.0, norm)))


def flatness(L: MomentFunctional, F: VariableSet, n: int, rank_tol: float = RANK_TOL) -> FlatnessReport:
    """Compare rank M_n with rank of its leading block M_{n-1}.

    Both ranks use the same threshold, scaled by the norm of M_n, so the
    comparison is not skewed by the smaller block having a smaller norm.
    """
    if n < 1:
        raise ValueError("flatness needs n >= 1")
    M = moment_matrix(L, F, n)
    k_prev = len(monomials_up_to(VariableSet(F), n - 1))
    S = equilibrate(M.entries)
    eig_n = _eigvalsh(S)
    eig_p = _eigvalsh(S[:k_prev, :k_prev])
    thresh = rank_tol * max(1.0, float(np.max(np.abs(eig_n))))
    r_n = int(np.sum(eig_n > thresh))
    r_p = int(np.sum(eig_p > thresh))
    return FlatnessReport(n, r_n, r_p, r_n == r_p, rank_tol)


def find_flat_order(L: MomentFunctional, F: VariableSet, max_n: int,
                    rank_tol: float = RANK_TOL) -> tuple[int | None, list[FlatnessReport]]:
    """Smallest n <= max_n with a flat truncation, plus the reports examined on the way."""
    reports = []
    for n in range(1, max_n + 1):
        if 2 * n > L.available_degree:
            break
        rep = flatness(L, F, n, rank_tol)
        reports.append(rep)
        if rep.is_flat:
            return n, reports
    return None, reports
