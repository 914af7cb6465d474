"""Loss-specific shrinkage of outlier eigenvalues and the Frobenius oracle estimator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, PreconditionError, ValidationError
from .model import PopulationModel
from .stieltjes import BulkStructure, FFunction, component_of, edge_scales, f_derivative, f_eval, solve_m

__all__ = [
    "SHRINKERS",
    "ORACLE_LOSS",
    "ShrinkInputs",
    "ShrinkRow",
    "ShrinkagePlan",
    "OracleEstimate",
    "invert_f_outlier",
    "cosine_sq",
    "shrink_inputs",
    "apply_shrinker",
    "oracle_outlier_value",
    "oracle_bulk_values",
    "outlier_buffers",
    "detect_outliers",
    "shrink_spectrum",
    "oracle_estimate",
    "write_shrink_csv",
]

log = logging.getLogger(__name__)

ORACLE_LOSS = "FrobeniusOracle"


def _frobenius(l: float, c2: float, s2: float) -> float:
    return l * c2 + s2


def _inverse_frobenius(l: float, c2: float, s2: float) -> float:
    return l / (c2 + l * s2)


def _relative_a(l: float, c2: float, s2: float) -> float:
    return (l * c2 + l * l * s2) / (c2 + l * l * s2)


def _relative_b(l: float, c2: float, s2: float) -> float:
    # l * (l c2 + s2 / l) / (l c2 + s2) == (l^2 c2 + s2) / (l c2 + s2), arranged so c2 = 1 returns l exactly
    return l * ((l * c2 + s2 / l) / (l * c2 + s2))


def _symmetrized(l: float, c2: float, s2: float) -> float:
    D = c2 + l * s2
    return ((D * D - c2) + l * c2) / (D * D)


def _divergence(l: float, c2: float, s2: float) -> float:
    return l * math.sqrt((c2 + s2 / l) / (c2 + l * s2))


def _matusita(l: float, c2: float, s2: float) -> float:
    return ((1.0 + c2) * l + s2) / ((1.0 + c2) + l * s2)


def _frechet(l: float, c2: float, s2: float) -> float:
    t = c2 + s2 / math.sqrt(l)
    return l * (t * t)


SHRINKERS: dict[str, Callable[[float, float, float], float]] = {
    "Frobenius": _frobenius,
    "InverseFrobenius": _inverse_frobenius,
    "RelativeFrobeniusA": _relative_a,
    "RelativeFrobeniusB": _relative_b,
    "SymmetrizedRelative": _symmetrized,
    "Stein": _inverse_frobenius,
    "Entropy": _frobenius,
    "Divergence": _divergence,
    "MatusitaAffinity": _matusita,
    "Frechet": _frechet,
}


def apply_shrinker(name: str, l: float, c2: float) -> float:
    """Optimal replacement ``beta(l, c2, 1 - c2)`` under the named loss."""
    try:
        fn = SHRINKERS[name]
    except KeyError:
        raise ValidationError(f"unknown shrinker {name!r}; choose from {sorted(SHRINKERS)}") from None
    if not l > 0:
        raise DomainError(f"l must be positive, got {l}")
    if not 0.0 <= c2 <= 1.0:
        raise DomainError(f"c2 must lie in [0, 1], got {c2}")
    return float(fn(float(l), float(c2), 1.0 - float(c2)))


def invert_f_outlier(F: FFunction, B: BulkStructure, mu: float) -> float:
    """De-biased population value ``l = -1/x`` where ``f(x) = mu`` on the branch right of a component."""
    mu = float(mu)
    if not (mu > B.a(1) or any(B.a(2 * k + 1) < mu < B.a(2 * k) for k in range(1, B.p))):
        raise DomainError(f"mu = {mu!r} is not an outlier observation (not right of any component edge)")
    x = solve_m(F, mu, B).m.real
    return -1.0 / x


@dataclass(frozen=True)
class ShrinkInputs:
    mu: float
    l: float
    c2: float

    @property
    def s2(self) -> float:
        return 1.0 - self.c2


def shrink_inputs(F: FFunction, B: BulkStructure, mu: float) -> ShrinkInputs:
    """``l``, the squared cosine ``c2`` and ``s2 = 1 - c2`` for an outlier observation."""
    l = invert_f_outlier(F, B, mu)
    x = -1.0 / l
    c2 = float(f_derivative(F, x, 1) / f_eval(F, x) / l)
    if not 0.0 <= c2 <= 1.0:
        log.warning("clamping squared cosine %.3e to [0, 1] at mu=%.6g", c2, mu)
        c2 = min(max(c2, 0.0), 1.0)
    return ShrinkInputs(float(mu), float(l), c2)


def cosine_sq(F: FFunction, B: BulkStructure, mu: float) -> float:
    return shrink_inputs(F, B, mu).c2


def oracle_outlier_value(F: FFunction, B: BulkStructure, sigma_g: float) -> float:
    """Limit of ``u_i^T Sigma_g u_i`` for an outlier: ``sigma_g**2 / f(-1/sigma_g)``."""
    x = -1.0 / float(sigma_g)
    i = component_of(B, x)
    if x <= B.x(2 * i - 1):
        raise PreconditionError(f"sigma_g = {sigma_g} does not produce an outlier")
    return float(sigma_g) ** 2 / float(f_eval(F, x))


def _pad(eigs: NDArray, n: int) -> NDArray:
    if eigs.size >= n:
        return eigs[:n]
    return np.concatenate([eigs, np.zeros(n - eigs.size)])


def oracle_bulk_values(
    sample_eigs: ArrayLike,
    N: int,
    M: int | None = None,
    eta: float | None = None,
    form: str = "direct",
) -> NDArray[np.float64]:
    """Frobenius oracle values from the empirical Stieltjes transform at ``mu_i + i eta``.

    ``form="direct"`` uses the ``N``-dimensional transform and
    ``1 / (mu_i |m|^2)``; ``"m1"`` uses the ``M``-dimensional transform
    converted exactly through ``m = (1/c - 1 + z m1 / c) / z``; ``"m1_mu"``
    is the shrinkage rewrite with ``mu_i`` in place of ``z``, which differs
    by a factor ``1 + O(eta / mu)``. Missing zero eigenvalues are padded.
    """
    mu = np.sort(np.asarray(sample_eigs, dtype=float))[::-1]
    if mu.size == 0:
        raise ValidationError("eigenvalue list is empty")
    if np.any(mu <= 0):
        raise ValidationError("oracle values need positive eigenvalues")
    eta = N ** -0.5 if eta is None else float(eta)
    z = mu + 1j * eta
    if form == "direct":
        full = _pad(mu, N)
        m = (1.0 / (full[None, :] - z[:, None])).mean(axis=1)
        return 1.0 / (mu * np.abs(m) ** 2)
    if M is None:
        raise ValidationError("the m1 forms need M")
    cinv = M / N
    full = _pad(mu, M)
    m1 = (1.0 / (full[None, :] - z[:, None])).mean(axis=1)
    if form == "m1":
        m = (cinv - 1.0 + cinv * z * m1) / z
        return 1.0 / (mu * np.abs(m) ** 2)
    if form == "m1_mu":
        return mu / np.abs(1.0 - cinv - cinv * mu * m1) ** 2
    raise ValidationError(f"unknown form {form!r}")


def outlier_buffers(F: FFunction, B: BulkStructure, N: int, C: float = 2.0, eps0: float = 0.05) -> NDArray[np.float64]:
    """Per-edge detection buffer ``N**(-2/3 + C eps0) * max(1, edge scale)``."""
    return N ** (-2.0 / 3.0 + C * eps0) * np.maximum(1.0, edge_scales(F, B))


def detect_outliers(
    sample_eigs: ArrayLike, F: FFunction, B: BulkStructure, N: int, C: float = 2.0, eps0: float = 0.05
) -> NDArray[np.int64]:
    """Component index (1-based) of each eigenvalue that sits in a gap right of a component, else 0."""
    mu = np.asarray(sample_eigs, dtype=float)
    b = outlier_buffers(F, B, N, C, eps0)
    comp = np.zeros(mu.size, dtype=np.int64)
    for i in range(1, B.p + 1):
        lo = B.a(2 * i - 1) + b[2 * i - 2]
        hi = math.inf if i == 1 else B.a(2 * (i - 1)) - b[2 * i - 3]
        comp[(mu > lo) & (mu < hi)] = i
    return comp


@dataclass(frozen=True)
class ShrinkRow:
    index: int
    mu: float
    method: str
    l: float | None
    c2: float | None
    beta: float


@dataclass(frozen=True)
class ShrinkagePlan:
    loss: str
    rows: tuple[ShrinkRow, ...]

    @property
    def values(self) -> NDArray[np.float64]:
        return np.array([r.beta for r in self.rows])

    @property
    def outlier_rows(self) -> list[ShrinkRow]:
        return [r for r in self.rows if r.method == "outlier-formula"]


def _passthrough_values(model: PopulationModel, B: BulkStructure, detected: NDArray) -> NDArray:
    # bulk eigenvalues per component, with as many top entries dropped as outliers were found there
    eigs = model.bulk.eigenvalues
    comp_of_eig = np.repeat(B.atom_component, model.bulk.multiplicities)
    keep = []
    for i in range(1, B.p + 1):
        vals = eigs[comp_of_eig == i]
        keep.append(vals[int((detected == i).sum()) :])
    return np.concatenate(keep)


def shrink_spectrum(
    sample_eigs: ArrayLike,
    model: PopulationModel,
    B: BulkStructure,
    loss: str = "Frobenius",
    C: float = 2.0,
    eps0: float = 0.05,
    eta: float | None = None,
) -> ShrinkagePlan:
    """Shrink detected outliers with the loss-specific rule and fill bulk entries.

    Bulk entries receive the model's bulk eigenvalues, or the empirical
    Stieltjes oracle values when ``loss == "FrobeniusOracle"``.
    """
    if loss != ORACLE_LOSS and loss not in SHRINKERS:
        raise ValidationError(f"unknown loss {loss!r}")
    mu = np.sort(np.asarray(sample_eigs, dtype=float))[::-1]
    F = FFunction(model.bulk, model.c_N)
    N = model.N
    detected = detect_outliers(mu, F, B, N, C, eps0)
    if loss == ORACLE_LOSS:
        bulk_vals = oracle_bulk_values(mu[mu > 0], N, eta=eta)
        bulk_vals = np.concatenate([bulk_vals, np.zeros(mu.size - bulk_vals.size)])
    else:
        passthrough = _passthrough_values(model, B, detected)
    rows: list[ShrinkRow] = []
    k = 0
    for idx, m in enumerate(mu):
        if detected[idx]:
            inp = shrink_inputs(F, B, m)
            beta = inp.l**2 / m if loss == ORACLE_LOSS else apply_shrinker(loss, inp.l, inp.c2)
            rows.append(ShrinkRow(idx, float(m), "outlier-formula", inp.l, inp.c2, float(beta)))
        elif loss == ORACLE_LOSS:
            rows.append(ShrinkRow(idx, float(m), "bulk-stieltjes", None, None, float(bulk_vals[idx])))
        else:
            val = float(passthrough[k]) if k < passthrough.size else float(passthrough[-1])
            k += 1
            rows.append(ShrinkRow(idx, float(m), "bulk-passthrough", None, None, val))
    return ShrinkagePlan(loss, tuple(rows))


@dataclass(frozen=True)
class OracleEstimate:
    d_hat: NDArray[np.float64]
    method: tuple[str, ...]
    eta: float
    eigenvalue_convention: str = "mu"


def oracle_estimate(
    sample_eigs: ArrayLike, model: PopulationModel, B: BulkStructure, C: float = 2.0, eps0: float = 0.05, eta: float | None = None
) -> OracleEstimate:
    """Oracle Frobenius values: ``l(mu)**2 / mu`` on detected outliers, Stieltjes formula elsewhere."""
    plan = shrink_spectrum(sample_eigs, model, B, ORACLE_LOSS, C, eps0, eta)
    eta = model.N ** -0.5 if eta is None else eta
    return OracleEstimate(plan.values, tuple(r.method for r in plan.rows), float(eta))


def write_shrink_csv(path: str | Path, plan: ShrinkagePlan) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "mu", "method", "l", "c2", "beta"])
        for r in plan.rows:
            w.writerow(
                [
                    r.index,
                    repr(r.mu),
                    r.method,
                    "" if r.l is None else repr(r.l),
                    "" if r.c2 is None else repr(r.c2),
                    repr(r.beta),
                ]
            )
