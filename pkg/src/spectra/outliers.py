"""Spike classification, outlier location and overlap predictions, and finite-N error bars."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import PreconditionError
from .model import PopulationModel, Spike
from .report import ValidationReport, _json_float
from .stieltjes import BulkStructure, FFunction, component_of, f_derivative, f_eval

__all__ = [
    "Settings",
    "SpikeClass",
    "SpikeClassification",
    "OutlierPrediction",
    "StickingBound",
    "default_c0",
    "critical_sigma",
    "classify_spikes",
    "predict_outliers",
    "overlap_limit",
    "nu_value",
    "overlap_error_bound",
    "projection_limit",
    "sticking_bounds",
    "nonoutlier_vector_bound",
    "generalized_nonoutlier_bound",
    "check_nonoverlap",
    "outlier_report",
    "write_outlier_report",
]


@dataclass(frozen=True)
class Settings:
    """Small constants that the theory leaves unspecified."""

    tau: float = 0.01
    eps0: float = 0.05
    eps1: float = 0.02
    C: float = 2.0
    slack: float = 3.0
    c0: float | None = None


def default_c0(B: BulkStructure) -> float:
    """One tenth of the smallest distance between consecutive components' critical points."""
    gaps = [B.x(2 * (i - 1)) - B.x(2 * i - 1) for i in range(2, B.p + 1)]
    if not gaps:
        return 0.1 * abs(B.x(1))
    return 0.1 * min(gaps)


def critical_sigma(B: BulkStructure, component: int) -> float:
    """Perturbed population value at which a spike of ``component`` detaches: ``-1/x_{2i-1}``."""
    return -1.0 / B.x(2 * component - 1)


@dataclass(frozen=True)
class SpikeClass:
    spike: Spike
    component: int
    rank: int
    is_outlier: bool
    margin: float
    relative_margin: float
    threshold: float

    @property
    def sigma_g(self) -> float:
        return self.spike.sigma_g

    @property
    def x(self) -> float:
        return -1.0 / self.spike.sigma_g


@dataclass(frozen=True)
class SpikeClassification:
    entries: tuple[SpikeClass, ...]
    p: int
    N: int | None
    eps0: float
    c0: float

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def by_index(self, base_index: int) -> SpikeClass:
        for e in self.entries:
            if e.spike.base_index == base_index:
                return e
        raise KeyError(base_index)

    def outliers(self) -> list[SpikeClass]:
        return [e for e in self.entries if e.is_outlier]

    def in_component(self, i: int) -> list[SpikeClass]:
        return sorted((e for e in self.entries if e.component == i), key=lambda e: e.rank)

    @property
    def r_per_component(self) -> list[int]:
        return [sum(1 for e in self.entries if e.component == i) for i in range(1, self.p + 1)]

    @property
    def r_plus(self) -> list[int]:
        return [sum(1 for e in self.entries if e.component == i and e.is_outlier) for i in range(1, self.p + 1)]


def classify_spikes(
    model: PopulationModel,
    B: BulkStructure,
    eps0: float = 0.05,
    c0: float | None = None,
    asymptotic: bool = False,
) -> SpikeClassification:
    """Attach each spike to a bulk component and decide whether it produces an outlier.

    A spike is an outlier when ``-1/sigma_g`` lies right of ``x_{2i-1}`` by at
    least ``N**(-1/3 + eps0)`` in units of ``|x_{2i-1}|`` and stays ``c0`` left
    of ``x_{2(i-1)}``. With ``asymptotic=True`` any strictly positive margin
    qualifies (the ``N -> infinity`` reading).
    """
    if c0 is None:
        c0 = default_c0(B)
    else:
        gaps = [B.x(2 * (i - 1)) - B.x(2 * i - 1) for i in range(2, B.p + 1)]
        if c0 <= 0 or (gaps and c0 >= min(gaps) / 2):
            raise PreconditionError(f"c0 = {c0} must lie in (0, {min(gaps) / 2 if gaps else math.inf})")
    N = None if asymptotic else model.N
    threshold = 0.0 if N is None else N ** (-1.0 / 3.0 + eps0)
    raw: list[tuple[Spike, int, bool, float, float]] = []
    for s in model.spikes:
        x = -1.0 / s.sigma_g
        i = component_of(B, x)
        right = B.x(2 * i - 1)
        margin = x - right
        rel = margin / abs(right)
        upper_ok = i == 1 or x < B.x(2 * (i - 1)) - c0
        right_ok = rel > 0.0 if N is None else rel >= threshold
        raw.append((s, i, bool(right_ok and upper_ok), margin, rel))
    entries: list[SpikeClass] = []
    for i in range(1, B.p + 1):
        members = sorted((t for t in raw if t[1] == i), key=lambda t: (-t[0].sigma_g, t[0].base_index))
        for j, (s, _, out, margin, rel) in enumerate(members, start=1):
            entries.append(SpikeClass(s, i, j, out, margin, rel, threshold))
    order = {s.base_index: k for k, s in enumerate(model.spikes)}
    entries.sort(key=lambda e: order[e.spike.base_index])
    return SpikeClassification(tuple(entries), B.p, N, eps0, c0)


@dataclass(frozen=True)
class OutlierPrediction:
    base_index: int
    sigma_g: float
    component: int
    rank: int
    is_outlier: bool
    location: float
    half_width: float
    overlap: float | None
    overlap_error: float | None
    edge_fallback: float

    def to_dict(self) -> dict[str, Any]:
        return {k: _json_float(v) if isinstance(v, float) else v for k, v in asdict(self).items()}


def overlap_limit(F: FFunction, B: BulkStructure, spike: Spike | SpikeClass | float) -> float:
    """Limiting squared cosine ``(1/sigma) f'(-1/sigma) / f(-1/sigma)`` between an outlier eigenvector and its spike."""
    if isinstance(spike, SpikeClass):
        if not spike.is_outlier:
            raise PreconditionError(f"spike {spike.sigma_g:.6g} is not an outlier")
        sigma = spike.sigma_g
    else:
        sigma = spike.sigma_g if isinstance(spike, Spike) else float(spike)
        x = -1.0 / sigma
        i = component_of(B, x)
        if x <= B.x(2 * i - 1):
            raise PreconditionError(f"spike {sigma:.6g} does not detach from component {i}")
    x = -1.0 / sigma
    return float(f_derivative(F, x, 1) / f_eval(F, x) / sigma)


def nu_value(target: SpikeClass, A: Iterable[int], spikes: Sequence[SpikeClass]) -> float:
    """Separation of ``target`` from the spikes on the other side of the partition ``A`` (base indices)."""
    A = set(A)
    inside = target.spike.base_index in A
    others = [
        s
        for s in spikes
        if s.spike.base_index != target.spike.base_index and ((s.spike.base_index in A) != inside)
    ]
    if not others:
        return math.inf
    return min(abs(target.x - s.x) for s in others)


def overlap_error_bound(
    s1: SpikeClass, s2: SpikeClass, B: BulkStructure, nu: float, N: int
) -> float:
    """Error term for ``<u_1, v_2>**2``: diagonal ``N**-1/2`` part plus ``N**-1`` terms."""
    same = s1.spike.base_index == s2.spike.base_index
    inv_nu2 = math.inf if nu == 0 else 1.0 / nu**2
    out = inv_nu2 / N
    if same:
        margin = s2.x - B.x(2 * s1.component - 1)
        if margin <= 0:
            return math.inf
        out += 1.0 / (math.sqrt(N) * math.sqrt(margin)) + 1.0 / (N * margin**2)
    return out


def predict_outliers(
    F: FFunction,
    B: BulkStructure,
    classification: SpikeClassification,
    N: int,
    C: float = 2.0,
) -> list[OutlierPrediction]:
    """Predicted locations, half-widths and overlaps for every spike."""
    eps0 = classification.eps0
    entries = list(classification)
    out: list[OutlierPrediction] = []
    for e in entries:
        edge = B.a(2 * e.component - 1)
        if e.is_outlier:
            loc = float(f_eval(F, e.x))
            hw = N ** (-0.5 + C * eps0) * math.sqrt(e.margin)
            u = overlap_limit(F, B, e)
            nu = nu_value(e, {e.spike.base_index}, entries)
            err = overlap_error_bound(e, e, B, nu, N)
        else:
            loc, hw, u, err = edge, N ** (-2.0 / 3.0 + C * eps0), None, None
        out.append(
            OutlierPrediction(e.spike.base_index, e.sigma_g, e.component, e.rank, e.is_outlier, loc, hw, u, err, edge)
        )
    return out


def projection_limit(
    w: ArrayLike,
    A: Iterable[int],
    F: FFunction,
    B: BulkStructure,
    classification: SpikeClassification,
    N: int,
) -> tuple[float, float]:
    """Limit of ``<w, P_A w>`` and its error bound.

    ``w`` holds coordinates in the population eigenbasis (length ``M``);
    ``A`` is a set of outlier base indices. The bound sums the kernel over all
    pairs of outlier spikes with ``|w_1 w_2|`` weights.
    """
    w = np.asarray(w, dtype=float)
    A = set(A)
    outl = classification.outliers()
    by_idx = {e.spike.base_index: e for e in classification}
    for a in A:
        if a not in by_idx or not by_idx[a].is_outlier:
            raise PreconditionError(f"index {a} is not an outlier spike")
    value = sum(overlap_limit(F, B, by_idx[a]) * w[a] ** 2 for a in A)
    entries = list(classification)
    nus = {e.spike.base_index: nu_value(e, A, entries) for e in outl}
    margins = {e.spike.base_index: e.x - B.x(2 * e.component - 1) for e in outl}

    bound = 0.0
    for e1 in outl:
        k1 = e1.spike.base_index
        in1 = k1 in A
        for e2 in outl:
            k2 = e2.spike.base_index
            in2 = k2 in A
            weight = abs(w[k1] * w[k2])
            if weight == 0.0:
                continue
            sep = abs(e1.x - e2.x)
            term = 0.0
            if in1 and in2:
                term += 1.0 / (margins[k1] ** 0.25 * margins[k2] ** 0.25)
            elif in1:
                term += math.sqrt(margins[k1]) / sep if sep > 0 else math.inf
            elif in2:
                term += math.sqrt(margins[k2]) / sep if sep > 0 else math.inf
            term /= math.sqrt(N)
            f1 = (0.0 if math.isinf(nus[k1]) else 1.0 / nus[k1]) + (1.0 / margins[k1] if in1 else 0.0)
            f2 = (0.0 if math.isinf(nus[k2]) else 1.0 / nus[k2]) + (1.0 / margins[k2] if in2 else 0.0)
            term += f1 * f2 / N
            bound += weight * term
    return float(value), float(bound)


@dataclass(frozen=True)
class StickingBound:
    component: int
    alpha_plus: float
    bound: float
    regime: str
    N: int
    eps1: float
    count: int

    def bound_at(self, j: int) -> float:
        """Bound on ``|mu_{i, j + r_i^+} - lambda_{i, j}|`` for the ``j``-th bulk eigenvalue."""
        if self.regime == "sticking":
            return self.bound
        k = min(j, self.count + 1 - j)
        return self.N ** (-2.0 / 3.0 + self.eps1) * max(k, 1) ** (-1.0 / 3.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "component": self.component,
            "alpha_plus": _json_float(self.alpha_plus),
            "bound": _json_float(self.bound),
            "regime": self.regime,
        }


def sticking_bounds(
    B: BulkStructure, classification: SpikeClassification, N: int, eps1: float = 0.02
) -> list[StickingBound]:
    """Per-component distance ``alpha_+`` of the attached spikes from ``x_{2i-1}`` and the resulting bound.

    The regime threshold ``N**(-1/3 + 2 eps1)`` is compared with ``alpha_+ / |x_{2i-1}|``
    so the decision does not depend on the scale of the population spectrum.
    """
    out: list[StickingBound] = []
    for i in range(1, B.p + 1):
        members = classification.in_component(i)
        right = B.x(2 * i - 1)
        alpha = min((abs(e.x - right) for e in members), default=math.inf)
        if math.isfinite(alpha) and alpha / abs(right) >= N ** (-1.0 / 3.0 + 2 * eps1):
            regime, bound = "sticking", N ** (2 * eps1) / (N * alpha)
        else:
            regime, bound = "rigidity", N ** (-2.0 / 3.0 + eps1)
        out.append(StickingBound(i, alpha, bound, regime, N, eps1, int(B.bulk_counts[i - 1])))
    return out


def nonoutlier_vector_bound(
    spike: SpikeClass, component: int, j: int, B: BulkStructure, N: int, eps1: float = 0.02
) -> float:
    """Bound on ``<v_spike, u_{l,j}>**2`` for the ``j``-th non-outlier eigenvector of component ``l``."""
    count = int(B.bulk_counts[component - 1])
    kappa = min(j, count + 1 - j) ** (2.0 / 3.0) * N ** (-2.0 / 3.0)
    dist = 1.0 / spike.sigma_g + B.x(2 * spike.component - 1)
    return N ** (6 * eps1) / (N * (kappa + dist**2))


def generalized_nonoutlier_bound(
    w: ArrayLike,
    classification: SpikeClassification,
    component: int,
    j: int,
    B: BulkStructure,
    N: int,
    eps1: float = 0.02,
) -> float:
    """Bound on ``<w, u_{l,j}>**2`` summed over outlier spike coordinates of ``w``."""
    w = np.asarray(w, dtype=float)
    return float(
        sum(
            w[e.spike.base_index] ** 2 * nonoutlier_vector_bound(e, component, j, B, N, eps1)
            for e in classification.outliers()
        )
    )


def check_nonoverlap(
    B: BulkStructure,
    classification: SpikeClassification,
    A: Iterable[int],
    N: int,
    eps0: float | None = None,
) -> ValidationReport:
    """Separation of every outlier from the other side of ``A`` against ``margin**-1/2 * N**(-1/2 + eps0)``.

    Separation and margin are both measured in units of ``|x_{2i-1}|``.
    """
    eps0 = classification.eps0 if eps0 is None else eps0
    A = set(A)
    rep = ValidationReport("nonoverlap")
    entries = list(classification)
    for e in classification.outliers():
        unit = abs(B.x(2 * e.component - 1))
        nu = nu_value(e, A, entries) / unit
        margin = e.relative_margin
        need = margin ** -0.5 * N ** (-0.5 + eps0)
        rep.add(f"nu[{e.spike.base_index}]", nu >= need, nu, need, f"component {e.component}, rank {e.rank}")
    return rep


def outlier_report(
    predictions: Sequence[OutlierPrediction], sticking: Sequence[StickingBound]
) -> list[dict[str, Any]]:
    """Per-spike records ready for JSON."""
    by_comp = {s.component: s.to_dict() for s in sticking}
    return [
        {
            "base_index": p.base_index,
            "sigma_g": p.sigma_g,
            "component": p.component,
            "rank": p.rank,
            "is_outlier": p.is_outlier,
            "predicted_location": p.location,
            "half_width": p.half_width,
            "overlap": p.overlap,
            "overlap_error": _json_float(p.overlap_error),
            "sticking": by_comp.get(p.component),
        }
        for p in predictions
    ]


def write_outlier_report(path: str | Path, records: list[dict[str, Any]]) -> None:
    Path(path).write_text(json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8")
