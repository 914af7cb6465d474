"""Population covariance models: atomic bulk spectrum plus finite-rank spikes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import linalg
from .errors import ValidationError
from .report import ValidationReport

__all__ = [
    "DEFAULT_TAU",
    "SPIKE_CAP",
    "MERGE_RTOL",
    "BulkSpectrum",
    "Spike",
    "SpikeSet",
    "PopulationModel",
    "build_bulk_from_eigenvalues",
    "build_bulk_from_atoms",
    "build_toeplitz_population",
    "attach_spikes",
    "spikes_from_sigma_g",
    "validate_assumptions",
]

DEFAULT_TAU = 0.01
SPIKE_CAP = 32
MERGE_RTOL = 1e-10


@dataclass(frozen=True)
class BulkSpectrum:
    """Atomic population spectrum.

    ``values`` holds the distinct eigenvalues in descending order,
    ``multiplicities`` how often each occurs among the ``M`` population
    eigenvalues, and ``weights = multiplicities / M``. ``eigenvalues`` is the
    full descending list, which spike base indices refer to.
    """

    values: NDArray[np.float64]
    multiplicities: NDArray[np.int64]
    eigenvalues: NDArray[np.float64]

    @property
    def M(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def weights(self) -> NDArray[np.float64]:
        return self.multiplicities / float(self.M)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))

    def __len__(self) -> int:
        return int(self.values.size)

    def expand(self) -> NDArray[np.float64]:
        """Population eigenvalues with atoms repeated by multiplicity."""
        return np.repeat(self.values, self.multiplicities)

    def atom_of(self, base_index: int) -> int:
        """Index of the atom containing population eigenvalue ``base_index``."""
        ends = np.cumsum(self.multiplicities)
        return int(np.searchsorted(ends, base_index, side="right"))

    def mass_below(self, t: float) -> float:
        """Weight of atoms in ``[0, t]``."""
        return float(self.weights[self.values <= t].sum())

    def scaled(self, s: float) -> "BulkSpectrum":
        return BulkSpectrum(self.values * s, self.multiplicities.copy(), self.eigenvalues * s)


def _merge(sorted_desc: NDArray[np.float64], rtol: float) -> tuple[NDArray, NDArray]:
    # neighbours within rtol (relative to the larger one) join the current atom
    values: list[float] = []
    counts: list[int] = []
    start = 0
    n = sorted_desc.size
    for k in range(1, n + 1):
        if k < n and sorted_desc[start] - sorted_desc[k] <= rtol * sorted_desc[start]:
            continue
        block = sorted_desc[start:k]
        values.append(float(block.mean()) if block.size > 1 else float(block[0]))
        counts.append(k - start)
        start = k
    return np.array(values), np.array(counts, dtype=np.int64)


def build_bulk_from_eigenvalues(values: ArrayLike, rtol: float = MERGE_RTOL) -> BulkSpectrum:
    """Bulk spectrum from a list of population eigenvalues (one per dimension)."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError("eigenvalue list is empty")
    bad = np.flatnonzero(~(np.isfinite(arr) & (arr > 0)))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"eigenvalue at index {i} is not positive: {arr[i]!r}")
    desc = np.sort(arr)[::-1]
    vals, counts = _merge(desc, rtol)
    return BulkSpectrum(vals, counts, np.repeat(vals, counts))


def build_bulk_from_atoms(atoms: Iterable[tuple[float, int]], rtol: float = MERGE_RTOL) -> BulkSpectrum:
    """Bulk spectrum from ``(value, multiplicity)`` pairs."""
    values: list[float] = []
    for value, mult in atoms:
        if int(mult) != mult or mult < 1:
            raise ValidationError(f"multiplicity of atom {value} must be a positive integer")
        values.extend([float(value)] * int(mult))
    return build_bulk_from_eigenvalues(values, rtol)


def build_toeplitz_population(
    rho: float, M: int, backend: str = "native"
) -> tuple[BulkSpectrum, NDArray[np.float64]]:
    """Spectrum and eigenbasis of the ``M x M`` matrix with entries ``rho**|i-j|``."""
    if not 0.0 < rho < 1.0:
        raise ValidationError(f"rho must lie in (0, 1), got {rho}")
    if M < 2:
        raise ValidationError("Toeplitz population needs M >= 2")
    dec = linalg.eigh(linalg.toeplitz(rho, M), backend=backend)
    # keep every eigenvalue as its own atom so base indices match basis columns
    bulk = build_bulk_from_eigenvalues(dec.values, rtol=0.0)
    return bulk, dec.vectors


@dataclass(frozen=True)
class Spike:
    base_index: int
    d: float
    sigma_b: float

    @property
    def sigma_g(self) -> float:
        return self.sigma_b * (1.0 + self.d)


@dataclass(frozen=True)
class SpikeSet:
    spikes: tuple[Spike, ...] = ()

    @property
    def r(self) -> int:
        return len(self.spikes)

    def __iter__(self):
        return iter(self.spikes)

    def __len__(self) -> int:
        return len(self.spikes)

    def __getitem__(self, k: int) -> Spike:
        return self.spikes[k]

    @property
    def sigma_g(self) -> NDArray[np.float64]:
        return np.array([s.sigma_g for s in self.spikes])

    @property
    def indices(self) -> list[int]:
        return [s.base_index for s in self.spikes]


def attach_spikes(
    bulk: BulkSpectrum, spikes: Sequence[tuple[int, float]], cap: int = SPIKE_CAP
) -> SpikeSet:
    """Spike set from ``(base_index, d)`` pairs; indices are 0-based into ``bulk.eigenvalues``."""
    if len(spikes) > cap:
        raise ValidationError(f"{len(spikes)} spikes exceed the cap of {cap}")
    seen: set[int] = set()
    out: list[Spike] = []
    for idx, d in spikes:
        idx = int(idx)
        d = float(d)
        if not 0 <= idx < bulk.M:
            raise ValidationError(f"spike base index {idx} outside [0, {bulk.M})")
        if not (math.isfinite(d) and d > 0):
            raise ValidationError(f"spike at index {idx} has non-positive d={d}")
        if idx in seen:
            raise ValidationError(f"duplicate spike base index {idx}")
        seen.add(idx)
        out.append(Spike(idx, d, float(bulk.eigenvalues[idx])))
    out.sort(key=lambda s: (-s.d, s.base_index))
    return SpikeSet(tuple(out))


def spikes_from_sigma_g(
    bulk: BulkSpectrum, spikes: Sequence[tuple[int, float]], cap: int = SPIKE_CAP
) -> SpikeSet:
    """Like :func:`attach_spikes` but each spike is given by its perturbed value."""
    pairs = []
    for idx, sg in spikes:
        idx = int(idx)
        if not 0 <= idx < bulk.M:
            raise ValidationError(f"spike base index {idx} outside [0, {bulk.M})")
        pairs.append((idx, float(sg) / float(bulk.eigenvalues[idx]) - 1.0))
    return attach_spikes(bulk, pairs, cap)


@dataclass(frozen=True)
class PopulationModel:
    """Bulk spectrum, spikes, sample size and an optional eigenbasis of the bulk covariance."""

    bulk: BulkSpectrum
    spikes: SpikeSet = field(default_factory=SpikeSet)
    N: int = 1
    basis: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N}")
        if self.basis is not None:
            V = np.asarray(self.basis, dtype=float)
            if V.shape != (self.M, self.M):
                raise ValidationError(f"basis has shape {V.shape}, expected {(self.M, self.M)}")
            err = float(np.max(np.abs(V.T @ V - np.eye(self.M))))
            if err > 1e-10:
                raise ValidationError(f"basis columns not orthonormal (error {err:.2e})")

    @property
    def M(self) -> int:
        return self.bulk.M

    @property
    def c_N(self) -> float:
        return self.N / self.M

    @property
    def r(self) -> int:
        return self.spikes.r

    def sigma_g_eigenvalues(self) -> NDArray[np.float64]:
        """Population eigenvalues of the spiked covariance, in bulk-index order."""
        vals = self.bulk.eigenvalues.copy()
        for s in self.spikes:
            vals[s.base_index] = s.sigma_g
        return vals

    def spike_directions(self) -> NDArray[np.float64]:
        """``M x r`` matrix whose columns are the spike eigenvectors."""
        idx = self.spikes.indices
        if self.basis is None:
            V = np.zeros((self.M, len(idx)))
            V[idx, np.arange(len(idx))] = 1.0
            return V
        return np.asarray(self.basis)[:, idx].copy()

    def with_spikes(self, spikes: SpikeSet) -> "PopulationModel":
        return PopulationModel(self.bulk, spikes, self.N, self.basis)

    def bulk_only(self) -> "PopulationModel":
        return PopulationModel(self.bulk, SpikeSet(), self.N, self.basis)


def validate_assumptions(
    model: PopulationModel, tau: float = DEFAULT_TAU, structure=None
) -> ValidationReport:
    """Check the standing bounds on the model; never raises.

    When a bulk structure is supplied, the right-side separation of each
    spike that lies right of its component is checked as well.
    """
    rep = ValidationReport("assumptions")
    c = model.c_N
    rep.add("aspect_ratio_bounds", tau <= c <= 1.0 / tau, c, tau, f"tau <= c_N <= 1/tau, c_N={c:.6g}")
    smax = float(model.bulk.values[0])
    smin = float(model.bulk.values[-1])
    rep.add("population_upper_bound", smax <= 1.0 / tau, smax, 1.0 / tau, "largest bulk eigenvalue <= 1/tau")
    rep.add("population_lower_bound", smin > tau, smin, tau, "smallest bulk eigenvalue > tau")
    low_mass = model.bulk.mass_below(tau)
    rep.add("mass_near_zero", low_mass <= 1.0 - tau, low_mass, 1.0 - tau, "bulk mass on [0, tau] <= 1 - tau")
    if model.r:
        sg = float(model.spikes.sigma_g.max())
        rep.add("spike_upper_bound", sg <= 1.0 / tau, sg, 1.0 / tau, "largest spiked eigenvalue <= 1/tau")
    rep.add("spike_count", model.r <= SPIKE_CAP, float(model.r), float(SPIKE_CAP), "r within cap")
    if structure is not None and model.r:
        from .stieltjes import FFunction, component_of

        F = FFunction(model.bulk, c)
        for s in model.spikes:
            x = -1.0 / s.sigma_g
            try:
                i = component_of(structure, x)
            except Exception as exc:  # report-style: record and move on
                rep.add(f"right_side[{s.base_index}]", False, None, tau, str(exc))
                continue
            right = structure.critical_points[2 * i - 2]
            if x <= right:
                # sub-critical spike, nothing to separate
                continue
            fx = F(x)
            if i == 1:
                rep.add(f"right_side[{s.base_index}]", True, math.inf, tau, "top component")
                continue
            left = structure.edges[2 * i - 3]
            margin = abs(fx - left) - abs(fx - structure.edges[2 * i - 2])
            rep.add(
                f"right_side[{s.base_index}]",
                margin >= tau,
                margin,
                tau,
                f"spike {s.sigma_g:.6g} on component {i}",
            )
    return rep
