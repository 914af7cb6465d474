"""Monte Carlo harness: coupled spiked/unspiked sample covariances and theorem checks."""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import linalg
from .errors import ValidationError
from .model import PopulationModel
from .outliers import OutlierPrediction, SpikeClassification, StickingBound
from .report import ValidationReport
from .shrinkage import detect_outliers
from .stieltjes import BulkStructure, FFunction

__all__ = [
    "LAWS",
    "SimulationConfig",
    "SimulationResult",
    "SpikeSummary",
    "draw_X",
    "replicate_rngs",
    "run",
    "component_offsets",
    "midpoint_labels",
    "interlacing_violations",
    "summarize_spikes",
    "verify_theorems",
    "rigidity_check",
    "freq_tol",
    "write_simulation_csv",
]

LAWS = ("gaussian", "rademacher", "uniform")


def draw_X(M: int, N: int, law: str, rng: np.random.Generator) -> NDArray[np.float64]:
    """``M x N`` matrix of i.i.d. standardized entries divided by ``sqrt(N)``."""
    if law == "gaussian":
        q = rng.standard_normal((M, N))
    elif law == "rademacher":
        q = 2.0 * rng.integers(0, 2, size=(M, N)).astype(float) - 1.0
    elif law == "uniform":
        r3 = math.sqrt(3.0)
        q = rng.uniform(-r3, r3, size=(M, N))
    else:
        raise ValidationError(f"unknown entry law {law!r}; choose from {LAWS}")
    return q / math.sqrt(N)


def replicate_rngs(seed: int, replicates: int) -> list[np.random.Generator]:
    """One Philox stream per replicate, spawned from a single seed sequence."""
    children = np.random.SeedSequence(int(seed)).spawn(replicates)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass(frozen=True)
class SimulationConfig:
    model: PopulationModel
    replicates: int = 50
    seed: int = 0
    entry_law: str = "gaussian"
    coupled: bool = True
    backend: str = "lapack"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.entry_law not in LAWS:
            raise ValidationError(f"unknown entry law {self.entry_law!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Per-replicate nontrivial eigenvalues of the spiked (``mu``) and bulk (``lam``) samples.

    ``overlaps[r, s, k]`` is the squared overlap between spike direction ``s``
    and the ``k``-th eigenvector of the spiked sample covariance.
    """

    config: SimulationConfig
    mu: NDArray[np.float64]
    lam: NDArray[np.float64]
    overlaps: NDArray[np.float64]
    labels: NDArray[np.int64]
    label_mismatch: NDArray[np.int64]

    @property
    def K(self) -> int:
        return int(self.mu.shape[1])

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.mu, self.lam, self.overlaps, self.labels, self.label_mismatch):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _sqrt_factor(model: PopulationModel, values: NDArray) -> NDArray | None:
    if model.basis is None:
        return None
    V = np.asarray(model.basis)
    return (V * np.sqrt(values)) @ V.T


def _scale(values: NDArray, S: NDArray | None, X: NDArray) -> NDArray:
    if S is None:
        return np.sqrt(values)[:, None] * X
    return S @ X


def component_offsets(B: BulkStructure) -> NDArray[np.int64]:
    """``s_i = N_1 + ... + N_{i-1}`` for each component, as a length-``p`` array."""
    return np.concatenate([[0], np.cumsum(B.bulk_counts)[:-1]]).astype(np.int64)


def midpoint_labels(values: NDArray, B: BulkStructure) -> NDArray[np.int64]:
    """Component of each eigenvalue using midpoints of the spectral gaps as separators."""
    cuts = [(B.a(2 * i) + B.a(2 * i + 1)) / 2.0 for i in range(1, B.p)]
    return 1 + np.sum(np.asarray(values)[:, None] < np.asarray(cuts)[None, :], axis=1).astype(np.int64)


def _count_labels(B: BulkStructure, K: int) -> NDArray[np.int64]:
    labels = np.repeat(np.arange(1, B.p + 1), B.bulk_counts)
    if labels.size < K:
        labels = np.concatenate([labels, np.full(K - labels.size, B.p)])
    return labels[:K].astype(np.int64)


def _one(
    config: SimulationConfig,
    rng: np.random.Generator,
    Sg: NDArray | None,
    Sb: NDArray | None,
    spikes_dir: NDArray,
    K: int,
) -> tuple[NDArray, NDArray, NDArray]:
    model = config.model
    M, N = model.M, model.N
    sg = model.sigma_g_eigenvalues()
    sb = model.bulk.eigenvalues
    X = draw_X(M, N, config.entry_law, rng)
    Yg = _scale(sg, Sg, X)
    dec_g = linalg.eigh(linalg.sample_covariance(None, Yg), backend=config.backend)
    if config.coupled and model.r == 0:
        dec_b = dec_g
    else:
        Xb = X if config.coupled else draw_X(M, N, config.entry_law, rng)
        Yb = _scale(sb, Sb, Xb)
        dec_b = linalg.eigh(linalg.sample_covariance(None, Yb), backend=config.backend)
    ov = (spikes_dir.T @ dec_g.vectors[:, :K]) ** 2
    return dec_g.values[:K], dec_b.values[:K], ov


def run(config: SimulationConfig, B: BulkStructure | None = None) -> SimulationResult:
    """Sample every replicate and collect eigenvalues, overlaps and component labels."""
    from .stieltjes import find_bulk_structure

    model = config.model
    M, N = model.M, model.N
    K = min(M, N)
    if B is None:
        B = find_bulk_structure(FFunction(model.bulk, model.c_N))
    Sg = _sqrt_factor(model, model.sigma_g_eigenvalues())
    Sb = _sqrt_factor(model, model.bulk.eigenvalues)
    spikes_dir = model.spike_directions()
    rngs = replicate_rngs(config.seed, config.replicates)

    def work(i: int):
        return _one(config, rngs[i], Sg, Sb, spikes_dir, K)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(work, range(config.replicates)))
    else:
        parts = [work(i) for i in range(config.replicates)]
    mu = np.stack([p[0] for p in parts])
    lam = np.stack([p[1] for p in parts])
    ov = np.stack([p[2] for p in parts])
    labels = _count_labels(B, K)
    mismatch = np.array([int(np.sum(midpoint_labels(m, B) != labels)) for m in mu], dtype=np.int64)
    return SimulationResult(config, mu, lam, ov, labels, mismatch)


def interlacing_violations(
    mu: NDArray,
    lam: NDArray,
    B: BulkStructure,
    classification: SpikeClassification,
    per_component: bool = False,
    rtol: float = 1e-9,
) -> int:
    """Count indices breaking ``lam[s_k + i + r_k] <= mu[s_k + i] <= lam[s_k + i - r_k]``.

    Indices are global and 1-based; an index above ``K`` reads as 0 and one
    below 1 as ``+inf``. By default ``r_k`` is the total number of spikes,
    which makes the bracket a deterministic consequence of Weyl's inequalities.
    With ``per_component=True`` it is the number of spikes attached to
    component ``k``; that sharper bracket only holds with high probability.
    """
    K = mu.size
    offsets = component_offsets(B)
    r = classification.r_per_component if per_component else [len(classification)] * B.p
    tol = rtol * max(1.0, float(np.max(np.abs(lam))))
    bad = 0
    for k in range(B.p):
        n_k = int(B.bulk_counts[k])
        for i in range(1, n_k + 1):
            g = offsets[k] + i
            if g > K:
                break
            lo_idx = g + r[k]
            hi_idx = g - r[k]
            lo = lam[lo_idx - 1] if lo_idx <= K else 0.0
            hi = lam[hi_idx - 1] if hi_idx >= 1 else math.inf
            if mu[g - 1] < lo - tol or mu[g - 1] > hi + tol:
                bad += 1
    return bad


@dataclass(frozen=True)
class SpikeSummary:
    base_index: int
    component: int
    rank: int
    global_index: int
    predicted_location: float
    mean_location: float
    se_location: float
    predicted_overlap: float | None
    mean_overlap: float
    se_overlap: float


def _mean_se(x: NDArray) -> tuple[float, float]:
    n = x.size
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return mean, se


def summarize_spikes(
    result: SimulationResult,
    B: BulkStructure,
    classification: SpikeClassification,
    predictions: Sequence[OutlierPrediction],
) -> list[SpikeSummary]:
    """Mean and standard error of the location and squared overlap for each outlier."""
    offsets = component_offsets(B)
    spike_pos = {s.base_index: k for k, s in enumerate(result.config.model.spikes)}
    out = []
    for p in predictions:
        if not p.is_outlier:
            continue
        g = int(offsets[p.component - 1]) + p.rank
        loc = result.mu[:, g - 1]
        ov = result.overlaps[:, spike_pos[p.base_index], g - 1]
        ml, sl = _mean_se(loc)
        mo, so = _mean_se(ov)
        out.append(SpikeSummary(p.base_index, p.component, p.rank, g, p.location, ml, sl, p.overlap, mo, so))
    return out


def verify_theorems(
    result: SimulationResult,
    F: FFunction,
    B: BulkStructure,
    classification: SpikeClassification,
    predictions: Sequence[OutlierPrediction],
    sticking: Sequence[StickingBound],
    slack: float = 3.0,
    eps1: float = 0.02,
    C: float = 2.0,
    eps0: float = 0.05,
    n_se: float = 3.0,
    edge_factor: float = 5.0,
    sticking_freq: float = 0.90,
    freq: float = 0.95,
) -> ValidationReport:
    """Compare simulated eigen-structure with the predicted one; never raises.

    Checks per outlier: mean location and mean squared overlap within
    ``n_se`` standard errors, and the fraction of replicates within
    ``slack`` times the theoretical rate. Per component: the first
    non-outlier eigenvalue against the edge, the coupled sticking gap, and
    interlacing. Frequencies stand in for the high-probability statements.
    """
    rep = ValidationReport("theorems")
    N = result.config.model.N
    R = result.mu.shape[0]
    offsets = component_offsets(B)
    r_plus = classification.r_plus

    for s in summarize_spikes(result, B, classification, predictions):
        dev = abs(s.mean_location - s.predicted_location)
        rep.add(f"outlier_mean[{s.base_index}]", dev <= n_se * s.se_location, dev, n_se * s.se_location,
                f"mean {s.mean_location:.6g} vs predicted {s.predicted_location:.6g}")
        pred = next(p for p in predictions if p.base_index == s.base_index)
        mad = float(np.mean(np.abs(result.mu[:, s.global_index - 1] - s.predicted_location)))
        rep.add(f"outlier_rate[{s.base_index}]", mad <= slack * pred.half_width, mad, slack * pred.half_width,
                "mean |mu - location| against slack x half-width")
        dev = abs(s.mean_overlap - s.predicted_overlap)
        rep.add(f"overlap_mean[{s.base_index}]", dev <= n_se * s.se_overlap, dev, n_se * s.se_overlap,
                f"mean {s.mean_overlap:.6g} vs predicted {s.predicted_overlap:.6g}")
        k = list(result.config.model.spikes.indices).index(s.base_index)
        bound = slack * N**eps1 * pred.overlap_error
        within = np.abs(result.overlaps[:, k, s.global_index - 1] - s.predicted_overlap) <= bound
        rep.add(f"overlap_rate[{s.base_index}]", within.mean() >= freq, float(within.mean()), freq,
                f"fraction within {bound:.3g}")

    edge_tol = edge_factor * N ** (-2.0 / 3.0)
    for i in range(1, B.p + 1):
        g = int(offsets[i - 1]) + r_plus[i - 1] + 1
        if g > result.K:
            continue
        mean, _ = _mean_se(result.mu[:, g - 1])
        dev = abs(mean - B.a(2 * i - 1))
        rep.add(f"extremal_nonoutlier[{i}]", dev <= edge_tol, dev, edge_tol,
                f"mean first non-outlier {mean:.6g} vs edge {B.a(2 * i - 1):.6g}")

    for sb in sticking:
        i = sb.component
        j = 1
        g_mu = int(offsets[i - 1]) + j + r_plus[i - 1]
        g_lam = int(offsets[i - 1]) + j
        if g_mu > result.K:
            continue
        gap = np.abs(result.mu[:, g_mu - 1] - result.lam[:, g_lam - 1])
        bound = slack * sb.bound_at(j)
        frac = float(np.mean(gap <= bound))
        rep.add(f"sticking[{i}]", frac >= sticking_freq, frac, sticking_freq,
                f"{sb.regime}: fraction of |mu - lambda| <= {bound:.3g}")

    viol = sum(interlacing_violations(result.mu[r], result.lam[r], B, classification) for r in range(R))
    rep.add("interlacing", viol == 0, float(viol), 0.0, "total-rank bracket, violations across replicates")
    if len(classification):
        loose = sum(
            interlacing_violations(result.mu[r], result.lam[r], B, classification, per_component=True)
            for r in range(R)
        )
        rep.add("interlacing_per_component", loose <= freq_tol(R, result.K, freq), float(loose),
                float(freq_tol(R, result.K, freq)), "per-component bracket, violations across replicates")

    total = sum(r_plus)
    counts = np.array([int(np.count_nonzero(detect_outliers(m, F, B, N, C, eps0))) for m in result.mu])
    frac = float(np.mean(counts == total))
    rep.add("outlier_count", frac >= freq, frac, freq, f"fraction of replicates with {total} detected outliers")
    return rep


def freq_tol(replicates: int, K: int, freq: float) -> int:
    """Violations allowed when a bracket must hold for a fraction ``freq`` of all indices."""
    return int(math.floor((1.0 - freq) * replicates * K))


def rigidity_check(
    result: SimulationResult,
    B: BulkStructure,
    gammas: Sequence[NDArray],
    slack: float = 5.0,
    eps1: float = 0.02,
    required: float = 0.99,
) -> ValidationReport:
    """Fraction of bulk eigenvalues of the unspiked sample within the rigidity scale of their classical location."""
    rep = ValidationReport("rigidity")
    N = result.config.model.N
    offsets = component_offsets(B)
    total = inside = 0
    for k, g in enumerate(gammas):
        n_k = g.size
        j = np.arange(1, n_k + 1)
        scale = slack * N ** (-2.0 / 3.0 + eps1) * np.minimum(j, n_k + 1 - j) ** (-1.0 / 3.0)
        lam = result.lam[:, offsets[k] : offsets[k] + n_k]
        ok = np.abs(lam - g[None, : lam.shape[1]]) <= scale[None, : lam.shape[1]]
        frac = float(ok.mean())
        rep.add(f"rigidity[{k + 1}]", frac >= required, frac, required, f"component {k + 1}")
        total += ok.size
        inside += int(ok.sum())
    rep.add("rigidity_all", inside >= required * total, inside / max(total, 1), required, "all components")
    return rep


def write_simulation_csv(path: str | Path, result: SimulationResult) -> None:
    """Rows ``(replicate, component, rank, mu, lambda, overlap)``; overlap is the largest spike overlap."""
    labels = result.labels
    best = result.overlaps.max(axis=1) if result.overlaps.shape[1] else np.zeros_like(result.mu)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "component", "rank", "mu", "lambda", "overlap"])
        for r in range(result.mu.shape[0]):
            rank = 0
            prev = None
            for k in range(result.K):
                comp = int(labels[k])
                rank = rank + 1 if comp == prev else 1
                prev = comp
                w.writerow([r, comp, rank, repr(float(result.mu[r, k])), repr(float(result.lam[r, k])),
                            repr(float(best[r, k]))])
