"""Experiment configuration: JSON or TOML files validated against a fixed schema."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .model import (
    PopulationModel,
    attach_spikes,
    build_bulk_from_atoms,
    build_bulk_from_eigenvalues,
    build_toeplitz_population,
    spikes_from_sigma_g,
)
from .shrinkage import ORACLE_LOSS, SHRINKERS
from .sim import LAWS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "load_config", "parse_config", "build_model", "read_vector"]

# allowed keys per section, with the expected python types
_SCHEMA: dict[str, dict[str, tuple[type, ...]]] = {
    "model": {"N": (int,), "M": (int,), "bulk": (dict,), "spikes": (list,)},
    "analyze": {
        "tau": (int, float),
        "eps0": (int, float),
        "eps1": (int, float),
        "c0": (int, float),
        "C": (int, float),
        "asymptotic": (bool,),
    },
    "density": {"grid": (int,), "lo": (int, float), "hi": (int, float)},
    "simulate": {
        "replicates": (int,),
        "seed": (int,),
        "law": (str,),
        "coupled": (bool,),
        "workers": (int,),
        "backend": (str,),
        "slack": (int, float),
    },
    "shrink": {"loss": (str,), "eigenvalues": (str,)},
    "oracle": {"eigenvalues": (str,), "eta": (int, float)},
}
_BULK_KEYS = {"eigenvalues", "atoms", "toeplitz", "file"}
_SPIKE_KEYS = {"index", "d", "sigma_g"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``sections`` maps section name to its settings."""

    model: dict[str, Any]
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.sections.get(name, {}))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _check_types(name: str, data: Mapping[str, Any]) -> None:
    allowed = _SCHEMA[name]
    for key, value in data.items():
        if key not in allowed:
            raise ValidationError(f"unknown key {name}.{key}")
        types = allowed[key]
        # bool is an int subclass; keep the two apart
        if isinstance(value, bool) and bool not in types:
            raise ValidationError(f"{name}.{key} must be {types[0].__name__}")
        if not isinstance(value, types):
            raise ValidationError(f"{name}.{key} must be {types[0].__name__}, got {type(value).__name__}")


def _check_model(model: Mapping[str, Any]) -> None:
    for key in ("N", "bulk"):
        if key not in model:
            raise ValidationError(f"model.{key} is required")
    if model["N"] < 1:
        raise ValidationError("model.N must be positive")
    bulk = model["bulk"]
    keys = set(bulk)
    if len(keys) != 1 or not keys <= _BULK_KEYS:
        raise ValidationError(f"model.bulk needs exactly one of {sorted(_BULK_KEYS)}, got {sorted(keys)}")
    if "toeplitz" in bulk:
        t = bulk["toeplitz"]
        if not isinstance(t, dict) or "rho" not in t or not set(t) <= {"rho", "M"}:
            raise ValidationError("model.bulk.toeplitz takes rho and optionally M")
        if "M" not in t and "M" not in model:
            raise ValidationError("Toeplitz bulk needs model.M or model.bulk.toeplitz.M")
    for k, spike in enumerate(model.get("spikes", [])):
        if not isinstance(spike, dict):
            raise ValidationError(f"model.spikes[{k}] must be a table")
        extra = set(spike) - _SPIKE_KEYS
        if extra:
            raise ValidationError(f"unknown key model.spikes[{k}].{sorted(extra)[0]}")
        if "index" not in spike or len(set(spike) & {"d", "sigma_g"}) != 1:
            raise ValidationError(f"model.spikes[{k}] needs index and exactly one of d, sigma_g")


def parse_config(data: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate a decoded config mapping; unknown sections or keys are rejected."""
    if not isinstance(data, Mapping):
        raise ValidationError("config must be a table at top level")
    for name in data:
        if name not in _SCHEMA:
            raise ValidationError(f"unknown section {name!r}")
        if not isinstance(data[name], Mapping):
            raise ValidationError(f"section {name!r} must be a table")
        _check_types(name, data[name])
    if "model" not in data:
        raise ValidationError("missing section 'model'")
    _check_model(data["model"])
    sim = data.get("simulate", {})
    if "law" in sim and sim["law"] not in LAWS:
        raise ValidationError(f"simulate.law must be one of {LAWS}")
    if "backend" in sim and sim["backend"] not in ("native", "lapack"):
        raise ValidationError("simulate.backend must be 'native' or 'lapack'")
    loss = data.get("shrink", {}).get("loss")
    if loss is not None and loss != ORACLE_LOSS and loss not in SHRINKERS:
        raise ValidationError(f"unknown loss {loss!r}")
    sections = {k: dict(v) for k, v in data.items() if k != "model"}
    return ExperimentConfig(dict(data["model"]), sections, Path(base_dir))


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a ``.json`` or ``.toml`` config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(data, path.parent)


def read_vector(path: str | Path) -> np.ndarray:
    """Whitespace or comma separated numbers; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    values: list[float] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].replace(",", " ")
        try:
            values.extend(float(tok) for tok in line.split())
        except ValueError as exc:
            raise ValidationError(f"non-numeric entry in {path}: {exc}") from exc
    if not values:
        raise ValidationError(f"{path} holds no numbers")
    return np.asarray(values)


def build_model(config: ExperimentConfig) -> PopulationModel:
    """Population model described by the ``model`` section."""
    spec = config.model
    bulk_spec = spec["bulk"]
    basis = None
    if "eigenvalues" in bulk_spec:
        bulk = build_bulk_from_eigenvalues(bulk_spec["eigenvalues"])
    elif "file" in bulk_spec:
        bulk = build_bulk_from_eigenvalues(read_vector(config.resolve(bulk_spec["file"])))
    elif "atoms" in bulk_spec:
        try:
            atoms = [(float(v), int(m)) for v, m in bulk_spec["atoms"]]
        except (TypeError, ValueError) as exc:
            raise ValidationError("model.bulk.atoms must be a list of [value, multiplicity] pairs") from exc
        bulk = build_bulk_from_atoms(atoms)
    else:
        t = bulk_spec["toeplitz"]
        bulk, basis = build_toeplitz_population(float(t["rho"]), int(t.get("M", spec.get("M"))))
    if "M" in spec and spec["M"] != bulk.M:
        raise ValidationError(f"model.M = {spec['M']} but the bulk has {bulk.M} eigenvalues")
    spikes = spec.get("spikes", [])
    by_d = [(s["index"], s["d"]) for s in spikes if "d" in s]
    by_sg = [(s["index"], s["sigma_g"]) for s in spikes if "sigma_g" in s]
    pairs = list(by_d)
    if by_sg:
        pairs += [(s.base_index, s.d) for s in spikes_from_sigma_g(bulk, by_sg)]
    return PopulationModel(bulk, attach_spikes(bulk, pairs), int(spec["N"]), basis)
