"""Run configuration loaded from an INI file.

Example::

    [model]
    kind = harmonic          ; harmonic | affine | table
    ; affine: a, b, c, d      (lambda_m = a m + b, N_m = c m + d)
    ; table:  lambda = 1, 2   nparticles = 0, 0

    [thermo]
    beta = 1.0
    mu = 0.0

    [trunc]
    max_index = 60
    tail_tol = 1e-8

    [witness]                ; optional
    m0 = 1
    growth = 1.0

    [tol]
    algebraic = 1e-12
    spectral = 1e-10
    root = 1e-12

    [output]
    format = csv
    precision = 10
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigError, GcmasterError
from .thermo import ModelSpec, TruncationPolicy, Witness

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class Tamper:
    """Multiply the rate from level ``n`` to level ``m`` by ``factor``."""

    m: int
    n: int
    factor: float


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: ModelSpec
    trunc: TruncationPolicy
    tol_algebraic: float = 1e-12
    tol_spectral: float = 1e-10
    tol_root: float = 1e-12
    output_format: str = "csv"
    output_path: Optional[str] = None
    precision: int = 10
    tamper: Optional[Tamper] = None

    def __post_init__(self):
        for name in ("tol_algebraic", "tol_spectral", "tol_root"):
            val = getattr(self, name)
            if not 0 < val <= 1e-2:
                raise ConfigError(f"{name.replace('_', '.')} = {val} must lie in (0, 1e-2]")
        if not 6 <= self.precision <= 17:
            raise ConfigError(f"output.precision = {self.precision} must lie in [6, 17]")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}, got {self.output_format!r}")


def _get(cp, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing required key {section}.{key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key} = {raw!r}: {exc}") from None


def _floats(raw: str) -> list[float]:
    return [float(t) for t in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    return [int(t) for t in raw.replace(",", " ").split()]


def _build_model(cp) -> tuple[ModelSpec, Optional[int]]:
    kind = _get(cp, "model", "kind", str.strip, "harmonic")
    beta = _get(cp, "thermo", "beta", float, required=True)
    mu = _get(cp, "thermo", "mu", float, 0.0)
    witness = None
    if cp.has_section("witness"):
        witness = Witness(_get(cp, "witness", "m0", int, 1), _get(cp, "witness", "growth", float, 1.0))
    if kind == "harmonic":
        return ModelSpec.harmonic(beta, mu, witness), None
    if kind == "affine":
        a = _get(cp, "model", "a", float, required=True)
        b = _get(cp, "model", "b", float, 0.0)
        c = _get(cp, "model", "c", int, 0)
        d = _get(cp, "model", "d", int, 0)
        return ModelSpec.affine(a, b, c, d, beta=beta, mu=mu, witness=witness), None
    if kind == "table":
        lam = _get(cp, "model", "lambda", _floats, required=True)
        n = _get(cp, "model", "nparticles", _ints, None)
        model = ModelSpec.table(lam, n, beta=beta, mu=mu)
        return model, model.size
    raise ConfigError(f"model.kind must be harmonic, affine or table, got {kind!r}")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        model, size = _build_model(cp)
        max_index = _get(cp, "trunc", "max_index", int, size, required=size is None)
        if size is not None and max_index > size:
            raise ConfigError(f"trunc.max_index = {max_index} exceeds the {size}-level table")
        trunc = TruncationPolicy(max_index, _get(cp, "trunc", "tail_tol", float, 1e-8))
        tamper = None
        if cp.has_section("tamper"):
            tamper = Tamper(_get(cp, "tamper", "m", int, required=True),
                            _get(cp, "tamper", "n", int, required=True),
                            _get(cp, "tamper", "factor", float, required=True))
        return RunConfig(
            model=model,
            trunc=trunc,
            tol_algebraic=_get(cp, "tol", "algebraic", float, 1e-12),
            tol_spectral=_get(cp, "tol", "spectral", float, 1e-10),
            tol_root=_get(cp, "tol", "root", float, 1e-12),
            output_format=_get(cp, "output", "format", str.strip, "csv"),
            output_path=_get(cp, "output", "path", str.strip, None),
            precision=_get(cp, "output", "precision", int, 10),
            tamper=tamper,
        )
    except GcmasterError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
