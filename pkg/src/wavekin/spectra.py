"""Deterministic spectral profiles and reproducible random-phase initial data.

The data model: a_k(0) = sqrt(phi(k)) * exp(i theta_k) with theta_k i.i.d.
uniform on [0, 2pi). Moduli are deterministic, so |a_k(0)|^2 = phi(k) by
construction and all randomness sits in the phases. A complex-Gaussian
variant is available behind a flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .lattice import SpectralField, TorusSpec, mode_count, modes

__all__ = [
    "Profile",
    "SeedPlan",
    "sample_initial",
    "phase_expectation",
]


@dataclass(frozen=True)
class Profile:
    """Nonnegative spectral density phi(k) with a vectorised evaluator.

    kind is one of "gaussian" (params: width), "bump" (params: radius) or
    "table" (explicit per-mode values bound to a spec). Built-in presets are
    even under k -> -k.
    """

    kind: str
    params: tuple[tuple[str, float], ...] = ()
    _table: tuple[float, ...] | None = None

    @classmethod
    def gaussian(cls, width: float = 1.0) -> "Profile":
        if width <= 0:
            raise ValueError("width must be positive")
        return cls("gaussian", (("width", float(width)),))

    @classmethod
    def bump(cls, radius: float = 1.0) -> "Profile":
        if radius <= 0:
            raise ValueError("radius must be positive")
        return cls("bump", (("radius", float(radius)),))

    @classmethod
    def table(cls, values: np.ndarray) -> "Profile":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0):
            raise ValueError("profile values must be nonnegative")
        return cls("table", (), tuple(values.tolist()))

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    def value(self, k: np.ndarray) -> np.ndarray:
        """phi at continuum points k of shape (..., d). Table profiles are
        bound to a mode set and cannot be evaluated off-grid."""
        k = np.asarray(k, dtype=float)
        r2 = np.sum(k * k, axis=-1)
        if self.kind == "gaussian":
            w = self.param_dict["width"]
            return np.exp(-math.pi * r2 / w**2)
        if self.kind == "bump":
            rad = self.param_dict["radius"]
            x = r2 / rad**2
            out = np.zeros_like(r2)
            inside = x < 1.0
            # exp(1 - 1/(1-x)) normalises the bump to phi(0) = 1
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside]))
            return out
        raise ValueError(f"profile kind {self.kind!r} has no pointwise evaluator")

    def on_spec(self, spec: TorusSpec) -> np.ndarray:
        """Per-mode values in canonical order, truncated at the spec cutoff."""
        if self.kind == "table":
            vals = np.asarray(self._table, dtype=float)
            if vals.shape != (mode_count(spec),):
                raise ValueError("table profile does not match this spec's mode count")
            return vals
        k = modes(spec) / spec.L
        vals = self.value(k)
        vals = np.where(np.asarray(spec.contains(modes(spec))), vals, 0.0)
        if np.any(vals < 0):
            raise ValueError("profile produced negative values")
        return vals

    def to_json(self) -> str:
        obj: dict = {"kind": self.kind, "params": self.param_dict}
        if self._table is not None:
            obj["values"] = list(self._table)
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "Profile":
        obj = json.loads(text)
        kind = obj["kind"]
        if kind == "gaussian":
            return cls.gaussian(obj["params"].get("width", 1.0))
        if kind == "bump":
            return cls.bump(obj["params"].get("radius", 1.0))
        if kind == "table":
            return cls.table(np.asarray(obj["values"]))
        raise ValueError(f"unknown profile kind {kind!r}")


@dataclass(frozen=True)
class SeedPlan:
    """Counter-based stream derivation: (root_seed, sample_index) -> phases.

    Each sample index owns an independent Philox stream, so ensembles are
    reproducible bit-for-bit regardless of evaluation order or thread count.
    """

    root_seed: int

    def generator(self, sample_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(sample_index,))
        return np.random.Generator(np.random.Philox(seq))

    def phases(self, sample_index: int, n: int) -> np.ndarray:
        """Uniform phases on [0, 2pi) for the n modes, in canonical mode order."""
        return self.generator(sample_index).random(n) * (2.0 * math.pi)


def sample_initial(
    spec: TorusSpec,
    profile: Profile,
    seedplan: SeedPlan,
    sample_index: int,
    randomization: str = "uniform",
) -> SpectralField:
    """Draw one random initial field a_k(0).

    uniform: a_k = sqrt(phi) * e^{i theta_k};  gaussian: a_k = sqrt(phi) * g_k
    with g_k standard complex Gaussian (E|g|^2 = 1).
    """
    phi = profile.on_spec(spec)
    if np.any(phi < 0):
        raise ValueError("profile must be nonnegative")
    root = np.sqrt(phi)
    n = mode_count(spec)
    if randomization == "uniform":
        theta = seedplan.phases(sample_index, n)
        amps = root * np.exp(1j * theta)
    elif randomization == "gaussian":
        rng = seedplan.generator(sample_index)
        g = rng.normal(size=n, scale=math.sqrt(0.5)) + 1j * rng.normal(
            size=n, scale=math.sqrt(0.5)
        )
        amps = root * g
    else:
        raise ValueError("randomization must be 'uniform' or 'gaussian'")
    amps = np.where(phi == 0.0, 0.0 + 0.0j, amps)
    return SpectralField(spec, amps, time_tag=0.0)


def phase_expectation(exponents: Mapping, model: str = "uniform") -> float:
    """Expectation of prod_k e^{i m_k theta_k} over the random data.

    uniform model: keys are modes, values signed integer multiplicities m_k;
    the expectation is 1 if every m_k vanishes and 0 otherwise.

    gaussian model (Wick/Isserlis): values are (plus, minus) occurrence counts
    of g_k and conj(g_k); the answer is prod_k p_k! when p_k == q_k, else 0.
    """
    if model == "uniform":
        for m in exponents.values():
            if m != 0:
                return 0.0
        return 1.0
    if model == "gaussian":
        out = 1.0
        for p, q in exponents.values():
            if p != q:
                return 0.0
            out *= math.factorial(p)
        return out
    raise ValueError("model must be 'uniform' or 'gaussian'")
