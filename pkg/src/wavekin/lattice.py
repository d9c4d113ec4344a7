"""Truncated frequency lattice, dispersion form and resonance bookkeeping.

Modes live on the integer lattice K = L*k so that the momentum constraint
k - k1 + k2 - k3 = 0 is checked in exact integer arithmetic; only the
quadratic form Q and the resonance modulus Omega are floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "TorusSpec",
    "SpectralField",
    "modes",
    "mode_count",
    "mode_rank",
    "rank_lookup",
    "q_form",
    "q_form_points",
    "omega",
    "sigma_zero_triples",
    "sigma_zero_triples_array",
]


@dataclass(frozen=True)
class TorusSpec:
    """Torus of size L in dimension d with dispersion coefficients beta.

    Modes are integer vectors K with |K/L| <= cutoff (Euclidean ball by
    default, per-coordinate box when cutoff_shape == "box").
    """

    d: int
    L: float
    beta: tuple[float, ...]
    cutoff: float = 1.0
    cutoff_shape: str = "ball"
    beta_seed: int | None = None

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if len(beta) != self.d:
            raise ValueError(f"beta has length {len(beta)}, expected d={self.d}")
        if any(not (1.0 <= b <= 2.0) for b in beta):
            raise ValueError("all beta_i must lie in [1, 2]")
        if self.L < 2:
            raise ValueError("box size L must be >= 2")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.cutoff_shape not in ("ball", "box"):
            raise ValueError("cutoff_shape must be 'ball' or 'box'")

    @classmethod
    def rational(cls, d: int, L: float, cutoff: float = 1.0, **kw) -> "TorusSpec":
        """The fully resonant preset beta = (1, ..., 1)."""
        return cls(d=d, L=L, beta=(1.0,) * d, cutoff=cutoff, **kw)

    @classmethod
    def generic(cls, d: int, L: float, cutoff: float = 1.0, seed: int = 0, **kw) -> "TorusSpec":
        """Sample beta uniformly from [1, 2]^d with a recorded seed."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        beta = tuple(rng.uniform(1.0, 2.0, size=d).tolist())
        return cls(d=d, L=L, beta=beta, cutoff=cutoff, beta_seed=seed, **kw)

    @property
    def n_modes(self) -> int:
        return mode_count(self)

    @property
    def kmax(self) -> int:
        """Largest per-axis |K_i| over the mode set."""
        return int(np.floor(self.cutoff * self.L))

    def contains(self, K: np.ndarray) -> np.ndarray:
        """Membership test for integer vectors, vectorised over leading axes."""
        K = np.asarray(K)
        if self.cutoff_shape == "box":
            return np.all(np.abs(K) <= self.kmax, axis=-1)
        # ball test in exact integer arithmetic: |K|^2 <= (cutoff*L)^2
        lhs = np.sum(K.astype(np.int64) ** 2, axis=-1)
        return lhs <= (self.cutoff * self.L) ** 2

    def to_json(self) -> str:
        obj = {"d": self.d, "L": self.L, "beta": list(self.beta), "cutoff": self.cutoff}
        if self.cutoff_shape != "ball":
            obj["cutoff_shape"] = self.cutoff_shape
        if self.beta_seed is not None:
            obj["beta_seed"] = self.beta_seed
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "TorusSpec":
        obj = json.loads(text)
        return cls(
            d=int(obj["d"]),
            L=float(obj["L"]),
            beta=tuple(obj["beta"]),
            cutoff=float(obj["cutoff"]),
            cutoff_shape=obj.get("cutoff_shape", "ball"),
            beta_seed=obj.get("beta_seed"),
        )


@lru_cache(maxsize=64)
def _mode_table(spec: TorusSpec) -> np.ndarray:
    """All admissible K vectors in canonical (lexicographic) order, shape (N, d)."""
    kmax = spec.kmax
    axes = [np.arange(-kmax, kmax + 1, dtype=np.int64)] * spec.d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.d)
    keep = spec.contains(grid)
    table = grid[keep]
    order = np.lexsort(table.T[::-1])  # sort by K_1, then K_2, ...
    table = np.ascontiguousarray(table[order])
    table.flags.writeable = False
    return table


@lru_cache(maxsize=64)
def _rank_lut(spec: TorusSpec) -> np.ndarray:
    """Dense lookup: K (offset by kmax per axis) -> rank, -1 outside the mode set."""
    kmax = spec.kmax
    shape = (2 * kmax + 1,) * spec.d
    lut = np.full(shape, -1, dtype=np.int64)
    table = _mode_table(spec)
    idx = tuple((table + kmax).T)
    lut[idx] = np.arange(table.shape[0])
    lut.flags.writeable = False
    return lut


def modes(spec: TorusSpec) -> np.ndarray:
    """Integer mode vectors K in canonical order, shape (N, d). Read-only."""
    return _mode_table(spec)


def mode_count(spec: TorusSpec) -> int:
    return _mode_table(spec).shape[0]


def rank_lookup(spec: TorusSpec, K: np.ndarray) -> np.ndarray:
    """Ranks of integer vectors K (..., d); -1 for vectors outside the mode set."""
    kmax = spec.kmax
    K = np.asarray(K, dtype=np.int64)
    shifted = K + kmax
    inside = np.all((shifted >= 0) & (shifted <= 2 * kmax), axis=-1)
    safe = np.where(inside[..., None], shifted, 0)
    ranks = _rank_lut(spec)[tuple(np.moveaxis(safe, -1, 0))]
    return np.where(inside, ranks, -1)


def mode_rank(spec: TorusSpec, K: Sequence[int]) -> int:
    r = int(rank_lookup(spec, np.asarray(K, dtype=np.int64)))
    if r < 0:
        raise ValueError(f"mode {tuple(K)} outside the lattice of {spec}")
    return r


def q_form(spec: TorusSpec, K: np.ndarray) -> float | np.ndarray:
    """Dispersion Q(k) = sum_i beta_i (K_i/L)^2, vectorised over leading axes."""
    K = np.asarray(K)
    if K.shape[-1] != spec.d:
        raise ValueError(f"mode has dimension {K.shape[-1]}, spec has d={spec.d}")
    k = K / spec.L
    out = np.einsum("...i,i->...", k * k, np.asarray(spec.beta))
    return float(out) if out.ndim == 0 else out


def q_form_points(spec: TorusSpec, k: np.ndarray) -> np.ndarray:
    """Q evaluated at continuum points k (already divided by L)."""
    k = np.asarray(k, dtype=float)
    return np.einsum("...i,i->...", k * k, np.asarray(spec.beta))


def omega(spec: TorusSpec, K, K1, K2, K3) -> float | np.ndarray:
    """Resonance modulus Q(k) - Q(k1) + Q(k2) - Q(k3)."""
    return q_form(spec, K) - q_form(spec, K1) + q_form(spec, K2) - q_form(spec, K3)


def sigma_zero_triples_array(spec: TorusSpec, K: Sequence[int]) -> np.ndarray:
    """All triples (K1, K2, K3) of modes with K - K1 + K2 - K3 = 0, shape (T, 3, d).

    K3 = K + K2 - K1 is formed in integer arithmetic and filtered by the cutoff,
    so the momentum constraint holds exactly by construction.
    """
    K = np.asarray(K, dtype=np.int64)
    if not bool(spec.contains(K)):
        raise ValueError(f"mode {tuple(K)} outside the lattice")
    table = _mode_table(spec)
    n = table.shape[0]
    K1 = np.repeat(table, n, axis=0)
    K2 = np.tile(table, (n, 1))
    K3 = K[None, :] + K2 - K1
    keep = spec.contains(K3)
    return np.stack([K1[keep], K2[keep], K3[keep]], axis=1)


def sigma_zero_triples(spec: TorusSpec, K: Sequence[int]) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Iterate over admissible triples; each yielded exactly once."""
    for row in sigma_zero_triples_array(spec, K):
        yield row[0], row[1], row[2]


@dataclass(frozen=True)
class SpectralField:
    """Complex amplitudes a_k on a spec's modes, in canonical order.

    time_tag records the interaction-picture time of the snapshot.
    """

    spec: TorusSpec
    amps: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=np.complex128)
        if amps.shape != (mode_count(self.spec),):
            raise ValueError(
                f"amps has shape {amps.shape}, expected ({mode_count(self.spec)},)"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    def mass(self) -> float:
        """ell^2_L mass L^{-d} sum |a_k|^2."""
        return float(np.sum(np.abs(self.amps) ** 2) / self.spec.L**self.spec.d)

    def with_amps(self, amps: np.ndarray, time_tag: float | None = None) -> "SpectralField":
        t = self.time_tag if time_tag is None else time_tag
        return SpectralField(self.spec, amps, t)
