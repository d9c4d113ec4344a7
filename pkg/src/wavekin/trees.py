"""Exact evaluation of the Duhamel tree expansion of the cubic interaction ODE.

Each expansion monomial of depth n is indexed by a history vector ell with
ell_j in {1, ..., 2(n-j)+1}; its value is a sum over 2n free leaf momenta of
a product of initial amplitudes times an oscillatory simplex integral whose
nodes are partial sums of the per-level resonance moduli. Everything here is
exact up to floating point: expectations use signed phase multiplicities
(uniform-phase statistics), not Gaussian Wick rules.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .lattice import SpectralField, TorusSpec, mode_count, modes, q_form, rank_lookup
from .spectra import Profile

__all__ = [
    "BudgetExceeded",
    "TreeIndex",
    "enumerate_indices",
    "simplex_oscillatory_integral",
    "tree_term",
    "tree_order_sum",
    "degenerate_term",
    "is_degenerate",
    "degenerate_cancellation",
    "cancellation_coefficient",
    "enumerate_pairings",
    "tree_correlation",
    "correlation_order_sum",
    "second_moment_expansion",
    "second_moment_leading",
]

MAX_DEPTH = 4
DEFAULT_BUDGET = 20_000_000
_TAYLOR_THRESHOLD = 1e-3
_TAYLOR_TERMS = 8


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed the configured work budget."""


@dataclass(frozen=True)
class TreeIndex:
    """Depth n and integration-by-parts history ell = (ell_1, ..., ell_n)."""

    n: int
    ell: tuple[int, ...]

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("depth must be >= 0")
        if len(self.ell) != self.n:
            raise ValueError("ell must have length n")
        for j, lj in enumerate(self.ell, start=1):
            width = 2 * (self.n - j) + 1
            if not (1 <= lj <= width):
                raise ValueError(f"ell_{j}={lj} outside 1..{width}")

    @property
    def signature(self) -> int:
        """prod_j (-1)^(ell_j + 1)."""
        s = 1
        for lj in self.ell:
            s *= -1 if lj % 2 == 0 else 1
        return s


def enumerate_indices(n: int, max_depth: int = MAX_DEPTH) -> list[TreeIndex]:
    """All (2n-1)!! history vectors of depth n, in lexicographic order."""
    if n > max_depth:
        raise BudgetExceeded(f"depth {n} exceeds the configured maximum {max_depth}")
    if n == 0:
        return [TreeIndex(0, ())]
    ranges = [range(1, 2 * (n - j) + 2) for j in range(1, n + 1)]
    return [TreeIndex(n, ell) for ell in itertools.product(*ranges)]


# ---------------------------------------------------------------------------
# oscillatory simplex integral


def _homogeneous_sums(w: np.ndarray, mmax: int) -> list[np.ndarray]:
    """Complete homogeneous symmetric polynomials h_0..h_mmax of the rows of w."""
    a, r = w.shape
    h = [np.ones(a, dtype=np.complex128)]
    h += [np.zeros(a, dtype=np.complex128) for _ in range(mmax)]
    for v in range(r):
        wv = w[:, v]
        for m in range(1, mmax + 1):
            h[m] = h[m] + wv * h[m - 1]
    return h


def _taylor_window(z: np.ndarray, t: float, k: int) -> np.ndarray:
    """Confluent divided difference of e^{xt} over the nodes in each row of z.

    Series around the window mean; valid when max|z_i - z_j| * t is small.
    """
    mu = np.mean(z, axis=1)
    w = z - mu[:, None]
    h = _homogeneous_sums(w, _TAYLOR_TERMS)
    out = np.zeros(z.shape[0], dtype=np.complex128)
    for m in range(_TAYLOR_TERMS + 1):
        out += h[m] * (t ** (k + m) / math.factorial(k + m))
    return np.exp(mu * t) * out


def _exp_simplex_batch(omegas: np.ndarray, t: float) -> np.ndarray:
    """Batched simplex exponential integral.

    For each row (Omega_1..Omega_n) returns
        int_{s >= 0, sum s_i = t} prod_m exp(-2 pi i t_m(s) Omega_m) ds,
    t_m(s) = s_0 + ... + s_{m-1}, via divided differences of e^{xt} at the
    nodes x_j = -2 pi i c_j, c_j = Omega_{j+1} + ... + Omega_n (c_n = 0).
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    a, n = omegas.shape
    if n == 0:
        return np.ones(a, dtype=np.complex128)
    if t == 0.0:
        return np.zeros(a, dtype=np.complex128)
    c = np.zeros((a, n + 1))
    c[:, :n] = np.cumsum(omegas[:, ::-1], axis=1)[:, ::-1]
    c.sort(axis=1)  # divided differences are symmetric in the nodes
    z = (-2j * math.pi) * c
    table = np.exp(z * t)
    for k in range(1, n + 1):
        span = z[:, k:] - z[:, :-k]
        small = (np.abs(span) * abs(t)) < _TAYLOR_THRESHOLD
        denom = np.where(small, 1.0, span)
        new = (table[:, 1:] - table[:, :-1]) / denom
        if np.any(small):
            for i in range(n + 1 - k):
                rows = small[:, i]
                if np.any(rows):
                    new[rows, i] = _taylor_window(z[rows, i : i + k + 1], t, k)
        table = new
    return table[:, 0]


def simplex_oscillatory_integral(omegas: Sequence[float], t: float) -> complex:
    """Exact value of the depth-n oscillatory simplex integral at time t >= 0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    out = _exp_simplex_batch(np.asarray(omegas, dtype=float)[None, :], t)
    return complex(out[0])


# ---------------------------------------------------------------------------
# leaf assignments and transitions


def _leaf_parities(count: int) -> np.ndarray:
    """+1 for odd (1-based) positions, -1 for even."""
    m = np.arange(1, count + 1)
    return np.where(m % 2 == 1, 1, -1)


def assignment_count(spec: TorusSpec, n: int) -> int:
    return mode_count(spec) ** (2 * n)


def _leaf_chunks(
    spec: TorusSpec, n: int, K_root: np.ndarray, budget: int, chunk: int = 200_000
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (ranks (a, 2n+1), leavesK (a, 2n+1, d)) over all admissible
    assignments with the given root. The last leaf is solved from the signed
    momentum constraint and filtered by the cutoff."""
    table = modes(spec)
    N = table.shape[0]
    free = 2 * n
    total = N**free
    if total > budget:
        raise BudgetExceeded(
            f"{total} assignments exceed the budget {budget} (depth {n}, {N} modes)"
        )
    if n == 0:
        r = rank_lookup(spec, K_root)
        yield np.array([[int(r)]]), np.asarray(K_root, dtype=np.int64)[None, None, :]
        return
    sigma = _leaf_parities(free)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop)
        ranks = np.stack(np.unravel_index(flat, (N,) * free), axis=1)
        leaves = table[ranks]  # (a, 2n, d)
        signed = np.einsum("m,amd->ad", sigma, leaves)
        K_last = np.asarray(K_root, dtype=np.int64)[None, :] - signed
        keep = spec.contains(K_last)
        if not np.any(keep):
            continue
        leaves = leaves[keep]
        K_last = K_last[keep]
        last_rank = rank_lookup(spec, K_last)
        all_ranks = np.concatenate([ranks[keep], last_rank[:, None]], axis=1)
        all_leaves = np.concatenate([leaves, K_last[:, None, :]], axis=1)
        yield all_ranks, all_leaves


def transition_data(
    spec: TorusSpec, idx: TreeIndex, leavesK: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-level resonance moduli, degeneracy counts, roots, and validity.

    Returns (omegas (a, n), ways (a, n), root (a, d), valid (a,)). ways[j]
    counts how many of the two line-collapse identities hold at level j
    (0 = non-degenerate, 2 = all three children equal); a transition is
    degenerate iff ways >= 1. valid is False where an internal node escapes
    the cutoff: such assignments do not occur in the truncated dynamics.
    """
    level = np.asarray(leavesK, dtype=np.int64)
    a = level.shape[0]
    n_depth = idx.n
    omegas = np.empty((a, n_depth))
    ways = np.zeros((a, n_depth), dtype=np.int8)
    valid = np.ones(a, dtype=bool)
    for j, lj in enumerate(idx.ell, start=1):
        i = lj - 1
        c1, c2, c3 = level[:, i], level[:, i + 1], level[:, i + 2]
        parent = c1 - c2 + c3
        if j < n_depth:
            valid &= np.asarray(spec.contains(parent))
        sgn = -1.0 if lj % 2 == 0 else 1.0
        om = q_form(spec, parent) - q_form(spec, c1) + q_form(spec, c2) - q_form(spec, c3)
        omegas[:, j - 1] = sgn * om
        ways[:, j - 1] = np.all(parent == c1, axis=-1).astype(np.int8) + np.all(
            parent == c3, axis=-1
        ).astype(np.int8)
        level = np.concatenate([level[:, :i], parent[:, None, :], level[:, i + 3 :]], axis=1)
    return omegas, ways, level[:, 0, :], valid


def is_degenerate(spec: TorusSpec, idx: TreeIndex, leavesK: np.ndarray) -> np.ndarray:
    """True where every transition collapses to a line (combinatorial test)."""
    leavesK = np.asarray(leavesK, dtype=np.int64)
    squeeze = leavesK.ndim == 2
    if squeeze:
        leavesK = leavesK[None, :, :]
    _, ways, _, _ = transition_data(spec, idx, leavesK)
    out = np.all(ways >= 1, axis=1)
    return bool(out[0]) if squeeze else out


def _amp_products(amps: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """prod_m a_{k_m}^{sigma_m} with conjugation on even (1-based) positions."""
    vals = amps[ranks]
    vals[:, 1::2] = np.conj(vals[:, 1::2])
    return np.prod(vals, axis=1)


def _coupling(spec: TorusSpec, lam: float) -> complex:
    return 1j * lam**2 / spec.L ** (2 * spec.d)


def tree_term(
    spec: TorusSpec,
    idx: TreeIndex,
    t: float,
    K: Sequence[int],
    field0: SpectralField,
    lam: float,
    budget: int = DEFAULT_BUDGET,
) -> complex:
    """One expansion monomial: depth-n term with history idx, rooted at K."""
    if idx.n > MAX_DEPTH:
        raise BudgetExceeded(f"depth {idx.n} exceeds maximum {MAX_DEPTH}")
    K = np.asarray(K, dtype=np.int64)
    if idx.n == 0:
        return complex(field0.amps[int(rank_lookup(spec, K))])
    acc = 0.0 + 0.0j
    for ranks, leaves in _leaf_chunks(spec, idx.n, K, budget):
        omegas, _, _, valid = transition_data(spec, idx, leaves)
        vals = _amp_products(field0.amps, ranks) * _exp_simplex_batch(omegas, t)
        acc += complex(np.sum(vals[valid]))
    pref = _coupling(spec, lam) ** idx.n * idx.signature
    return pref * acc


def tree_order_sum(
    spec: TorusSpec,
    n: int,
    t: float,
    K: Sequence[int],
    field0: SpectralField,
    lam: float,
    budget: int = DEFAULT_BUDGET,
) -> complex:
    """Sum over all histories of depth n (the order-n term of the expansion)."""
    K = np.asarray(K, dtype=np.int64)
    if n == 0:
        return complex(field0.amps[int(rank_lookup(spec, K))])
    acc = 0.0 + 0.0j
    gamma = _coupling(spec, lam) ** n
    indices = enumerate_indices(n)
    for ranks, leaves in _leaf_chunks(spec, n, K, budget):
        amp = _amp_products(field0.amps, ranks)
        for idx in indices:
            omegas, _, _, valid = transition_data(spec, idx, leaves)
            vals = amp * _exp_simplex_batch(omegas, t)
            acc += idx.signature * complex(np.sum(vals[valid]))
    return gamma * acc


def degenerate_term(
    spec: TorusSpec,
    idx: TreeIndex,
    t: float,
    K: Sequence[int],
    field0: SpectralField,
    lam: float,
) -> complex:
    """Closed form of the all-degenerate part:

    2^n (t^n / n!) (i lam^2 / L^{2d})^n sigma_ell a_K^0 (sum_m |a_m^0|^2)^n.

    Each level is counted once per collapse direction, so assignments where
    all three children coincide carry multiplicity 2 per level.
    """
    K = np.asarray(K, dtype=np.int64)
    aK = field0.amps[int(rank_lookup(spec, K))]
    n = idx.n
    total = np.sum(np.abs(field0.amps) ** 2)
    pref = (2.0**n) * (t**n / math.factorial(n)) * _coupling(spec, lam) ** n
    return complex(pref * idx.signature * aK * total**n)


def cancellation_coefficient(S: int) -> Fraction:
    """sum_{j=0}^S (-1)^j / ((S-j)! j!) in exact rational arithmetic."""
    return sum(
        (Fraction((-1) ** j, math.factorial(S - j) * math.factorial(j)) for j in range(S + 1)),
        Fraction(0),
    )


def degenerate_cancellation(
    S: int,
    spec: TorusSpec,
    phi: np.ndarray | Profile,
    t: float,
    K: Sequence[int],
    lam: float,
) -> complex:
    """sum_{n+n'=S} sum_{ell, ell'} E(D_{n,ell} conj(D_{n',ell'})), term by term.

    Every factor in a degenerate product is a deterministic modulus, so the
    expectation is elementary; the sum cancels exactly and the returned value
    exhibits the floating-point residual of that cancellation.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    phi = _phi_values(spec, phi)
    K = np.asarray(K, dtype=np.int64)
    phiK = phi[int(rank_lookup(spec, K))]
    total = float(np.sum(phi))
    gamma = lam**2 / spec.L ** (2 * spec.d)
    acc = 0.0 + 0.0j
    for n in range(S + 1):
        npr = S - n
        sig_n = sum(idx.signature for idx in enumerate_indices(n))
        sig_np = sum(idx.signature for idx in enumerate_indices(npr))
        term = (
            (2.0 * t * gamma * total) ** S
            * (1j**n)
            * ((-1j) ** npr)
            / (math.factorial(n) * math.factorial(npr))
            * sig_n
            * sig_np
            * phiK
        )
        acc += term
    return complex(acc)


def enumerate_pairings(n: int, nprime: int, budget: int = 1_000_000) -> list[tuple[int, ...]]:
    """Parity-respecting perfect matchings of the 2n + 2n' + 2 combined leaves.

    Leaves 0..2n of the first tree keep their parities; leaves of the
    conjugated second tree are appended with flipped parities. Each matching
    is returned as an involution psi with psi[j] = partner of j.
    """
    total = 2 * n + 2 * nprime + 2
    par = np.concatenate([_leaf_parities(2 * n + 1), -_leaf_parities(2 * nprime + 1)])
    plus = [j for j in range(total) if par[j] == 1]
    minus = [j for j in range(total) if par[j] == -1]
    count = math.factorial(len(plus))
    if count > budget:
        raise BudgetExceeded(f"{count} pairings exceed the budget {budget}")
    out = []
    for perm in itertools.permutations(minus):
        psi = [0] * total
        for p, q in zip(plus, perm):
            psi[p] = q
            psi[q] = p
        out.append(tuple(psi))
    return out


def _phi_values(spec: TorusSpec, phi) -> np.ndarray:
    if isinstance(phi, Profile):
        return phi.on_spec(spec)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (mode_count(spec),):
        raise ValueError("phi must give one value per mode in canonical order")
    return phi


def tree_correlation(
    spec: TorusSpec,
    idx: TreeIndex,
    idxp: TreeIndex,
    t: float,
    K: Sequence[int],
    phi: np.ndarray | Profile,
    lam: float,
    budget: int = DEFAULT_BUDGET,
    chunk_pairs: int = 2_000_000,
) -> complex:
    """Exact E( J_{n,ell}(t,K) conj(J_{n',ell'}(t,K)) ) for uniform phases.

    Enumerates the free momenta of both trees and keeps exactly the
    assignment pairs whose signed mode multiplicities all vanish (the plus
    and minus leaf multisets coincide); each surviving pair contributes the
    product of sqrt(phi) over its leaves times both simplex integrals.
    """
    if idx.n + idxp.n > MAX_DEPTH:
        raise BudgetExceeded(
            f"correlation order {idx.n + idxp.n} exceeds the budget {MAX_DEPTH}"
        )
    phi = _phi_values(spec, phi)
    K = np.asarray(K, dtype=np.int64)
    sqrt_phi = np.sqrt(phi)

    sides = []
    for which in (idx, idxp):
        ranks_all, integ_all, weight_all = [], [], []
        for ranks, leaves in _leaf_chunks(spec, which.n, K, budget):
            omegas, _, _, valid = transition_data(spec, which, leaves)
            integ_all.append(_exp_simplex_batch(omegas, t)[valid])
            weight_all.append(np.prod(sqrt_phi[ranks[valid]], axis=1))
            ranks_all.append(ranks[valid])
        sides.append(
            (
                np.concatenate(ranks_all, axis=0),
                np.concatenate(integ_all),
                np.concatenate(weight_all),
            )
        )
    (ranks_a, integ_a, w_a), (ranks_b, integ_b, w_b) = sides

    # plus/minus mode multisets: odd positions of tree one and even positions
    # of the conjugated tree carry +, the rest carry -.
    plus_a, minus_a = ranks_a[:, 0::2], ranks_a[:, 1::2]
    plus_b, minus_b = ranks_b[:, 1::2], ranks_b[:, 0::2]

    na, nb = ranks_a.shape[0], ranks_b.shape[0]
    if na * nb > max(budget, chunk_pairs) * 64:
        raise BudgetExceeded(f"{na * nb} assignment pairs exceed the work budget")
    val_a = integ_a * w_a
    val_b = np.conj(integ_b) * w_b

    acc = 0.0 + 0.0j
    rows = max(1, chunk_pairs // max(nb, 1))
    for start in range(0, na, rows):
        stop = min(start + rows, na)
        plus = np.concatenate(
            [
                np.repeat(plus_a[start:stop], nb, axis=0),
                np.tile(plus_b, (stop - start, 1)),
            ],
            axis=1,
        )
        minus = np.concatenate(
            [
                np.repeat(minus_a[start:stop], nb, axis=0),
                np.tile(minus_b, (stop - start, 1)),
            ],
            axis=1,
        )
        plus.sort(axis=1)
        minus.sort(axis=1)
        match = np.all(plus == minus, axis=1)
        if not np.any(match):
            continue
        pair_vals = np.repeat(val_a[start:stop], nb) * np.tile(val_b, stop - start)
        acc += complex(np.sum(pair_vals[match]))

    pref = (
        _coupling(spec, 1.0) ** idx.n
        * np.conj(_coupling(spec, 1.0)) ** idxp.n
        * lam ** (2 * (idx.n + idxp.n))
        * idx.signature
        * idxp.signature
    )
    return complex(pref * acc)


def correlation_order_sum(
    spec: TorusSpec,
    S: int,
    t: float,
    K: Sequence[int],
    phi: np.ndarray | Profile,
    lam: float,
    budget: int = DEFAULT_BUDGET,
) -> complex:
    """sum_{n+n'=S} sum_{ell, ell'} E(J_{n,ell} conj(J_{n',ell'}))."""
    acc = 0.0 + 0.0j
    for n in range(S + 1):
        npr = S - n
        for idx in enumerate_indices(n):
            for idxp in enumerate_indices(npr):
                acc += tree_correlation(spec, idx, idxp, t, K, phi, lam, budget)
    return acc


def second_moment_expansion(
    spec: TorusSpec,
    t: float,
    K: Sequence[int],
    phi: np.ndarray | Profile,
    lam: float,
    order: int = 2,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """E|a_K(t)|^2 through the requested coupling order (0 or 2).

    Order 2 adds every n + n' = 2 correlation and is exact to O(lam^6).
    """
    phi_vals = _phi_values(spec, phi)
    base = float(phi_vals[int(rank_lookup(spec, np.asarray(K, dtype=np.int64)))])
    if order == 0:
        return base
    if order != 2:
        raise ValueError("order must be 0 or 2")
    corr = correlation_order_sum(spec, 2, t, K, phi_vals, lam, budget)
    return base + float(np.real(corr))


def second_moment_leading(
    spec: TorusSpec,
    t: float,
    K: Sequence[int],
    phi: np.ndarray | Profile,
    lam: float,
) -> float:
    """phi(K) plus the explicit sinc^2 quasi-resonant sum (no coincident-
    momentum corrections); the finite-time lattice kernel of the collision
    module provides the second term."""
    from .collision import finite_time_kernel_lattice

    phi_vals = _phi_values(spec, phi)
    base = float(phi_vals[int(rank_lookup(spec, np.asarray(K, dtype=np.int64)))])
    return base + finite_time_kernel_lattice(spec, t, K, phi_vals, lam)
