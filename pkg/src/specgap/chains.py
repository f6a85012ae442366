"""Markov chain models: black-box one-step simulators plus exact desk-scale oracles.

Every chain exposes the black-box interface (``state_space_size()`` /
``next_state(x, rng)``) used by the sampling engines, and the built-in
chains additionally expose a vectorized kernel ``step_with_uniforms`` that
advances a whole batch of states from pre-drawn uniforms (exactly
``uniforms_per_step`` per transition, consumed in step order, so scalar and
vectorized simulation see the same random stream).

For small chains the exact oracles (stationary distribution, full spectrum
via symmetrization, traces of matrix powers, empirical transition matrix)
provide the ground truth the estimator is verified against.  States are
0-based dense integers everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.linalg

__all__ = [
    "TransitionOracle",
    "InitialSampler",
    "UniformSampler",
    "TabularSampler",
    "BiasedLineChain",
    "RegularGraphChain",
    "DenseMatrixChain",
    "line_stationary",
    "exact_spectrum",
    "trace_of_power",
    "return_probability_curve",
    "empirical_transition_matrix",
    "generate_regular_graph",
    "load_matrix_chain",
    "save_matrix_chain",
]

#: Largest state space the dense exact oracles accept.
MAX_EXACT_STATES = 2000


class TransitionOracle(Protocol):
    """One-step black-box simulator of a Markov chain."""

    def state_space_size(self) -> int: ...

    def next_state(self, x: int, rng: np.random.Generator) -> int: ...


class InitialSampler(Protocol):
    """Start-state sampler with a known probability mass function."""

    def sample(self, rng: np.random.Generator) -> int: ...

    def pmf(self, x: int) -> float: ...

    def min_pmf(self) -> float: ...


@dataclass(frozen=True)
class UniformSampler:
    """Uniform start states on {0, ..., size-1}."""

    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.size))

    def pmf(self, x: int) -> float:
        return 1.0 / self.size if 0 <= x < self.size else 0.0

    def min_pmf(self) -> float:
        return 1.0 / self.size


class TabularSampler:
    """Start states drawn from an explicit strictly positive pmf vector."""

    def __init__(self, probabilities):
        p = np.asarray(probabilities, dtype=float)
        if p.ndim != 1 or len(p) < 1:
            raise ValueError("probabilities must be a non-empty vector")
        if p.min() <= 0.0:
            raise ValueError("all pmf entries must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf must sum to 1, got {p.sum()}")
        self.probabilities = p
        self._cdf = np.cumsum(p)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cdf, rng.random(), side="right"))

    def pmf(self, x: int) -> float:
        return float(self.probabilities[x]) if 0 <= x < len(self.probabilities) else 0.0

    def min_pmf(self) -> float:
        return float(self.probabilities.min())


# ---------------------------------------------------------------------------
# Concrete chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasedLineChain:
    """Lazy biased walk on {0, ..., size-1}.

    Interior states stay with probability 1/2, move right with (1-bias)/2
    and left with bias/2; at the ends the blocked move folds into the
    self-loop, which keeps the chain lazy and reversible.
    """

    size: int
    bias: float

    uniforms_per_step = 1

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("size must be >= 2")
        if not 0.0 < self.bias < 1.0:
            raise ValueError("bias must lie strictly between 0 and 1")

    def state_space_size(self) -> int:
        return self.size

    def next_state(self, x: int, rng: np.random.Generator) -> int:
        return self._move(x, rng.random())

    def _move(self, x: int, u: float) -> int:
        if u < 0.5:
            return x
        if u < 0.5 + (1.0 - self.bias) / 2.0:
            return min(x + 1, self.size - 1)
        return max(x - 1, 0)

    def step_with_uniforms(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        u = us[:, 0]
        delta = np.where(u < 0.5, 0, np.where(u < 0.5 + (1.0 - self.bias) / 2.0, 1, -1))
        return np.clip(xs + delta, 0, self.size - 1)

    def stationary_distribution(self) -> np.ndarray:
        return line_stationary(self.size, self.bias)

    def transition_matrix(self) -> np.ndarray:
        n, p = self.size, self.bias
        P = np.zeros((n, n))
        for x in range(n):
            P[x, x] = 0.5
            if x + 1 < n:
                P[x, x + 1] = (1.0 - p) / 2.0
            else:
                P[x, x] += (1.0 - p) / 2.0
            if x - 1 >= 0:
                P[x, x - 1] = p / 2.0
            else:
                P[x, x] += p / 2.0
        return P


@dataclass(frozen=True)
class RegularGraphChain:
    """Lazy walk on a simple connected d-regular graph.

    Stays put with probability 1/2, otherwise moves to one of the d
    neighbors uniformly.  ``neighbors`` is a (size, degree) array; ``seed``
    records how the graph was generated.
    """

    size: int
    degree: int
    neighbors: np.ndarray = field(repr=False)
    seed: int = 0

    uniforms_per_step = 1

    def state_space_size(self) -> int:
        return self.size

    def next_state(self, x: int, rng: np.random.Generator) -> int:
        u = rng.random()
        if u < 0.5:
            return x
        j = min(int((u - 0.5) * 2.0 * self.degree), self.degree - 1)
        return int(self.neighbors[x, j])

    def step_with_uniforms(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        u = us[:, 0]
        move = u >= 0.5
        j = np.minimum(((u - 0.5) * 2.0 * self.degree).astype(np.int64), self.degree - 1)
        out = xs.copy()
        out[move] = self.neighbors[xs[move], j[move]]
        return out

    def stationary_distribution(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def transition_matrix(self) -> np.ndarray:
        P = np.zeros((self.size, self.size))
        np.fill_diagonal(P, 0.5)
        half_over_d = 0.5 / self.degree
        for x in range(self.size):
            P[x, self.neighbors[x]] += half_over_d
        return P

    def edges(self) -> list[tuple[int, int]]:
        pairs = set()
        for x in range(self.size):
            for y in self.neighbors[x]:
                pairs.add((min(x, int(y)), max(x, int(y))))
        return sorted(pairs)

    def save_edges(self, path) -> None:
        """Write the edge list, one 0-based 'u v' pair per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for u, v in self.edges():
                fh.write(f"{u} {v}\n")


class DenseMatrixChain:
    """Chain defined by an explicit row-stochastic matrix (verification fixture).

    Simulation only needs row-stochasticity; reversibility is checked
    lazily, when exact oracles are requested.
    """

    uniforms_per_step = 1

    def __init__(self, matrix):
        P = np.asarray(matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError("matrix must be square and non-empty")
        if P.min() < 0.0:
            raise ValueError("matrix entries must be non-negative")
        rowsum_err = np.abs(P.sum(axis=1) - 1.0).max()
        if rowsum_err > 1e-10:
            raise ValueError(f"rows must sum to 1 (max deviation {rowsum_err:.2e})")
        self.matrix = P
        self._cdf = np.cumsum(P, axis=1)
        self._cdf[:, -1] = 1.0
        self._stationary = None

    def state_space_size(self) -> int:
        return len(self.matrix)

    def next_state(self, x: int, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cdf[x], rng.random(), side="right"))

    def step_with_uniforms(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        # (batch, |S|) comparison; dense chains are desk-scale by construction.
        return (us[:, 0][:, None] < self._cdf[xs]).argmax(axis=1)

    def stationary_distribution(self) -> np.ndarray:
        if self._stationary is None:
            n = len(self.matrix)
            A = np.vstack([self.matrix.T - np.eye(n), np.ones(n)])
            b = np.zeros(n + 1)
            b[-1] = 1.0
            pi, *_ = np.linalg.lstsq(A, b, rcond=None)
            if pi.min() <= 0.0:
                raise ValueError("stationary distribution is not strictly positive")
            self._stationary = pi / pi.sum()
        return self._stationary

    def transition_matrix(self) -> np.ndarray:
        return self.matrix


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------


def line_stationary(size: int, p: float) -> np.ndarray:
    """Stationary distribution of the biased line walk.

    Proportional to ((1-p)/p)^x for x = 0..size-1; uniform at p = 1/2.
    """
    if size < 2:
        raise ValueError("size must be >= 2")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if p == 0.5:
        return np.full(size, 1.0 / size)
    ratio = 1.0 / p - 1.0
    weights = ratio ** np.arange(size)
    return weights / weights.sum()


def _check_desk_scale(n: int) -> None:
    if n > MAX_EXACT_STATES:
        raise ValueError(f"exact oracles support at most {MAX_EXACT_STATES} states, got {n}")


def exact_spectrum(chain, reversibility_tol: float = 1e-8) -> np.ndarray:
    """Eigenvalues of the chain's transition matrix, sorted descending.

    Requires reversibility: the matrix is similarity-transformed with the
    square root of the stationary distribution into a symmetric matrix and
    handed to a dense symmetric eigensolver, which guarantees a real
    spectrum.  Raises if detailed balance fails beyond ``reversibility_tol``
    or the leading eigenvalue is not 1.
    """
    P = chain.transition_matrix()
    pi = chain.stationary_distribution()
    _check_desk_scale(len(pi))
    if pi.min() <= 0.0:
        raise ValueError("stationary distribution must be strictly positive")
    flows = pi[:, None] * P
    balance_err = np.abs(flows - flows.T).max()
    if balance_err > reversibility_tol:
        raise ValueError(f"chain is not reversible (detailed-balance error {balance_err:.2e})")
    d = np.sqrt(pi)
    S = P * (d[:, None] / d[None, :])
    eigenvalues = scipy.linalg.eigh(0.5 * (S + S.T), eigvals_only=True)[::-1]
    if abs(eigenvalues[0] - 1.0) > 1e-8:
        raise ValueError(f"leading eigenvalue is {eigenvalues[0]}, expected 1")
    return eigenvalues


def trace_of_power(chain, k: int) -> float:
    """Trace of the k-th power of the transition matrix."""
    if k < 1:
        raise ValueError("k must be >= 1")
    P = chain.transition_matrix()
    _check_desk_scale(len(P))
    return float(np.trace(np.linalg.matrix_power(P, k)))


def return_probability_curve(chain, max_k: int) -> np.ndarray:
    """Exact k-step return probabilities m_k = tr(P^k)/|S| for k = 1..max_k."""
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    P = chain.transition_matrix()
    n = len(P)
    _check_desk_scale(n)
    out = np.empty(max_k)
    M = P.copy()
    out[0] = np.trace(M) / n
    for k in range(1, max_k):
        M = M @ P
        out[k] = np.trace(M) / n
    return out


def empirical_transition_matrix(path, num_states: int | None = None):
    """Row-normalized transition counts along a single path.

    Returns ``(P_hat, visits)`` where ``visits[x]`` counts how often x was
    left from; rows never visited are NaN.  Diagnostic baseline only - the
    matrix costs O(|S|^2) memory, which is exactly what the estimator avoids.
    """
    states = np.asarray(path, dtype=np.int64)
    if states.ndim != 1 or len(states) < 2:
        raise ValueError("path must contain at least one transition")
    if states.min() < 0:
        raise ValueError("states must be non-negative indices")
    n = int(num_states) if num_states is not None else int(states.max()) + 1
    if states.max() >= n:
        raise ValueError("path visits states beyond num_states")
    counts = np.zeros((n, n))
    np.add.at(counts, (states[:-1], states[1:]), 1.0)
    visits = counts.sum(axis=1)
    P_hat = np.full((n, n), np.nan)
    seen = visits > 0
    P_hat[seen] = counts[seen] / visits[seen, None]
    return P_hat, visits.astype(np.int64)


# ---------------------------------------------------------------------------
# Random regular graphs
# ---------------------------------------------------------------------------


def _pair_stubs(size: int, degree: int, rng: np.random.Generator):
    """One pairing-model attempt; returns an edge set or None on failure.

    Clashing stubs (loops or repeated pairs) are re-shuffled among
    themselves until none remain or no valid pairing of the leftovers
    exists, which keeps the rejection rate workable at higher degrees.
    """
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(size), degree)
    for _ in range(1000):
        if not len(stubs):
            break
        rng.shuffle(stubs)
        leftovers = []
        for s1, s2 in zip(stubs[0::2], stubs[1::2]):
            a, b = (int(s1), int(s2)) if s1 < s2 else (int(s2), int(s1))
            if a != b and (a, b) not in edges:
                edges.add((a, b))
            else:
                leftovers.extend((a, b))
        if len(leftovers) == len(stubs):
            # Shuffling can no longer make progress if every leftover pair clashes.
            candidates = set(leftovers)
            if not any(
                a != b and (min(a, b), max(a, b)) not in edges
                for a in candidates
                for b in candidates
            ):
                return None
        stubs = np.array(leftovers, dtype=np.int64)
    if len(stubs):
        return None
    return edges


def _is_connected(size: int, neighbors: np.ndarray) -> bool:
    seen = np.zeros(size, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        x = stack.pop()
        for y in neighbors[x]:
            if not seen[y]:
                seen[y] = True
                stack.append(int(y))
    return bool(seen.all())


def generate_regular_graph(size: int, degree: int, seed: int, max_tries: int = 200) -> RegularGraphChain:
    """Sample a simple connected d-regular graph via the pairing model.

    Loops and multi-edges are rejected and re-drawn; disconnected samples
    are regenerated.  Deterministic given ``seed``.  Raises RuntimeError
    when ``max_tries`` attempts all fail (vanishingly unlikely at the
    moderate sizes this targets).
    """
    if degree < 1 or degree >= size:
        raise ValueError("degree must satisfy 1 <= degree < size")
    if (size * degree) % 2 != 0:
        raise ValueError("size * degree must be even (handshake lemma)")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        edges = _pair_stubs(size, degree, rng)
        if edges is None:
            continue
        neighbors = np.full((size, degree), -1, dtype=np.int64)
        fill = np.zeros(size, dtype=np.int64)
        for a, b in sorted(edges):
            neighbors[a, fill[a]] = b
            fill[a] += 1
            neighbors[b, fill[b]] = a
            fill[b] += 1
        if not _is_connected(size, neighbors):
            continue
        return RegularGraphChain(size=size, degree=degree, neighbors=neighbors, seed=seed)
    raise RuntimeError(
        f"could not generate a simple connected {degree}-regular graph on {size} "
        f"vertices after {max_tries} attempts"
    )


# ---------------------------------------------------------------------------
# Dense-matrix file format
# ---------------------------------------------------------------------------


def load_matrix_chain(path) -> DenseMatrixChain:
    """Read a dense chain: first line |S|, then |S| rows of probabilities."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            n = int(header)
        except ValueError:
            raise ValueError(f"first line must be the state count, got {header!r}") from None
        rows = []
        for i in range(n):
            line = fh.readline()
            if not line:
                raise ValueError(f"expected {n} matrix rows, file ended after {i}")
            row = [float(tok) for tok in line.split()]
            if len(row) != n:
                raise ValueError(f"row {i} has {len(row)} entries, expected {n}")
            rows.append(row)
    return DenseMatrixChain(np.array(rows))


def save_matrix_chain(chain: DenseMatrixChain, path) -> None:
    """Write a dense chain in the format `load_matrix_chain` reads."""
    P = chain.transition_matrix()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(P)}\n")
        for row in P:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
