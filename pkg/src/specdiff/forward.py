"""Forward corruption process: per-step transition kernels, their cumulative
products, marginals, sampling, and the closed-form one-step posterior.

Kernels act position-wise and independently. Every kernel is a row-stochastic
matrix over the corrupted alphabet {0..S} (clean tokens plus the mask symbol);
uniform-mixing schedules simply never place mass on the mask, so the two kinds
share one alphabet and one code path.

The one-step posterior uses

    q(x_{t-1} | x_t, x_0)  propto  Q_t[x_{t-1}, x_t] * Qbar_{t-1}[x_0, x_{t-1}]

with Qbar_0 defined as the identity so the formula is well-posed at t = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Categorical,
    SeededRng,
    Vocabulary,
    categorical_sample,
    check_clean_sequence,
)
from .errors import InvalidBeta, TimeOutOfRange, ZeroProbabilityEvent

__all__ = [
    "KernelSchedule",
    "build_absorbing_schedule",
    "build_uniform_schedule",
    "constant_betas",
    "forward_posterior",
    "marginal",
    "recorrupt_position",
    "sample_forward",
]

ROW_ATOL = 1e-9


def _check_kernel(matrix: np.ndarray, n: int) -> np.ndarray:
    m = np.array(matrix, dtype=float, copy=True)
    if m.shape != (n, n):
        raise ValueError(f"kernel must be {n}x{n}, got {m.shape}")
    if np.any(m < 0.0):
        raise ValueError("kernel entries must be nonnegative")
    rows = m.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > ROW_ATOL):
        raise ValueError("kernel rows must each sum to one")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class KernelSchedule:
    """Corruption kernels Q_1..Q_T plus cumulative products Qbar_0..Qbar_T.

    ``cumulative[t]`` is Qbar_t with Qbar_0 the identity. Matrices are
    read-only; the schedule is safe to share across threads.
    """

    vocab: Vocabulary
    kind: str
    betas: tuple[float, ...]
    kernels: tuple[np.ndarray, ...]
    cumulative: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("absorbing", "uniform"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if len(self.kernels) == 0:
            raise ValueError("a schedule needs at least one step")
        if len(self.cumulative) != len(self.kernels) + 1:
            raise ValueError("cumulative list must cover t = 0..T")

    @property
    def steps(self) -> int:
        return len(self.kernels)

    def kernel(self, t: int) -> np.ndarray:
        """Q_t for 1 <= t <= T."""
        if not 1 <= t <= self.steps:
            raise TimeOutOfRange(f"kernel index t={t} outside 1..{self.steps}")
        return self.kernels[t - 1]

    def cum(self, t: int) -> np.ndarray:
        """Qbar_t for 0 <= t <= T (Qbar_0 is the identity)."""
        if not 0 <= t <= self.steps:
            raise TimeOutOfRange(f"cumulative index t={t} outside 0..{self.steps}")
        return self.cumulative[t]


def _check_betas(betas: Sequence[float]) -> tuple[float, ...]:
    out = tuple(float(b) for b in betas)
    if len(out) == 0:
        raise InvalidBeta("beta schedule must be nonempty")
    for i, b in enumerate(out):
        if not 0.0 <= b <= 1.0 or math.isnan(b):
            raise InvalidBeta(f"beta[{i}]={b} outside [0, 1]")
    return out


def _finish(vocab: Vocabulary, kind: str, betas: tuple[float, ...],
            kernels: list[np.ndarray]) -> KernelSchedule:
    n = vocab.corrupt_size
    checked = tuple(_check_kernel(k, n) for k in kernels)
    cums = [np.eye(n)]
    for k in checked:
        cums.append(cums[-1] @ k)
    for c in cums:
        c.setflags(write=False)
    return KernelSchedule(vocab, kind, betas, checked, tuple(cums))


def build_absorbing_schedule(vocab: Vocabulary, betas: Sequence[float]) -> KernelSchedule:
    """Mask-absorbing chain: each step keeps a clean token with probability
    1 - beta_t and replaces it with the mask otherwise; the mask is absorbing.
    """
    bs = _check_betas(betas)
    n, mask = vocab.corrupt_size, vocab.mask_id
    kernels = []
    for b in bs:
        q = np.zeros((n, n))
        for v in range(vocab.size):
            q[v, v] = 1.0 - b
            q[v, mask] = b
        q[mask, mask] = 1.0
        kernels.append(q)
    return _finish(vocab, "absorbing", bs, kernels)


def build_uniform_schedule(vocab: Vocabulary, betas: Sequence[float]) -> KernelSchedule:
    """Uniform-mixing chain over the S clean tokens:
    Q_t = (1 - beta_t) I + beta_t (1/S) over the clean block.

    The mask row is identity padding so all schedules share the {0..S}
    alphabet; uniform chains never reach it.
    """
    bs = _check_betas(betas)
    n, s = vocab.corrupt_size, vocab.size
    kernels = []
    for b in bs:
        q = np.zeros((n, n))
        q[:s, :s] = (1.0 - b) * np.eye(s) + (b / s) * np.ones((s, s))
        q[vocab.mask_id, vocab.mask_id] = 1.0
        kernels.append(q)
    return _finish(vocab, "uniform", bs, kernels)


def constant_betas(steps: int, terminal_rate: float) -> tuple[float, ...]:
    """Constant per-step rate such that a token survives all `steps` steps
    with probability 1 - terminal_rate."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0.0 <= terminal_rate <= 1.0:
        raise InvalidBeta(f"terminal rate {terminal_rate} outside [0, 1]")
    beta = 1.0 - (1.0 - terminal_rate) ** (1.0 / steps)
    return tuple([beta] * steps)


def marginal(x0: int, t: int, sched: KernelSchedule) -> Categorical:
    """q(X_t = . | X_0 = x0): row x0 of Qbar_t, for 1 <= t <= T."""
    if not 0 <= x0 < sched.vocab.size:
        raise ValueError(f"clean token {x0} out of range")
    if not 1 <= t <= sched.steps:
        raise TimeOutOfRange(f"t={t} outside 1..{sched.steps}")
    return Categorical(sched.cum(t)[x0, :])


def sample_forward(x0: Sequence[int], t: int, sched: KernelSchedule,
                   rng: SeededRng) -> tuple[int, ...]:
    """Corrupt a clean sequence position-wise and independently at level t."""
    clean = check_clean_sequence(x0, sched.vocab)
    return tuple(categorical_sample(marginal(v, t, sched), rng) for v in clean)


def forward_posterior(xt: int, x0: int, t: int, sched: KernelSchedule) -> Categorical:
    """Closed-form q(X_{t-1} = . | X_t = xt, X_0 = x0) for one position.

    Raises ZeroProbabilityEvent when (xt | x0) is unreachable at level t.
    """
    if not 0 <= x0 < sched.vocab.size:
        raise ValueError(f"clean token {x0} out of range")
    if not 0 <= xt <= sched.vocab.mask_id:
        raise ValueError(f"corrupted token {xt} out of range")
    if not 1 <= t <= sched.steps:
        raise TimeOutOfRange(f"t={t} outside 1..{sched.steps}")
    reach = float(sched.cum(t)[x0, xt])
    if reach <= 0.0:
        raise ZeroProbabilityEvent(
            f"X_t={xt} has zero probability given X_0={x0} at t={t}")
    w = sched.kernel(t)[:, xt] * sched.cum(t - 1)[x0, :]
    return Categorical(w / w.sum())


def recorrupt_position(x0_i: int, t: int, sched: KernelSchedule, rng: SeededRng) -> int:
    """One fresh draw from q(X_t | X_0 = x0_i) for a single position."""
    return categorical_sample(marginal(x0_i, t, sched), rng)
