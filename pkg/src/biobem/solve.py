"""Restarted GMRES on block operator systems and a damped Picard driver."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .model import BemError


class ConvergenceError(BemError):
    """Iteration stopped before reaching its tolerance.

    ``history`` holds the residual (GMRES) or iterate-change (Picard) trace.
    """

    def __init__(self, message: str, history=None, state=None):
        super().__init__(message)
        self.history = list(history or [])
        self.state = state


@dataclass(frozen=True)
class SolverConfig:
    rel_tolerance: float = 1e-8
    max_iterations: int = 1000
    restart: int = 60
    picard_damping: float = 0.5
    picard_tolerance: float = 1e-8
    picard_max_outer: int = 100

    def __post_init__(self):
        for name in ("rel_tolerance", "picard_tolerance", "picard_damping"):
            if not (getattr(self, name) > 0 and math.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be positive")
        for name in ("max_iterations", "restart", "picard_max_outer"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.picard_damping > 1:
            raise ValueError("picard_damping must lie in (0, 1]")

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


IDENTITY = "I"


class BlockSystem:
    """Square block system with blocks given as sums of ``(coefficient, operator)``.

    ``blocks[r][c]`` is ``None`` (empty) or a list of terms; an operator is
    anything with ``apply`` and ``diagonal`` or the string ``IDENTITY``.
    Block sizes are read from the operators.
    """

    def __init__(self, blocks, rhs: Sequence[np.ndarray], sizes: Sequence[int] | None = None):
        self.blocks = [[list(b) if b else None for b in row] for row in blocks]
        nb = len(self.blocks)
        if any(len(row) != nb for row in self.blocks):
            raise ValueError("block grid must be square")
        if sizes is None:
            sizes = [None] * nb
            for r, row in enumerate(self.blocks):
                for c, terms in enumerate(row):
                    for _, op in terms or ():
                        if op is not IDENTITY:
                            for k in (r, c):
                                if sizes[k] not in (None, op.n):
                                    raise ValueError("inconsistent block dimensions")
                                sizes[k] = op.n
            if None in sizes:
                sizes = [s if s is not None else len(rhs[k]) for k, s in enumerate(sizes)]
        self.sizes = [int(s) for s in sizes]
        for r, row in enumerate(self.blocks):
            for c, terms in enumerate(row):
                for _, op in terms or ():
                    if op is IDENTITY:
                        if self.sizes[r] != self.sizes[c]:
                            raise ValueError("identity block must be square")
                    elif op.n != self.sizes[r] or op.n != self.sizes[c]:
                        raise ValueError("inconsistent block dimensions")
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        if len(rhs) != nb or any(len(b) != s for b, s in zip(rhs, self.sizes)):
            raise ValueError("right-hand side does not match block sizes")
        self.rhs = np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in rhs])

    @property
    def dimension(self) -> int:
        return int(self.offsets[-1])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.offsets[k] : self.offsets[k + 1]] for k in range(len(self.sizes))]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        parts = self.split(np.asarray(x, dtype=float))
        # batch every operator over all block columns it acts on
        requests: dict[int, tuple] = {}
        for row in self.blocks:
            for c, terms in enumerate(row):
                for _, op in terms or ():
                    if op is not IDENTITY:
                        entry = requests.setdefault(id(op), (op, []))
                        if c not in entry[1]:
                            entry[1].append(c)
        results = {}
        for key, (op, cols) in requests.items():
            Y = op.apply(np.stack([parts[c] for c in cols], axis=1))
            for k, c in enumerate(cols):
                results[key, c] = Y[:, k]
        out = np.zeros(self.dimension)
        for r, row in enumerate(self.blocks):
            seg = out[self.offsets[r] : self.offsets[r + 1]]
            for c, terms in enumerate(row):
                for coef, op in terms or ():
                    seg += coef * (parts[c] if op is IDENTITY else results[id(op), c])
        return out

    __matmul__ = matvec

    def block_diagonal(self) -> np.ndarray:
        """Diagonal of each diagonal block, concatenated."""
        diag = np.zeros(self.dimension)
        for r in range(len(self.sizes)):
            seg = diag[self.offsets[r] : self.offsets[r + 1]]
            for coef, op in self.blocks[r][r] or ():
                seg += coef * (1.0 if op is IDENTITY else op.diagonal())
        return diag

    def residual(self, x) -> float:
        return float(np.linalg.norm(self.matvec(x) - self.rhs) / max(np.linalg.norm(self.rhs), np.finfo(float).tiny))


@dataclass
class GmresResult:
    solution: list[np.ndarray]
    iterations: int
    residual_history: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(self.solution)

    @property
    def relative_residual(self) -> float:
        return self.residual_history[-1][2] if self.residual_history else 0.0


def _as_linear(system):
    if isinstance(system, BlockSystem):
        return system.matvec, system.rhs, system.block_diagonal(), system
    A, b = system
    if isinstance(A, np.ndarray):
        return (lambda v: A @ v), np.asarray(b, dtype=float), np.diag(A).copy(), None
    return A.apply, np.asarray(b, dtype=float), A.diagonal(), None


def gmres(system, config: SolverConfig = SolverConfig(), x0=None, precondition: bool = True) -> GmresResult:
    """Restarted GMRES with right diagonal scaling.

    ``system`` is a :class:`BlockSystem` or a pair ``(A, b)`` with ``A`` a
    matrix or operator.  The residual history records
    ``(outer, inner, ||b - Ax|| / ||b||)`` for every inner step.
    Raises :class:`ConvergenceError` after ``max_iterations`` inner steps.
    """
    matvec, b, diag, block = _as_linear(system)
    n = b.shape[0]
    if precondition and np.all(diag != 0) and np.all(np.isfinite(diag)):
        scale = 1.0 / diag
    else:
        scale = np.ones(n)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    history: list[tuple[int, int, float]] = []

    def _pack(x):
        return block.split(x) if block is not None else [x]

    if bnorm == 0.0:
        return GmresResult(_pack(np.zeros(n)), 0, [(0, 0, 0.0)])
    tol = config.rel_tolerance * bnorm
    m = max(1, min(int(config.restart), n))
    total = 0
    outer = 0
    while True:
        r = b - matvec(x)
        beta = float(np.linalg.norm(r))
        history.append((outer, 0, beta / bnorm))
        if beta <= tol:
            return GmresResult(_pack(x), total, history)
        if total >= config.max_iterations:
            raise ConvergenceError(
                f"GMRES did not reach {config.rel_tolerance:g} in {config.max_iterations} iterations "
                f"(residual {beta / bnorm:.3e})",
                history,
                x,
            )
        Q = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        Q[0] = r / beta
        g[0] = beta
        k_done = 0
        for k in range(m):
            w = matvec(scale * Q[k])
            for j in range(k + 1):  # modified Gram-Schmidt
                H[j, k] = np.dot(Q[j], w)
                w -= H[j, k] * Q[j]
            H[k + 1, k] = np.linalg.norm(w)
            breakdown = H[k + 1, k] <= 1e-14 * max(abs(H[: k + 1, k]).max(), 1e-300)
            if not breakdown:
                Q[k + 1] = w / H[k + 1, k]
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            denom = math.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_done = k + 1
            history.append((outer, k + 1, abs(g[k + 1]) / bnorm))
            if abs(g[k + 1]) <= tol or breakdown or total >= config.max_iterations:
                break
        y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
        x = x + scale * (Q[:k_done].T @ y)
        outer += 1


@dataclass
class PicardResult:
    state: object
    nonlinearity: np.ndarray
    iterations: int
    history: list[float]
    converged: bool = True


def picard(
    linearized_solve: Callable[[np.ndarray], object],
    update: Callable[[object], np.ndarray],
    initial_nonlinearity,
    config: SolverConfig = SolverConfig(),
) -> PicardResult:
    """Damped fixed-point iteration on a frozen nonlinearity.

    Each outer step solves the problem with the nonlinearity frozen, computes
    the nonlinearity implied by that solution and relaxes towards it:
    ``h <- theta * h_new + (1 - theta) * h_old``.  Stops when
    ``||h_new - h_old|| <= picard_tolerance * ||h_old||`` (or both vanish).
    """
    h = np.array(initial_nonlinearity, dtype=float)
    theta = config.picard_damping
    history: list[float] = []
    for it in range(1, config.picard_max_outer + 1):
        state = linearized_solve(h)
        h_new = np.asarray(update(state), dtype=float)
        change = float(np.linalg.norm(h_new - h))
        scale = float(np.linalg.norm(h))
        rel = change / scale if scale > 0 else (0.0 if change == 0 else math.inf)
        history.append(rel)
        if change <= config.picard_tolerance * scale or change == 0.0:
            return PicardResult(state, h, it, history)
        h = theta * h_new + (1.0 - theta) * h
    raise ConvergenceError(
        f"Picard iteration did not converge in {config.picard_max_outer} outer steps (last change {history[-1]:.3e})",
        history,
        state,
    )


def write_trace(history, path):
    """Residual history CSV: outer_iter, inner_iter, relative_residual."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["outer_iter", "inner_iter", "relative_residual"])
        for outer, inner, res in history:
            writer.writerow([outer, inner, f"{res:.17g}"])
