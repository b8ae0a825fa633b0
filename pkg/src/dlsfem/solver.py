"""Krylov solvers for the Hermitian positive definite least-squares system.

Conjugate gradients is the default; BiCGStab is kept as an alternative
for experiments.  Preconditioners are diagonal (Jacobi) or element block
Jacobi, the latter exact on each element's (u, p) block.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import AssembledSystem

log = logging.getLogger(__name__)

METHODS = ("cg", "bicgstab")
PRECONDITIONERS = ("none", "jacobi", "block_jacobi")
MAX_RESTARTS = 3


class SolverError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    method: str = "cg"
    preconditioner: str = "block_jacobi"
    rel_tolerance: float = 1e-10
    max_iterations: int | None = None  # default 10 * N
    check_monotone: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; choose from {METHODS}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}; choose from {PRECONDITIONERS}")
        if not 0 < self.rel_tolerance < 1:
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    relative_residual: float
    elapsed: float
    residual_history: list[float] = field(default_factory=list)
    restarts: int = 0


class BlockJacobi:
    """Exact inverse of dense diagonal blocks addressed by index arrays."""

    def __init__(self, blocks: np.ndarray, dofs: np.ndarray):
        self.dofs = dofs
        self.inverse = np.linalg.inv(blocks)

    @classmethod
    def from_matrix(cls, matrix: sp.spmatrix, dofs: np.ndarray) -> "BlockJacobi":
        """Extract the blocks ``matrix[dofs[e]][:, dofs[e]]`` from a sparse matrix."""
        csr = sp.csr_matrix(matrix)
        n_blocks, size = dofs.shape
        owner = np.full(csr.shape[0], -1)
        pos = np.zeros(csr.shape[0], dtype=int)
        owner[dofs] = np.arange(n_blocks)[:, None]
        pos[dofs] = np.arange(size)[None, :]
        coo = csr.tocoo()
        keep = (owner[coo.row] == owner[coo.col]) & (owner[coo.row] >= 0)
        blocks = np.zeros((n_blocks, size, size), dtype=csr.dtype)
        np.add.at(blocks, (owner[coo.row[keep]], pos[coo.row[keep]], pos[coo.col[keep]]), coo.data[keep])
        return cls(blocks, dofs)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        z = np.empty_like(r)
        z[self.dofs] = np.einsum("nij,nj->ni", self.inverse, r[self.dofs])
        return z


def make_preconditioner(system: AssembledSystem, kind: str):
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        diag = system.matrix.diagonal()
        if np.any(diag == 0):
            raise SolverError("zero diagonal entry; Jacobi preconditioner undefined")
        inv = 1.0 / diag
        return lambda r: inv * r
    dofs = system.layout.element_dofs()
    if system.diagonal_blocks is not None:
        return BlockJacobi(system.diagonal_blocks, dofs)
    return BlockJacobi.from_matrix(system.matrix, dofs)


def _cg(matrix, b, precond, tol, max_iter, history, check_monotone, x0=None):
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matrix @ x
    z = precond(r)
    d = z.copy()
    rz = np.vdot(r, z)
    b_norm = np.linalg.norm(b)
    energy_prev = float(np.real(np.vdot(x, matrix @ x)) - 2 * np.real(np.vdot(x, b)))
    for it in range(1, max_iter + 1):
        ad = matrix @ d
        dad = np.vdot(d, ad).real
        if dad <= 0:
            raise SolverError("matrix is not positive definite along a search direction")
        alpha = rz / dad
        x += alpha * d
        r -= alpha * ad
        rel = np.linalg.norm(r) / b_norm
        history.append(float(rel))
        if check_monotone:
            # A-norm error decreases iff x* A x - 2 Re x* b decreases
            energy = float(np.real(np.vdot(x, matrix @ x)) - 2 * np.real(np.vdot(x, b)))
            if energy > energy_prev + 1e-12 * abs(energy_prev):
                raise SolverError(f"CG energy increased at iteration {it}")
            energy_prev = energy
        if rel <= tol:
            return x, it, True
        z = precond(r)
        rz_new = np.vdot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    return x, max_iter, False


def _true_residual(matrix, b, x) -> float:
    return float(np.linalg.norm(b - matrix @ x) / np.linalg.norm(b))


class _Breakdown(Exception):
    pass


def _bicgstab(matrix, b, precond, tol, max_iter, history, x0=None):
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matrix @ x
    r_hat = r.copy()
    rho = alpha = omega = 1.0 + 0j
    v = np.zeros_like(b)
    d = np.zeros_like(b)
    b_norm = np.linalg.norm(b)
    for it in range(1, max_iter + 1):
        rho_new = np.vdot(r_hat, r)
        if abs(rho_new) < 1e-300 or abs(omega) < 1e-300:
            raise _Breakdown(x, it)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        d = r + beta * (d - omega * v)
        dh = precond(d)
        v = matrix @ dh
        denom = np.vdot(r_hat, v)
        if abs(denom) < 1e-300:
            raise _Breakdown(x, it)
        alpha = rho / denom
        s = r - alpha * v
        sh = precond(s)
        t = matrix @ sh
        tt = np.vdot(t, t).real
        omega = np.vdot(t, s) / tt if tt > 0 else 0.0
        x += alpha * dh + omega * sh
        r = s - omega * t
        rel = np.linalg.norm(r) / b_norm
        history.append(float(rel))
        if rel <= tol:
            return x, it, True
    return x, max_iter, False


def solve(system: AssembledSystem, config: SolverConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` from a zero initial guess.

    Stops when ``||b - A x|| <= rel_tolerance * ||b||``.  A zero right-hand
    side returns the zero vector after 0 iterations.
    """
    config = config or SolverConfig()
    b = np.asarray(system.rhs, dtype=complex)
    n = len(b)
    max_iter = config.max_iterations or 10 * n
    start = time.perf_counter()
    if np.linalg.norm(b) == 0:
        return np.zeros(n, dtype=complex), SolveReport(True, 0, 0.0, 0.0)
    precond = make_preconditioner(system, config.preconditioner)
    history: list[float] = []
    restarts = 0
    if config.method == "cg":
        x, iters, ok = _cg(system.matrix, b, precond, config.rel_tolerance, max_iter, history, config.check_monotone)
        # the recursive residual can drift from the true one; warm-restart if so
        while ok and restarts < MAX_RESTARTS and _true_residual(system.matrix, b, x) > config.rel_tolerance:
            restarts += 1
            x, more, ok = _cg(system.matrix, b, precond, config.rel_tolerance, max(max_iter - iters, 1),
                              history, config.check_monotone, x)
            iters += more
    else:
        try:
            x, iters, ok = _bicgstab(system.matrix, b, precond, config.rel_tolerance, max_iter, history)
        except _Breakdown as exc:
            x_partial, used = exc.args
            log.warning("BiCGStab breakdown at iteration %d; restarting once", used)
            restarts = 1
            try:
                x, more, ok = _bicgstab(system.matrix, b, precond, config.rel_tolerance, max_iter - used, history, x_partial)
                iters = used + more
            except _Breakdown as exc2:
                raise SolverError("BiCGStab broke down twice") from exc2
    rel = _true_residual(system.matrix, b, x)
    ok = ok and rel <= config.rel_tolerance
    report = SolveReport(ok, iters, rel, time.perf_counter() - start, history, restarts)
    log.info("%s/%s: %d iterations, relative residual %.3e, %.2fs", config.method,
             config.preconditioner, iters, rel, report.elapsed)
    if not ok:
        log.warning("solver did not converge in %d iterations (residual %.3e)", max_iter, rel)
    return x, report
