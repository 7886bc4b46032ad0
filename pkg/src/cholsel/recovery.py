"""Recovery of planted sparse factors from their Gram matrix.

Plant a random sparse lower-triangular factor ``L`` with a dominant
diagonal, form ``Q = L L'``, and try to recover the planted sparsity pattern
column by column.  Conditional selection works on the covariance ``inv(Q)``;
the correlation/covariance/random baselines read ``Q`` directly.  Patterns
use the natural index order (no geometric ordering is involved).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import NumericalError
from .kernels import MatrixSource
from .metrics import MetricReport, iou
from .selection import select_from_source_single

RECOVERY_METHODS = ("cknn", "corr", "knn", "random")


@dataclass(frozen=True)
class RecoveryConfig:
    """Planting and recovery parameters.

    ``input_mode`` declares what matrix :func:`recover_pattern` receives:
    the precision ``Q`` itself or the covariance ``inv(Q)``.
    """

    n: int
    s: int
    diag_value: float = 10.0
    noise: float = 0.0
    input_mode: str = "precision"
    method: str = "cknn"

    def __post_init__(self):
        if not 0 <= self.s < self.n:
            raise ValueError("need 0 <= s < n nonzeros per column")
        if self.diag_value <= 0:
            raise ValueError("diag_value must be positive")
        if self.noise < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.input_mode not in ("precision", "covariance"):
            raise ValueError("input_mode must be 'precision' or 'covariance'")
        if self.method not in RECOVERY_METHODS:
            raise ValueError(f"method must be one of {RECOVERY_METHODS}")


def plant_factor(config, seed=0):
    """Sample the planted pattern and its Gram matrix ``Q = L L'``.

    Each column draws ``s`` strictly-lower row indices uniformly (all of
    them when fewer exist) with standard normal values; the diagonal is a
    large constant.  Optional symmetric noise perturbs ``Q`` entrywise.
    """
    rng = np.random.default_rng(seed)
    n = config.n
    L = np.zeros((n, n))
    np.fill_diagonal(L, config.diag_value)
    pattern = []
    for i in range(n):
        avail = n - i - 1
        take = min(config.s, avail)
        rows = i + 1 + np.sort(rng.choice(avail, size=take, replace=False)) \
            if take else np.empty(0, dtype=np.intp)
        L[rows, i] = rng.standard_normal(take)
        pattern.append(np.concatenate([[i], rows]).astype(np.intp))
    q = L @ L.T
    if config.noise > 0:
        noise = rng.normal(scale=np.sqrt(config.noise), size=(n, n))
        sym = np.tril(noise) + np.tril(noise, -1).T
        q = q + sym
    return pattern, q


def _top_abs(scores, successors, s):
    order = np.lexsort((successors, -scores))
    return np.sort(successors[order[:s]])


def recover_pattern(matrix, config, seed=0):
    """Recover a per-column sparsity pattern from ``Q`` or ``inv(Q)``.

    Conditional selection treats the matrix as a covariance and picks the
    successors that most explain each column's diagonal entry; losing
    positive definiteness (noisy input) aborts that column, keeping the
    entries selected so far.  Returns ``(pattern, report, aborted_columns)``;
    the caller scores the pattern against the planted truth.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = config.n
    if matrix.shape != (n, n):
        raise ValueError("matrix shape disagrees with the configuration")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    aborted = 0

    if config.method == "cknn":
        if config.input_mode == "precision":
            try:
                fac = cho_factor(matrix, lower=True)
                cov = cho_solve(fac, np.eye(n))
            except np.linalg.LinAlgError:
                try:
                    cov = np.linalg.inv(matrix)
                except np.linalg.LinAlgError as err:
                    raise NumericalError(
                        "noisy matrix is singular; conditional recovery "
                        "breaks down") from err
        else:
            cov = matrix
        source = MatrixSource(cov)
        pattern = []
        for i in range(n):
            succ = np.arange(i + 1, n)
            take = min(config.s, len(succ))
            if take == 0:
                pattern.append(np.asarray([i], dtype=np.intp))
                continue
            chosen, column_aborted = select_from_source_single(
                source, succ, i, take, partial_on_error=True)
            aborted += int(column_aborted)
            pattern.append(np.concatenate([[i], np.sort(chosen)]).astype(np.intp))
    else:
        q = matrix if config.input_mode == "precision" else np.linalg.inv(matrix)
        pattern = []
        for i in range(n):
            succ = np.arange(i + 1, n)
            take = min(config.s, len(succ))
            if take == 0:
                pattern.append(np.asarray([i], dtype=np.intp))
                continue
            if config.method == "corr":
                scores = np.abs(q[succ, i]) / np.sqrt(q[succ, succ] * q[i, i])
                rows = _top_abs(scores, succ, take)
            elif config.method == "knn":
                rows = _top_abs(np.abs(q[succ, i]), succ, take)
            else:  # random
                rows = np.sort(rng.choice(succ, size=take, replace=False))
            pattern.append(np.concatenate([[i], rows]).astype(np.intp))

    report = MetricReport(
        nnz=int(sum(len(c) for c in pattern)),
        wall_time=time.perf_counter() - start,
    )
    return pattern, report, aborted


def recovery_accuracy(config, seed=0):
    """Plant, recover, and score one instance; returns the report."""
    truth, q = plant_factor(config, seed=seed)
    pattern, report, aborted = recover_pattern(q, config, seed=seed)
    report.iou = iou(pattern, truth)
    return pattern, truth, report, aborted
