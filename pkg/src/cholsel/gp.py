"""Gaussian-process regression: dense reference, directed, and global sparse.

The global route factorizes the joint covariance of prediction and training
points with the prediction points first in the ordering; the posterior mean
and covariance then come out of triangular work on factor sub-blocks:

    mean = -inv(Lpp)' Ltp' y,    cov = inv(Lpp)' inv(Lpp)

for the factor blocked as ``[[Lpp, 0], [Ltp, Ltt]]``.  Directed regression
instead restricts the dense formulas to a greedily selected subset of the
training points, per prediction point or jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .exceptions import NotPositiveDefiniteError
from .factorization import factorize
from .kernels import assemble_covariance
from .ordering import Ordering, reverse_maximin
from .selection import select_multi, select_single


@dataclass
class RegressionResult:
    """Posterior summary at the prediction points.

    ``mean`` matches the shape of the observations (vectorized over trailing
    realization axes); ``var`` holds per-point posterior variances clamped
    at zero; ``cov`` is the full posterior covariance when requested.
    """

    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _clamp_variances(var):
    var = np.asarray(var, dtype=float)
    if np.any(var < -1e-8):
        raise NotPositiveDefiniteError(
            f"posterior variance fell below tolerance: min {var.min():.3e}")
    return np.clip(var, 0.0, None)


def _check_training(train, y, pred):
    train = np.asarray(train, dtype=float)
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    y = np.asarray(y, dtype=float)
    if train.ndim != 2 or pred.shape[1] != train.shape[1]:
        raise ValueError("training and prediction coordinates disagree")
    if y.shape[0] != train.shape[0]:
        raise ValueError("one observation row per training point is required")
    return train, y, pred


def posterior_dense(spec, train, y, pred, full_cov=False):
    """Exact zero-mean posterior by dense solves."""
    train, y, pred = _check_training(train, y, pred)
    joint = np.vstack([train, pred])
    n = train.shape[0]
    k_tt = assemble_covariance(spec, joint, np.arange(n), np.arange(n))
    k_tp = assemble_covariance(spec, joint, np.arange(n),
                               np.arange(n, joint.shape[0]))
    k_pp = assemble_covariance(spec, joint, np.arange(n, joint.shape[0]),
                               np.arange(n, joint.shape[0]))
    try:
        f = cho_factor(k_tt, lower=True)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError("training covariance is singular") from err
    mean = k_tp.T @ cho_solve(f, y)
    cov = k_pp - k_tp.T @ cho_solve(f, k_tp)
    result = RegressionResult(mean=mean, var=_clamp_variances(np.diag(cov)))
    if full_cov:
        result.cov = cov
    return result


def regress_directed(spec, train, y, pred, budget, multi=False,
                     candidates=None):
    """Posterior at the prediction points from a selected training subset.

    With ``multi`` one jointly informative subset serves every prediction
    point; otherwise each point gets its own selection.  A budget covering
    all of the training data reduces to the dense posterior.
    """
    train, y, pred = _check_training(train, y, pred)
    n = train.shape[0]
    cand = np.arange(n) if candidates is None else np.asarray(candidates,
                                                              dtype=np.intp)
    if budget >= len(cand):
        out = posterior_dense(spec, train[cand], y[cand], pred)
        out.diagnostics["selected_sizes"] = [len(cand)] * pred.shape[0]
        return out
    if budget == 0:
        k_pp = assemble_covariance(spec, pred)
        zero_shape = (pred.shape[0],) + y.shape[1:]
        return RegressionResult(mean=np.zeros(zero_shape),
                                var=_clamp_variances(np.diag(k_pp)),
                                diagnostics={"selected_sizes": [0] * pred.shape[0]})
    if multi:
        chosen = select_multi(spec, train, pred, budget, candidates=cand)
        out = posterior_dense(spec, train[chosen], y[chosen], pred)
        out.diagnostics["selected_sizes"] = [len(chosen)] * pred.shape[0]
        return out
    means, variances, sizes = [], [], []
    for t in range(pred.shape[0]):
        chosen = select_single(spec, train, pred[t], budget, candidates=cand)
        one = posterior_dense(spec, train[chosen], y[chosen], pred[t : t + 1])
        means.append(one.mean[0])
        variances.append(one.var[0])
        sizes.append(len(chosen))
    return RegressionResult(mean=np.stack(means), var=np.asarray(variances),
                            diagnostics={"selected_sizes": sizes})


def prediction_first_ordering(train, pred, p=1):
    """Joint ordering with every prediction point before every training point.

    Each block is ordered internally by reverse p-maximin; prediction points
    occupy positions ``0..m-1`` of the joint point set ``[pred; train]``.
    """
    train = np.asarray(train, dtype=float)
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    m = pred.shape[0]
    ord_pred = reverse_maximin(pred, p=min(p, m))
    ord_train = reverse_maximin(train, p=min(p, train.shape[0]))
    perm = np.concatenate([ord_pred.perm, ord_train.perm + m])
    scales = np.concatenate([ord_pred.scales, ord_train.scales])
    return Ordering(perm=perm, scales=scales, p=p)


def regress_global(spec, train, y, pred, method="select", *, rho=2.0,
                   rho_s=2.0, k=None, lam=1.5, p=2, n_jobs=1,
                   full_cov=False):
    """Posterior via a sparse factor of the joint covariance.

    Factorizes ``[pred; train]`` with prediction points first; the factor's
    top-left block and its coupling to the training block yield the
    posterior with two triangular solves.  Observations may carry trailing
    realization axes.
    """
    train, y, pred = _check_training(train, y, pred)
    m = pred.shape[0]
    joint = np.vstack([pred, train])
    ordering = prediction_first_ordering(train, pred, p=p)
    res = factorize(spec, joint, method, rho=rho, rho_s=rho_s, k=k, lam=lam,
                    ordering=ordering, n_jobs=n_jobs)
    L = res.factor.matrix
    lpp = L[:m, :m].toarray()
    ltp = L[m:, :m]

    pred_perm = res.ordering.perm[:m]
    train_perm = res.ordering.perm[m:] - m
    y_perm = y[train_perm]

    rhs = ltp.T @ y_perm
    mean_pos = -solve_triangular(lpp.T, rhs, lower=False)
    inv_lpp = solve_triangular(lpp, np.eye(m), lower=True)
    var_pos = (inv_lpp * inv_lpp).sum(axis=0)

    mean = np.empty_like(mean_pos)
    mean[pred_perm] = mean_pos
    var = np.empty(m)
    var[pred_perm] = var_pos
    result = RegressionResult(
        mean=mean, var=_clamp_variances(var),
        diagnostics={"nnz": res.factor.nnz, "timings": res.timings})
    if full_cov:
        cov_pos = inv_lpp.T @ inv_lpp
        cov = np.empty((m, m))
        cov[np.ix_(pred_perm, pred_perm)] = cov_pos
        result.cov = cov
    return result
