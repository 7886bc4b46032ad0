"""Greedy conditional selection of informative points.

Given candidate points and one or more targets, these routines repeatedly
pick the candidate carrying the most information about the targets,
conditional on everything selected so far.  Bookkeeping comes in two
interchangeable flavors: a partial Cholesky factor of the joint covariance
(the default, and the faster of the two) and explicitly maintained precision
matrices (kept for cross-validation).  Partial selection additionally keeps
the factor's columns sorted by an external point ordering so that a selected
point only conditions the targets it precedes is allowed to condition.

Determinism: objective ties always resolve toward the smallest point index.
Selection stops at the budget, when candidates run out, or when the best
remaining candidate improves the objective by less than ``ABORT_RTOL``
relative.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import NotPositiveDefiniteError, SingularBlockError
from .kernels import KernelSource

# Relative floor: a candidate whose conditional variance falls below this
# fraction of its marginal variance is ineligible, and selection stops when
# the best relative improvement drops below it.
ABORT_RTOL = 1e-12


def _argbest(values, labels, maximize):
    """Index of the extreme value; exact ties go to the smallest label."""
    best = np.max(values) if maximize else np.min(values)
    tied = np.flatnonzero(values == best)
    if len(tied) == 1:
        return int(tied[0])
    return int(tied[np.argmin(labels[tied])])


class PartialCholesky:
    """Left-looking partial Cholesky over a fixed set of points.

    Column ``c`` holds the covariance of every point with the owner of
    ``c``, conditional on all previous owners, divided by the owner's
    conditional standard deviation.  ``cond_var[j]`` tracks each point's
    variance conditional on the owners appended so far.
    """

    def __init__(self, source, points, capacity):
        self.source = source
        self.points = np.asarray(points, dtype=np.intp)
        # column-major storage: left-looking slices hit the BLAS fast path
        self.L = np.zeros((len(self.points), max(capacity, 0)), order="F")
        self.owners = []
        self.cond_var = np.asarray(source.diag(self.points), dtype=float).copy()
        self._diag0 = self.cond_var.copy()

    @property
    def ncols(self):
        return len(self.owners)

    def _fresh_column(self, local_k):
        return self.source.block(self.points, self.points[[local_k]])[:, 0]

    def append(self, local_k, allow_degenerate=False):
        """Append the column owned by local point ``local_k``.

        Returns the stored column.  A nonpositive pivot raises unless
        ``allow_degenerate``; then the owner is recorded with an all-zero
        column (it carries no information beyond the previous owners).
        """
        c = self.ncols
        col = self._fresh_column(local_k)
        if c:
            col -= self.L[:, :c] @ self.L[local_k, :c]
        pivot = col[local_k]
        if pivot <= ABORT_RTOL * self._diag0[local_k]:
            if allow_degenerate:
                self.owners.append(local_k)
                return self.L[:, c]
            raise NotPositiveDefiniteError(
                f"nonpositive pivot {pivot:.3e} appending column of point "
                f"{self.points[local_k]}"
            )
        u = col / np.sqrt(pivot)
        self.L[:, c] = u
        self.owners.append(local_k)
        self.cond_var -= u * u
        return u


def _prepare(source, candidates, targets):
    candidates = np.asarray(candidates, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    if len(np.intersect1d(candidates, targets)):
        raise ValueError("targets must not appear among the candidates")
    if len(np.unique(candidates)) != len(candidates):
        raise ValueError("duplicate candidate indices")
    return candidates, targets


def select_from_source_single(source, candidates, target, budget,
                              return_objectives=False, partial_on_error=False):
    """Greedy single-target selection via a partial Cholesky factor.

    Each round picks the candidate maximizing the squared conditional
    covariance with the target over its own conditional variance (the
    decrease in target variance).  Returns selected indices in order; with
    ``return_objectives`` also the target variance after each round.  With
    ``partial_on_error`` a loss of positive definiteness (possible for
    indefinite explicit matrices) ends selection instead of raising.
    """
    candidates, targets = _prepare(source, candidates, [int(target)])
    n = len(candidates)
    pts = np.concatenate([candidates, targets])
    pc = PartialCholesky(source, pts, min(budget, n))
    cov = source.block(pts, targets)[:, 0]
    active = np.ones(n, dtype=bool)
    selected, objectives = [], []
    aborted = False
    while len(selected) < budget and active.any():
        var = pc.cond_var[:n]
        elig = active & (var > ABORT_RTOL * pc._diag0[:n])
        if not elig.any():
            break
        gain = np.full(n, -np.inf)
        gain[elig] = cov[:n][elig] ** 2 / var[elig]
        best = _argbest(gain, candidates, maximize=True)
        tvar = pc.cond_var[n]
        if tvar <= 0 or gain[best] <= ABORT_RTOL * tvar:
            break
        try:
            u = pc.append(best)
        except NotPositiveDefiniteError:
            if partial_on_error:
                aborted = True
                break
            raise
        cov = cov - u * u[n]
        active[best] = False
        selected.append(int(candidates[best]))
        objectives.append(float(pc.cond_var[n]))
    result = np.asarray(selected, dtype=np.intp)
    if partial_on_error:
        return (result, aborted) if not return_objectives else (
            result, objectives, aborted)
    return (result, objectives) if return_objectives else result


def select_from_source_single_prec(source, candidates, target, budget,
                                   return_objectives=False, state_out=None):
    """Single-target selection maintaining the selected-block precision.

    Contract identical to :func:`select_from_source_single`; the conditional
    column of each new point is formed from the explicit inverse of the
    selected covariance block, grown one row/column per round.  When a dict
    is passed as ``state_out`` the final precision block is stored in it
    (diagnostics only).
    """
    candidates, targets = _prepare(source, candidates, [int(target)])
    n = len(candidates)
    pts = np.concatenate([candidates, targets])
    diag0 = np.asarray(source.diag(pts), dtype=float)
    cond_var = diag0.copy()
    cov = source.block(pts, targets)[:, 0]
    prec = np.zeros((0, 0))
    chosen = []  # global indices, selection order
    active = np.ones(n, dtype=bool)
    objectives = []
    while len(chosen) < budget and active.any():
        var = cond_var[:n]
        elig = active & (var > ABORT_RTOL * diag0[:n])
        if not elig.any():
            break
        gain = np.full(n, -np.inf)
        gain[elig] = cov[:n][elig] ** 2 / var[elig]
        best = _argbest(gain, candidates, maximize=True)
        tvar = cond_var[n]
        if tvar <= 0 or gain[best] <= ABORT_RTOL * tvar:
            break
        k = int(candidates[best])
        pivot = cond_var[best]
        if pivot <= 0:
            raise SingularBlockError("selected covariance block is singular")
        col = source.block(pts, [k])[:, 0]
        if chosen:
            v = prec @ source.block(chosen, [k])[:, 0]
            col -= source.block(pts, chosen) @ v
            prec = np.block([
                [prec + np.outer(v, v) / pivot, -v[:, None] / pivot],
                [-v[None, :] / pivot, np.array([[1.0 / pivot]])],
            ])
        else:
            prec = np.array([[1.0 / pivot]])
        u = col / np.sqrt(pivot)
        cond_var -= u * u
        cov = cov - u * u[n]
        active[best] = False
        chosen.append(k)
        objectives.append(float(cond_var[n]))
    if state_out is not None:
        state_out["precision"] = prec
        state_out["selected"] = list(chosen)
    result = np.asarray(chosen, dtype=np.intp)
    return (result, objectives) if return_objectives else result


def select_from_source_multi(source, candidates, targets, budget,
                             return_objectives=False):
    """Greedy multiple-target selection with two partial Cholesky factors.

    One factor conditions on the selected points only, the other is seeded
    with every target up front; the objective for a candidate is the ratio
    of its two conditional variances, whose log is exactly the drop in the
    targets' posterior log determinant.  With ``return_objectives`` the
    running log determinant after each round is returned as well.
    """
    candidates, targets = _prepare(source, candidates, targets)
    n, m = len(candidates), len(targets)
    if m < 1:
        raise ValueError("at least one target is required")
    pts = np.concatenate([candidates, targets])
    cap = min(budget, n)
    pc = PartialCholesky(source, pts, cap)
    pc_pr = PartialCholesky(source, pts, cap + m)
    for t in range(m):
        pc_pr.append(n + t)
    # running logdet of the target block conditional on the selection
    logdet = 2.0 * float(np.sum(np.log(np.diag(pc_pr.L[n:, :m]))))
    active = np.ones(n, dtype=bool)
    selected, objectives = [], []
    while len(selected) < budget and active.any():
        var = pc.cond_var[:n]
        var_pr = pc_pr.cond_var[:n]
        elig = active & (var > ABORT_RTOL * pc._diag0[:n])
        if not elig.any():
            break
        ratio = np.full(n, np.inf)
        ratio[elig] = np.clip(var_pr[elig], 0.0, None) / var[elig]
        best = _argbest(ratio, candidates, maximize=False)
        if 1.0 - ratio[best] <= ABORT_RTOL:
            break
        pc.append(best)
        pc_pr.append(best, allow_degenerate=True)
        logdet += float(np.log(ratio[best])) if ratio[best] > 0 else -np.inf
        active[best] = False
        selected.append(int(candidates[best]))
        objectives.append(logdet)
    result = np.asarray(selected, dtype=np.intp)
    return (result, objectives) if return_objectives else result


def select_from_source_multi_prec(source, candidates, targets, budget,
                                  return_objectives=False, state_out=None):
    """Multiple-target selection via explicit precision matrices.

    Maintains the inverse of the selected covariance block (grown by the
    blocked inverse update) and the inverse of the target block conditional
    on the selection (rank-one corrected each round).  Contract identical to
    :func:`select_from_source_multi`; ``state_out`` captures the final
    precision blocks for diagnostics.
    """
    candidates, targets = _prepare(source, candidates, targets)
    n, m = len(candidates), len(targets)
    if m < 1:
        raise ValueError("at least one target is required")
    pts = np.concatenate([candidates, targets])
    diag0 = np.asarray(source.diag(pts), dtype=float)
    cond_var = diag0.copy()
    cross = source.block(pts, targets)  # (n+m) x m, conditional on selection
    theta_pr = cross[n:, :]
    try:
        fac = cho_factor(theta_pr, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularBlockError("target covariance block is singular") from err
    prec_pr = cho_solve(fac, np.eye(m))
    logdet = 2.0 * float(np.sum(np.log(np.diag(fac[0]))))
    cond_var_pr = cond_var - np.einsum("ij,jk,ik->i", cross, prec_pr, cross)
    prec = np.zeros((0, 0))
    chosen = []
    active = np.ones(n, dtype=bool)
    objectives = []
    while len(chosen) < budget and active.any():
        var = cond_var[:n]
        elig = active & (var > ABORT_RTOL * diag0[:n])
        if not elig.any():
            break
        ratio = np.full(n, np.inf)
        ratio[elig] = np.clip(cond_var_pr[:n][elig], 0.0, None) / var[elig]
        best = _argbest(ratio, candidates, maximize=False)
        if 1.0 - ratio[best] <= ABORT_RTOL:
            break
        k = int(candidates[best])
        pivot = cond_var[best]
        pivot_pr = cond_var_pr[best]
        col = source.block(pts, [k])[:, 0]
        if chosen:
            v = prec @ source.block(chosen, [k])[:, 0]
            col -= source.block(pts, chosen) @ v
            prec = np.block([
                [prec + np.outer(v, v) / pivot, -v[:, None] / pivot],
                [-v[None, :] / pivot, np.array([[1.0 / pivot]])],
            ])
        else:
            prec = np.array([[1.0 / pivot]])
        u = col / np.sqrt(pivot)
        if pivot_pr > ABORT_RTOL * diag0[best]:
            w = prec_pr @ cross[best, :]
            prec_pr = prec_pr + np.outer(w, w) / pivot_pr
            col_pr = col - cross @ w
            u_pr = col_pr / np.sqrt(pivot_pr)
        else:
            u_pr = np.zeros_like(u)  # candidate adds nothing beyond targets
        cond_var -= u * u
        cond_var_pr -= u_pr * u_pr
        cross = cross - np.outer(u, u[n:])
        logdet += float(np.log(ratio[best])) if ratio[best] > 0 else -np.inf
        active[best] = False
        chosen.append(k)
        objectives.append(logdet)
    if state_out is not None:
        state_out["precision"] = prec
        state_out["target_precision"] = prec_pr
        state_out["selected"] = list(chosen)
    result = np.asarray(chosen, dtype=np.intp)
    return (result, objectives) if return_objectives else result


class OrderedCholesky:
    """Partial Cholesky whose columns stay sorted by ordering position.

    Owners appear latest-position first, so a new owner inserted at its
    sorted position conditions exactly the owners that precede it in the
    point ordering.  Insertion left-looks on the columns before the
    insertion point and applies an in-place rank-one downdate to the columns
    after it, keeping every column equal to the owner's covariance
    conditional on all owners of earlier columns.
    """

    def __init__(self, source, points, positions, capacity):
        self.source = source
        self.points = np.asarray(points, dtype=np.intp)
        self.positions = np.asarray(positions, dtype=float)
        if len(self.positions) != len(self.points):
            raise ValueError("one ordering position per point is required")
        self.L = np.zeros((len(self.points), max(capacity, 0)), order="F")
        self.owners = []
        self._diag0 = np.asarray(source.diag(self.points), dtype=float)

    @property
    def ncols(self):
        return len(self.owners)

    def insert_position(self, local_j):
        """First column whose owner does not come after ``local_j``."""
        pj = self.positions[local_j]
        for c, owner in enumerate(self.owners):
            if pj >= self.positions[owner]:
                return c
        return self.ncols

    def insert(self, local_k):
        """Insert the column owned by ``local_k`` at its sorted position.

        Columns before the insertion point are untouched; the new column is
        built by left-looking on them; every later column is downdated in
        place to account for the new conditioning point.
        """
        if local_k in self.owners:
            raise ValueError("point already owns a column")
        p = self.insert_position(local_k)
        c0 = self.ncols
        col = self.source.block(self.points, self.points[[local_k]])[:, 0]
        if p:
            col -= self.L[:, :p] @ self.L[local_k, :p]
        pivot = col[local_k]
        if pivot <= ABORT_RTOL * self._diag0[local_k]:
            raise NotPositiveDefiniteError(
                f"nonpositive pivot {pivot:.3e} inserting point "
                f"{self.points[local_k]}"
            )
        u = col / np.sqrt(pivot)
        self.L[:, p + 1 : c0 + 1] = self.L[:, p:c0]
        self.L[:, p] = u
        self.owners.insert(p, local_k)
        v = u.copy()
        for c in range(p + 1, c0 + 1):
            owner = self.owners[c]
            lc = self.L[owner, c]
            vc = v[owner]
            gamma2 = (lc - vc) * (lc + vc)
            if gamma2 <= 0 or not np.isfinite(gamma2):
                raise NotPositiveDefiniteError(
                    "downdate lost positive definiteness"
                )
            gamma = np.sqrt(gamma2)
            alpha = lc / gamma
            beta = vc / gamma
            self.L[:, c] = alpha * self.L[:, c] - beta * v
            v = v / alpha - (beta / alpha) * self.L[:, c]
        return u

    def target_objective(self, target_locals):
        """Sum of log conditional variances over target-owned columns."""
        total = 0.0
        targets = set(int(t) for t in target_locals)
        for c, owner in enumerate(self.owners):
            if owner in targets:
                total += 2.0 * np.log(self.L[owner, c])
        return total

    def score(self, local_j, target_locals):
        """Objective value if ``local_j`` were inserted, without inserting.

        Walks the columns once, tracking the candidate's running conditional
        variance; target columns at or after the insertion point see their
        variance reduced by the candidate.  Returns ``inf`` when the
        candidate degenerates (treated as ineligible).
        """
        p = self.insert_position(local_j)
        targets = set(int(t) for t in target_locals)
        var_j = float(self._diag0[local_j])
        floor = ABORT_RTOL * var_j
        total = 0.0
        for c, owner in enumerate(self.owners):
            lc = self.L[owner, c]
            d2 = lc * lc
            covj = self.L[local_j, c] * lc
            if owner in targets:
                if c >= p:
                    if var_j <= floor:
                        return np.inf
                    s2 = d2 - covj * covj / var_j
                    if s2 <= 0:
                        return np.inf
                else:
                    s2 = d2
                total += np.log(s2)
            var_j -= covj * covj / d2
        return total


def select_from_source_partial(source, candidates, targets, positions, budget,
                               return_objectives=False):
    """Greedy partial selection: selected points condition only the targets
    they may condition under the ordering.

    ``positions`` gives the ordering position of every point, candidates
    first then targets.  Each round scores every candidate by the sum of log
    posterior variances the targets would have after inserting it, inserts
    the argmin, and stops at the budget or when no candidate improves the
    objective.
    """
    candidates, targets = _prepare(source, candidates, targets)
    n, m = len(candidates), len(targets)
    if m < 1:
        raise ValueError("at least one target is required")
    positions = np.asarray(positions, dtype=float)
    pts = np.concatenate([candidates, targets])
    if len(positions) != len(pts):
        raise ValueError("one ordering position per point is required")
    oc = OrderedCholesky(source, pts, positions, min(budget, n) + m)
    target_locals = list(range(n, n + m))
    for t in target_locals:
        oc.insert(t)
    active = np.ones(n, dtype=bool)
    selected, objectives = [], []
    baseline = oc.target_objective(target_locals)
    while len(selected) < budget and active.any():
        scores = np.full(n, np.inf)
        for j in np.flatnonzero(active):
            scores[j] = oc.score(j, target_locals)
        best = _argbest(scores, candidates, maximize=False)
        if not np.isfinite(scores[best]):
            break
        if scores[best] > baseline - ABORT_RTOL * max(1.0, abs(baseline)):
            break
        oc.insert(best)
        baseline = oc.target_objective(target_locals)
        active[best] = False
        selected.append(int(candidates[best]))
        objectives.append(baseline)
    result = np.asarray(selected, dtype=np.intp)
    return (result, objectives) if return_objectives else result


def _kernel_setup(spec, train, pred, candidates):
    train = np.asarray(train, dtype=float)
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    if train.ndim != 2:
        raise ValueError("training points must be 2-d")
    if pred.shape[1] != train.shape[1]:
        raise ValueError("training and prediction dimensions differ")
    n = train.shape[0]
    cand = np.arange(n) if candidates is None else np.asarray(candidates, dtype=np.intp)
    source = KernelSource(spec, np.vstack([train, pred]))
    targets = n + np.arange(pred.shape[0])
    return source, cand, targets


def select_single(spec, train, pred, budget, candidates=None):
    """Pick training points for one prediction point, most informative first."""
    source, cand, targets = _kernel_setup(spec, train, pred, candidates)
    if len(targets) != 1:
        raise ValueError("select_single expects exactly one prediction point")
    return select_from_source_single(source, cand, targets[0], budget)


def select_single_prec(spec, train, pred, budget, candidates=None):
    """Precision-based variant of :func:`select_single`."""
    source, cand, targets = _kernel_setup(spec, train, pred, candidates)
    if len(targets) != 1:
        raise ValueError("select_single_prec expects exactly one prediction point")
    return select_from_source_single_prec(source, cand, targets[0], budget)


def select_multi(spec, train, pred, budget, candidates=None):
    """Pick training points jointly informative for several prediction points."""
    source, cand, targets = _kernel_setup(spec, train, pred, candidates)
    return select_from_source_multi(source, cand, targets, budget)


def select_multi_prec(spec, train, pred, budget, candidates=None):
    """Precision-based variant of :func:`select_multi`."""
    source, cand, targets = _kernel_setup(spec, train, pred, candidates)
    return select_from_source_multi_prec(source, cand, targets, budget)


def select_partial(spec, train, pred, budget, train_positions, target_positions,
                   candidates=None):
    """Partial selection for targets interleaved with candidates in an ordering."""
    source, cand, targets = _kernel_setup(spec, train, pred, candidates)
    train_positions = np.asarray(train_positions, dtype=float)
    target_positions = np.asarray(target_positions, dtype=float)
    positions = np.concatenate([train_positions[cand], target_positions])
    return select_from_source_partial(source, cand, targets, positions, budget)
