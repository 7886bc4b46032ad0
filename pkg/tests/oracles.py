"""Brute-force reference implementations used as test oracles.

Everything here is deliberately naive: dense Schur complements, full
recomputation per greedy round, O(N^3) orderings.  The fast library paths
are checked against these, never the other way around.
"""

import numpy as np

from cholsel.kernels import conditional_oracle


def brute_maximin(points, seed):
    """O(N^3) reverse maximin (p=1): recompute all min-distances per round."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    perm = np.empty(n, dtype=np.intp)
    scales = np.empty(n, dtype=float)
    perm[n - 1] = seed
    scales[seed] = np.inf
    chosen = [seed]
    remaining = [i for i in range(n) if i != seed]
    for pos in range(n - 2, -1, -1):
        best, best_d = None, -np.inf
        for i in remaining:
            d = min(np.sqrt(((points[i] - points[j]) ** 2).sum()) for j in chosen)
            if d > best_d or (d == best_d and i < best):
                best, best_d = i, d
        perm[pos] = best
        scales[best] = best_d
        chosen.append(best)
        remaining.remove(best)
    return perm, scales


def greedy_single_oracle(theta, candidates, target, budget):
    """Greedy selection by exhaustive posterior-variance minimization."""
    chosen = []
    remaining = list(candidates)
    objectives = []
    while len(chosen) < budget and remaining:
        best, best_var = None, np.inf
        for j in remaining:
            var = conditional_oracle(theta, [target], [target], [chosen + [j]])[0, 0]
            if var < best_var or (var == best_var and j < best):
                best, best_var = j, var
        chosen.append(best)
        remaining.remove(best)
        objectives.append(best_var)
    return chosen, objectives


def greedy_multi_oracle(theta, candidates, targets, budget):
    """Greedy selection by exhaustive posterior log-determinant minimization."""
    targets = list(targets)
    chosen = []
    remaining = list(candidates)
    objectives = []
    while len(chosen) < budget and remaining:
        best, best_ld = None, np.inf
        for j in remaining:
            cov = conditional_oracle(theta, targets, targets, [chosen + [j]])
            ld = np.linalg.slogdet(cov)[1]
            if ld < best_ld or (ld == best_ld and j < best):
                best, best_ld = j, ld
        chosen.append(best)
        remaining.remove(best)
        objectives.append(best_ld)
    return chosen, objectives


def partial_objective_oracle(theta, selection, candidate, targets, positions):
    """Sum of log target variances if ``candidate`` joined the selection.

    Each target is conditioned on the targets after it in the ordering plus
    every selected point (and the candidate) that comes after it.
    """
    total = 0.0
    sel = list(selection) + ([candidate] if candidate is not None else [])
    for t in targets:
        conditioning = [j for j in sel if positions[j] > positions[t]]
        conditioning += [u for u in targets if positions[u] > positions[t]]
        var = conditional_oracle(theta, [t], [t], [conditioning])[0, 0]
        total += np.log(var)
    return total


def greedy_partial_oracle(theta, candidates, targets, positions, budget):
    """Greedy partial selection by exhaustive objective evaluation."""
    chosen = []
    remaining = list(candidates)
    objectives = []
    while len(chosen) < budget and remaining:
        best, best_obj = None, np.inf
        for j in remaining:
            obj = partial_objective_oracle(theta, chosen, j, targets, positions)
            if obj < best_obj or (obj == best_obj and j < best):
                best, best_obj = j, obj
        current = partial_objective_oracle(theta, chosen, None, targets, positions)
        if best_obj >= current - 1e-12 * max(1.0, abs(current)):
            break
        chosen.append(best)
        remaining.remove(best)
        objectives.append(best_obj)
    return chosen, objectives
