"""Pure-Python kernels. Same signatures and results as ``_ckernels``."""

import math

import numpy as np

_LN2 = math.log(2.0)


def expm1_inf(x):
    """``math.expm1`` that returns ``inf`` on overflow, like C's ``expm1``."""
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


def cluster_constants(h, r):
    """Affine intra-cluster allocation coefficients for one cluster.

    Parameters
    ----------
    h : ndarray
        Member CNRs in decoding order (ascending, head last).
    r : ndarray
        Member minimum rates divided by the subchannel bandwidth.

    Returns
    -------
    slopes, intercepts : ndarray
        ``p_k = slopes[k] * q + intercepts[k]``; the head entry holds
        ``(alpha, -c)``.
    alpha, c : float
        Head coefficients, ``p_head = alpha * q - c``.
    qmin : float
        Smallest budget meeting every rate demand with equality.
    """
    m = len(h)
    h = [float(x) for x in h]
    r = [float(x) for x in r]
    slopes = np.empty(m)
    intercepts = np.empty(m)
    # keep = 1 - beta_sr = 2**-r, computed directly so alpha keeps full
    # relative precision when it is tiny.
    alpha = 1.0
    acc = 0.0
    for k in range(m - 1):
        keep = 2.0 ** (-r[k])
        beta = -math.expm1(-r[k] * _LN2)
        slopes[k] = beta * alpha
        intercepts[k] = beta * (1.0 / h[k] - acc)
        acc = keep * acc + beta / h[k]
        alpha *= keep
    slopes[m - 1] = alpha
    intercepts[m - 1] = -acc

    # tight-rate recursion, head first
    total = 0.0
    for k in range(m - 1, -1, -1):
        beta_pm = expm1_inf(r[k] * _LN2)
        total += beta_pm * (total + 1.0 / h[k])
    return slopes, intercepts, alpha, acc, total


def _fill(level, inv_h, lo, hi, out):
    s = 0.0
    for n in range(len(inv_h)):
        x = level - inv_h[n]
        if x < lo[n]:
            x = lo[n]
        elif x > hi[n]:
            x = hi[n]
        out[n] = x
        s += x
    return s


def waterfill_bisect(h_eff, lo, hi, total, ws, eps, max_iter):
    """Box-constrained water-filling by bisection on the dual variable.

    Finds ``nu`` such that ``sum(clip(ws/(ln2*nu) - 1/h_eff, lo, hi))``
    equals ``total``.

    Returns
    -------
    q : ndarray
        Budgets within ``[lo, hi]``.
    nu : float
    iterations : int
    converged : bool
    residual : float
        ``|sum(q) - total| / total``.
    """
    n = len(h_eff)
    inv_h = [1.0 / float(x) for x in h_eff]
    lo = [float(x) for x in lo]
    hi = [float(x) for x in hi]
    q = [0.0] * n
    scale = ws / _LN2

    sum_hi = math.fsum(hi)
    if sum_hi <= total:
        q = np.array(hi)
        # every mask saturated; the sum constraint is slack by design
        top = max(hi[i] + inv_h[i] for i in range(n))
        return q, scale / top, 0, True, 0.0
    sum_lo = math.fsum(lo)
    if sum_lo >= total:
        q = np.array(lo)
        bottom = min(lo[i] + inv_h[i] for i in range(n))
        res = (sum_lo - total) / total if total > 0 else 0.0
        return q, scale / bottom, 0, True, res

    # at this level every channel holds min(hi, lo + total), which sums to at least total
    nu_l = scale / max(inv_h[i] + min(hi[i], lo[i] + total) for i in range(n))
    nu_h = scale * max(1.0 / x for x in inv_h) * 1e6
    while _fill(scale / nu_h, inv_h, lo, hi, q) > total:
        nu_h *= 2.0
    while _fill(scale / nu_l, inv_h, lo, hi, q) < total:
        nu_l *= 0.5

    nu_m = nu_l
    s = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nu_m = 0.5 * (nu_l + nu_h)
        s = _fill(scale / nu_m, inv_h, lo, hi, q)
        if s < total:
            nu_h = nu_m
        else:
            nu_l = nu_m
        if abs(total - s) <= eps * total:
            converged = True
            break
    return np.array(q), nu_m, it, converged, abs(total - s) / total


def greedy_assign(cnr, cap):
    """Round-robin strongest-candidate assignment of users to subchannels.

    Each pass visits subchannels in index order; every subchannel below
    ``cap`` members takes the unassigned user with the largest CNR on it
    (ties go to the lower user index). Returns the subchannel of each user.
    """
    k_users, n_sub = cnr.shape
    table = np.asarray(cnr, dtype=float).tolist()
    assign = [-1] * k_users
    sizes = [0] * n_sub
    remaining = k_users
    while remaining > 0:
        progressed = False
        for n in range(n_sub):
            if remaining == 0:
                break
            if sizes[n] >= cap:
                continue
            best = -1
            best_val = -math.inf
            for k in range(k_users):
                if assign[k] < 0 and table[k][n] > best_val:
                    best = k
                    best_val = table[k][n]
            assign[best] = n
            sizes[n] += 1
            remaining -= 1
            progressed = True
        if not progressed:
            raise ValueError("subchannel capacity exhausted before all users were assigned")
    return np.array(assign, dtype=np.int64)
