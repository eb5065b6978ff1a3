"""Pure numpy implementations of the hot kernels.

These are the reference versions; the compiled module ``linbet._kernels``
must agree with them to floating-point roundoff.
"""
import numpy as np


def truncated_projection(U, y, threshold, two_sided=True):
    """Sum ``U[i, t] * y[t]`` over the entries whose product passes the threshold.

    Returns ``(z, n_clipped)`` where ``z`` has one entry per row of ``U`` and
    ``n_clipped`` counts the zeroed (row, column) products.
    """
    U = np.asarray(U, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    W = U * y
    keep = (np.abs(W) <= threshold) if two_sided else (W <= threshold)
    z = np.where(keep, W, 0.0).sum(axis=1)
    return z, int(keep.size - np.count_nonzero(keep))


def lower_median_distances(Z):
    """For every row j, the ceil((k-1)/2)-th smallest distance to the other rows."""
    Z = np.asarray(Z, dtype=np.float64)
    k = Z.shape[0]
    if k == 1:
        return np.zeros(1)
    # explicit differences: identical rows must give exactly 0
    diff = Z[:, None, :] - Z[None, :, :]
    D2 = np.einsum("ijk,ijk->ij", diff, diff)
    # self-distance pushed past every real distance
    np.fill_diagonal(D2, np.inf)
    pos = (k - 1 + 1) // 2 - 1  # ceil((k-1)/2) - 1, zero based
    return np.sqrt(np.partition(D2, pos, axis=1)[:, pos])
