"""Deterministic codecs between channels/covariances and network vectors.

The network never sees H and G directly: it sees v, built from the Gram
matrices H'H and G'G (the objective depends on the channels only through
these) plus their pairwise products and element-wise cubes, each block
pre-scaled by a fixed constant. Covariances travel as the upper
triangle read off diagonal by diagonal.
"""

import numpy as np

from .errors import ShapeError
from .secrecy import ChannelPair, Covariance, project_feasible

# Fixed transmit-antenna count of the shipped codec; the formulas below
# are generic in n_t but the dataset/network formats freeze this value.
N_T = 3

# Block scales for (v1, v2, v3).
SCALE_V1 = 0.05
SCALE_V2 = 0.002
SCALE_V3 = 0.0001


def feature_length(n_t: int = N_T) -> int:
    """v1 has 2*n_t^2 entries, v2 has (2*n_t)^2, v3 mirrors v1."""
    return 8 * n_t * n_t


def cov_length(n_t: int = N_T) -> int:
    return n_t * (n_t + 1) // 2


def _upper_tri_order(n_t):
    """Index pairs diagonal-by-diagonal: (11,22,33, 12,23, 13) for n_t=3."""
    return [(i, i + d) for d in range(n_t) for i in range(n_t - d)]


def encode_features(ch: ChannelPair, n_t: int = N_T) -> np.ndarray:
    """72-entry input vector for a channel pair.

    v1 = vec([H'H  G'G]) column-major, v2 = vec(M'M) for that same block
    matrix M, v3 = v1 cubed element-wise before any scaling; the output
    is [SCALE_V1*v1, SCALE_V2*v2, SCALE_V3*v3].
    """
    if ch.n_t != n_t:
        raise ShapeError(f"feature codec is fixed at n_t={n_t}, channel has {ch.n_t}")
    M = np.hstack([ch.H.T @ ch.H, ch.G.T @ ch.G])
    v1 = M.flatten(order="F")
    v2 = (M.T @ M).flatten(order="F")
    v3 = v1 ** 3
    return np.concatenate([SCALE_V1 * v1, SCALE_V2 * v2, SCALE_V3 * v3])


def encode_cov(cov, n_t: int = N_T) -> np.ndarray:
    """Upper-triangle vector (q11, q22, q33, q12, q23, q13) of a
    covariance; accepts a Covariance or a raw symmetric matrix."""
    Q = cov.Q if isinstance(cov, Covariance) else np.asarray(cov, dtype=np.float64)
    if Q.shape != (n_t, n_t):
        raise ShapeError(f"expected a {n_t}x{n_t} covariance, got {Q.shape}")
    return np.array([Q[i, j] for i, j in _upper_tri_order(n_t)])


def decode_cov(qv: np.ndarray, P: float, n_t: int = N_T) -> Covariance:
    """Rebuild the symmetric matrix from its triangle vector and repair
    feasibility (PSD clip + trace scale). Exact inverse of encode_cov on
    already-feasible covariances."""
    qv = np.asarray(qv, dtype=np.float64).reshape(-1)
    if qv.size != cov_length(n_t):
        raise ShapeError(f"expected {cov_length(n_t)} entries, got {qv.size}")
    Q = np.zeros((n_t, n_t))
    for value, (i, j) in zip(qv, _upper_tri_order(n_t)):
        Q[i, j] = value
        Q[j, i] = value
    return project_feasible(Q, P)
