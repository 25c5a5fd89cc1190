"""Exact numerical primitives for wiretap precoding.

Everything here is a pure function of its arguments: the secrecy-rate
objective of a covariance design, its gradient, the projection onto the
feasible set {Q PSD, tr(Q) <= P}, and the eigen-factorization of a
covariance into precoder and power-allocation factors.

Rates are in bits per channel use (base-2 logs throughout).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError

LN2 = float(np.log(2.0))

# Largest accepted negative eigenvalue / trace overshoot for a feasible Q.
PSD_TOL = 1e-9
TRACE_TOL = 1e-9
SYM_TOL = 1e-9


def _as_matrix(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class ChannelPair:
    """Receiver channel H (n_r x n_t) and eavesdropper channel G (n_e x n_t)."""

    H: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        H = _as_matrix(self.H, "H")
        G = _as_matrix(self.G, "G")
        if H.shape[1] != G.shape[1]:
            raise ShapeError(
                f"H and G disagree on transmit antennas: {H.shape} vs {G.shape}"
            )
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)

    @property
    def n_t(self):
        return self.H.shape[1]

    @property
    def n_r(self):
        return self.H.shape[0]

    @property
    def n_e(self):
        return self.G.shape[0]


@dataclass(frozen=True)
class Covariance:
    """Feasible input covariance: symmetric PSD Q with tr(Q) <= P.

    The stored matrix is exactly symmetric; construction rejects inputs
    that are asymmetric beyond SYM_TOL, dip below -PSD_TOL in eigenvalue,
    or overshoot the power budget by more than TRACE_TOL.
    """

    Q: np.ndarray
    P: float

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        if Q.shape[0] != Q.shape[1]:
            raise ShapeError(f"Q must be square, got {Q.shape}")
        if self.P <= 0:
            raise ContractError(f"power budget must be positive, got {self.P}")
        asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
        if asym > SYM_TOL:
            raise ContractError(f"Q is asymmetric by {asym:.3e}")
        Q = 0.5 * (Q + Q.T)
        lam_min = float(np.linalg.eigvalsh(Q)[0])
        if lam_min < -PSD_TOL:
            raise ContractError(f"Q has eigenvalue {lam_min:.3e} < -{PSD_TOL}")
        tr = float(np.trace(Q))
        if tr > self.P + TRACE_TOL:
            raise ContractError(f"tr(Q)={tr:.6f} exceeds budget P={self.P}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", float(self.P))

    @property
    def n_t(self):
        return self.Q.shape[0]


@dataclass(frozen=True)
class PrecoderFactors:
    """Eigen-factors of a covariance: orthogonal V and diagonal Lambda^(1/2)."""

    V: np.ndarray
    lambda_sqrt: np.ndarray


def _check_dims(ch, cov):
    if cov.n_t != ch.n_t:
        raise ShapeError(
            f"covariance is {cov.n_t}x{cov.n_t} but channel has n_t={ch.n_t}"
        )


def _logdet_pd(A):
    """log-determinant of a symmetric positive-definite matrix via Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"matrix is not positive definite: {exc}") from exc
    val = 2.0 * float(np.sum(np.log(np.diag(L))))
    if not np.isfinite(val):
        raise NumericError("non-finite log-determinant")
    return val


def secrecy_rate(ch: ChannelPair, cov: Covariance) -> float:
    """Secrecy objective 1/2 log2|I + H Q H^T| - 1/2 log2|I + G Q G^T|.

    May be negative for a poor Q; it is the objective value, not the
    capacity.
    """
    _check_dims(ch, cov)
    Q = cov.Q
    A = np.eye(ch.n_r) + ch.H @ Q @ ch.H.T
    B = np.eye(ch.n_e) + ch.G @ Q @ ch.G.T
    return (_logdet_pd(A) - _logdet_pd(B)) / (2.0 * LN2)


def secrecy_rate_via_sylvester(ch: ChannelPair, cov: Covariance) -> float:
    """Same objective computed through the n_t x n_t determinants
    |I + H^T H Q| and |I + G^T G Q| (LU path, independent of secrecy_rate)."""
    _check_dims(ch, cov)
    Q = cov.Q
    eye = np.eye(ch.n_t)
    sa, lda = np.linalg.slogdet(eye + ch.H.T @ ch.H @ Q)
    sb, ldb = np.linalg.slogdet(eye + ch.G.T @ ch.G @ Q)
    if sa <= 0 or sb <= 0 or not (np.isfinite(lda) and np.isfinite(ldb)):
        raise NumericError("determinant lost positivity; Q is outside its domain")
    return (lda - ldb) / (2.0 * LN2)


def rate_gradient(ch: ChannelPair, cov: Covariance) -> np.ndarray:
    """Gradient of secrecy_rate w.r.t. Q, symmetrized:

        (1 / (2 ln 2)) * [H^T (I + H Q H^T)^-1 H - G^T (I + G Q G^T)^-1 G]
    """
    _check_dims(ch, cov)
    Q = cov.Q
    A = np.eye(ch.n_r) + ch.H @ Q @ ch.H.T
    B = np.eye(ch.n_e) + ch.G @ Q @ ch.G.T
    try:
        SH = ch.H.T @ np.linalg.solve(A, ch.H)
        SG = ch.G.T @ np.linalg.solve(B, ch.G)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular inner matrix: {exc}") from exc
    grad = (SH - SG) / (2.0 * LN2)
    return 0.5 * (grad + grad.T)


def project_feasible(Qraw: np.ndarray, P: float) -> Covariance:
    """Project a symmetric matrix onto {Q PSD, tr(Q) <= P}.

    Negative eigenvalues are clipped to zero; if the clipped trace still
    exceeds P the eigenvalue vector is scaled uniformly by P/trace.
    Idempotent on already-feasible input.
    """
    Q = _as_matrix(Qraw, "Qraw")
    if Q.shape[0] != Q.shape[1]:
        raise ShapeError(f"Qraw must be square, got {Q.shape}")
    if P <= 0:
        raise ContractError(f"power budget must be positive, got {P}")
    asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
    if asym > SYM_TOL:
        raise ContractError(f"Qraw is asymmetric by {asym:.3e}")
    lam, V = np.linalg.eigh(0.5 * (Q + Q.T))
    lam = np.maximum(lam, 0.0)
    tr = float(lam.sum())
    if tr > P:
        lam *= P / tr
    out = (V * lam) @ V.T
    return Covariance(0.5 * (out + out.T), P)


def factorize_precoder(cov: Covariance) -> PrecoderFactors:
    """Eigendecompose Q = V Lambda V^T and return V and Lambda^(1/2).

    Eigenvalues are ordered descending and each eigenvector is sign-fixed
    so its first non-negligible entry is positive, making the factors
    deterministic.
    """
    lam, V = np.linalg.eigh(cov.Q)
    lam = np.maximum(lam[::-1], 0.0)
    V = V[:, ::-1].copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-9)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return PrecoderFactors(V=V, lambda_sqrt=np.diag(np.sqrt(lam)))
