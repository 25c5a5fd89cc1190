"""Covariance solvers used for labels and baselines.

Two families live here:

* solve_covariance_pg — multi-start projected gradient ascent on the
  secrecy objective; the near-optimal solver that labels training data.
* gsvd_precode — the closed-form baseline: decompose the channel pair
  into parallel subchannels, water-fill power over the gainful ones, and
  map the allocation back into a covariance.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ContractError
from .secrecy import ChannelPair, Covariance, project_feasible, secrecy_rate

# Margins a-b below this are treated as not gainful; also the lower end
# of the water-level bisection bracket.
MU_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the iterative solver and the water-filling bisection."""

    max_iters: int = 500
    step_init: float = 1.0
    tol_rate: float = 1e-7
    tol_power: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        if min(self.step_init, self.tol_rate, self.tol_power) <= 0:
            raise ContractError("step_init and tolerances must be positive")


@dataclass(frozen=True)
class SubchannelGains:
    """Per-subchannel effective power gains seen by receiver (a) and
    eavesdropper (b) when transmitting on the matched direction."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if a.shape != b.shape or a.ndim != 1:
            raise ContractError(f"gain vectors must match, got {a.shape} vs {b.shape}")
        if a.size and (a.min() < 0 or b.min() < 0):
            raise ContractError("gains must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class GsvdFactors:
    """Joint decomposition of (H, G): H = u1 diag(c) R, G = u2 diag(s) R.

    `directions` are the unit-norm transmit directions (n_t x r); sending
    power p on direction i yields receiver gain a[i]*p and eavesdropper
    gain b[i]*p on mutually orthogonal receive components.
    """

    u1: np.ndarray
    u2: np.ndarray
    c: np.ndarray
    s: np.ndarray
    r_factor: np.ndarray
    directions: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def rank(self):
        return self.c.size


@dataclass(frozen=True)
class PgResult:
    """Outcome of solve_covariance_pg; `trace` is the retained objective
    sequence of the winning start (non-decreasing)."""

    cov: Covariance
    rate: float
    iters: int
    converged: bool
    trace: np.ndarray = field(repr=False)


def gsvd_factors(ch: ChannelPair) -> GsvdFactors:
    """Decompose (H, G) into common-right-factor form via the stacked SVD
    and a cosine-sine split of the orthonormal column blocks."""
    H, G = ch.H, ch.G
    n_r, n_e, n_t = ch.n_r, ch.n_e, ch.n_t
    K = np.vstack([H, G])
    U, sig, Wt = np.linalg.svd(K, full_matrices=False)
    rank_tol = max(K.shape) * np.finfo(np.float64).eps * (sig[0] if sig.size else 0.0)
    r = int(np.sum(sig > rank_tol))
    if r == 0:
        empty = np.zeros(0)
        return GsvdFactors(
            u1=np.zeros((n_r, 0)), u2=np.zeros((n_e, 0)), c=empty, s=empty,
            r_factor=np.zeros((0, n_t)), directions=np.zeros((n_t, 0)),
            a=empty, b=empty,
        )
    sig = sig[:r]
    Wr = Wt[:r].T                      # n_t x r
    Z1 = U[:n_r, :r]                   # orthonormal-block rows: Z1'Z1 + Z2'Z2 = I
    Z2 = U[n_r:, :r]
    U1, ccos, Vt = np.linalg.svd(Z1, full_matrices=True)
    V = Vt.T                           # r x r orthogonal
    c = np.zeros(r)
    c[: ccos.size] = np.clip(ccos, 0.0, 1.0)
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    u1 = np.zeros((n_r, r))
    k1 = min(n_r, r)
    u1[:, :k1] = U1[:, :k1]
    T = Z2 @ V                         # columns orthogonal with norms s
    u2 = np.zeros((n_e, r))
    for i in range(r):
        if s[i] > 1e-12:
            u2[:, i] = T[:, i] / s[i]
    r_factor = (V.T * sig[None, :]) @ Wr.T          # r x n_t, full row rank
    pinv_cols = Wr @ (V / sig[:, None])             # right inverse of r_factor
    norms = np.linalg.norm(V / sig[:, None], axis=0)
    directions = pinv_cols / norms[None, :]
    a = (c / norms) ** 2
    b = (s / norms) ** 2
    return GsvdFactors(u1=u1, u2=u2, c=c, s=s, r_factor=r_factor,
                       directions=directions, a=a, b=b)


def gsvd_subchannels(ch: ChannelPair) -> SubchannelGains:
    """Per-direction gain pairs of the channel pair; rank-deficient
    stacked channels simply yield fewer directions."""
    f = gsvd_factors(ch)
    return SubchannelGains(a=f.a, b=f.b)


def _powers_at_level(a, b, mu):
    """Per-subchannel power at water level mu: the positive root of
    a*b*p^2 + (a+b)*p + 1 - (a-b)/mu = 0, zero where not gainful."""
    p = np.zeros_like(a)
    rhs = (a - b) / mu - 1.0
    live = (a - b > MU_FLOOR) & (rhs > 0)
    al, bl, rl = a[live], b[live], rhs[live]
    ab = al * bl
    lin = ab < 1e-300  # b == 0 (or vanishing product): linear equation
    pl = np.empty_like(al)
    pl[lin] = rl[lin] / al[lin]
    q = ~lin
    pl[q] = (-(al[q] + bl[q]) + np.sqrt((al[q] + bl[q]) ** 2 + 4 * ab[q] * rl[q])) / (
        2 * ab[q]
    )
    p[live] = pl
    return p


def secrecy_waterfill(sub: SubchannelGains, P: float, tol_power: float = 1e-8) -> np.ndarray:
    """Power allocation maximizing sum_i 0.5*log2((1+a_i p_i)/(1+b_i p_i))
    under sum(p) <= P, p >= 0.

    Only subchannels with a > b receive power; the shared water level is
    found by bisection on mu in [MU_FLOOR, max(a-b)] until the power
    budget is met within tol_power.
    """
    if P <= 0:
        raise ContractError(f"power budget must be positive, got {P}")
    a, b = sub.a, sub.b
    p = np.zeros_like(a)
    margins = a - b
    if a.size == 0 or margins.max(initial=0.0) <= MU_FLOOR:
        return p
    lo, hi = MU_FLOOR, float(margins.max())
    # sum(lo) is astronomically above P, sum(hi) is 0: the root is bracketed.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = _powers_at_level(a, b, mid).sum()
        if abs(total - P) <= tol_power:
            lo = hi = mid
            break
        if total > P:
            lo = mid
        else:
            hi = mid
    return _powers_at_level(a, b, 0.5 * (lo + hi))


def gsvd_precode(ch: ChannelPair, P: float, cfg: SolverConfig | None = None):
    """Closed-form covariance: water-filled power over the gainful
    subchannel directions. Returns (Covariance, secrecy rate)."""
    cfg = cfg or SolverConfig()
    f = gsvd_factors(ch)
    if f.rank == 0:
        cov = Covariance(np.zeros((ch.n_t, ch.n_t)), P)
        return cov, 0.0
    p = secrecy_waterfill(SubchannelGains(f.a, f.b), P, cfg.tol_power)
    Q = (f.directions * p) @ f.directions.T
    cov = project_feasible(0.5 * (Q + Q.T), P)
    return cov, secrecy_rate(ch, cov)


def _starts(ch, P, cfg, gsvd_q):
    n_t = ch.n_t
    rng = np.random.default_rng(cfg.seed)
    A = rng.standard_normal((n_t, n_t))
    W = A @ A.T
    tr = np.trace(W)
    random_start = W * (P / tr) if tr > 0 else np.eye(n_t) * (P / n_t)
    return [gsvd_q, np.eye(n_t) * (P / n_t), random_start]


def solve_covariance_pg(ch: ChannelPair, P: float, cfg: SolverConfig | None = None) -> PgResult:
    """Near-optimal feasible covariance by projected gradient ascent.

    Three starts are refined (the GSVD solution, uniform power, and one
    random feasible point from cfg.seed) and the best final iterate wins;
    the zero covariance is an implicit floor, so the returned rate is
    never negative. `iters` counts gradient iterations across all starts;
    `converged` is False if any start ran out of iterations.
    """
    if P <= 0:
        raise ContractError(f"power budget must be positive, got {P}")
    cfg = cfg or SolverConfig()
    kern = _backend.active()
    gsvd_cov, _ = gsvd_precode(ch, P, cfg)
    best_q, best_rate, best_trace = None, -np.inf, None
    total_iters = 0
    converged = True
    for q0 in _starts(ch, P, cfg, gsvd_cov.Q):
        q, rate, iters, conv, trace = kern.pg_ascent(
            ch.H, ch.G, q0, P, cfg.max_iters, cfg.step_init, cfg.tol_rate
        )
        total_iters += iters
        converged &= conv
        if rate > best_rate:
            best_q, best_rate, best_trace = q, rate, trace
    if best_rate < 0.0:
        best_q = np.zeros((ch.n_t, ch.n_t))
        best_rate = 0.0
        best_trace = np.zeros(1)
    return PgResult(
        cov=Covariance(best_q, P),
        rate=float(best_rate),
        iters=total_iters,
        converged=converged,
        trace=best_trace,
    )
