"""Latent-distribution math on the unit hypersphere.

Everything here is plain numpy so it can serve both the training code and
the verification harnesses.  Densities and divergences follow the standard
von Mises-Fisher normalizer

    C_M(k) = k^(M/2-1) / ((2 pi)^(M/2) I_{M/2-1}(k))

with the uniform distribution on S^{M-1} recovered at k = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VmfParams",
    "GaussianParams",
    "LatentSample",
    "log_bessel_i",
    "bessel_ratio",
    "log_vmf_normalizer",
    "vmf_log_density",
    "vmf_kl_to_uniform",
    "vmf_kl",
    "vmf_kl_grad_kappa",
    "gaussian_kl_to_standard",
    "sample_vmf",
    "sample_gaussian",
    "sample_uniform_sphere",
    "householder_rotate",
    "max_softmax_on_sphere",
    "softmax_maximizer",
]

UNIT_NORM_TOL = 1e-6

# Rejection rounds before sample_vmf gives up; never reached for kappa <= 1e4.
MAX_REJECTION_ROUNDS = 10_000


@dataclass(frozen=True)
class VmfParams:
    """Mean direction (unit norm) and concentration of a vMF distribution."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        if mu.ndim != 1 or mu.size < 2:
            raise ValueError("mu must be a vector in R^M with M >= 2")
        norm = float(np.linalg.norm(mu))
        if not math.isfinite(norm) or abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"mu must have unit norm, got {norm!r}")
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class GaussianParams:
    """Diagonal Gaussian parameters (mean, log standard deviation)."""

    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        ls = np.asarray(self.log_sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_sigma", ls)
        if mu.shape != ls.shape or mu.ndim != 1:
            raise ValueError("mu and log_sigma must be vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(ls))):
            raise ValueError("parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass
class LatentSample:
    """A draw from the latent distribution plus the raw randomness behind it.

    ``aux`` keeps the accepted proposal values (``omega_eps``), the tangent
    direction and the rejection-round count so a reparameterized gradient can
    be propagated through the same draw.
    """

    eta: np.ndarray
    aux: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Modified Bessel function of the first kind, in log space
# ---------------------------------------------------------------------------

# Below this argument the power series is safe in linear double precision
# (the series sums to at most ~e^x / sqrt(2 pi x)).
_SERIES_MAX_X = 600.0


def _log_bessel_series(nu: float, x: np.ndarray) -> np.ndarray:
    """Power series; valid for x <= _SERIES_MAX_X, vectorized over x."""
    x = np.atleast_1d(x)
    q = x * x / 4.0
    # tail = sum_{k>=1} t_k with t_k = t_{k-1} * q / (k (nu + k)); kept apart
    # from the leading 1 so log1p preserves precision for tiny x.
    term = np.ones_like(q)
    tail = np.zeros_like(q)
    k = 0
    while True:
        k += 1
        term = term * q / (k * (nu + k))
        tail += term
        if np.all(term <= (1.0 + tail) * 1e-20) or k > 2000:
            break
    with np.errstate(divide="ignore"):
        lead = np.where(x > 0, nu * np.log(x / 2.0), 0.0 if nu == 0 else -np.inf)
    return lead - math.lgamma(nu + 1.0) + np.log1p(tail)


def _log_bessel_series_logspace(nu: float, x: float) -> float:
    """Scalar power series summed in log space; any x, slow for huge x."""
    lq = 2.0 * (math.log(x) - math.log(2.0))
    # log t_k relative to the k = 0 term
    log_term = 0.0
    log_max = 0.0
    logs = [0.0]
    k = 0
    while True:
        k += 1
        log_term += lq - math.log(k) - math.log(nu + k)
        logs.append(log_term)
        log_max = max(log_max, log_term)
        if log_term < log_max - 60.0 and log_term < logs[-2]:
            break
        if k > 200_000:  # pragma: no cover - guards absurd arguments
            break
    arr = np.array(logs)
    lse = log_max + math.log(float(np.sum(np.exp(arr - log_max))))
    return nu * math.log(x / 2.0) - math.lgamma(nu + 1.0) + lse


def _log_bessel_asymptotic(nu: float, x: np.ndarray) -> np.ndarray:
    """Large-argument expansion; requires x >> nu^2 (we use x >= 4 nu^2)."""
    x = np.atleast_1d(x)
    mu4 = 4.0 * nu * nu
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 0
    while True:
        k += 1
        term = term * -(mu4 - (2 * k - 1) ** 2) / (8.0 * k * x)
        if np.all(np.abs(term) <= np.abs(total) * 1e-18) or k > 60:
            break
        total += term
    return x - 0.5 * np.log(2.0 * math.pi * x) + np.log(total)


def log_bessel_i(nu: float, x) -> np.ndarray | float:
    """log I_nu(x) for nu >= 0, x >= 0, accurate to ~1e-9 relative.

    Uses the power series in linear space for moderate arguments, a
    log-space series for large arguments at large order, and the standard
    large-argument expansion once x dominates nu^2.
    """
    if not math.isfinite(nu) or nu < 0:
        raise ValueError(f"order must be finite and >= 0, got {nu!r}")
    x_arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr < 0):
        raise ValueError("argument must be finite and >= 0")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    out = np.empty_like(x_arr)

    zero = x_arr == 0
    out[zero] = 0.0 if nu == 0 else -np.inf

    small = (~zero) & (x_arr <= _SERIES_MAX_X)
    if np.any(small):
        out[small] = _log_bessel_series(nu, x_arr[small])

    big = (~zero) & (x_arr > _SERIES_MAX_X)
    if np.any(big):
        asym_ok = x_arr >= max(_SERIES_MAX_X, 4.0 * nu * nu)
        use_asym = big & asym_ok
        if np.any(use_asym):
            out[use_asym] = _log_bessel_asymptotic(nu, x_arr[use_asym])
        for i in np.nonzero(big & ~asym_ok)[0]:
            out[i] = _log_bessel_series_logspace(nu, float(x_arr[i]))

    return float(out[0]) if scalar else out


def bessel_ratio(m: int, kappa) -> np.ndarray | float:
    """A_M(k) = I_{M/2}(k) / I_{M/2-1}(k), the mean resultant length."""
    if m < 2:
        raise ValueError("dimension must be >= 2")
    kappa_arr = np.atleast_1d(np.asarray(kappa, dtype=np.float64))
    nu = m / 2.0 - 1.0
    out = np.zeros_like(kappa_arr)
    pos = kappa_arr > 0
    if np.any(pos):
        kp = kappa_arr[pos]
        out[pos] = np.exp(log_bessel_i(nu + 1.0, kp) - log_bessel_i(nu, kp))
    return float(out[0]) if np.ndim(kappa) == 0 else out


def log_vmf_normalizer(m: int, kappa) -> np.ndarray | float:
    """log C_M(k); at k = 0 this is -log of the surface area of S^{M-1}."""
    if m < 2:
        raise ValueError("dimension must be >= 2")
    kappa_arr = np.atleast_1d(np.asarray(kappa, dtype=np.float64))
    if np.any(kappa_arr < 0) or not np.all(np.isfinite(kappa_arr)):
        raise ValueError("kappa must be finite and >= 0")
    nu = m / 2.0 - 1.0
    log_c0 = math.lgamma(m / 2.0) - math.log(2.0) - (m / 2.0) * math.log(math.pi)
    out = np.full_like(kappa_arr, log_c0)
    # The k -> 0 limit of the generic expression is exactly log_c0; switch a
    # little above zero to avoid 0 * log 0.
    pos = kappa_arr > 1e-12
    if np.any(pos):
        kp = kappa_arr[pos]
        out[pos] = (
            nu * np.log(kp)
            - (m / 2.0) * math.log(2.0 * math.pi)
            - log_bessel_i(nu, kp)
        )
    return float(out[0]) if np.ndim(kappa) == 0 else out


def vmf_log_density(z, params: VmfParams) -> float:
    """Log density of vMF(mu, kappa) at a unit vector z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != params.mu.shape:
        raise ValueError("z and mu must have the same dimension")
    norm = float(np.linalg.norm(z))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"z must lie on the unit sphere, got norm {norm!r}")
    m = params.dim
    return float(log_vmf_normalizer(m, params.kappa) + params.kappa * float(params.mu @ z))


def vmf_kl(m: int, kappa) -> np.ndarray | float:
    """KL(vMF(mu, k) || uniform on S^{M-1}); independent of mu."""
    kappa_arr = np.atleast_1d(np.asarray(kappa, dtype=np.float64))
    if np.any(kappa_arr < 0):
        raise ValueError("kappa must be >= 0")
    a = np.atleast_1d(bessel_ratio(m, kappa_arr))
    out = (
        kappa_arr * a
        + np.atleast_1d(log_vmf_normalizer(m, kappa_arr))
        - log_vmf_normalizer(m, 0.0)
    )
    out = np.maximum(out, 0.0)
    return float(out[0]) if np.ndim(kappa) == 0 else out


def vmf_kl_to_uniform(params: VmfParams) -> float:
    return float(vmf_kl(params.dim, params.kappa))


def vmf_kl_grad_kappa(m: int, kappa) -> np.ndarray | float:
    """d/dk of vmf_kl; equals k (1 - A^2) - (M-1) A with A = A_M(k)."""
    kappa_arr = np.atleast_1d(np.asarray(kappa, dtype=np.float64))
    a = np.atleast_1d(bessel_ratio(m, kappa_arr))
    out = kappa_arr * (1.0 - a * a) - (m - 1.0) * a
    out[kappa_arr == 0] = 0.0
    return float(out[0]) if np.ndim(kappa) == 0 else out


def gaussian_kl_to_standard(params: GaussianParams) -> float:
    """KL(N(mu, diag sigma^2) || N(0, I))."""
    mu = params.mu
    ls = params.log_sigma
    val = -0.5 * float(np.sum(1.0 + 2.0 * ls - mu * mu - np.exp(2.0 * ls)))
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_uniform_sphere(n: int, dim: int, rng) -> np.ndarray:
    """n points uniform on S^{dim-1}: normalize standard normal draws."""
    rng = _as_rng(rng)
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_omega(m: int, kappa: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray, int]:
    """Rejection-sample the mu-aligned coordinate of vMF draws.

    Returns (omega, eps, rounds) where eps is the accepted Beta proposal for
    each element; omega = (1 - (1+b) eps) / (1 - (1-b) eps) recovers omega
    differentiably in kappa through b.
    """
    rng = _as_rng(rng)
    kappa = np.asarray(kappa, dtype=np.float64)
    n = kappa.size
    disc = np.sqrt(4.0 * kappa * kappa + (m - 1.0) ** 2)
    b = (-2.0 * kappa + disc) / (m - 1.0)
    a = ((m - 1.0) + 2.0 * kappa + disc) / 4.0
    d = 4.0 * a * b / (1.0 + b) - (m - 1.0) * math.log(m - 1.0)

    eps_out = np.empty(n)
    pending = np.arange(n)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise RuntimeError(
                f"vMF rejection sampler exceeded {MAX_REJECTION_ROUNDS} rounds"
            )
        eps = rng.beta((m - 1.0) / 2.0, (m - 1.0) / 2.0, size=pending.size)
        u = rng.uniform(size=pending.size)
        bp = b[pending]
        t = 2.0 * a[pending] * bp / (1.0 - (1.0 - bp) * eps)
        accept = (m - 1.0) * np.log(t) - t + d[pending] >= np.log(u)
        eps_out[pending[accept]] = eps[accept]
        pending = pending[~accept]
    omega = (1.0 - (1.0 + b) * eps_out) / (1.0 - (1.0 - b) * eps_out)
    return omega, eps_out, rounds


def householder_rotate(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reflect x so that e_1 maps onto mu (exact isometry).

    mu is a unit vector (1-D) or a batch of unit rows (2-D); x matches.
    """
    mu2 = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    e1 = np.zeros_like(mu2)
    e1[:, 0] = 1.0
    u = e1 - mu2
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    # mu == e_1 needs no reflection
    safe = np.where(norm < 1e-12, 1.0, norm)
    u = np.where(norm < 1e-12, 0.0, u / safe)
    out = x2 - 2.0 * np.sum(u * x2, axis=1, keepdims=True) * u
    return out[0] if np.asarray(mu).ndim == 1 else out


def sample_vmf(params: VmfParams, seed, n: int | None = None):
    """Draw from vMF(mu, kappa) by the Wood rejection scheme.

    Marginal along mu sampled by accept/reject, tangent uniform on the
    equator, then a Householder reflection carries e_1 onto mu.  With
    ``n=None`` returns a single LatentSample; with an integer n returns an
    (n, M) array of unit vectors.
    """
    rng = _as_rng(seed)
    m = params.dim
    count = 1 if n is None else int(n)
    kappa = np.full(count, params.kappa)
    omega, eps, rounds = sample_omega(m, kappa, rng)
    v = sample_uniform_sphere(count, m - 1, rng)
    local = np.concatenate(
        [omega[:, None], np.sqrt(np.maximum(1.0 - omega * omega, 0.0))[:, None] * v],
        axis=1,
    )
    eta = householder_rotate(np.tile(params.mu, (count, 1)), local)
    if n is None:
        return LatentSample(
            eta=eta[0],
            aux={"omega_eps": float(eps[0]), "tangent": v[0], "rounds": rounds},
        )
    return eta


def sample_gaussian(params: GaussianParams, seed) -> LatentSample:
    """Standard reparameterized draw mu + sigma * eps."""
    rng = _as_rng(seed)
    eps = rng.standard_normal(params.dim)
    eta = params.mu + np.exp(params.log_sigma) * eps
    return LatentSample(eta=eta, aux={"eps": eps})


# ---------------------------------------------------------------------------
# Softmax expressibility on the sphere
# ---------------------------------------------------------------------------


def softmax_maximizer(m: int) -> np.ndarray:
    """The unit vector maximizing the top softmax coordinate: (a, b, ..., b)."""
    if m < 2:
        raise ValueError("dimension must be >= 2")
    a = math.sqrt((m - 1.0) / m)
    b = -a / (m - 1.0)
    eta = np.full(m, b)
    eta[0] = a
    return eta


def max_softmax_on_sphere(m: int, radius: float) -> float:
    """Largest achievable softmax coordinate of radius * eta over unit eta.

    Equals 1 / (1 + (M-1) exp(-radius sqrt(M/(M-1)))); the radius -> 0 limit
    is the uniform 1/M.
    """
    if m < 2:
        raise ValueError("dimension must be >= 2")
    if radius < 0:
        raise ValueError("radius must be > 0")
    gap = radius * math.sqrt(m / (m - 1.0))
    return 1.0 / (1.0 + (m - 1.0) * math.exp(-gap))
