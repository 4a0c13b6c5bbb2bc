"""Monte Carlo maximum likelihood for Gibbs T-tessellation models.

With a sample S_1..S_n of feature vectors drawn at psi, the log-likelihood
ratio of theta against psi is estimated by

    l(theta) = <psi - theta, s_obs> - log mean_i exp(<psi - theta, S_i>)

which is concave in theta.  It is maximised by a dogleg trust-region
method; the sample is redrawn at the new estimate until it stops moving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .geometry import PolygonGeom
from .model import GibbsModel
from .sampler import ChainConfig, SampleSet, run, sub_seeds
from .tessellation import TTess

Z95 = 1.959964


def _features(sample) -> np.ndarray:
    if isinstance(sample, SampleSet):
        return sample.features
    return np.atleast_2d(np.asarray(sample, dtype=float))


def _log_terms(theta, psi, feats):
    return feats @ (np.asarray(psi, float) - np.asarray(theta, float))


def importance_weights(theta, psi, sample) -> np.ndarray:
    a = _log_terms(theta, psi, _features(sample))
    return np.exp(a - logsumexp(a))


def effective_sample_size(theta, psi, sample) -> float:
    w = importance_weights(theta, psi, sample)
    return float(1.0 / np.sum(w * w))


def mcl_value(theta, psi, observed, sample) -> float:
    feats = _features(sample)
    a = _log_terms(theta, psi, feats)
    diff = np.asarray(psi, float) - np.asarray(theta, float)
    return float(diff @ np.asarray(observed, float) - (logsumexp(a) - math.log(len(a))))


def mcl_gradient(theta, psi, observed, sample) -> np.ndarray:
    feats = _features(sample)
    w = importance_weights(theta, psi, feats)
    return -np.asarray(observed, float) + w @ feats


def mcl_hessian(theta, psi, observed, sample) -> np.ndarray:
    feats = _features(sample)
    w = importance_weights(theta, psi, feats)
    mu = w @ feats
    c = feats - mu
    h = -(c.T * w) @ c
    return 0.5 * (h + h.T)


def fisher_information(sample) -> np.ndarray:
    """Unbiased sample covariance of the feature vectors."""
    feats = _features(sample)
    if len(feats) < 2:
        raise ValueError("need at least two feature vectors")
    c = np.atleast_2d(np.cov(feats.T, ddof=1))
    return 0.5 * (c + c.T)


def mc_standard_error(theta_hat, psi, observed, sample) -> np.ndarray:
    """Sandwich H^-1 V H^-1 / n over per-sample score contributions."""
    feats = _features(sample)
    n = len(feats)
    h = mcl_hessian(theta_hat, psi, observed, feats)
    w = importance_weights(theta_hat, psi, feats)
    mu = w @ feats
    g = (n * w)[:, None] * (feats - mu)
    v = np.atleast_2d(np.cov(g.T, ddof=1))
    hinv = np.linalg.inv(h)
    cov = hinv @ v @ hinv / n
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def confidence_set(theta_hat, covariance, level: float = 0.95) -> np.ndarray:
    """Per-component Wald intervals, shape (d, 2)."""
    from scipy.stats import norm

    theta_hat = np.asarray(theta_hat, float)
    se = np.sqrt(np.clip(np.diag(np.atleast_2d(covariance)), 0.0, None))
    z = Z95 if abs(level - 0.95) < 1e-12 else float(norm.ppf(0.5 + level / 2))
    return np.column_stack([theta_hat - z * se, theta_hat + z * se])


# ----------------------------------------------------------------------
# trust region


@dataclass
class TRResult:
    x: np.ndarray
    value: float
    grad_norm: float
    n_iter: int
    converged: bool
    radius: float


def _dogleg(g, h, radius):
    """Maximise g.p + p.H.p / 2 over |p| <= radius (dogleg path)."""
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g)
    curv = float(g @ h @ g)
    newton = None
    try:
        if np.all(np.linalg.eigvalsh(h) < 0):
            newton = -np.linalg.solve(h, g)
    except np.linalg.LinAlgError:
        newton = None
    if newton is not None and np.linalg.norm(newton) <= radius:
        return newton
    if curv >= 0:
        return g * (radius / gn)
    cauchy = g * (gn * gn / -curv)
    cn = float(np.linalg.norm(cauchy))
    if cn >= radius or newton is None:
        return cauchy * (radius / cn) if cn > radius else cauchy
    # walk from the Cauchy point toward the Newton point until the boundary
    d = newton - cauchy
    a = float(d @ d)
    b = 2 * float(cauchy @ d)
    c = cn * cn - radius * radius
    tau = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    return cauchy + tau * d


def trust_region_maximize(
    fun,
    grad,
    hess,
    x0,
    radius0: float = 1.0,
    radius_bounds: tuple = (1e-10, 1e3),
    eta: float = 0.1,
    gtol: float = 1e-8,
    max_iter: int = 500,
    scale=None,
    center=None,
    cap: float | None = None,
) -> TRResult:
    """Dogleg trust region in the coordinates z = scale * x.

    When ``cap`` is given the iterates stay in the ball
    ``|scale * (x - center)| <= cap``.
    """
    x = np.asarray(x0, dtype=float).copy()
    d = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)
    c0 = x.copy() if center is None else np.asarray(center, dtype=float)
    rmin, rmax = radius_bounds
    radius = min(radius0, rmax)
    f = fun(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the start point")
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(x)
        gz = g / d
        if np.linalg.norm(gz) < gtol:
            converged = True
            break
        hz = hess(x) / np.outer(d, d)
        p = _dogleg(gz, hz, radius)
        if cap is not None:
            # shorten the step so the iterate stays inside the cap ball
            z = d * (x - c0)
            aa = float(p @ p)
            bb = 2 * float(z @ p)
            cc = float(z @ z) - cap * cap
            disc = bb * bb - 4 * aa * cc
            if aa > 0 and disc >= 0:
                tmax = (-bb + math.sqrt(disc)) / (2 * aa)
                if tmax < 1.0:
                    p = p * max(tmax, 0.0)
        pred = float(gz @ p + 0.5 * p @ hz @ p)
        if pred <= 0:
            converged = np.linalg.norm(p) == 0.0
            break
        x_new = x + p / d
        f_new = fun(x_new)
        rho = (f_new - f) / pred if np.isfinite(f_new) else -1.0
        if rho < 0.25:
            radius *= 0.5
        elif rho > 0.75 and np.linalg.norm(p) >= 0.99 * radius:
            radius = min(2 * radius, rmax)
        if rho > eta:
            x, f = x_new, f_new
        if radius < rmin:
            break
    g = grad(x)
    return TRResult(x, float(f), float(np.linalg.norm(g / d)), it, converged, radius)


# ----------------------------------------------------------------------
# full fitting loop


@dataclass(frozen=True)
class MCMLConfig:
    psi0: tuple
    sample_size: int = 400
    max_outer_iterations: int = 20
    trust_radius0: float = 1.0
    radius_bounds: tuple = (1e-10, 1e3)
    accept_threshold: float = 0.1
    convergence_tol: float = 1e-2
    chain: ChainConfig = field(default_factory=lambda: ChainConfig(n_steps=0, burn_in=0, thin=100))
    burn_in: int = 100_000
    min_ess_fraction: float = 0.1
    # largest move of psi per outer iteration, in units of |psi| + 1
    step_cap: float = 0.25
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.sample_size < 2:
            raise ValueError("sample size must be at least 2")
        if self.convergence_tol <= 0 or not 0 < self.accept_threshold < 1:
            raise ValueError("invalid tolerances")


@dataclass
class FitResult:
    theta_hat: np.ndarray
    observed_features: np.ndarray
    covariance: np.ndarray
    standard_errors: np.ndarray
    mcse: np.ndarray
    confidence95: np.ndarray
    outer_trace: list
    converged: bool
    psi_final: np.ndarray
    sample: SampleSet | None = None
    specs: tuple = ()

    def to_dict(self) -> dict:
        return {
            "statistics": [s.to_dict() for s in self.specs],
            "theta_hat": self.theta_hat.tolist(),
            "observed_features": self.observed_features.tolist(),
            "covariance": self.covariance.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "mcse": self.mcse.tolist(),
            "confidence95": self.confidence95.tolist(),
            "converged": bool(self.converged),
            "psi_final": self.psi_final.tolist(),
            "trace": [
                {"iteration": k, "psi": p.tolist(), "theta": th.tolist(), "mcl": v}
                for k, (p, th, v) in enumerate(self.outer_trace)
            ],
        }


def maximize_mcl(psi, observed, feats, cfg: MCMLConfig) -> tuple[np.ndarray, float]:
    """One inner maximisation with an effective-sample-size guard."""
    theta, val, _ = _maximize_mcl(psi, observed, feats, cfg)
    return theta, val


def _maximize_mcl(psi, observed, feats, cfg: MCMLConfig) -> tuple[np.ndarray, float, bool]:
    """As ``maximize_mcl``; the flag tells whether the step cap or the ESS guard cut the step."""
    psi = np.asarray(psi, float)
    scale = 1.0 / (np.abs(psi) + 1.0)
    res = trust_region_maximize(
        lambda th: mcl_value(th, psi, observed, feats),
        lambda th: mcl_gradient(th, psi, observed, feats),
        lambda th: mcl_hessian(th, psi, observed, feats),
        psi,
        radius0=cfg.trust_radius0,
        radius_bounds=cfg.radius_bounds,
        eta=cfg.accept_threshold,
        gtol=1e-9,
        scale=scale,
        center=psi,
        cap=cfg.step_cap,
    )
    theta = res.x
    limited = bool(np.linalg.norm(scale * (theta - psi)) >= (1 - 1e-6) * cfg.step_cap)
    # the Monte Carlo approximation is only trusted where the weights are not degenerate
    n = len(feats)
    for _ in range(60):
        if effective_sample_size(theta, psi, feats) >= cfg.min_ess_fraction * n:
            break
        theta = psi + 0.5 * (theta - psi)
        limited = True
    return theta, mcl_value(theta, psi, observed, feats), limited


def fit(
    m: GibbsModel,
    observed: TTess,
    cfg: MCMLConfig,
    window: PolygonGeom | None = None,
    log=None,
    initial: TTess | None = None,
) -> FitResult:
    """Iterated MCML: sample at psi, maximise, move psi to the maximiser.

    The first chain starts from ``initial`` (default: the empty window); later
    chains continue from the last state of the previous one.
    """
    window = observed.window if window is None else window
    s_obs = m.features(observed)
    psi = np.asarray(cfg.psi0, dtype=float)
    seeds = sub_seeds(cfg.seed, cfg.max_outer_iterations + 1)
    trace = []
    state = initial
    converged = False
    sample = None
    theta = psi
    for k in range(cfg.max_outer_iterations):
        burn = cfg.burn_in
        chain = cfg.chain.replace(
            seed=seeds[k], burn_in=burn, n_steps=burn + cfg.sample_size * cfg.chain.thin
        )
        sample = run(m.with_theta(psi), window, chain, initial=state)
        state = sample.last
        theta, val, limited = _maximize_mcl(psi, s_obs, sample.features, cfg)
        trace.append((psi.copy(), theta.copy(), float(val)))
        if log:
            log(f"outer {k}: psi={psi.round(4).tolist()} theta={theta.round(4).tolist()} mcl={val:.4g}")
        step = np.max(np.abs(theta - psi) / (np.abs(psi) + 1.0))
        # a short step forced by the cap or the ESS guard is not convergence
        if step < cfg.convergence_tol and not limited:
            converged = True
            break
        psi = theta
    feats = sample.features
    info = -mcl_hessian(theta, psi, s_obs, feats)
    try:
        cov = np.linalg.inv(info)
        mcse = mc_standard_error(theta, psi, s_obs, feats)
    except np.linalg.LinAlgError:
        cov = np.full((m.dim, m.dim), np.nan)
        mcse = np.full(m.dim, np.nan)
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        theta_hat=theta,
        observed_features=s_obs,
        covariance=cov,
        standard_errors=se,
        mcse=mcse,
        confidence95=confidence_set(theta, cov),
        outer_trace=trace,
        converged=converged,
        psi_final=psi,
        sample=sample,
        specs=m.specs,
    )
