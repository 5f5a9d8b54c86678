"""Noise schedule, hybrid training loss, and the strided ancestral sampler.

Timesteps are 1-based: t in [1, T], with alpha_bar(0) = 1. The loss is the
hybrid objective: MSE on the noise prediction plus a small-weight variational
term (in nats) that trains the learned variance channel; the variational
term sees a detached mean so variance learning cannot fight the MSE. The
sampler runs on a subsequence of timesteps with betas rebuilt from the
alpha-bar subsequence, classifier-free guidance applied to the noise
prediction (variance taken from the conditional branch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nn import Tensor, detach, exp as t_exp

VLB_WEIGHT = 1e-3


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray            # (T,) index i holds beta at t = i + 1
    alphas_cumprod: np.ndarray   # (T,) cumulative product of (1 - beta)

    def __post_init__(self):
        if self.T < 1 or len(self.betas) != self.T:
            raise ConfigurationError("schedule table length must equal T >= 1")
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ConfigurationError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(self.alphas_cumprod) >= 0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at 1-based step t; t = 0 is the identity endpoint."""
        if t == 0:
            return 1.0
        return float(self.alphas_cumprod[t - 1])


def make_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    if kind != "cosine":
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    s = 0.008

    def f(u: float) -> float:
        return float(np.cos((u + s) / (1.0 + s) * np.pi / 2.0) ** 2)

    betas = np.empty(T, dtype=np.float64)
    for i in range(T):
        betas[i] = min(1.0 - f((i + 1) / T) / f(i / T), 0.999)
    return NoiseSchedule(T=T, betas=betas, alphas_cumprod=np.cumprod(1.0 - betas))


def q_sample(x0: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward process: sqrt(a_bar) x0 + sqrt(1 - a_bar) noise."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t must be in [1, {schedule.T}]")
    ab = schedule.alpha_bar(t)
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise).astype(x0.dtype)


def _posterior(schedule_ab_prev: float, ab: float, beta: float):
    """Mean coefficients and variance of q(x_{t-1} | x_t, x0) for one step."""
    coef_x0 = beta * np.sqrt(schedule_ab_prev) / (1.0 - ab)
    alpha = ab / schedule_ab_prev
    coef_xt = (1.0 - schedule_ab_prev) * np.sqrt(alpha) / (1.0 - ab)
    var = beta * (1.0 - schedule_ab_prev) / (1.0 - ab)
    return coef_x0, coef_xt, var


def _mean_from_eps(x_t, eps, ab: float, ab_prev: float, beta: float):
    """Posterior mean computed from a noise prediction (works on arrays and
    Tensors alike)."""
    alpha = ab / ab_prev
    return (x_t - eps * (beta / np.sqrt(1.0 - ab))) * (1.0 / np.sqrt(alpha))


def training_loss(model, batch: list[dict], schedule: NoiseSchedule,
                  rng: np.random.Generator) -> tuple[Tensor, dict]:
    """Hybrid loss over one batch.

    `model` is a callable (item, x_t: Tensor, t: int) -> (eps_hat, vraw),
    each (k, p). Items are dicts with at least "x0_hole" (k, p); items whose
    mask selects no tokens are skipped with a warning counter. Returns the
    scalar loss Tensor and a diagnostics dict.
    """
    terms = []
    diag = {"skipped": 0, "t": [], "mse": [], "vlb": []}
    for item in batch:
        x0 = np.asarray(item["x0_hole"], dtype=np.float32)
        if x0.shape[0] == 0:
            diag["skipped"] += 1
            continue
        t = int(rng.integers(1, schedule.T + 1))
        noise = rng.standard_normal(x0.shape).astype(np.float32)
        x_t = q_sample(x0, t, noise, schedule)
        eps_hat, vraw = model(item, Tensor(x_t), t)

        mse = ((eps_hat - Tensor(noise)) ** 2.0).mean()
        vlb = _vlb_term(Tensor(x0), Tensor(x_t), eps_hat, vraw, t, schedule)
        terms.append(mse + vlb * VLB_WEIGHT)
        diag["t"].append(t)
        diag["mse"].append(float(mse.data))
        diag["vlb"].append(float(vlb.data))
    if not terms:
        raise ValueError("every item in the batch had an empty mask; batch rejected")
    total = terms[0]
    for extra in terms[1:]:
        total = total + extra
    return total * (1.0 / len(terms)), diag


def _vlb_term(x0: Tensor, x_t: Tensor, eps_hat: Tensor, vraw: Tensor, t: int,
              schedule: NoiseSchedule) -> Tensor:
    """KL(q(x_{t-1}|x_t,x0) || p(x_{t-1}|x_t)) for t > 1, continuous Gaussian
    NLL of x0 at t = 1; mean over elements, in nats. The model mean is
    detached so this term trains only the variance channel."""
    ab = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    beta = float(schedule.betas[t - 1])
    beta_tilde = _clipped_beta_tilde(t, ab, ab_prev, beta, schedule)

    frac = (vraw + 1.0) * 0.5
    logvar_p = frac * float(np.log(beta)) + (1.0 - frac) * float(np.log(beta_tilde))
    mu_p = _mean_from_eps(x_t, detach(eps_hat), ab, ab_prev, beta)

    if t == 1:
        sq = (x0 - mu_p) ** 2.0
        nll = (logvar_p + sq * t_exp(-logvar_p) + float(np.log(2.0 * np.pi))) * 0.5
        return nll.mean()
    coef_x0, coef_xt, var_q = _posterior(ab_prev, ab, beta)
    mu_q = x0 * coef_x0 + x_t * coef_xt
    logvar_q = float(np.log(var_q))
    kl = (logvar_p - logvar_q) * 0.5 \
        + (((mu_q - mu_p) ** 2.0) + var_q) * t_exp(-logvar_p) * 0.5 \
        - 0.5
    return kl.mean()


def _clipped_beta_tilde(t: int, ab: float, ab_prev: float, beta: float,
                        schedule: NoiseSchedule) -> float:
    """Posterior variance; at t = 1 it is zero, so reuse the t = 2 value
    (the clipped-log convention)."""
    if t == 1:
        if schedule.T == 1:
            return beta
        ab2 = schedule.alpha_bar(2)
        return float(schedule.betas[1]) * (1.0 - schedule.alpha_bar(1)) / (1.0 - ab2)
    return beta * (1.0 - ab_prev) / (1.0 - ab)


@dataclass(frozen=True)
class SamplerOpts:
    steps: int = 50
    guidance_scale: float = 4.5
    seed: int = 0
    sdedit_strength: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.guidance_scale < 1.0:
            raise ConfigurationError("guidance_scale must be >= 1 (1 disables CFG)")
        if not 0.0 <= self.sdedit_strength <= 1.0:
            raise ConfigurationError("sdedit_strength must lie in [0, 1]")


def respaced_steps(T: int, steps: int) -> np.ndarray:
    """Kept 0-based timestep indices, ascending; both endpoints included for
    steps >= 2, the final timestep alone for steps = 1."""
    if steps > T:
        raise ConfigurationError(f"steps {steps} exceeds schedule length {T}")
    if steps == 1:
        return np.array([T - 1], dtype=np.int64)
    kept = np.unique(np.round(np.linspace(0, T - 1, steps)).astype(np.int64))
    return kept


def sdedit_init(z_hole_gt: np.ndarray, strength: float, schedule: NoiseSchedule,
                rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Partial-noising start: t* = round(strength * T), tokens q-sampled to t*."""
    if not 0.0 < strength <= 1.0:
        raise ValueError("sdedit strength must lie in (0, 1]")
    t_star = max(1, int(round(strength * schedule.T)))
    noise = rng.standard_normal(z_hole_gt.shape).astype(np.float32)
    return q_sample(z_hole_gt.astype(np.float32), t_star, noise, schedule), t_star


def sample(model, k: int, token_dim: int, label: int, opts: SamplerOpts,
           schedule: NoiseSchedule, null_label: int,
           sdedit_tokens: np.ndarray | None = None,
           on_step=None, return_info: bool = False):
    """Strided ancestral sampling of k hole tokens.

    `model` is a callable (x_t: (k, p) float32, t: int, label: int) ->
    (eps_hat, vraw) numpy arrays. Guidance blends conditional and null-label
    noise predictions; scale 1.0 never evaluates the null branch, making it
    trivially identical to conditional-only sampling. Deterministic given
    opts.seed.
    """
    if k < 1:
        raise ValueError("nothing to generate: mask selects no tokens")
    rng = np.random.default_rng(opts.seed)
    kept = respaced_steps(schedule.T, opts.steps)

    if opts.sdedit_strength > 0.0:
        if sdedit_tokens is None:
            raise ValueError("sdedit_strength > 0 needs the current canvas hole tokens")
        if sdedit_tokens.shape != (k, token_dim):
            raise ValueError("sdedit token shape does not match (k, token_dim)")
        x, t_star = sdedit_init(sdedit_tokens, opts.sdedit_strength, schedule, rng)
        start = int(np.searchsorted(kept, t_star - 1, side="right")) - 1
        if start < 0:
            start = 0
    else:
        x = rng.standard_normal((k, token_dim)).astype(np.float32)
        start = len(kept) - 1

    info = {"model_calls": 0, "steps_run": 0, "t_sequence": []}
    for j in range(start, -1, -1):
        t0 = int(kept[j])                      # 0-based index into tables
        ab = float(schedule.alphas_cumprod[t0])
        ab_prev = float(schedule.alphas_cumprod[kept[j - 1]]) if j > 0 else 1.0
        beta_hat = 1.0 - ab / ab_prev
        t_model = t0 + 1                       # original 1-based timestep

        eps_c, vraw = model(x, t_model, label)
        info["model_calls"] += 1
        if opts.guidance_scale != 1.0:
            eps_u, _ = model(x, t_model, null_label)
            info["model_calls"] += 1
            eps = eps_u + opts.guidance_scale * (eps_c - eps_u)
        else:
            eps = eps_c

        mean = _mean_from_eps(x, eps, ab, ab_prev, beta_hat)
        if j > 0:
            beta_tilde = beta_hat * (1.0 - ab_prev) / (1.0 - ab)
            frac = (vraw + 1.0) * 0.5
            logvar = frac * np.log(beta_hat) + (1.0 - frac) * np.log(beta_tilde)
            x = (mean + np.exp(0.5 * logvar) * rng.standard_normal(x.shape)).astype(np.float32)
        else:
            x = mean.astype(np.float32)
        info["steps_run"] += 1
        info["t_sequence"].append(t_model)
        if on_step is not None:
            on_step(info["steps_run"], start + 1, t_model)
    return (x, info) if return_info else x
