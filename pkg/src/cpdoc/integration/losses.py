"""Auxiliary objectives on the option set: termination supervision from
boundary probabilities, behavioral cloning, and policy diversity.

Every loss returns its value together with analytic gradients so that the
tabular and linear parameterizations can be updated without the tape.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

PROB_EPS = 1e-7


class IntegrationConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class TerminationSupervision:
    tau: float = 0.5  # sharpen temperature
    half_width: int = 2  # boundary neighbourhood is t +- half_width
    alpha_w: float = 1.0
    lambda_beta: float = 0.5
    lambda_cpd: float = 1.0
    warmup: int = 200

    def validate(self) -> list[str]:
        errors = []
        if not self.tau > 0:
            errors.append("tau: must be positive")
        if self.half_width < 0:
            errors.append("half_width: must be non-negative")
        for name in ("alpha_w", "lambda_beta", "lambda_cpd"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be non-negative")
        if self.warmup < 0:
            errors.append("warmup: must be non-negative")
        return errors


@dataclass
class LossWeights:
    termination: float = 0.5
    diversity: float = 0.01
    bc: float = 1.0
    cpd: float = 1.0

    def __post_init__(self):
        bad = [f.name for f in fields(self) if getattr(self, f.name) < 0]
        if bad:
            raise IntegrationConfigError(f"negative loss weights: {bad}")


def sharpen(p, tau: float = 0.5):
    """Temperature-sharpened Bernoulli: p^(1/tau) / (p^(1/tau) + (1-p)^(1/tau))."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    p = np.asarray(p, dtype=np.float64)
    # log-space keeps small tau from underflowing
    a = np.log(np.clip(p, 1e-300, None)) / tau
    b = np.log(np.clip(1.0 - p, 1e-300, None)) / tau
    return expit(a - b)


def boundary_weights(indicators, half_width: int = 2, alpha_w: float = 1.0) -> np.ndarray:
    """w_t = 1 + alpha_w within half_width steps of any boundary indicator, else 1."""
    b = np.asarray(indicators).astype(bool)
    near = np.zeros(len(b), dtype=bool)
    for i in np.flatnonzero(b):
        near[max(0, i - half_width):i + half_width + 1] = True
    return 1.0 + alpha_w * near


def termination_supervision_loss(options, xs, active, p, indicators, cfg: TerminationSupervision,
                                 episode: int | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted BCE between beta_{w_t}(s_t) and sharpened boundary probabilities.

    ``xs`` are the agent inputs (state indices or feature rows), ``active`` the
    option running at each step. The loss is averaged over steps; the gradient
    is returned for ``nu`` only. Before the warm-up episode count is reached
    the loss is zero.
    """
    T = len(active)
    if not (len(xs) == T == len(p) == len(indicators)):
        raise UsageError("trajectory, options, probabilities and indicators must have equal length")
    grad = np.zeros_like(options.nu)
    if T == 0 or (episode is not None and episode < cfg.warmup):
        return 0.0, {"nu": grad}
    target = sharpen(p, cfg.tau)
    w = boundary_weights(indicators, cfg.half_width, cfg.alpha_w)
    total = 0.0
    for t in range(T):
        o = int(active[t])
        beta = options.termination_prob(xs[t], o)
        bc = min(max(beta, PROB_EPS), 1.0 - PROB_EPS)
        total += -w[t] * (target[t] * np.log(bc) + (1.0 - target[t]) * np.log(1.0 - bc))
        # d/dlogit of BCE(sigmoid(logit), y) = beta - y
        g = w[t] * (beta - target[t]) / T
        if options.kind == "tabular":
            grad[o, xs[t]] += g
        else:
            grad[o] += g * np.asarray(xs[t])
    return total / T, {"nu": grad}


def apply_termination_grad(options, grad_nu: np.ndarray, lr: float) -> None:
    options.nu -= lr * grad_nu


def bc_loss(options, option: int, xs, actions) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of ``actions`` under ``option``; returns the
    value and the gradient with respect to each step's logits (T, A)."""
    nll = 0.0
    grads = np.zeros((len(actions), options.n_actions))
    for t, (x, a) in enumerate(zip(xs, actions)):
        pr = options.action_probs(x, option)
        nll -= np.log(max(pr[a], PROB_EPS))
        grads[t] = pr
        grads[t, a] -= 1.0
    n = max(len(actions), 1)
    return nll / n, grads / n


def bc_pretrain(options, datasets, epochs: int = 10, lr: float = 0.25) -> list[float]:
    """Behavioral cloning of each option on its own (states, actions) dataset.

    ``datasets[k]`` feeds option k. Steps are taken in logit units (the same
    preconditioning as the intra-option policy update), per sample, in data
    order. Returns the mean NLL over all options before each epoch and after
    the last one.
    """
    history = []
    for epoch in range(epochs + 1):
        losses = []
        for k, data in enumerate(datasets):
            if data is None or len(data[1]) == 0:
                if epoch == 0:
                    warnings.warn(f"no behaviour data for option {k}; skipped", RuntimeWarning, stacklevel=2)
                continue
            xs, acts = data
            losses.append(bc_loss(options, k, xs, acts)[0])
            if epoch == epochs:
                continue
            for x, a in zip(xs, acts):
                pr = options.action_probs(x, k)
                g = -pr
                g[a] += 1.0
                options.add_preference_grad(x, k, g, lr)
        history.append(float(np.mean(losses)) if losses else 0.0)
    return history


def diversity_loss(options, xs) -> tuple[float, np.ndarray]:
    """Sum over ordered option pairs of KL(pi_i || pi_j), averaged over ``xs``.

    Returns the value and the gradient with respect to the logits,
    shaped (n_states_in_sample, n_options, n_actions).
    """
    n_opt = options.n_options
    if n_opt < 2:
        raise UsageError("diversity needs at least two options")
    total = 0.0
    grads = np.zeros((len(xs), n_opt, options.n_actions))
    for s, x in enumerate(xs):
        probs = np.array([options.action_probs(x, o) for o in range(n_opt)])
        pc = np.clip(probs, PROB_EPS, 1.0)
        logp = np.log(pc)
        for i in range(n_opt):
            for j in range(n_opt):
                if i == j:
                    continue
                kl = float(np.sum(pc[i] * (logp[i] - logp[j])))
                total += kl
                # dKL(p_i||p_j)/dz_i and /dz_j for softmax-parameterized p
                grads[s, i] += probs[i] * (logp[i] - logp[j] - kl)
                grads[s, j] += probs[j] - probs[i]
    n = max(len(xs), 1)
    return total / n, grads / n


def logit_grads_to_params(options, xs, logit_grads: np.ndarray) -> np.ndarray:
    """Chain rule from per-state logit gradients to ``theta`` (includes 1/temperature)."""
    g = np.zeros_like(options.theta)
    for s, x in enumerate(xs):
        for o in range(options.n_options):
            if options.kind == "tabular":
                g[o, x] += logit_grads[s, o] / options.temperature
            else:
                g[o] += np.outer(logit_grads[s, o], x) / options.temperature
    return g


def apply_diversity(options, xs, logit_grads: np.ndarray, lr: float) -> None:
    """Ascend diversity in logit units (no 1/temperature factor)."""
    for s, x in enumerate(xs):
        for o in range(options.n_options):
            options.add_preference_grad(x, o, logit_grads[s, o], lr)


def total_loss(components: dict, weights: LossWeights) -> float:
    """L_RL + w_term L_term - w_div L_div + w_bc L_BC + w_cpd L_CPD.

    Diversity is rewarded, so it enters with a minus sign. Missing components
    count as zero.
    """
    c = {k: float(v) for k, v in components.items()}
    return (c.get("rl", 0.0) + weights.termination * c.get("term", 0.0)
            - weights.diversity * c.get("div", 0.0) + weights.bc * c.get("bc", 0.0)
            + weights.cpd * c.get("cpd", 0.0))


__all__ = [
    "IntegrationConfigError", "LossWeights", "TerminationSupervision", "UsageError",
    "apply_diversity", "apply_termination_grad", "bc_loss", "bc_pretrain", "boundary_weights",
    "diversity_loss", "logit_grads_to_params", "sharpen", "termination_supervision_loss",
    "total_loss",
]
