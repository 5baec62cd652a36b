"""Shared fixtures and numeric oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

# Deterministic property testing: one profile, no wall-clock deadline (single
# sandbox core), derandomized so CI runs are reproducible.
settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, 1): relative for large entries,
    absolute for small ones (the usual gradient-check normalization)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def finite_diff_grad(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central-difference gradient of scalar fn w.r.t. float64 tensor x."""
    assert x.dtype == torch.float64, "finite differences need float64 inputs"
    flat = x.detach().clone().reshape(-1)
    grad = torch.zeros_like(flat)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        f_plus = float(fn(flat.reshape(x.shape)))
        flat[i] = orig - eps
        f_minus = float(fn(flat.reshape(x.shape)))
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad.reshape(x.shape)


def check_grad(fn, x: torch.Tensor, tol: float = 1e-4, eps: float = 1e-6) -> float:
    """Compare autograd and central differences for scalar fn(x); returns the error."""
    x = x.detach().clone().requires_grad_(True)
    out = fn(x)
    (grad_auto,) = torch.autograd.grad(out, x)
    grad_fd = finite_diff_grad(fn, x.detach(), eps=eps)
    err = rel_err(grad_auto.numpy(), grad_fd.numpy())
    assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol}"
    return err


def model_grad_check(model: torch.nn.Module, loss_fn, tol: float = 1e-4, eps: float = 1e-6) -> float:
    """Finite-difference check of d loss_fn() / d theta for every model parameter.

    The model must already be in float64. loss_fn takes no arguments and
    closes over the model.
    """
    loss = loss_fn()
    params = [p for p in model.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for p, g_auto in zip(params, grads):
            flat = p.reshape(-1)
            g_fd = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = float(loss_fn())
                flat[i] = orig - eps
                f_minus = float(loss_fn())
                flat[i] = orig
                g_fd[i] = (f_plus - f_minus) / (2.0 * eps)
            auto = torch.zeros_like(flat) if g_auto is None else g_auto.reshape(-1)
            err = rel_err(auto.numpy(), g_fd.numpy())
            worst = max(worst, err)
            assert err < tol, f"parameter gradient mismatch ({err:.3e} >= {tol})"
    return worst


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
