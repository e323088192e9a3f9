"""Gradients, finite-difference checks and adjoint tests on the torch tape."""

from typing import Callable, Mapping

import torch

from .tensor import ShapeError, check_same_shape


def backward(
    loss: torch.Tensor,
    params: Mapping[str, torch.Tensor],
    retain_graph: bool = False,
) -> dict[str, torch.Tensor]:
    """Gradient of a scalar ``loss`` for every named parameter.

    Parameters the loss does not depend on get a zero gradient.
    """
    if loss.numel() != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    names = list(params)
    tensors = [params[name] for name in names]
    if not loss.requires_grad:
        return {name: torch.zeros_like(t) for name, t in zip(names, tensors)}
    grads = torch.autograd.grad(
        loss.reshape(()), tensors, allow_unused=True, retain_graph=retain_graph
    )
    return {
        name: torch.zeros_like(t) if g is None else g
        for name, t, g in zip(names, tensors, grads)
    }


def grad_check(
    f: Callable[[], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    n_probes: int = 20,
    eps: float = 1e-5,
    floor: float = 1e-6,
    generator: torch.Generator | None = None,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``f`` recomputes the scalar loss from the current values of ``params``;
    probed entries are perturbed in place and restored.
    """
    with torch.enable_grad():
        analytic = backward(f(), params)
    names = list(params)
    sizes = torch.tensor([params[name].numel() for name in names])
    offsets = torch.cumsum(sizes, 0) - sizes
    picks = torch.randint(int(sizes.sum()), (n_probes,), generator=generator)

    worst = 0.0
    for pick in picks.tolist():
        slot = int((offsets <= pick).sum()) - 1
        name = names[slot]
        index = pick - int(offsets[slot])
        flat = params[name].data.view(-1)
        original = float(flat[index])
        with torch.no_grad():
            flat[index] = original + eps
            plus = float(f())
            flat[index] = original - eps
            minus = float(f())
            flat[index] = original
        numeric = (plus - minus) / (2 * eps)
        exact = float(analytic[name].reshape(-1)[index])
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
        worst = max(worst, error)
    return worst


def inner(a: torch.Tensor, b: torch.Tensor) -> float:
    """Real inner product ``Re sum(conj(a) * b)``."""
    check_same_shape(a, b, "inner product operands")
    return float(torch.sum(torch.conj(a) * b).real)


def adjoint_residual(
    op: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, y: torch.Tensor
) -> float:
    """Relative mismatch between ``<L x, y>`` and ``<x, L^T y>``.

    ``L^T y`` is the vector-Jacobian product of ``op`` at ``x``.
    """
    x = x.detach().clone().requires_grad_(True)
    with torch.enable_grad():
        lx = op(x)
        check_same_shape(lx, y, "operator output and probe")
        (lty,) = torch.autograd.grad(lx, x, grad_outputs=y)
    lhs = inner(lx.detach(), y)
    rhs = inner(x.detach(), lty)
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) if scale == 0.0 else abs(lhs - rhs) / scale
