import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def fd_gradient(fn, tensor, coords, eps=1e-6):
    """Central finite differences of a scalar function at chosen coordinates."""
    out = []
    with torch.no_grad():
        for idx in coords:
            orig = float(tensor[idx])
            tensor[idx] = orig + eps
            up = float(fn())
            tensor[idx] = orig - eps
            down = float(fn())
            tensor[idx] = orig
            out.append((up - down) / (2 * eps))
    return out


def assert_grad_matches(fn, tensor, coords, rel_tol=1e-4, eps=1e-6):
    """Compare autograd gradients with central differences at coordinates."""
    tensor.requires_grad_(True)
    if tensor.grad is not None:
        tensor.grad = None
    value = fn()
    value.backward()
    analytic = [float(tensor.grad[idx]) for idx in coords]
    tensor.requires_grad_(False)
    numeric = fd_gradient(fn, tensor, coords, eps=eps)
    for a, n in zip(analytic, numeric):
        scale = max(abs(a), abs(n), 1e-8)
        assert abs(a - n) / scale < rel_tol, f"analytic {a} vs numeric {n}"
