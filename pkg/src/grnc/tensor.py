"""Dense array primitives and the finite-difference gradient oracle.

Tensors are plain numpy arrays in row-major layout, treated as immutable
once handed to an operation: every operation allocates a fresh output, so
forward inputs can be retained safely for backward passes. Binary
elementwise operations require equal shapes (scalars are the only
broadcast exception) to keep hand-written backprop free of silent shape
bugs.

Gradient-check builds run in float64; 32-bit precision is acceptable for
training but cannot satisfy the finite-difference tolerance.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
from scipy.special import expit

Tensor = np.ndarray

DEFAULT_FD_EPS = 1e-5


def _as_operand(x) -> Tensor:
    a = np.asarray(x)
    if not np.issubdtype(a.dtype, np.floating) and not np.issubdtype(a.dtype, np.integer):
        raise TypeError(f"expected a real-valued array, got dtype {a.dtype}")
    return a


def _check_binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    # Scalar-with-tensor is the only permitted broadcast.
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_binary_shapes("add", a, b)
    return a + b


def sub(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_binary_shapes("sub", a, b)
    return a - b


def mul(a, b) -> Tensor:
    a, b = _as_operand(a), _as_operand(b)
    _check_binary_shapes("mul", a, b)
    return a * b


def tanh(a) -> Tensor:
    return np.tanh(_as_operand(a))


def sigmoid(a) -> Tensor:
    """Numerically stable logistic function; sigmoid(0) == 0.5 exactly."""
    return expit(_as_operand(a))


_ELEMENTWISE: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def elementwise(op: str, a, b=None) -> Tensor:
    """Dispatch an elementwise operation by name.

    Binary ops (add, sub, mul) require ``b``; unary ops (tanh, sigmoid)
    forbid it.
    """
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if op in ("tanh", "sigmoid"):
        if b is not None:
            raise ValueError(f"{op} is unary")
        return fn(a)
    if b is None:
        raise ValueError(f"{op} is binary and needs two operands")
    return fn(a, b)


def reduce_sum(a, axes: Iterable[int] | int | None = None, keepdims: bool = False) -> Tensor:
    """Sum over the given axes (all axes when omitted)."""
    a = _as_operand(a)
    if axes is None:
        return np.sum(a, keepdims=keepdims)
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    else:
        axes = tuple(int(ax) for ax in axes)
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise ValueError(f"reduce_sum: axis {ax} invalid for shape {a.shape}")
    if len(set(ax % a.ndim for ax in axes)) != len(axes):
        raise ValueError(f"reduce_sum: duplicate axes {axes}")
    return np.sum(a, axis=axes, keepdims=keepdims)


def assert_finite(x, name: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} contains non-finite values")


def rel_error(a, b) -> float:
    """max over elements of |a-b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"rel_error: shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def finite_difference_grad(f: Callable[[Tensor], float], x, eps: float = DEFAULT_FD_EPS) -> Tensor:
    """Central-difference gradient of a scalar-valued function.

    Perturbs one element at a time: (f(x + eps*e_i) - f(x - eps*e_i)) / 2eps.
    The function is assumed pure; it receives a fresh copy on every call.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        f_plus = float(f(x.copy()))
        flat_x[i] = orig - eps
        f_minus = float(f(x.copy()))
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError(
                f"finite_difference_grad: non-finite function value at element {i}"
            )
        flat_g[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
