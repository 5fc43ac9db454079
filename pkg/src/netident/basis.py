"""Closed catalog of dictionary basis functions with analytic derivatives.

Every entry vanishes at the origin, so any finite linear combination of
catalog entries is a valid edge function (analytic, ``f(0) = 0``).

Token syntax used by network files::

    mono:p    x**p             (integer p >= 1)
    sin:w     sin(w*x)         (w > 0)
    tanh:a    tanh(a*x)        (a > 0)
    logi:a    a*(1/(1+exp(-x)) - 1/2)   (a > 0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from numpy.polynomial import polynomial as P


@lru_cache(maxsize=None)
def _tanh_poly(k: int) -> np.ndarray:
    # d^k/dy^k tanh(y) = p_k(tanh y), with p_{k+1} = p_k' * (1 - T^2)
    if k == 0:
        return np.array([0.0, 1.0])
    prev = _tanh_poly(k - 1)
    return P.polymul(P.polyder(prev), [1.0, 0.0, -1.0])


def _tanh_deriv(y, k):
    return P.polyval(np.tanh(y), _tanh_poly(k))


@dataclass(frozen=True)
class Monomial:
    power: int

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise ValueError(f"monomial power must be an integer >= 1, got {self.power}")

    def deriv(self, x, k=0):
        p = self.power
        x = np.asarray(x, dtype=float)
        if k > p:
            return np.zeros_like(x)
        return math.perm(p, k) * x ** (p - k)

    @property
    def token(self):
        return f"mono:{self.power}"

    @property
    def is_identity(self):
        return self.power == 1


@dataclass(frozen=True)
class Sine:
    freq: float

    def __post_init__(self):
        if not self.freq > 0:
            raise ValueError(f"sine frequency must be positive, got {self.freq}")

    def deriv(self, x, k=0):
        return self.freq**k * np.sin(self.freq * np.asarray(x, dtype=float) + k * math.pi / 2)

    @property
    def token(self):
        return f"sin:{self.freq:g}"

    is_identity = False


@dataclass(frozen=True)
class Tanh:
    gain: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"tanh gain must be positive, got {self.gain}")

    def deriv(self, x, k=0):
        return self.gain**k * _tanh_deriv(self.gain * np.asarray(x, dtype=float), k)

    @property
    def token(self):
        return f"tanh:{self.gain:g}"

    is_identity = False


@dataclass(frozen=True)
class ScaledLogistic:
    """``a * (logistic(x) - 1/2)``, which equals ``(a/2) * tanh(x/2)``."""

    gain: float

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"logistic gain must be positive, got {self.gain}")

    def deriv(self, x, k=0):
        return 0.5 * self.gain * 0.5**k * _tanh_deriv(0.5 * np.asarray(x, dtype=float), k)

    @property
    def token(self):
        return f"logi:{self.gain:g}"

    is_identity = False


BasisFunction = Union[Monomial, Sine, Tanh, ScaledLogistic]

_KINDS = {"mono": Monomial, "sin": Sine, "tanh": Tanh, "logi": ScaledLogistic}


def parse_basis(token: str) -> BasisFunction:
    """Parse one ``kind:param`` token, e.g. ``mono:3`` or ``sin:10``."""
    kind, sep, param = token.strip().partition(":")
    if not sep or kind not in _KINDS:
        raise ValueError(f"unknown basis token {token!r}; expected one of "
                         f"{', '.join(k + ':<param>' for k in _KINDS)}")
    if kind == "mono":
        value = float(param)
        if not value.is_integer():
            raise ValueError(f"monomial power must be an integer, got {param!r}")
        return Monomial(int(value))
    return _KINDS[kind](float(param))


def parse_basis_list(text: str) -> tuple[BasisFunction, ...]:
    return tuple(parse_basis(tok) for tok in text.split(",") if tok.strip())


def evaluate(b: BasisFunction, x):
    return b.deriv(x, 0)


def deriv_k(b: BasisFunction, x, k: int):
    """k-th derivative of basis ``b`` at ``x`` (``k = 0`` gives the value)."""
    if k < 0:
        raise ValueError("derivative order must be non-negative")
    return b.deriv(x, k)


@dataclass(frozen=True)
class EdgeFunction:
    """Linear combination ``sum_l coefficients[l] * basis[l]``."""

    basis: tuple
    coefficients: np.ndarray = field(compare=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(coeffs) != len(self.basis):
            raise ValueError(f"{len(self.basis)} basis functions but {len(coeffs)} coefficients")
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, x):
        return edge_eval(self, x)

    def deriv(self, x, k=1):
        return edge_deriv_k(self, x, k)


def edge_deriv_k(f: EdgeFunction, x, k: int):
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for alpha, b in zip(f.coefficients, f.basis):
        if alpha != 0.0:
            total = total + alpha * b.deriv(x, k)
    return total if total.ndim else float(total)


def edge_eval(f: EdgeFunction, x):
    return edge_deriv_k(f, x, 0)
