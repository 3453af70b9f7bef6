"""Named test functions: the ten 2D benchmark targets and manufactured PDE solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

pi = np.pi


def _t1():
    return np.tan(1.0)


TARGETS: dict[str, Callable] = {
    "f1": lambda x, y: x**2,
    "f2": lambda x, y: x * y,
    "f3": lambda x, y: np.sin(x) + 0.0 * y,
    "f4": lambda x, y: np.tan(x - y) / _t1(),
    "f5": lambda x, y: np.sin(np.sin(np.sin(np.sin(x**2 - y**2)))),
    "f6": lambda x, y: np.exp(1 - (x - 0.5) ** 2 - (y - 0.5) ** 2) / np.exp(1),
    "f7": lambda x, y: np.log(1 + x**2 + y**2) / np.log(4),
    "f8": lambda x, y: (x + 2 * y) / (3 * (1 + y**2 + x**2)),
    "f9": lambda x, y: np.tan(x**2 - y**2) / _t1(),
    "f10": lambda x, y: np.exp(-np.cos(1 + np.sin(1 + np.cos(x**2 - y**2)))) / np.exp(1),
    "one": lambda x, y: np.ones_like(np.asarray(x, dtype=float) + np.asarray(y, dtype=float)),
}

BENCHMARK = [f"f{k}" for k in range(1, 11)]


@dataclass(frozen=True)
class Manufactured:
    """Exact solution with its first and second derivatives."""

    u: Callable
    ux: Callable
    uy: Callable
    lap: Callable
    uxx: Callable | None = None
    uxy: Callable | None = None
    uyy: Callable | None = None


SOLUTIONS: dict[str, Manufactured] = {
    "linear": Manufactured(
        u=lambda x, y: x + y,
        ux=lambda x, y: np.ones_like(x),
        uy=lambda x, y: np.ones_like(y),
        lap=lambda x, y: np.zeros_like(x),
        uxx=lambda x, y: np.zeros_like(x),
        uxy=lambda x, y: np.zeros_like(x),
        uyy=lambda x, y: np.zeros_like(x),
    ),
    "quadratic": Manufactured(
        u=lambda x, y: x**2 + y**2,
        ux=lambda x, y: 2 * x,
        uy=lambda x, y: 2 * y,
        lap=lambda x, y: 4 + 0 * x,
        uxx=lambda x, y: 2 + 0 * x,
        uxy=lambda x, y: 0 * x,
        uyy=lambda x, y: 2 + 0 * x,
    ),
    "sinpi": Manufactured(
        u=lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        ux=lambda x, y: pi * np.cos(pi * x) * np.sin(pi * y),
        uy=lambda x, y: pi * np.sin(pi * x) * np.cos(pi * y),
        lap=lambda x, y: -2 * pi**2 * np.sin(pi * x) * np.sin(pi * y),
        uxx=lambda x, y: -(pi**2) * np.sin(pi * x) * np.sin(pi * y),
        uxy=lambda x, y: pi**2 * np.cos(pi * x) * np.cos(pi * y),
        uyy=lambda x, y: -(pi**2) * np.sin(pi * x) * np.sin(pi * y),
    ),
    "sin2pi": Manufactured(
        u=lambda x, y: np.sin(2 * pi * x) * np.sin(2 * pi * y),
        ux=lambda x, y: 2 * pi * np.cos(2 * pi * x) * np.sin(2 * pi * y),
        uy=lambda x, y: 2 * pi * np.sin(2 * pi * x) * np.cos(2 * pi * y),
        lap=lambda x, y: -8 * pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y),
        uxx=lambda x, y: -4 * pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y),
        uxy=lambda x, y: 4 * pi**2 * np.cos(2 * pi * x) * np.cos(2 * pi * y),
        uyy=lambda x, y: -4 * pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y),
    ),
    "exp": Manufactured(
        u=lambda x, y: np.exp((x**2 + y**2) / 2),
        ux=lambda x, y: x * np.exp((x**2 + y**2) / 2),
        uy=lambda x, y: y * np.exp((x**2 + y**2) / 2),
        lap=lambda x, y: (2 + x**2 + y**2) * np.exp((x**2 + y**2) / 2),
        uxx=lambda x, y: (1 + x**2) * np.exp((x**2 + y**2) / 2),
        uxy=lambda x, y: x * y * np.exp((x**2 + y**2) / 2),
        uyy=lambda x, y: (1 + y**2) * np.exp((x**2 + y**2) / 2),
    ),
}


def target(name: str) -> Callable:
    try:
        return TARGETS[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {sorted(TARGETS)}") from None


def solution(name: str) -> Manufactured:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise KeyError(f"unknown exact solution {name!r}; known: {sorted(SOLUTIONS)}") from None
