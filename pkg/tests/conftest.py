"""Shared fixtures and independent oracle helpers for the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from spherepack.probability import Channel, Distribution, capacity, r_infinity
from spherepack.saddle import esp_value


@pytest.fixture(scope="session")
def bsc01() -> Channel:
    return Channel([[0.9, 0.1], [0.1, 0.9]])


@pytest.fixture(scope="session")
def zchannel03() -> Channel:
    return Channel([[1.0, 0.0], [0.3, 0.7]])


@pytest.fixture(scope="session")
def uniform2() -> Distribution:
    return Distribution([0.5, 0.5])


def bsc(p: float) -> Channel:
    return Channel([[1 - p, p], [p, 1 - p]])


def bsc_esp_closed_form(p: float, rate: float) -> float:
    """D(delta || p) with h(delta) = log 2 - rate, delta in (p, 1/2)."""
    target = np.log(2.0) - rate
    lo, hi = 1e-14, 0.5 - 1e-14
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        h = -mid * np.log(mid) - (1 - mid) * np.log1p(-mid)
        if h < target:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    return float(d * np.log(d / p) + (1 - d) * np.log((1 - d) / (1 - p)))


def random_channel(
    rng: np.random.Generator,
    nx: int,
    ny: int,
    sparse: bool = False,
    min_gap: float = 0.05,
) -> Channel:
    """A random channel with C - R_inf >= min_gap (resampled until true)."""
    for _ in range(200):
        rows = rng.dirichlet(np.ones(ny) * 2.0, size=nx)
        if sparse:
            mask = rng.random((nx, ny)) < 0.3
            keep = rows.argmax(axis=1)
            mask[np.arange(nx), keep] = False
            rows = np.where(mask, 0.0, rows)
            rows = rows / rows.sum(axis=1, keepdims=True)
        w = Channel(rows)
        c, _ = capacity(w)
        if c - r_infinity(w) >= min_gap:
            return w
    raise RuntimeError("could not sample a usable channel")


def random_interior_p(rng: np.random.Generator, nx: int) -> Distribution:
    return Distribution(rng.dirichlet(np.ones(nx) * 4.0))


def interior_rate(w: Channel, frac: float) -> float:
    c, _ = capacity(w)
    rinf = r_infinity(w)
    return rinf + frac * (c - rinf)


def nondegenerate_instance(
    rng: np.random.Generator,
    nx: int,
    ny: int,
    sparse: bool = False,
    frac: float = 0.5,
    min_esp: float = 1e-3,
) -> tuple[Channel, float, Distribution]:
    """(channel, rate, composition) with E_SP(R,P) >= min_esp."""
    for _ in range(200):
        w = random_channel(rng, nx, ny, sparse=sparse)
        rate = interior_rate(w, frac)
        p = random_interior_p(rng, nx)
        if esp_value(w, rate, p) >= min_esp:
            return w, rate, p
    raise RuntimeError("could not sample a non-degenerate instance")


def random_dominated_channel(
    rng: np.random.Generator, w: Channel, p_support: np.ndarray
) -> Channel:
    """Random V with V(.|x) << W(.|x) on the given input-support mask."""
    rows = []
    for x in range(w.nx):
        mask = w.supports[x]
        row = np.zeros(w.ny)
        row[mask] = rng.dirichlet(np.ones(int(mask.sum())) * 1.5)
        rows.append(row)
    return Channel(np.asarray(rows))


def enumerate_loglr(pairs: list[tuple[Distribution, Distribution, int]]):
    """Brute-force string enumeration of the log-LR law for tiny products.

    Returns (atoms dict t -> null mass on the common-support region,
    null_only_mass, alt_only_mass).
    """
    letters = []
    for null_row, alt_row, mult in pairs:
        letters.extend([(null_row.probs, alt_row.probs)] * mult)
    atoms: dict[float, float] = {}
    null_only = 0.0
    alt_only = 0.0
    ny = letters[0][0].size
    for ys in itertools.product(range(ny), repeat=len(letters)):
        pn = 1.0
        pa = 1.0
        for (nrow, arow), y in zip(letters, ys):
            pn *= nrow[y]
            pa *= arow[y]
        if pn > 0 and pa > 0:
            t = float(np.log(pa) - np.log(pn))
            key = round(t, 10)
            atoms[key] = atoms.get(key, 0.0) + pn
        elif pn > 0:
            null_only += pn
        elif pa > 0:
            alt_only += pa
    return atoms, null_only, alt_only
