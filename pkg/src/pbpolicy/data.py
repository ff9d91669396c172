"""Data model, feature maps, linear threshold policies, and the inverse
propensity weighted welfare/cost functionals consumed by every other module.

Scores are the per-unit transforms

    delta_y_i = Y_i D_i / e(X_i) - Y_i (1 - D_i) / (1 - e(X_i)),

and analogously delta_c_i with the cost C_i.  A linear threshold policy treats
when phi(x)' theta > 0 (strict; ties assign no treatment), so all empirical
functionals are scale invariant in theta.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Observation",
    "Sample",
    "IPWScores",
    "FeatureMap",
    "PolyFeatureMap",
    "IdentityFeatureMap",
    "LinearPolicy",
    "ipw_transform",
    "empirical_welfare",
    "empirical_cost",
    "poly_feature_map",
    "decisions",
    "load_sample_csv",
]


@dataclass(frozen=True)
class Observation:
    """One treatment record (y, c, d, x)."""

    y: float
    c: float
    d: int
    x: np.ndarray

    def __post_init__(self):
        if self.d not in (0, 1):
            raise ValueError(f"treatment indicator must be 0 or 1, got {self.d}")


@dataclass
class Sample:
    """An i.i.d. collection of observations with a known propensity function.

    Arrays are column views of the records; `observations` materializes the
    record view on demand.  `m_y` and `m_c` are optional declared outcome/cost
    bounds (|y| <= m_y/2, |c| <= m_c/2); operations that need them refuse to
    run when they are absent rather than estimating them from data.
    """

    y: np.ndarray
    c: np.ndarray
    d: np.ndarray
    x: np.ndarray  # shape (n, d_x)
    propensity: Callable[[np.ndarray], np.ndarray]
    kappa: float
    m_y: Optional[float] = None
    m_c: Optional[float] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        n = self.y.shape[0]
        if n == 0:
            raise ValueError("sample is empty")
        if not (self.c.shape[0] == self.d.shape[0] == self.x.shape[0] == n):
            raise ValueError("sample columns have mismatched lengths")
        if not np.isin(self.d, (0, 1)).all():
            raise ValueError("treatment indicator column must be 0/1")
        if not (0.0 < self.kappa < 0.5):
            raise ValueError(f"kappa must lie in (0, 1/2), got {self.kappa}")
        e = self.propensities()
        if np.any(e < self.kappa - 1e-12) or np.any(e > 1 - self.kappa + 1e-12):
            raise ValueError("propensity outside [kappa, 1-kappa] on the sample")
        if self.m_y is not None and np.any(np.abs(self.y) > self.m_y / 2 + 1e-12):
            raise ValueError("outcome magnitude exceeds declared m_y/2")
        if self.m_c is not None and np.any(np.abs(self.c) > self.m_c / 2 + 1e-12):
            raise ValueError("cost magnitude exceeds declared m_c/2")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def propensities(self) -> np.ndarray:
        e = np.asarray(self.propensity(self.x), dtype=float)
        if e.shape == ():
            e = np.full(self.n, float(e))
        return e

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(self.y[i]), float(self.c[i]), int(self.d[i]), self.x[i])
            for i in range(self.n)
        ]

    @classmethod
    def from_observations(cls, obs: Sequence[Observation], propensity, kappa,
                          m_y=None, m_c=None) -> "Sample":
        return cls(
            y=np.array([o.y for o in obs]),
            c=np.array([o.c for o in obs]),
            d=np.array([o.d for o in obs]),
            x=np.vstack([o.x for o in obs]),
            propensity=propensity,
            kappa=kappa,
            m_y=m_y,
            m_c=m_c,
        )

    def subset(self, idx: np.ndarray) -> "Sample":
        return Sample(self.y[idx], self.c[idx], self.d[idx], self.x[idx],
                      self.propensity, self.kappa, self.m_y, self.m_c)


@dataclass(frozen=True)
class IPWScores:
    """Per-unit welfare and cost scores plus the mean welfare score."""

    delta_y: np.ndarray
    delta_c: np.ndarray
    mean_delta_y: float

    @property
    def n(self) -> int:
        return self.delta_y.shape[0]


def ipw_transform(sample: Sample) -> IPWScores:
    """Inverse propensity weighted per-unit scores of a sample.

    Raises if a propensity value violates the declared overlap, or if declared
    bounds m_y/m_c are contradicted by the implied score bounds.
    """
    e = sample.propensities()
    if np.any(e < sample.kappa - 1e-12) or np.any(e > 1 - sample.kappa + 1e-12):
        raise ValueError("propensity outside [kappa, 1-kappa]")
    d = sample.d.astype(float)
    dy = sample.y * d / e - sample.y * (1 - d) / (1 - e)
    dc = sample.c * d / e - sample.c * (1 - d) / (1 - e)
    if sample.m_y is not None:
        cap = sample.m_y / (2 * sample.kappa) + 1e-9
        if np.any(np.abs(dy) > cap):
            raise ValueError("welfare score exceeds m_y/(2 kappa)")
    if sample.m_c is not None:
        cap = sample.m_c / (2 * sample.kappa) + 1e-9
        if np.any(np.abs(dc) > cap):
            raise ValueError("cost score exceeds m_c/(2 kappa)")
    return IPWScores(dy, dc, float(np.mean(dy)))


@dataclass(frozen=True)
class LinearPolicy:
    """Threshold rule: treat x iff phi(x)' theta > 0."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))


def decisions(theta, features: np.ndarray) -> np.ndarray:
    """0/1 decisions of a linear policy on a feature matrix (n, q)."""
    th = theta.theta if isinstance(theta, LinearPolicy) else np.asarray(theta, float)
    return (np.asarray(features, dtype=float) @ th > 0.0).astype(float)


def empirical_welfare(theta, scores: IPWScores, features: np.ndarray) -> float:
    """(1/n) sum_i delta_y_i 1{phi(x_i)' theta > 0}."""
    features = np.asarray(features, dtype=float)
    if features.shape[0] != scores.n:
        raise ValueError("scores and features have mismatched lengths")
    return float(scores.delta_y @ decisions(theta, features) / scores.n)


def empirical_cost(theta, scores: IPWScores, features: np.ndarray) -> float:
    """(1/n) sum_i delta_c_i 1{phi(x_i)' theta > 0}."""
    features = np.asarray(features, dtype=float)
    if features.shape[0] != scores.n:
        raise ValueError("scores and features have mismatched lengths")
    return float(scores.delta_c @ decisions(theta, features) / scores.n)


class FeatureMap:
    """Base class: a map x -> phi(x) in R^q."""

    dimension: int

    def transform(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class IdentityFeatureMap(FeatureMap):
    """Pass-through map for callers that already work in feature space."""

    dimension: int

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dimension:
            raise ValueError(f"expected {self.dimension} columns, got {x.shape[1]}")
        return x


@dataclass
class PolyFeatureMap(FeatureMap):
    """All monomials of the covariates up to a total degree, optionally
    centered and scaled by training statistics.

    The constant monomial is exempt from normalization (its sd is zero); any
    other monomial with sd below 1e-12 on the fitting data is an error.
    """

    degree: int
    d_x: int
    exponents: np.ndarray = field(repr=False)  # (q, d_x) int
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:  # type: ignore[override]
        return self.exponents.shape[0]

    def raw(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d_x:
            raise ValueError(f"expected {self.d_x} covariates, got {x.shape[1]}")
        # x[:, None, :] ** exponents -> product over covariates per monomial
        return np.prod(x[:, None, :] ** self.exponents[None, :, :], axis=2)

    def fit_normalization(self, x_train: np.ndarray) -> "PolyFeatureMap":
        m = self.raw(x_train)
        means = m.mean(axis=0)
        sds = m.std(axis=0, ddof=1)
        const = (self.exponents == 0).all(axis=1)
        means[const] = 0.0
        sds[const] = 1.0
        if np.any(sds[~const] < 1e-12):
            raise ValueError("a non-constant monomial has (near) zero sd on the fitting data")
        return replace(self, means=means, sds=sds)

    def transform(self, x: np.ndarray) -> np.ndarray:
        m = self.raw(x)
        if self.means is None:
            return m
        return (m - self.means) / self.sds


def poly_feature_map(degree: int, d_x: int) -> PolyFeatureMap:
    """Monomial feature map of all total degrees 0..degree in d_x covariates.

    Ordered by total degree, then lexicographically within a degree, so the
    layout is stable: constant first, then linears, then quadratics, ...
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if d_x < 1:
        raise ValueError("d_x must be >= 1")
    rows = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d_x), total):
            exps = np.zeros(d_x, dtype=int)
            for j in combo:
                exps[j] += 1
            rows.append(exps)
    return PolyFeatureMap(degree=degree, d_x=d_x, exponents=np.array(rows, dtype=int))


def load_sample_csv(path, propensity_const: Optional[float] = None,
                    kappa: Optional[float] = None,
                    m_y: Optional[float] = None,
                    m_c: Optional[float] = None) -> Sample:
    """Read a sample from CSV with header columns y, c, d, x1..x_k and an
    optional propensity column e.  When no e column exists, a constant
    propensity must be supplied.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        cols = list(reader.fieldnames)
        xcols = sorted((c for c in cols if c.startswith("x") and c[1:].isdigit()),
                       key=lambda c: int(c[1:]))
        for required in ("y", "c", "d"):
            if required not in cols:
                raise ValueError(f"{path}: missing column {required!r}")
        if not xcols:
            raise ValueError(f"{path}: no covariate columns x1..xk found")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    y = np.array([float(r["y"]) for r in rows])
    c = np.array([float(r["c"]) for r in rows])
    d = np.array([int(r["d"]) for r in rows])
    x = np.array([[float(r[cc]) for cc in xcols] for r in rows])
    if "e" in cols:
        e = np.array([float(r["e"]) for r in rows])
        prop = _TabulatedPropensity(x, e)
    elif propensity_const is not None:
        prop = _ConstantPropensity(float(propensity_const))
        e = np.full(len(rows), float(propensity_const))
    else:
        raise ValueError(f"{path}: no e column and no constant propensity given")
    if kappa is None:
        lo = float(min(e.min(), 1 - e.max()))
        kappa = min(lo, 0.49)
        if kappa <= 0:
            raise ValueError("propensities leave no room for a positive kappa")
    return Sample(y, c, d, x, prop, kappa, m_y=m_y, m_c=m_c)


@dataclass
class _ConstantPropensity:
    value: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(x).shape[0], self.value)


class _TabulatedPropensity:
    """Propensity known only at the observed covariate rows."""

    def __init__(self, x: np.ndarray, e: np.ndarray):
        self.x = x
        self.e = e
        self._table = {row.tobytes(): float(v) for row, v in zip(x, e)}

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape == self.x.shape and np.array_equal(x, self.x):
            return self.e
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            key = row.tobytes()
            if key not in self._table:
                raise ValueError("tabulated propensity only defined on the ingested rows")
            out[i] = self._table[key]
        return out
