"""Phase-space state, model parameters, vector fields and first integrals.

States are six reals ``(p, q, r, g1, g2, g3)``: angular velocity in the
body frame followed by the unit vertical vector in the same frame. Most
functions accept either a :class:`State6` or any array whose last axis has
length six, and broadcast over leading axes.
"""
from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels

STATE_FIELDS = ("p", "q", "r", "g1", "g2", "g3")
GEOM_TOL = 1e-10


class DomainError(ValueError):
    """Raised for non-finite or otherwise inadmissible input."""


class ModelKind(enum.Enum):
    KOVALEVSKAYA = "kovalevskaya"
    GORYACHEV_CHAPLYGIN = "goryachev-chaplygin"
    GENERAL = "general"


@dataclass(frozen=True)
class Model:
    """A top: one of the two scaled integrable cases or a general heavy top.

    The integrable cases carry no parameters (gravity is scaled out). The
    general top keeps inertia moments ``A, B, C``, centre of mass ``lam``
    and gravity parameter ``mu``.
    """

    kind: ModelKind
    A: float = 0.0
    B: float = 0.0
    C: float = 0.0
    lam: tuple = (0.0, 0.0, 0.0)
    mu: float = 1.0
    params: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind is ModelKind.GENERAL:
            if min(self.A, self.B, self.C) <= 0 or self.mu <= 0:
                raise DomainError("inertia moments and mu must be positive")
            a, b, c = self.A, self.B, self.C
            if a + b < c or b + c < a or a + c < b:
                warnings.warn("inertia moments violate the triangle inequality",
                              stacklevel=3)
            object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        prm = np.array([self.A, self.B, self.C, *self.lam, self.mu], dtype=float)
        object.__setattr__(self, "params", prm)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def inertia(self) -> np.ndarray:
        """Principal moments as they enter the general equations."""
        if self.kind is ModelKind.KOVALEVSKAYA:
            return np.array([2.0, 2.0, 1.0])
        if self.kind is ModelKind.GORYACHEV_CHAPLYGIN:
            return np.array([4.0, 4.0, 1.0])
        return np.array([self.A, self.B, self.C])

    def to_dict(self) -> dict:
        if self.kind is ModelKind.GENERAL:
            return {"kind": self.kind.value, "A": self.A, "B": self.B, "C": self.C,
                    "lambda1": self.lam[0], "lambda2": self.lam[1],
                    "lambda3": self.lam[2], "mu": self.mu}
        return {"kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        kind = ModelKind(d["kind"])
        if kind is ModelKind.GENERAL:
            return general_top(d["A"], d["B"], d["C"],
                               (d.get("lambda1", 0.0), d.get("lambda2", 0.0),
                                d.get("lambda3", 0.0)), d.get("mu", 1.0))
        return cls(kind)


_KIND_CODES = {
    ModelKind.KOVALEVSKAYA: _kernels.KOVALEVSKAYA,
    ModelKind.GORYACHEV_CHAPLYGIN: _kernels.GORYACHEV_CHAPLYGIN,
    ModelKind.GENERAL: _kernels.GENERAL,
}

KOVALEVSKAYA = Model(ModelKind.KOVALEVSKAYA)
GORYACHEV_CHAPLYGIN = Model(ModelKind.GORYACHEV_CHAPLYGIN)


def general_top(A, B, C, lam=(0.0, 0.0, 0.0), mu=1.0) -> Model:
    return Model(ModelKind.GENERAL, float(A), float(B), float(C), tuple(lam), float(mu))


def model_from_name(name: str) -> Model:
    aliases = {"kovalevskaya": KOVALEVSKAYA, "kov": KOVALEVSKAYA,
               "goryachev-chaplygin": GORYACHEV_CHAPLYGIN, "gc": GORYACHEV_CHAPLYGIN}
    try:
        return aliases[name.lower()]
    except KeyError:
        raise DomainError(f"unknown model {name!r}") from None


class State6(NamedTuple):
    p: float
    q: float
    r: float
    g1: float
    g2: float
    g3: float

    def to_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def to_dict(self) -> dict:
        return dict(zip(STATE_FIELDS, map(float, self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "State6":
        return cls(*(float(d[k]) for k in STATE_FIELDS))

    @classmethod
    def from_array(cls, a) -> "State6":
        a = np.asarray(a, dtype=float)
        return cls(*map(float, a[:6]))

    def on_manifold(self, tol: float = GEOM_TOL) -> bool:
        return abs(self.g1**2 + self.g2**2 + self.g3**2 - 1.0) <= tol


def as_array(s) -> np.ndarray:
    a = np.asarray(s, dtype=float)
    if a.shape[-1] != 6:
        raise DomainError(f"state must have 6 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("state contains non-finite values")
    return a


def vector_field(model: Model, s) -> np.ndarray:
    """Time derivative of all six coordinates at ``s``."""
    y = as_array(s)
    if y.ndim == 1:
        out = np.empty(6)
        _kernels.rhs(model.code, model.params, np.ascontiguousarray(y), out, 1.0)
        return out
    flat = np.ascontiguousarray(y.reshape(-1, 6))
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        _kernels.rhs(model.code, model.params, flat[i], out[i], 1.0)
    return out.reshape(y.shape)


class IntegralValues(NamedTuple):
    """First-integral values.

    ``k`` holds k^2 for the Kovalevskaya top, the signed k for
    Goryachev-Chaplygin and is NaN for the general top. For
    Goryachev-Chaplygin ``c`` is the area combination 4(p g1 + q g2) + r g3,
    which vanishes on the integrable level.
    """

    h: float
    c: float
    k: float
    geom: float

    def to_dict(self) -> dict:
        return {"h": self.h, "c": self.c, "k": self.k, "geom": self.geom}


def integral_array(model: Model, s) -> np.ndarray:
    """Integrals stacked on the last axis in the order (h, c, k, geom)."""
    y = as_array(s)
    p, q, r, g1, g2, g3 = np.moveaxis(y, -1, 0)
    geom = g1 * g1 + g2 * g2 + g3 * g3
    if model.kind is ModelKind.KOVALEVSKAYA:
        h = p * p + q * q + 0.5 * r * r + g1
        c = 2.0 * (p * g1 + q * g2) + r * g3
        k = (p * p - q * q - g1) ** 2 + (2.0 * p * q - g2) ** 2
    elif model.kind is ModelKind.GORYACHEV_CHAPLYGIN:
        h = 2.0 * (p * p + q * q) + 0.5 * r * r + g1
        c = 4.0 * (p * g1 + q * g2) + r * g3
        k = r * (p * p + q * q) - p * g3
    else:
        a, b, cc = model.A, model.B, model.C
        l1, l2, l3 = model.lam
        h = 0.5 * (a * p * p + b * q * q + cc * r * r) + model.mu * (l1 * g1 + l2 * g2 + l3 * g3)
        c = a * p * g1 + b * q * g2 + cc * r * g3
        k = np.full_like(h, np.nan)
    return np.stack([h, c, k, geom], axis=-1)


def integrals(model: Model, s) -> IntegralValues:
    return IntegralValues(*map(float, integral_array(model, s)))


def integral_gradients(model: Model, s) -> np.ndarray:
    """Gradients of (h, c, geom[, k]) at a single state, one per row.

    The integrable models give a 4x6 matrix, the general top 3x6.
    """
    p, q, r, g1, g2, g3 = as_array(s)
    z = 0.0
    if model.kind is ModelKind.KOVALEVSKAYA:
        u = p * p - q * q - g1
        v = 2.0 * p * q - g2
        return np.array([
            [2 * p, 2 * q, r, 1.0, z, z],
            [2 * g1, 2 * g2, g3, 2 * p, 2 * q, r],
            [z, z, z, 2 * g1, 2 * g2, 2 * g3],
            [4 * u * p + 4 * v * q, -4 * u * q + 4 * v * p, z, -2 * u, -2 * v, z],
        ])
    if model.kind is ModelKind.GORYACHEV_CHAPLYGIN:
        return np.array([
            [4 * p, 4 * q, r, 1.0, z, z],
            [4 * g1, 4 * g2, g3, 4 * p, 4 * q, r],
            [z, z, z, 2 * g1, 2 * g2, 2 * g3],
            [2 * p * r - g3, 2 * q * r, p * p + q * q, z, z, -p],
        ])
    a, b, c = model.A, model.B, model.C
    mu = model.mu
    l1, l2, l3 = model.lam
    return np.array([
        [a * p, b * q, c * r, mu * l1, mu * l2, mu * l3],
        [a * g1, b * g2, c * g3, a * p, b * q, c * r],
        [z, z, z, 2 * g1, 2 * g2, 2 * g3],
    ])


class SymmetryMap(enum.Enum):
    """Sign-flip symmetries of the integrable level sets (signs per coordinate)."""

    ALPHA = (-1, -1, 1, 1, 1, -1)
    NEG_PQR = (-1, -1, -1, 1, 1, 1)
    NEG_R_NEG_G3 = (1, 1, -1, 1, 1, -1)
    # same sign pattern as NEG_PQR; enum makes it an alias
    NEG_PQ_NEG_R = (-1, -1, -1, 1, 1, 1)

    @property
    def signs(self) -> np.ndarray:
        return np.array(self.value, dtype=float)

    @property
    def area_sign(self) -> int:
        """How the area integral transforms: c -> area_sign * c."""
        sg = self.value
        return sg[0] * sg[3]


def symmetry_apply(m: SymmetryMap, s):
    """Apply a sign-flip map; a State6 in gives a State6 out."""
    out = as_array(s) * m.signs
    if isinstance(s, State6):
        return State6.from_array(out)
    return out
