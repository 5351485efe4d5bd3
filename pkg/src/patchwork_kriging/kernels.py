"""Stationary covariance functions and hyperparameter containers.

Two isotropic families are supported::

    SquaredExponential  c(x, x') = tau * exp(-|x - x'|^2 / (2 rho^2))
    Exponential         c(x, x') = tau * exp(-|x - x'| / rho)

``noise_var`` is the observation noise added to the diagonal of data
covariance blocks; it never enters :meth:`KernelSpec.eval`.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, InputError

#: Relative diagonal inflation for matrices without a noise term.
JITTER_REL = 1e-8


class Family(enum.Enum):
    SquaredExponential = "SquaredExponential"
    Exponential = "Exponential"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "se": cls.SquaredExponential,
            "sqexp": cls.SquaredExponential,
            "squaredexponential": cls.SquaredExponential,
            "squared_exponential": cls.SquaredExponential,
            "rbf": cls.SquaredExponential,
            "exp": cls.Exponential,
            "exponential": cls.Exponential,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InputError(f"unknown kernel family {value!r}") from None


def _as_points(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 2-d array of points, got ndim={X.ndim}")
    return X


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family together with its hyperparameters.

    Parameters
    ----------
    family : Family or str
        ``"se"``/``"SquaredExponential"`` or ``"exp"``/``"Exponential"``.
    tau : float
        Signal variance, ``eval(x, x) == tau``.
    rho : float
        Length-scale.
    noise_var : float
        Observation noise variance (may be zero).
    """

    family: Family = Family.SquaredExponential
    tau: float = 1.0
    rho: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("tau", "rho", "noise_var"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InputError(f"tau must be positive, got {self.tau}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise InputError(f"rho must be positive, got {self.rho}")
        if not (np.isfinite(self.noise_var) and self.noise_var >= 0):
            raise InputError(f"noise_var must be non-negative, got {self.noise_var}")

    @property
    def jitter(self) -> float:
        return JITTER_REL * self.tau

    @property
    def nugget(self) -> float:
        """Diagonal term added to data covariance blocks.

        Equal to ``noise_var`` unless that is exactly zero, in which case the
        jitter ``1e-8 * tau`` is used so the block stays factorizable.
        """
        return self.noise_var if self.noise_var > 0 else self.jitter

    def _from_dist(self, d2: np.ndarray) -> np.ndarray:
        if self.family is Family.SquaredExponential:
            return self.tau * np.exp(-0.5 * d2 / self.rho**2)
        return self.tau * np.exp(-np.sqrt(d2) / self.rho)

    def eval(self, x1, x2) -> float:
        """Covariance between two single points."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if x1.ndim != 1 or x2.ndim != 1 or x1.shape != x2.shape:
            raise InputError(f"point dimensions differ: {x1.shape} vs {x2.shape}")
        diff = x1 - x2
        return float(self._from_dist(np.dot(diff, diff)))

    def cross_cov(self, X1, X2) -> np.ndarray:
        """Matrix of covariances ``c(X1[i], X2[j])``."""
        X1 = _as_points(X1, "X1")
        X2 = _as_points(X2, "X2")
        if X1.shape[1] != X2.shape[1]:
            raise InputError(
                f"dimension mismatch: X1 has d={X1.shape[1]}, X2 has d={X2.shape[1]}"
            )
        if X1.shape[0] == 0 or X2.shape[0] == 0:
            return np.zeros((X1.shape[0], X2.shape[0]))
        return self._from_dist(cdist(X1, X2, "sqeuclidean"))

    def diag(self, X) -> np.ndarray:
        """Prior variances at the rows of ``X`` (all equal to ``tau``)."""
        return np.full(_as_points(X).shape[0], self.tau)

    def replace(self, **changes) -> "KernelSpec":
        fields = self.to_dict()
        fields.update(changes)
        return KernelSpec(**fields)

    # log-space parameterization used by the optimizer
    def to_log(self, with_noise=True) -> np.ndarray:
        vals = [np.log(self.tau), np.log(self.rho)]
        if with_noise:
            vals.append(np.log(self.noise_var))
        return np.array(vals)

    def from_log(self, theta) -> "KernelSpec":
        theta = np.asarray(theta, dtype=float)
        noise = float(np.exp(theta[2])) if theta.size > 2 else self.noise_var
        return KernelSpec(self.family, float(np.exp(theta[0])), float(np.exp(theta[1])), noise)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "tau": self.tau,
            "rho": self.rho,
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, d) -> "KernelSpec":
        missing = {"family", "tau", "rho", "noise_var"} - set(d)
        if missing:
            raise InputError(f"kernel spec missing fields: {sorted(missing)}")
        return cls(d["family"], d["tau"], d["rho"], d["noise_var"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "KernelSpec":
        return cls.from_dict(json.loads(text))


def cross_cov(spec: KernelSpec, X1, X2) -> np.ndarray:
    return spec.cross_cov(X1, X2)


def delta_jitter(spec_k: KernelSpec, spec_l: KernelSpec, rel: float = JITTER_REL) -> float:
    """Jitter for a boundary-difference variable between regions k and l.

    Its prior variance is ``tau_k + tau_l``; half of that times
    :data:`JITTER_REL` reduces to ``1e-8 * tau`` for shared kernels.
    """
    return rel * 0.5 * (spec_k.tau + spec_l.tau)


class HyperParams:
    """One shared :class:`KernelSpec` or one per region.

    >>> hp = HyperParams(KernelSpec("se", 10.0, 1.0, 1.0))
    >>> hp.shared, hp[3].tau
    (True, 10.0)
    """

    def __init__(self, specs: KernelSpec | Sequence[KernelSpec]):
        if isinstance(specs, KernelSpec):
            specs = [specs]
        specs = list(specs)
        if not specs or not all(isinstance(s, KernelSpec) for s in specs):
            raise InputError("HyperParams needs one or more KernelSpec objects")
        self.specs = tuple(specs)

    @property
    def shared(self) -> bool:
        return len(self.specs) == 1

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, region: int) -> KernelSpec:
        return self.specs[0] if self.shared else self.specs[region]

    def __eq__(self, other):
        return isinstance(other, HyperParams) and self.specs == other.specs

    def __repr__(self):
        return f"HyperParams({list(self.specs)!r})"

    def check(self, n_regions: int) -> "HyperParams":
        if not self.shared and len(self.specs) != n_regions:
            raise ConfigurationError(
                f"got {len(self.specs)} kernel specs for {n_regions} regions; "
                "pass one shared spec or exactly one per region"
            )
        return self

    def expand(self, n_regions: int) -> list:
        self.check(n_regions)
        return [self[k] for k in range(n_regions)]

    def to_list(self) -> list:
        return [s.to_dict() for s in self.specs]

    @classmethod
    def from_list(cls, items) -> "HyperParams":
        if isinstance(items, dict):
            items = [items]
        return cls([KernelSpec.from_dict(d) for d in items])
