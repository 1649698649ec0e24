"""Sample container for RD estimation problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An estimation sample (y_i, x_i, z_i) with the cutoff normalized to zero.

    Parameters
    ----------
    y : (n,) array
        Outcome.
    x : (n,) array
        Running variable, already shifted so the cutoff sits at 0.
    z : (n, p) array
        Covariates; p may be zero.
    t_obs : (n,) array, optional
        Observed treatment status for fuzzy designs.  For sharp designs the
        treatment indicator is 1(x >= 0) and is never stored.
    meta : dict
        Free-form metadata (e.g. the true jump in simulated data).
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    t_obs: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = _readonly(np.atleast_1d(self.y))
        x = _readonly(np.atleast_1d(self.x))
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if z.size else z.reshape(len(y), 0)
        z = _readonly(z)
        n = y.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one observation")
        if x.shape[0] != n or z.shape[0] != n:
            raise ValueError("y, x and z must have the same number of rows")
        for name, a in (("y", y), ("x", x), ("z", z)):
            if a.size and not np.isfinite(a).all():
                raise ValueError(f"non-finite values in {name}")
        t = self.t_obs
        if t is not None:
            t = _readonly(np.atleast_1d(t))
            if t.shape[0] != n:
                raise ValueError("t_obs length does not match y")
            if not np.isfinite(t).all():
                raise ValueError("non-finite values in t_obs")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t_obs", t)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def treatment(self) -> np.ndarray:
        """Sharp treatment indicator 1(x >= 0); x == 0 counts as treated."""
        return (self.x >= 0.0).astype(float)

    def with_outcome(self, y, **meta) -> "Dataset":
        """Copy of the sample with a replaced outcome vector."""
        return Dataset(y=y, x=self.x, z=self.z, t_obs=self.t_obs,
                       meta={**self.meta, **meta})

    def with_covariates(self, z) -> "Dataset":
        """Copy of the sample with a replaced covariate matrix."""
        return Dataset(y=self.y, x=self.x, z=z, t_obs=self.t_obs,
                       meta=dict(self.meta))
