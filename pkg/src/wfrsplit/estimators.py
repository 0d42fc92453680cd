"""scikit-learn style wrappers around the two half steps and the model drivers.

Rows of ``X`` are densities flattened in C order over the grid. Nothing is
learned: ``fit`` only validates shapes and builds the grid, except for
:class:`WFRSimulator` whose ``fit`` runs the simulation from the given
initial data so that ``predict`` can answer queries in time.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .energy import EnergySpec, Nonlinearity
from .frstep import ReactionSpec, fisher_rao_step
from .grid import Grid
from .models import FAMILIES, ModelConfig, run_model
from .wstep import ALG2Config, wasserstein_jko_step

__all__ = ["FisherRaoStep", "WassersteinJKO", "WFRSimulator"]

_FIELDS = {"scalar": ("rho",), "prey_predator": ("rho", "rho2"),
           "heleshaw": ("rho",), "nutrient": ("rho", "c")}


def _nonlinearity(kind, m):
    if kind == "entropy":
        return Nonlinearity.entropy()
    if kind == "power":
        return Nonlinearity.power(m)
    if kind == "zero":
        return Nonlinearity.zero()
    raise ValueError(f"unknown nonlinearity {kind!r}")


def _densities(X):
    X = check_array(X, dtype=np.float64)
    if np.any(X < 0):
        raise ValueError("densities must be nonnegative")
    return X


def _cell_param(value, n_cells, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim and arr.size != n_cells:
        raise ValueError(f"{name} has {arr.size} entries, expected {n_cells}")
    return arr.reshape(-1) if arr.ndim else arr


class FisherRaoStep(TransformerMixin, BaseEstimator):
    """Pointwise Fisher-Rao proximal step of the reaction energy ``scale F + potential``.

    Parameters
    ----------
    h : float
        Time step.
    nonlinearity : {"zero", "power"}
    m : float
        Exponent for ``"power"``.
    potential, scale : float or array of length ``n_features``
    rtol : float
        Newton tolerance.
    """

    def __init__(self, h=0.01, nonlinearity="zero", m=2.0, potential=0.0, scale=1.0, rtol=1e-12):
        self.h = h
        self.nonlinearity = nonlinearity
        self.m = m
        self.potential = potential
        self.scale = scale
        self.rtol = rtol

    def fit(self, X, y=None):
        X = _densities(X)
        self.n_features_in_ = X.shape[1]
        self.spec_ = ReactionSpec(_nonlinearity(self.nonlinearity, self.m),
                                  _cell_param(self.potential, X.shape[1], "potential"),
                                  _cell_param(self.scale, X.shape[1], "scale"))
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = _densities(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return np.stack([fisher_rao_step(row, self.spec_, self.h, rtol=self.rtol) for row in X])


class WassersteinJKO(TransformerMixin, BaseEstimator):
    """One Wasserstein JKO step per row, solved with the augmented Lagrangian method.

    ``n`` is the grid shape; ``lengths`` and ``origin`` default to the unit box.
    After ``transform`` the ALG2 iteration counts are in ``n_iter_``.
    """

    def __init__(self, n=(32,), lengths=None, origin=None, h=0.01, nonlinearity="entropy", m=2.0,
                 potential=0.0, tol=1e-6, max_iter=3000, n_t=8, r_admm=1.0):
        self.n = n
        self.lengths = lengths
        self.origin = origin
        self.h = h
        self.nonlinearity = nonlinearity
        self.m = m
        self.potential = potential
        self.tol = tol
        self.max_iter = max_iter
        self.n_t = n_t
        self.r_admm = r_admm

    def fit(self, X, y=None):
        X = _densities(X)
        n = (self.n,) if np.isscalar(self.n) else tuple(self.n)
        self.grid_ = Grid(n, tuple(self.lengths or ()), tuple(self.origin or ()))
        if X.shape[1] != self.grid_.size:
            raise ValueError(f"X has {X.shape[1]} features but the grid has {self.grid_.size} cells")
        self.n_features_in_ = X.shape[1]
        V = _cell_param(self.potential, X.shape[1], "potential")
        self.spec_ = EnergySpec(_nonlinearity(self.nonlinearity, self.m),
                                V.reshape(n) if V.ndim else V, 1.0, "diffusion", self.grid_)
        self.config_ = ALG2Config(tol=self.tol, max_iter=self.max_iter, n_t=self.n_t,
                                  r_admm=self.r_admm)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = _densities(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out, iters = [], []
        for row in X:
            rho, rep = wasserstein_jko_step(row.reshape(self.grid_.shape), self.spec_, self.h,
                                            self.grid_, self.config_)
            out.append(rho.reshape(-1))
            iters.append(rep.iterations)
        self.n_iter_ = np.array(iters)
        return np.stack(out)


class WFRSimulator(BaseEstimator):
    """Run a model family from initial data; ``predict(t)`` returns ``rho_h(t)``.

    ``fit(X)`` takes one row per species field in the family's order
    (``rho``; ``rho, rho2``; ``rho``; ``rho, c``). Extra :class:`ModelConfig`
    arguments go in ``model_params`` and ALG2 settings in ``wstep_params``.
    """

    def __init__(self, family="scalar", n=(32,), lengths=None, origin=None, h=0.01, T=0.1,
                 model_params=None, wstep_params=None):
        self.family = family
        self.n = n
        self.lengths = lengths
        self.origin = origin
        self.h = h
        self.T = T
        self.model_params = model_params
        self.wstep_params = wstep_params

    def _config(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        n = (self.n,) if np.isscalar(self.n) else tuple(self.n)
        return ModelConfig(family=self.family, n=n, lengths=tuple(self.lengths or ()),
                           origin=tuple(self.origin or ()), h=self.h, T=self.T,
                           wstep=ALG2Config(**(self.wstep_params or {})), **(self.model_params or {}))

    def fit(self, X, y=None):
        cfg = self._config()
        names = _FIELDS[self.family]
        X = _densities(np.atleast_2d(X))
        if X.shape != (len(names), cfg.grid.size):
            raise ValueError(f"expected X of shape {(len(names), cfg.grid.size)}, got {X.shape}")
        self.n_features_in_ = X.shape[1]
        initial = {name: row.reshape(cfg.grid.shape) for name, row in zip(names, X)}
        self.trajectory_ = run_model(cfg, initial)
        self.times_ = np.asarray(self.trajectory_.times)
        self.converged_ = self.trajectory_.converged
        return self

    def predict(self, t, field="rho"):
        """Piecewise-constant interpolant at the times ``t``; one flattened row per time."""
        check_is_fitted(self, "trajectory_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.T + 1e-12):
            raise ValueError(f"times must lie in [0, {self.T}]")
        return np.stack([self.trajectory_.at(ti, field).reshape(-1) for ti in t])

    def diagnostics(self, name):
        check_is_fitted(self, "trajectory_")
        return self.trajectory_.column(name)
