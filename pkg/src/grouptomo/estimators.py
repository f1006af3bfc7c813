"""Scikit-learn style reconstruction estimators.

Each estimator wraps one measurement scheme: ``fit(X)`` consumes
measurement records (an array whose columns match the scheme's record
layout, or a RecordBatch) and exposes the reconstructed state as
``rho_``.  ``sample`` generates records from a known state, and
``predict_proba`` evaluates outcome distributions of the fitted state
at new settings, so the estimators compose with the usual pipeline and
cloning machinery (``get_params`` / ``set_params`` come from
``sklearn.base.BaseEstimator``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import displaced, homodyne, spin
from .io import RECORD_COLUMNS, RecordBatch
from .linalg import fidelity
from .oscillator import FockSpace
from .validation import ValidationError

__all__ = [
    "SpinSphereTomography",
    "SpinFiniteTomography",
    "HomodyneTomography",
    "DisplacedCountTomography",
]


class _RecordEstimator(BaseEstimator):
    scheme: str = ""

    def _coerce(self, X) -> RecordBatch:
        if isinstance(X, RecordBatch):
            if X.scheme != self.scheme:
                raise ValidationError(
                    f"records carry scheme {X.scheme!r}, estimator expects {self.scheme!r}")
            return X
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("record array must be 2-D")
        width = len(RECORD_COLUMNS[self.scheme])
        if arr.shape[1] == width:
            return RecordBatch(self.scheme, arr, np.ones(arr.shape[0]))
        if arr.shape[1] == width + 1:
            return RecordBatch(self.scheme, arr[:, :width], arr[:, width])
        raise ValidationError(
            f"{self.scheme} records need {width} (or {width}+count) columns")

    def score(self, X, y=None) -> float:
        """Fidelity between the fitted state and a reference state ``y``."""
        if y is None:
            raise ValidationError("score needs the reference state as y")
        self._check_fitted()
        return fidelity(self.rho_, y)

    def _check_fitted(self):
        if not hasattr(self, "rho_"):
            raise ValidationError("estimator is not fitted yet")


class SpinSphereTomography(_RecordEstimator):
    """Sphere-scheme reconstructor for a spin-(two_s/2) system.

    fit(X): rows are (theta, phi, m[, count]).
    """

    scheme = "spin-sphere"

    def __init__(self, two_s: int = 1):
        self.two_s = two_s

    def fit(self, X, y=None):
        records = self._coerce(X)
        system = spin.spin_operators(self.two_s)
        self.result_ = spin.reconstruct_sphere_records(system, records)
        self.rho_ = self.result_.symmetrized
        return self

    def sample(self, rho, shots: int, seed: int = 0) -> RecordBatch:
        system = spin.spin_operators(self.two_s)
        return spin.sample_spin_sphere(rho, system, shots, seed)

    def predict_proba(self, X) -> np.ndarray:
        """Outcome distributions of the fitted state at directions
        (theta, phi); columns follow m descending."""
        self._check_fitted()
        system = spin.spin_operators(self.two_s)
        arr = np.asarray(X, dtype=np.float64)
        bases = spin._basis_batch(system, arr[:, 0], arr[:, 1])
        return spin._direction_probabilities(self.rho_.matrix, bases)


class SpinFiniteTomography(_RecordEstimator):
    """Finite-frame reconstructor over (2S+1)^2 rotation labels.

    Labels are generated from ``labels_seed`` unless given explicitly as
    (Direction, psi) pairs.  fit(X): rows are (label_index, m[, count]).
    """

    scheme = "spin-finite"

    def __init__(self, two_s: int = 1, labels=None, labels_seed: int = 0,
                 mode: str = "rotations"):
        self.two_s = two_s
        self.labels = labels
        self.labels_seed = labels_seed
        self.mode = mode

    def _label_set(self, system):
        if self.labels is not None:
            return self.labels
        return spin.random_finite_labels(system, seed=self.labels_seed, mode=self.mode)

    def fit(self, X, y=None):
        records = self._coerce(X)
        system = spin.spin_operators(self.two_s)
        labels = self._label_set(system)
        self.result_ = spin.reconstruct_finite_records(system, labels, records,
                                                       mode=self.mode)
        self.rho_ = self.result_.symmetrized
        return self

    def sample(self, rho, shots: int, seed: int = 0) -> RecordBatch:
        system = spin.spin_operators(self.two_s)
        return spin.sample_spin_finite(rho, system, self._label_set(system), shots, seed)

    def predict_proba(self, X) -> np.ndarray:
        """Outcome distributions of the fitted state at label indices."""
        self._check_fitted()
        system = spin.spin_operators(self.two_s)
        labels = self._label_set(system)
        idx = np.asarray(X, dtype=int).ravel()
        thetas = np.array([labels[i][0].theta for i in idx])
        phis = np.array([labels[i][0].phi for i in idx])
        bases = spin._basis_batch(system, thetas, phis)
        return spin._direction_probabilities(self.rho_.matrix, bases)


class HomodyneTomography(_RecordEstimator):
    """Quadrature-measurement reconstructor on a truncated Fock space.

    fit(X): rows are (phi, x[, count]) with x on the configured grid.
    """

    scheme = "homodyne"

    def __init__(self, nmax: int = 20, phi_nodes: int = 50, x_max: float = 6.0,
                 x_nodes: int = 401, k_max: float = 12.0):
        self.nmax = nmax
        self.phi_nodes = phi_nodes
        self.x_max = x_max
        self.x_nodes = x_nodes
        self.k_max = k_max

    def _grid(self) -> homodyne.HomodyneGrid:
        return homodyne.HomodyneGrid(self.phi_nodes, self.x_max, self.x_nodes, self.k_max)

    def fit(self, X, y=None):
        records = self._coerce(X)
        self.result_ = homodyne.reconstruct_homodyne_records(
            self._grid(), records, dim=self.nmax + 1)
        self.rho_ = self.result_.symmetrized
        return self

    def sample(self, rho, shots: int, seed: int = 0) -> RecordBatch:
        return homodyne.sample_homodyne(rho, self._grid(), shots, seed)

    def predict_proba(self, X) -> np.ndarray:
        """Quadrature densities p(phi, x) of the fitted state for rows (phi, x)."""
        self._check_fitted()
        arr = np.asarray(X, dtype=np.float64)
        return np.array([homodyne.homodyne_pdf(self.rho_, phi, x) for phi, x in arr])


class DisplacedCountTomography(_RecordEstimator):
    """Displaced photon-counting reconstructor.

    fit(X): rows are (alpha_re, alpha_im, n[, count]) with |alpha|
    inside the configured disk.
    """

    scheme = "displaced-count"

    def __init__(self, nmax: int = 20, radius: float = 5.0, steps: int = 100,
                 y: float = np.pi):
        self.nmax = nmax
        self.radius = radius
        self.steps = steps
        self.y = y

    def _grid(self) -> displaced.AlphaGrid:
        return displaced.AlphaGrid(self.radius, self.steps, self.y)

    def fit(self, X, y=None):
        records = self._coerce(X)
        self.result_ = displaced.reconstruct_bw_records(
            self._grid(), records, space=FockSpace(self.nmax))
        self.rho_ = self.result_.symmetrized
        return self

    def sample(self, rho, shots: int, seed: int = 0) -> RecordBatch:
        return displaced.sample_displaced_counts(rho, self._grid(), shots, seed,
                                                 space=FockSpace(self.nmax))

    def predict_proba(self, X) -> np.ndarray:
        """Photon distributions of the fitted state at displacements
        (alpha_re, alpha_im); columns are n = 0..nmax."""
        self._check_fitted()
        space = FockSpace(self.nmax)
        arr = np.asarray(X, dtype=np.float64)
        return np.array([displaced.photon_pdf(self.rho_, space, complex(re, im))
                         for re, im in arr])
