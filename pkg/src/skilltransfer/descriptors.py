"""Wave Kernel Signature descriptors and their spectral coefficients."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum, DimensionMismatch

NUM_ENERGIES = 100
VARIANCE_SCALE = 6.0


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    values: np.ndarray  # (n_vertices, d)
    energies: np.ndarray  # (d,)
    kind: str = "WKS"

    def __post_init__(self):
        if self.values.shape[1] != len(self.energies):
            raise DimensionMismatch("one energy per descriptor column expected")

    @property
    def n_descriptors(self):
        return self.values.shape[1]

    def to_csv(self, path):
        """One row per vertex: index followed by the ``d`` values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex"] + [f"e={e:.6g}" for e in self.energies])
            for i, row in enumerate(self.values):
                w.writerow([i] + [repr(float(x)) for x in row])


def wks(basis, num_energies=NUM_ENERGIES, variance_scale=VARIANCE_SCALE):
    """Wave Kernel Signature from a spectral basis.

    Energies are sampled in log-eigenvalue space, skipping the zero
    eigenvalue, with a Gaussian band of width
    ``variance_scale * range / num_energies``. Every column is then scaled
    to unit mass-weighted norm.
    """
    evals = basis.eigenvalues
    nonzero = evals > 1e-8 * max(evals[-1], 1e-300)
    lam = evals[nonzero]
    phi2 = basis.eigenfunctions[:, nonzero] ** 2
    if len(lam) < 2:
        raise DegenerateSpectrum("WKS needs at least two nonzero eigenvalues")
    log_lam = np.log(lam)
    e_min, e_max = log_lam[0], log_lam[-1]
    span = e_max - e_min
    if span < 1e-8:
        raise DegenerateSpectrum("eigenvalue range collapses")
    sigma = variance_scale * span / num_energies
    energies = np.linspace(e_min + 2 * sigma, e_max - 2 * sigma, num_energies)
    if energies[0] >= energies[-1]:
        raise DegenerateSpectrum("energy window empty after 2-sigma margins")

    G = np.exp(-((energies[None, :] - log_lam[:, None]) ** 2) / (2 * sigma ** 2))  # (k, d)
    values = (phi2 @ G) / G.sum(axis=0)
    norms = np.sqrt(basis.mass @ values ** 2)
    values = values / norms
    return DescriptorSet(values, energies)


def project_descriptors(basis, desc, k=None):
    """Spectral coefficients ``Phi.T M D`` of the descriptor columns, (k, d)."""
    values = desc.values if isinstance(desc, DescriptorSet) else np.asarray(desc, float)
    if values.shape[0] != basis.n_vertices:
        raise DimensionMismatch(f"descriptor has {values.shape[0]} rows, basis has {basis.n_vertices} vertices")
    return basis.project(values, k)
