"""Static Gaussian atom cloud: sampling, pair distances, optical depth and density."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .interactions import BlockadeThreshold, PairModel, pair_potential
from .seeding import generator

PROBE_WAVELENGTH_UM = 0.780
UM3_TO_CM3 = 1e-12


@dataclass(frozen=True)
class CloudGeometry:
    """Axis-aligned Gaussian cloud.

    The probe (and the quantisation axis, which is set by a bias field along
    the probe) lies in the xy-plane at ``probe_angle_xy`` from the y axis.
    ``metadata`` carries trap numbers that are recorded but never simulated:
    the traps are off during preparation, rotation and detection.
    """

    sigma_x: float = 2.4
    sigma_y: float = 4.6
    sigma_z: float = 2.9
    n_atoms: int = 440
    probe_angle_xy: float = np.deg2rad(16.0)
    cross_section_reduction: float = 0.5
    wavelength: float = PROBE_WAVELENGTH_UM
    metadata: dict = field(
        default_factory=lambda: {
            "trap_waists_um": [10.0, 20.0],
            "trap_depths_MHz": [2.0, 20.0],
            "trap_frequencies_kHz": [5.7, 3.0, 4.8],
            "temperature_uK": 80.0,
        },
        compare=False,
    )

    def __post_init__(self):
        if min(self.sigma_x, self.sigma_y, self.sigma_z) <= 0:
            raise ValueError("cloud sizes must be positive")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if not 0 < self.cross_section_reduction <= 1:
            raise ValueError("cross_section_reduction must lie in (0, 1]")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_x, self.sigma_y, self.sigma_z])

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.sigmas**2)

    @property
    def probe_direction(self) -> np.ndarray:
        a = self.probe_angle_xy
        return np.array([np.sin(a), np.cos(a), 0.0])


def rms_pair_distance(geom: CloudGeometry) -> float:
    return float(np.sqrt(2.0 * np.sum(geom.sigmas**2)))


def sample_positions(geom: CloudGeometry, seed: int, n: int | None = None) -> np.ndarray:
    """``n`` (default ``n_atoms``) i.i.d. positions, shape (n, 3), in um."""
    n = geom.n_atoms if n is None else n
    return generator(seed).standard_normal((n, 3)) * geom.sigmas


def sample_pair_separations(geom: CloudGeometry, n_pairs: int, seed: int) -> np.ndarray:
    """Separation vectors r1 - r2 of independent atom pairs, shape (n_pairs, 3)."""
    rng = generator(seed)
    return (rng.standard_normal((n_pairs, 3)) - rng.standard_normal((n_pairs, 3))) * geom.sigmas


def resonant_cross_section(wavelength: float = PROBE_WAVELENGTH_UM) -> float:
    return 3.0 * wavelength**2 / (2.0 * np.pi)


def peak_column_density(covariance: np.ndarray, direction: np.ndarray, n_atoms: float) -> float:
    """Peak of the column density (um^-2) of a Gaussian cloud viewed along ``direction``."""
    k = np.asarray(direction, float)
    k = k / np.linalg.norm(k)
    # any orthonormal pair spanning the plane normal to k
    _, _, vt = np.linalg.svd(k[None, :])
    e = vt[1:]
    transverse = e @ np.asarray(covariance, float) @ e.T
    return float(n_atoms / (2.0 * np.pi * np.sqrt(np.linalg.det(transverse))))


def peak_optical_depth(geom: CloudGeometry) -> float:
    sigma = resonant_cross_section(geom.wavelength) * geom.cross_section_reduction
    return sigma * peak_column_density(geom.covariance, geom.probe_direction, geom.n_atoms)


def mean_density(geom: CloudGeometry) -> float:
    """Density-weighted mean density  <n> = N / (8 pi^1.5 sx sy sz), in cm^-3."""
    per_um3 = geom.n_atoms / (8.0 * np.pi**1.5 * np.prod(geom.sigmas))
    return float(per_um3 / UM3_TO_CM3)


def density_at(geom: CloudGeometry, points: np.ndarray) -> np.ndarray:
    """Local density in cm^-3 at the given positions (um)."""
    s = geom.sigmas
    norm = geom.n_atoms / ((2 * np.pi) ** 1.5 * np.prod(s))
    return norm * np.exp(-0.5 * np.sum((points / s) ** 2, axis=1)) / UM3_TO_CM3


def pair_angles(separations: np.ndarray, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pair distances and angles to the quantisation axis."""
    R = np.linalg.norm(separations, axis=1)
    cos = np.clip(separations @ axis / R, -1.0, 1.0)
    return R, np.arccos(cos)


def double_excitation_fraction(
    geom: CloudGeometry,
    model: PairModel,
    thr: BlockadeThreshold,
    n_pairs: int,
    seed: int,
) -> tuple[float, float]:
    """Fraction of random atom pairs not protected by blockade, with its binomial error.

    A pair counts as unprotected when its interaction energy is below the
    threshold energy.  This is a geometric susceptibility, not a simulation
    of many-body excitation dynamics.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    R, theta = pair_angles(sample_pair_separations(geom, n_pairs, seed), geom.probe_direction)
    frac = float(np.mean(np.abs(pair_potential(model, R, theta)) < thr.energy))
    return frac, float(np.sqrt(frac * (1 - frac) / n_pairs))
