"""Rydberg pair potentials and blockade geometry.

All energies are ordinary frequencies in MHz (E/h) and lengths are in um,
so C6 is in MHz um^6 and C3 in MHz um^3.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

# r'r' (91P3/2, mj=3/2) along the quantisation axis
C6_RPRIME = 1.94e6
# r r' (92S1/2 + 91P3/2) fitted exchange + van der Waals branches
C6_R_RPRIME = 6.31e6
C3_R_RPRIME = 2.36e4
BLOCKADE_ASPECT_RATIO = 1.6
# three-photon preparation linewidth (FWHM)
GAMMA3_MHZ = 0.6
# detection-channel radius used to pin the otherwise unknown EIT linewidth
R_BLOCKADE_PLUS_UM = 12.7

GRID_POINTS = 512
GRID_R_MIN = 0.5
GRID_R_MAX = 100.0


class PairKind(str, enum.Enum):
    VDW_ANISOTROPIC = "vdw_anisotropic"
    EXCHANGE_PLUS_VDW = "exchange_plus_vdw"


class Branch(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    NOT_APPLICABLE = "n/a"


class ThresholdConvention(str, enum.Enum):
    HALF_LINEWIDTH = "half_linewidth"
    FULL_LINEWIDTH = "full_linewidth"


class AverageConvention(str, enum.Enum):
    SOLID_ANGLE_MEAN = "solid_angle_mean"
    BRANCH_MEAN = "branch_mean"
    ARITHMETIC_AXES_MEAN = "arithmetic_axes_mean"
    GEOMETRIC_AXES_MEAN = "geometric_axes_mean"


class UnblockadedError(ValueError):
    """The interaction never exceeds the threshold inside the search range."""


@dataclass(frozen=True)
class PairModel:
    kind: PairKind
    c6_parallel: float
    c3: float = 0.0
    anisotropy_ratio: float = 1.0
    branch: Branch = Branch.NOT_APPLICABLE

    def __post_init__(self):
        if not self.c6_parallel > 0:
            raise ValueError("c6_parallel must be positive")
        if self.c3 < 0:
            raise ValueError("c3 must be non-negative")
        if self.anisotropy_ratio < 1:
            raise ValueError("anisotropy_ratio must be >= 1")
        if self.kind is PairKind.EXCHANGE_PLUS_VDW:
            if not self.c3 > 0:
                raise ValueError("exchange model needs c3 > 0")
            if self.branch not in (Branch.PLUS, Branch.MINUS):
                raise ValueError("exchange model needs branch plus or minus")

    @classmethod
    def rprime_pair(cls, c6_parallel: float = C6_RPRIME, anisotropy_ratio: float = BLOCKADE_ASPECT_RATIO):
        """Two atoms in r' (preparation channel)."""
        return cls(PairKind.VDW_ANISOTROPIC, c6_parallel, 0.0, anisotropy_ratio)

    @classmethod
    def r_rprime_pair(cls, branch: Branch | str = Branch.PLUS, c6: float = C6_R_RPRIME, c3: float = C3_R_RPRIME):
        """One atom in r and one in r' (detection channel)."""
        return cls(PairKind.EXCHANGE_PLUS_VDW, c6, c3, 1.0, Branch(branch))

    def other_branch(self) -> "PairModel":
        if self.kind is not PairKind.EXCHANGE_PLUS_VDW:
            raise ValueError("only exchange models have branches")
        flip = Branch.MINUS if self.branch is Branch.PLUS else Branch.PLUS
        return replace(self, branch=flip)


@dataclass(frozen=True)
class BlockadeThreshold:
    linewidth: float
    convention: ThresholdConvention = ThresholdConvention.FULL_LINEWIDTH

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")

    @property
    def energy(self) -> float:
        """Threshold interaction energy in MHz."""
        if self.convention is ThresholdConvention.HALF_LINEWIDTH:
            return 0.5 * self.linewidth
        return self.linewidth


def c6_angular(model: PairModel, theta):
    """C6(theta) = C6(0) * (cos^2 + k sin^2), with k = aspect_ratio**6.

    The interpolation is a model choice: it reproduces the axial value and
    the radius aspect ratio exactly and is smooth in between.
    """
    k = model.anisotropy_ratio**6
    c, s = np.cos(theta), np.sin(theta)
    return model.c6_parallel * (c * c + k * s * s)


def pair_potential(model: PairModel, R, theta=0.0):
    """Signed pair interaction in MHz at separation R (um) and angle theta (rad)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("separation R must be positive")
    if model.kind is PairKind.EXCHANGE_PLUS_VDW:
        sign = 1.0 if model.branch is Branch.PLUS else -1.0
        out = model.c6_parallel / R**6 + sign * model.c3 / R**3
    else:
        out = c6_angular(model, theta) / R**6
    return out if out.ndim else float(out)


def threshold_crossings(
    model: PairModel,
    thr: BlockadeThreshold,
    theta: float = 0.0,
    r_max: float = GRID_R_MAX,
    r_min: float = GRID_R_MIN,
    n_grid: int = GRID_POINTS,
) -> list[tuple[float, str]]:
    """All radii in (r_min, r_max] where |V| equals the threshold energy.

    Each crossing is tagged ``"falling"`` when |V| drops below the threshold
    moving outward and ``"rising"`` when it climbs back above.  Crossings are
    bracketed on a log-spaced grid and polished with Brent's method.
    """
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    lo = min(r_min, 0.1 * r_max)
    grid = np.geomspace(lo, r_max, n_grid)
    nu = thr.energy

    def g(r):
        return abs(pair_potential(model, r, theta)) - nu

    vals = np.abs(pair_potential(model, grid, theta)) - nu
    out = []
    for i in range(n_grid - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            if i == 0 or np.sign(vals[i - 1]) != np.sign(b):
                out.append((float(grid[i]), "falling" if b < 0 else "rising"))
            continue
        if a * b < 0:
            root = brentq(g, grid[i], grid[i + 1], xtol=1e-10, rtol=1e-14)
            out.append((float(root), "falling" if a > 0 else "rising"))
    if vals[-1] == 0.0:
        out.append((float(grid[-1]), "falling" if vals[-2] > 0 else "rising"))
    return out


def blockade_radius(model: PairModel, thr: BlockadeThreshold, theta: float = 0.0, r_max: float = GRID_R_MAX) -> float:
    """Innermost radius at which |V| falls below the threshold energy."""
    for r, direction in threshold_crossings(model, thr, theta, r_max):
        if direction == "falling":
            return r
    raise UnblockadedError(
        f"|V| never crosses {thr.energy:g} MHz from above within (0, {r_max:g}] um"
    )


def calibrate_threshold(
    model: PairModel,
    radius: float = R_BLOCKADE_PLUS_UM,
    theta: float = 0.0,
    convention: ThresholdConvention = ThresholdConvention.HALF_LINEWIDTH,
) -> BlockadeThreshold:
    """Threshold whose blockade radius for ``model`` equals ``radius``."""
    nu = abs(pair_potential(model, radius, theta))
    width = 2 * nu if convention is ThresholdConvention.HALF_LINEWIDTH else nu
    return BlockadeThreshold(width, convention)


def preparation_threshold() -> BlockadeThreshold:
    return BlockadeThreshold(GAMMA3_MHZ, ThresholdConvention.FULL_LINEWIDTH)


def blockade_average(
    model: PairModel,
    thr: BlockadeThreshold,
    convention: AverageConvention | str = AverageConvention.SOLID_ANGLE_MEAN,
    n_nodes: int = 64,
) -> float:
    """Collapse an angle- or branch-dependent blockade radius to one number."""
    convention = AverageConvention(convention)
    if convention is AverageConvention.BRANCH_MEAN:
        if model.kind is not PairKind.EXCHANGE_PLUS_VDW:
            raise ValueError("branch mean needs an exchange model")
        return 0.5 * (blockade_radius(model, thr) + blockade_radius(model.other_branch(), thr))
    if model.kind is not PairKind.VDW_ANISOTROPIC:
        raise ValueError(f"{convention.value} needs an anisotropic van der Waals model")
    if convention is AverageConvention.SOLID_ANGLE_MEAN:
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        # mean over the sphere: (1/2) * integral of r_B(theta) sin(theta) over [0, pi], u = cos(theta)
        radii = np.array([blockade_radius(model, thr, float(np.arccos(u))) for u in x])
        return float(0.5 * radii @ w)
    axial = blockade_radius(model, thr, 0.0)
    equatorial = blockade_radius(model, thr, 0.5 * np.pi)
    if convention is AverageConvention.ARITHMETIC_AXES_MEAN:
        return (axial + 2 * equatorial) / 3
    return float((axial * equatorial**2) ** (1 / 3))


def radius_table(model: PairModel, thr: BlockadeThreshold, thetas) -> np.ndarray:
    return np.array([blockade_radius(model, thr, float(t)) for t in thetas])
