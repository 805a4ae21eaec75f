"""Mapping between nuclear positions and hyperfine coupling parameters.

A point-dipole electron spin at the origin produces a hyperfine field at a
nucleus sitting at spherical position (r, theta, phi), with theta measured
from the electronic quantization axis z.  The field decomposes into a
parallel component a_par, a transverse magnitude a_perp >= 0 and the azimuth
phi of the transverse direction.  Measuring (a_par, a_perp, phi) therefore
pins the nuclear position up to an inversion through the origin; all
recovered positions are reported in the upper hemisphere (theta < 90 deg).

All couplings are angular frequencies (rad/s).  Distances are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalConstants",
    "Position",
    "CONSTANTS",
    "MAGIC_ANGLE",
    "hyperfine_from_position",
    "position_from_hyperfine",
    "nuclear_pair_coupling",
    "pair_distance_respecting_inversion",
]

# polar angle where the parallel dipole component 3cos^2(theta)-1 vanishes
MAGIC_ANGLE = math.atan(math.sqrt(2.0))  # 54.7356 deg


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants entering the point-dipole field, SI units.

    Gyromagnetic ratios are angular (rad s^-1 T^-1); the default gamma_n is
    the 13C value.
    """

    mu0: float = 4.0e-7 * math.pi      # vacuum permeability (T m / A)
    hbar: float = 1.054571817e-34      # reduced Planck constant (J s)
    gamma_e: float = 1.760859630e11    # electron gyromagnetic ratio (rad/s/T)
    gamma_n: float = 6.728284e7        # 13C gyromagnetic ratio (rad/s/T)

    @property
    def dipole_coefficient(self) -> float:
        """mu0 * hbar * gamma_e * gamma_n / (4 pi), in (rad/s) m^3."""
        return self.mu0 * self.hbar * self.gamma_e * self.gamma_n / (4.0 * math.pi)

    @property
    def nuclear_dipole_coefficient(self) -> float:
        """mu0 * hbar * gamma_n^2 / (4 pi) for nucleus-nucleus coupling."""
        return self.mu0 * self.hbar * self.gamma_n**2 / (4.0 * math.pi)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Position:
    """Nuclear position in spherical coordinates relative to the electron.

    r : distance (m), > 0
    theta : polar angle from the quantization axis (rad), in [0, pi]
    phi : azimuth (rad), stored in [0, 2 pi)
    """

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.r) and self.r > 0.0):
            raise ValueError(f"radius must be positive and finite, got {self.r}")
        if not (0.0 <= self.theta <= math.pi):
            raise ValueError(f"polar angle must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))

    def to_cartesian(self) -> np.ndarray:
        s = math.sin(self.theta)
        return self.r * np.array(
            [s * math.cos(self.phi), s * math.sin(self.phi), math.cos(self.theta)]
        )

    @classmethod
    def from_cartesian(cls, xyz) -> "Position":
        x, y, z = (float(v) for v in xyz)
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0.0:
            raise ValueError("position coincides with the electron spin")
        return cls(r=r, theta=math.acos(max(-1.0, min(1.0, z / r))), phi=math.atan2(y, x))


def hyperfine_from_position(
    pos: Position, consts: PhysicalConstants = CONSTANTS
) -> tuple[float, float, float]:
    """Evaluate the point-dipole hyperfine parameters of a nucleus.

    Returns (a_par, a_perp, phi) with a_par = C (3 cos^2(theta) - 1) / r^3 and
    a_perp = C |3 sin(theta) cos(theta)| / r^3, C = mu0 hbar gamma_e gamma_n / 4 pi,
    both in rad/s.  The returned a_perp is nonnegative; when the transverse
    component points opposite to the position azimuth (theta > 90 deg) the
    returned phi is shifted by pi.
    """
    if pos.r <= 0.0:
        raise ValueError("dipole field is singular at r = 0")
    c_over_r3 = consts.dipole_coefficient / pos.r**3
    cos_t = math.cos(pos.theta)
    sin_t = math.sin(pos.theta)
    a_par = c_over_r3 * (3.0 * cos_t**2 - 1.0)
    a_perp_signed = c_over_r3 * 3.0 * sin_t * cos_t
    phi = pos.phi
    if a_perp_signed < 0.0:
        phi = (phi + math.pi) % (2.0 * math.pi)
    return a_par, abs(a_perp_signed), phi


def position_from_hyperfine(
    a_par: float,
    a_perp: float,
    phi: float,
    consts: PhysicalConstants = CONSTANTS,
) -> Position:
    """Invert the point-dipole field for the nuclear position.

    Solves tan(theta) = (-3 x + sqrt(9 x^2 + 8)) / 2 with x = a_par / a_perp,
    then recovers the radius from the coupling magnitude.  The result always
    lies in the upper hemisphere (the dipole field is invariant under an
    inversion through the origin, so the lower-hemisphere image is equivalent).

    Parameters
    ----------
    a_par, a_perp : float
        Parallel and transverse hyperfine couplings (rad/s); a_perp >= 0.
    phi : float
        Azimuth of the transverse hyperfine direction (rad), passed through.
    """
    if a_perp < 0.0:
        raise ValueError("a_perp must be nonnegative")
    coeff = consts.dipole_coefficient
    if a_perp == 0.0:
        # on-axis (theta = 0) or equatorial (theta = 90 deg) limit, by sign of a_par
        if a_par > 0.0:
            return Position(r=(2.0 * coeff / a_par) ** (1.0 / 3.0), theta=0.0, phi=phi)
        if a_par < 0.0:
            return Position(
                r=(coeff / -a_par) ** (1.0 / 3.0), theta=0.5 * math.pi, phi=phi
            )
        raise ValueError("position is undefined for a_par = a_perp = 0")
    x = a_par / a_perp
    theta = math.atan(0.5 * (-3.0 * x + math.sqrt(9.0 * x * x + 8.0)))
    # radius from the transverse component; algebraically identical to the
    # (3 cos^2 theta - 1)/a_par form but well conditioned near the magic angle
    r = (coeff * 3.0 * math.sin(theta) * math.cos(theta) / a_perp) ** (1.0 / 3.0)
    return Position(r=r, theta=theta, phi=phi)


def nuclear_pair_coupling(
    p1: Position, p2: Position, consts: PhysicalConstants = CONSTANTS
) -> float:
    """Secular homonuclear dipolar coupling of two nuclei, in Hz.

    Returns |mu0 gamma_n^2 hbar (1 - 3 cos^2 theta_12) / (4 pi d^3)| / 2 pi,
    where d is the internuclear distance and theta_12 the angle between the
    pair axis and z.  In this convention the returned value equals the
    line splitting produced by the z-z part of the secular coupling.
    """
    dvec = p1.to_cartesian() - p2.to_cartesian()
    d = float(np.linalg.norm(dvec))
    if d == 0.0:
        raise ValueError("pair coupling is singular for coincident positions")
    cos12 = dvec[2] / d
    omega = consts.nuclear_dipole_coefficient * (1.0 - 3.0 * cos12**2) / d**3
    return abs(omega) / (2.0 * math.pi)


def pair_distance_respecting_inversion(p1: Position, p2: Position) -> float:
    """Distance between two recovered positions, minimized over inversion images.

    Each localized nucleus is only known up to an inversion through the
    origin, so the physically meaningful separation is the smaller of
    |c1 - c2| and |c1 + c2|.
    """
    c1 = p1.to_cartesian()
    c2 = p2.to_cartesian()
    return float(min(np.linalg.norm(c1 - c2), np.linalg.norm(c1 + c2)))
