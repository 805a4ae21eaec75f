"""Bundled reference data: protocols and fitted spin tables for two NV centers.

The package ships the measurement settings (NV1, NV2) and the corresponding
published localization tables used throughout the test-suite and the CLI.
Couplings are tabulated in kHz of ordinary frequency, angles in degrees,
radii in nm and uncertainty volumes in cubic Angstrom, exactly as printed;
loaders convert to the internal SI / angular-frequency conventions.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields
from importlib import resources

from .geometry import Position
from .signal_model import TWO_PI, ExperimentConfig, GlobalParams, SpinParams

__all__ = [
    "ReferenceSpin",
    "ReferenceProtocol",
    "reference_spins",
    "reference_protocol",
    "load_spin_table",
    "save_spin_table",
    "spin_params",
    "positions",
    "V_ATOM_A3",
]

# volume per carbon atom in the diamond lattice, cubic Angstrom
V_ATOM_A3 = 5.67

_CENTERS = ("nv1", "nv2")


@dataclass(frozen=True)
class ReferenceSpin:
    """One tabulated nucleus: couplings, position and uncertainties, as printed."""

    index: int
    a_par_khz: float
    a_par_err_khz: float
    a_perp_khz: float
    a_perp_err_khz: float
    r_nm: float
    r_err_nm: float
    theta_deg: float
    theta_err_deg: float
    phi_deg: float
    phi_err_deg: float
    delta_v_a3: float


@dataclass(frozen=True)
class ReferenceProtocol:
    """Measurement settings of one center: four interaction times + globals."""

    name: str
    configs: tuple[ExperimentConfig, ...]
    globals_: GlobalParams
    p0_err: float
    t2n_star_err: float
    t_ell_err: float


def _data_text(filename: str) -> str:
    return resources.files("spinmap.data").joinpath(filename).read_text(encoding="utf-8")


_COLUMNS = [f.name for f in fields(ReferenceSpin)]


def _parse_spin_table(text: str) -> tuple[ReferenceSpin, ...]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header != _COLUMNS:
        raise ValueError(f"unexpected spin-table columns: {header}")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append(
            ReferenceSpin(index=int(cells[0]), **{
                name: float(value) for name, value in zip(_COLUMNS[1:], cells[1:])
            })
        )
    return tuple(rows)


def _format_spin_table(rows) -> str:
    out = [",".join(_COLUMNS)]
    for row in rows:
        cells = [str(row.index)]
        cells += [_format_printed(getattr(row, name)) for name in _COLUMNS[1:]]
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def _format_printed(value: float) -> str:
    # tables print two decimals throughout
    return f"{value:.2f}"


def load_spin_table(path) -> tuple[ReferenceSpin, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        return _parse_spin_table(fh.read())


def save_spin_table(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_format_spin_table(rows))


def reference_spins(center: str) -> tuple[ReferenceSpin, ...]:
    """Tabulated localization results for 'nv1' (20 spins) or 'nv2' (29 spins)."""
    center = center.lower()
    if center not in _CENTERS:
        raise ValueError(f"unknown center {center!r}, expected one of {_CENTERS}")
    return _parse_spin_table(_data_text(f"{center}_spins.csv"))


def reference_protocol(center: str) -> ReferenceProtocol:
    """Measurement settings and fitted global parameters for one center."""
    center = center.lower()
    if center not in _CENTERS:
        raise ValueError(f"unknown center {center!r}, expected one of {_CENTERS}")
    parser = configparser.ConfigParser()
    parser.read_string(_data_text(f"{center}_protocol.ini"))
    proto = parser["protocol"]
    glob = parser["globals"]
    base = dict(
        b0=proto.getfloat("b0_mT") * 1e-3,
        gamma_n=proto.getfloat("gamma_n_MHz_per_T") * 1e6 * TWO_PI,
        t_s=proto.getfloat("t_s_us") * 1e-6,
        k_samples=proto.getint("k_samples"),
        t_pol=proto.getfloat("t_pol_ms") * 1e-3,
        contrast_eps=proto.getfloat("contrast"),
        counts_c=proto.getfloat("counts"),
    )
    configs = tuple(
        ExperimentConfig(t_beta=float(tb) * 1e-6, **base)
        for tb in proto.get("t_betas_us").split(",")
    )
    globals_ = GlobalParams(
        p0=glob.getfloat("p0"),
        t2n_star=glob.getfloat("t2n_star_ms") * 1e-3,
        t_ell=glob.getfloat("t_ell_us") * 1e-6,
    )
    return ReferenceProtocol(
        name=center,
        configs=configs,
        globals_=globals_,
        p0_err=glob.getfloat("p0_err"),
        t2n_star_err=glob.getfloat("t2n_star_err_ms") * 1e-3,
        t_ell_err=glob.getfloat("t_ell_err_us") * 1e-6,
    )


def spin_params(rows) -> list[SpinParams]:
    """Convert tabulated rows to internal SpinParams (rad/s, rad)."""
    return [
        SpinParams(
            a_par=TWO_PI * row.a_par_khz * 1e3,
            a_perp=TWO_PI * row.a_perp_khz * 1e3,
            phi=math.radians(row.phi_deg),
        )
        for row in rows
    ]


def positions(rows) -> list[Position]:
    """Convert tabulated rows to Positions (meters, radians)."""
    return [
        Position(
            r=row.r_nm * 1e-9,
            theta=math.radians(row.theta_deg),
            phi=math.radians(row.phi_deg),
        )
        for row in rows
    ]
