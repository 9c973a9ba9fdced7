"""Unit conversions at the I/O boundary.

Everything inside the package runs in feet (head), cubic feet per second
(flow) and seconds (time).  Gallons-per-minute and hours are accepted and
produced only at the parsing/emission boundary.
"""

GPM_PER_CFS = 448.831
SECONDS_PER_HOUR = 3600.0
FEET_PER_INCH = 1.0 / 12.0


def gpm_to_cfs(q_gpm: float) -> float:
    return q_gpm / GPM_PER_CFS


def cfs_to_gpm(q_cfs: float) -> float:
    return q_cfs * GPM_PER_CFS


def inches_to_feet(d_in: float) -> float:
    return d_in * FEET_PER_INCH


def hours_to_seconds(t_hr: float) -> float:
    return t_hr * SECONDS_PER_HOUR


def pump_curve_coeff_to_cfs(r: float, exponent: float, flow_units: str) -> float:
    """Rescale a pump-curve coefficient so the curve takes flow in cfs.

    A curve fitted against flow in GPM keeps its shutoff head and exponent
    when re-expressed in cfs; only the coefficient picks up the factor
    (gpm per cfs) ** exponent.
    """
    units = flow_units.lower()
    if units == "cfs":
        return r
    if units == "gpm":
        return r * GPM_PER_CFS**exponent
    raise ValueError(f"unknown pump curve flow units {flow_units!r}")
