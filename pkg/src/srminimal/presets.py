"""Frames shipped with the package."""
from __future__ import annotations

from .structure import SRStructure


def heisenberg(m: int = 1, orientation="auto", reference_point=None,
               vertical: int = 1) -> SRStructure:
    """Heisenberg group H^m: ``X_i = d_{x_i} + x_{i+m}/2 d_t``, ``X_{i+m} = d_{x_{i+m}} - x_i/2 d_t``.

    For m=1 the chart is ``(x, y, z)``, otherwise ``(x1, .., x2m, t)``.
    ``vertical=-1`` flips the sign of the ``d_t`` components (the mirror image
    ``t -> -t``); for m=1 its characteristics are ``z' = (x sin(phi) - y cos(phi))/2``.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if vertical not in (1, -1):
        raise ValueError("vertical must be +1 or -1")
    up, down = ("", "-") if vertical == 1 else ("-", "")
    if m == 1:
        chart = ["x", "y", "z"]
    else:
        chart = [f"x{i}" for i in range(1, 2 * m + 1)] + ["t"]
    n = 2 * m + 1
    frame = []
    for i in range(2 * m):
        comps = ["0"] * n
        comps[i] = "1"
        if i < m:
            comps[-1] = f"{up}{chart[i + m]}/2"
        else:
            comps[-1] = f"{down}{chart[i - m]}/2"
        frame.append(comps)
    return SRStructure(chart, frame, orientation=orientation,
                       reference_point=reference_point, name=f"heisenberg(m={m})" if vertical == 1 else f"heisenberg(m={m}, vertical=-1)")


def rototranslation(orientation="auto", reference_point=None) -> SRStructure:
    """Group of roto-translations e^2: ``X_1 = cos z d_x + sin z d_y``, ``X_2 = d_z``."""
    return SRStructure(["x", "y", "z"], [["cos(z)", "sin(z)", "0"], ["0", "0", "1"]],
                       orientation=orientation, reference_point=reference_point,
                       name="rototranslation")


PRESETS = {"heisenberg": heisenberg, "rototranslation": rototranslation}


def preset(name: str, m: int = 1, **kwargs) -> SRStructure:
    if name == "heisenberg":
        return heisenberg(m, **kwargs)
    if name == "rototranslation":
        return rototranslation(**kwargs)
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
