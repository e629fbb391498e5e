"""CSV/JSON formatting helpers and exact parsing of numeric flag values."""

from __future__ import annotations

import csv
import re
from fractions import Fraction
from typing import Iterable, Sequence


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(float(x), ".17g")


def complex_cells(z: complex) -> list[str]:
    return [fmt(z.real), fmt(z.imag)]


def complex_header(name: str) -> list[str]:
    return [f"{name}_re", f"{name}_im"]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def parse_real(text: str) -> float:
    """Parse ``"1/12"``, ``"-3/2"``, ``"0.5"`` or ``"2"``; fractions are exact
    until the final conversion to float."""
    text = str(text).strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a real number: {text!r}") from None


_TERM = re.compile(r"[+-]?[^+-]+")
_IMAG = re.compile(r"^([+-]?)([0-9.eEPM]*(?:/[0-9.]+)?)\*?[ij](?:/([0-9.]+))?$")


def parse_complex(text: str) -> complex:
    """Parse complex literals such as ``-1-i``, ``1+i/2``, ``3/2+i``,
    ``-3/2-3i/2`` or ``0.5+2j``."""
    s = str(text).replace(" ", "")
    if not s:
        raise ValueError("empty complex literal")
    s = re.sub(r"(?<=[eE])([+-])", lambda m: "P" if m.group(1) == "+" else "M", s)
    re_part = Fraction(0)
    im_part = Fraction(0)
    terms = _TERM.findall(s)
    if "".join(terms) != s:
        raise ValueError(f"not a complex number: {text!r}")
    for term in terms:
        m = _IMAG.match(term)
        term = term.replace("P", "+").replace("M", "-")
        try:
            if m:
                sign, coef, denom = m.groups()
                coef = coef.replace("P", "+").replace("M", "-")
                value = Fraction(coef) if coef else Fraction(1)
                if denom:
                    value /= Fraction(denom)
                im_part += -value if sign == "-" else value
            else:
                re_part += Fraction(term)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a complex number: {text!r}") from None
    return complex(float(re_part), float(im_part))
