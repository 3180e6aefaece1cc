"""RTL parameter emission: fill {{NAME}} placeholders in a Verilog template."""

from __future__ import annotations

import re

from .model import Configuration, config_fields

_PLACEHOLDER = re.compile(r"\{\{([^{}]*)\}\}")


class RtlError(ValueError):
    pass


def emit_rtl_params(template: str, config: Configuration, variant: str) -> str:
    """Replace every {{NAME}} with the configuration's decimal value.

    NAME must be the upper-case form of a configuration field populated
    for the variant. Unknown names, names absent from the variant, and
    any placeholder left unreplaced are errors. No other bytes of the
    template are touched.
    """
    valid = {f.upper(): f for f in config_fields("im2col")}
    populated = {f.upper() for f in config_fields(variant)}

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in valid:
            raise RtlError(f"unknown placeholder {{{{{name}}}}}")
        if name not in populated:
            raise RtlError(f"{name} not defined for {variant} variant")
        value = getattr(config, valid[name])
        if value is None:
            raise RtlError(f"{name} is not populated in this configuration")
        return str(value)

    out = _PLACEHOLDER.sub(sub, template)
    leftover = re.search(r"\{\{|\}\}", out)
    if leftover:
        raise RtlError(
            f"unreplaced placeholder text at offset {leftover.start()}"
        )
    return out


def default_rtl_params(config: Configuration, variant: str) -> str:
    """One ``localparam NAME = value;`` line per populated field."""
    lines = []
    for f in config_fields(variant):
        value = getattr(config, f)
        if value is None:
            raise RtlError(f"{f} is not populated in this configuration")
        lines.append(f"localparam {f.upper()} = {value};")
    return "\n".join(lines) + "\n"
