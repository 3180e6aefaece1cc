"""Parser for the plain-text network description format.

One convolution layer per line:

    conv <name> ic=<n> oc=<n> ow=<n> oh=<n> kw=<n> kh=<n>

'#' starts a comment and blank lines are ignored. Keys may appear in any
order but all six are required.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ConvLayer, LAYER_FIELDS


class NetworkParseError(ValueError):
    pass


@dataclass(frozen=True)
class NamedLayer:
    name: str
    layer: ConvLayer


@dataclass(frozen=True)
class NetworkDescription:
    layers: tuple[NamedLayer, ...]

    def __len__(self) -> int:
        return len(self.layers)


def parse_network(text: str, source: str = "<text>") -> NetworkDescription:
    layers: list[NamedLayer] = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "conv":
            raise NetworkParseError(
                f"{source}:{lineno}: unknown layer kind {tokens[0]!r}"
            )
        if len(tokens) < 2 or "=" in tokens[1]:
            raise NetworkParseError(f"{source}:{lineno}: missing layer name")
        name = tokens[1]
        if name in seen:
            raise NetworkParseError(f"{source}:{lineno}: duplicate layer name {name!r}")
        seen.add(name)
        params: dict[str, int] = {}
        for tok in tokens[2:]:
            if "=" not in tok:
                raise NetworkParseError(
                    f"{source}:{lineno}: expected key=value, got {tok!r}"
                )
            key, _, val = tok.partition("=")
            if key not in LAYER_FIELDS:
                raise NetworkParseError(f"{source}:{lineno}: unknown key {key!r}")
            if key in params:
                raise NetworkParseError(f"{source}:{lineno}: duplicate key {key!r}")
            try:
                params[key] = int(val)
            except ValueError:
                raise NetworkParseError(
                    f"{source}:{lineno}: {key} must be an integer, got {val!r}"
                ) from None
            if params[key] < 1:
                raise NetworkParseError(f"{source}:{lineno}: {key} must be >= 1")
        missing = [k for k in LAYER_FIELDS if k not in params]
        if missing:
            raise NetworkParseError(
                f"{source}:{lineno}: missing key(s) {', '.join(missing)}"
            )
        layers.append(NamedLayer(name, ConvLayer(**params)))
    if not layers:
        raise NetworkParseError(f"{source}: no layers")
    return NetworkDescription(tuple(layers))


def render_network(net: NetworkDescription) -> str:
    lines = []
    for nl in net.layers:
        parts = " ".join(f"{k}={getattr(nl.layer, k)}" for k in LAYER_FIELDS)
        lines.append(f"conv {nl.name} {parts}")
    return "\n".join(lines) + "\n"
