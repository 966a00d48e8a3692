"""Propagation prompts: structured link context rendered to byte tokens.

A prompt carries the handful of scalars that condition the decoder on the
propagation environment (carrier, bandwidth, link geometry). It renders to a
fixed-format text template which is then tokenized at the byte level: ids
0..255 are raw bytes, plus reserved PAD and SEP ids. Byte-level tokenization
keeps the vocabulary tiny and makes round-tripping trivially exact.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

from .errors import DomainError, SequenceLengthError

PAD_ID = 256
SEP_ID = 257
VOCAB_SIZE = 258

_TEMPLATE = "fc_ghz={fc:.3f} bw_mhz={bw:.3f} dist_m={dist:.3f} az_deg={az:.3f} el_deg={el:.3f}"


@dataclass(frozen=True)
class PropagationPrompt:
    """Link-context scalars for one snapshot (Rx-centric geometry)."""

    carrier_frequency_hz: float
    bandwidth_hz: float
    distance_m: float
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self) -> None:
        for name in ("carrier_frequency_hz", "bandwidth_hz", "distance_m"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and positive")
        for name in ("azimuth_deg", "elevation_deg"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def render(self) -> str:
        """Canonical template with values fixed to three decimal places."""
        return _TEMPLATE.format(
            fc=self.carrier_frequency_hz / 1e9,
            bw=self.bandwidth_hz / 1e6,
            dist=self.distance_m,
            az=self.azimuth_deg,
            el=self.elevation_deg,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "PropagationPrompt":
        return PropagationPrompt(
            carrier_frequency_hz=float(data["carrier_frequency_hz"]),
            bandwidth_hz=float(data["bandwidth_hz"]),
            distance_m=float(data["distance_m"]),
            azimuth_deg=float(data["azimuth_deg"]),
            elevation_deg=float(data["elevation_deg"]),
        )


def encode_text(text: str) -> list[int]:
    """UTF-8 bytes as token ids (no padding, no separator)."""
    return list(text.encode("utf-8"))


def decode_tokens(tokens: list[int]) -> str:
    """Invert ``encode_text``; PAD and SEP tokens are dropped."""
    out = bytearray()
    for t in tokens:
        if t in (PAD_ID, SEP_ID):
            continue
        if not 0 <= t < 256:
            raise DomainError(f"token id {t} outside vocabulary")
        out.append(t)
    return out.decode("utf-8")


def encode_prompt(prompt: PropagationPrompt, max_length: Optional[int] = None) -> list[int]:
    """Token ids for the rendered prompt plus a trailing SEP.

    Token count is the byte length of the rendered template plus one. With
    ``max_length`` set, the sequence is right-padded with PAD to exactly
    that length (error when it does not fit).
    """
    tokens = encode_text(prompt.render()) + [SEP_ID]
    if max_length is None:
        return tokens
    if len(tokens) > max_length:
        raise SequenceLengthError(
            f"prompt needs {len(tokens)} tokens but max_length is {max_length}"
        )
    return tokens + [PAD_ID] * (max_length - len(tokens))
