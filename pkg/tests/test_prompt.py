"""Prompt rendering / byte-tokenization tests."""

from __future__ import annotations

import pytest

from som_multipath.errors import DomainError, SequenceLengthError
from som_multipath.prompt import (
    PAD_ID,
    SEP_ID,
    VOCAB_SIZE,
    PropagationPrompt,
    decode_tokens,
    encode_prompt,
    encode_text,
)


def _prompt(**overrides):
    base = dict(
        carrier_frequency_hz=60e9,
        bandwidth_hz=2000e6,
        distance_m=23.4,
        azimuth_deg=12.5,
        elevation_deg=-3.2,
    )
    base.update(overrides)
    return PropagationPrompt(**base)


def test_vocab_constants():
    assert PAD_ID == 256
    assert SEP_ID == 257
    assert VOCAB_SIZE == 258


def test_template_rendering_exact():
    assert _prompt().render() == (
        "fc_ghz=60.000 bw_mhz=2000.000 dist_m=23.400 az_deg=12.500 el_deg=-3.200"
    )


def test_rounding_canonicalizes():
    a = _prompt(distance_m=23.4001)
    b = _prompt(distance_m=23.3999)
    assert encode_prompt(a) == encode_prompt(b)


def test_token_count_is_byte_length_plus_sep():
    p = _prompt()
    tokens = encode_prompt(p)
    assert len(tokens) == len(p.render().encode("utf-8")) + 1
    assert tokens[-1] == SEP_ID
    assert all(0 <= t < 256 for t in tokens[:-1])


def test_padding_to_max_length():
    p = _prompt()
    n = len(encode_prompt(p))
    padded = encode_prompt(p, max_length=n + 5)
    assert len(padded) == n + 5
    assert padded[n:] == [PAD_ID] * 5
    with pytest.raises(SequenceLengthError):
        encode_prompt(p, max_length=n - 1)


def test_decode_roundtrip():
    p = _prompt()
    assert decode_tokens(encode_prompt(p, max_length=96)) == p.render()
    assert encode_text("ab") == [97, 98]


def test_invalid_fields_rejected():
    with pytest.raises(DomainError):
        _prompt(carrier_frequency_hz=0.0)
    with pytest.raises(DomainError):
        _prompt(distance_m=-1.0)
    with pytest.raises(DomainError):
        _prompt(azimuth_deg=float("nan"))


def test_dict_roundtrip():
    p = _prompt()
    assert PropagationPrompt.from_dict(p.to_dict()) == p
