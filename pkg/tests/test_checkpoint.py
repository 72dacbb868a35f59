import struct

import numpy as np
import pytest

from disorder_unet.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, load_params, save_params
from disorder_unet.datasets import EmbeddingStandardizer
from disorder_unet.errors import FormatError, MagicError, TruncationError, VersionError
from disorder_unet.unet import init_model


@pytest.fixture
def saved(tmp_path, toy_config):
    params = init_model(toy_config, 4)
    path = tmp_path / "m.dunl"
    save_params(path, toy_config, params)
    return path, toy_config, params


def test_round_trip(saved):
    path, config, params = saved
    cfg2, params2 = load_params(path)
    assert cfg2 == config
    assert list(params2) == list(params)
    assert all(params2[k].tobytes() == params[k].tobytes() for k in params)


def test_header_layout(saved):
    data = saved[0].read_bytes()
    assert data[:4] == b"DUNL"
    assert struct.unpack_from("<H", data, 4) == (1,)


def test_standardizer_round_trip(tmp_path, toy_config, rng):
    std = EmbeddingStandardizer().fit([rng.normal(size=(20, 16))])
    save_params(tmp_path / "m.dunl", toy_config, init_model(toy_config), std)
    ckpt = load_checkpoint(tmp_path / "m.dunl")
    assert ckpt.standardizer.mean_.tobytes() == std.mean_.tobytes()
    assert ckpt.standardizer.scale_.tobytes() == std.scale_.tobytes()


def test_encoding_is_deterministic(toy_config):
    p = init_model(toy_config, 1)
    assert encode_checkpoint(toy_config, p) == encode_checkpoint(toy_config, init_model(toy_config, 1))


@pytest.mark.parametrize("cut", [2, 5, 9, 40, -1, -9])
def test_truncation(saved, cut):
    data = saved[0].read_bytes()
    with pytest.raises(TruncationError):
        decode_checkpoint(data[:cut])


def test_truncation_reports_offset(saved):
    data = saved[0].read_bytes()
    with pytest.raises(TruncationError) as exc:
        decode_checkpoint(data[:-100])
    assert isinstance(exc.value.position, int) and exc.value.position > 0


def test_flipped_magic(saved):
    data = bytearray(saved[0].read_bytes())
    data[1] ^= 0x20
    with pytest.raises(MagicError) as exc:
        decode_checkpoint(bytes(data))
    assert not isinstance(exc.value, TruncationError)


def test_version(saved):
    data = bytearray(saved[0].read_bytes())
    data[4] = 9
    with pytest.raises(VersionError):
        decode_checkpoint(bytes(data))


def test_trailing_bytes(saved):
    with pytest.raises(FormatError):
        decode_checkpoint(saved[0].read_bytes() + b"\x00")


def test_no_partial_file_on_failure(tmp_path, toy_config):
    params = init_model(toy_config)
    params["head.w"] = object()
    with pytest.raises(Exception):
        save_params(tmp_path / "m.dunl", toy_config, params)
    assert not (tmp_path / "m.dunl").exists()
