import numpy as np
import pytest

from semclip.errors import DataError, IncompatibleCheckpointError
from semclip.model import build_model, load_checkpoint, save_checkpoint
from semclip.scene import Vocabulary


@pytest.fixture
def model():
    m = build_model(5, n_proj=2, learnable=True, sigma=0.25)
    m.round_to_fp32()
    return m


def test_roundtrip_is_exact(model, tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    for name, arr in model.arrays().items():
        assert np.array_equal(back.arrays()[name].reshape(arr.shape), arr), name
    assert back.bank.learnable and back.bank.n == 2
    assert back.image.sigma == 0.25
    save_checkpoint(back, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_checksum_flip_reports_offset(model, tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(model, path)
    data = bytearray(path.read_bytes())
    data[200] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="byte offset"):
        load_checkpoint(path)


def test_truncated_and_bad_magic(model, tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(model, path)
    path.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(DataError, match="byte offset 0"):
        load_checkpoint(path)
    path.write_bytes(b"SEMCLIP\0")
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_vocab_mismatch(model, tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(model, path)
    other = Vocabulary(tuple(Vocabulary().tokens) + ("extra",))
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(path, other)
