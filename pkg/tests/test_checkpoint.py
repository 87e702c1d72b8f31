import pytest
import torch

from core.config import CodecConfig, DiffusionConfig
from core.errors import InvalidInputError
from models.checkpoint import MAGIC, load_codec, load_denoiser, save_models
from models.training import build_codec, build_denoiser, latent_layout_for

CONFIG = DiffusionConfig(image_size=16, width=32, depth=1, heads=4, use_layout=False)


@pytest.fixture
def models():
    codec_config = CodecConfig()
    codec = build_codec(codec_config)
    denoiser = build_denoiser(CONFIG, latent_layout_for(CONFIG, codec_config))
    return codec, denoiser


def _same_state(a, b):
    state_a, state_b = a.state_dict(), b.state_dict()
    assert list(state_a) == list(state_b)
    for name in state_a:
        assert torch.equal(state_a[name].float(), state_b[name].float()), name


def test_round_trip(tmp_path, models):
    codec, denoiser = models
    path = tmp_path / "model.sgck"
    save_models(path, codec=codec, denoiser=denoiser)
    assert path.read_bytes()[:4] == MAGIC

    loaded_codec = load_codec(path)
    loaded_denoiser = load_denoiser(path)
    _same_state(codec, loaded_codec)
    _same_state(denoiser, loaded_denoiser)
    assert loaded_codec.descriptor() == codec.descriptor()
    assert loaded_denoiser.descriptor() == denoiser.descriptor()
    # флаг абляции переживает сохранение
    assert loaded_denoiser.config.use_layout is False


def test_missing_section(tmp_path, models):
    codec, _ = models
    path = tmp_path / "codec.sgck"
    save_models(path, codec=codec)
    load_codec(path)
    with pytest.raises(InvalidInputError, match="denoiser"):
        load_denoiser(path)
    with pytest.raises(InvalidInputError):
        save_models(tmp_path / "empty.sgck")


@pytest.mark.parametrize(
    "corrupt, message",
    [
        (lambda data: b"XXXX" + data[4:], "not an SGCK"),
        (lambda data: data[:-4], "truncated"),
        (lambda data: data + b"\x00\x00\x00\x00", "trailing"),
    ],
)
def test_corrupted_files(tmp_path, models, corrupt, message):
    codec, _ = models
    path = tmp_path / "codec.sgck"
    save_models(path, codec=codec)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(InvalidInputError, match=message):
        load_codec(path)
